//! Bertrand-Nash equilibrium of a multiproduct-firm oligopoly with MNL or
//! CES demand, solved through firm types and the market aggregator.
//!
//! Each firm is summarized by its type `T_f`; the equilibrium is the triple
//! `({μ_f}, {s_f}, H)` solving, for every firm,
//!
//! ```text
//! MNL:  1 = μ_f (1 − (T_f/H) e^{−μ_f})             s_f = (T_f/H) e^{−μ_f}
//! CES:  1 = μ_f (1 − ((σ−1)/σ)(T_f/H)(1 − μ_f/σ)^{σ−1})
//!                                                   s_f = (T_f/H)(1 − μ_f/σ)^{σ−1}
//! ```
//!
//! together with the adding-up condition `H₀/H + Σ_f s_f = 1`.
//!
//! The solver nests two scalar searches. For a trial `H` every firm's ι-markup
//! is found by a bracketed Newton iteration; the aggregate excess
//! `Φ(H) = H₀/H + Σ_f s_f(H) − 1` is strictly decreasing, so the outer search
//! brackets its root on `[H₀, H₀ + Σ T_f]` and runs a safeguarded regula falsi
//! in `log H`.

use std::cell::Cell;
use std::collections::{BTreeMap, BTreeSet};

use serde::{Deserialize, Serialize};

use crate::demand::{DemandKind, DemandParams, ProductShareVector, ShareVector};
use crate::error::{Error, Result};
use crate::first_order::MergerSpec;
use crate::ids::{FirmId, ProductId};
use crate::roots::{bracketed_decreasing, safeguarded_newton, Root};

fn default_h0() -> f64 {
    1.0
}

#[derive(Clone, Debug, PartialEq, Serialize, Deserialize)]
pub struct Product {
    pub id: ProductId,
    pub firm: FirmId,
    /// Quality `v_j`.
    pub v: f64,
    /// Marginal cost `c_j`.
    pub c: f64,
}

/// Model primitives: products, their owners, qualities and costs, and the
/// demand system.
#[derive(Clone, Debug, PartialEq, Serialize, Deserialize)]
#[serde(try_from = "RawMarket")]
pub struct Market {
    #[serde(flatten)]
    params: DemandParams,
    h0: f64,
    products: Vec<Product>,
}

#[derive(Deserialize)]
struct RawMarket {
    #[serde(flatten)]
    params: DemandParams,
    #[serde(default = "default_h0")]
    h0: f64,
    products: Vec<Product>,
}

impl TryFrom<RawMarket> for Market {
    type Error = Error;

    fn try_from(raw: RawMarket) -> Result<Self> {
        Market::new(raw.params, raw.h0, raw.products)
    }
}

impl Market {
    pub fn new(params: DemandParams, h0: f64, products: Vec<Product>) -> Result<Self> {
        check_h0(h0)?;
        let mut seen = BTreeSet::new();
        for p in &products {
            if !seen.insert(&p.id) {
                return Err(Error::invalid(format!("duplicate product id {}", p.id)));
            }
            if !(p.c.is_finite() && p.c > 0.0) {
                return Err(Error::domain(format!(
                    "cost of product {} must be positive, got {}",
                    p.id, p.c
                )));
            }
            let quality_ok = match params.kind() {
                DemandKind::Mnl => p.v.is_finite(),
                DemandKind::Ces => p.v.is_finite() && p.v >= 0.0,
            };
            if !quality_ok {
                return Err(Error::domain(format!("invalid quality {} for product {}", p.v, p.id)));
            }
        }
        Ok(Market { params, h0, products })
    }

    pub fn params(&self) -> &DemandParams {
        &self.params
    }

    pub fn h0(&self) -> f64 {
        self.h0
    }

    pub fn products(&self) -> &[Product] {
        &self.products
    }

    pub fn firms(&self) -> BTreeSet<FirmId> {
        self.products.iter().map(|p| p.firm.clone()).collect()
    }

    /// Type `T_f`: Σ exp(v − αc) (MNL) or Σ v c^{1−σ} (CES) over the firm's
    /// products.
    pub fn firm_type(&self, firm: &FirmId) -> Result<f64> {
        let mut owned = self.products.iter().filter(|p| &p.firm == firm).peekable();
        if owned.peek().is_none() {
            return Err(Error::UnknownFirm(firm.clone()));
        }
        let r = self.params.price_response();
        Ok(owned
            .map(|p| match self.params.kind() {
                DemandKind::Mnl => (p.v - r * p.c).exp(),
                DemandKind::Ces => p.v * p.c.powf(1.0 - r),
            })
            .sum())
    }

    pub fn firm_model(&self) -> Result<FirmModel> {
        let types = self
            .firms()
            .into_iter()
            .map(|f| {
                let t = self.firm_type(&f)?;
                Ok((f, t))
            })
            .collect::<Result<BTreeMap<_, _>>>()?;
        FirmModel::new(types, self.params, self.h0)
    }

    pub fn costs(&self) -> Vec<f64> {
        self.products.iter().map(|p| p.c).collect()
    }

    pub fn qualities(&self) -> Vec<f64> {
        self.products.iter().map(|p| p.v).collect()
    }
}

fn check_h0(h0: f64) -> Result<()> {
    if !(h0.is_finite() && h0 >= 0.0) {
        return Err(Error::domain(format!("H0 must be non-negative, got {h0}")));
    }
    Ok(())
}

/// Firm-level sufficient statistics: everything the equilibrium depends on.
#[derive(Clone, Debug, PartialEq, Serialize, Deserialize)]
#[serde(try_from = "RawFirmModel")]
pub struct FirmModel {
    firm_types: BTreeMap<FirmId, f64>,
    params: DemandParams,
    h0: f64,
    v0: f64,
}

#[derive(Deserialize)]
struct RawFirmModel {
    firm_types: BTreeMap<FirmId, f64>,
    params: DemandParams,
    #[serde(default = "default_h0")]
    h0: f64,
    v0: Option<f64>,
}

impl TryFrom<RawFirmModel> for FirmModel {
    type Error = Error;

    fn try_from(raw: RawFirmModel) -> Result<Self> {
        let model = FirmModel::new(raw.firm_types, raw.params, raw.h0)?;
        if let Some(v0) = raw.v0 {
            if (v0 - model.v0).abs() > 1e-12 * model.v0.max(1.0) {
                return Err(Error::invalid(format!(
                    "v0 {v0} disagrees with demand parameters (implied {})",
                    model.v0
                )));
            }
        }
        Ok(model)
    }
}

impl FirmModel {
    pub fn new(firm_types: BTreeMap<FirmId, f64>, params: DemandParams, h0: f64) -> Result<Self> {
        check_h0(h0)?;
        for (firm, &t) in &firm_types {
            if !(t.is_finite() && t >= 0.0) {
                return Err(Error::domain(format!(
                    "type of firm {firm} must be finite and non-negative, got {t}"
                )));
            }
        }
        Ok(FirmModel {
            firm_types,
            v0: params.v0(),
            params,
            h0,
        })
    }

    pub fn firm_types(&self) -> &BTreeMap<FirmId, f64> {
        &self.firm_types
    }

    pub fn firm_type(&self, firm: &FirmId) -> Result<f64> {
        self.firm_types
            .get(firm)
            .copied()
            .ok_or_else(|| Error::UnknownFirm(firm.clone()))
    }

    pub fn params(&self) -> &DemandParams {
        &self.params
    }

    pub fn h0(&self) -> f64 {
        self.h0
    }

    pub fn v0(&self) -> f64 {
        self.v0
    }
}

/// Tolerances and iteration caps for [`solve_equilibrium_with`].
#[derive(Clone, Copy, Debug, PartialEq)]
pub struct SolverOptions {
    pub outer_tol: f64,
    pub inner_tol: f64,
    pub max_outer: usize,
    pub max_inner: usize,
}

impl Default for SolverOptions {
    fn default() -> Self {
        SolverOptions {
            outer_tol: 1e-12,
            inner_tol: 1e-12,
            max_outer: 200,
            max_inner: 100,
        }
    }
}

#[derive(Clone, Copy, Debug, PartialEq, Serialize, Deserialize)]
pub struct Diagnostics {
    pub iterations: usize,
    /// Largest absolute residual over the adding-up and fitting-in equations.
    pub residual: f64,
    pub converged: bool,
}

#[derive(Clone, Debug, PartialEq, Serialize, Deserialize)]
pub struct Equilibrium {
    pub h: f64,
    pub h0: f64,
    pub v0: f64,
    pub kind: DemandKind,
    /// ι-markups.
    pub mu: BTreeMap<FirmId, f64>,
    pub shares: ShareVector,
    pub profits: BTreeMap<FirmId, f64>,
    pub cs: f64,
    pub diagnostics: Diagnostics,
}

impl Equilibrium {
    pub fn mu_of(&self, firm: &FirmId) -> Result<f64> {
        self.mu
            .get(firm)
            .copied()
            .ok_or_else(|| Error::UnknownFirm(firm.clone()))
    }

    /// Turns a non-converged solve into [`Error::NoConvergence`].
    pub fn require_converged(&self) -> Result<&Self> {
        if self.diagnostics.converged {
            Ok(self)
        } else {
            Err(Error::NoConvergence {
                iterations: self.diagnostics.iterations,
                residual: self.diagnostics.residual,
            })
        }
    }
}

/// Residual of a firm's fitting-in condition at ι-markup `mu`.
pub fn fitting_in_residual(firm_type: f64, h: f64, mu: f64, params: &DemandParams) -> f64 {
    let x = firm_type / h;
    1.0 - mu * (1.0 - params.alpha_star() * firm_share_at(x, mu, params))
}

/// `s_f = (T_f/H)·e^{−μ}` (MNL) or `(T_f/H)(1 − μ/σ)^{σ−1}` (CES).
fn firm_share_at(ratio: f64, mu: f64, params: &DemandParams) -> f64 {
    match params.kind() {
        DemandKind::Mnl => ratio * (-mu).exp(),
        DemandKind::Ces => {
            let sigma = params.price_response();
            ratio * (1.0 - mu / sigma).powf(sigma - 1.0)
        }
    }
}

/// ι-markup of a firm with type-to-aggregator ratio `ratio = T/H`.
fn solve_mu_ratio(ratio: f64, params: &DemandParams, opts: &SolverOptions) -> Root {
    if ratio == 0.0 {
        return Root {
            x: 1.0,
            residual: 0.0,
            iterations: 0,
            converged: true,
        };
    }
    match params.kind() {
        DemandKind::Mnl => {
            let g = |mu: f64| {
                let e = ratio * (-mu).exp();
                (mu * (1.0 - e) - 1.0, 1.0 - e + mu * e)
            };
            let mut hi = 50.0;
            while g(hi).0 < 0.0 && hi < 1e6 {
                hi *= 2.0;
            }
            let guess = 1.0 + (1.0 + ratio / std::f64::consts::E).ln();
            safeguarded_newton(g, 1.0, hi, guess, opts.inner_tol, opts.max_inner)
        }
        DemandKind::Ces => {
            let sigma = params.price_response();
            let a = params.alpha_star();
            let g = |mu: f64| {
                let u = 1.0 - mu / sigma;
                let w = a * ratio * u.powf(sigma - 1.0);
                let dw = -a * ratio * (sigma - 1.0) * u.powf(sigma - 2.0) / sigma;
                (mu * (1.0 - w) - 1.0, 1.0 - w - mu * dw)
            };
            let hi = sigma - 1e-12 * sigma.max(1.0);
            let guess = 1.0 + a * ratio * (1.0 - 1.0 / sigma).powf(sigma - 1.0);
            safeguarded_newton(g, 1.0, hi, guess, opts.inner_tol, opts.max_inner)
        }
    }
}

/// The ι-markup solving a firm's fitting-in condition given its type and the
/// aggregator. MNL markups lie in `[1, ∞)`, CES markups in `[1, σ)`.
pub fn solve_mu(firm_type: f64, h: f64, params: &DemandParams) -> Result<f64> {
    if !(firm_type >= 0.0) {
        return Err(Error::domain(format!("type must be non-negative, got {firm_type}")));
    }
    if !(h > 0.0) {
        return Err(Error::domain(format!("aggregator must be positive, got {h}")));
    }
    let root = solve_mu_ratio(firm_type / h, params, &SolverOptions::default());
    if root.converged {
        Ok(root.x)
    } else {
        Err(Error::NoConvergence {
            iterations: root.iterations,
            residual: root.residual,
        })
    }
}

/// Solves with default tolerances.
pub fn solve_equilibrium(model: &FirmModel) -> Result<Equilibrium> {
    solve_equilibrium_with(model, &SolverOptions::default())
}

/// Solves the equilibrium system. Failure to reach the tolerances is
/// reported through `diagnostics.converged`, not as an error; errors are
/// reserved for models without an equilibrium (no outside option and fewer
/// than two active firms).
pub fn solve_equilibrium_with(model: &FirmModel, opts: &SolverOptions) -> Result<Equilibrium> {
    let params = model.params;
    let h0 = model.h0;
    let total_type: f64 = model.firm_types.values().sum();
    let active = model.firm_types.values().filter(|&&t| t > 0.0).count();
    if h0 == 0.0 && active < 2 {
        return Err(Error::invalid(
            "without an outside option the equilibrium needs at least two firms with positive type".to_owned(),
        ));
    }

    let inner_ok = Cell::new(true);
    let inner_worst = Cell::new(0.0f64);
    let excess = |log_h: f64| -> f64 {
        let h = log_h.exp();
        let mut total = h0 / h;
        for &t in model.firm_types.values() {
            let ratio = t / h;
            let root = solve_mu_ratio(ratio, &params, opts);
            if !root.converged {
                inner_ok.set(false);
            }
            inner_worst.set(inner_worst.get().max(root.residual.abs()));
            total += firm_share_at(ratio, root.x, &params);
        }
        total - 1.0
    };

    let (h, outer) = if total_type == 0.0 {
        (
            h0,
            Root {
                x: h0.ln(),
                residual: 0.0,
                iterations: 0,
                converged: true,
            },
        )
    } else {
        let hi = (h0 + total_type).ln();
        let lo = if h0 > 0.0 {
            h0.ln()
        } else {
            let mut lo = total_type.ln();
            let mut tries = 0;
            while excess(lo) <= 0.0 && tries < 200 {
                lo -= std::f64::consts::LN_2;
                tries += 1;
            }
            lo
        };
        let root = bracketed_decreasing(&excess, lo, hi, opts.outer_tol, opts.max_outer);
        (root.x.exp(), root)
    };

    // Final markups and shares at the accepted aggregator.
    inner_ok.set(true);
    inner_worst.set(0.0);
    let mut mu = BTreeMap::new();
    let mut shares = BTreeMap::new();
    let mut worst_fit = 0.0f64;
    for (firm, &t) in &model.firm_types {
        let ratio = t / h;
        let root = solve_mu_ratio(ratio, &params, opts);
        inner_ok.set(inner_ok.get() && root.converged);
        worst_fit = worst_fit.max(fitting_in_residual(t, h, root.x, &params).abs());
        mu.insert(firm.clone(), root.x);
        shares.insert(firm.clone(), firm_share_at(ratio, root.x, &params));
    }
    let outside = h0 / h;
    let adding_up = outside + shares.values().sum::<f64>() - 1.0;
    let residual = adding_up.abs().max(worst_fit);
    // The inner roots carry their own tolerance test, which allows for the
    // rounding floor of the fitting-in residual at large markups.
    let converged = outer.converged && inner_ok.get() && adding_up.abs() <= opts.outer_tol;

    let v0 = model.v0;
    let profits = mu.iter().map(|(f, &m)| (f.clone(), v0 * (m - 1.0))).collect();
    Ok(Equilibrium {
        h,
        h0,
        v0,
        kind: params.kind(),
        mu,
        shares: ShareVector::from_solver(shares, outside, params.kind().basis()),
        profits,
        cs: v0 * h.ln(),
        diagnostics: Diagnostics {
            iterations: outer.iterations,
            residual,
            converged,
        },
    })
}

/// Replaces the merging firms by one firm of type `T_A + T_B` (no synergy).
/// The merged firm is named by [`MergerSpec::merged_id`].
pub fn post_merger_model(model: &FirmModel, merger: &MergerSpec) -> Result<FirmModel> {
    let t_a = model.firm_type(&merger.firm_a)?;
    let t_b = model.firm_type(&merger.firm_b)?;
    let merged = merger.merged_id();
    let mut types = model.firm_types.clone();
    types.remove(&merger.firm_a);
    types.remove(&merger.firm_b);
    if types.contains_key(&merged) {
        return Err(Error::invalid(format!(
            "merged firm id {merged} collides with an existing firm"
        )));
    }
    types.insert(merged, t_a + t_b);
    FirmModel::new(types, model.params, model.h0)
}

/// Rewrites product ownership after a merger.
pub fn post_merger_market(market: &Market, merger: &MergerSpec) -> Result<Market> {
    let firms = market.firms();
    for f in [&merger.firm_a, &merger.firm_b] {
        if !firms.contains(f) {
            return Err(Error::UnknownFirm(f.clone()));
        }
    }
    let merged = merger.merged_id();
    if firms.contains(&merged) {
        return Err(Error::invalid(format!(
            "merged firm id {merged} collides with an existing firm"
        )));
    }
    let products = market
        .products
        .iter()
        .map(|p| {
            let mut p = p.clone();
            if merger.involves(&p.firm) {
                p.firm = merged.clone();
            }
            p
        })
        .collect();
    Market::new(market.params, market.h0, products)
}

/// Product prices implied by the firms' ι-markups: `c + μ/α` (MNL) or
/// `c/(1 − μ/σ)` (CES), in market product order.
pub fn prices_from_equilibrium(market: &Market, eq: &Equilibrium) -> Result<Vec<f64>> {
    let r = market.params.price_response();
    market
        .products
        .iter()
        .map(|p| {
            let mu = eq.mu_of(&p.firm)?;
            match market.params.kind() {
                DemandKind::Mnl => Ok(p.c + mu / r),
                DemandKind::Ces => {
                    if mu >= r {
                        return Err(Error::domain(format!(
                            "CES markup {mu} of firm {} is not below sigma {r}",
                            p.firm
                        )));
                    }
                    Ok(p.c / (1.0 - mu / r))
                }
            }
        })
        .collect()
}

/// Product-level equilibrium shares (quantity for MNL, revenue for CES).
pub fn product_shares(market: &Market, eq: &Equilibrium) -> Result<ProductShareVector> {
    let prices = prices_from_equilibrium(market, eq)?;
    let r = market.params.price_response();
    let mut shares = BTreeMap::new();
    let mut owners = BTreeMap::new();
    for (p, price) in market.products.iter().zip(prices) {
        let h = match market.params.kind() {
            DemandKind::Mnl => (p.v - r * price).exp(),
            DemandKind::Ces => p.v * price.powf(1.0 - r),
        };
        shares.insert(p.id.clone(), h / eq.h);
        owners.insert(p.id.clone(), p.firm.clone());
    }
    ProductShareVector::new(shares, owners)
}

/// Actual change in consumer surplus, `V₀ (log H_post − log H_pre)`, using
/// the pre-merger scaling factor.
pub fn delta_cs_actual(pre: &Equilibrium, post: &Equilibrium) -> f64 {
    debug_assert!((pre.v0 - post.v0).abs() <= 1e-12 * pre.v0.abs().max(1.0));
    pre.v0 * (post.h.ln() - pre.h.ln())
}
