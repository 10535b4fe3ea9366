//! Demand primitives for multinomial logit (MNL) and CES demand, plus the
//! closed-form share, margin, elasticity and diversion identities that hold
//! at a Bertrand equilibrium.
//!
//! Every share here is measured *including* the outside option, so a
//! [`ShareVector`] always satisfies `outside + Σ firms = 1`. Quantity shares
//! go with MNL and revenue shares with CES; the scalar helpers take plain
//! reals and serve both.

use std::collections::BTreeMap;

use serde::{Deserialize, Serialize};

use crate::error::{Error, Result};
use crate::ids::{FirmId, ProductId};

/// Tolerance for the adding-up constraint of constructed share vectors.
pub const ADDING_UP_TOL: f64 = 1e-12;

#[derive(Clone, Copy, Debug, PartialEq, Eq, Hash, Serialize, Deserialize)]
#[serde(rename_all = "lowercase")]
pub enum DemandKind {
    Mnl,
    Ces,
}

impl DemandKind {
    /// The share basis the demand system is naturally expressed in.
    pub fn basis(self) -> ShareBasis {
        match self {
            DemandKind::Mnl => ShareBasis::Quantity,
            DemandKind::Ces => ShareBasis::Revenue,
        }
    }
}

impl std::fmt::Display for DemandKind {
    fn fmt(&self, f: &mut std::fmt::Formatter<'_>) -> std::fmt::Result {
        f.write_str(match self {
            DemandKind::Mnl => "mnl",
            DemandKind::Ces => "ces",
        })
    }
}

impl std::str::FromStr for DemandKind {
    type Err = Error;

    fn from_str(s: &str) -> Result<Self> {
        match s.to_ascii_lowercase().as_str() {
            "mnl" | "logit" => Ok(DemandKind::Mnl),
            "ces" => Ok(DemandKind::Ces),
            other => Err(Error::invalid(format!("unknown demand kind `{other}`"))),
        }
    }
}

/// Demand system parameters.
///
/// `price_response` is α for MNL and σ for CES; `scale` is the market size
/// N (MNL) or the budget Y (CES).
#[derive(Clone, Copy, Debug, PartialEq, Serialize, Deserialize)]
#[serde(try_from = "RawDemandParams")]
pub struct DemandParams {
    #[serde(rename = "demand")]
    kind: DemandKind,
    price_response: f64,
    scale: f64,
}

#[derive(Deserialize)]
struct RawDemandParams {
    demand: DemandKind,
    price_response: f64,
    scale: f64,
}

impl TryFrom<RawDemandParams> for DemandParams {
    type Error = Error;

    fn try_from(raw: RawDemandParams) -> Result<Self> {
        DemandParams::new(raw.demand, raw.price_response, raw.scale)
    }
}

impl DemandParams {
    pub fn new(kind: DemandKind, price_response: f64, scale: f64) -> Result<Self> {
        if !(price_response.is_finite() && price_response > 0.0) {
            return Err(Error::domain(format!(
                "price response must be positive, got {price_response}"
            )));
        }
        if kind == DemandKind::Ces && price_response <= 1.0 {
            return Err(Error::domain(format!(
                "CES elasticity of substitution must exceed 1, got {price_response}"
            )));
        }
        if !(scale.is_finite() && scale > 0.0) {
            return Err(Error::domain(format!("scale must be positive, got {scale}")));
        }
        Ok(DemandParams {
            kind,
            price_response,
            scale,
        })
    }

    pub fn mnl(alpha: f64, market_size: f64) -> Result<Self> {
        Self::new(DemandKind::Mnl, alpha, market_size)
    }

    pub fn ces(sigma: f64, budget: f64) -> Result<Self> {
        Self::new(DemandKind::Ces, sigma, budget)
    }

    /// Parameters whose monetary scaling factor equals `v0`.
    pub fn with_v0(kind: DemandKind, price_response: f64, v0: f64) -> Result<Self> {
        let scale = match kind {
            DemandKind::Mnl => v0 * price_response,
            DemandKind::Ces => v0 * (price_response - 1.0),
        };
        Self::new(kind, price_response, scale)
    }

    pub fn kind(&self) -> DemandKind {
        self.kind
    }

    pub fn price_response(&self) -> f64 {
        self.price_response
    }

    pub fn scale(&self) -> f64 {
        self.scale
    }

    /// Monetary scaling factor: N/α (MNL) or Y/(σ−1) (CES).
    pub fn v0(&self) -> f64 {
        match self.kind {
            DemandKind::Mnl => self.scale / self.price_response,
            DemandKind::Ces => self.scale / (self.price_response - 1.0),
        }
    }

    /// The coefficient α* in μ = 1/(1 − α*·s): 1 for MNL, (σ−1)/σ for CES.
    pub fn alpha_star(&self) -> f64 {
        match self.kind {
            DemandKind::Mnl => 1.0,
            DemandKind::Ces => (self.price_response - 1.0) / self.price_response,
        }
    }

    /// Pole of the share-scaling functions: 1 (MNL) or σ/(σ−1) (CES).
    pub fn pole(&self) -> f64 {
        1.0 / self.alpha_star()
    }
}

/// Whether shares are measured in quantities or revenues.
#[derive(Clone, Copy, Debug, PartialEq, Eq, Hash, Serialize, Deserialize)]
#[serde(rename_all = "lowercase")]
pub enum ShareBasis {
    Quantity,
    Revenue,
}

/// Firm-level shares together with the outside option.
#[derive(Clone, Debug, PartialEq, Serialize, Deserialize)]
#[serde(try_from = "RawShareVector")]
pub struct ShareVector {
    firm_shares: BTreeMap<FirmId, f64>,
    outside_share: f64,
    basis: ShareBasis,
}

#[derive(Deserialize)]
struct RawShareVector {
    firm_shares: BTreeMap<FirmId, f64>,
    outside_share: f64,
    basis: ShareBasis,
}

impl TryFrom<RawShareVector> for ShareVector {
    type Error = Error;

    fn try_from(raw: RawShareVector) -> Result<Self> {
        ShareVector::new(raw.firm_shares, raw.outside_share, raw.basis)
    }
}

impl ShareVector {
    /// Validates entries in [0,1] and `outside + Σ firms = 1` to [`ADDING_UP_TOL`].
    pub fn new(firm_shares: BTreeMap<FirmId, f64>, outside_share: f64, basis: ShareBasis) -> Result<Self> {
        for (firm, &s) in &firm_shares {
            check_unit(s, &format!("share of firm {firm}"))?;
        }
        check_unit(outside_share, "outside share")?;
        let total = outside_share + firm_shares.values().sum::<f64>();
        if (total - 1.0).abs() > ADDING_UP_TOL {
            return Err(Error::invalid(format!(
                "shares must add up to one including the outside option, got {total}"
            )));
        }
        Ok(ShareVector {
            firm_shares,
            outside_share,
            basis,
        })
    }

    /// Builds the vector from inside shares, taking the outside share as the
    /// remainder.
    pub fn from_inside(firm_shares: BTreeMap<FirmId, f64>, basis: ShareBasis) -> Result<Self> {
        let inside: f64 = firm_shares.values().sum();
        Self::new(firm_shares, 1.0 - inside, basis)
    }

    /// Equilibrium output: adding-up holds only to solver tolerance.
    pub(crate) fn from_solver(firm_shares: BTreeMap<FirmId, f64>, outside_share: f64, basis: ShareBasis) -> Self {
        ShareVector {
            firm_shares,
            outside_share,
            basis,
        }
    }

    pub fn firm_shares(&self) -> &BTreeMap<FirmId, f64> {
        &self.firm_shares
    }

    pub fn outside_share(&self) -> f64 {
        self.outside_share
    }

    pub fn basis(&self) -> ShareBasis {
        self.basis
    }

    pub fn get(&self, firm: &FirmId) -> Result<f64> {
        self.firm_shares
            .get(firm)
            .copied()
            .ok_or_else(|| Error::UnknownFirm(firm.clone()))
    }

    pub fn inside_total(&self) -> f64 {
        self.firm_shares.values().sum()
    }

    /// Shares renormalized to exclude the outside option, s_f/(1 − s₀).
    pub fn inside_view(&self) -> BTreeMap<FirmId, f64> {
        let denom = 1.0 - self.outside_share;
        self.firm_shares
            .iter()
            .map(|(f, &s)| (f.clone(), if denom > 0.0 { s / denom } else { 0.0 }))
            .collect()
    }
}

/// Product-level shares and the ownership map.
#[derive(Clone, Debug, PartialEq, Serialize, Deserialize)]
pub struct ProductShareVector {
    product_shares: BTreeMap<ProductId, f64>,
    ownership: BTreeMap<ProductId, FirmId>,
}

impl ProductShareVector {
    pub fn new(product_shares: BTreeMap<ProductId, f64>, ownership: BTreeMap<ProductId, FirmId>) -> Result<Self> {
        for (product, &s) in &product_shares {
            check_unit(s, &format!("share of product {product}"))?;
            if !ownership.contains_key(product) {
                return Err(Error::invalid(format!("product {product} has no owner")));
            }
        }
        if ownership.len() != product_shares.len() {
            return Err(Error::invalid("ownership lists products without a share".to_owned()));
        }
        Ok(ProductShareVector {
            product_shares,
            ownership,
        })
    }

    /// One product per firm, named after the firm.
    pub fn single_product(firms: &ShareVector) -> Self {
        let mut product_shares = BTreeMap::new();
        let mut ownership = BTreeMap::new();
        for (firm, &s) in firms.firm_shares() {
            let product = ProductId(firm.0.clone());
            product_shares.insert(product.clone(), s);
            ownership.insert(product, firm.clone());
        }
        ProductShareVector {
            product_shares,
            ownership,
        }
    }

    pub fn product_shares(&self) -> &BTreeMap<ProductId, f64> {
        &self.product_shares
    }

    pub fn ownership(&self) -> &BTreeMap<ProductId, FirmId> {
        &self.ownership
    }

    pub fn share(&self, product: &ProductId) -> Option<f64> {
        self.product_shares.get(product).copied()
    }

    pub fn owner(&self, product: &ProductId) -> Option<&FirmId> {
        self.ownership.get(product)
    }

    /// Products owned by `firm`, with their shares, in id order.
    pub fn products_of<'a>(&'a self, firm: &'a FirmId) -> impl Iterator<Item = (&'a ProductId, f64)> + 'a {
        self.product_shares
            .iter()
            .filter(move |(p, _)| self.ownership.get(*p) == Some(firm))
            .map(|(p, &s)| (p, s))
    }

    pub fn firm_total(&self, firm: &FirmId) -> f64 {
        self.products_of(firm).map(|(_, s)| s).sum()
    }

    /// Checks that product shares sum to the firm shares of `firms`.
    pub fn check_consistent(&self, firms: &ShareVector) -> Result<()> {
        for owner in self.ownership.values() {
            if !firms.firm_shares().contains_key(owner) {
                return Err(Error::UnknownFirm(owner.clone()));
            }
        }
        for (firm, &s) in firms.firm_shares() {
            let total = self.firm_total(firm);
            if (total - s).abs() > ADDING_UP_TOL {
                return Err(Error::invalid(format!(
                    "products of firm {firm} sum to {total}, firm share is {s}"
                )));
            }
        }
        Ok(())
    }
}

fn check_unit(s: f64, what: &str) -> Result<()> {
    if !(0.0..=1.0).contains(&s) {
        return Err(Error::domain(format!("{what} must lie in [0,1], got {s}")));
    }
    Ok(())
}

/// h_j(p) together with its first two derivatives in p.
fn h_derivs(price: f64, quality: f64, params: &DemandParams) -> (f64, f64, f64) {
    let r = params.price_response;
    match params.kind {
        DemandKind::Mnl => {
            let h = (quality - r * price).exp();
            (h, -r * h, r * r * h)
        }
        DemandKind::Ces => {
            let h = quality * price.powf(1.0 - r);
            let d1 = (1.0 - r) * h / price;
            let d2 = -r * d1 / price;
            (h, d1, d2)
        }
    }
}

fn check_prices(prices: &[f64], qualities: &[f64]) -> Result<()> {
    if prices.len() != qualities.len() {
        return Err(Error::invalid(format!(
            "{} prices but {} qualities",
            prices.len(),
            qualities.len()
        )));
    }
    if let Some(p) = prices.iter().find(|p| !(p.is_finite() && **p > 0.0)) {
        return Err(Error::domain(format!("prices must be positive, got {p}")));
    }
    Ok(())
}

/// Market aggregator H = H₀ + Σ h_j(p_j).
pub fn aggregator(prices: &[f64], qualities: &[f64], params: &DemandParams, h0: f64) -> Result<f64> {
    check_prices(prices, qualities)?;
    Ok(h0
        + prices
            .iter()
            .zip(qualities)
            .map(|(&p, &v)| h_derivs(p, v, params).0)
            .sum::<f64>())
}

/// Quantities demanded at `prices`.
///
/// MNL: `q_j = N·exp(v_j − α p_j) / (H₀ + Σ exp(v_l − α p_l))`;
/// CES: `q_j = Y·v_j p_j^{−σ} / (H₀ + Σ v_l p_l^{1−σ})`.
pub fn demand(prices: &[f64], qualities: &[f64], params: &DemandParams, h0: f64) -> Result<Vec<f64>> {
    let h = aggregator(prices, qualities, params, h0)?;
    let v0 = params.v0();
    Ok(prices
        .iter()
        .zip(qualities)
        .map(|(&p, &v)| -v0 * h_derivs(p, v, params).1 / h)
        .collect())
}

/// Analytic demand Jacobian: `jac[j][k] = ∂q_k/∂p_j`.
pub fn demand_jacobian(prices: &[f64], qualities: &[f64], params: &DemandParams, h0: f64) -> Result<Vec<Vec<f64>>> {
    let h = aggregator(prices, qualities, params, h0)?;
    let v0 = params.v0();
    let derivs: Vec<_> = prices
        .iter()
        .zip(qualities)
        .map(|(&p, &v)| h_derivs(p, v, params))
        .collect();
    Ok((0..prices.len())
        .map(|j| {
            (0..prices.len())
                .map(|k| {
                    let cross = v0 * derivs[k].1 * derivs[j].1 / (h * h);
                    if j == k {
                        cross - v0 * derivs[k].2 / h
                    } else {
                        cross
                    }
                })
                .collect()
        })
        .collect())
}

/// Herfindahl-Hirschman index Σ s_f², kept on [0,1]. The outside option is
/// not a firm and does not enter.
pub fn hhi(shares: &ShareVector) -> f64 {
    shares.firm_shares.values().map(|s| s * s).sum()
}

/// Naive change in HHI from merging two firms at pre-merger shares.
pub fn delta_hhi(s_a: f64, s_b: f64) -> f64 {
    2.0 * s_a * s_b
}

/// Logit quantity diversion ratio D_{j→k} = s_k/(1 − s_j).
pub fn diversion_quantity(s_j: f64, s_k: f64) -> Result<f64> {
    if s_j >= 1.0 {
        return Err(Error::domain(format!("diversion undefined for own share {s_j} >= 1")));
    }
    Ok(s_k / (1.0 - s_j))
}

/// CES revenue diversion ratio s_l/(1 − s_j), or the adjusted variant
/// s_l/(σ/(σ−1) − s_j).
pub fn diversion_revenue(s_j: f64, s_l: f64, adjusted: bool, sigma: f64) -> Result<f64> {
    let denom = if adjusted {
        sigma / (sigma - 1.0) - s_j
    } else {
        1.0 - s_j
    };
    if !(denom > 0.0) {
        return Err(Error::domain(format!(
            "revenue diversion denominator {denom} is not positive"
        )));
    }
    Ok(s_l / denom)
}

/// Equilibrium margin implied by a firm's share: the absolute margin
/// 1/(α(1−s)) under MNL, the relative margin 1/(1+(1−s)(σ−1)) under CES.
pub fn equilibrium_margin(firm_share: f64, params: &DemandParams) -> Result<f64> {
    if firm_share >= 1.0 {
        return Err(Error::domain(format!(
            "margin undefined for firm share {firm_share} >= 1"
        )));
    }
    let r = params.price_response;
    Ok(match params.kind {
        DemandKind::Mnl => 1.0 / (r * (1.0 - firm_share)),
        DemandKind::Ces => 1.0 / (1.0 + (1.0 - firm_share) * (r - 1.0)),
    })
}

/// The CES factor 1 + 1/ε_jj written through the revenue elasticity
/// ε^R = −(1−s^R)(σ−1): `(1−s^R)(σ−1) / (1 + (1−s^R)(σ−1))`.
pub fn ces_elasticity_factor(s_j: f64, sigma: f64) -> f64 {
    let e = (1.0 - s_j) * (sigma - 1.0);
    e / (1.0 + e)
}
