//! First-order approximations of merger effects computed from pre-merger
//! shares: upward pricing pressure, the HHI-based consumer surplus formula
//! `ΔCS ≈ −V₀·ρ₁·ρ₂·ΔHHI`, the small-share benchmark `−V₀·ΔHHI`, the
//! diversion-ratio form, and the pass-through-matrix generalization.
//!
//! Harm is reported as a negative ΔCS throughout.

use std::collections::BTreeMap;

use serde::{Deserialize, Serialize};

use crate::demand::{
    delta_hhi, diversion_quantity, diversion_revenue, DemandKind, DemandParams, ProductShareVector, ShareVector,
};
use crate::error::{Error, Result};
use crate::ids::{FirmId, ProductId};

/// A merger of two firms without merger-specific synergies.
#[derive(Clone, Debug, PartialEq, Eq, Serialize, Deserialize)]
#[serde(try_from = "RawMergerSpec")]
pub struct MergerSpec {
    pub firm_a: FirmId,
    pub firm_b: FirmId,
}

#[derive(Deserialize)]
struct RawMergerSpec {
    firm_a: FirmId,
    firm_b: FirmId,
}

impl TryFrom<RawMergerSpec> for MergerSpec {
    type Error = Error;

    fn try_from(raw: RawMergerSpec) -> Result<Self> {
        MergerSpec::new(raw.firm_a, raw.firm_b)
    }
}

impl MergerSpec {
    pub fn new(firm_a: impl Into<FirmId>, firm_b: impl Into<FirmId>) -> Result<Self> {
        let (firm_a, firm_b) = (firm_a.into(), firm_b.into());
        if firm_a == firm_b {
            return Err(Error::invalid(format!("a firm cannot merge with itself ({firm_a})")));
        }
        Ok(MergerSpec { firm_a, firm_b })
    }

    /// Id of the merged entity, `"A+B"`.
    pub fn merged_id(&self) -> FirmId {
        FirmId(format!("{}+{}", self.firm_a, self.firm_b))
    }

    pub fn involves(&self, firm: &FirmId) -> bool {
        firm == &self.firm_a || firm == &self.firm_b
    }

    /// The merger partner of `firm`, if `firm` is one of the two parties.
    pub fn partner(&self, firm: &FirmId) -> Option<&FirmId> {
        if firm == &self.firm_a {
            Some(&self.firm_b)
        } else if firm == &self.firm_b {
            Some(&self.firm_a)
        } else {
            None
        }
    }

    pub fn swapped(&self) -> MergerSpec {
        MergerSpec {
            firm_a: self.firm_b.clone(),
            firm_b: self.firm_a.clone(),
        }
    }
}

/// First-order merger report.
///
/// UPP is expressed in price units under unit pre-merger prices, so for CES
/// the `upp` and `guppi` maps coincide numerically (and likewise for MNL).
#[derive(Clone, Debug, PartialEq, Serialize, Deserialize)]
pub struct ApproxReport {
    pub kind: DemandKind,
    pub delta_hhi: f64,
    pub v0: f64,
    pub rho1: f64,
    pub rho2: f64,
    pub dcs_prop1: f64,
    pub dcs_ns: f64,
    pub dcs_corollary: f64,
    pub upp: BTreeMap<ProductId, f64>,
    pub guppi: BTreeMap<ProductId, f64>,
}

/// Square pass-through matrix over the merging firms' products.
/// `entry(j, i)` is the response of product j's price to UPP on product i.
#[derive(Clone, Debug, PartialEq, Serialize, Deserialize)]
pub struct PassThroughMatrix {
    products: Vec<ProductId>,
    entries: Vec<Vec<f64>>,
}

impl PassThroughMatrix {
    pub fn new(products: Vec<ProductId>, entries: Vec<Vec<f64>>) -> Result<Self> {
        let n = products.len();
        if entries.len() != n || entries.iter().any(|row| row.len() != n) {
            return Err(Error::invalid(format!(
                "pass-through matrix must be {n}x{n} to match its product list"
            )));
        }
        Ok(PassThroughMatrix { products, entries })
    }

    pub fn scaled_identity(products: Vec<ProductId>, scale: f64) -> Self {
        let n = products.len();
        let entries = (0..n)
            .map(|j| (0..n).map(|i| if i == j { scale } else { 0.0 }).collect())
            .collect();
        PassThroughMatrix { products, entries }
    }

    pub fn identity(products: Vec<ProductId>) -> Self {
        Self::scaled_identity(products, 1.0)
    }

    pub fn products(&self) -> &[ProductId] {
        &self.products
    }

    pub fn entry(&self, row: usize, col: usize) -> f64 {
        self.entries[row][col]
    }
}

/// Monetary scaling factor V₀: N/α (MNL) or Y/(σ−1) (CES).
pub fn v0(params: &DemandParams) -> f64 {
    params.v0()
}

fn below_pole(s: f64, params: &DemandParams, what: &str) -> Result<()> {
    if !(s < params.pole()) {
        return Err(Error::domain(format!(
            "{what} {s} is at or beyond the pole {}",
            params.pole()
        )));
    }
    Ok(())
}

/// Cross-firm scaling factor ρ₁ = 1/((q − s_A)(q − s_B)), q = 1 (MNL) or
/// σ/(σ−1) (CES).
pub fn rho1(s_a: f64, s_b: f64, params: &DemandParams) -> Result<f64> {
    below_pole(s_a, params, "share")?;
    below_pole(s_b, params, "share")?;
    let q = params.pole();
    Ok(1.0 / ((q - s_a) * (q - s_b)))
}

fn odds(x: f64, q: f64) -> f64 {
    x / (q - x)
}

/// Σ_{j∈J_f} f(s_j)/f(s_f) for one firm, with f(x) = x/(q − x). A firm
/// with zero share contributes its limit, 1.
fn within_firm_ratio(products: &ProductShareVector, firm: &FirmId, params: &DemandParams) -> Result<f64> {
    let q = params.pole();
    let s_f = products.firm_total(firm);
    below_pole(s_f, params, "firm share")?;
    if products.products_of(firm).next().is_none() {
        return Err(Error::invalid(format!("firm {firm} owns no products")));
    }
    if s_f == 0.0 {
        return Ok(1.0);
    }
    let denom = odds(s_f, q);
    Ok(products.products_of(firm).map(|(_, s)| odds(s, q)).sum::<f64>() / denom)
}

/// Within-firm scaling factor ρ₂, the average over the two merging firms of
/// Σ_j f(s_j)/f(s_f). Equals 1 for single-product firms.
pub fn rho2(products: &ProductShareVector, merger: &MergerSpec, params: &DemandParams) -> Result<f64> {
    let g_a = within_firm_ratio(products, &merger.firm_a, params)?;
    let g_b = within_firm_ratio(products, &merger.firm_b, params)?;
    Ok(0.5 * g_a + 0.5 * g_b)
}

/// CES gross upward pricing pressure index of a product of one merging firm
/// whose partner has revenue share `s_partner`:
/// `(σ−1) s_B / ((1 + (1−s_j)(σ−1)) (1 + (1−s_B)(σ−1)))`.
pub fn guppi_ces(s_j: f64, s_partner: f64, sigma: f64) -> f64 {
    let k = sigma - 1.0;
    k * s_partner / ((1.0 + (1.0 - s_j) * k) * (1.0 + (1.0 - s_partner) * k))
}

fn merging_shares(firm_shares: &ShareVector, merger: &MergerSpec) -> Result<(f64, f64)> {
    Ok((firm_shares.get(&merger.firm_a)?, firm_shares.get(&merger.firm_b)?))
}

/// Upward pricing pressure on every product of the two merging firms.
///
/// MNL: `UPP_j = s_B / (α (1 − s_B)(1 − s_j))` for j owned by A (and
/// symmetrically for B). CES: the GUPPI closed form, which equals UPP at
/// unit pre-merger prices.
pub fn upp(
    products: &ProductShareVector,
    firm_shares: &ShareVector,
    merger: &MergerSpec,
    params: &DemandParams,
) -> Result<BTreeMap<ProductId, f64>> {
    products.check_consistent(firm_shares)?;
    let mut out = BTreeMap::new();
    for (owner, partner) in [(&merger.firm_a, &merger.firm_b), (&merger.firm_b, &merger.firm_a)] {
        let s_partner = firm_shares.get(partner)?;
        if s_partner >= 1.0 {
            return Err(Error::domain(format!("partner share {s_partner} >= 1")));
        }
        let mut any = false;
        for (product, s_j) in products.products_of(owner) {
            any = true;
            if s_j >= 1.0 {
                return Err(Error::domain(format!("product share {s_j} >= 1")));
            }
            let value = match params.kind() {
                DemandKind::Mnl => s_partner / (params.price_response() * (1.0 - s_partner) * (1.0 - s_j)),
                DemandKind::Ces => guppi_ces(s_j, s_partner, params.price_response()),
            };
            out.insert(product.clone(), value);
        }
        if !any {
            return Err(Error::invalid(format!("merging firm {owner} owns no products")));
        }
    }
    Ok(out)
}

/// Small-share benchmark: `−V₀ ΔHHI` (MNL) or `−V₀ ((σ−1)/σ) ΔHHI^R` (CES).
pub fn delta_cs_ns(firm_shares: &ShareVector, merger: &MergerSpec, params: &DemandParams, v0: f64) -> Result<f64> {
    let (s_a, s_b) = merging_shares(firm_shares, merger)?;
    Ok(-v0 * params.alpha_star() * delta_hhi(s_a, s_b))
}

/// Diversion-ratio form `−2 V₀ ρ₂ D_{A→B} D_{B→A}`, with the adjusted
/// revenue diversion ratios under CES.
pub fn delta_cs_diversion(
    firm_shares: &ShareVector,
    products: &ProductShareVector,
    merger: &MergerSpec,
    params: &DemandParams,
    v0: f64,
) -> Result<f64> {
    let (s_a, s_b) = merging_shares(firm_shares, merger)?;
    let (d_ab, d_ba) = match params.kind() {
        DemandKind::Mnl => (diversion_quantity(s_a, s_b)?, diversion_quantity(s_b, s_a)?),
        DemandKind::Ces => {
            let sigma = params.price_response();
            (
                diversion_revenue(s_a, s_b, true, sigma)?,
                diversion_revenue(s_b, s_a, true, sigma)?,
            )
        }
    };
    Ok(-2.0 * v0 * rho2(products, merger, params)? * d_ab * d_ba)
}

/// The full first-order report, centred on `ΔCS ≈ −V₀ ρ₁ ρ₂ ΔHHI`.
pub fn delta_cs_prop1(
    products: &ProductShareVector,
    firm_shares: &ShareVector,
    merger: &MergerSpec,
    params: &DemandParams,
    v0: f64,
) -> Result<ApproxReport> {
    products.check_consistent(firm_shares)?;
    let (s_a, s_b) = merging_shares(firm_shares, merger)?;
    let dhhi = delta_hhi(s_a, s_b);
    let rho1 = rho1(s_a, s_b, params)?;
    let rho2 = rho2(products, merger, params)?;
    let upp = upp(products, firm_shares, merger, params)?;
    Ok(ApproxReport {
        kind: params.kind(),
        delta_hhi: dhhi,
        v0,
        rho1,
        rho2,
        dcs_prop1: -v0 * rho1 * rho2 * dhhi,
        dcs_ns: delta_cs_ns(firm_shares, merger, params, v0)?,
        dcs_corollary: delta_cs_diversion(firm_shares, products, merger, params, v0)?,
        guppi: upp.clone(),
        upp,
    })
}

/// MNL consumer surplus change when merger price effects are `κ·UPP`:
///
/// ```text
/// ΔCS ≈ −(N/α) [ s_B/(1−s_B) Σ_{i∈A} (Σ_j κ_{ji} s_j)/(1−s_i)
///              + s_A/(1−s_A) Σ_{k∈B} (Σ_j κ_{jk} s_j)/(1−s_k) ]
/// ```
///
/// which reduces to the ρ₁ρ₂ΔHHI formula when κ is the identity.
pub fn delta_cs_passthrough(
    products: &ProductShareVector,
    firm_shares: &ShareVector,
    merger: &MergerSpec,
    params: &DemandParams,
    kappa: &PassThroughMatrix,
    market_size: f64,
) -> Result<f64> {
    if params.kind() != DemandKind::Mnl {
        return Err(Error::Unsupported(
            "the pass-through formula is stated for logit demand only".to_owned(),
        ));
    }
    products.check_consistent(firm_shares)?;
    let (s_a, s_b) = merging_shares(firm_shares, merger)?;
    for s in [s_a, s_b] {
        if s >= 1.0 {
            return Err(Error::domain(format!("merging firm share {s} >= 1")));
        }
    }
    let merging: Vec<(&ProductId, f64)> = products
        .products_of(&merger.firm_a)
        .chain(products.products_of(&merger.firm_b))
        .collect();
    if merging.len() != kappa.products.len() {
        return Err(Error::invalid(format!(
            "pass-through matrix covers {} products, merging firms own {}",
            kappa.products.len(),
            merging.len()
        )));
    }
    let shares: Vec<f64> = kappa
        .products
        .iter()
        .map(|p| {
            let owner = products
                .owner(p)
                .ok_or_else(|| Error::invalid(format!("unknown product {p}")))?;
            if !merger.involves(owner) {
                return Err(Error::invalid(format!("product {p} is not owned by a merging firm")));
            }
            Ok(products.share(p).unwrap_or(0.0))
        })
        .collect::<Result<_>>()?;

    let mut total = 0.0;
    for (col, product) in kappa.products.iter().enumerate() {
        let s_i = shares[col];
        if s_i >= 1.0 {
            return Err(Error::domain(format!("product share {s_i} >= 1")));
        }
        let weighted: f64 = (0..shares.len()).map(|row| kappa.entry(row, col) * shares[row]).sum();
        let partner_odds = if products.owner(product) == Some(&merger.firm_a) {
            s_b / (1.0 - s_b)
        } else {
            s_a / (1.0 - s_a)
        };
        total += partner_odds * weighted / (1.0 - s_i);
    }
    Ok(-(market_size / params.price_response()) * total)
}

/// Extremes of ρ₁ (MNL) over `{(s_A, s_B): s_A + s_B ≤ c₀, 2 s_A s_B = Δ₀}`.
#[derive(Clone, Copy, Debug, PartialEq, Serialize, Deserialize)]
pub struct Rho1Bounds {
    pub lower: f64,
    pub upper: f64,
    /// Symmetric shares attaining the lower bound.
    pub argmin: (f64, f64),
    /// Most asymmetric shares attaining the upper bound.
    pub argmax: (f64, f64),
}

/// Closed-form logit ρ₁ bounds for a fixed ΔHHI `delta0` and a cap `c0` on
/// the merging firms' combined share.
pub fn rho1_bounds(c0: f64, delta0: f64) -> Result<Rho1Bounds> {
    if !(c0 > 0.0 && c0 <= 1.0) {
        return Err(Error::domain(format!("combined share cap must lie in (0,1], got {c0}")));
    }
    if !(delta0 > 0.0) {
        return Err(Error::domain(format!("delta HHI must be positive, got {delta0}")));
    }
    let cap = c0 * c0 / 2.0;
    if delta0 > cap * (1.0 + 1e-12) {
        return Err(Error::domain(format!(
            "no shares with combined share at most {c0} reach delta HHI {delta0} (max {cap})"
        )));
    }
    let sym = (delta0 / 2.0).sqrt();
    let disc = (c0 * c0 - 2.0 * delta0).max(0.0).sqrt();
    Ok(Rho1Bounds {
        lower: 1.0 / ((1.0 - sym) * (1.0 - sym)),
        upper: 2.0 / (delta0 - 2.0 * c0 + 2.0),
        argmin: (sym, sym),
        argmax: (0.5 * (c0 - disc), 0.5 * (c0 + disc)),
    })
}

/// `(Δ₀, lower, upper)` on an evenly spaced grid of `points` values of Δ₀ in
/// `(0, c₀²/2]`.
pub fn rho1_bounds_curve(c0: f64, points: usize) -> Result<Vec<(f64, f64, f64)>> {
    let cap = c0 * c0 / 2.0;
    (1..=points)
        .map(|i| {
            let d = cap * i as f64 / points as f64;
            let b = rho1_bounds(c0, d)?;
            Ok((d, b.lower, b.upper))
        })
        .collect()
}
