//! Calibration of demand parameters and firm types from observed pre-merger
//! shares and one firm's margin, with all pre-merger prices normalized to 1.
//!
//! MNL: `H = 1/(1 − Σ s_f)`, `μ_f = 1/(1 − s_f)`, `T_f = H s_f e^{μ_f}`,
//! `α = μ₁/m₁`.
//!
//! CES: `H = 1/(1 − Σ s_f)`, `σ = (1/m₁ − 1)/(1 − s₁) + 1`,
//! `μ_f = 1/(1 − ((σ−1)/σ) s_f)`, `T_f = s_f H (1 − μ_f/σ)^{1−σ}`.

use std::collections::BTreeMap;

use serde::{Deserialize, Serialize};

use crate::demand::{equilibrium_margin, DemandKind, DemandParams, ShareVector};
use crate::equilibrium::{FirmModel, Market, Product};
use crate::error::{Error, Result};
use crate::ids::{FirmId, ProductId};

/// Observed shares and one margin.
///
/// JSON form: `{"demand": "mnl", "shares": {"1": 0.2, ...}, "outside": 0.3,
/// "margin_firm": "1", "margin": 0.45}` with an optional `"scale"` (N or Y;
/// when absent the scale is chosen so that V₀ = 1).
#[derive(Clone, Debug, PartialEq, Serialize, Deserialize)]
#[serde(try_from = "RawCalibrationInput", into = "RawCalibrationInput")]
pub struct CalibrationInput {
    pub kind: DemandKind,
    pub shares: ShareVector,
    pub margin_firm: FirmId,
    /// Relative margin (p − c)/p of `margin_firm`, equal to the absolute
    /// margin under unit prices.
    pub margin: f64,
    pub scale: Option<f64>,
}

#[derive(Clone, Serialize, Deserialize)]
struct RawCalibrationInput {
    demand: DemandKind,
    shares: BTreeMap<FirmId, f64>,
    outside: f64,
    margin_firm: FirmId,
    margin: f64,
    #[serde(default, skip_serializing_if = "Option::is_none")]
    scale: Option<f64>,
    #[serde(default = "yes")]
    prices_normalized: bool,
}

fn yes() -> bool {
    true
}

impl TryFrom<RawCalibrationInput> for CalibrationInput {
    type Error = Error;

    fn try_from(raw: RawCalibrationInput) -> Result<Self> {
        if !raw.prices_normalized {
            return Err(Error::Unsupported(
                "calibration assumes all pre-merger prices equal one".to_owned(),
            ));
        }
        let shares = ShareVector::new(raw.shares, raw.outside, raw.demand.basis())?;
        CalibrationInput::new(raw.demand, shares, raw.margin_firm, raw.margin, raw.scale)
    }
}

impl From<CalibrationInput> for RawCalibrationInput {
    fn from(input: CalibrationInput) -> Self {
        RawCalibrationInput {
            demand: input.kind,
            outside: input.shares.outside_share(),
            shares: input.shares.firm_shares().clone(),
            margin_firm: input.margin_firm,
            margin: input.margin,
            scale: input.scale,
            prices_normalized: true,
        }
    }
}

impl CalibrationInput {
    pub fn new(
        kind: DemandKind,
        shares: ShareVector,
        margin_firm: impl Into<FirmId>,
        margin: f64,
        scale: Option<f64>,
    ) -> Result<Self> {
        let margin_firm = margin_firm.into();
        if !(margin > 0.0 && margin < 1.0) {
            return Err(Error::domain(format!("margin must lie in (0,1), got {margin}")));
        }
        shares.get(&margin_firm)?;
        if !(shares.outside_share() > 0.0) {
            return Err(Error::domain("calibration needs a positive outside share".to_owned()));
        }
        if shares.basis() != kind.basis() {
            return Err(Error::invalid(format!(
                "{kind} calibration expects {:?} shares",
                kind.basis()
            )));
        }
        if let Some(s) = scale {
            if !(s.is_finite() && s > 0.0) {
                return Err(Error::domain(format!("scale must be positive, got {s}")));
            }
        }
        Ok(CalibrationInput {
            kind,
            shares,
            margin_firm,
            margin,
            scale,
        })
    }
}

/// A calibrated firm-level model together with the pre-merger quantities it
/// was calibrated to.
#[derive(Clone, Debug, PartialEq, Serialize, Deserialize)]
pub struct CalibratedModel {
    pub model: FirmModel,
    /// Pre-merger ι-markups.
    pub mu: BTreeMap<FirmId, f64>,
    /// Marginal costs implied by unit prices. MNL costs can be negative for
    /// firms much larger than the margin firm.
    pub implied_costs: BTreeMap<FirmId, f64>,
    /// Pre-merger aggregator.
    pub h: f64,
    pub shares: ShareVector,
    pub margin_firm: FirmId,
    pub margin: f64,
}

impl CalibratedModel {
    pub fn params(&self) -> &DemandParams {
        self.model.params()
    }

    /// One product per firm (named after the firm) at the implied cost, with
    /// the quality chosen so the product reproduces the calibrated type.
    pub fn to_market(&self) -> Result<Market> {
        let params = *self.model.params();
        let r = params.price_response();
        let products = self
            .model
            .firm_types()
            .iter()
            .map(|(firm, &t)| {
                let c = self.implied_costs[firm];
                let v = match params.kind() {
                    DemandKind::Mnl => {
                        if t == 0.0 {
                            return Err(Error::domain(format!(
                                "firm {firm} has zero share; no finite logit quality reproduces it"
                            )));
                        }
                        t.ln() + r * c
                    }
                    DemandKind::Ces => t * c.powf(r - 1.0),
                };
                Ok(Product {
                    id: ProductId(firm.0.clone()),
                    firm: firm.clone(),
                    v,
                    c,
                })
            })
            .collect::<Result<Vec<_>>>()?;
        Market::new(params, self.model.h0(), products)
    }
}

/// Margins and shares in the form the first-order formulas consume.
#[derive(Clone, Debug, PartialEq, Serialize, Deserialize)]
pub struct UppInputs {
    pub params: DemandParams,
    /// Absolute margins (MNL) or relative margins (CES); equal under unit
    /// prices.
    pub margins: BTreeMap<FirmId, f64>,
    pub shares: ShareVector,
}

/// Dispatches on the demand kind.
pub fn calibrate(input: &CalibrationInput) -> Result<CalibratedModel> {
    match input.kind {
        DemandKind::Mnl => calibrate_mnl(input),
        DemandKind::Ces => calibrate_ces(input),
    }
}

fn aggregator_from_shares(shares: &ShareVector) -> f64 {
    1.0 / shares.outside_share()
}

pub fn calibrate_mnl(input: &CalibrationInput) -> Result<CalibratedModel> {
    if input.kind != DemandKind::Mnl {
        return Err(Error::invalid("calibrate_mnl called on CES input".to_owned()));
    }
    let h = aggregator_from_shares(&input.shares);
    let mut mu = BTreeMap::new();
    let mut types = BTreeMap::new();
    for (firm, &s) in input.shares.firm_shares() {
        let m = 1.0 / (1.0 - s);
        let t = h * s * m.exp();
        if !t.is_finite() {
            return Err(Error::domain(format!(
                "share {s} of firm {firm} is too close to one to calibrate"
            )));
        }
        mu.insert(firm.clone(), m);
        types.insert(firm.clone(), t);
    }
    let alpha = mu[&input.margin_firm] / input.margin;
    let params = match input.scale {
        Some(n) => DemandParams::mnl(alpha, n)?,
        None => DemandParams::with_v0(DemandKind::Mnl, alpha, 1.0)?,
    };
    let implied_costs = mu.iter().map(|(f, &m)| (f.clone(), 1.0 - m / alpha)).collect();
    Ok(CalibratedModel {
        model: FirmModel::new(types, params, 1.0)?,
        mu,
        implied_costs,
        h,
        shares: input.shares.clone(),
        margin_firm: input.margin_firm.clone(),
        margin: input.margin,
    })
}

pub fn calibrate_ces(input: &CalibrationInput) -> Result<CalibratedModel> {
    if input.kind != DemandKind::Ces {
        return Err(Error::invalid("calibrate_ces called on MNL input".to_owned()));
    }
    let h = aggregator_from_shares(&input.shares);
    let s1 = input.shares.get(&input.margin_firm)?;
    let sigma = (1.0 / input.margin - 1.0) / (1.0 - s1) + 1.0;
    if !(sigma > 1.0 + 1e-9 && sigma.is_finite()) {
        return Err(Error::domain(format!(
            "calibrated elasticity of substitution {sigma} is at the boundary sigma = 1"
        )));
    }
    let a = (sigma - 1.0) / sigma;
    let mut mu = BTreeMap::new();
    let mut types = BTreeMap::new();
    for (firm, &s) in input.shares.firm_shares() {
        let m = 1.0 / (1.0 - a * s);
        let t = s * h * (1.0 - m / sigma).powf(1.0 - sigma);
        if !t.is_finite() {
            return Err(Error::domain(format!("type of firm {firm} overflows")));
        }
        mu.insert(firm.clone(), m);
        types.insert(firm.clone(), t);
    }
    let params = match input.scale {
        Some(y) => DemandParams::ces(sigma, y)?,
        None => DemandParams::with_v0(DemandKind::Ces, sigma, 1.0)?,
    };
    let implied_costs = mu.iter().map(|(f, &m)| (f.clone(), 1.0 - m / sigma)).collect();
    Ok(CalibratedModel {
        model: FirmModel::new(types, params, 1.0)?,
        mu,
        implied_costs,
        h,
        shares: input.shares.clone(),
        margin_firm: input.margin_firm.clone(),
        margin: input.margin,
    })
}

/// Pre-merger margins implied by the calibrated parameters, with the shares
/// passed through.
pub fn implied_upp_inputs(cal: &CalibratedModel) -> Result<UppInputs> {
    let params = *cal.params();
    let margins = cal
        .shares
        .firm_shares()
        .iter()
        .map(|(f, &s)| Ok((f.clone(), equilibrium_margin(s, &params)?)))
        .collect::<Result<_>>()?;
    Ok(UppInputs {
        params,
        margins,
        shares: cal.shares.clone(),
    })
}

#[cfg(test)]
mod tests {
    use approx::assert_relative_eq;

    use super::*;
    use crate::demand::ShareBasis;
    use crate::equilibrium::solve_equilibrium;

    fn input(kind: DemandKind, shares: &[(&str, f64)], margin: f64) -> CalibrationInput {
        let firms = shares.iter().map(|(f, s)| (FirmId::from(*f), *s)).collect();
        let sv = ShareVector::from_inside(firms, kind.basis()).unwrap();
        CalibrationInput::new(kind, sv, shares[0].0, margin, None).unwrap()
    }

    #[test]
    fn mnl_single_firm() {
        let cal = calibrate(&input(DemandKind::Mnl, &[("1", 0.5)], 0.5)).unwrap();
        let one = FirmId::from("1");
        assert_relative_eq!(cal.h, 2.0);
        assert_relative_eq!(cal.mu[&one], 2.0);
        assert_relative_eq!(
            cal.model.firm_type(&one).unwrap(),
            2.0 * 0.5 * 2f64.exp(),
            max_relative = 1e-15
        );
        assert_relative_eq!(
            cal.model.firm_type(&one).unwrap(),
            7.38905609893065,
            max_relative = 1e-12
        );
        assert_relative_eq!(cal.params().price_response(), 4.0);
        assert_relative_eq!(cal.model.v0(), 1.0);
        assert_relative_eq!(cal.implied_costs[&one], 0.5);

        let eq = solve_equilibrium(&cal.model).unwrap();
        assert_relative_eq!(eq.h, 2.0, max_relative = 1e-12);
        assert_relative_eq!(eq.mu[&one], 2.0, max_relative = 1e-12);
    }

    #[test]
    fn mnl_vanishing_shares() {
        let cal = calibrate(&input(DemandKind::Mnl, &[("1", 1e-12), ("2", 1e-12)], 0.4)).unwrap();
        assert_relative_eq!(cal.h, 1.0, max_relative = 1e-10);
        assert_relative_eq!(cal.mu[&FirmId::from("2")], 1.0, max_relative = 1e-10);
    }

    #[test]
    fn mnl_symmetric_pair() {
        let cal = calibrate(&input(DemandKind::Mnl, &[("1", 0.25), ("2", 0.25)], 0.5)).unwrap();
        assert_relative_eq!(cal.h, 2.0);
        for f in ["1", "2"] {
            assert_relative_eq!(cal.mu[&FirmId::from(f)], 4.0 / 3.0, max_relative = 1e-15);
        }
        assert_eq!(
            cal.model.firm_type(&"1".into()).unwrap(),
            cal.model.firm_type(&"2".into()).unwrap()
        );
        let eq = solve_equilibrium(&cal.model).unwrap();
        assert_relative_eq!(eq.shares.get(&"1".into()).unwrap(), 0.25, max_relative = 1e-10);
    }

    #[test]
    fn ces_single_firm() {
        let cal = calibrate(&input(DemandKind::Ces, &[("1", 0.5)], 0.5)).unwrap();
        let one = FirmId::from("1");
        assert_relative_eq!(cal.params().price_response(), 3.0, max_relative = 1e-15);
        assert_relative_eq!(cal.mu[&one], 1.5, max_relative = 1e-15);
        assert_relative_eq!(cal.h, 2.0);
        assert_relative_eq!(cal.model.firm_type(&one).unwrap(), 4.0, max_relative = 1e-14);
        assert_relative_eq!(cal.implied_costs[&one], 0.5, max_relative = 1e-15);
        let eq = solve_equilibrium(&cal.model).unwrap();
        assert_relative_eq!(eq.shares.get(&one).unwrap(), 0.5, max_relative = 1e-10);
        assert_relative_eq!(eq.mu[&one], 1.5, max_relative = 1e-10);
    }

    #[test]
    fn ces_boundary_is_flagged() {
        assert!(calibrate(&input(DemandKind::Ces, &[("1", 0.3)], 1.0 - 1e-13)).is_err());
        let near = calibrate(&input(DemandKind::Ces, &[("1", 0.3)], 0.999)).unwrap();
        assert!(near.params().price_response() < 1.01);
    }

    #[test]
    fn ces_vanishing_shares() {
        let cal = calibrate(&input(DemandKind::Ces, &[("1", 1e-12), ("2", 0.0)], 0.4)).unwrap();
        assert_relative_eq!(cal.mu[&FirmId::from("2")], 1.0);
    }

    #[test]
    fn input_validation() {
        let sv = ShareVector::from_inside([(FirmId::from("1"), 0.5)].into(), ShareBasis::Quantity).unwrap();
        assert!(CalibrationInput::new(DemandKind::Mnl, sv.clone(), "1", 0.0, None).is_err());
        assert!(CalibrationInput::new(DemandKind::Mnl, sv.clone(), "2", 0.5, None).is_err());
        assert!(CalibrationInput::new(DemandKind::Ces, sv, "1", 0.5, None).is_err());
        let full = ShareVector::new([(FirmId::from("1"), 1.0)].into(), 0.0, ShareBasis::Quantity).unwrap();
        assert!(CalibrationInput::new(DemandKind::Mnl, full, "1", 0.5, None).is_err());
    }

    #[test]
    fn json_input() {
        let json = r#"{"demand":"mnl","shares":{"a":0.3,"b":0.2},"outside":0.5,"margin_firm":"a","margin":0.4}"#;
        let parsed: CalibrationInput = serde_json::from_str(json).unwrap();
        assert_eq!(parsed.margin_firm, FirmId::from("a"));
        let back: CalibrationInput = serde_json::from_str(&serde_json::to_string(&parsed).unwrap()).unwrap();
        assert_eq!(back, parsed);
        let bad = r#"{"demand":"mnl","shares":{"a":0.6,"b":0.5},"outside":0.1,"margin_firm":"a","margin":0.4}"#;
        assert!(serde_json::from_str::<CalibrationInput>(bad).is_err());
    }

    #[test]
    fn upp_inputs() {
        let cal = calibrate(&input(DemandKind::Mnl, &[("1", 0.5), ("2", 0.0)], 0.5)).unwrap();
        let u = implied_upp_inputs(&cal).unwrap();
        assert_relative_eq!(u.margins[&FirmId::from("1")], 0.5);
        assert_relative_eq!(u.margins[&FirmId::from("2")], 1.0 / cal.params().price_response());
        let cal = calibrate(&input(DemandKind::Ces, &[("1", 0.5)], 0.5)).unwrap();
        let u = implied_upp_inputs(&cal).unwrap();
        assert_relative_eq!(u.margins[&FirmId::from("1")], 0.5, max_relative = 1e-15);
    }

    #[test]
    fn scale_only_rescales_money() {
        for kind in [DemandKind::Mnl, DemandKind::Ces] {
            let base = input(kind, &[("1", 0.3), ("2", 0.2), ("3", 0.1)], 0.45);
            let mut scaled = base.clone();
            scaled.scale = Some(7.5);
            let a = calibrate(&base).unwrap();
            let b = calibrate(&scaled).unwrap();
            let ea = solve_equilibrium(&a.model).unwrap();
            let eb = solve_equilibrium(&b.model).unwrap();
            assert_eq!(ea.h, eb.h);
            assert_eq!(ea.mu, eb.mu);
            assert_eq!(ea.shares, eb.shares);
            let factor = b.model.v0() / a.model.v0();
            assert!((factor - 1.0).abs() > 1e-3);
            assert_relative_eq!(eb.cs, factor * ea.cs, max_relative = 1e-12);
            for f in ea.profits.keys() {
                assert_relative_eq!(eb.profits[f], factor * ea.profits[f], max_relative = 1e-12);
            }
        }
    }

    #[test]
    fn larger_margin_firm_share_means_larger_alpha() {
        let mut last = 0.0;
        for i in 0..40 {
            let s = 0.01 + 0.02 * i as f64;
            let cal = calibrate(&input(DemandKind::Mnl, &[("1", s), ("2", 0.1)], 0.4)).unwrap();
            let alpha = cal.params().price_response();
            assert!(alpha > last);
            last = alpha;
        }
    }

    #[test]
    fn market_materialization_round_trip() {
        let cal = calibrate(&input(DemandKind::Ces, &[("1", 0.3), ("2", 0.2)], 0.45)).unwrap();
        let market = cal.to_market().unwrap();
        let rebuilt = market.firm_model().unwrap();
        for (f, &t) in cal.model.firm_types() {
            assert_relative_eq!(rebuilt.firm_type(f).unwrap(), t, max_relative = 1e-12);
        }
    }
}
