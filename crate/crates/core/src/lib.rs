//! Merger effects on consumer surplus in aggregative MNL and CES oligopoly
//! models.
//!
//! The crate computes Bertrand–Nash equilibria from firm types, calibrates
//! those types from observed shares and one margin, and evaluates the
//! first-order approximation of a merger's consumer-surplus effect in terms
//! of ΔHHI and the curvature terms ρ₁ and ρ₂.
//!
//! ```
//! use std::collections::BTreeMap;
//! use merger_hhi::*;
//!
//! # fn main() -> merger_hhi::Result<()> {
//! let shares: BTreeMap<FirmId, f64> =
//!     [("A", 0.2), ("B", 0.15), ("C", 0.25)].into_iter().map(|(f, s)| (f.into(), s)).collect();
//! let shares = ShareVector::new(shares, 0.4, ShareBasis::Quantity)?;
//! let cal = calibrate(&CalibrationInput::new(DemandKind::Mnl, shares.clone(), "C", 0.45, None)?)?;
//!
//! let merger = MergerSpec::new("A", "B")?;
//! let pre = solve_equilibrium(&cal.model)?;
//! let post = solve_equilibrium(&post_merger_model(&cal.model, &merger)?)?;
//! let actual = delta_cs_actual(&pre, &post);
//!
//! let products = ProductShareVector::single_product(&shares);
//! let report = delta_cs_prop1(&products, &shares, &merger, cal.params(), cal.model.v0())?;
//! assert!(report.dcs_ns > actual && actual < 0.0);
//! # Ok(())
//! # }
//! ```

// Domain checks are written as `!(x > 0.0)` so that NaN is rejected.
#![allow(clippy::neg_cmp_op_on_partial_ord)]

pub mod calibration;
pub mod demand;
pub mod equilibrium;
pub mod error;
pub mod figures;
pub mod first_order;
pub mod ids;
pub mod montecarlo;
pub mod roots;

pub use calibration::{calibrate, implied_upp_inputs, CalibratedModel, CalibrationInput, UppInputs};
pub use demand::{delta_hhi, hhi, DemandKind, DemandParams, ProductShareVector, ShareBasis, ShareVector};
pub use equilibrium::{
    delta_cs_actual, post_merger_market, post_merger_model, solve_equilibrium, solve_equilibrium_with, Diagnostics,
    Equilibrium, FirmModel, Market, Product, SolverOptions,
};
pub use error::{Error, Result};
pub use first_order::{
    delta_cs_ns, delta_cs_passthrough, delta_cs_prop1, rho1, rho1_bounds, rho2, upp, ApproxReport, MergerSpec,
    PassThroughMatrix, Rho1Bounds,
};
pub use ids::{FirmId, ProductId};
pub use montecarlo::{McConfig, McOutcome, McRecord, McSummary};
