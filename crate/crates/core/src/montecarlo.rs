//! Monte Carlo comparison of actual merger effects with their first-order
//! approximations.
//!
//! Each replicate draws outside-inclusive shares for `n_firms` single-product
//! firms from a Dirichlet distribution and a margin for firm 1, calibrates
//! the demand system with all prices at one, merges firms 1 and 2 without
//! synergies, solves the post-merger equilibrium and records actual price
//! and consumer-surplus changes (V₀ = 1) next to UPP, the ρ₁ρ₂ΔHHI formula
//! and the small-share benchmark.
//!
//! Replicate `i` draws from a ChaCha8 stream selected by `(seed, i)`, so a
//! run is a pure function of its configuration whatever the thread count.

use std::collections::BTreeMap;
use std::fs::File;
use std::io::Write;
use std::path::Path;

use rand::{Rng, SeedableRng};
use rand_chacha::ChaCha8Rng;
use rand_distr::{Distribution, Exp1, Gamma};
use rayon::prelude::*;
use serde::{Deserialize, Serialize};

use crate::calibration::{calibrate, CalibrationInput};
use crate::demand::{DemandKind, ProductShareVector, ShareVector};
use crate::equilibrium::{delta_cs_actual, post_merger_model, solve_equilibrium};
use crate::error::{Error, Result};
use crate::first_order::{delta_cs_prop1, MergerSpec};
use crate::ids::{FirmId, ProductId};

/// Discard rate above which a run carries a warning.
pub const DISCARD_WARNING_RATE: f64 = 0.05;

#[derive(Clone, Debug, PartialEq, Serialize, Deserialize)]
pub struct McConfig {
    pub n_firms: usize,
    pub reps: usize,
    pub margin_range: (f64, f64),
    /// Dirichlet concentration, one entry per firm plus the outside option
    /// (last).
    pub dirichlet_alpha: Vec<f64>,
    pub demand: DemandKind,
    pub seed: u64,
    /// Multiplier applied to UPP and to the UPP-based ΔCS approximation.
    pub upp_scale: f64,
}

impl McConfig {
    /// Six firms, flat Dirichlet, margins on [0.3, 0.6], 50,000 replicates.
    pub fn full_scale(demand: DemandKind, seed: u64) -> Self {
        McConfig {
            n_firms: 6,
            reps: 50_000,
            margin_range: (0.3, 0.6),
            dirichlet_alpha: vec![1.0; 7],
            demand,
            seed,
            upp_scale: 1.0,
        }
    }

    /// As [`McConfig::full_scale`] with 2,000 replicates.
    pub fn desk_scale(demand: DemandKind, seed: u64) -> Self {
        McConfig {
            reps: 2_000,
            ..Self::full_scale(demand, seed)
        }
    }

    pub fn validate(&self) -> Result<()> {
        if self.n_firms < 2 {
            return Err(Error::invalid(
                "a merger of firms 1 and 2 needs at least two firms".to_owned(),
            ));
        }
        if self.reps == 0 {
            return Err(Error::invalid("reps must be at least 1".to_owned()));
        }
        let (lo, hi) = self.margin_range;
        if !(0.0 < lo && lo < hi && hi < 1.0) {
            return Err(Error::domain(format!(
                "margin range must satisfy 0 < lo < hi < 1, got [{lo}, {hi}]"
            )));
        }
        if self.dirichlet_alpha.len() != self.n_firms + 1 {
            return Err(Error::invalid(format!(
                "Dirichlet concentration needs {} entries, got {}",
                self.n_firms + 1,
                self.dirichlet_alpha.len()
            )));
        }
        if self.dirichlet_alpha.iter().any(|a| !(a.is_finite() && *a > 0.0)) {
            return Err(Error::domain("Dirichlet concentrations must be positive".to_owned()));
        }
        if !(self.upp_scale.is_finite() && self.upp_scale >= 0.0) {
            return Err(Error::domain(format!(
                "upp scale must be non-negative, got {}",
                self.upp_scale
            )));
        }
        Ok(())
    }
}

/// Results of a replicate whose pre- and post-merger solves converged.
#[derive(Clone, Debug, PartialEq, Serialize, Deserialize)]
pub struct McOutcome {
    /// Calibrated α (MNL) or σ (CES).
    pub price_response: f64,
    /// Actual price change of the products of firms 1 and 2.
    pub dp: [f64; 2],
    /// Scaled UPP of the products of firms 1 and 2.
    pub upp: [f64; 2],
    pub dcs_actual: f64,
    pub dcs_prop1: f64,
    pub dcs_ns: f64,
    /// Largest gap between drawn shares and the forward-solved pre-merger
    /// shares.
    pub roundtrip_error: f64,
}

#[derive(Clone, Debug, PartialEq, Serialize, Deserialize)]
pub struct McRecord {
    pub replicate: usize,
    /// Drawn shares of firms 1..n followed by the outside share.
    pub shares: Vec<f64>,
    pub margin: f64,
    pub outcome: Option<McOutcome>,
    /// Why the replicate was discarded.
    pub failure: Option<String>,
}

impl McRecord {
    pub fn converged(&self) -> bool {
        self.outcome.is_some()
    }
}

fn firm_id(i: usize) -> FirmId {
    FirmId((i + 1).to_string())
}

fn draw_shares<R: Rng>(alpha: &[f64], rng: &mut R) -> Vec<f64> {
    let flat = alpha.iter().all(|&a| a == 1.0);
    let raw: Vec<f64> = if flat {
        // Flat Dirichlet: normalized unit exponentials.
        (0..alpha.len()).map(|_| Exp1.sample(rng)).collect()
    } else {
        alpha
            .iter()
            .map(|&a| Gamma::new(a, 1.0).expect("validated concentration").sample(rng))
            .collect()
    };
    let total: f64 = raw.iter().sum();
    raw.into_iter().map(|x| x / total).collect()
}

/// One replicate from drawn shares (`firm_shares` for firms 1..n, plus the
/// outside share) and firm 1's margin.
pub fn simulate_market(
    firm_shares: &[f64],
    outside: f64,
    margin: f64,
    demand: DemandKind,
    upp_scale: f64,
) -> Result<McOutcome> {
    let shares: BTreeMap<FirmId, f64> = firm_shares.iter().enumerate().map(|(i, &s)| (firm_id(i), s)).collect();
    let shares = ShareVector::new(shares, outside, demand.basis())?;
    let input = CalibrationInput::new(demand, shares.clone(), firm_id(0), margin, None)?;
    let cal = calibrate(&input)?;
    let params = *cal.params();

    let pre = solve_equilibrium(&cal.model)?;
    pre.require_converged()?;
    let roundtrip_error = shares
        .firm_shares()
        .iter()
        .map(|(f, &s)| (pre.shares.get(f).unwrap_or(f64::NAN) - s).abs())
        .fold(0.0f64, f64::max)
        .max((pre.shares.outside_share() - outside).abs());

    let merger = MergerSpec::new(firm_id(0), firm_id(1))?;
    let products = ProductShareVector::single_product(&shares);
    let report = delta_cs_prop1(&products, &shares, &merger, &params, 1.0)?;

    let post = solve_equilibrium(&post_merger_model(&cal.model, &merger)?)?;
    post.require_converged()?;
    let mu_merged = post.mu_of(&merger.merged_id())?;

    let r = params.price_response();
    let mut dp = [0.0; 2];
    let mut upp = [0.0; 2];
    for (k, firm) in [&merger.firm_a, &merger.firm_b].into_iter().enumerate() {
        let mu_pre = pre.mu_of(firm)?;
        dp[k] = match demand {
            DemandKind::Mnl => (mu_merged - mu_pre) / r,
            DemandKind::Ces => {
                let cost = cal.implied_costs[firm];
                cost / (1.0 - mu_merged / r) - 1.0
            }
        };
        upp[k] = upp_scale * report.upp[&ProductId(firm.0.clone())];
    }

    Ok(McOutcome {
        price_response: r,
        dp,
        upp,
        dcs_actual: delta_cs_actual(&pre, &post),
        dcs_prop1: upp_scale * report.dcs_prop1,
        dcs_ns: report.dcs_ns,
        roundtrip_error,
    })
}

/// Runs replicate `index` of `config`.
pub fn replicate(config: &McConfig, index: usize) -> McRecord {
    let mut rng = ChaCha8Rng::seed_from_u64(config.seed);
    rng.set_stream(index as u64);
    let shares = draw_shares(&config.dirichlet_alpha, &mut rng);
    let (lo, hi) = config.margin_range;
    let margin = rng.random_range(lo..hi);
    let (firms, outside) = shares.split_at(config.n_firms);
    match simulate_market(firms, outside[0], margin, config.demand, config.upp_scale) {
        Ok(outcome) => McRecord {
            replicate: index,
            shares,
            margin,
            outcome: Some(outcome),
            failure: None,
        },
        Err(e) => McRecord {
            replicate: index,
            shares,
            margin,
            outcome: None,
            failure: Some(e.to_string()),
        },
    }
}

/// All replicates, ordered by replicate index, on the global rayon pool.
pub fn run(config: &McConfig) -> Result<Vec<McRecord>> {
    config.validate()?;
    Ok((0..config.reps).into_par_iter().map(|i| replicate(config, i)).collect())
}

/// As [`run`] on a dedicated pool of `threads` workers.
pub fn run_with_threads(config: &McConfig, threads: usize) -> Result<Vec<McRecord>> {
    config.validate()?;
    let pool = rayon::ThreadPoolBuilder::new()
        .num_threads(threads)
        .build()
        .map_err(|e| Error::invalid(format!("cannot build thread pool: {e}")))?;
    pool.install(|| run(config))
}

#[derive(Clone, Debug, PartialEq, Serialize, Deserialize)]
pub struct McSummary {
    pub n_records: usize,
    pub n_converged: usize,
    pub discard_rate: f64,
    pub mean_dcs_actual: f64,
    pub mae_prop1: f64,
    pub mae_ns: f64,
    /// Mean of (approximation − actual); positive means predicted harm is
    /// smaller than actual harm.
    pub bias_prop1: f64,
    pub bias_ns: f64,
    /// Mean |Δp − UPP| over the merging products.
    pub mae_upp: f64,
    pub median_ratio_dp_over_upp: f64,
    pub warning: Option<String>,
}

fn mean(values: impl Iterator<Item = f64>) -> f64 {
    let (sum, n) = values.fold((0.0, 0usize), |(s, n), v| (s + v, n + 1));
    sum / n as f64
}

fn median(mut values: Vec<f64>) -> f64 {
    if values.is_empty() {
        return f64::NAN;
    }
    values.sort_by(f64::total_cmp);
    let n = values.len();
    if n % 2 == 1 {
        values[n / 2]
    } else {
        0.5 * (values[n / 2 - 1] + values[n / 2])
    }
}

/// Accuracy statistics over converged replicates.
pub fn summarize(records: &[McRecord]) -> Result<McSummary> {
    let done: Vec<&McOutcome> = records.iter().filter_map(|r| r.outcome.as_ref()).collect();
    if done.is_empty() {
        return Err(Error::invalid("no converged replicates to summarize".to_owned()));
    }
    let discard_rate = 1.0 - done.len() as f64 / records.len() as f64;
    let warning = (discard_rate > DISCARD_WARNING_RATE).then(|| {
        format!(
            "{:.1}% of replicates discarded (threshold {:.0}%)",
            100.0 * discard_rate,
            100.0 * DISCARD_WARNING_RATE
        )
    });
    let ratios = done
        .iter()
        .flat_map(|o| o.dp.iter().zip(&o.upp))
        .filter(|(_, &u)| u > 0.0)
        .map(|(&d, &u)| d / u)
        .collect();
    Ok(McSummary {
        n_records: records.len(),
        n_converged: done.len(),
        discard_rate,
        mean_dcs_actual: mean(done.iter().map(|o| o.dcs_actual)),
        mae_prop1: mean(done.iter().map(|o| (o.dcs_prop1 - o.dcs_actual).abs())),
        mae_ns: mean(done.iter().map(|o| (o.dcs_ns - o.dcs_actual).abs())),
        bias_prop1: mean(done.iter().map(|o| o.dcs_prop1 - o.dcs_actual)),
        bias_ns: mean(done.iter().map(|o| o.dcs_ns - o.dcs_actual)),
        mae_upp: mean(
            done.iter()
                .flat_map(|o| o.dp.iter().zip(&o.upp).map(|(d, u)| (d - u).abs())),
        ),
        median_ratio_dp_over_upp: median(ratios),
        warning,
    })
}

fn num(x: f64) -> String {
    format!("{x}")
}

/// Writes one row per replicate with a fixed column order.
pub fn write_records_csv<W: Write>(records: &[McRecord], n_firms: usize, out: W) -> Result<()> {
    let mut w = csv::Writer::from_writer(out);
    let mut header = vec!["replicate".to_owned(), "converged".to_owned(), "margin".to_owned()];
    header.extend((1..=n_firms).map(|i| format!("s{i}")));
    header.push("s0".to_owned());
    for col in [
        "price_response",
        "dp1",
        "dp2",
        "upp1",
        "upp2",
        "dcs_actual",
        "dcs_prop1",
        "dcs_ns",
        "roundtrip_error",
        "failure",
    ] {
        header.push(col.to_owned());
    }
    w.write_record(&header)?;
    for r in records {
        let mut row = vec![r.replicate.to_string(), r.converged().to_string(), num(r.margin)];
        row.extend(r.shares.iter().map(|&s| num(s)));
        match &r.outcome {
            Some(o) => {
                for v in [
                    o.price_response,
                    o.dp[0],
                    o.dp[1],
                    o.upp[0],
                    o.upp[1],
                    o.dcs_actual,
                    o.dcs_prop1,
                    o.dcs_ns,
                    o.roundtrip_error,
                ] {
                    row.push(num(v));
                }
            }
            None => row.extend(std::iter::repeat_n(String::new(), 9)),
        }
        row.push(r.failure.clone().unwrap_or_default());
        w.write_record(&row)?;
    }
    w.flush()?;
    Ok(())
}

/// Writes `records.csv`, `summary.json` and the three scatter datasets
/// (CSV and SVG) into `dir`.
pub fn write_run(dir: &Path, config: &McConfig, records: &[McRecord]) -> Result<McSummary> {
    std::fs::create_dir_all(dir)?;
    write_records_csv(records, config.n_firms, File::create(dir.join("records.csv"))?)?;
    let summary = summarize(records)?;
    let json = serde_json::json!({ "config": config, "summary": summary });
    let mut f = File::create(dir.join("summary.json"))?;
    serde_json::to_writer_pretty(&mut f, &json)?;
    f.write_all(b"\n")?;
    for which in crate::figures::FigureKind::ALL {
        let stem = which.file_stem();
        crate::figures::emit_figure_data(records, which, &dir.join(format!("{stem}.csv")))?;
        crate::figures::emit_figure_svg(records, which, &dir.join(format!("{stem}.svg")))?;
    }
    Ok(summary)
}

#[cfg(test)]
mod tests {
    use super::*;

    fn outcome(actual: f64, prop1: f64, ns: f64) -> McOutcome {
        McOutcome {
            price_response: 2.0,
            dp: [0.1, 0.2],
            upp: [0.1, 0.2],
            dcs_actual: actual,
            dcs_prop1: prop1,
            dcs_ns: ns,
            roundtrip_error: 0.0,
        }
    }

    fn record(i: usize, o: Option<McOutcome>) -> McRecord {
        McRecord {
            replicate: i,
            shares: vec![0.5, 0.3, 0.2],
            margin: 0.4,
            failure: o.is_none().then(|| "no".to_owned()),
            outcome: o,
        }
    }

    #[test]
    fn config_validation() {
        let mut c = McConfig::desk_scale(DemandKind::Mnl, 1);
        c.validate().unwrap();
        c.margin_range = (0.6, 0.3);
        assert!(c.validate().is_err());
        let mut c = McConfig::desk_scale(DemandKind::Mnl, 1);
        c.dirichlet_alpha.pop();
        assert!(c.validate().is_err());
        let mut c = McConfig::desk_scale(DemandKind::Mnl, 1);
        c.reps = 0;
        assert!(run(&c).is_err());
    }

    #[test]
    fn exact_approximations_have_zero_error() {
        let recs = vec![
            record(0, Some(outcome(-0.1, -0.1, -0.1))),
            record(1, Some(outcome(-0.3, -0.3, -0.3))),
        ];
        let s = summarize(&recs).unwrap();
        assert_eq!(s.mae_prop1, 0.0);
        assert_eq!(s.mae_ns, 0.0);
        assert_eq!(s.mae_upp, 0.0);
        assert_eq!(s.median_ratio_dp_over_upp, 1.0);
    }

    #[test]
    fn single_record_mae_is_its_error() {
        let recs = vec![record(0, Some(outcome(-0.1, -0.15, -0.07)))];
        let s = summarize(&recs).unwrap();
        assert!((s.mae_prop1 - 0.05).abs() < 1e-15);
        assert!((s.mae_ns - 0.03).abs() < 1e-15);
        assert!((s.bias_ns - 0.03).abs() < 1e-15);
        assert!((s.bias_prop1 + 0.05).abs() < 1e-15);
    }

    #[test]
    fn discards_and_warning() {
        assert!(summarize(&[record(0, None)]).is_err());
        let recs = vec![record(0, None), record(1, Some(outcome(-0.1, -0.1, -0.1)))];
        let s = summarize(&recs).unwrap();
        assert_eq!(s.n_converged, 1);
        assert_eq!(s.discard_rate, 0.5);
        assert!(s.warning.is_some());
    }

    #[test]
    fn replicate_is_reproducible() {
        let mut c = McConfig::desk_scale(DemandKind::Ces, 99);
        c.reps = 1;
        let a = run(&c).unwrap();
        let b = run_with_threads(&c, 3).unwrap();
        assert_eq!(a, b);
        assert_eq!(a[0].shares.len(), 7);
        assert!((a[0].shares.iter().sum::<f64>() - 1.0).abs() < 1e-14);
        assert!((0.3..0.6).contains(&a[0].margin));
    }

    #[test]
    fn zero_partner_share_means_no_effect() {
        for demand in [DemandKind::Mnl, DemandKind::Ces] {
            let o = simulate_market(&[0.2, 1e-14, 0.1, 0.15, 0.05, 0.1], 0.4 - 1e-14, 0.45, demand, 1.0).unwrap();
            assert!(o.dcs_actual.abs() < 1e-12, "{demand}: {}", o.dcs_actual);
            assert!(o.dcs_prop1.abs() < 1e-12);
            assert!(o.dcs_ns.abs() < 1e-12);
            assert!(o.upp[0].abs() < 1e-12);
        }
    }

    #[test]
    fn non_flat_dirichlet() {
        let mut c = McConfig::desk_scale(DemandKind::Mnl, 5);
        c.reps = 20;
        c.dirichlet_alpha = vec![2.0, 2.0, 1.0, 1.0, 1.0, 1.0, 3.0];
        let recs = run(&c).unwrap();
        assert!(recs.iter().all(|r| r.converged()));
    }

    #[test]
    fn csv_has_stable_header() {
        let recs = vec![record(0, Some(outcome(-0.1, -0.1, -0.1))), record(1, None)];
        let mut buf = Vec::new();
        write_records_csv(&recs, 2, &mut buf).unwrap();
        let text = String::from_utf8(buf).unwrap();
        let mut lines = text.lines();
        assert_eq!(
            lines.next().unwrap(),
            "replicate,converged,margin,s1,s2,s0,price_response,dp1,dp2,upp1,upp2,dcs_actual,dcs_prop1,dcs_ns,roundtrip_error,failure"
        );
        assert!(lines.next().unwrap().starts_with("0,true,0.4,0.5,0.3,0.2,2,"));
        assert_eq!(lines.next().unwrap(), "1,false,0.4,0.5,0.3,0.2,,,,,,,,,,no");
    }
}
