//! Equilibria checked against demand-level oracles: Bertrand first-order
//! conditions, diversion ratios and UPP rebuilt from the demand Jacobian.

mod common;

use std::collections::BTreeMap;

use merger_hhi::demand::{aggregator, demand, demand_jacobian, diversion_quantity, diversion_revenue};
use merger_hhi::equilibrium::{prices_from_equilibrium, product_shares};
use merger_hhi::{
    calibrate, solve_equilibrium, upp, CalibrationInput, DemandKind, DemandParams, FirmId, Market, MergerSpec, Product,
    ProductId, ShareVector,
};
use rand::{Rng, SeedableRng};
use rand_chacha::ChaCha8Rng;

fn random_market(rng: &mut ChaCha8Rng, kind: DemandKind) -> Market {
    let params = match kind {
        DemandKind::Mnl => DemandParams::mnl(rng.random_range(0.3..4.0), rng.random_range(1.0..20.0)).unwrap(),
        DemandKind::Ces => DemandParams::ces(rng.random_range(1.3..8.0), rng.random_range(1.0..20.0)).unwrap(),
    };
    let n_firms = rng.random_range(2..=4);
    let mut products = Vec::new();
    for f in 0..n_firms {
        for j in 0..rng.random_range(1..=3) {
            let v = match kind {
                DemandKind::Mnl => rng.random_range(-1.0..3.0),
                DemandKind::Ces => rng.random_range(0.2..3.0),
            };
            products.push(Product {
                id: ProductId(format!("p{f}{j}")),
                firm: FirmId(format!("f{f}")),
                v,
                c: rng.random_range(0.5..2.0),
            });
        }
    }
    Market::new(params, 1.0, products).unwrap()
}

#[test]
fn bertrand_first_order_conditions_hold() {
    let mut rng = ChaCha8Rng::seed_from_u64(1);
    for kind in [DemandKind::Mnl, DemandKind::Ces] {
        for _ in 0..200 {
            let market = random_market(&mut rng, kind);
            let eq = solve_equilibrium(&market.firm_model().unwrap()).unwrap();
            assert!(eq.diagnostics.converged);
            let prices = prices_from_equilibrium(&market, &eq).unwrap();
            let v = market.qualities();
            let q = demand(&prices, &v, market.params(), market.h0()).unwrap();
            let jac = demand_jacobian(&prices, &v, market.params(), market.h0()).unwrap();
            let products = market.products();
            for (j, pj) in products.iter().enumerate() {
                // ∂Π_f/∂p_j = q_j + Σ_{k∈f} (p_k − c_k) ∂q_k/∂p_j
                let foc: f64 = q[j]
                    + products
                        .iter()
                        .enumerate()
                        .filter(|(_, pk)| pk.firm == pj.firm)
                        .map(|(k, pk)| (prices[k] - pk.c) * jac[j][k])
                        .sum::<f64>();
                assert!(foc.abs() <= 1e-9 * q[j].max(1e-300), "{kind}: foc {foc} q {}", q[j]);
            }
            let h = aggregator(&prices, &v, market.params(), market.h0()).unwrap();
            assert!((h - eq.h).abs() <= 1e-10 * eq.h);
        }
    }
}

#[test]
fn profits_equal_revenue_minus_cost() {
    let mut rng = ChaCha8Rng::seed_from_u64(2);
    for kind in [DemandKind::Mnl, DemandKind::Ces] {
        for _ in 0..100 {
            let market = random_market(&mut rng, kind);
            let eq = solve_equilibrium(&market.firm_model().unwrap()).unwrap();
            let prices = prices_from_equilibrium(&market, &eq).unwrap();
            let q = demand(&prices, &market.qualities(), market.params(), market.h0()).unwrap();
            let mut direct: BTreeMap<FirmId, f64> = BTreeMap::new();
            for (k, p) in market.products().iter().enumerate() {
                *direct.entry(p.firm.clone()).or_default() += (prices[k] - p.c) * q[k];
            }
            for (f, pi) in &direct {
                assert!((pi - eq.profits[f]).abs() <= 1e-10 * pi.abs().max(1.0), "{kind} {f}");
            }
        }
    }
}

#[test]
fn diversion_ratios_match_jacobian() {
    let mut rng = ChaCha8Rng::seed_from_u64(3);
    for kind in [DemandKind::Mnl, DemandKind::Ces] {
        for _ in 0..100 {
            let market = random_market(&mut rng, kind);
            let eq = solve_equilibrium(&market.firm_model().unwrap()).unwrap();
            let shares = product_shares(&market, &eq).unwrap();
            let prices = prices_from_equilibrium(&market, &eq).unwrap();
            let q = demand(&prices, &market.qualities(), market.params(), market.h0()).unwrap();
            let jac = demand_jacobian(&prices, &market.qualities(), market.params(), market.h0()).unwrap();
            let products = market.products();
            let sigma = market.params().price_response();
            for j in 0..products.len() {
                let s_j = shares.share(&products[j].id).unwrap();
                for l in 0..products.len() {
                    if l == j {
                        continue;
                    }
                    let s_l = shares.share(&products[l].id).unwrap();
                    let (oracle, closed) = match kind {
                        DemandKind::Mnl => (-jac[j][l] / jac[j][j], diversion_quantity(s_j, s_l).unwrap()),
                        DemandKind::Ces => {
                            // Revenue derivatives: ∂(p_l q_l)/∂p_j.
                            let cross = prices[l] * jac[j][l];
                            let own = q[j] + prices[j] * jac[j][j];
                            (-cross / own, diversion_revenue(s_j, s_l, false, sigma).unwrap())
                        }
                    };
                    assert!(
                        (oracle - closed).abs() <= 1e-10 * closed.abs().max(1e-3),
                        "{kind}: {oracle} vs {closed}"
                    );
                }
            }
        }
    }
}

#[test]
fn upp_matches_definition_at_calibrated_equilibrium() {
    let mut rng = ChaCha8Rng::seed_from_u64(4);
    for kind in [DemandKind::Mnl, DemandKind::Ces] {
        for _ in 0..100 {
            let n = rng.random_range(2..=6);
            let draw = common::flat_dirichlet(&mut rng, n + 1);
            let firms: BTreeMap<FirmId, f64> = draw[..n]
                .iter()
                .enumerate()
                .map(|(i, &s)| (FirmId(format!("{}", i + 1)), s))
                .collect();
            let shares = ShareVector::new(firms, draw[n], kind.basis()).unwrap();
            let margin = rng.random_range(0.3..0.6);
            let cal = calibrate(&CalibrationInput::new(kind, shares.clone(), "1", margin, None).unwrap()).unwrap();
            // Large firms can imply negative logit costs; those draws have
            // no product-level market.
            let Ok(market) = cal.to_market() else { continue };
            let eq = solve_equilibrium(&market.firm_model().unwrap()).unwrap();
            let prices = prices_from_equilibrium(&market, &eq).unwrap();
            for p in &prices {
                assert!((p - 1.0).abs() < 1e-9, "calibrated prices are unit, got {p}");
            }
            let jac = demand_jacobian(&prices, &market.qualities(), market.params(), market.h0()).unwrap();
            let merger = MergerSpec::new("1", "2").unwrap();
            let products = product_shares(&market, &eq).unwrap();
            let closed = upp(&products, &eq.shares, &merger, market.params()).unwrap();
            let items = market.products();
            for (j, pj) in items.iter().enumerate() {
                let Some(partner) = merger.partner(&pj.firm) else {
                    continue;
                };
                // Σ over the partner's products of (p_l − c_l) D_{j→l}.
                let oracle: f64 = items
                    .iter()
                    .enumerate()
                    .filter(|(_, pl)| &pl.firm == partner)
                    .map(|(l, pl)| (prices[l] - pl.c) * (-jac[j][l] / jac[j][j]))
                    .sum();
                let got = closed[&pj.id];
                assert!(
                    (oracle - got).abs() <= 1e-9 * got.abs().max(1e-6),
                    "{kind}: {oracle} vs {got}"
                );
            }
        }
    }
}
