#![allow(dead_code)]

use std::collections::BTreeMap;

use merger_hhi::{DemandKind, DemandParams, FirmId, FirmModel, ProductId, ProductShareVector, ShareVector};
use rand::Rng;
use rand_chacha::ChaCha8Rng;
use rand_distr::{Distribution, Exp1};

pub fn flat_dirichlet(rng: &mut ChaCha8Rng, k: usize) -> Vec<f64> {
    let e: Vec<f64> = (0..k).map(|_| Exp1.sample(rng)).collect();
    let t: f64 = e.iter().sum();
    e.into_iter().map(|x| x / t).collect()
}

/// Firm and product share vectors from per-firm lists of product shares.
/// Firms are named "A", "B", "C", ... and products "A1", "A2", ...
pub fn multiproduct(products: &[Vec<f64>], basis_kind: DemandKind) -> (ShareVector, ProductShareVector) {
    let mut firm_shares = BTreeMap::new();
    let mut product_shares = BTreeMap::new();
    let mut ownership = BTreeMap::new();
    for (i, list) in products.iter().enumerate() {
        let firm = FirmId(((b'A' + i as u8) as char).to_string());
        let mut total = 0.0;
        for (j, &s) in list.iter().enumerate() {
            let id = ProductId(format!("{}{}", firm, j + 1));
            product_shares.insert(id.clone(), s);
            ownership.insert(id, firm.clone());
            total += s;
        }
        firm_shares.insert(firm, total);
    }
    let inside: f64 = firm_shares.values().sum();
    let firms = ShareVector::new(firm_shares, (1.0 - inside).max(0.0), basis_kind.basis()).unwrap();
    let prods = ProductShareVector::new(product_shares, ownership).unwrap();
    (firms, prods)
}

pub fn random_params(rng: &mut ChaCha8Rng, kind: DemandKind) -> DemandParams {
    match kind {
        DemandKind::Mnl => DemandParams::mnl(rng.random_range(0.2..5.0), rng.random_range(0.5..50.0)).unwrap(),
        DemandKind::Ces => DemandParams::ces(rng.random_range(1.05..12.0), rng.random_range(0.5..50.0)).unwrap(),
    }
}

pub fn random_firm_model(rng: &mut ChaCha8Rng, kind: DemandKind) -> FirmModel {
    let n = rng.random_range(1..=8);
    let params = random_params(rng, kind);
    let h0 = if n >= 2 && rng.random_bool(0.1) { 0.0 } else { 1.0 };
    let types = (0..n)
        .map(|i| {
            let t = match kind {
                DemandKind::Mnl => rng.random_range(-4.0f64..4.0).exp(),
                DemandKind::Ces => rng.random_range(0.01..5.0),
            };
            (FirmId(format!("f{i}")), t)
        })
        .collect();
    FirmModel::new(types, params, h0).unwrap()
}

pub fn firm(s: &str) -> FirmId {
    FirmId(s.to_owned())
}
