use std::collections::BTreeMap;
use std::hint::black_box;

use criterion::{criterion_group, criterion_main, Criterion};
use merger_hhi::montecarlo::run;
use merger_hhi::{calibrate, solve_equilibrium, CalibrationInput, DemandKind, FirmId, McConfig, ShareVector};

fn input(kind: DemandKind) -> CalibrationInput {
    let shares = [0.2, 0.15, 0.1, 0.1, 0.05, 0.05];
    let firms: BTreeMap<FirmId, f64> = shares
        .iter()
        .enumerate()
        .map(|(i, &s)| (FirmId((i + 1).to_string()), s))
        .collect();
    let sv = ShareVector::new(firms, 0.35, kind.basis()).unwrap();
    CalibrationInput::new(kind, sv, "1", 0.45, None).unwrap()
}

fn solver(c: &mut Criterion) {
    for kind in [DemandKind::Mnl, DemandKind::Ces] {
        let inp = input(kind);
        let cal = calibrate(&inp).unwrap();
        c.bench_function(&format!("calibrate/{kind}"), |b| {
            b.iter(|| calibrate(black_box(&inp)).unwrap())
        });
        c.bench_function(&format!("solve_equilibrium/{kind}/6 firms"), |b| {
            b.iter(|| solve_equilibrium(black_box(&cal.model)).unwrap())
        });
    }
}

fn monte_carlo(c: &mut Criterion) {
    let mut group = c.benchmark_group("monte_carlo");
    group.sample_size(10);
    for kind in [DemandKind::Mnl, DemandKind::Ces] {
        let config = McConfig {
            reps: 200,
            ..McConfig::desk_scale(kind, 1)
        };
        group.bench_function(format!("{kind}/200 reps"), |b| {
            b.iter(|| run(black_box(&config)).unwrap())
        });
    }
    group.finish();
}

criterion_group!(benches, solver, monte_carlo);
criterion_main!(benches);
