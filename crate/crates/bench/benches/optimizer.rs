use std::collections::BTreeMap;

use criterion::{criterion_group, criterion_main, Criterion};
use hypersearch::space::parse_space;
use hypersearch::tpe::{suggest_random, tpe_suggest};
use hypersearch::{HpoaConfig, Trial, TrialStatus, Value};
use rand::{Rng, SeedableRng};
use rand_chacha::ChaCha8Rng;

const SPACE: &str = "x = uniform(-5, 5)\ny = choice(normal(0, 1), lognormal(0, 1))\nk = randint(1, 8)\n";

fn history(n: u64) -> Vec<Trial> {
    let mut rng = ChaCha8Rng::seed_from_u64(0);
    (0..n)
        .map(|i| {
            let x: f64 = rng.random_range(-5.0..5.0);
            let mut assignment = BTreeMap::from([
                ("x".to_string(), Value::Real(x)),
                ("k".to_string(), Value::Int(rng.random_range(1..=8))),
            ]);
            let branch = rng.random_range(0..2usize);
            assignment.insert("y".to_string(), Value::Index(branch));
            let label = if branch == 0 { "y.0.normal" } else { "y.1.lognormal" };
            assignment.insert(label.to_string(), Value::Real(rng.random_range(0.1..3.0)));
            Trial {
                trial_id: i,
                born_order: i,
                status: TrialStatus::Ok,
                seed: i,
                loss: Some((x - 3.0) * (x - 3.0)),
                assignment,
                annotations: BTreeMap::new(),
            }
        })
        .collect()
}

fn bench_optimizer(c: &mut Criterion) {
    let graph = parse_space(SPACE).unwrap();

    c.bench_function("parse_space", |b| {
        b.iter(|| parse_space(std::hint::black_box(SPACE)).unwrap())
    });

    let empty: Vec<Trial> = Vec::new();
    c.bench_function("suggest_random", |b| {
        b.iter(|| suggest_random(&graph, &empty, 7).unwrap())
    });

    for n in [100u64, 400] {
        let snapshot = history(n);
        c.bench_function(&format!("tpe_suggest_{n}_trials"), |b| {
            b.iter(|| tpe_suggest(&graph, std::hint::black_box(&snapshot), &HpoaConfig::with_seed(7)).unwrap())
        });
    }
}

criterion_group!(benches, bench_optimizer);
criterion_main!(benches);
