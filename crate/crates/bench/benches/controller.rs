use std::hint::black_box;

use criterion::{criterion_group, criterion_main, Criterion};
use rand::{Rng, SeedableRng};
use rand_chacha::ChaCha8Rng;

use dualpolicy::cognitive::{discretize, CognitiveState, VisitationTable};
use dualpolicy::controller::{should_activate_s2, ControllerConfig};

fn inputs(count: usize) -> Vec<(CognitiveState, f64)> {
    let mut rng = ChaCha8Rng::seed_from_u64(11);
    (0..count)
        .map(|_| {
            let c = CognitiveState::new(rng.random(), rng.random(), rng.random());
            (c, rng.random())
        })
        .collect()
}

fn switching(c: &mut Criterion) {
    let xs = inputs(1024);
    let config = ControllerConfig::default();
    c.bench_function("discretize_and_decide_1024", |b| {
        let mut rng = ChaCha8Rng::seed_from_u64(12);
        b.iter(|| {
            let mut table = VisitationTable::new();
            let mut s2 = 0u32;
            for (state, p) in &xs {
                let cell = discretize(state, config.bins);
                let n = table.count(&cell);
                let d = should_activate_s2(n, table.total() + 1, *p, &config, &mut rng);
                table.visit(cell);
                s2 += u32::from(d.use_s2);
            }
            black_box(s2)
        })
    });
}

criterion_group!(benches, switching);
criterion_main!(benches);
