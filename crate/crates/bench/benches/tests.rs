use criterion::{criterion_group, criterion_main, BenchmarkId, Criterion};

use shaplit_bench::boolean_case;
use shaplit_core::explain::{explain_players, SummandConfig};
use shaplit_core::games::Coalition;
use shaplit_core::testing::{shaplit, ShaplitConfig};

fn single_test(c: &mut Criterion) {
    let case = boolean_case(2, 5);
    let coalition = Coalition::from_bits(10, 1 << 5).unwrap();
    let mut group = c.benchmark_group("shaplit");
    for k in [99, 999] {
        group.bench_with_input(BenchmarkId::new("k", k), &k, |b, &k| {
            b.iter(|| {
                shaplit(
                    &case.predictor,
                    &case.x,
                    0,
                    coalition,
                    &case.masker,
                    &ShaplitConfig::new(k, 1, 7),
                )
                .unwrap()
            })
        });
    }
    group.finish();
}

fn all_summands(c: &mut Criterion) {
    let case = boolean_case(2, 3);
    let cfg = SummandConfig {
        k: 99,
        l: 1,
        m: 99,
        alpha: 0.05,
        seed: 5,
    };
    c.bench_function("explain/boolean_6_player0", |b| {
        b.iter(|| explain_players(&case.predictor, &case.x, &case.masker, &[0], &cfg).unwrap())
    });
}

criterion_group! {
    name = benches;
    config = Criterion::default().sample_size(10);
    targets = single_test, all_summands
}
criterion_main!(benches);
