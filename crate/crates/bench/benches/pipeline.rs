//! Hot-path benchmarks: single link evaluation, the attention scoring
//! pipeline at its rated width, and whole episodes under the baseline and
//! prompt-driven policies.

use criterion::{criterion_group, criterion_main, BatchSize, Criterion};
use std::hint::black_box;

use uavsim_bench::{attention_params, channel_params, episode_config, feature_matrix};
use uavsim_core::attention::{score_sensors, top_k_select};
use uavsim_core::channel::link_quality;
use uavsim_core::{run_episode, PolicyKind};

fn bench_link_quality(c: &mut Criterion) {
    let params = channel_params();
    let uav = [12.0, 34.0, 30.0];
    let sensor = [56.0, 78.0];

    c.bench_function("link_quality", |b| {
        b.iter(|| {
            link_quality(black_box(uav), black_box(sensor), black_box(&params))
                .expect("in-domain geometry")
        })
    });
}

fn bench_score_sensors(c: &mut Criterion) {
    let features = feature_matrix(16);
    let params = attention_params(8);

    c.bench_function("score_sensors_n16", |b| {
        b.iter(|| {
            score_sensors(black_box(&features), black_box(&params)).expect("valid instance")
        })
    });

    c.bench_function("score_and_select_top4_n16", |b| {
        b.iter_batched(
            || (),
            |_| {
                let scores =
                    score_sensors(black_box(&features), black_box(&params)).expect("valid instance");
                top_k_select(scores.as_slice().expect("contiguous scores"), 4)
                    .expect("k within range")
            },
            BatchSize::SmallInput,
        )
    });
}

fn bench_full_episode(c: &mut Criterion) {
    let cfg = episode_config();

    let mut group = c.benchmark_group("episode");
    group.sample_size(20);
    group.bench_function("greedy_30_steps", |b| {
        b.iter(|| run_episode(black_box(&cfg), black_box(5), PolicyKind::Greedy).expect("runs"))
    });
    group.bench_function("icl_mock_30_steps", |b| {
        b.iter(|| run_episode(black_box(&cfg), black_box(5), PolicyKind::Icl).expect("runs"))
    });
    group.finish();
}

criterion_group!(benches, bench_link_quality, bench_score_sensors, bench_full_episode);
criterion_main!(benches);
