use std::hint::black_box;

use criterion::{criterion_group, criterion_main, Criterion};
use pcc_core::align::fit_affine;
use pcc_core::chartnet::{build_model, gradient};
use pcc_core::distgraph::build_sparse_matrix;
use pcc_core::mesh::{synth_cir, CirSynth};
use pcc_core::motion::{gen_trajectory, simulate_pdr};
use pcc_core::{ArchSpec, ChannelModel, DriftParams, MeshLayout, Vec2};

fn inputs(count: usize, len: usize) -> Vec<Vec<f64>> {
    (0..count)
        .map(|k| {
            (0..len)
                .map(|i| ((i * 37 + k * 11) % 101) as f64 / 101.0)
                .collect()
        })
        .collect()
}

fn network(c: &mut Criterion) {
    let arch = ArchSpec::desk(14);
    let params = build_model(&arch, 0).unwrap();
    let xs = inputs(16, arch.tap_count * arch.link_count);
    let refs: Vec<&[f64]> = xs.iter().map(Vec::as_slice).collect();
    let mut g = c.benchmark_group("desk_network");
    g.sample_size(20);
    g.bench_function("forward", |b| {
        b.iter(|| params.forward(black_box(refs[0])).unwrap())
    });
    g.bench_function("gradient_batch16", |b| {
        b.iter(|| {
            gradient(&params, black_box(&refs), |out| {
                (0.0, vec![Vec2::new(1.0, -1.0); out.len()])
            })
            .unwrap()
        })
    });
    g.finish();
}

fn channel(c: &mut Criterion) {
    let layout = MeshLayout::office();
    let model = ChannelModel::default();
    let synth = CirSynth::new(&layout, &model).unwrap();
    let target = Some(Vec2::new(5.0, 4.0));
    c.bench_function("cir_frame", |b| {
        b.iter(|| synth.frame(black_box(target), 0.0, 7).unwrap())
    });
    c.bench_function("synth_cir_cold", |b| {
        b.iter(|| synth_cir(&layout, &model, black_box(target), 7).unwrap())
    });
}

fn distances(c: &mut Criterion) {
    let zone = MeshLayout::office().zone;
    let traj = gen_trajectory(&zone, 600.0, 1.0, 40.0, 1).unwrap();
    let track = simulate_pdr(&traj, &DriftParams::default(), 2).unwrap();
    let mut g = c.benchmark_group("distance_matrix");
    g.sample_size(10);
    g.bench_function("ten_minutes_window40_stride8", |b| {
        b.iter(|| build_sparse_matrix(black_box(&track), 40.0, 8).unwrap())
    });
    g.finish();

    let chart: Vec<Vec2> = traj.iter().step_by(100).map(|s| s.pos() * 0.7).collect();
    let world: Vec<Vec2> = traj.iter().step_by(100).map(|s| s.pos()).collect();
    c.bench_function("fit_affine_240", |b| {
        b.iter(|| fit_affine(black_box(&chart), &world).unwrap())
    });
}

criterion_group!(benches, network, channel, distances);
criterion_main!(benches);
