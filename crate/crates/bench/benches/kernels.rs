use std::hint::black_box;

use bgcn_core::backbone::{BackboneConfig, ForecastModel, GraphModule};
use bgcn_core::bgcn::{sample_graph, BayesianGraph};
use bgcn_core::gvae::{gvae_train, DistanceMatrix, GvaeConfig};
use bgcn_core::map_graph::{solve_map_graph, MapGraphConfig};
use bgcn_core::rng::{stream, stream_rng};
use bgcn_core::synthetic::{generate, SyntheticSpec};
use criterion::{criterion_group, criterion_main, Criterion};
use ndarray::{Array2, Array3};

fn ring(n: usize) -> Array2<f64> {
    Array2::from_shape_fn((n, n), |(i, j)| {
        if i == j {
            0.5
        } else if (i + 1) % n == j || (j + 1) % n == i {
            0.25
        } else {
            0.0
        }
    })
}

fn map_solver(c: &mut Criterion) {
    let n = 20;
    let z = Array2::from_shape_fn((n, n), |(i, j)| {
        if i == j {
            0.0
        } else {
            1.0 + ((i * 7 + j * 7) % 11) as f64 / 5.0
        }
    });
    let z = DistanceMatrix::new(z).unwrap();
    let cfg = MapGraphConfig::default();
    c.bench_function("map_solve_n20", |b| b.iter(|| solve_map_graph(black_box(&z), &cfg).unwrap()));
}

fn gvae(c: &mut Criterion) {
    let data = generate(&SyntheticSpec {
        days: 1,
        ..SyntheticSpec::default()
    })
    .unwrap();
    let road = bgcn_core::data::RoadGraph::new(data.tensor.node_ids.clone(), data.distances.clone(), 0.1)
        .unwrap();
    let cfg = GvaeConfig {
        epochs: 20,
        ..GvaeConfig::default()
    };
    c.bench_function("gvae_20_epochs_n20", |b| b.iter(|| gvae_train(black_box(&road), &cfg).unwrap()));
}

fn sampler(c: &mut Criterion) {
    let bg = BayesianGraph::new(ring(207), 0.5, 0).unwrap();
    let mut rng = stream_rng(0, stream::DROPOUT, 0);
    c.bench_function("sample_graph_n207", |b| b.iter(|| sample_graph(black_box(&bg), true, &mut rng)));
}

fn forward_backward(c: &mut Criterion) {
    let n = 20;
    let cfg = BackboneConfig {
        residual_channels: 8,
        skip_channels: 32,
        end_channels: 64,
        ..BackboneConfig::new(n)
    };
    let graph = GraphModule::Bayesian(BayesianGraph::new(ring(n), 0.5, 0).unwrap());
    let model = ForecastModel::new(cfg, graph, 0).unwrap();
    let x = Array3::from_shape_fn((n, 12, 1), |(i, t, _)| ((i + t) as f64 * 0.3).sin());
    let base = model.graph.expected();
    let mut rng = stream_rng(0, stream::DROPOUT, 1);
    let masks = model.draw_masks(&mut rng);
    c.bench_function("forward_n20", |b| {
        b.iter(|| model.forward_sample(black_box(x.view()), &base, &masks).unwrap())
    });
    let (out, cache) = model.forward_sample(x.view(), &base, &masks).unwrap();
    let dout = out.mapv(f64::signum);
    c.bench_function("backward_n20", |b| {
        b.iter(|| model.backward_sample(black_box(&cache), &base, &masks, dout.view()))
    });
}

criterion_group!(benches, map_solver, gvae, sampler, forward_backward);
criterion_main!(benches);
