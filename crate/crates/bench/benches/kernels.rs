use criterion::{criterion_group, criterion_main, BatchSize, Criterion};
use fastdad_bench::spiral_model;
use fastdad_core::data::ModelSpace;
use fastdad_core::datasets::Bundled;
use fastdad_core::diagnostics::{mmd, MmdConfig};
use fastdad_core::gibbs::{gibbs_round, ChainState};
use fastdad_core::learners::tree::{Targets, Tree, TreeConfig};
use fastdad_core::rng::substream;

fn density(c: &mut Criterion) {
    let (model, train) = spiral_model(256, 1);
    let space = model.space().clone();
    let rows: Vec<Vec<f64>> = train.features().rows().take(64).map(|r| space.embed(r)).collect();
    c.bench_function("forward_conditionals/64x2", |b| b.iter(|| model.forward_conditionals(&rows, 0).unwrap()));
    c.bench_function("backward/64x2", |b| b.iter(|| model.backward(&rows, 1).unwrap()));

    let first = train.features().rows().next().unwrap().to_vec();
    c.bench_function("gibbs_round/d2", |b| {
        b.iter_batched(
            || ChainState::start(&space, &first, 0, 0, 7),
            |mut chain| gibbs_round(&model, &mut chain).unwrap(),
            BatchSize::SmallInput,
        )
    });
}

fn kernels(c: &mut Criterion) {
    let a = Bundled::Spiral.generate(500, 2);
    let b = Bundled::Spiral.generate(500, 3);
    let space = ModelSpace::fit(&a);
    let x = space.embed_all(&a.features());
    let y = space.embed_all(&b.features());
    let cfg = MmdConfig::default();
    c.bench_function("mmd/500x500", |bch| bch.iter(|| mmd(&x, &y, &cfg).unwrap()));
}

fn trees(c: &mut Criterion) {
    let t = Bundled::Friedman.generate(2000, 4);
    let x = t.features();
    let y = t.target_values();
    let rows: Vec<usize> = (0..t.n_rows()).collect();
    let cfg = TreeConfig { max_depth: Some(6), min_leaf: 1, max_features: None };
    c.bench_function("tree_fit/friedman2000", |b| {
        b.iter(|| {
            let mut rng = substream(5, &[1]);
            Tree::fit(&x, Targets { values: &y, dim: 1 }, &rows, &cfg, &mut rng)
        })
    });
}

criterion_group! {
    name = benches;
    config = Criterion::default().sample_size(20);
    targets = density, kernels, trees
}
criterion_main!(benches);
