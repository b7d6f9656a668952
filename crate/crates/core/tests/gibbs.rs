mod common;

use fastdad_core::data::{ColumnData, ColumnKind, ColumnSpec, ModelSpace, Schema, Table, TaskKind};
use fastdad_core::datasets::spiral;
use fastdad_core::density::{fit, DensityModel, ModelConfig};
use fastdad_core::gibbs::{diffusion_of, generate, GibbsConfig};
use fastdad_core::rng::child_seed;
use rand::{Rng, SeedableRng};
use rand_chacha::ChaCha8Rng;
use rand_distr::StandardNormal;

fn quick(max_epochs: usize) -> ModelConfig {
    ModelConfig { n_layers: 2, n_components: 20, max_epochs, patience: 10, ..ModelConfig::small() }
}

fn mixed(n: usize, seed: u64) -> Table {
    let mut rng = ChaCha8Rng::seed_from_u64(seed);
    let schema = Schema::new(
        vec![
            ColumnSpec { name: "u".into(), kind: ColumnKind::Numeric },
            ColumnSpec { name: "c".into(), kind: ColumnKind::Categorical { categories: vec!["a".into(), "b".into(), "c".into(), "d".into()] } },
            ColumnSpec { name: "y".into(), kind: ColumnKind::Numeric },
        ],
        2,
        TaskKind::Regression,
    )
    .unwrap();
    let u: Vec<f64> = (0..n).map(|_| rng.random_range(-50.0..50.0)).collect();
    let c: Vec<u32> = (0..n).map(|_| rng.random_range(0..4)).collect();
    let y = u.iter().map(|v| v * 2.0).collect();
    Table::new(schema, vec![ColumnData::Numeric(u), ColumnData::Categorical(c), ColumnData::Numeric(y)]).unwrap()
}

fn untrained(train: &Table, seed: u64) -> DensityModel {
    let mut m = DensityModel::new(quick(1), ModelSpace::fit(train), train.schema().fingerprint(), seed).unwrap();
    m.jitter(seed, 0.1);
    m
}

#[test]
fn zero_rounds_returns_training_rows() {
    let train = mixed(60, 1);
    let model = untrained(&train, 2);
    let aug = generate(&model, &train, &GibbsConfig { rounds: 0, target_count: 60, seed: 3 }).unwrap();
    assert_eq!(aug.features, train.features());
    assert!(aug.provenance.iter().enumerate().all(|(j, p)| p.origin_row == j && p.rounds == 0));
    assert_eq!(diffusion_of(&aug, &train).unwrap(), 0.0);
}

#[test]
fn generation_is_deterministic_per_seed() {
    let train = mixed(40, 4);
    let model = untrained(&train, 5);
    let cfg = GibbsConfig { rounds: 2, target_count: 100, seed: 6 };
    let a = generate(&model, &train, &cfg).unwrap();
    assert_eq!(a.len(), 100);
    assert_eq!(a, generate(&model, &train, &cfg).unwrap());
    let b = generate(&model, &train, &GibbsConfig { seed: 7, ..cfg }).unwrap();
    assert_ne!(a.features, b.features);
    let d = diffusion_of(&a, &train).unwrap();
    assert!(d > 0.0 && d.is_finite());
    // categorical cells decode to valid codes
    assert!(a.features.rows().all(|r| (0.0..4.0).contains(&r[1]) && r[1].fract() == 0.0));
}

#[test]
fn wrong_schema_is_rejected() {
    let train = mixed(20, 8);
    let model = untrained(&train, 9);
    let other = common::identity_regression(20, 1);
    assert!(generate(&model, &other, &GibbsConfig { rounds: 1, target_count: 20, seed: 0 }).is_err());
    assert!(generate(&model, &train, &GibbsConfig { rounds: 1, target_count: 0, seed: 0 }).is_err());
}

#[test]
fn duplicated_column_stays_on_the_diagonal() {
    let mut rng = ChaCha8Rng::seed_from_u64(11);
    let make = |n: usize, rng: &mut ChaCha8Rng| {
        let x: Vec<f64> = (0..n).map(|_| rng.sample(StandardNormal)).collect();
        common::table(&[x.clone(), x.clone()], ColumnData::Numeric(x), TaskKind::Regression)
    };
    let train = make(600, &mut rng);
    let val = make(150, &mut rng);
    let model = fit(&train, &val, &quick(40), 12).unwrap();
    let aug = generate(&model, &train, &GibbsConfig { rounds: 5, target_count: 600, seed: 13 }).unwrap();
    let space = ModelSpace::fit(&train);
    let gap = aug.features.rows().map(|r| {
        let z = space.embed(r);
        (z[1] - z[0]).abs()
    });
    let mean = gap.sum::<f64>() / aug.len() as f64;

    // model-free baseline: pair each x1 with an independent x2
    let z = space.embed_all(&train.features());
    let shuffle = (0..z.len()).map(|r| (z[r][0] - z[(r * 7 + 3) % z.len()][1]).abs()).sum::<f64>() / z.len() as f64;
    assert!(mean < 0.2, "mean |x2 - x1| = {mean}, shuffle baseline {shuffle}");
    assert!(shuffle > 0.8);
}

#[test]
fn diffusion_grows_with_rounds_on_the_spiral() {
    let rounds = [1usize, 5, 10];
    let mut mean = [0.0; 3];
    for seed in 0..5u64 {
        let train = spiral(400, child_seed(seed, &[1]));
        let val = spiral(100, child_seed(seed, &[2]));
        let model = fit(&train, &val, &quick(25), seed).unwrap();
        for (slot, &k) in mean.iter_mut().zip(&rounds) {
            let aug = generate(&model, &train, &GibbsConfig { rounds: k, target_count: 4000, seed }).unwrap();
            *slot += diffusion_of(&aug, &train).unwrap() / 5.0;
        }
    }
    eprintln!("mean diffusion k=1,5,10: {mean:?}");
    assert!(mean[0] > 0.0);
    assert!(mean.windows(2).all(|w| w[1] >= w[0]), "{mean:?}");
}
