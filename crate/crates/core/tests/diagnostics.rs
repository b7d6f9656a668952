use fastdad_core::data::ModelSpace;
use fastdad_core::datasets::spiral;
use fastdad_core::density::{DensityModel, ModelConfig};
use fastdad_core::diagnostics::{diagnostics_suite, mmd, sample_fidelity, MmdConfig};
use fastdad_core::gibbs::{generate, GibbsConfig};
use rand::seq::SliceRandom;
use rand::{Rng, SeedableRng};
use rand_chacha::ChaCha8Rng;

fn points(n: usize, shift: f64, rng: &mut ChaCha8Rng) -> Vec<Vec<f64>> {
    (0..n).map(|_| vec![rng.random_range(-1.0..1.0) + shift, rng.random_range(-1.0..1.0)]).collect()
}

#[test]
fn mmd_is_symmetric_and_permutation_invariant() {
    let mut rng = ChaCha8Rng::seed_from_u64(3);
    let cfg = MmdConfig::default();
    let x = points(30, 0.0, &mut rng);
    let y = points(20, 0.7, &mut rng);
    let a = mmd(&x, &y, &cfg).unwrap();
    assert!(a > 0.0);
    assert!((a - mmd(&y, &x, &cfg).unwrap()).abs() < 1e-12);
    let mut xp = x.clone();
    xp.shuffle(&mut rng);
    assert!((a - mmd(&xp, &y, &cfg).unwrap()).abs() < 1e-12);
    // farther apart, larger discrepancy
    let z = points(20, 3.0, &mut rng);
    assert!(mmd(&x, &z, &cfg).unwrap() > a);
    assert!(mmd(&x, &[vec![0.0]], &cfg).is_err());
    assert!(mmd(&x, &[], &cfg).is_err());
}

#[test]
fn suite_reports_identity_at_zero_rounds() {
    let train = spiral(200, 1);
    let heldout = spiral(200, 2);
    let mut model = DensityModel::new(ModelConfig { n_layers: 1, ..ModelConfig::small() }, ModelSpace::fit(&train), train.schema().fingerprint(), 3).unwrap();
    model.jitter(4, 0.2);
    let report = diagnostics_suite(&model, &train, &heldout, &[0, 1, 3], 5, &MmdConfig::default()).unwrap();
    assert_eq!(report.rows.len(), 3);
    assert_eq!(report.rows[0].diffusion, 0.0);
    assert!(report.rows[0].mmd < 1e-6);
    assert!(report.rows[1].diffusion > 0.0);
    for r in &report.rows {
        assert!((0.0..=0.5).contains(&r.fidelity.fidelity));
        assert!((r.fidelity.fidelity + r.fidelity.fidelity_score - 0.5).abs() < 1e-12);
    }
    for col in [
        report.normalized.iter().map(|r| r.mmd).collect::<Vec<_>>(),
        report.normalized.iter().map(|r| r.diffusion).collect(),
    ] {
        assert!(col.iter().all(|v| (0.0..=1.0).contains(v)));
        assert_eq!(col.iter().cloned().fold(f64::INFINITY, f64::min), 0.0);
        assert_eq!(col.iter().cloned().fold(f64::NEG_INFINITY, f64::max), 1.0);
    }
    assert_eq!(report, diagnostics_suite(&model, &train, &heldout, &[0, 1, 3], 5, &MmdConfig::default()).unwrap());
}

#[test]
fn fidelity_needs_ten_rows_per_side_and_is_seeded() {
    let train = spiral(100, 7);
    let real = spiral(60, 8);
    let idx: Vec<usize> = (0..60).collect();
    let (val, test) = (real.select_rows(&idx[..30]), real.select_rows(&idx[30..]));
    let model = DensityModel::new(ModelConfig { n_layers: 1, ..ModelConfig::small() }, ModelSpace::fit(&train), train.schema().fingerprint(), 1).unwrap();
    let fake = generate(&model, &train, &GibbsConfig { rounds: 1, target_count: 100, seed: 2 }).unwrap().features;
    let rows: Vec<usize> = (0..100).collect();
    let (a, b) = (fake.select_rows(&rows[..50]), fake.select_rows(&rows[50..]));
    let first = sample_fidelity(&train, &val, &test, &a, &b, 9).unwrap();
    assert_eq!(first, sample_fidelity(&train, &val, &test, &a, &b, 9).unwrap());
    assert!((0.0..=0.5).contains(&first.fidelity));
    assert!(sample_fidelity(&train, &val, &test, &a.select_rows(&rows[..9]), &b, 9).is_err());
    assert!(sample_fidelity(&train, &val.select_rows(&idx[..5]), &test, &a, &b, 9).is_err());
}
