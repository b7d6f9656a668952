mod common;

use fastdad_core::augment::{assemble, hunge_labels, munge, nearest_neighbors, teacher_label, DistillSet, MungeParams, Origin, SoftTargets};
use fastdad_core::data::{ColumnData, ColumnKind, FeatureColumn, Features, TaskKind};
use fastdad_core::learners::{fit_forest, ForestConfig, Learner};

fn numeric(n_cols: usize, data: Vec<f64>) -> Features {
    let cols = (0..n_cols).map(|j| FeatureColumn { name: format!("x{j}"), kind: ColumnKind::Numeric }).collect();
    Features::new(cols, data).unwrap()
}

fn forest_teacher(train: &fastdad_core::data::Table) -> Learner {
    let dset = DistillSet::from_table(train).unwrap();
    let config = ForestConfig { n_trees: 20, seed: 1, ..ForestConfig::default() };
    Learner::Forest(fit_forest(&dset, train.task(), &config).unwrap())
}

#[test]
fn three_point_neighbours() {
    let f = numeric(2, vec![0.0, 0.0, 0.1, 0.0, 5.0, 5.0]);
    assert_eq!(nearest_neighbors(&f).unwrap(), vec![1, 0, 1]);
}

#[test]
fn full_swap_with_vanishing_spread_exchanges_two_points() {
    let t = common::table(&[vec![0.0, 10.0]], ColumnData::Numeric(vec![1.0, 2.0]), TaskKind::Regression);
    let aug = munge(&t, MungeParams::new(1.0, f64::INFINITY).unwrap(), 1, 3).unwrap();
    assert_eq!(aug.features.row(0), &[10.0]);
    assert_eq!(aug.features.row(1), &[0.0]);
}

#[test]
fn numeric_draws_center_on_the_neighbour() {
    // row 0 draws from Normal(10, (10 / s)^2) whenever it swaps
    let t = common::table(&[vec![0.0, 10.0]], ColumnData::Numeric(vec![1.0, 2.0]), TaskKind::Regression);
    let s = 2.0;
    let aug = munge(&t, MungeParams::new(1.0, s).unwrap(), 4000, 5).unwrap();
    let draws: Vec<f64> = aug.provenance.iter().zip(aug.features.rows()).filter(|(p, _)| p.origin_row == 0).map(|(_, r)| r[0]).collect();
    let n = draws.len() as f64;
    let mean = draws.iter().sum::<f64>() / n;
    let sd = (draws.iter().map(|v| (v - mean).powi(2)).sum::<f64>() / n).sqrt();
    assert_eq!(draws.len(), 4000);
    assert!((mean - 10.0).abs() < 0.25, "mean {mean}");
    assert!((sd - 5.0).abs() < 0.25, "sd {sd}");
}

#[test]
fn swap_probability_sets_the_change_rate() {
    let t = common::three_class(50, 2);
    let aug = munge(&t, MungeParams::new(0.25, 1.0).unwrap(), 40, 6).unwrap();
    let x = t.features();
    let changed = aug
        .provenance
        .iter()
        .zip(aug.features.rows())
        .flat_map(|(p, r)| r.iter().zip(x.row(p.origin_row)).map(|(a, b)| (a != b) as usize).collect::<Vec<_>>())
        .sum::<usize>() as f64;
    let rate = changed / (aug.len() * 2) as f64;
    assert!((rate - 0.25).abs() < 0.02, "{rate}");
}

#[test]
fn hard_labels_are_one_hot_teacher_argmax() {
    let train = common::three_class(120, 3);
    let teacher = forest_teacher(&train);
    let aug = munge(&train, MungeParams::new(0.5, 1.0).unwrap(), 2, 4).unwrap();
    let soft = teacher_label(&teacher, &aug.features, train.task()).unwrap();
    let hard = hunge_labels(&teacher, &aug).unwrap();
    assert_eq!(hard.argmax(), soft.argmax());
    assert!(hard.values().iter().all(|v| *v == 0.0 || *v == 1.0));
    for r in 0..hard.len() {
        assert_eq!(hard.row(r).iter().sum::<f64>(), 1.0);
        assert!((soft.row(r).iter().sum::<f64>() - 1.0).abs() < 1e-6);
    }

    let reg = common::identity_regression(30, 1);
    let reg_teacher = forest_teacher(&reg);
    let reg_aug = munge(&reg, MungeParams::new(0.5, 1.0).unwrap(), 1, 4).unwrap();
    assert!(hunge_labels(&reg_teacher, &reg_aug).is_err());
}

#[test]
fn binary_teacher_targets_are_positive_class_scalars() {
    let mut t = common::three_class(100, 9);
    let labels: Vec<u32> = t.class_labels().unwrap().iter().map(|&c| (c == 2) as u32).collect();
    t = common::table(
        &[t.features().rows().map(|r| r[0]).collect(), t.features().rows().map(|r| r[1]).collect()],
        ColumnData::Categorical(labels),
        TaskKind::Binary,
    );
    let teacher = forest_teacher(&t);
    let targets = teacher_label(&teacher, &t.features(), TaskKind::Binary).unwrap();
    assert!(matches!(targets, SoftTargets::Scalar { .. }));
    assert_eq!(targets, teacher.predict(&t.features()).unwrap());
    assert!(targets.values().iter().all(|v| (0.0..=1.0).contains(v)));
    assert!(teacher_label(&teacher, &t.features(), TaskKind::Multiclass { classes: 3 }).is_err());
}

#[test]
fn self_agreement_matches_training_accuracy() {
    let train = common::three_class(150, 12);
    let teacher = forest_teacher(&train);
    let probs = teacher_label(&teacher, &train.features(), train.task()).unwrap();
    let labels = train.class_labels().unwrap();
    let agree = probs.argmax().iter().zip(labels).filter(|(a, b)| a == b).count() as f64 / labels.len() as f64;
    assert_eq!(agree, teacher.evaluate(&train).unwrap());
}

#[test]
fn assemble_orders_real_then_augmented() {
    let train = common::three_class(2, 0);
    let aug = numeric(2, vec![0.1, 0.2, 0.3, 0.4, 0.5, 0.6]);
    let targets = SoftTargets::prob_vectors(3, vec![0.2, 0.3, 0.5, 1.0, 0.0, 0.0, 0.1, 0.1, 0.8]).unwrap();
    let d = assemble(&train, &aug, &targets).unwrap();
    assert_eq!(d.len(), 5);
    assert_eq!(d.origin, vec![Origin::Real, Origin::Real, Origin::Augmented, Origin::Augmented, Origin::Augmented]);
    assert_eq!(d.features.row(2), &[0.1, 0.2]);
    for r in 0..5 {
        assert!((d.targets.row(r).iter().sum::<f64>() - 1.0).abs() < 1e-6);
    }
    let labels = train.class_labels().unwrap();
    for r in 0..2 {
        assert_eq!(d.targets.row(r)[labels[r] as usize], 1.0);
    }

    let empty = numeric(2, vec![]);
    let none = assemble(&train, &empty, &SoftTargets::prob_vectors(3, vec![]).unwrap()).unwrap();
    assert_eq!(none, DistillSet::from_table(&train).unwrap());

    assert!(assemble(&train, &aug, &SoftTargets::scalar(vec![0.0, 1.0, 0.5])).is_err());
    assert!(assemble(&train, &aug, &SoftTargets::prob_vectors(3, vec![1.0, 0.0, 0.0]).unwrap()).is_err());
}
