use std::path::Path;

use fastdad_core::data::write_table_csv;
use fastdad_core::datasets::{friedman, Bundled};
use fastdad_core::experiment::{emit_report, load_report, report_csv, run_experiment, DatasetSpec, ExperimentConfig, Strategy};
use fastdad_core::learners::StudentKind;

fn bundled(b: Bundled, rows: usize) -> DatasetSpec {
    DatasetSpec { path: None, test_path: None, target: None, bundled: Some(b), rows, test_rows: 200, test_fraction: 0.2, seed: 1 }
}

fn light(mut c: ExperimentConfig) -> ExperimentConfig {
    c.learners.mlp.hidden = vec![16];
    c.learners.mlp.max_epochs = 15;
    c.learners.forest.n_trees = 8;
    c.learners.gbm.n_rounds = 15;
    c.teacher.folds = 3;
    c.teacher.meta.n_rounds = 15;
    c.density.n_layers = Some(1);
    c.density.d_hidden = Some(16);
    c.density.n_components = Some(8);
    c.density.max_epochs = Some(2);
    c.latency.enabled = false;
    c
}

#[test]
fn base_only_skips_teacher_and_density() {
    let c = light(ExperimentConfig::new(bundled(Bundled::Friedman, 150), vec![Strategy::Base], vec![0, 1]));
    let out = run_experiment(&c, Path::new("."), |_| {}).unwrap();
    let r = &out.report;
    assert!(r.teachers.is_empty() && r.density_fits.is_empty());
    assert_eq!(r.metric, "r2_pct");
    assert_eq!(r.cells.len(), 6);
    assert_eq!(r.selected.len(), 2);
    assert_eq!(r.augmented_rows, 0);
    assert_eq!((r.n_train, r.n_val, r.n_test), (135, 15, 200));
    assert!(out.latency.entries.is_empty());
    // Selected is the best validation cell of its seed
    for s in &r.selected {
        let best = r.cells.iter().filter(|c| c.seed == s.seed).filter_map(|c| c.val_metric).fold(f64::NEG_INFINITY, f64::max);
        assert_eq!(s.val_metric, Some(best));
    }
}

#[test]
fn every_strategy_runs_and_reports() {
    let mut c = light(ExperimentConfig::new(
        bundled(Bundled::Checkerboard, 120),
        vec![Strategy::Base, Strategy::Know, Strategy::Munge, Strategy::Hunge, Strategy::Gib(1)],
        vec![0],
    ));
    c.students = vec![StudentKind::Forest, StudentKind::Gbm];
    c.multiplier = 2;
    c.munge_grid.truncate(2);
    c.latency.enabled = true;
    c.latency.rows = 50;
    c.latency.repetitions = 3;
    let out = run_experiment(&c, Path::new("."), |_| {}).unwrap();
    let r = &out.report;
    assert_eq!(r.metric, "accuracy_pct");
    assert_eq!(r.augmented_rows, 2 * r.n_train);
    assert_eq!(r.cells.len(), 10);
    assert!(r.cells.iter().all(|cell| !cell.failed));
    for cell in &r.cells {
        let munged = matches!(cell.strategy, Strategy::Munge | Strategy::Hunge);
        assert_eq!(cell.munge.is_some(), munged);
        if let Some(p) = cell.munge {
            assert!(c.munge_grid.contains(&p));
        }
        let expected = if matches!(cell.strategy, Strategy::Base | Strategy::Know) { r.n_train } else { 3 * r.n_train };
        assert_eq!(cell.train_rows, Some(expected), "{:?}", cell.strategy);
    }
    assert_eq!(r.teachers.len(), 1);
    assert_eq!(r.density_fits.len(), 1);
    assert_eq!(r.ranks.len(), 5);
    assert_eq!(r.versus_base.len(), 4);
    // teacher plus one entry per (strategy, student)
    assert_eq!(out.latency.entries.len(), 11);
}

#[test]
fn failed_cells_are_recorded_and_rendered() {
    let mut c = light(ExperimentConfig::new(bundled(Bundled::Spiral, 100), vec![Strategy::Base], vec![3]));
    c.learners.mlp.batch_size = 0;
    let out = run_experiment(&c, Path::new("."), |_| {}).unwrap();
    let mlp = out.report.cells.iter().find(|c| c.student == StudentKind::Mlp).unwrap();
    assert!(mlp.failed && mlp.error.is_some() && mlp.val_metric.is_none());
    assert_ne!(out.report.selected[0].student, Some(StudentKind::Mlp));
    let csv = report_csv(&out.report);
    let lines: Vec<&str> = csv.lines().collect();
    assert_eq!(lines[0], "strategy,model,test_mean,test_stderr,val_mean,n_ok,n_failed,average_rank");
    assert_eq!(lines.len(), 1 + 4);
    let mlp_line = lines.iter().find(|l| l.starts_with("BASE,mlp,")).unwrap();
    assert_eq!(*mlp_line, "BASE,mlp,FAILED,FAILED,FAILED,0,1,");
    assert!(lines.iter().any(|l| l.starts_with("BASE,selected,") && l.ends_with(",1.00")));
}

#[test]
fn csv_inputs_are_hashed_and_reports_round_trip() {
    let dir = tempfile::tempdir().unwrap();
    write_table_csv(&dir.path().join("train.csv"), &friedman(120, 4)).unwrap();
    let mut spec = bundled(Bundled::Friedman, 0);
    spec.bundled = None;
    spec.path = Some("train.csv".into());
    let mut c = light(ExperimentConfig::new(spec, vec![Strategy::Base], vec![0]));
    c.students = vec![StudentKind::Gbm];
    let out = run_experiment(&c, dir.path(), |_| {}).unwrap();
    assert_eq!(out.report.n_test, 24);
    assert_eq!(out.report.n_train + out.report.n_val, 96);

    let written = emit_report(&out.report, Some(&out.latency), &dir.path().join("out")).unwrap();
    assert_eq!(written.len(), 3);
    assert_eq!(load_report(&dir.path().join("out/report.json")).unwrap(), out.report);

    write_table_csv(&dir.path().join("train.csv"), &friedman(120, 5)).unwrap();
    let other = run_experiment(&c, dir.path(), |_| {}).unwrap();
    assert_ne!(other.report.input_hash, out.report.input_hash);
    assert!(run_experiment(&c, &dir.path().join("missing"), |_| {}).is_err());
}
