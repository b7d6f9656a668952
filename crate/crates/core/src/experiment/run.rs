use std::path::Path;

use rand::seq::index;
use rayon::prelude::*;
use serde::{Deserialize, Serialize};

use super::config::{ExperimentConfig, Strategy};
use super::latency::{cycle_rows, measure_latency};
use super::stats::{descending_ranks, mean_stderr, wilcoxon_greater, SignedRankTest};
use crate::augment::{assemble, harden, know_targets, munge, teacher_label, DistillSet, MungeParams, SoftTargets};
use crate::data::{load_csv, load_csv_with_schema, split_train_val, Features, LoadOptions, SplitSpec, Table, TaskKind};
use crate::density;
use crate::error::{Error, Result};
use crate::gibbs::{generate, GibbsConfig, MAX_AUGMENTED_ROWS};
use crate::learners::{fit_student, fit_teacher, select_by_metric, student_seed, Learner, StudentKind};
use crate::rng::{child_seed, substream};

const TAG_DENSITY: u64 = 0xDE;
const TAG_GIBBS: u64 = 0x61B;
const TAG_MUNGE: u64 = 0x3E6;
const TAG_CAP: u64 = 0xCA9;
const TAG_TEST: u64 = 0x7E57;

#[derive(Debug, Clone, PartialEq, Serialize, Deserialize)]
pub struct CellReport {
    pub seed: u64,
    pub strategy: Strategy,
    pub student: StudentKind,
    pub failed: bool,
    #[serde(default, skip_serializing_if = "Option::is_none")]
    pub error: Option<String>,
    /// Accuracy or R², times 100.
    #[serde(default, skip_serializing_if = "Option::is_none")]
    pub val_metric: Option<f64>,
    #[serde(default, skip_serializing_if = "Option::is_none")]
    pub test_metric: Option<f64>,
    #[serde(default, skip_serializing_if = "Option::is_none")]
    pub n_params: Option<usize>,
    /// Rows the student was trained on (real plus augmented).
    #[serde(default, skip_serializing_if = "Option::is_none")]
    pub train_rows: Option<usize>,
    #[serde(default, skip_serializing_if = "Option::is_none")]
    pub munge: Option<MungeParams>,
}

#[derive(Debug, Clone, PartialEq, Serialize, Deserialize)]
pub struct SelectedReport {
    pub seed: u64,
    pub strategy: Strategy,
    #[serde(default, skip_serializing_if = "Option::is_none")]
    pub student: Option<StudentKind>,
    #[serde(default, skip_serializing_if = "Option::is_none")]
    pub val_metric: Option<f64>,
    #[serde(default, skip_serializing_if = "Option::is_none")]
    pub test_metric: Option<f64>,
}

#[derive(Debug, Clone, PartialEq, Serialize, Deserialize)]
pub struct TeacherReport {
    pub seed: u64,
    pub val_metric: f64,
    pub test_metric: f64,
    /// Validation metric of `[meta, mlp, forest, gbm]`, times 100.
    pub component_val_metrics: Vec<f64>,
    pub blend_weights: Vec<f64>,
    pub n_params: usize,
}

#[derive(Debug, Clone, PartialEq, Serialize, Deserialize)]
pub struct DensityFitReport {
    pub seed: u64,
    pub epochs: usize,
    pub best_val_pseudolikelihood: f64,
}

#[derive(Debug, Clone, PartialEq, Serialize, Deserialize)]
pub struct SummaryRow {
    pub strategy: Strategy,
    /// Student name, or "selected".
    pub model: String,
    #[serde(default, skip_serializing_if = "Option::is_none")]
    pub test_mean: Option<f64>,
    #[serde(default, skip_serializing_if = "Option::is_none")]
    pub test_stderr: Option<f64>,
    #[serde(default, skip_serializing_if = "Option::is_none")]
    pub val_mean: Option<f64>,
    pub n_ok: usize,
    pub n_failed: usize,
}

#[derive(Debug, Clone, PartialEq, Serialize, Deserialize)]
pub struct RankRow {
    pub strategy: Strategy,
    pub average_rank: f64,
}

#[derive(Debug, Clone, PartialEq, Serialize, Deserialize)]
pub struct VersusBase {
    pub strategy: Strategy,
    pub test: String,
    #[serde(flatten)]
    pub result: SignedRankTest,
}

/// Everything a run produces except timings.
#[derive(Debug, Clone, PartialEq, Serialize, Deserialize)]
pub struct RunReport {
    pub config: ExperimentConfig,
    pub input_hash: String,
    pub task: TaskKind,
    pub metric: String,
    pub n_train: usize,
    pub n_val: usize,
    pub n_test: usize,
    pub augmented_rows: usize,
    pub cells: Vec<CellReport>,
    pub selected: Vec<SelectedReport>,
    pub teachers: Vec<TeacherReport>,
    pub density_fits: Vec<DensityFitReport>,
    pub summary: Vec<SummaryRow>,
    pub ranks: Vec<RankRow>,
    pub versus_base: Vec<VersusBase>,
}

#[derive(Debug, Clone, PartialEq, Serialize, Deserialize)]
pub struct LatencyEntry {
    pub seed: u64,
    /// Strategy name, or "teacher".
    pub strategy: String,
    pub model: String,
    pub rows_per_second: f64,
}

#[derive(Debug, Clone, PartialEq, Serialize, Deserialize)]
pub struct LatencyReport {
    pub rows: usize,
    pub repetitions: usize,
    pub entries: Vec<LatencyEntry>,
}

pub struct RunOutput {
    pub report: RunReport,
    pub latency: LatencyReport,
}

/// The data of one run: a fixed test fold and the train+validation pool.
pub struct LoadedData {
    pub pool: Table,
    pub test: Table,
    /// Raw bytes of every input file, in load order, for hashing.
    pub input_bytes: Vec<Vec<u8>>,
}

pub fn load_dataset(config: &ExperimentConfig, base_dir: &Path) -> Result<LoadedData> {
    let spec = &config.dataset;
    let (pool, test, input_bytes) = if let Some(b) = spec.bundled {
        let pool = b.generate(spec.rows, spec.seed);
        let test = b.generate(spec.test_rows, child_seed(spec.seed, &[TAG_TEST]));
        (pool, test, Vec::new())
    } else {
        let path = base_dir.join(spec.path.as_deref().expect("validated"));
        let read = |p: &Path| std::fs::read(p).map_err(|source| Error::Io { path: p.into(), source });
        let mut bytes = vec![read(&path)?];
        let options = LoadOptions { target: spec.target.clone(), ..LoadOptions::default() };
        let full = load_csv(&path, &options)?;
        match &spec.test_path {
            Some(tp) => {
                let tp = base_dir.join(tp);
                bytes.push(read(&tp)?);
                let test = load_csv_with_schema(&tp, full.schema())?;
                (full, test, bytes)
            }
            None => {
                let (pool, test) = split_train_val(&full, SplitSpec { train_fraction: 1.0 - spec.test_fraction, seed: child_seed(spec.seed, &[TAG_TEST]) })?;
                (pool, test, bytes)
            }
        }
    };
    if let Some(task) = config.task {
        if task != pool.task() {
            return Err(Error::Task(format!("config expects {task:?} but the data is {:?}", pool.task())));
        }
    }
    Ok(LoadedData { pool, test, input_bytes })
}

fn metric_pct(model: &Learner, table: &Table) -> Result<f64> {
    Ok(100.0 * model.evaluate(table)?)
}

/// Cap augmented rows at `m` by a uniform subsample (kept in order).
fn cap_rows(features: Features, m: usize, seed: u64) -> Features {
    if features.n_rows() <= m {
        return features;
    }
    let mut rows = index::sample(&mut substream(seed, &[TAG_CAP]), features.n_rows(), m).into_vec();
    rows.sort_unstable();
    features.select_rows(&rows)
}

struct Trained {
    model: Learner,
    val: f64,
    train_rows: usize,
    munge: Option<MungeParams>,
}

/// Run every (strategy, student) cell for every seed.
pub fn run_experiment(config: &ExperimentConfig, base_dir: &Path, mut progress: impl FnMut(&str)) -> Result<RunOutput> {
    config.validate()?;
    let data = load_dataset(config, base_dir)?;
    let task = data.pool.task();
    let config_json = serde_json::to_vec(config)?;
    let mut hash_inputs = vec![config_json];
    hash_inputs.extend(data.input_bytes.iter().cloned());
    let input_hash = super::report::content_hash(&hash_inputs);

    let mut cells = Vec::new();
    let mut selected = Vec::new();
    let mut teachers = Vec::new();
    let mut density_fits = Vec::new();
    let mut latency = Vec::new();
    let latency_rows = cycle_rows(&data.test.features(), config.latency.rows.max(1));
    let mut sizes = (0, 0, 0);
    let needs_teacher = config.strategies.iter().any(|s| *s != Strategy::Base);
    let needs_density = config.strategies.iter().any(|s| matches!(s, Strategy::Gib(_)));

    for &seed in &config.seeds {
        let (train, val) = split_train_val(&data.pool, SplitSpec { train_fraction: config.train_fraction, seed })?;
        let n = train.n_rows();
        let m = (config.multiplier * n).min(MAX_AUGMENTED_ROWS);
        sizes = (n, val.n_rows(), data.test.n_rows());
        progress(&format!("seed {seed}: {n} train / {} val / {} test rows", val.n_rows(), data.test.n_rows()));

        let teacher = if needs_teacher {
            progress(&format!("seed {seed}: fitting teacher"));
            let t = Learner::Stack(Box::new(fit_teacher(&train, &val, &config.teacher_config(), seed)?));
            let Learner::Stack(ref s) = t else { unreachable!() };
            teachers.push(TeacherReport {
                seed,
                val_metric: 100.0 * s.validation_metric,
                test_metric: metric_pct(&t, &data.test)?,
                component_val_metrics: s.component_metrics.iter().map(|v| 100.0 * v).collect(),
                blend_weights: s.weights.clone(),
                n_params: t.n_params(),
            });
            if config.latency.enabled {
                latency.push(LatencyEntry {
                    seed,
                    strategy: "teacher".into(),
                    model: "stack".into(),
                    rows_per_second: measure_latency(&t, &latency_rows, config.latency.repetitions)?,
                });
            }
            Some(t)
        } else {
            None
        };
        let density_model = if needs_density {
            progress(&format!("seed {seed}: fitting density model"));
            let cfg = config.density.apply(n);
            let model = density::fit(&train, &val, &cfg, child_seed(seed, &[TAG_DENSITY]))?;
            let best = model.history().iter().map(|h| h.val_pseudolikelihood).fold(f64::NEG_INFINITY, f64::max);
            density_fits.push(DensityFitReport { seed, epochs: model.history().len(), best_val_pseudolikelihood: best });
            Some(model)
        } else {
            None
        };

        for &strategy in &config.strategies {
            progress(&format!("seed {seed}: {strategy}"));
            let outcomes: Vec<Result<Trained>> = match strategy {
                Strategy::Munge | Strategy::Hunge => {
                    let teacher = teacher.as_ref().expect("teacher fit for augmenting strategies");
                    munge_search(config, strategy, &train, &val, teacher, m, seed)
                }
                _ => {
                    let dset = build_distill_set(config, strategy, &train, teacher.as_ref(), density_model.as_ref(), m, seed);
                    config
                        .students
                        .par_iter()
                        .map(|&kind| {
                            let dset = dset.as_ref().map_err(clone_err)?;
                            let model = fit_student(kind, dset, task, &config.learners, student_seed(seed, kind))?;
                            Ok(Trained { val: metric_pct(&model, &val)?, model, train_rows: dset.len(), munge: None })
                        })
                        .collect()
                }
            };
            let mut val_metrics = Vec::new();
            let mut n_params = Vec::new();
            let mut tests = Vec::new();
            for (&kind, outcome) in config.students.iter().zip(outcomes) {
                let cell = match outcome.and_then(|t| Ok((metric_pct(&t.model, &data.test)?, t))) {
                    Ok((test_metric, t)) => {
                        if config.latency.enabled {
                            latency.push(LatencyEntry {
                                seed,
                                strategy: strategy.to_string(),
                                model: kind.name().into(),
                                rows_per_second: measure_latency(&t.model, &latency_rows, config.latency.repetitions)?,
                            });
                        }
                        val_metrics.push(t.val);
                        n_params.push(t.model.n_params());
                        tests.push(Some(test_metric));
                        CellReport {
                            seed,
                            strategy,
                            student: kind,
                            failed: false,
                            error: None,
                            val_metric: Some(t.val),
                            test_metric: Some(test_metric),
                            n_params: Some(t.model.n_params()),
                            train_rows: Some(t.train_rows),
                            munge: t.munge,
                        }
                    }
                    Err(e) => {
                        progress(&format!("seed {seed}: {strategy}/{} FAILED: {e}", kind.name()));
                        val_metrics.push(f64::NEG_INFINITY);
                        n_params.push(usize::MAX);
                        tests.push(None);
                        CellReport {
                            seed,
                            strategy,
                            student: kind,
                            failed: true,
                            error: Some(e.to_string()),
                            val_metric: None,
                            test_metric: None,
                            n_params: None,
                            train_rows: None,
                            munge: None,
                        }
                    }
                };
                cells.push(cell);
            }
            let pick = select_by_metric(&val_metrics, &n_params).filter(|&i| tests[i].is_some());
            selected.push(SelectedReport {
                seed,
                strategy,
                student: pick.map(|i| config.students[i]),
                val_metric: pick.map(|i| val_metrics[i]),
                test_metric: pick.and_then(|i| tests[i]),
            });
        }
    }

    let summary = summarize(config, &cells, &selected);
    let ranks = average_ranks(config, &selected);
    let versus_base = versus_base(config, &selected);
    let report = RunReport {
        config: config.clone(),
        input_hash,
        task,
        metric: if task == TaskKind::Regression { "r2_pct".into() } else { "accuracy_pct".into() },
        n_train: sizes.0,
        n_val: sizes.1,
        n_test: sizes.2,
        augmented_rows: if config.strategies.iter().any(|s| matches!(s, Strategy::Munge | Strategy::Hunge | Strategy::Gib(_))) {
            (config.multiplier * sizes.0).min(MAX_AUGMENTED_ROWS)
        } else {
            0
        },
        cells,
        selected,
        teachers,
        density_fits,
        summary,
        ranks,
        versus_base,
    };
    let latency = LatencyReport { rows: latency_rows.n_rows(), repetitions: config.latency.repetitions, entries: latency };
    Ok(RunOutput { report, latency })
}

fn clone_err(e: &Error) -> Error {
    Error::InvalidArgument(e.to_string())
}

fn build_distill_set(
    config: &ExperimentConfig,
    strategy: Strategy,
    train: &Table,
    teacher: Option<&Learner>,
    density_model: Option<&density::DensityModel>,
    m: usize,
    seed: u64,
) -> Result<DistillSet> {
    let task = train.task();
    match strategy {
        Strategy::Base => DistillSet::from_table(train),
        Strategy::Know => {
            if !task.is_classification() {
                return Err(Error::Task("KNOW needs a classification task".into()));
            }
            let teacher = teacher.expect("teacher fit for KNOW");
            let probs = teacher_label(teacher, &train.features(), task)?;
            let targets = know_targets(&probs, train.class_labels()?, config.know.temperature, config.know.hard_weight)?;
            let real = DistillSet::from_table(train)?;
            DistillSet::new(real.features, targets, real.origin)
        }
        Strategy::Gib(k) => {
            let model = density_model.expect("density model fit for GIB");
            let teacher = teacher.expect("teacher fit for GIB");
            let aug = generate(model, train, &GibbsConfig { rounds: k, target_count: m, seed: child_seed(seed, &[TAG_GIBBS, k as u64]) })?;
            let targets = teacher_label(teacher, &aug.features, task)?;
            assemble(train, &aug.features, &targets)
        }
        Strategy::Munge | Strategy::Hunge => unreachable!("handled by the grid search"),
    }
}

/// For every grid point: augment, label (soft for MUNGE, hard for HUNGE),
/// fit each student; keep each student's best setting on validation.
fn munge_search(
    config: &ExperimentConfig,
    strategy: Strategy,
    train: &Table,
    val: &Table,
    teacher: &Learner,
    m: usize,
    seed: u64,
) -> Vec<Result<Trained>> {
    let task = train.task();
    if strategy == Strategy::Hunge && !task.is_classification() {
        return config.students.iter().map(|_| Err(Error::Task("HUNGE needs a classification task".into()))).collect();
    }
    let mut best: Vec<Result<Trained>> =
        config.students.iter().map(|_| Err(Error::InvalidArgument("no MUNGE setting succeeded".into()))).collect();
    for (g, &params) in config.munge_grid.iter().enumerate() {
        let point_seed = child_seed(seed, &[TAG_MUNGE, g as u64]);
        let dset = (|| -> Result<DistillSet> {
            let aug = munge(train, params, config.multiplier, point_seed)?;
            let features = cap_rows(aug.features, m, point_seed);
            let mut targets: SoftTargets = teacher_label(teacher, &features, task)?;
            if strategy == Strategy::Hunge {
                targets = harden(&targets);
            }
            assemble(train, &features, &targets)
        })();
        let fits: Vec<Result<Trained>> = config
            .students
            .par_iter()
            .map(|&kind| {
                let dset = dset.as_ref().map_err(clone_err)?;
                let model = fit_student(kind, dset, task, &config.learners, student_seed(seed, kind))?;
                Ok(Trained { val: metric_pct(&model, val)?, model, train_rows: dset.len(), munge: Some(params) })
            })
            .collect();
        for (slot, fit) in best.iter_mut().zip(fits) {
            match (slot.as_ref(), fit) {
                (Ok(cur), Ok(new)) if new.val <= cur.val => {}
                (_, Ok(new)) => *slot = Ok(new),
                (Err(_), Err(e)) => *slot = Err(e),
                (Ok(_), Err(_)) => {}
            }
        }
    }
    best
}

fn summarize(config: &ExperimentConfig, cells: &[CellReport], selected: &[SelectedReport]) -> Vec<SummaryRow> {
    let mut rows = Vec::new();
    for &strategy in &config.strategies {
        for &kind in &config.students {
            let group: Vec<&CellReport> = cells.iter().filter(|c| c.strategy == strategy && c.student == kind).collect();
            let tests: Vec<f64> = group.iter().filter_map(|c| c.test_metric).collect();
            let vals: Vec<f64> = group.iter().filter_map(|c| c.val_metric).collect();
            let ms = mean_stderr(&tests);
            rows.push(SummaryRow {
                strategy,
                model: kind.name().into(),
                test_mean: ms.map(|m| m.0),
                test_stderr: ms.map(|m| m.1),
                val_mean: mean_stderr(&vals).map(|m| m.0),
                n_ok: tests.len(),
                n_failed: group.len() - tests.len(),
            });
        }
        let group: Vec<&SelectedReport> = selected.iter().filter(|s| s.strategy == strategy).collect();
        let tests: Vec<f64> = group.iter().filter_map(|s| s.test_metric).collect();
        let vals: Vec<f64> = group.iter().filter_map(|s| s.val_metric).collect();
        let ms = mean_stderr(&tests);
        rows.push(SummaryRow {
            strategy,
            model: "selected".into(),
            test_mean: ms.map(|m| m.0),
            test_stderr: ms.map(|m| m.1),
            val_mean: mean_stderr(&vals).map(|m| m.0),
            n_ok: tests.len(),
            n_failed: group.len() - tests.len(),
        });
    }
    rows
}

/// Per seed, rank strategies by Selected test metric; average over seeds.
fn average_ranks(config: &ExperimentConfig, selected: &[SelectedReport]) -> Vec<RankRow> {
    let mut totals = vec![0.0; config.strategies.len()];
    for &seed in &config.seeds {
        let scores: Vec<Option<f64>> = config
            .strategies
            .iter()
            .map(|s| selected.iter().find(|r| r.seed == seed && r.strategy == *s).and_then(|r| r.test_metric))
            .collect();
        for (t, r) in totals.iter_mut().zip(descending_ranks(&scores)) {
            *t += r;
        }
    }
    config
        .strategies
        .iter()
        .zip(totals)
        .map(|(&strategy, t)| RankRow { strategy, average_rank: t / config.seeds.len() as f64 })
        .collect()
}

fn versus_base(config: &ExperimentConfig, selected: &[SelectedReport]) -> Vec<VersusBase> {
    if !config.strategies.contains(&Strategy::Base) {
        return Vec::new();
    }
    let metric = |seed: u64, s: Strategy| selected.iter().find(|r| r.seed == seed && r.strategy == s).and_then(|r| r.test_metric);
    config
        .strategies
        .iter()
        .filter(|s| **s != Strategy::Base)
        .map(|&strategy| {
            let diffs: Vec<f64> = config
                .seeds
                .iter()
                .filter_map(|&seed| Some(metric(seed, strategy)? - metric(seed, Strategy::Base)?))
                .collect();
            VersusBase { strategy, test: "one-sided Wilcoxon signed-rank (strategy >= BASE)".into(), result: wilcoxon_greater(&diffs) }
        })
        .collect()
}
