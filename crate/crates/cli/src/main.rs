use std::path::{Path, PathBuf};

use anyhow::{bail, Context, Result};
use clap::{Args, Parser, Subcommand, ValueEnum};
use fastdad_core::augment::{assemble, harden, know_targets, munge, teacher_label, DistillSet, MungeParams, SoftTargets};
use fastdad_core::data::{load_csv, load_csv_with_schema, load_features_csv, split_train_val, LoadOptions, SplitSpec, Table};
use fastdad_core::density::{self, DensityModel, ModelConfig};
use fastdad_core::diagnostics::{diagnostics_suite, MmdConfig};
use fastdad_core::experiment::{emit_report, run_experiment, ExperimentConfig, KnowSettings};
use fastdad_core::gibbs::{generate, AugmentedSet, GibbsConfig};
use fastdad_core::learners::{fit_student, fit_teacher, student_seed, Learner, LearnerConfigs, StackEnsembleConfig, StudentKind};

/// Fast tabular distillation by Gibbs-sampled augmentation.
#[derive(Parser)]
#[command(name = "fastdad", version)]
struct Cli {
    /// Worker threads (defaults to FASTDAD_THREADS, else all cores).
    #[arg(long, global = true)]
    threads: Option<usize>,
    #[command(subcommand)]
    command: Command,
}

#[derive(Subcommand)]
enum Command {
    /// Fit the self-attention density model on a CSV.
    Fit(FitArgs),
    /// Fit the stacked-ensemble teacher on a CSV.
    Teach(TeachArgs),
    /// Draw Gibbs samples started at the training rows.
    Sample(SampleArgs),
    /// Generate augmented rows with MUNGE or the Gibbs sampler.
    Augment(AugmentArgs),
    /// Label augmented rows with a teacher (soft, or hard with --hard).
    Label(LabelArgs),
    /// Train student models on the real rows plus labeled augmented rows.
    Distill(DistillArgs),
    /// MMD, diffusion and fidelity of Gibbs samples for several round counts.
    Diagnose(DiagnoseArgs),
    /// Run a full experiment from a JSON config.
    Bench(BenchArgs),
}

#[derive(Args)]
struct DataArgs {
    /// Training CSV (header row required).
    #[arg(long)]
    data: PathBuf,
    /// Target column (defaults to the last column).
    #[arg(long)]
    target: Option<String>,
}

impl DataArgs {
    fn load(&self) -> Result<Table> {
        let options = LoadOptions { target: self.target.clone(), ..LoadOptions::default() };
        load_csv(&self.data, &options).with_context(|| format!("loading {}", self.data.display()))
    }
}

/// Validation rows from `--val`, or a 90/10 split of the training rows.
fn train_val(data: Table, val: Option<&Path>, seed: u64) -> Result<(Table, Table)> {
    match val {
        Some(p) => {
            let v = load_csv_with_schema(p, data.schema()).with_context(|| format!("loading {}", p.display()))?;
            Ok((data, v))
        }
        None => Ok(split_train_val(&data, SplitSpec { train_fraction: 0.9, seed })?),
    }
}

#[derive(Args)]
struct FitArgs {
    #[command(flatten)]
    data: DataArgs,
    /// Validation CSV; otherwise 10% of --data is held out.
    #[arg(long)]
    val: Option<PathBuf>,
    #[arg(long)]
    out: PathBuf,
    #[arg(long, default_value_t = 0)]
    seed: u64,
    /// Density model config JSON (defaults to the size-based preset).
    #[arg(long)]
    config: Option<PathBuf>,
    #[arg(long)]
    max_epochs: Option<usize>,
    #[arg(long)]
    patience: Option<usize>,
}

#[derive(Args)]
struct TeachArgs {
    #[command(flatten)]
    data: DataArgs,
    #[arg(long)]
    val: Option<PathBuf>,
    #[arg(long)]
    out: PathBuf,
    #[arg(long, default_value_t = 0)]
    seed: u64,
    #[arg(long, default_value_t = 10)]
    folds: usize,
}

#[derive(Args)]
struct SampleArgs {
    #[command(flatten)]
    data: DataArgs,
    /// Density model checkpoint written by `fit`.
    #[arg(long)]
    model: PathBuf,
    #[arg(long, default_value_t = 1)]
    rounds: usize,
    /// Samples per training row (m = min(mult * n, 10^6)).
    #[arg(long, default_value_t = 10)]
    mult: usize,
    /// Exact sample count; overrides --mult.
    #[arg(long)]
    count: Option<usize>,
    #[arg(long, default_value_t = 0)]
    seed: u64,
    /// Output CSV; provenance goes to `<out>.provenance.json`.
    #[arg(long)]
    out: PathBuf,
}

#[derive(Clone, Copy, ValueEnum)]
enum AugmentStrategy {
    Munge,
    Gibbs,
}

#[derive(Args)]
struct AugmentArgs {
    #[command(flatten)]
    data: DataArgs,
    #[arg(long, value_enum)]
    strategy: AugmentStrategy,
    /// MUNGE swap probability.
    #[arg(long, default_value_t = 0.25)]
    p: f64,
    /// MUNGE local variance.
    #[arg(long, default_value_t = 1.0)]
    s: f64,
    /// Density model checkpoint (gibbs only).
    #[arg(long)]
    model: Option<PathBuf>,
    #[arg(long, default_value_t = 1)]
    rounds: usize,
    #[arg(long, default_value_t = 10)]
    mult: usize,
    #[arg(long, default_value_t = 0)]
    seed: u64,
    #[arg(long)]
    out: PathBuf,
}

#[derive(Args)]
struct LabelArgs {
    #[command(flatten)]
    data: DataArgs,
    /// Teacher checkpoint written by `teach`.
    #[arg(long)]
    teacher: PathBuf,
    /// Augmented rows to label (CSV of feature columns).
    #[arg(long)]
    aug: PathBuf,
    /// One-hot argmax labels instead of probabilities.
    #[arg(long)]
    hard: bool,
    /// Output JSON of targets.
    #[arg(long)]
    out: PathBuf,
}

#[derive(Clone, Copy, PartialEq, Eq, ValueEnum)]
enum DistillStrategy {
    Base,
    Know,
    Munge,
    Hunge,
    Gib,
}

#[derive(Clone, Copy, ValueEnum)]
enum StudentArg {
    Mlp,
    Forest,
    Gbm,
    All,
}

#[derive(Args)]
struct DistillArgs {
    #[command(flatten)]
    data: DataArgs,
    #[arg(long)]
    val: Option<PathBuf>,
    #[arg(long, value_enum)]
    strategy: DistillStrategy,
    #[arg(long, value_enum, default_value = "all")]
    student: StudentArg,
    #[arg(long)]
    teacher: Option<PathBuf>,
    /// Augmented rows (munge, hunge, gib).
    #[arg(long)]
    aug: Option<PathBuf>,
    #[arg(long, default_value_t = 2.0)]
    temperature: f64,
    #[arg(long, default_value_t = 0.25)]
    hard_weight: f64,
    #[arg(long, default_value_t = 0)]
    seed: u64,
    /// Output directory for `<student>.json` checkpoints.
    #[arg(long)]
    out: PathBuf,
}

#[derive(Args)]
struct DiagnoseArgs {
    #[command(flatten)]
    data: DataArgs,
    #[arg(long)]
    model: PathBuf,
    /// Real rows not used for training (fidelity discriminator and scoring).
    #[arg(long)]
    heldout: PathBuf,
    #[arg(long, value_delimiter = ',', default_value = "0,1,5,10")]
    rounds: Vec<usize>,
    #[arg(long, default_value_t = 0)]
    seed: u64,
    #[arg(long)]
    out: PathBuf,
}

#[derive(Args)]
struct BenchArgs {
    #[arg(long)]
    config: PathBuf,
    #[arg(long)]
    out: PathBuf,
    #[arg(long)]
    quiet: bool,
}

fn main() -> Result<()> {
    let cli = Cli::parse();
    let threads = match cli.threads {
        Some(t) => Some(t),
        None => match std::env::var("FASTDAD_THREADS") {
            Ok(v) => Some(v.parse().with_context(|| format!("FASTDAD_THREADS={v:?} is not a thread count"))?),
            Err(_) => None,
        },
    };
    if let Some(t) = threads {
        rayon::ThreadPoolBuilder::new().num_threads(t.max(1)).build_global()?;
    }
    match cli.command {
        Command::Fit(a) => fit(a),
        Command::Teach(a) => teach(a),
        Command::Sample(a) => sample(a),
        Command::Augment(a) => augment(a),
        Command::Label(a) => label(a),
        Command::Distill(a) => distill(a),
        Command::Diagnose(a) => diagnose(a),
        Command::Bench(a) => bench(a),
    }
}

fn write_json(path: &Path, value: &impl serde::Serialize) -> Result<()> {
    let s = serde_json::to_string_pretty(value)?;
    std::fs::write(path, s).with_context(|| format!("writing {}", path.display()))
}

fn fit(a: FitArgs) -> Result<()> {
    let (train, val) = train_val(a.data.load()?, a.val.as_deref(), a.seed)?;
    let mut config = match &a.config {
        Some(p) => serde_json::from_str(&std::fs::read_to_string(p)?).context("parsing density config")?,
        None => ModelConfig::for_rows(train.n_rows()),
    };
    config.max_epochs = a.max_epochs.unwrap_or(config.max_epochs);
    config.patience = a.patience.unwrap_or(config.patience);
    let model = density::fit_with_observer(&train, &val, &config, a.seed, |log| {
        eprintln!("epoch {:>4}  train {:>9.5}  val pl {:>9.5}", log.epoch, log.train_loss, log.val_pseudolikelihood);
    })?;
    model.save(&a.out)?;
    eprintln!("wrote {}", a.out.display());
    Ok(())
}

fn teach(a: TeachArgs) -> Result<()> {
    let (train, val) = train_val(a.data.load()?, a.val.as_deref(), a.seed)?;
    let config = StackEnsembleConfig { folds: a.folds, ..StackEnsembleConfig::default() };
    let teacher = fit_teacher(&train, &val, &config, a.seed)?;
    eprintln!("teacher validation metric {:.4}, blend weights {:?}", teacher.validation_metric, teacher.weights);
    Learner::Stack(Box::new(teacher)).save(&a.out)?;
    Ok(())
}

fn sidecar(out: &Path) -> PathBuf {
    let mut s = out.as_os_str().to_owned();
    s.push(".provenance.json");
    PathBuf::from(s)
}

fn save_aug(aug: &AugmentedSet, out: &Path) -> Result<()> {
    aug.save(out, &sidecar(out))?;
    eprintln!("wrote {} rows to {}", aug.len(), out.display());
    Ok(())
}

fn sample(a: SampleArgs) -> Result<()> {
    let train = a.data.load()?;
    let model = DensityModel::load(&a.model)?;
    let m = a.count.unwrap_or_else(|| GibbsConfig::default_count(train.n_rows(), a.mult));
    let aug = generate(&model, &train, &GibbsConfig { rounds: a.rounds, target_count: m, seed: a.seed })?;
    save_aug(&aug, &a.out)
}

fn augment(a: AugmentArgs) -> Result<()> {
    let train = a.data.load()?;
    let aug = match a.strategy {
        AugmentStrategy::Munge => munge(&train, MungeParams::new(a.p, a.s)?, a.mult, a.seed)?,
        AugmentStrategy::Gibbs => {
            let Some(path) = &a.model else { bail!("--strategy gibbs needs --model") };
            let model = DensityModel::load(path)?;
            let m = GibbsConfig::default_count(train.n_rows(), a.mult);
            generate(&model, &train, &GibbsConfig { rounds: a.rounds, target_count: m, seed: a.seed })?
        }
    };
    save_aug(&aug, &a.out)
}

fn label(a: LabelArgs) -> Result<()> {
    let train = a.data.load()?;
    let teacher = Learner::load(&a.teacher)?;
    let rows = load_features_csv(&a.aug, train.schema())?;
    let mut targets = teacher_label(&teacher, &rows, train.task())?;
    if a.hard {
        if !train.task().is_classification() {
            bail!("--hard needs a classification task");
        }
        targets = harden(&targets);
    }
    write_json(&a.out, &targets)
}

fn distill(a: DistillArgs) -> Result<()> {
    let (train, val) = train_val(a.data.load()?, a.val.as_deref(), a.seed)?;
    let task = train.task();
    let teacher = match &a.teacher {
        Some(p) => Some(Learner::load(p)?),
        None if a.strategy == DistillStrategy::Base => None,
        None => bail!("this strategy needs --teacher"),
    };
    let dset = match a.strategy {
        DistillStrategy::Base => DistillSet::from_table(&train)?,
        DistillStrategy::Know => {
            let know = KnowSettings { temperature: a.temperature, hard_weight: a.hard_weight };
            let probs = teacher_label(teacher.as_ref().unwrap(), &train.features(), task)?;
            let targets = know_targets(&probs, train.class_labels()?, know.temperature, know.hard_weight)?;
            let real = DistillSet::from_table(&train)?;
            DistillSet::new(real.features, targets, real.origin)?
        }
        DistillStrategy::Munge | DistillStrategy::Hunge | DistillStrategy::Gib => {
            let Some(path) = &a.aug else { bail!("this strategy needs --aug rows") };
            let rows = load_features_csv(path, train.schema())?;
            let mut targets: SoftTargets = teacher_label(teacher.as_ref().unwrap(), &rows, task)?;
            if a.strategy == DistillStrategy::Hunge {
                targets = harden(&targets);
            }
            assemble(&train, &rows, &targets)?
        }
    };
    let kinds: Vec<StudentKind> = match a.student {
        StudentArg::Mlp => vec![StudentKind::Mlp],
        StudentArg::Forest => vec![StudentKind::Forest],
        StudentArg::Gbm => vec![StudentKind::Gbm],
        StudentArg::All => StudentKind::ALL.to_vec(),
    };
    std::fs::create_dir_all(&a.out)?;
    for kind in kinds {
        let model = fit_student(kind, &dset, task, &LearnerConfigs::default(), student_seed(a.seed, kind))?;
        let path = a.out.join(format!("{}.json", kind.name()));
        model.save(&path)?;
        println!("{}\tval {:.4}\t{}", kind.name(), model.evaluate(&val)?, path.display());
    }
    Ok(())
}

fn diagnose(a: DiagnoseArgs) -> Result<()> {
    let train = a.data.load()?;
    let heldout = load_csv_with_schema(&a.heldout, train.schema())?;
    let model = DensityModel::load(&a.model)?;
    let report = diagnostics_suite(&model, &train, &heldout, &a.rounds, a.seed, &MmdConfig::default())?;
    for row in &report.rows {
        println!(
            "k={:<3} mmd {:.5}  diffusion {:.5}  discriminator acc {:.4}  |acc-0.5| {:.4}",
            row.rounds, row.mmd, row.diffusion, row.fidelity.accuracy, row.fidelity.fidelity
        );
    }
    write_json(&a.out, &report)
}

fn bench(a: BenchArgs) -> Result<()> {
    let text = std::fs::read_to_string(&a.config).with_context(|| format!("reading {}", a.config.display()))?;
    let config: ExperimentConfig = serde_json::from_str(&text).context("parsing experiment config")?;
    let base = a.config.parent().map(Path::to_path_buf).unwrap_or_default();
    let quiet = a.quiet;
    let out = run_experiment(&config, &base, |msg| {
        if !quiet {
            eprintln!("{msg}");
        }
    })?;
    for path in emit_report(&out.report, Some(&out.latency), &a.out)? {
        eprintln!("wrote {}", path.display());
    }
    Ok(())
}
