use std::io::Write;
use std::path::{Path, PathBuf};
use std::process::ExitCode;

use anyhow::{bail, Context, Result};
use clap::{Args, Parser, Subcommand, ValueEnum};

use splitsvm::admm::{AdmmConfig, RhoPolicy};
use splitsvm::data::{self, Dataset, Label, Standardization};
use splitsvm::experiments::{self, GridParams, SweepParams, TraceParams};
use splitsvm::io::write_string_atomic;
use splitsvm::kernel::{gram_with, min_eigenvalue, GramOptions, KernelFamily, KernelSpec};
use splitsvm::loss::{LossKind, MarginLoss};
use splitsvm::model::{train_multistart_prepared, TrainedModel};

/// Kernel SVMs with nonconvex margin losses, trained by ADMM.
#[derive(Debug, Parser)]
#[command(name = "splitsvm", version)]
struct Cli {
    #[command(subcommand)]
    command: Command,
}

#[derive(Debug, Subcommand)]
enum Command {
    /// Sample the two-square synthetic data set.
    GenData(GenDataArgs),
    /// Train a model with multi-start ADMM.
    Train(TrainArgs),
    /// Label a feature-only CSV with a trained model.
    Predict(PredictArgs),
    /// Report the accuracy of a model on a labelled CSV.
    Evaluate(EvaluateArgs),
    /// Rerun one of the reference experiments.
    Reproduce(ReproduceArgs),
}

#[derive(Debug, Args)]
struct GenDataArgs {
    #[arg(long, default_value_t = 300)]
    n_train: usize,
    #[arg(long, default_value_t = 120)]
    n_test: usize,
    #[arg(long, default_value_t = 0)]
    seed: u64,
    /// Output path of the training set.
    #[arg(long)]
    train: PathBuf,
    /// Output path of the test set.
    #[arg(long)]
    test: PathBuf,
}

#[derive(Debug, Clone, Copy, PartialEq, Eq, ValueEnum)]
enum CheckRho {
    Off,
    Warn,
    Error,
}

impl From<CheckRho> for RhoPolicy {
    fn from(c: CheckRho) -> Self {
        match c {
            CheckRho::Off => RhoPolicy::Off,
            CheckRho::Warn => RhoPolicy::Warn,
            CheckRho::Error => RhoPolicy::Error,
        }
    }
}

#[derive(Debug, Args)]
struct SolverArgs {
    /// hinge, pl2, tlog or ramp (also L1..L4).
    #[arg(long, default_value = "hinge")]
    loss: LossKind,
    /// gaussian or matern1 (also K1, K2).
    #[arg(long, default_value = "gaussian")]
    kernel: KernelFamily,
    #[arg(long, default_value_t = 1.0)]
    sigma: f64,
    #[arg(long, default_value_t = 0.1)]
    lambda: f64,
    #[arg(long, default_value_t = 0.05)]
    rho: f64,
    /// Stop once ‖α − Ac‖₂ falls below this.
    #[arg(long, default_value_t = 1e-12)]
    eps0: f64,
    #[arg(long, default_value_t = 10_000)]
    max_iter: usize,
    /// Number of random initializations.
    #[arg(long, default_value_t = 20)]
    starts: usize,
    #[arg(long, default_value_t = 0)]
    seed: u64,
    /// What to do when ρ ≤ 4λ/λ_min(A).
    #[arg(long, value_enum, default_value_t = CheckRho::Warn)]
    check_rho: CheckRho,
}

impl SolverArgs {
    fn admm_config(&self) -> Result<AdmmConfig> {
        let cfg = AdmmConfig {
            max_iter: self.max_iter,
            // Reported once by the command rather than once per start.
            enforce_rho_condition: RhoPolicy::Off,
            ..AdmmConfig::new(self.lambda, self.rho, self.eps0)
        };
        cfg.validate()?;
        if self.starts == 0 {
            bail!("--starts must be at least 1");
        }
        Ok(cfg)
    }

    fn kernel_spec(&self) -> Result<KernelSpec> {
        Ok(KernelSpec::new(self.kernel, self.sigma)?)
    }
}

#[derive(Debug, Args)]
struct TrainArgs {
    #[command(flatten)]
    solver: SolverArgs,
    /// Labelled training CSV (label in the last column).
    #[arg(long)]
    train: PathBuf,
    /// Where to write the model.
    #[arg(long)]
    model: PathBuf,
    /// Optional iteration trace of the selected start.
    #[arg(long)]
    trace: Option<PathBuf>,
    /// z-score features with training statistics; stored in the model.
    #[arg(long)]
    standardize: bool,
    /// Add a small ridge to the Gram diagonal instead of rejecting duplicate inputs.
    #[arg(long)]
    jitter: bool,
}

#[derive(Debug, Args)]
struct PredictArgs {
    #[arg(long)]
    model: PathBuf,
    /// Feature-only CSV to label.
    #[arg(long)]
    test: PathBuf,
    /// Output CSV (features plus a label column); stdout when omitted.
    #[arg(long)]
    out: Option<PathBuf>,
}

#[derive(Debug, Args)]
struct EvaluateArgs {
    #[arg(long)]
    model: PathBuf,
    /// Labelled CSV to score.
    #[arg(long)]
    test: PathBuf,
}

#[derive(Debug, Clone, Copy, PartialEq, Eq, ValueEnum)]
enum Artifact {
    /// Sample-size sweep, N = 100..1000.
    T1,
    /// Loss × kernel grid on synthetic data.
    T2,
    /// Loss × kernel grid on user-supplied wine data (needs --train and --test).
    T3,
    /// Convergence trace of a single run.
    Fig3,
}

#[derive(Debug, Args)]
struct ReproduceArgs {
    #[arg(value_enum)]
    artifact: Artifact,
    #[arg(long, default_value_t = 0)]
    seed: u64,
    /// Override the number of random initializations.
    #[arg(long)]
    starts: Option<usize>,
    /// Largest training size of the t1 sweep.
    #[arg(long, default_value_t = 1000)]
    max_size: usize,
    /// Training CSV for t3.
    #[arg(long)]
    train: Option<PathBuf>,
    /// Test CSV for t3.
    #[arg(long)]
    test: Option<PathBuf>,
    /// Standardize t3 features with training statistics.
    #[arg(long)]
    standardize: bool,
    /// Write the table (or the fig3 trace) here instead of stdout.
    #[arg(long)]
    out: Option<PathBuf>,
}

fn main() -> ExitCode {
    env_logger::Builder::from_env(env_logger::Env::default().default_filter_or("warn")).init();
    let cli = Cli::parse();
    let result = match cli.command {
        Command::GenData(a) => gen_data(a),
        Command::Train(a) => train(a),
        Command::Predict(a) => predict(a),
        Command::Evaluate(a) => evaluate(a),
        Command::Reproduce(a) => reproduce(a),
    };
    match result {
        Ok(()) => ExitCode::SUCCESS,
        Err(e) => {
            eprintln!("error: {e:#}");
            ExitCode::FAILURE
        }
    }
}

/// Fails early when an output could never be written.
fn check_output(path: &Path) -> Result<()> {
    let parent = match path.parent() {
        Some(p) if !p.as_os_str().is_empty() => p,
        _ => Path::new("."),
    };
    if !parent.is_dir() {
        bail!("output directory {} does not exist", parent.display());
    }
    if path.is_dir() {
        bail!("output path {} is a directory", path.display());
    }
    Ok(())
}

fn load(path: &Path) -> Result<Dataset> {
    data::load_csv(path).with_context(|| format!("reading {}", path.display()))
}

fn emit(out: Option<&Path>, text: &str) -> Result<()> {
    match out {
        Some(path) => {
            write_string_atomic(path, text).with_context(|| format!("writing {}", path.display()))
        }
        None => {
            let mut stdout = std::io::stdout().lock();
            stdout.write_all(text.as_bytes())?;
            stdout.flush()?;
            Ok(())
        }
    }
}

fn gen_data(args: GenDataArgs) -> Result<()> {
    check_output(&args.train)?;
    check_output(&args.test)?;
    let (train, test) = data::generate_synthetic(args.n_train, args.n_test, args.seed)?;
    train.write_csv(&args.train)?;
    test.write_csv(&args.test)?;
    println!(
        "wrote {} training points to {} and {} test points to {}",
        train.len(),
        args.train.display(),
        test.len(),
        args.test.display()
    );
    Ok(())
}

fn train(args: TrainArgs) -> Result<()> {
    let cfg = args.solver.admm_config()?;
    let kernel = args.solver.kernel_spec()?;
    let policy: RhoPolicy = args.solver.check_rho.into();
    check_output(&args.model)?;
    if let Some(t) = &args.trace {
        check_output(t)?;
    }

    let raw = load(&args.train)?;
    let (train, scaling) = if args.standardize {
        let s = Standardization::fit(&raw);
        (s.apply(&raw)?, Some(s))
    } else {
        (raw, None)
    };
    let a = gram_with(
        &kernel,
        train.inputs(),
        GramOptions {
            jitter: args.jitter,
        },
    )?;

    let lambda_min = match min_eigenvalue(&a, splitsvm::admm::LAMBDA_MIN_TOL) {
        Ok(l) => Some(l),
        Err(e) if policy == RhoPolicy::Error => return Err(e.into()),
        Err(e) => {
            log::warn!("could not estimate λ_min(A): {e}");
            None
        }
    };
    if let (Some(l), true) = (lambda_min, policy != RhoPolicy::Off) {
        let check = splitsvm::admm::check_rho_condition(&cfg, l);
        let verdict = if check.satisfied {
            "satisfied"
        } else {
            "NOT satisfied; the global convergence guarantee does not apply"
        };
        println!(
            "rho condition: rho = {} vs 4·lambda/lambda_min = {:.6e} (lambda_min = {:.6e}): {verdict}",
            cfg.rho, check.threshold, l
        );
        if !check.satisfied && policy == RhoPolicy::Error {
            bail!(
                "rho = {} must exceed {:.6e} (--check-rho error)",
                cfg.rho,
                check.threshold
            );
        }
    }

    let loss = MarginLoss::new(args.solver.loss);
    let fit = train_multistart_prepared(
        &train,
        &a,
        kernel,
        &loss,
        &cfg,
        args.solver.starts,
        args.solver.seed,
        lambda_min,
    )?;

    println!(
        "{:>5}  {:>20}  {:>24}  {:>10}  {:>9}",
        "start", "seed", "objective", "iterations", "converged"
    );
    for s in &fit.summaries {
        let objective = match (&s.objective, &s.error) {
            (Some(o), _) => format!("{o:.16e}"),
            (None, Some(e)) => format!("failed: {e}"),
            (None, None) => "failed".into(),
        };
        println!(
            "{:>5}  {:>20}  {:>24}  {:>10}  {:>9}",
            s.index, s.seed, objective, s.iterations, s.converged
        );
    }
    println!("selected start {}", fit.best_index);
    let problems = fit.best_run.diagnostics.len();
    if problems > 0 {
        log::warn!(
            "the selected run reported {problems} diagnostic(s); first: {}",
            fit.best_run.diagnostics[0]
        );
    }

    // Scored before the scaling is attached: `train` is already standardized.
    println!(
        "training accuracy {}",
        fit.model.evaluate(&train)?.percent()
    );
    let model = match scaling {
        Some(s) => fit.model.with_scaling(s)?,
        None => fit.model,
    };
    model.save(&args.model)?;
    if let Some(t) = &args.trace {
        fit.best_run.trace.save_csv(t, true)?;
    }
    Ok(())
}

fn predict(args: PredictArgs) -> Result<()> {
    if let Some(out) = &args.out {
        check_output(out)?;
    }
    let model = TrainedModel::load(&args.model)
        .with_context(|| format!("reading {}", args.model.display()))?;
    let features = data::load_features_csv(&args.test)
        .with_context(|| format!("reading {}", args.test.display()))?;
    let labels = features
        .iter()
        .enumerate()
        .map(|(i, x)| {
            model
                .classify_raw(x)
                .with_context(|| format!("row {}", i + 1))
        })
        .collect::<Result<Vec<Label>>>()?;
    match &args.out {
        Some(path) => data::write_labelled_csv(path, &features, &labels)?,
        None => {
            let mut text = String::new();
            for (x, y) in features.iter().zip(&labels) {
                for v in x {
                    text.push_str(&format!("{v:?},"));
                }
                text.push_str(&format!("{y}\n"));
            }
            emit(None, &text)?;
        }
    }
    Ok(())
}

fn evaluate(args: EvaluateArgs) -> Result<()> {
    let model = TrainedModel::load(&args.model)
        .with_context(|| format!("reading {}", args.model.display()))?;
    let data = load(&args.test)?;
    let eval = model.evaluate(&data)?;
    println!(
        "{}/{} correct, accuracy {}",
        eval.correct,
        eval.total,
        eval.percent()
    );
    Ok(())
}

fn reproduce(args: ReproduceArgs) -> Result<()> {
    if let Some(out) = &args.out {
        check_output(out)?;
    }
    if args.starts == Some(0) {
        bail!("--starts must be at least 1");
    }
    let text = match args.artifact {
        Artifact::T1 => {
            if args.max_size < 100 {
                bail!("--max-size must be at least 100");
            }
            let mut params = SweepParams::default();
            params.sizes.retain(|&n| n <= args.max_size);
            if let Some(s) = args.starts {
                params.starts = s;
            }
            experiments::sweep_markdown(&experiments::run_table1(&params, args.seed)?)
        }
        Artifact::T2 => {
            let mut params = GridParams::synthetic();
            if let Some(s) = args.starts {
                params.starts = s;
            }
            experiments::grid_markdown(&experiments::run_table2(&params, args.seed)?)
        }
        Artifact::T3 => {
            let (Some(train_path), Some(test_path)) = (&args.train, &args.test) else {
                bail!("t3 needs --train and --test (the wine data are not bundled)");
            };
            let mut params = GridParams::wine();
            if let Some(s) = args.starts {
                params.starts = s;
            }
            let mut train = load(train_path)?;
            let mut test = load(test_path)?;
            if args.standardize {
                let (tr, mut others, _) = data::standardize(&train, &[test])?;
                train = tr;
                test = others.remove(0);
            }
            experiments::grid_markdown(&experiments::run_grid(&train, &test, &params, args.seed)?)
        }
        Artifact::Fig3 => {
            let out = experiments::run_fig3(&TraceParams::default(), args.seed)?;
            eprint!("{}", out.summary());
            out.trace.to_csv_string(true)
        }
    };
    emit(args.out.as_deref(), &text)
}
