//! Reference experiment protocols: the sample-size
//! sweep, the loss × kernel grid (on synthetic or user-supplied data) and
//! the single-run convergence trace.
//!
//! Every protocol is a pure function of its parameters and one seed. The
//! data are drawn from `seed`, the random initializations from
//! [`training_seed`]`(seed)` onwards, so changing the number of starts never
//! changes the data.

use std::fmt::Write as _;
use std::time::Instant;

use crate::admm::{admm_run, AdmmConfig, AdmmState, IterationTrace, Problem, RhoPolicy, RunStatus};
use crate::data::{generate_synthetic, Dataset};
use crate::error::{Error, Result};
use crate::kernel::{gram, min_eigenvalue, KernelFamily, KernelSpec};
use crate::loss::{LossKind, MarginLoss};
use crate::model::{train_multistart_with_gram, Evaluation, ModelMeta, TrainedModel};

/// Offset separating the initialization streams from the data stream.
pub const TRAINING_SEED_OFFSET: u64 = 1 << 32;

/// Base seed of the multi-start initializations for a protocol seed.
pub fn training_seed(seed: u64) -> u64 {
    seed.wrapping_add(TRAINING_SEED_OFFSET)
}

fn solver_config(lambda: f64, rho: f64, eps0: f64) -> AdmmConfig {
    // The ρ-condition is reported once per row instead of once per start.
    AdmmConfig {
        enforce_rho_condition: RhoPolicy::Off,
        ..AdmmConfig::new(lambda, rho, eps0)
    }
}

/// Parameters of a loss × kernel grid.
#[derive(Debug, Clone, PartialEq)]
pub struct GridParams {
    pub lambda: f64,
    pub rho: f64,
    pub eps0: f64,
    pub starts: usize,
    pub sigma_gaussian: f64,
    pub sigma_matern: f64,
}

impl GridParams {
    /// Synthetic grid: 300 training and 120 test points.
    pub fn synthetic() -> Self {
        Self {
            lambda: 0.5,
            rho: 5.0,
            eps0: 1e-12,
            starts: 20,
            sigma_gaussian: 2.0,
            sigma_matern: 1.0,
        }
    }

    /// Grid used for the wine quality data.
    pub fn wine() -> Self {
        Self {
            lambda: 0.5,
            rho: 1.0,
            eps0: 1e-12,
            starts: 20,
            sigma_gaussian: 5.0,
            sigma_matern: 5.0,
        }
    }

    fn kernels(&self) -> Result<[KernelSpec; 2]> {
        Ok([
            KernelSpec::gaussian(self.sigma_gaussian)?,
            KernelSpec::matern1(self.sigma_matern)?,
        ])
    }
}

pub const SYNTHETIC_GRID_TRAIN: usize = 300;
pub const SYNTHETIC_GRID_TEST: usize = 120;

#[derive(Debug, Clone, PartialEq)]
pub struct GridRow {
    pub loss: LossKind,
    pub kernel: KernelSpec,
    pub train: Evaluation,
    pub test: Evaluation,
    pub objective: f64,
    pub best_start: usize,
    pub converged_starts: usize,
    pub iterations: usize,
    /// `None` when λ_min could not be estimated.
    pub rho_condition: Option<bool>,
}

fn kernel_tag(kernel: &KernelSpec) -> &'static str {
    match kernel.family() {
        KernelFamily::Gaussian => "K1",
        KernelFamily::Matern1 => "K2",
    }
}

/// Trains every (loss, kernel) pair, losses varying fastest within each
/// kernel: L1K1, L2K1, L3K1, L4K1, L1K2, …
pub fn run_grid(
    train: &Dataset,
    test: &Dataset,
    params: &GridParams,
    seed: u64,
) -> Result<Vec<GridRow>> {
    if train.dim() != test.dim() {
        return Err(Error::DimensionMismatch {
            expected: train.dim(),
            found: test.dim(),
        });
    }
    let cfg = solver_config(params.lambda, params.rho, params.eps0);
    cfg.validate()?;
    let mut rows = Vec::with_capacity(8);
    for kernel in params.kernels()? {
        let a = gram(&kernel, train.inputs())?;
        for loss in LossKind::ALL {
            let fit = train_multistart_with_gram(
                train,
                &a,
                kernel,
                &MarginLoss::new(loss),
                &cfg,
                params.starts,
                training_seed(seed),
            )?;
            log::info!(
                "{}{}: best start {} objective {:e}",
                loss.short_name(),
                kernel_tag(&kernel),
                fit.best_index,
                fit.model.meta().objective
            );
            rows.push(GridRow {
                loss,
                kernel,
                train: fit.model.evaluate(train)?,
                test: fit.model.evaluate(test)?,
                objective: fit.model.meta().objective,
                best_start: fit.best_index,
                converged_starts: fit.summaries.iter().filter(|s| s.converged).count(),
                iterations: fit.best_run.iterations(),
                rho_condition: fit.rho_check.map(|c| c.satisfied),
            });
        }
    }
    Ok(rows)
}

/// The synthetic loss × kernel grid.
pub fn run_table2(params: &GridParams, seed: u64) -> Result<Vec<GridRow>> {
    let (train, test) = generate_synthetic(SYNTHETIC_GRID_TRAIN, SYNTHETIC_GRID_TEST, seed)?;
    run_grid(&train, &test, params, seed)
}

/// Markdown table of a grid. Contains no timings, so equal inputs give
/// byte-identical output.
pub fn grid_markdown(rows: &[GridRow]) -> String {
    let mut out = String::new();
    out.push_str("| Loss | Kernel | Training Accuracy | Testing Accuracy | Objective | Best Start | Converged Starts |\n");
    out.push_str("|---|---|---|---|---|---|---|\n");
    for r in rows {
        let _ = writeln!(
            out,
            "| {} ({}) | {} ({}, σ={}) | {} | {} | {:.10e} | {} | {} |",
            r.loss.short_name(),
            r.loss.name(),
            kernel_tag(&r.kernel),
            r.kernel.family(),
            r.kernel.sigma(),
            r.train.percent(),
            r.test.percent(),
            r.objective,
            r.best_start,
            r.converged_starts,
        );
    }
    out
}

/// Parameters of the sample-size sweep.
#[derive(Debug, Clone, PartialEq)]
pub struct SweepParams {
    pub sizes: Vec<usize>,
    pub loss: LossKind,
    pub sigma: f64,
    pub lambda: f64,
    pub rho: f64,
    pub eps0: f64,
    pub starts: usize,
}

impl Default for SweepParams {
    fn default() -> Self {
        Self {
            sizes: (1..=10).map(|k| 100 * k).collect(),
            loss: LossKind::PiecewiseLinear,
            sigma: 1.0,
            lambda: 0.1,
            rho: 1.0,
            eps0: 1e-12,
            starts: 20,
        }
    }
}

/// Test set size paired with a training size: 40% of it, rounded to even.
pub fn sweep_test_size(n_train: usize) -> usize {
    let t = (2 * n_train).div_ceil(5);
    (t + t % 2).max(2)
}

#[derive(Debug, Clone, PartialEq)]
pub struct SweepRow {
    pub n_train: usize,
    pub n_test: usize,
    /// Wall-clock seconds for Gram construction plus multi-start training.
    pub seconds: f64,
    pub train: Evaluation,
    pub test: Evaluation,
    pub objective: f64,
}

pub fn run_table1(params: &SweepParams, seed: u64) -> Result<Vec<SweepRow>> {
    let cfg = solver_config(params.lambda, params.rho, params.eps0);
    cfg.validate()?;
    let kernel = KernelSpec::gaussian(params.sigma)?;
    let loss = MarginLoss::new(params.loss);
    let mut rows = Vec::with_capacity(params.sizes.len());
    for &n in &params.sizes {
        let n_test = sweep_test_size(n);
        let (train, test) = generate_synthetic(n, n_test, seed)?;
        let started = Instant::now();
        let a = gram(&kernel, train.inputs())?;
        let fit = train_multistart_with_gram(
            &train,
            &a,
            kernel,
            &loss,
            &cfg,
            params.starts,
            training_seed(seed),
        )?;
        let seconds = started.elapsed().as_secs_f64();
        log::info!("N={n}: {seconds:.3} s");
        rows.push(SweepRow {
            n_train: n,
            n_test,
            seconds,
            train: fit.model.evaluate(&train)?,
            test: fit.model.evaluate(&test)?,
            objective: fit.model.meta().objective,
        });
    }
    Ok(rows)
}

pub fn sweep_markdown(rows: &[SweepRow]) -> String {
    let mut out = String::new();
    out.push_str(
        "| Training Data | Testing Data | Time (s) | Training Accuracy | Testing Accuracy |\n",
    );
    out.push_str("|---|---|---|---|---|\n");
    for r in rows {
        let _ = writeln!(
            out,
            "| {} | {} | {:.3} | {} | {} |",
            r.n_train,
            r.n_test,
            r.seconds,
            r.train.percent(),
            r.test.percent()
        );
    }
    out
}

/// Parameters of the single-run convergence experiment.
#[derive(Debug, Clone, PartialEq)]
pub struct TraceParams {
    pub n_train: usize,
    pub loss: LossKind,
    pub sigma: f64,
    pub lambda: f64,
    pub rho: f64,
    pub eps0: f64,
}

impl Default for TraceParams {
    fn default() -> Self {
        Self {
            n_train: 300,
            loss: LossKind::TruncatedLog,
            sigma: 1.0,
            lambda: 0.1,
            rho: 0.05,
            eps0: 1e-12,
        }
    }
}

#[derive(Debug, Clone)]
pub struct TraceOutcome {
    pub trace: IterationTrace,
    pub status: RunStatus,
    pub lambda_min: Option<f64>,
    pub train: Evaluation,
}

impl TraceOutcome {
    pub fn summary(&self) -> String {
        let last = self.trace.last();
        format!(
            "status: {}\niterations: {}\nfinal residual: {:e}\nfinal objective: {:e}\ntraining accuracy: {}\n",
            self.status,
            self.trace.len(),
            last.map_or(f64::NAN, |r| r.residual),
            last.map_or(f64::NAN, |r| r.objective),
            self.train.percent()
        )
    }
}

/// One run from a single random start in `[-10, 10]^N`.
pub fn run_fig3(params: &TraceParams, seed: u64) -> Result<TraceOutcome> {
    let cfg = solver_config(params.lambda, params.rho, params.eps0);
    cfg.validate()?;
    let (train, _) = generate_synthetic(params.n_train, 2, seed)?;
    let kernel = KernelSpec::gaussian(params.sigma)?;
    let a = gram(&kernel, train.inputs())?;
    let loss = MarginLoss::new(params.loss);
    let mut problem = Problem::new(&a, train.labels(), &loss)?;
    let lambda_min = match min_eigenvalue(&a, crate::admm::LAMBDA_MIN_TOL) {
        Ok(l) => {
            problem = problem.with_lambda_min(l);
            Some(l)
        }
        Err(e) => {
            log::warn!("could not estimate the smallest Gram eigenvalue: {e}");
            None
        }
    };
    let init = AdmmState::random(&a, cfg.lambda, training_seed(seed));
    let run = admm_run(&problem, &cfg, init)?;
    let meta = ModelMeta {
        loss: params.loss,
        rho: cfg.rho,
        converged: run.converged(),
        residual: run.trace.last().map_or(f64::NAN, |r| r.residual),
        objective: run.trace.last().map_or(f64::NAN, |r| r.objective),
    };
    let model = TrainedModel::new(
        kernel,
        cfg.lambda,
        train.inputs().to_vec(),
        run.state.c.clone(),
        meta,
    )?;
    let train_eval = model.evaluate(&train)?;
    Ok(TraceOutcome {
        trace: run.trace,
        status: run.status,
        lambda_min,
        train: train_eval,
    })
}

#[cfg(test)]
mod tests {
    use super::*;

    #[test]
    fn test_sizes() {
        assert_eq!(sweep_test_size(100), 40);
        assert_eq!(sweep_test_size(1000), 400);
        assert_eq!(sweep_test_size(10), 4);
        assert_eq!(sweep_test_size(2), 2);
    }

    #[test]
    fn grid_order_and_markdown() {
        let (train, test) = generate_synthetic(20, 10, 3).unwrap();
        let params = GridParams {
            starts: 2,
            ..GridParams::synthetic()
        };
        let rows = run_grid(&train, &test, &params, 3).unwrap();
        let tags: Vec<String> = rows
            .iter()
            .map(|r| format!("{}{}", r.loss.short_name(), kernel_tag(&r.kernel)))
            .collect();
        assert_eq!(
            tags,
            ["L1K1", "L2K1", "L3K1", "L4K1", "L1K2", "L2K2", "L3K2", "L4K2"]
        );
        let md = grid_markdown(&rows);
        assert_eq!(md.lines().count(), 10);
        assert_eq!(
            md,
            grid_markdown(&run_grid(&train, &test, &params, 3).unwrap())
        );
    }

    #[test]
    fn small_sweep() {
        let params = SweepParams {
            sizes: vec![20, 40],
            starts: 2,
            ..SweepParams::default()
        };
        let rows = run_table1(&params, 5).unwrap();
        assert_eq!(rows.len(), 2);
        assert_eq!(rows[1].n_test, 16);
        assert!(sweep_markdown(&rows).contains("| 40 | 16 |"));
    }

    #[test]
    fn short_trace() {
        let params = TraceParams {
            n_train: 30,
            ..TraceParams::default()
        };
        let out = run_fig3(&params, 9).unwrap();
        assert_eq!(out.status, RunStatus::Converged);
        assert!(out.trace.last().unwrap().residual < 1e-12);
    }
}
