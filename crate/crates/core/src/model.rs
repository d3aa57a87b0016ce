//! Trained decision functions `s(x) = Σᵢ cᵢ K(xᵢ, x)`, multi-start
//! training and the model file format.
//!
//! Model files are plain text:
//!
//! ```text
//! splitsvm-model 1
//! kernel <gaussian|matern1> <sigma>
//! lambda <λ>
//! loss <hinge|pl2|tlog|ramp>
//! rho <ρ>
//! converged <true|false>
//! residual <‖α − Ac‖₂>
//! objective <F(Ac) + λcᵀAc>
//! scaling <none|standard>
//! [mean <d values>]
//! [std <d values>]
//! n <N>
//! d <d>
//! <x₁ … x_d c>      (N rows)
//! ```
//!
//! All reals are written with 17 significant digits so that a load
//! reproduces every value bit for bit.

use std::fmt::Write as _;
use std::path::Path;

use rayon::prelude::*;

use crate::admm::{
    admm_run, clamped_quad_form, AdmmConfig, AdmmRun, AdmmState, Problem, RhoCheck, RunStatus,
};
use crate::data::{Dataset, Label, Standardization};
use crate::error::{Error, Result};
use crate::kernel::{gram, min_eigenvalue, GramMatrix, KernelFamily, KernelSpec};
use crate::loss::{LossKind, MarginLoss};

pub const MODEL_MAGIC: &str = "splitsvm-model";
pub const MODEL_VERSION: u32 = 1;

/// Run summary stored alongside the coefficients.
#[derive(Debug, Clone, PartialEq)]
pub struct ModelMeta {
    pub loss: LossKind,
    pub rho: f64,
    pub converged: bool,
    pub residual: f64,
    pub objective: f64,
}

#[derive(Debug, Clone, PartialEq)]
pub struct TrainedModel {
    kernel: KernelSpec,
    lambda: f64,
    inputs: Vec<Vec<f64>>,
    coeffs: Vec<f64>,
    meta: ModelMeta,
    scaling: Option<Standardization>,
}

impl TrainedModel {
    pub fn new(
        kernel: KernelSpec,
        lambda: f64,
        inputs: Vec<Vec<f64>>,
        coeffs: Vec<f64>,
        meta: ModelMeta,
    ) -> Result<Self> {
        if inputs.is_empty() {
            return Err(Error::InvalidInput(
                "model needs at least one training point".into(),
            ));
        }
        if inputs.len() != coeffs.len() {
            return Err(Error::InvalidInput(format!(
                "model has {} training points but {} coefficients",
                inputs.len(),
                coeffs.len()
            )));
        }
        let d = inputs[0].len();
        if d == 0 || inputs.iter().any(|x| x.len() != d) {
            return Err(Error::InvalidInput(
                "training points have inconsistent dimensions".into(),
            ));
        }
        if !(lambda > 0.0 && lambda.is_finite()) {
            return Err(Error::InvalidInput(format!(
                "lambda must be positive, got {lambda}"
            )));
        }
        Ok(Self {
            kernel,
            lambda,
            inputs,
            coeffs,
            meta,
            scaling: None,
        })
    }

    /// Attaches the feature scaling applied to raw inputs before evaluation.
    pub fn with_scaling(mut self, scaling: Standardization) -> Result<Self> {
        if scaling.means.len() != self.dim() || scaling.stds.len() != self.dim() {
            return Err(Error::DimensionMismatch {
                expected: self.dim(),
                found: scaling.means.len(),
            });
        }
        self.scaling = Some(scaling);
        Ok(self)
    }

    pub fn kernel(&self) -> &KernelSpec {
        &self.kernel
    }

    pub fn lambda(&self) -> f64 {
        self.lambda
    }

    pub fn inputs(&self) -> &[Vec<f64>] {
        &self.inputs
    }

    pub fn coeffs(&self) -> &[f64] {
        &self.coeffs
    }

    pub fn meta(&self) -> &ModelMeta {
        &self.meta
    }

    pub fn scaling(&self) -> Option<&Standardization> {
        self.scaling.as_ref()
    }

    pub fn dim(&self) -> usize {
        self.inputs[0].len()
    }

    /// `Σᵢ cᵢ K(xᵢ, x)` for a point already in the model's feature space.
    pub fn decision_value(&self, x: &[f64]) -> Result<f64> {
        if x.len() != self.dim() {
            return Err(Error::DimensionMismatch {
                expected: self.dim(),
                found: x.len(),
            });
        }
        if x.iter().any(|v| !v.is_finite()) {
            return Err(Error::InvalidInput(
                "prediction input has a non-finite feature".into(),
            ));
        }
        Ok(self
            .inputs
            .iter()
            .zip(&self.coeffs)
            .map(|(xi, c)| c * self.kernel.eval_unchecked(xi, x))
            .sum())
    }

    /// `+1` when the decision value is `≥ 0`, else `−1`.
    pub fn classify(&self, x: &[f64]) -> Result<Label> {
        Ok(Label::from_sign(self.decision_value(x)?))
    }

    /// Applies the stored scaling (if any), then classifies.
    pub fn classify_raw(&self, x: &[f64]) -> Result<Label> {
        match &self.scaling {
            Some(s) if x.len() == self.dim() => self.classify(&s.apply_point(x)),
            _ => self.classify(x),
        }
    }

    /// Fraction of `data` (raw features) classified correctly.
    pub fn evaluate(&self, data: &Dataset) -> Result<Evaluation> {
        if data.dim() != self.dim() {
            return Err(Error::DimensionMismatch {
                expected: self.dim(),
                found: data.dim(),
            });
        }
        let correct = data
            .inputs()
            .par_iter()
            .zip(data.labels().par_iter())
            .map(|(x, &y)| Ok(usize::from(self.classify_raw(x)? == y)))
            .sum::<Result<usize>>()?;
        Ok(Evaluation {
            correct,
            total: data.len(),
        })
    }

    pub fn save(&self, path: &Path) -> Result<()> {
        crate::io::write_string_atomic(path, &self.to_text())
    }

    pub fn load(path: &Path) -> Result<Self> {
        Self::from_text(&std::fs::read_to_string(path)?)
    }

    pub fn to_text(&self) -> String {
        let mut s = String::new();
        let m = &self.meta;
        let _ = writeln!(s, "{MODEL_MAGIC} {MODEL_VERSION}");
        let _ = writeln!(
            s,
            "kernel {} {}",
            self.kernel.family(),
            real(self.kernel.sigma())
        );
        let _ = writeln!(s, "lambda {}", real(self.lambda));
        let _ = writeln!(s, "loss {}", m.loss);
        let _ = writeln!(s, "rho {}", real(m.rho));
        let _ = writeln!(s, "converged {}", m.converged);
        let _ = writeln!(s, "residual {}", real(m.residual));
        let _ = writeln!(s, "objective {}", real(m.objective));
        match &self.scaling {
            None => {
                let _ = writeln!(s, "scaling none");
            }
            Some(st) => {
                let _ = writeln!(s, "scaling standard");
                let _ = writeln!(s, "mean {}", join(&st.means));
                let _ = writeln!(s, "std {}", join(&st.stds));
            }
        }
        let _ = writeln!(s, "n {}", self.inputs.len());
        let _ = writeln!(s, "d {}", self.dim());
        for (x, c) in self.inputs.iter().zip(&self.coeffs) {
            let _ = writeln!(s, "{} {}", join(x), real(*c));
        }
        s
    }

    pub fn from_text(text: &str) -> Result<Self> {
        let mut p = LineParser::new(text);

        let (line, header) = p.next_line()?;
        let mut parts = header.split_whitespace();
        if parts.next() != Some(MODEL_MAGIC) {
            return Err(Error::Parse {
                line,
                message: format!("expected '{MODEL_MAGIC} <version>' header"),
            });
        }
        let version = parts.next().unwrap_or("");
        if version != MODEL_VERSION.to_string() {
            return Err(Error::Version(version.to_string()));
        }

        let kernel_fields = p.field("kernel")?;
        let [family, sigma] = kernel_fields.1.as_slice() else {
            return Err(Error::Parse {
                line: kernel_fields.0,
                message: "expected 'kernel <family> <sigma>'".into(),
            });
        };
        let family: KernelFamily = family
            .parse()
            .map_err(|e: Error| p.err(kernel_fields.0, e))?;
        let sigma = parse_real(sigma, kernel_fields.0)?;
        let kernel = KernelSpec::new(family, sigma).map_err(|e| p.err(kernel_fields.0, e))?;

        let lambda = p.real("lambda")?;
        let (line, loss) = p.single("loss")?;
        let loss: LossKind = loss.parse().map_err(|e: Error| p.err(line, e))?;
        let rho = p.real("rho")?;
        let (line, converged) = p.single("converged")?;
        let converged = match converged.as_str() {
            "true" => true,
            "false" => false,
            other => {
                return Err(Error::Parse {
                    line,
                    message: format!("expected true or false, found '{other}'"),
                })
            }
        };
        let residual = p.real("residual")?;
        let objective = p.real("objective")?;
        let (line, scaling_kind) = p.single("scaling")?;
        let scaling = match scaling_kind.as_str() {
            "none" => None,
            "standard" => {
                let (l1, means) = p.field("mean")?;
                let (l2, stds) = p.field("std")?;
                Some(Standardization {
                    means: parse_reals(&means, l1)?,
                    stds: parse_reals(&stds, l2)?,
                })
            }
            other => {
                return Err(Error::Parse {
                    line,
                    message: format!("unknown scaling '{other}'"),
                })
            }
        };
        let n = p.count("n")?;
        let d = p.count("d")?;
        if n == 0 || d == 0 {
            return Err(Error::Parse {
                line: p.line_no,
                message: "n and d must be positive".into(),
            });
        }

        let mut inputs = Vec::with_capacity(n);
        let mut coeffs = Vec::with_capacity(n);
        for _ in 0..n {
            let (line, row) = p.next_line().map_err(|_| Error::Parse {
                line: p.line_no + 1,
                message: format!("expected {n} data rows, found {}", inputs.len()),
            })?;
            let values = parse_reals(
                &row.split_whitespace()
                    .map(str::to_owned)
                    .collect::<Vec<_>>(),
                line,
            )?;
            if values.len() != d + 1 {
                return Err(Error::Parse {
                    line,
                    message: format!(
                        "expected {} values (d features + coefficient), found {}",
                        d + 1,
                        values.len()
                    ),
                });
            }
            coeffs.push(values[d]);
            inputs.push(values[..d].to_vec());
        }
        if let Ok((line, extra)) = p.next_line() {
            return Err(Error::InvalidInput(format!(
                "line {line}: unexpected trailing content '{extra}' (coefficient/input count mismatch?)"
            )));
        }

        let meta = ModelMeta {
            loss,
            rho,
            converged,
            residual,
            objective,
        };
        let model = TrainedModel::new(kernel, lambda, inputs, coeffs, meta)?;
        match scaling {
            Some(s) => model.with_scaling(s),
            None => Ok(model),
        }
    }
}

fn real(v: f64) -> String {
    format!("{v:.16e}")
}

fn join(v: &[f64]) -> String {
    v.iter().map(|x| real(*x)).collect::<Vec<_>>().join(" ")
}

fn parse_real(s: &str, line: usize) -> Result<f64> {
    s.parse::<f64>().map_err(|_| Error::Parse {
        line,
        message: format!("'{s}' is not a number"),
    })
}

fn parse_reals(fields: &[String], line: usize) -> Result<Vec<f64>> {
    fields.iter().map(|f| parse_real(f, line)).collect()
}

struct LineParser<'a> {
    lines: std::iter::Enumerate<std::str::Lines<'a>>,
    line_no: usize,
}

impl<'a> LineParser<'a> {
    fn new(text: &'a str) -> Self {
        Self {
            lines: text.lines().enumerate(),
            line_no: 0,
        }
    }

    fn next_line(&mut self) -> Result<(usize, &'a str)> {
        for (i, l) in self.lines.by_ref() {
            self.line_no = i + 1;
            let t = l.trim();
            if !t.is_empty() {
                return Ok((i + 1, t));
            }
        }
        Err(Error::Parse {
            line: self.line_no + 1,
            message: "unexpected end of file".into(),
        })
    }

    fn field(&mut self, key: &str) -> Result<(usize, Vec<String>)> {
        let (line, text) = self.next_line()?;
        let mut parts = text.split_whitespace();
        if parts.next() != Some(key) {
            return Err(Error::Parse {
                line,
                message: format!("expected field '{key}'"),
            });
        }
        Ok((line, parts.map(str::to_owned).collect()))
    }

    fn single(&mut self, key: &str) -> Result<(usize, String)> {
        let (line, mut values) = self.field(key)?;
        if values.len() != 1 {
            return Err(Error::Parse {
                line,
                message: format!("field '{key}' takes exactly one value"),
            });
        }
        Ok((line, values.remove(0)))
    }

    fn real(&mut self, key: &str) -> Result<f64> {
        let (line, v) = self.single(key)?;
        parse_real(&v, line)
    }

    fn count(&mut self, key: &str) -> Result<usize> {
        let (line, v) = self.single(key)?;
        v.parse::<usize>().map_err(|_| Error::Parse {
            line,
            message: format!("'{v}' is not a count"),
        })
    }

    fn err(&self, line: usize, e: Error) -> Error {
        Error::Parse {
            line,
            message: e.to_string(),
        }
    }
}

/// Correct/total counts on a dataset.
#[derive(Debug, Clone, Copy, PartialEq, Eq)]
pub struct Evaluation {
    pub correct: usize,
    pub total: usize,
}

impl Evaluation {
    pub fn accuracy(&self) -> f64 {
        self.correct as f64 / self.total as f64
    }

    /// Accuracy in percent with one decimal, e.g. `90.8%`.
    pub fn percent(&self) -> String {
        format!("{:.1}%", 100.0 * self.accuracy())
    }
}

/// `cᵀAc`, with tiny negative rounding clamped to zero.
pub fn rkhs_norm_sq(gram: &GramMatrix, c: &[f64]) -> Result<f64> {
    if c.len() != gram.size() {
        return Err(Error::DimensionMismatch {
            expected: gram.size(),
            found: c.len(),
        });
    }
    clamped_quad_form(gram, c)
}

/// Outcome of one start of [`train_multistart`].
#[derive(Debug, Clone, PartialEq)]
pub struct StartSummary {
    pub index: usize,
    pub seed: u64,
    /// `None` when the start failed; see `error`.
    pub objective: Option<f64>,
    pub iterations: usize,
    pub residual: f64,
    pub converged: bool,
    pub error: Option<String>,
}

#[derive(Debug, Clone)]
pub struct MultiStartResult {
    pub model: TrainedModel,
    pub best_index: usize,
    pub summaries: Vec<StartSummary>,
    /// Full run of the selected start (trace, diagnostics, final state).
    pub best_run: AdmmRun,
    pub lambda_min: Option<f64>,
    pub rho_check: Option<RhoCheck>,
}

/// Seed of start `index` given the base seed.
pub fn start_seed(seed: u64, index: usize) -> u64 {
    seed.wrapping_add(index as u64)
}

/// Trains from `starts` random initializations and keeps the run with the
/// lowest regularized risk (ties go to the lowest start index).
pub fn train_multistart(
    data: &Dataset,
    kernel: KernelSpec,
    loss: &MarginLoss,
    cfg: &AdmmConfig,
    starts: usize,
    seed: u64,
) -> Result<MultiStartResult> {
    cfg.validate()?;
    let a = gram(&kernel, data.inputs())?;
    train_multistart_with_gram(data, &a, kernel, loss, cfg, starts, seed)
}

/// As [`train_multistart`], on a Gram matrix the caller already built.
pub fn train_multistart_with_gram(
    data: &Dataset,
    a: &GramMatrix,
    kernel: KernelSpec,
    loss: &MarginLoss,
    cfg: &AdmmConfig,
    starts: usize,
    seed: u64,
) -> Result<MultiStartResult> {
    cfg.validate()?;
    if starts == 0 {
        return Err(Error::InvalidConfig("starts must be at least 1".into()));
    }

    // λ_min is shared by all starts.
    let mut lambda_min = None;
    if cfg.check_descent || cfg.enforce_rho_condition != crate::admm::RhoPolicy::Off {
        match min_eigenvalue(a, crate::admm::LAMBDA_MIN_TOL) {
            Ok(l) => lambda_min = Some(l),
            Err(e) if cfg.enforce_rho_condition == crate::admm::RhoPolicy::Error => return Err(e),
            Err(e) => log::warn!("could not estimate the smallest Gram eigenvalue: {e}"),
        }
    }
    train_multistart_prepared(data, a, kernel, loss, cfg, starts, seed, lambda_min)
}

/// As [`train_multistart_with_gram`] with λ_min(A) already known. With
/// `None`, each start estimates it itself if the configuration needs it.
#[allow(clippy::too_many_arguments)]
pub fn train_multistart_prepared(
    data: &Dataset,
    a: &GramMatrix,
    kernel: KernelSpec,
    loss: &MarginLoss,
    cfg: &AdmmConfig,
    starts: usize,
    seed: u64,
    lambda_min: Option<f64>,
) -> Result<MultiStartResult> {
    cfg.validate()?;
    if starts == 0 {
        return Err(Error::InvalidConfig("starts must be at least 1".into()));
    }
    let mut problem = Problem::new(a, data.labels(), loss)?;
    if let Some(l) = lambda_min {
        problem = problem.with_lambda_min(l);
    }

    let runs: Vec<Result<AdmmRun>> = (0..starts)
        .into_par_iter()
        .map(|i| {
            let init = AdmmState::random(a, cfg.lambda, start_seed(seed, i));
            admm_run(&problem, cfg, init)
        })
        .collect();

    let mut summaries = Vec::with_capacity(starts);
    let mut best: Option<(usize, f64)> = None;
    let mut objectives = Vec::with_capacity(starts);
    for (i, run) in runs.iter().enumerate() {
        match run {
            Ok(run) => {
                let obj = run
                    .trace
                    .last()
                    .map(|r| r.objective)
                    .unwrap_or(f64::INFINITY);
                if best.is_none_or(|(_, b)| obj < b) {
                    best = Some((i, obj));
                }
                objectives.push(Some(obj));
                summaries.push(StartSummary {
                    index: i,
                    seed: start_seed(seed, i),
                    objective: Some(obj),
                    iterations: run.iterations(),
                    residual: run.trace.last().map(|r| r.residual).unwrap_or(f64::NAN),
                    converged: run.status == RunStatus::Converged,
                    error: None,
                });
            }
            Err(e) => {
                objectives.push(None);
                summaries.push(StartSummary {
                    index: i,
                    seed: start_seed(seed, i),
                    objective: None,
                    iterations: 0,
                    residual: f64::NAN,
                    converged: false,
                    error: Some(e.to_string()),
                });
            }
        }
    }

    let Some((best_index, objective)) = best else {
        let detail = summaries
            .iter()
            .map(|s| format!("start {}: {}", s.index, s.error.as_deref().unwrap_or("?")))
            .collect::<Vec<_>>()
            .join("; ");
        return Err(Error::Training(format!(
            "all {starts} starts failed ({detail})"
        )));
    };
    let best_run = runs
        .into_iter()
        .nth(best_index)
        .expect("index in range")
        .expect("best start succeeded");
    let meta = ModelMeta {
        loss: loss.kind(),
        rho: cfg.rho,
        converged: best_run.converged(),
        residual: best_run
            .trace
            .last()
            .map(|r| r.residual)
            .unwrap_or(f64::NAN),
        objective,
    };
    let model = TrainedModel::new(
        kernel,
        cfg.lambda,
        data.inputs().to_vec(),
        best_run.state.c.clone(),
        meta,
    )?;
    Ok(MultiStartResult {
        model,
        best_index,
        summaries,
        rho_check: best_run.rho_check,
        best_run,
        lambda_min,
    })
}
