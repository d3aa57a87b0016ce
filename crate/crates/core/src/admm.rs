//! The splitting iteration.
//!
//! Solves `min_c F(Ac) + λ cᵀAc` with `F(α) = (1/N) Σ L(xᵢ, yᵢ, αᵢ)` by
//! splitting on the constraint `α = Ac` and alternating
//!
//! 1. `αᵢ ← prox` of `L(yᵢ, ·)/N` at `uᵢ = (Acᵏ)ᵢ − γᵢᵏ/ρ`, coordinate-wise;
//! 2. `c ← (2λI + ρA)⁻¹ (ρα + γᵏ)` by conjugate gradients warm-started at `cᵏ`;
//! 3. `γ ← 2λc`, the closed form of the dual ascent step.
//!
//! The run stops once `‖α − Ac‖₂ < ε₀`.

use std::fmt;
use std::io::Write;
use std::path::Path;
use std::str::FromStr;

use rand::distr::{Distribution, Uniform};
use rand::SeedableRng;
use rand_chacha::ChaCha8Rng;

use crate::data::Label;
use crate::error::{Error, Result};
use crate::kernel::{min_eigenvalue, GramMatrix};
use crate::linalg::{cg_solve, dot, norm2, norm_inf, Shifted};
use crate::loss::{loss_value, prox, MarginLoss, ProxParams};

/// Random initial coefficients are drawn from `[-INIT_RANGE, INIT_RANGE]`.
pub const INIT_RANGE: f64 = 10.0;

/// Allowed augmented-Lagrangian increase before a descent violation is flagged.
pub const DESCENT_SLACK: f64 = 1e-9;

/// Radicands of RKHS norms above this negative value are treated as rounding noise.
pub const RADICAND_SLACK: f64 = 1e-12;

/// Relative accuracy of λ_min(A) when it has to be computed for the ρ check.
pub const LAMBDA_MIN_TOL: f64 = 1e-6;

/// What to do when `ρ > 4λ/λ_min(A)` does not hold.
#[derive(Debug, Clone, Copy, PartialEq, Eq, Default)]
pub enum RhoPolicy {
    Off,
    #[default]
    Warn,
    Error,
}

impl FromStr for RhoPolicy {
    type Err = Error;

    fn from_str(s: &str) -> Result<Self> {
        match s.to_ascii_lowercase().as_str() {
            "off" => Ok(RhoPolicy::Off),
            "warn" => Ok(RhoPolicy::Warn),
            "error" => Ok(RhoPolicy::Error),
            other => Err(Error::InvalidInput(format!(
                "unknown rho policy '{other}' (expected off, warn or error)"
            ))),
        }
    }
}

impl fmt::Display for RhoPolicy {
    fn fmt(&self, f: &mut fmt::Formatter<'_>) -> fmt::Result {
        f.write_str(match self {
            RhoPolicy::Off => "off",
            RhoPolicy::Warn => "warn",
            RhoPolicy::Error => "error",
        })
    }
}

#[derive(Debug, Clone, PartialEq)]
pub struct AdmmConfig {
    /// Regularization weight λ > 0.
    pub lambda: f64,
    /// Penalty ρ > 0.
    pub rho: f64,
    /// Stopping threshold on `‖α − Ac‖₂`.
    pub eps0: f64,
    pub max_iter: usize,
    /// Relative residual tolerance of the inner CG solve.
    pub cg_tol: f64,
    /// Inner CG iteration cap; `None` means `10·N`.
    pub cg_max_iter: Option<usize>,
    /// Flag increases of the augmented Lagrangian when the ρ condition holds.
    pub check_descent: bool,
    pub enforce_rho_condition: RhoPolicy,
}

impl Default for AdmmConfig {
    fn default() -> Self {
        Self {
            lambda: 0.1,
            rho: 0.05,
            eps0: 1e-12,
            max_iter: 10_000,
            cg_tol: 1e-12,
            cg_max_iter: None,
            check_descent: true,
            enforce_rho_condition: RhoPolicy::Warn,
        }
    }
}

impl AdmmConfig {
    pub fn new(lambda: f64, rho: f64, eps0: f64) -> Self {
        Self {
            lambda,
            rho,
            eps0,
            ..Self::default()
        }
    }

    pub fn validate(&self) -> Result<()> {
        let positive = |name: &str, v: f64| {
            if v > 0.0 && v.is_finite() {
                Ok(())
            } else {
                Err(Error::InvalidConfig(format!(
                    "{name} must be positive and finite, got {v}"
                )))
            }
        };
        positive("lambda", self.lambda)?;
        positive("rho", self.rho)?;
        positive("eps0", self.eps0)?;
        positive("cg_tol", self.cg_tol)?;
        if self.max_iter == 0 {
            return Err(Error::InvalidConfig("max_iter must be at least 1".into()));
        }
        if self.cg_max_iter == Some(0) {
            return Err(Error::InvalidConfig(
                "cg_max_iter must be at least 1".into(),
            ));
        }
        Ok(())
    }

    fn cg_cap(&self, n: usize) -> usize {
        self.cg_max_iter.unwrap_or((10 * n).max(100))
    }
}

/// Training data as seen by the solver: Gram matrix, labels and loss.
#[derive(Debug, Clone, Copy)]
pub struct Problem<'a> {
    pub gram: &'a GramMatrix,
    pub labels: &'a [Label],
    pub loss: &'a MarginLoss,
    /// Precomputed λ_min(A), reused across runs on the same Gram matrix.
    pub lambda_min: Option<f64>,
}

impl<'a> Problem<'a> {
    pub fn new(gram: &'a GramMatrix, labels: &'a [Label], loss: &'a MarginLoss) -> Result<Self> {
        if gram.size() != labels.len() {
            return Err(Error::DimensionMismatch {
                expected: gram.size(),
                found: labels.len(),
            });
        }
        Ok(Self {
            gram,
            labels,
            loss,
            lambda_min: None,
        })
    }

    pub fn with_lambda_min(mut self, lambda_min: f64) -> Self {
        self.lambda_min = Some(lambda_min);
        self
    }

    pub fn size(&self) -> usize {
        self.labels.len()
    }

    /// `F(α) = (1/N) Σ L(yᵢ, αᵢ)`.
    pub fn empirical_risk(&self, alpha: &[f64]) -> f64 {
        let total: f64 = alpha
            .iter()
            .zip(self.labels)
            .map(|(&a, &y)| loss_value(self.loss, y, a))
            .sum();
        total / self.size() as f64
    }
}

/// Iterate `(α, c, γ)` and iteration counter.
#[derive(Debug, Clone, PartialEq)]
pub struct AdmmState {
    pub alpha: Vec<f64>,
    pub c: Vec<f64>,
    pub gamma: Vec<f64>,
    pub k: usize,
}

impl AdmmState {
    /// The self-consistent state `α = Ac`, `γ = 2λc` for given coefficients.
    pub fn from_coefficients(gram: &GramMatrix, c: Vec<f64>, lambda: f64) -> Result<Self> {
        if c.len() != gram.size() {
            return Err(Error::DimensionMismatch {
                expected: gram.size(),
                found: c.len(),
            });
        }
        let alpha = gram.mul_vec(&c);
        let gamma = c.iter().map(|x| 2.0 * lambda * x).collect();
        Ok(Self {
            alpha,
            c,
            gamma,
            k: 0,
        })
    }

    /// `c ~ Uniform[-10, 10]ᴺ` from a ChaCha8 stream, then made consistent.
    pub fn random(gram: &GramMatrix, lambda: f64, seed: u64) -> Self {
        let mut rng = ChaCha8Rng::seed_from_u64(seed);
        let dist = Uniform::new_inclusive(-INIT_RANGE, INIT_RANGE).expect("valid range");
        let c = (0..gram.size()).map(|_| dist.sample(&mut rng)).collect();
        Self::from_coefficients(gram, c, lambda).expect("length matches by construction")
    }

    fn check_dims(&self, n: usize) -> Result<()> {
        for v in [&self.alpha, &self.c, &self.gamma] {
            if v.len() != n {
                return Err(Error::DimensionMismatch {
                    expected: n,
                    found: v.len(),
                });
            }
        }
        Ok(())
    }
}

/// One row of the convergence trace.
#[derive(Debug, Clone, Copy, PartialEq)]
pub struct IterationRecord {
    pub k: usize,
    pub lagrangian: f64,
    pub objective: f64,
    /// `‖αᵏ − Acᵏ‖₂`.
    pub residual: f64,
    /// `‖sᵏ − sᵏ⁻¹‖_H`.
    pub step_norm_h: f64,
}

#[derive(Debug, Clone, Default, PartialEq)]
pub struct IterationTrace {
    pub records: Vec<IterationRecord>,
}

pub const TRACE_HEADER: &str = "k,lagrangian,objective,residual,step_norm_H";

impl IterationTrace {
    pub fn len(&self) -> usize {
        self.records.len()
    }

    pub fn is_empty(&self) -> bool {
        self.records.is_empty()
    }

    pub fn last(&self) -> Option<&IterationRecord> {
        self.records.last()
    }

    /// Running sums of the step norms.
    pub fn cumulative_step_norms(&self) -> Vec<f64> {
        self.records
            .iter()
            .scan(0.0, |acc, r| {
                *acc += r.step_norm_h;
                Some(*acc)
            })
            .collect()
    }

    /// CSV with [`TRACE_HEADER`]; with `cumulative`, an extra
    /// `cumulative_step_norm_H` column.
    pub fn write_csv<W: Write + ?Sized>(&self, w: &mut W, cumulative: bool) -> std::io::Result<()> {
        if cumulative {
            writeln!(w, "{TRACE_HEADER},cumulative_step_norm_H")?;
        } else {
            writeln!(w, "{TRACE_HEADER}")?;
        }
        let sums = self.cumulative_step_norms();
        for (r, s) in self.records.iter().zip(sums) {
            write!(
                w,
                "{},{:.16e},{:.16e},{:.16e},{:.16e}",
                r.k, r.lagrangian, r.objective, r.residual, r.step_norm_h
            )?;
            if cumulative {
                write!(w, ",{s:.16e}")?;
            }
            writeln!(w)?;
        }
        Ok(())
    }

    pub fn to_csv_string(&self, cumulative: bool) -> String {
        let mut buf = Vec::new();
        self.write_csv(&mut buf, cumulative)
            .expect("writing to memory");
        String::from_utf8(buf).expect("ascii output")
    }

    pub fn save_csv(&self, path: &Path, cumulative: bool) -> Result<()> {
        crate::io::write_atomic(path, |w| self.write_csv(w, cumulative))
    }
}

#[derive(Debug, Clone, Copy, PartialEq, Eq)]
pub enum RunStatus {
    Converged,
    MaxIter,
}

impl fmt::Display for RunStatus {
    fn fmt(&self, f: &mut fmt::Formatter<'_>) -> fmt::Result {
        f.write_str(match self {
            RunStatus::Converged => "converged",
            RunStatus::MaxIter => "max_iter",
        })
    }
}

/// Outcome of the sufficient convergence condition `ρ > 4λ/λ_min(A)`.
#[derive(Debug, Clone, Copy, PartialEq)]
pub struct RhoCheck {
    pub satisfied: bool,
    pub threshold: f64,
}

/// Non-fatal findings collected during a run.
#[derive(Debug, Clone, PartialEq)]
pub enum Diagnostic {
    RhoConditionViolated { rho: f64, threshold: f64 },
    LambdaMinUnavailable(String),
    DescentViolation { k: usize, increase: f64 },
    CgNotConverged { k: usize, residual: f64 },
}

impl fmt::Display for Diagnostic {
    fn fmt(&self, f: &mut fmt::Formatter<'_>) -> fmt::Result {
        match self {
            Diagnostic::RhoConditionViolated { rho, threshold } => write!(
                f,
                "rho = {rho} does not exceed 4·lambda/lambda_min = {threshold:.6e}; convergence is not guaranteed"
            ),
            Diagnostic::LambdaMinUnavailable(msg) => {
                write!(f, "could not estimate the smallest Gram eigenvalue: {msg}")
            }
            Diagnostic::DescentViolation { k, increase } => write!(
                f,
                "augmented Lagrangian increased by {increase:.3e} at iteration {k} although the rho condition holds"
            ),
            Diagnostic::CgNotConverged { k, residual } => {
                write!(f, "inner CG hit its iteration cap at iteration {k} (residual {residual:.3e})")
            }
        }
    }
}

#[derive(Debug, Clone)]
pub struct AdmmRun {
    pub state: AdmmState,
    pub trace: IterationTrace,
    pub status: RunStatus,
    pub rho_check: Option<RhoCheck>,
    pub diagnostics: Vec<Diagnostic>,
    /// Total inner CG iterations over the run.
    pub cg_iterations: usize,
}

impl AdmmRun {
    pub fn coefficients(&self) -> &[f64] {
        &self.state.c
    }

    pub fn converged(&self) -> bool {
        self.status == RunStatus::Converged
    }

    pub fn iterations(&self) -> usize {
        self.state.k
    }
}

fn lagrangian_at(problem: &Problem<'_>, cfg: &AdmmConfig, st: &AdmmState, ac: &[f64]) -> f64 {
    let mut coupling = 0.0;
    let mut penalty = 0.0;
    for ((a, g), m) in st.alpha.iter().zip(&st.gamma).zip(ac) {
        let r = a - m;
        coupling += g * r;
        penalty += r * r;
    }
    problem.empirical_risk(&st.alpha)
        + cfg.lambda * dot(&st.c, ac)
        + coupling
        + 0.5 * cfg.rho * penalty
}

/// Augmented Lagrangian `F(α) + λcᵀAc + γᵀ(α − Ac) + (ρ/2)‖α − Ac‖²`.
pub fn lagrangian(problem: &Problem<'_>, cfg: &AdmmConfig, st: &AdmmState) -> Result<f64> {
    st.check_dims(problem.size())?;
    let ac = problem.gram.mul_vec(&st.c);
    Ok(lagrangian_at(problem, cfg, st, &ac))
}

/// Regularized risk `F(Ac) + λcᵀAc` of coefficients `c`.
pub fn objective(problem: &Problem<'_>, lambda: f64, c: &[f64]) -> Result<f64> {
    if c.len() != problem.size() {
        return Err(Error::DimensionMismatch {
            expected: problem.size(),
            found: c.len(),
        });
    }
    let ac = problem.gram.mul_vec(c);
    Ok(problem.empirical_risk(&ac) + lambda * dot(c, &ac))
}

struct StepOutput {
    state: AdmmState,
    cg_iterations: usize,
    cg_converged: bool,
    cg_residual: f64,
}

fn prox_vector(
    problem: &Problem<'_>,
    cfg: &AdmmConfig,
    st: &AdmmState,
    ac: &[f64],
) -> Result<Vec<f64>> {
    let n = problem.size();
    ac.iter()
        .zip(&st.gamma)
        .zip(problem.labels)
        .map(|((&m, &g), &y)| {
            let p = ProxParams::new(cfg.rho, n, y, m - g / cfg.rho)?;
            Ok(prox(problem.loss, &p).argmin)
        })
        .collect()
}

fn step_at(
    problem: &Problem<'_>,
    cfg: &AdmmConfig,
    st: &AdmmState,
    ac: &[f64],
) -> Result<StepOutput> {
    let alpha = prox_vector(problem, cfg, st, ac)?;
    let rhs: Vec<f64> = alpha
        .iter()
        .zip(&st.gamma)
        .map(|(a, g)| cfg.rho * a + g)
        .collect();
    let system = Shifted::new(problem.gram, 2.0 * cfg.lambda, cfg.rho);
    // Once c stops moving, ‖α − Ac‖ equals the system residual divided by ρ,
    // so the stopping test needs that residual below ρ·ε₀ as well.
    let b_norm = norm2(&rhs);
    let tol = if b_norm > 0.0 {
        cfg.cg_tol.min(0.5 * cfg.rho * cfg.eps0 / b_norm)
    } else {
        cfg.cg_tol
    };
    let solve = cg_solve(&system, &rhs, &st.c, tol, cfg.cg_cap(problem.size()))?;
    let c = solve.x;
    let gamma = c.iter().map(|x| 2.0 * cfg.lambda * x).collect();
    Ok(StepOutput {
        state: AdmmState {
            alpha,
            c,
            gamma,
            k: st.k + 1,
        },
        cg_iterations: solve.iterations,
        cg_converged: solve.converged,
        cg_residual: solve.residual_norm,
    })
}

/// One full iteration: α-update, c-update, γ-update.
pub fn admm_step(problem: &Problem<'_>, cfg: &AdmmConfig, st: &AdmmState) -> Result<AdmmState> {
    cfg.validate()?;
    st.check_dims(problem.size())?;
    let ac = problem.gram.mul_vec(&st.c);
    Ok(step_at(problem, cfg, st, &ac)?.state)
}

/// `‖s_new − s_old‖_H = √(ΔcᵀAΔc)`.
pub fn rkhs_step_norm(gram: &GramMatrix, c_new: &[f64], c_old: &[f64]) -> Result<f64> {
    if c_new.len() != gram.size() || c_old.len() != gram.size() {
        return Err(Error::DimensionMismatch {
            expected: gram.size(),
            found: if c_new.len() != gram.size() {
                c_new.len()
            } else {
                c_old.len()
            },
        });
    }
    let delta: Vec<f64> = c_new.iter().zip(c_old).map(|(a, b)| a - b).collect();
    Ok(clamped_quad_form(gram, &delta)?.sqrt())
}

pub(crate) fn clamped_quad_form(gram: &GramMatrix, v: &[f64]) -> Result<f64> {
    let q = gram.quad_form(v);
    if q >= 0.0 {
        Ok(q)
    } else if q >= -RADICAND_SLACK {
        Ok(0.0)
    } else {
        Err(Error::NotPositiveDefinite(format!(
            "quadratic form is {q:e}"
        )))
    }
}

/// Checks `ρ > 4λ/λ_min(A)`.
pub fn check_rho_condition(cfg: &AdmmConfig, lambda_min: f64) -> RhoCheck {
    let threshold = 4.0 * cfg.lambda / lambda_min;
    RhoCheck {
        satisfied: cfg.rho > threshold,
        threshold,
    }
}

/// Fixed-point residual `max(‖α − Ac‖∞, ‖α − prox(Ac − γ/ρ)‖∞)`.
///
/// Zero exactly when the state is a fixed point of the iteration, which
/// certifies `α = Ac` and `−γ ∈ ∂F(α)`.
pub fn stationarity_residual(
    problem: &Problem<'_>,
    cfg: &AdmmConfig,
    st: &AdmmState,
) -> Result<f64> {
    st.check_dims(problem.size())?;
    let ac = problem.gram.mul_vec(&st.c);
    let p = prox_vector(problem, cfg, st, &ac)?;
    let feas = st.alpha.iter().zip(&ac).map(|(a, m)| (a - m).abs());
    let fixed = st.alpha.iter().zip(&p).map(|(a, q)| (a - q).abs());
    Ok(feas.chain(fixed).fold(0.0, f64::max))
}

/// Runs the iteration from `init` until `‖α − Ac‖₂ < ε₀` or `max_iter`.
pub fn admm_run(problem: &Problem<'_>, cfg: &AdmmConfig, init: AdmmState) -> Result<AdmmRun> {
    cfg.validate()?;
    init.check_dims(problem.size())?;
    let gram = problem.gram;
    let mut diagnostics = Vec::new();

    let need_lambda_min = cfg.check_descent || cfg.enforce_rho_condition != RhoPolicy::Off;
    let lambda_min = match problem.lambda_min {
        Some(l) => Some(l),
        None if need_lambda_min => match min_eigenvalue(gram, LAMBDA_MIN_TOL) {
            Ok(l) => Some(l),
            Err(e) if cfg.enforce_rho_condition == RhoPolicy::Error => return Err(e),
            Err(e) => {
                log::warn!("{e}");
                diagnostics.push(Diagnostic::LambdaMinUnavailable(e.to_string()));
                None
            }
        },
        None => None,
    };
    let rho_check = lambda_min.map(|l| check_rho_condition(cfg, l));
    if let Some(check) = rho_check {
        if !check.satisfied {
            let d = Diagnostic::RhoConditionViolated {
                rho: cfg.rho,
                threshold: check.threshold,
            };
            match cfg.enforce_rho_condition {
                RhoPolicy::Error => return Err(Error::InvalidConfig(d.to_string())),
                RhoPolicy::Warn => {
                    log::warn!("{d}");
                    diagnostics.push(d);
                }
                RhoPolicy::Off => {}
            }
        }
    }
    let check_descent = cfg.check_descent && rho_check.is_some_and(|c| c.satisfied);

    let mut state = init;
    let mut ac = gram.mul_vec(&state.c);
    let mut previous_lagrangian = lagrangian_at(problem, cfg, &state, &ac);
    let mut trace = IterationTrace::default();
    let mut status = RunStatus::MaxIter;
    let mut cg_iterations = 0;

    for _ in 0..cfg.max_iter {
        let out = step_at(problem, cfg, &state, &ac)?;
        cg_iterations += out.cg_iterations;
        let next = out.state;
        if !out.cg_converged {
            diagnostics.push(Diagnostic::CgNotConverged {
                k: next.k,
                residual: out.cg_residual,
            });
        }
        let ac_next = gram.mul_vec(&next.c);
        let residual = next
            .alpha
            .iter()
            .zip(&ac_next)
            .map(|(a, m)| (a - m) * (a - m))
            .sum::<f64>()
            .sqrt();
        if !residual.is_finite() {
            return Err(Error::Training(format!(
                "iteration {} produced non-finite values",
                next.k
            )));
        }
        let lagrangian = lagrangian_at(problem, cfg, &next, &ac_next);
        let objective = problem.empirical_risk(&ac_next) + cfg.lambda * dot(&next.c, &ac_next);
        let step_norm_h = rkhs_step_norm(gram, &next.c, &state.c)?;

        if check_descent && lagrangian > previous_lagrangian + DESCENT_SLACK {
            let d = Diagnostic::DescentViolation {
                k: next.k,
                increase: lagrangian - previous_lagrangian,
            };
            log::warn!("{d}");
            diagnostics.push(d);
        }
        previous_lagrangian = lagrangian;

        trace.records.push(IterationRecord {
            k: next.k,
            lagrangian,
            objective,
            residual,
            step_norm_h,
        });
        state = next;
        ac = ac_next;
        if residual < cfg.eps0 {
            status = RunStatus::Converged;
            break;
        }
    }

    Ok(AdmmRun {
        state,
        trace,
        status,
        rho_check,
        diagnostics,
        cg_iterations,
    })
}

/// `‖γ − 2λc‖∞`, the violation of the closed-form multiplier update.
pub fn multiplier_gap(st: &AdmmState, lambda: f64) -> f64 {
    let diff: Vec<f64> = st
        .gamma
        .iter()
        .zip(&st.c)
        .map(|(g, c)| g - 2.0 * lambda * c)
        .collect();
    norm_inf(&diff)
}

/// Euclidean norm helper for callers inspecting states.
pub fn residual_norm(gram: &GramMatrix, st: &AdmmState) -> f64 {
    let ac = gram.mul_vec(&st.c);
    let diff: Vec<f64> = st.alpha.iter().zip(&ac).map(|(a, m)| a - m).collect();
    norm2(&diff)
}

#[cfg(test)]
mod tests {
    use super::*;
    use crate::kernel::{gram, KernelSpec};

    fn one_point() -> (GramMatrix, Vec<Label>, MarginLoss) {
        (
            GramMatrix::identity(1),
            vec![Label::Positive],
            MarginLoss::hinge(),
        )
    }

    #[test]
    fn lagrangian_single_point() {
        let (a, y, l) = one_point();
        let p = Problem::new(&a, &y, &l).unwrap();
        let st = AdmmState {
            alpha: vec![0.0],
            c: vec![0.0],
            gamma: vec![0.0],
            k: 0,
        };
        assert_eq!(lagrangian(&p, &AdmmConfig::default(), &st).unwrap(), 1.0);
    }

    #[test]
    fn lagrangian_reduces_to_regularizer_when_feasible_and_separated() {
        let k = KernelSpec::gaussian(1.0).unwrap();
        let pts = vec![vec![0.0, 0.0], vec![5.0, 5.0]];
        let a = gram(&k, &pts).unwrap();
        let y = vec![Label::Positive, Label::Negative];
        let l = MarginLoss::hinge();
        let p = Problem::new(&a, &y, &l).unwrap();
        let c = vec![2.0, -3.0];
        let mut st = AdmmState::from_coefficients(&a, c.clone(), 0.3).unwrap();
        st.gamma = vec![7.0, -1.5];
        let cfg = AdmmConfig::new(0.3, 1.0, 1e-12);
        let expected = 0.3 * a.quad_form(&c);
        assert!((lagrangian(&p, &cfg, &st).unwrap() - expected).abs() < 1e-14);
    }

    #[test]
    fn one_step_by_hand() {
        let (a, y, l) = one_point();
        let p = Problem::new(&a, &y, &l).unwrap();
        let cfg = AdmmConfig::new(0.25, 1.0, 1e-12);
        let st = AdmmState {
            alpha: vec![0.0],
            c: vec![0.0],
            gamma: vec![0.0],
            k: 0,
        };
        let next = admm_step(&p, &cfg, &st).unwrap();
        assert_eq!(next.alpha, vec![1.0]);
        assert!((next.c[0] - 2.0 / 3.0).abs() < 1e-15);
        assert!((next.gamma[0] - 1.0 / 3.0).abs() < 1e-15);
        assert_eq!(next.k, 1);
    }

    #[test]
    fn fixed_point_is_preserved() {
        // λ = 1, ρ = 1: c = 1/(2λN) = 0.5, α = 0.5, γ = 1, anchor −0.5 → prox 0.5.
        let (a, y, l) = one_point();
        let p = Problem::new(&a, &y, &l).unwrap();
        let cfg = AdmmConfig::new(1.0, 1.0, 1e-12);
        let st = AdmmState::from_coefficients(&a, vec![0.5], 1.0).unwrap();
        let next = admm_step(&p, &cfg, &st).unwrap();
        assert_eq!(next.alpha, st.alpha);
        assert_eq!(next.c, st.c);
        assert_eq!(next.gamma, st.gamma);
        assert_eq!(stationarity_residual(&p, &cfg, &st).unwrap(), 0.0);

        let run = admm_run(&p, &cfg, st).unwrap();
        assert_eq!(run.status, RunStatus::Converged);
        assert_eq!(run.iterations(), 1);
        assert!(run.trace.last().unwrap().residual < cfg.eps0);
    }

    #[test]
    fn step_norm_examples() {
        let id = GramMatrix::identity(2);
        assert_eq!(rkhs_step_norm(&id, &[1.0, 2.0], &[1.0, 2.0]).unwrap(), 0.0);
        assert_eq!(rkhs_step_norm(&id, &[3.0, 4.0], &[0.0, 0.0]).unwrap(), 5.0);
        let bad = GramMatrix::from_dense(2, vec![1.0, 2.0, 2.0, 1.0]).unwrap();
        assert!(matches!(
            rkhs_step_norm(&bad, &[1.0, -1.0], &[0.0, 0.0]),
            Err(Error::NotPositiveDefinite(_))
        ));
    }

    #[test]
    fn rho_condition_examples() {
        let c = check_rho_condition(&AdmmConfig::new(0.5, 5.0, 1e-12), 1.0);
        assert!(c.satisfied);
        assert_eq!(c.threshold, 2.0);
        let c = check_rho_condition(&AdmmConfig::new(0.1, 0.05, 1e-12), 0.01);
        assert!(!c.satisfied);
        assert!((c.threshold - 40.0).abs() < 1e-12);
        let c = check_rho_condition(&AdmmConfig::new(0.5, 2.0, 1e-12), 1.0);
        assert!(!c.satisfied, "strict inequality");
    }

    #[test]
    fn rho_policy_error_aborts() {
        let (a, y, l) = one_point();
        let p = Problem::new(&a, &y, &l).unwrap();
        let mut cfg = AdmmConfig::new(1.0, 1.0, 1e-12);
        cfg.enforce_rho_condition = RhoPolicy::Error;
        let st = AdmmState::from_coefficients(&a, vec![0.0], 1.0).unwrap();
        assert!(matches!(
            admm_run(&p, &cfg, st.clone()),
            Err(Error::InvalidConfig(_))
        ));
        cfg.enforce_rho_condition = RhoPolicy::Warn;
        let run = admm_run(&p, &cfg, st).unwrap();
        assert!(run
            .diagnostics
            .iter()
            .any(|d| matches!(d, Diagnostic::RhoConditionViolated { .. })));
    }

    #[test]
    fn config_validation() {
        assert!(AdmmConfig::new(0.0, 1.0, 1e-12).validate().is_err());
        assert!(AdmmConfig::new(1.0, -1.0, 1e-12).validate().is_err());
        assert!(AdmmConfig::new(1.0, 1.0, 0.0).validate().is_err());
        let cfg = AdmmConfig {
            max_iter: 0,
            ..AdmmConfig::default()
        };
        assert!(cfg.validate().is_err());
        assert!(AdmmConfig::default().validate().is_ok());
    }

    #[test]
    fn max_iter_cap_and_multiplier_identity() {
        let (train, _) = crate::data::generate_synthetic(40, 2, 1).unwrap();
        let k = KernelSpec::gaussian(1.0).unwrap();
        let a = gram(&k, train.inputs()).unwrap();
        let l = MarginLoss::ramp();
        let p = Problem::new(&a, train.labels(), &l).unwrap();
        let mut cfg = AdmmConfig::new(0.1, 0.05, 1e-12);
        cfg.max_iter = 3;
        cfg.enforce_rho_condition = RhoPolicy::Off;
        cfg.check_descent = false;
        let run = admm_run(&p, &cfg, AdmmState::random(&a, cfg.lambda, 9)).unwrap();
        assert_eq!(run.status, RunStatus::MaxIter);
        assert_eq!(run.trace.len(), 3);
        assert_eq!(
            run.trace.records.iter().map(|r| r.k).collect::<Vec<_>>(),
            vec![1, 2, 3]
        );
        assert!(multiplier_gap(&run.state, cfg.lambda) <= 1e-12 * (1.0 + norm_inf(&run.state.c)));
        assert!(stationarity_residual(&p, &cfg, &run.state).unwrap() > 0.0);
    }

    #[test]
    fn trace_csv_format() {
        let trace = IterationTrace {
            records: vec![
                IterationRecord {
                    k: 1,
                    lagrangian: 1.5,
                    objective: 0.25,
                    residual: 1e-3,
                    step_norm_h: 2.0,
                },
                IterationRecord {
                    k: 2,
                    lagrangian: 1.0,
                    objective: 0.2,
                    residual: 1e-13,
                    step_norm_h: 0.5,
                },
            ],
        };
        let s = trace.to_csv_string(false);
        let lines: Vec<&str> = s.lines().collect();
        assert_eq!(lines[0], TRACE_HEADER);
        assert_eq!(lines[1], "1,1.5000000000000000e0,2.5000000000000000e-1,1.0000000000000000e-3,2.0000000000000000e0");
        let with_sum = trace.to_csv_string(true);
        assert!(with_sum
            .lines()
            .nth(2)
            .unwrap()
            .ends_with(",2.5000000000000000e0"));
    }

    #[test]
    fn dimension_errors() {
        let (a, y, l) = one_point();
        let p = Problem::new(&a, &y, &l).unwrap();
        let st = AdmmState {
            alpha: vec![0.0, 1.0],
            c: vec![0.0],
            gamma: vec![0.0],
            k: 0,
        };
        assert!(admm_step(&p, &AdmmConfig::default(), &st).is_err());
        assert!(Problem::new(&a, &[Label::Positive, Label::Negative], &l).is_err());
    }
}
