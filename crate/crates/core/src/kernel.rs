//! Kernels, Gram matrices and the smallest Gram eigenvalue.

use std::fmt;
use std::str::FromStr;

use rand::{Rng, SeedableRng};
use rand_chacha::ChaCha8Rng;
use rayon::prelude::*;

use crate::error::{Error, Result};
use crate::linalg::{cg_solve, dot, norm2, Cholesky, SpdOperator};

/// Diagonal shift added when jitter is requested for duplicate inputs.
pub const JITTER: f64 = 1e-8;

#[derive(Debug, Clone, Copy, PartialEq, Eq, Hash)]
pub enum KernelFamily {
    /// `exp(−σ‖x − x'‖₂²)`
    Gaussian,
    /// `exp(−σ‖x − x'‖₁)`
    Matern1,
}

impl KernelFamily {
    pub fn name(self) -> &'static str {
        match self {
            KernelFamily::Gaussian => "gaussian",
            KernelFamily::Matern1 => "matern1",
        }
    }
}

impl fmt::Display for KernelFamily {
    fn fmt(&self, f: &mut fmt::Formatter<'_>) -> fmt::Result {
        f.write_str(self.name())
    }
}

impl FromStr for KernelFamily {
    type Err = Error;

    fn from_str(s: &str) -> Result<Self> {
        match s.to_ascii_lowercase().as_str() {
            "gaussian" | "rbf" | "k1" => Ok(KernelFamily::Gaussian),
            "matern1" | "matern" | "laplacian" | "k2" => Ok(KernelFamily::Matern1),
            other => Err(Error::InvalidInput(format!(
                "unknown kernel '{other}' (expected gaussian or matern1)"
            ))),
        }
    }
}

/// A kernel family together with its shape parameter σ > 0.
#[derive(Debug, Clone, Copy, PartialEq)]
pub struct KernelSpec {
    family: KernelFamily,
    sigma: f64,
}

impl KernelSpec {
    pub fn new(family: KernelFamily, sigma: f64) -> Result<Self> {
        if !(sigma > 0.0 && sigma.is_finite()) {
            return Err(Error::InvalidConfig(format!(
                "kernel sigma must be positive and finite, got {sigma}"
            )));
        }
        Ok(Self { family, sigma })
    }

    pub fn gaussian(sigma: f64) -> Result<Self> {
        Self::new(KernelFamily::Gaussian, sigma)
    }

    pub fn matern1(sigma: f64) -> Result<Self> {
        Self::new(KernelFamily::Matern1, sigma)
    }

    pub fn family(&self) -> KernelFamily {
        self.family
    }

    pub fn sigma(&self) -> f64 {
        self.sigma
    }

    /// Kernel value without the dimension check.
    #[inline]
    pub(crate) fn eval_unchecked(&self, x: &[f64], y: &[f64]) -> f64 {
        let dist = match self.family {
            KernelFamily::Gaussian => x
                .iter()
                .zip(y)
                .map(|(a, b)| {
                    let d = a - b;
                    d * d
                })
                .sum::<f64>(),
            KernelFamily::Matern1 => x.iter().zip(y).map(|(a, b)| (a - b).abs()).sum::<f64>(),
        };
        (-self.sigma * dist).exp()
    }
}

impl fmt::Display for KernelSpec {
    fn fmt(&self, f: &mut fmt::Formatter<'_>) -> fmt::Result {
        write!(f, "{}(sigma={})", self.family, self.sigma)
    }
}

/// Evaluates `K(x, x')`.
pub fn eval_kernel(spec: &KernelSpec, x: &[f64], y: &[f64]) -> Result<f64> {
    if x.is_empty() {
        return Err(Error::InvalidInput(
            "kernel inputs must have dimension ≥ 1".into(),
        ));
    }
    if x.len() != y.len() {
        return Err(Error::DimensionMismatch {
            expected: x.len(),
            found: y.len(),
        });
    }
    Ok(spec.eval_unchecked(x, y))
}

#[derive(Debug, Clone, Copy, Default, PartialEq, Eq)]
pub struct GramOptions {
    /// Add [`JITTER`] to the diagonal instead of rejecting duplicate inputs.
    pub jitter: bool,
}

/// Dense symmetric kernel matrix `A[i][j] = K(xᵢ, xⱼ)`, row-major.
#[derive(Debug, Clone, PartialEq)]
pub struct GramMatrix {
    n: usize,
    entries: Vec<f64>,
}

impl GramMatrix {
    /// Wraps a dense row-major symmetric matrix. Used for tests and for
    /// callers that build kernel matrices elsewhere.
    pub fn from_dense(n: usize, entries: Vec<f64>) -> Result<Self> {
        if entries.len() != n * n {
            return Err(Error::DimensionMismatch {
                expected: n * n,
                found: entries.len(),
            });
        }
        for i in 0..n {
            for j in (i + 1)..n {
                if entries[i * n + j] != entries[j * n + i] {
                    return Err(Error::InvalidInput(format!(
                        "matrix is not symmetric at ({i}, {j})"
                    )));
                }
            }
        }
        Ok(Self { n, entries })
    }

    pub fn identity(n: usize) -> Self {
        let mut entries = vec![0.0; n * n];
        for i in 0..n {
            entries[i * n + i] = 1.0;
        }
        Self { n, entries }
    }

    pub fn size(&self) -> usize {
        self.n
    }

    #[inline]
    pub fn get(&self, i: usize, j: usize) -> f64 {
        self.entries[i * self.n + j]
    }

    pub fn row(&self, i: usize) -> &[f64] {
        &self.entries[i * self.n..(i + 1) * self.n]
    }

    pub fn as_slice(&self) -> &[f64] {
        &self.entries
    }

    /// `A v`.
    pub fn mul_vec(&self, v: &[f64]) -> Vec<f64> {
        self.apply_vec(v)
    }

    /// `vᵀ A v`, without clamping.
    pub fn quad_form(&self, v: &[f64]) -> f64 {
        dot(v, &self.mul_vec(v))
    }
}

impl SpdOperator for GramMatrix {
    fn dim(&self) -> usize {
        self.n
    }

    fn apply(&self, v: &[f64], out: &mut [f64]) {
        debug_assert_eq!(v.len(), self.n);
        for (o, row) in out.iter_mut().zip(self.entries.chunks_exact(self.n)) {
            *o = dot(row, v);
        }
    }

    fn dense(&self) -> Option<&[f64]> {
        Some(&self.entries)
    }
}

/// Builds the Gram matrix of `points`, rejecting duplicate points.
pub fn gram(spec: &KernelSpec, points: &[Vec<f64>]) -> Result<GramMatrix> {
    gram_with(spec, points, GramOptions::default())
}

/// Builds the Gram matrix of `points`.
///
/// Each unordered pair is evaluated once and mirrored, so the result is
/// exactly symmetric and independent of the thread schedule.
pub fn gram_with(spec: &KernelSpec, points: &[Vec<f64>], opts: GramOptions) -> Result<GramMatrix> {
    let n = points.len();
    if n == 0 {
        return Err(Error::InvalidInput(
            "cannot build a Gram matrix of zero points".into(),
        ));
    }
    let d = points[0].len();
    if d == 0 {
        return Err(Error::InvalidInput("points must have dimension ≥ 1".into()));
    }
    if let Some(p) = points.iter().find(|p| p.len() != d) {
        return Err(Error::DimensionMismatch {
            expected: d,
            found: p.len(),
        });
    }

    if let Some((first, second)) = first_duplicate(points) {
        if !opts.jitter {
            return Err(Error::DuplicatePoints { first, second });
        }
        log::warn!(
            "points {first} and {second} are identical; adding {JITTER:e}·I to the Gram matrix"
        );
    }

    let upper: Vec<Vec<f64>> = (0..n)
        .into_par_iter()
        .map(|i| {
            points[i + 1..]
                .iter()
                .map(|q| spec.eval_unchecked(&points[i], q))
                .collect()
        })
        .collect();

    let diag = if opts.jitter { 1.0 + JITTER } else { 1.0 };
    let mut entries = vec![0.0; n * n];
    for (i, row) in upper.into_iter().enumerate() {
        entries[i * n + i] = diag;
        for (off, v) in row.into_iter().enumerate() {
            let j = i + 1 + off;
            entries[i * n + j] = v;
            entries[j * n + i] = v;
        }
    }
    Ok(GramMatrix { n, entries })
}

fn first_duplicate(points: &[Vec<f64>]) -> Option<(usize, usize)> {
    let mut order: Vec<usize> = (0..points.len()).collect();
    order.sort_by(|&a, &b| {
        points[a]
            .iter()
            .zip(&points[b])
            .map(|(x, y)| x.total_cmp(y))
            .find(|o| o.is_ne())
            .unwrap_or(std::cmp::Ordering::Equal)
            .then(a.cmp(&b))
    });
    order
        .windows(2)
        .filter(|w| points[w[0]] == points[w[1]])
        .map(|w| (w[0].min(w[1]), w[0].max(w[1])))
        .min()
}

/// Outer iteration cap of the inverse power iteration.
const EIG_MAX_ITER: usize = 500;

/// Smallest eigenvalue of a symmetric positive definite operator by inverse
/// power iteration.
///
/// Operators held densely (such as [`GramMatrix`]) are factored once by
/// Cholesky and inverted exactly: Gram matrices of a few hundred points are
/// so ill conditioned that conjugate gradients stall long before the
/// accuracy inverse iteration needs. Other operators are inverted with
/// conjugate gradients. Converges when successive Rayleigh quotients agree to
/// relative `tol`. The Rayleigh quotient is an upper bound on λ_min, so when
/// the iteration cap is hit the smallest quotient seen is returned with a
/// warning.
pub fn min_eigenvalue<O: SpdOperator + ?Sized>(a: &O, tol: f64) -> Result<f64> {
    if tol.is_nan() || tol <= 0.0 {
        return Err(Error::InvalidConfig(format!(
            "eigenvalue tolerance must be positive, got {tol}"
        )));
    }
    let n = a.dim();
    if n == 0 {
        return Err(Error::InvalidInput("empty matrix".into()));
    }

    // Fixed start vector: reproducible, and almost surely not orthogonal to
    // the bottom eigenvector.
    let mut rng = ChaCha8Rng::seed_from_u64(0x5eed_e16e);
    let mut v: Vec<f64> = (0..n).map(|_| rng.random_range(-1.0..1.0)).collect();
    let v_norm = norm2(&v);
    v.iter_mut().for_each(|x| *x /= v_norm);

    let factor =
        match a.dense() {
            Some(entries) => Some(Cholesky::factor(n, entries).map_err(|e| {
                Error::NotPositiveDefinite(format!("inverse iteration failed: {e}"))
            })?),
            None => None,
        };
    let cg_tol = (tol * 1e-2).clamp(1e-13, 1e-10);
    let cg_cap = (10 * n).max(50);
    let mut guess = v.clone();
    let inverse_apply = |v: &[f64], guess: &[f64]| -> Result<Vec<f64>> {
        if let Some(ch) = &factor {
            let mut w = v.to_vec();
            ch.solve_in_place(&mut w);
            return Ok(w);
        }
        match cg_solve(a, v, guess, cg_tol, cg_cap) {
            Ok(s) => Ok(s.x),
            Err(Error::NotPositiveDefinite(msg)) => Err(Error::NotPositiveDefinite(format!(
                "inverse iteration failed: {msg}"
            ))),
            Err(e) => Err(e),
        }
    };

    let mut previous: Option<f64> = None;
    let mut best = f64::INFINITY;

    for _ in 0..EIG_MAX_ITER {
        let w = inverse_apply(&v, &guess)?;
        let w_norm = norm2(&w);
        if !(w_norm.is_finite() && w_norm > 0.0) {
            return Err(Error::NotPositiveDefinite(
                "inverse iteration produced a degenerate vector".into(),
            ));
        }
        v = w.iter().map(|x| x / w_norm).collect();
        let av = a.apply_vec(&v);
        let rq = dot(&v, &av);
        if rq.is_nan() || rq <= 0.0 {
            return Err(Error::NotPositiveDefinite(format!(
                "estimated smallest eigenvalue is {rq:e}"
            )));
        }
        best = best.min(rq);
        if let Some(prev) = previous {
            if (rq - prev).abs() <= tol * rq {
                return Ok(best);
            }
        }
        previous = Some(rq);
        guess = v.iter().map(|x| x / rq).collect();
    }
    log::warn!(
        "inverse iteration did not reach relative tolerance {tol:e} in {EIG_MAX_ITER} iterations; returning {best:e}"
    );
    Ok(best)
}
