//! Conjugate-gradient solver for symmetric positive definite systems.
//!
//! Matrices are handled as operators: the solver only ever asks for
//! `M v`, so the c-update system `(2λI + ρA) c = b` is applied with one
//! Gram product and a scaled add per iteration.

use crate::error::{Error, Result};

/// Dot product with four independent accumulators. The summation order is
/// fixed, so results do not depend on the caller or thread.
pub(crate) fn dot(a: &[f64], b: &[f64]) -> f64 {
    debug_assert_eq!(a.len(), b.len());
    let ca = a.chunks_exact(4);
    let cb = b.chunks_exact(4);
    let tail: f64 = ca
        .remainder()
        .iter()
        .zip(cb.remainder())
        .map(|(x, y)| x * y)
        .sum();
    let mut acc = [0.0f64; 4];
    for (x, y) in ca.zip(cb) {
        acc[0] += x[0] * y[0];
        acc[1] += x[1] * y[1];
        acc[2] += x[2] * y[2];
        acc[3] += x[3] * y[3];
    }
    (acc[0] + acc[1]) + (acc[2] + acc[3]) + tail
}

pub(crate) fn norm2(a: &[f64]) -> f64 {
    dot(a, a).sqrt()
}

pub(crate) fn norm_inf(a: &[f64]) -> f64 {
    a.iter().fold(0.0_f64, |m, x| m.max(x.abs()))
}

/// A symmetric positive definite matrix available through its action.
pub trait SpdOperator {
    fn dim(&self) -> usize;

    /// Writes `M v` into `out`. Both slices have length `dim()`.
    fn apply(&self, v: &[f64], out: &mut [f64]);

    fn apply_vec(&self, v: &[f64]) -> Vec<f64> {
        let mut out = vec![0.0; self.dim()];
        self.apply(v, &mut out);
        out
    }

    /// Row-major entries when the matrix is held densely in memory.
    fn dense(&self) -> Option<&[f64]> {
        None
    }
}

/// `shift · I + scale · inner`.
#[derive(Debug, Clone, Copy)]
pub struct Shifted<'a, O: ?Sized> {
    pub inner: &'a O,
    pub shift: f64,
    pub scale: f64,
}

impl<'a, O: SpdOperator + ?Sized> Shifted<'a, O> {
    pub fn new(inner: &'a O, shift: f64, scale: f64) -> Self {
        Self {
            inner,
            shift,
            scale,
        }
    }
}

impl<O: SpdOperator + ?Sized> SpdOperator for Shifted<'_, O> {
    fn dim(&self) -> usize {
        self.inner.dim()
    }

    fn apply(&self, v: &[f64], out: &mut [f64]) {
        self.inner.apply(v, out);
        for (o, x) in out.iter_mut().zip(v) {
            *o = self.shift * x + self.scale * *o;
        }
    }
}

/// Diagonal matrix; mostly useful for tests and preconditioning experiments.
#[derive(Debug, Clone, PartialEq)]
pub struct Diagonal(pub Vec<f64>);

impl SpdOperator for Diagonal {
    fn dim(&self) -> usize {
        self.0.len()
    }

    fn apply(&self, v: &[f64], out: &mut [f64]) {
        for ((o, d), x) in out.iter_mut().zip(&self.0).zip(v) {
            *o = d * x;
        }
    }
}

/// Result of [`cg_solve`].
#[derive(Debug, Clone, PartialEq)]
pub struct CgOutcome {
    pub x: Vec<f64>,
    pub iterations: usize,
    /// True residual `‖b − Mx‖₂` of the returned iterate.
    pub residual_norm: f64,
    /// Whether `residual_norm ≤ tol · ‖b‖₂` was reached within `max_iter`.
    pub converged: bool,
}

/// Number of times the recursion is restarted from the true residual when
/// the recursive residual claims convergence but the true one disagrees.
const MAX_RESTARTS: usize = 3;

/// Solves `M x = b` by conjugate gradients starting from `x0`.
///
/// Stops when `‖b − Mx‖₂ ≤ tol · ‖b‖₂` (the exact-zero test of the textbook
/// iteration, relaxed to a tolerance) or after `max_iter` iterations, in
/// which case the iterate with the smallest residual seen is returned with
/// `converged = false`. A non-positive curvature `dᵀMd ≤ 0` means `M` is
/// not positive definite and is reported as an error.
pub fn cg_solve<O: SpdOperator + ?Sized>(
    m: &O,
    b: &[f64],
    x0: &[f64],
    tol: f64,
    max_iter: usize,
) -> Result<CgOutcome> {
    let n = m.dim();
    if b.len() != n {
        return Err(Error::DimensionMismatch {
            expected: n,
            found: b.len(),
        });
    }
    if x0.len() != n {
        return Err(Error::DimensionMismatch {
            expected: n,
            found: x0.len(),
        });
    }
    if tol.is_nan() || tol <= 0.0 {
        return Err(Error::InvalidConfig(format!(
            "CG tolerance must be positive, got {tol}"
        )));
    }
    if max_iter == 0 {
        return Err(Error::InvalidConfig(
            "CG max_iter must be at least 1".into(),
        ));
    }

    let b_norm = norm2(b);
    if b_norm == 0.0 {
        return Ok(CgOutcome {
            x: vec![0.0; n],
            iterations: 0,
            residual_norm: 0.0,
            converged: true,
        });
    }
    let threshold = tol * b_norm;

    let mut x = x0.to_vec();
    let mut md = vec![0.0; n];
    let mut r = true_residual(m, b, &x, &mut md);
    let mut rr = dot(&r, &r);
    if rr.sqrt() <= threshold {
        return Ok(CgOutcome {
            x,
            iterations: 0,
            residual_norm: rr.sqrt(),
            converged: true,
        });
    }

    let mut d = r.clone();
    let mut best_x = x.clone();
    let mut best_res = rr.sqrt();
    let mut iterations = 0;
    let mut restarts = 0;

    while iterations < max_iter {
        m.apply(&d, &mut md);
        let curvature = dot(&d, &md);
        if curvature.is_nan() || curvature <= 0.0 {
            return Err(Error::NotPositiveDefinite(format!(
                "CG found non-positive curvature dᵀMd = {curvature:e} at iteration {iterations}"
            )));
        }
        let step = rr / curvature;
        for i in 0..n {
            x[i] += step * d[i];
            r[i] -= step * md[i];
        }
        iterations += 1;
        let rr_next = dot(&r, &r);

        if rr_next.sqrt() <= threshold {
            // The recursive residual drifts; confirm against b − Mx.
            let r_true = true_residual(m, b, &x, &mut md);
            let rr_true = dot(&r_true, &r_true);
            if rr_true.sqrt() <= threshold || restarts >= MAX_RESTARTS {
                let residual_norm = rr_true.sqrt();
                if residual_norm <= threshold || residual_norm < best_res {
                    return Ok(CgOutcome {
                        x,
                        iterations,
                        residual_norm,
                        converged: residual_norm <= threshold,
                    });
                }
                break;
            }
            restarts += 1;
            r = r_true;
            rr = rr_true;
            d.copy_from_slice(&r);
            if rr.sqrt() < best_res {
                best_res = rr.sqrt();
                best_x.copy_from_slice(&x);
            }
            continue;
        }

        if rr_next.sqrt() < best_res {
            best_res = rr_next.sqrt();
            best_x.copy_from_slice(&x);
        }
        let beta = rr_next / rr;
        for i in 0..n {
            d[i] = r[i] + beta * d[i];
        }
        rr = rr_next;
    }

    let r_best = true_residual(m, b, &best_x, &mut md);
    Ok(CgOutcome {
        x: best_x,
        iterations,
        residual_norm: norm2(&r_best),
        converged: false,
    })
}

/// Dense Cholesky factor `M = L Lᵀ`, stored row-major with only the lower
/// triangle meaningful.
#[derive(Debug, Clone)]
pub struct Cholesky {
    n: usize,
    l: Vec<f64>,
}

impl Cholesky {
    /// Factors the row-major `n × n` matrix `m`; only its lower triangle is
    /// read. A non-positive pivot means `m` is not numerically positive
    /// definite.
    pub fn factor(n: usize, m: &[f64]) -> Result<Self> {
        if m.len() != n * n {
            return Err(Error::DimensionMismatch {
                expected: n * n,
                found: m.len(),
            });
        }
        let mut l = vec![0.0; n * n];
        for i in 0..n {
            for j in 0..=i {
                let s = m[i * n + j] - dot(&l[i * n..i * n + j], &l[j * n..j * n + j]);
                if i == j {
                    if s.is_nan() || s <= 0.0 {
                        return Err(Error::NotPositiveDefinite(format!(
                            "Cholesky pivot {s:e} at row {i}"
                        )));
                    }
                    l[i * n + i] = s.sqrt();
                } else {
                    l[i * n + j] = s / l[j * n + j];
                }
            }
        }
        Ok(Self { n, l })
    }

    pub fn dim(&self) -> usize {
        self.n
    }

    /// Overwrites `b` with `M⁻¹ b`.
    pub fn solve_in_place(&self, b: &mut [f64]) {
        let n = self.n;
        assert_eq!(b.len(), n);
        for i in 0..n {
            let row = &self.l[i * n..i * n + i];
            b[i] = (b[i] - dot(row, &b[..i])) / self.l[i * n + i];
        }
        for i in (0..n).rev() {
            b[i] /= self.l[i * n + i];
            let xi = b[i];
            for (bk, lik) in b[..i].iter_mut().zip(&self.l[i * n..i * n + i]) {
                *bk -= lik * xi;
            }
        }
    }
}

fn true_residual<O: SpdOperator + ?Sized>(
    m: &O,
    b: &[f64],
    x: &[f64],
    scratch: &mut [f64],
) -> Vec<f64> {
    m.apply(x, scratch);
    b.iter()
        .zip(scratch.iter())
        .map(|(bi, mi)| bi - mi)
        .collect()
}
