//! Margin losses and the exact one-dimensional proximal step.
//!
//! Every shipped loss depends on `(y, t)` only through the margin
//! `z = y·t` and is stored as an ordered list of pieces on half-open
//! intervals `[lower, upper)` of the margin axis. The proximal step
//!
//! ```text
//! argmin_α  L(y, α) / N + (ρ/2)(α − u)²
//! ```
//!
//! is solved exactly by enumerating, for every piece, the stationary points
//! of the restricted objective (clamped to the piece) together with all
//! breakpoints, and keeping the best candidate. Hinge and ramp also have
//! closed-form branch tables, used as fast paths.

use std::fmt;
use std::str::FromStr;

use crate::data::Label;
use crate::error::{Error, Result};

#[derive(Debug, Clone, Copy, PartialEq, Eq, Hash)]
pub enum LossKind {
    /// `max(0, 1 − z)`.
    Hinge,
    /// `2 − z` for `z < 0`, `2 − 2z` on `[0, 1)`, 0 after.
    PiecewiseLinear,
    /// `log(2 − z)` for `z < 1`, 0 after.
    TruncatedLog,
    /// 1 for `z < 0`, `1 − z` on `[0, 1)`, 0 after.
    Ramp,
}

impl LossKind {
    pub const ALL: [LossKind; 4] = [
        LossKind::Hinge,
        LossKind::PiecewiseLinear,
        LossKind::TruncatedLog,
        LossKind::Ramp,
    ];

    pub fn name(self) -> &'static str {
        match self {
            LossKind::Hinge => "hinge",
            LossKind::PiecewiseLinear => "pl2",
            LossKind::TruncatedLog => "tlog",
            LossKind::Ramp => "ramp",
        }
    }

    /// Short label used in result tables (`L1` … `L4`).
    pub fn short_name(self) -> &'static str {
        match self {
            LossKind::Hinge => "L1",
            LossKind::PiecewiseLinear => "L2",
            LossKind::TruncatedLog => "L3",
            LossKind::Ramp => "L4",
        }
    }
}

impl fmt::Display for LossKind {
    fn fmt(&self, f: &mut fmt::Formatter<'_>) -> fmt::Result {
        f.write_str(self.name())
    }
}

impl FromStr for LossKind {
    type Err = Error;

    fn from_str(s: &str) -> Result<Self> {
        match s.to_ascii_lowercase().as_str() {
            "hinge" | "l1" => Ok(LossKind::Hinge),
            "pl2" | "l2" => Ok(LossKind::PiecewiseLinear),
            "tlog" | "l3" => Ok(LossKind::TruncatedLog),
            "ramp" | "l4" => Ok(LossKind::Ramp),
            other => Err(Error::InvalidInput(format!(
                "unknown loss '{other}' (expected hinge, pl2, tlog or ramp)"
            ))),
        }
    }
}

/// Functional form of one piece, as a function of the margin `z`.
#[derive(Debug, Clone, Copy, PartialEq)]
pub enum PieceForm {
    Affine {
        slope: f64,
        intercept: f64,
    },
    /// `log(2 − z)`; only valid for `z < 2`.
    LogTwoMinus,
    Constant(f64),
}

impl PieceForm {
    pub fn eval(&self, z: f64) -> f64 {
        match *self {
            PieceForm::Affine { slope, intercept } => slope * z + intercept,
            PieceForm::LogTwoMinus => (2.0 - z).ln(),
            PieceForm::Constant(c) => c,
        }
    }
}

/// A piece on the half-open margin interval `[lower, upper)`.
#[derive(Debug, Clone, Copy, PartialEq)]
pub struct Piece {
    pub lower: f64,
    pub upper: f64,
    pub form: PieceForm,
}

impl Piece {
    fn contains(&self, z: f64) -> bool {
        self.lower <= z && z < self.upper
    }
}

#[derive(Debug, Clone, PartialEq)]
pub struct MarginLoss {
    kind: LossKind,
    pieces: Vec<Piece>,
    admissible_at_zero: bool,
}

impl MarginLoss {
    pub fn new(kind: LossKind) -> Self {
        use PieceForm::*;
        let inf = f64::INFINITY;
        let piece = |lower, upper, form| Piece { lower, upper, form };
        let pieces = match kind {
            LossKind::Hinge => vec![
                piece(
                    -inf,
                    1.0,
                    Affine {
                        slope: -1.0,
                        intercept: 1.0,
                    },
                ),
                piece(1.0, inf, Constant(0.0)),
            ],
            LossKind::PiecewiseLinear => vec![
                piece(
                    -inf,
                    0.0,
                    Affine {
                        slope: -1.0,
                        intercept: 2.0,
                    },
                ),
                piece(
                    0.0,
                    1.0,
                    Affine {
                        slope: -2.0,
                        intercept: 2.0,
                    },
                ),
                piece(1.0, inf, Constant(0.0)),
            ],
            LossKind::TruncatedLog => vec![
                piece(-inf, 1.0, LogTwoMinus),
                piece(1.0, inf, Constant(0.0)),
            ],
            LossKind::Ramp => vec![
                piece(-inf, 0.0, Constant(1.0)),
                piece(
                    0.0,
                    1.0,
                    Affine {
                        slope: -1.0,
                        intercept: 1.0,
                    },
                ),
                piece(1.0, inf, Constant(0.0)),
            ],
        };
        // All four have a nonzero slope at z = 0, so 0 is never stationary there.
        Self {
            kind,
            pieces,
            admissible_at_zero: true,
        }
    }

    pub fn hinge() -> Self {
        Self::new(LossKind::Hinge)
    }

    pub fn piecewise_linear() -> Self {
        Self::new(LossKind::PiecewiseLinear)
    }

    pub fn truncated_log() -> Self {
        Self::new(LossKind::TruncatedLog)
    }

    pub fn ramp() -> Self {
        Self::new(LossKind::Ramp)
    }

    pub fn kind(&self) -> LossKind {
        self.kind
    }

    pub fn name(&self) -> &'static str {
        self.kind.name()
    }

    pub fn pieces(&self) -> &[Piece] {
        &self.pieces
    }

    /// Whether `0 ∉ ∂L(x, y, 0)` holds for this loss.
    pub fn admissible_at_zero(&self) -> bool {
        self.admissible_at_zero
    }

    /// Interior breakpoints of the margin axis, in increasing order.
    pub fn breakpoints(&self) -> impl Iterator<Item = f64> + '_ {
        self.pieces.iter().skip(1).map(|p| p.lower)
    }

    /// Loss as a function of the margin `z = y·t`.
    pub fn margin_value(&self, z: f64) -> f64 {
        self.pieces
            .iter()
            .find(|p| p.contains(z))
            .map(|p| p.form.eval(z))
            .unwrap_or(f64::NAN)
    }
}

impl From<LossKind> for MarginLoss {
    fn from(kind: LossKind) -> Self {
        MarginLoss::new(kind)
    }
}

/// `L(x, y, t)`.
pub fn loss_value(loss: &MarginLoss, label: Label, t: f64) -> f64 {
    loss.margin_value(label.sign() * t)
}

/// Parameters of one coordinate of the α-update.
#[derive(Debug, Clone, Copy, PartialEq)]
pub struct ProxParams {
    pub rho: f64,
    /// Sample count N.
    pub n: usize,
    pub label: Label,
    /// `uᵢ = (Ac)ᵢ − γᵢ/ρ`.
    pub anchor: f64,
}

impl ProxParams {
    pub fn new(rho: f64, n: usize, label: Label, anchor: f64) -> Result<Self> {
        if !(rho > 0.0 && rho.is_finite()) {
            return Err(Error::InvalidConfig(format!(
                "rho must be positive, got {rho}"
            )));
        }
        if n == 0 {
            return Err(Error::InvalidConfig(
                "sample count must be at least 1".into(),
            ));
        }
        if !anchor.is_finite() {
            return Err(Error::InvalidInput(format!(
                "prox anchor is not finite: {anchor}"
            )));
        }
        Ok(Self {
            rho,
            n,
            label,
            anchor,
        })
    }

    /// `1/(ρN)`, the loss weight after dividing the objective by ρ.
    #[inline]
    pub fn step(&self) -> f64 {
        1.0 / (self.rho * self.n as f64)
    }
}

#[derive(Debug, Clone, Copy, PartialEq)]
pub struct ProxSolution {
    pub argmin: f64,
    pub value: f64,
}

/// `L(y, α)/N + (ρ/2)(α − u)²`.
pub fn prox_objective(loss: &MarginLoss, p: &ProxParams, alpha: f64) -> f64 {
    let d = alpha - p.anchor;
    loss_value(loss, p.label, alpha) / p.n as f64 + 0.5 * p.rho * d * d
}

/// Candidates whose objective is within this (scaled) gap of the best are
/// treated as tied; the smallest α among them wins.
const TIE_TOL: f64 = 1e-12;

/// Exact minimizer of the proximal subproblem.
///
/// Hinge always, and ramp when `0 < 1/(ρN) < 2`, go through their closed
/// forms; everything else through [`prox_enumerate`].
pub fn prox(loss: &MarginLoss, p: &ProxParams) -> ProxSolution {
    let fast = match loss.kind() {
        LossKind::Hinge => Some(hinge_closed_form(p)),
        LossKind::Ramp => ramp_closed_form(p),
        _ => None,
    };
    match fast {
        Some(argmin) => ProxSolution {
            argmin,
            value: prox_objective(loss, p, argmin),
        },
        None => prox_enumerate(loss, p),
    }
}

/// Generic piecewise enumerator: stationary points of every piece clamped to
/// that piece, plus every breakpoint. Exact for any loss whose pieces are
/// affine, constant or `log(2 − z)`.
pub fn prox_enumerate(loss: &MarginLoss, p: &ProxParams) -> ProxSolution {
    let y = p.label.sign();
    let v = y * p.anchor;
    let h = p.step();

    let mut candidates: Vec<f64> = Vec::with_capacity(2 * loss.pieces.len() + 2);
    for piece in &loss.pieces {
        let mut push_clamped = |z: f64| {
            if z.is_finite() {
                candidates.push(z.clamp(piece.lower, piece.upper));
            }
        };
        match piece.form {
            // d/dz [h(sz + b) + (z − v)²/2] = 0
            PieceForm::Affine { slope, .. } => push_clamped(v - h * slope),
            PieceForm::Constant(_) => push_clamped(v),
            // (z − v)(2 − z) = h  ⇔  z² − (2 + v)z + 2v + h = 0
            PieceForm::LogTwoMinus => {
                let disc = (2.0 - v) * (2.0 - v) - 4.0 * h;
                if disc >= 0.0 {
                    let b = 2.0 + v;
                    let c = 2.0 * v + h;
                    let sq = disc.sqrt();
                    let z1 = if b >= 0.0 {
                        0.5 * (b + sq)
                    } else {
                        0.5 * (b - sq)
                    };
                    let z2 = if z1 != 0.0 { c / z1 } else { 0.5 * (b - sq) };
                    for z in [z1, z2] {
                        if z < 2.0 {
                            push_clamped(z);
                        }
                    }
                }
            }
        }
    }
    candidates.extend(loss.breakpoints());

    let scored: Vec<(f64, f64)> = candidates
        .into_iter()
        .map(|z| {
            let alpha = y * z;
            (alpha, prox_objective(loss, p, alpha))
        })
        .collect();
    let best = scored.iter().map(|&(_, g)| g).fold(f64::INFINITY, f64::min);
    let cutoff = best + TIE_TOL * best.abs().max(1.0);
    let (argmin, value) = scored
        .into_iter()
        .filter(|&(_, g)| g <= cutoff)
        .min_by(|a, b| a.0.total_cmp(&b.0))
        .expect("enumeration always yields candidates");
    ProxSolution { argmin, value }
}

/// Closed-form hinge prox, branch by branch.
pub fn hinge_closed_form(p: &ProxParams) -> f64 {
    let u = p.anchor;
    let h = p.step();
    match p.label {
        Label::Positive => {
            if u < 1.0 - h {
                u + h
            } else if u < 1.0 {
                1.0
            } else {
                u
            }
        }
        Label::Negative => {
            if u < -1.0 {
                u
            } else if u < -1.0 + h {
                -1.0
            } else {
                u - h
            }
        }
    }
}

/// Closed-form ramp prox, valid for `0 < 1/(ρN) < 2`; `None` otherwise.
///
/// At the tie point `u = ∓1/(2ρN)` both branches are optimal and the
/// smaller α is returned.
pub fn ramp_closed_form(p: &ProxParams) -> Option<f64> {
    let u = p.anchor;
    let h = p.step();
    if !(h > 0.0 && h < 2.0) {
        return None;
    }
    let alpha = match p.label {
        Label::Positive => {
            if u <= -0.5 * h {
                u
            } else if u <= 1.0 - h {
                u + h
            } else if u < 1.0 {
                1.0
            } else {
                u
            }
        }
        Label::Negative => {
            if u <= -1.0 {
                u
            } else if u < -1.0 + h {
                -1.0
            } else if u <= 0.5 * h {
                u - h
            } else {
                u
            }
        }
    };
    Some(alpha)
}
