//! Single-sinusoid estimation from a residual measurement vector.
//!
//! For a candidate frequency `omega` the measured atom pair
//! `A = [Phi sin_omega, Phi cos_omega]` is formed and the amplitudes are the
//! least-squares solution of `min |r - A a|^2`. The frequency is found by a
//! uniform grid over a bracket `[lo, hi]` (initially `[0, pi]`); after each
//! pass the bracket shrinks to the two grid neighbours of the best point and
//! the grid is laid again inside it.

use std::f64::consts::PI;

use nalgebra::{DMatrix, DMatrixView};
use serde::{Deserialize, Serialize};

use crate::error::{Error, Result};
use crate::model::{sinusoid_samples, SinusoidParams};
use crate::numerics::{dot, norm_sq};
use crate::sensing::SensingMatrix;

/// Compressed sine/cosine atoms at one frequency: the `M x 2` matrix
/// `[Phi sin_omega, Phi cos_omega]`, stored column by column.
#[derive(Debug, Clone, PartialEq)]
pub struct MeasuredAtomPair {
    pub omega: f64,
    pub sine: Vec<f64>,
    pub cosine: Vec<f64>,
}

pub fn build_atoms(phi: &SensingMatrix, omega: f64) -> MeasuredAtomPair {
    let (s, c) = sinusoid_samples(omega, phi.cols());
    let (sine, cosine) = phi.apply_pair(&s, &c);
    MeasuredAtomPair {
        omega,
        sine,
        cosine,
    }
}

/// `Phi [sin_w0, cos_w0, sin_w1, cos_w1, ...]` as one `M x 2g` product.
fn measure_grid(phi: &SensingMatrix, omegas: impl ExactSizeIterator<Item = f64>) -> DMatrix<f64> {
    let n = phi.cols();
    let mut table = DMatrix::zeros(n, 2 * omegas.len());
    for (i, omega) in omegas.enumerate() {
        let (step_s, step_c) = omega.sin_cos();
        let (mut s, mut c) = (0.0, 0.0);
        for t in 0..n {
            // Angle addition, re-anchored on exact values every 16 samples.
            (s, c) = if t % 16 == 0 {
                (omega * (t + 1) as f64).sin_cos()
            } else {
                (s * step_c + c * step_s, c * step_c - s * step_s)
            };
            table[(t, 2 * i)] = s;
            table[(t, 2 * i + 1)] = c;
        }
    }
    // Row-major `Phi` is the column-major `N x M` matrix `Phi^T`.
    DMatrixView::from_slice(phi.entries(), n, phi.rows()).transpose() * table
}

/// Least-squares amplitudes `(a1, a2)` for `a1 Phi sin + a2 Phi cos` and the
/// attained squared residual.
#[derive(Debug, Clone, Copy, PartialEq)]
pub struct AmplitudeFit {
    pub sine_coef: f64,
    pub cosine_coef: f64,
    pub residual_sq: f64,
}

/// Solves the 2x2 normal equations `A^T A a = A^T r`.
///
/// When `det(A^T A) <= gram_det_tol * trace(A^T A)^2` the pair is treated as
/// rank one: the dominant column is fitted alone and the other coefficient is
/// zero. One step of iterative refinement is applied to the solution.
pub fn amplitude_ls(
    atoms: &MeasuredAtomPair,
    r: &[f64],
    gram_det_tol: f64,
) -> Result<AmplitudeFit> {
    Error::check_len("residual length", atoms.sine.len(), r.len())?;
    Ok(fit_pair(&atoms.sine, &atoms.cosine, r, gram_det_tol))
}

#[derive(Clone, Copy)]
enum Gram {
    Zero,
    SineOnly(f64),
    CosineOnly(f64),
    Full {
        g11: f64,
        g12: f64,
        g22: f64,
        det: f64,
    },
}

impl Gram {
    fn new(s: &[f64], c: &[f64], tol: f64) -> Self {
        Self::from_entries(norm_sq(s), dot(s, c), norm_sq(c), tol)
    }

    fn from_entries(g11: f64, g12: f64, g22: f64, tol: f64) -> Self {
        let trace = g11 + g22;
        if trace <= 0.0 {
            return Gram::Zero;
        }
        let det = g11 * g22 - g12 * g12;
        if det <= tol * trace * trace {
            if g11 >= g22 {
                Gram::SineOnly(g11)
            } else {
                Gram::CosineOnly(g22)
            }
        } else {
            Gram::Full { g11, g12, g22, det }
        }
    }

    fn solve(&self, b1: f64, b2: f64) -> (f64, f64) {
        match *self {
            Gram::Zero => (0.0, 0.0),
            Gram::SineOnly(g) => (b1 / g, 0.0),
            Gram::CosineOnly(g) => (0.0, b2 / g),
            Gram::Full { g11, g12, g22, det } => {
                ((g22 * b1 - g12 * b2) / det, (g11 * b2 - g12 * b1) / det)
            }
        }
    }
}

fn residual(s: &[f64], c: &[f64], r: &[f64], a1: f64, a2: f64) -> Vec<f64> {
    r.iter()
        .zip(s.iter().zip(c))
        .map(|(rv, (sv, cv))| rv - a1 * sv - a2 * cv)
        .collect()
}

/// Solution of the 2x2 system with Gram entries `(g11, g12, g22)` and
/// right-hand side `(b1, b2)`, using the same rank-one policy as
/// [`amplitude_ls`].
pub(crate) fn solve_gram(g11: f64, g12: f64, g22: f64, b1: f64, b2: f64, tol: f64) -> (f64, f64) {
    Gram::from_entries(g11, g12, g22, tol).solve(b1, b2)
}

pub(crate) fn fit_pair(s: &[f64], c: &[f64], r: &[f64], tol: f64) -> AmplitudeFit {
    let gram = Gram::new(s, c, tol);
    let (mut a1, mut a2) = gram.solve(dot(s, r), dot(c, r));
    let e = residual(s, c, r, a1, a2);
    let (d1, d2) = gram.solve(dot(s, &e), dot(c, &e));
    a1 += d1;
    a2 += d2;
    let e = residual(s, c, r, a1, a2);
    AmplitudeFit {
        sine_coef: a1,
        cosine_coef: a2,
        residual_sq: norm_sq(&e),
    }
}

#[derive(Debug, Clone, Copy, PartialEq, Serialize, Deserialize)]
#[serde(default)]
pub struct EstimatorConfig {
    /// Grid intervals per pass; `None` uses the signal length `N`.
    pub grid_points: Option<usize>,
    /// Stop once the bracket is narrower than this (radians).
    pub freq_tol: f64,
    /// Hard cap on grid passes.
    pub max_refinements: usize,
    /// Relative Gram determinant below which the atom pair counts as rank one.
    pub gram_det_tol: f64,
}

impl Default for EstimatorConfig {
    fn default() -> Self {
        Self {
            grid_points: None,
            freq_tol: 1e-8,
            max_refinements: 60,
            gram_det_tol: 1e-12,
        }
    }
}

impl EstimatorConfig {
    pub fn validate(&self) -> Result<()> {
        if let Some(g) = self.grid_points {
            if g < 2 {
                return Err(Error::invalid("grid_points must be at least 2"));
            }
        }
        if [self.freq_tol, self.gram_det_tol]
            .iter()
            .any(|t| t.is_nan() || *t <= 0.0)
        {
            return Err(Error::invalid("freq_tol and gram_det_tol must be positive"));
        }
        if self.max_refinements == 0 {
            return Err(Error::invalid("max_refinements must be positive"));
        }
        Ok(())
    }

    pub fn grid_points_for(&self, n: usize) -> usize {
        self.grid_points.unwrap_or(n).max(2)
    }
}

/// Closed frequency interval searched by one grid pass.
#[derive(Debug, Clone, Copy, PartialEq, Serialize, Deserialize)]
pub struct Bracket {
    pub lo: f64,
    pub hi: f64,
}

impl Bracket {
    pub const FULL: Bracket = Bracket { lo: 0.0, hi: PI };

    pub fn width(&self) -> f64 {
        self.hi - self.lo
    }

    pub fn contains(&self, omega: f64) -> bool {
        self.lo <= omega && omega <= self.hi
    }
}

#[derive(Debug, Clone, PartialEq)]
pub struct EstimateOutcome {
    pub params: SinusoidParams,
    pub sine_coef: f64,
    pub cosine_coef: f64,
    /// Best squared residual `S` found.
    pub residual_sq: f64,
    pub refinements_used: usize,
    pub grid_points: usize,
    /// `brackets[0]` is the starting bracket, `brackets[i]` the bracket after
    /// pass `i`.
    pub brackets: Vec<Bracket>,
    /// Best `S` after each pass.
    pub best_by_pass: Vec<f64>,
}

/// Estimates the single sinusoid that best explains `r` over `[0, pi]`.
pub fn estimate_sinusoid(
    phi: &SensingMatrix,
    r: &[f64],
    cfg: &EstimatorConfig,
) -> Result<EstimateOutcome> {
    estimate_in_bracket(phi, r, cfg, Bracket::FULL)
}

/// Same as [`estimate_sinusoid`] with a caller-chosen starting bracket.
pub fn estimate_in_bracket(
    phi: &SensingMatrix,
    r: &[f64],
    cfg: &EstimatorConfig,
    start: Bracket,
) -> Result<EstimateOutcome> {
    cfg.validate()?;
    Error::check_len("residual length", phi.rows(), r.len())?;
    if norm_sq(r) == 0.0 {
        return Err(Error::ZeroSignal("residual is zero; nothing to estimate"));
    }
    if !(0.0 <= start.lo && start.lo < start.hi && start.hi <= PI) {
        return Err(Error::invalid(
            "start bracket must satisfy 0 <= lo < hi <= pi",
        ));
    }

    let grid = cfg.grid_points_for(phi.cols());
    let gf = grid as f64;
    let mut bracket = start;
    let mut brackets = vec![bracket];
    let mut best_by_pass = Vec::new();
    let mut best_s = f64::INFINITY;
    let mut best_omega = f64::NAN;
    let mut best_fit = None;
    let mut passes = 0;

    loop {
        let Bracket { lo, hi } = bracket;
        let node = |i: usize| (lo + (i as f64) * (hi - lo) / gf).min(hi);
        let mut improved = None;
        let measured = measure_grid(phi, (0..grid + 1).map(node));
        for i in 0..=grid {
            let omega = node(i);
            let sine = measured.column(2 * i);
            let cosine = measured.column(2 * i + 1);
            let fit = fit_pair(sine.as_slice(), cosine.as_slice(), r, cfg.gram_det_tol);
            // Strict comparison keeps the lowest index among equal minima.
            if fit.residual_sq < best_s {
                best_s = fit.residual_sq;
                best_omega = omega;
                best_fit = Some(fit);
                improved = Some(i);
            }
        }
        passes += 1;
        best_by_pass.push(best_s);

        bracket = match improved {
            Some(j) => Bracket {
                lo: if j == 0 { lo } else { node(j - 1).max(lo) },
                hi: if j == grid { hi } else { node(j + 1).min(hi) },
            },
            // No point of this pass beat the carried-over best: contract
            // around it with the current spacing.
            None => {
                let step = (hi - lo) / gf;
                Bracket {
                    lo: (best_omega - step).max(lo),
                    hi: (best_omega + step).min(hi),
                }
            }
        };
        brackets.push(bracket);

        if bracket.width() < cfg.freq_tol || passes >= cfg.max_refinements {
            break;
        }
    }

    let fit = best_fit.expect("at least one grid point is evaluated");
    Ok(EstimateOutcome {
        params: SinusoidParams::from_quadrature(best_omega, fit.sine_coef, fit.cosine_coef)?,
        sine_coef: fit.sine_coef,
        cosine_coef: fit.cosine_coef,
        residual_sq: fit.residual_sq,
        refinements_used: passes,
        grid_points: grid,
        brackets,
        best_by_pass,
    })
}
