//! Reference recoverers: genie-aided least squares at known frequencies, an
//! exhaustive grid minimizer of the single-sinusoid objective, and a
//! band-excluded orthogonal matching pursuit over an oversampled DFT frame.

use std::f64::consts::PI;

use nalgebra::{DMatrix, DVector};
use rustfft::num_complex::Complex64;
use rustfft::FftPlanner;
use serde::{Deserialize, Serialize};

use crate::error::{Error, Result};
use crate::estimator::{build_atoms, fit_pair, solve_gram, MeasuredAtomPair};
use crate::model::{SignalModel, SinusoidParams};
use crate::numerics::{norm_sq, sub};
use crate::sensing::{Measurement, SensingMatrix};

/// Relative singular-value floor for the stacked least-squares problems.
const RANK_TOL: f64 = 1e-10;

/// Oversampled DFT frame: `c N` unit-norm atoms
/// `e(w) = N^{-1/2} [1, e^{jw}, ..., e^{jw(N-1)}]` at `w = 0, D, ..., 2 pi - D`
/// with `D = 2 pi / (c N)`.
#[derive(Debug, Clone, Copy, PartialEq, Eq)]
pub struct RedundantDftFrame {
    c: usize,
    n: usize,
}

impl RedundantDftFrame {
    pub fn new(c: usize, n: usize) -> Result<Self> {
        if c == 0 || n == 0 {
            return Err(Error::invalid(
                "frame oversampling and length must be positive",
            ));
        }
        Ok(Self { c, n })
    }

    pub fn len(&self) -> usize {
        self.c * self.n
    }

    pub fn is_empty(&self) -> bool {
        false
    }

    pub fn delta(&self) -> f64 {
        2.0 * PI / self.len() as f64
    }

    pub fn frequency(&self, i: usize) -> f64 {
        i as f64 * self.delta()
    }

    pub fn atom(&self, i: usize) -> Vec<Complex64> {
        let w = self.frequency(i);
        let scale = 1.0 / (self.n as f64).sqrt();
        (0..self.n)
            .map(|t| Complex64::from_polar(scale, w * t as f64))
            .collect()
    }

    /// Frame frequencies strictly inside `(0, pi)`, the distinct real
    /// sinusoids the frame can represent.
    pub fn real_frequencies(&self) -> Vec<f64> {
        (1..self.len())
            .map(|i| self.frequency(i))
            .take_while(|&w| w < PI)
            .collect()
    }
}

/// Result of a least-squares fit on a fixed set of frequencies.
#[derive(Debug, Clone, PartialEq)]
pub struct JointFit {
    /// `(a1, a2)` per frequency.
    pub coefficients: Vec<(f64, f64)>,
    pub residual: Vec<f64>,
}

/// One least-squares solve on the stacked `[Phi sin_w1, Phi cos_w1, ...]`
/// atom matrix.
pub fn joint_ls(phi: &SensingMatrix, m: &[f64], freqs: &[f64]) -> Result<JointFit> {
    Error::check_len("measurement length", phi.rows(), m.len())?;
    let atoms: Vec<MeasuredAtomPair> = freqs.iter().map(|&w| build_atoms(phi, w)).collect();
    joint_ls_atoms(&atoms, m)
}

fn joint_ls_atoms(atoms: &[MeasuredAtomPair], m: &[f64]) -> Result<JointFit> {
    let rows = m.len();
    let cols = 2 * atoms.len();
    if cols == 0 {
        return Ok(JointFit {
            coefficients: Vec::new(),
            residual: m.to_vec(),
        });
    }
    if cols > rows {
        return Err(Error::RankDeficient {
            columns: cols,
            rank: rows,
        });
    }
    let a = DMatrix::from_fn(rows, cols, |i, j| {
        let pair = &atoms[j / 2];
        if j % 2 == 0 {
            pair.sine[i]
        } else {
            pair.cosine[i]
        }
    });
    let svd = a.clone().svd(true, true);
    let smax = svd.singular_values.max();
    let rank = svd
        .singular_values
        .iter()
        .filter(|&&s| s > RANK_TOL * smax)
        .count();
    if smax == 0.0 || rank < cols {
        return Err(Error::RankDeficient {
            columns: cols,
            rank,
        });
    }
    let b = DVector::from_column_slice(m);
    let x = svd
        .solve(&b, RANK_TOL * smax)
        .map_err(|e| Error::invalid(format!("least-squares solve failed: {e}")))?;
    let fitted = &a * &x;
    let residual = sub(m, fitted.as_slice());
    let coefficients = (0..atoms.len()).map(|j| (x[2 * j], x[2 * j + 1])).collect();
    Ok(JointFit {
        coefficients,
        residual,
    })
}

fn model_from_fit(n: usize, freqs: &[f64], fit: &JointFit) -> Result<SignalModel> {
    let comps = freqs
        .iter()
        .zip(&fit.coefficients)
        .map(|(&w, &(a1, a2))| SinusoidParams::from_quadrature(w, a1, a2))
        .collect::<Result<Vec<_>>>()?;
    SignalModel::from_estimates(n, comps)
}

/// Genie-aided recovery: amplitudes and phases fitted jointly with the
/// frequencies fixed at `true_frequencies`.
pub fn oracle_ls(
    phi: &SensingMatrix,
    m: &Measurement,
    true_frequencies: &[f64],
) -> Result<SignalModel> {
    for (i, a) in true_frequencies.iter().enumerate() {
        if true_frequencies[i + 1..].contains(a) {
            return Err(Error::invalid(format!("duplicate oracle frequency {a}")));
        }
    }
    let fit = joint_ls(phi, &m.values, true_frequencies)?;
    model_from_fit(phi.cols(), true_frequencies, &fit)
}

#[derive(Debug, Clone, Copy, PartialEq)]
pub struct GridMinimum {
    pub index: usize,
    pub omega: f64,
    pub residual_sq: f64,
}

/// `S(w) = |r - A_w A_w^+ r|^2` at the `grid_size` nodes `w_k = k pi / (grid_size - 1)`.
///
/// Evaluated without forming any atom pair. With `Q = Phi^T Phi` and
/// `b = Phi^T r`, the Gram entries and right-hand side are trigonometric
/// polynomials in `w`:
///
/// ```text
/// |Phi sin|^2   = (C_D - C_U) / 2      C_D = sum_{t,s} Q_ts cos((t - s) w)
/// |Phi cos|^2   = (C_D + C_U) / 2      C_U = sum_{t,s} Q_ts cos((t + s) w)
/// <Phi sin, Phi cos> = S_U / 2         S_U = sum_{t,s} Q_ts sin((t + s) w)
/// <Phi sin, r>  = sum_t b_t sin(t w),  <Phi cos, r> = sum_t b_t cos(t w)
/// ```
///
/// so all nodes follow from three inverse FFTs of length `2 (grid_size - 1)`.
pub fn grid_profile(phi: &SensingMatrix, r: &[f64], grid_size: usize) -> Result<Vec<f64>> {
    Error::check_len("residual length", phi.rows(), r.len())?;
    if grid_size < 2 {
        return Err(Error::invalid("grid_size must be at least 2"));
    }
    let rr = norm_sq(r);
    if rr == 0.0 {
        return Err(Error::ZeroSignal("residual is zero; nothing to estimate"));
    }
    let (m, n) = (phi.rows(), phi.cols());
    let len = 2 * (grid_size - 1);

    let mut q = vec![0.0; n * n];
    for row in 0..m {
        let p = phi.row(row);
        for t in 0..n {
            let pt = p[t];
            if pt == 0.0 {
                continue;
            }
            for s in 0..n {
                q[t * n + s] += pt * p[s];
            }
        }
    }
    let mut b = vec![0.0; n];
    for (row, &rv) in r.iter().enumerate() {
        for (bt, &p) in b.iter_mut().zip(phi.row(row)) {
            *bt += p * rv;
        }
    }

    // Coefficients are folded modulo `len`, which keeps node values exact
    // even when the polynomial degree exceeds the transform length.
    let mut diff = vec![Complex64::new(0.0, 0.0); len];
    let mut sum = vec![Complex64::new(0.0, 0.0); len];
    let mut lin = vec![Complex64::new(0.0, 0.0); len];
    for t in 0..n {
        for s in 0..n {
            let v = q[t * n + s];
            // 1-based sample times: (t + 1) + (s + 1).
            sum[(t + s + 2) % len].re += v;
            if t >= s {
                let w = if t == s { v } else { 2.0 * v };
                diff[(t - s) % len].re += w;
            }
        }
        lin[(t + 1) % len].re += b[t];
    }

    let mut planner = FftPlanner::new();
    let fft = planner.plan_fft_inverse(len);
    fft.process(&mut diff);
    fft.process(&mut sum);
    fft.process(&mut lin);

    let tol = crate::estimator::EstimatorConfig::default().gram_det_tol;
    Ok((0..grid_size)
        .map(|k| {
            let cd = diff[k % len].re;
            let (cu, su) = (sum[k % len].re, sum[k % len].im);
            let g11 = 0.5 * (cd - cu);
            let g22 = 0.5 * (cd + cu);
            let g12 = 0.5 * su;
            let (b1, b2) = (lin[k % len].im, lin[k % len].re);
            let (a1, a2) = solve_gram(g11, g12, g22, b1, b2, tol);
            (rr - (a1 * b1 + a2 * b2)).max(0.0)
        })
        .collect())
}

/// Exhaustive minimizer of `S(w)` over the uniform `grid_size`-node grid on
/// `[0, pi]`; the lowest index wins ties.
pub fn grid_oracle(phi: &SensingMatrix, r: &[f64], grid_size: usize) -> Result<GridMinimum> {
    let profile = grid_profile(phi, r, grid_size)?;
    let mut best = GridMinimum {
        index: 0,
        omega: 0.0,
        residual_sq: f64::INFINITY,
    };
    for (k, &s) in profile.iter().enumerate() {
        if s < best.residual_sq {
            best = GridMinimum {
                index: k,
                omega: k as f64 * PI / (grid_size - 1) as f64,
                residual_sq: s,
            };
        }
    }
    Ok(best)
}

#[derive(Debug, Clone, Copy, PartialEq, Serialize, Deserialize)]
#[serde(default)]
pub struct BompConfig {
    /// Number of real sinusoids to select.
    pub k: usize,
    /// Exclusion radius around selected frequencies; `None` means `pi / N`.
    pub band_radius: Option<f64>,
    pub frame_c: usize,
}

impl Default for BompConfig {
    fn default() -> Self {
        Self {
            k: 1,
            band_radius: None,
            frame_c: 5,
        }
    }
}

/// Band-excluded orthogonal matching pursuit over the oversampled DFT frame.
///
/// Each frame frequency in `(0, pi)` contributes the real pair
/// `(Phi sin, Phi cos)`. The pair capturing the most residual energy is
/// selected, every frame frequency within `band_radius` of it is excluded,
/// and all selected pairs are refitted jointly.
pub fn bomp_recover(phi: &SensingMatrix, m: &Measurement, cfg: &BompConfig) -> Result<SignalModel> {
    Error::check_len("measurement length", phi.rows(), m.len())?;
    let n = phi.cols();
    let band = cfg.band_radius.unwrap_or(PI / n as f64);
    if band.is_nan() || band <= 0.0 {
        return Err(Error::invalid("band_radius must be positive"));
    }
    let frame = RedundantDftFrame::new(cfg.frame_c, n)?;
    if cfg.k == 0 {
        return SignalModel::from_estimates(n, Vec::new());
    }

    let freqs = frame.real_frequencies();
    let atoms: Vec<MeasuredAtomPair> = freqs.iter().map(|&w| build_atoms(phi, w)).collect();
    let mut excluded = vec![false; freqs.len()];
    let mut selected: Vec<usize> = Vec::with_capacity(cfg.k);
    let mut fit = JointFit {
        coefficients: Vec::new(),
        residual: m.values.clone(),
    };

    for _ in 0..cfg.k {
        let energy = norm_sq(&fit.residual);
        let mut best: Option<(usize, f64)> = None;
        for (i, pair) in atoms.iter().enumerate() {
            if excluded[i] {
                continue;
            }
            let gain =
                energy - fit_pair(&pair.sine, &pair.cosine, &fit.residual, 1e-12).residual_sq;
            if best.is_none_or(|(_, g)| gain > g) {
                best = Some((i, gain));
            }
        }
        let Some((pick, _)) = best else {
            log::warn!(
                "band exclusion left only {} of {} requested atoms",
                selected.len(),
                cfg.k
            );
            break;
        };
        selected.push(pick);
        for (i, &w) in freqs.iter().enumerate() {
            if (w - freqs[pick]).abs() <= band {
                excluded[i] = true;
            }
        }
        let chosen: Vec<MeasuredAtomPair> = selected.iter().map(|&i| atoms[i].clone()).collect();
        fit = joint_ls_atoms(&chosen, &m.values)?;
    }

    let chosen_freqs: Vec<f64> = selected.iter().map(|&i| freqs[i]).collect();
    model_from_fit(n, &chosen_freqs, &fit)
}
