//! Cyclic model-selection recovery of `K` sinusoids.
//!
//! Every sweep visits the components in index order. Component `i` is
//! re-estimated against `r = m - sum_{j != i} Phi s_j` and its measured
//! contribution replaced. Sweeps stop once the measurement-domain residual
//! `|m - Phi sum_j s_j|` changes by less than `residual_rel_tol` (relative)
//! over a full sweep, or after `max_sweeps`.
//!
//! A replacement is only kept when it does not raise the residual of its own
//! subproblem, so the per-sweep residual sequence is non-increasing even when
//! the grid search misses the global minimizer.

use std::f64::consts::PI;

use serde::{Deserialize, Serialize};

use crate::error::{Error, Result};
use crate::estimator::{estimate_in_bracket, Bracket, EstimateOutcome, EstimatorConfig};
use crate::model::{SignalModel, SinusoidParams};
use crate::numerics::{axpy, norm, norm_sq, sub};
use crate::sensing::{Measurement, SensingMatrix};

#[derive(Debug, Clone, Copy, PartialEq, Serialize, Deserialize)]
#[serde(default)]
pub struct RecoveryConfig {
    pub k: usize,
    /// Safety cap. Tones about `pi / N` apart converge linearly and can need
    /// a hundred or more sweeps before the relative-change rule fires.
    pub max_sweeps: usize,
    pub residual_rel_tol: f64,
    pub estimator: EstimatorConfig,
    /// Merge components that converge onto the same frequency so the freed
    /// slot can pick up a missed tone.
    pub collapse_duplicates: bool,
    /// Restart each estimate from a narrow bracket around the previous
    /// sweep's frequency instead of `[0, pi]`.
    pub warm_start: bool,
}

impl Default for RecoveryConfig {
    fn default() -> Self {
        Self {
            k: 1,
            max_sweeps: 200,
            residual_rel_tol: 1e-10,
            estimator: EstimatorConfig::default(),
            collapse_duplicates: true,
            warm_start: false,
        }
    }
}

impl RecoveryConfig {
    pub fn new(k: usize) -> Self {
        Self {
            k,
            ..Self::default()
        }
    }

    pub fn validate(&self) -> Result<()> {
        if self.k == 0 {
            return Err(Error::invalid("k must be at least 1"));
        }
        if self.max_sweeps == 0 {
            return Err(Error::invalid("max_sweeps must be at least 1"));
        }
        if self.residual_rel_tol.is_nan() || self.residual_rel_tol < 0.0 {
            return Err(Error::invalid("residual_rel_tol must be nonnegative"));
        }
        self.estimator.validate()
    }
}

#[derive(Debug, Clone, PartialEq, Serialize, Deserialize)]
pub struct RecoveryResult {
    pub model: SignalModel,
    /// `model.synthesize()`.
    #[serde(skip)]
    pub signal: Vec<f64>,
    pub sweeps_used: usize,
    pub final_residual_norm: f64,
    /// Measurement-domain residual norm at the end of each sweep.
    pub sweep_residuals: Vec<f64>,
}

/// Hooks into a running recovery; all methods default to no-ops.
pub trait RecoveryObserver {
    /// `residual` is the vector the estimate was fitted to.
    fn on_estimate(&mut self, _slot: usize, _residual: &[f64], _outcome: &EstimateOutcome) {}
    fn on_sweep(&mut self, _sweep: usize, _residual_norm: f64) {}
}

impl RecoveryObserver for () {}

/// `m - sum_{j != exclude} Phi s_j` for sample-domain estimates `s_j`.
/// `exclude` is a 0-based index.
pub fn form_residual(
    m: &Measurement,
    phi: &SensingMatrix,
    estimates: &[Vec<f64>],
    exclude: usize,
) -> Result<Vec<f64>> {
    Error::check_len("measurement length", phi.rows(), m.len())?;
    if exclude >= estimates.len() {
        return Err(Error::invalid(format!(
            "exclude index {exclude} out of range for {} estimates",
            estimates.len()
        )));
    }
    let mut r = m.values.clone();
    for (j, s) in estimates.iter().enumerate() {
        Error::check_len("estimate length", phi.cols(), s.len())?;
        if j != exclude {
            axpy(&mut r, -1.0, &phi.apply(s));
        }
    }
    Ok(r)
}

struct Slot {
    params: Option<SinusoidParams>,
    measured: Vec<f64>,
}

struct State<'a> {
    phi: &'a SensingMatrix,
    m: &'a [f64],
    slots: Vec<Slot>,
}

impl State<'_> {
    fn residual(&self) -> Vec<f64> {
        let mut r = self.m.to_vec();
        for s in &self.slots {
            axpy(&mut r, -1.0, &s.measured);
        }
        r
    }

    fn residual_without(&self, i: usize) -> Vec<f64> {
        let mut r = self.m.to_vec();
        for (j, s) in self.slots.iter().enumerate() {
            if j != i {
                axpy(&mut r, -1.0, &s.measured);
            }
        }
        r
    }

    fn measured_of(&self, p: &SinusoidParams) -> Vec<f64> {
        self.phi.apply(&p.samples(self.phi.cols()))
    }

    /// Re-estimates slot `i`; keeps the old value if the new one fits its
    /// subproblem worse.
    fn update(
        &mut self,
        i: usize,
        cfg: &RecoveryConfig,
        obs: &mut dyn RecoveryObserver,
    ) -> Result<()> {
        let r = self.residual_without(i);
        if norm_sq(&r) == 0.0 {
            self.slots[i] = Slot {
                params: None,
                measured: vec![0.0; self.m.len()],
            };
            return Ok(());
        }
        let start = match (cfg.warm_start, self.slots[i].params) {
            (true, Some(p)) => {
                let half = 2.0 * PI / cfg.estimator.grid_points_for(self.phi.cols()) as f64;
                Bracket {
                    lo: (p.omega() - half).max(0.0),
                    hi: (p.omega() + half).min(PI),
                }
            }
            _ => Bracket::FULL,
        };
        let outcome = estimate_in_bracket(self.phi, &r, &cfg.estimator, start)?;
        obs.on_estimate(i, &r, &outcome);
        let measured = self.measured_of(&outcome.params);
        let new_err = norm_sq(&sub(&r, &measured));
        let old_err = norm_sq(&sub(&r, &self.slots[i].measured));
        if new_err <= old_err {
            self.slots[i] = Slot {
                params: Some(outcome.params),
                measured,
            };
        }
        Ok(())
    }

    /// Finds a pair of active slots closer than `tol` in frequency.
    fn duplicate_pair(&self, tol: f64) -> Option<(usize, usize)> {
        for i in 0..self.slots.len() {
            for j in i + 1..self.slots.len() {
                if let (Some(a), Some(b)) = (self.slots[i].params, self.slots[j].params) {
                    if (a.omega() - b.omega()).abs() < tol {
                        return Some((i, j));
                    }
                }
            }
        }
        None
    }

    /// Drops the weaker of two coincident slots, refits the survivor alone on
    /// the pair's residual and re-estimates the freed slot. The change is
    /// kept only if the total residual strictly decreases.
    fn collapse(&mut self, cfg: &RecoveryConfig, obs: &mut dyn RecoveryObserver) -> Result<bool> {
        let Some((i, j)) = self.duplicate_pair(cfg.estimator.freq_tol) else {
            return Ok(false);
        };
        let amp = |s: usize| self.slots[s].params.map_or(0.0, |p| p.amplitude());
        let (keep, drop) = if amp(i) >= amp(j) { (i, j) } else { (j, i) };
        let before = norm_sq(&self.residual());
        let saved: Vec<(Option<SinusoidParams>, Vec<f64>)> = [keep, drop]
            .iter()
            .map(|&s| (self.slots[s].params, self.slots[s].measured.clone()))
            .collect();

        self.slots[drop] = Slot {
            params: None,
            measured: vec![0.0; self.m.len()],
        };
        self.update(keep, cfg, obs)?;
        self.update(drop, cfg, obs)?;

        if norm_sq(&self.residual()) < before {
            Ok(true)
        } else {
            for (&s, (params, measured)) in [keep, drop].iter().zip(saved) {
                self.slots[s] = Slot { params, measured };
            }
            Ok(false)
        }
    }
}

/// Recovers `cfg.k` sinusoids from `m`.
pub fn recover(
    phi: &SensingMatrix,
    m: &Measurement,
    cfg: &RecoveryConfig,
) -> Result<RecoveryResult> {
    recover_observed(phi, m, cfg, &mut ())
}

pub fn recover_observed(
    phi: &SensingMatrix,
    m: &Measurement,
    cfg: &RecoveryConfig,
    obs: &mut dyn RecoveryObserver,
) -> Result<RecoveryResult> {
    cfg.validate()?;
    Error::check_len("measurement length", phi.rows(), m.len())?;
    let (rows, n, k) = (phi.rows(), phi.cols(), cfg.k);
    if 3 * k > rows {
        log::warn!(
            "3k = {} exceeds M = {rows}: the fit is underdetermined",
            3 * k
        );
    }

    let m_norm = norm(&m.values);
    let mut state = State {
        phi,
        m: &m.values,
        slots: (0..k)
            .map(|_| Slot {
                params: None,
                measured: vec![0.0; rows],
            })
            .collect(),
    };

    let mut sweep_residuals = Vec::new();
    if m_norm > 0.0 {
        let mut prev = m_norm;
        for sweep in 1..=cfg.max_sweeps {
            for i in 0..k {
                state.update(i, cfg, obs)?;
            }
            if cfg.collapse_duplicates {
                for _ in 0..k {
                    if !state.collapse(cfg, obs)? {
                        break;
                    }
                }
            }
            let cur = norm(&state.residual());
            sweep_residuals.push(cur);
            obs.on_sweep(sweep, cur);
            if cur == 0.0 || (prev - cur).abs() < cfg.residual_rel_tol * prev {
                break;
            }
            prev = cur;
        }
    }

    let components = state
        .slots
        .iter()
        .enumerate()
        .map(|(j, s)| match s.params {
            Some(p) => Ok(p),
            // Inactive slots report zero amplitude at distinct placeholder
            // frequencies.
            None => SinusoidParams::new((j + 1) as f64 * PI / (k + 1) as f64, 0.0, 0.0),
        })
        .collect::<Result<Vec<_>>>()?;
    let model = SignalModel::from_estimates(n, components)?;
    let signal = model.synthesize();
    Ok(RecoveryResult {
        model,
        signal,
        sweeps_used: sweep_residuals.len(),
        final_residual_norm: sweep_residuals.last().copied().unwrap_or(m_norm),
        sweep_residuals,
    })
}

#[cfg(test)]
mod tests {
    use super::*;
    use crate::estimator::estimate_sinusoid;
    use crate::harness::normalized_l2_error;
    use crate::model::{draw_model, Preset};

    #[test]
    fn residual_with_zero_estimates_is_measurement() {
        let phi = SensingMatrix::gaussian(8, 16, 0).unwrap();
        let m = phi.measure(&[1.0; 16]).unwrap();
        let zeros = vec![vec![0.0; 16]; 3];
        assert_eq!(form_residual(&m, &phi, &zeros, 1).unwrap(), m.values);
        let one = vec![vec![5.0; 16]];
        assert_eq!(form_residual(&m, &phi, &one, 0).unwrap(), m.values);
        assert!(form_residual(&m, &phi, &one, 1).is_err());
        assert!(form_residual(&m, &phi, &[vec![0.0; 3]], 0).is_err());
    }

    #[test]
    fn residual_matches_naive_sum() {
        let phi = SensingMatrix::gaussian(8, 16, 1).unwrap();
        let m = phi
            .measure(&(0..16).map(|i| i as f64).collect::<Vec<_>>())
            .unwrap();
        let est: Vec<Vec<f64>> = (0..3)
            .map(|j| {
                (0..16)
                    .map(|t| ((j + 1) as f64 * t as f64 * 0.1).sin())
                    .collect()
            })
            .collect();
        let r = form_residual(&m, &phi, &est, 1).unwrap();
        let s13: Vec<f64> = (0..16).map(|t| est[0][t] + est[2][t]).collect();
        let p = phi.measure(&s13).unwrap().values;
        for i in 0..8 {
            assert!((r[i] - (m.values[i] - p[i])).abs() < 1e-12);
        }
    }

    #[test]
    fn single_component_reduces_to_estimator() {
        let phi = SensingMatrix::gaussian(64, 128, 3).unwrap();
        let s = draw_model(2, 128, PI / 128.0, Preset::Sinu, 3)
            .unwrap()
            .synthesize();
        let m = phi.measure(&s).unwrap();
        let rec = recover(&phi, &m, &RecoveryConfig::new(1)).unwrap();
        let est = estimate_sinusoid(&phi, &m.values, &EstimatorConfig::default()).unwrap();
        assert_eq!(rec.model.components()[0], est.params);
    }

    #[test]
    fn identity_two_tones() {
        let phi = SensingMatrix::identity(128).unwrap();
        let truth = SignalModel::new(
            128,
            vec![
                SinusoidParams::new(0.61, 1.0, 0.0).unwrap(),
                SinusoidParams::new(1.93, 0.7, 1.2).unwrap(),
            ],
        )
        .unwrap();
        let s = truth.synthesize();
        let m = phi.measure(&s).unwrap();
        let rec = recover(&phi, &m, &RecoveryConfig::new(2)).unwrap();
        assert!(normalized_l2_error(&s, &rec.signal).unwrap() < 1e-6);
        assert_eq!(rec.signal, rec.model.synthesize());
    }

    #[test]
    fn zero_measurement_gives_zero_model() {
        let phi = SensingMatrix::gaussian(8, 16, 0).unwrap();
        let m = Measurement::new(vec![0.0; 8], 0);
        let rec = recover(&phi, &m, &RecoveryConfig::new(2)).unwrap();
        assert_eq!(rec.model.k(), 2);
        assert!(rec.model.components().iter().all(|c| c.amplitude() == 0.0));
        assert!(rec.signal.iter().all(|&v| v == 0.0));
        assert_eq!(rec.sweeps_used, 0);
    }

    #[test]
    fn underdetermined_still_runs() {
        let phi = SensingMatrix::gaussian(6, 32, 4).unwrap();
        let s = draw_model(3, 32, PI / 32.0, Preset::Freq, 4)
            .unwrap()
            .synthesize();
        let m = phi.measure(&s).unwrap();
        let rec = recover(&phi, &m, &RecoveryConfig::new(3)).unwrap();
        assert_eq!(rec.model.k(), 3);
    }

    #[test]
    fn config_validation() {
        let phi = SensingMatrix::gaussian(8, 16, 0).unwrap();
        let m = Measurement::new(vec![1.0; 8], 0);
        assert!(recover(&phi, &m, &RecoveryConfig::new(0)).is_err());
        let cfg = RecoveryConfig {
            max_sweeps: 0,
            ..RecoveryConfig::new(1)
        };
        assert!(recover(&phi, &m, &cfg).is_err());
        assert!(recover(
            &phi,
            &Measurement::new(vec![1.0; 7], 0),
            &RecoveryConfig::new(1)
        )
        .is_err());
    }

    #[test]
    fn deterministic_and_monotone() {
        struct Sweeps(Vec<f64>);
        impl RecoveryObserver for Sweeps {
            fn on_sweep(&mut self, _: usize, r: f64) {
                self.0.push(r);
            }
        }
        for seed in 0..6 {
            let phi = SensingMatrix::gaussian(40, 128, seed).unwrap();
            let s = draw_model(3, 128, PI / 128.0, Preset::Sinu, seed)
                .unwrap()
                .synthesize();
            let m = phi.measure(&s).unwrap();
            let cfg = RecoveryConfig::new(3);
            let mut obs = Sweeps(Vec::new());
            let a = recover_observed(&phi, &m, &cfg, &mut obs).unwrap();
            let b = recover(&phi, &m, &cfg).unwrap();
            assert_eq!(a, b);
            assert_eq!(obs.0, a.sweep_residuals);
            for w in a.sweep_residuals.windows(2) {
                assert!(w[1] <= w[0] + 1e-9);
            }
        }
    }

    #[test]
    fn pure_mode_and_warm_start_run() {
        let phi = SensingMatrix::gaussian(64, 128, 9).unwrap();
        let truth = draw_model(3, 128, PI / 128.0, Preset::Freq, 9).unwrap();
        let s = truth.synthesize();
        let m = phi.measure(&s).unwrap();
        let pure = RecoveryConfig {
            collapse_duplicates: false,
            ..RecoveryConfig::new(3)
        };
        let warm = RecoveryConfig {
            warm_start: true,
            ..RecoveryConfig::new(3)
        };
        for cfg in [pure, warm] {
            let rec = recover(&phi, &m, &cfg).unwrap();
            assert!(normalized_l2_error(&s, &rec.signal).unwrap() < 1e-3);
        }
    }
}
