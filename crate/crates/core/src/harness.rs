//! Monte Carlo experiment runner: error versus number of measurements and
//! error versus SNR, plus per-method timing.
//!
//! Every trial derives its seeds from `(base_seed, trial)` for the model and
//! `(base_seed, trial, sweep index)` for the matrix and noise, so cells are
//! reproducible and adding trials never changes earlier ones. All methods in
//! a cell see the same model, matrix and noise.

use std::f64::consts::PI;
use std::fmt::Write as _;
use std::path::Path;
use std::time::Instant;

use rayon::prelude::*;
use serde::{Deserialize, Serialize};

use crate::baselines::{bomp_recover, oracle_ls, BompConfig};
use crate::error::{Error, Result};
use crate::model::{add_noise, draw_model, NoiseSpec, Preset, SignalModel};
use crate::numerics::{mix_seed, norm, sub};
use crate::recovery::{recover, RecoveryConfig};
use crate::sensing::{MatrixKind, MatrixSpec};

/// `|x - xhat| / |x|`.
pub fn normalized_l2_error(x: &[f64], xhat: &[f64]) -> Result<f64> {
    Error::check_len("estimate length", x.len(), xhat.len())?;
    let scale = norm(x);
    if scale == 0.0 {
        return Err(Error::ZeroSignal(
            "normalized error needs a nonzero reference",
        ));
    }
    Ok(norm(&sub(x, xhat)) / scale)
}

#[derive(Debug, Clone, PartialEq)]
pub struct FrequencyMatch {
    /// `(truth index, estimate index)` pairs, ordered by truth index.
    pub pairs: Vec<(usize, usize)>,
    pub errors: Vec<f64>,
    pub total: f64,
}

/// Minimum total absolute-error pairing of true and estimated frequencies.
///
/// Up to five components every permutation is tried. Beyond that, pairing in
/// sorted order is used, which is optimal for absolute differences on the line.
pub fn match_frequencies(truth: &[f64], estimate: &[f64]) -> Result<FrequencyMatch> {
    if truth.len() != estimate.len() {
        return Err(Error::CountMismatch {
            truth: truth.len(),
            estimate: estimate.len(),
        });
    }
    let k = truth.len();
    let assignment: Vec<usize> = if k <= 5 {
        let mut perm: Vec<usize> = (0..k).collect();
        let mut best = perm.clone();
        let mut best_cost = f64::INFINITY;
        loop {
            let cost: f64 = perm
                .iter()
                .enumerate()
                .map(|(i, &j)| (truth[i] - estimate[j]).abs())
                .sum();
            if cost < best_cost {
                best_cost = cost;
                best.clone_from(&perm);
            }
            if !next_permutation(&mut perm) {
                break;
            }
        }
        best
    } else {
        let mut ti: Vec<usize> = (0..k).collect();
        let mut ei: Vec<usize> = (0..k).collect();
        ti.sort_by(|&a, &b| truth[a].total_cmp(&truth[b]));
        ei.sort_by(|&a, &b| estimate[a].total_cmp(&estimate[b]));
        let mut out = vec![0; k];
        for (t, e) in ti.into_iter().zip(ei) {
            out[t] = e;
        }
        out
    };
    let pairs: Vec<(usize, usize)> = assignment.iter().copied().enumerate().collect();
    let errors: Vec<f64> = pairs
        .iter()
        .map(|&(i, j)| (truth[i] - estimate[j]).abs())
        .collect();
    let total = errors.iter().sum();
    Ok(FrequencyMatch {
        pairs,
        errors,
        total,
    })
}

fn next_permutation(p: &mut [usize]) -> bool {
    let n = p.len();
    if n < 2 {
        return false;
    }
    let Some(i) = (0..n - 1).rev().find(|&i| p[i] < p[i + 1]) else {
        return false;
    };
    let j = (i + 1..n)
        .rev()
        .find(|&j| p[j] > p[i])
        .expect("successor exists");
    p.swap(i, j);
    p[i + 1..].reverse();
    true
}

#[derive(Debug, Clone, Copy, PartialEq, Eq, Hash, Serialize, Deserialize)]
#[serde(rename_all = "snake_case")]
pub enum Method {
    Mds,
    Bomp,
    OracleLs,
}

impl Method {
    pub fn id(&self) -> &'static str {
        match self {
            Method::Mds => "mds",
            Method::Bomp => "bomp",
            Method::OracleLs => "oracle_ls",
        }
    }
}

impl std::str::FromStr for Method {
    type Err = Error;

    fn from_str(s: &str) -> Result<Self> {
        match s.trim().to_ascii_lowercase().as_str() {
            "mds" => Ok(Method::Mds),
            "bomp" => Ok(Method::Bomp),
            "oracle_ls" | "oracle" => Ok(Method::OracleLs),
            other => Err(Error::invalid(format!("unknown method `{other}`"))),
        }
    }
}

#[derive(Debug, Clone, Copy, PartialEq, Eq, Serialize, Deserialize)]
#[serde(rename_all = "lowercase")]
pub enum SweepAxis {
    /// Number of measurements `M`.
    M,
    /// SNR in dB.
    Snr,
}

impl std::str::FromStr for SweepAxis {
    type Err = Error;

    fn from_str(s: &str) -> Result<Self> {
        match s.trim().to_ascii_lowercase().as_str() {
            "m" => Ok(SweepAxis::M),
            "snr" => Ok(SweepAxis::Snr),
            other => Err(Error::invalid(format!("unknown sweep axis `{other}`"))),
        }
    }
}

#[derive(Debug, Clone, PartialEq, Serialize, Deserialize)]
pub struct ExperimentSpec {
    pub n: usize,
    pub k: usize,
    pub preset: Preset,
    pub matrix_kind: MatrixKind,
    pub axis: SweepAxis,
    pub values: Vec<f64>,
    /// `M` when sweeping SNR.
    pub fixed_m: usize,
    /// SNR when sweeping `M`; `None` is noiseless.
    pub fixed_snr_db: Option<f64>,
    pub trials: usize,
    pub base_seed: u64,
    pub methods: Vec<Method>,
    /// Minimum frequency separation; `None` means `pi / n`.
    pub min_sep: Option<f64>,
    pub recovery: RecoveryConfig,
    pub bomp: BompConfig,
}

impl ExperimentSpec {
    fn base(axis: SweepAxis, values: Vec<f64>) -> Self {
        Self {
            n: 128,
            k: 3,
            preset: Preset::Freq,
            matrix_kind: MatrixKind::Gaussian,
            axis,
            values,
            fixed_m: 64,
            fixed_snr_db: None,
            trials: 50,
            base_seed: 1,
            methods: vec![Method::Mds, Method::Bomp, Method::OracleLs],
            min_sep: None,
            recovery: RecoveryConfig::new(3),
            bomp: BompConfig {
                k: 3,
                ..BompConfig::default()
            },
        }
    }

    /// Noiseless error versus `M` at desk scale: `M` in {16, 32, 48, 64}, 50 trials.
    pub fn desk_m_sweep() -> Self {
        Self::base(SweepAxis::M, vec![16.0, 32.0, 48.0, 64.0])
    }

    /// Error versus SNR at `M = 64`, SNR in {0, 20, 40, 60} dB, 50 trials.
    pub fn desk_snr_sweep() -> Self {
        Self::base(SweepAxis::Snr, vec![0.0, 20.0, 40.0, 60.0])
    }

    /// `M = 15, 20, ..., 65`, 600 trials.
    pub fn full_m_sweep() -> Self {
        Self {
            trials: 600,
            ..Self::base(SweepAxis::M, (3..=13).map(|i| 5.0 * i as f64).collect())
        }
    }

    /// SNR `0, 5, ..., 60` dB at `M = 64`, 600 trials.
    pub fn full_snr_sweep() -> Self {
        Self {
            trials: 600,
            ..Self::base(SweepAxis::Snr, (0..=12).map(|i| 5.0 * i as f64).collect())
        }
    }

    pub fn min_separation(&self) -> f64 {
        self.min_sep.unwrap_or(PI / self.n as f64)
    }

    pub fn validate(&self) -> Result<()> {
        if self.trials == 0 {
            return Err(Error::invalid("trials must be at least 1"));
        }
        if self.k == 0 || self.n < 2 * self.k {
            return Err(Error::invalid("need k >= 1 and n >= 2k"));
        }
        if self.values.is_empty() {
            return Err(Error::invalid("sweep needs at least one value"));
        }
        if self
            .values
            .windows(2)
            .any(|w| w[0].partial_cmp(&w[1]) != Some(std::cmp::Ordering::Less))
        {
            return Err(Error::invalid("sweep values must be strictly ascending"));
        }
        if self.methods.is_empty() {
            return Err(Error::invalid("at least one method is required"));
        }
        if self.matrix_kind == MatrixKind::Explicit {
            return Err(Error::invalid("experiments need a seeded matrix kind"));
        }
        match self.axis {
            SweepAxis::M => {
                for &v in &self.values {
                    if v.fract() != 0.0 || v < 1.0 || v > self.n as f64 {
                        return Err(Error::invalid(format!(
                            "M = {v} must be an integer in [1, n]"
                        )));
                    }
                }
                if let Some(s) = self.fixed_snr_db {
                    if !s.is_finite() {
                        return Err(Error::invalid("fixed_snr_db must be finite"));
                    }
                }
            }
            SweepAxis::Snr => {
                if self.fixed_m == 0 || self.fixed_m > self.n {
                    return Err(Error::invalid("fixed_m must be in [1, n]"));
                }
                if self.values.iter().any(|v| !v.is_finite()) {
                    return Err(Error::invalid("SNR values must be finite"));
                }
            }
        }
        RecoveryConfig {
            k: self.k,
            ..self.recovery
        }
        .validate()
    }

    /// Seed of the random model drawn for `trial`.
    pub fn model_seed(&self, trial: usize) -> u64 {
        mix_seed(self.base_seed, trial as u64)
    }

    /// Seed of the sensing matrix for `trial` at sweep position `sweep_index`.
    pub fn matrix_seed(&self, trial: usize, sweep_index: usize) -> u64 {
        mix_seed(self.model_seed(trial), 1 + sweep_index as u64)
    }

    pub fn noise_seed(&self, trial: usize, sweep_index: usize) -> u64 {
        mix_seed(self.matrix_seed(trial, sweep_index), 0x006e_6f69_7365)
    }
}

#[derive(Debug, Clone, PartialEq, Serialize, Deserialize)]
pub struct TrialResult {
    pub sweep_value: f64,
    pub method: Method,
    pub trial: usize,
    pub seed: u64,
    pub nl2_error: f64,
    /// Total absolute frequency error after matching; NaN when the method
    /// returned a different number of components.
    pub freq_err_total: f64,
    pub time_s: f64,
    pub failed: bool,
}

#[derive(Debug, Clone, PartialEq, Serialize, Deserialize)]
pub struct CellSummary {
    pub sweep_value: f64,
    pub method: Method,
    pub trials: usize,
    pub failures: usize,
    pub mean_error: f64,
    pub median_error: f64,
    pub mean_time_s: f64,
}

#[derive(Debug, Clone, PartialEq)]
pub struct ExperimentResult {
    pub spec: ExperimentSpec,
    /// Ordered by sweep value, then method (in spec order), then trial.
    pub rows: Vec<TrialResult>,
    pub cells: Vec<CellSummary>,
}

pub const CSV_HEADER: &str = "sweep_value,method,trial,seed,nl2_error,freq_err_total,time_s";

impl ExperimentResult {
    pub fn cell(&self, sweep_value: f64, method: Method) -> Option<&CellSummary> {
        self.cells
            .iter()
            .find(|c| c.sweep_value == sweep_value && c.method == method)
    }

    /// Mean error per sweep value for one method, in sweep order.
    pub fn mean_curve(&self, method: Method) -> Vec<f64> {
        self.spec
            .values
            .iter()
            .filter_map(|&v| self.cell(v, method).map(|c| c.mean_error))
            .collect()
    }

    pub fn to_csv(&self) -> String {
        let mut out = String::from(CSV_HEADER);
        out.push('\n');
        for r in &self.rows {
            let _ = writeln!(
                out,
                "{},{},{},{},{},{},{}",
                r.sweep_value,
                r.method.id(),
                r.trial,
                r.seed,
                r.nl2_error,
                r.freq_err_total,
                r.time_s
            );
        }
        out
    }

    pub fn summary_json(&self) -> serde_json::Value {
        serde_json::json!({
            "spec": self.spec,
            "metadata": {
                "error_reference": "noiseless signal samples",
                "failed_trial_convention": "nl2_error = 1 and freq_err_total = NaN for trials whose method returned an error",
                "matrix_draw": "sensing matrix redrawn per trial and sweep value",
                "noise": "added to signal samples before measurement",
                "timing": "wall time of the recovery call only",
            },
            "cells": self.cells,
        })
    }

    /// Mean error versus sweep value on a log scale, one polyline per method.
    pub fn to_svg(&self) -> String {
        let (w, h) = (640.0, 420.0);
        let (left, right, top, bottom) = (70.0, 150.0, 30.0, 50.0);
        let xs = &self.spec.values;
        let (x0, x1) = (xs[0], *xs.last().unwrap());
        let xspan = if x1 > x0 { x1 - x0 } else { 1.0 };
        let floor = 1e-16_f64;
        let logs: Vec<f64> = self
            .cells
            .iter()
            .map(|c| c.mean_error.max(floor).log10())
            .collect();
        let ymin = logs.iter().copied().fold(f64::INFINITY, f64::min).floor();
        let mut ymax = logs
            .iter()
            .copied()
            .fold(f64::NEG_INFINITY, f64::max)
            .ceil();
        if ymax <= ymin {
            ymax = ymin + 1.0;
        }
        let px = |x: f64| left + (x - x0) / xspan * (w - left - right);
        let py = |ly: f64| top + (ymax - ly) / (ymax - ymin) * (h - top - bottom);
        let colors = ["#1f77b4", "#d62728", "#2ca02c", "#9467bd"];

        let mut svg = String::new();
        let _ = writeln!(
            svg,
            r#"<svg xmlns="http://www.w3.org/2000/svg" width="{w}" height="{h}" viewBox="0 0 {w} {h}" font-family="sans-serif" font-size="12">"#
        );
        let _ = writeln!(svg, r#"<rect width="{w}" height="{h}" fill="white"/>"#);
        let _ = writeln!(
            svg,
            r#"<rect x="{left}" y="{top}" width="{}" height="{}" fill="none" stroke="black"/>"#,
            w - left - right,
            h - top - bottom
        );
        let mut e = ymin;
        while e <= ymax {
            let y = py(e);
            let _ = writeln!(
                svg,
                r##"<line x1="{left}" y1="{y:.2}" x2="{:.2}" y2="{y:.2}" stroke="#ddd"/><text x="{:.2}" y="{:.2}" text-anchor="end">1e{e}</text>"##,
                w - right,
                left - 6.0,
                y + 4.0
            );
            e += 1.0;
        }
        for &x in xs {
            let _ = writeln!(
                svg,
                r#"<text x="{:.2}" y="{:.2}" text-anchor="middle">{x}</text>"#,
                px(x),
                h - bottom + 16.0
            );
        }
        let xlabel = match self.spec.axis {
            SweepAxis::M => "number of measurements M",
            SweepAxis::Snr => "SNR (dB)",
        };
        let _ = writeln!(
            svg,
            r#"<text x="{:.2}" y="{:.2}" text-anchor="middle">{xlabel}</text>"#,
            left + (w - left - right) / 2.0,
            h - 12.0
        );
        let _ = writeln!(
            svg,
            r#"<text x="16" y="{:.2}" text-anchor="middle" transform="rotate(-90 16 {:.2})">mean normalized l2 error</text>"#,
            top + (h - top - bottom) / 2.0,
            top + (h - top - bottom) / 2.0
        );
        for (mi, method) in self.spec.methods.iter().enumerate() {
            let color = colors[mi % colors.len()];
            let points: Vec<String> = xs
                .iter()
                .filter_map(|&x| {
                    self.cell(x, *method)
                        .map(|c| format!("{:.2},{:.2}", px(x), py(c.mean_error.max(floor).log10())))
                })
                .collect();
            let _ = writeln!(
                svg,
                r#"<polyline fill="none" stroke="{color}" stroke-width="2" points="{}"/>"#,
                points.join(" ")
            );
            let ly = top + 20.0 * (mi as f64 + 1.0);
            let _ = writeln!(
                svg,
                r#"<line x1="{:.2}" y1="{ly}" x2="{:.2}" y2="{ly}" stroke="{color}" stroke-width="2"/><text x="{:.2}" y="{:.2}">{}</text>"#,
                w - right + 10.0,
                w - right + 30.0,
                w - right + 36.0,
                ly + 4.0,
                method.id()
            );
        }
        svg.push_str("</svg>\n");
        svg
    }
}

struct TrialContext<'a> {
    spec: &'a ExperimentSpec,
    recovery: RecoveryConfig,
    bomp: BompConfig,
}

impl TrialContext<'_> {
    fn failed_rows(&self, value: f64, trial: usize, seed: u64) -> Vec<TrialResult> {
        self.spec
            .methods
            .iter()
            .map(|&method| TrialResult {
                sweep_value: value,
                method,
                trial,
                seed,
                nl2_error: 1.0,
                freq_err_total: f64::NAN,
                time_s: 0.0,
                failed: true,
            })
            .collect()
    }

    fn run(&self, sweep_index: usize, trial: usize) -> Vec<TrialResult> {
        let spec = self.spec;
        let value = spec.values[sweep_index];
        let seed = spec.model_seed(trial);
        let prepared = (|| -> Result<_> {
            let truth = draw_model(spec.k, spec.n, spec.min_separation(), spec.preset, seed)?;
            let (rows, snr) = match spec.axis {
                SweepAxis::M => (value as usize, spec.fixed_snr_db),
                SweepAxis::Snr => (spec.fixed_m, Some(value)),
            };
            let s = truth.synthesize();
            let noise = NoiseSpec {
                snr_db: snr,
                seed: spec.noise_seed(trial, sweep_index),
            };
            let x = add_noise(&s, &noise)?;
            let phi = MatrixSpec {
                kind: spec.matrix_kind,
                m: rows,
                n: spec.n,
                seed: spec.matrix_seed(trial, sweep_index),
            }
            .build()?;
            let m = phi.measure(&x)?;
            Ok((truth, s, phi, m))
        })();
        let (truth, s, phi, m) = match prepared {
            Ok(p) => p,
            Err(e) => {
                log::warn!("trial {trial} at {value}: setup failed: {e}");
                return self.failed_rows(value, trial, seed);
            }
        };

        spec.methods
            .iter()
            .map(|&method| {
                let start = Instant::now();
                let estimate: Result<SignalModel> = match method {
                    Method::Mds => recover(&phi, &m, &self.recovery).map(|r| r.model),
                    Method::Bomp => bomp_recover(&phi, &m, &self.bomp),
                    Method::OracleLs => oracle_ls(&phi, &m, &truth.frequencies()),
                };
                let time_s = start.elapsed().as_secs_f64();
                let scored = estimate.and_then(|est| {
                    let err = normalized_l2_error(&s, &est.synthesize())?;
                    let freq = match_frequencies(&truth.frequencies(), &est.frequencies())
                        .map_or(f64::NAN, |fm| fm.total);
                    Ok((err, freq))
                });
                match scored {
                    Ok((nl2_error, freq_err_total)) => TrialResult {
                        sweep_value: value,
                        method,
                        trial,
                        seed,
                        nl2_error,
                        freq_err_total,
                        time_s,
                        failed: false,
                    },
                    Err(e) => {
                        log::warn!("trial {trial} at {value}: {} failed: {e}", method.id());
                        TrialResult {
                            sweep_value: value,
                            method,
                            trial,
                            seed,
                            nl2_error: 1.0,
                            freq_err_total: f64::NAN,
                            time_s,
                            failed: true,
                        }
                    }
                }
            })
            .collect()
    }
}

fn summarize(value: f64, method: Method, rows: &[&TrialResult]) -> CellSummary {
    let count = rows.len();
    let mut errs: Vec<f64> = rows.iter().map(|r| r.nl2_error).collect();
    errs.sort_by(f64::total_cmp);
    let median = if count % 2 == 1 {
        errs[count / 2]
    } else {
        0.5 * (errs[count / 2 - 1] + errs[count / 2])
    };
    CellSummary {
        sweep_value: value,
        method,
        trials: count,
        failures: rows.iter().filter(|r| r.failed).count(),
        mean_error: rows.iter().map(|r| r.nl2_error).sum::<f64>() / count as f64,
        median_error: median,
        mean_time_s: rows.iter().map(|r| r.time_s).sum::<f64>() / count as f64,
    }
}

/// Runs every `(sweep value, trial)` job on the rayon pool and aggregates
/// per-cell statistics. Trial failures become rows with error 1.
pub fn run_experiment(spec: &ExperimentSpec) -> Result<ExperimentResult> {
    spec.validate()?;
    let ctx = TrialContext {
        spec,
        recovery: RecoveryConfig {
            k: spec.k,
            ..spec.recovery
        },
        bomp: BompConfig {
            k: spec.k,
            ..spec.bomp
        },
    };
    let jobs: Vec<(usize, usize)> = (0..spec.values.len())
        .flat_map(|s| (0..spec.trials).map(move |t| (s, t)))
        .collect();
    let per_job: Vec<Vec<TrialResult>> = jobs.par_iter().map(|&(s, t)| ctx.run(s, t)).collect();

    let mut rows = Vec::with_capacity(per_job.len() * spec.methods.len());
    let mut cells = Vec::new();
    for (si, &value) in spec.values.iter().enumerate() {
        let block = &per_job[si * spec.trials..(si + 1) * spec.trials];
        for (mi, &method) in spec.methods.iter().enumerate() {
            let cell_rows: Vec<&TrialResult> = block.iter().map(|r| &r[mi]).collect();
            cells.push(summarize(value, method, &cell_rows));
            rows.extend(cell_rows.into_iter().cloned());
        }
    }
    Ok(ExperimentResult {
        spec: spec.clone(),
        rows,
        cells,
    })
}

#[derive(Debug, Clone, PartialEq, Serialize, Deserialize)]
pub struct TimingRow {
    pub label: String,
    pub noiseless_s: f64,
    pub noisy_s: f64,
}

/// Mean recovery time per method at `M = fixed_m`, noiseless and at
/// `noisy_snr_db`, for both presets of the proposed method.
pub fn timing_table(template: &ExperimentSpec, noisy_snr_db: f64) -> Result<Vec<TimingRow>> {
    let run = |preset: Preset, methods: Vec<Method>, snr: Option<f64>| {
        let spec = ExperimentSpec {
            preset,
            methods,
            axis: SweepAxis::M,
            values: vec![template.fixed_m as f64],
            fixed_snr_db: snr,
            ..template.clone()
        };
        run_experiment(&spec)
    };
    let mut rows = Vec::new();
    let mds = template.methods.contains(&Method::Mds);
    for preset in [Preset::Freq, Preset::Sinu] {
        let methods = if preset == Preset::Freq {
            template.methods.clone()
        } else if mds {
            vec![Method::Mds]
        } else {
            continue;
        };
        let quiet = run(preset, methods.clone(), None)?;
        let noisy = run(preset, methods.clone(), Some(noisy_snr_db))?;
        for method in methods {
            if preset == Preset::Sinu && method != Method::Mds {
                continue;
            }
            let label = match (method, preset) {
                (Method::Mds, Preset::Freq) => "mds-freq".to_string(),
                (Method::Mds, Preset::Sinu) => "mds-sinu".to_string(),
                (m, _) => m.id().to_string(),
            };
            let t = |r: &ExperimentResult| {
                r.cells
                    .iter()
                    .find(|c| c.method == method)
                    .map_or(0.0, |c| c.mean_time_s)
            };
            rows.push(TimingRow {
                label,
                noiseless_s: t(&quiet),
                noisy_s: t(&noisy),
            });
        }
    }
    Ok(rows)
}

/// Writes `contents` to a sibling temporary file and renames it into place.
pub fn write_atomic(path: &Path, contents: &[u8]) -> Result<()> {
    let file_name = path
        .file_name()
        .ok_or_else(|| Error::invalid(format!("{} is not a file path", path.display())))?;
    let mut tmp_name = std::ffi::OsString::from(".");
    tmp_name.push(file_name);
    tmp_name.push(format!(".tmp{}", std::process::id()));
    let tmp = path.with_file_name(tmp_name);
    std::fs::write(&tmp, contents)?;
    std::fs::rename(&tmp, path).inspect_err(|_| {
        let _ = std::fs::remove_file(&tmp);
    })?;
    Ok(())
}

#[cfg(test)]
mod tests {
    use super::*;
    use proptest::prelude::*;

    #[test]
    fn nl2_trivial_values() {
        let x = vec![1.0, -2.0, 2.0];
        assert_eq!(normalized_l2_error(&x, &x).unwrap(), 0.0);
        assert_eq!(normalized_l2_error(&x, &[0.0; 3]).unwrap(), 1.0);
        let twice: Vec<f64> = x.iter().map(|v| 2.0 * v).collect();
        assert_eq!(normalized_l2_error(&x, &twice).unwrap(), 1.0);
        assert!(normalized_l2_error(&[0.0; 3], &x).is_err());
        assert!(normalized_l2_error(&x, &[0.0; 2]).is_err());
    }

    #[test]
    fn matching_hand_examples() {
        let m = match_frequencies(&[0.3, 0.9, 2.0], &[2.0, 0.3, 0.9]).unwrap();
        assert_eq!(m.total, 0.0);
        let m = match_frequencies(&[0.5, 1.0], &[1.01, 0.49]).unwrap();
        assert_eq!(m.pairs, vec![(0, 1), (1, 0)]);
        assert!((m.total - 0.02).abs() < 1e-12);
        assert!(matches!(
            match_frequencies(&[0.1], &[0.1, 0.2]),
            Err(Error::CountMismatch { .. })
        ));
        assert_eq!(match_frequencies(&[], &[]).unwrap().total, 0.0);
    }

    fn brute_force(truth: &[f64], est: &[f64]) -> f64 {
        let mut perm: Vec<usize> = (0..truth.len()).collect();
        let mut best = f64::INFINITY;
        loop {
            let c: f64 = perm
                .iter()
                .enumerate()
                .map(|(i, &j)| (truth[i] - est[j]).abs())
                .sum();
            best = best.min(c);
            if !next_permutation(&mut perm) {
                return best;
            }
        }
    }

    proptest! {
        #[test]
        fn matching_is_optimal(truth in prop::collection::vec(0.0f64..PI, 3), est in prop::collection::vec(0.0f64..PI, 3)) {
            let m = match_frequencies(&truth, &est).unwrap();
            prop_assert!((m.total - brute_force(&truth, &est)).abs() <= 1e-12);
        }

        #[test]
        fn sorted_matching_is_optimal_for_larger_k(truth in prop::collection::vec(0.0f64..PI, 6..8), seed: u64) {
            let k = truth.len();
            let est: Vec<f64> = (0..k).map(|i| ((seed.wrapping_add(i as u64 * 7919)) % 3141) as f64 / 1000.0).collect();
            let m = match_frequencies(&truth, &est).unwrap();
            prop_assert!((m.total - brute_force(&truth, &est)).abs() <= 1e-12);
        }
    }

    #[test]
    fn permutation_count() {
        let mut p = vec![0, 1, 2, 3];
        let mut count = 1;
        while next_permutation(&mut p) {
            count += 1;
        }
        assert_eq!(count, 24);
    }

    fn small_spec() -> ExperimentSpec {
        ExperimentSpec {
            n: 32,
            k: 2,
            values: vec![12.0, 24.0],
            trials: 3,
            ..ExperimentSpec::desk_m_sweep()
        }
    }

    #[test]
    fn single_trial_cell_equals_row() {
        let spec = ExperimentSpec {
            n: 32,
            k: 2,
            values: vec![32.0],
            trials: 1,
            ..ExperimentSpec::desk_m_sweep()
        };
        let res = run_experiment(&spec).unwrap();
        assert_eq!(res.rows.len(), 3);
        for (row, cell) in res.rows.iter().zip(&res.cells) {
            assert_eq!(row.method, cell.method);
            assert_eq!(row.nl2_error, cell.mean_error);
            assert_eq!(row.nl2_error, cell.median_error);
        }
    }

    #[test]
    fn rows_are_ordered_and_aggregated() {
        let res = run_experiment(&small_spec()).unwrap();
        assert_eq!(res.rows.len(), 2 * 3 * 3);
        assert_eq!(res.cells.len(), 6);
        for cell in &res.cells {
            let rows: Vec<&TrialResult> = res
                .rows
                .iter()
                .filter(|r| r.sweep_value == cell.sweep_value && r.method == cell.method)
                .collect();
            assert_eq!(rows.len(), 3);
            let mean = rows.iter().map(|r| r.nl2_error).sum::<f64>() / 3.0;
            assert_eq!(mean, cell.mean_error);
        }
        let first = &res.rows[0];
        assert_eq!(
            (first.sweep_value, first.method, first.trial),
            (12.0, Method::Mds, 0)
        );
        let csv = res.to_csv();
        assert!(csv.starts_with(CSV_HEADER));
        assert_eq!(csv.lines().count(), 1 + 18);
        let svg = res.to_svg();
        assert!(svg.starts_with("<svg") && svg.trim_end().ends_with("</svg>"));
        assert_eq!(svg.matches("<polyline").count(), 3);
        let json = res.summary_json();
        assert_eq!(json["spec"]["trials"], 3);
        assert_eq!(json["cells"].as_array().unwrap().len(), 6);
    }

    #[test]
    fn adding_trials_keeps_earlier_rows() {
        let a = run_experiment(&small_spec()).unwrap();
        let b = run_experiment(&ExperimentSpec {
            trials: 4,
            ..small_spec()
        })
        .unwrap();
        for row in &a.rows {
            let other = b
                .rows
                .iter()
                .find(|r| {
                    r.sweep_value == row.sweep_value
                        && r.method == row.method
                        && r.trial == row.trial
                })
                .unwrap();
            assert_eq!(row.nl2_error, other.nl2_error);
            assert_eq!(row.seed, other.seed);
        }
    }

    #[test]
    fn setup_failures_become_rows() {
        // Infeasible separation: every draw fails, nothing aborts.
        let spec = ExperimentSpec {
            min_sep: Some(2.0),
            ..small_spec()
        };
        let res = run_experiment(&spec).unwrap();
        assert!(res.rows.iter().all(|r| r.failed && r.nl2_error == 1.0));
        assert!(res
            .cells
            .iter()
            .all(|c| c.failures == 3 && c.mean_error == 1.0));
    }

    #[test]
    fn spec_validation() {
        let bad = [
            ExperimentSpec {
                trials: 0,
                ..small_spec()
            },
            ExperimentSpec {
                values: vec![24.0, 12.0],
                ..small_spec()
            },
            ExperimentSpec {
                values: vec![12.5],
                ..small_spec()
            },
            ExperimentSpec {
                values: vec![64.0],
                ..small_spec()
            },
            ExperimentSpec {
                methods: vec![],
                ..small_spec()
            },
        ];
        for spec in bad {
            assert!(run_experiment(&spec).is_err());
        }
        let full = ExperimentSpec::full_m_sweep();
        assert_eq!(full.values.first(), Some(&15.0));
        assert_eq!(full.values.last(), Some(&65.0));
        assert_eq!(full.trials, 600);
        assert!(full.validate().is_ok());
        assert!(ExperimentSpec::full_snr_sweep().validate().is_ok());
    }

    #[test]
    fn atomic_write_replaces_file() {
        let dir = tempfile::tempdir().unwrap();
        let path = dir.path().join("out.csv");
        write_atomic(&path, b"one").unwrap();
        write_atomic(&path, b"two").unwrap();
        assert_eq!(std::fs::read_to_string(&path).unwrap(), "two");
        assert_eq!(std::fs::read_dir(dir.path()).unwrap().count(), 1);
    }

    #[test]
    fn timing_table_labels() {
        let spec = ExperimentSpec {
            n: 32,
            k: 2,
            fixed_m: 24,
            trials: 2,
            ..ExperimentSpec::desk_m_sweep()
        };
        let rows = timing_table(&spec, 30.0).unwrap();
        let labels: Vec<&str> = rows.iter().map(|r| r.label.as_str()).collect();
        assert_eq!(labels, vec!["mds-freq", "bomp", "oracle_ls", "mds-sinu"]);
        assert!(rows
            .iter()
            .all(|r| r.noiseless_s >= 0.0 && r.noisy_s >= 0.0));
    }
}
