//! Sinusoid signal model: parameters, synthesis at unit sample times, noise
//! injection and random generation of well-separated test signals.
//!
//! Sample times are 1-based: a signal of length `n` is evaluated at
//! `t = 1, 2, ..., n`.

use std::f64::consts::PI;

use rand::Rng;
use rand_distr::StandardNormal;
use serde::{Deserialize, Serialize};

use crate::error::{Error, Result};
use crate::numerics::{norm_sq, rng};

/// Default number of candidate frequency sets tried by [`draw_model`].
pub const DEFAULT_REJECTION_BUDGET: u64 = 1_000_000;

/// Maps an angle onto `(-pi, pi]`.
pub fn canonical_phase(phase: f64) -> f64 {
    let mut p = phase.rem_euclid(2.0 * PI);
    if p > PI {
        p -= 2.0 * PI;
    }
    p
}

/// One real sinusoid `a sin(omega t + phase)`.
#[derive(Debug, Clone, Copy, PartialEq, Serialize, Deserialize)]
#[serde(try_from = "RawSinusoid")]
pub struct SinusoidParams {
    omega: f64,
    amplitude: f64,
    phase: f64,
}

#[derive(Deserialize)]
struct RawSinusoid {
    omega: f64,
    amplitude: f64,
    phase: f64,
}

impl TryFrom<RawSinusoid> for SinusoidParams {
    type Error = Error;

    fn try_from(raw: RawSinusoid) -> Result<Self> {
        SinusoidParams::new(raw.omega, raw.amplitude, raw.phase)
    }
}

impl SinusoidParams {
    /// Validates and canonicalizes. Frequencies are accepted on the closed
    /// range `[0, pi]` because the estimator grid includes both endpoints.
    pub fn new(omega: f64, amplitude: f64, phase: f64) -> Result<Self> {
        if !omega.is_finite() || !(0.0..=PI).contains(&omega) {
            return Err(Error::invalid(format!("omega {omega} outside [0, pi]")));
        }
        if !amplitude.is_finite() || amplitude < 0.0 {
            return Err(Error::invalid(format!(
                "amplitude {amplitude} must be >= 0"
            )));
        }
        if !phase.is_finite() {
            return Err(Error::invalid("phase must be finite"));
        }
        Ok(Self {
            omega,
            amplitude,
            phase: canonical_phase(phase),
        })
    }

    /// Builds a sinusoid from its sine/cosine coefficient pair
    /// `a1 sin(omega t) + a2 cos(omega t)`.
    pub fn from_quadrature(omega: f64, sine_coef: f64, cosine_coef: f64) -> Result<Self> {
        Self::new(
            omega,
            sine_coef.hypot(cosine_coef),
            cosine_coef.atan2(sine_coef),
        )
    }

    pub fn omega(&self) -> f64 {
        self.omega
    }

    pub fn amplitude(&self) -> f64 {
        self.amplitude
    }

    pub fn phase(&self) -> f64 {
        self.phase
    }

    /// `(a cos(phase), a sin(phase))`: the sine and cosine coefficients.
    pub fn quadrature(&self) -> (f64, f64) {
        let (s, c) = self.phase.sin_cos();
        (self.amplitude * c, self.amplitude * s)
    }

    /// Adds `a sin(omega t + phase)` for `t = 1..=out.len()` into `out`.
    pub fn accumulate(&self, out: &mut [f64]) {
        for (i, v) in out.iter_mut().enumerate() {
            let t = (i + 1) as f64;
            *v += self.amplitude * (self.omega * t + self.phase).sin();
        }
    }

    pub fn samples(&self, n: usize) -> Vec<f64> {
        let mut out = vec![0.0; n];
        self.accumulate(&mut out);
        out
    }
}

/// Sample vectors `(sin(omega t), cos(omega t))` for `t = 1..=n`.
pub fn sinusoid_samples(omega: f64, n: usize) -> (Vec<f64>, Vec<f64>) {
    let mut sin = Vec::with_capacity(n);
    let mut cos = Vec::with_capacity(n);
    for t in 1..=n {
        let (s, c) = (omega * t as f64).sin_cos();
        sin.push(s);
        cos.push(c);
    }
    (sin, cos)
}

/// A superposition of sinusoids observed at `n` unit-spaced samples.
#[derive(Debug, Clone, PartialEq, Serialize, Deserialize)]
#[serde(try_from = "ModelRecord")]
pub struct SignalModel {
    n: usize,
    components: Vec<SinusoidParams>,
}

#[derive(Deserialize)]
struct ModelRecord {
    n: usize,
    components: Vec<SinusoidParams>,
}

impl TryFrom<ModelRecord> for SignalModel {
    type Error = Error;

    fn try_from(rec: ModelRecord) -> Result<Self> {
        SignalModel::from_estimates(rec.n, rec.components)
    }
}

impl SignalModel {
    /// A ground-truth model: at least one component, `n >= 2k` and pairwise
    /// distinct frequencies.
    pub fn new(n: usize, components: Vec<SinusoidParams>) -> Result<Self> {
        let k = components.len();
        if k == 0 {
            return Err(Error::invalid(
                "a signal model needs at least one component",
            ));
        }
        if n < 2 * k {
            return Err(Error::invalid(format!(
                "n = {n} is below the identifiability floor 2k = {}",
                2 * k
            )));
        }
        for (i, a) in components.iter().enumerate() {
            if components[i + 1..].iter().any(|b| b.omega == a.omega) {
                return Err(Error::invalid(format!(
                    "duplicate component frequency {}",
                    a.omega
                )));
            }
        }
        Ok(Self { n, components })
    }

    /// A model holding recovered estimates. Only `n >= 1` is enforced: an
    /// estimator may legitimately return coincident frequencies, zero
    /// amplitudes or no components at all.
    pub fn from_estimates(n: usize, components: Vec<SinusoidParams>) -> Result<Self> {
        if n == 0 {
            return Err(Error::invalid("signal length must be positive"));
        }
        Ok(Self { n, components })
    }

    pub fn n(&self) -> usize {
        self.n
    }

    pub fn k(&self) -> usize {
        self.components.len()
    }

    pub fn components(&self) -> &[SinusoidParams] {
        &self.components
    }

    pub fn frequencies(&self) -> Vec<f64> {
        self.components.iter().map(|c| c.omega).collect()
    }

    /// `s_t = sum_j a_j sin(omega_j t + phase_j)` for `t = 1..=n`.
    pub fn synthesize(&self) -> Vec<f64> {
        let mut out = vec![0.0; self.n];
        for c in &self.components {
            c.accumulate(&mut out);
        }
        out
    }
}

/// Additive white Gaussian noise specification. `snr_db = None` is noiseless.
#[derive(Debug, Clone, Copy, PartialEq, Serialize, Deserialize)]
pub struct NoiseSpec {
    pub snr_db: Option<f64>,
    pub seed: u64,
}

impl NoiseSpec {
    pub fn noiseless() -> Self {
        Self {
            snr_db: None,
            seed: 0,
        }
    }

    pub fn with_snr(snr_db: f64, seed: u64) -> Result<Self> {
        if !snr_db.is_finite() {
            return Err(Error::invalid("snr_db must be finite"));
        }
        Ok(Self {
            snr_db: Some(snr_db),
            seed,
        })
    }
}

/// Returns `s + xi` with `xi` i.i.d. `N(0, sigma^2)`,
/// `sigma^2 = (|s|^2 / N) 10^(-snr_db / 10)`.
pub fn add_noise(s: &[f64], spec: &NoiseSpec) -> Result<Vec<f64>> {
    let Some(snr_db) = spec.snr_db else {
        return Ok(s.to_vec());
    };
    if !snr_db.is_finite() {
        return Err(Error::invalid("snr_db must be finite"));
    }
    let power = norm_sq(s) / s.len().max(1) as f64;
    if power == 0.0 {
        return Err(Error::ZeroSignal(
            "noise level is undefined for an all-zero signal",
        ));
    }
    let sigma = (power * 10f64.powf(-snr_db / 10.0)).sqrt();
    let mut rng = rng(spec.seed);
    Ok(s.iter()
        .map(|v| {
            let z: f64 = rng.sample(StandardNormal);
            v + sigma * z
        })
        .collect())
}

/// Amplitude/phase conventions for randomly drawn models.
#[derive(Debug, Clone, Copy, PartialEq, Eq, Serialize, Deserialize)]
#[serde(rename_all = "lowercase")]
pub enum Preset {
    /// Unit amplitudes, zero phases.
    Freq,
    /// Amplitudes uniform on `[0.5, 1.5]`, phases uniform on `(-pi, pi]`.
    Sinu,
}

impl std::str::FromStr for Preset {
    type Err = Error;

    fn from_str(s: &str) -> Result<Self> {
        match s.to_ascii_lowercase().as_str() {
            "freq" => Ok(Preset::Freq),
            "sinu" => Ok(Preset::Sinu),
            other => Err(Error::invalid(format!("unknown preset `{other}`"))),
        }
    }
}

/// Draws `k` frequencies uniformly on `(min_sep, pi - min_sep)` conditioned on
/// pairwise separation `>= min_sep`, then assigns amplitudes and phases per
/// `preset`. Components are ordered by increasing frequency.
pub fn draw_model(
    k: usize,
    n: usize,
    min_sep: f64,
    preset: Preset,
    seed: u64,
) -> Result<SignalModel> {
    draw_model_with_budget(k, n, min_sep, preset, seed, DEFAULT_REJECTION_BUDGET)
}

pub fn draw_model_with_budget(
    k: usize,
    n: usize,
    min_sep: f64,
    preset: Preset,
    seed: u64,
    budget: u64,
) -> Result<SignalModel> {
    if k == 0 {
        return Err(Error::invalid("k must be at least 1"));
    }
    if !min_sep.is_finite() || min_sep < 0.0 {
        return Err(Error::invalid("min_sep must be finite and nonnegative"));
    }
    if k as f64 * min_sep >= PI {
        return Err(Error::invalid(format!(
            "k * min_sep = {} leaves no feasible frequency set in (0, pi)",
            k as f64 * min_sep
        )));
    }
    let mut rng = rng(seed);
    let (lo, hi) = (min_sep, PI - min_sep);
    let mut freqs = vec![0.0; k];
    let mut accepted = false;
    for _ in 0..budget {
        for f in freqs.iter_mut() {
            *f = rng.random_range(lo..hi);
        }
        freqs.sort_by(f64::total_cmp);
        let interior = freqs[0] > 0.0;
        if interior && freqs.windows(2).all(|w| w[1] - w[0] >= min_sep) {
            accepted = true;
            break;
        }
    }
    if !accepted {
        return Err(Error::RejectionBudget {
            draws: budget,
            k,
            min_sep,
        });
    }
    let components = freqs
        .into_iter()
        .map(|omega| match preset {
            Preset::Freq => SinusoidParams::new(omega, 1.0, 0.0),
            Preset::Sinu => {
                let amplitude = rng.random_range(0.5..=1.5);
                let phase = rng.random_range(-PI..PI);
                SinusoidParams::new(omega, amplitude, phase)
            }
        })
        .collect::<Result<Vec<_>>>()?;
    SignalModel::new(n, components)
}

#[cfg(test)]
mod tests {
    use super::*;
    use proptest::prelude::*;

    fn close(a: &[f64], b: &[f64], tol: f64) -> bool {
        a.len() == b.len() && a.iter().zip(b).all(|(x, y)| (x - y).abs() <= tol)
    }

    #[test]
    fn quarter_period_samples() {
        let (s, c) = sinusoid_samples(PI / 2.0, 4);
        assert!(close(&s, &[1.0, 0.0, -1.0, 0.0], 1e-15));
        assert!(close(&c, &[0.0, -1.0, 0.0, 1.0], 1e-15));
    }

    #[test]
    fn zero_frequency_samples() {
        let (s, c) = sinusoid_samples(0.0, 3);
        assert_eq!(s, vec![0.0; 3]);
        assert_eq!(c, vec![1.0; 3]);
    }

    #[test]
    fn samples_match_scalar_evaluation() {
        let (s, c) = sinusoid_samples(0.7, 128);
        for t in 1..=128 {
            assert_eq!(s[t - 1], (0.7 * t as f64).sin());
            assert_eq!(c[t - 1], (0.7 * t as f64).cos());
        }
    }

    #[test]
    fn synthesize_single_components() {
        let m =
            SignalModel::new(4, vec![SinusoidParams::new(PI / 2.0, 1.0, 0.0).unwrap()]).unwrap();
        assert!(close(&m.synthesize(), &[1.0, 0.0, -1.0, 0.0], 1e-15));

        let m = SignalModel::new(
            4,
            vec![SinusoidParams::new(PI / 2.0, 2.0, PI / 2.0).unwrap()],
        )
        .unwrap();
        assert!(close(&m.synthesize(), &[0.0, -2.0, 0.0, 2.0], 1e-14));
    }

    #[test]
    fn synthesize_is_superposition() {
        let model = draw_model(3, 128, PI / 128.0, Preset::Sinu, 11).unwrap();
        let total = model.synthesize();
        let mut sum = vec![0.0; 128];
        for c in model.components() {
            let single = SignalModel::new(128, vec![*c]).unwrap().synthesize();
            for (a, b) in sum.iter_mut().zip(single) {
                *a += b;
            }
        }
        let scale = norm_sq(&total).sqrt();
        let diff = total
            .iter()
            .zip(&sum)
            .map(|(a, b)| (a - b).powi(2))
            .sum::<f64>()
            .sqrt();
        assert!(diff <= 1e-12 * scale);
    }

    #[test]
    fn quadrature_form_agrees_with_phase_form() {
        let model = draw_model(3, 128, PI / 128.0, Preset::Sinu, 5).unwrap();
        let direct = model.synthesize();
        let mut quad = vec![0.0; 128];
        for c in model.components() {
            let (a1, a2) = c.quadrature();
            let (s, co) = sinusoid_samples(c.omega(), 128);
            for t in 0..128 {
                quad[t] += a1 * s[t] + a2 * co[t];
            }
        }
        let scale = norm_sq(&direct).sqrt();
        let diff = direct
            .iter()
            .zip(&quad)
            .map(|(a, b)| (a - b).powi(2))
            .sum::<f64>()
            .sqrt();
        assert!(diff <= 1e-12 * scale, "diff {diff}");
    }

    #[test]
    fn model_validation() {
        let p = SinusoidParams::new(0.5, 1.0, 0.0).unwrap();
        assert!(SignalModel::new(4, vec![]).is_err());
        assert!(SignalModel::new(3, vec![p, SinusoidParams::new(0.6, 1.0, 0.0).unwrap()]).is_err());
        assert!(SignalModel::new(8, vec![p, p]).is_err());
        assert!(SignalModel::from_estimates(8, vec![p, p]).is_ok());
        assert!(SinusoidParams::new(-0.1, 1.0, 0.0).is_err());
        assert!(SinusoidParams::new(0.1, -1.0, 0.0).is_err());
        assert!(SinusoidParams::new(f64::NAN, 1.0, 0.0).is_err());
    }

    #[test]
    fn phase_canonicalization() {
        assert_eq!(canonical_phase(PI), PI);
        assert_eq!(canonical_phase(-PI), PI);
        assert!((canonical_phase(3.0 * PI / 2.0) + PI / 2.0).abs() < 1e-15);
        let p = SinusoidParams::from_quadrature(1.0, -1.0, -0.0).unwrap();
        assert_eq!(p.phase(), PI);
    }

    #[test]
    fn noiseless_is_identity() {
        let s = vec![1.0, -2.0, 3.0];
        assert_eq!(add_noise(&s, &NoiseSpec::noiseless()).unwrap(), s);
    }

    #[test]
    fn noise_rejects_zero_signal() {
        let spec = NoiseSpec::with_snr(10.0, 1).unwrap();
        assert!(matches!(
            add_noise(&[0.0; 8], &spec),
            Err(Error::ZeroSignal(_))
        ));
        assert!(NoiseSpec::with_snr(f64::INFINITY, 1).is_err());
    }

    #[test]
    fn noise_is_seed_deterministic() {
        let s = draw_model(3, 128, PI / 128.0, Preset::Freq, 1)
            .unwrap()
            .synthesize();
        let spec = NoiseSpec::with_snr(20.0, 99).unwrap();
        let x1 = add_noise(&s, &spec).unwrap();
        let x2 = add_noise(&s, &spec).unwrap();
        assert_eq!(x1, x2);
        let x3 = add_noise(&s, &NoiseSpec::with_snr(20.0, 100).unwrap()).unwrap();
        assert_ne!(x1, x3);
    }

    #[test]
    fn empirical_snr_at_60_db() {
        // Sample-statistics oracle: empirical SNR averaged over 100 seeds.
        let s = draw_model(3, 128, PI / 128.0, Preset::Freq, 3)
            .unwrap()
            .synthesize();
        let ps = norm_sq(&s);
        let mean_db = (0..100)
            .map(|seed| {
                let x = add_noise(&s, &NoiseSpec::with_snr(60.0, seed).unwrap()).unwrap();
                let pn: f64 = x.iter().zip(&s).map(|(a, b)| (a - b).powi(2)).sum();
                10.0 * (ps / pn).log10()
            })
            .sum::<f64>()
            / 100.0;
        assert!((mean_db - 60.0).abs() < 1.0, "mean empirical SNR {mean_db}");
    }

    #[test]
    fn freq_preset_has_unit_amplitude_zero_phase() {
        let m = draw_model(3, 128, PI / 128.0, Preset::Freq, 42).unwrap();
        assert_eq!(m.k(), 3);
        for c in m.components() {
            assert_eq!(c.amplitude(), 1.0);
            assert_eq!(c.phase(), 0.0);
        }
    }

    #[test]
    fn sinu_preset_ranges() {
        for seed in 0..50 {
            let m = draw_model(3, 128, PI / 128.0, Preset::Sinu, seed).unwrap();
            for c in m.components() {
                assert!((0.5..=1.5).contains(&c.amplitude()));
                assert!(c.phase() > -PI && c.phase() <= PI);
            }
        }
    }

    #[test]
    fn single_tone_draw() {
        let m = draw_model(1, 4, 0.0, Preset::Freq, 0).unwrap();
        assert_eq!(m.k(), 1);
        assert!(m.components()[0].omega() > 0.0 && m.components()[0].omega() < PI);
    }

    #[test]
    fn separation_holds_over_many_draws() {
        let sep = PI / 128.0;
        for seed in 0..1000 {
            let f = draw_model(3, 128, sep, Preset::Freq, seed)
                .unwrap()
                .frequencies();
            for i in 0..3 {
                assert!(f[i] > sep && f[i] < PI - sep);
                for j in i + 1..3 {
                    assert!((f[i] - f[j]).abs() >= sep);
                }
            }
        }
    }

    #[test]
    fn infeasible_and_exhausted_draws() {
        assert!(draw_model(4, 128, PI / 4.0, Preset::Freq, 0).is_err());
        // Feasible in principle, but practically never hit by uniform draws.
        let err = draw_model_with_budget(3, 128, 0.33 * PI, Preset::Freq, 0, 50).unwrap_err();
        assert!(matches!(err, Error::RejectionBudget { draws: 50, .. }));
    }

    #[test]
    fn json_record_shape() {
        let m = draw_model(2, 16, 0.1, Preset::Sinu, 8).unwrap();
        let v: serde_json::Value = serde_json::to_value(&m).unwrap();
        assert_eq!(v["n"], 16);
        assert_eq!(v["components"].as_array().unwrap().len(), 2);
        assert!(v["components"][0]["omega"].is_f64());
        let back: SignalModel = serde_json::from_value(v).unwrap();
        assert_eq!(back, m);
        let bad = serde_json::json!({"n": 4, "components": [{"omega": 9.0, "amplitude": 1.0, "phase": 0.0}]});
        assert!(serde_json::from_value::<SignalModel>(bad).is_err());
    }

    proptest! {
        #[test]
        fn amplitude_phase_round_trip(a in 1e-6f64..10.0, phi in -PI..PI, omega in 0.01f64..3.1) {
            let phi = canonical_phase(phi);
            let p = SinusoidParams::new(omega, a, phi).unwrap();
            let (a1, a2) = p.quadrature();
            let q = SinusoidParams::from_quadrature(omega, a1, a2).unwrap();
            prop_assert!((q.amplitude() - a).abs() <= 1e-12 * a.max(1.0));
            let dphi = canonical_phase(q.phase() - phi).abs();
            prop_assert!(dphi <= 1e-9);
        }
    }
}
