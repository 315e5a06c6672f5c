//! Sensing matrices and the measurement operation `m = Phi x`.

use rand::seq::index;
use rand::Rng;
use rand_distr::StandardNormal;
use serde::{Deserialize, Serialize};

use crate::error::{Error, Result};
use crate::numerics::{dot, rng};

#[derive(Debug, Clone, Copy, PartialEq, Eq, Serialize, Deserialize)]
#[serde(rename_all = "lowercase")]
pub enum MatrixKind {
    /// i.i.d. `N(0, 1/M)` entries.
    Gaussian,
    /// Rows are distinct standard basis vectors.
    Subsampling,
    /// Caller-supplied dense entries.
    Explicit,
}

impl std::str::FromStr for MatrixKind {
    type Err = Error;

    fn from_str(s: &str) -> Result<Self> {
        match s.to_ascii_lowercase().as_str() {
            "gaussian" => Ok(MatrixKind::Gaussian),
            "subsampling" => Ok(MatrixKind::Subsampling),
            other => Err(Error::invalid(format!("unknown matrix kind `{other}`"))),
        }
    }
}

/// The `(kind, m, n, seed)` tuple a random sensing matrix is regenerated from.
#[derive(Debug, Clone, Copy, PartialEq, Eq, Serialize, Deserialize)]
pub struct MatrixSpec {
    pub kind: MatrixKind,
    pub m: usize,
    pub n: usize,
    pub seed: u64,
}

impl MatrixSpec {
    pub fn build(&self) -> Result<SensingMatrix> {
        match self.kind {
            MatrixKind::Gaussian => SensingMatrix::gaussian(self.m, self.n, self.seed),
            MatrixKind::Subsampling => SensingMatrix::subsampling(self.m, self.n, self.seed),
            MatrixKind::Explicit => Err(Error::invalid(
                "explicit matrices cannot be regenerated from a seed",
            )),
        }
    }
}

/// Dense row-major `M x N` measurement operator.
#[derive(Debug, Clone, PartialEq)]
pub struct SensingMatrix {
    rows: usize,
    cols: usize,
    entries: Vec<f64>,
    kind: MatrixKind,
    seed: u64,
}

fn check_shape(m: usize, n: usize) -> Result<()> {
    if m == 0 || n == 0 {
        return Err(Error::invalid("sensing matrix dimensions must be positive"));
    }
    if m > n {
        return Err(Error::invalid(format!(
            "sensing matrix must not have more rows than columns ({m} > {n})"
        )));
    }
    Ok(())
}

impl SensingMatrix {
    pub fn gaussian(m: usize, n: usize, seed: u64) -> Result<Self> {
        check_shape(m, n)?;
        let scale = 1.0 / (m as f64).sqrt();
        let mut rng = rng(seed);
        let entries = (0..m * n)
            .map(|_| scale * rng.sample::<f64, _>(StandardNormal))
            .collect();
        Ok(Self {
            rows: m,
            cols: n,
            entries,
            kind: MatrixKind::Gaussian,
            seed,
        })
    }

    pub fn subsampling(m: usize, n: usize, seed: u64) -> Result<Self> {
        check_shape(m, n)?;
        let mut rng = rng(seed);
        let picks = index::sample(&mut rng, n, m);
        let mut entries = vec![0.0; m * n];
        for (row, col) in picks.iter().enumerate() {
            entries[row * n + col] = 1.0;
        }
        Ok(Self {
            rows: m,
            cols: n,
            entries,
            kind: MatrixKind::Subsampling,
            seed,
        })
    }

    /// Wraps caller-provided row-major entries.
    pub fn from_rows(m: usize, n: usize, entries: Vec<f64>) -> Result<Self> {
        check_shape(m, n)?;
        Error::check_len("matrix entries", m * n, entries.len())?;
        if entries.iter().any(|v| !v.is_finite()) {
            return Err(Error::invalid("matrix entries must be finite"));
        }
        Ok(Self {
            rows: m,
            cols: n,
            entries,
            kind: MatrixKind::Explicit,
            seed: 0,
        })
    }

    pub fn identity(n: usize) -> Result<Self> {
        let mut entries = vec![0.0; n * n];
        for i in 0..n {
            entries[i * n + i] = 1.0;
        }
        Self::from_rows(n, n, entries)
    }

    pub fn rows(&self) -> usize {
        self.rows
    }

    pub fn cols(&self) -> usize {
        self.cols
    }

    pub fn kind(&self) -> MatrixKind {
        self.kind
    }

    pub fn seed(&self) -> u64 {
        self.seed
    }

    pub fn entries(&self) -> &[f64] {
        &self.entries
    }

    pub fn row(&self, i: usize) -> &[f64] {
        &self.entries[i * self.cols..(i + 1) * self.cols]
    }

    pub fn spec(&self) -> Option<MatrixSpec> {
        (self.kind != MatrixKind::Explicit).then_some(MatrixSpec {
            kind: self.kind,
            m: self.rows,
            n: self.cols,
            seed: self.seed,
        })
    }

    /// `Phi x` without length validation; `x.len()` must equal `cols`.
    pub(crate) fn apply(&self, x: &[f64]) -> Vec<f64> {
        debug_assert_eq!(x.len(), self.cols);
        self.entries
            .chunks_exact(self.cols)
            .map(|row| dot(row, x))
            .collect()
    }

    /// `(Phi a, Phi b)` in a single pass over the matrix.
    pub(crate) fn apply_pair(&self, a: &[f64], b: &[f64]) -> (Vec<f64>, Vec<f64>) {
        debug_assert_eq!(a.len(), self.cols);
        debug_assert_eq!(b.len(), self.cols);
        let mut pa = Vec::with_capacity(self.rows);
        let mut pb = Vec::with_capacity(self.rows);
        for row in self.entries.chunks_exact(self.cols) {
            let (mut sa, mut sb) = (0.0, 0.0);
            for ((p, x), y) in row.iter().zip(a).zip(b) {
                sa += p * x;
                sb += p * y;
            }
            pa.push(sa);
            pb.push(sb);
        }
        (pa, pb)
    }

    pub fn measure(&self, x: &[f64]) -> Result<Measurement> {
        Error::check_len("signal length", self.cols, x.len())?;
        Ok(Measurement {
            values: self.apply(x),
            matrix_seed: self.seed,
        })
    }
}

/// Compressed measurement vector together with the seed of the matrix that
/// produced it.
#[derive(Debug, Clone, PartialEq, Serialize, Deserialize)]
pub struct Measurement {
    pub values: Vec<f64>,
    pub matrix_seed: u64,
}

impl Measurement {
    pub fn new(values: Vec<f64>, matrix_seed: u64) -> Self {
        Self {
            values,
            matrix_seed,
        }
    }

    pub fn len(&self) -> usize {
        self.values.len()
    }

    pub fn is_empty(&self) -> bool {
        self.values.is_empty()
    }
}

#[cfg(test)]
mod tests {
    use super::*;
    use proptest::prelude::*;

    #[test]
    fn gaussian_is_deterministic() {
        let a = SensingMatrix::gaussian(64, 128, 1).unwrap();
        let b = SensingMatrix::gaussian(64, 128, 1).unwrap();
        assert_eq!(a, b);
        assert_ne!(a, SensingMatrix::gaussian(64, 128, 2).unwrap());
    }

    #[test]
    fn gaussian_moments() {
        let phi = SensingMatrix::gaussian(64, 128, 3).unwrap();
        let e = phi.entries();
        let count = e.len() as f64;
        let mean = e.iter().sum::<f64>() / count;
        let var = e.iter().map(|v| (v - mean).powi(2)).sum::<f64>() / (count - 1.0);
        let target = 1.0 / 64.0;
        assert!(mean.abs() < 3.0 * (target / count).sqrt(), "mean {mean}");
        assert!((var - target).abs() < 0.1 * target, "var {var}");
    }

    #[test]
    fn gaussian_scalar() {
        let phi = SensingMatrix::gaussian(1, 1, 9).unwrap();
        assert_eq!(phi.entries().len(), 1);
        assert!(phi.entries()[0].is_finite());
    }

    #[test]
    fn shape_errors() {
        assert!(SensingMatrix::gaussian(5, 4, 0).is_err());
        assert!(SensingMatrix::subsampling(5, 4, 0).is_err());
        assert!(SensingMatrix::gaussian(0, 4, 0).is_err());
        assert!(SensingMatrix::from_rows(2, 2, vec![1.0; 3]).is_err());
    }

    #[test]
    fn full_subsampling_is_permutation() {
        let phi = SensingMatrix::subsampling(8, 8, 4).unwrap();
        let x: Vec<f64> = (1..=8).map(f64::from).collect();
        let mut y = phi.measure(&x).unwrap().values;
        y.sort_by(f64::total_cmp);
        assert_eq!(y, x);
    }

    #[test]
    fn partial_subsampling_picks_distinct_entries() {
        let phi = SensingMatrix::subsampling(3, 8, 17).unwrap();
        let x: Vec<f64> = (1..=8).map(f64::from).collect();
        let y = phi.measure(&x).unwrap().values;
        assert_eq!(y.len(), 3);
        for v in &y {
            assert!(x.contains(v));
        }
        assert!(y[0] != y[1] && y[1] != y[2] && y[0] != y[2]);
    }

    #[test]
    fn measure_identity_and_hand_example() {
        let x = vec![0.5, -1.0, 2.0];
        assert_eq!(
            SensingMatrix::identity(3)
                .unwrap()
                .measure(&x)
                .unwrap()
                .values,
            x
        );
        let phi = SensingMatrix::from_rows(2, 2, vec![1.0, 1.0, 1.0, -1.0]).unwrap();
        assert_eq!(phi.measure(&[3.0, 1.0]).unwrap().values, vec![4.0, 2.0]);
        assert!(matches!(
            phi.measure(&[1.0]),
            Err(Error::DimensionMismatch { .. })
        ));
    }

    #[test]
    fn measure_matches_naive_product() {
        let phi = SensingMatrix::gaussian(20, 50, 5).unwrap();
        let x: Vec<f64> = (0..50).map(|i| (i as f64 * 0.37).sin()).collect();
        let y = phi.measure(&x).unwrap().values;
        for (i, yi) in y.iter().enumerate() {
            let mut acc = 0.0;
            for (j, xj) in x.iter().enumerate() {
                acc += phi.entries()[i * 50 + j] * xj;
            }
            assert!((acc - yi).abs() <= 1e-12 * acc.abs().max(1.0));
        }
        let (a, b) = phi.apply_pair(&x, &x);
        assert_eq!(a, y);
        assert_eq!(b, y);
    }

    #[test]
    fn spec_round_trip() {
        let phi = SensingMatrix::subsampling(10, 20, 77).unwrap();
        assert_eq!(phi.spec().unwrap().build().unwrap(), phi);
        assert!(SensingMatrix::identity(3).unwrap().spec().is_none());
    }

    proptest! {
        #[test]
        fn subsampling_columns_hold_at_most_one_nonzero(n in 1usize..40, frac in 0.0f64..1.0, seed: u64) {
            let m = ((n as f64 * frac) as usize).clamp(1, n);
            let phi = SensingMatrix::subsampling(m, n, seed).unwrap();
            for col in 0..n {
                let nz = (0..m).filter(|&r| phi.entries()[r * n + col] != 0.0).count();
                prop_assert!(nz <= 1);
            }
            for r in 0..m {
                let row = phi.row(r);
                prop_assert_eq!(row.iter().filter(|&&v| v == 1.0).count(), 1);
                prop_assert_eq!(row.iter().filter(|&&v| v != 0.0).count(), 1);
            }
        }

        #[test]
        fn measurement_is_linear(seed: u64, a in -3.0f64..3.0, b in -3.0f64..3.0) {
            let phi = SensingMatrix::gaussian(8, 16, seed).unwrap();
            let x: Vec<f64> = (0..16).map(|i| (i as f64 + 0.3).cos()).collect();
            let y: Vec<f64> = (0..16).map(|i| (i as f64 * 1.7).sin()).collect();
            let combo: Vec<f64> = x.iter().zip(&y).map(|(p, q)| a * p + b * q).collect();
            let lhs = phi.measure(&combo).unwrap().values;
            let mx = phi.measure(&x).unwrap().values;
            let my = phi.measure(&y).unwrap().values;
            let scale = lhs.iter().map(|v| v * v).sum::<f64>().sqrt().max(1.0);
            for i in 0..8 {
                prop_assert!((lhs[i] - (a * mx[i] + b * my[i])).abs() <= 1e-12 * scale);
            }
        }
    }
}
