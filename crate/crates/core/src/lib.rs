//! Recovery of frequency-sparse signals from compressed measurements by
//! parametric model selection.
//!
//! A signal `x_t = sum_j a_j sin(w_j t + p_j) + noise` is observed only through
//! `m = Phi x`. [`recovery::recover`] fits the `K` sinusoids directly to `m`
//! by cycling over components: each one is re-estimated against the residual
//! left by the others with the grid-refinement search in [`estimator`].
//!
//! ```
//! use spectral_mds::prelude::*;
//!
//! let truth = draw_model(3, 128, std::f64::consts::PI / 128.0, Preset::Freq, 7).unwrap();
//! let phi = SensingMatrix::gaussian(64, 128, 7).unwrap();
//! let m = phi.measure(&truth.synthesize()).unwrap();
//! let out = recover(&phi, &m, &RecoveryConfig::new(3)).unwrap();
//! let err = normalized_l2_error(&truth.synthesize(), &out.signal).unwrap();
//! assert!(err < 1e-3);
//! ```

pub mod baselines;
pub mod cli;
pub mod error;
pub mod estimator;
pub mod harness;
pub mod model;
pub mod numerics;
pub mod recovery;
pub mod sensing;

pub use error::{Error, Result};

pub mod prelude {
    pub use crate::baselines::{bomp_recover, grid_oracle, oracle_ls, BompConfig};
    pub use crate::estimator::{estimate_sinusoid, EstimatorConfig};
    pub use crate::harness::{
        match_frequencies, normalized_l2_error, run_experiment, ExperimentSpec,
    };
    pub use crate::model::{add_noise, draw_model, NoiseSpec, Preset, SignalModel, SinusoidParams};
    pub use crate::recovery::{recover, RecoveryConfig, RecoveryResult};
    pub use crate::sensing::{MatrixKind, MatrixSpec, Measurement, SensingMatrix};
}
