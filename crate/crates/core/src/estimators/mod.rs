//! Classical correlation cleaners, univariate weight rules and the
//! Frobenius-optimal oracle.

mod ao;
mod clip;
mod ls;
mod oracle;
mod pm;
mod qis;
mod simple;

pub use ao::{calibrate_ao, AoTable};
pub use clip::{clip_eigenvalues, marchenko_pastur_edge};
pub use ls::{ledoit_wolf, shrink_with_intensity, LedoitWolf};
pub use oracle::{oracle_eigenvalues, OracleEigenvalues};
pub use pm::power_map;
pub use qis::{isotonic_increasing, qis};
pub use simple::{erb_weights, mcw_weights};

use nalgebra::DMatrix;

/// Default power-mapping exponent.
pub const DEFAULT_PM_GAMMA: f64 = 1.5;
/// Default number of bootstrap windows for the average-oracle table.
pub const DEFAULT_AO_SAMPLES: usize = 1000;

/// Sample correlation is returned unchanged.
pub fn clean_mle(c: &DMatrix<f64>) -> DMatrix<f64> {
    c.clone()
}
