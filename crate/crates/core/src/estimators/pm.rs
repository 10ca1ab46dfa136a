use nalgebra::DMatrix;

use crate::error::{Error, Result};
use crate::linalg;

pub const PSD_FLOOR: f64 = 1e-10;

/// `cᵢⱼ ↦ sign(cᵢⱼ)|cᵢⱼ|^γ` off the diagonal, then the nearest PSD matrix
/// with unit diagonal when the map breaks positivity.
pub fn power_map(c: &DMatrix<f64>, gamma: f64) -> Result<DMatrix<f64>> {
    if !(gamma >= 1.0) {
        return Err(Error::InvalidInput(format!("power-mapping exponent must be ≥ 1, got {gamma}")));
    }
    let n = c.nrows();
    let mut out = DMatrix::from_fn(n, n, |i, j| {
        if i == j {
            1.0
        } else {
            let v = 0.5 * (c[(i, j)] + c[(j, i)]);
            v.signum() * v.abs().powf(gamma)
        }
    });
    if linalg::eigh(&out)?.values[0] < PSD_FLOOR {
        out = linalg::to_unit_diagonal(&linalg::psd_floor(&out, PSD_FLOOR)?)?;
    }
    Ok(out)
}

#[cfg(test)]
mod tests {
    use super::*;

    #[test]
    fn unit_exponent_is_identity_map() {
        let c = DMatrix::from_row_slice(2, 2, &[1.0, 0.4, 0.4, 1.0]);
        assert_eq!(power_map(&c, 1.0).unwrap(), c);
    }

    #[test]
    fn square_of_half() {
        let c = DMatrix::from_row_slice(2, 2, &[1.0, -0.5, -0.5, 1.0]);
        let p = power_map(&c, 2.0).unwrap();
        assert_eq!(p[(0, 1)], -0.25);
    }
}
