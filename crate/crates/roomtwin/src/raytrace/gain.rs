//! Device directivity as a real spherical-harmonic expansion pushed through
//! a softplus map, so the evaluated gain is positive for every direction and
//! smooth in the coefficients.

use crate::error::{Error, Result};
use nalgebra::{Unit, Vector3};
use serde::{Deserialize, Serialize};

/// Number of real SH basis functions up to degree 2.
pub const SH_COUNT: usize = 9;

const Y00: f64 = 0.282_094_791_773_878_14;
const Y1: f64 = 0.488_602_511_902_919_9;
const Y2A: f64 = 1.092_548_430_592_079_2;
const Y20: f64 = 0.315_391_565_252_520_05;
const Y22: f64 = 0.546_274_215_296_039_6;

/// Real spherical harmonics up to degree 2 at a unit direction, in the order
/// (l,m) = (0,0), (1,-1), (1,0), (1,1), (2,-2), (2,-1), (2,0), (2,1), (2,2).
pub fn sh_basis(dir: &Unit<Vector3<f64>>) -> [f64; SH_COUNT] {
    let (x, y, z) = (dir.x, dir.y, dir.z);
    [
        Y00,
        Y1 * y,
        Y1 * z,
        Y1 * x,
        Y2A * x * y,
        Y2A * y * z,
        Y20 * (3.0 * z * z - 1.0),
        Y2A * x * z,
        Y22 * (x * x - y * y),
    ]
}

/// Numerically stable ln(1 + e^x).
pub fn softplus(x: f64) -> f64 {
    x.max(0.0) + (-x.abs()).exp().ln_1p()
}

/// d softplus / dx = logistic(x).
pub fn softplus_prime(x: f64) -> f64 {
    1.0 / (1.0 + (-x).exp())
}

/// Inverse of softplus for y > 0.
pub fn softplus_inv(y: f64) -> f64 {
    if y > 30.0 {
        y
    } else {
        (y.exp() - 1.0).ln()
    }
}

/// Broadband directional gain: `gain(dir) = softplus(sum_k c_k Y_k(dir))`.
/// Directions are expressed in the device's local frame via its pose.
#[derive(Debug, Clone, PartialEq, Serialize, Deserialize)]
pub struct GainPattern {
    pub coeffs: Vec<f64>,
}

impl GainPattern {
    pub fn new(coeffs: Vec<f64>) -> Result<Self> {
        if coeffs.is_empty() || coeffs.len() > SH_COUNT {
            return Err(Error::Render(format!(
                "gain pattern needs 1..={SH_COUNT} coefficients, got {}",
                coeffs.len()
            )));
        }
        Ok(GainPattern { coeffs })
    }

    /// Unit gain in every direction (degree-0 coefficient only).
    pub fn isotropic_unit() -> Self {
        GainPattern::isotropic(1.0)
    }

    /// Constant gain `g` in every direction.
    pub fn isotropic(g: f64) -> Self {
        let mut coeffs = vec![0.0; SH_COUNT];
        coeffs[0] = softplus_inv(g) / Y00;
        GainPattern { coeffs }
    }

    /// SH expansion value before the positivity map.
    pub fn eval_raw(&self, dir_local: &Unit<Vector3<f64>>) -> f64 {
        let basis = sh_basis(dir_local);
        self.coeffs.iter().zip(basis.iter()).map(|(c, b)| c * b).sum()
    }

    /// Evaluated gain, strictly positive.
    pub fn gain(&self, dir_local: &Unit<Vector3<f64>>) -> f64 {
        softplus(self.eval_raw(dir_local))
    }
}

#[cfg(test)]
mod tests {
    use super::*;
    use approx::assert_abs_diff_eq;
    use rand::prelude::*;
    use rand_chacha::ChaCha8Rng;

    #[test]
    fn isotropic_unit_is_one_everywhere() {
        let g = GainPattern::isotropic_unit();
        for d in crate::geometry::sphere_directions(50).unwrap() {
            assert_abs_diff_eq!(g.gain(&d), 1.0, epsilon = 1e-12);
        }
    }

    #[test]
    fn gain_is_positive_for_wild_coefficients() {
        let mut rng = ChaCha8Rng::seed_from_u64(11);
        for _ in 0..100 {
            let coeffs: Vec<f64> = (0..SH_COUNT).map(|_| rng.random_range(-20.0..20.0)).collect();
            let g = GainPattern::new(coeffs).unwrap();
            for d in crate::geometry::sphere_directions(20).unwrap() {
                assert!(g.gain(&d) > 0.0);
            }
        }
    }

    #[test]
    fn sh_basis_orthonormal_under_sphere_quadrature() {
        // Fibonacci quadrature of Y_i * Y_j approximates delta_ij
        let dirs = crate::geometry::sphere_directions(20_000).unwrap();
        let w = 4.0 * std::f64::consts::PI / dirs.len() as f64;
        let mut gram = [[0.0f64; SH_COUNT]; SH_COUNT];
        for d in &dirs {
            let b = sh_basis(d);
            for i in 0..SH_COUNT {
                for j in 0..SH_COUNT {
                    gram[i][j] += w * b[i] * b[j];
                }
            }
        }
        for (i, row) in gram.iter().enumerate() {
            for (j, &v) in row.iter().enumerate() {
                let expect = if i == j { 1.0 } else { 0.0 };
                assert!(
                    (v - expect).abs() < 5e-3,
                    "gram[{i}][{j}] = {v}"
                );
            }
        }
    }

    #[test]
    fn softplus_inverse_round_trip() {
        for y in [0.1, 1.0, 5.0, 40.0] {
            assert_abs_diff_eq!(softplus(softplus_inv(y)), y, epsilon = 1e-9);
        }
    }
}
