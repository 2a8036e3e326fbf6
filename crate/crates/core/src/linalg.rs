//! Dense helpers for the small symmetric positive-definite systems of the
//! regression family. Matrices are row-major `d × d` slices; `d` is tiny (≤ 4
//! in practice) so everything is done by hand on the stack or in short vectors.

use crate::rng::RngStream;

/// Lower Cholesky factor of `a`, or `None` if `a` is not positive definite.
pub fn cholesky(a: &[f64], d: usize) -> Option<Vec<f64>> {
    let mut l = vec![0.0; d * d];
    for i in 0..d {
        for j in 0..=i {
            let mut s = a[i * d + j];
            for k in 0..j {
                s -= l[i * d + k] * l[j * d + k];
            }
            if i == j {
                if !(s > 0.0) || !s.is_finite() {
                    return None;
                }
                l[i * d + i] = s.sqrt();
            } else {
                l[i * d + j] = s / l[j * d + j];
            }
        }
    }
    Some(l)
}

pub fn chol_logdet(l: &[f64], d: usize) -> f64 {
    (0..d).map(|i| 2.0 * l[i * d + i].ln()).sum()
}

/// Solve `L Lᵀ x = b`.
pub fn chol_solve(l: &[f64], d: usize, b: &[f64]) -> Vec<f64> {
    let mut y = b.to_vec();
    for i in 0..d {
        for k in 0..i {
            y[i] -= l[i * d + k] * y[k];
        }
        y[i] /= l[i * d + i];
    }
    for i in (0..d).rev() {
        for k in i + 1..d {
            y[i] -= l[k * d + i] * y[k];
        }
        y[i] /= l[i * d + i];
    }
    y
}

/// Draw `mean + N(0, scale · precision⁻¹)`.
pub fn sample_mvn_precision(
    mean: &[f64],
    precision: &[f64],
    scale: f64,
    d: usize,
    rng: &mut RngStream,
) -> Vec<f64> {
    let l = cholesky(precision, d).expect("precision must be positive definite");
    let mut v: Vec<f64> = (0..d).map(|_| rng.standard_normal()).collect();
    // Lᵀ v = z
    for i in (0..d).rev() {
        for k in i + 1..d {
            v[i] -= l[k * d + i] * v[k];
        }
        v[i] /= l[i * d + i];
    }
    let s = scale.sqrt();
    mean.iter().zip(v).map(|(m, z)| m + s * z).collect()
}

#[cfg(test)]
mod tests {
    use super::*;
    use approx::assert_relative_eq;

    #[test]
    fn solve_and_logdet() {
        let a = [4.0, 1.0, 0.5, 1.0, 3.0, 0.2, 0.5, 0.2, 2.0];
        let l = cholesky(&a, 3).unwrap();
        let x = chol_solve(&l, 3, &[1.0, 2.0, 3.0]);
        for i in 0..3 {
            let r: f64 = (0..3).map(|j| a[i * 3 + j] * x[j]).sum();
            assert_relative_eq!(r, [1.0, 2.0, 3.0][i], epsilon = 1e-12);
        }
        // det by cofactor expansion
        let det = 4.0 * (3.0 * 2.0 - 0.2 * 0.2) - 1.0 * (1.0 * 2.0 - 0.2 * 0.5)
            + 0.5 * (1.0 * 0.2 - 3.0 * 0.5);
        assert_relative_eq!(chol_logdet(&l, 3), f64::ln(det), epsilon = 1e-12);
    }

    #[test]
    fn rejects_indefinite() {
        assert!(cholesky(&[1.0, 2.0, 2.0, 1.0], 2).is_none());
        assert!(cholesky(&[f64::NAN], 1).is_none());
    }
}
