use crate::error::{HarnessError, Result};
use crate::features::FeatureMatrix;

/// Least squares on standardized features with an unpenalized intercept.
#[derive(Debug, Clone, PartialEq)]
pub struct LinearModel {
    coefficients: Vec<f64>,
    intercept: f64,
}

impl LinearModel {
    /// Solves `(Z'Z + penalty·I) b = Z'y` on centered, unit-variance columns.
    ///
    /// Constant columns are absorbed by the intercept and get a zero weight.
    pub fn fit(matrix: &FeatureMatrix, penalty: f64) -> Result<Self> {
        let n = matrix.n_rows();
        let p = matrix.n_cols();
        let nf = n as f64;

        let mut mean = vec![0.0; p];
        for i in 0..n {
            for (m, v) in mean.iter_mut().zip(matrix.row(i)) {
                *m += v;
            }
        }
        mean.iter_mut().for_each(|m| *m /= nf);
        let mut scale = vec![0.0; p];
        for i in 0..n {
            for ((s, v), m) in scale.iter_mut().zip(matrix.row(i)).zip(&mean) {
                *s += (v - m) * (v - m);
            }
        }
        scale.iter_mut().for_each(|s| *s = (*s / nf).sqrt());
        let y_mean = matrix.targets.iter().sum::<f64>() / nf;

        let active: Vec<usize> = (0..p).filter(|&j| scale[j] > 0.0).collect();
        let q = active.len();
        let mut gram = vec![0.0; q * q];
        let mut rhs = vec![0.0; q];
        let mut z = vec![0.0; q];
        for i in 0..n {
            let row = matrix.row(i);
            for (a, &j) in active.iter().enumerate() {
                z[a] = (row[j] - mean[j]) / scale[j];
            }
            let yc = matrix.targets[i] - y_mean;
            for a in 0..q {
                rhs[a] += z[a] * yc;
                for b in 0..=a {
                    gram[a * q + b] += z[a] * z[b];
                }
            }
        }
        for a in 0..q {
            gram[a * q + a] += penalty;
            for b in 0..a {
                gram[b * q + a] = gram[a * q + b];
            }
        }
        let solution = cholesky_solve(&mut gram, &mut rhs, q)?;

        let mut coefficients = vec![0.0; p];
        let mut intercept = y_mean;
        for (a, &j) in active.iter().enumerate() {
            coefficients[j] = solution[a] / scale[j];
            intercept -= coefficients[j] * mean[j];
        }
        Ok(LinearModel {
            coefficients,
            intercept,
        })
    }

    pub fn coefficients(&self) -> &[f64] {
        &self.coefficients
    }

    pub fn intercept(&self) -> f64 {
        self.intercept
    }

    pub fn predict(&self, row: &[f64]) -> f64 {
        self.intercept + self.coefficients.iter().zip(row).map(|(c, x)| c * x).sum::<f64>()
    }
}

/// In-place Cholesky factorization and solve of a symmetric `q × q` system.
fn cholesky_solve(a: &mut [f64], b: &mut [f64], q: usize) -> Result<Vec<f64>> {
    let max_diag = (0..q).map(|i| a[i * q + i]).fold(0.0f64, f64::max);
    let tol = 1e-10 * max_diag.max(f64::MIN_POSITIVE);
    for j in 0..q {
        let mut d = a[j * q + j];
        for k in 0..j {
            d -= a[j * q + k] * a[j * q + k];
        }
        if d <= tol {
            return Err(HarnessError::Singular);
        }
        let d = d.sqrt();
        a[j * q + j] = d;
        for i in j + 1..q {
            let mut s = a[i * q + j];
            for k in 0..j {
                s -= a[i * q + k] * a[j * q + k];
            }
            a[i * q + j] = s / d;
        }
    }
    for i in 0..q {
        let mut s = b[i];
        for k in 0..i {
            s -= a[i * q + k] * b[k];
        }
        b[i] = s / a[i * q + i];
    }
    for i in (0..q).rev() {
        let mut s = b[i];
        for k in i + 1..q {
            s -= a[k * q + i] * b[k];
        }
        b[i] = s / a[i * q + i];
    }
    Ok(b.to_vec())
}

#[cfg(test)]
mod tests {
    use super::*;

    fn matrix(rows: &[Vec<f64>], y: &[f64]) -> FeatureMatrix {
        let cols = (0..rows[0].len()).map(|j| format!("x{j}")).collect();
        FeatureMatrix::from_rows(cols, rows, y.to_vec())
    }

    #[test]
    fn exact_fit_recovers_plane() {
        let rows: Vec<Vec<f64>> = (0..20).map(|i| vec![i as f64, ((i * 7) % 5) as f64]).collect();
        let y: Vec<f64> = rows.iter().map(|r| 1.5 + 2.0 * r[0] - 3.0 * r[1]).collect();
        let m = LinearModel::fit(&matrix(&rows, &y), 0.0).unwrap();
        assert!((m.coefficients()[0] - 2.0).abs() < 1e-10);
        assert!((m.coefficients()[1] + 3.0).abs() < 1e-10);
        assert!((m.intercept() - 1.5).abs() < 1e-10);
    }

    #[test]
    fn collinear_columns_are_singular_without_ridge() {
        let rows: Vec<Vec<f64>> = (0..10).map(|i| vec![i as f64, 2.0 * i as f64]).collect();
        let y: Vec<f64> = (0..10).map(f64::from).collect();
        let m = matrix(&rows, &y);
        assert!(matches!(LinearModel::fit(&m, 0.0), Err(HarnessError::Singular)));
        let ridge = LinearModel::fit(&m, 1.0).unwrap();
        assert!(ridge.coefficients().iter().all(|c| c.is_finite()));
    }

    #[test]
    fn ridge_shrinks_towards_zero() {
        let rows: Vec<Vec<f64>> = (0..30).map(|i| vec![(i as f64).sin()]).collect();
        let y: Vec<f64> = rows.iter().map(|r| 4.0 * r[0]).collect();
        let m = matrix(&rows, &y);
        let ols = LinearModel::fit(&m, 0.0).unwrap().coefficients()[0];
        let small = LinearModel::fit(&m, 1.0).unwrap().coefficients()[0];
        let big = LinearModel::fit(&m, 100.0).unwrap().coefficients()[0];
        assert!(ols > small && small > big && big > 0.0);
    }

    #[test]
    fn constant_column_gets_zero_weight() {
        let rows: Vec<Vec<f64>> = (0..10).map(|i| vec![i as f64, 5.0]).collect();
        let y: Vec<f64> = (0..10).map(|i| 3.0 * i as f64 + 1.0).collect();
        let m = LinearModel::fit(&matrix(&rows, &y), 0.0).unwrap();
        assert_eq!(m.coefficients()[1], 0.0);
        assert!((m.predict(&[4.0, 5.0]) - 13.0).abs() < 1e-10);
    }
}
