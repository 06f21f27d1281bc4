use nalgebra::{DMatrix, DVector};

use super::{LearnError, Matrix};

/// Per-column mean and standard deviation; constant columns get a zero
/// scale and are ignored by the models.
#[derive(Debug, Clone, PartialEq)]
pub(crate) struct Standardizer {
    pub mean: Vec<f64>,
    pub scale: Vec<f64>,
}

impl Standardizer {
    pub fn fit(x: &Matrix) -> Self {
        let n = x.n_rows() as f64;
        let mut mean = vec![0.0; x.n_cols()];
        let mut scale = vec![0.0; x.n_cols()];
        for c in 0..x.n_cols() {
            let m = (0..x.n_rows()).map(|r| x.get(r, c)).sum::<f64>() / n;
            let var = (0..x.n_rows()).map(|r| (x.get(r, c) - m).powi(2)).sum::<f64>() / n;
            mean[c] = m;
            scale[c] = if var > 1e-24 * (1.0 + m * m) { var.sqrt() } else { 0.0 };
        }
        Self { mean, scale }
    }

    /// Standardized value, or 0 for an ignored column.
    #[inline]
    pub fn z(&self, c: usize, v: f64) -> f64 {
        if self.scale[c] == 0.0 {
            0.0
        } else {
            (v - self.mean[c]) / self.scale[c]
        }
    }
}

/// Ridge regression with an unpenalized intercept, fit on standardized
/// features and reported in the original scale.
#[derive(Debug, Clone, PartialEq)]
pub struct LinearModel {
    coefficients: Vec<f64>,
    intercept: f64,
}

impl LinearModel {
    pub(crate) fn fit(x: &Matrix, y: &[f64], lambda: f64) -> Result<Self, LearnError> {
        let n = x.n_rows();
        let p = x.n_cols();
        let st = Standardizer::fit(x);
        let y_mean = y.iter().sum::<f64>() / n as f64;
        let z = DMatrix::from_fn(n, p, |r, c| st.z(c, x.get(r, c)));
        let yc = DVector::from_iterator(n, y.iter().map(|v| v - y_mean));
        let mut gram = z.transpose() * &z;
        for i in 0..p {
            gram[(i, i)] += lambda;
        }
        let rhs = z.transpose() * yc;
        let beta = gram.cholesky().ok_or(LearnError::Singular)?.solve(&rhs);
        let coefficients: Vec<f64> = (0..p)
            .map(|c| if st.scale[c] == 0.0 { 0.0 } else { beta[c] / st.scale[c] })
            .collect();
        let intercept = y_mean - coefficients.iter().zip(&st.mean).map(|(b, m)| b * m).sum::<f64>();
        Ok(Self {
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

    pub fn n_features(&self) -> usize {
        self.coefficients.len()
    }

    pub fn predict(&self, x: &Matrix) -> Vec<f64> {
        (0..x.n_rows())
            .map(|r| {
                self.intercept
                    + x.row(r)
                        .iter()
                        .zip(&self.coefficients)
                        .map(|(v, b)| v * b)
                        .sum::<f64>()
            })
            .collect()
    }
}

#[cfg(test)]
mod tests {
    use super::*;

    #[test]
    fn recovers_exact_line() {
        let xs: Vec<f64> = (0..10).map(f64::from).collect();
        let y: Vec<f64> = xs.iter().map(|v| 2.0 * v + 1.0).collect();
        let m = LinearModel::fit(&Matrix::from_columns(10, &[xs]), &y, 1e-6).unwrap();
        assert!((m.coefficients()[0] - 2.0).abs() < 1e-6);
        assert!((m.intercept() - 1.0).abs() < 1e-5);
    }

    #[test]
    fn matches_normal_equations_oracle() {
        // two features, closed-form 2x2 ridge on centered standardized data
        let a = [1.0, 2.0, 4.0, 3.0, 5.0];
        let b = [2.0, 1.0, 0.0, 3.0, 1.0];
        let y = [3.0, 4.0, 7.0, 8.0, 8.0];
        let m = LinearModel::fit(&Matrix::from_columns(5, &[a.to_vec(), b.to_vec()]), &y, 1e-9).unwrap();
        // ordinary least squares via Cramer's rule
        let mean = |v: &[f64]| v.iter().sum::<f64>() / v.len() as f64;
        let (ma, mb, my) = (mean(&a), mean(&b), mean(&y));
        let dot = |u: &[f64], mu: f64, v: &[f64], mv: f64| {
            u.iter().zip(v).map(|(p, q)| (p - mu) * (q - mv)).sum::<f64>()
        };
        let (saa, sbb, sab) = (dot(&a, ma, &a, ma), dot(&b, mb, &b, mb), dot(&a, ma, &b, mb));
        let (say, sby) = (dot(&a, ma, &y, my), dot(&b, mb, &y, my));
        let det = saa * sbb - sab * sab;
        let ba = (say * sbb - sby * sab) / det;
        let bb = (saa * sby - sab * say) / det;
        assert!((m.coefficients()[0] - ba).abs() < 1e-6);
        assert!((m.coefficients()[1] - bb).abs() < 1e-6);
        assert!((m.intercept() - (my - ba * ma - bb * mb)).abs() < 1e-6);
    }

    #[test]
    fn constant_columns_are_ignored() {
        let x = Matrix::from_columns(4, &[vec![7.0; 4], vec![1.0, 2.0, 3.0, 4.0]]);
        let m = LinearModel::fit(&x, &[1.0, 2.0, 3.0, 4.0], 1e-6).unwrap();
        assert_eq!(m.coefficients()[0], 0.0);
        let no_features = LinearModel::fit(&Matrix::zeros(3, 0), &[1.0, 2.0, 6.0], 1e-6).unwrap();
        assert_eq!(no_features.predict(&Matrix::zeros(1, 0)), vec![3.0]);
    }
}
