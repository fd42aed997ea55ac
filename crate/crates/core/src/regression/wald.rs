use nalgebra::{DMatrix, DVector};
use serde::Serialize;
use statrs::distribution::{ChiSquared, ContinuousCDF, Normal};

use super::linalg::min_eigen_ratio;
use super::FitResult;
use crate::error::RegressionError;

/// Relative eigenvalue floor below which a joint-test covariance is
/// treated as singular.
const SINGULAR_RATIO: f64 = 1e-12;

#[derive(Debug, Clone, Copy, PartialEq, Eq, Serialize)]
#[serde(rename_all = "kebab-case")]
pub enum TestKind {
    WaldTwoSided,
    OneSidedNegativity,
}

#[derive(Debug, Clone, PartialEq, Serialize)]
pub struct TestResult {
    pub statistic: f64,
    pub dof: usize,
    pub p_value: f64,
    pub kind: TestKind,
}

impl TestResult {
    /// Vacuous joint test over zero restrictions.
    pub fn empty() -> Self {
        Self {
            statistic: 0.0,
            dof: 0,
            p_value: 1.0,
            kind: TestKind::WaldTwoSided,
        }
    }

    pub fn rejects(&self, level: f64) -> bool {
        self.p_value < level
    }
}

/// Wald statistic `(b - b0)' V^-1 (b - b0)` for the coefficient subset
/// `indices`, chi-square with `|indices|` degrees of freedom.
pub fn wald_joint(fit: &FitResult, indices: &[usize], null: &[f64]) -> Result<TestResult, RegressionError> {
    if indices.is_empty() {
        return Ok(TestResult::empty());
    }
    if null.len() != indices.len() {
        return Err(RegressionError::Dimension(format!(
            "{} null values for {} coefficients",
            null.len(),
            indices.len()
        )));
    }
    let q = indices.len();
    let b = DVector::from_fn(q, |i, _| fit.coefficients[indices[i]] - null[i]);
    let v = DMatrix::from_fn(q, q, |i, j| fit.vcov[(indices[i], indices[j])]);
    if !(min_eigen_ratio(&v) > SINGULAR_RATIO) {
        return Err(RegressionError::DegenerateJointTest);
    }
    let v_inv = v.try_inverse().ok_or(RegressionError::DegenerateJointTest)?;
    let statistic = (b.transpose() * v_inv * &b)[(0, 0)].max(0.0);
    let chi = ChiSquared::new(q as f64).expect("positive degrees of freedom");
    Ok(TestResult {
        statistic,
        dof: q,
        p_value: chi.sf(statistic).clamp(0.0, 1.0),
        kind: TestKind::WaldTwoSided,
    })
}

/// One-sided test of `H0: value >= 0` against `value < 0`; the p-value is
/// `Phi(value / se)`.
pub fn one_sided_negativity(value: f64, se: f64) -> TestResult {
    let t = value / se;
    let normal = Normal::standard();
    TestResult {
        statistic: t,
        dof: 1,
        p_value: normal.cdf(t).clamp(0.0, 1.0),
        kind: TestKind::OneSidedNegativity,
    }
}

/// Value and standard error of `w' b`.
pub fn linear_combination(fit: &FitResult, weights: &[f64]) -> (f64, f64) {
    assert_eq!(weights.len(), fit.coefficients.len(), "weight vector length");
    let w = DVector::from_column_slice(weights);
    let value = weights
        .iter()
        .zip(&fit.coefficients)
        .map(|(a, b)| a * b)
        .sum();
    let var = (w.transpose() * &fit.vcov * &w)[(0, 0)];
    (value, var.max(0.0).sqrt())
}

#[cfg(test)]
mod tests {
    use super::*;
    use crate::regression::ols;

    fn toy() -> FitResult {
        let y = [1.0, 3.0, 2.0, 5.0, 4.0, 7.0];
        let x = DMatrix::from_fn(6, 2, |i, j| if j == 0 { 1.0 } else { i as f64 });
        ols(&y, &x, &["const".into(), "t".into()], None).unwrap()
    }

    #[test]
    fn zero_deviation_gives_zero_statistic() {
        let fit = toy();
        let t = wald_joint(&fit, &[1], &[fit.coefficients[1]]).unwrap();
        assert_eq!(t.statistic, 0.0);
        assert!((t.p_value - 1.0).abs() < 1e-15);
    }

    #[test]
    fn scalar_wald_is_squared_t_ratio() {
        let fit = toy();
        let t = wald_joint(&fit, &[1], &[0.0]).unwrap();
        let ratio = fit.coefficients[1] / fit.se(1);
        assert!((t.statistic - ratio * ratio).abs() < 1e-10 * ratio * ratio);
        assert_eq!(t.dof, 1);
        let normal = Normal::standard();
        assert!((t.p_value - 2.0 * normal.sf(ratio.abs())).abs() < 1e-10);
    }

    #[test]
    fn singular_submatrix_is_degenerate() {
        let y = [2.0; 6];
        let x = DMatrix::from_fn(6, 2, |i, j| if j == 0 { 1.0 } else { i as f64 });
        let fit = ols(&y, &x, &["const".into(), "t".into()], None).unwrap();
        assert_eq!(
            wald_joint(&fit, &[1], &[0.0]).unwrap_err(),
            RegressionError::DegenerateJointTest
        );
    }

    #[test]
    fn one_sided_boundary_is_one_half() {
        let t = one_sided_negativity(0.0, 0.3);
        assert!((t.p_value - 0.5).abs() < 1e-15);
        assert!(one_sided_negativity(-1.0, 0.1).p_value < 1e-6);
    }
}
