use nalgebra::{DMatrix, DVector};

use super::linalg::check_rank;
use super::{Clusters, CovarianceKind, FitResult};
use crate::derived::is_constant;
use crate::error::RegressionError;

/// Smallest first-stage magnitude accepted by [`tsls`].
pub const RELEVANCE_TOLERANCE: f64 = 1e-10;

/// One linear equation: response, regressors and (for IV) instruments of
/// the same width. Without instruments the regressors instrument
/// themselves, which is OLS.
#[derive(Debug, Clone)]
pub struct Equation {
    pub response: Vec<f64>,
    pub regressors: DMatrix<f64>,
    pub instruments: Option<DMatrix<f64>>,
    pub names: Vec<String>,
}

fn design(columns: &[&[f64]]) -> DMatrix<f64> {
    let n = columns.first().map_or(0, |c| c.len());
    DMatrix::from_fn(n, columns.len(), |i, j| columns[j][i])
}

impl Equation {
    /// OLS equation with the given regressor columns.
    pub fn ols(response: Vec<f64>, regressors: DMatrix<f64>, names: Vec<String>) -> Self {
        Self {
            response,
            regressors,
            instruments: None,
            names,
        }
    }

    /// `response` on `[1, regressor, controls...]`.
    pub fn on_intercept_and(
        response: Vec<f64>,
        regressor: &[f64],
        regressor_name: &str,
        controls: &[Vec<f64>],
        control_names: &[String],
    ) -> Self {
        let ones = vec![1.0; regressor.len()];
        let mut cols: Vec<&[f64]> = vec![&ones, regressor];
        cols.extend(controls.iter().map(Vec::as_slice));
        Self::ols(response, design(&cols), Self::names_for(regressor_name, control_names))
    }

    /// Just-identified IV: `response` on `[1, endogenous, controls...]`
    /// instrumented by `[1, instrument, controls...]`.
    pub fn iv(
        response: Vec<f64>,
        endogenous: &[f64],
        endogenous_name: &str,
        instrument: &[f64],
        controls: &[Vec<f64>],
        control_names: &[String],
    ) -> Self {
        let ones = vec![1.0; endogenous.len()];
        let mut x: Vec<&[f64]> = vec![&ones, endogenous];
        let mut z: Vec<&[f64]> = vec![&ones, instrument];
        x.extend(controls.iter().map(Vec::as_slice));
        z.extend(controls.iter().map(Vec::as_slice));
        Self {
            response,
            regressors: design(&x),
            instruments: Some(design(&z)),
            names: Self::names_for(endogenous_name, control_names),
        }
    }

    fn names_for(main: &str, controls: &[String]) -> Vec<String> {
        let mut names = vec!["const".to_string(), main.to_string()];
        names.extend(controls.iter().cloned());
        names
    }

    pub fn n(&self) -> usize {
        self.response.len()
    }

    pub fn k(&self) -> usize {
        self.regressors.ncols()
    }

    fn instruments(&self) -> &DMatrix<f64> {
        self.instruments.as_ref().unwrap_or(&self.regressors)
    }

    fn intercept_column(&self) -> Option<usize> {
        let x = &self.regressors;
        (0..x.ncols()).find(|&j| x.column(j).iter().all(|&v| v == 1.0))
    }
}

#[derive(Debug, Clone, Copy)]
pub(crate) enum VcovChoice<'a> {
    Classical,
    Robust,
    Cluster(&'a Clusters),
}

struct EquationFit {
    beta: DVector<f64>,
    residuals: DVector<f64>,
    bread: DMatrix<f64>,
    constant: bool,
}

fn fit_equation(eq: &Equation) -> Result<EquationFit, RegressionError> {
    let x = &eq.regressors;
    let z = eq.instruments();
    if z.ncols() != x.ncols() || z.nrows() != x.nrows() {
        return Err(RegressionError::Dimension(
            "instruments must match the regressors in shape".into(),
        ));
    }
    if x.nrows() != eq.response.len() {
        return Err(RegressionError::Dimension(format!(
            "{} responses for {} design rows",
            eq.response.len(),
            x.nrows()
        )));
    }
    check_rank(x, &eq.names)?;
    if eq.instruments.is_some() {
        let inst_names: Vec<String> = eq.names.iter().map(|n| format!("instrument for {n}")).collect();
        check_rank(z, &inst_names)?;
    }
    let zx = z.tr_mul(x);
    let bread = zx
        .clone()
        .try_inverse()
        .ok_or_else(|| RegressionError::Relevance { first_stage: 0.0 })?;
    let y = DVector::from_column_slice(&eq.response);
    let constant = is_constant(&eq.response);
    let beta = match (constant, eq.intercept_column()) {
        (true, Some(j)) => {
            let mut b = DVector::zeros(x.ncols());
            b[j] = eq.response.first().copied().unwrap_or(0.0);
            b
        }
        _ => &bread * z.tr_mul(&y),
    };
    let residuals = if constant && eq.intercept_column().is_some() {
        DVector::zeros(y.len())
    } else {
        &y - x * &beta
    };
    Ok(EquationFit {
        beta,
        residuals,
        bread,
        constant,
    })
}

/// Fits every equation on the same rows and returns the joint
/// coefficient vector with a block sandwich covariance.
///
/// Without clusters a multi-equation system treats the copies of each
/// original row as one dependence unit.
pub(crate) fn fit_system(
    eqs: &[Equation],
    choice: VcovChoice<'_>,
) -> Result<FitResult, RegressionError> {
    let first = eqs.first().ok_or(RegressionError::EmptySystem)?;
    let n = first.n();
    if let Some(bad) = eqs.iter().find(|e| e.n() != n) {
        return Err(RegressionError::Dimension(format!(
            "equations have {} and {} rows",
            n,
            bad.n()
        )));
    }
    let fits = eqs.iter().map(fit_equation).collect::<Result<Vec<_>, _>>()?;
    let mut offsets = Vec::with_capacity(eqs.len());
    let mut total_k = 0;
    for e in eqs {
        offsets.push(total_k);
        total_k += e.k();
    }
    let big_n = n * eqs.len();
    if big_n <= total_k {
        return Err(RegressionError::TooFewRows { n: big_n, k: total_k });
    }

    let mut bread = DMatrix::zeros(total_k, total_k);
    for (f, &off) in fits.iter().zip(&offsets) {
        let k = f.beta.len();
        bread.view_mut((off, off), (k, k)).copy_from(&f.bread);
    }

    let owned_singletons;
    let (meat, factor, kind, clusters) = match choice {
        VcovChoice::Classical => {
            if eqs.len() != 1 || first.instruments.is_some() {
                return Err(RegressionError::Dimension(
                    "classical covariance is only defined for a single OLS equation".into(),
                ));
            }
            let ssr = fits[0].residuals.norm_squared();
            let s2 = ssr / (n - total_k) as f64;
            // bread is (X'X)^-1, so B (X'X) B' s^2 = s^2 (X'X)^-1
            let xtx = first.regressors.tr_mul(&first.regressors);
            (xtx, s2, CovarianceKind::Classical, None)
        }
        VcovChoice::Robust if eqs.len() == 1 => {
            let scores = score_rows(first.instruments(), &fits[0].residuals);
            let meat = scores.tr_mul(&scores);
            let factor = n as f64 / (n - total_k) as f64;
            (meat, factor, CovarianceKind::Hc1, None)
        }
        VcovChoice::Robust | VcovChoice::Cluster(_) => {
            let clusters = match choice {
                VcovChoice::Cluster(c) => c,
                _ => {
                    owned_singletons = Clusters::singletons(n);
                    &owned_singletons
                }
            };
            if clusters.len() != n {
                return Err(RegressionError::Dimension(format!(
                    "{} cluster labels for {} rows",
                    clusters.len(),
                    n
                )));
            }
            let g = clusters.count();
            if g < 2 {
                return Err(RegressionError::TooFewClusters(g));
            }
            let mut sums = DMatrix::zeros(g, total_k);
            for ((eq, f), &off) in eqs.iter().zip(&fits).zip(&offsets) {
                let zmat = eq.instruments();
                for (i, &cid) in clusters.ids().iter().enumerate() {
                    let e = f.residuals[i];
                    if e == 0.0 {
                        continue;
                    }
                    for j in 0..eq.k() {
                        sums[(cid, off + j)] += zmat[(i, j)] * e;
                    }
                }
            }
            let meat = sums.tr_mul(&sums);
            let factor = (g as f64 / (g - 1) as f64)
                * ((big_n - 1) as f64 / (big_n - total_k) as f64);
            (meat, factor, CovarianceKind::Cluster, Some(g))
        }
    };

    let vcov = &bread * meat * bread.transpose() * factor;
    let vcov = (&vcov + vcov.transpose()) * 0.5;

    let mut coefficients = Vec::with_capacity(total_k);
    let mut names = Vec::with_capacity(total_k);
    for (e, f) in eqs.iter().zip(&fits) {
        coefficients.extend(f.beta.iter().copied());
        names.extend(e.names.iter().cloned());
    }
    Ok(FitResult {
        coefficients,
        vcov,
        names,
        n,
        k: total_k,
        cluster_count: clusters,
        dof: big_n - total_k,
        covariance_kind: kind,
        offsets,
        constant_response: fits.iter().map(|f| f.constant).collect(),
    })
}

fn score_rows(z: &DMatrix<f64>, e: &DVector<f64>) -> DMatrix<f64> {
    let mut s = z.clone();
    for (mut row, &ei) in s.row_iter_mut().zip(e.iter()) {
        row *= ei;
    }
    s
}

/// OLS of `y` on `x` with HC1 covariance, or the cluster sandwich with
/// factor `G/(G-1) * (N-1)/(N-K)` when `cluster` is given.
pub fn ols(
    y: &[f64],
    x: &DMatrix<f64>,
    names: &[String],
    cluster: Option<&Clusters>,
) -> Result<FitResult, RegressionError> {
    let eq = Equation::ols(y.to_vec(), x.clone(), names.to_vec());
    let choice = cluster.map_or(VcovChoice::Robust, VcovChoice::Cluster);
    fit_system(std::slice::from_ref(&eq), choice)
}

/// OLS with the homoskedastic covariance `s^2 (X'X)^-1`.
pub fn ols_classical(y: &[f64], x: &DMatrix<f64>, names: &[String]) -> Result<FitResult, RegressionError> {
    let eq = Equation::ols(y.to_vec(), x.clone(), names.to_vec());
    fit_system(std::slice::from_ref(&eq), VcovChoice::Classical)
}

/// OLS point estimates only.
pub fn ols_coefficients(y: &[f64], x: &DMatrix<f64>, names: &[String]) -> Result<Vec<f64>, RegressionError> {
    let eq = Equation::ols(y.to_vec(), x.clone(), names.to_vec());
    fit_equation(&eq).map(|f| f.beta.iter().copied().collect())
}

/// Two-stage least squares of `y` on `[1, d, controls]` instrumented by
/// `[1, z, controls]`. The coefficient on `d` sits at index 1.
///
/// Fails with [`RegressionError::Relevance`] when the first-stage
/// coefficient of `d` on `z` is within 1e-10 of zero.
pub fn tsls(
    y: &[f64],
    d: &[f64],
    z: &[f64],
    controls: &[Vec<f64>],
    control_names: &[String],
    cluster: Option<&Clusters>,
) -> Result<FitResult, RegressionError> {
    let first = Equation::on_intercept_and(d.to_vec(), z, "z", controls, control_names);
    let pi = fit_equation(&first)?.beta[1];
    if pi.abs() <= RELEVANCE_TOLERANCE || !pi.is_finite() {
        return Err(RegressionError::Relevance { first_stage: pi });
    }
    let eq = Equation::iv(y.to_vec(), d, "d", z, controls, control_names);
    let choice = cluster.map_or(VcovChoice::Robust, VcovChoice::Cluster);
    fit_system(std::slice::from_ref(&eq), choice)
}

#[cfg(test)]
mod tests {
    use super::*;

    const Z: [f64; 8] = [1.0, 1.0, 1.0, 1.0, 0.0, 0.0, 0.0, 0.0];
    const D1: [f64; 8] = [1.0, 1.0, 1.0, 0.0, 0.0, 0.0, 0.0, 0.0];
    const D2: [f64; 8] = [1.0, 0.0, 1.0, 0.0, 0.0, 0.0, 1.0, 0.0];
    const Y: [f64; 8] = [3.0, 1.0, 3.0, 0.0, 0.0, 1.0, 2.0, 0.0];

    fn names() -> Vec<String> {
        vec!["const".into(), "z".into()]
    }

    fn on_z() -> DMatrix<f64> {
        design(&[&[1.0; 8], &Z])
    }

    #[test]
    fn fix8_reduced_form_is_difference_in_means() {
        let fit = ols(&Y, &on_z(), &names(), None).unwrap();
        assert!((fit.coefficients[1] - 1.0).abs() < 1e-12);
        assert_eq!(fit.covariance_kind, CovarianceKind::Hc1);
        // frozen from tests/oracles/fix8_stacked.py
        assert!((fit.se(1) - 0.8897565210026092).abs() < 1e-12);
    }

    #[test]
    fn fix8_g_or_first_stage() {
        let g_or: Vec<f64> = D1
            .iter()
            .zip(&D2)
            .map(|(a, b)| a + b - a * b - b)
            .collect();
        let fit = ols(&g_or, &on_z(), &names(), None).unwrap();
        assert!((fit.coefficients[1] - 0.25).abs() < 1e-12);
    }

    #[test]
    fn intercept_only_is_mean_with_hc1_se() {
        let y = [1.0, 4.0, 2.0, 7.0, 6.0];
        let x = DMatrix::from_element(5, 1, 1.0);
        let fit = ols(&y, &x, &["const".into()], None).unwrap();
        let mean = 4.0;
        assert!((fit.coefficients[0] - mean).abs() < 1e-12);
        let sd2 = y.iter().map(|v| (v - mean).powi(2)).sum::<f64>() / 4.0;
        // HC1 with k = 1 gives exactly the classical sd/sqrt(n)
        assert!((fit.se(0) - (sd2 / 5.0).sqrt()).abs() < 1e-12);
        let classical = ols_classical(&y, &x, &["const".into()]).unwrap();
        assert!((classical.se(0) - fit.se(0)).abs() < 1e-12);
    }

    #[test]
    fn tsls_on_fix8() {
        let sum: Vec<f64> = D1.iter().zip(&D2).map(|(a, b)| a + b).collect();
        for (d, expected) in [(&D1[..], 4.0 / 3.0), (&sum[..], 1.0), (&D2[..], 4.0)] {
            let fit = tsls(&Y, d, &Z, &[], &[], None).unwrap();
            assert!((fit.coefficients[1] - expected).abs() < 1e-10 * expected);
        }
    }

    #[test]
    fn zero_first_stage_is_a_relevance_failure() {
        let d = [1.0, 0.0, 1.0, 0.0, 1.0, 0.0, 1.0, 0.0];
        assert!(matches!(
            tsls(&Y, &d, &Z, &[], &[], None),
            Err(RegressionError::Relevance { .. })
        ));
    }

    #[test]
    fn constant_response_gives_zero_slope_and_zero_variance() {
        let y = [0.0; 8];
        let fit = ols(&y, &on_z(), &names(), None).unwrap();
        assert_eq!(fit.coefficients, vec![0.0, 0.0]);
        assert_eq!(fit.constant_response, vec![true]);
        assert_eq!(fit.se(1), 0.0);
    }

    #[test]
    fn collinear_design_names_column() {
        let x = design(&[&[1.0; 8], &Z, &Z]);
        let n = vec!["const".into(), "z".into(), "z_copy".into()];
        assert_eq!(
            ols(&Y, &x, &n, None).unwrap_err(),
            RegressionError::RankDeficient {
                column: "z_copy".into()
            }
        );
    }

    #[test]
    fn mismatched_rows_are_rejected() {
        assert!(matches!(
            ols(&Y[..7], &on_z(), &names(), None),
            Err(RegressionError::Dimension(_))
        ));
    }
}
