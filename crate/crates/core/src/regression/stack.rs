use nalgebra::{DMatrix, DVector};

use super::fit::{fit_system, Equation, VcovChoice};
use super::{Clusters, FitResult};
use crate::error::RegressionError;

/// Several equations on the same observations, estimated jointly as if
/// the data were duplicated once per equation.
///
/// The duplicated copies of a row share that row's cluster (or, without
/// clusters, form their own cluster), which yields the cross-equation
/// covariance needed for linear combinations of coefficients.
#[derive(Debug, Clone)]
pub struct StackedSystem {
    pub equations: Vec<Equation>,
    pub cluster: Option<Clusters>,
}

/// Builds a stacked system, checking that all equations share one row index.
pub fn stack(equations: Vec<Equation>, cluster: Option<Clusters>) -> Result<StackedSystem, RegressionError> {
    let n = equations.first().ok_or(RegressionError::EmptySystem)?.n();
    if let Some(bad) = equations.iter().find(|e| e.n() != n) {
        return Err(RegressionError::Dimension(format!(
            "mismatched row counts across stacked equations: {} vs {}",
            n,
            bad.n()
        )));
    }
    if let Some(c) = &cluster {
        if c.len() != n {
            return Err(RegressionError::Dimension(format!(
                "{} cluster labels for {} rows",
                c.len(),
                n
            )));
        }
    }
    Ok(StackedSystem { equations, cluster })
}

/// Joint fit with the cluster sandwich over duplicated rows.
pub fn fit_stacked(system: &StackedSystem) -> Result<FitResult, RegressionError> {
    let choice = system
        .cluster
        .as_ref()
        .map_or(VcovChoice::Robust, VcovChoice::Cluster);
    fit_system(&system.equations, choice)
}

impl StackedSystem {
    pub fn n(&self) -> usize {
        self.equations[0].n()
    }

    /// Original row of every stacked row.
    pub fn duplication_map(&self) -> Vec<usize> {
        let n = self.n();
        (0..self.equations.len()).flat_map(|_| 0..n).collect()
    }

    /// Cluster code of every stacked row: the duplicated cluster variable,
    /// or the original row when the system is unclustered.
    pub fn stacked_clusters(&self) -> Vec<usize> {
        let origin = self.duplication_map();
        match &self.cluster {
            Some(c) => origin.iter().map(|&i| c.ids()[i]).collect(),
            None => origin,
        }
    }

    /// Materialised block-diagonal regressors, instruments and response.
    pub fn stacked_design(&self) -> (DMatrix<f64>, DMatrix<f64>, DVector<f64>) {
        let n = self.n();
        let total_k: usize = self.equations.iter().map(Equation::k).sum();
        let rows = n * self.equations.len();
        let mut x = DMatrix::zeros(rows, total_k);
        let mut z = DMatrix::zeros(rows, total_k);
        let mut y = DVector::zeros(rows);
        let mut col = 0;
        for (e, eq) in self.equations.iter().enumerate() {
            let k = eq.k();
            x.view_mut((e * n, col), (n, k)).copy_from(&eq.regressors);
            let inst = eq.instruments.as_ref().unwrap_or(&eq.regressors);
            z.view_mut((e * n, col), (n, k)).copy_from(inst);
            y.rows_mut(e * n, n).copy_from_slice(&eq.response);
            col += k;
        }
        (x, z, y)
    }
}
