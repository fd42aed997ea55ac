//! Least squares, just-identified two-stage least squares, stacked
//! multi-equation systems, sandwich covariances and Wald tests.
//!
//! Every estimator is a special case of one just-identified IV fit on a
//! block-diagonal system: OLS uses the regressors as their own
//! instruments, and a single-equation fit is a one-block stack.

mod fit;
mod linalg;
mod stack;
mod wald;

use std::collections::HashMap;

use nalgebra::DMatrix;
use serde::Serialize;

pub use fit::{ols, ols_classical, ols_coefficients, tsls, Equation, RELEVANCE_TOLERANCE};
pub use linalg::{check_rank, min_eigen_ratio, PIVOT_TOLERANCE};
pub use stack::{fit_stacked, stack, StackedSystem};
pub use wald::{linear_combination, one_sided_negativity, wald_joint, TestKind, TestResult};

/// Cluster membership as dense integer codes `0..count`.
#[derive(Debug, Clone, PartialEq, Eq)]
pub struct Clusters {
    ids: Vec<usize>,
    count: usize,
}

impl Clusters {
    /// Codes labels in order of first appearance.
    pub fn from_labels<S: AsRef<str>>(labels: &[S]) -> Self {
        let mut codes: HashMap<&str, usize> = HashMap::new();
        let ids = labels
            .iter()
            .map(|l| {
                let next = codes.len();
                *codes.entry(l.as_ref()).or_insert(next)
            })
            .collect();
        Self {
            ids,
            count: codes.len(),
        }
    }

    /// Every row its own cluster.
    pub fn singletons(n: usize) -> Self {
        Self {
            ids: (0..n).collect(),
            count: n,
        }
    }

    pub fn ids(&self) -> &[usize] {
        &self.ids
    }

    pub fn count(&self) -> usize {
        self.count
    }

    pub fn len(&self) -> usize {
        self.ids.len()
    }

    pub fn is_empty(&self) -> bool {
        self.ids.is_empty()
    }
}

#[derive(Debug, Clone, Copy, PartialEq, Eq, Serialize)]
#[serde(rename_all = "lowercase")]
pub enum CovarianceKind {
    Classical,
    Hc1,
    Cluster,
}

impl std::fmt::Display for CovarianceKind {
    fn fmt(&self, f: &mut std::fmt::Formatter<'_>) -> std::fmt::Result {
        f.write_str(match self {
            CovarianceKind::Classical => "classical",
            CovarianceKind::Hc1 => "hc1",
            CovarianceKind::Cluster => "cluster",
        })
    }
}

/// Coefficients and covariance of a (possibly stacked) linear fit.
#[derive(Debug, Clone)]
pub struct FitResult {
    pub coefficients: Vec<f64>,
    pub vcov: DMatrix<f64>,
    pub names: Vec<String>,
    /// Rows per equation (original observations).
    pub n: usize,
    pub k: usize,
    pub cluster_count: Option<usize>,
    pub dof: usize,
    pub covariance_kind: CovarianceKind,
    /// Coefficient offset of each equation in the joint vector.
    pub offsets: Vec<usize>,
    /// Per equation: the response was exactly constant.
    pub constant_response: Vec<bool>,
}

impl FitResult {
    pub fn se(&self, i: usize) -> f64 {
        self.vcov[(i, i)].max(0.0).sqrt()
    }

    /// Index of coefficient `j` of equation `eq` in the joint vector.
    pub fn index(&self, eq: usize, j: usize) -> usize {
        self.offsets[eq] + j
    }

    pub fn equations(&self) -> usize {
        self.offsets.len()
    }
}
