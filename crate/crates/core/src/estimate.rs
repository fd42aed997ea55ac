use serde::Serialize;

use crate::regression::FitResult;

/// Two-sided 95% normal critical value.
pub const Z_95: f64 = 1.959_963_984_540_054;

/// A point estimate with its standard error and 95% interval.
///
/// `se` is `None` when the regressand was exactly constant, in which case
/// the interval is undefined as well.
#[derive(Debug, Clone, PartialEq, Serialize)]
pub struct EstimateWithSE {
    pub value: f64,
    pub se: Option<f64>,
    pub ci_low: Option<f64>,
    pub ci_high: Option<f64>,
    pub n: usize,
    pub cluster_count: Option<usize>,
    pub definition: String,
}

impl EstimateWithSE {
    pub fn new(value: f64, se: Option<f64>, n: usize, cluster_count: Option<usize>, definition: impl Into<String>) -> Self {
        let se = se.filter(|s| s.is_finite());
        Self {
            value,
            se,
            ci_low: se.map(|s| value - Z_95 * s),
            ci_high: se.map(|s| value + Z_95 * s),
            n,
            cluster_count,
            definition: definition.into(),
        }
    }

    /// Coefficient `j` of equation `eq` of a fit. Coefficients of an
    /// equation whose response was constant get an undefined SE.
    pub fn from_fit(fit: &FitResult, eq: usize, j: usize, definition: impl Into<String>) -> Self {
        let i = fit.index(eq, j);
        let se = (!fit.constant_response[eq]).then(|| fit.se(i));
        Self::new(fit.coefficients[i], se, fit.n, fit.cluster_count, definition)
    }

    pub fn t_ratio(&self) -> Option<f64> {
        self.se.filter(|&s| s > 0.0).map(|s| self.value / s)
    }
}
