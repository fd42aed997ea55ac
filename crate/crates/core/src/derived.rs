//! Row-local treatment summaries and composite regressands.

use crate::data::ObservationTable;

/// Every derived column used by the estimands, bounds and diagnostics.
///
/// All columns are deterministic row-local functions of `(d1, d2, y)`.
#[derive(Debug, Clone, PartialEq)]
pub struct DerivedColumns {
    /// `D1 * D2`
    pub d_and: Vec<f64>,
    /// `D1 + D2 - D1 * D2`
    pub d_or: Vec<f64>,
    /// `D1 + D2`
    pub d_sum: Vec<f64>,
    /// `D_or - D2`, in {0, 1}
    pub g_or: Vec<f64>,
    /// `D_and - D2`, in {-1, 0}
    pub g_and: Vec<f64>,
    pub gy_or: Vec<f64>,
    pub gy_and: Vec<f64>,
    pub dand_y: Vec<f64>,
    /// `(1 - D1)(1 - D2) Y`
    pub untreated_y: Vec<f64>,
    /// `(1 - D1 - D2 + 2 D1 D2) Y`
    pub kernel_y: Vec<f64>,
}

impl DerivedColumns {
    pub fn from_table(table: &ObservationTable) -> Self {
        let n = table.n();
        let mut out = Self {
            d_and: Vec::with_capacity(n),
            d_or: Vec::with_capacity(n),
            d_sum: Vec::with_capacity(n),
            g_or: Vec::with_capacity(n),
            g_and: Vec::with_capacity(n),
            gy_or: Vec::with_capacity(n),
            gy_and: Vec::with_capacity(n),
            dand_y: Vec::with_capacity(n),
            untreated_y: Vec::with_capacity(n),
            kernel_y: Vec::with_capacity(n),
        };
        for ((&a, &b), &y) in table.d1().iter().zip(table.d2()).zip(table.y()) {
            out.push_row(f64::from(a), f64::from(b), y);
        }
        out
    }

    fn push_row(&mut self, d1: f64, d2: f64, y: f64) {
        let d_and = d1 * d2;
        let d_or = d1 + d2 - d1 * d2;
        let g_or = d_or - d2;
        let g_and = d_and - d2;
        self.d_and.push(d_and);
        self.d_or.push(d_or);
        self.d_sum.push(d1 + d2);
        self.g_or.push(g_or);
        self.g_and.push(g_and);
        self.gy_or.push(g_or * y);
        self.gy_and.push(g_and * y);
        self.dand_y.push(d_and * y);
        self.untreated_y.push((1.0 - d1) * (1.0 - d2) * y);
        self.kernel_y.push((1.0 - d1 - d2 + 2.0 * d1 * d2) * y);
    }

    pub fn len(&self) -> usize {
        self.d_and.len()
    }

    pub fn is_empty(&self) -> bool {
        self.d_and.is_empty()
    }

    /// `(name, is_constant)` for every derived column.
    pub fn constant_columns(&self) -> Vec<(&'static str, bool)> {
        self.named()
            .into_iter()
            .map(|(name, col)| (name, is_constant(col)))
            .collect()
    }

    pub fn named(&self) -> [(&'static str, &[f64]); 10] {
        [
            ("d_and", &self.d_and),
            ("d_or", &self.d_or),
            ("d_sum", &self.d_sum),
            ("g_or", &self.g_or),
            ("g_and", &self.g_and),
            ("gy_or", &self.gy_or),
            ("gy_and", &self.gy_and),
            ("dand_y", &self.dand_y),
            ("untreated_y", &self.untreated_y),
            ("kernel_y", &self.kernel_y),
        ]
    }
}

pub(crate) fn is_constant(col: &[f64]) -> bool {
    col.windows(2).all(|w| w[0] == w[1])
}
