use nalgebra::{DMatrix, SymmetricEigen};

use crate::error::RegressionError;

/// A column is collinear when its pivot falls below this multiple of the
/// largest pivot.
pub const PIVOT_TOLERANCE: f64 = 1e-10;

fn pivots(x: &DMatrix<f64>) -> Vec<f64> {
    let qr = x.clone().col_piv_qr();
    let r = qr.r();
    (0..r.nrows().min(r.ncols())).map(|i| r[(i, i)].abs()).collect()
}

fn rank_with(x: &DMatrix<f64>, tol: f64) -> usize {
    pivots(x).iter().filter(|&&p| p > tol).count()
}

/// Checks full column rank with a column-pivoted QR. On failure names the
/// first column (in the given order) that lies in the span of the
/// columns before it.
pub fn check_rank(x: &DMatrix<f64>, names: &[String]) -> Result<(), RegressionError> {
    let k = x.ncols();
    if k == 0 {
        return Ok(());
    }
    if x.nrows() < k {
        return Err(RegressionError::TooFewRows { n: x.nrows(), k });
    }
    let p = pivots(x);
    let largest = p.iter().cloned().fold(0.0, f64::max);
    let tol = PIVOT_TOLERANCE * largest;
    if largest > 0.0 && p.iter().filter(|&&v| v > tol).count() == k {
        return Ok(());
    }
    let column = (0..k)
        .find(|&j| {
            let sub = x.columns(0, j + 1).into_owned();
            rank_with(&sub, tol) < j + 1 || largest == 0.0
        })
        .unwrap_or(k - 1);
    Err(RegressionError::RankDeficient {
        column: names
            .get(column)
            .cloned()
            .unwrap_or_else(|| format!("x{column}")),
    })
}

/// Smallest over largest eigenvalue of a symmetric matrix, or 0 when the
/// matrix is zero.
pub fn min_eigen_ratio(m: &DMatrix<f64>) -> f64 {
    let eig = SymmetricEigen::new(m.clone());
    let max = eig.eigenvalues.iter().cloned().fold(f64::NEG_INFINITY, f64::max);
    let min = eig.eigenvalues.iter().cloned().fold(f64::INFINITY, f64::min);
    if max <= 0.0 {
        0.0
    } else {
        min / max
    }
}

#[cfg(test)]
mod tests {
    use super::*;

    fn names(k: usize) -> Vec<String> {
        (0..k).map(|j| format!("c{j}")).collect()
    }

    #[test]
    fn full_rank_passes() {
        let x = DMatrix::from_row_slice(4, 2, &[1.0, 0.0, 1.0, 1.0, 1.0, 2.0, 1.0, 5.0]);
        check_rank(&x, &names(2)).unwrap();
    }

    #[test]
    fn names_the_duplicated_column() {
        let x = DMatrix::from_row_slice(
            4,
            3,
            &[1.0, 0.0, 0.0, 1.0, 1.0, 2.0, 1.0, 2.0, 4.0, 1.0, 5.0, 10.0],
        );
        match check_rank(&x, &names(3)) {
            Err(RegressionError::RankDeficient { column }) => assert_eq!(column, "c2"),
            other => panic!("{other:?}"),
        }
    }

    #[test]
    fn constant_column_collides_with_intercept() {
        let x = DMatrix::from_row_slice(3, 2, &[1.0, 3.0, 1.0, 3.0, 1.0, 3.0]);
        assert!(matches!(
            check_rank(&x, &names(2)),
            Err(RegressionError::RankDeficient { column }) if column == "c1"
        ));
    }
}
