//! Householder QR least squares for small dense designs.

use super::StatsError;

/// Relative size below which a diagonal of R is treated as zero.
const RANK_TOL: f64 = 1e-10;

/// Solves min ‖A b − y‖ where `columns` are the columns of A.
///
/// Fails with [`StatsError::Singular`] if A is rank deficient.
pub(crate) fn least_squares(columns: &[Vec<f64>], y: &[f64]) -> Result<Vec<f64>, StatsError> {
    let p = columns.len();
    let n = y.len();
    if columns.iter().any(|c| c.len() != n) {
        return Err(StatsError::LengthMismatch);
    }
    if p > n {
        return Err(StatsError::Singular);
    }
    let mut a: Vec<Vec<f64>> = columns.to_vec();
    let mut qty = y.to_vec();
    let scale: Vec<f64> = a
        .iter()
        .map(|c| c.iter().map(|x| x * x).sum::<f64>().sqrt())
        .collect();

    for j in 0..p {
        let norm = a[j][j..].iter().map(|x| x * x).sum::<f64>().sqrt();
        if scale[j] == 0.0 || norm <= RANK_TOL * scale[j] {
            return Err(StatsError::Singular);
        }
        let alpha = if a[j][j] > 0.0 { -norm } else { norm };
        let mut v: Vec<f64> = a[j][j..].to_vec();
        v[0] -= alpha;
        let vnorm2: f64 = v.iter().map(|x| x * x).sum();
        if vnorm2 > 0.0 {
            let reflect = |col: &mut [f64]| {
                let s: f64 = v.iter().zip(col.iter()).map(|(a, b)| a * b).sum::<f64>();
                let f = 2.0 * s / vnorm2;
                for (c, vi) in col.iter_mut().zip(&v) {
                    *c -= f * vi;
                }
            };
            for col in a.iter_mut().skip(j) {
                reflect(&mut col[j..]);
            }
            reflect(&mut qty[j..]);
        }
    }

    let mut b = vec![0.0; p];
    for i in (0..p).rev() {
        let mut s = qty[i];
        for k in (i + 1)..p {
            s -= a[k][i] * b[k];
        }
        b[i] = s / a[i][i];
    }
    Ok(b)
}

/// True if the columns are linearly independent under the QR rank test.
pub(crate) fn is_full_rank(columns: &[Vec<f64>]) -> bool {
    let n = columns.first().map(|c| c.len()).unwrap_or(0);
    least_squares(columns, &vec![0.0; n]).is_ok()
}
