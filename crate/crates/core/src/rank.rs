//! Rank-revealing sparse row elimination over the reals.

use crate::sparse::Csr;

/// Default relative pivot threshold.
pub const PIVOT_TOL: f64 = 1e-9;

/// Outcome of a row echelon reduction.
#[derive(Clone, Debug)]
pub struct Echelon {
    pub rank: usize,
    /// Original rows that were not reducible by earlier rows, in order.
    /// They span the row space.
    pub pivot_rows: Vec<usize>,
    /// Leading columns of the echelon form, sorted. These columns of the
    /// input are linearly independent and span its column space.
    pub pivot_cols: Vec<usize>,
}

type SparseRow = Vec<(usize, f64)>;

fn subtract_scaled(row: &SparseRow, f: f64, pivot: &SparseRow, drop_below: f64) -> SparseRow {
    let mut out = Vec::with_capacity(row.len() + pivot.len());
    let (mut a, mut b) = (0, 0);
    while a < row.len() || b < pivot.len() {
        let (col, v) = if b >= pivot.len() || (a < row.len() && row[a].0 < pivot[b].0) {
            a += 1;
            row[a - 1]
        } else if a >= row.len() || pivot[b].0 < row[a].0 {
            b += 1;
            (pivot[b - 1].0, -f * pivot[b - 1].1)
        } else {
            a += 1;
            b += 1;
            (row[a - 1].0, row[a - 1].1 - f * pivot[b - 1].1)
        };
        if v.abs() > drop_below {
            out.push((col, v));
        }
    }
    out
}

/// Row echelon reduction with entries below `rel_tol * max|a_ij|` treated as zero.
pub fn row_echelon<T: crate::sparse::Scalar>(m: &Csr<T>, rel_tol: f64) -> Echelon {
    let m = m.to_f64();
    let scale = m.max_abs();
    let mut pivots: Vec<Option<SparseRow>> = vec![None; m.ncols()];
    let mut pivot_rows = Vec::new();
    if scale == 0.0 {
        return Echelon { rank: 0, pivot_rows, pivot_cols: Vec::new() };
    }
    let tol = rel_tol * scale;
    for i in 0..m.nrows() {
        let mut row: SparseRow = m.row(i).collect();
        loop {
            let Some(&(lead, v)) = row.first() else { break };
            match &pivots[lead] {
                Some(p) => {
                    let f = v / p[0].1;
                    row = subtract_scaled(&row, f, p, tol);
                    // exact cancellation of the leading entry
                    if row.first().map(|e| e.0) == Some(lead) {
                        row.remove(0);
                    }
                }
                None => {
                    pivots[lead] = Some(std::mem::take(&mut row));
                    pivot_rows.push(i);
                    break;
                }
            }
        }
    }
    let pivot_cols: Vec<usize> = (0..m.ncols()).filter(|&j| pivots[j].is_some()).collect();
    Echelon { rank: pivot_cols.len(), pivot_rows, pivot_cols }
}

pub fn rank<T: crate::sparse::Scalar>(m: &Csr<T>) -> usize {
    row_echelon(m, PIVOT_TOL).rank
}

#[cfg(test)]
mod tests {
    use super::*;

    #[test]
    fn dependent_rows_are_skipped() {
        // rows: e1-e0, e2-e1, e2-e0 (dependent), e3
        let m = Csr::from_triplets(
            4,
            4,
            vec![(0, 0, -1i64), (0, 1, 1), (1, 1, -1), (1, 2, 1), (2, 0, -1), (2, 2, 1), (3, 3, 1)],
        );
        let e = row_echelon(&m, PIVOT_TOL);
        assert_eq!(e.rank, 3);
        assert_eq!(e.pivot_rows, vec![0, 1, 3]);
        assert_eq!(e.pivot_cols, vec![0, 1, 3]);
    }

    #[test]
    fn zero_matrix() {
        let m: Csr<f64> = Csr::zeros(3, 2);
        assert_eq!(rank(&m), 0);
    }
}
