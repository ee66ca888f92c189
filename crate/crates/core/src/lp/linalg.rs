//! Small dense linear-algebra helpers over `nalgebra`.

use nalgebra::{DMatrix, DVector};

/// Solves the square system `a x = b`, rejecting numerically singular matrices.
pub fn solve_square(a: &DMatrix<f64>, b: &[f64]) -> Option<Vec<f64>> {
    let n = a.nrows();
    if n != a.ncols() || n != b.len() {
        return None;
    }
    if n == 0 {
        return Some(Vec::new());
    }
    let lu = a.clone().lu();
    let x = lu.solve(&DVector::from_column_slice(b))?;
    if x.iter().all(|v| v.is_finite()) {
        Some(x.iter().copied().collect())
    } else {
        None
    }
}

/// Ratio of the smallest to the largest singular value (0 for empty or zero matrices).
pub fn inverse_condition(a: &DMatrix<f64>) -> f64 {
    if a.nrows() == 0 || a.ncols() == 0 {
        return 0.0;
    }
    let sv = a.clone().singular_values();
    let max = sv.max();
    if max <= 0.0 {
        return 0.0;
    }
    sv.min() / max
}

/// Greedily selects a maximal set of linearly independent rows, in order.
pub fn independent_rows(rows: &[Vec<f64>], tol: f64) -> Vec<usize> {
    let mut basis: Vec<Vec<f64>> = Vec::new();
    let mut chosen = Vec::new();
    for (i, row) in rows.iter().enumerate() {
        // Gram-Schmidt residual against the rows kept so far.
        let mut r = row.clone();
        for _ in 0..2 {
            for b in &basis {
                let dot: f64 = r.iter().zip(b).map(|(x, y)| x * y).sum();
                for (x, y) in r.iter_mut().zip(b) {
                    *x -= dot * y;
                }
            }
        }
        let norm = r.iter().map(|v| v * v).sum::<f64>().sqrt();
        let scale = row.iter().map(|v| v * v).sum::<f64>().sqrt().max(1.0);
        if norm > tol * scale {
            r.iter_mut().for_each(|v| *v /= norm);
            basis.push(r);
            chosen.push(i);
        }
    }
    chosen
}
