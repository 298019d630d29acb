use ndarray::Array2;

/// Outcome of a failed elimination.
#[derive(Debug, Clone, Copy, PartialEq)]
pub struct Singular {
    pub column: usize,
}

/// Solves `A X = B` by Gaussian elimination with partial pivoting.
///
/// A pivot is treated as zero when its magnitude is at most
/// `n * f64::EPSILON * max|A|`.
pub fn solve(a: &Array2<f64>, b: &Array2<f64>) -> Result<Array2<f64>, Singular> {
    let n = a.nrows();
    assert_eq!(a.ncols(), n, "coefficient matrix must be square");
    assert_eq!(b.nrows(), n, "right-hand side row count mismatch");
    let m = b.ncols();

    let mut lhs: Vec<f64> = a.iter().copied().collect();
    let mut rhs: Vec<f64> = b.iter().copied().collect();
    let scale = lhs.iter().fold(0.0f64, |acc, v| acc.max(v.abs()));
    let tiny = n as f64 * f64::EPSILON * scale;

    for col in 0..n {
        let pivot_row = (col..n)
            .max_by(|&r, &s| lhs[r * n + col].abs().total_cmp(&lhs[s * n + col].abs()))
            .unwrap_or(col);
        let pivot = lhs[pivot_row * n + col];
        if pivot.abs() <= tiny || !pivot.is_finite() {
            return Err(Singular { column: col });
        }
        if pivot_row != col {
            for k in 0..n {
                lhs.swap(col * n + k, pivot_row * n + k);
            }
            for k in 0..m {
                rhs.swap(col * m + k, pivot_row * m + k);
            }
        }
        let (top, bottom) = lhs.split_at_mut((col + 1) * n);
        let pivot_lhs = &top[col * n..];
        let (rtop, rbottom) = rhs.split_at_mut((col + 1) * m);
        let pivot_rhs = &rtop[col * m..];
        for (row_lhs, row_rhs) in bottom.chunks_exact_mut(n).zip(rbottom.chunks_exact_mut(m)) {
            let factor = row_lhs[col] / pivot;
            if factor == 0.0 {
                continue;
            }
            for (x, p) in row_lhs[col..].iter_mut().zip(&pivot_lhs[col..]) {
                *x -= factor * p;
            }
            for (x, p) in row_rhs.iter_mut().zip(pivot_rhs) {
                *x -= factor * p;
            }
        }
    }

    // back substitution
    let mut x = vec![0.0; n * m];
    for row in (0..n).rev() {
        let diag = lhs[row * n + row];
        for k in 0..m {
            let mut acc = rhs[row * m + k];
            for j in row + 1..n {
                acc -= lhs[row * n + j] * x[j * m + k];
            }
            x[row * m + k] = acc / diag;
        }
    }
    Ok(Array2::from_shape_vec((n, m), x).expect("shape matches buffer"))
}

pub fn frobenius(a: &Array2<f64>) -> f64 {
    a.iter().map(|v| v * v).sum::<f64>().sqrt()
}

#[cfg(test)]
mod tests {
    use super::*;
    use ndarray::array;

    #[test]
    fn solves_small_system_needing_pivot() {
        let a = array![[0.0, 2.0], [3.0, 1.0]];
        let b = array![[4.0], [5.0]];
        let x = solve(&a, &b).unwrap();
        assert!((x[[0, 0]] - 1.0).abs() < 1e-15);
        assert!((x[[1, 0]] - 2.0).abs() < 1e-15);
    }

    #[test]
    fn multiple_right_hand_sides() {
        let a = array![[4.0, 1.0, 0.0], [1.0, 3.0, 1.0], [0.0, 1.0, 2.0]];
        let b = array![[1.0, 0.0], [2.0, 1.0], [3.0, -1.0]];
        let x = solve(&a, &b).unwrap();
        let r = a.dot(&x) - &b;
        assert!(frobenius(&r) < 1e-12);
    }

    #[test]
    fn detects_singular() {
        let a = array![[1.0, 2.0], [2.0, 4.0]];
        let b = array![[1.0], [1.0]];
        assert_eq!(solve(&a, &b), Err(Singular { column: 1 }));
    }
}
