//! Dense linear solve for the small Newton systems of the activity estimator.

use crate::num::Scalar;

/// Solves `A x = b` in place by LU factorization with partial pivoting.
///
/// `a` is row-major `n x n` and is destroyed; on success `b` holds the
/// solution. Returns `false` when a pivot falls below the singularity
/// threshold relative to the matrix scale.
pub fn solve_in_place<T: Scalar>(a: &mut [T], b: &mut [T], n: usize) -> bool {
    debug_assert_eq!(a.len(), n * n);
    debug_assert_eq!(b.len(), n);
    let scale = a
        .iter()
        .fold(T::zero(), |acc, &v| acc.max(v.abs()))
        .max(T::one());
    let tiny = scale * T::from_f64(1e-13).unwrap();

    for col in 0..n {
        let mut pivot_row = col;
        let mut pivot_val = a[col * n + col].abs();
        for row in (col + 1)..n {
            let v = a[row * n + col].abs();
            if v > pivot_val {
                pivot_val = v;
                pivot_row = row;
            }
        }
        if pivot_val < tiny || !pivot_val.is_finite() {
            return false;
        }
        if pivot_row != col {
            for k in 0..n {
                a.swap(col * n + k, pivot_row * n + k);
            }
            b.swap(col, pivot_row);
        }
        let inv = T::one() / a[col * n + col];
        for row in (col + 1)..n {
            let factor = a[row * n + col] * inv;
            if factor == T::zero() {
                continue;
            }
            a[row * n + col] = T::zero();
            for k in (col + 1)..n {
                let upd = a[col * n + k] * factor;
                a[row * n + k] = a[row * n + k] - upd;
            }
            b[row] = b[row] - b[col] * factor;
        }
    }
    for col in (0..n).rev() {
        let mut acc = b[col];
        for k in (col + 1)..n {
            acc = acc - a[col * n + k] * b[k];
        }
        b[col] = acc / a[col * n + col];
    }
    true
}

#[cfg(test)]
mod tests {
    use super::*;

    #[test]
    fn solves_known_system() {
        // A = [[4,1,0],[1,3,1],[0,1,2]], x = [1,-2,3]
        let mut a = vec![4.0, 1.0, 0.0, 1.0, 3.0, 1.0, 0.0, 1.0, 2.0];
        let mut b = vec![2.0, -2.0, 4.0];
        assert!(solve_in_place(&mut a, &mut b, 3));
        for (got, want) in b.iter().zip([1.0f64, -2.0, 3.0]) {
            assert!((got - want).abs() < 1e-12);
        }
    }

    #[test]
    fn rejects_singular() {
        let mut a = vec![1.0, 2.0, 2.0, 4.0];
        let mut b = vec![1.0, 2.0];
        assert!(!solve_in_place(&mut a, &mut b, 2));
    }

    #[test]
    fn random_round_trip() {
        // multiply a known x by a random-ish matrix and recover it
        let n = 12;
        let mut a = vec![0.0f64; n * n];
        let mut state = 0x9E3779B97F4A7C15u64;
        let mut next = || {
            state = state.wrapping_mul(6364136223846793005).wrapping_add(1442695040888963407);
            (state >> 11) as f64 / (1u64 << 53) as f64 - 0.5
        };
        for row in 0..n {
            for col in 0..n {
                a[row * n + col] = next();
            }
            a[row * n + row] += 4.0; // keep well conditioned
        }
        let x: Vec<f64> = (0..n).map(|i| (i as f64) - 3.5).collect();
        let mut b = vec![0.0; n];
        for row in 0..n {
            b[row] = (0..n).map(|col| a[row * n + col] * x[col]).sum();
        }
        let mut a2 = a.clone();
        assert!(solve_in_place(&mut a2, &mut b, n));
        for (got, want) in b.iter().zip(&x) {
            assert!((got - want).abs() < 1e-9);
        }
    }
}
