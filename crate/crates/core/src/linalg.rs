//! Small dense linear algebra. Systems here never exceed a few dozen
//! unknowns (Galerkin truncations), so partial-pivot elimination is enough.

use crate::error::{CoreError, Result};
use crate::scalar::Scalar;

/// Solve `A x = b` in place for a dense row-major `n x n` matrix.
pub fn solve_dense<T: Scalar>(a: &mut [T], b: &mut [T]) -> Result<()> {
    let n = b.len();
    debug_assert_eq!(a.len(), n * n);
    let mut scale = T::zero();
    for v in a.iter() {
        scale = scale.max(v.abs());
    }
    if scale == T::zero() {
        return Err(CoreError::NearBifurcation("zero jacobian".into()));
    }
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
        if pivot_val <= T::epsilon() * scale * T::lit(16.0) {
            return Err(CoreError::NearBifurcation(format!(
                "pivot {:.3e} below tolerance at column {col}",
                pivot_val.as_f64()
            )));
        }
        if pivot_row != col {
            for j in 0..n {
                a.swap(col * n + j, pivot_row * n + j);
            }
            b.swap(col, pivot_row);
        }
        let inv = T::one() / a[col * n + col];
        for row in (col + 1)..n {
            let factor = a[row * n + col] * inv;
            if factor == T::zero() {
                continue;
            }
            for j in col..n {
                let v = a[col * n + j];
                a[row * n + j] -= factor * v;
            }
            b[row] -= factor * b[col];
        }
    }
    for col in (0..n).rev() {
        let mut acc = b[col];
        for j in (col + 1)..n {
            acc -= a[col * n + j] * b[j];
        }
        b[col] = acc / a[col * n + col];
    }
    Ok(())
}
