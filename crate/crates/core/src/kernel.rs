//! Exponential convolution kernels.
//!
//! The linear part of every equation in this crate is diagonal, so Duhamel
//! integrals reduce to scalar convolutions `∫ e^{-b(t-τ)} g(τ) dτ`. The
//! routines here integrate such kernels exactly against a piecewise-linear
//! interpolant of `g`, which keeps the rules stable for arbitrarily stiff `b`
//! and exact whenever `g` is constant on a segment.

use crate::scalar::{lit, Scalar};

const SERIES_CUTOFF: f64 = 0.5;
const SERIES_TERMS: usize = 14;

/// phi1(z) = (e^z - 1)/z, with the removable singularity handled by series.
pub fn phi1<T: Scalar>(z: T) -> T {
    if z.abs() < lit(SERIES_CUTOFF) {
        // sum z^n / (n+1)!
        let mut term = T::one();
        let mut acc = T::one();
        for n in 1..SERIES_TERMS {
            term = term * z / lit((n + 1) as f64);
            acc += term;
        }
        acc
    } else {
        (z.exp() - T::one()) / z
    }
}

/// phi2(z) = (e^z - 1 - z)/z^2.
pub fn phi2<T: Scalar>(z: T) -> T {
    if z.abs() < lit(SERIES_CUTOFF) {
        // sum z^n / (n+2)!
        let mut term = lit::<T>(0.5);
        let mut acc = term;
        for n in 1..SERIES_TERMS {
            term = term * z / lit((n + 2) as f64);
            acc += term;
        }
        acc
    } else {
        (z.exp() - T::one() - z) / (z * z)
    }
}

/// j0(z) = (1 - e^{-z})/z = phi1(-z); decays for z -> +inf.
fn j0<T: Scalar>(z: T) -> T {
    phi1(-z)
}

/// j1(z) = (1 - e^{-z}(1+z))/z^2; decays for z -> +inf.
fn j1<T: Scalar>(z: T) -> T {
    if z.abs() < lit(SERIES_CUTOFF) {
        // sum (-1)^n (n+1) z^n / (n+2)!
        let mut term = lit::<T>(0.5);
        let mut acc = term;
        let mut pow = T::one();
        for n in 1..SERIES_TERMS {
            pow *= -z;
            let mut fact = T::one();
            for m in 2..=(n + 2) {
                fact *= lit(m as f64);
            }
            term = pow * lit((n + 1) as f64) / fact;
            acc += term;
        }
        acc
    } else {
        (T::one() - (-z).exp() * (T::one() + z)) / (z * z)
    }
}

/// Weights `(w0, w1)` such that, with `z = b*h`,
/// `∫_{τ0}^{τ1} e^{-b(τ1-τ)} g(τ) dτ ≈ h*(w0*g(τ0) + w1*g(τ1))`,
/// exact for `g` linear on the segment. Safe for any `b >= 0` and for
/// moderately negative `z`.
pub fn weights_toward_right<T: Scalar>(z: T) -> (T, T) {
    let w0 = j1(z);
    let w1 = j0(z) - j1(z);
    (w0, w1)
}

/// Weights `(w0, w1)` such that, with `z = b*h`,
/// `∫_{τ0}^{τ1} e^{-b(τ0-τ)} g(τ) dτ ≈ h*(w0*g(τ0) + w1*g(τ1))`,
/// exact for linear `g`. Safe for any `b <= 0` and moderately positive `z`.
pub fn weights_toward_left<T: Scalar>(z: T) -> (T, T) {
    let p1 = phi1(z);
    let p2 = phi2(z);
    (p2, p1 - p2)
}
