//! Gauss-Legendre quadrature on the model domains.
//!
//! A single panel of order `n` per dimension integrates the products of
//! retained eigenfunctions far beyond machine precision once `n` exceeds the
//! highest retained frequency; node counts are chosen by the caller with that
//! margin built in.

use crate::error::{CoreError, Result};
use crate::scalar::{lit, Scalar};

/// Nodes and weights of an `n`-point Gauss-Legendre rule on `[-1, 1]`.
///
/// Nodes are found by Newton iteration on the Legendre recurrence, seeded
/// with the Chebyshev-based asymptotic guess.
pub fn gauss_legendre<T: Scalar>(n: usize) -> (Vec<T>, Vec<T>) {
    assert!(n >= 1, "quadrature order must be positive");
    let mut nodes = vec![T::zero(); n];
    let mut weights = vec![T::zero(); n];
    let nf = lit::<T>(n as f64);
    for i in 0..n.div_ceil(2) {
        let guess = ((lit::<T>(i as f64) + lit(0.75)) * T::PI() / (nf + lit(0.5))).cos();
        let mut x = guess;
        let mut dp = T::one();
        for _ in 0..100 {
            let (p, d) = legendre_with_derivative(n, x);
            dp = d;
            let step = p / d;
            x -= step;
            if step.abs() <= T::epsilon() * lit(4.0) * (T::one() + x.abs()) {
                break;
            }
        }
        let w = lit::<T>(2.0) / ((T::one() - x * x) * dp * dp);
        nodes[i] = -x;
        nodes[n - 1 - i] = x;
        weights[i] = w;
        weights[n - 1 - i] = w;
    }
    (nodes, weights)
}

fn legendre_with_derivative<T: Scalar>(n: usize, x: T) -> (T, T) {
    let mut p0 = T::one();
    let mut p1 = x;
    for j in 2..=n {
        let jf = lit::<T>(j as f64);
        let p2 = ((lit::<T>(2.0) * jf - T::one()) * x * p1 - (jf - T::one()) * p0) / jf;
        p0 = p1;
        p1 = p2;
    }
    if n == 0 {
        return (T::one(), T::zero());
    }
    if n == 1 {
        return (x, T::one());
    }
    let d = lit::<T>(n as f64) * (x * p1 - p0) / (x * x - T::one());
    (p1, d)
}

/// Tensor-product quadrature grid over `(0, L)` or `(0, L)^2`.
#[derive(Debug, Clone)]
pub struct QuadratureGrid<T> {
    pub dim: usize,
    /// Node coordinates; the second entry is zero for 1-d grids.
    pub nodes: Vec<[T; 2]>,
    pub weights: Vec<T>,
    pub points_per_dim: usize,
}

impl<T: Scalar> QuadratureGrid<T> {
    pub fn on_interval(points: usize, length: T) -> Result<Self> {
        Self::validate(points)?;
        let (xs, ws) = gauss_legendre::<T>(points);
        let half = length * lit(0.5);
        let nodes = xs
            .iter()
            .map(|&x| [half * (x + T::one()), T::zero()])
            .collect();
        let weights = ws.iter().map(|&w| w * half).collect();
        Ok(Self {
            dim: 1,
            nodes,
            weights,
            points_per_dim: points,
        })
    }

    pub fn on_square(points_per_dim: usize, length: T) -> Result<Self> {
        Self::validate(points_per_dim)?;
        let (xs, ws) = gauss_legendre::<T>(points_per_dim);
        let half = length * lit(0.5);
        let mut nodes = Vec::with_capacity(points_per_dim * points_per_dim);
        let mut weights = Vec::with_capacity(points_per_dim * points_per_dim);
        for (i, &x) in xs.iter().enumerate() {
            for (j, &y) in xs.iter().enumerate() {
                nodes.push([half * (x + T::one()), half * (y + T::one())]);
                weights.push(ws[i] * ws[j] * half * half);
            }
        }
        Ok(Self {
            dim: 2,
            nodes,
            weights,
            points_per_dim,
        })
    }

    fn validate(points: usize) -> Result<()> {
        if points < 2 {
            return Err(CoreError::InvalidDomain(format!(
                "quadrature needs at least 2 points per dimension, got {points}"
            )));
        }
        Ok(())
    }

    pub fn len(&self) -> usize {
        self.nodes.len()
    }

    pub fn is_empty(&self) -> bool {
        self.nodes.is_empty()
    }

    /// Integrate sampled values against the weights.
    pub fn integrate_values(&self, values: &[T]) -> T {
        debug_assert_eq!(values.len(), self.weights.len());
        values.iter().zip(&self.weights).map(|(&v, &w)| v * w).sum()
    }

    pub fn integrate(&self, f: impl Fn(&[T; 2]) -> T) -> T {
        self.nodes
            .iter()
            .zip(&self.weights)
            .map(|(x, &w)| f(x) * w)
            .sum()
    }
}

#[cfg(test)]
mod tests {
    use super::*;

    #[test]
    fn gauss_legendre_integrates_polynomials_exactly() {
        let (xs, ws) = gauss_legendre::<f64>(8);
        // degree 15 is the exactness limit of an 8-point rule
        let val: f64 = xs.iter().zip(&ws).map(|(&x, &w)| w * x.powi(14)).sum();
        let exact = 2.0 / 15.0;
        assert!((val - exact).abs() < 1e-14, "got {val}, want {exact}");
    }

    #[test]
    fn interval_grid_integrates_constants_exactly() {
        let g = QuadratureGrid::<f64>::on_interval(16, std::f64::consts::PI).unwrap();
        let vol = g.integrate(|_| 1.0);
        assert!((vol - std::f64::consts::PI).abs() < 1e-14);
        assert!(g.weights.iter().all(|&w| w > 0.0));
    }

    #[test]
    fn square_grid_integrates_separable_sines() {
        let g = QuadratureGrid::<f64>::on_square(24, std::f64::consts::PI).unwrap();
        let val = g.integrate(|x| (x[0]).sin() * (x[1]).sin());
        assert!((val - 4.0).abs() < 1e-12, "got {val}");
    }

    #[test]
    fn rejects_degenerate_rules() {
        assert!(QuadratureGrid::<f64>::on_interval(1, 1.0).is_err());
    }

    #[test]
    fn f32_nodes_are_usable() {
        let g = QuadratureGrid::<f32>::on_interval(16, std::f32::consts::PI).unwrap();
        let vol = g.integrate(|_| 1.0f32);
        assert!((vol - std::f32::consts::PI).abs() < 1e-5);
    }
}
