//! Exact eigenstructure of the Dirichlet Laplacian on the model domains,
//! spectral splits around a resonant level, coefficient fields with their
//! norms, and the diagonal linear propagators.

use std::sync::Arc;

use crate::error::{CoreError, Result};
use crate::quadrature::QuadratureGrid;
use crate::scalar::{lit, Scalar};

/// Hard cap on retained modes; beyond this the dense tabulations stop being
/// "desk scale".
pub const MODE_CAP: usize = 4096;

/// The exponent of the fractional power scale. The generator is self-adjoint
/// with domain of its square root equal to the gradient space, so this is
/// fixed rather than configurable.
pub const ALPHA: f64 = 0.5;

#[derive(Debug, Clone, Copy, PartialEq, Eq)]
pub enum DomainKind {
    Interval,
    Square,
}

/// Model domain `(0, L)` or `(0, L)^2`.
#[derive(Debug, Clone)]
pub struct DomainSpec<T> {
    pub kind: DomainKind,
    pub length: T,
    pub quadrature_points_per_dim: usize,
}

impl<T: Scalar> DomainSpec<T> {
    pub fn interval() -> Self {
        Self {
            kind: DomainKind::Interval,
            length: T::PI(),
            quadrature_points_per_dim: 48,
        }
    }

    pub fn square() -> Self {
        Self {
            kind: DomainKind::Square,
            length: T::PI(),
            quadrature_points_per_dim: 48,
        }
    }

    pub fn validate(&self) -> Result<()> {
        if !(self.length > T::zero()) {
            return Err(CoreError::InvalidDomain(format!(
                "side length must be positive, got {}",
                self.length
            )));
        }
        if self.quadrature_points_per_dim < 16 {
            return Err(CoreError::InvalidDomain(format!(
                "need at least 16 quadrature points per dimension, got {}",
                self.quadrature_points_per_dim
            )));
        }
        Ok(())
    }

    /// |Ω|: L or L^2.
    pub fn volume(&self) -> T {
        match self.kind {
            DomainKind::Interval => self.length,
            DomainKind::Square => self.length * self.length,
        }
    }

    pub fn dim(&self) -> usize {
        match self.kind {
            DomainKind::Interval => 1,
            DomainKind::Square => 2,
        }
    }
}

/// One retained eigenpair. `index[1] == 0` marks a 1-d mode.
#[derive(Debug, Clone, Copy)]
pub struct Mode<T> {
    pub index: [usize; 2],
    pub eigenvalue: T,
}

/// Eigenpairs of the Dirichlet Laplacian with multiplicity bookkeeping and a
/// tabulation of every eigenfunction on the quadrature grid.
#[derive(Debug)]
pub struct SpectralBasis<T> {
    pub domain: DomainSpec<T>,
    pub modes: Vec<Mode<T>>,
    /// Distinct eigenvalue levels `(value, multiplicity)`, ascending.
    pub distinct: Vec<(T, usize)>,
    grid: QuadratureGrid<T>,
    /// `phi[j * grid.len() + q]` = value of eigenfunction `j` at node `q`.
    phi: Vec<T>,
}

impl<T: Scalar> SpectralBasis<T> {
    /// Build the basis with (at least) `n` modes, extending the truncation so
    /// that the last distinct eigenvalue level is retained completely.
    pub fn build(domain: DomainSpec<T>, n: usize) -> Result<Arc<Self>> {
        domain.validate()?;
        if n < 1 {
            return Err(CoreError::Precondition(
                "truncation must retain at least one mode".into(),
            ));
        }
        if n > MODE_CAP {
            return Err(CoreError::ResourceLimit(format!(
                "requested {n} modes, cap is {MODE_CAP}"
            )));
        }
        let mut modes = Self::enumerate_modes(&domain, n)?;
        // complete the final eigenvalue level so multiplicities stay honest
        let tol = modes[n - 1].eigenvalue * lit(1e-9);
        let cut = modes[n - 1].eigenvalue;
        modes.retain(|m| m.eigenvalue <= cut + tol);
        let n_actual = modes.len();
        if n_actual > MODE_CAP {
            return Err(CoreError::ResourceLimit(format!(
                "completing the last eigenvalue level needs {n_actual} modes, cap is {MODE_CAP}"
            )));
        }

        let mut distinct: Vec<(T, usize)> = Vec::new();
        for m in &modes {
            match distinct.last_mut() {
                Some((v, count)) if (m.eigenvalue - *v).abs() <= *v * lit(1e-9) => *count += 1,
                _ => distinct.push((m.eigenvalue, 1)),
            }
        }

        let max_freq = modes
            .iter()
            .map(|m| m.index[0].max(m.index[1]))
            .max()
            .unwrap_or(1);
        let points = domain.quadrature_points_per_dim.max(2 * max_freq + 14);
        let grid = match domain.kind {
            DomainKind::Interval => QuadratureGrid::on_interval(points, domain.length)?,
            DomainKind::Square => QuadratureGrid::on_square(points, domain.length)?,
        };

        let mut phi = vec![T::zero(); n_actual * grid.len()];
        for (j, m) in modes.iter().enumerate() {
            let row = &mut phi[j * grid.len()..(j + 1) * grid.len()];
            for (q, node) in grid.nodes.iter().enumerate() {
                row[q] = eigenfunction(&domain, m.index, node);
            }
        }

        Ok(Arc::new(Self {
            domain,
            modes,
            distinct,
            grid,
            phi,
        }))
    }

    fn enumerate_modes(domain: &DomainSpec<T>, n: usize) -> Result<Vec<Mode<T>>> {
        let base = T::PI() / domain.length;
        let base2 = base * base;
        match domain.kind {
            DomainKind::Interval => Ok((1..=n)
                .map(|j| Mode {
                    index: [j, 0],
                    eigenvalue: base2 * lit((j * j) as f64),
                })
                .collect()),
            DomainKind::Square => {
                // enough 1-d frequencies that the first n products are exact
                let cap = (2.0 * (n as f64).sqrt()).ceil() as usize + 2;
                let mut all = Vec::with_capacity(cap * cap);
                for i in 1..=cap {
                    for j in 1..=cap {
                        all.push(Mode {
                            index: [i, j],
                            eigenvalue: base2 * lit((i * i + j * j) as f64),
                        });
                    }
                }
                all.sort_by(|a, b| {
                    a.eigenvalue
                        .partial_cmp(&b.eigenvalue)
                        .unwrap()
                        .then(a.index[0].cmp(&b.index[0]))
                });
                if all.len() < n {
                    return Err(CoreError::ResourceLimit(
                        "mode enumeration cap too small".into(),
                    ));
                }
                all.truncate(n.max(1));
                Ok(all)
            }
        }
    }

    pub fn len(&self) -> usize {
        self.modes.len()
    }

    pub fn is_empty(&self) -> bool {
        self.modes.is_empty()
    }

    pub fn eigenvalue(&self, j: usize) -> T {
        self.modes[j].eigenvalue
    }

    pub fn grid(&self) -> &QuadratureGrid<T> {
        &self.grid
    }

    pub fn phi_row(&self, j: usize) -> &[T] {
        &self.phi[j * self.grid.len()..(j + 1) * self.grid.len()]
    }

    /// Evaluate eigenfunction `j` at an arbitrary point of the domain.
    pub fn eval_mode_at(&self, j: usize, node: &[T; 2]) -> T {
        eigenfunction(&self.domain, self.modes[j].index, node)
    }

    /// Distinct level `k` (1-based) as `(eigenvalue, multiplicity)`.
    pub fn level(&self, k: usize) -> Result<(T, usize)> {
        if k == 0 || k > self.distinct.len() {
            return Err(CoreError::Precondition(format!(
                "level k = {k} outside retained distinct levels 1..={}",
                self.distinct.len()
            )));
        }
        Ok(self.distinct[k - 1])
    }

    /// Gap between level `k` and its neighbours; for the ground level the
    /// upward gap is used.
    pub fn spectral_gap(&self, k: usize) -> Result<T> {
        let (mu_k, _) = self.level(k)?;
        if k >= self.distinct.len() {
            return Err(CoreError::Precondition(format!(
                "spectral gap at level {k} needs level {} inside the truncation",
                k + 1
            )));
        }
        let up = self.distinct[k].0 - mu_k;
        if k == 1 {
            return Ok(up);
        }
        let down = mu_k - self.distinct[k - 2].0;
        Ok(down.min(up))
    }

    /// Mode indices belonging to distinct level `k`.
    pub fn level_modes(&self, k: usize) -> Result<Vec<usize>> {
        let (mu_k, _) = self.level(k)?;
        Ok((0..self.len())
            .filter(|&j| (self.eigenvalue(j) - mu_k).abs() <= mu_k * lit(1e-9))
            .collect())
    }

    /// Evaluate the field with the given coefficients at all quadrature nodes.
    pub fn values_at_nodes(&self, coeffs: &[T]) -> Vec<T> {
        let mut out = vec![T::zero(); self.grid.len()];
        self.accumulate_values(coeffs, &mut out);
        out
    }

    pub fn accumulate_values(&self, coeffs: &[T], out: &mut [T]) {
        debug_assert_eq!(coeffs.len(), self.len());
        debug_assert_eq!(out.len(), self.grid.len());
        for v in out.iter_mut() {
            *v = T::zero();
        }
        for (j, &a) in coeffs.iter().enumerate() {
            if a == T::zero() {
                continue;
            }
            for (v, &p) in out.iter_mut().zip(self.phi_row(j)) {
                *v += a * p;
            }
        }
    }

    /// Project nodal values onto the basis: returns `(v, φ_j)_H` for all `j`.
    pub fn project_values(&self, values: &[T]) -> Vec<T> {
        debug_assert_eq!(values.len(), self.grid.len());
        let weighted: Vec<T> = values
            .iter()
            .zip(&self.grid.weights)
            .map(|(&v, &w)| v * w)
            .collect();
        (0..self.len())
            .map(|j| {
                weighted
                    .iter()
                    .zip(self.phi_row(j))
                    .map(|(&wv, &p)| wv * p)
                    .sum()
            })
            .collect()
    }

    /// Project nodal values onto a subset of modes only.
    pub fn project_values_onto(&self, values: &[T], modes: &[usize]) -> Vec<T> {
        debug_assert_eq!(values.len(), self.grid.len());
        modes
            .iter()
            .map(|&j| {
                values
                    .iter()
                    .zip(&self.grid.weights)
                    .zip(self.phi_row(j))
                    .map(|((&v, &w), &p)| v * w * p)
                    .sum()
            })
            .collect()
    }

    /// Gram matrix of the eigenfunctions under quadrature, row-major.
    pub fn gram_matrix(&self) -> Vec<T> {
        let n = self.len();
        let mut g = vec![T::zero(); n * n];
        for i in 0..n {
            let vi = self.phi_row(i);
            for j in i..n {
                let vj = self.phi_row(j);
                let dot = vi
                    .iter()
                    .zip(vj)
                    .zip(&self.grid.weights)
                    .map(|((&a, &b), &w)| a * b * w)
                    .sum();
                g[i * n + j] = dot;
                g[j * n + i] = dot;
            }
        }
        g
    }

    pub fn same_basis(a: &Arc<Self>, b: &Arc<Self>) -> bool {
        Arc::ptr_eq(a, b)
    }
}

fn eigenfunction<T: Scalar>(domain: &DomainSpec<T>, index: [usize; 2], node: &[T; 2]) -> T {
    let base = T::PI() / domain.length;
    let norm1 = (lit::<T>(2.0) / domain.length).sqrt();
    match domain.kind {
        DomainKind::Interval => norm1 * (base * lit(index[0] as f64) * node[0]).sin(),
        DomainKind::Square => {
            norm1
                * norm1
                * (base * lit(index[0] as f64) * node[0]).sin()
                * (base * lit(index[1] as f64) * node[1]).sin()
        }
    }
}

/// A function in the Galerkin space, stored as its coefficient vector.
#[derive(Debug, Clone)]
pub struct CoefField<T> {
    basis: Arc<SpectralBasis<T>>,
    pub coeffs: Vec<T>,
}

impl<T: Scalar> CoefField<T> {
    pub fn zero(basis: &Arc<SpectralBasis<T>>) -> Self {
        Self {
            basis: Arc::clone(basis),
            coeffs: vec![T::zero(); basis.len()],
        }
    }

    pub fn from_coeffs(basis: &Arc<SpectralBasis<T>>, coeffs: Vec<T>) -> Self {
        assert_eq!(
            coeffs.len(),
            basis.len(),
            "coefficient count must match truncation"
        );
        Self {
            basis: Arc::clone(basis),
            coeffs,
        }
    }

    /// `amplitude * φ_j`.
    pub fn single_mode(basis: &Arc<SpectralBasis<T>>, j: usize, amplitude: T) -> Self {
        let mut f = Self::zero(basis);
        f.coeffs[j] = amplitude;
        f
    }

    pub fn basis(&self) -> &Arc<SpectralBasis<T>> {
        &self.basis
    }

    pub fn norm_h(&self) -> T {
        self.coeffs.iter().map(|&a| a * a).sum::<T>().sqrt()
    }

    pub fn norm_v(&self) -> T {
        self.coeffs
            .iter()
            .enumerate()
            .map(|(j, &a)| self.basis.eigenvalue(j) * a * a)
            .sum::<T>()
            .sqrt()
    }

    /// Fractional-power norm with shift `a`: `(Σ (μ_j + a) c_j^2)^{1/2}`.
    /// With zero shift this coincides with the V-norm.
    pub fn norm_alpha(&self, shift: T) -> T {
        self.coeffs
            .iter()
            .enumerate()
            .map(|(j, &a)| (self.basis.eigenvalue(j) + shift) * a * a)
            .sum::<T>()
            .sqrt()
    }

    pub fn dot_h(&self, other: &Self) -> T {
        self.coeffs
            .iter()
            .zip(&other.coeffs)
            .map(|(&a, &b)| a * b)
            .sum()
    }

    pub fn scale(&self, s: T) -> Self {
        Self {
            basis: Arc::clone(&self.basis),
            coeffs: self.coeffs.iter().map(|&a| a * s).collect(),
        }
    }

    pub fn add(&self, other: &Self) -> Self {
        Self {
            basis: Arc::clone(&self.basis),
            coeffs: self
                .coeffs
                .iter()
                .zip(&other.coeffs)
                .map(|(&a, &b)| a + b)
                .collect(),
        }
    }

    pub fn sub(&self, other: &Self) -> Self {
        Self {
            basis: Arc::clone(&self.basis),
            coeffs: self
                .coeffs
                .iter()
                .zip(&other.coeffs)
                .map(|(&a, &b)| a - b)
                .collect(),
        }
    }

    pub fn values_at_nodes(&self) -> Vec<T> {
        self.basis.values_at_nodes(&self.coeffs)
    }
}

#[derive(Debug, Clone, Copy, PartialEq, Eq)]
pub enum Part {
    Unstable,
    Center,
    Stable,
}

/// Index partition of the modes around a resonant level, with the shifted
/// generator's data needed by the propagators.
#[derive(Debug, Clone)]
pub struct SpectralSplit<T> {
    pub basis: Arc<SpectralBasis<T>>,
    /// 1-based distinct-level index of the resonant eigenvalue.
    pub k: usize,
    pub lambda: T,
    pub mu_k: T,
    pub beta: T,
    pub idx_u: Vec<usize>,
    pub idx_c: Vec<usize>,
    pub idx_s: Vec<usize>,
    /// Spectral shift `a` of the positivity shift `Λ = A + aI`; zero by
    /// default since the spectrum is already positive.
    pub shift: T,
}

impl<T: Scalar> SpectralSplit<T> {
    /// Partition the modes at level `k` for a parameter inside the admissible
    /// window `|λ - μ_k| < β_k / 4`.
    pub fn split_at(basis: &Arc<SpectralBasis<T>>, k: usize, lambda: T) -> Result<Self> {
        let (mu_k, _) = basis.level(k)?;
        let beta = basis.spectral_gap(k)?;
        let quarter = beta / lit(4.0);
        if (lambda - mu_k).abs() >= quarter {
            return Err(CoreError::Precondition(format!(
                "lambda = {} outside the admissible window ({}, {}) around level {k}",
                lambda,
                (mu_k - quarter).as_f64(),
                (mu_k + quarter).as_f64(),
            )));
        }
        let tol = mu_k * lit(1e-9);
        let mut idx_u = Vec::new();
        let mut idx_c = Vec::new();
        let mut idx_s = Vec::new();
        for j in 0..basis.len() {
            let mu = basis.eigenvalue(j);
            if (mu - mu_k).abs() <= tol {
                idx_c.push(j);
            } else if mu < mu_k {
                idx_u.push(j);
            } else {
                idx_s.push(j);
            }
        }
        Ok(Self {
            basis: Arc::clone(basis),
            k,
            lambda,
            mu_k,
            beta,
            idx_u,
            idx_c,
            idx_s,
            shift: T::zero(),
        })
    }

    /// Linear rate `μ_j - λ` of mode `j`.
    pub fn rate(&self, j: usize) -> T {
        self.basis.eigenvalue(j) - self.lambda
    }

    /// Multiplicity of the resonant level.
    pub fn multiplicity(&self) -> usize {
        self.idx_c.len()
    }

    pub fn part_of(&self, j: usize) -> Part {
        let mu = self.basis.eigenvalue(j);
        let tol = self.mu_k * lit(1e-9);
        if (mu - self.mu_k).abs() <= tol {
            Part::Center
        } else if mu < self.mu_k {
            Part::Unstable
        } else {
            Part::Stable
        }
    }

    pub fn indices(&self, part: Part) -> &[usize] {
        match part {
            Part::Unstable => &self.idx_u,
            Part::Center => &self.idx_c,
            Part::Stable => &self.idx_s,
        }
    }

    /// Orthogonal projection onto one part, exact in coefficients.
    pub fn project(&self, part: Part, field: &CoefField<T>) -> CoefField<T> {
        let mut out = CoefField::zero(&self.basis);
        for &j in self.indices(part) {
            out.coeffs[j] = field.coeffs[j];
        }
        out
    }

    /// Coordinates of the center projection, ordered like `idx_c`.
    pub fn center_coords(&self, field: &CoefField<T>) -> Vec<T> {
        self.idx_c.iter().map(|&j| field.coeffs[j]).collect()
    }

    pub fn field_from_center(&self, w: &[T]) -> CoefField<T> {
        assert_eq!(w.len(), self.idx_c.len());
        let mut f = CoefField::zero(&self.basis);
        for (&j, &v) in self.idx_c.iter().zip(w) {
            f.coeffs[j] = v;
        }
        f
    }

    /// Apply the diagonal propagator `e^{-B_i t}` of one part. The time
    /// direction must match the part: backward for the unstable block,
    /// forward for the stable block, unrestricted for the center.
    pub fn propagate_linear(&self, part: Part, field: &CoefField<T>, t: T) -> Result<CoefField<T>> {
        match part {
            Part::Unstable if t > T::zero() => {
                return Err(CoreError::Precondition(
                    "unstable propagator only runs backward in time (t <= 0)".into(),
                ))
            }
            Part::Stable if t < T::zero() => {
                return Err(CoreError::Precondition(
                    "stable propagator only runs forward in time (t >= 0)".into(),
                ))
            }
            _ => {}
        }
        let mut out = CoefField::zero(&self.basis);
        for &j in self.indices(part) {
            out.coeffs[j] = field.coeffs[j] * (-self.rate(j) * t).exp();
        }
        Ok(out)
    }

    /// Empirical semigroup constant: the largest of the ratios appearing in
    /// the decay estimates of the three propagators, scanned over `t_grid`
    /// and the given modes, with the smoothing bound additionally maximised
    /// in closed form. Never below one.
    pub fn estimate_semigroup_constant(&self, t_grid: &[T], modes: &[usize]) -> T {
        let three_quarter = self.beta * lit(0.75);
        let quarter = self.beta * lit(0.25);
        let mut sup = T::one();
        for &j in modes {
            let rate = self.rate(j);
            match self.part_of(j) {
                Part::Unstable => {
                    for &t in t_grid.iter().filter(|&&t| t <= T::zero()) {
                        let ratio = (-rate * t - three_quarter * t).exp();
                        sup = sup.max(ratio);
                    }
                }
                Part::Center => {
                    for &t in t_grid {
                        let ratio = (-rate * t - quarter * t.abs()).exp();
                        sup = sup.max(ratio);
                    }
                }
                Part::Stable => {
                    // matched-norm bound e^{-3βt/4}: ratio e^{-(rate-3β/4)t} <= 1
                    // smoothing bound M t^{-1/2} e^{-3βt/4} applied from the
                    // flat norm into the fractional scale:
                    let c = rate - three_quarter;
                    let weight = (self.basis.eigenvalue(j) + self.shift).sqrt();
                    for &t in t_grid.iter().filter(|&&t| t > T::zero()) {
                        let ratio = weight * t.sqrt() * (-c * t).exp();
                        sup = sup.max(ratio);
                    }
                    if c > T::zero() {
                        // analytic max of sqrt(t) e^{-ct} at t = 1/(2c)
                        let peak = weight / (lit::<T>(2.0) * c * T::E()).sqrt();
                        sup = sup.max(peak);
                    } else {
                        sup = sup.max(T::infinity());
                    }
                }
            }
        }
        sup
    }

    /// Log-spaced default grid for the semigroup scan, covering both signs.
    pub fn default_t_grid(&self, points: usize) -> Vec<T> {
        let t_max = lit::<T>(24.0) / self.beta;
        let t_min = lit::<T>(1e-4);
        let mut grid = Vec::with_capacity(2 * points + 1);
        let ratio = (t_max / t_min).ln() / lit((points - 1) as f64);
        for i in 0..points {
            let t = t_min * (ratio * lit(i as f64)).exp();
            grid.push(-t);
            grid.push(t);
        }
        grid.push(T::zero());
        grid.sort_by(|a, b| a.partial_cmp(b).unwrap());
        grid
    }
}
