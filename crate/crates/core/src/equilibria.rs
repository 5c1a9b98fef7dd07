//! Steady states of the full Galerkin system: damped Newton with deflation
//! for multi-root recovery, natural-parameter continuation across a
//! parameter grid, and the multiplicity report.

use std::sync::Arc;

use rayon::prelude::*;

use crate::error::{CoreError, Result};
use crate::linalg::solve_dense;
use crate::nonlinearity::{evaluate_nemytskii, NonlinearitySpec};
use crate::scalar::{lit, Scalar};
use crate::spectral::{CoefField, SpectralBasis};

#[derive(Debug, Clone, Copy, PartialEq, Eq)]
pub enum Classification {
    Bounded,
    BlowupCandidate,
}

/// A steady state at one parameter value.
#[derive(Debug, Clone)]
pub struct Equilibrium<T> {
    pub field: CoefField<T>,
    pub lambda: T,
    /// Max-norm of the coefficient residual.
    pub residual: T,
    pub classification: Classification,
}

#[derive(Debug, Clone, Copy)]
pub struct NewtonConfig<T> {
    pub tolerance: T,
    pub max_iterations: usize,
    pub max_damping_halvings: usize,
    /// Roots closer than this in the flat norm are merged.
    pub distinctness: T,
    /// Deflation shift `ε_d` in `1/(ε_d + |u - u_i|^2)`.
    pub deflation_shift: T,
}

impl<T: Scalar> Default for NewtonConfig<T> {
    fn default() -> Self {
        Self {
            tolerance: lit(1e-10),
            max_iterations: 80,
            max_damping_halvings: 8,
            distinctness: lit(1e-4),
            deflation_shift: lit(1e-6),
        }
    }
}

/// Steady-state residual in coefficients: `-(μ_j - λ) a_j + (f(u), φ_j)`.
pub fn steady_residual<T: Scalar>(
    basis: &Arc<SpectralBasis<T>>,
    spec: &NonlinearitySpec<T>,
    lambda: T,
    u: &CoefField<T>,
) -> CoefField<T> {
    let g = evaluate_nemytskii(spec, u);
    let mut out = CoefField::zero(basis);
    for j in 0..basis.len() {
        out.coeffs[j] = -(basis.eigenvalue(j) - lambda) * u.coeffs[j] + g.coeffs[j];
    }
    out
}

fn max_norm<T: Scalar>(f: &CoefField<T>) -> T {
    f.coeffs.iter().fold(T::zero(), |a, &b| a.max(b.abs()))
}

/// Dense jacobian of the steady-state residual: the diagonal linear part
/// plus the quadrature composition derivative.
fn steady_jacobian<T: Scalar>(
    basis: &Arc<SpectralBasis<T>>,
    spec: &NonlinearitySpec<T>,
    lambda: T,
    u: &CoefField<T>,
) -> Vec<T> {
    let n = basis.len();
    let grid = basis.grid();
    let values = u.values_at_nodes();
    let slope: Vec<T> = grid
        .nodes
        .iter()
        .zip(&values)
        .zip(&grid.weights)
        .map(|((node, &v), &w)| spec.eval_dt(node, v) * w)
        .collect();
    let mut jac = vec![T::zero(); n * n];
    for row in 0..n {
        let pr = basis.phi_row(row);
        for col in 0..n {
            let pc = basis.phi_row(col);
            let mut acc = T::zero();
            for q in 0..grid.len() {
                acc += slope[q] * pr[q] * pc[q];
            }
            jac[row * n + col] = acc;
        }
        jac[row * n + row] -= basis.eigenvalue(row) - lambda;
    }
    jac
}

/// Damped Newton iteration for a steady state.
pub fn newton_solve<T: Scalar>(
    basis: &Arc<SpectralBasis<T>>,
    spec: &NonlinearitySpec<T>,
    lambda: T,
    u_init: &CoefField<T>,
    config: &NewtonConfig<T>,
) -> Result<Equilibrium<T>> {
    let mut u = u_init.clone();
    for _ in 0..config.max_iterations {
        let res = steady_residual(basis, spec, lambda, &u);
        let rn = max_norm(&res);
        if rn < config.tolerance {
            return Ok(Equilibrium {
                field: u,
                lambda,
                residual: rn,
                classification: Classification::Bounded,
            });
        }
        let mut jac = steady_jacobian(basis, spec, lambda, &u);
        let mut step: Vec<T> = res.coeffs.iter().map(|&v| -v).collect();
        solve_dense(&mut jac, &mut step)?;
        let mut damping = T::one();
        let mut accepted = false;
        for _ in 0..=config.max_damping_halvings {
            let mut trial = u.clone();
            for (t, &s) in trial.coeffs.iter_mut().zip(&step) {
                *t += damping * s;
            }
            let trial_res = steady_residual(basis, spec, lambda, &trial);
            if max_norm(&trial_res) < rn {
                u = trial;
                accepted = true;
                break;
            }
            damping *= lit(0.5);
        }
        if !accepted {
            return Err(CoreError::NoConvergence(format!(
                "newton stalled at residual {:.3e}",
                rn.as_f64()
            )));
        }
    }
    Err(CoreError::NoConvergence(format!(
        "newton residual above tolerance after {} iterations",
        config.max_iterations
    )))
}

/// Newton on the deflated residual `R(u) Π_i (ε + |u - u_i|^2)^{-1}`, which
/// repels the iteration from already-found roots.
fn deflated_newton<T: Scalar>(
    basis: &Arc<SpectralBasis<T>>,
    spec: &NonlinearitySpec<T>,
    lambda: T,
    u_init: &CoefField<T>,
    found: &[Equilibrium<T>],
    config: &NewtonConfig<T>,
) -> Result<Equilibrium<T>> {
    let n = basis.len();
    let mut u = u_init.clone();
    for _ in 0..config.max_iterations {
        let res = steady_residual(basis, spec, lambda, &u);
        if max_norm(&res) < lit(1e-8) {
            // hand over to the plain iteration for the final digits
            let eq = newton_solve(basis, spec, lambda, &u, config)?;
            return Ok(eq);
        }
        // deflation factor and its logarithmic gradient
        let mut factor = T::one();
        let mut grad_log = vec![T::zero(); n];
        for root in found {
            let diff = u.sub(&root.field);
            let d2 = diff.dot_h(&diff);
            let denom = config.deflation_shift + d2;
            factor /= denom;
            for (g, &d) in grad_log.iter_mut().zip(&diff.coeffs) {
                *g -= lit::<T>(2.0) * d / denom;
            }
        }
        let mut jac = steady_jacobian(basis, spec, lambda, &u);
        // J_defl = F J + F R grad_logᵀ, and F > 0 cancels from the solve of
        // J_defl step = -F R, leaving (J + R grad_logᵀ) step = -R
        for row in 0..n {
            for col in 0..n {
                jac[row * n + col] += res.coeffs[row] * grad_log[col];
            }
        }
        let mut step: Vec<T> = res.coeffs.iter().map(|&v| -v).collect();
        solve_dense(&mut jac, &mut step)?;
        let deflated_norm = |v: &CoefField<T>| -> T {
            let mut f = T::one();
            for root in found {
                let diff = v.sub(&root.field);
                f /= config.deflation_shift + diff.dot_h(&diff);
            }
            max_norm(&steady_residual(basis, spec, lambda, v)) * f
        };
        let current = deflated_norm(&u);
        let mut damping = T::one();
        let mut accepted = false;
        for _ in 0..=config.max_damping_halvings {
            let mut trial = u.clone();
            for (t, &s) in trial.coeffs.iter_mut().zip(&step) {
                *t += damping * s;
            }
            if deflated_norm(&trial) < current {
                u = trial;
                accepted = true;
                break;
            }
            damping *= lit(0.5);
        }
        if !accepted {
            return Err(CoreError::NoConvergence("deflated newton stalled".into()));
        }
        if !u.norm_h().is_finite() || u.norm_h() > lit(1e9) {
            return Err(CoreError::NoConvergence("deflated iterate escaped".into()));
        }
    }
    Err(CoreError::NoConvergence(
        "deflated newton hit the iteration cap".into(),
    ))
}

/// Multi-root search: plain Newton from every seed, then deflated reruns
/// from the same seeds against everything found so far. Failures are
/// silently skipped; an empty result is allowed.
pub fn deflated_search<T: Scalar>(
    basis: &Arc<SpectralBasis<T>>,
    spec: &NonlinearitySpec<T>,
    lambda: T,
    seeds: &[CoefField<T>],
    config: &NewtonConfig<T>,
) -> Vec<Equilibrium<T>> {
    let mut found: Vec<Equilibrium<T>> = Vec::new();
    let push_distinct = |found: &mut Vec<Equilibrium<T>>, eq: Equilibrium<T>| {
        let distinct = found
            .iter()
            .all(|e| e.field.sub(&eq.field).norm_h() > config.distinctness);
        if distinct {
            found.push(eq);
        }
    };
    for seed in seeds {
        if let Ok(eq) = newton_solve(basis, spec, lambda, seed, config) {
            push_distinct(&mut found, eq);
        }
        // deflated reruns from the same seed until nothing new appears
        for _ in 0..4 {
            let before = found.len();
            if let Ok(eq) = deflated_newton(basis, spec, lambda, seed, &found, config) {
                push_distinct(&mut found, eq);
            }
            if found.len() == before {
                break;
            }
        }
    }
    found.sort_by(|a, b| {
        a.field.coeffs[0]
            .partial_cmp(&b.field.coeffs[0])
            .unwrap_or(std::cmp::Ordering::Equal)
    });
    found
}

/// Default seed family: the origin plus saturation-scale predictions along
/// center directions on both sides.
pub fn default_seeds<T: Scalar>(
    basis: &Arc<SpectralBasis<T>>,
    spec: &NonlinearitySpec<T>,
    k: usize,
    lambda: T,
    l1_equivalence: T,
) -> Result<Vec<CoefField<T>>> {
    let (mu_k, _) = basis.level(k)?;
    let dist = (mu_k - lambda).abs().max(lit(1e-12));
    let s_pred = spec.sup_bound * l1_equivalence / dist;
    let center_modes = basis.level_modes(k)?;
    let mut seeds = vec![CoefField::zero(basis)];
    match center_modes.len() {
        1 => {
            for &sign in &[T::one(), -T::one()] {
                seeds.push(CoefField::single_mode(
                    basis,
                    center_modes[0],
                    sign * s_pred,
                ));
            }
        }
        _ => {
            let count = 8;
            for a in 0..count {
                let th = T::PI() * lit(2.0) * lit(a as f64) / lit(count as f64);
                let mut f = CoefField::zero(basis);
                f.coeffs[center_modes[0]] = s_pred * th.cos();
                f.coeffs[center_modes[1]] = s_pred * th.sin();
                seeds.push(f);
            }
        }
    }
    Ok(seeds)
}

/// A parameter-indexed family of steady states obtained by continuation.
#[derive(Debug, Clone)]
pub struct Branch<T> {
    pub points: Vec<(T, Equilibrium<T>)>,
    pub classification: Classification,
    /// Set when continuation lost the branch before the end of the grid.
    pub terminated: Option<String>,
}

impl<T: Scalar> Branch<T> {
    pub fn start_norm_v(&self) -> T {
        self.points
            .first()
            .map(|(_, e)| e.field.norm_v())
            .unwrap_or(T::zero())
    }
}

/// Natural-parameter continuation of every root family found at the first
/// grid point. On a failed step the parameter increment is halved up to
/// eight times; a branch that still fails is recorded as terminated.
pub fn continue_branch<T: Scalar>(
    basis: &Arc<SpectralBasis<T>>,
    spec: &NonlinearitySpec<T>,
    k: usize,
    lambda_grid: &[T],
    l1_equivalence: T,
    config: &NewtonConfig<T>,
) -> Result<Vec<Branch<T>>> {
    if lambda_grid.is_empty() {
        return Err(CoreError::Precondition("empty parameter grid".into()));
    }
    let seeds = default_seeds(basis, spec, k, lambda_grid[0], l1_equivalence)?;
    let roots = deflated_search(basis, spec, lambda_grid[0], &seeds, config);
    let branches: Vec<Branch<T>> = roots
        .into_par_iter()
        .map(|root| {
            let mut points = vec![(lambda_grid[0], root)];
            let mut terminated = None;
            'grid: for win in lambda_grid.windows(2) {
                let (mut from, to) = (win[0], win[1]);
                let mut guess = points.last().unwrap().1.field.clone();
                let mut sub_steps = 0usize;
                let mut target = to;
                loop {
                    match newton_solve(basis, spec, target, &guess, config) {
                        Ok(eq) => {
                            if (target - to).abs() <= T::epsilon() * lit(4.0) {
                                points.push((to, eq));
                                break;
                            }
                            from = target;
                            guess = eq.field;
                            target = to;
                        }
                        Err(e) => {
                            sub_steps += 1;
                            if sub_steps > 8 {
                                terminated = Some(format!(
                                    "continuation lost between {} and {}: {e}",
                                    from, to
                                ));
                                break 'grid;
                            }
                            target = (from + target) * lit(0.5);
                        }
                    }
                }
            }
            let classification = classify(&points);
            for (_, eq) in points.iter_mut() {
                eq.classification = classification;
            }
            Branch {
                points,
                classification,
                terminated,
            }
        })
        .collect();
    Ok(branches)
}

fn classify<T: Scalar>(points: &[(T, Equilibrium<T>)]) -> Classification {
    if points.len() < 2 {
        return Classification::Bounded;
    }
    let norms: Vec<T> = points.iter().map(|(_, e)| e.field.norm_v()).collect();
    let monotone = norms.windows(2).all(|w| w[1] >= w[0] - lit(1e-9));
    let grew = norms.last().copied().unwrap_or(T::zero()) > lit::<T>(10.0) * (norms[0] + lit(1e-9));
    if monotone && grew {
        Classification::BlowupCandidate
    } else {
        Classification::Bounded
    }
}

/// One grid point of a branch table.
#[derive(Debug, Clone, Copy)]
pub struct BranchRow<T> {
    pub lambda: T,
    pub norm_h: T,
    pub norm_v: T,
    pub residual: T,
    /// Divergence product `|u|_H * |μ_k - λ|`.
    pub product: T,
    pub energy: T,
}

/// Per-branch norms and divergence products across the grid.
#[derive(Debug, Clone)]
pub struct BranchSummary<T> {
    pub classification: Classification,
    pub terminated: Option<String>,
    pub rows: Vec<BranchRow<T>>,
}

/// Multiplicity findings across a parameter grid.
#[derive(Debug, Clone)]
pub struct MultiplicityReport<T> {
    pub k: usize,
    pub mu_k: T,
    pub theta: T,
    pub lambda_grid: Vec<T>,
    pub counts: Vec<usize>,
    pub branches: Vec<BranchSummary<T>>,
    /// Saturation target `sup|f| * r` the divergence products approach.
    pub divergence_target: T,
    pub max_product_deviation: T,
    pub bounded_sup_v: T,
    pub three_solutions_everywhere: bool,
    pub two_diverging: bool,
    pub one_bounded: bool,
    pub pass: bool,
}

/// Assemble the multiplicity findings from continued branches.
pub fn multiplicity_report<T: Scalar>(
    basis: &Arc<SpectralBasis<T>>,
    spec: &NonlinearitySpec<T>,
    k: usize,
    theta: T,
    lambda_grid: &[T],
    branches: &[Branch<T>],
    l1_equivalence: T,
) -> Result<MultiplicityReport<T>> {
    let (mu_k, _) = basis.level(k)?;
    let mut counts = vec![0usize; lambda_grid.len()];
    for (i, &lam) in lambda_grid.iter().enumerate() {
        let mut roots: Vec<&CoefField<T>> = Vec::new();
        for br in branches {
            if let Some((_, eq)) = br
                .points
                .iter()
                .find(|(l, _)| (*l - lam).abs() <= lam.abs() * lit(1e-12) + lit(1e-12))
            {
                if roots.iter().all(|r| r.sub(&eq.field).norm_h() > lit(1e-4)) {
                    roots.push(&eq.field);
                }
            }
        }
        counts[i] = roots.len();
    }

    let divergence_target = spec.sup_bound * l1_equivalence;
    let mut max_dev = T::zero();
    let mut bounded_sup_v = T::zero();
    let mut n_diverging = 0usize;
    let mut n_bounded = 0usize;
    let summaries: Vec<BranchSummary<T>> = branches
        .iter()
        .map(|br| {
            let rows: Vec<BranchRow<T>> = br
                .points
                .iter()
                .map(|(lam, eq)| {
                    let dist = (mu_k - *lam).abs();
                    BranchRow {
                        lambda: *lam,
                        norm_h: eq.field.norm_h(),
                        norm_v: eq.field.norm_v(),
                        residual: eq.residual,
                        product: eq.field.norm_h() * dist,
                        energy: crate::semiflow::energy(spec, *lam, &eq.field),
                    }
                })
                .collect();
            match br.classification {
                Classification::BlowupCandidate => {
                    n_diverging += 1;
                    for row in &rows {
                        let dev = ((row.product - divergence_target) / divergence_target).abs();
                        max_dev = max_dev.max(dev);
                    }
                }
                Classification::Bounded => {
                    n_bounded += 1;
                    for row in &rows {
                        bounded_sup_v = bounded_sup_v.max(row.norm_v);
                    }
                }
            }
            BranchSummary {
                classification: br.classification,
                terminated: br.terminated.clone(),
                rows,
            }
        })
        .collect();

    let three_solutions_everywhere = counts.iter().all(|&c| c >= 3);
    let two_diverging = n_diverging >= 2;
    let one_bounded = n_bounded >= 1;
    let pass = three_solutions_everywhere && two_diverging && one_bounded;
    Ok(MultiplicityReport {
        k,
        mu_k,
        theta,
        lambda_grid: lambda_grid.to_vec(),
        counts,
        branches: summaries,
        divergence_target,
        max_product_deviation: max_dev,
        bounded_sup_v,
        three_solutions_everywhere,
        two_diverging,
        one_bounded,
        pass,
    })
}
