//! Time integration of the full Galerkin system, the energy functional that
//! witnesses the gradient structure, and the variation-of-constants residual.
//!
//! The linear part is diagonal in the spectral basis, so exponential Euler
//! integrates it exactly; only the composed nonlinearity is frozen over a
//! step. The scheme is first-order consistent and exact whenever the
//! composed field is constant along the step.

use crate::error::{CoreError, Result};
use crate::kernel;
use crate::nonlinearity::{evaluate_nemytskii, NonlinearitySpec};
use crate::scalar::{lit, Scalar};
use crate::spectral::{CoefField, Part, SpectralSplit};

#[derive(Debug, Clone, Copy, PartialEq, Eq)]
pub enum Scheme {
    /// Linear part exact, nonlinearity explicit.
    ExponentialEuler,
}

#[derive(Debug, Clone, Copy)]
pub struct IntegratorConfig<T> {
    pub step: T,
    pub scheme: Scheme,
    /// Local-defect monitor: during `evolve`, a full step is periodically
    /// compared against two half steps; exceeding this relative defect
    /// aborts with a divergence error instead of silently losing accuracy.
    pub substep_tolerance: T,
    /// Keep every `record_stride`-th state in the trajectory.
    pub record_stride: usize,
}

impl<T: Scalar> IntegratorConfig<T> {
    /// Default step tied to the fastest retained mode: `min(1e-2, 0.1/μ_N)`.
    pub fn for_split(split: &SpectralSplit<T>) -> Self {
        let mu_max = split.basis.eigenvalue(split.basis.len() - 1);
        Self {
            step: lit::<T>(1e-2).min(lit::<T>(0.1) / mu_max),
            scheme: Scheme::ExponentialEuler,
            substep_tolerance: lit(1e-3),
            record_stride: 1,
        }
    }

    pub fn with_step(mut self, h: T) -> Self {
        self.step = h;
        self
    }

    pub fn with_stride(mut self, stride: usize) -> Self {
        self.record_stride = stride.max(1);
        self
    }
}

/// A stored trajectory of the full system at one parameter value.
#[derive(Debug, Clone)]
pub struct TrajectorySegment<T> {
    pub times: Vec<T>,
    pub fields: Vec<CoefField<T>>,
    pub lambda: T,
}

impl<T: Scalar> TrajectorySegment<T> {
    pub fn endpoint(&self) -> &CoefField<T> {
        self.fields.last().expect("trajectory is never empty")
    }
}

/// One exponential-Euler update over step `h`.
pub fn step<T: Scalar>(
    split: &SpectralSplit<T>,
    spec: &NonlinearitySpec<T>,
    u: &CoefField<T>,
    h: T,
) -> Result<CoefField<T>> {
    if !(h > T::zero()) {
        return Err(CoreError::Precondition("step size must be positive".into()));
    }
    let g = evaluate_nemytskii(spec, u);
    let mut out = CoefField::zero(&split.basis);
    for j in 0..split.basis.len() {
        let b = split.rate(j);
        let z = -b * h;
        out.coeffs[j] = u.coeffs[j] * z.exp() + h * kernel::phi1(z) * g.coeffs[j];
    }
    Ok(out)
}

/// Integrate from `u0` over `[0, horizon]`, recording the trajectory.
pub fn evolve<T: Scalar>(
    split: &SpectralSplit<T>,
    spec: &NonlinearitySpec<T>,
    u0: &CoefField<T>,
    horizon: T,
    config: &IntegratorConfig<T>,
) -> Result<TrajectorySegment<T>> {
    if !(horizon > T::zero()) {
        return Err(CoreError::Precondition("horizon must be positive".into()));
    }
    let n_steps = (horizon / config.step).ceil().as_f64() as usize;
    let n_steps = n_steps.max(1);
    let h = horizon / lit(n_steps as f64);
    let mut times = Vec::with_capacity(n_steps / config.record_stride + 2);
    let mut fields = Vec::with_capacity(n_steps / config.record_stride + 2);
    times.push(T::zero());
    fields.push(u0.clone());
    let mut u = u0.clone();
    let defect_stride = (n_steps / 8).max(1);
    for i in 0..n_steps {
        let t_next = h * lit((i + 1) as f64);
        if i % defect_stride == 0 {
            let full = step(split, spec, &u, h)?;
            let half = step(split, spec, &u, h * lit(0.5))?;
            let two_half = step(split, spec, &half, h * lit(0.5))?;
            let defect = full.sub(&two_half).norm_h();
            let scale = T::one() + full.norm_h();
            if defect > config.substep_tolerance * scale {
                return Err(CoreError::Divergence {
                    time: t_next.as_f64(),
                    detail: format!(
                        "local defect {:.3e} exceeds substep tolerance; reduce the step",
                        defect.as_f64()
                    ),
                });
            }
            u = full;
        } else {
            u = step(split, spec, &u, h)?;
        }
        let norm = u.norm_h();
        if !norm.is_finite() || norm > lit(1e12) {
            return Err(CoreError::Divergence {
                time: t_next.as_f64(),
                detail: "state norm overflow".into(),
            });
        }
        if (i + 1) % config.record_stride == 0 || i + 1 == n_steps {
            times.push(t_next);
            fields.push(u.clone());
        }
    }
    Ok(TrajectorySegment {
        times,
        fields,
        lambda: split.lambda,
    })
}

/// `E(u) = 1/2 ||u||_V^2 - λ/2 |u|_H^2 - ∫ F(x, u) dx` with `F` the
/// antiderivative of the nonlinearity. Along exact trajectories
/// `dE/dt = -|u_t|_H^2 <= 0`.
pub fn energy<T: Scalar>(spec: &NonlinearitySpec<T>, lambda: T, u: &CoefField<T>) -> T {
    let basis = u.basis();
    let half = lit::<T>(0.5);
    let quad_v = half * u.norm_v() * u.norm_v();
    let quad_h = half * lambda * u.norm_h() * u.norm_h();
    let values = u.values_at_nodes();
    let grid = basis.grid();
    let mut potential = T::zero();
    for ((&w, node), &v) in grid.weights.iter().zip(&grid.nodes).zip(&values) {
        potential += w * spec.antiderivative(node, v);
    }
    quad_v - quad_h - potential
}

/// Equilibrium detection along trajectories: the state is stationary when
/// the vector field's flat norm drops below 1e-9.
pub fn is_equilibrium<T: Scalar>(
    split: &SpectralSplit<T>,
    spec: &NonlinearitySpec<T>,
    u: &CoefField<T>,
) -> bool {
    vector_field(split, spec, u).norm_h() < lit(1e-9)
}

/// Right-hand side of the evolution equation in coefficients:
/// `-(μ_j - λ) a_j + (f(u), φ_j)`. Its zeros are the steady states and its
/// negative is the coefficient gradient of the energy.
pub fn vector_field<T: Scalar>(
    split: &SpectralSplit<T>,
    spec: &NonlinearitySpec<T>,
    u: &CoefField<T>,
) -> CoefField<T> {
    let g = evaluate_nemytskii(spec, u);
    let mut out = CoefField::zero(&split.basis);
    for j in 0..split.basis.len() {
        out.coeffs[j] = -split.rate(j) * u.coeffs[j] + g.coeffs[j];
    }
    out
}

/// Maximum defect of the variation-of-constants identity over the stored
/// trajectory, per spectral part, with the exponential kernel integrated
/// exactly against the trapezoid interpolant of the composed nonlinearity.
pub fn duhamel_residual<T: Scalar>(
    split: &SpectralSplit<T>,
    spec: &NonlinearitySpec<T>,
    traj: &TrajectorySegment<T>,
) -> Result<T> {
    let n = traj.times.len();
    if n < 2 {
        return Err(CoreError::Precondition(
            "trajectory must cover an interval".into(),
        ));
    }
    let n_modes = split.basis.len();
    // composed coefficients at every node
    let g: Vec<Vec<T>> = traj
        .fields
        .iter()
        .map(|u| evaluate_nemytskii(spec, u).coeffs.clone())
        .collect();
    let mut worst = T::zero();
    let mut carried = traj.fields[0].coeffs.clone();
    for i in 1..n {
        let h = traj.times[i] - traj.times[i - 1];
        for j in 0..n_modes {
            let b = split.rate(j);
            let decay = (-b * h).exp();
            let (w0, w1) = kernel::weights_toward_right(b * h);
            carried[j] = carried[j] * decay + h * (w0 * g[i - 1][j] + w1 * g[i][j]);
        }
        // defect measured per part in the fractional norm
        for part in [Part::Unstable, Part::Center, Part::Stable] {
            let mut acc = T::zero();
            for &j in split.indices(part) {
                let d = traj.fields[i].coeffs[j] - carried[j];
                acc += (split.basis.eigenvalue(j) + split.shift) * d * d;
            }
            worst = worst.max(acc.sqrt());
        }
    }
    Ok(worst)
}

#[cfg(test)]
mod tests {
    use super::*;
    use crate::spectral::{DomainSpec, SpectralBasis};

    fn setup(lambda: f64) -> (SpectralSplit<f64>, NonlinearitySpec<f64>) {
        let b = SpectralBasis::build(DomainSpec::interval(), 4).unwrap();
        let split = SpectralSplit::split_at(&b, 1, lambda).unwrap();
        let spec = NonlinearitySpec::tanh(0.2, std::f64::consts::PI);
        (split, spec)
    }

    #[test]
    fn zero_nonlinearity_decays_exactly() {
        let b = SpectralBasis::build(DomainSpec::interval(), 3).unwrap();
        let split = SpectralSplit::split_at(&b, 1, 0.95).unwrap();
        let spec = NonlinearitySpec::zero(std::f64::consts::PI);
        let u = CoefField::from_coeffs(&b, vec![1.0, 2.0, -1.0]);
        let h = 0.37;
        let out = step(&split, &spec, &u, h).unwrap();
        for j in 0..3 {
            let want = u.coeffs[j] * (-(b.eigenvalue(j) - 0.95) * h).exp();
            assert!((out.coeffs[j] - want).abs() < 1e-15);
        }
    }

    #[test]
    fn constant_forcing_reproduces_affine_solution() {
        let b = SpectralBasis::build(DomainSpec::interval(), 3).unwrap();
        let split = SpectralSplit::split_at(&b, 1, 0.95).unwrap();
        let spec = NonlinearitySpec::constant(0.7, std::f64::consts::PI);
        let g = evaluate_nemytskii(&spec, &CoefField::zero(&b));
        let h = 0.25;
        let out = step(&split, &spec, &CoefField::zero(&b), h).unwrap();
        for j in 0..3 {
            let r = b.eigenvalue(j) - 0.95;
            let want = (1.0 - (-r * h).exp()) * g.coeffs[j] / r;
            assert!((out.coeffs[j] - want).abs() < 1e-14, "mode {j}");
        }
    }

    #[test]
    fn step_is_first_order_by_richardson() {
        let (split, spec) = setup(0.95);
        let u0 = CoefField::single_mode(&split.basis, 0, 2.0);
        let horizon = 1.0;
        let endpoint = |h: f64| {
            let cfg = IntegratorConfig::for_split(&split)
                .with_step(h)
                .with_stride(1_000_000);
            evolve(&split, &spec, &u0, horizon, &cfg)
                .unwrap()
                .endpoint()
                .clone()
        };
        let e1 = endpoint(2e-2);
        let e2 = endpoint(1e-2);
        let e3 = endpoint(5e-3);
        let d12 = e1.sub(&e2).norm_h();
        let d23 = e2.sub(&e3).norm_h();
        let order = (d12 / d23).log2();
        assert!(order >= 0.9, "measured order {order}");
    }

    #[test]
    fn evolve_satisfies_the_flow_property() {
        let (split, spec) = setup(0.95);
        let u0 = CoefField::from_coeffs(&split.basis, vec![3.0, -1.0, 0.5, 0.2]);
        let cfg = IntegratorConfig::for_split(&split);
        let whole = evolve(&split, &spec, &u0, 2.0, &cfg).unwrap();
        let first = evolve(&split, &spec, &u0, 1.0, &cfg).unwrap();
        let second = evolve(&split, &spec, first.endpoint(), 1.0, &cfg).unwrap();
        let d = whole.endpoint().sub(second.endpoint()).norm_h();
        assert!(d < 1e-9, "flow property defect {d}");
    }

    #[test]
    fn energy_reference_values() {
        let b = SpectralBasis::build(DomainSpec::interval(), 4).unwrap();
        let none = NonlinearitySpec::zero(std::f64::consts::PI);
        assert_eq!(energy(&none, 0.0, &CoefField::zero(&b)), 0.0);
        let phi1 = CoefField::single_mode(&b, 0, 1.0);
        let e = energy(&none, 0.0, &phi1);
        assert!((e - 0.5).abs() < 1e-12, "E(φ_1) = μ_1/2 = 0.5, got {e}");
        let tanh = NonlinearitySpec::tanh(0.2, std::f64::consts::PI);
        assert!(energy(&tanh, 0.95, &CoefField::zero(&b)).abs() < 1e-15);
    }

    #[test]
    fn energy_gradient_matches_vector_field() {
        let (split, spec) = setup(0.95);
        let u = CoefField::from_coeffs(&split.basis, vec![1.2, -0.7, 0.3, 0.1]);
        let field = vector_field(&split, &spec, &u);
        let eps = 1e-6;
        for j in 0..4 {
            let mut up = u.clone();
            let mut dn = u.clone();
            up.coeffs[j] += eps;
            dn.coeffs[j] -= eps;
            let fd = (energy(&spec, 0.95, &up) - energy(&spec, 0.95, &dn)) / (2.0 * eps);
            assert!(
                (fd + field.coeffs[j]).abs() < 1e-5 * (1.0 + fd.abs()),
                "mode {j}: fd {fd} vs -field {}",
                -field.coeffs[j]
            );
        }
    }

    #[test]
    fn equilibrium_detection_threshold() {
        let (split, spec) = setup(0.95);
        assert!(is_equilibrium(
            &split,
            &spec,
            &CoefField::zero(&split.basis)
        ));
        let moving = CoefField::single_mode(&split.basis, 0, 1.0);
        assert!(!is_equilibrium(&split, &spec, &moving));
    }

    #[test]
    fn energy_decays_along_trajectories() {
        let (split, spec) = setup(0.95);
        let u0 = CoefField::from_coeffs(&split.basis, vec![5.0, 1.0, -2.0, 0.5]);
        let cfg = IntegratorConfig::for_split(&split);
        let traj = evolve(&split, &spec, &u0, 3.0, &cfg).unwrap();
        let mut prev = f64::INFINITY;
        for u in &traj.fields {
            let e = energy(&spec, 0.95, u);
            assert!(
                e <= prev + 1e-7 * (1.0 + prev.abs()),
                "energy rose: {prev} -> {e}"
            );
            prev = e;
        }
    }

    #[test]
    fn duhamel_residual_vanishes_for_integrable_cases() {
        let (split, _) = setup(0.95);
        let zero = NonlinearitySpec::zero(std::f64::consts::PI);
        let u0 = CoefField::from_coeffs(&split.basis, vec![1.0, -0.5, 0.25, 0.1]);
        let cfg = IntegratorConfig::for_split(&split).with_step(1e-2);
        let traj = evolve(&split, &zero, &u0, 1.0, &cfg).unwrap();
        let r = duhamel_residual(&split, &zero, &traj).unwrap();
        assert!(r < 1e-12, "linear flow residual {r}");

        let constant = NonlinearitySpec::constant(0.4, std::f64::consts::PI);
        let traj2 = evolve(&split, &constant, &u0, 1.0, &cfg).unwrap();
        let r2 = duhamel_residual(&split, &constant, &traj2).unwrap();
        assert!(r2 < 1e-10, "affine flow residual {r2}");
    }

    #[test]
    fn duhamel_residual_is_first_order_for_tanh() {
        let (split, spec) = setup(0.95);
        let u0 = CoefField::from_coeffs(&split.basis, vec![2.0, 0.5, -0.3, 0.1]);
        let res = |h: f64| {
            let cfg = IntegratorConfig::for_split(&split).with_step(h);
            let traj = evolve(&split, &spec, &u0, 1.0, &cfg).unwrap();
            duhamel_residual(&split, &spec, &traj).unwrap()
        };
        let r1 = res(2e-3);
        let r2 = res(1e-3);
        let order = (r1 / r2).log2();
        assert!(order > 0.8, "residual order {order} (r1={r1}, r2={r2})");
    }

    #[test]
    fn divergence_reports_blowup_time() {
        // the center mode grows like e^{(λ-μ_1)t} for λ above the level;
        // starting at 1e10 the norm cap must trip near t = ln(100)/0.4
        let b = SpectralBasis::build(DomainSpec::interval(), 4).unwrap();
        let split = SpectralSplit::split_at(&b, 1, 1.4).unwrap();
        let spec = NonlinearitySpec::zero(std::f64::consts::PI);
        let u0 = CoefField::single_mode(&b, 0, 1e10);
        let cfg = IntegratorConfig::for_split(&split);
        match evolve(&split, &spec, &u0, 30.0, &cfg) {
            Err(CoreError::Divergence { time, .. }) => {
                assert!((time - 11.5).abs() < 1.0, "blow-up time {time}");
            }
            other => panic!("expected divergence error, got {other:?}"),
        }
    }
}
