//! Bounded sign-condition nonlinearities, their composition operators on the
//! Galerkin space, and the scalar constants of the smallness condition.

use std::sync::Arc;

use rand::Rng;
use rand::SeedableRng;
use rand_chacha::ChaCha8Rng;

use crate::error::{CoreError, Result};
use crate::quadrature::gauss_legendre;
use crate::scalar::{lit, Scalar};
use crate::spectral::{CoefField, SpectralBasis};

/// Which sign condition the declared limits follow: `Standard` pushes
/// outward for large positive arguments, `Dual` is the mirrored condition.
#[derive(Debug, Clone, Copy, PartialEq, Eq)]
pub enum Orientation {
    Standard,
    Dual,
}

impl Orientation {
    /// +1 for standard, -1 for dual; the sign that multiplies the radial
    /// push in every reduced-flow estimate.
    pub fn sign<T: Scalar>(self) -> T {
        match self {
            Orientation::Standard => T::one(),
            Orientation::Dual => -T::one(),
        }
    }
}

/// Built-in pointwise profiles `f(x, t)`.
#[derive(Debug, Clone, Copy)]
pub enum Profile<T> {
    Zero,
    Constant {
        value: T,
    },
    /// `c * tanh(t)`
    Tanh {
        c: T,
    },
    /// `c * tanh(t - shift)`; not odd, used to exercise mirror symmetries
    TanhShifted {
        c: T,
        shift: T,
    },
    /// `c * (2/pi) * atan(t)`
    Atan {
        c: T,
    },
    /// `(base + amp * sin(pi x_1/L) [ * sin(pi x_2/L)]) * tanh(t)` with
    /// `0 <= amp < base`, exercising x-dependence with limits still uniform.
    XModulatedTanh {
        base: T,
        amp: T,
    },
}

/// A nonlinearity together with its declared constants. The declared values
/// are validated against the profile on sample grids at construction.
#[derive(Debug, Clone)]
pub struct NonlinearitySpec<T> {
    pub profile: Profile<T>,
    pub orientation: Orientation,
    /// Declared limit magnitude at +infinity (standard) resp. its mirror.
    pub limit_pos: T,
    /// Declared limit magnitude at -infinity.
    pub limit_neg: T,
    pub lipschitz: T,
    pub sup_bound: T,
    /// Side length of the domain, used by the x-modulated profile.
    length: T,
}

impl<T: Scalar> NonlinearitySpec<T> {
    pub fn new(profile: Profile<T>, orientation: Orientation, length: T) -> Self {
        let (limit_pos, limit_neg, lipschitz, sup_bound) = match profile {
            Profile::Zero => (T::zero(), T::zero(), T::zero(), T::zero()),
            Profile::Constant { value } => (value, value, T::zero(), value.abs()),
            Profile::Tanh { c } | Profile::TanhShifted { c, .. } => {
                (c.abs(), c.abs(), c.abs(), c.abs())
            }
            Profile::Atan { c } => (c.abs(), c.abs(), c.abs() * lit(2.0) / T::PI(), c.abs()),
            Profile::XModulatedTanh { base, amp } => (
                base.abs(),
                base.abs(),
                base.abs() + amp.abs(),
                base.abs() + amp.abs(),
            ),
        };
        Self {
            profile,
            orientation,
            limit_pos,
            limit_neg,
            lipschitz,
            sup_bound,
            length,
        }
    }

    pub fn tanh(c: T, length: T) -> Self {
        let orientation = if c >= T::zero() {
            Orientation::Standard
        } else {
            Orientation::Dual
        };
        Self::new(Profile::Tanh { c }, orientation, length)
    }

    pub fn atan(c: T, length: T) -> Self {
        let orientation = if c >= T::zero() {
            Orientation::Standard
        } else {
            Orientation::Dual
        };
        Self::new(Profile::Atan { c }, orientation, length)
    }

    pub fn constant(value: T, length: T) -> Self {
        Self::new(Profile::Constant { value }, Orientation::Standard, length)
    }

    pub fn zero(length: T) -> Self {
        Self::new(Profile::Zero, Orientation::Standard, length)
    }

    pub fn eval(&self, x: &[T; 2], t: T) -> T {
        match self.profile {
            Profile::Zero => T::zero(),
            Profile::Constant { value } => value,
            Profile::Tanh { c } => c * t.tanh(),
            Profile::TanhShifted { c, shift } => c * (t - shift).tanh(),
            Profile::Atan { c } => c * lit::<T>(2.0) / T::PI() * t.atan(),
            Profile::XModulatedTanh { base, amp } => self.modulation(x, base, amp) * t.tanh(),
        }
    }

    /// Partial derivative in the state variable.
    pub fn eval_dt(&self, x: &[T; 2], t: T) -> T {
        match self.profile {
            Profile::Zero | Profile::Constant { .. } => T::zero(),
            Profile::Tanh { c } => {
                let s = t.cosh();
                c / (s * s)
            }
            Profile::TanhShifted { c, shift } => {
                let s = (t - shift).cosh();
                c / (s * s)
            }
            Profile::Atan { c } => c * lit::<T>(2.0) / T::PI() / (T::one() + t * t),
            Profile::XModulatedTanh { base, amp } => {
                let s = t.cosh();
                self.modulation(x, base, amp) / (s * s)
            }
        }
    }

    /// Antiderivative `F(x, t) = ∫_0^t f(x, s) ds`, closed form per profile.
    pub fn antiderivative(&self, x: &[T; 2], t: T) -> T {
        match self.profile {
            Profile::Zero => T::zero(),
            Profile::Constant { value } => value * t,
            Profile::Tanh { c } => c * ln_cosh(t),
            Profile::TanhShifted { c, shift } => c * (ln_cosh(t - shift) - ln_cosh(-shift)),
            Profile::Atan { c } => {
                c * lit::<T>(2.0) / T::PI() * (t * t.atan() - (T::one() + t * t).ln() * lit(0.5))
            }
            Profile::XModulatedTanh { base, amp } => self.modulation(x, base, amp) * ln_cosh(t),
        }
    }

    fn modulation(&self, x: &[T; 2], base: T, amp: T) -> T {
        let w = T::PI() / self.length;
        let m1 = (w * x[0]).sin();
        let m2 = if x[1] > T::zero() {
            (w * x[1]).sin()
        } else {
            T::one()
        };
        base + amp * m1 * m2
    }

    /// The mirror profile `(x, t) -> -f(x, -t)`. Orientation is preserved:
    /// the mirror of a standard nonlinearity is standard.
    pub fn reflected(&self) -> Self {
        let profile = match self.profile {
            Profile::Zero => Profile::Zero,
            Profile::Constant { value } => Profile::Constant { value: -value },
            Profile::Tanh { c } => Profile::Tanh { c },
            Profile::TanhShifted { c, shift } => Profile::TanhShifted { c, shift: -shift },
            Profile::Atan { c } => Profile::Atan { c },
            Profile::XModulatedTanh { base, amp } => Profile::XModulatedTanh { base, amp },
        };
        Self {
            profile,
            ..self.clone()
        }
    }

    /// Validate the declared bounds against dense samples of the profile.
    pub fn validate_declared(&self, basis: &SpectralBasis<T>) -> Result<()> {
        let mut worst_val = T::zero();
        let mut worst_slope = T::zero();
        let ts: Vec<T> = (-60..=60).map(|i| lit::<T>(i as f64) * lit(0.5)).collect();
        for node in &basis.grid().nodes {
            for &t in &ts {
                worst_val = worst_val.max(self.eval(node, t).abs());
                worst_slope = worst_slope.max(self.eval_dt(node, t).abs());
            }
        }
        if worst_val > self.sup_bound + lit(1e-9) {
            return Err(CoreError::NonconformingNonlinearity(format!(
                "sampled |f| = {} exceeds declared bound {}",
                worst_val, self.sup_bound
            )));
        }
        if worst_slope > self.lipschitz + lit(1e-9) {
            return Err(CoreError::NonconformingNonlinearity(format!(
                "sampled |df/dt| = {} exceeds declared Lipschitz constant {}",
                worst_slope, self.lipschitz
            )));
        }
        Ok(())
    }

    /// Check the declared sign condition by probing `f(x, ±t)` for
    /// `t >= t_probe` on the basis grid.
    pub fn verify_landesman_lazer(
        &self,
        basis: &SpectralBasis<T>,
        t_probe: T,
        tol: T,
    ) -> Result<LandesmanLazerReport<T>> {
        if !(t_probe > T::zero()) {
            return Err(CoreError::Precondition("t_probe must be positive".into()));
        }
        let ts: Vec<T> = (0..8)
            .map(|i| t_probe * (T::one() + lit::<T>(i as f64) * lit(0.75)))
            .collect();
        let mut inf_plus = T::infinity();
        let mut sup_plus = T::neg_infinity();
        let mut inf_minus = T::infinity();
        let mut sup_minus = T::neg_infinity();
        for node in &basis.grid().nodes {
            for &t in &ts {
                let fp = self.eval(node, t);
                let fm = self.eval(node, -t);
                inf_plus = inf_plus.min(fp);
                sup_plus = sup_plus.max(fp);
                inf_minus = inf_minus.min(fm);
                sup_minus = sup_minus.max(fm);
            }
        }
        let (margin_pos, margin_neg) = match self.orientation {
            // f(x, t) >= limit_pos - tol and f(x, -t) <= -(limit_neg) + tol
            Orientation::Standard => (inf_plus - self.limit_pos, -self.limit_neg - sup_minus),
            // mirrored signs
            Orientation::Dual => (-self.limit_pos - sup_plus, inf_minus - self.limit_neg),
        };
        let limits_positive = self.limit_pos > T::zero() && self.limit_neg > T::zero();
        let report = LandesmanLazerReport {
            orientation: self.orientation,
            margin_pos,
            margin_neg,
            limits_positive,
        };
        if !limits_positive {
            return Err(CoreError::NonconformingNonlinearity(
                "declared limits must be strictly positive".into(),
            ));
        }
        if margin_pos < -tol || margin_neg < -tol {
            return Err(CoreError::NonconformingNonlinearity(format!(
                "sign condition violated: asymptotic margins ({}, {})",
                margin_pos, margin_neg
            )));
        }
        Ok(report)
    }
}

fn ln_cosh<T: Scalar>(t: T) -> T {
    // ln cosh t = |t| + ln(1 + e^{-2|t|}) - ln 2, overflow-safe
    let a = t.abs();
    a + (T::one() + (-(a + a)).exp()).ln() - lit::<T>(2.0).ln()
}

/// Empirical asymptotic margins of the sign condition.
#[derive(Debug, Clone)]
pub struct LandesmanLazerReport<T> {
    pub orientation: Orientation,
    pub margin_pos: T,
    pub margin_neg: T,
    pub limits_positive: bool,
}

/// Coefficients of the composed field `f(·, u(·))` projected back onto the
/// basis by quadrature.
pub fn evaluate_nemytskii<T: Scalar>(spec: &NonlinearitySpec<T>, u: &CoefField<T>) -> CoefField<T> {
    let basis = u.basis();
    let values = u.values_at_nodes();
    let composed = compose_values(spec, basis, &values);
    CoefField::from_coeffs(basis, basis.project_values(&composed))
}

/// Pointwise composition on already-evaluated nodal values.
pub fn compose_values<T: Scalar>(
    spec: &NonlinearitySpec<T>,
    basis: &SpectralBasis<T>,
    values: &[T],
) -> Vec<T> {
    basis
        .grid()
        .nodes
        .iter()
        .zip(values)
        .map(|(node, &v)| spec.eval(node, v))
        .collect()
}

/// The gradient-space-to-flat Lipschitz constant `L_f / sqrt(μ_1)`,
/// cross-checked on random coefficient pairs.
pub fn lipschitz_estimate<T: Scalar>(
    spec: &NonlinearitySpec<T>,
    basis: &Arc<SpectralBasis<T>>,
    seed: u64,
) -> Result<T> {
    let mu1 = basis.eigenvalue(0);
    let l_tilde = spec.lipschitz / mu1.sqrt();
    let mut rng = ChaCha8Rng::seed_from_u64(seed);
    for _ in 0..24 {
        let mut a = vec![T::zero(); basis.len()];
        let mut b = vec![T::zero(); basis.len()];
        for j in 0..basis.len() {
            a[j] = lit::<T>(rng.random_range(-3.0..3.0));
            b[j] = lit::<T>(rng.random_range(-3.0..3.0));
        }
        let ua = CoefField::from_coeffs(basis, a);
        let ub = CoefField::from_coeffs(basis, b);
        let fa = evaluate_nemytskii(spec, &ua);
        let fb = evaluate_nemytskii(spec, &ub);
        let num = fa.sub(&fb).norm_h();
        let den = ua.sub(&ub).norm_v();
        if den > T::zero() && num > l_tilde * den + lit(1e-9) {
            return Err(CoreError::Inconsistency(format!(
                "measured Lipschitz ratio {} exceeds declared bound {}",
                (num / den),
                l_tilde
            )));
        }
    }
    Ok(l_tilde)
}

/// `M_β = M ∫_0^∞ (2 + τ^{-1/2}) e^{-βτ/4} dτ`, returned as the closed form
/// `M (8/β + 2 sqrt(π/β))` together with an independent quadrature
/// evaluation (substituting `τ = σ^2` removes the kernel singularity).
pub fn m_beta<T: Scalar>(m_const: T, beta: T) -> (T, T) {
    let closed = m_const * (lit::<T>(8.0) / beta + lit::<T>(2.0) * (T::PI() / beta).sqrt());
    // after substitution: ∫_0^∞ (4σ + 2) e^{-βσ²/4} dσ
    let sigma_max = (lit::<T>(140.0) / beta).sqrt();
    let (nodes, weights) = gauss_legendre::<T>(220);
    let half = sigma_max * lit(0.5);
    let mut acc = T::zero();
    for (&x, &w) in nodes.iter().zip(&weights) {
        let sigma = half * (x + T::one());
        let val = (lit::<T>(4.0) * sigma + lit(2.0)) * (-beta * sigma * sigma * lit(0.25)).exp();
        acc += w * half * val;
    }
    (closed, m_const * acc)
}

/// Result of the smallness check for one resonance level.
#[derive(Debug, Clone)]
pub struct SmallnessReport<T> {
    pub beta: T,
    pub m_const: T,
    pub m_beta: T,
    pub l_tilde: T,
    /// `1 - M_β L_f / sqrt(μ_1)`; positive means the contraction condition
    /// holds at this level.
    pub margin: T,
}

/// Evaluate the contraction margin at level `k` using the semigroup
/// constant `m_const`.
pub fn smallness_margin<T: Scalar>(
    spec: &NonlinearitySpec<T>,
    basis: &Arc<SpectralBasis<T>>,
    k: usize,
    m_const: T,
) -> Result<SmallnessReport<T>> {
    let beta = basis.spectral_gap(k)?;
    let (closed, quad) = m_beta(m_const, beta);
    if (closed - quad).abs() > lit::<T>(1e-8) * (T::one() + closed.abs()) {
        return Err(CoreError::Inconsistency(format!(
            "closed-form and quadrature evaluations of the kernel integral disagree: {} vs {}",
            closed, quad
        )));
    }
    let l_tilde = spec.lipschitz / basis.eigenvalue(0).sqrt();
    Ok(SmallnessReport {
        beta,
        m_const,
        m_beta: closed,
        l_tilde,
        margin: T::one() - closed * l_tilde,
    })
}

/// Left- and right-hand side of the saturation inequality at scale `s`:
/// `lhs = ∫ f(x, s v + u) v dx`, `rhs = ∫ (limit_pos v_+ + limit_neg v_-) dx - ε`.
pub fn landesman_lazer_margin<T: Scalar>(
    spec: &NonlinearitySpec<T>,
    basis: &SpectralBasis<T>,
    s: T,
    v: &CoefField<T>,
    u: &CoefField<T>,
    eps: T,
) -> (T, T) {
    let vv = v.values_at_nodes();
    let uv = u.values_at_nodes();
    let grid = basis.grid();
    let mut lhs = T::zero();
    let mut rhs = T::zero();
    for q in 0..grid.len() {
        let w = grid.weights[q];
        let vq = vv[q];
        lhs += w * spec.eval(&grid.nodes[q], s * vq + uv[q]) * vq;
        let plus = vq.max(T::zero());
        let minus = (-vq).max(T::zero());
        rhs += w * (spec.limit_pos * plus + spec.limit_neg * minus);
    }
    (lhs, rhs - eps)
}
