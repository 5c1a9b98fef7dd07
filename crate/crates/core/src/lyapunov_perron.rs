//! Invariant-manifold construction: the variation-of-constants map is a
//! contraction on exponentially weighted trajectories over a truncated
//! window, its fixed point gives the graph map from center modes to the
//! complementary modes.

use std::sync::Arc;

use rayon::prelude::*;

use crate::error::{CoreError, Result};
use crate::kernel;
use crate::nonlinearity::{evaluate_nemytskii, NonlinearitySpec};
use crate::scalar::{lit, Scalar};
use crate::semiflow::{evolve, IntegratorConfig};
use crate::spectral::{CoefField, SpectralSplit};

/// Discretization of the weighted trajectory space.
#[derive(Debug, Clone)]
pub struct LpConfig<T> {
    /// Half-width of the truncated time window; the weighted tails beyond it
    /// are frozen. Must be at least `8 / β`.
    pub window: T,
    pub nodes_per_unit_time: usize,
    /// Power of the node grading near zero (2 concentrates spacing like
    /// `sqrt(t)` node density).
    pub grading: T,
    pub tolerance: T,
    pub max_iterations: usize,
}

impl<T: Scalar> LpConfig<T> {
    pub fn for_gap(beta: T) -> Self {
        Self {
            window: (lit::<T>(8.0) / beta).max(T::one()),
            nodes_per_unit_time: 24,
            grading: lit(2.0),
            tolerance: lit(1e-10),
            max_iterations: 160,
        }
    }

    pub fn validate(&self, beta: T) -> Result<()> {
        if self.window < lit::<T>(8.0) / beta {
            return Err(CoreError::Precondition(format!(
                "window {} shorter than 8/β = {}",
                self.window,
                (lit::<T>(8.0) / beta).as_f64()
            )));
        }
        if !(self.tolerance > T::zero()) {
            return Err(CoreError::Precondition("tolerance must be positive".into()));
        }
        Ok(())
    }

    /// Analytic estimate of the error committed by freezing the integrand
    /// beyond the window: the slowest transverse rate is `3β/4`.
    pub fn tail_bound(&self, beta: T, flat_bound: T) -> T {
        let rate = beta * lit(0.75);
        lit::<T>(2.0) * flat_bound / rate * (-rate * self.window).exp()
    }
}

/// Symmetric graded grid on `[-T, T]`: node `i` on the positive side sits at
/// `T (i/n)^p`.
#[derive(Debug, Clone)]
pub struct TimeGrid<T> {
    pub times: Vec<T>,
    /// Index of t = 0.
    pub origin: usize,
}

impl<T: Scalar> TimeGrid<T> {
    pub fn build(config: &LpConfig<T>) -> Self {
        let n =
            ((config.window.as_f64() * config.nodes_per_unit_time as f64).ceil() as usize).max(8);
        let mut times = Vec::with_capacity(2 * n + 1);
        for i in (1..=n).rev() {
            let s = lit::<T>(i as f64) / lit(n as f64);
            times.push(-config.window * s.powf(config.grading));
        }
        times.push(T::zero());
        for i in 1..=n {
            let s = lit::<T>(i as f64) / lit(n as f64);
            times.push(config.window * s.powf(config.grading));
        }
        Self { times, origin: n }
    }

    pub fn len(&self) -> usize {
        self.times.len()
    }

    pub fn is_empty(&self) -> bool {
        self.times.is_empty()
    }
}

/// Trajectory candidate on the graded grid, measured in the weighted norm
/// `sup_t e^{-w|t|} ||x(t)||_α` with weight `w = β/2`.
#[derive(Debug, Clone)]
pub struct WeightedTrajectory<T> {
    pub grid: Arc<TimeGrid<T>>,
    pub fields: Vec<CoefField<T>>,
    pub weight: T,
}

impl<T: Scalar> WeightedTrajectory<T> {
    pub fn weighted_norm(&self, shift: T) -> T {
        self.grid
            .times
            .iter()
            .zip(&self.fields)
            .map(|(&t, f)| (-self.weight * t.abs()).exp() * f.norm_alpha(shift))
            .fold(T::zero(), |a, b| a.max(b))
    }

    pub fn weighted_distance(&self, other: &Self, shift: T) -> T {
        self.grid
            .times
            .iter()
            .zip(self.fields.iter().zip(&other.fields))
            .map(|(&t, (a, b))| (-self.weight * t.abs()).exp() * a.sub(b).norm_alpha(shift))
            .fold(T::zero(), |a, b| a.max(b))
    }

    pub fn at_origin(&self) -> &CoefField<T> {
        &self.fields[self.grid.origin]
    }
}

/// The initial iterate: pure center propagation of `y`.
pub fn center_seed<T: Scalar>(
    split: &SpectralSplit<T>,
    y: &[T],
    grid: &Arc<TimeGrid<T>>,
) -> WeightedTrajectory<T> {
    let fields = grid
        .times
        .iter()
        .map(|&t| {
            let mut f = CoefField::zero(&split.basis);
            for (&j, &v) in split.idx_c.iter().zip(y) {
                f.coeffs[j] = v * (-split.rate(j) * t).exp();
            }
            f
        })
        .collect();
    WeightedTrajectory {
        grid: Arc::clone(grid),
        fields,
        weight: split.beta * lit(0.5),
    }
}

/// One application of the variation-of-constants map to the candidate `x`,
/// anchored at center value `y` at time zero.
///
/// The center part integrates outward from zero, the stable part forward
/// from `-T`, the unstable part backward from `T`; the two infinite tails
/// are approximated by freezing the integrand at the window edge, which
/// makes the map exact for constant composed fields.
pub fn lp_apply<T: Scalar>(
    split: &SpectralSplit<T>,
    spec: &NonlinearitySpec<T>,
    y: &[T],
    x: &WeightedTrajectory<T>,
) -> Result<WeightedTrajectory<T>> {
    if y.len() != split.idx_c.len() {
        return Err(CoreError::Precondition(format!(
            "anchor dimension {} does not match center multiplicity {}",
            y.len(),
            split.idx_c.len()
        )));
    }
    let grid = &x.grid;
    let n = grid.len();
    if x.fields.len() != n {
        return Err(CoreError::Precondition(
            "candidate does not live on the configured grid".into(),
        ));
    }
    let n_modes = split.basis.len();
    // composed coefficients at every grid node
    let g: Vec<Vec<T>> = x
        .fields
        .iter()
        .map(|f| evaluate_nemytskii(spec, f).coeffs.clone())
        .collect();

    let mut out = vec![vec![T::zero(); n_modes]; n];

    // stable block: forward recursion from -T with frozen tail
    for &j in &split.idx_s {
        let b = split.rate(j);
        let mut acc = g[0][j] / b;
        out[0][j] = acc;
        for i in 1..n {
            let h = grid.times[i] - grid.times[i - 1];
            let (w0, w1) = kernel::weights_toward_right(b * h);
            acc = acc * (-b * h).exp() + h * (w0 * g[i - 1][j] + w1 * g[i][j]);
            out[i][j] = acc;
        }
    }

    // unstable block: backward recursion from +T with frozen tail
    for &j in &split.idx_u {
        let b = split.rate(j); // negative
        let mut acc = g[n - 1][j] / b;
        out[n - 1][j] = acc;
        for i in (0..n - 1).rev() {
            let h = grid.times[i + 1] - grid.times[i];
            let (w0, w1) = kernel::weights_toward_left(b * h);
            acc = acc * (b * h).exp() - h * (w0 * g[i][j] + w1 * g[i + 1][j]);
            out[i][j] = acc;
        }
    }

    // center block: outward from the origin in both directions
    for (c_pos, &j) in split.idx_c.iter().enumerate() {
        let b = split.rate(j);
        let o = grid.origin;
        out[o][j] = y[c_pos];
        let mut acc = y[c_pos];
        for i in (o + 1)..n {
            let h = grid.times[i] - grid.times[i - 1];
            let (w0, w1) = kernel::weights_toward_right(b * h);
            acc = acc * (-b * h).exp() + h * (w0 * g[i - 1][j] + w1 * g[i][j]);
            out[i][j] = acc;
        }
        acc = y[c_pos];
        for i in (0..o).rev() {
            let h = grid.times[i + 1] - grid.times[i];
            let (w0, w1) = kernel::weights_toward_left(b * h);
            acc = acc * (b * h).exp() - h * (w0 * g[i][j] + w1 * g[i + 1][j]);
            out[i][j] = acc;
        }
    }

    let fields = out
        .into_iter()
        .map(|coeffs| CoefField::from_coeffs(&split.basis, coeffs))
        .collect();
    Ok(WeightedTrajectory {
        grid: Arc::clone(grid),
        fields,
        weight: x.weight,
    })
}

/// Outcome of the fixed-point iteration for one anchor.
#[derive(Debug, Clone)]
pub struct LpSolve<T> {
    pub trajectory: WeightedTrajectory<T>,
    /// Weighted-norm contraction ratios per iteration.
    pub ratios: Vec<T>,
    pub iterations: usize,
}

/// Iterate the map from the center seed until the weighted increment drops
/// below tolerance.
pub fn lp_fixed_point<T: Scalar>(
    split: &SpectralSplit<T>,
    spec: &NonlinearitySpec<T>,
    y: &[T],
    config: &LpConfig<T>,
) -> Result<LpSolve<T>> {
    config.validate(split.beta)?;
    let grid = Arc::new(TimeGrid::build(config));
    let mut x = center_seed(split, y, &grid);
    let mut ratios = Vec::new();
    let mut prev_increment: Option<T> = None;
    let mut consecutive_expanding = 0usize;
    for iter in 1..=config.max_iterations {
        let next = lp_apply(split, spec, y, &x)?;
        let increment = next.weighted_distance(&x, split.shift);
        if let Some(p) = prev_increment {
            if p > T::zero() {
                let ratio = increment / p;
                ratios.push(ratio);
                if ratio >= T::one() {
                    consecutive_expanding += 1;
                    if consecutive_expanding >= 3 {
                        let bound = crate::nonlinearity::m_beta(T::one(), split.beta).0
                            * spec.lipschitz
                            / split.basis.eigenvalue(0).sqrt();
                        return Err(CoreError::ContractionFailure {
                            measured: ratio.as_f64(),
                            bound: bound.as_f64(),
                        });
                    }
                } else {
                    consecutive_expanding = 0;
                }
            }
        }
        x = next;
        if increment < config.tolerance {
            return Ok(LpSolve {
                trajectory: x,
                ratios,
                iterations: iter,
            });
        }
        prev_increment = Some(increment);
    }
    Err(CoreError::NoConvergence(format!(
        "fixed point not reached in {} iterations (last increment above {})",
        config.max_iterations,
        config.tolerance.as_f64()
    )))
}

/// Graph value at one anchor: the non-center components of the fixed point
/// at time zero, cross-checked against the direct tail-integral formula.
pub fn xi_at<T: Scalar>(
    split: &SpectralSplit<T>,
    spec: &NonlinearitySpec<T>,
    y: &[T],
    config: &LpConfig<T>,
) -> Result<CoefField<T>> {
    let solve = lp_fixed_point(split, spec, y, config)?;
    xi_from_solve(split, spec, &solve)
}

/// Extract the graph value from a finished solve.
pub fn xi_from_solve<T: Scalar>(
    split: &SpectralSplit<T>,
    spec: &NonlinearitySpec<T>,
    solve: &LpSolve<T>,
) -> Result<CoefField<T>> {
    let origin = solve.trajectory.at_origin();
    let mut xi = CoefField::zero(&split.basis);
    for &j in split.idx_u.iter().chain(&split.idx_s) {
        xi.coeffs[j] = origin.coeffs[j];
    }
    // direct evaluation of the time-zero tail integrals on the same grid
    let direct = lp_apply(
        split,
        spec,
        &vec![T::zero(); split.idx_c.len()],
        &solve.trajectory,
    )?;
    let mut defect = T::zero();
    for &j in split.idx_u.iter().chain(&split.idx_s) {
        let d = direct.at_origin().coeffs[j] - xi.coeffs[j];
        defect = defect.max(d.abs());
    }
    if defect > lit(1e-6) {
        return Err(CoreError::Inconsistency(format!(
            "graph value disagrees with the direct tail-integral evaluation by {}",
            defect
        )));
    }
    Ok(xi)
}

/// Sample layout of the graph over the center coordinates.
#[derive(Debug, Clone)]
pub enum GraphGeometry<T> {
    /// Symmetric 1-d grid of center coordinates.
    Line { xs: Vec<T> },
    /// Polar grid: `radii x angles`, angle `a` at `2π a / n_angles`.
    Polar { radii: Vec<T>, n_angles: usize },
}

/// How to discretize the sample box.
#[derive(Debug, Clone, Copy)]
pub struct SampleBox<T> {
    pub max_radius: T,
    pub radial_samples: usize,
    pub angular_samples: usize,
}

impl<T: Scalar> SampleBox<T> {
    pub fn covering(radius: T) -> Self {
        Self {
            max_radius: radius,
            radial_samples: 24,
            angular_samples: 40,
        }
    }
}

/// Sampled graph of the invariant manifold over the center space, with the
/// certified Lipschitz estimate of the samples.
#[derive(Debug, Clone)]
pub struct ManifoldGraph<T> {
    pub lambda: T,
    pub geometry: GraphGeometry<T>,
    /// Center coordinates per sample (length m each).
    pub samples: Vec<Vec<T>>,
    /// Graph values per sample; zero on the center block.
    pub values: Vec<CoefField<T>>,
    /// Largest sampled difference-quotient in the fractional norm.
    pub lipschitz: T,
    /// The a-priori bound `M/(1 - M_β L~) + 1` the samples are checked against.
    pub lipschitz_bound: T,
    /// Window truncation estimate attached to every value.
    pub tail_bound: T,
    /// Uniform bound `M_β sup|f| sqrt(|Ω|)` on the values.
    pub value_bound: T,
}

impl<T: Scalar> ManifoldGraph<T> {
    pub fn max_radius(&self) -> T {
        match &self.geometry {
            GraphGeometry::Line { xs } => xs.last().copied().unwrap_or(T::zero()),
            GraphGeometry::Polar { radii, .. } => radii.last().copied().unwrap_or(T::zero()),
        }
    }

    /// Piecewise-linear interpolation of the graph at center coordinates `w`.
    pub fn xi_interpolated(&self, w: &[T]) -> Result<CoefField<T>> {
        match &self.geometry {
            GraphGeometry::Line { xs } => {
                let x = w[0];
                let last = *xs.last().unwrap();
                if x < xs[0] || x > last {
                    return Err(CoreError::OutsideSampleBox(format!(
                        "coordinate {} outside [{}, {}]",
                        x, xs[0], last
                    )));
                }
                let mut hi = 1;
                while hi < xs.len() - 1 && xs[hi] < x {
                    hi += 1;
                }
                let lo = hi - 1;
                let den = xs[hi] - xs[lo];
                let t = if den > T::zero() {
                    (x - xs[lo]) / den
                } else {
                    T::zero()
                };
                Ok(self.values[lo]
                    .scale(T::one() - t)
                    .add(&self.values[hi].scale(t)))
            }
            GraphGeometry::Polar { radii, n_angles } => {
                let r = (w[0] * w[0] + w[1] * w[1]).sqrt();
                let last = *radii.last().unwrap();
                if r > last {
                    return Err(CoreError::OutsideSampleBox(format!(
                        "radius {} outside sampled {}",
                        r, last
                    )));
                }
                let theta = w[1].atan2(w[0]);
                let two_pi = T::PI() * lit(2.0);
                let theta = if theta < T::zero() {
                    theta + two_pi
                } else {
                    theta
                };
                let na = lit::<T>(*n_angles as f64);
                let ta = theta / two_pi * na;
                let a0 = ta.floor().as_f64() as usize % n_angles;
                let a1 = (a0 + 1) % n_angles;
                let ft = ta - ta.floor();
                let mut ri = 1;
                while ri < radii.len() - 1 && radii[ri] < r {
                    ri += 1;
                }
                let r_lo = radii[ri - 1];
                let r_hi = radii[ri];
                let den = r_hi - r_lo;
                let fr = if den > T::zero() {
                    (r - r_lo) / den
                } else {
                    T::zero()
                };
                let idx = |rr: usize, aa: usize| rr * n_angles + aa;
                let v00 = &self.values[idx(ri - 1, a0)];
                let v01 = &self.values[idx(ri - 1, a1)];
                let v10 = &self.values[idx(ri, a0)];
                let v11 = &self.values[idx(ri, a1)];
                let lo = v00.scale(T::one() - ft).add(&v01.scale(ft));
                let hi = v10.scale(T::one() - ft).add(&v11.scale(ft));
                Ok(lo.scale(T::one() - fr).add(&hi.scale(fr)))
            }
        }
    }

    /// Largest second difference of the samples: an empirical bound on the
    /// piecewise-linear interpolation error.
    pub fn interpolation_bound(&self, shift: T) -> T {
        let mut worst = T::zero();
        match &self.geometry {
            GraphGeometry::Line { xs } => {
                for i in 1..xs.len() - 1 {
                    let second = self.values[i - 1]
                        .add(&self.values[i + 1])
                        .sub(&self.values[i].scale(lit(2.0)))
                        .norm_alpha(shift);
                    worst = worst.max(second * lit(0.5));
                }
            }
            GraphGeometry::Polar { radii, n_angles } => {
                for ri in 1..radii.len() - 1 {
                    for a in 0..*n_angles {
                        let idx = |rr: usize, aa: usize| rr * n_angles + aa % n_angles;
                        let second = self.values[idx(ri - 1, a)]
                            .add(&self.values[idx(ri + 1, a)])
                            .sub(&self.values[idx(ri, a)].scale(lit(2.0)))
                            .norm_alpha(shift);
                        worst = worst.max(second * lit(0.5));
                        let second_a = self.values[idx(ri, (a + n_angles - 1) % n_angles)]
                            .add(&self.values[idx(ri, a + 1)])
                            .sub(&self.values[idx(ri, a)].scale(lit(2.0)))
                            .norm_alpha(shift);
                        worst = worst.max(second_a * lit(0.5));
                    }
                }
            }
        }
        worst
    }
}

/// Solve the fixed-point problem over the sample box and assemble the graph.
/// Distinct anchors are independent, so the solves run in parallel.
pub fn build_manifold_graph<T: Scalar>(
    split: &SpectralSplit<T>,
    spec: &NonlinearitySpec<T>,
    sample_box: &SampleBox<T>,
    config: &LpConfig<T>,
    m_const: T,
) -> Result<ManifoldGraph<T>> {
    let m = split.multiplicity();
    if m > 2 {
        return Err(CoreError::Precondition(format!(
            "center multiplicities above 2 are out of scope (got {m})"
        )));
    }
    let smallness = crate::nonlinearity::smallness_margin(spec, &split.basis, split.k, m_const)?;
    if smallness.margin <= T::zero() {
        return Err(CoreError::Precondition(format!(
            "contraction margin not positive: {}",
            smallness.margin
        )));
    }
    let (geometry, samples) = layout(sample_box, m);
    let solves: Vec<Result<CoefField<T>>> = samples
        .par_iter()
        .map(|y| xi_at(split, spec, y, config))
        .collect();
    let mut values = Vec::with_capacity(solves.len());
    for (i, s) in solves.into_iter().enumerate() {
        match s {
            Ok(v) => values.push(v),
            Err(e) => {
                return Err(CoreError::CertificationFailure(format!(
                    "fixed-point solve failed at sample {:?}: {e}",
                    samples[i]
                )))
            }
        }
    }
    let lipschitz_bound = m_const / smallness.margin + T::one();
    let mu_center = split.mu_k + split.shift;

    let mut lipschitz = T::zero();
    for (i, j) in neighbour_pairs(&geometry) {
        let dy = center_distance(&samples[i], &samples[j], mu_center);
        if dy > T::zero() {
            let dv = values[i].sub(&values[j]).norm_alpha(split.shift);
            lipschitz = lipschitz.max(dv / dy);
        }
    }

    let value_bound = smallness.m_beta * spec.sup_bound * split.basis.domain.volume().sqrt();
    let tail_bound = config.tail_bound(
        split.beta,
        spec.sup_bound * split.basis.domain.volume().sqrt(),
    );
    Ok(ManifoldGraph {
        lambda: split.lambda,
        geometry,
        samples,
        values,
        lipschitz,
        lipschitz_bound,
        tail_bound,
        value_bound,
    })
}

fn layout<T: Scalar>(sample_box: &SampleBox<T>, m: usize) -> (GraphGeometry<T>, Vec<Vec<T>>) {
    match m {
        1 => {
            let n = sample_box.radial_samples.max(2);
            let mut xs = Vec::with_capacity(2 * n + 1);
            for i in -(n as isize)..=(n as isize) {
                xs.push(sample_box.max_radius * lit(i as f64) / lit(n as f64));
            }
            let samples = xs.iter().map(|&x| vec![x]).collect();
            (GraphGeometry::Line { xs }, samples)
        }
        _ => {
            let nr = sample_box.radial_samples.max(2);
            let na = sample_box.angular_samples.max(8);
            let radii: Vec<T> = (0..=nr)
                .map(|i| sample_box.max_radius * lit(i as f64) / lit(nr as f64))
                .collect();
            let mut samples = Vec::with_capacity((nr + 1) * na);
            let two_pi = T::PI() * lit(2.0);
            for &r in &radii {
                for a in 0..na {
                    let th = two_pi * lit(a as f64) / lit(na as f64);
                    samples.push(vec![r * th.cos(), r * th.sin()]);
                }
            }
            (
                GraphGeometry::Polar {
                    radii,
                    n_angles: na,
                },
                samples,
            )
        }
    }
}

fn neighbour_pairs<T: Scalar>(geometry: &GraphGeometry<T>) -> Vec<(usize, usize)> {
    match geometry {
        GraphGeometry::Line { xs } => (1..xs.len()).map(|i| (i - 1, i)).collect(),
        GraphGeometry::Polar { radii, n_angles } => {
            let mut pairs = Vec::new();
            for ri in 0..radii.len() {
                for a in 0..*n_angles {
                    let here = ri * n_angles + a;
                    if ri + 1 < radii.len() {
                        pairs.push((here, (ri + 1) * n_angles + a));
                    }
                    if ri > 0 {
                        // angular neighbours matter only off the origin
                        pairs.push((here, ri * n_angles + (a + 1) % n_angles));
                    }
                }
            }
            pairs
        }
    }
}

fn center_distance<T: Scalar>(a: &[T], b: &[T], mu_center: T) -> T {
    let d2: T = a.iter().zip(b).map(|(&x, &y)| (x - y) * (x - y)).sum();
    (mu_center * d2).sqrt()
}

/// Integrate the full semiflow from the lifted point `y + ξ(y)` and measure
/// how far the trajectory drifts from the interpolated graph in the
/// fractional norm.
pub fn invariance_residual<T: Scalar>(
    split: &SpectralSplit<T>,
    spec: &NonlinearitySpec<T>,
    graph: &ManifoldGraph<T>,
    y: &[T],
    horizon: T,
    int_config: &IntegratorConfig<T>,
) -> Result<T> {
    let xi0 = graph.xi_interpolated(y)?;
    let mut u0 = split.field_from_center(y);
    u0 = u0.add(&xi0);
    let traj = evolve(split, spec, &u0, horizon, int_config)?;
    let mut worst = T::zero();
    for u in &traj.fields {
        let w = split.center_coords(u);
        let xi = graph.xi_interpolated(&w).map_err(|_| {
            CoreError::Inconclusive(format!(
                "trajectory left the sampled box at center radius {}",
                w.iter().map(|&c| c * c).sum::<T>().sqrt()
            ))
        })?;
        let mut transverse = CoefField::zero(&split.basis);
        for &j in split.idx_u.iter().chain(&split.idx_s) {
            transverse.coeffs[j] = u.coeffs[j] - xi.coeffs[j];
        }
        worst = worst.max(transverse.norm_alpha(split.shift));
    }
    Ok(worst)
}
