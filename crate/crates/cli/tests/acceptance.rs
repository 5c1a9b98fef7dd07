//! Acceptance suite: one test per claim the laboratory must establish, each
//! printing a `criterion N: PASS/FAIL` line (visible with `--nocapture`).
//! Tolerances are pinned here, not configurable.

use std::path::PathBuf;
use std::sync::Arc;
use std::time::Instant;

use rand::Rng;
use rand::SeedableRng;
use rand_chacha::ChaCha8Rng;

use resonance_cli::config::ExperimentConfig;
use resonance_cli::pipeline::{run_experiment, Stage};
use resonance_core::equilibria::{default_seeds, deflated_search, NewtonConfig};
use resonance_core::lyapunov_perron::{
    build_manifold_graph, invariance_residual, lp_fixed_point, LpConfig, SampleBox,
};
use resonance_core::nonlinearity::{
    evaluate_nemytskii, m_beta, NonlinearitySpec, Orientation, Profile,
};
use resonance_core::reduced::{
    certify_sphere_shape, compute_attractor, gronwall_envelope, integrate_reduced,
    invariant_annulus, AnnulusConfig, AttractorConfig,
};
use resonance_core::semiflow::{energy, evolve, vector_field, IntegratorConfig};
use resonance_core::spectral::{CoefField, DomainSpec, SpectralBasis, SpectralSplit};

const PI: f64 = std::f64::consts::PI;

struct Criterion {
    name: String,
    started: Instant,
    checks: Vec<(String, bool)>,
}

impl Criterion {
    fn new(name: &str) -> Self {
        Self {
            name: name.into(),
            started: Instant::now(),
            checks: Vec::new(),
        }
    }

    fn check(&mut self, label: impl Into<String>, ok: bool) {
        self.checks.push((label.into(), ok));
    }

    fn finish(self) {
        let pass = self.checks.iter().all(|(_, ok)| *ok);
        println!(
            "{}: {} ({:.1}s)",
            self.name,
            if pass { "PASS" } else { "FAIL" },
            self.started.elapsed().as_secs_f64()
        );
        for (label, ok) in &self.checks {
            if !ok {
                println!("  failed: {label}");
            }
        }
        assert!(pass, "{} failed", self.name);
    }
}

fn interval_basis(n: usize) -> Arc<SpectralBasis<f64>> {
    SpectralBasis::build(DomainSpec::interval(), n).unwrap()
}

fn config_path(name: &str) -> PathBuf {
    PathBuf::from(env!("CARGO_MANIFEST_DIR"))
        .join("../../configs")
        .join(name)
}

fn temp_out(tag: &str) -> String {
    format!(
        "output.directory={}",
        std::env::temp_dir().join(format!("acc-{tag}")).display()
    )
}

#[test]
fn criterion_1_constants() {
    let mut c = Criterion::new("criterion 1 (spectral constants and kernel integral)");
    let b = interval_basis(4);
    let eig: Vec<f64> = b.modes.iter().map(|m| m.eigenvalue).collect();
    c.check(
        format!("eigenvalues {eig:?} are the exact squares"),
        eig == vec![1.0, 4.0, 9.0, 16.0],
    );
    c.check(
        "beta_1 = 3",
        (b.spectral_gap(1).unwrap() - 3.0).abs() == 0.0,
    );
    c.check(
        "beta_2 = 3",
        (b.spectral_gap(2).unwrap() - 3.0).abs() == 0.0,
    );
    c.check(
        "beta_3 = 5",
        (b.spectral_gap(3).unwrap() - 5.0).abs() == 0.0,
    );
    let (closed, quad) = m_beta::<f64>(1.0, 3.0);
    c.check(
        format!("kernel integral {closed:.6} = 4.71332 within 1e-5"),
        (closed - 4.71332).abs() <= 1e-5,
    );
    c.check(
        format!(
            "closed form vs quadrature differ by {:.2e} <= 1e-8",
            (closed - quad).abs()
        ),
        (closed - quad).abs() <= 1e-8,
    );
    c.finish();
}

#[test]
fn criterion_2_contraction() {
    let mut c = Criterion::new("criterion 2 (fixed-point contraction)");
    let b = interval_basis(4);
    let split = SpectralSplit::split_at(&b, 1, 0.95).unwrap();
    let spec = NonlinearitySpec::tanh(0.1, PI);
    let mut config = LpConfig::for_gap(split.beta);
    config.tolerance = 1e-10;
    let ratio_cap = 0.4713 * 1.1;
    let mut rng = ChaCha8Rng::seed_from_u64(2024);
    let mut worst_ratio: f64 = 0.0;
    let mut worst_iters = 0usize;
    for _ in 0..20 {
        let y = rng.random_range(-10.0..10.0);
        let solve = lp_fixed_point(&split, &spec, &[y], &config).unwrap();
        worst_iters = worst_iters.max(solve.iterations);
        for &r in &solve.ratios {
            worst_ratio = worst_ratio.max(r);
        }
    }
    c.check(
        format!("max ratio {worst_ratio:.4} <= {ratio_cap:.4} over 20 anchors"),
        worst_ratio <= ratio_cap,
    );
    c.check(
        format!("fixed point within {worst_iters} <= 40 iterations at 1e-10"),
        worst_iters <= 40,
    );
    c.finish();
}

#[test]
fn criterion_3_manifold_lipschitz() {
    let mut c = Criterion::new("criterion 3 (graph Lipschitz bound over the window)");
    let l0 = 1.0 / (1.0 - 0.4713) + 1.0;
    for &lambda in &[0.85, 0.925, 1.0, 1.075, 1.15] {
        let b = interval_basis(4);
        let split = SpectralSplit::split_at(&b, 1, lambda).unwrap();
        let spec = NonlinearitySpec::tanh(0.1, PI);
        let config = LpConfig::for_gap(split.beta);
        let graph = build_manifold_graph(
            &split,
            &spec,
            &SampleBox {
                max_radius: 10.0,
                radial_samples: 20,
                angular_samples: 0,
            },
            &config,
            1.0,
        )
        .unwrap();
        c.check(
            format!(
                "lambda {lambda}: sampled Lipschitz {:.4} <= {l0:.4}",
                graph.lipschitz
            ),
            graph.lipschitz <= l0,
        );
    }
    c.finish();
}

#[test]
fn criterion_4_invariance() {
    let mut c = Criterion::new("criterion 4 (dynamical invariance within budget)");
    let b = interval_basis(4);
    let split = SpectralSplit::split_at(&b, 1, 0.95).unwrap();
    let spec = NonlinearitySpec::tanh(0.1, PI);
    let config = LpConfig::for_gap(split.beta);
    let graph = build_manifold_graph(
        &split,
        &spec,
        &SampleBox {
            max_radius: 12.0,
            radial_samples: 30,
            angular_samples: 0,
        },
        &config,
        1.0,
    )
    .unwrap();
    let int_cfg = IntegratorConfig::for_split(&split);

    let budget_fp = 50.0 * config.tolerance;
    let budget_interp = 2.5 * (graph.interpolation_bound(split.shift) + graph.tail_bound);
    let budget_integ = {
        let xi = graph.xi_interpolated(&[3.0]).unwrap();
        let u0 = split.field_from_center(&[3.0]).add(&xi);
        let run = |h: f64| {
            let cfg = int_cfg.with_step(h).with_stride(1_000_000);
            evolve(&split, &spec, &u0, 5.0, &cfg)
                .unwrap()
                .endpoint()
                .clone()
        };
        4.0 * run(int_cfg.step)
            .sub(&run(int_cfg.step * 0.5))
            .norm_alpha(split.shift)
    };
    let budget = budget_fp + budget_interp + budget_integ;
    println!(
        "  budget terms: fixed-point {budget_fp:.3e}, interpolation {budget_interp:.3e}, integrator {budget_integ:.3e}"
    );
    let mut rng = ChaCha8Rng::seed_from_u64(7);
    for i in 0..10 {
        let y = rng.random_range(-5.0..5.0);
        let r = invariance_residual(&split, &spec, &graph, &[y], 5.0, &int_cfg).unwrap();
        c.check(
            format!("start {i} (y = {y:.3}): residual {r:.3e} <= budget {budget:.3e}"),
            r <= budget,
        );
    }
    c.finish();
}

#[test]
fn criterion_5_annulus() {
    let mut c = Criterion::new("criterion 5 (certified invariant annulus)");
    let b = interval_basis(4);
    let spec = NonlinearitySpec::tanh(0.2, PI);
    let mut previous: Option<(f64, f64)> = None;
    for &lambda in &[0.95, 0.975, 0.99] {
        let split = SpectralSplit::split_at(&b, 1, lambda).unwrap();
        let lp = LpConfig::for_gap(split.beta);
        let c_f = 0.2 * PI.sqrt();
        let box_radius = 2.2 * c_f / (1.0 - lambda) + 24.0;
        let graph = build_manifold_graph(
            &split,
            &spec,
            &SampleBox {
                max_radius: box_radius,
                radial_samples: 40,
                angular_samples: 0,
            },
            &lp,
            1.0,
        )
        .unwrap();
        let ann = invariant_annulus(&split, &spec, &graph, &AnnulusConfig::default()).unwrap();
        c.check(
            format!("lambda {lambda}: c0 = {:.6} within 1e-4 of 0.15958", ann.c0),
            (ann.c0 - 0.15958).abs() <= 1e-4,
        );
        c.check(
            format!(
                "lambda {lambda}: {} boundary samples >= 256",
                ann.sphere_samples
            ),
            ann.sphere_samples >= 256,
        );
        if let Some((pa, pb)) = previous {
            c.check(
                format!(
                    "radii nondecreasing: a {pa:.4} -> {:.4}, b {pb:.4} -> {:.4}",
                    ann.inner, ann.outer
                ),
                ann.inner >= pa - 1e-9 && ann.outer >= pb - 1e-9,
            );
        }
        previous = Some((ann.inner, ann.outer));

        // every reduced trajectory from the annulus respects the envelope
        let mut envelopes_ok = true;
        for frac in [0.0, 0.35, 0.7, 1.0] {
            let w0 = ann.inner + (ann.outer - ann.inner) * frac;
            let path = integrate_reduced(&split, &spec, &graph, &[w0], 40.0, 0.1).unwrap();
            for (t, w) in path {
                let env = gronwall_envelope(&ann, w0, t).unwrap();
                if w[0] * w[0] > env + 1e-6 * (1.0 + env) {
                    envelopes_ok = false;
                }
            }
        }
        c.check(
            format!("lambda {lambda}: envelope respected (1e-6 relative)"),
            envelopes_ok,
        );
    }
    c.finish();
}

#[test]
fn criterion_6_bifurcation_from_infinity() {
    let mut c = Criterion::new("criterion 6 (sphere-shaped limit set)");

    // one-dimensional center: the cover is a zero-sphere
    {
        let b = interval_basis(4);
        let split = SpectralSplit::split_at(&b, 1, 0.95).unwrap();
        let spec = NonlinearitySpec::tanh(0.2, PI);
        let lp = LpConfig::for_gap(split.beta);
        let graph = build_manifold_graph(
            &split,
            &spec,
            &SampleBox {
                max_radius: 20.0,
                radial_samples: 40,
                angular_samples: 0,
            },
            &lp,
            1.0,
        )
        .unwrap();
        let ann = invariant_annulus(&split, &spec, &graph, &AnnulusConfig::default()).unwrap();
        let cover = compute_attractor(
            &split,
            &spec,
            &graph,
            &ann,
            &AttractorConfig {
                seed_radii: 6,
                seed_angles: 2,
                ..Default::default()
            },
        )
        .unwrap();
        let shape = certify_sphere_shape(&cover);
        c.check(
            format!("interval: {} (cover components = 2)", shape.detail),
            shape.pass && shape.cover_components == 2,
        );
        c.check(
            format!(
                "interval: {} equilibria >= 2 on the cover",
                cover.equilibria.len()
            ),
            cover.equilibria.len() >= 2,
        );
    }

    // two-dimensional center on the square: a circle-like separator
    {
        let domain = DomainSpec::<f64> {
            kind: resonance_core::spectral::DomainKind::Square,
            length: PI,
            quadrature_points_per_dim: 32,
        };
        let b = SpectralBasis::build(domain, 39).unwrap();
        let split = SpectralSplit::split_at(&b, 2, 4.95).unwrap();
        assert_eq!(split.multiplicity(), 2);
        let spec = NonlinearitySpec::tanh(0.25, PI);
        let mut lp = LpConfig::for_gap(split.beta);
        lp.nodes_per_unit_time = 16;
        let c_f = 0.25 * PI; // sup |f| sqrt(|Ω|) = 0.25 π
        let rho = c_f / 0.05;
        let graph = build_manifold_graph(
            &split,
            &spec,
            &SampleBox {
                max_radius: 1.6 * rho + 16.0,
                radial_samples: 12,
                angular_samples: 28,
            },
            &lp,
            1.0,
        )
        .unwrap();
        let ann = invariant_annulus(&split, &spec, &graph, &AnnulusConfig::default()).unwrap();
        c.check(
            format!(
                "square: outer radius {:.3} = inner + {:.3}",
                ann.outer, ann.rho
            ),
            (ann.outer - ann.inner - rho).abs() < 1e-9,
        );
        let cover = compute_attractor(
            &split,
            &spec,
            &graph,
            &ann,
            &AttractorConfig {
                seed_radii: 6,
                seed_angles: 20,
                cells_per_side: 160,
                ..Default::default()
            },
        )
        .unwrap();
        let shape = certify_sphere_shape(&cover);
        c.check(
            format!("square: cover connected ({})", shape.detail),
            shape.cover_connected,
        );
        c.check(
            "square: origin excluded from the cover".to_string(),
            shape.origin_excluded,
        );
        c.check(
            "square: origin enclosed by the cover".to_string(),
            shape.origin_enclosed,
        );
        c.check(
            format!(
                "square: {} complement components >= 2",
                shape.complement_components
            ),
            shape.complement_components >= 2,
        );
        c.check(
            format!("square: {} reduced equilibria >= 2", cover.equilibria.len()),
            cover.equilibria.len() >= 2,
        );
        c.check("square: circle certificate".to_string(), shape.pass);
    }
    c.finish();
}

#[test]
fn criterion_7_multiplicity() {
    let mut c = Criterion::new("criterion 7 (three solutions and the divergence law)");
    let config =
        ExperimentConfig::from_file(&config_path("interval-k1-tanh02.cfg"), &[temp_out("c7")])
            .unwrap();
    let output = run_experiment(&config, Stage::Bifurcate).unwrap();
    let bif = output
        .report
        .bifurcation
        .as_ref()
        .expect("bifurcation stage ran");

    c.check(
        format!("exactly 3 equilibria at every grid point: {:?}", bif.counts),
        bif.counts.iter().all(|&n| n == 3),
    );
    c.check(
        format!(
            "divergence product within 10% of 0.3192 (target {:.4}, worst deviation {:.3}%)",
            bif.divergence_target,
            100.0 * bif.max_product_deviation
        ),
        (bif.divergence_target - 0.3192).abs() < 5e-4 && bif.max_product_deviation <= 0.10,
    );
    c.check(
        format!(
            "bounded branch stays at zero (sup gradient norm {:.2e})",
            bif.bounded_sup_v
        ),
        bif.bounded_sup_v < 1e-8,
    );

    // cross-validation: Newton roots against long-time limits of the flow
    let basis = interval_basis(4);
    let spec = NonlinearitySpec::tanh(0.2, PI);
    let newton_cfg = NewtonConfig::default();
    let r = 1.5957691216057308;
    for &lam in &bif.lambda_grid {
        let split = SpectralSplit::split_at(&basis, 1, lam).unwrap();
        let seeds = default_seeds(&basis, &spec, 1, lam, r).unwrap();
        let roots = deflated_search(&basis, &spec, lam, &seeds, &newton_cfg);
        c.check(format!("lambda {lam:.6}: 3 roots"), roots.len() == 3);

        let dist = 1.0 - lam;
        let horizon = (14.0 / dist).max(60.0);
        let int_cfg = IntegratorConfig::for_split(&split)
            .with_step(0.1)
            .with_stride(1_000_000);
        let mut hit = vec![false; roots.len()];
        let mut all_land = true;

        // each root is fixed under the flow (the trivial root is its own
        // limit; the saturated pair additionally attracts perturbations)
        for (ri, root) in roots.iter().enumerate() {
            let traj = evolve(&split, &spec, &root.field, 10.0, &int_cfg).unwrap();
            let stationary = resonance_core::semiflow::is_equilibrium(&split, &spec, &root.field);
            if stationary && traj.endpoint().sub(&root.field).norm_h() < 1e-6 {
                hit[ri] = true;
            }
        }
        // perturbed seeds around each root plus two generic seeds
        let mut starts = Vec::new();
        for root in &roots {
            let scale = 0.05 * (1.0 + root.field.norm_h());
            for dir in [1.0, -1.0] {
                let mut u = root.field.clone();
                u.coeffs[0] += dir * scale;
                u.coeffs[1] += 0.3 * dir * scale;
                starts.push(u);
            }
        }
        starts.push(CoefField::from_coeffs(&basis, vec![3.3, 0.4, 0.0, 0.0]));
        starts.push(CoefField::from_coeffs(&basis, vec![-3.3, -0.4, 0.0, 0.0]));
        for u0 in &starts {
            let traj = evolve(&split, &spec, u0, horizon, &int_cfg).unwrap();
            let end = traj.endpoint();
            let mut landed = false;
            for (ri, root) in roots.iter().enumerate() {
                let tol = 2e-3 * (1.0 + root.field.norm_h()) + 0.02;
                if end.sub(&root.field).norm_h() < tol {
                    hit[ri] = true;
                    landed = true;
                }
            }
            all_land = all_land && landed;
        }
        c.check(
            format!("lambda {lam:.6}: every long-time limit is a Newton root"),
            all_land,
        );
        c.check(
            format!("lambda {lam:.6}: every Newton root recovered as a limit"),
            hit.iter().all(|&h| h),
        );
    }
    c.finish();
}

#[test]
fn criterion_8_duality() {
    let mut c = Criterion::new("criterion 8 (mirrored pipeline under the dual condition)");

    // full mirrored runs: standard below the level, dual above it
    let std_cfg =
        ExperimentConfig::from_file(&config_path("interval-k1-tanh02.cfg"), &[temp_out("c8s")])
            .unwrap();
    let dual_cfg =
        ExperimentConfig::from_file(&config_path("interval-k1-dual.cfg"), &[temp_out("c8d")])
            .unwrap();
    let std_out = run_experiment(&std_cfg, Stage::Bifurcate).unwrap();
    let dual_out = run_experiment(&dual_cfg, Stage::Bifurcate).unwrap();
    let sb = std_out.report.bifurcation.as_ref().unwrap();
    let db = dual_out.report.bifurcation.as_ref().unwrap();

    c.check(
        format!("offsets agree: {:.6} vs {:.6}", sb.theta, db.theta),
        (sb.theta - db.theta).abs() <= 1e-9,
    );
    c.check(
        format!("dual side is above the level: {}", db.side),
        db.side.starts_with("(mu_k"),
    );
    c.check(
        format!("standard side is below the level: {}", sb.side),
        sb.side.starts_with("[mu_k"),
    );
    c.check(
        format!("counts mirrored: {:?} vs {:?}", sb.counts, db.counts),
        sb.counts == db.counts && sb.counts.iter().all(|&n| n == 3),
    );
    c.check(
        format!(
            "divergence products mirrored within 10%: {:.4} vs {:.4}",
            sb.max_product_deviation, db.max_product_deviation
        ),
        sb.max_product_deviation <= 0.10 && db.max_product_deviation <= 0.10,
    );
    let mirror_lambda: Vec<f64> = sb.lambda_grid.iter().map(|l| 2.0 - l).collect();
    let close = mirror_lambda
        .iter()
        .zip(&db.lambda_grid)
        .all(|(a, b)| (a - b).abs() < 1e-9);
    c.check("grids are reflections about the level".to_string(), close);
    c.check(
        "annulus constants agree".to_string(),
        std_out
            .report
            .annulus
            .iter()
            .zip(&dual_out.report.annulus)
            .all(|(a, b)| (a.c0 - b.c0).abs() < 1e-9 && (a.rho - b.rho).abs() < 1e-6),
    );
    c.check(
        "no blow-up branch on either mirrored side".to_string(),
        sb.wrong_side_count == 0 && db.wrong_side_count == 0,
    );

    // exact coefficientwise mirror: a non-odd dual pair related by the
    // reflection (x, t) -> -f(x, -t); states map by negation
    let basis = interval_basis(4);
    let f1 = NonlinearitySpec::new(
        Profile::TanhShifted {
            c: -0.2,
            shift: 0.4,
        },
        Orientation::Dual,
        PI,
    );
    let g = f1.reflected();
    let split = SpectralSplit::split_at(&basis, 1, 1.05).unwrap();
    let lp = LpConfig::for_gap(split.beta);
    let mut mirror_ok = true;
    for &y in &[0.5, -3.0, 7.0] {
        let xi_f = resonance_core::lyapunov_perron::xi_at(&split, &f1, &[y], &lp).unwrap();
        let xi_g = resonance_core::lyapunov_perron::xi_at(&split, &g, &[-y], &lp).unwrap();
        for (a, b) in xi_f.coeffs.iter().zip(&xi_g.coeffs) {
            if (a + b).abs() > 1e-10 {
                mirror_ok = false;
            }
        }
    }
    c.check(
        "graph values mirror coefficientwise under reflection".to_string(),
        mirror_ok,
    );

    let newton_cfg = NewtonConfig::default();
    let r = 1.5957691216057308;
    let seeds_f = default_seeds(&basis, &f1, 1, 1.05, r).unwrap();
    let roots_f = deflated_search(&basis, &f1, 1.05, &seeds_f, &newton_cfg);
    let seeds_g = default_seeds(&basis, &g, 1, 1.05, r).unwrap();
    let roots_g = deflated_search(&basis, &g, 1.05, &seeds_g, &newton_cfg);
    c.check(
        format!(
            "both mirrored problems have 3 roots ({} vs {})",
            roots_f.len(),
            roots_g.len()
        ),
        roots_f.len() == 3 && roots_g.len() == 3,
    );
    let mut roots_mirror = true;
    for (a, b) in roots_f.iter().zip(roots_g.iter().rev()) {
        for (x, y) in a.field.coeffs.iter().zip(&b.field.coeffs) {
            if (x + y).abs() > 1e-8 {
                roots_mirror = false;
            }
        }
    }
    c.check(
        "equilibria mirror coefficientwise under reflection".to_string(),
        roots_mirror,
    );
    c.finish();
}

#[test]
fn criterion_9_gradient_structure() {
    let mut c = Criterion::new("criterion 9 (gradient-structure witness)");
    let b = interval_basis(4);
    let split = SpectralSplit::split_at(&b, 1, 0.95).unwrap();
    let spec = NonlinearitySpec::tanh(0.2, PI);
    let cfg = IntegratorConfig::for_split(&split);
    let mut rng = ChaCha8Rng::seed_from_u64(99);

    let mut monotone = true;
    for _ in 0..50 {
        let coeffs: Vec<f64> = (0..4).map(|_| rng.random_range(-3.0..3.0)).collect();
        let u0 = CoefField::from_coeffs(&b, coeffs);
        let traj = evolve(&split, &spec, &u0, 2.0, &cfg).unwrap();
        let mut prev = f64::INFINITY;
        for u in &traj.fields {
            let e = energy(&spec, 0.95, u);
            if e > prev + 1e-7 * (1.0 + prev.abs()) {
                monotone = false;
            }
            prev = e;
        }
    }
    c.check(
        "energy nonincreasing along 50 random trajectories (1e-7 relative)".to_string(),
        monotone,
    );

    let mut gradient_ok = true;
    for _ in 0..20 {
        let coeffs: Vec<f64> = (0..4).map(|_| rng.random_range(-2.0..2.0)).collect();
        let u = CoefField::from_coeffs(&b, coeffs);
        let field = vector_field(&split, &spec, &u);
        for j in 0..4 {
            let eps = 1e-6;
            let mut up = u.clone();
            let mut dn = u.clone();
            up.coeffs[j] += eps;
            dn.coeffs[j] -= eps;
            let fd = (energy(&spec, 0.95, &up) - energy(&spec, 0.95, &dn)) / (2.0 * eps);
            if (fd + field.coeffs[j]).abs() > 1e-5 * (1.0 + fd.abs()) {
                gradient_ok = false;
            }
        }
    }
    c.check(
        "finite-difference energy gradient matches the negative field (1e-5)".to_string(),
        gradient_ok,
    );
    c.finish();
}

#[test]
fn nemytskii_saturation_value() {
    // supporting oracle pinned by high-resolution quadrature: the center
    // coefficient of the saturated composition approaches c * 2 sqrt(2/pi)
    let domain = DomainSpec::<f64> {
        kind: resonance_core::spectral::DomainKind::Interval,
        length: PI,
        quadrature_points_per_dim: 400,
    };
    let b = SpectralBasis::build(domain, 4).unwrap();
    let spec = NonlinearitySpec::tanh(0.2, PI);
    let u = CoefField::single_mode(&b, 0, 1e5);
    let out = evaluate_nemytskii(&spec, &u);
    let want = 0.2 * 1.5957691216057308;
    assert!(
        (out.coeffs[0] - want).abs() < 1e-6,
        "saturated coefficient {} vs {}",
        out.coeffs[0],
        want
    );
}
