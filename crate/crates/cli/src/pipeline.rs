//! Experiment orchestration: staged execution from constants checking up to
//! the full bifurcation study, plus deterministic report and CSV emission.

use std::path::{Path, PathBuf};
use std::sync::Arc;

use anyhow::{anyhow, bail, Context, Result};
use serde::Serialize;

use resonance_core::equilibria::{
    continue_branch, default_seeds, deflated_search, multiplicity_report, Classification,
    MultiplicityReport, NewtonConfig,
};
use resonance_core::lyapunov_perron::{
    build_manifold_graph, invariance_residual, ManifoldGraph, SampleBox,
};
use resonance_core::nonlinearity::{
    lipschitz_estimate, smallness_margin, NonlinearitySpec, Orientation,
};
use resonance_core::reduced::{
    certify_sphere_shape, compute_attractor, gronwall_envelope, integrate_reduced,
    invariant_annulus, AnnulusSpec, AttractorCover, ShapeReport,
};
use resonance_core::semiflow::{energy, evolve, IntegratorConfig, TrajectorySegment};
use resonance_core::spectral::{CoefField, DomainKind, SpectralBasis, SpectralSplit};
use resonance_core::CoreError;

use crate::config::ExperimentConfig;

#[derive(Debug, Clone, Copy, PartialEq, Eq, PartialOrd, Ord)]
pub enum Stage {
    Check,
    Manifold,
    Annulus,
    Bifurcate,
}

impl Stage {
    pub fn parse(name: &str) -> Result<Self> {
        Ok(match name {
            "check" => Stage::Check,
            "manifold" => Stage::Manifold,
            "annulus" => Stage::Annulus,
            "bifurcate" => Stage::Bifurcate,
            other => bail!("unknown stage `{other}`"),
        })
    }

    fn name(self) -> &'static str {
        match self {
            Stage::Check => "check",
            Stage::Manifold => "manifold",
            Stage::Annulus => "annulus",
            Stage::Bifurcate => "bifurcate",
        }
    }
}

#[derive(Debug, Clone, Serialize)]
pub struct DomainReport {
    pub kind: String,
    pub length: f64,
    pub volume: f64,
    pub quadrature_points_per_dim: usize,
    pub truncation: usize,
    pub max_eigenvalue: f64,
}

#[derive(Debug, Clone, Serialize)]
pub struct ConstantsReport {
    pub level: usize,
    pub mu_k: f64,
    pub multiplicity: usize,
    pub beta: f64,
    pub orientation: String,
    pub m_const: f64,
    pub m_estimate: f64,
    pub m_estimate_exceeds_configured: bool,
    pub m_beta: f64,
    pub lipschitz_f: f64,
    pub sup_f: f64,
    pub l_tilde: f64,
    pub smallness_margin: f64,
    pub ll_margin_pos: f64,
    pub ll_margin_neg: f64,
    pub truncation_tail_fraction: f64,
    pub lipschitz_graph_bound: f64,
}

#[derive(Debug, Clone, Serialize)]
pub struct ManifoldReport {
    pub lambda: f64,
    pub sampled_lipschitz: f64,
    pub lipschitz_bound: f64,
    pub tail_bound: f64,
    pub value_bound: f64,
    pub max_value_norm: f64,
    pub invariance_residual: f64,
    pub budget_fixed_point: f64,
    pub budget_interpolation: f64,
    pub budget_integrator: f64,
    pub contraction_max_ratio: f64,
    pub contraction_bound: f64,
    pub max_iterations_observed: usize,
}

#[derive(Debug, Clone, Serialize)]
pub struct AnnulusReport {
    pub lambda: f64,
    pub distance: f64,
    pub l1_equivalence: f64,
    pub delta: f64,
    pub c0: f64,
    pub s0: f64,
    pub c_lambda: f64,
    pub rho: f64,
    pub inner: f64,
    pub outer: f64,
    pub inward_top: f64,
    pub sphere_samples: usize,
    pub envelope_ok: bool,
}

#[derive(Debug, Clone, Serialize)]
pub struct ShapeSummary {
    pub m: usize,
    pub cover_components: usize,
    pub cover_connected: bool,
    pub origin_excluded: bool,
    pub origin_enclosed: bool,
    pub complement_components: usize,
    pub pass: bool,
    pub detail: String,
}

impl From<&ShapeReport> for ShapeSummary {
    fn from(r: &ShapeReport) -> Self {
        Self {
            m: r.m,
            cover_components: r.cover_components,
            cover_connected: r.cover_connected,
            origin_excluded: r.origin_excluded,
            origin_enclosed: r.origin_enclosed,
            complement_components: r.complement_components,
            pass: r.pass,
            detail: r.detail.clone(),
        }
    }
}

#[derive(Debug, Clone, Serialize)]
pub struct BranchRowReport {
    pub branch: usize,
    pub lambda: f64,
    pub norm_h: f64,
    pub norm_v: f64,
    pub residual: f64,
    pub product: f64,
    pub energy: f64,
    pub classification: String,
}

#[derive(Debug, Clone, Serialize)]
pub struct BifurcationReport {
    pub theta: f64,
    pub side: String,
    pub lambda_grid: Vec<f64>,
    pub counts: Vec<usize>,
    pub divergence_target: f64,
    pub max_product_deviation: f64,
    pub bounded_sup_v: f64,
    pub n_diverging: usize,
    pub n_bounded: usize,
    pub wrong_side_lambda: f64,
    pub wrong_side_count: usize,
    pub shape: Option<ShapeSummary>,
    pub attractor_equilibria: Vec<Vec<f64>>,
    pub rows: Vec<BranchRowReport>,
}

#[derive(Debug, Clone, Serialize)]
pub struct Claim {
    pub name: String,
    pub pass: bool,
    pub detail: String,
}

#[derive(Debug, Clone, Serialize)]
pub struct Report {
    pub experiment: String,
    pub stage: String,
    pub seed: u64,
    pub domain: DomainReport,
    pub constants: ConstantsReport,
    pub manifold: Vec<ManifoldReport>,
    pub annulus: Vec<AnnulusReport>,
    pub bifurcation: Option<BifurcationReport>,
    pub claims: Vec<Claim>,
    /// Set when a stage after `check` failed; everything computed before
    /// the failure is still present.
    pub error: Option<String>,
}

/// Everything a run produces: the serialisable report plus the bulky
/// artifacts behind the CSV exports.
#[derive(Debug)]
pub struct RunOutput {
    pub report: Report,
    pub graphs: Vec<(f64, ManifoldGraph<f64>)>,
    pub cover: Option<AttractorCover<f64>>,
    pub trajectory: Option<TrajectorySegment<f64>>,
    pub spec: NonlinearitySpec<f64>,
}

fn stage_err<E: std::fmt::Display>(stage: &str) -> impl FnOnce(E) -> anyhow::Error + '_ {
    move |e| anyhow!("stage {stage}: {e}")
}

/// Resolve the truncation: all modes up to twelve times the resonant level,
/// or the explicit override.
fn resolve_basis(config: &ExperimentConfig) -> Result<Arc<SpectralBasis<f64>>> {
    if config.truncation > 0 {
        return SpectralBasis::build(config.domain.clone(), config.truncation)
            .map_err(stage_err("check"));
    }
    let probe = SpectralBasis::build(config.domain.clone(), 160).map_err(stage_err("check"))?;
    let (mu_k, _) = probe.level(config.level).map_err(stage_err("check"))?;
    let cutoff = 12.0 * mu_k;
    let n = probe
        .modes
        .iter()
        .filter(|m| m.eigenvalue <= cutoff)
        .count();
    SpectralBasis::build(config.domain.clone(), n.max(config.level + 2)).map_err(stage_err("check"))
}

/// Relative flat norm of the composition coefficients lost to truncation,
/// measured in a doubled basis over representative fields.
fn truncation_tail_fraction(
    config: &ExperimentConfig,
    basis: &Arc<SpectralBasis<f64>>,
    mu_k: f64,
) -> Result<f64> {
    let probe = SpectralBasis::build(config.domain.clone(), 160)?;
    let cutoff = 24.0 * mu_k;
    let n_ext = probe
        .modes
        .iter()
        .filter(|m| m.eigenvalue <= cutoff)
        .count();
    let extended = SpectralBasis::build(config.domain.clone(), n_ext.max(basis.len() + 4))?;
    let n = basis.len();
    let center = basis
        .level_modes(config.level)
        .map_err(|e| anyhow!("{e}"))?;
    let mut worst: f64 = 0.0;
    for &amp in &[1.0, 5.0, 25.0] {
        let mut u = CoefField::zero(&extended);
        u.coeffs[center[0]] = amp;
        if n > 2 {
            u.coeffs[1] = 0.3 * amp;
        }
        let g = resonance_core::nonlinearity::evaluate_nemytskii(&config.nonlinearity, &u);
        let total: f64 = g.coeffs.iter().map(|c| c * c).sum::<f64>().sqrt();
        let tail: f64 = g.coeffs[n.min(g.coeffs.len())..]
            .iter()
            .map(|c| c * c)
            .sum::<f64>()
            .sqrt();
        if total > 0.0 {
            worst = worst.max(tail / total);
        }
    }
    Ok(worst)
}

fn side_sign(orientation: Orientation) -> f64 {
    match orientation {
        Orientation::Standard => 1.0,
        Orientation::Dual => -1.0,
    }
}

/// Certificate parameters: explicit values from the config, or a single
/// automatic point at a fortieth of the gap on the orientation side.
fn certificate_lambdas(config: &ExperimentConfig, mu_k: f64, beta: f64) -> Vec<f64> {
    if !config.lambda_values.is_empty() {
        return config.lambda_values.clone();
    }
    let side = side_sign(config.nonlinearity.orientation);
    vec![mu_k - side * beta / 40.0]
}

fn manifold_box_radius(config: &ExperimentConfig, distance: f64) -> f64 {
    if config.manifold_box_radius > 0.0 {
        return config.manifold_box_radius;
    }
    let c_f = config.nonlinearity.sup_bound * config.domain.volume().sqrt();
    2.2 * c_f / distance + 24.0
}

/// Execute the pipeline up to the requested stage.
pub fn run_experiment(config: &ExperimentConfig, stage: Stage) -> Result<RunOutput> {
    // ---- check stage: constants, sign condition, smallness -------------
    let basis = resolve_basis(config)?;
    let spec = config.nonlinearity.clone();
    spec.validate_declared(&basis).map_err(stage_err("check"))?;
    let ll = spec
        .verify_landesman_lazer(&basis, 10.0, 1e-6)
        .map_err(stage_err("check"))?;
    let (mu_k, multiplicity) = basis.level(config.level).map_err(stage_err("check"))?;
    let beta = basis
        .spectral_gap(config.level)
        .map_err(stage_err("check"))?;
    let l_tilde = lipschitz_estimate(&spec, &basis, config.seed).map_err(stage_err("check"))?;
    let smallness = smallness_margin(&spec, &basis, config.level, config.m_const)
        .map_err(stage_err("check"))?;
    if smallness.margin <= 0.0 {
        bail!(
            "stage check: contraction condition fails: margin = {:.6} (kernel integral {:.5} x slope ratio {:.5} >= 1); \
             reduce the nonlinearity slope or move to a level with a wider gap",
            smallness.margin,
            smallness.m_beta,
            smallness.l_tilde
        );
    }

    let lambdas = certificate_lambdas(config, mu_k, beta);
    let mut m_estimate: f64 = 1.0;
    for &lam in &lambdas {
        let split =
            SpectralSplit::split_at(&basis, config.level, lam).map_err(stage_err("check"))?;
        let all: Vec<usize> = (0..basis.len()).collect();
        m_estimate =
            m_estimate.max(split.estimate_semigroup_constant(&split.default_t_grid(400), &all));
    }
    let tail_fraction =
        truncation_tail_fraction(config, &basis, mu_k).context("truncation tail estimate")?;
    let l0_bound = config.m_const / smallness.margin + 1.0;

    let mut report = Report {
        experiment: config.name.clone(),
        stage: stage.name().into(),
        seed: config.seed,
        domain: DomainReport {
            kind: match config.domain.kind {
                DomainKind::Interval => "interval".into(),
                DomainKind::Square => "square".into(),
            },
            length: config.domain.length,
            volume: config.domain.volume(),
            quadrature_points_per_dim: basis.grid().points_per_dim,
            truncation: basis.len(),
            max_eigenvalue: basis.eigenvalue(basis.len() - 1),
        },
        constants: ConstantsReport {
            level: config.level,
            mu_k,
            multiplicity,
            beta,
            orientation: match spec.orientation {
                Orientation::Standard => "standard".into(),
                Orientation::Dual => "dual".into(),
            },
            m_const: config.m_const,
            m_estimate,
            m_estimate_exceeds_configured: m_estimate > config.m_const + 1e-9,
            m_beta: smallness.m_beta,
            lipschitz_f: spec.lipschitz,
            sup_f: spec.sup_bound,
            l_tilde,
            smallness_margin: smallness.margin,
            ll_margin_pos: ll.margin_pos,
            ll_margin_neg: ll.margin_neg,
            truncation_tail_fraction: tail_fraction,
            lipschitz_graph_bound: l0_bound,
        },
        manifold: Vec::new(),
        annulus: Vec::new(),
        bifurcation: None,
        claims: vec![Claim {
            name: "smallness_condition".into(),
            pass: true,
            detail: format!("margin {:.5}", smallness.margin),
        }],
        error: None,
    };
    let mut output = RunOutput {
        report: Report { ..report.clone() },
        graphs: Vec::new(),
        cover: None,
        trajectory: None,
        spec: spec.clone(),
    };
    if stage == Stage::Check {
        output.report = report;
        return Ok(output);
    }

    // later stages keep partial results: a failure is recorded on the
    // report instead of discarding what already ran
    let staged = later_stages(
        config,
        stage,
        &basis,
        &spec,
        smallness.m_beta,
        l_tilde,
        mu_k,
        beta,
        multiplicity,
        &lambdas,
        &mut report,
        &mut output,
    );
    if let Err(e) = staged {
        report.claims.push(Claim {
            name: "pipeline_completed".into(),
            pass: false,
            detail: e.to_string(),
        });
        report.error = Some(e.to_string());
    }
    output.report = report;
    Ok(output)
}

#[allow(clippy::too_many_arguments)]
fn later_stages(
    config: &ExperimentConfig,
    stage: Stage,
    basis: &Arc<SpectralBasis<f64>>,
    spec: &NonlinearitySpec<f64>,
    m_beta_value: f64,
    l_tilde: f64,
    mu_k: f64,
    beta: f64,
    multiplicity: usize,
    lambdas: &[f64],
    report: &mut Report,
    output: &mut RunOutput,
) -> Result<()> {
    // ---- manifold stage -------------------------------------------------
    let mut splits = Vec::new();
    for &lam in lambdas {
        let split =
            SpectralSplit::split_at(basis, config.level, lam).map_err(stage_err("manifold"))?;
        let lp = config.lp_config(split.beta);
        let distance = (mu_k - lam).abs().max(beta / 400.0);
        let sample_box = SampleBox {
            max_radius: manifold_box_radius(config, distance),
            radial_samples: config.manifold_radial_samples,
            angular_samples: config.manifold_angular_samples,
        };
        let graph = build_manifold_graph(&split, spec, &sample_box, &lp, config.m_const)
            .map_err(stage_err("manifold"))?;

        // contraction diagnostics at a handful of anchors
        let mut max_ratio: f64 = 0.0;
        let mut max_iter = 0usize;
        for i in 0..5 {
            let scale = sample_box.max_radius * (i as f64 + 1.0) / 6.0;
            let y: Vec<f64> = match multiplicity {
                1 => vec![if i % 2 == 0 { scale } else { -scale }],
                _ => vec![scale, scale * 0.5],
            };
            let solve = resonance_core::lyapunov_perron::lp_fixed_point(&split, spec, &y, &lp)
                .map_err(stage_err("manifold"))?;
            max_iter = max_iter.max(solve.iterations);
            for &r in &solve.ratios {
                max_ratio = max_ratio.max(r);
            }
        }

        // invariance residual with its tolerance budget
        let int_cfg = integrator_config(config, &split);
        let budget_fp = 50.0 * lp.tolerance;
        let budget_interp = 2.5 * (graph.interpolation_bound(split.shift) + graph.tail_bound);
        let probe_y: Vec<f64> = match multiplicity {
            1 => vec![sample_box.max_radius * 0.25],
            _ => vec![sample_box.max_radius * 0.25, 0.0],
        };
        let budget_integ = {
            let xi = graph
                .xi_interpolated(&probe_y)
                .map_err(stage_err("manifold"))?;
            let u0 = split.field_from_center(&probe_y).add(&xi);
            let run = |h: f64| -> Result<CoefField<f64>> {
                let cfg = int_cfg.with_step(h).with_stride(1_000_000);
                Ok(evolve(&split, spec, &u0, 5.0, &cfg)
                    .map_err(stage_err("manifold"))?
                    .endpoint()
                    .clone())
            };
            4.0 * run(int_cfg.step)?
                .sub(&run(int_cfg.step * 0.5)?)
                .norm_alpha(split.shift)
        };
        let residual = invariance_residual(&split, spec, &graph, &probe_y, 5.0, &int_cfg)
            .map_err(stage_err("manifold"))?;

        if output.trajectory.is_none() {
            let xi = graph
                .xi_interpolated(&probe_y)
                .map_err(stage_err("manifold"))?;
            let u0 = split.field_from_center(&probe_y).add(&xi);
            let traj = evolve(&split, spec, &u0, 5.0, &int_cfg.with_stride(10))
                .map_err(stage_err("manifold"))?;
            output.trajectory = Some(traj);
        }

        let max_value_norm = graph
            .values
            .iter()
            .map(|v| v.norm_alpha(split.shift))
            .fold(0.0f64, f64::max);
        report.manifold.push(ManifoldReport {
            lambda: lam,
            sampled_lipschitz: graph.lipschitz,
            lipschitz_bound: graph.lipschitz_bound,
            tail_bound: graph.tail_bound,
            value_bound: graph.value_bound,
            max_value_norm,
            invariance_residual: residual,
            budget_fixed_point: budget_fp,
            budget_interpolation: budget_interp,
            budget_integrator: budget_integ,
            contraction_max_ratio: max_ratio,
            contraction_bound: m_beta_value * l_tilde,
            max_iterations_observed: max_iter,
        });
        output.graphs.push((lam, graph));
        splits.push(split);
    }
    let contraction_ok = report
        .manifold
        .iter()
        .all(|m| m.contraction_max_ratio < 1.0 && m.sampled_lipschitz <= m.lipschitz_bound);
    report.claims.push(Claim {
        name: "manifold_contraction".into(),
        pass: contraction_ok,
        detail: format!(
            "max ratio {:.4}, lipschitz within bound: {}",
            report
                .manifold
                .iter()
                .map(|m| m.contraction_max_ratio)
                .fold(0.0, f64::max),
            contraction_ok
        ),
    });
    if stage == Stage::Manifold {
        return Ok(());
    }

    // ---- annulus stage ----------------------------------------------------
    for (split, (lam, graph)) in splits.iter().zip(&output.graphs) {
        let ann = invariant_annulus(split, spec, graph, &config.annulus_config())
            .map_err(stage_err("annulus"))?;
        let envelope_ok = envelope_check(split, spec, graph, &ann)?;
        report.annulus.push(AnnulusReport {
            lambda: *lam,
            distance: ann.distance,
            l1_equivalence: ann.l1_equivalence,
            delta: ann.delta,
            c0: ann.c0,
            s0: ann.s0,
            c_lambda: ann.c_lambda,
            rho: ann.rho,
            inner: ann.inner,
            outer: ann.outer,
            inward_top: ann.inward_top,
            sphere_samples: ann.sphere_samples,
            envelope_ok,
        });
    }
    let annulus_ok = report.annulus.iter().all(|a| a.envelope_ok);
    report.claims.push(Claim {
        name: "annulus_certified".into(),
        pass: annulus_ok,
        detail: format!("{} parameter values certified", report.annulus.len()),
    });
    if stage == Stage::Annulus {
        return Ok(());
    }

    // ---- bifurcate stage ---------------------------------------------------
    let side = side_sign(spec.orientation);
    let theta = theta_search(config, basis, spec, mu_k, beta)?;
    let grid: Vec<f64> = (0..config.lambda_count)
        .map(|i| mu_k - side * theta * 0.5f64.powi(i as i32))
        .collect();

    // attractor and shape certificate at the first certified parameter
    let (cert_split, (_, cert_graph)) = splits
        .first()
        .zip(output.graphs.first())
        .ok_or_else(|| anyhow!("stage bifurcate: no certified parameter available"))?;
    let cert_ann = invariant_annulus(cert_split, spec, cert_graph, &config.annulus_config())
        .map_err(stage_err("bifurcate"))?;
    let cover = compute_attractor(
        cert_split,
        spec,
        cert_graph,
        &cert_ann,
        &config.attractor_config(),
    )
    .map_err(stage_err("bifurcate"))?;
    let shape = certify_sphere_shape(&cover);

    let newton_cfg = NewtonConfig::default();
    let r = cert_ann.l1_equivalence;
    let branches = continue_branch(basis, spec, config.level, &grid, r, &newton_cfg)
        .map_err(stage_err("bifurcate"))?;
    let multiplicity_rep =
        multiplicity_report(basis, spec, config.level, theta, &grid, &branches, r)
            .map_err(stage_err("bifurcate"))?;

    // mirrored-side control: no large pair on the other side of the level
    let wrong_side_lambda = mu_k + side * theta * 0.5;
    let seeds = default_seeds(basis, spec, config.level, wrong_side_lambda, r)
        .map_err(stage_err("bifurcate"))?;
    let wrong_roots = deflated_search(basis, spec, wrong_side_lambda, &seeds, &newton_cfg);
    let large_threshold = 0.25 * multiplicity_rep.divergence_target / (theta * 0.5);
    let wrong_large = wrong_roots
        .iter()
        .filter(|eq| eq.field.norm_h() > large_threshold)
        .count();

    push_bifurcation_claims(report, &multiplicity_rep, &shape, wrong_large);
    report.bifurcation = Some(BifurcationReport {
        theta,
        side: if side > 0.0 {
            format!("[mu_k - theta, mu_k) = [{:.6}, {mu_k})", mu_k - theta)
        } else {
            format!("(mu_k, mu_k + theta] = ({mu_k}, {:.6}]", mu_k + theta)
        },
        lambda_grid: grid.clone(),
        counts: multiplicity_rep.counts.clone(),
        divergence_target: multiplicity_rep.divergence_target,
        max_product_deviation: multiplicity_rep.max_product_deviation,
        bounded_sup_v: multiplicity_rep.bounded_sup_v,
        n_diverging: multiplicity_rep
            .branches
            .iter()
            .filter(|b| b.classification == Classification::BlowupCandidate)
            .count(),
        n_bounded: multiplicity_rep
            .branches
            .iter()
            .filter(|b| b.classification == Classification::Bounded)
            .count(),
        wrong_side_lambda,
        wrong_side_count: wrong_large,
        shape: Some((&shape).into()),
        attractor_equilibria: cover.equilibria.clone(),
        rows: branch_rows(&multiplicity_rep),
    });
    output.cover = Some(cover);
    Ok(())
}

fn integrator_config(
    config: &ExperimentConfig,
    split: &SpectralSplit<f64>,
) -> IntegratorConfig<f64> {
    let mut cfg = IntegratorConfig::for_split(split);
    if config.integrator_step > 0.0 {
        cfg.step = config.integrator_step;
    }
    cfg.substep_tolerance = config.integrator_substep_tolerance;
    cfg
}

fn branch_rows(rep: &MultiplicityReport<f64>) -> Vec<BranchRowReport> {
    let mut rows = Vec::new();
    for (bi, br) in rep.branches.iter().enumerate() {
        for r in &br.rows {
            rows.push(BranchRowReport {
                branch: bi,
                lambda: r.lambda,
                norm_h: r.norm_h,
                norm_v: r.norm_v,
                residual: r.residual,
                product: r.product,
                energy: r.energy,
                classification: match br.classification {
                    Classification::Bounded => "bounded".into(),
                    Classification::BlowupCandidate => "blowup_candidate".into(),
                },
            });
        }
    }
    rows
}

fn push_bifurcation_claims(
    report: &mut Report,
    rep: &MultiplicityReport<f64>,
    shape: &ShapeReport,
    wrong_large: usize,
) {
    report.claims.push(Claim {
        name: "attractor_sphere_shape".into(),
        pass: shape.pass,
        detail: shape.detail.clone(),
    });
    report.claims.push(Claim {
        name: "three_distinct_solutions".into(),
        pass: rep.three_solutions_everywhere,
        detail: format!("counts along the grid: {:?}", rep.counts),
    });
    report.claims.push(Claim {
        name: "two_branches_diverge".into(),
        pass: rep.two_diverging,
        detail: format!(
            "divergence products within {:.1}% of the saturation target {:.5}",
            100.0 * rep.max_product_deviation,
            rep.divergence_target
        ),
    });
    report.claims.push(Claim {
        name: "divergence_product_law".into(),
        pass: rep.two_diverging && rep.max_product_deviation <= 0.10,
        detail: format!("max relative deviation {:.4}", rep.max_product_deviation),
    });
    report.claims.push(Claim {
        name: "one_branch_bounded".into(),
        pass: rep.one_bounded,
        detail: format!("bounded branch sup gradient norm {:.3e}", rep.bounded_sup_v),
    });
    report.claims.push(Claim {
        name: "no_blowup_on_mirrored_side".into(),
        pass: wrong_large == 0,
        detail: format!("{wrong_large} large roots on the mirrored side"),
    });
}

/// Largest admissible offset: bisect for the largest `theta <= beta/8` whose
/// annulus certifies at `mu_k -/+ theta`.
///
/// Probes run on a coarsened graph; only the certified offset matters here,
/// the certificates reported later are recomputed at full resolution.
fn theta_search(
    config: &ExperimentConfig,
    basis: &Arc<SpectralBasis<f64>>,
    spec: &NonlinearitySpec<f64>,
    mu_k: f64,
    beta: f64,
) -> Result<f64> {
    let side = side_sign(spec.orientation);
    let certifies = |theta: f64| -> Result<bool> {
        let lam = mu_k - side * theta;
        let split = match SpectralSplit::split_at(basis, config.level, lam) {
            Ok(s) => s,
            Err(_) => return Ok(false),
        };
        let lp = config.lp_config(split.beta);
        let sample_box = SampleBox {
            max_radius: manifold_box_radius(config, theta),
            radial_samples: (config.manifold_radial_samples / 2).max(8),
            angular_samples: (config.manifold_angular_samples / 2).max(16),
        };
        let graph = build_manifold_graph(&split, spec, &sample_box, &lp, config.m_const)
            .map_err(stage_err("bifurcate"))?;
        match invariant_annulus(&split, spec, &graph, &config.annulus_config()) {
            Ok(_) => Ok(true),
            Err(CoreError::CertificationFailure(_)) | Err(CoreError::SaturationFailure { .. }) => {
                Ok(false)
            }
            Err(e) => Err(anyhow!("stage bifurcate: theta search: {e}")),
        }
    };

    // a certifiable offset needs the saturation radius inside the inward
    // band; the graph-free saturation proxy predicts where that breaks
    let theta_guess = {
        let lam = mu_k - side * beta / 40.0;
        let split =
            SpectralSplit::split_at(basis, config.level, lam).map_err(stage_err("bifurcate"))?;
        let r = resonance_core::reduced::l1_equivalence_constant(&split)
            .map_err(stage_err("bifurcate"))?;
        let delta = spec.limit_pos.min(spec.limit_neg);
        let c0 = 0.5 * r * delta;
        let proxy = resonance_core::reduced::NoCorrection { split: &split };
        let (s0, _) = resonance_core::reduced::find_s0(&split, spec, &proxy, c0)
            .map_err(stage_err("bifurcate"))?;
        c0 / (2.0 * s0 * 1.3)
    };

    let mut hi = beta / 8.0;
    if certifies(hi)? {
        return Ok(hi);
    }
    let mut lo = theta_guess.min(hi / 2.0);
    let mut halvings = 0;
    while !certifies(lo)? {
        hi = lo;
        lo /= 2.0;
        halvings += 1;
        if halvings > 12 {
            bail!("stage bifurcate: no certifiable offset found above {lo:.3e}");
        }
    }
    hi = hi.min(2.0 * lo).max(lo * 1.0001);
    for _ in 0..config.theta_probes {
        let mid = 0.5 * (lo + hi);
        if certifies(mid)? {
            lo = mid;
        } else {
            hi = mid;
        }
    }
    Ok(lo)
}

/// Spot-check the scalar envelope along oriented reduced trajectories from
/// the annulus.
fn envelope_check(
    split: &SpectralSplit<f64>,
    spec: &NonlinearitySpec<f64>,
    graph: &ManifoldGraph<f64>,
    ann: &AnnulusSpec<f64>,
) -> Result<bool> {
    for frac in [0.0, 0.5, 1.0] {
        let w0 = ann.inner + (ann.outer - ann.inner) * frac;
        let start: Vec<f64> = match split.multiplicity() {
            1 => vec![w0],
            _ => vec![w0, 0.0],
        };
        let path = integrate_reduced(split, spec, graph, &start, 40.0, 0.1)
            .map_err(stage_err("annulus"))?;
        for (t, w) in path {
            let env = gronwall_envelope(ann, w0, t).map_err(stage_err("annulus"))?;
            let n2: f64 = w.iter().map(|c| c * c).sum();
            if n2 > env + 1e-6 * (1.0 + env) {
                return Ok(false);
            }
        }
    }
    Ok(true)
}

fn fmt(v: f64) -> String {
    format!("{v:.17e}")
}

/// Write the JSON report and the CSV artifacts; returns the paths written.
pub fn emit_report(output: &RunOutput, out_dir: &Path) -> Result<Vec<PathBuf>> {
    std::fs::create_dir_all(out_dir).with_context(|| format!("creating {}", out_dir.display()))?;
    let mut written = Vec::new();

    let json_path = out_dir.join("report.json");
    let json = serde_json::to_string_pretty(&output.report)?;
    std::fs::write(&json_path, json.as_bytes())?;
    written.push(json_path);

    // constants as flat key,value rows
    let constants_path = out_dir.join("constants.csv");
    let c = &output.report.constants;
    let mut rows = String::from("key,value\n");
    for (k, v) in [
        ("level", c.level as f64),
        ("mu_k", c.mu_k),
        ("multiplicity", c.multiplicity as f64),
        ("beta", c.beta),
        ("m_const", c.m_const),
        ("m_estimate", c.m_estimate),
        ("m_beta", c.m_beta),
        ("lipschitz_f", c.lipschitz_f),
        ("sup_f", c.sup_f),
        ("l_tilde", c.l_tilde),
        ("smallness_margin", c.smallness_margin),
        ("ll_margin_pos", c.ll_margin_pos),
        ("ll_margin_neg", c.ll_margin_neg),
        ("truncation_tail_fraction", c.truncation_tail_fraction),
        ("lipschitz_graph_bound", c.lipschitz_graph_bound),
    ] {
        rows.push_str(&format!("{k},{}\n", fmt(v)));
    }
    for a in &output.report.annulus {
        for (k, v) in [
            ("r_l1", a.l1_equivalence),
            ("delta", a.delta),
            ("c0", a.c0),
            ("s0", a.s0),
            ("c_lambda", a.c_lambda),
            ("rho", a.rho),
            ("a_lambda", a.inner),
            ("b_lambda", a.outer),
        ] {
            rows.push_str(&format!("{k}[lambda={}],{}\n", a.lambda, fmt(v)));
        }
    }
    if let Some(b) = &output.report.bifurcation {
        rows.push_str(&format!("theta,{}\n", fmt(b.theta)));
    }
    std::fs::write(&constants_path, rows.as_bytes())?;
    written.push(constants_path);

    // manifold graphs: y coordinates, graph coefficients, tail bound
    for (lam, graph) in &output.graphs {
        let path = out_dir.join(format!("graph_lambda_{lam}.csv"));
        let n = graph.values.first().map(|v| v.coeffs.len()).unwrap_or(0);
        let m = graph.samples.first().map(|s| s.len()).unwrap_or(1);
        let mut text = String::new();
        let mut header: Vec<String> = (1..=m).map(|i| format!("y_{i}")).collect();
        header.extend((1..=n).map(|j| format!("xi_{j}")));
        header.push("tail_bound".into());
        text.push_str(&header.join(","));
        text.push('\n');
        for (y, xi) in graph.samples.iter().zip(&graph.values) {
            let mut row: Vec<String> = y.iter().map(|&v| fmt(v)).collect();
            row.extend(xi.coeffs.iter().map(|&v| fmt(v)));
            row.push(fmt(graph.tail_bound));
            text.push_str(&row.join(","));
            text.push('\n');
        }
        std::fs::write(&path, text.as_bytes())?;
        written.push(path);
    }

    // sample trajectory: t, coefficients, norms, energy
    if let Some(traj) = &output.trajectory {
        let path = out_dir.join("trajectory.csv");
        let n = traj.fields.first().map(|f| f.coeffs.len()).unwrap_or(0);
        let mut text = String::new();
        let mut header = vec!["t".to_string()];
        header.extend((1..=n).map(|j| format!("a_{j}")));
        header.extend(["norm_h".into(), "norm_v".into(), "energy".into()]);
        text.push_str(&header.join(","));
        text.push('\n');
        for (t, u) in traj.times.iter().zip(&traj.fields) {
            let mut row = vec![fmt(*t)];
            row.extend(u.coeffs.iter().map(|&v| fmt(v)));
            row.push(fmt(u.norm_h()));
            row.push(fmt(u.norm_v()));
            row.push(fmt(energy(&output.spec, traj.lambda, u)));
            text.push_str(&row.join(","));
            text.push('\n');
        }
        std::fs::write(&path, text.as_bytes())?;
        written.push(path);
    }

    // branch table
    if let Some(b) = &output.report.bifurcation {
        let path = out_dir.join("branches.csv");
        let mut text =
            String::from("branch,lambda,norm_h,norm_v,residual,product,energy,classification\n");
        for r in &b.rows {
            text.push_str(&format!(
                "{},{},{},{},{},{},{},{}\n",
                r.branch,
                fmt(r.lambda),
                fmt(r.norm_h),
                fmt(r.norm_v),
                fmt(r.residual),
                fmt(r.product),
                fmt(r.energy),
                r.classification
            ));
        }
        std::fs::write(&path, text.as_bytes())?;
        written.push(path);
    }

    // attractor cover cells and equilibria
    if let Some(cover) = &output.cover {
        let path = out_dir.join("attractor.csv");
        let mut text = String::from("cell_i,cell_j,w_1,w_2\n");
        for cell in &cover.cells {
            let center = cover.cell_center(*cell);
            let w2 = center.get(1).copied().unwrap_or(0.0);
            text.push_str(&format!(
                "{},{},{},{}\n",
                cell[0],
                cell[1],
                fmt(center[0]),
                fmt(w2)
            ));
        }
        std::fs::write(&path, text.as_bytes())?;
        written.push(path);

        let eq_path = out_dir.join("reduced_equilibria.csv");
        let mut text = String::from("w_1,w_2\n");
        for w in &cover.equilibria {
            text.push_str(&format!(
                "{},{}\n",
                fmt(w[0]),
                fmt(w.get(1).copied().unwrap_or(0.0))
            ));
        }
        std::fs::write(&eq_path, text.as_bytes())?;
        written.push(eq_path);
    }

    Ok(written)
}
