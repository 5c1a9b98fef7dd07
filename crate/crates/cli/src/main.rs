use std::path::PathBuf;

use anyhow::Result;
use clap::{Args, Parser, Subcommand};

use resonance_cli::config::ExperimentConfig;
use resonance_cli::pipeline::{emit_report, run_experiment, Stage};

/// Numerical laboratory for bifurcation from infinity near resonance.
#[derive(Parser)]
#[command(name = "resonance", version, about)]
struct Cli {
    #[command(subcommand)]
    command: Command,
}

#[derive(Args)]
struct CommonArgs {
    /// Experiment configuration file.
    #[arg(long)]
    config: PathBuf,

    /// Override certificate parameter values, comma separated.
    #[arg(long)]
    lambda_grid: Option<String>,

    /// Output directory (overrides the config).
    #[arg(long)]
    out: Option<PathBuf>,

    /// Random seed (overrides the config).
    #[arg(long)]
    seed: Option<u64>,

    /// Override any config key: `--set section.key=value`, repeatable.
    #[arg(long = "set", value_name = "SECTION.KEY=VALUE")]
    sets: Vec<String>,
}

#[derive(Subcommand)]
enum Command {
    /// Constants, sign-condition verification, and the smallness margin.
    Check(CommonArgs),
    /// Everything in `check`, plus the invariant-manifold graph.
    Manifold(CommonArgs),
    /// Everything in `manifold`, plus the certified invariant annulus.
    Annulus(CommonArgs),
    /// The full pipeline: offset search, attractor, shape certificate,
    /// branch continuation, and the multiplicity report.
    Bifurcate {
        #[command(flatten)]
        common: CommonArgs,
        /// Stop after the named stage (check|manifold|annulus|bifurcate).
        #[arg(long, default_value = "bifurcate")]
        stage: String,
    },
}

fn load_config(common: &CommonArgs) -> Result<ExperimentConfig> {
    let mut overrides = common.sets.clone();
    if let Some(grid) = &common.lambda_grid {
        overrides.push(format!("lambda.values={grid}"));
    }
    if let Some(out) = &common.out {
        overrides.push(format!("output.directory={}", out.display()));
    }
    if let Some(seed) = common.seed {
        overrides.push(format!("output.seed={seed}"));
    }
    ExperimentConfig::from_file(&common.config, &overrides)
}

fn execute(common: &CommonArgs, stage: Stage) -> Result<()> {
    let config = load_config(common)?;
    let output = run_experiment(&config, stage)?;
    let written = emit_report(&output, &config.output_dir)?;

    let c = &output.report.constants;
    println!("experiment: {}", output.report.experiment);
    println!(
        "level {} (mu = {:.6}, multiplicity {}), gap beta = {:.6}",
        c.level, c.mu_k, c.multiplicity, c.beta
    );
    println!(
        "kernel integral {:.6}, slope ratio {:.6}, smallness margin {:.6}",
        c.m_beta, c.l_tilde, c.smallness_margin
    );
    if c.m_estimate_exceeds_configured {
        println!(
            "note: estimated semigroup constant {:.4} exceeds the configured {:.4}",
            c.m_estimate, c.m_const
        );
    }
    for m in &output.report.manifold {
        println!(
            "manifold lambda = {:.6}: lipschitz {:.4} (bound {:.4}), invariance residual {:.3e}",
            m.lambda, m.sampled_lipschitz, m.lipschitz_bound, m.invariance_residual
        );
    }
    for a in &output.report.annulus {
        println!(
            "annulus lambda = {:.6}: [{:.4}, {:.4}], c0 = {:.6}, envelopes ok: {}",
            a.lambda, a.inner, a.outer, a.c0, a.envelope_ok
        );
    }
    if let Some(b) = &output.report.bifurcation {
        println!("theta = {:.6}, side {}", b.theta, b.side);
        println!("equilibrium counts along the grid: {:?}", b.counts);
    }
    for claim in &output.report.claims {
        println!(
            "[{}] {} - {}",
            if claim.pass { "PASS" } else { "FAIL" },
            claim.name,
            claim.detail
        );
    }
    println!(
        "wrote {} files to {}",
        written.len(),
        config.output_dir.display()
    );
    if let Some(err) = &output.report.error {
        eprintln!("pipeline stopped early: {err}");
        std::process::exit(1);
    }
    if output.report.claims.iter().any(|c| !c.pass) {
        std::process::exit(2);
    }
    Ok(())
}

fn main() -> Result<()> {
    let cli = Cli::parse();
    match &cli.command {
        Command::Check(common) => execute(common, Stage::Check),
        Command::Manifold(common) => execute(common, Stage::Manifold),
        Command::Annulus(common) => execute(common, Stage::Annulus),
        Command::Bifurcate { common, stage } => execute(common, Stage::parse(stage)?),
    }
}
