//! Experiment configuration: a flat sectioned key/value file, every key
//! overridable from the command line via `--set section.key=value`.

use std::collections::BTreeMap;
use std::path::{Path, PathBuf};

use anyhow::{anyhow, bail, Context, Result};

use resonance_core::lyapunov_perron::LpConfig;
use resonance_core::nonlinearity::{NonlinearitySpec, Orientation, Profile};
use resonance_core::reduced::{AnnulusConfig, AttractorConfig};
use resonance_core::spectral::{DomainKind, DomainSpec};

/// Raw parsed file: section -> key -> value.
#[derive(Debug, Clone, Default)]
pub struct RawConfig {
    pub sections: BTreeMap<String, BTreeMap<String, String>>,
}

impl RawConfig {
    pub fn parse(text: &str) -> Result<Self> {
        let mut sections: BTreeMap<String, BTreeMap<String, String>> = BTreeMap::new();
        let mut current = String::from("global");
        for (lineno, raw_line) in text.lines().enumerate() {
            let line = raw_line.split('#').next().unwrap_or("").trim();
            if line.is_empty() {
                continue;
            }
            if let Some(stripped) = line.strip_prefix('[') {
                let name = stripped
                    .strip_suffix(']')
                    .ok_or_else(|| anyhow!("line {}: unterminated section header", lineno + 1))?;
                current = name.trim().to_string();
                sections.entry(current.clone()).or_default();
                continue;
            }
            let (key, value) = line
                .split_once('=')
                .ok_or_else(|| anyhow!("line {}: expected `key = value`", lineno + 1))?;
            sections
                .entry(current.clone())
                .or_default()
                .insert(key.trim().to_string(), value.trim().to_string());
        }
        Ok(Self { sections })
    }

    pub fn apply_override(&mut self, spec: &str) -> Result<()> {
        let (path, value) = spec
            .split_once('=')
            .ok_or_else(|| anyhow!("override `{spec}` is not of the form section.key=value"))?;
        let (section, key) = path
            .split_once('.')
            .ok_or_else(|| anyhow!("override `{spec}` is missing the section prefix"))?;
        self.sections
            .entry(section.trim().to_string())
            .or_default()
            .insert(key.trim().to_string(), value.trim().to_string());
        Ok(())
    }

    fn get(&self, section: &str, key: &str) -> Option<&str> {
        self.sections
            .get(section)
            .and_then(|s| s.get(key))
            .map(|s| s.as_str())
    }

    fn number(&self, section: &str, key: &str, default: f64) -> Result<f64> {
        match self.get(section, key) {
            None => Ok(default),
            Some("pi") => Ok(std::f64::consts::PI),
            Some(v) => v
                .parse::<f64>()
                .with_context(|| format!("{section}.{key}: `{v}` is not a number")),
        }
    }

    fn integer(&self, section: &str, key: &str, default: usize) -> Result<usize> {
        match self.get(section, key) {
            None => Ok(default),
            Some(v) => v
                .parse::<usize>()
                .with_context(|| format!("{section}.{key}: `{v}` is not a nonnegative integer")),
        }
    }

    fn string(&self, section: &str, key: &str, default: &str) -> String {
        self.get(section, key).unwrap_or(default).to_string()
    }
}

/// Fully validated experiment description.
#[derive(Debug, Clone)]
pub struct ExperimentConfig {
    pub name: String,
    pub domain: DomainSpec<f64>,
    pub nonlinearity: NonlinearitySpec<f64>,
    /// 1-based distinct-eigenvalue level.
    pub level: usize,
    /// 0 means automatic: retain all modes up to twelve times the level.
    pub truncation: usize,
    /// Semigroup constant used by the smallness gate.
    pub m_const: f64,
    /// Explicit certificate parameters; empty means automatic.
    pub lambda_values: Vec<f64>,
    /// Points of the geometric approach grid used by continuation.
    pub lambda_count: usize,
    pub lp_window: f64,
    pub lp_nodes_per_unit_time: usize,
    pub lp_grading: f64,
    pub lp_tolerance: f64,
    pub lp_max_iterations: usize,
    pub integrator_step: f64,
    pub integrator_substep_tolerance: f64,
    pub manifold_box_radius: f64,
    pub manifold_radial_samples: usize,
    pub manifold_angular_samples: usize,
    pub annulus_sphere_samples: usize,
    pub attractor_seed_radii: usize,
    pub attractor_seed_angles: usize,
    pub attractor_step: f64,
    pub attractor_horizon: f64,
    pub attractor_cells_per_side: usize,
    pub theta_probes: usize,
    pub output_dir: PathBuf,
    pub seed: u64,
}

impl ExperimentConfig {
    pub fn from_file(path: &Path, overrides: &[String]) -> Result<Self> {
        let text = std::fs::read_to_string(path)
            .with_context(|| format!("reading config {}", path.display()))?;
        let mut raw = RawConfig::parse(&text)?;
        for o in overrides {
            raw.apply_override(o)?;
        }
        let name = path
            .file_stem()
            .map(|s| s.to_string_lossy().into_owned())
            .unwrap_or_else(|| "experiment".into());
        Self::from_raw(name, &raw)
    }

    pub fn from_raw(name: String, raw: &RawConfig) -> Result<Self> {
        let kind = match raw.string("domain", "kind", "interval").as_str() {
            "interval" => DomainKind::Interval,
            "square" => DomainKind::Square,
            other => bail!("domain.kind: unknown kind `{other}`"),
        };
        let length = raw.number("domain", "length", std::f64::consts::PI)?;
        let quad = raw.integer("domain", "quadrature_points_per_dim", 48)?;
        let domain = DomainSpec {
            kind,
            length,
            quadrature_points_per_dim: quad,
        };

        let orientation = match raw.string("nonlinearity", "orientation", "auto").as_str() {
            "standard" => Some(Orientation::Standard),
            "dual" => Some(Orientation::Dual),
            "auto" => None,
            other => bail!("nonlinearity.orientation: unknown orientation `{other}`"),
        };
        let c = raw.number("nonlinearity", "c", 0.2)?;
        let profile = match raw.string("nonlinearity", "name", "tanh").as_str() {
            "tanh" => Profile::Tanh { c },
            "atan" => Profile::Atan { c },
            "tanh_shifted" => Profile::TanhShifted {
                c,
                shift: raw.number("nonlinearity", "shift", 0.0)?,
            },
            "xmod_tanh" => Profile::XModulatedTanh {
                base: c,
                amp: raw.number("nonlinearity", "amp", 0.0)?,
            },
            "constant" => Profile::Constant { value: c },
            "zero" => Profile::Zero,
            other => bail!("nonlinearity.name: unknown profile `{other}`"),
        };
        let default_orientation = if c >= 0.0 {
            Orientation::Standard
        } else {
            Orientation::Dual
        };
        let nonlinearity =
            NonlinearitySpec::new(profile, orientation.unwrap_or(default_orientation), length);

        let lambda_values: Vec<f64> = match raw.get("lambda", "values") {
            None | Some("") => Vec::new(),
            Some(list) => list
                .split(',')
                .map(|v| {
                    v.trim()
                        .parse::<f64>()
                        .with_context(|| format!("lambda.values: `{v}` is not a number"))
                })
                .collect::<Result<_>>()?,
        };

        let config = Self {
            name,
            domain,
            nonlinearity,
            level: raw.integer("problem", "level", 1)?,
            truncation: raw.integer("problem", "truncation", 0)?,
            m_const: raw.number("problem", "m_const", 1.0)?,
            lambda_values,
            lambda_count: raw.integer("lambda", "count", 9)?,
            lp_window: raw.number("lp", "window", 0.0)?,
            lp_nodes_per_unit_time: raw.integer("lp", "nodes_per_unit_time", 24)?,
            lp_grading: raw.number("lp", "grading", 2.0)?,
            lp_tolerance: raw.number("lp", "tolerance", 1e-10)?,
            lp_max_iterations: raw.integer("lp", "max_iterations", 60)?,
            integrator_step: raw.number("integrator", "step", 0.0)?,
            integrator_substep_tolerance: raw.number("integrator", "substep_tolerance", 1e-3)?,
            manifold_box_radius: raw.number("manifold", "box_radius", 0.0)?,
            manifold_radial_samples: raw.integer("manifold", "radial_samples", 24)?,
            manifold_angular_samples: raw.integer("manifold", "angular_samples", 40)?,
            annulus_sphere_samples: raw.integer("annulus", "sphere_samples", 256)?,
            attractor_seed_radii: raw.integer("attractor", "seed_radii", 8)?,
            attractor_seed_angles: raw.integer("attractor", "seed_angles", 24)?,
            attractor_step: raw.number("attractor", "step", 0.2)?,
            attractor_horizon: raw.number("attractor", "horizon", 0.0)?,
            attractor_cells_per_side: raw.integer("attractor", "cells_per_side", 192)?,
            theta_probes: raw.integer("problem", "theta_probes", 6)?,
            output_dir: PathBuf::from(raw.string("output", "directory", "out")),
            seed: raw.integer("output", "seed", 12345)? as u64,
        };
        config.validate()?;
        Ok(config)
    }

    fn validate(&self) -> Result<()> {
        if self.level == 0 {
            bail!("problem.level must be at least 1");
        }
        if self.lambda_count == 0 {
            bail!("lambda.count must be at least 1");
        }
        self.domain.validate().map_err(|e| anyhow!("{e}"))?;
        Ok(())
    }

    pub fn lp_config(&self, beta: f64) -> LpConfig<f64> {
        let mut lp = LpConfig::for_gap(beta);
        if self.lp_window > 0.0 {
            lp.window = self.lp_window;
        }
        lp.nodes_per_unit_time = self.lp_nodes_per_unit_time;
        lp.grading = self.lp_grading;
        lp.tolerance = self.lp_tolerance;
        lp.max_iterations = self.lp_max_iterations;
        lp
    }

    pub fn annulus_config(&self) -> AnnulusConfig<f64> {
        AnnulusConfig {
            sphere_samples: self.annulus_sphere_samples,
            ..AnnulusConfig::default()
        }
    }

    pub fn attractor_config(&self) -> AttractorConfig<f64> {
        AttractorConfig {
            seed_radii: self.attractor_seed_radii,
            seed_angles: self.attractor_seed_angles,
            step: self.attractor_step,
            horizon: if self.attractor_horizon > 0.0 {
                Some(self.attractor_horizon)
            } else {
                None
            },
            tail_fraction: 0.5,
            cells_per_side: self.attractor_cells_per_side,
        }
    }
}
