//! Experiment configuration: a JSON or TOML file, then command-line overrides.

use std::path::{Path, PathBuf};

use anyhow::{bail, ensure, Context, Result};
use clap::ValueEnum;
use rwre_core::env::DEFAULT_EPSILON;
use rwre_core::exitprob::ExitOptions;
use rwre_core::{EnvironmentLaw, SeriesOptions, SiteLaw};
use serde::{Deserialize, Serialize};

#[derive(Clone, Copy, Debug, PartialEq, Eq, Deserialize, Serialize, ValueEnum)]
#[serde(rename_all = "lowercase")]
pub enum Format {
    Csv,
    Jsonl,
    Pretty,
}

#[derive(Clone, Copy, Debug, PartialEq, Eq, Deserialize, Serialize)]
#[serde(rename_all = "lowercase")]
pub enum Kind {
    Homogeneous,
    Iid,
    Periodic,
}

#[derive(Clone, Debug, Deserialize, Serialize)]
#[serde(deny_unknown_fields)]
pub struct AtomConfig {
    pub q: f64,
    pub p: Vec<f64>,
    #[serde(default)]
    pub weight: Option<f64>,
}

#[derive(Clone, Debug, Deserialize, Serialize)]
#[serde(deny_unknown_fields)]
pub struct EnvConfig {
    pub kind: Kind,
    /// Jump bound; inferred from the atoms when absent.
    #[serde(default, rename = "R", alias = "r")]
    pub r: Option<usize>,
    #[serde(default = "default_epsilon")]
    pub epsilon: f64,
    pub atoms: Vec<AtomConfig>,
}

fn default_epsilon() -> f64 {
    DEFAULT_EPSILON
}

impl Default for EnvConfig {
    fn default() -> Self {
        Self {
            kind: Kind::Homogeneous,
            r: None,
            epsilon: DEFAULT_EPSILON,
            atoms: vec![AtomConfig { q: 0.2, p: vec![0.5, 0.3], weight: None }],
        }
    }
}

impl EnvConfig {
    pub fn law(&self) -> Result<EnvironmentLaw> {
        ensure!(!self.atoms.is_empty(), "environment has no atoms");
        let sites = self
            .atoms
            .iter()
            .enumerate()
            .map(|(k, a)| SiteLaw::new(a.q, &a.p, self.epsilon).with_context(|| format!("atom {k}")))
            .collect::<Result<Vec<_>>>()?;
        if let Some(r) = self.r {
            for (k, s) in sites.iter().enumerate() {
                ensure!(s.range() == r, "atom {k} has {} right jumps, R = {r}", s.range());
            }
        }
        let law = match self.kind {
            Kind::Homogeneous => {
                ensure!(sites.len() == 1, "a homogeneous environment takes exactly one atom");
                EnvironmentLaw::homogeneous(sites.into_iter().next().expect("one atom"))
            }
            Kind::Periodic => {
                ensure!(self.atoms.iter().all(|a| a.weight.is_none()), "periodic atoms take no weights");
                EnvironmentLaw::periodic(sites)?
            }
            Kind::Iid => {
                let weights = self
                    .atoms
                    .iter()
                    .enumerate()
                    .map(|(k, a)| a.weight.with_context(|| format!("i.i.d. atom {k} needs a weight")))
                    .collect::<Result<Vec<_>>>()?;
                EnvironmentLaw::iid(sites.into_iter().zip(weights).collect())?
            }
        };
        Ok(law)
    }
}

#[derive(Clone, Debug, Deserialize, Serialize)]
#[serde(default, deny_unknown_fields)]
pub struct ExperimentConfig {
    pub environment: EnvConfig,
    pub seed: u64,
    pub paths: u64,
    pub n_steps: u64,
    pub replicas: u64,
    pub env_samples: usize,
    pub depth: usize,
    pub tol: f64,
    pub max_steps: u64,
    pub format: Format,
    pub out: Option<PathBuf>,
}

impl Default for ExperimentConfig {
    fn default() -> Self {
        Self {
            environment: EnvConfig::default(),
            seed: 42,
            paths: 100_000,
            n_steps: 1_000_000,
            replicas: 16,
            env_samples: 10_000,
            depth: 2000,
            tol: 1e-12,
            max_steps: rwre_core::walk::DEFAULT_MAX_STEPS,
            format: Format::Pretty,
            out: None,
        }
    }
}

impl ExperimentConfig {
    /// Reads `path` as TOML when it ends in `.toml`, JSON otherwise.
    pub fn load(path: &Path) -> Result<Self> {
        let text = std::fs::read_to_string(path).with_context(|| format!("reading {}", path.display()))?;
        let cfg = match path.extension().and_then(|e| e.to_str()) {
            Some("toml") => toml::from_str(&text).with_context(|| format!("parsing {}", path.display()))?,
            _ => serde_json::from_str(&text).with_context(|| format!("parsing {}", path.display()))?,
        };
        Ok(cfg)
    }

    pub fn validate(&self) -> Result<()> {
        if self.tol.is_nan() || self.tol <= 0.0 {
            bail!("tol must be positive, got {}", self.tol);
        }
        ensure!(self.depth >= 1, "depth must be at least 1");
        ensure!(self.max_steps >= 1, "max_steps must be at least 1");
        self.environment.law()?;
        Ok(())
    }

    pub fn series(&self) -> SeriesOptions {
        SeriesOptions {
            depth: self.depth,
            tol: self.tol,
            exit: ExitOptions { tol: self.tol, ..ExitOptions::default() },
            ..SeriesOptions::default()
        }
    }
}

#[cfg(test)]
mod tests {
    use super::*;
    use rwre_core::LawKind;

    #[test]
    fn defaults_are_valid() {
        let cfg = ExperimentConfig::default();
        cfg.validate().unwrap();
        assert_eq!(cfg.environment.law().unwrap().kind(), LawKind::Homogeneous);
    }

    #[test]
    fn partial_toml_keeps_defaults() {
        let cfg: ExperimentConfig = toml::from_str("seed = 7\nformat = \"csv\"").unwrap();
        assert_eq!((cfg.seed, cfg.format, cfg.paths), (7, Format::Csv, 100_000));
    }

    #[test]
    fn iid_weights_and_range() {
        let env: EnvConfig = serde_json::from_str(
            r#"{"kind": "iid", "r": 2, "atoms": [{"q": 0.2, "p": [0.5, 0.3], "weight": 0.25}, {"q": 0.3, "p": [0.4, 0.3], "weight": 0.75}]}"#,
        )
        .unwrap();
        let law = env.law().unwrap();
        assert_eq!(law.kind(), LawKind::IidFiniteSupport);
        assert_eq!(law.weights(), [0.25, 0.75]);

        let mut bad = env.clone();
        bad.atoms[1].weight = Some(3.0);
        assert!(bad.law().is_err());
        bad.r = Some(3);
        assert!(bad.law().unwrap_err().to_string().contains("R = 3"));
    }

    #[test]
    fn series_options_follow_tol() {
        let cfg = ExperimentConfig { tol: 1e-9, depth: 50, ..ExperimentConfig::default() };
        let s = cfg.series();
        assert_eq!((s.tol, s.exit.tol, s.depth), (1e-9, 1e-9, 50));
    }
}
