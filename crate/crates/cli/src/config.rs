//! Experiment configuration. Values come from, in increasing precedence,
//! the built-in defaults, an optional TOML file, and command-line flags.

use std::path::{Path, PathBuf};

use anyhow::{bail, Context, Result};
use serde::{Deserialize, Serialize};

use esh_core::continuation::ContinuationOptions;
use esh_core::evolve::{EvolveConfig, Monitors, Scheme};
use esh_core::grid::{DEFAULT_LENGTH, DEFAULT_NODES};
use esh_core::stability::{SpectrumOptions, DEFAULT_EIGS, GOLDSTONE_TOL, PARITY_FACTOR};
use esh_core::ModelParams;

#[derive(Clone, Debug, PartialEq, Serialize, Deserialize)]
#[serde(default, deny_unknown_fields)]
pub struct ModelSection {
    pub r: f64,
    pub b: f64,
    pub alpha: f64,
    pub beta: f64,
}

impl Default for ModelSection {
    fn default() -> Self {
        ModelSection { r: -0.06, b: 1.8, alpha: 0.0, beta: 0.0 }
    }
}

#[derive(Clone, Debug, PartialEq, Serialize, Deserialize)]
#[serde(default, deny_unknown_fields)]
pub struct GridSection {
    pub length: f64,
    pub n: usize,
}

impl Default for GridSection {
    fn default() -> Self {
        GridSection { length: DEFAULT_LENGTH, n: DEFAULT_NODES }
    }
}

#[derive(Clone, Debug, PartialEq, Serialize, Deserialize)]
#[serde(default, deny_unknown_fields)]
pub struct ContinuationSection {
    pub ds: f64,
    pub ds_min: f64,
    pub ds_max: f64,
    pub max_points: usize,
    pub r_min: f64,
    pub r_max: f64,
    /// Stop after this many folds (0 = no limit).
    pub folds: usize,
    pub fill_fraction: f64,
}

impl Default for ContinuationSection {
    fn default() -> Self {
        ContinuationSection {
            ds: 0.05,
            ds_min: 1e-4,
            ds_max: 0.1,
            max_points: 5000,
            r_min: -2.0,
            r_max: 1.0,
            folds: 0,
            fill_fraction: 1e-2,
        }
    }
}

#[derive(Clone, Debug, PartialEq, Serialize, Deserialize)]
#[serde(default, deny_unknown_fields)]
pub struct StabilitySection {
    /// Spectra at every `stride`-th branch point.
    pub stride: usize,
    pub sigma_tol: f64,
    pub n_eigs: usize,
    pub parity_factor: f64,
}

impl Default for StabilitySection {
    fn default() -> Self {
        StabilitySection { stride: 5, sigma_tol: GOLDSTONE_TOL, n_eigs: DEFAULT_EIGS, parity_factor: PARITY_FACTOR }
    }
}

#[derive(Clone, Debug, PartialEq, Serialize, Deserialize)]
#[serde(default, deny_unknown_fields)]
pub struct EvolveSection {
    pub dt: f64,
    pub t_end: f64,
    pub scheme: String,
    pub record_stride: usize,
    /// Amplitude of the perturbation along the leading oscillatory mode.
    pub perturbation: f64,
    /// Amplitude of seeded random noise added to the initial state.
    pub noise: f64,
    pub seed: u64,
}

impl Default for EvolveSection {
    fn default() -> Self {
        EvolveSection {
            dt: 0.1,
            t_end: 100.0,
            scheme: "etdrk4".into(),
            record_stride: 10,
            perturbation: 0.0,
            noise: 0.0,
            seed: 0,
        }
    }
}

#[derive(Clone, Debug, PartialEq, Serialize, Deserialize)]
#[serde(default, deny_unknown_fields)]
pub struct OutputSection {
    pub dir: PathBuf,
}

impl Default for OutputSection {
    fn default() -> Self {
        OutputSection { dir: PathBuf::from("out") }
    }
}

#[derive(Clone, Debug, Default, PartialEq, Serialize, Deserialize)]
#[serde(default, deny_unknown_fields)]
pub struct ExperimentConfig {
    pub model: ModelSection,
    pub grid: GridSection,
    pub continuation: ContinuationSection,
    pub stability: StabilitySection,
    pub evolve: EvolveSection,
    pub output: OutputSection,
}

/// Largest accepted grid size from a config file.
pub const MAX_NODES: usize = 1 << 14;

impl ExperimentConfig {
    pub fn from_toml(text: &str) -> Result<ExperimentConfig> {
        let cfg: ExperimentConfig = toml::from_str(text).context("invalid config file")?;
        Ok(cfg)
    }

    pub fn load(path: Option<&Path>) -> Result<ExperimentConfig> {
        match path {
            None => Ok(ExperimentConfig::default()),
            Some(p) => {
                let text = std::fs::read_to_string(p).with_context(|| format!("cannot read {}", p.display()))?;
                ExperimentConfig::from_toml(&text)
            }
        }
    }

    pub fn to_toml(&self) -> String {
        toml::to_string(self).expect("config serializes")
    }

    pub fn to_json(&self) -> String {
        serde_json::to_string(self).expect("config serializes")
    }

    /// Checks ranges without touching the file system.
    pub fn validate(&self) -> Result<()> {
        let m = &self.model;
        ModelParams::new(m.r, m.b, m.alpha, m.beta)?;
        let g = &self.grid;
        if !(g.length > 0.0 && g.length.is_finite()) {
            bail!("grid.length must be positive");
        }
        if g.n < 64 || !g.n.is_power_of_two() || g.n > MAX_NODES {
            bail!("grid.n must be a power of two in [64, {MAX_NODES}] (got {})", g.n);
        }
        let c = &self.continuation;
        for (name, v) in [("ds", c.ds), ("ds_min", c.ds_min), ("ds_max", c.ds_max), ("fill_fraction", c.fill_fraction)] {
            if !(v > 0.0 && v.is_finite()) {
                bail!("continuation.{name} must be positive (got {v})");
            }
        }
        if !(c.ds_min <= c.ds && c.ds <= c.ds_max) {
            bail!("continuation step sizes must satisfy ds_min <= ds <= ds_max");
        }
        if !(c.r_min < c.r_max) {
            bail!("continuation.r_min must be below r_max");
        }
        if c.max_points < 2 {
            bail!("continuation.max_points must be at least 2");
        }
        let s = &self.stability;
        if s.stride == 0 {
            bail!("stability.stride must be at least 1");
        }
        for (name, v) in [("sigma_tol", s.sigma_tol), ("parity_factor", s.parity_factor)] {
            if !(v > 0.0 && v.is_finite()) {
                bail!("stability.{name} must be positive (got {v})");
            }
        }
        self.evolve_config()?.validate()?;
        let e = &self.evolve;
        for (name, v) in [("perturbation", e.perturbation), ("noise", e.noise)] {
            if !(v >= 0.0 && v.is_finite()) {
                bail!("evolve.{name} must be non-negative (got {v})");
            }
        }
        Ok(())
    }

    /// Creates the output directory and checks that it is writable.
    pub fn prepare_output(&self) -> Result<&Path> {
        let dir = &self.output.dir;
        std::fs::create_dir_all(dir).with_context(|| format!("cannot create {}", dir.display()))?;
        let probe = dir.join(".esh-write-test");
        std::fs::write(&probe, b"").with_context(|| format!("{} is not writable", dir.display()))?;
        let _ = std::fs::remove_file(probe);
        Ok(dir)
    }

    pub fn params(&self) -> ModelParams {
        let m = &self.model;
        ModelParams { r: m.r, b: m.b, alpha: m.alpha, beta: m.beta }
    }

    pub fn continuation_options(&self) -> ContinuationOptions {
        let c = &self.continuation;
        ContinuationOptions {
            ds: c.ds,
            ds_min: c.ds_min,
            ds_max: c.ds_max,
            max_points: c.max_points,
            r_min: c.r_min,
            r_max: c.r_max,
            max_folds: (c.folds > 0).then_some(c.folds),
            fill_fraction: c.fill_fraction,
            ..ContinuationOptions::default()
        }
    }

    pub fn spectrum_options(&self) -> SpectrumOptions {
        let s = &self.stability;
        SpectrumOptions { n_eigs: s.n_eigs, goldstone_tol: s.sigma_tol, parity_factor: s.parity_factor }
    }

    pub fn evolve_config(&self) -> Result<EvolveConfig> {
        let e = &self.evolve;
        let scheme: Scheme = e.scheme.parse()?;
        Ok(EvolveConfig {
            dt: e.dt,
            t_end: e.t_end,
            scheme,
            record_stride: e.record_stride,
            monitors: Monitors::default(),
        })
    }
}

#[cfg(test)]
mod tests {
    use super::*;

    #[test]
    fn defaults_validate_and_roundtrip() {
        let cfg = ExperimentConfig::default();
        cfg.validate().unwrap();
        assert_eq!(ExperimentConfig::from_toml(&cfg.to_toml()).unwrap(), cfg);
    }

    #[test]
    fn file_overrides_defaults_field_by_field() {
        let cfg = ExperimentConfig::from_toml("[model]\nalpha = 0.5\n[grid]\nn = 1024\n").unwrap();
        assert_eq!(cfg.model.alpha, 0.5);
        assert_eq!(cfg.model.b, 1.8);
        assert_eq!(cfg.grid.n, 1024);
        assert_eq!(cfg.grid.length, DEFAULT_LENGTH);
    }

    #[test]
    fn unknown_keys_and_bad_values_are_rejected() {
        assert!(ExperimentConfig::from_toml("[model]\ngamma = 1.0\n").is_err());
        assert!(ExperimentConfig::from_toml("[modle]\n").is_err());
        assert!(ExperimentConfig::from_toml("[grid]\nn = \"big\"\n").is_err());
        for text in [
            "[grid]\nn = 100\n",
            "[continuation]\nds = -1.0\n",
            "[continuation]\nds_min = 1.0\n",
            "[stability]\nsigma_tol = 0.0\n",
            "[evolve]\nscheme = \"rk4\"\n",
            "[evolve]\ndt = 0.0\n",
            "[model]\nr = nan\n",
        ] {
            let cfg = ExperimentConfig::from_toml(text).unwrap();
            assert!(cfg.validate().is_err(), "{text}");
        }
    }

    #[test]
    fn output_dir_is_created() {
        let tmp = tempfile::tempdir().unwrap();
        let mut cfg = ExperimentConfig::default();
        cfg.output.dir = tmp.path().join("a/b");
        assert!(cfg.prepare_output().unwrap().is_dir());
    }
}
