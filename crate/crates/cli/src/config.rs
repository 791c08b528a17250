//! Flat key=value configuration (INI-like sections) plus CLI overrides.
//!
//! Sections ([model], [scheme], [hierarchy], [run]) are organizational;
//! keys are globally unique and every key can be overridden by the CLI flag
//! of the same name. The worker count can additionally be overridden with
//! the DEGEN_MLMC_WORKERS environment variable.

use anyhow::{anyhow, bail, Context, Result};
use degen_mlmc::harness::{ExperimentConfig, ReferenceSpec};
use degen_mlmc::models::{InitialKind, ModelKind, RandomDataModel, TwoPhaseParams};
use degen_mlmc::solver::{SchemeConfig, SchemeKind};
use std::collections::BTreeMap;
use std::path::{Path, PathBuf};

/// All recognized keys with their raw string values.
#[derive(Clone, Debug, Default)]
pub struct RawConfig {
    values: BTreeMap<String, String>,
}

const KNOWN_KEYS: &[&str] = &[
    // [model]
    "model",
    "initial",
    "q",
    "k_bar",
    "nu",
    "eps_reg",
    "p_min",
    "p_max",
    "sw_min",
    "sw_max",
    "so_min",
    "so_max",
    // [scheme]
    "scheme",
    "cfl",
    "theta",
    "newton_tol_factor",
    "newton_max_iter",
    "strict_rate_cfl",
    // [hierarchy]
    "dx0",
    "k_refine",
    "level_max",
    "m_base",
    // [run]
    "final_time",
    "replicates",
    "m_samples",
    "master_seed",
    "reference",
    "ref_nodes",
    "ref_level",
    "ref_seed",
    "output_dir",
    "workers",
    "timing",
];

impl RawConfig {
    /// Parses the INI-like file; syntax errors carry the line number.
    pub fn from_file(path: &Path) -> Result<Self> {
        let text = std::fs::read_to_string(path)
            .with_context(|| format!("cannot read config file {}", path.display()))?;
        let mut cfg = RawConfig::default();
        for (lineno, raw) in text.lines().enumerate() {
            let line = raw.trim();
            if line.is_empty() || line.starts_with('#') || line.starts_with(';') {
                continue;
            }
            if line.starts_with('[') {
                if !line.ends_with(']') {
                    bail!(
                        "{}:{}: unterminated section header `{line}`",
                        path.display(),
                        lineno + 1
                    );
                }
                let section = &line[1..line.len() - 1];
                if !["model", "scheme", "hierarchy", "run"].contains(&section) {
                    bail!(
                        "{}:{}: unknown section [{section}]",
                        path.display(),
                        lineno + 1
                    );
                }
                continue;
            }
            let (key, value) = line.split_once('=').ok_or_else(|| {
                anyhow!(
                    "{}:{}: expected `key = value`, got `{line}`",
                    path.display(),
                    lineno + 1
                )
            })?;
            let key = key.trim();
            if !KNOWN_KEYS.contains(&key) {
                bail!("{}:{}: unknown key `{key}`", path.display(), lineno + 1);
            }
            cfg.values.insert(key.to_string(), value.trim().to_string());
        }
        Ok(cfg)
    }

    pub fn set(&mut self, key: &str, value: String) {
        debug_assert!(KNOWN_KEYS.contains(&key), "unknown key {key}");
        self.values.insert(key.to_string(), value);
    }

    fn get(&self, key: &str) -> Option<&str> {
        self.values.get(key).map(|s| s.as_str())
    }

    fn parse<T: std::str::FromStr>(&self, key: &str, default: T) -> Result<T>
    where
        T::Err: std::fmt::Display,
    {
        match self.get(key) {
            None => Ok(default),
            Some(raw) => raw
                .parse()
                .map_err(|e| anyhow!("invalid value for `{key}`: `{raw}` ({e})")),
        }
    }

    fn parse_bool(&self, key: &str, default: bool) -> Result<bool> {
        match self.get(key) {
            None => Ok(default),
            Some("true") | Some("on") | Some("1") | Some("yes") => Ok(true),
            Some("false") | Some("off") | Some("0") | Some("no") => Ok(false),
            Some(raw) => bail!("invalid value for `{key}`: `{raw}` (expected on/off)"),
        }
    }

    /// Resolves the full experiment configuration with defaults matching
    /// the standard experiment setup.
    pub fn experiment(&self) -> Result<ExperimentConfig> {
        let kind = match self.get("model").unwrap_or("random_exponent") {
            "random_exponent" => ModelKind::RandomExponent,
            "random_residual" => ModelKind::RandomResidual,
            "deterministic" => ModelKind::Deterministic,
            other => bail!("unknown model kind `{other}`"),
        };
        let initial = match self.get("initial").unwrap_or("riemann_u02") {
            "riemann_u02" | "riemann" => InitialKind::RiemannU02,
            "sine" => InitialKind::Sine,
            other => bail!("unknown initial data `{other}`"),
        };
        let params = TwoPhaseParams {
            q: self.parse("q", 1.0)?,
            k_bar: self.parse("k_bar", 1.0)?,
            nu: self.parse("nu", 0.01)?,
            eps_reg: self.parse("eps_reg", 1e-9)?,
        };
        let mut model = RandomDataModel::new(kind, params, initial);
        model.exponent_range = (self.parse("p_min", 1.5)?, self.parse("p_max", 2.5)?);
        model.sw_range = (self.parse("sw_min", 0.05)?, self.parse("sw_max", 0.35)?);
        model.so_range = (self.parse("so_min", 0.6)?, self.parse("so_max", 0.95)?);

        let scheme_kind = match self.get("scheme").unwrap_or("explicit") {
            "explicit" => SchemeKind::Explicit,
            "implicit" => SchemeKind::Implicit,
            other => bail!("unknown scheme `{other}`"),
        };
        let mut scheme = match scheme_kind {
            SchemeKind::Explicit => SchemeConfig::explicit(),
            SchemeKind::Implicit => SchemeConfig::implicit(),
        };
        scheme.cfl = self.parse("cfl", scheme.cfl)?;
        scheme.theta = self.parse("theta", scheme.theta)?;
        scheme.newton_tol_factor = self.parse("newton_tol_factor", scheme.newton_tol_factor)?;
        scheme.newton_max_iter = self.parse("newton_max_iter", scheme.newton_max_iter)?;
        scheme.strict_rate_cfl = self.parse_bool("strict_rate_cfl", false)?;

        let reference = match self.get("reference").unwrap_or("quadrature") {
            "quadrature" => ReferenceSpec::Quadrature {
                nodes: self.parse("ref_nodes", 32usize)?,
            },
            "mlmc" => ReferenceSpec::Mlmc {
                level: self.parse("ref_level", 8usize)?,
                seed: self.parse("ref_seed", 0u64)?,
            },
            other => bail!("unknown reference kind `{other}` (quadrature or mlmc)"),
        };

        let workers = match std::env::var("DEGEN_MLMC_WORKERS") {
            Ok(v) => v
                .parse()
                .map_err(|e| anyhow!("invalid DEGEN_MLMC_WORKERS `{v}`: {e}"))?,
            Err(_) => self.parse("workers", 0usize)?,
        };

        Ok(ExperimentConfig {
            model,
            scheme,
            dx0: self.parse("dx0", 0.125)?,
            k_refine: self.parse("k_refine", 1u32)?,
            level_max: self.parse("level_max", 3usize)?,
            m_base: self.parse("m_base", 8usize)?,
            t_final: self.parse("final_time", 0.3)?,
            replicates: self.parse("replicates", 5usize)?,
            master_seed: self.parse("master_seed", 2024u64)?,
            reference,
            output_dir: Some(PathBuf::from(
                self.get("output_dir").unwrap_or("out").to_string(),
            )),
            workers,
            include_timing: self.parse_bool("timing", true)?,
        })
    }

    /// Single-level Monte Carlo sample count for the `mc` subcommand.
    pub fn m_samples(&self) -> Result<usize> {
        self.parse("m_samples", 8usize)
    }
}
