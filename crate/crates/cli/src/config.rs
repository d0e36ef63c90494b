//! Run configuration: one TOML file, overridable from the command line.

use std::path::{Path, PathBuf};

use anyhow::{Context, Result};
use hurdle_boost::basis::Formula;
use hurdle_boost::data::simulate::SimulationConfig;
use hurdle_boost::data::CovariateSchema;
use hurdle_boost::hurdle::{HurdleSpec, MStops, TuneConfig};
use hurdle_boost::stabsel::StabSelConfig;
use serde::{Deserialize, Serialize};
use sha2::{Digest, Sha256};

#[derive(Debug, Clone, PartialEq, Serialize, Deserialize)]
#[serde(deny_unknown_fields)]
pub struct RunConfig {
    pub seed: Option<u64>,
    /// Survey CSV (or grid CSV for `predict`, predictions CSV for
    /// `summarize`).
    pub data: Option<PathBuf>,
    pub schema: Option<PathBuf>,
    #[serde(default = "default_out")]
    pub out: PathBuf,
    /// Model artifact read by `predict`; defaults to `<out>/model.json`.
    pub model_path: Option<PathBuf>,
    #[serde(default)]
    pub threads: usize,
    #[serde(default = "default_model")]
    pub model: HurdleSpec,
    #[serde(default)]
    pub fit: FitSection,
    #[serde(default)]
    pub tune: TuneConfig,
    #[serde(default)]
    pub stabsel: StabSelConfig,
    #[serde(default)]
    pub predict: PredictSection,
    pub simulate: Option<SimulationConfig>,
}

#[derive(Debug, Clone, Default, PartialEq, Serialize, Deserialize)]
#[serde(deny_unknown_fields)]
pub struct FitSection {
    /// Stopping iterations (occupancy, mean, overdispersion); tuned when
    /// absent.
    pub mstop: Option<[usize; 3]>,
}

#[derive(Debug, Clone, PartialEq, Serialize, Deserialize)]
#[serde(default, deny_unknown_fields)]
pub struct PredictSection {
    /// Winter start years to predict; those of the training data when empty.
    pub winters: Vec<i32>,
    pub n_dates: usize,
    pub edge_km: f64,
}

impl Default for PredictSection {
    fn default() -> Self {
        Self { winters: Vec::new(), n_dates: 10, edge_km: 1.5 }
    }
}

fn default_out() -> PathBuf {
    PathBuf::from("out")
}

fn default_model() -> HurdleSpec {
    HurdleSpec::uniform("int + lin(time) + sm(time) + spatial(xkm, ykm) + lin(obs_window)")
}

impl Default for RunConfig {
    fn default() -> Self {
        toml::from_str("").expect("empty config is valid")
    }
}

/// Command-line values that take precedence over the file.
#[derive(Debug, Clone, Default)]
pub struct Overrides {
    pub data: Option<PathBuf>,
    pub seed: Option<u64>,
    pub out: Option<PathBuf>,
    pub mstop: Option<[usize; 3]>,
    pub folds: Option<usize>,
    pub threads: Option<usize>,
}

pub fn parse_mstop(s: &str) -> std::result::Result<[usize; 3], String> {
    let parts: Vec<&str> = s.split(',').map(str::trim).collect();
    if parts.len() != 3 {
        return Err(format!("expected occupancy,mu,sigma but got `{s}`"));
    }
    let mut out = [0; 3];
    for (o, p) in out.iter_mut().zip(parts) {
        *o = p.parse().map_err(|_| format!("`{p}` is not a non-negative integer"))?;
    }
    Ok(out)
}

impl RunConfig {
    pub fn load(path: Option<&Path>, overrides: &Overrides) -> Result<Self> {
        let mut cfg: RunConfig = match path {
            Some(p) => {
                let text = std::fs::read_to_string(p).with_context(|| format!("reading config {}", p.display()))?;
                let mut cfg: RunConfig = toml::from_str(&text).with_context(|| format!("parsing config {}", p.display()))?;
                // relative paths are taken relative to the config file
                let base = p.parent().unwrap_or(Path::new(""));
                for f in [&mut cfg.data, &mut cfg.schema, &mut cfg.model_path].into_iter().flatten() {
                    if f.is_relative() {
                        *f = base.join(&*f);
                    }
                }
                if cfg.out.is_relative() {
                    cfg.out = base.join(&cfg.out);
                }
                cfg
            }
            None => RunConfig::default(),
        };
        if let Some(d) = &overrides.data {
            cfg.data = Some(d.clone());
        }
        if let Some(s) = overrides.seed {
            cfg.seed = Some(s);
        }
        if let Some(o) = &overrides.out {
            cfg.out = o.clone();
        }
        if let Some(m) = overrides.mstop {
            cfg.fit.mstop = Some(m);
        }
        if let Some(k) = overrides.folds {
            cfg.tune.folds = k;
        }
        if let Some(t) = overrides.threads {
            cfg.threads = t;
        }
        for f in [&cfg.model.occupancy_formula, &cfg.model.mu_formula, &cfg.model.sigma_formula] {
            f.parse::<Formula>().with_context(|| format!("formula `{f}`"))?;
        }
        Ok(cfg)
    }

    /// Effective configuration as TOML text.
    pub fn effective(&self) -> Result<String> {
        Ok(toml::to_string(self)?)
    }

    /// SHA-256 of the effective configuration. The worker count is left
    /// out since outputs do not depend on it.
    pub fn hash(&self) -> Result<String> {
        let canonical = RunConfig { threads: 0, ..self.clone() };
        Ok(hex::encode(Sha256::digest(canonical.effective()?.as_bytes())))
    }

    pub fn seed(&self) -> Result<u64> {
        self.seed.context("this command resamples the data and needs a seed (--seed or `seed` in the config)")
    }

    pub fn data(&self) -> Result<&Path> {
        self.data.as_deref().context("no input file: pass --data or set `data` in the config")
    }

    pub fn load_schema(&self) -> Result<CovariateSchema> {
        match &self.schema {
            Some(p) => CovariateSchema::load(p).with_context(|| format!("reading schema {}", p.display())),
            None => Ok(CovariateSchema::default()),
        }
    }

    pub fn mstop(&self) -> Option<MStops> {
        self.fit.mstop.map(|[occupancy, mu, sigma]| MStops { occupancy, mu, sigma })
    }

    pub fn model_path(&self) -> PathBuf {
        self.model_path.clone().unwrap_or_else(|| self.out.join("model.json"))
    }
}
