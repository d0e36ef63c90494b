//! Hurdle consolidation: an occupancy GAM on all rows and a truncated-NB
//! GAMLSS on the positive rows, combined into unconditional abundance.

mod grid;
mod summary;

use std::collections::BTreeMap;

use rand::{RngCore, SeedableRng};
use rand_chacha::ChaCha8Rng;
use serde::{Deserialize, Serialize};

use crate::basis::{BaseLearner, Formula, FormulaOptions};
use crate::boost::{
    fit_gam, fit_gamlss, gam_grid, log_grid, multidim_mstop, subsample_mstop, BoostFit, Folds, GamlssFit, RiskCurve,
    RiskSurface, DEFAULT_NU,
};
use crate::data::{apply_standardization, CovariateSchema, Frame, Standardization, SurveyDataset, WINTER};
use crate::error::{Error, Result};
use crate::family::{truncnb_mean, ParameterFamily};
use crate::stabsel::{stability_select, stability_select_gamlss, StabSelConfig, StabSelResult};

pub use grid::{
    geojson, prediction_grid, read_grid, write_predictions, write_summaries, GridPrediction, GridSegment,
    GridSource, Quantity,
};
pub use summary::{
    hurdle_log_likelihood, mad, median, nagelkerke, null_log_likelihood, pseudo_r2, quantile, summarize, survey_totals, PseudoR2,
    QuartileClass, SegmentSummary, SurveyTotal,
};

/// Format version of serialized models.
pub const ARTIFACT_VERSION: u32 = 1;

/// Expected count `pi * mu / (1 - p0(mu, sigma))`.
pub fn unconditional_mean(pi: f64, mu: f64, sigma: f64) -> f64 {
    if pi == 0.0 {
        return 0.0;
    }
    pi * truncnb_mean(mu, sigma)
}

/// Independent seed for a named sub-task, derived from the run seed.
pub fn sub_seed(seed: u64, stream: u64) -> u64 {
    let mut rng = ChaCha8Rng::seed_from_u64(seed);
    rng.set_stream(stream);
    rng.next_u64()
}

/// Formulas and step length of the three predictors.
#[derive(Debug, Clone, PartialEq, Serialize, Deserialize)]
#[serde(deny_unknown_fields)]
pub struct HurdleSpec {
    pub occupancy_formula: String,
    pub mu_formula: String,
    pub sigma_formula: String,
    #[serde(default)]
    pub options: FormulaOptions,
    #[serde(default = "default_nu")]
    pub nu: f64,
}

fn default_nu() -> f64 {
    DEFAULT_NU
}

impl HurdleSpec {
    /// Same formula for all three predictors.
    pub fn uniform(formula: &str) -> Self {
        Self {
            occupancy_formula: formula.to_string(),
            mu_formula: formula.to_string(),
            sigma_formula: formula.to_string(),
            options: FormulaOptions::default(),
            nu: DEFAULT_NU,
        }
    }

    /// Builds the occupancy learners on all rows and the count learners on
    /// the positive rows. `ds` must be standardized.
    pub fn build(&self, ds: &SurveyDataset) -> Result<HurdleLearners> {
        if !ds.is_standardized() {
            return Err(Error::InvalidArgument("learners must be built on standardized data".into()));
        }
        let parse = |s: &str| s.parse::<Formula>();
        let occupancy = parse(&self.occupancy_formula)?.build(&ds.frame, &self.options)?;
        let pos = ds.positive_rows();
        if pos.len() < 2 {
            return Err(Error::DegenerateResponse(format!("{} positive counts; need at least 2", pos.len())));
        }
        let pos_frame = ds.frame.select(&pos);
        let mu = parse(&self.mu_formula)?.build(&pos_frame, &self.options)?;
        let sigma = parse(&self.sigma_formula)?.build(&pos_frame, &self.options)?;
        Ok(HurdleLearners { occupancy, mu, sigma })
    }
}

#[derive(Debug, Clone)]
pub struct HurdleLearners {
    pub occupancy: Vec<BaseLearner>,
    pub mu: Vec<BaseLearner>,
    pub sigma: Vec<BaseLearner>,
}

/// Stopping iterations of the three predictors.
#[derive(Debug, Clone, Copy, PartialEq, Eq, Serialize, Deserialize)]
pub struct MStops {
    pub occupancy: usize,
    pub mu: usize,
    pub sigma: usize,
}

struct CountData {
    frame: Frame,
    y: Vec<f64>,
}

fn count_data(ds: &SurveyDataset) -> CountData {
    let pos = ds.positive_rows();
    CountData { frame: ds.frame.select(&pos), y: pos.iter().map(|&i| ds.rows[i].count as f64).collect() }
}

/// Fitted hurdle model with everything needed to predict on raw covariates.
#[derive(Debug, Clone, PartialEq, Serialize, Deserialize)]
pub struct HurdleModel {
    pub version: u32,
    pub schema: CovariateSchema,
    pub standardization: BTreeMap<String, Standardization>,
    pub winter_levels: Vec<String>,
    pub spec: HurdleSpec,
    pub occupancy: BoostFit,
    pub count: GamlssFit,
}

/// Predictions of all hurdle quantities on the response scale.
#[derive(Debug, Clone, PartialEq)]
pub struct HurdlePrediction {
    pub pi: Vec<f64>,
    pub mu: Vec<f64>,
    pub sigma: Vec<f64>,
    /// Truncated-NB mean, the expected count given presence.
    pub conditional: Vec<f64>,
    pub unconditional: Vec<f64>,
    pub extrapolated: usize,
}

/// Fits the occupancy and count parts at fixed stopping iterations.
pub fn fit_hurdle(ds: &SurveyDataset, spec: &HurdleSpec, learners: &HurdleLearners, m: MStops) -> Result<HurdleModel> {
    let occupancy = fit_gam(&learners.occupancy, &ds.frame, &ds.presence(), ParameterFamily::Binomial, spec.nu, m.occupancy)?;
    let cd = count_data(ds);
    let count = fit_gamlss(&learners.mu, &learners.sigma, &cd.frame, &cd.y, spec.nu, (m.mu, m.sigma))?;
    Ok(HurdleModel {
        version: ARTIFACT_VERSION,
        schema: ds.schema.clone(),
        standardization: ds.standardization.clone(),
        winter_levels: ds.frame.categorical(WINTER)?.levels.clone(),
        spec: spec.clone(),
        occupancy,
        count,
    })
}

/// Stopping grids and fold count for [`tune_hurdle`].
#[derive(Debug, Clone, PartialEq, Serialize, Deserialize)]
#[serde(default, deny_unknown_fields)]
pub struct TuneConfig {
    pub folds: usize,
    pub grid_occupancy: Vec<usize>,
    pub grid_mu: Vec<usize>,
    pub grid_sigma: Vec<usize>,
}

impl Default for TuneConfig {
    fn default() -> Self {
        Self { folds: 25, grid_occupancy: gam_grid(3000), grid_mu: log_grid(3000, 31), grid_sigma: log_grid(3000, 31) }
    }
}

#[derive(Debug, Clone, PartialEq, Serialize, Deserialize)]
pub struct HurdleTuning {
    pub occupancy: RiskCurve,
    pub count: RiskSurface,
    pub m_stop: MStops,
}

/// Subsampling selection of all three stopping iterations.
pub fn tune_hurdle(
    ds: &SurveyDataset,
    spec: &HurdleSpec,
    learners: &HurdleLearners,
    config: &TuneConfig,
    seed: u64,
) -> Result<HurdleTuning> {
    let presence = ds.presence();
    let accept = |rows: &[usize]| {
        let ones = rows.iter().filter(|&&r| presence[r] == 1.0).count();
        ones > 0 && ones < rows.len()
    };
    let folds = Folds::subsample(ds.len(), config.folds, sub_seed(seed, 1), accept)?;
    let occupancy = subsample_mstop(
        &learners.occupancy,
        &ds.frame,
        &presence,
        ParameterFamily::Binomial,
        spec.nu,
        &folds,
        &config.grid_occupancy,
    )?;
    let cd = count_data(ds);
    let count_folds = Folds::subsample(cd.y.len(), config.folds, sub_seed(seed, 2), |_| true)?;
    let count = multidim_mstop(
        &learners.mu,
        &learners.sigma,
        &cd.frame,
        &cd.y,
        spec.nu,
        &count_folds,
        &config.grid_mu,
        &config.grid_sigma,
    )?;
    let m_stop = MStops { occupancy: occupancy.m_stop, mu: count.m_stop.0, sigma: count.m_stop.1 };
    Ok(HurdleTuning { occupancy, count, m_stop })
}

#[derive(Debug, Clone, PartialEq, Serialize, Deserialize)]
pub struct HurdleStability {
    pub occupancy: StabSelResult,
    pub mu: StabSelResult,
    pub sigma: StabSelResult,
}

/// Stability selection for the occupancy predictor and, separately, the two
/// count predictors.
pub fn stabsel_hurdle(
    ds: &SurveyDataset,
    spec: &HurdleSpec,
    learners: &HurdleLearners,
    config: &StabSelConfig,
    seed: u64,
) -> Result<HurdleStability> {
    let occupancy = stability_select(
        &learners.occupancy,
        &ds.frame,
        &ds.presence(),
        ParameterFamily::Binomial,
        spec.nu,
        config,
        sub_seed(seed, 3),
    )?;
    let cd = count_data(ds);
    let (mu, sigma) =
        stability_select_gamlss(&learners.mu, &learners.sigma, &cd.frame, &cd.y, spec.nu, config, sub_seed(seed, 4))?;
    Ok(HurdleStability { occupancy, mu, sigma })
}

impl HurdleModel {
    pub fn m_stop(&self) -> MStops {
        MStops { occupancy: self.occupancy.m_stop(), mu: self.count.mu.m_stop(), sigma: self.count.sigma.m_stop() }
    }

    /// Covariate frame of `ds` on the model's standardized scale.
    pub fn standardized_frame(&self, ds: &SurveyDataset) -> Result<Frame> {
        if ds.standardization == self.standardization {
            return Ok(ds.frame.clone());
        }
        if !ds.standardization.is_empty() {
            return Err(Error::InvalidArgument(
                "dataset is standardized with constants that differ from the model's".into(),
            ));
        }
        let mut frame = ds.frame.clone();
        apply_standardization(&mut frame, &self.standardization)?;
        Ok(frame)
    }

    /// Predictions on a frame already on the standardized scale.
    pub fn predict_frame(&self, frame: &Frame) -> Result<HurdlePrediction> {
        let occ = self.occupancy.predict(frame)?;
        let (mu, sigma) = self.count.predict(frame)?;
        let conditional: Vec<f64> = mu.response.iter().zip(&sigma.response).map(|(&m, &s)| truncnb_mean(m, s)).collect();
        let unconditional =
            occ.response.iter().zip(mu.response.iter().zip(&sigma.response)).map(|(&p, (&m, &s))| unconditional_mean(p, m, s)).collect();
        Ok(HurdlePrediction {
            extrapolated: occ.extrapolated + mu.extrapolated + sigma.extrapolated,
            pi: occ.response,
            mu: mu.response,
            sigma: sigma.response,
            conditional,
            unconditional,
        })
    }

    pub fn predict(&self, ds: &SurveyDataset) -> Result<HurdlePrediction> {
        self.predict_frame(&self.standardized_frame(ds)?)
    }

    pub fn to_json(&self) -> Result<String> {
        let mut s = serde_json::to_string_pretty(self)?;
        s.push('\n');
        Ok(s)
    }

    /// Parses a serialized model, refusing other format versions.
    pub fn from_json(text: &str) -> Result<Self> {
        let value: serde_json::Value = serde_json::from_str(text)?;
        let found = value.get("version").and_then(|v| v.as_u64());
        if found != Some(ARTIFACT_VERSION as u64) {
            return Err(Error::Version {
                expected: ARTIFACT_VERSION.to_string(),
                found: found.map_or("missing".to_string(), |v| v.to_string()),
            });
        }
        Ok(serde_json::from_value(value)?)
    }
}

#[cfg(test)]
mod tests {
    use super::*;
    use approx::assert_relative_eq;

    #[test]
    fn consolidation_closed_forms() {
        assert_eq!(unconditional_mean(0.0, 1.0, 1.0), 0.0);
        assert_relative_eq!(unconditional_mean(0.5, 1.0, 1.0), 1.0, epsilon = 1e-14);
        assert_relative_eq!(unconditional_mean(1.0, 500.0, 0.01), 500.0, max_relative = 1e-12);
        for &(pi, mu, s) in &[(0.3, 0.2, 2.0), (0.9, 5.0, 0.1), (1.0, 1.0, 1.0)] {
            let u = unconditional_mean(pi, mu, s);
            assert!(u >= 0.0 && u <= truncnb_mean(mu, s) + 1e-12);
        }
        assert_eq!(unconditional_mean(1.0, 2.0, 0.5), truncnb_mean(2.0, 0.5));
    }

    #[test]
    fn sub_seeds_differ() {
        assert_ne!(sub_seed(1, 1), sub_seed(1, 2));
        assert_eq!(sub_seed(7, 3), sub_seed(7, 3));
    }
}
