//! Synthetic hurdle survey data from known occupancy, mean and overdispersion
//! surfaces.
//!
//! Effects are evaluated on unit-scale derived covariates: `xkm`/`ykm` are
//! mapped to `[-1, 1]` across the segment grid and `time` to `[-1, 1]` across
//! the survey window (15 November to 1 April). Generated covariates are
//! standard normal, so their raw values are already on a unit scale.

use std::collections::BTreeMap;

use chrono::{Days, NaiveDate};
use rand::{Rng, SeedableRng};
use rand_chacha::ChaCha8Rng;
use rand_distr::{Distribution, Gamma, Poisson, StandardNormal};
use serde::{Deserialize, Serialize};

use super::{winter_label, winter_time, CovariateKind, CovariateSchema, MonthDay, SegmentObservation, SurveyDataset};
use crate::error::{Error, Result};
use crate::family::{logistic, p0};

#[derive(Debug, Clone, PartialEq, Serialize, Deserialize)]
#[serde(tag = "kind", rename_all = "snake_case")]
pub enum SimCovariateKind {
    /// One N(0, 1) draw per segment, constant across surveys.
    Static,
    /// Independent N(0, 1) draw for every segment and survey.
    PerSurvey,
    /// Linear trend in the unit coordinates plus N(0, noise^2).
    Gradient { wx: f64, wy: f64, noise: f64 },
    /// Uniformly drawn level for every segment and survey. Cannot enter
    /// effects.
    Categorical { levels: Vec<String> },
}

#[derive(Debug, Clone, PartialEq, Serialize, Deserialize)]
pub struct SimCovariate {
    pub name: String,
    #[serde(flatten)]
    pub kind: SimCovariateKind,
}

#[derive(Debug, Clone, PartialEq, Serialize, Deserialize)]
#[serde(tag = "type", rename_all = "snake_case")]
pub enum Effect {
    Linear { covariate: String, coef: f64 },
    Quadratic { covariate: String, coef: f64 },
    Sine { covariate: String, amplitude: f64, frequency: f64 },
    Interaction { a: String, b: String, coef: f64 },
    /// Gaussian bump in unit coordinates.
    Bump { amplitude: f64, x0: f64, y0: f64, scale: f64 },
}

/// A distribution parameter either held constant (response scale) or given by
/// an additive predictor on the link scale.
#[derive(Debug, Clone, PartialEq, Serialize, Deserialize)]
#[serde(tag = "model", rename_all = "snake_case")]
pub enum ParamModel {
    Constant { value: f64 },
    Predictor {
        intercept: f64,
        #[serde(default)]
        effects: Vec<Effect>,
    },
}

impl ParamModel {
    fn link_value(&self, env: &dyn Fn(&str) -> f64) -> f64 {
        match self {
            ParamModel::Constant { value } => *value,
            ParamModel::Predictor { intercept, effects } => {
                intercept + effects.iter().map(|e| e.eval(env)).sum::<f64>()
            }
        }
    }
}

impl Effect {
    fn eval(&self, env: &dyn Fn(&str) -> f64) -> f64 {
        match self {
            Effect::Linear { covariate, coef } => coef * env(covariate),
            Effect::Quadratic { covariate, coef } => coef * env(covariate).powi(2),
            Effect::Sine { covariate, amplitude, frequency } => {
                amplitude * (frequency * env(covariate)).sin()
            }
            Effect::Interaction { a, b, coef } => coef * env(a) * env(b),
            Effect::Bump { amplitude, x0, y0, scale } => {
                let dx = env("xkm") - x0;
                let dy = env("ykm") - y0;
                amplitude * (-(dx * dx + dy * dy) / (2.0 * scale * scale)).exp()
            }
        }
    }

    fn covariates(&self) -> Vec<&str> {
        match self {
            Effect::Linear { covariate, .. }
            | Effect::Quadratic { covariate, .. }
            | Effect::Sine { covariate, .. } => vec![covariate],
            Effect::Interaction { a, b, .. } => vec![a, b],
            Effect::Bump { .. } => vec!["xkm", "ykm"],
        }
    }
}

#[derive(Debug, Clone, PartialEq, Serialize, Deserialize)]
pub struct SimulationConfig {
    pub nx: usize,
    pub ny: usize,
    #[serde(default = "default_spacing")]
    pub spacing_km: f64,
    pub winters: Vec<i32>,
    pub surveys_per_winter: usize,
    #[serde(default)]
    pub winter_start: MonthDay,
    #[serde(default = "default_window")]
    pub obs_window: (f64, f64),
    #[serde(default)]
    pub covariates: Vec<SimCovariate>,
    pub occupancy: ParamModel,
    pub mu: ParamModel,
    pub sigma: ParamModel,
}

fn default_spacing() -> f64 {
    1.5
}

fn default_window() -> (f64, f64) {
    (1.0, 2.25)
}

/// Parameters of one simulated row, on the response scale.
#[derive(Debug, Clone, Copy, PartialEq)]
pub struct TrueParams {
    pub pi: f64,
    pub mu: f64,
    pub sigma: f64,
}

/// Simulated dataset plus the generating parameters of every row.
#[derive(Debug, Clone)]
pub struct Simulation {
    pub dataset: SurveyDataset,
    pub truth: Vec<TrueParams>,
}

/// Evenly spaced dates from 15 November to 1 April of the winter starting in
/// `year`.
pub fn season_dates(year: i32, n: usize) -> Vec<NaiveDate> {
    let first = NaiveDate::from_ymd_opt(year, 11, 15).expect("valid date");
    let last = NaiveDate::from_ymd_opt(year + 1, 4, 1).expect("valid date");
    let span = (last - first).num_days() as f64;
    match n {
        0 => Vec::new(),
        1 => vec![first],
        _ => (0..n)
            .map(|k| first + Days::new((span * k as f64 / (n - 1) as f64).round() as u64))
            .collect(),
    }
}

fn check_params(p: TrueParams) -> Result<()> {
    if !(0.0..=1.0).contains(&p.pi) {
        return Err(Error::InvalidParameter(format!("occupancy {} outside [0, 1]", p.pi)));
    }
    if !(p.mu > 0.0 && p.mu.is_finite()) {
        return Err(Error::InvalidParameter(format!("mean {} must be > 0", p.mu)));
    }
    if !(p.sigma > 0.0 && p.sigma.is_finite()) {
        return Err(Error::InvalidParameter(format!("overdispersion {} must be > 0", p.sigma)));
    }
    Ok(())
}

/// One draw from the zero-truncated negative binomial.
pub fn draw_truncnb<R: Rng + ?Sized>(rng: &mut R, mu: f64, sigma: f64) -> u64 {
    let zero = p0(mu, sigma);
    if zero <= 0.5 {
        // Gamma-Poisson mixture with rejection of zeros; at most two tries
        // are expected.
        let shape = 1.0 / sigma;
        let gamma = Gamma::new(shape, sigma * mu).expect("valid gamma parameters");
        loop {
            let rate: f64 = gamma.sample(rng);
            if rate <= 0.0 {
                continue;
            }
            let y = Poisson::new(rate).expect("positive rate").sample(rng) as u64;
            if y > 0 {
                return y;
            }
        }
    }
    // Inverse CDF over y >= 1 with the pmf recurrence
    // f(y + 1) = f(y) (y + r) / (y + 1) q.
    let r = 1.0 / sigma;
    let q = sigma * mu / (1.0 + sigma * mu);
    let target = rng.random::<f64>() * (1.0 - zero);
    let mut pmf = zero * r * q;
    let mut cdf = pmf;
    let mut y = 1u64;
    while cdf < target && pmf > 0.0 {
        pmf *= (y as f64 + r) / (y as f64 + 1.0) * q;
        cdf += pmf;
        y += 1;
    }
    y
}

/// One hurdle draw: zero with probability `1 - pi`, else zero-truncated NB.
pub fn draw_hurdle<R: Rng + ?Sized>(rng: &mut R, pi: f64, mu: f64, sigma: f64) -> u64 {
    if rng.random::<f64>() < pi {
        draw_truncnb(rng, mu, sigma)
    } else {
        0
    }
}

/// Draws a dataset on an `nx` by `ny` segment grid. The same seed always
/// produces the same dataset.
pub fn simulate_hurdle_dataset(config: &SimulationConfig, seed: u64) -> Result<Simulation> {
    if config.nx == 0 || config.ny == 0 || config.winters.is_empty() || config.surveys_per_winter == 0 {
        return Err(Error::InvalidArgument("empty simulation grid".into()));
    }
    let (w_lo, w_hi) = config.obs_window;
    if !(w_lo > 0.0 && w_hi >= w_lo) {
        return Err(Error::InvalidArgument("obs_window range must be positive".into()));
    }
    for c in &config.covariates {
        if let SimCovariateKind::Categorical { levels } = &c.kind {
            if levels.len() < 2 {
                return Err(Error::InvalidArgument(format!("categorical `{}` needs at least two levels", c.name)));
            }
        }
    }
    let known: Vec<&str> = config
        .covariates
        .iter()
        .filter(|c| !matches!(c.kind, SimCovariateKind::Categorical { .. }))
        .map(|c| c.name.as_str())
        .chain(["xkm", "ykm", "time"])
        .collect();
    for model in [&config.occupancy, &config.mu, &config.sigma] {
        if let ParamModel::Predictor { effects, .. } = model {
            for e in effects {
                for c in e.covariates() {
                    if !known.contains(&c) {
                        return Err(Error::InvalidArgument(format!("effect uses unknown covariate `{c}`")));
                    }
                }
            }
        }
    }

    let mut rng = ChaCha8Rng::seed_from_u64(seed);
    let n_seg = config.nx * config.ny;
    let unit = |i: usize, n: usize| if n > 1 { 2.0 * i as f64 / (n - 1) as f64 - 1.0 } else { 0.0 };

    let static_values: BTreeMap<&str, Vec<f64>> = config
        .covariates
        .iter()
        .filter(|c| c.kind == SimCovariateKind::Static)
        .map(|c| (c.name.as_str(), (0..n_seg).map(|_| rng.sample(StandardNormal)).collect()))
        .collect();

    let mut rows = Vec::new();
    let mut truth = Vec::new();
    let mut columns: BTreeMap<String, Vec<f64>> = BTreeMap::new();
    let mut levels_drawn: BTreeMap<String, Vec<String>> = BTreeMap::new();
    for c in &config.covariates {
        match c.kind {
            SimCovariateKind::Categorical { .. } => {
                levels_drawn.insert(c.name.clone(), Vec::new());
            }
            _ => {
                columns.insert(c.name.clone(), Vec::new());
            }
        }
    }

    for &year in &config.winters {
        let start = config.winter_start.in_year(year)?;
        let dates = season_dates(year, config.surveys_per_winter);
        let first = dates[0];
        let season = NaiveDate::from_ymd_opt(year + 1, 4, 1).expect("valid") - first;
        for (k, &date) in dates.iter().enumerate() {
            let survey_id = format!("w{year}-s{:02}", k + 1);
            let t_unit = 2.0 * (date - first).num_days() as f64 / season.num_days() as f64 - 1.0;
            for iy in 0..config.ny {
                for ix in 0..config.nx {
                    let s = iy * config.nx + ix;
                    let (ux, uy) = (unit(ix, config.nx), unit(iy, config.ny));
                    let mut values: BTreeMap<&str, f64> = BTreeMap::new();
                    for c in &config.covariates {
                        let v = match &c.kind {
                            SimCovariateKind::Static => static_values[c.name.as_str()][s],
                            SimCovariateKind::PerSurvey => rng.sample(StandardNormal),
                            SimCovariateKind::Gradient { wx, wy, noise } => {
                                let e: f64 = rng.sample(StandardNormal);
                                wx * ux + wy * uy + noise * e
                            }
                            SimCovariateKind::Categorical { levels } => {
                                let k = rng.random_range(0..levels.len());
                                levels_drawn.get_mut(&c.name).expect("column").push(levels[k].clone());
                                continue;
                            }
                        };
                        values.insert(c.name.as_str(), v);
                    }
                    values.insert("xkm", ux);
                    values.insert("ykm", uy);
                    values.insert("time", t_unit);
                    let env = |name: &str| values[name];
                    let params = TrueParams {
                        pi: match &config.occupancy {
                            ParamModel::Constant { value } => *value,
                            m => logistic(m.link_value(&env)),
                        },
                        mu: match &config.mu {
                            ParamModel::Constant { value } => *value,
                            m => m.link_value(&env).exp(),
                        },
                        sigma: match &config.sigma {
                            ParamModel::Constant { value } => *value,
                            m => m.link_value(&env).exp(),
                        },
                    };
                    check_params(params)?;
                    let count = draw_hurdle(&mut rng, params.pi, params.mu, params.sigma);
                    let obs_window = w_lo + (w_hi - w_lo) * rng.random::<f64>();
                    for (name, col) in columns.iter_mut() {
                        col.push(values[name.as_str()]);
                    }
                    rows.push(SegmentObservation {
                        segment_id: format!("seg{ix:03}_{iy:03}"),
                        survey_id: survey_id.clone(),
                        xkm: ix as f64 * config.spacing_km,
                        ykm: iy as f64 * config.spacing_km,
                        date,
                        time: winter_time(date, start)?,
                        winter: winter_label(start),
                        count,
                        obs_window,
                    });
                    truth.push(params);
                }
            }
        }
    }

    let schema = CovariateSchema {
        winter_start: config.winter_start,
        covariates: config
            .covariates
            .iter()
            .map(|c| {
                let kind = match &c.kind {
                    SimCovariateKind::Categorical { levels } => CovariateKind::Categorical { levels: levels.clone() },
                    _ => CovariateKind::Continuous,
                };
                (c.name.clone(), kind)
            })
            .collect(),
    };
    let dataset = SurveyDataset::from_parts(rows, schema, columns, levels_drawn)?;
    Ok(Simulation { dataset, truth })
}
