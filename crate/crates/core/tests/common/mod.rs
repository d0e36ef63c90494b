#![allow(dead_code)]

use hurdle_boost::data::simulate::{
    simulate_hurdle_dataset, ParamModel, SimCovariate, SimCovariateKind, SimulationConfig,
};
use hurdle_boost::data::{standardize, MonthDay, SurveyDataset};

/// Continuous covariates of the full survey formula.
pub const SURVEY_COVARIATES: [&str; 14] = [
    "SSTw", "SSTm", "SSTrel", "SBT", "NAOw", "depth", "d2land", "chla", "cdom", "meanphi", "SAR", "tidebmean",
    "tidesd", "strat",
];

/// Standardized dataset carrying every covariate of the full formula, with
/// three winters and a binary ferry indicator.
pub fn full_survey(nx: usize, ny: usize, seed: u64) -> SurveyDataset {
    let mut covariates: Vec<SimCovariate> = SURVEY_COVARIATES
        .iter()
        .enumerate()
        .map(|(i, n)| SimCovariate {
            name: n.to_string(),
            kind: match i % 3 {
                0 => SimCovariateKind::Static,
                1 => SimCovariateKind::PerSurvey,
                _ => SimCovariateKind::Gradient { wx: 0.8, wy: -0.5, noise: 0.5 },
            },
        })
        .collect();
    covariates.push(SimCovariate {
        name: "ferry".into(),
        kind: SimCovariateKind::Categorical { levels: vec!["no".into(), "yes".into()] },
    });
    let config = SimulationConfig {
        nx,
        ny,
        spacing_km: 1.5,
        winters: vec![2003, 2004, 2005],
        surveys_per_winter: 3,
        winter_start: MonthDay::default(),
        obs_window: (1.0, 2.25),
        covariates,
        occupancy: ParamModel::Constant { value: 0.5 },
        mu: ParamModel::Constant { value: 3.0 },
        sigma: ParamModel::Constant { value: 0.5 },
    };
    standardize(&simulate_hurdle_dataset(&config, seed).unwrap().dataset).unwrap()
}
