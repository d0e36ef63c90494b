//! Component-wise functional gradient descent.
//!
//! Every iteration fits all base-learners to the negative gradient by
//! penalized least squares, picks the one with the smallest residual sum of
//! squares and adds `nu` times its fit to the additive predictor. Count
//! models update the mean and overdispersion predictors cyclically, each
//! against its own gradient with the other held fixed.

mod tune;

use nalgebra::{DMatrix, DVector};
use rayon::prelude::*;
use serde::{Deserialize, Serialize};

use crate::basis::{BaseLearner, RidgeSystem};
use crate::data::Frame;
use crate::error::{Error, Result};
use crate::family::{mean_loss, ParameterFamily};

pub use tune::{
    gam_grid, log_grid, multidim_mstop, subsample_mstop, Folds, RiskCurve, RiskSurface, MAX_RESAMPLE_ATTEMPTS,
};

/// Default step length.
pub const DEFAULT_NU: f64 = 0.1;

/// Below this many design cells per iteration learners are fitted serially.
const PARALLEL_WORK: usize = 250_000;

/// Full-data design matrices, one per learner.
pub fn designs(learners: &[BaseLearner], frame: &Frame) -> Result<Vec<DMatrix<f64>>> {
    learners.iter().map(|bl| Ok(bl.design(frame)?.matrix)).collect()
}

fn select_rows(m: &DMatrix<f64>, rows: Option<&[usize]>) -> DMatrix<f64> {
    match rows {
        Some(r) => m.select_rows(r),
        None => m.clone(),
    }
}

/// Penalized systems of a learner set on one set of training rows.
#[derive(Debug, Clone)]
pub struct PreparedSet {
    systems: Vec<RidgeSystem>,
    work: usize,
}

impl PreparedSet {
    pub fn new(learners: &[BaseLearner], designs: &[DMatrix<f64>], rows: Option<&[usize]>) -> Result<Self> {
        let systems: Vec<RidgeSystem> = learners
            .iter()
            .zip(designs)
            .map(|(bl, d)| bl.system(select_rows(d, rows)))
            .collect::<Result<_>>()?;
        let work = systems.iter().map(|s| s.design.nrows() * s.ncols()).sum();
        Ok(Self { systems, work })
    }

    pub fn len(&self) -> usize {
        self.systems.len()
    }

    pub fn is_empty(&self) -> bool {
        self.systems.is_empty()
    }

    pub fn nrows(&self) -> usize {
        self.systems.first().map_or(0, |s| s.design.nrows())
    }
}

/// Held-out design rows used to track out-of-bag predictions.
#[derive(Debug, Clone)]
pub struct HeldOut {
    designs: Vec<DMatrix<f64>>,
}

impl HeldOut {
    pub fn new(designs: &[DMatrix<f64>], rows: &[usize]) -> Self {
        Self { designs: designs.iter().map(|d| d.select_rows(rows)).collect() }
    }
}

/// One accepted update: the selected learner and its coefficient increment
/// (already multiplied by the step length).
#[derive(Debug, Clone, PartialEq, Serialize, Deserialize)]
pub struct Step {
    pub learner: usize,
    pub coef: Vec<f64>,
}

/// Selection with lowest-index tie breaking.
/// Index of the largest RSS reduction; ties go to the lowest index.
fn best_reduction(reduction: &[f64], iteration: usize) -> Result<usize> {
    let mut best = 0;
    for (j, &r) in reduction.iter().enumerate() {
        if !r.is_finite() {
            return Err(Error::NonFinite { what: format!("RSS of base-learner {j}"), iteration });
        }
        if r > reduction[best] {
            best = j;
        }
    }
    let ties = reduction.iter().filter(|&&r| r == reduction[best]).count();
    if ties > 1 {
        log::warn!("iteration {iteration}: {ties} base-learners tie on RSS, selecting index {best}");
    }
    Ok(best)
}

/// Mutable state of one additive predictor during boosting.
#[derive(Debug, Clone)]
pub(crate) struct ComponentBooster<'a> {
    train: &'a PreparedSet,
    held_out: Option<&'a HeldOut>,
    pub eta: DVector<f64>,
    pub eta_oob: DVector<f64>,
    pub nu: f64,
    pub path: Vec<Step>,
}

impl<'a> ComponentBooster<'a> {
    pub fn new(train: &'a PreparedSet, held_out: Option<&'a HeldOut>, offset: f64, nu: f64) -> Self {
        let n_oob = held_out.and_then(|h| h.designs.first()).map_or(0, |d| d.nrows());
        Self {
            train,
            held_out,
            eta: DVector::from_element(train.nrows(), offset),
            eta_oob: DVector::from_element(n_oob, offset),
            nu,
            path: Vec::new(),
        }
    }

    /// One component-wise update against working residuals `u`. Returns the
    /// selected learner index.
    pub fn step(&mut self, u: &DVector<f64>) -> Result<usize> {
        let iteration = self.path.len() + 1;
        if let Some(i) = u.iter().position(|v| !v.is_finite()) {
            return Err(Error::NonFinite { what: format!("negative gradient at row {i}"), iteration });
        }
        let scores: Vec<_> = if self.train.work >= PARALLEL_WORK {
            self.train.systems.par_iter().map(|s| s.score(u)).collect()
        } else {
            self.train.systems.iter().map(|s| s.score(u)).collect()
        };
        let reduction: Vec<f64> = scores.iter().map(|s| s.1).collect();
        let best = best_reduction(&reduction, iteration)?;
        let coef = self.train.systems[best].coef(&scores[best].0) * self.nu;
        self.eta.gemv(1.0, &self.train.systems[best].design, &coef, 1.0);
        if let Some(h) = self.held_out {
            self.eta_oob.gemv(1.0, &h.designs[best], &coef, 1.0);
        }
        self.path.push(Step { learner: best, coef: coef.iter().copied().collect() });
        Ok(best)
    }
}

/// A fitted additive predictor for one distribution parameter.
#[derive(Debug, Clone, PartialEq, Serialize, Deserialize)]
pub struct BoostFit {
    pub family: ParameterFamily,
    pub learners: Vec<BaseLearner>,
    pub offset: f64,
    pub nu: f64,
    pub path: Vec<Step>,
    /// Mean training loss after each iteration; entry 0 is the offset-only
    /// risk.
    pub train_risk: Vec<f64>,
    /// Training predictor accumulated during fitting.
    #[serde(skip)]
    pub fitted: Vec<f64>,
}

/// Link- and response-scale predictions.
#[derive(Debug, Clone, PartialEq)]
pub struct Prediction {
    pub link: Vec<f64>,
    pub response: Vec<f64>,
    /// Spline evaluations outside the training knot range.
    pub extrapolated: usize,
}

impl BoostFit {
    pub fn m_stop(&self) -> usize {
        self.path.len()
    }

    pub fn selection_path(&self) -> Vec<usize> {
        self.path.iter().map(|s| s.learner).collect()
    }

    /// Accumulated coefficients after the first `m` iterations.
    pub fn coefficients_at(&self, m: usize) -> Vec<DVector<f64>> {
        let mut acc: Vec<DVector<f64>> = self.learners.iter().map(|bl| DVector::zeros(bl.ncols())).collect();
        for s in &self.path[..m.min(self.path.len())] {
            for (a, c) in acc[s.learner].iter_mut().zip(&s.coef) {
                *a += c;
            }
        }
        acc
    }

    pub fn coefficients(&self) -> Vec<DVector<f64>> {
        self.coefficients_at(self.m_stop())
    }

    /// Names of learners selected at least once, in first-selection order.
    pub fn selected(&self) -> Vec<String> {
        let mut seen = vec![false; self.learners.len()];
        let mut out = Vec::new();
        for s in &self.path {
            if !seen[s.learner] {
                seen[s.learner] = true;
                out.push(self.learners[s.learner].name.clone());
            }
        }
        out
    }

    /// The same fit stopped after `m` iterations.
    pub fn truncated(&self, m: usize) -> BoostFit {
        let m = m.min(self.m_stop());
        BoostFit {
            family: self.family,
            learners: self.learners.clone(),
            offset: self.offset,
            nu: self.nu,
            path: self.path[..m].to_vec(),
            train_risk: self.train_risk[..=m].to_vec(),
            fitted: Vec::new(),
        }
    }

    /// Predictor on `frame` using the first `m` iterations (all when `None`).
    /// Covariates must be standardized with the training constants.
    pub fn predict_at(&self, frame: &Frame, m: Option<usize>) -> Result<Prediction> {
        let coefs = self.coefficients_at(m.unwrap_or(self.m_stop()));
        let mut eta = DVector::from_element(frame.nrows(), self.offset);
        let mut extrapolated = 0;
        for (bl, c) in self.learners.iter().zip(&coefs) {
            if c.iter().all(|v| *v == 0.0) {
                continue;
            }
            let d = bl.design(frame)?;
            extrapolated += d.extrapolated;
            eta += d.matrix * c;
        }
        if extrapolated > 0 {
            log::warn!(
                "{}: {extrapolated} spline evaluations outside the training range were extrapolated linearly",
                self.family.name()
            );
        }
        let link = self.family.link();
        Ok(Prediction {
            response: eta.iter().map(|&e| link.inverse(e)).collect(),
            link: eta.iter().copied().collect(),
            extrapolated,
        })
    }

    pub fn predict(&self, frame: &Frame) -> Result<Prediction> {
        self.predict_at(frame, None)
    }
}

fn check_lengths(frame: &Frame, y: &[f64]) -> Result<()> {
    if frame.nrows() != y.len() {
        return Err(Error::InvalidArgument(format!(
            "response has {} rows, covariates have {}",
            y.len(),
            frame.nrows()
        )));
    }
    if !(y.len() >= 2) {
        return Err(Error::InvalidArgument("boosting needs at least two rows".into()));
    }
    Ok(())
}

fn check_nu(nu: f64) -> Result<()> {
    if nu > 0.0 && nu <= 1.0 {
        Ok(())
    } else {
        Err(Error::InvalidArgument(format!("step length {nu} must be in (0, 1]")))
    }
}

/// Boosted GAM for a single-parameter family.
pub fn fit_gam(
    learners: &[BaseLearner],
    frame: &Frame,
    y: &[f64],
    family: ParameterFamily,
    nu: f64,
    m_stop: usize,
) -> Result<BoostFit> {
    check_lengths(frame, y)?;
    check_nu(nu)?;
    if matches!(family, ParameterFamily::TruncNbMu | ParameterFamily::TruncNbSigma) {
        return Err(Error::InvalidArgument("count parameters are fitted with fit_gamlss".into()));
    }
    let designs = designs(learners, frame)?;
    let prepared = PreparedSet::new(learners, &designs, None)?;
    let offset = family.offset(y)?;
    let mut booster = ComponentBooster::new(&prepared, None, offset, nu);
    let mut risk = vec![mean_loss(family, y, booster.eta.as_slice(), &[])];
    let mut u = DVector::zeros(y.len());
    for m in 1..=m_stop {
        for (i, ui) in u.iter_mut().enumerate() {
            *ui = family.neg_gradient(y[i], booster.eta[i], 0.0);
        }
        booster.step(&u)?;
        let r = mean_loss(family, y, booster.eta.as_slice(), &[]);
        if !r.is_finite() {
            return Err(Error::NonFinite { what: "training risk".into(), iteration: m });
        }
        risk.push(r);
    }
    Ok(BoostFit {
        family,
        learners: learners.to_vec(),
        offset,
        nu,
        path: booster.path,
        train_risk: risk,
        fitted: booster.eta.iter().copied().collect(),
    })
}

/// Boosted GAMLSS for the zero-truncated negative binomial.
#[derive(Debug, Clone, PartialEq, Serialize, Deserialize)]
pub struct GamlssFit {
    pub mu: BoostFit,
    pub sigma: BoostFit,
    /// Joint mean training loss after each outer iteration; entry 0 is the
    /// offset-only risk.
    pub train_risk: Vec<f64>,
}

impl GamlssFit {
    pub fn m_stop(&self) -> (usize, usize) {
        (self.mu.m_stop(), self.sigma.m_stop())
    }

    pub fn predict(&self, frame: &Frame) -> Result<(Prediction, Prediction)> {
        Ok((self.mu.predict(frame)?, self.sigma.predict(frame)?))
    }
}

/// Both count predictors during cyclic boosting.
#[derive(Debug, Clone)]
pub(crate) struct GamlssState<'a> {
    pub mu: ComponentBooster<'a>,
    pub sigma: ComponentBooster<'a>,
    y: &'a [f64],
    u: DVector<f64>,
}

impl<'a> GamlssState<'a> {
    pub fn new(mu: ComponentBooster<'a>, sigma: ComponentBooster<'a>, y: &'a [f64]) -> Self {
        let n = y.len();
        Self { mu, sigma, y, u: DVector::zeros(n) }
    }

    pub fn step_mu(&mut self) -> Result<usize> {
        for (i, ui) in self.u.iter_mut().enumerate() {
            *ui = ParameterFamily::TruncNbMu.neg_gradient(self.y[i], self.mu.eta[i], self.sigma.eta[i]);
        }
        self.mu.step(&self.u)
    }

    pub fn step_sigma(&mut self) -> Result<usize> {
        for (i, ui) in self.u.iter_mut().enumerate() {
            *ui = ParameterFamily::TruncNbSigma.neg_gradient(self.y[i], self.sigma.eta[i], self.mu.eta[i]);
        }
        self.sigma.step(&self.u)
    }

    pub fn train_risk(&self) -> f64 {
        mean_loss(ParameterFamily::TruncNbMu, self.y, self.mu.eta.as_slice(), self.sigma.eta.as_slice())
    }

    pub fn oob_risk(&self, y_oob: &[f64]) -> f64 {
        mean_loss(ParameterFamily::TruncNbMu, y_oob, self.mu.eta_oob.as_slice(), self.sigma.eta_oob.as_slice())
    }
}

/// Cyclic boosting of the truncated-NB mean and overdispersion. In outer
/// iteration `m` the mean predictor is updated first (if `m <= m_mu`), then
/// the overdispersion predictor (if `m <= m_sigma`).
pub fn fit_gamlss(
    mu_learners: &[BaseLearner],
    sigma_learners: &[BaseLearner],
    frame: &Frame,
    y: &[f64],
    nu: f64,
    m_stop: (usize, usize),
) -> Result<GamlssFit> {
    check_lengths(frame, y)?;
    check_nu(nu)?;
    ParameterFamily::TruncNbMu.check_response(y)?;
    let mu_designs = designs(mu_learners, frame)?;
    let sigma_designs = designs(sigma_learners, frame)?;
    let mu_prep = PreparedSet::new(mu_learners, &mu_designs, None)?;
    let sigma_prep = PreparedSet::new(sigma_learners, &sigma_designs, None)?;
    let mu_offset = ParameterFamily::TruncNbMu.offset(y)?;
    let sigma_offset = ParameterFamily::TruncNbSigma.offset(y)?;
    let mut state = GamlssState::new(
        ComponentBooster::new(&mu_prep, None, mu_offset, nu),
        ComponentBooster::new(&sigma_prep, None, sigma_offset, nu),
        y,
    );
    let r0 = state.train_risk();
    let mut risk = vec![r0];
    let mut mu_risk = vec![r0];
    let mut sigma_risk = vec![r0];
    for m in 1..=m_stop.0.max(m_stop.1) {
        if m <= m_stop.0 {
            state.step_mu()?;
            mu_risk.push(state.train_risk());
        }
        if m <= m_stop.1 {
            state.step_sigma()?;
            sigma_risk.push(state.train_risk());
        }
        let r = state.train_risk();
        if !r.is_finite() {
            return Err(Error::NonFinite { what: "training risk".into(), iteration: m });
        }
        risk.push(r);
    }
    let mu = BoostFit {
        family: ParameterFamily::TruncNbMu,
        learners: mu_learners.to_vec(),
        offset: mu_offset,
        nu,
        path: state.mu.path,
        train_risk: mu_risk,
        fitted: state.mu.eta.iter().copied().collect(),
    };
    let sigma = BoostFit {
        family: ParameterFamily::TruncNbSigma,
        learners: sigma_learners.to_vec(),
        offset: sigma_offset,
        nu,
        path: state.sigma.path,
        train_risk: sigma_risk,
        fitted: state.sigma.eta.iter().copied().collect(),
    };
    Ok(GamlssFit { mu, sigma, train_risk: risk })
}
