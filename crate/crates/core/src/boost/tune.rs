//! Stopping-iteration selection by repeated subsampling.

use rand::seq::index::sample;
use rand::SeedableRng;
use rand_chacha::ChaCha8Rng;
use rayon::prelude::*;
use serde::{Deserialize, Serialize};

use super::{designs, ComponentBooster, GamlssState, HeldOut, PreparedSet};
use crate::basis::BaseLearner;
use crate::data::Frame;
use crate::error::{Error, Result};
use crate::family::{mean_loss, ParameterFamily};

/// Cap on redraws of a fold whose training response is degenerate.
pub const MAX_RESAMPLE_ATTEMPTS: usize = 100;

/// Train/out-of-bag splits, each drawing `floor(n/2)` training rows without
/// replacement.
#[derive(Debug, Clone, PartialEq, Serialize, Deserialize)]
pub struct Folds {
    pub n: usize,
    pub train: Vec<Vec<usize>>,
    pub oob: Vec<Vec<usize>>,
    /// Redraws needed per fold.
    pub resampled: Vec<usize>,
}

impl Folds {
    /// `k` half-subsamples of `0..n`. Fold `i` draws from its own ChaCha
    /// stream so folds are independent of each other's redraws. A fold whose
    /// training rows fail `accept` is redrawn up to
    /// [`MAX_RESAMPLE_ATTEMPTS`] times.
    pub fn subsample(n: usize, k: usize, seed: u64, accept: impl Fn(&[usize]) -> bool) -> Result<Self> {
        if n < 4 {
            return Err(Error::InvalidArgument(format!("subsampling needs at least 4 rows, got {n}")));
        }
        if k == 0 {
            return Err(Error::InvalidArgument("number of folds must be positive".into()));
        }
        let half = n / 2;
        let mut folds = Folds { n, train: Vec::new(), oob: Vec::new(), resampled: Vec::new() };
        for i in 0..k {
            let mut rng = ChaCha8Rng::seed_from_u64(seed);
            rng.set_stream(i as u64 + 1);
            let mut attempts = 0;
            let train = loop {
                let mut t = sample(&mut rng, n, half).into_vec();
                t.sort_unstable();
                if accept(&t) {
                    break t;
                }
                attempts += 1;
                if attempts >= MAX_RESAMPLE_ATTEMPTS {
                    return Err(Error::DegenerateResponse(format!(
                        "fold {i}: no usable subsample after {MAX_RESAMPLE_ATTEMPTS} draws"
                    )));
                }
            };
            if attempts > 0 {
                log::warn!("fold {i} redrawn {attempts} time(s) because of a degenerate response");
            }
            let mut in_train = vec![false; n];
            for &r in &train {
                in_train[r] = true;
            }
            folds.oob.push((0..n).filter(|&r| !in_train[r]).collect());
            folds.train.push(train);
            folds.resampled.push(attempts);
        }
        Ok(folds)
    }

    pub fn len(&self) -> usize {
        self.train.len()
    }

    pub fn is_empty(&self) -> bool {
        self.train.is_empty()
    }
}

/// `{0, 10, ..., max}` (plus `max` itself when it is not a multiple of 10).
pub fn gam_grid(max: usize) -> Vec<usize> {
    let mut g: Vec<usize> = (0..=max).step_by(10).collect();
    if *g.last().unwrap() != max {
        g.push(max);
    }
    g
}

/// Roughly log-spaced grid from 0 to `max` with about `points` entries.
pub fn log_grid(max: usize, points: usize) -> Vec<usize> {
    let mut g = vec![0];
    if max > 0 && points > 1 {
        let steps = points - 1;
        for i in 0..steps {
            let v = ((max as f64 + 1.0).ln() * (i + 1) as f64 / steps as f64).exp() - 1.0;
            g.push(v.round() as usize);
        }
    }
    g.sort_unstable();
    g.dedup();
    g
}

fn normalized_grid(grid: &[usize]) -> Result<Vec<usize>> {
    let mut g = grid.to_vec();
    g.sort_unstable();
    g.dedup();
    if g.is_empty() {
        return Err(Error::InvalidArgument("empty stopping-iteration grid".into()));
    }
    Ok(g)
}

fn column_means(rows: &[Vec<f64>]) -> Vec<f64> {
    let k = rows.len() as f64;
    (0..rows[0].len()).map(|j| rows.iter().map(|r| r[j]).sum::<f64>() / k).collect()
}

fn first_min(v: &[f64]) -> Result<usize> {
    let mut best = 0;
    for (i, &x) in v.iter().enumerate() {
        if !x.is_finite() {
            return Err(Error::NonFinite { what: format!("out-of-bag risk at grid point {i}"), iteration: i });
        }
        if x < v[best] {
            best = i;
        }
    }
    Ok(best)
}

/// Out-of-bag risk of a single-parameter model over a stopping grid.
#[derive(Debug, Clone, PartialEq, Serialize, Deserialize)]
pub struct RiskCurve {
    pub grid: Vec<usize>,
    /// One row per fold.
    pub fold_risk: Vec<Vec<f64>>,
    pub mean_risk: Vec<f64>,
    pub best_index: usize,
    pub m_stop: usize,
}

/// Out-of-bag risk of the count model over a two-dimensional grid.
/// `fold_risk[f][i][j]` is the risk at `(grid_mu[i], grid_sigma[j])`.
#[derive(Debug, Clone, PartialEq, Serialize, Deserialize)]
pub struct RiskSurface {
    pub grid_mu: Vec<usize>,
    pub grid_sigma: Vec<usize>,
    pub fold_risk: Vec<Vec<Vec<f64>>>,
    pub mean_risk: Vec<Vec<f64>>,
    pub best: (usize, usize),
    pub m_stop: (usize, usize),
}

/// Mean out-of-bag risk at each grid value; the smallest grid value
/// attaining the minimum is selected.
pub fn subsample_mstop(
    learners: &[BaseLearner],
    frame: &Frame,
    y: &[f64],
    family: ParameterFamily,
    nu: f64,
    folds: &Folds,
    grid: &[usize],
) -> Result<RiskCurve> {
    let grid = normalized_grid(grid)?;
    if folds.n != y.len() || frame.nrows() != y.len() {
        return Err(Error::InvalidArgument("folds, frame and response differ in length".into()));
    }
    let full = designs(learners, frame)?;
    let max = *grid.last().unwrap();
    let fold_risk: Vec<Vec<f64>> = (0..folds.len())
        .into_par_iter()
        .map(|f| -> Result<Vec<f64>> {
            let (train, oob) = (&folds.train[f], &folds.oob[f]);
            let y_train: Vec<f64> = train.iter().map(|&r| y[r]).collect();
            let y_oob: Vec<f64> = oob.iter().map(|&r| y[r]).collect();
            let prep = PreparedSet::new(learners, &full, Some(train))?;
            let held = HeldOut::new(&full, oob);
            let offset = family.offset(&y_train)?;
            let mut b = ComponentBooster::new(&prep, Some(&held), offset, nu);
            let mut u = nalgebra::DVector::zeros(y_train.len());
            let mut out = Vec::with_capacity(grid.len());
            let mut next = 0;
            for m in 0..=max {
                if m > 0 {
                    for (i, ui) in u.iter_mut().enumerate() {
                        *ui = family.neg_gradient(y_train[i], b.eta[i], 0.0);
                    }
                    b.step(&u)?;
                }
                if grid[next] == m {
                    out.push(mean_loss(family, &y_oob, b.eta_oob.as_slice(), &[]));
                    next += 1;
                }
            }
            Ok(out)
        })
        .collect::<Result<_>>()?;
    let mean_risk = column_means(&fold_risk);
    let best_index = first_min(&mean_risk)?;
    Ok(RiskCurve { m_stop: grid[best_index], grid, fold_risk, mean_risk, best_index })
}

/// Out-of-bag risks of one fold over the whole two-dimensional grid.
///
/// The cyclic path is run to `min(max_mu, max_sigma)`. At every cyclic
/// iteration `v` that is a grid value, the state is cloned and continued with
/// mean-only updates (covering pairs `(a >= v, v)`) or overdispersion-only
/// updates (covering `(v, b > v)`). This is exactly the cyclic schedule of
/// [`super::fit_gamlss`] for every pair.
fn fold_surface(
    state: GamlssState<'_>,
    y_oob: &[f64],
    grid_mu: &[usize],
    grid_sigma: &[usize],
) -> Result<Vec<Vec<f64>>> {
    let max_mu = *grid_mu.last().unwrap();
    let max_sigma = *grid_sigma.last().unwrap();
    let mut risk = vec![vec![f64::NAN; grid_sigma.len()]; grid_mu.len()];
    let mut cyc = state;
    for v in 0..=max_mu.min(max_sigma) {
        if v > 0 {
            cyc.step_mu()?;
            cyc.step_sigma()?;
        }
        if let Ok(j) = grid_sigma.binary_search(&v) {
            let mut br = cyc.clone();
            for a in v..=max_mu {
                if a > v {
                    br.step_mu()?;
                }
                if let Ok(i) = grid_mu.binary_search(&a) {
                    risk[i][j] = br.oob_risk(y_oob);
                }
            }
        }
        if let Ok(i) = grid_mu.binary_search(&v) {
            let mut br = cyc.clone();
            for b in v + 1..=max_sigma {
                br.step_sigma()?;
                if let Ok(j) = grid_sigma.binary_search(&b) {
                    risk[i][j] = br.oob_risk(y_oob);
                }
            }
        }
    }
    Ok(risk)
}

/// Two-dimensional stopping selection for the truncated-NB GAMLSS. Ties are
/// resolved towards the smallest mean iteration, then the smallest
/// overdispersion iteration.
#[allow(clippy::too_many_arguments)]
pub fn multidim_mstop(
    mu_learners: &[BaseLearner],
    sigma_learners: &[BaseLearner],
    frame: &Frame,
    y: &[f64],
    nu: f64,
    folds: &Folds,
    grid_mu: &[usize],
    grid_sigma: &[usize],
) -> Result<RiskSurface> {
    let grid_mu = normalized_grid(grid_mu)?;
    let grid_sigma = normalized_grid(grid_sigma)?;
    if folds.n != y.len() || frame.nrows() != y.len() {
        return Err(Error::InvalidArgument("folds, frame and response differ in length".into()));
    }
    ParameterFamily::TruncNbMu.check_response(y)?;
    let mu_full = designs(mu_learners, frame)?;
    let sigma_full = designs(sigma_learners, frame)?;
    let fold_risk: Vec<Vec<Vec<f64>>> = (0..folds.len())
        .into_par_iter()
        .map(|f| -> Result<Vec<Vec<f64>>> {
            let (train, oob) = (&folds.train[f], &folds.oob[f]);
            let y_train: Vec<f64> = train.iter().map(|&r| y[r]).collect();
            let y_oob: Vec<f64> = oob.iter().map(|&r| y[r]).collect();
            let mu_prep = PreparedSet::new(mu_learners, &mu_full, Some(train))?;
            let sigma_prep = PreparedSet::new(sigma_learners, &sigma_full, Some(train))?;
            let mu_held = HeldOut::new(&mu_full, oob);
            let sigma_held = HeldOut::new(&sigma_full, oob);
            let state = GamlssState::new(
                ComponentBooster::new(&mu_prep, Some(&mu_held), ParameterFamily::TruncNbMu.offset(&y_train)?, nu),
                ComponentBooster::new(
                    &sigma_prep,
                    Some(&sigma_held),
                    ParameterFamily::TruncNbSigma.offset(&y_train)?,
                    nu,
                ),
                &y_train,
            );
            fold_surface(state, &y_oob, &grid_mu, &grid_sigma)
        })
        .collect::<Result<_>>()?;
    let k = fold_risk.len() as f64;
    let mean_risk: Vec<Vec<f64>> = (0..grid_mu.len())
        .map(|i| (0..grid_sigma.len()).map(|j| fold_risk.iter().map(|r| r[i][j]).sum::<f64>() / k).collect())
        .collect();
    let mut best = (0, 0);
    for (i, row) in mean_risk.iter().enumerate() {
        for (j, &r) in row.iter().enumerate() {
            if !r.is_finite() {
                return Err(Error::NonFinite {
                    what: format!("out-of-bag risk at ({}, {})", grid_mu[i], grid_sigma[j]),
                    iteration: grid_mu[i].max(grid_sigma[j]),
                });
            }
            if r < mean_risk[best.0][best.1] {
                best = (i, j);
            }
        }
    }
    Ok(RiskSurface {
        m_stop: (grid_mu[best.0], grid_sigma[best.1]),
        grid_mu,
        grid_sigma,
        fold_risk,
        mean_risk,
        best,
    })
}
