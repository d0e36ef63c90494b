//! Stability selection with complementary pairs.
//!
//! Each of `B` random splits yields two disjoint halves. Boosting runs on
//! every half until `q` distinct base-learners have been selected, and a
//! learner's frequency is the share of the `2B` halves that selected it.

use nalgebra::DVector;
use rand::seq::SliceRandom;
use rand::SeedableRng;
use rand_chacha::ChaCha8Rng;
use rayon::prelude::*;
use serde::{Deserialize, Serialize};

use crate::basis::BaseLearner;
use crate::boost::{designs, ComponentBooster, GamlssState, PreparedSet, MAX_RESAMPLE_ATTEMPTS};
use crate::data::Frame;
use crate::error::{Error, Result};
use crate::family::ParameterFamily;

/// Default number of complementary pairs.
pub const DEFAULT_PAIRS: usize = 50;
/// Default per-comparison error rate target.
pub const DEFAULT_PCER: f64 = 0.06;
/// Default selection threshold.
pub const DEFAULT_PI_THR: f64 = 0.9;
/// Default cap on boosting iterations per half.
pub const DEFAULT_MAX_ITER: usize = 5000;

#[derive(Debug, Clone, Copy, PartialEq, Eq, Default, Serialize, Deserialize)]
#[serde(rename_all = "snake_case")]
pub enum BoundKind {
    /// `E[V] <= q^2 / ((2 pi - 1) p)`.
    #[default]
    MeinshausenBuhlmann,
    /// Complementary-pairs bound under a unimodality assumption on the
    /// selection-frequency distribution. Never looser than the default.
    Unimodal,
}

/// Upper bound on expected false selections and the per-comparison error rate.
#[derive(Debug, Clone, Copy, PartialEq, Serialize, Deserialize)]
pub struct ErrorBound {
    pub expected_false: f64,
    pub pcer: f64,
}

fn check_bound_args(p: usize, q: usize, pi_thr: f64) -> Result<()> {
    if !(pi_thr > 0.5 && pi_thr <= 1.0) {
        return Err(Error::InvalidArgument(format!("threshold {pi_thr} must lie in (0.5, 1]")));
    }
    if p == 0 || q > p {
        return Err(Error::InvalidArgument(format!("need 0 <= q <= p with p > 0 (q = {q}, p = {p})")));
    }
    Ok(())
}

/// Meinshausen-Buhlmann bound.
pub fn pcer_bound(p: usize, q: usize, pi_thr: f64) -> Result<ErrorBound> {
    check_bound_args(p, q, pi_thr)?;
    let pf = p as f64;
    let e_v = (q * q) as f64 / ((2.0 * pi_thr - 1.0) * pf);
    Ok(ErrorBound { expected_false: e_v, pcer: e_v / pf })
}

/// Bound of the requested kind. `pairs` only matters for the unimodal bound.
pub fn pcer_bound_with(kind: BoundKind, p: usize, q: usize, pi_thr: f64, pairs: usize) -> Result<ErrorBound> {
    let mb = pcer_bound(p, q, pi_thr)?;
    match kind {
        BoundKind::MeinshausenBuhlmann => Ok(mb),
        BoundKind::Unimodal => {
            if pairs == 0 {
                return Err(Error::InvalidArgument("number of pairs must be positive".into()));
            }
            let b = pairs as f64;
            let c = if pi_thr <= 0.75 {
                let d = 2.0 * (2.0 * pi_thr - 1.0 - 1.0 / (2.0 * b));
                if d <= 0.0 {
                    f64::INFINITY
                } else {
                    1.0 / d
                }
            } else {
                4.0 * (1.0 - pi_thr + 1.0 / (2.0 * b)) / (1.0 + 1.0 / b)
            };
            let pf = p as f64;
            let e_v = (c * (q * q) as f64 / pf).min(mb.expected_false);
            Ok(ErrorBound { expected_false: e_v, pcer: e_v / pf })
        }
    }
}

/// User-facing configuration. Exactly two of `q`, `pi_thr` and `pcer_target`
/// must be set; the third follows from the Meinshausen-Buhlmann bound.
#[derive(Debug, Clone, Copy, PartialEq, Serialize, Deserialize)]
#[serde(default, deny_unknown_fields)]
pub struct StabSelConfig {
    pub q: Option<usize>,
    pub pi_thr: Option<f64>,
    pub pcer_target: Option<f64>,
    pub pairs: usize,
    pub max_iter: usize,
    pub bound: BoundKind,
}

impl Default for StabSelConfig {
    fn default() -> Self {
        Self {
            q: None,
            pi_thr: Some(DEFAULT_PI_THR),
            pcer_target: Some(DEFAULT_PCER),
            pairs: DEFAULT_PAIRS,
            max_iter: DEFAULT_MAX_ITER,
            bound: BoundKind::MeinshausenBuhlmann,
        }
    }
}

/// Configuration with `q` and `pi_thr` fixed for a given `p`.
#[derive(Debug, Clone, Copy, PartialEq, Serialize, Deserialize)]
pub struct ResolvedStabSel {
    pub p: usize,
    pub q: usize,
    pub pi_thr: f64,
    pub pairs: usize,
    pub max_iter: usize,
    pub bound: BoundKind,
}

impl StabSelConfig {
    pub fn resolve(&self, p: usize) -> Result<ResolvedStabSel> {
        if self.pairs == 0 {
            return Err(Error::InvalidArgument("number of pairs must be positive".into()));
        }
        if p == 0 {
            return Err(Error::InvalidArgument("no base-learners to select from".into()));
        }
        let pf = p as f64;
        let (q, pi_thr) = match (self.q, self.pi_thr, self.pcer_target) {
            (Some(q), Some(pi), None) => (q, pi),
            (None, Some(pi), Some(pcer)) => {
                if !(pi > 0.5 && pi <= 1.0) || !(pcer > 0.0) {
                    return Err(Error::InvalidArgument(format!("invalid threshold {pi} or PCER {pcer}")));
                }
                let q = (pf * (pcer * (2.0 * pi - 1.0)).sqrt() + 1e-9).floor() as usize;
                (q.min(p), pi)
            }
            (Some(q), None, Some(pcer)) => {
                if !(pcer > 0.0) {
                    return Err(Error::InvalidArgument(format!("invalid PCER {pcer}")));
                }
                let pi = ((q * q) as f64 / (pcer * pf * pf) + 1.0) / 2.0;
                if pi > 1.0 {
                    return Err(Error::InvalidArgument(format!(
                        "q = {q} cannot meet PCER {pcer} with p = {p}: threshold would be {pi:.3}"
                    )));
                }
                (q, pi)
            }
            _ => {
                return Err(Error::InvalidArgument(
                    "exactly two of q, pi_thr and pcer_target must be given".into(),
                ))
            }
        };
        if q == 0 {
            log::warn!("selection budget q resolved to 0; the stable set will be empty");
        }
        check_bound_args(p, q, pi_thr)?;
        Ok(ResolvedStabSel { p, q, pi_thr, pairs: self.pairs, max_iter: self.max_iter, bound: self.bound })
    }
}

/// Selection frequencies of one parameter's base-learners.
#[derive(Debug, Clone, PartialEq, Serialize, Deserialize)]
pub struct StabSelResult {
    pub names: Vec<String>,
    /// Number of halves that selected each learner.
    pub counts: Vec<usize>,
    pub frequencies: Vec<f64>,
    pub config: ResolvedStabSel,
    pub bound: ErrorBound,
    /// Halves that hit the iteration cap before reaching `q` selections.
    pub capped_halves: usize,
}

impl StabSelResult {
    fn from_counts(names: Vec<String>, counts: Vec<usize>, config: ResolvedStabSel, capped: usize) -> Result<Self> {
        let halves = (2 * config.pairs) as f64;
        let bound = pcer_bound_with(config.bound, config.p, config.q, config.pi_thr, config.pairs)?;
        Ok(Self {
            frequencies: counts.iter().map(|&c| c as f64 / halves).collect(),
            names,
            counts,
            config,
            bound,
            capped_halves: capped,
        })
    }

    pub fn is_stable(&self, j: usize) -> bool {
        self.frequencies[j] >= self.config.pi_thr
    }

    pub fn stable_set(&self) -> Vec<String> {
        self.stable_set_at(self.config.pi_thr)
    }

    /// Learners whose frequency reaches `pi_thr`.
    pub fn stable_set_at(&self, pi_thr: f64) -> Vec<String> {
        self.names
            .iter()
            .zip(&self.frequencies)
            .filter(|(_, &f)| f >= pi_thr)
            .map(|(n, _)| n.clone())
            .collect()
    }
}

/// `pairs` random splits of `0..n` into two disjoint halves covering every
/// row. Pair `i` uses its own ChaCha stream. A pair with a half that fails
/// `accept` is redrawn.
pub fn complementary_pairs(
    n: usize,
    pairs: usize,
    seed: u64,
    accept: impl Fn(&[usize]) -> bool,
) -> Result<Vec<(Vec<usize>, Vec<usize>)>> {
    if n < 2 {
        return Err(Error::InvalidArgument(format!("need at least 2 rows to split, got {n}")));
    }
    let half = n / 2;
    (0..pairs)
        .map(|i| {
            let mut rng = ChaCha8Rng::seed_from_u64(seed);
            rng.set_stream(i as u64 + 1);
            for attempt in 0..MAX_RESAMPLE_ATTEMPTS {
                let mut perm: Vec<usize> = (0..n).collect();
                perm.shuffle(&mut rng);
                let mut a = perm[..half].to_vec();
                let mut b = perm[half..].to_vec();
                a.sort_unstable();
                b.sort_unstable();
                if accept(&a) && accept(&b) {
                    if attempt > 0 {
                        log::warn!("pair {i} redrawn {attempt} time(s) because of a degenerate response");
                    }
                    return Ok((a, b));
                }
            }
            Err(Error::DegenerateResponse(format!(
                "pair {i}: no usable split after {MAX_RESAMPLE_ATTEMPTS} draws"
            )))
        })
        .collect()
}

fn halves(pairs: Vec<(Vec<usize>, Vec<usize>)>) -> Vec<Vec<usize>> {
    pairs.into_iter().flat_map(|(a, b)| [a, b]).collect()
}

fn gather(y: &[f64], rows: &[usize]) -> Vec<f64> {
    rows.iter().map(|&r| y[r]).collect()
}

fn tally(p: usize, picks: &[(Vec<bool>, bool)]) -> (Vec<usize>, usize) {
    let mut counts = vec![0; p];
    for (sel, _) in picks {
        for (c, &s) in counts.iter_mut().zip(sel) {
            *c += s as usize;
        }
    }
    (counts, picks.iter().filter(|(_, capped)| *capped).count())
}

/// Distinct-selection tracker.
struct Picked {
    seen: Vec<bool>,
    distinct: usize,
}

impl Picked {
    fn new(p: usize) -> Self {
        Self { seen: vec![false; p], distinct: 0 }
    }

    fn add(&mut self, j: usize) {
        if !self.seen[j] {
            self.seen[j] = true;
            self.distinct += 1;
        }
    }
}

/// Stability selection for a single-parameter family.
#[allow(clippy::too_many_arguments)]
pub fn stability_select(
    learners: &[BaseLearner],
    frame: &Frame,
    y: &[f64],
    family: ParameterFamily,
    nu: f64,
    config: &StabSelConfig,
    seed: u64,
) -> Result<StabSelResult> {
    let cfg = config.resolve(learners.len())?;
    family.check_response(y)?;
    if frame.nrows() != y.len() {
        return Err(Error::InvalidArgument("frame and response differ in length".into()));
    }
    let full = designs(learners, frame)?;
    let accept = |rows: &[usize]| family.offset(&gather(y, rows)).is_ok();
    let halves = halves(complementary_pairs(y.len(), cfg.pairs, seed, accept)?);
    let picks: Vec<(Vec<bool>, bool)> = halves
        .par_iter()
        .map(|rows| -> Result<(Vec<bool>, bool)> {
            let yh = gather(y, rows);
            let prep = PreparedSet::new(learners, &full, Some(rows))?;
            let mut b = ComponentBooster::new(&prep, None, family.offset(&yh)?, nu);
            let mut picked = Picked::new(learners.len());
            let mut u = DVector::zeros(yh.len());
            let mut it = 0;
            while picked.distinct < cfg.q && it < cfg.max_iter {
                for (i, ui) in u.iter_mut().enumerate() {
                    *ui = family.neg_gradient(yh[i], b.eta[i], 0.0);
                }
                picked.add(b.step(&u)?);
                it += 1;
            }
            Ok((picked.seen, picked.distinct < cfg.q))
        })
        .collect::<Result<_>>()?;
    let (counts, capped) = tally(learners.len(), &picks);
    if capped > 0 {
        log::warn!("{capped} half-sample fits stopped at {} iterations before reaching q = {}", cfg.max_iter, cfg.q);
    }
    StabSelResult::from_counts(learners.iter().map(|b| b.name.clone()).collect(), counts, cfg, capped)
}

/// Stability selection for the truncated-NB GAMLSS, one result per
/// parameter. Both predictors are updated cyclically on each half; a
/// parameter stops updating once it has selected `q` distinct learners.
pub fn stability_select_gamlss(
    mu_learners: &[BaseLearner],
    sigma_learners: &[BaseLearner],
    frame: &Frame,
    y: &[f64],
    nu: f64,
    config: &StabSelConfig,
    seed: u64,
) -> Result<(StabSelResult, StabSelResult)> {
    let cfg_mu = config.resolve(mu_learners.len())?;
    let cfg_sigma = config.resolve(sigma_learners.len())?;
    ParameterFamily::TruncNbMu.check_response(y)?;
    if frame.nrows() != y.len() {
        return Err(Error::InvalidArgument("frame and response differ in length".into()));
    }
    let mu_full = designs(mu_learners, frame)?;
    let sigma_full = designs(sigma_learners, frame)?;
    let halves = halves(complementary_pairs(y.len(), cfg_mu.pairs, seed, |r| r.len() >= 2)?);
    let picks: Vec<((Vec<bool>, bool), (Vec<bool>, bool))> = halves
        .par_iter()
        .map(|rows| {
            let yh = gather(y, rows);
            let mu_prep = PreparedSet::new(mu_learners, &mu_full, Some(rows))?;
            let sigma_prep = PreparedSet::new(sigma_learners, &sigma_full, Some(rows))?;
            let mut state = GamlssState::new(
                ComponentBooster::new(&mu_prep, None, ParameterFamily::TruncNbMu.offset(&yh)?, nu),
                ComponentBooster::new(&sigma_prep, None, ParameterFamily::TruncNbSigma.offset(&yh)?, nu),
                &yh,
            );
            let mut pm = Picked::new(mu_learners.len());
            let mut ps = Picked::new(sigma_learners.len());
            let (mut im, mut is) = (0, 0);
            loop {
                let go_mu = pm.distinct < cfg_mu.q && im < cfg_mu.max_iter;
                let go_sigma = ps.distinct < cfg_sigma.q && is < cfg_sigma.max_iter;
                if !go_mu && !go_sigma {
                    break;
                }
                if go_mu {
                    pm.add(state.step_mu()?);
                    im += 1;
                }
                if go_sigma {
                    ps.add(state.step_sigma()?);
                    is += 1;
                }
            }
            let mu_capped = pm.distinct < cfg_mu.q;
            let sigma_capped = ps.distinct < cfg_sigma.q;
            Ok(((pm.seen, mu_capped), (ps.seen, sigma_capped)))
        })
        .collect::<Result<_>>()?;
    let (mu_picks, sigma_picks): (Vec<_>, Vec<_>) = picks.into_iter().unzip();
    let (mu_counts, mu_capped) = tally(mu_learners.len(), &mu_picks);
    let (sigma_counts, sigma_capped) = tally(sigma_learners.len(), &sigma_picks);
    if mu_capped + sigma_capped > 0 {
        log::warn!("{mu_capped} mean and {sigma_capped} overdispersion half-sample fits hit the iteration cap");
    }
    Ok((
        StabSelResult::from_counts(mu_learners.iter().map(|b| b.name.clone()).collect(), mu_counts, cfg_mu, mu_capped)?,
        StabSelResult::from_counts(
            sigma_learners.iter().map(|b| b.name.clone()).collect(),
            sigma_counts,
            cfg_sigma,
            sigma_capped,
        )?,
    ))
}

#[cfg(test)]
mod tests {
    use super::*;
    use approx::assert_relative_eq;

    #[test]
    fn worked_bound() {
        let b = pcer_bound(48, 10, 0.9).unwrap();
        assert_relative_eq!(b.expected_false, 100.0 / (0.8 * 48.0), epsilon = 1e-12);
        assert_relative_eq!(b.pcer, 100.0 / (0.8 * 48.0 * 48.0), epsilon = 1e-12);
        assert!((b.expected_false - 2.604).abs() < 1e-3);
        assert!((b.pcer - 0.0543).abs() < 1e-4);
        assert_eq!(pcer_bound(48, 0, 0.9).unwrap().expected_false, 0.0);
        assert_relative_eq!(pcer_bound(48, 48, 1.0).unwrap().expected_false, 48.0);
        assert!(pcer_bound(48, 10, 0.5).is_err());
        assert!(pcer_bound(48, 49, 0.9).is_err());
    }

    #[test]
    fn unimodal_is_tighter() {
        for pi in [0.6, 0.7, 0.75, 0.8, 0.9, 1.0] {
            let mb = pcer_bound(48, 10, pi).unwrap();
            let u = pcer_bound_with(BoundKind::Unimodal, 48, 10, pi, 50).unwrap();
            assert!(u.expected_false <= mb.expected_false + 1e-12, "{pi}");
        }
        // pi = 0.9, B = 50: C = 4 * 0.11 / 1.02
        let u = pcer_bound_with(BoundKind::Unimodal, 48, 10, 0.9, 50).unwrap();
        assert_relative_eq!(u.expected_false, 4.0 * 0.11 / 1.02 * 100.0 / 48.0, epsilon = 1e-12);
    }

    #[test]
    fn resolution() {
        let r = StabSelConfig::default().resolve(48).unwrap();
        assert_eq!((r.q, r.pi_thr), (10, 0.9));
        let c = StabSelConfig { q: Some(10), pi_thr: None, pcer_target: Some(0.06), ..Default::default() };
        let r = c.resolve(48).unwrap();
        assert!(pcer_bound(48, 10, r.pi_thr).unwrap().pcer <= 0.06 + 1e-12);
        let c = StabSelConfig { q: Some(40), pi_thr: None, pcer_target: Some(0.06), ..Default::default() };
        assert!(c.resolve(48).is_err());
        let c = StabSelConfig { q: Some(10), ..Default::default() };
        assert!(c.resolve(48).is_err());
    }

    #[test]
    fn pairs_partition_rows() {
        let pairs = complementary_pairs(11, 4, 1, |_| true).unwrap();
        for (a, b) in &pairs {
            let mut all: Vec<usize> = a.iter().chain(b).copied().collect();
            all.sort_unstable();
            assert_eq!(all, (0..11).collect::<Vec<_>>());
            assert_eq!(a.len(), 5);
        }
        assert_eq!(pairs, complementary_pairs(11, 4, 1, |_| true).unwrap());
        assert!(complementary_pairs(11, 1, 1, |_| false).is_err());
    }
}
