mod common;

use hurdle_boost::basis::{intercept, linear, BaseLearner, Formula, FormulaOptions, FULL_SURVEY_FORMULA};
use hurdle_boost::boost::{fit_gam, fit_gamlss, subsample_mstop, Folds};
use hurdle_boost::data::simulate::draw_truncnb;
use hurdle_boost::data::{standardize, Frame, Standardization};
use hurdle_boost::family::ParameterFamily;
use nalgebra::{DMatrix, DVector};
use rand::{Rng, SeedableRng};
use rand_chacha::ChaCha8Rng;
use rand_distr::StandardNormal;
use statrs::function::gamma::ln_gamma;

fn normal_frame(n: usize, p: usize, rng: &mut ChaCha8Rng) -> (Frame, DMatrix<f64>) {
    let x = DMatrix::from_fn(n, p, |_, _| rng.sample::<f64, _>(StandardNormal));
    let mut f = Frame::new(n);
    for j in 0..p {
        f.insert_continuous(&format!("x{j}"), x.column(j).iter().copied().collect()).unwrap();
    }
    (f, x)
}

fn linear_learners(f: &Frame, p: usize) -> Vec<BaseLearner> {
    let mut v = vec![intercept(f).unwrap()];
    v.extend((0..p).map(|j| linear(f, &format!("x{j}")).unwrap()));
    v
}

fn with_intercept(x: &DMatrix<f64>) -> DMatrix<f64> {
    DMatrix::from_fn(x.nrows(), x.ncols() + 1, |i, j| if j == 0 { 1.0 } else { x[(i, j - 1)] })
}

/// Slopes of the boosted fit (one per linear learner) and the implied
/// intercept on the raw covariate scale.
fn boosted_glm_coefficients(fit: &hurdle_boost::boost::BoostFit, f: &Frame, p: usize) -> DVector<f64> {
    let coefs = fit.coefficients();
    let mut beta = DVector::zeros(p + 1);
    beta[0] = fit.offset + coefs[0][0];
    for j in 0..p {
        let b = coefs[j + 1][0];
        beta[j + 1] = b;
        let x = f.continuous(&format!("x{j}")).unwrap();
        beta[0] -= b * x.iter().sum::<f64>() / x.len() as f64;
    }
    beta
}

#[test]
fn squared_error_boosting_reaches_ols() {
    let mut rng = ChaCha8Rng::seed_from_u64(11);
    let (n, p) = (200, 5);
    let (f, x) = normal_frame(n, p, &mut rng);
    let truth = [0.5, -1.0, 0.0, 2.0, 0.3];
    let y: Vec<f64> = (0..n)
        .map(|i| 1.0 + (0..p).map(|j| truth[j] * x[(i, j)]).sum::<f64>() + rng.sample::<f64, _>(StandardNormal))
        .collect();
    let fit = fit_gam(&linear_learners(&f, p), &f, &y, ParameterFamily::Gaussian, 0.1, 10_000).unwrap();
    let xa = with_intercept(&x);
    let ols = (xa.transpose() * &xa).lu().solve(&(xa.transpose() * DVector::from_vec(y))).unwrap();
    let boosted = boosted_glm_coefficients(&fit, &f, p);
    assert!((boosted - ols).amax() < 1e-6);
}

/// Logistic regression by Newton-Raphson.
fn irls(x: &DMatrix<f64>, y: &[f64]) -> DVector<f64> {
    let mut beta = DVector::zeros(x.ncols());
    for _ in 0..100 {
        let eta = x * &beta;
        let p: Vec<f64> = eta.iter().map(|e| 1.0 / (1.0 + (-e).exp())).collect();
        let w = DMatrix::from_diagonal(&DVector::from_iterator(p.len(), p.iter().map(|p| p * (1.0 - p))));
        let grad = x.transpose() * DVector::from_iterator(p.len(), y.iter().zip(&p).map(|(y, p)| y - p));
        let step = (x.transpose() * w * x).lu().solve(&grad).unwrap();
        beta += &step;
        if step.amax() < 1e-14 {
            break;
        }
    }
    beta
}

fn deviance(x: &DMatrix<f64>, beta: &DVector<f64>, y: &[f64]) -> f64 {
    let eta = x * beta;
    2.0 * eta.iter().zip(y).map(|(e, y)| (1.0 + e.exp()).ln() - y * e).sum::<f64>()
}

#[test]
fn binomial_boosting_approaches_irls_deviance() {
    let mut rng = ChaCha8Rng::seed_from_u64(12);
    let (n, p) = (300, 3);
    let (f, x) = normal_frame(n, p, &mut rng);
    let y: Vec<f64> = (0..n)
        .map(|i| {
            let eta = -0.3 + 1.2 * x[(i, 0)] - 0.8 * x[(i, 2)];
            (rng.random::<f64>() < 1.0 / (1.0 + (-eta).exp())) as u8 as f64
        })
        .collect();
    let xa = with_intercept(&x);
    let oracle = deviance(&xa, &irls(&xa, &y), &y);
    let learners = linear_learners(&f, p);
    let mut last = f64::INFINITY;
    for m in [10, 100, 1000, 20_000] {
        let fit = fit_gam(&learners, &f, &y, ParameterFamily::Binomial, 0.1, m).unwrap();
        let dev = 2.0 * n as f64 * fit.train_risk[m];
        assert!(dev < last && dev >= oracle - 1e-9, "m = {m}: {dev} vs oracle {oracle}");
        last = dev;
    }
    assert!((last - oracle).abs() < 1e-4, "{last} vs {oracle}");
}

#[test]
fn selection_invariant_to_covariate_rescaling() {
    let ds = common::full_survey(8, 8, 5);
    let mut raw = ds.clone();
    // undo standardization, rescale one covariate by 1000 and standardize again
    for (name, s) in &ds.standardization {
        for v in raw.frame.continuous_mut(name).unwrap() {
            *v = s.invert(*v);
        }
    }
    raw.standardization.clear();
    let mut scaled = raw.clone();
    for v in scaled.frame.continuous_mut("depth").unwrap() {
        *v *= 1000.0;
    }
    let a = standardize(&raw).unwrap();
    let b = standardize(&scaled).unwrap();
    let sa: Standardization = a.standardization["depth"];
    let sb: Standardization = b.standardization["depth"];
    assert!((sb.sd / sa.sd - 1000.0).abs() < 1e-6);
    let formula: Formula = "int + lin(depth) + sm(depth) + lin(chla) + sm(chla) + lin(SSTw) + sm(SSTw)".parse().unwrap();
    let y = a.presence();
    let la = formula.build(&a.frame, &FormulaOptions::default()).unwrap();
    let lb = formula.build(&b.frame, &FormulaOptions::default()).unwrap();
    let fa = fit_gam(&la, &a.frame, &y, ParameterFamily::Binomial, 0.1, 150).unwrap();
    let fb = fit_gam(&lb, &b.frame, &y, ParameterFamily::Binomial, 0.1, 150).unwrap();
    assert_eq!(fa.selection_path(), fb.selection_path());
}

#[test]
fn fits_identical_across_thread_counts() {
    let ds = common::full_survey(12, 10, 6);
    let formula: Formula = FULL_SURVEY_FORMULA.parse().unwrap();
    let learners = formula.build(&ds.frame, &FormulaOptions::default()).unwrap();
    let y = ds.presence();
    let run = |threads: usize| {
        let pool = rayon::ThreadPoolBuilder::new().num_threads(threads).build().unwrap();
        pool.install(|| {
            let fit = fit_gam(&learners, &ds.frame, &y, ParameterFamily::Binomial, 0.1, 30).unwrap();
            let folds = Folds::subsample(ds.len(), 4, 9, |_| true).unwrap();
            let curve =
                subsample_mstop(&learners, &ds.frame, &y, ParameterFamily::Binomial, 0.1, &folds, &[0, 10, 20]).unwrap();
            (fit, curve)
        })
    };
    let (f1, c1) = run(1);
    let (f4, c4) = run(4);
    assert_eq!(f1, f4);
    assert_eq!(f1.fitted, f4.fitted);
    assert_eq!(c1, c4);
}

#[test]
fn folds_held_out_rows_never_train() {
    let folds = Folds::subsample(1000, 25, 3, |_| true).unwrap();
    for (t, o) in folds.train.iter().zip(&folds.oob) {
        let mut seen = vec![false; 1000];
        for &r in t {
            seen[r] = true;
        }
        assert!(o.iter().all(|&r| !seen[r]));
        assert_eq!(t.len(), 500);
    }
}

fn truncnb_loglik(y: &[u64], mu: f64, sigma: f64) -> f64 {
    // independent of the library: direct lgamma evaluation
    let r = 1.0 / sigma;
    let lp0 = -r * (1.0 + sigma * mu).ln();
    y.iter()
        .map(|&k| {
            let k = k as f64;
            ln_gamma(k + r) - ln_gamma(r) - ln_gamma(k + 1.0) + r * (r / (r + mu)).ln() + k * (mu / (r + mu)).ln()
                - (1.0 - lp0.exp()).ln()
        })
        .sum()
}

/// Grid search over (log mu, log sigma) followed by successive zooming.
fn grid_mle(y: &[u64]) -> (f64, f64) {
    let (mut cm, mut cs, mut w) = (1.0f64, 0.0f64, 4.0f64);
    for _ in 0..40 {
        let mut best = (f64::NEG_INFINITY, cm, cs);
        for i in 0..=20 {
            for j in 0..=20 {
                let a = cm + w * (i as f64 / 10.0 - 1.0);
                let b = cs + w * (j as f64 / 10.0 - 1.0);
                let l = truncnb_loglik(y, a.exp(), b.exp());
                if l > best.0 {
                    best = (l, a, b);
                }
            }
        }
        cm = best.1;
        cs = best.2;
        w *= 0.3;
    }
    (cm.exp(), cs.exp())
}

#[test]
fn intercept_gamlss_matches_grid_mle() {
    let mut rng = ChaCha8Rng::seed_from_u64(21);
    let n = 1500;
    let y: Vec<u64> = (0..n).map(|_| draw_truncnb(&mut rng, 2.5, 0.6)).collect();
    let (mu_hat, sigma_hat) = grid_mle(&y);
    let yf: Vec<f64> = y.iter().map(|&v| v as f64).collect();
    let f = Frame::new(n);
    let learners = vec![intercept(&f).unwrap()];
    let fit = fit_gamlss(&learners, &learners, &f, &yf, 0.1, (2000, 2000)).unwrap();
    let mu = fit.mu.predict(&f).unwrap().response[0];
    let sigma = fit.sigma.predict(&f).unwrap().response[0];
    assert!((mu / mu_hat - 1.0).abs() < 1e-4, "{mu} vs {mu_hat}");
    assert!((sigma / sigma_hat - 1.0).abs() < 1e-4, "{sigma} vs {sigma_hat}");
}
