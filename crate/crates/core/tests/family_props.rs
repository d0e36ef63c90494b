use hurdle_boost::family::{
    binomial_loss, binomial_neg_gradient, ln_p0, nb_log_pmf, truncnb_log_pmf, truncnb_loss, truncnb_mean,
    truncnb_neg_gradient_mu, truncnb_neg_gradient_sigma, ParameterFamily,
};
use proptest::prelude::*;

const H: f64 = 1e-4;

fn central(f: impl Fn(f64) -> f64, x: f64) -> f64 {
    (f(x + H) - f(x - H)) / (2.0 * H)
}

fn close(analytic: f64, numeric: f64) -> bool {
    (analytic - numeric).abs() <= 1e-5 * analytic.abs().max(numeric.abs()) + 1e-8
}

/// Sum of the zero-truncated pmf over its support, stopping once the tail is
/// negligible.
fn truncated_mass(mu: f64, sigma: f64) -> f64 {
    let mut total = 0.0;
    let mut comp = 0.0;
    for y in 1..2_000_000u64 {
        let p = truncnb_log_pmf(y, mu, sigma).unwrap().exp();
        // Kahan summation
        let t = total + (p - comp);
        comp = (t - total) - (p - comp);
        total = t;
        if p < 1e-18 && y as f64 > mu * 4.0 {
            break;
        }
    }
    total
}

#[test]
fn truncated_pmf_normalizes_on_grid() {
    for &mu in &[0.05, 0.3, 1.0, 2.5, 7.0, 20.0, 60.0] {
        for &sigma in &[0.005, 0.1, 0.5, 1.0, 3.0] {
            let s = truncated_mass(mu, sigma);
            assert!((s - 1.0).abs() < 1e-9, "mu {mu} sigma {sigma}: {s}");
        }
    }
}

#[test]
fn nb_pmf_zero_matches_p0() {
    for &(mu, sigma) in &[(1.0, 1.0), (2.0, 0.5), (0.1, 3.0)] {
        assert!((nb_log_pmf(0, mu, sigma).unwrap() - ln_p0(mu, sigma)).abs() < 1e-13);
    }
}

#[test]
fn truncated_mean_by_summation() {
    for &(mu, sigma) in &[(0.4, 0.7), (3.0, 0.2), (9.0, 1.5)] {
        let mut m = 0.0;
        for y in 1..20_000u64 {
            m += y as f64 * truncnb_log_pmf(y, mu, sigma).unwrap().exp();
        }
        assert!((m - truncnb_mean(mu, sigma)).abs() < 1e-9 * m, "{mu} {sigma}");
    }
}

proptest! {
    #![proptest_config(ProptestConfig { cases: 500, failure_persistence: None, ..ProptestConfig::default() })]

    #[test]
    fn binomial_gradient_matches_differences(y in 0u8..2, eta in -8.0f64..8.0) {
        let y = y as f64;
        let numeric = -central(|e| binomial_loss(y, e), eta);
        prop_assert!(close(binomial_neg_gradient(y, eta), numeric));
    }

    #[test]
    fn truncnb_gradients_match_differences(y in 1u64..200, em in -3.0f64..5.0, es in -4.0f64..2.0) {
        let gm = truncnb_neg_gradient_mu(y, em, es).unwrap();
        let gs = truncnb_neg_gradient_sigma(y, em, es).unwrap();
        let nm = -central(|e| truncnb_loss(y, e, es).unwrap(), em);
        let ns = -central(|e| truncnb_loss(y, em, e).unwrap(), es);
        prop_assert!(close(gm, nm), "mu: {} vs {}", gm, nm);
        prop_assert!(close(gs, ns), "sigma: {} vs {}", gs, ns);
    }

    #[test]
    fn family_dispatch_agrees(y in 1u64..50, em in -2.0f64..3.0, es in -2.0f64..1.0) {
        let yf = y as f64;
        prop_assert_eq!(ParameterFamily::TruncNbMu.loss(yf, em, es), truncnb_loss(y, em, es).unwrap());
        prop_assert_eq!(ParameterFamily::TruncNbSigma.loss(yf, es, em), truncnb_loss(y, em, es).unwrap());
        prop_assert_eq!(ParameterFamily::TruncNbSigma.neg_gradient(yf, es, em), truncnb_neg_gradient_sigma(y, em, es).unwrap());
    }

    #[test]
    fn losses_finite_under_extreme_predictors(y in 1u64..1000, em in -200.0f64..200.0, es in -200.0f64..200.0) {
        prop_assert!(truncnb_loss(y, em, es).unwrap().is_finite());
        prop_assert!(truncnb_neg_gradient_mu(y, em, es).unwrap().is_finite());
        prop_assert!(truncnb_neg_gradient_sigma(y, em, es).unwrap().is_finite());
        prop_assert!(binomial_loss(1.0, em).is_finite() && binomial_loss(0.0, em).is_finite());
    }

    #[test]
    fn p0_is_a_probability(mu in 1e-3f64..1e3, sigma in 1e-4f64..50.0) {
        let p = ln_p0(mu, sigma).exp();
        prop_assert!(p > 0.0 && p < 1.0);
        prop_assert!(truncnb_mean(mu, sigma) >= mu);
    }
}
