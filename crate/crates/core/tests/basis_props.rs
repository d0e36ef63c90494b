mod common;

use hurdle_boost::basis::{
    bspline_design, effective_df, smooth_deviation, solve_lambda_for_df, tensor_deviation, BSplineBasis, Formula,
    FormulaOptions, LearnerKind, SplineConfig, FULL_SURVEY_FORMULA,
};
use hurdle_boost::data::Frame;
use nalgebra::{DMatrix, DVector};
use proptest::prelude::*;

#[test]
fn full_formula_has_48_learners_at_one_df() {
    let ds = common::full_survey(12, 10, 1);
    let formula: Formula = FULL_SURVEY_FORMULA.parse().unwrap();
    let learners = formula.build(&ds.frame, &FormulaOptions::default()).unwrap();
    assert_eq!(learners.len(), 48);
    for bl in &learners {
        // independent recomputation of trace(X (X'X + lambda P)^-1 X')
        let x = bl.design(&ds.frame).unwrap().matrix;
        let df = effective_df(&(x.transpose() * &x), &bl.penalty, bl.lambda).unwrap();
        assert!((df - 1.0).abs() <= 1e-6, "{}: df {df}", bl.name);
        assert!((bl.df - 1.0).abs() <= 1e-6, "{}: stored df {}", bl.name, bl.df);
    }
    let names: Vec<&str> = learners.iter().map(|b| b.name.as_str()).collect();
    for expected in ["int", "time", "f(time)", "SSTrel:time", "f(SSTrel,time)", "f(xkm,ykm)", "f(xkm,ykm):time"] {
        assert!(names.contains(&expected), "missing {expected} in {names:?}");
    }
}

#[test]
fn smooth_deviations_are_orthogonal_to_linear_part() {
    let ds = common::full_survey(12, 10, 2);
    let n = ds.len();
    for cov in ds.continuous_covariates() {
        let bl = smooth_deviation(&ds.frame, &cov, SplineConfig::default(), 1.0).unwrap();
        let x = ds.frame.continuous(&cov).unwrap();
        let u = DVector::from_fn(n, |i, _| (x[i] * 1.7).sin() + x[i] * x[i] + 0.3 * ((i * 7919) % 13) as f64);
        let fit = bl.system(bl.design(&ds.frame).unwrap().matrix).unwrap().fit(&u);
        let ones: f64 = fit.fitted.iter().sum();
        let lin: f64 = fit.fitted.iter().zip(x).map(|(f, xi)| f * xi).sum();
        assert!(ones.abs() < 1e-8 && lin.abs() < 1e-8, "{cov}: {ones} {lin}");
        assert!(fit.fitted.norm() > 1e-3, "{cov}: deviation fit vanished");
    }
}

#[test]
fn tensor_deviation_orthogonal_to_bilinear_part() {
    let ds = common::full_survey(10, 10, 3);
    let bl = tensor_deviation(&ds.frame, "xkm", "ykm", SplineConfig::surface_default(), 1.0).unwrap();
    let (a, b) = (ds.frame.continuous("xkm").unwrap(), ds.frame.continuous("ykm").unwrap());
    let z = bl.design(&ds.frame).unwrap().matrix;
    for j in 0..z.ncols() {
        let col = z.column(j);
        let dots = [
            col.sum(),
            col.iter().zip(a).map(|(c, x)| c * x).sum::<f64>(),
            col.iter().zip(b).map(|(c, y)| c * y).sum::<f64>(),
            col.iter().zip(a.iter().zip(b)).map(|(c, (x, y))| c * x * y).sum::<f64>(),
        ];
        assert!(dots.iter().all(|d| d.abs() < 1e-8), "column {j}: {dots:?}");
    }
}

#[test]
fn learners_survey_json_roundtrip() {
    let ds = common::full_survey(8, 8, 4);
    let formula: Formula = FULL_SURVEY_FORMULA.parse().unwrap();
    let learners = formula.build(&ds.frame, &FormulaOptions::default()).unwrap();
    let text = serde_json::to_string(&learners).unwrap();
    let back: Vec<hurdle_boost::basis::BaseLearner> = serde_json::from_str(&text).unwrap();
    assert_eq!(back, learners);
    for (a, b) in learners.iter().zip(&back) {
        assert_eq!(a.design(&ds.frame).unwrap().matrix, b.design(&ds.frame).unwrap().matrix);
        if let LearnerKind::Varying { by, .. } = &a.kind {
            assert_eq!(by, "time");
        }
    }
}

proptest! {
    #[test]
    fn bspline_partition_of_unity(xs in prop::collection::vec(-3.0f64..3.0, 5..40), k in 3usize..12) {
        prop_assume!(xs.iter().cloned().fold(f64::NEG_INFINITY, f64::max) - xs.iter().cloned().fold(f64::INFINITY, f64::min) > 1e-3);
        let cfg = SplineConfig { degree: 3, n_interior_knots: k, diff_order: 2 };
        let basis = BSplineBasis::from_data(&xs, cfg).unwrap();
        let (b, extrapolated) = basis.design(&xs);
        prop_assert_eq!(extrapolated, 0);
        for row in b.row_iter() {
            prop_assert!((row.sum() - 1.0).abs() < 1e-12);
            prop_assert!(row.iter().all(|v| *v >= -1e-15));
        }
        let _ = bspline_design(&xs, cfg).unwrap();
    }

    #[test]
    fn df_solve_hits_target(seed in 0u64..500, target in 0.5f64..3.0) {
        let n = 40;
        let x: Vec<f64> = (0..n).map(|i| ((i as u64 * 2654435761 + seed) % 1000) as f64 / 1000.0).collect();
        let mut f = Frame::new(n);
        f.insert_continuous("x", x).unwrap();
        let bl = smooth_deviation(&f, "x", SplineConfig::default(), target).unwrap();
        let z = bl.design(&f).unwrap().matrix;
        let df = effective_df(&(z.transpose() * &z), &bl.penalty, bl.lambda).unwrap();
        prop_assert!((df - target).abs() < 1e-6);
        let again = solve_lambda_for_df(&z, &bl.penalty, target).unwrap();
        prop_assert!((again - bl.lambda).abs() <= 1e-6 * bl.lambda.max(1.0));
    }

    #[test]
    fn df_decreases_in_lambda(l1 in 1e-3f64..1e3, factor in 1.01f64..100.0) {
        let x = DMatrix::from_fn(30, 6, |i, j| ((i * (j + 3)) as f64 * 0.37).sin());
        let p = DMatrix::<f64>::identity(6, 6);
        let xtx = x.transpose() * &x;
        let a = effective_df(&xtx, &p, l1).unwrap();
        let b = effective_df(&xtx, &p, l1 * factor).unwrap();
        prop_assert!(b < a);
    }
}
