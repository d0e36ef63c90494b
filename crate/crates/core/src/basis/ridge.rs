//! Penalized least squares and effective degrees of freedom.

use nalgebra::{DMatrix, DVector};

use crate::error::{Error, Result};

const LOG_LAMBDA_SPAN: f64 = 30.0;
const DF_TOL: f64 = 1e-10;

/// `trace[(X'X + lambda P)^-1 X'X]` from the Gram matrix.
pub fn effective_df(xtx: &DMatrix<f64>, penalty: &DMatrix<f64>, lambda: f64) -> Result<f64> {
    let a = xtx + penalty * lambda;
    let solved = match a.clone().cholesky() {
        Some(ch) => ch.solve(xtx),
        None => a
            .lu()
            .solve(xtx)
            .ok_or_else(|| Error::Singular(format!("df evaluation at lambda {lambda}")))?,
    };
    Ok(solved.trace())
}

/// Effective df as a function of lambda. Uses a single generalized
/// eigendecomposition when the penalty is positive definite.
enum DfCurve<'a> {
    Spectral(Vec<f64>),
    Direct { xtx: &'a DMatrix<f64>, penalty: &'a DMatrix<f64> },
}

impl<'a> DfCurve<'a> {
    fn new(xtx: &'a DMatrix<f64>, penalty: &'a DMatrix<f64>) -> Self {
        if let Some(ch) = penalty.clone().cholesky() {
            let l = ch.l();
            if let Some(linv) = l.clone().try_inverse() {
                let m = &linv * xtx * linv.transpose();
                let m = (&m + m.transpose()) * 0.5;
                let eig = m.symmetric_eigenvalues();
                return DfCurve::Spectral(eig.iter().map(|v| v.max(0.0)).collect());
            }
        }
        DfCurve::Direct { xtx, penalty }
    }

    fn at(&self, lambda: f64) -> Result<f64> {
        match self {
            DfCurve::Spectral(d) => Ok(if lambda == 0.0 {
                d.iter().filter(|v| **v > 0.0).count() as f64
            } else {
                d.iter().map(|v| v / (v + lambda)).sum()
            }),
            DfCurve::Direct { xtx, penalty } => effective_df(xtx, penalty, lambda),
        }
    }
}

/// Ridge parameter giving `target_df` effective degrees of freedom for the
/// Gram matrix `xtx` and penalty `penalty`, by bisection on `ln lambda`.
pub fn solve_lambda_for_df_gram(
    xtx: &DMatrix<f64>,
    penalty: &DMatrix<f64>,
    target_df: f64,
) -> Result<f64> {
    let curve = DfCurve::new(xtx, penalty);
    let scale = {
        let tp = penalty.trace();
        let tx = xtx.trace();
        if tp > 0.0 && tx > 0.0 {
            tx / tp
        } else {
            1.0
        }
    };
    let df_unpenalized = curve.at(0.0).or_else(|_| curve.at(scale * (-LOG_LAMBDA_SPAN).exp()))?;
    if (df_unpenalized - target_df).abs() <= DF_TOL {
        return Ok(0.0);
    }
    let mut lo = scale.ln() - LOG_LAMBDA_SPAN;
    let mut hi = scale.ln() + LOG_LAMBDA_SPAN;
    let df_lo = curve.at(lo.exp())?;
    let df_hi = curve.at(hi.exp())?;
    if target_df > df_lo + DF_TOL || target_df < df_hi - DF_TOL {
        return Err(Error::DfUnreachable { target: target_df, lo: df_hi, hi: df_lo });
    }
    let mut mid = 0.5 * (lo + hi);
    for _ in 0..200 {
        mid = 0.5 * (lo + hi);
        let df = curve.at(mid.exp())?;
        if (df - target_df).abs() <= DF_TOL {
            break;
        }
        // df decreases in lambda
        if df > target_df {
            lo = mid;
        } else {
            hi = mid;
        }
    }
    Ok(mid.exp())
}

pub fn solve_lambda_for_df(x: &DMatrix<f64>, penalty: &DMatrix<f64>, target_df: f64) -> Result<f64> {
    let xtx = x.transpose() * x;
    solve_lambda_for_df_gram(&xtx, penalty, target_df)
}

/// A base-learner design restricted to a set of rows together with the
/// inverted penalized normal equations.
#[derive(Debug, Clone)]
pub struct RidgeSystem {
    pub design: DMatrix<f64>,
    /// `(X'X + lambda P)^-1`; `None` for an all-zero design.
    inverse: Option<DMatrix<f64>>,
    /// `A^-1 (2A - X'X) A^-1` with `A = X'X + lambda P`: the quadratic form
    /// in `X'u` giving the drop in residual sum of squares.
    gain: DMatrix<f64>,
}

#[derive(Debug, Clone)]
pub struct RidgeFit {
    pub coef: DVector<f64>,
    pub fitted: DVector<f64>,
    pub rss: f64,
}

impl RidgeSystem {
    pub fn new(design: DMatrix<f64>, penalty: &DMatrix<f64>, lambda: f64, label: &str) -> Result<Self> {
        let xtx = design.transpose() * &design;
        if xtx.iter().all(|v| *v == 0.0) {
            return Ok(Self { design, inverse: None, gain: xtx });
        }
        let a = &xtx + penalty * lambda;
        let inverse = match a.clone().cholesky() {
            Some(ch) => ch.inverse(),
            None => a.try_inverse().ok_or_else(|| Error::Singular(label.to_string()))?,
        };
        if inverse.iter().any(|v| !v.is_finite()) {
            return Err(Error::Singular(label.to_string()));
        }
        let g = &inverse * 2.0 - &inverse * &xtx * &inverse;
        let gain = (&g + g.transpose()) * 0.5;
        Ok(Self { design, inverse: Some(inverse), gain })
    }

    pub fn ncols(&self) -> usize {
        self.design.ncols()
    }

    pub fn is_degenerate(&self) -> bool {
        self.inverse.is_none()
    }

    /// `beta = (X'X + lambda P)^-1 X'u`, with fitted values and residual sum
    /// of squares.
    pub fn fit(&self, u: &DVector<f64>) -> RidgeFit {
        let k = self.design.ncols();
        match &self.inverse {
            None => RidgeFit {
                coef: DVector::zeros(k),
                fitted: DVector::zeros(u.len()),
                rss: u.norm_squared(),
            },
            Some(inv) => {
                let xtu = self.design.tr_mul(u);
                let coef = inv * xtu;
                let fitted = &self.design * &coef;
                let rss = u.iter().zip(fitted.iter()).map(|(a, b)| (a - b) * (a - b)).sum();
                RidgeFit { coef, fitted, rss }
            }
        }
    }
}

impl RidgeSystem {
    /// `c = X'u` and the drop in residual sum of squares of the ridge fit,
    /// `2 c'b - b'X'Xb`, without forming coefficients or fitted values.
    pub fn score(&self, u: &DVector<f64>) -> (DVector<f64>, f64) {
        match &self.inverse {
            None => (DVector::zeros(self.design.ncols()), 0.0),
            Some(_) => {
                let xtu = self.design.tr_mul(u);
                let reduction = xtu.dot(&(&self.gain * &xtu));
                (xtu, reduction)
            }
        }
    }

    /// Coefficients from `c = X'u` as returned by [`RidgeSystem::score`].
    pub fn coef(&self, xtu: &DVector<f64>) -> DVector<f64> {
        match &self.inverse {
            None => DVector::zeros(self.design.ncols()),
            Some(inv) => inv * xtu,
        }
    }
}

/// Ridge fit of a design to a working residual vector.
pub fn ridge_fit(
    design: &DMatrix<f64>,
    penalty: &DMatrix<f64>,
    lambda: f64,
    u: &DVector<f64>,
) -> Result<RidgeFit> {
    if u.iter().any(|v| !v.is_finite()) {
        return Err(Error::InvalidArgument("non-finite working residual".into()));
    }
    if u.len() != design.nrows() {
        return Err(Error::InvalidArgument(format!(
            "residual length {} does not match design rows {}",
            u.len(),
            design.nrows()
        )));
    }
    Ok(RidgeSystem::new(design.clone(), penalty, lambda, "ridge_fit")?.fit(u))
}

#[cfg(test)]
mod tests {
    use super::*;
    use approx::assert_relative_eq;

    fn fixed_x53() -> DMatrix<f64> {
        DMatrix::from_row_slice(
            5,
            3,
            &[1.0, 0.5, -1.0, 2.0, -1.0, 0.3, 0.0, 1.5, 2.0, -1.2, 0.7, 0.1, 0.4, -0.3, 1.1],
        )
    }

    #[test]
    fn unpenalized_df_is_rank() {
        let x = fixed_x53();
        let xtx = x.transpose() * &x;
        let p = DMatrix::identity(3, 3);
        assert_relative_eq!(effective_df(&xtx, &p, 0.0).unwrap(), 3.0, epsilon = 1e-12);
    }

    #[test]
    fn df_decreases_in_lambda() {
        let x = fixed_x53();
        let xtx = x.transpose() * &x;
        let p = DMatrix::identity(3, 3);
        let mut prev = f64::INFINITY;
        for k in -8..8 {
            let df = effective_df(&xtx, &p, 10f64.powi(k)).unwrap();
            assert!(df < prev);
            prev = df;
        }
    }

    #[test]
    fn lambda_for_one_df_matches_eigen_oracle() {
        let x = fixed_x53();
        let xtx = x.transpose() * &x;
        let p = DMatrix::identity(3, 3);
        let lambda = solve_lambda_for_df(&x, &p, 1.0).unwrap();
        // Oracle: df(lambda) = sum d_i / (d_i + lambda) over eigenvalues of X'X.
        let d = xtx.clone().symmetric_eigenvalues();
        let df: f64 = d.iter().map(|v| v / (v + lambda)).sum();
        assert!((df - 1.0).abs() < 1e-6);
        // Direct trace route agrees too.
        assert!((effective_df(&xtx, &p, lambda).unwrap() - 1.0).abs() < 1e-6);
    }

    #[test]
    fn unreachable_target_reports_interval() {
        let x = fixed_x53();
        let p = DMatrix::identity(3, 3);
        match solve_lambda_for_df(&x, &p, 4.0) {
            Err(Error::DfUnreachable { hi, .. }) => assert!((hi - 3.0).abs() < 1e-6),
            other => panic!("expected unreachable, got {other:?}"),
        }
    }

    #[test]
    fn ridge_basic_cases() {
        let x = DMatrix::from_row_slice(5, 2, &[1.0, 0.0, 0.0, 1.0, 1.0, 1.0, 2.0, -1.0, 0.5, 0.5]);
        let p = DMatrix::identity(2, 2);
        let zero = DVector::zeros(5);
        assert_eq!(ridge_fit(&x, &p, 0.5, &zero).unwrap().coef, DVector::zeros(2));

        // Orthonormal columns with lambda = 0 give beta = X'u.
        let q = DMatrix::from_row_slice(4, 2, &[0.5, 0.5, 0.5, -0.5, 0.5, 0.5, 0.5, -0.5]);
        let u = DVector::from_vec(vec![1.0, 2.0, 3.0, 4.0]);
        let fit = ridge_fit(&q, &p, 0.0, &u).unwrap();
        assert_relative_eq!(fit.coef, q.transpose() * &u, epsilon = 1e-12);
    }

    #[test]
    fn ridge_matches_dense_solve() {
        let x = DMatrix::from_row_slice(5, 2, &[1.0, 0.0, 0.0, 1.0, 1.0, 1.0, 2.0, -1.0, 0.5, 0.5]);
        let p = DMatrix::identity(2, 2);
        let u = DVector::from_vec(vec![0.3, -1.0, 2.0, 0.7, 1.1]);
        // X'X = [[6.25, -0.75], [-0.75, 3.25]], X'u = [4.25, 0.85];
        // with lambda = 0.5 the system is [[6.75, -0.75], [-0.75, 3.75]] b = X'u.
        let det = 6.75 * 3.75 - 0.75 * 0.75;
        let b0 = (3.75 * 4.25 + 0.75 * 0.85) / det;
        let b1 = (0.75 * 4.25 + 6.75 * 0.85) / det;
        let fit = ridge_fit(&x, &p, 0.5, &u).unwrap();
        assert_relative_eq!(fit.coef[0], b0, epsilon = 1e-12);
        assert_relative_eq!(fit.coef[1], b1, epsilon = 1e-12);
    }

    #[test]
    fn residual_orthogonal_to_design_when_unpenalized() {
        let x = DMatrix::from_row_slice(5, 2, &[1.0, 0.0, 0.0, 1.0, 1.0, 1.0, 2.0, -1.0, 0.5, 0.5]);
        let p = DMatrix::identity(2, 2);
        let u = DVector::from_vec(vec![0.3, -1.0, 2.0, 0.7, 1.1]);
        let fit = ridge_fit(&x, &p, 0.0, &u).unwrap();
        let r = &u - &fit.fitted;
        assert!((x.transpose() * r).amax() < 1e-8);
    }

    #[test]
    fn zero_design_contributes_nothing() {
        let x = DMatrix::zeros(4, 2);
        let sys = RidgeSystem::new(x, &DMatrix::identity(2, 2), 0.0, "z").unwrap();
        let u = DVector::from_vec(vec![1.0, 2.0, 3.0, 4.0]);
        let fit = sys.fit(&u);
        assert!(sys.is_degenerate());
        assert_eq!(fit.fitted, DVector::zeros(4));
        assert_relative_eq!(fit.rss, 30.0);
    }

    #[test]
    fn score_matches_explicit_rss() {
        let x = fixed_x53();
        let p = DMatrix::from_row_slice(3, 3, &[1.0, -1.0, 0.0, -1.0, 2.0, -1.0, 0.0, -1.0, 1.0]);
        let u = DVector::from_vec(vec![0.3, -1.0, 2.0, 0.7, 1.1]);
        for lambda in [0.0, 0.1, 3.0, 100.0] {
            let sys = RidgeSystem::new(x.clone(), &p, lambda, "s").unwrap();
            let fit = sys.fit(&u);
            let (xtu, reduction) = sys.score(&u);
            assert_relative_eq!(reduction, u.norm_squared() - fit.rss, epsilon = 1e-10);
            assert_relative_eq!(sys.coef(&xtu), fit.coef, epsilon = 1e-12);
        }
    }
}
