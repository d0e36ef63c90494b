//! Base-learners: a design builder, a penalty and a ridge parameter pinned to
//! a fixed effective degrees of freedom on the training design.
//!
//! Nonlinear learners are reparameterized so their penalty is the identity
//! and their fitted values are orthogonal (on the training rows) to the
//! unpenalized part they deviate from: `{1, x}` for a univariate smooth and
//! `{1, x, y, xy}` for a tensor-product surface.

use nalgebra::{DMatrix, DVector};
use serde::{Deserialize, Serialize};

use super::bspline::{difference_penalty, BSplineBasis, SplineConfig};
use super::ridge::{solve_lambda_for_df_gram, RidgeSystem};
use crate::data::Frame;
use crate::error::{Error, Result};

/// Relative eigenvalue threshold separating a penalty's null space.
const NULL_SPACE_TOL: f64 = 1e-9;

/// How a base-learner maps covariate columns to design columns.
#[derive(Debug, Clone, PartialEq, Serialize, Deserialize)]
#[serde(tag = "kind", rename_all = "snake_case")]
pub enum LearnerKind {
    Intercept,
    Linear {
        covariate: String,
        center: f64,
    },
    Product {
        a: String,
        b: String,
        center: f64,
    },
    Dummy {
        covariate: String,
        level: String,
        center: f64,
    },
    Smooth {
        covariate: String,
        basis: BSplineBasis,
        transform: DMatrix<f64>,
        projection: DMatrix<f64>,
    },
    Surface {
        a: String,
        b: String,
        basis_a: BSplineBasis,
        basis_b: BSplineBasis,
        transform: DMatrix<f64>,
        projection: DMatrix<f64>,
    },
    Varying {
        inner: Box<LearnerKind>,
        by: String,
    },
}

/// Design matrix for a frame, plus the number of spline evaluations that
/// fell outside the training knot range.
pub struct Design {
    pub matrix: DMatrix<f64>,
    pub extrapolated: usize,
}

fn tensor_rows(ba: &DMatrix<f64>, bb: &DMatrix<f64>) -> DMatrix<f64> {
    let (pa, pb) = (ba.ncols(), bb.ncols());
    DMatrix::from_fn(ba.nrows(), pa * pb, |i, j| ba[(i, j / pb)] * bb[(i, j % pb)])
}

fn smooth_constraints(x: &[f64]) -> DMatrix<f64> {
    DMatrix::from_fn(x.len(), 2, |i, j| if j == 0 { 1.0 } else { x[i] })
}

fn surface_constraints(a: &[f64], b: &[f64]) -> DMatrix<f64> {
    DMatrix::from_fn(a.len(), 4, |i, j| match j {
        0 => 1.0,
        1 => a[i],
        2 => b[i],
        _ => a[i] * b[i],
    })
}

impl LearnerKind {
    pub fn design(&self, frame: &Frame) -> Result<Design> {
        let n = frame.nrows();
        Ok(match self {
            LearnerKind::Intercept => Design { matrix: DMatrix::from_element(n, 1, 1.0), extrapolated: 0 },
            LearnerKind::Linear { covariate, center } => {
                let x = frame.continuous(covariate)?;
                Design { matrix: DMatrix::from_fn(n, 1, |i, _| x[i] - center), extrapolated: 0 }
            }
            LearnerKind::Product { a, b, center } => {
                let (xa, xb) = (frame.continuous(a)?, frame.continuous(b)?);
                Design { matrix: DMatrix::from_fn(n, 1, |i, _| xa[i] * xb[i] - center), extrapolated: 0 }
            }
            LearnerKind::Dummy { covariate, level, center } => {
                let col = frame.categorical(covariate)?;
                if !col.levels.contains(level) {
                    return Err(Error::Schema(format!("`{covariate}` has no level `{level}`")));
                }
                let m = DMatrix::from_fn(n, 1, |i, _| {
                    (if col.values[i] == *level { 1.0 } else { 0.0 }) - center
                });
                Design { matrix: m, extrapolated: 0 }
            }
            LearnerKind::Smooth { covariate, basis, transform, projection } => {
                let x = frame.continuous(covariate)?;
                let (b, extrapolated) = basis.design(x);
                let z = b * transform - smooth_constraints(x) * projection;
                Design { matrix: z, extrapolated }
            }
            LearnerKind::Surface { a, b, basis_a, basis_b, transform, projection } => {
                let (xa, xb) = (frame.continuous(a)?, frame.continuous(b)?);
                let (ba, ea) = basis_a.design(xa);
                let (bb, eb) = basis_b.design(xb);
                let z = tensor_rows(&ba, &bb) * transform - surface_constraints(xa, xb) * projection;
                Design { matrix: z, extrapolated: ea + eb }
            }
            LearnerKind::Varying { inner, by } => {
                let t = frame.continuous(by)?;
                let mut d = inner.design(frame)?;
                for (i, mut row) in d.matrix.row_iter_mut().enumerate() {
                    row *= t[i];
                }
                d
            }
        })
    }
}

#[derive(Debug, Clone, PartialEq, Serialize, Deserialize)]
pub struct BaseLearner {
    pub name: String,
    pub kind: LearnerKind,
    pub penalty: DMatrix<f64>,
    pub lambda: f64,
    pub target_df: f64,
    /// Effective df achieved on the training design.
    pub df: f64,
}

impl BaseLearner {
    pub fn ncols(&self) -> usize {
        self.penalty.ncols()
    }

    pub fn design(&self, frame: &Frame) -> Result<Design> {
        self.kind.design(frame)
    }

    /// Penalized system on the given design rows, with this learner's frozen
    /// ridge parameter.
    pub fn system(&self, design: DMatrix<f64>) -> Result<RidgeSystem> {
        RidgeSystem::new(design, &self.penalty, self.lambda, &self.name)
    }

    /// Contribution `X beta` of a coefficient vector on a frame.
    pub fn contribution(&self, frame: &Frame, coef: &DVector<f64>) -> Result<DVector<f64>> {
        Ok(self.design(frame)?.matrix * coef)
    }

    pub fn is_degenerate(&self) -> bool {
        self.df == 0.0
    }
}

/// Fixes the ridge parameter of `kind` on the training frame.
fn pin(name: String, kind: LearnerKind, penalty: DMatrix<f64>, frame: &Frame, target_df: f64) -> Result<BaseLearner> {
    let design = kind.design(frame)?.matrix;
    let xtx = design.transpose() * &design;
    if xtx.iter().all(|v| *v == 0.0) {
        log::warn!("base-learner `{name}` has an all-zero training design and is never informative");
        return Ok(BaseLearner { name, kind, penalty, lambda: 0.0, target_df, df: 0.0 });
    }
    let lambda = solve_lambda_for_df_gram(&xtx, &penalty, target_df)?;
    let df = super::ridge::effective_df(&xtx, &penalty, lambda)?;
    Ok(BaseLearner { name, kind, penalty, lambda, target_df, df })
}

/// Single-column learner with no penalty (df = 1 at lambda = 0).
fn unpenalized(name: String, kind: LearnerKind, frame: &Frame) -> Result<BaseLearner> {
    let design = kind.design(frame)?.matrix;
    let ss = design.norm_squared();
    let df = if ss > 0.0 { 1.0 } else { 0.0 };
    if df == 0.0 {
        log::warn!("base-learner `{name}` has an all-zero training design and is never informative");
    }
    Ok(BaseLearner { name, kind, penalty: DMatrix::zeros(1, 1), lambda: 0.0, target_df: 1.0, df })
}

pub fn intercept(frame: &Frame) -> Result<BaseLearner> {
    unpenalized("int".into(), LearnerKind::Intercept, frame)
}

fn mean(v: &[f64]) -> f64 {
    v.iter().sum::<f64>() / v.len() as f64
}

/// Centred linear learner.
pub fn linear(frame: &Frame, covariate: &str) -> Result<BaseLearner> {
    let x = frame.continuous(covariate)?;
    let kind = LearnerKind::Linear { covariate: covariate.into(), center: mean(x) };
    unpenalized(covariate.into(), kind, frame)
}

/// Centred linear interaction `a * b`.
pub fn product(frame: &Frame, a: &str, b: &str) -> Result<BaseLearner> {
    let (xa, xb) = (frame.continuous(a)?, frame.continuous(b)?);
    let prod: Vec<f64> = xa.iter().zip(xb).map(|(p, q)| p * q).collect();
    let kind = LearnerKind::Product { a: a.into(), b: b.into(), center: mean(&prod) };
    unpenalized(format!("{a}:{b}"), kind, frame)
}

/// Columns `v_i / sqrt(w_i)` over the penalized eigenpairs `(w_i, v_i)`, in
/// decreasing eigenvalue order. `B T` has identity penalty.
fn penalized_transform(penalty: &DMatrix<f64>) -> DMatrix<f64> {
    let sym = (penalty + penalty.transpose()) * 0.5;
    let eig = sym.symmetric_eigen();
    let max = eig.eigenvalues.iter().cloned().fold(0.0, f64::max);
    let mut keep: Vec<usize> =
        (0..eig.eigenvalues.len()).filter(|&i| eig.eigenvalues[i] > NULL_SPACE_TOL * max).collect();
    keep.sort_by(|&i, &j| eig.eigenvalues[j].total_cmp(&eig.eigenvalues[i]).then(i.cmp(&j)));
    let p = penalty.nrows();
    let mut t = DMatrix::zeros(p, keep.len());
    for (c, &i) in keep.iter().enumerate() {
        let scale = eig.eigenvalues[i].sqrt();
        t.set_column(c, &(eig.eigenvectors.column(i) / scale));
    }
    t
}

/// Projects `z` off the column space of `constraints`; returns the
/// coefficients `A` with `z_orth = z - C A`.
fn orthogonalize(z: &DMatrix<f64>, constraints: &DMatrix<f64>) -> Result<DMatrix<f64>> {
    let qr = constraints.clone().qr();
    let r = qr.r();
    if r.diagonal().iter().any(|d| d.abs() < 1e-10) {
        return Err(Error::DegenerateRange("constraint columns are collinear".into()));
    }
    let qtz = qr.q().transpose() * z;
    r.solve_upper_triangular(&qtz)
        .ok_or_else(|| Error::Singular("orthogonalization".into()))
}

fn rename_degenerate(e: Error, covariate: &str) -> Error {
    match e {
        Error::DegenerateRange(_) => Error::DegenerateRange(covariate.into()),
        other => other,
    }
}

/// Penalized deviation from the linear effect of `covariate`.
pub fn smooth_deviation(frame: &Frame, covariate: &str, config: SplineConfig, target_df: f64) -> Result<BaseLearner> {
    let x = frame.continuous(covariate)?;
    let basis = BSplineBasis::from_data(x, config).map_err(|e| rename_degenerate(e, covariate))?;
    let (b, _) = basis.design(x);
    let transform = penalized_transform(&difference_penalty(basis.n_basis(), config.diff_order)?);
    let z = b * &transform;
    let projection = orthogonalize(&z, &smooth_constraints(x))?;
    let k = transform.ncols();
    let kind = LearnerKind::Smooth { covariate: covariate.into(), basis, transform, projection };
    pin(format!("f({covariate})"), kind, DMatrix::identity(k, k), frame, target_df)
}

/// Linear learner plus the orthogonal penalized deviation.
pub fn decompose_continuous(
    frame: &Frame,
    covariate: &str,
    config: SplineConfig,
    target_df: f64,
) -> Result<(BaseLearner, BaseLearner)> {
    Ok((linear(frame, covariate)?, smooth_deviation(frame, covariate, config, target_df)?))
}

/// Tensor-product P-spline of `a` and `b` with Kronecker-sum penalty,
/// orthogonal to `{1, a, b, ab}`.
pub fn tensor_deviation(frame: &Frame, a: &str, b: &str, config: SplineConfig, target_df: f64) -> Result<BaseLearner> {
    let (xa, xb) = (frame.continuous(a)?, frame.continuous(b)?);
    let basis_a = BSplineBasis::from_data(xa, config).map_err(|e| rename_degenerate(e, a))?;
    let basis_b = BSplineBasis::from_data(xb, config).map_err(|e| rename_degenerate(e, b))?;
    let (pa, pb) = (basis_a.n_basis(), basis_b.n_basis());
    let penalty = tensor_penalty(pa, pb, config.diff_order)?;
    let transform = penalized_transform(&penalty);
    let z = tensor_rows(&basis_a.design(xa).0, &basis_b.design(xb).0) * &transform;
    let projection = orthogonalize(&z, &surface_constraints(xa, xb))?;
    let k = transform.ncols();
    let kind = LearnerKind::Surface { a: a.into(), b: b.into(), basis_a, basis_b, transform, projection };
    pin(format!("f({a},{b})"), kind, DMatrix::identity(k, k), frame, target_df)
}

/// `P_a (x) I + I (x) P_b` for marginal difference penalties.
pub fn tensor_penalty(pa: usize, pb: usize, order: usize) -> Result<DMatrix<f64>> {
    let da = difference_penalty(pa, order)?;
    let db = difference_penalty(pb, order)?;
    Ok(da.kronecker(&DMatrix::identity(pb, pb)) + DMatrix::identity(pa, pa).kronecker(&db))
}

/// One centred dummy learner per non-reference level.
pub fn categorical_baselearners(frame: &Frame, covariate: &str) -> Result<Vec<BaseLearner>> {
    let col = frame.categorical(covariate)?;
    if col.levels.len() < 2 {
        return Err(Error::InvalidArgument(format!(
            "`{covariate}` needs at least two levels for dummy coding"
        )));
    }
    let n = col.values.len() as f64;
    col.levels[1..]
        .iter()
        .map(|level| {
            let share = col.values.iter().filter(|v| *v == level).count() as f64 / n;
            let kind = LearnerKind::Dummy { covariate: covariate.into(), level: level.clone(), center: share };
            unpenalized(format!("{covariate}[{level}]"), kind, frame)
        })
        .collect()
}

/// Linear easting, northing and their interaction plus the orthogonal
/// tensor-product surface.
pub fn spatial_surface(frame: &Frame, x: &str, y: &str, config: SplineConfig, target_df: f64) -> Result<Vec<BaseLearner>> {
    Ok(vec![
        linear(frame, x)?,
        linear(frame, y)?,
        product(frame, x, y)?,
        tensor_deviation(frame, x, y, config, target_df)?,
    ])
}

/// `base` with its design multiplied row-wise by `by`; penalty inherited and
/// the ridge parameter re-solved.
pub fn varying_coefficient(base: &BaseLearner, frame: &Frame, by: &str) -> Result<BaseLearner> {
    let t = frame.continuous(by)?;
    if t.len() != frame.nrows() {
        return Err(Error::InvalidArgument(format!("`{by}` length mismatch")));
    }
    let kind = LearnerKind::Varying { inner: Box::new(base.kind.clone()), by: by.into() };
    let name = format!("{}:{by}", base.name);
    if base.lambda == 0.0 && base.penalty.iter().all(|v| *v == 0.0) {
        let design = kind.design(frame)?.matrix;
        let df = if design.norm_squared() > 0.0 { 1.0 } else { 0.0 };
        if df == 0.0 {
            log::warn!("base-learner `{name}` has an all-zero training design and is never informative");
        }
        return Ok(BaseLearner { name, kind, penalty: base.penalty.clone(), lambda: 0.0, target_df: base.target_df, df });
    }
    pin(name, kind, base.penalty.clone(), frame, base.target_df)
}
