//! B-spline bases on equidistant knots and difference penalties.

use nalgebra::DMatrix;
use serde::{Deserialize, Serialize};

use crate::error::{Error, Result};

#[derive(Debug, Clone, Copy, PartialEq, Serialize, Deserialize)]
pub struct SplineConfig {
    pub degree: usize,
    pub n_interior_knots: usize,
    pub diff_order: usize,
}

impl Default for SplineConfig {
    fn default() -> Self {
        Self { degree: 3, n_interior_knots: 20, diff_order: 2 }
    }
}

impl SplineConfig {
    /// Marginal configuration for tensor-product surfaces.
    pub fn surface_default() -> Self {
        Self { degree: 3, n_interior_knots: 10, diff_order: 2 }
    }

    pub fn validate(&self) -> Result<()> {
        if self.degree < 1 {
            return Err(Error::InvalidArgument("spline degree must be >= 1".into()));
        }
        if self.n_interior_knots < self.diff_order + 1 {
            return Err(Error::InvalidArgument(format!(
                "need at least {} interior knots for difference order {}",
                self.diff_order + 1,
                self.diff_order
            )));
        }
        Ok(())
    }

    pub fn n_basis(&self) -> usize {
        self.n_interior_knots + self.degree + 1
    }
}

/// A B-spline basis with equidistant knots over `[lo, hi]`.
///
/// Outside `[lo, hi]` each basis function is extended linearly from the
/// boundary, so rows still sum to one.
#[derive(Debug, Clone, PartialEq, Serialize, Deserialize)]
pub struct BSplineBasis {
    pub config: SplineConfig,
    pub lo: f64,
    pub hi: f64,
    knots: Vec<f64>,
}

impl BSplineBasis {
    pub fn new(lo: f64, hi: f64, config: SplineConfig) -> Result<Self> {
        config.validate()?;
        if !(lo.is_finite() && hi.is_finite()) {
            return Err(Error::InvalidArgument("non-finite knot range".into()));
        }
        if hi <= lo {
            return Err(Error::DegenerateRange(format!("[{lo}, {hi}]")));
        }
        let h = (hi - lo) / (config.n_interior_knots + 1) as f64;
        let d = config.degree as i64;
        let n_knots = config.n_interior_knots as i64 + 2 + 2 * d;
        let knots = (0..n_knots).map(|i| lo + (i - d) as f64 * h).collect();
        Ok(Self { config, lo, hi, knots })
    }

    /// Basis over the observed range of `x`.
    pub fn from_data(x: &[f64], config: SplineConfig) -> Result<Self> {
        let (lo, hi) = x.iter().fold((f64::INFINITY, f64::NEG_INFINITY), |(a, b), &v| {
            (a.min(v), b.max(v))
        });
        if x.iter().any(|v| !v.is_finite()) {
            return Err(Error::InvalidArgument("non-finite covariate value".into()));
        }
        if x.is_empty() || hi <= lo {
            return Err(Error::DegenerateRange("all values equal".into()));
        }
        Self::new(lo, hi, config)
    }

    pub fn n_basis(&self) -> usize {
        self.config.n_basis()
    }

    pub fn knots(&self) -> &[f64] {
        &self.knots
    }

    /// Index `mu` with `knots[mu] <= x < knots[mu + 1]`, clamped to the
    /// interior spans.
    fn span(&self, x: f64) -> usize {
        let d = self.config.degree;
        let h = (self.hi - self.lo) / (self.config.n_interior_knots + 1) as f64;
        let last = d + self.config.n_interior_knots;
        let raw = ((x - self.lo) / h).floor();
        let idx = if raw < 0.0 { 0 } else { raw as usize };
        (d + idx).min(last)
    }

    /// Nonzero basis values of degree `k` at `x` in span `mu`; entry `i`
    /// belongs to basis function `mu - k + i`.
    fn local_values(&self, x: f64, mu: usize, k: usize) -> Vec<f64> {
        let t = &self.knots;
        let mut n = vec![0.0; k + 1];
        n[0] = 1.0;
        let mut left = vec![0.0; k + 1];
        let mut right = vec![0.0; k + 1];
        for j in 1..=k {
            left[j] = x - t[mu + 1 - j];
            right[j] = t[mu + j] - x;
            let mut saved = 0.0;
            for r in 0..j {
                let temp = n[r] / (right[r + 1] + left[j - r]);
                n[r] = saved + right[r + 1] * temp;
                saved = left[j - r] * temp;
            }
            n[j] = saved;
        }
        n
    }

    /// Writes the basis row for `x` into `out` (length `n_basis`). Returns
    /// `true` when `x` lies outside the knot range and was extrapolated.
    pub fn eval_into(&self, x: f64, out: &mut [f64]) -> bool {
        debug_assert_eq!(out.len(), self.n_basis());
        out.iter_mut().for_each(|v| *v = 0.0);
        let d = self.config.degree;
        let (anchor, outside) = if x < self.lo {
            (self.lo, true)
        } else if x > self.hi {
            (self.hi, true)
        } else {
            (x, false)
        };
        let mu = self.span(anchor);
        let vals = self.local_values(anchor, mu, d);
        for (i, v) in vals.iter().enumerate() {
            out[mu - d + i] = *v;
        }
        if outside {
            let dx = x - anchor;
            // d/dx B_{j,d} = d * (B_{j,d-1} / (t_{j+d} - t_j) - B_{j+1,d-1} / (t_{j+d+1} - t_{j+1}))
            let lower = self.local_values(anchor, mu, d - 1);
            let t = &self.knots;
            for (i, v) in lower.iter().enumerate() {
                let j = mu - (d - 1) + i; // basis index of the degree d-1 function
                // B_{j,d-1} enters B'_{j,d} with + and B'_{j-1,d} with -,
                // both over the same knot gap.
                let slope = d as f64 * v / (t[j + d] - t[j]);
                out[j] += dx * slope;
                out[j - 1] -= dx * slope;
            }
        }
        outside
    }

    /// Design matrix with one row per value. Also returns how many values
    /// were extrapolated.
    pub fn design(&self, x: &[f64]) -> (DMatrix<f64>, usize) {
        let p = self.n_basis();
        let mut m = DMatrix::zeros(x.len(), p);
        let mut row = vec![0.0; p];
        let mut extrapolated = 0;
        for (i, &xi) in x.iter().enumerate() {
            if self.eval_into(xi, &mut row) {
                extrapolated += 1;
            }
            for (j, v) in row.iter().enumerate() {
                m[(i, j)] = *v;
            }
        }
        (m, extrapolated)
    }
}

/// B-spline design over the observed range of `x`.
pub fn bspline_design(x: &[f64], config: SplineConfig) -> Result<DMatrix<f64>> {
    let basis = BSplineBasis::from_data(x, config)?;
    Ok(basis.design(x).0)
}

/// `D^T D` for the `order`-th difference operator on `p` coefficients.
pub fn difference_penalty(p: usize, order: usize) -> Result<DMatrix<f64>> {
    if p <= order {
        return Err(Error::InvalidArgument(format!(
            "difference order {order} needs more than {order} coefficients, got {p}"
        )));
    }
    let d = difference_matrix(p, order);
    Ok(d.transpose() * d)
}

pub fn difference_matrix(p: usize, order: usize) -> DMatrix<f64> {
    let mut d = DMatrix::<f64>::identity(p, p);
    for _ in 0..order {
        let rows = d.nrows() - 1;
        let next = DMatrix::from_fn(rows, p, |i, j| d[(i + 1, j)] - d[(i, j)]);
        d = next;
    }
    d
}
