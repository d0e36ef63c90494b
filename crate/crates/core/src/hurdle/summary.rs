//! Per-segment summaries of predictions and fit diagnostics.

use std::collections::BTreeMap;
use std::fmt;

use serde::{Deserialize, Serialize};

use super::HurdleModel;
use crate::data::SurveyDataset;
use crate::error::{Error, Result};
use crate::family::{truncnb_log_pmf, ParameterFamily};

/// Median of an unsorted sample.
pub fn median(values: &[f64]) -> f64 {
    let mut v = values.to_vec();
    v.sort_by(f64::total_cmp);
    quantile(&v, 0.5)
}

/// Linear-interpolation quantile of sorted data: position `(n - 1) p`
/// between order statistics.
pub fn quantile(sorted: &[f64], p: f64) -> f64 {
    match sorted.len() {
        0 => f64::NAN,
        1 => sorted[0],
        n => {
            let h = (n - 1) as f64 * p.clamp(0.0, 1.0);
            let lo = h.floor() as usize;
            let hi = (lo + 1).min(n - 1);
            sorted[lo] + (h - lo as f64) * (sorted[hi] - sorted[lo])
        }
    }
}

/// Median absolute deviation from the median, without a consistency factor.
pub fn mad(values: &[f64]) -> f64 {
    let m = median(values);
    let dev: Vec<f64> = values.iter().map(|v| (v - m).abs()).collect();
    median(&dev)
}

#[derive(Debug, Clone, Copy, PartialEq, Eq, PartialOrd, Ord, Serialize, Deserialize)]
pub enum QuartileClass {
    Q1,
    Q2,
    Q3,
    Q4,
}

impl fmt::Display for QuartileClass {
    fn fmt(&self, f: &mut fmt::Formatter<'_>) -> fmt::Result {
        write!(f, "{self:?}")
    }
}

#[derive(Debug, Clone, PartialEq, Serialize, Deserialize)]
pub struct SegmentSummary {
    pub segment_id: String,
    pub n: usize,
    pub median: f64,
    pub mad: f64,
    /// MAD relative to the median in percent; `None` when the median is 0.
    pub mad_over_median: Option<f64>,
    pub quartile_class: QuartileClass,
    /// Median at or above the 98th percentile of segment medians.
    pub top_flag: bool,
}

/// Summaries of each segment's predictions. Quartile classes and the top
/// flag are relative to the distribution of segment medians.
pub fn summarize(segments: &[(String, Vec<f64>)]) -> Result<Vec<SegmentSummary>> {
    if let Some((id, v)) = segments.iter().find(|(_, v)| v.len() < 2) {
        return Err(Error::InvalidArgument(format!(
            "segment `{id}` has {} prediction(s); at least 2 are needed",
            v.len()
        )));
    }
    let medians: Vec<f64> = segments.iter().map(|(_, v)| median(v)).collect();
    let mut sorted = medians.clone();
    sorted.sort_by(f64::total_cmp);
    let (q1, q2, q3, q98) =
        (quantile(&sorted, 0.25), quantile(&sorted, 0.5), quantile(&sorted, 0.75), quantile(&sorted, 0.98));
    Ok(segments
        .iter()
        .zip(medians)
        .map(|((id, v), m)| {
            let d = mad(v);
            let quartile_class = if m <= q1 {
                QuartileClass::Q1
            } else if m <= q2 {
                QuartileClass::Q2
            } else if m <= q3 {
                QuartileClass::Q3
            } else {
                QuartileClass::Q4
            };
            SegmentSummary {
                segment_id: id.clone(),
                n: v.len(),
                median: m,
                mad: d,
                mad_over_median: (m != 0.0).then(|| 100.0 * d / m.abs()),
                quartile_class,
                top_flag: m >= q98,
            }
        })
        .collect())
}

/// Hurdle log-likelihood on the response scale: Bernoulli presence on every
/// row plus the truncated-NB log-pmf on positive rows.
pub fn hurdle_log_likelihood(counts: &[u64], pi: &[f64], mu: &[f64], sigma: &[f64]) -> Result<f64> {
    if pi.len() != counts.len() || mu.len() != counts.len() || sigma.len() != counts.len() {
        return Err(Error::InvalidArgument("parameter vectors differ in length from the counts".into()));
    }
    let mut ll = 0.0;
    for i in 0..counts.len() {
        if counts[i] == 0 {
            ll += (-pi[i]).ln_1p();
        } else {
            ll += pi[i].ln() + truncnb_log_pmf(counts[i], mu[i], sigma[i])?;
        }
    }
    Ok(ll)
}

/// Nagelkerke's rescaled likelihood-ratio R^2.
pub fn nagelkerke(ll_null: f64, ll_model: f64, n: usize) -> f64 {
    let n = n as f64;
    let num = 1.0 - (2.0 * (ll_null - ll_model) / n).exp();
    let den = 1.0 - (2.0 * ll_null / n).exp();
    num / den
}

#[derive(Debug, Clone, Copy, PartialEq, Serialize, Deserialize)]
pub struct PseudoR2 {
    pub r2: f64,
    pub ll_model: f64,
    pub ll_null: f64,
    pub n: usize,
}

/// Log-likelihood of the intercept-only hurdle on `counts`: constant presence
/// probability and offset-only truncated-NB parameters.
pub fn null_log_likelihood(counts: &[u64]) -> Result<f64> {
    let n = counts.len();
    let pos: Vec<f64> = counts.iter().filter(|&&c| c > 0).map(|&c| c as f64).collect();
    let pi = pos.len() as f64 / n as f64;
    let mu = ParameterFamily::TruncNbMu.offset(&pos)?.exp();
    let sigma = ParameterFamily::TruncNbSigma.offset(&pos)?.exp();
    hurdle_log_likelihood(counts, &vec![pi; n], &vec![mu; n], &vec![sigma; n])
}

/// Pseudo R^2 of `model` on `ds` against the intercept-only hurdle.
pub fn pseudo_r2(model: &HurdleModel, ds: &SurveyDataset) -> Result<PseudoR2> {
    let counts: Vec<u64> = ds.rows.iter().map(|r| r.count).collect();
    let pred = model.predict(ds)?;
    let ll_model = hurdle_log_likelihood(&counts, &pred.pi, &pred.mu, &pred.sigma)?;
    let ll_null = null_log_likelihood(&counts)?;
    if ll_model < ll_null {
        log::warn!("model log-likelihood {ll_model} is below the null {ll_null}; pseudo R2 is negative");
    }
    Ok(PseudoR2 { r2: nagelkerke(ll_null, ll_model, counts.len()), ll_model, ll_null, n: counts.len() })
}

#[derive(Debug, Clone, PartialEq, Serialize, Deserialize)]
pub struct SurveyTotal {
    pub survey_id: String,
    pub segments: usize,
    pub observed: f64,
    pub predicted: f64,
}

/// Observed and predicted total count of every survey, ordered by survey id.
pub fn survey_totals(model: &HurdleModel, ds: &SurveyDataset) -> Result<Vec<SurveyTotal>> {
    let pred = model.predict(ds)?;
    let mut acc: BTreeMap<&str, SurveyTotal> = BTreeMap::new();
    for (r, &u) in ds.rows.iter().zip(&pred.unconditional) {
        let t = acc.entry(&r.survey_id).or_insert_with(|| SurveyTotal {
            survey_id: r.survey_id.clone(),
            segments: 0,
            observed: 0.0,
            predicted: 0.0,
        });
        t.segments += 1;
        t.observed += r.count as f64;
        t.predicted += u;
    }
    Ok(acc.into_values().collect())
}
