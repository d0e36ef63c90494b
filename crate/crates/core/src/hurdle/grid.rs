//! Prediction grids over segments and season dates, and their CSV/GeoJSON
//! export.

use std::collections::{BTreeMap, HashMap};
use std::io::{Read, Write};

use chrono::NaiveDate;
use serde::{Deserialize, Serialize};
use serde_json::{json, Value};

use super::{HurdleModel, SegmentSummary};
use crate::data::simulate::season_dates;
use crate::data::{
    apply_standardization, winter_label, winter_time, CategoricalColumn, CovariateKind, CovariateSchema, Frame, WINTER,
};
use crate::error::{Error, Result};

/// Covariates of one prediction segment.
#[derive(Debug, Clone, PartialEq, Serialize, Deserialize)]
pub struct GridSegment {
    pub segment_id: String,
    pub xkm: f64,
    pub ykm: f64,
    /// Observation window; the training mean when absent.
    pub obs_window: Option<f64>,
    pub continuous: BTreeMap<String, f64>,
    pub categorical: BTreeMap<String, String>,
}

/// Where grid covariates come from.
#[derive(Debug, Clone, PartialEq)]
pub enum GridSource {
    /// Covariates constant across dates.
    Static(Vec<GridSegment>),
    /// Covariates supplied for each segment and date.
    Tabulated(Vec<(NaiveDate, GridSegment)>),
}

#[derive(Debug, Clone, PartialEq, Serialize, Deserialize)]
pub struct GridPrediction {
    pub segment_id: String,
    pub winter: String,
    pub date: NaiveDate,
    pub xkm: f64,
    pub ykm: f64,
    pub pi: f64,
    pub mu: f64,
    pub sigma: f64,
    pub conditional: f64,
    pub unconditional: f64,
}

/// Mapped quantities, one GeoJSON file each.
#[derive(Debug, Clone, Copy, PartialEq, Eq, Serialize, Deserialize)]
#[serde(rename_all = "snake_case")]
pub enum Quantity {
    Occupancy,
    Conditional,
    Overdispersion,
    Unconditional,
}

impl Quantity {
    pub const ALL: [Quantity; 4] =
        [Quantity::Occupancy, Quantity::Conditional, Quantity::Overdispersion, Quantity::Unconditional];

    pub fn name(self) -> &'static str {
        match self {
            Quantity::Occupancy => "occupancy",
            Quantity::Conditional => "conditional_abundance",
            Quantity::Overdispersion => "overdispersion",
            Quantity::Unconditional => "unconditional_abundance",
        }
    }

    pub fn value(self, p: &GridPrediction) -> f64 {
        match self {
            Quantity::Occupancy => p.pi,
            Quantity::Conditional => p.conditional,
            Quantity::Overdispersion => p.sigma,
            Quantity::Unconditional => p.unconditional,
        }
    }

    /// Values grouped by segment, segments in order of first appearance.
    pub fn per_segment(self, preds: &[GridPrediction]) -> Vec<(String, Vec<f64>)> {
        let mut index: HashMap<&str, usize> = HashMap::new();
        let mut out: Vec<(String, Vec<f64>)> = Vec::new();
        for p in preds {
            let k = *index.entry(&p.segment_id).or_insert_with(|| {
                out.push((p.segment_id.clone(), Vec::new()));
                out.len() - 1
            });
            out[k].1.push(self.value(p));
        }
        out
    }
}

fn parse_num(field: &str, column: &str, row: usize) -> Result<f64> {
    field.trim().parse::<f64>().ok().filter(|v| v.is_finite()).ok_or_else(|| Error::Row {
        row,
        message: format!("`{column}` value `{field}` is not a finite number"),
    })
}

/// Reads a grid CSV. Required columns are `segment_id`, `xkm`, `ykm` and every
/// schema covariate; `obs_window` is optional. With a `date` column each row
/// is a (segment, date) record, otherwise covariates are static.
pub fn read_grid<R: Read>(reader: R, schema: &CovariateSchema) -> Result<GridSource> {
    let mut rdr = csv::ReaderBuilder::new().comment(Some(b'#')).trim(csv::Trim::All).from_reader(reader);
    let headers = rdr.headers()?.clone();
    let find = |name: &str| headers.iter().position(|h| h == name);
    let need = |name: &str| find(name).ok_or_else(|| Error::Schema(format!("grid is missing column `{name}`")));
    let (seg, x, y) = (need("segment_id")?, need("xkm")?, need("ykm")?);
    let (date_col, window_col) = (find("date"), find("obs_window"));
    let covs: Vec<(String, CovariateKind, usize)> =
        schema.covariates.iter().map(|(n, k)| Ok((n.clone(), k.clone(), need(n)?))).collect::<Result<_>>()?;
    let mut static_rows = Vec::new();
    let mut dated = Vec::new();
    for (i, rec) in rdr.records().enumerate() {
        let row = i + 1;
        let rec = rec?;
        let get = |k: usize| rec.get(k).unwrap_or("");
        let mut s = GridSegment {
            segment_id: get(seg).to_string(),
            xkm: parse_num(get(x), "xkm", row)?,
            ykm: parse_num(get(y), "ykm", row)?,
            obs_window: window_col.map(|k| parse_num(get(k), "obs_window", row)).transpose()?,
            continuous: BTreeMap::new(),
            categorical: BTreeMap::new(),
        };
        for (name, kind, k) in &covs {
            match kind {
                CovariateKind::Continuous => {
                    s.continuous.insert(name.clone(), parse_num(get(*k), name, row)?);
                }
                CovariateKind::Categorical { levels } => {
                    let v = get(*k);
                    if !levels.iter().any(|l| l == v) {
                        return Err(Error::Row { row, message: format!("unknown level `{v}` for `{name}`") });
                    }
                    s.categorical.insert(name.clone(), v.to_string());
                }
            }
        }
        match date_col {
            Some(k) => {
                let d = NaiveDate::parse_from_str(get(k), "%Y-%m-%d")
                    .map_err(|_| Error::Row { row, message: format!("date `{}` is not ISO-8601", get(k)) })?;
                dated.push((d, s));
            }
            None => static_rows.push(s),
        }
    }
    Ok(match date_col {
        Some(_) => GridSource::Tabulated(dated),
        None => GridSource::Static(static_rows),
    })
}

/// Predictions for every segment at `n_dates` evenly spaced dates from 15
/// November to 1 April of each winter (given by its start year).
pub fn prediction_grid(
    model: &HurdleModel,
    source: &GridSource,
    winters: &[i32],
    n_dates: usize,
) -> Result<Vec<GridPrediction>> {
    let dates: Vec<NaiveDate> = winters.iter().flat_map(|&w| season_dates(w, n_dates)).collect();
    let mut rows: Vec<(NaiveDate, &GridSegment)> = Vec::new();
    match source {
        GridSource::Static(segs) => {
            for s in segs {
                rows.extend(dates.iter().map(|&d| (d, s)));
            }
        }
        GridSource::Tabulated(recs) => {
            let mut order: Vec<&str> = Vec::new();
            let mut index: HashMap<(&str, NaiveDate), &GridSegment> = HashMap::new();
            for (d, s) in recs {
                if !order.contains(&s.segment_id.as_str()) {
                    order.push(&s.segment_id);
                }
                index.insert((&s.segment_id, *d), s);
            }
            for id in order {
                for &d in &dates {
                    let s = index.get(&(id, d)).ok_or_else(|| {
                        Error::Schema(format!("missing covariates for segment `{id}` at grid date {d}"))
                    })?;
                    rows.push((d, s));
                }
            }
        }
    }
    if rows.is_empty() {
        return Ok(Vec::new());
    }
    let frame = grid_frame(model, &rows)?;
    let pred = model.predict_frame(&frame)?;
    let winter = &frame.categorical(WINTER)?.values;
    Ok(rows
        .iter()
        .enumerate()
        .map(|(i, (d, s))| GridPrediction {
            segment_id: s.segment_id.clone(),
            winter: winter[i].clone(),
            date: *d,
            xkm: s.xkm,
            ykm: s.ykm,
            pi: pred.pi[i],
            mu: pred.mu[i],
            sigma: pred.sigma[i],
            conditional: pred.conditional[i],
            unconditional: pred.unconditional[i],
        })
        .collect())
}

fn grid_frame(model: &HurdleModel, rows: &[(NaiveDate, &GridSegment)]) -> Result<Frame> {
    let n = rows.len();
    let mut time = Vec::with_capacity(n);
    let mut winters = Vec::with_capacity(n);
    for (d, _) in rows {
        let start = model.schema.winter_start.winter_start_for(*d)?;
        time.push(winter_time(*d, start)?);
        winters.push(winter_label(start));
    }
    let default_window = model.standardization.get("obs_window").map_or(1.0, |s| s.mean);
    let mut frame = Frame::new(n);
    frame.insert_continuous("time", time)?;
    frame.insert_continuous("xkm", rows.iter().map(|(_, s)| s.xkm).collect())?;
    frame.insert_continuous("ykm", rows.iter().map(|(_, s)| s.ykm).collect())?;
    frame.insert_continuous("obs_window", rows.iter().map(|(_, s)| s.obs_window.unwrap_or(default_window)).collect())?;
    let mut levels = model.winter_levels.clone();
    for w in &winters {
        if !levels.contains(w) {
            log::warn!("winter {w} was not in the training data; its effect is set to the reference level");
            levels.push(w.clone());
        }
    }
    frame.insert_categorical(WINTER, CategoricalColumn { levels, values: winters })?;
    for (name, kind) in &model.schema.covariates {
        match kind {
            CovariateKind::Continuous => {
                let col = rows
                    .iter()
                    .map(|(d, s)| {
                        s.continuous.get(name).copied().ok_or_else(|| {
                            Error::Schema(format!("segment `{}` lacks `{name}` at {d}", s.segment_id))
                        })
                    })
                    .collect::<Result<_>>()?;
                frame.insert_continuous(name, col)?;
            }
            CovariateKind::Categorical { levels } => {
                let col = rows
                    .iter()
                    .map(|(d, s)| {
                        s.categorical.get(name).cloned().ok_or_else(|| {
                            Error::Schema(format!("segment `{}` lacks `{name}` at {d}", s.segment_id))
                        })
                    })
                    .collect::<Result<_>>()?;
                frame.insert_categorical(name, CategoricalColumn { levels: levels.clone(), values: col })?;
            }
        }
    }
    apply_standardization(&mut frame, &model.standardization)?;
    Ok(frame)
}

pub fn write_predictions<W: Write>(preds: &[GridPrediction], writer: W) -> Result<()> {
    let mut w = csv::Writer::from_writer(writer);
    for p in preds {
        w.serialize(p)?;
    }
    w.flush()?;
    Ok(())
}

pub fn write_summaries<W: Write>(summaries: &[SegmentSummary], writer: W) -> Result<()> {
    let mut w = csv::Writer::from_writer(writer);
    w.write_record(["segment_id", "n", "median", "mad", "mad_over_median_pct", "quartile_class", "top_flag"])?;
    for s in summaries {
        w.write_record([
            s.segment_id.clone(),
            s.n.to_string(),
            s.median.to_string(),
            s.mad.to_string(),
            s.mad_over_median.map_or("NA".to_string(), |v| v.to_string()),
            s.quartile_class.to_string(),
            s.top_flag.to_string(),
        ])?;
    }
    w.flush()?;
    Ok(())
}

/// FeatureCollection of square segment polygons of side `edge_km` centred on
/// each segment's coordinates, carrying its summary.
pub fn geojson(
    quantity: Quantity,
    summaries: &[SegmentSummary],
    coords: &HashMap<String, (f64, f64)>,
    edge_km: f64,
) -> Result<Value> {
    let h = edge_km / 2.0;
    let features = summaries
        .iter()
        .map(|s| {
            let &(x, y) = coords
                .get(&s.segment_id)
                .ok_or_else(|| Error::InvalidArgument(format!("no coordinates for segment `{}`", s.segment_id)))?;
            Ok(json!({
                "type": "Feature",
                "geometry": {
                    "type": "Polygon",
                    "coordinates": [[[x - h, y - h], [x + h, y - h], [x + h, y + h], [x - h, y + h], [x - h, y - h]]],
                },
                "properties": {
                    "segment_id": s.segment_id,
                    "quantity": quantity.name(),
                    "median": s.median,
                    "mad": s.mad,
                    "mad_over_median_pct": s.mad_over_median,
                    "quartile_class": s.quartile_class.to_string(),
                    "top_flag": s.top_flag,
                },
            }))
        })
        .collect::<Result<Vec<_>>>()?;
    Ok(json!({ "type": "FeatureCollection", "features": features }))
}

#[cfg(test)]
mod tests {
    use super::*;

    #[test]
    fn reads_both_layouts() {
        let schema = CovariateSchema::from_toml_str("[covariates]\ndepth = \"continuous\"\n").unwrap();
        let s = read_grid("segment_id,xkm,ykm,depth\na,1,2,3\nb,4,5,6\n".as_bytes(), &schema).unwrap();
        match s {
            GridSource::Static(v) => {
                assert_eq!(v.len(), 2);
                assert_eq!(v[1].continuous["depth"], 6.0);
                assert_eq!(v[0].obs_window, None);
            }
            _ => panic!("expected static grid"),
        }
        let t = read_grid("# c\nsegment_id,date,xkm,ykm,depth\na,2020-11-15,1,2,3\n".as_bytes(), &schema).unwrap();
        assert!(matches!(t, GridSource::Tabulated(ref v) if v.len() == 1));
        assert!(read_grid("segment_id,xkm,ykm\na,1,2\n".as_bytes(), &schema).is_err());
    }
}
