use std::collections::HashMap;
use std::fs::File;
use std::path::Path;

use anyhow::{bail, Context, Result};
use hurdle_boost::boost::BoostFit;
use hurdle_boost::data::simulate::simulate_hurdle_dataset;
use hurdle_boost::data::{load_dataset, standardize, write_dataset, CovariateKind, SurveyDataset};
use hurdle_boost::hurdle::{
    fit_hurdle, geojson, prediction_grid, pseudo_r2, read_grid, stabsel_hurdle, summarize as summarize_segments,
    survey_totals, tune_hurdle, unconditional_mean, write_predictions, write_summaries, GridPrediction, HurdleModel,
    HurdleTuning, MStops, Quantity,
};
use hurdle_boost::stabsel::StabSelResult;
use serde_json::json;

use crate::config::RunConfig;
use crate::output::{csv_writer, Provenance};

fn training_data(cfg: &RunConfig) -> Result<SurveyDataset> {
    let schema = cfg.load_schema()?;
    let path = cfg.data()?;
    let raw = load_dataset(path, &schema).with_context(|| format!("loading {}", path.display()))?;
    Ok(standardize(&raw)?)
}

pub fn simulate(cfg: &RunConfig) -> Result<()> {
    let sim_cfg = cfg.simulate.as_ref().context("the config has no [simulate] section")?;
    let prov = Provenance::of(cfg)?;
    let sim = simulate_hurdle_dataset(sim_cfg, cfg.seed()?)?;
    let ds = &sim.dataset;
    prov.write_csv(&cfg.out.join("simulated.csv"), |buf| Ok(write_dataset(ds, buf)?))?;
    prov.write_text(&cfg.out.join("schema.toml"), &ds.schema.to_toml_string())?;
    prov.write_csv(&cfg.out.join("truth.csv"), |buf| {
        let mut w = csv_writer(buf);
        w.write_record(["segment_id", "survey_id", "pi", "mu", "sigma", "unconditional"])?;
        for (r, t) in ds.rows.iter().zip(&sim.truth) {
            w.write_record([
                r.segment_id.clone(),
                r.survey_id.clone(),
                t.pi.to_string(),
                t.mu.to_string(),
                t.sigma.to_string(),
                unconditional_mean(t.pi, t.mu, t.sigma).to_string(),
            ])?;
        }
        w.flush()?;
        Ok(())
    })?;
    // static prediction grid from each segment's first survey
    prov.write_csv(&cfg.out.join("grid.csv"), |buf| {
        let mut w = csv_writer(buf);
        let mut header = vec!["segment_id".to_string(), "xkm".into(), "ykm".into()];
        header.extend(ds.schema.covariates.keys().cloned());
        w.write_record(&header)?;
        let mut done = std::collections::HashSet::new();
        for (i, r) in ds.rows.iter().enumerate() {
            if !done.insert(r.segment_id.as_str()) {
                continue;
            }
            let mut rec = vec![r.segment_id.clone(), r.xkm.to_string(), r.ykm.to_string()];
            for (name, kind) in &ds.schema.covariates {
                rec.push(match kind {
                    CovariateKind::Continuous => ds.frame.continuous(name)?[i].to_string(),
                    CovariateKind::Categorical { .. } => ds.frame.categorical(name)?.values[i].clone(),
                });
            }
            w.write_record(&rec)?;
        }
        w.flush()?;
        Ok(())
    })?;
    println!("simulated {} rows ({} positive) into {}", ds.len(), ds.positive_rows().len(), cfg.out.display());
    Ok(())
}

fn write_tuning(cfg: &RunConfig, prov: &Provenance, t: &HurdleTuning) -> Result<()> {
    prov.write_csv(&cfg.out.join("tune_occupancy.csv"), |buf| {
        let mut w = csv_writer(buf);
        w.write_record(["m_stop", "mean_oob_risk"])?;
        for (m, r) in t.occupancy.grid.iter().zip(&t.occupancy.mean_risk) {
            w.write_record([m.to_string(), r.to_string()])?;
        }
        w.flush()?;
        Ok(())
    })?;
    prov.write_csv(&cfg.out.join("tune_count.csv"), |buf| {
        let mut w = csv_writer(buf);
        w.write_record(["m_mu", "m_sigma", "mean_oob_risk"])?;
        for (i, m_mu) in t.count.grid_mu.iter().enumerate() {
            for (j, m_sigma) in t.count.grid_sigma.iter().enumerate() {
                w.write_record([m_mu.to_string(), m_sigma.to_string(), t.count.mean_risk[i][j].to_string()])?;
            }
        }
        w.flush()?;
        Ok(())
    })?;
    prov.write_json(
        &cfg.out.join("tuning.json"),
        json!({
            "m_stop": t.m_stop,
            "occupancy_risk": t.occupancy.mean_risk[t.occupancy.best_index],
            "occupancy_offset_risk": t.occupancy.mean_risk[0],
            "count_risk": t.count.mean_risk[t.count.best.0][t.count.best.1],
            "count_offset_risk": t.count.mean_risk[0][0],
            "folds": cfg.tune.folds,
        }),
    )
}

pub fn tune(cfg: &RunConfig) -> Result<MStops> {
    let prov = Provenance::of(cfg)?;
    let ds = training_data(cfg)?;
    let learners = cfg.model.build(&ds)?;
    let t = tune_hurdle(&ds, &cfg.model, &learners, &cfg.tune, cfg.seed()?)?;
    write_tuning(cfg, &prov, &t)?;
    println!(
        "m_stop: occupancy {}, mu {}, sigma {}",
        t.m_stop.occupancy, t.m_stop.mu, t.m_stop.sigma
    );
    Ok(t.m_stop)
}

/// Stopping iterations from `tuning.json` written by `tune` under the same
/// configuration.
fn stored_tuning(cfg: &RunConfig, prov: &Provenance) -> Option<MStops> {
    let text = std::fs::read_to_string(cfg.out.join("tuning.json")).ok()?;
    let v: serde_json::Value = serde_json::from_str(&text).ok()?;
    if v.get("config_hash")?.as_str()? != prov.hash {
        return None;
    }
    serde_json::from_value(v.get("m_stop")?.clone()).ok()
}

fn path_rows(name: &str, fit: &BoostFit, risk: &mut Vec<[String; 3]>, path: &mut Vec<[String; 3]>) {
    for (m, r) in fit.train_risk.iter().enumerate() {
        risk.push([name.to_string(), m.to_string(), r.to_string()]);
    }
    for (m, s) in fit.path.iter().enumerate() {
        path.push([name.to_string(), (m + 1).to_string(), fit.learners[s.learner].name.clone()]);
    }
}

pub fn fit(cfg: &RunConfig) -> Result<()> {
    let prov = Provenance::of(cfg)?;
    let ds = training_data(cfg)?;
    let learners = cfg.model.build(&ds)?;
    let m = match cfg.mstop().or_else(|| stored_tuning(cfg, &prov)) {
        Some(m) => m,
        None => {
            log::info!("no stopping iterations given; tuning first");
            let t = tune_hurdle(&ds, &cfg.model, &learners, &cfg.tune, cfg.seed()?)?;
            write_tuning(cfg, &prov, &t)?;
            t.m_stop
        }
    };
    let model = fit_hurdle(&ds, &cfg.model, &learners, m)?;
    prov.write_json(&cfg.out.join("model.json"), serde_json::to_value(&model)?)?;

    let mut risk = Vec::new();
    let mut path = Vec::new();
    path_rows("occupancy", &model.occupancy, &mut risk, &mut path);
    path_rows("mu", &model.count.mu, &mut risk, &mut path);
    path_rows("sigma", &model.count.sigma, &mut risk, &mut path);
    for (file, header, rows) in [
        ("risk_path.csv", ["predictor", "iteration", "train_risk"], &risk),
        ("selection_path.csv", ["predictor", "iteration", "base_learner"], &path),
    ] {
        prov.write_csv(&cfg.out.join(file), |buf| {
            let mut w = csv_writer(buf);
            w.write_record(header)?;
            for r in rows {
                w.write_record(r)?;
            }
            w.flush()?;
            Ok(())
        })?;
    }
    let totals = survey_totals(&model, &ds)?;
    prov.write_csv(&cfg.out.join("survey_totals.csv"), |buf| {
        let mut w = csv_writer(buf);
        for t in &totals {
            w.serialize(t)?;
        }
        w.flush()?;
        Ok(())
    })?;
    let r2 = pseudo_r2(&model, &ds)?;
    prov.write_json(
        &cfg.out.join("fit_report.json"),
        json!({
            "m_stop": m,
            "pseudo_r2": r2.r2,
            "log_likelihood": r2.ll_model,
            "null_log_likelihood": r2.ll_null,
            "n": r2.n,
            "positive": ds.positive_rows().len(),
            "selected": {
                "occupancy": model.occupancy.selected(),
                "mu": model.count.mu.selected(),
                "sigma": model.count.sigma.selected(),
            },
        }),
    )?;
    println!("fitted m_stop ({}, {}, {}); pseudo R2 = {:.4}", m.occupancy, m.mu, m.sigma, r2.r2);
    Ok(())
}

fn write_frequencies(prov: &Provenance, path: &Path, res: &StabSelResult) -> Result<()> {
    prov.write_csv(path, |buf| {
        let mut w = csv_writer(buf);
        w.write_record(["base_learner", "frequency", "stable"])?;
        for (j, (name, f)) in res.names.iter().zip(&res.frequencies).enumerate() {
            w.write_record([name.clone(), f.to_string(), res.is_stable(j).to_string()])?;
        }
        w.flush()?;
        Ok(())
    })
}

pub fn stabsel(cfg: &RunConfig) -> Result<()> {
    let prov = Provenance::of(cfg)?;
    let ds = training_data(cfg)?;
    let learners = cfg.model.build(&ds)?;
    let st = stabsel_hurdle(&ds, &cfg.model, &learners, &cfg.stabsel, cfg.seed()?)?;
    let parts = [("occupancy", &st.occupancy), ("mu", &st.mu), ("sigma", &st.sigma)];
    for (name, res) in parts {
        write_frequencies(&prov, &cfg.out.join(format!("stabsel_{name}.csv")), res)?;
    }
    prov.write_csv(&cfg.out.join("stabsel_bound.csv"), |buf| {
        let mut w = csv_writer(buf);
        w.write_record([
            "predictor",
            "p",
            "q",
            "pi_thr",
            "pairs",
            "expected_false_bound",
            "pcer_bound",
            "stable",
            "capped_halves",
        ])?;
        for (name, r) in parts {
            w.write_record([
                name.to_string(),
                r.config.p.to_string(),
                r.config.q.to_string(),
                r.config.pi_thr.to_string(),
                r.config.pairs.to_string(),
                r.bound.expected_false.to_string(),
                r.bound.pcer.to_string(),
                r.stable_set().join(" "),
                r.capped_halves.to_string(),
            ])?;
        }
        w.flush()?;
        Ok(())
    })?;
    for (name, r) in parts {
        println!(
            "{name}: stable [{}] (q = {}, pi_thr = {:.3}, E[V] <= {:.3}, PCER <= {:.4})",
            r.stable_set().join(", "),
            r.config.q,
            r.config.pi_thr,
            r.bound.expected_false,
            r.bound.pcer
        );
    }
    Ok(())
}

pub fn predict(cfg: &RunConfig) -> Result<()> {
    let prov = Provenance::of(cfg)?;
    let model_path = cfg.model_path();
    let text = std::fs::read_to_string(&model_path).with_context(|| format!("reading {}", model_path.display()))?;
    let model = HurdleModel::from_json(&text).with_context(|| format!("loading model {}", model_path.display()))?;
    let grid_path = cfg.data()?;
    let source = read_grid(File::open(grid_path).with_context(|| format!("opening {}", grid_path.display()))?, &model.schema)?;
    let winters: Vec<i32> = if cfg.predict.winters.is_empty() {
        model.winter_levels.iter().map(|w| w.parse::<i32>()).collect::<Result<_, _>>()?
    } else {
        cfg.predict.winters.clone()
    };
    let preds = prediction_grid(&model, &source, &winters, cfg.predict.n_dates)?;
    prov.write_csv(&cfg.out.join("predictions.csv"), |buf| Ok(write_predictions(&preds, buf)?))?;
    println!("{} predictions over {} winter(s)", preds.len(), winters.len());
    Ok(())
}

pub fn summarize(cfg: &RunConfig) -> Result<()> {
    let prov = Provenance::of(cfg)?;
    let input = cfg.data.clone().unwrap_or_else(|| cfg.out.join("predictions.csv"));
    let mut rdr = csv::ReaderBuilder::new()
        .comment(Some(b'#'))
        .from_path(&input)
        .with_context(|| format!("opening {}", input.display()))?;
    let preds: Vec<GridPrediction> = rdr.deserialize().collect::<Result<_, _>>()?;
    if preds.is_empty() {
        bail!("{} holds no predictions", input.display());
    }
    let coords: HashMap<String, (f64, f64)> = preds.iter().map(|p| (p.segment_id.clone(), (p.xkm, p.ykm))).collect();
    for q in Quantity::ALL {
        let summaries = summarize_segments(&q.per_segment(&preds))?;
        prov.write_csv(&cfg.out.join(format!("summary_{}.csv", q.name())), |buf| Ok(write_summaries(&summaries, buf)?))?;
        prov.write_json(&cfg.out.join(format!("{}.geojson", q.name())), geojson(q, &summaries, &coords, cfg.predict.edge_km)?)?;
    }
    println!("summarized {} segments", coords.len());
    Ok(())
}
