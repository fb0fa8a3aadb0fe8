//! Figures, tables and the run summary.

use std::fs;

use netvol::metrics::{kde, Bandwidth, KdeCurve};
use netvol::pipeline::{NextWindowPairs, RegimeMeans};
use netvol::synthgen::SHIFTED;
use netvol::{ModelKind, Result};
use serde::Serialize;

use crate::stages::{Runner, REPORT};
use crate::svg::{self, Series};
use crate::workspace::{write_json, CODE_VERSION};

#[derive(Debug, Clone, PartialEq, Serialize)]
pub struct TableRow {
    pub model_kind: ModelKind,
    pub r2_without: Option<f64>,
    pub r2_with: Option<f64>,
    pub mse_without: f64,
    pub mse_with: f64,
    pub statistic: f64,
    pub p_value: f64,
    pub n_resamples: usize,
    pub n_train: usize,
    pub n_oos: usize,
}

#[derive(Debug, Clone, PartialEq, Serialize)]
struct IndicatorStats {
    points: usize,
    flagged: usize,
    mean_auroc: Option<f64>,
    min_auroc: Option<f64>,
    max_auroc: Option<f64>,
}

#[derive(Debug, Clone, PartialEq, Serialize)]
struct Regimes {
    #[serde(flatten)]
    means: RegimeMeans,
    gap: Option<f64>,
}

#[derive(Debug, Clone, PartialEq, Serialize)]
struct Summary {
    code_version: &'static str,
    config_hash: String,
    seed: u64,
    indicator: IndicatorStats,
    n_pairs: usize,
    spearman: Option<f64>,
    kde_bandwidth_auroc: Option<f64>,
    kde_bandwidth_log_rv: Option<f64>,
    regimes: Option<Regimes>,
    table: Vec<TableRow>,
}

fn density(samples: &[f64], points: usize) -> Option<KdeCurve> {
    kde(samples, Bandwidth::Silverman, points).ok()
}

fn curve(c: &Option<KdeCurve>) -> (&[f64], &[f64]) {
    c.as_ref().map_or((&[], &[]), |c| (&c.x, &c.density))
}

fn write_kde(path: &std::path::Path, curve: &Option<KdeCurve>) -> Result<()> {
    let mut w = csv::Writer::from_path(path)?;
    w.write_record(["x", "density"])?;
    if let Some(c) = curve {
        for (x, d) in c.x.iter().zip(&c.density) {
            w.write_record([format!("{x:?}"), format!("{d:?}")])?;
        }
    }
    w.flush()?;
    Ok(())
}

pub fn build(runner: &Runner, hash: &str) -> Result<()> {
    let ws = &runner.ws;
    let daily = runner.read_daily()?;
    let series = runner.read_indicator()?;
    let forecast = runner.read_forecast()?;
    let truth = runner.read_truth()?;
    let points = runner.cfg.kde_points;

    let pairs = NextWindowPairs::new(&series, &daily);
    let rho = pairs.spearman();
    let auroc_kde = density(&pairs.auroc, points);
    let log_rv_kde = density(&pairs.log_rv, points);

    let mut w = csv::Writer::from_path(ws.path(REPORT, "pairs.csv"))?;
    w.write_record(["date", "auroc", "next_log_rv"])?;
    for i in 0..pairs.len() {
        w.write_record([pairs.dates[i].to_string(), format!("{:?}", pairs.auroc[i]), format!("{:?}", pairs.log_rv[i])])?;
    }
    w.flush()?;
    write_kde(&ws.path(REPORT, "kde_auroc.csv"), &auroc_kde)?;
    write_kde(&ws.path(REPORT, "kde_log_rv.csv"), &log_rv_kde)?;

    // one column per session; the indicator sits on the day its test graph ends
    let sessions: Vec<chrono::NaiveDate> = daily.timestamps.iter().map(|t| t.date()).collect();
    let labels: Vec<String> = sessions.iter().map(|d| d.to_string()).collect();
    let mut auroc_line = vec![None; sessions.len()];
    for p in &series.points {
        if let Ok(i) = sessions.binary_search(&p.date) {
            auroc_line[i] = p.auroc;
        }
    }
    let shaded: Vec<bool> = match &truth {
        Some((dates, regimes)) => sessions
            .iter()
            .map(|d| dates.binary_search(d).is_ok_and(|i| regimes[i] == SHIFTED))
            .collect(),
        None => vec![false; sessions.len()],
    };
    let chart = svg::dual_axis_series(
        "Link-prediction AUROC and daily log realized variance",
        &labels,
        &Series {
            name: "AUROC",
            color: "#1f77b4",
            values: auroc_line,
        },
        &Series {
            name: "log RV",
            color: "#d62728",
            values: daily.log_rv.clone(),
        },
        &shaded,
    );
    fs::write(ws.path(REPORT, "indicator_logrv.svg"), chart)?;

    let title = match rho {
        Some(r) => format!("AUROC vs next-session log RV (Spearman {r:.3}, n = {})", pairs.len()),
        None => format!("AUROC vs next-session log RV (n = {})", pairs.len()),
    };
    let scatter = svg::scatter_with_marginals(
        &title,
        ("AUROC", &pairs.auroc),
        ("next-session log RV", &pairs.log_rv),
        curve(&auroc_kde),
        curve(&log_rv_kde),
    );
    fs::write(ws.path(REPORT, "auroc_kde.svg"), scatter)?;

    let table: Vec<TableRow> = forecast
        .models
        .iter()
        .map(|m| TableRow {
            model_kind: m.model_kind,
            r2_without: m.without_auroc.r2_oos,
            r2_with: m.with_auroc.r2_oos,
            mse_without: m.without_auroc.mse_oos,
            mse_with: m.with_auroc.mse_oos,
            statistic: m.bootstrap.statistic,
            p_value: m.bootstrap.p_value,
            n_resamples: m.bootstrap.n_resamples,
            n_train: m.with_auroc.n_train,
            n_oos: m.with_auroc.n_oos,
        })
        .collect();
    let mut w = csv::Writer::from_path(ws.path(REPORT, "table.csv"))?;
    w.write_record([
        "model",
        "r2_without",
        "r2_with",
        "mse_without",
        "mse_with",
        "statistic",
        "p_value",
        "n_resamples",
        "n_train",
        "n_oos",
    ])?;
    let opt = |v: Option<f64>| v.map_or(String::new(), |x| format!("{x:?}"));
    for r in &table {
        w.write_record([
            r.model_kind.to_string(),
            opt(r.r2_without),
            opt(r.r2_with),
            format!("{:?}", r.mse_without),
            format!("{:?}", r.mse_with),
            format!("{:?}", r.statistic),
            format!("{:?}", r.p_value),
            r.n_resamples.to_string(),
            r.n_train.to_string(),
            r.n_oos.to_string(),
        ])?;
    }
    w.flush()?;
    write_json(&ws.path(REPORT, "table.json"), &table)?;

    let scored: Vec<f64> = series.points.iter().filter_map(|p| p.auroc).collect();
    let indicator = IndicatorStats {
        points: series.points.len(),
        flagged: series.points.iter().filter(|p| p.flag.is_some()).count(),
        mean_auroc: (!scored.is_empty()).then(|| scored.iter().sum::<f64>() / scored.len() as f64),
        min_auroc: scored.iter().copied().reduce(f64::min),
        max_auroc: scored.iter().copied().reduce(f64::max),
    };
    let regimes = truth.map(|(dates, labels)| {
        let means = RegimeMeans::new(&series, &dates, &labels);
        Regimes { means, gap: means.gap() }
    });
    let summary = Summary {
        code_version: CODE_VERSION,
        config_hash: hash.to_string(),
        seed: runner.cfg.seed(),
        indicator,
        n_pairs: pairs.len(),
        spearman: rho,
        kde_bandwidth_auroc: auroc_kde.as_ref().map(|c| c.bandwidth),
        kde_bandwidth_log_rv: log_rv_kde.as_ref().map(|c| c.bandwidth),
        regimes,
        table,
    };
    write_json(&ws.path(REPORT, "summary.json"), &summary)?;
    match rho {
        Some(r) => log::info!("report: spearman {r:.4} over {} pairs", pairs.len()),
        None => log::warn!("report: too few pairs for a rank correlation"),
    }
    Ok(())
}
