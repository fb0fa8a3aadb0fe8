//! Flat run configuration. Every key has a default except the paths; unknown
//! keys are rejected and every value is checked before any stage runs.

use std::collections::BTreeMap;
use std::path::{Path, PathBuf};

use chrono::TimeDelta;
use netvol::corrnet::{CorrFrequency, FeatureSpec, GraphConfig};
use netvol::forecast::{ForecastConfig, HarLags, MlpHyper, ModelKind, TreeHyper};
use netvol::gae::{GaeHyper, SplitFractions};
use netvol::indicator::{EvalEmbedding, IndicatorConfig};
use netvol::ingest::{CsvLayout, Horizon, IndexWeighting, IngestConfig, SessionHours};
use netvol::kv::KvFile;
use netvol::pipeline::PipelineConfig;
use netvol::{Error, Result};
use sha2::{Digest, Sha256};

pub const INGEST_KEYS: &[&str] = &[
    "csv_layout",
    "timestamp_column",
    "ticker_column",
    "price_column",
    "bar_interval",
    "min_coverage",
    "session_hours",
    "include_overnight",
    "index_weighting",
    "horizon",
];
pub const GRAPH_KEYS: &[&str] = &["window_len", "corr_threshold", "corr_frequency", "feature_spec"];
pub const INDICATOR_KEYS: &[&str] = &[
    "hidden_dim",
    "latent_dim",
    "learning_rate",
    "max_epochs",
    "patience",
    "neg_ratio",
    "train_fraction",
    "val_fraction",
    "test_fraction",
    "eval_embedding",
    "seed",
];
pub const FORECAST_KEYS: &[&str] = &[
    "har_lags",
    "oos_fraction",
    "n_resamples",
    "ridge_lambda",
    "models",
    "tree_rounds",
    "tree_max_depth",
    "tree_shrinkage",
    "tree_min_samples_leaf",
    "tree_subsample",
    "mlp_hidden",
    "mlp_learning_rate",
    "mlp_max_epochs",
    "mlp_patience",
    "mlp_val_fraction",
    "seed",
];
pub const REPORT_KEYS: &[&str] = &["kde_points"];
const PATH_KEYS: &[&str] = &["input", "workspace", "truth"];

fn defaults() -> BTreeMap<&'static str, String> {
    let gae = GaeHyper::default();
    let fc = ForecastConfig::default();
    let g = GraphConfig::default();
    [
        ("csv_layout", "wide".to_string()),
        ("timestamp_column", "timestamp".into()),
        ("ticker_column", "ticker".into()),
        ("price_column", "price".into()),
        ("bar_interval", "1m".into()),
        ("min_coverage", "0.95".into()),
        ("session_hours", String::new()),
        ("include_overnight", "false".into()),
        ("index_weighting", "equal".into()),
        ("horizon", "60m".into()),
        ("window_len", g.window_len.to_string()),
        ("corr_threshold", g.threshold.to_string()),
        ("corr_frequency", "bar".into()),
        ("feature_spec", "daily_returns".into()),
        ("hidden_dim", gae.hidden_dim.to_string()),
        ("latent_dim", gae.latent_dim.to_string()),
        ("learning_rate", gae.learning_rate.to_string()),
        ("max_epochs", gae.max_epochs.to_string()),
        ("patience", gae.patience.to_string()),
        ("neg_ratio", gae.neg_ratio.to_string()),
        ("train_fraction", gae.split.train.to_string()),
        ("val_fraction", gae.split.val.to_string()),
        ("test_fraction", gae.split.test.to_string()),
        ("eval_embedding", "test_graph".into()),
        ("seed", "0".into()),
        ("har_lags", fc.lags.to_string()),
        ("oos_fraction", fc.oos_fraction.to_string()),
        ("n_resamples", fc.n_resamples.to_string()),
        ("ridge_lambda", fc.ridge_lambda.to_string()),
        ("models", "linear,tree,mlp".into()),
        ("tree_rounds", fc.tree.n_rounds.to_string()),
        ("tree_max_depth", fc.tree.max_depth.to_string()),
        ("tree_shrinkage", fc.tree.shrinkage.to_string()),
        ("tree_min_samples_leaf", fc.tree.min_samples_leaf.to_string()),
        ("tree_subsample", fc.tree.subsample.to_string()),
        ("mlp_hidden", fc.mlp.hidden.to_string()),
        ("mlp_learning_rate", fc.mlp.learning_rate.to_string()),
        ("mlp_max_epochs", fc.mlp.max_epochs.to_string()),
        ("mlp_patience", fc.mlp.patience.to_string()),
        ("mlp_val_fraction", fc.mlp.val_fraction.to_string()),
        ("kde_points", "200".into()),
    ]
    .into_iter()
    .collect()
}

/// Parses `<n>s`, `<n>m` or `<n>h`.
pub fn parse_duration(s: &str) -> Result<TimeDelta> {
    let s = s.trim();
    let bad = || Error::Config(format!("expected a duration such as 30s, 5m or 1h, got {s:?}"));
    let (num, unit) = s.split_at(s.find(|c: char| !c.is_ascii_digit()).ok_or_else(bad)?);
    let n: i64 = num.parse().map_err(|_| bad())?;
    let d = match unit {
        "s" => TimeDelta::try_seconds(n),
        "m" => TimeDelta::try_minutes(n),
        "h" => TimeDelta::try_hours(n),
        _ => None,
    };
    d.filter(|_| n > 0).ok_or_else(bad)
}

#[derive(Debug, Clone)]
pub struct RunConfig {
    pub input: Option<PathBuf>,
    pub workspace: PathBuf,
    pub truth: Option<PathBuf>,
    pub ingest: IngestConfig,
    pub pipeline: PipelineConfig,
    pub kde_points: usize,
    values: BTreeMap<&'static str, String>,
}

impl RunConfig {
    /// Relative paths resolve against `base`, the config file's directory.
    pub fn from_kv(kv: &KvFile, base: &Path, seed: Option<u64>) -> Result<Self> {
        let mut allowed: Vec<&str> = PATH_KEYS.to_vec();
        allowed.extend(defaults().keys().copied());
        kv.reject_unknown(&allowed)?;
        let mut values = defaults();
        for key in kv.keys() {
            if let Some(slot) = values.get_mut(key) {
                *slot = kv.get(key).unwrap_or_default().to_string();
            }
        }
        if let Some(s) = seed {
            values.insert("seed", s.to_string());
        }
        let path = |key: &str| kv.get(key).filter(|v| !v.is_empty()).map(|v| base.join(v));
        let mut cfg = Self {
            input: path("input"),
            workspace: path("workspace").unwrap_or_else(|| base.join("workspace")),
            truth: path("truth"),
            ingest: IngestConfig::default(),
            pipeline: PipelineConfig::default(),
            kde_points: 0,
            values,
        };
        cfg.parse_values()?;
        Ok(cfg)
    }

    pub fn read(path: &Path, seed: Option<u64>) -> Result<Self> {
        let kv = KvFile::read(path)?;
        let base = path.parent().unwrap_or(Path::new("."));
        Self::from_kv(&kv, base, seed)
    }

    fn value<T: std::str::FromStr>(&self, key: &str) -> Result<T>
    where
        T::Err: std::fmt::Display,
    {
        let raw = &self.values[key];
        raw.trim()
            .parse()
            .map_err(|e| Error::Config(format!("bad value {raw:?} for {key}: {e}")))
    }

    fn parse_values(&mut self) -> Result<()> {
        let v = self.values.clone();
        self.ingest = IngestConfig {
            layout: match v["csv_layout"].as_str() {
                "wide" => CsvLayout::Wide,
                "long" => CsvLayout::Long,
                other => return Err(Error::Config(format!("csv_layout must be wide or long, got {other:?}"))),
            },
            timestamp_column: v["timestamp_column"].clone(),
            ticker_column: v["ticker_column"].clone(),
            price_column: v["price_column"].clone(),
            bar_interval: parse_duration(&v["bar_interval"])?,
            min_coverage: self.value("min_coverage")?,
            sessions: match v["session_hours"].trim() {
                "" => None,
                spec => Some(SessionHours::parse(spec)?),
            },
            include_overnight: self.value("include_overnight")?,
        };
        if !(0.0..=1.0).contains(&self.ingest.min_coverage) {
            return Err(Error::Config("min_coverage must lie in [0, 1]".into()));
        }
        let weighting = match v["index_weighting"].trim() {
            "equal" => IndexWeighting::Equal,
            list => IndexWeighting::Custom(
                list.split(',')
                    .map(|w| w.trim().parse::<f64>())
                    .collect::<std::result::Result<_, _>>()
                    .map_err(|_| Error::Config(format!("index_weighting must be equal or a weight list, got {list:?}")))?,
            ),
        };
        let horizon = match v["horizon"].trim() {
            "session" => Horizon::Session,
            d => Horizon::from_duration(parse_duration(d)?, self.ingest.bar_interval)?,
        };
        let graph = GraphConfig {
            window_len: self.value("window_len")?,
            threshold: self.value("corr_threshold")?,
            corr_frequency: self.value::<CorrFrequency>("corr_frequency")?,
            feature_spec: self.value::<FeatureSpec>("feature_spec")?,
        };
        graph.validate()?;
        let hyper = GaeHyper {
            hidden_dim: self.value("hidden_dim")?,
            latent_dim: self.value("latent_dim")?,
            learning_rate: self.value("learning_rate")?,
            max_epochs: self.value("max_epochs")?,
            patience: self.value("patience")?,
            neg_ratio: self.value("neg_ratio")?,
            split: SplitFractions {
                train: self.value("train_fraction")?,
                val: self.value("val_fraction")?,
                test: self.value("test_fraction")?,
            },
            seed: self.value("seed")?,
        };
        hyper.validate()?;
        let forecast = ForecastConfig {
            lags: self.value::<HarLags>("har_lags")?,
            oos_fraction: self.value("oos_fraction")?,
            n_resamples: self.value("n_resamples")?,
            ridge_lambda: self.value("ridge_lambda")?,
            tree: TreeHyper {
                n_rounds: self.value("tree_rounds")?,
                max_depth: self.value("tree_max_depth")?,
                shrinkage: self.value("tree_shrinkage")?,
                min_samples_leaf: self.value("tree_min_samples_leaf")?,
                subsample: self.value("tree_subsample")?,
            },
            mlp: MlpHyper {
                hidden: self.value("mlp_hidden")?,
                learning_rate: self.value("mlp_learning_rate")?,
                max_epochs: self.value("mlp_max_epochs")?,
                patience: self.value("mlp_patience")?,
                val_fraction: self.value("mlp_val_fraction")?,
            },
        };
        forecast.validate()?;
        let mut models = Vec::new();
        for name in v["models"].split(',').map(str::trim).filter(|s| !s.is_empty()) {
            let kind: ModelKind = name.parse()?;
            if !models.contains(&kind) {
                models.push(kind);
            }
        }
        if models.is_empty() {
            return Err(Error::Config("models must name at least one of linear, tree, mlp".into()));
        }
        self.kde_points = self.value("kde_points")?;
        if self.kde_points < 2 {
            return Err(Error::Config("kde_points must be at least 2".into()));
        }
        self.pipeline = PipelineConfig {
            weighting,
            horizon,
            graph,
            indicator: IndicatorConfig {
                hyper,
                eval_embedding: self.value::<EvalEmbedding>("eval_embedding")?,
            },
            forecast,
            models,
            seed: self.value("seed")?,
        };
        Ok(())
    }

    pub fn seed(&self) -> u64 {
        self.pipeline.seed
    }

    /// Digest of `upstream`, `extra` and the effective values of `keys`.
    pub fn stage_hash(&self, stage: &str, upstream: &str, extra: &str, keys: &[&str]) -> String {
        let mut h = Sha256::new();
        h.update(format!("stage={stage}\nupstream={upstream}\nextra={extra}\n"));
        for k in keys {
            h.update(format!("{k}={}\n", self.values[k]));
        }
        hex::encode(h.finalize())
    }
}

pub fn file_hash(path: &Path) -> Result<String> {
    Ok(hex::encode(Sha256::digest(std::fs::read(path)?)))
}
