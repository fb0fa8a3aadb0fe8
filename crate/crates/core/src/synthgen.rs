//! Synthetic sector factor-model markets with plantable homogeneity shifts.
//!
//! Stable days follow `r = L·f + ε` with block loadings, so the threshold
//! graph is a union of sector cliques. On shifted days a fraction of tickers
//! trades on a market mode (equal loading on every sector factor) and those
//! tickers take part in an intraday long/short rotation whose sides are redrawn
//! each day. The rotation nets out by the close, so daily returns never see it,
//! while bar-level correlations between market-mode tickers scatter around the
//! threshold. The shifted graph is then wired at random with respect to the
//! node features.

use std::io::Write;
use std::path::Path;

use chrono::{Datelike, NaiveDate, TimeDelta, Weekday};
use ndarray::{Array1, Array2};
use rand::seq::SliceRandom;
use rand::Rng;
use rand_distr::{Distribution, StandardNormal};
use rayon::prelude::*;

use crate::corrnet::MarketGraph;
use crate::error::{Error, Result};
use crate::ingest::{log_returns, realized_volatility, Horizon, IndexWeighting, PricePanel, VolSeries};
use crate::kv::KvFile;
use crate::rng::{derive_seed, rng_from, tags};

pub const STABLE: u8 = 1;
pub const SHIFTED: u8 = 2;

#[derive(Debug, Clone, Copy, PartialEq)]
pub struct RegimeParams {
    /// Per-bar factor standard deviation.
    pub factor_vol: f64,
    /// Per-bar idiosyncratic standard deviation.
    pub idio_vol: f64,
    /// Per-bar standard deviation of the intraday rotation factor.
    pub rotation_vol: f64,
}

#[derive(Debug, Clone, Copy, PartialEq)]
pub struct ShiftSpec {
    /// Fraction of tickers whose sector loadings are replaced by the market mode.
    pub scramble: f64,
    /// Scale applied to every shifted-day return.
    pub vol_multiplier: f64,
}

#[derive(Debug, Clone, PartialEq)]
pub struct Scenario {
    pub n_tickers: usize,
    pub n_sectors: usize,
    pub days: usize,
    pub bars_per_day: usize,
    pub start_date: NaiveDate,
    pub stable: RegimeParams,
    pub shifted: RegimeParams,
    /// Loading on the ticker's own sector factor.
    pub loading_in: f64,
    /// Loading on every other sector factor.
    pub loading_out: f64,
    /// `(start_day, regime)` in increasing start order, first entry at day 0.
    pub schedule: Vec<(usize, u8)>,
    pub shift: ShiftSpec,
    /// Volatility of a session is scaled by `1 + coupling` when every one of
    /// the `coupling_window` sessions before it was shifted.
    pub coupling: f64,
    pub coupling_window: usize,
    pub seed: u64,
}

impl Default for Scenario {
    /// Stable first 70 days, shifted for the remaining 50. Shifted-regime
    /// parameters put the market-mode correlation just under 0.7 and keep the
    /// index variance of both regimes equal.
    fn default() -> Self {
        let stable = RegimeParams {
            factor_vol: 8e-4,
            idio_vol: 2e-4,
            rotation_vol: 0.0,
        };
        Self {
            n_tickers: 60,
            n_sectors: 4,
            days: 120,
            bars_per_day: 390,
            start_date: NaiveDate::from_ymd_opt(2021, 1, 4).expect("valid date"),
            stable,
            shifted: market_mode_params(stable, 60, 4),
            loading_in: 1.0,
            loading_out: 0.0,
            schedule: vec![(0, STABLE), (70, SHIFTED)],
            shift: ShiftSpec {
                scramble: 1.0,
                vol_multiplier: 1.0,
            },
            coupling: 0.0,
            coupling_window: 20,
            seed: 0,
        }
    }
}

/// Shifted-regime parameters for `n` tickers in `k` sectors: market-mode
/// correlation about 0.67 and the same equal-weight index variance as the
/// block-loaded stable regime.
pub fn market_mode_params(stable: RegimeParams, n: usize, k: usize) -> RegimeParams {
    let (n, k) = (n as f64, k as f64);
    let scale = (4.0 / k).sqrt();
    let idio_vol = 1.375e-4 * scale;
    // index variance: f²/k + idio²/n on stable days, f² + idio²/n on the market mode
    let factor_vol = (stable.factor_vol.powi(2) / k + (stable.idio_vol.powi(2) - idio_vol * idio_vol) / n).sqrt();
    RegimeParams {
        factor_vol,
        idio_vol,
        rotation_vol: 2.44e-4 * scale,
    }
}

impl Scenario {
    /// Shifted runs of 24 sessions every 30 sessions, so each run ends with a
    /// few coupled sessions once the graph window is fully shifted. Ten
    /// sectors of six keep stable-day AUROC close to 1 when the next window
    /// is re-encoded, which a four-clique graph does not reliably do.
    pub fn signal(coupling: f64, seed: u64) -> Self {
        let mut schedule = vec![(0, STABLE)];
        for start in (2..120).step_by(30) {
            schedule.push((start, SHIFTED));
            if start + 24 < 120 {
                schedule.push((start + 24, STABLE));
            }
        }
        let base = Self::default();
        Self {
            n_sectors: 10,
            shifted: market_mode_params(base.stable, base.n_tickers, 10),
            schedule,
            coupling,
            seed,
            ..base
        }
    }

    pub fn validate(&self) -> Result<()> {
        let bad = |m: String| Err(Error::Config(m));
        if self.n_tickers < 2 || self.n_sectors == 0 || self.n_sectors > self.n_tickers {
            return bad(format!(
                "need at least 2 tickers and 1..=n_tickers sectors, got {} and {}",
                self.n_tickers, self.n_sectors
            ));
        }
        if self.days == 0 || self.bars_per_day < 2 {
            return bad("days must be positive and bars_per_day at least 2".into());
        }
        if self.bars_per_day > 24 * 60 - 9 * 60 - 31 {
            return bad("bars_per_day does not fit after 09:31 on one calendar day".into());
        }
        for p in [self.stable, self.shifted] {
            if !(p.factor_vol > 0.0 && p.idio_vol > 0.0 && p.factor_vol.is_finite() && p.idio_vol.is_finite()) {
                return bad("factor_vol and idio_vol must be positive".into());
            }
            if !(p.rotation_vol >= 0.0 && p.rotation_vol.is_finite()) {
                return bad("rotation_vol must be non-negative".into());
            }
        }
        if !(0.0..=1.0).contains(&self.shift.scramble) {
            return bad(format!("scramble must lie in [0, 1], got {}", self.shift.scramble));
        }
        if !(self.shift.vol_multiplier >= 0.0) || !(self.coupling >= 0.0) {
            return bad("vol_multiplier and coupling must be non-negative".into());
        }
        if self.coupling_window == 0 {
            return bad("coupling_window must be positive".into());
        }
        match self.schedule.first() {
            Some(&(0, _)) => {}
            _ => return bad("schedule must start at day 0".into()),
        }
        for w in self.schedule.windows(2) {
            if w[1].0 <= w[0].0 {
                return bad("schedule start days must be strictly increasing".into());
            }
        }
        if let Some(&(d, r)) = self.schedule.iter().find(|(d, r)| *d >= self.days || !(*r == STABLE || *r == SHIFTED)) {
            return bad(format!("schedule entry ({d}, {r}) is out of range"));
        }
        Ok(())
    }

    pub fn regime(&self, day: usize) -> u8 {
        self.schedule
            .iter()
            .take_while(|(start, _)| *start <= day)
            .last()
            .map_or(STABLE, |&(_, r)| r)
    }

    pub fn regimes(&self) -> Vec<u8> {
        (0..self.days).map(|d| self.regime(d)).collect()
    }

    /// Whether each day's volatility carries the coupling boost.
    pub fn coupled_days(&self) -> Vec<bool> {
        let regimes = self.regimes();
        let w = self.coupling_window;
        (0..self.days)
            .map(|d| d >= w && regimes[d - w..d].iter().all(|&r| r == SHIFTED))
            .collect()
    }

    /// Volatility scale of each day.
    pub fn vol_multipliers(&self) -> Vec<f64> {
        self.coupled_days()
            .iter()
            .enumerate()
            .map(|(d, &c)| {
                let shift = if self.regime(d) == SHIFTED { self.shift.vol_multiplier } else { 1.0 };
                if c {
                    shift * (1.0 + self.coupling)
                } else {
                    shift
                }
            })
            .collect()
    }

    pub fn sector_of(&self, ticker: usize) -> usize {
        ticker * self.n_sectors / self.n_tickers
    }

    pub fn tickers(&self) -> Vec<String> {
        (0..self.n_tickers).map(|i| format!("T{i:03}")).collect()
    }

    /// Block loadings in force on stable days.
    pub fn loadings(&self) -> Array2<f64> {
        Array2::from_shape_fn((self.n_tickers, self.n_sectors), |(i, k)| {
            if self.sector_of(i) == k {
                self.loading_in
            } else {
                self.loading_out
            }
        })
    }

    /// Tickers moved onto the market mode on shifted days, fixed per seed.
    pub fn scrambled(&self) -> Vec<bool> {
        let count = (self.shift.scramble * self.n_tickers as f64).round() as usize;
        let mut order: Vec<usize> = (0..self.n_tickers).collect();
        order.shuffle(&mut rng_from(self.seed, tags::SYNTH_LOADINGS));
        let mut out = vec![false; self.n_tickers];
        for &i in &order[..count] {
            out[i] = true;
        }
        out
    }

    /// Loadings in force on shifted days: scrambled rows become the market
    /// mode, an equal-weight row with the block row's norm.
    pub fn shifted_loadings(&self) -> Array2<f64> {
        let mut l = self.loadings();
        let k = self.n_sectors as f64;
        let norm = (self.loading_in.powi(2) + (k - 1.0) * self.loading_out.powi(2)).sqrt();
        for (mut row, s) in l.rows_mut().into_iter().zip(self.scrambled()) {
            if s {
                row.fill(norm / k.sqrt());
            }
        }
        l
    }

    fn params(&self, regime: u8) -> RegimeParams {
        if regime == SHIFTED {
            self.shifted
        } else {
            self.stable
        }
    }

    /// Business days from `start_date`.
    pub fn dates(&self) -> Vec<NaiveDate> {
        let mut out = Vec::with_capacity(self.days);
        let mut d = self.start_date;
        while out.len() < self.days {
            if !matches!(d.weekday(), Weekday::Sat | Weekday::Sun) {
                out.push(d);
            }
            d += TimeDelta::days(1);
        }
        out
    }

    /// Expected equal-weight index realized variance over a session's
    /// intraday returns.
    pub fn true_rv(&self) -> Vec<f64> {
        let n = self.n_tickers as f64;
        let intraday = (self.bars_per_day - 1) as f64;
        let rotating = self.scrambled().iter().filter(|&&r| r).count();
        let per_bar = |l: Array2<f64>, p: RegimeParams| {
            let mean: Array1<f64> = l.mean_axis(ndarray::Axis(0)).expect("non-empty");
            // an odd count of rotating tickers leaves one unpaired side
            let imbalance = (rotating % 2) as f64 / n;
            p.factor_vol.powi(2) * mean.dot(&mean)
                + p.idio_vol.powi(2) / n
                + p.rotation_vol.powi(2) * imbalance.powi(2) * (1.0 - 1.0 / intraday)
        };
        let stable = per_bar(self.loadings(), self.stable);
        let shifted = per_bar(self.shifted_loadings(), self.shifted);
        self.vol_multipliers()
            .iter()
            .zip(self.regimes())
            .map(|(vm, r)| {
                let v = if r == SHIFTED { shifted } else { stable };
                vm * vm * v * intraday
            })
            .collect()
    }

    /// Parses a flat key-value scenario file. Missing keys keep their defaults.
    pub fn from_kv(kv: &KvFile) -> Result<Self> {
        kv.reject_unknown(SCENARIO_KEYS)?;
        let mut s = Scenario::default();
        if let Some(v) = kv.parsed("n_tickers")? {
            s.n_tickers = v;
        }
        if let Some(v) = kv.parsed("n_sectors")? {
            s.n_sectors = v;
        }
        if let Some(v) = kv.parsed("days")? {
            s.days = v;
        }
        if let Some(v) = kv.parsed("bars_per_day")? {
            s.bars_per_day = v;
        }
        if let Some(v) = kv.get("start_date") {
            s.start_date = NaiveDate::parse_from_str(v, "%Y-%m-%d")
                .map_err(|e| Error::Config(format!("bad start_date {v:?}: {e}")))?;
        }
        let pair = |key: &str| -> Result<Option<(f64, f64)>> {
            kv.get(key)
                .map(|v| {
                    let parts: Vec<f64> = v
                        .split(',')
                        .map(|p| p.trim().parse::<f64>())
                        .collect::<std::result::Result<_, _>>()
                        .map_err(|e| Error::Config(format!("bad {key} {v:?}: {e}")))?;
                    match parts[..] {
                        [a] => Ok((a, a)),
                        [a, b] => Ok((a, b)),
                        _ => Err(Error::Config(format!("{key} takes one or two values"))),
                    }
                })
                .transpose()
        };
        if let Some((a, b)) = pair("factor_vol")? {
            s.stable.factor_vol = a;
            s.shifted.factor_vol = b;
        }
        if let Some((a, b)) = pair("idio_vol")? {
            s.stable.idio_vol = a;
            s.shifted.idio_vol = b;
        }
        if let Some((a, b)) = pair("rotation_vol")? {
            s.stable.rotation_vol = a;
            s.shifted.rotation_vol = b;
        }
        if let Some(v) = kv.parsed("loading_in")? {
            s.loading_in = v;
        }
        if let Some(v) = kv.parsed("loading_out")? {
            s.loading_out = v;
        }
        if let Some(v) = kv.get("schedule") {
            s.schedule = v
                .split(',')
                .map(|item| {
                    let (d, r) = item
                        .split_once(':')
                        .ok_or_else(|| Error::Config(format!("schedule item {item:?} is not day:regime")))?;
                    let d = d.trim().parse::<usize>().map_err(|e| Error::Config(format!("schedule day {d:?}: {e}")))?;
                    let r = r.trim().parse::<u8>().map_err(|e| Error::Config(format!("schedule regime {r:?}: {e}")))?;
                    Ok((d, r))
                })
                .collect::<Result<_>>()?;
        }
        if let Some(v) = kv.parsed("scramble")? {
            s.shift.scramble = v;
        }
        if let Some(v) = kv.parsed("vol_multiplier")? {
            s.shift.vol_multiplier = v;
        }
        if let Some(v) = kv.parsed("coupling")? {
            s.coupling = v;
        }
        if let Some(v) = kv.parsed("coupling_window")? {
            s.coupling_window = v;
        }
        if let Some(v) = kv.parsed("seed")? {
            s.seed = v;
        }
        s.validate()?;
        Ok(s)
    }

    pub fn to_kv(&self) -> String {
        let schedule: Vec<String> = self.schedule.iter().map(|(d, r)| format!("{d}:{r}")).collect();
        format!(
            "n_tickers = {}\nn_sectors = {}\ndays = {}\nbars_per_day = {}\nstart_date = {}\n\
             factor_vol = {},{}\nidio_vol = {},{}\nrotation_vol = {},{}\nloading_in = {}\nloading_out = {}\n\
             schedule = {}\nscramble = {}\nvol_multiplier = {}\ncoupling = {}\ncoupling_window = {}\nseed = {}\n",
            self.n_tickers,
            self.n_sectors,
            self.days,
            self.bars_per_day,
            self.start_date,
            self.stable.factor_vol,
            self.shifted.factor_vol,
            self.stable.idio_vol,
            self.shifted.idio_vol,
            self.stable.rotation_vol,
            self.shifted.rotation_vol,
            self.loading_in,
            self.loading_out,
            schedule.join(","),
            self.shift.scramble,
            self.shift.vol_multiplier,
            self.coupling,
            self.coupling_window,
            self.seed,
        )
    }
}

pub const SCENARIO_KEYS: &[&str] = &[
    "n_tickers",
    "n_sectors",
    "days",
    "bars_per_day",
    "start_date",
    "factor_vol",
    "idio_vol",
    "rotation_vol",
    "loading_in",
    "loading_out",
    "schedule",
    "scramble",
    "vol_multiplier",
    "coupling",
    "coupling_window",
    "seed",
];

#[derive(Debug, Clone, PartialEq)]
pub struct GroundTruth {
    pub dates: Vec<NaiveDate>,
    pub regimes: Vec<u8>,
    pub sectors: Vec<usize>,
    pub true_rv: Vec<f64>,
    pub vol_multipliers: Vec<f64>,
}

impl GroundTruth {
    /// `day,regime,true_rv`
    pub fn write_csv<W: Write>(&self, w: W) -> Result<()> {
        let mut w = csv::Writer::from_writer(w);
        w.write_record(["day", "regime", "true_rv"])?;
        for ((d, r), rv) in self.dates.iter().zip(&self.regimes).zip(&self.true_rv) {
            w.write_record([d.to_string(), r.to_string(), format!("{rv:?}")])?;
        }
        w.flush()?;
        Ok(())
    }
}

/// Reads the `day,regime` columns of a ground-truth CSV.
pub fn read_regimes<R: std::io::Read>(r: R) -> Result<(Vec<NaiveDate>, Vec<u8>)> {
    let mut r = csv::Reader::from_reader(r);
    let (mut dates, mut regimes) = (Vec::new(), Vec::new());
    for rec in r.records() {
        let rec = rec?;
        let line = rec.position().map_or(0, |p| p.line());
        let bad = || Error::Validation(format!("ground truth line {line} is malformed"));
        dates.push(rec.get(0).and_then(|d| d.parse().ok()).ok_or_else(bad)?);
        regimes.push(rec.get(1).and_then(|d| d.parse().ok()).ok_or_else(bad)?);
    }
    if dates.windows(2).any(|w| w[1] <= w[0]) {
        return Err(Error::Validation("ground-truth days not strictly increasing".into()));
    }
    Ok((dates, regimes))
}

#[derive(Debug, Clone)]
pub struct SynthMarket {
    pub panel: PricePanel,
    pub truth: GroundTruth,
}

impl SynthMarket {
    pub fn write(&self, prices: impl AsRef<Path>, truth: impl AsRef<Path>) -> Result<()> {
        crate::ingest::write_price_csv(&self.panel, prices)?;
        self.truth.write_csv(std::fs::File::create(truth)?)
    }
}

/// Per-bar returns of one session, `N × bars`. Bar 0 carries the overnight
/// move; the rotation touches the market-mode tickers on bars `1..` only and
/// sums to zero over them.
fn day_returns(s: &Scenario, day: usize, loadings: &Array2<f64>, vol_multiplier: f64) -> Array2<f64> {
    let regime = s.regime(day);
    let p = s.params(regime);
    let n = s.n_tickers;
    let bars = s.bars_per_day;
    let day_seed = derive_seed(s.seed, day as u64);
    let mut rng = rng_from(day_seed, tags::SYNTH_RETURNS);

    let mut f = vec![0.0; s.n_sectors];
    let mut out = Array2::<f64>::zeros((n, bars));
    for b in 0..bars {
        for fk in f.iter_mut() {
            let z: f64 = StandardNormal.sample(&mut rng);
            *fk = p.factor_vol * z;
        }
        for i in 0..n {
            let systematic: f64 = loadings.row(i).iter().zip(&f).map(|(l, f)| l * f).sum();
            let eps: f64 = StandardNormal.sample(&mut rng);
            out[[i, b]] = systematic + p.idio_vol * eps;
        }
    }

    if p.rotation_vol > 0.0 && bars > 2 {
        let mut rrng = rng_from(day_seed, tags::SYNTH_ROTATION);
        let scrambled = s.scrambled();
        let mut order: Vec<usize> = (0..n).filter(|&i| scrambled[i]).collect();
        let m = order.len();
        order.shuffle(&mut rrng);
        let mut g: Vec<f64> = (1..bars)
            .map(|_| {
                let z: f64 = StandardNormal.sample(&mut rrng);
                p.rotation_vol * z
            })
            .collect();
        let mean = g.iter().sum::<f64>() / g.len() as f64;
        g.iter_mut().for_each(|x| *x -= mean);
        for (rank, &i) in order.iter().enumerate() {
            let sign = if rank < m / 2 { 1.0 } else { -1.0 };
            for (b, gb) in g.iter().enumerate() {
                out[[i, b + 1]] += sign * gb;
            }
        }
    }
    out.mapv_inplace(|r| r * vol_multiplier);
    out
}

/// Generates prices and ground truth for a scenario.
pub fn generate(scenario: &Scenario) -> Result<SynthMarket> {
    scenario.validate()?;
    let stable = scenario.loadings();
    let shifted = scenario.shifted_loadings();
    let multipliers = scenario.vol_multipliers();
    let days: Vec<Array2<f64>> = (0..scenario.days)
        .into_par_iter()
        .map(|d| {
            let l = if scenario.regime(d) == SHIFTED { &shifted } else { &stable };
            day_returns(scenario, d, l, multipliers[d])
        })
        .collect();

    let n = scenario.n_tickers;
    let bars = scenario.bars_per_day;
    let dates = scenario.dates();
    let mut timestamps = Vec::with_capacity(scenario.days * bars);
    for date in &dates {
        let open = date.and_hms_opt(9, 31, 0).expect("valid time");
        timestamps.extend((0..bars).map(|b| open + TimeDelta::minutes(b as i64)));
    }
    let mut prices = Array2::<f64>::zeros((n, scenario.days * bars));
    for i in 0..n {
        let mut logp = 100f64.ln();
        for (d, r) in days.iter().enumerate() {
            for b in 0..bars {
                logp += r[[i, b]];
                prices[[i, d * bars + b]] = logp.exp();
            }
        }
    }
    let panel = PricePanel::new(scenario.tickers(), timestamps, prices, TimeDelta::minutes(1))?;
    Ok(SynthMarket {
        panel,
        truth: GroundTruth {
            dates,
            regimes: scenario.regimes(),
            sectors: (0..n).map(|i| scenario.sector_of(i)).collect(),
            true_rv: scenario.true_rv(),
            vol_multipliers: multipliers,
        },
    })
}

/// Daily index RV of the scenario generated with `coupling`.
pub fn planted_auroc_signal(scenario: &Scenario, coupling: f64) -> Result<VolSeries> {
    if !(coupling >= 0.0) {
        return Err(Error::Config(format!("coupling must be non-negative, got {coupling}")));
    }
    let s = Scenario {
        coupling,
        ..scenario.clone()
    };
    let market = generate(&s)?;
    let returns = log_returns(&market.panel, false)?;
    realized_volatility(&returns, Horizon::Session, &IndexWeighting::Equal)
}

/// Planted-partition graph: `blocks` groups of `size` nodes, edge probability
/// `p_in` inside a block and `p_out` across. Features carry a one-hot block
/// indicator in the first `blocks` columns plus Gaussian noise of sd `noise`.
pub fn planted_partition(
    blocks: usize,
    size: usize,
    p_in: f64,
    p_out: f64,
    n_features: usize,
    noise: f64,
    seed: u64,
) -> Result<MarketGraph> {
    if n_features < blocks {
        return Err(Error::Config("n_features must cover the block indicator".into()));
    }
    let n = blocks * size;
    let mut rng = rng_from(seed, tags::SYNTH_LOADINGS);
    let mut edges = Vec::new();
    for u in 0..n {
        for v in u + 1..n {
            let p = if u / size == v / size { p_in } else { p_out };
            if rng.random::<f64>() < p {
                edges.push((u, v));
            }
        }
    }
    let x = Array2::from_shape_fn((n, n_features), |(i, f)| {
        let onehot = if f == i / size { 1.0 } else { 0.0 };
        let e: f64 = StandardNormal.sample(&mut rng);
        onehot + noise * e
    });
    MarketGraph::from_edges(n, &edges, x)
}

/// Erdős–Rényi graph with standard-normal noise features.
pub fn erdos_renyi(n: usize, p: f64, n_features: usize, seed: u64) -> Result<MarketGraph> {
    let mut rng = rng_from(seed, tags::SYNTH_LOADINGS);
    let mut edges = Vec::new();
    for u in 0..n {
        for v in u + 1..n {
            if rng.random::<f64>() < p {
                edges.push((u, v));
            }
        }
    }
    let x = Array2::from_shape_simple_fn((n, n_features), || StandardNormal.sample(&mut rng));
    MarketGraph::from_edges(n, &edges, x)
}
