//! Price loading, log returns and realized volatility.
//!
//! Bars are grouped into trading sessions by calendar date. Sessions must not
//! cross midnight; bars outside the configured trading hours are discarded at
//! load time.

use std::collections::{BTreeMap, BTreeSet, HashMap};
use std::io::{Read, Write};
use std::ops::Range;
use std::path::Path;

use chrono::{DateTime, NaiveDate, NaiveDateTime, NaiveTime, TimeDelta};
use log::{info, warn};
use ndarray::Array2;
use serde::{Deserialize, Serialize};

use crate::error::{Error, Result};

/// Column layout of a price CSV.
#[derive(Debug, Clone, Copy, PartialEq, Eq, Serialize, Deserialize, Default)]
#[serde(rename_all = "snake_case")]
pub enum CsvLayout {
    /// `timestamp,TICKER1,TICKER2,...`
    #[default]
    Wide,
    /// `timestamp,ticker,price`
    Long,
}

/// Trading hours of a session. A bar belongs to the session when its end
/// instant lies in `(open, close]`.
#[derive(Debug, Clone, Copy, PartialEq, Eq)]
pub struct SessionHours {
    pub open: NaiveTime,
    pub close: NaiveTime,
}

impl SessionHours {
    /// Parses `HH:MM-HH:MM`.
    pub fn parse(spec: &str) -> Result<Self> {
        let (open, close) = spec
            .split_once('-')
            .ok_or_else(|| Error::Config(format!("sessions must look like HH:MM-HH:MM, got {spec:?}")))?;
        let parse = |s: &str| {
            NaiveTime::parse_from_str(s.trim(), "%H:%M")
                .map_err(|e| Error::Config(format!("bad session time {s:?}: {e}")))
        };
        let hours = Self {
            open: parse(open)?,
            close: parse(close)?,
        };
        if hours.open >= hours.close {
            return Err(Error::Config(format!("session open must precede close in {spec:?}")));
        }
        Ok(hours)
    }

    pub fn contains(&self, t: NaiveTime) -> bool {
        t > self.open && t <= self.close
    }
}

impl std::fmt::Display for SessionHours {
    fn fmt(&self, f: &mut std::fmt::Formatter<'_>) -> std::fmt::Result {
        write!(f, "{}-{}", self.open.format("%H:%M"), self.close.format("%H:%M"))
    }
}

#[derive(Debug, Clone)]
pub struct IngestConfig {
    pub layout: CsvLayout,
    pub timestamp_column: String,
    pub ticker_column: String,
    pub price_column: String,
    pub bar_interval: TimeDelta,
    pub min_coverage: f64,
    pub sessions: Option<SessionHours>,
    pub include_overnight: bool,
}

impl Default for IngestConfig {
    fn default() -> Self {
        Self {
            layout: CsvLayout::Wide,
            timestamp_column: "timestamp".into(),
            ticker_column: "ticker".into(),
            price_column: "price".into(),
            bar_interval: TimeDelta::minutes(1),
            min_coverage: 0.95,
            sessions: None,
            include_overnight: false,
        }
    }
}

/// Aligned prices for `N` tickers over `T` bars.
#[derive(Debug, Clone, PartialEq)]
pub struct PricePanel {
    tickers: Vec<String>,
    timestamps: Vec<NaiveDateTime>,
    prices: Array2<f64>,
    bar_interval: TimeDelta,
}

impl PricePanel {
    /// Builds a panel, checking positivity, ordering and intra-session spacing.
    pub fn new(
        tickers: Vec<String>,
        timestamps: Vec<NaiveDateTime>,
        prices: Array2<f64>,
        bar_interval: TimeDelta,
    ) -> Result<Self> {
        if bar_interval <= TimeDelta::zero() {
            return Err(Error::Config("bar_interval must be positive".into()));
        }
        if prices.dim() != (tickers.len(), timestamps.len()) {
            return Err(Error::Validation(format!(
                "price matrix is {:?} but panel has {} tickers and {} timestamps",
                prices.dim(),
                tickers.len(),
                timestamps.len()
            )));
        }
        if tickers.is_empty() || timestamps.is_empty() {
            return Err(Error::Degenerate("empty price panel".into()));
        }
        for pair in timestamps.windows(2) {
            if pair[1] <= pair[0] {
                return Err(Error::Validation(format!("timestamps not strictly increasing at {}", pair[1])));
            }
            if pair[0].date() == pair[1].date() && pair[1] - pair[0] != bar_interval {
                return Err(Error::Validation(format!(
                    "bar spacing {} at {} differs from bar_interval {}",
                    pair[1] - pair[0],
                    pair[1],
                    bar_interval
                )));
            }
        }
        for ((n, t), &p) in prices.indexed_iter() {
            if !(p.is_finite() && p > 0.0) {
                return Err(Error::Validation(format!(
                    "non-positive price {p} for {} at {}",
                    tickers[n], timestamps[t]
                )));
            }
        }
        Ok(Self {
            tickers,
            timestamps,
            prices,
            bar_interval,
        })
    }

    pub fn tickers(&self) -> &[String] {
        &self.tickers
    }

    pub fn timestamps(&self) -> &[NaiveDateTime] {
        &self.timestamps
    }

    /// `N × T` price matrix.
    pub fn prices(&self) -> &Array2<f64> {
        &self.prices
    }

    pub fn bar_interval(&self) -> TimeDelta {
        self.bar_interval
    }

    pub fn n_tickers(&self) -> usize {
        self.tickers.len()
    }

    pub fn n_bars(&self) -> usize {
        self.timestamps.len()
    }
}

/// Log returns `r[n][t] = ln p(t,n) − ln p(t−Δt,n)`.
#[derive(Debug, Clone, PartialEq)]
pub struct ReturnMatrix {
    tickers: Vec<String>,
    timestamps: Vec<NaiveDateTime>,
    returns: Array2<f64>,
    bar_interval: TimeDelta,
}

impl ReturnMatrix {
    pub fn new(
        tickers: Vec<String>,
        timestamps: Vec<NaiveDateTime>,
        returns: Array2<f64>,
        bar_interval: TimeDelta,
    ) -> Result<Self> {
        if returns.dim() != (tickers.len(), timestamps.len()) {
            return Err(Error::Validation(format!(
                "return matrix is {:?} but has {} tickers and {} timestamps",
                returns.dim(),
                tickers.len(),
                timestamps.len()
            )));
        }
        if let Some(((n, t), _)) = returns.indexed_iter().find(|(_, r)| !r.is_finite()) {
            return Err(Error::NonFinite(format!("return for {} at {}", tickers[n], timestamps[t])));
        }
        if timestamps.windows(2).any(|w| w[1] <= w[0]) {
            return Err(Error::Validation("return timestamps not strictly increasing".into()));
        }
        Ok(Self {
            tickers,
            timestamps,
            returns,
            bar_interval,
        })
    }

    pub fn tickers(&self) -> &[String] {
        &self.tickers
    }

    /// End instant of each return.
    pub fn timestamps(&self) -> &[NaiveDateTime] {
        &self.timestamps
    }

    /// `N × M` matrix of log returns.
    pub fn returns(&self) -> &Array2<f64> {
        &self.returns
    }

    pub fn bar_interval(&self) -> TimeDelta {
        self.bar_interval
    }

    pub fn n_tickers(&self) -> usize {
        self.tickers.len()
    }

    pub fn n_bars(&self) -> usize {
        self.timestamps.len()
    }

    /// Contiguous column ranges of each trading session, in order.
    pub fn sessions(&self) -> Vec<(NaiveDate, Range<usize>)> {
        let mut out: Vec<(NaiveDate, Range<usize>)> = Vec::new();
        for (i, ts) in self.timestamps.iter().enumerate() {
            let day = ts.date();
            match out.last_mut() {
                Some((d, range)) if *d == day => range.end = i + 1,
                _ => out.push((day, i..i + 1)),
            }
        }
        out
    }

    /// Per-session summed log returns, `N × days`.
    pub fn daily_returns(&self) -> (Vec<NaiveDate>, Array2<f64>) {
        let sessions = self.sessions();
        let mut daily = Array2::<f64>::zeros((self.n_tickers(), sessions.len()));
        for (d, (_, range)) in sessions.iter().enumerate() {
            for n in 0..self.n_tickers() {
                daily[[n, d]] = self.returns.row(n).as_slice().map_or_else(
                    || range.clone().map(|t| self.returns[[n, t]]).sum(),
                    |row| row[range.clone()].iter().sum(),
                );
            }
        }
        (sessions.into_iter().map(|(d, _)| d).collect(), daily)
    }

    /// Equal-or-custom weighted cross-sectional mean return per bar.
    pub fn index_returns(&self, weighting: &IndexWeighting) -> Result<Vec<f64>> {
        let weights = weighting.weights(self.n_tickers())?;
        Ok((0..self.n_bars())
            .map(|t| {
                self.returns
                    .column(t)
                    .iter()
                    .zip(&weights)
                    .map(|(r, w)| r * w)
                    .sum()
            })
            .collect())
    }
}

/// Builds the per-session log returns of a panel. Session-boundary pairs are
/// excluded unless `include_overnight` is set.
pub fn log_returns(panel: &PricePanel, include_overnight: bool) -> Result<ReturnMatrix> {
    let ts = panel.timestamps();
    let logp = panel.prices().mapv(f64::ln);
    let keep: Vec<usize> = (1..ts.len())
        .filter(|&t| include_overnight || ts[t].date() == ts[t - 1].date())
        .collect();
    let mut returns = Array2::<f64>::zeros((panel.n_tickers(), keep.len()));
    for (j, &t) in keep.iter().enumerate() {
        for n in 0..panel.n_tickers() {
            returns[[n, j]] = logp[[n, t]] - logp[[n, t - 1]];
        }
    }
    ReturnMatrix::new(
        panel.tickers().to_vec(),
        keep.iter().map(|&t| ts[t]).collect(),
        returns,
        panel.bar_interval(),
    )
}

/// How per-ticker returns are combined into the market series.
#[derive(Debug, Clone, PartialEq, Default)]
pub enum IndexWeighting {
    #[default]
    Equal,
    Custom(Vec<f64>),
}

impl IndexWeighting {
    fn weights(&self, n: usize) -> Result<Vec<f64>> {
        match self {
            IndexWeighting::Equal => Ok(vec![1.0 / n as f64; n]),
            IndexWeighting::Custom(w) => {
                let total: f64 = w.iter().sum();
                if w.len() != n || !(total > 0.0) || w.iter().any(|x| !x.is_finite() || *x < 0.0) {
                    return Err(Error::Config(format!(
                        "custom index weights must be {n} non-negative values with positive sum"
                    )));
                }
                Ok(w.iter().map(|x| x / total).collect())
            }
        }
    }
}

/// Realized-variance window length.
#[derive(Debug, Clone, Copy, PartialEq, Eq, Serialize, Deserialize)]
#[serde(rename_all = "snake_case")]
pub enum Horizon {
    /// A fixed number of bars, chunked from the start of each session.
    Bars(usize),
    /// One window per trading session.
    Session,
}

impl Horizon {
    /// Converts a duration into a whole number of bars.
    pub fn from_duration(horizon: TimeDelta, bar_interval: TimeDelta) -> Result<Self> {
        let h = horizon.num_milliseconds();
        let b = bar_interval.num_milliseconds();
        if b <= 0 || h <= 0 || h % b != 0 {
            return Err(Error::Config(format!(
                "horizon {horizon} is not a positive multiple of bar_interval {bar_interval}"
            )));
        }
        Ok(Horizon::Bars((h / b) as usize))
    }
}

impl std::fmt::Display for Horizon {
    fn fmt(&self, f: &mut std::fmt::Formatter<'_>) -> std::fmt::Result {
        match self {
            Horizon::Bars(k) => write!(f, "{k}bars"),
            Horizon::Session => f.write_str("session"),
        }
    }
}

/// Realized variance per window of the market index.
#[derive(Debug, Clone, PartialEq, Serialize, Deserialize)]
pub struct VolSeries {
    pub horizon: Horizon,
    /// End instant of each window.
    pub timestamps: Vec<NaiveDateTime>,
    pub rv: Vec<f64>,
    /// `ln(rv)`, absent for zero-variance windows.
    pub log_rv: Vec<Option<f64>>,
}

impl VolSeries {
    pub fn from_rv(horizon: Horizon, timestamps: Vec<NaiveDateTime>, rv: Vec<f64>) -> Self {
        let log_rv = rv.iter().map(|&v| (v > 0.0).then(|| v.ln())).collect();
        Self {
            horizon,
            timestamps,
            rv,
            log_rv,
        }
    }

    pub fn len(&self) -> usize {
        self.rv.len()
    }

    pub fn is_empty(&self) -> bool {
        self.rv.is_empty()
    }

    /// Windows whose variance is zero and therefore have no log-RV.
    pub fn flagged(&self) -> Vec<usize> {
        self.log_rv
            .iter()
            .enumerate()
            .filter_map(|(i, v)| v.is_none().then_some(i))
            .collect()
    }

    pub fn sessions(&self) -> Vec<NaiveDate> {
        self.timestamps.iter().map(|t| t.date()).collect()
    }

    /// Sums window variances within each session.
    pub fn daily(&self) -> VolSeries {
        let mut days: Vec<(NaiveDateTime, f64)> = Vec::new();
        for (ts, rv) in self.timestamps.iter().zip(&self.rv) {
            match days.last_mut() {
                Some((last, acc)) if last.date() == ts.date() => {
                    *last = *ts;
                    *acc += rv;
                }
                _ => days.push((*ts, *rv)),
            }
        }
        let (timestamps, rv) = days.into_iter().unzip();
        VolSeries::from_rv(Horizon::Session, timestamps, rv)
    }
}

/// Sum of squared index returns over each `horizon` window within a session.
/// Trailing partial windows are dropped.
pub fn realized_volatility(returns: &ReturnMatrix, horizon: Horizon, weighting: &IndexWeighting) -> Result<VolSeries> {
    let index = returns.index_returns(weighting)?;
    let ts = returns.timestamps();
    let mut stamps = Vec::new();
    let mut rv = Vec::new();
    for (_, range) in returns.sessions() {
        let len = range.len();
        let chunk = match horizon {
            Horizon::Bars(0) => return Err(Error::Config("horizon must be at least one bar".into())),
            Horizon::Bars(k) => k,
            Horizon::Session => len,
        };
        let mut start = range.start;
        while start + chunk <= range.end {
            let sum: f64 = index[start..start + chunk].iter().map(|r| r * r).sum();
            stamps.push(ts[start + chunk - 1]);
            rv.push(sum);
            start += chunk;
        }
    }
    let series = VolSeries::from_rv(horizon, stamps, rv);
    let flagged = series.flagged();
    if !flagged.is_empty() {
        warn!("{} zero-variance RV windows flagged", flagged.len());
    }
    Ok(series)
}

/// Outcome of loading a price file.
#[derive(Debug, Clone)]
pub struct LoadedPanel {
    pub panel: PricePanel,
    pub report: IngestReport,
}

#[derive(Debug, Clone, Default, PartialEq)]
pub struct IngestReport {
    /// Tickers removed by the coverage filter with their coverage.
    pub dropped: Vec<(String, f64)>,
    /// Missing cells forward-filled after filtering.
    pub filled: usize,
    /// Grid bars inserted where the file skipped whole bars.
    pub inserted_bars: usize,
    /// Rows discarded for lying outside trading hours.
    pub outside_session: usize,
}

fn parse_timestamp(raw: &str) -> Option<(NaiveDateTime, Option<i32>)> {
    let s = raw.trim();
    if let Ok(dt) = DateTime::parse_from_rfc3339(s) {
        return Some((dt.naive_local(), Some(dt.offset().local_minus_utc())));
    }
    const FORMATS: [&str; 6] = [
        "%Y-%m-%dT%H:%M:%S%.f",
        "%Y-%m-%d %H:%M:%S%.f",
        "%Y-%m-%dT%H:%M:%S",
        "%Y-%m-%d %H:%M:%S",
        "%Y-%m-%dT%H:%M",
        "%Y-%m-%d %H:%M",
    ];
    for fmt in FORMATS {
        if let Ok(dt) = NaiveDateTime::parse_from_str(s, fmt) {
            return Some((dt, None));
        }
    }
    NaiveDate::parse_from_str(s, "%Y-%m-%d")
        .ok()
        .map(|d| (d.and_time(NaiveTime::MIN), None))
}

struct RawObservations {
    tickers: Vec<String>,
    /// (timestamp, ticker index, price, line)
    cells: Vec<(NaiveDateTime, usize, f64, u64)>,
}

fn parse_error(path: &Path, line: u64, message: impl Into<String>) -> Error {
    Error::Parse {
        path: path.to_path_buf(),
        line,
        message: message.into(),
    }
}

fn read_raw(path: &Path, cfg: &IngestConfig) -> Result<RawObservations> {
    let mut reader = csv::ReaderBuilder::new()
        .has_headers(true)
        .trim(csv::Trim::All)
        .flexible(false)
        .from_path(path)?;
    let headers = reader.headers()?.clone();
    let col = |name: &str| {
        headers
            .iter()
            .position(|h| h == name)
            .ok_or_else(|| parse_error(path, 1, format!("missing column {name:?}")))
    };
    let ts_col = col(&cfg.timestamp_column)?;
    let mut offset: Option<i32> = None;
    let mut stamp = |raw: &str, line: u64| -> Result<NaiveDateTime> {
        let (ts, off) = parse_timestamp(raw).ok_or_else(|| parse_error(path, line, format!("bad timestamp {raw:?}")))?;
        if let Some(o) = off {
            match offset {
                None => offset = Some(o),
                Some(prev) if prev != o => {
                    return Err(Error::Validation(format!("line {line}: mixed timezone offsets in timestamps")));
                }
                _ => {}
            }
        }
        Ok(ts)
    };
    let mut cells = Vec::new();
    let tickers: Vec<String>;
    match cfg.layout {
        CsvLayout::Wide => {
            let ticker_cols: Vec<usize> = (0..headers.len()).filter(|&i| i != ts_col).collect();
            tickers = ticker_cols.iter().map(|&i| headers[i].to_string()).collect();
            if tickers.is_empty() {
                return Err(parse_error(path, 1, "no ticker columns"));
            }
            for record in reader.records() {
                let record = record?;
                let line = record.position().map_or(0, |p| p.line());
                let ts = stamp(&record[ts_col], line)?;
                for (n, &c) in ticker_cols.iter().enumerate() {
                    let cell = &record[c];
                    if cell.is_empty() {
                        continue;
                    }
                    let price: f64 = cell
                        .parse()
                        .map_err(|_| parse_error(path, line, format!("bad price {cell:?} for {}", tickers[n])))?;
                    cells.push((ts, n, price, line));
                }
            }
        }
        CsvLayout::Long => {
            let tk_col = col(&cfg.ticker_column)?;
            let px_col = col(&cfg.price_column)?;
            let mut index: HashMap<String, usize> = HashMap::new();
            let mut names = Vec::new();
            for record in reader.records() {
                let record = record?;
                let line = record.position().map_or(0, |p| p.line());
                let ts = stamp(&record[ts_col], line)?;
                let name = &record[tk_col];
                if name.is_empty() {
                    return Err(parse_error(path, line, "empty ticker"));
                }
                let n = *index.entry(name.to_string()).or_insert_with(|| {
                    names.push(name.to_string());
                    names.len() - 1
                });
                let cell = &record[px_col];
                if cell.is_empty() {
                    continue;
                }
                let price: f64 = cell
                    .parse()
                    .map_err(|_| parse_error(path, line, format!("bad price {cell:?} for {name}")))?;
                cells.push((ts, n, price, line));
            }
            tickers = names;
        }
    }
    for &(ts, n, price, line) in &cells {
        if !(price.is_finite() && price > 0.0) {
            return Err(Error::Validation(format!(
                "row {line}: non-positive price {price} for {} at {ts}",
                tickers[n]
            )));
        }
    }
    Ok(RawObservations { tickers, cells })
}

/// Loads, validates and aligns a price CSV.
pub fn load_price_csv(path: impl AsRef<Path>, cfg: &IngestConfig) -> Result<LoadedPanel> {
    let path = path.as_ref();
    if !(0.0..=1.0).contains(&cfg.min_coverage) {
        return Err(Error::Config("min_coverage must lie in [0, 1]".into()));
    }
    let raw = read_raw(path, cfg)?;
    let mut report = IngestReport::default();

    if cfg.layout == CsvLayout::Wide {
        let mut last: Option<(NaiveDateTime, u64)> = None;
        for &(ts, _, _, line) in &raw.cells {
            if let Some((prev, prev_line)) = last {
                if line != prev_line && ts <= prev {
                    return Err(Error::Validation(format!("row {line}: timestamp {ts} not after {prev}")));
                }
            }
            last = Some((ts, line));
        }
    }

    // Keep in-session observations; reject duplicates.
    let mut observed: BTreeMap<NaiveDateTime, HashMap<usize, f64>> = BTreeMap::new();
    let mut outside_rows = BTreeSet::new();
    for &(ts, n, price, line) in &raw.cells {
        if let Some(hours) = cfg.sessions {
            if !hours.contains(ts.time()) {
                outside_rows.insert(line);
                continue;
            }
        }
        if observed.entry(ts).or_default().insert(n, price).is_some() {
            return Err(Error::Validation(format!(
                "row {line}: duplicate observation for {} at {ts}",
                raw.tickers[n]
            )));
        }
    }
    report.outside_session = outside_rows.len();

    // Complete the bar grid inside each session.
    let step = cfg.bar_interval;
    if step <= TimeDelta::zero() {
        return Err(Error::Config("bar_interval must be positive".into()));
    }
    let mut grid: Vec<NaiveDateTime> = Vec::with_capacity(observed.len());
    for &ts in observed.keys() {
        if let Some(&prev) = grid.last() {
            if prev.date() == ts.date() {
                let gap = (ts - prev).num_milliseconds();
                let unit = step.num_milliseconds();
                if gap % unit != 0 {
                    return Err(Error::Validation(format!(
                        "timestamp {ts} is not on the {step} bar grid after {prev}"
                    )));
                }
                let mut fill = prev + step;
                while fill < ts {
                    grid.push(fill);
                    report.inserted_bars += 1;
                    fill += step;
                }
            }
        }
        grid.push(ts);
    }
    if grid.is_empty() {
        return Err(Error::Degenerate(format!("{}: no observations in session", path.display())));
    }

    let total = grid.len() as f64;
    let mut keep = Vec::new();
    for (n, name) in raw.tickers.iter().enumerate() {
        let count = observed.values().filter(|row| row.contains_key(&n)).count();
        let coverage = count as f64 / total;
        if coverage < cfg.min_coverage || count == 0 {
            info!("dropping {name}: coverage {coverage:.3} below {}", cfg.min_coverage);
            report.dropped.push((name.clone(), coverage));
        } else {
            keep.push(n);
        }
    }
    if keep.is_empty() {
        return Err(Error::Degenerate("no ticker survives the coverage filter".into()));
    }

    let mut prices = Array2::<f64>::from_elem((keep.len(), grid.len()), f64::NAN);
    for (t, ts) in grid.iter().enumerate() {
        if let Some(row) = observed.get(ts) {
            for (k, &n) in keep.iter().enumerate() {
                if let Some(&p) = row.get(&n) {
                    prices[[k, t]] = p;
                }
            }
        }
    }
    for mut row in prices.rows_mut() {
        let first = row.iter().copied().find(|p| !p.is_nan()).unwrap_or(f64::NAN);
        let mut last = first;
        for p in row.iter_mut() {
            if p.is_nan() {
                *p = last;
                report.filled += 1;
            } else {
                last = *p;
            }
        }
    }

    let panel = PricePanel::new(
        keep.iter().map(|&n| raw.tickers[n].clone()).collect(),
        grid,
        prices,
        cfg.bar_interval,
    )?;
    Ok(LoadedPanel { panel, report })
}

/// Writes a panel as a wide CSV readable by [`load_price_csv`].
pub fn write_price_csv(panel: &PricePanel, path: impl AsRef<Path>) -> Result<()> {
    let mut w = csv::Writer::from_path(path)?;
    let mut header = vec!["timestamp".to_string()];
    header.extend(panel.tickers().iter().cloned());
    w.write_record(&header)?;
    let mut record = Vec::with_capacity(header.len());
    for (t, ts) in panel.timestamps().iter().enumerate() {
        record.clear();
        record.push(ts.format(STAMP).to_string());
        for n in 0..panel.n_tickers() {
            record.push(format!("{}", panel.prices()[[n, t]]));
        }
        w.write_record(&record)?;
    }
    w.flush()?;
    Ok(())
}

const STAMP: &str = "%Y-%m-%dT%H:%M:%S";

fn read_stamp(raw: &str, line: u64) -> Result<NaiveDateTime> {
    NaiveDateTime::parse_from_str(raw, STAMP)
        .map_err(|_| Error::Validation(format!("line {line}: bad timestamp {raw:?}")))
}

impl ReturnMatrix {
    /// Wide `timestamp,TICKER...` rows. Values round-trip exactly.
    pub fn write_csv<W: Write>(&self, w: W) -> Result<()> {
        let mut w = csv::Writer::from_writer(w);
        let mut header = vec!["timestamp".to_string()];
        header.extend(self.tickers.iter().cloned());
        w.write_record(&header)?;
        let mut record = Vec::with_capacity(header.len());
        for (t, ts) in self.timestamps.iter().enumerate() {
            record.clear();
            record.push(ts.format(STAMP).to_string());
            record.extend(self.returns.column(t).iter().map(|r| format!("{r:?}")));
            w.write_record(&record)?;
        }
        w.flush()?;
        Ok(())
    }

    pub fn read_csv<R: Read>(r: R, bar_interval: TimeDelta) -> Result<Self> {
        let mut r = csv::Reader::from_reader(r);
        let tickers: Vec<String> = r.headers()?.iter().skip(1).map(str::to_string).collect();
        let mut timestamps = Vec::new();
        let mut values = Vec::new();
        for rec in r.records() {
            let rec = rec?;
            let line = rec.position().map_or(0, |p| p.line());
            timestamps.push(read_stamp(&rec[0], line)?);
            for cell in rec.iter().skip(1) {
                values.push(
                    cell.parse::<f64>()
                        .map_err(|_| Error::Validation(format!("line {line}: bad return {cell:?}")))?,
                );
            }
        }
        let t = timestamps.len();
        let returns = Array2::from_shape_vec((t, tickers.len()), values)
            .map_err(|e| Error::Validation(format!("return table is ragged: {e}")))?
            .reversed_axes()
            .as_standard_layout()
            .into_owned();
        Self::new(tickers, timestamps, returns, bar_interval)
    }
}

impl VolSeries {
    /// `timestamp,rv,log_rv`; the log column is recomputed on read.
    pub fn write_csv<W: Write>(&self, w: W) -> Result<()> {
        let mut w = csv::Writer::from_writer(w);
        w.write_record(["timestamp", "rv", "log_rv"])?;
        for ((ts, rv), l) in self.timestamps.iter().zip(&self.rv).zip(&self.log_rv) {
            w.write_record([
                ts.format(STAMP).to_string(),
                format!("{rv:?}"),
                l.map_or(String::new(), |v| format!("{v:?}")),
            ])?;
        }
        w.flush()?;
        Ok(())
    }

    pub fn read_csv<R: Read>(r: R, horizon: Horizon) -> Result<Self> {
        let mut r = csv::Reader::from_reader(r);
        let mut timestamps = Vec::new();
        let mut rv = Vec::new();
        for rec in r.records() {
            let rec = rec?;
            let line = rec.position().map_or(0, |p| p.line());
            timestamps.push(read_stamp(&rec[0], line)?);
            rv.push(
                rec[1]
                    .parse::<f64>()
                    .map_err(|_| Error::Validation(format!("line {line}: bad rv {:?}", &rec[1])))?,
            );
        }
        Ok(Self::from_rv(horizon, timestamps, rv))
    }
}
