//! Series ingestion and panel construction.
//!
//! Raw FRED-style CSV files (`DATE,VALUE`, `.` for missing) are parsed into
//! [`RawSeries`], aggregated to quarters by within-quarter mean, growth
//! transformed where the variable is a stock (PCE, REVOLSL), z-scored on a
//! trailing window that includes the current observation, and intersected
//! into a [`QuarterlyPanel`] or [`MonthlyPanel`].

use std::collections::BTreeMap;
use std::fmt;
use std::path::{Path, PathBuf};
use std::str::FromStr;

use chrono::{Datelike, NaiveDate};
use thiserror::Error;

use crate::clifford::format_f64;

/// Smallest trailing-window standard deviation accepted by standardization.
pub const MIN_WINDOW_STD: f64 = 1e-12;

#[derive(Debug, Error)]
pub enum PanelError {
    #[error("cannot read {path}: {source}")]
    Io {
        path: PathBuf,
        #[source]
        source: std::io::Error,
    },
    #[error("bad header {found:?}: expected two columns DATE,VALUE")]
    Header { found: String },
    #[error("row {row}: expected 2 fields, found {found}")]
    FieldCount { row: usize, found: usize },
    #[error("row {row}: malformed date {value:?}")]
    MalformedDate { row: usize, value: String },
    #[error("row {row}: non-numeric value {value:?}")]
    NonNumeric { row: usize, value: String },
    #[error("row {row}: duplicate date {date}")]
    DuplicateDate { row: usize, date: NaiveDate },
    #[error("row {row}: date {date} is not after the previous date")]
    NonIncreasing { row: usize, date: NaiveDate },
    #[error("row {row}: csv error: {message}")]
    Csv { row: usize, message: String },
    #[error("series {name}: needs at least {needed} observations, has {found}")]
    TooShort { name: String, needed: usize, found: usize },
    #[error("series {name}: cannot infer monthly or quarterly frequency")]
    IrregularFrequency { name: String },
    #[error("series {name}: insufficient monthly frequency (series is quarterly)")]
    InsufficientFrequency { name: String },
    #[error("series {name}: non-positive predecessor value before {date}")]
    NonPositivePredecessor { name: String, date: NaiveDate },
    #[error("series {name}: degenerate flat window ending {date} (std < 1e-12)")]
    FlatWindow { name: String, date: NaiveDate },
    #[error("panel date intersection is empty")]
    EmptyIntersection,
    #[error("panel row {row}: {message}")]
    PanelFile { row: usize, message: String },
    #[error("standardization window must be at least 2, got {0}")]
    InvalidWindow(usize),
    #[error("invalid period label {0:?}")]
    Period(String),
}

pub type Result<T> = std::result::Result<T, PanelError>;

/// Calendar quarter, displayed as `1980Q1`.
#[derive(Debug, Clone, Copy, PartialEq, Eq, PartialOrd, Ord, Hash)]
pub struct Quarter {
    pub year: i32,
    /// 1..=4
    pub q: u8,
}

impl Quarter {
    pub fn new(year: i32, q: u8) -> Option<Self> {
        (1..=4).contains(&q).then_some(Quarter { year, q })
    }

    pub fn of_date(d: NaiveDate) -> Self {
        Quarter { year: d.year(), q: ((d.month() - 1) / 3 + 1) as u8 }
    }

    pub fn start_date(&self) -> NaiveDate {
        NaiveDate::from_ymd_opt(self.year, u32::from(self.q - 1) * 3 + 1, 1).expect("valid quarter")
    }

    /// Sequential index, `year * 4 + (q - 1)`.
    pub fn ordinal(&self) -> i64 {
        i64::from(self.year) * 4 + i64::from(self.q - 1)
    }

    pub fn from_ordinal(n: i64) -> Self {
        Quarter { year: n.div_euclid(4) as i32, q: (n.rem_euclid(4) + 1) as u8 }
    }

    pub fn next(&self) -> Self {
        Self::from_ordinal(self.ordinal() + 1)
    }
}

impl fmt::Display for Quarter {
    fn fmt(&self, f: &mut fmt::Formatter<'_>) -> fmt::Result {
        write!(f, "{}Q{}", self.year, self.q)
    }
}

impl FromStr for Quarter {
    type Err = PanelError;
    fn from_str(s: &str) -> Result<Self> {
        let bad = || PanelError::Period(s.to_string());
        let (y, q) = s.trim().split_once(['Q', 'q']).ok_or_else(bad)?;
        let year: i32 = y.parse().map_err(|_| bad())?;
        let q: u8 = q.parse().map_err(|_| bad())?;
        Quarter::new(year, q).ok_or_else(bad)
    }
}

/// Calendar month, displayed as `1980-01`.
#[derive(Debug, Clone, Copy, PartialEq, Eq, PartialOrd, Ord, Hash)]
pub struct Month {
    pub year: i32,
    pub month: u8,
}

impl Month {
    pub fn of_date(d: NaiveDate) -> Self {
        Month { year: d.year(), month: d.month() as u8 }
    }

    pub fn ordinal(&self) -> i64 {
        i64::from(self.year) * 12 + i64::from(self.month - 1)
    }

    pub fn start_date(&self) -> NaiveDate {
        NaiveDate::from_ymd_opt(self.year, u32::from(self.month), 1).expect("valid month")
    }

    pub fn quarter(&self) -> Quarter {
        Quarter { year: self.year, q: (self.month - 1) / 3 + 1 }
    }
}

impl fmt::Display for Month {
    fn fmt(&self, f: &mut fmt::Formatter<'_>) -> fmt::Result {
        write!(f, "{}-{:02}", self.year, self.month)
    }
}

impl FromStr for Month {
    type Err = PanelError;
    fn from_str(s: &str) -> Result<Self> {
        let bad = || PanelError::Period(s.to_string());
        let mut it = s.trim().split('-');
        let year: i32 = it.next().ok_or_else(bad)?.parse().map_err(|_| bad())?;
        let month: u8 = it.next().ok_or_else(bad)?.parse().map_err(|_| bad())?;
        if !(1..=12).contains(&month) || it.next().is_some_and(|d| d.parse::<u8>().is_err()) {
            return Err(bad());
        }
        Ok(Month { year, month })
    }
}

/// A named, strictly increasing, finite series.
#[derive(Debug, Clone, PartialEq)]
pub struct RawSeries {
    pub name: String,
    pub observations: Vec<(NaiveDate, f64)>,
}

impl RawSeries {
    /// Build a series, enforcing increasing dates and finite values.
    pub fn new(name: impl Into<String>, observations: Vec<(NaiveDate, f64)>) -> Result<Self> {
        for (i, w) in observations.windows(2).enumerate() {
            if w[1].0 == w[0].0 {
                return Err(PanelError::DuplicateDate { row: i + 2, date: w[1].0 });
            }
            if w[1].0 < w[0].0 {
                return Err(PanelError::NonIncreasing { row: i + 2, date: w[1].0 });
            }
        }
        if let Some(i) = observations.iter().position(|(_, v)| !v.is_finite()) {
            return Err(PanelError::NonNumeric {
                row: i + 1,
                value: observations[i].1.to_string(),
            });
        }
        Ok(RawSeries { name: name.into(), observations })
    }

    pub fn len(&self) -> usize {
        self.observations.len()
    }

    pub fn is_empty(&self) -> bool {
        self.observations.is_empty()
    }

    pub fn values(&self) -> impl Iterator<Item = f64> + '_ {
        self.observations.iter().map(|(_, v)| *v)
    }

    /// Infer sampling frequency from month gaps.
    pub fn frequency(&self) -> Result<Frequency> {
        let months: Vec<i64> = self.observations.iter().map(|(d, _)| Month::of_date(*d).ordinal()).collect();
        let quarter_starts = self.observations.iter().all(|(d, _)| (d.month() - 1) % 3 == 0);
        let gaps: Vec<i64> = months.windows(2).map(|w| w[1] - w[0]).collect();
        if gaps.iter().any(|&g| g <= 0) {
            // two observations inside one month
            return Err(PanelError::IrregularFrequency { name: self.name.clone() });
        }
        if quarter_starts && gaps.iter().all(|g| g % 3 == 0) && !gaps.is_empty() {
            Ok(Frequency::Quarterly)
        } else if gaps.contains(&1) {
            Ok(Frequency::Monthly)
        } else {
            Err(PanelError::IrregularFrequency { name: self.name.clone() })
        }
    }
}

#[derive(Debug, Clone, Copy, PartialEq, Eq)]
pub enum Frequency {
    Monthly,
    Quarterly,
}

/// Rows dropped while loading a CSV file.
#[derive(Debug, Clone, Default, PartialEq, Eq)]
pub struct LoadReport {
    pub missing_dropped: usize,
}

fn parse_date(s: &str) -> Option<NaiveDate> {
    NaiveDate::parse_from_str(s.trim(), "%Y-%m-%d").ok()
}

/// Parse CSV bytes. `name` labels the series in later errors.
pub fn parse_csv(bytes: &[u8], name: &str) -> Result<(RawSeries, LoadReport)> {
    let mut rdr = csv::ReaderBuilder::new()
        .has_headers(true)
        .flexible(true)
        .trim(csv::Trim::All)
        .from_reader(bytes);
    let header = rdr
        .headers()
        .map_err(|e| PanelError::Csv { row: 1, message: e.to_string() })?
        .clone();
    let date_col = header.get(0).unwrap_or("");
    if header.len() != 2 || !(date_col.eq_ignore_ascii_case("DATE") || date_col.eq_ignore_ascii_case("observation_date")) {
        return Err(PanelError::Header { found: header.iter().collect::<Vec<_>>().join(",") });
    }
    let mut observations: Vec<(NaiveDate, f64)> = Vec::new();
    let mut report = LoadReport::default();
    for (i, rec) in rdr.records().enumerate() {
        // header is row 1
        let row = i + 2;
        let rec = rec.map_err(|e| PanelError::Csv { row, message: e.to_string() })?;
        if rec.len() != 2 {
            return Err(PanelError::FieldCount { row, found: rec.len() });
        }
        let date = parse_date(&rec[0])
            .ok_or_else(|| PanelError::MalformedDate { row, value: rec[0].to_string() })?;
        if let Some((prev, _)) = observations.last() {
            if date == *prev {
                return Err(PanelError::DuplicateDate { row, date });
            }
            if date < *prev {
                return Err(PanelError::NonIncreasing { row, date });
            }
        }
        let raw = &rec[1];
        if raw == "." {
            report.missing_dropped += 1;
            continue;
        }
        let value: f64 = raw
            .parse()
            .ok()
            .filter(|v: &f64| v.is_finite())
            .ok_or_else(|| PanelError::NonNumeric { row, value: raw.to_string() })?;
        observations.push((date, value));
    }
    Ok((RawSeries { name: name.to_string(), observations }, report))
}

/// Load a CSV file; the series is named after the file stem.
pub fn load_csv(path: impl AsRef<Path>) -> Result<(RawSeries, LoadReport)> {
    let path = path.as_ref();
    let bytes = std::fs::read(path).map_err(|source| PanelError::Io { path: path.to_path_buf(), source })?;
    let name = path.file_stem().map(|s| s.to_string_lossy().into_owned()).unwrap_or_default();
    parse_csv(&bytes, &name)
}

/// Quarters dropped during aggregation because months were missing.
#[derive(Debug, Clone, Default, PartialEq, Eq)]
pub struct AggregationReport {
    pub dropped_quarters: Vec<Quarter>,
}

/// Aggregate monthly data to quarterly means; quarterly input passes through.
/// Output is dated at quarter start.
pub fn to_quarterly(s: &RawSeries) -> Result<(RawSeries, AggregationReport)> {
    if s.is_empty() {
        return Err(PanelError::TooShort { name: s.name.clone(), needed: 1, found: 0 });
    }
    let freq = if s.len() == 1 {
        if (s.observations[0].0.month() - 1) % 3 == 0 {
            Frequency::Quarterly
        } else {
            Frequency::Monthly
        }
    } else {
        s.frequency()?
    };
    match freq {
        Frequency::Quarterly => {
            let obs = s
                .observations
                .iter()
                .map(|(d, v)| (Quarter::of_date(*d).start_date(), *v))
                .collect();
            Ok((RawSeries { name: s.name.clone(), observations: obs }, AggregationReport::default()))
        }
        Frequency::Monthly => {
            let mut groups: BTreeMap<Quarter, Vec<f64>> = BTreeMap::new();
            for (d, v) in &s.observations {
                groups.entry(Quarter::of_date(*d)).or_default().push(*v);
            }
            let mut report = AggregationReport::default();
            let mut obs = Vec::new();
            for (q, vals) in groups {
                if vals.len() == 3 {
                    obs.push((q.start_date(), vals.iter().sum::<f64>() / 3.0));
                } else {
                    report.dropped_quarters.push(q);
                }
            }
            Ok((RawSeries { name: s.name.clone(), observations: obs }, report))
        }
    }
}

/// Growth definition for stock variables.
#[derive(Debug, Clone, Copy, PartialEq, Eq, Default)]
pub enum GrowthKind {
    /// `100 (x_t / x_{t-1} - 1)`
    #[default]
    Percent,
    /// `100 ln(x_t / x_{t-1})`
    LogDiff,
}

impl FromStr for GrowthKind {
    type Err = String;
    fn from_str(s: &str) -> std::result::Result<Self, String> {
        match s {
            "percent" => Ok(GrowthKind::Percent),
            "logdiff" | "log_diff" => Ok(GrowthKind::LogDiff),
            other => Err(format!("unknown growth kind {other:?} (percent|logdiff)")),
        }
    }
}

impl fmt::Display for GrowthKind {
    fn fmt(&self, f: &mut fmt::Formatter<'_>) -> fmt::Result {
        f.write_str(match self {
            GrowthKind::Percent => "percent",
            GrowthKind::LogDiff => "logdiff",
        })
    }
}

/// Period-over-period growth; the first observation is dropped.
pub fn growth_transform(s: &RawSeries, kind: GrowthKind) -> Result<RawSeries> {
    if s.len() < 2 {
        return Err(PanelError::TooShort { name: s.name.clone(), needed: 2, found: s.len() });
    }
    let mut obs = Vec::with_capacity(s.len() - 1);
    for w in s.observations.windows(2) {
        let (prev, cur) = (w[0].1, w[1].1);
        if prev <= 0.0 {
            return Err(PanelError::NonPositivePredecessor { name: s.name.clone(), date: w[1].0 });
        }
        let g = match kind {
            GrowthKind::Percent => 100.0 * (cur / prev - 1.0),
            GrowthKind::LogDiff => {
                if cur <= 0.0 {
                    return Err(PanelError::NonPositivePredecessor { name: s.name.clone(), date: w[1].0 });
                }
                100.0 * (cur / prev).ln()
            }
        };
        obs.push((w[1].0, g));
    }
    Ok(RawSeries { name: s.name.clone(), observations: obs })
}

/// Trailing-window mean and sample standard deviation.
#[derive(Debug, Clone, Copy, PartialEq)]
pub struct Moments {
    pub mean: f64,
    pub std: f64,
}

impl Moments {
    pub fn of(values: &[f64]) -> Self {
        let n = values.len() as f64;
        let mean = values.iter().sum::<f64>() / n;
        let ss: f64 = values.iter().map(|v| (v - mean) * (v - mean)).sum();
        let std = if values.len() > 1 { (ss / (n - 1.0)).sqrt() } else { 0.0 };
        Moments { mean, std }
    }

    pub fn standardize(&self, x: f64) -> f64 {
        (x - self.mean) / self.std
    }

    pub fn destandardize(&self, z: f64) -> f64 {
        z * self.std + self.mean
    }
}

/// A z-scored series with the moments used at each date.
#[derive(Debug, Clone, PartialEq)]
pub struct Standardized {
    pub series: RawSeries,
    pub moments: Vec<Moments>,
}

/// Rolling z-score over the trailing `window` observations ending at t.
pub fn rolling_standardize(s: &RawSeries, window: usize) -> Result<Standardized> {
    if window < 2 {
        return Err(PanelError::InvalidWindow(window));
    }
    if s.len() < window {
        return Err(PanelError::TooShort { name: s.name.clone(), needed: window, found: s.len() });
    }
    let values: Vec<f64> = s.values().collect();
    let mut obs = Vec::with_capacity(s.len() + 1 - window);
    let mut moments = Vec::with_capacity(obs.capacity());
    for end in window - 1..values.len() {
        let m = Moments::of(&values[end + 1 - window..=end]);
        let date = s.observations[end].0;
        if !(m.std >= MIN_WINDOW_STD) {
            return Err(PanelError::FlatWindow { name: s.name.clone(), date });
        }
        obs.push((date, m.standardize(values[end])));
        moments.push(m);
    }
    Ok(Standardized { series: RawSeries { name: s.name.clone(), observations: obs }, moments })
}

#[derive(Debug, Clone, Copy, PartialEq)]
pub struct PanelConfig {
    pub window: usize,
    pub growth: GrowthKind,
}

impl Default for PanelConfig {
    fn default() -> Self {
        PanelConfig { window: 8, growth: GrowthKind::Percent }
    }
}

/// The five input series, by role.
#[derive(Debug, Clone)]
pub struct PanelInputs {
    pub unrate: RawSeries,
    pub pce: RawSeries,
    pub psavert: RawSeries,
    pub revolsl: RawSeries,
    pub corcacbs: RawSeries,
}

/// Aggregation drops per series, keyed by series name.
#[derive(Debug, Clone, Default, PartialEq)]
pub struct PanelReport {
    pub dropped_quarters: Vec<(String, Vec<Quarter>)>,
}

/// Standardized quarterly model inputs `(u, s, r, v)` and target `y`.
#[derive(Debug, Clone, PartialEq)]
pub struct QuarterlyPanel {
    pub quarters: Vec<Quarter>,
    pub inputs: Vec<[f64; 4]>,
    pub target: Vec<f64>,
    pub target_moments: Vec<Moments>,
}

pub const QUARTERLY_HEADER: &str = "quarter,u,s,r,v,y";
pub const MOMENTS_HEADER: &str = "quarter,y_mean,y_std";
pub const MONTHLY_HEADER: &str = "month,u,s,r,v";

fn intersect_dates(columns: &[&Standardized]) -> Vec<NaiveDate> {
    let mut common: Vec<NaiveDate> = columns[0].series.observations.iter().map(|(d, _)| *d).collect();
    for c in &columns[1..] {
        let dates: std::collections::BTreeSet<NaiveDate> = c.series.observations.iter().map(|(d, _)| *d).collect();
        common.retain(|d| dates.contains(d));
    }
    common
}

fn lookup(col: &Standardized, date: NaiveDate) -> (f64, Moments) {
    let i = col
        .series
        .observations
        .binary_search_by_key(&date, |(d, _)| *d)
        .expect("date from intersection");
    (col.series.observations[i].1, col.moments[i])
}

impl QuarterlyPanel {
    pub fn len(&self) -> usize {
        self.quarters.len()
    }

    pub fn is_empty(&self) -> bool {
        self.quarters.is_empty()
    }

    /// Build a panel from already-standardized rows with identity target moments.
    pub fn from_rows(quarters: Vec<Quarter>, inputs: Vec<[f64; 4]>, target: Vec<f64>) -> Self {
        let n = quarters.len();
        assert_eq!(inputs.len(), n);
        assert_eq!(target.len(), n);
        QuarterlyPanel { quarters, inputs, target, target_moments: vec![Moments { mean: 0.0, std: 1.0 }; n] }
    }

    /// Consecutive quarters starting at `start`.
    pub fn synthetic(start: Quarter, inputs: Vec<[f64; 4]>, target: Vec<f64>) -> Self {
        let quarters = (0..inputs.len() as i64).map(|k| Quarter::from_ordinal(start.ordinal() + k)).collect();
        Self::from_rows(quarters, inputs, target)
    }

    pub fn index_of(&self, q: Quarter) -> Option<usize> {
        self.quarters.binary_search(&q).ok()
    }

    pub fn destandardize(&self, t: usize, z: f64) -> f64 {
        self.target_moments[t].destandardize(z)
    }

    pub fn to_csv(&self) -> String {
        let mut out = String::from(QUARTERLY_HEADER);
        out.push('\n');
        for t in 0..self.len() {
            let x = self.inputs[t];
            out.push_str(&format!(
                "{},{},{},{},{},{}\n",
                self.quarters[t],
                format_f64(x[0]),
                format_f64(x[1]),
                format_f64(x[2]),
                format_f64(x[3]),
                format_f64(self.target[t])
            ));
        }
        out
    }

    pub fn moments_csv(&self) -> String {
        let mut out = String::from(MOMENTS_HEADER);
        out.push('\n');
        for (q, m) in self.quarters.iter().zip(&self.target_moments) {
            out.push_str(&format!("{},{},{}\n", q, format_f64(m.mean), format_f64(m.std)));
        }
        out
    }

    /// Parse a panel CSV, optionally with its target-moments sidecar.
    pub fn parse(panel: &str, moments: Option<&str>) -> Result<Self> {
        let rows = parse_table(panel, QUARTERLY_HEADER, 6)?;
        let mut quarters = Vec::with_capacity(rows.len());
        let mut inputs = Vec::with_capacity(rows.len());
        let mut target = Vec::with_capacity(rows.len());
        for (row, (label, vals)) in rows.into_iter().enumerate() {
            let q: Quarter = label.parse().map_err(|_| PanelError::PanelFile {
                row: row + 2,
                message: format!("bad quarter {label:?}"),
            })?;
            if quarters.last().is_some_and(|p| *p >= q) {
                return Err(PanelError::PanelFile { row: row + 2, message: "quarters not increasing".into() });
            }
            quarters.push(q);
            inputs.push([vals[0], vals[1], vals[2], vals[3]]);
            target.push(vals[4]);
        }
        let mut panel = Self::from_rows(quarters, inputs, target);
        if let Some(text) = moments {
            let rows = parse_table(text, MOMENTS_HEADER, 3)?;
            if rows.len() != panel.len() {
                return Err(PanelError::PanelFile {
                    row: rows.len() + 1,
                    message: format!("moments rows {} != panel rows {}", rows.len(), panel.len()),
                });
            }
            for (t, (label, vals)) in rows.into_iter().enumerate() {
                if label != panel.quarters[t].to_string() {
                    return Err(PanelError::PanelFile { row: t + 2, message: format!("moments quarter {label:?} mismatch") });
                }
                if !(vals[1] > 0.0) {
                    return Err(PanelError::PanelFile { row: t + 2, message: "non-positive y_std".into() });
                }
                panel.target_moments[t] = Moments { mean: vals[0], std: vals[1] };
            }
        }
        Ok(panel)
    }
}

/// Parse `label,v1,...` rows under an exact header; values must be finite.
fn parse_table(text: &str, header: &str, columns: usize) -> Result<Vec<(String, Vec<f64>)>> {
    let mut lines = text.lines();
    let head = lines.next().unwrap_or("").trim();
    if head != header {
        return Err(PanelError::PanelFile { row: 1, message: format!("expected header {header:?}, found {head:?}") });
    }
    let mut rows = Vec::new();
    for (i, line) in lines.enumerate() {
        let row = i + 2;
        if line.trim().is_empty() {
            continue;
        }
        let fields: Vec<&str> = line.split(',').map(str::trim).collect();
        if fields.len() != columns {
            return Err(PanelError::FieldCount { row, found: fields.len() });
        }
        let vals = fields[1..]
            .iter()
            .map(|f| f.parse::<f64>().ok().filter(|v| v.is_finite()))
            .collect::<Option<Vec<f64>>>()
            .ok_or_else(|| PanelError::NonNumeric { row, value: line.to_string() })?;
        rows.push((fields[0].to_string(), vals));
    }
    Ok(rows)
}

/// Build the quarterly model panel from the five raw series.
pub fn build_quarterly_panel(inputs: &PanelInputs, cfg: &PanelConfig) -> Result<(QuarterlyPanel, PanelReport)> {
    let mut report = PanelReport::default();
    let mut prepare = |s: &RawSeries, growth: bool| -> Result<Standardized> {
        let (q, agg) = to_quarterly(s)?;
        if !agg.dropped_quarters.is_empty() {
            report.dropped_quarters.push((s.name.clone(), agg.dropped_quarters));
        }
        let q = if growth { growth_transform(&q, cfg.growth)? } else { q };
        rolling_standardize(&q, cfg.window)
    };
    let u = prepare(&inputs.unrate, false)?;
    let s = prepare(&inputs.psavert, false)?;
    let r = prepare(&inputs.pce, true)?;
    let v = prepare(&inputs.revolsl, true)?;
    let y = prepare(&inputs.corcacbs, false)?;
    let dates = intersect_dates(&[&u, &s, &r, &v, &y]);
    if dates.is_empty() {
        return Err(PanelError::EmptyIntersection);
    }
    let mut panel = QuarterlyPanel {
        quarters: Vec::with_capacity(dates.len()),
        inputs: Vec::with_capacity(dates.len()),
        target: Vec::with_capacity(dates.len()),
        target_moments: Vec::with_capacity(dates.len()),
    };
    for d in dates {
        let (yz, ym) = lookup(&y, d);
        panel.quarters.push(Quarter::of_date(d));
        panel.inputs.push([lookup(&u, d).0, lookup(&s, d).0, lookup(&r, d).0, lookup(&v, d).0]);
        panel.target.push(yz);
        panel.target_moments.push(ym);
    }
    Ok((panel, report))
}

/// Standardized monthly inputs for nowcasting.
#[derive(Debug, Clone, PartialEq)]
pub struct MonthlyPanel {
    pub months: Vec<Month>,
    pub inputs: Vec<[f64; 4]>,
}

impl MonthlyPanel {
    pub fn len(&self) -> usize {
        self.months.len()
    }

    pub fn is_empty(&self) -> bool {
        self.months.is_empty()
    }

    pub fn to_csv(&self) -> String {
        let mut out = String::from(MONTHLY_HEADER);
        out.push('\n');
        for (m, x) in self.months.iter().zip(&self.inputs) {
            out.push_str(&format!("{},{}\n", m, crate::clifford::join_f64(x)));
        }
        out
    }

    pub fn parse(text: &str) -> Result<Self> {
        let rows = parse_table(text, MONTHLY_HEADER, 5)?;
        let mut months = Vec::with_capacity(rows.len());
        let mut inputs = Vec::with_capacity(rows.len());
        for (row, (label, vals)) in rows.into_iter().enumerate() {
            let m: Month = label
                .parse()
                .map_err(|_| PanelError::PanelFile { row: row + 2, message: format!("bad month {label:?}") })?;
            if months.last().is_some_and(|p| *p >= m) {
                return Err(PanelError::PanelFile { row: row + 2, message: "months not increasing".into() });
            }
            months.push(m);
            inputs.push([vals[0], vals[1], vals[2], vals[3]]);
        }
        Ok(MonthlyPanel { months, inputs })
    }
}

/// Build the monthly panel from UNRATE, PCE, PSAVERT, REVOLSL (no target).
pub fn build_monthly_panel(
    unrate: &RawSeries,
    pce: &RawSeries,
    psavert: &RawSeries,
    revolsl: &RawSeries,
    cfg: &PanelConfig,
) -> Result<MonthlyPanel> {
    let prepare = |s: &RawSeries, growth: bool| -> Result<Standardized> {
        if s.len() >= 2 && s.frequency()? != Frequency::Monthly {
            return Err(PanelError::InsufficientFrequency { name: s.name.clone() });
        }
        let norm = RawSeries {
            name: s.name.clone(),
            observations: s.observations.iter().map(|(d, v)| (Month::of_date(*d).start_date(), *v)).collect(),
        };
        let g = if growth { growth_transform(&norm, cfg.growth)? } else { norm };
        rolling_standardize(&g, cfg.window)
    };
    let u = prepare(unrate, false)?;
    let s = prepare(psavert, false)?;
    let r = prepare(pce, true)?;
    let v = prepare(revolsl, true)?;
    let dates = intersect_dates(&[&u, &s, &r, &v]);
    if dates.is_empty() {
        return Err(PanelError::EmptyIntersection);
    }
    Ok(MonthlyPanel {
        months: dates.iter().map(|d| Month::of_date(*d)).collect(),
        inputs: dates
            .iter()
            .map(|&d| [lookup(&u, d).0, lookup(&s, d).0, lookup(&r, d).0, lookup(&v, d).0])
            .collect(),
    })
}
