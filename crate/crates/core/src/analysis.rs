//! Regime analytics over a fitted model: grade magnitudes, context PCA,
//! attention heatmaps, crisis-window correlations, regime labels and
//! monthly nowcasts.

use std::fmt::{self, Write as _};
use std::str::FromStr;

use rand::{Rng, SeedableRng};
use rand_chacha::ChaCha8Rng;
use thiserror::Error;

use crate::attention::{project_query, window_indices, WindowStats};
use crate::clifford::format_f64;
use crate::embed::embed_state;
use crate::linalg::{dot, Matrix};
use crate::model::{project_all, stats_at, step_with_query, ModelError, ModelParams};
use crate::panel::{to_quarterly, Month, MonthlyPanel, PanelError, Quarter, QuarterlyPanel, RawSeries};

#[derive(Debug, Error)]
pub enum AnalysisError {
    #[error(transparent)]
    Model(#[from] ModelError),
    #[error(transparent)]
    Panel(#[from] PanelError),
    #[error("need at least {need} observations, found {found}")]
    TooFew { need: usize, found: usize },
    #[error("all contexts are identical; no principal direction")]
    RankZero,
    #[error("zero variance in {0} over the window")]
    ZeroVariance(&'static str),
    #[error("invalid thresholds ({0}, {1}); need 0 < low < high")]
    Thresholds(f64, f64),
    #[error("bad crisis window {0:?}; expected START:END like 2007Q4:2010Q4")]
    Window(String),
    #[error("no quarterly history before {0}")]
    MissingState(Quarter),
    #[error("length mismatch: {0} vs {1}")]
    Length(usize, usize),
}

type Result<T> = std::result::Result<T, AnalysisError>;

pub const LOG_FLOOR: f64 = 1e-12;

#[derive(Debug, Clone, Copy, PartialEq)]
pub struct ComponentRow {
    pub quarter: Quarter,
    pub scalar: f64,
    pub vector: f64,
    pub bivector: f64,
}

pub fn component_evolution(panel: &QuarterlyPanel, params: &ModelParams) -> Vec<ComponentRow> {
    panel
        .quarters
        .iter()
        .zip(&panel.inputs)
        .map(|(q, x)| {
            let m = embed_state(x, &params.embedding);
            let g = |k| m.grade_norm(k).expect("grade below 5");
            ComponentRow { quarter: *q, scalar: g(0), vector: g(1), bivector: g(2) }
        })
        .collect()
}

pub const COMPONENT_HEADER: &str = "quarter,log10_scalar,log10_vector,log10_bivector";

pub fn log10_floored(v: f64) -> f64 {
    v.max(LOG_FLOOR).log10()
}

pub fn components_to_csv(rows: &[ComponentRow]) -> String {
    let mut out = format!("{COMPONENT_HEADER}\n");
    for r in rows {
        let _ = writeln!(
            out,
            "{},{},{},{}",
            r.quarter,
            format_f64(log10_floored(r.scalar)),
            format_f64(log10_floored(r.vector)),
            format_f64(log10_floored(r.bivector))
        );
    }
    out
}

#[derive(Debug, Clone, PartialEq)]
pub struct Pca {
    pub coordinates: Vec<[f64; 2]>,
    pub explained: [f64; 2],
    pub components: [Vec<f64>; 2],
    pub eigenvalues: [f64; 2],
}

pub const PCA_TOLERANCE: f64 = 1e-12;
pub const PCA_MAX_ITERATIONS: usize = 10_000;

/// Leading eigenpair of a symmetric positive semi-definite matrix.
fn power_iteration(c: &Matrix) -> (f64, Vec<f64>) {
    let n = c.rows;
    let j = (0..n).max_by(|a, b| c.get(*a, *a).total_cmp(&c.get(*b, *b))).unwrap_or(0);
    let mut v: Vec<f64> = (0..n).map(|i| c.get(i, j)).collect();
    let mut nv = dot(&v, &v).sqrt();
    if nv == 0.0 {
        return (0.0, (0..n).map(|i| if i == j { 1.0 } else { 0.0 }).collect());
    }
    v.iter_mut().for_each(|x| *x /= nv);
    for _ in 0..PCA_MAX_ITERATIONS {
        let mut w = c.matvec(&v);
        nv = dot(&w, &w).sqrt();
        if nv == 0.0 {
            break;
        }
        w.iter_mut().for_each(|x| *x /= nv);
        let diff: f64 = w.iter().zip(&v).map(|(a, b)| (a - b).abs()).fold(0.0, f64::max);
        v = w;
        if diff < PCA_TOLERANCE {
            break;
        }
    }
    let lambda = dot(&v, &c.matvec(&v));
    (lambda.max(0.0), v)
}

fn orient(v: &mut [f64]) {
    if let Some(first) = v.iter().find(|x| x.abs() > PCA_TOLERANCE) {
        if *first < 0.0 {
            v.iter_mut().for_each(|x| *x = -*x);
        }
    }
}

/// Top-two principal components of mean-centered contexts.
pub fn pca_trajectory(contexts: &[Vec<f64>]) -> Result<Pca> {
    let n = contexts.len();
    if n < 3 {
        return Err(AnalysisError::TooFew { need: 3, found: n });
    }
    let d = contexts[0].len();
    if let Some(bad) = contexts.iter().find(|c| c.len() != d) {
        return Err(AnalysisError::Length(d, bad.len()));
    }
    let mut mean = vec![0.0; d];
    for c in contexts {
        crate::linalg::axpy(&mut mean, 1.0 / n as f64, c);
    }
    let centered: Vec<Vec<f64>> = contexts.iter().map(|c| c.iter().zip(&mean).map(|(a, m)| a - m).collect()).collect();
    let mut cov = Matrix::zeros(d, d);
    for c in &centered {
        cov.add_outer(c, c, 1.0 / n as f64);
    }
    let trace: f64 = (0..d).map(|i| cov.get(i, i)).sum();
    if !(trace > 0.0) {
        return Err(AnalysisError::RankZero);
    }
    let (l1, mut v1) = power_iteration(&cov);
    orient(&mut v1);
    let mut deflated = cov.clone();
    deflated.add_outer(&v1, &v1, -l1);
    let (mut l2, mut v2) = power_iteration(&deflated);
    // remove any drift back toward the first component
    let proj = dot(&v2, &v1);
    v2.iter_mut().zip(&v1).for_each(|(a, b)| *a -= proj * b);
    let nv2 = dot(&v2, &v2).sqrt();
    if nv2 > 0.0 {
        v2.iter_mut().for_each(|x| *x /= nv2);
    }
    if l2 <= PCA_TOLERANCE * trace {
        l2 = 0.0;
    }
    orient(&mut v2);
    let coordinates = centered.iter().map(|c| [dot(c, &v1), if l2 > 0.0 { dot(c, &v2) } else { 0.0 }]).collect();
    Ok(Pca {
        coordinates,
        explained: [(l1 / trace).clamp(0.0, 1.0), (l2 / trace).clamp(0.0, 1.0)],
        components: [v1, v2],
        eigenvalues: [l1, l2],
    })
}

pub const PCA_HEADER: &str = "quarter,pc1,pc2,explained1,explained2";

pub fn pca_to_csv(quarters: &[Quarter], pca: &Pca) -> String {
    let mut out = format!("{PCA_HEADER}\n");
    for (q, c) in quarters.iter().zip(&pca.coordinates) {
        let _ = writeln!(
            out,
            "{q},{},{},{},{}",
            format_f64(c[0]),
            format_f64(c[1]),
            format_f64(pca.explained[0]),
            format_f64(pca.explained[1])
        );
    }
    out
}

/// Shannon entropy (nats) of `|w| / Σ|w|`; zero weights contribute nothing.
pub fn entropy(weights: &[f64]) -> f64 {
    let total: f64 = weights.iter().map(|w| w.abs()).sum();
    if total == 0.0 {
        return 0.0;
    }
    let h: f64 = weights
        .iter()
        .map(|w| w.abs() / total)
        .filter(|p| *p > 0.0)
        .map(|p| -p * p.ln())
        .sum();
    h.max(0.0)
}

#[derive(Debug, Clone, PartialEq)]
pub struct HeatmapColumn {
    pub quarter: Quarter,
    /// Entry `k` is the weight on lag `k + 1`; `None` before the panel start.
    pub weights: Vec<Option<f64>>,
    pub entropy: f64,
    pub convex: bool,
}

pub fn attention_heatmap(panel: &QuarterlyPanel, params: &ModelParams) -> Result<Vec<HeatmapColumn>> {
    let states: Vec<_> = panel.inputs.iter().map(|x| embed_state(x, &params.embedding)).collect();
    let qkv = project_all(&states, &params.projection);
    let l = params.lookback;
    (1..panel.len())
        .map(|t| {
            let stats = stats_at(&qkv, t, l)?;
            let s = step_with_query(&qkv[t].q, stats, t, params)?;
            let mut weights = vec![None; l];
            for (tau, w) in s.stats.window.iter().zip(&s.attention.weights) {
                weights[t - tau - 1] = Some(*w);
            }
            Ok(HeatmapColumn {
                quarter: panel.quarters[t],
                weights,
                entropy: entropy(&s.attention.weights),
                convex: s.attention.convex,
            })
        })
        .collect()
}

pub fn heatmap_to_csv(cols: &[HeatmapColumn]) -> String {
    let lags = cols.first().map_or(0, |c| c.weights.len());
    let mut out = String::from("quarter,entropy,convex");
    for k in 1..=lags {
        let _ = write!(out, ",lag{k}");
    }
    out.push('\n');
    for c in cols {
        let _ = write!(out, "{},{},{}", c.quarter, format_f64(c.entropy), u8::from(c.convex));
        for w in &c.weights {
            out.push(',');
            if let Some(w) = w {
                out.push_str(&format_f64(*w));
            }
        }
        out.push('\n');
    }
    out
}

#[derive(Debug, Clone, Copy, PartialEq, Eq)]
pub struct CrisisWindow {
    pub start: Quarter,
    pub end: Quarter,
}

impl CrisisWindow {
    pub fn contains(&self, q: Quarter) -> bool {
        self.start <= q && q <= self.end
    }
}

impl fmt::Display for CrisisWindow {
    fn fmt(&self, f: &mut fmt::Formatter<'_>) -> fmt::Result {
        write!(f, "{}:{}", self.start, self.end)
    }
}

impl FromStr for CrisisWindow {
    type Err = AnalysisError;

    fn from_str(s: &str) -> Result<Self> {
        let bad = || AnalysisError::Window(s.to_string());
        let (a, b) = s.trim().split_once(':').ok_or_else(bad)?;
        let start: Quarter = a.parse().map_err(|_| bad())?;
        let end: Quarter = b.parse().map_err(|_| bad())?;
        if end < start {
            return Err(bad());
        }
        Ok(CrisisWindow { start, end })
    }
}

/// Recession-dated windows around the 1990–91, 2008 and 2020 downturns.
pub fn default_crisis_windows() -> [(&'static str, CrisisWindow); 3] {
    let w = |a: &str, b: &str| CrisisWindow { start: a.parse().expect("literal"), end: b.parse().expect("literal") };
    [("1990-91", w("1990Q1", "1992Q4")), ("2008", w("2007Q4", "2010Q4")), ("2020", w("2019Q4", "2021Q4"))]
}

pub const MIN_CORRELATION_OBS: usize = 8;

pub fn pearson(a: &[f64], b: &[f64]) -> Result<f64> {
    if a.len() != b.len() {
        return Err(AnalysisError::Length(a.len(), b.len()));
    }
    let n = a.len() as f64;
    let ma = a.iter().sum::<f64>() / n;
    let mb = b.iter().sum::<f64>() / n;
    let (mut sab, mut saa, mut sbb) = (0.0, 0.0, 0.0);
    for (x, y) in a.iter().zip(b) {
        sab += (x - ma) * (y - mb);
        saa += (x - ma) * (x - ma);
        sbb += (y - mb) * (y - mb);
    }
    if saa == 0.0 {
        return Err(AnalysisError::ZeroVariance("first series"));
    }
    if sbb == 0.0 {
        return Err(AnalysisError::ZeroVariance("second series"));
    }
    Ok((sab / (saa * sbb).sqrt()).clamp(-1.0, 1.0))
}

#[derive(Debug, Clone, Copy, PartialEq)]
pub struct CrisisCorrelation {
    pub window: CrisisWindow,
    pub rho: f64,
    pub observations: usize,
}

/// Pearson correlation of quarterly-averaged raw unemployment against the raw
/// charge-off rate over the quarters both cover within `window`.
pub fn crisis_correlation(unrate: &RawSeries, chargeoff: &RawSeries, window: CrisisWindow) -> Result<CrisisCorrelation> {
    let (u, _) = to_quarterly(unrate)?;
    let (c, _) = to_quarterly(chargeoff)?;
    let cq: Vec<(Quarter, f64)> = c.observations.iter().map(|(d, v)| (Quarter::of_date(*d), *v)).collect();
    let mut a = Vec::new();
    let mut b = Vec::new();
    for (d, v) in &u.observations {
        let q = Quarter::of_date(*d);
        if !window.contains(q) {
            continue;
        }
        if let Ok(i) = cq.binary_search_by_key(&q, |(k, _)| *k) {
            a.push(*v);
            b.push(cq[i].1);
        }
    }
    if a.len() < MIN_CORRELATION_OBS {
        return Err(AnalysisError::TooFew { need: MIN_CORRELATION_OBS, found: a.len() });
    }
    Ok(CrisisCorrelation { window, rho: pearson(&a, &b)?, observations: a.len() })
}

#[derive(Debug, Clone, Copy, PartialEq, Eq)]
pub enum Regime {
    VectorDominated,
    Mixed,
    BivectorDominated,
}

impl fmt::Display for Regime {
    fn fmt(&self, f: &mut fmt::Formatter<'_>) -> fmt::Result {
        f.write_str(match self {
            Regime::VectorDominated => "vector-dominated",
            Regime::Mixed => "mixed",
            Regime::BivectorDominated => "bivector-dominated",
        })
    }
}

#[derive(Debug, Clone, Copy, PartialEq)]
pub struct RegimeThresholds {
    pub low: f64,
    pub high: f64,
}

impl Default for RegimeThresholds {
    fn default() -> Self {
        RegimeThresholds { low: 0.5, high: 1.5 }
    }
}

impl RegimeThresholds {
    pub fn new(low: f64, high: f64) -> Result<Self> {
        if !(low > 0.0 && low < high && high.is_finite()) {
            return Err(AnalysisError::Thresholds(low, high));
        }
        Ok(RegimeThresholds { low, high })
    }

    /// A ratio equal to a threshold falls in the lower class.
    pub fn classify(&self, ratio: f64) -> Regime {
        if ratio <= self.low {
            Regime::VectorDominated
        } else if ratio <= self.high {
            Regime::Mixed
        } else {
            Regime::BivectorDominated
        }
    }
}

#[derive(Debug, Clone, Copy, PartialEq)]
pub struct RegimeLabel {
    pub quarter: Quarter,
    pub ratio: f64,
    pub label: Regime,
}

pub fn classify_regimes(mags: &[ComponentRow], thresholds: RegimeThresholds) -> Vec<RegimeLabel> {
    mags.iter()
        .map(|m| {
            let ratio = m.bivector / m.vector.max(LOG_FLOOR);
            RegimeLabel { quarter: m.quarter, ratio, label: thresholds.classify(ratio) }
        })
        .collect()
}

pub const REGIME_HEADER: &str = "quarter,ratio,label,low,high";

pub fn regimes_to_csv(labels: &[RegimeLabel], thresholds: RegimeThresholds) -> String {
    let mut out = format!("{REGIME_HEADER}\n");
    let (lo, hi) = (format_f64(thresholds.low), format_f64(thresholds.high));
    for l in labels {
        let _ = writeln!(out, "{},{},{},{lo},{hi}", l.quarter, format_f64(l.ratio), l.label);
    }
    out
}

/// Frozen keys and values of the quarters preceding a target quarter.
#[derive(Debug, Clone, PartialEq)]
pub struct QuarterlyState {
    pub quarter: Quarter,
    /// Panel index the state would predict; may equal `panel.len()`.
    pub index: usize,
    pub stats: WindowStats,
}

/// State for quarter `q`: the last `L` panel quarters strictly before `q`.
pub fn quarterly_state(panel: &QuarterlyPanel, params: &ModelParams, q: Quarter) -> Result<QuarterlyState> {
    let t = panel.quarters.partition_point(|x| *x < q);
    if t == 0 {
        return Err(AnalysisError::MissingState(q));
    }
    let lo = window_indices(t, params.lookback).start;
    let states: Vec<_> = panel.inputs[lo..t].iter().map(|x| embed_state(x, &params.embedding)).collect();
    let qkv = project_all(&states, &params.projection);
    let mut stats = stats_at(&qkv, qkv.len(), params.lookback)?;
    stats.window = (lo..t).collect();
    Ok(QuarterlyState { quarter: q, index: t, stats })
}

/// Standardized nowcast for one monthly state against a frozen window.
pub fn nowcast_state(x: &[f64; 4], state: &QuarterlyState, params: &ModelParams) -> Result<f64> {
    let (q, _) = project_query(&embed_state(x, &params.embedding), &params.projection);
    Ok(step_with_query(&q, state.stats.clone(), state.index, params)?.prediction)
}

#[derive(Debug, Clone, Copy, PartialEq)]
pub struct Nowcast {
    pub month: Month,
    pub quarter: Quarter,
    pub standardized: f64,
    /// Present when the quarter is in the panel and its moments are known.
    pub destandardized: Option<f64>,
}

/// Nowcasts for every month; leading months that precede the panel's
/// history are dropped.
pub fn nowcast(monthly: &MonthlyPanel, panel: &QuarterlyPanel, params: &ModelParams) -> Result<Vec<Nowcast>> {
    let mut out = Vec::with_capacity(monthly.len());
    let mut cached: Option<QuarterlyState> = None;
    let mut skipped = 0usize;
    for (m, x) in monthly.months.iter().zip(&monthly.inputs) {
        let q = m.quarter();
        if cached.as_ref().is_none_or(|s| s.quarter != q) {
            match quarterly_state(panel, params, q) {
                Ok(s) => cached = Some(s),
                Err(AnalysisError::MissingState(_)) if out.is_empty() => {
                    skipped += 1;
                    continue;
                }
                Err(e) => return Err(e),
            }
        }
        let state = cached.as_ref().expect("just set");
        let z = nowcast_state(x, state, params)?;
        let destandardized = panel.index_of(q).map(|i| panel.destandardize(i, z));
        out.push(Nowcast { month: *m, quarter: q, standardized: z, destandardized });
    }
    if skipped > 0 {
        log::info!("{skipped} leading months have no quarterly history and were skipped");
    }
    if out.is_empty() && skipped > 0 {
        return Err(AnalysisError::MissingState(monthly.months[skipped - 1].quarter()));
    }
    Ok(out)
}

pub const NOWCAST_HEADER: &str = "month,quarter,nowcast_std,nowcast";

pub fn nowcasts_to_csv(rows: &[Nowcast]) -> String {
    let mut out = format!("{NOWCAST_HEADER}\n");
    for r in rows {
        let raw = r.destandardized.map(format_f64).unwrap_or_default();
        let _ = writeln!(out, "{},{},{},{raw}", r.month, r.quarter, format_f64(r.standardized));
    }
    out
}

/// Empirical Lipschitz constant of the query path against a frozen state:
/// `max |ŷ(x + δu) − ŷ(x)| / δ` over random `x` in `[-x_bound, x_bound]⁴`
/// and directions `u` with `‖u‖∞ = 1`.
pub fn lipschitz_probe(
    state: &QuarterlyState,
    params: &ModelParams,
    x_bound: f64,
    delta: f64,
    samples: usize,
    seed: u64,
) -> Result<f64> {
    let mut rng = ChaCha8Rng::seed_from_u64(seed);
    let mut k: f64 = 0.0;
    for _ in 0..samples {
        let x: [f64; 4] = std::array::from_fn(|_| rng.gen_range(-x_bound..=x_bound));
        let mut u: [f64; 4] = std::array::from_fn(|_| rng.gen_range(-1.0..=1.0));
        let peak = u.iter().fold(0.0f64, |m, v| m.max(v.abs()));
        if peak == 0.0 {
            continue;
        }
        u.iter_mut().for_each(|v| *v /= peak);
        let y = nowcast_state(&x, state, params)?;
        let xd: [f64; 4] = std::array::from_fn(|i| x[i] + delta * u[i]);
        let yd = nowcast_state(&xd, state, params)?;
        k = k.max((yd - y).abs() / delta);
    }
    Ok(k)
}

#[cfg(test)]
mod tests {
    use super::*;
    use crate::model::{forward, ModelConfig};
    use crate::synthetic;

    fn params(seed: u64) -> ModelParams {
        synthetic::random_params(&ModelConfig::default(), seed, 0.3)
    }

    #[test]
    fn components_cases() {
        let sync = synthetic::synchronized_panel(15, 1);
        let mut p = params(1);
        assert!(component_evolution(&sync, &p).iter().all(|r| r.bivector == 0.0));
        p.embedding.alpha0 = 0.0;
        let rows = component_evolution(&synthetic::random_panel(6, 2), &p);
        assert!(rows.iter().all(|r| r.scalar == 0.0 && r.vector > 0.0));
        let csv = components_to_csv(&rows);
        assert!(csv.lines().nth(1).unwrap().contains(",-12.0,"));
        assert!(!csv.contains("inf"));

        let planted = synthetic::planted_divergence(20, 13, 2.0, 3);
        let rows = component_evolution(&planted, &params(2));
        let arg = (0..rows.len()).max_by(|a, b| rows[*a].bivector.total_cmp(&rows[*b].bivector)).unwrap();
        assert_eq!(arg, 13);
    }

    #[test]
    fn pca_cases() {
        let line: Vec<Vec<f64>> = (0..7).map(|i| vec![i as f64 * 0.5, -(i as f64), 2.0]).collect();
        let pca = pca_trajectory(&line).unwrap();
        assert!((pca.explained[0] - 1.0).abs() < 1e-9 && pca.explained[1].abs() < 1e-9);
        assert!(pca.components[0][0] > 0.0);

        let cross = vec![vec![1.0, 0.0], vec![-1.0, 0.0], vec![0.0, 1.0], vec![0.0, -1.0]];
        let pca = pca_trajectory(&cross).unwrap();
        // brute force: covariance is diag(1/2, 1/2)
        let mut cov = [[0.0; 2]; 2];
        for c in &cross {
            for i in 0..2 {
                for j in 0..2 {
                    cov[i][j] += c[i] * c[j] / 4.0;
                }
            }
        }
        assert_eq!(cov, [[0.5, 0.0], [0.0, 0.5]]);
        assert!((pca.explained[0] - 0.5).abs() < 1e-9 && (pca.explained[1] - 0.5).abs() < 1e-9);

        let contexts: Vec<Vec<f64>> = (0..9).map(|i| vec![(i as f64).sin(), (i as f64 * 0.7).cos(), i as f64 * 0.1]).collect();
        let shifted: Vec<Vec<f64>> = contexts.iter().map(|c| c.iter().map(|v| v + 3.5).collect()).collect();
        let (a, b) = (pca_trajectory(&contexts).unwrap(), pca_trajectory(&shifted).unwrap());
        for (x, y) in a.coordinates.iter().zip(&b.coordinates) {
            assert!((x[0] - y[0]).abs() < 1e-9 && (x[1] - y[1]).abs() < 1e-9);
        }
        assert!(a.explained[0] + a.explained[1] <= 1.0 + 1e-12);
        assert!(matches!(pca_trajectory(&vec![vec![1.0, 2.0]; 4]), Err(AnalysisError::RankZero)));
    }

    #[test]
    fn entropy_cases() {
        assert_eq!(entropy(&[0.0, 1.0, 0.0]), 0.0);
        assert!((entropy(&[0.25; 4]) - 4f64.ln()).abs() < 1e-15);
        let panel = QuarterlyPanel::synthetic(synthetic::START, vec![[0.1, 0.6, -0.4, 0.2]; 14], vec![0.0; 14]);
        let p = params(3);
        for c in attention_heatmap(&panel, &p).unwrap() {
            let n = c.weights.iter().flatten().count();
            assert!((c.entropy - (n as f64).ln()).abs() < 1e-12);
        }
        for c in attention_heatmap(&synthetic::random_panel(14, 4), &p).unwrap() {
            let n = c.weights.iter().flatten().count() as f64;
            assert!(c.entropy >= 0.0 && c.entropy <= n.ln() + 1e-12);
        }
    }

    fn quarterly(name: &str, vals: &[f64]) -> RawSeries {
        let obs = vals
            .iter()
            .enumerate()
            .map(|(i, v)| (Quarter::from_ordinal(Quarter { year: 2000, q: 1 }.ordinal() + i as i64).start_date(), *v))
            .collect();
        RawSeries::new(name, obs).unwrap()
    }

    #[test]
    fn correlation_cases() {
        let a: Vec<f64> = (0..12).map(|i| (i as f64 * 0.4).sin() + 5.0).collect();
        let w: CrisisWindow = "2000Q1:2002Q4".parse().unwrap();
        let r = crisis_correlation(&quarterly("u", &a), &quarterly("c", &a), w).unwrap();
        assert_eq!((r.rho, r.observations), (1.0, 12));
        let neg: Vec<f64> = a.iter().map(|v| 3.0 - 2.0 * v).collect();
        let r = crisis_correlation(&quarterly("u", &a), &quarterly("c", &neg), w).unwrap();
        assert!((r.rho + 1.0).abs() < 1e-12);
        let flat = vec![2.0; 12];
        assert!(matches!(crisis_correlation(&quarterly("u", &a), &quarterly("c", &flat), w), Err(AnalysisError::ZeroVariance(_))));
        let short: CrisisWindow = "2000Q1:2001Q2".parse().unwrap();
        assert!(matches!(crisis_correlation(&quarterly("u", &a), &quarterly("c", &a), short), Err(AnalysisError::TooFew { .. })));
        assert!("2010Q1:2009Q4".parse::<CrisisWindow>().is_err());
    }

    #[test]
    fn regime_cases() {
        let th = RegimeThresholds::default();
        assert_eq!(th.classify(0.0), Regime::VectorDominated);
        assert_eq!(th.classify(0.5), Regime::VectorDominated);
        assert_eq!(th.classify(1.5), Regime::Mixed);
        assert_eq!(th.classify(1.5000001), Regime::BivectorDominated);
        assert!(RegimeThresholds::new(1.0, 0.5).is_err());

        let planted = [6, 11];
        let panel = synthetic::feedback_spiral(16, &planted, 1.2, 5);
        let p = ModelParams::init(&ModelConfig::default(), 1);
        let labels = classify_regimes(&component_evolution(&panel, &p), th);
        for (i, l) in labels.iter().enumerate() {
            let want = if planted.contains(&i) { Regime::BivectorDominated } else { Regime::VectorDominated };
            assert_eq!(l.label, want, "quarter {i}");
        }

        let mut scaled = panel.clone();
        scaled.inputs.iter_mut().for_each(|x| x.iter_mut().for_each(|v| *v *= 3.0));
        let mut p0 = p.clone();
        p0.embedding.alpha0 = 0.0;
        let a = classify_regimes(&component_evolution(&panel, &p0), th);
        let b = classify_regimes(&component_evolution(&scaled, &p0), th);
        for (x, y) in a.iter().zip(&b) {
            assert_eq!(x.label, y.label);
        }
    }

    #[test]
    fn nowcast_cases() {
        let panel = synthetic::random_panel(16, 6);
        let p = params(7);
        for t in [1, 5, 15] {
            let q = panel.quarters[t];
            let state = quarterly_state(&panel, &p, q).unwrap();
            assert_eq!(nowcast_state(&panel.inputs[t], &state, &p).unwrap(), forward(&panel, t, &p).unwrap());
        }
        assert!(matches!(quarterly_state(&panel, &p, panel.quarters[0]), Err(AnalysisError::MissingState(_))));

        let q = panel.quarters[10];
        let months: Vec<Month> = (0..3).map(|k| Month { year: q.year, month: (q.q - 1) * 3 + 1 + k }).collect();
        let monthly = MonthlyPanel { months, inputs: vec![[0.3, 0.1, -0.2, 0.4]; 3] };
        let nc = nowcast(&monthly, &panel, &p).unwrap();
        assert!(nc.iter().all(|n| n.standardized == nc[0].standardized));

        let state = quarterly_state(&panel, &p, q).unwrap();
        let k = lipschitz_probe(&state, &p, 2.0, 1e-4, 200, 1).unwrap();
        let x = [0.2, -0.3, 0.5, 0.1];
        for step in [1e-3, 1e-2, 1e-1] {
            let xd = [x[0] + step, x[1] + step, x[2] - step, x[3]];
            let d = (nowcast_state(&xd, &state, &p).unwrap() - nowcast_state(&x, &state, &p).unwrap()).abs();
            assert!(d <= 2.0 * k * step, "{d} vs {k}·{step}");
        }
    }
}
