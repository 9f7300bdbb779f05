//! Temporal attention attribution, query-side occlusion, per-variable
//! context contributions, the first-order impulse response and scenario
//! stress tests.

use std::fmt::Write as _;
use std::str::FromStr;

use thiserror::Error;

use crate::attention::{project_qkv, project_query, window_indices};
use crate::clifford::{format_f64, Multivector, BLADE_NAMES, DIM, GRADE_RANGES};
use crate::embed::{embed_state, slots_involving, VARIABLE_NAMES};
use crate::linalg::{axpy, dot, norm};
use crate::model::{project_all, stats_at, step, step_from_states, step_with_query, HeadParams, ModelError, ModelParams};
use crate::panel::{Quarter, QuarterlyPanel};

#[derive(Debug, Error, Clone, PartialEq)]
pub enum AttributionError {
    #[error(transparent)]
    Model(#[from] ModelError),
    #[error("perturbation at index {tau} is outside the window of t={t}")]
    OutsideWindow { tau: usize, t: usize },
    #[error("scenario quarter {0} is not in the panel")]
    UnknownQuarter(Quarter),
    #[error("scenario line {line}: {message}")]
    Scenario { line: usize, message: String },
}

type Result<T> = std::result::Result<T, AttributionError>;

fn embedded(panel: &QuarterlyPanel, params: &ModelParams) -> Vec<Multivector> {
    panel.inputs.iter().map(|x| embed_state(x, &params.embedding)).collect()
}

#[derive(Debug, Clone, PartialEq)]
pub struct TemporalAttribution {
    pub quarter: Quarter,
    /// `(source quarter, ε-free weight)`, oldest first.
    pub weights: Vec<(Quarter, f64)>,
    pub convex: bool,
}

pub fn temporal_attribution(panel: &QuarterlyPanel, t: usize, params: &ModelParams) -> Result<TemporalAttribution> {
    let s = step(panel, t, params)?;
    let weights = s.stats.window.iter().zip(&s.attention.weights).map(|(i, w)| (panel.quarters[*i], *w)).collect();
    Ok(TemporalAttribution { quarter: panel.quarters[t], weights, convex: s.attention.convex })
}

/// Prediction with the listed coefficient slots of the query-side `M_t`
/// zeroed; keys and values are untouched.
pub fn occluded_prediction(panel: &QuarterlyPanel, t: usize, params: &ModelParams, slots: &[usize]) -> Result<f64> {
    let s = step(panel, t, params)?;
    let mut m = embed_state(&panel.inputs[t], &params.embedding);
    for &i in slots {
        m[i] = 0.0;
    }
    let (q, _) = project_query(&m, &params.projection);
    Ok(step_with_query(&q, s.stats, t, params)?.prediction)
}

#[derive(Debug, Clone, PartialEq)]
pub struct Occlusion {
    pub label: String,
    /// `ŷ − ŷ|occluded`
    pub delta: f64,
}

/// Occlusion deltas for each scalar, vector and bivector slot, then for the
/// three grade blocks as a whole.
pub fn geometric_occlusion(panel: &QuarterlyPanel, t: usize, params: &ModelParams) -> Result<Vec<Occlusion>> {
    let y = step(panel, t, params)?.prediction;
    let mut out = Vec::new();
    for slot in 0..GRADE_RANGES[2].1 {
        let d = y - occluded_prediction(panel, t, params, &[slot])?;
        out.push(Occlusion { label: BLADE_NAMES[slot].to_string(), delta: d });
    }
    for (g, name) in ["scalar", "vector", "bivector"].iter().enumerate() {
        let slots: Vec<usize> = (GRADE_RANGES[g].0..GRADE_RANGES[g].1).collect();
        let d = y - occluded_prediction(panel, t, params, &slots)?;
        out.push(Occlusion { label: format!("grade_{name}"), delta: d });
    }
    Ok(out)
}

#[derive(Debug, Clone, PartialEq)]
pub struct VariableContributions {
    /// `‖O_t − O_t|variable i removed from history‖`
    pub magnitudes: [f64; 4],
    /// Magnitudes divided by their sum; zero when the sum is zero.
    pub shares: [f64; 4],
    /// Context or every magnitude was zero.
    pub degenerate: bool,
}

/// Leave-one-variable-out occlusion of the historical window states.
pub fn variable_contributions(panel: &QuarterlyPanel, t: usize, params: &ModelParams) -> Result<VariableContributions> {
    let base = step(panel, t, params)?;
    let states = embedded(panel, params);
    let (q, _) = project_query(&states[t], &params.projection);
    let mut magnitudes = [0.0; 4];
    for (i, mag) in magnitudes.iter_mut().enumerate() {
        let slots = slots_involving(i);
        let mut occluded = states.clone();
        for tau in window_indices(t, params.lookback) {
            for &sl in &slots {
                occluded[tau][sl] = 0.0;
            }
        }
        let qkv = project_all(&occluded[..t], &params.projection);
        let stats = stats_at(&qkv, t, params.lookback)?;
        let o = step_with_query(&q, stats, t, params)?.attention.context;
        let diff: Vec<f64> = base.attention.context.iter().zip(&o).map(|(a, b)| a - b).collect();
        *mag = norm(&diff);
    }
    let total: f64 = magnitudes.iter().sum();
    let degenerate = total == 0.0 || norm(&base.attention.context) == 0.0;
    let shares = if total > 0.0 { magnitudes.map(|m| m / total) } else { [0.0; 4] };
    Ok(VariableContributions { magnitudes, shares, degenerate })
}

#[derive(Debug, Clone, PartialEq)]
pub struct Perturbation {
    pub tau: usize,
    pub delta_m: Multivector,
}

#[derive(Debug, Clone, Copy, PartialEq)]
pub struct ImpulseResponse {
    /// Closed-form first-order change of `ŷ_t`.
    pub delta_formula: f64,
    /// Forward pass with `M_τ + ΔM_τ` minus the baseline.
    pub delta_direct: f64,
    /// Some `(W_K M_τ)_a` lies within [`KINK_TOLERANCE`] of zero.
    pub near_kink: bool,
}

pub const KINK_TOLERANCE: f64 = 1e-9;

/// First-order change of a linear-head prediction under `ΔM_τ`:
/// `w_outᵀ [Qᵀ(ΔK Vᵀ + K ΔVᵀ)/D − (QᵀΔK/D) O]`.
pub fn impulse_formula(panel: &QuarterlyPanel, t: usize, pert: &Perturbation, params: &ModelParams) -> Result<(f64, bool)> {
    let HeadParams::Linear { w_out, .. } = &params.head else {
        return Err(ModelError::UnsupportedHead.into());
    };
    if !window_indices(t, params.lookback).contains(&pert.tau) {
        return Err(AttributionError::OutsideWindow { tau: pert.tau, t });
    }
    let s = step(panel, t, params)?;
    let p = &params.projection;
    let m_tau = embed_state(&panel.inputs[pert.tau], &params.embedding);
    let qkv_tau = project_qkv(&m_tau, p);
    let (q, _) = project_query(&embed_state(&panel.inputs[t], &params.embedding), p);
    let near_kink = qkv_tau.pre_k.iter().any(|x| x.abs() < KINK_TOLERANCE);
    if near_kink {
        log::warn!("perturbed key at index {} sits on a feature-map kink", pert.tau);
    }
    let dpre = p.w_k.matvec(pert.delta_m.as_slice());
    let dk: Vec<f64> = dpre.iter().zip(&qkv_tau.pre_k).map(|(d, x)| d * p.feature_map.slope(*x, p.leak)).collect();
    let dv = p.w_v.matvec(pert.delta_m.as_slice());
    let d = s.attention.denominator;
    let q_dk = dot(&q, &dk);
    let q_k = dot(&q, &qkv_tau.k);
    let mut d_o = vec![0.0; dv.len()];
    axpy(&mut d_o, q_dk / d, &qkv_tau.v);
    axpy(&mut d_o, q_k / d, &dv);
    axpy(&mut d_o, -q_dk / d, &s.attention.context);
    Ok((dot(w_out, &d_o), near_kink))
}

/// Prediction at `t` after adding `ΔM` to the listed historical states.
pub fn perturbed_prediction(panel: &QuarterlyPanel, t: usize, params: &ModelParams, perts: &[Perturbation]) -> Result<f64> {
    let mut states = embedded(panel, params);
    for p in perts {
        states[p.tau] = states[p.tau] + p.delta_m;
    }
    Ok(step_from_states(&states[..=t], t, params)?.prediction)
}

pub fn impulse_response(panel: &QuarterlyPanel, t: usize, pert: &Perturbation, params: &ModelParams) -> Result<ImpulseResponse> {
    let (delta_formula, near_kink) = impulse_formula(panel, t, pert, params)?;
    let base = step(panel, t, params)?.prediction;
    let delta_direct = perturbed_prediction(panel, t, params, std::slice::from_ref(pert))? - base;
    Ok(ImpulseResponse { delta_formula, delta_direct, near_kink })
}

/// Shift of one standardized input at one quarter, in units of its
/// rolling standard deviation.
#[derive(Debug, Clone, Copy, PartialEq)]
pub struct Shock {
    pub quarter: Quarter,
    pub variable: usize,
    pub shock_sigma: f64,
}

#[derive(Debug, Clone, Default, PartialEq)]
pub struct Scenario {
    pub shocks: Vec<Shock>,
}

pub const SCENARIO_HEADER: &str = "quarter,variable,shock_sigma";

/// Accepts the short names `u, s, r, v` or the source series ids.
pub fn variable_index(name: &str) -> Option<usize> {
    let n = name.trim().to_ascii_lowercase();
    let aliases = [["u", "unrate"], ["s", "psavert"], ["r", "pce"], ["v", "revolsl"]];
    aliases.iter().position(|a| a.contains(&n.as_str()))
}

impl FromStr for Scenario {
    type Err = AttributionError;

    fn from_str(text: &str) -> Result<Self> {
        let err = |line: usize, message: String| AttributionError::Scenario { line, message };
        let mut lines = text.lines().enumerate().filter(|(_, l)| !l.trim().is_empty());
        match lines.next() {
            Some((_, h)) if h.trim() == SCENARIO_HEADER => {}
            Some((i, h)) => return Err(err(i + 1, format!("expected header {SCENARIO_HEADER:?}, found {:?}", h.trim()))),
            None => return Err(err(1, "empty scenario".into())),
        }
        let mut shocks = Vec::new();
        for (i, line) in lines {
            let fields: Vec<&str> = line.split(',').map(str::trim).collect();
            let [q, var, sigma] = fields[..] else {
                return Err(err(i + 1, format!("expected 3 fields, found {}", fields.len())));
            };
            let quarter = q.parse().map_err(|_| err(i + 1, format!("bad quarter {q:?}")))?;
            let variable = variable_index(var).ok_or_else(|| err(i + 1, format!("unknown variable {var:?}")))?;
            let shock_sigma: f64 = sigma.parse().map_err(|_| err(i + 1, format!("bad shock {sigma:?}")))?;
            if !shock_sigma.is_finite() {
                return Err(err(i + 1, "shock must be finite".into()));
            }
            shocks.push(Shock { quarter, variable, shock_sigma });
        }
        Ok(Scenario { shocks })
    }
}

#[derive(Debug, Clone, PartialEq)]
pub struct StressRow {
    pub shock: Shock,
    pub in_window: bool,
    pub delta_direct: f64,
    /// `None` for non-linear heads.
    pub delta_formula: Option<f64>,
}

#[derive(Debug, Clone, PartialEq)]
pub struct StressReport {
    pub quarter: Quarter,
    pub baseline: f64,
    pub rows: Vec<StressRow>,
    /// All shocks applied together, fully recomputed.
    pub combined_direct: f64,
    /// Sum of the first-order deltas.
    pub combined_formula: Option<f64>,
}

pub const STRESS_HEADER: &str = "target_quarter,shock_quarter,variable,shock_sigma,in_window,delta_direct,delta_formula";

fn shock_perturbation(panel: &QuarterlyPanel, params: &ModelParams, sh: &Shock) -> Result<Perturbation> {
    let tau = panel.index_of(sh.quarter).ok_or(AttributionError::UnknownQuarter(sh.quarter))?;
    let x = panel.inputs[tau];
    let mut shocked = x;
    shocked[sh.variable] += sh.shock_sigma;
    let delta_m = embed_state(&shocked, &params.embedding) - embed_state(&x, &params.embedding);
    Ok(Perturbation { tau, delta_m })
}

pub fn stress_test(panel: &QuarterlyPanel, t: usize, scenario: &Scenario, params: &ModelParams) -> Result<StressReport> {
    let baseline = step(panel, t, params)?.prediction;
    let window = window_indices(t, params.lookback);
    let linear = matches!(params.head, HeadParams::Linear { .. });
    let mut rows = Vec::with_capacity(scenario.shocks.len());
    let mut active = Vec::new();
    for sh in &scenario.shocks {
        let pert = shock_perturbation(panel, params, sh)?;
        let in_window = window.contains(&pert.tau);
        let (delta_direct, delta_formula) = if in_window {
            let direct = perturbed_prediction(panel, t, params, std::slice::from_ref(&pert))? - baseline;
            let formula = if linear { Some(impulse_formula(panel, t, &pert, params)?.0) } else { None };
            active.push(pert);
            (direct, formula)
        } else {
            (0.0, linear.then_some(0.0))
        };
        rows.push(StressRow { shock: *sh, in_window, delta_direct, delta_formula });
    }
    let combined_direct = if active.is_empty() { 0.0 } else { perturbed_prediction(panel, t, params, &active)? - baseline };
    let combined_formula = if linear { Some(rows.iter().filter_map(|r| r.delta_formula).fold(0.0, |a, b| a + b)) } else { None };
    Ok(StressReport { quarter: panel.quarters[t], baseline, rows, combined_direct, combined_formula })
}

fn opt(v: Option<f64>) -> String {
    v.map(format_f64).unwrap_or_default()
}

impl StressReport {
    pub fn to_csv(&self) -> String {
        let mut out = format!("{STRESS_HEADER}\n");
        for r in &self.rows {
            let _ = writeln!(
                out,
                "{},{},{},{},{},{},{}",
                self.quarter,
                r.shock.quarter,
                VARIABLE_NAMES[r.shock.variable],
                format_f64(r.shock.shock_sigma),
                r.in_window,
                format_f64(r.delta_direct),
                opt(r.delta_formula)
            );
        }
        let _ = writeln!(out, "{},combined,all,,,{},{}", self.quarter, format_f64(self.combined_direct), opt(self.combined_formula));
        out
    }
}

#[derive(Debug, Clone, PartialEq)]
pub struct AttributionReport {
    pub quarter: Quarter,
    pub temporal: TemporalAttribution,
    pub geometric: Vec<Occlusion>,
    pub variable: VariableContributions,
    pub prediction: f64,
}

pub const ATTRIBUTION_HEADER: &str = "quarter,measure,label,value";

pub fn attribute(panel: &QuarterlyPanel, t: usize, params: &ModelParams) -> Result<AttributionReport> {
    Ok(AttributionReport {
        quarter: panel.quarters[t.min(panel.len().saturating_sub(1))],
        temporal: temporal_attribution(panel, t, params)?,
        geometric: geometric_occlusion(panel, t, params)?,
        variable: variable_contributions(panel, t, params)?,
        prediction: step(panel, t, params)?.prediction,
    })
}

impl AttributionReport {
    /// Rows without the header line.
    pub fn csv_rows(&self) -> String {
        let q = self.quarter;
        let mut out = String::new();
        let _ = writeln!(out, "{q},prediction,yhat,{}", format_f64(self.prediction));
        let _ = writeln!(out, "{q},convex,weights,{}", u8::from(self.temporal.convex));
        for (src, w) in &self.temporal.weights {
            let _ = writeln!(out, "{q},temporal,{src},{}", format_f64(*w));
        }
        for o in &self.geometric {
            let _ = writeln!(out, "{q},occlusion,{},{}", o.label, format_f64(o.delta));
        }
        for i in 0..4 {
            let _ = writeln!(out, "{q},variable_magnitude,{},{}", VARIABLE_NAMES[i], format_f64(self.variable.magnitudes[i]));
            let _ = writeln!(out, "{q},variable_share,{},{}", VARIABLE_NAMES[i], format_f64(self.variable.shares[i]));
        }
        out
    }
}

pub fn reports_to_csv(reports: &[AttributionReport]) -> String {
    let mut out = format!("{ATTRIBUTION_HEADER}\n");
    for r in reports {
        out.push_str(&r.csv_rows());
    }
    out
}

/// Every blade slot; convenient for full occlusion.
pub fn all_slots() -> Vec<usize> {
    (0..DIM).collect()
}
