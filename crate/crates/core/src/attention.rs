//! Linear attention over a strictly-past lookback window.
//!
//! Queries and keys pass through the shifted leaky ReLU feature map,
//! values do not. For target time `t` the window holds times
//! `t-L ..= t-1` (clipped at 0) and the context is
//! `O = (qᵀ S) / (qᵀ Z + ε)` with `S = Σ K Vᵀ`, `Z = Σ K` accumulated in
//! ascending time order.

use std::fmt;
use std::str::FromStr;

use rand::Rng;
use thiserror::Error;

use crate::clifford::{Multivector, DIM};
use crate::embed::EmbeddingParams;
use crate::linalg::{dot, norm, Matrix};

#[derive(Debug, Error, Clone, PartialEq)]
pub enum AttentionError {
    #[error("no history before time {0} to attend over")]
    EmptyHistory(usize),
    #[error("keys ({keys}) and values ({values}) differ in length")]
    LengthMismatch { keys: usize, values: usize },
    #[error("degenerate attention denominator {0:e} at time {1}")]
    DegenerateDenominator(f64, usize),
    #[error("invalid projection parameters: {0}")]
    InvalidParams(String),
}

/// Elementwise map applied to projected queries and keys.
#[derive(Debug, Clone, Copy, PartialEq, Eq, Default)]
pub enum FeatureMap {
    /// `x + 1` for `x > 0`, `leak·x + 1` otherwise.
    #[default]
    ShiftedLeakyRelu,
    /// Pass-through; used to check rotor invariance in the linear regime.
    Identity,
}

impl FeatureMap {
    #[inline]
    pub fn apply(self, x: f64, leak: f64) -> f64 {
        match self {
            FeatureMap::ShiftedLeakyRelu => {
                if x > 0.0 {
                    x + 1.0
                } else {
                    leak * x + 1.0
                }
            }
            FeatureMap::Identity => x,
        }
    }

    /// Derivative, taking the leak branch at the kink `x = 0`.
    #[inline]
    pub fn slope(self, x: f64, leak: f64) -> f64 {
        match self {
            FeatureMap::ShiftedLeakyRelu => {
                if x > 0.0 {
                    1.0
                } else {
                    leak
                }
            }
            FeatureMap::Identity => 1.0,
        }
    }
}

impl fmt::Display for FeatureMap {
    fn fmt(&self, f: &mut fmt::Formatter<'_>) -> fmt::Result {
        f.write_str(match self {
            FeatureMap::ShiftedLeakyRelu => "shifted_leaky_relu",
            FeatureMap::Identity => "identity",
        })
    }
}

impl FromStr for FeatureMap {
    type Err = String;
    fn from_str(s: &str) -> Result<Self, String> {
        match s {
            "shifted_leaky_relu" => Ok(FeatureMap::ShiftedLeakyRelu),
            "identity" => Ok(FeatureMap::Identity),
            other => Err(format!("unknown feature map {other:?}")),
        }
    }
}

/// Shifted leaky ReLU applied elementwise.
pub fn feature_map(x: &[f64], leak: f64) -> Vec<f64> {
    x.iter().map(|&v| FeatureMap::ShiftedLeakyRelu.apply(v, leak)).collect()
}

#[derive(Debug, Clone, PartialEq)]
pub struct ProjectionParams {
    pub w_q: Matrix,
    pub w_k: Matrix,
    pub w_v: Matrix,
    pub leak: f64,
    pub eps: f64,
    pub feature_map: FeatureMap,
}

pub const DEFAULT_HIDDEN: usize = 16;
pub const DEFAULT_LEAK: f64 = 0.1;
pub const DEFAULT_EPS: f64 = 1e-6;
pub const INIT_HALF_WIDTH: f64 = 0.1;

impl ProjectionParams {
    /// Seeded uniform `[-0.1, 0.1]` initialization.
    pub fn init<R: Rng>(d_h: usize, rng: &mut R) -> Self {
        ProjectionParams {
            w_q: Matrix::uniform(d_h, DIM, INIT_HALF_WIDTH, rng),
            w_k: Matrix::uniform(d_h, DIM, INIT_HALF_WIDTH, rng),
            w_v: Matrix::uniform(d_h, DIM, INIT_HALF_WIDTH, rng),
            leak: DEFAULT_LEAK,
            eps: DEFAULT_EPS,
            feature_map: FeatureMap::ShiftedLeakyRelu,
        }
    }

    pub fn d_h(&self) -> usize {
        self.w_q.rows
    }

    pub fn validate(&self) -> Result<(), AttentionError> {
        let bad = |m: String| Err(AttentionError::InvalidParams(m));
        if !(self.leak > 0.0 && self.leak < 1.0) {
            return bad(format!("leak {} not in (0,1)", self.leak));
        }
        if !(self.eps > 0.0 && self.eps.is_finite()) {
            return bad(format!("eps {} not positive", self.eps));
        }
        let d_h = self.w_q.rows;
        for (name, w) in [("w_q", &self.w_q), ("w_k", &self.w_k), ("w_v", &self.w_v)] {
            if w.rows != d_h || w.cols != DIM {
                return bad(format!("{name} is {}x{}, expected {d_h}x{DIM}", w.rows, w.cols));
            }
            if !w.is_finite() {
                return bad(format!("{name} has non-finite entries"));
            }
        }
        Ok(())
    }
}

/// Query, key and value for one state, with the pre-activations.
#[derive(Debug, Clone, PartialEq)]
pub struct Qkv {
    pub q: Vec<f64>,
    pub k: Vec<f64>,
    pub v: Vec<f64>,
    pub pre_q: Vec<f64>,
    pub pre_k: Vec<f64>,
}

pub fn project_query(m: &Multivector, p: &ProjectionParams) -> (Vec<f64>, Vec<f64>) {
    let pre = p.w_q.matvec(m.as_slice());
    let q = pre.iter().map(|&x| p.feature_map.apply(x, p.leak)).collect();
    (q, pre)
}

pub fn project_qkv(m: &Multivector, p: &ProjectionParams) -> Qkv {
    let (q, pre_q) = project_query(m, p);
    let pre_k = p.w_k.matvec(m.as_slice());
    let k = pre_k.iter().map(|&x| p.feature_map.apply(x, p.leak)).collect();
    let v = p.w_v.matvec(m.as_slice());
    Qkv { q, k, v, pre_q, pre_k }
}

/// Indices `max(0, t-L) ..= t-1`.
pub fn window_indices(t: usize, lookback: usize) -> std::ops::Range<usize> {
    t.saturating_sub(lookback)..t
}

/// Sufficient statistics of one lookback window.
#[derive(Debug, Clone, PartialEq)]
pub struct WindowStats {
    pub s: Matrix,
    pub z: Vec<f64>,
    pub window: Vec<usize>,
    pub keys: Vec<Vec<f64>>,
    pub values: Vec<Vec<f64>>,
}

impl WindowStats {
    /// Accumulate statistics for explicit (K, V) pairs in the given order.
    pub fn from_pairs(window: Vec<usize>, keys: Vec<Vec<f64>>, values: Vec<Vec<f64>>) -> Result<Self, AttentionError> {
        if keys.len() != values.len() {
            return Err(AttentionError::LengthMismatch { keys: keys.len(), values: values.len() });
        }
        let Some(first) = keys.first() else {
            return Err(AttentionError::EmptyHistory(0));
        };
        let d_k = first.len();
        let d_v = values[0].len();
        let mut s = Matrix::zeros(d_k, d_v);
        let mut z = vec![0.0; d_k];
        for (k, v) in keys.iter().zip(&values) {
            s.add_outer(k, v, 1.0);
            for (zi, ki) in z.iter_mut().zip(k) {
                *zi += ki;
            }
        }
        Ok(WindowStats { s, z, window, keys, values })
    }

    /// Max deviation between stored and freshly recomputed S, Z.
    pub fn recompute_deviation(&self) -> f64 {
        let fresh = Self::from_pairs(self.window.clone(), self.keys.clone(), self.values.clone())
            .expect("non-empty by construction");
        let ds = self.s.data.iter().zip(&fresh.s.data).map(|(a, b)| (a - b).abs());
        let dz = self.z.iter().zip(&fresh.z).map(|(a, b)| (a - b).abs());
        ds.chain(dz).fold(0.0, f64::max)
    }

    pub fn len(&self) -> usize {
        self.window.len()
    }

    pub fn is_empty(&self) -> bool {
        self.window.is_empty()
    }
}

/// Statistics over the most recent `min(L, t)` entries strictly before `t`.
pub fn window_stats(keys: &[Vec<f64>], values: &[Vec<f64>], t: usize, lookback: usize) -> Result<WindowStats, AttentionError> {
    if keys.len() != values.len() {
        return Err(AttentionError::LengthMismatch { keys: keys.len(), values: values.len() });
    }
    let range = window_indices(t.min(keys.len()), lookback);
    if range.is_empty() {
        return Err(AttentionError::EmptyHistory(t));
    }
    WindowStats::from_pairs(range.clone().collect(), keys[range.clone()].to_vec(), values[range].to_vec())
}

#[derive(Debug, Clone, PartialEq)]
pub struct AttentionOutput {
    pub context: Vec<f64>,
    /// `qᵀK_τ / Σ_j qᵀK_j`, normalized without ε.
    pub weights: Vec<f64>,
    /// `qᵀK_τ / (qᵀZ + ε)`; the context is `Σ damped_τ V_τ`.
    pub damped_weights: Vec<f64>,
    pub scores: Vec<f64>,
    /// `qᵀZ + ε`
    pub denominator: f64,
    /// All scores share one strict sign, so the ε-free weights are convex.
    pub convex: bool,
}

pub const MIN_DENOMINATOR: f64 = 1e-15;

pub fn attend(q: &[f64], w: &WindowStats, eps: f64) -> Result<AttentionOutput, AttentionError> {
    let denominator = dot(q, &w.z) + eps;
    if !(denominator.abs() >= MIN_DENOMINATOR) {
        return Err(AttentionError::DegenerateDenominator(denominator, w.window.last().map_or(0, |t| t + 1)));
    }
    let context: Vec<f64> = w.s.matvec_t(q).into_iter().map(|x| x / denominator).collect();
    let scores: Vec<f64> = w.keys.iter().map(|k| dot(q, k)).collect();
    let total: f64 = scores.iter().sum();
    let convex = scores.iter().all(|&s| s > 0.0) || scores.iter().all(|&s| s < 0.0);
    if !convex {
        log::warn!("attention scores of mixed sign; normalized weights are not convex");
    }
    let weights = scores.iter().map(|s| s / total).collect();
    let damped_weights = scores.iter().map(|s| s / denominator).collect();
    Ok(AttentionOutput { context, weights, damped_weights, scores, denominator, convex })
}

/// Worst-case bound on `‖O_t‖₂`: with `‖M‖ ≤ m`, `‖W‖_F ≤ c`,
/// `‖WM‖ ≤ mc`, the shifted map gives `‖φ(WM)‖ ≤ mc + √d_h`, hence
/// `‖O‖ ≤ L (mc + √d_h)² mc / ε = L m³c³ (1 + √d_h/(mc))² / ε`.
///
/// Requires `qᵀZ ≥ 0`, guaranteed when `mc ≤ 1/leak` (all features ≥ 0).
/// Returns `None` outside that regime or for the identity feature map.
pub fn context_norm_bound(lookback: usize, state_bound: f64, weight_bound: f64, p: &ProjectionParams) -> Option<f64> {
    if p.feature_map != FeatureMap::ShiftedLeakyRelu {
        return None;
    }
    let mc = state_bound * weight_bound;
    if mc > 1.0 / p.leak {
        return None;
    }
    let shifted = mc + (p.d_h() as f64).sqrt();
    Some(lookback as f64 * shifted * shifted * mc / p.eps)
}

/// Bound for embedded states: `‖x‖ ≤ x_bound` mapped through the embedding.
pub fn context_norm_bound_for_inputs(
    lookback: usize,
    x_bound: f64,
    weight_bound: f64,
    embedding: &EmbeddingParams,
    p: &ProjectionParams,
) -> Option<f64> {
    context_norm_bound(lookback, embedding.norm_bound(x_bound), weight_bound, p)
}

pub fn context_norm(out: &AttentionOutput) -> f64 {
    norm(&out.context)
}
