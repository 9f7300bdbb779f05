//! Forward pass: panel → embedding → attention → head.

use rand::Rng;
use rand::SeedableRng;
use rand_chacha::ChaCha8Rng;
use thiserror::Error;

use crate::attention::{
    attend, project_qkv, window_indices, AttentionError, AttentionOutput, ProjectionParams, Qkv, WindowStats,
    DEFAULT_HIDDEN, INIT_HALF_WIDTH,
};
use crate::clifford::Multivector;
use crate::embed::{differences, embed_state, EmbeddingParams, BIVECTOR_OFFSET};
use crate::linalg::{dot, Matrix};
use crate::panel::{Quarter, QuarterlyPanel};

#[derive(Debug, Error, Clone, PartialEq)]
pub enum ModelError {
    #[error(transparent)]
    Attention(#[from] AttentionError),
    #[error("time index {t} has no prior quarter in a panel of {len} rows")]
    NotAdmissible { t: usize, len: usize },
    #[error("operation requires a linear head")]
    UnsupportedHead,
    #[error("invalid model parameters: {0}")]
    Invalid(String),
}

pub const DEFAULT_LOOKBACK: usize = 8;
pub const DEFAULT_MLP_HIDDEN: usize = 32;

#[derive(Debug, Clone, Copy, PartialEq, Eq, Default)]
pub enum HeadKind {
    #[default]
    Linear,
    Mlp,
}

impl std::fmt::Display for HeadKind {
    fn fmt(&self, f: &mut std::fmt::Formatter<'_>) -> std::fmt::Result {
        f.write_str(match self {
            HeadKind::Linear => "linear",
            HeadKind::Mlp => "mlp",
        })
    }
}

impl std::str::FromStr for HeadKind {
    type Err = String;
    fn from_str(s: &str) -> Result<Self, String> {
        match s {
            "linear" => Ok(HeadKind::Linear),
            "mlp" => Ok(HeadKind::Mlp),
            other => Err(format!("unknown head {other:?} (linear|mlp)")),
        }
    }
}

#[derive(Debug, Clone, PartialEq)]
pub enum HeadParams {
    /// `ŷ = w_outᵀ O + b_out`
    Linear { w_out: Vec<f64>, b_out: f64 },
    /// `ŷ = w2ᵀ max(0, W1 O + b1) + b2`
    Mlp { w1: Matrix, b1: Vec<f64>, w2: Vec<f64>, b2: f64 },
}

impl HeadParams {
    pub fn kind(&self) -> HeadKind {
        match self {
            HeadParams::Linear { .. } => HeadKind::Linear,
            HeadParams::Mlp { .. } => HeadKind::Mlp,
        }
    }

    pub fn init<R: Rng>(kind: HeadKind, d_h: usize, d_hidden: usize, rng: &mut R) -> Self {
        match kind {
            HeadKind::Linear => HeadParams::Linear {
                w_out: (0..d_h).map(|_| rng.gen_range(-INIT_HALF_WIDTH..=INIT_HALF_WIDTH)).collect(),
                b_out: 0.0,
            },
            HeadKind::Mlp => HeadParams::Mlp {
                w1: Matrix::uniform(d_hidden, d_h, INIT_HALF_WIDTH, rng),
                b1: vec![0.0; d_hidden],
                w2: (0..d_hidden).map(|_| rng.gen_range(-INIT_HALF_WIDTH..=INIT_HALF_WIDTH)).collect(),
                b2: 0.0,
            },
        }
    }

    pub fn apply(&self, o: &[f64]) -> f64 {
        match self {
            HeadParams::Linear { w_out, b_out } => dot(w_out, o) + b_out,
            HeadParams::Mlp { w1, b1, w2, b2 } => {
                let hidden = w1.matvec(o);
                hidden
                    .iter()
                    .zip(b1)
                    .zip(w2)
                    .map(|((h, b), w)| w * (h + b).max(0.0))
                    .sum::<f64>()
                    + b2
            }
        }
    }

    pub fn input_dim(&self) -> usize {
        match self {
            HeadParams::Linear { w_out, .. } => w_out.len(),
            HeadParams::Mlp { w1, .. } => w1.cols,
        }
    }
}

#[derive(Debug, Clone, PartialEq)]
pub struct ModelParams {
    pub embedding: EmbeddingParams,
    pub projection: ProjectionParams,
    pub head: HeadParams,
    pub lookback: usize,
}

/// Architecture knobs used to initialize parameters.
#[derive(Debug, Clone, Copy, PartialEq)]
pub struct ModelConfig {
    pub d_h: usize,
    pub d_hidden: usize,
    pub head: HeadKind,
    pub lookback: usize,
    pub leak: f64,
    pub eps: f64,
}

impl Default for ModelConfig {
    fn default() -> Self {
        ModelConfig {
            d_h: DEFAULT_HIDDEN,
            d_hidden: DEFAULT_MLP_HIDDEN,
            head: HeadKind::Linear,
            lookback: DEFAULT_LOOKBACK,
            leak: crate::attention::DEFAULT_LEAK,
            eps: crate::attention::DEFAULT_EPS,
        }
    }
}

impl ModelParams {
    /// Deterministic initialization from `seed`.
    pub fn init(cfg: &ModelConfig, seed: u64) -> Self {
        let mut rng = ChaCha8Rng::seed_from_u64(seed);
        let mut projection = ProjectionParams::init(cfg.d_h, &mut rng);
        projection.leak = cfg.leak;
        projection.eps = cfg.eps;
        let head = HeadParams::init(cfg.head, cfg.d_h, cfg.d_hidden, &mut rng);
        ModelParams { embedding: EmbeddingParams::default(), projection, head, lookback: cfg.lookback }
    }

    pub fn validate(&self) -> Result<(), ModelError> {
        if self.lookback == 0 {
            return Err(ModelError::Invalid("lookback must be at least 1".into()));
        }
        self.projection.validate()?;
        let emb = &self.embedding;
        if !(emb.alpha0.is_finite() && emb.alpha.iter().chain(&emb.gamma).all(|v| v.is_finite())) {
            return Err(ModelError::Invalid("non-finite embedding parameter".into()));
        }
        let d_h = self.projection.d_h();
        if self.head.input_dim() != d_h {
            return Err(ModelError::Invalid(format!("head input {} != d_h {d_h}", self.head.input_dim())));
        }
        if let HeadParams::Mlp { w1, b1, w2, .. } = &self.head {
            if b1.len() != w1.rows || w2.len() != w1.rows {
                return Err(ModelError::Invalid("mlp head hidden sizes disagree".into()));
            }
        }
        Ok(())
    }
}

/// Everything computed for one prediction.
#[derive(Debug, Clone)]
pub struct Step {
    pub t: usize,
    pub stats: WindowStats,
    pub attention: AttentionOutput,
    pub prediction: f64,
}

/// Per-row projections of a sequence of embedded states.
pub fn project_all(states: &[Multivector], p: &ProjectionParams) -> Vec<Qkv> {
    states.iter().map(|m| project_qkv(m, p)).collect()
}

/// Window statistics for target `t` from precomputed projections.
pub fn stats_at(qkv: &[Qkv], t: usize, lookback: usize) -> Result<WindowStats, ModelError> {
    let range = window_indices(t, lookback);
    if range.is_empty() || t > qkv.len() {
        return Err(ModelError::NotAdmissible { t, len: qkv.len() });
    }
    Ok(WindowStats::from_pairs(
        range.clone().collect(),
        qkv[range.clone()].iter().map(|x| x.k.clone()).collect(),
        qkv[range].iter().map(|x| x.v.clone()).collect(),
    )?)
}

/// Prediction for query `q` against history statistics.
pub fn step_with_query(q: &[f64], stats: WindowStats, t: usize, params: &ModelParams) -> Result<Step, ModelError> {
    let attention = attend(q, &stats, params.projection.eps)?;
    let prediction = params.head.apply(&attention.context);
    Ok(Step { t, stats, attention, prediction })
}

/// One prediction from a sequence of embedded states.
pub fn step_from_states(states: &[Multivector], t: usize, params: &ModelParams) -> Result<Step, ModelError> {
    if t == 0 || t >= states.len() {
        return Err(ModelError::NotAdmissible { t, len: states.len() });
    }
    let lo = t.saturating_sub(params.lookback);
    let qkv = project_all(&states[lo..=t], &params.projection);
    let local_t = t - lo;
    let mut stats = stats_at(&qkv, local_t, params.lookback)?;
    stats.window = (lo..t).collect();
    step_with_query(&qkv[local_t].q, stats, t, params)
}

pub fn step(panel: &QuarterlyPanel, t: usize, params: &ModelParams) -> Result<Step, ModelError> {
    if t == 0 || t >= panel.len() {
        return Err(ModelError::NotAdmissible { t, len: panel.len() });
    }
    let lo = t.saturating_sub(params.lookback);
    let states: Vec<Multivector> = panel.inputs[lo..=t].iter().map(|x| embed_state(x, &params.embedding)).collect();
    let mut s = step_from_states(&states, t - lo, params)?;
    s.t = t;
    s.stats.window = (lo..t).collect();
    Ok(s)
}

/// Standardized prediction `ŷ_t`.
pub fn forward(panel: &QuarterlyPanel, t: usize, params: &ModelParams) -> Result<f64, ModelError> {
    Ok(step(panel, t, params)?.prediction)
}

#[derive(Debug, Clone, Copy, PartialEq)]
pub struct Prediction {
    pub quarter: Quarter,
    pub index: usize,
    pub standardized: f64,
    pub destandardized: f64,
}

/// Predictions for every `t ≥ 1`.
pub fn predict_series(panel: &QuarterlyPanel, params: &ModelParams) -> Result<Vec<Prediction>, ModelError> {
    if panel.len() < 2 {
        return Err(ModelError::NotAdmissible { t: 1, len: panel.len() });
    }
    let states: Vec<Multivector> = panel.inputs.iter().map(|x| embed_state(x, &params.embedding)).collect();
    let qkv = project_all(&states, &params.projection);
    (1..panel.len())
        .map(|t| {
            let stats = stats_at(&qkv, t, params.lookback)?;
            let s = step_with_query(&qkv[t].q, stats, t, params)?;
            Ok(Prediction {
                quarter: panel.quarters[t],
                index: t,
                standardized: s.prediction,
                destandardized: panel.destandardize(t, s.prediction),
            })
        })
        .collect()
}

/// Attended contexts `O_t` for every `t ≥ 1`.
pub fn contexts(panel: &QuarterlyPanel, params: &ModelParams) -> Result<Vec<Vec<f64>>, ModelError> {
    let states: Vec<Multivector> = panel.inputs.iter().map(|x| embed_state(x, &params.embedding)).collect();
    let qkv = project_all(&states, &params.projection);
    (1..panel.len())
        .map(|t| {
            let stats = stats_at(&qkv, t, params.lookback)?;
            Ok(attend(&qkv[t].q, &stats, params.projection.eps)?.context)
        })
        .collect()
}

/// Time-varying regression form of a linear-head prediction:
/// `ŷ_t = β0 + Σ β_i x_i + Σ γ_ij (x_i − x_j)`.
#[derive(Debug, Clone, PartialEq)]
pub struct EffectiveCoefficients {
    pub quarter: Quarter,
    pub beta0: f64,
    pub beta: [f64; 4],
    pub gamma: [f64; 6],
    pub prediction: f64,
}

impl EffectiveCoefficients {
    pub fn reconstruct(&self, x: &[f64; 4]) -> f64 {
        let d = differences(x);
        self.beta0 + dot(&self.beta, x) + dot(&self.gamma, &d)
    }

    /// Total `∂ŷ/∂x_i` implied by the regression form.
    pub fn total_slope(&self, i: usize) -> f64 {
        let mut s = self.beta[i];
        for (k, &(a, b)) in crate::embed::PAIRS.iter().enumerate() {
            if a == i {
                s += self.gamma[k];
            } else if b == i {
                s -= self.gamma[k];
            }
        }
        s
    }
}

/// Gradient of a linear-head prediction with respect to the query-side
/// multivector `M_t`, holding the history window fixed.
pub fn query_gradient(step: &Step, qkv_t: &Qkv, params: &ModelParams) -> Result<Vec<f64>, ModelError> {
    let HeadParams::Linear { w_out, .. } = &params.head else {
        return Err(ModelError::UnsupportedHead);
    };
    let d = step.attention.denominator;
    let wo = dot(w_out, &step.attention.context);
    let sw = step.stats.s.matvec(w_out);
    let p = &params.projection;
    let d_pre: Vec<f64> = (0..p.d_h())
        .map(|a| (sw[a] - wo * step.stats.z[a]) / d * p.feature_map.slope(qkv_t.pre_q[a], p.leak))
        .collect();
    Ok(p.w_q.matvec_t(&d_pre))
}

/// Frozen-history linearization of the prediction at `t` in its current
/// inputs. `β_i` and `γ_ij` are the partial derivatives through the vector
/// and bivector slots; `β0` is the residual making the form exact at `x_t`.
pub fn effective_coefficients(
    panel: &QuarterlyPanel,
    t: usize,
    params: &ModelParams,
) -> Result<EffectiveCoefficients, ModelError> {
    if params.head.kind() != HeadKind::Linear {
        return Err(ModelError::UnsupportedHead);
    }
    let s = step(panel, t, params)?;
    let x = panel.inputs[t];
    let m = embed_state(&x, &params.embedding);
    let qkv_t = project_qkv(&m, &params.projection);
    let g = query_gradient(&s, &qkv_t, params)?;
    let emb = &params.embedding;
    let beta: [f64; 4] = std::array::from_fn(|i| g[1 + i] * emb.alpha[i]);
    let gamma: [f64; 6] = std::array::from_fn(|k| g[BIVECTOR_OFFSET + k] * emb.gamma[k]);
    let d = differences(&x);
    let beta0 = s.prediction - dot(&beta, &x) - dot(&gamma, &d);
    Ok(EffectiveCoefficients { quarter: panel.quarters[t], beta0, beta, gamma, prediction: s.prediction })
}
