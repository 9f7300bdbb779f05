//! Objective, reverse-mode gradients and full-batch gradient descent.
//!
//! The objective is the mean squared error of standardized predictions over
//! every admissible quarter plus `λ_QK (‖W_Q‖² + ‖W_K‖²) + λ_V ‖W_V‖²`.

use thiserror::Error;

use crate::attention::{Qkv, WindowStats};
use crate::clifford::{Multivector, DIM};
use crate::embed::{differences, embed_state, EmbeddingParams, BIVECTOR_OFFSET};
use crate::linalg::{axpy, dot, Matrix};
use crate::model::{project_all, stats_at, step_with_query, HeadParams, ModelError, ModelParams};
use crate::panel::QuarterlyPanel;

#[derive(Debug, Error, Clone, PartialEq)]
pub enum TrainError {
    #[error(transparent)]
    Model(#[from] ModelError),
    #[error("panel has {0} rows; need at least 2 for one prediction")]
    TooFewRows(usize),
    #[error("optimizer config: {0}")]
    Config(String),
    #[error("non-finite loss at step {0}")]
    NonFinite(usize),
    #[error("gradient check deviation {deviation:e} exceeds gate {gate:e}")]
    GradientGate { deviation: f64, gate: f64 },
}

#[derive(Debug, Clone, Copy, PartialEq)]
pub struct LossConfig {
    pub lambda_qk: f64,
    pub lambda_v: f64,
}

impl Default for LossConfig {
    fn default() -> Self {
        LossConfig { lambda_qk: 1e-3, lambda_v: 1e-4 }
    }
}

impl LossConfig {
    /// Logs a warning when the query/key penalty is not the stronger one.
    pub fn check(&self) -> bool {
        let ok = self.lambda_qk > self.lambda_v && self.lambda_v >= 0.0;
        if !ok {
            log::warn!("lambda_qk ({}) should exceed lambda_v ({}) >= 0", self.lambda_qk, self.lambda_v);
        }
        ok
    }
}

#[derive(Debug, Clone, Copy, PartialEq)]
pub struct OptimizerConfig {
    pub learning_rate: f64,
    pub steps: usize,
    pub seed: u64,
    /// Global gradient-norm clip.
    pub gradient_clip: f64,
    /// Refuse to train when the gradient check deviates more than this;
    /// `None` disables the gate.
    pub gradient_gate: Option<f64>,
}

pub const DEFAULT_GRADIENT_GATE: f64 = 1e-3;

impl Default for OptimizerConfig {
    fn default() -> Self {
        OptimizerConfig { learning_rate: 1e-3, steps: 5000, seed: 0, gradient_clip: 10.0, gradient_gate: Some(DEFAULT_GRADIENT_GATE) }
    }
}

impl OptimizerConfig {
    pub fn validate(&self) -> Result<(), TrainError> {
        if !(self.learning_rate > 0.0 && self.learning_rate.is_finite()) {
            return Err(TrainError::Config(format!("learning_rate {} must be positive", self.learning_rate)));
        }
        if self.steps == 0 {
            return Err(TrainError::Config("steps must be at least 1".into()));
        }
        if !(self.gradient_clip > 0.0) {
            return Err(TrainError::Config(format!("gradient_clip {} must be positive", self.gradient_clip)));
        }
        Ok(())
    }
}

#[derive(Debug, Clone, Copy, PartialEq)]
pub struct LossParts {
    pub total: f64,
    pub mse: f64,
    pub reg: f64,
}

pub fn regularization(params: &ModelParams, cfg: &LossConfig) -> f64 {
    let p = &params.projection;
    cfg.lambda_qk * (p.w_q.frobenius_sq() + p.w_k.frobenius_sq()) + cfg.lambda_v * p.w_v.frobenius_sq()
}

struct Prepared {
    states: Vec<Multivector>,
    qkv: Vec<Qkv>,
}

fn prepare(panel: &QuarterlyPanel, params: &ModelParams) -> Result<Prepared, TrainError> {
    if panel.len() < 2 {
        return Err(TrainError::TooFewRows(panel.len()));
    }
    let states: Vec<Multivector> = panel.inputs.iter().map(|x| embed_state(x, &params.embedding)).collect();
    let qkv = project_all(&states, &params.projection);
    Ok(Prepared { states, qkv })
}

pub fn loss(panel: &QuarterlyPanel, params: &ModelParams, cfg: &LossConfig) -> Result<LossParts, TrainError> {
    let prep = prepare(panel, params)?;
    let n = panel.len() - 1;
    let mut sse = 0.0;
    for t in 1..panel.len() {
        let stats = stats_at(&prep.qkv, t, params.lookback)?;
        let s = step_with_query(&prep.qkv[t].q, stats, t, params)?;
        let r = s.prediction - panel.target[t];
        sse += r * r;
    }
    let mse = sse / n as f64;
    let reg = regularization(params, cfg);
    Ok(LossParts { total: mse + reg, mse, reg })
}

/// Gradient with the same shape as [`ModelParams`].
#[derive(Debug, Clone, PartialEq)]
pub struct Gradients {
    pub embedding: EmbeddingParams,
    pub w_q: Matrix,
    pub w_k: Matrix,
    pub w_v: Matrix,
    pub head: HeadParams,
}

impl Gradients {
    fn zeros_like(params: &ModelParams) -> Self {
        let p = &params.projection;
        let head = match &params.head {
            HeadParams::Linear { w_out, .. } => HeadParams::Linear { w_out: vec![0.0; w_out.len()], b_out: 0.0 },
            HeadParams::Mlp { w1, b1, w2, .. } => HeadParams::Mlp {
                w1: Matrix::zeros(w1.rows, w1.cols),
                b1: vec![0.0; b1.len()],
                w2: vec![0.0; w2.len()],
                b2: 0.0,
            },
        };
        Gradients {
            embedding: EmbeddingParams { alpha0: 0.0, alpha: [0.0; 4], gamma: [0.0; 6] },
            w_q: Matrix::zeros(p.w_q.rows, p.w_q.cols),
            w_k: Matrix::zeros(p.w_k.rows, p.w_k.cols),
            w_v: Matrix::zeros(p.w_v.rows, p.w_v.cols),
            head,
        }
    }

    pub fn flatten(&self) -> Vec<f64> {
        let mut out = Vec::new();
        push_learnable(&mut out, &self.embedding, [&self.w_q, &self.w_k, &self.w_v], &self.head);
        out
    }

    pub fn norm(&self) -> f64 {
        self.flatten().iter().map(|v| v * v).sum::<f64>().sqrt()
    }
}

fn push_learnable(out: &mut Vec<f64>, e: &EmbeddingParams, ws: [&Matrix; 3], head: &HeadParams) {
    out.push(e.alpha0);
    out.extend_from_slice(&e.alpha);
    out.extend_from_slice(&e.gamma);
    for w in ws {
        out.extend_from_slice(&w.data);
    }
    match head {
        HeadParams::Linear { w_out, b_out } => {
            out.extend_from_slice(w_out);
            out.push(*b_out);
        }
        HeadParams::Mlp { w1, b1, w2, b2 } => {
            out.extend_from_slice(&w1.data);
            out.extend_from_slice(b1);
            out.extend_from_slice(w2);
            out.push(*b2);
        }
    }
}

/// Learnable scalars in a fixed order:
/// `α0, α, γ, W_Q, W_K, W_V, head`.
pub fn flatten(params: &ModelParams) -> Vec<f64> {
    let p = &params.projection;
    let mut out = Vec::new();
    push_learnable(&mut out, &params.embedding, [&p.w_q, &p.w_k, &p.w_v], &params.head);
    out
}

/// Inverse of [`flatten`]; non-learnable fields are taken from `template`.
pub fn unflatten(template: &ModelParams, flat: &[f64]) -> ModelParams {
    let mut p = template.clone();
    let mut it = flat.iter().copied();
    let mut take = |dst: &mut [f64]| {
        for d in dst.iter_mut() {
            *d = it.next().expect("flat vector too short");
        }
    };
    take(std::slice::from_mut(&mut p.embedding.alpha0));
    take(&mut p.embedding.alpha);
    take(&mut p.embedding.gamma);
    take(&mut p.projection.w_q.data);
    take(&mut p.projection.w_k.data);
    take(&mut p.projection.w_v.data);
    match &mut p.head {
        HeadParams::Linear { w_out, b_out } => {
            take(w_out);
            take(std::slice::from_mut(b_out));
        }
        HeadParams::Mlp { w1, b1, w2, b2 } => {
            take(&mut w1.data);
            take(b1);
            take(w2);
            take(std::slice::from_mut(b2));
        }
    }
    p
}

/// Backpropagate `dŷ` through the head, returning `∂/∂O`.
fn head_backward(head: &HeadParams, grad: &mut HeadParams, o: &[f64], dy: f64) -> Vec<f64> {
    match (head, grad) {
        (HeadParams::Linear { w_out, .. }, HeadParams::Linear { w_out: gw, b_out: gb }) => {
            axpy(gw, dy, o);
            *gb += dy;
            w_out.iter().map(|w| w * dy).collect()
        }
        (HeadParams::Mlp { w1, b1, w2, .. }, HeadParams::Mlp { w1: gw1, b1: gb1, w2: gw2, b2: gb2 }) => {
            let pre: Vec<f64> = w1.matvec(o).iter().zip(b1).map(|(h, b)| h + b).collect();
            let mut dh = vec![0.0; pre.len()];
            for (j, &h) in pre.iter().enumerate() {
                gw2[j] += dy * h.max(0.0);
                // relu'(0) = 0
                if h > 0.0 {
                    dh[j] = dy * w2[j];
                }
            }
            *gb2 += dy;
            gw1.add_outer(&dh, o, 1.0);
            axpy(gb1, 1.0, &dh);
            w1.matvec_t(&dh)
        }
        _ => unreachable!("gradient head shape mirrors parameters"),
    }
}

/// Adjoints of one attention evaluation.
struct AttentionAdjoint {
    dq: Vec<f64>,
    dk: Vec<Vec<f64>>,
    dv: Vec<Vec<f64>>,
}

fn attention_backward(q: &[f64], stats: &WindowStats, context: &[f64], denominator: f64, d_o: &[f64]) -> AttentionAdjoint {
    let c = dot(d_o, context);
    let s_do = stats.s.matvec(d_o);
    let dq = s_do.iter().zip(&stats.z).map(|(a, z)| (a - c * z) / denominator).collect();
    let mut dk = Vec::with_capacity(stats.len());
    let mut dv = Vec::with_capacity(stats.len());
    for (k, v) in stats.keys.iter().zip(&stats.values) {
        let coef = (dot(d_o, v) - c) / denominator;
        dk.push(q.iter().map(|qa| qa * coef).collect());
        let score = dot(q, k) / denominator;
        dv.push(d_o.iter().map(|g| g * score).collect());
    }
    AttentionAdjoint { dq, dk, dv }
}

/// Loss and its exact gradient with respect to every learnable parameter.
pub fn gradients(panel: &QuarterlyPanel, params: &ModelParams, cfg: &LossConfig) -> Result<(LossParts, Gradients), TrainError> {
    let prep = prepare(panel, params)?;
    let rows = panel.len();
    let n = (rows - 1) as f64;
    let d_h = params.projection.d_h();
    let mut grad = Gradients::zeros_like(params);
    let mut dq_rows = vec![vec![0.0; d_h]; rows];
    let mut dk_rows = vec![vec![0.0; d_h]; rows];
    let mut dv_rows = vec![vec![0.0; d_h]; rows];
    let mut sse = 0.0;

    for t in 1..rows {
        let stats = stats_at(&prep.qkv, t, params.lookback)?;
        let s = step_with_query(&prep.qkv[t].q, stats, t, params)?;
        let r = s.prediction - panel.target[t];
        sse += r * r;
        let dy = 2.0 * r / n;
        let d_o = head_backward(&params.head, &mut grad.head, &s.attention.context, dy);
        let adj = attention_backward(&prep.qkv[t].q, &s.stats, &s.attention.context, s.attention.denominator, &d_o);
        axpy(&mut dq_rows[t], 1.0, &adj.dq);
        for ((tau, dk), dv) in s.stats.window.iter().zip(&adj.dk).zip(&adj.dv) {
            axpy(&mut dk_rows[*tau], 1.0, dk);
            axpy(&mut dv_rows[*tau], 1.0, dv);
        }
    }

    let p = &params.projection;
    for i in 0..rows {
        let m = prep.states[i].as_slice();
        let qkv = &prep.qkv[i];
        let dpre_q: Vec<f64> =
            dq_rows[i].iter().zip(&qkv.pre_q).map(|(g, x)| g * p.feature_map.slope(*x, p.leak)).collect();
        let dpre_k: Vec<f64> =
            dk_rows[i].iter().zip(&qkv.pre_k).map(|(g, x)| g * p.feature_map.slope(*x, p.leak)).collect();
        grad.w_q.add_outer(&dpre_q, m, 1.0);
        grad.w_k.add_outer(&dpre_k, m, 1.0);
        grad.w_v.add_outer(&dv_rows[i], m, 1.0);
        let mut dm = p.w_q.matvec_t(&dpre_q);
        axpy(&mut dm, 1.0, &p.w_k.matvec_t(&dpre_k));
        axpy(&mut dm, 1.0, &p.w_v.matvec_t(&dv_rows[i]));
        debug_assert_eq!(dm.len(), DIM);

        let x = &panel.inputs[i];
        grad.embedding.alpha0 += dm[0];
        for k in 0..4 {
            grad.embedding.alpha[k] += dm[1 + k] * x[k];
        }
        for (k, d) in differences(x).into_iter().enumerate() {
            grad.embedding.gamma[k] += dm[BIVECTOR_OFFSET + k] * d;
        }
    }

    axpy(&mut grad.w_q.data, 2.0 * cfg.lambda_qk, &p.w_q.data);
    axpy(&mut grad.w_k.data, 2.0 * cfg.lambda_qk, &p.w_k.data);
    axpy(&mut grad.w_v.data, 2.0 * cfg.lambda_v, &p.w_v.data);

    let mse = sse / n;
    let reg = regularization(params, cfg);
    Ok((LossParts { total: mse + reg, mse, reg }, grad))
}

/// Branch pattern of every piecewise-linear unit evaluated by the loss.
pub fn activation_pattern(panel: &QuarterlyPanel, params: &ModelParams) -> Result<Vec<bool>, TrainError> {
    let prep = prepare(panel, params)?;
    let mut pattern: Vec<bool> = prep.qkv.iter().flat_map(|x| x.pre_q.iter().chain(&x.pre_k).map(|v| *v > 0.0)).collect();
    if let HeadParams::Mlp { w1, b1, .. } = &params.head {
        for t in 1..panel.len() {
            let stats = stats_at(&prep.qkv, t, params.lookback)?;
            let s = step_with_query(&prep.qkv[t].q, stats, t, params)?;
            pattern.extend(w1.matvec(&s.attention.context).iter().zip(b1).map(|(h, b)| h + b > 0.0));
        }
    }
    Ok(pattern)
}

/// Floor on the relative-deviation denominator, so gradients at the
/// finite-difference noise level do not dominate.
pub const GRAD_CHECK_FLOOR: f64 = 1e-6;

#[derive(Debug, Clone, Copy, PartialEq)]
pub struct GradCheck {
    /// `max |g − fd| / max(|g|, |fd|, floor)` over checked coordinates.
    pub max_relative_deviation: f64,
    pub worst_index: usize,
    pub checked: usize,
    /// Coordinates skipped because a ±h step changes some branch.
    pub skipped_at_kinks: usize,
}

/// Central finite-difference check of [`gradients`] over all parameters.
pub fn gradient_check(panel: &QuarterlyPanel, params: &ModelParams, cfg: &LossConfig, h: f64) -> Result<GradCheck, TrainError> {
    let (_, grad) = gradients(panel, params, cfg)?;
    let analytic = grad.flatten();
    let base = flatten(params);
    let pattern = activation_pattern(panel, params)?;
    let mut out = GradCheck { max_relative_deviation: 0.0, worst_index: 0, checked: 0, skipped_at_kinks: 0 };
    let mut theta = base.clone();
    for i in 0..base.len() {
        theta[i] = base[i] + h;
        let up = unflatten(params, &theta);
        theta[i] = base[i] - h;
        let dn = unflatten(params, &theta);
        theta[i] = base[i];
        if activation_pattern(panel, &up)? != pattern || activation_pattern(panel, &dn)? != pattern {
            out.skipped_at_kinks += 1;
            continue;
        }
        let fd = (loss(panel, &up, cfg)?.total - loss(panel, &dn, cfg)?.total) / (2.0 * h);
        let a = analytic[i];
        let dev = (a - fd).abs() / a.abs().max(fd.abs()).max(GRAD_CHECK_FLOOR);
        out.checked += 1;
        if dev > out.max_relative_deviation {
            out.max_relative_deviation = dev;
            out.worst_index = i;
        }
    }
    Ok(out)
}

#[derive(Debug, Clone, PartialEq)]
pub struct TrainReport {
    /// Total loss before each update; one entry per step.
    pub loss_trajectory: Vec<f64>,
    pub initial_loss: f64,
    pub initial_mse: f64,
    pub final_loss: f64,
    pub final_mse: f64,
    pub final_reg: f64,
    pub best_step: usize,
    pub grad_check: Option<GradCheck>,
    pub failed: bool,
}

/// Rows used by the pre-training gradient check.
pub const GATE_ROWS: usize = 20;

/// Full-batch gradient descent with global-norm clipping. Returns the
/// best-loss parameters seen, including the state after the last update.
pub fn fit(
    panel: &QuarterlyPanel,
    init: &ModelParams,
    lcfg: &LossConfig,
    ocfg: &OptimizerConfig,
) -> Result<(ModelParams, TrainReport), TrainError> {
    ocfg.validate()?;
    lcfg.check();
    init.validate()?;
    let grad_check = match ocfg.gradient_gate {
        Some(gate) => {
            let rows = panel.len().min(GATE_ROWS);
            let prefix = QuarterlyPanel {
                quarters: panel.quarters[..rows].to_vec(),
                inputs: panel.inputs[..rows].to_vec(),
                target: panel.target[..rows].to_vec(),
                target_moments: panel.target_moments[..rows].to_vec(),
            };
            let gc = gradient_check(&prefix, init, lcfg, 1e-5)?;
            if gc.max_relative_deviation > gate {
                return Err(TrainError::GradientGate { deviation: gc.max_relative_deviation, gate });
            }
            Some(gc)
        }
        None => None,
    };

    let mut theta = flatten(init);
    let mut current = init.clone();
    let mut trajectory = Vec::with_capacity(ocfg.steps);
    let mut best: Option<(f64, usize, ModelParams, LossParts)> = None;
    let mut initial: Option<LossParts> = None;
    for step in 0..ocfg.steps {
        let (parts, grad) = gradients(panel, &current, lcfg)?;
        if !parts.total.is_finite() {
            return Err(TrainError::NonFinite(step));
        }
        initial.get_or_insert(parts);
        trajectory.push(parts.total);
        if best.as_ref().is_none_or(|b| parts.total < b.0) {
            best = Some((parts.total, step, current.clone(), parts));
        }
        let g = grad.flatten();
        let gnorm = g.iter().map(|v| v * v).sum::<f64>().sqrt();
        let scale = if gnorm > ocfg.gradient_clip { ocfg.gradient_clip / gnorm } else { 1.0 };
        axpy(&mut theta, -ocfg.learning_rate * scale, &g);
        current = unflatten(init, &theta);
    }
    let last = loss(panel, &current, lcfg)?;
    if !last.total.is_finite() {
        return Err(TrainError::NonFinite(ocfg.steps));
    }
    if best.as_ref().is_none_or(|b| last.total < b.0) {
        best = Some((last.total, ocfg.steps, current, last));
    }
    let (_, best_step, params, parts) = best.expect("at least one step");
    let initial = initial.expect("at least one step");
    let report = TrainReport {
        loss_trajectory: trajectory,
        initial_loss: initial.total,
        initial_mse: initial.mse,
        final_loss: parts.total,
        final_mse: parts.mse,
        final_reg: parts.reg,
        best_step,
        grad_check,
        failed: parts.total > initial.total,
    };
    Ok((params, report))
}
