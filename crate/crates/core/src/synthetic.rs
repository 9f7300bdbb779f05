//! Synthetic panels and parameter draws used by tests, selfcheck and demos.

use rand::{Rng, SeedableRng};
use rand_chacha::ChaCha8Rng;
use rand_distr::{Distribution, StandardNormal};

use crate::linalg::Matrix;
use crate::model::{HeadParams, ModelConfig, ModelParams};
use crate::panel::{Quarter, QuarterlyPanel};

pub const START: Quarter = Quarter { year: 1980, q: 1 };

fn normal(rng: &mut ChaCha8Rng) -> f64 {
    StandardNormal.sample(rng)
}

/// Independent standard-normal inputs and target.
pub fn random_panel(n: usize, seed: u64) -> QuarterlyPanel {
    let mut rng = ChaCha8Rng::seed_from_u64(seed);
    let inputs = (0..n).map(|_| [normal(&mut rng), normal(&mut rng), normal(&mut rng), normal(&mut rng)]).collect();
    let target = (0..n).map(|_| normal(&mut rng)).collect();
    QuarterlyPanel::synthetic(START, inputs, target)
}

/// Parameters with every learnable entry drawn away from the defaults:
/// matrices and head uniform on `[-half_width, half_width]`, embedding
/// coefficients uniform on `[0.5, 1.5]`.
pub fn random_params(cfg: &ModelConfig, seed: u64, half_width: f64) -> ModelParams {
    let mut p = ModelParams::init(cfg, seed);
    let mut rng = ChaCha8Rng::seed_from_u64(seed ^ 0x5eed);
    let d_h = cfg.d_h;
    p.projection.w_q = Matrix::uniform(d_h, 16, half_width, &mut rng);
    p.projection.w_k = Matrix::uniform(d_h, 16, half_width, &mut rng);
    p.projection.w_v = Matrix::uniform(d_h, 16, half_width, &mut rng);
    p.embedding.alpha0 = rng.gen_range(0.5..1.5);
    for a in p.embedding.alpha.iter_mut().chain(p.embedding.gamma.iter_mut()) {
        *a = rng.gen_range(0.5..1.5);
    }
    match &mut p.head {
        HeadParams::Linear { w_out, b_out } => {
            w_out.iter_mut().for_each(|w| *w = rng.gen_range(-half_width..half_width));
            *b_out = rng.gen_range(-half_width..half_width);
        }
        HeadParams::Mlp { w1, b1, w2, b2 } => {
            *w1 = Matrix::uniform(w1.rows, w1.cols, half_width, &mut rng);
            b1.iter_mut().for_each(|w| *w = rng.gen_range(-half_width..half_width));
            w2.iter_mut().for_each(|w| *w = rng.gen_range(-half_width..half_width));
            *b2 = rng.gen_range(-half_width..half_width);
        }
    }
    p
}

/// Period, in quarters, of the cycle driving [`learnable_panel`].
pub const LEARNABLE_PERIOD: f64 = 80.0;

/// `y_t = 0.5 u_t + N(0, noise²)` where `u` is a slow unit-amplitude cycle
/// plus a small persistent AR(1) wobble; the other inputs are white noise.
/// The model only sees `u` up to `t` through the query, so `u` must be
/// forecastable from its own past for the fit to be learnable.
pub fn learnable_panel(n: usize, noise: f64, seed: u64) -> QuarterlyPanel {
    let mut rng = ChaCha8Rng::seed_from_u64(seed);
    let mut wobble = 0.0;
    let mut inputs = Vec::with_capacity(n);
    let mut target = Vec::with_capacity(n);
    for t in 0..n {
        let u = (std::f64::consts::TAU * t as f64 / LEARNABLE_PERIOD).sin() + wobble;
        inputs.push([u, normal(&mut rng), normal(&mut rng), normal(&mut rng)]);
        target.push(0.5 * u + noise * normal(&mut rng));
        wobble = 0.9 * wobble + 0.05 * normal(&mut rng);
    }
    QuarterlyPanel::synthetic(START, inputs, target)
}

/// All four inputs share one series, so every pairwise difference is zero.
pub fn synchronized_panel(n: usize, seed: u64) -> QuarterlyPanel {
    let mut rng = ChaCha8Rng::seed_from_u64(seed);
    let inputs = (0..n).map(|_| [normal(&mut rng); 4]).collect();
    let target = (0..n).map(|_| normal(&mut rng)).collect();
    QuarterlyPanel::synthetic(START, inputs, target)
}

/// Synchronized panel with a divergence of half-width `size` planted at `at`:
/// unemployment and revolving credit move up, saving and spending move down.
pub fn planted_divergence(n: usize, at: usize, size: f64, seed: u64) -> QuarterlyPanel {
    let mut p = synchronized_panel(n, seed);
    let base = p.inputs[at][0];
    p.inputs[at] = [base + size, base - size, base - size, base + size];
    p
}

/// Small common co-movement everywhere except `planted` quarters, where the
/// inputs alternate sign `(a, −a, a, −a)` and interactions dominate.
pub fn feedback_spiral(n: usize, planted: &[usize], amplitude: f64, seed: u64) -> QuarterlyPanel {
    let mut rng = ChaCha8Rng::seed_from_u64(seed);
    let mut inputs = Vec::with_capacity(n);
    for t in 0..n {
        let common = 0.5 * normal(&mut rng);
        inputs.push(if planted.contains(&t) {
            [amplitude, -amplitude, amplitude, -amplitude]
        } else {
            [common; 4]
        });
    }
    let target = (0..n).map(|_| normal(&mut rng)).collect();
    QuarterlyPanel::synthetic(START, inputs, target)
}

#[cfg(test)]
mod tests {
    use super::*;

    #[test]
    fn generators_are_seeded() {
        assert_eq!(random_panel(5, 3), random_panel(5, 3));
        assert_ne!(random_panel(5, 3), random_panel(5, 4));
        assert_eq!(learnable_panel(9, 0.05, 1), learnable_panel(9, 0.05, 1));
        let p = planted_divergence(10, 4, 3.0, 2);
        assert_eq!(p.inputs[4][0] - p.inputs[4][1], 6.0);
        assert!(p.inputs[3].iter().all(|v| *v == p.inputs[3][0]));
    }
}
