//! Built-in verification suites run by `gacredit selfcheck`.
//!
//! Every suite draws from a seeded generator, so the report text is a pure
//! function of the seed (and of the blade table under test).

use std::fmt::Write as _;

use rand::{Rng, SeedableRng};
use rand_chacha::ChaCha8Rng;

use crate::analysis::{lipschitz_probe, nowcast_state, quarterly_state};
use crate::attention::{attend, context_norm, context_norm_bound_for_inputs, project_qkv, FeatureMap, WindowStats};
use crate::attribution::{impulse_formula, perturbed_prediction, Perturbation};
use crate::clifford::{BladeTable, Multivector, Rotor, BLADE_MASKS, BLADE_TABLE, DIM};
use crate::embed::{embed_state, EmbeddingParams};
use crate::linalg::{dot, Matrix};
use crate::model::{step, ModelConfig};
use crate::panel::QuarterlyPanel;
use crate::synthetic;
use crate::train::{gradient_check, LossConfig};

#[derive(Debug, Clone, PartialEq)]
pub struct SuiteResult {
    pub name: &'static str,
    pub passed: bool,
    pub detail: String,
}

#[derive(Debug, Clone, PartialEq)]
pub struct SelfCheckReport {
    pub seed: u64,
    pub suites: Vec<SuiteResult>,
}

impl SelfCheckReport {
    pub fn passed(&self) -> bool {
        self.suites.iter().all(|s| s.passed)
    }

    pub fn to_text(&self) -> String {
        let mut out = format!("selfcheck seed={}\n", self.seed);
        for s in &self.suites {
            let _ = writeln!(out, "{} {}: {}", if s.passed { "PASS" } else { "FAIL" }, s.name, s.detail);
        }
        let _ = writeln!(out, "{}", if self.passed() { "all suites passed" } else { "selfcheck FAILED" });
        out
    }
}

/// Blade product by explicit factor lists: concatenate, then bubble sort
/// with a sign flip per swap and cancellation of equal neighbours.
pub fn brute_force_table() -> BladeTable {
    let mut index = [[0u8; DIM]; DIM];
    let mut sign = [[1i8; DIM]; DIM];
    for a in 0..DIM {
        for b in 0..DIM {
            let mut f: Vec<u8> = Vec::new();
            for m in [BLADE_MASKS[a], BLADE_MASKS[b]] {
                f.extend((0..4u8).filter(|k| m & (1 << k) != 0));
            }
            let mut s = 1i8;
            let mut i = 0;
            while i + 1 < f.len() {
                if f[i] > f[i + 1] {
                    f.swap(i, i + 1);
                    s = -s;
                    i = i.saturating_sub(1);
                } else if f[i] == f[i + 1] {
                    f.drain(i..i + 2);
                    i = i.saturating_sub(1);
                } else {
                    i += 1;
                }
            }
            let mask = f.iter().fold(0u8, |m, k| m | (1 << k));
            index[a][b] = BLADE_MASKS.iter().position(|&x| x == mask).expect("all masks listed") as u8;
            sign[a][b] = s;
        }
    }
    BladeTable { index, sign }
}

fn random_mv(rng: &mut ChaCha8Rng) -> Multivector {
    Multivector::from_coeffs(std::array::from_fn(|_| rng.gen_range(-1.0..1.0)))
}

fn random_vector(rng: &mut ChaCha8Rng) -> Multivector {
    Multivector::vector(std::array::from_fn(|_| rng.gen_range(-1.0..1.0)))
}

/// A product of six random plane rotations.
pub fn random_rotor(rng: &mut ChaCha8Rng) -> Rotor {
    let mut r = Rotor::identity();
    for _ in 0..6 {
        let i = rng.gen_range(1..=4);
        let mut j = rng.gen_range(1..=3);
        if j >= i {
            j += 1;
        }
        let theta = rng.gen_range(-std::f64::consts::PI..std::f64::consts::PI);
        r = r.then(&Rotor::in_plane(i, j, theta).expect("distinct axes"));
    }
    r
}

pub const ALGEBRA_TRIPLES: usize = 1000;
pub const ALGEBRA_TOLERANCE: f64 = 1e-12;

/// Table against brute force, then associativity and distributivity of the
/// product the table defines.
pub fn algebra_suite(table: &BladeTable, seed: u64) -> SuiteResult {
    let reference = brute_force_table();
    let mismatches = (0..DIM)
        .flat_map(|a| (0..DIM).map(move |b| (a, b)))
        .filter(|&(a, b)| table.index[a][b] != reference.index[a][b] || table.sign[a][b] != reference.sign[a][b])
        .count();
    let mut rng = ChaCha8Rng::seed_from_u64(seed);
    let mut worst: f64 = 0.0;
    for _ in 0..ALGEBRA_TRIPLES {
        let (a, b, c) = (random_mv(&mut rng), random_mv(&mut rng), random_mv(&mut rng));
        let p = |x: &Multivector, y: &Multivector| x.product_with(y, table);
        let assoc = (p(&p(&a, &b), &c) - p(&a, &p(&b, &c))).norm();
        let left = (p(&a, &(b + c)) - (p(&a, &b) + p(&a, &c))).norm();
        let right = (p(&(a + b), &c) - (p(&a, &c) + p(&b, &c))).norm();
        worst = worst.max(assoc).max(left).max(right);
    }
    SuiteResult {
        name: "algebra",
        passed: mismatches == 0 && worst <= ALGEBRA_TOLERANCE,
        detail: format!("table mismatches={mismatches} max assoc/distrib residual={worst:e}"),
    }
}

/// `ab − (a·b + a∧b)` for random vector pairs.
pub fn decomposition_suite(seed: u64) -> SuiteResult {
    let mut rng = ChaCha8Rng::seed_from_u64(seed);
    let mut worst: f64 = 0.0;
    for _ in 0..1000 {
        let (a, b) = (random_vector(&mut rng), random_vector(&mut rng));
        let split = Multivector::scalar(a.inner_scalar(&b)) + a.wedge(&b);
        worst = worst.max((a.geometric(&b) - split).norm());
    }
    SuiteResult { name: "product decomposition", passed: worst <= 1e-14, detail: format!("max residual={worst:e}") }
}

/// Row-major matrix of `X ↦ A X` on coefficient vectors.
pub fn left_mul(a: &Multivector) -> Matrix {
    Matrix::from_vec(DIM, DIM, a.left_mul_matrix())
}

/// Attention scores with identity feature map and multivector-valued
/// projections `W_Q = L(A)`, `W_K = L(B)`; rotating the states and `A, B`
/// together leaves every score unchanged.
pub fn invariance_suite(seed: u64) -> SuiteResult {
    let mut rng = ChaCha8Rng::seed_from_u64(seed);
    let mut worst: f64 = 0.0;
    for _ in 0..100 {
        let rot = random_rotor(&mut rng);
        let (a, b) = (random_mv(&mut rng), random_mv(&mut rng));
        let emb = EmbeddingParams {
            alpha0: rng.gen_range(0.5..1.5),
            alpha: std::array::from_fn(|_| rng.gen_range(0.5..1.5)),
            gamma: std::array::from_fn(|_| rng.gen_range(0.5..1.5)),
        };
        let states: Vec<Multivector> =
            (0..9).map(|_| embed_state(&std::array::from_fn(|_| rng.gen_range(-2.0..2.0)), &emb)).collect();
        let scores = |a: &Multivector, b: &Multivector, ms: &[Multivector]| -> Vec<f64> {
            let (wq, wk) = (left_mul(a), left_mul(b));
            let id = |x: Vec<f64>| x.into_iter().map(|v| FeatureMap::Identity.apply(v, 0.0)).collect::<Vec<_>>();
            let q = id(wq.matvec(ms[8].as_slice()));
            ms[..8].iter().map(|m| dot(&q, &id(wk.matvec(m.as_slice())))).collect()
        };
        let before = scores(&a, &b, &states);
        let rotated: Vec<Multivector> = states.iter().map(|m| rot.conjugate(m)).collect();
        let after = scores(&rot.conjugate(&a), &rot.conjugate(&b), &rotated);
        for (x, y) in before.iter().zip(&after) {
            worst = worst.max((x - y).abs());
        }
    }
    SuiteResult { name: "rotor invariance", passed: worst <= 1e-9, detail: format!("max score change={worst:e}") }
}

pub const BOUND_DRAWS: usize = 10_000;

/// Random draws with `‖x‖ ≤ 2`, `‖W‖_F ≤ 0.9` and embedding coefficients in
/// `[0.5, 1.5]`, which keeps every feature non-negative.
pub fn boundedness_suite(seed: u64, draws: usize) -> SuiteResult {
    let mut rng = ChaCha8Rng::seed_from_u64(seed);
    let (x_bound, c_bound, lookback) = (2.0, 0.9, 8);
    let mut violations = 0;
    let mut worst_ratio: f64 = 0.0;
    let mut undefined = 0;
    for d in 0..draws {
        let cfg = ModelConfig { lookback, ..Default::default() };
        let mut p = synthetic::random_params(&cfg, seed.wrapping_add(d as u64), 0.5);
        for w in [&mut p.projection.w_q, &mut p.projection.w_k, &mut p.projection.w_v] {
            let target = rng.gen_range(0.0..=c_bound);
            let f = w.frobenius();
            *w = w.scale(target / f);
        }
        let inputs: Vec<[f64; 4]> = (0..=lookback)
            .map(|_| {
                let x: [f64; 4] = std::array::from_fn(|_| rng.gen_range(-1.0..1.0));
                let r = rng.gen_range(0.0..=x_bound) / dot(&x, &x).sqrt().max(1e-300);
                x.map(|v| v * r)
            })
            .collect();
        let Some(bound) = context_norm_bound_for_inputs(lookback, x_bound, c_bound, &p.embedding, &p.projection) else {
            undefined += 1;
            continue;
        };
        let qkv: Vec<_> = inputs.iter().map(|x| project_qkv(&embed_state(x, &p.embedding), &p.projection)).collect();
        let stats = WindowStats::from_pairs(
            (0..lookback).collect(),
            qkv[..lookback].iter().map(|x| x.k.clone()).collect(),
            qkv[..lookback].iter().map(|x| x.v.clone()).collect(),
        )
        .expect("non-empty window");
        let out = attend(&qkv[lookback].q, &stats, p.projection.eps).expect("positive denominator");
        let n = context_norm(&out);
        if !(n <= bound) {
            violations += 1;
        }
        worst_ratio = worst_ratio.max(n / bound);
    }
    SuiteResult {
        name: "context boundedness",
        passed: violations == 0 && undefined == 0,
        detail: format!("draws={draws} violations={violations} outside-regime={undefined} max norm/bound={worst_ratio:e}"),
    }
}

/// Empirical Lipschitz constant of the query path; stable under shrinking
/// step and never exceeded by fresh pairs.
pub fn lipschitz_suite(seed: u64) -> SuiteResult {
    let panel = synthetic::random_panel(16, seed);
    let p = synthetic::random_params(&ModelConfig::default(), seed, 0.3);
    let state = match quarterly_state(&panel, &p, panel.quarters[12]) {
        Ok(s) => s,
        Err(e) => return SuiteResult { name: "lipschitz probe", passed: false, detail: e.to_string() },
    };
    let coarse = lipschitz_probe(&state, &p, 2.0, 1e-3, 500, seed);
    let fine = lipschitz_probe(&state, &p, 2.0, 1e-5, 500, seed);
    let (Ok(coarse), Ok(fine)) = (coarse, fine) else {
        return SuiteResult { name: "lipschitz probe", passed: false, detail: "probe failed".into() };
    };
    let mut rng = ChaCha8Rng::seed_from_u64(seed ^ 0x11);
    let mut exceed = 0;
    for _ in 0..200 {
        let x: [f64; 4] = std::array::from_fn(|_| rng.gen_range(-1.5..1.5));
        let h = rng.gen_range(1e-4..1e-2);
        let xd: [f64; 4] = std::array::from_fn(|i| x[i] + h * rng.gen_range(-1.0..1.0));
        let dist = (0..4).map(|i| (xd[i] - x[i]).abs()).fold(0.0, f64::max);
        let (a, b) = (nowcast_state(&x, &state, &p), nowcast_state(&xd, &state, &p));
        if let (Ok(a), Ok(b)) = (a, b) {
            if (a - b).abs() > 2.0 * coarse.max(fine) * dist {
                exceed += 1;
            }
        } else {
            exceed += 1;
        }
    }
    let stable = coarse.is_finite() && fine.is_finite() && fine <= 2.0 * coarse && coarse <= 2.0 * fine;
    SuiteResult {
        name: "lipschitz probe",
        passed: stable && exceed == 0,
        detail: format!("K(1e-3)={coarse:e} K(1e-5)={fine:e} exceedances={exceed}"),
    }
}

pub const IMPULSE_CONFIGS: usize = 100;
/// Configurations with a key pre-activation closer than this to zero are
/// redrawn so the finite-difference step never crosses a kink.
pub const KINK_MARGIN: f64 = 1e-4;

#[derive(Debug, Clone, Copy, PartialEq)]
pub struct ImpulseStats {
    pub max_fd_relative: f64,
    pub max_direct_scaled: f64,
    pub resampled: usize,
}

/// Closed-form impulse response against (a) a central difference of the
/// direct recomputation along `s·ΔM`, `h = 1e-6`, and (b) the direct change
/// for `‖ΔM‖ = 1e-6`.
pub fn impulse_stats(seed: u64, configs: usize) -> ImpulseStats {
    let mut rng = ChaCha8Rng::seed_from_u64(seed);
    let mut out = ImpulseStats { max_fd_relative: 0.0, max_direct_scaled: 0.0, resampled: 0 };
    let mut done = 0;
    let mut draw = 0u64;
    while done < configs {
        draw += 1;
        let panel = synthetic::random_panel(12, seed.wrapping_mul(31).wrapping_add(draw));
        let p = synthetic::random_params(&ModelConfig::default(), seed.wrapping_add(draw), 0.3);
        let t = 10;
        let tau = rng.gen_range(2..t);
        let dir = random_mv(&mut rng);
        let dir = dir.scale(1.0 / dir.norm());
        let m_tau = embed_state(&panel.inputs[tau], &p.embedding);
        if project_qkv(&m_tau, &p.projection).pre_k.iter().any(|x| x.abs() < KINK_MARGIN) {
            out.resampled += 1;
            continue;
        }
        let (formula, _) = impulse_formula(&panel, t, &Perturbation { tau, delta_m: dir }, &p).expect("linear head");
        let h = 1e-6;
        let along = |s: f64| perturbed_prediction(&panel, t, &p, &[Perturbation { tau, delta_m: dir.scale(s) }]).expect("admissible");
        let fd = (along(h) - along(-h)) / (2.0 * h);
        let rel = (formula - fd).abs() / formula.abs().max(fd.abs()).max(f64::MIN_POSITIVE);
        out.max_fd_relative = out.max_fd_relative.max(rel);

        let small = dir.scale(1e-6);
        let (f_small, _) = impulse_formula(&panel, t, &Perturbation { tau, delta_m: small }, &p).expect("linear head");
        let base = step(&panel, t, &p).expect("admissible").prediction;
        let direct = along(1e-6) - base;
        out.max_direct_scaled = out.max_direct_scaled.max((f_small - direct).abs() / direct.abs().max(1.0));
        done += 1;
    }
    out
}

pub fn impulse_suite(seed: u64) -> SuiteResult {
    let s = impulse_stats(seed, IMPULSE_CONFIGS);
    SuiteResult {
        name: "impulse response",
        passed: s.max_fd_relative <= 1e-6 && s.max_direct_scaled <= 1e-10,
        detail: format!(
            "configs={IMPULSE_CONFIGS} max fd rel={:e} max direct dev={:e} resampled={}",
            s.max_fd_relative, s.max_direct_scaled, s.resampled
        ),
    }
}

pub fn gradient_suite(seed: u64) -> SuiteResult {
    let panel: QuarterlyPanel = synthetic::random_panel(12, seed);
    let p = synthetic::random_params(&ModelConfig::default(), seed, 0.3);
    match gradient_check(&panel, &p, &LossConfig::default(), 1e-5) {
        Ok(gc) => SuiteResult {
            name: "gradient check",
            passed: gc.max_relative_deviation < 1e-4,
            detail: format!(
                "max rel dev={:e} checked={} skipped at kinks={}",
                gc.max_relative_deviation, gc.checked, gc.skipped_at_kinks
            ),
        },
        Err(e) => SuiteResult { name: "gradient check", passed: false, detail: e.to_string() },
    }
}

pub fn run_selfcheck_with_table(seed: u64, table: &BladeTable) -> SelfCheckReport {
    SelfCheckReport {
        seed,
        suites: vec![
            algebra_suite(table, seed),
            decomposition_suite(seed),
            invariance_suite(seed),
            boundedness_suite(seed, BOUND_DRAWS),
            lipschitz_suite(seed),
            impulse_suite(seed),
            gradient_suite(seed),
        ],
    }
}

pub fn run_selfcheck(seed: u64) -> SelfCheckReport {
    run_selfcheck_with_table(seed, &BLADE_TABLE)
}
