//! End-to-end acceptance run: one PASS/FAIL line per criterion.
//!
//! Every reference value here comes from code in this file (list-based blade
//! products, naive attention sums, finite differences) rather than from the
//! library routine under test.

use std::fs;
use std::path::{Path, PathBuf};
use std::process::Command;
use std::time::{Duration, Instant};

use rand::{Rng, SeedableRng};
use rand_chacha::ChaCha8Rng;

use gacredit::analysis::{component_evolution, crisis_correlation, default_crisis_windows, nowcast, nowcast_state, quarterly_state};
use gacredit::artifact;
use gacredit::attention::{attend, context_norm_bound, WindowStats};
use gacredit::attribution::{impulse_formula, temporal_attribution, Perturbation};
use gacredit::clifford::{BLADE_MASKS, BLADE_TABLE, DIM};
use gacredit::embed::{embed_series, embed_state};
use gacredit::linalg::Matrix;
use gacredit::model::{effective_coefficients, forward, step_from_states};
use gacredit::panel::{load_csv, Month};
use gacredit::synthetic::{feedback_spiral, learnable_panel, planted_divergence, random_panel, random_params, synchronized_panel};
use gacredit::train::{activation_pattern, fit, flatten, gradients, loss, unflatten, LossConfig, OptimizerConfig};
use gacredit::{FeatureMap, ModelConfig, ModelParams, MonthlyPanel, Multivector, ProjectionParams, QuarterlyPanel};

enum Outcome {
    Pass(String),
    Fail(String),
    Skip(String),
}

fn verdict(ok: bool, detail: String) -> Outcome {
    if ok {
        Outcome::Pass(detail)
    } else {
        Outcome::Fail(detail)
    }
}

// ---------- reference Clifford algebra ----------

/// Product of two basis blades given as ascending axis lists, by bubble
/// sorting the concatenation and cancelling equal neighbours (e_i e_i = +1).
fn blade_product(a: &[u8], b: &[u8]) -> (Vec<u8>, f64) {
    let mut w: Vec<u8> = a.iter().chain(b).copied().collect();
    let mut sign = 1.0;
    loop {
        let mut changed = false;
        let mut i = 0;
        while i + 1 < w.len() {
            if w[i] > w[i + 1] {
                w.swap(i, i + 1);
                sign = -sign;
                changed = true;
            } else if w[i] == w[i + 1] {
                w.drain(i..i + 2);
                changed = true;
                continue;
            }
            i += 1;
        }
        if !changed {
            return (w, sign);
        }
    }
}

fn axes_of(k: usize) -> Vec<u8> {
    (0..4).filter(|b| BLADE_MASKS[k] & (1 << b) != 0).map(|b| b + 1).collect()
}

fn index_of_axes(axes: &[u8]) -> usize {
    let mask = axes.iter().fold(0u8, |m, a| m | (1 << (a - 1)));
    BLADE_MASKS.iter().position(|&m| m == mask).expect("every mask is a blade")
}

struct RefAlgebra {
    index: [[usize; DIM]; DIM],
    sign: [[f64; DIM]; DIM],
}

impl RefAlgebra {
    fn new() -> Self {
        let mut index = [[0; DIM]; DIM];
        let mut sign = [[0.0; DIM]; DIM];
        for a in 0..DIM {
            for b in 0..DIM {
                let (w, s) = blade_product(&axes_of(a), &axes_of(b));
                index[a][b] = index_of_axes(&w);
                sign[a][b] = s;
            }
        }
        RefAlgebra { index, sign }
    }

    fn mul(&self, a: &[f64; DIM], b: &[f64; DIM]) -> [f64; DIM] {
        let mut out = [0.0; DIM];
        for i in 0..DIM {
            for j in 0..DIM {
                out[self.index[i][j]] += self.sign[i][j] * a[i] * b[j];
            }
        }
        out
    }

    fn reverse(&self, a: &[f64; DIM]) -> [f64; DIM] {
        std::array::from_fn(|k| {
            let g = axes_of(k).len();
            if (g * g.saturating_sub(1) / 2) % 2 == 0 {
                a[k]
            } else {
                -a[k]
            }
        })
    }

    fn rotor(&self, rng: &mut ChaCha8Rng) -> [f64; DIM] {
        let mut r = [0.0; DIM];
        r[0] = 1.0;
        for _ in 0..6 {
            let i = rng.gen_range(1..=4u8);
            let j = loop {
                let j = rng.gen_range(1..=4u8);
                if j != i {
                    break j;
                }
            };
            let theta: f64 = rng.gen_range(-3.0..3.0);
            let (lo, hi, s) = if i < j { (i, j, 1.0) } else { (j, i, -1.0) };
            let mut plane = [0.0; DIM];
            plane[0] = (theta / 2.0).cos();
            plane[index_of_axes(&[lo, hi])] = -s * (theta / 2.0).sin();
            r = self.mul(&plane, &r);
        }
        r
    }

    fn sandwich(&self, r: &[f64; DIM], a: &[f64; DIM]) -> [f64; DIM] {
        self.mul(&self.mul(r, a), &self.reverse(r))
    }

    /// Row-major matrix of `X ↦ A X`.
    fn left_matrix(&self, a: &[f64; DIM]) -> Matrix {
        let mut m = Matrix::zeros(DIM, DIM);
        for j in 0..DIM {
            let mut e = [0.0; DIM];
            e[j] = 1.0;
            let col = self.mul(a, &e);
            for (i, v) in col.iter().enumerate() {
                m.set(i, j, *v);
            }
        }
        m
    }
}

fn random_coeffs(rng: &mut ChaCha8Rng) -> [f64; DIM] {
    std::array::from_fn(|_| rng.gen_range(-1.0..1.0))
}

fn max_abs_diff(a: &[f64], b: &[f64]) -> f64 {
    a.iter().zip(b).map(|(x, y)| (x - y).abs()).fold(0.0, f64::max)
}

// ---------- reference attention ----------

fn phi(x: f64, leak: f64) -> f64 {
    if x > 0.0 {
        x + 1.0
    } else {
        leak * x + 1.0
    }
}

fn matvec(m: &Matrix, x: &[f64]) -> Vec<f64> {
    (0..m.rows).map(|i| (0..m.cols).map(|j| m.get(i, j) * x[j]).sum()).collect()
}

fn dotv(a: &[f64], b: &[f64]) -> f64 {
    a.iter().zip(b).map(|(x, y)| x * y).sum()
}

/// `O = Σ_τ ⟨φ(q), φ(k_τ)⟩ v_τ / (Σ_τ ⟨φ(q), φ(k_τ)⟩ + ε)` by direct summation.
fn naive_context(p: &ProjectionParams, query: &Multivector, history: &[Multivector]) -> Vec<f64> {
    let q: Vec<f64> = matvec(&p.w_q, query.as_slice()).into_iter().map(|x| phi(x, p.leak)).collect();
    let mut num = vec![0.0; p.w_v.rows];
    let mut den = p.eps;
    for m in history {
        let k: Vec<f64> = matvec(&p.w_k, m.as_slice()).into_iter().map(|x| phi(x, p.leak)).collect();
        let v = matvec(&p.w_v, m.as_slice());
        let s = dotv(&q, &k);
        den += s;
        for (n, vi) in num.iter_mut().zip(&v) {
            *n += s * vi;
        }
    }
    num.into_iter().map(|n| n / den).collect()
}

// ---------- criteria ----------

fn c1_algebra() -> Outcome {
    let start = Instant::now();
    let reference = RefAlgebra::new();
    let mut table_mismatch = 0;
    for a in 0..DIM {
        for b in 0..DIM {
            if BLADE_TABLE.index[a][b] as usize != reference.index[a][b]
                || f64::from(BLADE_TABLE.sign[a][b]) != reference.sign[a][b]
            {
                table_mismatch += 1;
            }
        }
    }
    let mut rng = ChaCha8Rng::seed_from_u64(1);
    let mut worst: f64 = 0.0;
    for _ in 0..1000 {
        let (a, b, c) = (random_coeffs(&mut rng), random_coeffs(&mut rng), random_coeffs(&mut rng));
        let (ma, mb, mc) = (Multivector::from_coeffs(a), Multivector::from_coeffs(b), Multivector::from_coeffs(c));
        let assoc = (ma * mb) * mc - ma * (mb * mc);
        let dist_l = ma * (mb + mc) - (ma * mb + ma * mc);
        let dist_r = (ma + mb) * mc - (ma * mc + mb * mc);
        let vs_ref = max_abs_diff((ma * mb).as_slice(), &reference.mul(&a, &b));
        worst = [worst, assoc.norm(), dist_l.norm(), dist_r.norm(), vs_ref].into_iter().fold(0.0, f64::max);
    }
    let elapsed = start.elapsed();
    verdict(
        table_mismatch == 0 && worst <= 1e-12 && elapsed < Duration::from_secs(1),
        format!("table mismatches={table_mismatch} max residual={worst:.2e} time={elapsed:?}"),
    )
}

fn c2_decomposition() -> Outcome {
    let mut rng = ChaCha8Rng::seed_from_u64(2);
    let mut worst: f64 = 0.0;
    let mut worst_ref: f64 = 0.0;
    for _ in 0..1000 {
        let x: [f64; 4] = std::array::from_fn(|_| rng.gen_range(-1.0..1.0));
        let y: [f64; 4] = std::array::from_fn(|_| rng.gen_range(-1.0..1.0));
        let (a, b) = (Multivector::vector(x), Multivector::vector(y));
        let split = Multivector::scalar(a.inner_scalar(&b)) + a.wedge(&b);
        worst = worst.max((a * b - split).norm());
        // reference: a·b = Σ x_i y_i, (a∧b)_ij = x_i y_j − x_j y_i
        let mut expect = [0.0; DIM];
        expect[0] = dotv(&x, &y);
        for i in 0..4 {
            for j in (i + 1)..4 {
                expect[index_of_axes(&[i as u8 + 1, j as u8 + 1])] = x[i] * y[j] - x[j] * y[i];
            }
        }
        worst_ref = worst_ref.max(max_abs_diff((a * b).as_slice(), &expect));
    }
    verdict(
        worst <= 1e-14 && worst_ref <= 1e-14,
        format!("max |ab - (a.b + a^b)|={worst:.2e} vs reference={worst_ref:.2e}"),
    )
}

fn c3_invariance() -> Outcome {
    let reference = RefAlgebra::new();
    let mut rng = ChaCha8Rng::seed_from_u64(3);
    let mut worst: f64 = 0.0;
    let mut tested = 0;
    let scores = |a: &[f64; DIM], b: &[f64; DIM], states: &[[f64; DIM]]| -> Option<Vec<f64>> {
        let p = ProjectionParams {
            w_q: reference.left_matrix(a),
            w_k: reference.left_matrix(b),
            w_v: Matrix::identity(DIM, DIM),
            leak: 0.1,
            eps: 1e-6,
            feature_map: FeatureMap::Identity,
        };
        let q = matvec(&p.w_q, &states[8]);
        let keys = states[..8].iter().map(|m| matvec(&p.w_k, m)).collect();
        let values = states[..8].iter().map(|m| m.to_vec()).collect();
        let stats = WindowStats::from_pairs((0..8).collect(), keys, values).ok()?;
        attend(&q, &stats, p.eps).ok().map(|o| o.scores)
    };
    while tested < 100 {
        let r = reference.rotor(&mut rng);
        let (a, b) = (random_coeffs(&mut rng), random_coeffs(&mut rng));
        let emb = gacredit::EmbeddingParams {
            alpha0: rng.gen_range(0.5..1.5),
            alpha: std::array::from_fn(|_| rng.gen_range(0.5..1.5)),
            gamma: std::array::from_fn(|_| rng.gen_range(0.5..1.5)),
        };
        let states: Vec<[f64; DIM]> =
            (0..9).map(|_| embed_state(&std::array::from_fn(|_| rng.gen_range(-2.0..2.0)), &emb).coeffs).collect();
        let rotated: Vec<[f64; DIM]> = states.iter().map(|m| reference.sandwich(&r, m)).collect();
        let (Some(before), Some(after)) =
            (scores(&a, &b, &states), scores(&reference.sandwich(&r, &a), &reference.sandwich(&r, &b), &rotated))
        else {
            continue;
        };
        worst = worst.max(max_abs_diff(&before, &after));
        tested += 1;
    }
    verdict(worst <= 1e-9, format!("100 rotors, max score change={worst:.2e}"))
}

fn c4_boundedness() -> Outcome {
    let start = Instant::now();
    let mut rng = ChaCha8Rng::seed_from_u64(4);
    let (x_bound, c_bound, lookback) = (2.0, 0.9, 8usize);
    let mut violations = 0;
    let mut formula_mismatch = 0;
    let mut path_dev: f64 = 0.0;
    let mut worst_ratio: f64 = 0.0;
    let draws = 10_000;
    for d in 0..draws {
        let mut p = random_params(&ModelConfig::default(), 40_000 + d as u64, 0.5);
        for w in [&mut p.projection.w_q, &mut p.projection.w_k, &mut p.projection.w_v] {
            let f = (0..w.rows).flat_map(|i| (0..w.cols).map(move |j| (i, j))).map(|(i, j)| w.get(i, j).powi(2)).sum::<f64>().sqrt();
            *w = w.scale(rng.gen_range(0.0..=c_bound) / f);
        }
        let states: Vec<Multivector> = (0..=lookback)
            .map(|_| {
                let x: [f64; 4] = std::array::from_fn(|_| rng.gen_range(-1.0..1.0));
                let r = rng.gen_range(0.0..=x_bound) / dotv(&x, &x).sqrt();
                embed_state(&x.map(|v| v * r), &p.embedding)
            })
            .collect();
        // ‖M‖² ≤ α0² + max α² ‖x‖² + max γ² · 6‖x‖²
        let e = &p.embedding;
        let amax = e.alpha.iter().fold(0.0f64, |m, v| m.max(v.abs()));
        let gmax = e.gamma.iter().fold(0.0f64, |m, v| m.max(v.abs()));
        let m_bound = (e.alpha0 * e.alpha0 + amax * amax * x_bound * x_bound + 6.0 * gmax * gmax * x_bound * x_bound).sqrt();
        assert!(states.iter().all(|m| m.norm() <= m_bound * (1.0 + 1e-12)));
        let mc = m_bound * c_bound;
        let d_h = p.projection.w_q.rows as f64;
        let expected = lookback as f64 * (mc + d_h.sqrt()).powi(2) * mc / p.projection.eps;
        let Some(bound) = context_norm_bound(lookback, m_bound, c_bound, &p.projection) else {
            formula_mismatch += 1;
            continue;
        };
        if (bound - expected).abs() > 1e-12 * expected {
            formula_mismatch += 1;
        }
        let o = naive_context(&p.projection, &states[lookback], &states[..lookback]);
        let norm = dotv(&o, &o).sqrt();
        let via_lib = step_from_states(&states, lookback, &ModelParams { lookback, ..p.clone() }).expect("admissible");
        path_dev = path_dev.max(max_abs_diff(&o, &via_lib.attention.context) / norm.max(1e-300));
        if !(norm <= bound) {
            violations += 1;
        }
        worst_ratio = worst_ratio.max(norm / bound);
    }
    let elapsed = start.elapsed();
    verdict(
        violations == 0 && formula_mismatch == 0 && path_dev < 1e-9 && elapsed < Duration::from_secs(10),
        format!(
            "draws={draws} violations={violations} bound mismatches={formula_mismatch} max norm/bound={worst_ratio:.2e} \
             naive-vs-library={path_dev:.1e} time={elapsed:?}"
        ),
    )
}

fn c5_impulse() -> Outcome {
    let mut rng = ChaCha8Rng::seed_from_u64(5);
    let (mut worst_fd, mut worst_direct) = (0.0f64, 0.0f64);
    let mut done = 0;
    let mut redrawn = 0;
    let mut draw = 0u64;
    while done < 100 {
        draw += 1;
        let panel = random_panel(12, 500 + draw);
        let p = random_params(&ModelConfig::default(), 900 + draw, 0.3);
        let t = 10;
        let tau = rng.gen_range(2..t);
        let dir = Multivector::from_coeffs(random_coeffs(&mut rng));
        let dir = dir.scale(1.0 / dir.norm());
        let states = embed_series(&panel, &p.embedding);
        // keep the finite-difference stencil on one side of every kink
        if matvec(&p.projection.w_k, states[tau].as_slice()).iter().any(|x| x.abs() < 1e-4) {
            redrawn += 1;
            continue;
        }
        let direct = |s: f64| {
            let mut st = states.clone();
            st[tau] = st[tau] + dir.scale(s);
            step_from_states(&st, t, &p).expect("admissible").prediction
        };
        let (formula, _) = impulse_formula(&panel, t, &Perturbation { tau, delta_m: dir }, &p).expect("linear head");
        let h = 1e-5;
        let fd = (direct(h) - direct(-h)) / (2.0 * h);
        worst_fd = worst_fd.max((formula - fd).abs() / formula.abs().max(fd.abs()).max(1e-300));
        let small = dir.scale(1e-6);
        let (f_small, _) = impulse_formula(&panel, t, &Perturbation { tau, delta_m: small }, &p).expect("linear head");
        worst_direct = worst_direct.max((f_small - (direct(1e-6) - direct(0.0))).abs());
        done += 1;
    }
    verdict(
        worst_fd <= 1e-6 && worst_direct <= 1e-10,
        format!("100 configs ({redrawn} redrawn near kinks) max fd rel={worst_fd:.2e} max direct dev={worst_direct:.2e}"),
    )
}

fn c6_gradients() -> Outcome {
    let cfg = LossConfig::default();
    let h = 1e-5;
    let mut worst: f64 = 0.0;
    let (mut checked, mut skipped) = (0, 0);
    for seed in 0..3u64 {
        for head in [gacredit::HeadKind::Linear, gacredit::HeadKind::Mlp] {
            let panel = random_panel(12, 60 + seed);
            let mcfg = ModelConfig { head, d_hidden: 8, ..Default::default() };
            let p = random_params(&mcfg, 70 + seed, 0.3);
            let analytic = gradients(&panel, &p, &cfg).expect("finite").1.flatten();
            let base = flatten(&p);
            for i in 0..base.len() {
                let at = |s: f64| {
                    let mut v = base.clone();
                    v[i] += s;
                    unflatten(&p, &v)
                };
                let (plus, minus) = (at(h), at(-h));
                if activation_pattern(&panel, &plus).unwrap() != activation_pattern(&panel, &minus).unwrap() {
                    skipped += 1;
                    continue;
                }
                let fd = (loss(&panel, &plus, &cfg).unwrap().total - loss(&panel, &minus, &cfg).unwrap().total) / (2.0 * h);
                let a = analytic[i];
                worst = worst.max((a - fd).abs() / a.abs().max(fd.abs()).max(1e-6));
                checked += 1;
            }
        }
    }
    verdict(
        worst < 1e-4,
        format!("checked={checked} skipped at kinks={skipped} max relative deviation={worst:.2e}"),
    )
}

fn c7_normalization() -> Outcome {
    let panels: Vec<(&str, QuarterlyPanel)> = vec![
        ("random", random_panel(40, 7)),
        ("learnable", learnable_panel(60, 0.05, 7)),
        ("synchronized", synchronized_panel(30, 7)),
        ("spiral", feedback_spiral(30, &[10, 20], 2.0, 7)),
    ];
    let params = [
        ModelParams::init(&ModelConfig::default(), 7),
        random_params(&ModelConfig::default(), 8, 0.3),
        random_params(&ModelConfig { lookback: 4, ..Default::default() }, 9, 0.6),
    ];
    let (mut worst_sum, mut worst_ref) = (0.0f64, 0.0f64);
    let mut quarters = 0;
    for (_, panel) in &panels {
        let states = embed_series(panel, &params[0].embedding);
        for p in &params {
            let states = if p.embedding == params[0].embedding { states.clone() } else { embed_series(panel, &p.embedding) };
            for t in 1..panel.len() {
                let a = temporal_attribution(panel, t, p).expect("admissible");
                let sum: f64 = a.weights.iter().map(|(_, w)| w).sum();
                worst_sum = worst_sum.max((sum - 1.0).abs());
                let lo = t.saturating_sub(p.lookback);
                let q: Vec<f64> =
                    matvec(&p.projection.w_q, states[t].as_slice()).into_iter().map(|x| phi(x, p.projection.leak)).collect();
                let raw: Vec<f64> = states[lo..t]
                    .iter()
                    .map(|m| {
                        let k: Vec<f64> =
                            matvec(&p.projection.w_k, m.as_slice()).into_iter().map(|x| phi(x, p.projection.leak)).collect();
                        dotv(&q, &k)
                    })
                    .collect();
                let total: f64 = raw.iter().sum();
                let expect: Vec<f64> = raw.iter().map(|s| s / total).collect();
                let got: Vec<f64> = a.weights.iter().map(|(_, w)| *w).collect();
                worst_ref = worst_ref.max(max_abs_diff(&expect, &got));
                quarters += 1;
            }
        }
    }
    verdict(
        worst_sum <= 1e-9 && worst_ref <= 1e-9,
        format!("{quarters} quarters, max |sum w - 1|={worst_sum:.2e} vs reference weights={worst_ref:.2e}"),
    )
}

fn c8_embedding() -> Outcome {
    let p = ModelParams::init(&ModelConfig::default(), 8);
    let mut nonzero = 0;
    for seed in 0..5 {
        let panel = synchronized_panel(40, seed);
        for x in &panel.inputs {
            let m = embed_state(x, &p.embedding);
            nonzero += m.as_slice()[5..11].iter().filter(|v| **v != 0.0).count();
        }
    }
    let mut misplaced = Vec::new();
    let mut cases = 0;
    for seed in 0..5u64 {
        for at in [3usize, 17, 29, 38] {
            let panel = planted_divergence(40, at, 1.0, seed);
            let mags: Vec<f64> = panel
                .inputs
                .iter()
                .map(|x| {
                    let m = embed_state(x, &p.embedding);
                    m.as_slice()[5..11].iter().map(|v| v * v).sum::<f64>().sqrt()
                })
                .collect();
            let argmax = (0..mags.len()).max_by(|a, b| mags[*a].total_cmp(&mags[*b])).unwrap();
            let rows = component_evolution(&panel, &p);
            let lib_argmax = (0..rows.len()).max_by(|a, b| rows[*a].bivector.total_cmp(&rows[*b].bivector)).unwrap();
            if argmax != at || lib_argmax != at {
                misplaced.push((seed, at));
            }
            cases += 1;
        }
    }
    verdict(
        nonzero == 0 && misplaced.is_empty(),
        format!("synchronized nonzero bivector coeffs={nonzero}; planted argmax misplaced {}/{cases}", misplaced.len()),
    )
}

fn c9_tvp() -> Outcome {
    let mut rng = ChaCha8Rng::seed_from_u64(9);
    let (mut worst_recon, mut worst_slope) = (0.0f64, 0.0f64);
    let mut slopes = 0;
    for inst in 0..100u64 {
        let panel = random_panel(12, 1000 + inst);
        let p = random_params(&ModelConfig::default(), 2000 + inst, 0.3);
        let t = rng.gen_range(1..12);
        let eff = effective_coefficients(&panel, t, &p).expect("linear head");
        let y = forward(&panel, t, &p).unwrap();
        worst_recon = worst_recon.max((eff.reconstruct(&panel.inputs[t]) - y).abs());
        let m = embed_state(&panel.inputs[t], &p.embedding);
        if matvec(&p.projection.w_q, m.as_slice()).iter().any(|x| x.abs() < 1e-3) {
            continue;
        }
        for i in 0..4 {
            let h = 1e-6;
            let at = |s: f64| {
                let mut q = panel.clone();
                q.inputs[t][i] += s;
                forward(&q, t, &p).unwrap()
            };
            let fd = (at(h) - at(-h)) / (2.0 * h);
            let slope = eff.total_slope(i);
            // central-difference round-off: a few ulps of ŷ divided by h
            let noise = 8.0 * f64::EPSILON * y.abs().max(1.0) / h;
            worst_slope = worst_slope.max(((slope - fd).abs() - noise).max(0.0) / slope.abs().max(fd.abs()).max(noise));
            slopes += 1;
        }
    }
    verdict(
        worst_recon <= 1e-9 && worst_slope <= 1e-6,
        format!("100 instances, max reconstruction error={worst_recon:.2e}; {slopes} slopes vs fd max rel={worst_slope:.2e}"),
    )
}

fn c10_learnability() -> Outcome {
    let start = Instant::now();
    let panel = learnable_panel(80, 0.05, 0);
    let init = ModelParams::init(&ModelConfig::default(), 100);
    let ocfg = OptimizerConfig { learning_rate: 0.1, steps: 5000, seed: 100, ..Default::default() };
    let run = || fit(&panel, &init, &LossConfig::default(), &ocfg).expect("fit");
    let (p1, r1) = run();
    let elapsed = start.elapsed();
    let (p2, _) = run();
    let ratio = r1.final_mse / r1.initial_mse;
    let same = artifact::save(&p1) == artifact::save(&p2);
    verdict(
        ratio < 0.1 && same && elapsed < Duration::from_secs(60),
        format!(
            "mse {:.4} -> {:.4} (ratio {ratio:.3}) deterministic={same} time={elapsed:?}",
            r1.initial_mse, r1.final_mse
        ),
    )
}

fn fred_dir() -> Option<PathBuf> {
    if let Ok(d) = std::env::var("GACREDIT_FRED_DIR") {
        return Some(PathBuf::from(d));
    }
    let bundled = Path::new(env!("CARGO_MANIFEST_DIR")).join("../../data/fred");
    bundled.join("UNRATE.csv").exists().then_some(bundled)
}

fn c11_soft_data() -> Outcome {
    let Some(dir) = fred_dir() else {
        return Outcome::Skip("no FRED extract (set GACREDIT_FRED_DIR or add data/fred/); nothing to compare".into());
    };
    let load = |name: &str| load_csv(dir.join(format!("{name}.csv"))).map(|(s, _)| s);
    let (Ok(u), Ok(c)) = (load("UNRATE"), load("CORCACBS")) else {
        return Outcome::Fail(format!("could not read UNRATE.csv / CORCACBS.csv in {}", dir.display()));
    };
    let published = [0.74, 0.78, 0.32];
    let mut parts = Vec::new();
    let mut within = true;
    for ((name, w), rho_ref) in default_crisis_windows().into_iter().zip(published) {
        match crisis_correlation(&u, &c, w) {
            Ok(r) => {
                let dev = r.rho - rho_ref;
                within &= dev.abs() <= 0.15;
                parts.push(format!("{name} rho={:.3} (ref {rho_ref}, dev {dev:+.3})", r.rho));
            }
            Err(e) => {
                within = false;
                parts.push(format!("{name}: {e}"));
            }
        }
    }
    // soft: reported, never a hard failure
    let detail = parts.join("; ");
    if within {
        Outcome::Pass(detail)
    } else {
        Outcome::Skip(format!("outside ±0.15, reported only: {detail}"))
    }
}

fn c12_nowcast() -> Outcome {
    let mut worst: f64 = 0.0;
    let mut worst_series: f64 = 0.0;
    for seed in 0..5u64 {
        let panel = random_panel(30, 120 + seed);
        let p = random_params(&ModelConfig::default(), 130 + seed, 0.3);
        for t in 1..panel.len() {
            let state = quarterly_state(&panel, &p, panel.quarters[t]).expect("history");
            let z = nowcast_state(&panel.inputs[t], &state, &p).unwrap();
            worst = worst.max((z - forward(&panel, t, &p).unwrap()).abs());
        }
        // monthly panel whose every month repeats its quarter's inputs
        let mut months = Vec::new();
        let mut inputs = Vec::new();
        for (q, x) in panel.quarters.iter().zip(&panel.inputs).skip(1) {
            for k in 0..3 {
                months.push(Month { year: q.year, month: 3 * (q.q - 1) + 1 + k });
                inputs.push(*x);
            }
        }
        let rows = nowcast(&MonthlyPanel { months, inputs }, &panel, &p).unwrap();
        for r in rows {
            let t = panel.index_of(r.quarter).unwrap();
            worst_series = worst_series.max((r.standardized - forward(&panel, t, &p).unwrap()).abs());
        }
    }
    verdict(worst <= 1e-9 && worst_series <= 1e-9, format!("max deviation={worst:.2e} (monthly series {worst_series:.2e})"))
}

fn c13_determinism() -> Outcome {
    let tmp = tempfile::tempdir().unwrap();
    let root = tmp.path();
    let panel_path = root.join("panel.csv");
    let panel = learnable_panel(48, 0.05, 13);
    fs::write(&panel_path, panel.to_csv()).unwrap();
    fs::write(root.join("panel.moments.csv"), panel.moments_csv()).unwrap();
    let monthly: String = {
        let mut s = String::from("month,u,s,r,v\n");
        for (q, x) in panel.quarters.iter().zip(&panel.inputs).skip(4) {
            for k in 0..3 {
                s.push_str(&format!("{}-{:02},{},{},{},{}\n", q.year, 3 * (q.q - 1) + 1 + k, x[0], x[1], x[2], x[3]));
            }
        }
        s
    };
    fs::write(root.join("monthly.csv"), monthly).unwrap();
    let scenario = root.join("scenario.csv");
    let last = panel.quarters[panel.len() - 3];
    fs::write(&scenario, format!("quarter,variable,shock_sigma\n{last},u,1.5\n{last},s,-0.5\n")).unwrap();

    let bin = env!("CARGO_BIN_EXE_gacredit");
    let run = |args: &[&str]| -> Result<(), String> {
        let o = Command::new(bin).args(args).output().map_err(|e| e.to_string())?;
        if o.status.success() {
            Ok(())
        } else {
            Err(format!("{args:?}: {}", String::from_utf8_lossy(&o.stderr)))
        }
    };
    let p = panel_path.to_str().unwrap();
    let exports = |dir: &Path, extra: &[&str]| -> Result<(), String> {
        let d = dir.to_str().unwrap();
        let mut fit = vec!["fit", "--panel", p, "--out-dir", d];
        fit.extend_from_slice(extra);
        run(&fit)?;
        let model = dir.join("model.gam");
        let m = model.to_str().unwrap();
        let cfg = dir.join("config.txt");
        let c = cfg.to_str().unwrap();
        let monthly = root.join("monthly.csv");
        let sc = scenario.to_str().unwrap();
        for cmd in [
            vec!["predict", "--panel", p, "--model", m, "--out-dir", d, "--config", c],
            vec!["nowcast", "--panel", p, "--model", m, "--monthly", monthly.to_str().unwrap(), "--out-dir", d, "--config", c],
            vec!["attribute", "--all", "--panel", p, "--model", m, "--out-dir", d, "--config", c],
            vec!["stress", "--panel", p, "--model", m, "--scenario", sc, "--out-dir", d, "--config", c],
            vec!["export-figures", "--svg", "--panel", p, "--model", m, "--out-dir", d, "--config", c],
        ] {
            run(&cmd)?;
        }
        Ok(())
    };
    let (a, b, c) = (root.join("a"), root.join("b"), root.join("c"));
    let flags = ["--seed", "21", "--steps", "300", "--lr", "0.05", "--lambda-qk", "0.002"];
    if let Err(e) = exports(&a, &flags).and_then(|_| exports(&b, &flags)) {
        return Outcome::Fail(e);
    }
    let echoed = a.join("config.txt");
    if let Err(e) = exports(&c, &["--config", echoed.to_str().unwrap()]) {
        return Outcome::Fail(e);
    }
    let listing = |d: &Path| {
        let mut v: Vec<String> = fs::read_dir(d).unwrap().map(|e| e.unwrap().file_name().to_string_lossy().into_owned()).collect();
        v.sort();
        v
    };
    let files = listing(&a);
    let mut differing = Vec::new();
    for other in [&b, &c] {
        if listing(other) != files {
            differing.push(format!("file set of {}", other.display()));
            continue;
        }
        for f in &files {
            if fs::read(a.join(f)).unwrap() != fs::read(other.join(f)).unwrap() {
                differing.push(f.clone());
            }
        }
    }
    verdict(
        differing.is_empty(),
        format!("{} files compared across 3 runs (rerun from echoed config); differing: {differing:?}", files.len()),
    )
}

fn main() {
    let criteria: [(&str, fn() -> Outcome); 13] = [
        ("algebra correctness", c1_algebra),
        ("product decomposition", c2_decomposition),
        ("rotor invariance", c3_invariance),
        ("context boundedness", c4_boundedness),
        ("impulse response", c5_impulse),
        ("gradient contract", c6_gradients),
        ("attribution normalization", c7_normalization),
        ("embedding structure", c8_embedding),
        ("time-varying coefficients", c9_tvp),
        ("learnability", c10_learnability),
        ("crisis correlations (soft)", c11_soft_data),
        ("nowcast consistency", c12_nowcast),
        ("determinism", c13_determinism),
    ];
    let mut failed = 0;
    for (i, (name, f)) in criteria.iter().enumerate() {
        let (tag, detail) = match f() {
            Outcome::Pass(d) => ("PASS", d),
            Outcome::Fail(d) => {
                failed += 1;
                ("FAIL", d)
            }
            Outcome::Skip(d) => ("SKIP", d),
        };
        println!("{tag} {:>2} {name}: {detail}", i + 1);
    }
    if failed > 0 {
        println!("acceptance: {failed} criterion/criteria failed");
        std::process::exit(1);
    }
    println!("acceptance: all hard criteria passed");
}
