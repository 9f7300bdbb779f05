//! Embedding of a standardized state `(u, s, r, v)` into Cl(4,0).
//!
//! `M = α0 + Σ α_i x_i e_i + Σ_{(i,j)} γ_ij (x_i − x_j) e_ij`, with the six
//! pairs in canonical bivector order. Grades 3 and 4 are always zero.

use crate::clifford::{Multivector, BIVECTOR_PAIRS};
use crate::panel::QuarterlyPanel;

/// Slot of the first bivector coefficient in the canonical blade order.
pub const BIVECTOR_OFFSET: usize = 5;

/// Pairs of variable indices (0-based) behind each bivector slot.
pub const PAIRS: [(usize, usize); 6] = {
    let mut out = [(0, 0); 6];
    let mut k = 0;
    while k < 6 {
        out[k] = (BIVECTOR_PAIRS[k].0 - 1, BIVECTOR_PAIRS[k].1 - 1);
        k += 1;
    }
    out
};

pub const VARIABLE_NAMES: [&str; 4] = ["u", "s", "r", "v"];

#[derive(Debug, Clone, PartialEq)]
pub struct EmbeddingParams {
    pub alpha0: f64,
    pub alpha: [f64; 4],
    pub gamma: [f64; 6],
}

impl Default for EmbeddingParams {
    fn default() -> Self {
        EmbeddingParams { alpha0: 1.0, alpha: [1.0; 4], gamma: [1.0; 6] }
    }
}

impl EmbeddingParams {
    /// Upper bound on `‖M‖₂` given `‖x‖₂ ≤ x_bound`.
    ///
    /// Uses `Σ_{i<j} (x_i − x_j)² = 4‖x‖² − (Σx)² ≤ 4‖x‖²`.
    pub fn norm_bound(&self, x_bound: f64) -> f64 {
        let a = self.alpha.iter().fold(0.0f64, |m, v| m.max(v.abs()));
        let g = self.gamma.iter().fold(0.0f64, |m, v| m.max(v.abs()));
        self.alpha0.abs() + a * x_bound + 2.0 * g * x_bound
    }
}

/// Pairwise differences `x_i − x_j` in canonical pair order.
pub fn differences(x: &[f64; 4]) -> [f64; 6] {
    PAIRS.map(|(i, j)| x[i] - x[j])
}

pub fn embed_state(x: &[f64; 4], p: &EmbeddingParams) -> Multivector {
    let mut m = Multivector::scalar(p.alpha0);
    for i in 0..4 {
        m[1 + i] = p.alpha[i] * x[i];
    }
    for (k, d) in differences(x).into_iter().enumerate() {
        m[BIVECTOR_OFFSET + k] = p.gamma[k] * d;
    }
    m
}

pub fn embed_series(panel: &QuarterlyPanel, p: &EmbeddingParams) -> Vec<Multivector> {
    panel.inputs.iter().map(|x| embed_state(x, p)).collect()
}

/// Canonical coefficient slots that carry variable `i` (its vector slot and
/// every bivector slot whose pair contains it).
pub fn slots_involving(i: usize) -> Vec<usize> {
    let mut slots = vec![1 + i];
    slots.extend(
        PAIRS
            .iter()
            .enumerate()
            .filter(|(_, (a, b))| *a == i || *b == i)
            .map(|(k, _)| BIVECTOR_OFFSET + k),
    );
    slots
}

#[cfg(test)]
mod tests {
    use super::*;
    use proptest::prelude::*;

    #[test]
    fn synchronized_inputs_have_no_bivector() {
        let m = embed_state(&[0.7; 4], &EmbeddingParams::default());
        assert_eq!(m.grade_norm(2).unwrap(), 0.0);
        for k in 5..11 {
            assert_eq!(m[k], 0.0);
        }
    }

    #[test]
    fn zero_state_is_scalar() {
        let p = EmbeddingParams { alpha0: 2.5, alpha: [0.3, -1.0, 2.0, 4.0], gamma: [1.5; 6] };
        assert_eq!(embed_state(&[0.0; 4], &p), Multivector::scalar(2.5));
    }

    #[test]
    fn first_axis_unit() {
        let p = EmbeddingParams { alpha0: 0.0, ..Default::default() };
        let m = embed_state(&[1.0, 0.0, 0.0, 0.0], &p);
        let mut expect = Multivector::ZERO;
        expect[1] = 1.0; // e1
        expect[5] = 1.0; // e12
        expect[6] = 1.0; // e13
        expect[7] = 1.0; // e14
        assert_eq!(m, expect);
    }

    #[test]
    fn series_and_gamma_linearity() {
        let panel = QuarterlyPanel::synthetic(
            "2000Q1".parse().unwrap(),
            vec![[0.1, -0.4, 1.2, 0.3], [0.1, -0.4, 1.2, 0.3]],
            vec![0.0, 0.0],
        );
        let p = EmbeddingParams::default();
        let ms = embed_series(&panel, &p);
        assert_eq!(ms.len(), 2);
        assert_eq!(ms[0], ms[1]);
        let p2 = EmbeddingParams { gamma: p.gamma.map(|g| 2.0 * g), ..p.clone() };
        let m2 = embed_state(&panel.inputs[0], &p2);
        for k in 0..5 {
            assert_eq!(m2[k], ms[0][k]);
        }
        for k in 5..11 {
            assert_eq!(m2[k], 2.0 * ms[0][k]);
        }
    }

    #[test]
    fn slots() {
        assert_eq!(slots_involving(0), vec![1, 5, 6, 7]);
        assert_eq!(slots_involving(3), vec![4, 7, 9, 10]);
    }

    proptest! {
        #[test]
        fn grades_three_and_four_vanish(x in prop::array::uniform4(-5.0f64..5.0), a0 in -2.0f64..2.0) {
            let p = EmbeddingParams { alpha0: a0, ..Default::default() };
            let m = embed_state(&x, &p);
            prop_assert_eq!(m.grade(3).unwrap(), Multivector::ZERO);
            prop_assert_eq!(m.grade(4).unwrap(), Multivector::ZERO);
            prop_assert!(m.norm() <= p.norm_bound((x.iter().map(|v| v * v).sum::<f64>()).sqrt()) + 1e-12);
        }

        #[test]
        fn swapping_variables_negates_pair(x in prop::array::uniform4(-5.0f64..5.0)) {
            let p = EmbeddingParams::default();
            let m = embed_state(&x, &p);
            for (k, &(i, j)) in PAIRS.iter().enumerate() {
                let mut y = x;
                y.swap(i, j);
                let my = embed_state(&y, &p);
                prop_assert_eq!(my[BIVECTOR_OFFSET + k], -m[BIVECTOR_OFFSET + k]);
            }
        }
    }
}
