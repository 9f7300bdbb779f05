//! Real Clifford algebra Cl(4,0) over an orthonormal basis `{e1, e2, e3, e4}`.
//!
//! Multivectors carry all 16 coefficients. The canonical blade order, used for
//! storage and every serialized form, is
//!
//! ```text
//! 1; e1 e2 e3 e4; e12 e13 e14 e23 e24 e34; e123 e124 e134 e234; e1234
//! ```
//!
//! Products go through a 16×16 sign/index table computed at compile time from
//! the anticommutation rules `e_i e_i = +1`, `e_i e_j = -e_j e_i`.
//!
//! Rotor orientation: [`Rotor::in_plane`]`(i, j, θ)` is `cos(θ/2) − sin(θ/2) e_ij`,
//! and conjugation `U a U⁻¹` turns `e_i` towards `e_j`. For example the
//! quarter turn in the (1,2) plane sends `e1` to `e2`.

use std::fmt;
use std::ops::{Add, AddAssign, Index, IndexMut, Mul, Neg, Sub};
use std::str::FromStr;

use thiserror::Error;

/// Number of basis blades.
pub const DIM: usize = 16;

/// Bitmask (bit k set <=> e_{k+1} present) of each blade in canonical order.
pub const BLADE_MASKS: [u8; DIM] = [
    0b0000, // 1
    0b0001, 0b0010, 0b0100, 0b1000, // e1 e2 e3 e4
    0b0011, 0b0101, 0b1001, 0b0110, 0b1010, 0b1100, // e12 e13 e14 e23 e24 e34
    0b0111, 0b1011, 0b1101, 0b1110, // e123 e124 e134 e234
    0b1111, // e1234
];

pub const BLADE_NAMES: [&str; DIM] = [
    "1", "e1", "e2", "e3", "e4", "e12", "e13", "e14", "e23", "e24", "e34", "e123", "e124",
    "e134", "e234", "e1234",
];

/// Canonical index ranges of each grade.
pub const GRADE_RANGES: [(usize, usize); 5] = [(0, 1), (1, 5), (5, 11), (11, 15), (15, 16)];

/// The six bivector planes in canonical order, as 1-based axis pairs.
pub const BIVECTOR_PAIRS: [(usize, usize); 6] = [(1, 2), (1, 3), (1, 4), (2, 3), (2, 4), (3, 4)];

#[derive(Debug, Error, Clone, PartialEq)]
pub enum CliffordError {
    #[error("grade {0} out of range 0..=4")]
    InvalidGrade(usize),
    #[error("axis {0} out of range 1..=4")]
    InvalidAxis(usize),
    #[error("rotor plane needs two distinct axes, got ({0}, {0})")]
    SameAxis(usize),
    #[error("rotor is not unit: |U U~ - 1| = {0:e}")]
    NotUnit(f64),
    #[error("multivector parse error: {0}")]
    Parse(String),
}

const fn mask_to_index(mask: u8) -> usize {
    let mut i = 0;
    while i < DIM {
        if BLADE_MASKS[i] == mask {
            return i;
        }
        i += 1;
    }
    panic!("mask not in blade list");
}

const fn count_ones(x: u8) -> u32 {
    let mut c = 0;
    let mut v = x;
    while v != 0 {
        c += (v & 1) as u32;
        v >>= 1;
    }
    c
}

/// Grade of the blade at canonical index `i`.
pub const fn blade_grade(i: usize) -> usize {
    count_ones(BLADE_MASKS[i]) as usize
}

/// Product table for basis blades: `e_a e_b = sign[a][b] * e_{index[a][b]}`.
#[derive(Debug, Clone, Copy, PartialEq, Eq)]
pub struct BladeTable {
    pub index: [[u8; DIM]; DIM],
    pub sign: [[i8; DIM]; DIM],
}

impl BladeTable {
    /// Build the table from the bitmask reordering rule.
    pub const fn generate() -> Self {
        let mut index = [[0u8; DIM]; DIM];
        let mut sign = [[1i8; DIM]; DIM];
        let mut a = 0;
        while a < DIM {
            let mut b = 0;
            while b < DIM {
                let ma = BLADE_MASKS[a];
                let mb = BLADE_MASKS[b];
                // number of transpositions needed to sort the concatenated factors
                let mut shifted = ma >> 1;
                let mut swaps = 0u32;
                while shifted != 0 {
                    swaps += count_ones(shifted & mb);
                    shifted >>= 1;
                }
                index[a][b] = mask_to_index(ma ^ mb) as u8;
                sign[a][b] = if swaps % 2 == 0 { 1 } else { -1 };
                b += 1;
            }
            a += 1;
        }
        BladeTable { index, sign }
    }

    /// Geometric product of two coefficient arrays using this table.
    pub fn product(&self, a: &[f64; DIM], b: &[f64; DIM]) -> [f64; DIM] {
        let mut out = [0.0; DIM];
        for (i, &ai) in a.iter().enumerate() {
            if ai == 0.0 {
                continue;
            }
            let row_idx = &self.index[i];
            let row_sign = &self.sign[i];
            for (j, &bj) in b.iter().enumerate() {
                if bj == 0.0 {
                    continue;
                }
                let k = row_idx[j] as usize;
                out[k] += f64::from(row_sign[j]) * ai * bj;
            }
        }
        out
    }
}

/// Compile-time product table for Cl(4,0).
pub static BLADE_TABLE: BladeTable = BladeTable::generate();

/// Element of Cl(4,0), stored by canonical blade order.
#[derive(Clone, Copy, PartialEq, Default)]
pub struct Multivector {
    pub coeffs: [f64; DIM],
}

impl Multivector {
    pub const ZERO: Multivector = Multivector { coeffs: [0.0; DIM] };

    pub const fn from_coeffs(coeffs: [f64; DIM]) -> Self {
        Multivector { coeffs }
    }

    pub fn scalar(s: f64) -> Self {
        let mut m = Self::ZERO;
        m.coeffs[0] = s;
        m
    }

    /// Unit basis blade at canonical index `i`.
    pub fn basis(i: usize) -> Self {
        let mut m = Self::ZERO;
        m.coeffs[i] = 1.0;
        m
    }

    /// Basis vector `e_axis` for `axis` in 1..=4.
    pub fn e(axis: usize) -> Result<Self, CliffordError> {
        if !(1..=4).contains(&axis) {
            return Err(CliffordError::InvalidAxis(axis));
        }
        Ok(Self::basis(axis))
    }

    /// Grade-1 element `v[0] e1 + ... + v[3] e4`.
    pub fn vector(v: [f64; 4]) -> Self {
        let mut m = Self::ZERO;
        m.coeffs[1..5].copy_from_slice(&v);
        m
    }

    /// Canonical index of the unit bivector `e_i ∧ e_j` (i < j) and its sign
    /// relative to the ordering given.
    pub fn bivector_index(i: usize, j: usize) -> Result<(usize, f64), CliffordError> {
        for axis in [i, j] {
            if !(1..=4).contains(&axis) {
                return Err(CliffordError::InvalidAxis(axis));
            }
        }
        if i == j {
            return Err(CliffordError::SameAxis(i));
        }
        let mask = (1u8 << (i - 1)) | (1u8 << (j - 1));
        let idx = mask_to_index(mask);
        Ok((idx, if i < j { 1.0 } else { -1.0 }))
    }

    pub fn as_slice(&self) -> &[f64] {
        &self.coeffs
    }

    pub fn is_finite(&self) -> bool {
        self.coeffs.iter().all(|c| c.is_finite())
    }

    /// Geometric product through an explicit table.
    pub fn product_with(&self, other: &Self, table: &BladeTable) -> Self {
        Self::from_coeffs(table.product(&self.coeffs, &other.coeffs))
    }

    pub fn geometric(&self, other: &Self) -> Self {
        self.product_with(other, &BLADE_TABLE)
    }

    /// Scalar part of the geometric product.
    pub fn inner_scalar(&self, other: &Self) -> f64 {
        (0..DIM)
            .map(|i| f64::from(BLADE_TABLE.sign[i][i]) * self.coeffs[i] * other.coeffs[i])
            .sum()
    }

    /// Outer product: blade pairs sharing a basis vector vanish.
    pub fn wedge(&self, other: &Self) -> Self {
        let mut out = [0.0; DIM];
        for i in 0..DIM {
            let ai = self.coeffs[i];
            if ai == 0.0 {
                continue;
            }
            for j in 0..DIM {
                if BLADE_MASKS[i] & BLADE_MASKS[j] != 0 {
                    continue;
                }
                let k = BLADE_TABLE.index[i][j] as usize;
                out[k] += f64::from(BLADE_TABLE.sign[i][j]) * ai * other.coeffs[j];
            }
        }
        Self::from_coeffs(out)
    }

    pub fn grade(&self, g: usize) -> Result<Self, CliffordError> {
        let (lo, hi) = *GRADE_RANGES.get(g).ok_or(CliffordError::InvalidGrade(g))?;
        let mut m = Self::ZERO;
        m.coeffs[lo..hi].copy_from_slice(&self.coeffs[lo..hi]);
        Ok(m)
    }

    /// Euclidean norm of the grade-`g` coefficients.
    pub fn grade_norm(&self, g: usize) -> Result<f64, CliffordError> {
        let (lo, hi) = *GRADE_RANGES.get(g).ok_or(CliffordError::InvalidGrade(g))?;
        Ok(self.coeffs[lo..hi].iter().map(|c| c * c).sum::<f64>().sqrt())
    }

    /// Reversion: grade-g blades scaled by (-1)^{g(g-1)/2}.
    pub fn reverse(&self) -> Self {
        let mut m = *self;
        for (i, c) in m.coeffs.iter_mut().enumerate() {
            let g = blade_grade(i);
            if (g * g.saturating_sub(1) / 2) % 2 == 1 {
                *c = -*c;
            }
        }
        m
    }

    /// Euclidean norm of the coefficient vector, equal to sqrt(<a ã>_0) in Cl(4,0).
    pub fn norm(&self) -> f64 {
        self.coeffs.iter().map(|c| c * c).sum::<f64>().sqrt()
    }

    /// Coefficient-space dot product (= scalar part of `a * reverse(b)`).
    pub fn dot(&self, other: &Self) -> f64 {
        self.coeffs.iter().zip(&other.coeffs).map(|(a, b)| a * b).sum()
    }

    pub fn scale(&self, s: f64) -> Self {
        let mut m = *self;
        m.coeffs.iter_mut().for_each(|c| *c *= s);
        m
    }

    /// Matrix of `x -> self * x` acting on coefficient vectors (row-major, 16×16).
    pub fn left_mul_matrix(&self) -> Vec<f64> {
        let mut mat = vec![0.0; DIM * DIM];
        for col in 0..DIM {
            let image = self.geometric(&Self::basis(col));
            for row in 0..DIM {
                mat[row * DIM + col] = image.coeffs[row];
            }
        }
        mat
    }

    /// Serialize as 16 comma-separated shortest round-trip decimals.
    pub fn to_csv(&self) -> String {
        join_f64(&self.coeffs)
    }
}

pub(crate) fn join_f64(values: &[f64]) -> String {
    let mut out = String::new();
    for (i, v) in values.iter().enumerate() {
        if i > 0 {
            out.push(',');
        }
        out.push_str(&format_f64(*v));
    }
    out
}

/// Shortest representation that parses back to the same bits.
pub fn format_f64(v: f64) -> String {
    format!("{v:?}")
}

impl FromStr for Multivector {
    type Err = CliffordError;

    fn from_str(s: &str) -> Result<Self, Self::Err> {
        let parts: Vec<&str> = s.trim().split(',').collect();
        if parts.len() != DIM {
            return Err(CliffordError::Parse(format!(
                "expected {DIM} coefficients, found {}",
                parts.len()
            )));
        }
        let mut coeffs = [0.0; DIM];
        for (c, p) in coeffs.iter_mut().zip(parts) {
            let v: f64 = p
                .trim()
                .parse()
                .map_err(|_| CliffordError::Parse(format!("not a number: {p:?}")))?;
            if !v.is_finite() {
                return Err(CliffordError::Parse(format!("non-finite coefficient {p:?}")));
            }
            *c = v;
        }
        Ok(Self::from_coeffs(coeffs))
    }
}

impl fmt::Debug for Multivector {
    fn fmt(&self, f: &mut fmt::Formatter<'_>) -> fmt::Result {
        write!(f, "Multivector({})", self.to_csv())
    }
}

impl fmt::Display for Multivector {
    fn fmt(&self, f: &mut fmt::Formatter<'_>) -> fmt::Result {
        let mut first = true;
        for (c, name) in self.coeffs.iter().zip(BLADE_NAMES) {
            if *c == 0.0 {
                continue;
            }
            if !first {
                f.write_str(" + ")?;
            }
            first = false;
            if name == "1" {
                write!(f, "{c}")?;
            } else {
                write!(f, "{c}{name}")?;
            }
        }
        if first {
            f.write_str("0")?;
        }
        Ok(())
    }
}

impl Index<usize> for Multivector {
    type Output = f64;
    fn index(&self, i: usize) -> &f64 {
        &self.coeffs[i]
    }
}

impl IndexMut<usize> for Multivector {
    fn index_mut(&mut self, i: usize) -> &mut f64 {
        &mut self.coeffs[i]
    }
}

impl Add for Multivector {
    type Output = Multivector;
    fn add(mut self, rhs: Self) -> Self {
        self += rhs;
        self
    }
}

impl AddAssign for Multivector {
    fn add_assign(&mut self, rhs: Self) {
        for (a, b) in self.coeffs.iter_mut().zip(rhs.coeffs) {
            *a += b;
        }
    }
}

impl Sub for Multivector {
    type Output = Multivector;
    fn sub(mut self, rhs: Self) -> Self {
        for (a, b) in self.coeffs.iter_mut().zip(rhs.coeffs) {
            *a -= b;
        }
        self
    }
}

impl Neg for Multivector {
    type Output = Multivector;
    fn neg(self) -> Self {
        self.scale(-1.0)
    }
}

impl Mul for Multivector {
    type Output = Multivector;
    fn mul(self, rhs: Self) -> Self {
        self.geometric(&rhs)
    }
}

impl Mul<f64> for Multivector {
    type Output = Multivector;
    fn mul(self, rhs: f64) -> Self {
        self.scale(rhs)
    }
}

/// Unit even-grade multivector used for sandwich transformations.
#[derive(Debug, Clone, Copy, PartialEq)]
pub struct Rotor {
    value: Multivector,
}

impl Rotor {
    /// Tolerance on `|U Ũ - 1|` accepted by [`Rotor::new`].
    pub const UNIT_TOLERANCE: f64 = 1e-9;

    pub fn identity() -> Self {
        Rotor { value: Multivector::scalar(1.0) }
    }

    /// Wrap an even multivector, rejecting non-unit values and odd grades.
    pub fn new(value: Multivector) -> Result<Self, CliffordError> {
        let odd = value.grade(1)?.norm() + value.grade(3)?.norm();
        let prod = value * value.reverse();
        let dev = (prod - Multivector::scalar(1.0)).norm() + odd;
        if !dev.is_finite() || dev > Self::UNIT_TOLERANCE {
            return Err(CliffordError::NotUnit(dev));
        }
        Ok(Rotor { value })
    }

    /// `cos(θ/2) − sin(θ/2) e_ij`.
    pub fn in_plane(i: usize, j: usize, theta: f64) -> Result<Self, CliffordError> {
        let (idx, sign) = Multivector::bivector_index(i, j)?;
        let mut m = Multivector::scalar((theta / 2.0).cos());
        m.coeffs[idx] = -sign * (theta / 2.0).sin();
        Ok(Rotor { value: m })
    }

    /// Product of this rotor followed by `other` (`other * self`).
    pub fn then(&self, other: &Rotor) -> Rotor {
        Rotor { value: other.value * self.value }
    }

    pub fn value(&self) -> &Multivector {
        &self.value
    }

    pub fn inverse(&self) -> Rotor {
        Rotor { value: self.value.reverse() }
    }

    /// `U a U⁻¹` with `U⁻¹ = Ũ`.
    pub fn conjugate(&self, a: &Multivector) -> Multivector {
        self.value * *a * self.value.reverse()
    }
}

#[cfg(test)]
mod tests {
    use super::*;

    fn e(i: usize) -> Multivector {
        Multivector::e(i).unwrap()
    }

    /// Independent construction: concatenate index lists, bubble sort while
    /// counting swaps, cancel adjacent equal factors.
    fn brute_product(a: usize, b: usize) -> (usize, i8) {
        let mut factors: Vec<u8> = Vec::new();
        for m in [BLADE_MASKS[a], BLADE_MASKS[b]] {
            for k in 0..4 {
                if m & (1 << k) != 0 {
                    factors.push(k + 1);
                }
            }
        }
        let mut sign = 1i8;
        loop {
            let mut changed = false;
            let mut k = 0;
            while k + 1 < factors.len() {
                if factors[k] > factors[k + 1] {
                    factors.swap(k, k + 1);
                    sign = -sign;
                    changed = true;
                } else if factors[k] == factors[k + 1] {
                    factors.drain(k..k + 2);
                    changed = true;
                    continue;
                }
                k += 1;
            }
            if !changed {
                break;
            }
        }
        let mask = factors.iter().fold(0u8, |m, f| m | (1 << (f - 1)));
        (BLADE_MASKS.iter().position(|&x| x == mask).unwrap(), sign)
    }

    #[test]
    fn table_matches_brute_force() {
        for a in 0..DIM {
            for b in 0..DIM {
                let (idx, sign) = brute_product(a, b);
                assert_eq!(BLADE_TABLE.index[a][b] as usize, idx, "{a} {b}");
                assert_eq!(BLADE_TABLE.sign[a][b], sign, "{a} {b}");
            }
        }
    }

    #[test]
    fn hand_cases() {
        // e1 e2 e3 * e1 = e1 e2 e3 e1 = e2 e3 (two swaps)
        assert_eq!(BLADE_TABLE.index[11][1], 8);
        assert_eq!(BLADE_TABLE.sign[11][1], 1);
        // e12 e12 = -1
        assert_eq!(BLADE_TABLE.index[5][5], 0);
        assert_eq!(BLADE_TABLE.sign[5][5], -1);
        // e1234 squared = +1 in Cl(4,0)
        assert_eq!(BLADE_TABLE.sign[15][15], 1);
        assert_eq!(BLADE_TABLE.index[15][15], 0);
    }

    #[test]
    fn signature() {
        assert_eq!(e(1) * e(1), Multivector::scalar(1.0));
        assert_eq!(e(1) * e(2), Multivector::basis(5));
        assert_eq!(e(2) * e(1), -Multivector::basis(5));
        let p = (e(1) + e(2)) * (e(1) - e(2));
        let mut expect = Multivector::ZERO;
        expect[5] = -2.0;
        assert_eq!(p, expect);
    }

    #[test]
    fn inner_and_wedge() {
        assert_eq!(e(1).inner_scalar(&e(1)), 1.0);
        assert_eq!(e(1).inner_scalar(&e(2)), 0.0);
        assert_eq!((e(1) * 3.0 + e(2) * 4.0).inner_scalar(&e(1)), 3.0);
        assert_eq!(e(1).wedge(&e(2)), Multivector::basis(5));
        assert_eq!(e(2).wedge(&e(1)), -Multivector::basis(5));
        assert_eq!((e(1) + e(2)).wedge(&(e(1) + e(2))), Multivector::ZERO);
    }

    #[test]
    fn grades() {
        let m = Multivector::scalar(1.0) + e(1) + Multivector::basis(5);
        assert_eq!(m.grade(1).unwrap(), e(1));
        assert_eq!(m.grade(0).unwrap(), Multivector::scalar(1.0));
        assert_eq!(m.grade(5), Err(CliffordError::InvalidGrade(5)));
    }

    #[test]
    fn reversion_signs() {
        assert_eq!(Multivector::basis(5).reverse(), -Multivector::basis(5));
        assert_eq!(e(1).reverse(), e(1));
        assert_eq!(Multivector::basis(11).reverse(), -Multivector::basis(11));
        assert_eq!(Multivector::basis(15).reverse(), Multivector::basis(15));
    }

    #[test]
    fn rotors() {
        let id = Rotor::in_plane(1, 2, 0.0).unwrap();
        assert_eq!(*id.value(), Multivector::scalar(1.0));
        assert!(matches!(Rotor::in_plane(2, 2, 1.0), Err(CliffordError::SameAxis(2))));

        let half = Rotor::in_plane(1, 2, std::f64::consts::PI).unwrap();
        let r = half.conjugate(&e(1));
        assert!((r - (-e(1))).norm() < 1e-15);

        let u = Rotor::in_plane(1, 2, 0.73).unwrap();
        let p = *u.value() * u.value().reverse();
        assert!((p - Multivector::scalar(1.0)).norm() < 1e-12);

        // quarter turn: e1 -> e2 under this orientation
        let q = Rotor::in_plane(1, 2, std::f64::consts::FRAC_PI_2).unwrap();
        let r = q.conjugate(&e(1));
        assert!((r - e(2)).norm() < 1e-15);
        assert!((r.norm() - 1.0).abs() < 1e-15);
    }

    #[test]
    fn non_unit_rotor_rejected() {
        let m = Multivector::scalar(1.1);
        assert!(matches!(Rotor::new(m), Err(CliffordError::NotUnit(_))));
        assert!(Rotor::new(Multivector::scalar(1.0)).is_ok());
        assert!(Rotor::new(e(1)).is_err());
    }

    #[test]
    fn left_mul_matrix_matches_product() {
        let a = Multivector::from_coeffs(std::array::from_fn(|i| (i as f64 * 0.37).sin()));
        let b = Multivector::from_coeffs(std::array::from_fn(|i| (i as f64 * 1.1).cos()));
        let mat = a.left_mul_matrix();
        let mut out = [0.0; DIM];
        for r in 0..DIM {
            out[r] = (0..DIM).map(|c| mat[r * DIM + c] * b.coeffs[c]).sum();
        }
        assert!((Multivector::from_coeffs(out) - a * b).norm() < 1e-14);
    }

    #[test]
    fn csv_round_trip_and_errors() {
        let m = Multivector::from_coeffs(std::array::from_fn(|i| 0.1 * i as f64 - 1e-300));
        let back: Multivector = m.to_csv().parse().unwrap();
        assert_eq!(back.coeffs.map(f64::to_bits), m.coeffs.map(f64::to_bits));
        assert!("1,2,3".parse::<Multivector>().is_err());
        assert!((0..16).map(|_| "x").collect::<Vec<_>>().join(",").parse::<Multivector>().is_err());
    }
}
