//! Complex exterior algebra over R^m for m <= 3.
//!
//! Basis blades are stored densely, indexed by bitmask: bit `j - 1` set means
//! `e_j` is a factor. Index 0 is the scalar part.

use std::fmt;
use std::ops::{Add, AddAssign, Mul, MulAssign, Neg, Sub, SubAssign};

use num_complex::Complex64;

use crate::error::{Error, Result};

pub const MAX_DIM: u8 = 3;
const SIZE: usize = 1 << MAX_DIM;

/// Sign of `e_A ^ e_B` for disjoint masks, with `WEDGE_SIGN[a][b] = 0` when they overlap.
const WEDGE_SIGN: [[i8; SIZE]; SIZE] = {
    let mut t = [[0i8; SIZE]; SIZE];
    let mut a = 0;
    while a < SIZE {
        let mut b = 0;
        while b < SIZE {
            if a & b == 0 {
                // count pairs (i in a, j in b) with i > j
                let mut swaps = 0u32;
                let mut j = 0;
                while j < MAX_DIM as usize {
                    if b & (1 << j) != 0 {
                        swaps += (a >> (j + 1)).count_ones();
                    }
                    j += 1;
                }
                t[a][b] = if swaps % 2 == 0 { 1 } else { -1 };
            }
            b += 1;
        }
        a += 1;
    }
    t
};

/// Which homogeneous components to keep in [`grade_select`].
#[derive(Debug, Clone, Copy, PartialEq, Eq)]
pub enum Grade {
    Even,
    Odd,
    Degree(usize),
}

/// An element of Λ(R^m) ⊗ C.
#[derive(Clone, Copy, PartialEq)]
pub struct Multivector {
    dim: u8,
    coeffs: [Complex64; SIZE],
}

/// Number of basis factors in a blade mask.
#[inline]
pub fn blade_degree(mask: usize) -> usize {
    mask.count_ones() as usize
}

/// Blade masks of `Λ(R^dim)` in canonical order: by degree, then lexicographically
/// on the ascending index lists.
pub fn canonical_masks(dim: u8) -> Vec<usize> {
    let mut masks: Vec<usize> = (0..1usize << dim).collect();
    masks.sort_by_key(|&m| (blade_degree(m), blade_indices(m)));
    masks
}

/// Ascending 1-based indices of the factors of a blade.
pub fn blade_indices(mask: usize) -> Vec<usize> {
    (0..MAX_DIM as usize)
        .filter(|j| mask & (1 << j) != 0)
        .map(|j| j + 1)
        .collect()
}

/// Blade mask for a list of 1-based indices, with the sign of sorting them.
/// Returns `None` if an index repeats.
pub fn mask_of(indices: &[usize]) -> Option<(usize, i8)> {
    let mut mask = 0usize;
    let mut sign = 1i8;
    for &i in indices {
        if i == 0 || i > MAX_DIM as usize {
            return None;
        }
        let bit = 1usize << (i - 1);
        if mask & bit != 0 {
            return None;
        }
        sign *= WEDGE_SIGN[mask][bit];
        mask |= bit;
    }
    Some((mask, sign))
}

impl Multivector {
    /// The zero element. Dimensions 0..=3 are accepted; dimension 0 is the
    /// algebra of a point and arises when restricting to 0-dimensional sheets.
    pub fn zero(dim: u8) -> Self {
        assert!(dim <= MAX_DIM, "exterior algebra dimension {dim} exceeds {MAX_DIM}");
        Multivector { dim, coeffs: [Complex64::new(0.0, 0.0); SIZE] }
    }

    pub fn try_zero(dim: u8) -> Result<Self> {
        if dim > MAX_DIM {
            return Err(Error::Config(format!("dimension {dim} not in 0..={MAX_DIM}")));
        }
        Ok(Self::zero(dim))
    }

    pub fn scalar(dim: u8, c: impl Into<Complex64>) -> Self {
        let mut m = Self::zero(dim);
        m.coeffs[0] = c.into();
        m
    }

    pub fn one(dim: u8) -> Self {
        Self::scalar(dim, 1.0)
    }

    /// The coordinate 1-form `e_i` (1-based).
    pub fn e(dim: u8, i: usize) -> Self {
        Self::blade(dim, &[i], 1.0)
    }

    /// `c · e_{i1} ∧ … ∧ e_{ik}`; indices may be given in any order.
    /// Repeated indices give zero.
    pub fn blade(dim: u8, indices: &[usize], c: impl Into<Complex64>) -> Self {
        let mut m = Self::zero(dim);
        assert!(
            indices.iter().all(|&i| i >= 1 && i <= dim as usize),
            "blade index out of range for dimension {dim}: {indices:?}"
        );
        if let Some((mask, sign)) = mask_of(indices) {
            m.coeffs[mask] = c.into() * f64::from(sign);
        }
        m
    }

    pub fn from_coeffs(dim: u8, coeffs: &[(usize, Complex64)]) -> Self {
        let mut m = Self::zero(dim);
        for &(mask, c) in coeffs {
            assert!(mask < 1 << dim);
            m.coeffs[mask] += c;
        }
        m
    }

    #[inline]
    pub fn dim(&self) -> u8 {
        self.dim
    }

    /// Number of basis blades, `2^dim`.
    #[inline]
    pub fn len(&self) -> usize {
        1 << self.dim
    }

    #[inline]
    pub fn is_empty(&self) -> bool {
        false
    }

    #[inline]
    pub fn get(&self, mask: usize) -> Complex64 {
        self.coeffs[mask]
    }

    #[inline]
    pub fn set(&mut self, mask: usize, c: Complex64) {
        assert!(mask < self.len());
        self.coeffs[mask] = c;
    }

    #[inline]
    pub fn scalar_part(&self) -> Complex64 {
        self.coeffs[0]
    }

    /// Coefficient of the blade with the given indices, sign-adjusted for order.
    pub fn coeff(&self, indices: &[usize]) -> Complex64 {
        match mask_of(indices) {
            Some((mask, sign)) if mask < self.len() => self.coeffs[mask] * f64::from(sign),
            _ => Complex64::new(0.0, 0.0),
        }
    }

    /// `(mask, coefficient)` pairs in canonical order.
    pub fn terms(&self) -> impl Iterator<Item = (usize, Complex64)> + '_ {
        canonical_masks(self.dim).into_iter().map(move |m| (m, self.coeffs[m]))
    }

    pub fn is_zero(&self) -> bool {
        self.coeffs[..self.len()].iter().all(|c| c.re == 0.0 && c.im == 0.0)
    }

    /// Largest coefficient modulus.
    pub fn max_abs(&self) -> f64 {
        self.coeffs[..self.len()].iter().map(|c| c.norm()).fold(0.0, f64::max)
    }

    /// Largest componentwise distance to `other`.
    pub fn max_abs_diff(&self, other: &Self) -> f64 {
        (*self - *other).max_abs()
    }

    pub fn is_even(&self) -> bool {
        (0..self.len()).all(|m| blade_degree(m) % 2 == 0 || self.coeffs[m] == Complex64::new(0.0, 0.0))
    }

    /// Highest degree with a nonzero coefficient, or `None` for zero.
    pub fn top_degree(&self) -> Option<usize> {
        (0..self.len())
            .filter(|&m| self.coeffs[m] != Complex64::new(0.0, 0.0))
            .map(blade_degree)
            .max()
    }

    pub fn wedge(&self, other: &Self) -> Result<Self> {
        wedge(self, other)
    }

    /// Applies `g(degree, c)` to every coefficient.
    pub fn map_grades(&self, mut g: impl FnMut(usize, Complex64) -> Complex64) -> Self {
        let mut out = *self;
        for m in 0..self.len() {
            out.coeffs[m] = g(blade_degree(m), self.coeffs[m]);
        }
        out
    }

    pub fn map(&self, mut g: impl FnMut(Complex64) -> Complex64) -> Self {
        self.map_grades(|_, c| g(c))
    }

    pub fn conj(&self) -> Self {
        self.map(|c| c.conj())
    }

    /// Re-embeds into the algebra of another dimension, keeping blades that fit.
    pub fn with_dim(&self, dim: u8) -> Self {
        let mut out = Self::zero(dim);
        for m in 0..out.len().min(self.len()) {
            out.coeffs[m] = self.coeffs[m];
        }
        out
    }

    fn wedge_unchecked(&self, other: &Self) -> Self {
        let n = self.len();
        let mut out = Self::zero(self.dim);
        for a in 0..n {
            let ca = self.coeffs[a];
            if ca.re == 0.0 && ca.im == 0.0 {
                continue;
            }
            for b in 0..n {
                let s = WEDGE_SIGN[a][b];
                if s != 0 {
                    out.coeffs[a | b] += ca * other.coeffs[b] * f64::from(s);
                }
            }
        }
        out
    }
}

/// Exterior product. Fails if the dimensions differ.
pub fn wedge(a: &Multivector, b: &Multivector) -> Result<Multivector> {
    if a.dim != b.dim {
        return Err(Error::Config(format!(
            "wedge of multivectors of dimensions {} and {}",
            a.dim, b.dim
        )));
    }
    Ok(a.wedge_unchecked(b))
}

/// Exponential of an even element `s + N`, namely `e^s · Σ_j N^j / j!`.
pub fn exp_even(a: &Multivector) -> Result<Multivector> {
    if !a.is_even() {
        return Err(Error::Contract("exp_even applied to an element with odd-degree components".into()));
    }
    let s = a.coeffs[0];
    let mut nil = *a;
    nil.coeffs[0] = Complex64::new(0.0, 0.0);
    let mut sum = Multivector::one(a.dim);
    let mut power = Multivector::one(a.dim);
    for j in 1..=(a.dim as usize / 2) {
        power = power.wedge_unchecked(&nil) * Complex64::new(1.0 / j as f64, 0.0);
        sum += power;
    }
    Ok(sum * s.exp())
}

/// Projection onto the requested degrees. Degrees above `dim` give zero.
pub fn grade_select(a: &Multivector, which: Grade) -> Multivector {
    a.map_grades(|k, c| {
        let keep = match which {
            Grade::Even => k % 2 == 0,
            Grade::Odd => k % 2 == 1,
            Grade::Degree(d) => k == d,
        };
        if keep { c } else { Complex64::new(0.0, 0.0) }
    })
}

impl Add for Multivector {
    type Output = Self;
    fn add(mut self, rhs: Self) -> Self {
        self += rhs;
        self
    }
}

impl AddAssign for Multivector {
    fn add_assign(&mut self, rhs: Self) {
        assert_eq!(self.dim, rhs.dim, "dimension mismatch in addition");
        for m in 0..self.len() {
            self.coeffs[m] += rhs.coeffs[m];
        }
    }
}

impl Sub for Multivector {
    type Output = Self;
    fn sub(mut self, rhs: Self) -> Self {
        self -= rhs;
        self
    }
}

impl SubAssign for Multivector {
    fn sub_assign(&mut self, rhs: Self) {
        assert_eq!(self.dim, rhs.dim, "dimension mismatch in subtraction");
        for m in 0..self.len() {
            self.coeffs[m] -= rhs.coeffs[m];
        }
    }
}

impl Neg for Multivector {
    type Output = Self;
    fn neg(self) -> Self {
        self.map(|c| -c)
    }
}

/// Exterior product; panics on a dimension mismatch.
impl Mul for Multivector {
    type Output = Self;
    fn mul(self, rhs: Self) -> Self {
        assert_eq!(self.dim, rhs.dim, "dimension mismatch in wedge");
        self.wedge_unchecked(&rhs)
    }
}

impl Mul<Complex64> for Multivector {
    type Output = Self;
    fn mul(self, rhs: Complex64) -> Self {
        self.map(|c| c * rhs)
    }
}

impl Mul<f64> for Multivector {
    type Output = Self;
    fn mul(self, rhs: f64) -> Self {
        self.map(|c| c * rhs)
    }
}

impl MulAssign<Complex64> for Multivector {
    fn mul_assign(&mut self, rhs: Complex64) {
        *self = *self * rhs;
    }
}

impl MulAssign<f64> for Multivector {
    fn mul_assign(&mut self, rhs: f64) {
        *self = *self * rhs;
    }
}

fn fmt_blade(mask: usize) -> String {
    let idx: Vec<String> = blade_indices(mask).iter().map(|i| i.to_string()).collect();
    format!("e{{{}}}", idx.join(","))
}

/// Renders as ` + `-separated `(re,im)*e{i,j}` terms in canonical order,
/// skipping zero coefficients; the zero element renders as `0`.
impl fmt::Display for Multivector {
    fn fmt(&self, f: &mut fmt::Formatter<'_>) -> fmt::Result {
        let mut first = true;
        for (mask, c) in self.terms() {
            if c.re == 0.0 && c.im == 0.0 {
                continue;
            }
            if !first {
                write!(f, " + ")?;
            }
            first = false;
            write!(f, "({:.16e},{:.16e})*{}", c.re, c.im, fmt_blade(mask))?;
        }
        if first {
            write!(f, "0")?;
        }
        Ok(())
    }
}

impl fmt::Debug for Multivector {
    fn fmt(&self, f: &mut fmt::Formatter<'_>) -> fmt::Result {
        write!(f, "Multivector[{}]({})", self.dim, self)
    }
}

/// Parses the format produced by `Display`.
pub fn parse_multivector(dim: u8, text: &str) -> Result<Multivector> {
    let mut out = Multivector::try_zero(dim)?;
    let text = text.trim();
    if text == "0" {
        return Ok(out);
    }
    for term in text.split(" + ") {
        let bad = || Error::Parse(format!("malformed term `{term}`"));
        let (coef, blade) = term.trim().split_once(")*e{").ok_or_else(bad)?;
        let coef = coef.strip_prefix('(').ok_or_else(bad)?;
        let (re, im) = coef.split_once(',').ok_or_else(bad)?;
        let re: f64 = re.trim().parse().map_err(|_| bad())?;
        let im: f64 = im.trim().parse().map_err(|_| bad())?;
        let blade = blade.strip_suffix('}').ok_or_else(bad)?;
        let indices: Vec<usize> = if blade.trim().is_empty() {
            Vec::new()
        } else {
            blade
                .split(',')
                .map(|s| s.trim().parse::<usize>().map_err(|_| bad()))
                .collect::<Result<_>>()?
        };
        if indices.iter().any(|&i| i == 0 || i > dim as usize) {
            return Err(Error::Parse(format!("blade index out of range in `{term}`")));
        }
        let (mask, sign) = mask_of(&indices).ok_or_else(bad)?;
        out.coeffs[mask] += Complex64::new(re, im) * f64::from(sign);
    }
    Ok(out)
}

impl std::str::FromStr for Multivector {
    type Err = Error;

    /// Parses into dimension 3; use [`parse_multivector`] for other dimensions.
    fn from_str(s: &str) -> Result<Self> {
        parse_multivector(MAX_DIM, s)
    }
}

#[cfg(test)]
mod tests {
    use super::*;

    fn c(re: f64) -> Complex64 {
        Complex64::new(re, 0.0)
    }

    #[test]
    fn antisymmetry_of_coordinate_forms() {
        let dx = Multivector::e(2, 1);
        let dy = Multivector::e(2, 2);
        assert_eq!(wedge(&dx, &dy).unwrap().coeff(&[1, 2]), c(1.0));
        assert_eq!(wedge(&dy, &dx).unwrap().coeff(&[1, 2]), c(-1.0));
        assert_eq!(wedge(&dx, &dy).unwrap().coeff(&[2, 1]), c(-1.0));
    }

    #[test]
    fn distributivity() {
        let one = Multivector::one(2);
        let a = one + Multivector::e(2, 1);
        let b = one + Multivector::e(2, 2);
        let p = wedge(&a, &b).unwrap();
        let expect = one + Multivector::e(2, 1) + Multivector::e(2, 2) + Multivector::blade(2, &[1, 2], 1.0);
        assert_eq!(p, expect);
    }

    #[test]
    fn degree_overflow_is_zero() {
        let e12 = Multivector::blade(2, &[1, 2], 1.0);
        assert!(wedge(&e12, &Multivector::e(2, 1)).unwrap().is_zero());
    }

    #[test]
    fn dimension_mismatch_is_config_error() {
        let r = wedge(&Multivector::e(2, 1), &Multivector::e(3, 1));
        assert!(matches!(r, Err(Error::Config(_))));
    }

    #[test]
    fn sign_table_matches_permutation_parity() {
        // e1 e2 e3 built in every order
        let perms: [([usize; 3], f64); 6] = [
            ([1, 2, 3], 1.0),
            ([1, 3, 2], -1.0),
            ([2, 1, 3], -1.0),
            ([2, 3, 1], 1.0),
            ([3, 1, 2], 1.0),
            ([3, 2, 1], -1.0),
        ];
        for (p, s) in perms {
            let v = Multivector::e(3, p[0]) * Multivector::e(3, p[1]) * Multivector::e(3, p[2]);
            assert_eq!(v.coeff(&[1, 2, 3]), c(s), "{p:?}");
        }
    }

    #[test]
    fn exp_even_examples() {
        assert_eq!(exp_even(&Multivector::zero(3)).unwrap(), Multivector::one(3));
        let n = Multivector::blade(2, &[1, 2], Complex64::new(0.3, -0.2));
        assert_eq!(exp_even(&n).unwrap(), Multivector::one(2) + n);
        let s = Complex64::new(0.7, 0.1);
        let n3 = Multivector::blade(3, &[1, 2], 2.0);
        let got = exp_even(&(Multivector::scalar(3, s) + n3)).unwrap();
        let want = (Multivector::one(3) + n3) * s.exp();
        assert!(got.max_abs_diff(&want) < 1e-15);
    }

    #[test]
    fn exp_even_rejects_odd() {
        let r = exp_even(&(Multivector::one(2) + Multivector::e(2, 1)));
        assert!(matches!(r, Err(Error::Contract(_))));
    }

    #[test]
    fn grade_selection() {
        let a = Multivector::one(2) + Multivector::e(2, 1) + Multivector::blade(2, &[1, 2], 1.0);
        assert_eq!(grade_select(&a, Grade::Even), Multivector::one(2) + Multivector::blade(2, &[1, 2], 1.0));
        assert_eq!(grade_select(&a, Grade::Odd), Multivector::e(2, 1));
        assert!(grade_select(&Multivector::e(2, 1), Grade::Degree(2)).is_zero());
        assert!(grade_select(&a, Grade::Degree(7)).is_zero());
    }

    #[test]
    fn canonical_order_m3() {
        assert_eq!(canonical_masks(3), vec![0, 1, 2, 4, 3, 5, 6, 7]);
    }

    #[test]
    fn render_and_parse_roundtrip() {
        let a = Multivector::scalar(3, Complex64::new(1.0, -2.0))
            + Multivector::blade(3, &[2, 3], Complex64::new(0.1, 1e-300))
            + Multivector::blade(3, &[1, 2, 3], Complex64::new(-3.5, 0.0));
        let s = a.to_string();
        assert_eq!(parse_multivector(3, &s).unwrap(), a);
        assert_eq!(Multivector::zero(2).to_string(), "0");
        assert!(parse_multivector(2, "0").unwrap().is_zero());
        assert!(parse_multivector(2, "(1,0)*e{3}").is_err());
        assert_eq!(parse_multivector(2, "(1,0)*e{2,1}").unwrap().coeff(&[1, 2]), c(-1.0));
    }
}
