//! Bernoulli numbers and polynomials, the Fourier series `g_n`, and the
//! closed-form eta-forms of the circle family.

use std::f64::consts::PI;
use std::sync::OnceLock;

use num_complex::Complex64;
use num_rational::Rational64;

use crate::error::{Error, Result};
use crate::grassmann::{exp_even, grade_select, Grade, Multivector};

/// Largest tabulated Bernoulli index.
pub const MAX_INDEX: usize = 16;

/// Bernoulli numbers `B_0..=B_N` in exact rational arithmetic (`B_1 = -1/2`).
#[derive(Debug, Clone, PartialEq)]
pub struct BernoulliTable {
    exact: Vec<Rational64>,
    numbers: Vec<f64>,
}

fn binomial(n: usize, k: usize) -> i64 {
    let mut r: i64 = 1;
    for j in 0..k {
        r = r * (n - j) as i64 / (j + 1) as i64;
    }
    r
}

impl BernoulliTable {
    /// Builds the table from `Σ_{j≤n} C(n+1, j) B_j = 0`.
    pub fn new(max_index: usize) -> Result<Self> {
        if !(12..=MAX_INDEX).contains(&max_index) {
            return Err(Error::Config(format!("Bernoulli table size {max_index} not in 12..={MAX_INDEX}")));
        }
        let mut exact = vec![Rational64::from_integer(1)];
        for n in 1..=max_index {
            let mut s = Rational64::from_integer(0);
            for (j, b) in exact.iter().enumerate() {
                s += *b * binomial(n + 1, j);
            }
            exact.push(-s / (n as i64 + 1));
        }
        let numbers = exact.iter().map(|r| *r.numer() as f64 / *r.denom() as f64).collect();
        Ok(BernoulliTable { exact, numbers })
    }

    pub fn max_index(&self) -> usize {
        self.exact.len() - 1
    }

    pub fn exact(&self, k: usize) -> Rational64 {
        self.exact[k]
    }

    pub fn number(&self, k: usize) -> f64 {
        self.numbers[k]
    }

    /// `B_n(x) = Σ_k C(n, k) B_k x^{n-k}`.
    pub fn poly(&self, n: usize, x: f64) -> Result<f64> {
        if n > self.max_index() {
            return Err(Error::Config(format!("Bernoulli index {n} exceeds table size {}", self.max_index())));
        }
        Ok((0..=n).map(|k| binomial(n, k) as f64 * self.numbers[k] * x.powi((n - k) as i32)).sum())
    }
}

/// The shared table of size [`MAX_INDEX`].
pub fn table() -> &'static BernoulliTable {
    static TABLE: OnceLock<BernoulliTable> = OnceLock::new();
    TABLE.get_or_init(|| BernoulliTable::new(MAX_INDEX).expect("valid table size"))
}

pub fn bernoulli_number(k: usize) -> Result<f64> {
    if k > MAX_INDEX {
        return Err(Error::Config(format!("Bernoulli index {k} exceeds {MAX_INDEX}")));
    }
    Ok(table().number(k))
}

pub fn bernoulli_poly(n: usize, x: f64) -> Result<f64> {
    table().poly(n, x)
}

/// Taylor coefficients `c_n` of `x / (e^x - 1)` by series division; `B_n = n! c_n`.
pub fn generating_function_coefficients(count: usize) -> Vec<f64> {
    let mut c = vec![0.0; count];
    if count == 0 {
        return c;
    }
    c[0] = 1.0;
    // (e^x - 1)/x = Σ x^k/(k+1)!
    let mut inv_fact = vec![1.0; count + 2];
    for k in 1..count + 2 {
        inv_fact[k] = inv_fact[k - 1] / k as f64;
    }
    for n in 1..count {
        c[n] = -(1..=n).map(|k| c[n - k] * inv_fact[k + 1]).sum::<f64>();
    }
    c
}

/// `N`-term partial sum of `g_n(x)`: `Σ_k sin(2πkx)/(2^n π^{n+1} k^{n+1})`
/// for even `n`, and `-i` times the cosine series for odd `n`.
pub fn fourier_partial_sum(n: u32, x: f64, terms: usize) -> Complex64 {
    let scale = 2f64.powi(n as i32) * PI.powi(n as i32 + 1);
    let mut s = 0.0;
    // sum small terms first
    for k in (1..=terms).rev() {
        let kf = k as f64;
        let arg = 2.0 * PI * ((kf * x).rem_euclid(1.0));
        let trig = if n % 2 == 0 { arg.sin() } else { arg.cos() };
        s += trig / kf.powi(n as i32 + 1);
    }
    s /= scale;
    if n % 2 == 0 {
        Complex64::new(s, 0.0)
    } else {
        Complex64::new(0.0, -s)
    }
}

/// Global sign of the closed-form eta-forms relative to the
/// `+Σ B_k(a)/k! (T/2π)^{k-1}` form.
#[derive(Debug, Clone, Copy, PartialEq, Eq)]
pub enum SignConvention {
    Plus,
    Minus,
}

impl SignConvention {
    pub fn from_sign(s: i64) -> Result<Self> {
        match s {
            1 => Ok(SignConvention::Plus),
            -1 => Ok(SignConvention::Minus),
            _ => Err(Error::Config(format!("sign convention must be +1 or -1, got {s}"))),
        }
    }

    pub fn value(self) -> f64 {
        match self {
            SignConvention::Plus => 1.0,
            SignConvention::Minus => -1.0,
        }
    }
}

const FIXTURE: &str = include_str!("../fixtures/eta_sign.csv");

/// Reads a named value from the pinned oracle fixture.
pub fn fixture_value(key: &str) -> Option<f64> {
    FIXTURE
        .lines()
        .filter(|l| !l.starts_with('#'))
        .filter_map(|l| l.split_once(','))
        .find(|(k, _)| k.trim() == key)
        .and_then(|(_, v)| v.trim().parse().ok())
}

/// The sign convention fixed by the quadrature oracle and pinned in the fixture file.
pub fn resolved_sign_convention() -> SignConvention {
    let s = fixture_value("sign_convention").expect("fixture defines sign_convention");
    SignConvention::from_sign(s as i64).expect("fixture sign is +1 or -1")
}

/// Wedge powers `T^0, T^1, …` up to the nilpotency order of the algebra.
fn wedge_powers(t: &Multivector) -> Vec<Multivector> {
    let mut out = vec![Multivector::one(t.dim())];
    for _ in 0..t.dim() as usize / 2 {
        let next = *out.last().unwrap() * *t;
        out.push(next);
    }
    out
}

fn check_torsion(dbeta: &Multivector, t: &Multivector) -> Result<()> {
    if dbeta.dim() != t.dim() {
        return Err(Error::Config("dβ and T have different dimensions".into()));
    }
    if !dbeta.is_even() {
        return Err(Error::Contract("dβ must be even".into()));
    }
    if (grade_select(t, Grade::Degree(2)) - *t).max_abs() != 0.0 {
        return Err(Error::Contract("T must be of pure degree 2".into()));
    }
    Ok(())
}

/// Closed-form `(η̂, η̃)` at a point where the crossing eigenvalue reduces to
/// `a ∈ [0, 1)` mod 1, with `dβ` taken in the gauge whose eigenvalue is `a`.
///
/// `η̂ = σ e^{-(dβ + iaT)} Σ_n B_{n+1}(a) (iT)^n / (n+1)!` off the crossing
/// locus and the same with the `n = 0` term removed at `a = 0`; `η̃` is
/// evaluated independently as `σ e^{-(dβ + iaT)/2πi} Σ_k B_k(a)/k! (T/2π)^{k-1}`.
pub fn closed_form_eta(a: f64, dbeta: &Multivector, t: &Multivector, sign: SignConvention) -> Result<(Multivector, Multivector)> {
    check_torsion(dbeta, t)?;
    if !(0.0..1.0).contains(&a) {
        return Err(Error::Contract(format!("holonomy representative a = {a} not in [0, 1)")));
    }
    let dim = t.dim();
    let on_b0 = a == 0.0;
    let i = Complex64::new(0.0, 1.0);
    let f_curv = *dbeta + *t * (i * a);
    let powers = wedge_powers(t);
    let tab = table();

    let mut series_hat = Multivector::zero(dim);
    for (n, tn) in powers.iter().enumerate() {
        if on_b0 && n == 0 {
            continue;
        }
        let c = tab.poly(n + 1, a)? / factorial(n + 1);
        series_hat += *tn * (i.powu(n as u32) * c);
    }
    let hat = exp_even(&-f_curv)? * series_hat * sign.value();

    let two_pi_i = Complex64::new(0.0, 2.0 * PI);
    let mut series_tilde = Multivector::zero(dim);
    for k in 1..=powers.len() {
        if on_b0 && k == 1 {
            continue;
        }
        let c = tab.poly(k, a)? / factorial(k);
        series_tilde += powers[k - 1] * (c / (2.0 * PI).powi(k as i32 - 1));
    }
    let tilde = exp_even(&(-f_curv * two_pi_i.inv()))? * series_tilde * sign.value();
    Ok((hat, tilde))
}

fn factorial(n: usize) -> f64 {
    (1..=n).map(|k| k as f64).product()
}

/// `K`-term partial sum of the Poisson-dual closed form
/// `-π e^{-dβ-ifT} Σ_k (4k sin(-2πfk)/(4π²k² - T²) + 2iT cos(-2πfk)/(4π³k² - πT²))`,
/// where `dβ` is in the gauge of the representative `f`. The rational
/// functions of `T` are expanded as finite geometric series in `T ∧ T`.
pub fn dual_series_eta(f: f64, dbeta: &Multivector, t: &Multivector, terms: usize) -> Result<Multivector> {
    check_torsion(dbeta, t)?;
    let dim = t.dim();
    let i = Complex64::new(0.0, 1.0);
    let t2 = *t * *t;
    let mut t2_powers = vec![Multivector::one(dim)];
    for _ in 0..dim as usize / 2 {
        let next = *t2_powers.last().unwrap() * t2;
        t2_powers.push(next);
    }
    let mut sum = Multivector::zero(dim);
    for k in (1..=terms).rev() {
        let kf = k as f64;
        let q = 4.0 * PI * PI * kf * kf;
        // 1/(q - T²) = Σ_j T^{2j} / q^{j+1}
        let mut inv = Multivector::zero(dim);
        for (j, p) in t2_powers.iter().enumerate() {
            inv += *p * (1.0 / q.powi(j as i32 + 1));
        }
        let arg = -2.0 * PI * (f * kf).rem_euclid(1.0);
        sum += inv * (4.0 * kf * arg.sin());
        sum += inv * *t * (i * (2.0 / PI) * arg.cos());
    }
    let f_curv = *dbeta + *t * (i * f);
    Ok(exp_even(&-f_curv)? * sum * (-PI))
}

/// `(f + k, dβ - ikT)`: the same point described through another eigensection.
pub fn gauge_shift(f: f64, dbeta: &Multivector, t: &Multivector, k: i64) -> (f64, Multivector) {
    (f + k as f64, *dbeta - *t * Complex64::new(0.0, k as f64))
}

/// Rescales the degree-`2k` part by `(2πi)^{-k}` and drops odd degrees.
pub fn rescale_even(v: &Multivector) -> Multivector {
    let two_pi_i = Complex64::new(0.0, 2.0 * PI);
    v.map_grades(|k, c| if k % 2 == 0 { c * two_pi_i.powi(-(k as i32 / 2)) } else { Complex64::new(0.0, 0.0) })
}

/// Rescales the degree-`2k+1` part by `(2πi)^{-k}` and drops even degrees.
pub fn rescale_odd(v: &Multivector) -> Multivector {
    let two_pi_i = Complex64::new(0.0, 2.0 * PI);
    v.map_grades(|k, c| if k % 2 == 1 { c * two_pi_i.powi(-(k as i32 / 2)) } else { Complex64::new(0.0, 0.0) })
}
