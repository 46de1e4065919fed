//! The circle-bundle family: vertical Dirac operators with spectrum `a(b) + Z`
//! over the torus, their superconnection heat traces in the direct spectral
//! and Poisson-dual representations, and the eta integrand.
//!
//! Every quantity factors as `e^{-F} ∧ (c_0 + c_1 T)` with `F = dβ + ifT`,
//! because `T ∧ T = 0` in dimension at most 3. The scalar pairs `(c_0, c_1)`
//! depend only on the crossing eigenvalue `f` and the time `t`.

use std::f64::consts::PI;

use num_complex::Complex64;

use crate::error::{Error, Result};
use crate::grassmann::{exp_even, Multivector};
use crate::torus_base::{extract_hypersurface, FormField, Grid, Hypersurface, LevelFunction};

/// Coefficients of `1` and `T`.
pub type Series = [Complex64; 2];

const ZERO: Complex64 = Complex64::new(0.0, 0.0);
const I: Complex64 = Complex64::new(0.0, 1.0);

/// Dual terms are dropped once `e^{-π²n²/t}` falls below this.
pub const DUAL_CUTOFF: f64 = 1e-18;

/// The holonomy function `a: B → R/Z`.
#[derive(Debug, Clone, Copy, PartialEq)]
pub enum Holonomy {
    /// `a = x_1`, winding once around the first circle.
    Winding,
    /// `a = r sin(2π x_1)` with `0 < r ≤ 0.4`.
    Oscillating { r: f64 },
}

#[derive(Debug, Clone, Copy, PartialEq, Eq)]
pub enum Trig {
    Cos,
    Sin,
}

/// One term `i · coeff · trig(2π · wave · x_axis) dx_form` of the connection form β.
#[derive(Debug, Clone, Copy, PartialEq)]
pub struct BetaTerm {
    pub coeff: f64,
    pub trig: Trig,
    pub wave: i32,
    pub axis: usize,
    pub form: usize,
}

/// The constant torsion form `coeff · dx_i ∧ dx_j`.
#[derive(Debug, Clone, Copy, PartialEq)]
pub struct Torsion {
    pub coeff: f64,
    pub plane: (usize, usize),
}

impl Torsion {
    pub fn zero() -> Self {
        Torsion { coeff: 0.0, plane: (1, 2) }
    }
}

#[derive(Debug, Clone, PartialEq)]
pub struct FamilyConfig {
    pub grid: Grid,
    pub holonomy: Holonomy,
    pub beta: Vec<BetaTerm>,
    pub torsion: Torsion,
    /// Modes with `|k + a| ≤ k_modes` enter the direct sums.
    pub k_modes: f64,
    pub t_split: f64,
}

impl FamilyConfig {
    pub fn new(grid: Grid, holonomy: Holonomy) -> Self {
        FamilyConfig { grid, holonomy, beta: Vec::new(), torsion: Torsion::zero(), k_modes: 60.0, t_split: 1.0 }
    }
}

/// A validated circle family together with its crossing hypersurface.
#[derive(Debug, Clone)]
pub struct CircleFamily {
    cfg: FamilyConfig,
    torsion: Multivector,
    hypersurface: Hypersurface,
}

/// Representative of `a` in `(-1/2, 1/2]`.
pub fn representative_raw(a: f64) -> f64 {
    let f = a - a.round();
    if f <= -0.5 {
        f + 1.0
    } else {
        f
    }
}

/// Representative of `a` in `(-1/2, 1/2]`, snapped to 0 within `1e-12`.
pub fn representative(a: f64) -> f64 {
    let f = representative_raw(a);
    if f.abs() < 1e-12 {
        0.0
    } else {
        f
    }
}

struct FamilyLevel<'a>(&'a FamilyConfig);

impl LevelFunction for FamilyLevel<'_> {
    fn dim(&self) -> u8 {
        self.0.grid.m()
    }
    fn eval(&self, p: [f64; 3]) -> (f64, [f64; 3]) {
        (representative_raw(holonomy_value(self.0.holonomy, p)), [holonomy_slope(self.0.holonomy, p), 0.0, 0.0])
    }
}

fn holonomy_value(h: Holonomy, p: [f64; 3]) -> f64 {
    match h {
        Holonomy::Winding => p[0],
        Holonomy::Oscillating { r } => r * (2.0 * PI * p[0]).sin(),
    }
}

fn holonomy_slope(h: Holonomy, p: [f64; 3]) -> f64 {
    match h {
        Holonomy::Winding => 1.0,
        Holonomy::Oscillating { r } => 2.0 * PI * r * (2.0 * PI * p[0]).cos(),
    }
}

fn crossing_of(h: Holonomy, p: [f64; 3]) -> f64 {
    representative(holonomy_value(h, p))
}

impl CircleFamily {
    pub fn new(cfg: FamilyConfig) -> Result<Self> {
        let m = cfg.grid.m() as usize;
        if let Holonomy::Oscillating { r } = cfg.holonomy {
            if !(r > 0.0 && r <= 0.4) {
                return Err(Error::Config(format!("oscillating amplitude r = {r} not in (0, 0.4]")));
            }
        }
        if !(cfg.k_modes >= 1.0) {
            return Err(Error::Config(format!("k_modes = {} must be at least 1", cfg.k_modes)));
        }
        if !(cfg.t_split > 0.0) {
            return Err(Error::Config(format!("t_split = {} must be positive", cfg.t_split)));
        }
        for b in &cfg.beta {
            if b.axis < 1 || b.axis > m || b.form < 1 || b.form > m {
                return Err(Error::Config(format!("β term {b:?} refers to an axis outside 1..={m}")));
            }
            if !b.coeff.is_finite() {
                return Err(Error::Config(format!("β term {b:?} has a non-finite coefficient")));
            }
        }
        let tq = cfg.torsion;
        let torsion = if tq.coeff == 0.0 {
            Multivector::zero(m as u8)
        } else {
            let (i, j) = tq.plane;
            if i == j || i < 1 || j < 1 || i > m || j > m {
                return Err(Error::Config(format!("torsion plane ({i}, {j}) is not a coordinate 2-plane of T^{m}")));
            }
            let q = tq.coeff / (2.0 * PI);
            if (q - q.round()).abs() > 1e-9 {
                return Err(Error::Config(format!("torsion coefficient {} is not an integer multiple of 2π", tq.coeff)));
            }
            if cfg.holonomy == Holonomy::Winding {
                return Err(Error::Config(
                    "the winding holonomy admits no periodic connection form when T ≠ 0; use T = 0".into(),
                ));
            }
            Multivector::blade(m as u8, &[i, j], tq.coeff)
        };
        let hypersurface = extract_hypersurface(cfg.grid, &FamilyLevel(&cfg))?;
        Ok(CircleFamily { cfg, torsion, hypersurface })
    }

    pub fn config(&self) -> &FamilyConfig {
        &self.cfg
    }

    pub fn grid(&self) -> Grid {
        self.cfg.grid
    }

    pub fn dim(&self) -> u8 {
        self.cfg.grid.m()
    }

    pub fn hypersurface(&self) -> &Hypersurface {
        &self.hypersurface
    }

    pub fn level(&self) -> impl LevelFunction + '_ {
        FamilyLevel(&self.cfg)
    }

    pub fn torsion(&self) -> Multivector {
        self.torsion
    }

    /// The holonomy `a(b)` before reduction mod 1.
    pub fn holonomy(&self, p: [f64; 3]) -> f64 {
        holonomy_value(self.cfg.holonomy, p)
    }

    /// The eigenvalue of `D_b` in `(-1/2, 1/2]`.
    pub fn crossing_eigenvalue(&self, p: [f64; 3]) -> f64 {
        crossing_of(self.cfg.holonomy, p)
    }

    /// `df` on the chart of the crossing representative.
    pub fn df(&self, p: [f64; 3]) -> Multivector {
        Multivector::e(self.dim(), 1) * holonomy_slope(self.cfg.holonomy, p)
    }

    /// The connection form β (imaginary-valued).
    pub fn beta(&self, p: [f64; 3]) -> Multivector {
        let m = self.dim();
        let mut out = Multivector::zero(m);
        for b in &self.cfg.beta {
            let arg = 2.0 * PI * b.wave as f64 * p[b.axis - 1];
            let v = match b.trig {
                Trig::Cos => arg.cos(),
                Trig::Sin => arg.sin(),
            };
            out += Multivector::e(m, b.form) * (I * b.coeff * v);
        }
        out
    }

    /// `dβ` in closed form.
    pub fn dbeta(&self, p: [f64; 3]) -> Multivector {
        let m = self.dim();
        let mut out = Multivector::zero(m);
        for b in &self.cfg.beta {
            if b.axis == b.form {
                continue;
            }
            let k = 2.0 * PI * b.wave as f64;
            let arg = k * p[b.axis - 1];
            let dv = match b.trig {
                Trig::Cos => -k * arg.sin(),
                Trig::Sin => k * arg.cos(),
            };
            out += Multivector::blade(m, &[b.axis, b.form], I * b.coeff * dv);
        }
        out
    }

    /// `F = dβ + ifT`.
    pub fn curvature(&self, p: [f64; 3]) -> Multivector {
        self.dbeta(p) + self.torsion * (I * self.crossing_eigenvalue(p))
    }

    /// `e^{-F}`.
    pub fn exp_minus_curvature(&self, p: [f64; 3]) -> Multivector {
        exp_even(&-self.curvature(p)).expect("curvature is even")
    }

    /// `e^{-F} ∧ (s_0 + s_1 T)`.
    pub fn assemble(&self, p: [f64; 3], s: Series) -> Multivector {
        let m = self.dim();
        self.exp_minus_curvature(p) * (Multivector::scalar(m, s[0]) + self.torsion * s[1])
    }

    fn check_t(t: f64) -> Result<()> {
        if t > 0.0 && t.is_finite() {
            Ok(())
        } else {
            Err(Error::Contract(format!("time t = {t} must be positive")))
        }
    }

    /// `(tr^ev, tr^odd)` of `exp(-A_t²)` from the direct mode sum.
    pub fn heat_trace_direct(&self, p: [f64; 3], t: f64) -> Result<(Multivector, Multivector)> {
        Self::check_t(t)?;
        let f = self.crossing_eigenvalue(p);
        let (s, _) = direct_sums(f, t, self.cfg.k_modes);
        Ok(self.traces_from(p, t, s))
    }

    /// `(tr^ev, tr^odd)` of `exp(-A_t²)` from the Poisson-dual sum.
    pub fn heat_trace_dual(&self, p: [f64; 3], t: f64) -> Result<(Multivector, Multivector)> {
        Self::check_t(t)?;
        let f = self.crossing_eigenvalue(p);
        let (s, _) = dual_sums(f, t);
        Ok(self.traces_from(p, t, s))
    }

    /// The representation appropriate for `t`.
    pub fn heat_trace(&self, p: [f64; 3], t: f64) -> Result<(Multivector, Multivector)> {
        if t >= self.cfg.t_split {
            self.heat_trace_direct(p, t)
        } else {
            self.heat_trace_dual(p, t)
        }
    }

    fn traces_from(&self, p: [f64; 3], t: f64, s: Series) -> (Multivector, Multivector) {
        let even = self.assemble(p, s);
        let odd = self.df(p) * even * (-t.sqrt());
        (even, odd)
    }

    /// `tr^ev((dA_t/dt) exp(-A_t²))`, direct for `t ≥ t_split` and dual below.
    pub fn eta_integrand(&self, p: [f64; 3], t: f64) -> Result<Multivector> {
        Self::check_t(t)?;
        Ok(self.assemble(p, self.integrand_series(self.crossing_eigenvalue(p), t)))
    }

    pub fn eta_integrand_direct(&self, p: [f64; 3], t: f64) -> Result<Multivector> {
        Self::check_t(t)?;
        Ok(self.assemble(p, direct_sums(self.crossing_eigenvalue(p), t, self.cfg.k_modes).1))
    }

    pub fn eta_integrand_dual(&self, p: [f64; 3], t: f64) -> Result<Multivector> {
        Self::check_t(t)?;
        Ok(self.assemble(p, dual_sums(self.crossing_eigenvalue(p), t).1))
    }

    /// Scalar series of the eta integrand at eigenvalue `f`.
    pub fn integrand_series(&self, f: f64, t: f64) -> Series {
        if t >= self.cfg.t_split {
            direct_sums(f, t, self.cfg.k_modes).1
        } else {
            dual_sums(f, t).1
        }
    }

    /// Odd heat trace as a form field at time `t`.
    pub fn odd_trace_field(&self, t: f64) -> Result<FormField> {
        Self::check_t(t)?;
        Ok(FormField::from_fn(self.grid(), |p| self.heat_trace(p, t).map(|r| r.1).expect("t checked")))
    }
}

/// Direct sums over `λ = k + f`, `|λ| ≤ k_modes`:
/// `S = Σ e^{-tλ²} (1, iλ/2)` and `J = Σ e^{-tλ²}/(2√t) (λ, iλ²/2 - i/(4t))`.
pub fn direct_sums(f: f64, t: f64, k_modes: f64) -> (Series, Series) {
    let kmax = (k_modes - f).floor() as i64;
    let kmin = (-k_modes - f).ceil() as i64;
    let mut s = [ZERO; 2];
    let mut j = [ZERO; 2];
    let inv = 1.0 / (2.0 * t.sqrt());
    // outward from the crossing mode, so the smallest terms come last
    let mut add = |k: i64| -> bool {
        let lam = k as f64 + f;
        let e = (-t * lam * lam).exp();
        if e == 0.0 {
            return false;
        }
        s[0] += e;
        s[1] += I * (0.5 * lam * e);
        j[0] += lam * e * inv;
        j[1] += I * ((0.5 * lam * lam - 0.25 / t) * e * inv);
        true
    };
    if (kmin..=kmax).contains(&0) {
        add(0);
    }
    let mut hi = 1;
    while hi <= kmax && add(hi) {
        hi += 1;
    }
    let mut lo = -1;
    while lo >= kmin && add(lo) {
        lo -= 1;
    }
    (s, j)
}

/// Number of dual terms kept at time `t`.
pub fn dual_terms(t: f64) -> i64 {
    ((-DUAL_CUTOFF.ln() * t).sqrt() / PI).ceil() as i64
}

/// Poisson-dual sums equal to [`direct_sums`] with infinitely many modes.
pub fn dual_sums(f: f64, t: f64) -> (Series, Series) {
    let nmax = dual_terms(t);
    let pref_s = (PI / t).sqrt();
    let pref_j = -(PI / t).powf(1.5) / (2.0 * t.sqrt());
    let mut s = [ZERO; 2];
    let mut j = [ZERO; 2];
    for n in (-nmax..=nmax).rev() {
        let nf = n as f64;
        let g = (-PI * PI * nf * nf / t).exp();
        let phase = Complex64::from_polar(1.0, 2.0 * PI * (nf * f).rem_euclid(1.0));
        let w = phase * g;
        let tcoef = PI * nf / (2.0 * t);
        s[0] += w * pref_s;
        s[1] += w * (pref_s * tcoef);
        let wj = I * nf * w * pref_j;
        j[0] += wj;
        j[1] += wj * tcoef;
    }
    (s, j)
}

#[cfg(test)]
mod tests {
    use super::*;

    fn fam(m: u8, n: usize, h: Holonomy) -> CircleFamily {
        CircleFamily::new(FamilyConfig::new(Grid::new(m, n).unwrap(), h)).unwrap()
    }

    #[test]
    fn representatives() {
        let w = fam(1, 16, Holonomy::Winding);
        assert_eq!(w.crossing_eigenvalue([0.25, 0.0, 0.0]), 0.25);
        assert!((w.crossing_eigenvalue([0.75, 0.0, 0.0]) + 0.25).abs() < 1e-15);
        assert_eq!(w.crossing_eigenvalue([0.5, 0.0, 0.0]), 0.5);
        assert_eq!(w.crossing_eigenvalue([0.0, 0.0, 0.0]), 0.0);
        assert_eq!(representative(1e-13), 0.0);
        assert_eq!(representative(-0.5), 0.5);
    }

    #[test]
    fn symmetric_spectrum_has_no_asymmetry() {
        for t in [0.3, 1.0, 4.0] {
            let (s, j) = direct_sums(0.5, t, 60.0);
            assert!(s[0].re > 0.0);
            assert!(j[0].norm() < 1e-15);
            let (_, jd) = dual_sums(0.5, t);
            assert!(jd[0].norm() < 1e-15);
            let (_, j0) = direct_sums(0.0, t, 60.0);
            assert!(j0[0].norm() < 1e-15);
        }
    }

    #[test]
    fn theta_value_at_one() {
        let (s, _) = direct_sums(0.0, 1.0, 60.0);
        let (sd, _) = dual_sums(0.0, 1.0);
        // θ_3(e^{-1})
        assert!((s[0].re - 1.772_637_204_826_652).abs() < 1e-12);
        assert!((s[0] - sd[0]).norm() < 1e-12);
    }

    #[test]
    fn direct_and_dual_agree() {
        for &f in &[0.0, 0.1, -0.37, 0.5, 0.49] {
            for &t in &[0.25, 0.5, 1.0, 2.0, 5.0, 8.0] {
                let (s, j) = direct_sums(f, t, 60.0);
                let (sd, jd) = dual_sums(f, t);
                for k in 0..2 {
                    assert!((s[k] - sd[k]).norm() < 1e-10, "S f={f} t={t}");
                    assert!((j[k] - jd[k]).norm() < 1e-10, "J f={f} t={t}");
                }
            }
        }
    }

    #[test]
    fn small_time_integrand_vanishes() {
        let (_, j) = dual_sums(0.3, 1e-3);
        assert!(j[0].norm() < 1e-300 && j[1].norm() < 1e-300);
    }

    #[test]
    fn winding_rejects_torsion() {
        let mut cfg = FamilyConfig::new(Grid::new(2, 16).unwrap(), Holonomy::Winding);
        cfg.torsion = Torsion { coeff: 2.0 * PI, plane: (1, 2) };
        assert!(matches!(CircleFamily::new(cfg), Err(Error::Config(_))));
    }

    #[test]
    fn torsion_must_be_quantized() {
        let mut cfg = FamilyConfig::new(Grid::new(3, 16).unwrap(), Holonomy::Oscillating { r: 0.3 });
        cfg.torsion = Torsion { coeff: 6.0, plane: (2, 3) };
        assert!(matches!(CircleFamily::new(cfg.clone()), Err(Error::Config(_))));
        cfg.torsion = Torsion { coeff: -4.0 * PI, plane: (2, 3) };
        assert!(CircleFamily::new(cfg).is_ok());
    }

    #[test]
    fn amplitude_is_bounded() {
        let cfg = FamilyConfig::new(Grid::new(1, 16).unwrap(), Holonomy::Oscillating { r: 0.45 });
        assert!(CircleFamily::new(cfg).is_err());
    }

    #[test]
    fn dbeta_matches_spectral_derivative() {
        let mut cfg = FamilyConfig::new(Grid::new(3, 16).unwrap(), Holonomy::Oscillating { r: 0.3 });
        cfg.beta = vec![
            BetaTerm { coeff: 0.15, trig: Trig::Cos, wave: 1, axis: 2, form: 3 },
            BetaTerm { coeff: 0.1, trig: Trig::Sin, wave: 2, axis: 3, form: 1 },
        ];
        let f = CircleFamily::new(cfg).unwrap();
        let beta = FormField::from_fn(f.grid(), |p| f.beta(p));
        let db = crate::torus_base::exterior_derivative(&beta);
        for i in 0..f.grid().len() {
            let p = f.grid().point(i);
            assert!(db.get(i).max_abs_diff(&f.dbeta(p)) < 1e-12);
        }
    }

    #[test]
    fn wrong_time_is_contract_error() {
        let f = fam(1, 16, Holonomy::Winding);
        assert!(matches!(f.heat_trace_direct([0.1, 0.0, 0.0], 0.0), Err(Error::Contract(_))));
        assert!(matches!(f.eta_integrand([0.1, 0.0, 0.0], -1.0), Err(Error::Contract(_))));
    }

    #[test]
    fn crossing_hypersurfaces() {
        let w = fam(1, 16, Holonomy::Winding);
        assert_eq!(w.hypersurface().sheets().len(), 1);
        assert_eq!(w.hypersurface().sheets()[0].orientation_sign, 1);
        let o = fam(2, 16, Holonomy::Oscillating { r: 0.4 });
        let signs: Vec<i8> = o.hypersurface().sheets().iter().map(|s| s.orientation_sign).collect();
        assert_eq!(signs, vec![1, -1]);
    }
}
