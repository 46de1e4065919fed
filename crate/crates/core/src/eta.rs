//! Time integration of the eta integrand: partial transgression forms,
//! the eta-form `η̂` with a closed-form large-time tail, and its rescaled
//! version `η̃`.

use std::collections::HashMap;
use std::f64::consts::PI;

use num_complex::Complex64;
use rayon::prelude::*;

use crate::bernoulli::{closed_form_eta, rescale_even, SignConvention};
use crate::circle_family::{representative, CircleFamily, Series};
use crate::error::{Error, Result};
use crate::grassmann::Multivector;
use crate::quadrature::integrate_from;
use crate::torus_base::{exterior_derivative, FormField, Grid, Hypersurface};

/// Upper end of the numerical time integral; beyond it the tail is analytic.
pub const T_MAX: f64 = 50.0;

const ZERO: Complex64 = Complex64::new(0.0, 0.0);
const I: Complex64 = Complex64::new(0.0, 1.0);
const MAX_INTERVALS: usize = 400;

/// Pointwise eta-forms over the grid.
#[derive(Debug, Clone)]
pub struct EtaResult {
    pub eta_hat: FormField,
    pub eta_tilde: FormField,
    /// Certified error bound per lattice point, covering quadrature and tail.
    pub tail_bound: Vec<f64>,
    pub t_max: f64,
}

impl EtaResult {
    pub fn grid(&self) -> Grid {
        self.eta_hat.grid()
    }

    /// CSV of both forms: the `η̂` columns, then the `η̃` columns renamed with a
    /// `tilde_` prefix, then `tail_bound`.
    pub fn to_csv(&self) -> String {
        let hat = self.eta_hat.to_csv_with(&["tail_bound"], |i| vec![self.tail_bound[i]]);
        let tilde = self.eta_tilde.to_csv();
        let m = self.grid().m() as usize;
        let mut out = String::new();
        for (lh, lt) in hat.lines().zip(tilde.lines()) {
            let mut cells: Vec<String> = lh.split(',').map(str::to_string).collect();
            let tail = cells.pop().unwrap_or_default();
            let extra: Vec<&str> = lt.split(',').skip(m).collect();
            let extra: Vec<String> = if lh.starts_with('x') {
                extra.iter().map(|s| format!("tilde_{s}")).collect()
            } else {
                extra.iter().map(|s| s.to_string()).collect()
            };
            cells.extend(extra);
            cells.push(tail);
            out.push_str(&cells.join(","));
            out.push('\n');
        }
        out
    }
}

/// `(1/√π) ∫_{t0}^{t1}` of the scalar integrand series at eigenvalue `f`, in
/// the variable `u = √t`, with its error estimate.
pub fn alpha_series(fam: &CircleFamily, f: f64, t0: f64, t1: f64, abs_tol: f64) -> (Series, f64) {
    let (u0, u1) = (t0.sqrt(), t1.sqrt());
    let us = fam.config().t_split.sqrt();
    let mut breaks = vec![u0];
    if us > u0 && us < u1 {
        breaks.push(us);
    }
    breaks.push(u1);
    let g = |u: f64| -> [Complex64; 2] {
        let j = fam.integrand_series(f, u * u);
        let w = 2.0 * u / PI.sqrt();
        [j[0] * w, j[1] * w]
    };
    let r = integrate_from(g, &breaks, abs_tol, MAX_INTERVALS);
    (r.value, r.error)
}

/// `α(t0, t1) = (1/√π) ∫_{t0}^{t1} tr^ev((dA_t/dt) e^{-A_t²}) dt` at a base point.
pub fn alpha(fam: &CircleFamily, p: [f64; 3], t0: f64, t1: f64) -> Result<Multivector> {
    alpha_with_error(fam, p, t0, t1, 1e-13).map(|r| r.0)
}

pub fn alpha_with_error(fam: &CircleFamily, p: [f64; 3], t0: f64, t1: f64, abs_tol: f64) -> Result<(Multivector, f64)> {
    if !(t0 >= 0.0) || t1 < t0 || !t1.is_finite() {
        return Err(Error::Contract(format!("alpha needs 0 ≤ t0 ≤ t1 < ∞, got [{t0}, {t1}]")));
    }
    let m = fam.dim();
    if t1 == t0 {
        return Ok((Multivector::zero(m), 0.0));
    }
    let (s, err) = alpha_series(fam, fam.crossing_eigenvalue(p), t0, t1, abs_tol);
    Ok((fam.assemble(p, s), err * assembly_bound(fam, p)))
}

/// Bound on the componentwise growth from the series coefficients to the form.
fn assembly_bound(fam: &CircleFamily, p: [f64; 3]) -> f64 {
    let e = fam.exp_minus_curvature(p);
    let sum_abs: f64 = (0..e.len()).map(|k| e.get(k).norm()).sum();
    sum_abs * (1.0 + fam.torsion().max_abs())
}

/// `∫_{T_m}^∞` of the direct integrand series divided by `√π`, in closed form:
/// per mode `(sgn λ √π erfc(|λ|√T_m), i(√π |λ| erfc(|λ|√T_m) - e^{-T_m λ²}/(2√T_m))) / (2√π)`.
pub fn tail_series(f: f64, t_max: f64, k_modes: f64) -> Series {
    let kmax = (k_modes - f).floor() as i64;
    let kmin = (-k_modes - f).ceil() as i64;
    let sq = t_max.sqrt();
    let sp = PI.sqrt();
    let mut out = [ZERO; 2];
    for k in (kmin..=kmax).rev() {
        let lam = k as f64 + f;
        let x = t_max * lam * lam;
        if x > 745.0 {
            continue;
        }
        let a = lam.abs();
        let erfc = libm::erfc(a * sq);
        let sign = if lam > 0.0 { 1.0 } else if lam < 0.0 { -1.0 } else { 0.0 };
        out[0] += sign * sp * erfc / (2.0 * sp);
        out[1] += I * (sp * a * erfc - (-x).exp() / (2.0 * sq)) / (2.0 * sp);
    }
    out
}

/// Scalar series of `η̂` at eigenvalue `f`: `(c_0, c_1)` with `η̂ = e^{-F}(c_0 + c_1 T)`,
/// plus an error bound on the coefficients.
pub fn eta_hat_series(fam: &CircleFamily, f: f64, tol: f64) -> (Series, f64) {
    let (a, err) = alpha_series(fam, f, 0.0, T_MAX, tol / 10.0);
    let tail = tail_series(f, T_MAX, fam.config().k_modes);
    // truncation of the direct sums at k_modes and of the dual sums
    let k = fam.config().k_modes - 0.5;
    let trunc = (-k * k * fam.config().t_split).exp() + 1e-18;
    ([a[0] + tail[0], a[1] + tail[1]], err + trunc)
}

/// `η̂ = (1/√π) ∫_0^∞ tr^ev((dA_t/dt) e^{-A_t²}) dt` with a certified error bound.
pub fn eta_hat(fam: &CircleFamily, p: [f64; 3], tol: f64) -> Result<(Multivector, f64)> {
    if !(tol >= 1e-10) {
        return Err(Error::Contract(format!("eta tolerance {tol} below 1e-10")));
    }
    let (s, err) = eta_hat_series(fam, fam.crossing_eigenvalue(p), tol);
    let bound = err * assembly_bound(fam, p);
    if bound > tol {
        return Err(Error::ToleranceNotMet { achieved: bound, requested: tol });
    }
    Ok((fam.assemble(p, s), bound))
}

/// `η̃ = Σ_k (2πi)^{-k} η̂_{[2k]}`.
pub fn eta_tilde(eta_hat: &FormField) -> FormField {
    eta_hat.map(rescale_even)
}

/// Evaluates `g` once per distinct crossing eigenvalue of the lattice points
/// and returns its value at every point.
fn per_eigenvalue<T, G>(fam: &CircleFamily, g: G) -> Vec<T>
where
    T: Clone + Send,
    G: Fn(f64) -> T + Sync,
{
    let grid = fam.grid();
    let fs: Vec<f64> = (0..grid.len()).map(|i| fam.crossing_eigenvalue(grid.point(i))).collect();
    let mut slot: HashMap<u64, usize> = HashMap::new();
    let mut uniq = Vec::new();
    let idx: Vec<usize> = fs
        .iter()
        .map(|f| {
            *slot.entry(f.to_bits()).or_insert_with(|| {
                uniq.push(*f);
                uniq.len() - 1
            })
        })
        .collect();
    let vals: Vec<T> = uniq.par_iter().map(|&f| g(f)).collect();
    idx.into_iter().map(|k| vals[k].clone()).collect()
}

/// `η̂`, `η̃` and error bounds at every lattice point.
pub fn compute_eta(fam: &CircleFamily, tol: f64) -> Result<EtaResult> {
    if !(tol >= 1e-10) {
        return Err(Error::Contract(format!("eta tolerance {tol} below 1e-10")));
    }
    let grid = fam.grid();
    let series = per_eigenvalue(fam, |f| eta_hat_series(fam, f, tol));
    let vals: Vec<Result<(Multivector, f64)>> = (0..grid.len())
        .into_par_iter()
        .map(|i| {
            let p = grid.point(i);
            let (s, err) = series[i];
            let bound = err * assembly_bound(fam, p);
            if bound > tol {
                return Err(Error::ToleranceNotMet { achieved: bound, requested: tol });
            }
            Ok((fam.assemble(p, s), bound))
        })
        .collect();
    let mut hat = Vec::with_capacity(grid.len());
    let mut bounds = Vec::with_capacity(grid.len());
    for v in vals {
        let (h, b) = v?;
        hat.push(h);
        bounds.push(b);
    }
    let eta_hat = FormField::new(grid, hat)?;
    let eta_tilde = eta_tilde(&eta_hat);
    Ok(EtaResult { eta_hat, eta_tilde, tail_bound: bounds, t_max: T_MAX })
}

/// The closed form at a base point of the family, with `dβ` moved to the gauge
/// of `a = f mod 1 ∈ [0, 1)`.
pub fn closed_form_at(fam: &CircleFamily, p: [f64; 3], sign: SignConvention) -> Result<(Multivector, Multivector)> {
    let f = fam.crossing_eigenvalue(p);
    let a = if f < 0.0 { f + 1.0 } else { f };
    let a = if a >= 1.0 { 0.0 } else { a };
    let t = fam.torsion();
    let dbeta_a = fam.dbeta(p) - t * (I * (a - f));
    closed_form_eta(a, &dbeta_a, &t, sign)
}

/// Picks the sign convention whose closed form agrees with the quadrature
/// oracle at `a = 1/4`, `β = 0`, `T = 0`.
pub fn resolve_sign_convention(tol: f64) -> Result<SignConvention> {
    use crate::circle_family::{FamilyConfig, Holonomy};
    let fam = CircleFamily::new(FamilyConfig::new(Grid::new(1, 16)?, Holonomy::Winding))?;
    let p = [0.25, 0.0, 0.0];
    let (q, _) = eta_hat(&fam, p, tol)?;
    let z = Multivector::zero(1);
    let mut best = None;
    for s in [SignConvention::Plus, SignConvention::Minus] {
        let (c, _) = closed_form_eta(0.25, &z, &z, s)?;
        let d = (c - q).max_abs();
        if d < 100.0 * tol {
            best = Some(s);
        }
    }
    best.ok_or_else(|| Error::ToleranceNotMet { achieved: f64::NAN, requested: tol })
}

/// Whether a lattice point lies within `cells` lattice cells of a sheet along
/// the first axis.
pub fn near_hypersurface(hyp: &Hypersurface, idx: usize, cells: usize) -> bool {
    let g = hyp.grid();
    let mi = g.multi_index(idx);
    let n = g.n() as f64;
    hyp.sheets().iter().any(|s| {
        s.samples.iter().any(|smp| {
            smp.params == line_params(g, mi) && {
                let d = (smp.point[0] * n - mi[0] as f64).rem_euclid(n);
                d.min(n - d) <= cells as f64
            }
        })
    })
}

fn lattice_index(g: Grid, p: [f64; 3]) -> [usize; 3] {
    let n = g.n() as f64;
    let mut mi = [0usize; 3];
    for a in 0..g.m() as usize {
        mi[a] = (p[a] * n).round() as usize % g.n();
    }
    mi
}

fn line_params(g: Grid, mi: [usize; 3]) -> [usize; 2] {
    match g.m() {
        1 => [0, 0],
        2 => [mi[1], 0],
        _ => [mi[1], mi[2]],
    }
}

/// Maximal componentwise residual of `dα(s, t) = (tr^odd(s) - tr^odd(t))/√π`
/// over lattice points farther than `band` cells from the crossing locus.
pub fn transgression_residual(fam: &CircleFamily, s: f64, t: f64, band: usize) -> Result<f64> {
    if !(s > 0.0) || t < s || !t.is_finite() {
        return Err(Error::Contract(format!("transgression needs 0 < s ≤ t < ∞, got ({s}, {t})")));
    }
    let grid = fam.grid();
    let series = per_eigenvalue(fam, |f| alpha_series(fam, f, s, t, 1e-13).0);
    let alpha_field = FormField::from_fn(grid, |p| fam.assemble(p, series[grid.flat_index(lattice_index(grid, p))]));
    let d_alpha = exterior_derivative(&alpha_field);
    let sp = PI.sqrt();
    let hyp = fam.hypersurface();
    let res: Vec<Result<f64>> = (0..grid.len())
        .into_par_iter()
        .map(|i| {
            if near_hypersurface(hyp, i, band) {
                return Ok(0.0);
            }
            let p = grid.point(i);
            let (_, os) = fam.heat_trace(p, s)?;
            let (_, ot) = fam.heat_trace(p, t)?;
            Ok(d_alpha.get(i).max_abs_diff(&((os - ot) * (1.0 / sp))))
        })
        .collect();
    res.into_iter().try_fold(0.0f64, |acc, r| r.map(|v| acc.max(v)))
}

/// `f mod 1` in `[0, 1)`.
pub fn fractional(f: f64) -> f64 {
    let a = f.rem_euclid(1.0);
    if a >= 1.0 || representative(a) == 0.0 {
        0.0
    } else {
        a
    }
}

#[cfg(test)]
mod tests {
    use super::*;
    use crate::circle_family::{FamilyConfig, Holonomy, Torsion};

    fn winding() -> CircleFamily {
        CircleFamily::new(FamilyConfig::new(Grid::new(1, 16).unwrap(), Holonomy::Winding)).unwrap()
    }

    #[test]
    fn empty_interval() {
        let f = winding();
        assert!(alpha(&f, [0.3, 0.0, 0.0], 2.0, 2.0).unwrap().is_zero());
        assert!(matches!(alpha(&f, [0.3, 0.0, 0.0], 2.0, 1.0), Err(Error::Contract(_))));
    }

    #[test]
    fn quarter_holonomy() {
        let f = winding();
        let (v, b) = eta_hat(&f, [0.25, 0.0, 0.0], 1e-10).unwrap();
        assert!((v.scalar_part().re - 0.25).abs() < 1e-8, "{v}");
        assert!(b <= 1e-10);
        let (v0, _) = eta_hat(&f, [0.0, 0.0, 0.0], 1e-10).unwrap();
        assert!(v0.scalar_part().norm() < 1e-8);
    }

    #[test]
    fn tail_matches_quadrature() {
        let f = winding();
        for &x in &[0.0, 0.01, 0.2, 0.49] {
            let fv = representative(x);
            let (a1, _) = alpha_series(&f, fv, 0.0, T_MAX, 1e-13);
            let (a2, _) = alpha_series(&f, fv, 0.0, 2.0 * T_MAX, 1e-13);
            let full = tail_series(fv, T_MAX, 60.0);
            let far = tail_series(fv, 2.0 * T_MAX, 60.0);
            for k in 0..2 {
                let piece = full[k] - far[k];
                assert!((a2[k] - a1[k] - piece).norm() < 1e-10, "x = {x}, k = {k}");
            }
        }
    }

    #[test]
    fn sign_resolution() {
        assert_eq!(resolve_sign_convention(1e-10).unwrap(), SignConvention::Minus);
    }

    #[test]
    fn torsion_coefficient_on_crossing() {
        let mut cfg = FamilyConfig::new(Grid::new(3, 16).unwrap(), Holonomy::Oscillating { r: 0.3 });
        cfg.torsion = Torsion { coeff: 2.0 * PI, plane: (2, 3) };
        let fam = CircleFamily::new(cfg).unwrap();
        let (v, _) = eta_hat(&fam, [0.0, 0.3, 0.7], 1e-10).unwrap();
        let tilde = rescale_even(&v);
        assert!((tilde.coeff(&[2, 3]) - Complex64::new(-1.0 / 12.0, 0.0)).norm() < 1e-8, "{tilde}");
    }

    #[test]
    fn tolerance_floor() {
        let f = winding();
        assert!(matches!(eta_hat(&f, [0.2, 0.0, 0.0], 1e-14), Err(Error::Contract(_))));
    }
}
