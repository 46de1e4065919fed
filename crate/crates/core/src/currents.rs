//! De Rham currents on the torus: L¹ forms, delta forms on the crossing
//! hypersurface, their pairings with smooth test forms, the weak
//! differential, and the checks of the large-time limit and the index identity.

use std::f64::consts::PI;

use num_complex::Complex64;
use rayon::prelude::*;

use crate::bernoulli::rescale_odd;
use crate::circle_family::CircleFamily;
use crate::error::{Error, Result};
use crate::grassmann::{exp_even, grade_select, Grade, Multivector};
use crate::torus_base::{exterior_derivative, integrate_base, interpolate_at_sample, FormField, Grid, Hypersurface, SheetForm};

/// Time at which the small-time limit of the odd trace is evaluated.
pub const FIBER_CHERN_TIME: f64 = 0.01;

/// A functional on smooth test forms.
#[derive(Debug, Clone)]
pub enum Current {
    /// `ω ↦ ∫_B field ∧ ω`; `singular` records where the coefficients jump.
    L1Form { field: FormField, singular: Option<Hypersurface> },
    /// `ω ↦ ∫_{B₀} form ∧ i*ω`.
    Delta { hyp: Hypersurface, form: SheetForm },
    Sum(Vec<Current>),
}

impl Current {
    pub fn l1(field: FormField) -> Self {
        Current::L1Form { field, singular: None }
    }

    /// The delta current of `hyp` carrying the constant form 1.
    pub fn delta_one(hyp: &Hypersurface) -> Self {
        let k = hyp.grid().m() - 1;
        Current::Delta { hyp: hyp.clone(), form: hyp.sample_form(|_| Multivector::one(k)) }
    }

    pub fn scaled(self, c: Complex64) -> Self {
        match self {
            Current::L1Form { field, singular } => Current::L1Form { field: field.scale(c), singular },
            Current::Delta { hyp, form } => Current::Delta {
                hyp,
                form: SheetForm { values: form.values.into_iter().map(|s| s.into_iter().map(|v| v * c).collect()).collect() },
            },
            Current::Sum(cs) => Current::Sum(cs.into_iter().map(|x| x.scaled(c)).collect()),
        }
    }

    fn grid(&self) -> Option<Grid> {
        match self {
            Current::L1Form { field, .. } => Some(field.grid()),
            Current::Delta { hyp, .. } => Some(hyp.grid()),
            Current::Sum(cs) => cs.iter().find_map(|c| c.grid()),
        }
    }
}

/// Evaluates a current on a test form.
pub fn pair(c: &Current, omega: &FormField) -> Result<Complex64> {
    if let Some(g) = c.grid() {
        if g != omega.grid() {
            return Err(Error::Config(format!("current on {g:?} paired with a form on {:?}", omega.grid())));
        }
    }
    match c {
        Current::L1Form { field, singular: Some(hyp) } if !hyp.is_empty() => {
            if hyp.grid() != field.grid() {
                return Err(Error::Config("singular set and field live on different grids".into()));
            }
            Ok(integrate_with_jumps(&field.wedge(omega)?, hyp))
        }
        Current::L1Form { field, .. } => Ok(integrate_base(&field.wedge(omega)?)),
        Current::Delta { hyp, form } => {
            if form.values.len() != hyp.sheets().len()
                || form.values.iter().zip(hyp.sheets()).any(|(v, s)| v.len() != s.samples.len())
            {
                return Err(Error::Config("delta form does not match its hypersurface".into()));
            }
            Ok(hyp.integrate_sheet_values(|si, k, smp| form.values[si][k] * hyp.pullback(smp, &interpolate_at_sample(omega, smp))))
        }
        Current::Sum(cs) => cs.iter().map(|x| pair(x, omega)).sum(),
    }
}

/// Gregory coefficients `c_k` of `∇^k f_L` and `Δ^k f_0`, `k = 1..5`.
const GREGORY: [f64; 5] = [1.0 / 12.0, 1.0 / 24.0, 19.0 / 720.0, 3.0 / 160.0, 863.0 / 60480.0];
const GAUSS3: [(f64, f64); 3] = [(-0.774_596_669_241_483_4, 5.0 / 9.0), (0.0, 8.0 / 9.0), (0.774_596_669_241_483_4, 5.0 / 9.0)];
/// Nodes used by the one-sided extrapolation into a partial cell.
const STENCIL: usize = 6;

/// `∫_{-d}^{0}` of the quintic through `v` at offsets `0, 1, …, 5`, in units of the spacing.
fn extrapolated_cell(v: &[Complex64; STENCIL], d: f64) -> Complex64 {
    let mut acc = Complex64::new(0.0, 0.0);
    for (xg, wg) in GAUSS3 {
        let u = -0.5 * d * (1.0 - xg);
        for (j, vj) in v.iter().enumerate() {
            let mut l = 1.0;
            for i in 0..STENCIL {
                if i != j {
                    l *= (u - i as f64) / (j as f64 - i as f64);
                }
            }
            acc += vj * (l * wg * 0.5 * d);
        }
    }
    acc
}

/// Forward differences `Δ^k v_0`, `k = 1..5`.
fn forward_differences(v: &[Complex64]) -> [Complex64; 5] {
    let mut row: Vec<Complex64> = v[..6].to_vec();
    let mut out = [Complex64::new(0.0, 0.0); 5];
    for o in out.iter_mut() {
        row = row.windows(2).map(|w| w[1] - w[0]).collect();
        *o = row[0];
    }
    out
}

/// `∫_0^1 g` for periodic samples `g(i/n)` that are smooth between the given
/// jump points: Gregory's end-corrected trapezoid rule on each piece, with the
/// partial cells at the jumps integrated from one-sided extrapolation.
/// Samples within `1e-9` of a jump are ignored.
pub fn piecewise_line_integral(values: &[Complex64], jumps: &[f64]) -> Complex64 {
    let n = values.len();
    let h = 1.0 / n as f64;
    if jumps.is_empty() {
        return values.iter().sum::<Complex64>() * h;
    }
    let mut js: Vec<f64> = jumps.iter().map(|x| x.rem_euclid(1.0)).collect();
    js.sort_by(|a, b| a.total_cmp(b));
    let mut total = Complex64::new(0.0, 0.0);
    for (k, &a) in js.iter().enumerate() {
        let b = if k + 1 < js.len() { js[k + 1] } else { js[0] + 1.0 };
        let first = ((a + 1e-9) * n as f64).ceil() as i64;
        let last = ((b - 1e-9) * n as f64).floor() as i64;
        if last < first {
            continue;
        }
        let v: Vec<Complex64> = (first..=last).map(|i| values[i.rem_euclid(n as i64) as usize]).collect();
        let len = v.len();
        let dl = first as f64 * h - a;
        let dr = b - last as f64 * h;
        let trap = (v.iter().sum::<Complex64>() - (v[0] + v[len - 1]) * 0.5) * h;
        if len < 2 * STENCIL {
            // too short for the corrected rule: trapezoid plus constant end cells
            total += trap + v[0] * dl + v[len - 1] * dr;
            continue;
        }
        let rev: Vec<Complex64> = v.iter().rev().copied().collect();
        let fwd = forward_differences(&v);
        let bwd = forward_differences(&rev);
        let mut piece = trap;
        for (j, c) in GREGORY.iter().enumerate() {
            // ∇^k f_L = (-1)^k Δ^k of the reversed samples
            let nabla = if j % 2 == 0 { -bwd[j] } else { bwd[j] };
            let term = if j % 2 == 0 { nabla - fwd[j] } else { nabla + fwd[j] };
            piece -= term * (c * h);
        }
        let left: [Complex64; STENCIL] = std::array::from_fn(|i| v[i]);
        let right: [Complex64; STENCIL] = std::array::from_fn(|i| rev[i]);
        piece += extrapolated_cell(&left, dl / h) * h;
        piece += extrapolated_cell(&right, dr / h) * h;
        total += piece;
    }
    total
}

/// `∫_B ω` for a top-degree field that jumps across `hyp`, integrating each
/// lattice line in the first direction piecewise.
pub fn integrate_with_jumps(omega: &FormField, hyp: &Hypersurface) -> Complex64 {
    let grid = omega.grid();
    let n = grid.n();
    let m = grid.m() as usize;
    let top = (1usize << m) - 1;
    let nlines = n.pow(m as u32 - 1);
    let mut jumps: Vec<Vec<f64>> = vec![Vec::new(); nlines];
    for s in hyp.sheets() {
        for smp in &s.samples {
            jumps[smp.params[0] + n * smp.params[1]].push(smp.point[0]);
        }
    }
    let lines: Vec<Complex64> = (0..nlines)
        .into_par_iter()
        .map(|l| {
            let base = grid.flat_index([0, l % n, l / n]);
            let vals: Vec<Complex64> = (0..n).map(|i| omega.get(base + i).get(top)).collect();
            piecewise_line_integral(&vals, &jumps[l])
        })
        .collect();
    lines.iter().sum::<Complex64>() / nlines as f64
}

/// The weak differential `ω ↦ -c(dω)` of an L¹ current.
pub struct DifferentialCurrent<'a> {
    inner: &'a Current,
}

impl DifferentialCurrent<'_> {
    pub fn eval(&self, omega: &FormField) -> Result<Complex64> {
        Ok(-pair(self.inner, &exterior_derivative(omega))?)
    }
}

pub fn differential_current(c: &Current) -> Result<DifferentialCurrent<'_>> {
    fn all_l1(c: &Current) -> bool {
        match c {
            Current::L1Form { .. } => true,
            Current::Delta { .. } => false,
            Current::Sum(cs) => cs.iter().all(all_l1),
        }
    }
    if !all_l1(c) {
        return Err(Error::Unsupported("the differential of a delta current is not implemented".into()));
    }
    Ok(DifferentialCurrent { inner: c })
}

/// Named smooth test forms.
#[derive(Debug, Clone)]
pub struct TestFormBasket {
    pub entries: Vec<(String, FormField)>,
}

fn cos2(k: f64, x: f64) -> f64 {
    (2.0 * PI * k * x).cos()
}

fn sin2(k: f64, x: f64) -> f64 {
    (2.0 * PI * k * x).sin()
}

/// Smooth bump supported in `(c - w, c + w)`.
pub fn bump(x: f64, c: f64, w: f64) -> f64 {
    let d = (x - c) / w;
    if d.abs() >= 1.0 {
        0.0
    } else {
        (1.0 - 1.0 / (1.0 - d * d)).exp()
    }
}

type FormFn = fn([f64; 3]) -> Multivector;

impl TestFormBasket {
    pub fn from_fns(grid: Grid, fns: &[(&str, FormFn)]) -> Self {
        TestFormBasket { entries: fns.iter().map(|(n, f)| (n.to_string(), FormField::from_fn(grid, *f))).collect() }
    }

    /// Trigonometric monomials times coordinate forms in the degrees that pair
    /// with odd-degree currents on `T^m`.
    pub fn default_for(grid: Grid) -> Self {
        let fns: Vec<(&str, FormFn)> = match grid.m() {
            1 => vec![
                ("1", |_| Multivector::one(1)),
                ("cos(2pi x)", |p| Multivector::scalar(1, cos2(1.0, p[0]))),
                ("sin(2pi x)", |p| Multivector::scalar(1, sin2(1.0, p[0]))),
                ("cos(4pi x)", |p| Multivector::scalar(1, cos2(2.0, p[0]))),
                ("cos(2pi x)+sin(4pi x)", |p| Multivector::scalar(1, cos2(1.0, p[0]) + sin2(2.0, p[0]))),
            ],
            2 => vec![
                ("cos(2pi x) dy", |p| Multivector::e(2, 2) * cos2(1.0, p[0])),
                ("(cos(2pi x)+cos(6pi x)) dy", |p| Multivector::e(2, 2) * (cos2(1.0, p[0]) + cos2(3.0, p[0]))),
                ("(1+cos(2pi x)) dy", |p| Multivector::e(2, 2) * (1.0 + cos2(1.0, p[0]))),
                ("cos(2pi x)(1+sin(2pi y)/2) dy + sin(2pi y) dx", |p| {
                    Multivector::e(2, 2) * (cos2(1.0, p[0]) * (1.0 + 0.5 * sin2(1.0, p[1]))) + Multivector::e(2, 1) * sin2(1.0, p[1])
                }),
                ("cos(2pi x)cos(2pi y)^2 dy", |p| Multivector::e(2, 2) * (cos2(1.0, p[0]) * cos2(1.0, p[1]).powi(2))),
            ],
            _ => vec![
                ("1", |_| Multivector::one(3)),
                ("cos(2pi x)", |p| Multivector::scalar(3, cos2(1.0, p[0]))),
                ("sin(2pi x)", |p| Multivector::scalar(3, sin2(1.0, p[0]))),
                ("sin(2pi x)cos(2pi y)", |p| Multivector::scalar(3, sin2(1.0, p[0]) * cos2(1.0, p[1]))),
                ("dy^dz", |_| Multivector::blade(3, &[2, 3], 1.0)),
                ("cos(2pi x) dy^dz", |p| Multivector::blade(3, &[2, 3], cos2(1.0, p[0]))),
                ("sin(2pi y) dx^dz + cos(2pi z) dx^dy", |p| {
                    Multivector::blade(3, &[1, 3], sin2(1.0, p[1])) + Multivector::blade(3, &[1, 2], cos2(1.0, p[2]))
                }),
                ("cos(2pi x)cos(2pi y) dy^dz + sin(2pi z) dz^dx", |p| {
                    Multivector::blade(3, &[2, 3], cos2(1.0, p[0]) * cos2(1.0, p[1])) + Multivector::blade(3, &[3, 1], sin2(1.0, p[2]))
                }),
            ],
        };
        Self::from_fns(grid, &fns)
    }

    /// A test form supported in `0.1 < x_1 < 0.4`, away from `x_1 ∈ {0, 1/2}`.
    pub fn off_crossing(grid: Grid) -> (String, FormField) {
        let m = grid.m();
        let top_minus_one: Vec<usize> = (2..=m as usize).collect();
        let f = FormField::from_fn(grid, move |p| Multivector::blade(m, &top_minus_one, bump(p[0], 0.25, 0.15)));
        ("bump(x) dx_2..dx_m".to_string(), f)
    }
}

/// `exp(-scale · i*dβ)` on the sheets of `hyp`.
fn kernel_exponential(fam: &CircleFamily, hyp: &Hypersurface, scale: Complex64) -> Result<SheetForm> {
    let vals: Result<Vec<Vec<Multivector>>> = hyp
        .sheets()
        .iter()
        .map(|s| s.samples.iter().map(|smp| exp_even(&(-hyp.pullback(smp, &fam.dbeta(smp.point)) * scale))).collect())
        .collect();
    Ok(SheetForm { values: vals? })
}

/// `ch(ker) = exp(-i*dβ / 2πi)` on the crossing hypersurface.
pub fn chern_kernel_form(fam: &CircleFamily, hyp: &Hypersurface) -> Result<SheetForm> {
    kernel_exponential(fam, hyp, Complex64::new(0.0, 2.0 * PI).inv())
}

/// `tr exp(-(∇^ker)²) = exp(-i*dβ)` on the crossing hypersurface.
pub fn kernel_heat_form(fam: &CircleFamily, hyp: &Hypersurface) -> Result<SheetForm> {
    kernel_exponential(fam, hyp, Complex64::new(1.0, 0.0))
}

/// `(1/√π) R lim_{t→0} tr^odd(e^{-A_t²})`, with `R` scaling degree `2k+1`
/// by `(2πi)^{-k}`, evaluated from the dual series at a small time.
pub fn fiber_chern(fam: &CircleFamily) -> Result<FormField> {
    let sp = PI.sqrt();
    FormField::try_from_fn(fam.grid(), |p| {
        let (_, odd) = fam.heat_trace_dual(p, FIBER_CHERN_TIME)?;
        Ok(rescale_odd(&odd) * (1.0 / sp))
    })
}

/// Least-squares slope of `y` against `x`.
pub fn fit_slope(x: &[f64], y: &[f64]) -> f64 {
    let n = x.len() as f64;
    let mx = x.iter().sum::<f64>() / n;
    let my = y.iter().sum::<f64>() / n;
    let sxy: f64 = x.iter().zip(y).map(|(a, b)| (a - mx) * (b - my)).sum();
    let sxx: f64 = x.iter().map(|a| (a - mx) * (a - mx)).sum();
    sxy / sxx
}

/// `n` log-spaced times from `t0` to `t1`.
pub fn log_spaced(t0: f64, t1: f64, n: usize) -> Vec<f64> {
    let (l0, l1) = (t0.ln(), t1.ln());
    (0..n).map(|i| (l0 + (l1 - l0) * i as f64 / (n - 1) as f64).exp()).collect()
}

#[derive(Debug, Clone, PartialEq)]
pub struct LimitCheck {
    pub times: Vec<f64>,
    pub pairings: Vec<Complex64>,
    pub target: Complex64,
    pub errors: Vec<f64>,
    /// Slope of `log e(t)` against `log t`.
    pub loglog_slope: f64,
    /// Slope of `log e(t)` against `t`.
    pub loglinear_slope: f64,
    /// Slope of `log |pairing(t)|` against `t`.
    pub pairing_loglinear_slope: f64,
}

fn fit_positive(times: &[f64], vals: &[f64], log_x: bool) -> f64 {
    let (xs, ys): (Vec<f64>, Vec<f64>) = times
        .iter()
        .zip(vals)
        .filter(|(_, v)| **v > 0.0)
        .map(|(t, v)| (if log_x { t.ln() } else { *t }, v.ln()))
        .unzip();
    if xs.len() >= 2 {
        fit_slope(&xs, &ys)
    } else {
        f64::NAN
    }
}

/// Fits the slopes, skipping points whose value underflowed to zero.
pub fn limit_fit(times: Vec<f64>, pairings: Vec<Complex64>, target: Complex64) -> LimitCheck {
    let errors: Vec<f64> = pairings.iter().map(|p| (p - target).norm()).collect();
    let norms: Vec<f64> = pairings.iter().map(|p| p.norm()).collect();
    LimitCheck {
        loglog_slope: fit_positive(&times, &errors, true),
        loglinear_slope: fit_positive(&times, &errors, false),
        pairing_loglinear_slope: fit_positive(&times, &norms, false),
        times,
        pairings,
        target,
        errors,
    }
}

pub(crate) fn check_t_list(t_list: &[f64]) -> Result<()> {
    if t_list.len() < 2 || t_list.windows(2).any(|w| w[1] <= w[0]) || !(t_list[0] > 0.0) || !t_list[t_list.len() - 1].is_finite() {
        return Err(Error::Contract("t_list must be positive, finite and strictly increasing with at least two entries".into()));
    }
    Ok(())
}

/// Compares `∫_B tr^odd(e^{-A_t²}) ∧ ω` with its limit `-√π ∫_{B₀} tr exp(-(∇^ker)²) ∧ i*ω`.
pub fn large_time_limit_check(fam: &CircleFamily, omega: &FormField, t_list: &[f64]) -> Result<LimitCheck> {
    Ok(large_time_limit_checks(fam, std::slice::from_ref(omega), t_list)?.remove(0))
}

/// [`large_time_limit_check`] for several test forms, sharing the heat traces.
pub fn large_time_limit_checks(fam: &CircleFamily, omegas: &[FormField], t_list: &[f64]) -> Result<Vec<LimitCheck>> {
    check_t_list(t_list)?;
    let hyp = fam.hypersurface();
    let delta = Current::Delta { hyp: hyp.clone(), form: kernel_heat_form(fam, hyp)? };
    let targets = omegas.iter().map(|w| Ok(-pair(&delta, w)? * PI.sqrt())).collect::<Result<Vec<_>>>()?;
    let mut pairings = vec![Vec::with_capacity(t_list.len()); omegas.len()];
    for &t in t_list {
        let odd = Current::l1(fam.odd_trace_field(t)?);
        for (k, w) in omegas.iter().enumerate() {
            pairings[k].push(pair(&odd, w)?);
        }
    }
    Ok(pairings.into_iter().zip(targets).map(|(p, tg)| limit_fit(t_list.to_vec(), p, tg)).collect())
}

#[derive(Debug, Clone, PartialEq)]
pub struct IdentityTerms {
    pub name: String,
    /// `-∫ η̃ ∧ dω`.
    pub d_eta: Complex64,
    /// `∫ fiber_chern ∧ ω`.
    pub fiber: Complex64,
    /// `∫_{B₀} ch(ker) ∧ i*ω`.
    pub delta: Complex64,
    pub residual: f64,
}

/// `r(ω) = |dη̃(ω) - fiber_chern(ω) - δ_{B₀}ch(ker)(ω)|` for every basket form.
pub fn index_identity_check(fam: &CircleFamily, eta_tilde: &FormField, basket: &TestFormBasket) -> Result<Vec<IdentityTerms>> {
    let eta = Current::L1Form { field: eta_tilde.clone(), singular: Some(fam.hypersurface().clone()) };
    let d_eta = differential_current(&eta)?;
    let fc = Current::l1(fiber_chern(fam)?);
    let hyp = fam.hypersurface();
    let delta = Current::Delta { hyp: hyp.clone(), form: chern_kernel_form(fam, hyp)? };
    basket
        .entries
        .par_iter()
        .map(|(name, omega)| {
            let a = d_eta.eval(omega)?;
            let b = pair(&fc, omega)?;
            let c = pair(&delta, omega)?;
            Ok(IdentityTerms { name: name.clone(), d_eta: a, fiber: b, delta: c, residual: (a - b - c).norm() })
        })
        .collect()
}

/// Odd-degree part of a field.
pub fn odd_part(f: &FormField) -> FormField {
    f.map(|v| grade_select(v, Grade::Odd))
}

#[cfg(test)]
mod tests {
    use super::*;
    use crate::torus_base::{extract_hypersurface, AnalyticLevel};

    fn sine_hyp(m: u8, n: usize) -> Hypersurface {
        let g = Grid::new(m, n).unwrap();
        let f = AnalyticLevel::new(m, |p: [f64; 3]| ((2.0 * PI * p[0]).sin(), [2.0 * PI * (2.0 * PI * p[0]).cos(), 0.0, 0.0]));
        extract_hypersurface(g, &f).unwrap()
    }

    #[test]
    fn delta_on_first_sheet() {
        let hyp = sine_hyp(2, 16);
        let both = pair(&Current::delta_one(&hyp), &FormField::from_fn(hyp.grid(), |_| Multivector::e(2, 2))).unwrap();
        assert!(both.norm() < 1e-14);
        let single = Current::Delta {
            hyp: hyp.clone(),
            form: SheetForm {
                values: vec![vec![Multivector::one(1); 16], vec![Multivector::zero(1); 16]],
            },
        };
        let v = pair(&single, &FormField::from_fn(hyp.grid(), |_| Multivector::e(2, 2))).unwrap();
        assert!((v - 1.0).norm() < 1e-14);
    }

    #[test]
    fn l1_pairing() {
        let g = Grid::new(2, 16).unwrap();
        let c = Current::l1(FormField::from_fn(g, |_| Multivector::e(2, 1)));
        let v = pair(&c, &FormField::from_fn(g, |_| Multivector::e(2, 2))).unwrap();
        assert!((v - 1.0).norm() < 1e-15);
    }

    #[test]
    fn grid_mismatch() {
        let c = Current::l1(FormField::zero(Grid::new(2, 16).unwrap()));
        assert!(matches!(pair(&c, &FormField::zero(Grid::new(2, 32).unwrap())), Err(Error::Config(_))));
    }

    #[test]
    fn delta_has_no_differential() {
        let hyp = sine_hyp(1, 16);
        assert!(matches!(differential_current(&Current::delta_one(&hyp)), Err(Error::Unsupported(_))));
    }

    #[test]
    fn step_function_derivative() {
        // H = 1 where sin(2πx) > 0; the jumps sit on lattice nodes, where H takes the mean value
        let n = 256;
        let g = Grid::new(1, n).unwrap();
        let h = FormField::from_fn(g, |p| {
            let s = (2.0 * PI * p[0]).sin();
            Multivector::scalar(1, if s.abs() < 1e-12 { 0.5 } else if s > 0.0 { 1.0 } else { 0.0 })
        });
        let hyp = sine_hyp(1, n);
        let c = Current::L1Form { field: h, singular: Some(hyp.clone()) };
        let d = differential_current(&c).unwrap();
        let basket = TestFormBasket::default_for(g);
        for (name, w) in &basket.entries {
            let lhs = d.eval(w).unwrap();
            let rhs = pair(&Current::delta_one(&hyp), w).unwrap();
            assert!((lhs - rhs).norm() < 1e-6, "{name}: {lhs} vs {rhs}");
        }
    }

    #[test]
    fn closed_form_has_zero_differential() {
        let g = Grid::new(3, 16).unwrap();
        let c = Current::l1(FormField::from_fn(g, |p| Multivector::one(3) + Multivector::blade(3, &[1, 2], cos2(1.0, p[2]))));
        let d = differential_current(&c).unwrap();
        for (name, w) in &TestFormBasket::default_for(g).entries {
            assert!(d.eval(w).unwrap().norm() < 1e-10, "{name}");
        }
    }

    #[test]
    fn piecewise_quadrature_off_node_jump() {
        // g = e^x on (0.3, 0.3 + 1), periodically continued, jumping at 0.3
        let n = 64;
        let vals: Vec<Complex64> = (0..n)
            .map(|i| {
                let x = i as f64 / n as f64;
                let u = if x < 0.3 { x + 1.0 } else { x };
                Complex64::new(u.exp(), 0.0)
            })
            .collect();
        let exact = 1.3f64.exp() - 0.3f64.exp();
        assert!((piecewise_line_integral(&vals, &[0.3]) - exact).norm() < 1e-10);
        let trap: Complex64 = vals.iter().sum::<Complex64>() / n as f64;
        assert!((trap - exact).norm() > 1e-3);
    }

    #[test]
    fn piecewise_quadrature_exact_for_quintics() {
        let n = 40;
        let p = |x: f64| Complex64::new(1.0 - 2.0 * x + 3.0 * x.powi(3) - x.powi(5), x.powi(4));
        let vals: Vec<Complex64> = (0..n)
            .map(|i| {
                let x = i as f64 / n as f64;
                p(if x < 0.1234 { x + 1.0 } else { x })
            })
            .collect();
        let prim = |x: f64| Complex64::new(x - x * x + 0.75 * x.powi(4) - x.powi(6) / 6.0, x.powi(5) / 5.0);
        let exact = prim(1.1234) - prim(0.1234);
        assert!((piecewise_line_integral(&vals, &[0.1234]) - exact).norm() < 1e-13);
    }

    #[test]
    fn slope_fit() {
        let t = log_spaced(1.0, 100.0, 5);
        let y: Vec<f64> = t.iter().map(|t| (3.0 * t.powf(-0.5)).ln()).collect();
        let lt: Vec<f64> = t.iter().map(|t| t.ln()).collect();
        assert!((fit_slope(&lt, &y) + 0.5).abs() < 1e-12);
    }
}
