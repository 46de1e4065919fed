//! The flat torus T^m = (R/Z)^m sampled on a uniform periodic lattice, with
//! spectral exterior derivative, integration, and extraction of the zero set
//! of a level function as a union of oriented graph sheets.

use std::f64::consts::PI;
use std::fmt::Write as _;
use std::sync::Arc;

use num_complex::Complex64;
use rayon::prelude::*;
use rustfft::FftPlanner;

use crate::error::{Error, Result};
use crate::grassmann::{blade_indices, canonical_masks, Grade, Multivector};

/// Uniform periodic lattice with `n` points per axis; the first axis varies fastest.
#[derive(Debug, Clone, Copy, PartialEq, Eq)]
pub struct Grid {
    m: u8,
    n: usize,
}

impl Grid {
    pub fn new(m: u8, n: usize) -> Result<Self> {
        if !(1..=3).contains(&m) {
            return Err(Error::Config(format!("base dimension m = {m} not in 1..=3")));
        }
        if n < 16 || n % 2 != 0 {
            return Err(Error::Config(format!("grid size n = {n} must be even and at least 16")));
        }
        Ok(Grid { m, n })
    }

    #[inline]
    pub fn m(&self) -> u8 {
        self.m
    }

    #[inline]
    pub fn n(&self) -> usize {
        self.n
    }

    #[inline]
    pub fn h(&self) -> f64 {
        1.0 / self.n as f64
    }

    /// Number of lattice points, `n^m`.
    #[inline]
    pub fn len(&self) -> usize {
        self.n.pow(self.m as u32)
    }

    #[inline]
    pub fn is_empty(&self) -> bool {
        false
    }

    /// Lattice multi-index of a flat index; unused axes are 0.
    #[inline]
    pub fn multi_index(&self, idx: usize) -> [usize; 3] {
        let n = self.n;
        let mut out = [0; 3];
        let mut r = idx;
        for slot in out.iter_mut().take(self.m as usize) {
            *slot = r % n;
            r /= n;
        }
        out
    }

    #[inline]
    pub fn flat_index(&self, mi: [usize; 3]) -> usize {
        let n = self.n;
        let mut idx = 0;
        for a in (0..self.m as usize).rev() {
            idx = idx * n + mi[a] % n;
        }
        idx
    }

    /// Coordinates of a lattice point; unused axes are 0.
    #[inline]
    pub fn point(&self, idx: usize) -> [f64; 3] {
        let mi = self.multi_index(idx);
        let h = self.h();
        let mut p = [0.0; 3];
        for a in 0..self.m as usize {
            p[a] = mi[a] as f64 * h;
        }
        p
    }

    /// Periodic lattice distance along one axis, in cells.
    pub fn cell_distance(&self, i: usize, j: usize) -> usize {
        let d = i.abs_diff(j) % self.n;
        d.min(self.n - d)
    }

    fn stride(&self, axis: usize) -> usize {
        self.n.pow(axis as u32)
    }

    /// Flat indices of the lattice line along `axis` through each base point
    /// with zero `axis` coordinate, in a fixed order.
    fn lines(&self, axis: usize) -> Vec<usize> {
        (0..self.len()).filter(|&i| self.multi_index(i)[axis] == 0).collect()
    }
}

/// A multivector-valued function sampled on a grid.
#[derive(Debug, Clone, PartialEq)]
pub struct FormField {
    grid: Grid,
    values: Vec<Multivector>,
}

impl FormField {
    pub fn new(grid: Grid, values: Vec<Multivector>) -> Result<Self> {
        if values.len() != grid.len() {
            return Err(Error::Config(format!(
                "form field has {} values for a grid of {} points",
                values.len(),
                grid.len()
            )));
        }
        if let Some(v) = values.iter().find(|v| v.dim() != grid.m()) {
            return Err(Error::Config(format!(
                "form field value of dimension {} on a base of dimension {}",
                v.dim(),
                grid.m()
            )));
        }
        Ok(FormField { grid, values })
    }

    pub fn zero(grid: Grid) -> Self {
        FormField { grid, values: vec![Multivector::zero(grid.m()); grid.len()] }
    }

    /// Samples `f` at every lattice point, in parallel.
    pub fn from_fn<F>(grid: Grid, f: F) -> Self
    where
        F: Fn([f64; 3]) -> Multivector + Sync + Send,
    {
        let values: Vec<Multivector> = (0..grid.len()).into_par_iter().map(|i| f(grid.point(i))).collect();
        debug_assert!(values.iter().all(|v| v.dim() == grid.m()));
        FormField { grid, values }
    }

    /// Fallible variant of [`FormField::from_fn`]; the first error in index order wins.
    pub fn try_from_fn<F>(grid: Grid, f: F) -> Result<Self>
    where
        F: Fn([f64; 3]) -> Result<Multivector> + Sync + Send,
    {
        let values: Result<Vec<Multivector>> = (0..grid.len()).into_par_iter().map(|i| f(grid.point(i))).collect();
        Self::new(grid, values?)
    }

    #[inline]
    pub fn grid(&self) -> Grid {
        self.grid
    }

    #[inline]
    pub fn values(&self) -> &[Multivector] {
        &self.values
    }

    #[inline]
    pub fn get(&self, idx: usize) -> Multivector {
        self.values[idx]
    }

    pub fn map(&self, f: impl Fn(&Multivector) -> Multivector + Sync + Send) -> Self {
        FormField { grid: self.grid, values: self.values.par_iter().map(f).collect() }
    }

    fn zip_with(&self, other: &Self, f: impl Fn(&Multivector, &Multivector) -> Multivector + Sync + Send) -> Result<Self> {
        if self.grid != other.grid {
            return Err(Error::Config(format!("grid mismatch: {:?} vs {:?}", self.grid, other.grid)));
        }
        let values = self.values.par_iter().zip(other.values.par_iter()).map(|(a, b)| f(a, b)).collect();
        Ok(FormField { grid: self.grid, values })
    }

    pub fn wedge(&self, other: &Self) -> Result<Self> {
        self.zip_with(other, |a, b| *a * *b)
    }

    pub fn add(&self, other: &Self) -> Result<Self> {
        self.zip_with(other, |a, b| *a + *b)
    }

    pub fn sub(&self, other: &Self) -> Result<Self> {
        self.zip_with(other, |a, b| *a - *b)
    }

    pub fn scale(&self, c: Complex64) -> Self {
        self.map(|v| *v * c)
    }

    pub fn grade_select(&self, which: Grade) -> Self {
        self.map(|v| crate::grassmann::grade_select(v, which))
    }

    /// Largest componentwise distance over all lattice points.
    pub fn max_abs_diff(&self, other: &Self) -> Result<f64> {
        if self.grid != other.grid {
            return Err(Error::Config("grid mismatch".into()));
        }
        Ok(self
            .values
            .iter()
            .zip(&other.values)
            .map(|(a, b)| a.max_abs_diff(b))
            .fold(0.0, f64::max))
    }

    /// One coefficient as a scalar field.
    pub fn channel(&self, mask: usize) -> Vec<Complex64> {
        self.values.iter().map(|v| v.get(mask)).collect()
    }

    /// CSV with one row per lattice point: coordinates, then `(re, im)` per
    /// basis blade in canonical order.
    pub fn to_csv(&self) -> String {
        self.to_csv_with(&[], |_| Vec::new())
    }

    /// As [`FormField::to_csv`], with extra real columns appended to each row.
    pub fn to_csv_with(&self, extra_names: &[&str], extra: impl Fn(usize) -> Vec<f64>) -> String {
        let m = self.grid.m();
        let masks = canonical_masks(m);
        let mut out = String::new();
        let mut header: Vec<String> = (1..=m).map(|a| format!("x{a}")).collect();
        for &mask in &masks {
            let name: String = blade_indices(mask).iter().map(|i| i.to_string()).collect();
            let name = if name.is_empty() { "1".to_string() } else { format!("e{name}") };
            header.push(format!("re_{name}"));
            header.push(format!("im_{name}"));
        }
        header.extend(extra_names.iter().map(|s| s.to_string()));
        out.push_str(&header.join(","));
        out.push('\n');
        for (idx, v) in self.values.iter().enumerate() {
            let p = self.grid.point(idx);
            let mut cells: Vec<String> = (0..m as usize).map(|a| fmt_num(p[a])).collect();
            for &mask in &masks {
                let c = v.get(mask);
                cells.push(fmt_num(c.re));
                cells.push(fmt_num(c.im));
            }
            cells.extend(extra(idx).into_iter().map(fmt_num));
            let _ = writeln!(out, "{}", cells.join(","));
        }
        out
    }
}

/// Fixed 17-significant-digit rendering used in every CSV artifact.
pub fn fmt_num(x: f64) -> String {
    format!("{x:.16e}")
}

/// Spectral derivative along `axis` of every line of a complex scalar field.
/// The Nyquist mode is dropped.
fn spectral_derivative(grid: Grid, data: &[Complex64], axis: usize, planner: &mut FftPlanner<f64>) -> Vec<Complex64> {
    let n = grid.n();
    let fwd = planner.plan_fft_forward(n);
    let inv = planner.plan_fft_inverse(n);
    let stride = grid.stride(axis);
    let mut out = vec![Complex64::new(0.0, 0.0); data.len()];
    let mut buf = vec![Complex64::new(0.0, 0.0); n];
    for start in grid.lines(axis) {
        for (i, b) in buf.iter_mut().enumerate() {
            *b = data[start + i * stride];
        }
        fwd.process(&mut buf);
        for (k, b) in buf.iter_mut().enumerate() {
            let freq = if k < n / 2 {
                k as f64
            } else if k == n / 2 {
                0.0
            } else {
                k as f64 - n as f64
            };
            *b *= Complex64::new(0.0, 2.0 * PI * freq / n as f64);
        }
        inv.process(&mut buf);
        for (i, b) in buf.iter().enumerate() {
            out[start + i * stride] = *b;
        }
    }
    out
}

/// Exterior derivative `dω = Σ_j e_j ∧ ∂_j ω`, differentiating each
/// coefficient spectrally along each axis.
pub fn exterior_derivative(omega: &FormField) -> FormField {
    let grid = omega.grid();
    let m = grid.m();
    let mut planner = FftPlanner::new();
    let mut out = FormField::zero(grid);
    for mask in 0..(1usize << m) {
        let chan = omega.channel(mask);
        if chan.iter().all(|c| c.norm() == 0.0) {
            continue;
        }
        for axis in 0..m as usize {
            let bit = 1usize << axis;
            if mask & bit != 0 {
                continue;
            }
            let der = spectral_derivative(grid, &chan, axis, &mut planner);
            let ej = Multivector::e(m, axis + 1);
            let blade = Multivector::from_coeffs(m, &[(mask, Complex64::new(1.0, 0.0))]);
            let sign_blade = ej * blade;
            let sign = sign_blade.get(mask | bit).re;
            for (v, d) in out.values.iter_mut().zip(&der) {
                let mut c = v.get(mask | bit);
                c += *d * sign;
                v.set(mask | bit, c);
            }
        }
    }
    out
}

/// Spectral derivative of a real or complex scalar field along one axis.
pub fn partial_derivative(grid: Grid, data: &[Complex64], axis: usize) -> Vec<Complex64> {
    let mut planner = FftPlanner::new();
    spectral_derivative(grid, data, axis, &mut planner)
}

/// `∫_B ω`: the mean of the top-degree coefficient (unit volume).
pub fn integrate_base(omega: &FormField) -> Complex64 {
    let grid = omega.grid();
    let top = (1usize << grid.m()) - 1;
    let sum: Complex64 = omega.values().iter().map(|v| v.get(top)).sum();
    sum / grid.len() as f64
}

/// Periodic cardinal function of the even-n trigonometric interpolant and its
/// derivative, at offset `u` (in units of the period).
#[inline]
pub(crate) fn periodic_sinc(n: usize, u: f64) -> (f64, f64) {
    let nf = n as f64;
    let u = u - u.round();
    let s = (PI * u).sin();
    if s.abs() < 1e-7 {
        let c = PI * PI * (nf * nf - 1.0);
        return (1.0 - c * u * u / 6.0, -c * u / 3.0);
    }
    let t = (PI * u).tan();
    let sn = (nf * PI * u).sin();
    let cn = (nf * PI * u).cos();
    let val = sn / (nf * t);
    let der = PI * cn / t - PI * sn / (nf * s * s);
    (val, der)
}

/// Trigonometric interpolation of periodic samples `v_i = g(i/n)` and its derivative at `x`.
pub fn interpolate_periodic<T>(values: &[T], x: f64) -> (T, T)
where
    T: Copy + std::ops::Add<Output = T> + std::ops::Mul<f64, Output = T> + Default,
{
    let n = values.len();
    let mut v = T::default();
    let mut d = T::default();
    let xn = x * n as f64;
    let near = xn.round();
    if (xn - near).abs() < 1e-13 {
        // exactly at a node the value is the sample; the derivative still needs the sum
        let i0 = (near as i64).rem_euclid(n as i64) as usize;
        for (i, &vi) in values.iter().enumerate() {
            if i == i0 {
                continue;
            }
            let (_, der) = periodic_sinc(n, x - i as f64 / n as f64);
            d = d + vi * der;
        }
        return (values[i0], d);
    }
    for (i, &vi) in values.iter().enumerate() {
        let (val, der) = periodic_sinc(n, x - i as f64 / n as f64);
        v = v + vi * val;
        d = d + vi * der;
    }
    (v, d)
}

/// A scalar function on the torus whose zero set is to be extracted.
pub trait LevelFunction: Sync {
    fn dim(&self) -> u8;
    /// Value and gradient at a point.
    fn eval(&self, p: [f64; 3]) -> (f64, [f64; 3]);
}

/// A level function given in closed form.
pub struct AnalyticLevel<F> {
    m: u8,
    f: F,
}

impl<F> AnalyticLevel<F>
where
    F: Fn([f64; 3]) -> (f64, [f64; 3]) + Sync,
{
    pub fn new(m: u8, f: F) -> Self {
        AnalyticLevel { m, f }
    }
}

impl<F> LevelFunction for AnalyticLevel<F>
where
    F: Fn([f64; 3]) -> (f64, [f64; 3]) + Sync,
{
    fn dim(&self) -> u8 {
        self.m
    }
    fn eval(&self, p: [f64; 3]) -> (f64, [f64; 3]) {
        (self.f)(p)
    }
}

/// A level function known through its lattice samples, evaluated by
/// trigonometric interpolation.
pub struct SampledLevel {
    grid: Grid,
    values: Vec<f64>,
    grads: Vec<Vec<f64>>,
}

impl SampledLevel {
    pub fn new(grid: Grid, values: Vec<f64>) -> Result<Self> {
        if values.len() != grid.len() {
            return Err(Error::Config("sampled level function does not match the grid".into()));
        }
        let cplx: Vec<Complex64> = values.iter().map(|&v| Complex64::new(v, 0.0)).collect();
        let mut planner = FftPlanner::new();
        let grads = (0..grid.m() as usize)
            .map(|a| spectral_derivative(grid, &cplx, a, &mut planner).iter().map(|c| c.re).collect())
            .collect();
        Ok(SampledLevel { grid, values, grads })
    }

    pub fn from_fn(grid: Grid, f: impl Fn([f64; 3]) -> f64 + Sync + Send) -> Result<Self> {
        let values: Vec<f64> = (0..grid.len()).into_par_iter().map(|i| f(grid.point(i))).collect();
        Self::new(grid, values)
    }

    /// Tensor-product interpolation of one lattice field; axes whose coordinate
    /// sits on the lattice use the sample directly.
    fn interp(&self, field: &[f64], p: [f64; 3], deriv_axis: Option<usize>) -> f64 {
        let g = self.grid;
        let n = g.n();
        let m = g.m() as usize;
        let mut weights: Vec<Vec<(usize, f64)>> = Vec::with_capacity(m);
        for (a, &pa) in p.iter().enumerate().take(m) {
            let xn = pa * n as f64;
            let near = xn.round();
            let wants_deriv = deriv_axis == Some(a);
            if (xn - near).abs() < 1e-12 && !wants_deriv {
                weights.push(vec![((near as i64).rem_euclid(n as i64) as usize, 1.0)]);
            } else {
                let w: Vec<(usize, f64)> = (0..n)
                    .map(|i| {
                        let (v, d) = periodic_sinc(n, pa - i as f64 / n as f64);
                        (i, if wants_deriv { d } else { v })
                    })
                    .collect();
                weights.push(w);
            }
        }
        let mut acc = 0.0;
        let w0 = &weights[0];
        let w1: &[(usize, f64)] = if m > 1 { &weights[1] } else { &[(0, 1.0)] };
        let w2: &[(usize, f64)] = if m > 2 { &weights[2] } else { &[(0, 1.0)] };
        for &(k, c2) in w2 {
            for &(j, c1) in w1 {
                let base = g.flat_index([0, j, k]);
                let mut s = 0.0;
                for &(i, c0) in w0 {
                    s += c0 * field[base + i];
                }
                acc += c1 * c2 * s;
            }
        }
        acc
    }
}

impl LevelFunction for SampledLevel {
    fn dim(&self) -> u8 {
        self.grid.m()
    }

    fn eval(&self, p: [f64; 3]) -> (f64, [f64; 3]) {
        let v = self.interp(&self.values, p, None);
        let mut grad = [0.0; 3];
        // the x-derivative comes from the interpolant itself so that Newton steps are consistent
        grad[0] = self.interp(&self.values, p, Some(0));
        for (a, g) in grad.iter_mut().enumerate().take(self.grid.m() as usize).skip(1) {
            *g = self.interp(&self.grads[a], p, None);
        }
        (v, grad)
    }
}

/// One sample of a sheet: the point where the sheet crosses a lattice line.
#[derive(Debug, Clone, Copy, PartialEq)]
pub struct SheetSample {
    pub point: [f64; 3],
    /// Lattice indices of the remaining coordinates.
    pub params: [usize; 2],
    /// `∂s/∂x_j` for the graph `x_1 = s(x_2, …)`, `j = 2..m`.
    pub slopes: [f64; 2],
    /// Parameter-space quadrature weight `h^{m-1}`.
    pub weight: f64,
    /// Induced volume element `h^{m-1} √(1 + |∇s|²)`.
    pub area: f64,
    /// `∂f/∂x_1` at the crossing.
    pub normal_slope: f64,
}

/// A connected graph component `x_1 = s(x_2, …, x_m)` of the zero set.
#[derive(Debug, Clone, PartialEq)]
pub struct Sheet {
    /// `+1` if the parametrization by `(x_2, …, x_m)` is positively oriented.
    pub orientation_sign: i8,
    pub samples: Vec<SheetSample>,
}

/// The zero set of a level function as oriented sheets sampled on the lattice
/// of the transverse coordinates. The orientation puts the gradient of the level
/// function first: a frame `(v_1, …)` of a sheet is positive iff `(∇f, v_1, …)`
/// is positive on the base.
#[derive(Debug, Clone, PartialEq)]
pub struct Hypersurface {
    grid: Grid,
    sheets: Vec<Sheet>,
}

/// Values of a form on the hypersurface: one multivector of dimension `m - 1`
/// per sheet sample.
#[derive(Debug, Clone, PartialEq)]
pub struct SheetForm {
    pub values: Vec<Vec<Multivector>>,
}

impl Hypersurface {
    pub fn empty(grid: Grid) -> Self {
        Hypersurface { grid, sheets: Vec::new() }
    }

    pub fn grid(&self) -> Grid {
        self.grid
    }

    pub fn sheets(&self) -> &[Sheet] {
        &self.sheets
    }

    pub fn is_empty(&self) -> bool {
        self.sheets.is_empty()
    }

    /// Same sheets with reversed orientation.
    pub fn reversed(&self) -> Self {
        let mut out = self.clone();
        for s in &mut out.sheets {
            s.orientation_sign = -s.orientation_sign;
        }
        out
    }

    /// Total induced volume of one sheet.
    pub fn sheet_volume(&self, sheet: usize) -> f64 {
        self.sheets[sheet].samples.iter().map(|s| s.area).sum()
    }

    /// Pulls a base multivector back to the sheet parameters at a sample:
    /// `e_1 ↦ Σ_j s_j e'_{j-1}`, `e_j ↦ e'_{j-1}`.
    pub fn pullback(&self, sample: &SheetSample, v: &Multivector) -> Multivector {
        let m = self.grid.m();
        let k = m - 1;
        let mut images = [Multivector::zero(k); 3];
        let mut e1 = Multivector::zero(k);
        for j in 2..=m as usize {
            e1 += Multivector::e(k, j - 1) * sample.slopes[j - 2];
        }
        images[0] = e1;
        for j in 2..=m as usize {
            images[j - 1] = Multivector::e(k, j - 1);
        }
        let mut out = Multivector::zero(k);
        for mask in 0..(1usize << m) {
            let c = v.get(mask);
            if c.norm() == 0.0 {
                continue;
            }
            let mut img = Multivector::one(k);
            for i in blade_indices(mask) {
                img = img * images[i - 1];
            }
            out += img * c;
        }
        out
    }

    /// Evaluates a closure of sheet samples into a form on the hypersurface.
    pub fn sample_form(&self, f: impl Fn(&SheetSample) -> Multivector + Sync + Send) -> SheetForm {
        SheetForm { values: self.sheets.iter().map(|s| s.samples.par_iter().map(&f).collect()).collect() }
    }

    /// `Σ_sheets sign ∫ (top-degree part of g(sample))` with parameter weights,
    /// where `g` returns a multivector of dimension `m - 1`.
    pub fn integrate_sheet_values(&self, g: impl Fn(usize, usize, &SheetSample) -> Multivector + Sync + Send) -> Complex64 {
        let top = (1usize << (self.grid.m() - 1)) - 1;
        let mut total = Complex64::new(0.0, 0.0);
        for (si, sheet) in self.sheets.iter().enumerate() {
            let s: Complex64 = sheet
                .samples
                .par_iter()
                .enumerate()
                .map(|(k, smp)| g(si, k, smp).get(top) * smp.weight)
                .collect::<Vec<_>>()
                .into_iter()
                .sum();
            total += s * f64::from(sheet.orientation_sign);
        }
        total
    }
}

fn periodic_dist(a: f64, b: f64) -> f64 {
    let d = (a - b).rem_euclid(1.0);
    d.min(1.0 - d)
}

/// Safeguarded Newton iteration for a sign change of `g` on `[lo, hi]`.
fn polish_root(g: &dyn Fn(f64) -> (f64, f64), mut lo: f64, mut hi: f64) -> f64 {
    let (flo, _) = g(lo);
    if flo == 0.0 {
        return lo;
    }
    let lo_neg = flo < 0.0;
    let mut x = 0.5 * (lo + hi);
    for _ in 0..200 {
        let (fx, dfx) = g(x);
        if fx.abs() <= 1e-14 {
            return x;
        }
        if (fx < 0.0) == lo_neg {
            lo = x;
        } else {
            hi = x;
        }
        let newton = x - fx / dfx;
        let next = if dfx != 0.0 && newton > lo && newton < hi { newton } else { 0.5 * (lo + hi) };
        if (next - x).abs() < 1e-15 || hi - lo < 1e-15 {
            return next;
        }
        x = next;
    }
    x
}

struct LineRoot {
    x: f64,
    grad: [f64; 3],
}

/// Roots of `f` along the x-line through `(y, z)`.
fn line_roots(f: &dyn LevelFunction, n: usize, y: f64, z: f64) -> Result<Vec<LineRoot>> {
    let h = 1.0 / n as f64;
    let vals: Vec<f64> = (0..n).map(|i| f.eval([i as f64 * h, y, z]).0).collect();
    let mut out: Vec<LineRoot> = Vec::new();
    for i in 0..n {
        let a = vals[i];
        let b = vals[(i + 1) % n];
        if (a >= 0.0) == (b >= 0.0) {
            continue;
        }
        let lo = i as f64 * h;
        let g = |x: f64| {
            let (v, gr) = f.eval([x, y, z]);
            (v, gr[0])
        };
        let x = polish_root(&g, lo, lo + h);
        let (fx, grad) = f.eval([x, y, z]);
        if fx.abs() > 1e-6 {
            // a jump of the level function between representatives, not a zero
            continue;
        }
        if grad[0].abs() < 1e-6 {
            return Err(Error::Transversality { point: [x.rem_euclid(1.0), y, z], slope: grad[0].abs() });
        }
        let x = x.rem_euclid(1.0);
        if out.iter().any(|r| periodic_dist(r.x, x) < 1e-8) {
            continue;
        }
        out.push(LineRoot { x, grad });
    }
    // roots just below 1 belong to the start of the circle
    let key = |x: f64| (x + 1e-9).rem_euclid(1.0);
    out.sort_by(|p, q| key(p.x).total_cmp(&key(q.x)));
    Ok(out)
}

/// Extracts the zero set of `f` as graphs over the transverse lattice.
/// Returns an empty hypersurface if `f` has no zero.
pub fn extract_hypersurface(grid: Grid, f: &dyn LevelFunction) -> Result<Hypersurface> {
    if f.dim() != grid.m() {
        return Err(Error::Config("level function dimension does not match the grid".into()));
    }
    let m = grid.m() as usize;
    let n = grid.n();
    let h = grid.h();
    let nlines = n.pow(m as u32 - 1);
    let line_params = |l: usize| -> [usize; 2] {
        match m {
            1 => [0, 0],
            2 => [l, 0],
            _ => [l % n, l / n],
        }
    };
    let roots: Vec<Result<Vec<LineRoot>>> = (0..nlines)
        .into_par_iter()
        .map(|l| {
            let p = line_params(l);
            line_roots(f, n, p[0] as f64 * h, p[1] as f64 * h)
        })
        .collect();
    let roots: Vec<Vec<LineRoot>> = roots.into_iter().collect::<Result<_>>()?;
    let count = roots[0].len();
    if count == 0 {
        if roots.iter().any(|r| !r.is_empty()) {
            return Err(Error::GraphCondition("some lattice lines cross the zero set and others do not".into()));
        }
        return Ok(Hypersurface::empty(grid));
    }
    if let Some(l) = roots.iter().position(|r| r.len() != count) {
        return Err(Error::GraphCondition(format!(
            "line {l} crosses the zero set {} times, line 0 crosses it {count} times",
            roots[l].len()
        )));
    }

    // order[l][s] = index into roots[l] of sheet s
    let mut order: Vec<Vec<usize>> = vec![Vec::new(); nlines];
    order[0] = (0..count).collect();
    for l in 1..nlines {
        let p = line_params(l);
        let reference = if p[0] > 0 { l - 1 } else { l - n };
        let refx: Vec<f64> = order[reference].iter().map(|&i| roots[reference][i].x).collect();
        let best = (0..count)
            .min_by(|&s1, &s2| {
                let cost = |shift: usize| -> f64 {
                    (0..count).map(|s| periodic_dist(refx[s], roots[l][(s + shift) % count].x)).sum()
                };
                cost(s1).total_cmp(&cost(s2))
            })
            .unwrap_or(0);
        order[l] = (0..count).map(|s| (s + best) % count).collect();
    }

    let mut sheets = Vec::with_capacity(count);
    for s in 0..count {
        let first = &roots[0][order[0][s]];
        let sign: i8 = if first.grad[0] > 0.0 { 1 } else { -1 };
        let mut samples = Vec::with_capacity(nlines);
        for l in 0..nlines {
            let r = &roots[l][order[l][s]];
            let rsign: i8 = if r.grad[0] > 0.0 { 1 } else { -1 };
            if rsign != sign {
                return Err(Error::GraphCondition(format!("sheet {s} changes its crossing direction at line {l}")));
            }
            let p = line_params(l);
            let mut slopes = [0.0; 2];
            for j in 1..m {
                slopes[j - 1] = -r.grad[j] / r.grad[0];
            }
            let weight = h.powi(m as i32 - 1);
            let area = weight * (1.0 + slopes.iter().map(|s| s * s).sum::<f64>()).sqrt();
            samples.push(SheetSample {
                point: [r.x, p[0] as f64 * h, p[1] as f64 * h],
                params: p,
                slopes,
                weight,
                area,
                normal_slope: r.grad[0],
            });
        }
        sheets.push(Sheet { orientation_sign: sign, samples });
    }
    Ok(Hypersurface { grid, sheets })
}

/// Interpolates a form field along the first axis to a sheet sample.
pub fn interpolate_at_sample(omega: &FormField, sample: &SheetSample) -> Multivector {
    let grid = omega.grid();
    let n = grid.n();
    let base = grid.flat_index([0, sample.params[0], sample.params[1]]);
    let line: Vec<MvAcc> = (0..n).map(|i| MvAcc(omega.get(base + i))).collect();
    interpolate_periodic(&line, sample.point[0]).0 .0
}

#[derive(Clone, Copy)]
struct MvAcc(Multivector);

impl Default for MvAcc {
    fn default() -> Self {
        MvAcc(Multivector::zero(3))
    }
}

impl std::ops::Add for MvAcc {
    type Output = Self;
    fn add(self, rhs: Self) -> Self {
        // the default element is the dimension-3 zero; adopt the dimension of the other side
        let a = if self.0.dim() != rhs.0.dim() { self.0.with_dim(rhs.0.dim()) } else { self.0 };
        MvAcc(a + rhs.0)
    }
}

impl std::ops::Mul<f64> for MvAcc {
    type Output = Self;
    fn mul(self, rhs: f64) -> Self {
        MvAcc(self.0 * rhs)
    }
}

/// `∫_{B₀} i*ω`, summed over sheets with their orientation signs.
pub fn restrict_and_integrate(hyp: &Hypersurface, omega: &FormField) -> Result<Complex64> {
    if omega.grid() != hyp.grid() {
        return Err(Error::Config("form field and hypersurface live on different grids".into()));
    }
    Ok(hyp.integrate_sheet_values(|_, _, smp| hyp.pullback(smp, &interpolate_at_sample(omega, smp))))
}

/// `∫_{B₀} i*ω` for a form given in closed form.
pub fn restrict_and_integrate_with(hyp: &Hypersurface, omega: impl Fn([f64; 3]) -> Multivector + Sync + Send) -> Complex64 {
    hyp.integrate_sheet_values(|_, _, smp| hyp.pullback(smp, &omega(smp.point)))
}

/// Hypersurface CSV: one row per sample with sheet index, orientation, point,
/// weight and induced area.
pub fn hypersurface_csv(hyp: &Hypersurface) -> String {
    let m = hyp.grid().m() as usize;
    let mut out = String::new();
    let mut header = vec!["sheet".to_string(), "orientation".to_string()];
    header.extend((1..=m).map(|a| format!("x{a}")));
    header.push("weight".into());
    header.push("area".into());
    out.push_str(&header.join(","));
    out.push('\n');
    for (si, s) in hyp.sheets().iter().enumerate() {
        for smp in &s.samples {
            let mut cells = vec![si.to_string(), s.orientation_sign.to_string()];
            cells.extend((0..m).map(|a| fmt_num(smp.point[a])));
            cells.push(fmt_num(smp.weight));
            cells.push(fmt_num(smp.area));
            let _ = writeln!(out, "{}", cells.join(","));
        }
    }
    out
}

/// Shared handle used when many evaluations need the same hypersurface.
pub type SharedHypersurface = Arc<Hypersurface>;

#[cfg(test)]
mod tests {
    use super::*;

    fn sin_level(m: u8) -> AnalyticLevel<impl Fn([f64; 3]) -> (f64, [f64; 3]) + Sync> {
        AnalyticLevel::new(m, |p: [f64; 3]| ((2.0 * PI * p[0]).sin(), [2.0 * PI * (2.0 * PI * p[0]).cos(), 0.0, 0.0]))
    }

    #[test]
    fn grid_validation() {
        assert!(Grid::new(2, 15).is_err());
        assert!(Grid::new(2, 14).is_err());
        assert!(Grid::new(4, 16).is_err());
        assert!(Grid::new(0, 16).is_err());
        let g = Grid::new(3, 16).unwrap();
        assert_eq!(g.len(), 4096);
        assert_eq!(g.flat_index(g.multi_index(1234)), 1234);
    }

    #[test]
    fn derivative_of_sine() {
        let g = Grid::new(1, 64).unwrap();
        let w = FormField::from_fn(g, |p| Multivector::scalar(1, (2.0 * PI * p[0]).sin()));
        let dw = exterior_derivative(&w);
        for i in 0..g.len() {
            let x = g.point(i)[0];
            let want = 2.0 * PI * (2.0 * PI * x).cos();
            assert!((dw.get(i).coeff(&[1]).re - want).abs() < 1e-10);
            assert!(dw.get(i).scalar_part().norm() == 0.0);
        }
    }

    #[test]
    fn d_squared_vanishes() {
        let g = Grid::new(2, 32).unwrap();
        let w = FormField::from_fn(g, |p| Multivector::e(2, 2) * (2.0 * PI * p[0]).sin());
        let ddw = exterior_derivative(&exterior_derivative(&w));
        assert!(ddw.values().iter().all(|v| v.max_abs() < 1e-10));
    }

    #[test]
    fn derivative_sign_of_two_form() {
        // d(g dy∧dz) = ∂_x g dx∧dy∧dz and d(g dx∧dz) = -∂_y g dx∧dy∧dz
        let g = Grid::new(3, 16).unwrap();
        let w = FormField::from_fn(g, |p| Multivector::blade(3, &[1, 3], (2.0 * PI * p[1]).sin()));
        let dw = exterior_derivative(&w);
        for i in 0..g.len() {
            let y = g.point(i)[1];
            let want = -2.0 * PI * (2.0 * PI * y).cos();
            assert!((dw.get(i).coeff(&[1, 2, 3]).re - want).abs() < 1e-10);
        }
    }

    #[test]
    fn base_integrals() {
        let g = Grid::new(2, 16).unwrap();
        let vol = FormField::from_fn(g, |_| Multivector::blade(2, &[1, 2], 1.0));
        assert!((integrate_base(&vol) - 1.0).norm() < 1e-15);
        let s = FormField::from_fn(g, |p| Multivector::blade(2, &[1, 2], (2.0 * PI * p[0]).sin()));
        assert!(integrate_base(&s).norm() < 1e-14);
        let low = FormField::from_fn(g, |_| Multivector::one(2) + Multivector::e(2, 1));
        assert_eq!(integrate_base(&low), Complex64::new(0.0, 0.0));
    }

    #[test]
    fn sine_zero_set_has_two_opposite_sheets() {
        for m in 1..=3 {
            let g = Grid::new(m, 16).unwrap();
            let hyp = extract_hypersurface(g, &sin_level(m)).unwrap();
            assert_eq!(hyp.sheets().len(), 2);
            let s0 = &hyp.sheets()[0];
            let s1 = &hyp.sheets()[1];
            assert!(s0.samples.iter().all(|s| periodic_dist(s.point[0], 0.0) < 1e-12));
            assert_eq!(s0.orientation_sign, 1);
            assert!(s1.samples.iter().all(|s| (s.point[0] - 0.5).abs() < 1e-12));
            assert_eq!(s1.orientation_sign, -1);
        }
    }

    #[test]
    fn shifted_linear_chart() {
        let g = Grid::new(2, 16).unwrap();
        // the representative of x - 1/4 in (-1/2, 1/2] jumps at x = 3/4
        let f = AnalyticLevel::new(2, |p: [f64; 3]| {
            let v = p[0] - 0.25;
            let v = if v > 0.5 { v - 1.0 } else if v <= -0.5 { v + 1.0 } else { v };
            (v, [1.0, 0.0, 0.0])
        });
        let hyp = extract_hypersurface(g, &f).unwrap();
        assert_eq!(hyp.sheets().len(), 1);
        assert_eq!(hyp.sheets()[0].orientation_sign, 1);
        assert!(hyp.sheets()[0].samples.iter().all(|s| (s.point[0] - 0.25).abs() < 1e-12));
    }

    #[test]
    fn no_zero_gives_empty() {
        let g = Grid::new(2, 16).unwrap();
        let f = AnalyticLevel::new(2, |p: [f64; 3]| (2.0 + (2.0 * PI * p[0]).sin(), [0.0; 3]));
        assert!(extract_hypersurface(g, &f).unwrap().is_empty());
    }

    #[test]
    fn tangential_zero_is_rejected() {
        let g = Grid::new(1, 16).unwrap();
        let f = AnalyticLevel::new(1, |p: [f64; 3]| {
            let u = p[0] - 0.3;
            (u * u * u, [3.0 * u * u, 0.0, 0.0])
        });
        assert!(matches!(extract_hypersurface(g, &f), Err(Error::Transversality { .. })));
    }

    #[test]
    fn restriction_examples() {
        let g = Grid::new(2, 16).unwrap();
        let hyp = extract_hypersurface(g, &sin_level(2)).unwrap();
        let dy = FormField::from_fn(g, |_| Multivector::e(2, 2));
        let dx = FormField::from_fn(g, |_| Multivector::e(2, 1));
        assert!(restrict_and_integrate(&hyp, &dy).unwrap().norm() < 1e-14);
        let mut first = hyp.clone();
        first.sheets.truncate(1);
        assert!((restrict_and_integrate(&first, &dy).unwrap() - 1.0).norm() < 1e-14);
        assert!(restrict_and_integrate(&first, &dx).unwrap().norm() < 1e-14);
    }

    #[test]
    fn tilted_sheet_pullback() {
        // sheet x = 0.3 + 0.1 sin(2πy), where i*(cos(2πy) dx) = cos(2πy) s'(y) dy
        let g = Grid::new(2, 32).unwrap();
        let f = AnalyticLevel::new(2, |p: [f64; 3]| {
            let s = 0.3 + 0.1 * (2.0 * PI * p[1]).sin();
            let ds = 0.2 * PI * (2.0 * PI * p[1]).cos();
            let v = (2.0 * PI * (p[0] - s)).sin();
            let c = 2.0 * PI * (2.0 * PI * (p[0] - s)).cos();
            (v, [c, -c * ds, 0.0])
        });
        let hyp = extract_hypersurface(g, &f).unwrap();
        assert_eq!(hyp.sheets().len(), 2);
        let mut first = hyp.clone();
        first.sheets.retain(|s| s.orientation_sign == 1);
        let w = |p: [f64; 3]| Multivector::e(2, 1) * (2.0 * PI * p[1]).cos();
        // ∫ cos(2πy) s'(y) dy = 0.2π · 1/2
        let got = restrict_and_integrate_with(&first, w);
        assert!((got.re - 0.1 * PI).abs() < 1e-12, "{got}");
        let field = FormField::from_fn(g, w);
        let got2 = restrict_and_integrate(&first, &field).unwrap();
        assert!((got2 - got).norm() < 1e-12);
    }

    #[test]
    fn interpolation_is_exact_for_trig_polynomials() {
        let n = 16;
        let vals: Vec<f64> = (0..n).map(|i| (2.0 * PI * 3.0 * i as f64 / n as f64).cos()).collect();
        for &x in &[0.0, 0.013, 0.5, 0.77, 1.0 / 16.0] {
            let (v, d) = interpolate_periodic(&vals, x);
            assert!((v - (6.0 * PI * x).cos()).abs() < 1e-12);
            assert!((d + 6.0 * PI * (6.0 * PI * x).sin()).abs() < 1e-10);
        }
    }

    #[test]
    fn sampled_level_matches_analytic_roots() {
        let g = Grid::new(2, 32).unwrap();
        let fl = SampledLevel::from_fn(g, |p| 0.4 * (2.0 * PI * p[0]).sin() + 0.1 * (2.0 * PI * p[1]).cos() + 0.05).unwrap();
        let hyp = extract_hypersurface(g, &fl).unwrap();
        assert_eq!(hyp.sheets().len(), 2);
        for s in hyp.sheets() {
            for smp in &s.samples {
                let v = 0.4 * (2.0 * PI * smp.point[0]).sin() + 0.1 * (2.0 * PI * smp.point[1]).cos() + 0.05;
                assert!(v.abs() < 1e-10);
            }
        }
    }

    #[test]
    fn csv_is_stable() {
        let g = Grid::new(1, 16).unwrap();
        let w = FormField::from_fn(g, |p| Multivector::scalar(1, p[0]) + Multivector::e(1, 1));
        let a = w.to_csv();
        assert_eq!(a, w.to_csv());
        assert!(a.starts_with("x1,re_1,im_1,re_e1,im_e1\n"));
        assert_eq!(a.lines().count(), 17);
    }
}
