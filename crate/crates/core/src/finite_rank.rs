//! Finite-rank families of Hermitian matrices over the torus: the
//! superconnection `A_t = d + √t D` with trivial connection, its heat
//! supertrace through the Duhamel expansion, and the delta-current limit
//! on the crossing locus of one eigenvalue branch.

use std::f64::consts::PI;
use std::fmt;
use std::sync::{Arc, OnceLock};

use nalgebra::DMatrix;
use num_complex::Complex64;
use rayon::prelude::*;

use crate::currents::{check_t_list, limit_fit, pair, Current, LimitCheck};
use crate::error::{Error, Result};
use crate::grassmann::{exp_even, grade_select, Grade, Multivector};
use crate::torus_base::{
    extract_hypersurface, partial_derivative, periodic_sinc, FormField, Grid, Hypersurface, LevelFunction, SheetForm,
};

pub type Matrix = DMatrix<Complex64>;
pub type MatrixFn = Arc<dyn Fn([f64; 3]) -> Matrix + Send + Sync>;

/// An `r × r` matrix of differential forms on `T^m`.
#[derive(Clone, PartialEq)]
pub struct EndoForm {
    r: usize,
    dim: u8,
    entries: Vec<Multivector>,
}

impl EndoForm {
    pub fn zero(r: usize, dim: u8) -> Self {
        EndoForm { r, dim, entries: vec![Multivector::zero(dim); r * r] }
    }

    pub fn identity(r: usize, dim: u8) -> Self {
        let mut e = Self::zero(r, dim);
        for i in 0..r {
            e.entries[i * r + i] = Multivector::one(dim);
        }
        e
    }

    /// A matrix of functions, as a degree-0 element.
    pub fn from_matrix(m: &Matrix, dim: u8) -> Self {
        let r = m.nrows();
        let mut e = Self::zero(r, dim);
        for i in 0..r {
            for j in 0..r {
                e.entries[i * r + j] = Multivector::scalar(dim, m[(i, j)]);
            }
        }
        e
    }

    /// `Σ_j mats[j] e_{j+1}`.
    pub fn one_form(mats: &[Matrix], dim: u8) -> Self {
        let r = mats.first().map_or(0, |m| m.nrows());
        let mut e = Self::zero(r, dim);
        for (j, m) in mats.iter().enumerate() {
            let ej = Multivector::e(dim, j + 1);
            for a in 0..r {
                for b in 0..r {
                    e.entries[a * r + b] += ej * m[(a, b)];
                }
            }
        }
        e
    }

    pub fn rank(&self) -> usize {
        self.r
    }

    pub fn dim(&self) -> u8 {
        self.dim
    }

    pub fn get(&self, i: usize, j: usize) -> Multivector {
        self.entries[i * self.r + j]
    }

    pub fn set(&mut self, i: usize, j: usize, v: Multivector) {
        self.entries[i * self.r + j] = v;
    }

    pub fn trace(&self) -> Multivector {
        (0..self.r).fold(Multivector::zero(self.dim), |acc, i| acc + self.get(i, i))
    }

    pub fn scale(&self, c: Complex64) -> Self {
        EndoForm { r: self.r, dim: self.dim, entries: self.entries.iter().map(|v| *v * c).collect() }
    }

    /// `left · self · right` for scalar matrices.
    pub fn sandwich(&self, left: &Matrix, right: &Matrix) -> Self {
        let r = self.r;
        let mut tmp = Self::zero(r, self.dim);
        for a in 0..r {
            for b in 0..r {
                let mut s = Multivector::zero(self.dim);
                for c in 0..r {
                    s += self.get(c, b) * left[(a, c)];
                }
                tmp.entries[a * r + b] = s;
            }
        }
        let mut out = Self::zero(r, self.dim);
        for a in 0..r {
            for b in 0..r {
                let mut s = Multivector::zero(self.dim);
                for c in 0..r {
                    s += tmp.get(a, c) * right[(c, b)];
                }
                out.entries[a * r + b] = s;
            }
        }
        out
    }

    /// `u† · self · u`.
    pub fn conjugate(&self, u: &Matrix) -> Self {
        self.sandwich(&u.adjoint(), u)
    }

    /// Degree-0 block.
    pub fn degree_zero(&self) -> Matrix {
        Matrix::from_fn(self.r, self.r, |i, j| self.get(i, j).scalar_part())
    }

    pub fn grade_select(&self, which: Grade) -> Self {
        EndoForm { r: self.r, dim: self.dim, entries: self.entries.iter().map(|v| grade_select(v, which)).collect() }
    }

    pub fn max_abs_diff(&self, other: &Self) -> f64 {
        self.entries.iter().zip(&other.entries).map(|(a, b)| a.max_abs_diff(b)).fold(0.0, f64::max)
    }
}

impl std::ops::Add for &EndoForm {
    type Output = EndoForm;
    fn add(self, rhs: &EndoForm) -> EndoForm {
        assert_eq!((self.r, self.dim), (rhs.r, rhs.dim), "endomorphism forms of different shape");
        EndoForm { r: self.r, dim: self.dim, entries: self.entries.iter().zip(&rhs.entries).map(|(a, b)| *a + *b).collect() }
    }
}

impl std::ops::Mul for &EndoForm {
    type Output = EndoForm;
    fn mul(self, rhs: &EndoForm) -> EndoForm {
        assert_eq!((self.r, self.dim), (rhs.r, rhs.dim), "endomorphism forms of different shape");
        let r = self.r;
        let mut out = EndoForm::zero(r, self.dim);
        for a in 0..r {
            for b in 0..r {
                let mut s = Multivector::zero(self.dim);
                for c in 0..r {
                    s += self.get(a, c) * rhs.get(c, b);
                }
                out.entries[a * r + b] = s;
            }
        }
        out
    }
}

impl fmt::Debug for EndoForm {
    fn fmt(&self, f: &mut fmt::Formatter<'_>) -> fmt::Result {
        let mut l = f.debug_list();
        for a in 0..self.r {
            l.entry(&(0..self.r).map(|b| self.get(a, b).to_string()).collect::<Vec<_>>());
        }
        l.finish()
    }
}

/// A field of endomorphism-valued forms on the lattice.
#[derive(Debug, Clone, PartialEq)]
pub struct EndoFormField {
    pub grid: Grid,
    pub values: Vec<EndoForm>,
}

/// Divided difference `g[z_0, …, z_j]` of `g(z) = e^{-z}`.
pub fn exp_divided_difference(z: &[f64]) -> f64 {
    assert!(!z.is_empty(), "divided difference of no points");
    let mut v = z.to_vec();
    v.sort_by(|a, b| a.total_cmp(b));
    dd_sorted(&v)
}

fn dd_sorted(z: &[f64]) -> f64 {
    let j = z.len() - 1;
    if j == 0 {
        return (-z[0]).exp();
    }
    if z[j] - z[0] <= 1.0 {
        return dd_taylor(z);
    }
    (dd_sorted(&z[1..]) - dd_sorted(&z[..j])) / (z[j] - z[0])
}

/// Taylor expansion about the centroid: `e^{-c} Σ_{k≥j} (-1)^k/k! h_{k-j}(z - c)`
/// with `h_p` the complete homogeneous symmetric polynomials.
fn dd_taylor(z: &[f64]) -> f64 {
    let j = z.len() - 1;
    let c = z.iter().sum::<f64>() / z.len() as f64;
    const P: usize = 48;
    let mut h = [0.0f64; P];
    h[0] = 1.0;
    let mut first = true;
    for &zi in z {
        let w = zi - c;
        if first {
            for p in 1..P {
                h[p] = h[p - 1] * w;
            }
            first = false;
        } else {
            for p in 1..P {
                h[p] += w * h[p - 1];
            }
        }
    }
    let wmax = z.iter().map(|zi| (zi - c).abs()).fold(0.0, f64::max);
    let jfact = (1..=j).fold(1.0, |a, k| a * k as f64);
    let mut sum = 0.0;
    let mut fact = jfact;
    // |h_p| ≤ C(p+j, j) wmax^p bounds the remaining terms
    let mut bound = 1.0;
    for p in 0..P {
        let k = j + p;
        if p > 0 {
            fact *= k as f64;
            bound *= wmax * k as f64 / p as f64;
        }
        let term = h[p] / fact;
        sum += if k % 2 == 0 { term } else { -term };
        if bound / fact < 1e-18 / jfact {
            break;
        }
    }
    (-c).exp() * sum
}

fn for_each_path(r: usize, len: usize, mut f: impl FnMut(&[usize])) {
    let mut idx = vec![0usize; len];
    loop {
        f(&idx);
        let mut k = len;
        loop {
            if k == 0 {
                return;
            }
            k -= 1;
            idx[k] += 1;
            if idx[k] < r {
                break;
            }
            idx[k] = 0;
        }
    }
}

fn hermitian_eigen(s: &Matrix) -> Result<(Vec<f64>, Matrix)> {
    let scale = s.iter().map(|c| c.norm()).fold(1.0, f64::max);
    if (s - s.adjoint()).iter().any(|c| c.norm() > 1e-12 * scale) {
        return Err(Error::Contract("degree-0 part is not Hermitian".into()));
    }
    let e = s.clone().symmetric_eigen();
    let mut order: Vec<usize> = (0..s.nrows()).collect();
    order.sort_by(|&a, &b| e.eigenvalues[a].total_cmp(&e.eigenvalues[b]));
    let vals = order.iter().map(|&i| e.eigenvalues[i]).collect();
    let vecs = Matrix::from_fn(s.nrows(), s.nrows(), |i, j| e.eigenvectors[(i, order[j])]);
    Ok((vals, vecs))
}

/// `Σ_j Σ_{i_0..i_j} g[λ_{i_0}, …, λ_{i_j}] P_{i_0} N P_{i_1} ⋯ N P_{i_j}` in the
/// eigenbasis, where `n` is already expressed in that basis.
fn duhamel_eigenbasis(lams: &[f64], n: &EndoForm) -> EndoForm {
    let r = lams.len();
    let dim = n.dim();
    let mut out = EndoForm::zero(r, dim);
    for i in 0..r {
        out.set(i, i, Multivector::scalar(dim, (-lams[i]).exp()));
    }
    let mut zs = Vec::with_capacity(dim as usize + 1);
    for j in 1..=dim as usize {
        for_each_path(r, j + 1, |path| {
            let mut prod = Multivector::one(dim);
            for w in path.windows(2) {
                prod = prod * n.get(w[0], w[1]);
                if prod.is_zero() {
                    return;
                }
            }
            zs.clear();
            zs.extend(path.iter().map(|&i| lams[i]));
            let (a, b) = (path[0], path[j]);
            let v = out.get(a, b) + prod * exp_divided_difference(&zs);
            out.set(a, b, v);
        });
    }
    out
}

/// `exp(-(S + N))` for Hermitian `S` and `N` of positive form degree.
pub fn duhamel_exp(s: &Matrix, n: &EndoForm) -> Result<EndoForm> {
    if n.rank() != s.nrows() || s.nrows() != s.ncols() {
        return Err(Error::Config("matrix and endomorphism form have different ranks".into()));
    }
    if n.entries.iter().any(|v| v.scalar_part().norm() != 0.0) {
        return Err(Error::Contract("the nilpotent part must have no degree-0 component".into()));
    }
    let (lams, u) = hermitian_eigen(s)?;
    let inner = duhamel_eigenbasis(&lams, &n.conjugate(&u));
    Ok(inner.sandwich(&u, &u.adjoint()))
}

/// Closed index paths `i_0 → … → i_{j-1} → i_0` of length `j ≥ 1` with the
/// product `n_{i_0 i_1} ⋯ n_{i_{j-1} i_0}`, skipping vanishing products.
fn closed_paths(n: &EndoForm) -> Vec<(Vec<usize>, Multivector)> {
    let r = n.rank();
    let dim = n.dim();
    let mut out = Vec::new();
    for j in 1..=dim as usize {
        for_each_path(r, j, |path| {
            let mut prod = Multivector::one(dim);
            for k in 0..j {
                prod = prod * n.get(path[k], path[(k + 1) % j]);
                if prod.is_zero() {
                    return;
                }
            }
            out.push((path.to_vec(), prod));
        });
    }
    out
}

/// `tr exp(-(t D² + √t n))` in the eigenbasis of `D`, from its closed paths.
fn trace_from_paths(eig: &[f64], paths: &[(Vec<usize>, Multivector)], dim: u8, t: f64) -> Multivector {
    let lam = |i: usize| t * eig[i] * eig[i];
    let mut tr = Multivector::scalar(dim, eig.iter().map(|d| (-t * d * d).exp()).sum::<f64>());
    let mut zs = Vec::with_capacity(dim as usize + 1);
    for (path, prod) in paths {
        zs.clear();
        zs.extend(path.iter().map(|&i| lam(i)));
        zs.push(lam(path[0]));
        tr += *prod * (exp_divided_difference(&zs) * t.sqrt().powi(path.len() as i32));
    }
    tr
}

/// The default rank-2 field `[[sin 2πx, ε e^{2πiy}], [ε e^{-2πiy}, μ]]`.
pub fn default_field(epsilon: f64, mu: f64) -> MatrixFn {
    Arc::new(move |p: [f64; 3]| {
        let s = (2.0 * PI * p[0]).sin();
        let ph = Complex64::from_polar(epsilon, 2.0 * PI * p[1]);
        Matrix::from_row_slice(2, 2, &[Complex64::new(s, 0.0), ph, ph.conj(), Complex64::new(mu, 0.0)])
    })
}

struct GridSpectrum {
    /// Eigenvalues of `D`, `r` per lattice point.
    eig: Vec<f64>,
    /// `U† ∂_j D U`, `m r²` entries per lattice point, axis-major.
    dd: Vec<Complex64>,
}

/// A family of Hermitian matrices over the torus together with the crossing
/// locus of one of its eigenvalue branches.
pub struct FiniteRankFamily {
    grid: Grid,
    rank: usize,
    d_fn: MatrixFn,
    branch: usize,
    /// `∂_j D` sampled on the lattice: `[axis][entry][point]`.
    dd_grid: Vec<Vec<Vec<Complex64>>>,
    hyp: Hypersurface,
    spectrum: OnceLock<GridSpectrum>,
}

impl fmt::Debug for FiniteRankFamily {
    fn fmt(&self, f: &mut fmt::Formatter<'_>) -> fmt::Result {
        f.debug_struct("FiniteRankFamily").field("grid", &self.grid).field("rank", &self.rank).field("branch", &self.branch).finish()
    }
}

struct BranchLevel<'a>(&'a FiniteRankFamily);

impl LevelFunction for BranchLevel<'_> {
    fn dim(&self) -> u8 {
        self.0.grid.m()
    }
    fn eval(&self, p: [f64; 3]) -> (f64, [f64; 3]) {
        let fam = self.0;
        let d = (fam.d_fn)(p);
        let (vals, u) = hermitian_eigen(&d).expect("checked Hermitian on construction");
        let ders = fam.derivatives_at(p);
        let v = u.column(fam.branch);
        let mut g = [0.0; 3];
        for (j, dj) in ders.iter().enumerate() {
            g[j] = (v.adjoint() * dj * v)[(0, 0)].re;
        }
        (vals[fam.branch], g)
    }
}

impl FiniteRankFamily {
    /// The default family on an `m = 2` or `m = 3` grid, crossing along the lowest branch.
    pub fn default_family(grid: Grid, epsilon: f64, mu: f64) -> Result<Self> {
        if grid.m() < 2 {
            return Err(Error::Config("the default finite-rank family needs m >= 2".into()));
        }
        if !(epsilon.is_finite() && mu.is_finite()) {
            return Err(Error::Config("epsilon and mu must be finite".into()));
        }
        Self::new(grid, 2, default_field(epsilon, mu), 0)
    }

    pub fn new(grid: Grid, rank: usize, d_fn: MatrixFn, branch: usize) -> Result<Self> {
        if rank == 0 || branch >= rank {
            return Err(Error::Config(format!("branch {branch} out of range for rank {rank}")));
        }
        let m = grid.m() as usize;
        let samples: Vec<Matrix> = (0..grid.len()).into_par_iter().map(|i| d_fn(grid.point(i))).collect();
        if samples.iter().any(|s| s.nrows() != rank || s.ncols() != rank) {
            return Err(Error::Config(format!("matrix field is not {rank}x{rank}")));
        }
        if samples.iter().any(|s| (s - s.adjoint()).iter().any(|c| c.norm() > 1e-12)) {
            return Err(Error::Config("matrix field is not Hermitian".into()));
        }
        let dd_grid: Vec<Vec<Vec<Complex64>>> = (0..m)
            .map(|axis| {
                (0..rank * rank)
                    .map(|e| {
                        let chan: Vec<Complex64> = samples.iter().map(|s| s[(e / rank, e % rank)]).collect();
                        partial_derivative(grid, &chan, axis)
                    })
                    .collect()
            })
            .collect();
        let mut fam = FiniteRankFamily {
            grid,
            rank,
            d_fn,
            branch,
            dd_grid,
            hyp: Hypersurface::empty(grid),
            spectrum: OnceLock::new(),
        };
        fam.hyp = extract_hypersurface(grid, &BranchLevel(&fam))?;
        fam.validate_crossing(&samples)?;
        Ok(fam)
    }

    fn validate_crossing(&self, samples: &[Matrix]) -> Result<()> {
        let spectra: Vec<Vec<f64>> = samples.par_iter().map(|s| hermitian_eigen(s).map(|e| e.0)).collect::<Result<_>>()?;
        for b in (0..self.rank).filter(|&b| b != self.branch) {
            let pos = spectra.iter().any(|s| s[b] > 0.0);
            let neg = spectra.iter().any(|s| s[b] < 0.0);
            if pos && neg {
                return Err(Error::Config(format!("eigenvalue branch {b} also crosses zero")));
            }
        }
        for sheet in self.hyp.sheets() {
            for smp in &sheet.samples {
                let (vals, _) = hermitian_eigen(&(self.d_fn)(smp.point))?;
                let (_, g) = BranchLevel(self).eval(smp.point);
                let gn = g.iter().map(|x| x * x).sum::<f64>().sqrt();
                if gn < 1e-3 {
                    return Err(Error::Transversality { point: smp.point, slope: gn });
                }
                if vals.iter().enumerate().any(|(b, v)| b != self.branch && v.abs() < 0.5) {
                    return Err(Error::Config(format!("spectral gap below 0.5 at the crossing point {:?}", smp.point)));
                }
            }
        }
        Ok(())
    }

    pub fn grid(&self) -> Grid {
        self.grid
    }

    pub fn rank(&self) -> usize {
        self.rank
    }

    pub fn hypersurface(&self) -> &Hypersurface {
        &self.hyp
    }

    pub fn field_at(&self, p: [f64; 3]) -> Matrix {
        (self.d_fn)(p)
    }

    /// Eigenvalues (ascending) and eigenvectors of `D(p)`.
    pub fn eigen_at(&self, p: [f64; 3]) -> Result<(Vec<f64>, Matrix)> {
        hermitian_eigen(&(self.d_fn)(p))
    }

    fn on_lattice(&self, x: f64) -> Option<usize> {
        let n = self.grid.n();
        let xn = x * n as f64;
        let r = xn.round();
        ((xn - r).abs() < 1e-12).then(|| (r as i64).rem_euclid(n as i64) as usize)
    }

    fn assemble(&self, f: impl Fn(usize) -> Complex64) -> Matrix {
        Matrix::from_fn(self.rank, self.rank, |a, b| f(a * self.rank + b))
    }

    /// Spectral derivatives `∂_j D(p)`, `j = 1..m`.
    pub fn derivatives_at(&self, p: [f64; 3]) -> Vec<Matrix> {
        let g = self.grid;
        let m = g.m() as usize;
        let n = g.n();
        let lat: Vec<Option<usize>> = (0..m).map(|a| self.on_lattice(p[a])).collect();
        if lat[1..].iter().all(|l| l.is_some()) {
            let mi = |i0: usize| {
                let mut mi = [0usize; 3];
                mi[0] = i0;
                for a in 1..m {
                    mi[a] = lat[a].unwrap();
                }
                g.flat_index(mi)
            };
            if let Some(i0) = lat[0] {
                let idx = mi(i0);
                return (0..m).map(|a| self.assemble(|e| self.dd_grid[a][e][idx])).collect();
            }
            let base = mi(0);
            let w: Vec<f64> = (0..n).map(|i| periodic_sinc(n, p[0] - i as f64 / n as f64).0).collect();
            return (0..m)
                .map(|a| {
                    self.assemble(|e| {
                        let ch = &self.dd_grid[a][e];
                        w.iter().enumerate().map(|(i, wi)| ch[base + i] * *wi).sum()
                    })
                })
                .collect();
        }
        // off the lattice lines: differentiate the interpolant of samples along each axis
        let dw: Vec<f64> = (0..n).map(|i| periodic_sinc(n, -(i as f64) / n as f64).1).collect();
        (0..m)
            .map(|a| {
                let mut acc = Matrix::zeros(self.rank, self.rank);
                for (i, wi) in dw.iter().enumerate().skip(1) {
                    let mut q = p;
                    q[a] += i as f64 / n as f64;
                    acc += (self.d_fn)(q) * Complex64::new(*wi, 0.0);
                }
                acc
            })
            .collect()
    }

    /// `A_t² = t D² + √t dD` at a point.
    pub fn a_t_squared(&self, p: [f64; 3], t: f64) -> Result<EndoForm> {
        check_t(t)?;
        let d = (self.d_fn)(p);
        let s = EndoForm::from_matrix(&(&d * &d * Complex64::new(t, 0.0)), self.grid.m());
        let n = EndoForm::one_form(&self.derivatives_at(p), self.grid.m()).scale(Complex64::new(t.sqrt(), 0.0));
        Ok(&s + &n)
    }

    pub fn a_t_squared_field(&self, t: f64) -> Result<EndoFormField> {
        check_t(t)?;
        let values = (0..self.grid.len()).into_par_iter().map(|i| self.a_t_squared(self.grid.point(i), t)).collect::<Result<_>>()?;
        Ok(EndoFormField { grid: self.grid, values })
    }

    /// `exp(-A_t²)` at a point.
    pub fn heat_operator(&self, p: [f64; 3], t: f64) -> Result<EndoForm> {
        let a = self.a_t_squared(p, t)?;
        let n = a.grade_select(Grade::Degree(1));
        duhamel_exp(&a.degree_zero(), &n)
    }

    fn traces(&self, eig: &[f64], dd: &[Matrix], t: f64) -> (Multivector, Multivector) {
        let dim = self.grid.m();
        let paths = closed_paths(&EndoForm::one_form(dd, dim));
        let tr = trace_from_paths(eig, &paths, dim, t);
        (grade_select(&tr, Grade::Even), grade_select(&tr, Grade::Odd))
    }

    /// `(tr^ev, tr^odd)` of `exp(-A_t²)` at a point.
    pub fn super_heat_trace(&self, p: [f64; 3], t: f64) -> Result<(Multivector, Multivector)> {
        check_t(t)?;
        let (eig, u) = self.eigen_at(p)?;
        let dd: Vec<Matrix> = self.derivatives_at(p).iter().map(|m| u.adjoint() * m * &u).collect();
        Ok(self.traces(&eig, &dd, t))
    }

    fn grid_spectrum(&self) -> &GridSpectrum {
        self.spectrum.get_or_init(|| {
            let m = self.grid.m() as usize;
            let r = self.rank;
            let per: Vec<(Vec<f64>, Vec<Complex64>)> = (0..self.grid.len())
                .into_par_iter()
                .map(|idx| {
                    let (eig, u) = self.eigen_at(self.grid.point(idx)).expect("checked Hermitian on construction");
                    let mut dd = Vec::with_capacity(m * r * r);
                    for a in 0..m {
                        let t = u.adjoint() * self.assemble(|e| self.dd_grid[a][e][idx]) * &u;
                        for e in 0..r * r {
                            dd.push(t[(e / r, e % r)]);
                        }
                    }
                    (eig, dd)
                })
                .collect();
            let mut eig = Vec::with_capacity(self.grid.len() * r);
            let mut dd = Vec::with_capacity(self.grid.len() * m * r * r);
            for (e, d) in per {
                eig.extend(e);
                dd.extend(d);
            }
            GridSpectrum { eig, dd }
        })
    }

    fn lattice_paths(&self, idx: usize) -> (&[f64], Vec<(Vec<usize>, Multivector)>) {
        let m = self.grid.m() as usize;
        let r = self.rank;
        let sp = self.grid_spectrum();
        let block = &sp.dd[idx * m * r * r..(idx + 1) * m * r * r];
        let dd: Vec<Matrix> = (0..m).map(|a| self.assemble(|e| block[a * r * r + e])).collect();
        (&sp.eig[idx * r..(idx + 1) * r], closed_paths(&EndoForm::one_form(&dd, self.grid.m())))
    }

    /// `(tr^ev, tr^odd)` of `exp(-A_t²)` on the lattice.
    pub fn heat_trace_fields(&self, t: f64) -> Result<(FormField, FormField)> {
        check_t(t)?;
        let dim = self.grid.m();
        let vals: Vec<(Multivector, Multivector)> = (0..self.grid.len())
            .into_par_iter()
            .map(|idx| {
                let (eig, paths) = self.lattice_paths(idx);
                let tr = trace_from_paths(eig, &paths, dim, t);
                (grade_select(&tr, Grade::Even), grade_select(&tr, Grade::Odd))
            })
            .collect();
        let (even, odd): (Vec<_>, Vec<_>) = vals.into_iter().unzip();
        Ok((FormField::new(self.grid, even)?, FormField::new(self.grid, odd)?))
    }

    /// `∫_B tr^odd(e^{-A_t²}) ∧ ω` for every `t` and `ω`, as `[ω][t]`, without
    /// storing the trace fields.
    pub fn odd_trace_pairings(&self, omegas: &[FormField], t_list: &[f64]) -> Result<Vec<Vec<Complex64>>> {
        for &t in t_list {
            check_t(t)?;
        }
        if omegas.iter().any(|w| w.grid() != self.grid) {
            return Err(Error::Config("test form and family live on different grids".into()));
        }
        let dim = self.grid.m();
        let top = (1usize << dim) - 1;
        let len = self.grid.len();
        const CHUNK: usize = 4096;
        let zero = vec![vec![Complex64::new(0.0, 0.0); t_list.len()]; omegas.len()];
        let partial: Vec<Vec<Vec<Complex64>>> = (0..len.div_ceil(CHUNK))
            .into_par_iter()
            .map(|c| {
                let mut acc = zero.clone();
                for idx in c * CHUNK..((c + 1) * CHUNK).min(len) {
                    let (eig, paths) = self.lattice_paths(idx);
                    for (k, &t) in t_list.iter().enumerate() {
                        let odd = grade_select(&trace_from_paths(eig, &paths, dim, t), Grade::Odd);
                        for (w, row) in omegas.iter().zip(acc.iter_mut()) {
                            row[k] += (odd * w.get(idx)).get(top);
                        }
                    }
                }
                acc
            })
            .collect();
        let mut total = zero;
        for part in partial {
            for (row, prow) in total.iter_mut().zip(part) {
                for (a, b) in row.iter_mut().zip(prow) {
                    *a += b;
                }
            }
        }
        Ok(total.into_iter().map(|row| row.into_iter().map(|v| v / len as f64).collect()).collect())
    }

    pub fn odd_trace_field(&self, t: f64) -> Result<FormField> {
        Ok(self.heat_trace_fields(t)?.1)
    }

    /// Curvature `tr(P dP ∧ dP)` of the kernel line at a crossing point.
    pub fn kernel_curvature(&self, p: [f64; 3]) -> Result<Multivector> {
        let dim = self.grid.m();
        let (vals, u) = self.eigen_at(p)?;
        let k = self.branch;
        let proj = |b: usize| {
            let c = u.column(b);
            &c * c.adjoint()
        };
        let pk = proj(k);
        let dp: Vec<Matrix> = self
            .derivatives_at(p)
            .iter()
            .map(|dj| {
                let mut acc = Matrix::zeros(self.rank, self.rank);
                for b in (0..self.rank).filter(|&b| b != k) {
                    let pb = proj(b);
                    acc += (&pb * dj * &pk + &pk * dj * &pb) / Complex64::new(vals[k] - vals[b], 0.0);
                }
                acc
            })
            .collect();
        let mut curv = Multivector::zero(dim);
        for (a, da) in dp.iter().enumerate() {
            for (b, db) in dp.iter().enumerate() {
                if a != b {
                    curv += Multivector::blade(dim, &[a + 1, b + 1], (&pk * da * db).trace());
                }
            }
        }
        Ok(curv)
    }

    fn kernel_exponential(&self, scale: Complex64) -> Result<SheetForm> {
        let hyp = &self.hyp;
        let values = hyp
            .sheets()
            .iter()
            .map(|s| {
                s.samples
                    .par_iter()
                    .map(|smp| exp_even(&(-hyp.pullback(smp, &self.kernel_curvature(smp.point)?) * scale)))
                    .collect::<Result<Vec<_>>>()
            })
            .collect::<Result<Vec<_>>>()?;
        Ok(SheetForm { values })
    }

    /// `tr exp(-(∇^ker)²)` on the crossing locus, `∇^ker = P d P`.
    pub fn kernel_heat_form(&self) -> Result<SheetForm> {
        self.kernel_exponential(Complex64::new(1.0, 0.0))
    }

    /// `ch(ker) = tr exp(-(∇^ker)²/2πi)` on the crossing locus.
    pub fn chern_kernel_form(&self) -> Result<SheetForm> {
        self.kernel_exponential(Complex64::new(0.0, 2.0 * PI).inv())
    }
}

fn check_t(t: f64) -> Result<()> {
    if t > 0.0 && t.is_finite() {
        Ok(())
    } else {
        Err(Error::Contract(format!("t must be positive, got {t}")))
    }
}

/// Compares `∫_B tr^odd(e^{-A_t²}) ∧ ω` with `-√π ∫_{B₀} tr exp(-(∇^ker)²) ∧ i*ω`.
pub fn crossing_limit_check(fam: &FiniteRankFamily, omega: &FormField, t_list: &[f64]) -> Result<LimitCheck> {
    Ok(crossing_limit_checks(fam, std::slice::from_ref(omega), t_list)?.remove(0))
}

/// [`crossing_limit_check`] for several test forms, sharing the heat traces.
pub fn crossing_limit_checks(fam: &FiniteRankFamily, omegas: &[FormField], t_list: &[f64]) -> Result<Vec<LimitCheck>> {
    if fam.hypersurface().is_empty() {
        return Err(Error::Config("the eigenvalue branch does not cross zero".into()));
    }
    check_t_list(t_list)?;
    let delta = Current::Delta { hyp: fam.hypersurface().clone(), form: fam.kernel_heat_form()? };
    let targets = omegas.iter().map(|w| Ok(-pair(&delta, w)? * PI.sqrt())).collect::<Result<Vec<_>>>()?;
    let pairings = fam.odd_trace_pairings(omegas, t_list)?;
    Ok(pairings.into_iter().zip(targets).map(|(p, tg)| limit_fit(t_list.to_vec(), p, tg)).collect())
}
