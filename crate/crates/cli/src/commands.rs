//! The checks behind each command.

use std::f64::consts::PI;

use etalab::bernoulli::{bernoulli_poly, fourier_partial_sum, resolved_sign_convention};
use etalab::circle_family::{representative_raw, CircleFamily, FamilyConfig, Holonomy};
use etalab::currents::{
    fiber_chern, index_identity_check, large_time_limit_checks, pair, Current, LimitCheck, TestFormBasket,
};
use etalab::eta::{closed_form_at, compute_eta, eta_hat, resolve_sign_convention, transgression_residual};
use etalab::finite_rank::{crossing_limit_checks, default_field, duhamel_exp, EndoForm, FiniteRankFamily, Matrix};
use etalab::torus_base::{fmt_num, hypersurface_csv};
use etalab::{FormField, Grid, Multivector};
use num_complex::Complex64;
use rand::{Rng, SeedableRng};
use rand_chacha::ChaCha8Rng;
use rayon::prelude::*;

use crate::config::{Command, RunConfig};
use crate::report::{self, Row};
use crate::CliError;

/// Rows of one command together with the files it produces, in output order.
#[derive(Debug, Clone, Default)]
pub struct Outcome {
    pub rows: Vec<Row>,
    pub artifacts: Vec<(String, String)>,
}

impl Outcome {
    pub fn passed(&self) -> bool {
        self.rows.iter().all(Row::passed)
    }

    fn finish(mut self, command: Command) -> Self {
        self.artifacts.insert(0, (format!("{}.csv", command.name()), report::to_csv(&self.rows)));
        self
    }
}

pub fn run_command(command: Command, cfg: &RunConfig, seed: u64) -> Result<Outcome, CliError> {
    cfg.validate(command)?;
    let out = match command {
        Command::EtaTable => eta_table(cfg)?,
        Command::ClosedFormXcheck => closed_form_xcheck(cfg)?,
        Command::TransgressionCheck => transgression_check(cfg)?,
        Command::SmallTLimit => small_t_limit(cfg)?,
        Command::LargeTLimit => large_t_limit(cfg, seed)?,
        Command::IndexIdentity => index_identity(cfg, seed)?,
        Command::PoissonXcheck => poisson_xcheck(cfg, seed)?,
        Command::FiniteRankDemo => finite_rank_demo(cfg, seed)?,
    };
    Ok(out.finish(command))
}

fn family(cfg: &RunConfig) -> Result<CircleFamily, CliError> {
    Ok(CircleFamily::new(cfg.family_config())?)
}

/// `h^m Σ |coefficient|` over the grid and all components.
pub fn l1_norm(f: &FormField) -> f64 {
    let total: f64 = f.values().iter().map(|v| v.terms().map(|(_, c)| c.norm()).sum::<f64>()).sum();
    total / f.grid().len() as f64
}

pub fn eta_table(cfg: &RunConfig) -> Result<Outcome, CliError> {
    let fam = family(cfg)?;
    let res = compute_eta(&fam, cfg.tol.eta)?;
    let mut out = Outcome::default();
    let worst_tail = res.tail_bound.iter().cloned().fold(0.0, f64::max);
    out.rows.push(Row::error("tail_bound", "-", Some(res.t_max), worst_tail, cfg.tol.eta));

    let fine_grid = Grid::new(cfg.m, 2 * cfg.n)?;
    let fine = CircleFamily::new(cfg.family_config_on(fine_grid))?;
    let fine_res = compute_eta(&fine, cfg.tol.eta)?;
    let (coarse_l1, fine_l1) = (l1_norm(&res.eta_hat), l1_norm(&fine_res.eta_hat));
    let mut l1 = Row::compare(
        "l1_refinement",
        &format!("n={}->{}", cfg.n, 2 * cfg.n),
        None,
        Complex64::new(coarse_l1, 0.0),
        Complex64::new(fine_l1, 0.0),
        cfg.tol.l1,
    );
    l1.residual /= fine_l1;
    out.rows.push(l1);

    out.artifacts.push(("eta_table.csv".into(), res.to_csv()));
    out.artifacts.push(("hypersurface.csv".into(), hypersurface_csv(fam.hypersurface())));
    Ok(out)
}

/// `max_{x} |g_n(x; N) + iⁿ B_{n+1}(x)/(n+1)!|` for `n = 0..3` on `x = 0.05, …, 0.95`.
pub fn bernoulli_rows(cfg: &RunConfig) -> Result<Vec<Row>, CliError> {
    let mut rows = Vec::new();
    for n in 0..4u32 {
        let fact: f64 = (1..=n + 1).map(f64::from).product();
        let mut worst = 0.0f64;
        for j in 1..=19 {
            let x = 0.05 * j as f64;
            let poly = bernoulli_poly(n as usize + 1, x)?;
            let target = Complex64::new(0.0, 1.0).powu(n) * (poly / fact);
            worst = worst.max((fourier_partial_sum(n, x, cfg.bernoulli_terms) + target).norm());
        }
        rows.push(Row::error("bernoulli_fourier", &format!("n={n}"), None, worst, cfg.tol.bernoulli));
    }
    Ok(rows)
}

pub fn closed_form_xcheck(cfg: &RunConfig) -> Result<Outcome, CliError> {
    let mut out = Outcome::default();
    let pinned = resolved_sign_convention();
    let resolved = resolve_sign_convention(1e-10)?;
    out.rows.push(Row::compare(
        "sign_convention",
        "fixture",
        None,
        Complex64::new(resolved.value(), 0.0),
        Complex64::new(pinned.value(), 0.0),
        0.0,
    ));

    let fam = family(cfg)?;
    let res = compute_eta(&fam, cfg.tol.eta)?;
    let grid = fam.grid();
    let diffs: Vec<f64> = (0..grid.len())
        .into_par_iter()
        .map(|i| closed_form_at(&fam, grid.point(i), pinned).map(|(c, _)| c.max_abs_diff(&res.eta_hat.get(i))))
        .collect::<Result<_, _>>()?;
    out.rows.push(Row::error("closed_form", "eta_hat", None, diffs.iter().cloned().fold(0.0, f64::max), cfg.tol.closed_form));

    let winding = CircleFamily::new(FamilyConfig::new(Grid::new(1, 16)?, Holonomy::Winding))?;
    let (q, _) = eta_hat(&winding, [0.25, 0.0, 0.0], cfg.tol.eta)?;
    out.rows.push(Row::compare("degree0_value", "a=1/4", None, q.scalar_part(), Complex64::new(0.25, 0.0), cfg.tol.point_value));

    for (si, sheet) in fam.hypersurface().sheets().iter().enumerate() {
        if let Some(smp) = sheet.samples.first() {
            let (v, _) = eta_hat(&fam, smp.point, cfg.tol.eta)?;
            out.rows.push(Row::compare(
                "degree0_on_crossing",
                &format!("sheet {si}"),
                None,
                v.scalar_part(),
                Complex64::new(0.0, 0.0),
                cfg.tol.point_value,
            ));
        }
    }
    out.rows.extend(bernoulli_rows(cfg)?);
    Ok(out)
}

pub fn transgression_check(cfg: &RunConfig) -> Result<Outcome, CliError> {
    let fam = family(cfg)?;
    let mut out = Outcome::default();
    for &s in &cfg.times.transgression_s {
        for &t in &cfg.times.transgression_t {
            let r = transgression_residual(&fam, s, t, cfg.band)?;
            out.rows.push(Row::error("transgression", &format!("s={s}"), Some(t), r, cfg.tol.transgression));
        }
    }
    Ok(out)
}

pub fn small_t_limit(cfg: &RunConfig) -> Result<Outcome, CliError> {
    let fam = family(cfg)?;
    let t = cfg.times.small_t;
    let grid = fam.grid();
    let scale = 1.0 / PI.sqrt();
    let diffs: Vec<f64> = (0..grid.len())
        .into_par_iter()
        .map(|i| {
            let p = grid.point(i);
            let (_, odd) = fam.heat_trace(p, t)?;
            let limit = -(fam.df(p) * fam.exp_minus_curvature(p));
            Ok((odd * scale).max_abs_diff(&limit))
        })
        .collect::<Result<_, etalab::Error>>()?;
    let mut out = Outcome::default();
    out.rows.push(Row::error("small_t_limit", "odd_chern", Some(t), diffs.iter().cloned().fold(0.0, f64::max), cfg.tol.small_t));
    Ok(out)
}

/// A random form of degree `m − 1` with trigonometric coefficients of wave number at most 2.
pub fn random_form(grid: Grid, seed: u64) -> (String, FormField) {
    let m = grid.m() as usize;
    let mut rng = ChaCha8Rng::seed_from_u64(seed);
    let blades: Vec<Vec<usize>> = (1..=m).rev().map(|skip| (1..=m).filter(|&a| a != skip).collect()).collect();
    let coeffs: Vec<(f64, Vec<[f64; 2]>)> = blades
        .iter()
        .map(|_| (rng.random_range(-1.0..1.0), (0..2 * m).map(|_| [rng.random_range(-1.0..1.0), rng.random_range(-1.0..1.0)]).collect()))
        .collect();
    let field = FormField::from_fn(grid, |p| {
        let mut v = Multivector::zero(m as u8);
        for (blade, (c0, waves)) in blades.iter().zip(&coeffs) {
            let mut c = *c0;
            for (j, [a, b]) in waves.iter().enumerate() {
                let arg = 2.0 * PI * (j % 2 + 1) as f64 * p[j / 2];
                c += a * arg.cos() + b * arg.sin();
            }
            v += Multivector::blade(m as u8, blade, c);
        }
        v
    });
    (format!("random(seed={seed})"), field)
}

fn limit_rows(out: &mut Outcome, cfg: &RunConfig, prefix: &str, names: &[String], checks: &[LimitCheck], off: usize) {
    for (k, (name, c)) in names.iter().zip(checks).enumerate() {
        if k == off {
            out.rows.push(Row::negative("off_crossing_decay", name, c.pairing_loglinear_slope));
        } else {
            out.rows.push(Row::window(&format!("{prefix}_rate"), name, c.loglog_slope, cfg.tol.rate_min, cfg.tol.rate_max));
            out.rows.push(Row::at_most(&format!("{prefix}_rate_bound"), name, c.loglog_slope, cfg.tol.rate_max));
        }
    }
    let mut csv = String::from("omega,t,pairing_re,pairing_im,target_re,target_im,error\n");
    for (name, c) in names.iter().zip(checks) {
        for ((t, p), e) in c.times.iter().zip(&c.pairings).zip(&c.errors) {
            let cells = [fmt_num(*t), fmt_num(p.re), fmt_num(p.im), fmt_num(c.target.re), fmt_num(c.target.im), fmt_num(*e)];
            csv.push_str(&format!("\"{name}\",{}\n", cells.join(",")));
        }
    }
    out.artifacts.push(("residuals.csv".into(), csv));
}

fn limit_basket(grid: Grid, seed: u64) -> (Vec<String>, Vec<FormField>, usize) {
    let mut basket = TestFormBasket::default_for(grid);
    basket.entries.push(random_form(grid, seed));
    let off = basket.entries.len();
    basket.entries.push(TestFormBasket::off_crossing(grid));
    let (names, forms) = basket.entries.into_iter().unzip();
    (names, forms, off)
}

pub fn large_t_limit(cfg: &RunConfig, seed: u64) -> Result<Outcome, CliError> {
    let fam = family(cfg)?;
    let (names, forms, off) = limit_basket(fam.grid(), seed);
    let checks = large_time_limit_checks(&fam, &forms, &cfg.large_times())?;
    let mut out = Outcome::default();
    limit_rows(&mut out, cfg, "large_t", &names, &checks, off);
    Ok(out)
}

pub fn index_identity(cfg: &RunConfig, seed: u64) -> Result<Outcome, CliError> {
    let fam = family(cfg)?;
    let res = compute_eta(&fam, cfg.tol.eta)?;
    let mut basket = TestFormBasket::default_for(fam.grid());
    basket.entries.push(random_form(fam.grid(), seed));
    let mut out = Outcome::default();
    let mut csv = String::from("omega,d_eta_re,d_eta_im,fiber_re,fiber_im,delta_re,delta_im,residual\n");
    for it in index_identity_check(&fam, &res.eta_tilde, &basket)? {
        let mut row = Row::compare("index_identity", &it.name, None, it.d_eta, it.fiber + it.delta, cfg.tol.index);
        row.residual = it.residual;
        out.rows.push(row);
        let cells = [it.d_eta.re, it.d_eta.im, it.fiber.re, it.fiber.im, it.delta.re, it.delta.im, it.residual].map(fmt_num);
        csv.push_str(&format!("\"{}\",{}\n", it.name, cells.join(",")));
    }
    out.artifacts.push(("index_identity.csv".into(), csv));
    if fam.dim() == 1 {
        out.rows.extend(spectral_flow_rows(cfg, &fam)?);
    }
    Ok(out)
}

/// Net number of eigenvalues crossing zero upward once around the loop, read
/// off from the lifted holonomy.
pub fn spectral_flow(fam: &CircleFamily) -> f64 {
    let grid = fam.grid();
    let n = grid.n();
    let lift: f64 = (0..n).map(|i| representative_raw(fam.holonomy(grid.point((i + 1) % n)) - fam.holonomy(grid.point(i)))).sum();
    lift.round()
}

fn spectral_flow_rows(cfg: &RunConfig, fam: &CircleFamily) -> Result<Vec<Row>, CliError> {
    let sf = spectral_flow(fam);
    let one = FormField::from_fn(fam.grid(), |_| Multivector::one(1));
    let fiber = pair(&Current::l1(fiber_chern(fam)?), &one)?;
    let delta = pair(&Current::delta_one(fam.hypersurface()), &one)?;
    Ok(vec![
        Row::compare("spectral_flow", "fiber", None, fiber, Complex64::new(-sf, 0.0), cfg.tol.spectral_flow),
        Row::compare("spectral_flow", "crossing", None, delta, Complex64::new(sf, 0.0), cfg.tol.spectral_flow),
    ])
}

fn random_points(m: u8, count: usize, seed: u64) -> Vec<[f64; 3]> {
    let mut rng = ChaCha8Rng::seed_from_u64(seed);
    (0..count)
        .map(|_| {
            let mut p = [0.0; 3];
            for x in p.iter_mut().take(m as usize) {
                *x = rng.random_range(0.0..1.0);
            }
            p
        })
        .collect()
}

pub fn poisson_xcheck(cfg: &RunConfig, seed: u64) -> Result<Outcome, CliError> {
    let fam = family(cfg)?;
    let points = random_points(cfg.m, cfg.poisson_points, seed);
    let mut out = Outcome::default();
    for &t in &cfg.times.poisson {
        let diffs: Vec<[f64; 2]> = points
            .par_iter()
            .map(|&p| {
                let (de, dodd) = fam.heat_trace_direct(p, t)?;
                let (qe, qodd) = fam.heat_trace_dual(p, t)?;
                let trace = de.max_abs_diff(&qe).max(dodd.max_abs_diff(&qodd));
                let integrand = fam.eta_integrand_direct(p, t)?.max_abs_diff(&fam.eta_integrand_dual(p, t)?);
                Ok([trace, integrand])
            })
            .collect::<Result<_, etalab::Error>>()?;
        let worst = |k: usize| diffs.iter().map(|d| d[k]).fold(0.0, f64::max);
        out.rows.push(Row::error("poisson_heat_trace", "direct-dual", Some(t), worst(0), cfg.tol.poisson));
        out.rows.push(Row::error("poisson_eta_integrand", "direct-dual", Some(t), worst(1), cfg.tol.poisson));
    }
    Ok(out)
}

fn random_hermitian(rng: &mut ChaCha8Rng, r: usize) -> Matrix {
    let a = Matrix::from_fn(r, r, |_, _| Complex64::new(rng.random_range(-1.0..1.0), rng.random_range(-1.0..1.0)));
    (&a + a.adjoint()) * Complex64::new(0.5, 0.0)
}

fn random_unitary(rng: &mut ChaCha8Rng, r: usize) -> Matrix {
    let h = random_hermitian(rng, r);
    (h * Complex64::new(0.0, 1.0)).exp()
}

/// `Σ_k (−N)^k / k!`, finite because `N` has positive form degree.
fn nilpotent_exp(n: &EndoForm) -> EndoForm {
    let mut term = EndoForm::identity(n.rank(), n.dim());
    let mut total = term.clone();
    let minus_n = n.scale(Complex64::new(-1.0, 0.0));
    for k in 1..=n.dim() as usize {
        term = (&term * &minus_n).scale(Complex64::new(1.0 / k as f64, 0.0));
        total = &total + &term;
    }
    total
}

/// `exp(−(S+N))` against `exp(−S) Σ(−N)^k/k!` for `N` built from powers of `S`.
pub fn duhamel_commuting_residual(seed: u64) -> Result<f64, CliError> {
    let mut rng = ChaCha8Rng::seed_from_u64(seed);
    let (r, dim) = (3, 3u8);
    let mut worst = 0.0f64;
    for _ in 0..8 {
        let s = random_hermitian(&mut rng, r);
        let ident = Matrix::identity(r, r);
        let mats: Vec<Matrix> = (0..dim).map(|_| &s * Complex64::new(rng.random_range(-1.0..1.0), 0.0) + &ident * Complex64::new(rng.random_range(-1.0..1.0), 0.0)).collect();
        let mut n = EndoForm::one_form(&mats, dim);
        let two = Multivector::blade(dim, &[1, 2], Complex64::new(rng.random_range(-1.0..1.0), rng.random_range(-1.0..1.0)))
            + Multivector::blade(dim, &[2, 3], rng.random_range(-1.0..1.0));
        let s2 = &s * &s;
        for i in 0..r {
            for j in 0..r {
                n.set(i, j, n.get(i, j) + two * s2[(i, j)]);
            }
        }
        let expected = &EndoForm::from_matrix(&(-&s).exp(), dim) * &nilpotent_exp(&n);
        worst = worst.max(duhamel_exp(&s, &n)?.max_abs_diff(&expected));
    }
    Ok(worst)
}

/// `exp(−(USU† + UNU†))` against `U exp(−(S+N)) U†` for generic `S`, `N`.
pub fn duhamel_unitary_residual(seed: u64) -> Result<f64, CliError> {
    let mut rng = ChaCha8Rng::seed_from_u64(seed.wrapping_add(1));
    let (r, dim) = (3, 3u8);
    let mut worst = 0.0f64;
    for _ in 0..8 {
        let s = random_hermitian(&mut rng, r);
        let u = random_unitary(&mut rng, r);
        let mats: Vec<Matrix> = (0..dim).map(|_| random_hermitian(&mut rng, r)).collect();
        let n = EndoForm::one_form(&mats, dim);
        let ud = u.adjoint();
        let lhs = duhamel_exp(&(&u * &s * &ud), &n.conjugate(&ud))?;
        let rhs = duhamel_exp(&s, &n)?.conjugate(&ud);
        worst = worst.max(lhs.max_abs_diff(&rhs));
    }
    Ok(worst)
}

/// Super heat traces of the default family and of its constant unitary conjugate.
pub fn family_unitary_residual(cfg: &RunConfig, seed: u64) -> Result<f64, CliError> {
    let grid = Grid::new(cfg.m, 32)?;
    let mut rng = ChaCha8Rng::seed_from_u64(seed.wrapping_add(2));
    let u = random_unitary(&mut rng, 2);
    let base = default_field(cfg.epsilon, cfg.mu);
    let inner = base.clone();
    let fam = FiniteRankFamily::new(grid, 2, base, 0)?;
    let conj = FiniteRankFamily::new(grid, 2, std::sync::Arc::new(move |p| &u * inner(p) * u.adjoint()), 0)?;
    let points = random_points(cfg.m, 16, seed);
    let mut worst = 0.0f64;
    for p in points {
        for t in [0.5, 4.0, 32.0] {
            let (e0, o0) = fam.super_heat_trace(p, t)?;
            let (e1, o1) = conj.super_heat_trace(p, t)?;
            worst = worst.max(e0.max_abs_diff(&e1)).max(o0.max_abs_diff(&o1));
        }
    }
    Ok(worst)
}

pub fn finite_rank_demo(cfg: &RunConfig, seed: u64) -> Result<Outcome, CliError> {
    let mut out = Outcome::default();
    out.rows.push(Row::error("duhamel_commuting", "exp(-S)exp(-N)", None, duhamel_commuting_residual(seed)?, cfg.tol.duhamel));
    out.rows.push(Row::error("duhamel_unitary", "conjugation", None, duhamel_unitary_residual(seed)?, cfg.tol.duhamel));
    out.rows.push(Row::error("family_unitary", "super_heat_trace", None, family_unitary_residual(cfg, seed)?, cfg.tol.duhamel));

    let fam = FiniteRankFamily::default_family(cfg.grid(), cfg.epsilon, cfg.mu)?;
    let (names, forms, off) = limit_basket(fam.grid(), seed);
    let checks = crossing_limit_checks(&fam, &forms, &cfg.large_times())?;
    limit_rows(&mut out, cfg, "crossing", &names, &checks, off);
    out.artifacts.push(("hypersurface.csv".into(), hypersurface_csv(fam.hypersurface())));
    Ok(out)
}
