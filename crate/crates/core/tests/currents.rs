use std::f64::consts::PI;

use etalab::circle_family::{BetaTerm, CircleFamily, FamilyConfig, Holonomy, Trig};
use etalab::currents::{
    chern_kernel_form, differential_current, fiber_chern, index_identity_check, pair, Current, TestFormBasket,
};
use etalab::eta::compute_eta;
use etalab::grassmann::{grade_select, Grade, Multivector};
use etalab::torus_base::SheetForm;
use etalab::{FormField, Grid};
use num_complex::Complex64;
use proptest::prelude::*;

fn winding(n: usize) -> CircleFamily {
    CircleFamily::new(FamilyConfig::new(Grid::new(1, n).unwrap(), Holonomy::Winding)).unwrap()
}

fn oscillating(m: u8, n: usize, beta: Vec<BetaTerm>) -> CircleFamily {
    let mut cfg = FamilyConfig::new(Grid::new(m, n).unwrap(), Holonomy::Oscillating { r: 0.4 });
    cfg.beta = beta;
    CircleFamily::new(cfg).unwrap()
}

fn trig_form(grid: Grid, a: &[f64], shift: f64) -> FormField {
    FormField::from_fn(grid, |p| {
        let x = 2.0 * PI * (p[0] + shift);
        let y = 2.0 * PI * p[1];
        Multivector::blade(2, &[2], a[0] + a[1] * x.cos() + a[2] * (2.0 * x).sin() + a[3] * x.cos() * y.sin())
            + Multivector::blade(2, &[1], a[4] * y.cos() + a[5] * x.sin() * y.cos())
    })
}

proptest! {
    #![proptest_config(ProptestConfig::with_cases(32))]

    #[test]
    fn pairing_is_linear(a in prop::collection::vec(-1.0..1.0f64, 6), b in prop::collection::vec(-1.0..1.0f64, 6), c in -2.0..2.0f64) {
        let fam = oscillating(2, 32, Vec::new());
        let g = fam.grid();
        let l1 = Current::l1(trig_form(g, &b, 0.25).map(|v| grade_select(v, Grade::Degree(1))));
        let delta = Current::delta_one(fam.hypersurface());
        let w1 = trig_form(g, &a, 0.0);
        let w2 = trig_form(g, &b, 0.1);
        let sum = Current::Sum(vec![l1.clone(), delta.clone().scaled(Complex64::new(c, 0.0))]);
        let lhs = pair(&sum, &w1).unwrap();
        let rhs = pair(&l1, &w1).unwrap() + pair(&delta, &w1).unwrap() * c;
        prop_assert!((lhs - rhs).norm() < 1e-14);
        let combo = FormField::new(g, w1.values().iter().zip(w2.values()).map(|(x, y)| *x * c + *y).collect()).unwrap();
        let l = pair(&sum, &combo).unwrap();
        let r = pair(&sum, &w1).unwrap() * c + pair(&sum, &w2).unwrap();
        prop_assert!((l - r).norm() < 1e-13);
    }

    #[test]
    fn half_period_shift_negates_the_crossing_pairing(a in prop::collection::vec(-1.0..1.0f64, 6)) {
        let fam = oscillating(2, 32, Vec::new());
        let g = fam.grid();
        let delta = Current::delta_one(fam.hypersurface());
        let w = trig_form(g, &a, 0.0);
        let shifted = trig_form(g, &a, 0.5);
        prop_assert!((pair(&delta, &shifted).unwrap() + pair(&delta, &w).unwrap()).norm() < 1e-12);
        let odd = fam.odd_trace_field(100.0).unwrap();
        let l1 = Current::l1(odd);
        prop_assert!((pair(&l1, &shifted).unwrap() + pair(&l1, &w).unwrap()).norm() < 1e-12);
    }
}

#[test]
fn index_identity_survives_orientation_reversal() {
    let fam = oscillating(2, 64, Vec::new());
    let res = compute_eta(&fam, 1e-8).unwrap();
    let a = [0.3, 1.0, -0.4, 0.7, 0.2, -0.5];
    let basket = TestFormBasket { entries: vec![("w".into(), trig_form(fam.grid(), &a, 0.0)), ("w shifted".into(), trig_form(fam.grid(), &a, 0.5))] };
    let terms = index_identity_check(&fam, &res.eta_tilde, &basket).unwrap();
    assert!(terms.iter().all(|t| t.residual <= 1e-3), "{terms:?}");
    assert!((terms[0].delta + terms[1].delta).norm() < 1e-12);
    assert!(terms[0].delta.norm() > 0.1);
}

#[test]
fn trivial_connection_has_unit_kernel_chern_form() {
    let fam = oscillating(3, 16, Vec::new());
    let ch = chern_kernel_form(&fam, fam.hypersurface()).unwrap();
    for sheet in &ch.values {
        for v in sheet {
            assert!(v.max_abs_diff(&Multivector::one(2)) < 1e-15);
        }
    }
}

#[test]
fn kernel_chern_form_restricts_dbeta() {
    let c = 0.15;
    let fam = oscillating(3, 16, vec![BetaTerm { coeff: c, trig: Trig::Cos, wave: 1, axis: 2, form: 3 }]);
    let hyp = fam.hypersurface();
    let ch = chern_kernel_form(&fam, hyp).unwrap();
    for (si, sheet) in hyp.sheets().iter().enumerate() {
        for (k, smp) in sheet.samples.iter().enumerate() {
            let expected = Multivector::one(2) + Multivector::blade(2, &[1, 2], c * (2.0 * PI * smp.point[1]).sin());
            assert!(ch.values[si][k].max_abs_diff(&expected) < 1e-13);
        }
    }
    let volume: f64 = hyp.sheets()[0].samples.iter().zip(&ch.values[0]).map(|(smp, v)| smp.weight * v.scalar_part().re).sum();
    assert!((volume - 1.0).abs() < 1e-13);
}

#[test]
fn fiber_chern_is_odd_and_counts_the_spectral_flow() {
    let fam = winding(64);
    let fc = fiber_chern(&fam).unwrap();
    for v in fc.values() {
        assert_eq!(grade_select(v, Grade::Even).max_abs(), 0.0);
        assert!(v.max_abs_diff(&(Multivector::e(1, 1) * -1.0)) < 1e-12);
    }
    let one = FormField::from_fn(fam.grid(), |_| Multivector::one(1));
    let count = pair(&Current::l1(fc), &one).unwrap();
    assert!((count + 1.0).norm() < 1e-12);
    assert!((pair(&Current::delta_one(fam.hypersurface()), &one).unwrap() - 1.0).norm() < 1e-14);

    let osc = oscillating(3, 16, vec![BetaTerm { coeff: 0.15, trig: Trig::Cos, wave: 1, axis: 2, form: 3 }]);
    for v in fiber_chern(&osc).unwrap().values() {
        assert_eq!(grade_select(v, Grade::Even).max_abs(), 0.0);
    }
}

#[test]
fn exact_test_forms_pair_to_zero_on_both_sides() {
    let fam = oscillating(3, 32, vec![BetaTerm { coeff: 0.15, trig: Trig::Cos, wave: 1, axis: 2, form: 3 }]);
    let res = compute_eta(&fam, 1e-8).unwrap();
    let g = fam.grid();
    let alpha = FormField::from_fn(g, |p| {
        Multivector::blade(3, &[2], (2.0 * PI * p[0]).cos() * (2.0 * PI * p[2]).sin())
            + Multivector::blade(3, &[3], (2.0 * PI * p[0]).sin() + (2.0 * PI * p[1]).cos())
            + Multivector::blade(3, &[1], (2.0 * PI * p[1]).sin())
    });
    let exact = etalab::torus_base::exterior_derivative(&alpha);
    let basket = TestFormBasket { entries: vec![("d alpha".into(), exact.clone())] };
    let t = &index_identity_check(&fam, &res.eta_tilde, &basket).unwrap()[0];
    assert!(t.d_eta.norm() < 1e-10);
    assert!((t.fiber + t.delta).norm() < 1e-6, "{t:?}");

    let eta = Current::L1Form { field: res.eta_tilde.clone(), singular: Some(fam.hypersurface().clone()) };
    assert!(differential_current(&eta).unwrap().eval(&exact).unwrap().norm() < 1e-10);
}

#[test]
fn index_residual_improves_under_refinement() {
    let residual = |n: usize| {
        let fam = winding(n);
        let res = compute_eta(&fam, 1e-8).unwrap();
        let basket = TestFormBasket { entries: vec![("cos 4pi x".into(), FormField::from_fn(fam.grid(), |p| Multivector::scalar(1, (4.0 * PI * p[0]).cos())))] };
        index_identity_check(&fam, &res.eta_tilde, &basket).unwrap()[0].residual
    };
    let (coarse, fine) = (residual(32), residual(64));
    assert!(fine * 4.0 <= coarse || fine < 1e-9, "n=32: {coarse:e}, n=64: {fine:e}");
}

#[test]
fn empty_crossing_pairs_to_zero() {
    let hyp = etalab::Hypersurface::empty(Grid::new(2, 16).unwrap());
    let c = Current::Delta { hyp: hyp.clone(), form: SheetForm { values: Vec::new() } };
    let w = FormField::from_fn(hyp.grid(), |_| Multivector::e(2, 2));
    assert_eq!(pair(&c, &w).unwrap(), Complex64::new(0.0, 0.0));
}
