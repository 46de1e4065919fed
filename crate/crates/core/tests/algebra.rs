use std::f64::consts::PI;

use etalab::bernoulli::{bernoulli_poly, fourier_partial_sum, gauge_shift};
use etalab::grassmann::{blade_degree, canonical_masks, exp_even, grade_select, Grade, Multivector};
use num_complex::Complex64;
use proptest::prelude::*;

fn homogeneous(dim: u8, degree: usize, coeffs: &[(f64, f64)]) -> Multivector {
    let terms: Vec<(usize, Complex64)> = canonical_masks(dim)
        .into_iter()
        .filter(|&m| blade_degree(m) == degree)
        .zip(coeffs)
        .map(|(m, &(re, im))| (m, Complex64::new(re, im)))
        .collect();
    Multivector::from_coeffs(dim, &terms)
}

fn even(dim: u8, coeffs: &[(f64, f64)]) -> Multivector {
    let mut v = Multivector::zero(dim);
    for (k, mask) in canonical_masks(dim).into_iter().enumerate() {
        if blade_degree(mask) % 2 == 0 && blade_degree(mask) > 0 {
            v.set(mask, Complex64::new(coeffs[k].0, coeffs[k].1));
        }
    }
    v
}

fn coeffs() -> impl Strategy<Value = Vec<(f64, f64)>> {
    prop::collection::vec((-2.0..2.0f64, -2.0..2.0f64), 8)
}

proptest! {
    #[test]
    fn wedge_is_graded_commutative(p in 0usize..=3, q in 0usize..=3, a in coeffs(), b in coeffs()) {
        let x = homogeneous(3, p, &a);
        let y = homogeneous(3, q, &b);
        let sign = if (p * q) % 2 == 0 { 1.0 } else { -1.0 };
        prop_assert!((x * y).max_abs_diff(&((y * x) * sign)) < 1e-14);
    }

    #[test]
    fn exp_even_is_additive(dim in 1u8..=3, a in coeffs(), b in coeffs()) {
        let x = even(dim, &a);
        let y = even(dim, &b);
        let lhs = exp_even(&(x + y)).unwrap();
        let rhs = exp_even(&x).unwrap() * exp_even(&y).unwrap();
        prop_assert!(lhs.max_abs_diff(&rhs) <= 1e-14 * (1.0 + lhs.max_abs()));
    }

    #[test]
    fn grade_select_is_idempotent_and_linear(a in coeffs(), b in coeffs(), c in -3.0..3.0f64) {
        let x = Multivector::from_coeffs(3, &canonical_masks(3).into_iter().zip(a).map(|(m, (re, im))| (m, Complex64::new(re, im))).collect::<Vec<_>>());
        let y = Multivector::from_coeffs(3, &canonical_masks(3).into_iter().zip(b).map(|(m, (re, im))| (m, Complex64::new(re, im))).collect::<Vec<_>>());
        for g in [Grade::Even, Grade::Odd, Grade::Degree(0), Grade::Degree(1), Grade::Degree(2), Grade::Degree(3)] {
            let s = grade_select(&x, g);
            prop_assert_eq!(grade_select(&s, g), s);
            let lin = grade_select(&(x * c + y), g);
            prop_assert!(lin.max_abs_diff(&(grade_select(&x, g) * c + grade_select(&y, g))) < 1e-14);
        }
        let split = grade_select(&x, Grade::Even) + grade_select(&x, Grade::Odd);
        prop_assert!(split.max_abs_diff(&x) == 0.0);
    }

    #[test]
    fn fourier_partial_sums_approach_bernoulli(n in 0u32..=3, j in 1usize..=19, terms in 200usize..2000) {
        let x = 0.05 * j as f64;
        let fact: f64 = (1..=n + 1).map(f64::from).product();
        let target = Complex64::new(0.0, 1.0).powu(n) * (bernoulli_poly(n as usize + 1, x).unwrap() / fact);
        let err = (fourier_partial_sum(n, x, terms) + target).norm();
        // |Σ_{k>N} sin(2πkx)/(πk)| ≤ 1/(π N · 2 sin(πx)) by summation by parts
        let bound = 1.0 / (PI * terms as f64 * (PI * x).sin()) + 1.0 / (terms as f64).powi(2);
        prop_assert!(err <= bound, "n={} x={} N={} err={:e} bound={:e}", n, x, terms, err, bound);
    }

    #[test]
    fn gauge_shift_leaves_chern_factor_invariant(a in 0.01..0.99f64, k in -3i64..=3, c in -1.0..1.0f64, q in -2i64..=2) {
        let t = Multivector::blade(3, &[2, 3], 2.0 * PI * q as f64);
        let dbeta = Multivector::blade(3, &[1, 2], Complex64::new(0.0, c));
        let (f2, db2) = gauge_shift(a, &dbeta, &t, k);
        let chern = |f: f64, db: &Multivector| exp_even(&(-(*db + t * Complex64::new(0.0, f)) * Complex64::new(0.0, -1.0 / (2.0 * PI)))).unwrap();
        prop_assert!(chern(a, &dbeta).max_abs_diff(&chern(f2, &db2)) < 1e-13);
    }
}
