//! Check rows, their CSV rendering and the stdout summary.

use std::fmt::Write as _;

use etalab::torus_base::fmt_num;
use num_complex::Complex64;

#[derive(Debug, Clone, Copy, PartialEq)]
pub enum Comparison {
    /// Passes iff `residual ≤ tolerance`.
    AtMost,
    /// Passes iff `residual < tolerance`.
    Below,
}

#[derive(Debug, Clone, PartialEq)]
pub struct Row {
    pub check: String,
    pub omega: String,
    pub t: Option<f64>,
    pub value: Complex64,
    pub target: Complex64,
    pub residual: f64,
    pub tolerance: f64,
    pub comparison: Comparison,
}

impl Row {
    /// `residual = |value − target|` against `tolerance`.
    pub fn compare(check: &str, omega: &str, t: Option<f64>, value: Complex64, target: Complex64, tolerance: f64) -> Self {
        Row {
            check: check.into(),
            omega: omega.into(),
            t,
            value,
            target,
            residual: (value - target).norm(),
            tolerance,
            comparison: Comparison::AtMost,
        }
    }

    /// A precomputed error measure, such as a componentwise maximum, against `tolerance`.
    pub fn error(check: &str, omega: &str, t: Option<f64>, residual: f64, tolerance: f64) -> Self {
        Row {
            check: check.into(),
            omega: omega.into(),
            t,
            value: Complex64::new(residual, 0.0),
            target: Complex64::new(0.0, 0.0),
            residual,
            tolerance,
            comparison: Comparison::AtMost,
        }
    }

    /// `value ∈ [lo, hi]`, stored as distance to the midpoint against the half-width.
    pub fn window(check: &str, omega: &str, value: f64, lo: f64, hi: f64) -> Self {
        let mid = 0.5 * (lo + hi);
        Row {
            check: check.into(),
            omega: omega.into(),
            t: None,
            value: Complex64::new(value, 0.0),
            target: Complex64::new(mid, 0.0),
            residual: if value.is_nan() { f64::INFINITY } else { (value - mid).abs() },
            tolerance: 0.5 * (hi - lo),
            comparison: Comparison::AtMost,
        }
    }

    /// `value ≤ bound`.
    pub fn at_most(check: &str, omega: &str, value: f64, bound: f64) -> Self {
        Row {
            check: check.into(),
            omega: omega.into(),
            t: None,
            value: Complex64::new(value, 0.0),
            target: Complex64::new(bound, 0.0),
            residual: if value.is_nan() { f64::INFINITY } else { value },
            tolerance: bound,
            comparison: Comparison::AtMost,
        }
    }

    /// `value < 0`.
    pub fn negative(check: &str, omega: &str, value: f64) -> Self {
        Row {
            check: check.into(),
            omega: omega.into(),
            t: None,
            value: Complex64::new(value, 0.0),
            target: Complex64::new(0.0, 0.0),
            residual: if value.is_nan() { f64::INFINITY } else { value },
            tolerance: 0.0,
            comparison: Comparison::Below,
        }
    }

    pub fn passed(&self) -> bool {
        match self.comparison {
            Comparison::AtMost => self.residual <= self.tolerance,
            Comparison::Below => self.residual < self.tolerance,
        }
    }

    pub fn summary(&self) -> String {
        let t = self.t.map(|t| format!(" t={t}")).unwrap_or_default();
        let op = match self.comparison {
            Comparison::AtMost => "<=",
            Comparison::Below => "<",
        };
        format!(
            "{} {} [{}]{} residual={:.3e} {} {:.3e}",
            if self.passed() { "PASS" } else { "FAIL" },
            self.check,
            self.omega,
            t,
            self.residual,
            op,
            self.tolerance
        )
    }
}

pub const HEADER: &str = "check,omega,t,value_re,value_im,target_re,target_im,residual,tolerance,status";

fn quote(s: &str) -> String {
    if s.contains([',', '"', '\n']) {
        format!("\"{}\"", s.replace('"', "\"\""))
    } else {
        s.to_string()
    }
}

pub fn to_csv(rows: &[Row]) -> String {
    let mut out = String::from(HEADER);
    out.push('\n');
    for r in rows {
        let t = r.t.map(fmt_num).unwrap_or_else(|| "-".into());
        let _ = writeln!(
            out,
            "{},{},{},{},{},{},{},{},{},{}",
            quote(&r.check),
            quote(&r.omega),
            t,
            fmt_num(r.value.re),
            fmt_num(r.value.im),
            fmt_num(r.target.re),
            fmt_num(r.target.im),
            fmt_num(r.residual),
            fmt_num(r.tolerance),
            if r.passed() { "pass" } else { "fail" }
        );
    }
    out
}
