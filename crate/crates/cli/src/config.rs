//! Run configuration: INI parsing, per-command defaults and validation.

use std::f64::consts::PI;
use std::fmt;
use std::path::PathBuf;

use clap::ValueEnum;
use etalab::circle_family::{BetaTerm, CircleFamily, FamilyConfig, Holonomy, Torsion, Trig};
use etalab::Grid;
use ini::Ini;

#[derive(Debug, Clone, Copy, PartialEq, Eq, ValueEnum)]
pub enum Command {
    EtaTable,
    ClosedFormXcheck,
    TransgressionCheck,
    SmallTLimit,
    LargeTLimit,
    IndexIdentity,
    PoissonXcheck,
    FiniteRankDemo,
}

impl Command {
    pub const ALL: [Command; 8] = [
        Command::EtaTable,
        Command::ClosedFormXcheck,
        Command::TransgressionCheck,
        Command::SmallTLimit,
        Command::LargeTLimit,
        Command::IndexIdentity,
        Command::PoissonXcheck,
        Command::FiniteRankDemo,
    ];

    pub fn name(self) -> &'static str {
        match self {
            Command::EtaTable => "eta-table",
            Command::ClosedFormXcheck => "closed-form-xcheck",
            Command::TransgressionCheck => "transgression-check",
            Command::SmallTLimit => "small-t-limit",
            Command::LargeTLimit => "large-t-limit",
            Command::IndexIdentity => "index-identity",
            Command::PoissonXcheck => "poisson-xcheck",
            Command::FiniteRankDemo => "finite-rank-demo",
        }
    }
}

#[derive(Debug, Clone, Copy, PartialEq)]
pub enum FamilyKind {
    Winding,
    Oscillating,
    FiniteRank,
}

impl FamilyKind {
    fn parse(s: &str) -> Option<Self> {
        match s {
            "winding" => Some(FamilyKind::Winding),
            "oscillating" => Some(FamilyKind::Oscillating),
            "finite-rank" => Some(FamilyKind::FiniteRank),
            _ => None,
        }
    }
}

#[derive(Debug, Clone, PartialEq)]
pub struct Tolerances {
    pub eta: f64,
    pub closed_form: f64,
    pub point_value: f64,
    pub bernoulli: f64,
    pub transgression: f64,
    pub small_t: f64,
    pub poisson: f64,
    pub index: f64,
    pub spectral_flow: f64,
    pub l1: f64,
    pub duhamel: f64,
    pub rate_min: f64,
    pub rate_max: f64,
}

impl Default for Tolerances {
    fn default() -> Self {
        Tolerances {
            eta: 1e-8,
            closed_form: 1e-6,
            point_value: 1e-8,
            bernoulli: 2e-4,
            transgression: 1e-6,
            small_t: 1e-8,
            poisson: 1e-10,
            index: 1e-3,
            spectral_flow: 1e-4,
            l1: 0.01,
            duhamel: 1e-12,
            rate_min: -0.70,
            rate_max: -0.40,
        }
    }
}

#[derive(Debug, Clone, PartialEq)]
pub struct Times {
    pub poisson: Vec<f64>,
    pub transgression_s: Vec<f64>,
    pub transgression_t: Vec<f64>,
    pub small_t: f64,
    pub large_t_min: f64,
    pub large_t_max: f64,
    pub large_t_count: usize,
}

impl Default for Times {
    fn default() -> Self {
        Times {
            poisson: vec![0.25, 0.5, 1.0, 2.0, 4.0, 8.0],
            transgression_s: vec![0.5, 1.0],
            transgression_t: vec![4.0, 16.0],
            small_t: 0.05,
            large_t_min: 1e2,
            large_t_max: 1e4,
            large_t_count: 12,
        }
    }
}

#[derive(Debug, Clone, PartialEq)]
pub struct RunConfig {
    pub m: u8,
    pub n: usize,
    pub family: FamilyKind,
    pub r: f64,
    pub beta: Vec<BetaTerm>,
    pub torsion: Torsion,
    pub k_modes: f64,
    pub t_split: f64,
    pub epsilon: f64,
    pub mu: f64,
    pub band: usize,
    pub poisson_points: usize,
    pub bernoulli_terms: usize,
    pub tol: Tolerances,
    pub times: Times,
    pub out_dir: Option<PathBuf>,
}

/// A configuration rejected before any computation, naming the violated invariant.
#[derive(Debug, Clone, PartialEq)]
pub struct ConfigError {
    pub key: String,
    pub message: String,
}

impl fmt::Display for ConfigError {
    fn fmt(&self, f: &mut fmt::Formatter<'_>) -> fmt::Result {
        write!(f, "invalid configuration `{}`: {}", self.key, self.message)
    }
}

impl std::error::Error for ConfigError {}

fn bad(key: &str, message: impl Into<String>) -> ConfigError {
    ConfigError { key: key.to_string(), message: message.into() }
}

fn default_beta(m: u8) -> Vec<BetaTerm> {
    match m {
        3 => vec![
            BetaTerm { coeff: 0.15, trig: Trig::Cos, wave: 1, axis: 2, form: 3 },
            BetaTerm { coeff: 0.1, trig: Trig::Sin, wave: 1, axis: 3, form: 1 },
        ],
        2 => vec![BetaTerm { coeff: 0.15, trig: Trig::Cos, wave: 1, axis: 2, form: 1 }],
        _ => Vec::new(),
    }
}

fn default_torsion(m: u8) -> Torsion {
    match m {
        3 => Torsion { coeff: 2.0 * PI, plane: (2, 3) },
        _ => Torsion::zero(),
    }
}

impl RunConfig {
    /// Defaults of a command: the grid and family its checks are calibrated on.
    pub fn default_for(command: Command) -> Self {
        let (m, n, family) = match command {
            Command::EtaTable => (2, 256, FamilyKind::Oscillating),
            Command::ClosedFormXcheck | Command::SmallTLimit | Command::IndexIdentity | Command::PoissonXcheck => {
                (3, 32, FamilyKind::Oscillating)
            }
            Command::TransgressionCheck => (3, 48, FamilyKind::Oscillating),
            Command::LargeTLimit => (2, 512, FamilyKind::Oscillating),
            Command::FiniteRankDemo => (2, 1024, FamilyKind::FiniteRank),
        };
        let mut cfg = RunConfig {
            m,
            n,
            family,
            r: 0.4,
            beta: Vec::new(),
            torsion: Torsion::zero(),
            k_modes: 60.0,
            t_split: 1.0,
            epsilon: 0.1,
            mu: 1.0,
            band: 2,
            poisson_points: 100,
            bernoulli_terms: 100_000,
            tol: Tolerances::default(),
            times: Times::default(),
            out_dir: None,
        };
        cfg.reset_family_forms();
        cfg
    }

    fn reset_family_forms(&mut self) {
        if self.family == FamilyKind::Oscillating {
            self.beta = default_beta(self.m);
            self.torsion = default_torsion(self.m);
        } else {
            self.beta = Vec::new();
            self.torsion = Torsion::zero();
        }
    }

    /// Applies an INI document on top of the command defaults and validates the result.
    pub fn from_ini(command: Command, text: &str) -> Result<Self, ConfigError> {
        let doc = Ini::load_from_str(text).map_err(|e| bad("file", e.to_string()))?;
        let mut cfg = Self::default_for(command);
        let get = |sec: &str, key: &str| doc.section(Some(sec)).and_then(|s| s.get(key)).map(str::trim);
        for (sec, props) in doc.iter() {
            let sec = sec.unwrap_or("");
            for (key, _) in props.iter() {
                let known: &[&str] = match sec {
                    "grid" => &["m", "n"],
                    "family" => &["kind", "r", "k_modes", "t_split", "beta", "torsion", "epsilon", "mu"],
                    "tolerances" => &[
                        "eta", "closed_form", "point_value", "bernoulli", "transgression", "small_t", "poisson", "index",
                        "spectral_flow", "l1", "duhamel", "rate_min", "rate_max",
                    ],
                    "times" => &["poisson", "transgression_s", "transgression_t", "small_t", "large_t_min", "large_t_max", "large_t_count"],
                    "checks" => &["band", "poisson_points", "bernoulli_terms"],
                    "output" => &["dir"],
                    _ => &[],
                };
                if !known.contains(&key) {
                    return Err(bad(&format!("{sec}.{key}"), "unknown key"));
                }
            }
        }
        if let Some(v) = get("grid", "m") {
            cfg.m = parse_num("grid.m", v)?;
        }
        if let Some(v) = get("grid", "n") {
            cfg.n = parse_num("grid.n", v)?;
        }
        if let Some(v) = get("family", "kind") {
            cfg.family = FamilyKind::parse(v).ok_or_else(|| bad("family.kind", format!("expected winding, oscillating or finite-rank, got `{v}`")))?;
        }
        cfg.reset_family_forms();
        if let Some(v) = get("family", "r") {
            cfg.r = parse_num("family.r", v)?;
        }
        if let Some(v) = get("family", "k_modes") {
            cfg.k_modes = parse_num("family.k_modes", v)?;
        }
        if let Some(v) = get("family", "t_split") {
            cfg.t_split = parse_num("family.t_split", v)?;
        }
        if let Some(v) = get("family", "epsilon") {
            cfg.epsilon = parse_num("family.epsilon", v)?;
        }
        if let Some(v) = get("family", "mu") {
            cfg.mu = parse_num("family.mu", v)?;
        }
        if let Some(v) = get("family", "beta") {
            cfg.beta = parse_beta(v)?;
        }
        if let Some(v) = get("family", "torsion") {
            cfg.torsion = parse_torsion(v)?;
        }
        let t = &mut cfg.tol;
        for (key, slot) in [
            ("eta", &mut t.eta),
            ("closed_form", &mut t.closed_form),
            ("point_value", &mut t.point_value),
            ("bernoulli", &mut t.bernoulli),
            ("transgression", &mut t.transgression),
            ("small_t", &mut t.small_t),
            ("poisson", &mut t.poisson),
            ("index", &mut t.index),
            ("spectral_flow", &mut t.spectral_flow),
            ("l1", &mut t.l1),
            ("duhamel", &mut t.duhamel),
            ("rate_min", &mut t.rate_min),
            ("rate_max", &mut t.rate_max),
        ] {
            if let Some(v) = get("tolerances", key) {
                *slot = parse_num(&format!("tolerances.{key}"), v)?;
            }
        }
        let tm = &mut cfg.times;
        for (key, slot) in [("poisson", &mut tm.poisson), ("transgression_s", &mut tm.transgression_s), ("transgression_t", &mut tm.transgression_t)] {
            if let Some(v) = get("times", key) {
                *slot = parse_list(&format!("times.{key}"), v)?;
            }
        }
        for (key, slot) in [("small_t", &mut tm.small_t), ("large_t_min", &mut tm.large_t_min), ("large_t_max", &mut tm.large_t_max)] {
            if let Some(v) = get("times", key) {
                *slot = parse_num(&format!("times.{key}"), v)?;
            }
        }
        if let Some(v) = get("times", "large_t_count") {
            tm.large_t_count = parse_num("times.large_t_count", v)?;
        }
        if let Some(v) = get("checks", "band") {
            cfg.band = parse_num("checks.band", v)?;
        }
        if let Some(v) = get("checks", "poisson_points") {
            cfg.poisson_points = parse_num("checks.poisson_points", v)?;
        }
        if let Some(v) = get("checks", "bernoulli_terms") {
            cfg.bernoulli_terms = parse_num("checks.bernoulli_terms", v)?;
        }
        if let Some(v) = get("output", "dir") {
            cfg.out_dir = Some(PathBuf::from(v));
        }
        cfg.validate(command)?;
        Ok(cfg)
    }

    /// Checks every precondition of the modules the command will call.
    pub fn validate(&self, command: Command) -> Result<(), ConfigError> {
        if !(1..=3).contains(&self.m) {
            return Err(bad("grid.m", format!("base dimension must be 1, 2 or 3, got {}", self.m)));
        }
        if self.n < 16 || self.n % 2 != 0 {
            return Err(bad("grid.n", format!("grid size must be even and at least 16, got {}", self.n)));
        }
        let needs_circle = command != Command::FiniteRankDemo;
        match (needs_circle, self.family) {
            (true, FamilyKind::FiniteRank) => {
                return Err(bad("family.kind", format!("{} needs a circle family (winding or oscillating)", command.name())))
            }
            (false, k) if k != FamilyKind::FiniteRank => {
                return Err(bad("family.kind", "finite-rank-demo needs family.kind = finite-rank"))
            }
            _ => {}
        }
        if self.family == FamilyKind::FiniteRank {
            if self.m < 2 {
                return Err(bad("grid.m", "the finite-rank family needs m >= 2"));
            }
            if !self.epsilon.is_finite() || !self.mu.is_finite() {
                return Err(bad("family.epsilon", "epsilon and mu must be finite"));
            }
        }
        if self.family == FamilyKind::Oscillating && !(self.r > 0.0 && self.r <= 0.4) {
            return Err(bad("family.r", format!("oscillation amplitude must lie in (0, 0.4], got {}", self.r)));
        }
        if !(self.k_modes >= 1.0) {
            return Err(bad("family.k_modes", format!("must be at least 1, got {}", self.k_modes)));
        }
        if !(self.t_split > 0.0 && self.t_split.is_finite()) {
            return Err(bad("family.t_split", format!("must be positive, got {}", self.t_split)));
        }
        let m = self.m as usize;
        for b in &self.beta {
            if b.axis == 0 || b.axis > m || b.form == 0 || b.form > m {
                return Err(bad("family.beta", format!("term uses an axis outside 1..={m}")));
            }
        }
        if self.torsion.coeff != 0.0 {
            let (i, j) = self.torsion.plane;
            if i == j || i == 0 || j == 0 || i > m || j > m {
                return Err(bad("family.torsion", format!("plane ({i}, {j}) is not a coordinate plane of T^{m}")));
            }
            let k = self.torsion.coeff / (2.0 * PI);
            if (k - k.round()).abs() > 1e-12 {
                return Err(bad("family.torsion", "coefficient must be an integer multiple of 2π"));
            }
            if self.family == FamilyKind::Winding {
                return Err(bad("family.torsion", "the winding family needs zero torsion"));
            }
        }
        let t = &self.tol;
        for (key, v) in [
            ("closed_form", t.closed_form),
            ("point_value", t.point_value),
            ("bernoulli", t.bernoulli),
            ("transgression", t.transgression),
            ("small_t", t.small_t),
            ("poisson", t.poisson),
            ("index", t.index),
            ("spectral_flow", t.spectral_flow),
            ("l1", t.l1),
            ("duhamel", t.duhamel),
        ] {
            if !(v > 0.0 && v.is_finite()) {
                return Err(bad(&format!("tolerances.{key}"), format!("must be positive, got {v}")));
            }
        }
        if !(t.eta >= 1e-10 && t.eta.is_finite()) {
            return Err(bad("tolerances.eta", format!("eta tolerance must be at least 1e-10, got {}", t.eta)));
        }
        if command == Command::IndexIdentity && t.eta > 1e-6 {
            return Err(bad("tolerances.eta", "the index identity needs eta to 1e-6 or better"));
        }
        if !(t.rate_min < t.rate_max) {
            return Err(bad("tolerances.rate_min", "rate_min must be below rate_max"));
        }
        let tm = &self.times;
        for (key, list) in [("poisson", &tm.poisson), ("transgression_s", &tm.transgression_s), ("transgression_t", &tm.transgression_t)] {
            if list.is_empty() || list.iter().any(|x| !(*x > 0.0 && x.is_finite())) {
                return Err(bad(&format!("times.{key}"), "must be a nonempty list of positive times"));
            }
        }
        if tm.transgression_s.iter().any(|s| tm.transgression_t.iter().any(|t| t < s)) {
            return Err(bad("times.transgression_t", "every end time must be at least every start time"));
        }
        if !(tm.small_t > 0.0 && tm.small_t.is_finite()) {
            return Err(bad("times.small_t", "must be positive"));
        }
        if !(tm.large_t_min >= 1e2 && tm.large_t_max <= 1e4 && tm.large_t_min < tm.large_t_max) {
            return Err(bad("times.large_t_min", "large times must satisfy 1e2 <= min < max <= 1e4"));
        }
        if tm.large_t_count < 2 {
            return Err(bad("times.large_t_count", "at least two large times are needed for a fit"));
        }
        if needs_circle {
            CircleFamily::new(self.family_config()).map_err(|e| bad("family", e.to_string()))?;
        }
        if self.poisson_points == 0 {
            return Err(bad("checks.poisson_points", "must be positive"));
        }
        if self.bernoulli_terms == 0 {
            return Err(bad("checks.bernoulli_terms", "must be positive"));
        }
        Ok(())
    }

    pub fn grid(&self) -> Grid {
        Grid::new(self.m, self.n).expect("validated")
    }

    pub fn family_config(&self) -> FamilyConfig {
        self.family_config_on(self.grid())
    }

    pub fn family_config_on(&self, grid: Grid) -> FamilyConfig {
        let holonomy = match self.family {
            FamilyKind::Winding => Holonomy::Winding,
            _ => Holonomy::Oscillating { r: self.r },
        };
        let mut fc = FamilyConfig::new(grid, holonomy);
        fc.beta = self.beta.clone();
        fc.torsion = self.torsion;
        fc.k_modes = self.k_modes;
        fc.t_split = self.t_split;
        fc
    }

    pub fn large_times(&self) -> Vec<f64> {
        etalab::currents::log_spaced(self.times.large_t_min, self.times.large_t_max, self.times.large_t_count)
    }
}

fn parse_num<T: std::str::FromStr>(key: &str, v: &str) -> Result<T, ConfigError> {
    v.parse().map_err(|_| bad(key, format!("cannot parse `{v}`")))
}

fn parse_list(key: &str, v: &str) -> Result<Vec<f64>, ConfigError> {
    v.split(',').map(|x| parse_num(key, x.trim())).collect()
}

/// `coeff trig wave axis form` terms separated by `;`, e.g. `0.15 cos 1 2 3`.
fn parse_beta(v: &str) -> Result<Vec<BetaTerm>, ConfigError> {
    let key = "family.beta";
    v.split(';')
        .map(str::trim)
        .filter(|s| !s.is_empty())
        .map(|term| {
            let f: Vec<&str> = term.split_whitespace().collect();
            if f.len() != 5 {
                return Err(bad(key, format!("term `{term}` needs five fields: coeff trig wave axis form")));
            }
            let trig = match f[1] {
                "cos" => Trig::Cos,
                "sin" => Trig::Sin,
                other => return Err(bad(key, format!("unknown trigonometric function `{other}`"))),
            };
            Ok(BetaTerm { coeff: parse_num(key, f[0])?, trig, wave: parse_num(key, f[2])?, axis: parse_num(key, f[3])?, form: parse_num(key, f[4])? })
        })
        .collect()
}

/// `k i j` for the torsion `2πk dx_i ∧ dx_j`, or `0`.
fn parse_torsion(v: &str) -> Result<Torsion, ConfigError> {
    let key = "family.torsion";
    let f: Vec<&str> = v.split_whitespace().collect();
    match f.as_slice() {
        ["0"] => Ok(Torsion::zero()),
        [k, i, j] => {
            let k: i64 = parse_num(key, k)?;
            Ok(Torsion { coeff: 2.0 * PI * k as f64, plane: (parse_num(key, i)?, parse_num(key, j)?) })
        }
        _ => Err(bad(key, format!("expected `k i j` or `0`, got `{v}`"))),
    }
}

#[cfg(test)]
mod tests {
    use super::*;

    #[test]
    fn defaults_validate() {
        for c in Command::ALL {
            RunConfig::default_for(c).validate(c).unwrap();
        }
    }

    #[test]
    fn overrides_and_named_errors() {
        let cfg = RunConfig::from_ini(Command::IndexIdentity, "[grid]\nm = 1\nn = 64\n[family]\nkind = winding\n").unwrap();
        assert_eq!((cfg.m, cfg.n, cfg.family), (1, 64, FamilyKind::Winding));
        assert!(cfg.beta.is_empty());
        let e = RunConfig::from_ini(Command::EtaTable, "[grid]\nn = 15\n").unwrap_err();
        assert_eq!(e.key, "grid.n");
        let e = RunConfig::from_ini(Command::EtaTable, "[family]\nr = 0.7\n").unwrap_err();
        assert_eq!(e.key, "family.r");
        let e = RunConfig::from_ini(Command::EtaTable, "[family]\nkind = finite-rank\n").unwrap_err();
        assert_eq!(e.key, "family.kind");
        let e = RunConfig::from_ini(Command::EtaTable, "[grid]\nsize = 3\n").unwrap_err();
        assert_eq!(e.key, "grid.size");
        let e = RunConfig::from_ini(Command::EtaTable, "[family]\ntorsion = 1 1 1\n").unwrap_err();
        assert_eq!(e.key, "family.torsion");
        let e = RunConfig::from_ini(Command::LargeTLimit, "[times]\nlarge_t_max = 1e5\n").unwrap_err();
        assert_eq!(e.key, "times.large_t_min");
    }

    #[test]
    fn beta_syntax() {
        let cfg = RunConfig::from_ini(Command::SmallTLimit, "# comment\n[family]\nbeta = 0.2 sin 2 1 3; 0.1 cos 1 2 1\ntorsion = 0\n").unwrap();
        assert_eq!(cfg.beta.len(), 2);
        assert_eq!(cfg.beta[0].trig, Trig::Sin);
        assert_eq!(cfg.torsion.coeff, 0.0);
    }
}
