//! Experiment configuration: a `key = value` text file with `#` comments.
//!
//! Schema (every key is optional in a file; missing keys take the defaults
//! of [`ExperimentConfig::default`]):
//!
//! | key | value |
//! |-----|-------|
//! | `name` | run label |
//! | `regime` | `desk` or `paper` |
//! | `alpha` | Hölder exponent in `(0,1)` or `none` (required by `paper`) |
//! | `eps`, `delta` | table exponents; `eps = none` picks the regime default |
//! | `a0` | first scale in `(0,1)`; `none` in `paper` sits on the summability threshold |
//! | `q_list` | comma-separated levels |
//! | `grid_res` | even grid size `≥ 4`, or `0` for the resolution each `u_q` needs |
//! | `velocity` | `built` (the mollified `u_q`) or `zero` |
//! | `kappa` | `table`, `table-cap:K` or `list:K1,K2,...` |
//! | `theta0` | `x-coordinate`, `sinx`, `cosx`, `cosy`, `stream`, `const:C` |
//! | `t_end` | final time |
//! | `mc.n_traj`, `mc.dt`, `mc.m`, `mc.seed`, `mc.d_starts` | ensemble controls |
//! | `stages` | comma-separated subset of `params, tree, field, solve, fldiss, ladder, ns3d, variance` |
//! | `out_dir` | output directory |
//!
//! Every key can be overridden with `key=value` strings (the CLI's `--set`).

use std::fmt::{self, Write as _};
use std::path::PathBuf;
use std::str::FromStr;

use crate::error::{Error, Result};
use crate::initial::Theta0Kind;

#[derive(Clone, Copy, Debug, PartialEq, Eq)]
pub enum RegimeKind {
    Desk,
    Paper,
}

#[derive(Clone, Copy, Debug, PartialEq, Eq)]
pub enum VelocitySource {
    Built,
    Zero,
}

#[derive(Clone, Debug, PartialEq)]
pub enum KappaSource {
    /// `κ_q` from the table.
    Table,
    /// `min(κ_q, cap)`.
    TableCapped(f64),
    List(Vec<f64>),
}

#[derive(Clone, Copy, Debug, PartialEq, Eq, PartialOrd, Ord)]
pub enum Stage {
    Params,
    Tree,
    Field,
    Solve,
    Fldiss,
    Ladder,
    Ns3d,
    Variance,
}

impl Stage {
    pub const ALL: [Stage; 8] = [
        Stage::Params,
        Stage::Tree,
        Stage::Field,
        Stage::Solve,
        Stage::Fldiss,
        Stage::Ladder,
        Stage::Ns3d,
        Stage::Variance,
    ];

    pub fn name(self) -> &'static str {
        match self {
            Stage::Params => "params",
            Stage::Tree => "tree",
            Stage::Field => "field",
            Stage::Solve => "solve",
            Stage::Fldiss => "fldiss",
            Stage::Ladder => "ladder",
            Stage::Ns3d => "ns3d",
            Stage::Variance => "variance",
        }
    }
}

/// Ensemble settings of a pipeline.
#[derive(Clone, Debug, PartialEq)]
pub struct McConfig {
    pub n_traj: usize,
    pub dt: f64,
    /// Side of the uniform start grid for the fluctuation–dissipation check.
    pub m: usize,
    pub seed: u64,
    /// Number of starts placed in `D_q` for the variance stage.
    pub d_starts: usize,
}

#[derive(Clone, Debug, PartialEq)]
pub struct ExperimentConfig {
    pub name: String,
    pub regime: RegimeKind,
    pub alpha: Option<f64>,
    pub eps: Option<f64>,
    pub delta: f64,
    pub a0: Option<f64>,
    pub q_list: Vec<usize>,
    pub grid_res: usize,
    pub velocity: VelocitySource,
    pub kappa: KappaSource,
    pub theta0: Theta0Kind,
    pub t_end: f64,
    pub mc: McConfig,
    pub stages: Vec<Stage>,
    pub out_dir: PathBuf,
}

impl Default for ExperimentConfig {
    fn default() -> Self {
        ExperimentConfig {
            name: "default".into(),
            regime: RegimeKind::Desk,
            alpha: None,
            eps: None,
            delta: 0.3,
            a0: Some(0.1),
            q_list: vec![0],
            grid_res: 0,
            velocity: VelocitySource::Built,
            kappa: KappaSource::TableCapped(1e-3),
            theta0: Theta0Kind::CosX,
            t_end: 1.0,
            mc: McConfig {
                n_traj: 1000,
                dt: 1e-3,
                m: 16,
                seed: 0,
                d_starts: 16,
            },
            stages: vec![Stage::Params, Stage::Field, Stage::Solve],
            out_dir: PathBuf::from("runs/default"),
        }
    }
}

/// Shortest representation that parses back to the same bits.
fn fmt_real(x: f64) -> String {
    let a = x.abs();
    if x == 0.0 || (1e-4..1e15).contains(&a) {
        format!("{x}")
    } else {
        format!("{x:e}")
    }
}

fn fmt_opt(x: Option<f64>) -> String {
    x.map_or_else(|| "none".into(), fmt_real)
}

fn parse_real(key: &str, v: &str) -> Result<f64> {
    let x: f64 = v
        .parse()
        .map_err(|_| Error::Config(format!("{key}: '{v}' is not a number")))?;
    if !x.is_finite() {
        return Err(Error::Config(format!("{key}: '{v}' is not finite")));
    }
    Ok(x)
}

fn parse_opt(key: &str, v: &str) -> Result<Option<f64>> {
    if v == "none" {
        Ok(None)
    } else {
        parse_real(key, v).map(Some)
    }
}

fn parse_int<T: FromStr>(key: &str, v: &str) -> Result<T> {
    v.parse()
        .map_err(|_| Error::Config(format!("{key}: '{v}' is not a non-negative integer")))
}

fn split_list(v: &str) -> impl Iterator<Item = &str> {
    v.split(',').map(str::trim).filter(|s| !s.is_empty())
}

impl fmt::Display for KappaSource {
    fn fmt(&self, f: &mut fmt::Formatter<'_>) -> fmt::Result {
        match self {
            KappaSource::Table => write!(f, "table"),
            KappaSource::TableCapped(c) => write!(f, "table-cap:{}", fmt_real(*c)),
            KappaSource::List(l) => {
                write!(f, "list:{}", l.iter().map(|k| fmt_real(*k)).collect::<Vec<_>>().join(","))
            }
        }
    }
}

impl ExperimentConfig {
    pub const KEYS: [&'static str; 19] = [
        "name",
        "regime",
        "alpha",
        "eps",
        "delta",
        "a0",
        "q_list",
        "grid_res",
        "velocity",
        "kappa",
        "theta0",
        "t_end",
        "mc.n_traj",
        "mc.dt",
        "mc.m",
        "mc.seed",
        "mc.d_starts",
        "stages",
        "out_dir",
    ];

    /// Sets one key from its textual value.
    pub fn set(&mut self, key: &str, v: &str) -> Result<()> {
        let v = v.trim();
        match key {
            "name" => {
                if v.is_empty() || v.contains(['\n', '#']) {
                    return Err(Error::Config(format!("name: '{v}' must be non-empty, one line, without '#'")));
                }
                self.name = v.into()
            }
            "regime" => {
                self.regime = match v {
                    "desk" => RegimeKind::Desk,
                    "paper" => RegimeKind::Paper,
                    _ => return Err(Error::Config(format!("regime: '{v}' is not desk|paper"))),
                }
            }
            "alpha" => self.alpha = parse_opt(key, v)?,
            "eps" => self.eps = parse_opt(key, v)?,
            "delta" => self.delta = parse_real(key, v)?,
            "a0" => self.a0 = parse_opt(key, v)?,
            "q_list" => {
                self.q_list = split_list(v).map(|s| parse_int(key, s)).collect::<Result<_>>()?;
            }
            "grid_res" => self.grid_res = parse_int(key, v)?,
            "velocity" => {
                self.velocity = match v {
                    "built" => VelocitySource::Built,
                    "zero" => VelocitySource::Zero,
                    _ => return Err(Error::Config(format!("velocity: '{v}' is not built|zero"))),
                }
            }
            "kappa" => {
                self.kappa = if v == "table" {
                    KappaSource::Table
                } else if let Some(c) = v.strip_prefix("table-cap:") {
                    KappaSource::TableCapped(parse_real(key, c)?)
                } else if let Some(l) = v.strip_prefix("list:") {
                    KappaSource::List(split_list(l).map(|s| parse_real(key, s)).collect::<Result<_>>()?)
                } else {
                    return Err(Error::Config(format!("kappa: '{v}' is not table|table-cap:K|list:K1,...")));
                }
            }
            "theta0" => self.theta0 = v.parse()?,
            "t_end" => self.t_end = parse_real(key, v)?,
            "mc.n_traj" => self.mc.n_traj = parse_int(key, v)?,
            "mc.dt" => self.mc.dt = parse_real(key, v)?,
            "mc.m" => self.mc.m = parse_int(key, v)?,
            "mc.seed" => self.mc.seed = parse_int(key, v)?,
            "mc.d_starts" => self.mc.d_starts = parse_int(key, v)?,
            "stages" => {
                let mut st = Vec::new();
                for s in split_list(v) {
                    let stage = Stage::ALL
                        .into_iter()
                        .find(|x| x.name() == s)
                        .ok_or_else(|| Error::Config(format!("stages: unknown stage '{s}'")))?;
                    st.push(stage);
                }
                self.stages = st;
            }
            "out_dir" => {
                if v.is_empty() || v.contains(['\n', '#']) {
                    return Err(Error::Config("out_dir must be a non-empty single-line path without '#'".into()));
                }
                self.out_dir = PathBuf::from(v)
            }
            _ => {
                return Err(Error::Config(format!(
                    "unknown key '{key}' (known: {})",
                    Self::KEYS.join(", ")
                )))
            }
        }
        Ok(())
    }

    /// Applies a `key=value` override.
    pub fn apply_override(&mut self, kv: &str) -> Result<()> {
        let (k, v) = kv
            .split_once('=')
            .ok_or_else(|| Error::Config(format!("override '{kv}' is not key=value")))?;
        self.set(k.trim(), v)
    }

    /// Parses a config file on top of the defaults, then validates it.
    pub fn parse(text: &str) -> Result<Self> {
        let mut c = ExperimentConfig::default();
        let mut seen = std::collections::BTreeSet::new();
        for (ln, line) in text.lines().enumerate() {
            let line = line.split('#').next().unwrap_or("").trim();
            if line.is_empty() {
                continue;
            }
            let (k, v) = line
                .split_once('=')
                .ok_or_else(|| Error::Config(format!("line {}: expected key = value", ln + 1)))?;
            let k = k.trim();
            if !seen.insert(k.to_string()) {
                return Err(Error::Config(format!("line {}: key '{k}' given twice", ln + 1)));
            }
            c.set(k, v).map_err(|e| Error::Config(format!("line {}: {e}", ln + 1)))?;
        }
        c.validate()?;
        Ok(c)
    }

    /// Canonical text form (every key, schema order).
    pub fn serialize(&self) -> String {
        let mut s = String::new();
        let mut kv = |k: &str, v: String| {
            let _ = writeln!(s, "{k} = {v}");
        };
        kv("name", self.name.clone());
        kv(
            "regime",
            match self.regime {
                RegimeKind::Desk => "desk".into(),
                RegimeKind::Paper => "paper".into(),
            },
        );
        kv("alpha", fmt_opt(self.alpha));
        kv("eps", fmt_opt(self.eps));
        kv("delta", fmt_real(self.delta));
        kv("a0", fmt_opt(self.a0));
        kv("q_list", self.q_list.iter().map(|q| q.to_string()).collect::<Vec<_>>().join(","));
        kv("grid_res", self.grid_res.to_string());
        kv(
            "velocity",
            match self.velocity {
                VelocitySource::Built => "built".into(),
                VelocitySource::Zero => "zero".into(),
            },
        );
        kv("kappa", self.kappa.to_string());
        kv("theta0", self.theta0.to_string());
        kv("t_end", fmt_real(self.t_end));
        kv("mc.n_traj", self.mc.n_traj.to_string());
        kv("mc.dt", fmt_real(self.mc.dt));
        kv("mc.m", self.mc.m.to_string());
        kv("mc.seed", self.mc.seed.to_string());
        kv("mc.d_starts", self.mc.d_starts.to_string());
        kv("stages", self.stages.iter().map(|s| s.name()).collect::<Vec<_>>().join(","));
        kv("out_dir", self.out_dir.display().to_string());
        s
    }

    /// Schema checks that do not need the parameter table.
    pub fn validate(&self) -> Result<()> {
        let bad = |m: String| Err(Error::Config(m));
        if !(self.delta > 0.0) {
            return bad(format!("delta = {} must be positive", self.delta));
        }
        if let Some(e) = self.eps {
            if !(e > 0.0) {
                return bad(format!("eps = {e} must be positive"));
            }
        }
        if let Some(a) = self.alpha {
            if !(a > 0.0 && a < 1.0) {
                return bad(format!("alpha = {a} must lie in (0,1)"));
            }
        }
        match self.regime {
            RegimeKind::Desk => {
                if !self.a0.is_some_and(|a| a > 0.0 && a < 1.0) {
                    return bad("desk regime needs a0 in (0,1)".into());
                }
            }
            RegimeKind::Paper => {
                if self.alpha.is_none() {
                    return bad("paper regime needs alpha".into());
                }
                if self.eps.is_none() {
                    return bad("paper regime needs eps".into());
                }
                if let Some(a) = self.a0 {
                    if !(a > 0.0 && a < 1.0) {
                        return bad(format!("a0 = {a} must lie in (0,1)"));
                    }
                }
            }
        }
        if self.q_list.is_empty() {
            return bad("q_list must not be empty".into());
        }
        if self.grid_res != 0 && (self.grid_res < 4 || self.grid_res % 2 != 0) {
            return bad(format!("grid_res = {} must be 0 or even and >= 4", self.grid_res));
        }
        if self.velocity == VelocitySource::Zero && self.grid_res == 0 {
            return bad("velocity = zero needs an explicit grid_res".into());
        }
        match &self.kappa {
            KappaSource::Table => {}
            KappaSource::TableCapped(c) => {
                if !(*c > 0.0) {
                    return bad(format!("kappa cap {c} must be positive"));
                }
            }
            KappaSource::List(l) => {
                if l.is_empty() || l.iter().any(|k| !(*k >= 0.0)) {
                    return bad("kappa list must be non-empty and non-negative".into());
                }
            }
        }
        if self.theta0 == Theta0Kind::Stream && self.velocity == VelocitySource::Zero {
            return bad("theta0 = stream needs a built velocity".into());
        }
        if !(self.t_end >= 0.0) {
            return bad(format!("t_end = {} must be >= 0", self.t_end));
        }
        if self.mc.n_traj == 0 || !(self.mc.dt > 0.0) || self.mc.m == 0 || self.mc.d_starts == 0 {
            return bad("mc.n_traj, mc.m, mc.d_starts must be >= 1 and mc.dt > 0".into());
        }
        if self.stages.is_empty() {
            return bad("stages must not be empty".into());
        }
        let needs_built = [Stage::Tree, Stage::Variance];
        if self.velocity == VelocitySource::Zero && self.stages.iter().any(|s| needs_built.contains(s)) {
            return bad("stages tree/variance need velocity = built".into());
        }
        Ok(())
    }

    /// Built-in configurations by name.
    pub fn builtin(name: &str) -> Result<Self> {
        let mut c = ExperimentConfig::default();
        match name {
            // u = 0, θ_0 = cos 2πx: the fluctuation–dissipation equality in
            // closed form, small enough to run in seconds.
            "fldiss-smoke" => {
                c.name = name.into();
                c.velocity = VelocitySource::Zero;
                c.grid_res = 32;
                c.kappa = KappaSource::List(vec![1e-2]);
                c.theta0 = Theta0Kind::CosX;
                c.mc = McConfig {
                    n_traj: 2000,
                    dt: 1.0,
                    m: 8,
                    seed: 1,
                    d_starts: 1,
                };
                c.stages = vec![Stage::Params, Stage::Field, Stage::Solve, Stage::Fldiss];
                c.out_dir = PathBuf::from("runs/fldiss-smoke");
            }
            // u = 0 heat decay of cos 2πx.
            "heat" => {
                c.name = name.into();
                c.velocity = VelocitySource::Zero;
                c.grid_res = 64;
                c.kappa = KappaSource::List(vec![1e-3]);
                c.stages = vec![Stage::Params, Stage::Field, Stage::Solve, Stage::Ladder];
                c.out_dir = PathBuf::from("runs/heat");
            }
            _ => return Err(Error::Config(format!("no built-in config '{name}' (fldiss-smoke|heat)"))),
        }
        c.validate()?;
        Ok(c)
    }
}
