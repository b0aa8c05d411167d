//! Experiment specification: presets, a flat `section.key = value` TOML
//! file, and `--set key=value` overrides applied in that order.
//!
//! Every key listed by [`ExperimentSpec::entries`] can be set, and the
//! canonical rendering of those entries is what the content hash covers.

use std::fmt;
use std::path::{Path, PathBuf};
use std::str::FromStr;

use irsfd::baselines::{Robustness, SchemeId};
use irsfd::channel_gen::{CsiErrorPolicy, GeometryConfig, Point3};
use irsfd::ewmmse::{InitPolicy, SolverOptions, UpdateOrder};
use irsfd::SystemConfig;
use serde::{Deserialize, Serialize};
use sha2::{Digest, Sha256};
use toml::Value;

use crate::error::{HarnessError, Result};

#[derive(Clone, Copy, Debug, PartialEq, Eq, Serialize, Deserialize)]
#[serde(rename_all = "snake_case")]
pub enum SweepKind {
    /// Error scale `ρ` varies at a fixed SNR.
    Rho,
    /// SNR varies at a fixed `ρ`.
    Snr,
}

impl fmt::Display for SweepKind {
    fn fmt(&self, f: &mut fmt::Formatter<'_>) -> fmt::Result {
        f.write_str(match self {
            Self::Rho => "rho",
            Self::Snr => "snr",
        })
    }
}

impl FromStr for SweepKind {
    type Err = String;

    fn from_str(s: &str) -> std::result::Result<Self, Self::Err> {
        match s {
            "rho" | "rho_sweep" => Ok(Self::Rho),
            "snr" | "snr_sweep" => Ok(Self::Snr),
            _ => Err(format!("expected 'rho' or 'snr', got '{s}'")),
        }
    }
}

/// Both sweep shapes are stored; `kind` selects which fields are used.
#[derive(Clone, Debug, PartialEq)]
pub struct SweepSpec {
    pub kind: SweepKind,
    pub snr_db: f64,
    pub rho_list: Vec<f64>,
    pub rho: f64,
    pub snr_db_list: Vec<f64>,
}

#[derive(Clone, Copy, Debug, PartialEq, Serialize, Deserialize)]
pub struct SweepPoint {
    pub rho: f64,
    pub snr_db: f64,
}

impl SweepSpec {
    pub fn points(&self) -> Vec<SweepPoint> {
        match self.kind {
            SweepKind::Rho => self
                .rho_list
                .iter()
                .map(|&rho| SweepPoint { rho, snr_db: self.snr_db })
                .collect(),
            SweepKind::Snr => self
                .snr_db_list
                .iter()
                .map(|&snr_db| SweepPoint { rho: self.rho, snr_db })
                .collect(),
        }
    }
}

#[derive(Clone, Copy, Debug, PartialEq, Eq)]
pub enum Preset {
    Desk,
    Paper,
}

impl FromStr for Preset {
    type Err = HarnessError;

    fn from_str(s: &str) -> Result<Self> {
        match s {
            "desk" => Ok(Self::Desk),
            "paper" => Ok(Self::Paper),
            _ => Err(HarnessError::Config(format!("unknown preset '{s}' (desk, paper)"))),
        }
    }
}

#[derive(Clone, Debug, PartialEq)]
pub struct ExperimentSpec {
    /// Power budgets are overwritten per sweep point from the SNR.
    pub system: SystemConfig,
    pub geometry: GeometryConfig,
    /// `rho` is overwritten per sweep point.
    pub csi: CsiErrorPolicy,
    pub solver: SolverOptions,
    pub sweep: SweepSpec,
    pub schemes: Vec<SchemeId>,
    pub n_scenarios: usize,
    pub n_error_draws: usize,
    pub master_seed: u64,
    pub out_dir: PathBuf,
}

impl Default for ExperimentSpec {
    fn default() -> Self {
        Self::preset(Preset::Desk)
    }
}

impl ExperimentSpec {
    pub fn preset(preset: Preset) -> Self {
        let desk = Self {
            system: SystemConfig::desk_default().with_snr_db(30.0),
            geometry: GeometryConfig::default(),
            csi: CsiErrorPolicy::default(),
            solver: SolverOptions::default(),
            sweep: SweepSpec {
                kind: SweepKind::Rho,
                snr_db: 30.0,
                rho_list: vec![0.001, 0.01, 0.1, 0.4, 1.0],
                rho: 0.4,
                snr_db_list: vec![0.0, 10.0, 20.0, 30.0],
            },
            schemes: vec![
                SchemeId::PROPOSED,
                SchemeId::PROPOSED.with_robustness(Robustness::NonRobust),
            ],
            n_scenarios: 50,
            n_error_draws: 200,
            master_seed: 1,
            out_dir: PathBuf::from("out"),
        };
        match preset {
            Preset::Desk => desk,
            Preset::Paper => Self {
                system: SystemConfig::paper_default().with_snr_db(30.0),
                schemes: SchemeId::ALL.to_vec(),
                n_error_draws: 500,
                ..desk
            },
        }
    }

    /// Reads a spec file on top of `self`.
    pub fn apply_file(&mut self, path: &Path) -> Result<()> {
        let text = std::fs::read_to_string(path).map_err(|e| HarnessError::io(path, e))?;
        let table: toml::Table = text.parse().map_err(|e: toml::de::Error| HarnessError::Parse {
            path: path.to_path_buf(),
            message: e.to_string(),
        })?;
        let mut flat = Vec::new();
        flatten("", &Value::Table(table), &mut flat);
        for (key, value) in flat {
            self.set(&key, &value)?;
        }
        Ok(())
    }

    /// Applies one `key=value` override; the value is read as a TOML
    /// literal and falls back to a bare string.
    pub fn apply_override(&mut self, assignment: &str) -> Result<()> {
        let (key, raw) = assignment
            .split_once('=')
            .ok_or_else(|| HarnessError::Config(format!("expected key=value, got '{assignment}'")))?;
        let raw = raw.trim();
        let value = format!("v = {raw}")
            .parse::<toml::Table>()
            .ok()
            .and_then(|mut t| t.remove("v"))
            .unwrap_or_else(|| Value::String(raw.to_string()));
        self.set(key.trim(), &value)
    }

    pub fn set(&mut self, key: &str, value: &Value) -> Result<()> {
        let v = Field { key, value };
        match key {
            "system.m0" => self.system.m0 = v.usize()?,
            "system.n0" => self.system.n0 = v.usize()?,
            "system.mk" => self.system.mk = v.usize()?,
            "system.nj" => self.system.nj = v.usize()?,
            "system.uk" => self.system.uk = v.usize()?,
            "system.vj" => self.system.vj = v.usize()?,
            "system.irs_rows" => self.system.irs_rows = v.usize()?,
            "system.irs_cols" => self.system.irs_cols = v.usize()?,
            "system.sigma0_sq" => self.system.sigma0_sq = v.f64()?,
            "system.sigmaj_sq" => self.system.sigmaj_sq = v.f64()?,
            "system.wk" => self.system.wk = v.f64()?,
            "system.wj" => self.system.wj = v.f64()?,
            "geometry.bs" => self.geometry.bs = v.point()?,
            "geometry.irs" => self.geometry.irs = v.point()?,
            "geometry.ul_center" => self.geometry.ul_center = v.point()?,
            "geometry.dl_center" => self.geometry.dl_center = v.point()?,
            "geometry.user_radius" => self.geometry.user_radius = v.f64()?,
            "geometry.rician_k_direct" => self.geometry.rician_k_direct = v.f64()?,
            "geometry.rician_k_si" => self.geometry.rician_k_si = v.f64()?,
            "geometry.pathloss_ref_db" => self.geometry.pathloss_ref_db = v.f64()?,
            "geometry.pathloss_exp_direct" => self.geometry.pathloss_exp_direct = v.f64()?,
            "geometry.pathloss_exp_irs" => self.geometry.pathloss_exp_irs = v.f64()?,
            "geometry.si_distance" => self.geometry.si_distance = v.f64()?,
            "geometry.reference_distance" => {
                self.geometry.reference_distance = match value {
                    Value::String(s) if s == "none" => None,
                    _ => Some(v.f64()?),
                }
            }
            "csi.alpha_decay" => self.csi.alpha_decay = v.f64()?,
            "solver.outer_tol" => self.solver.outer_tol = v.f64()?,
            "solver.max_outer_iters" => self.solver.max_outer_iters = v.usize()?,
            "solver.bisection_tol" => self.solver.bisection_tol = v.f64()?,
            "solver.max_bisection_iters" => self.solver.max_bisection_iters = v.usize()?,
            "solver.mm_inner_tol" => self.solver.irs.inner_tol = v.f64()?,
            "solver.mm_max_inner_iters" => self.solver.irs.max_inner_iters = v.usize()?,
            "solver.init_policy" => self.solver.init_policy = parse_init(v.str()?).map_err(|m| v.err(m))?,
            "solver.update_order" => {
                self.solver.update_order = match v.str()? {
                    "grouped" => UpdateOrder::Grouped,
                    "per_user" => UpdateOrder::PerUser,
                    other => return Err(v.err(format!("unknown update order '{other}'"))),
                }
            }
            "solver.optimize_irs" => self.solver.optimize_irs = v.bool()?,
            "sweep.kind" => self.sweep.kind = v.str()?.parse().map_err(|m| v.err(m))?,
            "sweep.snr_db" => self.sweep.snr_db = v.f64()?,
            "sweep.rho_list" => self.sweep.rho_list = v.f64_list()?,
            "sweep.rho" => self.sweep.rho = v.f64()?,
            "sweep.snr_db_list" => self.sweep.snr_db_list = v.f64_list()?,
            "schemes" => {
                self.schemes = v
                    .str_list()?
                    .iter()
                    .map(|s| s.parse::<SchemeId>().map_err(|e| v.err(e.to_string())))
                    .collect::<Result<_>>()?
            }
            "n_scenarios" => self.n_scenarios = v.usize()?,
            "n_error_draws" => self.n_error_draws = v.usize()?,
            "master_seed" => self.master_seed = v.u64()?,
            "out_dir" => self.out_dir = PathBuf::from(v.str()?),
            _ => {
                return Err(HarnessError::Key {
                    key: key.to_string(),
                    message: "unknown key".into(),
                })
            }
        }
        Ok(())
    }

    /// Every settable key with its current value, in a fixed order.
    pub fn entries(&self) -> Vec<(&'static str, Value)> {
        let f = Value::Float;
        let n = |x: usize| Value::Integer(x as i64);
        let s = |x: &str| Value::String(x.to_string());
        let list = |xs: &[f64]| Value::Array(xs.iter().copied().map(Value::Float).collect());
        let (sys, geo, sol) = (&self.system, &self.geometry, &self.solver);
        vec![
            ("system.m0", n(sys.m0)),
            ("system.n0", n(sys.n0)),
            ("system.mk", n(sys.mk)),
            ("system.nj", n(sys.nj)),
            ("system.uk", n(sys.uk)),
            ("system.vj", n(sys.vj)),
            ("system.irs_rows", n(sys.irs_rows)),
            ("system.irs_cols", n(sys.irs_cols)),
            ("system.sigma0_sq", f(sys.sigma0_sq)),
            ("system.sigmaj_sq", f(sys.sigmaj_sq)),
            ("system.wk", f(sys.wk)),
            ("system.wj", f(sys.wj)),
            ("geometry.bs", list(&geo.bs)),
            ("geometry.irs", list(&geo.irs)),
            ("geometry.ul_center", list(&geo.ul_center)),
            ("geometry.dl_center", list(&geo.dl_center)),
            ("geometry.user_radius", f(geo.user_radius)),
            ("geometry.rician_k_direct", f(geo.rician_k_direct)),
            ("geometry.rician_k_si", f(geo.rician_k_si)),
            ("geometry.pathloss_ref_db", f(geo.pathloss_ref_db)),
            ("geometry.pathloss_exp_direct", f(geo.pathloss_exp_direct)),
            ("geometry.pathloss_exp_irs", f(geo.pathloss_exp_irs)),
            ("geometry.si_distance", f(geo.si_distance)),
            (
                "geometry.reference_distance",
                geo.reference_distance.map_or_else(|| s("none"), f),
            ),
            ("csi.alpha_decay", f(self.csi.alpha_decay)),
            ("solver.outer_tol", f(sol.outer_tol)),
            ("solver.max_outer_iters", n(sol.max_outer_iters)),
            ("solver.bisection_tol", f(sol.bisection_tol)),
            ("solver.max_bisection_iters", n(sol.max_bisection_iters)),
            ("solver.mm_inner_tol", f(sol.irs.inner_tol)),
            ("solver.mm_max_inner_iters", n(sol.irs.max_inner_iters)),
            ("solver.init_policy", s(&init_name(sol.init_policy))),
            (
                "solver.update_order",
                s(match sol.update_order {
                    UpdateOrder::Grouped => "grouped",
                    UpdateOrder::PerUser => "per_user",
                }),
            ),
            ("solver.optimize_irs", Value::Boolean(sol.optimize_irs)),
            ("sweep.kind", s(&self.sweep.kind.to_string())),
            ("sweep.snr_db", f(self.sweep.snr_db)),
            ("sweep.rho_list", list(&self.sweep.rho_list)),
            ("sweep.rho", f(self.sweep.rho)),
            ("sweep.snr_db_list", list(&self.sweep.snr_db_list)),
            (
                "schemes",
                Value::Array(self.schemes.iter().map(|id| Value::String(id.label())).collect()),
            ),
            ("n_scenarios", n(self.n_scenarios)),
            ("n_error_draws", n(self.n_error_draws)),
            // Seeds above i64::MAX do not fit a TOML integer.
            ("master_seed", s(&self.master_seed.to_string())),
            ("out_dir", s(&self.out_dir.to_string_lossy())),
        ]
    }

    /// One `key = value` line per entry, the form `show-config` prints and
    /// the content hash covers. `out_dir` is excluded from the hash.
    pub fn render(&self) -> String {
        self.entries()
            .into_iter()
            .map(|(k, v)| format!("{k} = {v}\n"))
            .collect()
    }

    /// SHA-256 over `blob <len>\0<canonical text>` without `out_dir`.
    pub fn content_hash(&self) -> String {
        let body: String = self
            .entries()
            .into_iter()
            .filter(|(k, _)| *k != "out_dir")
            .map(|(k, v)| format!("{k} = {v}\n"))
            .collect();
        let mut hasher = Sha256::new();
        hasher.update(format!("blob {}\0", body.len()).as_bytes());
        hasher.update(body.as_bytes());
        hex::encode(hasher.finalize())
    }

    pub fn validate(&self) -> Result<()> {
        self.system.validate()?;
        self.geometry.validate()?;
        self.solver.validate()?;
        let mut csi = self.csi.clone();
        for p in self.sweep.points() {
            csi.rho = p.rho;
            csi.validate()?;
            if !p.snr_db.is_finite() {
                return Err(HarnessError::Config("SNR values must be finite".into()));
            }
        }
        if self.sweep.points().is_empty() {
            return Err(HarnessError::Config(format!(
                "{} sweep has no points",
                self.sweep.kind
            )));
        }
        if self.schemes.is_empty() {
            return Err(HarnessError::Config("scheme list is empty".into()));
        }
        if self.n_scenarios == 0 || self.n_error_draws < 2 {
            return Err(HarnessError::Config(
                "n_scenarios must be at least 1 and n_error_draws at least 2".into(),
            ));
        }
        Ok(())
    }
}

fn flatten(prefix: &str, value: &Value, out: &mut Vec<(String, Value)>) {
    match value {
        Value::Table(t) => {
            for (k, v) in t {
                let key = if prefix.is_empty() { k.clone() } else { format!("{prefix}.{k}") };
                flatten(&key, v, out);
            }
        }
        _ => out.push((prefix.to_string(), value.clone())),
    }
}

fn init_name(p: InitPolicy) -> String {
    match p {
        InitPolicy::SvdEstimate => "svd_estimate".into(),
        InitPolicy::LeakageAware => "leakage_aware".into(),
        InitPolicy::ScaledIdentity => "scaled_identity".into(),
        InitPolicy::Random(None) => "random".into(),
        InitPolicy::Random(Some(seed)) => format!("random:{seed}"),
    }
}

fn parse_init(s: &str) -> std::result::Result<InitPolicy, String> {
    match s {
        "svd_estimate" => Ok(InitPolicy::SvdEstimate),
        "leakage_aware" => Ok(InitPolicy::LeakageAware),
        "scaled_identity" => Ok(InitPolicy::ScaledIdentity),
        "random" => Ok(InitPolicy::Random(None)),
        _ => s
            .strip_prefix("random:")
            .and_then(|seed| seed.parse().ok())
            .map(|seed| InitPolicy::Random(Some(seed)))
            .ok_or_else(|| format!("unknown init policy '{s}'")),
    }
}

struct Field<'a> {
    key: &'a str,
    value: &'a Value,
}

impl Field<'_> {
    fn err(&self, message: impl Into<String>) -> HarnessError {
        HarnessError::Key {
            key: self.key.to_string(),
            message: message.into(),
        }
    }

    fn f64(&self) -> Result<f64> {
        match self.value {
            Value::Float(x) => Ok(*x),
            Value::Integer(i) => Ok(*i as f64),
            other => Err(self.err(format!("expected a number, got {other}"))),
        }
    }

    fn u64(&self) -> Result<u64> {
        match self.value {
            Value::Integer(i) if *i >= 0 => Ok(*i as u64),
            Value::String(s) => s.parse().map_err(|_| self.err(format!("expected an unsigned integer, got '{s}'"))),
            other => Err(self.err(format!("expected an unsigned integer, got {other}"))),
        }
    }

    fn usize(&self) -> Result<usize> {
        self.u64().map(|x| x as usize)
    }

    fn bool(&self) -> Result<bool> {
        self.value
            .as_bool()
            .ok_or_else(|| self.err(format!("expected a boolean, got {}", self.value)))
    }

    fn str(&self) -> Result<&str> {
        self.value
            .as_str()
            .ok_or_else(|| self.err(format!("expected a string, got {}", self.value)))
    }

    fn array(&self) -> Result<&Vec<Value>> {
        self.value
            .as_array()
            .ok_or_else(|| self.err(format!("expected an array, got {}", self.value)))
    }

    fn f64_list(&self) -> Result<Vec<f64>> {
        self.array()?
            .iter()
            .map(|value| Field { key: self.key, value }.f64())
            .collect()
    }

    fn str_list(&self) -> Result<Vec<String>> {
        match self.value {
            // A single comma-separated string is accepted on the command line.
            Value::String(s) => Ok(s.split(',').map(|p| p.trim().to_string()).collect()),
            _ => self
                .array()?
                .iter()
                .map(|value| Field { key: self.key, value }.str().map(str::to_string))
                .collect(),
        }
    }

    fn point(&self) -> Result<Point3> {
        let xs = self.f64_list()?;
        <[f64; 3]>::try_from(xs).map_err(|_| self.err("expected three coordinates"))
    }
}
