//! Run configuration in TOML with sections `[grid]`, `[model]`, `[time]`,
//! `[init_u]`, `[init_v]` and `[output]`.
//!
//! ```toml
//! [grid]
//! dim = 1
//! cells = [256]
//! lengths = [10.0]
//!
//! [model]
//! m = 2.0
//! chi = 1.0
//! xi = 1.0          # optional, default 0
//!
//! [time]
//! t_end = 50.0
//!
//! [init_u]
//! profile = "gaussian"
//! center = [5.0]
//! width = 1.0
//! amplitude = 1.0
//!
//! [init_v]
//! profile = "cosine"
//! base = 0.5
//! amplitude = 0.3
//! mode = [1]
//! ```
//!
//! Unknown sections and keys are rejected.

use std::collections::BTreeSet;
use std::path::{Path, PathBuf};

use rand::{Rng, SeedableRng};
use rand_chacha::ChaCha8Rng;
use serde::Serialize;
use thiserror::Error;
use toml::{Table, Value};

use crate::grid::{Field, Grid};
use crate::model::ModelParams;
use crate::solver::{SimState, StepControl};

/// Upper bound on the total number of cells accepted from a configuration.
pub const MAX_CELLS: usize = 1 << 26;

#[derive(Debug, Error, Clone, PartialEq)]
pub enum ConfigError {
    #[error("config is not valid TOML: {0}")]
    Syntax(String),
    #[error("{key} {message}")]
    Field { key: String, message: String },
    #[error("{key}: {message}")]
    Snapshot { key: String, message: String },
}

fn field_err(key: impl Into<String>, message: impl Into<String>) -> ConfigError {
    ConfigError::Field {
        key: key.into(),
        message: message.into(),
    }
}

#[derive(Debug, Clone, PartialEq, Serialize)]
pub struct GridSpec {
    pub dim: usize,
    pub cells: Vec<usize>,
    pub lengths: Vec<f64>,
}

impl GridSpec {
    pub fn build(&self) -> Result<Grid, ConfigError> {
        Grid::new(self.dim, &self.cells, &self.lengths).map_err(|e| field_err("grid", e.to_string()))
    }
}

#[derive(Debug, Clone, PartialEq, Serialize)]
#[serde(tag = "profile", rename_all = "snake_case")]
pub enum InitialProfile {
    Constant {
        value: f64,
    },
    /// `base + amplitude * exp(-|x - center|² / (2 width²))`
    Gaussian {
        center: Vec<f64>,
        width: f64,
        amplitude: f64,
        base: f64,
    },
    /// `base + amplitude * Π cos(mode_a π x_a / L_a)`
    Cosine {
        base: f64,
        amplitude: f64,
        mode: Vec<u32>,
    },
    /// The matching field of a stored snapshot.
    Snapshot { path: PathBuf },
}

#[derive(Debug, Clone, PartialEq, Serialize)]
pub struct InitSpec {
    pub profile: InitialProfile,
    /// Relative amplitude of seeded multiplicative noise, in `[0, 1)`.
    pub noise: f64,
}

#[derive(Debug, Clone, PartialEq, Serialize)]
pub struct OutputSpec {
    pub dir: PathBuf,
    pub snapshots: bool,
    pub verdict: bool,
    pub tail_fraction: f64,
    pub tolerance: f64,
    pub seed: u64,
}

#[derive(Debug, Clone, PartialEq, Serialize)]
pub struct RunConfig {
    pub grid: GridSpec,
    pub model: ModelParams,
    pub time: StepControl,
    pub init_u: InitSpec,
    pub init_v: InitSpec,
    pub output: OutputSpec,
}

/// Reads one section, tracking which keys were consumed.
struct Section<'a> {
    name: &'static str,
    table: &'a Table,
    seen: BTreeSet<&'static str>,
}

impl<'a> Section<'a> {
    fn key(&self, k: &str) -> String {
        format!("{}.{}", self.name, k)
    }

    fn raw(&mut self, k: &'static str) -> Option<&'a Value> {
        self.seen.insert(k);
        self.table.get(k)
    }

    fn float_opt(&mut self, k: &'static str) -> Result<Option<f64>, ConfigError> {
        match self.raw(k) {
            None => Ok(None),
            Some(Value::Float(x)) if x.is_finite() => Ok(Some(*x)),
            Some(Value::Integer(i)) => Ok(Some(*i as f64)),
            Some(_) => Err(field_err(self.key(k), "must be a finite number")),
        }
    }

    fn float(&mut self, k: &'static str) -> Result<f64, ConfigError> {
        self.float_opt(k)?
            .ok_or_else(|| field_err(self.key(k), "is required"))
    }

    fn float_or(&mut self, k: &'static str, default: f64) -> Result<f64, ConfigError> {
        Ok(self.float_opt(k)?.unwrap_or(default))
    }

    fn uint(&mut self, k: &'static str, v: &Value) -> Result<u64, ConfigError> {
        match v {
            Value::Integer(i) if *i >= 0 => Ok(*i as u64),
            _ => Err(field_err(self.key(k), "must be a nonnegative integer")),
        }
    }

    fn uint_req(&mut self, k: &'static str) -> Result<u64, ConfigError> {
        let v = self
            .raw(k)
            .ok_or_else(|| field_err(self.key(k), "is required"))?;
        self.uint(k, v)
    }

    fn array(&mut self, k: &'static str) -> Result<&'a [Value], ConfigError> {
        match self.raw(k) {
            Some(Value::Array(a)) => Ok(a.as_slice()),
            Some(_) => Err(field_err(self.key(k), "must be an array")),
            None => Err(field_err(self.key(k), "is required")),
        }
    }

    fn float_array(&mut self, k: &'static str) -> Result<Vec<f64>, ConfigError> {
        let key = self.key(k);
        self.array(k)?
            .iter()
            .map(|v| match v {
                Value::Float(x) if x.is_finite() => Ok(*x),
                Value::Integer(i) => Ok(*i as f64),
                _ => Err(field_err(key.clone(), "must contain finite numbers")),
            })
            .collect()
    }

    fn uint_array(&mut self, k: &'static str) -> Result<Vec<u64>, ConfigError> {
        let key = self.key(k);
        self.array(k)?
            .iter()
            .map(|v| match v {
                Value::Integer(i) if *i >= 0 => Ok(*i as u64),
                _ => Err(field_err(key.clone(), "must contain nonnegative integers")),
            })
            .collect()
    }

    fn string(&mut self, k: &'static str) -> Result<Option<&'a str>, ConfigError> {
        match self.raw(k) {
            None => Ok(None),
            Some(Value::String(s)) => Ok(Some(s.as_str())),
            Some(_) => Err(field_err(self.key(k), "must be a string")),
        }
    }

    fn boolean_or(&mut self, k: &'static str, default: bool) -> Result<bool, ConfigError> {
        match self.raw(k) {
            None => Ok(default),
            Some(Value::Boolean(b)) => Ok(*b),
            Some(_) => Err(field_err(self.key(k), "must be true or false")),
        }
    }

    /// Errors on keys that were never consumed.
    fn finish(self) -> Result<(), ConfigError> {
        for k in self.table.keys() {
            if !self.seen.contains(k.as_str()) {
                return Err(field_err(format!("{}.{}", self.name, k), "is not a recognized key"));
            }
        }
        Ok(())
    }
}

const SECTIONS: [&str; 6] = ["grid", "model", "time", "init_u", "init_v", "output"];

fn section<'a>(root: &'a Table, name: &'static str, required: bool) -> Result<Section<'a>, ConfigError> {
    static EMPTY: std::sync::OnceLock<Table> = std::sync::OnceLock::new();
    let table = match root.get(name) {
        Some(Value::Table(t)) => t,
        Some(_) => return Err(field_err(name, "must be a section")),
        None if required => return Err(field_err(name, "section is required")),
        None => EMPTY.get_or_init(Table::new),
    };
    Ok(Section {
        name,
        table,
        seen: BTreeSet::new(),
    })
}

fn require(ok: bool, key: String, message: &str) -> Result<(), ConfigError> {
    if ok {
        Ok(())
    } else {
        Err(field_err(key, message))
    }
}

fn parse_grid(root: &Table) -> Result<GridSpec, ConfigError> {
    let mut s = section(root, "grid", true)?;
    let dim = s.uint_req("dim")? as usize;
    require((1..=3).contains(&dim), s.key("dim"), "must be 1, 2 or 3")?;
    let cells = s.uint_array("cells")?;
    require(cells.len() == dim, s.key("cells"), "must have one entry per axis")?;
    require(cells.iter().all(|&c| c >= 2), s.key("cells"), "entries must be >= 2")?;
    let total = cells
        .iter()
        .try_fold(1usize, |acc, &c| acc.checked_mul(usize::try_from(c).ok()?));
    require(
        total.map_or(false, |t| t <= MAX_CELLS),
        s.key("cells"),
        "describe too many cells",
    )?;
    let lengths = s.float_array("lengths")?;
    require(lengths.len() == dim, s.key("lengths"), "must have one entry per axis")?;
    require(lengths.iter().all(|&l| l > 0.0), s.key("lengths"), "entries must be > 0")?;
    s.finish()?;
    Ok(GridSpec {
        dim,
        cells: cells.into_iter().map(|c| c as usize).collect(),
        lengths,
    })
}

fn parse_model(root: &Table) -> Result<ModelParams, ConfigError> {
    let mut s = section(root, "model", true)?;
    let p = ModelParams {
        m: s.float("m")?,
        chi: s.float("chi")?,
        xi: s.float_or("xi", 0.0)?,
        rho: s.float_or("rho", 0.0)?,
        mu: s.float_or("mu", 0.0)?,
        eps_reg: s.float_or("eps_reg", 0.0)?,
    };
    require(p.m > 1.0, s.key("m"), "must be > 1")?;
    require(p.chi > 0.0, s.key("chi"), "must be > 0")?;
    for (k, v) in [("xi", p.xi), ("rho", p.rho), ("mu", p.mu), ("eps_reg", p.eps_reg)] {
        require(v >= 0.0, format!("model.{k}"), "must be >= 0")?;
    }
    s.finish()?;
    Ok(p)
}

fn parse_time(root: &Table) -> Result<StepControl, ConfigError> {
    let mut s = section(root, "time", true)?;
    let t_end = s.float("t_end")?;
    require(t_end >= 0.0, s.key("t_end"), "must be >= 0")?;
    let default_cadence = if t_end > 0.0 { t_end / 100.0 } else { 1.0 };
    let ctl = StepControl {
        t_end,
        cfl_safety: s.float_or("cfl_safety", 0.9)?,
        dt_min: s.float_or("dt_min", 1e-12)?,
        dt_max: s.float_or("dt_max", 0.01)?,
        output_cadence: s.float_or("output_cadence", default_cadence)?,
    };
    require(
        ctl.cfl_safety > 0.0 && ctl.cfl_safety <= 1.0,
        s.key("cfl_safety"),
        "must lie in (0, 1]",
    )?;
    require(ctl.dt_min > 0.0, s.key("dt_min"), "must be > 0")?;
    require(ctl.dt_max >= ctl.dt_min, s.key("dt_max"), "must be >= time.dt_min")?;
    require(ctl.output_cadence > 0.0, s.key("output_cadence"), "must be > 0")?;
    s.finish()?;
    Ok(ctl)
}

fn parse_init(root: &Table, name: &'static str, dim: usize) -> Result<InitSpec, ConfigError> {
    let mut s = section(root, name, true)?;
    let kind = s
        .string("profile")?
        .ok_or_else(|| field_err(s.key("profile"), "is required"))?;
    let profile = match kind {
        "constant" => {
            let value = s.float("value")?;
            require(value >= 0.0, s.key("value"), "must be >= 0")?;
            InitialProfile::Constant { value }
        }
        "gaussian" => {
            let center = s.float_array("center")?;
            require(center.len() == dim, s.key("center"), "must have one entry per axis")?;
            let width = s.float("width")?;
            require(width > 0.0, s.key("width"), "must be > 0")?;
            let amplitude = s.float("amplitude")?;
            require(amplitude >= 0.0, s.key("amplitude"), "must be >= 0")?;
            let base = s.float_or("base", 0.0)?;
            require(base >= 0.0, s.key("base"), "must be >= 0")?;
            InitialProfile::Gaussian {
                center,
                width,
                amplitude,
                base,
            }
        }
        "cosine" => {
            let base = s.float("base")?;
            let amplitude = s.float("amplitude")?;
            let mode = s.uint_array("mode")?;
            require(mode.len() == dim, s.key("mode"), "must have one entry per axis")?;
            require(
                mode.iter().all(|&k| k <= u32::MAX as u64),
                s.key("mode"),
                "entries are too large",
            )?;
            require(
                base >= amplitude.abs(),
                s.key("amplitude"),
                "must not exceed base in magnitude (profile would be negative)",
            )?;
            InitialProfile::Cosine {
                base,
                amplitude,
                mode: mode.into_iter().map(|k| k as u32).collect(),
            }
        }
        "snapshot" => {
            let path = s
                .string("path")?
                .ok_or_else(|| field_err(s.key("path"), "is required"))?;
            InitialProfile::Snapshot {
                path: PathBuf::from(path),
            }
        }
        other => {
            return Err(field_err(
                s.key("profile"),
                format!("must be one of constant, gaussian, cosine, snapshot (got {other:?})"),
            ))
        }
    };
    let noise = s.float_or("noise", 0.0)?;
    require((0.0..1.0).contains(&noise), s.key("noise"), "must lie in [0, 1)")?;
    s.finish()?;
    Ok(InitSpec { profile, noise })
}

fn parse_output(root: &Table) -> Result<OutputSpec, ConfigError> {
    let mut s = section(root, "output", false)?;
    let dir = s.string("dir")?.unwrap_or("out");
    let out = OutputSpec {
        dir: PathBuf::from(dir),
        snapshots: s.boolean_or("snapshots", true)?,
        verdict: s.boolean_or("verdict", true)?,
        tail_fraction: s.float_or("tail_fraction", 0.2)?,
        tolerance: s.float_or("tolerance", 1e-3)?,
        seed: match s.raw("seed") {
            None => 0,
            Some(v) => s.uint("seed", v)?,
        },
    };
    require(
        out.tail_fraction > 0.0 && out.tail_fraction <= 1.0,
        s.key("tail_fraction"),
        "must lie in (0, 1]",
    )?;
    require(out.tolerance > 0.0, s.key("tolerance"), "must be > 0")?;
    s.finish()?;
    Ok(out)
}

/// Parses and validates a run configuration.
pub fn parse_config(text: &str) -> Result<RunConfig, ConfigError> {
    let root: Table = text
        .parse()
        .map_err(|e: toml::de::Error| ConfigError::Syntax(e.message().to_string()))?;
    for k in root.keys() {
        if !SECTIONS.contains(&k.as_str()) {
            return Err(field_err(k.clone(), "is not a recognized section"));
        }
    }
    let grid = parse_grid(&root)?;
    let dim = grid.dim;
    Ok(RunConfig {
        model: parse_model(&root)?,
        time: parse_time(&root)?,
        init_u: parse_init(&root, "init_u", dim)?,
        init_v: parse_init(&root, "init_v", dim)?,
        output: parse_output(&root)?,
        grid,
    })
}

impl RunConfig {
    /// Samples the initial profiles. Relative snapshot paths resolve against `base_dir`.
    pub fn initial_state(&self, base_dir: &Path) -> Result<SimState, ConfigError> {
        let grid = self.grid.build()?;
        let mut rng = ChaCha8Rng::seed_from_u64(self.output.seed);
        let u = sample_profile(&self.init_u, "init_u", &grid, base_dir, &mut rng, Component::U)?;
        let v = sample_profile(&self.init_v, "init_v", &grid, base_dir, &mut rng, Component::V)?;
        SimState::new(u, v, 0.0).map_err(|e| field_err("init", e.to_string()))
    }

    /// Copy with one model coefficient replaced.
    pub fn with_param(&self, name: &str, value: f64) -> Result<RunConfig, ConfigError> {
        let mut out = self.clone();
        let slot = match name {
            "m" => &mut out.model.m,
            "chi" => &mut out.model.chi,
            "xi" => &mut out.model.xi,
            "rho" => &mut out.model.rho,
            "mu" => &mut out.model.mu,
            "eps_reg" => &mut out.model.eps_reg,
            other => return Err(field_err(format!("model.{other}"), "is not a sweepable parameter")),
        };
        *slot = value;
        out.model
            .validated()
            .map_err(|e| field_err(format!("model.{name}"), e.to_string()))?;
        Ok(out)
    }
}

#[derive(Clone, Copy)]
enum Component {
    U,
    V,
}

fn sample_profile(
    spec: &InitSpec,
    key: &'static str,
    grid: &Grid,
    base_dir: &Path,
    rng: &mut ChaCha8Rng,
    which: Component,
) -> Result<Field, ConfigError> {
    let mut field = match &spec.profile {
        InitialProfile::Constant { value } => Field::constant(*grid, *value),
        InitialProfile::Gaussian {
            center,
            width,
            amplitude,
            base,
        } => Field::from_fn(*grid, |x| {
            let r2: f64 = x.iter().zip(center).map(|(a, c)| (a - c).powi(2)).sum();
            base + amplitude * (-r2 / (2.0 * width * width)).exp()
        }),
        InitialProfile::Cosine {
            base,
            amplitude,
            mode,
        } => {
            let lengths = grid.lengths().to_vec();
            Field::from_fn(*grid, |x| {
                let prod: f64 = (0..x.len())
                    .map(|a| (mode[a] as f64 * std::f64::consts::PI * x[a] / lengths[a]).cos())
                    .product();
                (base + amplitude * prod).max(0.0)
            })
        }
        InitialProfile::Snapshot { path } => {
            let full = if path.is_absolute() {
                path.clone()
            } else {
                base_dir.join(path)
            };
            let snap = super::snapshot::read_snapshot(&full).map_err(|e| ConfigError::Snapshot {
                key: format!("{key}.path"),
                message: e.to_string(),
            })?;
            if snap.grid() != grid {
                return Err(ConfigError::Snapshot {
                    key: format!("{key}.path"),
                    message: "snapshot grid does not match [grid]".into(),
                });
            }
            match which {
                Component::U => snap.u,
                Component::V => snap.v,
            }
        }
    };
    if spec.noise > 0.0 {
        for x in field.values_mut() {
            *x *= 1.0 + spec.noise * rng.gen_range(-1.0..1.0);
        }
    }
    Ok(field)
}
