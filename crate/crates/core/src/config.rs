//! Run configuration: a flat INI dialect with line-addressable errors,
//! preset scenarios, and the typed [`RunConfig`] built from both.
//!
//! ```text
//! scenario = gibbs_relaxation      # optional, before any section
//! [model]
//! mode = general
//! beta = linear:sigma=1.0
//! ```
//!
//! Keys given in a file override those of the named scenario.

use std::path::{Path, PathBuf};

use crate::analytic::{gaussian, gibbs_state, mollified_spike, BarenblattProfile};
use crate::energy::{EnergyFunctional, EnergyMode};
use crate::error::{Error, Result};
use crate::grid::{DensityField, Grid};
use crate::laws::{parse_preset, Potential, ScalarLaw, SyntaxError};
use crate::solver::{Scheme, SolverConfig, StoreRule};

/// Shipped scenarios as `(name, INI text)`.
pub const PRESETS: &[(&str, &str)] = &[
    ("stationary_smoke", include_str!("../configs/stationary_smoke.ini")),
    ("heat_gaussian", include_str!("../configs/heat_gaussian.ini")),
    ("gibbs_relaxation", include_str!("../configs/gibbs_relaxation.ini")),
    ("barenblatt_m2_1d", include_str!("../configs/barenblatt_m2_1d.ini")),
    ("barenblatt_m3_2d", include_str!("../configs/barenblatt_m3_2d.ini")),
    ("gpme_drift", include_str!("../configs/gpme_drift.ini")),
    (
        "matrix_diagonal_smoke",
        include_str!("../configs/matrix_diagonal_smoke.ini"),
    ),
];

pub fn preset(name: &str) -> Option<&'static str> {
    PRESETS.iter().find(|(n, _)| *n == name).map(|(_, s)| *s)
}

/// One `key = value` line; positions are 1-based.
#[derive(Clone, Debug, PartialEq)]
pub struct Entry {
    pub key: String,
    pub value: String,
    pub line: usize,
    pub key_column: usize,
    pub value_column: usize,
}

impl Entry {
    /// A parse error pointing `offset` characters into the value.
    pub fn error(&self, offset: usize, message: impl Into<String>) -> Error {
        Error::Parse {
            line: self.line,
            column: self.value_column + offset,
            message: format!("{}: {}", self.key, message.into()),
        }
    }

    fn syntax(&self, e: SyntaxError) -> Error {
        let offset = self.value[..e.pos.min(self.value.len())].chars().count();
        self.error(offset, e.message)
    }

    pub fn f64(&self) -> Result<f64> {
        match self.value.parse::<f64>() {
            Ok(v) if v.is_finite() => Ok(v),
            _ => Err(self.error(0, format!("expected a finite number, found '{}'", self.value))),
        }
    }

    pub fn usize(&self) -> Result<usize> {
        self.value
            .parse::<usize>()
            .map_err(|_| self.error(0, format!("expected a nonnegative integer, found '{}'", self.value)))
    }

    pub fn bool(&self) -> Result<bool> {
        match self.value.to_ascii_lowercase().as_str() {
            "on" | "true" | "yes" | "1" => Ok(true),
            "off" | "false" | "no" | "0" => Ok(false),
            _ => Err(self.error(0, format!("expected on/off, found '{}'", self.value))),
        }
    }

    /// Comma-separated list, each item converted by `f`.
    fn list<T>(&self, f: impl Fn(&str) -> Option<T>) -> Result<Vec<T>> {
        let mut out = Vec::new();
        let mut offset = 0;
        for item in self.value.split(',') {
            let lead = item.len() - item.trim_start().len();
            let v =
                f(item.trim()).ok_or_else(|| self.error(offset + lead, format!("bad list item '{}'", item.trim())))?;
            out.push(v);
            offset += item.chars().count() + 1;
        }
        Ok(out)
    }

    pub fn f64_list(&self) -> Result<Vec<f64>> {
        self.list(|s| s.parse::<f64>().ok().filter(|v| v.is_finite()))
    }

    pub fn usize_list(&self) -> Result<Vec<usize>> {
        self.list(|s| s.parse::<usize>().ok())
    }
}

#[derive(Clone, Debug, PartialEq)]
pub struct Section {
    pub name: String,
    pub line: usize,
    pub entries: Vec<Entry>,
}

impl Section {
    pub fn get(&self, key: &str) -> Option<&Entry> {
        self.entries.iter().find(|e| e.key == key)
    }
}

/// Parsed INI text. Entries before the first header live in a section
/// with an empty name.
#[derive(Clone, Debug, Default, PartialEq)]
pub struct Ini {
    pub sections: Vec<Section>,
}

fn strip_comment(line: &str) -> &str {
    let t = line.trim_start();
    if t.starts_with('#') || t.starts_with(';') {
        return "";
    }
    // inline comments need leading whitespace so paths may contain '#'
    let bytes = line.as_bytes();
    for i in 1..bytes.len() {
        if (bytes[i] == b'#' || bytes[i] == b';') && bytes[i - 1].is_ascii_whitespace() {
            return &line[..i];
        }
    }
    line
}

fn col(line: &str, byte: usize) -> usize {
    line[..byte].chars().count() + 1
}

impl Ini {
    pub fn parse(text: &str) -> Result<Self> {
        let mut ini = Ini::default();
        for (k, raw) in text.lines().enumerate() {
            let line_no = k + 1;
            let line = strip_comment(raw);
            let t = line.trim();
            if t.is_empty() {
                continue;
            }
            let lead = line.len() - line.trim_start().len();
            if t.starts_with('[') {
                let close = t.find(']').ok_or_else(|| Error::Parse {
                    line: line_no,
                    column: col(line, lead + t.len()),
                    message: "unterminated section header".into(),
                })?;
                if !t[close + 1..].trim().is_empty() {
                    return Err(Error::Parse {
                        line: line_no,
                        column: col(line, lead + close + 1),
                        message: "trailing text after section header".into(),
                    });
                }
                let name = t[1..close].trim();
                if name.is_empty() {
                    return Err(Error::Parse {
                        line: line_no,
                        column: col(line, lead + 1),
                        message: "empty section name".into(),
                    });
                }
                if ini.sections.iter().any(|s| s.name == name) {
                    return Err(Error::Parse {
                        line: line_no,
                        column: col(line, lead + 1),
                        message: format!("duplicate section [{name}]"),
                    });
                }
                ini.sections.push(Section {
                    name: name.to_string(),
                    line: line_no,
                    entries: Vec::new(),
                });
                continue;
            }
            let eq = line.find('=').ok_or_else(|| Error::Parse {
                line: line_no,
                column: col(line, lead),
                message: format!("expected 'key = value', found '{t}'"),
            })?;
            let key = line[..eq].trim();
            if key.is_empty() {
                return Err(Error::Parse {
                    line: line_no,
                    column: col(line, eq),
                    message: "missing key before '='".into(),
                });
            }
            let rest = &line[eq + 1..];
            let vlead = rest.len() - rest.trim_start().len();
            let entry = Entry {
                key: key.to_string(),
                value: rest.trim().to_string(),
                line: line_no,
                key_column: col(line, lead),
                value_column: col(line, eq + 1 + vlead),
            };
            if ini.sections.is_empty() {
                ini.sections.push(Section {
                    name: String::new(),
                    line: 0,
                    entries: Vec::new(),
                });
            }
            let sec = ini.sections.last_mut().unwrap();
            if sec.get(key).is_some() {
                return Err(Error::Parse {
                    line: line_no,
                    column: entry.key_column,
                    message: format!("duplicate key '{key}'"),
                });
            }
            sec.entries.push(entry);
        }
        Ok(ini)
    }

    pub fn section(&self, name: &str) -> Option<&Section> {
        self.sections.iter().find(|s| s.name == name)
    }

    pub fn get(&self, section: &str, key: &str) -> Option<&Entry> {
        self.section(section).and_then(|s| s.get(key))
    }

    /// `self` with every entry of `over` replacing or extending it.
    pub fn overlay(mut self, over: &Ini) -> Self {
        for s in &over.sections {
            let idx = match self.sections.iter().position(|x| x.name == s.name) {
                Some(i) => i,
                None => {
                    self.sections.push(Section {
                        name: s.name.clone(),
                        line: s.line,
                        entries: Vec::new(),
                    });
                    self.sections.len() - 1
                }
            };
            let dst = &mut self.sections[idx];
            for e in &s.entries {
                match dst.entries.iter_mut().find(|x| x.key == e.key) {
                    Some(x) => *x = e.clone(),
                    None => dst.entries.push(e.clone()),
                }
            }
        }
        self
    }
}

/// Initial datum.
#[derive(Clone, Debug, PartialEq)]
pub enum InitSpec {
    Barenblatt {
        m: f64,
        t0: f64,
    },
    Gaussian {
        mean: [f64; 2],
        sigma: f64,
    },
    Gibbs,
    Spike {
        center: [f64; 2],
    },
    /// Whitespace- or comma-separated cell values in storage order.
    File(PathBuf),
}

#[derive(Clone, Debug, PartialEq)]
pub struct VerifyConfig {
    /// Number of test functions `ζ`.
    pub battery: usize,
    /// Interior stored times at which residuals are taken.
    pub samples: usize,
    pub gf_residual: bool,
    pub gf_percentile: f64,
    pub gf_tol: f64,
    pub lyapunov: bool,
    pub dissipation: bool,
    pub dissipation_tol: f64,
    pub dissipation_integral: bool,
    pub diff_identity: bool,
    pub diff_tol: f64,
    /// Extra randomly placed bump probes, drawn from `seed`.
    pub random_probes: usize,
    pub seed: u64,
    pub stationary: bool,
    pub stationary_l1_tol: Option<f64>,
    pub reference_tol: Option<f64>,
    pub projection_ladder: bool,
    pub ladder_counts: Vec<usize>,
    pub ladder_times: usize,
    pub refinement_cells: Vec<usize>,
    pub gf_order: Option<f64>,
    pub reference_order: Option<f64>,
    pub diff_order: Option<f64>,
    pub dissipation_stability: Option<f64>,
}

impl Default for VerifyConfig {
    fn default() -> Self {
        Self {
            battery: 8,
            samples: 8,
            gf_residual: true,
            gf_percentile: 0.9,
            gf_tol: 5e-3,
            lyapunov: true,
            dissipation: true,
            dissipation_tol: 0.05,
            dissipation_integral: true,
            diff_identity: true,
            diff_tol: 1e-3,
            random_probes: 0,
            seed: 0,
            stationary: false,
            stationary_l1_tol: None,
            reference_tol: None,
            projection_ladder: false,
            ladder_counts: vec![4, 8, 16, 32],
            ladder_times: 5,
            refinement_cells: Vec::new(),
            gf_order: None,
            reference_order: None,
            diff_order: None,
            dissipation_stability: None,
        }
    }
}

#[derive(Clone, Debug, PartialEq)]
pub struct OutputConfig {
    pub directory: Option<PathBuf>,
    /// Write every `stride`-th stored state to `trajectory.csv`.
    pub stride: usize,
}

#[derive(Clone, Debug, PartialEq)]
pub struct RunConfig {
    pub name: String,
    pub mode: EnergyMode,
    pub grid: Grid,
    pub solver: SolverConfig,
    pub init: InitSpec,
    pub verify: VerifyConfig,
    pub output: OutputConfig,
}

const KEYS: &[(&str, &[&str])] = &[
    ("", &["scenario"]),
    ("model", &["mode", "beta", "b", "psi", "potential"]),
    ("grid", &["dim", "bounds", "cells"]),
    (
        "time",
        &[
            "t0",
            "t1",
            "scheme",
            "cfl_safety",
            "store_every",
            "store_interval",
            "max_dt",
            "positivity_clip",
            "margin_check",
        ],
    ),
    ("init", &["profile"]),
    (
        "verify",
        &[
            "battery",
            "samples",
            "gf_residual",
            "gf_percentile",
            "gf_tol",
            "lyapunov",
            "dissipation",
            "dissipation_tol",
            "dissipation_integral",
            "diff_identity",
            "diff_tol",
            "random_probes",
            "seed",
            "stationary",
            "stationary_l1_tol",
            "reference_tol",
            "projection_ladder",
            "ladder_counts",
            "ladder_times",
            "refinement_cells",
            "gf_order",
            "reference_order",
            "diff_order",
            "dissipation_stability",
        ],
    ),
    ("output", &["directory", "stride"]),
];

fn check_keys(ini: &Ini) -> Result<()> {
    for s in &ini.sections {
        let allowed = KEYS
            .iter()
            .find(|(n, _)| *n == s.name)
            .map(|(_, k)| *k)
            .ok_or_else(|| Error::Parse {
                line: s.line,
                column: 2,
                message: format!("unknown section [{}]", s.name),
            })?;
        for e in &s.entries {
            if !allowed.contains(&e.key.as_str()) {
                return Err(Error::Parse {
                    line: e.line,
                    column: e.key_column,
                    message: if s.name.is_empty() {
                        format!("unknown key '{}' outside any section", e.key)
                    } else {
                        format!("unknown key '{}' in [{}]", e.key, s.name)
                    },
                });
            }
        }
    }
    Ok(())
}

fn require<'a>(ini: &'a Ini, section: &str, key: &str) -> Result<&'a Entry> {
    let sec = ini.section(section).ok_or_else(|| Error::Parse {
        line: 1,
        column: 1,
        message: format!("missing [{section}] section"),
    })?;
    sec.get(key).ok_or_else(|| Error::Parse {
        line: sec.line,
        column: 1,
        message: format!("missing key '{key}' in [{section}]"),
    })
}

fn law(e: &Entry) -> Result<ScalarLaw> {
    ScalarLaw::parse(&e.value).map_err(|err| e.syntax(err))
}

fn potential(e: Option<&Entry>) -> Result<Potential> {
    match e {
        Some(e) => Potential::parse(&e.value).map_err(|err| e.syntax(err)),
        None => Ok(Potential::None),
    }
}

fn parse_mode(ini: &Ini) -> Result<EnergyMode> {
    let mode = require(ini, "model", "mode")?;
    let get = |k: &str| ini.get("model", k);
    let reject = |keys: &[&str]| -> Result<()> {
        for k in keys {
            if let Some(e) = get(k) {
                return Err(Error::Parse {
                    line: e.line,
                    column: e.key_column,
                    message: format!("'{k}' is not used in mode {}", mode.value),
                });
            }
        }
        Ok(())
    };
    match mode.value.as_str() {
        "classical" => {
            reject(&["b", "psi"])?;
            let e = require(ini, "model", "beta")?;
            let m = match law(e)? {
                ScalarLaw::Power { m } => m,
                _ => return Err(e.error(0, "classical mode needs beta = power:m=...")),
            };
            if let Some(p) = get("potential") {
                if !potential(Some(p))?.is_none() {
                    return Err(p.error(0, "classical mode has no potential"));
                }
            }
            Ok(EnergyMode::ClassicalPme { m })
        }
        "general" => {
            reject(&["psi"])?;
            let beta = law(require(ini, "model", "beta")?)?;
            let b = get("b").map(law).transpose()?.unwrap_or(ScalarLaw::Constant { c: 1.0 });
            Ok(EnergyMode::General {
                beta,
                b,
                phi: potential(get("potential"))?,
            })
        }
        "matrix_diagonal" => {
            reject(&["beta"])?;
            let psi = law(require(ini, "model", "psi")?)?;
            let b_diag = get("b").map(law).transpose()?.unwrap_or(ScalarLaw::Constant { c: 1.0 });
            Ok(EnergyMode::MatrixDiagonal {
                psi,
                b_diag,
                phi: potential(get("potential"))?,
            })
        }
        other => Err(mode.error(
            0,
            format!("unknown mode '{other}' (classical, general, matrix_diagonal)"),
        )),
    }
}

fn parse_grid(ini: &Ini) -> Result<Grid> {
    let dim_e = require(ini, "grid", "dim")?;
    let dim = dim_e.usize()?;
    if dim != 1 && dim != 2 {
        return Err(dim_e.error(0, "dim must be 1 or 2"));
    }
    let bounds_e = require(ini, "grid", "bounds")?;
    let bounds = bounds_e.f64_list()?;
    if bounds.len() != 2 * dim {
        return Err(bounds_e.error(0, format!("expected {} values (lo,hi per axis)", 2 * dim)));
    }
    let cells_e = require(ini, "grid", "cells")?;
    let mut cells = cells_e.usize_list()?;
    if cells.len() == 1 && dim == 2 {
        cells.push(cells[0]);
    }
    if cells.len() != dim {
        return Err(cells_e.error(0, format!("expected 1 or {dim} values")));
    }
    let origin: Vec<f64> = (0..dim).map(|k| bounds[2 * k]).collect();
    let extent: Vec<f64> = (0..dim).map(|k| bounds[2 * k + 1] - bounds[2 * k]).collect();
    Grid::new(&origin, &extent, &cells).map_err(|e| cells_e.error(0, e.to_string()))
}

fn parse_time(ini: &Ini) -> Result<SolverConfig> {
    let t0 = require(ini, "time", "t0")?.f64()?;
    let t1_e = require(ini, "time", "t1")?;
    let t1 = t1_e.f64()?;
    let span = t1 - t0;
    let mut cfg = SolverConfig::new(t0, t1, if span > 0.0 { span } else { 1.0 });
    let get = |k: &str| ini.get("time", k);
    if let Some(e) = get("scheme") {
        cfg.scheme = match e.value.as_str() {
            "explicit_euler" => Scheme::ExplicitEuler,
            "semi_implicit" => Scheme::SemiImplicit,
            other => return Err(e.error(0, format!("unknown scheme '{other}' (explicit_euler, semi_implicit)"))),
        };
    }
    if let Some(e) = get("cfl_safety") {
        cfg.cfl_safety = e.f64()?;
    }
    if let Some(e) = get("max_dt") {
        cfg.max_dt = e.f64()?;
    }
    match (get("store_every"), get("store_interval")) {
        (Some(a), Some(_)) => {
            return Err(Error::Parse {
                line: a.line,
                column: a.key_column,
                message: "give store_every or store_interval, not both".into(),
            })
        }
        (Some(e), None) => cfg.store = StoreRule::Every(e.usize()?),
        (None, Some(e)) => cfg.store = StoreRule::Interval(e.f64()?),
        (None, None) => {}
    }
    if let Some(e) = get("positivity_clip") {
        cfg.positivity_clip_log = e.bool()?;
    }
    if let Some(e) = get("margin_check") {
        cfg.margin_check = e.bool()?;
    }
    cfg.validate().map_err(|e| t1_e.error(0, e.to_string()))?;
    Ok(cfg)
}

fn parse_init(ini: &Ini, base: Option<&Path>, mode: &EnergyMode, t0: f64) -> Result<InitSpec> {
    let e = require(ini, "init", "profile")?;
    let v = e.value.trim();
    if let Some(path) = v.strip_prefix("file:") {
        let p = PathBuf::from(path.trim());
        if p.as_os_str().is_empty() {
            return Err(e.error(5, "missing path"));
        }
        let p = match base {
            Some(dir) if p.is_relative() => dir.join(p),
            _ => p,
        };
        return Ok(InitSpec::File(p));
    }
    let (name, params) = parse_preset(v).map_err(|err| e.syntax(err))?;
    let mut known: Vec<&str> = Vec::new();
    let param = |k: &str| params.iter().find(|(n, _, _)| n == k).map(|(_, v, _)| *v);
    let spec = match name.as_str() {
        "barenblatt" => {
            known.extend(["m", "t0"]);
            let m = match (param("m"), mode) {
                (Some(m), _) => m,
                (None, EnergyMode::ClassicalPme { m }) => *m,
                (None, _) => return Err(e.error(0, "barenblatt needs m=... outside classical mode")),
            };
            InitSpec::Barenblatt {
                m,
                t0: param("t0").unwrap_or(if t0 > 0.0 { t0 } else { 1.0 }),
            }
        }
        "gaussian" => {
            known.extend(["mean", "mean_y", "sigma"]);
            InitSpec::Gaussian {
                mean: [param("mean").unwrap_or(0.0), param("mean_y").unwrap_or(0.0)],
                sigma: param("sigma").unwrap_or(1.0),
            }
        }
        "gibbs" => InitSpec::Gibbs,
        "spike" => {
            known.extend(["center", "center_y"]);
            InitSpec::Spike {
                center: [param("center").unwrap_or(0.0), param("center_y").unwrap_or(0.0)],
            }
        }
        other => {
            return Err(e.error(
                0,
                format!("unknown profile '{other}' (barenblatt, gaussian, gibbs, spike, file:path)"),
            ))
        }
    };
    if let Some((k, _, pos)) = params.iter().find(|(k, _, _)| !known.contains(&k.as_str())) {
        return Err(e.error(v[..*pos].chars().count(), format!("unknown parameter '{k}' for {name}")));
    }
    Ok(spec)
}

fn parse_verify(ini: &Ini) -> Result<VerifyConfig> {
    let mut v = VerifyConfig::default();
    let Some(sec) = ini.section("verify") else {
        return Ok(v);
    };
    for e in &sec.entries {
        match e.key.as_str() {
            "battery" => v.battery = e.usize()?,
            "samples" => v.samples = e.usize()?,
            "gf_residual" => v.gf_residual = e.bool()?,
            "gf_percentile" => {
                v.gf_percentile = e.f64()?;
                if !(v.gf_percentile > 0.0 && v.gf_percentile <= 1.0) {
                    return Err(e.error(0, "percentile must lie in (0, 1]"));
                }
            }
            "gf_tol" => v.gf_tol = e.f64()?,
            "lyapunov" => v.lyapunov = e.bool()?,
            "dissipation" => v.dissipation = e.bool()?,
            "dissipation_tol" => v.dissipation_tol = e.f64()?,
            "dissipation_integral" => v.dissipation_integral = e.bool()?,
            "diff_identity" => v.diff_identity = e.bool()?,
            "diff_tol" => v.diff_tol = e.f64()?,
            "random_probes" => v.random_probes = e.usize()?,
            "seed" => {
                v.seed = e
                    .value
                    .parse::<u64>()
                    .map_err(|_| e.error(0, format!("expected an unsigned integer, found '{}'", e.value)))?
            }
            "stationary" => v.stationary = e.bool()?,
            "stationary_l1_tol" => v.stationary_l1_tol = Some(e.f64()?),
            "reference_tol" => v.reference_tol = Some(e.f64()?),
            "projection_ladder" => v.projection_ladder = e.bool()?,
            "ladder_counts" => {
                v.ladder_counts = e.usize_list()?;
                if v.ladder_counts.contains(&0) || v.ladder_counts.windows(2).any(|w| w[1] <= w[0]) {
                    return Err(e.error(0, "counts must be positive and increasing"));
                }
            }
            "ladder_times" => v.ladder_times = e.usize()?,
            "refinement_cells" => {
                v.refinement_cells = e.usize_list()?;
                if v.refinement_cells.len() < 2 || v.refinement_cells.windows(2).any(|w| w[1] <= w[0]) {
                    return Err(e.error(0, "need at least two increasing cell counts"));
                }
            }
            "gf_order" => v.gf_order = Some(e.f64()?),
            "reference_order" => v.reference_order = Some(e.f64()?),
            "diff_order" => v.diff_order = Some(e.f64()?),
            "dissipation_stability" => v.dissipation_stability = Some(e.f64()?),
            _ => unreachable!("keys are checked first"),
        }
    }
    Ok(v)
}

fn parse_output(ini: &Ini, base: Option<&Path>) -> Result<OutputConfig> {
    let mut out = OutputConfig {
        directory: None,
        stride: 1,
    };
    if let Some(e) = ini.get("output", "directory") {
        let p = PathBuf::from(&e.value);
        out.directory = Some(match base {
            Some(dir) if p.is_relative() => dir.join(p),
            _ => p,
        });
    }
    if let Some(e) = ini.get("output", "stride") {
        out.stride = e.usize()?;
        if out.stride == 0 {
            return Err(e.error(0, "stride must be positive"));
        }
    }
    Ok(out)
}

impl RunConfig {
    /// Builds a configuration from INI text. Relative paths resolve
    /// against `base`.
    pub fn from_str_with_base(text: &str, base: Option<&Path>) -> Result<Self> {
        let user = Ini::parse(text)?;
        check_keys(&user)?;
        let (name, ini) = match user.get("", "scenario") {
            Some(e) => {
                let text = preset(&e.value).ok_or_else(|| {
                    let names: Vec<&str> = PRESETS.iter().map(|(n, _)| *n).collect();
                    e.error(
                        0,
                        format!("unknown scenario '{}' (one of {})", e.value, names.join(", ")),
                    )
                })?;
                let base_ini = Ini::parse(text)?;
                (e.value.clone(), base_ini.overlay(&user))
            }
            None => (String::from("custom"), user),
        };
        check_keys(&ini)?;
        let mode = parse_mode(&ini)?;
        let grid = parse_grid(&ini)?;
        let solver = parse_time(&ini)?;
        let init = parse_init(&ini, base, &mode, solver.t0)?;
        let verify = parse_verify(&ini)?;
        let output = parse_output(&ini, base)?;
        Ok(Self {
            name,
            mode,
            grid,
            solver,
            init,
            verify,
            output,
        })
    }

    pub fn parse(text: &str) -> Result<Self> {
        Self::from_str_with_base(text, None)
    }

    /// Reads `path`, or a shipped scenario when `path` names one and no
    /// such file exists.
    pub fn load(path: &Path) -> Result<Self> {
        if !path.exists() {
            if let Some(name) = path.to_str() {
                if preset(name).is_some() {
                    return Self::parse(&format!("scenario = {name}\n"));
                }
            }
        }
        let text = std::fs::read_to_string(path).map_err(|e| Error::Io(format!("{}: {e}", path.display())))?;
        Self::from_str_with_base(&text, path.parent())
    }

    pub fn functional(&self) -> Result<EnergyFunctional> {
        EnergyFunctional::new(self.mode)
    }

    /// The same run on a grid with `cells` per axis.
    pub fn with_cells(&self, cells: usize) -> Result<Self> {
        let g = &self.grid;
        let counts = vec![cells; g.dim()];
        let mut out = self.clone();
        out.grid = Grid::new(g.origin(), g.extent(), &counts)?;
        Ok(out)
    }

    pub fn initial_state(&self, fnl: &EnergyFunctional) -> Result<DensityField> {
        let grid = &self.grid;
        match &self.init {
            InitSpec::Barenblatt { m, t0 } => {
                let profile = BarenblattProfile::new(*m, grid.dim())?;
                Ok(profile.sample(*t0, grid)?.0)
            }
            InitSpec::Gaussian { mean, sigma } => gaussian(grid, *mean, *sigma),
            InitSpec::Gibbs => gibbs_state(fnl, grid),
            InitSpec::Spike { center } => mollified_spike(grid, *center),
            InitSpec::File(path) => {
                let text = std::fs::read_to_string(path).map_err(|e| Error::Io(format!("{}: {e}", path.display())))?;
                let values = text
                    .split(|c: char| c.is_whitespace() || c == ',')
                    .filter(|s| !s.is_empty())
                    .map(|s| {
                        s.parse::<f64>()
                            .map_err(|_| Error::Domain(format!("{}: bad value '{s}'", path.display())))
                    })
                    .collect::<Result<Vec<f64>>>()?;
                if values.len() != grid.len() {
                    return Err(Error::Shape(format!(
                        "{}: {} values for {} cells",
                        path.display(),
                        values.len(),
                        grid.len()
                    )));
                }
                Ok(DensityField::new(*grid, values)?.normalized()?.0)
            }
        }
    }
}
