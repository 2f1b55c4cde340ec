//! Experiment configuration: a TOML document with the sections `[grid]`,
//! `[flow]`, `[initial]`, `[rescale]`, `[output]` and `[verify]`.
//!
//! Unknown keys are rejected. Every value is validated before a run starts.

use std::path::PathBuf;

use serde::{Deserialize, Serialize};

use crate::error::{Error, Result};
use crate::flow::{FlowParams, Horizon, InitialFamily, Stepper};
use crate::graph::DEFAULT_EPS_MC;
use crate::sphere::{CapGrid, Mode, Resolution};
use crate::verify::Tolerances;

/// Checks that read only the physical trajectory and its post-hoc rescaling.
pub const TRAJECTORY_CHECKS: [&str; 9] = [
    "c0_sandwich",
    "phidot_bounds",
    "gradient_monotone",
    "h_theta_band",
    "area_law",
    "evolution_identities",
    "holder_proxy",
    "gradient_decay",
    "radius",
];

/// Checks that need companion runs on other grids.
pub const COMPANION_CHECKS: [&str; 2] = ["two_path_rescaling", "full2d_matches_axisymmetric"];

#[derive(Debug, Clone, PartialEq, Serialize, Deserialize)]
#[serde(deny_unknown_fields)]
pub struct Config {
    pub name: String,
    pub grid: GridSection,
    pub flow: FlowSection,
    #[serde(default)]
    pub initial: InitialSection,
    #[serde(default)]
    pub rescale: RescaleSection,
    #[serde(default)]
    pub output: OutputSection,
    #[serde(default)]
    pub verify: VerifySection,
}

#[derive(Debug, Clone, PartialEq, Serialize, Deserialize)]
#[serde(deny_unknown_fields)]
pub struct GridSection {
    #[serde(default = "default_n_dim")]
    pub n_dim: usize,
    pub theta_max: f64,
    #[serde(default = "default_mode")]
    pub mode: Mode,
    pub n_theta: usize,
    #[serde(default, skip_serializing_if = "Option::is_none")]
    pub n_psi: Option<usize>,
}

fn default_n_dim() -> usize {
    2
}

fn default_mode() -> Mode {
    Mode::Axisymmetric
}

#[derive(Debug, Clone, PartialEq, Serialize, Deserialize)]
#[serde(deny_unknown_fields)]
pub struct FlowSection {
    pub alpha: f64,
    /// Exactly one of `t_end` and `s_end` is given.
    #[serde(default, skip_serializing_if = "Option::is_none")]
    pub t_end: Option<f64>,
    #[serde(default, skip_serializing_if = "Option::is_none")]
    pub s_end: Option<f64>,
    #[serde(default = "default_stepper")]
    pub stepper: Stepper,
    #[serde(default = "default_cfl")]
    pub cfl_safety: f64,
    #[serde(default = "default_eps_mc")]
    pub eps_mc: f64,
}

fn default_stepper() -> Stepper {
    Stepper::Rk4
}

fn default_cfl() -> f64 {
    0.4
}

fn default_eps_mc() -> f64 {
    DEFAULT_EPS_MC
}

#[derive(Debug, Clone, PartialEq, Serialize, Deserialize)]
#[serde(default, deny_unknown_fields)]
pub struct InitialSection {
    pub r0: f64,
    pub eps: f64,
    pub k_radial: u32,
    pub m_angular: u32,
}

impl Default for InitialSection {
    fn default() -> Self {
        let f = InitialFamily::default();
        Self { r0: f.r0, eps: f.eps, k_radial: f.k_radial, m_angular: f.m_angular }
    }
}

impl InitialSection {
    pub fn family(&self) -> InitialFamily {
        InitialFamily { r0: self.r0, eps: self.eps, k_radial: self.k_radial, m_angular: self.m_angular }
    }

    /// Constant data, for which the flow is the model solution.
    pub fn is_constant(&self) -> bool {
        self.eps == 0.0
    }
}

/// Reference constant of the rescaling: `"midpoint"` or a number.
#[derive(Debug, Clone, Copy, PartialEq)]
pub enum CPolicy {
    Midpoint,
    Explicit(f64),
}

impl Serialize for CPolicy {
    fn serialize<S: serde::Serializer>(&self, s: S) -> std::result::Result<S::Ok, S::Error> {
        match self {
            CPolicy::Midpoint => s.serialize_str("midpoint"),
            CPolicy::Explicit(c) => s.serialize_f64(*c),
        }
    }
}

impl<'de> Deserialize<'de> for CPolicy {
    fn deserialize<D: serde::Deserializer<'de>>(d: D) -> std::result::Result<Self, D::Error> {
        #[derive(Deserialize)]
        #[serde(untagged)]
        enum Raw {
            Num(f64),
            Int(i64),
            Name(String),
        }
        match Raw::deserialize(d)? {
            Raw::Num(c) => Ok(CPolicy::Explicit(c)),
            Raw::Int(c) => Ok(CPolicy::Explicit(c as f64)),
            Raw::Name(s) if s == "midpoint" => Ok(CPolicy::Midpoint),
            Raw::Name(s) => Err(serde::de::Error::custom(format!("c must be \"midpoint\" or a number, got \"{s}\""))),
        }
    }
}

#[derive(Debug, Clone, PartialEq, Serialize, Deserialize)]
#[serde(default, deny_unknown_fields)]
pub struct RescaleSection {
    pub c: CPolicy,
    /// Spacing in `s` of extra snapshots for the rescaled diagnostics; 0 for none.
    pub snapshot_spacing: f64,
}

impl Default for RescaleSection {
    fn default() -> Self {
        Self { c: CPolicy::Midpoint, snapshot_spacing: 0.25 }
    }
}

#[derive(Debug, Clone, PartialEq, Serialize, Deserialize)]
#[serde(deny_unknown_fields)]
pub struct OutputSection {
    /// Defaults to `out/<name>`.
    #[serde(default, skip_serializing_if = "Option::is_none")]
    pub out_dir: Option<PathBuf>,
    #[serde(default = "default_record_every")]
    pub record_every: usize,
    /// Extra snapshot times in `t`.
    #[serde(default)]
    pub snapshot_times: Vec<f64>,
}

fn default_record_every() -> usize {
    100
}

impl Default for OutputSection {
    fn default() -> Self {
        Self { out_dir: None, record_every: default_record_every(), snapshot_times: Vec::new() }
    }
}

#[derive(Debug, Clone, PartialEq, Serialize, Deserialize)]
#[serde(deny_unknown_fields)]
pub struct EvolutionProbe {
    pub t_mid: f64,
    pub delta: f64,
}

#[derive(Debug, Clone, PartialEq, Serialize, Deserialize)]
#[serde(default, deny_unknown_fields)]
pub struct VerifySection {
    /// Names from [`TRAJECTORY_CHECKS`] and [`COMPANION_CHECKS`].
    pub checks: Vec<String>,
    pub tolerances: Tolerances,
    /// Defaults to `t_mid = min(t_end / 2, t(s = 0.5))`, `delta = 1e-3 t_mid`.
    #[serde(default, skip_serializing_if = "Option::is_none")]
    pub evolution: Option<EvolutionProbe>,
    /// `s` values compared by the two-path check; defaults to a quarter, half
    /// and all of the horizon.
    #[serde(default, skip_serializing_if = "Option::is_none")]
    pub two_path_s: Option<Vec<f64>>,
}

impl Default for VerifySection {
    fn default() -> Self {
        Self {
            checks: TRAJECTORY_CHECKS.iter().map(|s| s.to_string()).collect(),
            tolerances: Tolerances::default(),
            evolution: None,
            two_path_s: None,
        }
    }
}

impl VerifySection {
    pub fn enabled(&self, name: &str) -> bool {
        self.checks.iter().any(|c| c == name)
    }
}

fn invalid(key: &str, reason: impl std::fmt::Display) -> Error {
    Error::Config(format!("{key}: {reason}"))
}

impl Config {
    pub fn validate(&self) -> Result<()> {
        if self.name.is_empty() || self.name.contains(['/', '\\']) {
            return Err(invalid("name", "must be a non-empty file name"));
        }
        self.build_grid().map_err(|e| invalid("grid", e))?;
        if self.grid.mode == Mode::Axisymmetric && self.grid.n_psi.is_some() {
            return Err(invalid("grid.n_psi", "only used in full2d mode"));
        }
        match (self.flow.t_end, self.flow.s_end) {
            (Some(_), None) | (None, Some(_)) => {}
            _ => return Err(invalid("flow", "give exactly one of t_end and s_end")),
        }
        self.flow_params(Vec::new()).validate().map_err(|e| invalid("flow", e))?;
        let init = &self.initial;
        if !(init.r0 > 0.0) || !init.r0.is_finite() {
            return Err(invalid("initial.r0", format!("{} must be > 0", init.r0)));
        }
        if !(init.eps.abs() < 1.0) {
            return Err(invalid("initial.eps", format!("|eps| = {} must be < 1", init.eps.abs())));
        }
        if init.m_angular > 0 && self.grid.mode != Mode::Full2d {
            return Err(invalid("initial.m_angular", "angular perturbations need a full2d grid"));
        }
        if let CPolicy::Explicit(c) = self.rescale.c {
            if !c.is_finite() {
                return Err(invalid("rescale.c", "must be finite"));
            }
        }
        if !(self.rescale.snapshot_spacing >= 0.0) || !self.rescale.snapshot_spacing.is_finite() {
            return Err(invalid("rescale.snapshot_spacing", "must be >= 0"));
        }
        if self.output.record_every == 0 {
            return Err(invalid("output.record_every", "must be >= 1"));
        }
        if let Some(t) = self.output.snapshot_times.iter().find(|t| !(**t >= 0.0) || !t.is_finite()) {
            return Err(invalid("output.snapshot_times", format!("{t} must be >= 0")));
        }
        for c in &self.verify.checks {
            if !TRAJECTORY_CHECKS.contains(&c.as_str()) && !COMPANION_CHECKS.contains(&c.as_str()) {
                return Err(invalid("verify.checks", format!("unknown check `{c}`")));
            }
        }
        if self.verify.checks.is_empty() {
            return Err(invalid("verify.checks", "empty; nothing would be verified"));
        }
        self.verify.tolerances.validate().map_err(|e| invalid("verify.tolerances", e))?;
        if let Some(p) = &self.verify.evolution {
            if !(p.delta > 0.0) || !(p.t_mid >= p.delta) {
                return Err(invalid("verify.evolution", "need 0 < delta <= t_mid"));
            }
        }
        if self.verify.enabled("two_path_rescaling") {
            if self.grid.n_theta % 2 == 0 {
                return Err(invalid("grid.n_theta", "two_path_rescaling needs an odd count to halve the grid"));
            }
            if let Some(s) = &self.verify.two_path_s {
                if s.is_empty() || s.iter().any(|x| !(*x > 0.0)) {
                    return Err(invalid("verify.two_path_s", "need positive s values"));
                }
            }
        }
        if self.verify.enabled("full2d_matches_axisymmetric") {
            if self.grid.mode != Mode::Full2d || init.m_angular != 0 {
                return Err(invalid(
                    "verify.checks",
                    "full2d_matches_axisymmetric needs a full2d grid and axisymmetric data",
                ));
            }
            if self.grid.n_theta % 2 == 0 {
                return Err(invalid("grid.n_theta", "full2d_matches_axisymmetric needs an odd count"));
            }
        }
        Ok(())
    }

    pub fn resolution(&self, n_theta: usize) -> Resolution {
        match self.grid.mode {
            Mode::Axisymmetric => Resolution::axisymmetric(n_theta),
            Mode::Full2d => Resolution::full2d(n_theta, self.grid.n_psi.unwrap_or(16)),
        }
    }

    pub fn build_grid(&self) -> Result<CapGrid> {
        CapGrid::build(self.grid.n_dim, self.grid.theta_max, self.resolution(self.grid.n_theta), self.grid.mode)
    }

    pub fn horizon(&self) -> Horizon {
        match (self.flow.t_end, self.flow.s_end) {
            (Some(t), _) => Horizon::Time(t),
            (_, Some(s)) => Horizon::Rescaled(s),
            _ => Horizon::Time(f64::NAN),
        }
    }

    pub fn flow_params(&self, snapshot_times: Vec<f64>) -> FlowParams {
        FlowParams {
            alpha: self.flow.alpha,
            cfl_safety: self.flow.cfl_safety,
            horizon: self.horizon(),
            stepper: self.flow.stepper,
            eps_mc: self.flow.eps_mc,
            snapshot_times,
            record_every: self.output.record_every,
        }
    }

    pub fn out_dir(&self) -> PathBuf {
        self.output.out_dir.clone().unwrap_or_else(|| PathBuf::from("out").join(&self.name))
    }

    /// Effective configuration with all defaults written out.
    pub fn echo(&self) -> String {
        toml::to_string(self).expect("config serializes")
    }
}

/// Parses and validates a configuration, applying `overrides` of the form
/// `section.key=value` first. Values are read as TOML and fall back to a
/// bare string.
pub fn parse_config(text: &str, overrides: &[String]) -> Result<Config> {
    let mut doc: toml::Table = text.parse().map_err(|e: toml::de::Error| Error::Config(format!("syntax: {e}")))?;
    for o in overrides {
        apply_override(&mut doc, o)?;
    }
    let cfg: Config = doc.try_into().map_err(|e: toml::de::Error| Error::Config(e.to_string()))?;
    cfg.validate()?;
    Ok(cfg)
}

fn apply_override(doc: &mut toml::Table, spec: &str) -> Result<()> {
    let (path, raw) = spec
        .split_once('=')
        .ok_or_else(|| Error::Config(format!("override `{spec}` is not key=value")))?;
    let keys: Vec<&str> = path.trim().split('.').collect();
    if keys.iter().any(|k| k.is_empty()) {
        return Err(Error::Config(format!("override `{spec}` has an empty key")));
    }
    let value = format!("v = {}", raw.trim())
        .parse::<toml::Table>()
        .ok()
        .and_then(|mut t| t.remove("v"))
        .unwrap_or_else(|| toml::Value::String(raw.trim().to_string()));
    let (last, parents) = keys.split_last().expect("non-empty");
    let mut table = doc;
    for k in parents {
        let entry = table.entry(k.to_string()).or_insert_with(|| toml::Value::Table(toml::Table::new()));
        table = entry
            .as_table_mut()
            .ok_or_else(|| Error::Config(format!("override `{spec}`: `{k}` is not a section")))?;
    }
    table.insert(last.to_string(), value);
    Ok(())
}
