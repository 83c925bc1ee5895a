//! Scenario files and the command-line front end.
//!
//! A scenario is a TOML document with a required `kind` and one block per
//! command. [`evaluate`] turns a validated scenario into in-memory artifacts
//! whose payloads are deterministic; [`write_artifacts`] adds the metadata
//! envelope and writes them out.

use std::collections::BTreeMap;
use std::ffi::OsString;
use std::fmt;
use std::fs;
use std::path::{Path, PathBuf};
use std::time::{SystemTime, UNIX_EPOCH};

use clap::{Parser, Subcommand};
use num_complex::Complex64 as C64;
use rayon::prelude::*;
use serde::{Deserialize, Serialize};
use serde_json::{json, Value};

use crate::dynamics::{
    phase_vs_loss, rabi_frequency, run_schedule, transmission_scan, CollectiveModel, Coupling,
    Model, PulseSchedule, PulseSegment,
};
use crate::error::{Error, Result};
use crate::estimates::{cooperative_raman_rate, regime_classify, regime_map, write_regime_csv, MediumParams};
use crate::gates::{emission_absorption_ratio, extract_gate, five_pulse_leakage, LogicalEncoding};
use crate::perturbation::{
    self, scan, write_scan_csv, CollisionModelParams, WidthRule, WidthSelector,
};
use crate::report::{fmt_f64, to_json, SCHEMA_VERSION};

#[derive(Clone, Copy, Debug, PartialEq, Eq, Serialize, Deserialize)]
#[serde(rename_all = "kebab-case")]
pub enum Kind {
    Simulate,
    Gate,
    FivePulse,
    Perturb,
    Rates,
    Sweep,
}

impl Kind {
    pub fn name(self) -> &'static str {
        match self {
            Kind::Simulate => "simulate",
            Kind::Gate => "gate",
            Kind::FivePulse => "five-pulse",
            Kind::Perturb => "perturb",
            Kind::Rates => "rates",
            Kind::Sweep => "sweep",
        }
    }

    fn file_stem(self) -> &'static str {
        match self {
            Kind::FivePulse => "five_pulse",
            k => k.name(),
        }
    }
}

impl fmt::Display for Kind {
    fn fmt(&self, f: &mut fmt::Formatter<'_>) -> fmt::Result {
        f.write_str(self.name())
    }
}

#[derive(Clone, Copy, Debug, PartialEq, Eq, Serialize, Deserialize)]
#[serde(rename_all = "kebab-case")]
pub enum ModelKind {
    Bosonized,
    TavisCummings,
}

#[derive(Clone, Copy, Debug, Default, PartialEq, Eq, Serialize, Deserialize)]
#[serde(rename_all = "kebab-case")]
pub enum Layout {
    #[default]
    TwoPhoton,
    SinglePhoton,
}

#[derive(Clone, Debug, PartialEq, Serialize, Deserialize)]
#[serde(deny_unknown_fields)]
pub struct ModelConfig {
    pub kind: ModelKind,
    #[serde(default, skip_serializing_if = "Option::is_none")]
    pub atoms: Option<u32>,
    #[serde(default, skip_serializing_if = "is_default")]
    pub layout: Layout,
}

fn is_default<T: Default + PartialEq>(v: &T) -> bool {
    *v == T::default()
}

impl ModelConfig {
    pub fn collective(&self) -> Result<CollectiveModel> {
        match (self.kind, self.atoms) {
            (ModelKind::Bosonized, None) => Ok(CollectiveModel::Bosonized),
            (ModelKind::Bosonized, Some(_)) => Err(Error::validation(
                "model.atoms",
                "only applies to the tavis-cummings model",
            )),
            (ModelKind::TavisCummings, Some(n)) if n >= 1 => {
                Ok(CollectiveModel::TavisCummings { atoms: n })
            }
            (ModelKind::TavisCummings, _) => Err(Error::validation(
                "model.atoms",
                "tavis-cummings needs at least one atom",
            )),
        }
    }

    pub fn model(&self) -> Result<Model> {
        let c = self.collective()?;
        Ok(match self.layout {
            Layout::TwoPhoton => Model::two_photon(c),
            Layout::SinglePhoton => Model::single_photon(c),
        })
    }
}

#[derive(Clone, Debug, PartialEq, Serialize, Deserialize)]
#[serde(deny_unknown_fields)]
pub struct CouplingConfig {
    pub a: String,
    pub b: String,
    pub g: f64,
}

impl CouplingConfig {
    fn coupling(&self) -> Coupling {
        Coupling::new(&self.a, &self.b, self.g)
    }
}

#[derive(Clone, Debug, PartialEq, Serialize, Deserialize)]
#[serde(deny_unknown_fields)]
pub struct SegmentConfig {
    #[serde(default, skip_serializing_if = "Option::is_none")]
    pub area: Option<f64>,
    #[serde(default, skip_serializing_if = "Option::is_none")]
    pub duration: Option<f64>,
    #[serde(default, skip_serializing_if = "Option::is_none")]
    pub coupling: Option<CouplingConfig>,
    #[serde(default, skip_serializing_if = "BTreeMap::is_empty")]
    pub detunings: BTreeMap<String, f64>,
    #[serde(default, skip_serializing_if = "BTreeMap::is_empty")]
    pub widths: BTreeMap<String, f64>,
}

fn prefixed(prefix: &str, e: Error) -> Error {
    match e {
        Error::Validation { field, message } => Error::Validation {
            field: format!("{prefix}.{field}"),
            message,
        },
        other => other,
    }
}

impl SegmentConfig {
    fn segment(&self) -> Result<PulseSegment> {
        let mut seg = match (self.area, self.duration) {
            (Some(area), None) => {
                let c = self.coupling.as_ref().ok_or_else(|| {
                    Error::validation("area", "a pulse area needs a coupling")
                })?;
                PulseSegment::with_area(c.coupling(), area)?
            }
            (None, Some(d)) => PulseSegment::new(self.coupling.as_ref().map(|c| c.coupling()), d),
            _ => {
                return Err(Error::validation(
                    "duration",
                    "give exactly one of `area` or `duration`",
                ))
            }
        };
        seg.detunings = self.detunings.clone();
        seg.widths = self.widths.clone();
        seg.validate()?;
        Ok(seg)
    }
}

fn schedule_from(segments: &[SegmentConfig]) -> Result<PulseSchedule> {
    let built = segments
        .iter()
        .enumerate()
        .map(|(i, s)| s.segment().map_err(|e| prefixed(&format!("schedule.{i}"), e)))
        .collect::<Result<Vec<_>>>()?;
    PulseSchedule::new(built)
}

#[derive(Clone, Debug, PartialEq, Serialize, Deserialize)]
#[serde(tag = "mode", rename_all = "kebab-case", deny_unknown_fields)]
pub enum SimulateConfig {
    /// Photon survival after switching the medium into resonance for `τ`.
    Transmission {
        g: f64,
        #[serde(default, skip_serializing_if = "Option::is_none")]
        durations: Option<Vec<f64>>,
        #[serde(default, skip_serializing_if = "Option::is_none")]
        tau_max: Option<f64>,
        #[serde(default, skip_serializing_if = "Option::is_none")]
        points: Option<usize>,
    },
    /// Amplitudes through the scenario schedule.
    Trajectory {
        initial: Vec<u32>,
        #[serde(default = "default_samples")]
        samples: usize,
    },
    Rabi {
        initial: Vec<u32>,
        #[serde(default, skip_serializing_if = "Option::is_none")]
        compare: Option<Vec<u32>>,
        coupling: CouplingConfig,
    },
    PhaseVsLoss {
        g: f64,
        detuning: f64,
        width: f64,
        t: f64,
    },
}

fn default_samples() -> usize {
    16
}

#[derive(Clone, Debug, PartialEq, Serialize, Deserialize)]
#[serde(deny_unknown_fields)]
pub struct GateConfig {
    #[serde(default = "default_target")]
    pub target_diagonal: [f64; 4],
    #[serde(default, skip_serializing_if = "Option::is_none")]
    pub qubit1: Option<String>,
    #[serde(default, skip_serializing_if = "Option::is_none")]
    pub qubit2: Option<String>,
    #[serde(default, skip_serializing_if = "Option::is_none")]
    pub ancillas: Option<Vec<String>>,
}

fn default_target() -> [f64; 4] {
    [1.0, -1.0, 1.0, -1.0]
}

impl Default for GateConfig {
    fn default() -> Self {
        Self {
            target_diagonal: default_target(),
            qubit1: None,
            qubit2: None,
            ancillas: None,
        }
    }
}

impl GateConfig {
    fn encoding(&self) -> LogicalEncoding {
        let std = LogicalEncoding::standard();
        LogicalEncoding::new(
            self.qubit1.clone().unwrap_or(std.qubit1),
            self.qubit2.clone().unwrap_or(std.qubit2),
            self.ancillas.clone().unwrap_or(std.ancillas),
        )
    }
}

#[derive(Clone, Debug, PartialEq, Serialize, Deserialize)]
#[serde(deny_unknown_fields)]
pub struct FivePulseConfig {
    pub thetas: Vec<f64>,
}

#[derive(Clone, Debug, PartialEq, Serialize, Deserialize)]
#[serde(deny_unknown_fields)]
pub struct PerturbScan {
    pub atoms: Vec<u32>,
    pub w: Vec<f64>,
    pub delta_split: Vec<f64>,
}

fn one() -> f64 {
    1.0
}

fn one_u32() -> u32 {
    1
}

fn none_selector() -> WidthSelector {
    WidthSelector::None
}

#[derive(Clone, Debug, PartialEq, Serialize, Deserialize)]
#[serde(deny_unknown_fields)]
pub struct PerturbConfig {
    pub atoms: u32,
    pub delta1: f64,
    pub delta2: f64,
    #[serde(default, skip_serializing_if = "Option::is_none")]
    pub delta: Option<f64>,
    #[serde(default = "one")]
    pub m: f64,
    #[serde(default)]
    pub w: f64,
    #[serde(default = "one")]
    pub f_r: f64,
    #[serde(default = "one_u32")]
    pub n1: u32,
    #[serde(default = "one_u32")]
    pub n2: u32,
    #[serde(default = "none_selector")]
    pub rule: WidthSelector,
    #[serde(default, skip_serializing_if = "Option::is_none")]
    pub scan: Option<PerturbScan>,
}

impl PerturbConfig {
    fn params(&self) -> CollisionModelParams {
        CollisionModelParams {
            m: self.m,
            atoms: self.atoms,
            delta1: self.delta1,
            delta2: self.delta2,
            delta: self.delta.unwrap_or(0.5 * (self.delta1 + self.delta2)),
            w: self.w,
            f_r: self.f_r,
            n1: self.n1,
            n2: self.n2,
        }
    }

    fn rule(&self) -> Result<WidthRule> {
        WidthRule::new(self.rule, self.w).map_err(|e| prefixed("perturb", e))
    }
}

#[derive(Clone, Debug, PartialEq, Serialize, Deserialize)]
#[serde(deny_unknown_fields)]
pub struct RatesConfig {
    pub medium: MediumParams,
    #[serde(default, skip_serializing_if = "Vec::is_empty")]
    pub densities: Vec<f64>,
    #[serde(default, skip_serializing_if = "Vec::is_empty")]
    pub wavenumbers: Vec<f64>,
}

#[derive(Clone, Debug, PartialEq, Serialize, Deserialize)]
#[serde(deny_unknown_fields)]
pub struct GridSpec {
    pub start: f64,
    pub stop: f64,
    pub count: usize,
}

#[derive(Clone, Debug, PartialEq, Serialize, Deserialize)]
#[serde(deny_unknown_fields)]
pub struct SweepSpec {
    /// Scenario kind evaluated at each point.
    pub target: Kind,
    /// Dotted path into the scenario, e.g. `model.atoms` or `schedule.1.area`.
    pub parameter: String,
    #[serde(default, skip_serializing_if = "Option::is_none")]
    pub values: Option<Vec<f64>>,
    #[serde(default, skip_serializing_if = "Option::is_none")]
    pub grid: Option<GridSpec>,
}

impl SweepSpec {
    pub fn points(&self) -> Result<Vec<f64>> {
        let pts = match (&self.values, &self.grid) {
            (Some(v), None) => v.clone(),
            (None, Some(g)) => {
                if g.count == 0 {
                    return Err(Error::validation("sweep.grid.count", "must be at least 1"));
                }
                if g.count == 1 {
                    vec![g.start]
                } else {
                    (0..g.count)
                        .map(|i| g.start + (g.stop - g.start) * i as f64 / (g.count - 1) as f64)
                        .collect()
                }
            }
            _ => {
                return Err(Error::validation(
                    "sweep.values",
                    "give exactly one of `values` or `grid`",
                ))
            }
        };
        if pts.is_empty() {
            return Err(Error::validation("sweep.values", "must not be empty"));
        }
        if pts.iter().any(|v| !v.is_finite()) {
            return Err(Error::validation("sweep.values", "must be finite"));
        }
        Ok(pts)
    }
}

#[derive(Clone, Debug, PartialEq, Serialize, Deserialize)]
#[serde(deny_unknown_fields)]
pub struct OutputConfig {
    pub prefix: String,
}

#[derive(Clone, Debug, PartialEq, Serialize, Deserialize)]
#[serde(deny_unknown_fields)]
pub struct Scenario {
    pub kind: Kind,
    #[serde(default, skip_serializing_if = "Option::is_none")]
    pub output: Option<OutputConfig>,
    #[serde(default, skip_serializing_if = "Option::is_none")]
    pub model: Option<ModelConfig>,
    #[serde(default, skip_serializing_if = "Option::is_none")]
    pub simulate: Option<SimulateConfig>,
    #[serde(default, skip_serializing_if = "Option::is_none")]
    pub gate: Option<GateConfig>,
    #[serde(default, skip_serializing_if = "Option::is_none")]
    pub five_pulse: Option<FivePulseConfig>,
    #[serde(default, skip_serializing_if = "Option::is_none")]
    pub perturb: Option<PerturbConfig>,
    #[serde(default, skip_serializing_if = "Option::is_none")]
    pub rates: Option<RatesConfig>,
    #[serde(default, skip_serializing_if = "Option::is_none")]
    pub sweep: Option<SweepSpec>,
    #[serde(default, skip_serializing_if = "Vec::is_empty")]
    pub schedule: Vec<SegmentConfig>,
}

fn require<'a, T>(block: &'a Option<T>, name: &str, kind: Kind) -> Result<&'a T> {
    block
        .as_ref()
        .ok_or_else(|| Error::validation(name, format!("required for kind `{kind}`")))
}

fn finite(field: &str, v: f64) -> Result<()> {
    if v.is_finite() {
        Ok(())
    } else {
        Err(Error::validation(field, "must be finite"))
    }
}

impl Scenario {
    fn model(&self) -> Result<Model> {
        require(&self.model, "model", self.kind)?.model()
    }

    fn prefix(&self) -> String {
        self.output
            .as_ref()
            .map_or_else(|| self.kind.file_stem().to_string(), |o| o.prefix.clone())
    }

    /// Checks everything that can be checked without running numerics.
    pub fn validate(&self) -> Result<()> {
        if let Some(o) = &self.output {
            let ok = !o.prefix.is_empty()
                && o.prefix.chars().all(|c| c.is_ascii_alphanumeric() || "-_.".contains(c));
            if !ok {
                return Err(Error::validation(
                    "output.prefix",
                    "use letters, digits, `-`, `_` or `.`",
                ));
            }
        }
        if let Some(m) = &self.model {
            m.model()?;
        }
        schedule_from(&self.schedule)?;
        match self.kind {
            Kind::Simulate => match require(&self.simulate, "simulate", self.kind)? {
                SimulateConfig::Transmission {
                    g,
                    durations,
                    tau_max,
                    points,
                } => {
                    if !(g.is_finite() && *g > 0.0) {
                        return Err(Error::validation("simulate.g", "must be positive"));
                    }
                    match (durations, tau_max, points) {
                        (Some(d), None, None) => {
                            if d.is_empty() {
                                return Err(Error::validation("simulate.durations", "must not be empty"));
                            }
                            for t in d {
                                if !t.is_finite() || *t < 0.0 {
                                    return Err(Error::validation(
                                        "simulate.durations",
                                        "must be finite and non-negative",
                                    ));
                                }
                            }
                        }
                        (None, Some(t), Some(n)) => {
                            if !t.is_finite() || *t <= 0.0 {
                                return Err(Error::validation("simulate.tau_max", "must be positive"));
                            }
                            if *n < 2 {
                                return Err(Error::validation("simulate.points", "must be at least 2"));
                            }
                        }
                        _ => {
                            return Err(Error::validation(
                                "simulate.durations",
                                "give either `durations` or both `tau_max` and `points`",
                            ))
                        }
                    }
                }
                SimulateConfig::Trajectory { initial, samples } => {
                    let model = self.model()?;
                    if initial.len() != model.modes().len() {
                        return Err(Error::validation(
                            "simulate.initial",
                            format!("expected {} occupations", model.modes().len()),
                        ));
                    }
                    if *samples == 0 {
                        return Err(Error::validation("simulate.samples", "must be at least 1"));
                    }
                }
                SimulateConfig::Rabi {
                    initial,
                    compare,
                    coupling,
                } => {
                    let model = self.model()?;
                    for (field, occ) in [("simulate.initial", Some(initial)), ("simulate.compare", compare.as_ref())] {
                        if let Some(occ) = occ {
                            if occ.len() != model.modes().len() {
                                return Err(Error::validation(
                                    field,
                                    format!("expected {} occupations", model.modes().len()),
                                ));
                            }
                        }
                    }
                    finite("simulate.coupling.g", coupling.g)?;
                }
                SimulateConfig::PhaseVsLoss {
                    g,
                    detuning,
                    width,
                    t,
                } => {
                    finite("simulate.g", *g)?;
                    if !detuning.is_finite() || *detuning == 0.0 {
                        return Err(Error::validation("simulate.detuning", "must be finite and non-zero"));
                    }
                    if !width.is_finite() || *width < 0.0 {
                        return Err(Error::validation("simulate.width", "must be non-negative"));
                    }
                    if !t.is_finite() || *t < 0.0 {
                        return Err(Error::validation("simulate.t", "must be non-negative"));
                    }
                }
            },
            Kind::Gate => {
                self.model()?;
                if self.schedule.is_empty() {
                    return Err(Error::validation("schedule", "a gate needs at least one segment"));
                }
                if let Some(g) = &self.gate {
                    for v in g.target_diagonal {
                        finite("gate.target_diagonal", v)?;
                    }
                }
            }
            Kind::FivePulse => {
                self.model()?;
                let f = require(&self.five_pulse, "five_pulse", self.kind)?;
                if f.thetas.is_empty() {
                    return Err(Error::validation("five_pulse.thetas", "must not be empty"));
                }
                for t in &f.thetas {
                    if !t.is_finite() || *t < 0.0 {
                        return Err(Error::validation("five_pulse.thetas", "must be finite and non-negative"));
                    }
                }
            }
            Kind::Perturb => {
                let p = require(&self.perturb, "perturb", self.kind)?;
                p.params().validate().map_err(|e| prefixed("perturb", e))?;
                p.rule()?;
                if let Some(s) = &p.scan {
                    if s.atoms.is_empty() || s.w.is_empty() || s.delta_split.is_empty() {
                        return Err(Error::validation("perturb.scan", "every axis needs a value"));
                    }
                }
            }
            Kind::Rates => {
                let r = require(&self.rates, "rates", self.kind)?;
                r.medium.validate().map_err(|e| prefixed("rates.medium", e))?;
                if r.densities.is_empty() != r.wavenumbers.is_empty() {
                    return Err(Error::validation(
                        "rates.densities",
                        "a regime map needs both `densities` and `wavenumbers`",
                    ));
                }
                for v in r.densities.iter().chain(&r.wavenumbers) {
                    if !(v.is_finite() && *v > 0.0) {
                        return Err(Error::validation("rates.densities", "grid values must be positive"));
                    }
                }
            }
            Kind::Sweep => {
                let s = require(&self.sweep, "sweep", self.kind)?;
                if s.target == Kind::Sweep {
                    return Err(Error::validation("sweep.target", "cannot sweep a sweep"));
                }
                // points must resolve and decode; numeric failures become rows
                for v in s.points()? {
                    let text = self.sweep_document(v)?;
                    toml::from_str::<Scenario>(&text)
                        .map_err(|e| Error::validation("sweep.parameter", e.to_string().trim_end()))?;
                }
            }
        }
        Ok(())
    }

    /// The base scenario with the sweep parameter set to `value`.
    pub fn sweep_point(&self, value: f64) -> Result<Scenario> {
        parse_scenario(&self.sweep_document(value)?).map_err(|e| match e {
            Error::Parse(msg) => Error::validation("sweep.parameter", msg),
            other => other,
        })
    }

    fn sweep_document(&self, value: f64) -> Result<String> {
        let spec = require(&self.sweep, "sweep", self.kind)?;
        let mut doc = toml::Value::try_from(self)
            .map_err(|e| Error::Parse(format!("cannot re-encode scenario: {e}")))?;
        let table = doc.as_table_mut().expect("scenario encodes as a table");
        table.remove("sweep");
        table.insert("kind".into(), toml::Value::String(spec.target.name().into()));
        set_path(&mut doc, &spec.parameter, value)?;
        toml::to_string(&doc).map_err(|e| Error::Parse(format!("cannot re-encode scenario: {e}")))
    }
}

fn set_path(doc: &mut toml::Value, path: &str, value: f64) -> Result<()> {
    let bad = |why: &str| Error::validation("sweep.parameter", format!("`{path}` {why}"));
    let parts: Vec<&str> = path.split('.').collect();
    if parts.iter().any(|p| p.is_empty()) {
        return Err(bad("is not a dotted path"));
    }
    let mut node = doc;
    for part in &parts[..parts.len() - 1] {
        node = match node {
            toml::Value::Table(t) => t.get_mut(*part).ok_or_else(|| bad("does not resolve"))?,
            toml::Value::Array(a) => {
                let i: usize = part.parse().map_err(|_| bad("indexes an array with a non-integer"))?;
                a.get_mut(i).ok_or_else(|| bad("indexes past the end of an array"))?
            }
            _ => return Err(bad("does not resolve")),
        };
    }
    let leaf = if value.fract() == 0.0 && value.abs() < 9.0e15 {
        toml::Value::Integer(value as i64)
    } else {
        toml::Value::Float(value)
    };
    let last = parts[parts.len() - 1];
    match node {
        toml::Value::Table(t) => {
            t.insert(last.to_string(), leaf);
        }
        toml::Value::Array(a) => {
            let i: usize = last.parse().map_err(|_| bad("indexes an array with a non-integer"))?;
            *a.get_mut(i).ok_or_else(|| bad("indexes past the end of an array"))? = leaf;
        }
        _ => return Err(bad("does not resolve")),
    }
    Ok(())
}

/// Backticked names after the first occurrence of `marker` in `msg`.
fn suggestion(msg: &str) -> Option<String> {
    let (marker_pos, marker) = ["unknown field `", "unknown variant `"]
        .iter()
        .find_map(|m| msg.find(m).map(|p| (p, *m)))?;
    let rest = &msg[marker_pos + marker.len()..];
    let bad = &rest[..rest.find('`')?];
    let expected = &rest[rest.find("expected")?..];
    let candidates: Vec<&str> = expected.split('`').skip(1).step_by(2).collect();
    let (best, score) = candidates
        .iter()
        .map(|c| (*c, strsim::normalized_damerau_levenshtein(bad, c)))
        .max_by(|a, b| a.1.total_cmp(&b.1))?;
    (score >= 0.5).then(|| best.to_string())
}

/// Parses and validates a scenario document. Unknown keys are errors, and
/// the nearest valid key is suggested for misspellings.
pub fn parse_scenario(text: &str) -> Result<Scenario> {
    let scenario: Scenario = toml::from_str(text).map_err(|e| {
        let msg = e.to_string();
        match suggestion(&msg) {
            Some(s) => Error::Parse(format!("{}\nhelp: did you mean `{s}`?", msg.trim_end())),
            None => Error::Parse(msg.trim_end().to_string()),
        }
    })?;
    scenario.validate()?;
    Ok(scenario)
}

pub fn load_scenario(path: &Path) -> Result<Scenario> {
    let text = fs::read_to_string(path)?;
    parse_scenario(&text).map_err(|e| match e {
        Error::Parse(msg) => Error::Parse(format!("{}: {msg}", path.display())),
        other => other,
    })
}

#[derive(Clone, Debug, PartialEq)]
pub enum Artifact {
    Json { name: String, kind: Kind, payload: Value },
    Csv { name: String, text: String },
}

impl Artifact {
    pub fn name(&self) -> &str {
        match self {
            Artifact::Json { name, .. } | Artifact::Csv { name, .. } => name,
        }
    }

    /// File contents; JSON payloads are wrapped with the schema version and
    /// a metadata block.
    pub fn render(&self, generated_unix: u64) -> Result<String> {
        match self {
            Artifact::Csv { text, .. } => Ok(text.clone()),
            Artifact::Json { kind, payload, .. } => {
                let doc = json!({
                    "schema_version": SCHEMA_VERSION,
                    "kind": kind.name(),
                    "payload": payload,
                    "metadata": {
                        "generated_unix": generated_unix,
                        "version": env!("CARGO_PKG_VERSION"),
                    },
                });
                let mut s = to_json(&doc)?;
                s.push('\n');
                Ok(s)
            }
        }
    }

    /// Deterministic part of the contents.
    pub fn payload_text(&self) -> Result<String> {
        match self {
            Artifact::Csv { text, .. } => Ok(text.clone()),
            Artifact::Json { payload, .. } => to_json(payload),
        }
    }
}

#[derive(Clone, Debug, Default, PartialEq)]
pub struct Artifacts {
    pub files: Vec<Artifact>,
    /// Scalar metrics used for sweep rows, in a fixed order.
    pub summary: Vec<(String, f64)>,
}

fn csv_text(write: impl FnOnce(&mut Vec<u8>) -> Result<()>) -> Result<String> {
    let mut buf = Vec::new();
    write(&mut buf)?;
    Ok(String::from_utf8(buf).expect("csv output is UTF-8"))
}

fn payload<T: Serialize>(value: &T) -> Result<Value> {
    Ok(serde_json::to_value(value)?)
}

/// Runs a validated scenario and returns its artifacts without touching
/// the filesystem.
pub fn evaluate(scenario: &Scenario) -> Result<Artifacts> {
    evaluate_with(scenario, 1)
}

fn evaluate_with(scenario: &Scenario, parallelism: usize) -> Result<Artifacts> {
    let prefix = scenario.prefix();
    let kind = scenario.kind;
    let json_file = |suffix: &str, payload: Value| Artifact::Json {
        name: format!("{prefix}{suffix}.json"),
        kind,
        payload,
    };
    let csv_file = |suffix: &str, text: String| Artifact::Csv {
        name: format!("{prefix}{suffix}.csv"),
        text,
    };
    let mut out = Artifacts::default();
    match kind {
        Kind::Simulate => match require(&scenario.simulate, "simulate", kind)? {
            SimulateConfig::Transmission {
                g,
                durations,
                tau_max,
                points,
            } => {
                let taus = match (durations, tau_max, points) {
                    (Some(d), _, _) => d.clone(),
                    (None, Some(t), Some(n)) => {
                        (0..*n).map(|i| t * i as f64 / (*n - 1) as f64).collect()
                    }
                    _ => unreachable!("validated"),
                };
                let rows = transmission_scan(*g, &taus)?;
                let text = csv_text(|buf| {
                    let mut w = csv::Writer::from_writer(buf);
                    w.write_record(["tau", "probability"])?;
                    for (t, p) in &rows {
                        w.write_record([fmt_f64(*t), fmt_f64(*p)])?;
                    }
                    w.flush()?;
                    Ok(())
                })?;
                let (lo, hi) = rows
                    .iter()
                    .fold((f64::INFINITY, f64::NEG_INFINITY), |(lo, hi), (_, p)| (lo.min(*p), hi.max(*p)));
                out.files.push(csv_file("_transmission", text));
                out.summary = vec![("min_probability".into(), lo), ("max_probability".into(), hi)];
            }
            SimulateConfig::Trajectory { initial, samples } => {
                let model = scenario.model()?;
                let schedule = schedule_from(&scenario.schedule)?;
                let basis = model.basis(initial.iter().sum())?;
                let traj = run_schedule(&model, &schedule, &basis, &basis.ket(initial)?, *samples)?;
                let text = csv_text(|buf| traj.write_csv(buf))?;
                out.files.push(csv_file("_trajectory", text));
                out.summary = vec![(
                    "final_norm".into(),
                    traj.final_state().map_or(1.0, |s| s.norm()),
                )];
            }
            SimulateConfig::Rabi {
                initial,
                compare,
                coupling,
            } => {
                let model = scenario.model()?;
                let c = coupling.coupling();
                let omega = rabi_frequency(&model, &c, initial)?;
                let reference = compare
                    .as_ref()
                    .map(|occ| rabi_frequency(&model, &c, occ))
                    .transpose()?;
                let ratio = reference.map(|r| omega / r);
                out.files.push(json_file(
                    "_rabi",
                    json!({
                        "initial": initial,
                        "omega": omega,
                        "compare": compare,
                        "compare_omega": reference,
                        "ratio": ratio,
                    }),
                ));
                out.summary.push(("omega".into(), omega));
                if let Some(r) = ratio {
                    out.summary.push(("ratio".into(), r));
                }
            }
            SimulateConfig::PhaseVsLoss {
                g,
                detuning,
                width,
                t,
            } => {
                let (phase, loss) = phase_vs_loss(*g, *detuning, *width, *t)?;
                let ratio = if loss > 0.0 { phase / loss } else { f64::NAN };
                let expected = if *width > 0.0 { detuning / (2.0 * width) } else { f64::NAN };
                out.files.push(json_file(
                    "_phase_vs_loss",
                    json!({
                        "g": g, "detuning": detuning, "width": width, "t": t,
                        "phase": phase,
                        "loss": loss,
                        "ratio": ratio.is_finite().then_some(ratio),
                        "expected_ratio": expected.is_finite().then_some(expected),
                    }),
                ));
                out.summary = vec![("phase".into(), phase), ("loss".into(), loss), ("ratio".into(), ratio)];
            }
        },
        Kind::Gate => {
            let model = scenario.model()?;
            let schedule = schedule_from(&scenario.schedule)?;
            let cfg = scenario.gate.clone().unwrap_or_default();
            let report = extract_gate(&schedule, &cfg.encoding(), &model)?;
            let deviation = report.deviation_from_diagonal(cfg.target_diagonal.map(|x| C64::new(x, 0.0)));
            let gp = report.payload();
            let mut value = payload(&gp)?;
            value["target_diagonal"] = json!(cfg.target_diagonal);
            value["deviation"] = json!(deviation);
            out.files.push(json_file("", value));
            out.summary = vec![
                ("deviation".into(), deviation),
                ("max_leakage".into(), report.max_leakage()),
                ("unitarity_defect".into(), report.unitarity_defect),
                ("entangling".into(), if report.entangling { 1.0 } else { 0.0 }),
            ];
            if let Some(phi) = gp.conditional_phase {
                out.summary.push(("conditional_phase".into(), phi));
            }
        }
        Kind::FivePulse => {
            let collective = require(&scenario.model, "model", kind)?.collective()?;
            let cfg = require(&scenario.five_pulse, "five_pulse", kind)?;
            let rows = cfg
                .thetas
                .iter()
                .map(|&t| five_pulse_leakage(collective, t).map(|r| (t, r)))
                .collect::<Result<Vec<_>>>()?;
            let text = csv_text(|buf| {
                let mut w = csv::Writer::from_writer(buf);
                w.write_record(["theta", "p_two_photon", "p_two_excitation", "p_return"])?;
                for (t, r) in &rows {
                    w.write_record([
                        fmt_f64(*t),
                        fmt_f64(r.p_two_photon),
                        fmt_f64(r.p_two_excitation),
                        fmt_f64(r.p_return),
                    ])?;
                }
                w.flush()?;
                Ok(())
            })?;
            let ratio = match collective {
                CollectiveModel::TavisCummings { atoms: 1 } => None,
                c => Some(emission_absorption_ratio(c)?),
            };
            let max_p = rows.iter().map(|(_, r)| r.p_two_photon).fold(0.0, f64::max);
            out.files.push(csv_file("", text));
            out.files.push(json_file(
                "",
                json!({
                    "rows": rows.iter().map(|(t, r)| json!({"theta": t, "leakage": r})).collect::<Vec<_>>(),
                    "emission_absorption_ratio": ratio,
                }),
            ));
            out.summary.push(("max_p_two_photon".into(), max_p));
            if let Some(r) = ratio {
                out.summary.push(("emission_absorption_ratio".into(), r));
            }
        }
        Kind::Perturb => {
            let cfg = require(&scenario.perturb, "perturb", kind)?;
            let params = cfg.params();
            let rule = cfg.rule()?;
            let p = perturbation::payload(&params, rule)?;
            out.summary = vec![
                ("cross_re".into(), p.cross_coefficient[0]),
                ("cross_im".into(), p.cross_coefficient[1]),
                ("relative".into(), p.relative_cross_coefficient),
                ("fit_residual".into(), p.fit_residual),
            ];
            out.files.push(json_file("", payload(&p)?));
            if let Some(s) = &cfg.scan {
                let rows = scan(&params, cfg.rule, &s.atoms, &s.w, &s.delta_split)?;
                out.files.push(csv_file("_scan", csv_text(|buf| write_scan_csv(&rows, buf))?));
            }
        }
        Kind::Rates => {
            let cfg = require(&scenario.rates, "rates", kind)?;
            let m = &cfg.medium;
            let coop = cooperative_raman_rate(m)?;
            let regime = regime_classify(m.density, m.wavenumber, m.linewidth, m.t2, coop)?;
            out.files.push(json_file(
                "",
                json!({ "medium": m, "cooperative_raman_rate": coop, "regime": regime }),
            ));
            if !cfg.densities.is_empty() {
                let rows = regime_map(m, &cfg.densities, &cfg.wavenumbers)?;
                out.files.push(csv_file("_regime_map", csv_text(|buf| write_regime_csv(&rows, buf))?));
            }
            out.summary = vec![
                ("cooperative_raman_rate".into(), coop),
                ("dominant_rate".into(), regime.dominant_rate),
                ("cooperation_wins".into(), if regime.cooperation_wins { 1.0 } else { 0.0 }),
            ];
        }
        Kind::Sweep => {
            let rows = sweep(scenario, parallelism)?;
            let ok = rows.iter().filter(|r| r.status == "ok").count();
            out.files.push(csv_file("", sweep_csv(&rows)?));
            out.summary = vec![("points".into(), rows.len() as f64), ("succeeded".into(), ok as f64)];
            if ok == 0 {
                return Err(Error::InvalidInput(format!(
                    "every sweep point failed; first: {}",
                    rows[0].status
                )));
            }
        }
    }
    Ok(out)
}

#[derive(Clone, Debug, PartialEq)]
pub struct SweepRow {
    pub index: usize,
    pub value: f64,
    pub status: String,
    pub metrics: Vec<(String, f64)>,
}

/// Evaluates every sweep point on a pool of `parallelism` threads. Rows
/// come back in grid order whatever the completion order.
pub fn sweep(scenario: &Scenario, parallelism: usize) -> Result<Vec<SweepRow>> {
    if parallelism == 0 {
        return Err(Error::validation("parallel", "must be at least 1"));
    }
    let spec = require(&scenario.sweep, "sweep", scenario.kind)?;
    let points = spec.points()?;
    let pool = rayon::ThreadPoolBuilder::new()
        .num_threads(parallelism)
        .build()
        .map_err(|e| Error::InvalidInput(format!("cannot build thread pool: {e}")))?;
    let rows = pool.install(|| {
        points
            .par_iter()
            .enumerate()
            .map(|(index, &value)| {
                let result = scenario
                    .sweep_point(value)
                    .and_then(|s| evaluate_with(&s, 1));
                match result {
                    Ok(a) => SweepRow {
                        index,
                        value,
                        status: "ok".into(),
                        metrics: a.summary,
                    },
                    Err(e) => SweepRow {
                        index,
                        value,
                        status: format!("error: {}", e.to_string().replace(['\n', '\r'], " ")),
                        metrics: Vec::new(),
                    },
                }
            })
            .collect::<Vec<_>>()
    });
    Ok(rows)
}

pub fn sweep_csv(rows: &[SweepRow]) -> Result<String> {
    let mut columns: Vec<String> = Vec::new();
    for r in rows {
        for (k, _) in &r.metrics {
            if !columns.contains(k) {
                columns.push(k.clone());
            }
        }
    }
    csv_text(|buf| {
        let mut w = csv::Writer::from_writer(buf);
        let mut header = vec!["index".to_string(), "value".into(), "status".into()];
        header.extend(columns.iter().cloned());
        w.write_record(&header)?;
        for r in rows {
            let mut rec = vec![r.index.to_string(), fmt_f64(r.value), r.status.clone()];
            for c in &columns {
                rec.push(
                    r.metrics
                        .iter()
                        .find(|(k, _)| k == c)
                        .map_or_else(String::new, |(_, v)| fmt_f64(*v)),
                );
            }
            w.write_record(&rec)?;
        }
        w.flush()?;
        Ok(())
    })
}

/// Writes artifacts under `dir`, returning their paths.
pub fn write_artifacts(artifacts: &Artifacts, dir: &Path) -> Result<Vec<PathBuf>> {
    fs::create_dir_all(dir)?;
    let now = SystemTime::now()
        .duration_since(UNIX_EPOCH)
        .map_or(0, |d| d.as_secs());
    artifacts
        .files
        .iter()
        .map(|a| {
            let path = dir.join(a.name());
            fs::write(&path, a.render(now)?)?;
            Ok(path)
        })
        .collect()
}

#[derive(Debug, Parser)]
#[command(name = "photon-exchange", version, about = "Photon-exchange gate laboratory")]
pub struct Cli {
    #[command(subcommand)]
    pub command: Command,
}

#[derive(Debug, clap::Args)]
pub struct CommonArgs {
    /// Scenario file (TOML).
    #[arg(long)]
    pub scenario: PathBuf,
    /// Output directory.
    #[arg(long, default_value = ".")]
    pub out: PathBuf,
}

#[derive(Debug, Subcommand)]
pub enum Command {
    /// Time evolution: transmission scans, trajectories, Rabi and phase/loss runs.
    Simulate(CommonArgs),
    /// Extract the logical two-qubit gate of a pulse schedule.
    Gate(CommonArgs),
    /// Two-photon leakage of the five-pulse mixing step.
    FivePulse(CommonArgs),
    /// Fourth-order energies and the n1·n2 cross coefficient.
    Perturb(CommonArgs),
    /// Cooperative rates and density regime.
    Rates(CommonArgs),
    /// Evaluate a scenario over a parameter grid.
    Sweep {
        #[command(flatten)]
        common: CommonArgs,
        /// Worker threads.
        #[arg(long, default_value_t = 1)]
        parallel: usize,
    },
}

impl Command {
    fn parts(&self) -> (Kind, &CommonArgs, usize) {
        match self {
            Command::Simulate(c) => (Kind::Simulate, c, 1),
            Command::Gate(c) => (Kind::Gate, c, 1),
            Command::FivePulse(c) => (Kind::FivePulse, c, 1),
            Command::Perturb(c) => (Kind::Perturb, c, 1),
            Command::Rates(c) => (Kind::Rates, c, 1),
            Command::Sweep { common, parallel } => (Kind::Sweep, common, *parallel),
        }
    }
}

/// Loads, checks the command matches the scenario kind, evaluates and writes.
pub fn run(command: &Command) -> Result<Vec<PathBuf>> {
    let (kind, args, parallel) = command.parts();
    let scenario = load_scenario(&args.scenario)?;
    if scenario.kind != kind {
        return Err(Error::validation(
            "kind",
            format!("scenario is `{}` but the command is `{kind}`", scenario.kind),
        ));
    }
    let artifacts = evaluate_with(&scenario, parallel)?;
    write_artifacts(&artifacts, &args.out)
}

pub fn exit_code(result: &Result<Vec<PathBuf>>) -> i32 {
    match result {
        Ok(_) => 0,
        Err(e) if e.is_numerical() => 2,
        Err(_) => 1,
    }
}

/// Entry point shared by the binary and tests; returns the process exit code.
pub fn main_with_args<I, T>(args: I) -> i32
where
    I: IntoIterator<Item = T>,
    T: Into<OsString> + Clone,
{
    let cli = match Cli::try_parse_from(args) {
        Ok(c) => c,
        Err(e) => {
            let code = if e.use_stderr() { 1 } else { 0 };
            let _ = e.print();
            return code;
        }
    };
    let result = run(&cli.command);
    match &result {
        Ok(paths) => {
            for p in paths {
                println!("{}", p.display());
            }
        }
        Err(e) => eprintln!("error: {e}"),
    }
    exit_code(&result)
}

#[cfg(test)]
mod tests {
    use super::*;

    const GATE: &str = r#"
kind = "gate"

[model]
kind = "bosonized"

[[schedule]]
area = 1.0
coupling = { a = "photon1", b = "collective", g = 1.0 }

[[schedule]]
area = 2.0
coupling = { a = "photon2", b = "collective", g = 1.0 }

[[schedule]]
area = 1.0
coupling = { a = "photon1", b = "collective", g = 1.0 }
"#;

    #[test]
    fn gate_scenario_round_trips() {
        let s = parse_scenario(GATE).unwrap();
        assert_eq!(s.kind, Kind::Gate);
        assert_eq!(s.schedule.len(), 3);
        let again = parse_scenario(&toml::to_string(&s).unwrap()).unwrap();
        assert_eq!(s, again);
    }

    #[test]
    fn negative_duration_names_field() {
        let text = GATE.replacen("area = 2.0", "duration = -1.0", 1);
        match parse_scenario(&text) {
            Err(Error::Validation { field, .. }) => assert!(field.ends_with("duration"), "{field}"),
            other => panic!("{other:?}"),
        }
    }

    #[test]
    fn misspelled_key_gets_suggestion() {
        let text = GATE.replacen("area = 2.0", "area = 2.0\ndetunning = { collective = 0.1 }", 1);
        match parse_scenario(&text) {
            Err(Error::Parse(msg)) => {
                assert!(msg.contains("did you mean `detunings`"), "{msg}");
                assert!(msg.contains("line"), "{msg}");
            }
            other => panic!("{other:?}"),
        }
        match parse_scenario(&GATE.replacen("kind = \"gate\"", "kind = \"gat\"", 1)) {
            Err(Error::Parse(msg)) => assert!(msg.contains("did you mean `gate`"), "{msg}"),
            other => panic!("{other:?}"),
        }
    }

    #[test]
    fn missing_block_is_reported() {
        match parse_scenario("kind = \"perturb\"") {
            Err(Error::Validation { field, .. }) => assert_eq!(field, "perturb"),
            other => panic!("{other:?}"),
        }
    }

    #[test]
    fn gate_evaluates_to_report() {
        let a = evaluate(&parse_scenario(GATE).unwrap()).unwrap();
        let Artifact::Json { payload, name, .. } = &a.files[0] else {
            panic!("expected json");
        };
        assert_eq!(name, "gate.json");
        assert_eq!(payload["entangling"], json!(false));
        assert!(payload["deviation"].as_f64().unwrap() < 1e-9);
        let doc: Value = serde_json::from_str(&a.files[0].render(7).unwrap()).unwrap();
        assert_eq!(doc["schema_version"], json!(SCHEMA_VERSION));
        assert_eq!(doc["metadata"]["generated_unix"], json!(7));
    }

    #[test]
    fn sweep_paths() {
        let base = parse_scenario(GATE).unwrap();
        let mut doc = toml::Value::try_from(&base).unwrap();
        set_path(&mut doc, "schedule.1.area", 2.5).unwrap();
        assert_eq!(doc["schedule"][1]["area"].as_float(), Some(2.5));
        set_path(&mut doc, "model.atoms", 4.0).unwrap();
        assert_eq!(doc["model"]["atoms"].as_integer(), Some(4));
        assert!(set_path(&mut doc, "schedule.9.area", 1.0).is_err());
        assert!(set_path(&mut doc, "nothing.here", 1.0).is_err());
    }

    #[test]
    fn sweep_records_failures_per_row() {
        let text = format!(
            "{}\n[sweep]\ntarget = \"gate\"\nparameter = \"schedule.0.area\"\nvalues = [1.0, -1.0]\n",
            GATE.replacen("kind = \"gate\"", "kind = \"sweep\"", 1)
        );
        let s = parse_scenario(&text).unwrap();
        let rows = sweep(&s, 2).unwrap();
        assert_eq!(rows[0].status, "ok");
        assert!(rows[1].status.starts_with("error"));
        let csv = sweep_csv(&rows).unwrap();
        assert!(csv.starts_with("index,value,status,deviation"));
    }

    #[test]
    fn exit_codes() {
        assert_eq!(exit_code(&Ok(vec![])), 0);
        assert_eq!(exit_code(&Err(Error::validation("x", "y"))), 1);
        assert_eq!(exit_code(&Err(Error::NoDynamics("z".into()))), 2);
    }
}
