//! Experiment configuration: TOML sources merged in order, with unit-checked
//! quantities.

use std::path::{Path, PathBuf};

use anyhow::{anyhow, bail, Context, Result};
use ladderprobe_core::probe::{Damping, PhiExt, ProbeConfig, Window};
use ladderprobe_core::{Dispersion, FnDenominator, LadderConfig};
use serde::Deserialize;
use toml::Table;

use crate::units::{Angle, Capacitance, Current, Energy, Inductance, Rate, Time};

pub const PRESETS: &[(&str, &str)] =
    &[("ladder", include_str!("../presets/ladder.toml")), ("probe", include_str!("../presets/probe.toml"))];

/// Marker for config errors, which map to exit code 1.
#[derive(Debug)]
pub struct ConfigError(pub String);

impl std::fmt::Display for ConfigError {
    fn fmt(&self, f: &mut std::fmt::Formatter<'_>) -> std::fmt::Result {
        f.write_str(&self.0)
    }
}

impl std::error::Error for ConfigError {}

fn config_error(msg: impl Into<String>) -> anyhow::Error {
    anyhow!(ConfigError(msg.into()))
}

#[derive(Debug, Clone, Default, Deserialize)]
#[serde(deny_unknown_fields)]
pub struct ExperimentConfig {
    #[serde(default)]
    pub ladder: LadderSection,
    #[serde(default)]
    pub probe: ProbeSection,
    #[serde(default)]
    pub dynamics: DynamicsSection,
    #[serde(default)]
    pub state: StateSection,
    #[serde(default)]
    pub readout: ReadoutSection,
    #[serde(default)]
    pub extract: ExtractSection,
    #[serde(default)]
    pub run: RunSection,
}

#[derive(Debug, Clone, Default, Deserialize)]
#[serde(deny_unknown_fields)]
pub struct LadderSection {
    pub nodes: Option<usize>,
    pub inductance: Option<Inductance>,
    pub capacitance: Option<Capacitance>,
    pub impurity_ej: Option<Energy>,
    pub impurity_nodes: Option<(usize, usize)>,
    pub impurity_flux: Option<Angle>,
    pub kappa: Option<Rate>,
    pub drive_mode: Option<usize>,
    pub drive_strength: Option<Rate>,
    pub n_modes: Option<usize>,
    pub fn_denominator: Option<FnDenominator>,
    pub dispersion: Option<Dispersion>,
    /// Overrides the default down-conversion rate scale.
    pub gamma: Option<Rate>,
}

#[derive(Debug, Clone, Copy, PartialEq, Eq, Deserialize)]
#[serde(rename_all = "snake_case")]
pub enum DampingKind {
    LowPass,
    TwoPole,
    None,
}

#[derive(Debug, Clone, Default, Deserialize)]
#[serde(deny_unknown_fields)]
pub struct ProbeSection {
    pub c_s: Option<Capacitance>,
    pub l_s: Option<Inductance>,
    pub c_x: Option<Capacitance>,
    pub l_x: Option<Inductance>,
    pub ej_p: Option<Energy>,
    pub i_c: Option<Current>,
    pub mutual: Option<Inductance>,
    pub l_p: Option<Inductance>,
    pub c_p: Option<Capacitance>,
    pub e_m: Option<Energy>,
    pub phi_ext: Option<Angle>,
    pub kappa_probe: Option<Rate>,
    pub damping: Option<DampingKind>,
    pub quasi_static: Option<bool>,
}

#[derive(Debug, Clone, Default, Deserialize)]
#[serde(deny_unknown_fields)]
pub struct DynamicsSection {
    /// Trajectory length; defaults to `40/κ`.
    pub t_end: Option<Time>,
    /// Rows in the trajectory table, including `t = 0`.
    pub samples: Option<usize>,
    pub rtol: Option<f64>,
    pub atol: Option<f64>,
    pub max_step: Option<Time>,
}

#[derive(Debug, Clone, Default, Deserialize)]
#[serde(deny_unknown_fields)]
pub struct StateSection {
    /// Squeezing time `T*`.
    pub t_star: Option<Time>,
    /// Photon numbers per mode; replaces the steady-state file.
    pub populations: Option<Vec<f64>>,
    /// Steady-state JSON from `dynamics`; defaults to `<out-dir>/steady_state.json`.
    pub steady_state: Option<PathBuf>,
    /// Fock occupations; default rounds the populations.
    pub occupations: Option<Vec<u32>>,
    /// Largest `|ξ|` accepted before the state is rejected.
    pub max_xi: Option<f64>,
}

#[derive(Debug, Clone, Copy, PartialEq, Eq, Deserialize)]
#[serde(rename_all = "lowercase")]
pub enum Source {
    Tones,
    Coherent,
    Fock,
    Squeezed,
}

impl Source {
    pub fn state_label(self) -> Option<&'static str> {
        match self {
            Source::Tones => None,
            Source::Coherent => Some("coherent"),
            Source::Fock => Some("fock"),
            Source::Squeezed => Some("squeezed"),
        }
    }
}

#[derive(Debug, Clone, Deserialize)]
#[serde(deny_unknown_fields)]
pub struct Tone {
    /// Multiple of `ω₀`.
    pub harmonic: f64,
    pub amplitude: Angle,
    #[serde(default = "zero_angle")]
    pub phase: Angle,
}

fn zero_angle() -> Angle {
    Angle(0.0)
}

#[derive(Debug, Clone, Default, Deserialize)]
#[serde(deny_unknown_fields)]
pub struct ReadoutSection {
    pub source: Option<Source>,
    /// Correlation file for state sources; defaults to `<out-dir>/<state>.jsonl`.
    pub correlations: Option<PathBuf>,
    /// `[i, j]`, or `[i]` for a readout against ground.
    pub sites: Option<Vec<usize>>,
    pub tones_i: Option<Vec<Tone>>,
    pub tones_j: Option<Vec<Tone>>,
    /// Record length in periods of `ω₀`, after the warm-up.
    pub periods: Option<usize>,
    /// Samples per period of `ω₀`.
    pub samples_per_period: Option<usize>,
    pub warmup: Option<Time>,
    pub window: Option<Window>,
}

#[derive(Debug, Clone, Default, Deserialize)]
#[serde(deny_unknown_fields)]
pub struct ExtractSection {
    pub active_modes: Option<Vec<usize>>,
    pub slack: Option<usize>,
    pub candidates: Option<usize>,
    /// Degeneracy binning tolerance in units of `ω₀`.
    pub tolerance_fraction: Option<f64>,
    /// Relative Gaussian noise added to synthesized measurements.
    pub noise: Option<f64>,
    /// Site used for the quadrature fit of a synthesized `⟨φ⟩` record.
    pub quadrature_site: Option<usize>,
}

#[derive(Debug, Clone, Default, Deserialize)]
#[serde(deny_unknown_fields)]
pub struct RunSection {
    pub seed: Option<u64>,
}

/// One configuration source, kept for diagnostics.
pub struct ConfigSource {
    pub name: String,
    pub text: String,
}

fn parse_source(src: &ConfigSource) -> Result<Table> {
    // Typed parse first: unit and type errors come back with line numbers.
    toml::from_str::<ExperimentConfig>(&src.text).map_err(|e| config_error(format!("{}: {e}", src.name)))?;
    toml::from_str::<Table>(&src.text).map_err(|e| config_error(format!("{}: {e}", src.name)))
}

fn merge(into: &mut Table, from: Table) {
    for (key, value) in from {
        match (into.get_mut(&key), value) {
            (Some(toml::Value::Table(dst)), toml::Value::Table(src)) => merge(dst, src),
            (_, value) => {
                into.insert(key, value);
            }
        }
    }
}

pub fn preset(name: &str) -> Result<ConfigSource> {
    PRESETS
        .iter()
        .find(|(n, _)| *n == name)
        .map(|(n, text)| ConfigSource { name: format!("preset {n}"), text: text.to_string() })
        .ok_or_else(|| {
            let known: Vec<&str> = PRESETS.iter().map(|(n, _)| *n).collect();
            config_error(format!("unknown preset {name:?}; available: {}", known.join(", ")))
        })
}

pub fn file_source(path: &Path) -> Result<ConfigSource> {
    let text = std::fs::read_to_string(path)
        .map_err(|e| config_error(format!("cannot read config {}: {e}", path.display())))?;
    Ok(ConfigSource { name: path.display().to_string(), text })
}

/// Merges the sources in order; later sources override earlier keys.
pub fn load(sources: &[ConfigSource]) -> Result<ExperimentConfig> {
    let mut merged = Table::new();
    for src in sources {
        merge(&mut merged, parse_source(src)?);
    }
    merged.try_into().map_err(|e: toml::de::Error| config_error(format!("merged config: {e}")))
}

fn need<T>(value: Option<T>, key: &str) -> Result<T> {
    value.ok_or_else(|| config_error(format!("missing `{key}`; set it in a config file or use a preset")))
}

impl ExperimentConfig {
    pub fn ladder(&self) -> Result<LadderConfig> {
        let l = &self.ladder;
        let cfg = LadderConfig {
            nodes: need(l.nodes, "ladder.nodes")?,
            inductance: need(l.inductance, "ladder.inductance")?.0,
            capacitance: need(l.capacitance, "ladder.capacitance")?.0,
            impurity_ej: need(l.impurity_ej, "ladder.impurity_ej")?.0,
            impurity_nodes: need(l.impurity_nodes, "ladder.impurity_nodes")?,
            impurity_flux: need(l.impurity_flux, "ladder.impurity_flux")?.0,
            kappa: need(l.kappa, "ladder.kappa")?.0,
            drive_mode: need(l.drive_mode, "ladder.drive_mode")?,
            drive_strength: need(l.drive_strength, "ladder.drive_strength")?.0,
            n_modes: need(l.n_modes, "ladder.n_modes")?,
            fn_denominator: l.fn_denominator.unwrap_or_default(),
            dispersion: l.dispersion.unwrap_or_default(),
        };
        cfg.validate().map_err(|e| config_error(format!("ladder: {e}")))?;
        Ok(cfg)
    }

    pub fn probe(&self) -> Result<ProbeConfig> {
        let p = &self.probe;
        let phi = need(p.phi_ext, "probe.phi_ext")?.0;
        let cfg = ProbeConfig {
            c_s: need(p.c_s, "probe.c_s")?.0,
            l_s: need(p.l_s, "probe.l_s")?.0,
            c_x: need(p.c_x, "probe.c_x")?.0,
            l_x: need(p.l_x, "probe.l_x")?.0,
            ej_p: need(p.ej_p, "probe.ej_p")?.0,
            i_c: need(p.i_c, "probe.i_c")?.0,
            mutual: need(p.mutual, "probe.mutual")?.0,
            l_p: need(p.l_p, "probe.l_p")?.0,
            c_p: need(p.c_p, "probe.c_p")?.0,
            e_m: need(p.e_m, "probe.e_m")?.0,
            phi_ext: PhiExt::from_radians(phi)
                .map_err(|_| config_error(format!("probe.phi_ext must be 0 or pi/2, got {phi} rad")))?,
            kappa_probe: need(p.kappa_probe, "probe.kappa_probe")?.0,
            damping: match p.damping.unwrap_or(DampingKind::LowPass) {
                DampingKind::LowPass => Damping::LowPass,
                DampingKind::TwoPole => Damping::TwoPole,
                DampingKind::None => Damping::None,
            },
            quasi_static: p.quasi_static.unwrap_or(false),
        };
        cfg.validate().map_err(|e| config_error(format!("probe: {e}")))?;
        Ok(cfg)
    }

    pub fn seed(&self, flag: Option<u64>) -> u64 {
        flag.or(self.run.seed).unwrap_or(0)
    }
}

pub fn check_positive(value: f64, key: &str) -> Result<f64> {
    if !(value.is_finite() && value > 0.0) {
        bail!(ConfigError(format!("`{key}` must be positive, got {value}")));
    }
    Ok(value)
}

pub fn read_to_string(path: &Path, what: &str) -> Result<String> {
    std::fs::read_to_string(path).with_context(|| format!("cannot read {what} {}", path.display()))
}
