//! JSON run configuration shared by every subcommand.
//!
//! ```json
//! {
//!   "schema_version": 1,
//!   "scenario": { "n_total": 6, "n_attackers": 2, "p_idle": 0.6,
//!                 "p_false_alarm": 0.08, "p_missed_detection": 0.08,
//!                 "collision_penalty": 1e4 },
//!   "command": { "name": "analyze", "n_sweep": [2, 14] },
//!   "output": { "directory": "out", "formats": ["json", "csv"] }
//! }
//! ```
//!
//! Unknown keys are rejected at every level.

use std::path::PathBuf;

use serde::{Deserialize, Serialize};

use crate::error::{Error, Result};
use crate::model::{HeteroParams, ScenarioParams, Violation};
use crate::sim::{AttackerPolicy, PunishmentMode, SimConfig, SimScenario, ValueFunction};
use crate::verify::VerifyOptions;

pub const CONFIG_SCHEMA_VERSION: u32 = 1;

fn default_discount() -> f64 {
    0.9
}

fn default_rate() -> f64 {
    1.0
}

#[derive(Debug, Clone, PartialEq, Serialize, Deserialize)]
#[serde(deny_unknown_fields)]
pub struct RunConfig {
    pub schema_version: u32,
    pub scenario: ScenarioBlock,
    /// Options of the subcommand; defaults apply when absent.
    #[serde(default)]
    pub command: Option<Command>,
    #[serde(default)]
    pub output: OutputBlock,
}

#[derive(Debug, Clone, PartialEq, Serialize, Deserialize)]
#[serde(deny_unknown_fields)]
pub struct ScenarioBlock {
    pub n_total: usize,
    pub n_attackers: usize,
    pub p_idle: f64,
    pub p_false_alarm: f64,
    pub p_missed_detection: f64,
    pub collision_penalty: f64,
    #[serde(default)]
    pub direct_punishment: f64,
    #[serde(default = "default_discount")]
    pub discount: f64,
    #[serde(default = "default_rate")]
    pub total_rate: f64,
    /// Present for a single attacker with its own sensing quality and rate.
    #[serde(default)]
    pub hetero: Option<HeteroBlock>,
}

#[derive(Debug, Clone, PartialEq, Serialize, Deserialize)]
#[serde(deny_unknown_fields)]
pub struct HeteroBlock {
    pub p_false_alarm_attacker: f64,
    pub p_missed_detection_attacker: f64,
    #[serde(default = "default_rate")]
    pub rate_attacker: f64,
    #[serde(default)]
    pub rates_honest: Vec<f64>,
}

impl ScenarioBlock {
    pub fn params(&self) -> ScenarioParams {
        ScenarioParams {
            n_total: self.n_total,
            n_attackers: self.n_attackers,
            p_idle: self.p_idle,
            p_false_alarm: self.p_false_alarm,
            p_missed_detection: self.p_missed_detection,
            collision_penalty: self.collision_penalty,
            direct_punishment: self.direct_punishment,
            discount: self.discount,
            total_rate: self.total_rate,
        }
    }

    pub fn hetero_params(&self) -> Option<HeteroParams> {
        self.hetero.as_ref().map(|h| HeteroParams {
            base: self.params(),
            p_false_alarm_attacker: h.p_false_alarm_attacker,
            p_missed_detection_attacker: h.p_missed_detection_attacker,
            rate_attacker: h.rate_attacker,
            rates_honest: h.rates_honest.clone(),
        })
    }

    pub fn violations(&self) -> Vec<Violation> {
        match self.hetero_params() {
            Some(h) => h.violations(),
            None => self.params().violations(),
        }
    }
}

#[derive(Debug, Clone, Copy, PartialEq, Eq, Serialize, Deserialize)]
#[serde(rename_all = "snake_case")]
pub enum Format {
    Json,
    Csv,
}

#[derive(Debug, Clone, PartialEq, Serialize, Deserialize)]
#[serde(deny_unknown_fields)]
pub struct OutputBlock {
    #[serde(default = "default_directory")]
    pub directory: PathBuf,
    #[serde(default = "default_formats")]
    pub formats: Vec<Format>,
}

fn default_directory() -> PathBuf {
    PathBuf::from("out")
}

fn default_formats() -> Vec<Format> {
    vec![Format::Json, Format::Csv]
}

impl Default for OutputBlock {
    fn default() -> Self {
        Self {
            directory: default_directory(),
            formats: default_formats(),
        }
    }
}

impl OutputBlock {
    pub fn json(&self) -> bool {
        self.formats.contains(&Format::Json)
    }

    pub fn csv(&self) -> bool {
        self.formats.contains(&Format::Csv)
    }
}

#[derive(Debug, Clone, PartialEq, Serialize, Deserialize)]
#[serde(tag = "name", rename_all = "snake_case")]
pub enum Command {
    Analyze(AnalyzeOptions),
    Thresholds(ThresholdOptions),
    Simulate(SimulateOptions),
    Verify(VerifyOptions),
}

impl Command {
    pub fn name(&self) -> &'static str {
        match self {
            Command::Analyze(_) => "analyze",
            Command::Thresholds(_) => "thresholds",
            Command::Simulate(_) => "simulate",
            Command::Verify(_) => "verify",
        }
    }
}

#[derive(Debug, Clone, PartialEq, Serialize, Deserialize)]
#[serde(deny_unknown_fields, default)]
pub struct AnalyzeOptions {
    /// Inclusive `[first, last]` range of N for the OR-rule bounds CSV.
    pub n_sweep: Option<[usize; 2]>,
    pub behavior_table: bool,
    /// Charge `direct_punishment` in the behavior table.
    pub include_direct_punishment: bool,
}

impl Default for AnalyzeOptions {
    fn default() -> Self {
        Self {
            n_sweep: None,
            behavior_table: true,
            include_direct_punishment: false,
        }
    }
}

/// One sweep axis of the `thresholds` subcommand. The scenario block fixes
/// every parameter the sweep does not vary.
#[derive(Debug, Clone, PartialEq, Serialize, Deserialize)]
#[serde(tag = "kind", rename_all = "snake_case", deny_unknown_fields)]
pub enum Sweep {
    /// Direct-punishment threshold for every M at each N.
    DirectVsM { n_values: Vec<usize> },
    /// Direct-punishment threshold for every M at each P_I.
    DirectVsPIdle { p_idle_values: Vec<f64> },
    /// Direct-punishment threshold for every M at each C_p.
    DirectVsCp { collision_penalties: Vec<f64> },
    /// Discount-factor threshold for every M at each N.
    DeltaVsM { n_values: Vec<usize> },
    /// Heterogeneous threshold over a grid of attacker error rates.
    HeteroDirect {
        p_false_alarm_attacker: Vec<f64>,
        p_missed_detection_attacker: Vec<f64>,
        #[serde(default = "default_rate")]
        rate_attacker: f64,
    },
}

impl Sweep {
    pub fn file_stem(&self) -> &'static str {
        match self {
            Sweep::DirectVsM { .. } => "direct_vs_m",
            Sweep::DirectVsPIdle { .. } => "direct_vs_p_idle",
            Sweep::DirectVsCp { .. } => "direct_vs_cp",
            Sweep::DeltaVsM { .. } => "delta_vs_m",
            Sweep::HeteroDirect { .. } => "hetero_direct",
        }
    }

    pub fn is_empty(&self) -> bool {
        match self {
            Sweep::DirectVsM { n_values } | Sweep::DeltaVsM { n_values } => n_values.is_empty(),
            Sweep::DirectVsPIdle { p_idle_values } => p_idle_values.is_empty(),
            Sweep::DirectVsCp { collision_penalties } => collision_penalties.is_empty(),
            Sweep::HeteroDirect {
                p_false_alarm_attacker,
                p_missed_detection_attacker,
                ..
            } => p_false_alarm_attacker.is_empty() || p_missed_detection_attacker.is_empty(),
        }
    }
}

#[derive(Debug, Clone, PartialEq, Serialize, Deserialize, Default)]
#[serde(deny_unknown_fields, default)]
pub struct ThresholdOptions {
    pub sweeps: Vec<Sweep>,
}

#[derive(Debug, Clone, PartialEq, Serialize, Deserialize)]
#[serde(deny_unknown_fields, default)]
pub struct SimulateOptions {
    pub mode: PunishmentMode,
    pub policy: AttackerPolicy,
    pub horizon: usize,
    pub replications: usize,
    pub seed: u64,
    pub trace_slots: usize,
    pub value_function: ValueFunction,
    pub pu_rate: f64,
}

impl Default for SimulateOptions {
    fn default() -> Self {
        Self {
            mode: PunishmentMode::None,
            policy: AttackerPolicy::Optimal,
            horizon: 1000,
            replications: 10,
            seed: 0,
            trace_slots: 0,
            value_function: ValueFunction::Linear,
            pu_rate: 1.0,
        }
    }
}

impl SimulateOptions {
    /// Simulation of `scenario`; `seed` overrides the configured seed.
    pub fn sim_config(&self, scenario: &ScenarioBlock, seed: Option<u64>) -> SimConfig {
        let scenario = match scenario.hetero_params() {
            Some(h) => SimScenario::Hetero(h),
            None => SimScenario::Homogeneous(scenario.params()),
        };
        let mut c = SimConfig::new(scenario, self.mode, self.policy.clone());
        c.horizon = self.horizon;
        c.replications = self.replications;
        c.base_seed = seed.unwrap_or(self.seed);
        c.trace_slots = self.trace_slots;
        c.value_function = self.value_function;
        c.pu_rate = self.pu_rate;
        c
    }
}

impl RunConfig {
    pub fn from_json(text: &str) -> Result<Self> {
        let c: RunConfig = serde_json::from_str(text).map_err(|e| Error::Unsupported(format!("config: {e}")))?;
        if c.schema_version != CONFIG_SCHEMA_VERSION {
            return Err(Error::Unsupported(format!(
                "config schema_version {} (expected {CONFIG_SCHEMA_VERSION})",
                c.schema_version
            )));
        }
        Ok(c)
    }

    /// Every range check, before any computation.
    pub fn validate(&self) -> Result<()> {
        let v = self.scenario.violations();
        if v.is_empty() {
            Ok(())
        } else {
            Err(Error::InvalidParams(v))
        }
    }

    /// Options for `name`, or its defaults when the config has no command block.
    pub fn command_for(&self, name: &str) -> Result<Command> {
        match &self.command {
            Some(c) if c.name() == name => Ok(c.clone()),
            Some(c) => Err(Error::Unsupported(format!(
                "config command is `{}` but `{name}` was invoked",
                c.name()
            ))),
            None => Ok(match name {
                "analyze" => Command::Analyze(AnalyzeOptions::default()),
                "thresholds" => Command::Thresholds(ThresholdOptions::default()),
                "simulate" => Command::Simulate(SimulateOptions::default()),
                "verify" => Command::Verify(VerifyOptions::default()),
                other => return Err(Error::Unsupported(format!("unknown command {other}"))),
            }),
        }
    }
}

#[cfg(test)]
mod tests {
    use super::*;

    const BASE: &str = r#""scenario": {"n_total": 6, "n_attackers": 2, "p_idle": 0.6,
        "p_false_alarm": 0.08, "p_missed_detection": 0.08, "collision_penalty": 1e4}"#;

    fn parse(rest: &str) -> Result<RunConfig> {
        RunConfig::from_json(&format!(r#"{{"schema_version": 1, {BASE}{rest}}}"#))
    }

    #[test]
    fn minimal_config_defaults() {
        let c = parse("").unwrap();
        assert_eq!(c.scenario.discount, 0.9);
        assert_eq!(c.output, OutputBlock::default());
        assert!(matches!(c.command_for("simulate").unwrap(), Command::Simulate(_)));
        c.validate().unwrap();
    }

    #[test]
    fn unknown_keys_rejected() {
        assert!(parse(r#", "extra": 1"#).is_err());
        assert!(RunConfig::from_json(&format!(
            r#"{{"schema_version": 1, {}, "bogus": 1}}}}"#,
            &BASE[..BASE.len() - 1]
        ))
        .is_err());
        assert!(parse(r#", "command": {"name": "verify", "sim_slot": 5}"#).is_err());
        assert!(parse(r#", "command": {"name": "simulate", "horizn": 5}"#).is_err());
        assert!(parse(r#", "command": {"name": "thresholds", "sweeps": [{"kind": "direct_vs_m", "n": [3]}]}"#).is_err());
    }

    #[test]
    fn command_blocks_parse() {
        let c = parse(r#", "command": {"name": "verify", "checks": [4], "direct_instances": 5}"#).unwrap();
        let Some(Command::Verify(v)) = &c.command else { panic!() };
        assert_eq!(v.direct_instances, 5);
        assert!(c.command_for("analyze").is_err());
        let c = parse(
            r#", "command": {"name": "simulate", "mode": "indirect", "policy": {"threshold": {"z": 1}}, "seed": 3}"#,
        )
        .unwrap();
        let Some(Command::Simulate(s)) = &c.command else { panic!() };
        assert_eq!(s.policy, AttackerPolicy::Threshold { z: 1 });
        assert_eq!(s.mode, PunishmentMode::Indirect);
    }

    #[test]
    fn range_violations_reported() {
        let c = RunConfig::from_json(
            r#"{"schema_version": 1, "scenario": {"n_total": 2, "n_attackers": 3, "p_idle": 1.5,
            "p_false_alarm": 0.08, "p_missed_detection": 0.08, "collision_penalty": 1e4}}"#,
        )
        .unwrap();
        let Err(Error::InvalidParams(v)) = c.validate() else { panic!() };
        assert!(v.len() >= 2);
    }

    #[test]
    fn wrong_schema_version() {
        assert!(RunConfig::from_json(&format!(r#"{{"schema_version": 2, {BASE}}}"#)).is_err());
    }
}
