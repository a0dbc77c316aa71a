//! Scenario parameters, validity checks and the regime classifiers.

use std::fmt;

use serde::{Deserialize, Serialize};

use crate::error::{Error, Result};
use crate::posterior::{self, SensorModel};

fn default_rate() -> f64 {
    1.0
}

fn default_discount() -> f64 {
    0.9
}

/// All parameters of a homogeneous sensing network.
///
/// Money-valued quantities (`collision_penalty`, `direct_punishment`) are in
/// reward units at rate `total_rate`. Internally everything is evaluated at
/// unit rate with both charges divided by the rate, see [`ScenarioParams::at_unit_rate`].
#[derive(Debug, Clone, Copy, PartialEq, Serialize, Deserialize)]
#[serde(deny_unknown_fields)]
pub struct ScenarioParams {
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
}

/// One violated invariant.
#[derive(Debug, Clone, PartialEq, Eq, Serialize)]
pub struct Violation {
    pub field: &'static str,
    pub rule: &'static str,
}

impl fmt::Display for Violation {
    fn fmt(&self, f: &mut fmt::Formatter<'_>) -> fmt::Result {
        write!(f, "{}: {}", self.field, self.rule)
    }
}

fn open_unit(x: f64) -> bool {
    x > 0.0 && x < 1.0
}

impl ScenarioParams {
    pub fn new(
        n_total: usize,
        n_attackers: usize,
        p_idle: f64,
        p_false_alarm: f64,
        p_missed_detection: f64,
        collision_penalty: f64,
    ) -> Self {
        Self {
            n_total,
            n_attackers,
            p_idle,
            p_false_alarm,
            p_missed_detection,
            collision_penalty,
            direct_punishment: 0.0,
            discount: default_discount(),
            total_rate: 1.0,
        }
    }

    pub fn with_attackers(mut self, m: usize) -> Self {
        self.n_attackers = m;
        self
    }

    pub fn with_total(mut self, n: usize) -> Self {
        self.n_total = n;
        self
    }

    pub fn with_collision_penalty(mut self, cp: f64) -> Self {
        self.collision_penalty = cp;
        self
    }

    pub fn with_direct_punishment(mut self, cb: f64) -> Self {
        self.direct_punishment = cb;
        self
    }

    pub fn with_discount(mut self, delta: f64) -> Self {
        self.discount = delta;
        self
    }

    pub fn with_p_idle(mut self, p: f64) -> Self {
        self.p_idle = p;
        self
    }

    pub fn with_rate(mut self, r: f64) -> Self {
        self.total_rate = r;
        self
    }

    /// Every violated invariant, in field order. Never panics.
    pub fn violations(&self) -> Vec<Violation> {
        let mut v = Vec::new();
        let mut push = |field, rule| v.push(Violation { field, rule });
        if self.n_total < 2 {
            push("n_total", "n_total >= 2");
        }
        if self.n_attackers < 1 {
            push("n_attackers", "n_attackers >= 1");
        }
        if self.n_attackers + 1 > self.n_total {
            push("n_attackers", "n_attackers <= n_total-1");
        }
        if !open_unit(self.p_idle) {
            push("p_idle", "0 < p_idle < 1");
        }
        if !open_unit(self.p_false_alarm) {
            push("p_false_alarm", "0 < p_false_alarm < 1");
        }
        if !open_unit(self.p_missed_detection) {
            push("p_missed_detection", "0 < p_missed_detection < 1");
        }
        // NaN fails every comparison, so it is caught by the checks above.
        if !(self.p_false_alarm + self.p_missed_detection < 1.0) {
            push("p_false_alarm", "p_false_alarm + p_missed_detection < 1");
        }
        if !(self.collision_penalty >= 0.0 && self.collision_penalty.is_finite()) {
            push("collision_penalty", "collision_penalty >= 0");
        }
        if !(self.direct_punishment >= 0.0 && self.direct_punishment.is_finite()) {
            push("direct_punishment", "direct_punishment >= 0");
        }
        if !open_unit(self.discount) {
            push("discount", "0 < discount < 1");
        }
        if !(self.total_rate > 0.0 && self.total_rate.is_finite()) {
            push("total_rate", "total_rate > 0");
        }
        v
    }

    pub fn validate(&self) -> Result<()> {
        let v = self.violations();
        if v.is_empty() {
            Ok(())
        } else {
            Err(Error::InvalidParams(v))
        }
    }

    pub fn sensor(&self) -> SensorModel {
        SensorModel {
            p_idle: self.p_idle,
            p_false_alarm: self.p_false_alarm,
            p_missed_detection: self.p_missed_detection,
        }
    }

    pub fn n_honest(&self) -> usize {
        self.n_total - self.n_attackers
    }

    /// The same scenario at unit rate: both charges divided by `total_rate`.
    pub fn at_unit_rate(&self) -> Self {
        let r = self.total_rate;
        Self {
            collision_penalty: self.collision_penalty / r,
            direct_punishment: self.direct_punishment / r,
            total_rate: 1.0,
            ..*self
        }
    }
}

/// Single-attacker scenario where the attacker senses and transmits differently
/// from the (homogeneous) honest SUs.
#[derive(Debug, Clone, PartialEq, Serialize, Deserialize)]
#[serde(deny_unknown_fields)]
pub struct HeteroParams {
    pub base: ScenarioParams,
    pub p_false_alarm_attacker: f64,
    pub p_missed_detection_attacker: f64,
    #[serde(default = "default_rate")]
    pub rate_attacker: f64,
    /// One rate per honest SU. Empty means every honest SU has rate 1.
    #[serde(default)]
    pub rates_honest: Vec<f64>,
}

impl HeteroParams {
    pub fn new(base: ScenarioParams, p_fa: f64, p_ma: f64, rate_attacker: f64) -> Self {
        let rates_honest = vec![1.0; base.n_total.saturating_sub(1)];
        Self {
            base,
            p_false_alarm_attacker: p_fa,
            p_missed_detection_attacker: p_ma,
            rate_attacker,
            rates_honest,
        }
    }

    pub fn violations(&self) -> Vec<Violation> {
        let mut v = self.base.violations();
        let mut push = |field, rule| v.push(Violation { field, rule });
        if self.base.n_attackers != 1 {
            push("n_attackers", "n_attackers = 1 for heterogeneous scenarios");
        }
        if self.base.total_rate != 1.0 {
            push("total_rate", "total_rate = 1 for heterogeneous scenarios (rates are absolute)");
        }
        if !open_unit(self.p_false_alarm_attacker) {
            push("p_false_alarm_attacker", "0 < p_false_alarm_attacker < 1");
        }
        if !open_unit(self.p_missed_detection_attacker) {
            push("p_missed_detection_attacker", "0 < p_missed_detection_attacker < 1");
        }
        if !(self.rate_attacker > 0.0 && self.rate_attacker.is_finite()) {
            push("rate_attacker", "rate_attacker > 0");
        }
        if !self.rates_honest.is_empty() && self.rates_honest.len() + 1 != self.base.n_total {
            push("rates_honest", "one rate per honest SU (n_total-1 entries)");
        }
        if self.rates_honest.iter().any(|r| !(*r > 0.0 && r.is_finite())) {
            push("rates_honest", "all honest rates > 0");
        }
        v
    }

    pub fn validate(&self) -> Result<()> {
        let v = self.violations();
        if v.is_empty() {
            Ok(())
        } else {
            Err(Error::InvalidParams(v))
        }
    }

    pub fn honest_rate(&self, i: usize) -> f64 {
        self.rates_honest.get(i).copied().unwrap_or(1.0)
    }

    /// Sensor model of the attacker alone.
    pub fn attacker_sensor(&self) -> SensorModel {
        SensorModel {
            p_idle: self.base.p_idle,
            p_false_alarm: self.p_false_alarm_attacker,
            p_missed_detection: self.p_missed_detection_attacker,
        }
    }
}

#[derive(Debug, Clone, Copy, PartialEq, Eq, Hash, Serialize, Deserialize)]
pub enum TransmissionCase {
    /// Attacking after any busy report never pays.
    NT,
    /// Exclusive transmission can pay even when someone sensed busy.
    AT,
}

#[derive(Debug, Clone, Copy, PartialEq, Eq, Hash, Serialize, Deserialize)]
pub enum CooperationCase {
    /// Isolated attackers never transmit.
    WC,
    /// Isolated attackers still transmit when all of them sense idle.
    SC,
}

impl fmt::Display for TransmissionCase {
    fn fmt(&self, f: &mut fmt::Formatter<'_>) -> fmt::Result {
        f.write_str(match self {
            TransmissionCase::NT => "NT",
            TransmissionCase::AT => "AT",
        })
    }
}

impl fmt::Display for CooperationCase {
    fn fmt(&self, f: &mut fmt::Formatter<'_>) -> fmt::Result {
        f.write_str(match self {
            CooperationCase::WC => "WC",
            CooperationCase::SC => "SC",
        })
    }
}

/// Lower bound on `C_p` (at the scenario's rate) above which a single SU
/// never transmits on its own sensing.
pub fn a4_bound(params: &ScenarioParams) -> f64 {
    let s = params.sensor();
    params.total_rate * s.p_idle * (1.0 - s.p_false_alarm) / ((1.0 - s.p_idle) * s.p_missed_detection)
}

/// True iff `C_p` strictly exceeds [`a4_bound`].
pub fn check_a4(params: &ScenarioParams) -> bool {
    params.collision_penalty > a4_bound(params)
}

/// Sign of the attackers' exclusive-transmission reward after one busy report.
pub fn classify_transmission_case(params: &ScenarioParams) -> TransmissionCase {
    let p = params.at_unit_rate();
    let post = posterior::posterior_idle_model(p.n_total, 1, &p.sensor());
    let m = p.n_attackers as f64;
    if post.p_idle - m * post.p_busy * p.collision_penalty < 0.0 {
        TransmissionCase::NT
    } else {
        TransmissionCase::AT
    }
}

/// Whether isolated attackers transmit when all of them sense idle
/// (posterior over the attacker group alone).
pub fn classify_cooperation_case(params: &ScenarioParams) -> CooperationCase {
    let p = params.at_unit_rate();
    let post = posterior::posterior_idle_model(p.n_attackers, 0, &p.sensor());
    let m = p.n_attackers as f64;
    if post.p_idle - m * post.p_busy * p.collision_penalty <= 0.0 {
        CooperationCase::WC
    } else {
        CooperationCase::SC
    }
}
