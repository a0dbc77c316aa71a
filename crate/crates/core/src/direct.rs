//! Direct punishment: the smallest extra charge `C_b` (levied on every SU when
//! a collision follows a busy announcement) that removes every attack.

use serde::Serialize;

use crate::error::{Error, Result};
use crate::fusion::{ln_prefactor, ln_q};
use crate::model::{HeteroParams, ScenarioParams};
use crate::oneshot::{attacking_states, hetero_attacking_states};

/// Which deviation pins the threshold.
#[derive(Debug, Clone, Copy, PartialEq, Eq, Serialize)]
pub enum BindingConstraint {
    /// Falsely reporting busy when everyone sensed idle, to transmit alone.
    AllIdleDeviation,
    /// Transmitting after a single busy decision.
    SingleBusyTransmission,
    /// Heterogeneous case: transmitting when only the attacker sensed busy.
    AttackerBusyTransmission,
    /// Every constraint is negative; no punishment needed.
    None,
}

impl std::fmt::Display for BindingConstraint {
    fn fmt(&self, f: &mut std::fmt::Formatter<'_>) -> std::fmt::Result {
        f.write_str(match self {
            BindingConstraint::AllIdleDeviation => "all_idle_deviation",
            BindingConstraint::SingleBusyTransmission => "single_busy_transmission",
            BindingConstraint::AttackerBusyTransmission => "attacker_busy_transmission",
            BindingConstraint::None => "none",
        })
    }
}

#[derive(Debug, Clone, Copy, PartialEq, Serialize)]
pub struct DirectThreshold {
    pub value: f64,
    /// ln(value); -inf when the threshold is 0.
    pub ln_value: f64,
    pub binding_constraint: BindingConstraint,
    /// Threshold implied by the all-idle deviation alone.
    pub all_idle: f64,
    /// Threshold implied by transmission after one busy decision alone.
    pub single_busy: f64,
}

fn check_attackers(m: usize, params: &ScenarioParams) -> Result<()> {
    if m < 1 || m + 1 > params.n_total {
        return Err(Error::AttackersOutOfRange {
            attackers: m,
            max: params.n_total.saturating_sub(1),
        });
    }
    Ok(())
}

/// Closed-form threshold for `m` attackers (other fields taken from `params`).
pub fn direct_threshold(m: usize, params: &ScenarioParams) -> Result<DirectThreshold> {
    check_attackers(m, params)?;
    let p = params.at_unit_rate();
    let n = p.n_total as f64;
    let mf = m as f64;
    let ln_pref = ln_prefactor(p.n_total, &p);
    // Transmitting at k busy decisions pays iff P^I/P^B = pref * q^k > m (C_p + C_b);
    // k = 1 is the loosest since q < 1.
    let single_busy = (ln_pref + ln_q(&p) - mf.ln()).exp() - p.collision_penalty;
    // All idle: m (P^I/N - P^B C_p) >= P^I - m P^B (C_p + C_b).
    let all_idle = (ln_pref + (1.0 / mf - 1.0 / n).ln()).exp();
    let (value, binding) = if all_idle <= 0.0 && single_busy <= 0.0 {
        (0.0, BindingConstraint::None)
    } else if all_idle >= single_busy {
        (all_idle, BindingConstraint::AllIdleDeviation)
    } else {
        (single_busy, BindingConstraint::SingleBusyTransmission)
    };
    let r = params.total_rate;
    Ok(DirectThreshold {
        value: value * r,
        ln_value: if value > 0.0 { value.ln() + r.ln() } else { f64::NEG_INFINITY },
        binding_constraint: binding,
        all_idle: all_idle * r,
        single_busy: single_busy * r,
    })
}

/// Smallest `C_b` for which best response attacks in no state, found by
/// bracketing and bisection over the exhaustive best-response table.
///
/// Outside the OR-rule optimality region some attacks happen under an idle
/// announcement, where no direct punishment applies; those return
/// [`Error::NoFiniteThreshold`].
pub fn direct_threshold_oracle(m: usize, params: &ScenarioParams) -> Result<f64> {
    check_attackers(m, params)?;
    let base = params.with_attackers(m);
    let clean = |cb: f64| attacking_states(&base.with_direct_punishment(cb), true) == 0;
    bisect_threshold(clean)
}

fn bisect_threshold(clean: impl Fn(f64) -> bool) -> Result<f64> {
    if clean(0.0) {
        return Ok(0.0);
    }
    let mut lo = 0.0;
    let mut hi = 1.0;
    while !clean(hi) {
        lo = hi;
        hi *= 2.0;
        if !hi.is_finite() || hi > 1e300 {
            return Err(Error::NoFiniteThreshold);
        }
    }
    for _ in 0..200 {
        let mid = 0.5 * (lo + hi);
        if mid <= lo || mid >= hi {
            break;
        }
        if clean(mid) {
            hi = mid;
        } else {
            lo = mid;
        }
    }
    Ok(hi)
}

/// The threshold that works without knowing the number of attackers.
pub fn worst_case_threshold(params: &ScenarioParams) -> Result<DirectThreshold> {
    direct_threshold(1, params)
}

/// Per-M thresholds for M = 1..N-1.
pub fn threshold_curve(params: &ScenarioParams) -> Result<Vec<DirectThreshold>> {
    (1..params.n_total).map(|m| direct_threshold(m, params)).collect()
}

#[derive(Debug, Clone, Copy, PartialEq, Serialize)]
pub struct HeteroDirectThreshold {
    pub value: f64,
    pub ln_value: f64,
    /// All-idle deviation.
    pub th1: f64,
    /// Transmission when only the attacker sensed busy.
    pub th2: f64,
    /// Transmission after one honest busy decision, attacker idle.
    pub th3: f64,
    pub binding_constraint: BindingConstraint,
}

/// Threshold for a single attacker with its own error rates and rate `r_A`.
pub fn direct_threshold_hetero(hparams: &HeteroParams) -> Result<HeteroDirectThreshold> {
    hparams.validate()?;
    let b = &hparams.base;
    let s = b.sensor();
    let n = b.n_total;
    let ra = hparams.rate_attacker;
    let ln_base = ln_prefactor(n - 1, b) + ra.ln();
    let pfa = hparams.p_false_alarm_attacker;
    let pma = hparams.p_missed_detection_attacker;
    let ln_attacker_idle = (1.0 - pfa).ln() - pma.ln();
    let ln_attacker_busy = pfa.ln() - (1.0 - pma).ln();
    let ln_honest_busy = s.p_false_alarm.ln() + s.p_missed_detection.ln()
        - (1.0 - s.p_false_alarm).ln()
        - (1.0 - s.p_missed_detection).ln();
    let cp = b.collision_penalty;
    let th1 = (ln_base + ln_attacker_idle + ((n - 1) as f64 / n as f64).ln()).exp();
    let th2 = (ln_base + ln_attacker_busy).exp() - cp;
    let th3 = (ln_base + ln_honest_busy + ln_attacker_idle).exp() - cp;
    let (mut value, mut binding) = (th1, BindingConstraint::AllIdleDeviation);
    if th2 > value {
        value = th2;
        binding = BindingConstraint::AttackerBusyTransmission;
    }
    if th3 > value {
        value = th3;
        binding = BindingConstraint::SingleBusyTransmission;
    }
    Ok(HeteroDirectThreshold {
        value,
        ln_value: value.ln(),
        th1,
        th2,
        th3,
        binding_constraint: binding,
    })
}

/// Bisection over the heterogeneous single-attacker best response.
pub fn direct_threshold_hetero_oracle(hparams: &HeteroParams) -> Result<f64> {
    hparams.validate()?;
    let clean = |cb: f64| {
        let mut h = hparams.clone();
        h.base.direct_punishment = cb;
        matches!(hetero_attacking_states(&h, true), Ok(0))
    };
    bisect_threshold(clean)
}

/// `C_p` interval in which sharing pays only when every SU (attacker included) sensed idle.
pub fn hetero_cp_bounds(hparams: &HeteroParams) -> (f64, f64) {
    let b = &hparams.base;
    let n = b.n_total;
    let ln_base = ln_prefactor(n - 1, b) + hparams.rate_attacker.ln() - (n as f64).ln();
    let pfa = hparams.p_false_alarm_attacker;
    let pma = hparams.p_missed_detection_attacker;
    let lower = (ln_base + pfa.ln() - (1.0 - pma).ln()).exp();
    let upper = (ln_base + (1.0 - pfa).ln() - pma.ln()).exp();
    (lower, upper)
}

pub const DIRECT_CSV_HEADER: [&str; 8] = ["N", "M", "P_I", "P_f", "P_m", "C_p", "threshold", "binding_constraint"];

pub fn direct_csv_record(params: &ScenarioParams, m: usize, t: &DirectThreshold) -> Vec<String> {
    use crate::report::fmt_f64;
    vec![
        params.n_total.to_string(),
        m.to_string(),
        fmt_f64(params.p_idle),
        fmt_f64(params.p_false_alarm),
        fmt_f64(params.p_missed_detection),
        fmt_f64(params.collision_penalty),
        fmt_f64(t.value),
        t.binding_constraint.to_string(),
    ]
}

pub const HETERO_CSV_HEADER: [&str; 13] = [
    "N", "P_I", "P_f", "P_m", "P_fA", "P_mA", "r_A", "C_p", "th1", "th2", "th3", "threshold", "binding_constraint",
];

pub fn hetero_csv_record(h: &HeteroParams, t: &HeteroDirectThreshold) -> Vec<String> {
    use crate::report::fmt_f64;
    vec![
        h.base.n_total.to_string(),
        fmt_f64(h.base.p_idle),
        fmt_f64(h.base.p_false_alarm),
        fmt_f64(h.base.p_missed_detection),
        fmt_f64(h.p_false_alarm_attacker),
        fmt_f64(h.p_missed_detection_attacker),
        fmt_f64(h.rate_attacker),
        fmt_f64(h.base.collision_penalty),
        fmt_f64(t.th1),
        fmt_f64(t.th2),
        fmt_f64(t.th3),
        fmt_f64(t.value),
        t.binding_constraint.to_string(),
    ]
}
