//! Indirect punishment: collaboration is terminated for good once a collision
//! follows a busy announcement. Attackers then sense on their own.
//!
//! All long-term rewards are attacker-aggregate discounted sums, expected over
//! the first slot's sensing outcome.

use serde::Serialize;

use crate::error::{Error, Result};
use crate::logmath::diff_exp;
use crate::model::{
    classify_cooperation_case, classify_transmission_case, CooperationCase, ScenarioParams, TransmissionCase,
};
use crate::posterior::{count_pmf, posterior_idle_model};

#[derive(Debug, Clone, Copy, PartialEq, Serialize)]
pub struct LongTermRewards {
    pub lr_honest: f64,
    pub lr_dishonest: f64,
    pub cooperation_case: CooperationCase,
    pub transmission_case: TransmissionCase,
    /// Largest attacked busy count (Case.AT only).
    pub z_star: Option<usize>,
    pub attack_prevented: bool,
    /// Isolated attackers would also transmit with some attackers sensing
    /// busy; the all-idle-only closed forms then understate the dishonest reward.
    pub post_punishment_uses_busy_states: bool,
}

/// Honest long-term reward: share whenever every SU sensed idle, forever.
pub fn lr_honest(params: &ScenarioParams) -> f64 {
    let p = params.at_unit_rate();
    let s = p.sensor();
    let n = p.n_total;
    let m = p.n_attackers as f64;
    let pr0 = count_pmf(n, 0, &s);
    let post = posterior_idle_model(n, 0, &s);
    let per_slot = pr0 * (post.p_idle / n as f64 - post.p_busy * p.collision_penalty) * m;
    params.total_rate * per_slot / (1.0 - p.discount)
}

/// Per-slot attacker-aggregate reward after punishment, playing optimally on
/// their own pooled sensing. Unit rate.
fn isolated_slot_value(p: &ScenarioParams) -> (f64, bool) {
    let s = p.sensor();
    let m = p.n_attackers;
    let mf = m as f64;
    let mut total = 0.0;
    let mut beyond_idle = false;
    for k in 0..=m {
        let post = posterior_idle_model(m, k, &s);
        let r = post.p_idle - mf * post.p_busy * p.collision_penalty;
        if r > 0.0 {
            total += count_pmf(m, k, &s) * r;
            beyond_idle |= k > 0;
        }
    }
    (total, beyond_idle)
}

/// Per-slot attacker reward once punishment has been triggered (at the scenario's rate).
pub fn isolated_slot_reward(params: &ScenarioParams) -> f64 {
    isolated_slot_value(&params.at_unit_rate()).0 * params.total_rate
}

/// Long-term dishonest reward when the attackers attack exactly in the slots
/// where at most `z` SUs sensed busy. Unit rate.
fn threshold_policy_value(p: &ScenarioParams, z: usize, isolated: f64) -> f64 {
    let s = p.sensor();
    let n = p.n_total;
    let m = p.n_attackers as f64;
    let delta = p.discount;
    let mut reward = 0.0;
    let mut trigger = 0.0;
    for k in 0..=z.min(n) {
        let pr = count_pmf(n, k, &s);
        let post = posterior_idle_model(n, k, &s);
        reward += pr * (post.p_idle - m * post.p_busy * p.collision_penalty);
        trigger += pr * post.p_busy;
    }
    // V = reward + delta * [(1 - trigger) V + trigger * isolated / (1 - delta)]
    let denom = 1.0 - delta * (1.0 - trigger);
    (reward + delta / (1.0 - delta) * trigger * isolated) / denom
}

/// Lemma-style objective for a given attack threshold `z` (at the scenario's rate).
pub fn dishonest_objective(params: &ScenarioParams, z: usize) -> f64 {
    let p = params.at_unit_rate();
    let (isolated, _) = isolated_slot_value(&p);
    threshold_policy_value(&p, z, isolated) * params.total_rate
}

pub fn lr_dishonest(params: &ScenarioParams) -> LongTermRewards {
    let p = params.at_unit_rate();
    let (isolated, beyond_idle) = isolated_slot_value(&p);
    let transmission_case = classify_transmission_case(&p);
    let cooperation_case = classify_cooperation_case(&p);
    let (value, z_star) = match transmission_case {
        TransmissionCase::NT => (threshold_policy_value(&p, 0, isolated), None),
        TransmissionCase::AT => {
            let mut best = (threshold_policy_value(&p, 0, isolated), 0);
            for z in 1..=p.n_total {
                let v = threshold_policy_value(&p, z, isolated);
                if v > best.0 {
                    best = (v, z);
                }
            }
            (best.0, Some(best.1))
        }
    };
    let lr_h = lr_honest(params);
    let lr_dh = value * params.total_rate;
    LongTermRewards {
        lr_honest: lr_h,
        lr_dishonest: lr_dh,
        cooperation_case,
        transmission_case,
        z_star,
        attack_prevented: lr_h >= lr_dh,
        post_punishment_uses_busy_states: beyond_idle,
    }
}

/// Why a discount threshold does not lie strictly inside (0, 1).
#[derive(Debug, Clone, Copy, PartialEq, Eq, Serialize)]
pub enum Degeneracy {
    /// Honest play never beats attacking for any discount below 1.
    NeverPrevented,
}

#[derive(Debug, Clone, Copy, PartialEq, Serialize)]
pub struct DeltaThreshold {
    /// Threshold clamped to [0, 1].
    pub value: f64,
    /// `(1 - delta) / delta` at the threshold; the closed form is `1 / (1 + odds)`.
    pub odds: f64,
    pub cooperation_case: CooperationCase,
    pub degeneracy: Option<Degeneracy>,
}

/// Closed-form discount threshold for the scenario's attacker count. Case.NT only.
pub fn delta_threshold(params: &ScenarioParams) -> Result<DeltaThreshold> {
    let p = params.at_unit_rate();
    if classify_transmission_case(&p) == TransmissionCase::AT {
        return Err(Error::RequiresNonAggressive("delta_threshold"));
    }
    let case = classify_cooperation_case(&p);
    let s = p.sensor();
    let n = p.n_total;
    let m = p.n_attackers;
    let nf = n as f64;
    let mf = m as f64;
    let ln_cp = p.collision_penalty.ln();
    // ln of (1-P_I)/P_I (P_m/(1-P_f))^N, which multiplies every term below.
    let ln_scale = (1.0 - s.p_idle).ln() - s.p_idle.ln()
        + nf * (s.p_missed_detection.ln() - (1.0 - s.p_false_alarm).ln());
    // Shared-slot term for a group of g SUs: P_I (1-P_f)^g / g - (1-P_I) P_m^g C_p.
    let group_terms = |g: f64| {
        (
            s.p_idle.ln() + g * (1.0 - s.p_false_alarm).ln() - g.ln() + ln_scale,
            (1.0 - s.p_idle).ln() + g * s.p_missed_detection.ln() + ln_cp + ln_scale,
        )
    };
    let (a_n, b_n) = group_terms(nf);
    let numerator = match case {
        CooperationCase::WC => diff_exp(a_n, b_n),
        CooperationCase::SC => {
            let (a_m, b_m) = group_terms(mf);
            // (a_n - b_n) - (a_m - b_m) regrouped as (a_n - a_m) - (b_n - b_m):
            // the pairs share their dominant factors.
            diff_exp(a_n, a_m) - diff_exp(b_n, b_m)
        }
    };
    let odds = numerator / (1.0 / mf - 1.0 / nf);
    if odds > 0.0 && odds.is_finite() {
        Ok(DeltaThreshold {
            value: 1.0 / (1.0 + odds),
            odds,
            cooperation_case: case,
            degeneracy: None,
        })
    } else {
        Ok(DeltaThreshold {
            value: 1.0,
            odds,
            cooperation_case: case,
            degeneracy: Some(Degeneracy::NeverPrevented),
        })
    }
}

/// Worst case over the attacker count: max over M = 1..N-1 (Case.NT values of M only).
pub fn worst_case_delta_threshold(params: &ScenarioParams) -> Result<Option<(usize, DeltaThreshold)>> {
    let mut best: Option<(usize, DeltaThreshold)> = None;
    for m in 1..params.n_total {
        let q = params.with_attackers(m);
        if classify_transmission_case(&q) == TransmissionCase::AT {
            continue;
        }
        let t = delta_threshold(&q)?;
        if best.is_none_or(|(_, b)| t.value > b.value) {
            best = Some((m, t));
        }
    }
    Ok(best)
}

/// Bisection on the discount factor for `lr_honest = lr_dishonest`. Case.NT only.
pub fn delta_threshold_oracle(params: &ScenarioParams) -> Result<f64> {
    let p = params.at_unit_rate();
    if classify_transmission_case(&p) == TransmissionCase::AT {
        return Err(Error::RequiresNonAggressive("delta_threshold_oracle"));
    }
    let gap = |delta: f64| {
        let q = p.with_discount(delta);
        let (isolated, _) = isolated_slot_value(&q);
        lr_honest(&q) - threshold_policy_value(&q, 0, isolated)
    };
    let mut lo = 1e-12;
    let mut hi = 1.0 - 1e-12;
    let (g_lo, g_hi) = (gap(lo), gap(hi));
    if g_lo.signum() == g_hi.signum() || g_lo == 0.0 || g_hi == 0.0 {
        return Err(Error::NoCrossing);
    }
    let rising = g_hi > g_lo;
    for _ in 0..200 {
        let mid = 0.5 * (lo + hi);
        if mid <= lo || mid >= hi {
            break;
        }
        if (gap(mid) > 0.0) == rising {
            hi = mid;
        } else {
            lo = mid;
        }
    }
    Ok(0.5 * (lo + hi))
}

pub const INDIRECT_CSV_HEADER: [&str; 10] = [
    "N",
    "M",
    "P_I",
    "P_f",
    "P_m",
    "C_p",
    "case_nt_at",
    "case_wc_sc",
    "delta_threshold",
    "z_star",
];

/// One sweep row; `delta_threshold` is empty in Case.AT, `z_star` empty in Case.NT.
pub fn indirect_csv_record(params: &ScenarioParams) -> Vec<String> {
    use crate::report::fmt_f64;
    let lr = lr_dishonest(params);
    let delta = match delta_threshold(params) {
        Ok(t) => fmt_f64(t.value),
        Err(_) => String::new(),
    };
    vec![
        params.n_total.to_string(),
        params.n_attackers.to_string(),
        fmt_f64(params.p_idle),
        fmt_f64(params.p_false_alarm),
        fmt_f64(params.p_missed_detection),
        fmt_f64(params.collision_penalty),
        lr.transmission_case.to_string(),
        lr.cooperation_case.to_string(),
        delta,
        lr.z_star.map(|z| z.to_string()).unwrap_or_default(),
    ]
}
