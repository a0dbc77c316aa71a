//! Single-slot expected rewards and the attackers' best response.
//!
//! Rewards are expectations over the channel state given the true local
//! decisions of every SU (attackers overhear honest reports and share their
//! own decisions, so they know the full split). Reports only matter through
//! the OR of all reports, and Phase II only through the number of attackers
//! that transmit, so attacker actions are aggregated to `(busy_reports,
//! transmitters)` counts.

use serde::{Deserialize, Serialize};

use crate::error::{Error, Result};
use crate::fusion::{fuse_or, Announcement};
use crate::model::{HeteroParams, ScenarioParams};
use crate::posterior::{joint_split_pmf, posterior_idle_hetero, posterior_idle_model, PosteriorPair};

#[derive(Debug, Clone, Copy, PartialEq, Eq, Hash, PartialOrd, Ord, Serialize)]
pub struct SensingState {
    pub honest_busy: usize,
    pub attacker_busy: usize,
}

impl SensingState {
    pub fn new(honest_busy: usize, attacker_busy: usize) -> Self {
        Self {
            honest_busy,
            attacker_busy,
        }
    }

    pub fn total_busy(&self) -> usize {
        self.honest_busy + self.attacker_busy
    }

    fn check(&self, params: &ScenarioParams) -> Result<()> {
        if self.honest_busy > params.n_honest() || self.attacker_busy > params.n_attackers {
            return Err(Error::Inconsistent(format!(
                "state ({}, {}) outside ({}, {})",
                self.honest_busy,
                self.attacker_busy,
                params.n_honest(),
                params.n_attackers
            )));
        }
        Ok(())
    }
}

#[derive(Debug, Clone, Copy, PartialEq, Eq, Hash, Serialize, Deserialize)]
pub struct ActionProfile {
    /// Attackers reporting busy.
    pub busy_reports: usize,
    /// Attackers transmitting in Phase II.
    pub transmitters: usize,
}

impl ActionProfile {
    pub fn new(busy_reports: usize, transmitters: usize) -> Self {
        Self {
            busy_reports,
            transmitters,
        }
    }

    fn check(&self, params: &ScenarioParams) -> Result<()> {
        if self.busy_reports > params.n_attackers || self.transmitters > params.n_attackers {
            return Err(Error::Inconsistent(format!(
                "profile ({}, {}) exceeds {} attackers",
                self.busy_reports, self.transmitters, params.n_attackers
            )));
        }
        Ok(())
    }
}

#[derive(Debug, Clone, Copy, PartialEq, Serialize)]
pub struct RewardBreakdown {
    pub attacker_aggregate: f64,
    pub honest_per_su: f64,
    pub announcement: Announcement,
    pub is_attack: bool,
}

/// Report truthfully and obey the announcement.
pub fn honest_equivalent_profile(state: SensingState, params: &ScenarioParams) -> ActionProfile {
    let announcement = fuse_or(state.total_busy());
    let transmitters = if announcement == Announcement::H0 {
        params.n_attackers
    } else {
        0
    };
    ActionProfile::new(state.attacker_busy, transmitters)
}

/// Unit-rate rewards of one (announcement, transmitters) outcome under posterior `post`.
pub(crate) fn outcome_rewards(
    post: PosteriorPair,
    announcement: Announcement,
    transmitters: usize,
    p: &ScenarioParams,
    include_direct: bool,
) -> (f64, f64) {
    let m = p.n_attackers as f64;
    let cp = p.collision_penalty;
    match announcement {
        Announcement::H0 => {
            // Honest SUs all transmit; any collision is charged to everyone.
            let share = post.p_idle / (p.n_honest() + transmitters) as f64;
            (transmitters as f64 * share - m * post.p_busy * cp, share - post.p_busy * cp)
        }
        Announcement::H1 if transmitters >= 1 => {
            let charge = cp + if include_direct { p.direct_punishment } else { 0.0 };
            (post.p_idle - m * post.p_busy * charge, -post.p_busy * charge)
        }
        Announcement::H1 => (0.0, 0.0),
    }
}

pub fn evaluate_profile(
    state: SensingState,
    profile: ActionProfile,
    params: &ScenarioParams,
    include_direct_punishment: bool,
) -> Result<RewardBreakdown> {
    state.check(params)?;
    profile.check(params)?;
    let p = params.at_unit_rate();
    let post = posterior_idle_model(p.n_total, state.total_busy(), &p.sensor());
    Ok(evaluate_with(state, profile, post, params, &p, include_direct_punishment))
}

fn evaluate_with(
    state: SensingState,
    profile: ActionProfile,
    post: PosteriorPair,
    params: &ScenarioParams,
    unit: &ScenarioParams,
    include_direct: bool,
) -> RewardBreakdown {
    let announcement = fuse_or(state.honest_busy + profile.busy_reports);
    let (a, h) = outcome_rewards(post, announcement, profile.transmitters, unit, include_direct);
    RewardBreakdown {
        attacker_aggregate: a * params.total_rate,
        honest_per_su: h * params.total_rate,
        announcement,
        is_attack: profile != honest_equivalent_profile(state, params),
    }
}

/// Exhaustive maximization over all `(busy_reports, transmitters)` profiles.
///
/// Ties go to the honest-equivalent profile, then fewer transmitters, then
/// fewer busy reports.
pub fn best_response(
    state: SensingState,
    params: &ScenarioParams,
    include_direct_punishment: bool,
) -> Result<(ActionProfile, RewardBreakdown)> {
    state.check(params)?;
    let p = params.at_unit_rate();
    let post = posterior_idle_model(p.n_total, state.total_busy(), &p.sensor());
    Ok(best_response_with(state, post, params, &p, include_direct_punishment))
}

fn best_response_with(
    state: SensingState,
    post: PosteriorPair,
    params: &ScenarioParams,
    unit: &ScenarioParams,
    include_direct: bool,
) -> (ActionProfile, RewardBreakdown) {
    let honest = honest_equivalent_profile(state, params);
    let mut best = (honest, evaluate_with(state, honest, post, params, unit, include_direct));
    for transmitters in 0..=params.n_attackers {
        for busy_reports in 0..=params.n_attackers {
            let profile = ActionProfile::new(busy_reports, transmitters);
            let r = evaluate_with(state, profile, post, params, unit, include_direct);
            if r.attacker_aggregate > best.1.attacker_aggregate {
                best = (profile, r);
            }
        }
    }
    best
}

/// Every sensing state, honest-major order.
pub fn all_states(params: &ScenarioParams) -> impl Iterator<Item = SensingState> {
    let m = params.n_attackers;
    (0..=params.n_honest()).flat_map(move |h| (0..=m).map(move |a| SensingState::new(h, a)))
}

#[derive(Debug, Clone, Copy, PartialEq, Serialize)]
pub struct BehaviorRow {
    pub state: SensingState,
    pub profile: ActionProfile,
    pub rewards: RewardBreakdown,
}

pub fn behavior_table(params: &ScenarioParams, include_direct_punishment: bool) -> Vec<BehaviorRow> {
    let p = params.at_unit_rate();
    let s = p.sensor();
    all_states(params)
        .map(|state| {
            let post = posterior_idle_model(p.n_total, state.total_busy(), &s);
            let (profile, rewards) = best_response_with(state, post, params, &p, include_direct_punishment);
            BehaviorRow {
                state,
                profile,
                rewards,
            }
        })
        .collect()
}

/// Number of states in which the best response is an attack.
pub fn attacking_states(params: &ScenarioParams, include_direct_punishment: bool) -> usize {
    behavior_table(params, include_direct_punishment)
        .iter()
        .filter(|r| r.rewards.is_attack)
        .count()
}

pub const BEHAVIOR_CSV_HEADER: [&str; 8] = [
    "honest_busy",
    "attacker_busy",
    "b",
    "M_T",
    "announcement",
    "attacker_reward",
    "honest_reward",
    "is_attack",
];

pub fn behavior_csv_record(row: &BehaviorRow) -> Vec<String> {
    vec![
        row.state.honest_busy.to_string(),
        row.state.attacker_busy.to_string(),
        row.profile.busy_reports.to_string(),
        row.profile.transmitters.to_string(),
        row.rewards.announcement.to_string(),
        crate::report::fmt_f64(row.rewards.attacker_aggregate),
        crate::report::fmt_f64(row.rewards.honest_per_su),
        row.rewards.is_attack.to_string(),
    ]
}

/// Probability of a sensing state.
pub fn state_probability(state: SensingState, params: &ScenarioParams) -> f64 {
    joint_split_pmf(
        params.n_honest(),
        state.honest_busy,
        params.n_attackers,
        state.attacker_busy,
        &params.sensor(),
    )
}

/// Expected per-slot rewards `(attacker aggregate, honest per SU)` when the
/// attackers play `policy` in every state.
pub fn expected_slot_rewards(
    params: &ScenarioParams,
    include_direct_punishment: bool,
    policy: impl Fn(SensingState) -> ActionProfile,
) -> Result<(f64, f64)> {
    let mut att = 0.0;
    let mut hon = 0.0;
    for state in all_states(params) {
        let pr = state_probability(state, params);
        let r = evaluate_profile(state, policy(state), params, include_direct_punishment)?;
        att += pr * r.attacker_aggregate;
        hon += pr * r.honest_per_su;
    }
    Ok((att, hon))
}

/// Pr(collision | channel busy) when attackers play `policy` and no punishment ends collaboration.
pub fn collision_probability_given_busy(params: &ScenarioParams, policy: impl Fn(SensingState) -> ActionProfile) -> f64 {
    let s = params.sensor();
    let busy_only = crate::posterior::SensorModel {
        p_idle: 0.0,
        ..s
    };
    let mut total = 0.0;
    for state in all_states(params) {
        let profile = policy(state);
        let announcement = fuse_or(state.honest_busy + profile.busy_reports);
        let anyone = match announcement {
            Announcement::H0 => params.n_honest() + profile.transmitters > 0,
            Announcement::H1 => profile.transmitters > 0,
        };
        if anyone {
            total += joint_split_pmf(
                params.n_honest(),
                state.honest_busy,
                params.n_attackers,
                state.attacker_busy,
                &busy_only,
            );
        }
    }
    total
}

// ---------------------------------------------------------------------------
// Single attacker with its own sensing quality and rate.

#[derive(Debug, Clone, Copy, PartialEq, Eq, Hash, Serialize)]
pub struct HeteroState {
    pub honest_busy: usize,
    pub attacker_busy: bool,
}

#[derive(Debug, Clone, Copy, PartialEq, Eq, Hash, Serialize, Deserialize)]
pub struct HeteroAction {
    pub report_busy: bool,
    pub transmit: bool,
}

#[derive(Debug, Clone, Copy, PartialEq, Serialize)]
pub struct HeteroRewards {
    pub attacker: f64,
    /// Mean over honest SUs.
    pub honest_mean: f64,
    pub announcement: Announcement,
    pub is_attack: bool,
}

pub fn hetero_honest_action(state: HeteroState) -> HeteroAction {
    let idle = state.honest_busy == 0 && !state.attacker_busy;
    HeteroAction {
        report_busy: state.attacker_busy,
        transmit: idle,
    }
}

pub fn hetero_evaluate(
    state: HeteroState,
    action: HeteroAction,
    hparams: &HeteroParams,
    include_direct_punishment: bool,
) -> Result<HeteroRewards> {
    let post: PosteriorPair = posterior_idle_hetero(state.honest_busy, state.attacker_busy, hparams)?.into();
    let base = &hparams.base;
    let n_honest = base.n_total - 1;
    let cp = base.collision_penalty;
    let announcement = fuse_or(state.honest_busy + usize::from(action.report_busy));
    let mean_honest_rate = (0..n_honest).map(|i| hparams.honest_rate(i)).sum::<f64>() / n_honest as f64;
    let (attacker, honest_mean) = match announcement {
        Announcement::H0 => {
            let n_tx = (n_honest + usize::from(action.transmit)) as f64;
            let att = if action.transmit {
                post.p_idle * hparams.rate_attacker / n_tx
            } else {
                0.0
            };
            (att - post.p_busy * cp, post.p_idle * mean_honest_rate / n_tx - post.p_busy * cp)
        }
        Announcement::H1 if action.transmit => {
            let charge = cp + if include_direct_punishment { base.direct_punishment } else { 0.0 };
            (post.p_idle * hparams.rate_attacker - post.p_busy * charge, -post.p_busy * charge)
        }
        Announcement::H1 => (0.0, 0.0),
    };
    Ok(HeteroRewards {
        attacker,
        honest_mean,
        announcement,
        is_attack: action != hetero_honest_action(state),
    })
}

pub fn hetero_best_response(
    state: HeteroState,
    hparams: &HeteroParams,
    include_direct_punishment: bool,
) -> Result<(HeteroAction, HeteroRewards)> {
    let honest = hetero_honest_action(state);
    let mut best = (honest, hetero_evaluate(state, honest, hparams, include_direct_punishment)?);
    for transmit in [false, true] {
        for report_busy in [false, true] {
            let a = HeteroAction { report_busy, transmit };
            let r = hetero_evaluate(state, a, hparams, include_direct_punishment)?;
            if r.attacker > best.1.attacker {
                best = (a, r);
            }
        }
    }
    Ok(best)
}

pub fn hetero_states(hparams: &HeteroParams) -> impl Iterator<Item = HeteroState> {
    let n_honest = hparams.base.n_total - 1;
    (0..=n_honest).flat_map(|h| {
        [false, true].into_iter().map(move |d| HeteroState {
            honest_busy: h,
            attacker_busy: d,
        })
    })
}

pub fn hetero_state_probability(state: HeteroState, hparams: &HeteroParams) -> f64 {
    let honest = hparams.base.sensor();
    let n_honest = hparams.base.n_total - 1;
    let a = hparams.attacker_sensor();
    let (a_idle, a_busy) = if state.attacker_busy {
        (a.p_false_alarm, 1.0 - a.p_missed_detection)
    } else {
        (1.0 - a.p_false_alarm, a.p_missed_detection)
    };
    let idle = honest.p_idle * honest.ln_count_given_idle(n_honest, state.honest_busy).exp() * a_idle;
    let busy = (1.0 - honest.p_idle) * honest.ln_count_given_busy(n_honest, state.honest_busy).exp() * a_busy;
    idle + busy
}

pub fn hetero_attacking_states(hparams: &HeteroParams, include_direct_punishment: bool) -> Result<usize> {
    let mut n = 0;
    for s in hetero_states(hparams) {
        if hetero_best_response(s, hparams, include_direct_punishment)?.1.is_attack {
            n += 1;
        }
    }
    Ok(n)
}
