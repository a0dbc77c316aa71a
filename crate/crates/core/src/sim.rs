//! Slot-by-slot Monte Carlo simulation of sensing, fusion and transmission.
//!
//! Replication `r` draws from the ChaCha8 stream `r` of the generator seeded
//! with `base_seed`, so results do not depend on how replications are
//! scheduled across worker threads.

use rand::{Rng, SeedableRng};
use rand_chacha::ChaCha8Rng;
use rayon::prelude::*;
use serde::{Deserialize, Serialize};

use crate::error::{Error, Result};
use crate::fusion::{fuse_or, Announcement};
use crate::logmath::pairwise_sum;
use crate::mdp::{build_mdp, MdpAction, MdpModel, Policy};
use crate::model::{HeteroParams, ScenarioParams};
use crate::posterior::{posterior_idle, posterior_idle_hetero};
use crate::oneshot::{
    best_response, evaluate_profile, hetero_best_response, hetero_evaluate, hetero_honest_action, hetero_state_probability,
    hetero_states, honest_equivalent_profile, state_probability, ActionProfile, HeteroAction, HeteroState, SensingState,
};

pub const STATS_SCHEMA_VERSION: u32 = 1;

#[derive(Debug, Clone, Copy, PartialEq, Eq, Serialize, Deserialize)]
#[serde(rename_all = "snake_case")]
pub enum PunishmentMode {
    None,
    Direct,
    Indirect,
}

/// Attacker behavior in the simulation.
#[derive(Debug, Clone, PartialEq, Serialize, Deserialize)]
#[serde(rename_all = "snake_case")]
pub enum AttackerPolicy {
    /// Per-state best response (no punishment, direct punishment) or the
    /// optimal MDP policy (indirect punishment).
    Optimal,
    Honest,
    /// Exclusive transmission whenever at most `z` SUs sensed busy.
    Threshold { z: usize },
    Table(PolicyTable),
}

/// Explicit homogeneous policy: one profile per `(honest_busy, attacker_busy)`
/// in honest-major order, and the number of attackers transmitting after
/// punishment per attacker busy count.
#[derive(Debug, Clone, PartialEq, Serialize, Deserialize)]
#[serde(deny_unknown_fields)]
pub struct PolicyTable {
    pub pre: Vec<ActionProfile>,
    #[serde(default)]
    pub post: Vec<usize>,
}

impl PolicyTable {
    pub fn honest(params: &ScenarioParams) -> Self {
        let mut pre = Vec::new();
        for h in 0..=params.n_honest() {
            for a in 0..=params.n_attackers {
                pre.push(honest_equivalent_profile(SensingState::new(h, a), params));
            }
        }
        Self {
            pre,
            post: vec![0; params.n_attackers + 1],
        }
    }

    /// Exclusive transmission in every state with at most `z` busy decisions;
    /// after punishment transmit iff profitable.
    pub fn threshold(params: &ScenarioParams, z: usize) -> Result<Self> {
        Ok(Self::from_mdp(&build_mdp(params)?, &build_mdp(params)?.threshold_policy(Some(z))))
    }

    fn from_mdp(model: &MdpModel, policy: &Policy) -> Self {
        let mut pre = Vec::new();
        let mut post = Vec::new();
        for a in &policy.actions {
            match *a {
                MdpAction::Pre(p) => pre.push(p),
                MdpAction::Post { transmitters } => post.push(transmitters),
            }
        }
        debug_assert_eq!(pre.len() + post.len(), model.n_states());
        Self { pre, post }
    }

    fn check(&self, params: &ScenarioParams) -> Result<()> {
        let m = params.n_attackers;
        let want = (params.n_honest() + 1) * (m + 1);
        if self.pre.len() != want {
            return Err(Error::Inconsistent(format!("policy table has {} rows, expected {want}", self.pre.len())));
        }
        if !self.post.is_empty() && self.post.len() != m + 1 {
            return Err(Error::Inconsistent(format!(
                "post-punishment table has {} rows, expected {}",
                self.post.len(),
                m + 1
            )));
        }
        if self.pre.iter().any(|p| p.busy_reports > m || p.transmitters > m) || self.post.iter().any(|&t| t > m) {
            return Err(Error::Inconsistent(format!("policy entry exceeds {m} attackers")));
        }
        Ok(())
    }

    fn pre_action(&self, m: usize, h: usize, a: usize) -> ActionProfile {
        self.pre[h * (m + 1) + a]
    }

    fn post_action(&self, a: usize) -> usize {
        self.post.get(a).copied().unwrap_or(0)
    }

    fn to_mdp_policy(&self, model: &MdpModel) -> Policy {
        let mut actions: Vec<MdpAction> = self.pre.iter().map(|p| MdpAction::Pre(*p)).collect();
        let m = model.params().n_attackers;
        actions.extend((0..=m).map(|a| MdpAction::Post {
            transmitters: self.post_action(a),
        }));
        Policy { actions }
    }
}

#[derive(Debug, Clone, PartialEq)]
pub enum SimScenario {
    Homogeneous(ScenarioParams),
    Hetero(HeteroParams),
}

impl SimScenario {
    pub fn base(&self) -> &ScenarioParams {
        match self {
            SimScenario::Homogeneous(p) => p,
            SimScenario::Hetero(h) => &h.base,
        }
    }
}

/// PU valuation of its own transmission rate.
#[derive(Debug, Clone, Copy, PartialEq, Serialize, Deserialize)]
#[serde(rename_all = "snake_case", tag = "kind")]
pub enum ValueFunction {
    Linear,
    Power { scale: f64, exponent: f64 },
}

impl ValueFunction {
    pub fn eval(&self, r: f64) -> f64 {
        match *self {
            ValueFunction::Linear => r,
            ValueFunction::Power { scale, exponent } => scale * r.powf(exponent),
        }
    }
}

#[derive(Debug, Clone, PartialEq)]
pub struct SimConfig {
    pub scenario: SimScenario,
    pub mode: PunishmentMode,
    pub policy: AttackerPolicy,
    pub horizon: usize,
    pub replications: usize,
    pub base_seed: u64,
    pub value_function: ValueFunction,
    pub pu_rate: f64,
    /// Record a per-slot trace of replication 0, at most this many slots.
    pub trace_slots: usize,
}

impl SimConfig {
    pub fn new(scenario: SimScenario, mode: PunishmentMode, policy: AttackerPolicy) -> Self {
        Self {
            scenario,
            mode,
            policy,
            horizon: 1000,
            replications: 10,
            base_seed: 0,
            value_function: ValueFunction::Linear,
            pu_rate: 1.0,
            trace_slots: 0,
        }
    }

    pub fn validate(&self) -> Result<()> {
        match &self.scenario {
            SimScenario::Homogeneous(p) => p.validate()?,
            SimScenario::Hetero(h) => h.validate()?,
        }
        if self.horizon < 1 {
            return Err(Error::Unsupported("horizon must be at least 1".into()));
        }
        if self.replications < 1 {
            return Err(Error::Unsupported("replications must be at least 1".into()));
        }
        if matches!(self.scenario, SimScenario::Hetero(_)) {
            if self.mode == PunishmentMode::Indirect {
                return Err(Error::Unsupported("indirect punishment with a heterogeneous attacker".into()));
            }
            if matches!(self.policy, AttackerPolicy::Threshold { .. } | AttackerPolicy::Table(_)) {
                return Err(Error::Unsupported("policy tables with a heterogeneous attacker".into()));
            }
        }
        Ok(())
    }
}

/// Policy resolved to a per-state lookup before the slots run.
#[derive(Debug, Clone)]
enum Resolved {
    Homogeneous(PolicyTable),
    /// Indexed by `honest_busy * 2 + attacker_busy`.
    Hetero(Vec<HeteroAction>),
}

fn resolve(config: &SimConfig) -> Result<Resolved> {
    let include_direct = config.mode == PunishmentMode::Direct;
    match &config.scenario {
        SimScenario::Homogeneous(p) => {
            let table = match &config.policy {
                AttackerPolicy::Honest => PolicyTable::honest(p),
                AttackerPolicy::Threshold { z } => PolicyTable::threshold(p, *z)?,
                AttackerPolicy::Table(t) => t.clone(),
                AttackerPolicy::Optimal if config.mode == PunishmentMode::Indirect => {
                    let model = build_mdp(p)?;
                    let sol = model.value_iteration(1e-12 * p.total_rate);
                    PolicyTable::from_mdp(&model, &sol.policy)
                }
                AttackerPolicy::Optimal => {
                    let mut t = PolicyTable::honest(p);
                    for h in 0..=p.n_honest() {
                        for a in 0..=p.n_attackers {
                            t.pre[h * (p.n_attackers + 1) + a] = best_response(SensingState::new(h, a), p, include_direct)?.0;
                        }
                    }
                    t
                }
            };
            table.check(p)?;
            Ok(Resolved::Homogeneous(table))
        }
        SimScenario::Hetero(hp) => {
            let mut actions = Vec::new();
            for s in hetero_states(hp) {
                actions.push(match config.policy {
                    AttackerPolicy::Honest => hetero_honest_action(s),
                    _ => hetero_best_response(s, hp, include_direct)?.0,
                });
            }
            Ok(Resolved::Hetero(actions))
        }
    }
}

/// One simulated slot.
#[derive(Debug, Clone, Copy, PartialEq, Serialize)]
pub struct SlotTrace {
    pub slot: usize,
    pub channel_busy: bool,
    pub honest_busy: usize,
    pub attacker_busy: usize,
    /// `None` once collaboration has been terminated.
    pub announcement: Option<Announcement>,
    pub transmitters: usize,
    pub collision: bool,
    /// Total charged to all SUs in this slot.
    pub penalties: f64,
    /// Punishment flag at the end of the slot.
    pub punishment_flag: bool,
    pub attacker_reward: f64,
    pub honest_reward: f64,
    /// Rewards averaged over the channel state given the sensing outcomes
    /// and actions of this slot.
    pub attacker_expected: f64,
    pub honest_expected: f64,
    /// Attackers deviated from the honest-equivalent action.
    pub attack: bool,
}

pub const TRACE_CSV_HEADER: [&str; 9] = [
    "slot",
    "channel_state",
    "honest_busy",
    "attacker_busy",
    "announcement",
    "transmitters",
    "collision",
    "penalties",
    "punishment_flag",
];

pub fn trace_csv_record(t: &SlotTrace) -> Vec<String> {
    vec![
        t.slot.to_string(),
        if t.channel_busy { "busy" } else { "idle" }.to_string(),
        t.honest_busy.to_string(),
        t.attacker_busy.to_string(),
        t.announcement.map(|a| a.to_string()).unwrap_or_default(),
        t.transmitters.to_string(),
        t.collision.to_string(),
        crate::report::fmt_f64(t.penalties),
        t.punishment_flag.to_string(),
    ]
}

fn count_busy(rng: &mut ChaCha8Rng, n: usize, p_busy: f64) -> usize {
    (0..n).filter(|_| rng.random::<f64>() < p_busy).count()
}

/// Run one slot. `punished` is the flag at the start of the slot and is
/// updated in place.
fn run_slot(
    rng: &mut ChaCha8Rng,
    config: &SimConfig,
    policy: &Resolved,
    posteriors: &[(f64, f64)],
    punished: &mut bool,
    slot: usize,
) -> SlotTrace {
    let base = config.scenario.base();
    let channel_busy = rng.random::<f64>() >= base.p_idle;
    let honest_p = if channel_busy {
        1.0 - base.p_missed_detection
    } else {
        base.p_false_alarm
    };
    let n = base.n_total;
    let m = base.n_attackers;
    let nh = n - m;
    let cp = base.collision_penalty;
    let cb = base.direct_punishment;
    let honest_busy = count_busy(rng, nh, honest_p);
    match policy {
        Resolved::Homogeneous(table) => {
            let attacker_busy = count_busy(rng, m, honest_p);
            let rate = base.total_rate;
            let (announcement, honest_tx, attacker_tx, attack) = if *punished {
                (None, 0, table.post_action(attacker_busy), false)
            } else {
                let profile = table.pre_action(m, honest_busy, attacker_busy);
                let ann = fuse_or(honest_busy + profile.busy_reports);
                let honest_tx = if ann == Announcement::H0 { nh } else { 0 };
                let honest_eq = honest_equivalent_profile(SensingState::new(honest_busy, attacker_busy), base);
                (Some(ann), honest_tx, profile.transmitters, profile != honest_eq)
            };
            let tx = honest_tx + attacker_tx;
            let collision = channel_busy && tx > 0;
            let (mut att, mut hon) = (0.0, 0.0);
            let mut penalties = 0.0;
            let (mut att_idle, mut hon_idle) = (0.0, 0.0);
            let mut charge = cp;
            if config.mode == PunishmentMode::Direct && announcement == Some(Announcement::H1) {
                charge += cb;
            }
            if tx > 0 {
                let share = rate / tx as f64;
                att_idle = if *punished {
                    // Attackers split the full rate among themselves.
                    rate
                } else {
                    attacker_tx as f64 * share
                };
                hon_idle = honest_tx as f64 * share / nh as f64;
            }
            let (p_i, p_b) = posteriors[honest_busy + attacker_busy];
            let (att_exp, hon_exp) = if tx > 0 {
                (p_i * att_idle - p_b * m as f64 * charge, p_i * hon_idle - p_b * charge)
            } else {
                (0.0, 0.0)
            };
            if tx > 0 && !channel_busy {
                att = att_idle;
                hon = hon_idle;
            }
            if collision {
                att -= m as f64 * charge;
                hon -= charge;
                penalties = n as f64 * charge;
                if config.mode == PunishmentMode::Indirect && announcement == Some(Announcement::H1) {
                    *punished = true;
                }
            }
            SlotTrace {
                slot,
                channel_busy,
                honest_busy,
                attacker_busy,
                announcement,
                transmitters: tx,
                collision,
                penalties,
                punishment_flag: *punished,
                attacker_reward: att,
                honest_reward: hon,
                attacker_expected: att_exp,
                honest_expected: hon_exp,
                attack,
            }
        }
        Resolved::Hetero(actions) => {
            let SimScenario::Hetero(hp) = &config.scenario else {
                unreachable!("hetero policy with homogeneous scenario")
            };
            let a_p = if channel_busy {
                1.0 - hp.p_missed_detection_attacker
            } else {
                hp.p_false_alarm_attacker
            };
            let attacker_busy = rng.random::<f64>() < a_p;
            let state = HeteroState {
                honest_busy,
                attacker_busy,
            };
            let action = actions[honest_busy * 2 + usize::from(attacker_busy)];
            let ann = fuse_or(honest_busy + usize::from(action.report_busy));
            let honest_tx = if ann == Announcement::H0 { nh } else { 0 };
            let tx = honest_tx + usize::from(action.transmit);
            let collision = channel_busy && tx > 0;
            let (mut att, mut hon) = (0.0, 0.0);
            let mut penalties = 0.0;
            let (mut att_idle, mut hon_idle) = (0.0, 0.0);
            if action.transmit {
                att_idle = hp.rate_attacker / tx as f64;
            }
            if honest_tx > 0 {
                let total: f64 = (0..nh).map(|i| hp.honest_rate(i)).sum();
                hon_idle = total / tx as f64 / nh as f64;
            }
            let mut charge = cp;
            if config.mode == PunishmentMode::Direct && ann == Announcement::H1 {
                charge += cb;
            }
            let (p_i, p_b) = posteriors[honest_busy * 2 + usize::from(attacker_busy)];
            let (att_exp, hon_exp) = if tx > 0 {
                (p_i * att_idle - p_b * charge, p_i * hon_idle - p_b * charge)
            } else {
                (0.0, 0.0)
            };
            if tx > 0 && !channel_busy {
                att = att_idle;
                hon = hon_idle;
            }
            if collision {
                att -= charge;
                hon -= charge;
                penalties = n as f64 * charge;
            }
            SlotTrace {
                slot,
                channel_busy,
                honest_busy,
                attacker_busy: usize::from(attacker_busy),
                announcement: Some(ann),
                transmitters: tx,
                collision,
                penalties,
                punishment_flag: false,
                attacker_reward: att,
                honest_reward: hon,
                attacker_expected: att_exp,
                honest_expected: hon_exp,
                attack: action != hetero_honest_action(state),
            }
        }
    }
}

/// Totals of one replication.
#[derive(Debug, Clone, Default)]
struct Replication {
    attacker_sum: f64,
    honest_sum: f64,
    attacker_discounted: f64,
    honest_discounted: f64,
    attacker_expected_sum: f64,
    honest_expected_sum: f64,
    attacker_expected_discounted: f64,
    honest_expected_discounted: f64,
    collisions: u64,
    busy_slots: u64,
    busy_collisions: u64,
    attack_actions: u64,
    trigger_slot: Option<usize>,
    trace: Vec<SlotTrace>,
}

fn run_replication(config: &SimConfig, policy: &Resolved, posteriors: &[(f64, f64)], rep: usize) -> Replication {
    let mut rng = ChaCha8Rng::seed_from_u64(config.base_seed);
    rng.set_stream(rep as u64);
    let delta = config.scenario.base().discount;
    let mut out = Replication::default();
    let mut punished = false;
    let mut weight = 1.0;
    for slot in 0..config.horizon {
        let was_punished = punished;
        let t = run_slot(&mut rng, config, policy, posteriors, &mut punished, slot);
        out.attacker_sum += t.attacker_reward;
        out.honest_sum += t.honest_reward;
        out.attacker_discounted += weight * t.attacker_reward;
        out.honest_discounted += weight * t.honest_reward;
        out.attacker_expected_sum += t.attacker_expected;
        out.honest_expected_sum += t.honest_expected;
        out.attacker_expected_discounted += weight * t.attacker_expected;
        out.honest_expected_discounted += weight * t.honest_expected;
        weight *= delta;
        out.collisions += u64::from(t.collision);
        out.busy_slots += u64::from(t.channel_busy);
        out.busy_collisions += u64::from(t.channel_busy && t.collision);
        out.attack_actions += u64::from(t.attack);
        if punished && !was_punished {
            out.trigger_slot = Some(slot);
        }
        if rep == 0 && slot < config.trace_slots {
            out.trace.push(t);
        }
    }
    out
}

/// Mean and spread of one quantity across replications.
#[derive(Debug, Clone, Copy, PartialEq, Serialize)]
pub struct Estimate {
    pub mean: f64,
    /// Sample variance across replications.
    pub variance: f64,
    pub std_error: f64,
    /// 95% normal-approximation half-width.
    pub ci_half_width: f64,
}

impl Estimate {
    pub fn from_samples(xs: &[f64]) -> Self {
        let r = xs.len() as f64;
        let mean = pairwise_sum(xs) / r;
        let dev: Vec<f64> = xs.iter().map(|x| (x - mean) * (x - mean)).collect();
        let variance = if xs.len() > 1 {
            pairwise_sum(&dev) / (r - 1.0)
        } else {
            0.0
        };
        let std_error = (variance / r).sqrt();
        Self {
            mean,
            variance,
            std_error,
            ci_half_width: 1.96 * std_error,
        }
    }

    /// `|mean - reference|` in standard errors (infinite if the spread is zero and they differ).
    pub fn z_score(&self, reference: f64) -> f64 {
        let d = (self.mean - reference).abs();
        if d == 0.0 {
            0.0
        } else {
            d / self.std_error
        }
    }
}

#[derive(Debug, Clone, Copy, PartialEq, Serialize)]
pub struct PunishmentStats {
    pub triggered_replications: usize,
    pub trigger_slot_mean: Option<f64>,
    pub trigger_slot_min: Option<usize>,
    pub trigger_slot_median: Option<usize>,
    pub trigger_slot_max: Option<usize>,
}

#[derive(Debug, Clone, Copy, PartialEq, Serialize)]
pub struct PuMetrics {
    /// Fraction of busy slots with a collision.
    pub empirical_gamma: f64,
    /// Collision probability of a fully honest network, `P_m^N`.
    pub honest_gamma: f64,
    pub pu_rate: f64,
    pub utility: f64,
}

/// Exact references for the simulated quantities, where available.
#[derive(Debug, Clone, Copy, PartialEq, Serialize)]
pub struct AnalyticReference {
    pub attacker_per_slot: Option<f64>,
    pub honest_per_slot: Option<f64>,
    /// Expected discounted attacker reward over the simulated horizon
    /// (infinite horizon for indirect punishment, see `discount_tail_bound`).
    pub attacker_discounted: Option<f64>,
}

#[derive(Debug, Clone, PartialEq, Serialize)]
pub struct SimStats {
    pub schema_version: u32,
    pub mode: PunishmentMode,
    pub horizon: usize,
    pub replications: usize,
    pub base_seed: u64,
    pub attacker_reward_per_slot: Estimate,
    pub honest_reward_per_slot: Estimate,
    pub attacker_reward_discounted: Estimate,
    pub honest_reward_discounted: Estimate,
    /// Same trajectories with each slot's reward replaced by its expectation
    /// over the channel state given the sensing outcomes and actions.
    /// Unbiased for the same quantities, and far less noisy when collisions
    /// are rare but expensive.
    pub conditional: ConditionalEstimates,
    /// Bound on the discounted reward beyond the horizon.
    pub discount_tail_bound: f64,
    pub collision_count: u64,
    pub busy_slots: u64,
    pub attack_actions: u64,
    pub punishment: PunishmentStats,
    pub pu: PuMetrics,
    pub analytic: AnalyticReference,
    #[serde(skip)]
    pub trace: Vec<SlotTrace>,
}

#[derive(Debug, Clone, Copy, PartialEq, Serialize)]
pub struct ConditionalEstimates {
    pub attacker_reward_per_slot: Estimate,
    pub honest_reward_per_slot: Estimate,
    pub attacker_reward_discounted: Estimate,
    pub honest_reward_discounted: Estimate,
}

/// Channel posterior `(P^I, P^B)` for every sensing outcome the slot loop indexes.
fn posterior_table(scenario: &SimScenario) -> Result<Vec<(f64, f64)>> {
    let pair = |p: crate::posterior::Posterior| (p.p_idle_given_reports, p.p_busy_given_reports);
    match scenario {
        SimScenario::Homogeneous(p) => (0..=p.n_total)
            .map(|k| posterior_idle(p.n_total, k, p).map(pair))
            .collect(),
        SimScenario::Hetero(hp) => (0..=hp.base.n_honest())
            .flat_map(|h| [false, true].map(|d| (h, d)))
            .map(|(h, d)| posterior_idle_hetero(h, d, hp).map(pair))
            .collect(),
    }
}

fn analytic_reference(config: &SimConfig, policy: &Resolved) -> Result<AnalyticReference> {
    let include_direct = config.mode == PunishmentMode::Direct;
    let base = config.scenario.base();
    let delta = base.discount;
    let truncated = (1.0 - delta.powi(config.horizon.min(i32::MAX as usize) as i32)) / (1.0 - delta);
    match (policy, &config.scenario) {
        (Resolved::Homogeneous(table), SimScenario::Homogeneous(p)) => {
            if config.mode == PunishmentMode::Indirect {
                let model = build_mdp(p)?;
                let values = model.policy_value(&table.to_mdp_policy(&model))?;
                return Ok(AnalyticReference {
                    attacker_per_slot: None,
                    honest_per_slot: None,
                    attacker_discounted: Some(model.start_value(&values)),
                });
            }
            let m = p.n_attackers;
            let mut att = Vec::new();
            let mut hon = Vec::new();
            for h in 0..=p.n_honest() {
                for a in 0..=m {
                    let s = SensingState::new(h, a);
                    let pr = state_probability(s, p);
                    let r = evaluate_profile(s, table.pre_action(m, h, a), p, include_direct)?;
                    att.push(pr * r.attacker_aggregate);
                    hon.push(pr * r.honest_per_su);
                }
            }
            let (att, hon) = (pairwise_sum(&att), pairwise_sum(&hon));
            Ok(AnalyticReference {
                attacker_per_slot: Some(att),
                honest_per_slot: Some(hon),
                attacker_discounted: Some(att * truncated),
            })
        }
        (Resolved::Hetero(actions), SimScenario::Hetero(hp)) => {
            let mut att = Vec::new();
            let mut hon = Vec::new();
            for s in hetero_states(hp) {
                let pr = hetero_state_probability(s, hp);
                let r = hetero_evaluate(s, actions[s.honest_busy * 2 + usize::from(s.attacker_busy)], hp, include_direct)?;
                att.push(pr * r.attacker);
                hon.push(pr * r.honest_mean);
            }
            let (att, hon) = (pairwise_sum(&att), pairwise_sum(&hon));
            Ok(AnalyticReference {
                attacker_per_slot: Some(att),
                honest_per_slot: Some(hon),
                attacker_discounted: Some(att * truncated),
            })
        }
        _ => unreachable!("policy resolved for a different scenario kind"),
    }
}

/// Run every replication on a pool of `workers` threads (0 = rayon default).
pub fn run_experiment(config: &SimConfig, workers: usize) -> Result<SimStats> {
    config.validate()?;
    let policy = resolve(config)?;
    let posteriors = posterior_table(&config.scenario)?;
    let pool = rayon::ThreadPoolBuilder::new()
        .num_threads(workers)
        .build()
        .map_err(|e| Error::Unsupported(format!("thread pool: {e}")))?;
    let reps: Vec<Replication> = pool.install(|| {
        (0..config.replications)
            .into_par_iter()
            .map(|r| run_replication(config, &policy, &posteriors, r))
            .collect()
    });
    let h = config.horizon as f64;
    let per_slot = |f: fn(&Replication) -> f64| Estimate::from_samples(&reps.iter().map(|r| f(r) / h).collect::<Vec<_>>());
    let whole = |f: fn(&Replication) -> f64| Estimate::from_samples(&reps.iter().map(f).collect::<Vec<_>>());
    let base = config.scenario.base();
    let collisions = reps.iter().map(|r| r.collisions).sum();
    let busy_slots: u64 = reps.iter().map(|r| r.busy_slots).sum();
    let busy_collisions: u64 = reps.iter().map(|r| r.busy_collisions).sum();
    let mut triggers: Vec<usize> = reps.iter().filter_map(|r| r.trigger_slot).collect();
    triggers.sort_unstable();
    let punishment = PunishmentStats {
        triggered_replications: triggers.len(),
        trigger_slot_mean: (!triggers.is_empty())
            .then(|| pairwise_sum(&triggers.iter().map(|&t| t as f64).collect::<Vec<_>>()) / triggers.len() as f64),
        trigger_slot_min: triggers.first().copied(),
        trigger_slot_median: triggers.get(triggers.len() / 2).copied(),
        trigger_slot_max: triggers.last().copied(),
    };
    let gamma = if busy_slots > 0 {
        busy_collisions as f64 / busy_slots as f64
    } else {
        0.0
    };
    let pu = PuMetrics {
        empirical_gamma: gamma,
        honest_gamma: base.p_missed_detection.powi(base.n_total as i32),
        pu_rate: config.pu_rate,
        utility: pu_utility(gamma, config.value_function, config.pu_rate, base),
    };
    let max_abs_reward = base.total_rate.max(match &config.scenario {
        SimScenario::Hetero(hp) => hp.rate_attacker,
        _ => 0.0,
    }) + base.n_total as f64 * (base.collision_penalty + base.direct_punishment);
    let delta = base.discount;
    let tail = delta.powf(h) * max_abs_reward / (1.0 - delta);
    Ok(SimStats {
        schema_version: STATS_SCHEMA_VERSION,
        mode: config.mode,
        horizon: config.horizon,
        replications: config.replications,
        base_seed: config.base_seed,
        attacker_reward_per_slot: per_slot(|r| r.attacker_sum),
        honest_reward_per_slot: per_slot(|r| r.honest_sum),
        attacker_reward_discounted: whole(|r| r.attacker_discounted),
        honest_reward_discounted: whole(|r| r.honest_discounted),
        conditional: ConditionalEstimates {
            attacker_reward_per_slot: per_slot(|r| r.attacker_expected_sum),
            honest_reward_per_slot: per_slot(|r| r.honest_expected_sum),
            attacker_reward_discounted: whole(|r| r.attacker_expected_discounted),
            honest_reward_discounted: whole(|r| r.honest_expected_discounted),
        },
        discount_tail_bound: tail,
        collision_count: collisions,
        busy_slots,
        attack_actions: reps.iter().map(|r| r.attack_actions).sum(),
        punishment,
        pu,
        analytic: analytic_reference(config, &policy)?,
        trace: reps.into_iter().next().map(|r| r.trace).unwrap_or_default(),
    })
}

/// `(1 - gamma) V(r_PU) + gamma N C_p`.
pub fn pu_utility(gamma: f64, v: ValueFunction, pu_rate: f64, params: &ScenarioParams) -> f64 {
    (1.0 - gamma) * v.eval(pu_rate) + gamma * params.n_total as f64 * params.collision_penalty
}

/// Empirical collision rate and PU utility of a configuration.
pub fn estimate_pu_metrics(config: &SimConfig, workers: usize) -> Result<PuMetrics> {
    Ok(run_experiment(config, workers)?.pu)
}

pub fn stats_json(stats: &SimStats) -> String {
    serde_json::to_string_pretty(stats).expect("stats serialize")
}

#[cfg(test)]
mod tests {
    use super::*;

    fn small() -> ScenarioParams {
        // Condition I at N=4: about 2.1e2 .. 7.2e3 at these error rates.
        ScenarioParams::new(4, 1, 0.6, 0.15, 0.15, 1e3).with_discount(0.8)
    }

    fn cfg(mode: PunishmentMode, policy: AttackerPolicy) -> SimConfig {
        let mut c = SimConfig::new(SimScenario::Homogeneous(small()), mode, policy);
        c.horizon = 2000;
        c.replications = 8;
        c.base_seed = 7;
        c
    }

    #[test]
    fn perfect_idle_honest_slot() {
        let p = ScenarioParams::new(4, 1, 0.6, 0.15, 0.15, 1e3);
        let mut c = cfg(PunishmentMode::None, AttackerPolicy::Honest);
        // Only the idle slots of a near-perfect sensor are checked.
        c.scenario = SimScenario::Homogeneous(ScenarioParams {
            p_false_alarm: 1e-300,
            p_missed_detection: 1e-300,
            ..p
        });
        let policy = resolve(&c).unwrap();
        let mut rng = ChaCha8Rng::seed_from_u64(1);
        let posteriors = posterior_table(&c.scenario).unwrap();
        let mut punished = false;
        for slot in 0..200 {
            let t = run_slot(&mut rng, &c, &policy, &posteriors, &mut punished, slot);
            if !t.channel_busy {
                assert_eq!(t.transmitters, 4);
                assert!(!t.collision);
                assert_eq!(t.honest_reward, 0.25);
                assert_eq!(t.attacker_reward, 0.25);
            } else {
                assert_eq!(t.transmitters, 0);
            }
        }
    }

    #[test]
    fn honest_never_triggers() {
        for mode in [PunishmentMode::Direct, PunishmentMode::Indirect] {
            let s = run_experiment(&cfg(mode, AttackerPolicy::Honest), 2).unwrap();
            assert_eq!(s.punishment.triggered_replications, 0);
            assert_eq!(s.attack_actions, 0);
        }
    }

    #[test]
    fn indirect_absorbs() {
        let mut c = cfg(PunishmentMode::Indirect, AttackerPolicy::Threshold { z: 4 });
        c.trace_slots = 2000;
        let s = run_experiment(&c, 1).unwrap();
        let start = s.trace.iter().position(|t| t.punishment_flag).expect("triggered");
        for t in &s.trace[start + 1..] {
            assert!(t.announcement.is_none());
            assert!(t.punishment_flag);
        }
    }

    #[test]
    fn deterministic_across_workers() {
        let c = cfg(PunishmentMode::Direct, AttackerPolicy::Optimal);
        let a = stats_json(&run_experiment(&c, 1).unwrap());
        let b = stats_json(&run_experiment(&c, 4).unwrap());
        assert_eq!(a, b);
    }

    #[test]
    fn no_punishment_matches_expectation() {
        let mut c = cfg(PunishmentMode::None, AttackerPolicy::Optimal);
        c.replications = 20;
        c.horizon = 20_000;
        let s = run_experiment(&c, 0).unwrap();
        let z = s.attacker_reward_per_slot.z_score(s.analytic.attacker_per_slot.unwrap());
        assert!(z < 4.0, "{z}");
        let z = s.honest_reward_per_slot.z_score(s.analytic.honest_per_slot.unwrap());
        assert!(z < 4.0, "{z}");
    }

    #[test]
    fn conditional_rewards_match_expectation() {
        for mode in [PunishmentMode::None, PunishmentMode::Direct] {
            let s = run_experiment(&cfg(mode, AttackerPolicy::Optimal), 2).unwrap();
            let a = s.analytic;
            assert!(s.conditional.attacker_reward_per_slot.z_score(a.attacker_per_slot.unwrap()) < 4.0);
            assert!(s.conditional.honest_reward_per_slot.z_score(a.honest_per_slot.unwrap()) < 4.0);
            // Less spread than the realized rewards.
            assert!(s.conditional.attacker_reward_per_slot.variance <= s.attacker_reward_per_slot.variance);
        }
    }

    #[test]
    fn hetero_indirect_rejected() {
        let h = HeteroParams::new(small(), 0.1, 0.1, 1.0);
        let c = SimConfig::new(SimScenario::Hetero(h), PunishmentMode::Indirect, AttackerPolicy::Optimal);
        assert!(matches!(run_experiment(&c, 1), Err(Error::Unsupported(_))));
    }

    #[test]
    fn linear_utility() {
        let p = small();
        assert_eq!(pu_utility(0.0, ValueFunction::Linear, 2.0, &p), 2.0);
        assert_eq!(pu_utility(1.0, ValueFunction::Linear, 2.0, &p), 4e3);
    }
}
