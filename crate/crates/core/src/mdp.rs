//! The indirect-punishment game as an explicit finite MDP, with a value
//! iteration solver specialized to its two-block structure.
//!
//! Before punishment a state is the split `(honest_busy, attacker_busy)` of
//! local decisions; after punishment honest reports are gone and only
//! `attacker_busy` remains. Sensing outcomes are independent across slots, so
//! every successor distribution is a mixture of the pre-punishment sensing
//! distribution and the post-punishment one, weighted by the chance that the
//! current action triggers punishment.

use serde::Serialize;

use crate::error::Result;
use crate::fusion::{fuse_or, Announcement};
use crate::model::ScenarioParams;
use crate::oneshot::{honest_equivalent_profile, outcome_rewards, ActionProfile, SensingState};
use crate::posterior::{count_pmf, joint_split_pmf, posterior_idle_model};

#[derive(Debug, Clone, Copy, PartialEq, Eq, Hash, Serialize)]
pub enum MdpState {
    Pre { honest_busy: usize, attacker_busy: usize },
    Post { attacker_busy: usize },
}

impl MdpState {
    pub fn punished(&self) -> bool {
        matches!(self, MdpState::Post { .. })
    }
}

#[derive(Debug, Clone, Copy, PartialEq, Eq, Hash, Serialize)]
pub enum MdpAction {
    Pre(ActionProfile),
    /// Number of attackers transmitting on their own; only `>= 1` matters.
    Post { transmitters: usize },
}

/// Stationary deterministic policy, indexed like [`MdpModel::states`].
#[derive(Debug, Clone, PartialEq, Serialize)]
pub struct Policy {
    pub actions: Vec<MdpAction>,
}

#[derive(Debug, Clone)]
pub struct MdpModel {
    params: ScenarioParams,
    unit: ScenarioParams,
    discount: f64,
    n_honest: usize,
    n_attackers: usize,
    states: Vec<MdpState>,
    /// Sensing distribution of the pre-punishment states, in state order.
    pre_prob: Vec<f64>,
    /// Attacker-only sensing distribution of the post-punishment states.
    post_prob: Vec<f64>,
    /// `[pre state][action index]` unit-rate reward and trigger probability.
    pre_reward: Vec<Vec<f64>>,
    pre_trigger: Vec<Vec<f64>>,
    /// Unit-rate reward of transmitting after punishment, per attacker busy count.
    post_reward: Vec<f64>,
}

pub fn build_mdp(params: &ScenarioParams) -> Result<MdpModel> {
    params.validate()?;
    let unit = params.at_unit_rate();
    let s = unit.sensor();
    let n = unit.n_total;
    let m = unit.n_attackers;
    let nh = n - m;
    let mut states = Vec::with_capacity((nh + 1) * (m + 1) + m + 1);
    let mut pre_prob = Vec::new();
    let mut pre_reward = Vec::new();
    let mut pre_trigger = Vec::new();
    for h in 0..=nh {
        for a in 0..=m {
            states.push(MdpState::Pre {
                honest_busy: h,
                attacker_busy: a,
            });
            pre_prob.push(joint_split_pmf(nh, h, m, a, &s));
            let post = posterior_idle_model(n, h + a, &s);
            let mut rewards = Vec::with_capacity((m + 1) * (m + 1));
            let mut triggers = Vec::with_capacity((m + 1) * (m + 1));
            for (b, mt) in action_grid(m) {
                let announcement = fuse_or(h + b);
                let (att, _) = outcome_rewards(post, announcement, mt, &unit, false);
                rewards.push(att);
                // Collision after a busy announcement: the channel is busy.
                triggers.push(if announcement == Announcement::H1 && mt >= 1 {
                    post.p_busy
                } else {
                    0.0
                });
            }
            pre_reward.push(rewards);
            pre_trigger.push(triggers);
        }
    }
    let mut post_prob = Vec::new();
    let mut post_reward = Vec::new();
    for a in 0..=m {
        states.push(MdpState::Post { attacker_busy: a });
        post_prob.push(count_pmf(m, a, &s));
        let post = posterior_idle_model(m, a, &s);
        post_reward.push(post.p_idle - m as f64 * post.p_busy * unit.collision_penalty);
    }
    Ok(MdpModel {
        params: *params,
        unit,
        discount: params.discount,
        n_honest: nh,
        n_attackers: m,
        states,
        pre_prob,
        post_prob,
        pre_reward,
        pre_trigger,
        post_reward,
    })
}

/// `(b, M_T)` pairs in tie-break order: `M_T` ascending, then `b` ascending.
fn action_grid(m: usize) -> impl Iterator<Item = (usize, usize)> {
    (0..=m).flat_map(move |mt| (0..=m).map(move |b| (b, mt)))
}

fn action_index(m: usize, profile: ActionProfile) -> usize {
    profile.transmitters * (m + 1) + profile.busy_reports
}

#[derive(Debug, Clone, Serialize)]
pub struct Solution {
    /// Values at the scenario's rate, indexed like [`MdpModel::states`].
    pub values: Vec<f64>,
    pub policy: Policy,
    pub iterations: usize,
    /// Sup-norm Bellman residual of the last sweep (scenario rate).
    pub residual: f64,
    pub converged: bool,
}

const MAX_SWEEPS: usize = 2_000_000;

impl MdpModel {
    pub fn params(&self) -> &ScenarioParams {
        &self.params
    }

    pub fn discount(&self) -> f64 {
        self.discount
    }

    /// Same model with another discount factor; `0` gives the myopic problem.
    pub fn with_discount(&self, delta: f64) -> Self {
        let mut out = self.clone();
        out.discount = delta;
        out.params.discount = delta;
        out.unit.discount = delta;
        out
    }

    pub fn states(&self) -> &[MdpState] {
        &self.states
    }

    pub fn n_states(&self) -> usize {
        self.states.len()
    }

    fn n_pre(&self) -> usize {
        self.pre_prob.len()
    }

    pub fn state_index(&self, state: MdpState) -> Option<usize> {
        let m = self.n_attackers;
        match state {
            MdpState::Pre {
                honest_busy,
                attacker_busy,
            } if honest_busy <= self.n_honest && attacker_busy <= m => Some(honest_busy * (m + 1) + attacker_busy),
            MdpState::Post { attacker_busy } if attacker_busy <= m => Some(self.n_pre() + attacker_busy),
            _ => None,
        }
    }

    /// All actions valid in a state, in tie-break order (honest-equivalent not moved first).
    pub fn actions(&self, index: usize) -> Vec<MdpAction> {
        let m = self.n_attackers;
        match self.states[index] {
            MdpState::Pre { .. } => action_grid(m)
                .map(|(b, mt)| MdpAction::Pre(ActionProfile::new(b, mt)))
                .collect(),
            MdpState::Post { .. } => (0..=m).map(|mt| MdpAction::Post { transmitters: mt }).collect(),
        }
    }

    /// Sensing distribution over pre-punishment states (start distribution).
    pub fn start_distribution(&self) -> Vec<f64> {
        let mut d = self.pre_prob.clone();
        d.resize(self.n_states(), 0.0);
        d
    }

    /// Expected value under the start distribution.
    pub fn start_value(&self, values: &[f64]) -> f64 {
        self.pre_prob.iter().zip(values).map(|(p, v)| p * v).sum()
    }

    /// `(reward at unit rate, trigger probability)` of an action, or `None` if invalid.
    fn reward_trigger(&self, index: usize, action: MdpAction) -> Option<(f64, f64)> {
        let m = self.n_attackers;
        match (self.states[index], action) {
            (MdpState::Pre { .. }, MdpAction::Pre(p)) if p.busy_reports <= m && p.transmitters <= m => {
                let j = action_index(m, p);
                Some((self.pre_reward[index][j], self.pre_trigger[index][j]))
            }
            (MdpState::Post { attacker_busy }, MdpAction::Post { transmitters }) if transmitters <= m => {
                let r = if transmitters >= 1 {
                    self.post_reward[attacker_busy]
                } else {
                    0.0
                };
                Some((r, 1.0))
            }
            _ => None,
        }
    }

    /// Expected immediate attacker-aggregate reward at the scenario's rate.
    pub fn reward(&self, index: usize, action: MdpAction) -> Option<f64> {
        self.reward_trigger(index, action).map(|(r, _)| r * self.params.total_rate)
    }

    /// Full successor distribution of one state-action pair.
    pub fn transition_row(&self, index: usize, action: MdpAction) -> Option<Vec<f64>> {
        let (_, t) = self.reward_trigger(index, action)?;
        let mut row: Vec<f64> = self.pre_prob.iter().map(|p| p * (1.0 - t)).collect();
        row.extend(self.post_prob.iter().map(|p| p * t));
        Some(row)
    }

    /// Reference action for tie-breaking: honest reporting, or waiting after punishment.
    pub fn honest_action(&self, index: usize) -> MdpAction {
        match self.states[index] {
            MdpState::Pre {
                honest_busy,
                attacker_busy,
            } => MdpAction::Pre(honest_equivalent_profile(
                SensingState::new(honest_busy, attacker_busy),
                &self.unit,
            )),
            MdpState::Post { .. } => MdpAction::Post { transmitters: 0 },
        }
    }

    pub fn honest_policy(&self) -> Policy {
        Policy {
            actions: (0..self.n_states()).map(|i| self.honest_action(i)).collect(),
        }
    }

    /// Exclusive transmission in every pre-punishment state with at most `z`
    /// busy decisions, honest elsewhere; after punishment transmit iff profitable.
    pub fn threshold_policy(&self, z: Option<usize>) -> Policy {
        let actions = (0..self.n_states())
            .map(|i| match self.states[i] {
                MdpState::Pre {
                    honest_busy,
                    attacker_busy,
                } if z.is_some_and(|z| honest_busy + attacker_busy <= z) => {
                    MdpAction::Pre(ActionProfile::new(attacker_busy.max(1), 1))
                }
                MdpState::Post { attacker_busy } if self.post_reward[attacker_busy] > 0.0 => {
                    MdpAction::Post { transmitters: 1 }
                }
                _ => self.honest_action(i),
            })
            .collect();
        Policy { actions }
    }

    fn expectations(&self, v: &[f64]) -> (f64, f64) {
        let n_pre = self.n_pre();
        let e_pre = self.pre_prob.iter().zip(&v[..n_pre]).map(|(p, x)| p * x).sum();
        let e_post = self.post_prob.iter().zip(&v[n_pre..]).map(|(p, x)| p * x).sum();
        (e_pre, e_post)
    }

    fn q_value(&self, index: usize, action: MdpAction, e_pre: f64, e_post: f64) -> f64 {
        let (r, t) = self.reward_trigger(index, action).expect("valid action");
        r + self.discount * ((1.0 - t) * e_pre + t * e_post)
    }

    fn greedy(&self, index: usize, e_pre: f64, e_post: f64) -> (MdpAction, f64) {
        let honest = self.honest_action(index);
        let mut best = (honest, self.q_value(index, honest, e_pre, e_post));
        for action in self.actions(index) {
            let q = self.q_value(index, action, e_pre, e_post);
            if q > best.1 {
                best = (action, q);
            }
        }
        best
    }

    /// Value iteration until the sup-norm residual is below
    /// `tolerance (1 - delta) / (2 delta)`, i.e. values within `tolerance / 2`.
    /// `tolerance` is in scenario-rate reward units.
    pub fn value_iteration(&self, tolerance: f64) -> Solution {
        let rate = self.params.total_rate;
        let delta = self.discount;
        let tol = tolerance / rate;
        let stop = if delta > 0.0 {
            tol * (1.0 - delta) / (2.0 * delta)
        } else {
            f64::INFINITY
        };
        let n = self.n_states();
        let mut v = vec![0.0; n];
        let mut next = vec![0.0; n];
        let mut iterations = 0;
        let mut residual;
        let mut converged = false;
        loop {
            let (e_pre, e_post) = self.expectations(&v);
            residual = 0.0f64;
            for (i, slot) in next.iter_mut().enumerate() {
                *slot = self.greedy(i, e_pre, e_post).1;
                residual = residual.max((*slot - v[i]).abs());
            }
            std::mem::swap(&mut v, &mut next);
            iterations += 1;
            if residual < stop || delta == 0.0 {
                converged = true;
                break;
            }
            if iterations >= MAX_SWEEPS {
                break;
            }
        }
        let (e_pre, e_post) = self.expectations(&v);
        let actions = (0..n).map(|i| self.greedy(i, e_pre, e_post).0).collect();
        Solution {
            values: v.iter().map(|x| x * rate).collect(),
            policy: Policy { actions },
            iterations,
            residual: residual * rate,
            converged,
        }
    }

    /// Values of a fixed policy (scenario rate), by iterating its fixed-point
    /// equations until successive sweeps agree to 1e-12 relative.
    pub fn policy_value(&self, policy: &Policy) -> Result<Vec<f64>> {
        let n = self.n_states();
        if policy.actions.len() != n {
            return Err(crate::Error::Inconsistent(format!(
                "policy has {} actions for {n} states",
                policy.actions.len()
            )));
        }
        let mut rt = Vec::with_capacity(n);
        for (i, a) in policy.actions.iter().enumerate() {
            rt.push(
                self.reward_trigger(i, *a)
                    .ok_or_else(|| crate::Error::Inconsistent(format!("invalid action {a:?} in {:?}", self.states[i])))?,
            );
        }
        let delta = self.discount;
        let mut v = vec![0.0; n];
        for _ in 0..MAX_SWEEPS {
            let (e_pre, e_post) = self.expectations(&v);
            let mut change = 0.0f64;
            let mut scale = 1.0f64;
            for (i, (r, t)) in rt.iter().enumerate() {
                let x = r + delta * ((1.0 - t) * e_pre + t * e_post);
                change = change.max((x - v[i]).abs());
                scale = scale.max(x.abs());
                v[i] = x;
            }
            // Remaining error is at most delta / (1 - delta) times the last change.
            if change * delta <= 1e-12 * scale * (1.0 - delta) {
                break;
            }
        }
        Ok(v.iter().map(|x| x * self.params.total_rate).collect())
    }

    /// Is the set of attacked pre-punishment states downward-closed in the
    /// total busy count?
    pub fn verify_threshold_structure(&self, policy: &Policy) -> ThresholdStructure {
        let attacked = |i: usize| policy.actions[i] != self.honest_action(i);
        let total = |s: MdpState| match s {
            MdpState::Pre {
                honest_busy,
                attacker_busy,
            } => honest_busy + attacker_busy,
            MdpState::Post { .. } => unreachable!(),
        };
        let z = (0..self.n_pre()).filter(|&i| attacked(i)).map(|i| total(self.states[i])).max();
        let counterexample = z.and_then(|z| {
            (0..self.n_pre())
                .find(|&i| total(self.states[i]) <= z && !attacked(i))
                .map(|i| self.states[i])
        });
        ThresholdStructure {
            holds: counterexample.is_none(),
            z,
            counterexample,
        }
    }
}

#[derive(Debug, Clone, Copy, PartialEq, Serialize)]
pub struct ThresholdStructure {
    pub holds: bool,
    /// Largest attacked busy count, `None` when nothing is attacked.
    pub z: Option<usize>,
    pub counterexample: Option<MdpState>,
}

pub const POLICY_CSV_HEADER: [&str; 6] = ["honest_busy", "attacker_busy", "punishment", "b", "M_T", "value"];

/// Policy dump rows; post-punishment rows leave `honest_busy` and `b` empty.
pub fn policy_csv_records(model: &MdpModel, solution: &Solution) -> Vec<Vec<String>> {
    use crate::report::fmt_f64;
    model
        .states()
        .iter()
        .zip(&solution.policy.actions)
        .zip(&solution.values)
        .map(|((state, action), value)| {
            let (h, a, punished) = match *state {
                MdpState::Pre {
                    honest_busy,
                    attacker_busy,
                } => (honest_busy.to_string(), attacker_busy, false),
                MdpState::Post { attacker_busy } => (String::new(), attacker_busy, true),
            };
            let (b, mt) = match *action {
                MdpAction::Pre(p) => (p.busy_reports.to_string(), p.transmitters),
                MdpAction::Post { transmitters } => (String::new(), transmitters),
            };
            vec![
                h,
                a.to_string(),
                if punished { "on" } else { "off" }.to_string(),
                b,
                mt.to_string(),
                fmt_f64(*value),
            ]
        })
        .collect()
}

#[cfg(test)]
mod tests {
    use super::*;
    use crate::indirect::{lr_dishonest, lr_honest};
    use crate::oneshot::best_response;

    fn nt() -> ScenarioParams {
        ScenarioParams::new(6, 2, 0.6, 0.08, 0.08, 1e5).with_discount(0.9)
    }

    #[test]
    fn state_count() {
        let m = build_mdp(&nt()).unwrap();
        assert_eq!(m.n_states(), 5 * 3 + 3);
        for (i, s) in m.states().iter().enumerate() {
            assert_eq!(m.state_index(*s), Some(i));
        }
    }

    #[test]
    fn rows_are_stochastic_and_absorbing() {
        let m = build_mdp(&nt()).unwrap();
        for i in 0..m.n_states() {
            for a in m.actions(i) {
                let row = m.transition_row(i, a).unwrap();
                let total: f64 = row.iter().sum();
                assert!((total - 1.0).abs() < 1e-12);
                if m.states()[i].punished() {
                    assert!(row[..m.n_pre()].iter().all(|&p| p == 0.0));
                }
            }
        }
    }

    #[test]
    fn myopic_matches_best_response() {
        let p = nt().with_collision_penalty(1e4);
        let m = build_mdp(&p).unwrap().with_discount(0.0);
        let sol = m.value_iteration(1e-12);
        for (i, s) in m.states().iter().enumerate() {
            if let MdpState::Pre {
                honest_busy,
                attacker_busy,
            } = *s
            {
                let (profile, r) = best_response(SensingState::new(honest_busy, attacker_busy), &p, false).unwrap();
                assert_eq!(sol.values[i], r.attacker_aggregate);
                assert_eq!(sol.policy.actions[i], MdpAction::Pre(profile));
            }
        }
    }

    #[test]
    fn fixed_policies_match_closed_forms() {
        let p = nt();
        let m = build_mdp(&p).unwrap();
        let honest = m.start_value(&m.policy_value(&m.honest_policy()).unwrap());
        assert!((honest - lr_honest(&p)).abs() < 1e-10 * honest.abs());
        let attack = m.start_value(&m.policy_value(&m.threshold_policy(Some(0))).unwrap());
        let lr = lr_dishonest(&p).lr_dishonest;
        assert!((attack - lr).abs() < 1e-10 * lr.abs(), "{attack} vs {lr}");
    }

    #[test]
    fn value_iteration_residual_bound() {
        let m = build_mdp(&nt().with_discount(0.99)).unwrap();
        let sol = m.value_iteration(1e-9);
        assert!(sol.converged);
        assert!(sol.residual < 1e-9 * 0.01 / (2.0 * 0.99));
    }

    #[test]
    fn rate_scales_values() {
        let a = build_mdp(&nt()).unwrap().value_iteration(1e-12);
        let b = build_mdp(&nt().with_rate(4.0).with_collision_penalty(4e5))
            .unwrap()
            .value_iteration(4e-12);
        for (x, y) in a.values.iter().zip(&b.values) {
            assert!((4.0 * x - y).abs() < 1e-9 * y.abs().max(1.0));
        }
    }

    #[test]
    fn policy_csv_shape() {
        let m = build_mdp(&nt()).unwrap();
        let sol = m.value_iteration(1e-10);
        let rows = policy_csv_records(&m, &sol);
        assert_eq!(rows.len(), m.n_states());
        assert!(rows.iter().all(|r| r.len() == POLICY_CSV_HEADER.len()));
    }
}
