use coopsense::direct::direct_threshold;
use coopsense::fusion::condition_i_bounds;
use coopsense::indirect::lr_dishonest;
use coopsense::mdp::build_mdp;
use coopsense::sim::{
    estimate_pu_metrics, run_experiment, AttackerPolicy, PolicyTable, PunishmentMode, SimConfig, SimScenario,
    SimStats,
};
use coopsense::ScenarioParams;

/// Mid-Region-II scenario with error rates high enough to see collisions.
fn scenario() -> ScenarioParams {
    let p = ScenarioParams::new(4, 2, 0.5, 0.2, 0.25, 1.0).with_discount(0.8);
    let b = condition_i_bounds(&p);
    p.with_collision_penalty((b.lower_bound * b.upper_bound).sqrt())
}

fn run(p: ScenarioParams, mode: PunishmentMode, policy: AttackerPolicy, horizon: usize, reps: usize) -> SimStats {
    let mut c = SimConfig::new(SimScenario::Homogeneous(p), mode, policy);
    c.horizon = horizon;
    c.replications = reps;
    c.base_seed = 5;
    run_experiment(&c, 0).unwrap()
}

/// Four standard errors of a binomial proportion.
fn binomial_tol(p: f64, n: u64) -> f64 {
    4.0 * (p * (1.0 - p) / n as f64).sqrt()
}

#[test]
fn honest_network_collides_only_on_full_miss() {
    let p = scenario();
    let s = run(p, PunishmentMode::None, AttackerPolicy::Honest, 20_000, 10);
    let gamma = s.pu.honest_gamma;
    assert_eq!(gamma, p.p_missed_detection.powi(4));
    assert!((s.pu.empirical_gamma - gamma).abs() < binomial_tol(gamma, s.busy_slots));
    assert_eq!(s.attack_actions, 0);
}

#[test]
fn attacks_raise_collision_rate() {
    let p = scenario();
    let honest = run(p, PunishmentMode::None, AttackerPolicy::Honest, 20_000, 10);
    // The all-idle attack collides exactly when honest sharing would, so only
    // exclusive transmission after a busy decision adds collisions.
    let all_idle = run(p, PunishmentMode::None, AttackerPolicy::Optimal, 20_000, 10);
    assert!(all_idle.attack_actions > 0);
    assert_eq!(all_idle.pu.empirical_gamma, honest.pu.empirical_gamma);
    let attack = run(p, PunishmentMode::None, AttackerPolicy::Threshold { z: 1 }, 20_000, 10);
    assert!(attack.pu.empirical_gamma > honest.pu.empirical_gamma);
    assert!(attack.pu.utility > honest.pu.utility);
}

#[test]
fn direct_punishment_at_threshold_restores_baseline() {
    let p = scenario();
    let th = direct_threshold(2, &p).unwrap().value;
    let s = run(
        p.with_direct_punishment(th * 1.01),
        PunishmentMode::Direct,
        AttackerPolicy::Optimal,
        20_000,
        10,
    );
    assert_eq!(s.attack_actions, 0);
    let gamma = s.pu.honest_gamma;
    assert!((s.pu.empirical_gamma - gamma).abs() < binomial_tol(gamma, s.busy_slots));
    let weak = run(
        p.with_direct_punishment(th * 0.5),
        PunishmentMode::Direct,
        AttackerPolicy::Optimal,
        2_000,
        4,
    );
    assert!(weak.attack_actions > 0);
}

#[test]
fn honest_policy_never_triggers_indirect_punishment() {
    let s = run(scenario(), PunishmentMode::Indirect, AttackerPolicy::Honest, 5_000, 8);
    assert_eq!(s.punishment.triggered_replications, 0);
}

#[test]
fn indirect_attack_is_eventually_punished() {
    let p = scenario();
    let lr = lr_dishonest(&p);
    let z = lr.z_star.unwrap_or(0);
    let s = run(p, PunishmentMode::Indirect, AttackerPolicy::Threshold { z }, 5_000, 20);
    assert_eq!(s.punishment.triggered_replications, 20);
    assert!(s.punishment.trigger_slot_min.unwrap() <= s.punishment.trigger_slot_max.unwrap());
}

#[test]
fn explicit_table_matches_threshold_policy() {
    let p = scenario();
    let table = PolicyTable::threshold(&p, 0).unwrap();
    let a = run(p, PunishmentMode::Indirect, AttackerPolicy::Threshold { z: 0 }, 500, 50);
    let b = run(p, PunishmentMode::Indirect, AttackerPolicy::Table(table), 500, 50);
    assert_eq!(a, b);
}

#[test]
fn indirect_discounted_reward_matches_policy_value() {
    let p = scenario();
    let s = run(p, PunishmentMode::Indirect, AttackerPolicy::Optimal, 150, 4_000);
    let reference = s.analytic.attacker_discounted.unwrap();
    let model = build_mdp(&p).unwrap();
    let best = model.start_value(&model.value_iteration(1e-12).values);
    assert!((reference - best).abs() < 1e-8 * best.abs().max(1.0));
    assert!(s.conditional.attacker_reward_discounted.z_score(reference) < 4.0);
    assert!(s.discount_tail_bound < s.conditional.attacker_reward_discounted.ci_half_width);
}

#[test]
fn pu_metrics_agree_with_full_run() {
    let p = scenario();
    let mut c = SimConfig::new(SimScenario::Homogeneous(p), PunishmentMode::None, AttackerPolicy::Optimal);
    c.horizon = 1_000;
    c.replications = 3;
    let pu = estimate_pu_metrics(&c, 1).unwrap();
    assert_eq!(pu, run_experiment(&c, 2).unwrap().pu);
    assert!((0.0..=1.0).contains(&pu.empirical_gamma));
}
