//! Oracle checks of every closed form against an independent computation.
//!
//! Each check samples its own instances from a seeded generator, so a run is
//! reproducible from `VerifyOptions::seed`. The `verify` subcommand and the
//! acceptance test target both run these.

use std::time::Instant;

use rand::{Rng, SeedableRng};
use rand_chacha::ChaCha8Rng;
use serde::{Deserialize, Serialize};

use crate::direct::{direct_threshold, direct_threshold_hetero, direct_threshold_oracle, hetero_cp_bounds};
use crate::error::{Error, Result};
use crate::fusion::{condition_i_bounds, condition_i_semantics, Region};
use crate::indirect::{delta_threshold, delta_threshold_oracle, lr_dishonest, DeltaThreshold};
use crate::mdp::build_mdp;
use crate::model::{
    a4_bound, classify_cooperation_case, classify_transmission_case, CooperationCase, HeteroParams, ScenarioParams,
    TransmissionCase,
};
use crate::oneshot::{all_states, attacking_states, best_response, hetero_attacking_states};
use crate::posterior::{posterior_idle, posterior_idle_hetero};
use crate::sim::{run_experiment, stats_json, AttackerPolicy, PunishmentMode, SimConfig, SimScenario};

#[derive(Debug, Clone, PartialEq, Serialize, Deserialize)]
#[serde(deny_unknown_fields, default)]
pub struct VerifyOptions {
    pub seed: u64,
    /// Check ids to run; empty runs all ten.
    pub checks: Vec<u8>,
    pub posterior_grid: usize,
    pub condition_grid: usize,
    pub proposition_instances: usize,
    pub direct_instances: usize,
    pub observation_steps: usize,
    pub mdp_instances: usize,
    pub delta_instances: usize,
    pub hetero_steps: usize,
    pub sim_instances: usize,
    pub sim_slots: usize,
    pub sim_episodes: usize,
    pub determinism_replications: usize,
    /// Multiply the closed-form direct threshold before comparing (negative control).
    pub perturb_direct_threshold: Option<f64>,
}

impl Default for VerifyOptions {
    fn default() -> Self {
        Self {
            seed: 20_240_601,
            checks: Vec::new(),
            posterior_grid: 1000,
            condition_grid: 1000,
            proposition_instances: 100,
            direct_instances: 200,
            observation_steps: 9,
            mdp_instances: 100,
            delta_instances: 100,
            hetero_steps: 10,
            sim_instances: 100,
            sim_slots: 1_000_000,
            sim_episodes: 10_000,
            determinism_replications: 8,
            perturb_direct_threshold: None,
        }
    }
}

pub const CHECK_NAMES: [&str; 10] = [
    "posterior_monotonicity",
    "condition_i_equivalence",
    "single_slot_best_response",
    "direct_threshold_oracle",
    "direct_threshold_monotonicity",
    "long_term_rewards_vs_mdp",
    "discount_threshold",
    "heterogeneous_direct_threshold",
    "simulation_agreement",
    "simulation_determinism",
];

/// Runtime budgets in seconds, by check id.
pub const CHECK_BUDGETS: [f64; 10] = [1.0, 1.0, 5.0, 30.0, 1.0, 120.0, 30.0, 5.0, 300.0, 30.0];

#[derive(Debug, Clone, PartialEq, Serialize)]
pub struct CheckResult {
    pub id: u8,
    pub name: &'static str,
    pub passed: bool,
    pub instances: usize,
    pub failures: usize,
    /// First few failure descriptions.
    pub details: Vec<String>,
    pub runtime_seconds: f64,
    pub budget_seconds: f64,
}

impl CheckResult {
    pub fn within_budget(&self) -> bool {
        self.runtime_seconds < self.budget_seconds
    }

    pub fn summary_line(&self) -> String {
        format!(
            "[{}] {:>2} {:<32} instances={:<6} failures={:<4} runtime={:.2}s (budget {}s)",
            if self.passed { "PASS" } else { "FAIL" },
            self.id,
            self.name,
            self.instances,
            self.failures,
            self.runtime_seconds,
            self.budget_seconds
        )
    }
}

/// Failure bookkeeping for one check.
struct Tally {
    instances: usize,
    failures: usize,
    details: Vec<String>,
}

impl Tally {
    fn new() -> Self {
        Self {
            instances: 0,
            failures: 0,
            details: Vec::new(),
        }
    }

    fn record(&mut self, ok: bool, detail: impl FnOnce() -> String) {
        self.instances += 1;
        if !ok {
            self.fail(detail());
        }
    }

    fn fail(&mut self, detail: String) {
        self.failures += 1;
        if self.details.len() < 5 {
            self.details.push(detail);
        }
    }
}

fn rel_err(a: f64, b: f64) -> f64 {
    let scale = a.abs().max(b.abs());
    if scale == 0.0 {
        0.0
    } else {
        (a - b).abs() / scale
    }
}

fn log_uniform(rng: &mut ChaCha8Rng, lo: f64, hi: f64) -> f64 {
    rng.random_range(lo.ln()..hi.ln()).exp()
}

/// Sampling ranges for random scenarios.
#[derive(Debug, Clone, Copy)]
pub struct Ranges {
    pub n: (usize, usize),
    pub p_idle: (f64, f64),
    pub p_error: (f64, f64),
    pub discount: (f64, f64),
    pub require_a4: bool,
}

/// Random scenario whose `C_p` is log-uniform inside the OR-rule optimality
/// interval (and above the single-SU bound if required).
pub fn sample_region_ii(rng: &mut ChaCha8Rng, r: &Ranges) -> ScenarioParams {
    loop {
        let n = rng.random_range(r.n.0..=r.n.1);
        let m = rng.random_range(1..n);
        let base = ScenarioParams::new(
            n,
            m,
            rng.random_range(r.p_idle.0..r.p_idle.1),
            rng.random_range(r.p_error.0..r.p_error.1),
            rng.random_range(r.p_error.0..r.p_error.1),
            1.0,
        )
        .with_discount(rng.random_range(r.discount.0..r.discount.1));
        let b = condition_i_bounds(&base);
        let lo = if r.require_a4 {
            b.lower_bound.max(a4_bound(&base))
        } else {
            b.lower_bound
        };
        if lo >= b.upper_bound {
            continue;
        }
        let p = base.with_collision_penalty(log_uniform(rng, lo, b.upper_bound));
        if condition_i_bounds(&p).region == Region::II && (!r.require_a4 || crate::model::check_a4(&p)) {
            return p;
        }
    }
}

const DEFAULT_RANGES: Ranges = Ranges {
    n: (2, 12),
    p_idle: (0.2, 0.9),
    p_error: (0.01, 0.3),
    discount: (0.3, 0.99),
    require_a4: false,
};

pub fn run_checks(opts: &VerifyOptions) -> Result<Vec<CheckResult>> {
    let ids: Vec<u8> = if opts.checks.is_empty() {
        (1..=10).collect()
    } else {
        opts.checks.clone()
    };
    let mut out = Vec::new();
    for id in ids {
        out.push(run_check(id, opts)?);
    }
    Ok(out)
}

/// Grid sizes a check depends on; all must be positive.
fn check_sizes(id: u8, o: &VerifyOptions) -> Vec<(&'static str, usize)> {
    match id {
        1 => vec![("posterior_grid", o.posterior_grid)],
        2 => vec![("condition_grid", o.condition_grid)],
        3 => vec![("proposition_instances", o.proposition_instances)],
        4 => vec![("direct_instances", o.direct_instances)],
        5 => vec![("observation_steps", o.observation_steps)],
        6 => vec![("mdp_instances", o.mdp_instances)],
        7 => vec![("delta_instances", o.delta_instances)],
        8 => vec![("hetero_steps", o.hetero_steps)],
        9 => vec![
            ("sim_instances", o.sim_instances),
            ("sim_slots", o.sim_slots),
            ("sim_episodes", o.sim_episodes),
        ],
        10 => vec![("determinism_replications", o.determinism_replications)],
        _ => vec![],
    }
}

/// Reject unknown check ids and empty grids before anything runs.
pub fn validate_options(opts: &VerifyOptions) -> Result<()> {
    let ids: Vec<u8> = if opts.checks.is_empty() {
        (1..=10).collect()
    } else {
        opts.checks.clone()
    };
    for id in ids {
        if !(1..=10).contains(&id) {
            return Err(Error::Unsupported(format!("unknown check id {id}")));
        }
        for (name, size) in check_sizes(id, opts) {
            if size == 0 {
                return Err(Error::Unsupported(format!("{name} is empty")));
            }
        }
    }
    if let Some(f) = opts.perturb_direct_threshold {
        if !(f > 0.0 && f.is_finite()) {
            return Err(Error::Unsupported("perturb_direct_threshold must be positive".into()));
        }
    }
    Ok(())
}

pub fn run_check(id: u8, opts: &VerifyOptions) -> Result<CheckResult> {
    validate_options(&VerifyOptions {
        checks: vec![id],
        ..opts.clone()
    })?;
    let mut rng = ChaCha8Rng::seed_from_u64(opts.seed);
    rng.set_stream(u64::from(id));
    let start = Instant::now();
    let tally = match id {
        1 => check_posterior_monotonicity(&mut rng, opts),
        2 => check_condition_i(&mut rng, opts),
        3 => check_propositions(&mut rng, opts),
        4 => check_direct_oracle(&mut rng, opts),
        5 => check_direct_monotonicity(opts),
        6 => check_mdp(&mut rng, opts),
        7 => check_delta(&mut rng, opts),
        8 => check_hetero(&mut rng, opts),
        9 => check_simulation(&mut rng, opts)?,
        10 => check_determinism(opts)?,
        _ => unreachable!(),
    };
    let i = usize::from(id - 1);
    Ok(CheckResult {
        id,
        name: CHECK_NAMES[i],
        passed: tally.failures == 0 && tally.instances > 0,
        instances: tally.instances,
        failures: tally.failures,
        details: tally.details,
        runtime_seconds: start.elapsed().as_secs_f64(),
        budget_seconds: CHECK_BUDGETS[i],
    })
}

fn small_error_grid_point(rng: &mut ChaCha8Rng) -> ScenarioParams {
    ScenarioParams::new(
        2,
        1,
        rng.random_range(0.05..0.95),
        rng.random_range(0.01..0.1),
        rng.random_range(0.01..0.1),
        1.0,
    )
}

/// P^I_{N,k} strictly decreasing in k. Each pair is compared in whichever
/// tail is stored exactly: P^I falls or, equivalently, P^B rises.
fn check_posterior_monotonicity(rng: &mut ChaCha8Rng, opts: &VerifyOptions) -> Tally {
    let mut t = Tally::new();
    for _ in 0..opts.posterior_grid {
        let base = small_error_grid_point(rng);
        for n in 1..=20 {
            let post: Vec<_> = (0..=n).map(|k| posterior_idle(n, k, &base).expect("k <= n")).collect();
            let ok = post.windows(2).all(|w| {
                w[1].log_likelihood_ratio < w[0].log_likelihood_ratio
                    && (w[1].p_idle_given_reports < w[0].p_idle_given_reports
                        || w[1].p_busy_given_reports > w[0].p_busy_given_reports)
            });
            t.record(ok, || format!("not decreasing: N={n} {base:?}"));
        }
    }
    t
}

fn check_condition_i(rng: &mut ChaCha8Rng, opts: &VerifyOptions) -> Tally {
    let mut t = Tally::new();
    for _ in 0..opts.condition_grid {
        let point = small_error_grid_point(rng);
        for n in 2..=20 {
            let p = point.with_total(n);
            let b = condition_i_bounds(&p);
            for (cp, inside) in [
                (b.lower_bound * 0.99, false),
                (b.lower_bound * 1.01, true),
                (b.upper_bound * 0.99, true),
                (b.upper_bound * 1.01, false),
            ] {
                let s = condition_i_semantics(&p.with_collision_penalty(cp));
                let ok = s.consistent() && s.within_bounds == inside;
                t.record(ok, || format!("N={n} C_p={cp:e} {s:?}"));
            }
        }
    }
    t
}

/// Best response against the three single-slot action classes, written out
/// from the posteriors directly.
fn check_propositions(rng: &mut ChaCha8Rng, opts: &VerifyOptions) -> Tally {
    let mut t = Tally::new();
    for _ in 0..opts.proposition_instances {
        let p = sample_region_ii(rng, &DEFAULT_RANGES);
        let m = p.n_attackers as f64;
        let mut ok = true;
        let mut why = String::new();
        for s in all_states(&p) {
            let k = s.total_busy();
            let post = posterior_idle(p.n_total, k, &p).expect("k <= n");
            let (pi, pb) = (post.p_idle_given_reports, post.p_busy_given_reports);
            let exclusive = pi - m * pb * p.collision_penalty;
            let (profile, r) = best_response(s, &p, false).expect("valid state");
            // All idle: always attack (busy report, exclusive transmission).
            // Otherwise: exclusive transmission under a busy announcement iff it pays.
            let (want_tx, want_att, want_hon) = if k == 0 || exclusive > 0.0 {
                (true, exclusive, -pb * p.collision_penalty)
            } else {
                (false, 0.0, 0.0)
            };
            let good = r.announcement.is_busy()
                && (profile.transmitters >= 1) == want_tx
                && rel_err(r.attacker_aggregate, want_att) <= 1e-12
                && rel_err(r.honest_per_su, want_hon) <= 1e-12
                && r.is_attack == want_tx;
            if !good && ok {
                ok = false;
                why = format!("{s:?} {profile:?} {r:?} expected tx={want_tx} {want_att} {want_hon} in {p:?}");
            }
        }
        t.record(ok, || why);
    }
    t
}

fn check_direct_oracle(rng: &mut ChaCha8Rng, opts: &VerifyOptions) -> Tally {
    let mut t = Tally::new();
    let factor = opts.perturb_direct_threshold.unwrap_or(1.0);
    for _ in 0..opts.direct_instances {
        let p = sample_region_ii(rng, &DEFAULT_RANGES);
        let m = p.n_attackers;
        let closed = direct_threshold(m, &p).expect("valid m").value * factor;
        match direct_threshold_oracle(m, &p) {
            Ok(oracle) => {
                let above = attacking_states(&p.with_direct_punishment(closed * 1.01), true);
                let below = attacking_states(&p.with_direct_punishment(closed * 0.99), true);
                let ok = rel_err(closed, oracle) <= 1e-9 && above == 0 && below >= 1;
                t.record(ok, || {
                    format!("closed {closed:e} oracle {oracle:e} attacks above {above} below {below} in {p:?}")
                });
            }
            Err(e) => t.record(false, || format!("oracle failed: {e} in {p:?}")),
        }
    }
    t
}

fn check_direct_monotonicity(opts: &VerifyOptions) -> Tally {
    let mut t = Tally::new();
    let th = |p: &ScenarioParams, m: usize| direct_threshold(m, p).expect("valid m").value;
    let fig4 = ScenarioParams::new(11, 1, 0.6, 0.08, 0.08, 6e10);
    let steps = opts.observation_steps.max(2);
    // Decreasing in M, increasing in N - M (N grid of the attacker-count sweep).
    for n in 3..=14 {
        let p = fig4.with_total(n);
        for m in 1..n - 1 {
            t.record(th(&p, m + 1) < th(&p, m), || format!("not decreasing in M at N={n} M={m}"));
        }
        for m in 1..n {
            let q = p.with_total(n + 1);
            t.record(th(&q, m) > th(&p, m), || format!("not increasing in N-M at N={n} M={m}"));
        }
    }
    // Increasing in P_I.
    let fig6 = fig4;
    let p_idle: Vec<f64> = (0..steps).map(|i| 0.1 + 0.8 * i as f64 / (steps - 1) as f64).collect();
    for m in 1..11 {
        for w in p_idle.windows(2) {
            let ok = th(&fig6.with_p_idle(w[1]), m) > th(&fig6.with_p_idle(w[0]), m);
            t.record(ok, || format!("not increasing in P_I at M={m} P_I={}", w[0]));
        }
    }
    // Non-increasing in C_p.
    let cps: Vec<f64> = (0..steps).map(|i| 10f64.powf(6.0 + 8.0 * i as f64 / (steps - 1) as f64)).collect();
    for m in 1..11 {
        for w in cps.windows(2) {
            let ok = th(&fig4.with_collision_penalty(w[1]), m) <= th(&fig4.with_collision_penalty(w[0]), m);
            t.record(ok, || format!("increasing in C_p at M={m} C_p={}", w[0]));
        }
    }
    t
}

fn check_mdp(rng: &mut ChaCha8Rng, opts: &VerifyOptions) -> Tally {
    let mut t = Tally::new();
    let ranges = Ranges {
        require_a4: true,
        ..DEFAULT_RANGES
    };
    // Spread the instances over Case.NT with weak and strong cooperation and Case.AT.
    let quota = opts.mdp_instances.div_ceil(3);
    let mut counts = [0usize; 3];
    let mut attempts = 0usize;
    while t.instances < opts.mdp_instances {
        attempts += 1;
        let p = sample_region_ii(rng, &ranges);
        let class = match (classify_transmission_case(&p), classify_cooperation_case(&p)) {
            (TransmissionCase::NT, CooperationCase::WC) => 0,
            (TransmissionCase::NT, CooperationCase::SC) => 1,
            (TransmissionCase::AT, _) => 2,
        };
        if counts[class] >= quota && attempts < 1_000_000 {
            continue;
        }
        counts[class] += 1;
        let lr = lr_dishonest(&p);
        let model = build_mdp(&p).expect("valid");
        let honest = model.start_value(&model.policy_value(&model.honest_policy()).expect("valid policy"));
        let z = lr.z_star.unwrap_or(0);
        let attack = model.start_value(
            &model
                .policy_value(&model.threshold_policy(Some(z)))
                .expect("valid policy"),
        );
        let scale = lr.lr_honest.abs().max(lr.lr_dishonest.abs());
        let sol = model.value_iteration(1e-11 * scale);
        let best = model.start_value(&sol.values);
        let structure = model.verify_threshold_structure(&sol.policy);
        let expected_z = if lr.attack_prevented { None } else { Some(z) };
        let mut problems = Vec::new();
        if rel_err(honest, lr.lr_honest) > 1e-8 {
            problems.push(format!("LR^H {} vs policy value {honest}", lr.lr_honest));
        }
        if rel_err(attack, lr.lr_dishonest) > 1e-8 {
            problems.push(format!("LR^DH {} vs policy value {attack}", lr.lr_dishonest));
        }
        if rel_err(best, lr.lr_honest.max(lr.lr_dishonest)) > 1e-8 {
            problems.push(format!("optimum {best} vs max(LR^H, LR^DH)"));
        }
        if !structure.holds || structure.z != expected_z {
            problems.push(format!("policy structure {structure:?}, expected z {expected_z:?}"));
        }
        if lr.post_punishment_uses_busy_states {
            problems.push("post-punishment transmission beyond the all-idle state".into());
        }
        t.record(problems.is_empty(), || format!("{} in {p:?}", problems.join("; ")));
    }
    t
}

/// Odds `(1 - delta) / delta` of an interior threshold.
fn interior_odds(p: &ScenarioParams, case: CooperationCase) -> Option<f64> {
    if classify_transmission_case(p) != TransmissionCase::NT {
        return None;
    }
    let d: DeltaThreshold = delta_threshold(p).ok()?;
    (d.cooperation_case == case && d.degeneracy.is_none()).then_some(d.odds)
}

fn check_delta(rng: &mut ChaCha8Rng, opts: &VerifyOptions) -> Tally {
    let mut t = Tally::new();
    // Closed form against bisection, where the crossing is interior.
    let ranges = Ranges {
        n: (2, 12),
        p_error: (0.05, 0.3),
        ..DEFAULT_RANGES
    };
    let mut found = 0;
    let mut sc_found = 0;
    let mut attempts = 0;
    while found < opts.delta_instances && attempts < 1_000_000 {
        attempts += 1;
        let p = sample_region_ii(rng, &ranges);
        if classify_transmission_case(&p) != TransmissionCase::NT {
            continue;
        }
        let closed = delta_threshold(&p).expect("Case.NT");
        // Keep about a third of the sample in strong cooperation.
        let sc = closed.cooperation_case == CooperationCase::SC;
        if !sc && found - sc_found >= opts.delta_instances - opts.delta_instances / 3 {
            continue;
        }
        let Ok(oracle) = delta_threshold_oracle(&p) else {
            continue;
        };
        found += 1;
        sc_found += usize::from(sc);
        t.record(closed.degeneracy.is_none() && (closed.value - oracle).abs() <= 1e-9, || {
            format!("closed {closed:?} oracle {oracle} in {p:?}")
        });
    }
    if found < opts.delta_instances {
        t.fail(format!("only {found} instances with an interior crossing"));
    }
    // Monotonicity on fixed grids.
    let errors = [(0.3, 0.3), (0.05, 0.3), (0.2, 0.2), (0.1, 0.25), (0.08, 0.08)];
    for (pf, pm) in errors {
        for pi in [0.5, 0.6, 0.7] {
            for n in 3..=12 {
                let base = ScenarioParams::new(n, 1, pi, pf, pm, 1.0);
                let b = condition_i_bounds(&base);
                let cps: Vec<f64> = (1..25)
                    .map(|i| (b.ln_lower_bound + (b.ln_upper_bound - b.ln_lower_bound) * i as f64 / 25.0).exp())
                    .collect();
                let grid = |m: usize, cp: f64| base.with_attackers(m).with_collision_penalty(cp);
                for &cp in &cps {
                    // WC: odds rise (threshold falls) with M. SC: odds fall with M.
                    for m in 1..n - 1 {
                        let (a, c) = (grid(m, cp), grid(m + 1, cp));
                        if let (Some(x), Some(y)) = (
                            interior_odds(&a, CooperationCase::WC),
                            interior_odds(&c, CooperationCase::WC),
                        ) {
                            t.record(y > x, || format!("WC not decreasing in M at {a:?}"));
                        }
                        if let (Some(x), Some(y)) = (
                            interior_odds(&a, CooperationCase::SC),
                            interior_odds(&c, CooperationCase::SC),
                        ) {
                            t.record(y < x, || format!("SC not increasing in M at {a:?}"));
                        }
                    }
                    // SC at M = N-1 is the largest SC threshold of the row
                    // (degenerate means it has reached 1).
                    let last = grid(n - 1, cp);
                    if classify_transmission_case(&last) == TransmissionCase::NT
                        && classify_cooperation_case(&last) == CooperationCase::SC
                    {
                        let top = delta_threshold(&last).expect("Case.NT").value;
                        for m in 1..n - 1 {
                            if let Some(odds) = interior_odds(&grid(m, cp), CooperationCase::SC) {
                                t.record(top >= 1.0 / (1.0 + odds), || format!("SC at M=N-1 not largest at {last:?}"));
                            }
                        }
                    }
                }
                for m in 1..n {
                    for w in cps.windows(2) {
                        let (a, c) = (grid(m, w[0]), grid(m, w[1]));
                        if let (Some(x), Some(y)) = (
                            interior_odds(&a, CooperationCase::WC),
                            interior_odds(&c, CooperationCase::WC),
                        ) {
                            t.record(y < x, || format!("WC not increasing in C_p at {a:?}"));
                        }
                        if let (Some(x), Some(y)) = (
                            interior_odds(&a, CooperationCase::SC),
                            interior_odds(&c, CooperationCase::SC),
                        ) {
                            t.record(y > x, || format!("SC not decreasing in C_p at {a:?}"));
                        }
                    }
                }
            }
        }
    }
    t
}

fn check_hetero(rng: &mut ChaCha8Rng, opts: &VerifyOptions) -> Tally {
    let mut t = Tally::new();
    let steps = opts.hetero_steps.max(2);
    let rates: Vec<f64> = (0..steps).map(|i| 0.1 * (i + 1) as f64 / steps as f64).collect();
    let fig7 = ScenarioParams::new(11, 1, 0.6, 0.05, 0.05, 1.0);
    let with = |base: &ScenarioParams, pfa: f64, pma: f64, ra: f64| {
        let mut h = HeteroParams::new(*base, pfa, pma, ra);
        let (lo, hi) = hetero_cp_bounds(&h);
        h.base.collision_penalty = (lo * hi).sqrt();
        h
    };
    // th1 binds for all error rates in (0, 0.1], honest and attacker.
    for _ in 0..steps * steps {
        let base = ScenarioParams::new(
            rng.random_range(2..=14),
            1,
            rng.random_range(0.2..0.9),
            rng.random_range(1e-3..0.1),
            rng.random_range(1e-3..0.1),
            1.0,
        );
        let h = with(&base, rng.random_range(1e-3..0.1), rng.random_range(1e-3..0.1), 1.0);
        let th = direct_threshold_hetero(&h).expect("valid");
        let max = th.th1.max(th.th2).max(th.th3);
        t.record(th.value == max && th.value == th.th1, || format!("th1 not binding: {th:?} {h:?}"));
        // The best-response oracle agrees inside the single-attacker OR region.
        match crate::direct::direct_threshold_hetero_oracle(&h) {
            Ok(o) => t.record(rel_err(o, th.value) <= 1e-9, || format!("oracle {o:e} vs {th:?} {h:?}")),
            Err(e) => t.record(false, || format!("oracle failed {e} {h:?}")),
        }
    }
    for &pfa in &rates {
        for &pma in &rates {
            let h = with(&fig7, pfa, pma, 1.0);
            let a = direct_threshold_hetero(&h).expect("valid").value;
            // Linear in r_A.
            let mut h2 = h.clone();
            h2.rate_attacker = 2.5;
            let b = direct_threshold_hetero(&h2).expect("valid").value;
            t.record(rel_err(b, 2.5 * a) <= 1e-12, || format!("not linear in r_A at {pfa} {pma}"));
            // Decreasing in both attacker error rates (same C_p).
            let mut up_f = h.clone();
            up_f.p_false_alarm_attacker = pfa * 1.05;
            let mut up_m = h.clone();
            up_m.p_missed_detection_attacker = pma * 1.05;
            let af = direct_threshold_hetero(&up_f).expect("valid").value;
            let am = direct_threshold_hetero(&up_m).expect("valid").value;
            t.record(af < a && am < a, || format!("not decreasing at {pfa} {pma}"));
        }
    }
    // Collapse to the homogeneous path when the attacker senses like everyone else.
    for &pe in &rates {
        let base = ScenarioParams::new(11, 1, 0.6, pe, pe, 1.0);
        let b = condition_i_bounds(&base);
        let base = base.with_collision_penalty((b.lower_bound * b.upper_bound).sqrt());
        let h = HeteroParams::new(base, pe, pe, 1.0);
        let hetero = direct_threshold_hetero(&h).expect("valid").value;
        let homo = direct_threshold(1, &base).expect("valid").value;
        t.record(rel_err(hetero, homo) <= 1e-12, || format!("threshold {hetero:e} vs {homo:e} at {pe}"));
        for k in 0..=10 {
            for d in [false, true] {
                let x = posterior_idle_hetero(k, d, &h).expect("valid");
                let y = posterior_idle(11, k + usize::from(d), &base).expect("valid");
                t.record(
                    rel_err(x.p_idle_given_reports, y.p_idle_given_reports) <= 1e-12
                        && rel_err(x.p_busy_given_reports, y.p_busy_given_reports) <= 1e-12,
                    || format!("posterior differs at k={k} d={d}"),
                );
            }
        }
        let attacks = hetero_attacking_states(&h, false).expect("valid");
        t.record(attacks == attacking_states(&base, false), || "attack counts differ".into());
    }
    t
}

/// Largest z-score of the empirical estimates against their references.
///
/// A collision costs up to N (C_p + C_b) but can be far rarer than one per
/// simulated budget, so each slot's reward is averaged over the channel
/// state given the sensing outcomes (`SimStats::conditional`).
fn sim_instance(config: &SimConfig) -> Result<(f64, String)> {
    let s = run_experiment(config, 0)?;
    let a = &s.analytic;
    let c = &s.conditional;
    let mut zs = Vec::new();
    if config.mode == PunishmentMode::Indirect {
        let reference = a.attacker_discounted.expect("indirect reference");
        zs.push(("attacker_discounted", c.attacker_reward_discounted.z_score(reference)));
    } else {
        zs.push((
            "attacker_per_slot",
            c.attacker_reward_per_slot.z_score(a.attacker_per_slot.expect("reference")),
        ));
        zs.push((
            "honest_per_slot",
            c.honest_reward_per_slot.z_score(a.honest_per_slot.expect("reference")),
        ));
    }
    let worst = zs.iter().cloned().fold(("", 0.0), |acc, x| if x.1 > acc.1 { x } else { acc });
    Ok((worst.1, format!("{} z={:.2}", worst.0, worst.1)))
}

fn check_simulation(rng: &mut ChaCha8Rng, opts: &VerifyOptions) -> Result<Tally> {
    let mut t = Tally::new();
    // Moderate error rates and few SUs keep collision events frequent enough
    // for the normal approximation.
    let ranges = Ranges {
        n: (3, 6),
        p_idle: (0.4, 0.8),
        p_error: (0.1, 0.3),
        discount: (0.5, 0.9),
        require_a4: true,
    };
    for mode in [PunishmentMode::None, PunishmentMode::Direct, PunishmentMode::Indirect] {
        let mut passed = 0;
        let mut notes = Vec::new();
        for i in 0..opts.sim_instances {
            let mut p = sample_region_ii(rng, &ranges);
            if mode == PunishmentMode::Direct {
                let th = direct_threshold(p.n_attackers, &p)?.value;
                p = p.with_direct_punishment(th * rng.random_range(0.5..1.5));
            }
            let mut c = SimConfig::new(SimScenario::Homogeneous(p), mode, AttackerPolicy::Optimal);
            c.base_seed = rng.random();
            if mode == PunishmentMode::Indirect {
                c.replications = opts.sim_episodes;
                c.horizon = ((1e-12f64).ln() / p.discount.ln()).ceil() as usize;
            } else {
                c.replications = 100.min(opts.sim_slots);
                c.horizon = opts.sim_slots / c.replications;
            }
            let (z, why) = sim_instance(&c)?;
            if z < 3.0 {
                passed += 1;
            } else if notes.len() < 3 {
                notes.push(format!("instance {i}: {why} in {p:?}"));
            }
        }
        // At least 95% of instances within three standard errors.
        let ok = passed * 100 >= 95 * opts.sim_instances;
        t.record(ok, || {
            format!("{mode:?}: {passed}/{} within 3 SE; {}", opts.sim_instances, notes.join("; "))
        });
        if ok && !notes.is_empty() {
            t.details.push(format!("{mode:?}: {passed}/{} within 3 SE; {}", opts.sim_instances, notes.join("; ")));
        }
    }
    Ok(t)
}

fn check_determinism(opts: &VerifyOptions) -> Result<Tally> {
    let mut t = Tally::new();
    let p = ScenarioParams::new(5, 2, 0.6, 0.2, 0.2, 1.0);
    let b = condition_i_bounds(&p);
    let p = p
        .with_collision_penalty((b.lower_bound.max(a4_bound(&p)) * b.upper_bound).sqrt())
        .with_discount(0.8);
    for (mode, policy) in [
        (PunishmentMode::None, AttackerPolicy::Optimal),
        (PunishmentMode::Direct, AttackerPolicy::Optimal),
        (PunishmentMode::Indirect, AttackerPolicy::Optimal),
        (PunishmentMode::Indirect, AttackerPolicy::Threshold { z: 2 }),
    ] {
        let mut c = SimConfig::new(SimScenario::Homogeneous(p), mode, policy);
        c.replications = opts.determinism_replications;
        c.horizon = 20_000;
        c.base_seed = opts.seed;
        c.trace_slots = 100;
        let one = run_experiment(&c, 1)?;
        let eight = run_experiment(&c, 8)?;
        let same = stats_json(&one) == stats_json(&eight) && one.trace == eight.trace;
        t.record(same, || format!("{mode:?} differs between 1 and 8 workers"));
    }
    Ok(t)
}

#[cfg(test)]
mod tests {
    use super::*;

    fn small() -> VerifyOptions {
        VerifyOptions {
            posterior_grid: 20,
            condition_grid: 20,
            proposition_instances: 10,
            direct_instances: 10,
            observation_steps: 3,
            mdp_instances: 9,
            delta_instances: 9,
            hetero_steps: 3,
            sim_instances: 3,
            sim_slots: 20_000,
            sim_episodes: 200,
            determinism_replications: 2,
            ..VerifyOptions::default()
        }
    }

    #[test]
    fn fast_checks_pass_on_small_grids() {
        for id in [1, 2, 3, 4, 5, 6, 7, 8, 10] {
            let r = run_check(id, &small()).unwrap();
            assert!(r.passed, "{r:?}");
        }
    }

    #[test]
    fn perturbation_fails_direct_check() {
        let o = VerifyOptions {
            perturb_direct_threshold: Some(1.1),
            ..small()
        };
        let r = run_check(4, &o).unwrap();
        assert!(!r.passed);
        assert_eq!(r.failures, r.instances);
    }

    #[test]
    fn empty_grid_rejected() {
        let o = VerifyOptions {
            direct_instances: 0,
            ..small()
        };
        assert!(validate_options(&o).is_err());
        assert!(validate_options(&VerifyOptions {
            checks: vec![11],
            ..small()
        })
        .is_err());
    }
}
