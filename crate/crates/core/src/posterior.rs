//! Conditional channel-state probabilities given sensing outcomes, and the
//! distributions of busy-report counts.
//!
//! Everything goes through the natural-log likelihood ratio
//!
//! ```text
//! L = ln(P_I / (1 - P_I)) + (n - k) ln((1 - P_f) / P_m) + k ln(P_f / (1 - P_m))
//! ```
//!
//! which stays finite long after `((1 - P_f) / P_m)^n` overflows.

use serde::{Deserialize, Serialize};

use crate::error::{Error, Result};
use crate::logmath::{count_ln, ln_choose, log_add_exp, sigmoid};
use crate::model::{HeteroParams, ScenarioParams};

/// Channel prior and per-sensor error rates.
///
/// Unlike [`ScenarioParams`] this is not validated, so the degenerate limits
/// `P_f = 0` or `P_m = 0` can be evaluated.
#[derive(Debug, Clone, Copy, PartialEq, Serialize, Deserialize)]
pub struct SensorModel {
    pub p_idle: f64,
    pub p_false_alarm: f64,
    pub p_missed_detection: f64,
}

impl SensorModel {
    pub fn prior_odds(&self) -> f64 {
        self.p_idle / (1.0 - self.p_idle)
    }

    fn ln_prior_odds(&self) -> f64 {
        self.p_idle.ln() - (1.0 - self.p_idle).ln()
    }

    /// ln Pr(reports | idle) - ln Pr(reports | busy) for `idle` idle and `busy` busy decisions.
    fn ln_evidence(&self, idle: usize, busy: usize) -> f64 {
        let idle_term = count_ln(idle, 1.0 - self.p_false_alarm) - count_ln(idle, self.p_missed_detection);
        let busy_term = count_ln(busy, self.p_false_alarm) - count_ln(busy, 1.0 - self.p_missed_detection);
        idle_term + busy_term
    }

    /// ln Pr(k busy among n | idle), binomial coefficient included.
    pub fn ln_count_given_idle(&self, n: usize, k: usize) -> f64 {
        ln_choose(n, k) + count_ln(k, self.p_false_alarm) + count_ln(n - k, 1.0 - self.p_false_alarm)
    }

    /// ln Pr(k busy among n | busy), binomial coefficient included.
    pub fn ln_count_given_busy(&self, n: usize, k: usize) -> f64 {
        ln_choose(n, k) + count_ln(k, 1.0 - self.p_missed_detection) + count_ln(n - k, self.p_missed_detection)
    }
}

#[derive(Debug, Clone, Copy, PartialEq, Serialize)]
pub struct Posterior {
    pub p_idle_given_reports: f64,
    pub p_busy_given_reports: f64,
    /// ln of Pr(idle, reports) / Pr(busy, reports), prior included.
    pub log_likelihood_ratio: f64,
}

impl Posterior {
    fn from_llr(llr: f64) -> Self {
        // The smaller of the two is computed directly and the larger as its
        // complement, so the small one keeps full relative precision.
        let (p_idle, p_busy) = if llr >= 0.0 {
            let b = sigmoid(-llr);
            (1.0 - b, b)
        } else {
            let i = sigmoid(llr);
            (i, 1.0 - i)
        };
        Self {
            p_idle_given_reports: p_idle,
            p_busy_given_reports: p_busy,
            log_likelihood_ratio: llr,
        }
    }

    /// P^I / P^B, i.e. exp of the log likelihood ratio.
    pub fn idle_busy_ratio(&self) -> f64 {
        self.log_likelihood_ratio.exp()
    }
}

/// Short field names used throughout the reward formulas.
#[derive(Debug, Clone, Copy)]
pub(crate) struct PosteriorPair {
    pub p_idle: f64,
    pub p_busy: f64,
}

impl From<Posterior> for PosteriorPair {
    fn from(p: Posterior) -> Self {
        Self {
            p_idle: p.p_idle_given_reports,
            p_busy: p.p_busy_given_reports,
        }
    }
}

/// P(idle | k of n identical sensors report busy). Rejects `k > n`.
pub fn posterior_idle(group_size: usize, busy_count: usize, params: &ScenarioParams) -> Result<Posterior> {
    posterior_idle_sensor(group_size, busy_count, &params.sensor())
}

/// As [`posterior_idle`] for an explicit, unvalidated sensor model.
pub fn posterior_idle_sensor(group_size: usize, busy_count: usize, sensor: &SensorModel) -> Result<Posterior> {
    if busy_count > group_size {
        return Err(Error::CountOutOfRange {
            busy: busy_count,
            group: group_size,
        });
    }
    let llr = sensor.ln_prior_odds() + sensor.ln_evidence(group_size - busy_count, busy_count);
    Ok(Posterior::from_llr(llr))
}

/// Infallible internal variant; callers guarantee `k <= n`.
pub(crate) fn posterior_idle_model(n: usize, k: usize, sensor: &SensorModel) -> PosteriorPair {
    debug_assert!(k <= n);
    let llr = sensor.ln_prior_odds() + sensor.ln_evidence(n - k, k);
    Posterior::from_llr(llr).into()
}

/// Posterior with `N-1` homogeneous honest sensors of which `k` report busy and
/// a single attacker whose own local decision is `attacker_report`.
pub fn posterior_idle_hetero(honest_busy_count: usize, attacker_report: bool, hparams: &HeteroParams) -> Result<Posterior> {
    let n_honest = hparams.base.n_total - 1;
    if honest_busy_count > n_honest {
        return Err(Error::CountOutOfRange {
            busy: honest_busy_count,
            group: n_honest,
        });
    }
    let honest = hparams.base.sensor();
    let attacker = hparams.attacker_sensor();
    let (a_idle, a_busy) = if attacker_report { (0, 1) } else { (1, 0) };
    let llr = honest.ln_prior_odds()
        + honest.ln_evidence(n_honest - honest_busy_count, honest_busy_count)
        + attacker.ln_evidence(a_idle, a_busy);
    Ok(Posterior::from_llr(llr))
}

/// Pr(exactly k of n sensors report busy), marginal over the channel state.
pub fn report_count_pmf(group_size: usize, busy_count: usize, params: &ScenarioParams) -> Result<f64> {
    if busy_count > group_size {
        return Err(Error::CountOutOfRange {
            busy: busy_count,
            group: group_size,
        });
    }
    Ok(count_pmf(group_size, busy_count, &params.sensor()))
}

pub(crate) fn count_pmf(n: usize, k: usize, s: &SensorModel) -> f64 {
    ln_count_pmf(n, k, s).exp()
}

pub(crate) fn ln_count_pmf(n: usize, k: usize, s: &SensorModel) -> f64 {
    log_add_exp(
        s.p_idle.ln() + s.ln_count_given_idle(n, k),
        (1.0 - s.p_idle).ln() + s.ln_count_given_busy(n, k),
    )
}

/// Joint probability of `honest_busy` busy decisions among `n_honest` honest
/// sensors and `attacker_busy` among `n_attackers` attackers (same sensor model).
pub(crate) fn joint_split_pmf(
    n_honest: usize,
    honest_busy: usize,
    n_attackers: usize,
    attacker_busy: usize,
    s: &SensorModel,
) -> f64 {
    let idle = s.p_idle.ln() + s.ln_count_given_idle(n_honest, honest_busy) + s.ln_count_given_idle(n_attackers, attacker_busy);
    let busy = (1.0 - s.p_idle).ln()
        + s.ln_count_given_busy(n_honest, honest_busy)
        + s.ln_count_given_busy(n_attackers, attacker_busy);
    log_add_exp(idle, busy).exp()
}

#[cfg(test)]
mod tests {
    use super::*;

    fn fig2() -> ScenarioParams {
        ScenarioParams::new(6, 2, 0.6, 0.08, 0.08, 20.0)
    }

    #[test]
    fn rejects_count_above_group() {
        assert!(matches!(
            posterior_idle(3, 4, &fig2()),
            Err(Error::CountOutOfRange { busy: 4, group: 3 })
        ));
        assert!(report_count_pmf(3, 4, &fig2()).is_err());
    }

    #[test]
    fn perfect_sensors_all_idle() {
        let s = SensorModel {
            p_idle: 0.6,
            p_false_alarm: 0.0,
            p_missed_detection: 0.0,
        };
        let p = posterior_idle_sensor(6, 0, &s).unwrap();
        assert_eq!(p.p_idle_given_reports, 1.0);
        assert_eq!(p.p_busy_given_reports, 0.0);
        let p = posterior_idle_sensor(6, 6, &s).unwrap();
        assert_eq!(p.p_idle_given_reports, 0.0);
    }

    #[test]
    fn single_sensor_pmf() {
        let p = fig2();
        let v = report_count_pmf(1, 1, &p).unwrap();
        let expected = 0.6 * 0.08 + 0.4 * 0.92;
        assert!((v - expected).abs() < 1e-15);
    }

    #[test]
    fn pmf_sums_to_one() {
        for n in [1usize, 6, 30, 61, 200] {
            let total: f64 = (0..=n).map(|k| report_count_pmf(n, k, &fig2()).unwrap()).sum();
            assert!((total - 1.0).abs() < 1e-12, "n={n} total={total}");
        }
    }

    #[test]
    fn joint_split_marginalizes_to_count_pmf() {
        let s = fig2().sensor();
        for k in 0..=6 {
            let mut total = 0.0;
            for h in 0..=4usize {
                for a in 0..=2usize {
                    if h + a == k {
                        total += joint_split_pmf(4, h, 2, a, &s);
                    }
                }
            }
            assert!((total - count_pmf(6, k, &s)).abs() < 1e-15);
        }
    }

    #[test]
    fn complement_is_exact() {
        for k in 0..=6 {
            let p = posterior_idle(6, k, &fig2()).unwrap();
            assert_eq!(p.p_idle_given_reports + p.p_busy_given_reports, 1.0);
        }
    }

    #[test]
    fn hetero_rejects_out_of_range() {
        let h = HeteroParams::new(ScenarioParams::new(11, 1, 0.6, 0.05, 0.05, 1.0), 0.05, 0.05, 1.0);
        assert!(posterior_idle_hetero(10, true, &h).is_ok());
        assert!(posterior_idle_hetero(11, false, &h).is_err());
    }
}
