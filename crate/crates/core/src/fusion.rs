//! The fusion center's n-out-of-N rule and the range of `C_p` in which the
//! OR rule is the best rule for every SU.

use serde::{Deserialize, Serialize};

use crate::error::{Error, Result};
use crate::model::ScenarioParams;
use crate::posterior::posterior_idle_model;

#[derive(Debug, Clone, Copy, PartialEq, Eq, Hash, Serialize, Deserialize)]
pub enum Announcement {
    /// Channel idle, SUs may transmit.
    H0,
    /// Channel busy.
    H1,
}

impl Announcement {
    pub fn is_busy(self) -> bool {
        self == Announcement::H1
    }
}

impl std::fmt::Display for Announcement {
    fn fmt(&self, f: &mut std::fmt::Formatter<'_>) -> std::fmt::Result {
        f.write_str(match self {
            Announcement::H0 => "H0",
            Announcement::H1 => "H1",
        })
    }
}

/// Announce busy iff at least `threshold` of `group_size` reports are busy.
pub fn fuse(busy_report_count: usize, group_size: usize, threshold: usize) -> Result<Announcement> {
    if threshold < 1 || threshold > group_size {
        return Err(Error::ThresholdOutOfRange {
            threshold,
            group: group_size,
        });
    }
    if busy_report_count > group_size {
        return Err(Error::CountOutOfRange {
            busy: busy_report_count,
            group: group_size,
        });
    }
    Ok(if busy_report_count >= threshold {
        Announcement::H1
    } else {
        Announcement::H0
    })
}

/// OR rule: busy iff any report is busy.
pub fn fuse_or(busy_report_count: usize) -> Announcement {
    if busy_report_count >= 1 {
        Announcement::H1
    } else {
        Announcement::H0
    }
}

#[derive(Debug, Clone, Copy, PartialEq, Eq, Serialize, Deserialize)]
pub enum Region {
    /// Penalty too small: SUs would transmit even after a busy report.
    I,
    /// OR rule optimal.
    II,
    /// Penalty too large: SUs would not transmit even when all report idle.
    III,
}

/// Bounds of the OR-rule optimality interval for `C_p`, and where the
/// scenario's own `C_p` falls.
#[derive(Debug, Clone, Copy, PartialEq, Serialize)]
pub struct CpRegion {
    pub lower_bound: f64,
    pub upper_bound: f64,
    pub ln_lower_bound: f64,
    pub ln_upper_bound: f64,
    pub region: Region,
    /// `C_p` sits exactly on one of the bounds (reported as region I or III).
    pub boundary: bool,
}

impl CpRegion {
    pub fn classify(&self, cp: f64) -> (Region, bool) {
        if cp <= self.lower_bound {
            (Region::I, cp == self.lower_bound)
        } else if cp < self.upper_bound {
            (Region::II, false)
        } else {
            (Region::III, cp == self.upper_bound)
        }
    }
}

/// `[P_I/(1-P_I)] ((1-P_f)/P_m)^N` in log form.
pub(crate) fn ln_prefactor(n: usize, params: &ScenarioParams) -> f64 {
    let s = params.sensor();
    (s.p_idle.ln() - (1.0 - s.p_idle).ln())
        + n as f64 * ((1.0 - s.p_false_alarm).ln() - s.p_missed_detection.ln())
}

/// `ln q` with `q = P_f P_m / ((1-P_f)(1-P_m))`.
pub(crate) fn ln_q(params: &ScenarioParams) -> f64 {
    let s = params.sensor();
    s.p_false_alarm.ln() + s.p_missed_detection.ln()
        - (1.0 - s.p_false_alarm).ln()
        - (1.0 - s.p_missed_detection).ln()
}

pub fn condition_i_bounds(params: &ScenarioParams) -> CpRegion {
    let n = params.n_total;
    let ln_rate = params.total_rate.ln();
    let ln_upper = ln_prefactor(n, params) - (n as f64).ln() + ln_rate;
    let ln_lower = ln_upper + ln_q(params);
    let mut out = CpRegion {
        lower_bound: ln_lower.exp(),
        upper_bound: ln_upper.exp(),
        ln_lower_bound: ln_lower,
        ln_upper_bound: ln_upper,
        region: Region::II,
        boundary: false,
    };
    let (region, boundary) = out.classify(params.collision_penalty);
    out.region = region;
    out.boundary = boundary;
    out
}

/// Per-SU shared-transmission reward signs behind the bounds.
#[derive(Debug, Clone, Copy, PartialEq, Serialize)]
pub struct ConditionISemantics {
    /// Sharing pays when every report is idle.
    pub all_idle_positive: bool,
    /// Sharing loses after one busy report.
    pub one_busy_negative: bool,
    pub within_bounds: bool,
}

impl ConditionISemantics {
    pub fn consistent(&self) -> bool {
        self.within_bounds == (self.all_idle_positive && self.one_busy_negative)
    }
}

/// Evaluate both sharing inequalities directly from the posteriors and compare
/// with the closed-form interval.
pub fn condition_i_semantics(params: &ScenarioParams) -> ConditionISemantics {
    let p = params.at_unit_rate();
    let n = p.n_total;
    let nf = n as f64;
    let s = p.sensor();
    let k0 = posterior_idle_model(n, 0, &s);
    let k1 = posterior_idle_model(n, 1, &s);
    let cp = p.collision_penalty;
    ConditionISemantics {
        all_idle_positive: k0.p_idle / nf - k0.p_busy * cp > 0.0,
        one_busy_negative: k1.p_idle / nf - k1.p_busy * cp < 0.0,
        within_bounds: condition_i_bounds(params).region == Region::II,
    }
}

pub fn check_condition_i_semantics(params: &ScenarioParams) -> bool {
    condition_i_semantics(params).consistent()
}

#[cfg(test)]
mod tests {
    use super::*;

    #[test]
    fn or_rule() {
        assert_eq!(fuse(0, 6, 1).unwrap(), Announcement::H0);
        assert_eq!(fuse(1, 6, 1).unwrap(), Announcement::H1);
        assert_eq!(fuse(5, 6, 6).unwrap(), Announcement::H0);
        assert_eq!(fuse(6, 6, 6).unwrap(), Announcement::H1);
        for c in 0..=6 {
            assert_eq!(fuse(c, 6, 1).unwrap(), fuse_or(c));
        }
    }

    #[test]
    fn rejects_bad_threshold() {
        assert!(matches!(fuse(0, 6, 0), Err(Error::ThresholdOutOfRange { .. })));
        assert!(matches!(fuse(0, 6, 7), Err(Error::ThresholdOutOfRange { .. })));
        assert!(matches!(fuse(7, 6, 1), Err(Error::CountOutOfRange { .. })));
    }

    #[test]
    fn bounds_increase_with_n() {
        let base = ScenarioParams::new(2, 1, 0.6, 0.08, 0.08, 1.0);
        let mut prev = condition_i_bounds(&base);
        for n in 3..=14 {
            let b = condition_i_bounds(&base.with_total(n));
            assert!(b.lower_bound > prev.lower_bound && b.upper_bound > prev.upper_bound);
            assert!(b.lower_bound < b.upper_bound);
            prev = b;
        }
    }

    #[test]
    fn boundary_flag() {
        let p = ScenarioParams::new(6, 2, 0.6, 0.08, 0.08, 1.0);
        let b = condition_i_bounds(&p);
        assert_eq!(b.classify(b.lower_bound), (Region::I, true));
        assert_eq!(b.classify(b.upper_bound), (Region::III, true));
        assert_eq!(b.classify(b.lower_bound * 2.0), (Region::II, false));
        assert_eq!(b.classify(0.0), (Region::I, false));
    }

    #[test]
    fn semantics_inside_and_outside() {
        let p = ScenarioParams::new(6, 2, 0.6, 0.08, 0.08, 1e4);
        let s = condition_i_semantics(&p);
        assert!(s.within_bounds && s.all_idle_positive && s.one_busy_negative);
        let s = condition_i_semantics(&p.with_collision_penalty(100.0));
        assert!(!s.one_busy_negative && s.consistent());
        let s = condition_i_semantics(&p.with_collision_penalty(1e7));
        assert!(!s.all_idle_positive && s.consistent());
    }

    #[test]
    fn rate_scales_bounds() {
        let p = ScenarioParams::new(6, 2, 0.6, 0.08, 0.08, 1e4);
        let a = condition_i_bounds(&p);
        let b = condition_i_bounds(&p.with_rate(3.0));
        assert!((b.upper_bound / a.upper_bound - 3.0).abs() < 1e-12);
        assert!((b.lower_bound / a.lower_bound - 3.0).abs() < 1e-12);
    }
}
