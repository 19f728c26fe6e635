//! Threshold scaling and the six non-preemptive policies.

use serde::{Deserialize, Serialize};

use crate::error::{Error, Result};
use crate::lp::{LpStructure, Mode};
use crate::wcp::{ModeCase, WcpSolution};

/// `m_0 = (5 + sqrt 17) / 2`.
pub fn m0() -> f64 {
    0.5 * (5.0 + 17f64.sqrt())
}

/// `zeta_bar(m)`: the threshold exponent must lie in `(1/2 - zeta_bar, 1/2)`.
pub fn zeta_bar(m: f64) -> f64 {
    if m <= m0() {
        (m - 2.0) / (4.0 * m)
    } else {
        ((m - 2.0) / (4.0 * m)).min((m * m - 5.0 * m + 2.0) / (2.0 * m * (3.0 * m - 2.0)))
    }
}

/// Moment order, threshold exponent and the resulting `Theta^n = ceil(n^a_bar)`.
#[derive(Debug, Clone, Copy, PartialEq, Serialize, Deserialize)]
pub struct ScalingPolicy {
    pub n: f64,
    pub m_moment: f64,
    pub a_bar: f64,
    pub theta_n: u64,
}

impl ScalingPolicy {
    /// `a_bar` defaults to the midpoint of the admissible interval.
    pub fn new(n: f64, m_moment: f64, a_bar: Option<f64>) -> Result<Self> {
        if !(m_moment > 2.0) {
            return Err(Error::InvalidParams(format!("moment order must exceed 2, got {m_moment}")));
        }
        if !(n >= 1.0) {
            return Err(Error::InvalidParams(format!("n must be >= 1, got {n}")));
        }
        let (lo, hi) = Self::interval(m_moment);
        let a_bar = a_bar.unwrap_or(0.5 * (lo + hi));
        if !(a_bar > lo && a_bar < hi) {
            return Err(Error::InvalidParams(format!("a_bar {a_bar} outside ({lo}, {hi})")));
        }
        Ok(ScalingPolicy { n, m_moment, a_bar, theta_n: n.powf(a_bar).ceil() as u64 })
    }

    pub fn interval(m_moment: f64) -> (f64, f64) {
        (0.5 - zeta_bar(m_moment), 0.5)
    }

    /// `Theta_hat^n = Theta^n / sqrt(n)`.
    pub fn theta_hat(&self) -> f64 {
        self.theta_n as f64 / self.n.sqrt()
    }
}

#[derive(Debug, Clone, Copy, PartialEq, Eq, Hash, Serialize, Deserialize)]
pub enum PolicyKind {
    P,
    T2,
    PP,
    T2T2,
    T1T2,
    T2T1,
}

impl PolicyKind {
    pub const ALL: [PolicyKind; 6] =
        [PolicyKind::P, PolicyKind::T2, PolicyKind::PP, PolicyKind::T2T2, PolicyKind::T1T2, PolicyKind::T2T1];

    pub fn is_dual(self) -> bool {
        !matches!(self, PolicyKind::P | PolicyKind::T2)
    }

    /// Rules in the (low, high) modes; single-mode policies use the first.
    pub fn rules(self) -> (Rule, Rule) {
        match self {
            PolicyKind::P | PolicyKind::PP => (Rule::P, Rule::P),
            PolicyKind::T2 | PolicyKind::T2T2 => (Rule::T2, Rule::T2),
            PolicyKind::T1T2 => (Rule::T1, Rule::T2),
            PolicyKind::T2T1 => (Rule::T2, Rule::T1),
        }
    }

    /// Whether the mode is re-sampled at every event (rather than only at
    /// completions of the current single-activity server).
    pub fn samples_every_event(self) -> bool {
        matches!(self, PolicyKind::T1T2 | PolicyKind::T2T1)
    }
}

impl std::fmt::Display for PolicyKind {
    fn fmt(&self, f: &mut std::fmt::Formatter<'_>) -> std::fmt::Result {
        write!(f, "{self:?}")
    }
}

impl std::str::FromStr for PolicyKind {
    type Err = Error;
    fn from_str(s: &str) -> Result<Self> {
        PolicyKind::ALL
            .into_iter()
            .find(|k| k.to_string().eq_ignore_ascii_case(s))
            .ok_or_else(|| Error::InvalidParams(format!("unknown policy {s:?}")))
    }
}

#[derive(Debug, Clone, Copy, PartialEq, Eq, Serialize, Deserialize)]
pub enum Rule {
    P,
    T1,
    T2,
}

/// Server roles in a mode: `k1` is dedicated to `i2`; `k2` prioritizes
/// according to the rule.
#[derive(Debug, Clone, Copy, PartialEq, Eq, Serialize, Deserialize)]
pub struct ModeLabels {
    pub i1: usize,
    pub i2: usize,
    pub k1: usize,
    pub k2: usize,
}

impl ModeLabels {
    pub fn of(m: &Mode) -> Self {
        ModeLabels { i1: m.i1, i2: m.i2, k1: m.k1, k2: m.k2 }
    }

    pub fn nonbasic(&self) -> (usize, usize) {
        (self.i1, self.k1)
    }
}

/// A fully specified policy: labels of the low/high modes (identical for
/// single-mode policies), rules, the switching level and workload weights.
#[derive(Debug, Clone, Copy, PartialEq, Serialize, Deserialize)]
pub struct PolicySpec {
    pub kind: PolicyKind,
    /// `[low, high]`; for single-mode policies both are the active mode.
    pub modes: [ModeLabels; 2],
    pub zstar: Option<f64>,
    pub alpha: [f64; 2],
}

impl PolicySpec {
    /// Build the policy for `kind` from the analysed system. The requested
    /// policy must be the one the case table assigns.
    pub fn from_analysis(kind: PolicyKind, lp: &LpStructure, wcp: &WcpSolution) -> Result<Self> {
        let required = required_policy(lp, wcp)?;
        if required != kind {
            return Err(Error::PolicyCaseMismatch(format!(
                "{kind} requested but the instance requires {required} ({})",
                case_condition(lp, wcp)
            )));
        }
        Ok(Self::from_analysis_unchecked(kind, lp, wcp))
    }

    /// Same as `from_analysis` without the case-table check (exploration).
    pub fn from_analysis_unchecked(kind: PolicyKind, lp: &LpStructure, wcp: &WcpSolution) -> Self {
        let (lo, hi) = match wcp.case {
            ModeCase::Single { active } => (active, active),
            ModeCase::Dual { low, high } => (low, high),
        };
        PolicySpec {
            kind,
            modes: [ModeLabels::of(lp.mode(lo)), ModeLabels::of(lp.mode(hi))],
            zstar: if kind.is_dual() { wcp.zstar() } else { None },
            alpha: lp.product_form.alpha,
        }
    }

    pub fn validate(&self) -> Result<()> {
        if self.kind.is_dual() && !self.zstar.is_some_and(|z| z > 0.0) {
            return Err(Error::InvalidParams(format!("{} needs zstar > 0", self.kind)));
        }
        if !self.alpha.iter().all(|&a| a > 0.0) {
            return Err(Error::InvalidParams("alpha must be positive".into()));
        }
        Ok(())
    }

    pub fn rule(&self, mode: usize) -> Rule {
        let (l, h) = self.kind.rules();
        if mode == 0 {
            l
        } else {
            h
        }
    }

    /// Class prioritized by the dual-activity server in `mode` given
    /// numbers in system `x`.
    #[inline]
    pub fn priority_class(&self, mode: usize, x: [u64; 2], theta: u64) -> usize {
        let m = &self.modes[mode];
        match self.rule(mode) {
            Rule::P => m.i1,
            Rule::T1 => {
                if x[m.i1] >= theta {
                    m.i1
                } else {
                    m.i2
                }
            }
            Rule::T2 => {
                if x[m.i2] >= theta {
                    m.i2
                } else {
                    m.i1
                }
            }
        }
    }
}

/// Policy assigned by the case table: single mode, `P` if `i1(A) = p` and
/// `T2` if `i2(A) = p`; dual mode, by which of `i1`, `i2` is `p` in the
/// low and high modes.
pub fn required_policy(lp: &LpStructure, wcp: &WcpSolution) -> Result<PolicyKind> {
    let p = lp.p;
    Ok(match wcp.case {
        ModeCase::Single { active } => {
            if lp.mode(active).i1 == p {
                PolicyKind::P
            } else {
                PolicyKind::T2
            }
        }
        ModeCase::Dual { low, high } => {
            let (l, h) = (lp.mode(low), lp.mode(high));
            match (l.i1 == p, h.i1 == p) {
                (true, true) => PolicyKind::PP,
                (false, false) => PolicyKind::T2T2,
                (true, false) => PolicyKind::T1T2,
                (false, true) => PolicyKind::T2T1,
            }
        }
    })
}

/// Human-readable statement of the case condition that holds.
pub fn case_condition(lp: &LpStructure, wcp: &WcpSolution) -> String {
    let p = lp.p;
    let pos = |m: &Mode| if m.i1 == p { "i1" } else { "i2" };
    match wcp.case {
        ModeCase::Single { active } => format!("single mode with {}(xi^A) = p = {p}", pos(lp.mode(active))),
        ModeCase::Dual { low, high } => {
            format!("dual mode with {}(xi^L) = {}(xi^H) = p = {p}", pos(lp.mode(low)), pos(lp.mode(high)))
        }
    }
}
