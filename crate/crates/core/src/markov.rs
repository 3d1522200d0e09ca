//! Stationary analysis of the private-lead state machine and its revenue algebra.
//!
//! State `k` is the number of heights by which the withheld branch leads the
//! public one. From state 0 the attacker opens a lead with probability `p0`;
//! from any `k >= 1` the lead grows with `p2` and shrinks with `p3`. This is a
//! birth-death chain whose stationary law is geometric beyond state 1:
//!
//! ```text
//! q0 = (p3 - p2) / (p3 - p2 + p0)
//! q1 = (p0 / p3) * q0
//! qk = q1 * (p2 / p3)^(k-1)        k >= 1
//! ```
//!
//! All revenues are in units of the fixed block reward.

use serde::{Deserialize, Serialize};

use crate::error::{Error, Result};
use crate::probmodel::{derive_transition_probs, validate_gamma, MiningParams};

/// Per-round transition probabilities.
///
/// * `p0` - both sides on the same tip and the attacker alone finds a header
/// * `p1` - both sides find a header on their own branch
/// * `p2` - the attacker alone extends its private branch
/// * `p3` - the honest side alone extends the public branch
#[derive(Debug, Clone, Copy, PartialEq, Serialize, Deserialize)]
pub struct TransitionProbs {
    pub p0: f64,
    pub p1: f64,
    pub p2: f64,
    pub p3: f64,
}

impl TransitionProbs {
    pub fn validate(&self) -> Result<()> {
        for (name, p) in [
            ("p0", self.p0),
            ("p1", self.p1),
            ("p2", self.p2),
            ("p3", self.p3),
        ] {
            if !(0.0..=1.0).contains(&p) {
                return Err(Error::param(format!("{name} must lie in [0,1], got {p}")));
            }
        }
        // one ulp of slack: p1+p2+p3 is a partition of a round minus the idle event
        if self.p1 + self.p2 + self.p3 > 1.0 + 4.0 * f64::EPSILON {
            return Err(Error::param(format!(
                "p1+p2+p3 must not exceed 1, got {}",
                self.p1 + self.p2 + self.p3
            )));
        }
        Ok(())
    }

    fn require_stationary(&self) -> Result<()> {
        self.validate()?;
        if self.p3 == 0.0 && self.p2 == 0.0 {
            return Err(Error::param("p3 must be positive"));
        }
        if self.p2 >= self.p3 {
            return Err(Error::DivergentLead {
                p2: self.p2,
                p3: self.p3,
            });
        }
        Ok(())
    }
}

#[derive(Debug, Clone, Copy, PartialEq, Serialize, Deserialize)]
pub struct StationaryDist {
    pub q0: f64,
    pub q1: f64,
    /// Geometric decay `p2 / p3` of the lead distribution beyond state 1.
    pub rho: f64,
    /// `1 - rho`, computed as `(p3 - p2) / p3` so it stays accurate as `rho -> 1`.
    pub one_minus_rho: f64,
}

impl StationaryDist {
    pub fn q_at(&self, k: usize) -> f64 {
        q_at(self, k)
    }

    /// Mass of states `k >= 3`, summed in closed form.
    pub fn tail_from_three(&self) -> f64 {
        if self.q1 == 0.0 {
            return 0.0;
        }
        self.q1 * self.rho * self.rho / self.one_minus_rho
    }

    /// `q0 + sum_{k>=1} q_k`; equals one up to rounding.
    pub fn total_mass(&self) -> f64 {
        self.q0 + self.q1 / self.one_minus_rho
    }
}

#[derive(Debug, Clone, Copy, PartialEq, Serialize, Deserialize)]
pub struct RevenueReport {
    pub r_a: f64,
    pub r_b: f64,
    pub ratio: f64,
    pub profitable: bool,
}

/// Everything the analytic pipeline computes for one parameter point.
#[derive(Debug, Clone, Copy, PartialEq, Serialize, Deserialize)]
pub struct Analysis {
    pub params: MiningParams,
    pub probs: TransitionProbs,
    pub dist: StationaryDist,
    pub report: RevenueReport,
}

pub fn stationary(probs: &TransitionProbs) -> Result<StationaryDist> {
    probs.require_stationary()?;
    let TransitionProbs { p0, p2, p3, .. } = *probs;
    let gap = p3 - p2;
    let q0 = gap / (gap + p0);
    let q1 = p0 / p3 * q0;
    Ok(StationaryDist {
        q0,
        q1,
        rho: p2 / p3,
        one_minus_rho: gap / p3,
    })
}

pub fn q_at(dist: &StationaryDist, k: usize) -> f64 {
    match k {
        0 => dist.q0,
        _ => {
            let exp = i32::try_from(k - 1).unwrap_or(i32::MAX);
            dist.q1 * dist.rho.powi(exp)
        }
    }
}

/// Revenue rates `(r_a, r_b)` per round.
///
/// The selfish pool earns `gamma` on a tie resolved from state 1, two blocks
/// when the honest side catches up to within one from state 2, and one block
/// for each honest step while the lead is at least 3. The honest side is only
/// credited with tie races it wins; `gamma = 0.5` gives the even split.
pub fn revenue_rates(dist: &StationaryDist, probs: &TransitionProbs, gamma: f64) -> (f64, f64) {
    let p3 = probs.p3;
    let q2 = q_at(dist, 2);
    let r_a = (gamma * dist.q1 + 2.0 * q2 + dist.tail_from_three()) * p3;
    let r_b = (1.0 - gamma) * dist.q1 * p3;
    (r_a, r_b)
}

/// Selfish share of counted revenue, `1 - 2(1-gamma)q1 / (2 - 2q0 + 2q2)`.
///
/// Returns 0 when no lead is ever opened (`q0 = 1`), where the share is 0/0.
pub fn revenue_ratio(dist: &StationaryDist, gamma: f64) -> f64 {
    let denom = 2.0 - 2.0 * dist.q0 + 2.0 * q_at(dist, 2);
    if denom <= 0.0 {
        return 0.0;
    }
    (1.0 - 2.0 * (1.0 - gamma) * dist.q1 / denom).clamp(0.0, 1.0)
}

pub fn analyze(params: &MiningParams) -> Result<Analysis> {
    let probs = derive_transition_probs(params)?;
    let dist = stationary(&probs)?;
    let (r_a, r_b) = revenue_rates(&dist, &probs, params.gamma);
    let ratio = revenue_ratio(&dist, params.gamma);
    Ok(Analysis {
        params: *params,
        probs,
        dist,
        report: RevenueReport {
            r_a,
            r_b,
            ratio,
            profitable: ratio > params.alpha,
        },
    })
}

/// Selfish mining is profitable when its revenue share exceeds the power
/// share `alpha` an honest miner would earn.
pub fn is_profitable(params: &MiningParams) -> Result<RevenueReport> {
    analyze(params).map(|a| a.report)
}

/// Analytic ratio for the given point, with the 0/0 convention applied.
pub fn analytic_ratio(params: &MiningParams) -> Result<f64> {
    validate_gamma(params.gamma)?;
    analyze(params).map(|a| a.report.ratio)
}

pub const ORACLE_TOLERANCE: f64 = 1e-14;
pub const ORACLE_MAX_ITERATIONS: usize = 20_000_000;

/// Stationary vector of the lead chain truncated at state `max_state`,
/// found by power iteration on the explicit transition matrix.
///
/// State `max_state` reflects: its up-move folds into the self-loop. The
/// iteration starts from the uniform vector and stops once the L1 fixed-point
/// residual `|pi P - pi|` drops below [`ORACLE_TOLERANCE`], or fails after
/// [`ORACLE_MAX_ITERATIONS`] steps. The result is independent of the closed form.
pub fn stationary_truncated_oracle(probs: &TransitionProbs, max_state: usize) -> Result<Vec<f64>> {
    probs.require_stationary()?;
    if max_state < 2 {
        return Err(Error::param(format!(
            "truncation must be at least 2, got {max_state}"
        )));
    }
    let matrix = TridiagonalChain::build(probs, max_state);
    matrix.power_iterate(ORACLE_TOLERANCE, ORACLE_MAX_ITERATIONS)
}

/// Row-stochastic matrix of the truncated chain, stored by band.
/// Row `k` has mass `down[k]` at `k-1`, `stay[k]` at `k`, `up[k]` at `k+1`.
#[derive(Debug, Clone)]
struct TridiagonalChain {
    down: Vec<f64>,
    stay: Vec<f64>,
    up: Vec<f64>,
}

impl TridiagonalChain {
    fn build(probs: &TransitionProbs, max_state: usize) -> Self {
        let n = max_state + 1;
        let mut down = vec![0.0; n];
        let mut stay = vec![0.0; n];
        let mut up = vec![0.0; n];
        for k in 0..n {
            let (d, u) = match k {
                0 => (0.0, probs.p0),
                _ if k == max_state => (probs.p3, 0.0),
                _ => (probs.p3, probs.p2),
            };
            down[k] = d;
            up[k] = u;
            stay[k] = 1.0 - d - u;
        }
        TridiagonalChain { down, stay, up }
    }

    fn len(&self) -> usize {
        self.stay.len()
    }

    /// `out = pi * P`
    fn left_multiply(&self, pi: &[f64], out: &mut [f64]) {
        let n = self.len();
        for j in 0..n {
            let mut acc = pi[j] * self.stay[j];
            if j > 0 {
                acc += pi[j - 1] * self.up[j - 1];
            }
            if j + 1 < n {
                acc += pi[j + 1] * self.down[j + 1];
            }
            out[j] = acc;
        }
    }

    fn power_iterate(&self, tol: f64, max_iter: usize) -> Result<Vec<f64>> {
        let n = self.len();
        let mut pi = vec![1.0 / n as f64; n];
        let mut next = vec![0.0; n];
        let mut residual = f64::INFINITY;
        for _ in 0..max_iter {
            self.left_multiply(&pi, &mut next);
            // lazy step: same fixed point, immune to period-2 oscillation
            for (x, y) in next.iter_mut().zip(&pi) {
                *x = 0.5 * (*x + y);
            }
            let total: f64 = next.iter().sum();
            residual = 0.0;
            for (x, y) in next.iter_mut().zip(&pi) {
                *x /= total;
                residual += (*x - y).abs();
            }
            std::mem::swap(&mut pi, &mut next);
            // lazy step halves the raw residual |pi P - pi|
            if 2.0 * residual < tol {
                return Ok(pi);
            }
        }
        Err(Error::NoConvergence {
            iterations: max_iter,
            residual: 2.0 * residual,
        })
    }
}

#[cfg(test)]
mod tests {
    use super::*;

    const GOLDEN: TransitionProbs = TransitionProbs {
        p0: 0.2,
        p1: 0.1,
        p2: 0.2,
        p3: 0.4,
    };

    fn golden() -> StationaryDist {
        stationary(&GOLDEN).unwrap()
    }

    #[test]
    fn golden_stationary() {
        let d = golden();
        assert!((d.q0 - 0.5).abs() < 1e-15);
        assert!((d.q1 - 0.25).abs() < 1e-15);
        assert!((d.rho - 0.5).abs() < 1e-15);
        assert!((d.q_at(2) - 0.125).abs() < 1e-15);
        assert!((d.q_at(3) - 0.0625).abs() < 1e-15);
        assert!((d.total_mass() - 1.0).abs() < 1e-15);
    }

    #[test]
    fn no_lead_ever_opened() {
        let d = stationary(&TransitionProbs {
            p0: 0.0,
            p1: 0.0,
            p2: 0.1,
            p3: 0.4,
        })
        .unwrap();
        assert_eq!(d.q0, 1.0);
        assert_eq!(d.q1, 0.0);
        assert_eq!(revenue_rates(&d, &GOLDEN, 0.3), (0.0, 0.0));
        assert_eq!(revenue_ratio(&d, 0.5), 0.0);
        assert_eq!(revenue_ratio(&d, 1.0), 0.0);
    }

    #[test]
    fn boundary_is_divergent() {
        let err = stationary(&TransitionProbs {
            p0: 0.2,
            p1: 0.0,
            p2: 0.4,
            p3: 0.4,
        })
        .unwrap_err();
        assert!(matches!(err, Error::DivergentLead { .. }));
    }

    #[test]
    fn zero_p3_is_rejected() {
        let err = stationary(&TransitionProbs {
            p0: 0.2,
            p1: 0.0,
            p2: 0.0,
            p3: 0.0,
        })
        .unwrap_err();
        assert!(matches!(err, Error::InvalidParam(_)));
    }

    #[test]
    fn q_at_tail() {
        let d = golden();
        assert_eq!(q_at(&d, 0), d.q0);
        let far = q_at(&d, 60);
        assert!(far <= 0.5f64.powi(60) * 0.5 && far < 1e-15);
    }

    #[test]
    fn golden_revenues() {
        let d = golden();
        let (ra, rb) = revenue_rates(&d, &GOLDEN, 0.5);
        // 0.05 + 0.1 + 0.05: tie share, lead-2 catch-up, deep-lead steps
        assert!((ra - 0.2).abs() < 1e-15);
        assert!((rb - 0.05).abs() < 1e-15);
        assert!((ra / (ra + rb) - revenue_ratio(&d, 0.5)).abs() < 1e-15);
        let (ra, rb) = revenue_rates(&d, &GOLDEN, 0.0);
        assert!((ra - 0.15).abs() < 1e-15);
        assert!((rb - 0.1).abs() < 1e-15);
    }

    #[test]
    fn golden_ratio() {
        let d = golden();
        assert!((revenue_ratio(&d, 0.5) - 0.8).abs() < 1e-15);
        assert!((revenue_ratio(&d, 0.0) - 0.6).abs() < 1e-15);
        // unsimplified form at the even split
        let q2 = d.q_at(2);
        let direct = (2.0 - 2.0 * d.q0 - d.q1 + 2.0 * q2) / (2.0 - 2.0 * d.q0 + 2.0 * q2);
        assert!((revenue_ratio(&d, 0.5) - direct).abs() < 1e-15);
    }

    #[test]
    fn profitability_pipeline() {
        let r = is_profitable(&MiningParams::new(0.3, 1.0, 0.5).unwrap()).unwrap();
        assert!((r.ratio - 0.732919190793815).abs() < 1e-9);
        assert!(r.profitable);

        let r = is_profitable(&MiningParams::new(0.15, 2.0, 0.0).unwrap()).unwrap();
        assert!((r.ratio - 0.140178528701864).abs() < 1e-9);
        assert!(!r.profitable);

        let err = is_profitable(&MiningParams::new(0.5, 1.0, 0.5).unwrap()).unwrap_err();
        assert!(matches!(err, Error::DivergentLead { .. }));
    }

    #[test]
    fn oracle_matches_golden() {
        let pi = stationary_truncated_oracle(&GOLDEN, 64).unwrap();
        let d = golden();
        let worst = pi
            .iter()
            .enumerate()
            .map(|(k, &p)| (p - d.q_at(k)).abs())
            .fold(0.0, f64::max);
        assert!(worst <= 1e-12, "L_inf = {worst:e}");
    }

    #[test]
    fn oracle_absorbs_at_zero() {
        let probs = TransitionProbs {
            p0: 0.0,
            p1: 0.0,
            p2: 0.1,
            p3: 0.4,
        };
        let pi = stationary_truncated_oracle(&probs, 8).unwrap();
        assert_eq!(pi.len(), 9);
        assert!((pi[0] - 1.0).abs() < 1e-12);
        assert!(pi[1..].iter().all(|&p| p.abs() < 1e-12));
    }

    #[test]
    fn oracle_slow_decay() {
        let probs = TransitionProbs {
            p0: 0.3,
            p1: 0.1,
            p2: 0.27,
            p3: 0.3,
        };
        let pi = stationary_truncated_oracle(&probs, 400).unwrap();
        let d = stationary(&probs).unwrap();
        assert!((d.rho - 0.9).abs() < 1e-12);
        let worst = pi
            .iter()
            .enumerate()
            .map(|(k, &p)| (p - d.q_at(k)).abs())
            .fold(0.0, f64::max);
        assert!(worst <= 1e-10, "L_inf = {worst:e}");
    }

    #[test]
    fn oracle_periodic_chain_converges() {
        // p0 = 1 and no self-loop above 0: the raw chain has period 2
        let probs = TransitionProbs {
            p0: 1.0,
            p1: 0.0,
            p2: 0.3,
            p3: 0.7,
        };
        let pi = stationary_truncated_oracle(&probs, 60).unwrap();
        let d = stationary(&probs).unwrap();
        for (k, &p) in pi.iter().enumerate() {
            assert!((p - d.q_at(k)).abs() < 1e-11);
        }
    }

    #[test]
    fn oracle_rejects_small_truncation() {
        assert!(matches!(
            stationary_truncated_oracle(&GOLDEN, 1),
            Err(Error::InvalidParam(_))
        ));
        assert!(matches!(
            stationary_truncated_oracle(
                &TransitionProbs {
                    p0: 0.1,
                    p1: 0.0,
                    p2: 0.5,
                    p3: 0.4
                },
                10
            ),
            Err(Error::DivergentLead { .. })
        ));
    }
}
