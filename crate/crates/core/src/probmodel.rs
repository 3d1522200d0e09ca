//! Mapping from protocol parameters to per-round mining probabilities.
//!
//! Header discoveries within one round (a tenure plus a constant propagation
//! window) are modeled as a Poisson process with intensity `lambda`, split
//! between the attacker and the honest miners in proportion to their power.
//! Only whether a pool finds *at least one* header matters: a second header by
//! the same pool in the same round gives it no extra lead.

use serde::{Deserialize, Serialize};

use crate::error::{Error, Result};
use crate::markov::TransitionProbs;

/// Attacker share, header intensity per round and fork tie-break probability.
#[derive(Debug, Clone, Copy, PartialEq, Serialize, Deserialize)]
pub struct MiningParams {
    pub alpha: f64,
    pub lambda: f64,
    /// Probability that the selfish branch wins a same-height fork race.
    /// 0.5 is the even split; 0 means the diversity rule always favors the
    /// public branch.
    pub gamma: f64,
}

impl MiningParams {
    pub fn new(alpha: f64, lambda: f64, gamma: f64) -> Result<Self> {
        let params = MiningParams {
            alpha,
            lambda,
            gamma,
        };
        params.validate()?;
        Ok(params)
    }

    pub fn validate(&self) -> Result<()> {
        if !(self.alpha > 0.0 && self.alpha < 1.0) {
            return Err(Error::param(format!(
                "alpha must lie in (0,1), got {}",
                self.alpha
            )));
        }
        if !(self.lambda > 0.0 && self.lambda.is_finite()) {
            return Err(Error::param(format!(
                "lambda must be positive and finite, got {}",
                self.lambda
            )));
        }
        validate_gamma(self.gamma)
    }
}

pub(crate) fn validate_gamma(gamma: f64) -> Result<()> {
    if (0.0..=1.0).contains(&gamma) {
        Ok(())
    } else {
        Err(Error::param(format!(
            "gamma must lie in [0,1], got {gamma}"
        )))
    }
}

/// Tenure length (s), header difficulty (expected hashes) and network hashrate (H/s).
#[derive(Debug, Clone, Copy, PartialEq, Serialize, Deserialize)]
pub struct ProtocolParams {
    pub tenure: f64,
    pub difficulty: f64,
    pub hashrate: f64,
}

impl ProtocolParams {
    pub fn validate(&self) -> Result<()> {
        for (name, v) in [
            ("tenure", self.tenure),
            ("difficulty", self.difficulty),
            ("hashrate", self.hashrate),
        ] {
            if !(v > 0.0 && v.is_finite()) {
                return Err(Error::param(format!(
                    "{name} must be positive and finite, got {v}"
                )));
            }
        }
        Ok(())
    }
}

/// Probabilities that each side finds at least one header in a round.
#[derive(Debug, Clone, Copy, PartialEq, Serialize, Deserialize)]
pub struct RoundProbs {
    pub p_attacker: f64,
    pub p_honest: f64,
}

/// Expected header discoveries per round: `tenure * hashrate / difficulty`.
pub fn lambda_from_protocol(proto: &ProtocolParams) -> Result<f64> {
    proto.validate()?;
    Ok(proto.tenure * proto.hashrate / proto.difficulty)
}

pub fn round_success_probs(params: &MiningParams) -> Result<RoundProbs> {
    params.validate()?;
    // -expm1(-x) == 1 - exp(-x) without cancellation at small x
    Ok(RoundProbs {
        p_attacker: -(-params.alpha * params.lambda).exp_m1(),
        p_honest: -(-(1.0 - params.alpha) * params.lambda).exp_m1(),
    })
}

/// The four per-round transition probabilities of the lead state machine.
///
/// The two pools mine independently within a round, so:
/// `p0 = p2 = pA(1-pB)`, `p1 = pA*pB`, `p3 = (1-pA)pB`. The remaining mass
/// `(1-pA)(1-pB)` is the no-event self-loop.
pub fn derive_transition_probs(params: &MiningParams) -> Result<TransitionProbs> {
    let RoundProbs {
        p_attacker: pa,
        p_honest: pb,
    } = round_success_probs(params)?;
    let attacker_only = pa * (1.0 - pb);
    Ok(TransitionProbs {
        p0: attacker_only,
        p1: pa * pb,
        p2: attacker_only,
        p3: (1.0 - pa) * pb,
    })
}

/// Multiple-headers-per-round mitigation: honest miners can build on any
/// announced header, so a withheld macroblock no longer costs them a height.
/// Modeled as scaling the header intensity and giving every same-height race
/// to the public branch.
pub fn apply_fix(params: &MiningParams, header_multiplier: f64) -> Result<MiningParams> {
    params.validate()?;
    if !(header_multiplier >= 1.0 && header_multiplier.is_finite()) {
        return Err(Error::param(format!(
            "header multiplier must be >= 1, got {header_multiplier}"
        )));
    }
    Ok(MiningParams {
        alpha: params.alpha,
        lambda: params.lambda * header_multiplier,
        gamma: 0.0,
    })
}

#[cfg(test)]
mod tests {
    use super::*;

    fn close(a: f64, b: f64, tol: f64) -> bool {
        (a - b).abs() <= tol
    }

    #[test]
    fn lambda_is_tenure_times_hashrate_over_difficulty() {
        let base = ProtocolParams {
            tenure: 60.0,
            difficulty: 6e7,
            hashrate: 1e6,
        };
        assert_eq!(lambda_from_protocol(&base).unwrap(), 1.0);
        let longer = ProtocolParams {
            tenure: 120.0,
            ..base
        };
        assert_eq!(lambda_from_protocol(&longer).unwrap(), 2.0);
        let faster = ProtocolParams {
            hashrate: 2e6,
            ..base
        };
        assert_eq!(lambda_from_protocol(&faster).unwrap(), 2.0);
    }

    #[test]
    fn protocol_fields_must_be_positive() {
        let bad = ProtocolParams {
            tenure: 0.0,
            difficulty: 1.0,
            hashrate: 1.0,
        };
        assert!(matches!(
            lambda_from_protocol(&bad),
            Err(Error::InvalidParam(_))
        ));
        let bad = ProtocolParams {
            tenure: 1.0,
            difficulty: -1.0,
            hashrate: 1.0,
        };
        assert!(lambda_from_protocol(&bad).is_err());
    }

    #[test]
    fn round_probs_quarter_attacker() {
        let rp = round_success_probs(&MiningParams::new(0.25, 1.0, 0.5).unwrap()).unwrap();
        assert!(close(rp.p_attacker, 0.221199216928595, 1e-12));
        assert!(close(rp.p_honest, 0.527633447258985, 1e-12));
    }

    #[test]
    fn round_probs_vanish_with_lambda() {
        let rp = round_success_probs(&MiningParams::new(0.5, 1e-12, 0.5).unwrap()).unwrap();
        assert!(rp.p_attacker < 1e-12 && rp.p_honest < 1e-12);
        assert!(rp.p_attacker > 0.0);
    }

    #[test]
    fn symmetric_split() {
        let rp = round_success_probs(&MiningParams::new(0.5, 2.0, 0.5).unwrap()).unwrap();
        assert_eq!(rp.p_attacker, rp.p_honest);
        assert!(close(rp.p_attacker, 1.0 - (-1.0f64).exp(), 1e-15));
    }

    #[test]
    fn transition_probs_quarter_attacker() {
        let tp = derive_transition_probs(&MiningParams::new(0.25, 1.0, 0.5).unwrap()).unwrap();
        assert_eq!(tp.p0, tp.p2);
        assert!(close(tp.p0, 0.104487111569572, 1e-12));
        assert!(close(tp.p1, 0.116712105359023, 1e-12));
        assert!(close(tp.p3, 0.410921341899963, 1e-12));
    }

    #[test]
    fn transition_probs_symmetric_boundary() {
        let tp = derive_transition_probs(&MiningParams::new(0.5, 2.0, 0.5).unwrap()).unwrap();
        assert_eq!(tp.p2, tp.p3);
        assert!(close(tp.p2, 0.232544157934830, 1e-12));
    }

    #[test]
    fn invalid_mining_params() {
        assert!(MiningParams::new(0.0, 1.0, 0.5).is_err());
        assert!(MiningParams::new(1.0, 1.0, 0.5).is_err());
        assert!(MiningParams::new(0.3, 0.0, 0.5).is_err());
        assert!(MiningParams::new(0.3, 1.0, 1.5).is_err());
        assert!(MiningParams::new(0.3, f64::NAN, 0.5).is_err());
    }

    #[test]
    fn fix_scales_lambda_and_zeroes_gamma() {
        let p = MiningParams::new(0.3, 1.0, 0.5).unwrap();
        assert_eq!(
            apply_fix(&p, 1.0).unwrap(),
            MiningParams {
                alpha: 0.3,
                lambda: 1.0,
                gamma: 0.0
            }
        );
        assert_eq!(
            apply_fix(&p, 3.0).unwrap(),
            MiningParams {
                alpha: 0.3,
                lambda: 3.0,
                gamma: 0.0
            }
        );
        assert!(matches!(apply_fix(&p, 0.5), Err(Error::InvalidParam(_))));
    }
}
