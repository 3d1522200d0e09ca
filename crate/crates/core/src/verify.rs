//! Self-check suites: closed form against independent routes.

use rand::{Rng, SeedableRng};
use rand_chacha::ChaCha8Rng;
use rayon::prelude::*;
use serde::{Deserialize, Serialize};

use crate::error::Result;
use crate::markov::{
    q_at, revenue_rates, revenue_ratio, stationary, stationary_truncated_oracle, TransitionProbs,
};
use crate::probmodel::MiningParams;
use crate::simulator::{compare_to_analytic, SimConfig};

pub const ORACLE_STATES: usize = 400;
pub const ORACLE_MAX_RHO: f64 = 0.9;
pub const ORACLE_LINF: f64 = 1e-10;
pub const IDENTITY_TOL: f64 = 1e-12;
pub const BALANCE_DEPTH: usize = 50;
pub const MC_ROUNDS: u64 = 1_000_000;
pub const MC_MAX_Z: f64 = 4.0;
pub const MC_OCCUPANCY_LINF: f64 = 0.005;
pub const MC_ALPHAS: [f64; 3] = [0.1, 0.2, 0.3];
pub const MC_LAMBDAS: [f64; 3] = [0.5, 1.0, 2.0];
pub const MC_GAMMAS: [f64; 2] = [0.0, 0.5];

#[derive(Debug, Clone, PartialEq, Serialize, Deserialize)]
pub struct SuiteReport {
    pub name: String,
    pub cases: usize,
    pub passed: usize,
    pub failed: usize,
    /// Worst observed error in the suite's own metric.
    pub worst: f64,
    pub tolerance: f64,
}

impl SuiteReport {
    fn from_errors(name: &str, errors: &[f64], tolerance: f64) -> Self {
        let failed = errors
            .iter()
            .filter(|&&e| e.is_nan() || e > tolerance)
            .count();
        SuiteReport {
            name: name.to_string(),
            cases: errors.len(),
            passed: errors.len() - failed,
            failed,
            worst: errors.iter().copied().fold(0.0, f64::max),
            tolerance,
        }
    }

    pub fn ok(&self) -> bool {
        self.failed == 0
    }
}

/// Random transition probabilities with `p2 < p3` and `p2 / p3 <= max_rho`.
/// `p3` is drawn from `[min_p3, 1 / (1 + rho)]` so that `p2 + p3 <= 1`;
/// `min_p3` must not exceed 1/2.
pub fn random_valid_probs<R: Rng>(rng: &mut R, max_rho: f64, min_p3: f64) -> TransitionProbs {
    let rho = rng.random_range(0.0..max_rho);
    let p3 = rng.random_range(min_p3..=1.0 / (1.0 + rho));
    let p2 = rho * p3;
    let p1 = rng.random_range(0.0..=1.0) * (1.0 - p2 - p3).max(0.0);
    let p0 = rng.random_range(0.0..=1.0);
    TransitionProbs { p0, p1, p2, p3 }
}

fn case_rng(seed: u64, stream: u64) -> ChaCha8Rng {
    let mut rng = ChaCha8Rng::seed_from_u64(seed);
    rng.set_stream(stream);
    rng
}

/// L-infinity gap between closed form and the truncated power-iteration vector.
pub fn oracle_error(probs: &TransitionProbs, states: usize) -> Result<f64> {
    let dist = stationary(probs)?;
    let pi = stationary_truncated_oracle(probs, states)?;
    Ok(pi
        .iter()
        .enumerate()
        .map(|(k, &p)| (p - q_at(&dist, k)).abs())
        .fold(0.0, f64::max))
}

/// Largest residual of the balance equations `p0 q0 = p3 q1`,
/// `p2 q_k = p3 q_{k+1}` for `k <= depth`, and of the normalization.
pub fn balance_error(probs: &TransitionProbs, depth: usize) -> Result<f64> {
    let d = stationary(probs)?;
    let mut worst = (probs.p0 * d.q0 - probs.p3 * d.q1).abs();
    for k in 1..=depth {
        worst = worst.max((probs.p2 * q_at(&d, k) - probs.p3 * q_at(&d, k + 1)).abs());
    }
    worst = worst.max((d.total_mass() - 1.0).abs());
    // summed revenue coefficients: (1 - q0 + q2) p3
    let (ra, rb) = revenue_rates(&d, probs, 0.5);
    worst = worst.max((ra + rb - (1.0 - d.q0 + q_at(&d, 2)) * probs.p3).abs());
    Ok(worst)
}

/// How far the even-split ratio falls below 1/2 (0 when it does not).
pub fn lower_bound_violation(probs: &TransitionProbs) -> Result<f64> {
    let d = stationary(probs)?;
    Ok((0.5 - revenue_ratio(&d, 0.5)).max(0.0))
}

pub fn oracle_suite(cases: usize, seed: u64) -> Result<SuiteReport> {
    let errors = (0..cases as u64)
        .into_par_iter()
        .map(|i| {
            let probs = random_valid_probs(&mut case_rng(seed, i), ORACLE_MAX_RHO, 0.1);
            oracle_error(&probs, ORACLE_STATES)
        })
        .collect::<Result<Vec<_>>>()?;
    Ok(SuiteReport::from_errors(
        "closed_form_vs_truncated_chain",
        &errors,
        ORACLE_LINF,
    ))
}

pub fn balance_suite(cases: usize, seed: u64) -> Result<SuiteReport> {
    let mut rng = case_rng(seed, u64::MAX - 1);
    let errors = (0..cases)
        .map(|_| balance_error(&random_valid_probs(&mut rng, 1.0, 1e-3), BALANCE_DEPTH))
        .collect::<Result<Vec<_>>>()?;
    Ok(SuiteReport::from_errors(
        "balance_and_normalization",
        &errors,
        IDENTITY_TOL,
    ))
}

pub fn lower_bound_suite(cases: usize, seed: u64) -> Result<SuiteReport> {
    let mut rng = case_rng(seed, u64::MAX - 2);
    let errors = (0..cases)
        .map(|_| lower_bound_violation(&random_valid_probs(&mut rng, 1.0, 1e-3)))
        .collect::<Result<Vec<_>>>()?;
    Ok(SuiteReport::from_errors(
        "even_split_ratio_at_least_half",
        &errors,
        0.0,
    ))
}

/// One Monte Carlo grid point checked against the analytic model.
#[derive(Debug, Clone, PartialEq, Serialize, Deserialize)]
pub struct McCase {
    pub alpha: f64,
    pub lambda: f64,
    pub gamma: f64,
    pub ratio_mc: f64,
    pub ratio_analytic: f64,
    pub z_score: f64,
    pub occupancy_linf: f64,
}

impl McCase {
    pub fn ok(&self) -> bool {
        self.z_score.abs() <= MC_MAX_Z && self.occupancy_linf <= MC_OCCUPANCY_LINF
    }
}

pub fn monte_carlo_cases(rounds: u64, seed: u64) -> Result<Vec<McCase>> {
    let mut cases = Vec::new();
    let mut index = 0u64;
    for &gamma in &MC_GAMMAS {
        for &alpha in &MC_ALPHAS {
            for &lambda in &MC_LAMBDAS {
                let params = MiningParams::new(alpha, lambda, gamma)?;
                let cfg = SimConfig::paper(params, rounds, seed.wrapping_add(index));
                let c = compare_to_analytic(&cfg)?;
                cases.push(McCase {
                    alpha,
                    lambda,
                    gamma,
                    ratio_mc: c.ratio_mc,
                    ratio_analytic: c.ratio_analytic,
                    z_score: c.z_score,
                    occupancy_linf: c.occupancy_linf,
                });
                index += 1;
            }
        }
    }
    Ok(cases)
}

pub fn monte_carlo_suite(rounds: u64, seed: u64) -> Result<SuiteReport> {
    let cases = monte_carlo_cases(rounds, seed)?;
    let failed = cases.iter().filter(|c| !c.ok()).count();
    Ok(SuiteReport {
        name: "monte_carlo_vs_analytic".to_string(),
        cases: cases.len(),
        passed: cases.len() - failed,
        failed,
        worst: cases.iter().map(|c| c.z_score.abs()).fold(0.0, f64::max),
        tolerance: MC_MAX_Z,
    })
}

/// Runs every suite. The oracle suite uses a tenth of `cases` (at least one),
/// since each case is a full power iteration on a 401-state chain.
pub fn run_all(cases: usize, seed: u64) -> Result<Vec<SuiteReport>> {
    Ok(vec![
        oracle_suite((cases / 10).max(1), seed)?,
        balance_suite(cases, seed)?,
        lower_bound_suite(cases, seed)?,
        monte_carlo_suite(MC_ROUNDS, seed)?,
    ])
}
