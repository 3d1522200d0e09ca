//! Minimum profitable attacker share and tenure x difficulty resistance maps.

use std::cell::Cell;

use rayon::prelude::*;
use serde::{Deserialize, Serialize};

use crate::error::{Error, Result};
use crate::markov::analytic_ratio;
use crate::probmodel::{lambda_from_protocol, validate_gamma, MiningParams, ProtocolParams};

pub const DEFAULT_SCAN_POINTS: usize = 64;
pub const DEFAULT_GUARD: f64 = 1e-4;
pub const MIN_TOLERANCE: f64 = 1e-8;

#[derive(Debug, Clone, Copy, PartialEq, Serialize, Deserialize)]
pub struct ThresholdResult {
    /// Infimum of profitable alpha: 0 when profitable across the whole scan,
    /// 0.5 when profitable nowhere below 0.5.
    pub alpha_star: f64,
    pub bracket: (f64, f64),
    pub evaluations: usize,
}

#[derive(Debug, Clone, PartialEq, Serialize, Deserialize)]
pub struct SweepGrid {
    pub tenures: Vec<f64>,
    pub difficulties: Vec<f64>,
    pub hashrate: f64,
    pub gamma: f64,
}

#[derive(Debug, Clone, Copy, PartialEq, Serialize, Deserialize)]
pub struct SweepRow {
    pub tenure: f64,
    pub difficulty: f64,
    pub lambda: f64,
    pub alpha_star: f64,
}

/// Scan and guard-band settings for [`profit_threshold_with`].
#[derive(Debug, Clone, Copy)]
pub struct ScanOptions {
    pub points: usize,
    pub guard: f64,
}

impl Default for ScanOptions {
    fn default() -> Self {
        ScanOptions {
            points: DEFAULT_SCAN_POINTS,
            guard: DEFAULT_GUARD,
        }
    }
}

pub fn profit_threshold(lambda: f64, gamma: f64, tol: f64) -> Result<ThresholdResult> {
    profit_threshold_with(lambda, gamma, tol, ScanOptions::default())
}

/// Finds the lowest alpha where `ratio(alpha) - alpha` turns positive.
///
/// No monotonicity is assumed: a coarse scan over `[guard, 0.5 - guard]`
/// locates the first non-positive to positive transition, which is then
/// bisected down to `tol`.
pub fn profit_threshold_with(
    lambda: f64,
    gamma: f64,
    tol: f64,
    opts: ScanOptions,
) -> Result<ThresholdResult> {
    if !(lambda > 0.0 && lambda.is_finite()) {
        return Err(Error::param(format!(
            "lambda must be positive and finite, got {lambda}"
        )));
    }
    validate_gamma(gamma)?;
    if tol.is_nan() || tol < MIN_TOLERANCE {
        return Err(Error::param(format!(
            "tolerance must be at least {MIN_TOLERANCE}, got {tol}"
        )));
    }
    if opts.points < 2 || !(opts.guard > 0.0 && opts.guard < 0.25) {
        return Err(Error::param(
            "scan needs at least 2 points and a guard in (0, 0.25)",
        ));
    }

    let evaluations = Cell::new(0);
    let excess = |alpha: f64| -> Result<f64> {
        evaluations.set(evaluations.get() + 1);
        Ok(analytic_ratio(&MiningParams::new(alpha, lambda, gamma)?)? - alpha)
    };

    let lo = opts.guard;
    let hi = 0.5 - opts.guard;
    let step = (hi - lo) / (opts.points - 1) as f64;
    let grid: Vec<f64> = (0..opts.points).map(|i| lo + step * i as f64).collect();

    let mut prev_alpha = grid[0];
    let mut prev = excess(prev_alpha)?;
    if prev > 0.0 {
        return Ok(ThresholdResult {
            alpha_star: 0.0,
            bracket: (0.0, 0.0),
            evaluations: evaluations.get(),
        });
    }
    for &alpha in &grid[1..] {
        let f = excess(alpha)?;
        if prev <= 0.0 && f > 0.0 {
            let (mut a, mut b) = (prev_alpha, alpha);
            while b - a > tol {
                let mid = 0.5 * (a + b);
                if excess(mid)? > 0.0 {
                    b = mid;
                } else {
                    a = mid;
                }
            }
            return Ok(ThresholdResult {
                alpha_star: 0.5 * (a + b),
                bracket: (a, b),
                evaluations: evaluations.get(),
            });
        }
        prev_alpha = alpha;
        prev = f;
    }
    Ok(ThresholdResult {
        alpha_star: 0.5,
        bracket: (0.5, 0.5),
        evaluations: evaluations.get(),
    })
}

impl SweepGrid {
    pub fn validate(&self) -> Result<()> {
        for (name, axis) in [
            ("tenures", &self.tenures),
            ("difficulties", &self.difficulties),
        ] {
            if axis.is_empty() {
                return Err(Error::param(format!("{name} must not be empty")));
            }
            if axis.iter().any(|&v| !(v > 0.0 && v.is_finite())) {
                return Err(Error::param(format!("{name} must be positive")));
            }
            if axis.windows(2).any(|w| w[0] >= w[1]) {
                return Err(Error::param(format!("{name} must be strictly increasing")));
            }
        }
        if !(self.hashrate > 0.0 && self.hashrate.is_finite()) {
            return Err(Error::param(format!(
                "hashrate must be positive, got {}",
                self.hashrate
            )));
        }
        validate_gamma(self.gamma)
    }
}

/// One row per (tenure, difficulty) cell, tenure-major.
pub fn resistance_sweep(grid: &SweepGrid, tol: f64) -> Result<Vec<SweepRow>> {
    grid.validate()?;
    let cells: Vec<(f64, f64)> = grid
        .tenures
        .iter()
        .flat_map(|&t| grid.difficulties.iter().map(move |&d| (t, d)))
        .collect();
    cells
        .into_par_iter()
        .map(|(tenure, difficulty)| {
            let lambda = lambda_from_protocol(&ProtocolParams {
                tenure,
                difficulty,
                hashrate: grid.hashrate,
            })?;
            let alpha_star = profit_threshold(lambda, grid.gamma, tol)?.alpha_star;
            Ok(SweepRow {
                tenure,
                difficulty,
                lambda,
                alpha_star,
            })
        })
        .collect()
}
