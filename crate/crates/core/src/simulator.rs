//! Seeded round-level Monte Carlo of the lead state machine.
//!
//! Every round draws three uniforms from the round's chunk stream: attacker
//! finds a header, honest side finds a header, and the tie-race coin. The
//! draws never depend on the current state, so the event stream of a chunk is
//! a pure function of `(seed, chunk index)`. Chunks can therefore be generated
//! in parallel and replayed in order without changing a single bit of the
//! result.
//!
//! Generator: ChaCha8 seeded from the root seed, one ChaCha stream per chunk
//! (2^64 streams of 2^64 blocks each).

use rand::{Rng, SeedableRng};
use rand_chacha::ChaCha8Rng;
use rayon::prelude::*;
use serde::{Deserialize, Serialize};

use crate::error::{Error, Result};
use crate::markov;
use crate::probmodel::{round_success_probs, MiningParams};

/// Rounds per RNG chunk.
pub const CHUNK_ROUNDS: u64 = 1 << 16;
/// Number of contiguous batches used for the batch-means standard error.
pub const BATCH_COUNT: u64 = 100;
/// Chunks generated concurrently before being replayed in order.
const PARALLEL_WINDOW: u64 = 64;

#[derive(Debug, Clone, Copy, PartialEq, Eq, Serialize, Deserialize)]
#[serde(rename_all = "lowercase")]
pub enum Accounting {
    /// Award rules of the closed-form revenue model.
    Paper,
    /// Ledger accounting: honest blocks at lead 0 count, and fork blocks are
    /// paid only when the fork resolves.
    Full,
}

#[derive(Debug, Clone, Copy, PartialEq, Eq, Serialize, Deserialize)]
#[serde(rename_all = "lowercase")]
pub enum Variant {
    /// Honest catch-up at lead 2 leaves a lead of 1 (balance equations).
    Decrement,
    /// Honest catch-up at lead 2 makes the attacker publish everything and
    /// the chain returns to a common tip.
    Reset,
}

#[derive(Debug, Clone, Copy, PartialEq, Serialize, Deserialize)]
pub struct SimConfig {
    pub params: MiningParams,
    pub rounds: u64,
    pub seed: u64,
    pub accounting: Accounting,
    pub variant: Variant,
}

impl SimConfig {
    pub fn paper(params: MiningParams, rounds: u64, seed: u64) -> Self {
        SimConfig {
            params,
            rounds,
            seed,
            accounting: Accounting::Paper,
            variant: Variant::Decrement,
        }
    }

    pub fn validate(&self) -> Result<()> {
        self.params.validate()?;
        if self.rounds == 0 {
            return Err(Error::config("rounds must be at least 1"));
        }
        if self.params.alpha >= 0.5 {
            return Err(Error::config(format!(
                "alpha must be below 0.5 (attacker majority has no stationary regime), got {}",
                self.params.alpha
            )));
        }
        if self.accounting == Accounting::Paper && self.variant == Variant::Reset {
            return Err(Error::config(
                "paper accounting is only defined for the decrement variant",
            ));
        }
        Ok(())
    }
}

#[derive(Debug, Clone, PartialEq, Serialize, Deserialize)]
pub struct SimResult {
    pub rounds_run: u64,
    pub revenue_a: f64,
    pub revenue_b: f64,
    pub ratio: f64,
    pub ratio_stderr: f64,
    pub batches: u64,
    /// Fraction of rounds that started in lead state `k`, for `k` up to the
    /// largest lead observed.
    pub occupancy: Vec<f64>,
    /// Fork blocks still unresolved when the run stopped; never paid.
    pub pending_private: u64,
    pub pending_public: u64,
}

const A_FINDS: u8 = 0b001;
const B_FINDS: u8 = 0b010;
const A_WINS_TIE: u8 = 0b100;

struct Thresholds {
    pa: f64,
    pb: f64,
    gamma: f64,
}

fn chunk_events(seed: u64, chunk: u64, len: usize, th: &Thresholds) -> Vec<u8> {
    let mut rng = ChaCha8Rng::seed_from_u64(seed);
    rng.set_stream(chunk);
    (0..len)
        .map(|_| {
            let a = rng.random::<f64>() < th.pa;
            let b = rng.random::<f64>() < th.pb;
            let tie = rng.random::<f64>() < th.gamma;
            ((a as u8) * A_FINDS) | ((b as u8) * B_FINDS) | ((tie as u8) * A_WINS_TIE)
        })
        .collect()
}

#[derive(Debug, Default, Clone, Copy, PartialEq)]
struct Award {
    a: u64,
    b: u64,
}

/// Lead state plus the fork bookkeeping used by full accounting.
#[derive(Debug, Default, Clone)]
struct LeadMachine {
    lead: u64,
    /// Withheld attacker blocks since the fork point.
    private: u64,
    /// Honest blocks on the public branch since the fork point.
    public: u64,
}

impl LeadMachine {
    fn clear_fork(&mut self) {
        self.private = 0;
        self.public = 0;
    }

    fn step(&mut self, event: u8, accounting: Accounting, variant: Variant) -> Award {
        let a = event & A_FINDS != 0;
        let b = event & B_FINDS != 0;
        let a_wins_tie = event & A_WINS_TIE != 0;
        let full = accounting == Accounting::Full;
        let mut award = Award::default();

        if self.lead == 0 {
            match (a, b) {
                (true, false) => {
                    self.lead = 1;
                    self.private = 1;
                    self.public = 0;
                }
                (true, true) if full => {
                    if a_wins_tie {
                        award.a = 1;
                    } else {
                        award.b = 1;
                    }
                }
                (false, true) if full => award.b = 1,
                _ => {}
            }
            return award;
        }

        match (a, b) {
            (true, false) => {
                self.lead += 1;
                self.private += 1;
            }
            (true, true) => {
                self.private += 1;
                self.public += 1;
            }
            (false, false) => {}
            (false, true) => match self.lead {
                1 => {
                    self.lead = 0;
                    self.public += 1;
                    if full {
                        if a_wins_tie {
                            award.a = self.private;
                        } else {
                            award.b = self.public;
                        }
                    } else if a_wins_tie {
                        award.a = 1;
                    } else {
                        award.b = 1;
                    }
                    self.clear_fork();
                }
                2 => match variant {
                    Variant::Decrement => {
                        self.lead = 1;
                        award.a = 2;
                        // public fork discarded; one withheld header keeps the lead
                        self.private = 1;
                        self.public = 0;
                    }
                    Variant::Reset => {
                        self.lead = 0;
                        award.a = self.private;
                        self.clear_fork();
                    }
                },
                _ => {
                    self.lead -= 1;
                    if full {
                        self.public += 1;
                    } else {
                        award.a = 1;
                    }
                }
            },
        }
        award
    }
}

/// Accumulates statistics while chunks are replayed in order.
struct Engine {
    machine: LeadMachine,
    accounting: Accounting,
    variant: Variant,
    rounds: u64,
    batches: u64,
    round: u64,
    occupancy: Vec<u64>,
    batch_a: Vec<u64>,
    batch_b: Vec<u64>,
}

impl Engine {
    fn new(config: &SimConfig) -> Self {
        let batches = BATCH_COUNT.min(config.rounds);
        Engine {
            machine: LeadMachine::default(),
            accounting: config.accounting,
            variant: config.variant,
            rounds: config.rounds,
            batches,
            round: 0,
            occupancy: vec![0; 16],
            batch_a: vec![0; batches as usize],
            batch_b: vec![0; batches as usize],
        }
    }

    fn feed(&mut self, events: &[u8]) {
        for &event in events {
            let lead = self.machine.lead as usize;
            if lead >= self.occupancy.len() {
                self.occupancy.resize(lead + 1, 0);
            }
            self.occupancy[lead] += 1;

            let award = self.machine.step(event, self.accounting, self.variant);
            if award != Award::default() {
                let batch = (u128::from(self.round) * u128::from(self.batches)
                    / u128::from(self.rounds)) as usize;
                self.batch_a[batch] += award.a;
                self.batch_b[batch] += award.b;
            }
            self.round += 1;
        }
    }

    fn finish(mut self) -> SimResult {
        while self.occupancy.len() > 1 && *self.occupancy.last().unwrap_or(&0) == 0 {
            self.occupancy.pop();
        }
        let total_rounds = self.round as f64;
        let occupancy = self
            .occupancy
            .iter()
            .map(|&c| c as f64 / total_rounds)
            .collect();

        let revenue_a: u64 = self.batch_a.iter().sum();
        let revenue_b: u64 = self.batch_b.iter().sum();
        let total = revenue_a + revenue_b;
        let ratio = if total == 0 {
            0.0
        } else {
            revenue_a as f64 / total as f64
        };
        let ratio_stderr = ratio_estimator_stderr(&self.batch_a, &self.batch_b, ratio);

        SimResult {
            rounds_run: self.round,
            revenue_a: revenue_a as f64,
            revenue_b: revenue_b as f64,
            ratio,
            ratio_stderr,
            batches: self.batches,
            occupancy,
            pending_private: self.machine.private,
            pending_public: self.machine.public,
        }
    }
}

/// Standard error of `sum(a) / sum(a + b)` from batch totals, using the
/// linearized ratio-estimator variance `sum(e_i^2) / (n (n-1) tbar^2)` with
/// residuals `e_i = a_i - ratio * t_i`.
fn ratio_estimator_stderr(batch_a: &[u64], batch_b: &[u64], ratio: f64) -> f64 {
    let n = batch_a.len();
    if n < 2 {
        return 0.0;
    }
    let totals: Vec<f64> = batch_a
        .iter()
        .zip(batch_b)
        .map(|(&a, &b)| (a + b) as f64)
        .collect();
    let mean_total = totals.iter().sum::<f64>() / n as f64;
    if mean_total == 0.0 {
        return 0.0;
    }
    let ss: f64 = batch_a
        .iter()
        .zip(&totals)
        .map(|(&a, &t)| {
            let e = a as f64 - ratio * t;
            e * e
        })
        .sum();
    (ss / (n as f64 * (n as f64 - 1.0))).sqrt() / mean_total
}

fn thresholds(config: &SimConfig) -> Result<Thresholds> {
    let rp = round_success_probs(&config.params)?;
    Ok(Thresholds {
        pa: rp.p_attacker,
        pb: rp.p_honest,
        gamma: config.params.gamma,
    })
}

fn chunk_len(config: &SimConfig, chunk: u64) -> usize {
    let start = chunk * CHUNK_ROUNDS;
    (config.rounds - start).min(CHUNK_ROUNDS) as usize
}

fn chunk_count(config: &SimConfig) -> u64 {
    config.rounds.div_ceil(CHUNK_ROUNDS)
}

/// Runs the simulation on the calling thread.
pub fn simulate(config: &SimConfig) -> Result<SimResult> {
    config.validate()?;
    let th = thresholds(config)?;
    let mut engine = Engine::new(config);
    for chunk in 0..chunk_count(config) {
        let events = chunk_events(config.seed, chunk, chunk_len(config, chunk), &th);
        engine.feed(&events);
    }
    Ok(engine.finish())
}

/// Same result as [`simulate`], bit for bit; chunk event streams are drawn
/// concurrently and replayed in chunk order.
pub fn simulate_parallel(config: &SimConfig) -> Result<SimResult> {
    config.validate()?;
    let th = thresholds(config)?;
    let mut engine = Engine::new(config);
    let chunks = chunk_count(config);
    let mut start = 0;
    while start < chunks {
        let end = (start + PARALLEL_WINDOW).min(chunks);
        let window: Vec<Vec<u8>> = (start..end)
            .into_par_iter()
            .map(|chunk| chunk_events(config.seed, chunk, chunk_len(config, chunk), &th))
            .collect();
        for events in &window {
            engine.feed(events);
        }
        start = end;
    }
    Ok(engine.finish())
}

#[derive(Debug, Clone, PartialEq, Serialize, Deserialize)]
pub struct Comparison {
    pub ratio_mc: f64,
    pub ratio_analytic: f64,
    pub ratio_stderr: f64,
    pub z_score: f64,
    /// Largest gap between empirical occupancy and the closed-form `q_k`
    /// over states `0..=max(10, largest observed lead)`.
    pub occupancy_linf: f64,
    pub sim: SimResult,
}

/// Checks a paper-accounting simulation against the analytic model.
pub fn compare_to_analytic(config: &SimConfig) -> Result<Comparison> {
    if config.accounting != Accounting::Paper {
        return Err(Error::config(
            "analytic comparison requires paper accounting",
        ));
    }
    let sim = simulate_parallel(config)?;
    let analysis = markov::analyze(&config.params)?;
    let ratio_analytic = analysis.report.ratio;
    let diff = sim.ratio - ratio_analytic;
    let z_score = if sim.ratio_stderr > 0.0 {
        diff / sim.ratio_stderr
    } else if diff == 0.0 {
        0.0
    } else {
        diff.signum() * f64::INFINITY
    };
    let states = sim.occupancy.len().max(11);
    let occupancy_linf = (0..states)
        .map(|k| {
            let empirical = sim.occupancy.get(k).copied().unwrap_or(0.0);
            (empirical - analysis.dist.q_at(k)).abs()
        })
        .fold(0.0, f64::max);
    Ok(Comparison {
        ratio_mc: sim.ratio,
        ratio_analytic,
        ratio_stderr: sim.ratio_stderr,
        z_score,
        occupancy_linf,
        sim,
    })
}
