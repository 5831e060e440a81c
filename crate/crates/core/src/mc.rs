//! Seeded, batch-parallel Monte Carlo plumbing.
//!
//! Trials are split into fixed-size batches. Batch `b` draws from a ChaCha8
//! generator seeded with the master seed on stream `b`, so results depend
//! only on the seed and the trial count, never on the thread count.

use rand::SeedableRng;
use rand_chacha::ChaCha8Rng;
use rayon::prelude::*;
use serde::{Deserialize, Serialize};

use crate::error::{Error, Result};

/// Trials per batch.
pub const BATCH_SIZE: u64 = 2048;

/// Upper bound on the trial count accepted by the simulators.
pub const MAX_TRIALS: u64 = 100_000_000;

/// Normal quantile used for reported confidence half-widths (95%).
pub const CI_Z: f64 = 1.959_963_984_540_054;

/// Generator for one batch.
pub fn batch_rng(seed: u64, batch: u64) -> ChaCha8Rng {
    let mut rng = ChaCha8Rng::seed_from_u64(seed);
    rng.set_stream(batch);
    rng
}

pub(crate) fn check_trials(trials: u64) -> Result<()> {
    if trials == 0 {
        return Err(Error::NoTrials);
    }
    if trials > MAX_TRIALS {
        return Err(Error::TrialBudget {
            requested: trials,
            budget: MAX_TRIALS,
        });
    }
    Ok(())
}

/// Runs `f(rng, batch_len)` for every batch in parallel and returns the
/// results in batch order.
pub(crate) fn run_batches<R, F>(trials: u64, seed: u64, f: F) -> Vec<R>
where
    R: Send,
    F: Fn(&mut ChaCha8Rng, u64) -> R + Sync,
{
    let batches = trials.div_ceil(BATCH_SIZE);
    (0..batches)
        .into_par_iter()
        .map(|b| {
            let len = BATCH_SIZE.min(trials - b * BATCH_SIZE);
            f(&mut batch_rng(seed, b), len)
        })
        .collect()
}

/// Empirical proportion with binomial error bars.
#[derive(Debug, Clone, Copy, PartialEq, Eq, Serialize, Deserialize, Default)]
pub struct Proportion {
    pub successes: u64,
    pub trials: u64,
}

impl Proportion {
    pub fn add(&mut self, other: Proportion) {
        self.successes += other.successes;
        self.trials += other.trials;
    }

    /// `successes / trials`, `NaN` when empty.
    pub fn rate(&self) -> f64 {
        if self.trials == 0 {
            f64::NAN
        } else {
            self.successes as f64 / self.trials as f64
        }
    }

    /// `sqrt(p (1 − p) / n)` at the given `p`.
    pub fn standard_error_at(&self, p: f64) -> f64 {
        (p * (1.0 - p) / self.trials as f64).sqrt()
    }

    /// 95% normal-approximation half-width around the empirical rate.
    pub fn ci_halfwidth(&self) -> f64 {
        CI_Z * self.standard_error_at(self.rate())
    }
}
