//! Streaming generation of multiperiodic sequences.
//!
//! The generator keeps a bank of countdown clocks `φ_r ∈ {1, …, π_r}`. To
//! emit a token it scans `r = 1, 2, …`: a clock above 1 is decremented and
//! the scan moves on; the first clock found at 1 fires, is reset to `π_r`,
//! and its index is the token.
//!
//! Random seeds are a keyed per-index PRF, `σ_r = uniform(h(seed, r), π_r)`
//! (unbiased via multiply-shift rejection), which keeps the seeds jointly
//! independent and uniform while making every clock's state a pure
//! function of `(σ_r, c_r)`, where `c_r` counts the tokens ≥ r emitted so
//! far: the countdown after `c` touches is `((σ_r − 1 − c) mod π_r) + 1`.
//! Clocks up to [`DENSE_LIMIT`] are materialized on first touch; beyond
//! it the scan reconstructs states on the fly from the PRF and a sorted
//! list of the few tokens that ever fired out there. Record tokens have
//! heavy-tailed sizes (for linear periods a new maximum beyond `x` has
//! probability ≈ M/x), so bounding memory this way is what makes long
//! random-seed runs safe.
//!
//! A scan that keeps walking right without firing corresponds to the
//! undefined-token case of the underlying definition. It is surfaced as
//! [`GenError::InfiniteLoopSuspected`] after `safety_cap` steps instead of
//! hanging; schedules classified finite get a very large default cap,
//! because for them deep scans are legitimate.

use thiserror::Error;

use crate::schedule::{Finiteness, PeriodSchedule, ScheduleError};
use crate::util::{derive_seed, splitmix64};

/// Default bound on the per-token scan depth for schedules that are not
/// classified finite (surfaces `k_t = ∞` instead of looping).
pub const DEFAULT_SAFETY_CAP: u64 = 1 << 20;

/// Scan-depth cap for finite-classified schedules, where arbitrarily deep
/// scans are rare but legitimate.
pub const FINITE_SAFETY_CAP: u64 = 1 << 40;

/// Largest clock index stored densely; beyond this the bank is virtual.
const DENSE_LIMIT: usize = 1 << 22;

/// How the clock bank is seeded.
#[derive(Debug, Clone, PartialEq, Eq)]
pub enum SeedMode {
    /// `σ_r = 1` for every `r`: the canonical deterministic choice.
    Minimal,
    /// Explicit seeds for the first types; unlisted types fall back to 1,
    /// which keeps the sequence finite.
    FixedList(Vec<u64>),
    /// Independent uniform seeds `σ_r ~ U{1, …, π_r}`, reproducible across
    /// runs and platforms for a given seed.
    RandomUniform { rng_seed: u64 },
}

#[derive(Debug, Error, Clone, PartialEq, Eq)]
pub enum GenError {
    #[error(
        "no clock fired within {scan_depth} steps at position {position}; \
         the next token is undefined (k_t = ∞)"
    )]
    InfiniteLoopSuspected { position: u64, scan_depth: u64 },
    #[error("seed σ_{r} = {sigma} outside 1..={period}")]
    InvalidSeed { r: u64, sigma: u64, period: u64 },
    #[error(transparent)]
    Schedule(#[from] ScheduleError),
}

/// Unbiased uniform draw in `0..n` from a splitmix-chained hash state.
fn uniform_from_hash(mut state: u64, n: u64) -> u64 {
    debug_assert!(n >= 1);
    if n == 1 {
        return 0;
    }
    let threshold = n.wrapping_neg() % n;
    loop {
        state = splitmix64(state);
        let m = (state as u128) * (n as u128);
        if (m as u64) >= threshold {
            return (m >> 64) as u64;
        }
    }
}

/// Streaming state of the clock-bank algorithm.
#[derive(Debug, Clone)]
pub struct Generator {
    schedule: PeriodSchedule,
    seed_mode: SeedMode,
    clocks: Vec<u64>,
    periods: Vec<u64>,
    seeds: Vec<u64>,
    /// Tokens that fired beyond the dense bank, sorted ascending. For a
    /// virtual index r, `#big_tokens ≥ r` is exactly its touch count.
    big_tokens: Vec<u64>,
    dense_limit: usize,
    emitted: u64,
    safety_cap: u64,
}

impl Generator {
    /// New generator with a cap chosen by the finiteness classification.
    pub fn new(schedule: PeriodSchedule, seed_mode: SeedMode) -> Self {
        let safety_cap = match schedule.classify_finiteness(&seed_mode) {
            Finiteness::Finite => FINITE_SAFETY_CAP,
            _ => DEFAULT_SAFETY_CAP,
        };
        Self {
            schedule,
            seed_mode,
            clocks: Vec::new(),
            periods: Vec::new(),
            seeds: Vec::new(),
            big_tokens: Vec::new(),
            dense_limit: DENSE_LIMIT,
            emitted: 0,
            safety_cap,
        }
    }

    pub fn with_safety_cap(mut self, cap: u64) -> Self {
        self.safety_cap = cap.max(1);
        self
    }

    #[cfg(test)]
    pub(crate) fn with_dense_limit(mut self, limit: usize) -> Self {
        self.dense_limit = limit.max(1);
        self
    }

    pub fn schedule(&self) -> &PeriodSchedule {
        &self.schedule
    }

    /// Tokens emitted so far.
    pub fn emitted(&self) -> u64 {
        self.emitted
    }

    /// Highest clock index ever touched.
    pub fn max_touched(&self) -> u64 {
        self.big_tokens
            .last()
            .copied()
            .unwrap_or(0)
            .max(self.clocks.len() as u64)
    }

    /// The seed of clock `r` (for cross-checking recovery procedures).
    /// Materialized values come from the bank; virtual indices are
    /// recomputed from the PRF.
    pub fn materialized_seed(&self, r: u64) -> Option<u64> {
        if let Some(&s) = self.seeds.get(r as usize - 1) {
            return Some(s);
        }
        if r <= self.max_touched() {
            return self.seed_at(r).ok();
        }
        None
    }

    /// Current countdown value of clock `r`, if it has ever been touched.
    pub fn clock_value(&self, r: u64) -> Option<u64> {
        if let Some(&v) = self.clocks.get(r as usize - 1) {
            return Some(v);
        }
        if r > self.max_touched() {
            return None;
        }
        let pi = self.schedule.try_period_at(r).ok()?;
        let sigma = self.seed_at(r).ok()?;
        Some(self.phase(sigma, self.touches_of(r), pi))
    }

    fn phase(&self, sigma: u64, touches: u64, pi: u64) -> u64 {
        ((sigma as i128 - 1 - touches as i128).rem_euclid(pi as i128)) as u64 + 1
    }

    /// Number of past touches of a virtual clock = tokens ≥ r so far.
    fn touches_of(&self, r: u64) -> u64 {
        let i = self.big_tokens.partition_point(|&t| t < r);
        (self.big_tokens.len() - i) as u64
    }

    fn seed_at(&self, r: u64) -> Result<u64, GenError> {
        let period = self.schedule.try_period_at(r)?;
        let sigma = match &self.seed_mode {
            SeedMode::Minimal => 1,
            SeedMode::FixedList(list) => list.get(r as usize - 1).copied().unwrap_or(1),
            SeedMode::RandomUniform { rng_seed } => {
                1 + uniform_from_hash(derive_seed(*rng_seed, r), period)
            }
        };
        if sigma < 1 || sigma > period {
            return Err(GenError::InvalidSeed {
                r,
                sigma,
                period,
            });
        }
        Ok(sigma)
    }

    fn materialize_next(&mut self) -> Result<(), GenError> {
        let r = self.clocks.len() as u64 + 1;
        let period = self.schedule.try_period_at(r)?;
        let sigma = self.seed_at(r)?;
        // The clock may have been touched while virtual.
        let phi = self.phase(sigma, self.touches_of(r), period);
        self.clocks.push(phi);
        self.periods.push(period);
        self.seeds.push(sigma);
        Ok(())
    }

    /// Emits the next token, mutating the clock bank.
    pub fn next_token(&mut self) -> Result<u64, GenError> {
        let mut idx = 0usize;
        loop {
            if idx == self.clocks.len() {
                if idx < self.dense_limit {
                    self.materialize_next()?;
                } else {
                    break;
                }
            }
            if self.clocks[idx] > 1 {
                self.clocks[idx] -= 1;
                idx += 1;
                if idx as u64 >= self.safety_cap {
                    return Err(GenError::InfiniteLoopSuspected {
                        position: self.emitted + 1,
                        scan_depth: self.safety_cap,
                    });
                }
            } else {
                self.clocks[idx] = self.periods[idx];
                self.emitted += 1;
                return Ok(idx as u64 + 1);
            }
        }

        // Virtual region: reconstruct states from the PRF and the sorted
        // record list; the walk pointer keeps the touch count incremental.
        let mut r = self.clocks.len() as u64 + 1;
        let mut bi = self.big_tokens.partition_point(|&t| t < r);
        loop {
            let pi = self.schedule.try_period_at(r)?;
            let sigma = self.seed_at(r)?;
            let touches = (self.big_tokens.len() - bi) as u64;
            if (sigma as i128 - 1 - touches as i128).rem_euclid(pi as i128) == 0 {
                self.big_tokens.insert(bi, r);
                self.emitted += 1;
                return Ok(r);
            }
            r += 1;
            if r > self.safety_cap {
                return Err(GenError::InfiniteLoopSuspected {
                    position: self.emitted + 1,
                    scan_depth: self.safety_cap,
                });
            }
            while bi < self.big_tokens.len() && self.big_tokens[bi] < r {
                bi += 1;
            }
        }
    }

    /// Iterator view over the token stream.
    pub fn tokens(&mut self) -> impl Iterator<Item = Result<u64, GenError>> + '_ {
        std::iter::from_fn(move || Some(self.next_token()))
    }

    /// Emits the next token of the process restricted to types ≤ `r_star`:
    /// the exact token when it is ≤ `r_star`, and [`TRUNCATED`] otherwise.
    ///
    /// Clock independence makes this exact: whether some clock ≤ `r_star`
    /// fires never depends on the deeper clocks, so the restricted view
    /// has precisely the law of `K_t·1{K_t ≤ r*} + ∞·1{K_t > r*}` while
    /// touching only `r_star` clocks. Long-period schedules (`c > 1`
    /// growth) have stream maxima of order `T^c`, which makes full
    /// identity resolution of every token quadratically expensive in `T`;
    /// consumers that only need tail tokens through their conditional law
    /// use this view instead.
    pub fn next_token_truncated(&mut self, r_star: u64) -> Result<u64, GenError> {
        debug_assert!((r_star as usize) < self.dense_limit);
        let mut idx = 0usize;
        loop {
            if idx as u64 == r_star {
                self.emitted += 1;
                return Ok(TRUNCATED);
            }
            if idx == self.clocks.len() {
                self.materialize_next()?;
            }
            if self.clocks[idx] > 1 {
                self.clocks[idx] -= 1;
                idx += 1;
            } else {
                self.clocks[idx] = self.periods[idx];
                self.emitted += 1;
                return Ok(idx as u64 + 1);
            }
        }
    }
}

/// Sentinel emitted by [`Generator::next_token_truncated`] for tokens
/// above the cutoff.
pub const TRUNCATED: u64 = u64::MAX;

/// Generates the first `t` tokens. Deterministic given the schedule and
/// seed mode (including the RNG seed), identical across runs and platforms.
pub fn generate_prefix(
    schedule: &PeriodSchedule,
    seed_mode: &SeedMode,
    t: u64,
) -> Result<Vec<u64>, GenError> {
    let mut g = Generator::new(schedule.clone(), seed_mode.clone());
    let mut out = Vec::with_capacity(t as usize);
    for _ in 0..t {
        out.push(g.next_token()?);
    }
    Ok(out)
}

/// Order-preserving removal of every token smaller than `r`.
pub fn decimate(tokens: &[u64], r: u64) -> Vec<u64> {
    tokens.iter().copied().filter(|&k| k >= r).collect()
}
