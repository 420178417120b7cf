//! Empirical statistics over token streams, exact enumeration oracles for
//! capped schedules, and power-law fitting.
//!
//! The enumeration oracle exploits that a capped schedule (one whose
//! prefix contains a unit period) has a finite support `{1, …, s}` and a
//! process law that is a uniform mixture over the `P = Π_{r≤s} π_r` seed
//! configurations. Every probability is then an exact rational `m/P`, and
//! block entropies are finite sums `Σ (m/P)·ln(P/m)` which we keep in a
//! symbolic `Σ coeff·ln(prime)` form so identities between entropies can
//! be verified exactly rather than to floating-point tolerance.

use num_bigint::BigInt;
use num_rational::BigRational;
use num_traits::{One, ToPrimitive, Zero};
use rayon::prelude::*;
use std::collections::{BTreeMap, HashMap};
use thiserror::Error;

use crate::generator::{GenError, Generator, SeedMode};
use crate::schedule::{Finiteness, Moment, PeriodSchedule, ScheduleError};
use crate::util::derive_seed;

#[derive(Debug, Error, Clone, PartialEq)]
pub enum AnalyticsError {
    #[error("type {r} occurs fewer than 2 times")]
    NotEnoughOccurrences { r: u64 },
    #[error("power-law fit failed: {0}")]
    Fit(String),
    #[error("unsupported: {0}")]
    Unsupported(String),
    #[error("enumeration budget exceeded: needs {needed} configurations, budget {budget}")]
    BudgetExceeded { needed: u128, budget: u64 },
    #[error(transparent)]
    Schedule(#[from] ScheduleError),
    #[error(transparent)]
    Generator(#[from] GenError),
}

/// Membership set over type indices: dense bits for common types plus a
/// spill set for the heavy-tailed outliers random seeds occasionally emit.
#[derive(Debug, Default)]
struct TypeSet {
    dense: Vec<bool>,
    big: std::collections::HashSet<u64>,
}

const DENSE_TYPES: usize = 1 << 22;

impl TypeSet {
    /// Inserts `k`; true if it was new.
    fn insert(&mut self, k: u64) -> bool {
        let idx = k as usize - 1;
        if idx < DENSE_TYPES {
            if idx >= self.dense.len() {
                self.dense.resize(idx + 1, false);
            }
            if self.dense[idx] {
                false
            } else {
                self.dense[idx] = true;
                true
            }
        } else {
            self.big.insert(k)
        }
    }
}

/// Type counts `n_t` and running maxima `M_t` sampled at checkpoints.
#[derive(Debug, Clone, PartialEq, Eq)]
pub struct TypeGrowthSeries {
    pub checkpoints: Vec<u64>,
    pub n_t: Vec<u64>,
    pub m_t: Vec<u64>,
}

/// Counts distinct types and the running maximum in a single pass.
///
/// `checkpoints` must be strictly increasing; the stream must be at least
/// as long as the last checkpoint.
pub fn count_types_series(
    tokens: impl Iterator<Item = u64>,
    checkpoints: &[u64],
) -> Result<TypeGrowthSeries, AnalyticsError> {
    if checkpoints.windows(2).any(|w| w[1] <= w[0]) || checkpoints.first() == Some(&0) {
        return Err(AnalyticsError::Unsupported(
            "checkpoints must be strictly increasing and ≥ 1".into(),
        ));
    }
    let mut seen = TypeSet::default();
    let mut n = 0u64;
    let mut m = 0u64;
    let mut n_t = Vec::with_capacity(checkpoints.len());
    let mut m_t = Vec::with_capacity(checkpoints.len());
    let mut next_cp = 0usize;
    let mut t = 0u64;
    for k in tokens {
        if next_cp == checkpoints.len() {
            break;
        }
        t += 1;
        if seen.insert(k) {
            n += 1;
        }
        m = m.max(k);
        while next_cp < checkpoints.len() && checkpoints[next_cp] == t {
            n_t.push(n);
            m_t.push(m);
            next_cp += 1;
        }
    }
    if next_cp != checkpoints.len() {
        return Err(AnalyticsError::Unsupported(format!(
            "stream ended at t = {t}, before checkpoint {}",
            checkpoints[next_cp]
        )));
    }
    Ok(TypeGrowthSeries {
        checkpoints: checkpoints.to_vec(),
        n_t,
        m_t,
    })
}

/// Log-spaced checkpoints covering `[from, to]`, deduplicated after
/// rounding, always including both endpoints.
pub fn log_spaced_checkpoints(from: u64, to: u64, per_decade: u32) -> Vec<u64> {
    assert!(from >= 1 && to >= from && per_decade >= 1);
    let mut cps = vec![from];
    let step = 10f64.powf(1.0 / per_decade as f64);
    let mut x = from as f64;
    while x < to as f64 {
        x *= step;
        let v = (x.round() as u64).min(to);
        if v > *cps.last().unwrap() {
            cps.push(v);
        }
    }
    if *cps.last().unwrap() != to {
        cps.push(to);
    }
    cps
}

/// Empirical marginal frequencies over a window of a token stream.
#[derive(Debug, Clone)]
pub struct MarginalEstimate {
    pub len: u64,
    pub offset: u64,
    counts: Vec<u64>,
    suffix: Vec<u64>,
    big: BTreeMap<u64, u64>,
    big_total: u64,
}

impl MarginalEstimate {
    /// `f̂_r`: relative frequency of tokens ≥ r in the window.
    pub fn f_hat(&self, r: u64) -> f64 {
        let idx = r as usize - 1;
        let count = if idx < self.suffix.len() {
            self.suffix[idx] + self.big_total
        } else {
            self.big.range(r..).map(|(_, c)| c).sum()
        };
        count as f64 / self.len as f64
    }

    /// `p̂_r`: relative frequency of tokens equal to r.
    pub fn pmf_hat(&self, r: u64) -> f64 {
        let idx = r as usize - 1;
        let count = if idx < self.counts.len() {
            self.counts[idx]
        } else {
            self.big.get(&r).copied().unwrap_or(0)
        };
        count as f64 / self.len as f64
    }

    pub fn max_type(&self) -> u64 {
        self.big
            .keys()
            .next_back()
            .copied()
            .unwrap_or(0)
            .max(self.counts.len() as u64)
    }
}

/// Counts token frequencies on positions `offset+1 ..= offset+t`.
pub fn empirical_marginal(
    tokens: impl Iterator<Item = u64>,
    t: u64,
    offset: u64,
) -> Result<MarginalEstimate, AnalyticsError> {
    let mut counts: Vec<u64> = Vec::new();
    let mut big: BTreeMap<u64, u64> = BTreeMap::new();
    let mut big_total = 0u64;
    let mut n = 0u64;
    for k in tokens.skip(offset as usize).take(t as usize) {
        let idx = k as usize - 1;
        if idx < DENSE_TYPES {
            if idx >= counts.len() {
                counts.resize(idx + 1, 0);
            }
            counts[idx] += 1;
        } else {
            *big.entry(k).or_insert(0) += 1;
            big_total += 1;
        }
        n += 1;
    }
    if n < t {
        return Err(AnalyticsError::Unsupported(format!(
            "stream too short: needed offset {offset} + {t} tokens, got {n} in window"
        )));
    }
    let mut suffix = counts.clone();
    for i in (0..suffix.len().saturating_sub(1)).rev() {
        suffix[i] += suffix[i + 1];
    }
    Ok(MarginalEstimate {
        len: t,
        offset,
        counts,
        suffix,
        big,
        big_total,
    })
}

#[derive(Debug, Clone, Copy, PartialEq)]
pub struct ReturnTimeStats {
    pub mean_gap: f64,
    pub occurrences: u64,
}

/// Mean gap between consecutive occurrences of `r`.
pub fn return_time_stats(
    tokens: impl Iterator<Item = u64>,
    r: u64,
) -> Result<ReturnTimeStats, AnalyticsError> {
    let mut first: Option<u64> = None;
    let mut last = 0u64;
    let mut occurrences = 0u64;
    for (pos0, k) in tokens.enumerate() {
        if k == r {
            let pos = pos0 as u64 + 1;
            if first.is_none() {
                first = Some(pos);
            }
            last = pos;
            occurrences += 1;
        }
    }
    if occurrences < 2 {
        return Err(AnalyticsError::NotEnoughOccurrences { r });
    }
    Ok(ReturnTimeStats {
        mean_gap: (last - first.unwrap()) as f64 / (occurrences - 1) as f64,
        occurrences,
    })
}

/// Result of an ordinary least-squares fit on `(log x, log y)`.
#[derive(Debug, Clone, Copy, PartialEq)]
pub struct PowerLawFit {
    /// Slope of the log-log line: `y ≈ e^{log_constant}·x^{exponent}`.
    pub exponent: f64,
    pub log_constant: f64,
    pub r_squared: f64,
    /// `(min x, max x)` over the fitted points.
    pub fit_range: (f64, f64),
}

pub fn fit_power_law(points: &[(f64, f64)]) -> Result<PowerLawFit, AnalyticsError> {
    if points.len() < 2 {
        return Err(AnalyticsError::Fit("need at least 2 points".into()));
    }
    if points.iter().any(|&(x, y)| x <= 0.0 || y <= 0.0) {
        return Err(AnalyticsError::Fit("coordinates must be positive".into()));
    }
    let logs: Vec<(f64, f64)> = points.iter().map(|&(x, y)| (x.ln(), y.ln())).collect();
    let n = logs.len() as f64;
    let mean_x = logs.iter().map(|p| p.0).sum::<f64>() / n;
    let mean_y = logs.iter().map(|p| p.1).sum::<f64>() / n;
    let sxx: f64 = logs.iter().map(|p| (p.0 - mean_x).powi(2)).sum();
    if sxx == 0.0 {
        return Err(AnalyticsError::Fit("all x equal".into()));
    }
    let sxy: f64 = logs.iter().map(|p| (p.0 - mean_x) * (p.1 - mean_y)).sum();
    let slope = sxy / sxx;
    let intercept = mean_y - slope * mean_x;
    let ss_res: f64 = logs
        .iter()
        .map(|p| (p.1 - (intercept + slope * p.0)).powi(2))
        .sum();
    let ss_tot: f64 = logs.iter().map(|p| (p.1 - mean_y).powi(2)).sum();
    let r_squared = if ss_tot <= f64::EPSILON * n {
        1.0
    } else {
        1.0 - ss_res / ss_tot
    };
    let (mut lo, mut hi) = (f64::INFINITY, f64::NEG_INFINITY);
    for &(x, _) in points {
        lo = lo.min(x);
        hi = hi.max(x);
    }
    Ok(PowerLawFit {
        exponent: slope,
        log_constant: intercept,
        r_squared,
        fit_range: (lo, hi),
    })
}

/// Cardinalities of the obligatory set `{r : w̄_r ≤ T}` and the typical
/// set `{r : P(K_t = r) ≥ 1/T}`.
///
/// For monotone schedules both sets are initial segments, so a forward
/// scan with a compensated float accumulator suffices; boundary-ambiguous
/// indices fall back to exact rational evaluation. Finite-support
/// schedules are enumerated outright.
pub fn obligatory_and_typical_counts(
    schedule: &PeriodSchedule,
    t: u64,
) -> Result<(u64, u64), AnalyticsError> {
    if t == 0 {
        return Ok((0, 0));
    }
    if let Some(sup) = schedule.first_unit_period() {
        let t_rat = BigRational::from_integer(t.into());
        let inv_t = BigRational::one() / t_rat.clone();
        let mut a = 0u64;
        let mut b = 0u64;
        for r in 1..=sup {
            if schedule
                .wbar_uniform_bound(r)
                .map(|w| w <= t_rat)
                .unwrap_or(false)
            {
                a += 1;
            }
            if schedule.marginal_pmf_exact(r) >= inv_t {
                b += 1;
            }
        }
        return Ok((a, b));
    }
    if !schedule.is_nondecreasing(None) {
        return Err(AnalyticsError::Unsupported(
            "obligatory/typical counts need a monotone schedule".into(),
        ));
    }
    Ok((obligatory_scan(schedule, t)?, typical_scan(schedule, t)))
}

/// `A_T` for a schedule whose obligatory set is an initial segment
/// `{1, …, A_T}`; errors out when it is not.
pub fn obligatory_initial_segment(
    schedule: &PeriodSchedule,
    t: u64,
) -> Result<u64, AnalyticsError> {
    if t == 0 {
        return Ok(0);
    }
    if let Some(sup) = schedule.first_unit_period() {
        let t_rat = BigRational::from_integer(t.into());
        let mut a = 0u64;
        let mut segment = true;
        for r in 1..=sup {
            let inside = schedule
                .wbar_uniform_bound(r)
                .map(|w| w <= t_rat)
                .unwrap_or(false);
            if inside {
                if !segment {
                    return Err(AnalyticsError::Unsupported(format!(
                        "obligatory set of {schedule} at T = {t} is not an initial segment"
                    )));
                }
                a += 1;
            } else {
                segment = false;
            }
        }
        return Ok(a);
    }
    if !schedule.is_nondecreasing(None) {
        return Err(AnalyticsError::Unsupported(
            "obligatory cutoff needs a monotone schedule".into(),
        ));
    }
    obligatory_scan(schedule, t)
}

fn obligatory_scan(schedule: &PeriodSchedule, t: u64) -> Result<u64, AnalyticsError> {
    // w̄_r = Σ_{j<r} 1/f_j + π_r/f_r, accumulated forward in f64; the
    // relative error stays near machine precision, so only values within
    // a hair of T need the exact rational check.
    let t_f = t as f64;
    let t_rat = BigRational::from_integer(t.into());
    let mut sum_inv_f = 0.0f64;
    let mut inv_f = 1.0f64;
    let mut a = 0u64;
    for r in 1..=t.saturating_add(1) {
        let pi = schedule
            .period_big(r)
            .to_f64()
            .ok_or(ScheduleError::PeriodOverflow { r })?;
        let wbar = sum_inv_f + pi * inv_f;
        let inside = if (wbar - t_f).abs() <= 1e-9 * wbar.max(1.0) {
            schedule
                .wbar_uniform_bound(r)
                .map(|w| w <= t_rat)
                .unwrap_or(false)
        } else {
            wbar <= t_f
        };
        if !inside {
            return Ok(a);
        }
        a = r;
        sum_inv_f += inv_f;
        inv_f *= pi / (pi - 1.0);
    }
    // w̄_r > r for every r, so the loop always exits within T steps.
    Ok(a)
}

fn typical_scan(schedule: &PeriodSchedule, t: u64) -> u64 {
    let ln_inv_t = -(t as f64).ln();
    let inv_t = BigRational::new(BigInt::one(), BigInt::from(t));
    let mut b = 0u64;
    for (r, _f, pmf) in schedule.marginal_iter().take(t as usize + 1) {
        let ln_pmf = pmf.ln();
        let inside = if (ln_pmf - ln_inv_t).abs() <= 1e-9 {
            schedule.marginal_pmf_exact(r) >= inv_t
        } else {
            ln_pmf > ln_inv_t
        };
        if !inside {
            break;
        }
        b = r;
    }
    b
}

/// A finite linear combination `Σ coeff_p · ln p` over primes, with exact
/// rational coefficients. Entropies of rational distributions live here,
/// so identities between them reduce to exact coefficient equality.
#[derive(Debug, Clone, PartialEq, Default)]
pub struct EntropyExpr {
    coeffs: BTreeMap<u64, BigRational>,
}

impl EntropyExpr {
    pub fn zero() -> Self {
        Self::default()
    }

    /// Adds `coeff · ln n` (with `n ≥ 1` factorized into primes).
    pub fn add_ln_of(&mut self, n: u64, coeff: &BigRational) {
        assert!(n >= 1);
        let mut m = n;
        let mut p = 2u64;
        while p * p <= m {
            while m % p == 0 {
                *self.coeffs.entry(p).or_insert_with(BigRational::zero) += coeff;
                m /= p;
            }
            p += 1;
        }
        if m > 1 {
            *self.coeffs.entry(m).or_insert_with(BigRational::zero) += coeff;
        }
        self.coeffs.retain(|_, c| !c.is_zero());
    }

    pub fn add_expr(&mut self, other: &Self) {
        for (p, c) in &other.coeffs {
            *self.coeffs.entry(*p).or_insert_with(BigRational::zero) += c;
        }
        self.coeffs.retain(|_, c| !c.is_zero());
    }

    pub fn sub_expr(&mut self, other: &Self) {
        for (p, c) in &other.coeffs {
            *self.coeffs.entry(*p).or_insert_with(BigRational::zero) -= c;
        }
        self.coeffs.retain(|_, c| !c.is_zero());
    }

    pub fn is_zero(&self) -> bool {
        self.coeffs.is_empty()
    }

    /// Numeric value in nats.
    pub fn to_nats(&self) -> f64 {
        self.coeffs
            .iter()
            .map(|(p, c)| c.to_f64().unwrap_or(f64::NAN) * (*p as f64).ln())
            .sum()
    }
}

/// Exact block statistics of a capped schedule obtained by enumerating
/// every seed configuration.
#[derive(Debug, Clone)]
pub struct CappedBlockEntropy {
    /// Support size `s` (types `1..=s`).
    pub support: u64,
    /// Number of seed configurations `P = Π_{r≤s} π_r`.
    pub configurations: u64,
    pub t: u64,
    /// Distinct narration realizations with multiplicity and type count.
    pub narrations: Vec<(Vec<u16>, u64, u32)>,
    /// `counts[i][r-1]` = number of configurations with `K_{i+1} = r`.
    pub marginal_counts: Vec<Vec<u64>>,
    /// `H(K_1^T)` as an exact log-linear expression.
    pub entropy: EntropyExpr,
}

impl CappedBlockEntropy {
    pub fn entropy_nats(&self) -> f64 {
        self.entropy.to_nats()
    }

    /// Exact `P(K_{t} = r)` at offset `t` (1-based).
    pub fn marginal_exact(&self, t: u64, r: u64) -> BigRational {
        let row = &self.marginal_counts[t as usize - 1];
        let count = row.get(r as usize - 1).copied().unwrap_or(0);
        BigRational::new(count.into(), self.configurations.into())
    }

    /// Exact expected number of distinct types in `K_1^T`.
    pub fn expected_types_exact(&self) -> BigRational {
        let mut num = BigRational::zero();
        for (_, mult, n_types) in &self.narrations {
            num += BigRational::from_integer((mult * *n_types as u64).into());
        }
        num / BigRational::from_integer(self.configurations.into())
    }
}

/// Simulates the clock bank for a fixed seed configuration over a finite
/// support; the scan never passes the unit period.
fn simulate_capped(periods: &[u64], seeds: &[u64], t: u64) -> Vec<u16> {
    let mut clocks = seeds.to_vec();
    let mut out = Vec::with_capacity(t as usize);
    for _ in 0..t {
        let mut idx = 0usize;
        loop {
            if clocks[idx] > 1 {
                clocks[idx] -= 1;
                idx += 1;
            } else {
                clocks[idx] = periods[idx];
                out.push(idx as u16 + 1);
                break;
            }
        }
    }
    out
}

/// Enumerates all seed configurations of a capped schedule, returning the
/// exact distribution of `K_1^T`, its entropy, and per-offset marginals.
pub fn exact_block_entropy_capped(
    schedule: &PeriodSchedule,
    t: u64,
    budget: u64,
) -> Result<CappedBlockEntropy, AnalyticsError> {
    let support = schedule.first_unit_period().ok_or_else(|| {
        AnalyticsError::Unsupported(format!("{schedule} has no unit period; support is infinite"))
    })?;
    let periods: Vec<u64> = (1..=support)
        .map(|r| schedule.try_period_at(r))
        .collect::<Result<_, _>>()?;
    let p_total: u128 = periods.iter().map(|&p| p as u128).product();
    if p_total > budget as u128 {
        return Err(AnalyticsError::BudgetExceeded {
            needed: p_total,
            budget,
        });
    }
    let p_total = p_total as u64;

    let mut narration_counts: HashMap<Vec<u16>, u64> = HashMap::new();
    let mut marginal_counts = vec![vec![0u64; support as usize]; t as usize];
    let mut seeds: Vec<u64> = vec![1; support as usize];
    loop {
        let seq = simulate_capped(&periods, &seeds, t);
        for (i, &k) in seq.iter().enumerate() {
            marginal_counts[i][k as usize - 1] += 1;
        }
        *narration_counts.entry(seq).or_insert(0) += 1;

        // Odometer over seed tuples.
        let mut pos = 0usize;
        loop {
            if pos == seeds.len() {
                break;
            }
            if seeds[pos] < periods[pos] {
                seeds[pos] += 1;
                break;
            }
            seeds[pos] = 1;
            pos += 1;
        }
        if pos == seeds.len() {
            break;
        }
    }

    // H(K_1^T) = ln P − Σ_k (m_k/P)·ln m_k, exactly.
    let mut entropy = EntropyExpr::zero();
    entropy.add_ln_of(p_total, &BigRational::one());
    let mut narrations = Vec::with_capacity(narration_counts.len());
    for (seq, mult) in narration_counts {
        let frac = BigRational::new(BigInt::from(mult), BigInt::from(p_total));
        entropy.add_ln_of(mult, &(-frac));
        let mut seen = vec![false; support as usize];
        let mut n_types = 0u32;
        for &k in &seq {
            if !seen[k as usize - 1] {
                seen[k as usize - 1] = true;
                n_types += 1;
            }
        }
        narrations.push((seq, mult, n_types));
    }
    narrations.sort();

    Ok(CappedBlockEntropy {
        support,
        configurations: p_total,
        t,
        narrations,
        marginal_counts,
        entropy,
    })
}

/// Evaluates the source-coding entropy bound
/// `(e·E N_T + 2)·((q+2)·ln T + q·ln E K_t^{1/q})` in nats.
pub fn entropy_upper_bound(
    schedule: &PeriodSchedule,
    t: u64,
    q: f64,
    e_nt: f64,
) -> Result<f64, AnalyticsError> {
    if !(q > 0.0) || e_nt < 1.0 || t == 0 {
        return Err(AnalyticsError::Unsupported(
            "entropy bound needs q > 0, E N_T ≥ 1, T ≥ 1".into(),
        ));
    }
    let moment = match schedule.moment_e_k_pow((1.0 / q).min(1.0))? {
        Moment::Finite(v) => v,
        Moment::Divergent => {
            return Err(AnalyticsError::Unsupported(format!(
                "E K^{{1/{q}}} diverges for {schedule}"
            )))
        }
    };
    Ok((std::f64::consts::E * e_nt + 2.0) * ((q + 2.0) * (t as f64).ln() + q * moment.ln()))
}

#[derive(Debug, Clone, Copy, PartialEq)]
pub struct MonteCarloEstimate {
    pub mean: f64,
    pub stderr: f64,
    pub runs: u64,
}

/// Mean number of distinct types in `K_1^T` over independent random-seed
/// runs. Run `i` uses the derived seed `derive_seed(rng_seed, i)`.
pub fn expected_types_monte_carlo(
    schedule: &PeriodSchedule,
    t: u64,
    n_runs: u64,
    rng_seed: u64,
) -> Result<MonteCarloEstimate, AnalyticsError> {
    if n_runs == 0 {
        return Err(AnalyticsError::Unsupported("need at least one run".into()));
    }
    let mode_probe = SeedMode::RandomUniform { rng_seed };
    if schedule.classify_finiteness(&mode_probe) != Finiteness::Finite {
        return Err(AnalyticsError::Unsupported(format!(
            "{schedule} is not finite under random seeds"
        )));
    }
    let counts: Result<Vec<u64>, AnalyticsError> = (0..n_runs)
        .into_par_iter()
        .map(|i| {
            let mode = SeedMode::RandomUniform {
                rng_seed: derive_seed(rng_seed, i),
            };
            let mut g = Generator::new(schedule.clone(), mode);
            let mut seen = TypeSet::default();
            let mut n = 0u64;
            for _ in 0..t {
                if seen.insert(g.next_token()?) {
                    n += 1;
                }
            }
            Ok(n)
        })
        .collect();
    let counts = counts?;
    let n = counts.len() as f64;
    let mean = counts.iter().sum::<u64>() as f64 / n;
    let var = counts.iter().map(|&c| (c as f64 - mean).powi(2)).sum::<f64>() / (n - 1.0).max(1.0);
    Ok(MonteCarloEstimate {
        mean,
        stderr: (var / n).sqrt(),
        runs: n_runs,
    })
}
