//! Period schedules and the closed-form statistics they determine.
//!
//! A schedule assigns a period `π_r ≥ 1` to every type `r ≥ 1`. Everything
//! in this module depends only on the periods:
//!
//! * the marginal distribution function
//!   `f_r = Π_{i<r} (π_i − 1)/π_i`, with `P(K_t = r) = f_r − f_{r+1} = f_r/π_r`;
//! * the minimal-seed waiting time, a nested ceiling
//!   `w_r = ⌈…⌈⌈π_{r−1}/(π_{r−1}−1)⌉ π_{r−2}/(π_{r−2}−1)⌉… π_1/(π_1−1)⌉`;
//! * the uniform waiting bound `w̄_r`, the same nesting without ceilings,
//!   which also equals `Σ_{j<r} 1/f_j + π_r/f_r`;
//! * the moment `E K_t^{1/q}` with a symbolic convergence test;
//! * finiteness of the induced process under a given seed mode.
//!
//! Small-index quantities are computed with exact big-integer/rational
//! arithmetic so equalities can be asserted bit for bit; long-range scans
//! use compensated log-space accumulation.

use num_bigint::BigUint;
use num_rational::{BigRational, Ratio};
use num_traits::{One, ToPrimitive, Zero};
use std::fmt;
use std::str::FromStr;
use thiserror::Error;

use crate::generator::SeedMode;
use crate::tail;
use crate::util::KahanSum;

/// Exact nonnegative rational used for schedule parameters.
pub type URational = Ratio<u64>;

#[derive(Debug, Error, Clone, PartialEq, Eq)]
pub enum ScheduleError {
    #[error("invalid schedule: {0}")]
    Invalid(String),
    #[error("period π_{unit_at} = 1 precedes r = {r}; the nested closed form divides by zero")]
    UnitPeriodBefore { r: u64, unit_at: u64 },
    #[error("period at r = {r} does not fit in 64 bits")]
    PeriodOverflow { r: u64 },
    #[error("unsupported: {0}")]
    Unsupported(String),
}

/// The built-in period families.
#[derive(Debug, Clone, PartialEq, Eq)]
pub enum PeriodFamily {
    /// `π_r = p` for every `r`.
    Constant { p: u64 },
    /// `π_r = 1 + ⌈c·r⌉` for a positive rational `c`.
    Linear { c: URational },
    /// `π_r = 1 + ⌈c·r^γ⌉` for positive rationals `c`, `γ`.
    Power { c: URational, gamma: URational },
    /// Explicit prefix that contains a period 1; types past the first unit
    /// period never occur, so the support is finite.
    Capped { prefix: Vec<u64> },
    /// Explicit prefix followed by one of the closed families, with the
    /// tail evaluated at the absolute index.
    Explicit {
        prefix: Vec<u64>,
        tail: Box<PeriodFamily>,
    },
}

/// A period function `r ↦ π_r` together with its derived statistics.
#[derive(Debug, Clone, PartialEq, Eq)]
pub struct PeriodSchedule {
    family: PeriodFamily,
}

/// Finiteness classification of the induced multiperiodic process.
#[derive(Debug, Clone, Copy, PartialEq, Eq)]
pub enum Finiteness {
    Finite,
    NotFinite,
    Unknown,
}

/// Result of a moment computation `E K_t^{1/q}`.
#[derive(Debug, Clone, Copy, PartialEq)]
pub enum Moment {
    Finite(f64),
    Divergent,
}

impl Moment {
    pub fn value(&self) -> Option<f64> {
        match self {
            Moment::Finite(v) => Some(*v),
            Moment::Divergent => None,
        }
    }
}

fn ceil_div_u128(a: u128, b: u128) -> u128 {
    (a + b - 1) / b
}

/// Smallest integer `t` with `t^b · denom ≥ num`, i.e. `⌈(num/denom)^{1/b}⌉`.
fn ceil_root_div(num: &BigUint, denom: &BigUint, b: u32) -> BigUint {
    let x = num / denom;
    let mut t = x.nth_root(b);
    while t.pow(b) * denom < *num {
        t += 1u32;
    }
    t
}

impl PeriodFamily {
    fn validate(&self) -> Result<(), ScheduleError> {
        match self {
            PeriodFamily::Constant { p } => {
                if *p < 1 {
                    return Err(ScheduleError::Invalid("constant period must be ≥ 1".into()));
                }
            }
            PeriodFamily::Linear { c } => {
                if c.numer() == &0 {
                    return Err(ScheduleError::Invalid("linear coefficient must be > 0".into()));
                }
            }
            PeriodFamily::Power { c, gamma } => {
                if c.numer() == &0 || gamma.numer() == &0 {
                    return Err(ScheduleError::Invalid(
                        "power family needs c > 0 and γ > 0".into(),
                    ));
                }
                if *gamma.denom() > u32::MAX as u64 {
                    return Err(ScheduleError::Invalid("γ denominator too large".into()));
                }
            }
            PeriodFamily::Capped { prefix } => {
                if prefix.is_empty() || prefix.iter().any(|&p| p < 1) {
                    return Err(ScheduleError::Invalid(
                        "capped prefix must be non-empty with periods ≥ 1".into(),
                    ));
                }
                if !prefix.contains(&1) {
                    return Err(ScheduleError::Invalid(
                        "capped prefix must contain a period equal to 1".into(),
                    ));
                }
            }
            PeriodFamily::Explicit { prefix, tail } => {
                if prefix.iter().any(|&p| p < 1) {
                    return Err(ScheduleError::Invalid("explicit periods must be ≥ 1".into()));
                }
                if matches!(**tail, PeriodFamily::Explicit { .. }) {
                    return Err(ScheduleError::Invalid(
                        "explicit tail must be a closed family".into(),
                    ));
                }
                tail.validate()?;
            }
        }
        Ok(())
    }

    fn period_big(&self, r: u64) -> BigUint {
        debug_assert!(r >= 1);
        match self {
            PeriodFamily::Constant { p } => BigUint::from(*p),
            PeriodFamily::Linear { c } => {
                let (p, q) = (*c.numer() as u128, *c.denom() as u128);
                let ceil = ceil_div_u128(p * r as u128, q);
                BigUint::from(1u8) + BigUint::from(ceil)
            }
            PeriodFamily::Power { c, gamma } => {
                let (a, b) = (*gamma.numer(), *gamma.denom() as u32);
                let (p, q) = (*c.numer(), *c.denom());
                if b == 1 {
                    // ⌈p·r^a/q⌉ in big arithmetic.
                    let num = BigUint::from(p) * BigUint::from(r).pow(a as u32);
                    let q = BigUint::from(q);
                    let ceil = (&num + &q - BigUint::one()) / &q;
                    BigUint::one() + ceil
                } else {
                    // ⌈(p/q)·r^{a/b}⌉ = ⌈(p^b r^a / q^b)^{1/b}⌉, exactly.
                    let num = BigUint::from(p).pow(b) * BigUint::from(r).pow(a as u32);
                    let den = BigUint::from(q).pow(b);
                    BigUint::one() + ceil_root_div(&num, &den, b)
                }
            }
            PeriodFamily::Capped { prefix } => {
                // Types past the prefix are unreachable; period 1 keeps the
                // marginal identically zero there.
                BigUint::from(*prefix.get(r as usize - 1).unwrap_or(&1))
            }
            PeriodFamily::Explicit { prefix, tail } => match prefix.get(r as usize - 1) {
                Some(&p) => BigUint::from(p),
                None => tail.period_big(r),
            },
        }
    }
}

impl PeriodSchedule {
    pub fn new(family: PeriodFamily) -> Result<Self, ScheduleError> {
        family.validate()?;
        Ok(Self { family })
    }

    pub fn constant(p: u64) -> Result<Self, ScheduleError> {
        Self::new(PeriodFamily::Constant { p })
    }

    pub fn linear(c: URational) -> Result<Self, ScheduleError> {
        Self::new(PeriodFamily::Linear { c })
    }

    pub fn power(c: URational, gamma: URational) -> Result<Self, ScheduleError> {
        Self::new(PeriodFamily::Power { c, gamma })
    }

    pub fn capped(prefix: Vec<u64>) -> Result<Self, ScheduleError> {
        Self::new(PeriodFamily::Capped { prefix })
    }

    pub fn explicit(prefix: Vec<u64>, tail: PeriodFamily) -> Result<Self, ScheduleError> {
        Self::new(PeriodFamily::Explicit {
            prefix,
            tail: Box::new(tail),
        })
    }

    pub fn family(&self) -> &PeriodFamily {
        &self.family
    }

    /// Exact period as a big integer, defined for every `r ≥ 1`.
    pub fn period_big(&self, r: u64) -> BigUint {
        self.family.period_big(r)
    }

    /// Period as `u64`, failing cleanly when it does not fit.
    pub fn try_period_at(&self, r: u64) -> Result<u64, ScheduleError> {
        self.period_big(r)
            .to_u64()
            .ok_or(ScheduleError::PeriodOverflow { r })
    }

    /// Period as `u64`. Panics if the value exceeds 64 bits; use
    /// [`try_period_at`](Self::try_period_at) on untrusted ranges.
    pub fn period_at(&self, r: u64) -> u64 {
        self.try_period_at(r)
            .unwrap_or_else(|e| panic!("{e}"))
    }

    /// Period as a float, avoiding big-integer allocation on the common
    /// families; long marginal sweeps call this once per index.
    pub fn period_f64(&self, r: u64) -> f64 {
        fn fam(f: &PeriodFamily, r: u64) -> f64 {
            match f {
                PeriodFamily::Constant { p } => *p as f64,
                PeriodFamily::Linear { c } => {
                    let (p, q) = (*c.numer() as u128, *c.denom() as u128);
                    (1 + (p * r as u128 + q - 1) / q) as f64
                }
                PeriodFamily::Power { c, gamma } if *gamma.denom() == 1 => {
                    let (p, q) = (*c.numer() as u128, *c.denom() as u128);
                    match (r as u128).checked_pow(*gamma.numer() as u32) {
                        Some(pow) => match p.checked_mul(pow) {
                            Some(num) => (1 + (num + q - 1) / q) as f64,
                            None => f64::INFINITY,
                        },
                        None => f64::INFINITY,
                    }
                }
                PeriodFamily::Capped { prefix } => {
                    *prefix.get(r as usize - 1).unwrap_or(&1) as f64
                }
                PeriodFamily::Explicit { prefix, tail } => match prefix.get(r as usize - 1) {
                    Some(&p) => p as f64,
                    None => fam(tail, r),
                },
                other => PeriodSchedule {
                    family: other.clone(),
                }
                .period_big(r)
                .to_f64()
                .unwrap_or(f64::INFINITY),
            }
        }
        fam(&self.family, r)
    }

    /// Smallest `r` with `π_r = 1`, if any. Types beyond it never occur.
    pub fn first_unit_period(&self) -> Option<u64> {
        match &self.family {
            PeriodFamily::Constant { p } => (*p == 1).then_some(1),
            PeriodFamily::Linear { .. } | PeriodFamily::Power { .. } => None,
            PeriodFamily::Capped { prefix } => prefix
                .iter()
                .position(|&p| p == 1)
                .map(|i| i as u64 + 1),
            PeriodFamily::Explicit { prefix, tail } => {
                if let Some(i) = prefix.iter().position(|&p| p == 1) {
                    return Some(i as u64 + 1);
                }
                let off = prefix.len() as u64;
                match &**tail {
                    PeriodFamily::Constant { p } if *p == 1 => Some(off + 1),
                    PeriodFamily::Capped { prefix: cp } => {
                        // Tail is evaluated at the absolute index, so part of
                        // the capped prefix may be shadowed.
                        cp.iter()
                            .enumerate()
                            .skip(off as usize)
                            .find(|(_, &p)| p == 1)
                            .map(|(i, _)| i as u64 + 1)
                            // Beyond the capped prefix the period is 1.
                            .or(Some(cp.len().max(off as usize) as u64 + 1))
                    }
                    _ => None,
                }
            }
        }
    }

    /// Number of reachable types when the support is finite.
    pub fn support_size(&self) -> Option<u64> {
        self.first_unit_period()
    }

    /// True when `π_{r+1} ≥ π_r` holds for all `r` up to `limit`
    /// (all `r`, when `limit` is `None` and the family is closed-form).
    pub fn is_nondecreasing(&self, limit: Option<u64>) -> bool {
        match &self.family {
            PeriodFamily::Constant { .. } => true,
            // ⌈c·r^γ⌉ is non-decreasing for c, γ > 0.
            PeriodFamily::Linear { .. } | PeriodFamily::Power { .. } => true,
            PeriodFamily::Capped { prefix } => {
                let n = limit.map_or(prefix.len(), |l| prefix.len().min(l as usize));
                prefix[..n].windows(2).all(|w| w[1] >= w[0])
            }
            PeriodFamily::Explicit { prefix, tail } => {
                let n = limit.map_or(prefix.len(), |l| prefix.len().min(l as usize));
                if !prefix[..n].windows(2).all(|w| w[1] >= w[0]) {
                    return false;
                }
                if limit.is_some_and(|l| (l as usize) <= prefix.len()) {
                    return true;
                }
                let tail_sched = PeriodSchedule {
                    family: (**tail).clone(),
                };
                let first_tail = tail_sched.period_big(prefix.len() as u64 + 1);
                match prefix.last() {
                    Some(&last) if BigUint::from(last) > first_tail => false,
                    _ => tail_sched.is_nondecreasing(None),
                }
            }
        }
    }

    /// Exact marginal distribution function `f_r = Π_{i<r} (π_i − 1)/π_i`.
    pub fn marginal_f_exact(&self, r: u64) -> BigRational {
        let mut f = BigRational::one();
        for i in 1..r {
            let pi = self.period_big(i);
            if pi.is_one() {
                return BigRational::zero();
            }
            f *= BigRational::new(
                (&pi - BigUint::one()).into(),
                pi.into(),
            );
        }
        f
    }

    /// Exact marginal probability `P(K_t = r) = f_r / π_r`.
    pub fn marginal_pmf_exact(&self, r: u64) -> BigRational {
        let f = self.marginal_f_exact(r);
        if f.is_zero() {
            return f;
        }
        f / BigRational::from_integer(self.period_big(r).into())
    }

    /// `ln f_r`, accumulated in log space; `-inf` when `f_r = 0`.
    pub fn ln_marginal_f(&self, r: u64) -> f64 {
        let mut acc = KahanSum::new();
        for i in 1..r {
            let pi = self.period_f64(i);
            if pi == 1.0 {
                return f64::NEG_INFINITY;
            }
            acc.add((-1.0 / pi).ln_1p());
        }
        acc.value()
    }

    /// Marginal distribution function as a float; underflow-safe.
    pub fn marginal_f(&self, r: u64) -> f64 {
        self.ln_marginal_f(r).exp()
    }

    /// `P(K_t = r)` as a float.
    pub fn marginal_pmf(&self, r: u64) -> f64 {
        let lf = self.ln_marginal_f(r);
        if lf == f64::NEG_INFINITY {
            return 0.0;
        }
        let pi = self.period_big(r).to_f64().unwrap_or(f64::INFINITY);
        (lf - pi.ln()).exp()
    }

    /// Streaming view of `(r, f_r, P(K=r))` with compensated log-space state.
    pub fn marginal_iter(&self) -> MarginalIter<'_> {
        MarginalIter {
            schedule: self,
            r: 1,
            ln_f: KahanSum::new(),
            dead: false,
        }
    }

    /// Minimal-seed waiting time `w_r`, exact.
    ///
    /// Solves the shrinking recursion backwards: `T ← ⌈T·π_i/(π_i−1)⌉`
    /// starting from `T = 1` at `i = r−1`.
    pub fn waiting_closed_form(&self, r: u64) -> Result<BigUint, ScheduleError> {
        self.check_no_unit_before(r)?;
        let mut t = BigUint::one();
        for i in (1..r).rev() {
            let pi = self.period_big(i);
            let den = &pi - BigUint::one();
            // ⌈t·π/(π−1)⌉
            t = (&t * &pi + &den - BigUint::one()) / &den;
        }
        Ok(t)
    }

    /// Uniform waiting bound `w̄_r`, exact (the nesting of the waiting-time
    /// formula with the ceilings dropped, seeded with `π_r`).
    pub fn wbar_uniform_bound(&self, r: u64) -> Result<BigRational, ScheduleError> {
        self.check_no_unit_before(r)?;
        let mut t = BigRational::from_integer(self.period_big(r).into());
        for i in (1..r).rev() {
            let pi = BigRational::from_integer(self.period_big(i).into());
            let den = &pi - BigRational::one();
            t = t * &pi / den + BigRational::one();
        }
        Ok(t)
    }

    /// The sum form of the uniform bound, `Σ_{j<r} 1/f_j + π_r/f_r`.
    /// Agrees with [`wbar_uniform_bound`](Self::wbar_uniform_bound) exactly.
    pub fn wbar_sum_form(&self, r: u64) -> Result<BigRational, ScheduleError> {
        self.check_no_unit_before(r)?;
        let mut inv_f = BigRational::one(); // 1/f_1
        let mut acc = BigRational::zero();
        for j in 1..r {
            acc += &inv_f;
            let pi = BigRational::from_integer(self.period_big(j).into());
            inv_f = inv_f * &pi / (&pi - BigRational::one());
        }
        let pi_r = BigRational::from_integer(self.period_big(r).into());
        Ok(acc + pi_r * inv_f)
    }

    fn check_no_unit_before(&self, r: u64) -> Result<(), ScheduleError> {
        if let Some(s) = self.first_unit_period() {
            if s < r {
                return Err(ScheduleError::UnitPeriodBefore { r, unit_at: s });
            }
        }
        Ok(())
    }

    /// Finiteness of the induced sequence/process under `mode`.
    ///
    /// With a deterministic unit seed occurring infinitely often the
    /// sequence is always finite; under random seeds the process is finite
    /// iff `Σ 1/π_r` diverges or some period equals 1, decided symbolically
    /// per family.
    pub fn classify_finiteness(&self, mode: &SeedMode) -> Finiteness {
        match mode {
            // Minimal seeds fix σ_r = 1 for all r; a fixed list falls back
            // to σ_r = 1 past its end.
            SeedMode::Minimal | SeedMode::FixedList(_) => Finiteness::Finite,
            SeedMode::RandomUniform { .. } => self.classify_random(),
        }
    }

    fn classify_random(&self) -> Finiteness {
        if self.first_unit_period().is_some() {
            return Finiteness::Finite;
        }
        match &self.family {
            PeriodFamily::Constant { .. } | PeriodFamily::Linear { .. } => Finiteness::Finite,
            PeriodFamily::Power { gamma, .. } => {
                // Σ 1/(1+⌈c r^γ⌉) behaves like Σ r^{-γ}.
                if *gamma <= URational::one() {
                    Finiteness::Finite
                } else {
                    Finiteness::NotFinite
                }
            }
            PeriodFamily::Capped { .. } => Finiteness::Finite,
            PeriodFamily::Explicit { tail, .. } => {
                let tail_sched = PeriodSchedule {
                    family: (**tail).clone(),
                };
                tail_sched.classify_random()
            }
        }
    }

    /// Effective tail exponent: `f_r ~ r^{-1/c}` holds for linear-growth
    /// periods; returns the `c` of the `γ = 1` regime when applicable.
    pub(crate) fn linear_coefficient(&self) -> Option<URational> {
        match &self.family {
            PeriodFamily::Linear { c } => Some(*c),
            PeriodFamily::Power { c, gamma } if *gamma == URational::one() => Some(*c),
            PeriodFamily::Explicit { tail, .. } => PeriodSchedule {
                family: (**tail).clone(),
            }
            .linear_coefficient(),
            _ => None,
        }
    }


    /// Index from which the schedule is governed by its closed-form tail
    /// (1 for pure families, past the prefix for explicit ones).
    pub(crate) fn tail_start(&self) -> u64 {
        match &self.family {
            PeriodFamily::Explicit { prefix, .. } => prefix.len() as u64 + 1,
            _ => 1,
        }
    }

    /// `E K_t^{1/q}` for `inv_q = 1/q ∈ (0, 1]`.
    ///
    /// Evaluates `Σ_r (r^s − (r−1)^s) f_r` with `s = 1/q`; the divergence
    /// decision is symbolic (for the `γ = 1` families the moment is finite
    /// iff `s < 1/c`, i.e. `q > c`), never a numeric heuristic.
    pub fn moment_e_k_pow(&self, inv_q: f64) -> Result<Moment, ScheduleError> {
        if !(inv_q > 0.0 && inv_q <= 1.0) {
            return Err(ScheduleError::Invalid("inv_q must lie in (0, 1]".into()));
        }
        let s = inv_q;

        if let Some(sup) = self.first_unit_period() {
            let mut acc = 0.0;
            for (r, _f, pmf) in self.marginal_iter().take(sup as usize) {
                acc += pmf * (r as f64).powf(s);
            }
            return Ok(Moment::Finite(acc));
        }

        match &self.family {
            PeriodFamily::Power { gamma, .. } if *gamma > URational::one() => {
                // f_r tends to a positive constant: P(K = ∞) > 0.
                return Ok(Moment::Divergent);
            }
            _ => {}
        }
        if let Some(c) = self.linear_coefficient() {
            let inv_c = (*c.denom() as f64) / (*c.numer() as f64);
            if s >= inv_c {
                return Ok(Moment::Divergent);
            }
            return Ok(Moment::Finite(self.moment_sum_gamma1(s, c)));
        }
        // Remaining case: power family with γ < 1 (possibly behind an
        // explicit prefix); f_r decays as a stretched exponential, so the
        // moment is finite for every s ∈ (0, 1].
        Ok(Moment::Finite(self.moment_sum_stretched(s)))
    }

    fn moment_sum_gamma1(&self, s: f64, c: URational) -> f64 {
        let c_f = (*c.numer() as f64) / (*c.denom() as f64);
        let tail_from = self.tail_start();
        let mut acc = KahanSum::new();
        let mut prev_pow = 0.0f64;
        let mut it = self.marginal_iter();
        // Sum directly until the certified tail bracket is negligible.
        let mut budget = 1u64 << 16;
        loop {
            for (r, f, _pmf) in it.by_ref().take(budget as usize) {
                let pow = (r as f64).powf(s);
                acc.add((pow - prev_pow) * f);
                prev_pow = pow;
            }
            let r0 = it.next_r(); // first index not yet summed
            if r0 > tail_from.max(8) {
                let br = tail::moment_tail_bracket(c_f, s, r0, it.ln_f_next());
                let mid = br.midpoint();
                if br.half_width() <= 1e-7 * (acc.value() + mid).abs() || budget >= (1 << 26) {
                    return acc.value() + mid;
                }
            }
            budget *= 2;
        }
    }

    fn moment_sum_stretched(&self, s: f64) -> f64 {
        // Stretched-exponential decay: plain summation with a doubling
        // stopping rule; terms fall off faster than any power.
        let mut acc = KahanSum::new();
        let mut prev_pow = 0.0f64;
        let mut last_block = f64::INFINITY;
        let mut it = self.marginal_iter();
        let mut block = 1usize << 12;
        while last_block > 1e-14 * acc.value().max(1.0) {
            let mut blk = 0.0;
            for (r, f, _pmf) in it.by_ref().take(block) {
                let pow = (r as f64).powf(s);
                blk += (pow - prev_pow) * f;
                prev_pow = pow;
            }
            acc.add(blk);
            last_block = blk;
            block = (block * 2).min(1 << 24);
        }
        acc.value()
    }

    /// Canonical literal, e.g. `linear:1/2` or `capped:3,2,1`.
    pub fn literal(&self) -> String {
        fn fam(f: &PeriodFamily) -> String {
            let rat = |r: &URational| {
                if *r.denom() == 1 {
                    format!("{}", r.numer())
                } else {
                    format!("{}/{}", r.numer(), r.denom())
                }
            };
            match f {
                PeriodFamily::Constant { p } => format!("constant:{p}"),
                PeriodFamily::Linear { c } => format!("linear:{}", rat(c)),
                PeriodFamily::Power { c, gamma } => format!("power:{}:{}", rat(c), rat(gamma)),
                PeriodFamily::Capped { prefix } => format!(
                    "capped:{}",
                    prefix.iter().map(|p| p.to_string()).collect::<Vec<_>>().join(",")
                ),
                PeriodFamily::Explicit { prefix, tail } => format!(
                    "explicit:{};tail={}",
                    prefix.iter().map(|p| p.to_string()).collect::<Vec<_>>().join(","),
                    fam(tail)
                ),
            }
        }
        fam(&self.family)
    }
}

impl fmt::Display for PeriodSchedule {
    fn fmt(&self, f: &mut fmt::Formatter<'_>) -> fmt::Result {
        f.write_str(&self.literal())
    }
}

/// Parses `"0.5"`, `"2"`, or `"1/3"` into an exact nonnegative rational.
pub fn parse_urational(s: &str) -> Result<URational, ScheduleError> {
    let bad = || ScheduleError::Invalid(format!("cannot parse rational {s:?}"));
    let s = s.trim();
    if let Some((n, d)) = s.split_once('/') {
        let n: u64 = n.trim().parse().map_err(|_| bad())?;
        let d: u64 = d.trim().parse().map_err(|_| bad())?;
        if d == 0 {
            return Err(bad());
        }
        return Ok(URational::new(n, d));
    }
    if let Some((int, frac)) = s.split_once('.') {
        let int: u64 = if int.is_empty() { 0 } else { int.parse().map_err(|_| bad())? };
        if frac.is_empty() || frac.len() > 18 || !frac.bytes().all(|b| b.is_ascii_digit()) {
            return Err(bad());
        }
        let scale = 10u64.pow(frac.len() as u32);
        let frac_v: u64 = frac.parse().map_err(|_| bad())?;
        return Ok(URational::new(
            int.checked_mul(scale).and_then(|v| v.checked_add(frac_v)).ok_or_else(bad)?,
            scale,
        ));
    }
    let n: u64 = s.parse().map_err(|_| bad())?;
    Ok(URational::from_integer(n))
}

impl FromStr for PeriodSchedule {
    type Err = ScheduleError;

    /// Accepts `constant:p`, `linear:c`, `power:c:gamma`, `capped:p1,p2,...`
    /// and `explicit:p1,p2,...;tail=<literal>`.
    fn from_str(s: &str) -> Result<Self, Self::Err> {
        fn parse_list(s: &str) -> Result<Vec<u64>, ScheduleError> {
            s.split(',')
                .map(|p| {
                    p.trim()
                        .parse::<u64>()
                        .map_err(|_| ScheduleError::Invalid(format!("bad period {p:?}")))
                })
                .collect()
        }
        let s = s.trim();
        let (kind, rest) = s
            .split_once(':')
            .ok_or_else(|| ScheduleError::Invalid(format!("bad schedule literal {s:?}")))?;
        match kind {
            "constant" => PeriodSchedule::constant(
                rest.parse()
                    .map_err(|_| ScheduleError::Invalid(format!("bad constant period {rest:?}")))?,
            ),
            "linear" => PeriodSchedule::linear(parse_urational(rest)?),
            "power" => {
                let (c, gamma) = rest.split_once(':').ok_or_else(|| {
                    ScheduleError::Invalid("power literal needs power:c:gamma".into())
                })?;
                PeriodSchedule::power(parse_urational(c)?, parse_urational(gamma)?)
            }
            "capped" => PeriodSchedule::capped(parse_list(rest)?),
            "explicit" => {
                let (prefix, tail) = rest.split_once(";tail=").ok_or_else(|| {
                    ScheduleError::Invalid("explicit literal needs ;tail=<literal>".into())
                })?;
                let tail_sched: PeriodSchedule = tail.parse()?;
                PeriodSchedule::explicit(parse_list(prefix)?, tail_sched.family)
            }
            _ => Err(ScheduleError::Invalid(format!("unknown family {kind:?}"))),
        }
    }
}

/// Iterator over `(r, f_r, P(K_t = r))` with compensated log-space state.
pub struct MarginalIter<'a> {
    schedule: &'a PeriodSchedule,
    r: u64,
    ln_f: KahanSum,
    dead: bool,
}

impl MarginalIter<'_> {
    /// `ln f_r` for the next `r` this iterator will yield.
    pub fn ln_f_next(&self) -> f64 {
        if self.dead {
            f64::NEG_INFINITY
        } else {
            self.ln_f.value()
        }
    }

    pub fn next_r(&self) -> u64 {
        self.r
    }
}

impl Iterator for MarginalIter<'_> {
    type Item = (u64, f64, f64);

    fn next(&mut self) -> Option<Self::Item> {
        let r = self.r;
        self.r += 1;
        if self.dead {
            return Some((r, 0.0, 0.0));
        }
        let pi = self.schedule.period_f64(r);
        let f = self.ln_f.value().exp();
        let pmf = (self.ln_f.value() - pi.ln()).exp();
        if pi == 1.0 {
            self.dead = true;
        } else {
            self.ln_f.add((-1.0 / pi).ln_1p());
        }
        Some((r, f, pmf))
    }
}
