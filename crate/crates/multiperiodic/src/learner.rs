//! The memory-based predictor and its risk scaling.
//!
//! Training recovers, from a coupled sample `X_1^T`, the seed and fact of
//! every type up to the cutoff `A_{N,T} = ⌊N/2⌋ ∧ A_T` (two parameters per
//! type, `A_T` the obligatory-type count for the sample length). A trained
//! model scores a token with probability 1 when its clocks determine it,
//! and with `P(K_t)/2` otherwise, giving the cross entropy
//!
//! ```text
//!   R(A) = P(K > A)·ln 2 − Σ_{r>A} P(K=r)·ln P(K=r)
//! ```
//!
//! For linear-growth periods `R(A)` decays like `(a + b·ln A)·A^{-1/c}`,
//! and plugging the cutoff yields risks scaling as
//! `(N0/N)^{1/c} ∨ (T0/T)^{1/(c+1)}`. The grid scan and the exponent fit
//! below reproduce those exponents from simulation; the fit models the
//! logarithmic factor explicitly, since over any finite grid a plain
//! log-log slope absorbs it as a visible bias.

use num_bigint::BigUint;
use num_traits::{One, ToPrimitive};
use rayon::prelude::*;
use thiserror::Error;

use crate::analytics::{obligatory_initial_segment, AnalyticsError};
use crate::generator::{GenError, Generator, SeedMode, TRUNCATED};
use crate::santafe::{Knowledge, KnowledgeMode, SantaFeToken};
use crate::schedule::{Finiteness, PeriodSchedule, ScheduleError};
use crate::tail;
use crate::util::{derive_seed, KahanSum};

#[derive(Debug, Error, Clone, PartialEq)]
pub enum LearnerError {
    #[error("training inconsistency: {0}")]
    TrainingInconsistency(String),
    #[error("model desynchronized at position {position}: {detail}")]
    SyncError { position: u64, detail: String },
    #[error("unsupported: {0}")]
    Unsupported(String),
    #[error("scaling fit failed: {0}")]
    Fit(String),
    #[error(transparent)]
    Analytics(#[from] AnalyticsError),
    #[error(transparent)]
    Generator(#[from] GenError),
    #[error(transparent)]
    Schedule(#[from] ScheduleError),
}

/// Parameters recovered from a training sample: seeds and facts for every
/// type up to the cutoff, plus the clock phases at the end of training.
#[derive(Debug, Clone)]
pub struct TrainedModel {
    schedule: PeriodSchedule,
    a_t: u64,
    a_nt: u64,
    seeds: Vec<u64>,
    facts: Vec<bool>,
    end_clocks: Vec<u64>,
    periods: Vec<u64>,
    train_len: u64,
}

impl TrainedModel {
    pub fn schedule(&self) -> &PeriodSchedule {
        &self.schedule
    }

    /// Obligatory-type count of the training sample length.
    pub fn a_t(&self) -> u64 {
        self.a_t
    }

    /// Cutoff `⌊N/2⌋ ∧ A_T`.
    pub fn a_nt(&self) -> u64 {
        self.a_nt
    }

    /// One seed plus one fact per learned type.
    pub fn param_count(&self) -> u64 {
        2 * self.a_nt
    }

    pub fn recovered_seed(&self, r: u64) -> Option<u64> {
        self.seeds.get(r as usize - 1).copied()
    }

    pub fn recovered_fact(&self, r: u64) -> Option<bool> {
        self.facts.get(r as usize - 1).copied()
    }

    /// Clock phases at the end of the training sample.
    pub fn end_clocks(&self) -> &[u64] {
        &self.end_clocks
    }

    pub fn train_len(&self) -> u64 {
        self.train_len
    }

    /// Diagnostic only: the number of hidden states of the equivalent
    /// finite-state process, `Π_{r ≤ A_NT} π_r`.
    pub fn hidden_state_count(&self) -> BigUint {
        self.periods
            .iter()
            .fold(BigUint::one(), |acc, &p| acc * BigUint::from(p))
    }

    /// Restriction of the model to a smaller cutoff. Recovered parameters
    /// are unchanged; the model simply forgets the tail.
    pub fn restrict(&self, a_nt: u64) -> TrainedModel {
        assert!(a_nt <= self.a_nt, "can only restrict to a smaller cutoff");
        let n = a_nt as usize;
        TrainedModel {
            schedule: self.schedule.clone(),
            a_t: self.a_t,
            a_nt,
            seeds: self.seeds[..n].to_vec(),
            facts: self.facts[..n].to_vec(),
            end_clocks: self.end_clocks[..n].to_vec(),
            periods: self.periods[..n].to_vec(),
            train_len: self.train_len,
        }
    }
}

/// Recovers seeds and facts for all types up to `⌊N/2⌋ ∧ A_T` from a
/// coupled sample of length `t`.
///
/// The seed of type `r` is read off the position of its first occurrence
/// within the ≥r decimated view of the sample (which cannot exceed `π_r`
/// for a matching process); the fact is the paired bit. Types up to `A_T`
/// that never appear violate the uniform waiting bound and are reported
/// as [`LearnerError::TrainingInconsistency`].
pub fn train(
    schedule: &PeriodSchedule,
    n_params: u64,
    sample: impl Iterator<Item = SantaFeToken>,
    t: u64,
) -> Result<TrainedModel, LearnerError> {
    let a_t = obligatory_initial_segment(schedule, t)?;
    let a_nt = (n_params / 2).min(a_t);
    let periods: Vec<u64> = (1..=a_nt)
        .map(|r| schedule.try_period_at(r))
        .collect::<Result<_, _>>()?;

    let mut counts = vec![0u64; a_nt as usize];
    let mut seeds = vec![0u64; a_nt as usize];
    let mut facts = vec![false; a_nt as usize];
    let mut recovered = vec![false; a_nt as usize];
    let mut seen = vec![false; a_t as usize];
    let mut processed = 0u64;

    for tok in sample.take(t as usize) {
        processed += 1;
        let k = tok.k;
        let lim = k.min(a_nt) as usize;
        for c in counts[..lim].iter_mut() {
            *c += 1;
        }
        if k >= 1 && k <= a_t {
            seen[k as usize - 1] = true;
        }
        if k >= 1 && k <= a_nt {
            let ki = k as usize - 1;
            if !recovered[ki] {
                recovered[ki] = true;
                let pos = counts[ki];
                if pos > periods[ki] {
                    return Err(LearnerError::TrainingInconsistency(format!(
                        "first occurrence of type {k} at decimated position {pos} exceeds \
                         its period {}; sample does not match the schedule",
                        periods[ki]
                    )));
                }
                seeds[ki] = pos;
                facts[ki] = tok.z;
            } else if facts[ki] != tok.z {
                return Err(LearnerError::TrainingInconsistency(format!(
                    "contradictory facts observed for type {k}"
                )));
            }
        }
    }
    if processed < t {
        return Err(LearnerError::TrainingInconsistency(format!(
            "sample ended after {processed} tokens, expected {t}"
        )));
    }
    if let Some(missing) = seen.iter().position(|s| !s) {
        return Err(LearnerError::TrainingInconsistency(format!(
            "obligatory type {} absent from a sample of length {t}",
            missing + 1
        )));
    }

    // Phase of clock r after c_r touches: fires at decimated positions
    // ≡ σ_r (mod π_r), so the countdown is (σ_r − 1 − c_r) mod π_r, +1.
    let end_clocks: Vec<u64> = (0..a_nt as usize)
        .map(|i| {
            let pi = periods[i] as i128;
            ((seeds[i] as i128 - 1 - counts[i] as i128).rem_euclid(pi)) as u64 + 1
        })
        .collect();

    Ok(TrainedModel {
        schedule: schedule.clone(),
        a_t,
        a_nt,
        seeds,
        facts,
        end_clocks,
        periods,
        train_len: t,
    })
}

/// Result of scoring one token.
#[derive(Debug, Clone, Copy, PartialEq)]
pub struct StepScore {
    /// `−ln Q_t(x_t)` in nats.
    pub log_loss: f64,
    /// Whether the maximum-probability prediction equaled the token.
    pub argmax_correct: bool,
    /// Whether the model computed the token from its clocks.
    pub deterministic: bool,
}

/// Per-evaluation prediction cursor.
///
/// A fresh test stream carries fresh seeds, so the cursor first
/// re-synchronizes: it watches the stream until every known type has
/// appeared once (bounded by the uniform waiting bound), reading off
/// phases and facts, and only then starts scoring. Scored tokens with
/// `K_t ≤ A_NT` must match the clock-determined prediction exactly;
/// anything else is a desynchronization error. Clocks advance on the
/// observed token, so types above the cutoff keep the known clocks in
/// step.
/// `ln P(K = r)` lookup with bounded memory: a dense prefix table plus
/// sparse anchor points for the rare huge tokens of random-seed streams.
#[derive(Debug, Default)]
struct LnPmfTable {
    dense: Vec<f64>,
    edge_r: u64,
    edge_lnf: KahanSum,
    anchors: std::collections::BTreeMap<u64, f64>,
}

const PMF_DENSE_LIMIT: usize = 1 << 22;

impl LnPmfTable {
    fn query(&mut self, schedule: &PeriodSchedule, k: u64) -> f64 {
        if let Some(&v) = self.dense.get(k as usize - 1) {
            return v;
        }
        if self.edge_r == 0 {
            self.edge_r = 1;
        }
        if (k as usize) <= PMF_DENSE_LIMIT {
            while (self.dense.len() as u64) < k {
                let r = self.dense.len() as u64 + 1;
                debug_assert_eq!(r, self.edge_r);
                let pi = schedule.period_f64(r);
                self.dense.push(self.edge_lnf.value() - pi.ln());
                if pi == 1.0 {
                    self.edge_lnf = KahanSum::new();
                    self.edge_lnf.add(f64::NEG_INFINITY);
                } else {
                    self.edge_lnf.add((-1.0 / pi).ln_1p());
                }
                self.edge_r = r + 1;
            }
            return self.dense[k as usize - 1];
        }
        if let Some(&lnf) = self.anchors.get(&k) {
            return lnf - schedule.period_f64(k).ln();
        }
        // Walk from the closest exact point at or below k.
        let (mut r, mut lnf) = self
            .anchors
            .range(..=k)
            .next_back()
            .map(|(&r, &v)| (r, v))
            .unwrap_or((0, 0.0));
        if self.edge_r > r && self.edge_r <= k {
            r = self.edge_r;
            lnf = self.edge_lnf.value();
        } else if r == 0 {
            r = 1;
            lnf = 0.0;
        }
        let mut acc = KahanSum::new();
        acc.add(lnf);
        while r < k {
            let pi = schedule.period_f64(r);
            if pi == 1.0 {
                acc = KahanSum::new();
                acc.add(f64::NEG_INFINITY);
            } else {
                acc.add((-1.0 / pi).ln_1p());
            }
            r += 1;
        }
        self.anchors.insert(k, acc.value());
        acc.value() - schedule.period_f64(k).ln()
    }
}

pub struct EvalCursor<'m> {
    model: &'m TrainedModel,
    burning_in: bool,
    counts: Vec<u64>,
    sigma_hat: Vec<u64>,
    facts: Vec<bool>,
    synced: Vec<bool>,
    pending: u64,
    clocks: Vec<u64>,
    observed: u64,
    ln_pmf: LnPmfTable,
    /// Mean log loss substituted for truncated tail tokens.
    truncation_rb: Option<f64>,
}

impl<'m> EvalCursor<'m> {
    pub fn new(model: &'m TrainedModel) -> Self {
        let a = model.a_nt as usize;
        EvalCursor {
            model,
            burning_in: a > 0,
            counts: vec![0; a],
            sigma_hat: vec![0; a],
            facts: vec![false; a],
            synced: vec![false; a],
            pending: a as u64,
            clocks: vec![0; a],
            observed: 0,
            ln_pmf: LnPmfTable::default(),
            truncation_rb: None,
        }
    }

    /// Accepts [`TRUNCATED`] tail tokens, scoring each with `rb`, the
    /// conditional mean loss above the truncation cutoff. Substituting
    /// the conditional mean keeps the empirical risk unbiased while
    /// removing the (infeasible) need to resolve heavy-tail identities.
    pub fn with_truncation(mut self, rb: f64) -> Self {
        self.truncation_rb = Some(rb);
        self
    }

    /// True once re-synchronization is complete and scoring may begin.
    pub fn ready(&self) -> bool {
        !self.burning_in
    }

    pub fn observed(&self) -> u64 {
        self.observed
    }

    fn ln_pmf(&mut self, k: u64) -> f64 {
        self.ln_pmf.query(&self.model.schedule, k)
    }

    /// Consumes one burn-in token; returns `true` when the cursor became
    /// ready (scoring starts with the next token).
    pub fn observe_burnin(&mut self, tok: SantaFeToken) -> Result<bool, LearnerError> {
        if !self.burning_in {
            return Err(LearnerError::Unsupported(
                "cursor is already past burn-in".into(),
            ));
        }
        self.observed += 1;
        let a = self.model.a_nt;
        let k = tok.k;
        let lim = k.min(a) as usize;
        for c in self.counts[..lim].iter_mut() {
            *c += 1;
        }
        if k >= 1 && k <= a {
            let ki = k as usize - 1;
            if !self.synced[ki] {
                self.synced[ki] = true;
                self.pending -= 1;
                let pos = self.counts[ki];
                if pos > self.model.periods[ki] {
                    return Err(LearnerError::SyncError {
                        position: self.observed,
                        detail: format!(
                            "first occurrence of type {k} at decimated position {pos} \
                             exceeds its period {}",
                            self.model.periods[ki]
                        ),
                    });
                }
                self.sigma_hat[ki] = pos;
                self.facts[ki] = tok.z;
            } else if self.facts[ki] != tok.z {
                return Err(LearnerError::SyncError {
                    position: self.observed,
                    detail: format!("fact for type {k} changed during burn-in"),
                });
            }
        }
        if self.pending == 0 {
            for i in 0..a as usize {
                let pi = self.model.periods[i] as i128;
                self.clocks[i] =
                    ((self.sigma_hat[i] as i128 - 1 - self.counts[i] as i128).rem_euclid(pi))
                        as u64
                        + 1;
            }
            self.burning_in = false;
            return Ok(true);
        }
        Ok(false)
    }

    /// Scores one token and advances the clocks.
    pub fn score(&mut self, tok: SantaFeToken) -> Result<StepScore, LearnerError> {
        if self.burning_in {
            return Err(LearnerError::Unsupported(
                "cursor still burning in; feed observe_burnin first".into(),
            ));
        }
        self.observed += 1;
        let a = self.model.a_nt;
        let k = tok.k;

        // The model's prediction: the first known clock at 1 fires.
        let fire = self.clocks.iter().position(|&phi| phi == 1);
        let score = match fire {
            Some(i) => {
                let r = i as u64 + 1;
                if k != r || tok.z != self.facts[i] {
                    return Err(LearnerError::SyncError {
                        position: self.observed,
                        detail: format!(
                            "clocks determine token ({r}, {}), observed ({k}, {})",
                            self.facts[i] as u8, tok.z as u8
                        ),
                    });
                }
                StepScore {
                    log_loss: 0.0,
                    argmax_correct: true,
                    deterministic: true,
                }
            }
            None if k == TRUNCATED => {
                let Some(rb) = self.truncation_rb else {
                    return Err(LearnerError::SyncError {
                        position: self.observed,
                        detail: "truncated token fed to an exact cursor".into(),
                    });
                };
                StepScore {
                    log_loss: rb,
                    argmax_correct: false,
                    deterministic: false,
                }
            }
            None => {
                if k <= a {
                    return Err(LearnerError::SyncError {
                        position: self.observed,
                        detail: format!(
                            "observed known type {k} while its clock shows {}",
                            self.clocks[k as usize - 1]
                        ),
                    });
                }
                // Unpredictable token: probability P(K_t)/2. The argmax
                // fallback is the most probable unseen pair, (A_NT+1, 0)
                // for a monotone schedule, ties broken toward bit 0.
                let log_loss = std::f64::consts::LN_2 - self.ln_pmf(k);
                StepScore {
                    log_loss,
                    argmax_correct: k == a + 1 && !tok.z,
                    deterministic: false,
                }
            }
        };

        // Advance: every clock left of the token was passed and decrements;
        // the token's own clock (if known) resets.
        let lim = (k - 1).min(a) as usize;
        for phi in self.clocks[..lim].iter_mut() {
            debug_assert!(*phi > 1);
            *phi -= 1;
        }
        if k >= 1 && k <= a {
            self.clocks[k as usize - 1] = self.model.periods[k as usize - 1];
        }
        Ok(score)
    }

    /// Probability the model assigns to the observed token, advancing the
    /// online clocks afterwards.
    pub fn predict_token_prob(&mut self, tok: SantaFeToken) -> Result<f64, LearnerError> {
        Ok((-self.score(tok)?.log_loss).exp())
    }
}

/// Aggregate result of scoring a test stream.
#[derive(Debug, Clone, Copy, PartialEq)]
pub struct EvalReport {
    /// Mean `−ln Q_t` over the scored window, nats.
    pub mean_log_loss: f64,
    /// Standard error of the mean (token-level, treating tokens as
    /// independent — conservative for these near-periodic streams).
    pub stderr: f64,
    /// Fraction of scored tokens where the argmax prediction missed.
    pub error_rate: f64,
    /// Fraction of scored tokens above the cutoff (the unpredictable ones).
    pub tail_fraction: f64,
    pub scored: u64,
    pub burnin_used: u64,
}

/// Burn-in bound: all types up to `a` appear within w̄_a tokens.
fn burnin_bound(schedule: &PeriodSchedule, a: u64) -> Result<u64, LearnerError> {
    if a == 0 {
        return Ok(0);
    }
    let wbar = schedule
        .wbar_uniform_bound(a)
        .map_err(LearnerError::Schedule)?;
    Ok(wbar.to_f64().unwrap_or(f64::INFINITY).ceil() as u64)
}

/// Runs burn-in plus `i_tokens` scored tokens against a fresh narration
/// generator coupled with `knowledge`.
pub fn evaluate_model(
    model: &TrainedModel,
    narration: &mut Generator,
    knowledge: &Knowledge,
    i_tokens: u64,
) -> Result<EvalReport, LearnerError> {
    let cap = burnin_bound(model.schedule(), model.a_nt())?;
    let mut cursor = EvalCursor::new(model);
    let mut burnin_used = 0u64;
    while !cursor.ready() {
        if burnin_used > cap {
            return Err(LearnerError::SyncError {
                position: burnin_used,
                detail: format!(
                    "burn-in exceeded the uniform waiting bound {cap}; stream does not \
                     match the schedule"
                ),
            });
        }
        let k = narration.next_token()?;
        cursor.observe_burnin(SantaFeToken {
            k,
            z: knowledge.fact(k),
        })?;
        burnin_used += 1;
    }

    let mut mean = KahanSum::new();
    let mut sq = KahanSum::new();
    let mut errors = 0u64;
    let mut tail = 0u64;
    for _ in 0..i_tokens {
        let k = narration.next_token()?;
        let step = cursor.score(SantaFeToken {
            k,
            z: knowledge.fact(k),
        })?;
        mean.add(step.log_loss);
        sq.add(step.log_loss * step.log_loss);
        if !step.argmax_correct {
            errors += 1;
        }
        if !step.deterministic {
            tail += 1;
        }
    }
    let n = i_tokens as f64;
    let mean_log_loss = mean.value() / n;
    let var = (sq.value() / n - mean_log_loss * mean_log_loss).max(0.0);
    Ok(EvalReport {
        mean_log_loss,
        stderr: (var / n).sqrt(),
        error_rate: errors as f64 / n,
        tail_fraction: tail as f64 / n,
        scored: i_tokens,
        burnin_used,
    })
}

/// Log-loss evaluation on a freshly seeded test process: fresh narration
/// seeds and fresh knowledge, with the burn-in excluded from the average.
pub fn cross_entropy_empirical(
    model: &TrainedModel,
    narration_seed: u64,
    knowledge_seed: u64,
    i_tokens: u64,
) -> Result<EvalReport, LearnerError> {
    let mut narration = Generator::new(
        model.schedule().clone(),
        SeedMode::RandomUniform {
            rng_seed: narration_seed,
        },
    );
    let knowledge = Knowledge::new(KnowledgeMode::IidFair {
        rng_seed: knowledge_seed,
    });
    evaluate_model(model, &mut narration, &knowledge, i_tokens)
}

/// 0–1-loss evaluation; same pass as [`cross_entropy_empirical`], kept as
/// its own entry point for callers that only need the error rate.
pub fn error_rate_empirical(
    model: &TrainedModel,
    narration_seed: u64,
    knowledge_seed: u64,
    i_tokens: u64,
) -> Result<EvalReport, LearnerError> {
    cross_entropy_empirical(model, narration_seed, knowledge_seed, i_tokens)
}

/// Analytic cross entropy with a certified truncation bound.
#[derive(Debug, Clone, Copy, PartialEq)]
pub struct AnalyticRisk {
    pub nats: f64,
    /// Bound on the absolute truncation error of `nats`.
    pub truncation_bound: f64,
}

/// `R(A) = P(K > A)·ln 2 − Σ_{r>A} P(K=r)·ln P(K=r)` in nats.
pub fn cross_entropy_analytic(
    schedule: &PeriodSchedule,
    a: u64,
) -> Result<AnalyticRisk, LearnerError> {
    Ok(risk_table(schedule, &[a])?[0])
}

/// Batch analytic risks: one marginal sweep serves every cutoff.
pub fn risk_table(
    schedule: &PeriodSchedule,
    a_values: &[u64],
) -> Result<Vec<AnalyticRisk>, LearnerError> {
    if a_values.is_empty() {
        return Ok(Vec::new());
    }
    const LN2: f64 = std::f64::consts::LN_2;

    // Finite support: exact finite sum.
    if let Some(sup) = schedule.first_unit_period() {
        let mut out = Vec::with_capacity(a_values.len());
        for &a in a_values {
            let mut acc = 0.0f64;
            for (r, f, pmf) in schedule.marginal_iter().take(sup as usize) {
                if r > a && pmf > 0.0 {
                    let _ = f;
                    acc += pmf * (LN2 - pmf.ln());
                }
            }
            out.push(AnalyticRisk {
                nats: acc,
                truncation_bound: 0.0,
            });
        }
        return Ok(out);
    }

    let probe = SeedMode::RandomUniform { rng_seed: 0 };
    if schedule.classify_finiteness(&probe) != Finiteness::Finite {
        return Err(LearnerError::Unsupported(format!(
            "{schedule} is not finite; the marginal is improper and the risk undefined"
        )));
    }

    let max_a = *a_values.iter().max().unwrap();
    if let Some(c) = schedule.linear_coefficient() {
        let c_f = (*c.numer() as f64) / (*c.denom() as f64);
        return risk_table_gamma1(schedule, a_values, max_a, c_f);
    }
    match schedule.family() {
        crate::schedule::PeriodFamily::Constant { p } => Ok(a_values
            .iter()
            .map(|&a| risk_constant(*p, a))
            .collect()),
        _ => risk_table_stretched(schedule, a_values, max_a),
    }
}

/// Closed form for constant periods: with `ρ = (p−1)/p`,
/// `R(A) = ρ^A·[ln 2 + ln p + ln(1/ρ)·(A + p − 1)]`.
fn risk_constant(p: u64, a: u64) -> AnalyticRisk {
    let p_f = p as f64;
    let rho = (p_f - 1.0) / p_f;
    let l = -rho.ln();
    let nats = rho.powi(a as i32)
        * (std::f64::consts::LN_2 + p_f.ln() + l * (a as f64 + p_f - 1.0));
    AnalyticRisk {
        nats,
        truncation_bound: nats * 1e-14,
    }
}

fn risk_table_gamma1(
    schedule: &PeriodSchedule,
    a_values: &[u64],
    max_a: u64,
    c_f: f64,
) -> Result<Vec<AnalyticRisk>, LearnerError> {
    const LN2: f64 = std::f64::consts::LN_2;
    let tail_from = (16.0 / c_f).ceil() as u64;
    let mut sorted: Vec<u64> = a_values.to_vec();
    sorted.sort_unstable();
    sorted.dedup();

    // Partial entropy sums S(a) = Σ_{r≤a} t_r and marginals f_{a+1},
    // recorded at each requested cutoff during a single sweep.
    let mut s_at = std::collections::HashMap::new();
    let mut f_next_at = std::collections::HashMap::new();
    let mut acc = KahanSum::new();
    let mut it = schedule.marginal_iter();
    let mut next_mark = 0usize;
    let mut r0;
    let mut budget = (1u64 << 20).max(4 * max_a.max(1));
    let (total, bracket) = loop {
        while it.next_r() <= budget {
            if next_mark < sorted.len() && it.next_r() == sorted[next_mark] + 1 {
                s_at.insert(sorted[next_mark], acc.value());
                f_next_at.insert(sorted[next_mark], it.ln_f_next().exp());
                next_mark += 1;
            }
            let (_r, _f, pmf) = it.next().expect("infinite support");
            if pmf > 0.0 {
                acc.add(pmf * (-pmf.ln()));
            }
        }
        r0 = it.next_r();
        if r0 > tail_from.max(max_a + 1) {
            let br = tail::entropy_tail_bracket(c_f, r0, it.ln_f_next());
            // Aim the certified bound at the smallest requested risk.
            let smallest = acc.value() - s_at.get(&max_a).copied().unwrap_or(0.0)
                + br.midpoint()
                + LN2 * f_next_at.get(&max_a).copied().unwrap_or(1.0);
            if br.half_width() <= 1e-9 * smallest.max(f64::MIN_POSITIVE) || budget >= (1 << 26) {
                break (acc.value() + br.midpoint(), br);
            }
        }
        budget *= 2;
    };

    Ok(a_values
        .iter()
        .map(|a| {
            let s = s_at[a];
            let f_next = f_next_at[a];
            AnalyticRisk {
                nats: LN2 * f_next + (total - s),
                truncation_bound: bracket.half_width(),
            }
        })
        .collect())
}

/// Mean log loss of a token conditioned on exceeding `r_star`:
/// `E[ln 2 − ln P(K) | K > r*] = R(r*) / P(K > r*)`.
pub fn tail_conditional_mean(
    schedule: &PeriodSchedule,
    r_star: u64,
) -> Result<f64, LearnerError> {
    let risk = risk_table(schedule, &[r_star])?[0];
    let tail = schedule.marginal_f(r_star + 1);
    if tail <= 0.0 {
        return Ok(0.0); // finite support exhausted: tail tokens never occur
    }
    Ok(risk.nats / tail)
}

/// Stretched-exponential decay (`γ < 1` power families): doubling blocks
/// with a heuristic stop; the reported bound is the last block increment.
fn risk_table_stretched(
    schedule: &PeriodSchedule,
    a_values: &[u64],
    max_a: u64,
) -> Result<Vec<AnalyticRisk>, LearnerError> {
    const LN2: f64 = std::f64::consts::LN_2;
    let mut sorted: Vec<u64> = a_values.to_vec();
    sorted.sort_unstable();
    sorted.dedup();
    let mut s_at = std::collections::HashMap::new();
    let mut f_next_at = std::collections::HashMap::new();
    let mut acc = KahanSum::new();
    let mut it = schedule.marginal_iter();
    let mut next_mark = 0usize;
    let mut block = (1usize << 14).max(2 * max_a as usize);
    let mut last_block = f64::INFINITY;
    while last_block > 1e-13 * acc.value().max(1e-300) || next_mark < sorted.len() {
        let mut blk = 0.0f64;
        for _ in 0..block {
            if next_mark < sorted.len() && it.next_r() == sorted[next_mark] + 1 {
                s_at.insert(sorted[next_mark], acc.value() + blk);
                f_next_at.insert(sorted[next_mark], it.ln_f_next().exp());
                next_mark += 1;
            }
            let (_r, _f, pmf) = it.next().expect("infinite support");
            if pmf > 0.0 {
                blk += pmf * (-pmf.ln());
            }
        }
        acc.add(blk);
        last_block = blk;
        block = (block * 2).min(1 << 24);
    }
    Ok(a_values
        .iter()
        .map(|a| AnalyticRisk {
            nats: LN2 * f_next_at[a] + (acc.value() - s_at[a]),
            truncation_bound: last_block,
        })
        .collect())
}

/// One cell of the scaling scan, averaged over repetitions.
#[derive(Debug, Clone, PartialEq)]
pub struct ScanRow {
    pub c: f64,
    pub n: u64,
    pub t: u64,
    pub a_nt: u64,
    pub r_analytic: f64,
    pub r_empirical: f64,
    pub stderr: f64,
    pub error_rate: f64,
    pub reps: u32,
}

#[derive(Debug, Clone)]
pub struct ScalingTable {
    pub schedule: PeriodSchedule,
    pub test_tokens: u64,
    pub rows: Vec<ScanRow>,
}

#[derive(Debug, Clone)]
pub struct ScanConfig {
    pub schedule: PeriodSchedule,
    pub n_grid: Vec<u64>,
    pub t_grid: Vec<u64>,
    /// Scored test tokens per cell (after burn-in).
    pub test_tokens: u64,
    pub reps: u32,
    pub rng_seed: u64,
}

/// Trains and evaluates the memory-based model over an (N, T) grid.
///
/// For each `(T, rep)` a full-cutoff model is trained once on a fresh
/// training process; every `N` on the grid is a restriction of it, which
/// recovers exactly the parameters a dedicated smaller training run
/// would. Each restriction re-synchronizes on a shared fresh test stream
/// and scores `test_tokens` tokens. All RNG seeds derive deterministically
/// from `rng_seed`, so the scan is reproducible cell for cell.
///
/// Streams use the process restricted to types ≤ `max_T A_T + 1` — exact
/// for everything the models distinguish — and score rarer tokens by
/// their conditional mean loss. This keeps every cell's empirical risk
/// unbiased while avoiding the `Θ(T²)` clock work that resolving the
/// heavy-tail identities would cost for super-linear period growth.
pub fn scaling_scan(cfg: &ScanConfig) -> Result<ScalingTable, LearnerError> {
    let schedule = &cfg.schedule;
    let c = schedule
        .linear_coefficient()
        .ok_or_else(|| LearnerError::Unsupported("scaling scan needs linear-growth periods".into()))?;
    let c_f = (*c.numer() as f64) / (*c.denom() as f64);
    if cfg.n_grid.is_empty() || cfg.t_grid.is_empty() || cfg.reps == 0 || cfg.test_tokens == 0 {
        return Err(LearnerError::Unsupported("empty scan grid".into()));
    }

    // a_t per T and the distinct cutoffs for the analytic risks.
    let mut a_t_of = std::collections::HashMap::new();
    let mut cutoffs: Vec<u64> = Vec::new();
    for &t in &cfg.t_grid {
        let a_t = obligatory_initial_segment(schedule, t)?;
        a_t_of.insert(t, a_t);
        for &n in &cfg.n_grid {
            cutoffs.push((n / 2).min(a_t));
        }
    }
    cutoffs.sort_unstable();
    cutoffs.dedup();
    let risks = risk_table(schedule, &cutoffs)?;
    let risk_of: std::collections::HashMap<u64, f64> = cutoffs
        .iter()
        .zip(risks.iter())
        .map(|(&a, r)| (a, r.nats))
        .collect();

    // Truncation cutoff: one past the largest obligatory type anywhere in
    // the grid, so the argmax fallback pair (A+1, 0) is always resolved.
    let r_star = a_t_of.values().copied().max().unwrap() + 1;
    let rb = tail_conditional_mean(schedule, r_star)?;

    // One unit of work = (t index, repetition).
    let units: Vec<(usize, u32)> = (0..cfg.t_grid.len())
        .flat_map(|ti| (0..cfg.reps).map(move |rep| (ti, rep)))
        .collect();

    struct CellStat {
        mean: f64,
        se2: f64,
        err: f64,
    }

    fn decode(v: u32) -> u64 {
        if v == u32::MAX {
            TRUNCATED
        } else {
            v as u64
        }
    }

    let per_unit: Result<Vec<Vec<CellStat>>, LearnerError> = units
        .par_iter()
        .map(|&(ti, rep)| {
            let t = cfg.t_grid[ti];
            let a_t = a_t_of[&t];
            let unit_seed = derive_seed(cfg.rng_seed, ((rep as u64) << 32) | ti as u64);
            let train_narr = derive_seed(unit_seed, 0);
            let train_know = derive_seed(unit_seed, 1);
            let test_narr = derive_seed(unit_seed, 2);
            let test_know = derive_seed(unit_seed, 3);

            // Train once at the full cutoff.
            let mut gen = Generator::new(
                schedule.clone(),
                SeedMode::RandomUniform {
                    rng_seed: train_narr,
                },
            );
            let knowledge = Knowledge::new(KnowledgeMode::IidFair {
                rng_seed: train_know,
            });
            let sample = (0..t).map(|_| {
                let k = gen.next_token_truncated(r_star).expect("finite schedule");
                SantaFeToken {
                    k,
                    z: k != TRUNCATED && knowledge.fact(k),
                }
            });
            let full = train(schedule, 2 * a_t, sample, t)?;

            // Shared fresh test stream: burn-in ≤ w̄_{A_T} ≤ T.
            let mut test_gen = Generator::new(
                schedule.clone(),
                SeedMode::RandomUniform {
                    rng_seed: test_narr,
                },
            );
            let test_knowledge = Knowledge::new(KnowledgeMode::IidFair {
                rng_seed: test_know,
            });
            let stream_len = t + cfg.test_tokens;
            let mut narration = Vec::with_capacity(stream_len as usize);
            for _ in 0..stream_len {
                let k = test_gen.next_token_truncated(r_star)?;
                narration.push(if k == TRUNCATED { u32::MAX } else { k as u32 });
            }

            let mut stats = Vec::with_capacity(cfg.n_grid.len());
            for &n in &cfg.n_grid {
                let a_nt = (n / 2).min(a_t);
                let model = full.restrict(a_nt);
                let mut cursor = EvalCursor::new(&model).with_truncation(rb);
                let mut pos = 0usize;
                while !cursor.ready() {
                    if pos >= narration.len() {
                        return Err(LearnerError::SyncError {
                            position: pos as u64,
                            detail: "test stream exhausted during burn-in".into(),
                        });
                    }
                    let k = decode(narration[pos]);
                    cursor.observe_burnin(SantaFeToken {
                        k,
                        z: k != TRUNCATED && test_knowledge.fact(k),
                    })?;
                    pos += 1;
                }
                let mut mean = KahanSum::new();
                let mut sq = KahanSum::new();
                let mut errors = 0u64;
                for _ in 0..cfg.test_tokens {
                    let k = if pos < narration.len() {
                        decode(narration[pos])
                    } else {
                        test_gen.next_token_truncated(r_star)?
                    };
                    pos += 1;
                    let step = cursor.score(SantaFeToken {
                        k,
                        z: k != TRUNCATED && test_knowledge.fact(k),
                    })?;
                    mean.add(step.log_loss);
                    sq.add(step.log_loss * step.log_loss);
                    if !step.argmax_correct {
                        errors += 1;
                    }
                }
                let i = cfg.test_tokens as f64;
                let m = mean.value() / i;
                let var = (sq.value() / i - m * m).max(0.0);
                stats.push(CellStat {
                    mean: m,
                    se2: var / i,
                    err: errors as f64 / i,
                });
            }
            Ok(stats)
        })
        .collect();
    let per_unit = per_unit?;

    // Merge repetitions in deterministic grid order.
    let mut rows = Vec::with_capacity(cfg.n_grid.len() * cfg.t_grid.len());
    for (ti, &t) in cfg.t_grid.iter().enumerate() {
        let a_t = a_t_of[&t];
        for (ni, &n) in cfg.n_grid.iter().enumerate() {
            let a_nt = (n / 2).min(a_t);
            let mut mean = 0.0;
            let mut se2 = 0.0;
            let mut err = 0.0;
            for rep in 0..cfg.reps {
                let unit_idx = ti * cfg.reps as usize + rep as usize;
                let stat = &per_unit[unit_idx][ni];
                mean += stat.mean;
                se2 += stat.se2;
                err += stat.err;
            }
            let reps = cfg.reps as f64;
            rows.push(ScanRow {
                c: c_f,
                n,
                t,
                a_nt,
                r_analytic: risk_of[&a_nt],
                r_empirical: mean / reps,
                stderr: se2.sqrt() / reps,
                error_rate: err / reps,
                reps: cfg.reps,
            });
        }
    }
    rows.sort_by_key(|row| (row.n, row.t));
    Ok(ScalingTable {
        schedule: schedule.clone(),
        test_tokens: cfg.test_tokens,
        rows,
    })
}

/// Fitted scaling exponents and amplitude constants.
#[derive(Debug, Clone, Copy, PartialEq)]
pub struct ScalingFit {
    pub gamma_n: f64,
    pub gamma_t: f64,
    pub n0: f64,
    pub t0: f64,
    /// `|γ_T − γ_N/(γ_N + 1)|`.
    pub constraint_residual: f64,
    pub n_points: usize,
    pub t_points: usize,
}

/// Least squares for the log-corrected power law
/// `y = e^{β0}·(ρ + ln x)·x^{-γ}` (the pure power law is the `ρ → ∞`
/// limit and is always offered as a candidate). Returns `(γ, sse)`
/// together with the fitted curve parameters.
fn fit_log_corrected(points: &[(f64, f64)]) -> Result<(f64, f64, Option<f64>, f64), LearnerError> {
    if points.len() < 3 {
        return Err(LearnerError::Fit(format!(
            "need ≥ 3 points, got {}",
            points.len()
        )));
    }
    if points.iter().any(|&(x, y)| x <= 1.0 || y <= 0.0) {
        return Err(LearnerError::Fit("points must have x > 1, y > 0".into()));
    }
    let logs: Vec<(f64, f64)> = points.iter().map(|&(x, y)| (x.ln(), y.ln())).collect();

    // Inner 2-parameter OLS of (ln y − ln(ρ + u)) on u for a fixed ρ.
    let ols = |shift: &dyn Fn(f64) -> f64| -> (f64, f64, f64) {
        let n = logs.len() as f64;
        let zs: Vec<(f64, f64)> = logs.iter().map(|&(u, ly)| (u, ly - shift(u))).collect();
        let mu = zs.iter().map(|p| p.0).sum::<f64>() / n;
        let mz = zs.iter().map(|p| p.1).sum::<f64>() / n;
        let sxx: f64 = zs.iter().map(|p| (p.0 - mu).powi(2)).sum();
        let sxy: f64 = zs.iter().map(|p| (p.0 - mu) * (p.1 - mz)).sum();
        let slope = sxy / sxx;
        let beta0 = mz - slope * mu;
        let sse: f64 = zs
            .iter()
            .map(|p| (p.1 - (beta0 + slope * p.0)).powi(2))
            .sum();
        (-slope, beta0, sse)
    };

    // Pure power-law candidate (ρ → ∞ limit).
    let (mut best_gamma, mut best_beta0, mut best_sse) = ols(&|_| 0.0);
    let mut best_rho: Option<f64> = None;

    // Coarse log-grid sweep over the correction scale ρ…
    let sse_at = |ln_rho: f64| ols(&|u| (ln_rho.exp() + u).ln()).2;
    let mut coarse_best: Option<(f64, f64)> = None;
    let (lo, hi) = (-3.0 * std::f64::consts::LN_10, 9.0 * std::f64::consts::LN_10);
    let steps = 240;
    for i in 0..=steps {
        let ln_rho = lo + (hi - lo) * i as f64 / steps as f64;
        let sse = sse_at(ln_rho);
        if coarse_best.map_or(true, |(_, s)| sse < s) {
            coarse_best = Some((ln_rho, sse));
        }
    }
    // …then golden-section refinement around the coarse minimum.
    if let Some((center, _)) = coarse_best {
        let step = (hi - lo) / steps as f64;
        let (mut a, mut b) = (center - step, center + step);
        let phi = (5f64.sqrt() - 1.0) / 2.0;
        let (mut x1, mut x2) = (b - phi * (b - a), a + phi * (b - a));
        let (mut f1, mut f2) = (sse_at(x1), sse_at(x2));
        for _ in 0..60 {
            if f1 <= f2 {
                b = x2;
                x2 = x1;
                f2 = f1;
                x1 = b - phi * (b - a);
                f1 = sse_at(x1);
            } else {
                a = x1;
                x1 = x2;
                f1 = f2;
                x2 = a + phi * (b - a);
                f2 = sse_at(x2);
            }
        }
        let ln_rho = 0.5 * (a + b);
        let rho = ln_rho.exp();
        let (g, b0, sse) = ols(&|u| (rho + u).ln());
        if sse < best_sse - 1e-15 {
            best_sse = sse;
            best_gamma = g;
            best_beta0 = b0;
            best_rho = Some(rho);
        }
    }
    Ok((best_gamma, best_beta0, best_rho, best_sse))
}

fn amplitude_scale(points: &[(f64, f64)], gamma: f64, beta0: f64, rho: Option<f64>) -> f64 {
    // Scale x0 with R(x0-normalized) form y = (x0/x)^γ, matched at the
    // geometric mid-point of the fitted range.
    let mid_u = points.iter().map(|p| p.0.ln()).sum::<f64>() / points.len() as f64;
    let ln_y = beta0 + rho.map_or(0.0, |r| (r + mid_u).ln()) - gamma * mid_u;
    (ln_y / gamma + mid_u).exp()
}

/// Recovers `(γ_N, γ_T, N0, T0)` from a scan table.
///
/// `γ_N` is fitted over the N-limited cells at the largest `T` (those
/// whose cutoff is set by `N`), `γ_T` over the T-limited cells at the
/// largest `N` (cutoff saturated at `A_T`). Empirical risks are used when
/// positive, analytic otherwise. Both fits model the known logarithmic
/// correction; on exactly power-law tables they reduce to plain log-log
/// least squares.
pub fn fit_scaling_exponents(table: &ScalingTable) -> Result<ScalingFit, LearnerError> {
    let t_max = table
        .rows
        .iter()
        .map(|r| r.t)
        .max()
        .ok_or_else(|| LearnerError::Fit("empty table".into()))?;
    let n_max = table.rows.iter().map(|r| r.n).max().unwrap();

    let mut a_t_of = std::collections::HashMap::new();
    for row in &table.rows {
        if let std::collections::hash_map::Entry::Vacant(e) = a_t_of.entry(row.t) {
            e.insert(obligatory_initial_segment(&table.schedule, row.t)?);
        }
    }

    let pick_y = |row: &ScanRow| -> f64 {
        if row.r_empirical > 0.0 {
            row.r_empirical
        } else {
            row.r_analytic
        }
    };

    let n_points: Vec<(f64, f64)> = table
        .rows
        .iter()
        .filter(|r| r.t == t_max && r.a_nt < a_t_of[&r.t])
        .map(|r| (r.n as f64, pick_y(r)))
        .collect();
    let t_points: Vec<(f64, f64)> = table
        .rows
        .iter()
        .filter(|r| r.n == n_max && r.a_nt == a_t_of[&r.t])
        .map(|r| (r.t as f64, pick_y(r)))
        .collect();
    if n_points.len() < 3 || t_points.len() < 3 {
        return Err(LearnerError::Fit(format!(
            "table does not cover both regimes: {} N-limited cells, {} T-limited cells",
            n_points.len(),
            t_points.len()
        )));
    }

    let (gamma_n, beta0_n, rho_n, _) = fit_log_corrected(&n_points)?;
    let (gamma_t, beta0_t, rho_t, _) = fit_log_corrected(&t_points)?;
    if !(gamma_n > 0.0) || !(gamma_t > 0.0) {
        return Err(LearnerError::Fit(
            "fitted exponents are not positive; regimes not identifiable".into(),
        ));
    }
    Ok(ScalingFit {
        gamma_n,
        gamma_t,
        n0: amplitude_scale(&n_points, gamma_n, beta0_n, rho_n),
        t0: amplitude_scale(&t_points, gamma_t, beta0_t, rho_t),
        constraint_residual: (gamma_t - gamma_n / (gamma_n + 1.0)).abs(),
        n_points: n_points.len(),
        t_points: t_points.len(),
    })
}

#[cfg(test)]
mod tests {
    use super::*;
    use crate::analytics::obligatory_and_typical_counts;
    use crate::generator::generate_prefix;
    use crate::santafe::compose_stream;
    use crate::schedule::URational;
    use std::f64::consts::LN_2;

    fn linear(n: u64, d: u64) -> PeriodSchedule {
        PeriodSchedule::linear(URational::new(n, d)).unwrap()
    }

    fn minimal_sample(schedule: &PeriodSchedule, t: u64, know_seed: u64) -> Vec<SantaFeToken> {
        let narration = generate_prefix(schedule, &SeedMode::Minimal, t).unwrap();
        let knowledge = Knowledge::new(KnowledgeMode::IidFair { rng_seed: know_seed });
        compose_stream(narration.into_iter(), &knowledge).collect()
    }

    #[test]
    fn train_recovers_minimal_seeds() {
        let s = linear(1, 1);
        let t = 5_000u64;
        let sample = minimal_sample(&s, t, 1);
        let model = train(&s, 1 << 30, sample.into_iter(), t).unwrap();
        assert!(model.a_nt() == model.a_t() && model.a_t() > 10);
        for r in 1..=model.a_nt() {
            assert_eq!(model.recovered_seed(r), Some(1), "r = {r}");
        }
    }

    #[test]
    fn train_zero_params_learns_nothing() {
        let s = linear(1, 1);
        let sample = minimal_sample(&s, 100, 2);
        let model = train(&s, 0, sample.into_iter(), 100).unwrap();
        assert_eq!(model.a_nt(), 0);
        assert_eq!(model.param_count(), 0);
    }

    #[test]
    fn train_recovers_random_seeds_and_phases() {
        let s = PeriodSchedule::capped(vec![2, 1]).unwrap();
        for seed in 0..20u64 {
            let t = 64u64;
            let mut gen = Generator::new(s.clone(), SeedMode::RandomUniform { rng_seed: seed });
            let knowledge = Knowledge::new(KnowledgeMode::IidFair { rng_seed: seed ^ 77 });
            let sample: Vec<SantaFeToken> = (0..t)
                .map(|_| {
                    let k = gen.next_token().unwrap();
                    SantaFeToken {
                        k,
                        z: knowledge.fact(k),
                    }
                })
                .collect();
            let model = train(&s, 4, sample.into_iter(), t).unwrap();
            assert_eq!(model.a_nt(), 2);
            assert_eq!(model.recovered_seed(1), gen.materialized_seed(1));
            assert_eq!(model.recovered_seed(2), gen.materialized_seed(2));
            // End-of-training phases must equal the generator's clocks.
            for r in 1..=2u64 {
                assert_eq!(
                    model.end_clocks()[r as usize - 1],
                    gen.clock_value(r).unwrap(),
                    "seed {seed}, r {r}"
                );
            }
        }
    }

    #[test]
    fn train_phases_match_generator_linear() {
        let s = linear(1, 1);
        let t = 20_000u64;
        let mut gen = Generator::new(s.clone(), SeedMode::RandomUniform { rng_seed: 31 });
        let knowledge = Knowledge::new(KnowledgeMode::IidFair { rng_seed: 32 });
        let sample: Vec<SantaFeToken> = (0..t)
            .map(|_| {
                let k = gen.next_token().unwrap();
                SantaFeToken {
                    k,
                    z: knowledge.fact(k),
                }
            })
            .collect();
        let model = train(&s, 1 << 30, sample.into_iter(), t).unwrap();
        for r in 1..=model.a_nt() {
            assert_eq!(
                model.end_clocks()[r as usize - 1],
                gen.clock_value(r).unwrap(),
                "r = {r}"
            );
            assert_eq!(model.recovered_seed(r), gen.materialized_seed(r));
        }
    }

    #[test]
    fn train_rejects_mismatched_schedule() {
        // Shifted seeds on constant-5 periods delay the first 2 to
        // decimated position 4, past the period 2 the model believes in.
        let c5 = PeriodSchedule::constant(5).unwrap();
        let c2 = PeriodSchedule::constant(2).unwrap();
        let narration =
            generate_prefix(&c5, &SeedMode::FixedList(vec![1, 4]), 200).unwrap();
        let knowledge = Knowledge::new(KnowledgeMode::IidFair { rng_seed: 5 });
        let sample: Vec<SantaFeToken> =
            compose_stream(narration.into_iter(), &knowledge).collect();
        let err = train(&c2, 1 << 20, sample.into_iter(), 200).unwrap_err();
        assert!(
            matches!(err, LearnerError::TrainingInconsistency(_)),
            "{err}"
        );

        // An all-ones stream is missing every obligatory type above 1.
        let ones = PeriodSchedule::capped(vec![1]).unwrap();
        let sample = minimal_sample(&ones, 200, 5);
        let err = train(&c2, 1 << 20, sample.into_iter(), 200).unwrap_err();
        assert!(
            matches!(err, LearnerError::TrainingInconsistency(_)),
            "{err}"
        );
    }

    #[test]
    fn cutoff_law_holds() {
        let s = linear(1, 1);
        let t = 2_000u64;
        let (a_t, _) = obligatory_and_typical_counts(&s, t).unwrap();
        for n in [0u64, 1, 2, 5, 10, 64, 1 << 20] {
            let sample = minimal_sample(&s, t, n ^ 9);
            let model = train(&s, n, sample.into_iter(), t).unwrap();
            assert_eq!(model.a_nt(), (n / 2).min(a_t));
            assert_eq!(model.a_t(), a_t);
        }
    }

    #[test]
    fn hidden_state_count_is_period_product() {
        let s = linear(1, 1);
        let sample = minimal_sample(&s, 200, 3);
        let model = train(&s, 6, sample.into_iter(), 200).unwrap();
        // A_NT = 3: U = π_1 π_2 π_3 = 2·3·4.
        assert_eq!(model.a_nt(), 3);
        assert_eq!(model.hidden_state_count(), BigUint::from(24u32));
    }

    #[test]
    fn perfect_model_scores_probability_one() {
        // Capped support of two types, model knows both: every scored token is
        // deterministic and the risk is exactly zero.
        let s = PeriodSchedule::capped(vec![2, 1]).unwrap();
        let sample_t = 64;
        let mut gen = Generator::new(s.clone(), SeedMode::RandomUniform { rng_seed: 8 });
        let knowledge = Knowledge::new(KnowledgeMode::IidFair { rng_seed: 9 });
        let sample: Vec<SantaFeToken> = (0..sample_t)
            .map(|_| {
                let k = gen.next_token().unwrap();
                SantaFeToken {
                    k,
                    z: knowledge.fact(k),
                }
            })
            .collect();
        let model = train(&s, 100, sample.into_iter(), sample_t).unwrap();
        let report = cross_entropy_empirical(&model, 1234, 5678, 10_000).unwrap();
        assert_eq!(report.mean_log_loss, 0.0);
        assert_eq!(report.error_rate, 0.0);
    }

    #[test]
    fn analytic_risk_closed_forms() {
        // A = 0 is ln 2 + H(K); for linear c=1 compare against brute force.
        let s = linear(1, 1);
        let mut brute = 0.0f64;
        for r in 1..=10_000_000u64 {
            let p = 1.0 / (r as f64 * (r as f64 + 1.0));
            brute += p * (1.0 / p).ln();
        }
        let rem = 2.0 * ((1e7f64).ln() + 1.0) / 1e7;
        let oracle = LN_2 + brute + 0.5 * rem;
        let got = cross_entropy_analytic(&s, 0).unwrap();
        assert!(
            (got.nats - oracle).abs() <= 1e-5 * oracle,
            "got {}, oracle {oracle}",
            got.nats
        );
        assert!(got.truncation_bound <= 1e-9 * got.nats);
    }

    #[test]
    fn analytic_risk_a10_matches_brute_force() {
        let s = linear(1, 1);
        let mut tail = 0.0f64;
        for r in 11..=10_000_000u64 {
            let p = 1.0 / (r as f64 * (r as f64 + 1.0));
            tail += p * (1.0 / p).ln();
        }
        let rem = 2.0 * ((1e7f64).ln() + 1.0) / 1e7;
        let oracle = LN_2 / 11.0 + tail + 0.5 * rem;
        let got = cross_entropy_analytic(&s, 10).unwrap();
        assert!(
            (got.nats - oracle).abs() <= 1e-5 * oracle,
            "got {}, oracle {oracle}",
            got.nats
        );
    }

    #[test]
    fn analytic_risk_decreases_to_zero() {
        let s = linear(1, 1);
        let risks = risk_table(&s, &[0, 1, 10, 100, 1000, 10_000]).unwrap();
        for w in risks.windows(2) {
            assert!(w[1].nats < w[0].nats);
        }
        assert!(risks.last().unwrap().nats < 3e-3);
    }

    #[test]
    fn analytic_risk_constant_family_matches_direct_sum() {
        let s = PeriodSchedule::constant(3).unwrap();
        for a in [0u64, 2, 7] {
            let got = cross_entropy_analytic(&s, a).unwrap().nats;
            let mut brute = 0.0;
            for (r, _f, pmf) in s.marginal_iter().take(4000) {
                if r > a && pmf > 0.0 {
                    brute += pmf * (LN_2 - pmf.ln());
                }
            }
            assert!(
                (got - brute).abs() <= 1e-12 * brute.max(1.0),
                "A={a}: {got} vs {brute}"
            );
        }
    }

    #[test]
    fn analytic_risk_capped_exact() {
        let s = PeriodSchedule::capped(vec![2, 1]).unwrap();
        // pmf = (1/2, 1/2): R(0) = ln2 + ln2·... = Σ p(ln2 − ln p).
        let want = LN_2 + LN_2; // each term p·(ln2 + ln2), two terms of 1/2
        assert!((cross_entropy_analytic(&s, 0).unwrap().nats - want).abs() < 1e-15);
        assert_eq!(cross_entropy_analytic(&s, 2).unwrap().nats, 0.0);
    }

    #[test]
    fn improper_marginal_is_refused() {
        let p2 = PeriodSchedule::power(URational::new(1, 1), URational::new(2, 1)).unwrap();
        assert!(matches!(
            cross_entropy_analytic(&p2, 5),
            Err(LearnerError::Unsupported(_))
        ));
    }

    #[test]
    fn empirical_matches_analytic_small() {
        // A_NT = 0: every token scores ln2 − ln pmf.
        let s = linear(1, 1);
        let sample = minimal_sample(&s, 1000, 4);
        let model = train(&s, 0, sample.into_iter(), 1000).unwrap();
        let report = cross_entropy_empirical(&model, 42, 43, 200_000).unwrap();
        let analytic = cross_entropy_analytic(&s, 0).unwrap().nats;
        assert!(
            (report.mean_log_loss - analytic).abs() <= 3.0 * report.stderr,
            "empirical {} vs analytic {analytic} (3σ = {})",
            report.mean_log_loss,
            3.0 * report.stderr
        );
        assert_eq!(report.burnin_used, 0);
    }

    #[test]
    fn error_rate_bounded_by_tail_probability() {
        let s = linear(1, 1);
        let t = 10_000u64;
        let sample = minimal_sample(&s, t, 6);
        let model = train(&s, 40, sample.into_iter(), t).unwrap();
        assert_eq!(model.a_nt(), 20);
        let report = error_rate_empirical(&model, 7, 8, 200_000).unwrap();
        // Unpredictable tokens are the only error source: the bound holds
        // pathwise against the same window's tail fraction.
        assert!(report.error_rate <= report.tail_fraction);
        // The tail fraction itself sits near P(K > A).
        let p_tail = s.marginal_f(model.a_nt() + 1);
        let se = (p_tail * (1.0 - p_tail) / 200_000f64).sqrt();
        assert!(
            (report.tail_fraction - p_tail).abs() <= 5.0 * se + 0.003,
            "tail fraction {} vs P(K>A) {p_tail}",
            report.tail_fraction
        );
        // The argmax pair (A+1, 0) is right a pmf(A+1)/2 share of the time.
        let expected_gap = s.marginal_pmf(model.a_nt() + 1) / 2.0;
        let gap = report.tail_fraction - report.error_rate;
        assert!(
            (gap - expected_gap).abs() <= 5.0 * (expected_gap / 200_000f64).sqrt() + 1e-3,
            "gap {gap} vs expected {expected_gap}"
        );
    }

    #[test]
    fn cursor_detects_desync() {
        let s = PeriodSchedule::capped(vec![2, 1]).unwrap();
        let sample_toks = minimal_sample(&s, 32, 11);
        let model = train(&s, 100, sample_toks.into_iter(), 32).unwrap();
        let mut cursor = EvalCursor::new(&model);
        // Burn-in on a minimal-seed stream: 1,2,1,2,...
        let stream = generate_prefix(&s, &SeedMode::Minimal, 8).unwrap();
        let know = Knowledge::new(KnowledgeMode::IidFair { rng_seed: 11 });
        let mut pos = 0;
        while !cursor.ready() {
            let k = stream[pos];
            cursor
                .observe_burnin(SantaFeToken { k, z: know.fact(k) })
                .unwrap();
            pos += 1;
        }
        // Next true token would be stream[pos]; feed the other type instead.
        let wrong = if stream[pos] == 1 { 2 } else { 1 };
        let err = cursor
            .score(SantaFeToken {
                k: wrong,
                z: know.fact(wrong),
            })
            .unwrap_err();
        assert!(matches!(err, LearnerError::SyncError { .. }), "{err}");
    }

    #[test]
    fn predict_token_prob_cases() {
        // Known types score exactly 1; unknown types score pmf/2.
        let s = linear(1, 1);
        let t = 3000u64;
        let sample = minimal_sample(&s, t, 12);
        let model = train(&s, 10, sample.into_iter(), t).unwrap();
        assert_eq!(model.a_nt(), 5);
        let mut gen = Generator::new(s.clone(), SeedMode::RandomUniform { rng_seed: 99 });
        let know = Knowledge::new(KnowledgeMode::IidFair { rng_seed: 98 });
        let mut cursor = EvalCursor::new(&model);
        while !cursor.ready() {
            let k = gen.next_token().unwrap();
            cursor
                .observe_burnin(SantaFeToken { k, z: know.fact(k) })
                .unwrap();
        }
        let mut saw_known = false;
        let mut saw_unknown = false;
        for _ in 0..500 {
            let k = gen.next_token().unwrap();
            let p = cursor
                .predict_token_prob(SantaFeToken { k, z: know.fact(k) })
                .unwrap();
            if k <= 5 {
                assert_eq!(p, 1.0);
                saw_known = true;
            } else {
                let want = s.marginal_pmf(k) / 2.0;
                assert!((p - want).abs() <= 1e-12 * want, "k={k}: {p} vs {want}");
                saw_unknown = true;
            }
        }
        assert!(saw_known && saw_unknown);
    }

    #[test]
    fn scan_rows_satisfy_cutoff_and_saturation() {
        let s = linear(1, 1);
        let cfg = ScanConfig {
            schedule: s.clone(),
            n_grid: vec![4, 16, 64, 256, 1024],
            t_grid: vec![100, 1000],
            test_tokens: 2_000,
            reps: 2,
            rng_seed: 7,
        };
        let table = scaling_scan(&cfg).unwrap();
        assert_eq!(table.rows.len(), 10);
        for row in &table.rows {
            let a_t = obligatory_initial_segment(&s, row.t).unwrap();
            assert_eq!(row.a_nt, (row.n / 2).min(a_t));
        }
        // Saturated cells at the same T share identical risks exactly:
        // same restriction, same test stream.
        for &t in &[100u64, 1000] {
            let a_t = obligatory_initial_segment(&s, t).unwrap();
            let saturated: Vec<&ScanRow> = table
                .rows
                .iter()
                .filter(|r| r.t == t && r.a_nt == a_t)
                .collect();
            assert!(saturated.len() >= 2, "expected saturated cells at T={t}");
            for w in saturated.windows(2) {
                assert_eq!(w[0].r_empirical, w[1].r_empirical);
                assert_eq!(w[0].r_analytic, w[1].r_analytic);
            }
        }
        // Risk is non-increasing in N at fixed T (up to noise, use 4σ).
        for &t in &[100u64, 1000] {
            let mut rows: Vec<&ScanRow> = table.rows.iter().filter(|r| r.t == t).collect();
            rows.sort_by_key(|r| r.n);
            for w in rows.windows(2) {
                assert!(
                    w[1].r_empirical
                        <= w[0].r_empirical + 4.0 * (w[0].stderr + w[1].stderr).max(1e-12),
                    "risk increased with N at T={t}"
                );
                assert!(w[1].r_analytic <= w[0].r_analytic + 1e-12);
            }
        }
    }

    #[test]
    fn scan_empirical_matches_analytic() {
        let cfg = ScanConfig {
            schedule: linear(1, 1),
            n_grid: vec![8, 64, 512],
            t_grid: vec![2_000],
            test_tokens: 100_000,
            reps: 3,
            rng_seed: 21,
        };
        let table = scaling_scan(&cfg).unwrap();
        for row in &table.rows {
            assert!(
                (row.r_empirical - row.r_analytic).abs() <= 4.0 * row.stderr,
                "N={} T={}: emp {} vs analytic {} (σ={})",
                row.n,
                row.t,
                row.r_empirical,
                row.r_analytic,
                row.stderr
            );
        }
    }

    #[test]
    fn fit_recovers_synthetic_max_form_exactly() {
        // Exact max-form table aligned with the cutoff structure: the
        // crossover sits at N/2 = A_T(T_max) so selected cells are pure.
        let s = linear(1, 1);
        let n_grid: Vec<u64> = (4..=14).map(|e| 1u64 << e).collect();
        let t_grid: Vec<u64> = vec![1_000, 10_000, 100_000, 1_000_000, 10_000_000];
        let t_max = 10_000_000u64;
        let a_sat = obligatory_initial_segment(&s, t_max).unwrap();
        let n0 = 100.0f64;
        let t0 = t_max as f64 * (n0 / (2.0 * a_sat as f64)).powi(2);
        let mut rows = Vec::new();
        for &n in &n_grid {
            for &t in &t_grid {
                let a_t = obligatory_initial_segment(&s, t).unwrap();
                let r = (n0 / n as f64).max((t0 / t as f64).sqrt());
                rows.push(ScanRow {
                    c: 1.0,
                    n,
                    t,
                    a_nt: (n / 2).min(a_t),
                    r_analytic: r,
                    r_empirical: r,
                    stderr: 0.0,
                    error_rate: 0.0,
                    reps: 1,
                });
            }
        }
        let fit = fit_scaling_exponents(&ScalingTable {
            schedule: s,
            test_tokens: 0,
            rows,
        })
        .unwrap();
        assert!((fit.gamma_n - 1.0).abs() < 1e-6, "γ_N = {}", fit.gamma_n);
        assert!((fit.gamma_t - 0.5).abs() < 1e-6, "γ_T = {}", fit.gamma_t);
        assert!(fit.constraint_residual < 1e-6);
        assert!((fit.n0 - n0).abs() / n0 < 1e-6);
        assert!((fit.t0 - t0).abs() / t0 < 1e-4);
    }

    #[test]
    fn fit_log_corrected_recovers_corrected_law() {
        // y = (2 + 3·ln x)·x^{-1}: the plain slope over x ∈ [16, 16384]
        // would be biased near −0.8; the corrected fit recovers 1.
        let points: Vec<(f64, f64)> = (4..=14)
            .map(|e| {
                let x = (1u64 << e) as f64;
                (x, (2.0 + 3.0 * x.ln()) / x)
            })
            .collect();
        let (gamma, _b0, rho, sse) = fit_log_corrected(&points).unwrap();
        assert!((gamma - 1.0).abs() < 1e-4, "γ = {gamma}");
        assert!(rho.is_some());
        assert!(sse < 1e-10);
    }

    #[test]
    fn fit_requires_both_regimes() {
        let s = linear(1, 1);
        let rows: Vec<ScanRow> = (4..=14)
            .map(|e| {
                let n = 1u64 << e;
                ScanRow {
                    c: 1.0,
                    n,
                    t: 1000,
                    a_nt: n / 2,
                    r_analytic: 1.0 / n as f64,
                    r_empirical: 1.0 / n as f64,
                    stderr: 0.0,
                    error_rate: 0.0,
                    reps: 1,
                }
            })
            .collect();
        // All cells N-limited at a single T: γ_T side has no points.
        let err = fit_scaling_exponents(&ScalingTable {
            schedule: s,
            test_tokens: 0,
            rows,
        })
        .unwrap_err();
        assert!(matches!(err, LearnerError::Fit(_)));
    }
}
