//! Multiperiodic sequences and processes.
//!
//! A multiperiodic sequence over the natural numbers is determined by a
//! family of periods `π_r` and seeds `σ_r`: after deleting every token
//! smaller than `r`, the surviving subsequence carries `r` exactly at the
//! positions congruent to `σ_r` modulo `π_r`. Drawing the seeds
//! independently and uniformly turns the sequence into a stationary ergodic
//! process whose marginal law, waiting times, type growth and block entropy
//! all have closed forms in terms of the periods.
//!
//! The crate provides:
//!
//! * [`schedule`] — period families and every closed-form statistic that
//!   depends only on the periods (marginals, waiting times, uniform waiting
//!   bounds, moments, finiteness classification);
//! * [`generator`] — a streaming clock-bank generator with lazy clock
//!   allocation and deterministic random seeding;
//! * [`analytics`] — empirical statistics over generated streams, exact
//!   enumeration oracles for capped schedules, and power-law fitting;
//! * [`santafe`] — the coupling `X_t = (K_t, Z_{K_t})` of a narration
//!   stream with an immutable knowledge bit sequence, plus the exact
//!   block-entropy decomposition check;
//! * [`learner`] — the memory-based predictor that stores seeds and facts
//!   up to a parameter cutoff, its analytic and empirical cross entropy,
//!   and grid scans that recover the risk scaling exponents.

pub mod analytics;
pub mod generator;
pub mod learner;
pub mod santafe;
pub mod schedule;
pub(crate) mod tail;
pub mod util;

pub use analytics::{
    count_types_series, empirical_marginal, entropy_upper_bound, exact_block_entropy_capped,
    expected_types_monte_carlo, fit_power_law, log_spaced_checkpoints,
    obligatory_and_typical_counts, obligatory_initial_segment, return_time_stats, AnalyticsError,
    CappedBlockEntropy, EntropyExpr, MonteCarloEstimate, PowerLawFit, TypeGrowthSeries,
};
pub use generator::{decimate, generate_prefix, GenError, Generator, SeedMode, TRUNCATED};
pub use learner::{
    cross_entropy_analytic, cross_entropy_empirical, error_rate_empirical, evaluate_model,
    fit_scaling_exponents, risk_table, scaling_scan, train, AnalyticRisk, EvalCursor, EvalReport,
    LearnerError, ScalingFit, ScalingTable, ScanConfig, ScanRow, TrainedModel,
};
pub use santafe::{
    compose_stream, entropy_decomposition_check, DecompositionCheck, Knowledge, KnowledgeMode,
    SantaFeToken,
};
pub use schedule::{Finiteness, Moment, PeriodFamily, PeriodSchedule, ScheduleError};
