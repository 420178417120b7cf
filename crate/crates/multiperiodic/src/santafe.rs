//! The Santa Fe coupling of a narration stream with immutable knowledge.
//!
//! Each emitted pair is `X_t = (K_t, Z_{K_t})`: the narration index plus
//! the knowledge bit it points at. Bits are immutable — two tokens with
//! the same index always carry the same bit — which is what makes the
//! block entropy decompose as
//! `H(X_1^T) = H(K_1^T) + E card N_T · ln 2` for fair-coin knowledge:
//! conditioned on the narration, the only remaining uncertainty is one
//! fair bit per distinct type. The decomposition check below verifies the
//! identity with exact rational arithmetic by jointly enumerating seed
//! configurations and fact assignments.

use num_bigint::BigInt;
use num_rational::BigRational;
use num_traits::{One, ToPrimitive};
use rand_chacha::rand_core::{RngCore, SeedableRng};
use rand_chacha::ChaCha8Rng;
use std::collections::HashMap;
use std::sync::{Mutex, RwLock};

use crate::analytics::{exact_block_entropy_capped, AnalyticsError, EntropyExpr};
use crate::schedule::PeriodSchedule;
use crate::util::splitmix64;

/// One coupled token `(k, z_k)`.
#[derive(Debug, Clone, Copy, PartialEq, Eq, Hash)]
pub struct SantaFeToken {
    pub k: u64,
    pub z: bool,
}

/// How knowledge bits are produced.
#[derive(Debug, Clone, Copy, PartialEq, Eq)]
pub enum KnowledgeMode {
    /// Independent fair bits, sampled lazily in first-touch order from a
    /// ChaCha8 stream and memoized so facts stay immutable.
    IidFair { rng_seed: u64 },
    /// A fixed deterministic bit function of the index (a keyed mixer),
    /// standing in for a fixed incompressible sequence.
    FixedPseudorandom { seed: u64 },
}

/// Append-only fact table. Reads are concurrent; the first touch of a new
/// index serializes on the draw lock.
#[derive(Debug)]
pub struct Knowledge {
    mode: KnowledgeMode,
    memo: RwLock<HashMap<u64, bool>>,
    draw: Mutex<ChaCha8Rng>,
}

impl Knowledge {
    pub fn new(mode: KnowledgeMode) -> Self {
        let rng_seed = match mode {
            KnowledgeMode::IidFair { rng_seed } => rng_seed,
            KnowledgeMode::FixedPseudorandom { seed } => seed,
        };
        Self {
            mode,
            memo: RwLock::new(HashMap::new()),
            draw: Mutex::new(ChaCha8Rng::seed_from_u64(rng_seed)),
        }
    }

    pub fn mode(&self) -> KnowledgeMode {
        self.mode
    }

    /// The fact `z_k`. Repeated queries always return the same bit.
    pub fn fact(&self, k: u64) -> bool {
        match self.mode {
            KnowledgeMode::FixedPseudorandom { seed } => {
                splitmix64(seed ^ splitmix64(k)) & 1 == 1
            }
            KnowledgeMode::IidFair { .. } => {
                if let Some(&z) = self.memo.read().expect("memo lock").get(&k) {
                    return z;
                }
                let mut rng = self.draw.lock().expect("draw lock");
                let mut memo = self.memo.write().expect("memo lock");
                if let Some(&z) = memo.get(&k) {
                    return z;
                }
                let z = rng.next_u32() & 1 == 1;
                memo.insert(k, z);
                z
            }
        }
    }

    /// Number of distinct facts drawn so far (i.i.d. mode only).
    pub fn facts_touched(&self) -> usize {
        self.memo.read().expect("memo lock").len()
    }
}

/// Pairs each narration token with its fact.
pub fn compose_stream<'a>(
    narration: impl Iterator<Item = u64> + 'a,
    knowledge: &'a Knowledge,
) -> impl Iterator<Item = SantaFeToken> + 'a {
    narration.map(move |k| SantaFeToken {
        k,
        z: knowledge.fact(k),
    })
}

/// Outcome of the exact block-entropy decomposition check.
#[derive(Debug, Clone)]
pub struct DecompositionCheck {
    pub t: u64,
    /// `H(X_1^T)` as an exact log-linear expression.
    pub h_x: EntropyExpr,
    /// `H(K_1^T)` likewise.
    pub h_k: EntropyExpr,
    /// Exact `E card N_T`.
    pub e_n_t: BigRational,
    /// Whether `H_X = H_K + E N_T·ln 2` holds exactly.
    pub identity_exact: bool,
    /// Number of enumerated (seed configuration × fact assignment) items.
    pub enumerated: u64,
}

impl DecompositionCheck {
    pub fn h_x_nats(&self) -> f64 {
        self.h_x.to_nats()
    }

    pub fn h_k_nats(&self) -> f64 {
        self.h_k.to_nats()
    }

    pub fn e_n_t_f64(&self) -> f64 {
        self.e_n_t.to_f64().unwrap_or(f64::NAN)
    }
}

/// Computes `H(X_1^T)` for a capped schedule with fair-coin knowledge by
/// joint enumeration over seed tuples and fact assignments, and verifies
/// the entropy decomposition identity exactly.
///
/// Every `X`-realization is materialized and aggregated by value; its
/// probability is the exact rational `weight/(P·2^s)` where untouched
/// facts are marginalized by weight. The identity check then compares
/// exact prime-log coefficient vectors, so it cannot pass by numeric
/// coincidence.
pub fn entropy_decomposition_check(
    schedule: &PeriodSchedule,
    t: u64,
    budget: u64,
) -> Result<DecompositionCheck, AnalyticsError> {
    let block = exact_block_entropy_capped(schedule, t, budget)?;
    let support = block.support;
    let p_total = block.configurations;

    // Joint items: for a narration with n touched types, enumerating the
    // touched bits with weight 2^{s−n} is the same uniform law as
    // enumerating all 2^s assignments.
    let joint: u128 = block
        .narrations
        .iter()
        .map(|(_, mult, n)| *mult as u128 * (1u128 << *n))
        .sum();
    if joint > budget as u128 * 64 {
        return Err(AnalyticsError::BudgetExceeded {
            needed: joint,
            budget: budget * 64,
        });
    }

    let mut x_weights: HashMap<Vec<u64>, u64> = HashMap::new();
    for (seq, mult, n_types) in &block.narrations {
        // Touched types in order of first appearance.
        let mut order: Vec<u16> = Vec::with_capacity(*n_types as usize);
        for &k in seq {
            if !order.contains(&k) {
                order.push(k);
            }
        }
        debug_assert_eq!(order.len() as u32, *n_types);
        let weight = mult * (1u64 << (support as u32 - *n_types));
        for bits in 0u32..(1u32 << *n_types) {
            let bit_of = |k: u16| -> u64 {
                let pos = order.iter().position(|&o| o == k).unwrap();
                ((bits >> pos) & 1) as u64
            };
            // Encode each pair as (k << 1) | z.
            let encoded: Vec<u64> = seq.iter().map(|&k| ((k as u64) << 1) | bit_of(k)).collect();
            *x_weights.entry(encoded).or_insert(0) += weight;
        }
    }

    // H(X_1^T) = ln W − Σ_x (w_x/W)·ln w_x with W = P·2^s.
    let w_total = p_total
        .checked_shl(support as u32)
        .expect("weight total fits u64 within budget");
    let mut h_x = EntropyExpr::zero();
    h_x.add_ln_of(w_total, &BigRational::one());
    let mut mass = 0u64;
    for (_, w) in &x_weights {
        let frac = BigRational::new(BigInt::from(*w), BigInt::from(w_total));
        h_x.add_ln_of(*w, &(-frac));
        mass += *w;
    }
    assert_eq!(mass, w_total, "enumeration must exhaust the probability mass");

    let e_n_t = block.expected_types_exact();

    // rhs = H_K + E N_T · ln 2.
    let mut rhs = block.entropy.clone();
    rhs.add_ln_of(2, &e_n_t);
    let mut diff = h_x.clone();
    diff.sub_expr(&rhs);

    Ok(DecompositionCheck {
        t,
        identity_exact: diff.is_zero(),
        h_x,
        h_k: block.entropy,
        e_n_t,
        enumerated: joint as u64,
    })
}
