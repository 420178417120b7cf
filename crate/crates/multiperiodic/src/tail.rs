//! Certified tail brackets for series over `γ = 1` schedules.
//!
//! For periods `π_r = 1 + ⌈c·r⌉` the marginal satisfies, for all `r ≥ r0`,
//!
//! ```text
//!   F0·(v0/v(r))^{1/c}·e^{-ε0}  ≤  f_r  ≤  F0·(u0/u(r))^{1/c}
//! ```
//!
//! with `u(x) = 2 + cx`, `v(x) = 1 + c(x−1)`, `F0 = f_{r0}` and
//! `ε0 = 1/(c·(1 + c(r0−1)))`; both sides follow from bounding
//! `ln(1 − 1/π_i)` by `−1/π_i` resp. `−1/π_i − 1/π_i²` and comparing the
//! sums with integrals. Plugging these envelopes into the summands below
//! and integrating the monotone majorants/minorants yields two-sided
//! brackets whose half-width shrinks like `1/r0` relative to the tail,
//! so callers sum directly to a large `r0` and cap the remainder here.

#[derive(Debug, Clone, Copy)]
pub(crate) struct Bracket {
    pub lo: f64,
    pub hi: f64,
}

impl Bracket {
    pub fn midpoint(&self) -> f64 {
        0.5 * (self.lo + self.hi)
    }

    pub fn half_width(&self) -> f64 {
        0.5 * (self.hi - self.lo)
    }
}

/// Bracket for `Σ_{r ≥ r0} p_r·ln(1/p_r)` with `p_r = f_r/π_r`.
///
/// `ln_f0` is `ln f_{r0}` accumulated exactly by the caller. Requires
/// `c·r0` large enough that the majorant is decreasing (`c·r0 ≥ 8`).
pub(crate) fn entropy_tail_bracket(c: f64, r0: u64, ln_f0: f64) -> Bracket {
    assert!(c * r0 as f64 >= 8.0, "tail anchor too small: c·r0 = {}", c * r0 as f64);
    let x0 = r0 as f64;
    let u0 = 2.0 + c * x0;
    let v0 = 1.0 + c * (x0 - 1.0);
    let eps0 = 1.0 / (c * v0);
    let f0 = ln_f0.exp();
    let alpha = 1.0 + 1.0 / c;

    // Upper: g⁺(x) = Kp·u^{-1-1/c}(α·ln u + β) with
    // Kp = F0·u0^{1/c}·u0/(u0−1); the u0^{1/c} factor cancels at x = r0.
    let beta = -ln_f0 - v0.ln() / c + eps0;
    let edge = f0 * (u0 / (u0 - 1.0)) * (alpha * u0.ln() + beta) / u0;
    let upper_int = f0 * (u0 / (u0 - 1.0)) * (alpha * (u0.ln() + c) + beta);

    // Lower: g⁻(x) = Kp⁻·v^{-1-1/c}(α·ln v + D⁻).
    let d_lo = -ln_f0 - u0.ln() / c;
    let lower_int =
        f0 * (-eps0).exp() * (v0 / (v0 + 1.0 + c)) * (alpha * (v0.ln() + c) + d_lo).max(0.0);

    Bracket {
        lo: lower_int,
        hi: edge + upper_int,
    }
}

/// Bracket for `Σ_{r ≥ r0} (r^s − (r−1)^s)·f_r`, the tail of `E K^s`.
///
/// Requires `s < 1/c` (convergence, decided symbolically by the caller).
pub(crate) fn moment_tail_bracket(c: f64, s: f64, r0: u64, ln_f0: f64) -> Bracket {
    let inv_c = 1.0 / c;
    assert!(s < inv_c, "moment tail called in the divergent regime");
    assert!(r0 >= 4);
    let x0 = r0 as f64;
    let u0 = 2.0 + c * x0;
    let v0 = 1.0 + c * (x0 - 1.0);
    let eps0 = 1.0 / (c * v0);
    let f0 = ln_f0.exp();

    // Σ ≤ h⁺(r0) + ∫ h⁺, with (2+cx)^{-1/c} ≤ (c(x−1))^{-1/c}.
    let edge = s * f0 * (x0 - 1.0).powf(s - 1.0);
    let upper_int = s * f0 / (inv_c - s)
        * ((u0.ln() - c.ln()) * inv_c + (s - inv_c) * (x0 - 1.0).ln()).exp();

    // Σ ≥ ∫ of the minorant, with v(x) ≤ κ·x for κ = max(c, v0/r0).
    let kappa = c.max(v0 / x0);
    let lower_int = s * f0 * (-eps0).exp() / (inv_c - s)
        * ((v0.ln() - kappa.ln()) * inv_c + (s - inv_c) * x0.ln()).exp();

    Bracket {
        lo: lower_int,
        hi: edge + upper_int,
    }
}
