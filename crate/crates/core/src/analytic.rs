//! Closed-form expected-tests-per-infected (ETI) formulas and the
//! rate/entropy machinery for the theoretical sparse regime.

use crate::error::{Error, Result};
use crate::model::{DesignParams, PracticalParams, TheoreticalParams};
use serde::{Deserialize, Serialize};

/// ETI of a trivial two-stage design, split into its constituent terms.
#[derive(Debug, Clone, Copy, PartialEq, Serialize, Deserialize)]
pub struct EtiBreakdown {
    /// Stage-1 tests per sampled individual, `r/s`.
    pub stage1_tests_per_individual: f64,
    /// Expected stage-2 (confirmatory) tests per sampled individual.
    pub stage2_tests_per_individual: f64,
    /// Probability a given individual is infected and confirmed.
    pub find_probability_per_individual: f64,
    pub eti: f64,
}

/// `q^e` with the power computed in log space for very large exponents.
fn q_pow(q: f64, e: u32) -> f64 {
    if e > 10_000 {
        (f64::from(e) * q.ln()).exp()
    } else {
        q.powi(e as i32)
    }
}

/// ETI of individual non-pooled testing: `1/(p*u)`.
pub fn eti_individual(params: &PracticalParams) -> f64 {
    1.0 / (params.p() * params.u())
}

/// ETI of the trivial two-stage (r, s) scheme with s > 1:
/// `[r/s + u^r (p + q (1 - q^(s-1))^r)] / (p u^(r+1))`.
pub fn eti_pooled(params: &PracticalParams, design: &DesignParams) -> Result<EtiBreakdown> {
    eti_pooled_rs(params, design.r(), design.s())
}

/// Same as [`eti_pooled`] but taking (r, s) directly; the formula does
/// not depend on the construction family.
pub fn eti_pooled_rs(params: &PracticalParams, r: u32, s: u32) -> Result<EtiBreakdown> {
    if s < 2 {
        return Err(Error::InvalidDesign(
            "pooled ETI requires s > 1; use eti_individual for s = 1".into(),
        ));
    }
    let (p, q, u) = (params.p(), params.q(), params.u());
    let stage1 = f64::from(r) / f64::from(s);
    let retest_prob = p + q * (1.0 - q_pow(q, s - 1)).powi(r as i32);
    let stage2 = u.powi(r as i32) * retest_prob;
    let find = p * u.powi(r as i32 + 1);
    Ok(EtiBreakdown {
        stage1_tests_per_individual: stage1,
        stage2_tests_per_individual: stage2,
        find_probability_per_individual: find,
        eti: (stage1 + stage2) / find,
    })
}

/// ETI achievable when finding every infected individual:
/// `max{ log2(n/k), ln(k)/ln(2) }`.
pub fn eti_full_recovery(params: &TheoreticalParams) -> f64 {
    let (n, k) = (params.n() as f64, params.k());
    f64::max((n / k).log2(), k.ln() / std::f64::consts::LN_2)
}

/// Total tests needed to find all k infected: `k * eti_full_recovery`.
pub fn tests_for_full_recovery(params: &TheoreticalParams) -> f64 {
    params.k() * eti_full_recovery(params)
}

/// ETI of the block-code single-infected scheme: `2e * log2(n/k)`.
pub fn eti_saffron(params: &TheoreticalParams) -> f64 {
    let (n, k) = (params.n() as f64, params.k());
    2.0 * std::f64::consts::E * (n / k).log2()
}

/// Best ETI over the two theoretical strategies.
pub fn eti_theoretical(params: &TheoreticalParams) -> f64 {
    f64::min(eti_full_recovery(params), eti_saffron(params))
}

/// Binary entropy in bits, with `0 log 0 = 0`.
pub fn binary_entropy(p: f64) -> f64 {
    debug_assert!((0.0..=1.0).contains(&p));
    let term = |x: f64| if x > 0.0 { -x * x.log2() } else { 0.0 };
    term(p) + term(1.0 - p)
}

/// Information rate of a scheme: `H(p) / (p * ETI)`, bounded above by 1.
pub fn rate_from_eti(p: f64, eti: f64) -> f64 {
    binary_entropy(p) / (p * eti)
}

/// One sample of the asymptotic rate curves at sparsity exponent alpha.
#[derive(Debug, Clone, Copy, PartialEq, Serialize, Deserialize)]
pub struct RatePoint {
    pub alpha: f64,
    /// `min{1, (ln 2)^2 (1-alpha)/alpha}`.
    pub rate_full: f64,
    /// Constant `1/(2e)`.
    pub rate_saffron: f64,
    /// Best achievable rate, `max{rate_full, rate_saffron}`.
    pub rate: f64,
}

/// Asymptotic rates of the two theoretical strategies at a given
/// sparsity exponent.
pub fn rate_point(alpha: f64) -> RatePoint {
    let ln2_sq = std::f64::consts::LN_2 * std::f64::consts::LN_2;
    let rate_full = if alpha <= 0.0 {
        1.0
    } else {
        f64::min(1.0, ln2_sq * (1.0 - alpha) / alpha)
    };
    let rate_saffron = 0.5 / std::f64::consts::E;
    RatePoint {
        alpha,
        rate_full,
        rate_saffron,
        rate: f64::max(rate_full, rate_saffron),
    }
}

/// Alpha below which full recovery runs at rate 1: `(ln2)^2/(1+(ln2)^2)`.
pub fn rate_full_saturation_alpha() -> f64 {
    let ln2_sq = std::f64::consts::LN_2 * std::f64::consts::LN_2;
    ln2_sq / (1.0 + ln2_sq)
}

/// Alpha above which the block-code scheme has the higher rate:
/// `(ln2)^2/((ln2)^2 + 1/(2e))`.
pub fn rate_crossover_alpha() -> f64 {
    let ln2_sq = std::f64::consts::LN_2 * std::f64::consts::LN_2;
    ln2_sq / (ln2_sq + 0.5 / std::f64::consts::E)
}
