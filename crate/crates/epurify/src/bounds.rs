//! Closed-form performance predictions, as pure functions, so simulations
//! can be compared against theory without re-deriving formulas in tests.
//!
//! Some formulas are exact equalities on diagonal inputs (Simple Scrambling
//! success probability and fidelity, Random Permutation mismatch rate);
//! others are one-sided bounds. [`BoundSet`] labels each value with the
//! formula it was computed from.

use crate::protocols::GeppParams;
use serde::{Deserialize, Serialize};
use std::collections::BTreeMap;
use thiserror::Error;

#[derive(Debug, Error)]
pub enum BoundsError {
    #[error("parameters out of range: {0}")]
    BadParams(String),
}

/// A named collection of predicted quantities, each tagged with the formula
/// that produced it.
#[derive(Debug, Clone, Default, Serialize, Deserialize)]
pub struct BoundSet {
    pub entries: BTreeMap<String, BoundEntry>,
}

#[derive(Debug, Clone, Serialize, Deserialize)]
pub struct BoundEntry {
    pub value: f64,
    pub formula: String,
    /// True when the prediction is an exact equality on diagonal inputs
    /// rather than a one-sided bound.
    pub exact: bool,
}

impl BoundSet {
    pub fn insert(&mut self, name: &str, value: f64, formula: &str, exact: bool) {
        self.entries.insert(
            name.to_string(),
            BoundEntry {
                value,
                formula: formula.to_string(),
                exact,
            },
        );
    }

    pub fn get(&self, name: &str) -> Option<f64> {
        self.entries.get(name).map(|e| e.value)
    }
}

/// Maximum achievable mean output fidelity of any protocol that never fails:
/// 1 - ((M-K)/M)(N/(N-1))ε.
pub fn absolute_upper_bound(n: u64, k: u64, m: u64, epsilon: f64) -> Result<f64, BoundsError> {
    if !(k <= m && m <= n * k) {
        return Err(BoundsError::BadParams(format!(
            "need K <= M <= N*K, got N={n} K={k} M={m}"
        )));
    }
    if !(0.0..1.0).contains(&epsilon) {
        return Err(BoundsError::BadParams(format!("epsilon {epsilon} not in [0,1)")));
    }
    let (n, k, m) = (n as f64, k as f64, m as f64);
    Ok(1.0 - ((m - k) / m) * (n / (n - 1.0)) * epsilon)
}

/// Exact success probability and success fidelity of Simple Scrambling on a
/// diagonal input of fidelity 1-ε, plus the looser 1 - (2W/N)ε bound.
#[derive(Debug, Clone, Copy, PartialEq, Serialize, Deserialize)]
pub struct SimpleScramblingPrediction {
    pub success_probability: f64,
    pub success_fidelity: f64,
    pub fidelity_lower_bound: f64,
}

pub fn simple_scrambling_prediction(
    n: u64,
    l: u64,
    w: u64,
    epsilon: f64,
) -> Result<SimpleScramblingPrediction, BoundsError> {
    if n != w * l {
        return Err(BoundsError::BadParams(format!("need N = W*L, got N={n} W={w} L={l}")));
    }
    if !(0.0..0.5).contains(&epsilon) {
        return Err(BoundsError::BadParams(format!("epsilon {epsilon} not in [0, 1/2)")));
    }
    let (nf, lf, wf) = (n as f64, l as f64, w as f64);
    let fail = epsilon * nf * (lf - 1.0) / (lf * (nf - 1.0));
    Ok(SimpleScramblingPrediction {
        success_probability: 1.0 - fail,
        success_fidelity: (1.0 - epsilon) / (1.0 - fail),
        fidelity_lower_bound: 1.0 - (2.0 * wf / nf) * epsilon,
    })
}

/// Hash-and-Compare on a pure input of fidelity 1-ε: (failure-probability
/// bound ε, diagonal-fidelity bound 1 - 2ε/√S, confidence 1 - 1/√S).
#[derive(Debug, Clone, Copy, PartialEq, Serialize, Deserialize)]
pub struct HashComparePrediction {
    pub fail_bound: f64,
    pub diag_fidelity_bound: f64,
    pub confidence: f64,
}

pub fn hash_compare_prediction(s: u64, epsilon: f64) -> Result<HashComparePrediction, BoundsError> {
    if !s.is_power_of_two() {
        return Err(BoundsError::BadParams(format!("S = {s} must be a power of 2")));
    }
    if !(0.0..0.5).contains(&epsilon) {
        return Err(BoundsError::BadParams(format!("epsilon {epsilon} not in [0, 1/2)")));
    }
    let rs = (s as f64).sqrt();
    Ok(HashComparePrediction {
        fail_bound: epsilon,
        diag_fidelity_bound: 1.0 - 2.0 * epsilon / rs,
        confidence: 1.0 - 1.0 / rs,
    })
}

/// Complete Scrambling parameter tuple ⟨N, SK, WK, ε, δ, p, q⟩ with
/// δ = (4W/N + 4/√S)ε, p = 2ε + √(2ε/√S), q = 1/√S.
pub fn complete_scrambling_prediction(
    n: u64,
    k: u64,
    w: u64,
    s: u64,
    epsilon: f64,
) -> Result<GeppParams, BoundsError> {
    if !s.is_power_of_two() {
        return Err(BoundsError::BadParams(format!("S = {s} must be a power of 2")));
    }
    if !(0.0..0.5).contains(&epsilon) {
        return Err(BoundsError::BadParams(format!("epsilon {epsilon} not in [0, 1/2)")));
    }
    if w > n {
        return Err(BoundsError::BadParams(format!("need W <= N, got W={w} N={n}")));
    }
    let rs = (s as f64).sqrt();
    let delta = (4.0 * w as f64 / n as f64 + 4.0 / rs) * epsilon;
    let p = 2.0 * epsilon + (2.0 * epsilon / rs).sqrt();
    Ok(GeppParams {
        n,
        k: s * k,
        m: w * k,
        epsilon,
        delta,
        p: Some(p),
        q: Some(1.0 / rs),
    })
}

/// All predictions for one (n, t, ε) grid point of the power-of-2 family:
/// N = 2^n, W = 2^{n-t}, L = 2^t, K = 2^n - 1, S = 2^{2t}.
pub fn bound_set_for(n: u32, t: u32, epsilon: f64) -> Result<BoundSet, BoundsError> {
    if t == 0 || t >= n || n > 16 {
        return Err(BoundsError::BadParams(format!("need 0 < t < n <= 16, got n={n} t={t}")));
    }
    let nn = 1u64 << n;
    let w = 1u64 << (n - t);
    let l = 1u64 << t;
    let k = nn - 1;
    let s = 1u64 << (2 * t);
    let mut set = BoundSet::default();
    set.insert(
        "absolute_upper_bound",
        absolute_upper_bound(nn, k, w * k, epsilon)?,
        "1 - ((M-K)/M)(N/(N-1))eps",
        false,
    );
    let ss = simple_scrambling_prediction(nn, l, w, epsilon)?;
    set.insert(
        "simple_scrambling_success_probability",
        ss.success_probability,
        "1 - eps*N(L-1)/(L(N-1))",
        true,
    );
    set.insert(
        "simple_scrambling_success_fidelity",
        ss.success_fidelity,
        "(1-eps)/(1 - eps*N(L-1)/(L(N-1)))",
        true,
    );
    set.insert(
        "simple_scrambling_fidelity_lower_bound",
        ss.fidelity_lower_bound,
        "1 - (2W/N)eps",
        false,
    );
    let hc = hash_compare_prediction(s, epsilon)?;
    set.insert("hash_compare_fail_bound", hc.fail_bound, "eps", false);
    set.insert(
        "hash_compare_diag_fidelity_bound",
        hc.diag_fidelity_bound,
        "1 - 2eps/sqrt(S)",
        false,
    );
    set.insert(
        "hash_compare_confidence",
        hc.confidence,
        "1 - 1/sqrt(S)",
        false,
    );
    let cs = complete_scrambling_prediction(nn, k, w, s, epsilon)?;
    set.insert(
        "complete_scrambling_delta",
        cs.delta,
        "(4W/N + 4/sqrt(S))eps",
        false,
    );
    set.insert(
        "complete_scrambling_fail_bound",
        cs.p.unwrap(),
        "2eps + sqrt(2eps/sqrt(S))",
        false,
    );
    set.insert(
        "complete_scrambling_confidence_gap",
        cs.q.unwrap(),
        "1/sqrt(S)",
        false,
    );
    Ok(set)
}

#[cfg(test)]
mod tests {
    use super::*;
    use approx::assert_abs_diff_eq;

    #[test]
    fn absolute_bound_values() {
        // K = M: no improvement demanded, bound is 1.
        assert_abs_diff_eq!(absolute_upper_bound(8, 3, 3, 0.3).unwrap(), 1.0);
        // N=4, K=1, M=2, ε=0.1 → 1 - (1/2)(4/3)(0.1).
        assert_abs_diff_eq!(
            absolute_upper_bound(4, 1, 2, 0.1).unwrap(),
            1.0 - 0.5 * (4.0 / 3.0) * 0.1,
            epsilon = 1e-15
        );
        // M = 2^c·K at large N: improvement over 1-ε is within ε/2^c + O(ε/N).
        let c = 3u32;
        let eps = 0.2;
        let bound = absolute_upper_bound(1 << 14, 1, 1 << c, eps).unwrap();
        let improvement = bound - (1.0 - eps);
        assert!(improvement <= eps / 2f64.powi(c as i32) + eps / 1000.0);
        assert!(absolute_upper_bound(4, 3, 2, 0.1).is_err());
    }

    #[test]
    fn simple_scrambling_values() {
        let p = simple_scrambling_prediction(8, 2, 4, 0.0).unwrap();
        assert_abs_diff_eq!(p.success_probability, 1.0);
        assert_abs_diff_eq!(p.success_fidelity, 1.0);
        // L = N (W = 1): fidelity exactly 1.
        let p = simple_scrambling_prediction(8, 8, 1, 0.3).unwrap();
        assert_abs_diff_eq!(p.success_fidelity, (1.0 - 0.3) / (1.0 - 0.3), epsilon = 1e-15);
        // N=8, L=2, ε=0.1.
        let p = simple_scrambling_prediction(8, 2, 4, 0.1).unwrap();
        assert_abs_diff_eq!(p.success_probability, 1.0 - 0.8 / 14.0, epsilon = 1e-12);
        assert_abs_diff_eq!(p.success_fidelity, 0.9 / (1.0 - 0.8 / 14.0), epsilon = 1e-12);
        assert!(p.success_fidelity >= p.fidelity_lower_bound);
        assert!(simple_scrambling_prediction(8, 2, 3, 0.1).is_err());
    }

    #[test]
    fn simple_scrambling_matches_exact_simulation() {
        use crate::protocols::simple_scrambling;
        use crate::qstate::SparseState;
        use crate::scramble::make_multiplication_table;
        let eps = 0.1;
        let pred = simple_scrambling_prediction(8, 2, 4, eps).unwrap();
        let perm = make_multiplication_table(3, 1).unwrap();
        let state = SparseState::random_near_target(8, eps, true, 31).unwrap();
        let dist = simple_scrambling(&state, &perm, true).unwrap();
        assert_abs_diff_eq!(dist.success_probability(), pred.success_probability, epsilon = 1e-9);
        assert_abs_diff_eq!(dist.mean_fidelity(28).unwrap(), pred.success_fidelity, epsilon = 1e-9);
    }

    #[test]
    fn absolute_bound_matches_exact_simulation() {
        use crate::protocols::random_permutation_exact;
        use crate::qstate::SparseState;
        let eps = 0.1;
        let bound = absolute_upper_bound(4, 1, 2, eps).unwrap();
        let state = SparseState::random_near_target(4, eps, true, 32).unwrap();
        let dist = random_permutation_exact(&state, 2).unwrap();
        // The random permutation protocol attains the bound exactly at K=1.
        assert_abs_diff_eq!(dist.mean_fidelity(2).unwrap(), bound, epsilon = 1e-9);
    }

    #[test]
    fn hash_compare_values() {
        let p = hash_compare_prediction(16, 0.0).unwrap();
        assert_abs_diff_eq!(p.fail_bound, 0.0);
        assert_abs_diff_eq!(p.diag_fidelity_bound, 1.0);
        assert_abs_diff_eq!(p.confidence, 0.75);
        let p = hash_compare_prediction(16, 0.2).unwrap();
        assert_abs_diff_eq!(p.fail_bound, 0.2, epsilon = 1e-15);
        assert_abs_diff_eq!(p.diag_fidelity_bound, 0.9, epsilon = 1e-15);
        assert_abs_diff_eq!(p.confidence, 0.75, epsilon = 1e-15);
        // S → ∞: the diagonal-fidelity bound approaches 1.
        let p = hash_compare_prediction(1 << 40, 0.2).unwrap();
        assert!(p.diag_fidelity_bound > 1.0 - 1e-5);
        assert!(hash_compare_prediction(12, 0.1).is_err());
    }

    #[test]
    fn complete_scrambling_values() {
        // W/N = 2^{-t}, S = 2^{2t}: δ collapses to 8ε/2^t = ε/2^{t-3}.
        for t in 1u32..5 {
            let n = t + 3;
            let eps = 0.01;
            let params = complete_scrambling_prediction(
                1 << n,
                (1 << n) - 1,
                1 << (n - t),
                1 << (2 * t),
                eps,
            )
            .unwrap();
            assert_abs_diff_eq!(
                params.delta,
                eps / 2f64.powi(t as i32 - 3),
                epsilon = 1e-15
            );
        }
        let p = complete_scrambling_prediction(8, 7, 4, 4, 0.0).unwrap();
        assert_abs_diff_eq!(p.delta, 0.0);
        assert_abs_diff_eq!(p.p.unwrap(), 0.0);
        // n=3, t=1, ε=0.05: δ = (4·4/8 + 4/2)·0.05 = 0.2, p = 0.1 + √0.05.
        let p = complete_scrambling_prediction(8, 7, 4, 4, 0.05).unwrap();
        assert_abs_diff_eq!(p.delta, 0.2, epsilon = 1e-12);
        assert_abs_diff_eq!(p.p.unwrap(), 0.1 + 0.05f64.sqrt(), epsilon = 1e-12);
        assert_abs_diff_eq!(p.q.unwrap(), 0.5, epsilon = 1e-15);
        assert_eq!((p.k, p.m), (28, 28));
    }

    #[test]
    fn bound_set_grid() {
        let set = bound_set_for(3, 1, 0.1).unwrap();
        assert_abs_diff_eq!(
            set.get("simple_scrambling_success_probability").unwrap(),
            1.0 - 0.8 / 14.0,
            epsilon = 1e-12
        );
        // δ halves per t step when t increases at fixed n (up to the 4/√S term).
        let d1 = bound_set_for(5, 1, 0.1).unwrap().get("complete_scrambling_delta").unwrap();
        let d2 = bound_set_for(5, 2, 0.1).unwrap().get("complete_scrambling_delta").unwrap();
        assert_abs_diff_eq!(d2, d1 / 2.0, epsilon = 1e-12);
        // All probability-like entries in [0, 1].
        for (name, e) in &set.entries {
            assert!((0.0..=1.0).contains(&e.value), "{name} = {}", e.value);
        }
        assert!(bound_set_for(3, 3, 0.1).is_err());
    }
}
