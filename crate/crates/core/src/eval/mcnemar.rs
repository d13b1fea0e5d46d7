use serde::{Deserialize, Serialize};
use statrs::function::gamma::ln_gamma;

use super::EvalError;
use crate::Label;

/// Discordant pairs at or below this total use the exact test.
pub const EXACT_LIMIT: u64 = 25;
/// Largest n for which binomial sums are done in exact integer arithmetic.
const INTEGER_LIMIT: u64 = 120;

#[derive(Debug, Clone, Copy, Default, PartialEq, Eq, Serialize, Deserialize)]
pub struct PairedOutcomes {
    /// A correct, B wrong.
    pub n10: u64,
    /// A wrong, B correct.
    pub n01: u64,
    pub n11: u64,
    pub n00: u64,
}

pub fn paired_outcomes(preds_a: &[Label], preds_b: &[Label], labels: &[Label]) -> Result<PairedOutcomes, EvalError> {
    if preds_a.len() != labels.len() || preds_b.len() != labels.len() {
        return Err(EvalError::LengthMismatch {
            left: preds_a.len().max(preds_b.len()),
            right: labels.len(),
        });
    }
    let mut out = PairedOutcomes::default();
    for ((a, b), t) in preds_a.iter().zip(preds_b).zip(labels) {
        match (a == t, b == t) {
            (true, false) => out.n10 += 1,
            (false, true) => out.n01 += 1,
            (true, true) => out.n11 += 1,
            (false, false) => out.n00 += 1,
        }
    }
    Ok(out)
}

#[derive(Debug, Clone, Copy, PartialEq, Eq, Serialize, Deserialize)]
pub enum McNemarMethod {
    ExactBinomial,
    MidP,
}

#[derive(Debug, Clone, Copy, PartialEq, Serialize, Deserialize)]
pub struct McNemarResult {
    pub method: McNemarMethod,
    pub raw_p: f64,
    pub adj_p: Option<f64>,
}

/// `sum_{i in range} C(n, i) / 2^n`.
fn binom_half_sum(n: u64, lo: u64, hi: u64) -> f64 {
    if lo > hi || lo > n {
        return 0.0;
    }
    let hi = hi.min(n);
    if n <= INTEGER_LIMIT {
        let mut c: u128 = 1;
        let mut sum: u128 = 0;
        for i in 0..=hi {
            if i >= lo {
                sum += c;
            }
            // C(n, i+1) = C(n, i) * (n - i) / (i + 1), exact at every step
            c = c * (n - i) as u128 / (i + 1) as u128;
        }
        return sum as f64 / 2f64.powi(n as i32);
    }
    let ln_half_n = n as f64 * std::f64::consts::LN_2;
    let ln_terms: Vec<f64> = (lo..=hi)
        .map(|i| ln_gamma(n as f64 + 1.0) - ln_gamma(i as f64 + 1.0) - ln_gamma((n - i) as f64 + 1.0) - ln_half_n)
        .collect();
    let max = ln_terms.iter().copied().fold(f64::NEG_INFINITY, f64::max);
    (max + ln_terms.iter().map(|t| (t - max).exp()).sum::<f64>().ln()).exp().min(1.0)
}

/// One-sided exact test: `P(X >= n10)` for `X ~ Bin(n10 + n01, 1/2)`.
/// Both counts zero gives 1.
pub fn mcnemar_exact(n10: u64, n01: u64) -> f64 {
    let n = n10 + n01;
    binom_half_sum(n, n10, n)
}

/// One-sided mid-p: `P(X > n10) + P(X = n10) / 2`.
pub fn mcnemar_midp(n10: u64, n01: u64) -> f64 {
    let n = n10 + n01;
    binom_half_sum(n, n10 + 1, n) + 0.5 * binom_half_sum(n, n10, n10)
}

/// Exact test up to 25 discordant pairs, mid-p above.
pub fn mcnemar(n10: u64, n01: u64) -> McNemarResult {
    let (method, raw_p) = if n10 + n01 <= EXACT_LIMIT {
        (McNemarMethod::ExactBinomial, mcnemar_exact(n10, n01))
    } else {
        (McNemarMethod::MidP, mcnemar_midp(n10, n01))
    };
    McNemarResult {
        method,
        raw_p,
        adj_p: None,
    }
}

/// Benjamini-Hochberg step-up adjustment, returned in input order.
pub fn bh_adjust(p_values: &[f64]) -> Result<Vec<f64>, EvalError> {
    if let Some(&bad) = p_values.iter().find(|p| !(0.0..=1.0).contains(*p)) {
        return Err(EvalError::OutOfRange(bad));
    }
    let m = p_values.len();
    let mut order: Vec<usize> = (0..m).collect();
    order.sort_by(|&a, &b| p_values[a].total_cmp(&p_values[b]));
    let mut adjusted = vec![0.0; m];
    let mut running = 1.0f64;
    for rank in (0..m).rev() {
        let i = order[rank];
        running = running.min(p_values[i] * m as f64 / (rank + 1) as f64);
        // p * m / m can land one ulp below p
        adjusted[i] = running.min(1.0).max(p_values[i]);
    }
    Ok(adjusted)
}

/// Table style: `<.001`, otherwise three decimals without the leading zero
/// (`1.000` stays as is).
pub fn format_p(p: f64) -> String {
    if p < 0.001 {
        "<.001".to_string()
    } else if p >= 1.0 {
        "1.000".to_string()
    } else {
        let s = format!("{:.3}", super::round_half_up(p, 3));
        s.trim_start_matches('0').to_string()
    }
}

#[cfg(test)]
mod tests {
    use num_bigint::BigUint;
    use num_traits::{One, ToPrimitive, Zero};
    use proptest::prelude::*;

    use super::*;

    /// Independent oracle: exact big-integer binomial tail.
    fn big_tail(n: u64, lo: u64, hi: u64) -> f64 {
        let mut c = BigUint::one();
        let mut sum = BigUint::zero();
        for i in 0..=n {
            if i >= lo && i <= hi {
                sum += &c;
            }
            c = c * BigUint::from(n - i) / BigUint::from(i + 1);
        }
        let denom = BigUint::one() << n as usize;
        sum.to_f64().unwrap() / denom.to_f64().unwrap()
    }

    #[test]
    fn exact_examples() {
        assert_eq!(mcnemar_exact(6, 0), 0.015625);
        assert_eq!(mcnemar_exact(1, 0), 0.5);
        assert_eq!(mcnemar_exact(0, 0), 1.0);
    }

    #[test]
    fn midp_examples() {
        assert_eq!(mcnemar_midp(20, 20), 0.5);
        let p = mcnemar_midp(62, 37);
        let oracle = big_tail(99, 63, 99) + 0.5 * big_tail(99, 62, 62);
        assert!((p - oracle).abs() <= 1e-15 * oracle.max(1e-300), "{p} vs {oracle}");
        assert!(p < 0.011);
        assert!(mcnemar_midp(305, 3) < 1e-15);
    }

    #[test]
    fn routing() {
        assert_eq!(mcnemar(25, 0).method, McNemarMethod::ExactBinomial);
        assert_eq!(mcnemar(20, 6).method, McNemarMethod::MidP);
    }

    #[test]
    fn log_space_matches_big_integers() {
        for &(a, b) in &[(115u64, 7u64), (161, 2), (263, 4), (305, 3), (80, 70)] {
            let n = a + b;
            let oracle = big_tail(n, a, n);
            let got = mcnemar_exact(a, b);
            assert!(((got - oracle) / oracle).abs() < 1e-9, "({a},{b}): {got} vs {oracle}");
        }
    }

    #[test]
    fn bh_examples() {
        assert_eq!(bh_adjust(&[0.01, 0.02, 0.03]).unwrap(), vec![0.03, 0.03, 0.03]);
        assert_eq!(bh_adjust(&[0.2]).unwrap(), vec![0.2]);
        assert_eq!(bh_adjust(&[0.5, 1.0]).unwrap(), vec![1.0, 1.0]);
        assert!(matches!(bh_adjust(&[1.2]), Err(EvalError::OutOfRange(_))));
    }

    #[test]
    fn paired_examples() {
        use Label::{Legitimate as L, Phishing as P};
        let labels = [P; 7];
        let p = paired_outcomes(&[P; 7], &[L; 7], &labels).unwrap();
        assert_eq!((p.n10, p.n01, p.n11, p.n00), (7, 0, 0, 0));
        let p = paired_outcomes(&[P, L, P], &[P, L, P], &[P, P, L]).unwrap();
        assert_eq!((p.n10, p.n01), (0, 0));
    }

    #[test]
    fn p_formatting() {
        assert_eq!(format_p(0.0234), ".023");
        assert_eq!(format_p(1.0), "1.000");
        assert_eq!(format_p(0.0004), "<.001");
    }

    proptest! {
        #[test]
        fn exact_matches_oracle_and_complement(a in 0u64..150, b in 0u64..150) {
            let n = a + b;
            let upper = mcnemar_exact(a, b);
            let oracle = big_tail(n, a, n);
            prop_assert!(((upper - oracle) / oracle).abs() < 1e-9);
            let lower = if a == 0 { 0.0 } else { binom_half_sum(n, 0, a - 1) };
            prop_assert!((upper + lower - 1.0).abs() < 1e-9);
        }

        #[test]
        fn midp_between_tails(a in 0u64..200, b in 0u64..200) {
            let n = a + b;
            let mid = mcnemar_midp(a, b);
            let strict = binom_half_sum(n, a + 1, n);
            let weak = mcnemar_exact(a, b);
            // log-space sums above 120 pairs carry ~1e-14 relative error
            prop_assert!(strict <= mid * (1.0 + 1e-12) && mid <= weak * (1.0 + 1e-12));
        }

        #[test]
        fn bh_properties(ps in prop::collection::vec(0.0f64..=1.0, 1..30)) {
            let adj = bh_adjust(&ps).unwrap();
            let mut idx: Vec<usize> = (0..ps.len()).collect();
            idx.sort_by(|&a, &b| ps[a].total_cmp(&ps[b]));
            for w in idx.windows(2) {
                prop_assert!(adj[w[0]] <= adj[w[1]] + 1e-15);
            }
            for (a, p) in adj.iter().zip(&ps) {
                prop_assert!(a >= p && *a <= 1.0);
            }
        }
    }
}
