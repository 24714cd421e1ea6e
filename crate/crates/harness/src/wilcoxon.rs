//! One-sided Wilcoxon signed-rank test.
//!
//! Tests whether the paired sample `x` is stochastically less than `y`: small
//! values of the positive-rank sum count as evidence, and the reported
//! p-value is P(W⁺ ≤ observed) under the null of symmetric differences.

use crate::error::{HarnessError, Result};
use rpmbo_core::stats::std_normal_cdf;

/// Exact distribution up to this sample size, normal approximation above.
const EXACT_LIMIT: usize = 25;

pub fn wilcoxon_signed_rank(x: &[f64], y: &[f64]) -> Result<f64> {
    if x.len() != y.len() {
        return Err(HarnessError::InvalidArgument(format!(
            "paired samples of lengths {} and {}",
            x.len(),
            y.len()
        )));
    }
    if x.len() < 5 {
        return Err(HarnessError::InvalidArgument(
            "signed-rank test needs at least 5 pairs".into(),
        ));
    }
    let diffs: Vec<f64> = x
        .iter()
        .zip(y)
        .map(|(a, b)| a - b)
        .filter(|d| *d != 0.0)
        .collect();
    if diffs.is_empty() {
        return Err(HarnessError::InvalidArgument(
            "all paired differences are zero".into(),
        ));
    }
    if diffs.iter().any(|d| !d.is_finite()) {
        return Err(HarnessError::InvalidArgument(
            "non-finite paired difference".into(),
        ));
    }

    let n = diffs.len();
    let ranks2 = doubled_midranks(&diffs);
    let w2_plus: u64 = diffs
        .iter()
        .zip(&ranks2)
        .filter(|(d, _)| **d > 0.0)
        .map(|(_, r)| *r)
        .sum();

    if n <= EXACT_LIMIT {
        Ok(exact_p(&ranks2, w2_plus))
    } else {
        Ok(approx_p(&diffs, w2_plus))
    }
}

/// Ranks of |d| with ties sharing their average rank, scaled by 2 so every
/// rank is an integer (midranks over an even group count end in .5).
fn doubled_midranks(diffs: &[f64]) -> Vec<u64> {
    let n = diffs.len();
    let mut order: Vec<usize> = (0..n).collect();
    order.sort_by(|&i, &j| diffs[i].abs().total_cmp(&diffs[j].abs()));
    let mut ranks2 = vec![0u64; n];
    let mut pos = 0;
    while pos < n {
        let mut end = pos + 1;
        while end < n && diffs[order[end]].abs() == diffs[order[pos]].abs() {
            end += 1;
        }
        // Average of ranks pos+1 ..= end, doubled: (pos+1 + end).
        let r2 = (pos + 1 + end) as u64;
        for &idx in &order[pos..end] {
            ranks2[idx] = r2;
        }
        pos = end;
    }
    ranks2
}

/// P(W⁺ ≤ w) by dynamic programming over the 2ⁿ sign assignments. Counts
/// stay exact in f64 up to n = 25 (2²⁵ < 2⁵³).
fn exact_p(ranks2: &[u64], w2_obs: u64) -> f64 {
    let total: u64 = ranks2.iter().sum();
    let cap = total.min(w2_obs) as usize;
    let mut counts = vec![0.0f64; cap + 1];
    counts[0] = 1.0;
    for &r in ranks2 {
        let r = r as usize;
        // Sums above the observed statistic never feed back into the tail,
        // so the table stays truncated at w2_obs.
        for s in (0..=cap).rev() {
            if s >= r {
                counts[s] += counts[s - r];
            }
        }
    }
    let tail: f64 = counts.iter().sum();
    let p = tail / 2f64.powi(ranks2.len() as i32);
    p.clamp(f64::MIN_POSITIVE, 1.0)
}

/// Normal approximation with tie correction and continuity correction.
fn approx_p(diffs: &[f64], w2_plus: u64) -> f64 {
    let n = diffs.len() as f64;
    let w_plus = w2_plus as f64 / 2.0;
    let mean = n * (n + 1.0) / 4.0;

    let mut sorted: Vec<f64> = diffs.iter().map(|d| d.abs()).collect();
    sorted.sort_by(|a, b| a.total_cmp(b));
    let mut tie_term = 0.0;
    let mut pos = 0;
    while pos < sorted.len() {
        let mut end = pos + 1;
        while end < sorted.len() && sorted[end] == sorted[pos] {
            end += 1;
        }
        let t = (end - pos) as f64;
        tie_term += t * t * t - t;
        pos = end;
    }
    let var = n * (n + 1.0) * (2.0 * n + 1.0) / 24.0 - tie_term / 48.0;
    let z = (w_plus - mean + 0.5) / var.sqrt();
    std_normal_cdf(z).clamp(f64::MIN_POSITIVE, 1.0)
}
