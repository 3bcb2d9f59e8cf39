//! Histogram-comparison metrics.
//!
//! Mutual-information metrics treat a histogram as a sequence of `N_r` exact
//! values and use the empirical value-frequency distribution: the probability
//! attached to rule `r` is the multiplicity of `h_r` among the histogram's
//! entries divided by `N_r`; the joint distribution counts exact value pairs
//! `(a_r, b_r)`. Entropies sum over rules (not over distinct values) and use
//! natural logarithms.

mod information;

use std::collections::HashMap;

use crate::error::{Error, Result};
use crate::histogram::HitHistogram;

pub use information::{
    binary_entropy, conditional_hits_entropy, gaussian_fit, hits_entropy, interval_mass, rbi,
    BankSource, GaussianBank, GaussianParams, P_MIN, SIGMA_FLOOR,
};

fn check_lengths(a: &HitHistogram, b: &HitHistogram) -> Result<()> {
    if a.n_rules() != b.n_rules() {
        return Err(Error::LengthMismatch {
            expected: a.n_rules(),
            found: b.n_rules(),
        });
    }
    Ok(())
}

/// `l_p` distance between normalized histograms, `p` in {1, 2}. Histograms of
/// equal split size are compared on their integer counts, so the only
/// rounding is the final scaling.
pub fn lp_norm(a: &HitHistogram, b: &HitHistogram, p: u8) -> Result<f64> {
    check_lengths(a, b)?;
    if p != 1 && p != 2 {
        return Err(Error::InvalidConfig(format!("unsupported norm order {p}")));
    }
    if a.split_size() == b.split_size() {
        let n = f64::from(a.split_size());
        let diffs = a
            .counts()
            .iter()
            .zip(b.counts())
            .map(|(&x, &y)| u64::from(x.abs_diff(y)));
        return Ok(if p == 1 {
            diffs.sum::<u64>() as f64 / n
        } else {
            (diffs.map(|d| d * d).sum::<u64>() as f64).sqrt() / n
        });
    }
    let diffs = (0..a.n_rules()).map(|r| (a.value(r) - b.value(r)).abs());
    Ok(if p == 1 {
        diffs.sum()
    } else {
        diffs.map(|d| d * d).sum::<f64>().sqrt()
    })
}

/// Mean absolute per-rule difference: `l1 / N_r`.
pub fn alpha_weight(a: &HitHistogram, b: &HitHistogram) -> Result<f64> {
    let l1 = lp_norm(a, b, 1)?;
    Ok(l1 / a.n_rules() as f64)
}

/// Distinct values of a histogram with their empirical frequencies, ascending
/// by value.
#[derive(Clone, Debug, PartialEq)]
pub struct ValueDistribution {
    pub support: Vec<f64>,
    pub probabilities: Vec<f64>,
}

pub fn value_distribution(h: &HitHistogram) -> ValueDistribution {
    let n = h.n_rules() as f64;
    let mut tally: Vec<(u32, usize)> = Vec::new();
    let mut sorted = h.counts().to_vec();
    sorted.sort_unstable();
    for c in sorted {
        match tally.last_mut() {
            Some((v, m)) if *v == c => *m += 1,
            _ => tally.push((c, 1)),
        }
    }
    let size = f64::from(h.split_size());
    ValueDistribution {
        support: tally.iter().map(|&(c, _)| f64::from(c) / size).collect(),
        probabilities: tally.iter().map(|&(_, m)| m as f64 / n).collect(),
    }
}

/// Joint value-pair distribution over rules, in order of first appearance.
pub fn joint_value_distribution(
    a: &HitHistogram,
    b: &HitHistogram,
) -> Result<Vec<((f64, f64), f64)>> {
    check_lengths(a, b)?;
    let mult = multiplicities(pair_keys(a, b));
    let n = a.n_rules() as f64;
    let mut seen = Vec::new();
    let mut out = Vec::new();
    for (r, &m) in mult.iter().enumerate() {
        let key = (a.counts()[r], b.counts()[r]);
        if !seen.contains(&key) {
            seen.push(key);
            out.push(((a.value(r), b.value(r)), m as f64 / n));
        }
    }
    Ok(out)
}

fn pair_keys<'a>(a: &'a HitHistogram, b: &'a HitHistogram) -> impl Iterator<Item = u64> + 'a {
    a.counts()
        .iter()
        .zip(b.counts())
        .map(|(&x, &y)| (u64::from(x) << 32) | u64::from(y))
}

/// For each position, how many positions carry the same key.
fn multiplicities<K, I>(keys: I) -> Vec<usize>
where
    K: std::hash::Hash + Eq + Copy,
    I: Iterator<Item = K>,
{
    let keys: Vec<K> = keys.collect();
    let mut tally: HashMap<K, usize> = HashMap::with_capacity(keys.len());
    for &k in &keys {
        *tally.entry(k).or_insert(0) += 1;
    }
    keys.iter().map(|k| tally[k]).collect()
}

/// `-Σ_r w·P_r·ln(w·P_r)` with `P_r = mult_r / N_r`.
fn weighted_entropy(mult: &[usize], weight: f64) -> f64 {
    let n = mult.len() as f64;
    -mult
        .iter()
        .map(|&m| {
            let q = weight * m as f64 / n;
            if q > 0.0 {
                q * q.ln()
            } else {
                0.0
            }
        })
        .sum::<f64>()
}

fn information(a: &HitHistogram, b: &HitHistogram, weight: f64) -> f64 {
    let ha = weighted_entropy(&multiplicities(a.counts().iter().copied()), weight);
    let hb = weighted_entropy(&multiplicities(b.counts().iter().copied()), weight);
    let hab = weighted_entropy(&multiplicities(pair_keys(a, b)), weight);
    ha + hb - hab
}

/// Weighted mutual information: entropies weighted by the pair's
/// [`alpha_weight`]. Identical histograms score 0 (the `α → 0` limit).
pub fn weighted_mutual_information(a: &HitHistogram, b: &HitHistogram) -> Result<f64> {
    let alpha = alpha_weight(a, b)?;
    if alpha == 0.0 {
        return Ok(0.0);
    }
    Ok(information(a, b, alpha))
}

/// Unweighted mutual information of the value-frequency distributions (the
/// `α ≡ 1` case). Blind to which rule carries which value.
pub fn mutual_information(a: &HitHistogram, b: &HitHistogram) -> Result<f64> {
    check_lengths(a, b)?;
    Ok(information(a, b, 1.0))
}
