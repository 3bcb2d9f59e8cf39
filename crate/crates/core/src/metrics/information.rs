//! Per-rule Gaussian models of hit frequencies and the rule-based information
//! ratio built from them.

use std::borrow::Borrow;
use std::f64::consts::SQRT_2;

use serde::{Deserialize, Serialize};
use statrs::function::erf::erfc;

use crate::error::{Error, Result};
use crate::histogram::HitHistogram;

/// Lower bound on fitted standard deviations, in hit-frequency units.
pub const SIGMA_FLOOR: f64 = 1e-6;

/// Interval probabilities are clamped to `[P_MIN, 1 - P_MIN]`.
pub const P_MIN: f64 = 1e-12;

#[derive(Clone, Copy, Debug, PartialEq, Serialize, Deserialize)]
pub struct GaussianParams {
    pub mu: f64,
    pub sigma: f64,
}

/// Maximum-likelihood fit: arithmetic mean and population standard deviation,
/// with the deviation floored at `sigma_floor`.
pub fn gaussian_fit(values: &[f64], sigma_floor: f64) -> Result<GaussianParams> {
    if values.len() < 2 {
        return Err(Error::InsufficientCount {
            needed: 2,
            have: values.len(),
        });
    }
    let n = values.len() as f64;
    let mu = values.iter().sum::<f64>() / n;
    let var = values.iter().map(|x| (x - mu) * (x - mu)).sum::<f64>() / n;
    Ok(GaussianParams {
        mu,
        sigma: var.sqrt().max(sigma_floor),
    })
}

#[derive(Clone, Copy, Debug, PartialEq, Eq, Serialize, Deserialize)]
#[serde(rename_all = "snake_case")]
pub enum BankSource {
    /// The reference training group.
    Reference,
    /// Leave-one-out fold of the calibration group, omitting member `m`.
    Fold(usize),
    Operational,
}

/// One Gaussian per rule, fitted over a group of histograms.
#[derive(Clone, Debug, PartialEq)]
pub struct GaussianBank {
    pub per_rule: Vec<GaussianParams>,
    pub source: BankSource,
}

impl GaussianBank {
    /// Fits per-rule Gaussians over `columns`. Sums run over the exact integer
    /// counts, so a group of identical histograms always yields the same
    /// means regardless of group size.
    pub fn fit<H: Borrow<HitHistogram>>(
        columns: &[H],
        sigma_floor: f64,
        source: BankSource,
    ) -> Result<GaussianBank> {
        if columns.len() < 2 {
            return Err(Error::InsufficientCount {
                needed: 2,
                have: columns.len(),
            });
        }
        let first = columns[0].borrow();
        let n_rules = first.n_rules();
        let size = first.split_size();
        for c in columns {
            let c = c.borrow();
            if c.n_rules() != n_rules {
                return Err(Error::LengthMismatch {
                    expected: n_rules,
                    found: c.n_rules(),
                });
            }
            if c.split_size() != size {
                return Err(Error::InvalidConfig(format!(
                    "histograms in one group must share a split size ({} vs {})",
                    size,
                    c.split_size()
                )));
            }
        }
        let n = columns.len() as f64;
        let scale = f64::from(size);
        let per_rule = (0..n_rules)
            .map(|j| {
                let total: u64 = columns
                    .iter()
                    .map(|c| u64::from(c.borrow().counts()[j]))
                    .sum();
                let mean = total as f64 / n;
                let ss: f64 = columns
                    .iter()
                    .map(|c| {
                        let d = f64::from(c.borrow().counts()[j]) - mean;
                        d * d
                    })
                    .sum();
                GaussianParams {
                    mu: mean / scale,
                    sigma: ((ss / n).sqrt() / scale).max(sigma_floor),
                }
            })
            .collect();
        Ok(GaussianBank { per_rule, source })
    }

    pub fn len(&self) -> usize {
        self.per_rule.len()
    }

    pub fn is_empty(&self) -> bool {
        self.per_rule.is_empty()
    }
}

fn std_normal_cdf(z: f64) -> f64 {
    0.5 * erfc(-z / SQRT_2)
}

fn std_normal_sf(z: f64) -> f64 {
    0.5 * erfc(z / SQRT_2)
}

/// Probability of `[center - halfwidth, center + halfwidth]` under `g`,
/// clamped to `[P_MIN, 1 - P_MIN]`.
pub fn interval_mass(g: GaussianParams, center: f64, halfwidth: f64) -> Result<f64> {
    Ok(raw_interval_mass(g, center, halfwidth)?.clamp(P_MIN, 1.0 - P_MIN))
}

/// Unclamped interval probability; tails are taken from the side that keeps
/// relative precision.
pub(crate) fn raw_interval_mass(g: GaussianParams, center: f64, halfwidth: f64) -> Result<f64> {
    if halfwidth.is_nan() || halfwidth < 0.0 {
        return Err(Error::NegativeHalfwidth(halfwidth));
    }
    let lo = (center - halfwidth - g.mu) / g.sigma;
    let hi = (center + halfwidth - g.mu) / g.sigma;
    let p = if lo >= 0.0 {
        std_normal_sf(lo) - std_normal_sf(hi)
    } else if hi <= 0.0 {
        std_normal_cdf(hi) - std_normal_cdf(lo)
    } else {
        1.0 - std_normal_cdf(lo) - std_normal_sf(hi)
    };
    Ok(p.max(0.0))
}

/// `p ln p + (1-p) ln(1-p)` with `0 ln 0 = 0`; the negated binary entropy.
fn neg_binary_entropy(p: f64) -> f64 {
    let term = |q: f64| if q > 0.0 { q * q.ln() } else { 0.0 };
    term(p) + term(1.0 - p)
}

/// Binary entropy in nats.
pub fn binary_entropy(p: f64) -> f64 {
    -neg_binary_entropy(p)
}

fn check_bank(h: &HitHistogram, bank: &GaussianBank) -> Result<()> {
    if bank.len() != h.n_rules() {
        return Err(Error::LengthMismatch {
            expected: h.n_rules(),
            found: bank.len(),
        });
    }
    Ok(())
}

/// Probability that rule `j`'s hit frequency lands within one fitted sigma of
/// the observed value.
fn rule_mass(bank: &GaussianBank, h: &HitHistogram, j: usize) -> Result<f64> {
    let g = bank.per_rule[j];
    interval_mass(g, h.value(j), g.sigma)
}

/// Sum of per-rule binary entropies of the one-sigma interval masses under
/// the histogram's own group bank.
pub fn hits_entropy(h: &HitHistogram, bank: &GaussianBank) -> Result<f64> {
    check_bank(h, bank)?;
    let mut acc = 0.0;
    for j in 0..h.n_rules() {
        acc += neg_binary_entropy(rule_mass(bank, h, j)?);
    }
    Ok(-acc)
}

/// Entropy under the reference bank, each rule weighted by
/// `γ_j = P_own / P_ref`.
pub fn conditional_hits_entropy(
    h: &HitHistogram,
    ref_bank: &GaussianBank,
    own_bank: &GaussianBank,
) -> Result<f64> {
    check_bank(h, ref_bank)?;
    check_bank(h, own_bank)?;
    let mut acc = 0.0;
    for j in 0..h.n_rules() {
        let p_ref = rule_mass(ref_bank, h, j)?;
        let gamma = rule_mass(own_bank, h, j)? / p_ref;
        acc += gamma * neg_binary_entropy(p_ref);
    }
    Ok(-acc)
}

/// Rule-based information of a group: mean own entropy over mean weighted
/// conditional entropy. `0/0` reads as 1; `x/0` as `+inf`.
pub fn rbi<H: Borrow<HitHistogram>>(
    group: &[H],
    own_bank: &GaussianBank,
    ref_bank: &GaussianBank,
) -> Result<f64> {
    if group.is_empty() {
        return Err(Error::EmptyInput("group"));
    }
    let n = group.len() as f64;
    let mut num = 0.0;
    let mut den = 0.0;
    for h in group {
        num += hits_entropy(h.borrow(), own_bank)?;
        den += conditional_hits_entropy(h.borrow(), ref_bank, own_bank)?;
    }
    let (num, den) = (num / n, den / n);
    Ok(if den == 0.0 {
        if num == 0.0 {
            1.0
        } else {
            f64::INFINITY
        }
    } else {
        num / den
    })
}

#[cfg(test)]
mod tests {
    use super::*;
    use crate::histogram::Origin;

    fn params(mu: f64, sigma: f64) -> GaussianParams {
        GaussianParams { mu, sigma }
    }

    // Composite Simpson integration of the normal density.
    fn simpson_mass(g: GaussianParams, a: f64, b: f64) -> f64 {
        let n = 20_000;
        let h = (b - a) / n as f64;
        let pdf = |x: f64| {
            let z = (x - g.mu) / g.sigma;
            (-0.5 * z * z).exp() / (g.sigma * (2.0 * std::f64::consts::PI).sqrt())
        };
        let mut s = pdf(a) + pdf(b);
        for i in 1..n {
            let w = if i % 2 == 1 { 4.0 } else { 2.0 };
            s += w * pdf(a + i as f64 * h);
        }
        s * h / 3.0
    }

    #[test]
    fn two_point_fit() {
        let g = gaussian_fit(&[0.2, 0.4], SIGMA_FLOOR).unwrap();
        assert!((g.mu - 0.3).abs() < 1e-15);
        assert!((g.sigma - 0.1).abs() < 1e-15);
    }

    #[test]
    fn constant_fit_hits_floor() {
        let g = gaussian_fit(&[0.7; 5], SIGMA_FLOOR).unwrap();
        assert_eq!(g.mu, 0.7);
        assert_eq!(g.sigma, SIGMA_FLOOR);
    }

    #[test]
    fn fit_needs_two_values() {
        assert!(matches!(
            gaussian_fit(&[1.0], SIGMA_FLOOR),
            Err(Error::InsufficientCount { needed: 2, have: 1 })
        ));
    }

    #[test]
    fn one_sigma_mass() {
        let g = params(0.3, 0.05);
        let oracle = simpson_mass(g, 0.25, 0.35);
        let m = interval_mass(g, 0.3, 0.05).unwrap();
        assert!((m - oracle).abs() < 1e-10);
        assert!((m - 0.682_689_492_137_086).abs() < 1e-9);
    }

    #[test]
    fn off_center_mass_matches_quadrature() {
        for (mu, sigma, c, hw) in [
            (0.1, 0.02, 0.13, 0.02),
            (0.5, 0.1, 0.2, 0.05),
            (0.0, 1.0, -0.4, 1.3),
        ] {
            let g = params(mu, sigma);
            let oracle = simpson_mass(g, c - hw, c + hw);
            assert!((interval_mass(g, c, hw).unwrap() - oracle).abs() < 1e-10);
        }
    }

    #[test]
    fn zero_width_clamps_to_floor() {
        assert_eq!(interval_mass(params(0.0, 1.0), 0.0, 0.0).unwrap(), P_MIN);
    }

    #[test]
    fn far_tail_is_tiny_before_clamp() {
        let g = params(0.2, 0.01);
        let raw = raw_interval_mass(g, 0.2 + 10.0 * 0.01, 0.01).unwrap();
        assert!(raw > 0.0 && raw < 1e-9, "{raw}");
        assert!((raw - simpson_mass(g, 0.29, 0.31)).abs() < 1e-15);
        let raw_left = raw_interval_mass(g, 0.2 - 10.0 * 0.01, 0.01).unwrap();
        assert!((raw - raw_left).abs() < 1e-25);
    }

    #[test]
    fn negative_halfwidth_rejected() {
        assert!(matches!(
            interval_mass(params(0.0, 1.0), 0.0, -1.0),
            Err(Error::NegativeHalfwidth(_))
        ));
    }

    #[test]
    fn binary_entropy_values() {
        assert!((binary_entropy(0.5) - 2f64.ln()).abs() < 1e-15);
        assert_eq!(binary_entropy(0.0), 0.0);
        assert_eq!(binary_entropy(1.0), 0.0);
    }

    fn hist(counts: &[u32], n_s: u32) -> HitHistogram {
        HitHistogram::from_counts(counts.to_vec(), n_s, Origin::Training).unwrap()
    }

    #[test]
    fn bank_fit_matches_value_fit() {
        let cols = [hist(&[10, 3], 40), hist(&[14, 0], 40), hist(&[12, 9], 40)];
        let bank = GaussianBank::fit(&cols, SIGMA_FLOOR, BankSource::Reference).unwrap();
        for j in 0..2 {
            let vals: Vec<f64> = cols.iter().map(|c| c.value(j)).collect();
            let g = gaussian_fit(&vals, SIGMA_FLOOR).unwrap();
            assert!((bank.per_rule[j].mu - g.mu).abs() < 1e-15);
            assert!((bank.per_rule[j].sigma - g.sigma).abs() < 1e-15);
        }
    }

    #[test]
    fn bank_fit_rejects_mixed_split_sizes() {
        let cols = [hist(&[1], 10), hist(&[1], 20)];
        assert!(GaussianBank::fit(&cols, SIGMA_FLOOR, BankSource::Reference).is_err());
    }

    #[test]
    fn half_mass_gives_ln2_per_rule() {
        // offset d with Φ(d+1) - Φ(d-1) = 1/2, by bisection
        let (mut lo, mut hi) = (0.0, 3.0);
        for _ in 0..200 {
            let mid = 0.5 * (lo + hi);
            let m = raw_interval_mass(params(0.0, 1.0), mid, 1.0).unwrap();
            if m > 0.5 {
                lo = mid;
            } else {
                hi = mid;
            }
        }
        let d = 0.5 * (lo + hi);
        // sigma = 0.1, observed value 0.5 + 0.1 d on both rules
        let n_s = 1u32 << 20;
        let count = ((0.5 + 0.1 * d) * f64::from(n_s)).round() as u32;
        let h = hist(&[count, count], n_s);
        let bank = GaussianBank {
            per_rule: vec![params(0.5, 0.1); 2],
            source: BankSource::Operational,
        };
        let e = hits_entropy(&h, &bank).unwrap();
        assert!((e - 2.0 * 2f64.ln()).abs() < 1e-9, "{e}");
    }

    #[test]
    fn certainty_gives_zero_entropy() {
        assert!(binary_entropy(1.0 - P_MIN) < 1e-10);
        assert!(binary_entropy(P_MIN) < 1e-10);
    }

    #[test]
    fn conditional_reduces_to_plain_when_banks_match() {
        let h = hist(&[30, 11, 4], 100);
        let bank = GaussianBank {
            per_rule: vec![params(0.28, 0.03), params(0.1, 0.02), params(0.05, 0.01)],
            source: BankSource::Reference,
        };
        assert_eq!(
            conditional_hits_entropy(&h, &bank, &bank).unwrap(),
            hits_entropy(&h, &bank).unwrap()
        );
    }

    #[test]
    fn clamped_reference_stays_finite() {
        let h = hist(&[50], 100);
        let reference = GaussianBank {
            per_rule: vec![params(0.01, SIGMA_FLOOR)],
            source: BankSource::Reference,
        };
        let own = GaussianBank {
            per_rule: vec![params(0.5, 0.02)],
            source: BankSource::Operational,
        };
        let c = conditional_hits_entropy(&h, &reference, &own).unwrap();
        assert!(c.is_finite());
        // γ = P_own / P_MIN is huge, so the weighted surprise dominates
        assert!(c > 10.0, "{c}");
    }

    #[test]
    fn rbi_of_identical_banks_is_one() {
        let group = [
            hist(&[30, 11], 100),
            hist(&[28, 13], 100),
            hist(&[33, 9], 100),
        ];
        let bank = GaussianBank::fit(&group, SIGMA_FLOOR, BankSource::Operational).unwrap();
        assert_eq!(rbi(&group, &bank, &bank).unwrap(), 1.0);
    }

    #[test]
    fn rbi_degenerate_conventions() {
        let group = [hist(&[0], 10), hist(&[0], 10)];
        let bank = GaussianBank::fit(&group, SIGMA_FLOOR, BankSource::Operational).unwrap();
        // P = 0.6827 for both banks, so neither 0/0 nor x/0 arises; check the
        // empty case instead.
        let empty: [HitHistogram; 0] = [];
        assert!(matches!(
            rbi(&empty, &bank, &bank),
            Err(Error::EmptyInput(_))
        ));
    }

    #[test]
    fn rbi_two_rule_hand_evaluation() {
        // Hand-set banks; the oracle replays the definition step by step.
        let group = [hist(&[20, 70], 100), hist(&[24, 66], 100)];
        let own = GaussianBank {
            per_rule: vec![params(0.22, 0.02), params(0.68, 0.02)],
            source: BankSource::Operational,
        };
        let reference = GaussianBank {
            per_rule: vec![params(0.25, 0.03), params(0.60, 0.05)],
            source: BankSource::Reference,
        };
        let phi = |z: f64| simpson_mass(params(0.0, 1.0), -12.0, z);
        let mass = |g: GaussianParams, x: f64| {
            phi((x + g.sigma - g.mu) / g.sigma) - phi((x - g.sigma - g.mu) / g.sigma)
        };
        let ent = |p: f64| -(p * p.ln() + (1.0 - p) * (1.0 - p).ln());
        let mut h_own = 0.0;
        let mut h_cond = 0.0;
        for h in &group {
            for j in 0..2 {
                let x = h.value(j);
                let po = mass(own.per_rule[j], x);
                let pr = mass(reference.per_rule[j], x);
                h_own += ent(po);
                h_cond += po / pr * ent(pr);
            }
        }
        let expected = (h_own / 2.0) / (h_cond / 2.0);
        let got = rbi(&group, &own, &reference).unwrap();
        assert!((got - expected).abs() < 1e-8, "{got} vs {expected}");
    }
}
