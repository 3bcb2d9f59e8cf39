//! Seeded synthetic data sources for experiments and tests.

use rand::seq::index;
use rand::Rng;
use rand_chacha::ChaCha8Rng;
use rand_distr::{Distribution, StandardNormal};

use crate::data::Dataset;
use crate::error::{Error, Result};
use crate::ruleset::{Bounds, Condition, Rule, Ruleset, Test};

/// Anything that can hand out labeled samples on demand.
pub trait SampleSource: Sync {
    fn feature_names(&self) -> Vec<String>;

    fn sample(&self, n: usize, rng: &mut ChaCha8Rng) -> Result<Dataset>;
}

/// Equal-weight mixture of isotropic Gaussians, one component per class,
/// labeled by component index. `shift` is added to the features listed in
/// `shifted` for every component.
#[derive(Clone, Debug, PartialEq)]
pub struct GaussianMixture {
    pub class_means: Vec<Vec<f64>>,
    pub sigma: f64,
    pub shift: f64,
    pub shifted: Vec<usize>,
}

impl GaussianMixture {
    /// Two classes in six dimensions with partially overlapping means.
    pub fn two_class() -> GaussianMixture {
        GaussianMixture {
            class_means: vec![vec![0.0; 6], vec![1.5, -1.0, 1.0, 0.5, -0.5, 1.0]],
            sigma: 1.0,
            shift: 0.0,
            shifted: Vec::new(),
        }
    }

    /// The same mixture with every component moved by `shift` (in units of
    /// `sigma`) along the first `n` features.
    pub fn shifted(&self, shift: f64, n: usize) -> GaussianMixture {
        GaussianMixture {
            shift: shift * self.sigma,
            shifted: (0..n.min(self.dim())).collect(),
            ..self.clone()
        }
    }

    pub fn dim(&self) -> usize {
        self.class_means.first().map_or(0, Vec::len)
    }
}

impl SampleSource for GaussianMixture {
    fn feature_names(&self) -> Vec<String> {
        (1..=self.dim()).map(|i| format!("x{i}")).collect()
    }

    fn sample(&self, n: usize, rng: &mut ChaCha8Rng) -> Result<Dataset> {
        let d = self.dim();
        if d == 0 {
            return Err(Error::InvalidConfig("mixture has no dimensions".into()));
        }
        let mut offset = vec![0.0; d];
        for &f in &self.shifted {
            offset[f] = self.shift;
        }
        let mut ds = Dataset::with_labels(self.feature_names());
        let mut row = vec![0.0; d];
        for _ in 0..n {
            let k = rng.random_range(0..self.class_means.len());
            for (j, x) in row.iter_mut().enumerate() {
                let z: f64 = StandardNormal.sample(rng);
                *x = self.class_means[k][j] + offset[j] + self.sigma * z;
            }
            ds.push_numeric(&row, Some(k.to_string()));
        }
        Ok(ds)
    }
}

/// Features on `[0, 1)`, each drawn independently: first a bin out of
/// `bins` equal bins with the given weights, then uniformly within it. The
/// label is the parity of the bin indices of the first two features.
#[derive(Clone, Debug, PartialEq)]
pub struct GridSource {
    /// `weights[f][b]`: unnormalized probability of bin `b` for feature `f`.
    pub weights: Vec<Vec<f64>>,
}

impl GridSource {
    pub fn uniform(n_features: usize, bins: usize) -> GridSource {
        GridSource {
            weights: vec![vec![1.0; bins]; n_features],
        }
    }

    /// Tilts every feature's bin weights by `exp(tilt * b / bins)`; positive
    /// tilt moves mass to high bins.
    pub fn tilted(&self, tilt: f64) -> GridSource {
        GridSource {
            weights: self
                .weights
                .iter()
                .map(|w| {
                    let bins = w.len() as f64;
                    w.iter()
                        .enumerate()
                        .map(|(b, &x)| x * (tilt * b as f64 / bins).exp())
                        .collect()
                })
                .collect(),
        }
    }

    fn bins(&self, f: usize) -> usize {
        self.weights[f].len()
    }

    /// One rule per feature and bin: `if x_f in [b/B, (b+1)/B) then <b mod 2>`.
    /// Every sample hits exactly one rule per feature, so rules overlap
    /// across features.
    pub fn aligned_rules(&self) -> Result<Ruleset> {
        let names = self.feature_names();
        let mut rules = Vec::new();
        for (f, name) in names.iter().enumerate() {
            let bins = self.bins(f);
            for b in 0..bins {
                let lo = b as f64 / bins as f64;
                let hi = (b + 1) as f64 / bins as f64;
                let cond =
                    Condition::new(name.clone(), Test::In(Bounds::new(lo, hi, true, false)?));
                rules.push(Rule::new(vec![cond], (b % 2).to_string()));
            }
        }
        Ruleset::new(rules)
    }
}

impl SampleSource for GridSource {
    fn feature_names(&self) -> Vec<String> {
        (1..=self.weights.len()).map(|i| format!("g{i}")).collect()
    }

    fn sample(&self, n: usize, rng: &mut ChaCha8Rng) -> Result<Dataset> {
        if self.weights.is_empty() || self.weights.iter().any(|w| w.is_empty()) {
            return Err(Error::InvalidConfig(
                "grid needs at least one bin per feature".into(),
            ));
        }
        let cumulative: Vec<Vec<f64>> = self
            .weights
            .iter()
            .map(|w| {
                let total: f64 = w.iter().sum();
                w.iter()
                    .scan(0.0, |acc, &x| {
                        *acc += x / total;
                        Some(*acc)
                    })
                    .collect()
            })
            .collect();
        let mut ds = Dataset::with_labels(self.feature_names());
        let mut row = vec![0.0; self.weights.len()];
        let mut picked = vec![0usize; self.weights.len()];
        for _ in 0..n {
            for (f, cdf) in cumulative.iter().enumerate() {
                let u: f64 = rng.random();
                let b = cdf.partition_point(|&c| c <= u).min(cdf.len() - 1);
                picked[f] = b;
                let width = 1.0 / cdf.len() as f64;
                row[f] = ((b as f64 + rng.random::<f64>()) * width).min(1.0 - f64::EPSILON);
            }
            let label = (picked[0] + picked.get(1).copied().unwrap_or(0)) % 2;
            ds.push_numeric(&row, Some(label.to_string()));
        }
        Ok(ds)
    }
}

/// Draws rows from a fixed dataset without replacement.
#[derive(Clone, Debug, PartialEq)]
pub struct DatasetSource {
    pub data: Dataset,
}

impl SampleSource for DatasetSource {
    fn feature_names(&self) -> Vec<String> {
        self.data.feature_names().to_vec()
    }

    fn sample(&self, n: usize, rng: &mut ChaCha8Rng) -> Result<Dataset> {
        if n > self.data.len() {
            return Err(Error::InsufficientData {
                required: n,
                available: self.data.len(),
            });
        }
        let rows = index::sample(rng, self.data.len(), n).into_vec();
        Ok(self.data.select(&rows))
    }
}

#[cfg(test)]
mod tests {
    use super::*;
    use crate::ruleset::ruleset_hits;
    use rand::SeedableRng;

    #[test]
    fn mixture_is_seeded_and_shifted() {
        let g = GaussianMixture::two_class();
        let a = g.sample(50, &mut ChaCha8Rng::seed_from_u64(1)).unwrap();
        let b = g.sample(50, &mut ChaCha8Rng::seed_from_u64(1)).unwrap();
        assert_eq!(a, b);
        let s = g.shifted(2.0, 3);
        let big = s.sample(20_000, &mut ChaCha8Rng::seed_from_u64(2)).unwrap();
        let mean = |c: usize| big.rows().map(|r| r[c].as_num().unwrap()).sum::<f64>() / 20_000.0;
        // class means average to 0.75 on x1 and 0.5 on x6
        assert!((mean(0) - 2.75).abs() < 0.05);
        assert!((mean(5) - 0.5).abs() < 0.05);
        let ones = big.labels().unwrap().iter().filter(|l| *l == "1").count();
        assert!((9_500..10_500).contains(&ones), "{ones}");
    }

    #[test]
    fn grid_rules_hit_once_per_feature() {
        let g = GridSource::uniform(3, 4);
        let rules = g.aligned_rules().unwrap();
        assert_eq!(rules.len(), 12);
        let ds = g
            .tilted(1.5)
            .sample(500, &mut ChaCha8Rng::seed_from_u64(3))
            .unwrap();
        for i in 0..ds.len() {
            assert_eq!(
                ruleset_hits(&rules, &ds.row_ref(i)).unwrap().count_ones(),
                3
            );
        }
    }

    #[test]
    fn tilt_moves_mass_up() {
        let g = GridSource::uniform(1, 4);
        let ds = g
            .tilted(3.0)
            .sample(4000, &mut ChaCha8Rng::seed_from_u64(4))
            .unwrap();
        let high = ds.rows().filter(|r| r[0].as_num().unwrap() >= 0.75).count();
        let low = ds.rows().filter(|r| r[0].as_num().unwrap() < 0.25).count();
        assert!(high > 3 * low);
    }

    #[test]
    fn dataset_source_without_replacement() {
        let mut data = Dataset::new(vec!["x".into()]);
        for i in 0..10 {
            data.push_numeric(&[i as f64], None);
        }
        let src = DatasetSource { data };
        let s = src.sample(10, &mut ChaCha8Rng::seed_from_u64(5)).unwrap();
        let mut xs: Vec<i64> = s.rows().map(|r| r[0].as_num().unwrap() as i64).collect();
        xs.sort();
        assert_eq!(xs, (0..10).collect::<Vec<_>>());
        assert!(matches!(
            src.sample(11, &mut ChaCha8Rng::seed_from_u64(5)),
            Err(Error::InsufficientData {
                required: 11,
                available: 10
            })
        ));
    }
}
