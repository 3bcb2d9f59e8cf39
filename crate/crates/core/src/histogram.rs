//! Data splits and normalized rule-hit histograms.
//!
//! A histogram keeps exact integer hit counts alongside its split size; the
//! normalized value of rule `i` is `counts[i] / n_s`. Keeping counts makes
//! value equality exact, which the value-frequency distributions in
//! [`crate::metrics`] depend on.

use rand::seq::SliceRandom;
use rand::SeedableRng;
use rand_chacha::ChaCha8Rng;
use serde::{Deserialize, Serialize};

use crate::data::Dataset;
use crate::error::{Error, Result};
use crate::exec::Exec;
use crate::ruleset::{iter_ones, BoundRuleset, HitMask, Ruleset};

#[derive(Clone, Copy, Debug, PartialEq, Eq, Hash, Serialize, Deserialize)]
#[serde(rename_all = "lowercase")]
pub enum Origin {
    Training,
    Operational,
}

/// A group of `n_s` dataset rows treated as one observation unit.
#[derive(Clone, Debug, PartialEq, Eq)]
pub struct Split {
    pub index: usize,
    pub origin: Origin,
    rows: Vec<usize>,
}

impl Split {
    pub fn new(index: usize, origin: Origin, rows: Vec<usize>) -> Result<Split> {
        if rows.is_empty() {
            return Err(Error::EmptyInput("split"));
        }
        Ok(Split {
            index,
            origin,
            rows,
        })
    }

    pub fn rows(&self) -> &[usize] {
        &self.rows
    }

    pub fn size(&self) -> usize {
        self.rows.len()
    }
}

/// Seeded shuffle of all row indices, then `n_splits` consecutive disjoint
/// chunks of `n_s` rows each.
pub fn make_splits(
    dataset: &Dataset,
    n_s: usize,
    n_splits: usize,
    seed: u64,
    origin: Origin,
) -> Result<Vec<Split>> {
    split_indices(dataset.len(), n_s, n_splits, seed)?
        .into_iter()
        .enumerate()
        .map(|(i, rows)| Split::new(i, origin, rows))
        .collect()
}

pub(crate) fn split_indices(
    n_rows: usize,
    n_s: usize,
    n_splits: usize,
    seed: u64,
) -> Result<Vec<Vec<usize>>> {
    if n_s == 0 || n_splits == 0 {
        return Err(Error::InvalidConfig(
            "split size and split count must be positive".into(),
        ));
    }
    let required = n_s
        .checked_mul(n_splits)
        .ok_or_else(|| Error::InvalidConfig("split request overflows".into()))?;
    if n_rows < required {
        return Err(Error::InsufficientData {
            required,
            available: n_rows,
        });
    }
    let mut idx: Vec<usize> = (0..n_rows).collect();
    idx.shuffle(&mut ChaCha8Rng::seed_from_u64(seed));
    Ok(idx[..required]
        .chunks_exact(n_s)
        .map(<[usize]>::to_vec)
        .collect())
}

/// Normalized hit frequencies of one split.
#[derive(Clone, Debug, PartialEq, Eq, Serialize, Deserialize)]
pub struct HitHistogram {
    counts: Vec<u32>,
    split_size: u32,
    origin: Origin,
}

impl HitHistogram {
    pub fn from_counts(counts: Vec<u32>, split_size: u32, origin: Origin) -> Result<Self> {
        if split_size == 0 {
            return Err(Error::EmptyInput("split"));
        }
        if let Some(&c) = counts.iter().find(|&&c| c > split_size) {
            return Err(Error::InvalidConfig(format!(
                "hit count {c} exceeds split size {split_size}"
            )));
        }
        Ok(HitHistogram {
            counts,
            split_size,
            origin,
        })
    }

    pub fn counts(&self) -> &[u32] {
        &self.counts
    }

    pub fn split_size(&self) -> u32 {
        self.split_size
    }

    pub fn origin(&self) -> Origin {
        self.origin
    }

    pub fn n_rules(&self) -> usize {
        self.counts.len()
    }

    pub fn value(&self, rule: usize) -> f64 {
        f64::from(self.counts[rule]) / f64::from(self.split_size)
    }

    pub fn values(&self) -> Vec<f64> {
        (0..self.counts.len()).map(|i| self.value(i)).collect()
    }

    pub fn with_origin(mut self, origin: Origin) -> Self {
        self.origin = origin;
        self
    }
}

/// Hit masks for every row of a dataset, stored as packed words.
#[derive(Clone, Debug)]
pub struct HitTable {
    n_rules: usize,
    words_per_row: usize,
    words: Vec<u64>,
}

impl HitTable {
    pub fn compute(bound: &BoundRuleset, dataset: &Dataset, exec: Exec) -> Result<HitTable> {
        let n_rules = bound.n_rules();
        let words_per_row = n_rules.div_ceil(64);
        const CHUNK: usize = 4096;
        let n = dataset.len();
        let chunks = exec.try_map_range(n.div_ceil(CHUNK), |c| {
            let lo = c * CHUNK;
            let hi = (lo + CHUNK).min(n);
            let mut mask = HitMask::new(n_rules);
            let mut words = Vec::with_capacity((hi - lo) * words_per_row);
            for r in lo..hi {
                bound.hits_into(dataset.row(r), &mut mask)?;
                words.extend_from_slice(mask.words());
            }
            Ok::<_, Error>(words)
        })?;
        Ok(HitTable {
            n_rules,
            words_per_row,
            words: chunks.concat(),
        })
    }

    pub fn n_rules(&self) -> usize {
        self.n_rules
    }

    pub fn len(&self) -> usize {
        self.words
            .len()
            .checked_div(self.words_per_row)
            .unwrap_or(0)
    }

    pub fn is_empty(&self) -> bool {
        self.len() == 0
    }

    pub fn row_words(&self, row: usize) -> &[u64] {
        &self.words[row * self.words_per_row..(row + 1) * self.words_per_row]
    }

    pub fn mask(&self, row: usize) -> HitMask {
        let mut m = HitMask::new(self.n_rules);
        for i in iter_ones(self.row_words(row)) {
            m.set(i);
        }
        m
    }

    /// Histogram over the given rows.
    pub fn histogram(&self, rows: &[usize], origin: Origin) -> Result<HitHistogram> {
        if rows.is_empty() {
            return Err(Error::EmptyInput("split"));
        }
        let mut counts = vec![0u32; self.n_rules];
        for &r in rows {
            for i in iter_ones(self.row_words(r)) {
                counts[i] += 1;
            }
        }
        let size = u32::try_from(rows.len())
            .map_err(|_| Error::InvalidConfig("split too large".into()))?;
        HitHistogram::from_counts(counts, size, origin)
    }

    pub fn histograms(&self, splits: &[Split], exec: Exec) -> Result<Vec<HitHistogram>> {
        exec.map_slice(splits, |s| self.histogram(s.rows(), s.origin))
            .into_iter()
            .collect()
    }
}

/// Histogram of one split: `counts[i]` = rows whose premise `i` holds.
pub fn hit_histogram(ruleset: &Ruleset, dataset: &Dataset, split: &Split) -> Result<HitHistogram> {
    let bound = ruleset.bind(dataset.feature_names())?;
    let mut counts = vec![0u32; ruleset.len()];
    let mut mask = HitMask::new(ruleset.len());
    for &r in split.rows() {
        bound.hits_into(dataset.row(r), &mut mask)?;
        for i in mask.ones() {
            counts[i] += 1;
        }
    }
    let size =
        u32::try_from(split.size()).map_err(|_| Error::InvalidConfig("split too large".into()))?;
    HitHistogram::from_counts(counts, size, split.origin)
}

/// Rules × splits table: training columns then operational columns.
#[derive(Clone, Debug, PartialEq, Serialize, Deserialize)]
pub struct HitMatrix {
    n_rules: usize,
    ruleset_digest: String,
    training: Vec<HitHistogram>,
    operational: Vec<HitHistogram>,
}

impl HitMatrix {
    pub fn new(
        ruleset: &Ruleset,
        training: Vec<HitHistogram>,
        operational: Vec<HitHistogram>,
    ) -> Result<HitMatrix> {
        Self::from_parts(ruleset.len(), ruleset.digest(), training, operational)
    }

    pub fn from_parts(
        n_rules: usize,
        ruleset_digest: String,
        training: Vec<HitHistogram>,
        operational: Vec<HitHistogram>,
    ) -> Result<HitMatrix> {
        if training.is_empty() {
            return Err(Error::EmptyInput("training splits"));
        }
        for h in training.iter().chain(&operational) {
            if h.n_rules() != n_rules {
                return Err(Error::LengthMismatch {
                    expected: n_rules,
                    found: h.n_rules(),
                });
            }
        }
        Ok(HitMatrix {
            n_rules,
            ruleset_digest,
            training,
            operational,
        })
    }

    pub fn n_rules(&self) -> usize {
        self.n_rules
    }

    pub fn ruleset_digest(&self) -> &str {
        &self.ruleset_digest
    }

    pub fn training(&self) -> &[HitHistogram] {
        &self.training
    }

    pub fn operational(&self) -> &[HitHistogram] {
        &self.operational
    }

    /// All columns, training first.
    pub fn columns(&self) -> impl Iterator<Item = &HitHistogram> {
        self.training.iter().chain(&self.operational)
    }

    pub fn n_columns(&self) -> usize {
        self.training.len() + self.operational.len()
    }

    /// Drops operational columns, leaving the training-only table.
    pub fn training_only(&self) -> HitMatrix {
        HitMatrix {
            operational: Vec::new(),
            ..self.clone()
        }
    }
}

/// Builds the hit matrix for splits drawn from a single dataset.
pub fn hit_matrix(
    ruleset: &Ruleset,
    dataset: &Dataset,
    training: &[Split],
    operational: &[Split],
    exec: Exec,
) -> Result<HitMatrix> {
    let bound = ruleset.bind(dataset.feature_names())?;
    let table = HitTable::compute(&bound, dataset, exec)?;
    HitMatrix::new(
        ruleset,
        table.histograms(training, exec)?,
        table.histograms(operational, exec)?,
    )
}

#[cfg(test)]
mod tests {
    use super::*;
    use crate::ruleset::parse_ruleset;

    fn line_data(xs: &[f64]) -> Dataset {
        let mut ds = Dataset::new(vec!["x".into()]);
        for &x in xs {
            ds.push_numeric(&[x], None);
        }
        ds
    }

    #[test]
    fn exact_partition() {
        let ds = line_data(&[0.0; 10]);
        let splits = make_splits(&ds, 5, 2, 7, Origin::Training).unwrap();
        assert_eq!(splits.len(), 2);
        let mut all: Vec<usize> = splits.iter().flat_map(|s| s.rows().to_vec()).collect();
        all.sort_unstable();
        assert_eq!(all, (0..10).collect::<Vec<_>>());
    }

    #[test]
    fn insufficient_rows() {
        let ds = line_data(&[0.0; 10]);
        match make_splits(&ds, 5, 3, 7, Origin::Training) {
            Err(Error::InsufficientData {
                required,
                available,
            }) => assert_eq!((required, available), (15, 10)),
            other => panic!("unexpected {other:?}"),
        }
    }

    #[test]
    fn splits_are_deterministic() {
        let ds = line_data(&[0.0; 100]);
        let a = make_splits(&ds, 7, 9, 42, Origin::Training).unwrap();
        let b = make_splits(&ds, 7, 9, 42, Origin::Training).unwrap();
        let c = make_splits(&ds, 7, 9, 43, Origin::Training).unwrap();
        assert_eq!(a, b);
        assert_ne!(a, c);
    }

    #[test]
    fn three_of_four() {
        let rs = parse_ruleset("if x > 0 then a\nif x > 100 then b").unwrap();
        let ds = line_data(&[1.0, 2.0, -1.0, 3.0]);
        let split = Split::new(0, Origin::Training, vec![0, 1, 2, 3]).unwrap();
        let h = hit_histogram(&rs, &ds, &split).unwrap();
        assert_eq!(h.values(), [0.75, 0.0]);
        assert_eq!(h.counts(), [3, 0]);
    }

    #[test]
    fn matrix_shapes() {
        let rs = parse_ruleset("if x > 0.5 then a\nif x <= 0.5 then b").unwrap();
        let xs: Vec<f64> = (0..5100).map(|i| (i % 97) as f64 / 97.0).collect();
        let ds = line_data(&xs);
        let splits = make_splits(&ds, 100, 51, 1, Origin::Training).unwrap();
        let (tr, op) = splits.split_at(50);
        let op: Vec<Split> = op
            .iter()
            .cloned()
            .map(|mut s| {
                s.origin = Origin::Operational;
                s
            })
            .collect();
        let m = hit_matrix(&rs, &ds, tr, &op, Exec::default()).unwrap();
        assert_eq!(
            (m.n_rules(), m.training().len(), m.operational().len()),
            (2, 50, 1)
        );
        assert_eq!(m.operational()[0].origin(), Origin::Operational);
        let only = hit_matrix(&rs, &ds, tr, &[], Exec::default()).unwrap();
        assert_eq!(only.n_columns(), 50);
        assert_eq!(only, m.training_only());
    }

    #[test]
    fn table_agrees_with_direct_histogram() {
        let rs = parse_ruleset("if x > 0.2 then a\nif x in [0.1, 0.6) then b\nif x < 0.9 then c")
            .unwrap();
        let xs: Vec<f64> = (0..1000)
            .map(|i| ((i * 37) % 1000) as f64 / 1000.0)
            .collect();
        let ds = line_data(&xs);
        let splits = make_splits(&ds, 64, 10, 3, Origin::Training).unwrap();
        let table =
            HitTable::compute(&rs.bind(ds.feature_names()).unwrap(), &ds, Exec::default()).unwrap();
        for s in &splits {
            assert_eq!(
                table.histogram(s.rows(), s.origin).unwrap(),
                hit_histogram(&rs, &ds, s).unwrap()
            );
        }
    }

    #[test]
    fn counts_cannot_exceed_split() {
        assert!(HitHistogram::from_counts(vec![5], 4, Origin::Training).is_err());
        assert!(HitHistogram::from_counts(vec![0], 0, Origin::Training).is_err());
    }
}
