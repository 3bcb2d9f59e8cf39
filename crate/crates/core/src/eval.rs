//! Repeated baseline-and-detect experiments measuring false positive and
//! false negative rates.
//!
//! Each repetition draws fresh training splits from the in-distribution
//! source, builds baselines, then scores held-out in-distribution splits
//! (never used in the baseline) and splits from the candidate source.

use std::collections::BTreeMap;

use rand::SeedableRng;
use rand_chacha::ChaCha8Rng;
use serde::Serialize;

use crate::detection::{
    build_baselines, BaselineConfig, BaselineFile, DetectionReport, Metric, Mode,
};
use crate::error::{Error, Result};
use crate::exec::Exec;
use crate::histogram::{HitHistogram, HitMatrix, HitTable, Origin};
use crate::inducer::{induce_tree, tree_to_rules, InducerConfig};
use crate::metrics::SIGMA_FLOOR;
use crate::ruleset::{BoundRuleset, Ruleset};
use crate::synth::SampleSource;

#[derive(Clone, Debug, PartialEq, Serialize)]
pub struct EvalConfig {
    pub n_s: usize,
    pub n_tr: usize,
    /// Operational group size for group mode.
    pub n_op: usize,
    pub repetitions: usize,
    pub seed: u64,
    pub sigma_floor: f64,
    pub modes: Vec<Mode>,
}

impl Default for EvalConfig {
    fn default() -> Self {
        EvalConfig {
            n_s: 5000,
            n_tr: 50,
            n_op: 10,
            repetitions: 200,
            seed: 0,
            sigma_floor: SIGMA_FLOOR,
            modes: vec![Mode::Single, Mode::Group],
        }
    }
}

impl EvalConfig {
    fn baseline_config(&self, mode: Mode, rep: u64) -> BaselineConfig {
        let mut c = match mode {
            Mode::Single => BaselineConfig::single(rep),
            Mode::Group => BaselineConfig::group(self.n_op, rep),
        };
        c.sigma_floor = self.sigma_floor;
        c
    }

    fn validate(&self) -> Result<()> {
        if self.n_s == 0 || self.repetitions == 0 || self.modes.is_empty() {
            return Err(Error::InvalidConfig(
                "evaluation needs a positive split size, repetition count and at least one mode"
                    .into(),
            ));
        }
        for &mode in &self.modes {
            self.baseline_config(mode, 0).validate()?;
        }
        Ok(())
    }

    fn ops_per_side(&self) -> usize {
        if self.modes.contains(&Mode::Group) {
            self.n_op
        } else {
            1
        }
    }
}

/// Seed for repetition `rep`, derived from the run seed.
pub fn repetition_seed(seed: u64, rep: u64) -> u64 {
    let mut z = seed ^ rep.wrapping_add(1).wrapping_mul(0x9E37_79B9_7F4A_7C15);
    z = (z ^ (z >> 30)).wrapping_mul(0xBF58_476D_1CE4_E5B9);
    z = (z ^ (z >> 27)).wrapping_mul(0x94D0_49BB_1331_11EB);
    z ^ (z >> 31)
}

/// Draws `count` splits of `n_s` samples from `source`.
pub fn draw_histograms(
    source: &dyn SampleSource,
    bound: &BoundRuleset,
    n_s: usize,
    count: usize,
    origin: Origin,
    rng: &mut ChaCha8Rng,
) -> Result<Vec<HitHistogram>> {
    let data = source.sample(n_s * count, rng)?;
    let table = HitTable::compute(bound, &data, Exec::Sequential)?;
    (0..count)
        .map(|i| {
            let rows: Vec<usize> = (i * n_s..(i + 1) * n_s).collect();
            table.histogram(&rows, origin)
        })
        .collect()
}

/// Induces a ruleset from `n` samples of `source`. The draw uses a stream
/// distinct from every repetition seed.
pub fn induce_from_source(
    source: &dyn SampleSource,
    n: usize,
    config: &InducerConfig,
    seed: u64,
    exec: Exec,
) -> Result<Ruleset> {
    let mut rng = ChaCha8Rng::seed_from_u64(repetition_seed(seed, u64::MAX));
    let data = source.sample(n, &mut rng)?;
    tree_to_rules(&induce_tree(&data, config, exec)?)
}

#[derive(Clone, Debug, PartialEq, Serialize)]
pub struct ModeSummary {
    pub mode: Mode,
    pub false_positives: usize,
    pub false_negatives: usize,
    pub fpr: f64,
    pub fnr: f64,
    /// Fraction of in-distribution units each metric flagged.
    pub in_flag_rates: BTreeMap<Metric, f64>,
    /// Fraction of candidate units each metric flagged.
    pub out_flag_rates: BTreeMap<Metric, f64>,
}

#[derive(Clone, Debug, PartialEq, Serialize)]
pub struct EvalSummary {
    pub scenario: String,
    pub config: EvalConfig,
    pub n_rules: usize,
    pub modes: Vec<ModeSummary>,
}

impl EvalSummary {
    pub fn mode(&self, mode: Mode) -> Option<&ModeSummary> {
        self.modes.iter().find(|m| m.mode == mode)
    }
}

struct Repetition {
    per_mode: Vec<(DetectionReport, DetectionReport)>,
}

fn run_repetition(
    ruleset: &Ruleset,
    bound: &BoundRuleset,
    in_source: &dyn SampleSource,
    out_source: &dyn SampleSource,
    config: &EvalConfig,
    rep: usize,
) -> Result<Repetition> {
    let mut rng = ChaCha8Rng::seed_from_u64(repetition_seed(config.seed, rep as u64));
    let training = draw_histograms(
        in_source,
        bound,
        config.n_s,
        config.n_tr,
        Origin::Training,
        &mut rng,
    )?;
    let training = HitMatrix::new(ruleset, training, Vec::new())?;
    let k = config.ops_per_side();
    let held_out = draw_histograms(
        in_source,
        bound,
        config.n_s,
        k,
        Origin::Operational,
        &mut rng,
    )?;
    let candidate = draw_histograms(
        out_source,
        bound,
        config.n_s,
        k,
        Origin::Operational,
        &mut rng,
    )?;
    let mut per_mode = Vec::with_capacity(config.modes.len());
    for &mode in &config.modes {
        let base = build_baselines(
            &training,
            &config.baseline_config(mode, rep as u64),
            Exec::Sequential,
        )?;
        let file = BaselineFile {
            baselines: base,
            training: training.clone(),
        };
        let n = if mode == Mode::Single { 1 } else { config.n_op };
        per_mode.push((file.detect(&held_out[..n])?, file.detect(&candidate[..n])?));
    }
    Ok(Repetition { per_mode })
}

/// Runs `config.repetitions` independent experiments. Repetitions run under
/// `exec` and are aggregated in index order, so results do not depend on the
/// execution policy.
pub fn evaluate(
    ruleset: &Ruleset,
    in_source: &dyn SampleSource,
    out_source: &dyn SampleSource,
    config: &EvalConfig,
    scenario: impl Into<String>,
    exec: Exec,
) -> Result<EvalSummary> {
    config.validate()?;
    if out_source.feature_names() != in_source.feature_names() {
        return Err(Error::InvalidConfig(
            "sources disagree on feature names".into(),
        ));
    }
    let bound = ruleset.bind(&in_source.feature_names())?;
    let reps = exec.try_map_range(config.repetitions, |r| {
        run_repetition(ruleset, &bound, in_source, out_source, config, r)
    })?;
    let total = config.repetitions as f64;
    let modes = config
        .modes
        .iter()
        .enumerate()
        .map(|(i, &mode)| {
            let mut fp = 0;
            let mut fn_ = 0;
            let mut in_rates = BTreeMap::new();
            let mut out_rates = BTreeMap::new();
            for rep in &reps {
                let (inside, outside) = &rep.per_mode[i];
                fp += usize::from(inside.is_ood());
                fn_ += usize::from(!outside.is_ood());
                for (m, o) in &inside.per_metric {
                    *in_rates.entry(*m).or_insert(0.0) += f64::from(u8::from(o.flag)) / total;
                }
                for (m, o) in &outside.per_metric {
                    *out_rates.entry(*m).or_insert(0.0) += f64::from(u8::from(o.flag)) / total;
                }
            }
            ModeSummary {
                mode,
                false_positives: fp,
                false_negatives: fn_,
                fpr: fp as f64 / total,
                fnr: fn_ as f64 / total,
                in_flag_rates: in_rates,
                out_flag_rates: out_rates,
            }
        })
        .collect();
    Ok(EvalSummary {
        scenario: scenario.into(),
        config: config.clone(),
        n_rules: ruleset.len(),
        modes,
    })
}

#[cfg(test)]
mod tests {
    use super::*;
    use crate::synth::GridSource;

    fn small(modes: Vec<Mode>) -> EvalConfig {
        EvalConfig {
            n_s: 200,
            n_tr: 8,
            n_op: 3,
            repetitions: 6,
            seed: 42,
            sigma_floor: SIGMA_FLOOR,
            modes,
        }
    }

    #[test]
    fn strong_tilt_is_always_caught() {
        let g = GridSource::uniform(3, 4);
        let rules = g.aligned_rules().unwrap();
        let s = evaluate(
            &rules,
            &g,
            &g.tilted(4.0),
            &small(vec![Mode::Single, Mode::Group]),
            "tilt",
            Exec::default(),
        )
        .unwrap();
        for m in &s.modes {
            assert_eq!(m.fnr, 0.0, "{m:?}");
        }
    }

    #[test]
    fn policies_agree() {
        let g = GridSource::uniform(2, 3);
        let rules = g.aligned_rules().unwrap();
        let c = small(vec![Mode::Single, Mode::Group]);
        let a = evaluate(&rules, &g, &g.tilted(0.3), &c, "x", Exec::Sequential).unwrap();
        let b = evaluate(&rules, &g, &g.tilted(0.3), &c, "x", Exec::default()).unwrap();
        assert_eq!(a, b);
    }

    #[test]
    fn rejects_group_without_room() {
        let g = GridSource::uniform(2, 3);
        let rules = g.aligned_rules().unwrap();
        let mut c = small(vec![Mode::Group]);
        c.n_tr = 5;
        assert!(evaluate(&rules, &g, &g, &c, "x", Exec::Sequential).is_err());
        c.n_op = 1;
        assert!(evaluate(&rules, &g, &g, &c, "x", Exec::Sequential).is_err());
    }

    #[test]
    fn repetition_seeds_differ() {
        let s: std::collections::HashSet<u64> = (0..1000).map(|r| repetition_seed(7, r)).collect();
        assert_eq!(s.len(), 1000);
    }
}
