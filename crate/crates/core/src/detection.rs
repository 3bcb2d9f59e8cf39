//! Training baselines and operational verdicts.
//!
//! Single-split mode compares one operational histogram against every
//! training histogram using weighted mutual information and `l1`/`l2`
//! distances. Group mode compares a group of operational histograms against
//! per-rule Gaussian models of the training hits through the rule-based
//! information ratio, calibrated by leave-one-out folds.

use std::collections::BTreeMap;
use std::fmt;
use std::path::Path;
use std::str::FromStr;

use serde::{Deserialize, Serialize};
use sha2::{Digest, Sha256};

use crate::error::{Error, Result};
use crate::exec::Exec;
use crate::histogram::{HitHistogram, HitMatrix};
use crate::metrics::{
    lp_norm, rbi, weighted_mutual_information, BankSource, GaussianBank, SIGMA_FLOOR,
};

const DECISIONS: &str = "rule-ood baselines v1; value-frequency mi; strict majority; \
closed intervals; p_min 1e-12; population sigma; l_p over all training columns";

#[derive(Clone, Copy, Debug, PartialEq, Eq, Hash, Serialize, Deserialize)]
#[serde(rename_all = "lowercase")]
pub enum Mode {
    Single,
    Group,
}

impl fmt::Display for Mode {
    fn fmt(&self, f: &mut fmt::Formatter<'_>) -> fmt::Result {
        f.write_str(match self {
            Mode::Single => "single",
            Mode::Group => "group",
        })
    }
}

impl FromStr for Mode {
    type Err = Error;

    fn from_str(s: &str) -> Result<Mode> {
        match s.to_ascii_lowercase().as_str() {
            "single" => Ok(Mode::Single),
            "group" => Ok(Mode::Group),
            _ => Err(Error::InvalidConfig(format!("unknown mode `{s}`"))),
        }
    }
}

#[derive(Clone, Copy, Debug, PartialEq, Eq, PartialOrd, Ord, Hash, Serialize, Deserialize)]
#[serde(rename_all = "lowercase")]
pub enum Metric {
    Wmi,
    Rbi,
    L1,
    L2,
}

impl Metric {
    pub fn name(self) -> &'static str {
        match self {
            Metric::Wmi => "wmi",
            Metric::Rbi => "rbi",
            Metric::L1 => "l1",
            Metric::L2 => "l2",
        }
    }

    pub fn default_roster(mode: Mode) -> Vec<Metric> {
        match mode {
            Mode::Single => vec![Metric::Wmi, Metric::L1, Metric::L2],
            Mode::Group => vec![Metric::Rbi, Metric::L1, Metric::L2],
        }
    }

    pub fn available_in(self, mode: Mode) -> bool {
        !matches!(
            (self, mode),
            (Metric::Wmi, Mode::Group) | (Metric::Rbi, Mode::Single)
        )
    }
}

impl fmt::Display for Metric {
    fn fmt(&self, f: &mut fmt::Formatter<'_>) -> fmt::Result {
        f.write_str(self.name())
    }
}

impl FromStr for Metric {
    type Err = Error;

    fn from_str(s: &str) -> Result<Metric> {
        match s.trim().to_ascii_lowercase().as_str() {
            "wmi" => Ok(Metric::Wmi),
            "rbi" => Ok(Metric::Rbi),
            "l1" => Ok(Metric::L1),
            "l2" => Ok(Metric::L2),
            _ => Err(Error::InvalidConfig(format!("unknown metric `{s}`"))),
        }
    }
}

/// Closed interval `[min, max]`.
#[derive(Clone, Copy, Debug, PartialEq, Serialize, Deserialize)]
pub struct Interval {
    #[serde(with = "crate::real")]
    pub min: f64,
    #[serde(with = "crate::real")]
    pub max: f64,
}

impl Interval {
    pub fn new(min: f64, max: f64) -> Result<Interval> {
        if min.is_nan() || max.is_nan() || min > max {
            return Err(Error::InvalidConfig(format!(
                "interval bounds out of order: [{min}, {max}]"
            )));
        }
        Ok(Interval { min, max })
    }

    /// Smallest interval holding every value.
    pub fn envelope(values: impl IntoIterator<Item = f64>) -> Result<Interval> {
        let mut it = values.into_iter();
        let first = it.next().ok_or(Error::EmptyInput("baseline values"))?;
        let (min, max) = it.fold((first, first), |(lo, hi), x| (lo.min(x), hi.max(x)));
        Interval::new(min, max)
    }

    pub fn contains(&self, x: f64) -> bool {
        self.min <= x && x <= self.max
    }

    pub fn width(&self) -> f64 {
        self.max - self.min
    }

    /// 0 inside; otherwise the gap to the nearest bound over the width
    /// (floored at machine epsilon). Informational only.
    pub fn normalized_distance(&self, x: f64) -> f64 {
        let gap = if x < self.min {
            self.min - x
        } else if x > self.max {
            x - self.max
        } else {
            return 0.0;
        };
        gap / self.width().max(f64::EPSILON)
    }
}

impl fmt::Display for Interval {
    fn fmt(&self, f: &mut fmt::Formatter<'_>) -> fmt::Result {
        write!(f, "[{:.6}, {:.6}]", self.min, self.max)
    }
}

/// Settings that shape a baseline. Together with the ruleset digest and the
/// training split geometry they determine the baseline fingerprint.
#[derive(Clone, Debug, PartialEq, Serialize, Deserialize)]
pub struct BaselineConfig {
    pub mode: Mode,
    pub n_op: usize,
    pub seed: u64,
    #[serde(with = "crate::real")]
    pub sigma_floor: f64,
    pub metrics: Vec<Metric>,
}

impl BaselineConfig {
    pub fn single(seed: u64) -> BaselineConfig {
        BaselineConfig {
            mode: Mode::Single,
            n_op: 1,
            seed,
            sigma_floor: SIGMA_FLOOR,
            metrics: Metric::default_roster(Mode::Single),
        }
    }

    pub fn group(n_op: usize, seed: u64) -> BaselineConfig {
        BaselineConfig {
            mode: Mode::Group,
            n_op,
            seed,
            sigma_floor: SIGMA_FLOOR,
            metrics: Metric::default_roster(Mode::Group),
        }
    }

    pub fn validate(&self) -> Result<()> {
        if self.metrics.is_empty() {
            return Err(Error::InvalidConfig("metric roster is empty".into()));
        }
        if let Some(m) = self.metrics.iter().find(|m| !m.available_in(self.mode)) {
            return Err(Error::InvalidConfig(format!(
                "metric {m} is not available in {} mode",
                self.mode
            )));
        }
        match self.mode {
            Mode::Single if self.n_op != 1 => Err(Error::InvalidConfig(format!(
                "single mode uses one operational split, got {}",
                self.n_op
            ))),
            Mode::Group if self.n_op < 2 => Err(Error::InvalidConfig(format!(
                "group mode needs at least 2 operational splits, got {}",
                self.n_op
            ))),
            _ if !(self.sigma_floor.is_finite() && self.sigma_floor > 0.0) => {
                Err(Error::InvalidConfig(format!(
                    "sigma floor must be positive, got {}",
                    self.sigma_floor
                )))
            }
            _ => Ok(()),
        }
    }

    /// Size of the reference group in group mode: `N_tr - N_op - 1`.
    pub fn reference_size(&self, n_tr: usize) -> Option<usize> {
        n_tr.checked_sub(self.n_op + 1)
    }
}

/// Hex SHA-256 binding a baseline to its ruleset, split geometry and config.
pub fn fingerprint(ruleset_digest: &str, n_s: u32, n_tr: usize, config: &BaselineConfig) -> String {
    let metrics: Vec<&str> = config.metrics.iter().map(|m| m.name()).collect();
    let text = format!(
        "{DECISIONS}\nruleset {ruleset_digest}\nn_s {n_s}\nn_tr {n_tr}\nmode {}\nn_op {}\n\
         seed {}\nsigma_floor {:016x}\nmetrics {}\n",
        config.mode,
        config.n_op,
        config.seed,
        config.sigma_floor.to_bits(),
        metrics.join(",")
    );
    hex::encode(Sha256::digest(text.as_bytes()))
}

#[derive(Clone, Debug, PartialEq, Serialize, Deserialize)]
pub struct Baselines {
    pub config: BaselineConfig,
    pub split_size: u32,
    pub n_tr: usize,
    #[serde(default, skip_serializing_if = "Option::is_none")]
    pub wmi: Option<Interval>,
    #[serde(default, skip_serializing_if = "Option::is_none")]
    pub rbi: Option<Interval>,
    /// Per-fold rule-based information values behind `rbi`.
    #[serde(
        default,
        with = "crate::real::vec",
        skip_serializing_if = "Vec::is_empty"
    )]
    pub rbi_folds: Vec<f64>,
    pub l1: Interval,
    pub l2: Interval,
    pub fingerprint: String,
}

impl Baselines {
    pub fn interval(&self, metric: Metric) -> Option<Interval> {
        match metric {
            Metric::Wmi => self.wmi,
            Metric::Rbi => self.rbi,
            Metric::L1 => Some(self.l1),
            Metric::L2 => Some(self.l2),
        }
    }

    pub fn mode(&self) -> Mode {
        self.config.mode
    }

    /// Checks that these baselines were built from `training` under a ruleset
    /// with the given digest.
    pub fn verify(&self, ruleset_digest: &str, training: &HitMatrix) -> Result<()> {
        let n_s = common_split_size(training.training())?;
        let found = fingerprint(ruleset_digest, n_s, training.training().len(), &self.config);
        if found != self.fingerprint {
            return Err(Error::FingerprintMismatch {
                expected: self.fingerprint.clone(),
                found,
            });
        }
        Ok(())
    }
}

fn common_split_size(columns: &[HitHistogram]) -> Result<u32> {
    let first = columns
        .first()
        .ok_or(Error::EmptyInput("training splits"))?;
    let n_s = first.split_size();
    if let Some(h) = columns.iter().find(|h| h.split_size() != n_s) {
        return Err(Error::InvalidConfig(format!(
            "training splits differ in size ({n_s} vs {})",
            h.split_size()
        )));
    }
    Ok(n_s)
}

struct PairEnvelopes {
    wmi: Option<Interval>,
    l1: Interval,
    l2: Interval,
}

/// Envelopes of the pairwise metrics over all unordered pairs. Every metric
/// here is symmetric, so ordered pairs give the same intervals.
fn pair_envelopes(columns: &[HitHistogram], with_wmi: bool, exec: Exec) -> Result<PairEnvelopes> {
    let n = columns.len();
    if n < 2 {
        return Err(Error::InsufficientCount { needed: 2, have: n });
    }
    let pairs: Vec<(usize, usize)> = (0..n)
        .flat_map(|i| (i + 1..n).map(move |j| (i, j)))
        .collect();
    let values = exec.try_map_range(pairs.len(), |p| {
        let (a, b) = (&columns[pairs[p].0], &columns[pairs[p].1]);
        let wmi = if with_wmi {
            weighted_mutual_information(a, b)?
        } else {
            0.0
        };
        Ok::<_, Error>((wmi, lp_norm(a, b, 1)?, lp_norm(a, b, 2)?))
    })?;
    Ok(PairEnvelopes {
        wmi: if with_wmi {
            Some(Interval::envelope(values.iter().map(|v| v.0))?)
        } else {
            None
        },
        l1: Interval::envelope(values.iter().map(|v| v.1))?,
        l2: Interval::envelope(values.iter().map(|v| v.2))?,
    })
}

/// Single-split baselines: `[min, max]` of weighted mutual information and of
/// `l1`/`l2` over all pairs of training histograms.
pub fn wmi_baseline(
    training: &HitMatrix,
    config: &BaselineConfig,
    exec: Exec,
) -> Result<Baselines> {
    config.validate()?;
    if config.mode != Mode::Single {
        return Err(Error::InvalidConfig(
            "weighted mutual information baselines need single mode".into(),
        ));
    }
    let cols = training.training();
    let n_s = common_split_size(cols)?;
    let env = pair_envelopes(cols, true, exec)?;
    Ok(Baselines {
        config: config.clone(),
        split_size: n_s,
        n_tr: cols.len(),
        wmi: env.wmi,
        rbi: None,
        rbi_folds: Vec::new(),
        l1: env.l1,
        l2: env.l2,
        fingerprint: fingerprint(training.ruleset_digest(), n_s, cols.len(), config),
    })
}

/// Rule-based information of `group` against the reference group `tr1`.
pub fn group_rbi(tr1: &[HitHistogram], group: &[HitHistogram], sigma_floor: f64) -> Result<f64> {
    let reference = GaussianBank::fit(tr1, sigma_floor, BankSource::Reference)?;
    let own = GaussianBank::fit(group, sigma_floor, BankSource::Operational)?;
    rbi(group, &own, &reference)
}

#[derive(Clone, Debug, PartialEq)]
pub struct RbiCalibration {
    pub interval: Interval,
    /// Value for each left-out member of the calibration group, in order.
    pub folds: Vec<f64>,
}

/// Leave-one-out calibration: for each member `m` of `tr2`, the rule-based
/// information of `tr2 \ {m}` against `tr1`.
pub fn rbi_baseline(
    tr1: &[HitHistogram],
    tr2: &[HitHistogram],
    sigma_floor: f64,
    exec: Exec,
) -> Result<RbiCalibration> {
    if tr1.len() < 2 {
        return Err(Error::InsufficientCount {
            needed: 2,
            have: tr1.len(),
        });
    }
    if tr2.len() < 3 {
        return Err(Error::InsufficientCount {
            needed: 3,
            have: tr2.len(),
        });
    }
    let reference = GaussianBank::fit(tr1, sigma_floor, BankSource::Reference)?;
    let folds = exec.try_map_range(tr2.len(), |m| {
        let fold: Vec<&HitHistogram> = tr2
            .iter()
            .enumerate()
            .filter(|&(i, _)| i != m)
            .map(|(_, h)| h)
            .collect();
        let own = GaussianBank::fit(&fold, sigma_floor, BankSource::Fold(m))?;
        rbi(&fold, &own, &reference)
    })?;
    Ok(RbiCalibration {
        interval: Interval::envelope(folds.iter().copied())?,
        folds,
    })
}

/// Group-mode baselines: the first `k = N_tr - N_op - 1` training columns form
/// the reference group, the remaining `N_op + 1` the calibration group. Norm
/// intervals span all training pairs.
pub fn group_baseline(
    training: &HitMatrix,
    config: &BaselineConfig,
    exec: Exec,
) -> Result<Baselines> {
    config.validate()?;
    if config.mode != Mode::Group {
        return Err(Error::InvalidConfig(
            "rule-based information baselines need group mode".into(),
        ));
    }
    let cols = training.training();
    let n_s = common_split_size(cols)?;
    let k = config
        .reference_size(cols.len())
        .filter(|&k| k >= 2)
        .ok_or(Error::InsufficientCount {
            needed: config.n_op + 3,
            have: cols.len(),
        })?;
    let (tr1, tr2) = cols.split_at(k);
    let cal = rbi_baseline(tr1, tr2, config.sigma_floor, exec)?;
    let env = pair_envelopes(cols, false, exec)?;
    Ok(Baselines {
        config: config.clone(),
        split_size: n_s,
        n_tr: cols.len(),
        wmi: None,
        rbi: Some(cal.interval),
        rbi_folds: cal.folds,
        l1: env.l1,
        l2: env.l2,
        fingerprint: fingerprint(training.ruleset_digest(), n_s, cols.len(), config),
    })
}

/// Builds the baselines for `config.mode`.
pub fn build_baselines(
    training: &HitMatrix,
    config: &BaselineConfig,
    exec: Exec,
) -> Result<Baselines> {
    match config.mode {
        Mode::Single => wmi_baseline(training, config, exec),
        Mode::Group => group_baseline(training, config, exec),
    }
}

/// Strict majority: more than half of the flags are set.
pub fn majority(flags: &[bool]) -> Result<bool> {
    if flags.is_empty() {
        return Err(Error::EmptyInput("flags"));
    }
    Ok(flags.iter().filter(|&&f| f).count() * 2 > flags.len())
}

#[derive(Clone, Copy, Debug, PartialEq, Eq, Serialize, Deserialize)]
pub enum Verdict {
    #[serde(rename = "in-distribution")]
    InDistribution,
    #[serde(rename = "ood")]
    Ood,
}

impl fmt::Display for Verdict {
    fn fmt(&self, f: &mut fmt::Formatter<'_>) -> fmt::Result {
        f.write_str(match self {
            Verdict::InDistribution => "in-distribution",
            Verdict::Ood => "ood",
        })
    }
}

#[derive(Clone, Debug, PartialEq, Serialize, Deserialize)]
pub struct MetricOutcome {
    /// Every comparison value that was voted on.
    #[serde(with = "crate::real::vec")]
    pub values: Vec<f64>,
    /// Median of `values`.
    #[serde(with = "crate::real")]
    pub value: f64,
    pub baseline: Interval,
    pub votes_out: usize,
    pub votes_total: usize,
    pub flag: bool,
    /// Distance of `value` from the baseline in units of its width.
    #[serde(with = "crate::real")]
    pub normalized_distance: f64,
}

impl MetricOutcome {
    fn vote(values: Vec<f64>, baseline: Interval) -> Result<MetricOutcome> {
        let outside: Vec<bool> = values.iter().map(|&v| !baseline.contains(v)).collect();
        let flag = majority(&outside)?;
        let value = median(&values);
        Ok(MetricOutcome {
            votes_out: outside.iter().filter(|&&o| o).count(),
            votes_total: values.len(),
            flag,
            value,
            normalized_distance: baseline.normalized_distance(value),
            baseline,
            values,
        })
    }
}

pub(crate) fn median(values: &[f64]) -> f64 {
    let mut v = values.to_vec();
    v.sort_by(f64::total_cmp);
    let n = v.len();
    if n == 0 {
        f64::NAN
    } else if n % 2 == 1 {
        v[n / 2]
    } else {
        0.5 * (v[n / 2 - 1] + v[n / 2])
    }
}

#[derive(Clone, Debug, PartialEq, Serialize, Deserialize)]
pub struct DetectionReport {
    pub mode: Mode,
    pub per_metric: BTreeMap<Metric, MetricOutcome>,
    pub verdict: Verdict,
}

impl DetectionReport {
    fn from_outcomes(mode: Mode, per_metric: BTreeMap<Metric, MetricOutcome>) -> DetectionReport {
        let verdict = if per_metric.values().any(|o| o.flag) {
            Verdict::Ood
        } else {
            Verdict::InDistribution
        };
        DetectionReport {
            mode,
            per_metric,
            verdict,
        }
    }

    pub fn is_ood(&self) -> bool {
        self.verdict == Verdict::Ood
    }

    pub fn flagged(&self) -> Vec<Metric> {
        self.per_metric
            .iter()
            .filter(|(_, o)| o.flag)
            .map(|(&m, _)| m)
            .collect()
    }
}

fn check_mode(base: &Baselines, mode: Mode) -> Result<()> {
    if base.mode() != mode {
        return Err(Error::InvalidConfig(format!(
            "baselines were built for {} mode, not {mode}",
            base.mode()
        )));
    }
    Ok(())
}

fn check_rules(training: &HitMatrix, h: &HitHistogram) -> Result<()> {
    if h.n_rules() != training.n_rules() {
        return Err(Error::LengthMismatch {
            expected: training.n_rules(),
            found: h.n_rules(),
        });
    }
    Ok(())
}

fn baseline_for(base: &Baselines, metric: Metric) -> Result<Interval> {
    base.interval(metric)
        .ok_or_else(|| Error::InvalidConfig(format!("baselines have no {metric} interval")))
}

/// Compares one operational histogram with every training histogram. A
/// metric flags when a strict majority of its values fall outside the
/// baseline; the verdict is OoD when any metric flags.
pub fn detect_single(
    training: &HitMatrix,
    op: &HitHistogram,
    base: &Baselines,
) -> Result<DetectionReport> {
    check_mode(base, Mode::Single)?;
    base.verify(training.ruleset_digest(), training)?;
    check_rules(training, op)?;
    let mut per_metric = BTreeMap::new();
    for &metric in &base.config.metrics {
        let values = training
            .training()
            .iter()
            .map(|tr| match metric {
                Metric::Wmi => weighted_mutual_information(tr, op),
                Metric::L1 => lp_norm(tr, op, 1),
                Metric::L2 => lp_norm(tr, op, 2),
                Metric::Rbi => unreachable!("validated roster"),
            })
            .collect::<Result<Vec<f64>>>()?;
        per_metric.insert(
            metric,
            MetricOutcome::vote(values, baseline_for(base, metric)?)?,
        );
    }
    Ok(DetectionReport::from_outcomes(Mode::Single, per_metric))
}

/// Compares a group of operational histograms with the reference group
/// through rule-based information, and with every training histogram
/// through `l1`/`l2` (strict majority over all training × operational
/// pairs).
pub fn detect_group(
    training: &HitMatrix,
    op_group: &[HitHistogram],
    base: &Baselines,
) -> Result<DetectionReport> {
    check_mode(base, Mode::Group)?;
    base.verify(training.ruleset_digest(), training)?;
    if op_group.len() < 2 {
        return Err(Error::InsufficientCount {
            needed: 2,
            have: op_group.len(),
        });
    }
    if op_group.len() != base.config.n_op {
        log::warn!(
            "operational group has {} splits; baselines were calibrated for {}",
            op_group.len(),
            base.config.n_op
        );
    }
    for h in op_group {
        check_rules(training, h)?;
    }
    let cols = training.training();
    let mut per_metric = BTreeMap::new();
    for &metric in &base.config.metrics {
        let values = match metric {
            Metric::Rbi => {
                let k = base
                    .config
                    .reference_size(cols.len())
                    .ok_or(Error::InsufficientCount {
                        needed: base.config.n_op + 3,
                        have: cols.len(),
                    })?;
                vec![group_rbi(&cols[..k], op_group, base.config.sigma_floor)?]
            }
            Metric::L1 | Metric::L2 => {
                let p = if metric == Metric::L1 { 1 } else { 2 };
                let mut v = Vec::with_capacity(cols.len() * op_group.len());
                for tr in cols {
                    for op in op_group {
                        v.push(lp_norm(tr, op, p)?);
                    }
                }
                v
            }
            Metric::Wmi => unreachable!("validated roster"),
        };
        per_metric.insert(
            metric,
            MetricOutcome::vote(values, baseline_for(base, metric)?)?,
        );
    }
    Ok(DetectionReport::from_outcomes(Mode::Group, per_metric))
}

/// Baselines together with the training histograms they were built from;
/// detection needs both.
#[derive(Clone, Debug, PartialEq, Serialize, Deserialize)]
pub struct BaselineFile {
    pub baselines: Baselines,
    pub training: HitMatrix,
}

impl BaselineFile {
    pub fn to_json(&self) -> Result<String> {
        let mut s = serde_json::to_string_pretty(self)?;
        s.push('\n');
        Ok(s)
    }

    pub fn from_json(text: &str) -> Result<BaselineFile> {
        Ok(serde_json::from_str(text)?)
    }

    pub fn write(&self, path: impl AsRef<Path>) -> Result<()> {
        std::fs::write(path, self.to_json()?)?;
        Ok(())
    }

    pub fn read(path: impl AsRef<Path>) -> Result<BaselineFile> {
        BaselineFile::from_json(&std::fs::read_to_string(path)?)
    }

    /// Checks the file against a ruleset digest, then against its own
    /// training histograms.
    pub fn verify(&self, ruleset_digest: &str) -> Result<()> {
        self.baselines.verify(ruleset_digest, &self.training)
    }

    pub fn detect(&self, op: &[HitHistogram]) -> Result<DetectionReport> {
        match self.baselines.mode() {
            Mode::Single => match op {
                [h] => detect_single(&self.training, h, &self.baselines),
                _ => Err(Error::InvalidConfig(format!(
                    "single mode takes one operational split, got {}",
                    op.len()
                ))),
            },
            Mode::Group => detect_group(&self.training, op, &self.baselines),
        }
    }
}

#[cfg(test)]
mod tests {
    use super::*;
    use crate::histogram::Origin;
    use statrs::distribution::{ContinuousCDF, Normal};

    fn hist(counts: &[u32], n_s: u32) -> HitHistogram {
        HitHistogram::from_counts(counts.to_vec(), n_s, Origin::Training).unwrap()
    }

    fn op(counts: &[u32], n_s: u32) -> HitHistogram {
        HitHistogram::from_counts(counts.to_vec(), n_s, Origin::Operational).unwrap()
    }

    fn matrix(cols: Vec<HitHistogram>) -> HitMatrix {
        let n = cols[0].n_rules();
        HitMatrix::from_parts(n, "test-rules".into(), cols, Vec::new()).unwrap()
    }

    #[test]
    fn majority_is_strict() {
        assert!(majority(&[true, true, false]).unwrap());
        assert!(!majority(&[true, false]).unwrap());
        assert!(!majority(&[false, false, false]).unwrap());
        assert!(majority(&[]).is_err());
    }

    #[test]
    fn identical_training_gives_zero_intervals() {
        let m = matrix(vec![hist(&[3, 5, 1], 10); 4]);
        let b = wmi_baseline(&m, &BaselineConfig::single(1), Exec::Sequential).unwrap();
        assert_eq!(b.wmi, Some(Interval { min: 0.0, max: 0.0 }));
        assert_eq!(b.l1, Interval { min: 0.0, max: 0.0 });
        assert_eq!(b.l2, Interval { min: 0.0, max: 0.0 });
    }

    #[test]
    fn baseline_matches_ordered_pair_enumeration() {
        let cols = vec![
            hist(&[3, 5, 1], 10),
            hist(&[4, 4, 2], 10),
            hist(&[2, 7, 0], 10),
        ];
        let b = wmi_baseline(
            &matrix(cols.clone()),
            &BaselineConfig::single(1),
            Exec::default(),
        )
        .unwrap();
        let mut w = Vec::new();
        let mut l1 = Vec::new();
        for i in 0..3 {
            for j in 0..3 {
                if i != j {
                    w.push(weighted_mutual_information(&cols[i], &cols[j]).unwrap());
                    let d: f64 = (0..3)
                        .map(|r| (cols[i].value(r) - cols[j].value(r)).abs())
                        .sum();
                    l1.push(d);
                }
            }
        }
        assert_eq!(w.len(), 6);
        let lo = w.iter().cloned().fold(f64::INFINITY, f64::min);
        let hi = w.iter().cloned().fold(f64::NEG_INFINITY, f64::max);
        assert_eq!(b.wmi.unwrap(), Interval { min: lo, max: hi });
        let lo = l1.iter().cloned().fold(f64::INFINITY, f64::min);
        let hi = l1.iter().cloned().fold(f64::NEG_INFINITY, f64::max);
        assert!((b.l1.min - lo).abs() < 1e-15 && (b.l1.max - hi).abs() < 1e-15);
    }

    #[test]
    fn training_column_is_in_distribution() {
        let cols = vec![
            hist(&[30, 52, 11], 100),
            hist(&[33, 49, 14], 100),
            hist(&[28, 55, 9], 100),
            hist(&[31, 50, 12], 100),
        ];
        let m = matrix(cols.clone());
        let b = wmi_baseline(&m, &BaselineConfig::single(1), Exec::Sequential).unwrap();
        for c in &cols {
            let r = detect_single(&m, &c.clone().with_origin(Origin::Operational), &b).unwrap();
            assert_eq!(r.verdict, Verdict::InDistribution, "{r:?}");
        }
    }

    #[test]
    fn far_shift_flags_everything() {
        let cols = vec![
            hist(&[30, 52, 11], 100),
            hist(&[33, 49, 14], 100),
            hist(&[28, 55, 9], 100),
        ];
        let m = matrix(cols);
        let b = wmi_baseline(&m, &BaselineConfig::single(1), Exec::Sequential).unwrap();
        // every rule moves by 40 hits, far beyond the largest training l1
        let r = detect_single(&m, &op(&[70, 12, 51], 100), &b).unwrap();
        assert_eq!(r.verdict, Verdict::Ood);
        assert_eq!(r.flagged(), vec![Metric::Wmi, Metric::L1, Metric::L2]);
    }

    #[test]
    fn half_outside_does_not_flag() {
        let cols = vec![
            hist(&[0, 10], 10),
            hist(&[0, 10], 10),
            hist(&[10, 0], 10),
            hist(&[10, 0], 10),
        ];
        let m = matrix(cols);
        let config = BaselineConfig {
            metrics: vec![Metric::L1],
            ..BaselineConfig::single(1)
        };
        let base = Baselines {
            config: config.clone(),
            split_size: 10,
            n_tr: 4,
            wmi: None,
            rbi: None,
            rbi_folds: Vec::new(),
            l1: Interval::new(0.0, 0.5).unwrap(),
            l2: Interval::new(0.0, 0.5).unwrap(),
            fingerprint: fingerprint("test-rules", 10, 4, &config),
        };
        // distance 0 to two columns, 2 to the other two: 2 of 4 outside
        let r = detect_single(&m, &op(&[0, 10], 10), &base).unwrap();
        let o = &r.per_metric[&Metric::L1];
        assert_eq!((o.votes_out, o.votes_total, o.flag), (2, 4, false));
        assert_eq!(r.verdict, Verdict::InDistribution);
    }

    #[test]
    fn fingerprint_mismatch_is_an_error() {
        let m = matrix(vec![hist(&[1, 2], 10), hist(&[2, 1], 10)]);
        let b = wmi_baseline(&m, &BaselineConfig::single(1), Exec::Sequential).unwrap();
        let other =
            HitMatrix::from_parts(2, "other".into(), m.training().to_vec(), vec![]).unwrap();
        assert!(matches!(
            detect_single(&other, &op(&[1, 2], 10), &b),
            Err(Error::FingerprintMismatch { .. })
        ));
        let reseeded = BaselineConfig::single(2);
        assert_ne!(
            fingerprint("x", 10, 2, &BaselineConfig::single(1)),
            fingerprint("x", 10, 2, &reseeded)
        );
    }

    #[test]
    fn identical_group_gives_unit_interval() {
        let m = matrix(vec![hist(&[40, 7, 0], 100); 8]);
        let b = group_baseline(&m, &BaselineConfig::group(3, 1), Exec::Sequential).unwrap();
        assert_eq!(b.rbi, Some(Interval { min: 1.0, max: 1.0 }));
        let ops = vec![op(&[40, 7, 0], 100); 3];
        let r = detect_group(&m, &ops, &b).unwrap();
        assert_eq!(r.per_metric[&Metric::Rbi].value, 1.0);
        assert_eq!(r.verdict, Verdict::InDistribution);
    }

    #[test]
    fn group_needs_room_for_reference() {
        let m = matrix(vec![hist(&[1, 2], 10); 5]);
        assert!(matches!(
            group_baseline(&m, &BaselineConfig::group(3, 1), Exec::Sequential),
            Err(Error::InsufficientCount { needed: 6, have: 5 })
        ));
        assert!(BaselineConfig::group(1, 1).validate().is_err());
    }

    // Independent replay of the leave-one-out calibration with statrs normals.
    fn oracle_rbi(tr1: &[Vec<f64>], group: &[Vec<f64>]) -> f64 {
        let fit = |cols: &[Vec<f64>], j: usize| {
            let xs: Vec<f64> = cols.iter().map(|c| c[j]).collect();
            let n = xs.len() as f64;
            let mu = xs.iter().sum::<f64>() / n;
            let var = xs.iter().map(|x| (x - mu).powi(2)).sum::<f64>() / n;
            (mu, var.sqrt().max(SIGMA_FLOOR))
        };
        let mass = |(mu, s): (f64, f64), x: f64| {
            let d = Normal::new(mu, s).unwrap();
            (d.cdf(x + s) - d.cdf(x - s)).clamp(1e-12, 1.0 - 1e-12)
        };
        let ent = |p: f64| -(p * p.ln() + (1.0 - p) * (1.0 - p).ln());
        let (mut num, mut den) = (0.0, 0.0);
        for h in group {
            for (j, &x) in h.iter().enumerate() {
                let po = mass(fit(group, j), x);
                let pr = mass(fit(tr1, j), x);
                num += ent(po);
                den += po / pr * ent(pr);
            }
        }
        num / den
    }

    #[test]
    fn tiny_leave_one_out_matches_oracle() {
        let tr1 = [
            hist(&[20, 61], 100),
            hist(&[23, 58], 100),
            hist(&[18, 64], 100),
        ];
        let tr2 = [
            hist(&[21, 60], 100),
            hist(&[26, 55], 100),
            hist(&[19, 66], 100),
        ];
        let cal = rbi_baseline(&tr1, &tr2, SIGMA_FLOOR, Exec::default()).unwrap();
        let v = |hs: &[HitHistogram]| hs.iter().map(HitHistogram::values).collect::<Vec<_>>();
        let t1 = v(&tr1);
        let t2 = v(&tr2);
        for m in 0..3 {
            let fold: Vec<Vec<f64>> = (0..3).filter(|&i| i != m).map(|i| t2[i].clone()).collect();
            let expected = oracle_rbi(&t1, &fold);
            assert!(
                (cal.folds[m] - expected).abs() < 1e-9,
                "{m}: {} vs {expected}",
                cal.folds[m]
            );
        }
        let lo = cal.folds.iter().cloned().fold(f64::INFINITY, f64::min);
        let hi = cal.folds.iter().cloned().fold(f64::NEG_INFINITY, f64::max);
        assert_eq!(cal.interval, Interval { min: lo, max: hi });
    }

    #[test]
    fn fold_replay_lands_inside() {
        let cols: Vec<HitHistogram> = (0..9u32)
            .map(|i| hist(&[20 + (i * 7) % 5, 60 - (i * 3) % 4, 10 + i % 3], 100))
            .collect();
        let m = matrix(cols.clone());
        let b = group_baseline(&m, &BaselineConfig::group(3, 1), Exec::default()).unwrap();
        // k = 9 - 3 - 1 = 5; fold 1 of the calibration group omits column 6
        let fold: Vec<HitHistogram> = [5, 7, 8]
            .iter()
            .map(|&i| cols[i].clone().with_origin(Origin::Operational))
            .collect();
        let r = detect_group(&m, &fold, &b).unwrap();
        let o = &r.per_metric[&Metric::Rbi];
        assert_eq!(o.value, b.rbi_folds[1]);
        assert!(!o.flag);
    }

    #[test]
    fn normalized_distance() {
        let i = Interval::new(1.0, 3.0).unwrap();
        assert_eq!(i.normalized_distance(2.0), 0.0);
        assert_eq!(i.normalized_distance(4.0), 0.5);
        assert_eq!(i.normalized_distance(0.0), 0.5);
        let p = Interval::new(1.0, 1.0).unwrap();
        assert_eq!(p.normalized_distance(1.0 + f64::EPSILON), 1.0);
        assert!(Interval::new(2.0, 1.0).is_err());
    }

    #[test]
    fn baseline_file_round_trip() {
        let m = matrix(vec![
            hist(&[3, 5], 10),
            hist(&[4, 4], 10),
            hist(&[2, 6], 10),
        ]);
        let b = wmi_baseline(&m, &BaselineConfig::single(9), Exec::Sequential).unwrap();
        let file = BaselineFile {
            baselines: b,
            training: m,
        };
        let text = file.to_json().unwrap();
        let back = BaselineFile::from_json(&text).unwrap();
        assert_eq!(back, file);
        assert_eq!(back.to_json().unwrap(), text);
        back.verify("test-rules").unwrap();
        assert!(back.verify("other").is_err());
    }

    #[test]
    fn report_serializes_infinite_values() {
        let mut per_metric = BTreeMap::new();
        per_metric.insert(
            Metric::Rbi,
            MetricOutcome::vote(vec![f64::INFINITY], Interval::new(0.9, 1.1).unwrap()).unwrap(),
        );
        let r = DetectionReport::from_outcomes(Mode::Group, per_metric);
        assert!(r.is_ood());
        let text = serde_json::to_string(&r).unwrap();
        assert!(text.contains("\"inf\""), "{text}");
        assert_eq!(serde_json::from_str::<DetectionReport>(&text).unwrap(), r);
    }
}
