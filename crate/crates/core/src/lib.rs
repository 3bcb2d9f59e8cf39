//! Rule-based out-of-distribution detection.
//!
//! A reference ruleset turns every split of `n_s` samples into a histogram of
//! per-rule hit frequencies. Baselines are the `[min, max]` envelopes of
//! histogram-comparison metrics across training splits; operational data
//! whose metrics leave those envelopes is flagged.
//!
//! ```
//! use rule_ood::{parse_ruleset, HitHistogram, Origin, weighted_mutual_information};
//!
//! let rules = parse_ruleset("if x1 <= 3.2 and x2 > 0.5 then 1\n").unwrap();
//! assert_eq!(rules.len(), 1);
//!
//! let a = HitHistogram::from_counts(vec![166, 182, 438, 424], 1000, Origin::Training).unwrap();
//! let b = HitHistogram::from_counts(vec![211, 214, 387, 399], 1000, Origin::Training).unwrap();
//! let w = weighted_mutual_information(&a, &b).unwrap();
//! assert!((w - 0.1779).abs() < 1e-4);
//! ```

pub mod data;
pub mod detection;
pub mod error;
pub mod eval;
pub mod exec;
pub mod histogram;
pub mod inducer;
pub mod metrics;
mod real;
pub mod ruleset;
pub mod streaming;
pub mod synth;

pub use data::{CsvRows, Dataset, Record, Value};
pub use detection::{
    build_baselines, detect_group, detect_single, group_baseline, majority, rbi_baseline,
    wmi_baseline, BaselineConfig, BaselineFile, Baselines, DetectionReport, Interval, Metric,
    MetricOutcome, Mode, Verdict,
};
pub use error::{Error, Result};
pub use exec::Exec;
pub use histogram::{
    hit_histogram, hit_matrix, make_splits, HitHistogram, HitMatrix, Origin, Split,
};
pub use inducer::{induce_tree, tree_to_rules, DecisionTree, InducerConfig, TreeNode};
pub use metrics::{
    alpha_weight, lp_norm, mutual_information, value_distribution, weighted_mutual_information,
};
pub use ruleset::{evaluate_premise, format_ruleset, parse_ruleset, ruleset_hits, Rule, Ruleset};
pub use streaming::{
    stream_detect, window_push, MomentAccumulator, SlidingWindow, StreamConfig, StreamMonitor,
    TickRecord,
};
