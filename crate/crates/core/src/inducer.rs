//! Depth-limited CART trees and their conversion into rulesets.

use serde::{Deserialize, Serialize};

use crate::data::{Dataset, Value};
use crate::error::{Error, Result};
use crate::exec::Exec;
use crate::histogram::HitHistogram;
use crate::ruleset::{Bounds, Condition, Rule, Ruleset, Test};

#[derive(Clone, Copy, Debug, PartialEq, Eq, Serialize, Deserialize)]
pub struct InducerConfig {
    pub max_depth: usize,
    pub min_leaf: usize,
}

impl Default for InducerConfig {
    fn default() -> Self {
        InducerConfig {
            max_depth: 4,
            min_leaf: 50,
        }
    }
}

#[derive(Clone, Debug, PartialEq)]
pub enum TreeNode {
    Internal {
        feature: usize,
        threshold: f64,
        /// Samples with `x <= threshold`.
        left: Box<TreeNode>,
        right: Box<TreeNode>,
    },
    Leaf {
        label: String,
        support: usize,
    },
}

impl TreeNode {
    pub fn depth(&self) -> usize {
        match self {
            TreeNode::Leaf { .. } => 0,
            TreeNode::Internal { left, right, .. } => 1 + left.depth().max(right.depth()),
        }
    }

    pub fn n_leaves(&self) -> usize {
        match self {
            TreeNode::Leaf { .. } => 1,
            TreeNode::Internal { left, right, .. } => left.n_leaves() + right.n_leaves(),
        }
    }
}

#[derive(Clone, Debug, PartialEq)]
pub struct DecisionTree {
    pub feature_names: Vec<String>,
    pub root: TreeNode,
}

impl DecisionTree {
    pub fn predict(&self, row: &[Value]) -> Result<&str> {
        let mut node = &self.root;
        loop {
            match node {
                TreeNode::Leaf { label, .. } => return Ok(label),
                TreeNode::Internal {
                    feature,
                    threshold,
                    left,
                    right,
                } => {
                    let x = numeric(&self.feature_names[*feature], &row[*feature])?;
                    node = if x <= *threshold { left } else { right };
                }
            }
        }
    }
}

fn numeric(feature: &str, v: &Value) -> Result<f64> {
    v.as_num().ok_or_else(|| Error::NonNumeric {
        feature: feature.to_owned(),
        value: v.to_string(),
    })
}

struct Prepared {
    columns: Vec<Vec<f64>>,
    classes: Vec<String>,
    y: Vec<usize>,
}

/// Gini split quality kept as an exact rational: `Σ_child Σ_k n_ck² / n_c`
/// summed over both children. Larger is purer.
#[derive(Clone, Copy, Debug)]
struct Purity {
    left_sq: u128,
    left_n: u128,
    right_sq: u128,
    right_n: u128,
}

impl Purity {
    // (ls/ln + rs/rn) as numerator over ln·rn
    fn num(&self) -> u128 {
        self.left_sq * self.right_n + self.right_sq * self.left_n
    }

    fn den(&self) -> u128 {
        self.left_n * self.right_n
    }

    fn beats(&self, other: &Purity) -> bool {
        self.num() * other.den() > other.num() * self.den()
    }

    fn beats_parent(&self, parent_sq: u128, n: u128) -> bool {
        self.num() * n > parent_sq * self.den()
    }
}

#[derive(Clone, Copy, Debug)]
struct Candidate {
    feature: usize,
    threshold: f64,
    purity: Purity,
}

fn sum_sq(counts: &[usize]) -> u128 {
    counts.iter().map(|&c| (c as u128) * (c as u128)).sum()
}

/// Midpoint of two consecutive distinct values, kept strictly below `b`.
fn midpoint(a: f64, b: f64) -> f64 {
    let m = a + (b - a) / 2.0;
    if m < b && m >= a {
        m
    } else {
        a
    }
}

fn best_split_on(
    column: &[f64],
    y: &[usize],
    rows: &[usize],
    n_classes: usize,
    min_leaf: usize,
    feature: usize,
) -> Option<Candidate> {
    let mut order: Vec<usize> = rows.to_vec();
    order.sort_by(|&a, &b| column[a].total_cmp(&column[b]));
    let n = order.len();
    let mut left = vec![0usize; n_classes];
    let mut right = vec![0usize; n_classes];
    for &r in &order {
        right[y[r]] += 1;
    }
    let mut best: Option<Candidate> = None;
    for i in 0..n - 1 {
        let r = order[i];
        left[y[r]] += 1;
        right[y[r]] -= 1;
        let (a, b) = (column[r], column[order[i + 1]]);
        if a == b || i + 1 < min_leaf || n - i - 1 < min_leaf {
            continue;
        }
        let purity = Purity {
            left_sq: sum_sq(&left),
            left_n: (i + 1) as u128,
            right_sq: sum_sq(&right),
            right_n: (n - i - 1) as u128,
        };
        if best.as_ref().map_or(true, |c| purity.beats(&c.purity)) {
            best = Some(Candidate {
                feature,
                threshold: midpoint(a, b),
                purity,
            });
        }
    }
    best
}

fn majority_leaf(classes: &[String], y: &[usize], rows: &[usize]) -> TreeNode {
    let mut counts = vec![0usize; classes.len()];
    for &r in rows {
        counts[y[r]] += 1;
    }
    // classes are sorted, so the first maximum is the smallest label
    let mut best = 0;
    for k in 1..counts.len() {
        if counts[k] > counts[best] {
            best = k;
        }
    }
    TreeNode::Leaf {
        label: classes[best].clone(),
        support: rows.len(),
    }
}

fn grow(
    p: &Prepared,
    rows: Vec<usize>,
    depth: usize,
    config: &InducerConfig,
    exec: Exec,
) -> TreeNode {
    let n_classes = p.classes.len();
    let mut counts = vec![0usize; n_classes];
    for &r in &rows {
        counts[p.y[r]] += 1;
    }
    let pure = counts.iter().filter(|&&c| c > 0).count() <= 1;
    if depth >= config.max_depth || pure || rows.len() < 2 * config.min_leaf.max(1) {
        return majority_leaf(&p.classes, &p.y, &rows);
    }
    let per_feature = exec.map_range(p.columns.len(), |f| {
        best_split_on(
            &p.columns[f],
            &p.y,
            &rows,
            n_classes,
            config.min_leaf.max(1),
            f,
        )
    });
    // strict improvement keeps the earliest feature on ties
    let mut best: Option<Candidate> = None;
    for c in per_feature.into_iter().flatten() {
        if best.as_ref().map_or(true, |b| c.purity.beats(&b.purity)) {
            best = Some(c);
        }
    }
    let parent_sq = sum_sq(&counts);
    match best {
        Some(c) if c.purity.beats_parent(parent_sq, rows.len() as u128) => {
            let col = &p.columns[c.feature];
            let (l, r): (Vec<usize>, Vec<usize>) =
                rows.iter().partition(|&&i| col[i] <= c.threshold);
            TreeNode::Internal {
                feature: c.feature,
                threshold: c.threshold,
                left: Box::new(grow(p, l, depth + 1, config, exec)),
                right: Box::new(grow(p, r, depth + 1, config, exec)),
            }
        }
        _ => majority_leaf(&p.classes, &p.y, &rows),
    }
}

/// Greedy Gini-impurity tree over midpoints of sorted unique feature values.
/// Ties go to the lowest feature index, then the lowest threshold; the
/// result is fully deterministic.
pub fn induce_tree(data: &Dataset, config: &InducerConfig, exec: Exec) -> Result<DecisionTree> {
    if config.max_depth == 0 {
        return Err(Error::InvalidConfig("max depth must be at least 1".into()));
    }
    let labels = data.labels().ok_or(Error::MissingLabels)?;
    if data.is_empty() {
        return Err(Error::EmptyInput("training data"));
    }
    let mut classes: Vec<String> = labels.to_vec();
    classes.sort();
    classes.dedup();
    if classes.len() < 2 {
        return Err(Error::SingleClass(classes[0].clone()));
    }
    let y = labels
        .iter()
        .map(|l| classes.binary_search(l).expect("label listed"))
        .collect();
    let mut columns = vec![Vec::with_capacity(data.len()); data.width()];
    for row in data.rows() {
        for (c, v) in row.iter().enumerate() {
            columns[c].push(numeric(&data.feature_names()[c], v)?);
        }
    }
    let p = Prepared {
        columns,
        classes,
        y,
    };
    let root = grow(&p, (0..data.len()).collect(), 0, config, exec);
    Ok(DecisionTree {
        feature_names: data.feature_names().to_vec(),
        root,
    })
}

/// One rule per leaf in depth-first, left-to-right order; premises collect
/// `x <= t` on left branches and `x > t` on right branches. A tree that is a
/// single leaf yields one rule covering the whole line of the first feature.
pub fn tree_to_rules(tree: &DecisionTree) -> Result<Ruleset> {
    fn walk(node: &TreeNode, names: &[String], path: &mut Vec<Condition>, out: &mut Vec<Rule>) {
        match node {
            TreeNode::Leaf { label, .. } => out.push(Rule::new(path.clone(), label.clone())),
            TreeNode::Internal {
                feature,
                threshold,
                left,
                right,
            } => {
                let name = &names[*feature];
                path.push(Condition::new(name.clone(), Test::Le(*threshold)));
                walk(left, names, path, out);
                path.pop();
                path.push(Condition::new(name.clone(), Test::Gt(*threshold)));
                walk(right, names, path, out);
                path.pop();
            }
        }
    }
    let mut rules = Vec::new();
    if let TreeNode::Leaf { label, .. } = &tree.root {
        let name = tree
            .feature_names
            .first()
            .ok_or_else(|| Error::InvalidRuleset("tree has no features".into()))?;
        let all = Bounds::closed(f64::NEG_INFINITY, f64::INFINITY)?;
        rules.push(Rule::new(
            vec![Condition::new(name.clone(), Test::In(all))],
            label.clone(),
        ));
    } else {
        walk(&tree.root, &tree.feature_names, &mut Vec::new(), &mut rules);
    }
    Ruleset::new(rules)
}

/// Hit-frequency above which a rule counts as near-universal.
pub const NEAR_UNIVERSAL: f64 = 0.9;

/// Warnings about rulesets whose histograms would carry little shape: too
/// few rules, or rules that almost every sample satisfies.
pub fn design_warnings(ruleset: &Ruleset, histograms: &[HitHistogram]) -> Vec<String> {
    let mut out = Vec::new();
    if ruleset.len() < 4 {
        out.push(format!(
            "only {} rules; histograms will be flat and detection weak",
            ruleset.len()
        ));
    }
    if !histograms.is_empty() {
        for r in 0..ruleset.len() {
            let mean = histograms.iter().map(|h| h.value(r)).sum::<f64>() / histograms.len() as f64;
            if mean > NEAR_UNIVERSAL {
                out.push(format!(
                    "rule {} fires on {:.1}% of samples; near-universal rules flatten histograms",
                    r + 1,
                    100.0 * mean
                ));
            }
        }
    }
    out
}
