//! Conjunctive if-then rules over named features.
//!
//! A [`Ruleset`] is the reference model whose rule hits fingerprint a data
//! distribution. Only premises matter for hits; consequences are carried for
//! readability and round-tripping but never evaluated.

mod parse;

use std::fmt::{self, Write as _};

use sha2::{Digest, Sha256};

use crate::data::{Record, Value};
use crate::error::{Error, Result};

pub use parse::parse_ruleset;

/// Interval endpoints for an `in` test. `lo <= hi` always holds.
#[derive(Clone, Copy, Debug, PartialEq)]
pub struct Bounds {
    pub lo: f64,
    pub hi: f64,
    pub lo_closed: bool,
    pub hi_closed: bool,
}

impl Bounds {
    pub fn closed(lo: f64, hi: f64) -> Result<Bounds> {
        Bounds::new(lo, hi, true, true)
    }

    pub fn new(lo: f64, hi: f64, lo_closed: bool, hi_closed: bool) -> Result<Bounds> {
        if lo.is_nan() || hi.is_nan() || lo > hi {
            return Err(Error::InvalidRuleset(format!(
                "interval lower bound {lo} exceeds upper bound {hi}"
            )));
        }
        Ok(Bounds {
            lo,
            hi,
            lo_closed,
            hi_closed,
        })
    }

    pub fn contains(&self, x: f64) -> bool {
        let above = if self.lo_closed {
            x >= self.lo
        } else {
            x > self.lo
        };
        let below = if self.hi_closed {
            x <= self.hi
        } else {
            x < self.hi
        };
        above && below
    }
}

#[derive(Clone, Debug, PartialEq)]
pub enum Test {
    Lt(f64),
    Le(f64),
    Gt(f64),
    Ge(f64),
    Eq(f64),
    /// Categorical equality on the string-encoded value.
    EqText(String),
    In(Bounds),
}

#[derive(Clone, Debug, PartialEq)]
pub struct Condition {
    pub feature: String,
    pub test: Test,
}

impl Condition {
    pub fn new(feature: impl Into<String>, test: Test) -> Self {
        Condition {
            feature: feature.into(),
            test,
        }
    }

    /// Applies the test to the feature's value. Exact binary floating-point
    /// comparison against the threshold as written.
    pub fn holds(&self, value: &Value) -> Result<bool> {
        if let Test::EqText(s) = &self.test {
            return Ok(match value {
                Value::Text(t) => **t == **s,
                Value::Num(_) => false,
            });
        }
        let x = value.as_num().ok_or_else(|| Error::NonNumeric {
            feature: self.feature.clone(),
            value: value.to_string(),
        })?;
        Ok(match &self.test {
            Test::Lt(t) => x < *t,
            Test::Le(t) => x <= *t,
            Test::Gt(t) => x > *t,
            Test::Ge(t) => x >= *t,
            Test::Eq(t) => x == *t,
            Test::In(b) => b.contains(x),
            Test::EqText(_) => unreachable!(),
        })
    }
}

#[derive(Clone, Debug, PartialEq)]
pub struct Rule {
    pub id: usize,
    pub premise: Vec<Condition>,
    pub consequence: String,
}

impl Rule {
    pub fn new(premise: Vec<Condition>, consequence: impl Into<String>) -> Self {
        Rule {
            id: 0,
            premise,
            consequence: consequence.into(),
        }
    }
}

/// Ordered rules; position defines the histogram row.
#[derive(Clone, Debug, PartialEq)]
pub struct Ruleset {
    rules: Vec<Rule>,
    feature_names: Vec<String>,
}

impl Ruleset {
    /// Assigns ids `1..=N_r` in the given order and validates premises.
    pub fn new(mut rules: Vec<Rule>) -> Result<Ruleset> {
        let mut feature_names: Vec<String> = Vec::new();
        for (i, rule) in rules.iter_mut().enumerate() {
            rule.id = i + 1;
            if rule.premise.is_empty() {
                return Err(Error::InvalidRuleset(format!(
                    "rule {} has an empty premise",
                    rule.id
                )));
            }
            for c in &rule.premise {
                if let Test::In(b) = c.test {
                    Bounds::new(b.lo, b.hi, b.lo_closed, b.hi_closed)?;
                }
                if !feature_names.contains(&c.feature) {
                    feature_names.push(c.feature.clone());
                }
            }
        }
        Ok(Ruleset {
            rules,
            feature_names,
        })
    }

    pub fn rules(&self) -> &[Rule] {
        &self.rules
    }

    pub fn len(&self) -> usize {
        self.rules.len()
    }

    pub fn is_empty(&self) -> bool {
        self.rules.is_empty()
    }

    /// Features referenced by any premise, in order of first appearance.
    pub fn feature_names(&self) -> &[String] {
        &self.feature_names
    }

    /// SHA-256 of the canonical text form.
    pub fn digest(&self) -> String {
        hex::encode(Sha256::digest(format_ruleset(self).as_bytes()))
    }

    /// Resolves feature names against a column header for fast row evaluation.
    pub fn bind(&self, columns: &[String]) -> Result<BoundRuleset> {
        let mut rules = Vec::with_capacity(self.rules.len());
        for rule in &self.rules {
            let mut conds = Vec::with_capacity(rule.premise.len());
            for c in &rule.premise {
                let col = columns
                    .iter()
                    .position(|n| *n == c.feature)
                    .ok_or_else(|| Error::MissingFeature(c.feature.clone()))?;
                conds.push((col, c.clone()));
            }
            rules.push(conds);
        }
        Ok(BoundRuleset { rules })
    }
}

/// True iff every condition of the premise holds. The consequence is ignored.
pub fn evaluate_premise<R: Record + ?Sized>(rule: &Rule, sample: &R) -> Result<bool> {
    for c in &rule.premise {
        let v = sample
            .value(&c.feature)
            .ok_or_else(|| Error::MissingFeature(c.feature.clone()))?;
        if !c.holds(v)? {
            return Ok(false);
        }
    }
    Ok(true)
}

/// Per-rule premise satisfaction for one sample.
pub fn ruleset_hits<R: Record + ?Sized>(ruleset: &Ruleset, sample: &R) -> Result<HitMask> {
    let mut mask = HitMask::new(ruleset.len());
    for (i, rule) in ruleset.rules().iter().enumerate() {
        if evaluate_premise(rule, sample)? {
            mask.set(i);
        }
    }
    Ok(mask)
}

/// A ruleset whose features are resolved to column positions.
#[derive(Clone, Debug)]
pub struct BoundRuleset {
    rules: Vec<Vec<(usize, Condition)>>,
}

impl BoundRuleset {
    pub fn n_rules(&self) -> usize {
        self.rules.len()
    }

    /// Writes the hit mask of `row` into `mask`. On error `mask` is left in an
    /// unspecified state.
    pub fn hits_into(&self, row: &[Value], mask: &mut HitMask) -> Result<()> {
        mask.clear();
        'rules: for (i, conds) in self.rules.iter().enumerate() {
            for (col, c) in conds {
                if !c.holds(&row[*col])? {
                    continue 'rules;
                }
            }
            mask.set(i);
        }
        Ok(())
    }

    pub fn hits(&self, row: &[Value]) -> Result<HitMask> {
        let mut mask = HitMask::new(self.n_rules());
        self.hits_into(row, &mut mask)?;
        Ok(mask)
    }
}

/// Fixed-length bitset of rule hits.
#[derive(Clone, Debug, PartialEq, Eq, Hash)]
pub struct HitMask {
    words: Vec<u64>,
    len: usize,
}

impl HitMask {
    pub fn new(len: usize) -> Self {
        HitMask {
            words: vec![0; len.div_ceil(64)],
            len,
        }
    }

    pub fn from_bools(bits: &[bool]) -> Self {
        let mut m = HitMask::new(bits.len());
        for (i, &b) in bits.iter().enumerate() {
            if b {
                m.set(i);
            }
        }
        m
    }

    pub fn len(&self) -> usize {
        self.len
    }

    pub fn is_empty(&self) -> bool {
        self.len == 0
    }

    pub fn words(&self) -> &[u64] {
        &self.words
    }

    pub fn get(&self, i: usize) -> bool {
        assert!(i < self.len);
        self.words[i / 64] >> (i % 64) & 1 == 1
    }

    pub fn set(&mut self, i: usize) {
        assert!(i < self.len);
        self.words[i / 64] |= 1 << (i % 64);
    }

    pub fn clear(&mut self) {
        self.words.fill(0);
    }

    pub fn count_ones(&self) -> usize {
        self.words.iter().map(|w| w.count_ones() as usize).sum()
    }

    pub fn to_bools(&self) -> Vec<bool> {
        (0..self.len).map(|i| self.get(i)).collect()
    }

    /// Indices of set bits, ascending.
    pub fn ones(&self) -> impl Iterator<Item = usize> + '_ {
        iter_ones(&self.words)
    }
}

pub(crate) fn iter_ones(words: &[u64]) -> impl Iterator<Item = usize> + '_ {
    words.iter().enumerate().flat_map(|(wi, &w)| {
        let mut rest = w;
        std::iter::from_fn(move || {
            if rest == 0 {
                return None;
            }
            let tz = rest.trailing_zeros() as usize;
            rest &= rest - 1;
            Some(wi * 64 + tz)
        })
    })
}

/// Canonical one-rule-per-line text that [`parse_ruleset`] reads back to an
/// equal ruleset.
pub fn format_ruleset(ruleset: &Ruleset) -> String {
    let mut out = String::new();
    for rule in ruleset.rules() {
        let _ = writeln!(out, "{}", RuleDisplay(rule));
    }
    out
}

struct RuleDisplay<'a>(&'a Rule);

impl fmt::Display for RuleDisplay<'_> {
    fn fmt(&self, f: &mut fmt::Formatter<'_>) -> fmt::Result {
        f.write_str("if ")?;
        for (i, c) in self.0.premise.iter().enumerate() {
            if i > 0 {
                f.write_str(" and ")?;
            }
            write_ident(f, &c.feature)?;
            match &c.test {
                Test::Lt(t) => write!(f, " < {}", Num(*t))?,
                Test::Le(t) => write!(f, " <= {}", Num(*t))?,
                Test::Gt(t) => write!(f, " > {}", Num(*t))?,
                Test::Ge(t) => write!(f, " >= {}", Num(*t))?,
                Test::Eq(t) => write!(f, " == {}", Num(*t))?,
                Test::EqText(s) => {
                    f.write_str(" == ")?;
                    write_quoted(f, s)?;
                }
                Test::In(b) => write!(
                    f,
                    " in {}{}, {}{}",
                    if b.lo_closed { '[' } else { '(' },
                    Num(b.lo),
                    Num(b.hi),
                    if b.hi_closed { ']' } else { ')' },
                )?,
            }
        }
        f.write_str(" then ")?;
        let label = &self.0.consequence;
        if parse::is_bare_label(label) {
            f.write_str(label)
        } else {
            write_quoted(f, label)
        }
    }
}

struct Num(f64);

impl fmt::Display for Num {
    fn fmt(&self, f: &mut fmt::Formatter<'_>) -> fmt::Result {
        // Rust's shortest round-trip formatting; infinities as `inf`/`-inf`.
        write!(f, "{}", self.0)
    }
}

fn write_ident(f: &mut fmt::Formatter<'_>, name: &str) -> fmt::Result {
    if parse::is_bare_ident(name) {
        f.write_str(name)
    } else {
        write_quoted(f, name)
    }
}

fn write_quoted(f: &mut fmt::Formatter<'_>, s: &str) -> fmt::Result {
    f.write_char('"')?;
    for ch in s.chars() {
        match ch {
            '"' => f.write_str("\\\"")?,
            '\\' => f.write_str("\\\\")?,
            c => f.write_char(c)?,
        }
    }
    f.write_char('"')
}
