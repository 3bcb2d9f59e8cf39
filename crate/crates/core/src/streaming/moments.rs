//! Sliding-window mean, variance, skewness and kurtosis from shifted power
//! sums.

use std::collections::VecDeque;

use serde::Serialize;

use crate::data::{Dataset, Value};
use crate::error::{Error, Result};

#[derive(Clone, Copy, Debug, PartialEq, Serialize)]
pub struct Moments {
    pub mean: f64,
    /// Population variance.
    pub variance: f64,
    pub skewness: f64,
    /// Excess kurtosis (0 for a normal distribution).
    pub kurtosis: f64,
}

/// Bound on `eps * (peak^2 / m2)^2`, the rounding error of the fourth
/// central moment relative to `m2^2`, before the sums are rebuilt.
const REBASE_TOLERANCE: f64 = 1e-12;

/// Moments of the last `capacity` values.
///
/// Power sums are kept about a shift point. The sums are rebuilt about the
/// current mean after every `capacity` evictions, and sooner whenever a value
/// added or removed since the last rebuild lies far enough from the shift,
/// relative to the window's spread, to threaten the fourth moment.
#[derive(Clone, Debug)]
pub struct MomentAccumulator {
    capacity: usize,
    window: VecDeque<f64>,
    shift: f64,
    sums: [f64; 4],
    evictions: usize,
    /// Largest `|x - shift|` added or removed since the last rebuild.
    peak: f64,
    limit: f64,
    rebases: u64,
}

impl MomentAccumulator {
    pub fn new(capacity: usize) -> Result<MomentAccumulator> {
        if capacity == 0 {
            return Err(Error::InvalidConfig(
                "moment window must be positive".into(),
            ));
        }
        Ok(MomentAccumulator {
            capacity,
            window: VecDeque::with_capacity(capacity),
            shift: 0.0,
            sums: [0.0; 4],
            evictions: 0,
            peak: 0.0,
            limit: REBASE_TOLERANCE,
            rebases: 0,
        })
    }

    /// Number of times the power sums were rebuilt.
    pub fn rebases(&self) -> u64 {
        self.rebases
    }

    pub fn capacity(&self) -> usize {
        self.capacity
    }

    pub fn len(&self) -> usize {
        self.window.len()
    }

    pub fn is_empty(&self) -> bool {
        self.window.is_empty()
    }

    pub fn values(&self) -> impl Iterator<Item = f64> + '_ {
        self.window.iter().copied()
    }

    fn add(&mut self, x: f64, sign: f64) {
        let d = x - self.shift;
        self.peak = self.peak.max(d.abs());
        let d2 = d * d;
        self.sums[0] += sign * d;
        self.sums[1] += sign * d2;
        self.sums[2] += sign * d2 * d;
        self.sums[3] += sign * d2 * d2;
    }

    /// `eps * (peak^2 / m2)^2`; 0 when the window has no spread.
    fn error_ratio(&self) -> f64 {
        let n = self.window.len() as f64;
        let m = self.sums[0] / n;
        let m2 = self.sums[1] / n - m * m;
        if m2 <= 0.0 {
            return 0.0;
        }
        let r = self.peak * self.peak / m2;
        f64::EPSILON * r * r
    }

    fn rebase(&mut self) {
        let n = self.window.len() as f64;
        self.shift += self.sums[0] / n;
        if !self.shift.is_finite() {
            self.shift = self.window.front().copied().unwrap_or(0.0);
        }
        self.sums = [0.0; 4];
        self.peak = 0.0;
        for i in 0..self.window.len() {
            self.add(self.window[i], 1.0);
        }
        self.evictions = 0;
        self.rebases += 1;
        // spread inside the window itself cannot be removed by rebasing
        self.limit = REBASE_TOLERANCE.max(4.0 * self.error_ratio());
    }

    /// Appends `x`, evicting the oldest value when full. Returns the evicted
    /// value.
    pub fn push(&mut self, x: f64) -> Result<Option<f64>> {
        if !x.is_finite() {
            return Err(Error::NonNumeric {
                feature: "moment input".into(),
                value: x.to_string(),
            });
        }
        if self.window.is_empty() {
            self.shift = x;
            self.sums = [0.0; 4];
            self.peak = 0.0;
            self.limit = REBASE_TOLERANCE;
        }
        let evicted = if self.window.len() == self.capacity {
            let old = self.window.pop_front();
            if let Some(old) = old {
                self.add(old, -1.0);
                self.evictions += 1;
            }
            old
        } else {
            None
        };
        self.window.push_back(x);
        self.add(x, 1.0);
        let overflowed = !self.sums.iter().all(|s| s.is_finite());
        if overflowed || self.evictions >= self.capacity || self.error_ratio() > self.limit {
            self.rebase();
        }
        Ok(evicted)
    }

    fn require(&self, needed: usize) -> Result<()> {
        if self.window.len() < needed {
            return Err(Error::InsufficientCount {
                needed,
                have: self.window.len(),
            });
        }
        Ok(())
    }

    /// All four moments. A variance that is indistinguishable from rounding
    /// noise is reported as exactly zero.
    fn moments(&self) -> Moments {
        let n = self.window.len() as f64;
        let [s1, s2, s3, s4] = self.sums.map(|s| s / n);
        let m = s1;
        let m2 = (s2 - m * m).max(0.0);
        let m3 = s3 - 3.0 * m * s2 + 2.0 * m * m * m;
        let m4 = s4 - 4.0 * m * s3 + 6.0 * m * m * s2 - 3.0 * m * m * m * m;
        if !(m2.is_finite() && m3.is_finite() && m4.is_finite()) {
            return self.scaled_moments();
        }
        let scale = (self.shift + m).abs().max(m.abs()).max(f64::MIN_POSITIVE);
        if m2 <= (16.0 * f64::EPSILON * scale).powi(2) {
            return flat(self.shift + m);
        }
        let out = shape(self.shift + m, m2, m3, m4.max(0.0));
        if out.skewness.is_finite() && out.kurtosis.is_finite() {
            out
        } else {
            self.scaled_moments()
        }
    }

    /// Two-pass moments of the window divided by its largest magnitude, for
    /// values whose powers overflow or underflow.
    fn scaled_moments(&self) -> Moments {
        let n = self.window.len() as f64;
        let big = self.values().fold(0.0f64, |a, x| a.max(x.abs()));
        if big == 0.0 {
            return flat(0.0);
        }
        let mean = self.values().map(|x| x / big).sum::<f64>() / n;
        let mut c = [0.0; 3];
        for x in self.values() {
            let d = x / big - mean;
            c[0] += d * d;
            c[1] += d * d * d;
            c[2] += d * d * d * d;
        }
        let [m2, m3, m4] = c.map(|v| v / n);
        if m2 <= (16.0 * f64::EPSILON * mean.abs().max(f64::MIN_POSITIVE)).powi(2) {
            return flat(mean * big);
        }
        let mut m = shape(mean * big, m2, m3, m4);
        m.variance = m2 * big * big;
        m
    }

    pub fn mean(&self) -> Result<f64> {
        self.require(1)?;
        Ok(self.moments().mean)
    }

    pub fn variance(&self) -> Result<f64> {
        self.require(2)?;
        Ok(self.moments().variance)
    }

    /// `m3 / m2^1.5`, 0 at zero variance.
    pub fn skewness(&self) -> Result<f64> {
        self.require(3)?;
        Ok(self.moments().skewness)
    }

    /// `m4 / m2^2 - 3`, 0 at zero variance.
    pub fn kurtosis(&self) -> Result<f64> {
        self.require(4)?;
        Ok(self.moments().kurtosis)
    }

    pub fn query(&self) -> Result<Moments> {
        self.require(4)?;
        Ok(self.moments())
    }
}

fn flat(mean: f64) -> Moments {
    Moments {
        mean,
        variance: 0.0,
        skewness: 0.0,
        kurtosis: 0.0,
    }
}

fn shape(mean: f64, m2: f64, m3: f64, m4: f64) -> Moments {
    Moments {
        mean,
        variance: m2,
        skewness: m3 / m2.powf(1.5),
        kurtosis: m4 / (m2 * m2) - 3.0,
    }
}

pub fn moments_push(acc: &mut MomentAccumulator, x: f64) -> Result<()> {
    acc.push(x).map(|_| ())
}

/// All four moments; needs at least 4 retained values.
pub fn moments_query(acc: &MomentAccumulator) -> Result<Moments> {
    acc.query()
}

/// Rolling moments of every feature column over a trailing window of
/// `window` rows. One output row per input row once the window is full, with
/// columns `<name>_mean`, `<name>_var`, `<name>_skew`, `<name>_kurt`; labels
/// follow the last row of each window.
pub fn rolling_features(data: &Dataset, window: usize) -> Result<Dataset> {
    if window < 4 {
        return Err(Error::InvalidConfig(format!(
            "feature window must hold at least 4 samples, got {window}"
        )));
    }
    let names: Vec<String> = data
        .feature_names()
        .iter()
        .flat_map(|n| ["mean", "var", "skew", "kurt"].map(|s| format!("{n}_{s}")))
        .collect();
    let mut out = if data.labels().is_some() {
        Dataset::with_labels(names)
    } else {
        Dataset::new(names)
    };
    let mut accs = (0..data.width())
        .map(|_| MomentAccumulator::new(window))
        .collect::<Result<Vec<_>>>()?;
    for (r, row) in data.rows().enumerate() {
        for (c, (acc, v)) in accs.iter_mut().zip(row).enumerate() {
            let x = v.as_num().ok_or_else(|| Error::NonNumeric {
                feature: data.feature_names()[c].clone(),
                value: v.to_string(),
            })?;
            acc.push(x)?;
        }
        if accs.first().is_some_and(|a| a.len() == window) {
            let mut cells = Vec::with_capacity(4 * accs.len());
            for acc in &accs {
                let m = acc.query()?;
                cells.extend([m.mean, m.variance, m.skewness, m.kurtosis].map(Value::Num));
            }
            out.push_row(cells, data.labels().map(|l| l[r].clone()));
        }
    }
    Ok(out)
}
