//! Incremental groupwise monitoring over a sliding window of samples.
//!
//! The window stores one packed hit mask per retained sample and keeps the
//! per-rule counts current, so each push costs `O(N_r)` regardless of the
//! window length.

mod moments;

use std::collections::VecDeque;
use std::io::Write;

use crate::data::{Record, Value};
use crate::detection::{BaselineFile, DetectionReport, Mode, Verdict};
use crate::error::{Error, Result};
use crate::histogram::{HitHistogram, Origin};
use crate::ruleset::{iter_ones, ruleset_hits, BoundRuleset, HitMask, Ruleset};

pub use moments::{moments_push, moments_query, rolling_features, MomentAccumulator, Moments};

/// The last `capacity` hit masks and their per-rule counts.
#[derive(Clone, Debug)]
pub struct SlidingWindow {
    capacity: usize,
    n_rules: usize,
    words_per_mask: usize,
    ring: Vec<u64>,
    head: usize,
    fill: usize,
    counts: Vec<u32>,
    pushed: u64,
    ops: u64,
    scratch: HitMask,
}

impl SlidingWindow {
    pub fn new(capacity: usize, n_rules: usize) -> Result<SlidingWindow> {
        if capacity == 0 || u32::try_from(capacity).is_err() {
            return Err(Error::InvalidConfig(format!(
                "invalid window capacity {capacity}"
            )));
        }
        let words_per_mask = n_rules.div_ceil(64);
        Ok(SlidingWindow {
            capacity,
            n_rules,
            words_per_mask,
            ring: vec![0; capacity * words_per_mask],
            head: 0,
            fill: 0,
            counts: vec![0; n_rules],
            pushed: 0,
            ops: 0,
            scratch: HitMask::new(n_rules),
        })
    }

    pub fn capacity(&self) -> usize {
        self.capacity
    }

    pub fn n_rules(&self) -> usize {
        self.n_rules
    }

    pub fn fill(&self) -> usize {
        self.fill
    }

    pub fn is_full(&self) -> bool {
        self.fill == self.capacity
    }

    /// Current per-rule hit counts over the retained samples.
    pub fn counts(&self) -> &[u32] {
        &self.counts
    }

    /// Total samples pushed since creation.
    pub fn pushed(&self) -> u64 {
        self.pushed
    }

    /// Elementary update operations performed so far (words scanned plus
    /// counters touched).
    pub fn ops(&self) -> u64 {
        self.ops
    }

    pub fn push_mask(&mut self, mask: &HitMask) -> Result<()> {
        if mask.len() != self.n_rules {
            return Err(Error::LengthMismatch {
                expected: self.n_rules,
                found: mask.len(),
            });
        }
        let w = self.words_per_mask;
        let slot = &mut self.ring[self.head * w..(self.head + 1) * w];
        if self.fill == self.capacity {
            for i in iter_ones(slot) {
                self.counts[i] -= 1;
                self.ops += 1;
            }
            self.ops += w as u64;
        } else {
            self.fill += 1;
        }
        slot.copy_from_slice(mask.words());
        for i in mask.ones() {
            self.counts[i] += 1;
            self.ops += 1;
        }
        self.ops += w as u64;
        self.head = (self.head + 1) % self.capacity;
        self.pushed += 1;
        Ok(())
    }

    /// Evaluates `row` and pushes its mask. An evaluation error leaves the
    /// window unchanged.
    pub fn push_row(&mut self, bound: &BoundRuleset, row: &[Value]) -> Result<()> {
        let mut mask = std::mem::replace(&mut self.scratch, HitMask::new(0));
        let res = bound
            .hits_into(row, &mut mask)
            .and_then(|()| self.push_mask(&mask));
        self.scratch = mask;
        res
    }

    pub fn push_record<R: Record + ?Sized>(&mut self, ruleset: &Ruleset, sample: &R) -> Result<()> {
        let mask = ruleset_hits(ruleset, sample)?;
        self.push_mask(&mask)
    }

    /// Histogram of the retained samples, normalized by the current fill.
    pub fn histogram(&self, origin: Origin) -> Result<HitHistogram> {
        if self.fill == 0 {
            return Err(Error::EmptyInput("window"));
        }
        HitHistogram::from_counts(self.counts.clone(), self.fill as u32, origin)
    }

    /// Retained masks, oldest first.
    pub fn masks(&self) -> impl Iterator<Item = HitMask> + '_ {
        let start = (self.head + self.capacity - self.fill) % self.capacity;
        (0..self.fill).map(move |k| {
            let slot = (start + k) % self.capacity;
            let words = &self.ring[slot * self.words_per_mask..(slot + 1) * self.words_per_mask];
            let mut m = HitMask::new(self.n_rules);
            for i in iter_ones(words) {
                m.set(i);
            }
            m
        })
    }
}

/// Pushes one sample and returns the window histogram.
pub fn window_push<R: Record + ?Sized>(
    window: &mut SlidingWindow,
    sample: &R,
    ruleset: &Ruleset,
) -> Result<HitHistogram> {
    window.push_record(ruleset, sample)?;
    window.histogram(Origin::Operational)
}

/// One detection result of a stream.
#[derive(Clone, Debug, PartialEq)]
pub struct TickRecord {
    /// Zero-based index of the most recent sample in the window.
    pub sample_index: u64,
    pub report: DetectionReport,
}

impl TickRecord {
    pub fn verdict(&self) -> Verdict {
        self.report.verdict
    }
}

/// Runs batch detection on the full window. Single mode uses the window
/// histogram; group mode uses `snapshots`, the operational group ordered
/// oldest first.
pub fn stream_detect(
    window: &SlidingWindow,
    file: &BaselineFile,
    snapshots: &[HitHistogram],
) -> Result<TickRecord> {
    if !window.is_full() {
        return Err(Error::WindowNotFull {
            fill: window.fill(),
            capacity: window.capacity(),
        });
    }
    let report = match file.baselines.mode() {
        Mode::Single => file.detect(&[window.histogram(Origin::Operational)?])?,
        Mode::Group => file.detect(snapshots)?,
    };
    Ok(TickRecord {
        sample_index: window.pushed() - 1,
        report,
    })
}

#[derive(Clone, Copy, Debug, PartialEq, Eq)]
pub struct StreamConfig {
    /// Window length in samples.
    pub capacity: usize,
    /// Pushes between detections once the monitor is warm.
    pub tick_stride: usize,
    /// Pushes between the group-mode snapshots; defaults to
    /// `capacity / N_op`.
    pub group_stride: Option<usize>,
}

impl StreamConfig {
    pub fn new(capacity: usize) -> StreamConfig {
        StreamConfig {
            capacity,
            tick_stride: 1,
            group_stride: None,
        }
    }
}

/// A sliding window wired to a baseline file.
///
/// In group mode the operational group at sample `t` is the set of full
/// windows ending at `t - j * stride` for `j = 0..N_op`.
#[derive(Debug)]
pub struct StreamMonitor<'a> {
    file: &'a BaselineFile,
    bound: BoundRuleset,
    window: SlidingWindow,
    tick_stride: usize,
    group_stride: usize,
    history: VecDeque<HitHistogram>,
    history_len: usize,
    until_tick: usize,
}

impl<'a> StreamMonitor<'a> {
    /// `columns` names the fields of the rows that will be pushed.
    pub fn new(
        file: &'a BaselineFile,
        ruleset: &Ruleset,
        columns: &[String],
        config: StreamConfig,
    ) -> Result<StreamMonitor<'a>> {
        file.verify(&ruleset.digest())?;
        if config.tick_stride == 0 {
            return Err(Error::InvalidConfig("tick stride must be positive".into()));
        }
        if config.capacity != file.baselines.split_size as usize {
            log::warn!(
                "window length {} differs from the baseline split size {}; expect extra false positives",
                config.capacity,
                file.baselines.split_size
            );
        }
        let (group_stride, history_len) = match file.baselines.mode() {
            Mode::Single => (1, 0),
            Mode::Group => {
                let n_op = file.baselines.config.n_op;
                let stride = config.group_stride.unwrap_or(config.capacity / n_op).max(1);
                (stride, (n_op - 1) * stride + 1)
            }
        };
        Ok(StreamMonitor {
            file,
            bound: ruleset.bind(columns)?,
            window: SlidingWindow::new(config.capacity, ruleset.len())?,
            tick_stride: config.tick_stride,
            group_stride,
            history: VecDeque::with_capacity(history_len),
            history_len,
            until_tick: 0,
        })
    }

    pub fn window(&self) -> &SlidingWindow {
        &self.window
    }

    /// Pushes one row; returns a record when a detection tick falls on it.
    pub fn push_row(&mut self, row: &[Value]) -> Result<Option<TickRecord>> {
        self.window.push_row(&self.bound, row)?;
        if !self.window.is_full() {
            return Ok(None);
        }
        if self.history_len > 0 {
            if self.history.len() == self.history_len {
                self.history.pop_front();
            }
            self.history
                .push_back(self.window.histogram(Origin::Operational)?);
            if self.history.len() < self.history_len {
                return Ok(None);
            }
        }
        if self.until_tick > 0 {
            self.until_tick -= 1;
            return Ok(None);
        }
        self.until_tick = self.tick_stride - 1;
        let group = self.group();
        stream_detect(&self.window, self.file, &group).map(Some)
    }

    /// The current operational group, oldest first; empty in single mode.
    pub fn group(&self) -> Vec<HitHistogram> {
        if self.history.len() < self.history_len || self.history_len == 0 {
            return Vec::new();
        }
        self.history
            .iter()
            .step_by(self.group_stride)
            .cloned()
            .collect()
    }
}

pub const TICK_COLUMNS: [&str; 7] = [
    "sample_index",
    "metric",
    "value",
    "base_min",
    "base_max",
    "flag",
    "verdict",
];

/// Writes tick records as flat CSV, one row per metric per tick.
pub struct TickWriter<W: Write> {
    inner: csv::Writer<W>,
}

impl<W: Write> TickWriter<W> {
    pub fn new(writer: W) -> Result<TickWriter<W>> {
        let mut inner = csv::Writer::from_writer(writer);
        inner.write_record(TICK_COLUMNS)?;
        Ok(TickWriter { inner })
    }

    pub fn write(&mut self, tick: &TickRecord) -> Result<()> {
        let verdict = tick.verdict().to_string();
        for (metric, o) in &tick.report.per_metric {
            self.inner.write_record([
                tick.sample_index.to_string(),
                metric.to_string(),
                o.value.to_string(),
                o.baseline.min.to_string(),
                o.baseline.max.to_string(),
                u8::from(o.flag).to_string(),
                verdict.clone(),
            ])?;
        }
        Ok(())
    }

    pub fn finish(mut self) -> Result<W> {
        self.inner.flush()?;
        self.inner
            .into_inner()
            .map_err(|e| Error::Io(e.into_error()))
    }
}
