use std::path::Path;

use anyhow::{bail, Context};
use rule_ood::detection::{Metric, Mode};
use rule_ood::metrics::SIGMA_FLOOR;
use serde::{Deserialize, Serialize};

/// Settings shared by every subcommand, echoed into each report.
#[derive(Clone, Debug, PartialEq, Serialize)]
pub struct RunConfig {
    pub mode: Mode,
    pub n_s: usize,
    pub n_tr: usize,
    pub n_op: usize,
    pub seed: u64,
    pub sigma_floor: f64,
    pub metrics: Vec<Metric>,
    pub label_column: String,
    pub stride: usize,
    pub group_stride: Option<usize>,
    pub repetitions: usize,
    pub max_depth: usize,
    pub min_leaf: usize,
}

pub const FULL_REPETITIONS: usize = 2500;

/// The config file: flat keys mirroring [`RunConfig`], all optional.
#[derive(Clone, Debug, Default, Deserialize)]
#[serde(deny_unknown_fields)]
pub struct ConfigFile {
    pub mode: Option<Mode>,
    pub n_s: Option<usize>,
    pub n_tr: Option<usize>,
    pub n_op: Option<usize>,
    pub seed: Option<u64>,
    pub sigma_floor: Option<f64>,
    pub metrics: Option<Vec<Metric>>,
    pub label_column: Option<String>,
    pub stride: Option<usize>,
    pub group_stride: Option<usize>,
    pub repetitions: Option<usize>,
    pub full_scale: Option<bool>,
    pub max_depth: Option<usize>,
    pub min_leaf: Option<usize>,
}

impl ConfigFile {
    pub fn load(path: &Path) -> anyhow::Result<ConfigFile> {
        let text = std::fs::read_to_string(path)
            .with_context(|| format!("reading config {}", path.display()))?;
        toml::from_str(&text).with_context(|| format!("parsing config {}", path.display()))
    }

    /// Values from `over` win.
    pub fn overlay(self, over: ConfigFile) -> ConfigFile {
        ConfigFile {
            mode: over.mode.or(self.mode),
            n_s: over.n_s.or(self.n_s),
            n_tr: over.n_tr.or(self.n_tr),
            n_op: over.n_op.or(self.n_op),
            seed: over.seed.or(self.seed),
            sigma_floor: over.sigma_floor.or(self.sigma_floor),
            metrics: over.metrics.or(self.metrics),
            label_column: over.label_column.or(self.label_column),
            stride: over.stride.or(self.stride),
            group_stride: over.group_stride.or(self.group_stride),
            repetitions: over.repetitions.or(self.repetitions),
            full_scale: over.full_scale.or(self.full_scale),
            max_depth: over.max_depth.or(self.max_depth),
            min_leaf: over.min_leaf.or(self.min_leaf),
        }
    }

    pub fn resolve(self) -> anyhow::Result<RunConfig> {
        let mode = self.mode.unwrap_or(Mode::Single);
        let full = self.full_scale.unwrap_or(false);
        let n_op = self.n_op.unwrap_or(match mode {
            Mode::Single => 1,
            Mode::Group => 10,
        });
        if mode == Mode::Group && n_op < 2 {
            bail!("group mode needs at least 2 operational splits (got n_op = {n_op})");
        }
        let config = RunConfig {
            mode,
            n_s: self.n_s.unwrap_or(5000),
            n_tr: self.n_tr.unwrap_or(50),
            n_op,
            seed: self.seed.unwrap_or(0),
            sigma_floor: self.sigma_floor.unwrap_or(SIGMA_FLOOR),
            metrics: self.metrics.unwrap_or_else(|| Metric::default_roster(mode)),
            label_column: self.label_column.unwrap_or_else(|| "label".into()),
            stride: self.stride.unwrap_or(1),
            group_stride: self.group_stride,
            repetitions: self
                .repetitions
                .unwrap_or(if full { FULL_REPETITIONS } else { 200 }),
            max_depth: self.max_depth.unwrap_or(4),
            min_leaf: self.min_leaf.unwrap_or(50),
        };
        if config.n_s == 0 || config.n_tr == 0 || config.stride == 0 {
            bail!("n_s, n_tr and stride must be positive");
        }
        Ok(config)
    }
}
