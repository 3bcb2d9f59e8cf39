use std::fs::File;
use std::io::{self, BufReader, BufWriter, Read, Write};
use std::path::{Path, PathBuf};

use anyhow::{bail, Context};
use clap::ValueEnum;
use rule_ood::detection::{BaselineConfig, BaselineFile, DetectionReport, Mode};
use rule_ood::eval::{evaluate, induce_from_source, EvalConfig, EvalSummary};
use rule_ood::histogram::{HitTable, Origin};
use rule_ood::inducer::{design_warnings, InducerConfig};
use rule_ood::streaming::{rolling_features, StreamConfig, StreamMonitor, TickRecord, TickWriter};
use rule_ood::synth::{DatasetSource, GaussianMixture, GridSource, SampleSource};
use rule_ood::{
    build_baselines, format_ruleset, hit_matrix, induce_tree, make_splits, parse_ruleset,
    tree_to_rules, CsvRows, Dataset, Exec, Ruleset,
};
use serde::Serialize;

use crate::config::{ConfigFile, RunConfig};
use crate::{Common, Format, EXIT_OOD};

type Emit = Box<dyn FnMut(&TickRecord) -> anyhow::Result<()>>;

#[derive(Clone, Copy, Debug, PartialEq, Eq, ValueEnum)]
pub enum Generator {
    /// Two-class Gaussian mixture; the candidate is mean-shifted.
    Mixture,
    /// Binned uniform grid; the candidate is tilted toward high bins.
    Grid,
}

pub enum Sources {
    Files(PathBuf, PathBuf),
    Generated {
        generator: Generator,
        shift: f64,
        shifted_features: usize,
    },
}

fn load_rules(c: &Common) -> anyhow::Result<Ruleset> {
    let path = c.rules.as_ref().context("--rules is required")?;
    let text = std::fs::read_to_string(path)
        .with_context(|| format!("reading rules {}", path.display()))?;
    parse_ruleset(&text).with_context(|| format!("parsing rules {}", path.display()))
}

fn read_baseline(c: &Common) -> anyhow::Result<BaselineFile> {
    let path = c.baseline.as_ref().context("--baseline is required")?;
    BaselineFile::read(path).with_context(|| format!("reading baseline {}", path.display()))
}

fn output(path: Option<&Path>) -> anyhow::Result<Box<dyn Write>> {
    Ok(match path {
        Some(p) => Box::new(BufWriter::new(
            File::create(p).with_context(|| format!("creating {}", p.display()))?,
        )),
        None => Box::new(BufWriter::new(io::stdout().lock())),
    })
}

fn write_json<T: Serialize>(out: &mut dyn Write, value: &T) -> anyhow::Result<()> {
    serde_json::to_writer_pretty(&mut *out, value)?;
    writeln!(out)?;
    Ok(())
}

pub fn induce(s: &RunConfig, data: &Path, out: Option<&Path>) -> anyhow::Result<u8> {
    let ds = Dataset::from_csv_path(data, Some(&s.label_column))
        .with_context(|| format!("reading {}", data.display()))?;
    let config = InducerConfig {
        max_depth: s.max_depth,
        min_leaf: s.min_leaf,
    };
    let rules = tree_to_rules(&induce_tree(&ds, &config, Exec::default())?)?;
    let bound = rules.bind(ds.feature_names())?;
    let table = HitTable::compute(&bound, &ds, Exec::default())?;
    let all: Vec<usize> = (0..ds.len()).collect();
    for w in design_warnings(&rules, &[table.histogram(&all, Origin::Training)?]) {
        log::warn!("{w}");
    }
    log::info!("induced {} rules from {} rows", rules.len(), ds.len());
    let mut w = output(out)?;
    w.write_all(format_ruleset(&rules).as_bytes())?;
    w.flush()?;
    Ok(0)
}

pub fn baseline(c: &Common, s: &RunConfig, data: &Path) -> anyhow::Result<u8> {
    let rules = load_rules(c)?;
    let path = c.baseline.as_ref().context("--baseline is required")?;
    let ds = Dataset::load(data, &s.label_column)
        .with_context(|| format!("reading {}", data.display()))?;
    let exec = Exec::default();
    let splits = make_splits(&ds, s.n_s, s.n_tr, s.seed, Origin::Training)?;
    let training = hit_matrix(&rules, &ds, &splits, &[], exec)?;
    for w in design_warnings(&rules, training.training()) {
        log::warn!("{w}");
    }
    let config = BaselineConfig {
        mode: s.mode,
        n_op: s.n_op,
        seed: s.seed,
        sigma_floor: s.sigma_floor,
        metrics: s.metrics.clone(),
    };
    let baselines = build_baselines(&training, &config, exec)?;
    let file = BaselineFile {
        baselines,
        training,
    };
    file.write(path)
        .with_context(|| format!("writing baseline {}", path.display()))?;
    let mut out = output(None)?;
    match c.format.unwrap_or(Format::Json) {
        Format::Json => write_json(&mut out, &file.baselines)?,
        Format::Csv => {
            writeln!(out, "metric,min,max")?;
            for &m in &file.baselines.config.metrics {
                if let Some(i) = file.baselines.interval(m) {
                    writeln!(out, "{m},{},{}", i.min, i.max)?;
                }
            }
        }
    }
    out.flush()?;
    Ok(0)
}

#[derive(Serialize)]
struct DetectEcho<'a> {
    mode: Mode,
    n_s: u32,
    n_tr: usize,
    n_op: usize,
    baseline_seed: u64,
    split_seed: u64,
    sigma_floor: f64,
    metrics: &'a [rule_ood::Metric],
    fingerprint: &'a str,
    data: &'a Path,
    rows: usize,
}

#[derive(Serialize)]
struct DetectOutput<'a> {
    config: DetectEcho<'a>,
    report: &'a DetectionReport,
}

fn report_csv(
    out: &mut dyn Write,
    prefix: Option<u64>,
    report: &DetectionReport,
) -> io::Result<()> {
    for (m, o) in &report.per_metric {
        if let Some(t) = prefix {
            write!(out, "{t},")?;
        }
        writeln!(
            out,
            "{m},{},{},{},{},{},{},{}",
            o.value,
            o.baseline.min,
            o.baseline.max,
            o.votes_out,
            o.votes_total,
            u8::from(o.flag),
            report.verdict
        )?;
    }
    Ok(())
}

pub fn detect(c: &Common, s: &RunConfig, data: &Path) -> anyhow::Result<u8> {
    let rules = load_rules(c)?;
    let file = read_baseline(c)?;
    file.verify(&rules.digest())?;
    let b = &file.baselines;
    if c.mode.is_some_and(|m| m != b.mode()) {
        log::warn!(
            "--mode ignored; the baseline was built in {} mode",
            b.mode()
        );
    }
    let ds = Dataset::load(data, &s.label_column)
        .with_context(|| format!("reading {}", data.display()))?;
    let exec = Exec::default();
    let splits = make_splits(
        &ds,
        b.split_size as usize,
        b.config.n_op,
        s.seed,
        Origin::Operational,
    )?;
    let bound = rules.bind(ds.feature_names())?;
    let hists = HitTable::compute(&bound, &ds, exec)?.histograms(&splits, exec)?;
    let report = file.detect(&hists)?;
    let mut out = output(None)?;
    match c.format.unwrap_or(Format::Json) {
        Format::Json => write_json(
            &mut out,
            &DetectOutput {
                config: DetectEcho {
                    mode: b.mode(),
                    n_s: b.split_size,
                    n_tr: b.n_tr,
                    n_op: b.config.n_op,
                    baseline_seed: b.config.seed,
                    split_seed: s.seed,
                    sigma_floor: b.config.sigma_floor,
                    metrics: &b.config.metrics,
                    fingerprint: &b.fingerprint,
                    data,
                    rows: ds.len(),
                },
                report: &report,
            },
        )?,
        Format::Csv => {
            writeln!(
                out,
                "metric,value,base_min,base_max,votes_out,votes_total,flag,verdict"
            )?;
            report_csv(&mut out, None, &report)?;
        }
    }
    out.flush()?;
    eprintln!("verdict: {}", report.verdict);
    Ok(if report.is_ood() { EXIT_OOD } else { 0 })
}

#[derive(Serialize)]
struct TickLine<'a> {
    sample_index: u64,
    report: &'a DetectionReport,
}

pub fn stream(
    c: &Common,
    s: &RunConfig,
    data: Option<&Path>,
    window: Option<usize>,
) -> anyhow::Result<u8> {
    let rules = load_rules(c)?;
    let file = read_baseline(c)?;
    let input: Box<dyn Read> = match data {
        Some(p) => Box::new(BufReader::new(
            File::open(p).with_context(|| format!("opening {}", p.display()))?,
        )),
        None => Box::new(io::stdin().lock()),
    };
    let mut rows = CsvRows::new(input, Some(&s.label_column), false)?;
    let columns = rows.feature_names().to_vec();
    let config = StreamConfig {
        capacity: window.unwrap_or(file.baselines.split_size as usize),
        tick_stride: s.stride,
        group_stride: s.group_stride,
    };
    let mut monitor = StreamMonitor::new(&file, &rules, &columns, config)?;
    let format = c.format.unwrap_or(Format::Csv);
    let mut ticks = 0u64;
    let mut ood = 0u64;
    let mut emit: Emit = match format {
        Format::Csv => {
            let mut w = TickWriter::new(BufWriter::new(io::stdout().lock()))?;
            Box::new(move |t| Ok(w.write(t)?))
        }
        Format::Json => {
            let mut w = BufWriter::new(io::stdout().lock());
            Box::new(move |t| {
                serde_json::to_writer(
                    &mut w,
                    &TickLine {
                        sample_index: t.sample_index,
                        report: &t.report,
                    },
                )?;
                writeln!(w)?;
                Ok(())
            })
        }
    };
    let mut line = 0u64;
    while let Some(row) = rows.next_row() {
        line += 1;
        let (values, _) = row.with_context(|| format!("data row {line}"))?;
        if let Some(tick) = monitor
            .push_row(&values)
            .with_context(|| format!("data row {line}"))?
        {
            ticks += 1;
            ood += u64::from(tick.report.is_ood());
            emit(&tick)?;
        }
    }
    drop(emit);
    io::stdout().flush()?;
    if ticks == 0 {
        log::warn!(
            "stream ended after {line} rows without a full window of {}",
            config.capacity
        );
    }
    eprintln!("{ticks} ticks, {ood} out-of-distribution");
    Ok(if ood > 0 { EXIT_OOD } else { 0 })
}

pub fn eval(
    c: &Common,
    settings: ConfigFile,
    sources: Sources,
    induce_samples: usize,
) -> anyhow::Result<u8> {
    let explicit_mode = settings.mode;
    let n_op = settings.n_op.unwrap_or(10);
    let r = ConfigFile {
        n_op: Some(n_op),
        ..settings
    }
    .resolve()?;
    if c.metrics.is_some() {
        log::warn!("--metrics ignored; eval uses the default roster of each mode");
    }
    let modes = explicit_mode.map_or(vec![Mode::Single, Mode::Group], |m| vec![m]);
    let config = EvalConfig {
        n_s: r.n_s,
        n_tr: r.n_tr,
        n_op,
        repetitions: r.repetitions,
        seed: r.seed,
        sigma_floor: r.sigma_floor,
        modes,
    };
    let inducer = InducerConfig {
        max_depth: r.max_depth,
        min_leaf: r.min_leaf,
    };
    let exec = Exec::default();
    let (in_src, out_src, scenario, aligned): (
        Box<dyn SampleSource>,
        Box<dyn SampleSource>,
        String,
        Option<Ruleset>,
    ) = match sources {
        Sources::Files(i, o) => {
            let load = |p: &Path| {
                Dataset::load(p, &r.label_column)
                    .with_context(|| format!("reading {}", p.display()))
            };
            let scenario = format!("{} vs {}", i.display(), o.display());
            (
                Box::new(DatasetSource { data: load(&i)? }),
                Box::new(DatasetSource { data: load(&o)? }),
                scenario,
                None,
            )
        }
        Sources::Generated {
            generator: Generator::Mixture,
            shift,
            shifted_features,
        } => {
            let base = GaussianMixture::two_class();
            let out = base.shifted(shift, shifted_features);
            (
                Box::new(base),
                Box::new(out),
                format!("mixture shifted {shift} sigma on {shifted_features} features"),
                None,
            )
        }
        Sources::Generated {
            generator: Generator::Grid,
            shift,
            shifted_features,
        } => {
            let base = GridSource::uniform(shifted_features.max(1), 4);
            let aligned = base.aligned_rules()?;
            let out = base.tilted(shift);
            (
                Box::new(base),
                Box::new(out),
                format!("grid tilted by {shift} on {shifted_features} features"),
                Some(aligned),
            )
        }
    };
    let rules = match (&c.rules, aligned) {
        (Some(_), _) => load_rules(c)?,
        (None, Some(a)) => a,
        (None, None) => {
            let rules = induce_from_source(in_src.as_ref(), induce_samples, &inducer, r.seed, exec)
                .context("inducing rules from the in-distribution source")?;
            log::info!("induced ruleset:\n{}", format_ruleset(&rules));
            rules
        }
    };
    let summary = evaluate(
        &rules,
        in_src.as_ref(),
        out_src.as_ref(),
        &config,
        scenario,
        exec,
    )?;
    let mut out = output(None)?;
    match c.format.unwrap_or(Format::Json) {
        Format::Json => write_json(&mut out, &summary)?,
        Format::Csv => eval_csv(&mut out, &summary)?,
    }
    out.flush()?;
    Ok(0)
}

fn eval_csv(out: &mut dyn Write, s: &EvalSummary) -> io::Result<()> {
    writeln!(
        out,
        "mode,repetitions,false_positives,false_negatives,fpr,fnr"
    )?;
    for m in &s.modes {
        writeln!(
            out,
            "{},{},{},{},{},{}",
            m.mode, s.config.repetitions, m.false_positives, m.false_negatives, m.fpr, m.fnr
        )?;
    }
    Ok(())
}

pub fn featurize(
    s: &RunConfig,
    data: &Path,
    window: usize,
    out: Option<&Path>,
) -> anyhow::Result<u8> {
    let ds = Dataset::load(data, &s.label_column)
        .with_context(|| format!("reading {}", data.display()))?;
    if ds.len() < window {
        bail!("{} rows is fewer than the window of {window}", ds.len());
    }
    let features = rolling_features(&ds, window)?;
    let mut w = output(out)?;
    features.write_csv(&mut w, &s.label_column)?;
    w.flush()?;
    Ok(0)
}
