//! The four subcommands. Each takes a resolved [`ExperimentConfig`] and
//! returns a [`CmdError`] whose kind decides the process exit code.

use std::collections::BTreeMap;
use std::fs;
use std::path::{Path, PathBuf};

use altune_core::beamsim::{generate_record, DatasetConfig, SampleRecord, DEFAULT_BINS};
use altune_core::net::{train_with, EpochLog, Example, NetworkWeights};
use altune_core::tuner::{
    adapt, baseline_snapshots, check_scenario, dither_neighbourhood_cost, make_stale_guess, scenario, HiddenEvaluator,
    HiddenSeries, LatentCostModel, MeasurementChannel, OracleMeasurement, ShiftKind, TuningSummary,
};
use altune_core::{AxisPair, ImageGrid, LatentVector};
use anyhow::{anyhow, Context};
use rayon::prelude::*;
use serde::{Deserialize, Serialize};

use crate::config::ExperimentConfig;
use crate::formats::{self, check_version, format_version, ImageDump};

/// Why a command failed: bad invocation or input (exit 1) or a fault while
/// running (exit 2).
#[derive(Debug, thiserror::Error)]
pub enum CmdError {
    #[error("{0:#}")]
    Usage(anyhow::Error),
    #[error("{0:#}")]
    Runtime(anyhow::Error),
}

impl CmdError {
    pub fn exit_code(&self) -> i32 {
        match self {
            CmdError::Usage(_) => 1,
            CmdError::Runtime(_) => 2,
        }
    }
}

pub type CmdResult<T> = Result<T, CmdError>;

trait RuntimeContext<T> {
    fn runtime(self) -> CmdResult<T>;
}

impl<T, E: Into<anyhow::Error>> RuntimeContext<T> for Result<T, E> {
    fn runtime(self) -> CmdResult<T> {
        self.map_err(|e| CmdError::Runtime(e.into()))
    }
}

/// File-name form of a pair: `(x,x')` becomes `x_xp`.
pub fn pair_slug(pair: AxisPair) -> String {
    let (a, b): (altune_core::Axis, altune_core::Axis) = pair.into();
    format!("{}_{}", a.label().replace('\'', "p"), b.label().replace('\'', "p"))
}

/// Records `0..n` of `cfg`, generated in parallel; identical to the
/// sequential result because every record has its own RNG stream.
pub fn generate_parallel(cfg: &DatasetConfig, n: usize) -> altune_core::Result<Vec<SampleRecord>> {
    cfg.validate()?;
    (0..n as u64).into_par_iter().map(|i| generate_record(cfg, i)).collect()
}

#[derive(Debug, Clone, Serialize, Deserialize)]
pub struct GenSummary {
    pub n: usize,
    pub seed: u64,
    pub min_captured_mass: f64,
    pub mass_check_passed: bool,
}

pub fn gen_data(cfg: &ExperimentConfig, out: &Path) -> CmdResult<GenSummary> {
    cfg.validate().map_err(CmdError::Usage)?;
    let records = generate_parallel(&cfg.dataset, cfg.n_samples).context("generating dataset").runtime()?;
    formats::write_dataset(out, &cfg.dataset, &records).runtime()?;
    let min_mass = records.iter().map(|r| r.min_captured_mass).fold(f64::INFINITY, f64::min);
    let summary = GenSummary {
        n: records.len(),
        seed: cfg.dataset.seed,
        min_captured_mass: min_mass,
        mass_check_passed: min_mass >= altune_core::beamsim::COVERAGE_THRESHOLD,
    };
    println!("wrote {} records to {}", summary.n, out.display());
    println!("seed {}", summary.seed);
    for (i, (lo, hi)) in cfg.dataset.param_ranges.0.iter().enumerate() {
        println!("param p{} in [{lo}, {hi}]", i + 1);
    }
    for (name, (lo, hi)) in altune_core::beamsim::BeamFactors::NAMES.iter().zip(&cfg.dataset.state_ranges.0) {
        println!("factor {name} in [{lo}, {hi}]");
    }
    println!(
        "mass conservation: smallest captured fraction {:.6} ({})",
        min_mass,
        if summary.mass_check_passed { "pass" } else { "FAIL" }
    );
    Ok(summary)
}

fn load_dataset(cfg: &ExperimentConfig, path: &Path) -> CmdResult<Vec<SampleRecord>> {
    let (data_cfg, records) = formats::read_dataset(path).map_err(|e| CmdError::Usage(e.into()))?;
    let g = &data_cfg.grid;
    let spec = &cfg.network;
    if g.input_size != spec.input_size || g.output_size != spec.output_size() || data_cfg.channels != spec.channels {
        return Err(CmdError::Usage(anyhow!(
            "dataset {} (grid {}/{}, channels {:?}) does not match the network config (grid {}/{}, channels {:?})",
            path.display(),
            g.input_size,
            g.output_size,
            data_cfg.channels,
            spec.input_size,
            spec.output_size(),
            spec.channels
        )));
    }
    Ok(records)
}

fn write_loss_csv(path: &Path, epochs: &[EpochLog]) -> CmdResult<()> {
    let mut w = csv::Writer::from_path(path).with_context(|| format!("creating {}", path.display())).runtime()?;
    w.write_record(["epoch", "lr", "loss"]).runtime()?;
    for e in epochs {
        w.write_record([e.epoch.to_string(), e.lr.to_string(), e.loss.to_string()]).runtime()?;
    }
    w.flush().runtime()
}

/// Trains on the dataset at `data` and writes `weights.altw` and
/// `loss.csv` into `out_dir`. On divergence the last good weights go to
/// `weights.last-good.altw` and the command fails.
pub fn train(cfg: &ExperimentConfig, data: &Path, out_dir: &Path) -> CmdResult<PathBuf> {
    cfg.validate().map_err(CmdError::Usage)?;
    let records = load_dataset(cfg, data)?;
    let examples: Vec<Example> = records.iter().map(Example::from).collect();
    fs::create_dir_all(out_dir).with_context(|| format!("creating {}", out_dir.display())).runtime()?;
    let init = NetworkWeights::init(&cfg.network, cfg.training.seed).runtime()?;
    let mut last_good = init.clone();
    let mut logs = Vec::new();
    let result = train_with(&examples, init, &cfg.training, |log, w| {
        println!("epoch {} lr {:e} loss {:.6e}", log.epoch, log.lr, log.loss);
        logs.push(log.clone());
        last_good = w.clone();
    });
    write_loss_csv(&out_dir.join("loss.csv"), &logs)?;
    match result {
        Ok(report) => {
            let path = out_dir.join("weights.altw");
            formats::write_weights(&path, &report.weights).runtime()?;
            println!(
                "initial loss {:.6e}, final loss {:.6e} ({:.1}%), checksum {:016x}",
                report.initial_loss,
                report.final_loss(),
                100.0 * report.final_loss() / report.initial_loss,
                report.weights.checksum()
            );
            Ok(path)
        }
        Err(e) => {
            let path = out_dir.join("weights.last-good.altw");
            formats::write_weights(&path, &last_good).runtime()?;
            Err(CmdError::Runtime(anyhow!("{e}; last good weights saved to {}", path.display())))
        }
    }
}

/// Flag set when a run's final cost is no worse than the dither alone
/// produces around the untuned prediction.
pub const DITHER_FLAG: &str = "baseline within dither neighborhood";

#[derive(Debug, Clone, Serialize, Deserialize)]
pub struct PcaStats {
    pub overlaps: Vec<f64>,
    pub min_overlap: f64,
    pub dominant_overlap: f64,
    pub shifted: bool,
}

#[derive(Debug, Clone, Serialize, Deserialize)]
pub struct RunInputs {
    pub dataset: PathBuf,
    pub weights: PathBuf,
    pub weights_checksum: String,
}

/// `summary.json` of a tuning run.
#[derive(Debug, Clone, Serialize, Deserialize)]
pub struct RunSummary {
    pub format_version: String,
    pub scenario: ShiftKind,
    pub scenario_seed: u64,
    pub multiplier: f64,
    pub inputs: RunInputs,
    pub metrics: TuningSummary,
    pub cost_ratio: f64,
    /// Worst cost within one dither amplitude of `v_Lc = 0`, against the last measurement.
    pub dither_neighbourhood_cost: f64,
    pub within_dither_neighbourhood: bool,
    pub hidden_improved: bool,
    pub pca: PcaStats,
    pub flags: Vec<String>,
    pub fault: Option<String>,
}

fn write_image(dir: &Path, stem: &str, pair: AxisPair, img: &ImageGrid) -> CmdResult<()> {
    formats::write_pgm(&dir.join(format!("{stem}.pgm")), img).runtime()?;
    let dump = ImageDump { format_version: format_version(), pair, image: img.clone() };
    formats::write_json(&dir.join(format!("{stem}.json")), &dump).runtime()
}

fn write_steps_csv(path: &Path, run: &altune_core::tuner::TuningTrajectory, tuned: &HiddenSeries, baseline: &HiddenSeries) -> CmdResult<()> {
    let mut w = csv::Writer::from_path(path).with_context(|| format!("creating {}", path.display())).runtime()?;
    let dim = run.steps.first().map_or(0, |s| s.v_lc.len());
    let mut header: Vec<String> = ["step", "t", "cost", "normalized_cost"].map(String::from).to_vec();
    header.extend((0..dim).map(|i| format!("v_lc_{i}")));
    for p in &tuned.pairs {
        header.push(format!("mse_{}", pair_slug(*p)));
        header.push(format!("baseline_mse_{}", pair_slug(*p)));
    }
    w.write_record(&header).runtime()?;
    let snap_row: BTreeMap<usize, usize> = run.snapshots.iter().enumerate().map(|(i, s)| (s.step, i)).collect();
    for s in &run.steps {
        let mut row = vec![s.step.to_string(), s.t.to_string(), s.cost.to_string(), (s.cost * run.cost_scale).to_string()];
        row.extend(s.v_lc.iter().map(|v| v.to_string()));
        for k in 0..tuned.pairs.len() {
            match snap_row.get(&s.step) {
                Some(&i) => {
                    row.push(tuned.mse[k][i].to_string());
                    row.push(baseline.mse[k][i].to_string());
                }
                None => row.extend([String::new(), String::new()]),
            }
        }
        w.write_record(&row).runtime()?;
    }
    w.flush().runtime()
}

pub struct TuneInputs<'a> {
    pub weights: &'a Path,
    pub data: &'a Path,
    pub out_dir: &'a Path,
}

/// One tuning run against the configured scenario; writes the config echo,
/// per-step CSV, before/after/truth images and `summary.json`. A
/// measurement fault still writes everything, then fails the command.
pub fn tune(cfg: &ExperimentConfig, inputs: TuneInputs<'_>) -> CmdResult<RunSummary> {
    cfg.validate().map_err(CmdError::Usage)?;
    let weights = formats::read_weights(inputs.weights).map_err(|e| CmdError::Usage(e.into()))?;
    if weights.spec() != &cfg.network {
        return Err(CmdError::Usage(anyhow!(
            "weights {} were trained with a different [network] section than the config",
            inputs.weights.display()
        )));
    }
    let records = load_dataset(cfg, inputs.data)?;
    let (data_cfg, _) = formats::read_dataset(inputs.data).map_err(|e| CmdError::Usage(e.into()))?;
    let out = inputs.out_dir;
    fs::create_dir_all(out.join("images")).with_context(|| format!("creating {}", out.display())).runtime()?;
    fs::write(out.join("config.toml"), cfg.to_toml().map_err(CmdError::Usage)?).runtime()?;

    let sc = scenario(cfg.scenario, &data_cfg, &cfg.shift, cfg.scenario_seed).runtime()?;
    let guess = make_stale_guess(&records).runtime()?;
    let source = sc.source(cfg.drift.clone()).runtime()?;
    let grid = data_cfg.grid.clone();
    let mut channel = OracleMeasurement::new(source.clone(), cfg.observable_pair, grid.clone());
    if cfg.measurement_noise > 0.0 {
        channel = channel.with_noise(cfg.measurement_noise, cfg.noise_seed);
    }
    let run = adapt(&weights, &guess, &cfg.tuning, &mut channel).runtime()?;

    // Everything below is evaluation, outside the control loop.
    let evaluator = HiddenEvaluator::new(source.clone(), grid.clone(), cfg.hidden_pairs.clone());
    let model = LatentCostModel::new(&weights, &guess, cfg.observable_pair).runtime()?;
    let tuned = evaluator.evaluate(&run.snapshots).runtime()?;
    let baseline = evaluator.evaluate(&baseline_snapshots(&model, &run).runtime()?).runtime()?;
    let metrics = TuningSummary::new(&run, &tuned, &baseline);
    write_steps_csv(&out.join("steps.csv"), &run, &tuned, &baseline)?;

    let last_t = run.steps.last().map_or(0.0, |s| s.t);
    let measured_last = OracleMeasurement::new(source.clone(), cfg.observable_pair, grid.clone()).measure(last_t).runtime()?;
    let zero = LatentVector::zeros(cfg.network.latent_dim);
    let dither_cost = dither_neighbourhood_cost(&model, &cfg.tuning.es, &zero, &measured_last).runtime()?;
    let within = metrics.final_cost <= dither_cost;

    let before = model.predict(&zero).runtime()?;
    if let Some(last) = run.snapshots.last() {
        let mut truth_pairs = cfg.hidden_pairs.clone();
        truth_pairs.push(cfg.observable_pair);
        let truth = HiddenEvaluator::new(source, grid.clone(), truth_pairs).truth_at(last.t).runtime()?.1;
        for (pair, img) in before.iter() {
            write_image(&out.join("images"), &format!("before_{}", pair_slug(pair)), pair, img)?;
        }
        for (pair, img) in last.prediction.iter() {
            write_image(&out.join("images"), &format!("after_{}", pair_slug(pair)), pair, img)?;
        }
        for (pair, img) in truth.iter() {
            write_image(&out.join("images"), &format!("truth_{}", pair_slug(pair)), pair, img)?;
        }
    }

    let n_pca = cfg.pca_train_samples.min(records.len());
    let train_imgs: Vec<ImageGrid> = records[..n_pca].iter().map(|r| r.input.clone()).collect();
    let test_cfg = sc.test_config(&data_cfg, cfg.test_seed);
    let test_imgs: Vec<ImageGrid> =
        generate_parallel(&test_cfg, n_pca).runtime()?.into_iter().map(|r| r.input).collect();
    let check = check_scenario(&train_imgs, &test_imgs, cfg.pca_components.min(n_pca), DEFAULT_BINS).runtime()?;
    let pca = PcaStats {
        overlaps: check.report.iter().map(|c| c.overlap).collect(),
        min_overlap: check.min_overlap,
        dominant_overlap: check.dominant_overlap,
        shifted: check.is_shifted(),
    };

    let mut flags = Vec::new();
    if within {
        flags.push(DITHER_FLAG.to_string());
    }
    if !metrics.weights_unchanged {
        flags.push("weights modified during tuning".to_string());
    }
    let summary = RunSummary {
        format_version: format_version(),
        scenario: cfg.scenario,
        scenario_seed: cfg.scenario_seed,
        multiplier: sc.multiplier,
        inputs: RunInputs {
            dataset: inputs.data.to_path_buf(),
            weights: inputs.weights.to_path_buf(),
            weights_checksum: format!("{:016x}", weights.checksum()),
        },
        cost_ratio: metrics.cost_ratio(),
        hidden_improved: metrics.hidden_improved(),
        metrics,
        dither_neighbourhood_cost: dither_cost,
        within_dither_neighbourhood: within,
        pca,
        flags,
        fault: run.fault.as_ref().map(|e| e.to_string()),
    };
    formats::write_json(&out.join("summary.json"), &summary).runtime()?;
    print_run(&summary);
    if let Some(f) = &summary.fault {
        return Err(CmdError::Runtime(anyhow!("tuning stopped early: {f}; partial outputs kept in {}", out.display())));
    }
    Ok(summary)
}

fn print_run(s: &RunSummary) {
    let m = &s.metrics;
    println!("scenario {} (seed {}, multiplier {})", s.scenario, s.scenario_seed, s.multiplier);
    println!("observable cost {:.4e} -> {:.4e} (ratio {:.3})", m.initial_cost, m.final_cost, s.cost_ratio);
    for (i, p) in m.hidden_pairs.iter().enumerate() {
        println!("hidden {p}: untuned {:.4e}, tuned {:.4e}", m.baseline_hidden[i], m.tuned_hidden[i]);
    }
    println!("pca overlap: min {:.3}, dominant {:.3}", s.pca.min_overlap, s.pca.dominant_overlap);
    for f in &s.flags {
        println!("flag: {f}");
    }
}

/// One row of the cross-run table.
#[derive(Debug, Clone, PartialEq, Serialize)]
pub struct ReportRow {
    pub run: String,
    pub scenario: String,
    pub scenario_seed: u64,
    pub initial_cost: f64,
    pub final_cost: f64,
    pub cost_ratio: f64,
    /// `pair:untuned->tuned` per hidden pair, `;`-separated.
    pub hidden: String,
    pub mean_tuned_hidden: f64,
    pub pca_min_overlap: f64,
    pub pca_dominant_overlap: f64,
    /// For near/far runs sharing a seed: `far>=near` (expected) or `far<near`.
    pub degradation: String,
}

pub fn read_summary(dir: &Path) -> anyhow::Result<RunSummary> {
    let path = dir.join("summary.json");
    let text = fs::read_to_string(&path).with_context(|| format!("reading {}", path.display()))?;
    let value: serde_json::Value = serde_json::from_str(&text).with_context(|| format!("parsing {}", path.display()))?;
    let version = value.get("format_version").and_then(|v| v.as_str()).unwrap_or("missing");
    check_version(&path, version)?;
    serde_json::from_value(value).with_context(|| format!("parsing {}", path.display()))
}

/// Cross-run table. Every directory is read before anything is produced,
/// so a bad input yields no partial table.
pub fn report(dirs: &[PathBuf]) -> CmdResult<Vec<ReportRow>> {
    if dirs.is_empty() {
        return Err(CmdError::Usage(anyhow!("report needs at least one run directory")));
    }
    let mut runs = Vec::with_capacity(dirs.len());
    for d in dirs {
        if !d.is_dir() {
            return Err(CmdError::Usage(anyhow!("run directory {} does not exist", d.display())));
        }
        runs.push(read_summary(d).map_err(CmdError::Usage)?);
    }
    let mean_of = |kind: ShiftKind, seed: u64| -> Option<f64> {
        let v: Vec<f64> = runs
            .iter()
            .filter(|r| r.scenario == kind && r.scenario_seed == seed)
            .map(|r| r.metrics.mean_tuned_hidden())
            .collect();
        (!v.is_empty()).then(|| v.iter().sum::<f64>() / v.len() as f64)
    };
    Ok(dirs
        .iter()
        .zip(&runs)
        .map(|(d, r)| {
            let m = &r.metrics;
            let degradation = match (r.scenario, mean_of(ShiftKind::Near, r.scenario_seed), mean_of(ShiftKind::Far, r.scenario_seed)) {
                (ShiftKind::Near | ShiftKind::Far, Some(near), Some(far)) => {
                    if far >= near { "far>=near" } else { "far<near" }.to_string()
                }
                _ => "-".to_string(),
            };
            ReportRow {
                run: d.display().to_string(),
                scenario: r.scenario.to_string(),
                scenario_seed: r.scenario_seed,
                initial_cost: m.initial_cost,
                final_cost: m.final_cost,
                cost_ratio: r.cost_ratio,
                hidden: m
                    .hidden_pairs
                    .iter()
                    .enumerate()
                    .map(|(i, p)| format!("{}:{:.4e}->{:.4e}", pair_slug(*p), m.baseline_hidden[i], m.tuned_hidden[i]))
                    .collect::<Vec<_>>()
                    .join(";"),
                mean_tuned_hidden: m.mean_tuned_hidden(),
                pca_min_overlap: r.pca.min_overlap,
                pca_dominant_overlap: r.pca.dominant_overlap,
                degradation,
            }
        })
        .collect())
}

/// Writes the table as CSV to `out`.
pub fn write_report<W: std::io::Write>(rows: &[ReportRow], out: W) -> anyhow::Result<()> {
    let mut w = csv::Writer::from_writer(out);
    for r in rows {
        w.serialize(r)?;
    }
    w.flush()?;
    Ok(())
}

/// Rejects a scenario name outside `none`, `near`, `far`.
pub fn parse_scenario(s: &str) -> anyhow::Result<ShiftKind> {
    ShiftKind::parse(s).ok_or_else(|| anyhow!("unknown scenario {s:?} (expected none, near or far)"))
}
