//! The `scalingnet` command line.
//!
//! [`run`] parses arguments and executes one subcommand, writing normal
//! output to the given writer. Errors come back as a [`CliError`] whose
//! message is a single line.

mod args;
mod config;

use std::fmt;
use std::fs;
use std::io::Write;
use std::path::{Path, PathBuf};

use clap::Parser;

use scalingnet::data::{generate_synthetic, read_dataset, write_dataset, Dataset, SyntheticConfig, Target};
use scalingnet::training::{
    ablate, cross_validate, evaluate, stratified_k_fold, sweep_weight_length, RunReport,
};
use scalingnet::verify::{run_suite, GradCheckSettings};
use scalingnet::{checkpoint, ScalingNetParams};

pub use args::Cli;
use args::{Command, EvalArgs, ExportArgs, GradcheckArgs, IngestArgs, SweepArgs, SynthArgs, TrainArgs};
use config::{parse_targets, read_options, require_data, resolve, Resolved};

#[derive(Debug, Clone, PartialEq, Eq)]
pub struct CliError {
    message: String,
    code: i32,
}

impl CliError {
    pub fn new(message: impl Into<String>) -> Self {
        Self {
            message: message.into(),
            code: 1,
        }
    }

    fn with_code(mut self, code: i32) -> Self {
        self.code = code;
        self
    }

    pub fn exit_code(&self) -> i32 {
        self.code
    }
}

impl fmt::Display for CliError {
    fn fmt(&self, f: &mut fmt::Formatter<'_>) -> fmt::Result {
        f.write_str(&self.message)
    }
}

impl std::error::Error for CliError {}

impl From<scalingnet::Error> for CliError {
    fn from(e: scalingnet::Error) -> Self {
        CliError::new(format!("[{}] {e}", e.reason_code()).replace('\n', " "))
    }
}

fn io_err(path: &Path, e: std::io::Error) -> CliError {
    CliError::new(format!("{}: {e}", path.display()))
}

fn create_dir(path: &Path) -> Result<(), CliError> {
    fs::create_dir_all(path).map_err(|e| io_err(path, e))
}

fn write_file(path: &Path, contents: impl AsRef<[u8]>) -> Result<(), CliError> {
    fs::write(path, contents).map_err(|e| io_err(path, e))
}

/// Parses `argv` (program name first) and runs the subcommand.
pub fn run<I, T>(argv: I, out: &mut dyn Write) -> Result<(), CliError>
where
    I: IntoIterator<Item = T>,
    T: Into<std::ffi::OsString> + Clone,
{
    let cli = match Cli::try_parse_from(argv) {
        Ok(c) => c,
        Err(e) if !e.use_stderr() => {
            write!(out, "{e}").map_err(|e| CliError::new(e.to_string()))?;
            return Ok(());
        }
        Err(e) => {
            let text = e.to_string();
            let first = text.lines().next().unwrap_or("invalid arguments");
            let first = first.strip_prefix("error: ").unwrap_or(first);
            return Err(CliError::new(first.to_string()).with_code(2));
        }
    };
    match cli.command {
        Command::Train(a) => train(&a, out),
        Command::Eval(a) => eval(&a, out),
        Command::Gradcheck(a) => gradcheck(&a, out),
        Command::SynthGen(a) => synth_gen(&a, out),
        Command::ExportFeatures(a) => export_features(&a, out),
        Command::Sweep(a) => sweep(&a, out),
        Command::Ablate(a) => ablate_cmd(&a, out),
        Command::IngestCheck(a) => ingest_check(&a, out),
    }
}

/// Entry point used by the binary: runs and reports errors on stderr.
pub fn main_with_args<I, T>(argv: I) -> i32
where
    I: IntoIterator<Item = T>,
    T: Into<std::ffi::OsString> + Clone,
{
    let stdout = std::io::stdout();
    let mut lock = stdout.lock();
    match run(argv, &mut lock) {
        Ok(()) => 0,
        Err(e) => {
            let _ = lock.flush();
            eprintln!("scalingnet: error: {e}");
            e.exit_code()
        }
    }
}

fn emit(out: &mut dyn Write, text: &str) -> Result<(), CliError> {
    out.write_all(text.as_bytes())
        .map_err(|e| CliError::new(format!("writing output: {e}")))
}

fn load_for(r: &mut Resolved) -> Result<Dataset, CliError> {
    let ds = read_dataset(&r.data, r.read)?;
    r.model.num_channels = ds.manifest.num_channels;
    Ok(ds)
}

fn checkpoint_path(dir: &Path, target: Target, fold: usize) -> PathBuf {
    dir.join(format!("{}-fold{fold}.ckpt", target.name()))
}

fn train(args: &TrainArgs, out: &mut dyn Write) -> Result<(), CliError> {
    let mut r = resolve(args, None, true)?;
    let ds = load_for(&mut r)?;
    let ckpt_dir = r.output.join("checkpoints");
    create_dir(&ckpt_dir)?;
    let mut reports = Vec::new();
    for &target in &r.targets {
        let run = cross_validate(&ds, &r.model, r.variant, target, &r.train)?;
        for (k, params) in run.models.iter().enumerate() {
            checkpoint::save(params, &checkpoint_path(&ckpt_dir, target, k))?;
        }
        eprintln!(
            "{}: mean accuracy {:.4} over {} folds",
            target.name(),
            run.report.mean_accuracy,
            run.report.folds.len()
        );
        reports.push(run.report);
    }
    let report = RunReport::new(&ds, &r.model, r.variant, &r.train, reports);
    write_file(&r.output.join("report.json"), report.to_json())?;
    let text = report.to_text();
    write_file(&r.output.join("report.txt"), &text)?;
    emit(out, &text)
}

fn eval(args: &EvalArgs, out: &mut dyn Write) -> Result<(), CliError> {
    let params = checkpoint::load(&args.checkpoint)?;
    let data = require_data(&args.data)?;
    let ds = read_dataset(data, read_options(args.data.layout, args.data.drop_baseline))?;
    let targets = parse_targets(&args.target)?;
    if targets.len() != 1 {
        return Err(CliError::new("eval takes exactly one target"));
    }
    let target = targets[0];
    let indices: Vec<usize> = match args.fold {
        None => (0..ds.len()).collect(),
        Some(k) => {
            let seed = args
                .seed
                .ok_or_else(|| CliError::new("--fold needs the --seed used for training"))?;
            let folds = args.folds.unwrap_or(5);
            if folds < 2 {
                return Err(CliError::new(format!("folds must be at least 2, got {folds}")));
            }
            let split = stratified_k_fold(&ds.labels(target)?, folds, seed)?;
            split
                .folds
                .get(k)
                .ok_or_else(|| CliError::new(format!("fold {k} out of range (0..{folds})")))?
                .test
                .clone()
        }
    };
    let acc = evaluate(&params, &ds, &indices, target)?;
    emit(
        out,
        &format!("target {} | trials {} | accuracy {acc:.4}\n", target.name(), indices.len()),
    )
}

fn gradcheck(args: &GradcheckArgs, out: &mut dyn Write) -> Result<(), CliError> {
    if args.seeds == 0 {
        return Err(CliError::new("--seeds must be positive"));
    }
    let seeds: Vec<u64> = (args.seed..args.seed + args.seeds).collect();
    let report = run_suite(&seeds, &GradCheckSettings::default())?;
    emit(out, &report.to_text())?;
    if report.passed() {
        Ok(())
    } else {
        let failed: Vec<&str> = report
            .results
            .iter()
            .filter(|r| !r.passed())
            .map(|r| r.name.as_str())
            .collect();
        Err(CliError::new(format!("gradient check failed: {}", failed.join(", "))))
    }
}

fn synth_gen(args: &SynthArgs, out: &mut dyn Write) -> Result<(), CliError> {
    let ds = generate_synthetic(&SyntheticConfig {
        seed: args.seed,
        num_trials: args.trials,
        num_channels: args.channels,
        num_samples: args.samples,
        sample_rate: args.rate,
        components: args.components,
        snr: args.snr,
    })?;
    let files = write_dataset(&ds, &args.output)?;
    emit(out, &format!("{}\nfiles:       {}\n", ds.manifest, files.len()))
}

fn export_features(args: &ExportArgs, out: &mut dyn Write) -> Result<(), CliError> {
    let params: ScalingNetParams = checkpoint::load(&args.checkpoint)?;
    let data = require_data(&args.data)?;
    let ds = read_dataset(data, read_options(args.data.layout, args.data.drop_baseline))?;
    let record = ds.records.get(args.trial).ok_or_else(|| {
        CliError::new(format!("trial {} out of range (dataset has {})", args.trial, ds.len()))
    })?;
    let (channels, samples) = (ds.manifest.num_channels, ds.manifest.num_samples);
    if args.channel >= channels || args.channel >= params.config.num_channels {
        return Err(CliError::new(format!(
            "channel {} out of range (dataset has {channels}, model {})",
            args.channel, params.config.num_channels
        )));
    }
    let row = &record.signals.data()[args.channel * samples..(args.channel + 1) * samples];
    let signal = scalingnet::Tensor::vector(row.to_vec())?;
    let map = params.front_end_for(args.channel).feature_map(&signal)?;

    create_dir(&args.output)?;
    let stem = format!("trial{}-channel{}", args.trial, args.channel);
    let csv = args.output.join(format!("{stem}.csv"));
    let pgm = args.output.join(format!("{stem}.pgm"));
    let mut buf = Vec::new();
    map.write_csv(&mut buf).map_err(|e| io_err(&csv, e))?;
    write_file(&csv, &buf)?;
    buf.clear();
    map.write_pgm(&mut buf).map_err(|e| io_err(&pgm, e))?;
    write_file(&pgm, &buf)?;
    emit(
        out,
        &format!(
            "feature map {} levels x {} samples\n{}\n{}\n",
            map.levels(),
            map.samples(),
            csv.display(),
            pgm.display()
        ),
    )
}

fn sweep(args: &SweepArgs, out: &mut dyn Write) -> Result<(), CliError> {
    let mut r = resolve(&args.train, args.lengths.as_deref(), true)?;
    let ds = load_for(&mut r)?;
    create_dir(&r.output)?;
    let report = sweep_weight_length(&ds, &r.model, &r.lengths, &r.targets, &r.train)?;
    write_file(&r.output.join("sweep.json"), report.to_json())?;
    let text = report.to_text();
    write_file(&r.output.join("sweep.txt"), &text)?;
    emit(out, &text)
}

fn ablate_cmd(args: &TrainArgs, out: &mut dyn Write) -> Result<(), CliError> {
    let mut r = resolve(args, None, true)?;
    let ds = load_for(&mut r)?;
    create_dir(&r.output)?;
    let report = ablate(&ds, &r.model, &r.targets, &r.train)?;
    write_file(&r.output.join("ablation.json"), report.to_json())?;
    let text = report.to_text();
    write_file(&r.output.join("ablation.txt"), &text)?;
    emit(out, &text)?;
    if report.fingerprints_match {
        Ok(())
    } else {
        Err(CliError::new("fold fingerprints differ between variants"))
    }
}

fn ingest_check(args: &IngestArgs, out: &mut dyn Write) -> Result<(), CliError> {
    let data = require_data(&args.data)?;
    let ds = read_dataset(data, read_options(args.data.layout, args.data.drop_baseline))?;
    let mut text = format!("{}\n", ds.manifest);
    for t in Target::ALL {
        let labels = ds.labels(t)?;
        let high = labels.iter().filter(|&&l| l == 1).count();
        text.push_str(&format!(
            "{:<10} high {:>5} | low {:>5}\n",
            t.name(),
            high,
            labels.len() - high
        ));
    }
    emit(out, &text)
}
