//! Per-subject intermediate dataset files.
//!
//! Each file holds every trial of one subject:
//!
//! ```text
//! DEAPI v1 subject=<id> trials=<n> channels=<c> samples=<t> rate=<hz>\n
//! <valence> <arousal> <dominance> <liking>\n      (one line per trial)
//! <n * c * t little-endian f32 samples, trial-major, then channel, then sample>
//! ```
//!
//! Files are named `s<id>.bin` (two-digit, zero-padded id) and a dataset is a
//! directory of them. See `docs/intermediate-format.md` for the full layout.

use std::fs;
use std::io::{BufWriter, Write};
use std::path::{Path, PathBuf};

use rayon::prelude::*;

use super::{Dataset, Ratings, TrialRecord, DEAP_BASELINE_SAMPLES};
use crate::error::{Error, Result};
use crate::numerics::Tensor;

pub const MAGIC: &str = "DEAPI";
pub const VERSION: &str = "v1";
pub const EXTENSION: &str = "bin";

/// Shape constraints applied when reading a directory.
#[derive(Debug, Clone, Copy, PartialEq, Eq, Default)]
pub enum Layout {
    /// 32 subjects x 40 trials, at least 32 channels (the first 32 are kept),
    /// 8064 samples at 128 Hz.
    Deap,
    /// Any counts, consistent across files.
    #[default]
    Any,
}

impl Layout {
    const DEAP_SUBJECTS: usize = 32;
    const DEAP_TRIALS: usize = 40;
    const DEAP_EEG_CHANNELS: usize = 32;
    const DEAP_SAMPLES: usize = 8064;
    const DEAP_RATE: f64 = 128.0;
}

#[derive(Debug, Clone, Copy, Default)]
pub struct ReadOptions {
    pub layout: Layout,
    /// Drop the 3 s pre-trial baseline from every trial.
    pub drop_baseline: bool,
}

#[derive(Debug, Clone, PartialEq)]
struct Header {
    subject: u32,
    trials: usize,
    channels: usize,
    samples: usize,
    rate: f64,
}

fn format_err(path: &Path, field: impl Into<String>, reason: impl Into<String>) -> Error {
    Error::Format {
        path: path.to_path_buf(),
        field: field.into(),
        reason: reason.into(),
    }
}

fn parse_header(path: &Path, line: &str) -> Result<Header> {
    let mut tokens = line.split_ascii_whitespace();
    if tokens.next() != Some(MAGIC) {
        return Err(format_err(path, "magic", format!("expected `{MAGIC}`")));
    }
    if tokens.next() != Some(VERSION) {
        return Err(format_err(path, "version", format!("expected `{VERSION}`")));
    }
    let mut field = |key: &str| -> Result<String> {
        let tok = tokens
            .next()
            .ok_or_else(|| format_err(path, key, "missing"))?;
        tok.strip_prefix(key)
            .and_then(|rest| rest.strip_prefix('='))
            .map(str::to_owned)
            .ok_or_else(|| format_err(path, key, format!("expected `{key}=<value>`, found `{tok}`")))
    };
    let int = |key: &str, v: String| -> Result<usize> {
        v.parse::<usize>()
            .ok()
            .filter(|&n| n > 0)
            .ok_or_else(|| format_err(path, key, format!("`{v}` is not a positive integer")))
    };
    let subject = field("subject")?;
    let subject = int("subject", subject)? as u32;
    let trials = field("trials")?;
    let trials = int("trials", trials)?;
    let channels = field("channels")?;
    let channels = int("channels", channels)?;
    let samples = field("samples")?;
    let samples = int("samples", samples)?;
    let rate_s = field("rate")?;
    let rate: f64 = rate_s
        .parse()
        .ok()
        .filter(|r: &f64| r.is_finite() && *r > 0.0)
        .ok_or_else(|| format_err(path, "rate", format!("`{rate_s}` is not a positive number")))?;
    if let Some(extra) = tokens.next() {
        return Err(format_err(path, "header", format!("unexpected token `{extra}`")));
    }
    Ok(Header {
        subject,
        trials,
        channels,
        samples,
        rate,
    })
}

fn split_line<'a>(path: &Path, bytes: &'a [u8], field: &str) -> Result<(&'a str, &'a [u8])> {
    let end = bytes
        .iter()
        .position(|&b| b == b'\n')
        .ok_or_else(|| format_err(path, field, "unterminated line"))?;
    let line = std::str::from_utf8(&bytes[..end])
        .map_err(|_| format_err(path, field, "not valid UTF-8"))?;
    Ok((line, &bytes[end + 1..]))
}

fn check_layout(path: &Path, h: &Header, layout: Layout) -> Result<usize> {
    match layout {
        Layout::Any => Ok(h.channels),
        Layout::Deap => {
            if h.trials != Layout::DEAP_TRIALS {
                return Err(format_err(
                    path,
                    "trials",
                    format!("expected {}, found {}", Layout::DEAP_TRIALS, h.trials),
                ));
            }
            if h.channels < Layout::DEAP_EEG_CHANNELS {
                return Err(format_err(
                    path,
                    "channels",
                    format!(
                        "expected at least {}, found {}",
                        Layout::DEAP_EEG_CHANNELS,
                        h.channels
                    ),
                ));
            }
            if h.samples != Layout::DEAP_SAMPLES {
                return Err(format_err(
                    path,
                    "samples",
                    format!("expected {}, found {}", Layout::DEAP_SAMPLES, h.samples),
                ));
            }
            if h.rate != Layout::DEAP_RATE {
                return Err(format_err(
                    path,
                    "rate",
                    format!("expected {}, found {}", Layout::DEAP_RATE, h.rate),
                ));
            }
            Ok(Layout::DEAP_EEG_CHANNELS)
        }
    }
}

/// Reads one subject file. Returns its records and sample rate.
pub fn read_subject_file(path: &Path, layout: Layout) -> Result<(Vec<TrialRecord>, f64)> {
    let bytes = fs::read(path).map_err(|e| Error::io(path, e))?;
    let (line, mut rest) = split_line(path, &bytes, "header")?;
    let header = parse_header(path, line)?;
    let keep = check_layout(path, &header, layout)?;

    let mut ratings = Vec::with_capacity(header.trials);
    for i in 0..header.trials {
        let field = format!("labels[{i}]");
        let (line, tail) = split_line(path, rest, &field)?;
        rest = tail;
        let values: Vec<f64> = line
            .split_ascii_whitespace()
            .map(|s| s.parse::<f64>())
            .collect::<std::result::Result<_, _>>()
            .map_err(|_| format_err(path, &field, format!("unparsable ratings `{line}`")))?;
        if values.len() != 4 {
            return Err(format_err(
                path,
                &field,
                format!("expected 4 ratings, found {}", values.len()),
            ));
        }
        let r = Ratings {
            valence: values[0],
            arousal: values[1],
            dominance: values[2],
            liking: values[3],
        };
        r.validate()
            .map_err(|e| format_err(path, &field, e.to_string()))?;
        ratings.push(r);
    }

    let expected = header.trials * header.channels * header.samples * 4;
    if rest.len() != expected {
        return Err(format_err(
            path,
            "payload",
            format!("expected {expected} bytes, found {}", rest.len()),
        ));
    }

    let per_trial = header.channels * header.samples;
    let mut records = Vec::with_capacity(header.trials);
    for (trial, rating) in ratings.into_iter().enumerate() {
        let mut data = Vec::with_capacity(keep * header.samples);
        let base = trial * per_trial;
        for (i, chunk) in rest[base * 4..(base + keep * header.samples) * 4]
            .chunks_exact(4)
            .enumerate()
        {
            let v = f32::from_le_bytes([chunk[0], chunk[1], chunk[2], chunk[3]]);
            if !v.is_finite() {
                return Err(format_err(
                    path,
                    "payload",
                    format!(
                        "non-finite sample at trial {trial}, channel {}, sample {}",
                        i / header.samples,
                        i % header.samples
                    ),
                ));
            }
            data.push(f64::from(v));
        }
        records.push(TrialRecord {
            subject_id: header.subject,
            trial_id: trial as u32 + 1,
            signals: Tensor::new(vec![keep, header.samples], data)?,
            ratings: rating,
        });
    }
    Ok((records, header.rate))
}

fn subject_files(dir: &Path) -> Result<Vec<PathBuf>> {
    let mut files: Vec<PathBuf> = fs::read_dir(dir)
        .map_err(|e| Error::io(dir, e))?
        .filter_map(|e| e.ok().map(|e| e.path()))
        .filter(|p| p.is_file() && p.extension().is_some_and(|e| e == EXTENSION))
        .collect();
    files.sort();
    Ok(files)
}

/// Reads every `*.bin` subject file in `dir`, in file-name order.
pub fn read_dataset(dir: &Path, options: ReadOptions) -> Result<Dataset> {
    let files = subject_files(dir)?;
    if files.is_empty() {
        return Err(format_err(dir, "files", format!("no *.{EXTENSION} subject files")));
    }
    if options.layout == Layout::Deap && files.len() != Layout::DEAP_SUBJECTS {
        return Err(format_err(
            dir,
            "subjects",
            format!("expected {}, found {}", Layout::DEAP_SUBJECTS, files.len()),
        ));
    }
    let parsed: Vec<(Vec<TrialRecord>, f64)> = files
        .par_iter()
        .map(|p| read_subject_file(p, options.layout))
        .collect::<Result<_>>()?;

    let mut seen = std::collections::BTreeSet::new();
    let rate = parsed[0].1;
    let shape = parsed[0].0[0].signals.shape().to_vec();
    let mut records = Vec::new();
    for (path, (recs, r)) in files.iter().zip(parsed) {
        let subject = recs[0].subject_id;
        if !seen.insert(subject) {
            return Err(format_err(path, "subject", format!("duplicate subject id {subject}")));
        }
        if r != rate {
            return Err(format_err(path, "rate", format!("expected {rate}, found {r}")));
        }
        let s = recs[0].signals.shape();
        if s != shape.as_slice() {
            return Err(format_err(
                path,
                "channels/samples",
                format!("expected {:?}, found {:?}", shape, s),
            ));
        }
        records.extend(recs);
    }
    let mut ds = Dataset::new(records, dir.display().to_string(), rate)?;
    if options.drop_baseline {
        ds.drop_leading_samples(DEAP_BASELINE_SAMPLES)?;
    }
    Ok(ds)
}

/// Writes `dataset` as one file per subject under `dir` (created if missing).
/// Samples are narrowed to `f32`.
pub fn write_dataset(dataset: &Dataset, dir: &Path) -> Result<Vec<PathBuf>> {
    fs::create_dir_all(dir).map_err(|e| Error::io(dir, e))?;
    let mut subjects: Vec<u32> = dataset.records.iter().map(|r| r.subject_id).collect();
    subjects.sort_unstable();
    subjects.dedup();
    let (channels, samples) = (dataset.manifest.num_channels, dataset.manifest.num_samples);
    let mut written = Vec::new();
    for subject in subjects {
        let recs: Vec<&TrialRecord> = dataset
            .records
            .iter()
            .filter(|r| r.subject_id == subject)
            .collect();
        let path = dir.join(format!("s{subject:02}.{EXTENSION}"));
        let file = fs::File::create(&path).map_err(|e| Error::io(&path, e))?;
        let mut w = BufWriter::new(file);
        let io = |e| Error::io(&path, e);
        writeln!(
            w,
            "{MAGIC} {VERSION} subject={subject} trials={} channels={channels} samples={samples} rate={}",
            recs.len(),
            dataset.manifest.sample_rate
        )
        .map_err(io)?;
        for r in &recs {
            let q = r.ratings;
            writeln!(w, "{} {} {} {}", q.valence, q.arousal, q.dominance, q.liking).map_err(io)?;
        }
        for r in &recs {
            for &v in r.signals.data() {
                w.write_all(&(v as f32).to_le_bytes()).map_err(io)?;
            }
        }
        w.flush().map_err(io)?;
        written.push(path);
    }
    Ok(written)
}
