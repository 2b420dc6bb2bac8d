//! Acceptance suite. Prints one PASS/FAIL line per criterion and exits
//! nonzero if any criterion fails.

use std::fs;
use std::path::Path;
use std::time::{Duration, Instant};

use rand::{Rng, SeedableRng};
use rand_chacha::ChaCha8Rng;

use scalingnet::data::{generate_synthetic, SyntheticConfig, Target};
use scalingnet::numerics::{conv2d_same, softmax_cross_entropy};
use scalingnet::scaling::{kernel_lengths, max_scaling_level};
use scalingnet::training::{run_protocol, AdamConfig, AdamState, TrainOptions};
use scalingnet::verify::{run_suite, GradCheckSettings};
use scalingnet::{Activation, ScalingLayerParams, ScalingNetConfig, Tensor, Variant};

const SYNTHETIC_SEED: u64 = 2024;
const SYNTHETIC_EPOCHS: usize = 10;

struct Outcome {
    passed: bool,
    detail: String,
}

fn outcome(passed: bool, detail: impl Into<String>) -> Outcome {
    Outcome {
        passed,
        detail: detail.into(),
    }
}

fn cli(args: &[&str]) -> Result<String, String> {
    let mut out = Vec::new();
    scalingnet_cli::run(std::iter::once("scalingnet").chain(args.iter().copied()), &mut out)
        .map_err(|e| e.to_string())?;
    Ok(String::from_utf8_lossy(&out).into_owned())
}

fn secs(d: Duration) -> String {
    format!("{:.1}s", d.as_secs_f64())
}

fn gradient_correctness() -> Outcome {
    let t0 = Instant::now();
    let seeds: Vec<u64> = (0..20).collect();
    let report = match run_suite(&seeds, &GradCheckSettings::default()) {
        Ok(r) => r,
        Err(e) => return outcome(false, e.to_string()),
    };
    let worst = |model: bool| {
        report
            .results
            .iter()
            .filter(|r| r.name.starts_with("model") == model)
            .map(|r| r.max_relative_error)
            .fold(0.0, f64::max)
    };
    let elapsed = t0.elapsed();
    let ok = report.passed() && elapsed < Duration::from_secs(60);
    outcome(
        ok,
        format!(
            "20 seeds, model max rel err {:.2e} (tol 1e-4), primitive max {:.2e} (tol 1e-5), {}",
            worst(true),
            worst(false),
            secs(elapsed)
        ),
    )
}

fn naive_correlate(signal: &[f64], kernel: &[f64]) -> Vec<f64> {
    let r = kernel.len() / 2;
    (0..signal.len())
        .map(|t| {
            let mut acc = 0.0;
            for (j, &w) in kernel.iter().enumerate() {
                let i = t as isize + j as isize - r as isize;
                if i >= 0 && (i as usize) < signal.len() {
                    acc += w * signal[i as usize];
                }
            }
            acc
        })
        .collect()
}

fn naive_pyramid(w: &[f64]) -> Vec<Vec<f64>> {
    let mut out = vec![w.to_vec()];
    while out.last().unwrap().len() > 1 {
        let mut k = out.last().unwrap().clone();
        if ((k.len() - 1) / 2) % 2 == 1 {
            k.pop();
        } else {
            k.push(0.0);
        }
        out.push(k.chunks(2).map(|p| 0.5 * (p[0] + p[1])).collect());
    }
    out
}

fn forward_oracles() -> Outcome {
    let mut rng = ChaCha8Rng::seed_from_u64(99);
    let mut worst_scaling = 0.0f64;
    let mut worst_conv = 0.0f64;
    for _ in 0..100 {
        let k0 = 2 * rng.random_range(0..12) + 1;
        let t = rng.random_range(1..48);
        let w: Vec<f64> = (0..k0).map(|_| rng.random_range(-1.0..1.0)).collect();
        let pyramid = naive_pyramid(&w);
        let b: Vec<f64> = (0..pyramid.len()).map(|_| rng.random_range(-0.5..0.5)).collect();
        let x: Vec<f64> = (0..t).map(|_| rng.random_range(-2.0..2.0)).collect();
        let layer = ScalingLayerParams::new(
            Tensor::vector(w.clone()).unwrap(),
            Tensor::vector(b.clone()).unwrap(),
            Activation::Relu,
        )
        .unwrap();
        let map = layer.forward(&Tensor::vector(x.clone()).unwrap()).unwrap();
        for (l, k) in pyramid.iter().enumerate() {
            for (got, want) in map.row(l).iter().zip(naive_correlate(&x, k)) {
                worst_scaling = worst_scaling.max((got - (want + b[l]).max(0.0)).abs());
            }
        }

        let (cin, cout, h, wd) = (rng.random_range(1..4), rng.random_range(1..4), rng.random_range(1..7), rng.random_range(1..20));
        let (kh, kw) = (2 * rng.random_range(0..3) + 1, 2 * rng.random_range(0..4) + 1);
        let input: Vec<f64> = (0..cin * h * wd).map(|_| rng.random_range(-1.0..1.0)).collect();
        let kern: Vec<f64> = (0..cout * cin * kh * kw).map(|_| rng.random_range(-1.0..1.0)).collect();
        let bias: Vec<f64> = (0..cout).map(|_| rng.random_range(-1.0..1.0)).collect();
        let got = conv2d_same(
            &Tensor::new(vec![cin, h, wd], input.clone()).unwrap(),
            &Tensor::new(vec![cout, cin, kh, kw], kern.clone()).unwrap(),
            &Tensor::vector(bias.clone()).unwrap(),
        )
        .unwrap();
        for co in 0..cout {
            for y in 0..h {
                for x in 0..wd {
                    let mut acc = bias[co];
                    for ci in 0..cin {
                        for dy in 0..kh {
                            for dx in 0..kw {
                                let iy = y as isize + dy as isize - (kh / 2) as isize;
                                let ix = x as isize + dx as isize - (kw / 2) as isize;
                                if iy >= 0 && ix >= 0 && (iy as usize) < h && (ix as usize) < wd {
                                    acc += kern[((co * cin + ci) * kh + dy) * kw + dx]
                                        * input[(ci * h + iy as usize) * wd + ix as usize];
                                }
                            }
                        }
                    }
                    worst_conv = worst_conv.max((got.data()[(co * h + y) * wd + x] - acc).abs());
                }
            }
        }
    }
    outcome(
        worst_scaling <= 1e-12 && worst_conv <= 1e-12,
        format!("100 instances, max abs diff scaling {worst_scaling:.1e}, conv2d {worst_conv:.1e} (tol 1e-12)"),
    )
}

fn length_law() -> Outcome {
    let lens = kernel_lengths(33).unwrap();
    let mut ok = lens == [33, 17, 9, 5, 3, 1] && max_scaling_level(33).unwrap() == 5;
    let mut bad = Vec::new();
    for k0 in (1..=257).step_by(2) {
        let l = kernel_lengths(k0).unwrap();
        if !(l.iter().all(|n| n % 2 == 1) && *l.last().unwrap() == 1) {
            bad.push(k0);
        }
    }
    ok &= bad.is_empty();
    outcome(
        ok,
        format!("k0=33 -> {lens:?}, L={}, odd k0<=257 violations: {}", lens.len() - 1, bad.len()),
    )
}

fn synthetic_end_to_end() -> Outcome {
    let t0 = Instant::now();
    let ds = generate_synthetic(&SyntheticConfig {
        seed: SYNTHETIC_SEED,
        num_trials: 400,
        num_channels: 4,
        num_samples: 512,
        ..Default::default()
    })
    .unwrap();
    let cfg = ScalingNetConfig {
        num_channels: 4,
        ..Default::default()
    };
    let opts = TrainOptions {
        epochs: SYNTHETIC_EPOCHS,
        seed: SYNTHETIC_SEED,
        ..Default::default()
    };
    let (report, _) = match run_protocol(&ds, &cfg, Variant::Scaling, &Target::ALL, &opts) {
        Ok(r) => r,
        Err(e) => return outcome(false, e.to_string()),
    };
    let elapsed = t0.elapsed();
    let accs: Vec<String> = report
        .targets
        .iter()
        .map(|t| format!("{} {:.4}", t.target.name(), t.mean_accuracy))
        .collect();
    let ok = report.targets.len() == 3
        && report.targets.iter().all(|t| t.mean_accuracy >= 0.95)
        && elapsed < Duration::from_secs(600);
    outcome(
        ok,
        format!("{} epochs, five-fold: {} (min 0.95), {}", SYNTHETIC_EPOCHS, accs.join(", "), secs(elapsed)),
    )
}

fn ablation_parity(dir: &Path) -> Outcome {
    let data = dir.join("ablate-data");
    let out = dir.join("ablate-out");
    let run = || -> Result<String, String> {
        cli(&["synth-gen", "-o", data.to_str().unwrap(), "--seed", "3", "--trials", "100", "--channels", "4", "--samples", "128"])?;
        cli(&["ablate", "--data", data.to_str().unwrap(), "--seed", "3", "--epochs", "3", "-o", out.to_str().unwrap()])
    };
    let text = match run() {
        Ok(t) => t,
        Err(e) => return outcome(false, e),
    };
    let json: serde_json::Value = match fs::read_to_string(out.join("ablation.json")).map(|s| serde_json::from_str(&s)) {
        Ok(Ok(v)) => v,
        _ => return outcome(false, "ablation.json missing or unreadable"),
    };
    let rows = json["rows"].as_array().map_or(0, Vec::len);
    let matched = json["fingerprints_match"].as_bool() == Some(true);
    let summary: Vec<String> = text
        .lines()
        .filter(|l| l.starts_with("convolutional layer") || l.starts_with("scaling layer"))
        .map(|l| l.split_whitespace().collect::<Vec<_>>().join(" "))
        .collect();
    outcome(
        matched && rows == 2 && summary.len() == 2,
        format!("fingerprints identical: {matched}, rows {rows}; {}", summary.join("; ")),
    )
}

fn determinism(dir: &Path) -> Outcome {
    let data = dir.join("det-data");
    let runs = [dir.join("det-a"), dir.join("det-b")];
    let go = || -> Result<(), String> {
        cli(&["synth-gen", "-o", data.to_str().unwrap(), "--seed", "8", "--trials", "60", "--channels", "2", "--samples", "96"])?;
        for r in &runs {
            cli(&[
                "train", "--data", data.to_str().unwrap(), "--seed", "8", "--epochs", "2", "--folds", "3",
                "--weight-length", "17", "--strict", "-o", r.to_str().unwrap(),
            ])?;
        }
        Ok(())
    };
    if let Err(e) = go() {
        return outcome(false, e);
    }
    let mut files: Vec<String> = vec!["report.json".into(), "report.txt".into()];
    for t in Target::ALL {
        for k in 0..3 {
            files.push(format!("checkpoints/{}-fold{k}.ckpt", t.name()));
        }
    }
    let differing: Vec<&String> = files
        .iter()
        .filter(|f| match (fs::read(runs[0].join(f)), fs::read(runs[1].join(f))) {
            (Ok(a), Ok(b)) => a != b,
            _ => true,
        })
        .collect();
    outcome(
        differing.is_empty(),
        format!("{} artifacts compared, {} differ", files.len(), differing.len()),
    )
}

fn adam_and_ln2() -> Outcome {
    let grads = [1.0, -0.5, 2.0, 0.0, 3.0];
    let mut p = Tensor::vector(vec![0.0]).unwrap();
    let mut state = AdamState::new(AdamConfig::default(), &[&p]);
    let (mut m, mut v, mut q) = (0.0f64, 0.0f64, 0.0f64);
    let mut worst = 0.0f64;
    for (i, &g) in grads.iter().enumerate() {
        state
            .step(&mut [&mut p], &[&Tensor::vector(vec![g]).unwrap()])
            .unwrap();
        let t = (i + 1) as f64;
        m = 0.9 * m + 0.1 * g;
        v = 0.999 * v + 0.001 * g * g;
        q -= 1e-3 * (m / (1.0 - 0.9f64.powf(t))) / ((v / (1.0 - 0.999f64.powf(t))).sqrt() + 1e-8);
        worst = worst.max((p.data()[0] - q).abs());
    }
    let mut first = Tensor::vector(vec![0.0]).unwrap();
    let mut s1 = AdamState::new(AdamConfig::default(), &[&first]);
    s1.step(&mut [&mut first], &[&Tensor::vector(vec![1.0]).unwrap()]).unwrap();
    let step1 = (first.data()[0] - -9.9999999e-4).abs();
    let ce = (softmax_cross_entropy(&Tensor::vector(vec![0.25, 0.25]).unwrap(), 1).unwrap() - std::f64::consts::LN_2).abs();
    outcome(
        worst <= 1e-12 && step1 <= 1e-12 && ce <= 1e-12,
        format!("recurrence max diff {worst:.1e}, first step diff {step1:.1e}, |CE - ln 2| {ce:.1e} (tol 1e-12)"),
    )
}

fn main() {
    let dir = tempfile::tempdir().expect("temp dir");
    let criteria: [(&str, Box<dyn Fn() -> Outcome>); 7] = [
        ("1 gradient correctness", Box::new(gradient_correctness)),
        ("2 forward oracle equivalence", Box::new(forward_oracles)),
        ("3 kernel length law", Box::new(length_law)),
        ("4 synthetic end-to-end", Box::new(synthetic_end_to_end)),
        ("5 ablation harness parity", Box::new(|| ablation_parity(dir.path()))),
        ("6 determinism", Box::new(|| determinism(dir.path()))),
        ("7 adam recurrence and ln 2", Box::new(adam_and_ln2)),
    ];
    let mut failed = 0;
    for (name, check) in &criteria {
        let o = check();
        if !o.passed {
            failed += 1;
        }
        println!("[{}] criterion {name}: {}", if o.passed { "PASS" } else { "FAIL" }, o.detail);
    }
    println!("acceptance: {} of {} criteria passed", criteria.len() - failed, criteria.len());
    if failed > 0 {
        std::process::exit(1);
    }
}
