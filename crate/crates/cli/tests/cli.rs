use std::fs;
use std::path::Path;

use scalingnet::training::RunReport;
use scalingnet::{checkpoint, ScalingNetConfig, ScalingNetParams};
use scalingnet_cli::run;

fn cli(args: &[&str]) -> Result<String, scalingnet_cli::CliError> {
    let mut out = Vec::new();
    let argv = std::iter::once("scalingnet").chain(args.iter().copied());
    run(argv, &mut out)?;
    Ok(String::from_utf8(out).unwrap())
}

fn s(p: &Path) -> &str {
    p.to_str().unwrap()
}

fn synth(dir: &Path, trials: &str, channels: &str, samples: &str) {
    cli(&["synth-gen", "-o", s(dir), "--seed", "5", "--trials", trials, "--channels", channels, "--samples", samples])
        .unwrap();
}

#[test]
fn gradcheck_passes_and_lists_primitives() {
    let out = cli(&["gradcheck", "--seed", "7"]).unwrap();
    for name in ["correlate1d_same", "avgpool_halve", "conv2d_same", "softmax_cross_entropy", "model[scaling]", "model[baseline]"] {
        assert!(out.contains(name), "{name} missing from\n{out}");
    }
    assert!(!out.contains("FAIL"));
}

#[test]
fn synth_gen_then_ingest_check() {
    let dir = tempfile::tempdir().unwrap();
    let data = dir.path().join("data");
    synth(&data, "80", "3", "32");
    assert!(data.join("s01.bin").exists() && data.join("s02.bin").exists());
    let out = cli(&["ingest-check", "--data", s(&data)]).unwrap();
    assert!(out.contains("records:     80"), "{out}");
    assert!(out.contains("channels:    3"));
    assert!(out.contains("valence    high    40 | low    40"), "{out}");
    let err = cli(&["ingest-check", "--data", s(&data), "--layout", "deap"]).unwrap_err();
    assert!(err.to_string().contains("expected 32"), "{err}");
}

#[test]
fn train_echoes_table_settings_and_writes_artifacts() {
    let dir = tempfile::tempdir().unwrap();
    let data = dir.path().join("data");
    synth(&data, "40", "2", "48");
    let run_dir = dir.path().join("run");
    let text = cli(&[
        "train", "--data", s(&data), "--target", "valence", "--folds", "5", "--batch-size", "32",
        "--weight-length", "33", "--epochs", "1", "--seed", "1", "-o", s(&run_dir),
    ])
    .unwrap();
    for needle in ["batch size 32", "length of weight 33", "levels 6", "kernel size 3x5", "filters 16, 8, 6", "folds 5"] {
        assert!(text.contains(needle), "`{needle}` missing from\n{text}");
    }
    assert_eq!(fs::read_to_string(run_dir.join("report.txt")).unwrap(), text);
    let report: RunReport = serde_json_from(&run_dir.join("report.json"));
    assert_eq!(report.schema, "scalingnet.run-report.v1");
    assert_eq!(report.targets.len(), 1);
    assert_eq!(report.targets[0].folds.len(), 5);
    assert_eq!(report.training.batch_size, 32);
    assert_eq!(report.model.weight_length, 33);
    for k in 0..5 {
        let p = checkpoint::load(&run_dir.join(format!("checkpoints/valence-fold{k}.ckpt"))).unwrap();
        assert_eq!(p.config.num_channels, 2);
    }
    let acc = report.targets[0].folds.iter().map(|f| f.accuracy).sum::<f64>() / 5.0;
    assert!((acc - report.targets[0].mean_accuracy).abs() < 1e-15);

    let eval = cli(&[
        "eval", "--checkpoint", s(&run_dir.join("checkpoints/valence-fold2.ckpt")), "--data", s(&data),
        "--target", "valence", "--fold", "2", "--seed", "1",
    ])
    .unwrap();
    let want = format!("accuracy {:.4}", report.targets[0].folds[2].accuracy);
    assert!(eval.contains(&want) && eval.contains("trials 8"), "{eval}");
}

fn serde_json_from<T: serde::de::DeserializeOwned>(p: &Path) -> T {
    serde_json::from_str(&fs::read_to_string(p).unwrap()).unwrap()
}

#[test]
fn flags_override_file_override_defaults() {
    let dir = tempfile::tempdir().unwrap();
    let data = dir.path().join("data");
    synth(&data, "20", "2", "32");
    let cfg = dir.path().join("run.toml");
    fs::write(
        &cfg,
        format!(
            "data = \"{}\"\nseed = 9\nepochs = 3\nfolds = 2\nweight-length = 9\ntarget = \"arousal\"\nfilters = [3, 2]\n",
            data.display()
        ),
    )
    .unwrap();
    let out = dir.path().join("out");
    cli(&["train", "--config", s(&cfg), "--epochs", "1", "-o", s(&out)]).unwrap();
    let report: RunReport = serde_json_from(&out.join("report.json"));
    assert_eq!(report.training.epochs, 1);
    assert_eq!(report.training.seed, 9);
    assert_eq!(report.training.folds, 2);
    assert_eq!(report.training.batch_size, 32);
    assert_eq!(report.model.weight_length, 9);
    assert_eq!(report.model.conv_filters, [3, 2]);
    assert_eq!(report.targets[0].folds[0].loss_curve.len(), 1);

    fs::write(&cfg, "seed = 1\nlearning-rate = 0.1\n").unwrap();
    let err = cli(&["train", "--config", s(&cfg), "--data", s(&data), "-o", s(&out)]).unwrap_err();
    assert!(err.to_string().contains("learning-rate"), "{err}");
    assert!(!err.to_string().contains('\n'));
}

#[test]
fn invariant_violations_fail_with_one_line() {
    let dir = tempfile::tempdir().unwrap();
    let data = dir.path().join("data");
    synth(&data, "20", "1", "16");
    let d = s(&data);
    let o = s(dir.path());
    let cases: [(&[&str], &str); 6] = [
        (&["train", "--data", d, "-o", o, "--seed", "1", "--weight-length", "32"], "odd"),
        (&["train", "--data", d, "-o", o, "--seed", "1", "--folds", "1"], "folds"),
        (&["train", "--data", d, "-o", o], "seed"),
        (&["sweep", "--data", d, "-o", o], "seed"),
        (&["ablate", "--data", d, "-o", o], "seed"),
        (&["train", "--data", d, "-o", o, "--seed", "1", "--target", "liking"], "liking"),
    ];
    for (args, needle) in cases {
        let err = cli(args).unwrap_err();
        let msg = err.to_string();
        assert!(msg.contains(needle) && !msg.contains('\n'), "{args:?}: {msg}");
        assert_ne!(err.exit_code(), 0);
    }
    let err = cli(&["train", "--bogus"]).unwrap_err();
    assert_eq!(err.exit_code(), 2);
    assert!(!err.to_string().contains('\n'));
    let err = cli(&["eval", "--checkpoint", "/nonexistent.ckpt", "--data", d, "--target", "valence"]).unwrap_err();
    assert!(err.to_string().contains("/nonexistent.ckpt"));
    let err = cli(&["sweep", "--data", d, "-o", o, "--seed", "1", "--lengths", "9,8"]).unwrap_err();
    assert!(err.to_string().contains("odd"));
}

#[test]
fn zero_checkpoint_exports_zero_map() {
    let dir = tempfile::tempdir().unwrap();
    let data = dir.path().join("data");
    synth(&data, "4", "2", "40");
    let cfg = ScalingNetConfig { num_channels: 2, ..Default::default() };
    let mut p = ScalingNetParams::init(&cfg, 0).unwrap();
    p.load_flat(&vec![0.0; p.num_params()]).unwrap();
    let ckpt = dir.path().join("zero.ckpt");
    checkpoint::save(&p, &ckpt).unwrap();
    let out = dir.path().join("maps");
    cli(&["export-features", "--checkpoint", s(&ckpt), "--data", s(&data), "--trial", "2", "--channel", "1", "-o", s(&out)])
        .unwrap();
    let csv = fs::read_to_string(out.join("trial2-channel1.csv")).unwrap();
    let rows: Vec<&str> = csv.lines().collect();
    assert_eq!(rows.len(), 6);
    assert!(rows.iter().all(|r| r.split(',').count() == 40 && r.split(',').all(|v| v == "0")));
    let pgm = fs::read(out.join("trial2-channel1.pgm")).unwrap();
    assert!(pgm.starts_with(b"P5\n"));
    assert!(pgm.ends_with(&[0u8; 240]));
}

#[test]
fn export_features_matches_library_map() {
    let dir = tempfile::tempdir().unwrap();
    let data = dir.path().join("data");
    synth(&data, "4", "2", "40");
    let cfg = ScalingNetConfig { num_channels: 2, weight_length: 9, ..Default::default() };
    let p = ScalingNetParams::init(&cfg, 4).unwrap();
    let ckpt = dir.path().join("p.ckpt");
    checkpoint::save(&p, &ckpt).unwrap();
    let out = dir.path().join("maps");
    cli(&["export-features", "--checkpoint", s(&ckpt), "--data", s(&data), "--trial", "1", "--channel", "0", "-o", s(&out)])
        .unwrap();
    let ds = scalingnet::data::read_dataset(&data, Default::default()).unwrap();
    let signal = scalingnet::Tensor::vector(ds.records[1].signals.data()[..40].to_vec()).unwrap();
    let map = p.front_end_for(0).feature_map(&signal).unwrap();
    let mut want = Vec::new();
    map.write_csv(&mut want).unwrap();
    assert_eq!(fs::read(out.join("trial1-channel0.csv")).unwrap(), want);
    let err = cli(&["export-features", "--checkpoint", s(&ckpt), "--data", s(&data), "--channel", "2", "-o", s(&out)])
        .unwrap_err();
    assert!(err.to_string().contains("channel 2"));
}

#[test]
fn sweep_rows_sorted_longest_first() {
    let dir = tempfile::tempdir().unwrap();
    let data = dir.path().join("data");
    synth(&data, "20", "1", "24");
    let out = dir.path().join("sweep");
    let text = cli(&[
        "sweep", "--data", s(&data), "-o", s(&out), "--seed", "2", "--epochs", "1", "--folds", "2",
        "--lengths", "5,17,9", "--target", "valence", "--filters", "2",
    ])
    .unwrap();
    let lengths: Vec<&str> = text.lines().skip(2).map(|l| l.split_whitespace().next().unwrap()).collect();
    assert_eq!(lengths, ["17", "9", "5"]);
    assert!(out.join("sweep.json").exists());
}
