use std::fs;
use std::path::Path;
use std::process::Command;

use lowrank_adapt::decomp::FeatureKind;
use lowrank_adapt::harness::{action_dissimilarity, generate_synthetic, AdNormalization};
use lowrank_adapt::numkit::Mat;
use lowrank_adapt_cli::featfile::{
    decode_featmat, encode_featmat, load_features, read_featmat, save_features, write_csv,
    write_featmat,
};
use lowrank_adapt_cli::{
    cmd_ad, cmd_decompose, cmd_eval, cmd_gensynth, cmd_train, RunConfig, RUNS_ENV,
};
use proptest::prelude::*;

const TINY: &str = "\
synthetic.n_actions = 5
synthetic.n_objects = 3
synthetic.n_hoi = 10
synthetic.feature_dim = 16
synthetic.pairs_per_scene = 2
synthetic.scenes = 24
synthetic.grid = 4
model.encoder_layers = 1
train.steps = 5
train.batches = 6
";

fn tiny() -> RunConfig {
    RunConfig::parse(TINY).unwrap()
}

proptest! {
    #![proptest_config(ProptestConfig::with_cases(32))]

    #[test]
    fn featmat_bytes_round_trip(rows in 1usize..6, cols in 1usize..6, seed in any::<u64>()) {
        let mut s = seed;
        let m = Mat::from_fn(rows, cols, |_, _| {
            s = s.wrapping_mul(6364136223846793005).wrapping_add(1442695040888963407);
            f32::from_bits(((s >> 41) as u32) | 0x3f00_0000) - 1.0
        });
        let back = decode_featmat(&encode_featmat(&m).unwrap()).unwrap();
        prop_assert!(m.as_slice().iter().zip(back.as_slice()).all(|(a, b)| a.to_bits() == b.to_bits()));
    }
}

#[test]
fn saved_features_reload_at_32_bit_precision() {
    let dir = tempfile::tempdir().unwrap();
    let data = generate_synthetic(&tiny().synthetic).unwrap();
    let path = dir.path().join("hoi.featmat");
    save_features(&path, &data.hoi_features).unwrap();
    let raw = read_featmat(&path).unwrap();
    assert_eq!(raw.kind, Some(FeatureKind::Hoi));
    assert_eq!(raw.names, data.hoi_features.class_names());
    let original = data.hoi_features.features();
    for (a, b) in original.as_slice().iter().zip(raw.matrix.as_slice()) {
        assert_eq!(*a as f32, *b);
    }
    let loaded = load_features(&path, None).unwrap();
    for r in 0..loaded.n_classes() {
        assert!((loaded.features().row_norm(r) - 1.0).abs() < 1e-12);
    }
}

#[test]
fn csv_twin_matches_binary() {
    let dir = tempfile::tempdir().unwrap();
    let m = Mat::from_rows(&[[0.5f32, -1.25, 2.0], [3.0, 0.125, -0.75]]);
    let names = vec!["ride bicycle".to_string(), "hold cup".to_string()];
    let bin = dir.path().join("f.featmat");
    let csv = dir.path().join("f.csv");
    write_featmat(&bin, &m, &names, Some(FeatureKind::Hoi)).unwrap();
    write_csv(&csv, &m, &names).unwrap();
    let a = load_features(&bin, None).unwrap();
    let b = load_features(&csv, Some(FeatureKind::Hoi)).unwrap();
    assert_eq!(a, b);
    assert!(load_features(&csv, None).is_err());
}

#[test]
fn decompose_energy_grid_is_monotone() {
    let root = tempfile::tempdir().unwrap();
    let out = cmd_decompose(&tiny(), root.path()).unwrap();
    let ranks: Vec<usize> = out
        .report
        .lines()
        .filter_map(|l| l.strip_prefix("rank_at\t"))
        .map(|l| l.split('\t').nth(1).unwrap().parse().unwrap())
        .collect();
    assert_eq!(ranks.len(), 4);
    assert!(ranks.windows(2).all(|w| w[0] <= w[1]), "{ranks:?}");
    let curve = fs::read_to_string(out.run_dir.join("energy_curve.txt")).unwrap();
    let fractions: Vec<f64> = curve
        .lines()
        .map(|l| l.split('\t').nth(1).unwrap().parse().unwrap())
        .collect();
    assert!(fractions.windows(2).all(|w| w[0] <= w[1]));
    assert!((fractions.last().unwrap() - 1.0).abs() < 1e-12);
    let weights = read_featmat(&out.run_dir.join("weights.featmat")).unwrap();
    let rank: usize = out
        .report
        .lines()
        .next()
        .unwrap()
        .split('\t')
        .nth(1)
        .unwrap()
        .parse()
        .unwrap();
    assert_eq!(weights.matrix.shape(), (10, rank));
}

#[test]
fn decompose_reads_a_feature_file() {
    let root = tempfile::tempdir().unwrap();
    let synth = cmd_gensynth(&tiny(), root.path()).unwrap();
    let mut cfg = tiny();
    cfg.set(
        "paths.features",
        synth.run_dir.join("hoi.featmat").to_str().unwrap(),
    )
    .unwrap();
    let from_file = cmd_decompose(&cfg, root.path()).unwrap();
    let from_generator = cmd_decompose(&tiny(), root.path()).unwrap();
    let rank = |r: &str| r.lines().next().unwrap().to_string();
    assert_eq!(rank(&from_file.report), rank(&from_generator.report));
}

#[test]
fn ad_matches_in_process_computation() {
    let root = tempfile::tempdir().unwrap();
    let cfg = tiny();
    let out = cmd_ad(&cfg, root.path()).unwrap();
    let data = generate_synthetic(&cfg.synthetic).unwrap();
    let normalized = data.hoi_features.features().normalize_rows().unwrap();
    let ad = action_dissimilarity(&normalized, &data.vocab, AdNormalization::PairMean).unwrap();
    let lines: Vec<&str> = out.report.lines().collect();
    assert_eq!(lines.len(), ad.len());
    for (o, (line, a)) in lines.iter().zip(&ad).enumerate() {
        let fields: Vec<&str> = line.split('\t').collect();
        assert_eq!(fields[0], o.to_string());
        assert_eq!(
            fields[1].parse::<f64>().unwrap().to_bits(),
            a.value.to_bits()
        );
    }

    let synth = cmd_gensynth(&cfg, root.path()).unwrap();
    let mut file_cfg = tiny();
    file_cfg
        .set(
            "paths.features",
            synth.run_dir.join("hoi.featmat").to_str().unwrap(),
        )
        .unwrap();
    let missing = cmd_ad(&file_cfg, root.path()).unwrap_err();
    assert_eq!(missing.category(), "usage");
    file_cfg
        .set(
            "paths.vocab",
            synth.run_dir.join("vocab.txt").to_str().unwrap(),
        )
        .unwrap();
    let from_file = cmd_ad(&file_cfg, root.path()).unwrap();
    assert_eq!(from_file.report.lines().count(), ad.len());
}

#[test]
fn eval_uses_the_trained_model() {
    let root = tempfile::tempdir().unwrap();
    let cfg = tiny();
    let untrained = cmd_eval(&cfg, root.path()).unwrap();
    let trained = cmd_train(&cfg, root.path()).unwrap();
    assert_eq!(trained.run_dir, untrained.run_dir);
    assert!(trained.run_dir.join("model.params64").exists());
    let after = cmd_eval(&cfg, root.path()).unwrap();
    assert_ne!(after.report, untrained.report);
    let ad = cmd_ad(&cfg, root.path()).unwrap();
    assert!(ad.run_dir.join("ad_adapted.txt").exists());
}

fn binary(root: &Path, args: &[&str]) -> std::process::Output {
    Command::new(env!("CARGO_BIN_EXE_lowrank-adapt"))
        .env(RUNS_ENV, root)
        .args(args)
        .output()
        .unwrap()
}

#[test]
fn binary_honors_seed_and_is_reproducible() {
    let dir = tempfile::tempdir().unwrap();
    let config = dir.path().join("tiny.cfg");
    fs::write(&config, TINY).unwrap();
    let cfg = config.to_str().unwrap();
    let run = |root: &str, seed: &str| {
        let root = dir.path().join(root);
        let a = binary(&root, &["train", "--config", cfg, "--seed", seed]);
        assert!(a.status.success(), "{}", String::from_utf8_lossy(&a.stderr));
        let b = binary(&root, &["eval", "--config", cfg, "--seed", seed]);
        assert!(b.status.success(), "{}", String::from_utf8_lossy(&b.stderr));
        let text = String::from_utf8(b.stdout).unwrap();
        let (first, report) = text.split_once('\n').unwrap();
        assert!(first.starts_with("run_dir\t"));
        report.to_string()
    };
    let one = run("a", "3");
    assert_eq!(one, run("b", "3"));
    assert_ne!(one, run("c", "4"));
}

#[test]
fn binary_reports_errors_by_category() {
    let dir = tempfile::tempdir().unwrap();
    let out = binary(dir.path(), &["eval", "--set", "train.bogus=1"]);
    assert!(!out.status.success());
    let err = String::from_utf8(out.stderr).unwrap();
    assert!(err.starts_with("error\tconfig\t"), "{err}");
    let out = binary(dir.path(), &["eval", "--set", "novalue"]);
    assert!(String::from_utf8(out.stderr)
        .unwrap()
        .starts_with("error\tusage\t"));
}
