//! One function per subcommand. Every command writes into `root/<config hash>`
//! and returns the text it reports on standard output.

use std::fmt::Write as _;
use std::fs;
use std::path::{Path, PathBuf};

use lowrank_adapt::decomp::{
    cumulative_energy, energy_spectrum, pca_init, rank_for_energy, select_action_basis,
    FeatureKind, HoiVocabulary,
};
use lowrank_adapt::gradsuite::gradient_suite;
use lowrank_adapt::harness::{
    ablation_suite, ablation_table, action_dissimilarity, baseline_report, evaluate,
    generate_synthetic, train, AdNormalization, Model, SyntheticData,
};
use lowrank_adapt::numkit::Mat;
use lowrank_adapt::{Error, FeatureMatrix};

use crate::config::{RunConfig, ENERGY_GRID};
use crate::featfile::{load_features, save_features, write_featmat};
use crate::params::{load_into, save_model};
use crate::vocabfile::{parse_vocab, vocab_to_text};
use crate::CliError;

type Result<T> = std::result::Result<T, CliError>;

pub const MODEL_FILE: &str = "model.params64";

#[derive(Clone, Debug, PartialEq)]
pub struct CommandOutput {
    pub run_dir: PathBuf,
    pub report: String,
}

/// Creates the run directory for `cfg` and records the full configuration in it.
pub fn run_dir(cfg: &RunConfig, root: &Path) -> Result<PathBuf> {
    let dir = root.join(cfg.hash());
    fs::create_dir_all(&dir)?;
    fs::write(dir.join("config.txt"), cfg.to_text())?;
    Ok(dir)
}

fn finish(dir: PathBuf, file: &str, report: String) -> Result<CommandOutput> {
    fs::write(dir.join(file), &report)?;
    Ok(CommandOutput {
        run_dir: dir,
        report,
    })
}

fn synthetic(cfg: &RunConfig) -> Result<SyntheticData> {
    Ok(generate_synthetic(&cfg.synthetic)?)
}

fn init_model(cfg: &RunConfig, data: &SyntheticData) -> Result<Model> {
    Ok(Model::init(
        &data.hoi_features,
        &data.action_features,
        &data.object_features,
        &data.vocab,
        cfg.model.clone(),
    )?)
}

/// HOI features from `paths.features` when configured, else from the generator.
fn hoi_features(cfg: &RunConfig) -> Result<(FeatureMatrix, Option<HoiVocabulary>)> {
    match cfg.paths.get("features") {
        Some(p) => {
            let vocab = match cfg.paths.get("vocab") {
                Some(v) => Some(parse_vocab(&fs::read_to_string(v)?)?),
                None => None,
            };
            Ok((load_features(p, Some(FeatureKind::Hoi))?, vocab))
        }
        None => {
            let data = synthetic(cfg)?;
            Ok((data.hoi_features, Some(data.vocab)))
        }
    }
}

fn index_names(prefix: &str, n: usize) -> Vec<String> {
    (0..n).map(|i| format!("{prefix}{i}")).collect()
}

/// Writes the synthetic class features and vocabulary.
pub fn cmd_gensynth(cfg: &RunConfig, root: &Path) -> Result<CommandOutput> {
    let dir = run_dir(cfg, root)?;
    let data = synthetic(cfg)?;
    save_features(&dir.join("hoi.featmat"), &data.hoi_features)?;
    save_features(&dir.join("action.featmat"), &data.action_features)?;
    save_features(&dir.join("object.featmat"), &data.object_features)?;
    fs::write(dir.join("vocab.txt"), vocab_to_text(&data.vocab))?;
    let v = &data.vocab;
    let report = format!(
        "classes\t{}\nactions\t{}\nobjects\t{}\nunseen\t{}\ntrain_scenes\t{}\ntest_scenes\t{}\n",
        v.n_hoi(),
        v.n_actions(),
        v.n_objects(),
        v.seen.iter().filter(|&&s| !s).count(),
        data.train_scenes.len(),
        data.test_scenes.len()
    );
    finish(dir, "gensynth.txt", report)
}

/// PCA factorization with the cumulative-energy curve and the ranks of the energy grid.
pub fn cmd_decompose(cfg: &RunConfig, root: &Path) -> Result<CommandOutput> {
    let dir = run_dir(cfg, root)?;
    let (features, _) = hoi_features(cfg)?;
    let (fac, achieved) = pca_init(&features, cfg.model.energy_target)?;
    let k = cfg.model.action_basis.unwrap_or(fac.rank().div_ceil(2));
    let fac = select_action_basis(&fac, k, cfg.model.seed)?;
    write_featmat(
        &dir.join("weights.featmat"),
        &fac.weights.cast(),
        features.class_names(),
        None,
    )?;
    write_featmat(
        &dir.join("basis.featmat"),
        &fac.basis.cast(),
        &index_names("dim", fac.basis.rows()),
        None,
    )?;
    let idx: String = fac
        .action_index_set
        .iter()
        .map(|i| format!("{i}\n"))
        .collect();
    fs::write(dir.join("action_index.txt"), idx)?;
    let spectrum = energy_spectrum(features.features())?;
    let curve: String = cumulative_energy(&spectrum)
        .iter()
        .enumerate()
        .map(|(r, e)| format!("{}\t{e:e}\n", r + 1))
        .collect();
    fs::write(dir.join("energy_curve.txt"), curve)?;
    let mut report = format!(
        "rank\t{}\nachieved_energy\t{achieved:e}\naction_basis\t{k}\n",
        fac.rank()
    );
    for e in ENERGY_GRID {
        let _ = writeln!(report, "rank_at\t{e}\t{}", rank_for_energy(&spectrum, e)?);
    }
    finish(dir, "decompose.txt", report)
}

/// Trains on the synthetic split and saves the model with its loss trace.
pub fn cmd_train(cfg: &RunConfig, root: &Path) -> Result<CommandOutput> {
    let dir = run_dir(cfg, root)?;
    let data = synthetic(cfg)?;
    let mut model = init_model(cfg, &data)?;
    let trace = train(&mut model, &data.train_scenes, &cfg.train)?;
    save_model(&dir.join(MODEL_FILE), &model)?;
    let curve: String = trace
        .iter()
        .map(|r| format!("{}\t{:e}\n", r.step, r.total))
        .collect();
    fs::write(dir.join("loss_trace.txt"), curve)?;
    let mut report = format!("steps\t{}\n", trace.len());
    if let (Some(first), Some(last)) = (trace.first(), trace.last()) {
        let _ = writeln!(
            report,
            "loss_first\t{:e}\nloss_last\t{:e}",
            first.total, last.total
        );
    }
    finish(dir, "train.txt", report)
}

/// Model in the run directory if one was trained, else the identity initialization.
fn trained_or_initial(cfg: &RunConfig, dir: &Path, data: &SyntheticData) -> Result<Model> {
    let mut model = init_model(cfg, data)?;
    let path = dir.join(MODEL_FILE);
    if path.exists() {
        load_into(&path, &mut model)?;
    }
    Ok(model)
}

/// Evaluates on the held-out scenes.
pub fn cmd_eval(cfg: &RunConfig, root: &Path) -> Result<CommandOutput> {
    let dir = run_dir(cfg, root)?;
    let data = synthetic(cfg)?;
    let model = trained_or_initial(cfg, &dir, &data)?;
    let report = evaluate(&model, &data.test_scenes, &cfg.train.weights)?.to_text();
    finish(dir, "report.txt", report)
}

fn ad_lines(features: &Mat<f64>, vocab: &HoiVocabulary) -> Result<String> {
    let ad = action_dissimilarity(
        &features.normalize_rows()?,
        vocab,
        AdNormalization::PairMean,
    )?;
    Ok(ad
        .iter()
        .enumerate()
        .map(|(o, a)| {
            format!(
                "{o}\t{:e}{}\n",
                a.value,
                if a.degenerate { "\tdegenerate" } else { "" }
            )
        })
        .collect())
}

/// Per-object action dissimilarity of the class features, plus that of the
/// adapted features when a trained synthetic model is present.
pub fn cmd_ad(cfg: &RunConfig, root: &Path) -> Result<CommandOutput> {
    let dir = run_dir(cfg, root)?;
    if cfg.paths.contains_key("features") {
        let (features, vocab) = hoi_features(cfg)?;
        let vocab =
            vocab.ok_or_else(|| CliError::Usage("missing required key paths.vocab".into()))?;
        let report = ad_lines(features.features(), &vocab)?;
        return finish(dir, "ad.txt", report);
    }
    let data = synthetic(cfg)?;
    let report = ad_lines(data.hoi_features.features(), &data.vocab)?;
    if dir.join(MODEL_FILE).exists() {
        let model = trained_or_initial(cfg, &dir, &data)?;
        let adapted = model.adapted_class_features(&data.test_scenes, &cfg.train.weights, true)?;
        fs::write(dir.join("ad_adapted.txt"), ad_lines(&adapted, &data.vocab)?)?;
    }
    finish(dir, "ad.txt", report)
}

/// Runs the gradient suite; fails when any check exceeds the tolerance.
pub fn cmd_gradcheck(cfg: &RunConfig, root: &Path) -> Result<CommandOutput> {
    let dir = run_dir(cfg, root)?;
    let cases = gradient_suite(cfg.train.seed)?;
    let mut report = String::new();
    for c in &cases {
        let _ = writeln!(
            report,
            "{}\t{:e}\t{}",
            c.name,
            c.report.max_relative_error,
            if c.passes() { "ok" } else { "FAIL" }
        );
    }
    let out = finish(dir, "gradcheck.txt", report)?;
    let failed: Vec<&str> = cases
        .iter()
        .filter(|c| !c.passes())
        .map(|c| c.name.as_str())
        .collect();
    if failed.is_empty() {
        Ok(out)
    } else {
        Err(Error::Numeric(format!("gradient check failed for {}", failed.join(", "))).into())
    }
}

/// Trains every ablation on one split and tabulates the metrics.
pub fn cmd_ablation(cfg: &RunConfig, root: &Path) -> Result<CommandOutput> {
    let dir = run_dir(cfg, root)?;
    let data = synthetic(cfg)?;
    let rows = ablation_suite(&data, &cfg.model, &cfg.train)?;
    let base = baseline_report(&data, &cfg.model, &cfg.train)?;
    let mut report = ablation_table(&rows);
    let _ = writeln!(
        report,
        "{:<18} {:>8.2} {:>8.2} {:>8.2}",
        "baseline",
        base.map_unseen * 100.0,
        base.map_seen * 100.0,
        base.map_full * 100.0
    );
    finish(dir, "ablation.txt", report)
}
