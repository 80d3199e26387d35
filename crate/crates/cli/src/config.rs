//! Line-oriented `key = value` run configuration.

use std::collections::BTreeMap;
use std::fmt::Write as _;
use std::path::PathBuf;

use sha2::{Digest, Sha256};

use lowrank_adapt::decomp::OrthoForm;
use lowrank_adapt::harness::{Ablation, ModelConfig, SplitMode, SyntheticConfig, TrainConfig};
use lowrank_adapt::{Error, Result};

use crate::CliError;

/// Energy targets reported alongside the configured one by `decompose`.
pub const ENERGY_GRID: [f64; 4] = [0.80, 0.90, 0.95, 0.98];

#[derive(Clone, Debug, PartialEq)]
#[derive(Default)]
pub struct RunConfig {
    pub synthetic: SyntheticConfig,
    pub model: ModelConfig,
    pub train: TrainConfig,
    /// Free-form `paths.*` entries keyed by the part after the dot.
    pub paths: BTreeMap<String, PathBuf>,
}


fn parse_num<T: std::str::FromStr>(key: &str, value: &str) -> Result<T>
where
    T::Err: std::fmt::Display,
{
    value
        .parse()
        .map_err(|e| Error::Config(format!("{key}: cannot parse {value:?}: {e}")))
}

fn ortho_str(form: OrthoForm) -> &'static str {
    match form {
        OrthoForm::Squared => "squared",
        OrthoForm::Raw => "raw",
    }
}

impl RunConfig {
    /// Parses `text` on top of the defaults. Blank lines and `#` comments are
    /// skipped; unknown keys and repeated keys are rejected.
    pub fn parse(text: &str) -> Result<RunConfig> {
        let mut cfg = RunConfig::default();
        let mut seen = std::collections::HashSet::new();
        for (n, line) in text.lines().enumerate() {
            let line = line.trim();
            if line.is_empty() || line.starts_with('#') {
                continue;
            }
            let (key, value) = line
                .split_once('=')
                .ok_or_else(|| Error::Config(format!("line {}: expected key = value", n + 1)))?;
            let key = key.trim();
            if !seen.insert(key.to_string()) {
                return Err(Error::Config(format!("line {}: repeated key {key}", n + 1)));
            }
            cfg.set(key, value.trim())?;
        }
        cfg.validate()?;
        Ok(cfg)
    }

    /// Sets one key. `train.seed` also seeds the generator and the model.
    pub fn set(&mut self, key: &str, value: &str) -> Result<()> {
        let w = &mut self.train.weights;
        let s = &mut self.synthetic;
        match key {
            "decomposition.energy_target" => self.model.energy_target = parse_num(key, value)?,
            "decomposition.k" => {
                self.model.action_basis = match value {
                    "auto" => None,
                    v => Some(parse_num(key, v)?),
                }
            }
            "decomposition.ortho_form" => {
                self.model.ortho_form = match value {
                    "squared" => OrthoForm::Squared,
                    "raw" => OrthoForm::Raw,
                    v => return Err(Error::Config(format!("{key}: unknown form {v:?}"))),
                }
            }
            "loss.alpha" => w.alpha = parse_num(key, value)?,
            "loss.beta1" => w.beta1 = parse_num(key, value)?,
            "loss.beta2" => w.beta2 = parse_num(key, value)?,
            "loss.beta3" => w.beta3 = parse_num(key, value)?,
            "loss.beta4" => w.beta4 = parse_num(key, value)?,
            "loss.gamma1" => w.gamma1 = parse_num(key, value)?,
            "loss.gamma2" => w.gamma2 = parse_num(key, value)?,
            "loss.tau_score_train" => w.tau_score_train = parse_num(key, value)?,
            "loss.tau_score_infer" => w.tau_score_infer = parse_num(key, value)?,
            "loss.tau_kl" => w.tau_kl = parse_num(key, value)?,
            "loss.focal_gamma" => w.focal_gamma = parse_num(key, value)?,
            "loss.focal_alpha" => w.focal_alpha = parse_num(key, value)?,
            "train.steps" => self.train.steps = parse_num(key, value)?,
            "train.lr" => self.train.learning_rate = parse_num(key, value)?,
            "train.weight_decay" => self.train.weight_decay = parse_num(key, value)?,
            "train.batches" => self.train.batches_per_epoch = parse_num(key, value)?,
            "train.seed" => self.set_seed(parse_num(key, value)?),
            "model.ablation" => self.model.ablation = Ablation::parse(value)?,
            "model.encoder_layers" => self.model.encoder_layers = parse_num(key, value)?,
            "split.mode" => s.split = SplitMode::parse(value)?,
            "synthetic.n_actions" => s.n_actions = parse_num(key, value)?,
            "synthetic.n_objects" => s.n_objects = parse_num(key, value)?,
            "synthetic.n_hoi" => s.n_hoi = parse_num(key, value)?,
            "synthetic.feature_dim" => s.feature_dim = parse_num(key, value)?,
            "synthetic.unseen_fraction" => s.unseen_fraction = parse_num(key, value)?,
            "synthetic.cluster_noise" => s.cluster_noise = parse_num(key, value)?,
            "synthetic.action_offset" => s.action_offset = parse_num(key, value)?,
            "synthetic.class_noise" => s.class_noise = parse_num(key, value)?,
            "synthetic.pairs_per_scene" => s.pairs_per_scene = parse_num(key, value)?,
            "synthetic.scenes" => s.scenes = parse_num(key, value)?,
            "synthetic.test_fraction" => s.test_fraction = parse_num(key, value)?,
            "synthetic.grid" => s.grid = parse_num(key, value)?,
            _ => match key.strip_prefix("paths.") {
                Some(name) if !name.is_empty() => {
                    self.paths.insert(name.to_string(), PathBuf::from(value));
                }
                _ => return Err(Error::Config(format!("unknown key {key}"))),
            },
        }
        Ok(())
    }

    pub fn set_seed(&mut self, seed: u64) {
        self.train.seed = seed;
        self.model.seed = seed;
        self.synthetic.seed = seed;
    }

    pub fn validate(&self) -> Result<()> {
        self.synthetic.validate()?;
        self.train.weights.validate()?;
        let e = self.model.energy_target;
        if !(e > 0.0 && e <= 1.0) {
            return Err(Error::Config(format!(
                "decomposition.energy_target {e} outside (0, 1]"
            )));
        }
        if !(self.train.learning_rate > 0.0) || !(self.train.weight_decay >= 0.0) {
            return Err(Error::Config(
                "train.lr must be positive and train.weight_decay non-negative".into(),
            ));
        }
        Ok(())
    }

    /// Every key with its value, in a fixed order; parses back to `self`.
    pub fn entries(&self) -> Vec<(String, String)> {
        let w = &self.train.weights;
        let s = &self.synthetic;
        let v: Vec<(&str, String)> = vec![
            (
                "decomposition.energy_target",
                format!("{:?}", self.model.energy_target),
            ),
            (
                "decomposition.k",
                self.model
                    .action_basis
                    .map_or("auto".to_string(), |k| k.to_string()),
            ),
            (
                "decomposition.ortho_form",
                ortho_str(self.model.ortho_form).to_string(),
            ),
            ("loss.alpha", format!("{:?}", w.alpha)),
            ("loss.beta1", format!("{:?}", w.beta1)),
            ("loss.beta2", format!("{:?}", w.beta2)),
            ("loss.beta3", format!("{:?}", w.beta3)),
            ("loss.beta4", format!("{:?}", w.beta4)),
            ("loss.gamma1", format!("{:?}", w.gamma1)),
            ("loss.gamma2", format!("{:?}", w.gamma2)),
            ("loss.tau_score_train", format!("{:?}", w.tau_score_train)),
            ("loss.tau_score_infer", format!("{:?}", w.tau_score_infer)),
            ("loss.tau_kl", format!("{:?}", w.tau_kl)),
            ("loss.focal_gamma", format!("{:?}", w.focal_gamma)),
            ("loss.focal_alpha", format!("{:?}", w.focal_alpha)),
            ("train.steps", self.train.steps.to_string()),
            ("train.lr", format!("{:?}", self.train.learning_rate)),
            (
                "train.weight_decay",
                format!("{:?}", self.train.weight_decay),
            ),
            ("train.batches", self.train.batches_per_epoch.to_string()),
            ("train.seed", self.train.seed.to_string()),
            ("model.ablation", self.model.ablation.as_str().to_string()),
            (
                "model.encoder_layers",
                self.model.encoder_layers.to_string(),
            ),
            ("split.mode", s.split.as_str().to_string()),
            ("synthetic.n_actions", s.n_actions.to_string()),
            ("synthetic.n_objects", s.n_objects.to_string()),
            ("synthetic.n_hoi", s.n_hoi.to_string()),
            ("synthetic.feature_dim", s.feature_dim.to_string()),
            (
                "synthetic.unseen_fraction",
                format!("{:?}", s.unseen_fraction),
            ),
            ("synthetic.cluster_noise", format!("{:?}", s.cluster_noise)),
            ("synthetic.action_offset", format!("{:?}", s.action_offset)),
            ("synthetic.class_noise", format!("{:?}", s.class_noise)),
            ("synthetic.pairs_per_scene", s.pairs_per_scene.to_string()),
            ("synthetic.scenes", s.scenes.to_string()),
            ("synthetic.test_fraction", format!("{:?}", s.test_fraction)),
            ("synthetic.grid", s.grid.to_string()),
        ];
        let paths: Vec<(String, String)> = self
            .paths
            .iter()
            .map(|(k, p)| (format!("paths.{k}"), p.display().to_string()))
            .collect();
        let mut out: Vec<(String, String)> =
            v.into_iter().map(|(k, val)| (k.to_string(), val)).collect();
        out.extend(paths);
        out
    }

    pub fn to_text(&self) -> String {
        let mut s = String::new();
        for (k, v) in self.entries() {
            let _ = writeln!(s, "{k} = {v}");
        }
        s
    }

    /// First 16 hex digits of the SHA-256 of [`to_text`](Self::to_text).
    pub fn hash(&self) -> String {
        let digest = Sha256::digest(self.to_text().as_bytes());
        digest[..8].iter().map(|b| format!("{b:02x}")).collect()
    }

    /// Fails with a usage error naming `key` when the path is not configured.
    pub fn require_path(&self, key: &str) -> std::result::Result<&PathBuf, CliError> {
        self.paths
            .get(key)
            .ok_or_else(|| CliError::Usage(format!("missing required key paths.{key}")))
    }
}
