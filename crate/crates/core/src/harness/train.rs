use rand::seq::SliceRandom;
use rand::SeedableRng;
use rand_chacha::ChaCha8Rng;

use super::model::Model;
use super::synthetic::SyntheticScene;
use crate::error::{Error, Result};
use crate::numkit::{AdamW, AdamWConfig, Mat, Tape};
use crate::objective::{DecompositionParts, LossWeights};

#[derive(Clone, Debug, PartialEq)]
pub struct TrainConfig {
    pub steps: usize,
    pub learning_rate: f64,
    pub weight_decay: f64,
    /// The training scenes are split once into this many fixed batches, visited cyclically.
    pub batches_per_epoch: usize,
    pub seed: u64,
    pub weights: LossWeights,
}

impl Default for TrainConfig {
    fn default() -> Self {
        TrainConfig {
            steps: 500,
            learning_rate: 1e-3,
            weight_decay: 1e-2,
            batches_per_epoch: 20,
            seed: 0,
            weights: LossWeights::default(),
        }
    }
}

/// Loss values of one optimizer step, evaluated before the update.
#[derive(Clone, Copy, Debug, PartialEq)]
pub struct StepRecord {
    pub step: usize,
    pub total: f64,
    pub classification: f64,
    pub semantic: f64,
    pub parts: DecompositionParts<f64>,
}

impl StepRecord {
    fn breakdown(&self) -> String {
        let p = &self.parts;
        format!(
            "cls={} sem={} recon=({}, {}) sparse=({}, {}) ort={} act=({}, {})",
            self.classification,
            self.semantic,
            p.recon_hoi,
            p.recon_action,
            p.sparse_hoi,
            p.sparse_action,
            p.orthogonality,
            p.act_hoi,
            p.act_action
        )
    }
}

/// Fixed batches: a seeded shuffle of the scene indices cut into near-equal chunks.
pub fn fixed_batches(n_scenes: usize, batches: usize, seed: u64) -> Result<Vec<Vec<usize>>> {
    if batches == 0 || batches > n_scenes {
        return Err(Error::Parameter(format!(
            "cannot cut {n_scenes} scenes into {batches} batches"
        )));
    }
    let mut order: Vec<usize> = (0..n_scenes).collect();
    order.shuffle(&mut ChaCha8Rng::seed_from_u64(seed));
    Ok((0..batches)
        .map(|b| order[b * n_scenes / batches..(b + 1) * n_scenes / batches].to_vec())
        .collect())
}

/// Runs `cfg.steps` AdamW steps on the full objective and returns the loss trace.
/// A frozen model (no trainable parameter) is left untouched and yields an empty trace.
pub fn train(
    model: &mut Model,
    scenes: &[SyntheticScene],
    cfg: &TrainConfig,
) -> Result<Vec<StepRecord>> {
    cfg.weights.validate()?;
    let mask = model.trainable_mask();
    if cfg.steps == 0 || !mask.iter().any(|&t| t) {
        return Ok(Vec::new());
    }
    let batches = fixed_batches(scenes.len(), cfg.batches_per_epoch, cfg.seed)?;
    let trainable: Vec<&Mat<f64>> = model
        .params()
        .into_iter()
        .zip(&mask)
        .filter(|(_, &t)| t)
        .map(|(p, _)| p)
        .collect();
    let opt_cfg = AdamWConfig::default()
        .learning_rate(cfg.learning_rate)
        .weight_decay(cfg.weight_decay);
    let mut opt = AdamW::new(opt_cfg, &trainable);
    let mut trace = Vec::with_capacity(cfg.steps);
    for step in 0..cfg.steps {
        let batch: Vec<&SyntheticScene> = batches[step % batches.len()]
            .iter()
            .map(|&i| &scenes[i])
            .collect();
        let tape = Tape::new();
        let bound = model.bind(&tape);
        let graph = model.loss_graph(&tape, &bound, &batch, &cfg.weights)?;
        let p = &graph.parts;
        let record = StepRecord {
            step,
            total: graph.total.item(),
            classification: graph.classification.item(),
            semantic: graph.semantic.item(),
            parts: DecompositionParts {
                recon_hoi: p.recon_hoi.item(),
                recon_action: p.recon_action.item(),
                sparse_hoi: p.sparse_hoi.item(),
                sparse_action: p.sparse_action.item(),
                orthogonality: p.orthogonality.item(),
                act_hoi: p.act_hoi.item(),
                act_action: p.act_action.item(),
            },
        };
        if !record.total.is_finite() {
            return Err(Error::Numeric(format!(
                "non-finite loss at step {step}: {}",
                record.breakdown()
            )));
        }
        let grads = tape.gradients(graph.total);
        let g: Vec<Mat<f64>> = bound
            .all()
            .into_iter()
            .zip(&mask)
            .filter(|(_, &t)| t)
            .map(|(v, _)| grads.wrt(v))
            .collect();
        let mut params: Vec<&mut Mat<f64>> = model
            .params_mut()
            .into_iter()
            .zip(&mask)
            .filter(|(_, &t)| t)
            .map(|(p, _)| p)
            .collect();
        opt.step(&mut params, &g)
            .map_err(|e| Error::Numeric(format!("step {step}: {e}; {}", record.breakdown())))?;
        trace.push(record);
    }
    Ok(trace)
}

/// Trailing moving average of the total loss with the given window.
pub fn moving_average(trace: &[StepRecord], window: usize) -> Vec<f64> {
    if window == 0 || trace.len() < window {
        return Vec::new();
    }
    trace
        .windows(window)
        .map(|w| w.iter().map(|r| r.total).sum::<f64>() / window as f64)
        .collect()
}
