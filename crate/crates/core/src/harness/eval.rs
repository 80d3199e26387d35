use std::fmt::Write as _;

use super::metrics::{
    action_dissimilarity, average_precision, harmonic_mean, mean_dissimilarity, AdNormalization,
};
use super::model::Model;
use super::synthetic::SyntheticScene;
use crate::error::{Error, Result};
use crate::numkit::Tape;
use crate::objective::{hoi_score, LossWeights};

#[derive(Clone, Debug, PartialEq)]
pub struct EvalReport {
    /// AP per class in `[0, 1]`; `None` when the class has no positive pair.
    pub ap_per_class: Vec<Option<f64>>,
    pub map_seen: f64,
    pub map_unseen: f64,
    pub map_full: f64,
    /// `None` when the unseen set is empty.
    pub harmonic_mean: Option<f64>,
    /// Action dissimilarity of the adapted class features per object.
    pub ad_per_object: Vec<f64>,
}

impl EvalReport {
    /// Plain-text report; every number is printed with full round-trip precision.
    pub fn to_text(&self) -> String {
        let mut s = String::new();
        let _ = writeln!(s, "map_seen\t{:e}", self.map_seen);
        let _ = writeln!(s, "map_unseen\t{:e}", self.map_unseen);
        let _ = writeln!(s, "map_full\t{:e}", self.map_full);
        match self.harmonic_mean {
            Some(h) => {
                let _ = writeln!(s, "harmonic_mean\t{h:e}");
            }
            None => s.push_str("harmonic_mean\tundefined\n"),
        }
        for (i, ap) in self.ap_per_class.iter().enumerate() {
            match ap {
                Some(v) => {
                    let _ = writeln!(s, "ap\t{i}\t{v:e}");
                }
                None => {
                    let _ = writeln!(s, "ap\t{i}\tskipped");
                }
            }
        }
        for (o, ad) in self.ad_per_object.iter().enumerate() {
            let _ = writeln!(s, "ad\t{o}\t{ad:e}");
        }
        s
    }
}

fn mean(xs: impl Iterator<Item = f64>) -> f64 {
    let (sum, n) = xs.fold((0.0, 0usize), |(s, n), x| (s + x, n + 1));
    if n == 0 {
        0.0
    } else {
        sum / n as f64
    }
}

/// Action logits for every pair of every scene, `adapters == false` bypasses all blocks.
pub fn scene_logits(
    model: &Model,
    scenes: &[SyntheticScene],
    weights: &LossWeights,
    adapters: bool,
) -> Result<Vec<Vec<Vec<f64>>>> {
    let tape = Tape::new();
    let bound = model.bind(&tape);
    let fused = model.fused_text(&tape, &bound, adapters)?;
    scenes
        .iter()
        .map(|scene| {
            let out = model.scene_forward(&tape, &bound, fused, scene, weights, adapters)?;
            let v = out.logits.value();
            Ok((0..v.rows()).map(|r| v.row(r).to_vec()).collect())
        })
        .collect()
}

/// Per-class AP over pairs sharing the class's object, ranked by the inference score.
pub fn evaluate(
    model: &Model,
    scenes: &[SyntheticScene],
    weights: &LossWeights,
) -> Result<EvalReport> {
    evaluate_with(model, scenes, weights, true)
}

/// [`evaluate`] with every adapter block bypassed: the frozen baseline.
pub fn evaluate_baseline(
    model: &Model,
    scenes: &[SyntheticScene],
    weights: &LossWeights,
) -> Result<EvalReport> {
    evaluate_with(model, scenes, weights, false)
}

fn evaluate_with(
    model: &Model,
    scenes: &[SyntheticScene],
    weights: &LossWeights,
    adapters: bool,
) -> Result<EvalReport> {
    let vocab = &model.vocab;
    let logits = scene_logits(model, scenes, weights, adapters)?;
    let tau = weights.tau_score_infer;
    let mut ap_per_class = Vec::with_capacity(vocab.n_hoi());
    for (i, &(action, object)) in vocab.pairs.iter().enumerate() {
        let mut scores = Vec::new();
        let mut labels = Vec::new();
        for (scene, l) in scenes.iter().zip(&logits) {
            for (p, pair) in scene.pairs.iter().enumerate() {
                if pair.object_class == object {
                    scores.push(hoi_score(
                        pair.human_score,
                        pair.object_score,
                        l[p][action],
                        tau,
                    ));
                    labels.push(scene.classes[p] == i);
                }
            }
        }
        ap_per_class.push(match average_precision(&scores, &labels) {
            Ok(ap) => Some(ap),
            Err(Error::UndefinedAp(_)) => None,
            Err(e) => return Err(e),
        });
    }
    let pick = |seen: Option<bool>| {
        mean(
            ap_per_class
                .iter()
                .enumerate()
                .filter(|(i, _)| seen.is_none_or(|s| vocab.seen[*i] == s))
                .filter_map(|(_, ap)| *ap),
        )
    };
    let any_unseen = (0..vocab.n_hoi()).any(|i| !vocab.seen[i] && ap_per_class[i].is_some());
    let map_seen = pick(Some(true));
    let map_unseen = pick(Some(false));
    let features = model.adapted_class_features(scenes, weights, adapters)?;
    let ad = action_dissimilarity(
        &features.normalize_rows()?,
        vocab,
        AdNormalization::PairMean,
    )?;
    Ok(EvalReport {
        map_full: pick(None),
        harmonic_mean: any_unseen.then(|| harmonic_mean(map_seen, map_unseen)),
        map_seen,
        map_unseen,
        ap_per_class,
        ad_per_object: ad.iter().map(|a| a.value).collect(),
    })
}

/// Mean action dissimilarity of unit-normalized rows over objects with two or more classes.
pub fn mean_ad(features: &crate::numkit::Mat<f64>, model: &Model) -> Result<f64> {
    let ad = action_dissimilarity(
        &features.normalize_rows()?,
        &model.vocab,
        AdNormalization::PairMean,
    )?;
    Ok(mean_dissimilarity(&ad))
}
