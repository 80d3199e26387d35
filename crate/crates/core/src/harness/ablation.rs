use std::fmt::Write as _;

use super::eval::{evaluate, evaluate_baseline, EvalReport};
use super::model::{Ablation, Model, ModelConfig};
use super::synthetic::SyntheticData;
use super::train::{train, TrainConfig};
use crate::error::Result;

#[derive(Clone, Debug, PartialEq)]
pub struct AblationRow {
    pub ablation: Ablation,
    pub report: EvalReport,
    /// Final total loss, `None` when nothing trained.
    pub final_loss: Option<f64>,
}

/// Trains every [`Ablation`] configuration on the same data and seed.
pub fn ablation_suite(
    data: &SyntheticData,
    model_cfg: &ModelConfig,
    train_cfg: &TrainConfig,
) -> Result<Vec<AblationRow>> {
    Ablation::ALL
        .into_iter()
        .map(|ablation| {
            let cfg = ModelConfig {
                ablation,
                ..model_cfg.clone()
            };
            let mut model = Model::init(
                &data.hoi_features,
                &data.action_features,
                &data.object_features,
                &data.vocab,
                cfg,
            )?;
            let trace = train(&mut model, &data.train_scenes, train_cfg)?;
            Ok(AblationRow {
                ablation,
                report: evaluate(&model, &data.test_scenes, &train_cfg.weights)?,
                final_loss: trace.last().map(|r| r.total),
            })
        })
        .collect()
}

/// Baseline report of the untrained factorized model with all adapters bypassed.
pub fn baseline_report(
    data: &SyntheticData,
    model_cfg: &ModelConfig,
    train_cfg: &TrainConfig,
) -> Result<EvalReport> {
    let model = Model::init(
        &data.hoi_features,
        &data.action_features,
        &data.object_features,
        &data.vocab,
        model_cfg.clone(),
    )?;
    evaluate_baseline(&model, &data.test_scenes, &train_cfg.weights)
}

/// Plain-text comparison table, mAP values ×100.
pub fn ablation_table(rows: &[AblationRow]) -> String {
    let mut s = format!(
        "{:<18} {:>8} {:>8} {:>8} {:>8}\n",
        "config", "unseen", "seen", "full", "hm"
    );
    for r in rows {
        let hm = r
            .report
            .harmonic_mean
            .map_or("-".to_string(), |h| format!("{:.2}", h * 100.0));
        let _ = writeln!(
            s,
            "{:<18} {:>8.2} {:>8.2} {:>8.2} {:>8}",
            r.ablation.as_str(),
            r.report.map_unseen * 100.0,
            r.report.map_seen * 100.0,
            r.report.map_full * 100.0,
            hm
        );
    }
    s
}
