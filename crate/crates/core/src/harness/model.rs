//! The full adaptation model: factorized class features, the four adapter
//! blocks, the spatial map and the frozen encoder, plus the per-batch graph.

use rand::SeedableRng;
use rand_chacha::ChaCha8Rng;

use super::synthetic::SyntheticScene;
use crate::adapters::{
    pair_fusion_var, pair_mean_var, pair_rows, prior_fusion_var, roi_pool_weights,
    spatial_descriptor, weight_adapter_var, AdapterBlock, BlockKind, BlockVars, SpatialMlp,
    SpatialMlpVars, ToyEncoder, ROI_BINS, SPATIAL_DESCRIPTOR_LEN,
};
use crate::decomp::{
    fit_weights, orthogonality_loss_var, pca_init, recon_loss_var, select_action_basis,
    sparsity_loss_var, Factorization, FeatureMatrix, HoiVocabulary, OrthoForm,
};
use crate::error::{Error, Result};
use crate::numkit::{linalg, Mat, Tape, Var};
use crate::objective::{
    action_reg_var, build_label_maps, expand_action_rows, focal_loss_var, score_action_var,
    semantic_loss_var, DecompositionParts, LabelMap, LossWeights,
};

/// Which factorization sides are trained.
#[derive(Clone, Copy, Debug, Default, PartialEq, Eq, Hash)]
pub enum Ablation {
    /// Weights and adapters train; the basis is frozen.
    #[default]
    TrainWeights,
    /// Weights, basis and adapters all train.
    TrainBoth,
    /// Nothing trains; the model stays at its identity initialization.
    FreezeBoth,
    /// No factorization: weights are the raw features over an identity basis.
    NoDecomposition,
}

impl Ablation {
    pub const ALL: [Ablation; 4] = [
        Ablation::TrainWeights,
        Ablation::TrainBoth,
        Ablation::FreezeBoth,
        Ablation::NoDecomposition,
    ];

    pub fn as_str(self) -> &'static str {
        match self {
            Ablation::TrainWeights => "train_w_freeze_b",
            Ablation::TrainBoth => "train_w_and_b",
            Ablation::FreezeBoth => "freeze_both",
            Ablation::NoDecomposition => "no_decomposition",
        }
    }

    pub fn parse(s: &str) -> Result<Self> {
        Ablation::ALL
            .into_iter()
            .find(|a| a.as_str() == s)
            .ok_or_else(|| Error::Config(format!("unknown ablation '{s}'")))
    }
}

#[derive(Clone, Debug, PartialEq)]
pub struct ModelConfig {
    pub energy_target: f64,
    /// Action basis size; `None` means `⌈m/2⌉`.
    pub action_basis: Option<usize>,
    pub encoder_layers: usize,
    pub ortho_form: OrthoForm,
    pub ablation: Ablation,
    pub seed: u64,
}

impl Default for ModelConfig {
    fn default() -> Self {
        ModelConfig {
            energy_target: 0.95,
            action_basis: None,
            encoder_layers: 2,
            ortho_form: OrthoForm::Squared,
            ablation: Ablation::TrainWeights,
            seed: 0,
        }
    }
}

#[derive(Clone, Debug, PartialEq)]
pub struct Model {
    pub config: ModelConfig,
    pub vocab: HoiVocabulary,
    /// Raw class features `F`.
    pub class_features: Mat<f64>,
    pub action_text: Mat<f64>,
    pub object_text: Mat<f64>,
    pub factorization: Factorization<f64>,
    /// Energy fraction reached by the initial factorization.
    pub achieved_energy: f64,
    /// Trainable action weights `W^a` over the action basis.
    pub action_weights: Mat<f64>,
    /// Snapshot of `W^a` at initialization.
    pub action_weights_init: Mat<f64>,
    pub weight_adapter: AdapterBlock<f64>,
    pub text_fusion: AdapterBlock<f64>,
    pub image_fusion: AdapterBlock<f64>,
    pub prior_fusion: AdapterBlock<f64>,
    pub spatial: SpatialMlp<f64>,
    pub encoder: ToyEncoder<f64>,
    pub label_maps: (LabelMap<f64>, LabelMap<f64>),
}

/// Model parameters recorded on a tape, in [`Model::params`] order.
pub struct Bound<'t> {
    pub weights: Var<'t, f64>,
    pub basis: Var<'t, f64>,
    pub action_weights: Var<'t, f64>,
    pub spatial: SpatialMlpVars<'t, f64>,
    pub weight_adapter: BlockVars<'t, f64>,
    pub text_fusion: BlockVars<'t, f64>,
    pub image_fusion: BlockVars<'t, f64>,
    pub prior_fusion: BlockVars<'t, f64>,
}

impl<'t> Bound<'t> {
    pub fn all(&self) -> Vec<Var<'t, f64>> {
        let mut v = vec![self.weights, self.basis, self.action_weights];
        v.extend(self.spatial.params());
        for b in [
            &self.weight_adapter,
            &self.text_fusion,
            &self.image_fusion,
            &self.prior_fusion,
        ] {
            v.extend(b.params());
        }
        v
    }
}

/// Per-scene outputs of the forward graph.
pub struct SceneOutputs<'t> {
    /// `pairs × N_a` action logits.
    pub logits: Var<'t, f64>,
    pub adapted_weights: Var<'t, f64>,
    pub adapted_features: Var<'t, f64>,
}

/// Every term of the training objective for one batch.
pub struct LossGraph<'t> {
    pub total: Var<'t, f64>,
    pub classification: Var<'t, f64>,
    pub semantic: Var<'t, f64>,
    pub parts: DecompositionParts<Var<'t, f64>>,
}

impl Model {
    pub fn init(
        hoi: &FeatureMatrix<f64>,
        actions: &FeatureMatrix<f64>,
        objects: &FeatureMatrix<f64>,
        vocab: &HoiVocabulary,
        config: ModelConfig,
    ) -> Result<Model> {
        vocab.validate()?;
        if hoi.n_classes() != vocab.n_hoi()
            || actions.n_classes() != vocab.n_actions()
            || objects.n_classes() != vocab.n_objects()
        {
            return Err(Error::Consistency {
                expected: format!(
                    "{} / {} / {} class / action / object rows",
                    vocab.n_hoi(),
                    vocab.n_actions(),
                    vocab.n_objects()
                ),
                actual: format!(
                    "{} / {} / {}",
                    hoi.n_classes(),
                    actions.n_classes(),
                    objects.n_classes()
                ),
            });
        }
        let d = hoi.dim();
        if actions.dim() != d || objects.dim() != d {
            return Err(Error::Dimension {
                op: "model_init",
                left: (hoi.n_classes(), d),
                right: (actions.n_classes(), actions.dim()),
            });
        }
        let (fac, achieved) = match config.ablation {
            Ablation::NoDecomposition => (
                Factorization {
                    weights: hoi.features().clone(),
                    basis: Mat::identity(d),
                    action_index_set: Vec::new(),
                    frozen_basis: true,
                },
                1.0,
            ),
            _ => pca_init(hoi, config.energy_target)?,
        };
        let m = fac.rank();
        let k = config.action_basis.unwrap_or(m.div_ceil(2));
        let mut fac = select_action_basis(&fac, k, config.seed)?;
        fac.frozen_basis = config.ablation != Ablation::TrainBoth;
        let action_weights = fit_weights(actions.features(), &fac.action_basis()?)?;
        let mut rng = ChaCha8Rng::seed_from_u64(config.seed.wrapping_add(0x5eed));
        let weight_adapter = AdapterBlock::init(BlockKind::WeightAdapter, d, &mut rng);
        let text_fusion = AdapterBlock::init(BlockKind::TextFusion, d, &mut rng);
        let image_fusion = AdapterBlock::init(BlockKind::ImageFusion, d, &mut rng);
        let prior_fusion = AdapterBlock::init(BlockKind::PriorFusion, d, &mut rng);
        let spatial = SpatialMlp::init(d, &mut rng);
        let encoder = ToyEncoder::new(d, config.encoder_layers, config.seed.wrapping_add(0xe2c))?;
        Ok(Model {
            label_maps: build_label_maps(vocab)?,
            vocab: vocab.clone(),
            class_features: hoi.features().clone(),
            action_text: actions.features().clone(),
            object_text: objects.features().clone(),
            factorization: fac,
            achieved_energy: achieved,
            action_weights_init: action_weights.clone(),
            action_weights,
            weight_adapter,
            text_fusion,
            image_fusion,
            prior_fusion,
            spatial,
            encoder,
            config,
        })
    }

    pub fn dim(&self) -> usize {
        self.class_features.cols()
    }

    pub fn params(&self) -> Vec<&Mat<f64>> {
        let mut v = vec![
            &self.factorization.weights,
            &self.factorization.basis,
            &self.action_weights,
        ];
        v.extend(self.spatial.params());
        for b in [
            &self.weight_adapter,
            &self.text_fusion,
            &self.image_fusion,
            &self.prior_fusion,
        ] {
            v.extend(b.params());
        }
        v
    }

    pub fn params_mut(&mut self) -> Vec<&mut Mat<f64>> {
        let mut v = vec![
            &mut self.factorization.weights,
            &mut self.factorization.basis,
            &mut self.action_weights,
        ];
        v.extend(self.spatial.params_mut());
        for b in [
            &mut self.weight_adapter,
            &mut self.text_fusion,
            &mut self.image_fusion,
            &mut self.prior_fusion,
        ] {
            v.extend(b.params_mut());
        }
        v
    }

    pub fn param_names(&self) -> Vec<String> {
        let mut v: Vec<String> = ["weights", "basis", "action_weights"]
            .iter()
            .map(|s| s.to_string())
            .collect();
        v.extend(
            ["hidden", "hidden_bias", "output", "output_bias"]
                .iter()
                .map(|s| format!("spatial.{s}")),
        );
        for b in [
            &self.weight_adapter,
            &self.text_fusion,
            &self.image_fusion,
            &self.prior_fusion,
        ] {
            v.extend(
                b.param_names()
                    .into_iter()
                    .map(|n| format!("{}.{n}", b.kind.as_str())),
            );
        }
        v
    }

    /// Which entries of [`params`](Self::params) the optimizer updates.
    pub fn trainable_mask(&self) -> Vec<bool> {
        let n = self.params().len();
        match self.config.ablation {
            Ablation::FreezeBoth => vec![false; n],
            Ablation::TrainBoth => vec![true; n],
            Ablation::TrainWeights | Ablation::NoDecomposition => (0..n).map(|i| i != 1).collect(),
        }
    }

    pub fn bind<'t>(&self, tape: &'t Tape<f64>) -> Bound<'t> {
        Bound {
            weights: tape.leaf(self.factorization.weights.clone()),
            basis: tape.leaf(self.factorization.basis.clone()),
            action_weights: tape.leaf(self.action_weights.clone()),
            spatial: self.spatial.bind(tape),
            weight_adapter: self.weight_adapter.bind(tape),
            text_fusion: self.text_fusion.bind(tape),
            image_fusion: self.image_fusion.bind(tape),
            prior_fusion: self.prior_fusion.bind(tape),
        }
    }

    /// Fused text feature per class from the action reconstructions and object features.
    pub fn fused_text<'t>(
        &self,
        tape: &'t Tape<f64>,
        bound: &Bound<'t>,
        adapters: bool,
    ) -> Result<Var<'t, f64>> {
        let idx = &self.factorization.action_index_set;
        let action_feats = bound
            .action_weights
            .matmul(bound.basis.select_cols(idx).t());
        let (acts, objs) = pair_rows(&self.vocab, self.vocab.n_actions(), self.vocab.n_objects())?;
        let a = action_feats.select_rows(&acts);
        let o = tape.constant(self.object_text.clone()).select_rows(&objs);
        Ok(if adapters {
            pair_fusion_var(tape, a, o, &bound.text_fusion)
        } else {
            pair_mean_var(tape, a, o)
        })
    }

    /// Forward pass over one scene. With `adapters == false` every adapter block
    /// is bypassed, which is the frozen baseline.
    pub fn scene_forward<'t>(
        &self,
        tape: &'t Tape<f64>,
        bound: &Bound<'t>,
        fused_text: Var<'t, f64>,
        scene: &SyntheticScene,
        weights: &LossWeights,
        adapters: bool,
    ) -> Result<SceneOutputs<'t>> {
        let d = self.dim();
        let n_pairs = scene.pairs.len();
        if scene.patches.dim() != d || scene.prior_features.cols() != d {
            return Err(Error::Dimension {
                op: "scene_forward",
                left: scene.patches.cells.shape(),
                right: (self.vocab.n_hoi(), d),
            });
        }
        let mut desc = Mat::zeros(n_pairs, SPATIAL_DESCRIPTOR_LEN);
        let mut appearance = Mat::zeros(n_pairs, d);
        let cells = scene.patches.height * scene.patches.width;
        let mut regions = [
            Mat::zeros(n_pairs, cells),
            Mat::zeros(n_pairs, cells),
            Mat::zeros(n_pairs, cells),
        ];
        for (p, pair) in scene.pairs.iter().enumerate() {
            if pair.dim() != d {
                return Err(Error::Dimension {
                    op: "scene_forward",
                    left: (1, pair.dim()),
                    right: (1, d),
                });
            }
            let s = spatial_descriptor(
                &pair.human_box,
                &pair.object_box,
                scene.image_width,
                scene.image_height,
            )?;
            desc.row_mut(p).copy_from_slice(&s);
            for (j, v) in appearance.row_mut(p).iter_mut().enumerate() {
                *v = (pair.human_feature[j] + pair.object_feature[j]) * 0.5;
            }
            for (r, b) in
                regions
                    .iter_mut()
                    .zip([&pair.human_box, &pair.object_box, &pair.union_box])
            {
                let w = roi_pool_weights(
                    scene.patches.height,
                    scene.patches.width,
                    scene.image_width,
                    scene.image_height,
                    b,
                    ROI_BINS,
                )?;
                r.row_mut(p).copy_from_slice(w.as_slice());
            }
        }
        let tokens = tape
            .constant(appearance)
            .add(bound.spatial.forward(tape.constant(desc)));
        let tokens = if adapters {
            prior_fusion_var(
                tokens,
                Some(tape.constant(scene.prior_features.clone())),
                &bound.prior_fusion,
            )
        } else {
            tokens
        };
        let (map, adapted_tokens, pooled) = self.encoder.forward_var(
            tape,
            tape.constant(scene.patches.cells.clone()),
            tokens,
            scene.patches.height,
            scene.patches.width,
        );
        let [rh, ro, ru] = regions;
        let f_h = tape.constant(rh).matmul(map);
        let f_o = tape.constant(ro).matmul(map);
        let f_u = tape.constant(ru).matmul(map);
        let f_ho = if adapters {
            pair_fusion_var(tape, f_h, f_o, &bound.image_fusion)
        } else {
            pair_mean_var(tape, f_h, f_o)
        };
        let (adapted_weights, adapted_features) = if adapters {
            let projector =
                tape.constant(linalg::coefficient_projector(&self.factorization.basis)?);
            weight_adapter_var(
                bound.weights,
                bound.basis,
                projector,
                pooled,
                &bound.weight_adapter,
            )
        } else {
            (bound.weights, bound.weights.matmul(bound.basis.t()))
        };
        let logits = score_action_var(
            tape,
            f_u,
            adapted_tokens,
            f_ho,
            adapted_features,
            fused_text,
            (&self.label_maps.0, &self.label_maps.1),
            weights,
        );
        Ok(SceneOutputs {
            logits,
            adapted_weights,
            adapted_features,
        })
    }

    /// Full training objective over a batch of scenes.
    pub fn loss_graph<'t>(
        &self,
        tape: &'t Tape<f64>,
        bound: &Bound<'t>,
        scenes: &[&SyntheticScene],
        weights: &LossWeights,
    ) -> Result<LossGraph<'t>> {
        if scenes.is_empty() {
            return Err(Error::Parameter("empty training batch".into()));
        }
        let tau = weights.tau_kl;
        let fused = self.fused_text(tape, bound, true)?;
        let seen_cols: Vec<usize> = self
            .vocab
            .seen_actions()
            .iter()
            .enumerate()
            .filter(|(_, &s)| s)
            .map(|(a, _)| a)
            .collect();
        let idx = &self.factorization.action_index_set;
        let action_target = expand_action_rows(&self.action_weights, &self.vocab)?;
        let mut logits = Vec::with_capacity(scenes.len());
        let mut targets = Vec::with_capacity(scenes.len());
        let mut semantic = Vec::with_capacity(scenes.len());
        let mut act_hoi = Vec::with_capacity(scenes.len());
        for scene in scenes {
            let out = self.scene_forward(tape, bound, fused, scene, weights, true)?;
            logits.push(out.logits.select_cols(&seen_cols));
            targets.push(scene.gt_labels.select_cols(&seen_cols)?);
            semantic.push(semantic_loss_var(
                tape,
                out.adapted_features,
                fused,
                &self.class_features,
                &self.vocab,
                tau,
            )?);
            act_hoi.push(action_reg_var(
                out.adapted_weights.select_cols(idx),
                &action_target,
                tau,
            )?);
        }
        let inv = 1.0 / scenes.len() as f64;
        let target_refs: Vec<&Mat<f64>> = targets.iter().collect();
        let classification = focal_loss_var(
            Var::concat_rows(&logits),
            &Mat::concat_rows(&target_refs)?,
            weights.focal_alpha,
            weights.focal_gamma,
        );
        let semantic = tape.sum_of(&semantic).scale(inv);
        let basis_a = bound.basis.select_cols(idx);
        let parts = DecompositionParts {
            recon_hoi: recon_loss_var(
                tape.constant(self.class_features.clone()),
                bound.weights,
                bound.basis,
            ),
            recon_action: recon_loss_var(
                tape.constant(self.action_text.clone()),
                bound.action_weights,
                basis_a,
            ),
            sparse_hoi: sparsity_loss_var(bound.weights),
            sparse_action: sparsity_loss_var(bound.action_weights),
            orthogonality: match self.config.ortho_form {
                OrthoForm::Squared => orthogonality_loss_var(bound.basis),
                OrthoForm::Raw => bound
                    .basis
                    .t()
                    .matmul(bound.basis)
                    .sum()
                    .sub(bound.basis.mul(bound.basis).sum()),
            },
            act_hoi: tape.sum_of(&act_hoi).scale(inv),
            act_action: action_reg_var(bound.action_weights, &self.action_weights_init, tau)?,
        };
        let fd = tape.sum_of(&[
            parts.recon_hoi.add(parts.recon_action).scale(weights.beta1),
            parts
                .sparse_hoi
                .add(parts.sparse_action)
                .scale(weights.beta2),
            parts.orthogonality.scale(weights.beta3),
            parts.act_hoi.add(parts.act_action).scale(weights.beta4),
        ]);
        let total = tape.sum_of(&[classification, semantic.scale(weights.alpha), fd]);
        Ok(LossGraph {
            total,
            classification,
            semantic,
            parts,
        })
    }

    /// Mean over scenes of the adapted class features `F̂`.
    pub fn adapted_class_features(
        &self,
        scenes: &[SyntheticScene],
        weights: &LossWeights,
        adapters: bool,
    ) -> Result<Mat<f64>> {
        let tape = Tape::new();
        let bound = self.bind(&tape);
        let fused = self.fused_text(&tape, &bound, adapters)?;
        let mut acc = Mat::zeros(self.vocab.n_hoi(), self.dim());
        for scene in scenes {
            let out = self.scene_forward(&tape, &bound, fused, scene, weights, adapters)?;
            acc.add_assign(&out.adapted_features.value())?;
        }
        Ok(acc.scale(1.0 / scenes.len().max(1) as f64))
    }

    /// Mean row KL between the adapted action-subset weights and the mapped action weights.
    pub fn action_alignment(
        &self,
        scenes: &[SyntheticScene],
        weights: &LossWeights,
    ) -> Result<f64> {
        let tape = Tape::new();
        let bound = self.bind(&tape);
        let fused = self.fused_text(&tape, &bound, true)?;
        let target = expand_action_rows(&self.action_weights, &self.vocab)?;
        let idx = &self.factorization.action_index_set;
        let mut total = 0.0;
        for scene in scenes {
            let out = self.scene_forward(&tape, &bound, fused, scene, weights, true)?;
            total += action_reg_var(
                out.adapted_weights.select_cols(idx),
                &target,
                weights.tau_kl,
            )?
            .item();
        }
        Ok(total / scenes.len().max(1) as f64)
    }
}
