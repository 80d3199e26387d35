//! Named finite-difference checks over every loss term and adapter block on
//! small random instances.

use rand::{Rng, SeedableRng};
use rand_chacha::ChaCha8Rng;

use crate::adapters::{
    pair_fusion_var, prior_fusion_var, weight_adapter_var, AdapterBlock, BlockKind, SpatialMlp,
    SPATIAL_DESCRIPTOR_LEN,
};
use crate::decomp::{orthogonality_loss, recon_loss, sparsity_loss, HoiVocabulary, OrthoForm};
use crate::error::Result;
use crate::harness::{generate_synthetic, Model, ModelConfig, SyntheticConfig};
use crate::numkit::{grad_check, linalg, GradCheckReport, Mat, Tape, Var};
use crate::objective::{
    action_reg_act, action_reg_hoi, build_label_maps, focal_loss, score_action_var, semantic_loss,
    LossWeights,
};

/// Acceptance bound on the maximum relative error of every check.
pub const GRAD_TOLERANCE: f64 = 1e-4;

const STEP: f64 = 1e-5;
const DIM: usize = 16;
const RANK: usize = 6;
const ACTION_RANK: usize = 3;
const TAU: f64 = 0.1;

#[derive(Clone, Debug, PartialEq)]
pub struct GradCase {
    pub name: String,
    pub report: GradCheckReport,
}

impl GradCase {
    pub fn passes(&self) -> bool {
        self.report.passes(GRAD_TOLERANCE)
    }
}

fn uniform(rng: &mut ChaCha8Rng, rows: usize, cols: usize, scale: f64) -> Mat<f64> {
    Mat::from_fn(rows, cols, |_, _| rng.gen_range(-scale..scale))
}

/// Entries with magnitude in `[0.1, 1)`, clear of the kink of `|·|`.
fn away_from_zero(rng: &mut ChaCha8Rng, rows: usize, cols: usize) -> Mat<f64> {
    Mat::from_fn(rows, cols, |_, _| {
        let m = rng.gen_range(0.1..1.0);
        if rng.gen_bool(0.5) {
            m
        } else {
            -m
        }
    })
}

/// Four objects with three actions each over five actions; two unseen classes.
fn small_vocab() -> Result<HoiVocabulary> {
    let pairs: Vec<(usize, usize)> = (0..4)
        .flat_map(|o| (0..3).map(move |s| ((o + s) % 5, o)))
        .collect();
    let seen = (0..pairs.len()).map(|i| i != 4 && i != 9).collect();
    HoiVocabulary::new(
        (0..5).map(|a| format!("act{a}")).collect(),
        (0..4).map(|o| format!("obj{o}")).collect(),
        pairs,
        seen,
    )
}

/// Checks a scalar tape expression with every parameter recorded as a leaf.
fn tape_check<F>(params: Vec<Mat<f64>>, f: F) -> Result<GradCheckReport>
where
    F: for<'t> Fn(&'t Tape<f64>, &[Var<'t, f64>]) -> Result<Var<'t, f64>>,
{
    grad_check(
        |p: &[Mat<f64>]| {
            let tape = Tape::new();
            let vars: Vec<_> = p.iter().map(|m| tape.leaf(m.clone())).collect();
            let out = f(&tape, &vars)?;
            let g = tape.gradients(out);
            Ok((out.item(), vars.iter().map(|&v| g.wrt(v)).collect()))
        },
        &params,
        STEP,
    )
}

/// Random block with a non-zero up-projection, so every parameter matters.
fn perturbed_block(kind: BlockKind, rng: &mut ChaCha8Rng) -> AdapterBlock<f64> {
    let mut block = AdapterBlock::init(kind, DIM, rng);
    let (r, d) = block.up_proj.shape();
    block.up_proj = uniform(rng, r, d, 0.3);
    block.up_bias = uniform(rng, 1, d, 0.1);
    block
}

/// Checks `Σ out ⊙ probe` for a block forward, over block parameters followed by `inputs`.
fn block_check<F>(
    block: &AdapterBlock<f64>,
    inputs: Vec<Mat<f64>>,
    probe: &Mat<f64>,
    forward: F,
) -> Result<GradCheckReport>
where
    F: for<'t> Fn(
        &'t Tape<f64>,
        &crate::adapters::BlockVars<'t, f64>,
        &[Var<'t, f64>],
    ) -> Var<'t, f64>,
{
    let n_block = block.params().len();
    let mut params: Vec<Mat<f64>> = block.params().into_iter().cloned().collect();
    params.extend(inputs);
    grad_check(
        |p: &[Mat<f64>]| {
            let mut b = block.clone();
            for (dst, src) in b.params_mut().into_iter().zip(p) {
                *dst = src.clone();
            }
            let tape = Tape::new();
            let bv = b.bind(&tape);
            let inputs: Vec<_> = p[n_block..].iter().map(|m| tape.leaf(m.clone())).collect();
            let out = forward(&tape, &bv, &inputs)
                .mul(tape.constant(probe.clone()))
                .sum();
            let g = tape.gradients(out);
            let grads = bv
                .params()
                .into_iter()
                .chain(inputs)
                .map(|v| g.wrt(v))
                .collect();
            Ok((out.item(), grads))
        },
        &params,
        STEP,
    )
}

/// Runs every registered check; instances are drawn from `seed`.
pub fn gradient_suite(seed: u64) -> Result<Vec<GradCase>> {
    let mut rng = ChaCha8Rng::seed_from_u64(seed);
    let vocab = small_vocab()?;
    let n = vocab.n_hoi();
    let n_a = vocab.n_actions();
    let mut cases = Vec::new();
    let mut push = |name: &str, report: GradCheckReport| {
        cases.push(GradCase {
            name: name.to_string(),
            report,
        })
    };

    let f = uniform(&mut rng, n, DIM, 1.0).normalize_rows()?;
    let w = uniform(&mut rng, n, RANK, 0.5);
    let b = uniform(&mut rng, DIM, RANK, 0.5);
    push(
        "recon_hoi",
        grad_check(
            |p: &[Mat<f64>]| {
                let l = recon_loss(&f, &p[0], &p[1], false)?;
                let gb = l.grad_basis.unwrap_or_else(|| Mat::zeros(DIM, RANK));
                Ok((l.value, vec![l.grad_weights, gb]))
            },
            &[w.clone(), b.clone()],
            STEP,
        )?,
    );
    let fa = uniform(&mut rng, n_a, DIM, 1.0).normalize_rows()?;
    let wa = uniform(&mut rng, n_a, ACTION_RANK, 0.5);
    let ba = uniform(&mut rng, DIM, ACTION_RANK, 0.5);
    push(
        "recon_action",
        grad_check(
            |p: &[Mat<f64>]| {
                let l = recon_loss(&fa, &p[0], &p[1], false)?;
                let gb = l.grad_basis.unwrap_or_else(|| Mat::zeros(DIM, ACTION_RANK));
                Ok((l.value, vec![l.grad_weights, gb]))
            },
            &[wa.clone(), ba],
            STEP,
        )?,
    );
    for (name, rows, cols) in [("sparse_hoi", n, RANK), ("sparse_action", n_a, ACTION_RANK)] {
        let x = away_from_zero(&mut rng, rows, cols);
        push(
            name,
            grad_check(
                |p: &[Mat<f64>]| {
                    let (v, g) = sparsity_loss(&p[0]);
                    Ok((v, vec![g]))
                },
                &[x],
                STEP,
            )?,
        );
    }
    for (name, form) in [
        ("orthogonality.squared", OrthoForm::Squared),
        ("orthogonality.raw", OrthoForm::Raw),
    ] {
        push(
            name,
            grad_check(
                |p: &[Mat<f64>]| {
                    let l = orthogonality_loss(&p[0], form)?;
                    Ok((l.value, vec![l.grad]))
                },
                std::slice::from_ref(&b),
                STEP,
            )?,
        );
    }
    let w_ar = uniform(&mut rng, n, ACTION_RANK, 0.5);
    push(
        "act_hoi",
        grad_check(
            |p: &[Mat<f64>]| {
                let (v, g) = action_reg_hoi(&p[0], &wa, &vocab, TAU)?;
                Ok((v, vec![g]))
            },
            &[w_ar],
            STEP,
        )?,
    );
    let wa_init = uniform(&mut rng, n_a, ACTION_RANK, 0.5);
    push(
        "act_action",
        grad_check(
            |p: &[Mat<f64>]| {
                let (v, g) = action_reg_act(&p[0], &wa_init, TAU)?;
                Ok((v, vec![g]))
            },
            std::slice::from_ref(&wa),
            STEP,
        )?,
    );
    let logits = uniform(&mut rng, 6, n_a, 3.0);
    let targets = Mat::from_fn(6, n_a, |i, j| if (i + 2 * j) % 3 == 0 { 1.0 } else { 0.0 });
    push(
        "focal",
        grad_check(
            |p: &[Mat<f64>]| {
                let (v, g) = focal_loss(&p[0], &targets, 0.25, 2.0)?;
                Ok((v, vec![g]))
            },
            &[logits],
            STEP,
        )?,
    );
    let adapted = uniform(&mut rng, n, DIM, 1.0);
    let fused = uniform(&mut rng, n, DIM, 1.0);
    push(
        "semantic",
        grad_check(
            |p: &[Mat<f64>]| {
                let l = semantic_loss(&p[0], &p[1], &f, &vocab, TAU)?;
                Ok((l.value, vec![l.grad_adapted, l.grad_fused]))
            },
            &[adapted.clone(), fused.clone()],
            STEP,
        )?,
    );

    let maps = build_label_maps::<f64>(&vocab)?;
    let weights = LossWeights::default();
    let pairs = 3;
    let probe = uniform(&mut rng, pairs, n_a, 1.0);
    let inputs = vec![
        uniform(&mut rng, pairs, DIM, 1.0),
        uniform(&mut rng, pairs, DIM, 1.0),
        uniform(&mut rng, pairs, DIM, 1.0),
        adapted.clone(),
        fused.clone(),
    ];
    push(
        "score_action",
        tape_check(inputs, |tape, v| {
            let s = score_action_var(
                tape,
                v[0],
                v[1],
                v[2],
                v[3],
                v[4],
                (&maps.0, &maps.1),
                &weights,
            );
            Ok(s.mul(tape.constant(probe.clone())).sum())
        })?,
    );

    let image = uniform(&mut rng, 1, DIM, 1.0);
    let block = perturbed_block(BlockKind::WeightAdapter, &mut rng);
    let projector = linalg::coefficient_projector(&b)?;
    let probe_w = uniform(&mut rng, n, DIM, 1.0);
    push(
        "block.weight_adapter",
        block_check(
            &block,
            vec![w.clone(), b.clone(), image],
            &probe_w,
            |tape, bv, v| {
                weight_adapter_var(v[0], v[1], tape.constant(projector.clone()), v[2], bv).1
            },
        )?,
    );
    for kind in [BlockKind::TextFusion, BlockKind::ImageFusion] {
        let block = perturbed_block(kind, &mut rng);
        let first = uniform(&mut rng, 4, DIM, 1.0);
        let second = uniform(&mut rng, 4, DIM, 1.0);
        let probe = uniform(&mut rng, 4, DIM, 1.0);
        push(
            &format!("block.{}", kind.as_str()),
            block_check(&block, vec![first, second], &probe, |tape, bv, v| {
                pair_fusion_var(tape, v[0], v[1], bv)
            })?,
        );
    }
    let block = perturbed_block(BlockKind::PriorFusion, &mut rng);
    let tokens = uniform(&mut rng, 3, DIM, 1.0);
    let prior = uniform(&mut rng, 5, DIM, 1.0);
    let probe = uniform(&mut rng, 3, DIM, 1.0);
    push(
        "block.prior_fusion",
        block_check(&block, vec![tokens, prior], &probe, |_, bv, v| {
            prior_fusion_var(v[0], Some(v[1]), bv)
        })?,
    );

    let mlp = SpatialMlp::<f64>::init(DIM, &mut rng);
    let desc = Mat::from_fn(3, SPATIAL_DESCRIPTOR_LEN, |_, _| rng.gen_range(0.0..1.0));
    let probe = uniform(&mut rng, 3, DIM, 1.0);
    let params: Vec<Mat<f64>> = mlp.params().into_iter().cloned().collect();
    push(
        "spatial_mlp",
        grad_check(
            |p: &[Mat<f64>]| {
                let mut m = mlp.clone();
                for (dst, src) in m.params_mut().into_iter().zip(p) {
                    *dst = src.clone();
                }
                let tape = Tape::new();
                let mv = m.bind(&tape);
                let out = mv
                    .forward(tape.constant(desc.clone()))
                    .mul(tape.constant(probe.clone()))
                    .sum();
                let g = tape.gradients(out);
                Ok((
                    out.item(),
                    mv.params().into_iter().map(|v| g.wrt(v)).collect(),
                ))
            },
            &params,
            STEP,
        )?,
    );

    push("objective.total", objective_check(seed, &mut rng)?);
    Ok(cases)
}

/// The full training objective of a tiny model, with respect to `W` and `W^a`.
fn objective_check(seed: u64, rng: &mut ChaCha8Rng) -> Result<GradCheckReport> {
    let data = generate_synthetic(&SyntheticConfig {
        n_actions: 4,
        n_objects: 3,
        n_hoi: 10,
        feature_dim: DIM,
        pairs_per_scene: 2,
        scenes: 8,
        grid: 4,
        seed,
        ..SyntheticConfig::default()
    })?;
    let mut model = Model::init(
        &data.hoi_features,
        &data.action_features,
        &data.object_features,
        &data.vocab,
        ModelConfig {
            encoder_layers: 1,
            seed,
            ..ModelConfig::default()
        },
    )?;
    for block in [
        &mut model.weight_adapter,
        &mut model.text_fusion,
        &mut model.image_fusion,
        &mut model.prior_fusion,
    ] {
        let (r, d) = block.up_proj.shape();
        block.up_proj = uniform(rng, r, d, 0.3);
    }
    let weights = LossWeights::default();
    let scenes: Vec<_> = data.train_scenes.iter().take(2).collect();
    let params = vec![
        model.factorization.weights.clone(),
        model.action_weights.clone(),
    ];
    grad_check(
        |p: &[Mat<f64>]| {
            // The act¹ target is a stop-gradient copy of `W^a`, so only the
            // bound leaves move; the model keeps its base-point target.
            let tape = Tape::new();
            let mut bound = model.bind(&tape);
            bound.weights = tape.leaf(p[0].clone());
            bound.action_weights = tape.leaf(p[1].clone());
            let graph = model.loss_graph(&tape, &bound, &scenes, &weights)?;
            let g = tape.gradients(graph.total);
            Ok((
                graph.total.item(),
                vec![g.wrt(bound.weights), g.wrt(bound.action_weights)],
            ))
        },
        &params,
        STEP,
    )
}
