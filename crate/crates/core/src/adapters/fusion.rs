//! Forward passes of the four adapter blocks, each with a tape form used
//! inside the training graph and a plain-matrix wrapper.

use super::block::{AdapterBlock, BlockKind, BlockVars};
use crate::decomp::HoiVocabulary;
use crate::error::{Error, Result};
use crate::numkit::{linalg, Mat, Real, Tape, Var};

/// Additive attention mask value outside a fused pair.
const MASKED: f64 = -1e9;

fn dim_check<T: Real>(op: &'static str, block: &AdapterBlock<T>, m: &Mat<T>) -> Result<()> {
    if m.cols() != block.dim() {
        return Err(Error::Dimension {
            op,
            left: m.shape(),
            right: block.down_proj.shape(),
        });
    }
    Ok(())
}

fn value<T: Real>(v: Var<'_, T>) -> Mat<T> {
    (*v.value()).clone()
}

/// `Ŵ = W + Δ P` and `F̂ = Ŵ B̄ᵀ`, where `Δ` is the block update of `W B̄ᵀ`
/// conditioned on the image feature and `P = B̄(B̄ᵀB̄)⁻¹` maps a feature-space
/// update to its least-squares weight coefficients.
pub fn weight_adapter_var<'t, T: Real>(
    weights: Var<'t, T>,
    basis: Var<'t, T>,
    projector: Var<'t, T>,
    image: Var<'t, T>,
    block: &BlockVars<'t, T>,
) -> (Var<'t, T>, Var<'t, T>) {
    let x = weights.matmul(basis.t());
    let delta = block.delta(x, Some(image), None, None);
    let adapted = weights.add(delta.matmul(projector));
    let features = adapted.matmul(basis.t());
    (adapted, features)
}

/// Plain form of [`weight_adapter_var`]; `image_feature` is `rows × d` (usually one row).
pub fn weight_adapter_forward<T: Real>(
    weights: &Mat<T>,
    frozen_basis: &Mat<T>,
    image_feature: &Mat<T>,
    block: &AdapterBlock<T>,
) -> Result<(Mat<T>, Mat<T>)> {
    block.expect_kind(BlockKind::WeightAdapter)?;
    if weights.cols() != frozen_basis.cols() {
        return Err(Error::Dimension {
            op: "weight_adapter",
            left: weights.shape(),
            right: frozen_basis.shape(),
        });
    }
    dim_check("weight_adapter", block, &frozen_basis.transpose())?;
    dim_check("weight_adapter", block, image_feature)?;
    let projector = linalg::coefficient_projector(frozen_basis)?;
    let tape = Tape::new();
    let bv = block.bind(&tape);
    let (w, f) = weight_adapter_var(
        tape.constant(weights.clone()),
        tape.constant(frozen_basis.clone()),
        tape.constant(projector),
        tape.constant(image_feature.clone()),
        &bv,
    );
    Ok((value(w), value(f)))
}

/// Pair-mean pooling matrix `P × 2P` with entries 1/2 at columns `2i` and `2i+1`.
pub fn pair_pooling<T: Real>(pairs: usize) -> Mat<T> {
    let half = T::lit(0.5);
    Mat::from_fn(
        pairs,
        2 * pairs,
        |i, j| if j / 2 == i { half } else { T::zero() },
    )
}

/// Interleaves rows as `[a₀, b₀, a₁, b₁, ...]`.
pub fn interleave_pairs<'t, T: Real>(first: Var<'t, T>, second: Var<'t, T>) -> Var<'t, T> {
    let p = first.shape().0;
    let order: Vec<usize> = (0..p).flat_map(|i| [i, p + i]).collect();
    Var::concat_rows(&[first, second]).select_rows(&order)
}

/// Fuses row pairs `(first_i, second_i)`: each pair is a two-token sequence
/// with segment embeddings, self-attention is confined to the pair, and the
/// residual output is averaged back to one row per pair.
pub fn pair_fusion_var<'t, T: Real>(
    tape: &'t Tape<T>,
    first: Var<'t, T>,
    second: Var<'t, T>,
    block: &BlockVars<'t, T>,
) -> Var<'t, T> {
    let p = first.shape().0;
    let x = interleave_pairs(first, second);
    let segments: Vec<usize> = (0..2 * p).map(|i| i % 2).collect();
    let masked = T::lit(MASKED);
    let mask = tape.constant(Mat::from_fn(2 * p, 2 * p, |i, j| {
        if i / 2 == j / 2 {
            T::zero()
        } else {
            masked
        }
    }));
    let y = x.add(block.delta(x, None, Some(&segments), Some(mask)));
    tape.constant(pair_pooling(p)).matmul(y)
}

/// Pair mean without any adapter, computed exactly as the block's residual path.
pub fn pair_mean_var<'t, T: Real>(
    tape: &'t Tape<T>,
    first: Var<'t, T>,
    second: Var<'t, T>,
) -> Var<'t, T> {
    let p = first.shape().0;
    tape.constant(pair_pooling(p))
        .matmul(interleave_pairs(first, second))
}

/// Row indices into the action and object tables for every HOI class.
pub fn pair_rows(
    vocab: &HoiVocabulary,
    n_actions: usize,
    n_objects: usize,
) -> Result<(Vec<usize>, Vec<usize>)> {
    let mut acts = Vec::with_capacity(vocab.n_hoi());
    let mut objs = Vec::with_capacity(vocab.n_hoi());
    for (i, &(a, o)) in vocab.pairs.iter().enumerate() {
        if a >= n_actions || o >= n_objects {
            return Err(Error::Vocabulary(format!(
                "class {i} references action {a} / object {o} outside tables of {n_actions} / {n_objects}"
            )));
        }
        acts.push(a);
        objs.push(o);
    }
    Ok((acts, objs))
}

/// One fused text feature per HOI class from its action and object rows.
pub fn text_fusion_forward<T: Real>(
    action_features: &Mat<T>,
    object_features: &Mat<T>,
    vocab: &HoiVocabulary,
    block: &AdapterBlock<T>,
) -> Result<Mat<T>> {
    block.expect_kind(BlockKind::TextFusion)?;
    dim_check("text_fusion", block, action_features)?;
    dim_check("text_fusion", block, object_features)?;
    let (acts, objs) = pair_rows(vocab, action_features.rows(), object_features.rows())?;
    let tape = Tape::new();
    let bv = block.bind(&tape);
    let a = tape.constant(action_features.clone()).select_rows(&acts);
    let o = tape.constant(object_features.clone()).select_rows(&objs);
    Ok(value(pair_fusion_var(&tape, a, o, &bv)))
}

/// Fused human-object image feature.
pub fn image_fusion_forward<T: Real>(
    human: &[T],
    object: &[T],
    block: &AdapterBlock<T>,
) -> Result<Vec<T>> {
    block.expect_kind(BlockKind::ImageFusion)?;
    let h = Mat::row_vector(human);
    let o = Mat::row_vector(object);
    dim_check("image_fusion", block, &h)?;
    dim_check("image_fusion", block, &o)?;
    let tape = Tape::new();
    let bv = block.bind(&tape);
    let out = pair_fusion_var(&tape, tape.constant(h), tape.constant(o), &bv);
    Ok(value(out).into_vec())
}

/// Tokens cross-attend to the prior features; identity when there are none.
pub fn prior_fusion_var<'t, T: Real>(
    tokens: Var<'t, T>,
    prior: Option<Var<'t, T>>,
    block: &BlockVars<'t, T>,
) -> Var<'t, T> {
    match prior {
        Some(p) if p.shape().0 > 0 && tokens.shape().0 > 0 => {
            tokens.add(block.delta(tokens, Some(p), None, None))
        }
        _ => tokens,
    }
}

pub fn prior_fusion_forward<T: Real>(
    tokens: &Mat<T>,
    prior_features: &Mat<T>,
    block: &AdapterBlock<T>,
) -> Result<Mat<T>> {
    block.expect_kind(BlockKind::PriorFusion)?;
    if prior_features.rows() == 0 || tokens.rows() == 0 {
        return Ok(tokens.clone());
    }
    dim_check("prior_fusion", block, tokens)?;
    dim_check("prior_fusion", block, prior_features)?;
    let tape = Tape::new();
    let bv = block.bind(&tape);
    let out = prior_fusion_var(
        tape.constant(tokens.clone()),
        Some(tape.constant(prior_features.clone())),
        &bv,
    );
    Ok(value(out))
}

#[cfg(test)]
mod tests {
    use super::*;
    use rand::{Rng, SeedableRng};
    use rand_chacha::ChaCha8Rng;

    fn random(rng: &mut ChaCha8Rng, r: usize, c: usize) -> Mat<f64> {
        Mat::from_fn(r, c, |_, _| rng.gen_range(-1.0..1.0))
    }

    fn perturb_up(block: &mut AdapterBlock<f64>, rng: &mut ChaCha8Rng) {
        block.up_proj = random(rng, block.up_proj.rows(), block.up_proj.cols()).scale(0.3);
    }

    fn vocab() -> HoiVocabulary {
        HoiVocabulary::new(
            vec!["ride".into(), "hold".into()],
            vec!["horse".into(), "cup".into()],
            vec![(0, 0), (1, 0), (1, 1)],
            vec![true, true, false],
        )
        .unwrap()
    }

    #[test]
    fn zero_up_projection_is_identity() {
        let mut rng = ChaCha8Rng::seed_from_u64(7);
        let d = 16;
        let w = random(&mut rng, 5, 4);
        let b = random(&mut rng, d, 4);
        let img = random(&mut rng, 1, d);
        let wa = AdapterBlock::init(BlockKind::WeightAdapter, d, &mut rng);
        let (wh, fh) = weight_adapter_forward(&w, &b, &img, &wa).unwrap();
        assert_eq!(wh, w);
        assert_eq!(fh, w.matmul(&b.transpose()).unwrap());

        let acts = random(&mut rng, 2, d);
        let objs = random(&mut rng, 2, d);
        let tf = AdapterBlock::init(BlockKind::TextFusion, d, &mut rng);
        let fused = text_fusion_forward(&acts, &objs, &vocab(), &tf).unwrap();
        assert_eq!(fused.shape(), (3, d));
        for (i, &(a, o)) in vocab().pairs.iter().enumerate() {
            for j in 0..d {
                assert_eq!(fused.get(i, j), 0.5 * acts.get(a, j) + 0.5 * objs.get(o, j));
            }
        }

        let tokens = random(&mut rng, 3, d);
        let pf = AdapterBlock::init(BlockKind::PriorFusion, d, &mut rng);
        assert_eq!(
            prior_fusion_forward(&tokens, &random(&mut rng, 4, d), &pf).unwrap(),
            tokens
        );
    }

    #[test]
    fn adapted_features_stay_in_basis_span() {
        let mut rng = ChaCha8Rng::seed_from_u64(8);
        let d = 16;
        let w = random(&mut rng, 6, 3);
        let b = random(&mut rng, d, 3);
        let mut wa = AdapterBlock::init(BlockKind::WeightAdapter, d, &mut rng);
        perturb_up(&mut wa, &mut rng);
        let (wh, fh) = weight_adapter_forward(&w, &b, &random(&mut rng, 1, d), &wa).unwrap();
        assert_ne!(wh, w);
        assert_eq!(fh.shape(), (6, d));
        let refit = crate::decomp::fit_weights(&fh, &b).unwrap();
        assert!(refit.sub(&wh).unwrap().max_abs() < 1e-10);
    }

    #[test]
    fn image_fusion_is_order_sensitive() {
        let mut rng = ChaCha8Rng::seed_from_u64(9);
        let d = 16;
        let mut blk = AdapterBlock::init(BlockKind::ImageFusion, d, &mut rng);
        let h: Vec<f64> = random(&mut rng, 1, d).into_vec();
        let o: Vec<f64> = random(&mut rng, 1, d).into_vec();
        let same = image_fusion_forward(&h, &o, &blk).unwrap();
        let swapped = image_fusion_forward(&o, &h, &blk).unwrap();
        assert!(same
            .iter()
            .zip(&swapped)
            .all(|(a, b)| (a - b).abs() < 1e-15));
        perturb_up(&mut blk, &mut rng);
        let ho = image_fusion_forward(&h, &o, &blk).unwrap();
        let oh = image_fusion_forward(&o, &h, &blk).unwrap();
        assert!(ho.iter().zip(&oh).any(|(a, b)| (a - b).abs() > 1e-6));
    }

    #[test]
    fn prior_fusion_edge_cases() {
        let mut rng = ChaCha8Rng::seed_from_u64(10);
        let d = 16;
        let mut blk = AdapterBlock::init(BlockKind::PriorFusion, d, &mut rng);
        perturb_up(&mut blk, &mut rng);
        let tokens = random(&mut rng, 2, d);
        assert_eq!(
            prior_fusion_forward(&tokens, &Mat::zeros(0, d), &blk).unwrap(),
            tokens
        );
        // Identical keys: every token sees the same attended value.
        let prior = Mat::from_fn(3, d, |_, j| j as f64 * 0.1);
        let one = prior_fusion_forward(&tokens, &prior.select_rows(&[0]).unwrap(), &blk).unwrap();
        let three = prior_fusion_forward(&tokens, &prior, &blk).unwrap();
        assert!(one.sub(&three).unwrap().max_abs() < 1e-12);
    }

    #[test]
    fn kind_and_vocabulary_errors() {
        let mut rng = ChaCha8Rng::seed_from_u64(11);
        let blk = AdapterBlock::<f64>::init(BlockKind::ImageFusion, 16, &mut rng);
        let m = Mat::zeros(2, 16);
        assert!(matches!(
            text_fusion_forward(&m, &m, &vocab(), &blk),
            Err(Error::Parameter(_))
        ));
        let tf = AdapterBlock::<f64>::init(BlockKind::TextFusion, 16, &mut rng);
        let one = Mat::zeros(1, 16);
        assert!(matches!(
            text_fusion_forward(&one, &m, &vocab(), &tf),
            Err(Error::Vocabulary(_))
        ));
        assert!(matches!(
            image_fusion_forward(&[0.0; 3], &[0.0; 3], &blk),
            Err(Error::Dimension { .. })
        ));
    }
}
