//! Classification, regularization and scoring objectives.

use crate::decomp::HoiVocabulary;
use crate::error::{Error, Result};
use crate::numkit::{cosine_rows, softmax_row, Mat, Real, Tape, Var, KL_FLOOR};
use crate::numkit::{focal_term, focal_term_grad, sigmoid};

/// Which feature set a label map aggregates in the action score.
#[derive(Clone, Copy, Debug, PartialEq, Eq)]
pub enum LabelVariant {
    /// Applied to union-region and token similarities.
    Union,
    /// Applied to fused human-object similarities.
    Fused,
}

/// `N × N_a` map from class scores to action scores; entry `(i, a)` is `1/q_a`
/// when class `i` has action `a`, with `q_a` the number of classes with that action.
#[derive(Clone, Debug, PartialEq)]
pub struct LabelMap<T> {
    pub matrix: Mat<T>,
    pub variant: LabelVariant,
}

pub fn build_label_maps<T: Real>(vocab: &HoiVocabulary) -> Result<(LabelMap<T>, LabelMap<T>)> {
    vocab.validate()?;
    let mut counts = vec![0usize; vocab.n_actions()];
    for &(a, _) in &vocab.pairs {
        counts[a] += 1;
    }
    if let Some(a) = counts.iter().position(|&c| c == 0) {
        return Err(Error::Vocabulary(format!(
            "action '{}' has no interaction class",
            vocab.actions[a]
        )));
    }
    let mut m = Mat::zeros(vocab.n_hoi(), vocab.n_actions());
    for (i, &(a, _)) in vocab.pairs.iter().enumerate() {
        m.set(i, a, T::one() / T::from_count(counts[a]));
    }
    Ok((
        LabelMap {
            matrix: m.clone(),
            variant: LabelVariant::Union,
        },
        LabelMap {
            matrix: m,
            variant: LabelVariant::Fused,
        },
    ))
}

/// Scalar hyperparameters of the training objective and the scores.
#[derive(Clone, Copy, Debug, PartialEq)]
pub struct LossWeights {
    /// Semantic loss weight.
    pub alpha: f64,
    /// Reconstruction weight.
    pub beta1: f64,
    /// Sparsity weight.
    pub beta2: f64,
    /// Orthogonality weight.
    pub beta3: f64,
    /// Action-regularization weight.
    pub beta4: f64,
    pub gamma1: f64,
    pub gamma2: f64,
    pub tau_score_train: f64,
    pub tau_score_infer: f64,
    pub tau_kl: f64,
    pub focal_gamma: f64,
    pub focal_alpha: f64,
}

impl Default for LossWeights {
    fn default() -> Self {
        LossWeights {
            alpha: 80.0,
            beta1: 0.1,
            beta2: 0.1,
            beta3: 0.001,
            beta4: 50.0,
            gamma1: 2.66,
            gamma2: 2.66,
            tau_score_train: 1.0,
            tau_score_infer: 2.8,
            tau_kl: 0.1,
            focal_gamma: 2.0,
            focal_alpha: 0.25,
        }
    }
}

#[derive(Clone, Copy, Debug, PartialEq, Eq)]
pub enum ScoreMode {
    Train,
    Inference,
}

impl LossWeights {
    pub fn validate(&self) -> Result<()> {
        let all = [
            ("alpha", self.alpha),
            ("beta1", self.beta1),
            ("beta2", self.beta2),
            ("beta3", self.beta3),
            ("beta4", self.beta4),
            ("gamma1", self.gamma1),
            ("gamma2", self.gamma2),
            ("tau_score_train", self.tau_score_train),
            ("tau_score_infer", self.tau_score_infer),
            ("tau_kl", self.tau_kl),
            ("focal_gamma", self.focal_gamma),
            ("focal_alpha", self.focal_alpha),
        ];
        for (name, v) in all {
            if !(v.is_finite() && v >= 0.0) {
                return Err(Error::Parameter(format!(
                    "{name} must be finite and non-negative, got {v}"
                )));
            }
        }
        for (name, v) in [
            ("tau_score_train", self.tau_score_train),
            ("tau_score_infer", self.tau_score_infer),
            ("tau_kl", self.tau_kl),
        ] {
            if v <= 0.0 {
                return Err(Error::Parameter(format!("{name} must be positive")));
            }
        }
        if self.focal_alpha > 1.0 {
            return Err(Error::Parameter("focal_alpha must lie in [0, 1]".into()));
        }
        Ok(())
    }

    pub fn tau_score(&self, mode: ScoreMode) -> f64 {
        match mode {
            ScoreMode::Train => self.tau_score_train,
            ScoreMode::Inference => self.tau_score_infer,
        }
    }
}

fn same_shape<T: Real>(op: &'static str, a: &Mat<T>, b: &Mat<T>) -> Result<()> {
    if a.shape() != b.shape() {
        return Err(Error::Dimension {
            op,
            left: a.shape(),
            right: b.shape(),
        });
    }
    Ok(())
}

/// Sigmoid focal loss over `pairs × classes` logits against binary targets:
/// summed over classes, averaged over pairs. Returns the value and its gradient.
pub fn focal_loss<T: Real>(
    logits: &Mat<T>,
    targets: &Mat<T>,
    alpha: T,
    gamma: T,
) -> Result<(T, Mat<T>)> {
    same_shape("focal_loss", logits, targets)?;
    if targets
        .as_slice()
        .iter()
        .any(|&t| t != T::zero() && t != T::one())
    {
        return Err(Error::Parameter("focal targets must be 0 or 1".into()));
    }
    let inv = T::one() / T::from_count(logits.rows().max(1));
    let mut value = T::zero();
    for (&s, &t) in logits.as_slice().iter().zip(targets.as_slice()) {
        value += focal_term(s, t, alpha, gamma);
    }
    let grad = logits.zip_map(targets, "focal_loss", |s, t| {
        focal_term_grad(s, t, alpha, gamma) * inv
    })?;
    Ok((value * inv, grad))
}

/// Tape form of [`focal_loss`].
pub fn focal_loss_var<'t, T: Real>(
    logits: Var<'t, T>,
    targets: &Mat<T>,
    alpha: T,
    gamma: T,
) -> Var<'t, T> {
    let rows = T::from_count(logits.shape().0.max(1));
    logits
        .focal_sum(targets, alpha, gamma)
        .scale(T::one() / rows)
}

/// Row-wise temperature softmax.
pub fn rows_to_distributions<T: Real>(w: &Mat<T>, tau: T) -> Result<Mat<T>> {
    let mut out = Mat::zeros(w.rows(), w.cols());
    for r in 0..w.rows() {
        out.row_mut(r).copy_from_slice(&softmax_row(w.row(r), tau)?);
    }
    Ok(out)
}

/// Floored log of row distributions, the detached side of every KL term.
pub fn floored_log<T: Real>(dist: &Mat<T>) -> Mat<T> {
    let floor = T::lit(KL_FLOOR);
    dist.map(|q| q.max(floor).ln())
}

/// Mean row KL between `softmax(x/τ)` and the fixed distributions `target`,
/// with the gradient with respect to `x`.
fn row_kl<T: Real>(x: &Mat<T>, target: &Mat<T>, tau: T) -> Result<(T, Mat<T>)> {
    same_shape("row_kl", x, target)?;
    let p = rows_to_distributions(x, tau)?;
    let logq = floored_log(target);
    let n = x.rows();
    let inv_n = T::one() / T::from_count(n.max(1));
    let mut total = T::zero();
    let mut grad = Mat::zeros(x.rows(), x.cols());
    for r in 0..n {
        let (pr, qr) = (p.row(r), logq.row(r));
        let logp: Vec<T> = pr
            .iter()
            .map(|&v| v.max(T::min_positive_value()).ln())
            .collect();
        let kl: T = pr
            .iter()
            .zip(&logp)
            .zip(qr)
            .map(|((&pv, &lp), &lq)| {
                if pv > T::zero() {
                    pv * (lp - lq)
                } else {
                    T::zero()
                }
            })
            .sum();
        total += kl;
        for (j, g) in grad.row_mut(r).iter_mut().enumerate() {
            *g = pr[j] * (logp[j] - qr[j] - kl) / tau * inv_n;
        }
    }
    Ok((total * inv_n, grad))
}

fn check_tau<T: Real>(tau: T) -> Result<()> {
    if !(tau > T::zero()) {
        return Err(Error::Parameter(format!(
            "temperature must be positive, got {tau}"
        )));
    }
    Ok(())
}

/// Action weights broadcast to one row per class through the class→action map.
pub fn expand_action_rows<T: Real>(w_a: &Mat<T>, vocab: &HoiVocabulary) -> Result<Mat<T>> {
    if w_a.rows() != vocab.n_actions() {
        return Err(Error::Vocabulary(format!(
            "{} action weight rows for {} actions",
            w_a.rows(),
            vocab.n_actions()
        )));
    }
    let idx: Vec<usize> = vocab.pairs.iter().map(|&(a, _)| a).collect();
    w_a.select_rows(&idx)
}

/// Mean row KL from the adapted action-subset weights `W_ar` (`N×k`) to the
/// mapped action weights `W^a` (`N_a×k`), gradient to `W_ar` only.
pub fn action_reg_hoi<T: Real>(
    w_ar: &Mat<T>,
    w_a: &Mat<T>,
    vocab: &HoiVocabulary,
    tau: T,
) -> Result<(T, Mat<T>)> {
    check_tau(tau)?;
    if w_ar.rows() != vocab.n_hoi() {
        return Err(Error::Vocabulary(format!(
            "{} subset weight rows for {} classes",
            w_ar.rows(),
            vocab.n_hoi()
        )));
    }
    let target = rows_to_distributions(&expand_action_rows(w_a, vocab)?, tau)?;
    row_kl(w_ar, &target, tau)
}

/// Mean row KL from adapted to original action weights, gradient to the adapted side.
pub fn action_reg_act<T: Real>(adapted: &Mat<T>, original: &Mat<T>, tau: T) -> Result<(T, Mat<T>)> {
    check_tau(tau)?;
    same_shape("action_reg_act", adapted, original)?;
    row_kl(adapted, &rows_to_distributions(original, tau)?, tau)
}

/// Tape form of both action regularizers: `x` against fixed logits `target_logits`.
pub fn action_reg_var<'t, T: Real>(
    x: Var<'t, T>,
    target_logits: &Mat<T>,
    tau: T,
) -> Result<Var<'t, T>> {
    let q = rows_to_distributions(target_logits, tau)?;
    Ok(x.row_kl_to(&floored_log(&q), tau))
}

/// Per-object class groups with at least two members.
fn semantic_groups(vocab: &HoiVocabulary) -> Vec<Vec<usize>> {
    vocab
        .object_groups()
        .into_iter()
        .filter(|g| g.len() >= 2)
        .collect()
}

/// Tape form of the semantic loss. `reference` holds the raw class features.
pub fn semantic_loss_var<'t, T: Real>(
    tape: &'t Tape<T>,
    adapted: Var<'t, T>,
    fused: Var<'t, T>,
    reference: &Mat<T>,
    vocab: &HoiVocabulary,
    tau: T,
) -> Result<Var<'t, T>> {
    check_tau(tau)?;
    let n = vocab.n_hoi();
    for (m, what) in [
        (adapted.shape(), "adapted"),
        (fused.shape(), "fused"),
        (reference.shape(), "reference"),
    ] {
        if m.0 != n || m.1 != reference.cols() {
            return Err(Error::Dimension {
                op: "semantic_loss",
                left: m,
                right: (n, reference.cols()),
            });
        }
        let _ = what;
    }
    let ref_sims = cosine_rows(reference, reference)?;
    let groups = semantic_groups(vocab);
    let rows: usize = groups.iter().map(Vec::len).sum();
    if rows == 0 {
        return Ok(tape.scalar(T::zero()));
    }
    let sims = [adapted.cosine_rows(adapted), fused.cosine_rows(fused)];
    let mut terms = Vec::new();
    for g in &groups {
        let target = rows_to_distributions(&ref_sims.select_rows(g)?.select_cols(g)?, tau)?;
        let logq = floored_log(&target);
        let size = T::from_count(g.len());
        for s in &sims {
            terms.push(
                s.select_rows(g)
                    .select_cols(g)
                    .row_kl_to(&logq, tau)
                    .scale(size),
            );
        }
    }
    Ok(tape.sum_of(&terms).scale(T::one() / T::from_count(rows)))
}

#[derive(Clone, Debug, PartialEq)]
pub struct SemanticLoss<T> {
    pub value: T,
    pub grad_adapted: Mat<T>,
    pub grad_fused: Mat<T>,
}

/// Similarity-structure preservation within object groups: for each class,
/// the softmax over same-object cosine similarities of the adapted features
/// (and of the fused features) is pulled toward that of the raw features.
pub fn semantic_loss<T: Real>(
    adapted: &Mat<T>,
    fused: &Mat<T>,
    reference: &Mat<T>,
    vocab: &HoiVocabulary,
    tau: T,
) -> Result<SemanticLoss<T>> {
    let tape = Tape::new();
    let a = tape.leaf(adapted.clone());
    let f = tape.leaf(fused.clone());
    let loss = semantic_loss_var(&tape, a, f, reference, vocab, tau)?;
    let g = tape.gradients(loss);
    Ok(SemanticLoss {
        value: loss.item(),
        grad_adapted: g.wrt(a),
        grad_fused: g.wrt(f),
    })
}

/// Action logits for a batch of pairs. Inputs are `pairs × d`; output `pairs × N_a`.
#[allow(clippy::too_many_arguments)]
pub fn score_action<T: Real>(
    union_features: &Mat<T>,
    tokens: &Mat<T>,
    fused_pair_features: &Mat<T>,
    adapted: &Mat<T>,
    fused_text: &Mat<T>,
    maps: (&LabelMap<T>, &LabelMap<T>),
    weights: &LossWeights,
) -> Result<Mat<T>> {
    let n = adapted.rows();
    if maps.0.matrix.rows() != n || maps.1.matrix.rows() != n || fused_text.rows() != n {
        return Err(Error::Dimension {
            op: "score_action",
            left: adapted.shape(),
            right: maps.0.matrix.shape(),
        });
    }
    let g1 = T::lit(weights.gamma1);
    let g2 = T::lit(weights.gamma2);
    let unions = cosine_rows(union_features, adapted)?.add(&cosine_rows(tokens, adapted)?)?;
    let fused = cosine_rows(fused_pair_features, fused_text)?;
    unions
        .matmul(&maps.0.matrix)?
        .scale(g1)
        .add(&fused.matmul(&maps.1.matrix)?.scale(g2))
}

/// Tape form of [`score_action`].
#[allow(clippy::too_many_arguments)]
pub fn score_action_var<'t, T: Real>(
    tape: &'t Tape<T>,
    union_features: Var<'t, T>,
    tokens: Var<'t, T>,
    fused_pair_features: Var<'t, T>,
    adapted: Var<'t, T>,
    fused_text: Var<'t, T>,
    maps: (&LabelMap<T>, &LabelMap<T>),
    weights: &LossWeights,
) -> Var<'t, T> {
    let unions = union_features
        .cosine_rows(adapted)
        .add(tokens.cosine_rows(adapted));
    let fused = fused_pair_features.cosine_rows(fused_text);
    unions
        .matmul(tape.constant(maps.0.matrix.clone()))
        .scale(T::lit(weights.gamma1))
        .add(
            fused
                .matmul(tape.constant(maps.1.matrix.clone()))
                .scale(T::lit(weights.gamma2)),
        )
}

/// Values of the seven decomposition terms.
#[derive(Clone, Copy, Debug, Default, PartialEq)]
pub struct DecompositionParts<T> {
    pub recon_hoi: T,
    pub recon_action: T,
    pub sparse_hoi: T,
    pub sparse_action: T,
    pub orthogonality: T,
    pub act_hoi: T,
    pub act_action: T,
}

pub fn fd_loss<T: Real>(p: &DecompositionParts<T>, w: &LossWeights) -> T {
    T::lit(w.beta1) * (p.recon_hoi + p.recon_action)
        + T::lit(w.beta2) * (p.sparse_hoi + p.sparse_action)
        + T::lit(w.beta3) * p.orthogonality
        + T::lit(w.beta4) * (p.act_hoi + p.act_action)
}

pub fn total_loss<T: Real>(cls: T, sem: T, fd: T, w: &LossWeights) -> T {
    cls + T::lit(w.alpha) * sem + fd
}

/// `(s_h · s_o)^τ · σ(s_a)`.
pub fn hoi_score<T: Real>(human_score: T, object_score: T, action_logit: T, tau: T) -> T {
    (human_score * object_score).powf(tau) * sigmoid(action_logit)
}

#[cfg(test)]
mod tests {
    use super::*;
    use crate::numkit::{grad_check, kl_divergence};
    use rand::{Rng, SeedableRng};
    use rand_chacha::ChaCha8Rng;

    fn random(rng: &mut ChaCha8Rng, r: usize, c: usize) -> Mat<f64> {
        Mat::from_fn(r, c, |_, _| rng.gen_range(-1.0..1.0))
    }

    fn vocab() -> HoiVocabulary {
        HoiVocabulary::new(
            vec!["ride".into(), "hold".into(), "feed".into()],
            vec!["horse".into(), "cup".into(), "dog".into()],
            vec![(0, 0), (1, 0), (2, 0), (1, 1), (2, 2), (1, 2)],
            vec![true, true, false, true, true, false],
        )
        .unwrap()
    }

    #[test]
    fn label_map_structure() {
        let (lu, lao) = build_label_maps::<f64>(&vocab()).unwrap();
        assert_eq!(lu.matrix, lao.matrix);
        assert_eq!(lu.variant, LabelVariant::Union);
        let col = lu.matrix.col(1);
        assert_eq!(col.iter().filter(|&&v| v != 0.0).count(), 3);
        assert!(col
            .iter()
            .all(|&v| v == 0.0 || (v - 1.0 / 3.0).abs() < 1e-15));
        for r in 0..6 {
            assert_eq!(lu.matrix.row(r).iter().filter(|&&v| v != 0.0).count(), 1);
        }
        let sums = lu.matrix.col_sums();
        assert!(sums.as_slice().iter().all(|&s| (s - 1.0).abs() < 1e-12));
        let bij = HoiVocabulary::new(
            vec!["a".into(), "b".into()],
            vec!["x".into()],
            vec![(0, 0), (1, 0)],
            vec![true, false],
        )
        .unwrap();
        assert_eq!(
            build_label_maps::<f64>(&bij).unwrap().0.matrix,
            Mat::identity(2)
        );
        let orphan = HoiVocabulary::new(
            vec!["a".into(), "b".into()],
            vec!["x".into()],
            vec![(0, 0)],
            vec![true],
        )
        .unwrap();
        assert!(matches!(
            build_label_maps::<f64>(&orphan),
            Err(Error::Vocabulary(_))
        ));
    }

    #[test]
    fn default_weights_validate() {
        LossWeights::default().validate().unwrap();
        let bad = LossWeights {
            tau_kl: 0.0,
            ..LossWeights::default()
        };
        assert!(bad.validate().is_err());
    }

    #[test]
    fn focal_cases() {
        let (v, _) = focal_loss(
            &Mat::<f64>::from_rows(&[[0.0]]),
            &Mat::from_rows(&[[1.0]]),
            0.25,
            2.0,
        )
        .unwrap();
        assert!((v - 0.25 * 0.25 * 2f64.ln()).abs() < 1e-12);
        assert!((v - 0.043322).abs() < 1e-6);
        let s = Mat::from_rows(&[[1.3, -0.4, 2.0], [-2.2, 0.1, 0.7]]);
        let t = Mat::from_rows(&[[1.0, 0.0, 0.0], [0.0, 1.0, 1.0]]);
        let (v, _) = focal_loss(&s, &t, 0.5, 0.0).unwrap();
        let mut bce = 0.0;
        for (&x, &y) in s.as_slice().iter().zip(t.as_slice()) {
            let p: f64 = 1.0 / (1.0 + f64::exp(-x));
            bce -= y * p.ln() + (1.0 - y) * (1.0 - p).ln();
        }
        assert!((v - 0.5 * bce / 2.0).abs() < 1e-12);
        let r = grad_check(
            |p: &[Mat<f64>]| {
                let (v, g) = focal_loss(&p[0], &t, 0.25, 2.0)?;
                Ok((v, vec![g]))
            },
            std::slice::from_ref(&s),
            1e-5,
        )
        .unwrap();
        assert!(r.max_relative_error < 1e-6, "{r:?}");
        let tape = Tape::new();
        let x = tape.leaf(s.clone());
        let l = focal_loss_var(x, &t, 0.25, 2.0);
        let (v, g) = focal_loss(&s, &t, 0.25, 2.0).unwrap();
        assert!((l.item() - v).abs() < 1e-12);
        assert!(tape.gradients(l).wrt(x).sub(&g).unwrap().max_abs() < 1e-12);
    }

    #[test]
    fn distributions_sharpen_with_low_temperature() {
        let d = rows_to_distributions(&Mat::<f64>::from_rows(&[[0.4, 0.4, 0.4]]), 0.1).unwrap();
        assert!(d.as_slice().iter().all(|&v| (v - 1.0 / 3.0).abs() < 1e-15));
        let row = Mat::from_rows(&[[0.3, -0.5, 0.9, 0.1]]);
        let entropy = |m: &Mat<f64>| -m.as_slice().iter().map(|&p| p * p.ln()).sum::<f64>();
        let sharp = rows_to_distributions(&row, 0.1).unwrap();
        let soft = rows_to_distributions(&row, 1.0).unwrap();
        assert!(entropy(&sharp) < entropy(&soft));
        assert!((sharp.sum() - 1.0).abs() < 1e-12);
    }

    #[test]
    fn action_regularizer_cases() {
        let v = vocab();
        let mut rng = ChaCha8Rng::seed_from_u64(3);
        let w_a = random(&mut rng, 3, 2);
        let mapped = expand_action_rows(&w_a, &v).unwrap();
        assert_eq!(action_reg_hoi(&mapped, &w_a, &v, 0.1).unwrap().0, 0.0);

        // One class, k = 2: logits [τ ln 2, 0] give p = [2/3, 1/3] against a uniform target.
        let single =
            HoiVocabulary::new(vec!["a".into()], vec!["x".into()], vec![(0, 0)], vec![true])
                .unwrap();
        let tau = 0.1;
        let w_ar = Mat::from_rows(&[[tau * 2f64.ln(), 0.0]]);
        let (kl, _) = action_reg_hoi(&w_ar, &Mat::from_rows(&[[0.0, 0.0]]), &single, tau).unwrap();
        let expected = (2.0 / 3.0) * (4.0f64 / 3.0).ln() + (1.0 / 3.0) * (2.0f64 / 3.0).ln();
        assert!((kl - expected).abs() < 1e-14);
        assert!((kl - kl_divergence(&[2.0 / 3.0, 1.0 / 3.0], &[0.5, 0.5]).unwrap()).abs() < 1e-14);

        let w_ar = random(&mut rng, 6, 2);
        let r = grad_check(
            |p: &[Mat<f64>]| {
                let (v, g) = action_reg_hoi(&p[0], &w_a, &v, 0.1)?;
                Ok((v, vec![g]))
            },
            std::slice::from_ref(&w_ar),
            1e-5,
        )
        .unwrap();
        assert!(r.max_relative_error < 1e-6, "{r:?}");

        let adapted = random(&mut rng, 3, 2);
        assert_eq!(action_reg_act(&w_a, &w_a, 0.1).unwrap().0, 0.0);
        assert!(action_reg_act(&adapted, &w_a, 0.1).unwrap().0 > 0.0);
        assert!(matches!(
            action_reg_act(&adapted, &random(&mut rng, 2, 2), 0.1),
            Err(Error::Dimension { .. })
        ));
        let tape = Tape::new();
        let x = tape.leaf(adapted.clone());
        let l = action_reg_var(x, &w_a, 0.1).unwrap();
        let (val, g) = action_reg_act(&adapted, &w_a, 0.1).unwrap();
        assert!((l.item() - val).abs() < 1e-12);
        assert!(tape.gradients(l).wrt(x).sub(&g).unwrap().max_abs() < 1e-10);
    }

    #[test]
    fn semantic_cases() {
        let v = vocab();
        let mut rng = ChaCha8Rng::seed_from_u64(5);
        let f = random(&mut rng, 6, 8).normalize_rows().unwrap();
        assert!(semantic_loss(&f, &f, &f, &v, 0.1).unwrap().value.abs() < 1e-14);
        assert!(semantic_loss(&f, &f, &f, &v, 0.0).is_err());

        // Object "cup" has one class: moving it alone changes nothing.
        let mut moved = f.clone();
        for j in 0..8 {
            moved.set(3, j, rng.gen_range(-1.0..1.0));
        }
        assert!(
            semantic_loss(&moved, &moved, &f, &v, 0.1)
                .unwrap()
                .value
                .abs()
                < 1e-14
        );

        let a = random(&mut rng, 6, 8);
        let b = random(&mut rng, 6, 8);
        assert!(semantic_loss(&a, &b, &f, &v, 0.1).unwrap().value > 0.0);
        let r = grad_check(
            |p: &[Mat<f64>]| {
                let l = semantic_loss(&p[0], &p[1], &f, &v, 0.1)?;
                Ok((l.value, vec![l.grad_adapted, l.grad_fused]))
            },
            &[a, b],
            1e-5,
        )
        .unwrap();
        assert!(r.max_relative_error < 1e-5, "{r:?}");
    }

    #[test]
    fn score_spot_values() {
        let v = HoiVocabulary::new(
            vec!["a".into(), "b".into()],
            vec!["x".into(), "y".into()],
            vec![(0, 0), (1, 1)],
            vec![true, false],
        )
        .unwrap();
        let (lu, lao) = build_label_maps::<f64>(&v).unwrap();
        let f = Mat::from_rows(&[[1.0, 0.0], [1.0, 0.0]]);
        let q = Mat::from_rows(&[[2.0, 0.0]]);
        let w = LossWeights::default();
        let s = score_action(&q, &q, &q, &f, &f, (&lu, &lao), &w).unwrap();
        assert!(
            s.as_slice().iter().all(|&x| (x - 7.98).abs() < 1e-12),
            "{s:?}"
        );
        let zero = LossWeights {
            gamma1: 0.0,
            gamma2: 0.0,
            ..w
        };
        assert_eq!(
            score_action(&q, &q, &q, &f, &f, (&lu, &lao), &zero).unwrap(),
            Mat::zeros(1, 2)
        );
    }

    #[test]
    fn composition_cases() {
        let w = LossWeights::default();
        assert_eq!(fd_loss(&DecompositionParts::<f64>::default(), &w), 0.0);
        let ones = DecompositionParts {
            recon_hoi: 1.0f64,
            recon_action: 1.0,
            sparse_hoi: 1.0,
            sparse_action: 1.0,
            orthogonality: 1.0,
            act_hoi: 1.0,
            act_action: 1.0,
        };
        assert!((fd_loss(&ones, &w) - 100.401).abs() < 1e-12);
        assert_eq!(total_loss(1.0, 0.0, 0.0, &w), 1.0);
        assert_eq!(total_loss(1.0, 1.0, 1.0, &w), 82.0);
        assert_eq!(total_loss(0.0, 0.0, 3.5, &w), 3.5);
    }

    #[test]
    fn hoi_score_cases() {
        assert!((hoi_score(0.5f64, 0.5, 0.0, 2.8) - 0.25f64.powf(2.8) * 0.5).abs() < 1e-15);
        let by_logs = (2.8 * 0.25f64.ln()).exp() * 0.5;
        assert!((hoi_score(0.5f64, 0.5, 0.0, 2.8) - by_logs).abs() < 1e-15);
        assert!((hoi_score(0.5f64, 0.5, 0.0, 2.8) - 0.0103087).abs() < 1e-6);
        for tau in [1.0, 2.8] {
            assert!(
                (hoi_score(1.0f64, 1.0, 0.7, tau) - 1.0 / (1.0 + (-0.7f64).exp())).abs() < 1e-15
            );
        }
    }
}
