use crate::decomp::HoiVocabulary;
use crate::error::{Error, Result};
use crate::numkit::Mat;

/// Area under the precision-recall curve with all-point interpolation.
/// Ranking is a stable sort on descending score, so ties keep input order.
pub fn average_precision(scores: &[f64], labels: &[bool]) -> Result<f64> {
    if scores.len() != labels.len() {
        return Err(Error::Dimension {
            op: "average_precision",
            left: (1, scores.len()),
            right: (1, labels.len()),
        });
    }
    let positives = labels.iter().filter(|&&l| l).count();
    if positives == 0 {
        return Err(Error::UndefinedAp(0));
    }
    let mut order: Vec<usize> = (0..scores.len()).collect();
    order.sort_by(|&i, &j| scores[j].total_cmp(&scores[i]));
    let mut precision = Vec::with_capacity(order.len());
    let mut hits = Vec::with_capacity(order.len());
    let mut tp = 0usize;
    for (rank, &i) in order.iter().enumerate() {
        if labels[i] {
            tp += 1;
        }
        precision.push(tp as f64 / (rank + 1) as f64);
        hits.push(labels[i]);
    }
    // Interpolate: precision at rank r becomes the max precision at ranks ≥ r.
    for r in (0..precision.len().saturating_sub(1)).rev() {
        precision[r] = precision[r].max(precision[r + 1]);
    }
    let ap = hits
        .iter()
        .zip(&precision)
        .filter(|(&h, _)| h)
        .map(|(_, &p)| p)
        .sum::<f64>()
        / positives as f64;
    Ok(ap)
}

/// `2·s·u/(s+u)`; zero when both are zero.
pub fn harmonic_mean(seen: f64, unseen: f64) -> f64 {
    if seen + unseen == 0.0 {
        0.0
    } else {
        2.0 * seen * unseen / (seen + unseen)
    }
}

/// How the per-object dissimilarity sum is normalized.
#[derive(Clone, Copy, Debug, Default, PartialEq, Eq)]
pub enum AdNormalization {
    /// Mean over unordered distinct pairs.
    #[default]
    PairMean,
    /// Sum over ordered distinct pairs divided by the group size.
    GroupSize,
}

/// Action dissimilarity of one object group.
#[derive(Clone, Copy, Debug, PartialEq)]
pub struct ObjectDissimilarity {
    pub value: f64,
    /// Set when the group has fewer than two classes (value is then 0).
    pub degenerate: bool,
}

/// Per object, the average of `1 − fᵢᵀfⱼ` over classes sharing that object.
pub fn action_dissimilarity(
    features: &Mat<f64>,
    vocab: &HoiVocabulary,
    norm: AdNormalization,
) -> Result<Vec<ObjectDissimilarity>> {
    if features.rows() != vocab.n_hoi() {
        return Err(Error::Dimension {
            op: "action_dissimilarity",
            left: features.shape(),
            right: (vocab.n_hoi(), features.cols()),
        });
    }
    Ok(vocab
        .object_groups()
        .iter()
        .map(|g| {
            if g.len() < 2 {
                return ObjectDissimilarity {
                    value: 0.0,
                    degenerate: true,
                };
            }
            let mut sum = 0.0;
            for (x, &i) in g.iter().enumerate() {
                for &j in &g[x + 1..] {
                    let dot: f64 = features
                        .row(i)
                        .iter()
                        .zip(features.row(j))
                        .map(|(a, b)| a * b)
                        .sum();
                    sum += 1.0 - dot;
                }
            }
            let n = g.len() as f64;
            let value = match norm {
                AdNormalization::PairMean => sum / (n * (n - 1.0) / 2.0),
                AdNormalization::GroupSize => 2.0 * sum / n,
            };
            ObjectDissimilarity {
                value,
                degenerate: false,
            }
        })
        .collect())
}

/// Mean dissimilarity over objects with at least two classes.
pub fn mean_dissimilarity(ad: &[ObjectDissimilarity]) -> f64 {
    let valid: Vec<f64> = ad
        .iter()
        .filter(|a| !a.degenerate)
        .map(|a| a.value)
        .collect();
    if valid.is_empty() {
        0.0
    } else {
        valid.iter().sum::<f64>() / valid.len() as f64
    }
}

#[cfg(test)]
mod tests {
    use super::*;

    #[test]
    fn ap_hand_cases() {
        assert_eq!(
            average_precision(&[0.9, 0.8, 0.1], &[true, true, false]).unwrap(),
            1.0
        );
        assert_eq!(
            average_precision(&[0.9, 0.8, 0.7, 0.1], &[false, false, false, true]).unwrap(),
            0.25
        );
        // Ranking P N P N: precisions 1, 1/2, 2/3, 1/2; interpolated at hits: 1, 2/3.
        let ap = average_precision(&[4.0, 3.0, 2.0, 1.0], &[true, false, true, false]).unwrap();
        assert!((ap - (1.0 + 2.0 / 3.0) / 2.0).abs() < 1e-15);
        // Reversed scores: N P N P, precisions at hits 1/2, 1/2.
        let ap = average_precision(&[1.0, 2.0, 3.0, 4.0], &[true, false, true, false]).unwrap();
        assert!((ap - 0.5).abs() < 1e-15);
        assert!(matches!(
            average_precision(&[1.0], &[false]),
            Err(Error::UndefinedAp(_))
        ));
    }

    #[test]
    fn ties_keep_input_order() {
        assert_eq!(average_precision(&[0.5, 0.5], &[true, false]).unwrap(), 1.0);
        assert_eq!(average_precision(&[0.5, 0.5], &[false, true]).unwrap(), 0.5);
    }

    #[test]
    fn harmonic_mean_cases() {
        assert!((harmonic_mean(35.09, 27.91) - 31.09).abs() < 0.01);
        assert!((harmonic_mean(33.02, 36.45) - 34.65).abs() < 0.01);
        assert_eq!(harmonic_mean(12.5, 12.5), 12.5);
        assert_eq!(harmonic_mean(0.0, 0.0), 0.0);
    }

    fn group_vocab(n: usize) -> HoiVocabulary {
        HoiVocabulary::new(
            (0..n).map(|i| format!("a{i}")).collect(),
            vec!["x".into(), "y".into()],
            (0..n).map(|i| (i, 0)).chain([(0, 1)]).collect(),
            vec![true; n + 1],
        )
        .unwrap()
    }

    #[test]
    fn dissimilarity_cases() {
        let v = group_vocab(3);
        let same = Mat::from_fn(4, 2, |_, j| if j == 0 { 1.0 } else { 0.0 });
        let ad = action_dissimilarity(&same, &v, AdNormalization::PairMean).unwrap();
        assert_eq!(ad[0].value, 0.0);
        assert!(ad[1].degenerate && ad[1].value == 0.0);

        let ortho = Mat::from_fn(4, 4, |i, j| if i == j { 1.0 } else { 0.0 });
        assert_eq!(
            action_dissimilarity(&ortho, &v, AdNormalization::PairMean).unwrap()[0].value,
            1.0
        );

        // Unit vectors with pairwise cosines (0.5, 0.0, 0.25).
        let (c01, c02, c12) = (0.5f64, 0.0f64, 0.25f64);
        let f1 = [c01, (1.0 - c01 * c01).sqrt(), 0.0];
        let y2 = (c12 - c02 * c01) / f1[1];
        let f2 = [c02, y2, (1.0 - c02 * c02 - y2 * y2).sqrt()];
        let f = Mat::from_rows(&[[1.0, 0.0, 0.0], f1, f2, [1.0, 0.0, 0.0]]);
        let ad = action_dissimilarity(&f, &v, AdNormalization::PairMean).unwrap();
        assert!((ad[0].value - 0.75).abs() < 1e-12);
        let literal = action_dissimilarity(&f, &v, AdNormalization::GroupSize).unwrap();
        assert!((literal[0].value - 1.5).abs() < 1e-12);
        assert!((mean_dissimilarity(&ad) - 0.75).abs() < 1e-12);
    }
}
