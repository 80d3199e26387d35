//! Seeded synthetic zero-shot interaction data.
//!
//! Class features are an object centroid plus an action offset plus noise, so
//! raw features cluster by object. Each scene places a few human-object pairs
//! in disjoint vertical strips of a patch grid; cells covering a pair's union
//! box carry that pair's appearance feature.

use std::fmt;

use rand::seq::SliceRandom;
use rand::{Rng, SeedableRng};
use rand_chacha::ChaCha8Rng;
use rand_distr::{Distribution, StandardNormal, WeightedIndex};

use crate::adapters::{build_ho_token, BoundingBox, FeatureGrid, PairInstance};
use crate::decomp::{FeatureKind, FeatureMatrix, HoiVocabulary};
use crate::error::{Error, Result};
use crate::numkit::Mat;

/// How the unseen classes are chosen.
#[derive(Clone, Copy, Debug, PartialEq, Eq, Hash)]
pub enum SplitMode {
    /// Unseen verbs: every class of the held-out actions is unseen.
    UnseenVerb,
    /// Unseen compositions, most frequent classes held out first.
    NonRareFirst,
    /// Unseen compositions, rarest classes held out first.
    RareFirst,
    /// Unseen objects: every class of the held-out objects is unseen.
    UnseenObject,
}

impl SplitMode {
    pub fn as_str(self) -> &'static str {
        match self {
            SplitMode::UnseenVerb => "uv",
            SplitMode::NonRareFirst => "nf_uc",
            SplitMode::RareFirst => "rf_uc",
            SplitMode::UnseenObject => "uo",
        }
    }

    pub fn parse(s: &str) -> Result<Self> {
        match s {
            "uv" => Ok(SplitMode::UnseenVerb),
            "nf_uc" => Ok(SplitMode::NonRareFirst),
            "rf_uc" => Ok(SplitMode::RareFirst),
            "uo" => Ok(SplitMode::UnseenObject),
            other => Err(Error::Config(format!(
                "unknown split mode '{other}' (expected uv, nf_uc, rf_uc or uo)"
            ))),
        }
    }
}

impl fmt::Display for SplitMode {
    fn fmt(&self, f: &mut fmt::Formatter<'_>) -> fmt::Result {
        f.write_str(self.as_str())
    }
}

#[derive(Clone, Debug, PartialEq)]
pub struct SyntheticConfig {
    pub n_actions: usize,
    pub n_objects: usize,
    pub n_hoi: usize,
    pub feature_dim: usize,
    pub unseen_fraction: f64,
    /// Norm of the per-pair appearance noise around the class feature.
    pub cluster_noise: f64,
    /// Norm of the action offset added to the object centroid.
    pub action_offset: f64,
    /// Norm of the fixed per-class noise in the class descriptions.
    pub class_noise: f64,
    pub pairs_per_scene: usize,
    pub scenes: usize,
    /// Share of scenes held out for evaluation.
    pub test_fraction: f64,
    /// Side length of the square patch grid.
    pub grid: usize,
    pub split: SplitMode,
    pub seed: u64,
}

impl Default for SyntheticConfig {
    fn default() -> Self {
        SyntheticConfig {
            n_actions: 12,
            n_objects: 8,
            n_hoi: 40,
            feature_dim: 64,
            unseen_fraction: 0.25,
            cluster_noise: 0.3,
            action_offset: 0.6,
            class_noise: 0.15,
            pairs_per_scene: 3,
            scenes: 400,
            test_fraction: 0.25,
            grid: 6,
            split: SplitMode::RareFirst,
            seed: 0,
        }
    }
}

impl SyntheticConfig {
    pub fn validate(&self) -> Result<()> {
        let fail = |m: String| Err(Error::Config(m));
        if self.n_actions == 0 || self.n_objects == 0 {
            return fail("need at least one action and one object".into());
        }
        if self.n_hoi < self.n_actions.max(self.n_objects)
            || self.n_hoi > self.n_actions * self.n_objects
        {
            return fail(format!(
                "n_hoi {} must cover every action and object and fit in {}x{}",
                self.n_hoi, self.n_actions, self.n_objects
            ));
        }
        if !(self.unseen_fraction > 0.0 && self.unseen_fraction < 1.0) {
            return fail(format!(
                "unseen_fraction {} outside (0, 1)",
                self.unseen_fraction
            ));
        }
        if !(self.test_fraction > 0.0 && self.test_fraction < 1.0) {
            return fail(format!(
                "test_fraction {} outside (0, 1)",
                self.test_fraction
            ));
        }
        for (name, v) in [
            ("cluster_noise", self.cluster_noise),
            ("action_offset", self.action_offset),
            ("class_noise", self.class_noise),
        ] {
            if !(v.is_finite() && v >= 0.0) {
                return fail(format!("{name} must be finite and non-negative"));
            }
        }
        if self.feature_dim < 4 || !self.feature_dim.is_multiple_of(2) {
            return fail(format!(
                "feature_dim {} must be even and at least 4",
                self.feature_dim
            ));
        }
        if self.pairs_per_scene == 0 || self.grid < 2 * self.pairs_per_scene {
            return fail(format!(
                "grid {} too small for {} pairs per scene",
                self.grid, self.pairs_per_scene
            ));
        }
        let test = self.test_scene_count();
        if test == 0 || test >= self.scenes {
            return fail(format!(
                "{} scenes leave an empty train or test split",
                self.scenes
            ));
        }
        Ok(())
    }

    pub fn test_scene_count(&self) -> usize {
        (self.scenes as f64 * self.test_fraction).round() as usize
    }
}

/// One synthetic image with its candidate pairs.
#[derive(Clone, Debug, PartialEq)]
pub struct SyntheticScene {
    pub image_width: f64,
    pub image_height: f64,
    pub pairs: Vec<PairInstance<f64>>,
    /// Interaction class of each pair.
    pub classes: Vec<usize>,
    pub patches: FeatureGrid<f64>,
    /// `pairs × N_a` binary action labels.
    pub gt_labels: Mat<f64>,
    pub prior_features: Mat<f64>,
}

/// Generator components, kept for diagnostics.
#[derive(Clone, Debug, PartialEq)]
pub struct SyntheticComponents {
    /// `N_o × d` unit object centroids.
    pub centroids: Mat<f64>,
    /// `N_a × d` action offsets of norm `action_offset`.
    pub offsets: Mat<f64>,
    /// Relative sampling frequency of each class.
    pub frequency: Vec<f64>,
}

#[derive(Clone, Debug, PartialEq)]
pub struct SyntheticData {
    pub hoi_features: FeatureMatrix<f64>,
    pub action_features: FeatureMatrix<f64>,
    pub object_features: FeatureMatrix<f64>,
    pub vocab: HoiVocabulary,
    pub train_scenes: Vec<SyntheticScene>,
    pub test_scenes: Vec<SyntheticScene>,
    pub components: SyntheticComponents,
}

fn gaussian(rng: &mut ChaCha8Rng, d: usize, norm: f64) -> Vec<f64> {
    let s = norm / (d as f64).sqrt();
    (0..d)
        .map(|_| {
            let z: f64 = StandardNormal.sample(rng);
            s * z
        })
        .collect()
}

fn unit(v: Vec<f64>) -> Vec<f64> {
    let n = v.iter().map(|x| x * x).sum::<f64>().sqrt();
    v.into_iter().map(|x| x / n).collect()
}

fn add(a: &[f64], b: &[f64]) -> Vec<f64> {
    a.iter().zip(b).map(|(x, y)| x + y).collect()
}

fn vocabulary_pairs(cfg: &SyntheticConfig, rng: &mut ChaCha8Rng) -> Vec<(usize, usize)> {
    let mut pairs = Vec::with_capacity(cfg.n_hoi);
    let mut objects: Vec<usize> = (0..cfg.n_objects).collect();
    objects.shuffle(rng);
    // Cover every action and every object first.
    for i in 0..cfg.n_actions.max(cfg.n_objects) {
        let p = (i % cfg.n_actions, objects[i % cfg.n_objects]);
        if !pairs.contains(&p) {
            pairs.push(p);
        }
    }
    let mut rest: Vec<(usize, usize)> = (0..cfg.n_actions)
        .flat_map(|a| (0..cfg.n_objects).map(move |o| (a, o)))
        .filter(|p| !pairs.contains(p))
        .collect();
    rest.shuffle(rng);
    pairs.extend(rest.into_iter().take(cfg.n_hoi - pairs.len()));
    pairs.sort_unstable_by_key(|&(a, o)| (o, a));
    pairs
}

fn seen_mask(
    cfg: &SyntheticConfig,
    pairs: &[(usize, usize)],
    frequency: &[f64],
    rng: &mut ChaCha8Rng,
) -> Result<Vec<bool>> {
    let n = pairs.len();
    let mut seen = vec![true; n];
    match cfg.split {
        SplitMode::UnseenVerb | SplitMode::UnseenObject => {
            let verbs = cfg.split == SplitMode::UnseenVerb;
            let total = if verbs { cfg.n_actions } else { cfg.n_objects };
            let count = ((total as f64) * cfg.unseen_fraction).round() as usize;
            if count == 0 || count >= total {
                return Err(Error::Config(format!(
                    "unseen_fraction {} holds out {count} of {total} {}",
                    cfg.unseen_fraction,
                    if verbs { "actions" } else { "objects" }
                )));
            }
            let held = rand::seq::index::sample(rng, total, count).into_vec();
            for (i, &(a, o)) in pairs.iter().enumerate() {
                if held.contains(if verbs { &a } else { &o }) {
                    seen[i] = false;
                }
            }
        }
        SplitMode::NonRareFirst | SplitMode::RareFirst => {
            let target = ((n as f64) * cfg.unseen_fraction).round() as usize;
            let mut order: Vec<usize> = (0..n).collect();
            order.sort_by(|&i, &j| frequency[j].total_cmp(&frequency[i]));
            if cfg.split == SplitMode::RareFirst {
                order.reverse();
            }
            let mut held = 0;
            for i in order {
                if held == target {
                    break;
                }
                let (a, o) = pairs[i];
                let covered = |f: &dyn Fn(&(usize, usize)) -> bool| {
                    pairs
                        .iter()
                        .zip(&seen)
                        .enumerate()
                        .any(|(j, (p, &s))| j != i && s && f(p))
                };
                if covered(&|p| p.0 == a) && covered(&|p| p.1 == o) {
                    seen[i] = false;
                    held += 1;
                }
            }
        }
    }
    if !seen.iter().any(|&s| s) || seen.iter().all(|&s| s) {
        return Err(Error::Config(format!(
            "split {} with unseen_fraction {} leaves an empty seen or unseen set",
            cfg.split, cfg.unseen_fraction
        )));
    }
    Ok(seen)
}

fn names(prefix: &str, n: usize) -> Vec<String> {
    (0..n).map(|i| format!("{prefix}{i:02}")).collect()
}

fn matrix(rows: Vec<Vec<f64>>, d: usize) -> Mat<f64> {
    Mat::new(rows.len(), d, rows.into_iter().flatten().collect()).expect("rows of width d")
}

pub fn generate_synthetic(cfg: &SyntheticConfig) -> Result<SyntheticData> {
    cfg.validate()?;
    let d = cfg.feature_dim;
    let mut rng = ChaCha8Rng::seed_from_u64(cfg.seed);
    let centroids: Vec<Vec<f64>> = (0..cfg.n_objects)
        .map(|_| unit(gaussian(&mut rng, d, 1.0)))
        .collect();
    let offsets: Vec<Vec<f64>> = (0..cfg.n_actions)
        .map(|_| {
            unit(gaussian(&mut rng, d, 1.0))
                .into_iter()
                .map(|x| x * cfg.action_offset)
                .collect()
        })
        .collect();
    let pairs = vocabulary_pairs(cfg, &mut rng);
    let mut ranks: Vec<usize> = (0..pairs.len()).collect();
    ranks.shuffle(&mut rng);
    let frequency: Vec<f64> = ranks
        .iter()
        .map(|&r| 1.0 / (1.0 + r as f64).sqrt())
        .collect();
    let seen = seen_mask(cfg, &pairs, &frequency, &mut rng)?;
    let vocab = HoiVocabulary::new(
        names("act", cfg.n_actions),
        names("obj", cfg.n_objects),
        pairs,
        seen,
    )?;

    let class_rows: Vec<Vec<f64>> = vocab
        .pairs
        .iter()
        .map(|&(a, o)| {
            unit(add(
                &add(&centroids[o], &offsets[a]),
                &gaussian(&mut rng, d, cfg.class_noise),
            ))
        })
        .collect();
    let action_rows: Vec<Vec<f64>> = offsets
        .iter()
        .map(|v| {
            unit(add(
                v,
                &gaussian(&mut rng, d, cfg.class_noise * cfg.action_offset),
            ))
        })
        .collect();
    let object_rows: Vec<Vec<f64>> = centroids
        .iter()
        .map(|c| unit(add(c, &gaussian(&mut rng, d, cfg.class_noise))))
        .collect();
    let class_names: Vec<String> = (0..vocab.n_hoi()).map(|i| vocab.hoi_name(i)).collect();
    let hoi_features = FeatureMatrix::new(matrix(class_rows, d), class_names, FeatureKind::Hoi)?;
    let action_features = FeatureMatrix::new(
        matrix(action_rows, d),
        vocab.actions.clone(),
        FeatureKind::Action,
    )?;
    let object_features = FeatureMatrix::new(
        matrix(object_rows, d),
        vocab.objects.clone(),
        FeatureKind::Object,
    )?;

    let seen_classes: Vec<usize> = (0..vocab.n_hoi()).filter(|&i| vocab.seen[i]).collect();
    let train_sampler = WeightedIndex::new(seen_classes.iter().map(|&i| frequency[i]))
        .expect("positive class weights");
    let n_test = cfg.test_scene_count();
    let mut train_scenes = Vec::new();
    let mut test_scenes = Vec::new();
    for s in 0..cfg.scenes {
        let test = s < n_test;
        let classes: Vec<usize> = (0..cfg.pairs_per_scene)
            .map(|_| {
                if test {
                    rng.gen_range(0..vocab.n_hoi())
                } else {
                    seen_classes[train_sampler.sample(&mut rng)]
                }
            })
            .collect();
        let scene = make_scene(
            cfg,
            &vocab,
            hoi_features.features(),
            action_features.features(),
            &classes,
            &mut rng,
        )?;
        if test {
            test_scenes.push(scene);
        } else {
            train_scenes.push(scene);
        }
    }
    Ok(SyntheticData {
        hoi_features,
        action_features,
        object_features,
        vocab,
        train_scenes,
        test_scenes,
        components: SyntheticComponents {
            centroids: matrix(centroids, d),
            offsets: matrix(offsets, d),
            frequency,
        },
    })
}

fn make_scene(
    cfg: &SyntheticConfig,
    vocab: &HoiVocabulary,
    class_features: &Mat<f64>,
    action_features: &Mat<f64>,
    classes: &[usize],
    rng: &mut ChaCha8Rng,
) -> Result<SyntheticScene> {
    let d = cfg.feature_dim;
    let g = cfg.grid;
    let side = g as f64;
    let strip = side / classes.len() as f64;
    let mut cells = Mat::zeros(g * g, d);
    for r in 0..g * g {
        cells.row_mut(r).copy_from_slice(&gaussian(rng, d, 0.05));
    }
    let mut pairs = Vec::with_capacity(classes.len());
    let mut labels = Mat::zeros(classes.len(), vocab.n_actions());
    for (p, &c) in classes.iter().enumerate() {
        let (action, object) = vocab.pairs[c];
        let appearance = add(class_features.row(c), &gaussian(rng, d, cfg.cluster_noise));
        let x0 = strip * p as f64;
        let mid = x0 + strip * rng.gen_range(0.4..0.6);
        let human = BoundingBox::new(
            x0,
            rng.gen_range(0.0..0.3 * side),
            mid,
            rng.gen_range(0.7 * side..side),
        )?;
        let object_box = BoundingBox::new(
            mid,
            rng.gen_range(0.2 * side..0.5 * side),
            x0 + strip,
            rng.gen_range(0.6 * side..0.9 * side),
        )?;
        let pair = PairInstance::new(
            human,
            object_box,
            rng.gen_range(0.6..1.0),
            rng.gen_range(0.6..1.0),
            object,
            appearance.clone(),
            appearance.clone(),
        )?;
        let u = pair.union_box;
        for gy in 0..g {
            for gx in 0..g {
                let (cx, cy) = (gx as f64 + 0.5, gy as f64 + 0.5);
                if cx > u.x1 && cx < u.x2 && cy > u.y1 && cy < u.y2 {
                    let noise = gaussian(rng, d, 0.05);
                    cells
                        .row_mut(gy * g + gx)
                        .copy_from_slice(&add(&appearance, &noise));
                }
            }
        }
        labels.set(p, action, 1.0);
        pairs.push(build_ho_token(pair)?);
    }
    let prior = Mat::from_fn(action_features.rows(), d, |i, j| action_features.get(i, j));
    let prior_noise = matrix(
        (0..prior.rows()).map(|_| gaussian(rng, d, 0.1)).collect(),
        d,
    );
    Ok(SyntheticScene {
        image_width: side,
        image_height: side,
        pairs,
        classes: classes.to_vec(),
        patches: FeatureGrid::new(g, g, cells)?,
        gt_labels: labels,
        prior_features: prior.add(&prior_noise)?,
    })
}

#[cfg(test)]
mod tests {
    use super::*;

    fn small(split: SplitMode) -> SyntheticConfig {
        SyntheticConfig {
            scenes: 24,
            split,
            ..SyntheticConfig::default()
        }
    }

    #[test]
    fn splits_respect_coverage_rules() {
        for split in [
            SplitMode::UnseenVerb,
            SplitMode::NonRareFirst,
            SplitMode::RareFirst,
            SplitMode::UnseenObject,
        ] {
            let data = generate_synthetic(&small(split)).unwrap();
            let v = &data.vocab;
            assert_eq!(v.n_hoi(), 40);
            assert!(
                v.seen.iter().any(|&s| s) && v.seen.iter().any(|&s| !s),
                "{split}"
            );
            let seen_actions = v.seen_actions();
            match split {
                SplitMode::UnseenVerb => {
                    for (i, &(a, _)) in v.pairs.iter().enumerate() {
                        if !v.seen[i] {
                            assert!(!seen_actions[a]);
                        }
                    }
                }
                SplitMode::NonRareFirst | SplitMode::RareFirst => {
                    assert!(seen_actions.iter().all(|&s| s));
                    assert_eq!(v.seen.iter().filter(|&&s| !s).count(), 10);
                }
                SplitMode::UnseenObject => {}
            }
            for scene in &data.train_scenes {
                assert!(scene.classes.iter().all(|&c| v.seen[c]));
            }
            for scene in data.train_scenes.iter().chain(&data.test_scenes) {
                for (p, &c) in scene.classes.iter().enumerate() {
                    let (a, o) = v.pairs[c];
                    assert_eq!(scene.gt_labels.get(p, a), 1.0);
                    assert_eq!(scene.pairs[p].object_class, o);
                }
            }
        }
    }

    #[test]
    fn rare_first_holds_out_low_frequency_classes() {
        let data = generate_synthetic(&small(SplitMode::RareFirst)).unwrap();
        let f = &data.components.frequency;
        let mean = |seen: bool| {
            let xs: Vec<f64> = (0..f.len())
                .filter(|&i| data.vocab.seen[i] == seen)
                .map(|i| f[i])
                .collect();
            xs.iter().sum::<f64>() / xs.len() as f64
        };
        assert!(mean(false) < mean(true));
    }

    #[test]
    fn noiseless_pairs_carry_class_features() {
        let cfg = SyntheticConfig {
            cluster_noise: 0.0,
            ..small(SplitMode::RareFirst)
        };
        let data = generate_synthetic(&cfg).unwrap();
        let scene = &data.test_scenes[0];
        for (pair, &c) in scene.pairs.iter().zip(&scene.classes) {
            assert_eq!(
                pair.human_feature.as_slice(),
                data.hoi_features.features().row(c)
            );
        }
    }

    #[test]
    fn same_seed_same_data() {
        let a = generate_synthetic(&small(SplitMode::UnseenVerb)).unwrap();
        let b = generate_synthetic(&small(SplitMode::UnseenVerb)).unwrap();
        assert_eq!(a, b);
        let c = generate_synthetic(&SyntheticConfig {
            seed: 1,
            ..small(SplitMode::UnseenVerb)
        })
        .unwrap();
        assert_ne!(a.hoi_features, c.hoi_features);
    }

    #[test]
    fn infeasible_splits_are_rejected() {
        let cfg = SyntheticConfig {
            unseen_fraction: 0.01,
            ..small(SplitMode::UnseenVerb)
        };
        assert!(matches!(generate_synthetic(&cfg), Err(Error::Config(_))));
        let cfg = SyntheticConfig {
            unseen_fraction: 1.0,
            ..small(SplitMode::RareFirst)
        };
        assert!(matches!(generate_synthetic(&cfg), Err(Error::Config(_))));
    }
}
