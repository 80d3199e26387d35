use std::collections::HashSet;

use crate::error::{Error, Result};
use crate::numkit::{Mat, Real};

/// Which description set a feature matrix was encoded from.
#[derive(Clone, Copy, Debug, PartialEq, Eq, Hash)]
pub enum FeatureKind {
    Hoi,
    Action,
    Object,
    /// Interaction prior-knowledge descriptions.
    Prior,
}

impl FeatureKind {
    pub fn as_str(self) -> &'static str {
        match self {
            FeatureKind::Hoi => "hoi",
            FeatureKind::Action => "action",
            FeatureKind::Object => "object",
            FeatureKind::Prior => "prior",
        }
    }

    pub fn parse(s: &str) -> Result<Self> {
        match s.trim() {
            "hoi" => Ok(FeatureKind::Hoi),
            "action" => Ok(FeatureKind::Action),
            "object" => Ok(FeatureKind::Object),
            "prior" => Ok(FeatureKind::Prior),
            other => Err(Error::Format(format!("unknown feature kind {other:?}"))),
        }
    }
}

/// Class-description embeddings, one unit-norm row per class.
#[derive(Clone, Debug, PartialEq)]
pub struct FeatureMatrix<T> {
    features: Mat<T>,
    class_names: Vec<String>,
    kind: FeatureKind,
}

impl<T: Real> FeatureMatrix<T> {
    /// Normalizes every row to unit length; names must be unique and match the row count.
    pub fn new(features: Mat<T>, class_names: Vec<String>, kind: FeatureKind) -> Result<Self> {
        if class_names.len() != features.rows() {
            return Err(Error::Consistency {
                expected: format!("{} class names", features.rows()),
                actual: format!("{} class names", class_names.len()),
            });
        }
        let mut seen = HashSet::new();
        if let Some(dup) = class_names.iter().find(|n| !seen.insert(n.as_str())) {
            return Err(Error::Vocabulary(format!("duplicate class name {dup:?}")));
        }
        if !features.all_finite() {
            return Err(Error::Numeric("feature matrix".into()));
        }
        let features = features.normalize_rows()?;
        Ok(FeatureMatrix {
            features,
            class_names,
            kind,
        })
    }

    pub fn features(&self) -> &Mat<T> {
        &self.features
    }

    pub fn class_names(&self) -> &[String] {
        &self.class_names
    }

    pub fn kind(&self) -> FeatureKind {
        self.kind
    }

    pub fn n_classes(&self) -> usize {
        self.features.rows()
    }

    pub fn dim(&self) -> usize {
        self.features.cols()
    }
}

/// Per-class weights and class-shared basis, `F ≈ W Bᵀ`.
#[derive(Clone, Debug, PartialEq)]
pub struct Factorization<T> {
    /// `N×m`.
    pub weights: Mat<T>,
    /// `d×m`; columns are the basis features.
    pub basis: Mat<T>,
    /// Sorted, distinct basis-column indices shared with the action reconstruction.
    pub action_index_set: Vec<usize>,
    pub frozen_basis: bool,
}

impl<T: Real> Factorization<T> {
    pub fn rank(&self) -> usize {
        self.basis.cols()
    }

    /// Action basis `B^a`: the basis columns at the action index set.
    pub fn action_basis(&self) -> Result<Mat<T>> {
        self.basis.select_cols(&self.action_index_set)
    }

    pub fn reconstruct(&self) -> Result<Mat<T>> {
        super::reconstruct(&self.weights, &self.basis, None)
    }

    pub fn validate(&self) -> Result<()> {
        if self.weights.cols() != self.basis.cols() {
            return Err(Error::Dimension {
                op: "factorization",
                left: self.weights.shape(),
                right: self.basis.shape(),
            });
        }
        let m = self.basis.cols();
        if self.action_index_set.windows(2).any(|w| w[0] >= w[1]) {
            return Err(Error::Parameter(
                "action index set must be strictly increasing".into(),
            ));
        }
        if let Some(&bad) = self.action_index_set.iter().find(|&&i| i >= m) {
            return Err(Error::Index { index: bad, len: m });
        }
        Ok(())
    }
}

/// Action and object names plus the (action, object) pair of every interaction class.
#[derive(Clone, Debug, PartialEq, Eq, Hash)]
pub struct HoiVocabulary {
    pub actions: Vec<String>,
    pub objects: Vec<String>,
    pub pairs: Vec<(usize, usize)>,
    pub seen: Vec<bool>,
}

impl HoiVocabulary {
    pub fn new(
        actions: Vec<String>,
        objects: Vec<String>,
        pairs: Vec<(usize, usize)>,
        seen: Vec<bool>,
    ) -> Result<Self> {
        let v = HoiVocabulary {
            actions,
            objects,
            pairs,
            seen,
        };
        v.validate()?;
        Ok(v)
    }

    pub fn validate(&self) -> Result<()> {
        if self.seen.len() != self.pairs.len() {
            return Err(Error::Vocabulary(format!(
                "{} seen flags for {} pairs",
                self.seen.len(),
                self.pairs.len()
            )));
        }
        for (i, &(a, o)) in self.pairs.iter().enumerate() {
            if a >= self.actions.len() || o >= self.objects.len() {
                return Err(Error::Vocabulary(format!(
                    "pair {i} references action {a} / object {o} outside {}x{}",
                    self.actions.len(),
                    self.objects.len()
                )));
            }
        }
        let mut uniq = HashSet::new();
        if let Some(p) = self.pairs.iter().find(|p| !uniq.insert(**p)) {
            return Err(Error::Vocabulary(format!("duplicate pair {p:?}")));
        }
        if !self.seen.iter().any(|&s| s) {
            return Err(Error::Vocabulary("no seen interaction class".into()));
        }
        Ok(())
    }

    pub fn n_hoi(&self) -> usize {
        self.pairs.len()
    }

    pub fn n_actions(&self) -> usize {
        self.actions.len()
    }

    pub fn n_objects(&self) -> usize {
        self.objects.len()
    }

    pub fn action_of(&self, hoi: usize) -> usize {
        self.pairs[hoi].0
    }

    pub fn object_of(&self, hoi: usize) -> usize {
        self.pairs[hoi].1
    }

    /// Interaction-class indices grouped by object, in class order.
    pub fn object_groups(&self) -> Vec<Vec<usize>> {
        let mut groups = vec![Vec::new(); self.objects.len()];
        for (i, &(_, o)) in self.pairs.iter().enumerate() {
            groups[o].push(i);
        }
        groups
    }

    /// Whether each action appears in at least one seen class.
    pub fn seen_actions(&self) -> Vec<bool> {
        let mut out = vec![false; self.actions.len()];
        for (&(a, _), &s) in self.pairs.iter().zip(&self.seen) {
            out[a] |= s;
        }
        out
    }

    pub fn hoi_name(&self, i: usize) -> String {
        let (a, o) = self.pairs[i];
        format!("{} {}", self.actions[a], self.objects[o])
    }

    /// Index of the class `(action, object)`, if present.
    pub fn find(&self, action: usize, object: usize) -> Option<usize> {
        self.pairs.iter().position(|&p| p == (action, object))
    }
}
