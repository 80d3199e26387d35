//! Vision-branch constructions: human-object tokens, the spatial map, the
//! frozen toy encoder and region pooling.

use rand::SeedableRng;
use rand_chacha::ChaCha8Rng;

use super::block::{fan_in_uniform, Attention, AttentionVars};
use super::geometry::{spatial_descriptor, BoundingBox, SPATIAL_DESCRIPTOR_LEN};
use crate::error::{Error, Result};
use crate::numkit::{Mat, Real, Tape, Var};

/// Hidden width of the spatial descriptor map.
pub const SPATIAL_HIDDEN: usize = 64;

/// Two-layer map from the 11-scalar box descriptor to a `d`-dimensional feature.
#[derive(Clone, Debug, PartialEq)]
pub struct SpatialMlp<T> {
    pub hidden: Mat<T>,
    pub hidden_bias: Mat<T>,
    pub output: Mat<T>,
    pub output_bias: Mat<T>,
}

impl<T: Real> SpatialMlp<T> {
    pub fn init(dim: usize, rng: &mut ChaCha8Rng) -> Self {
        SpatialMlp {
            hidden: fan_in_uniform(rng, SPATIAL_DESCRIPTOR_LEN, SPATIAL_HIDDEN),
            hidden_bias: Mat::zeros(1, SPATIAL_HIDDEN),
            output: fan_in_uniform::<T>(rng, SPATIAL_HIDDEN, dim).scale(T::lit(0.1)),
            output_bias: Mat::zeros(1, dim),
        }
    }

    pub fn dim(&self) -> usize {
        self.output.cols()
    }

    pub fn params(&self) -> Vec<&Mat<T>> {
        vec![
            &self.hidden,
            &self.hidden_bias,
            &self.output,
            &self.output_bias,
        ]
    }

    pub fn params_mut(&mut self) -> Vec<&mut Mat<T>> {
        vec![
            &mut self.hidden,
            &mut self.hidden_bias,
            &mut self.output,
            &mut self.output_bias,
        ]
    }

    pub fn bind<'t>(&self, tape: &'t Tape<T>) -> SpatialMlpVars<'t, T> {
        SpatialMlpVars {
            hidden: tape.leaf(self.hidden.clone()),
            hidden_bias: tape.leaf(self.hidden_bias.clone()),
            output: tape.leaf(self.output.clone()),
            output_bias: tape.leaf(self.output_bias.clone()),
        }
    }

    /// Maps a batch of descriptors (`rows × 11`).
    pub fn forward(&self, descriptors: &Mat<T>) -> Result<Mat<T>> {
        if descriptors.cols() != SPATIAL_DESCRIPTOR_LEN {
            return Err(Error::Dimension {
                op: "spatial_mlp",
                left: descriptors.shape(),
                right: self.hidden.shape(),
            });
        }
        let tape = Tape::new();
        let vars = self.bind(&tape);
        Ok((*vars.forward(tape.constant(descriptors.clone())).value()).clone())
    }
}

#[derive(Clone, Copy)]
pub struct SpatialMlpVars<'t, T> {
    pub hidden: Var<'t, T>,
    pub hidden_bias: Var<'t, T>,
    pub output: Var<'t, T>,
    pub output_bias: Var<'t, T>,
}

impl<'t, T: Real> SpatialMlpVars<'t, T> {
    pub fn params(&self) -> Vec<Var<'t, T>> {
        vec![self.hidden, self.hidden_bias, self.output, self.output_bias]
    }

    pub fn forward(&self, descriptors: Var<'t, T>) -> Var<'t, T> {
        descriptors
            .matmul(self.hidden)
            .add_row(self.hidden_bias)
            .tanh()
            .matmul(self.output)
            .add_row(self.output_bias)
    }
}

/// Spatial feature of a box pair: descriptor then the two-layer map.
pub fn spatial_feature<T: Real>(
    human: &BoundingBox<T>,
    object: &BoundingBox<T>,
    image_width: T,
    image_height: T,
    mlp: &SpatialMlp<T>,
) -> Result<Vec<T>> {
    let desc = spatial_descriptor(human, object, image_width, image_height)?;
    Ok(mlp.forward(&Mat::row_vector(&desc))?.into_vec())
}

/// One human-object candidate.
#[derive(Clone, Debug, PartialEq)]
pub struct PairInstance<T> {
    pub human_box: BoundingBox<T>,
    pub object_box: BoundingBox<T>,
    pub union_box: BoundingBox<T>,
    pub human_score: T,
    pub object_score: T,
    pub object_class: usize,
    pub human_feature: Vec<T>,
    pub object_feature: Vec<T>,
    pub spatial_feature: Vec<T>,
    /// Empty until [`build_ho_token`] runs.
    pub token: Vec<T>,
}

impl<T: Real> PairInstance<T> {
    /// Candidate with a zero spatial feature and no token yet.
    #[allow(clippy::too_many_arguments)]
    pub fn new(
        human_box: BoundingBox<T>,
        object_box: BoundingBox<T>,
        human_score: T,
        object_score: T,
        object_class: usize,
        human_feature: Vec<T>,
        object_feature: Vec<T>,
    ) -> Result<Self> {
        for s in [human_score, object_score] {
            if !(s >= T::zero() && s <= T::one()) {
                return Err(Error::Parameter(format!(
                    "detector score {s} outside [0, 1]"
                )));
            }
        }
        if human_feature.len() != object_feature.len() {
            return Err(Error::Dimension {
                op: "pair_instance",
                left: (1, human_feature.len()),
                right: (1, object_feature.len()),
            });
        }
        let d = human_feature.len();
        Ok(PairInstance {
            union_box: human_box.union(&object_box),
            human_box,
            object_box,
            human_score,
            object_score,
            object_class,
            human_feature,
            object_feature,
            spatial_feature: vec![T::zero(); d],
            token: Vec::new(),
        })
    }

    pub fn dim(&self) -> usize {
        self.human_feature.len()
    }
}

/// Sets `token = (f_h + f_o)/2 + spatial_feature`.
pub fn build_ho_token<T: Real>(mut pair: PairInstance<T>) -> Result<PairInstance<T>> {
    let d = pair.human_feature.len();
    if pair.object_feature.len() != d || pair.spatial_feature.len() != d {
        return Err(Error::Dimension {
            op: "build_ho_token",
            left: (1, d),
            right: (pair.object_feature.len(), pair.spatial_feature.len()),
        });
    }
    let half = T::lit(0.5);
    pair.token = (0..d)
        .map(|i| (pair.human_feature[i] + pair.object_feature[i]) * half + pair.spatial_feature[i])
        .collect();
    Ok(pair)
}

/// `height × width` grid of `d`-dimensional cells, stored row-major as `(height·width) × d`.
#[derive(Clone, Debug, PartialEq)]
pub struct FeatureGrid<T> {
    pub height: usize,
    pub width: usize,
    pub cells: Mat<T>,
}

impl<T: Real> FeatureGrid<T> {
    pub fn new(height: usize, width: usize, cells: Mat<T>) -> Result<Self> {
        if height == 0 || width == 0 || cells.rows() != height * width {
            return Err(Error::Dimension {
                op: "feature_grid",
                left: (height, width),
                right: cells.shape(),
            });
        }
        Ok(FeatureGrid {
            height,
            width,
            cells,
        })
    }

    pub fn dim(&self) -> usize {
        self.cells.cols()
    }

    pub fn spatial_mean(&self) -> Vec<T> {
        self.cells.mean_rows().into_vec()
    }
}

#[derive(Clone, Debug, PartialEq)]
pub struct EncoderOutput<T> {
    pub adapted_tokens: Mat<T>,
    pub feature_map: FeatureGrid<T>,
    pub pooled: Vec<T>,
}

/// Residual-branch scale of the toy encoder's output projections, so that a
/// frozen random encoder perturbs rather than scrambles its input.
pub const ENCODER_BRANCH_SCALE: f64 = 0.1;
pub const ENCODER_HEADS: usize = 2;

#[derive(Clone, Debug, PartialEq)]
struct EncoderLayer<T> {
    attention: Attention<T>,
    ffn_in: Mat<T>,
    ffn_in_bias: Mat<T>,
    ffn_out: Mat<T>,
    ffn_out_bias: Mat<T>,
}

/// Frozen pre-norm transformer encoder standing in for a pretrained visual
/// backbone. Patches carry sinusoidal position encodings (added to the
/// attention input only); pair tokens carry none.
#[derive(Clone, Debug, PartialEq)]
pub struct ToyEncoder<T> {
    dim: usize,
    layers: Vec<EncoderLayer<T>>,
}

impl<T: Real> ToyEncoder<T> {
    pub fn new(dim: usize, layers: usize, seed: u64) -> Result<Self> {
        if dim < ENCODER_HEADS || !dim.is_multiple_of(ENCODER_HEADS) {
            return Err(Error::Parameter(format!(
                "encoder width {dim} must be a positive multiple of {ENCODER_HEADS}"
            )));
        }
        let mut rng = ChaCha8Rng::seed_from_u64(seed);
        let branch = T::lit(ENCODER_BRANCH_SCALE);
        let layers = (0..layers)
            .map(|_| {
                let mut attention = Attention::init(dim, ENCODER_HEADS, &mut rng);
                attention.output = attention.output.scale(branch);
                EncoderLayer {
                    attention,
                    ffn_in: fan_in_uniform(&mut rng, dim, 2 * dim),
                    ffn_in_bias: Mat::zeros(1, 2 * dim),
                    ffn_out: fan_in_uniform::<T>(&mut rng, 2 * dim, dim).scale(branch),
                    ffn_out_bias: Mat::zeros(1, dim),
                }
            })
            .collect();
        Ok(ToyEncoder { dim, layers })
    }

    pub fn depth(&self) -> usize {
        self.layers.len()
    }

    pub fn dim(&self) -> usize {
        self.dim
    }

    pub fn forward(&self, patches: &FeatureGrid<T>, tokens: &Mat<T>) -> Result<EncoderOutput<T>> {
        self.check(patches.dim(), tokens)?;
        let tape = Tape::new();
        let (map, toks, pooled) = self.forward_var(
            &tape,
            tape.constant(patches.cells.clone()),
            tape.constant(tokens.clone()),
            patches.height,
            patches.width,
        );
        Ok(EncoderOutput {
            adapted_tokens: (*toks.value()).clone(),
            feature_map: FeatureGrid::new(patches.height, patches.width, (*map.value()).clone())?,
            pooled: pooled.value().as_slice().to_vec(),
        })
    }

    fn check(&self, patch_dim: usize, tokens: &Mat<T>) -> Result<()> {
        if patch_dim != self.dim || (tokens.rows() > 0 && tokens.cols() != self.dim) {
            return Err(Error::Dimension {
                op: "toy_encoder",
                left: (patch_dim, self.dim),
                right: tokens.shape(),
            });
        }
        Ok(())
    }

    /// Tape form; returns the feature map, adapted tokens and the `1×d` pooled mean.
    /// Encoder weights enter as constants.
    pub fn forward_var<'t>(
        &self,
        tape: &'t Tape<T>,
        patches: Var<'t, T>,
        tokens: Var<'t, T>,
        height: usize,
        width: usize,
    ) -> (Var<'t, T>, Var<'t, T>, Var<'t, T>) {
        let n_patch = height * width;
        let n_tok = tokens.shape().0;
        let pooled = |map: Var<'t, T>| map.col_sums().scale(T::one() / T::from_count(n_patch));
        if self.layers.is_empty() {
            return (patches, tokens, pooled(patches));
        }
        let mut x = if n_tok > 0 {
            Var::concat_rows(&[patches, tokens])
        } else {
            patches
        };
        let mut positions = Mat::zeros(n_patch + n_tok, self.dim);
        let pe = sinusoidal_positions::<T>(n_patch, self.dim);
        positions.as_mut_slice()[..pe.len()].copy_from_slice(pe.as_slice());
        let positions = tape.constant(positions);
        for layer in &self.layers {
            let c = |m: &Mat<T>| tape.constant(m.clone());
            let attn = AttentionVars {
                heads: layer.attention.heads,
                query: c(&layer.attention.query),
                key: c(&layer.attention.key),
                value: c(&layer.attention.value),
                output: c(&layer.attention.output),
            };
            let h = x.layer_norm_rows().add(positions);
            x = x.add(attn.forward(h, h, None));
            let f = x
                .layer_norm_rows()
                .matmul(c(&layer.ffn_in))
                .add_row(c(&layer.ffn_in_bias))
                .gelu()
                .matmul(c(&layer.ffn_out))
                .add_row(c(&layer.ffn_out_bias));
            x = x.add(f);
        }
        let map = x.select_rows(&(0..n_patch).collect::<Vec<_>>());
        let toks = if n_tok > 0 {
            x.select_rows(&(n_patch..n_patch + n_tok).collect::<Vec<_>>())
        } else {
            tokens
        };
        (map, toks, pooled(map))
    }
}

/// Standard sine/cosine position table, scaled to unit row norm.
fn sinusoidal_positions<T: Real>(n: usize, dim: usize) -> Mat<T> {
    let norm = (2.0 / dim as f64).sqrt();
    Mat::from_fn(n, dim, |p, i| {
        let freq = 1.0 / 10000f64.powf((2 * (i / 2)) as f64 / dim as f64);
        let a = p as f64 * freq;
        T::lit(if i % 2 == 0 { a.sin() } else { a.cos() } * norm)
    })
}

/// Bins per side of the region pooling grid.
pub const ROI_BINS: usize = 7;

/// Row vector of cell weights such that `weights · cells` is the pooled region
/// feature: the box is split into `p×p` equal bins, each bin averages the cells
/// it overlaps weighted by overlap area, then the bins are averaged.
pub fn roi_pool_weights<T: Real>(
    height: usize,
    width: usize,
    image_width: T,
    image_height: T,
    region: &BoundingBox<T>,
    bins: usize,
) -> Result<Mat<T>> {
    let b = region
        .clip(image_width, image_height)
        .ok_or(Error::Degenerate {
            what: "region box after clipping",
            index: 0,
        })?;
    let cw = image_width / T::from_count(width);
    let ch = image_height / T::from_count(height);
    let bw = b.width() / T::from_count(bins);
    let bh = b.height() / T::from_count(bins);
    let bin_share = T::one() / T::from_count(bins * bins);
    let mut weights = Mat::zeros(1, height * width);
    for by in 0..bins {
        for bx in 0..bins {
            let x1 = b.x1 + bw * T::from_count(bx);
            let y1 = b.y1 + bh * T::from_count(by);
            let bin = BoundingBox {
                x1,
                y1,
                x2: x1 + bw,
                y2: y1 + bh,
            };
            let scale = bin_share / bin.area();
            for gy in 0..height {
                for gx in 0..width {
                    let cx1 = cw * T::from_count(gx);
                    let cy1 = ch * T::from_count(gy);
                    let cell = BoundingBox {
                        x1: cx1,
                        y1: cy1,
                        x2: cx1 + cw,
                        y2: cy1 + ch,
                    };
                    let ov = bin.intersection_area(&cell);
                    if ov > T::zero() {
                        let k = gy * width + gx;
                        let v = weights.get(0, k) + ov * scale;
                        weights.set(0, k, v);
                    }
                }
            }
        }
    }
    Ok(weights)
}

/// Pooled human, object and union region features from an encoder feature map.
pub fn region_features<T: Real>(
    map: &FeatureGrid<T>,
    image_width: T,
    image_height: T,
    boxes: [&BoundingBox<T>; 3],
) -> Result<[Vec<T>; 3]> {
    let pool = |b: &BoundingBox<T>| -> Result<Vec<T>> {
        let w = roi_pool_weights(
            map.height,
            map.width,
            image_width,
            image_height,
            b,
            ROI_BINS,
        )?;
        Ok(w.matmul(&map.cells)?.into_vec())
    };
    Ok([pool(boxes[0])?, pool(boxes[1])?, pool(boxes[2])?])
}
