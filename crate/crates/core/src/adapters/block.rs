//! Bottleneck attention block shared by the weight adapter, the text and image
//! fusion modules and the prior-knowledge fusion.
//!
//! Layout: down-projection to width `r`, layer norm, optional self-attention,
//! optional cross-attention (query = running state, key/value = down-projected
//! context), up-projection back to `d`, residual add of the block input.
//! Attention sub-layers carry their own residual inside the bottleneck.

use rand::Rng;
use rand_chacha::ChaCha8Rng;

use crate::error::{Error, Result};
use crate::numkit::{Mat, Real, Tape, Var};

/// Number of attention heads in every adapter block.
pub const ADAPTER_HEADS: usize = 2;

#[derive(Clone, Copy, Debug, PartialEq, Eq, Hash)]
pub enum BlockKind {
    WeightAdapter,
    TextFusion,
    ImageFusion,
    PriorFusion,
}

impl BlockKind {
    pub fn as_str(self) -> &'static str {
        match self {
            BlockKind::WeightAdapter => "weight_adapter",
            BlockKind::TextFusion => "text_fusion",
            BlockKind::ImageFusion => "image_fusion",
            BlockKind::PriorFusion => "prior_fusion",
        }
    }

    fn has_self_attention(self) -> bool {
        matches!(
            self,
            BlockKind::WeightAdapter | BlockKind::TextFusion | BlockKind::ImageFusion
        )
    }

    fn has_cross_attention(self) -> bool {
        matches!(self, BlockKind::WeightAdapter | BlockKind::PriorFusion)
    }

    fn has_segments(self) -> bool {
        matches!(self, BlockKind::TextFusion | BlockKind::ImageFusion)
    }
}

/// Bottleneck width for feature dimension `d`: 64 at `d = 512`, otherwise
/// `max(8, d/8)`, capped at `d/2` and rounded down to a multiple of the head count.
pub fn bottleneck_width(d: usize) -> usize {
    let r = (d / 8).max(8).min(d / 2);
    let r = r - r % ADAPTER_HEADS;
    r.max(ADAPTER_HEADS)
}

pub(crate) fn uniform<T: Real>(
    rng: &mut ChaCha8Rng,
    rows: usize,
    cols: usize,
    bound: f64,
) -> Mat<T> {
    Mat::from_fn(rows, cols, |_, _| T::lit(rng.gen_range(-bound..=bound)))
}

pub(crate) fn fan_in_uniform<T: Real>(rng: &mut ChaCha8Rng, rows: usize, cols: usize) -> Mat<T> {
    uniform(rng, rows, cols, 1.0 / (rows as f64).sqrt())
}

/// Multi-head scaled dot-product attention projections, all `width × width`.
#[derive(Clone, Debug, PartialEq)]
pub struct Attention<T> {
    pub heads: usize,
    pub query: Mat<T>,
    pub key: Mat<T>,
    pub value: Mat<T>,
    pub output: Mat<T>,
}

impl<T: Real> Attention<T> {
    pub fn init(width: usize, heads: usize, rng: &mut ChaCha8Rng) -> Self {
        Attention {
            heads,
            query: fan_in_uniform(rng, width, width),
            key: fan_in_uniform(rng, width, width),
            value: fan_in_uniform(rng, width, width),
            output: fan_in_uniform(rng, width, width),
        }
    }

    pub fn head_dim(&self) -> usize {
        self.query.cols() / self.heads
    }

    fn params(&self) -> [&Mat<T>; 4] {
        [&self.query, &self.key, &self.value, &self.output]
    }

    fn params_mut(&mut self) -> [&mut Mat<T>; 4] {
        [
            &mut self.query,
            &mut self.key,
            &mut self.value,
            &mut self.output,
        ]
    }
}

/// Attention projections recorded on a tape.
#[derive(Clone, Copy)]
pub struct AttentionVars<'t, T> {
    pub heads: usize,
    pub query: Var<'t, T>,
    pub key: Var<'t, T>,
    pub value: Var<'t, T>,
    pub output: Var<'t, T>,
}

impl<'t, T: Real> AttentionVars<'t, T> {
    /// `softmax(Q Kᵀ/√h + mask) V` per head, heads concatenated, then the output projection.
    /// `mask` is an additive `queries × keys` matrix.
    pub fn forward(
        &self,
        queries: Var<'t, T>,
        context: Var<'t, T>,
        mask: Option<Var<'t, T>>,
    ) -> Var<'t, T> {
        let q = queries.matmul(self.query);
        let k = context.matmul(self.key);
        let v = context.matmul(self.value);
        let width = q.shape().1;
        let hd = width / self.heads;
        let scale = T::one() / T::from_count(hd).sqrt();
        let heads: Vec<Var<'t, T>> = (0..self.heads)
            .map(|h| {
                let cols: Vec<usize> = (h * hd..(h + 1) * hd).collect();
                let qh = q.select_cols(&cols);
                let kh = k.select_cols(&cols);
                let vh = v.select_cols(&cols);
                let mut scores = qh.matmul(kh.t()).scale(scale);
                if let Some(m) = mask {
                    scores = scores.add(m);
                }
                scores.softmax_rows().matmul(vh)
            })
            .collect();
        Var::concat_cols(&heads).matmul(self.output)
    }
}

/// Parameters of one bottleneck adapter block.
#[derive(Clone, Debug, PartialEq)]
pub struct AdapterBlock<T> {
    pub kind: BlockKind,
    /// `d×r`.
    pub down_proj: Mat<T>,
    pub down_bias: Mat<T>,
    pub norm_gain: Mat<T>,
    pub norm_bias: Mat<T>,
    pub self_attention: Option<Attention<T>>,
    pub cross_attention: Option<Attention<T>>,
    /// `2×r` position embeddings of the first and second token of a fused pair.
    pub segments: Option<Mat<T>>,
    /// `r×d`; zero at initialization.
    pub up_proj: Mat<T>,
    pub up_bias: Mat<T>,
}

impl<T: Real> AdapterBlock<T> {
    /// Seeded initialization: uniform `±1/√fan_in` projections, zero up-projection.
    pub fn init(kind: BlockKind, dim: usize, rng: &mut ChaCha8Rng) -> Self {
        let r = bottleneck_width(dim);
        AdapterBlock {
            kind,
            down_proj: fan_in_uniform(rng, dim, r),
            down_bias: Mat::zeros(1, r),
            norm_gain: Mat::filled(1, r, T::one()),
            norm_bias: Mat::zeros(1, r),
            self_attention: kind
                .has_self_attention()
                .then(|| Attention::init(r, ADAPTER_HEADS, rng)),
            cross_attention: kind
                .has_cross_attention()
                .then(|| Attention::init(r, ADAPTER_HEADS, rng)),
            segments: kind.has_segments().then(|| uniform(rng, 2, r, 0.5)),
            up_proj: Mat::zeros(r, dim),
            up_bias: Mat::zeros(1, dim),
        }
    }

    pub fn dim(&self) -> usize {
        self.down_proj.rows()
    }

    pub fn bottleneck(&self) -> usize {
        self.down_proj.cols()
    }

    pub fn expect_kind(&self, kind: BlockKind) -> Result<()> {
        if self.kind != kind {
            return Err(Error::Parameter(format!(
                "expected a {} block, got {}",
                kind.as_str(),
                self.kind.as_str()
            )));
        }
        Ok(())
    }

    pub fn params(&self) -> Vec<&Mat<T>> {
        let mut v = vec![
            &self.down_proj,
            &self.down_bias,
            &self.norm_gain,
            &self.norm_bias,
        ];
        if let Some(a) = &self.self_attention {
            v.extend(a.params());
        }
        if let Some(a) = &self.cross_attention {
            v.extend(a.params());
        }
        if let Some(s) = &self.segments {
            v.push(s);
        }
        v.push(&self.up_proj);
        v.push(&self.up_bias);
        v
    }

    pub fn params_mut(&mut self) -> Vec<&mut Mat<T>> {
        let mut v = vec![
            &mut self.down_proj,
            &mut self.down_bias,
            &mut self.norm_gain,
            &mut self.norm_bias,
        ];
        if let Some(a) = &mut self.self_attention {
            v.extend(a.params_mut());
        }
        if let Some(a) = &mut self.cross_attention {
            v.extend(a.params_mut());
        }
        if let Some(s) = &mut self.segments {
            v.push(s);
        }
        v.push(&mut self.up_proj);
        v.push(&mut self.up_bias);
        v
    }

    pub fn param_names(&self) -> Vec<String> {
        let mut v: Vec<String> = ["down_proj", "down_bias", "norm_gain", "norm_bias"]
            .iter()
            .map(|s| s.to_string())
            .collect();
        for (present, prefix) in [
            (self.self_attention.is_some(), "self"),
            (self.cross_attention.is_some(), "cross"),
        ] {
            if present {
                for p in ["query", "key", "value", "output"] {
                    v.push(format!("{prefix}_{p}"));
                }
            }
        }
        if self.segments.is_some() {
            v.push("segments".into());
        }
        v.push("up_proj".into());
        v.push("up_bias".into());
        v
    }

    /// Records every parameter as a leaf, in [`params`](Self::params) order.
    pub fn bind<'t>(&self, tape: &'t Tape<T>) -> BlockVars<'t, T> {
        let leaf = |m: &Mat<T>| tape.leaf(m.clone());
        let attn = |a: &Attention<T>| AttentionVars {
            heads: a.heads,
            query: leaf(&a.query),
            key: leaf(&a.key),
            value: leaf(&a.value),
            output: leaf(&a.output),
        };
        let down_proj = leaf(&self.down_proj);
        let down_bias = leaf(&self.down_bias);
        let norm_gain = leaf(&self.norm_gain);
        let norm_bias = leaf(&self.norm_bias);
        let self_attention = self.self_attention.as_ref().map(attn);
        let cross_attention = self.cross_attention.as_ref().map(attn);
        let segments = self.segments.as_ref().map(leaf);
        BlockVars {
            kind: self.kind,
            down_proj,
            down_bias,
            norm_gain,
            norm_bias,
            self_attention,
            cross_attention,
            segments,
            up_proj: leaf(&self.up_proj),
            up_bias: leaf(&self.up_bias),
        }
    }
}

/// An [`AdapterBlock`] recorded on a tape.
#[derive(Clone, Copy)]
pub struct BlockVars<'t, T> {
    pub kind: BlockKind,
    pub down_proj: Var<'t, T>,
    pub down_bias: Var<'t, T>,
    pub norm_gain: Var<'t, T>,
    pub norm_bias: Var<'t, T>,
    pub self_attention: Option<AttentionVars<'t, T>>,
    pub cross_attention: Option<AttentionVars<'t, T>>,
    pub segments: Option<Var<'t, T>>,
    pub up_proj: Var<'t, T>,
    pub up_bias: Var<'t, T>,
}

impl<'t, T: Real> BlockVars<'t, T> {
    pub fn params(&self) -> Vec<Var<'t, T>> {
        let mut v = vec![
            self.down_proj,
            self.down_bias,
            self.norm_gain,
            self.norm_bias,
        ];
        for a in [self.self_attention, self.cross_attention]
            .into_iter()
            .flatten()
        {
            v.extend([a.query, a.key, a.value, a.output]);
        }
        if let Some(s) = self.segments {
            v.push(s);
        }
        v.push(self.up_proj);
        v.push(self.up_bias);
        v
    }

    fn down(&self, x: Var<'t, T>) -> Var<'t, T> {
        x.matmul(self.down_proj)
            .add_row(self.down_bias)
            .layer_norm_rows()
            .mul_row(self.norm_gain)
            .add_row(self.norm_bias)
    }

    /// Bottleneck update `up(attn(down(x)))`, without the outer residual.
    ///
    /// `segment_ids` selects a segment embedding per row (fusion blocks only);
    /// `mask` is an additive self-attention mask.
    pub fn delta(
        &self,
        x: Var<'t, T>,
        context: Option<Var<'t, T>>,
        segment_ids: Option<&[usize]>,
        mask: Option<Var<'t, T>>,
    ) -> Var<'t, T> {
        let mut h = self.down(x);
        if let (Some(seg), Some(ids)) = (self.segments, segment_ids) {
            h = h.add(seg.select_rows(ids));
        }
        if let Some(sa) = &self.self_attention {
            h = h.add(sa.forward(h, h, mask));
        }
        if let (Some(ca), Some(ctx)) = (&self.cross_attention, context) {
            let c = self.down(ctx);
            h = h.add(ca.forward(h, c, None));
        }
        h.matmul(self.up_proj).add_row(self.up_bias)
    }
}
