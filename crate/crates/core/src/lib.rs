//! Low-rank decomposed class-feature adaptation for zero-shot human-object
//! interaction classification.
//!
//! Class-description features `F` are factorized into weights `W` over a
//! shared basis `B`. Small adapter blocks then adjust `W` per image, fuse text
//! and region features, and inject prior knowledge. The library is generic
//! over the scalar type; the aliases below fix it to `f64`.

// `!(x > 0)` deliberately rejects NaN; index loops mirror the formulas.
#![allow(clippy::neg_cmp_op_on_partial_ord, clippy::needless_range_loop)]

pub mod adapters;
pub mod decomp;
pub mod error;
pub mod gradsuite;
pub mod harness;
pub mod numkit;
pub mod objective;

pub use error::{Error, Result};

pub type Matrix = numkit::Mat<f64>;
pub type Matrix32 = numkit::Mat<f32>;
pub type Factorization = decomp::Factorization<f64>;
pub type FeatureMatrix = decomp::FeatureMatrix<f64>;
pub type AdapterBlock = adapters::AdapterBlock<f64>;
pub type BoundingBox = adapters::BoundingBox<f64>;
pub type PairInstance = adapters::PairInstance<f64>;
pub type LabelMap = objective::LabelMap<f64>;
