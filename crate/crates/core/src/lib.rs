//! Multimodal image fusion by coupled dictionary learning.
//!
//! Two co-registered images are split into patches and decomposed as
//! `X_k = D_k A_k + E_k` where the codes `A_1`, `A_2` share their supports
//! (the correlated part) and `E_1`, `E_2` are driven toward patch-wise
//! decorrelation (the independent parts). Correlated parts are fused by
//! keeping the larger-magnitude coefficient; independent parts are added
//! back unchanged.

pub mod config;
pub mod decomposition;
pub mod dictionary;
pub mod error;
pub mod fusion;
pub mod image_io;
pub mod ksvd;
pub mod linalg;
pub mod metrics;
pub mod patches;
pub mod scdl;
pub mod sparse_coding;
pub mod synthetic;
pub mod validation;

pub use config::FusionConfig;
pub use decomposition::{decompose, DecompositionResult};
pub use dictionary::{overcomplete_dct, Dictionary, DictionaryPair};
pub use error::{FusionError, Result};
pub use fusion::{fuse, fuse_color, fuse_images};
pub use image_io::{ColorImage, ColorSpace, GrayImage, LoadedImage};
pub use patches::{PatchGeometry, PatchMatrix};
pub use sparse_coding::{Side, SparseCodePair};
