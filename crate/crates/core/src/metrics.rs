//! Summary statistics of a fused image and its decomposition.

use std::path::Path;

use serde::{Deserialize, Serialize};

use crate::decomposition::DecompositionResult;
use crate::error::Result;
use crate::image_io::GrayImage;

/// Population standard deviation of all pixels on the 0–255 scale.
pub fn image_std(img: &GrayImage) -> f64 {
    let (_, var) = mean_var(img.data().iter().copied());
    255.0 * var.sqrt()
}

fn mean_var(values: impl Iterator<Item = f64> + Clone) -> (f64, f64) {
    crate::patches::shifted_mean_var(values)
}

#[derive(Debug, Clone, PartialEq, Serialize, Deserialize)]
pub struct MetricsReport {
    /// Standard deviation on the 0–255 scale.
    pub std: f64,
    /// Mean, min and max on the `[0, 1]` scale.
    pub mean: f64,
    pub min: f64,
    pub max: f64,
    /// Frobenius norms of `X_k − Z_k − E_k`.
    pub residual_norm1: f64,
    pub residual_norm2: f64,
    pub pearson_cost: f64,
    pub runtime_seconds: f64,
}

pub fn build_report(fused: &GrayImage, decomp: &DecompositionResult, runtime_seconds: f64) -> MetricsReport {
    let data = fused.data();
    let (mean, _) = mean_var(data.iter().copied());
    let min = data.iter().copied().fold(f64::INFINITY, f64::min);
    let max = data.iter().copied().fold(f64::NEG_INFINITY, f64::max);
    MetricsReport {
        std: image_std(fused),
        // Clamp away rounding so min ≤ mean ≤ max holds for flat images.
        mean: mean.clamp(min, max),
        min,
        max,
        residual_norm1: decomp.residual1.frobenius_norm(),
        residual_norm2: decomp.residual2.frobenius_norm(),
        pearson_cost: decomp.pearson_cost(),
        runtime_seconds,
    }
}

impl MetricsReport {
    pub fn to_json(&self) -> Result<String> {
        Ok(serde_json::to_string_pretty(self)?)
    }

    pub fn from_json(text: &str) -> Result<Self> {
        Ok(serde_json::from_str(text)?)
    }

    pub fn write(&self, path: impl AsRef<Path>) -> Result<()> {
        std::fs::write(path, self.to_json()?)?;
        Ok(())
    }
}
