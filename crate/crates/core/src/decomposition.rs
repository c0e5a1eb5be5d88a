//! Correlated/independent decomposition of a patch-matrix pair.
//!
//! Model: `X_k = D_k A_k + E_k` with common-support codes. The relaxed
//! objective is
//!
//! ```text
//! Σ_ij φ(E1_ij, E2_ij) + ρ/2 Σ_k ‖D_k A_k + E_k − X_k‖²_F
//! φ = ((E1_ij − μ1_j)(E2_ij − μ2_j))² / max(σ1_j² σ2_j², δ)
//! ```
//!
//! and is minimized by alternating one SCDL step on `X_k − E_k` with one
//! closed-form update of `E_1`, `E_2` in which the patch statistics are
//! frozen at their current values.

use ndarray::{ArrayView2, Zip};

use crate::config::FusionConfig;
use crate::dictionary::DictionaryPair;
use crate::error::{FusionError, Result};
use crate::image_io::GrayImage;
use crate::patches::{column_mean_var, extract_patches, patch_column_stats, PatchMatrix};
use crate::scdl::{scdl_step, ScdlState};
use crate::sparse_coding::{Side, SparseCodePair};

/// Full state of the alternating optimization.
#[derive(Debug, Clone)]
pub struct DecompositionState {
    pub x1: PatchMatrix,
    pub x2: PatchMatrix,
    pub scdl: ScdlState,
    pub e1: PatchMatrix,
    pub e2: PatchMatrix,
    pub iteration: usize,
    pub rho: f64,
    pub delta: f64,
}

impl DecompositionState {
    /// DCT dictionaries, empty codes and zero independent components.
    pub fn new(x1: PatchMatrix, x2: PatchMatrix, cfg: &FusionConfig) -> Result<Self> {
        cfg.validate()?;
        x1.ensure_same_shape(&x2, "input patch matrices")?;
        if x1.patch_dim() != cfg.patch_dim {
            return Err(FusionError::DimensionMismatch(format!(
                "patches have {} rows, config expects {}",
                x1.patch_dim(),
                cfg.patch_dim
            )));
        }
        let scdl = ScdlState::initial(cfg, x1.count())?;
        let e1 = PatchMatrix::zeros(x1.geometry().clone());
        let e2 = PatchMatrix::zeros(x1.geometry().clone());
        Ok(Self {
            x1,
            x2,
            scdl,
            e1,
            e2,
            iteration: 0,
            rho: cfg.rho,
            delta: cfg.delta,
        })
    }

    pub fn correlated(&self, side: Side) -> PatchMatrix {
        let (dict, like) = match side {
            Side::First => (&self.scdl.dictionaries.first, &self.x1),
            Side::Second => (&self.scdl.dictionaries.second, &self.x2),
        };
        self.scdl
            .codes
            .reconstruct(dict, side, like)
            .expect("state shapes are consistent")
    }
}

/// Decorrelation cost summed over all entries.
pub fn pearson_cost(e1: &PatchMatrix, e2: &PatchMatrix, delta: f64) -> Result<f64> {
    e1.ensure_same_shape(e2, "independent components")?;
    pearson_cost_array(e1.data().view(), e2.data().view(), delta)
}

/// [`pearson_cost`] on bare `m × p` matrices.
pub fn pearson_cost_array(e1: ArrayView2<'_, f64>, e2: ArrayView2<'_, f64>, delta: f64) -> Result<f64> {
    if e1.dim() != e2.dim() {
        return Err(FusionError::DimensionMismatch(format!(
            "independent components are {:?} and {:?}",
            e1.dim(),
            e2.dim()
        )));
    }
    let mut total = 0.0;
    for (c1, c2) in e1.columns().into_iter().zip(e2.columns()) {
        let (mu1, var1) = column_mean_var(c1);
        let (mu2, var2) = column_mean_var(c2);
        let denom = (var1 * var2).max(delta);
        let col: f64 = c1
            .iter()
            .zip(c2)
            .map(|(a, b)| {
                let prod = (a - mu1) * (b - mu2);
                prod * prod
            })
            .sum();
        total += col / denom;
    }
    Ok(total)
}

/// Closed-form update of both independent components.
///
/// Per entry, `E1⁺ = (ρ·fit1 + w1·μ1) / (ρ + w1)` with
/// `w1 = 2 (E2 − μ2)² / max(σ1² σ2², δ)`, and symmetrically for `E2⁺`. It is
/// evaluated as `fit1 + w1 (μ1 − fit1) / (ρ + w1)`, which returns the data
/// term exactly when `w1 = 0`.
///
/// `fit1 = X1 − D1 A1` and `fit2 = X2 − D2 A2` are the data terms. Both
/// sides are computed from the pre-update `e1`, `e2` (simultaneous update)
/// with patch statistics frozen at their current values.
pub fn em_update_parts(
    fit1: &PatchMatrix,
    fit2: &PatchMatrix,
    e1: &PatchMatrix,
    e2: &PatchMatrix,
    rho: f64,
    delta: f64,
) -> Result<(PatchMatrix, PatchMatrix)> {
    fit1.ensure_same_shape(fit2, "data terms")?;
    fit1.ensure_same_shape(e1, "first independent component")?;
    fit1.ensure_same_shape(e2, "second independent component")?;
    let s1 = patch_column_stats(e1);
    let s2 = patch_column_stats(e2);
    let denom: Vec<f64> = s1
        .var
        .iter()
        .zip(&s2.var)
        .map(|(a, b)| (a * b).max(delta))
        .collect();

    let mut out1 = PatchMatrix::zeros(fit1.geometry().clone());
    let mut out2 = PatchMatrix::zeros(fit1.geometry().clone());
    for j in 0..fit1.count() {
        let (mu1, mu2, d) = (s1.mean[j], s2.mean[j], denom[j]);
        let (f1, f2) = (fit1.column(j), fit2.column(j));
        let (c1, c2) = (e1.column(j), e2.column(j));
        let o1 = out1.column_mut(j);
        for i in 0..o1.len() {
            let w1 = 2.0 * (c2[i] - mu2).powi(2) / d;
            o1[i] = f1[i] + w1 * (mu1 - f1[i]) / (rho + w1);
        }
        let o2 = out2.column_mut(j);
        for i in 0..o2.len() {
            let w2 = 2.0 * (c1[i] - mu1).powi(2) / d;
            o2[i] = f2[i] + w2 * (mu2 - f2[i]) / (rho + w2);
        }
    }
    Ok((out1, out2))
}

/// Independent-component update for the current state.
pub fn em_update(state: &DecompositionState) -> Result<(PatchMatrix, PatchMatrix)> {
    let fit1 = state.x1.minus(&state.correlated(Side::First))?;
    let fit2 = state.x2.minus(&state.correlated(Side::Second))?;
    em_update_parts(&fit1, &fit2, &state.e1, &state.e2, state.rho, state.delta)
}

/// Quadratic coupling term `ρ/2 Σ_k ‖Z_k + E_k − X_k‖²_F`.
pub fn penalty_term(
    x: [&PatchMatrix; 2],
    z: [&PatchMatrix; 2],
    e: [&PatchMatrix; 2],
    rho: f64,
) -> f64 {
    let mut sum = 0.0;
    for k in 0..2 {
        Zip::from(x[k].data())
            .and(z[k].data())
            .and(e[k].data())
            .for_each(|&x, &z, &e| sum += (z + e - x).powi(2));
    }
    0.5 * rho * sum
}

/// Relaxed objective: decorrelation cost plus quadratic coupling.
pub fn objective(state: &DecompositionState) -> Result<f64> {
    let z1 = state.correlated(Side::First);
    let z2 = state.correlated(Side::Second);
    Ok(pearson_cost(&state.e1, &state.e2, state.delta)?
        + penalty_term(
            [&state.x1, &state.x2],
            [&z1, &z2],
            [&state.e1, &state.e2],
            state.rho,
        ))
}

#[derive(Debug, Clone)]
pub struct DecompositionResult {
    pub z1: PatchMatrix,
    pub z2: PatchMatrix,
    pub e1: PatchMatrix,
    pub e2: PatchMatrix,
    /// `X_k − Z_k − E_k`
    pub residual1: PatchMatrix,
    pub residual2: PatchMatrix,
    pub dictionaries: DictionaryPair,
    pub codes: SparseCodePair,
    /// Relaxed objective after each outer iteration.
    pub objective_trace: Vec<f64>,
    pub rho: f64,
    pub delta: f64,
}

impl DecompositionResult {
    fn from_state(state: DecompositionState, objective_trace: Vec<f64>) -> Result<Self> {
        let z1 = state.correlated(Side::First);
        let z2 = state.correlated(Side::Second);
        let residual1 = state.x1.minus(&z1)?.minus(&state.e1)?;
        let residual2 = state.x2.minus(&z2)?.minus(&state.e2)?;
        Ok(Self {
            z1,
            z2,
            e1: state.e1,
            e2: state.e2,
            residual1,
            residual2,
            dictionaries: state.scdl.dictionaries,
            codes: state.scdl.codes,
            objective_trace,
            rho: state.rho,
            delta: state.delta,
        })
    }

    pub fn pearson_cost(&self) -> f64 {
        pearson_cost(&self.e1, &self.e2, self.delta).expect("shapes are consistent")
    }
}

/// Runs `cfg.outer_iters` alternations on a patch-matrix pair, calling
/// `observe` with the state after each one.
pub fn decompose_patches_with(
    x1: PatchMatrix,
    x2: PatchMatrix,
    cfg: &FusionConfig,
    mut observe: impl FnMut(&DecompositionState),
) -> Result<DecompositionResult> {
    let mut state = DecompositionState::new(x1, x2, cfg)?;
    let mut trace = Vec::with_capacity(cfg.outer_iters);
    for _ in 0..cfg.outer_iters {
        let x1p = state.x1.minus(&state.e1)?;
        let x2p = state.x2.minus(&state.e2)?;
        state.scdl = scdl_step(&x1p, &x2p, state.scdl, cfg)?;
        let (e1, e2) = em_update(&state)?;
        state.e1 = e1;
        state.e2 = e2;
        state.iteration += 1;
        trace.push(objective(&state)?);
        observe(&state);
    }
    DecompositionResult::from_state(state, trace)
}

pub fn decompose_patches(x1: PatchMatrix, x2: PatchMatrix, cfg: &FusionConfig) -> Result<DecompositionResult> {
    decompose_patches_with(x1, x2, cfg, |_| {})
}

/// Extracts patches from both images and decomposes them.
pub fn decompose(img1: &GrayImage, img2: &GrayImage, cfg: &FusionConfig) -> Result<DecompositionResult> {
    decompose_with(img1, img2, cfg, |_| {})
}

pub fn decompose_with(
    img1: &GrayImage,
    img2: &GrayImage,
    cfg: &FusionConfig,
    observe: impl FnMut(&DecompositionState),
) -> Result<DecompositionResult> {
    cfg.validate()?;
    if img1.dims() != img2.dims() {
        return Err(FusionError::DimensionMismatch(format!(
            "images are {}x{} and {}x{}",
            img1.height(),
            img1.width(),
            img2.height(),
            img2.width()
        )));
    }
    let x1 = extract_patches(img1, cfg)?;
    let x2 = extract_patches(img2, cfg)?;
    decompose_patches_with(x1, x2, cfg, observe)
}
