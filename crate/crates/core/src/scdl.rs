//! Simultaneous coupled dictionary learning: alternate coupled sparse
//! coding with a K-SVD sweep of each dictionary.

use crate::config::FusionConfig;
use crate::dictionary::DictionaryPair;
use crate::error::Result;
use crate::ksvd::{fit_error, update_pair, SweepReport};
use crate::patches::PatchMatrix;
use crate::sparse_coding::{code_all, Side, SparseCodePair};

#[derive(Debug, Clone, PartialEq)]
pub struct ScdlState {
    pub dictionaries: DictionaryPair,
    pub codes: SparseCodePair,
    /// Sparsity used by the next step; grows by one per step up to
    /// `sparsity_t`.
    pub effective_t: usize,
    /// `‖D1 A1 − X1'‖² + ‖D2 A2 − X2'‖²` after each step.
    pub objective_trace: Vec<f64>,
    pub last_sweep: SweepReport,
}

impl ScdlState {
    /// DCT-initialized dictionaries, empty codes and warm-start sparsity 1.
    pub fn initial(cfg: &FusionConfig, count: usize) -> Result<Self> {
        Self::with_dictionaries(DictionaryPair::dct(cfg.patch_dim, cfg.dict_atoms)?, count)
    }

    pub fn with_dictionaries(dictionaries: DictionaryPair, count: usize) -> Result<Self> {
        let atoms = dictionaries.atoms();
        Ok(Self {
            dictionaries,
            codes: SparseCodePair::empty(atoms, count),
            effective_t: 1,
            objective_trace: Vec::new(),
            last_sweep: SweepReport::default(),
        })
    }
}

/// One alternation on the targets `x1p = X1 − E1`, `x2p = X2 − E2`.
pub fn scdl_step(
    x1p: &PatchMatrix,
    x2p: &PatchMatrix,
    state: ScdlState,
    cfg: &FusionConfig,
) -> Result<ScdlState> {
    let sparsity = state.effective_t.min(cfg.sparsity_t);
    let codes = code_all(x1p, x2p, &state.dictionaries, sparsity, cfg.epsilon)?;
    let (dictionaries, codes, sweep) = update_pair(&state.dictionaries, &codes, x1p, x2p)?;
    let objective = fit_error(&dictionaries.first, &codes, Side::First, x1p)
        + fit_error(&dictionaries.second, &codes, Side::Second, x2p);
    let mut objective_trace = state.objective_trace;
    objective_trace.push(objective);
    Ok(ScdlState {
        dictionaries,
        codes,
        effective_t: (sparsity + 1).min(cfg.sparsity_t),
        objective_trace,
        last_sweep: sweep,
    })
}
