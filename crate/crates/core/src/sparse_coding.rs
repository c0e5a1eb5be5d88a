//! Coupled simultaneous OMP: codes a pair of signals against a pair of
//! coupled dictionaries so that both codes share one support.
//!
//! At every step the atom index maximizing `|r1·d1_t| + |r2·d2_t|` is added
//! to the common support, then each side re-solves its own least-squares fit
//! over its own selected atoms. Coding stops once the support holds `T`
//! atoms or as soon as *either* residual norm drops below `epsilon`.

use ndarray::{Array2, ShapeBuilder};
use rayon::prelude::*;

use crate::dictionary::{Dictionary, DictionaryPair};
use crate::error::{FusionError, Result};
use crate::linalg::{axpy, dot, norm};
use crate::patches::PatchMatrix;

/// A candidate atom whose orthogonal complement against the current
/// selection is shorter than this (atoms are unit norm) is rejected.
pub const RANK_TOL: f64 = 1e-8;

/// Sparse code of one column pair: the shared support and each side's
/// coefficients, aligned with `support`.
#[derive(Debug, Clone, PartialEq, Default)]
pub struct ColumnCode {
    pub support: Vec<usize>,
    pub coeffs1: Vec<f64>,
    pub coeffs2: Vec<f64>,
}

impl ColumnCode {
    pub fn coeffs(&self, side: Side) -> &[f64] {
        match side {
            Side::First => &self.coeffs1,
            Side::Second => &self.coeffs2,
        }
    }

    pub fn coeffs_mut(&mut self, side: Side) -> &mut [f64] {
        match side {
            Side::First => &mut self.coeffs1,
            Side::Second => &mut self.coeffs2,
        }
    }
}

#[derive(Debug, Clone, Copy, PartialEq, Eq)]
pub enum Side {
    First,
    Second,
}

/// Two `n × p` sparse code matrices stored column-wise with a common
/// support per column.
#[derive(Debug, Clone, PartialEq)]
pub struct SparseCodePair {
    atoms: usize,
    columns: Vec<ColumnCode>,
}

impl SparseCodePair {
    pub fn new(atoms: usize, columns: Vec<ColumnCode>) -> Result<Self> {
        for (j, c) in columns.iter().enumerate() {
            if c.coeffs1.len() != c.support.len() || c.coeffs2.len() != c.support.len() {
                return Err(FusionError::DimensionMismatch(format!(
                    "column {j}: support and coefficient lengths differ"
                )));
            }
            if c.support.iter().any(|&t| t >= atoms) {
                return Err(FusionError::DimensionMismatch(format!(
                    "column {j}: atom index out of range"
                )));
            }
            let mut sorted = c.support.clone();
            sorted.sort_unstable();
            if sorted.windows(2).any(|w| w[0] == w[1]) {
                return Err(FusionError::DimensionMismatch(format!(
                    "column {j}: repeated atom in support"
                )));
            }
        }
        Ok(Self { atoms, columns })
    }

    /// All-empty codes for `count` columns.
    pub fn empty(atoms: usize, count: usize) -> Self {
        Self {
            atoms,
            columns: vec![ColumnCode::default(); count],
        }
    }

    pub fn atoms(&self) -> usize {
        self.atoms
    }

    pub fn count(&self) -> usize {
        self.columns.len()
    }

    pub fn column(&self, j: usize) -> &ColumnCode {
        &self.columns[j]
    }

    pub fn columns(&self) -> &[ColumnCode] {
        &self.columns
    }

    pub fn columns_mut(&mut self) -> &mut [ColumnCode] {
        &mut self.columns
    }

    /// Largest support size over all columns.
    pub fn max_support(&self) -> usize {
        self.columns.iter().map(|c| c.support.len()).max().unwrap_or(0)
    }

    /// Dense `n × p` code matrix of one side.
    pub fn dense(&self, side: Side) -> Array2<f64> {
        let mut out = Array2::zeros((self.atoms, self.columns.len()));
        for (j, c) in self.columns.iter().enumerate() {
            for (&t, &a) in c.support.iter().zip(c.coeffs(side)) {
                out[[t, j]] = a;
            }
        }
        out
    }

    /// `D · A` for one side, with the geometry of `like`.
    pub fn reconstruct(&self, dict: &Dictionary, side: Side, like: &PatchMatrix) -> Result<PatchMatrix> {
        if dict.atoms() != self.atoms || dict.patch_dim() != like.patch_dim() || like.count() != self.count() {
            return Err(FusionError::DimensionMismatch(format!(
                "dictionary {:?}, codes {}x{}, patches {}x{}",
                dict.data().dim(),
                self.atoms,
                self.count(),
                like.patch_dim(),
                like.count()
            )));
        }
        let m = dict.patch_dim();
        let mut data = Array2::zeros((m, self.count()).f());
        data.as_slice_memory_order_mut()
            .expect("column-major")
            .par_chunks_exact_mut(m.max(1))
            .zip(self.columns.par_iter())
            .for_each(|(out, c)| {
                for (&t, &a) in c.support.iter().zip(c.coeffs(side)) {
                    axpy(a, dict.atom(t), out);
                }
            });
        like.with_data(data)
    }
}

/// Result of coding one column pair, including the final residuals.
#[derive(Debug, Clone, PartialEq)]
pub struct PairCoding {
    pub code: ColumnCode,
    pub residual1: Vec<f64>,
    pub residual2: Vec<f64>,
    /// Atoms rejected because they were numerically dependent on the
    /// selection for at least one side.
    pub rejected: Vec<usize>,
}

/// Incremental QR of the selected sub-dictionary of one side.
struct SideFit<'a> {
    dict: &'a Dictionary,
    signal: &'a [f64],
    /// Orthonormal basis, one length-`m` chunk per selected atom.
    q: Vec<f64>,
    /// Upper-triangular factor, column `k` stored as `r[k]` (length `k + 1`).
    r: Vec<Vec<f64>>,
    coeffs: Vec<f64>,
    residual: Vec<f64>,
}

impl<'a> SideFit<'a> {
    fn new(dict: &'a Dictionary, signal: &'a [f64]) -> Self {
        Self {
            dict,
            signal,
            q: Vec::new(),
            r: Vec::new(),
            coeffs: Vec::new(),
            residual: signal.to_vec(),
        }
    }

    fn m(&self) -> usize {
        self.signal.len()
    }

    /// Orthogonalizes atom `t` against the current basis (two Gram–Schmidt
    /// passes). Returns the new `R` column and the normalized direction, or
    /// `None` when the atom is numerically in the span of the selection.
    fn candidate(&self, t: usize) -> Option<(Vec<f64>, Vec<f64>)> {
        let m = self.m();
        let k = self.r.len();
        let mut w = self.dict.atom(t).to_vec();
        let mut proj = vec![0.0; k];
        for _ in 0..2 {
            for (i, qi) in self.q.chunks_exact(m).enumerate() {
                let c = dot(qi, &w);
                proj[i] += c;
                axpy(-c, qi, &mut w);
            }
        }
        let len = norm(&w);
        if !(len >= RANK_TOL) {
            return None;
        }
        w.iter_mut().for_each(|x| *x /= len);
        proj.push(len);
        Some((proj, w))
    }

    fn accept(&mut self, rcol: Vec<f64>, direction: Vec<f64>, support: &[usize]) {
        self.q.extend_from_slice(&direction);
        self.r.push(rcol);
        let m = self.m();
        let k = self.r.len();
        // Least squares over the selection: R a = Qᵀ x.
        let qtx: Vec<f64> = self.q.chunks_exact(m).map(|qi| dot(qi, self.signal)).collect();
        let mut a = vec![0.0; k];
        for i in (0..k).rev() {
            let mut s = qtx[i];
            for c in i + 1..k {
                s -= self.r[c][i] * a[c];
            }
            a[i] = s / self.r[i][i];
        }
        self.residual.copy_from_slice(self.signal);
        for (&t, &c) in support.iter().zip(&a) {
            axpy(-c, self.dict.atom(t), &mut self.residual);
        }
        self.coeffs = a;
    }
}

/// Codes one column pair. See the module docs for the rule.
pub fn code_column_pair(
    x1: &[f64],
    x2: &[f64],
    dicts: &DictionaryPair,
    sparsity: usize,
    epsilon: f64,
) -> Result<PairCoding> {
    let m = dicts.patch_dim();
    if x1.len() != m || x2.len() != m {
        return Err(FusionError::DimensionMismatch(format!(
            "signals of length {} and {} for {m}-dimensional atoms",
            x1.len(),
            x2.len()
        )));
    }
    Ok(code_pair_unchecked(x1, x2, dicts, sparsity, epsilon))
}

fn code_pair_unchecked(
    x1: &[f64],
    x2: &[f64],
    dicts: &DictionaryPair,
    sparsity: usize,
    epsilon: f64,
) -> PairCoding {
    let n = dicts.atoms();
    let mut fit1 = SideFit::new(&dicts.first, x1);
    let mut fit2 = SideFit::new(&dicts.second, x2);
    let mut support = Vec::with_capacity(sparsity);
    let mut eligible = vec![true; n];
    let mut rejected = Vec::new();

    while support.len() < sparsity
        && norm(&fit1.residual) >= epsilon
        && norm(&fit2.residual) >= epsilon
    {
        let mut best: Option<(usize, f64)> = None;
        for t in 0..n {
            if !eligible[t] {
                continue;
            }
            let score = dot(&fit1.residual, dicts.first.atom(t)).abs()
                + dot(&fit2.residual, dicts.second.atom(t)).abs();
            if best.is_none_or(|(_, s)| score > s) {
                best = Some((t, score));
            }
        }
        let Some((t, _)) = best else { break };
        eligible[t] = false;
        match (fit1.candidate(t), fit2.candidate(t)) {
            (Some((r1, q1)), Some((r2, q2))) => {
                support.push(t);
                fit1.accept(r1, q1, &support);
                fit2.accept(r2, q2, &support);
            }
            _ => rejected.push(t),
        }
    }

    PairCoding {
        code: ColumnCode {
            support,
            coeffs1: fit1.coeffs,
            coeffs2: fit2.coeffs,
        },
        residual1: fit1.residual,
        residual2: fit2.residual,
        rejected,
    }
}

/// Codes every column pair of `(x1, x2)` independently.
///
/// Columns are processed in parallel; the output is identical to the
/// sequential order since no state crosses columns.
pub fn code_all(
    x1: &PatchMatrix,
    x2: &PatchMatrix,
    dicts: &DictionaryPair,
    sparsity: usize,
    epsilon: f64,
) -> Result<SparseCodePair> {
    if x1.patch_dim() != x2.patch_dim() || x1.count() != x2.count() {
        return Err(FusionError::DimensionMismatch(format!(
            "patch matrices are {}x{} and {}x{}",
            x1.patch_dim(),
            x1.count(),
            x2.patch_dim(),
            x2.count()
        )));
    }
    if x1.patch_dim() != dicts.patch_dim() {
        return Err(FusionError::DimensionMismatch(format!(
            "patches have {} rows, atoms have {}",
            x1.patch_dim(),
            dicts.patch_dim()
        )));
    }
    let columns = (0..x1.count())
        .into_par_iter()
        .map(|j| code_pair_unchecked(x1.column(j), x2.column(j), dicts, sparsity, epsilon).code)
        .collect();
    Ok(SparseCodePair {
        atoms: dicts.atoms(),
        columns,
    })
}
