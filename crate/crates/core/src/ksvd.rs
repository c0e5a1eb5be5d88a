//! K-SVD dictionary update that keeps code supports fixed.
//!
//! Each atom is refit in index order to the dominant singular pair of the
//! representation error restricted to the columns that use it. Only the
//! values at existing nonzeros change, so the common support of a code pair
//! survives updating each side on its own.

use crate::dictionary::{Dictionary, DictionaryPair};
use crate::error::{FusionError, Result};
use crate::linalg::{axpy, dominant_rank1, dot};
use crate::patches::PatchMatrix;
use crate::sparse_coding::{Side, SparseCodePair};

/// What happened during one sweep.
#[derive(Debug, Clone, Default, PartialEq)]
pub struct SweepReport {
    /// Unused atoms that were replaced by a normalized signal column.
    pub replaced: Vec<usize>,
    /// Atoms whose restricted error was all zero and were left unchanged.
    pub degenerate: Vec<usize>,
}

impl SweepReport {
    pub fn merge(mut self, other: SweepReport) -> SweepReport {
        self.replaced.extend(other.replaced);
        self.degenerate.extend(other.degenerate);
        self
    }
}

/// Squared Frobenius norm of `D·A − X` for one side.
pub fn fit_error(dict: &Dictionary, codes: &SparseCodePair, side: Side, x: &PatchMatrix) -> f64 {
    let m = dict.patch_dim();
    let mut buf = vec![0.0; m];
    codes
        .columns()
        .iter()
        .zip(x.columns())
        .map(|(c, xj)| {
            buf.copy_from_slice(xj);
            for (&t, &a) in c.support.iter().zip(c.coeffs(side)) {
                axpy(-a, dict.atom(t), &mut buf);
            }
            dot(&buf, &buf)
        })
        .sum()
}

fn check_dims(dict: &Dictionary, codes: &SparseCodePair, x: &PatchMatrix) -> Result<()> {
    if dict.atoms() != codes.atoms() || dict.patch_dim() != x.patch_dim() || codes.count() != x.count() {
        return Err(FusionError::DimensionMismatch(format!(
            "dictionary {}x{}, codes {}x{}, signals {}x{}",
            dict.patch_dim(),
            dict.atoms(),
            codes.atoms(),
            codes.count(),
            x.patch_dim(),
            x.count()
        )));
    }
    Ok(())
}

/// One K-SVD sweep over the atoms of one side. `codes` is updated in place
/// for `side` only.
pub fn ksvd_update(
    dict: &Dictionary,
    codes: &mut SparseCodePair,
    side: Side,
    x: &PatchMatrix,
) -> Result<(Dictionary, SweepReport)> {
    check_dims(dict, codes, x)?;
    let m = dict.patch_dim();
    let n = dict.atoms();
    let p = x.count();
    let mut dict = dict.clone();
    let mut report = SweepReport::default();

    // usage[t] = (column, position within that column's support)
    let mut usage: Vec<Vec<(usize, usize)>> = vec![Vec::new(); n];
    for (j, c) in codes.columns().iter().enumerate() {
        for (k, &t) in c.support.iter().enumerate() {
            usage[t].push((j, k));
        }
    }

    let mut residual = x.data().as_slice_memory_order().expect("column-major").to_vec();
    for (j, c) in codes.columns().iter().enumerate() {
        let r = &mut residual[j * m..(j + 1) * m];
        for (&t, &a) in c.support.iter().zip(c.coeffs(side)) {
            axpy(-a, dict.atom(t), r);
        }
    }
    let mut resid_sq: Vec<f64> = residual.chunks_exact(m).map(|r| dot(r, r)).collect();
    let mut used_for_replacement = vec![false; p];

    let mut block = Vec::new();
    for t in 0..n {
        let users = &usage[t];
        if users.is_empty() {
            let worst = (0..p)
                .filter(|&j| !used_for_replacement[j])
                .fold(None::<(usize, f64)>, |best, j| match best {
                    Some((_, v)) if v >= resid_sq[j] => best,
                    _ => Some((j, resid_sq[j])),
                });
            if let Some((j, err)) = worst {
                let signal = x.column(j);
                let len = dot(signal, signal).sqrt();
                if err > 1e-24 && len > 0.0 {
                    let atom: Vec<f64> = signal.iter().map(|v| v / len).collect();
                    dict.set_atom(t, &atom);
                    used_for_replacement[j] = true;
                    report.replaced.push(t);
                }
            }
            continue;
        }

        block.clear();
        let atom = dict.atom(t).to_vec();
        for &(j, k) in users {
            let a = codes.column(j).coeffs(side)[k];
            let start = block.len();
            block.extend_from_slice(&residual[j * m..(j + 1) * m]);
            axpy(a, &atom, &mut block[start..]);
        }

        match dominant_rank1(&block, m) {
            None => {
                report.degenerate.push(t);
                for &(j, k) in users {
                    codes.columns_mut()[j].coeffs_mut(side)[k] = 0.0;
                    residual[j * m..(j + 1) * m].fill(0.0);
                    resid_sq[j] = 0.0;
                }
            }
            Some(fit) => {
                dict.set_atom(t, &fit.u);
                for (i, &(j, k)) in users.iter().enumerate() {
                    let coeff = fit.sigma * fit.v[i];
                    codes.columns_mut()[j].coeffs_mut(side)[k] = coeff;
                    let r = &mut residual[j * m..(j + 1) * m];
                    r.copy_from_slice(&block[i * m..(i + 1) * m]);
                    axpy(-coeff, &fit.u, r);
                    resid_sq[j] = dot(r, r);
                }
            }
        }
    }
    Ok((dict, report))
}

/// Updates both dictionaries independently against their own signals.
pub fn update_pair(
    dicts: &DictionaryPair,
    codes: &SparseCodePair,
    x1: &PatchMatrix,
    x2: &PatchMatrix,
) -> Result<(DictionaryPair, SparseCodePair, SweepReport)> {
    if x1.patch_dim() != x2.patch_dim() || x1.count() != x2.count() {
        return Err(FusionError::DimensionMismatch(format!(
            "signal sets are {}x{} and {}x{}",
            x1.patch_dim(),
            x1.count(),
            x2.patch_dim(),
            x2.count()
        )));
    }
    let mut codes = codes.clone();
    let (first, r1) = ksvd_update(&dicts.first, &mut codes, Side::First, x1)?;
    let (second, r2) = ksvd_update(&dicts.second, &mut codes, Side::Second, x2)?;
    Ok((DictionaryPair::new(first, second)?, codes, r1.merge(r2)))
}
