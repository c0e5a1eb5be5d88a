//! Unit-norm dictionaries and the overcomplete DCT used to initialize them.

use std::f64::consts::PI;

use ndarray::{Array2, ShapeBuilder};
use rand::Rng;
use rand_distr::StandardNormal;

use crate::config::exact_sqrt;
use crate::error::{FusionError, Result};

const NORM_TOL: f64 = 1e-10;

/// `m × n` matrix whose columns (atoms) have unit Euclidean norm.
///
/// Stored column-major so each atom is a contiguous slice.
#[derive(Debug, Clone, PartialEq)]
pub struct Dictionary {
    data: Array2<f64>,
}

impl Dictionary {
    /// Wraps `data`, rejecting columns whose norm is not 1 within `1e-10`.
    pub fn new(data: Array2<f64>) -> Result<Self> {
        let dict = Self::from_array_unchecked(data);
        for t in 0..dict.atoms() {
            let norm = crate::linalg::norm(dict.atom(t));
            if (norm - 1.0).abs() > NORM_TOL {
                return Err(FusionError::InvalidDictionary(format!(
                    "atom {t} has norm {norm}"
                )));
            }
        }
        Ok(dict)
    }

    /// Normalizes every column of `data` to unit norm.
    pub fn normalized(data: Array2<f64>) -> Result<Self> {
        let mut dict = Self::from_array_unchecked(data);
        for t in 0..dict.atoms() {
            let atom = dict.atom_mut(t);
            let norm = crate::linalg::norm(atom);
            if norm == 0.0 || !norm.is_finite() {
                return Err(FusionError::InvalidDictionary(format!(
                    "atom {t} cannot be normalized (norm {norm})"
                )));
            }
            atom.iter_mut().for_each(|v| *v /= norm);
        }
        Ok(dict)
    }

    fn from_array_unchecked(data: Array2<f64>) -> Self {
        let mut fresh = Array2::zeros(data.dim().f());
        fresh.assign(&data);
        Self { data: fresh }
    }

    /// Gaussian random atoms, normalized.
    pub fn random<R: Rng + ?Sized>(patch_dim: usize, atoms: usize, rng: &mut R) -> Self {
        let data = Array2::from_shape_simple_fn((patch_dim, atoms).f(), || {
            rng.sample::<f64, _>(StandardNormal)
        });
        Self::normalized(data).expect("gaussian atoms are nonzero")
    }

    pub fn patch_dim(&self) -> usize {
        self.data.nrows()
    }

    pub fn atoms(&self) -> usize {
        self.data.ncols()
    }

    pub fn data(&self) -> &Array2<f64> {
        &self.data
    }

    pub fn atom(&self, t: usize) -> &[f64] {
        let m = self.patch_dim();
        &self.data.as_slice_memory_order().expect("column-major")[t * m..(t + 1) * m]
    }

    pub(crate) fn atom_mut(&mut self, t: usize) -> &mut [f64] {
        let m = self.patch_dim();
        &mut self.data.as_slice_memory_order_mut().expect("column-major")[t * m..(t + 1) * m]
    }

    /// Replaces atom `t`; `values` must already have unit norm.
    pub(crate) fn set_atom(&mut self, t: usize, values: &[f64]) {
        self.atom_mut(t).copy_from_slice(values);
    }

    /// Largest deviation of any atom norm from 1.
    pub fn max_norm_error(&self) -> f64 {
        (0..self.atoms())
            .map(|t| (crate::linalg::norm(self.atom(t)) - 1.0).abs())
            .fold(0.0, f64::max)
    }
}

/// Two dictionaries with the same shape whose same-index atoms are coupled.
#[derive(Debug, Clone, PartialEq)]
pub struct DictionaryPair {
    pub first: Dictionary,
    pub second: Dictionary,
}

impl DictionaryPair {
    pub fn new(first: Dictionary, second: Dictionary) -> Result<Self> {
        if first.data.dim() != second.data.dim() {
            return Err(FusionError::DimensionMismatch(format!(
                "coupled dictionaries are {:?} and {:?}",
                first.data.dim(),
                second.data.dim()
            )));
        }
        Ok(Self { first, second })
    }

    /// Both sides initialized to the overcomplete DCT.
    pub fn dct(patch_dim: usize, atoms: usize) -> Result<Self> {
        let d = overcomplete_dct(patch_dim, atoms)?;
        Ok(Self {
            first: d.clone(),
            second: d,
        })
    }

    pub fn patch_dim(&self) -> usize {
        self.first.patch_dim()
    }

    pub fn atoms(&self) -> usize {
        self.first.atoms()
    }
}

/// Separable overcomplete 2-D DCT with `atoms` columns for `patch_dim`-pixel
/// square patches.
///
/// With `K = ceil(sqrt(atoms))` 1-D frequencies sampled on the `b` pixels of
/// a patch side, the AC atoms are mean-removed before normalization so the
/// DC atom is the only constant one. Atoms are taken in (row frequency,
/// column frequency) lexicographic order and truncated to `atoms`.
pub fn overcomplete_dct(patch_dim: usize, atoms: usize) -> Result<Dictionary> {
    let side = exact_sqrt(patch_dim).ok_or_else(|| {
        FusionError::InvalidDictionary(format!("patch_dim {patch_dim} is not a perfect square"))
    })?;
    if side == 0 || atoms == 0 {
        return Err(FusionError::InvalidDictionary("empty dictionary".into()));
    }
    let freqs = (atoms as f64).sqrt().ceil() as usize;

    let mut basis = Vec::with_capacity(freqs);
    for k in 0..freqs {
        let mut v: Vec<f64> = (0..side)
            .map(|i| (PI * k as f64 * (2 * i + 1) as f64 / (2 * freqs) as f64).cos())
            .collect();
        if k > 0 {
            let mean = v.iter().sum::<f64>() / side as f64;
            v.iter_mut().for_each(|x| *x -= mean);
        }
        let norm = crate::linalg::norm(&v);
        if norm < 1e-12 {
            return Err(FusionError::InvalidDictionary(format!(
                "1-D frequency {k} vanishes on {side} samples"
            )));
        }
        v.iter_mut().for_each(|x| *x /= norm);
        basis.push(v);
    }

    let mut data = Array2::zeros((patch_dim, atoms).f());
    for (idx, mut col) in data.columns_mut().into_iter().enumerate() {
        let (row_freq, col_freq) = (idx / freqs, idx % freqs);
        for c in 0..side {
            for r in 0..side {
                col[c * side + r] = basis[row_freq][r] * basis[col_freq][c];
            }
        }
    }
    Dictionary::normalized(data)
}
