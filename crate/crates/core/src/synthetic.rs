//! Deterministic synthetic data: planted coupled-sparse models and
//! procedurally generated test images.

use ndarray::Array2;
use rand::Rng;

use crate::dictionary::{Dictionary, DictionaryPair};
use crate::image_io::GrayImage;
use crate::patches::PatchMatrix;
use crate::sparse_coding::{ColumnCode, Side, SparseCodePair};

/// Ground truth `Z_k = D_k A_k` with common-support codes.
#[derive(Debug, Clone)]
pub struct PlantedPair {
    pub dicts: DictionaryPair,
    pub codes: SparseCodePair,
    pub z1: PatchMatrix,
    pub z2: PatchMatrix,
}

/// Random unit-norm dictionaries and `sparsity`-sparse codes with a shared
/// uniformly drawn support per column. Coefficient magnitudes are uniform in
/// `[0.5, 1.5]` with random signs, drawn independently per side.
pub fn planted_pair<R: Rng + ?Sized>(
    patch_dim: usize,
    atoms: usize,
    count: usize,
    sparsity: usize,
    rng: &mut R,
) -> PlantedPair {
    let dicts = DictionaryPair::new(
        Dictionary::random(patch_dim, atoms, rng),
        Dictionary::random(patch_dim, atoms, rng),
    )
    .expect("same shape");
    let coeff = |rng: &mut R| {
        let mag = rng.random_range(0.5..1.5);
        if rng.random::<bool>() {
            mag
        } else {
            -mag
        }
    };
    let columns = (0..count)
        .map(|_| {
            let mut support = Vec::with_capacity(sparsity);
            while support.len() < sparsity {
                let t = rng.random_range(0..atoms);
                if !support.contains(&t) {
                    support.push(t);
                }
            }
            let coeffs1 = (0..sparsity).map(|_| coeff(rng)).collect();
            let coeffs2 = (0..sparsity).map(|_| coeff(rng)).collect();
            ColumnCode {
                support,
                coeffs1,
                coeffs2,
            }
        })
        .collect();
    let codes = SparseCodePair::new(atoms, columns).expect("valid planted codes");
    let z1 = PatchMatrix::from_array(dicts.first.data().dot(&codes.dense(Side::First)))
        .expect("square patch_dim");
    let z2 = PatchMatrix::from_array(dicts.second.data().dot(&codes.dense(Side::Second)))
        .expect("square patch_dim");
    PlantedPair {
        dicts,
        codes,
        z1,
        z2,
    }
}

/// Planted correlated parts plus per-side independent components.
#[derive(Debug, Clone)]
pub struct PlantedDecomposition {
    pub correlated: PlantedPair,
    pub e1: PatchMatrix,
    pub e2: PatchMatrix,
    pub x1: PatchMatrix,
    pub x2: PatchMatrix,
}

/// Adds independent components with disjoint spatial masks: within every
/// patch the first side may only be active on the top half of the window
/// and the second side only on the bottom half. A column carries an
/// independent component on a side with probability `active`; values are
/// uniform in `[-amplitude, amplitude]`.
pub fn planted_decomposition<R: Rng + ?Sized>(
    correlated: PlantedPair,
    active: f64,
    amplitude: f64,
    rng: &mut R,
) -> PlantedDecomposition {
    let m = correlated.z1.patch_dim();
    let p = correlated.z1.count();
    let side = (m as f64).sqrt() as usize;
    let mut e1 = Array2::zeros((m, p));
    let mut e2 = Array2::zeros((m, p));
    for j in 0..p {
        let on1 = rng.random::<f64>() < active;
        let on2 = rng.random::<f64>() < active;
        for i in 0..m {
            let row = i % side;
            let top = row < side / 2;
            if on1 && top {
                e1[[i, j]] = rng.random_range(-amplitude..=amplitude);
            }
            if on2 && !top {
                e2[[i, j]] = rng.random_range(-amplitude..=amplitude);
            }
        }
    }
    let e1 = correlated.z1.with_data(e1).expect("same shape");
    let e2 = correlated.z2.with_data(e2).expect("same shape");
    let x1 = correlated.z1.plus(&e1).expect("same shape");
    let x2 = correlated.z2.plus(&e2).expect("same shape");
    PlantedDecomposition {
        correlated,
        e1,
        e2,
        x1,
        x2,
    }
}

struct Ellipse {
    value: f64,
    a: f64,
    b: f64,
    x0: f64,
    y0: f64,
    phi_deg: f64,
}

/// Modified Shepp–Logan head phantom.
pub fn shepp_logan(size: usize) -> GrayImage {
    let ellipses = [
        Ellipse { value: 1.0, a: 0.69, b: 0.92, x0: 0.0, y0: 0.0, phi_deg: 0.0 },
        Ellipse { value: -0.8, a: 0.6624, b: 0.874, x0: 0.0, y0: -0.0184, phi_deg: 0.0 },
        Ellipse { value: -0.2, a: 0.11, b: 0.31, x0: 0.22, y0: 0.0, phi_deg: -18.0 },
        Ellipse { value: -0.2, a: 0.16, b: 0.41, x0: -0.22, y0: 0.0, phi_deg: 18.0 },
        Ellipse { value: 0.1, a: 0.21, b: 0.25, x0: 0.0, y0: 0.35, phi_deg: 0.0 },
        Ellipse { value: 0.1, a: 0.046, b: 0.046, x0: 0.0, y0: 0.1, phi_deg: 0.0 },
        Ellipse { value: 0.1, a: 0.046, b: 0.046, x0: 0.0, y0: -0.1, phi_deg: 0.0 },
        Ellipse { value: 0.1, a: 0.046, b: 0.023, x0: -0.08, y0: -0.605, phi_deg: 0.0 },
        Ellipse { value: 0.1, a: 0.023, b: 0.023, x0: 0.0, y0: -0.606, phi_deg: 0.0 },
        Ellipse { value: 0.1, a: 0.023, b: 0.046, x0: 0.06, y0: -0.605, phi_deg: 0.0 },
    ];
    let data = Array2::from_shape_fn((size, size), |(r, c)| {
        let x = (2.0 * c as f64 + 1.0) / size as f64 - 1.0;
        let y = 1.0 - (2.0 * r as f64 + 1.0) / size as f64;
        ellipses
            .iter()
            .filter(|e| {
                let (s, co) = e.phi_deg.to_radians().sin_cos();
                let (dx, dy) = (x - e.x0, y - e.y0);
                let u = dx * co + dy * s;
                let v = -dx * s + dy * co;
                (u / e.a).powi(2) + (v / e.b).powi(2) <= 1.0
            })
            .map(|e| e.value)
            .sum::<f64>()
    });
    GrayImage::from_array(data)
}

/// Smooth anatomy-like image: a bright disc with soft edges plus Gaussian
/// blobs of different widths.
pub fn soft_blobs(size: usize) -> GrayImage {
    let s = size as f64;
    let blobs = [
        (0.35, 0.40, 0.08, 0.45),
        (0.62, 0.35, 0.05, 0.35),
        (0.55, 0.68, 0.11, 0.30),
        (0.30, 0.70, 0.04, 0.40),
    ];
    let data = Array2::from_shape_fn((size, size), |(r, c)| {
        let (y, x) = ((r as f64 + 0.5) / s, (c as f64 + 0.5) / s);
        let d = ((x - 0.5).powi(2) + (y - 0.5).powi(2)).sqrt();
        let disc = 0.35 / (1.0 + ((d - 0.4) / 0.02).exp());
        let bumps: f64 = blobs
            .iter()
            .map(|&(cx, cy, w, h)| h * (-((x - cx).powi(2) + (y - cy).powi(2)) / (2.0 * w * w)).exp())
            .sum();
        0.1 + disc + bumps
    });
    GrayImage::from_array(data)
}

/// Oriented sinusoidal texture under a smooth radial envelope.
pub fn grating(size: usize) -> GrayImage {
    let s = size as f64;
    let data = Array2::from_shape_fn((size, size), |(r, c)| {
        let (y, x) = ((r as f64 + 0.5) / s - 0.5, (c as f64 + 0.5) / s - 0.5);
        let envelope = (-(x * x + y * y) / 0.08).exp();
        let wave = (2.0 * std::f64::consts::PI * (6.0 * x + 3.0 * y)).sin();
        0.5 + 0.3 * envelope * wave + 0.15 * x
    });
    GrayImage::from_array(data)
}

/// The three fixed test images used by the idempotence checks.
pub fn standard_test_images(size: usize) -> Vec<(&'static str, GrayImage)> {
    vec![
        ("shepp-logan", shepp_logan(size)),
        ("soft-blobs", soft_blobs(size)),
        ("grating", grating(size)),
    ]
}
