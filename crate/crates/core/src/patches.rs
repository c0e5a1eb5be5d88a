//! Overlapping patch extraction and averaging reassembly.
//!
//! A patch matrix holds one vectorized `b × b` window per column. Windows
//! are vectorized column-major: entry `c * b + r` is pixel `(r, c)` of the
//! window.

use std::sync::Arc;

use ndarray::{Array2, ArrayView1, ShapeBuilder};
use rayon::prelude::*;

use crate::config::FusionConfig;
use crate::error::{FusionError, Result};
use crate::image_io::GrayImage;

/// Where each patch column came from.
#[derive(Debug, Clone, PartialEq, Eq)]
pub struct PatchGeometry {
    pub height: usize,
    pub width: usize,
    pub side: usize,
    pub stride: usize,
    /// Top-left `(row, col)` of every patch, in column order.
    pub coords: Vec<(usize, usize)>,
}

impl PatchGeometry {
    pub fn new(height: usize, width: usize, side: usize, stride: usize) -> Result<Self> {
        if side == 0 || stride == 0 {
            return Err(FusionError::Geometry(
                "patch side and stride must be positive".into(),
            ));
        }
        if stride > side {
            return Err(FusionError::Geometry(format!(
                "stride {stride} exceeds patch side {side}; pixels between patches would be skipped"
            )));
        }
        if height < side || width < side {
            return Err(FusionError::ImageTooSmall {
                height,
                width,
                side,
            });
        }
        let rows = positions(height, side, stride);
        let cols = positions(width, side, stride);
        let coords = rows
            .iter()
            .flat_map(|&r| cols.iter().map(move |&c| (r, c)))
            .collect();
        Ok(Self {
            height,
            width,
            side,
            stride,
            coords,
        })
    }

    /// Geometry of a one-patch-high strip holding `count` patches. Used for
    /// patch matrices that do not come from an image.
    pub fn strip(patch_dim: usize, count: usize) -> Result<Self> {
        let side = crate::config::exact_sqrt(patch_dim).ok_or_else(|| {
            FusionError::Geometry(format!("patch_dim {patch_dim} is not a perfect square"))
        })?;
        if count == 0 {
            return Err(FusionError::Geometry("empty patch strip".into()));
        }
        Self::new(side, side + count - 1, side, 1)
    }

    pub fn patch_dim(&self) -> usize {
        self.side * self.side
    }

    pub fn count(&self) -> usize {
        self.coords.len()
    }

    fn check(&self) -> Result<()> {
        for &(r, c) in &self.coords {
            if r + self.side > self.height || c + self.side > self.width {
                return Err(FusionError::Geometry(format!(
                    "patch at ({r}, {c}) exceeds the {}x{} image",
                    self.height, self.width
                )));
            }
        }
        Ok(())
    }
}

/// Start offsets along one axis; the last offset is always `len - side`.
fn positions(len: usize, side: usize, stride: usize) -> Vec<usize> {
    let last = len - side;
    let mut out: Vec<usize> = (0..=last).step_by(stride).collect();
    if out.last() != Some(&last) {
        out.push(last);
    }
    out
}

/// `m × p` matrix of patch columns with the geometry needed to reassemble it.
///
/// Storage is column-major so each patch is a contiguous slice.
#[derive(Debug, Clone, PartialEq)]
pub struct PatchMatrix {
    data: Array2<f64>,
    geometry: Arc<PatchGeometry>,
}

impl PatchMatrix {
    pub fn new(data: Array2<f64>, geometry: Arc<PatchGeometry>) -> Result<Self> {
        if data.dim() != (geometry.patch_dim(), geometry.count()) {
            return Err(FusionError::Geometry(format!(
                "data is {:?}, geometry expects {:?}",
                data.dim(),
                (geometry.patch_dim(), geometry.count())
            )));
        }
        let data = if data.t().is_standard_layout() {
            data
        } else {
            let mut fresh = Array2::zeros(data.dim().f());
            fresh.assign(&data);
            fresh
        };
        Ok(Self { data, geometry })
    }

    /// Wraps an `m × p` matrix using a [`PatchGeometry::strip`] geometry.
    pub fn from_array(data: Array2<f64>) -> Result<Self> {
        let geometry = PatchGeometry::strip(data.nrows(), data.ncols())?;
        Self::new(data, Arc::new(geometry))
    }

    pub fn zeros(geometry: Arc<PatchGeometry>) -> Self {
        let data = Array2::zeros((geometry.patch_dim(), geometry.count()).f());
        Self { data, geometry }
    }

    /// New matrix with the same geometry and the given data.
    pub fn with_data(&self, data: Array2<f64>) -> Result<Self> {
        Self::new(data, Arc::clone(&self.geometry))
    }

    pub fn patch_dim(&self) -> usize {
        self.data.nrows()
    }

    pub fn count(&self) -> usize {
        self.data.ncols()
    }

    pub fn data(&self) -> &Array2<f64> {
        &self.data
    }

    pub fn data_mut(&mut self) -> &mut Array2<f64> {
        &mut self.data
    }

    pub fn geometry(&self) -> &Arc<PatchGeometry> {
        &self.geometry
    }

    pub fn column(&self, j: usize) -> &[f64] {
        let m = self.patch_dim();
        &self.data.as_slice_memory_order().expect("column-major")[j * m..(j + 1) * m]
    }

    pub fn column_mut(&mut self, j: usize) -> &mut [f64] {
        let m = self.patch_dim();
        &mut self.data.as_slice_memory_order_mut().expect("column-major")[j * m..(j + 1) * m]
    }

    pub fn columns(&self) -> std::slice::ChunksExact<'_, f64> {
        let m = self.patch_dim().max(1);
        self.data
            .as_slice_memory_order()
            .expect("column-major")
            .chunks_exact(m)
    }

    pub fn same_shape(&self, other: &PatchMatrix) -> bool {
        self.data.dim() == other.data.dim() && self.geometry == other.geometry
    }

    pub fn ensure_same_shape(&self, other: &PatchMatrix, what: &str) -> Result<()> {
        if self.same_shape(other) {
            Ok(())
        } else {
            Err(FusionError::DimensionMismatch(format!(
                "{what}: {:?} vs {:?}",
                self.data.dim(),
                other.data.dim()
            )))
        }
    }

    pub fn frobenius_norm(&self) -> f64 {
        self.data.iter().map(|v| v * v).sum::<f64>().sqrt()
    }

    /// Entrywise combination `self + other`.
    pub fn plus(&self, other: &PatchMatrix) -> Result<PatchMatrix> {
        self.ensure_same_shape(other, "sum")?;
        self.with_data(&self.data + &other.data)
    }

    /// Entrywise combination `self - other`.
    pub fn minus(&self, other: &PatchMatrix) -> Result<PatchMatrix> {
        self.ensure_same_shape(other, "difference")?;
        self.with_data(&self.data - &other.data)
    }
}

/// Extracts all `b × b` windows of `img` at the configured stride.
pub fn extract_patches(img: &GrayImage, cfg: &FusionConfig) -> Result<PatchMatrix> {
    let geometry = PatchGeometry::new(img.height(), img.width(), cfg.patch_side(), cfg.stride)?;
    extract_with_geometry(img, Arc::new(geometry))
}

pub fn extract_with_geometry(img: &GrayImage, geometry: Arc<PatchGeometry>) -> Result<PatchMatrix> {
    if img.dims() != (geometry.height, geometry.width) {
        return Err(FusionError::DimensionMismatch(format!(
            "image is {:?}, geometry expects {:?}",
            img.dims(),
            (geometry.height, geometry.width)
        )));
    }
    geometry.check()?;
    let b = geometry.side;
    let src = img.data();
    let mut out = PatchMatrix::zeros(geometry);
    let m = out.patch_dim();
    let coords = out.geometry.coords.clone();
    out.data
        .as_slice_memory_order_mut()
        .expect("column-major")
        .par_chunks_exact_mut(m.max(1))
        .zip(coords.par_iter())
        .for_each(|(col, &(r0, c0))| {
            for c in 0..b {
                for r in 0..b {
                    col[c * b + r] = src[[r0 + r, c0 + c]];
                }
            }
        });
    Ok(out)
}

/// Averages overlapping patch samples back into an image without clipping.
pub fn assemble_unclipped(patches: &PatchMatrix) -> Result<Array2<f64>> {
    let g = &patches.geometry;
    if patches.patch_dim() != g.patch_dim() || patches.count() != g.count() {
        return Err(FusionError::Geometry("matrix does not match geometry".into()));
    }
    g.check()?;
    let b = g.side;
    let mut sum = Array2::<f64>::zeros((g.height, g.width));
    let mut hits = Array2::<u32>::zeros((g.height, g.width));
    for (col, &(r0, c0)) in patches.columns().zip(&g.coords) {
        for c in 0..b {
            for r in 0..b {
                sum[[r0 + r, c0 + c]] += col[c * b + r];
                hits[[r0 + r, c0 + c]] += 1;
            }
        }
    }
    if hits.iter().any(|&h| h == 0) {
        return Err(FusionError::Geometry("some pixels are not covered by any patch".into()));
    }
    ndarray::Zip::from(&mut sum)
        .and(&hits)
        .for_each(|s, &h| *s /= f64::from(h));
    Ok(sum)
}

/// Averages overlapping patches into an image, then clips to `[0, 1]`.
pub fn assemble_image(patches: &PatchMatrix) -> Result<GrayImage> {
    Ok(GrayImage::from_array(assemble_unclipped(patches)?))
}

/// Per-column mean and population variance.
#[derive(Debug, Clone, PartialEq)]
pub struct ColumnStats {
    pub mean: Vec<f64>,
    pub var: Vec<f64>,
}

impl ColumnStats {
    pub fn std(&self) -> Vec<f64> {
        self.var.iter().map(|v| v.sqrt()).collect()
    }
}

/// Mean and population variance, accumulated relative to the first sample
/// so constant columns give exactly `(c, 0)`.
pub fn column_mean_var(col: ArrayView1<'_, f64>) -> (f64, f64) {
    shifted_mean_var(col.iter().copied())
}

pub(crate) fn shifted_mean_var(values: impl Iterator<Item = f64> + Clone) -> (f64, f64) {
    let Some(pivot) = values.clone().next() else {
        return (f64::NAN, f64::NAN);
    };
    let n = values.clone().count() as f64;
    let shift = values.clone().map(|v| v - pivot).sum::<f64>() / n;
    let var = values.map(|v| (v - pivot - shift).powi(2)).sum::<f64>() / n;
    (pivot + shift, var)
}

fn slice_mean_var(col: &[f64]) -> (f64, f64) {
    column_mean_var(ArrayView1::from(col))
}

/// Patch-wise mean and population (divide by `m`) statistics.
pub fn patch_column_stats(patches: &PatchMatrix) -> ColumnStats {
    let (mean, var) = patches.columns().map(slice_mean_var).unzip();
    ColumnStats { mean, var }
}

#[cfg(test)]
mod tests {
    use super::*;
    use ndarray::array;
    use proptest::prelude::*;
    use rand::{Rng, SeedableRng};
    use rand_chacha::ChaCha8Rng;

    fn cfg(side: usize, stride: usize) -> FusionConfig {
        FusionConfig {
            patch_dim: side * side,
            dict_atoms: side * side,
            sparsity_t: 1,
            stride,
            ..FusionConfig::default()
        }
    }

    #[test]
    fn enumerates_three_by_three() {
        let img = GrayImage::from_array(Array2::from_shape_fn((3, 3), |(r, c)| (3 * r + c) as f64 / 10.0));
        let p = extract_patches(&img, &cfg(2, 1)).unwrap();
        assert_eq!(p.count(), 4);
        assert_eq!(p.geometry().coords, vec![(0, 0), (0, 1), (1, 0), (1, 1)]);
        // Column-major within the window: (0,0), (1,0), (0,1), (1,1).
        assert_eq!(p.column(0), &[0.0, 0.3, 0.1, 0.4]);
        assert_eq!(p.column(3), &[0.4, 0.7, 0.5, 0.8]);
    }

    #[test]
    fn constant_image_gives_constant_columns() {
        let img = GrayImage::filled(10, 7, 0.37);
        let p = extract_patches(&img, &cfg(3, 2)).unwrap();
        assert!(p.data().iter().all(|&v| v == 0.37));
    }

    #[test]
    fn count_for_default_geometry() {
        let g = PatchGeometry::new(256, 256, 8, 1).unwrap();
        assert_eq!(g.count(), 62001);
    }

    #[test]
    fn clamped_positions_cover_edges() {
        assert_eq!(positions(10, 3, 3), vec![0, 3, 6, 7]);
        assert_eq!(positions(9, 3, 3), vec![0, 3, 6]);
        assert_eq!(positions(3, 3, 5), vec![0]);
    }

    #[test]
    fn too_small() {
        let img = GrayImage::filled(5, 9, 0.0);
        assert!(matches!(
            extract_patches(&img, &cfg(8, 1)),
            Err(FusionError::ImageTooSmall { .. })
        ));
    }

    #[test]
    fn single_patch_reshapes() {
        let img = GrayImage::from_array(array![[0.1, 0.2], [0.3, 0.4]]);
        let p = extract_patches(&img, &cfg(2, 1)).unwrap();
        assert_eq!(p.count(), 1);
        assert_eq!(assemble_image(&p).unwrap(), img);
    }

    #[test]
    fn overlapping_disagreement_averages() {
        let geom = Arc::new(PatchGeometry::new(2, 3, 2, 1).unwrap());
        let mut p = PatchMatrix::zeros(Arc::clone(&geom));
        p.column_mut(0).copy_from_slice(&[0.2; 4]);
        p.column_mut(1).copy_from_slice(&[0.4; 4]);
        let img = assemble_image(&p).unwrap();
        assert!((img.data()[[0, 1]] - 0.3).abs() < 1e-15);
        assert_eq!(img.data()[[0, 0]], 0.2);
        assert_eq!(img.data()[[1, 2]], 0.4);
    }

    #[test]
    fn assembly_clips() {
        let geom = Arc::new(PatchGeometry::new(2, 2, 2, 1).unwrap());
        let p = PatchMatrix::new(array![[1.5], [-0.5], [0.5], [0.25]], geom).unwrap();
        let img = assemble_image(&p).unwrap();
        assert_eq!(img.data(), &array![[1.0, 0.5], [0.0, 0.25]]);
        assert_eq!(assemble_unclipped(&p).unwrap()[[0, 0]], 1.5);
    }

    #[test]
    fn inconsistent_geometry_rejected() {
        let mut geom = PatchGeometry::new(4, 4, 2, 1).unwrap();
        geom.coords[0] = (3, 3);
        let geom = Arc::new(geom);
        let p = PatchMatrix::zeros(geom);
        assert!(matches!(assemble_unclipped(&p), Err(FusionError::Geometry(_))));
        let geom = Arc::new(PatchGeometry::new(4, 4, 2, 1).unwrap());
        assert!(PatchMatrix::new(Array2::zeros((3, 9)), geom).is_err());
    }

    #[test]
    fn stats_small_cases() {
        let geom = Arc::new(PatchGeometry::new(1, 2, 1, 1).unwrap());
        let p = PatchMatrix::new(array![[0.7, 0.0]], Arc::clone(&geom)).unwrap();
        let s = patch_column_stats(&p);
        assert_eq!(s.mean, vec![0.7, 0.0]);
        assert_eq!(s.std(), vec![0.0, 0.0]);

        let two = column_mean_var(ArrayView1::from(&[0.0, 1.0]));
        assert_eq!(two, (0.5, 0.25));
        assert_eq!(two.1.sqrt(), 0.5);
    }

    #[test]
    fn stats_match_naive_two_pass() {
        let mut rng = ChaCha8Rng::seed_from_u64(5);
        let img = GrayImage::from_array(Array2::from_shape_fn((12, 12), |_| rng.random::<f64>()));
        let p = extract_patches(&img, &cfg(4, 1)).unwrap();
        let stats = patch_column_stats(&p);
        for j in 0..p.count() {
            let col: Vec<f64> = p.data().column(j).to_vec();
            let mut mean = 0.0;
            for v in &col {
                mean += v;
            }
            mean /= col.len() as f64;
            let mut ss = 0.0;
            for v in &col {
                ss += (v - mean).powi(2);
            }
            let std = (ss / col.len() as f64).sqrt();
            assert!((stats.mean[j] - mean).abs() < 1e-12);
            assert!((stats.std()[j] - std).abs() < 1e-12);
        }
    }

    #[test]
    fn every_pixel_covered() {
        assert!(PatchGeometry::new(10, 10, 2, 3).is_err());
        for (h, w, b, s) in [(11, 13, 3, 2), (17, 9, 4, 3), (8, 8, 8, 5)] {
            let geom = Arc::new(PatchGeometry::new(h, w, b, s).unwrap());
            let mut p = PatchMatrix::zeros(geom);
            p.data_mut().fill(1.0);
            assert!(assemble_unclipped(&p).is_ok());
        }
    }

    proptest! {
        #[test]
        fn round_trip_exact(h in 4usize..20, w in 4usize..20, b in 1usize..5, s in 1usize..4, seed in 0u64..1000) {
            prop_assume!(b <= h && b <= w && s <= b);
            let mut rng = ChaCha8Rng::seed_from_u64(seed);
            let img = GrayImage::from_array(Array2::from_shape_fn((h, w), |_| rng.random::<f64>()));
            let p = extract_patches(&img, &cfg(b, s)).unwrap();
            let back = assemble_unclipped(&p).unwrap();
            for (a, b) in back.iter().zip(img.data()) {
                prop_assert!((a - b).abs() <= 1e-12);
            }
        }

        #[test]
        fn assembly_is_linear(seed in 0u64..1000, alpha in -2.0f64..2.0, beta in -2.0f64..2.0) {
            let mut rng = ChaCha8Rng::seed_from_u64(seed);
            let geom = Arc::new(PatchGeometry::new(9, 7, 3, 2).unwrap());
            let shape = (geom.patch_dim(), geom.count());
            let p = PatchMatrix::new(Array2::from_shape_fn(shape, |_| rng.random::<f64>()), Arc::clone(&geom)).unwrap();
            let q = PatchMatrix::new(Array2::from_shape_fn(shape, |_| rng.random::<f64>()), Arc::clone(&geom)).unwrap();
            let combo = p.with_data(p.data() * alpha + q.data() * beta).unwrap();
            let lhs = assemble_unclipped(&combo).unwrap();
            let rhs = assemble_unclipped(&p).unwrap() * alpha + assemble_unclipped(&q).unwrap() * beta;
            for (a, b) in lhs.iter().zip(&rhs) {
                prop_assert!((a - b).abs() <= 1e-12);
            }
        }
    }
}
