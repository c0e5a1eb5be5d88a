//! Fusion rule: binary max-magnitude selection of the coupled coefficients
//! for the correlated parts, independent parts added back unchanged.

use crate::config::FusionConfig;
use crate::decomposition::{decompose, DecompositionResult};
use crate::dictionary::DictionaryPair;
use crate::error::{FusionError, Result};
use crate::image_io::{
    replace_luminance, rgb_to_ycbcr, ycbcr_to_rgb, ColorImage, ColorSpace, GrayImage,
};
use crate::patches::{assemble_image, PatchMatrix};
use crate::sparse_coding::{ColumnCode, Side, SparseCodePair};

/// Keeps, per coefficient, the side with the larger magnitude; ties go to
/// the first side. The result has the same supports with the losing side
/// zeroed.
pub fn select_coefficients(codes: &SparseCodePair) -> SparseCodePair {
    let columns = codes
        .columns()
        .iter()
        .map(|c| {
            let (coeffs1, coeffs2) = c
                .coeffs1
                .iter()
                .zip(&c.coeffs2)
                .map(|(&a1, &a2)| {
                    let keep1 = if a1.abs() >= a2.abs() { a1 } else { 0.0 };
                    let keep2 = if a2.abs() > a1.abs() { a2 } else { 0.0 };
                    (keep1, keep2)
                })
                .unzip();
            ColumnCode {
                support: c.support.clone(),
                coeffs1,
                coeffs2,
            }
        })
        .collect();
    SparseCodePair::new(codes.atoms(), columns).expect("same layout as the input")
}

/// Selected coefficients and the fused patch matrices built from them.
#[derive(Debug, Clone)]
pub struct FusedPatches {
    pub selected: SparseCodePair,
    /// `D1 A1' + D2 A2'`
    pub correlated: PatchMatrix,
    /// `Z_F + E1 + E2`
    pub fused: PatchMatrix,
}

/// `D1 A1' + D2 A2'` with the geometry of `like`.
pub fn fuse_correlated(
    dicts: &DictionaryPair,
    codes: &SparseCodePair,
    like: &PatchMatrix,
) -> Result<PatchMatrix> {
    let selected = select_coefficients(codes);
    fuse_selected(dicts, &selected, like)
}

fn fuse_selected(
    dicts: &DictionaryPair,
    selected: &SparseCodePair,
    like: &PatchMatrix,
) -> Result<PatchMatrix> {
    let first = selected.reconstruct(&dicts.first, Side::First, like)?;
    let second = selected.reconstruct(&dicts.second, Side::Second, like)?;
    first.plus(&second)
}

/// Fused patches of a decomposition. Residuals are discarded.
pub fn fuse(result: &DecompositionResult) -> Result<FusedPatches> {
    let selected = select_coefficients(&result.codes);
    let correlated = fuse_selected(&result.dictionaries, &selected, &result.z1)?;
    let fused = correlated.plus(&result.e1)?.plus(&result.e2)?;
    Ok(FusedPatches {
        selected,
        correlated,
        fused,
    })
}

/// Everything produced while fusing a gray pair.
#[derive(Debug, Clone)]
pub struct FusionOutput {
    pub image: GrayImage,
    pub patches: FusedPatches,
    pub decomposition: DecompositionResult,
}

/// Decomposes, fuses and reassembles (averaging overlaps, then clipping).
pub fn fuse_images_detailed(
    img1: &GrayImage,
    img2: &GrayImage,
    cfg: &FusionConfig,
) -> Result<FusionOutput> {
    let decomposition = decompose(img1, img2, cfg)?;
    let patches = fuse(&decomposition)?;
    let image = assemble_image(&patches.fused)?;
    Ok(FusionOutput {
        image,
        patches,
        decomposition,
    })
}

pub fn fuse_images(img1: &GrayImage, img2: &GrayImage, cfg: &FusionConfig) -> Result<GrayImage> {
    Ok(fuse_images_detailed(img1, img2, cfg)?.image)
}

#[derive(Debug, Clone)]
pub struct ColorFusionOutput {
    pub rgb: ColorImage,
    pub ycbcr: ColorImage,
    pub luminance: FusionOutput,
}

/// Fuses the luminance of a functional RGB image with an anatomical gray
/// image; chroma passes through unchanged.
pub fn fuse_color_detailed(
    anatomical: &GrayImage,
    functional: &ColorImage,
    cfg: &FusionConfig,
) -> Result<ColorFusionOutput> {
    if functional.space() != ColorSpace::Rgb {
        return Err(FusionError::ColorSpace("expected an RGB functional image".into()));
    }
    if anatomical.dims() != functional.dims() {
        return Err(FusionError::DimensionMismatch(format!(
            "anatomical image is {:?}, functional image is {:?}",
            anatomical.dims(),
            functional.dims()
        )));
    }
    let ycc = rgb_to_ycbcr(functional)?;
    let luminance = fuse_images_detailed(&ycc.luminance(), anatomical, cfg)?;
    let ycbcr = replace_luminance(&ycc, &luminance.image)?;
    let rgb = ycbcr_to_rgb(&ycbcr)?;
    Ok(ColorFusionOutput {
        rgb,
        ycbcr,
        luminance,
    })
}

pub fn fuse_color(
    anatomical: &GrayImage,
    functional: &ColorImage,
    cfg: &FusionConfig,
) -> Result<ColorImage> {
    Ok(fuse_color_detailed(anatomical, functional, cfg)?.rgb)
}

#[cfg(test)]
mod tests {
    use super::*;
    use crate::dictionary::Dictionary;
    use ndarray::Array2;
    use rand::{Rng, SeedableRng};
    use rand_chacha::ChaCha8Rng;

    fn single(a1: f64, a2: f64) -> SparseCodePair {
        SparseCodePair::new(
            4,
            vec![ColumnCode {
                support: vec![2],
                coeffs1: vec![a1],
                coeffs2: vec![a2],
            }],
        )
        .unwrap()
    }

    #[test]
    fn selection_rule() {
        let s = select_coefficients(&single(3.0, -5.0));
        assert_eq!(s.column(0).coeffs1, vec![0.0]);
        assert_eq!(s.column(0).coeffs2, vec![-5.0]);

        let tie = select_coefficients(&single(2.0, -2.0));
        assert_eq!(tie.column(0).coeffs1, vec![2.0]);
        assert_eq!(tie.column(0).coeffs2, vec![0.0]);

        let zero = select_coefficients(&single(0.0, 0.0));
        assert_eq!(zero.column(0).coeffs1, vec![0.0]);
        assert_eq!(zero.column(0).coeffs2, vec![0.0]);
        // Entries outside the support are zero on both sides.
        assert_eq!(zero.dense(Side::First).row(0).sum(), 0.0);
    }

    fn random_codes(n: usize, p: usize, rng: &mut ChaCha8Rng) -> SparseCodePair {
        let columns = (0..p)
            .map(|_| {
                let support: Vec<usize> = (0..n).filter(|_| rng.random::<f64>() < 0.3).collect();
                let k = support.len();
                ColumnCode {
                    support,
                    coeffs1: (0..k).map(|_| rng.random::<f64>() * 2.0 - 1.0).collect(),
                    coeffs2: (0..k).map(|_| rng.random::<f64>() * 2.0 - 1.0).collect(),
                }
            })
            .collect();
        SparseCodePair::new(n, columns).unwrap()
    }

    #[test]
    fn exclusive_and_scale_consistent() {
        let mut rng = ChaCha8Rng::seed_from_u64(1);
        let codes = random_codes(12, 40, &mut rng);
        let sel = select_coefficients(&codes);
        let (s1, s2) = (sel.dense(Side::First), sel.dense(Side::Second));
        assert!((&s1 * &s2).iter().all(|&v| v == 0.0));

        let scaled_cols = codes
            .columns()
            .iter()
            .map(|c| ColumnCode {
                support: c.support.clone(),
                coeffs1: c.coeffs1.iter().map(|v| v * 3.5).collect(),
                coeffs2: c.coeffs2.iter().map(|v| v * 3.5).collect(),
            })
            .collect();
        let scaled = select_coefficients(&SparseCodePair::new(12, scaled_cols).unwrap());
        let mask = |m: &Array2<f64>| m.mapv(|v| v != 0.0);
        assert_eq!(mask(&s1), mask(&scaled.dense(Side::First)));
        assert_eq!(mask(&s2), mask(&scaled.dense(Side::Second)));
    }

    #[test]
    fn correlated_fusion_matches_brute_force() {
        let mut rng = ChaCha8Rng::seed_from_u64(2);
        let d = DictionaryPair::new(Dictionary::random(9, 12, &mut rng), Dictionary::random(9, 12, &mut rng)).unwrap();
        let codes = random_codes(12, 15, &mut rng);
        let like = PatchMatrix::zeros(std::sync::Arc::new(crate::patches::PatchGeometry::strip(9, 15).unwrap()));
        let zf = fuse_correlated(&d, &codes, &like).unwrap();

        let (a1, a2) = (codes.dense(Side::First), codes.dense(Side::Second));
        let mut b1 = Array2::zeros(a1.dim());
        let mut b2 = Array2::zeros(a2.dim());
        for ((i, j), &v1) in a1.indexed_iter() {
            let v2 = a2[[i, j]];
            if v1.abs() >= v2.abs() {
                b1[[i, j]] = v1;
            } else {
                b2[[i, j]] = v2;
            }
        }
        let want = d.first.data().dot(&b1) + d.second.data().dot(&b2);
        for (x, y) in zf.data().iter().zip(want.iter()) {
            assert!((x - y).abs() <= 1e-12);
        }
    }

    #[test]
    fn one_sided_and_symmetric_codes() {
        let mut rng = ChaCha8Rng::seed_from_u64(3);
        let d = DictionaryPair::new(Dictionary::random(9, 12, &mut rng), Dictionary::random(9, 12, &mut rng)).unwrap();
        let codes = random_codes(12, 10, &mut rng);
        let like = PatchMatrix::from_array(Array2::zeros((9, 10))).unwrap();

        let one_sided = SparseCodePair::new(
            12,
            codes
                .columns()
                .iter()
                .map(|c| ColumnCode { coeffs2: vec![0.0; c.support.len()], ..c.clone() })
                .collect(),
        )
        .unwrap();
        let zf = fuse_correlated(&d, &one_sided, &like).unwrap();
        assert_eq!(zf, one_sided.reconstruct(&d.first, Side::First, &like).unwrap());

        let same_d = DictionaryPair::new(d.first.clone(), d.first.clone()).unwrap();
        let same_codes = SparseCodePair::new(
            12,
            codes
                .columns()
                .iter()
                .map(|c| ColumnCode { coeffs2: c.coeffs1.clone(), ..c.clone() })
                .collect(),
        )
        .unwrap();
        let zf = fuse_correlated(&same_d, &same_codes, &like).unwrap();
        let direct = same_codes.reconstruct(&d.first, Side::First, &like).unwrap();
        for (x, y) in zf.data().iter().zip(direct.data()) {
            assert!((x - y).abs() <= 1e-15);
        }
    }

    #[test]
    fn fused_is_sum_of_parts() {
        let cfg = FusionConfig { patch_dim: 16, dict_atoms: 25, sparsity_t: 3, outer_iters: 2, ..FusionConfig::default() };
        let mut rng = ChaCha8Rng::seed_from_u64(4);
        let a = GrayImage::from_array(Array2::from_shape_fn((10, 10), |_| rng.random::<f64>()));
        let b = GrayImage::from_array(Array2::from_shape_fn((10, 10), |_| rng.random::<f64>()));
        let result = decompose(&a, &b, &cfg).unwrap();
        let fused = fuse(&result).unwrap();
        let want = fused.correlated.plus(&result.e1).unwrap().plus(&result.e2).unwrap();
        assert_eq!(fused.fused, want);

        let mut no_e = result.clone();
        no_e.e1 = PatchMatrix::zeros(result.e1.geometry().clone());
        no_e.e2 = no_e.e1.clone();
        let f = fuse(&no_e).unwrap();
        assert_eq!(f.fused, f.correlated);

        let mut no_z = result.clone();
        no_z.codes = SparseCodePair::empty(result.codes.atoms(), result.codes.count());
        let f = fuse(&no_z).unwrap();
        assert_eq!(f.fused, result.e1.plus(&result.e2).unwrap());
    }

    #[test]
    fn output_is_clipped() {
        let cfg = FusionConfig { patch_dim: 16, dict_atoms: 25, sparsity_t: 3, outer_iters: 2, ..FusionConfig::default() };
        let mut rng = ChaCha8Rng::seed_from_u64(5);
        let a = GrayImage::from_array(Array2::from_shape_fn((12, 12), |_| rng.random::<f64>()));
        let b = GrayImage::from_array(Array2::from_shape_fn((12, 12), |_| if rng.random::<f64>() < 0.5 { 1.0 } else { 0.0 }));
        let out = fuse_images(&a, &b, &cfg).unwrap();
        assert!(out.data().iter().all(|v| (0.0..=1.0).contains(v)));
    }

    #[test]
    fn color_fusion_passes_chroma_through() {
        let cfg = FusionConfig { patch_dim: 16, dict_atoms: 25, sparsity_t: 3, outer_iters: 2, ..FusionConfig::default() };
        let mut rng = ChaCha8Rng::seed_from_u64(6);
        let shape = (12, 12);
        let anatomical = GrayImage::from_array(Array2::from_shape_fn(shape, |_| rng.random::<f64>()));
        let functional = ColorImage::new(
            ColorSpace::Rgb,
            [0, 1, 2].map(|_| Array2::from_shape_fn(shape, |_| rng.random::<f64>())),
        )
        .unwrap();
        let out = fuse_color_detailed(&anatomical, &functional, &cfg).unwrap();
        let ycc = rgb_to_ycbcr(&functional).unwrap();
        assert_eq!(out.ycbcr.channel(1), ycc.channel(1));
        assert_eq!(out.ycbcr.channel(2), ycc.channel(2));
        assert_eq!(out.ycbcr.channel(0), out.luminance.image.data());
        assert_eq!(out.rgb.space(), ColorSpace::Rgb);

        let gray = Array2::from_shape_fn(shape, |_| rng.random::<f64>());
        let achromatic = ColorImage::new(ColorSpace::Rgb, [gray.clone(), gray.clone(), gray]).unwrap();
        let out = fuse_color_detailed(&anatomical, &achromatic, &cfg).unwrap();
        assert!(out.ycbcr.channel(1).iter().all(|&v| v == 0.5));
        assert!(out.ycbcr.channel(2).iter().all(|&v| v == 0.5));
        for ((r, g), b) in out.rgb.channel(0).iter().zip(out.rgb.channel(1)).zip(out.rgb.channel(2)) {
            assert!((r - g).abs() < 1e-12 && (g - b).abs() < 1e-12);
        }

        let wrong = GrayImage::filled(11, 12, 0.0);
        assert!(fuse_color(&wrong, &functional, &cfg).is_err());
        assert!(fuse_color(&anatomical, &ycc, &cfg).is_err());
    }
}
