//! 8-bit PNG input/output and the RGB ↔ YCbCr conversion used for
//! functional color images.
//!
//! Samples are held as `f64` in `[0, 1]`; quantization to bytes happens only
//! when saving.

use std::path::Path;

use image::{DynamicImage, ImageFormat, ImageReader};
use ndarray::Array2;

use crate::error::{FusionError, Result};

/// Single-channel intensity image, row-major `height × width`.
#[derive(Debug, Clone, PartialEq)]
pub struct GrayImage {
    data: Array2<f64>,
}

impl GrayImage {
    /// Wraps `data` after clamping every sample into `[0, 1]`.
    pub fn from_array(mut data: Array2<f64>) -> Self {
        data.mapv_inplace(clamp_unit);
        Self { data }
    }

    /// Fails unless every sample is already in `[0, 1]`.
    pub fn try_from_array(data: Array2<f64>) -> Result<Self> {
        if let Some(v) = data.iter().find(|v| !(0.0..=1.0).contains(*v)) {
            return Err(FusionError::DimensionMismatch(format!(
                "sample {v} outside [0, 1]"
            )));
        }
        Ok(Self { data })
    }

    pub fn filled(height: usize, width: usize, value: f64) -> Self {
        Self::from_array(Array2::from_elem((height, width), value))
    }

    pub fn height(&self) -> usize {
        self.data.nrows()
    }

    pub fn width(&self) -> usize {
        self.data.ncols()
    }

    pub fn dims(&self) -> (usize, usize) {
        self.data.dim()
    }

    pub fn data(&self) -> &Array2<f64> {
        &self.data
    }

    pub fn into_array(self) -> Array2<f64> {
        self.data
    }
}

#[derive(Debug, Clone, Copy, PartialEq, Eq)]
pub enum ColorSpace {
    Rgb,
    YCbCr,
}

/// Three-channel image tagged with its color space.
#[derive(Debug, Clone, PartialEq)]
pub struct ColorImage {
    space: ColorSpace,
    channels: [Array2<f64>; 3],
}

impl ColorImage {
    /// Builds a tagged color image; samples are clamped into `[0, 1]`.
    pub fn new(space: ColorSpace, channels: [Array2<f64>; 3]) -> Result<Self> {
        let dim = channels[0].dim();
        if channels.iter().any(|c| c.dim() != dim) {
            return Err(FusionError::DimensionMismatch(
                "color channels differ in size".into(),
            ));
        }
        let channels = channels.map(|mut c| {
            c.mapv_inplace(clamp_unit);
            c
        });
        Ok(Self { space, channels })
    }

    pub fn space(&self) -> ColorSpace {
        self.space
    }

    pub fn dims(&self) -> (usize, usize) {
        self.channels[0].dim()
    }

    pub fn channel(&self, idx: usize) -> &Array2<f64> {
        &self.channels[idx]
    }

    pub fn channels(&self) -> &[Array2<f64>; 3] {
        &self.channels
    }

    /// First channel as a gray image (the luminance for YCbCr images).
    pub fn luminance(&self) -> GrayImage {
        GrayImage {
            data: self.channels[0].clone(),
        }
    }
}

#[derive(Debug, Clone, PartialEq)]
pub enum LoadedImage {
    Gray(GrayImage),
    Color(ColorImage),
}

impl LoadedImage {
    pub fn dims(&self) -> (usize, usize) {
        match self {
            LoadedImage::Gray(g) => g.dims(),
            LoadedImage::Color(c) => c.dims(),
        }
    }
}

impl From<GrayImage> for LoadedImage {
    fn from(img: GrayImage) -> Self {
        LoadedImage::Gray(img)
    }
}

impl From<ColorImage> for LoadedImage {
    fn from(img: ColorImage) -> Self {
        LoadedImage::Color(img)
    }
}

/// Reads an 8-bit grayscale or 8-bit RGB PNG, mapping byte `v` to `v / 255`.
pub fn load_image(path: impl AsRef<Path>) -> Result<LoadedImage> {
    let path = path.as_ref();
    let read_err = |message: String| FusionError::ImageRead {
        path: path.to_path_buf(),
        message,
    };
    let reader = ImageReader::open(path)
        .map_err(|e| read_err(e.to_string()))?
        .with_guessed_format()
        .map_err(|e| read_err(e.to_string()))?;
    if reader.format() != Some(ImageFormat::Png) {
        return Err(FusionError::UnsupportedFormat {
            path: path.to_path_buf(),
            message: "only PNG files are supported".into(),
        });
    }
    let decoded = reader.decode().map_err(|e| read_err(e.to_string()))?;
    match decoded {
        DynamicImage::ImageLuma8(buf) => {
            let (w, h) = buf.dimensions();
            let data = Array2::from_shape_fn((h as usize, w as usize), |(y, x)| {
                f64::from(buf.get_pixel(x as u32, y as u32).0[0]) / 255.0
            });
            Ok(LoadedImage::Gray(GrayImage { data }))
        }
        DynamicImage::ImageRgb8(buf) => {
            let (w, h) = buf.dimensions();
            let shape = (h as usize, w as usize);
            let channels = [0, 1, 2].map(|c| {
                Array2::from_shape_fn(shape, |(y, x)| {
                    f64::from(buf.get_pixel(x as u32, y as u32).0[c]) / 255.0
                })
            });
            Ok(LoadedImage::Color(ColorImage {
                space: ColorSpace::Rgb,
                channels,
            }))
        }
        other => Err(FusionError::UnsupportedFormat {
            path: path.to_path_buf(),
            message: format!(
                "expected 8-bit grayscale or 8-bit RGB, found {:?}",
                other.color()
            ),
        }),
    }
}

/// Quantizes a `[0, 1]` sample to a byte, rounding half away from zero.
pub fn quantize(v: f64) -> u8 {
    (clamp_unit(v) * 255.0).round() as u8
}

/// Writes an 8-bit PNG. Color images must be tagged RGB.
pub fn save_image(img: &LoadedImage, path: impl AsRef<Path>) -> Result<()> {
    let path = path.as_ref();
    let dynamic = match img {
        LoadedImage::Gray(g) => {
            let (h, w) = g.dims();
            let buf = image::GrayImage::from_fn(w as u32, h as u32, |x, y| {
                image::Luma([quantize(g.data[[y as usize, x as usize]])])
            });
            DynamicImage::ImageLuma8(buf)
        }
        LoadedImage::Color(c) => {
            if c.space != ColorSpace::Rgb {
                return Err(FusionError::ColorSpace("convert to RGB first".into()));
            }
            let (h, w) = c.dims();
            let buf = image::RgbImage::from_fn(w as u32, h as u32, |x, y| {
                let at = [y as usize, x as usize];
                image::Rgb([
                    quantize(c.channels[0][at]),
                    quantize(c.channels[1][at]),
                    quantize(c.channels[2][at]),
                ])
            });
            DynamicImage::ImageRgb8(buf)
        }
    };
    dynamic
        .save_with_format(path, ImageFormat::Png)
        .map_err(|e| FusionError::ImageWrite {
            path: path.to_path_buf(),
            message: e.to_string(),
        })
}

pub fn save_gray(img: &GrayImage, path: impl AsRef<Path>) -> Result<()> {
    save_image(&LoadedImage::Gray(img.clone()), path)
}

// Full-range BT.601 in [0, 1] space.
const KR: f64 = 0.299;
const KG: f64 = 0.587;
const KB: f64 = 0.114;
const CB_SCALE: f64 = 0.564;
const CR_SCALE: f64 = 0.713;

/// Converts a single RGB triple to (Y, Cb, Cr) without clipping.
///
/// Written in terms of channel differences (using `KR + KG + KB = 1`) so
/// that gray inputs map to exactly `(g, 0.5, 0.5)`.
pub fn rgb_to_ycbcr_pixel(r: f64, g: f64, b: f64) -> (f64, f64, f64) {
    let y = g + KR * (r - g) + KB * (b - g);
    let b_minus_y = KR * (b - r) + KG * (b - g);
    let r_minus_y = KG * (r - g) + KB * (r - b);
    (y, 0.5 + b_minus_y * CB_SCALE, 0.5 + r_minus_y * CR_SCALE)
}

/// Inverse of [`rgb_to_ycbcr_pixel`] without clipping.
pub fn ycbcr_to_rgb_pixel(y: f64, cb: f64, cr: f64) -> (f64, f64, f64) {
    let r_minus_y = (cr - 0.5) / CR_SCALE;
    let b_minus_y = (cb - 0.5) / CB_SCALE;
    let g = y - (KR * r_minus_y + KB * b_minus_y) / KG;
    (y + r_minus_y, g, y + b_minus_y)
}

pub fn rgb_to_ycbcr(img: &ColorImage) -> Result<ColorImage> {
    if img.space != ColorSpace::Rgb {
        return Err(FusionError::ColorSpace("expected an RGB image".into()));
    }
    Ok(map_pixels(img, ColorSpace::YCbCr, rgb_to_ycbcr_pixel))
}

pub fn ycbcr_to_rgb(img: &ColorImage) -> Result<ColorImage> {
    if img.space != ColorSpace::YCbCr {
        return Err(FusionError::ColorSpace("expected a YCbCr image".into()));
    }
    Ok(map_pixels(img, ColorSpace::Rgb, ycbcr_to_rgb_pixel))
}

fn map_pixels(
    img: &ColorImage,
    space: ColorSpace,
    f: impl Fn(f64, f64, f64) -> (f64, f64, f64),
) -> ColorImage {
    let dim = img.dims();
    let mut out = [
        Array2::zeros(dim),
        Array2::zeros(dim),
        Array2::zeros(dim),
    ];
    let [a, b, c] = &img.channels;
    for ((y, x), &va) in a.indexed_iter() {
        let (p, q, r) = f(va, b[[y, x]], c[[y, x]]);
        out[0][[y, x]] = clamp_unit(p);
        out[1][[y, x]] = clamp_unit(q);
        out[2][[y, x]] = clamp_unit(r);
    }
    ColorImage {
        space,
        channels: out,
    }
}

/// Returns `color` with its luminance channel replaced by `y`.
pub fn replace_luminance(color: &ColorImage, y: &GrayImage) -> Result<ColorImage> {
    if color.space != ColorSpace::YCbCr {
        return Err(FusionError::ColorSpace("expected a YCbCr image".into()));
    }
    if color.dims() != y.dims() {
        return Err(FusionError::DimensionMismatch(format!(
            "color image is {:?}, luminance is {:?}",
            color.dims(),
            y.dims()
        )));
    }
    let mut out = color.clone();
    out.channels[0] = y.data.clone();
    Ok(out)
}

pub(crate) fn clamp_unit(v: f64) -> f64 {
    if v.is_nan() {
        0.0
    } else {
        v.clamp(0.0, 1.0)
    }
}

#[cfg(test)]
mod tests {
    use super::*;
    use ndarray::array;
    use rand::{Rng, SeedableRng};
    use rand_chacha::ChaCha8Rng;

    fn rgb(r: f64, g: f64, b: f64) -> ColorImage {
        ColorImage::new(
            ColorSpace::Rgb,
            [array![[r]], array![[g]], array![[b]]],
        )
        .unwrap()
    }

    fn ycc(y: f64, cb: f64, cr: f64) -> ColorImage {
        ColorImage::new(
            ColorSpace::YCbCr,
            [array![[y]], array![[cb]], array![[cr]]],
        )
        .unwrap()
    }

    fn px(img: &ColorImage) -> [f64; 3] {
        [0, 1, 2].map(|c| img.channel(c)[[0, 0]])
    }

    #[test]
    fn load_scales_bytes() {
        let dir = tempfile::tempdir().unwrap();
        let path = dir.path().join("g.png");
        image::GrayImage::from_raw(3, 1, vec![0, 128, 255])
            .unwrap()
            .save(&path)
            .unwrap();
        let LoadedImage::Gray(g) = load_image(&path).unwrap() else {
            panic!("expected gray");
        };
        assert_eq!(g.data()[[0, 0]], 0.0);
        assert_eq!(g.data()[[0, 1]], 128.0 / 255.0);
        assert!((g.data()[[0, 1]] - 0.50196).abs() < 1e-5);
        assert_eq!(g.data()[[0, 2]], 1.0);
    }

    #[test]
    fn rgb_file_loads_as_color() {
        let dir = tempfile::tempdir().unwrap();
        let path = dir.path().join("c.png");
        image::RgbImage::from_raw(1, 1, vec![255, 0, 51])
            .unwrap()
            .save(&path)
            .unwrap();
        let LoadedImage::Color(c) = load_image(&path).unwrap() else {
            panic!("expected color");
        };
        assert_eq!(c.space(), ColorSpace::Rgb);
        assert_eq!(px(&c), [1.0, 0.0, 0.2]);
    }

    #[test]
    fn unsupported_inputs() {
        let dir = tempfile::tempdir().unwrap();
        let rgba = dir.path().join("a.png");
        image::RgbaImage::from_raw(1, 1, vec![1, 2, 3, 4])
            .unwrap()
            .save(&rgba)
            .unwrap();
        assert!(matches!(
            load_image(&rgba),
            Err(FusionError::UnsupportedFormat { .. })
        ));
        let g16 = dir.path().join("g16.png");
        image::ImageBuffer::<image::Luma<u16>, _>::from_raw(1, 1, vec![1000u16])
            .unwrap()
            .save(&g16)
            .unwrap();
        assert!(matches!(
            load_image(&g16),
            Err(FusionError::UnsupportedFormat { .. })
        ));
        let text = dir.path().join("x.png");
        std::fs::write(&text, b"not an image").unwrap();
        assert!(load_image(&text).is_err());
        assert!(matches!(
            load_image(dir.path().join("missing.png")),
            Err(FusionError::ImageRead { .. })
        ));
    }

    #[test]
    fn quantization_rule() {
        assert_eq!(quantize(0.5), 128);
        assert_eq!(quantize(0.0), 0);
        assert_eq!(quantize(1.0), 255);
        assert_eq!(quantize(1.5), 255);
        assert_eq!(quantize(-0.2), 0);
    }

    #[test]
    fn save_load_within_one_step() {
        let mut rng = ChaCha8Rng::seed_from_u64(3);
        let img = GrayImage::from_array(Array2::from_shape_fn((7, 9), |_| rng.random::<f64>()));
        let dir = tempfile::tempdir().unwrap();
        let path = dir.path().join("r.png");
        save_gray(&img, &path).unwrap();
        let LoadedImage::Gray(back) = load_image(&path).unwrap() else {
            panic!("expected gray");
        };
        let worst = (back.data() - img.data())
            .iter()
            .fold(0.0f64, |m, v| m.max(v.abs()));
        assert!(worst <= 1.0 / 510.0 + 1e-15, "{worst}");
    }

    #[test]
    fn save_rejects_ycbcr() {
        let dir = tempfile::tempdir().unwrap();
        let err = save_image(&ycc(0.5, 0.5, 0.5).into(), dir.path().join("y.png")).unwrap_err();
        assert_eq!(err.to_string(), "convert to RGB first");
    }

    #[test]
    fn unwritable_path() {
        let img = GrayImage::filled(2, 2, 0.5);
        assert!(matches!(
            save_gray(&img, "/nonexistent-dir/sub/out.png"),
            Err(FusionError::ImageWrite { .. })
        ));
    }

    #[test]
    fn ycbcr_reference_values() {
        for g in [0.0, 0.25, 0.7, 1.0] {
            let out = px(&rgb_to_ycbcr(&rgb(g, g, g)).unwrap());
            assert!((out[0] - g).abs() < 1e-15);
            assert_eq!(out[1], 0.5);
            assert_eq!(out[2], 0.5);
        }
        let red = px(&rgb_to_ycbcr(&rgb(1.0, 0.0, 0.0)).unwrap());
        assert!((red[0] - 0.299).abs() < 1e-15);
        // Hand evaluation: 0.5 + (1 - 0.299) * 0.713 = 0.999813.
        assert!((red[2] - 0.999_813).abs() < 1e-12);
        assert!((red[2] - 0.99988).abs() < 1e-4);
        assert_eq!(px(&rgb_to_ycbcr(&rgb(0.0, 0.0, 0.0)).unwrap()), [0.0, 0.5, 0.5]);
    }

    #[test]
    fn inverse_reference_values() {
        assert_eq!(px(&ycbcr_to_rgb(&ycc(0.5, 0.5, 0.5)).unwrap()), [0.5, 0.5, 0.5]);
        assert_eq!(px(&ycbcr_to_rgb(&ycc(0.0, 0.5, 0.5)).unwrap()), [0.0, 0.0, 0.0]);
    }

    #[test]
    fn wrong_tags() {
        assert!(rgb_to_ycbcr(&ycc(0.1, 0.5, 0.5)).is_err());
        assert!(ycbcr_to_rgb(&rgb(0.1, 0.5, 0.5)).is_err());
        assert!(replace_luminance(&rgb(0.1, 0.5, 0.5), &GrayImage::filled(1, 1, 0.0)).is_err());
    }

    #[test]
    fn round_trip_in_gamut() {
        let mut rng = ChaCha8Rng::seed_from_u64(11);
        let shape = (16, 16);
        let img = ColorImage::new(
            ColorSpace::Rgb,
            [0, 1, 2].map(|_| Array2::from_shape_fn(shape, |_| rng.random::<f64>())),
        )
        .unwrap();
        let back = ycbcr_to_rgb(&rgb_to_ycbcr(&img).unwrap()).unwrap();
        let mut worst = 0.0f64;
        for c in 0..3 {
            for (a, b) in img.channel(c).iter().zip(back.channel(c)) {
                worst = worst.max((a - b).abs());
            }
        }
        assert!(worst <= 1e-6, "{worst}");
    }

    #[test]
    fn luminance_replacement() {
        let color = ColorImage::new(
            ColorSpace::YCbCr,
            [
                array![[0.2, 0.4], [0.6, 0.8]],
                array![[0.1, 0.3], [0.5, 0.7]],
                array![[0.9, 0.8], [0.7, 0.6]],
            ],
        )
        .unwrap();
        let same = replace_luminance(&color, &color.luminance()).unwrap();
        assert_eq!(same, color);
        let dark = replace_luminance(&color, &GrayImage::filled(2, 2, 0.0)).unwrap();
        assert!(dark.channel(0).iter().all(|&v| v == 0.0));
        assert_eq!(dark.channel(1), color.channel(1));
        assert_eq!(dark.channel(2), color.channel(2));
        assert!(matches!(
            replace_luminance(&color, &GrayImage::filled(3, 2, 0.0)),
            Err(FusionError::DimensionMismatch(_))
        ));
    }
}
