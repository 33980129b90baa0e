//! Grayscale images, multi-scale pyramids, and sub-pixel sampling.
//!
//! Intensities are stored as `f64` in `[0, 1]` (8-bit inputs are divided by
//! 255 on load). Images are immutable after construction as far as the rest
//! of the crate is concerned; reads are freely concurrent.

use std::io::Read;
use std::path::Path;
use thiserror::Error;

#[derive(Debug, Error)]
pub enum ImageError {
    #[error("data length {got} does not match {width}x{height}")]
    SizeMismatch { width: usize, height: usize, got: usize },
    #[error("image {width}x{height} too small for {levels} pyramid levels (min dim 8)")]
    TooSmallForPyramid { width: usize, height: usize, levels: usize },
    #[error("pyramid needs at least one level")]
    NoLevels,
    #[error("non-finite or out-of-range intensity at index {index}: {value}")]
    BadIntensity { index: usize, value: f64 },
    #[error("unsupported image format: {0}")]
    Unsupported(String),
    #[error("bad PGM header: {0}")]
    BadPgm(String),
    #[error(transparent)]
    Io(#[from] std::io::Error),
    #[error("png: {0}")]
    Png(String),
}

/// Value and analytic spatial gradient of the bilinear surface at a
/// sub-pixel position.
#[derive(Debug, Clone, Copy, PartialEq)]
pub struct Sample {
    pub value: f64,
    pub gx: f64,
    pub gy: f64,
}

/// Row-major grayscale image with intensities in `[0, 1]`.
#[derive(Debug, Clone, PartialEq)]
pub struct GrayImage {
    width: usize,
    height: usize,
    data: Vec<f64>,
}

impl GrayImage {
    pub fn new(width: usize, height: usize, data: Vec<f64>) -> Result<Self, ImageError> {
        if data.len() != width * height {
            return Err(ImageError::SizeMismatch { width, height, got: data.len() });
        }
        Ok(GrayImage { width, height, data })
    }

    /// Like [`GrayImage::new`] but additionally checks the `[0, 1]` range
    /// (applied to data loaded from files).
    pub fn new_checked(width: usize, height: usize, data: Vec<f64>) -> Result<Self, ImageError> {
        for (i, &v) in data.iter().enumerate() {
            if !v.is_finite() || !(0.0..=1.0).contains(&v) {
                return Err(ImageError::BadIntensity { index: i, value: v });
            }
        }
        Self::new(width, height, data)
    }

    pub fn from_fn(width: usize, height: usize, mut f: impl FnMut(usize, usize) -> f64) -> Self {
        let mut data = Vec::with_capacity(width * height);
        for y in 0..height {
            for x in 0..width {
                data.push(f(x, y));
            }
        }
        GrayImage { width, height, data }
    }

    pub fn constant(width: usize, height: usize, value: f64) -> Self {
        GrayImage { width, height, data: vec![value; width * height] }
    }

    pub fn width(&self) -> usize {
        self.width
    }

    pub fn height(&self) -> usize {
        self.height
    }

    pub fn data(&self) -> &[f64] {
        &self.data
    }

    #[inline]
    pub fn get(&self, x: usize, y: usize) -> f64 {
        debug_assert!(x < self.width && y < self.height);
        self.data[y * self.width + x]
    }

    pub fn mean(&self) -> f64 {
        self.data.iter().sum::<f64>() / self.data.len() as f64
    }

    /// Bilinear sample with analytic gradient; `None` outside
    /// `[0, width-1] × [0, height-1]`.
    #[inline]
    pub fn sample_bilinear(&self, u: f64, v: f64) -> Option<Sample> {
        if !(u >= 0.0 && v >= 0.0 && u <= (self.width - 1) as f64 && v <= (self.height - 1) as f64)
        {
            return None;
        }
        // Clamp the cell at the far edge so u = width-1 stays sampleable.
        let x0 = (u as usize).min(self.width - 2);
        let y0 = (v as usize).min(self.height - 2);
        let fu = u - x0 as f64;
        let fv = v - y0 as f64;
        let i00 = self.get(x0, y0);
        let i10 = self.get(x0 + 1, y0);
        let i01 = self.get(x0, y0 + 1);
        let i11 = self.get(x0 + 1, y0 + 1);
        let value = (1.0 - fu) * (1.0 - fv) * i00 + fu * (1.0 - fv) * i10
            + (1.0 - fu) * fv * i01
            + fu * fv * i11;
        let gx = (1.0 - fv) * (i10 - i00) + fv * (i11 - i01);
        let gy = (1.0 - fu) * (i01 - i00) + fu * (i11 - i10);
        Some(Sample { value, gx, gy })
    }

    /// Gradient at an integer pixel by central differences (one-sided at the
    /// image border). Used for point selection and gradient weighting.
    pub fn gradient_at(&self, x: usize, y: usize) -> (f64, f64) {
        let gx = if x == 0 {
            self.get(1, y) - self.get(0, y)
        } else if x == self.width - 1 {
            self.get(x, y) - self.get(x - 1, y)
        } else {
            0.5 * (self.get(x + 1, y) - self.get(x - 1, y))
        };
        let gy = if y == 0 {
            self.get(x, 1) - self.get(x, 0)
        } else if y == self.height - 1 {
            self.get(x, y) - self.get(x, y - 1)
        } else {
            0.5 * (self.get(x, y + 1) - self.get(x, y - 1))
        };
        (gx, gy)
    }

    /// 2×2 box-filtered, 2-subsampled copy (odd trailing row/column dropped).
    pub fn downsample(&self) -> GrayImage {
        let w2 = self.width / 2;
        let h2 = self.height / 2;
        let mut data = Vec::with_capacity(w2 * h2);
        for y in 0..h2 {
            for x in 0..w2 {
                let s = self.get(2 * x, 2 * y)
                    + self.get(2 * x + 1, 2 * y)
                    + self.get(2 * x, 2 * y + 1)
                    + self.get(2 * x + 1, 2 * y + 1);
                data.push(0.25 * s);
            }
        }
        GrayImage { width: w2, height: h2, data }
    }

    /// Load a grayscale image from PNG or binary PGM (P5). Color PNG input
    /// is converted by luminance (0.299 R + 0.587 G + 0.114 B).
    pub fn load(path: &Path) -> Result<Self, ImageError> {
        match path.extension().and_then(|e| e.to_str()) {
            Some("pgm") => Self::load_pgm(path),
            Some("png") => Self::load_png(path),
            other => Err(ImageError::Unsupported(format!("extension {:?}", other))),
        }
    }

    pub fn load_png(path: &Path) -> Result<Self, ImageError> {
        let dynimg = ::image::open(path).map_err(|e| ImageError::Png(e.to_string()))?;
        let (w, h) = (dynimg.width() as usize, dynimg.height() as usize);
        let data: Vec<f64> = match dynimg {
            ::image::DynamicImage::ImageLuma8(img) => {
                img.pixels().map(|p| p.0[0] as f64 / 255.0).collect()
            }
            ::image::DynamicImage::ImageRgb8(img) => img
                .pixels()
                .map(|p| luminance(p.0[0], p.0[1], p.0[2]))
                .collect(),
            ::image::DynamicImage::ImageRgba8(img) => img
                .pixels()
                .map(|p| luminance(p.0[0], p.0[1], p.0[2]))
                .collect(),
            other => {
                return Err(ImageError::Unsupported(format!("png color type {:?}", other.color())))
            }
        };
        Self::new_checked(w, h, data)
    }

    pub fn save_png(&self, path: &Path) -> Result<(), ImageError> {
        let buf: Vec<u8> = self.data.iter().map(|&v| to_u8(v)).collect();
        let img = ::image::GrayImage::from_raw(self.width as u32, self.height as u32, buf)
            .expect("buffer size matches");
        img.save(path).map_err(|e| ImageError::Png(e.to_string()))
    }

    pub fn load_pgm(path: &Path) -> Result<Self, ImageError> {
        let mut bytes = Vec::new();
        std::fs::File::open(path)?.read_to_end(&mut bytes)?;
        Self::from_pgm_bytes(&bytes)
    }

    pub fn from_pgm_bytes(bytes: &[u8]) -> Result<Self, ImageError> {
        let mut pos = 0usize;
        let mut token = |bytes: &[u8]| -> Result<String, ImageError> {
            // Skip whitespace and '#' comments.
            loop {
                while pos < bytes.len() && bytes[pos].is_ascii_whitespace() {
                    pos += 1;
                }
                if pos < bytes.len() && bytes[pos] == b'#' {
                    while pos < bytes.len() && bytes[pos] != b'\n' {
                        pos += 1;
                    }
                } else {
                    break;
                }
            }
            let start = pos;
            while pos < bytes.len() && !bytes[pos].is_ascii_whitespace() {
                pos += 1;
            }
            if start == pos {
                return Err(ImageError::BadPgm("unexpected end of header".into()));
            }
            Ok(String::from_utf8_lossy(&bytes[start..pos]).into_owned())
        };
        let magic = token(bytes)?;
        if magic != "P5" {
            return Err(ImageError::BadPgm(format!("magic {:?}, expected P5", magic)));
        }
        let width: usize =
            token(bytes)?.parse().map_err(|e| ImageError::BadPgm(format!("width: {}", e)))?;
        let height: usize =
            token(bytes)?.parse().map_err(|e| ImageError::BadPgm(format!("height: {}", e)))?;
        let maxval: usize =
            token(bytes)?.parse().map_err(|e| ImageError::BadPgm(format!("maxval: {}", e)))?;
        if maxval == 0 || maxval > 255 {
            return Err(ImageError::BadPgm(format!("unsupported maxval {}", maxval)));
        }
        let start = pos + 1; // single whitespace after maxval
        let need = width * height;
        if bytes.len() < start + need {
            return Err(ImageError::BadPgm(format!(
                "expected {} pixel bytes, found {}",
                need,
                bytes.len().saturating_sub(start)
            )));
        }
        let data: Vec<f64> =
            bytes[start..start + need].iter().map(|&b| b as f64 / maxval as f64).collect();
        Self::new_checked(width, height, data)
    }

    pub fn save_pgm(&self, path: &Path) -> Result<(), ImageError> {
        let mut out = format!("P5\n{} {}\n255\n", self.width, self.height).into_bytes();
        out.extend(self.data.iter().map(|&v| to_u8(v)));
        std::fs::write(path, out)?;
        Ok(())
    }
}

fn luminance(r: u8, g: u8, b: u8) -> f64 {
    (0.299 * r as f64 + 0.587 * g as f64 + 0.114 * b as f64) / 255.0
}

fn to_u8(v: f64) -> u8 {
    (v.clamp(0.0, 1.0) * 255.0).round() as u8
}

/// Image pyramid; level 0 is full resolution and each level halves the
/// previous one with a 2×2 box filter.
#[derive(Debug, Clone)]
pub struct Pyramid {
    levels: Vec<GrayImage>,
}

impl Pyramid {
    pub fn build(img: GrayImage, num_levels: usize) -> Result<Self, ImageError> {
        if num_levels == 0 {
            return Err(ImageError::NoLevels);
        }
        let coarsest_w = img.width() >> (num_levels - 1);
        let coarsest_h = img.height() >> (num_levels - 1);
        if coarsest_w < 8 || coarsest_h < 8 {
            return Err(ImageError::TooSmallForPyramid {
                width: img.width(),
                height: img.height(),
                levels: num_levels,
            });
        }
        let mut levels = Vec::with_capacity(num_levels);
        levels.push(img);
        for _ in 1..num_levels {
            let next = levels.last().unwrap().downsample();
            levels.push(next);
        }
        Ok(Pyramid { levels })
    }

    pub fn num_levels(&self) -> usize {
        self.levels.len()
    }

    pub fn level(&self, l: usize) -> &GrayImage {
        &self.levels[l]
    }

    pub fn full(&self) -> &GrayImage {
        &self.levels[0]
    }
}
