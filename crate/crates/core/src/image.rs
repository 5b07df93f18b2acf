//! Pixel container, lossless I/O and region arithmetic.
//!
//! Samples are 8-bit and stored channel-major: the sample for channel `c`
//! at column `x`, row `y` lives at `c * H * W + y * W + x`. All statistics
//! are computed in `f64` on the raw 0..=255 values.

use std::path::Path;

use image::{DynamicImage, ExtendedColorType, ImageReader};

use crate::error::{Error, Result};

#[derive(Clone, PartialEq, Eq, Hash)]
pub struct ImageTensor {
    channels: usize,
    height: usize,
    width: usize,
    data: Vec<u8>,
}

impl std::fmt::Debug for ImageTensor {
    fn fmt(&self, f: &mut std::fmt::Formatter<'_>) -> std::fmt::Result {
        f.debug_struct("ImageTensor")
            .field("channels", &self.channels)
            .field("height", &self.height)
            .field("width", &self.width)
            .finish_non_exhaustive()
    }
}

impl ImageTensor {
    pub fn new(channels: usize, height: usize, width: usize, data: Vec<u8>) -> Result<Self> {
        if channels == 0 || height == 0 || width == 0 {
            return Err(Error::InvalidTensor(format!(
                "dimensions must be positive, got {channels}x{height}x{width}"
            )));
        }
        let expected = channels * height * width;
        if data.len() != expected {
            return Err(Error::InvalidTensor(format!(
                "expected {expected} samples for {channels}x{height}x{width}, got {}",
                data.len()
            )));
        }
        Ok(Self {
            channels,
            height,
            width,
            data,
        })
    }

    pub fn filled(channels: usize, height: usize, width: usize, value: u8) -> Result<Self> {
        Self::new(channels, height, width, vec![value; channels * height * width])
    }

    /// Builds a tensor by evaluating `f(channel, x, y)` for every sample.
    pub fn from_fn(
        channels: usize,
        height: usize,
        width: usize,
        mut f: impl FnMut(usize, usize, usize) -> u8,
    ) -> Result<Self> {
        let mut data = Vec::with_capacity(channels * height * width);
        for c in 0..channels {
            for y in 0..height {
                for x in 0..width {
                    data.push(f(c, x, y));
                }
            }
        }
        Self::new(channels, height, width, data)
    }

    pub fn channels(&self) -> usize {
        self.channels
    }

    pub fn height(&self) -> usize {
        self.height
    }

    pub fn width(&self) -> usize {
        self.width
    }

    pub fn data(&self) -> &[u8] {
        &self.data
    }

    pub fn into_data(self) -> Vec<u8> {
        self.data
    }

    /// `max(width, height)`, the starting window size of the mixer.
    pub fn size(&self) -> usize {
        self.width.max(self.height)
    }

    #[inline]
    pub fn index(&self, c: usize, x: usize, y: usize) -> usize {
        (c * self.height + y) * self.width + x
    }

    #[inline]
    pub fn get(&self, c: usize, x: usize, y: usize) -> u8 {
        self.data[self.index(c, x, y)]
    }

    #[inline]
    pub fn set(&mut self, c: usize, x: usize, y: usize, value: u8) {
        let i = self.index(c, x, y);
        self.data[i] = value;
    }

    pub fn plane(&self, c: usize) -> &[u8] {
        let n = self.width * self.height;
        &self.data[c * n..(c + 1) * n]
    }

    pub fn full_region(&self) -> Region {
        Region {
            x0: 0,
            y0: 0,
            w: self.width,
            h: self.height,
        }
    }

    pub fn check_region(&self, r: &Region) -> Result<()> {
        if r.w == 0 || r.h == 0 || r.x0 + r.w > self.width || r.y0 + r.h > self.height {
            return Err(Error::RegionOutOfBounds {
                x0: r.x0,
                y0: r.y0,
                w: r.w,
                h: r.h,
                width: self.width,
                height: self.height,
            });
        }
        Ok(())
    }

    pub fn check_channel(&self, c: usize) -> Result<()> {
        if c >= self.channels {
            return Err(Error::ChannelOutOfRange {
                channel: c,
                channels: self.channels,
            });
        }
        Ok(())
    }

    /// Samples of one channel inside `r`, row-major.
    pub fn region_samples(&self, r: &Region, c: usize) -> Vec<u8> {
        let mut out = Vec::with_capacity(r.area());
        for y in r.y0..r.y0 + r.h {
            let start = self.index(c, r.x0, y);
            out.extend_from_slice(&self.data[start..start + r.w]);
        }
        out
    }

    /// Per-channel histograms, used to check that shuffling is value-preserving.
    pub fn histograms(&self) -> Vec<[u64; 256]> {
        (0..self.channels)
            .map(|c| {
                let mut h = [0u64; 256];
                for &v in self.plane(c) {
                    h[v as usize] += 1;
                }
                h
            })
            .collect()
    }
}

/// Axis-aligned rectangle inside an image.
#[derive(Debug, Clone, Copy, PartialEq, Eq, Hash, PartialOrd, Ord)]
pub struct Region {
    pub x0: usize,
    pub y0: usize,
    pub w: usize,
    pub h: usize,
}

impl Region {
    pub fn new(x0: usize, y0: usize, w: usize, h: usize) -> Self {
        Self { x0, y0, w, h }
    }

    pub fn area(&self) -> usize {
        self.w * self.h
    }

    /// Side length used by the mixer's window-size decisions.
    pub fn size(&self) -> usize {
        self.w.max(self.h)
    }

    pub fn contains(&self, x: usize, y: usize) -> bool {
        x >= self.x0 && x < self.x0 + self.w && y >= self.y0 && y < self.y0 + self.h
    }

    /// Tiles this region with `ws`-sided squares in row-major order. Tiles on
    /// the right and bottom edges keep their true, possibly smaller, extent.
    pub fn tile(&self, ws: usize) -> Vec<Region> {
        assert!(ws >= 1, "window size must be at least 1");
        let mut out = Vec::with_capacity(self.w.div_ceil(ws) * self.h.div_ceil(ws));
        let mut y = self.y0;
        while y < self.y0 + self.h {
            let h = ws.min(self.y0 + self.h - y);
            let mut x = self.x0;
            while x < self.x0 + self.w {
                let w = ws.min(self.x0 + self.w - x);
                out.push(Region::new(x, y, w, h));
                x += ws;
            }
            y += ws;
        }
        out
    }
}

/// Mean and variance of a region, variance with the `n - 1` denominator.
#[derive(Debug, Clone, Copy, PartialEq)]
pub struct RegionStats {
    pub mean: f64,
    pub variance: f64,
}

impl RegionStats {
    pub fn of(samples: &[f64]) -> Result<Self> {
        if samples.len() < 2 {
            return Err(Error::SinglePixelRegion);
        }
        let n = samples.len() as f64;
        let mean = samples.iter().sum::<f64>() / n;
        let variance = samples.iter().map(|v| (v - mean) * (v - mean)).sum::<f64>() / (n - 1.0);
        Ok(Self { mean, variance })
    }

    pub fn std_dev(&self) -> f64 {
        self.variance.sqrt()
    }
}

#[derive(Debug, Clone, Copy)]
pub struct LoadOptions {
    /// Drop an alpha channel (with a warning) instead of rejecting the file.
    pub drop_alpha: bool,
}

impl Default for LoadOptions {
    fn default() -> Self {
        Self { drop_alpha: true }
    }
}

pub fn load_image(path: impl AsRef<Path>) -> Result<ImageTensor> {
    load_image_with(path, LoadOptions::default())
}

pub fn load_image_with(path: impl AsRef<Path>, opts: LoadOptions) -> Result<ImageTensor> {
    let path = path.as_ref();
    let reader = ImageReader::open(path)
        .map_err(|e| Error::io(path, e))?
        .with_guessed_format()
        .map_err(|e| Error::io(path, e))?;
    let decoded = reader.decode().map_err(|source| Error::Decode {
        path: path.to_path_buf(),
        source,
    })?;
    let alpha = |opts: LoadOptions| -> Result<()> {
        if opts.drop_alpha {
            log::warn!("dropping alpha channel of {}", path.display());
            Ok(())
        } else {
            Err(Error::AlphaRejected {
                path: path.to_path_buf(),
            })
        }
    };
    let (channels, width, height, interleaved) = match decoded {
        DynamicImage::ImageLuma8(buf) => (1, buf.width(), buf.height(), buf.into_raw()),
        DynamicImage::ImageRgb8(buf) => (3, buf.width(), buf.height(), buf.into_raw()),
        DynamicImage::ImageLumaA8(_) => {
            alpha(opts)?;
            let buf = decoded.into_luma8();
            (1, buf.width(), buf.height(), buf.into_raw())
        }
        DynamicImage::ImageRgba8(_) => {
            alpha(opts)?;
            let buf = decoded.into_rgb8();
            (3, buf.width(), buf.height(), buf.into_raw())
        }
        _ => {
            return Err(Error::UnsupportedDepth {
                path: path.to_path_buf(),
            })
        }
    };
    let (width, height) = (width as usize, height as usize);
    let plane = width * height;
    let mut data = vec![0u8; channels * plane];
    for (i, px) in interleaved.chunks_exact(channels).enumerate() {
        for (c, &v) in px.iter().enumerate() {
            data[c * plane + i] = v;
        }
    }
    ImageTensor::new(channels, height, width, data)
}

fn is_png(path: &Path) -> bool {
    path.extension()
        .and_then(|e| e.to_str())
        .is_some_and(|e| e.eq_ignore_ascii_case("png"))
}

/// Writes `t` as PNG. Any other extension is refused: permutations must
/// survive a save/load round trip bit for bit.
pub fn save_image(t: &ImageTensor, path: impl AsRef<Path>) -> Result<()> {
    let path = path.as_ref();
    if !is_png(path) {
        return Err(Error::LossyOutput {
            path: path.to_path_buf(),
        });
    }
    let color = match t.channels {
        1 => ExtendedColorType::L8,
        3 => ExtendedColorType::Rgb8,
        n => {
            return Err(Error::InvalidTensor(format!(
                "cannot encode a {n}-channel tensor as PNG"
            )))
        }
    };
    let plane = t.width * t.height;
    let mut interleaved = vec![0u8; t.data.len()];
    for c in 0..t.channels {
        for (i, &v) in t.plane(c).iter().enumerate() {
            interleaved[i * t.channels + c] = v;
        }
    }
    debug_assert_eq!(interleaved.len(), plane * t.channels);
    if let Some(parent) = path.parent().filter(|p| !p.as_os_str().is_empty()) {
        std::fs::create_dir_all(parent).map_err(|e| Error::io(parent, e))?;
    }
    image::save_buffer_with_format(
        path,
        &interleaved,
        t.width as u32,
        t.height as u32,
        color,
        image::ImageFormat::Png,
    )
    .map_err(|source| Error::Encode {
        path: path.to_path_buf(),
        source,
    })
}

/// Partitions the image into `ceil(W/ws) * ceil(H/ws)` regions, row-major.
pub fn split_regions(t: &ImageTensor, ws: usize) -> Vec<Region> {
    t.full_region().tile(ws)
}

pub fn region_stats(t: &ImageTensor, r: &Region, c: usize) -> Result<RegionStats> {
    t.check_region(r)?;
    t.check_channel(c)?;
    let samples: Vec<f64> = t.region_samples(r, c).into_iter().map(f64::from).collect();
    RegionStats::of(&samples)
}

/// `(I - mean) / sigma` for every pixel of the region, row-major.
pub fn standardize(t: &ImageTensor, r: &Region, c: usize) -> Result<Vec<f64>> {
    t.check_region(r)?;
    t.check_channel(c)?;
    let samples: Vec<f64> = t.region_samples(r, c).into_iter().map(f64::from).collect();
    standardize_samples(&samples)
}

pub fn standardize_samples(samples: &[f64]) -> Result<Vec<f64>> {
    let stats = RegionStats::of(samples)?;
    if stats.variance == 0.0 {
        return Err(Error::ConstantRegion);
    }
    let sd = stats.std_dev();
    Ok(samples.iter().map(|v| (v - stats.mean) / sd).collect())
}

#[cfg(test)]
mod tests {
    use super::*;
    use proptest::prelude::*;

    fn gray(width: usize, height: usize, values: &[u8]) -> ImageTensor {
        ImageTensor::new(1, height, width, values.to_vec()).unwrap()
    }

    #[test]
    fn rejects_bad_lengths() {
        assert!(ImageTensor::new(3, 2, 2, vec![0; 11]).is_err());
        assert!(ImageTensor::new(0, 2, 2, vec![]).is_err());
    }

    #[test]
    fn split_exact_tiling() {
        let t = ImageTensor::filled(3, 224, 224, 0).unwrap();
        let regions = split_regions(&t, 8);
        assert_eq!(regions.len(), 784);
        assert!(regions.iter().all(|r| r.w == 8 && r.h == 8));
    }

    #[test]
    fn split_keeps_residual_sizes() {
        let t = ImageTensor::filled(1, 10, 10, 0).unwrap();
        let regions = split_regions(&t, 4);
        assert_eq!(regions.len(), 9);
        let mut shapes: Vec<(usize, usize)> = regions.iter().map(|r| (r.w, r.h)).collect();
        shapes.sort();
        assert_eq!(
            shapes,
            vec![
                (2, 2),
                (2, 4),
                (2, 4),
                (4, 2),
                (4, 2),
                (4, 4),
                (4, 4),
                (4, 4),
                (4, 4)
            ]
        );
    }

    #[test]
    fn split_unit_windows() {
        let t = ImageTensor::filled(1, 5, 7, 0).unwrap();
        assert_eq!(split_regions(&t, 1).len(), 35);
    }

    #[test]
    fn stats_constant_and_binary() {
        let t = gray(2, 2, &[7, 7, 7, 7]);
        let s = region_stats(&t, &t.full_region(), 0).unwrap();
        assert_eq!(s.mean, 7.0);
        assert_eq!(s.variance, 0.0);

        let t = gray(2, 2, &[0, 0, 1, 1]);
        let s = region_stats(&t, &t.full_region(), 0).unwrap();
        assert_eq!(s.mean, 0.5);
        assert!((s.variance - 1.0 / 3.0).abs() < 1e-15);
    }

    #[test]
    fn stats_single_pixel_is_error() {
        let t = gray(1, 1, &[3]);
        assert!(matches!(
            region_stats(&t, &t.full_region(), 0),
            Err(Error::SinglePixelRegion)
        ));
    }

    #[test]
    fn stats_check_bounds() {
        let t = gray(2, 2, &[0, 1, 2, 3]);
        assert!(region_stats(&t, &Region::new(1, 1, 2, 1), 0).is_err());
        assert!(region_stats(&t, &t.full_region(), 1).is_err());
    }

    #[test]
    fn standardize_binary_region() {
        let t = gray(2, 2, &[0, 0, 1, 1]);
        let z = standardize(&t, &t.full_region(), 0).unwrap();
        let sigma = (1.0f64 / 3.0).sqrt();
        let expected = [-0.5 / sigma, -0.5 / sigma, 0.5 / sigma, 0.5 / sigma];
        for (a, b) in z.iter().zip(expected) {
            assert!((a - b).abs() < 1e-12);
        }
        assert_eq!(z.iter().sum::<f64>(), 0.0);
    }

    #[test]
    fn standardize_constant_is_error() {
        let t = gray(2, 2, &[9, 9, 9, 9]);
        assert!(matches!(
            standardize(&t, &t.full_region(), 0),
            Err(Error::ConstantRegion)
        ));
    }

    #[test]
    fn standardize_is_idempotent() {
        let raw = [1.5, -0.3, 2.2, 0.1, -1.9, 0.7];
        let once = standardize_samples(&raw).unwrap();
        let twice = standardize_samples(&once).unwrap();
        for (a, b) in once.iter().zip(&twice) {
            assert!((a - b).abs() < 1e-12);
        }
    }

    fn coverage_ok(width: usize, height: usize, regions: &[Region]) -> bool {
        let mut cover = vec![0u32; width * height];
        for r in regions {
            for y in r.y0..r.y0 + r.h {
                for x in r.x0..r.x0 + r.w {
                    cover[y * width + x] += 1;
                }
            }
        }
        cover.iter().all(|&c| c == 1)
    }

    proptest! {
        #[test]
        fn tiling_covers_once(w in 1usize..70, h in 1usize..70, ws in 1usize..20) {
            let t = ImageTensor::filled(1, h, w, 0).unwrap();
            let regions = split_regions(&t, ws);
            prop_assert_eq!(regions.len(), w.div_ceil(ws) * h.div_ceil(ws));
            prop_assert!(coverage_ok(w, h, &regions));
        }

        #[test]
        fn standardized_moments(
            w in 2usize..12,
            h in 2usize..12,
            seed in any::<u64>(),
        ) {
            use rand::{Rng, SeedableRng};
            let mut rng = rand_chacha::ChaCha8Rng::seed_from_u64(seed);
            let t = ImageTensor::from_fn(1, h, w, |_, _, _| rng.random()).unwrap();
            let r = t.full_region();
            if let Ok(z) = standardize(&t, &r, 0) {
                let s = RegionStats::of(&z).unwrap();
                prop_assert!(s.mean.abs() < 1e-9);
                prop_assert!((s.variance - 1.0).abs() < 1e-9);
            }
        }
    }
}
