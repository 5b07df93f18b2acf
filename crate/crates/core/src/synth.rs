//! Deterministic synthetic fixtures.
//!
//! `natural_image` produces piecewise-smooth pictures: multi-octave value
//! noise for texture, a lighting gradient, a few flat shapes with hard edges
//! and a little sensor noise. Neighbouring pixels are strongly correlated,
//! which is the property the VFE metric and the attack respond to.

use std::path::{Path, PathBuf};

use rand::{Rng, SeedableRng};
use rand_chacha::ChaCha8Rng;
use rand_distr::{Distribution, StandardNormal};

use crate::error::Result;
use crate::image::{save_image, ImageTensor};

fn rng_for(kind: u64, seed: u64) -> ChaCha8Rng {
    let mut rng = ChaCha8Rng::seed_from_u64(seed);
    rng.set_stream(kind);
    rng
}

fn smoothstep(t: f64) -> f64 {
    t * t * (3.0 - 2.0 * t)
}

/// Bilinear value noise in `[0, 1]` with lattice spacing `cell` pixels.
struct ValueNoise {
    cell: f64,
    cols: usize,
    lattice: Vec<f64>,
}

impl ValueNoise {
    fn new(rng: &mut impl Rng, w: usize, h: usize, cell: f64) -> Self {
        let cols = (w as f64 / cell).ceil() as usize + 2;
        let rows = (h as f64 / cell).ceil() as usize + 2;
        let lattice = (0..cols * rows).map(|_| rng.random::<f64>()).collect();
        Self { cell, cols, lattice }
    }

    fn at(&self, x: usize, y: usize) -> f64 {
        let fx = x as f64 / self.cell;
        let fy = y as f64 / self.cell;
        let (ix, iy) = (fx as usize, fy as usize);
        let (tx, ty) = (smoothstep(fx - ix as f64), smoothstep(fy - iy as f64));
        let v = |i: usize, j: usize| self.lattice[j * self.cols + i];
        let top = v(ix, iy) * (1.0 - tx) + v(ix + 1, iy) * tx;
        let bottom = v(ix, iy + 1) * (1.0 - tx) + v(ix + 1, iy + 1) * tx;
        top * (1.0 - ty) + bottom * ty
    }
}

enum Shape {
    Disc { cx: f64, cy: f64, r: f64 },
    Rect { x0: f64, y0: f64, x1: f64, y1: f64 },
}

impl Shape {
    fn contains(&self, x: f64, y: f64) -> bool {
        match *self {
            Shape::Disc { cx, cy, r } => (x - cx).powi(2) + (y - cy).powi(2) <= r * r,
            Shape::Rect { x0, y0, x1, y1 } => x >= x0 && x < x1 && y >= y0 && y < y1,
        }
    }
}

fn to_u8(v: f64) -> u8 {
    v.round().clamp(0.0, 255.0) as u8
}

/// Piecewise-smooth test image; identical output for identical arguments.
pub fn natural_image(channels: usize, height: usize, width: usize, seed: u64) -> ImageTensor {
    let mut rng = rng_for(1, seed);
    let scale = width.max(height).max(1) as f64;
    let octaves: Vec<(ValueNoise, f64)> = [(0.25, 1.0), (0.12, 0.5), (0.06, 0.25), (0.03, 0.12)]
        .iter()
        .map(|&(frac, amp)| (ValueNoise::new(&mut rng, width, height, (scale * frac).max(2.0)), amp))
        .collect();
    let amp_total: f64 = octaves.iter().map(|(_, a)| a).sum();

    let base: Vec<f64> = (0..channels).map(|_| rng.random_range(60.0..190.0)).collect();
    let tint: Vec<f64> = (0..channels).map(|_| rng.random_range(0.6..1.4)).collect();
    let contrast = rng.random_range(40.0..110.0);
    let angle = rng.random_range(0.0..std::f64::consts::TAU);
    let light = rng.random_range(10.0..50.0);

    let n_shapes = rng.random_range(1..=4);
    let shapes: Vec<(Shape, Vec<f64>)> = (0..n_shapes)
        .map(|_| {
            let shape = if rng.random_bool(0.5) {
                Shape::Disc {
                    cx: rng.random_range(0.0..width as f64),
                    cy: rng.random_range(0.0..height as f64),
                    r: rng.random_range(0.08..0.3) * scale,
                }
            } else {
                let x0 = rng.random_range(0.0..width as f64);
                let y0 = rng.random_range(0.0..height as f64);
                Shape::Rect {
                    x0,
                    y0,
                    x1: x0 + rng.random_range(0.1..0.5) * scale,
                    y1: y0 + rng.random_range(0.1..0.5) * scale,
                }
            };
            let colour = (0..channels).map(|_| rng.random_range(20.0..235.0)).collect();
            (shape, colour)
        })
        .collect();

    let mut sensor = rng_for(2, seed);
    let (dx, dy) = (angle.cos(), angle.sin());
    let mut t = ImageTensor::filled(channels, height, width, 0).expect("non-empty fixture");
    for y in 0..height {
        for x in 0..width {
            let texture = octaves.iter().map(|(n, a)| n.at(x, y) * a).sum::<f64>() / amp_total - 0.5;
            let ramp = ((x as f64 * dx + y as f64 * dy) / scale) * light;
            let covering = shapes
                .iter()
                .rev()
                .find(|(s, _)| s.contains(x as f64 + 0.5, y as f64 + 0.5));
            for c in 0..channels {
                let smooth = match covering {
                    Some((_, colour)) => colour[c] + 0.3 * contrast * texture,
                    None => base[c] + contrast * tint[c] * texture + ramp,
                };
                let grain: f64 = StandardNormal.sample(&mut sensor);
                t.set(c, x, y, to_u8(smooth + 1.5 * grain));
            }
        }
    }
    t
}

/// Uniform iid noise in `0..=255`.
pub fn noise_image(channels: usize, height: usize, width: usize, seed: u64) -> ImageTensor {
    let mut rng = rng_for(3, seed);
    ImageTensor::from_fn(channels, height, width, |_, _, _| rng.random::<u8>()).expect("non-empty fixture")
}

/// Linear ramps with a per-channel direction; the smoothest non-constant fixture.
pub fn gradient_image(channels: usize, height: usize, width: usize, seed: u64) -> ImageTensor {
    let mut rng = rng_for(4, seed);
    let dirs: Vec<(f64, f64, f64)> = (0..channels)
        .map(|_| {
            (
                rng.random_range(-3.0..3.0),
                rng.random_range(-3.0..3.0),
                rng.random_range(40.0..200.0),
            )
        })
        .collect();
    ImageTensor::from_fn(channels, height, width, |c, x, y| {
        let (gx, gy, b) = dirs[c];
        to_u8(b + gx * (x as f64 - width as f64 / 2.0) + gy * (y as f64 - height as f64 / 2.0))
    })
    .expect("non-empty fixture")
}

/// `h x w` iid standard-normal samples, row-major.
pub fn normal_samples(h: usize, w: usize, rng: &mut impl Rng) -> Vec<f64> {
    (0..h * w).map(|_| StandardNormal.sample(rng)).collect()
}

/// Writes `count` RGB images named `img_000.png`, ... into `dir`.
pub fn write_corpus(dir: &Path, count: usize, size: usize, seed: u64) -> Result<Vec<PathBuf>> {
    (0..count)
        .map(|i| {
            let path = dir.join(format!("img_{i:03}.png"));
            save_image(&natural_image(3, size, size, seed.wrapping_add(i as u64)), &path)?;
            Ok(path)
        })
        .collect()
}

#[cfg(test)]
mod tests {
    use super::*;
    use crate::vfe::{multichannel_vfe, VfeConfig};

    #[test]
    fn fixtures_are_deterministic() {
        assert_eq!(natural_image(3, 20, 30, 5), natural_image(3, 20, 30, 5));
        assert_ne!(natural_image(3, 20, 30, 5), natural_image(3, 20, 30, 6));
        assert_eq!(noise_image(1, 8, 8, 1), noise_image(1, 8, 8, 1));
    }

    #[test]
    fn natural_images_are_smoother_than_noise() {
        let cfg = VfeConfig::default();
        let nat = multichannel_vfe(&natural_image(3, 64, 64, 1), 8, &cfg);
        let noise = multichannel_vfe(&noise_image(3, 64, 64, 1), 8, &cfg);
        assert!(nat * 10.0 < noise, "natural {nat} vs noise {noise}");
    }

    #[test]
    fn corpus_files() {
        let dir = tempfile::tempdir().unwrap();
        let paths = write_corpus(dir.path(), 3, 16, 0).unwrap();
        assert_eq!(paths.len(), 3);
        assert!(paths.iter().all(|p| p.exists()));
    }
}
