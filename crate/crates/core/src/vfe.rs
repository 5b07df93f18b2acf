//! Visual feature entropy: squared forward differences summed over regions.
//!
//! Gradients never cross a region border. A `w x h` region contributes
//! `h * (w - 1)` horizontal and `w * (h - 1)` vertical terms, summed in
//! row-major order so results are bit-identical however regions are scheduled.

use std::io::Write;

use rayon::prelude::*;

use crate::error::{Error, Result};
use crate::image::{split_regions, ImageTensor, Region, RegionStats};

#[derive(Debug, Clone, Copy, PartialEq)]
pub struct VfeConfig {
    pub scale_factor: f64,
}

impl VfeConfig {
    pub fn new(scale_factor: f64) -> Result<Self> {
        if !(scale_factor > 0.0 && scale_factor.is_finite()) {
            return Err(Error::InvalidParameter(format!(
                "VFE scale factor must be positive, got {scale_factor}"
            )));
        }
        Ok(Self { scale_factor })
    }
}

impl Default for VfeConfig {
    fn default() -> Self {
        Self { scale_factor: 1.0 }
    }
}

/// Gradient energy of a row-major `w x h` grid of real samples.
pub fn grid_energy(values: &[f64], w: usize, h: usize) -> f64 {
    assert_eq!(values.len(), w * h, "grid has {} samples, expected {w}x{h}", values.len());
    let mut sum = 0.0;
    for y in 0..h {
        for x in 0..w {
            let v = values[y * w + x];
            if x + 1 < w {
                let d = values[y * w + x + 1] - v;
                sum += d * d;
            }
            if y + 1 < h {
                let d = values[(y + 1) * w + x] - v;
                sum += d * d;
            }
        }
    }
    sum
}

/// Exact integer gradient energy of one channel inside `r`.
///
/// # Panics
/// If `r` does not fit the tensor or `c` is out of range.
pub fn region_energy(t: &ImageTensor, r: &Region, c: usize) -> u64 {
    t.check_region(r).expect("region_vfe: region out of bounds");
    t.check_channel(c).expect("region_vfe: channel out of range");
    let mut sum: u64 = 0;
    for y in r.y0..r.y0 + r.h {
        for x in r.x0..r.x0 + r.w {
            let v = t.get(c, x, y) as i64;
            if x + 1 < r.x0 + r.w {
                let d = t.get(c, x + 1, y) as i64 - v;
                sum += (d * d) as u64;
            }
            if y + 1 < r.y0 + r.h {
                let d = t.get(c, x, y + 1) as i64 - v;
                sum += (d * d) as u64;
            }
        }
    }
    sum
}

pub fn region_vfe(t: &ImageTensor, r: &Region, c: usize) -> f64 {
    region_energy(t, r, c) as f64
}

/// Region VFE averaged over channels.
pub fn region_vfe_mean(t: &ImageTensor, r: &Region) -> f64 {
    let total: u64 = (0..t.channels()).map(|c| region_energy(t, r, c)).sum();
    total as f64 / t.channels() as f64
}

pub fn image_vfe(t: &ImageTensor, c: usize, ws: usize, cfg: &VfeConfig) -> f64 {
    let total: u64 = split_regions(t, ws)
        .iter()
        .map(|r| region_energy(t, r, c))
        .sum();
    cfg.scale_factor * total as f64 / (t.width() * t.height()) as f64
}

pub fn multichannel_vfe(t: &ImageTensor, ws: usize, cfg: &VfeConfig) -> f64 {
    let sum: f64 = (0..t.channels()).map(|c| image_vfe(t, c, ws, cfg)).sum();
    sum / t.channels() as f64
}

/// `energy / (2 * sigma^2)` for a row-major grid, sigma^2 the `n - 1` sample
/// variance of the same grid. For shuffled unit-variance data this is the
/// statistic whose mean is `2 * w * (w - 1)` on a square window.
pub fn normalized_statistic(values: &[f64], w: usize, h: usize) -> Result<f64> {
    let stats = RegionStats::of(values)?;
    if stats.variance == 0.0 {
        return Err(Error::ConstantRegion);
    }
    Ok(grid_energy(values, w, h) / (2.0 * stats.variance))
}

pub fn normalized_region_statistic(t: &ImageTensor, r: &Region, c: usize) -> Result<f64> {
    t.check_region(r)?;
    t.check_channel(c)?;
    let values: Vec<f64> = t.region_samples(r, c).into_iter().map(f64::from).collect();
    normalized_statistic(&values, r.w, r.h)
}

/// Lower median (an actual element) of a non-empty slice; 0 when empty.
pub fn lower_median(values: &[f64]) -> f64 {
    if values.is_empty() {
        return 0.0;
    }
    let mut sorted = values.to_vec();
    sorted.sort_by(f64::total_cmp);
    sorted[(sorted.len() - 1) / 2]
}

#[derive(Debug, Clone, Copy, PartialEq)]
pub struct RegionVfe {
    pub region: Region,
    pub channel: usize,
    pub vfe: f64,
}

#[derive(Debug, Clone, PartialEq)]
pub struct VfeReport {
    pub ws: usize,
    pub scale_factor: f64,
    pub width: usize,
    pub height: usize,
    pub regions: Vec<Region>,
    /// One entry per (region, channel), region-major.
    pub per_region: Vec<RegionVfe>,
    pub channel_vfe: Vec<f64>,
    pub multichannel_vfe: f64,
    /// Lower median of the channel-averaged region VFEs.
    pub median_region_vfe: f64,
}

impl VfeReport {
    pub fn channels(&self) -> usize {
        self.channel_vfe.len()
    }

    /// Channel-averaged VFE of each region, in region order.
    pub fn region_means(&self) -> Vec<f64> {
        let c = self.channels();
        self.per_region
            .chunks_exact(c)
            .map(|chunk| chunk.iter().map(|e| e.vfe).sum::<f64>() / c as f64)
            .collect()
    }

    /// Line-oriented text form: a CSV header, one `x0,y0,w,h,channel,vfe`
    /// line per region and channel, then one `summary` record.
    pub fn write_text<W: Write>(&self, mut out: W) -> std::io::Result<()> {
        writeln!(out, "x0,y0,w,h,channel,vfe")?;
        for e in &self.per_region {
            let r = e.region;
            writeln!(out, "{},{},{},{},{},{}", r.x0, r.y0, r.w, r.h, e.channel, e.vfe)?;
        }
        let channels: Vec<String> = self.channel_vfe.iter().map(|v| v.to_string()).collect();
        writeln!(
            out,
            "summary width={} height={} ws={} scale={} regions={} channel_vfe={} multichannel_vfe={} median_region_vfe={}",
            self.width,
            self.height,
            self.ws,
            self.scale_factor,
            self.regions.len(),
            channels.join(";"),
            self.multichannel_vfe,
            self.median_region_vfe
        )
    }
}

pub fn vfe_report(t: &ImageTensor, ws: usize, cfg: &VfeConfig) -> VfeReport {
    let regions = split_regions(t, ws);
    let channels = t.channels();
    let energies: Vec<Vec<u64>> = regions
        .par_iter()
        .map(|r| (0..channels).map(|c| region_energy(t, r, c)).collect())
        .collect();

    let area = (t.width() * t.height()) as f64;
    let channel_vfe: Vec<f64> = (0..channels)
        .map(|c| {
            let total: u64 = energies.iter().map(|e| e[c]).sum();
            cfg.scale_factor * total as f64 / area
        })
        .collect();
    let multichannel_vfe = channel_vfe.iter().sum::<f64>() / channels as f64;

    let per_region: Vec<RegionVfe> = regions
        .iter()
        .zip(&energies)
        .flat_map(|(r, e)| {
            e.iter().enumerate().map(|(c, &v)| RegionVfe {
                region: *r,
                channel: c,
                vfe: v as f64,
            })
        })
        .collect();
    let means: Vec<f64> = energies
        .iter()
        .map(|e| e.iter().sum::<u64>() as f64 / channels as f64)
        .collect();

    VfeReport {
        ws,
        scale_factor: cfg.scale_factor,
        width: t.width(),
        height: t.height(),
        regions,
        per_region,
        channel_vfe,
        multichannel_vfe,
        median_region_vfe: lower_median(&means),
    }
}
