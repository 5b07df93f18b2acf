//! Search-space accounting and a keyless min-energy reassembly attack.
//!
//! The attack sees only the shuffled tensor. It walks the windows in raster
//! order and, for each one, picks the arrangement of its samples that
//! minimizes squared differences inside the window plus the seams against the
//! already-reassembled neighbours to the left and above. Ground truth, when
//! supplied, is used only to score the result.

use std::fmt::Write as _;
use std::path::{Path, PathBuf};
use std::time::{Duration, Instant};

use rand::seq::SliceRandom;
use rand::SeedableRng;
use rand_chacha::ChaCha8Rng;
use walkdir::WalkDir;

use crate::error::{Error, Result};
use crate::image::{load_image, ImageTensor, Region};
use crate::mixer::{shuffle_window, ShufflePlan};
use crate::rng::derive_seed;

pub const SECURITY_BITS: f64 = 128.0;
pub const MAX_ATTACK_WS: usize = 3;

/// `log2(n!)` by direct summation of `log2 k`.
pub fn log2_factorial(n: usize) -> f64 {
    (2..=n).map(|k| (k as f64).log2()).sum()
}

/// `log2(sum 2^x_i)` without overflow.
fn log2_sum_exp(xs: &[f64]) -> f64 {
    let max = xs.iter().copied().fold(f64::NEG_INFINITY, f64::max);
    if max == f64::NEG_INFINITY {
        return f64::NEG_INFINITY;
    }
    max + xs.iter().map(|x| (x - max).exp2()).sum::<f64>().log2()
}

/// Size of the keyless search space over a set of shuffled windows.
#[derive(Debug, Clone, Copy, PartialEq)]
pub struct SearchSpaceEstimate {
    pub windows: usize,
    pub channels: usize,
    /// `log2(sum_i n_i!)`, `n_i` the pixel count of window `i`.
    pub log2_sum: f64,
    /// `log2(prod_i n_i!)`.
    pub log2_product: f64,
    /// Same two quantities when every channel is permuted independently.
    pub per_channel_log2_sum: f64,
    pub per_channel_log2_product: f64,
}

impl SearchSpaceEstimate {
    /// One entry per window, each the number of pixels it holds.
    pub fn from_window_areas(areas: &[usize], channels: usize) -> Self {
        let logs: Vec<f64> = areas.iter().map(|&n| log2_factorial(n)).collect();
        let log2_sum = if logs.is_empty() { 0.0 } else { log2_sum_exp(&logs) };
        let log2_product: f64 = logs.iter().sum();
        let c = channels.max(1) as f64;
        Self {
            windows: areas.len(),
            channels: channels.max(1),
            log2_sum,
            log2_product,
            per_channel_log2_sum: if logs.is_empty() { 0.0 } else { log2_sum + c.log2() },
            per_channel_log2_product: log2_product * c,
        }
    }

    /// Square windows of the given sides, single channel.
    pub fn for_sizes(sides: &[usize]) -> Self {
        let areas: Vec<usize> = sides.iter().map(|s| s * s).collect();
        Self::from_window_areas(&areas, 1)
    }

    pub fn for_plan(plan: &ShufflePlan) -> Self {
        let areas: Vec<usize> = plan
            .entries
            .iter()
            .flat_map(|e| e.windows().into_iter().map(|w| w.area()))
            .collect();
        Self::from_window_areas(&areas, plan.channels)
    }

    /// Whether the (smaller) sum form already exceeds 2^128.
    pub fn above_security_threshold(&self) -> bool {
        self.log2_sum > SECURITY_BITS
    }

    pub fn to_text(&self) -> String {
        format!(
            "search_space windows={} channels={} log2_sum={:.6} log2_product={:.6} per_channel_log2_sum={:.6} per_channel_log2_product={:.6} above_128={}",
            self.windows,
            self.channels,
            self.log2_sum,
            self.log2_product,
            self.per_channel_log2_sum,
            self.per_channel_log2_product,
            self.above_security_threshold()
        )
    }
}

#[derive(Debug, Clone, PartialEq)]
pub struct AttackReport {
    pub ws: usize,
    pub channel: usize,
    pub windows_attempted: usize,
    /// Fraction of pixels whose recovered value equals the original; `None`
    /// without ground truth.
    pub exact_recovery_fraction: Option<f64>,
    pub runtime: Duration,
}

impl AttackReport {
    pub fn to_text(&self) -> String {
        let frac = self
            .exact_recovery_fraction
            .map_or("none".to_owned(), |f| format!("{f:.6}"));
        format!(
            "attack ws={} channel={} windows={} recovery={} runtime_ms={}",
            self.ws,
            self.channel,
            self.windows_attempted,
            frac,
            self.runtime.as_millis()
        )
    }
}

fn check_attack_args(t: &ImageTensor, ws: usize, channel: usize, truth: Option<&ImageTensor>) -> Result<()> {
    if ws == 0 {
        return Err(Error::InvalidParameter("attack window size must be at least 1".into()));
    }
    if ws > MAX_ATTACK_WS {
        return Err(Error::AttackWindowTooLarge(ws));
    }
    t.check_channel(channel)?;
    if let Some(g) = truth {
        if (g.channels(), g.height(), g.width()) != (t.channels(), t.height(), t.width()) {
            return Err(Error::DimensionMismatch {
                expected: format!("{}x{}x{}", t.channels(), t.height(), t.width()),
                actual: format!("{}x{}x{}", g.channels(), g.height(), g.width()),
            });
        }
    }
    Ok(())
}

/// Fraction of channel-`c` pixels where `a` and `b` agree.
pub fn recovery_fraction(a: &ImageTensor, b: &ImageTensor, c: usize) -> f64 {
    let (pa, pb) = (a.plane(c), b.plane(c));
    let same = pa.iter().zip(pb).filter(|(x, y)| x == y).count();
    same as f64 / pa.len() as f64
}

struct WindowSearch<'a> {
    w: usize,
    h: usize,
    /// Value to the left of each row, or `None` at the image border.
    left: [Option<i64>; MAX_ATTACK_WS],
    /// Value above each column.
    top: [Option<i64>; MAX_ATTACK_WS],
    values: &'a [i64],
    placed: [i64; MAX_ATTACK_WS * MAX_ATTACK_WS],
    best: [i64; MAX_ATTACK_WS * MAX_ATTACK_WS],
    best_cost: i64,
}

impl WindowSearch<'_> {
    fn increment(&self, k: usize, v: i64) -> i64 {
        let (kx, ky) = (k % self.w, k / self.w);
        let left = if kx > 0 { Some(self.placed[k - 1]) } else { self.left[ky] };
        let top = if ky > 0 { Some(self.placed[k - self.w]) } else { self.top[kx] };
        left.map_or(0, |l| (v - l).pow(2)) + top.map_or(0, |t| (v - t).pow(2))
    }

    fn search(&mut self, k: usize, used: u16, cost: i64) {
        let n = self.w * self.h;
        if k == n {
            if cost < self.best_cost {
                self.best_cost = cost;
                self.best[..n].copy_from_slice(&self.placed[..n]);
            }
            return;
        }
        // Distinct unused values, cheapest first.
        let mut options = [(0i64, 0usize); MAX_ATTACK_WS * MAX_ATTACK_WS];
        let mut count = 0;
        let mut prev: Option<i64> = None;
        for (i, &v) in self.values.iter().enumerate() {
            if used & (1 << i) != 0 || prev == Some(v) {
                continue;
            }
            prev = Some(v);
            options[count] = (self.increment(k, v), i);
            count += 1;
        }
        options[..count].sort_unstable();
        for &(inc, i) in &options[..count] {
            if cost + inc >= self.best_cost {
                break;
            }
            self.placed[k] = self.values[i];
            self.search(k + 1, used | (1 << i), cost + inc);
        }
    }
}

/// Reassembles channel `channel` of a tensor shuffled on a regular `ws`
/// grid. Other channels are copied through unchanged.
pub fn min_vfe_attack(
    shuffled: &ImageTensor,
    ws: usize,
    channel: usize,
    truth: Option<&ImageTensor>,
) -> Result<(ImageTensor, AttackReport)> {
    check_attack_args(shuffled, ws, channel, truth)?;
    let start = Instant::now();
    let mut out = shuffled.clone();
    let windows = shuffled.full_region().tile(ws);
    for win in &windows {
        let mut values: Vec<i64> = shuffled.region_samples(win, channel).into_iter().map(i64::from).collect();
        values.sort_unstable();
        let mut left = [None; MAX_ATTACK_WS];
        let mut top = [None; MAX_ATTACK_WS];
        for (ky, slot) in left.iter_mut().enumerate().take(win.h) {
            if win.x0 > 0 {
                *slot = Some(i64::from(out.get(channel, win.x0 - 1, win.y0 + ky)));
            }
        }
        for (kx, slot) in top.iter_mut().enumerate().take(win.w) {
            if win.y0 > 0 {
                *slot = Some(i64::from(out.get(channel, win.x0 + kx, win.y0 - 1)));
            }
        }
        let mut s = WindowSearch {
            w: win.w,
            h: win.h,
            left,
            top,
            values: &values,
            placed: [0; MAX_ATTACK_WS * MAX_ATTACK_WS],
            best: [0; MAX_ATTACK_WS * MAX_ATTACK_WS],
            best_cost: i64::MAX,
        };
        s.search(0, 0, 0);
        write_window(&mut out, win, channel, &s.best[..values.len()]);
    }
    let report = AttackReport {
        ws,
        channel,
        windows_attempted: windows.len(),
        exact_recovery_fraction: truth.map(|g| recovery_fraction(&out, g, channel)),
        runtime: start.elapsed(),
    };
    Ok((out, report))
}

fn write_window(t: &mut ImageTensor, win: &Region, c: usize, values: &[i64]) {
    for (k, &v) in values.iter().enumerate() {
        t.set(c, win.x0 + k % win.w, win.y0 + k / win.w, v as u8);
    }
}

/// Recovery achieved by placing every window's samples in a uniformly random
/// order; the chance level the attack has to beat.
pub fn random_placement_baseline(
    shuffled: &ImageTensor,
    ws: usize,
    channel: usize,
    truth: &ImageTensor,
    seed: u64,
) -> Result<f64> {
    check_attack_args(shuffled, ws, channel, Some(truth))?;
    let mut rng = ChaCha8Rng::seed_from_u64(seed);
    let mut out = shuffled.clone();
    for win in shuffled.full_region().tile(ws) {
        let mut values: Vec<i64> = shuffled.region_samples(&win, channel).into_iter().map(i64::from).collect();
        values.shuffle(&mut rng);
        write_window(&mut out, &win, channel, &values);
    }
    Ok(recovery_fraction(&out, truth, channel))
}

#[derive(Debug, Clone, PartialEq)]
pub struct SweepRow {
    pub ws: usize,
    pub images: usize,
    pub windows: usize,
    /// Pixel-weighted recovery over all images.
    pub recovery: f64,
    pub baseline: f64,
    pub runtime: Duration,
}

#[derive(Debug, Clone, PartialEq, Default)]
pub struct AttackSweep {
    pub rows: Vec<SweepRow>,
    pub failures: Vec<(PathBuf, String)>,
}

impl AttackSweep {
    /// Recovery never increases with window size.
    pub fn monotone(&self) -> bool {
        let mut rows: Vec<&SweepRow> = self.rows.iter().collect();
        rows.sort_by_key(|r| r.ws);
        rows.windows(2).all(|p| p[1].recovery <= p[0].recovery)
    }

    /// Deterministic part of the table (no timings).
    pub fn to_text(&self) -> String {
        let mut s = String::from("ws,images,windows,recovery,baseline\n");
        for r in &self.rows {
            let _ = writeln!(s, "{},{},{},{:.6},{:.6}", r.ws, r.images, r.windows, r.recovery, r.baseline);
        }
        s
    }
}

fn list_images(dir: &Path) -> Result<Vec<PathBuf>> {
    let mut files = Vec::new();
    for entry in WalkDir::new(dir).sort_by_file_name() {
        let entry = entry.map_err(|e| Error::io(dir, e.into()))?;
        let is_png = entry
            .path()
            .extension()
            .and_then(|e| e.to_str())
            .is_some_and(|e| e.eq_ignore_ascii_case("png"));
        if entry.file_type().is_file() && is_png {
            files.push(entry.into_path());
        }
    }
    Ok(files)
}

/// Shuffles channel `channel` of every PNG under `corpus_dir` on a regular
/// grid for each window size, attacks it and tabulates recovery against the
/// random-placement baseline. Unreadable files are skipped and listed.
pub fn attack_sweep(corpus_dir: &Path, ws_list: &[usize], channel: usize, seed: u64) -> Result<AttackSweep> {
    if let Some(&ws) = ws_list.iter().find(|&&ws| ws == 0 || ws > MAX_ATTACK_WS) {
        return Err(if ws == 0 {
            Error::InvalidParameter("attack window size must be at least 1".into())
        } else {
            Error::AttackWindowTooLarge(ws)
        });
    }
    let mut images = Vec::new();
    let mut failures = Vec::new();
    for path in list_images(corpus_dir)? {
        match load_image(&path).and_then(|t| t.check_channel(channel).map(|_| t)) {
            Ok(t) => images.push((path, t)),
            Err(e) => {
                log::warn!("{}: {e}", path.display());
                failures.push((path, e.to_string()));
            }
        }
    }
    let mut rows = Vec::new();
    if images.is_empty() {
        return Ok(AttackSweep { rows, failures });
    }
    for &ws in ws_list {
        let start = Instant::now();
        let (mut hits, mut base_hits, mut pixels, mut windows) = (0.0, 0.0, 0usize, 0usize);
        for (i, (_, truth)) in images.iter().enumerate() {
            let key = derive_seed("vismix/attack", &[&seed.to_le_bytes(), &(i as u64).to_le_bytes(), &(ws as u64).to_le_bytes()]);
            let seeds: Vec<u64> = (0..truth.channels())
                .map(|c| u64::from_le_bytes(key[8 * c % 32..8 * c % 32 + 8].try_into().expect("8 bytes")))
                .collect();
            let mut shuffled = truth.clone();
            shuffle_window(&mut shuffled, &truth.full_region(), ws, &seeds)?;
            let (_, report) = min_vfe_attack(&shuffled, ws, channel, Some(truth))?;
            let n = truth.width() * truth.height();
            hits += report.exact_recovery_fraction.unwrap_or(0.0) * n as f64;
            base_hits += random_placement_baseline(&shuffled, ws, channel, truth, seeds[0] ^ 0x9e37_79b9)? * n as f64;
            pixels += n;
            windows += report.windows_attempted;
        }
        rows.push(SweepRow {
            ws,
            images: images.len(),
            windows,
            recovery: hits / pixels as f64,
            baseline: base_hits / pixels as f64,
            runtime: start.elapsed(),
        });
    }
    Ok(AttackSweep { rows, failures })
}
