//! Adaptive keyed shuffling.
//!
//! The image is first cut into windows of the largest power-of-two size not
//! above the upper bound. Regions are then drawn from a worklist in
//! key-determined order. A region at or below the lower-bound floor is
//! shuffled at the floor. A larger region with VFE no higher than the median
//! of the initial segmentation is shuffled at half its size (never below the
//! floor). Anything busier is split at that size and re-queued. Every decision is recorded in a
//! [`ShufflePlan`], which is enough to reproduce or invert the result.

use std::collections::HashSet;
use std::fmt::Write as _;
use std::fs;
use std::path::{Path, PathBuf};

use rand::Rng;
use rayon::prelude::*;
use sha2::{Digest, Sha256};
use walkdir::WalkDir;

use crate::calibration::WindowBounds;
use crate::error::{Error, Result};
use crate::image::{load_image_with, save_image, split_regions, ImageTensor, LoadOptions, Region};
use crate::rng::{keyed_rng, window_permutation};
use crate::vfe::{lower_median, multichannel_vfe, region_vfe_mean, VfeConfig};

const PLAN_MAGIC: &str = "vismix-plan 1";
const KEYFILE_MAGIC: &str = "vismix-keyfile 1";
pub const KEYFILE_NAME: &str = "vismix.key";

/// Master seed plus a stable per-image identifier.
#[derive(Clone, Copy, PartialEq, Eq, Hash)]
pub struct MixKey {
    pub master_seed: [u8; 32],
    pub image_id: u64,
}

impl std::fmt::Debug for MixKey {
    fn fmt(&self, f: &mut std::fmt::Formatter<'_>) -> std::fmt::Result {
        f.debug_struct("MixKey")
            .field("image_id", &format_args!("{:016x}", self.image_id))
            .finish_non_exhaustive()
    }
}

impl MixKey {
    pub fn new(master_seed: [u8; 32], image_id: u64) -> Self {
        Self {
            master_seed,
            image_id,
        }
    }

    pub fn for_path(master_seed: [u8; 32], relative_path: &str) -> Self {
        Self::new(master_seed, image_id(relative_path))
    }
}

/// First eight bytes (little endian) of SHA-256 of the `/`-separated path.
pub fn image_id(relative_path: &str) -> u64 {
    let digest = Sha256::digest(relative_path.replace('\\', "/").as_bytes());
    u64::from_le_bytes(digest[..8].try_into().expect("8 bytes"))
}

/// Expands a `u64` into a 256-bit master seed; handy for CLIs and tests.
pub fn master_seed_from_u64(seed: u64) -> [u8; 32] {
    crate::rng::derive_seed("vismix/master", &[&seed.to_le_bytes()])
}

pub fn parse_master_seed(hex_str: &str) -> Result<[u8; 32]> {
    let bytes = hex::decode(hex_str.trim())
        .map_err(|e| Error::parse("master seed", e.to_string()))?;
    bytes
        .try_into()
        .map_err(|_| Error::parse("master seed", "expected 64 hex digits"))
}

#[derive(Debug, Clone, Copy, PartialEq, Eq, Hash, Default)]
pub enum ShuffleMode {
    /// Independent spatial permutation per channel.
    #[default]
    PerChannel,
    /// Experimental: one spatial permutation shared by all channels, then a
    /// random permutation of the channel values at every pixel.
    SharedWithChannelSwap,
}

impl ShuffleMode {
    pub fn as_str(&self) -> &'static str {
        match self {
            ShuffleMode::PerChannel => "per-channel",
            ShuffleMode::SharedWithChannelSwap => "shared-channel-swap",
        }
    }

    pub fn parse(s: &str) -> Result<Self> {
        match s {
            "per-channel" => Ok(ShuffleMode::PerChannel),
            "shared-channel-swap" => Ok(ShuffleMode::SharedWithChannelSwap),
            other => Err(Error::parse("shuffle mode", other)),
        }
    }
}

#[derive(Debug, Clone, PartialEq, Eq)]
pub struct PlanEntry {
    pub region: Region,
    /// Window size the region is shuffled with; windows are clipped to the region.
    pub ws: usize,
    /// One permutation seed per channel.
    pub seeds: Vec<u64>,
}

impl PlanEntry {
    pub fn windows(&self) -> Vec<Region> {
        self.region.tile(self.ws)
    }
}

#[derive(Debug, Clone, PartialEq)]
pub struct ShufflePlan {
    pub channels: usize,
    pub width: usize,
    pub height: usize,
    pub bounds: WindowBounds,
    pub initial_ws: usize,
    pub floor_ws: usize,
    pub mode: ShuffleMode,
    pub vfe_median: f64,
    pub entries: Vec<PlanEntry>,
}

impl ShufflePlan {
    pub fn to_text(&self) -> String {
        let mut s = String::new();
        let _ = writeln!(s, "{PLAN_MAGIC}");
        let _ = writeln!(s, "channels {}", self.channels);
        let _ = writeln!(s, "width {}", self.width);
        let _ = writeln!(s, "height {}", self.height);
        let _ = writeln!(s, "bounds {} {}", self.bounds.lower, self.bounds.upper);
        let _ = writeln!(s, "initial_ws {}", self.initial_ws);
        let _ = writeln!(s, "floor_ws {}", self.floor_ws);
        let _ = writeln!(s, "mode {}", self.mode.as_str());
        let _ = writeln!(s, "vfe_median {}", self.vfe_median);
        let _ = writeln!(s, "entries {}", self.entries.len());
        for e in &self.entries {
            let r = e.region;
            let _ = write!(s, "{} {} {} {} {}", r.x0, r.y0, r.w, r.h, e.ws);
            for seed in &e.seeds {
                let _ = write!(s, " {seed:016x}");
            }
            s.push('\n');
        }
        s
    }

    pub fn from_text(text: &str) -> Result<Self> {
        let bad = |detail: String| Error::parse("shuffle plan", detail);
        let mut lines = text.lines();
        if lines.next() != Some(PLAN_MAGIC) {
            return Err(bad("missing header".into()));
        }
        let mut field = |name: &str| -> Result<String> {
            let line = lines.next().ok_or_else(|| bad(format!("missing {name}")))?;
            line.strip_prefix(name)
                .and_then(|rest| rest.strip_prefix(' '))
                .map(str::to_owned)
                .ok_or_else(|| bad(format!("expected {name}, got {line:?}")))
        };
        let num = |s: &str| -> Result<usize> { s.parse().map_err(|_| bad(format!("bad number {s:?}"))) };

        let channels = num(&field("channels")?)?;
        let width = num(&field("width")?)?;
        let height = num(&field("height")?)?;
        let bounds_line = field("bounds")?;
        let (lo, hi) = bounds_line
            .split_once(' ')
            .ok_or_else(|| bad("bounds needs two values".into()))?;
        let bounds = WindowBounds {
            lower: num(lo)?,
            upper: num(hi)?,
        };
        let initial_ws = num(&field("initial_ws")?)?;
        let floor_ws = num(&field("floor_ws")?)?;
        let mode = ShuffleMode::parse(&field("mode")?)?;
        let vfe_median: f64 = field("vfe_median")?
            .parse()
            .map_err(|_| bad("bad vfe_median".into()))?;
        let count = num(&field("entries")?)?;
        let mut entries = Vec::with_capacity(count);
        for line in lines.by_ref().take(count) {
            let parts: Vec<&str> = line.split_whitespace().collect();
            if parts.len() < 5 {
                return Err(bad(format!("short entry {line:?}")));
            }
            let region = Region::new(num(parts[0])?, num(parts[1])?, num(parts[2])?, num(parts[3])?);
            let ws = num(parts[4])?;
            let seeds = parts[5..]
                .iter()
                .map(|p| u64::from_str_radix(p, 16).map_err(|_| bad(format!("bad seed {p:?}"))))
                .collect::<Result<Vec<_>>>()?;
            entries.push(PlanEntry { region, ws, seeds });
        }
        if entries.len() != count {
            return Err(bad(format!("expected {count} entries, got {}", entries.len())));
        }
        if lines.next().is_some() {
            return Err(bad("trailing data".into()));
        }
        Ok(Self {
            channels,
            width,
            height,
            bounds,
            initial_ws,
            floor_ws,
            mode,
            vfe_median,
            entries,
        })
    }

    /// SHA-256 of the text form, hex encoded.
    pub fn digest(&self) -> String {
        hex::encode(Sha256::digest(self.to_text().as_bytes()))
    }

    pub fn window_count(&self) -> usize {
        self.entries.iter().map(|e| e.windows().len()).sum()
    }

    fn check_matches(&self, t: &ImageTensor) -> Result<()> {
        if (t.channels(), t.height(), t.width()) != (self.channels, self.height, self.width) {
            return Err(Error::DimensionMismatch {
                expected: format!("{}x{}x{}", self.channels, self.height, self.width),
                actual: format!("{}x{}x{}", t.channels(), t.height(), t.width()),
            });
        }
        let full = t.full_region();
        for e in &self.entries {
            t.check_region(&e.region)?;
            if e.ws == 0 || e.seeds.len() != self.channels || !full.contains(e.region.x0, e.region.y0) {
                return Err(Error::parse("shuffle plan", "entry does not match image"));
            }
        }
        Ok(())
    }
}

/// `2^floor(log2 n)` for `n >= 1`.
pub fn floor_pow2(n: usize) -> usize {
    assert!(n >= 1, "floor_pow2 of zero");
    1 << (usize::BITS - 1 - n.leading_zeros())
}

/// Starting window: halve `size` to powers of two until it is `<= ws_upper`.
pub fn initial_ws(size: usize, ws_upper: usize) -> usize {
    let mut ws = size;
    while ws > ws_upper && ws > 1 {
        ws = floor_pow2((ws / 2).max(1));
    }
    ws
}

pub fn plan_image(t: &ImageTensor, bounds: &WindowBounds, key: &MixKey) -> Result<ShufflePlan> {
    plan_image_with(t, bounds, key, ShuffleMode::PerChannel)
}

pub fn plan_image_with(
    t: &ImageTensor,
    bounds: &WindowBounds,
    key: &MixKey,
    mode: ShuffleMode,
) -> Result<ShufflePlan> {
    let initial = initial_ws(t.size(), bounds.upper);
    if bounds.lower == 0 || bounds.lower > bounds.upper {
        return Err(Error::InfeasibleBounds {
            lower: bounds.lower,
            upper: bounds.upper,
            initial,
        });
    }
    let floor = floor_pow2(bounds.lower);
    if floor > initial {
        return Err(Error::InfeasibleBounds {
            lower: bounds.lower,
            upper: bounds.upper,
            initial,
        });
    }

    let initial_regions = split_regions(t, initial);
    let medians: Vec<f64> = initial_regions.iter().map(|r| region_vfe_mean(t, r)).collect();
    let vfe_median = lower_median(&medians);

    let mut rng = keyed_rng("vismix/plan", &[&key.master_seed, &key.image_id.to_le_bytes()]);
    let mut work = initial_regions;
    let mut entries = Vec::new();
    let mut push = |rng: &mut rand_chacha::ChaCha20Rng, region: Region, ws: usize| {
        let seeds = (0..t.channels()).map(|_| rng.random::<u64>()).collect();
        entries.push(PlanEntry { region, ws, seeds });
    };
    while !work.is_empty() {
        let r = work.swap_remove(rng.random_range(0..work.len()));
        let size = r.size();
        if size <= floor {
            push(&mut rng, r, floor);
            continue;
        }
        // Never go below the floor; size > floor keeps this strictly shrinking.
        let ws = size.div_ceil(2).max(floor);
        if region_vfe_mean(t, &r) <= vfe_median {
            push(&mut rng, r, ws);
        } else {
            work.extend(r.tile(ws));
        }
    }

    Ok(ShufflePlan {
        channels: t.channels(),
        width: t.width(),
        height: t.height(),
        bounds: *bounds,
        initial_ws: initial,
        floor_ws: floor,
        mode,
        vfe_median,
        entries,
    })
}

#[derive(Clone, Copy)]
enum Direction {
    Forward,
    Inverse,
}

fn gather(t: &ImageTensor, win: &Region, c: usize) -> Vec<u8> {
    t.region_samples(win, c)
}

fn scatter(t: &mut ImageTensor, win: &Region, c: usize, values: &[u8]) {
    let mut it = values.iter();
    for y in win.y0..win.y0 + win.h {
        for x in win.x0..win.x0 + win.w {
            t.set(c, x, y, *it.next().expect("window sample count"));
        }
    }
}

fn permute(values: &[u8], perm: &[usize], dir: Direction) -> Vec<u8> {
    let mut out = vec![0u8; values.len()];
    match dir {
        Direction::Forward => {
            for (j, &src) in perm.iter().enumerate() {
                out[j] = values[src];
            }
        }
        Direction::Inverse => {
            for (j, &src) in perm.iter().enumerate() {
                out[src] = values[j];
            }
        }
    }
    out
}

fn apply_entry(t: &mut ImageTensor, entry: &PlanEntry, mode: ShuffleMode, dir: Direction) {
    let channels = t.channels();
    for (wi, win) in entry.windows().iter().enumerate() {
        let n = win.area();
        match mode {
            ShuffleMode::PerChannel => {
                for c in 0..channels {
                    let perm = window_permutation(entry.seeds[c], wi as u64, c as u32, n);
                    let values = gather(t, win, c);
                    scatter(t, win, c, &permute(&values, &perm, dir));
                }
            }
            ShuffleMode::SharedWithChannelSwap => {
                let spatial = window_permutation(entry.seeds[0], wi as u64, 0, n);
                let swaps: Vec<Vec<usize>> = (0..n)
                    .map(|p| window_permutation(entry.seeds[0], wi as u64, 1 + p as u32, channels))
                    .collect();
                let mut planes: Vec<Vec<u8>> = (0..channels).map(|c| gather(t, win, c)).collect();
                let swap_channels = |planes: &mut Vec<Vec<u8>>, dir: Direction| {
                    for (p, perm) in swaps.iter().enumerate() {
                        let px: Vec<u8> = planes.iter().map(|pl| pl[p]).collect();
                        for (c, v) in permute(&px, perm, dir).into_iter().enumerate() {
                            planes[c][p] = v;
                        }
                    }
                };
                match dir {
                    Direction::Forward => {
                        for pl in planes.iter_mut() {
                            *pl = permute(pl, &spatial, dir);
                        }
                        swap_channels(&mut planes, dir);
                    }
                    Direction::Inverse => {
                        swap_channels(&mut planes, dir);
                        for pl in planes.iter_mut() {
                            *pl = permute(pl, &spatial, dir);
                        }
                    }
                }
                for (c, pl) in planes.iter().enumerate() {
                    scatter(t, win, c, pl);
                }
            }
        }
    }
}

/// Shuffles `region` in place: each `ws`-sided window (clipped to the
/// region) gets an independent uniform permutation per channel.
pub fn shuffle_window(t: &mut ImageTensor, region: &Region, ws: usize, seeds: &[u64]) -> Result<()> {
    t.check_region(region)?;
    if seeds.len() != t.channels() || ws == 0 {
        return Err(Error::InvalidParameter(format!(
            "need ws >= 1 and one seed per channel ({}), got ws={ws}, {} seeds",
            t.channels(),
            seeds.len()
        )));
    }
    let entry = PlanEntry {
        region: *region,
        ws,
        seeds: seeds.to_vec(),
    };
    apply_entry(t, &entry, ShuffleMode::PerChannel, Direction::Forward);
    Ok(())
}

pub fn apply_plan(t: &ImageTensor, plan: &ShufflePlan) -> Result<ImageTensor> {
    plan.check_matches(t)?;
    let mut out = t.clone();
    for e in &plan.entries {
        apply_entry(&mut out, e, plan.mode, Direction::Forward);
    }
    Ok(out)
}

pub fn obfuscate_image(
    t: &ImageTensor,
    bounds: &WindowBounds,
    key: &MixKey,
) -> Result<(ImageTensor, ShufflePlan)> {
    obfuscate_image_with(t, bounds, key, ShuffleMode::PerChannel)
}

pub fn obfuscate_image_with(
    t: &ImageTensor,
    bounds: &WindowBounds,
    key: &MixKey,
    mode: ShuffleMode,
) -> Result<(ImageTensor, ShufflePlan)> {
    let plan = plan_image_with(t, bounds, key, mode)?;
    let out = apply_plan(t, &plan)?;
    Ok((out, plan))
}

/// Undoes `plan`. Only meaningful for the image the plan was built for.
pub fn invert_image(shuffled: &ImageTensor, plan: &ShufflePlan) -> Result<ImageTensor> {
    plan.check_matches(shuffled)?;
    let mut out = shuffled.clone();
    for e in &plan.entries {
        apply_entry(&mut out, e, plan.mode, Direction::Inverse);
    }
    Ok(out)
}

#[derive(Debug, Clone)]
pub struct DatasetConfig {
    pub master_seed: [u8; 32],
    pub bounds: WindowBounds,
    pub threads: usize,
    /// Where to write per-image plans (needed for inversion). `None` skips them.
    pub plans_dir: Option<PathBuf>,
    pub load: LoadOptions,
    pub mode: ShuffleMode,
    /// Window size used when reporting VFE before and after.
    pub vfe_ws: usize,
}

impl DatasetConfig {
    pub fn new(master_seed: [u8; 32], bounds: WindowBounds) -> Self {
        Self {
            master_seed,
            bounds,
            threads: 1,
            plans_dir: None,
            load: LoadOptions::default(),
            mode: ShuffleMode::PerChannel,
            vfe_ws: 8,
        }
    }

    fn digest(&self) -> String {
        let canonical = format!(
            "bounds={},{};mode={};vfe_ws={};drop_alpha={}",
            self.bounds.lower,
            self.bounds.upper,
            self.mode.as_str(),
            self.vfe_ws,
            self.load.drop_alpha
        );
        hex::encode(Sha256::digest(canonical.as_bytes()))
    }
}

#[derive(Debug, Clone, PartialEq)]
pub struct KeyRecord {
    pub image_id: u64,
    pub relative_path: String,
    pub plan_digest: String,
    pub region_count: usize,
}

#[derive(Debug, Clone, PartialEq)]
pub struct KeyFile {
    pub master_seed: [u8; 32],
    pub bounds: WindowBounds,
    pub config_digest: String,
    pub records: Vec<KeyRecord>,
}

impl KeyFile {
    pub fn to_text(&self) -> String {
        let mut s = String::new();
        let _ = writeln!(s, "{KEYFILE_MAGIC}");
        let _ = writeln!(s, "master_seed {}", hex::encode(self.master_seed));
        let _ = writeln!(s, "bounds {} {}", self.bounds.lower, self.bounds.upper);
        let _ = writeln!(s, "config {}", self.config_digest);
        let _ = writeln!(s, "images {}", self.records.len());
        for r in &self.records {
            let _ = writeln!(
                s,
                "{:016x}\t{}\t{}\t{}",
                r.image_id, r.plan_digest, r.region_count, r.relative_path
            );
        }
        s
    }

    pub fn from_text(text: &str) -> Result<Self> {
        let bad = |d: String| Error::parse("key file", d);
        let mut lines = text.lines();
        if lines.next() != Some(KEYFILE_MAGIC) {
            return Err(bad("missing header".into()));
        }
        let mut field = |name: &str| -> Result<String> {
            let line = lines.next().ok_or_else(|| bad(format!("missing {name}")))?;
            line.strip_prefix(name)
                .and_then(|r| r.strip_prefix(' '))
                .map(str::to_owned)
                .ok_or_else(|| bad(format!("expected {name}")))
        };
        let master_seed = parse_master_seed(&field("master_seed")?)?;
        let b = field("bounds")?;
        let (lo, hi) = b.split_once(' ').ok_or_else(|| bad("bounds".into()))?;
        let bounds = WindowBounds {
            lower: lo.parse().map_err(|_| bad("bounds".into()))?,
            upper: hi.parse().map_err(|_| bad("bounds".into()))?,
        };
        let config_digest = field("config")?;
        let count: usize = field("images")?.parse().map_err(|_| bad("image count".into()))?;
        let mut records = Vec::with_capacity(count);
        for line in lines {
            let mut parts = line.splitn(4, '\t');
            let mut next = || parts.next().ok_or_else(|| bad(format!("short record {line:?}")));
            let image_id = u64::from_str_radix(next()?, 16).map_err(|_| bad("image id".into()))?;
            let plan_digest = next()?.to_owned();
            let region_count = next()?.parse().map_err(|_| bad("region count".into()))?;
            let relative_path = next()?.to_owned();
            records.push(KeyRecord {
                image_id,
                relative_path,
                plan_digest,
                region_count,
            });
        }
        if records.len() != count {
            return Err(bad(format!("expected {count} records, got {}", records.len())));
        }
        Ok(Self {
            master_seed,
            bounds,
            config_digest,
            records,
        })
    }
}

#[derive(Debug, Clone, PartialEq)]
pub struct DatasetReport {
    pub key_file: PathBuf,
    pub processed: usize,
    pub failures: Vec<(PathBuf, String)>,
    pub mean_vfe_before: f64,
    pub mean_vfe_after: f64,
    /// Mean window size over all plan entries of all images.
    pub mean_ws: f64,
}

impl DatasetReport {
    pub fn summary_line(&self) -> String {
        format!(
            "summary processed={} failed={} mean_vfe_before={} mean_vfe_after={} mean_ws={}",
            self.processed,
            self.failures.len(),
            self.mean_vfe_before,
            self.mean_vfe_after,
            self.mean_ws
        )
    }
}

fn is_supported(path: &Path) -> bool {
    path.extension()
        .and_then(|e| e.to_str())
        .map(|e| e.to_ascii_lowercase())
        .is_some_and(|e| matches!(e.as_str(), "png" | "bmp" | "jpg" | "jpeg"))
}

fn relative_key(rel: &Path) -> String {
    rel.components()
        .map(|c| c.as_os_str().to_string_lossy().into_owned())
        .collect::<Vec<_>>()
        .join("/")
}

struct ImageOutcome {
    record: KeyRecord,
    vfe_before: f64,
    vfe_after: f64,
    ws_sum: usize,
}

fn process_one(
    in_dir: &Path,
    out_dir: &Path,
    rel: &Path,
    cfg: &DatasetConfig,
) -> Result<ImageOutcome> {
    let rel_key = relative_key(rel);
    let t = load_image_with(in_dir.join(rel), cfg.load)?;
    let key = MixKey::for_path(cfg.master_seed, &rel_key);
    let (out, plan) = obfuscate_image_with(&t, &cfg.bounds, &key, cfg.mode)?;
    save_image(&out, out_dir.join(rel).with_extension("png"))?;
    if let Some(plans) = &cfg.plans_dir {
        let path = plans.join(rel).with_extension("plan");
        if let Some(parent) = path.parent() {
            fs::create_dir_all(parent).map_err(|e| Error::io(parent, e))?;
        }
        fs::write(&path, plan.to_text()).map_err(|e| Error::io(&path, e))?;
    }
    let vfe_cfg = VfeConfig::default();
    Ok(ImageOutcome {
        record: KeyRecord {
            image_id: key.image_id,
            relative_path: rel_key,
            plan_digest: plan.digest(),
            region_count: plan.entries.len(),
        },
        vfe_before: multichannel_vfe(&t, cfg.vfe_ws, &vfe_cfg),
        vfe_after: multichannel_vfe(&out, cfg.vfe_ws, &vfe_cfg),
        ws_sum: plan.entries.iter().map(|e| e.ws).sum::<usize>(),
    })
}

/// Obfuscates every PNG/BMP/JPEG under `in_dir` into PNGs under `out_dir`
/// (mirroring the directory layout) and writes the key file. Per-file
/// failures are logged, reported and skipped.
pub fn obfuscate_dataset(in_dir: &Path, out_dir: &Path, cfg: &DatasetConfig) -> Result<DatasetReport> {
    if !in_dir.is_dir() {
        return Err(Error::io(
            in_dir,
            std::io::Error::new(std::io::ErrorKind::NotFound, "input directory not found"),
        ));
    }
    if cfg.vfe_ws == 0 {
        return Err(Error::InvalidParameter("vfe_ws must be at least 1".into()));
    }
    WindowBounds::new(cfg.bounds.lower, cfg.bounds.upper)?;
    fs::create_dir_all(out_dir).map_err(|e| Error::io(out_dir, e))?;

    let mut files: Vec<PathBuf> = Vec::new();
    for entry in WalkDir::new(in_dir).sort_by_file_name() {
        let entry = entry.map_err(|e| {
            let path = e.path().map(Path::to_path_buf).unwrap_or_else(|| in_dir.to_path_buf());
            Error::io(path, e.into())
        })?;
        if entry.file_type().is_file() && is_supported(entry.path()) {
            let rel = entry.path().strip_prefix(in_dir).expect("walkdir stays under root");
            files.push(rel.to_path_buf());
        }
    }

    let mut failures = Vec::new();
    let mut seen = HashSet::new();
    let mut jobs = Vec::new();
    for rel in files {
        if seen.insert(rel.with_extension("png")) {
            jobs.push(rel);
        } else {
            log::error!("{}: output name collides with another input", rel.display());
            failures.push((rel, "output name collides with another input".to_owned()));
        }
    }

    let pool = rayon::ThreadPoolBuilder::new()
        .num_threads(cfg.threads.max(1))
        .build()
        .map_err(|e| Error::InvalidParameter(e.to_string()))?;
    let results: Vec<(PathBuf, Result<ImageOutcome>)> = pool.install(|| {
        jobs.par_iter()
            .map(|rel| (rel.clone(), process_one(in_dir, out_dir, rel, cfg)))
            .collect()
    });

    let mut records = Vec::new();
    let (mut before, mut after, mut ws_sum, mut entries) = (0.0, 0.0, 0usize, 0usize);
    for (rel, res) in results {
        match res {
            Ok(o) => {
                before += o.vfe_before;
                after += o.vfe_after;
                ws_sum += o.ws_sum;
                entries += o.record.region_count;
                records.push(o.record);
            }
            Err(e) => {
                log::error!("{}: {e}", rel.display());
                failures.push((rel, e.to_string()));
            }
        }
    }
    records.sort_by(|a, b| a.relative_path.cmp(&b.relative_path));

    let key_file = out_dir.join(KEYFILE_NAME);
    let kf = KeyFile {
        master_seed: cfg.master_seed,
        bounds: cfg.bounds,
        config_digest: cfg.digest(),
        records,
    };
    fs::write(&key_file, kf.to_text()).map_err(|e| Error::io(&key_file, e))?;

    let processed = kf.records.len();
    let mean = |x: f64, n: usize| if n == 0 { 0.0 } else { x / n as f64 };
    let report = DatasetReport {
        key_file,
        processed,
        failures,
        mean_vfe_before: mean(before, processed),
        mean_vfe_after: mean(after, processed),
        mean_ws: mean(ws_sum as f64, entries),
    };
    log::info!("{}", report.summary_line());
    Ok(report)
}
