//! Window-size bounds.
//!
//! The lower bound comes from the normal approximation of the VFE of a
//! shuffled image; the upper bound from the probability that shuffling moves
//! the output of a 2x2 convolution + 2x2 max-pool block by at most `d`.

use std::fmt;
use std::io::Write;

use rand::SeedableRng;
use rand_chacha::ChaCha8Rng;
use rand_distr::{Distribution, Normal};
use rayon::prelude::*;

use crate::error::{Error, Result};
use crate::stats::normal_quantile;

/// Largest window size `lower_bound_ws` will consider.
pub const MAX_WS: usize = 256;
pub const DEFAULT_WS0: usize = 3;
pub const DEFAULT_ALPHA0_SAMPLES: usize = 1_000_000;
pub const DEFAULT_SEED: u64 = 0x005e_ed0f_a1fa;
/// Monte-Carlo shard count. Fixed so results do not depend on the host.
pub const DEFAULT_SHARDS: usize = 8;
/// Relative slack applied before flooring `m`, so that `alpha = alpha0^4`
/// evaluated in floating point still yields `m = 2`.
const FLOOR_SLACK: f64 = 1e-9;

/// Normal approximation of the VFE of an image shuffled in `ws`-sided windows.
#[derive(Debug, Clone, Copy, PartialEq)]
pub struct ShuffleDistributionModel {
    pub mean: f64,
    pub variance: f64,
}

impl ShuffleDistributionModel {
    pub fn std_dev(&self) -> f64 {
        self.variance.sqrt()
    }
}

pub fn vfe_shuffle_distribution(ws: usize, w: usize, h: usize) -> Result<ShuffleDistributionModel> {
    if ws < 2 {
        return Err(Error::InvalidParameter(format!(
            "window size must be at least 2, got {ws}"
        )));
    }
    if w == 0 || h == 0 {
        return Err(Error::InvalidParameter("image area must be positive".into()));
    }
    let ws64 = ws as u64;
    let mean = (2 * ws64 * (ws64 - 1)) as f64;
    let variance = (4 * ws64.pow(3) * (ws64 - 1)) as f64 / (w * h) as f64;
    Ok(ShuffleDistributionModel { mean, variance })
}

/// Smallest `ws >= 2` whose shuffled VFE reaches `target_vfe` with
/// probability at least `q` under the normal approximation.
pub fn lower_bound_ws(target_vfe: f64, w: usize, h: usize, q: f64) -> Result<usize> {
    if !(target_vfe > 0.0 && target_vfe.is_finite()) {
        return Err(Error::InvalidParameter(format!(
            "target VFE must be positive, got {target_vfe}"
        )));
    }
    if !(q > 0.0 && q < 1.0) {
        return Err(Error::InvalidParameter(format!(
            "quantile must lie in (0, 1), got {q}"
        )));
    }
    let z = normal_quantile(q);
    for ws in 2..=MAX_WS {
        let model = vfe_shuffle_distribution(ws, w, h)?;
        if model.mean - z * model.std_dev() >= target_vfe {
            return Ok(ws);
        }
    }
    Err(Error::InfeasibleTarget {
        target: target_vfe,
        max_ws: MAX_WS,
    })
}

/// A subset of the sorted kernel weights `{w1, w2, w3, w4}`; bit `i` is `w(i+1)`.
#[derive(Debug, Clone, Copy, PartialEq, Eq, Hash, PartialOrd, Ord)]
pub struct WeightSubset(pub u8);

impl WeightSubset {
    pub fn len(&self) -> u32 {
        self.0.count_ones()
    }

    pub fn is_empty(&self) -> bool {
        self.0 == 0
    }

    pub fn contains(&self, i: usize) -> bool {
        self.0 & (1 << i) != 0
    }

    pub fn sum(&self, weights: &[f64; 4]) -> f64 {
        (0..4).filter(|&i| self.contains(i)).map(|i| weights[i]).sum()
    }

    /// All 16 subsets in table order: by size, then lexicographically.
    pub fn table_order() -> Vec<WeightSubset> {
        let mut all: Vec<WeightSubset> = (0u8..16).map(WeightSubset).collect();
        all.sort_by_key(|s| {
            let idx: Vec<usize> = (0..4).filter(|&i| s.contains(i)).collect();
            (s.len(), idx)
        });
        all
    }
}

impl fmt::Display for WeightSubset {
    fn fmt(&self, f: &mut fmt::Formatter<'_>) -> fmt::Result {
        if self.is_empty() {
            return f.write_str("0");
        }
        let terms: Vec<String> = (0..4)
            .filter(|&i| self.contains(i))
            .map(|i| format!("w{}", i + 1))
            .collect();
        f.write_str(&terms.join("+"))
    }
}

/// Sign combination of the sorted weights `w1 >= w2 >= w3 >= w4`.
#[derive(Debug, Clone, Copy, PartialEq, Eq)]
pub enum SignPattern {
    AllPositive,
    OneNegative,
    TwoNegative,
    ThreeNegative,
    AllNegative,
}

impl SignPattern {
    pub const ALL: [SignPattern; 5] = [
        SignPattern::AllPositive,
        SignPattern::OneNegative,
        SignPattern::TwoNegative,
        SignPattern::ThreeNegative,
        SignPattern::AllNegative,
    ];

    pub fn positives(self) -> usize {
        match self {
            SignPattern::AllPositive => 4,
            SignPattern::OneNegative => 3,
            SignPattern::TwoNegative => 2,
            SignPattern::ThreeNegative => 1,
            SignPattern::AllNegative => 0,
        }
    }

    pub fn signs(self) -> [char; 4] {
        let p = self.positives();
        std::array::from_fn(|i| if i < p { '+' } else { '-' })
    }

    /// Representative sorted weights: positives take magnitudes
    /// `2^(p-1), ..., 1` and negatives `-2^p, ..., -8`. Powers of two make
    /// every subset sum distinct, so the maximising subset is unique.
    pub fn weights(self) -> [i32; 4] {
        let p = self.positives() as i32;
        std::array::from_fn(|i| {
            let i = i as i32;
            if i < p {
                1 << (p - 1 - i)
            } else {
                -(1 << i)
            }
        })
    }

    /// Placement of the sorted weights on the 2x2 kernel, as 0-based weight
    /// indices in row-major order.
    ///
    /// Which weights sit on a diagonal matters (rotations and reflections of
    /// the 3x3 input are symmetric). With one, three or four positive weights,
    /// `w1` and `w2` are diagonal; otherwise `w1` and `w3` are.
    pub fn layout(self) -> [usize; 4] {
        match self {
            SignPattern::AllPositive | SignPattern::OneNegative | SignPattern::ThreeNegative => {
                [0, 2, 3, 1]
            }
            SignPattern::TwoNegative | SignPattern::AllNegative => [0, 1, 3, 2],
        }
    }
}

/// Occurrence counts of the maximising weight subset over every binary 3x3
/// input and every sign pattern.
#[derive(Debug, Clone, PartialEq, Eq)]
pub struct InductionTable {
    /// `counts[p][s]`: pattern `p` (index into `SignPattern::ALL`), subset mask `s`.
    pub per_pattern: [[u32; 16]; 5],
}

impl InductionTable {
    pub fn count(&self, subset: WeightSubset) -> u32 {
        self.per_pattern.iter().map(|row| row[subset.0 as usize]).sum()
    }

    pub fn total(&self) -> u32 {
        self.per_pattern.iter().flatten().sum()
    }

    /// `(subset, count)` in table order.
    pub fn rows(&self) -> Vec<(WeightSubset, u32)> {
        WeightSubset::table_order()
            .into_iter()
            .map(|s| (s, self.count(s)))
            .collect()
    }

    /// Subset frequencies in table order, summing to 1.
    pub fn probabilities(&self) -> Vec<(WeightSubset, f64)> {
        let total = self.total() as f64;
        self.rows()
            .into_iter()
            .map(|(s, c)| (s, c as f64 / total))
            .collect()
    }

    pub fn write_text<W: Write>(&self, mut out: W) -> std::io::Result<()> {
        writeln!(out, "B\tNumber\tPercentage")?;
        let total = self.total() as f64;
        for (s, c) in self.rows() {
            writeln!(out, "{s}\t{c}\t{:.1}%", 100.0 * c as f64 / total)?;
        }
        writeln!(out, "total\t{}\t100.0%", self.total())
    }
}

/// Enumerates the 2560 base cases: 512 binary 3x3 inputs times 5 sign
/// patterns. Each case slides the 2x2 kernel over the input at stride 1,
/// max-pools the 2x2 feature map and records which weights produce the
/// pooled output.
pub fn enumerate_induction_table() -> InductionTable {
    let mut per_pattern = [[0u32; 16]; 5];
    for (p, pattern) in SignPattern::ALL.iter().enumerate() {
        let weights = pattern.weights();
        let layout = pattern.layout();
        for bits in 0u32..512 {
            let pixel = |x: usize, y: usize| bits >> (3 * y + x) & 1 == 1;
            let mut best: Option<(i32, u8)> = None;
            for dy in 0..2 {
                for dx in 0..2 {
                    let mut mask = 0u8;
                    for (k, &w_idx) in layout.iter().enumerate() {
                        if pixel(dx + k % 2, dy + k / 2) {
                            mask |= 1 << w_idx;
                        }
                    }
                    let value: i32 = (0..4)
                        .filter(|&i| mask & (1 << i) != 0)
                        .map(|i| weights[i])
                        .sum();
                    if best.is_none_or(|(v, _)| value > v) {
                        best = Some((value, mask));
                    }
                }
            }
            let (_, mask) = best.expect("four placements");
            per_pattern[p][mask as usize] += 1;
        }
    }
    InductionTable { per_pattern }
}

/// Distribution of the convolution weights, `w_i ~ N(mu_w, sigma_w)`.
/// The base case is fixed: 2x2 kernel, stride 1, followed by a 2x2 max-pool
/// with stride 2.
#[derive(Debug, Clone, Copy, PartialEq)]
pub struct KernelModel {
    pub mu_w: f64,
    pub sigma_w: f64,
}

impl KernelModel {
    pub const KERNEL_SIZE: usize = 2;
    pub const CONV_STRIDE: usize = 1;
    pub const POOL_SIZE: usize = 2;
    pub const POOL_STRIDE: usize = 2;

    pub fn new(mu_w: f64, sigma_w: f64) -> Result<Self> {
        if !mu_w.is_finite() || !(sigma_w > 0.0 && sigma_w.is_finite()) {
            return Err(Error::InvalidParameter(format!(
                "kernel model needs finite mean and positive std, got ({mu_w}, {sigma_w})"
            )));
        }
        Ok(Self { mu_w, sigma_w })
    }
}

#[derive(Debug, Clone, Copy, PartialEq, Eq, Default)]
pub enum Alpha0Method {
    /// `diff_max = B_max - B_min` with both bounds taken over extremal
    /// binary inputs, which equals `sum |w_i|`.
    #[default]
    ExtremalBound,
    /// Experimental: draw the subsets realising `B` and `B'` independently
    /// from the induction-table frequencies and use `|B - B'|`.
    TableWeighted,
}

/// `B_max - B_min` for one kernel: positive weights fire in `B_max`,
/// negative weights in `B_min`.
pub fn diff_max(weights: &[f64; 4]) -> f64 {
    let b_max: f64 = weights.iter().filter(|w| **w > 0.0).sum();
    let b_min: f64 = weights.iter().filter(|w| **w < 0.0).sum();
    b_max - b_min
}

fn shard_sizes(n: usize, shards: usize) -> Vec<usize> {
    (0..shards)
        .map(|i| n / shards + usize::from(i < n % shards))
        .collect()
}

/// Fraction of sampled kernels with `diff_max <= d`.
pub fn estimate_alpha0(d: f64, km: &KernelModel, n: usize, seed: u64) -> Result<f64> {
    estimate_alpha0_with(d, km, n, seed, Alpha0Method::ExtremalBound, DEFAULT_SHARDS)
}

pub fn estimate_alpha0_with(
    d: f64,
    km: &KernelModel,
    n: usize,
    seed: u64,
    method: Alpha0Method,
    shards: usize,
) -> Result<f64> {
    if n < 10_000 {
        return Err(Error::InvalidParameter(format!(
            "alpha0 needs at least 10^4 samples, got {n}"
        )));
    }
    if d.is_nan() || d < 0.0 {
        return Err(Error::InvalidParameter(format!("threshold d must be >= 0, got {d}")));
    }
    if shards == 0 {
        return Err(Error::InvalidParameter("shard count must be positive".into()));
    }
    let km = KernelModel::new(km.mu_w, km.sigma_w)?;
    let normal = Normal::new(km.mu_w, km.sigma_w)
        .map_err(|e| Error::InvalidParameter(e.to_string()))?;
    let cumulative: Vec<(WeightSubset, f64)> = {
        let mut acc = 0.0;
        enumerate_induction_table()
            .probabilities()
            .into_iter()
            .map(|(s, p)| {
                acc += p;
                (s, acc)
            })
            .collect()
    };
    let pick = |u: f64| {
        cumulative
            .iter()
            .find(|(_, c)| u < *c)
            .map_or(cumulative[cumulative.len() - 1].0, |(s, _)| *s)
    };

    let hits: usize = shard_sizes(n, shards)
        .into_par_iter()
        .enumerate()
        .map(|(shard, count)| {
            let mut rng = ChaCha8Rng::seed_from_u64(seed);
            rng.set_stream(shard as u64);
            let mut hits = 0usize;
            for _ in 0..count {
                let mut w: [f64; 4] = std::array::from_fn(|_| normal.sample(&mut rng));
                let diff = match method {
                    Alpha0Method::ExtremalBound => diff_max(&w),
                    Alpha0Method::TableWeighted => {
                        w.sort_by(|a, b| b.total_cmp(a));
                        let b = pick(rand::Rng::random::<f64>(&mut rng)).sum(&w);
                        let b_shuffled = pick(rand::Rng::random::<f64>(&mut rng)).sum(&w);
                        (b - b_shuffled).abs()
                    }
                };
                if diff <= d {
                    hits += 1;
                }
            }
            hits
        })
        .sum();
    Ok(hits as f64 / n as f64)
}

/// `m = sqrt(log_alpha0(alpha))` and `WS_u = ws0 + 2 * floor(m)`.
pub fn upper_bound_ws(alpha: f64, alpha0: f64, ws0: usize) -> Result<(f64, usize)> {
    if !(alpha0 > 0.0 && alpha0 < 1.0 && alpha > 0.0 && alpha <= alpha0) {
        return Err(Error::InfeasibleConfidence { alpha, alpha0 });
    }
    let m = (alpha.ln() / alpha0.ln()).sqrt();
    let steps = (m * (1.0 + FLOOR_SLACK)).floor() as usize;
    Ok((m, ws0 + 2 * steps))
}

#[derive(Debug, Clone, Copy, PartialEq)]
pub struct CalibrationParams {
    pub target_vfe: f64,
    /// Reference image size used by the normal approximation.
    pub width: usize,
    pub height: usize,
    pub q: f64,
    pub d: f64,
    pub alpha: f64,
    pub kernel: KernelModel,
    pub samples: usize,
    pub seed: u64,
    pub ws0: usize,
    pub method: Alpha0Method,
}

impl Default for CalibrationParams {
    fn default() -> Self {
        Self {
            target_vfe: 24.0,
            width: 224,
            height: 224,
            q: 0.5,
            d: 0.5,
            alpha: 0.5,
            kernel: KernelModel {
                mu_w: 0.0,
                sigma_w: 0.1,
            },
            samples: DEFAULT_ALPHA0_SAMPLES,
            seed: DEFAULT_SEED,
            ws0: DEFAULT_WS0,
            method: Alpha0Method::ExtremalBound,
        }
    }
}

#[derive(Debug, Clone, Copy, PartialEq)]
pub struct CalibrationResult {
    pub ws_lower: usize,
    pub ws_upper: usize,
    pub alpha0: f64,
    pub alpha: f64,
    pub d: f64,
    pub m: f64,
    pub target_vfe: f64,
    pub q: f64,
}

impl CalibrationResult {
    pub fn feasible(&self) -> bool {
        self.ws_lower <= self.ws_upper
    }

    pub fn bounds(&self) -> WindowBounds {
        WindowBounds {
            lower: self.ws_lower,
            upper: self.ws_upper,
        }
    }

    pub fn write_text<W: Write>(&self, mut out: W) -> std::io::Result<()> {
        writeln!(
            out,
            "calibration ws_lower={} ws_upper={} feasible={} alpha0={} alpha={} d={} m={} target_vfe={} q={}",
            self.ws_lower,
            self.ws_upper,
            self.feasible(),
            self.alpha0,
            self.alpha,
            self.d,
            self.m,
            self.target_vfe,
            self.q
        )
    }
}

/// The `(WS_l, WS_u)` pair consumed by the mixer.
#[derive(Debug, Clone, Copy, PartialEq, Eq, Hash)]
pub struct WindowBounds {
    pub lower: usize,
    pub upper: usize,
}

impl WindowBounds {
    pub fn new(lower: usize, upper: usize) -> Result<Self> {
        if lower < 1 || upper < 1 || lower > upper {
            return Err(Error::InfeasibleBounds {
                lower,
                upper,
                initial: 0,
            });
        }
        Ok(Self { lower, upper })
    }
}

pub fn calibrate(p: &CalibrationParams) -> Result<CalibrationResult> {
    let ws_lower = lower_bound_ws(p.target_vfe, p.width, p.height, p.q)?;
    let alpha0 = estimate_alpha0_with(p.d, &p.kernel, p.samples, p.seed, p.method, DEFAULT_SHARDS)?;
    let (m, ws_upper) = upper_bound_ws(p.alpha, alpha0, p.ws0)?;
    Ok(CalibrationResult {
        ws_lower,
        ws_upper,
        alpha0,
        alpha: p.alpha,
        d: p.d,
        m,
        target_vfe: p.target_vfe,
        q: p.q,
    })
}

#[cfg(test)]
mod tests {
    use super::*;
    use proptest::prelude::*;

    #[test]
    fn shuffle_distribution_reference_points() {
        let m = vfe_shuffle_distribution(8, 224, 224).unwrap();
        assert_eq!(m.mean, 112.0);
        assert_eq!(m.variance, 2.0 / 7.0);
        let m = vfe_shuffle_distribution(2, 224, 224).unwrap();
        assert_eq!(m.mean, 4.0);
        assert!((m.variance - 32.0 / 50176.0).abs() < 1e-15);
        assert!(vfe_shuffle_distribution(3, 224, 224).unwrap().mean > 4.0);
        assert!(vfe_shuffle_distribution(1, 224, 224).is_err());
    }

    #[test]
    fn lower_bound_examples() {
        assert_eq!(lower_bound_ws(100.0, 224, 224, 0.5).unwrap(), 8);
        assert_eq!(lower_bound_ws(4.0, 224, 224, 0.5).unwrap(), 2);
        assert!(matches!(
            lower_bound_ws(1e12, 224, 224, 0.9),
            Err(Error::InfeasibleTarget { .. })
        ));
        assert!(lower_bound_ws(10.0, 224, 224, 1.0).is_err());
        assert!(lower_bound_ws(-1.0, 224, 224, 0.5).is_err());
    }

    #[test]
    fn lower_bound_quantile_is_conservative() {
        // At q close to 1 the mean alone no longer clears the target on a tiny image.
        let ws_mean = lower_bound_ws(112.0, 8, 8, 0.5).unwrap();
        let ws_strict = lower_bound_ws(112.0, 8, 8, 0.99).unwrap();
        assert_eq!(ws_mean, 8);
        assert!(ws_strict > ws_mean);
    }

    #[test]
    fn representative_weights_are_sorted_with_expected_signs() {
        for p in SignPattern::ALL {
            let w = p.weights();
            assert!(w.windows(2).all(|pair| pair[0] > pair[1]));
            let signs: Vec<char> = w.iter().map(|v| if *v > 0 { '+' } else { '-' }).collect();
            assert_eq!(signs, p.signs().to_vec());
        }
        assert_eq!(SignPattern::OneNegative.weights(), [4, 2, 1, -8]);
    }

    #[test]
    fn induction_table_total_and_spot_rows() {
        let t = enumerate_induction_table();
        assert_eq!(t.total(), 2560);
        assert!(t.per_pattern.iter().all(|row| row.iter().sum::<u32>() == 512));
        assert_eq!(t.count(WeightSubset(0b0001)), 457);
        assert_eq!(t.count(WeightSubset(0b1100)), 3);
    }

    #[test]
    fn induction_table_is_deterministic() {
        assert_eq!(enumerate_induction_table(), enumerate_induction_table());
    }

    #[test]
    fn subset_display_and_order() {
        let order = WeightSubset::table_order();
        let names: Vec<String> = order.iter().map(|s| s.to_string()).collect();
        assert_eq!(names[0], "0");
        assert_eq!(names[1], "w1");
        assert_eq!(names[5], "w1+w2");
        assert_eq!(names[10], "w3+w4");
        assert_eq!(names[15], "w1+w2+w3+w4");
    }

    #[test]
    fn alpha0_limits() {
        let km = KernelModel::new(0.0, 1.0).unwrap();
        assert_eq!(estimate_alpha0(1e9, &km, 20_000, 1).unwrap(), 1.0);
        assert_eq!(estimate_alpha0(0.0, &km, 20_000, 1).unwrap(), 0.0);
    }

    #[test]
    fn alpha0_validation() {
        let km = KernelModel::new(0.0, 1.0).unwrap();
        assert!(estimate_alpha0(1.0, &km, 100, 1).is_err());
        assert!(KernelModel::new(0.0, 0.0).is_err());
        let bad = KernelModel {
            mu_w: 0.0,
            sigma_w: -1.0,
        };
        assert!(estimate_alpha0(1.0, &bad, 20_000, 1).is_err());
    }

    #[test]
    fn alpha0_deterministic_per_seed() {
        let km = KernelModel::new(0.1, 0.5).unwrap();
        let a = estimate_alpha0(1.5, &km, 50_000, 9).unwrap();
        let b = estimate_alpha0(1.5, &km, 50_000, 9).unwrap();
        assert_eq!(a, b);
    }

    #[test]
    fn alpha0_quadrature_reference() {
        // P(|Z1|+|Z2|+|Z3|+|Z4| <= 4) for Z_i ~ N(0,1), from nested adaptive
        // quadrature of the half-normal convolution.
        const REFERENCE: f64 = 0.760_968_117_2;
        let km = KernelModel::new(0.0, 1.0).unwrap();
        let est = estimate_alpha0(4.0, &km, 1_000_000, DEFAULT_SEED).unwrap();
        // 5 standard errors at n = 10^6.
        let tol = 5.0 * (REFERENCE * (1.0 - REFERENCE) / 1e6).sqrt();
        assert!((est - REFERENCE).abs() < tol, "estimate {est}");
    }

    #[test]
    fn table_weighted_variant_runs() {
        let km = KernelModel::new(0.0, 1.0).unwrap();
        let a = estimate_alpha0_with(1.0, &km, 20_000, 3, Alpha0Method::TableWeighted, 4).unwrap();
        let b = estimate_alpha0_with(1.0, &km, 20_000, 3, Alpha0Method::ExtremalBound, 4).unwrap();
        assert!(a > 0.0 && a < 1.0);
        // |B - B'| never exceeds sum |w_i|, so the table variant is looser.
        assert!(a >= b);
    }

    #[test]
    fn upper_bound_examples() {
        let a0: f64 = 0.9;
        assert_eq!(upper_bound_ws(a0, a0, 3).unwrap(), (1.0, 5));
        let (m, ws) = upper_bound_ws(a0.powi(4), a0, 3).unwrap();
        assert!((m - 2.0).abs() < 1e-12);
        assert_eq!(ws, 7);
        let (m, ws) = upper_bound_ws(a0.powf(6.25), a0, 3).unwrap();
        assert!((m - 2.5).abs() < 1e-12);
        assert_eq!(ws, 7);
    }

    #[test]
    fn upper_bound_errors() {
        assert!(matches!(
            upper_bound_ws(0.95, 0.9, 3),
            Err(Error::InfeasibleConfidence { .. })
        ));
        assert!(upper_bound_ws(0.5, 1.0, 3).is_err());
        assert!(upper_bound_ws(0.0, 0.5, 3).is_err());
        assert!(upper_bound_ws(0.5, 0.0, 3).is_err());
    }

    #[test]
    fn calibrate_end_to_end() {
        let p = CalibrationParams {
            samples: 20_000,
            ..CalibrationParams::default()
        };
        let r = calibrate(&p).unwrap();
        assert_eq!(r.ws_lower, 4);
        assert!(r.ws_upper >= 3);
        assert!(r.alpha0 > 0.0 && r.alpha0 < 1.0);
        let mut buf = Vec::new();
        r.write_text(&mut buf).unwrap();
        assert!(String::from_utf8(buf).unwrap().starts_with("calibration ws_lower=4 "));
    }

    proptest! {
        #![proptest_config(ProptestConfig::with_cases(24))]

        #[test]
        fn alpha0_monotone_in_d(d1 in 0.0f64..3.0, d2 in 0.0f64..3.0, seed in any::<u64>()) {
            let km = KernelModel::new(0.0, 0.5).unwrap();
            let (lo, hi) = if d1 <= d2 { (d1, d2) } else { (d2, d1) };
            let a = estimate_alpha0(lo, &km, 10_000, seed).unwrap();
            let b = estimate_alpha0(hi, &km, 10_000, seed).unwrap();
            prop_assert!(a <= b);
        }

        #[test]
        fn upper_bound_monotone_in_alpha(a0 in 0.05f64..0.99, x in 0.0f64..1.0, y in 0.0f64..1.0) {
            // alpha ranges over (0, a0]; smaller alpha demands more windows.
            let lo = a0.powf(1.0 + 20.0 * x.max(y));
            let hi = a0.powf(1.0 + 20.0 * x.min(y));
            let (_, ws_lo) = upper_bound_ws(lo, a0, 3).unwrap();
            let (_, ws_hi) = upper_bound_ws(hi, a0, 3).unwrap();
            prop_assert!(ws_hi <= ws_lo);
        }

        #[test]
        fn lower_bound_monotone_in_target(t1 in 0.1f64..5000.0, t2 in 0.1f64..5000.0, q in 0.05f64..0.95) {
            let (lo, hi) = if t1 <= t2 { (t1, t2) } else { (t2, t1) };
            let a = lower_bound_ws(lo, 224, 224, q).unwrap();
            let b = lower_bound_ws(hi, 224, 224, q).unwrap();
            prop_assert!(a <= b);
        }
    }
}
