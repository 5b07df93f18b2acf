use std::fs;
use std::path::Path;

use proptest::prelude::*;
use vismix::calibration::WindowBounds;
use vismix::mixer::*;
use vismix::synth;
use vismix::vfe::{multichannel_vfe, VfeConfig};
use vismix::{Error, ImageTensor};

fn key(seed: u64, id: u64) -> MixKey {
    MixKey::new(master_seed_from_u64(seed), id)
}

fn assert_tiles(plan: &ShufflePlan) {
    let mut hits = vec![0u8; plan.width * plan.height];
    for e in &plan.entries {
        for y in e.region.y0..e.region.y0 + e.region.h {
            for x in e.region.x0..e.region.x0 + e.region.w {
                hits[y * plan.width + x] += 1;
            }
        }
    }
    assert!(hits.iter().all(|&h| h == 1), "entries do not tile the image");
}

proptest! {
    #![proptest_config(ProptestConfig::with_cases(64))]

    #[test]
    fn plans_tile_and_respect_bounds(
        w in 1usize..=512,
        h in 1usize..=512,
        lower in 1usize..=16,
        extra in 0usize..=24,
        seed in any::<u64>(),
    ) {
        let upper = (lower + extra).max(3);
        let t = synth::natural_image(1, h, w, seed);
        let bounds = WindowBounds::new(lower, upper).unwrap();
        let initial = initial_ws(t.size(), upper);
        match plan_image(&t, &bounds, &key(seed, 0)) {
            Ok(plan) => {
                assert_tiles(&plan);
                prop_assert!(plan.entries.len() <= w * h);
                for e in &plan.entries {
                    prop_assert!(e.ws <= initial);
                    prop_assert!(e.ws >= plan.floor_ws || e.ws >= e.region.size());
                }
            }
            Err(Error::InfeasibleBounds { .. }) => prop_assert!(floor_pow2(lower) > initial),
            Err(e) => prop_assert!(false, "unexpected error {e}"),
        }
    }
}

#[test]
fn obfuscation_preserves_window_multisets_and_inverts() {
    let bounds = WindowBounds::new(2, 8).unwrap();
    for i in 0..50u64 {
        let (w, h) = (17 + (i as usize * 7) % 50, 13 + (i as usize * 11) % 45);
        let t = synth::natural_image(3, h, w, i);
        let (out, plan) = obfuscate_image(&t, &bounds, &key(9, i)).unwrap();
        for e in &plan.entries {
            for win in e.windows() {
                for c in 0..3 {
                    let mut a = t.region_samples(&win, c);
                    let mut b = out.region_samples(&win, c);
                    a.sort_unstable();
                    b.sort_unstable();
                    assert_eq!(a, b);
                }
            }
        }
        assert_eq!(t.histograms(), out.histograms());
        assert_eq!(invert_image(&out, &plan).unwrap(), t);
    }
}

#[test]
fn tampered_seed_does_not_invert() {
    let t = synth::natural_image(3, 40, 40, 3);
    let (out, mut plan) = obfuscate_image(&t, &WindowBounds::new(2, 8).unwrap(), &key(1, 1)).unwrap();
    let digest = plan.digest();
    plan.entries[0].seeds[0] ^= 1;
    assert_ne!(plan.digest(), digest);
    assert_ne!(invert_image(&out, &plan).unwrap(), t);
}

#[test]
fn two_by_two_orderings_are_uniform() {
    // Four distinct values; count which of the 24 orderings each seed produces.
    let base = ImageTensor::new(1, 2, 2, vec![0, 1, 2, 3]).unwrap();
    let region = base.full_region();
    let mut counts = std::collections::HashMap::new();
    for seed in 0..24_000u64 {
        let mut t = base.clone();
        shuffle_window(&mut t, &region, 2, &[seed.wrapping_mul(0x9e37_79b9_7f4a_7c15)]).unwrap();
        *counts.entry(t.data().to_vec()).or_insert(0u64) += 1;
    }
    assert_eq!(counts.len(), 24);
    let counts: Vec<u64> = counts.into_values().collect();
    let (_, p) = vismix::stats::uniformity_chi_square(&counts);
    assert!(p > 0.001, "p = {p}");
}

#[test]
fn natural_images_gain_vfe() {
    // Ratio frozen from the first corpus run (about 2.7 with these bounds).
    let bounds = WindowBounds::new(4, 7).unwrap();
    let cfg = VfeConfig::default();
    let (mut before, mut after) = (0.0, 0.0);
    for i in 0..100u64 {
        let t = synth::natural_image(3, 64, 64, 5000 + i);
        let (out, _) = obfuscate_image(&t, &bounds, &key(1, i)).unwrap();
        before += multichannel_vfe(&t, 8, &cfg);
        after += multichannel_vfe(&out, 8, &cfg);
    }
    assert!(after >= 1.5 * before, "before {before} after {after}");
}

#[test]
fn whole_window_shuffling_does_not_lower_mean_vfe() {
    let cfg = VfeConfig::default();
    let (mut before, mut after) = (0.0, 0.0);
    for i in 0..200u64 {
        let mut t = synth::natural_image(3, 32, 32, 9000 + i);
        before += multichannel_vfe(&t, 8, &cfg);
        let r = t.full_region();
        shuffle_window(&mut t, &r, 8, &[i, i + 1, i + 2]).unwrap();
        after += multichannel_vfe(&t, 8, &cfg);
    }
    assert!(after >= before);
}

fn write_fixtures(dir: &Path, n: usize) {
    for i in 0..n {
        let sub = if i % 2 == 0 { dir.join("a") } else { dir.join("b/c") };
        vismix::image::save_image(&synth::natural_image(3, 24 + i, 30, i as u64), sub.join(format!("f{i}.png"))).unwrap();
    }
}

fn tree_bytes(dir: &Path) -> Vec<(String, Vec<u8>)> {
    let mut out: Vec<(String, Vec<u8>)> = walkdir::WalkDir::new(dir)
        .into_iter()
        .filter_map(|e| e.ok())
        .filter(|e| e.file_type().is_file())
        .map(|e| {
            let rel = e.path().strip_prefix(dir).unwrap().to_string_lossy().into_owned();
            (rel, fs::read(e.path()).unwrap())
        })
        .collect();
    out.sort();
    out
}

#[test]
fn dataset_round_trip_and_determinism() {
    let input = tempfile::tempdir().unwrap();
    write_fixtures(input.path(), 10);
    fs::write(input.path().join("notes.txt"), "ignored").unwrap();

    let run = |threads: usize| {
        let out = tempfile::tempdir().unwrap();
        let plans = tempfile::tempdir().unwrap();
        let mut cfg = DatasetConfig::new(master_seed_from_u64(77), WindowBounds::new(2, 8).unwrap());
        cfg.threads = threads;
        cfg.plans_dir = Some(plans.path().to_path_buf());
        let report = obfuscate_dataset(input.path(), out.path(), &cfg).unwrap();
        (report, tree_bytes(out.path()), tree_bytes(plans.path()), out, plans)
    };
    let (report, outputs, plans, out_dir, plans_dir) = run(1);
    assert_eq!(report.processed, 10);
    assert!(report.failures.is_empty());
    assert_eq!(outputs.len(), 11);
    assert!(report.mean_vfe_after > report.mean_vfe_before);

    let kf = KeyFile::from_text(&fs::read_to_string(out_dir.path().join(KEYFILE_NAME)).unwrap()).unwrap();
    assert_eq!(kf.records.len(), 10);
    for rec in &kf.records {
        let original = vismix::image::load_image(input.path().join(&rec.relative_path)).unwrap();
        let shuffled = vismix::image::load_image(out_dir.path().join(&rec.relative_path)).unwrap();
        let plan_path = plans_dir.path().join(&rec.relative_path).with_extension("plan");
        let plan = ShufflePlan::from_text(&fs::read_to_string(plan_path).unwrap()).unwrap();
        assert_eq!(plan.digest(), rec.plan_digest);
        assert_eq!(invert_image(&shuffled, &plan).unwrap(), original);
    }

    let (_, outputs4, plans4, _, _) = run(4);
    assert_eq!(outputs, outputs4);
    assert_eq!(plans, plans4);
}

#[test]
fn dataset_edge_cases() {
    let empty = tempfile::tempdir().unwrap();
    let out = tempfile::tempdir().unwrap();
    let cfg = DatasetConfig::new(master_seed_from_u64(1), WindowBounds::new(2, 8).unwrap());
    let report = obfuscate_dataset(empty.path(), out.path(), &cfg).unwrap();
    assert_eq!(report.processed, 0);
    let kf = KeyFile::from_text(&fs::read_to_string(&report.key_file).unwrap()).unwrap();
    assert!(kf.records.is_empty());

    assert!(obfuscate_dataset(&empty.path().join("missing"), out.path(), &cfg).is_err());

    let bad = tempfile::tempdir().unwrap();
    fs::write(bad.path().join("broken.png"), b"not a png").unwrap();
    write_fixtures(bad.path(), 2);
    let report = obfuscate_dataset(bad.path(), out.path(), &cfg).unwrap();
    assert_eq!(report.processed, 2);
    assert_eq!(report.failures.len(), 1);
}
