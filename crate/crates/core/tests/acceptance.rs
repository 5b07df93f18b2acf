//! Acceptance criteria. Prints one PASS/FAIL line per criterion and exits
//! non-zero if any criterion fails.

use std::path::Path;
use std::process::ExitCode;
use std::time::{Duration, Instant};

use rand::{Rng, SeedableRng};
use rand_chacha::ChaCha8Rng;
use vismix::attack::{attack_sweep, log2_factorial, SearchSpaceEstimate};
use vismix::calibration::*;
use vismix::mixer::*;
use vismix::optim::*;
use vismix::rng::window_permutation;
use vismix::stats::{ks_test_chi_squared, mean};
use vismix::synth;
use vismix::vfe::normalized_statistic;
use vismix::Error;

type Criterion = (&'static str, fn() -> Outcome);

struct Outcome {
    pass: bool,
    detail: String,
}

fn outcome(pass: bool, detail: impl Into<String>) -> Outcome {
    Outcome {
        pass,
        detail: detail.into(),
    }
}

fn within(limit: Duration, elapsed: Duration) -> (bool, String) {
    (elapsed <= limit, format!("runtime {:.2}s (limit {}s)", elapsed.as_secs_f64(), limit.as_secs()))
}

const EXPECTED_ROWS: [(&str, u32); 16] = [
    ("0", 200),
    ("w1", 457),
    ("w2", 212),
    ("w3", 70),
    ("w4", 9),
    ("w1+w2", 473),
    ("w1+w3", 247),
    ("w1+w4", 60),
    ("w2+w3", 140),
    ("w2+w4", 15),
    ("w3+w4", 3),
    ("w1+w2+w3", 411),
    ("w1+w2+w4", 92),
    ("w1+w3+w4", 28),
    ("w2+w3+w4", 5),
    ("w1+w2+w3+w4", 138),
];

fn induction_table() -> Outcome {
    let start = Instant::now();
    let table = enumerate_induction_table();
    let rows: Vec<(String, u32)> = table.rows().into_iter().map(|(s, c)| (s.to_string(), c)).collect();
    let expected: Vec<(String, u32)> = EXPECTED_ROWS.iter().map(|&(s, c)| (s.to_owned(), c)).collect();
    let mismatches = rows.iter().zip(&expected).filter(|(a, b)| a != b).count() + rows.len().abs_diff(16);
    let (fast, rt) = within(Duration::from_secs(5), start.elapsed());
    outcome(
        mismatches == 0 && table.total() == 2560 && fast,
        format!("{} rows, total {}, {mismatches} mismatches, {rt}", rows.len(), table.total()),
    )
}

fn chi_square_law() -> Outcome {
    let start = Instant::now();
    let mut rng = ChaCha8Rng::seed_from_u64(0xc41);
    let mut pass = true;
    let mut parts = Vec::new();
    for (i, ws) in [2usize, 4, 8].into_iter().enumerate() {
        let df = (2 * ws * (ws - 1)) as f64;
        let values: Vec<f64> = (0..5000u64)
            .map(|k| {
                let raw = synth::normal_samples(ws, ws, &mut rng);
                let perm = window_permutation(rng.random(), k, i as u32, raw.len());
                let shuffled: Vec<f64> = perm.iter().map(|&j| raw[j]).collect();
                normalized_statistic(&shuffled, ws, ws).expect("continuous samples")
            })
            .collect();
        let ks = ks_test_chi_squared(&values, df);
        let m = mean(&values);
        let mean_ok = (m - df).abs() <= 0.02 * df;
        pass &= ks.passes(0.01) && mean_ok;
        parts.push(format!(
            "ws={ws} df={df} mean={m:.3} (mean {}) KS D={:.4} p={:.3e} (KS {})",
            if mean_ok { "ok" } else { "off" },
            ks.statistic,
            ks.p_value,
            if ks.passes(0.01) { "ok" } else { "rejects" }
        ));
    }
    let (fast, rt) = within(Duration::from_secs(60), start.elapsed());
    outcome(pass && fast, format!("{}; {rt}", parts.join("; ")))
}

fn shuffle_model() -> Outcome {
    let m = vfe_shuffle_distribution(8, 224, 224).unwrap();
    outcome(
        m.mean == 112.0 && m.variance == 2.0 / 7.0,
        format!("mean {} variance {} (2/7 = {})", m.mean, m.variance, 2.0 / 7.0),
    )
}

fn permutation_soundness() -> Outcome {
    let bounds = WindowBounds::new(2, 8).unwrap();
    let mut bad = 0;
    for i in 0..50u64 {
        let mut rng = ChaCha8Rng::seed_from_u64(i);
        let (w, h) = (rng.random_range(8..96), rng.random_range(8..96));
        let t = synth::natural_image(3, h, w, i);
        let (out, plan) = obfuscate_image(&t, &bounds, &MixKey::new(master_seed_from_u64(i), i)).unwrap();
        let windows_ok = plan.entries.iter().flat_map(|e| e.windows()).all(|win| {
            (0..3).all(|c| {
                let mut a = t.region_samples(&win, c);
                let mut b = out.region_samples(&win, c);
                a.sort_unstable();
                b.sort_unstable();
                a == b
            })
        });
        if !windows_ok || invert_image(&out, &plan).unwrap() != t {
            bad += 1;
        }
    }
    outcome(bad == 0, format!("50 fixtures, {bad} violations"))
}

fn plan_bounds_and_termination() -> Outcome {
    let mut rng = ChaCha8Rng::seed_from_u64(55);
    let (mut cases, mut infeasible, mut bad) = (0, 0, 0);
    let mut sizes: Vec<(usize, usize)> = vec![(8, 8), (512, 512), (8, 512), (512, 9)];
    sizes.extend((0..150).map(|_| (rng.random_range(8..=512), rng.random_range(8..=512))));
    for (w, h) in sizes {
        let lower = rng.random_range(1..=16);
        let upper = rng.random_range(lower.max(3)..=lower.max(3) + 32);
        let t = synth::natural_image(1, h, w, rng.random());
        let bounds = WindowBounds::new(lower, upper).unwrap();
        let initial = initial_ws(t.size(), upper);
        cases += 1;
        match plan_image(&t, &bounds, &MixKey::new(master_seed_from_u64(cases), 0)) {
            Ok(plan) => {
                let mut hits = vec![0u8; w * h];
                for e in &plan.entries {
                    for y in e.region.y0..e.region.y0 + e.region.h {
                        for x in e.region.x0..e.region.x0 + e.region.w {
                            hits[y * w + x] += 1;
                        }
                    }
                }
                let tiled = hits.iter().all(|&n| n == 1);
                let budget = plan.entries.len() <= w * h;
                let ws_ok = plan
                    .entries
                    .iter()
                    .all(|e| e.ws <= initial && (e.ws >= floor_pow2(lower) || e.ws >= e.region.size()));
                if !(tiled && budget && ws_ok) {
                    bad += 1;
                }
            }
            Err(Error::InfeasibleBounds { .. }) if floor_pow2(lower) > initial => infeasible += 1,
            Err(_) => bad += 1,
        }
    }
    outcome(
        bad == 0 && infeasible < cases,
        format!("{cases} cases ({infeasible} correctly infeasible), {bad} violations"),
    )
}

fn initial_ws_traces() -> Outcome {
    let (a, b) = (initial_ws(16, 6), initial_ws(224, 8));
    outcome(a == 4 && b == 8, format!("(16, 6) -> {a}, (224, 8) -> {b}"))
}

fn upper_bound_formula() -> Outcome {
    let alpha0 = estimate_alpha0(0.5, &KernelModel::new(0.0, 0.1).unwrap(), DEFAULT_ALPHA0_SAMPLES, DEFAULT_SEED).unwrap();
    let (_, a) = upper_bound_ws(alpha0, alpha0, DEFAULT_WS0).unwrap();
    let (_, b) = upper_bound_ws(alpha0.powi(4), alpha0, DEFAULT_WS0).unwrap();
    outcome(a == 5 && b == 7, format!("alpha0 {alpha0:.6}: alpha=alpha0 -> {a}, alpha=alpha0^4 -> {b}"))
}

fn st_adam_arithmetic() -> Outcome {
    let start = Instant::now();
    let p = StAdamParams::new(1.0, 0.9, 0.999, 1e-8).unwrap();
    let mut w = vec![0.0];
    let mut s = OptimizerState::new(1);
    st_adam_step(&mut w, &[1.0], &mut s, &p).unwrap();
    let step_err = (w[0].abs() - 0.1 / (0.001f64.sqrt() + 1e-8)).abs();

    let p0 = StAdamParams::new(0.05, 0.0, 0.0, 1e-8).unwrap();
    let stop = StopRule { max_iters: 1000, tol: 0.0 };
    let a = optimize(&mut Rosenbrock, &[-1.2, 1.0], Optimizer::StAdam, &p0, stop).unwrap();
    let b = optimize(&mut Rosenbrock, &[-1.2, 1.0], Optimizer::Adam, &p0, stop).unwrap();
    let coincide = a.w.iter().zip(&b.w).map(|(x, y)| (x - y).abs()).fold(0.0, f64::max);

    let pq = StAdamParams::new(0.01, 0.9, 0.999, 1e-8).unwrap();
    let q = optimize(
        &mut Quadratic::isotropic(2),
        &[5.0, 5.0],
        Optimizer::StAdam,
        &pq,
        StopRule { max_iters: 5000, tol: 1e-3 },
    )
    .unwrap();
    let norm = q.w.iter().map(|x| x * x).sum::<f64>().sqrt();
    let (fast, rt) = within(Duration::from_secs(10), start.elapsed());
    outcome(
        step_err <= 1e-9 && coincide <= 1e-12 && norm < 1e-3 && fast,
        format!(
            "first-step error {step_err:.1e}, adam gap at beta=gamma=0 {coincide:.1e}, |w| {norm:.2e} after {} steps, {rt}",
            q.steps()
        ),
    )
}

fn search_space_cliff() -> Outcome {
    let l = log2_factorial(36);
    let est = SearchSpaceEstimate::for_sizes(&[6]);
    outcome(
        l > 138.0 && l < 138.2 && est.above_security_threshold(),
        format!("log2(36!) = {l:.6}, above 128: {}", est.above_security_threshold()),
    )
}

fn attack_monotonicity() -> Outcome {
    let start = Instant::now();
    let corpus = Path::new(concat!(env!("CARGO_MANIFEST_DIR"), "/tests/data/corpus"));
    let sweep = attack_sweep(corpus, &[2, 3], 0, 7).unwrap();
    let (fast, rt) = within(Duration::from_secs(300), start.elapsed());
    let [r2, r3] = [&sweep.rows[0], &sweep.rows[1]];
    outcome(
        r2.images == 20 && r3.recovery <= r2.recovery && r2.recovery > r2.baseline && fast,
        format!(
            "{} images; ws=2 recovery {:.4} (baseline {:.4}); ws=3 recovery {:.4} (baseline {:.4}); {rt}",
            r2.images, r2.recovery, r2.baseline, r3.recovery, r3.baseline
        ),
    )
}

fn main() -> ExitCode {
    let criteria: [Criterion; 10] = [
        ("induction table", induction_table),
        ("chi-square law", chi_square_law),
        ("shuffle distribution parameters", shuffle_model),
        ("permutation soundness", permutation_soundness),
        ("plan bounds and termination", plan_bounds_and_termination),
        ("initial window traces", initial_ws_traces),
        ("upper-bound formula", upper_bound_formula),
        ("st-adam step arithmetic", st_adam_arithmetic),
        ("search-space cliff", search_space_cliff),
        ("attack monotonicity", attack_monotonicity),
    ];
    let mut failed = 0;
    for (i, (name, run)) in criteria.iter().enumerate() {
        let o = run();
        failed += usize::from(!o.pass);
        println!(
            "criterion {:>2} {:<34} {}  {}",
            i + 1,
            name,
            if o.pass { "PASS" } else { "FAIL" },
            o.detail
        );
    }
    println!("acceptance: {} passed, {failed} failed", criteria.len() - failed);
    if failed == 0 {
        ExitCode::SUCCESS
    } else {
        ExitCode::FAILURE
    }
}
