//! Acceptance suite. Each criterion prints one `PASS`/`FAIL` line with its
//! measured worst case; the process exits non-zero if any criterion fails.
//!
//! Reference values come from oracles written here, independent of the
//! library paths they check: projectors from the construction of each
//! matrix, closed-form word counts, closed-form branch slopes, and direct
//! determinants.

use std::time::{Duration, Instant};

use nalgebra::DMatrix;
use num_complex::Complex64;
use pencil_core::charpoly::{
    branch_derivative, kth_power_test, pencil_charpoly, pencil_matrix, reduced_x1_slope, transform_tuple_vars, DEFAULT_FD_STEP,
};
use pencil_core::cli::{analyze_report, decompose_report, InputEcho};
use pencil_core::conditions::{analyze, enumerate_words, verify_cycle_identity, verify_first_order_identity, AnalyzeOptions, Overall, WordMode};
use pencil_core::config::Tolerances;
use pencil_core::decomposer::{decompose, extract_block_structure, unify_layers};
use pencil_core::instances::{gen_conjugate_negative, gen_decomposable, haar_unitary, random_hermitian};
use pencil_core::linalg::{determinant, eigendecompose_clustered, from_real_diagonal, hermitian_norm, hermitize, CMat, HermitianTuple};
use pencil_core::poly::MultiPoly;
use pencil_core::PencilError;
use rand::{Rng, SeedableRng};
use rand_chacha::ChaCha8Rng;

// Pinned thresholds.
const PROJECTION_TOL_PER_DIM: f64 = 1e-9;
const PROJECTION_MIN_GAP: f64 = 1e-3;
const PROJECTION_BUDGET: Duration = Duration::from_secs(5);
const TRANSFORM_TOL: f64 = 1e-8;
const TRANSFORM_RADIUS: f64 = 0.1;
const TRANSFORM_BUDGET: Duration = Duration::from_secs(10);
const RESIDUAL_TOL: f64 = 1e-6;
const REDUCED_CHARPOLY_TOL: f64 = 1e-6;
const ROUND_TRIP_BUDGET: Duration = Duration::from_secs(60);
const NEGATIVE_BUDGET: Duration = Duration::from_secs(10);
const FIRST_ORDER_TOL: f64 = 1e-7;
const CYCLE_TOL: f64 = 1e-7;
const SLOPE_TOL: f64 = 1e-10;
const ROUND_TRIP_SEEDS: u64 = 5;
const NEGATIVE_SEEDS: u64 = 20;

struct Outcome {
    ok: bool,
    detail: String,
}

fn c(re: f64) -> Complex64 {
    Complex64::new(re, 0.0)
}

fn relative_coefficient_diff(a: &MultiPoly, b: &MultiPoly) -> f64 {
    a.max_coefficient_diff(b) / a.max_coefficient().max(b.max_coefficient()).max(1.0)
}

/// Distinct eigenvalues in `[-1, 1]` with pairwise gap at least `gap`.
fn spread_values(rng: &mut ChaCha8Rng, count: usize, gap: f64) -> Vec<f64> {
    loop {
        let mut v: Vec<f64> = (0..count).map(|_| rng.random_range(-1.0..1.0)).collect();
        v.sort_by(f64::total_cmp);
        if v.windows(2).all(|w| w[1] - w[0] >= gap) {
            return v;
        }
    }
}

fn projection_formula() -> Outcome {
    let mut rng = ChaCha8Rng::seed_from_u64(2024);
    let mut worst_ratio = 0.0f64;
    for case in 0..50u64 {
        let dim = rng.random_range(1..=12usize);
        let clusters = rng.random_range(1..=dim);
        // Multiplicities: one each, the remainder spread at random.
        let mut mult = vec![1usize; clusters];
        for _ in clusters..dim {
            let j = rng.random_range(0..clusters);
            mult[j] += 1;
        }
        let values = spread_values(&mut rng, clusters, PROJECTION_MIN_GAP);
        let u = haar_unitary(dim, 7000 + case);
        let diag: Vec<f64> = values.iter().zip(&mult).flat_map(|(&v, &k)| std::iter::repeat_n(v, k)).collect();
        let a = hermitize(&(&u * from_real_diagonal(&diag) * u.adjoint()));
        let spec = match eigendecompose_clustered(&a, 1e-8) {
            Ok(s) => s,
            Err(e) => return Outcome { ok: false, detail: format!("case {case}: {e}") },
        };
        if spec.multiplicities != mult {
            return Outcome {
                ok: false,
                detail: format!("case {case}: clusters {:?}, built {:?}", spec.multiplicities, mult),
            };
        }
        let mut offset = 0;
        for (j, &k) in mult.iter().enumerate() {
            let cols = u.columns(offset, k);
            let oracle = cols.clone() * cols.adjoint();
            offset += k;
            let p = match pencil_core::linalg::projection_by_interpolation(&a, &spec, j) {
                Ok(p) => p,
                Err(e) => return Outcome { ok: false, detail: format!("case {case}: {e}") },
            };
            let err = (p - oracle).iter().map(|z| z.norm()).fold(0.0, f64::max);
            worst_ratio = worst_ratio.max(err / dim as f64);
        }
    }
    Outcome {
        ok: worst_ratio <= PROJECTION_TOL_PER_DIM,
        detail: format!("max entry error / N = {worst_ratio:.2e} (limit {PROJECTION_TOL_PER_DIM:.0e})"),
    }
}

fn transform_law() -> Outcome {
    let mut rng = ChaCha8Rng::seed_from_u64(77);
    let mut worst = 0.0f64;
    let mut worst_direct = 0.0f64;
    for _ in 0..20 {
        let m = rng.random_range(2..=3usize);
        let dim = rng.random_range(2..=5usize);
        let mats: Vec<CMat> = (0..m).map(|_| random_hermitian(dim, &mut rng)).collect();
        let p = pencil_charpoly(&mats).unwrap();
        for _ in 0..20 {
            // ‖C − I‖_F ≤ 0.1 by rescaling a random complex perturbation.
            let mut e = DMatrix::<Complex64>::from_fn(m, m, |_, _| Complex64::new(rng.random_range(-1.0..1.0), rng.random_range(-1.0..1.0)));
            let norm = e.norm();
            e *= c(TRANSFORM_RADIUS * rng.random_range(0.1..1.0) / norm);
            let cm = DMatrix::<Complex64>::identity(m, m) + e;
            let transformed: Vec<CMat> = (0..m)
                .map(|j| {
                    let mut acc = CMat::zeros(dim, dim);
                    for (s, a) in mats.iter().enumerate() {
                        acc += a * cm[(j, s)];
                    }
                    acc
                })
                .collect();
            let lhs = pencil_charpoly(&transformed).unwrap();
            let rhs = transform_tuple_vars(&p, &cm).unwrap();
            worst = worst.max(relative_coefficient_diff(&lhs, &rhs));
            let x: Vec<Complex64> = (0..m).map(|_| Complex64::new(rng.random_range(-1.0..1.0), rng.random_range(-1.0..1.0))).collect();
            let direct = determinant(&pencil_matrix(&transformed, &x));
            worst_direct = worst_direct.max((rhs.eval(&x) - direct).norm() / direct.norm().max(1.0));
        }
    }
    Outcome {
        ok: worst <= TRANSFORM_TOL && worst_direct <= TRANSFORM_TOL,
        detail: format!("coefficient diff {worst:.2e}, pointwise vs determinant {worst_direct:.2e} (limit {TRANSFORM_TOL:.0e})"),
    }
}

fn round_trip_shapes() -> Vec<(usize, usize, usize)> {
    let mut shapes = Vec::new();
    for n in [2, 3, 4] {
        for k in [2, 3] {
            for m in [2, 3] {
                if n * k <= 12 {
                    shapes.push((n, k, m));
                }
            }
        }
    }
    shapes
}

struct RoundTripStats {
    instances: usize,
    worst_residual_ratio: f64,
    worst_charpoly: f64,
    failures: Vec<String>,
}

fn round_trip() -> RoundTripStats {
    let mut stats = RoundTripStats {
        instances: 0,
        worst_residual_ratio: 0.0,
        worst_charpoly: 0.0,
        failures: Vec::new(),
    };
    let opts = AnalyzeOptions::default();
    for (n, k, m) in round_trip_shapes() {
        for seed in 0..ROUND_TRIP_SEEDS {
            stats.instances += 1;
            let tag = format!("(n={n},k={k},m={m},seed={seed})");
            let (tuple, desc) = gen_decomposable(n, k, m, seed).unwrap();
            let report = analyze(&tuple, k, &AnalyzeOptions { seed, ..opts.clone() });
            if report.overall != Overall::Pass || report.word_results.iter().any(|w| !w.passed) {
                stats.failures.push(format!("{tag} analyze {:?}, failing {:?}", report.overall, report.failing_words));
                continue;
            }
            let result = match decompose(&tuple, k, seed) {
                Ok(r) => r,
                Err(e) => {
                    stats.failures.push(format!("{tag} decompose: {e}"));
                    continue;
                }
            };
            let scale = tuple.matrices().iter().map(hermitian_norm).fold(0.0, f64::max);
            stats.worst_residual_ratio = stats.worst_residual_ratio.max(result.residual / scale.max(1.0));
            let seed_tuple = desc.seed_tuple().unwrap();
            let diff = relative_coefficient_diff(&pencil_charpoly(&result.reduced).unwrap(), &pencil_charpoly(&seed_tuple).unwrap());
            stats.worst_charpoly = stats.worst_charpoly.max(diff);
        }
    }
    stats
}

fn negative_detection() -> Outcome {
    let opts = AnalyzeOptions::default();
    let mut problems = Vec::new();
    for seed in 0..NEGATIVE_SEEDS {
        let (tuple, _) = gen_conjugate_negative(seed).unwrap();
        match kth_power_test(tuple.matrices(), 2, 3, 8, seed) {
            Ok(v) if v.is_kth_power => {}
            other => problems.push(format!("seed {seed}: full tuple {other:?}")),
        }
        let report = analyze(&tuple, 2, &AnalyzeOptions { seed, ..opts.clone() });
        if report.overall != Overall::Fail || report.failing_words.is_empty() {
            problems.push(format!("seed {seed}: analyze {:?}", report.overall));
        }
        match decompose(&tuple, 2, seed) {
            Err(PencilError::CycleInconsistency { cycle, .. }) if cycle.len() == 3 => {}
            other => problems.push(format!("seed {seed}: decompose {:?}", other.map(|r| r.residual))),
        }
    }
    Outcome {
        ok: problems.is_empty(),
        detail: if problems.is_empty() {
            format!("{NEGATIVE_SEEDS} seeds: square determinant, failing word, 3-cycle rejected")
        } else {
            problems.join("; ")
        },
    }
}

fn first_order_identity() -> Outcome {
    let mut worst = 0.0f64;
    let mut checked = 0;
    for (n, k, m) in round_trip_shapes() {
        for seed in 0..ROUND_TRIP_SEEDS {
            let (tuple, _) = gen_decomposable(n, k, m, seed).unwrap();
            let spec = eigendecompose_clustered(tuple.get(0), 1e-8).unwrap();
            for l in 1..m {
                let scale = hermitian_norm(tuple.get(l));
                for i in 0..n {
                    match verify_first_order_identity(&tuple, &spec, i, l, DEFAULT_FD_STEP) {
                        Ok(r) => worst = worst.max(r / scale),
                        Err(e) => return Outcome { ok: false, detail: format!("(n={n},k={k},m={m},seed={seed}) i={i} l={l}: {e}") },
                    }
                    checked += 1;
                }
            }
        }
    }
    Outcome {
        ok: worst <= FIRST_ORDER_TOL,
        detail: format!("{checked} (i,l) pairs, max residual / ‖A_l‖ = {worst:.2e} (limit {FIRST_ORDER_TOL:.0e})"),
    }
}

fn cycle_identity() -> Outcome {
    let tol = Tolerances::default();
    let mut worst = 0.0f64;
    let mut checked = 0;
    for (n, k, m) in round_trip_shapes() {
        for seed in 0..ROUND_TRIP_SEEDS {
            let (tuple, _) = gen_decomposable(n, k, m, seed).unwrap();
            let spec = eigendecompose_clustered(tuple.get(0), 1e-8).unwrap();
            let bs = match extract_block_structure(&tuple, &spec, k).and_then(|raw| unify_layers(&raw, &tol)) {
                Ok(bs) => bs,
                Err(e) => return Outcome { ok: false, detail: format!("(n={n},k={k},m={m},seed={seed}): {e}") },
            };
            for a in 0..n {
                for b in 0..n {
                    for c in 0..n {
                        if a == b || b == c || a == c {
                            continue;
                        }
                        let edges = [(a, b), (b, c), (c, a)];
                        if !edges.iter().all(|e| bs.linked.contains(e)) {
                            continue;
                        }
                        let check = verify_cycle_identity(&bs, &[a, b, c]).unwrap();
                        worst = worst.max(check.residual);
                        checked += 1;
                    }
                }
            }
        }
    }
    Outcome {
        ok: checked > 0 && worst <= CYCLE_TOL,
        detail: format!("{checked} oriented 3-cycles, max residual {worst:.2e} (limit {CYCLE_TOL:.0e})"),
    }
}

fn derivative_anchor() -> Outcome {
    let mut rng = ChaCha8Rng::seed_from_u64(5);
    let mut worst = 0.0f64;
    for trial in 0..20 {
        let n = rng.random_range(1..=4usize);
        let k = rng.random_range(1..=3usize);
        let lambdas: Vec<f64> = loop {
            let v: Vec<f64> = (0..n).map(|_| rng.random_range(0.5..3.0) * if rng.random_bool(0.5) { 1.0 } else { -1.0 }).collect();
            let mut s = v.clone();
            s.sort_by(f64::total_cmp);
            if s.windows(2).all(|w| w[1] - w[0] > 0.2) {
                break v;
            }
        };
        let mus: Vec<f64> = (0..n).map(|_| rng.random_range(-3.0..3.0)).collect();
        let expand = |v: &[f64]| v.iter().flat_map(|&x| std::iter::repeat_n(x, k)).collect::<Vec<_>>();
        let a1 = from_real_diagonal(&expand(&lambdas));
        let w = from_real_diagonal(&expand(&mus));
        let spec = eigendecompose_clustered(&a1, 1e-8).unwrap();
        for (j, &lambda) in spec.eigenvalues.iter().enumerate() {
            let source = (0..n)
                .min_by(|&a, &b| (lambdas[a] - lambda).abs().total_cmp(&(lambdas[b] - lambda).abs()))
                .unwrap();
            // x₁λ + x₂μ = 1 on the branch, so dx₁/dx₂ = −μ/λ.
            let exact = -mus[source] / lambda;
            match branch_derivative(&a1, &w, &spec, j, DEFAULT_FD_STEP) {
                Ok(d) => worst = worst.max((d - c(exact)).norm()),
                Err(e) => return Outcome { ok: false, detail: format!("trial {trial}: {e}") },
            }
        }
    }
    // (λ₁t − 1)(λ₂t − 1) with λ = (1, 2) has derivative 4t − 3 = 1 at t = 1.
    let formula = (reduced_x1_slope(&[1.0, 2.0], 0) - 1.0).abs();
    Outcome {
        ok: worst <= SLOPE_TOL && formula <= SLOPE_TOL,
        detail: format!("branch slope error {worst:.2e}, reduced slope error {formula:.2e} (limit {SLOPE_TOL:.0e})"),
    }
}

fn factorial(n: u64) -> u64 {
    (1..=n).product()
}

fn word_counts() -> Outcome {
    let mut mismatches = Vec::new();
    for n in 1..=4u64 {
        for m in 2..=3u64 {
            let all: u64 = (0..n).map(|r| (m - 1).pow(r as u32 + 1) * factorial(n) / factorial(n - r)).sum();
            let core: u64 = (0..n).map(|r| (m - 1).pow(r as u32 + 1) * factorial(n) / (factorial(r) * factorial(n - r))).sum();
            let (words, truncated) = enumerate_words(n as usize, m as usize, WordMode::All, usize::MAX);
            let (core_words, _) = enumerate_words(n as usize, m as usize, WordMode::ProofCore, usize::MAX);
            let mut labels: Vec<String> = words.iter().map(ToString::to_string).collect();
            labels.sort();
            labels.dedup();
            if truncated || words.len() as u64 != all || labels.len() != words.len() || core_words.len() as u64 != core {
                mismatches.push(format!("n={n} m={m}: {} vs {all}, core {} vs {core}", words.len(), core_words.len()));
            }
        }
    }
    let anchor = enumerate_words(3, 3, WordMode::All, usize::MAX).0.len();
    Outcome {
        ok: mismatches.is_empty() && anchor == 62,
        detail: if mismatches.is_empty() {
            format!("n<=4, m<=3 exact; n=3 m=3 gives {anchor}")
        } else {
            mismatches.join("; ")
        },
    }
}

fn strip_timestamp(json: &str) -> String {
    let mut value: serde_json::Value = serde_json::from_str(json).unwrap();
    value.as_object_mut().unwrap().remove("timestamp_unix");
    serde_json::to_string_pretty(&value).unwrap()
}

fn reports(threads: usize) -> Vec<String> {
    let pool = rayon::ThreadPoolBuilder::new().num_threads(threads).build().unwrap();
    pool.install(|| {
        let tol = Tolerances::default();
        let mut out = Vec::new();
        let mut push = |tuple: &HermitianTuple, k: usize, seed: u64| {
            let input = InputEcho {
                path: "<memory>".into(),
                dim: tuple.dim(),
                m: tuple.len(),
                k,
                seed,
            };
            let opts = AnalyzeOptions { seed, ..AnalyzeOptions::default() };
            let a = analyze_report(tuple, input.clone(), &opts);
            let d = decompose_report(tuple, input, &tol);
            out.push(strip_timestamp(&serde_json::to_string(&a).unwrap()));
            out.push(strip_timestamp(&serde_json::to_string(&d).unwrap()));
        };
        for (n, k, m) in round_trip_shapes() {
            for seed in 0..ROUND_TRIP_SEEDS {
                push(&gen_decomposable(n, k, m, seed).unwrap().0, k, seed);
            }
        }
        for seed in 0..NEGATIVE_SEEDS {
            push(&gen_conjugate_negative(seed).unwrap().0, 2, seed);
        }
        out
    })
}

fn determinism() -> Outcome {
    let first = reports(1);
    let second = reports(4);
    let differing = first.iter().zip(&second).filter(|(a, b)| a != b).count();
    let bytes: usize = first.iter().map(String::len).sum();
    Outcome {
        ok: differing == 0 && first.len() == second.len(),
        detail: format!("{} reports ({bytes} bytes), 1 vs 4 threads, {differing} differ", first.len()),
    }
}

fn timed(budget: Option<Duration>, f: impl FnOnce() -> Outcome) -> Outcome {
    let start = Instant::now();
    let mut out = f();
    let elapsed = start.elapsed();
    out.detail = format!("{}; {:.2}s", out.detail, elapsed.as_secs_f64());
    if let Some(b) = budget {
        if elapsed > b {
            out.ok = false;
            out.detail = format!("{} exceeds {}s budget", out.detail, b.as_secs());
        }
    }
    out
}

fn main() {
    let criteria: Vec<(&str, Box<dyn FnOnce() -> Outcome>)> = vec![
        ("1 projection formula", Box::new(|| timed(Some(PROJECTION_BUDGET), projection_formula))),
        ("2 spectrum transformation law", Box::new(|| timed(Some(TRANSFORM_BUDGET), transform_law))),
        (
            "3 round trip",
            Box::new(|| {
                timed(Some(ROUND_TRIP_BUDGET), || {
                    let s = round_trip();
                    Outcome {
                        ok: s.failures.is_empty() && s.worst_residual_ratio <= RESIDUAL_TOL && s.worst_charpoly <= REDUCED_CHARPOLY_TOL,
                        detail: format!(
                            "{} instances, residual / max‖A‖ {:.2e}, reduced determinant diff {:.2e}{}",
                            s.instances,
                            s.worst_residual_ratio,
                            s.worst_charpoly,
                            if s.failures.is_empty() { String::new() } else { format!(", failures: {}", s.failures.join("; ")) }
                        ),
                    }
                })
            }),
        ),
        ("4 negative detection", Box::new(|| timed(Some(NEGATIVE_BUDGET), negative_detection))),
        ("5 first-order local identity", Box::new(|| timed(None, first_order_identity))),
        ("6 cycle identity", Box::new(|| timed(None, cycle_identity))),
        ("7 analytic derivative anchor", Box::new(|| timed(None, derivative_anchor))),
        ("8 word-count conformance", Box::new(|| timed(None, word_counts))),
        ("9 determinism across thread counts", Box::new(|| timed(None, determinism))),
    ];
    let mut failed = 0;
    for (name, run) in criteria {
        let outcome = run();
        if !outcome.ok {
            failed += 1;
        }
        println!("{} criterion {name}: {}", if outcome.ok { "PASS" } else { "FAIL" }, outcome.detail);
    }
    if failed > 0 {
        println!("{failed} acceptance criteria failed");
        std::process::exit(1);
    }
    println!("all acceptance criteria passed");
}
