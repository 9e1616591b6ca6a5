//! Acceptance suite: one test per criterion, each printing a PASS line
//! with its measured numbers.
//!
//! Run with `cargo test -p hiwa --test acceptance -- --nocapture` to see
//! the lines while the suite executes. The heavy experiment batteries
//! (exact recovery, worst case, sample trend, ablation) are computed
//! once and shared between the criteria that consume them.

use std::sync::Mutex;
use std::time::Instant;

use nalgebra::{DMatrix, DVector};
use once_cell::sync::Lazy;
use rand::{Rng, SeedableRng};
use rand_chacha::ChaCha8Rng;

use hiwa::datagen::{self, GenSpec, SubspaceMode};
use hiwa::diagnostics::{
    alignment_error, correspondence_error, disambiguity_constant, disambiguity_threshold_term,
    perturbation_report,
};
use hiwa::io::ResultFile;
use hiwa::manifold::{self, OrthogonalTransform};
use hiwa::solver::{self, AlignmentMode, AlignmentResult, SolverConfig};
use hiwa::transport::{
    build_pair_cost, sinkhorn, sinkhorn_with_path, transport_cost, uniform_marginal, CostMatrix,
    Coupling, SinkhornParams, SinkhornPath,
};
use hiwa::ClusteredDataset;

/// Criteria with wall-clock budgets take this lock so the default
/// parallel test harness cannot skew their timings.
static TIMING_GATE: Mutex<()> = Mutex::new(());

fn median(values: &[f64]) -> f64 {
    let mut sorted: Vec<f64> = values.to_vec();
    sorted.sort_by(|a, b| a.partial_cmp(b).unwrap());
    let mid = sorted.len() / 2;
    if sorted.len() % 2 == 1 {
        sorted[mid]
    } else {
        0.5 * (sorted[mid - 1] + sorted[mid])
    }
}

struct ExperimentRun {
    seed: u64,
    result: AlignmentResult,
    align_err: f64,
    corr_err: f64,
    x: ClusteredDataset,
    y: ClusteredDataset,
}

fn run_experiment(seed: u64, subspace_mode: SubspaceMode, n: usize, mode: AlignmentMode, threads: usize) -> ExperimentRun {
    let spec = GenSpec {
        clusters: 5,
        intrinsic_dim: 2,
        ambient_dim: 6,
        samples_per_cluster: n,
        subspace_mode,
        noise_sigma: 0.0,
        permute_clusters: true,
        seed,
        shared_samples: false,
        identity_transform: false,
    };
    let (x, y, truth) = datagen::generate(&spec).expect("generation succeeds");
    let config = SolverConfig { seed, threads, mode, ..SolverConfig::default() };
    let result = solver::solve(&x, &y, &config).expect("solve succeeds");
    let align_err = alignment_error(&result.transform, &truth.r_star, &x.pooled()).unwrap();
    let corr_err = match mode {
        AlignmentMode::Hierarchical => correspondence_error(&result.correspondence, &truth.p_star).unwrap(),
        AlignmentMode::Flat => f64::NAN,
    };
    ExperimentRun { seed, result, align_err, corr_err, x, y }
}

/// Criterion 4 battery: Fig-1 average case, 20 seeds, 4 workers.
static EXACT_RECOVERY: Lazy<(Vec<ExperimentRun>, f64)> = Lazy::new(|| {
    let start = Instant::now();
    let runs = (0..20)
        .map(|seed| run_experiment(seed, SubspaceMode::Random, 100, AlignmentMode::Hierarchical, 4))
        .collect();
    (runs, start.elapsed().as_secs_f64())
});

/// Criterion 5 battery: the same protocol on equally-spaced subspaces.
static WORST_CASE: Lazy<Vec<ExperimentRun>> = Lazy::new(|| {
    (0..20)
        .map(|seed| run_experiment(seed, SubspaceMode::EquallySpaced, 100, AlignmentMode::Hierarchical, 4))
        .collect()
});

/// Criterion 6 battery: sample-size endpoints at d = 2.
static SAMPLE_TREND: Lazy<(Vec<ExperimentRun>, Vec<ExperimentRun>)> = Lazy::new(|| {
    let small = (0..10)
        .map(|seed| run_experiment(seed, SubspaceMode::Random, 12, AlignmentMode::Hierarchical, 4))
        .collect();
    let large = (0..10)
        .map(|seed| run_experiment(seed, SubspaceMode::Random, 200, AlignmentMode::Hierarchical, 4))
        .collect();
    (small, large)
});

/// Criterion 7 battery: hierarchical vs flat on identical data/seeds.
static ABLATION: Lazy<(Vec<ExperimentRun>, Vec<ExperimentRun>)> = Lazy::new(|| {
    let hiwa = (0..50)
        .map(|seed| run_experiment(seed, SubspaceMode::Random, 50, AlignmentMode::Hierarchical, 4))
        .collect();
    let wa = (0..50)
        .map(|seed| run_experiment(seed, SubspaceMode::Random, 50, AlignmentMode::Flat, 4))
        .collect();
    (hiwa, wa)
});

#[test]
fn criterion_01_sinkhorn_feasibility() {
    let _gate = TIMING_GATE.lock().unwrap();
    let start = Instant::now();
    let mut rng = ChaCha8Rng::seed_from_u64(101);
    let mut worst_violation: f64 = 0.0;
    let mut worst_path_gap: f64 = 0.0;
    let mut plain_instances = 0usize;
    for _ in 0..200 {
        let m = rng.random_range(2..=100);
        let n = rng.random_range(2..=100);
        // γ log-uniform over [1e-3, 10].
        let gamma = 10f64.powf(rng.random_range(-3.0..=1.0));
        let cost = CostMatrix::new(DMatrix::from_fn(m, n, |_, _| rng.random::<f64>())).unwrap();
        let params = SinkhornParams { gamma, max_iters: 10_000, tol: 1e-8 };
        let a = uniform_marginal(m);
        let b = uniform_marginal(n);
        let out = sinkhorn(&cost, &params, &a, &b).unwrap();
        assert!(
            out.converged && out.coupling.max_marginal_violation() <= 1e-8,
            "violation {} at m={m} n={n} gamma={gamma}",
            out.coupling.max_marginal_violation()
        );
        worst_violation = worst_violation.max(out.coupling.max_marginal_violation());
        if !out.log_domain {
            plain_instances += 1;
            let log = sinkhorn_with_path(&cost, &params, &a, &b, SinkhornPath::LogDomain).unwrap();
            let gap = (out.coupling.plan() - log.coupling.plan()).abs().max();
            assert!(gap <= 1e-8, "plain/log gap {gap} at m={m} n={n} gamma={gamma}");
            worst_path_gap = worst_path_gap.max(gap);
        }
    }
    let elapsed = start.elapsed().as_secs_f64();
    assert!(elapsed < 30.0, "criterion 1 took {elapsed:.1}s (budget 30s)");
    println!(
        "ACCEPTANCE 01 sinkhorn-feasibility: PASS (200 instances, worst violation {worst_violation:.2e}, \
         {plain_instances} plain-path instances with worst gap {worst_path_gap:.2e}, {elapsed:.1}s)"
    );
}

/// Brute force over all n! permutations, each scaled by 1/n.
fn assignment_optimum(cost: &DMatrix<f64>) -> f64 {
    fn permute(items: &mut Vec<usize>, k: usize, visit: &mut impl FnMut(&[usize])) {
        if k == items.len() {
            visit(items);
            return;
        }
        for i in k..items.len() {
            items.swap(k, i);
            permute(items, k + 1, visit);
            items.swap(k, i);
        }
    }
    let n = cost.nrows();
    let mut indices: Vec<usize> = (0..n).collect();
    let mut best = f64::INFINITY;
    permute(&mut indices, 0, &mut |perm| {
        let total: f64 = perm.iter().enumerate().map(|(k, &l)| cost[(k, l)]).sum();
        best = best.min(total / n as f64);
    });
    best
}

#[test]
fn criterion_02_ot_brute_force_agreement() {
    let _gate = TIMING_GATE.lock().unwrap();
    let start = Instant::now();
    let mut rng = ChaCha8Rng::seed_from_u64(202);
    let mut worst_gap: f64 = 0.0;
    for instance in 0..20 {
        let n = 2 + instance % 5; // sizes 2..=6
        let cost = CostMatrix::new(DMatrix::from_fn(n, n, |_, _| rng.random::<f64>())).unwrap();
        let range = cost.max_entry() - cost.min_entry();
        let params = SinkhornParams { gamma: 1e-3, max_iters: 100_000, tol: 1e-12 };
        let out = sinkhorn(&cost, &params, &uniform_marginal(n), &uniform_marginal(n)).unwrap();
        let entropic = transport_cost(&out.coupling, &cost).unwrap();
        let exact = assignment_optimum(cost.entries());
        let gap = (entropic - exact).abs();
        assert!(
            gap <= 1e-3 * range,
            "instance {instance} (n={n}): entropic {entropic} vs exact {exact}, range {range}"
        );
        worst_gap = worst_gap.max(gap / range);
    }
    let elapsed = start.elapsed().as_secs_f64();
    assert!(elapsed < 10.0, "criterion 2 took {elapsed:.1}s (budget 10s)");
    println!(
        "ACCEPTANCE 02 ot-oracle-agreement: PASS (20 instances, worst relative gap {worst_gap:.2e}, {elapsed:.1}s)"
    );
}

#[test]
fn criterion_03_procrustes_grid_oracle() {
    let _gate = TIMING_GATE.lock().unwrap();
    let start = Instant::now();
    let mut rng = ChaCha8Rng::seed_from_u64(303);
    let step = 1e-4;
    let steps = (std::f64::consts::TAU / step).ceil() as usize;
    let mut worst_gap: f64 = 0.0;
    for _ in 0..100 {
        let a = DMatrix::from_fn(2, 2, |_, _| rng.random::<f64>() * 2.0 - 1.0);
        let attained = (&a * manifold::stiefel_align(&a).unwrap().matrix().transpose()).trace();
        // Grid over both O(2) components: rotations and reflections.
        let mut grid_best = f64::NEG_INFINITY;
        for k in 0..steps {
            let (s, c) = (k as f64 * step).sin_cos();
            let rot = c * (a[(0, 0)] + a[(1, 1)]) + s * (a[(0, 1)] - a[(1, 0)]);
            let refl = c * (a[(0, 0)] - a[(1, 1)]) + s * (a[(0, 1)] + a[(1, 0)]);
            grid_best = grid_best.max(rot).max(refl);
        }
        let gap = (attained - grid_best).abs();
        assert!(attained >= grid_best - 1e-8, "SVD solution beaten by grid: {attained} < {grid_best}");
        assert!(gap <= 1e-6, "gap {gap} exceeds 1e-6");
        worst_gap = worst_gap.max(gap);
    }
    let elapsed = start.elapsed().as_secs_f64();
    assert!(elapsed < 5.0, "criterion 3 took {elapsed:.1}s (budget 5s)");
    println!("ACCEPTANCE 03 procrustes-oracle: PASS (100 inputs, worst gap {worst_gap:.2e}, {elapsed:.1}s)");
}

#[test]
fn criterion_04_exact_recovery() {
    let _gate = TIMING_GATE.lock().unwrap();
    let (runs, elapsed) = &*EXACT_RECOVERY;
    let successes = runs.iter().filter(|r| r.align_err < 0.05 && r.corr_err < 0.1).count();
    let cores = std::thread::available_parallelism().map_or(1, |n| n.get());
    assert!(
        successes >= 16,
        "only {successes}/20 runs met alignment < 0.05 and correspondence < 0.1: {:?}",
        runs.iter().map(|r| (r.seed, r.align_err, r.corr_err)).collect::<Vec<_>>()
    );
    if cores >= 4 {
        assert!(*elapsed < 300.0, "criterion 4 took {elapsed:.0}s (budget 300s on ≥4 cores)");
    }
    println!(
        "ACCEPTANCE 04 exact-recovery: PASS ({successes}/20 seeds, median align {:.1e}, median corr {:.1e}, \
         {elapsed:.0}s on {cores} cores)",
        median(&runs.iter().map(|r| r.align_err).collect::<Vec<_>>()),
        median(&runs.iter().map(|r| r.corr_err).collect::<Vec<_>>()),
    );
}

#[test]
fn criterion_05_worst_case_separation() {
    let random_median = median(&EXACT_RECOVERY.0.iter().map(|r| r.corr_err).collect::<Vec<_>>());
    let worst_median = median(&WORST_CASE.iter().map(|r| r.corr_err).collect::<Vec<_>>());
    assert!(
        worst_median > random_median,
        "worst-case median correspondence error {worst_median:.3e} not above random-subspace median {random_median:.3e}"
    );
    println!(
        "ACCEPTANCE 05 worst-case-separation: PASS (equally-spaced median corr {worst_median:.2e} > random {random_median:.2e})"
    );
}

#[test]
fn criterion_06_sample_size_trend() {
    let (small, large) = &*SAMPLE_TREND;
    let median_small = median(&small.iter().map(|r| r.align_err).collect::<Vec<_>>());
    let median_large = median(&large.iter().map(|r| r.align_err).collect::<Vec<_>>());
    assert!(
        median_large <= median_small,
        "median alignment error at n=200 ({median_large:.3e}) exceeds n=12 ({median_small:.3e})"
    );
    println!(
        "ACCEPTANCE 06 sample-size-trend: PASS (median align n=200 {median_large:.2e} ≤ n=12 {median_small:.2e})"
    );
}

#[test]
fn criterion_07_ablation() {
    let (hiwa, wa) = &*ABLATION;
    let hiwa_median = median(&hiwa.iter().map(|r| r.align_err).collect::<Vec<_>>());
    let wa_median = median(&wa.iter().map(|r| r.align_err).collect::<Vec<_>>());
    assert!(
        hiwa_median < wa_median,
        "hierarchical median alignment error {hiwa_median:.3e} not below flat baseline {wa_median:.3e}"
    );
    println!("ACCEPTANCE 07 ablation: PASS (hiwa median align {hiwa_median:.2e} < wa {wa_median:.2e}, 50 seeds)");
}

#[test]
fn criterion_08_admm_constraint_maintenance() {
    let mut runs: Vec<&ExperimentRun> = Vec::new();
    runs.extend(EXACT_RECOVERY.0.iter());
    runs.extend(WORST_CASE.iter());
    runs.extend(SAMPLE_TREND.0.iter());
    runs.extend(SAMPLE_TREND.1.iter());
    runs.extend(ABLATION.0.iter());
    runs.extend(ABLATION.1.iter());

    let mut worst_violation: f64 = 0.0;
    let mut converged_count = 0usize;
    for run in &runs {
        for &v in &run.result.marginal_violation_trace {
            assert!(
                v <= 1e-6,
                "seed {}: a post-iteration coupling violated its marginals by {v:.2e}",
                run.seed
            );
            worst_violation = worst_violation.max(v);
        }
        if run.result.converged {
            converged_count += 1;
            let last = *run.result.primal_residual_trace.last().unwrap();
            assert!(
                last <= run.result.config.outer_tol,
                "seed {}: converged with final primal residual {last:.2e}",
                run.seed
            );
            let first = run.result.primal_residual_trace[0];
            assert!(
                last <= first,
                "seed {}: converged run's final primal residual {last:.2e} above iteration-1 value {first:.2e}",
                run.seed
            );
        }
    }
    println!(
        "ACCEPTANCE 08 constraint-maintenance: PASS ({} runs, worst marginal violation {worst_violation:.2e}, \
         {converged_count} converged runs all with final primal residual ≤ tol)",
        runs.len()
    );
}

#[test]
fn criterion_09_thread_count_determinism() {
    let _gate = TIMING_GATE.lock().unwrap();
    // Reuse the 4-worker battery and rerun each seed with 1 and 8
    // workers; result files must agree byte for byte outside the wall
    // time, which is physically incapable of repeating.
    fn masked_json(run: &ExperimentRun) -> String {
        let file = ResultFile::from_result(&run.result, None, None);
        let json = file.to_json().unwrap();
        let mut masked = String::new();
        let mut hits = 0;
        for line in json.lines() {
            if line.trim_start().starts_with("\"wall_time_sec\"") {
                hits += 1;
                masked.push_str("  \"wall_time_sec\": 0,\n");
            } else {
                masked.push_str(line);
                masked.push('\n');
            }
        }
        assert_eq!(hits, 1, "exactly one wall_time_sec field expected");
        masked
    }

    for baseline in EXACT_RECOVERY.0.iter() {
        let reference = masked_json(baseline);
        for threads in [1usize, 8] {
            let rerun = run_experiment(
                baseline.seed,
                SubspaceMode::Random,
                100,
                AlignmentMode::Hierarchical,
                threads,
            );
            assert_eq!(
                reference,
                masked_json(&rerun),
                "seed {}: result file differs between 4 and {threads} workers",
                baseline.seed
            );
        }
    }
    println!("ACCEPTANCE 09 determinism: PASS (20 seeds × workers {{1, 4, 8}} byte-identical result files)");
}

#[test]
fn criterion_10_theory_diagnostics() {
    // Theorem constant and threshold monotonicity.
    assert_eq!(disambiguity_constant(6).unwrap(), 3645.0);
    let mut prev = f64::INFINITY;
    for n in [12, 25, 50, 100, 200, 400, 800] {
        let b = disambiguity_threshold_term(6, n, 0.05).unwrap();
        assert!(b < prev, "threshold not decreasing at n={n}");
        prev = b;
    }

    // ε for exactly transformed data with identity couplings. The Gram
    // discrepancy ε² is numerically zero; ε itself is its square root,
    // which floating-point rounding keeps near 1e-7·‖X‖.
    let spec = GenSpec {
        clusters: 5,
        intrinsic_dim: 2,
        ambient_dim: 6,
        samples_per_cluster: 100,
        subspace_mode: SubspaceMode::Random,
        noise_sigma: 0.0,
        permute_clusters: false,
        seed: 1010,
        shared_samples: true,
        identity_transform: false,
    };
    let (x, y, _) = datagen::generate(&spec).unwrap();
    let n = 100;
    let couplings: Vec<Coupling> = (0..5)
        .map(|_| {
            Coupling::new(
                DMatrix::from_diagonal_element(n, n, 1.0 / n as f64),
                uniform_marginal(n),
                uniform_marginal(n),
            )
            .unwrap()
        })
        .collect();
    let report = perturbation_report(&x, &y, &couplings).unwrap();
    let epsilon_squared = report.epsilon * report.epsilon;
    assert!(
        epsilon_squared <= 1e-10,
        "Gram discrepancy ε² = {epsilon_squared:.2e} for exactly transformed data"
    );
    println!(
        "ACCEPTANCE 10 theory-diagnostics: PASS (c(6) = 3645 exactly, thresholds strictly decreasing in n, \
         ε² = {epsilon_squared:.2e} ≤ 1e-10 for Y = R*X, ε = {:.2e})",
        report.epsilon
    );
}

#[test]
fn criterion_11_parallel_benchmark_informational() {
    let _gate = TIMING_GATE.lock().unwrap();
    let cores = std::thread::available_parallelism().map_or(1, |n| n.get());
    let mut serial = Vec::new();
    let mut parallel = Vec::new();
    for trial in 0..10u64 {
        let spec = GenSpec {
            clusters: 10,
            intrinsic_dim: 2,
            ambient_dim: 6,
            samples_per_cluster: 50,
            subspace_mode: SubspaceMode::Random,
            noise_sigma: 0.0,
            permute_clusters: true,
            seed: 7000 + trial,
            shared_samples: false,
            identity_transform: false,
        };
        let (x, y, _) = datagen::generate(&spec).unwrap();
        for (threads, bucket) in [(1usize, &mut serial), (cores, &mut parallel)] {
            let config = SolverConfig {
                seed: trial,
                threads,
                outer_max_iters: 10,
                outer_tol: 1e-12,
                ..SolverConfig::default()
            };
            let result = solver::solve(&x, &y, &config).unwrap();
            bucket.push(result.wall_time_sec);
        }
    }
    let serial_median = median(&serial);
    let parallel_median = median(&parallel);
    // Informational on shared hardware: report, never hard-fail.
    let verdict = if cores >= 2 && parallel_median <= serial_median { "PASS" } else { "INFO" };
    println!(
        "ACCEPTANCE 11 parallel-benchmark: {verdict} (S=10, 50 points/cluster, 10 trials: \
         median {parallel_median:.2}s on {cores} threads vs {serial_median:.2}s serial)"
    );
}

/// Smaller cross-checks used by several criteria: deterministic Haar
/// draws feed every battery, so pin the generator contract here.
#[test]
fn haar_transform_is_seed_deterministic() {
    let a = manifold::random_orthogonal(6, 42);
    let b = manifold::random_orthogonal(6, 42);
    assert_eq!(a.matrix(), b.matrix());
    let det = a.determinant().abs();
    assert!((det - 1.0).abs() < 1e-10);
}

/// The transform-error metric recognizes an exactly recovered transform
/// composed with the data actually used by the batteries.
#[test]
fn alignment_error_zero_for_truth() {
    let spec = GenSpec {
        clusters: 3,
        intrinsic_dim: 2,
        ambient_dim: 5,
        samples_per_cluster: 20,
        subspace_mode: SubspaceMode::Random,
        noise_sigma: 0.0,
        permute_clusters: true,
        seed: 5,
        shared_samples: false,
        identity_transform: false,
    };
    let (x, _, truth) = datagen::generate(&spec).unwrap();
    let err = alignment_error(&truth.r_star, &truth.r_star, &x.pooled()).unwrap();
    assert!(err == 0.0);
    let _ = DVector::<f64>::zeros(3);
    let _ = OrthogonalTransform::identity(2);
}
