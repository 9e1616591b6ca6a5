//! Implementations of the CLI subcommands.

use std::fs;
use std::io::Write as _;
use std::path::Path;

use hiwa::datagen::{self, GenSpec, SubspaceMode};
use hiwa::diagnostics::{self, MetricReport, PairwiseCostParams};
use hiwa::error::{Error, Result};
use hiwa::io::{self, DiagnosticsSection, ResultFile, TruthFile};
use hiwa::solver::{self, AlignmentMode, SolverConfig};

use crate::{AlignArgs, BenchmarkArgs, ExperimentArg, GenerateArgs, ModeArg, SubspaceModeArg, SweepArgs};

impl From<SubspaceModeArg> for SubspaceMode {
    fn from(arg: SubspaceModeArg) -> Self {
        match arg {
            SubspaceModeArg::Random => SubspaceMode::Random,
            SubspaceModeArg::EquallySpaced => SubspaceMode::EquallySpaced,
        }
    }
}

impl From<ModeArg> for AlignmentMode {
    fn from(arg: ModeArg) -> Self {
        match arg {
            ModeArg::Hiwa => AlignmentMode::Hierarchical,
            ModeArg::Wa => AlignmentMode::Flat,
        }
    }
}

pub fn generate(args: GenerateArgs) -> Result<()> {
    let spec = GenSpec {
        clusters: args.clusters,
        intrinsic_dim: args.intrinsic_dim,
        ambient_dim: args.ambient_dim,
        samples_per_cluster: args.samples,
        subspace_mode: args.subspace_mode.into(),
        noise_sigma: args.noise,
        permute_clusters: args.permute,
        seed: args.seed,
        shared_samples: false,
        identity_transform: false,
    };
    let (x, y, truth) = datagen::generate(&spec)?;
    io::save_dataset(&x, &args.out_x)?;
    io::save_dataset(&y, &args.out_y)?;
    fs::write(&args.out_truth, TruthFile::from_truth(&truth).to_json()?)?;
    Ok(())
}

pub fn align(args: AlignArgs) -> Result<()> {
    if args.diagnostics && args.truth.is_none() {
        return Err(Error::InvalidInput(
            "--diagnostics needs --truth to know the intrinsic cluster dimensions".into(),
        ));
    }
    let x = io::load_dataset(&args.x_file)?;
    let y = io::load_dataset(&args.y_file)?;
    let truth = args
        .truth
        .as_deref()
        .map(|path| -> Result<_> { TruthFile::from_json(&fs::read_to_string(path)?)?.to_truth() })
        .transpose()?;

    let config = SolverConfig {
        gamma1: args.gamma1,
        gamma2: args.gamma2,
        mu: args.mu,
        outer_max_iters: args.outer_iters,
        outer_tol: args.tol,
        inner_max_iters: args.inner_iters,
        inner_tol: args.inner_tol,
        seed: args.seed,
        threads: args.threads,
        mode: args.mode.into(),
        ..SolverConfig::default()
    };
    let result = solver::solve(&x, &y, &config)?;

    let metrics = match &truth {
        Some(truth) if truth.p_star.nrows() == result.correspondence.nrows() => Some(MetricReport {
            alignment_error: diagnostics::alignment_error(&result.transform, &truth.r_star, &x.pooled())?,
            correspondence_error: diagnostics::correspondence_error(&result.correspondence, &truth.p_star)?,
        }),
        // Flat mode collapses P to 1×1; only the transform metric applies.
        Some(truth) => Some(MetricReport {
            alignment_error: diagnostics::alignment_error(&result.transform, &truth.r_star, &x.pooled())?,
            correspondence_error: f64::NAN,
        }),
        None => None,
    };
    // NaN is not representable in the result file; drop the metric pair
    // when the correspondence shapes do not line up.
    let metrics = metrics.filter(|m| m.correspondence_error.is_finite());

    let diag_section = if args.diagnostics {
        let truth = truth.as_ref().expect("checked above");
        let dims_x: Vec<usize> = truth.subspace_bases.iter().map(|b| b.ncols()).collect();
        let dims_y: Vec<usize> = truth.permutation.iter().map(|&p| truth.subspace_bases[p].ncols()).collect();
        let params = PairwiseCostParams {
            restarts: args.restarts,
            seed: args.seed,
            ..PairwiseCostParams::default()
        };
        let estimate = diagnostics::estimate_pairwise_costs(&x, &y, &params)?;
        let disambiguity =
            diagnostics::disambiguity_check(&x, &y, &estimate.costs, &dims_x, &dims_y, args.delta)?;
        let perturbation = diagnostics::perturbation_report(&x, &y, &estimate.diagonal_couplings)?;
        Some(DiagnosticsSection {
            disambiguity: Some(io::DisambiguityJson::from_report(&disambiguity)),
            perturbation: Some(io::PerturbationJson::from_report(&perturbation)),
        })
    } else {
        None
    };

    let file = ResultFile::from_result(&result, metrics, diag_section);
    write_or_print(args.out.as_deref(), &file.to_json()?)
}

pub fn benchmark(args: BenchmarkArgs) -> Result<()> {
    let mut csv = String::from("clusters,threads,trial,wall_time_sec\n");
    for &clusters in &args.clusters_list {
        for trial in 0..args.trials {
            let spec = GenSpec {
                clusters,
                intrinsic_dim: args.intrinsic_dim,
                ambient_dim: args.ambient_dim,
                samples_per_cluster: args.samples,
                subspace_mode: SubspaceMode::Random,
                noise_sigma: 0.0,
                permute_clusters: true,
                seed: args.seed.wrapping_add((clusters * 10_000 + trial) as u64),
                shared_samples: false,
                identity_transform: false,
            };
            let (x, y, _) = datagen::generate(&spec)?;
            for &threads in &args.threads_list {
                // Same dataset and solver seed across thread counts: the
                // arithmetic is identical, only the wall time differs.
                let config = SolverConfig {
                    outer_max_iters: args.outer_iters,
                    outer_tol: 1e-12,
                    seed: trial as u64,
                    threads,
                    ..SolverConfig::default()
                };
                let result = solver::solve(&x, &y, &config)?;
                csv.push_str(&format!("{clusters},{threads},{trial},{}\n", result.wall_time_sec));
            }
        }
    }
    write_or_print(args.out.as_deref(), &csv)
}

struct TrialRow {
    experiment: &'static str,
    algorithm: &'static str,
    subspace_mode: &'static str,
    clusters: usize,
    intrinsic_dim: usize,
    ambient_dim: usize,
    samples: usize,
    trial: usize,
    seed: u64,
    alignment_error: f64,
    correspondence_error: f64,
    converged: bool,
    iterations: usize,
    wall_time_sec: f64,
}

const RAW_HEADER: &str = "experiment,algorithm,subspace_mode,clusters,intrinsic_dim,ambient_dim,samples,trial,seed,alignment_error,correspondence_error,converged,iterations,wall_time_sec\n";

impl TrialRow {
    fn csv(&self) -> String {
        format!(
            "{},{},{},{},{},{},{},{},{},{},{},{},{},{}\n",
            self.experiment,
            self.algorithm,
            self.subspace_mode,
            self.clusters,
            self.intrinsic_dim,
            self.ambient_dim,
            self.samples,
            self.trial,
            self.seed,
            self.alignment_error,
            self.correspondence_error,
            self.converged,
            self.iterations,
            self.wall_time_sec,
        )
    }

    /// Columns identifying one experimental configuration.
    fn group_key(&self) -> String {
        format!(
            "{},{},{},{},{},{},{}",
            self.experiment,
            self.algorithm,
            self.subspace_mode,
            self.clusters,
            self.intrinsic_dim,
            self.ambient_dim,
            self.samples
        )
    }
}

pub fn sweep(args: SweepArgs) -> Result<()> {
    let mut rows: Vec<TrialRow> = Vec::new();
    match args.experiment {
        ExperimentArg::WorstVsRandom => {
            let samples = args.samples_list.clone().unwrap_or_else(|| vec![25, 100]);
            for &mode in &[SubspaceMode::Random, SubspaceMode::EquallySpaced] {
                for &n in &samples {
                    for trial in 0..args.trials {
                        rows.push(run_trial(
                            "worst_vs_random",
                            AlignmentMode::Hierarchical,
                            mode,
                            args.clusters,
                            2,
                            6,
                            n,
                            trial,
                            &args,
                        )?);
                    }
                }
            }
        }
        ExperimentArg::DimSampleSweep => {
            let samples = args.samples_list.clone().unwrap_or_else(|| vec![12, 25, 50, 100, 200]);
            let ambient: Vec<usize> = match &args.ambient_dims_list {
                Some(list) => {
                    if list.len() != args.dims_list.len() {
                        return Err(Error::InvalidInput(format!(
                            "--ambient-dims-list needs {} entries to match --dims-list",
                            args.dims_list.len()
                        )));
                    }
                    list.clone()
                }
                None => args.dims_list.iter().map(|d| d + 4).collect(),
            };
            for (&d, &big_d) in args.dims_list.iter().zip(&ambient) {
                for &n in &samples {
                    for trial in 0..args.trials {
                        rows.push(run_trial(
                            "dim_sample_sweep",
                            AlignmentMode::Hierarchical,
                            SubspaceMode::Random,
                            args.clusters,
                            d,
                            big_d,
                            n,
                            trial,
                            &args,
                        )?);
                    }
                }
            }
        }
        ExperimentArg::Ablation => {
            let n = args.samples_list.as_ref().map_or(50, |list| list[0]);
            for &algorithm in &[AlignmentMode::Hierarchical, AlignmentMode::Flat] {
                for trial in 0..args.trials {
                    rows.push(run_trial(
                        "ablation",
                        algorithm,
                        SubspaceMode::Random,
                        args.clusters,
                        2,
                        6,
                        n,
                        trial,
                        &args,
                    )?);
                }
            }
        }
    }

    let mut raw = String::from(RAW_HEADER);
    for row in &rows {
        raw.push_str(&row.csv());
    }
    write_or_print(args.out.as_deref(), &raw)?;

    let summary = summarize(&rows);
    match args.summary_out.as_deref() {
        Some(path) => fs::write(path, summary)?,
        None => eprint!("{summary}"),
    }
    Ok(())
}

#[allow(clippy::too_many_arguments)]
fn run_trial(
    experiment: &'static str,
    algorithm: AlignmentMode,
    subspace_mode: SubspaceMode,
    clusters: usize,
    intrinsic_dim: usize,
    ambient_dim: usize,
    samples: usize,
    trial: usize,
    args: &SweepArgs,
) -> Result<TrialRow> {
    // Dataset seeds depend only on (base seed, trial): paired algorithms
    // and subspace modes see identical data where shapes agree.
    let data_seed = args.seed.wrapping_add(trial as u64);
    let spec = GenSpec {
        clusters,
        intrinsic_dim,
        ambient_dim,
        samples_per_cluster: samples,
        subspace_mode,
        noise_sigma: 0.0,
        permute_clusters: true,
        seed: data_seed,
        shared_samples: false,
        identity_transform: false,
    };
    let (x, y, truth) = datagen::generate(&spec)?;
    let config = SolverConfig {
        seed: trial as u64,
        threads: args.threads,
        mode: algorithm,
        ..SolverConfig::default()
    };
    let result = solver::solve(&x, &y, &config)?;
    let alignment_error = diagnostics::alignment_error(&result.transform, &truth.r_star, &x.pooled())?;
    let correspondence_error = match algorithm {
        AlignmentMode::Hierarchical => {
            diagnostics::correspondence_error(&result.correspondence, &truth.p_star)?
        }
        // The flat baseline has a 1×1 correspondence; the metric is not
        // defined against the S×S truth.
        AlignmentMode::Flat => f64::NAN,
    };
    Ok(TrialRow {
        experiment,
        algorithm: match algorithm {
            AlignmentMode::Hierarchical => "hiwa",
            AlignmentMode::Flat => "wa",
        },
        subspace_mode: match subspace_mode {
            SubspaceMode::Random => "random",
            SubspaceMode::EquallySpaced => "equally_spaced",
        },
        clusters,
        intrinsic_dim,
        ambient_dim,
        samples,
        trial,
        seed: data_seed,
        alignment_error,
        correspondence_error,
        converged: result.converged,
        iterations: result.iterations,
        wall_time_sec: result.wall_time_sec,
    })
}

/// Percentile with linear interpolation between closest ranks.
fn percentile(sorted: &[f64], p: f64) -> f64 {
    let n = sorted.len();
    if n == 1 {
        return sorted[0];
    }
    let pos = p / 100.0 * (n - 1) as f64;
    let lo = pos.floor() as usize;
    let hi = pos.ceil() as usize;
    let frac = pos - lo as f64;
    sorted[lo] * (1.0 - frac) + sorted[hi] * frac
}

fn summarize(rows: &[TrialRow]) -> String {
    let mut out = String::from(
        "experiment,algorithm,subspace_mode,clusters,intrinsic_dim,ambient_dim,samples,metric,p25,p50,p75\n",
    );
    let mut groups: Vec<String> = Vec::new();
    for row in rows {
        let key = row.group_key();
        if !groups.contains(&key) {
            groups.push(key);
        }
    }
    for key in groups {
        for (metric, get) in [
            ("alignment_error", (|r: &TrialRow| r.alignment_error) as fn(&TrialRow) -> f64),
            ("correspondence_error", |r: &TrialRow| r.correspondence_error),
        ] {
            let mut values: Vec<f64> = rows
                .iter()
                .filter(|r| r.group_key() == key)
                .map(get)
                .filter(|v| v.is_finite())
                .collect();
            if values.is_empty() {
                continue;
            }
            values.sort_by(|a, b| a.partial_cmp(b).unwrap());
            out.push_str(&format!(
                "{key},{metric},{},{},{}\n",
                percentile(&values, 25.0),
                percentile(&values, 50.0),
                percentile(&values, 75.0),
            ));
        }
    }
    out
}

fn write_or_print(path: Option<&Path>, content: &str) -> Result<()> {
    match path {
        Some(path) => fs::write(path, content)?,
        None => {
            std::io::stdout().write_all(content.as_bytes())?;
        }
    }
    Ok(())
}
