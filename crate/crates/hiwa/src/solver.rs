//! The hierarchical alignment solver: a consensus ADMM scheme over all
//! cluster pairs.
//!
//! Every outer iteration runs four phases in a fixed order:
//!
//! 1. for all pairs `(i, j)` in parallel, alternate a Procrustes update
//!    of the pair transform `R_ij` with a Sinkhorn update of the pair
//!    coupling `Q_ij` (the coupling restarts from uniform each outer
//!    iteration; transforms and duals persist);
//! 2. refresh the cluster correspondence `P` by a Sinkhorn solve over
//!    the matrix of pair transport costs;
//! 3. pull all pair transforms toward a consensus
//!    `R ← stiefel_align(Σ_ij R_ij + Λ_ij)` with a fixed index-ascending
//!    reduction order;
//! 4. dual ascent `Λ_ij ← Λ_ij + R_ij − R`.
//!
//! Results are bit-identical for any worker-pool size: pair subproblems
//! are pure functions computed independently, and every reduction that
//! mixes their outputs runs in a deterministic order.

use std::time::Instant;

use nalgebra::DMatrix;
use serde::{Deserialize, Serialize};

use crate::dataset::ClusteredDataset;
use crate::error::{Error, Result};
use crate::manifold::{self, OrthogonalTransform};
use crate::transport::{
    build_pair_cost, neg_entropy, sinkhorn, transport_cost, uniform_marginal, Coupling,
    CostMatrix, SinkhornOutput, SinkhornParams,
};

/// Whether to exploit the cluster structure or pool everything into a
/// single cloud (the flat ablation baseline).
#[derive(Debug, Clone, Copy, PartialEq, Eq, Serialize, Deserialize)]
pub enum AlignmentMode {
    #[serde(rename = "hiwa")]
    Hierarchical,
    #[serde(rename = "wa")]
    Flat,
}

/// Solver configuration. `gamma1`/`gamma2` default (when `None`) to
/// `0.1·m̄` and `0.05·m̄` where `m̄` is the median entry of the initial
/// pooled cost matrix, making the entropic scales dataset-invariant.
#[derive(Debug, Clone, PartialEq)]
pub struct SolverConfig {
    /// Entropic weight of the cluster correspondence `P`.
    pub gamma1: Option<f64>,
    /// Entropic weight of the point couplings `Q_ij` (divided by `P_ij`
    /// inside each subproblem).
    pub gamma2: Option<f64>,
    /// ADMM consensus strength.
    pub mu: f64,
    pub outer_max_iters: usize,
    /// Convergence threshold on both `‖R⁽ᵗ⁺¹⁾ − R⁽ᵗ⁾‖_F` and the primal
    /// residual `max_ij ‖R_ij − R‖_F`.
    pub outer_tol: f64,
    /// Cap on the alternating `R_ij`/`Q_ij` sweeps inside one subproblem.
    pub inner_max_iters: usize,
    /// Threshold on `‖ΔR_ij‖_F` that ends the alternation.
    pub inner_tol: f64,
    pub sinkhorn_max_iters: usize,
    pub sinkhorn_tol: f64,
    /// Floor applied to `P_ij` where the subproblem divides by it.
    pub p_floor: f64,
    pub seed: u64,
    /// Worker-pool size for the pair subproblems; 0 picks the number of
    /// available cores. Has no effect on results.
    pub threads: usize,
    pub mode: AlignmentMode,
}

impl Default for SolverConfig {
    fn default() -> Self {
        Self {
            gamma1: None,
            gamma2: None,
            mu: 0.1,
            outer_max_iters: 300,
            outer_tol: 1e-6,
            inner_max_iters: 30,
            inner_tol: 1e-5,
            sinkhorn_max_iters: 1000,
            sinkhorn_tol: 1e-9,
            p_floor: 1e-6,
            seed: 0,
            threads: 0,
            mode: AlignmentMode::Hierarchical,
        }
    }
}

impl SolverConfig {
    pub fn validate(&self) -> Result<()> {
        let positive = [
            ("mu", self.mu),
            ("outer_tol", self.outer_tol),
            ("inner_tol", self.inner_tol),
            ("sinkhorn_tol", self.sinkhorn_tol),
            ("p_floor", self.p_floor),
        ];
        for (name, v) in positive {
            if !(v > 0.0 && v.is_finite()) {
                return Err(Error::InvalidInput(format!("{name} must be positive and finite, got {v}")));
            }
        }
        for (name, v) in [("gamma1", self.gamma1), ("gamma2", self.gamma2)] {
            if let Some(g) = v {
                if !(g > 0.0 && g.is_finite()) {
                    return Err(Error::InvalidInput(format!("{name} must be positive and finite, got {g}")));
                }
            }
        }
        if self.outer_max_iters == 0 || self.inner_max_iters == 0 || self.sinkhorn_max_iters == 0 {
            return Err(Error::InvalidInput("iteration limits must be ≥ 1".into()));
        }
        if self.p_floor > 1.0 {
            return Err(Error::InvalidInput(format!("p_floor must lie in (0, 1], got {}", self.p_floor)));
        }
        Ok(())
    }
}

/// The configuration a run actually used, with entropic weights resolved
/// to concrete values. This is what result files echo; feeding it back
/// reproduces the run's numbers exactly (the worker-pool size is omitted
/// because it cannot affect them).
#[derive(Debug, Clone, PartialEq, Serialize, Deserialize)]
pub struct ResolvedConfig {
    pub mode: AlignmentMode,
    pub gamma1: f64,
    pub gamma2: f64,
    pub mu: f64,
    pub outer_max_iters: usize,
    pub outer_tol: f64,
    pub inner_max_iters: usize,
    pub inner_tol: f64,
    pub sinkhorn_max_iters: usize,
    pub sinkhorn_tol: f64,
    pub p_floor: f64,
    pub seed: u64,
}

impl ResolvedConfig {
    /// Reconstruct a [`SolverConfig`] that reruns this configuration.
    pub fn to_solver_config(&self, threads: usize) -> SolverConfig {
        SolverConfig {
            gamma1: Some(self.gamma1),
            gamma2: Some(self.gamma2),
            mu: self.mu,
            outer_max_iters: self.outer_max_iters,
            outer_tol: self.outer_tol,
            inner_max_iters: self.inner_max_iters,
            inner_tol: self.inner_tol,
            sinkhorn_max_iters: self.sinkhorn_max_iters,
            sinkhorn_tol: self.sinkhorn_tol,
            p_floor: self.p_floor,
            seed: self.seed,
            threads,
            mode: self.mode,
        }
    }
}

/// Per-pair ADMM state.
#[derive(Debug, Clone)]
pub struct PairState {
    /// Local transform `R_ij`.
    pub transform: OrthogonalTransform,
    /// Point coupling `Q_ij`.
    pub coupling: Coupling,
    /// Dual variable `Λ_ij`.
    pub dual: DMatrix<f64>,
    /// `C_ij(R_ij, Q_ij)`.
    pub cost_value: f64,
}

/// Full ADMM state: the consensus transform, the cluster correspondence,
/// and the `S×S` grid of pair states.
#[derive(Debug, Clone)]
pub struct SolverState {
    pub consensus: OrthogonalTransform,
    /// `P`, an `S×S` coupling over the scaled Birkhoff polytope.
    pub correspondence: DMatrix<f64>,
    pairs: Vec<PairState>,
    num_clusters: usize,
}

impl SolverState {
    pub fn num_clusters(&self) -> usize {
        self.num_clusters
    }

    pub fn pair(&self, i: usize, j: usize) -> &PairState {
        &self.pairs[i * self.num_clusters + j]
    }

    fn pair_mut(&mut self, idx: usize) -> &mut PairState {
        &mut self.pairs[idx]
    }

    /// Matrix of current pair costs `C_ij`.
    pub fn cost_values(&self) -> DMatrix<f64> {
        let s = self.num_clusters;
        DMatrix::from_fn(s, s, |i, j| self.pairs[i * s + j].cost_value)
    }
}

/// Result of an alignment run.
#[derive(Debug, Clone)]
pub struct AlignmentResult {
    /// Recovered global transform `R`.
    pub transform: OrthogonalTransform,
    /// Recovered cluster correspondence `P` (entries sum to 1).
    pub correspondence: DMatrix<f64>,
    /// Objective value per outer iteration.
    pub objective_trace: Vec<f64>,
    /// `max_ij ‖R_ij − R‖_F` per outer iteration.
    pub primal_residual_trace: Vec<f64>,
    /// Worst marginal violation of `P` and all `Q_ij` per outer iteration.
    pub marginal_violation_trace: Vec<f64>,
    pub iterations: usize,
    pub converged: bool,
    /// Determinant of the recovered transform, rounded to ±1.
    pub det_r: f64,
    pub wall_time_sec: f64,
    pub config: ResolvedConfig,
    /// Count of inner Sinkhorn solves that hit their iteration cap
    /// (flagged, never fatal).
    pub sinkhorn_nonconverged: usize,
    /// True if any Procrustes solve had effectively vanishing singular
    /// values (non-unique maximizer).
    pub degenerate_svd: bool,
}

/// Phase markers emitted by [`solve_observed`], in the order the phases
/// complete within each outer iteration.
#[derive(Debug, Clone, Copy, PartialEq, Eq)]
pub enum SolveEvent {
    SubproblemDone { outer: usize, i: usize, j: usize },
    CorrespondenceUpdated { outer: usize },
    ConsensusUpdated { outer: usize },
    DualsUpdated { outer: usize },
}

/// Parameters of a single pair subproblem.
#[derive(Debug, Clone, Copy)]
pub struct SubproblemParams {
    /// Correspondence weight `P_ij` (enters the data term as-is; the
    /// entropic division uses `max(p_ij, p_floor)`).
    pub p_ij: f64,
    pub gamma2: f64,
    /// Consensus strength; 0 removes the consensus term entirely.
    pub mu: f64,
    pub p_floor: f64,
    pub inner_max_iters: usize,
    pub inner_tol: f64,
    pub sinkhorn_max_iters: usize,
    pub sinkhorn_tol: f64,
}

/// How the alternation starts.
#[derive(Debug, Clone)]
pub enum SubproblemInit {
    /// Start from the uniform coupling (the solver's per-iteration reset).
    UniformCoupling,
    /// Start from the coupling induced by a given transform (used for
    /// seeded restarts when estimating pair costs).
    FromTransform(OrthogonalTransform),
}

/// Output of a pair subproblem.
#[derive(Debug, Clone)]
pub struct SubproblemResult {
    pub transform: OrthogonalTransform,
    pub coupling: Coupling,
    pub cost_value: f64,
    pub inner_iterations: usize,
    /// False if any inner Sinkhorn solve hit its iteration cap.
    pub sinkhorn_converged: bool,
    pub max_marginal_violation: f64,
    pub degenerate: bool,
}

/// Alternating minimization for one cluster pair: Procrustes step
/// `R_ij ← stiefel_align(2·P_ij·Y_j·Q_ijᵀ·X_iᵀ + μ·(R − Λ_ij))`, then a
/// Sinkhorn step with entropic weight `γ₂ / max(P_ij, p_floor)` on the
/// cost induced by the fresh `R_ij`, repeated until `‖ΔR_ij‖_F` falls
/// below `inner_tol`.
pub fn subproblem_solve(
    x_i: &DMatrix<f64>,
    y_j: &DMatrix<f64>,
    r_consensus: &OrthogonalTransform,
    lambda_ij: &DMatrix<f64>,
    params: &SubproblemParams,
) -> Result<SubproblemResult> {
    subproblem_solve_with_init(x_i, y_j, r_consensus, lambda_ij, params, SubproblemInit::UniformCoupling)
}

/// [`subproblem_solve`] with control over the starting coupling.
pub fn subproblem_solve_with_init(
    x_i: &DMatrix<f64>,
    y_j: &DMatrix<f64>,
    r_consensus: &OrthogonalTransform,
    lambda_ij: &DMatrix<f64>,
    params: &SubproblemParams,
    init: SubproblemInit,
) -> Result<SubproblemResult> {
    if !(params.p_ij >= 0.0 && params.p_ij.is_finite()) {
        return Err(Error::InvalidInput(format!("p_ij must be ≥ 0, got {}", params.p_ij)));
    }
    if !(params.mu >= 0.0 && params.mu.is_finite()) {
        return Err(Error::InvalidInput(format!("mu must be ≥ 0, got {}", params.mu)));
    }
    if params.inner_max_iters == 0 {
        return Err(Error::InvalidInput("inner_max_iters must be ≥ 1".into()));
    }
    let d = x_i.nrows();
    if y_j.nrows() != d || r_consensus.dim() != d || lambda_ij.nrows() != d || lambda_ij.ncols() != d {
        return Err(Error::dim("subproblem_solve", format!("embedding dimension {d}"), "inconsistent shapes"));
    }

    let m = x_i.ncols();
    let n = y_j.ncols();
    let row_marg = uniform_marginal(m);
    let col_marg = uniform_marginal(n);
    let sink = SinkhornParams {
        gamma: params.gamma2 / params.p_ij.max(params.p_floor),
        max_iters: params.sinkhorn_max_iters,
        tol: params.sinkhorn_tol,
    };
    sink.validate()?;

    let mut sinkhorn_converged = true;
    let mut max_violation: f64 = 0.0;
    let mut degenerate = false;

    let run_sinkhorn = |cost: &CostMatrix,
                            sinkhorn_converged: &mut bool,
                            max_violation: &mut f64|
     -> Result<SinkhornOutput> {
        let out = sinkhorn(cost, &sink, &row_marg, &col_marg)?;
        *sinkhorn_converged &= out.converged;
        *max_violation = max_violation.max(out.violation);
        Ok(out)
    };

    let mut coupling = match init {
        SubproblemInit::UniformCoupling => Coupling::uniform(m, n),
        SubproblemInit::FromTransform(r0) => {
            let cost = build_pair_cost(x_i, y_j, &r0)?;
            run_sinkhorn(&cost, &mut sinkhorn_converged, &mut max_violation)?.coupling
        }
    };

    let mut prev_transform: Option<DMatrix<f64>> = None;
    let mut transform = r_consensus.clone();
    let mut cost_value = 0.0;
    let mut inner_iterations = 0;

    for sweep in 1..=params.inner_max_iters {
        inner_iterations = sweep;
        // A = 2·P_ij·Y_j·Q_ijᵀ·X_iᵀ + μ·(R − Λ_ij)
        let data_term = (y_j * coupling.plan().transpose()) * x_i.transpose();
        let target = data_term * (2.0 * params.p_ij) + (r_consensus.matrix() - lambda_ij) * params.mu;
        let (r_new, info) = manifold::stiefel_align_detailed(&target)?;
        degenerate |= info.degenerate;
        let settled = prev_transform
            .as_ref()
            .is_some_and(|prev| (r_new.matrix() - prev).norm() <= params.inner_tol);

        // Pair the coupling and cost with the transform just computed.
        let cost = build_pair_cost(x_i, y_j, &r_new)?;
        let out = run_sinkhorn(&cost, &mut sinkhorn_converged, &mut max_violation)?;
        cost_value = transport_cost(&out.coupling, &cost)?;
        coupling = out.coupling;
        prev_transform = Some(r_new.matrix().clone());
        transform = r_new;
        if settled {
            break;
        }
    }

    Ok(SubproblemResult {
        transform,
        coupling,
        cost_value,
        inner_iterations,
        sinkhorn_converged,
        max_marginal_violation: max_violation,
        degenerate,
    })
}

/// The correspondence update: a Sinkhorn solve with entropic weight
/// `gamma1` and uniform `1_S/S` marginals over the matrix of pair costs.
pub fn update_correspondence(
    cost_values: &DMatrix<f64>,
    gamma1: f64,
    sinkhorn_max_iters: usize,
    sinkhorn_tol: f64,
) -> Result<SinkhornOutput> {
    let s = cost_values.nrows();
    if cost_values.ncols() != s {
        return Err(Error::dim("update_correspondence", "square cost matrix", format!("{}×{}", s, cost_values.ncols())));
    }
    let cost = CostMatrix::new(cost_values.clone())?;
    let params = SinkhornParams { gamma: gamma1, max_iters: sinkhorn_max_iters, tol: sinkhorn_tol };
    sinkhorn(&cost, &params, &uniform_marginal(s), &uniform_marginal(s))
}

/// The objective `Σ_ij (P_ij·C_ij + H_{γ₂}(Q_ij)) + H_{γ₁}(P)` at the
/// current state.
pub fn objective(state: &SolverState, gamma1: f64, gamma2: f64) -> f64 {
    let s = state.num_clusters;
    let mut total = 0.0;
    for i in 0..s {
        for j in 0..s {
            let pair = state.pair(i, j);
            total += state.correspondence[(i, j)] * pair.cost_value;
            total += neg_entropy(&pair.coupling, gamma2);
        }
    }
    let p_coupling = Coupling::new(
        state.correspondence.clone(),
        uniform_marginal(s),
        uniform_marginal(s),
    )
    .expect("correspondence is a valid coupling");
    total + neg_entropy(&p_coupling, gamma1)
}

/// Run the full alignment. See the module docs for the iteration
/// structure. Never fails on slow convergence: hitting
/// `outer_max_iters` returns the best-primal-residual iterate flagged
/// `converged = false`.
pub fn solve(x: &ClusteredDataset, y: &ClusteredDataset, config: &SolverConfig) -> Result<AlignmentResult> {
    solve_observed(x, y, config, &mut |_| {})
}

/// [`solve`] with a phase observer, used to verify update ordering.
pub fn solve_observed(
    x: &ClusteredDataset,
    y: &ClusteredDataset,
    config: &SolverConfig,
    observer: &mut dyn FnMut(SolveEvent),
) -> Result<AlignmentResult> {
    config.validate()?;
    let start = Instant::now();

    let (x, y) = match config.mode {
        AlignmentMode::Hierarchical => (x.clone(), y.clone()),
        AlignmentMode::Flat => (x.pooled_dataset(), y.pooled_dataset()),
    };
    if x.dim() != y.dim() {
        return Err(Error::dim("solve", format!("embedding dimension {}", x.dim()), format!("{}", y.dim())));
    }
    if x.num_clusters() != y.num_clusters() {
        return Err(Error::dim(
            "solve",
            format!("{} clusters", x.num_clusters()),
            format!("{} clusters", y.num_clusters()),
        ));
    }

    let dim = x.dim();
    let s = x.num_clusters();
    let consensus = manifold::random_orthogonal(dim, config.seed);

    // Entropic scales default to fractions of the median initial cost.
    let (gamma1, gamma2) = match (config.gamma1, config.gamma2) {
        (Some(g1), Some(g2)) => (g1, g2),
        _ => {
            let pooled_cost = build_pair_cost(&x.pooled(), &y.pooled(), &consensus)?;
            let scale = cost_scale(&pooled_cost);
            (
                config.gamma1.unwrap_or(0.1 * scale),
                config.gamma2.unwrap_or(0.05 * scale),
            )
        }
    };

    let resolved = ResolvedConfig {
        mode: config.mode,
        gamma1,
        gamma2,
        mu: config.mu,
        outer_max_iters: config.outer_max_iters,
        outer_tol: config.outer_tol,
        inner_max_iters: config.inner_max_iters,
        inner_tol: config.inner_tol,
        sinkhorn_max_iters: config.sinkhorn_max_iters,
        sinkhorn_tol: config.sinkhorn_tol,
        p_floor: config.p_floor,
        seed: config.seed,
    };

    let mut state = SolverState {
        consensus: consensus.clone(),
        correspondence: DMatrix::from_element(s, s, 1.0 / (s * s) as f64),
        pairs: (0..s * s)
            .map(|idx| {
                let (i, j) = (idx / s, idx % s);
                PairState {
                    transform: consensus.clone(),
                    coupling: Coupling::uniform(x.cluster(i).ncols(), y.cluster(j).ncols()),
                    dual: DMatrix::zeros(dim, dim),
                    cost_value: 0.0,
                }
            })
            .collect(),
        num_clusters: s,
    };

    let threads = if config.threads == 0 {
        std::thread::available_parallelism().map_or(1, |n| n.get())
    } else {
        config.threads
    };
    let pool = rayon::ThreadPoolBuilder::new()
        .num_threads(threads)
        .build()
        .map_err(|e| Error::Numerical(format!("failed to build worker pool: {e}")))?;

    let mut objective_trace = Vec::new();
    let mut primal_residual_trace = Vec::new();
    let mut marginal_violation_trace = Vec::new();
    let mut sinkhorn_nonconverged = 0usize;
    let mut degenerate_svd = false;
    let mut converged = false;
    let mut iterations = 0usize;
    let mut best: Option<(f64, OrthogonalTransform, DMatrix<f64>)> = None;

    for outer in 1..=config.outer_max_iters {
        iterations = outer;

        // Phase 1: all pair subproblems, in parallel over a bounded pool.
        // Workers read immutable snapshots; collect() preserves pair order.
        let results: Vec<Result<SubproblemResult>> = {
            let state_ref = &state;
            let x_ref = &x;
            let y_ref = &y;
            pool.install(|| {
                use rayon::prelude::*;
                (0..s * s)
                    .into_par_iter()
                    .map(|idx| {
                        let (i, j) = (idx / s, idx % s);
                        let params = SubproblemParams {
                            p_ij: state_ref.correspondence[(i, j)],
                            gamma2,
                            mu: config.mu,
                            p_floor: config.p_floor,
                            inner_max_iters: config.inner_max_iters,
                            inner_tol: config.inner_tol,
                            sinkhorn_max_iters: config.sinkhorn_max_iters,
                            sinkhorn_tol: config.sinkhorn_tol,
                        };
                        subproblem_solve(
                            x_ref.cluster(i),
                            y_ref.cluster(j),
                            &state_ref.consensus,
                            &state_ref.pairs[idx].dual,
                            &params,
                        )
                    })
                    .collect()
            })
        };
        for (idx, result) in results.into_iter().enumerate() {
            let res = result?;
            if !res.sinkhorn_converged {
                sinkhorn_nonconverged += 1;
            }
            degenerate_svd |= res.degenerate;
            let pair = state.pair_mut(idx);
            pair.transform = res.transform;
            pair.coupling = res.coupling;
            pair.cost_value = res.cost_value;
            observer(SolveEvent::SubproblemDone { outer, i: idx / s, j: idx % s });
        }

        // Phase 2: correspondence update. The S×S problem is tiny but
        // sharp (γ₁ well below the cost spread), so it gets a larger
        // iteration budget than the point-coupling solves.
        let p_out = update_correspondence(
            &state.cost_values(),
            gamma1,
            config.sinkhorn_max_iters.max(20_000),
            config.sinkhorn_tol,
        )?;
        if !p_out.converged {
            sinkhorn_nonconverged += 1;
        }
        state.correspondence = p_out.coupling.plan().clone();
        observer(SolveEvent::CorrespondenceUpdated { outer });

        // Phase 3: consensus over {R_ij + Λ_ij}, index-ascending.
        let summands: Vec<DMatrix<f64>> = state
            .pairs
            .iter()
            .map(|pair| pair.transform.matrix() + &pair.dual)
            .collect();
        let (new_consensus, info) = manifold::consensus_align_detailed(&summands)?;
        degenerate_svd |= info.degenerate;
        observer(SolveEvent::ConsensusUpdated { outer });

        // Phase 4: dual ascent.
        for pair in &mut state.pairs {
            pair.dual += pair.transform.matrix() - new_consensus.matrix();
        }
        observer(SolveEvent::DualsUpdated { outer });

        let delta_r = (new_consensus.matrix() - state.consensus.matrix()).norm();
        state.consensus = new_consensus;

        objective_trace.push(objective(&state, gamma1, gamma2));
        let primal = state
            .pairs
            .iter()
            .map(|pair| (pair.transform.matrix() - state.consensus.matrix()).norm())
            .fold(0.0, f64::max);
        primal_residual_trace.push(primal);
        let violation = state
            .pairs
            .iter()
            .map(|pair| pair.coupling.max_marginal_violation())
            .fold(p_out.coupling.max_marginal_violation(), f64::max);
        marginal_violation_trace.push(violation);

        if best.as_ref().map_or(true, |(b, _, _)| primal < *b) {
            best = Some((primal, state.consensus.clone(), state.correspondence.clone()));
        }

        if delta_r <= config.outer_tol && primal <= config.outer_tol {
            converged = true;
            break;
        }
    }

    let (transform, correspondence) = if converged {
        (state.consensus, state.correspondence)
    } else {
        let (_, r, p) = best.expect("at least one outer iteration ran");
        (r, p)
    };
    let det_r = transform.determinant().round();

    Ok(AlignmentResult {
        det_r,
        wall_time_sec: start.elapsed().as_secs_f64(),
        transform,
        correspondence,
        objective_trace,
        primal_residual_trace,
        marginal_violation_trace,
        iterations,
        converged,
        config: resolved,
        sinkhorn_nonconverged,
        degenerate_svd,
    })
}

/// Median entry of the cost matrix, falling back to the mean (then 1)
/// when degenerate, so the derived entropic weights stay positive.
fn cost_scale(cost: &CostMatrix) -> f64 {
    let mut values: Vec<f64> = cost.entries().iter().cloned().collect();
    values.sort_by(|a, b| a.partial_cmp(b).unwrap());
    let mid = values.len() / 2;
    let median = if values.len() % 2 == 1 {
        values[mid]
    } else {
        0.5 * (values[mid - 1] + values[mid])
    };
    if median > 0.0 {
        return median;
    }
    let mean = values.iter().sum::<f64>() / values.len() as f64;
    if mean > 0.0 {
        mean
    } else {
        1.0
    }
}

#[cfg(test)]
mod tests {
    use super::*;
    use crate::datagen;
    use approx::assert_abs_diff_eq;
    use nalgebra::dmatrix;
    use rand::{Rng, SeedableRng};
    use rand_chacha::ChaCha8Rng;
    use rand_distr::StandardNormal;

    fn default_subproblem(p_ij: f64) -> SubproblemParams {
        SubproblemParams {
            p_ij,
            gamma2: 0.05,
            mu: 0.1,
            p_floor: 1e-6,
            inner_max_iters: 30,
            inner_tol: 1e-5,
            sinkhorn_max_iters: 1000,
            sinkhorn_tol: 1e-9,
        }
    }

    fn random_cloud(rng: &mut ChaCha8Rng, d: usize, n: usize) -> DMatrix<f64> {
        DMatrix::from_fn(d, n, |_, _| rng.sample::<f64, _>(StandardNormal))
    }

    #[test]
    fn subproblem_zero_weight_returns_consensus() {
        let mut rng = ChaCha8Rng::seed_from_u64(0);
        let x = random_cloud(&mut rng, 3, 8);
        let y = random_cloud(&mut rng, 3, 6);
        let r = manifold::random_orthogonal(3, 5);
        let lambda = DMatrix::zeros(3, 3);
        let out = subproblem_solve(&x, &y, &r, &lambda, &default_subproblem(0.0)).unwrap();
        // Data term vanishes exactly, so R_ij = stiefel_align(μ R) = R.
        assert!((out.transform.matrix() - r.matrix()).norm() < 1e-12);
    }

    #[test]
    fn subproblem_self_alignment_reaches_zero_cost() {
        let mut rng = ChaCha8Rng::seed_from_u64(1);
        let x = random_cloud(&mut rng, 3, 20);
        let r = OrthogonalTransform::identity(3);
        let lambda = DMatrix::zeros(3, 3);
        let mut params = default_subproblem(1.0);
        params.gamma2 = 0.01;
        let out = subproblem_solve(&x, &x, &r, &lambda, &params).unwrap();
        assert!(out.cost_value <= 1e-3, "self-alignment cost {}", out.cost_value);
    }

    #[test]
    fn subproblem_single_sweep_matches_hand_computation() {
        let mut rng = ChaCha8Rng::seed_from_u64(2);
        let x = random_cloud(&mut rng, 3, 5);
        let y = random_cloud(&mut rng, 3, 7);
        let r = manifold::random_orthogonal(3, 9);
        let lambda = DMatrix::from_fn(3, 3, |_, _| 0.1 * rng.sample::<f64, _>(StandardNormal));
        let p_ij = 0.3;
        let mu = 0.1;

        let mut params = default_subproblem(p_ij);
        params.inner_max_iters = 1;
        let out = subproblem_solve(&x, &y, &r, &lambda, &params).unwrap();

        let q = Coupling::uniform(5, 7);
        let hand = (&y * q.plan().transpose() * x.transpose()) * (2.0 * p_ij) + (r.matrix() - &lambda) * mu;
        let expected = manifold::stiefel_align(&hand).unwrap();
        assert!((out.transform.matrix() - expected.matrix()).norm() < 1e-12);
        assert_eq!(out.inner_iterations, 1);
    }

    #[test]
    fn update_correspondence_sharp_costs_recover_permutation() {
        let costs = dmatrix![0.0, 10.0; 10.0, 0.0];
        let out = update_correspondence(&costs, 1e-2, 10_000, 1e-12).unwrap();
        // Grid-search oracle over the one-parameter family
        // [[t, ½−t], [½−t, t]] of the entropic objective.
        let oracle = {
            let objective = |t: f64| {
                let q = dmatrix![t, 0.5 - t; 0.5 - t, t];
                q.dot(&costs)
                    + 1e-2 * q.iter().map(|&p| if p > 0.0 { p * p.ln() } else { 0.0 }).sum::<f64>()
            };
            let steps = 500_000;
            let mut best = (f64::INFINITY, 0.0);
            for i in 0..=steps {
                let t = 0.5 * i as f64 / steps as f64;
                let v = objective(t);
                if v < best.0 {
                    best = (v, t);
                }
            }
            dmatrix![best.1, 0.5 - best.1; 0.5 - best.1, best.1]
        };
        for (a, b) in out.coupling.plan().iter().zip(oracle.iter()) {
            assert!((a - b).abs() < 1e-4, "plan {a} vs oracle {b}");
        }
        assert!((out.coupling.plan()[(0, 0)] - 0.5).abs() < 1e-4);
        assert!(out.coupling.plan()[(0, 1)].abs() < 1e-4);
    }

    #[test]
    fn update_correspondence_equal_costs_uniform() {
        let costs = DMatrix::from_element(3, 3, 2.5);
        let out = update_correspondence(&costs, 0.1, 10_000, 1e-12).unwrap();
        for v in out.coupling.plan().iter() {
            assert_abs_diff_eq!(*v, 1.0 / 9.0, epsilon = 1e-10);
        }
    }

    #[test]
    fn update_correspondence_huge_gamma_flattens() {
        let mut rng = ChaCha8Rng::seed_from_u64(3);
        let costs = DMatrix::from_fn(4, 4, |_, _| rng.random::<f64>());
        let out = update_correspondence(&costs, 1e9, 10_000, 1e-12).unwrap();
        for v in out.coupling.plan().iter() {
            assert_abs_diff_eq!(*v, 1.0 / 16.0, epsilon = 1e-8);
        }
    }

    fn toy_state(s: usize, m: usize, n: usize, cost: f64) -> SolverState {
        SolverState {
            consensus: OrthogonalTransform::identity(2),
            correspondence: DMatrix::from_element(s, s, 1.0 / (s * s) as f64),
            pairs: (0..s * s)
                .map(|_| PairState {
                    transform: OrthogonalTransform::identity(2),
                    coupling: Coupling::uniform(m, n),
                    dual: DMatrix::zeros(2, 2),
                    cost_value: cost,
                })
                .collect(),
            num_clusters: s,
        }
    }

    #[test]
    fn objective_uniform_state_matches_naive_recomputation() {
        let (s, m, n) = (3, 4, 5);
        let (gamma1, gamma2) = (0.7, 0.3);
        let state = toy_state(s, m, n, 0.0);
        let got = objective(&state, gamma1, gamma2);
        // Naive loop: every Q is uniform m×n, P is uniform S×S, costs 0.
        let mut expected = 0.0;
        for _ in 0..s * s {
            for _ in 0..m * n {
                let q = 1.0 / (m * n) as f64;
                expected += gamma2 * q * q.ln();
            }
        }
        for _ in 0..s * s {
            let p = 1.0 / (s * s) as f64;
            expected += gamma1 * p * p.ln();
        }
        assert_abs_diff_eq!(got, expected, epsilon = 1e-12);
    }

    #[test]
    fn objective_zero_gammas_is_linear_term() {
        let mut state = toy_state(2, 3, 3, 1.5);
        let got = objective(&state, 0.0, 0.0);
        let expected: f64 = state.correspondence.iter().map(|p| p * 1.5).sum();
        assert_abs_diff_eq!(got, expected, epsilon = 1e-14);
        // Doubling P doubles the linear term when entropy weights are 0.
        state.correspondence *= 2.0;
        assert_abs_diff_eq!(objective(&state, 0.0, 0.0), 2.0 * expected, epsilon = 1e-14);
    }

    fn small_identity_problem(seed: u64) -> (ClusteredDataset, ClusteredDataset, datagen::GroundTruth) {
        let spec = datagen::GenSpec {
            clusters: 3,
            intrinsic_dim: 2,
            ambient_dim: 4,
            samples_per_cluster: 30,
            subspace_mode: datagen::SubspaceMode::Random,
            noise_sigma: 0.0,
            permute_clusters: false,
            seed,
            shared_samples: true,
            identity_transform: true,
        };
        datagen::generate(&spec).unwrap()
    }

    #[test]
    fn solve_identity_alignment_recovers_truth() {
        let mut hits = 0;
        let trials = 8;
        for seed in 0..trials {
            let (x, y, truth) = small_identity_problem(seed);
            let config = SolverConfig { seed, ..SolverConfig::default() };
            let result = solve(&x, &y, &config).unwrap();
            let pooled = x.pooled();
            let align = crate::diagnostics::alignment_error(&result.transform, &truth.r_star, &pooled).unwrap();
            let corr = crate::diagnostics::correspondence_error(&result.correspondence, &truth.p_star).unwrap();
            if align < 1e-2 && corr <= 0.05 {
                hits += 1;
            }
        }
        assert!(hits >= trials - 1, "identity alignment recovered only {hits}/{trials}");
    }

    #[test]
    fn solve_flat_mode_on_symmetric_cluster_converges() {
        let mut rng = ChaCha8Rng::seed_from_u64(11);
        let x = ClusteredDataset::new(vec![random_cloud(&mut rng, 3, 60)]).unwrap();
        let y = ClusteredDataset::new(vec![random_cloud(&mut rng, 3, 60)]).unwrap();
        let config = SolverConfig { mode: AlignmentMode::Flat, seed: 4, ..SolverConfig::default() };
        let result = solve(&x, &y, &config).unwrap();
        assert!(result.converged);
        assert!(*result.primal_residual_trace.last().unwrap() <= config.outer_tol);
    }

    #[test]
    fn solve_flat_mode_equals_prepooled_hierarchical() {
        let mut rng = ChaCha8Rng::seed_from_u64(12);
        let clusters: Vec<DMatrix<f64>> = (0..3).map(|_| random_cloud(&mut rng, 3, 10)).collect();
        let x = ClusteredDataset::new(clusters.clone()).unwrap();
        let y_clusters: Vec<DMatrix<f64>> = (0..3).map(|_| random_cloud(&mut rng, 3, 10)).collect();
        let y = ClusteredDataset::new(y_clusters).unwrap();

        let flat_cfg = SolverConfig {
            mode: AlignmentMode::Flat,
            seed: 7,
            outer_max_iters: 20,
            ..SolverConfig::default()
        };
        let flat = solve(&x, &y, &flat_cfg).unwrap();

        let pooled_x = x.pooled_dataset();
        let pooled_y = y.pooled_dataset();
        let hier_cfg = SolverConfig { mode: AlignmentMode::Hierarchical, ..flat_cfg };
        let hier = solve(&pooled_x, &pooled_y, &hier_cfg).unwrap();

        let bits = |m: &DMatrix<f64>| m.iter().map(|v| v.to_bits()).collect::<Vec<_>>();
        assert_eq!(bits(flat.transform.matrix()), bits(hier.transform.matrix()));
        assert_eq!(bits(&flat.correspondence), bits(&hier.correspondence));
        assert_eq!(flat.objective_trace, hier.objective_trace);
        assert_eq!(flat.primal_residual_trace, hier.primal_residual_trace);
    }

    #[test]
    fn solve_deterministic_across_thread_counts() {
        let (x, y, _) = small_identity_problem(3);
        let runs: Vec<AlignmentResult> = [1usize, 3]
            .iter()
            .map(|&threads| {
                let config = SolverConfig {
                    seed: 3,
                    threads,
                    outer_max_iters: 15,
                    ..SolverConfig::default()
                };
                solve(&x, &y, &config).unwrap()
            })
            .collect();
        let bits = |m: &DMatrix<f64>| m.iter().map(|v| v.to_bits()).collect::<Vec<_>>();
        assert_eq!(bits(runs[0].transform.matrix()), bits(runs[1].transform.matrix()));
        assert_eq!(bits(&runs[0].correspondence), bits(&runs[1].correspondence));
        assert_eq!(runs[0].objective_trace, runs[1].objective_trace);
    }

    #[test]
    fn solve_update_order_is_subproblems_then_p_then_consensus_then_duals() {
        let (x, y, _) = small_identity_problem(5);
        let s = x.num_clusters();
        let mut events = Vec::new();
        let config = SolverConfig { seed: 5, outer_max_iters: 3, ..SolverConfig::default() };
        solve_observed(&x, &y, &config, &mut |e| events.push(e)).unwrap();

        let per_outer = s * s + 3;
        assert_eq!(events.len() % per_outer, 0);
        for chunk in events.chunks(per_outer) {
            let outer = match chunk[0] {
                SolveEvent::SubproblemDone { outer, .. } => outer,
                other => panic!("iteration must start with subproblems, got {other:?}"),
            };
            for e in &chunk[..s * s] {
                assert!(matches!(e, SolveEvent::SubproblemDone { outer: o, .. } if *o == outer));
            }
            assert_eq!(chunk[s * s], SolveEvent::CorrespondenceUpdated { outer });
            assert_eq!(chunk[s * s + 1], SolveEvent::ConsensusUpdated { outer });
            assert_eq!(chunk[s * s + 2], SolveEvent::DualsUpdated { outer });
        }
    }

    #[test]
    fn solve_rejects_mismatched_inputs() {
        let mut rng = ChaCha8Rng::seed_from_u64(13);
        let x = ClusteredDataset::new(vec![random_cloud(&mut rng, 3, 5)]).unwrap();
        let y_dim = ClusteredDataset::new(vec![random_cloud(&mut rng, 4, 5)]).unwrap();
        let config = SolverConfig::default();
        assert!(solve(&x, &y_dim, &config).is_err());
        let y_clusters =
            ClusteredDataset::new(vec![random_cloud(&mut rng, 3, 5), random_cloud(&mut rng, 3, 5)]).unwrap();
        assert!(solve(&x, &y_clusters, &config).is_err());
    }

    #[test]
    fn config_validation_rejects_bad_values() {
        let config = SolverConfig { mu: 0.0, ..SolverConfig::default() };
        assert!(config.validate().is_err());
        let config = SolverConfig { gamma1: Some(-1.0), ..SolverConfig::default() };
        assert!(config.validate().is_err());
        let config = SolverConfig { outer_max_iters: 0, ..SolverConfig::default() };
        assert!(config.validate().is_err());
    }
}
