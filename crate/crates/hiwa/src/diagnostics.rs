//! Evaluation metrics and evaluable theory quantities.
//!
//! Two error metrics score a recovered alignment against ground truth:
//! the relative transform error on the data,
//! `‖R̂X − R*X‖_F² / ‖R*X‖_F²`, and the entrywise L1 distance between
//! recovered and true cluster correspondences.
//!
//! Two further reports turn the crate's finite-sample theory into
//! numbers for a concrete dataset pair:
//!
//! - [`disambiguity_check`] evaluates the criterion under which the true
//!   correspondence is the global optimum with probability `1 − δ`:
//!   every mismatched pair's cost margin
//!   `Ĉ*_ij + Ĉ*_ji − Ĉ*_ii − Ĉ*_jj` must exceed a threshold built from
//!   the per-cluster finite-sample terms
//!   `B(δ) = c·n^{−2/d} + √(log(1/δ)/(2n))`,
//!   `c = 1458·(2 + 1/(3^{d/2−2} − 1))`, valid for intrinsic dimension
//!   `d > 4`.
//! - [`perturbation_report`] measures the global structure distortion
//!   `ε² = ‖ȲᵀȲ − X̄ᵀX̄‖_F` between coupling-matched datasets and
//!   evaluates the alignment-error bound
//!   `(‖X̄‖‖X̄†‖ + 2)²‖X̄†‖²ε⁴ + D` with its data constant and
//!   applicability condition.

use nalgebra::DMatrix;

use crate::dataset::ClusteredDataset;
use crate::error::{Error, Result};
use crate::manifold::{self, OrthogonalTransform};
use crate::solver::{subproblem_solve_with_init, SubproblemInit, SubproblemParams};
use crate::transport::{build_pair_cost, Coupling};

/// Singular-value ratio under which a matrix counts as rank-deficient.
const RANK_TOL: f64 = 1e-12;

/// Both evaluation metrics for one run.
#[derive(Debug, Clone, Copy, PartialEq, serde::Serialize, serde::Deserialize)]
pub struct MetricReport {
    pub alignment_error: f64,
    pub correspondence_error: f64,
}

/// Relative transform error on the pooled data:
/// `‖R̂X − R*X‖_F² / ‖R*X‖_F²`.
pub fn alignment_error(
    r_hat: &OrthogonalTransform,
    r_star: &OrthogonalTransform,
    x_pooled: &DMatrix<f64>,
) -> Result<f64> {
    let d = x_pooled.nrows();
    if r_hat.dim() != d || r_star.dim() != d {
        return Err(Error::dim(
            "alignment_error",
            format!("{d}×{d} transforms"),
            format!("{}×{}", r_hat.dim(), r_star.dim()),
        ));
    }
    let reference = r_star.apply(x_pooled);
    let denom = reference.norm_squared();
    if denom == 0.0 {
        return Err(Error::InvalidInput("alignment_error needs nonzero data".into()));
    }
    Ok((r_hat.apply(x_pooled) - reference).norm_squared() / denom)
}

/// Entrywise L1 distance `Σ_ij |P̂ − P*|_ij`.
pub fn correspondence_error(p_hat: &DMatrix<f64>, p_star: &DMatrix<f64>) -> Result<f64> {
    if p_hat.shape() != p_star.shape() {
        return Err(Error::dim(
            "correspondence_error",
            format!("{:?}", p_star.shape()),
            format!("{:?}", p_hat.shape()),
        ));
    }
    Ok(p_hat.iter().zip(p_star.iter()).map(|(a, b)| (a - b).abs()).sum())
}

/// The finite-sample constant `c = 1458·(2 + 1/(3^{d/2−2} − 1))`.
/// Defined only for intrinsic dimension `d > 4`.
pub fn disambiguity_constant(d: usize) -> Result<f64> {
    if d <= 4 {
        return Err(Error::UnsupportedConfiguration(format!(
            "the disambiguity constant requires intrinsic dimension > 4, got {d}"
        )));
    }
    let denom = 3f64.powf(d as f64 / 2.0 - 2.0) - 1.0;
    Ok(1458.0 * (2.0 + 1.0 / denom))
}

/// The per-cluster finite-sample term
/// `B(δ) = c·n^{−2/d} + √(log(1/δ)/(2n))`.
pub fn disambiguity_threshold_term(d: usize, n: usize, delta: f64) -> Result<f64> {
    if n == 0 {
        return Err(Error::InvalidInput("cluster size must be ≥ 1".into()));
    }
    if !(delta > 0.0 && delta < 1.0) {
        return Err(Error::InvalidInput(format!("delta must lie in (0, 1), got {delta}")));
    }
    let c = disambiguity_constant(d)?;
    let n = n as f64;
    Ok(c * n.powf(-2.0 / d as f64) + ((1.0 / delta).ln() / (2.0 * n)).sqrt())
}

/// Outcome of the correspondence-disambiguity criterion.
#[derive(Debug, Clone)]
pub struct DisambiguityReport {
    /// `Ĉ*_ij + Ĉ*_ji − Ĉ*_ii − Ĉ*_jj` (symmetric; diagonal unused).
    pub margins: DMatrix<f64>,
    /// `B_{x,i} + B_{y,i} + B_{x,j} + B_{y,j}` per pair; `+∞` when the
    /// criterion is inapplicable.
    pub thresholds: DMatrix<f64>,
    /// All off-diagonal margins strictly exceed their thresholds.
    pub satisfied: bool,
    /// False when any intrinsic dimension is ≤ 4 (the finite-sample
    /// constants are undefined there) — flagged rather than raised.
    pub applicable: bool,
    pub delta: f64,
}

/// Evaluate the disambiguity criterion from caller-supplied best pair
/// costs `Ĉ*` (see [`estimate_pairwise_costs`]) and known intrinsic
/// dimensions. Requires equal-sized clusters.
pub fn disambiguity_check(
    x: &ClusteredDataset,
    y: &ClusteredDataset,
    pairwise_costs: &DMatrix<f64>,
    intrinsic_dims_x: &[usize],
    intrinsic_dims_y: &[usize],
    delta: f64,
) -> Result<DisambiguityReport> {
    let s = x.num_clusters();
    if y.num_clusters() != s {
        return Err(Error::dim("disambiguity_check", format!("{s} clusters"), format!("{}", y.num_clusters())));
    }
    if pairwise_costs.shape() != (s, s) {
        return Err(Error::dim("disambiguity_check costs", format!("{s}×{s}"), format!("{:?}", pairwise_costs.shape())));
    }
    if intrinsic_dims_x.len() != s || intrinsic_dims_y.len() != s {
        return Err(Error::dim(
            "disambiguity_check dims",
            s,
            format!("{}/{}", intrinsic_dims_x.len(), intrinsic_dims_y.len()),
        ));
    }
    if !(delta > 0.0 && delta < 1.0) {
        return Err(Error::InvalidInput(format!("delta must lie in (0, 1), got {delta}")));
    }
    let n = x.cluster(0).ncols();
    let equal_sized = x
        .cluster_sizes()
        .into_iter()
        .chain(y.cluster_sizes())
        .all(|size| size == n);
    if !equal_sized {
        return Err(Error::InvalidInput("disambiguity_check requires equal-sized clusters".into()));
    }

    let margins = DMatrix::from_fn(s, s, |i, j| {
        pairwise_costs[(i, j)] + pairwise_costs[(j, i)] - pairwise_costs[(i, i)] - pairwise_costs[(j, j)]
    });

    let applicable = intrinsic_dims_x.iter().chain(intrinsic_dims_y).all(|&d| d > 4);
    let thresholds = if applicable {
        let term_x: Vec<f64> = intrinsic_dims_x
            .iter()
            .map(|&d| disambiguity_threshold_term(d, n, delta))
            .collect::<Result<_>>()?;
        let term_y: Vec<f64> = intrinsic_dims_y
            .iter()
            .map(|&d| disambiguity_threshold_term(d, n, delta))
            .collect::<Result<_>>()?;
        DMatrix::from_fn(s, s, |i, j| term_x[i] + term_y[i] + term_x[j] + term_y[j])
    } else {
        DMatrix::from_element(s, s, f64::INFINITY)
    };

    let mut satisfied = applicable;
    for i in 0..s {
        for j in 0..s {
            if i != j && margins[(i, j)] <= thresholds[(i, j)] {
                satisfied = false;
            }
        }
    }

    Ok(DisambiguityReport { margins, thresholds, satisfied, applicable, delta })
}

/// Controls for estimating the best pair costs `Ĉ*_ij`.
#[derive(Debug, Clone, Copy)]
pub struct PairwiseCostParams {
    /// Entropic weight of the point couplings; `None` derives
    /// `0.05 × median` of the pooled identity-transform cost.
    pub gamma2: Option<f64>,
    /// Seeded restarts per pair; the best (lowest) cost wins.
    pub restarts: usize,
    pub seed: u64,
    pub inner_max_iters: usize,
    pub inner_tol: f64,
    pub sinkhorn_max_iters: usize,
    pub sinkhorn_tol: f64,
}

impl Default for PairwiseCostParams {
    fn default() -> Self {
        Self {
            gamma2: None,
            restarts: 5,
            seed: 0,
            inner_max_iters: 30,
            inner_tol: 1e-5,
            sinkhorn_max_iters: 1000,
            sinkhorn_tol: 1e-9,
        }
    }
}

/// Estimated best pair costs plus the diagonal couplings that attained
/// them (inputs to [`perturbation_report`]).
#[derive(Debug, Clone)]
pub struct PairwiseCostEstimate {
    pub costs: DMatrix<f64>,
    pub diagonal_couplings: Vec<Coupling>,
}

/// Approximate `Ĉ*_ij = min_{R, Q} C_ij(R, Q)` for every cluster pair by
/// alternating minimization with the consensus term removed (`μ = 0`,
/// unit pair weight), restarted from several Haar-random transforms.
/// The minimum over restarts bounds the non-convex gap from above.
pub fn estimate_pairwise_costs(
    x: &ClusteredDataset,
    y: &ClusteredDataset,
    params: &PairwiseCostParams,
) -> Result<PairwiseCostEstimate> {
    let s = x.num_clusters();
    if y.num_clusters() != s {
        return Err(Error::dim("estimate_pairwise_costs", format!("{s} clusters"), format!("{}", y.num_clusters())));
    }
    if x.dim() != y.dim() {
        return Err(Error::dim("estimate_pairwise_costs", format!("dimension {}", x.dim()), format!("{}", y.dim())));
    }
    if params.restarts == 0 {
        return Err(Error::InvalidInput("restarts must be ≥ 1".into()));
    }
    let dim = x.dim();

    let gamma2 = match params.gamma2 {
        Some(g) => g,
        None => {
            let pooled = build_pair_cost(&x.pooled(), &y.pooled(), &OrthogonalTransform::identity(dim))?;
            let mut values: Vec<f64> = pooled.entries().iter().cloned().collect();
            values.sort_by(|a, b| a.partial_cmp(b).unwrap());
            let median = values[values.len() / 2];
            0.05 * if median > 0.0 { median } else { 1.0 }
        }
    };

    let identity = OrthogonalTransform::identity(dim);
    let zero_dual = DMatrix::zeros(dim, dim);
    let sub_params = SubproblemParams {
        p_ij: 1.0,
        gamma2,
        mu: 0.0,
        p_floor: 1e-6,
        inner_max_iters: params.inner_max_iters,
        inner_tol: params.inner_tol,
        sinkhorn_max_iters: params.sinkhorn_max_iters,
        sinkhorn_tol: params.sinkhorn_tol,
    };

    let mut costs = DMatrix::zeros(s, s);
    let mut diagonal_couplings: Vec<Option<Coupling>> = vec![None; s];
    for i in 0..s {
        for j in 0..s {
            let mut best: Option<(f64, Coupling)> = None;
            for restart in 0..params.restarts {
                let restart_seed = mix_seed(params.seed, (i * s + j) as u64, restart as u64);
                let r0 = manifold::random_orthogonal(dim, restart_seed);
                let out = subproblem_solve_with_init(
                    x.cluster(i),
                    y.cluster(j),
                    &identity,
                    &zero_dual,
                    &sub_params,
                    SubproblemInit::FromTransform(r0),
                )?;
                if best.as_ref().map_or(true, |(c, _)| out.cost_value < *c) {
                    best = Some((out.cost_value, out.coupling));
                }
            }
            let (cost, coupling) = best.expect("restarts ≥ 1");
            costs[(i, j)] = cost;
            if i == j {
                diagonal_couplings[i] = Some(coupling);
            }
        }
    }

    Ok(PairwiseCostEstimate {
        costs,
        diagonal_couplings: diagonal_couplings.into_iter().map(|c| c.unwrap()).collect(),
    })
}

/// SplitMix64 step, used to derive independent restart seeds.
fn mix_seed(seed: u64, a: u64, b: u64) -> u64 {
    let mut z = seed
        .wrapping_add(a.wrapping_mul(0x9E37_79B9_7F4A_7C15))
        .wrapping_add(b.wrapping_mul(0xBF58_476D_1CE4_E5B9));
    z = (z ^ (z >> 30)).wrapping_mul(0xBF58_476D_1CE4_E5B9);
    z = (z ^ (z >> 27)).wrapping_mul(0x94D0_49BB_1331_11EB);
    z ^ (z >> 31)
}

/// The perturbation-bound evaluation.
#[derive(Debug, Clone)]
pub struct PerturbationReport {
    /// Global structure distortion `ε = ‖ȲᵀȲ − X̄ᵀX̄‖_F^{1/2}`, with the
    /// matched matrix `X̄` built from row-normalized couplings.
    pub epsilon: f64,
    /// `(‖X̄‖‖X̄†‖ + 2)²‖X̄†‖²ε⁴ + D`; `None` when `X̄` is not full row
    /// rank (bound inapplicable).
    pub bound: Option<f64>,
    /// Full row rank and `ε‖X̄†‖ ≤ (1/√2)(‖X̄‖‖X̄†‖)^{−1/2}`.
    pub condition_ok: bool,
    /// The data constant
    /// `D = Σ_i tr(X_i(I/n − Q_iiQ_iiᵀ)X_iᵀ + (1/n − 1)·Y_iY_iᵀ)`,
    /// evaluated with the couplings as supplied (may be negative).
    pub data_constant: f64,
    /// Blockwise distortion
    /// `ε_ij = ‖Y_iᵀY_j/√(n_i·n_j) − Q_iiᵀX_iᵀX_jQ_jj‖_F` in the
    /// transport-cost normalization (couplings as supplied).
    pub blockwise_eps: DMatrix<f64>,
}

/// Evaluate the global and blockwise structure distortion between the
/// datasets under per-cluster point couplings `Q_ii`, and the implied
/// alignment-error bound.
///
/// Couplings are expected in the transport convention the solver
/// produces (total mass 1, uniform marginals). For the global `ε` they
/// are rescaled to row sums of 1 so that exact correspondences give
/// `ε = 0` identically; the blockwise terms and the data constant use
/// the couplings as supplied.
pub fn perturbation_report(
    x: &ClusteredDataset,
    y: &ClusteredDataset,
    q_blocks: &[Coupling],
) -> Result<PerturbationReport> {
    let s = x.num_clusters();
    if y.num_clusters() != s {
        return Err(Error::dim("perturbation_report", format!("{s} clusters"), format!("{}", y.num_clusters())));
    }
    if x.dim() != y.dim() {
        return Err(Error::dim("perturbation_report", format!("dimension {}", x.dim()), format!("{}", y.dim())));
    }
    if q_blocks.len() != s {
        return Err(Error::dim("perturbation_report couplings", s, q_blocks.len()));
    }
    for (i, q) in q_blocks.iter().enumerate() {
        let expected = (x.cluster(i).ncols(), y.cluster(i).ncols());
        if q.plan().shape() != expected {
            return Err(Error::dim(
                "perturbation_report coupling",
                format!("{expected:?}"),
                format!("{:?} at cluster {i}", q.plan().shape()),
            ));
        }
    }

    let dim = x.dim();
    let total_cols: usize = (0..s).map(|i| y.cluster(i).ncols()).sum();

    // X̄ = [X_1·(n_1 Q_11), …], Ȳ = [Y_1, …] — couplings rescaled to row
    // sums of 1 so permutation couplings match points exactly.
    let mut xbar = DMatrix::zeros(dim, total_cols);
    let mut ybar = DMatrix::zeros(dim, total_cols);
    let mut col = 0;
    for i in 0..s {
        let n_x = x.cluster(i).ncols() as f64;
        let width = y.cluster(i).ncols();
        let pushed = x.cluster(i) * (q_blocks[i].plan() * n_x);
        xbar.view_mut((0, col), (dim, width)).copy_from(&pushed);
        ybar.view_mut((0, col), (dim, width)).copy_from(y.cluster(i));
        col += width;
    }

    let gram_gap = ybar.transpose() * &ybar - xbar.transpose() * &xbar;
    let epsilon = gram_gap.norm().sqrt();

    let svd = xbar.clone().svd(false, false);
    let sigma_max = svd.singular_values.iter().cloned().fold(0.0, f64::max);
    let sigma_min = svd.singular_values.iter().cloned().fold(f64::INFINITY, f64::min);
    let full_row_rank =
        svd.singular_values.len() >= dim && sigma_max > 0.0 && sigma_min > RANK_TOL * sigma_max;

    let d_const = data_constant(x, y, q_blocks);
    let (bound, condition_ok) = if full_row_rank {
        let op_norm = sigma_max;
        let pinv_norm = 1.0 / sigma_min;
        let condition = epsilon * pinv_norm <= (op_norm * pinv_norm).powf(-0.5) / 2f64.sqrt();
        let bound = (op_norm * pinv_norm + 2.0).powi(2) * pinv_norm.powi(2) * epsilon.powi(4) + d_const;
        (Some(bound), condition)
    } else {
        (None, false)
    };

    let blockwise_eps = DMatrix::from_fn(s, s, |i, j| {
        let weight = 1.0 / ((y.cluster(i).ncols() as f64) * (y.cluster(j).ncols() as f64)).sqrt();
        let y_term = y.cluster(i).transpose() * y.cluster(j) * weight;
        let x_term = (x.cluster(i) * q_blocks[i].plan()).transpose() * (x.cluster(j) * q_blocks[j].plan());
        (y_term - x_term).norm()
    });

    Ok(PerturbationReport {
        epsilon,
        bound,
        condition_ok,
        data_constant: d_const,
        blockwise_eps,
    })
}

/// `Σ_i tr(X_i(I/n_x − Q_iiQ_iiᵀ)X_iᵀ) + (1/n_y − 1)·tr(Y_iY_iᵀ)`.
fn data_constant(x: &ClusteredDataset, y: &ClusteredDataset, q_blocks: &[Coupling]) -> f64 {
    let mut total = 0.0;
    for i in 0..x.num_clusters() {
        let x_i = x.cluster(i);
        let y_i = y.cluster(i);
        let n_x = x_i.ncols() as f64;
        let n_y = y_i.ncols() as f64;
        let pushed = x_i * q_blocks[i].plan();
        total += x_i.norm_squared() / n_x - pushed.norm_squared();
        total += (1.0 / n_y - 1.0) * y_i.norm_squared();
    }
    total
}
