//! Entropically regularized optimal transport between point clouds.
//!
//! The building blocks here are deliberately small: a squared-distance
//! cost matrix (normalized by the embedding dimension), the Sinkhorn
//! scaling iteration `u ← a ⊘ Kv`, `v ← b ⊘ Kᵀu` with `K = exp(−C/γ)`,
//! and evaluation of transport cost and negative entropy. Everything is
//! a pure function of its inputs.
//!
//! Small `γ` makes `K` underflow in plain form, so a log-domain
//! (log-sum-exp) variant of the same fixed-point iteration is selected
//! automatically whenever `exp(−max(C)/γ)` would fall below the normal
//! floating-point range. Both paths converge to the same coupling.

use nalgebra::{DMatrix, DVector};

use crate::error::{Error, Result};
use crate::manifold::OrthogonalTransform;

/// Marginal violations are measured every this many scaling iterations.
const CHECK_EVERY: usize = 10;

/// Safety margin (in nats) above the smallest normal `f64` when deciding
/// whether `exp(−C/γ)` is representable.
const LOG_UNDERFLOW_MARGIN: f64 = 40.0;

/// A nonnegative `m×n` matrix of pairwise squared distances divided by
/// the embedding dimension `D`.
#[derive(Debug, Clone, PartialEq)]
pub struct CostMatrix {
    entries: DMatrix<f64>,
}

impl CostMatrix {
    /// Wrap an explicit cost matrix. Entries must be finite and ≥ 0.
    pub fn new(entries: DMatrix<f64>) -> Result<Self> {
        if entries.nrows() == 0 || entries.ncols() == 0 {
            return Err(Error::InvalidInput("cost matrix has a zero dimension".into()));
        }
        if entries.iter().any(|v| !v.is_finite()) {
            return Err(Error::NonFinite("cost matrix"));
        }
        if entries.iter().any(|&v| v < 0.0) {
            return Err(Error::InvalidInput("cost matrix has negative entries".into()));
        }
        Ok(Self { entries })
    }

    pub fn nrows(&self) -> usize {
        self.entries.nrows()
    }

    pub fn ncols(&self) -> usize {
        self.entries.ncols()
    }

    pub fn entries(&self) -> &DMatrix<f64> {
        &self.entries
    }

    pub fn max_entry(&self) -> f64 {
        self.entries.iter().cloned().fold(0.0, f64::max)
    }

    pub fn min_entry(&self) -> f64 {
        self.entries.iter().cloned().fold(f64::INFINITY, f64::min)
    }
}

/// A transport plan together with the marginals it is constrained to.
#[derive(Debug, Clone, PartialEq)]
pub struct Coupling {
    plan: DMatrix<f64>,
    row_marginal: DVector<f64>,
    col_marginal: DVector<f64>,
}

impl Coupling {
    pub fn new(plan: DMatrix<f64>, row_marginal: DVector<f64>, col_marginal: DVector<f64>) -> Result<Self> {
        if plan.nrows() != row_marginal.len() || plan.ncols() != col_marginal.len() {
            return Err(Error::dim(
                "coupling marginals",
                format!("{}×{}", plan.nrows(), plan.ncols()),
                format!("{} rows / {} cols", row_marginal.len(), col_marginal.len()),
            ));
        }
        if plan.iter().any(|&v| !v.is_finite() || v < 0.0) {
            return Err(Error::InvalidInput("coupling entries must be finite and ≥ 0".into()));
        }
        Ok(Self { plan, row_marginal, col_marginal })
    }

    /// The product coupling of the uniform marginals `1_m/m` and `1_n/n`;
    /// every entry is `1/(mn)`.
    pub fn uniform(m: usize, n: usize) -> Self {
        Self {
            plan: DMatrix::from_element(m, n, 1.0 / (m as f64 * n as f64)),
            row_marginal: DVector::from_element(m, 1.0 / m as f64),
            col_marginal: DVector::from_element(n, 1.0 / n as f64),
        }
    }

    pub fn plan(&self) -> &DMatrix<f64> {
        &self.plan
    }

    pub fn row_marginal(&self) -> &DVector<f64> {
        &self.row_marginal
    }

    pub fn col_marginal(&self) -> &DVector<f64> {
        &self.col_marginal
    }

    /// L∞ violation of both marginal constraints.
    pub fn max_marginal_violation(&self) -> f64 {
        let mut worst: f64 = 0.0;
        for k in 0..self.plan.nrows() {
            let s: f64 = self.plan.row(k).iter().sum();
            worst = worst.max((s - self.row_marginal[k]).abs());
        }
        for l in 0..self.plan.ncols() {
            let s: f64 = self.plan.column(l).iter().sum();
            worst = worst.max((s - self.col_marginal[l]).abs());
        }
        worst
    }

    pub fn transposed(&self) -> Self {
        Self {
            plan: self.plan.transpose(),
            row_marginal: self.col_marginal.clone(),
            col_marginal: self.row_marginal.clone(),
        }
    }
}

/// Parameters of a Sinkhorn solve.
#[derive(Debug, Clone, Copy, PartialEq)]
pub struct SinkhornParams {
    /// Entropic regularization weight γ.
    pub gamma: f64,
    pub max_iters: usize,
    /// Stop once the L∞ marginal violation drops below this.
    pub tol: f64,
}

impl SinkhornParams {
    /// Defaults used for the inner point-coupling solves: `max_iters`
    /// 1000 and `tol` 1e-9.
    pub fn new(gamma: f64) -> Self {
        Self { gamma, max_iters: 1000, tol: 1e-9 }
    }

    pub fn validate(&self) -> Result<()> {
        if !(self.gamma > 0.0 && self.gamma.is_finite()) {
            return Err(Error::InvalidInput(format!("gamma must be positive and finite, got {}", self.gamma)));
        }
        if !(self.tol > 0.0) {
            return Err(Error::InvalidInput(format!("tol must be positive, got {}", self.tol)));
        }
        if self.max_iters == 0 {
            return Err(Error::InvalidInput("max_iters must be ≥ 1".into()));
        }
        Ok(())
    }
}

/// Which implementation of the scaling iteration to run.
#[derive(Debug, Clone, Copy, PartialEq, Eq)]
pub enum SinkhornPath {
    /// Pick plain or log-domain based on whether `exp(−C/γ)` underflows.
    Auto,
    Plain,
    LogDomain,
}

/// Outcome of a Sinkhorn solve. Non-convergence is flagged, never raised:
/// `coupling` then holds the best (lowest-violation) iterate observed.
#[derive(Debug, Clone)]
pub struct SinkhornOutput {
    pub coupling: Coupling,
    pub converged: bool,
    pub iterations: usize,
    /// L∞ marginal violation of the returned plan.
    pub violation: f64,
    /// True when the log-domain path produced the result.
    pub log_domain: bool,
}

/// Pairwise transport cost between a transformed source cluster and a
/// target cluster: entry `(k, l)` is `‖R·X(:,k) − Y(:,l)‖² / D`.
///
/// Computed through the expansion `‖Rx‖² + ‖y‖² − 2⟨Rx, y⟩` so the whole
/// matrix costs one `D×D · D×n` and one `n×D · D×m` product.
pub fn build_pair_cost(x: &DMatrix<f64>, y: &DMatrix<f64>, r: &OrthogonalTransform) -> Result<CostMatrix> {
    let d = x.nrows();
    if y.nrows() != d {
        return Err(Error::dim("build_pair_cost", format!("{d} rows"), format!("{} rows", y.nrows())));
    }
    if r.dim() != d {
        return Err(Error::dim("build_pair_cost transform", format!("{d}×{d}"), format!("{0}×{0}", r.dim())));
    }
    let rx = r.matrix() * x;
    // Row vector of squared norms per column.
    let rx_sq: Vec<f64> = rx.column_iter().map(|c| c.norm_squared()).collect();
    let y_sq: Vec<f64> = y.column_iter().map(|c| c.norm_squared()).collect();
    let cross = rx.transpose() * y; // n_x × n_y
    let inv_d = 1.0 / d as f64;
    let entries = DMatrix::from_fn(x.ncols(), y.ncols(), |k, l| {
        // Clamp away the tiny negatives the expansion can produce for
        // coincident points.
        ((rx_sq[k] + y_sq[l] - 2.0 * cross[(k, l)]) * inv_d).max(0.0)
    });
    CostMatrix::new(entries)
}

/// Total transport cost `Σ_{k,l} Q(k,l)·C(k,l)`.
pub fn transport_cost(plan: &Coupling, cost: &CostMatrix) -> Result<f64> {
    if plan.plan().shape() != cost.entries().shape() {
        return Err(Error::dim(
            "transport_cost",
            format!("{:?}", cost.entries().shape()),
            format!("{:?}", plan.plan().shape()),
        ));
    }
    Ok(plan.plan().dot(cost.entries()))
}

/// Negative entropy `H_γ(P) = γ Σ P_ij log P_ij`, with `0·log 0 := 0`.
/// Always ≤ 0 for plans with entries in `[0, 1]`.
pub fn neg_entropy(plan: &Coupling, gamma: f64) -> f64 {
    if gamma == 0.0 {
        return 0.0;
    }
    gamma * plan.plan().iter().map(|&p| if p > 0.0 { p * p.ln() } else { 0.0 }).sum::<f64>()
}

/// Solve the entropic transport problem
/// `min ⟨Q, C⟩ + γ Σ Q log Q` over couplings with the given marginals,
/// by Sinkhorn scaling. See [`sinkhorn_with_path`] for path control.
pub fn sinkhorn(
    cost: &CostMatrix,
    params: &SinkhornParams,
    row_marginal: &DVector<f64>,
    col_marginal: &DVector<f64>,
) -> Result<SinkhornOutput> {
    sinkhorn_with_path(cost, params, row_marginal, col_marginal, SinkhornPath::Auto)
}

/// [`sinkhorn`] with an explicit choice of scaling-iteration
/// implementation. `Plain` falls back to the log-domain path if the
/// kernel or a scaling vector leaves the representable range
/// mid-iteration, so a silent NaN is never produced.
pub fn sinkhorn_with_path(
    cost: &CostMatrix,
    params: &SinkhornParams,
    row_marginal: &DVector<f64>,
    col_marginal: &DVector<f64>,
    path: SinkhornPath,
) -> Result<SinkhornOutput> {
    params.validate()?;
    validate_marginal(row_marginal, cost.nrows(), "row")?;
    validate_marginal(col_marginal, cost.ncols(), "col")?;

    let use_log = match path {
        SinkhornPath::LogDomain => true,
        SinkhornPath::Plain => false,
        SinkhornPath::Auto => {
            // Smallest kernel entry is exp(−max(C)/γ); go to log space
            // when it sits within a safety margin of the underflow edge.
            let log_min_kernel = -cost.max_entry() / params.gamma;
            log_min_kernel < f64::MIN_POSITIVE.ln() + LOG_UNDERFLOW_MARGIN
        }
    };

    if use_log {
        sinkhorn_log(cost, params, row_marginal, col_marginal)
    } else {
        match sinkhorn_plain(cost, params, row_marginal, col_marginal) {
            Some(out) => Ok(out),
            // Scaling vectors left the representable range; redo in log space.
            None => sinkhorn_log(cost, params, row_marginal, col_marginal),
        }
    }
}

fn validate_marginal(m: &DVector<f64>, expected_len: usize, side: &'static str) -> Result<()> {
    if m.len() != expected_len {
        return Err(Error::dim("sinkhorn marginal", expected_len, m.len()));
    }
    if m.iter().any(|&v| !(v > 0.0) || !v.is_finite()) {
        return Err(Error::InvalidInput(format!("{side} marginal must be strictly positive")));
    }
    let sum: f64 = m.iter().sum();
    if (sum - 1.0).abs() > 1e-6 {
        return Err(Error::InvalidInput(format!("{side} marginal sums to {sum}, expected 1")));
    }
    Ok(())
}

/// Plain scaling iteration. Returns `None` if it hits a zero division or
/// non-finite scaling factor (caller retries in log space).
fn sinkhorn_plain(
    cost: &CostMatrix,
    params: &SinkhornParams,
    a: &DVector<f64>,
    b: &DVector<f64>,
) -> Option<SinkhornOutput> {
    let (m, n) = (cost.nrows(), cost.ncols());
    let kernel = cost.entries().map(|c| (-c / params.gamma).exp());

    let mut u = DVector::<f64>::zeros(m);
    let mut v = b.clone();
    let mut kv = DVector::<f64>::zeros(m);
    let mut ktu = DVector::<f64>::zeros(n);

    let mut best: Option<(f64, DVector<f64>, DVector<f64>)> = None;
    let mut iterations = 0;
    let mut converged = false;

    for t in 1..=params.max_iters {
        iterations = t;
        kv.gemv(1.0, &kernel, &v, 0.0);
        if kv.iter().any(|&x| x <= 0.0 || !x.is_finite()) {
            return None;
        }
        for k in 0..m {
            u[k] = a[k] / kv[k];
        }
        ktu.gemv_tr(1.0, &kernel, &u, 0.0);
        if ktu.iter().any(|&x| x <= 0.0 || !x.is_finite()) {
            return None;
        }
        for l in 0..n {
            v[l] = b[l] / ktu[l];
        }
        if u.iter().chain(v.iter()).any(|x| !x.is_finite()) {
            return None;
        }

        if t % CHECK_EVERY == 0 || t == params.max_iters {
            // Columns are exact right after the v-update; the residual
            // lives in the rows.
            kv.gemv(1.0, &kernel, &v, 0.0);
            let mut viol: f64 = 0.0;
            for k in 0..m {
                viol = viol.max((u[k] * kv[k] - a[k]).abs());
            }
            if best.as_ref().map_or(true, |(bv, _, _)| viol < *bv) {
                best = Some((viol, u.clone(), v.clone()));
            }
            if viol <= params.tol {
                converged = true;
                break;
            }
        }
    }

    let (violation, u, v) = best?;
    let mut plan = kernel;
    for l in 0..n {
        for k in 0..m {
            plan[(k, l)] *= u[k] * v[l];
        }
    }
    let coupling = Coupling {
        plan,
        row_marginal: a.clone(),
        col_marginal: b.clone(),
    };
    Some(SinkhornOutput { coupling, converged, iterations, violation, log_domain: false })
}

/// Log-domain scaling iteration over dual potentials `f`, `g` with
/// `u = e^f`, `v = e^g`; algebraically the same fixed point as the plain
/// path but immune to kernel underflow.
fn sinkhorn_log(
    cost: &CostMatrix,
    params: &SinkhornParams,
    a: &DVector<f64>,
    b: &DVector<f64>,
) -> Result<SinkhornOutput> {
    let (m, n) = (cost.nrows(), cost.ncols());
    let scaled = cost.entries().map(|c| c / params.gamma); // M = C/γ
    let log_a = a.map(f64::ln);
    let log_b = b.map(f64::ln);

    let mut f = DVector::<f64>::zeros(m);
    let mut g = log_b.clone();
    let mut row_lse = DVector::<f64>::zeros(m); // LSE_l(g_l − M_kl) per row
    let mut col_lse = DVector::<f64>::zeros(n); // LSE_k(f_k − M_kl) per col

    let mut best: Option<(f64, DVector<f64>, DVector<f64>)> = None;
    let mut iterations = 0;
    let mut converged = false;

    for t in 1..=params.max_iters {
        iterations = t;
        lse_rows(&scaled, &g, &mut row_lse);
        for k in 0..m {
            f[k] = log_a[k] - row_lse[k];
        }
        lse_cols(&scaled, &f, &mut col_lse);
        for l in 0..n {
            g[l] = log_b[l] - col_lse[l];
        }

        if t % CHECK_EVERY == 0 || t == params.max_iters {
            lse_rows(&scaled, &g, &mut row_lse);
            let mut viol: f64 = 0.0;
            for k in 0..m {
                viol = viol.max(((f[k] + row_lse[k]).exp() - a[k]).abs());
            }
            if best.as_ref().map_or(true, |(bv, _, _)| viol < *bv) {
                best = Some((viol, f.clone(), g.clone()));
            }
            if viol <= params.tol {
                converged = true;
                break;
            }
        }
    }

    let (violation, f, g) = best.expect("at least one violation check runs");
    let plan = DMatrix::from_fn(m, n, |k, l| (f[k] + g[l] - scaled[(k, l)]).exp());
    if plan.iter().any(|x| !x.is_finite()) {
        return Err(Error::Numerical("log-domain Sinkhorn produced a non-finite plan".into()));
    }
    let coupling = Coupling {
        plan,
        row_marginal: a.clone(),
        col_marginal: b.clone(),
    };
    Ok(SinkhornOutput { coupling, converged, iterations, violation, log_domain: true })
}

/// `out[k] = log Σ_l exp(g[l] − m[(k,l)])`.
fn lse_rows(m: &DMatrix<f64>, g: &DVector<f64>, out: &mut DVector<f64>) {
    for k in 0..m.nrows() {
        let mut hi = f64::NEG_INFINITY;
        for l in 0..m.ncols() {
            hi = hi.max(g[l] - m[(k, l)]);
        }
        if hi == f64::NEG_INFINITY {
            out[k] = f64::NEG_INFINITY;
            continue;
        }
        let mut s = 0.0;
        for l in 0..m.ncols() {
            s += (g[l] - m[(k, l)] - hi).exp();
        }
        out[k] = hi + s.ln();
    }
}

/// `out[l] = log Σ_k exp(f[k] − m[(k,l)])`.
fn lse_cols(m: &DMatrix<f64>, f: &DVector<f64>, out: &mut DVector<f64>) {
    for l in 0..m.ncols() {
        let mut hi = f64::NEG_INFINITY;
        for k in 0..m.nrows() {
            hi = hi.max(f[k] - m[(k, l)]);
        }
        if hi == f64::NEG_INFINITY {
            out[l] = f64::NEG_INFINITY;
            continue;
        }
        let mut s = 0.0;
        for k in 0..m.nrows() {
            s += (f[k] - m[(k, l)] - hi).exp();
        }
        out[l] = hi + s.ln();
    }
}

/// Uniform marginal `1_n/n`.
pub fn uniform_marginal(n: usize) -> DVector<f64> {
    DVector::from_element(n, 1.0 / n as f64)
}
