//! File formats shared by the CLI and the library.
//!
//! Point data travels as CSV with a `cluster,dim_0,…,dim_{D-1}` header,
//! one row per point, `.` decimal separator, and shortest-round-trip
//! float formatting (parsing a written file reproduces the matrices
//! bit for bit). Ground truth and alignment results are JSON; matrices
//! are nested row-major arrays. The result schema is published in the
//! repository at `schemas/result.schema.json`.

use std::fmt::Write as _;
use std::fs;
use std::path::Path;

use nalgebra::DMatrix;
use serde::{Deserialize, Serialize};

use crate::datagen::GroundTruth;
use crate::dataset::ClusteredDataset;
use crate::diagnostics::{DisambiguityReport, MetricReport, PerturbationReport};
use crate::error::{Error, Result};
use crate::manifold::OrthogonalTransform;
use crate::solver::{AlignmentResult, ResolvedConfig};

/// Nested row-major copy of a matrix.
pub fn matrix_to_rows(m: &DMatrix<f64>) -> Vec<Vec<f64>> {
    (0..m.nrows())
        .map(|i| (0..m.ncols()).map(|j| m[(i, j)]).collect())
        .collect()
}

/// Rebuild a matrix from nested row-major arrays.
pub fn rows_to_matrix(rows: &[Vec<f64>]) -> Result<DMatrix<f64>> {
    let nrows = rows.len();
    if nrows == 0 {
        return Err(Error::Parse("matrix has no rows".into()));
    }
    let ncols = rows[0].len();
    if ncols == 0 || rows.iter().any(|r| r.len() != ncols) {
        return Err(Error::Parse("matrix rows have inconsistent lengths".into()));
    }
    Ok(DMatrix::from_fn(nrows, ncols, |i, j| rows[i][j]))
}

/// Render a dataset in the CSV point format.
pub fn dataset_to_csv(ds: &ClusteredDataset) -> String {
    let dim = ds.dim();
    let mut out = String::from("cluster");
    for d in 0..dim {
        let _ = write!(out, ",dim_{d}");
    }
    out.push('\n');
    for (label, cluster) in ds.clusters().iter().enumerate() {
        for col in cluster.column_iter() {
            let _ = write!(out, "{label}");
            for v in col.iter() {
                let _ = write!(out, ",{v}");
            }
            out.push('\n');
        }
    }
    out
}

/// Parse the CSV point format. Every cluster label in `0..S−1` must be
/// present at least once and the column count must be constant.
pub fn dataset_from_csv(text: &str) -> Result<ClusteredDataset> {
    let mut lines = text.lines();
    let header = lines.next().ok_or_else(|| Error::Parse("empty dataset file".into()))?;
    let fields: Vec<&str> = header.trim_end_matches('\r').split(',').collect();
    if fields.first() != Some(&"cluster") || fields.len() < 2 {
        return Err(Error::Parse(format!("bad header: {header:?}")));
    }
    let dim = fields.len() - 1;
    for (d, field) in fields[1..].iter().enumerate() {
        if *field != format!("dim_{d}") {
            return Err(Error::Parse(format!("bad header column {field:?}, expected dim_{d}")));
        }
    }

    let mut points: Vec<(usize, Vec<f64>)> = Vec::new();
    let mut max_label = 0usize;
    for (lineno, line) in lines.enumerate() {
        let line = line.trim_end_matches('\r');
        if line.is_empty() {
            continue;
        }
        let cells: Vec<&str> = line.split(',').collect();
        if cells.len() != dim + 1 {
            return Err(Error::Parse(format!(
                "line {}: expected {} columns, found {}",
                lineno + 2,
                dim + 1,
                cells.len()
            )));
        }
        let label: usize = cells[0]
            .parse()
            .map_err(|_| Error::Parse(format!("line {}: bad cluster label {:?}", lineno + 2, cells[0])))?;
        let coords: Vec<f64> = cells[1..]
            .iter()
            .map(|c| c.parse::<f64>().map_err(|_| Error::Parse(format!("line {}: bad number {c:?}", lineno + 2))))
            .collect::<Result<_>>()?;
        max_label = max_label.max(label);
        points.push((label, coords));
    }
    if points.is_empty() {
        return Err(Error::Parse("dataset file has no points".into()));
    }

    let s = max_label + 1;
    let mut per_cluster: Vec<Vec<Vec<f64>>> = vec![Vec::new(); s];
    for (label, coords) in points {
        per_cluster[label].push(coords);
    }
    let clusters: Vec<DMatrix<f64>> = per_cluster
        .iter()
        .enumerate()
        .map(|(label, pts)| {
            if pts.is_empty() {
                return Err(Error::Parse(format!("cluster label {label} is missing")));
            }
            Ok(DMatrix::from_fn(dim, pts.len(), |i, j| pts[j][i]))
        })
        .collect::<Result<_>>()?;
    ClusteredDataset::new(clusters)
}

pub fn save_dataset(ds: &ClusteredDataset, path: &Path) -> Result<()> {
    fs::write(path, dataset_to_csv(ds))?;
    Ok(())
}

pub fn load_dataset(path: &Path) -> Result<ClusteredDataset> {
    dataset_from_csv(&fs::read_to_string(path)?)
}

/// Ground truth in file form.
#[derive(Debug, Clone, Serialize, Deserialize)]
pub struct TruthFile {
    #[serde(rename = "R_star")]
    pub r_star: Vec<Vec<f64>>,
    #[serde(rename = "P_star")]
    pub p_star: Vec<Vec<f64>>,
    pub permutation: Vec<usize>,
    pub subspace_bases: Vec<Vec<Vec<f64>>>,
}

impl TruthFile {
    pub fn from_truth(truth: &GroundTruth) -> Self {
        Self {
            r_star: matrix_to_rows(truth.r_star.matrix()),
            p_star: matrix_to_rows(&truth.p_star),
            permutation: truth.permutation.clone(),
            subspace_bases: truth.subspace_bases.iter().map(matrix_to_rows).collect(),
        }
    }

    pub fn to_truth(&self) -> Result<GroundTruth> {
        Ok(GroundTruth {
            r_star: OrthogonalTransform::try_new(rows_to_matrix(&self.r_star)?)?,
            p_star: rows_to_matrix(&self.p_star)?,
            permutation: self.permutation.clone(),
            subspace_bases: self
                .subspace_bases
                .iter()
                .map(|b| rows_to_matrix(b))
                .collect::<Result<_>>()?,
        })
    }

    pub fn to_json(&self) -> Result<String> {
        Ok(serde_json::to_string_pretty(self)? + "\n")
    }

    pub fn from_json(text: &str) -> Result<Self> {
        Ok(serde_json::from_str(text)?)
    }
}

/// Disambiguity report in file form (`thresholds` omitted when the
/// criterion is inapplicable).
#[derive(Debug, Clone, Serialize, Deserialize)]
pub struct DisambiguityJson {
    pub margins: Vec<Vec<f64>>,
    pub thresholds: Option<Vec<Vec<f64>>>,
    pub satisfied: bool,
    pub applicable: bool,
    pub delta: f64,
}

impl DisambiguityJson {
    pub fn from_report(report: &DisambiguityReport) -> Self {
        Self {
            margins: matrix_to_rows(&report.margins),
            thresholds: report.applicable.then(|| matrix_to_rows(&report.thresholds)),
            satisfied: report.satisfied,
            applicable: report.applicable,
            delta: report.delta,
        }
    }
}

/// Perturbation report in file form (`bound` null when inapplicable).
#[derive(Debug, Clone, Serialize, Deserialize)]
pub struct PerturbationJson {
    pub epsilon: f64,
    /// The Gram discrepancy `ε² = ‖ȲᵀY̅ − X̄ᵀX̄‖_F` itself.
    pub epsilon_squared: f64,
    pub bound: Option<f64>,
    pub condition_ok: bool,
    pub data_constant: f64,
    pub blockwise_eps: Vec<Vec<f64>>,
}

impl PerturbationJson {
    pub fn from_report(report: &PerturbationReport) -> Self {
        Self {
            epsilon: report.epsilon,
            epsilon_squared: report.epsilon * report.epsilon,
            bound: report.bound,
            condition_ok: report.condition_ok,
            data_constant: report.data_constant,
            blockwise_eps: matrix_to_rows(&report.blockwise_eps),
        }
    }
}

#[derive(Debug, Clone, Serialize, Deserialize)]
pub struct DiagnosticsSection {
    #[serde(skip_serializing_if = "Option::is_none")]
    pub disambiguity: Option<DisambiguityJson>,
    #[serde(skip_serializing_if = "Option::is_none")]
    pub perturbation: Option<PerturbationJson>,
}

/// An alignment run in file form. Every number is finite; matrices are
/// row-major. `wall_time_sec` is the only field that varies between
/// reruns of the same seed — everything else is bit-reproducible for
/// any worker-pool size.
#[derive(Debug, Clone, Serialize, Deserialize)]
pub struct ResultFile {
    pub schema_version: u32,
    #[serde(rename = "R")]
    pub r: Vec<Vec<f64>>,
    #[serde(rename = "P")]
    pub p: Vec<Vec<f64>>,
    pub objective_trace: Vec<f64>,
    pub primal_residual_trace: Vec<f64>,
    pub marginal_violation_trace: Vec<f64>,
    pub iterations: usize,
    pub converged: bool,
    #[serde(rename = "det_R")]
    pub det_r: f64,
    pub wall_time_sec: f64,
    pub config: ResolvedConfig,
    pub seed: u64,
    pub sinkhorn_nonconverged: usize,
    pub degenerate_svd: bool,
    #[serde(skip_serializing_if = "Option::is_none")]
    pub metrics: Option<MetricReport>,
    #[serde(skip_serializing_if = "Option::is_none")]
    pub diagnostics: Option<DiagnosticsSection>,
}

pub const RESULT_SCHEMA_VERSION: u32 = 1;

impl ResultFile {
    pub fn from_result(
        result: &AlignmentResult,
        metrics: Option<MetricReport>,
        diagnostics: Option<DiagnosticsSection>,
    ) -> Self {
        Self {
            schema_version: RESULT_SCHEMA_VERSION,
            r: matrix_to_rows(result.transform.matrix()),
            p: matrix_to_rows(&result.correspondence),
            objective_trace: result.objective_trace.clone(),
            primal_residual_trace: result.primal_residual_trace.clone(),
            marginal_violation_trace: result.marginal_violation_trace.clone(),
            iterations: result.iterations,
            converged: result.converged,
            det_r: result.det_r,
            wall_time_sec: result.wall_time_sec,
            config: result.config.clone(),
            seed: result.config.seed,
            sinkhorn_nonconverged: result.sinkhorn_nonconverged,
            degenerate_svd: result.degenerate_svd,
            metrics,
            diagnostics,
        }
    }

    pub fn to_json(&self) -> Result<String> {
        Ok(serde_json::to_string_pretty(self)? + "\n")
    }

    pub fn from_json(text: &str) -> Result<Self> {
        Ok(serde_json::from_str(text)?)
    }
}
