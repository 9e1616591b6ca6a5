//! Orthogonal-Procrustes solves over the orthogonal group `O(D)`.
//!
//! The alignment transform class is the square Stiefel manifold
//! `{R : RᵀR = I}` — the full orthogonal group, reflections included.
//! `stiefel_align` maximizes `tr(A Rᵀ)` by the polar factor `U Vᵀ` of an
//! SVD `A = U Σ Vᵀ`; `consensus_align` applies it to a fixed-order sum
//! of summands, and `random_orthogonal` samples Haar-distributed (up to
//! reflection) matrices from the QR of a Gaussian matrix.

use nalgebra::DMatrix;
use rand::{Rng, SeedableRng};
use rand_chacha::ChaCha8Rng;
use rand_distr::StandardNormal;

use crate::error::{Error, Result};

/// Maximum tolerated drift `‖RᵀR − I‖_F` before a matrix stops counting
/// as orthogonal.
pub const ORTHOGONALITY_TOL: f64 = 1e-10;

/// Singular-value ratio below which a Procrustes solve is flagged as
/// degenerate (the maximizer is not unique).
const DEGENERACY_RATIO: f64 = 1e-12;

/// A `D×D` matrix `R` with `RᵀR = I` (determinant ±1; reflections are
/// permitted).
#[derive(Debug, Clone, PartialEq)]
pub struct OrthogonalTransform {
    matrix: DMatrix<f64>,
}

impl OrthogonalTransform {
    /// Validate orthonormality within [`ORTHOGONALITY_TOL`].
    pub fn try_new(matrix: DMatrix<f64>) -> Result<Self> {
        if matrix.nrows() != matrix.ncols() {
            return Err(Error::dim(
                "orthogonal transform",
                "square matrix",
                format!("{}×{}", matrix.nrows(), matrix.ncols()),
            ));
        }
        let drift = orthogonality_error(&matrix);
        if !drift.is_finite() || drift > ORTHOGONALITY_TOL {
            return Err(Error::InvalidInput(format!(
                "matrix is not orthogonal: ‖RᵀR − I‖_F = {drift:e}"
            )));
        }
        Ok(Self { matrix })
    }

    pub fn identity(dim: usize) -> Self {
        Self { matrix: DMatrix::identity(dim, dim) }
    }

    /// Wrap a matrix known to be orthogonal by construction,
    /// re-orthonormalizing via a polar projection if numerical drift
    /// exceeds the tolerance.
    pub(crate) fn from_orthogonal(matrix: DMatrix<f64>) -> Self {
        if orthogonality_error(&matrix) > ORTHOGONALITY_TOL {
            return stiefel_align(&matrix).expect("polar projection of near-orthogonal matrix");
        }
        Self { matrix }
    }

    pub fn dim(&self) -> usize {
        self.matrix.nrows()
    }

    pub fn matrix(&self) -> &DMatrix<f64> {
        &self.matrix
    }

    pub fn into_matrix(self) -> DMatrix<f64> {
        self.matrix
    }

    /// Apply to a `D×n` matrix of column points.
    pub fn apply(&self, points: &DMatrix<f64>) -> DMatrix<f64> {
        &self.matrix * points
    }

    pub fn determinant(&self) -> f64 {
        self.matrix.determinant()
    }

    /// `‖RᵀR − I‖_F`.
    pub fn orthogonality_error(&self) -> f64 {
        orthogonality_error(&self.matrix)
    }
}

fn orthogonality_error(m: &DMatrix<f64>) -> f64 {
    let d = m.ncols();
    (m.transpose() * m - DMatrix::<f64>::identity(d, d)).norm()
}

/// Extra facts about a Procrustes solve.
#[derive(Debug, Clone, Copy, PartialEq)]
pub struct StiefelAlignInfo {
    /// Smallest and largest singular values of the input.
    pub min_singular: f64,
    pub max_singular: f64,
    /// True when `min_singular < 1e-12 · max_singular`: the maximizer is
    /// effectively non-unique and the returned representative is fixed
    /// only by the deterministic SVD and sign convention.
    pub degenerate: bool,
}

/// `R = U Vᵀ` for an SVD `A = U Σ Vᵀ`: the orthogonal maximizer of
/// `tr(A Rᵀ)`. Deterministic: singular-vector pairs are sign-flipped so
/// the largest-magnitude entry of each left singular vector is positive.
pub fn stiefel_align(a: &DMatrix<f64>) -> Result<OrthogonalTransform> {
    stiefel_align_detailed(a).map(|(r, _)| r)
}

/// [`stiefel_align`] plus degeneracy metadata.
pub fn stiefel_align_detailed(a: &DMatrix<f64>) -> Result<(OrthogonalTransform, StiefelAlignInfo)> {
    if a.nrows() != a.ncols() {
        return Err(Error::dim("stiefel_align", "square matrix", format!("{}×{}", a.nrows(), a.ncols())));
    }
    if a.iter().any(|v| !v.is_finite()) {
        return Err(Error::NonFinite("stiefel_align input"));
    }
    let d = a.nrows();
    let svd = a.clone().svd(true, true);
    let mut u = svd.u.ok_or_else(|| Error::Numerical("SVD did not return U".into()))?;
    let mut v_t = svd.v_t.ok_or_else(|| Error::Numerical("SVD did not return Vᵀ".into()))?;
    let singular = &svd.singular_values;

    // Sign convention: flip each (u_j, v_j) pair so the largest-magnitude
    // entry of u_j is positive. UVᵀ itself is invariant under paired
    // flips; the convention pins down the reported factors.
    for j in 0..d {
        let mut arg = 0;
        let mut hi = 0.0;
        for i in 0..d {
            let mag = u[(i, j)].abs();
            if mag > hi {
                hi = mag;
                arg = i;
            }
        }
        if u[(arg, j)] < 0.0 {
            for i in 0..d {
                u[(i, j)] = -u[(i, j)];
                v_t[(j, i)] = -v_t[(j, i)];
            }
        }
    }

    let max_singular = singular.iter().cloned().fold(0.0, f64::max);
    let min_singular = singular.iter().cloned().fold(f64::INFINITY, f64::min);
    let info = StiefelAlignInfo {
        min_singular,
        max_singular,
        degenerate: min_singular < DEGENERACY_RATIO * max_singular,
    };
    let r = OrthogonalTransform::from_orthogonal(u * v_t);
    Ok((r, info))
}

/// Procrustes solve of the fixed, index-ascending sum of `summands`:
/// `stiefel_align(Σ_k summands[k])`. The summation order is part of the
/// contract so parallel callers get bit-identical results.
pub fn consensus_align(summands: &[DMatrix<f64>]) -> Result<OrthogonalTransform> {
    consensus_align_detailed(summands).map(|(r, _)| r)
}

pub fn consensus_align_detailed(summands: &[DMatrix<f64>]) -> Result<(OrthogonalTransform, StiefelAlignInfo)> {
    let first = summands
        .first()
        .ok_or_else(|| Error::InvalidInput("consensus_align needs at least one summand".into()))?;
    let mut total = DMatrix::zeros(first.nrows(), first.ncols());
    for (k, s) in summands.iter().enumerate() {
        if s.shape() != first.shape() {
            return Err(Error::dim(
                "consensus_align summand",
                format!("{:?}", first.shape()),
                format!("{:?} at index {k}", s.shape()),
            ));
        }
        total += s;
    }
    stiefel_align_detailed(&total)
}

/// A Haar-distributed (up to reflection) orthogonal matrix: the Q factor
/// of a Gaussian `D×D` matrix with the R factor's diagonal signs
/// absorbed. Deterministic per seed.
pub fn random_orthogonal(dim: usize, seed: u64) -> OrthogonalTransform {
    let mut rng = ChaCha8Rng::seed_from_u64(seed);
    random_orthogonal_from_rng(dim, &mut rng)
}

/// As [`random_orthogonal`] but driven by a caller-supplied generator.
pub fn random_orthogonal_from_rng(dim: usize, rng: &mut impl Rng) -> OrthogonalTransform {
    assert!(dim >= 1, "dimension must be ≥ 1");
    let gaussian = DMatrix::from_fn(dim, dim, |_, _| rng.sample::<f64, _>(StandardNormal));
    OrthogonalTransform::from_orthogonal(gaussian_to_orthonormal(gaussian))
}

/// QR with the R-diagonal signs absorbed into Q. For a `D×d` input with
/// `D ≥ d` the result has orthonormal columns.
pub(crate) fn gaussian_to_orthonormal(gaussian: DMatrix<f64>) -> DMatrix<f64> {
    let cols = gaussian.ncols();
    let qr = gaussian.qr();
    let r = qr.r();
    let mut q = qr.q();
    for j in 0..cols {
        if r[(j, j)] < 0.0 {
            for i in 0..q.nrows() {
                q[(i, j)] = -q[(i, j)];
            }
        }
    }
    q
}

/// Frobenius distance between two transforms.
pub fn transform_distance(a: &OrthogonalTransform, b: &OrthogonalTransform) -> f64 {
    (a.matrix() - b.matrix()).norm()
}
