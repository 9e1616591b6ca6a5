//! Synthetic clustered datasets with known ground truth.
//!
//! Each cluster is a Gaussian in `d` intrinsic dimensions — mean drawn
//! from `N(0, I_d)`, covariance `A Aᵀ` for a Gaussian `A` — embedded
//! into `ℝ^D` through an orthonormal basis `V_i`. The second dataset is
//! generated from the same cluster laws (fresh draws unless
//! `shared_samples`), transformed by a Haar-random orthogonal `R*`,
//! optionally permuted across clusters, and optionally corrupted with
//! ambient Gaussian noise.
//!
//! All randomness flows through per-stage ChaCha streams of a single
//! seed, so generation is bit-reproducible and changing one stage
//! (e.g. the permutation flag) does not disturb the others.

use nalgebra::{DMatrix, DVector};
use rand::{Rng, SeedableRng};
use rand_chacha::ChaCha8Rng;
use rand_distr::StandardNormal;

use crate::dataset::ClusteredDataset;
use crate::error::{Error, Result};
use crate::manifold::{self, OrthogonalTransform};

/// Which subspace configuration the clusters are embedded into.
#[derive(Debug, Clone, Copy, PartialEq, Eq)]
pub enum SubspaceMode {
    /// Independent draws from the Grassmann manifold (QR of a Gaussian).
    Random,
    /// The worst-case configuration: every pair of bases overlaps in one
    /// shared direction (operator norms `‖V_iᵀV_j‖ = 1`) and the
    /// remaining directions fan out at equal angles. Supported for
    /// `d = 2`, `D ≥ 3`.
    EquallySpaced,
}

/// Generation parameters.
#[derive(Debug, Clone, PartialEq)]
pub struct GenSpec {
    /// Cluster count `S`.
    pub clusters: usize,
    /// Intrinsic cluster dimension `d`.
    pub intrinsic_dim: usize,
    /// Embedding dimension `D ≥ d`.
    pub ambient_dim: usize,
    /// Points per cluster `n`.
    pub samples_per_cluster: usize,
    pub subspace_mode: SubspaceMode,
    /// Standard deviation of ambient Gaussian noise added to the second
    /// dataset (0 keeps it exactly low-rank).
    pub noise_sigma: f64,
    /// Shuffle cluster identities of the second dataset.
    pub permute_clusters: bool,
    pub seed: u64,
    /// Reuse the first dataset's draws for the second, making
    /// `Y_j = R*·X_{π(j)}` exactly. Off by default: the unsupervised
    /// setting resamples fresh points from the same cluster laws.
    pub shared_samples: bool,
    /// Force `R* = I` instead of a Haar draw.
    pub identity_transform: bool,
}

impl GenSpec {
    pub fn validate(&self) -> Result<()> {
        if self.clusters == 0 || self.samples_per_cluster == 0 {
            return Err(Error::InvalidInput("clusters and samples per cluster must be ≥ 1".into()));
        }
        if self.intrinsic_dim == 0 || self.intrinsic_dim > self.ambient_dim {
            return Err(Error::InvalidInput(format!(
                "need 1 ≤ d ≤ D, got d={} D={}",
                self.intrinsic_dim, self.ambient_dim
            )));
        }
        if !(self.noise_sigma >= 0.0 && self.noise_sigma.is_finite()) {
            return Err(Error::InvalidInput(format!("noise_sigma must be ≥ 0, got {}", self.noise_sigma)));
        }
        Ok(())
    }
}

/// What the generator knows and the solver has to recover.
#[derive(Debug, Clone)]
pub struct GroundTruth {
    pub r_star: OrthogonalTransform,
    /// True correspondence: `P*[π(j), j] = 1/S`.
    pub p_star: DMatrix<f64>,
    /// Orthonormal embedding bases `V_i`, one per cluster of the first
    /// dataset.
    pub subspace_bases: Vec<DMatrix<f64>>,
    /// `π(j)` = index of the first-dataset cluster that became cluster
    /// `j` of the second dataset.
    pub permutation: Vec<usize>,
}

// Stream ids for the per-stage generators.
const STREAM_BASES: u64 = 0;
const STREAM_PARAMS: u64 = 1;
const STREAM_X: u64 = 2;
const STREAM_Y: u64 = 3;
const STREAM_TRANSFORM: u64 = 4;
const STREAM_PERMUTATION: u64 = 5;
const STREAM_NOISE: u64 = 6;

fn stage_rng(seed: u64, stream: u64) -> ChaCha8Rng {
    let mut rng = ChaCha8Rng::seed_from_u64(seed);
    rng.set_stream(stream);
    rng
}

/// Generate the dataset pair and its ground truth.
pub fn generate(spec: &GenSpec) -> Result<(ClusteredDataset, ClusteredDataset, GroundTruth)> {
    spec.validate()?;
    let s = spec.clusters;
    let d = spec.intrinsic_dim;
    let big_d = spec.ambient_dim;
    let n = spec.samples_per_cluster;

    let bases = match spec.subspace_mode {
        SubspaceMode::Random => {
            let mut rng = stage_rng(spec.seed, STREAM_BASES);
            (0..s).map(|_| random_basis(big_d, d, &mut rng)).collect::<Vec<_>>()
        }
        SubspaceMode::EquallySpaced => equally_spaced_subspaces(s, d, big_d, spec.seed)?,
    };

    // Per-cluster Gaussian parameters: mean μ_i ~ N(0, I_d) and a
    // factor A_i whose product A_i A_iᵀ is the (PSD) covariance.
    let mut params_rng = stage_rng(spec.seed, STREAM_PARAMS);
    let means: Vec<DVector<f64>> = (0..s)
        .map(|_| DVector::from_fn(d, |_, _| params_rng.sample::<f64, _>(StandardNormal)))
        .collect();
    let factors: Vec<DMatrix<f64>> = (0..s)
        .map(|_| DMatrix::from_fn(d, d, |_, _| params_rng.sample::<f64, _>(StandardNormal)))
        .collect();

    let sample_cluster = |i: usize, rng: &mut ChaCha8Rng| -> DMatrix<f64> {
        let z = DMatrix::from_fn(d, n, |_, _| rng.sample::<f64, _>(StandardNormal));
        let mut intrinsic = &factors[i] * z;
        for mut col in intrinsic.column_iter_mut() {
            col += &means[i];
        }
        &bases[i] * intrinsic
    };

    let mut x_rng = stage_rng(spec.seed, STREAM_X);
    let x_clusters: Vec<DMatrix<f64>> = (0..s).map(|i| sample_cluster(i, &mut x_rng)).collect();

    let r_star = if spec.identity_transform {
        OrthogonalTransform::identity(big_d)
    } else {
        let mut rng = stage_rng(spec.seed, STREAM_TRANSFORM);
        manifold::random_orthogonal_from_rng(big_d, &mut rng)
    };

    let permutation: Vec<usize> = if spec.permute_clusters {
        let mut rng = stage_rng(spec.seed, STREAM_PERMUTATION);
        let mut perm: Vec<usize> = (0..s).collect();
        // Fisher–Yates.
        for i in (1..s).rev() {
            let j = rng.random_range(0..=i);
            perm.swap(i, j);
        }
        perm
    } else {
        (0..s).collect()
    };

    let mut y_rng = stage_rng(spec.seed, STREAM_Y);
    let mut noise_rng = stage_rng(spec.seed, STREAM_NOISE);
    let y_clusters: Vec<DMatrix<f64>> = permutation
        .iter()
        .map(|&source| {
            let fresh = if spec.shared_samples {
                x_clusters[source].clone()
            } else {
                sample_cluster(source, &mut y_rng)
            };
            let mut cluster = r_star.apply(&fresh);
            if spec.noise_sigma > 0.0 {
                for v in cluster.iter_mut() {
                    *v += spec.noise_sigma * noise_rng.sample::<f64, _>(StandardNormal);
                }
            }
            cluster
        })
        .collect();

    let mut p_star = DMatrix::zeros(s, s);
    for (j, &source) in permutation.iter().enumerate() {
        p_star[(source, j)] = 1.0 / s as f64;
    }

    let truth = GroundTruth {
        r_star,
        p_star,
        subspace_bases: bases,
        permutation,
    };
    Ok((
        ClusteredDataset::new(x_clusters)?,
        ClusteredDataset::new(y_clusters)?,
        truth,
    ))
}

/// `S` independent orthonormal `D×d` bases (QR of Gaussian matrices),
/// deterministic per seed.
pub fn random_subspaces(s: usize, d: usize, big_d: usize, seed: u64) -> Result<Vec<DMatrix<f64>>> {
    if d == 0 || d > big_d {
        return Err(Error::InvalidInput(format!("need 1 ≤ d ≤ D, got d={d} D={big_d}")));
    }
    let mut rng = stage_rng(seed, STREAM_BASES);
    Ok((0..s).map(|_| random_basis(big_d, d, &mut rng)).collect())
}

fn random_basis(big_d: usize, d: usize, rng: &mut ChaCha8Rng) -> DMatrix<f64> {
    let gaussian = DMatrix::from_fn(big_d, d, |_, _| rng.sample::<f64, _>(StandardNormal));
    manifold::gaussian_to_orthonormal(gaussian)
}

/// The worst-case subspace configuration: all bases share the first
/// coordinate axis, and their second directions fan out in a fixed
/// 2-plane at angles `kπ/S`. Every pairwise operator norm `‖V_iᵀV_j‖`
/// is exactly 1 and adjacent second principal angles all equal `π/S`.
///
/// Only `d = 2` with `D ≥ 3` is supported; the `seed` argument is
/// accepted for interface uniformity but the construction is
/// deterministic.
pub fn equally_spaced_subspaces(s: usize, d: usize, big_d: usize, _seed: u64) -> Result<Vec<DMatrix<f64>>> {
    if d != 2 || big_d < 3 {
        return Err(Error::UnsupportedConfiguration(format!(
            "equally spaced subspaces require d = 2 and D ≥ 3, got d={d} D={big_d}"
        )));
    }
    Ok((0..s)
        .map(|k| {
            let angle = k as f64 * std::f64::consts::PI / s as f64;
            let mut basis = DMatrix::zeros(big_d, 2);
            basis[(0, 0)] = 1.0;
            basis[(1, 1)] = angle.cos();
            basis[(2, 1)] = angle.sin();
            basis
        })
        .collect())
}
