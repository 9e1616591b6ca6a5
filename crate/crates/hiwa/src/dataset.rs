//! Clustered point-cloud datasets.

use nalgebra::DMatrix;

use crate::error::{Error, Result};

/// A dataset of `S` clusters, each a `D×n_i` matrix whose columns are
/// embedding coordinates of individual points.
///
/// Every cluster shares the embedding dimension `D`; cluster sizes may
/// differ. All entries must be finite and every cluster must contain at
/// least one point.
#[derive(Debug, Clone, PartialEq)]
pub struct ClusteredDataset {
    clusters: Vec<DMatrix<f64>>,
}

impl ClusteredDataset {
    /// Build a dataset from per-cluster coordinate matrices.
    pub fn new(clusters: Vec<DMatrix<f64>>) -> Result<Self> {
        if clusters.is_empty() {
            return Err(Error::InvalidInput("dataset has no clusters".into()));
        }
        let dim = clusters[0].nrows();
        for (i, c) in clusters.iter().enumerate() {
            if c.ncols() == 0 {
                return Err(Error::InvalidInput(format!("cluster {i} is empty")));
            }
            if c.nrows() != dim {
                return Err(Error::dim(
                    "cluster embedding dimension",
                    format!("{dim} rows"),
                    format!("{} rows in cluster {i}", c.nrows()),
                ));
            }
            if c.iter().any(|v| !v.is_finite()) {
                return Err(Error::NonFinite("dataset coordinates"));
            }
        }
        Ok(Self { clusters })
    }

    /// Embedding dimension `D`.
    pub fn dim(&self) -> usize {
        self.clusters[0].nrows()
    }

    /// Number of clusters `S`.
    pub fn num_clusters(&self) -> usize {
        self.clusters.len()
    }

    /// Points in cluster `i`.
    pub fn cluster(&self, i: usize) -> &DMatrix<f64> {
        &self.clusters[i]
    }

    pub fn clusters(&self) -> &[DMatrix<f64>] {
        &self.clusters
    }

    /// Per-cluster point counts.
    pub fn cluster_sizes(&self) -> Vec<usize> {
        self.clusters.iter().map(|c| c.ncols()).collect()
    }

    pub fn total_points(&self) -> usize {
        self.clusters.iter().map(|c| c.ncols()).sum()
    }

    /// All points concatenated column-wise in cluster order.
    pub fn pooled(&self) -> DMatrix<f64> {
        let dim = self.dim();
        let total = self.total_points();
        let mut out = DMatrix::zeros(dim, total);
        let mut col = 0;
        for c in &self.clusters {
            out.view_mut((0, col), (dim, c.ncols())).copy_from(c);
            col += c.ncols();
        }
        out
    }

    /// The same points as a single-cluster dataset (cluster structure
    /// discarded). Used by the flat alignment mode.
    pub fn pooled_dataset(&self) -> Self {
        Self {
            clusters: vec![self.pooled()],
        }
    }
}

#[cfg(test)]
mod tests {
    use super::*;

    #[test]
    fn rejects_empty_and_mismatched() {
        assert!(ClusteredDataset::new(vec![]).is_err());
        assert!(ClusteredDataset::new(vec![DMatrix::zeros(2, 0)]).is_err());
        let a = DMatrix::zeros(2, 3);
        let b = DMatrix::zeros(3, 3);
        assert!(ClusteredDataset::new(vec![a, b]).is_err());
    }

    #[test]
    fn rejects_non_finite() {
        let mut a = DMatrix::zeros(2, 2);
        a[(0, 0)] = f64::NAN;
        assert!(matches!(
            ClusteredDataset::new(vec![a]),
            Err(Error::NonFinite(_))
        ));
    }

    #[test]
    fn pooled_concatenates_in_cluster_order() {
        let a = DMatrix::from_row_slice(2, 2, &[1.0, 2.0, 5.0, 6.0]);
        let b = DMatrix::from_row_slice(2, 1, &[3.0, 7.0]);
        let ds = ClusteredDataset::new(vec![a, b]).unwrap();
        let pooled = ds.pooled();
        assert_eq!(pooled.ncols(), 3);
        assert_eq!(pooled[(0, 2)], 3.0);
        assert_eq!(pooled[(1, 0)], 5.0);
        let flat = ds.pooled_dataset();
        assert_eq!(flat.num_clusters(), 1);
        assert_eq!(flat.cluster(0), &pooled);
    }
}
