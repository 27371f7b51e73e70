//! K-Means and X-Means over normalized feature vectors.
//!
//! Points are rows of a dense `[0, 1]^d` matrix. The objective everywhere is
//! the sum of squared Euclidean distances from points to their centroids.

mod bic;
mod kmeans;
mod xmeans;

use std::path::Path;

use serde::{Deserialize, Serialize};

use crate::{Error, Result};

pub use bic::bic_score;
pub use kmeans::{kmeans, KMeansRun, DEFAULT_MAX_ITERATIONS};
pub use xmeans::{predict, xmeans};

/// Centroids, cluster sizes and point assignments.
#[derive(Debug, Clone, PartialEq, Serialize, Deserialize)]
pub struct ClusterModel {
    pub centroids: Vec<Vec<f64>>,
    pub sizes: Vec<usize>,
    /// Cluster index of each point, in input row order.
    pub assignment: Vec<usize>,
    pub sse: f64,
}

impl ClusterModel {
    pub fn k(&self) -> usize {
        self.centroids.len()
    }

    pub fn dim(&self) -> usize {
        self.centroids.first().map_or(0, Vec::len)
    }

    /// Checks the structural invariants: sizes agree with the assignment,
    /// no cluster is empty and every coordinate is a probability.
    pub fn validate(&self) -> Result<()> {
        let k = self.k();
        if k == 0 {
            return Err(Error::Validation("model has no clusters".into()));
        }
        if self.sizes.len() != k {
            return Err(Error::Validation(format!(
                "{} sizes for {k} centroids",
                self.sizes.len()
            )));
        }
        let d = self.dim();
        let mut counted = vec![0usize; k];
        for &a in &self.assignment {
            let slot = counted
                .get_mut(a)
                .ok_or_else(|| Error::Validation(format!("assignment to cluster {a} of {k}")))?;
            *slot += 1;
        }
        if counted != self.sizes {
            return Err(Error::Validation("cluster sizes disagree with assignment".into()));
        }
        if self.sizes.contains(&0) {
            return Err(Error::Validation("empty cluster in model".into()));
        }
        for c in &self.centroids {
            if c.len() != d {
                return Err(Error::Validation("centroids of unequal dimension".into()));
            }
            if c.iter().any(|x| !(0.0..=1.0).contains(x)) {
                return Err(Error::Validation("centroid coordinate outside [0, 1]".into()));
            }
        }
        if self.sse.is_nan() || self.sse < 0.0 {
            return Err(Error::Validation("negative or NaN SSE".into()));
        }
        Ok(())
    }
}

#[derive(Debug, Clone, Copy, PartialEq, Eq, Serialize, Deserialize)]
#[serde(rename_all = "lowercase")]
pub enum SplitCriterion {
    Bic,
}

#[derive(Debug, Clone, Copy, PartialEq, Eq, Serialize, Deserialize)]
#[serde(rename_all = "lowercase")]
pub enum DistanceMetric {
    /// Squared Euclidean distance; the clustering objective is the SSE.
    Sse,
}

#[derive(Debug, Clone, PartialEq, Serialize, Deserialize)]
#[serde(default)]
pub struct ClusteringParams {
    pub k_min: usize,
    pub k_max: usize,
    /// Improve-params stops once no centroid moves farther than this.
    pub tolerance: f64,
    pub splitting: SplitCriterion,
    pub distance: DistanceMetric,
    pub rng_seed: u64,
}

impl Default for ClusteringParams {
    fn default() -> Self {
        ClusteringParams {
            k_min: 2,
            k_max: 200,
            tolerance: 0.025,
            splitting: SplitCriterion::Bic,
            distance: DistanceMetric::Sse,
            rng_seed: 0,
        }
    }
}

impl ClusteringParams {
    pub fn validate(&self) -> Result<()> {
        if self.k_min < 1 {
            return Err(Error::Validation("k_min must be at least 1".into()));
        }
        if self.k_max < self.k_min {
            return Err(Error::Validation(format!(
                "k_max ({}) is below k_min ({})",
                self.k_max, self.k_min
            )));
        }
        if !(self.tolerance > 0.0 && self.tolerance.is_finite()) {
            return Err(Error::Validation(format!(
                "tolerance must be a positive number, got {}",
                self.tolerance
            )));
        }
        Ok(())
    }
}

pub(crate) fn squared_distance(a: &[f64], b: &[f64]) -> f64 {
    a.iter().zip(b).map(|(x, y)| (x - y) * (x - y)).sum()
}

/// Number of distinct rows, comparing coordinates bitwise.
pub(crate) fn distinct_points(points: &[Vec<f64>]) -> usize {
    let mut keys: Vec<Vec<u64>> = points
        .iter()
        .map(|p| p.iter().map(|x| (x + 0.0).to_bits()).collect())
        .collect();
    keys.sort_unstable();
    keys.dedup();
    keys.len()
}

pub(crate) fn check_points(points: &[Vec<f64>]) -> Result<usize> {
    let first = points
        .first()
        .ok_or_else(|| Error::Validation("no points to cluster".into()))?;
    let d = first.len();
    if d == 0 {
        return Err(Error::Validation("points have zero dimensions".into()));
    }
    for p in points {
        if p.len() != d {
            return Err(Error::Validation("points of unequal dimension".into()));
        }
        if p.iter().any(|x| !x.is_finite()) {
            return Err(Error::Validation("non-finite coordinate".into()));
        }
    }
    Ok(d)
}

/// On-disk model: centroids plus enough context to audit and reuse them.
#[derive(Debug, Clone, PartialEq, Serialize, Deserialize)]
pub struct ModelFile {
    pub format: String,
    pub catalog_version: String,
    pub feature_names: Vec<String>,
    pub params: ClusteringParams,
    pub k: usize,
    pub centroids: Vec<Vec<f64>>,
    pub sizes: Vec<usize>,
    pub sse: f64,
    pub program_ids: Vec<String>,
    pub assignment: Vec<usize>,
}

pub const MODEL_FORMAT: &str = "cfgsmith-model/1";

impl ModelFile {
    pub fn new(
        catalog_version: &str,
        feature_names: Vec<String>,
        params: ClusteringParams,
        program_ids: Vec<String>,
        model: &ClusterModel,
    ) -> Self {
        ModelFile {
            format: MODEL_FORMAT.into(),
            catalog_version: catalog_version.into(),
            feature_names,
            params,
            k: model.k(),
            centroids: model.centroids.clone(),
            sizes: model.sizes.clone(),
            sse: model.sse,
            program_ids,
            assignment: model.assignment.clone(),
        }
    }

    pub fn model(&self) -> ClusterModel {
        ClusterModel {
            centroids: self.centroids.clone(),
            sizes: self.sizes.clone(),
            assignment: self.assignment.clone(),
            sse: self.sse,
        }
    }

    pub fn to_json(&self) -> String {
        serde_json::to_string_pretty(self).expect("model serializes")
    }

    pub fn from_json(text: &str) -> Result<Self> {
        let file: ModelFile =
            serde_json::from_str(text).map_err(|e| Error::format("model file", e))?;
        if file.format != MODEL_FORMAT {
            return Err(Error::format(
                "model file",
                format!("unsupported format `{}`", file.format),
            ));
        }
        if file.k != file.centroids.len() {
            return Err(Error::Validation(format!(
                "model declares k = {} but has {} centroids",
                file.k,
                file.centroids.len()
            )));
        }
        if file.program_ids.len() != file.assignment.len() {
            return Err(Error::Validation("program ids and assignment differ in length".into()));
        }
        file.model().validate()?;
        if file.dim() != file.feature_names.len() {
            return Err(Error::Validation(format!(
                "centroids have {} coordinates, {} features named",
                file.dim(),
                file.feature_names.len()
            )));
        }
        Ok(file)
    }

    fn dim(&self) -> usize {
        self.centroids.first().map_or(0, Vec::len)
    }

    pub fn save(&self, path: &Path) -> Result<()> {
        std::fs::write(path, self.to_json() + "\n").map_err(|e| Error::io(path, e))
    }

    pub fn load(path: &Path) -> Result<Self> {
        let text = std::fs::read_to_string(path).map_err(|e| Error::io(path, e))?;
        Self::from_json(&text)
    }
}
