//! Bregman hard clustering of patch rows.

use ndarray::{Array2, ArrayView1, ArrayView2, Axis};
use rayon::prelude::*;
use serde::{Deserialize, Serialize};

use crate::error::{NlpcaError, Result};
use crate::imaging::{CountImage, Image};
use crate::rng::Rng;

/// Floor applied to center coordinates before the logarithm of the Poisson divergence.
pub const POISSON_CLAMP: f64 = 1e-10;

#[derive(Debug, Clone, Copy, PartialEq, Eq, Serialize, Deserialize)]
#[serde(rename_all = "lowercase")]
pub enum Divergence {
    /// Squared Euclidean distance.
    Gaussian,
    /// `sum_j c_j - f_j log c_j`, the Poisson divergence up to terms constant in `c`.
    Poisson,
}

/// Divergence of `point` from `center`.
pub fn bregman_divergence(kind: Divergence, point: ArrayView1<f64>, center: ArrayView1<f64>) -> Result<f64> {
    if point.len() != center.len() {
        return Err(NlpcaError::shape(format!(
            "point has {} coordinates, center {}",
            point.len(),
            center.len()
        )));
    }
    Ok(match kind {
        Divergence::Gaussian => point.iter().zip(center).map(|(f, c)| (f - c) * (f - c)).sum(),
        Divergence::Poisson => {
            if point.iter().any(|&f| f < 0.0) {
                return Err(NlpcaError::invalid("Poisson divergence needs nonnegative points"));
            }
            point
                .iter()
                .zip(center)
                .map(|(f, &c)| {
                    let c = c.max(POISSON_CLAMP);
                    c - f * c.ln()
                })
                .sum()
        }
    })
}

/// Result of [`bregman_kmeans`].
#[derive(Debug, Clone, PartialEq, Serialize, Deserialize)]
pub struct Clustering {
    pub labels: Vec<usize>,
    /// One center per row.
    pub centers: Array2<f64>,
    /// Within-cluster divergence sum after each estimation step.
    pub objective: Vec<f64>,
    pub iterations: usize,
    pub converged: bool,
}

impl Clustering {
    pub fn k(&self) -> usize {
        self.centers.nrows()
    }

    /// Point indices of each cluster, in increasing order.
    pub fn members(&self) -> Vec<Vec<usize>> {
        let mut out = vec![Vec::new(); self.k()];
        for (i, &l) in self.labels.iter().enumerate() {
            out[l].push(i);
        }
        out
    }

    pub fn sizes(&self) -> Vec<usize> {
        self.members().iter().map(Vec::len).collect()
    }
}

/// Precomputed per-center quantities so that each divergence is one dot product.
struct CenterTable {
    kind: Divergence,
    centers: Array2<f64>,
    /// Poisson: clamped log-centers; Gaussian: unused.
    logs: Array2<f64>,
    /// Poisson: sum of clamped centers.
    sums: Vec<f64>,
}

impl CenterTable {
    fn new(kind: Divergence, centers: Array2<f64>) -> Self {
        let clamped = centers.mapv(|c| c.max(POISSON_CLAMP));
        let (logs, sums) = match kind {
            Divergence::Poisson => (clamped.mapv(f64::ln), clamped.sum_axis(Axis(1)).to_vec()),
            Divergence::Gaussian => (Array2::zeros((0, 0)), Vec::new()),
        };
        CenterTable {
            kind,
            centers,
            logs,
            sums,
        }
    }

    fn divergence(&self, point: ArrayView1<f64>, k: usize) -> f64 {
        match self.kind {
            Divergence::Gaussian => point
                .iter()
                .zip(self.centers.row(k))
                .map(|(f, c)| (f - c) * (f - c))
                .sum(),
            Divergence::Poisson => self.sums[k] - point.dot(&self.logs.row(k)),
        }
    }

    /// Closest center, ties going to the lowest index.
    fn nearest(&self, point: ArrayView1<f64>) -> (usize, f64) {
        let mut best = (0, self.divergence(point, 0));
        for k in 1..self.centers.nrows() {
            let d = self.divergence(point, k);
            if d < best.1 {
                best = (k, d);
            }
        }
        best
    }
}

fn objective(points: ArrayView2<f64>, labels: &[usize], table: &CenterTable) -> f64 {
    points
        .outer_iter()
        .zip(labels)
        .map(|(p, &l)| table.divergence(p, l))
        .sum()
}

/// Bregman k-means over the rows of `points`.
///
/// Centers start at `k` distinct rows drawn without replacement from `rng`.
/// Each iteration assigns every point to its closest center (lowest index on
/// ties), repairs empty clusters, then moves every center to the mean of its
/// members. It stops when no label changes or after `max_iter` iterations.
///
/// An empty cluster is re-seeded with the point that is farthest from its
/// current center among clusters with more than one member; that point moves
/// to the empty cluster.
pub fn bregman_kmeans(points: ArrayView2<f64>, k: usize, kind: Divergence, rng: &mut Rng, max_iter: usize) -> Result<Clustering> {
    let m = points.nrows();
    if k == 0 || k > m {
        return Err(NlpcaError::invalid(format!("need 1 <= K <= M, got K={k}, M={m}")));
    }
    if max_iter == 0 {
        return Err(NlpcaError::invalid("max_iter must be at least 1"));
    }
    if kind == Divergence::Poisson && points.iter().any(|&v| v < 0.0) {
        return Err(NlpcaError::invalid("Poisson clustering needs nonnegative points"));
    }

    let seeds = rng.sample_without_replacement(m, k);
    bregman_kmeans_from(points, points.select(Axis(0), &seeds), kind, max_iter)
}

/// [`bregman_kmeans`] started from explicit initial centers (one per row).
pub fn bregman_kmeans_from(points: ArrayView2<f64>, initial_centers: Array2<f64>, kind: Divergence, max_iter: usize) -> Result<Clustering> {
    let m = points.nrows();
    let k = initial_centers.nrows();
    if k == 0 || k > m || initial_centers.ncols() != points.ncols() {
        return Err(NlpcaError::invalid(format!(
            "need 1 <= K <= M centers of length {}, got {:?}",
            points.ncols(),
            initial_centers.dim()
        )));
    }
    if max_iter == 0 {
        return Err(NlpcaError::invalid("max_iter must be at least 1"));
    }
    let mut centers = initial_centers;
    let mut labels: Vec<usize> = vec![usize::MAX; m];
    let mut history = Vec::new();
    let mut converged = false;
    let mut iterations = 0;

    while iterations < max_iter {
        iterations += 1;
        let table = CenterTable::new(kind, centers.clone());
        let assigned: Vec<(usize, f64)> = (0..m)
            .into_par_iter()
            .map(|i| table.nearest(points.row(i)))
            .collect();
        let mut new_labels: Vec<usize> = assigned.iter().map(|a| a.0).collect();
        let mut cost: Vec<f64> = assigned.iter().map(|a| a.1).collect();

        repair_empty_clusters(points, &mut new_labels, &mut cost, &mut centers, kind);

        let unchanged = new_labels == labels;
        labels = new_labels;
        centers = cluster_means(points, &labels, &centers);
        history.push(objective(points, &labels, &CenterTable::new(kind, centers.clone())));
        if unchanged {
            converged = true;
            break;
        }
    }

    Ok(Clustering {
        labels,
        centers,
        objective: history,
        iterations,
        converged,
    })
}

fn repair_empty_clusters(points: ArrayView2<f64>, labels: &mut [usize], cost: &mut [f64], centers: &mut Array2<f64>, kind: Divergence) {
    let k = centers.nrows();
    loop {
        let mut sizes = vec![0usize; k];
        for &l in labels.iter() {
            sizes[l] += 1;
        }
        let Some(empty) = sizes.iter().position(|&s| s == 0) else {
            return;
        };
        let donor = (0..labels.len())
            .filter(|&i| sizes[labels[i]] > 1)
            .fold(None::<usize>, |best, i| match best {
                Some(b) if cost[b] >= cost[i] => Some(b),
                _ => Some(i),
            })
            .expect("K <= M leaves a cluster with two members");
        centers.row_mut(empty).assign(&points.row(donor));
        labels[donor] = empty;
        let table = CenterTable::new(kind, centers.slice(ndarray::s![empty..empty + 1, ..]).to_owned());
        cost[donor] = table.divergence(points.row(donor), 0);
    }
}

fn cluster_means(points: ArrayView2<f64>, labels: &[usize], previous: &Array2<f64>) -> Array2<f64> {
    let mut sums = Array2::<f64>::zeros(previous.dim());
    let mut counts = vec![0usize; previous.nrows()];
    for (p, &l) in points.outer_iter().zip(labels) {
        let mut row = sums.row_mut(l);
        row += &p;
        counts[l] += 1;
    }
    for (mut row, (&n, prev)) in sums.outer_iter_mut().zip(counts.iter().zip(previous.outer_iter())) {
        if n == 0 {
            row.assign(&prev);
        } else {
            row /= n as f64;
        }
    }
    sums
}

/// Sums a cube over its band axis, giving the 2D image used to cluster spectral patches.
pub fn cluster_image_for_spectral(cube: &CountImage) -> Result<CountImage> {
    if cube.ndim() != 3 {
        return Err(NlpcaError::shape(format!("expected a 3D cube, got shape {:?}", cube.shape())));
    }
    let b = cube.bands();
    let data = cube
        .data()
        .chunks(b)
        .map(|px| {
            px.iter()
                .try_fold(0u32, |acc, &v| acc.checked_add(v))
                .ok_or_else(|| NlpcaError::numeric("cluster_image_for_spectral", "band sum overflows u32"))
        })
        .collect::<Result<Vec<u32>>>()?;
    Image::new(vec![cube.height(), cube.width()], data)
}
