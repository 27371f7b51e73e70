use rand::Rng;
use rand_distr::StandardNormal;

use super::kmeans::{kmeans, nearest};
use super::{bic_score, check_points, distinct_points, ClusterModel, ClusteringParams};
use crate::rng;
use crate::Result;

/// Fraction of a cluster's RMS radius by which split children are pushed
/// away from the parent centroid.
const SPLIT_OFFSET: f64 = 0.5;

/// X-Means: K-Means that grows `k` while splitting clusters improves BIC.
///
/// Starts from `k_min` k-means++ seeds and alternates
///
/// * improve-params: Lloyd over all points with `params.tolerance`;
/// * improve-structure: every cluster with at least three points proposes two
///   children at `centroid ± 0.5 * rms_radius * u` for a seeded random unit
///   vector `u`, refines them with 2-means on its own points, and keeps them
///   when the 2-cluster BIC beats the 1-cluster BIC on those points.
///
/// Accepted splits are applied best-gain first without exceeding `k_max`.
/// The loop stops when no split is accepted or `k` reaches `k_max`.
///
/// When the data hold fewer distinct points than `k_min` (or `k_max`), the
/// bound is lowered to the distinct count.
pub fn xmeans(points: &[Vec<f64>], params: &ClusteringParams) -> Result<ClusterModel> {
    params.validate()?;
    let d = check_points(points)?;
    let distinct = distinct_points(points);
    let k_min = params.k_min.min(distinct);
    let k_max = params.k_max.min(distinct);
    let mut rng = rng::stream(params.rng_seed);

    let mut centroids = kmeans_pp(points, k_min, &mut rng);
    loop {
        let model = kmeans(points, &centroids, params.tolerance)?.model;
        if model.k() >= k_max {
            return Ok(model);
        }

        let mut proposals: Vec<(f64, usize, [Vec<f64>; 2])> = Vec::new();
        for c in 0..model.k() {
            // Draw for every cluster so the stream does not depend on which
            // clusters qualify.
            let direction = unit_vector(d, &mut rng);
            let members: Vec<Vec<f64>> = points
                .iter()
                .zip(&model.assignment)
                .filter(|(_, &a)| a == c)
                .map(|(p, _)| p.clone())
                .collect();
            if members.len() < 3 || distinct_points(&members) < 2 {
                continue;
            }
            let parent = &model.centroids[c];
            let parent_model = ClusterModel {
                centroids: vec![parent.clone()],
                sizes: vec![members.len()],
                assignment: vec![0; members.len()],
                sse: 0.0,
            };
            let radius = members
                .iter()
                .map(|p| super::squared_distance(p, parent))
                .sum::<f64>()
                / members.len() as f64;
            let offset = SPLIT_OFFSET * radius.sqrt();
            let children: Vec<Vec<f64>> = [1.0, -1.0]
                .iter()
                .map(|sign| {
                    parent
                        .iter()
                        .zip(&direction)
                        .map(|(x, u)| x + sign * offset * u)
                        .collect()
                })
                .collect();
            let split = kmeans(&members, &children, params.tolerance)?.model;
            let before = bic_score(&members, &parent_model)?;
            let after = bic_score(&members, &split)?;
            if after > before {
                let gain = if before.is_finite() { after - before } else { f64::INFINITY };
                let [a, b]: [Vec<f64>; 2] = split.centroids.try_into().expect("two children");
                proposals.push((gain, c, [a, b]));
            }
        }
        if proposals.is_empty() {
            return Ok(model);
        }

        proposals.sort_by(|x, y| y.0.total_cmp(&x.0).then(x.1.cmp(&y.1)));
        proposals.truncate(k_max - model.k());
        let mut accepted: Vec<Option<[Vec<f64>; 2]>> = vec![None; model.k()];
        for (_, c, children) in proposals {
            accepted[c] = Some(children);
        }
        centroids = Vec::with_capacity(model.k() * 2);
        for (c, split) in accepted.into_iter().enumerate() {
            match split {
                Some([a, b]) => {
                    centroids.push(a);
                    centroids.push(b);
                }
                None => centroids.push(model.centroids[c].clone()),
            }
        }
    }
}

/// k-means++ seeding: the first centre uniformly, the rest with probability
/// proportional to squared distance from the nearest chosen centre.
fn kmeans_pp<R: Rng + ?Sized>(points: &[Vec<f64>], k: usize, rng: &mut R) -> Vec<Vec<f64>> {
    let first = rng.random_range(0..points.len());
    let mut centres = vec![points[first].clone()];
    let mut dist: Vec<f64> = points
        .iter()
        .map(|p| super::squared_distance(p, &centres[0]))
        .collect();
    while centres.len() < k {
        let total: f64 = dist.iter().sum();
        let mut target = rng::unit_open_closed(rng) * total;
        let mut pick = None;
        for (i, &w) in dist.iter().enumerate() {
            if w <= 0.0 {
                continue;
            }
            pick = Some(i);
            if target <= w {
                break;
            }
            target -= w;
        }
        // k never exceeds the distinct count, so some weight is positive.
        let chosen = pick.expect("a point away from every centre");
        centres.push(points[chosen].clone());
        for (p, w) in points.iter().zip(dist.iter_mut()) {
            *w = w.min(super::squared_distance(p, &points[chosen]));
        }
    }
    centres
}

fn unit_vector<R: Rng + ?Sized>(d: usize, rng: &mut R) -> Vec<f64> {
    loop {
        let v: Vec<f64> = (0..d).map(|_| rng.sample(StandardNormal)).collect();
        let norm = v.iter().map(|x| x * x).sum::<f64>().sqrt();
        if norm > 1e-12 {
            return v.into_iter().map(|x| x / norm).collect();
        }
    }
}

/// Index of the centroid nearest to `point`.
pub fn predict(model: &ClusterModel, point: &[f64]) -> usize {
    nearest(point, &model.centroids).0
}
