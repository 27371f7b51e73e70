use super::{check_points, distinct_points, squared_distance, ClusterModel};
use crate::{Error, Result};

pub const DEFAULT_MAX_ITERATIONS: usize = 500;

/// Result of one Lloyd run.
#[derive(Debug, Clone, PartialEq)]
pub struct KMeansRun {
    pub model: ClusterModel,
    /// Update steps performed.
    pub iterations: usize,
    /// SSE after each assignment step; non-increasing.
    pub sse_trace: Vec<f64>,
}

/// Lloyd's algorithm from the given initial centroids.
///
/// Points go to their nearest centroid under squared Euclidean distance
/// (ties to the lowest cluster index) and centroids move to the mean of
/// their points. Iteration ends when no centroid moves by `tolerance` or
/// more *and* the assignment is stable, so the returned centroids are the
/// means of their clusters and every point sits with its nearest centroid.
/// [`DEFAULT_MAX_ITERATIONS`] caps the run.
///
/// A cluster that loses all its points is re-seeded with the point farthest
/// from its own centroid among clusters that can spare one.
pub fn kmeans(points: &[Vec<f64>], initial: &[Vec<f64>], tolerance: f64) -> Result<KMeansRun> {
    kmeans_capped(points, initial, tolerance, DEFAULT_MAX_ITERATIONS)
}

pub(crate) fn kmeans_capped(
    points: &[Vec<f64>],
    initial: &[Vec<f64>],
    tolerance: f64,
    max_iterations: usize,
) -> Result<KMeansRun> {
    let d = check_points(points)?;
    let k = initial.len();
    if k == 0 {
        return Err(Error::Validation("k must be at least 1".into()));
    }
    if initial.iter().any(|c| c.len() != d) {
        return Err(Error::Validation(
            "initial centroid dimension differs from points".into(),
        ));
    }
    let distinct = distinct_points(points);
    if k > distinct {
        return Err(Error::Validation(format!(
            "k = {k} exceeds the {distinct} distinct points"
        )));
    }

    let mut centroids: Vec<Vec<f64>> = initial.to_vec();
    let mut assignment = assign(points, &centroids);
    let mut sse_trace = vec![sse_of(points, &centroids, &assignment)];
    let mut iterations = 0;

    while iterations < max_iterations {
        iterations += 1;
        repair_empty(points, &mut centroids, &mut assignment, k);
        let updated = means(points, &assignment, k, d);
        let shift = centroids
            .iter()
            .zip(&updated)
            .map(|(a, b)| squared_distance(a, b).sqrt())
            .fold(0.0, f64::max);
        centroids = updated;
        let next = assign(points, &centroids);
        let stable = next == assignment;
        assignment = next;
        sse_trace.push(sse_of(points, &centroids, &assignment));
        if stable && shift < tolerance {
            break;
        }
    }

    repair_empty(points, &mut centroids, &mut assignment, k);
    let mut sizes = vec![0usize; k];
    for &a in &assignment {
        sizes[a] += 1;
    }
    for c in &mut centroids {
        for x in c.iter_mut() {
            // Means of points in [0, 1] can drift by an ulp.
            *x = x.clamp(0.0, 1.0);
        }
    }
    let sse = sse_of(points, &centroids, &assignment);
    Ok(KMeansRun {
        model: ClusterModel {
            centroids,
            sizes,
            assignment,
            sse,
        },
        iterations,
        sse_trace,
    })
}

pub(crate) fn nearest(point: &[f64], centroids: &[Vec<f64>]) -> (usize, f64) {
    let mut best = (0, f64::INFINITY);
    for (j, c) in centroids.iter().enumerate() {
        let dist = squared_distance(point, c);
        if dist < best.1 {
            best = (j, dist);
        }
    }
    best
}

fn assign(points: &[Vec<f64>], centroids: &[Vec<f64>]) -> Vec<usize> {
    points.iter().map(|p| nearest(p, centroids).0).collect()
}

fn means(points: &[Vec<f64>], assignment: &[usize], k: usize, d: usize) -> Vec<Vec<f64>> {
    let mut sums = vec![vec![0.0; d]; k];
    let mut counts = vec![0usize; k];
    for (p, &a) in points.iter().zip(assignment) {
        counts[a] += 1;
        for (s, x) in sums[a].iter_mut().zip(p) {
            *s += x;
        }
    }
    for (s, &n) in sums.iter_mut().zip(&counts) {
        debug_assert!(n > 0, "means of an empty cluster");
        for x in s.iter_mut() {
            *x /= n as f64;
        }
    }
    sums
}

pub(crate) fn sse_of(points: &[Vec<f64>], centroids: &[Vec<f64>], assignment: &[usize]) -> f64 {
    points
        .iter()
        .zip(assignment)
        .map(|(p, &a)| squared_distance(p, &centroids[a]))
        .sum()
}

fn repair_empty(
    points: &[Vec<f64>],
    centroids: &mut [Vec<f64>],
    assignment: &mut [usize],
    k: usize,
) {
    let mut sizes = vec![0usize; k];
    for &a in assignment.iter() {
        sizes[a] += 1;
    }
    for empty in 0..k {
        if sizes[empty] != 0 {
            continue;
        }
        let mut far: Option<(usize, f64)> = None;
        for (i, p) in points.iter().enumerate() {
            let owner = assignment[i];
            if sizes[owner] < 2 {
                continue;
            }
            let dist = squared_distance(p, &centroids[owner]);
            if far.is_none_or(|(_, best)| dist > best) {
                far = Some((i, dist));
            }
        }
        // k <= distinct points guarantees a donor exists.
        let (i, _) = far.expect("a cluster with a spare point");
        sizes[assignment[i]] -= 1;
        sizes[empty] = 1;
        assignment[i] = empty;
        centroids[empty] = points[i].clone();
    }
}

#[cfg(test)]
mod tests {
    use super::*;
    use proptest::prelude::*;

    fn pts(v: &[&[f64]]) -> Vec<Vec<f64>> {
        v.iter().map(|p| p.to_vec()).collect()
    }

    /// Minimum SSE over every assignment of points to k non-empty labelled
    /// groups. Independent of Lloyd: enumerates k^n labelings.
    fn exhaustive_min_sse(points: &[Vec<f64>], k: usize) -> f64 {
        let n = points.len();
        let d = points[0].len();
        let total = k.pow(n as u32);
        let mut best = f64::INFINITY;
        let mut labels = vec![0usize; n];
        for code in 0..total {
            let mut c = code;
            for l in labels.iter_mut() {
                *l = c % k;
                c /= k;
            }
            let mut sum = vec![vec![0.0; d]; k];
            let mut cnt = vec![0usize; k];
            for (p, &l) in points.iter().zip(&labels) {
                cnt[l] += 1;
                for j in 0..d {
                    sum[l][j] += p[j];
                }
            }
            if cnt.contains(&0) {
                continue;
            }
            let mut s = 0.0;
            for (p, &l) in points.iter().zip(&labels) {
                for j in 0..d {
                    let m = sum[l][j] / cnt[l] as f64;
                    s += (p[j] - m) * (p[j] - m);
                }
            }
            best = best.min(s);
        }
        best
    }

    #[test]
    fn fixed_point_of_two_points() {
        let p = pts(&[&[0.0, 0.0], &[1.0, 1.0]]);
        let run = kmeans(&p, &p, 0.025).unwrap();
        assert_eq!(run.model.centroids, p);
        assert_eq!(run.model.sse, 0.0);
        assert_eq!(run.model.sizes, [1, 1]);
    }

    #[test]
    fn single_cluster_of_square() {
        let p = pts(&[&[0.0, 0.0], &[0.0, 1.0], &[1.0, 0.0], &[1.0, 1.0]]);
        let run = kmeans(&p, &[vec![0.0, 0.0]], 0.025).unwrap();
        assert_eq!(run.model.centroids, [vec![0.5, 0.5]]);
        // Four corners, each 0.5^2 + 0.5^2 = 0.5 from the centre.
        assert_eq!(run.model.sse, 2.0);
    }

    #[test]
    fn one_dimensional_pair_matches_exhaustive_optimum() {
        let p = pts(&[&[0.0], &[0.1], &[0.9], &[1.0]]);
        let run = kmeans(&p, &[vec![0.0], vec![1.0]], 0.025).unwrap();
        let c: Vec<f64> = run.model.centroids.iter().map(|c| c[0]).collect();
        assert!((c[0] - 0.05).abs() < 1e-15 && (c[1] - 0.95).abs() < 1e-15, "{c:?}");
        let optimum = exhaustive_min_sse(&p, 2);
        assert!((run.model.sse - optimum).abs() < 1e-15);
        assert!((optimum - 0.01).abs() < 1e-15);
    }

    #[test]
    fn validation_errors() {
        let p = pts(&[&[0.0], &[0.0], &[1.0]]);
        let three = [vec![0.0], vec![0.5], vec![1.0]];
        assert!(matches!(kmeans(&p, &three, 0.1), Err(Error::Validation(_))));
        assert!(matches!(kmeans(&[], &[vec![0.0]], 0.1), Err(Error::Validation(_))));
        assert!(matches!(kmeans(&p, &[vec![0.0, 1.0]], 0.1), Err(Error::Validation(_))));
    }

    #[test]
    fn empty_cluster_is_reseeded_with_farthest_point() {
        // Both initial centroids sit on the left; the far-right point is
        // farthest from its centroid and moves to the starved cluster.
        let p = pts(&[&[0.0], &[0.1], &[0.2], &[1.0]]);
        let run = kmeans(&p, &[vec![0.1], vec![0.1]], 0.025).unwrap();
        assert_eq!(run.model.k(), 2);
        assert!(!run.model.sizes.contains(&0));
        assert_eq!(run.model.centroids[1], vec![1.0]);
        assert!((run.model.centroids[0][0] - 0.1).abs() < 1e-15);
    }

    #[test]
    fn ties_go_to_lowest_index() {
        let (idx, _) = nearest(&[0.5], &[vec![0.0], vec![1.0]]);
        assert_eq!(idx, 0);
    }

    fn arb_points() -> impl Strategy<Value = Vec<Vec<f64>>> {
        (1usize..4, 3usize..9).prop_flat_map(|(d, n)| {
            prop::collection::vec(prop::collection::vec(0.0f64..=1.0, d), n)
        })
    }

    proptest! {
        #[test]
        fn sse_non_increasing_and_nearest_assignment(points in arb_points(), k in 1usize..4, seed in any::<u64>()) {
            let k = k.min(distinct_points(&points));
            let mut idx: Vec<usize> = (0..points.len()).collect();
            let mut s = seed;
            for i in (1..idx.len()).rev() {
                s = crate::rng::mix64(s);
                idx.swap(i, (s % (i as u64 + 1)) as usize);
            }
            let init: Vec<Vec<f64>> = idx.iter().take(k).map(|&i| points[i].clone()).collect();
            let run = kmeans(&points, &init, 0.025).unwrap();
            for w in run.sse_trace.windows(2) {
                prop_assert!(w[1] <= w[0] + 1e-12 * (1.0 + w[0]), "{:?}", run.sse_trace);
            }
            run.model.validate().unwrap();
            for (p, &a) in points.iter().zip(&run.model.assignment) {
                prop_assert_eq!(nearest(p, &run.model.centroids).0, a);
            }
            prop_assert_eq!(run.model.sizes.iter().sum::<usize>(), points.len());
        }
    }
}
