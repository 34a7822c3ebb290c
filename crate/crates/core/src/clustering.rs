//! k-means (with k-means++ seeding and restarts), soft memberships and
//! multi-level cluster refinement.

use crate::error::{input, Result};
use crate::matrix::{squared_distance, Matrix};
use crate::scalar::Scalar;
use rand::{Rng, SeedableRng};
use rand_chacha::ChaCha8Rng;
use rayon::prelude::*;

pub const MAX_LLOYD_ITERATIONS: usize = 100;

#[derive(Debug, Clone, PartialEq)]
pub struct KMeansResult<T> {
    pub centroids: Matrix<T>,
    pub assignments: Vec<usize>,
    pub sse: T,
    pub iterations: usize,
    /// SSE after each centroid update of the winning restart.
    pub sse_trace: Vec<T>,
}

/// Best-SSE k-means over `restarts` independent k-means++ seedings.
///
/// Restart seeds are drawn from `rng` up front, so the result is identical
/// whether restarts run serially or in parallel. SSE ties go to the lowest
/// restart index.
pub fn kmeans<T: Scalar, R: Rng + ?Sized>(h: &Matrix<T>, k: usize, restarts: usize, rng: &mut R) -> Result<KMeansResult<T>> {
    let n = h.rows();
    if k == 0 {
        return input("k must be at least 1");
    }
    if k > n {
        return input(format!("k = {k} exceeds the number of points {n}"));
    }
    let seeds: Vec<u64> = (0..restarts.max(1)).map(|_| rng.gen()).collect();
    let runs: Vec<KMeansResult<T>> = seeds
        .par_iter()
        .map(|&s| lloyd(h, k, &mut ChaCha8Rng::seed_from_u64(s)))
        .collect();
    let best = runs
        .into_iter()
        .reduce(|best, r| if r.sse < best.sse { r } else { best })
        .expect("at least one restart");
    Ok(best)
}

fn lloyd<T: Scalar, R: Rng + ?Sized>(h: &Matrix<T>, k: usize, rng: &mut R) -> KMeansResult<T> {
    let mut centroids = plus_plus_seeds(h, k, rng);
    let mut assignments = nearest_centroids(h, &centroids);
    let mut sse_trace = Vec::new();
    let mut iterations = 0;
    loop {
        repair_empty_clusters(h, &centroids, &mut assignments);
        centroids = cluster_means(h, &assignments, k);
        sse_trace.push(sse(h, &centroids, &assignments));
        iterations += 1;
        let next = nearest_centroids(h, &centroids);
        if next == assignments || iterations >= MAX_LLOYD_ITERATIONS {
            break;
        }
        assignments = next;
    }
    let sse = *sse_trace.last().expect("at least one iteration");
    KMeansResult { centroids, assignments, sse, iterations, sse_trace }
}

fn plus_plus_seeds<T: Scalar, R: Rng + ?Sized>(h: &Matrix<T>, k: usize, rng: &mut R) -> Matrix<T> {
    let n = h.rows();
    let mut chosen = vec![rng.gen_range(0..n)];
    let mut d2: Vec<f64> = (0..n).map(|i| squared_distance(h.row(i), h.row(chosen[0])).as_f64()).collect();
    while chosen.len() < k {
        let total: f64 = d2.iter().sum();
        let next = if total > 0.0 {
            let mut target = rng.gen::<f64>() * total;
            let mut pick = n - 1;
            for (i, &d) in d2.iter().enumerate() {
                if d > 0.0 && target < d {
                    pick = i;
                    break;
                }
                target -= d;
            }
            // rounding can walk past the last positive weight
            if d2[pick] == 0.0 {
                pick = d2.iter().rposition(|&d| d > 0.0).expect("total > 0");
            }
            pick
        } else {
            rng.gen_range(0..n)
        };
        chosen.push(next);
        for (i, d) in d2.iter_mut().enumerate() {
            *d = d.min(squared_distance(h.row(i), h.row(next)).as_f64());
        }
    }
    h.select_rows(&chosen)
}

/// Index of the closest centroid per row; ties go to the lowest index.
pub fn nearest_centroids<T: Scalar>(h: &Matrix<T>, centroids: &Matrix<T>) -> Vec<usize> {
    h.iter_rows()
        .map(|x| {
            let mut best = (0, T::infinity());
            for (j, c) in centroids.iter_rows().enumerate() {
                let d = squared_distance(x, c);
                if d < best.1 {
                    best = (j, d);
                }
            }
            best.0
        })
        .collect()
}

/// Moves, for each empty cluster, the point farthest from its own centroid
/// into that cluster. Donor clusters always keep at least one point.
fn repair_empty_clusters<T: Scalar>(h: &Matrix<T>, centroids: &Matrix<T>, assignments: &mut [usize]) {
    let k = centroids.rows();
    let mut sizes = vec![0usize; k];
    for &a in assignments.iter() {
        sizes[a] += 1;
    }
    for j in 0..k {
        if sizes[j] > 0 {
            continue;
        }
        let donor = (0..h.rows())
            .filter(|&i| sizes[assignments[i]] > 1)
            .map(|i| (i, squared_distance(h.row(i), centroids.row(assignments[i]))))
            .fold(None::<(usize, T)>, |best, (i, d)| match best {
                Some((_, bd)) if bd >= d => best,
                _ => Some((i, d)),
            });
        if let Some((i, _)) = donor {
            sizes[assignments[i]] -= 1;
            assignments[i] = j;
            sizes[j] = 1;
        }
    }
}

pub fn cluster_means<T: Scalar>(h: &Matrix<T>, assignments: &[usize], k: usize) -> Matrix<T> {
    let mut sums = Matrix::zeros(k, h.cols());
    let mut counts = vec![0usize; k];
    for (x, &a) in h.iter_rows().zip(assignments) {
        counts[a] += 1;
        for (s, &v) in sums.row_mut(a).iter_mut().zip(x) {
            *s += v;
        }
    }
    for (j, &c) in counts.iter().enumerate() {
        if c > 0 {
            let c = T::of_usize(c);
            for s in sums.row_mut(j) {
                *s /= c;
            }
        }
    }
    sums
}

pub fn sse<T: Scalar>(h: &Matrix<T>, centroids: &Matrix<T>, assignments: &[usize]) -> T {
    h.iter_rows().zip(assignments).map(|(x, &a)| squared_distance(x, centroids.row(a))).sum()
}

/// `Φ[u][j] = softmax_j(−‖h_u − c_j‖² / softness)`.
pub fn soft_membership<T: Scalar>(h: &Matrix<T>, centroids: &Matrix<T>, softness: T) -> Result<Matrix<T>> {
    if centroids.rows() == 0 {
        return input("no centroids");
    }
    if !(softness > T::zero()) {
        return input("membership softness must be positive");
    }
    let k = centroids.rows();
    let mut phi = Matrix::zeros(h.rows(), k);
    for (u, x) in h.iter_rows().enumerate() {
        let logits: Vec<T> = centroids.iter_rows().map(|c| -squared_distance(x, c) / softness).collect();
        let m = logits.iter().copied().fold(T::neg_infinity(), T::max);
        let exps: Vec<T> = logits.iter().map(|&l| (l - m).exp()).collect();
        let z: T = exps.iter().copied().sum();
        for (p, e) in phi.row_mut(u).iter_mut().zip(exps) {
            *p = e / z;
        }
    }
    Ok(phi)
}

/// Row-wise argmax; ties go to the lowest column.
pub fn argmax_rows<T: Scalar>(m: &Matrix<T>) -> Vec<usize> {
    m.iter_rows()
        .map(|r| {
            let mut best = 0;
            for (j, &x) in r.iter().enumerate() {
                if x > r[best] {
                    best = j;
                }
            }
            best
        })
        .collect()
}

#[derive(Debug, Clone, PartialEq)]
pub struct ClusterLevel<T> {
    pub k: usize,
    pub centroids: Matrix<T>,
    /// Row-stochastic `n × k` membership matrix.
    pub memberships: Matrix<T>,
}

impl<T: Scalar> ClusterLevel<T> {
    pub fn strongest_clusters(&self) -> Vec<usize> {
        argmax_rows(&self.memberships)
    }
}

/// Clusterings of the same embeddings at several granularities; level 0
/// holds the number of clusters ultimately reported.
#[derive(Debug, Clone, PartialEq)]
pub struct MultiLevelClustering<T> {
    pub levels: Vec<ClusterLevel<T>>,
}

/// Clusters `h` independently at every `k` in `ks`.
pub fn refine_levels<T: Scalar, R: Rng + ?Sized>(
    h: &Matrix<T>,
    ks: &[usize],
    restarts: usize,
    softness: T,
    rng: &mut R,
) -> Result<MultiLevelClustering<T>> {
    let levels = ks
        .iter()
        .map(|&k| {
            let km = kmeans(h, k, restarts, rng)?;
            let memberships = soft_membership(h, &km.centroids, softness)?;
            Ok(ClusterLevel { k, centroids: km.centroids, memberships })
        })
        .collect::<Result<Vec<_>>>()?;
    Ok(MultiLevelClustering { levels })
}

#[cfg(test)]
mod tests {
    use super::*;

    fn blobs(seed: u64) -> (Matrix<f64>, Vec<usize>) {
        let mut rng = ChaCha8Rng::seed_from_u64(seed);
        let mut rows = Vec::new();
        let mut truth = Vec::new();
        for i in 0..12 {
            let c = if i % 3 == 0 { 1 } else { 0 };
            let base = if c == 1 { 50.0 } else { 0.0 };
            rows.push(vec![base + rng.gen_range(-1.0..1.0), base + rng.gen_range(-1.0..1.0)]);
            truth.push(c);
        }
        (Matrix::from_rows(&rows), truth)
    }

    /// Minimum SSE over all 2^n bipartitions into two non-empty sets.
    fn brute_force_bipartition(h: &Matrix<f64>) -> (f64, Vec<usize>) {
        let n = h.rows();
        let mut best = (f64::INFINITY, vec![]);
        for mask in 1u32..(1 << n) - 1 {
            let a: Vec<usize> = (0..n).map(|i| ((mask >> i) & 1) as usize).collect();
            let c = cluster_means(h, &a, 2);
            let s = sse(h, &c, &a);
            if s < best.0 {
                best = (s, a);
            }
        }
        best
    }

    fn same_partition(a: &[usize], b: &[usize]) -> bool {
        (0..a.len()).all(|i| (0..a.len()).all(|j| (a[i] == a[j]) == (b[i] == b[j])))
    }

    #[test]
    fn k_one_gives_column_mean() {
        let h = Matrix::from_rows(&[vec![0.0, 1.0], vec![2.0, 3.0], vec![4.0, 8.0]]);
        let r = kmeans(&h, 1, 3, &mut ChaCha8Rng::seed_from_u64(0)).unwrap();
        assert_eq!(r.centroids.row(0), &[2.0, 4.0]);
    }

    #[test]
    fn separated_blobs_match_brute_force_optimum() {
        for seed in 0..5 {
            let (h, truth) = blobs(seed);
            let (best_sse, best) = brute_force_bipartition(&h);
            let r = kmeans(&h, 2, 10, &mut ChaCha8Rng::seed_from_u64(seed)).unwrap();
            assert!(same_partition(&r.assignments, &best));
            assert!(same_partition(&r.assignments, &truth));
            assert!((r.sse - best_sse).abs() < 1e-9);
        }
    }

    #[test]
    fn k_equals_n_has_zero_sse() {
        let h = Matrix::from_fn(6, 2, |i, j| (i * 3 + j) as f64);
        let r = kmeans(&h, 6, 2, &mut ChaCha8Rng::seed_from_u64(1)).unwrap();
        assert_eq!(r.sse, 0.0);
    }

    #[test]
    fn k_above_n_is_an_error() {
        assert!(kmeans(&Matrix::<f64>::zeros(3, 2), 4, 1, &mut ChaCha8Rng::seed_from_u64(0)).is_err());
    }

    #[test]
    fn centroids_are_means_and_sse_never_increases() {
        let mut rng = ChaCha8Rng::seed_from_u64(77);
        let h = Matrix::from_fn(60, 3, |_, _| rng.gen_range(-5.0..5.0));
        let r = kmeans(&h, 7, 4, &mut rng).unwrap();
        let means = cluster_means(&h, &r.assignments, 7);
        assert!(means.max_abs_diff(&r.centroids) <= 1e-9);
        assert!(r.sse_trace.windows(2).all(|w| w[1] <= w[0] + 1e-12));
        let sizes = (0..7).map(|j| r.assignments.iter().filter(|&&a| a == j).count());
        assert!(sizes.into_iter().all(|s| s > 0));
    }

    #[test]
    fn duplicate_points_still_fill_every_cluster() {
        let h = Matrix::from_rows(&[vec![0.0], vec![0.0], vec![0.0], vec![1.0]]);
        let r = kmeans(&h, 3, 1, &mut ChaCha8Rng::seed_from_u64(2)).unwrap();
        let mut used = r.assignments.clone();
        used.sort_unstable();
        used.dedup();
        assert_eq!(used.len(), 3);
    }

    #[test]
    fn soft_membership_hand_values() {
        let h = Matrix::from_rows(&[vec![0.0, 0.0]]);
        let c = Matrix::from_rows(&[vec![1.0, 0.0], vec![1.0, 1.0]]);
        let phi = soft_membership(&h, &c, 1.0).unwrap();
        let s = 1.0 / (1.0 + (-1.0f64).exp());
        assert!((phi[(0, 0)] - s).abs() < 1e-12);
        assert!((phi[(0, 1)] - (1.0 - s)).abs() < 1e-12);

        let eq = Matrix::from_rows(&[vec![1.0, 0.0], vec![-1.0, 0.0], vec![0.0, 1.0]]);
        let uni = soft_membership(&h, &eq, 0.3).unwrap();
        assert!(uni.row(0).iter().all(|&p| (p - 1.0 / 3.0).abs() < 1e-12));

        let sharp = soft_membership(&h, &c, 1e-6).unwrap();
        assert_eq!(sharp.row(0), &[1.0, 0.0]);
    }

    #[test]
    fn refine_levels_builds_every_level() {
        let mut rng = ChaCha8Rng::seed_from_u64(4);
        let h = Matrix::from_fn(40, 2, |_, _| rng.gen_range(0.0..1.0));
        let ml = refine_levels(&h, &[2, 10], 3, 1.0, &mut rng).unwrap();
        assert_eq!(ml.levels.iter().map(|l| l.k).collect::<Vec<_>>(), vec![2, 10]);
        for l in &ml.levels {
            assert_eq!(l.memberships.shape(), (40, l.k));
        }
        let same = Matrix::from_fn(5, 2, |_, j| j as f64);
        let ml = refine_levels(&same, &[2], 2, 1.0, &mut rng).unwrap();
        let r0 = ml.levels[0].memberships.row(0).to_vec();
        assert!(ml.levels[0].memberships.iter_rows().all(|r| r == r0.as_slice()));
    }
}
