use cgc_core::clustering::{kmeans, sse};
use cgc_core::encoder::{Encoder, Neighborhood};
use cgc_core::eval::{match_labels, rank_metrics};
use cgc_core::matrix::Matrix;
use cgc_core::StaticGraph;
use rand::{Rng, SeedableRng};
use rand_chacha::ChaCha8Rng;

fn permutations(k: usize) -> Vec<Vec<usize>> {
    let mut perms: Vec<Vec<usize>> = vec![vec![]];
    for _ in 0..k {
        let mut longer = Vec::new();
        for p in &perms {
            for j in (0..k).filter(|j| !p.contains(j)) {
                let mut q = p.clone();
                q.push(j);
                longer.push(q);
            }
        }
        perms = longer;
    }
    perms
}

fn random_graph(n: usize, p: f64, rng: &mut ChaCha8Rng) -> StaticGraph {
    let mut pairs = Vec::new();
    for u in 0..n {
        for v in u + 1..n {
            if rng.gen_bool(p) {
                pairs.push((u, v));
            }
        }
    }
    StaticGraph::new(n, &pairs).unwrap()
}

#[test]
fn hungarian_agreement_equals_permutation_search() {
    let mut rng = ChaCha8Rng::seed_from_u64(1);
    for trial in 0..200 {
        let k = 1 + trial % 5;
        let n = rng.gen_range(1..40);
        let pred: Vec<usize> = (0..n).map(|_| rng.gen_range(0..k)).collect();
        let truth: Vec<usize> = (0..n).map(|_| rng.gen_range(0..k)).collect();
        let best = permutations(k)
            .iter()
            .map(|p| pred.iter().zip(&truth).filter(|&(&a, &b)| p[a] == b).count())
            .max()
            .unwrap();
        let m = match_labels(&pred, &truth).unwrap();
        assert_eq!(m.agreement, best, "trial {trial}");
        let recount = pred.iter().zip(&truth).filter(|&(a, b)| m.mapping.get(a) == Some(b)).count();
        assert_eq!(recount, best);
    }
}

#[test]
fn auc_equals_pairwise_counting() {
    let mut rng = ChaCha8Rng::seed_from_u64(2);
    for _ in 0..200 {
        let pos: Vec<f64> = (0..rng.gen_range(1..50)).map(|_| rng.gen_range(0..10) as f64).collect();
        let neg: Vec<f64> = (0..rng.gen_range(1..50)).map(|_| rng.gen_range(0..10) as f64).collect();
        let mut wins = 0.0;
        for p in &pos {
            for q in &neg {
                wins += if p > q {
                    1.0
                } else if p == q {
                    0.5
                } else {
                    0.0
                };
            }
        }
        let expected = wins / (pos.len() * neg.len()) as f64;
        assert_eq!(rank_metrics(&pos, &neg).unwrap().auc, expected);
    }
}

#[test]
fn perfectly_separated_scores_give_unit_auc_and_ap() {
    let r = rank_metrics(&[0.9, 0.8, 0.95], &[0.1, 0.5, 0.2, 0.3]).unwrap();
    assert_eq!((r.auc, r.ap), (1.0, 1.0));
}

/// `H = ReLU(Â X Wᵀ)` per layer with `Â = D̂⁻¹(I + A)`, built densely.
fn dense_encode(g: &StaticGraph, x: &Matrix<f64>, layers: &[Matrix<f64>]) -> Vec<Vec<f64>> {
    let n = g.node_count();
    let a_hat: Vec<Vec<f64>> = (0..n)
        .map(|u| {
            let deg = (0..n).filter(|&v| g.has_edge(u, v)).count() as f64 + 1.0;
            (0..n).map(|v| if u == v || g.has_edge(u, v) { 1.0 / deg } else { 0.0 }).collect()
        })
        .collect();
    let mut h: Vec<Vec<f64>> = x.iter_rows().map(<[f64]>::to_vec).collect();
    for w in layers {
        let agg: Vec<Vec<f64>> = (0..n)
            .map(|u| (0..h[0].len()).map(|j| (0..n).map(|v| a_hat[u][v] * h[v][j]).sum()).collect())
            .collect();
        h = agg
            .iter()
            .map(|row| (0..w.rows()).map(|o| (0..w.cols()).map(|i| w[(o, i)] * row[i]).sum::<f64>().max(0.0)).collect())
            .collect();
    }
    h
}

#[test]
fn encode_matches_dense_matrix_form() {
    let mut rng = ChaCha8Rng::seed_from_u64(3);
    for trial in 0..50 {
        let n = rng.gen_range(1..=8);
        let g = random_graph(n, 0.4, &mut rng);
        let depth = 1 + trial % 3;
        let enc = Encoder::<f64>::init(4, 3, depth, &mut rng);
        let x = Matrix::from_fn(n, 4, |_, _| rng.gen_range(-1.0..1.0));
        let h = enc.encode(Neighborhood::plain(&g), &x).unwrap();
        let oracle = dense_encode(&g, &x, &enc.layers);
        for u in 0..n {
            for (a, b) in h.row(u).iter().zip(&oracle[u]) {
                assert!((a - b).abs() <= 1e-10, "trial {trial}: {a} vs {b}");
            }
        }
    }
}

#[test]
fn kmeans_centroids_are_means_of_their_points() {
    let mut rng = ChaCha8Rng::seed_from_u64(4);
    for trial in 0..30 {
        let n = rng.gen_range(5..60);
        let k = rng.gen_range(1..=4.min(n));
        let h = Matrix::from_fn(n, 3, |i, _| (i % k) as f64 * 4.0 + rng.gen_range(-1.0..1.0));
        let km = kmeans(&h, k, 3, &mut rng).unwrap();
        for c in 0..k {
            let members: Vec<usize> = (0..n).filter(|&u| km.assignments[u] == c).collect();
            assert!(!members.is_empty(), "trial {trial}: empty cluster");
            for j in 0..3 {
                let mean = members.iter().map(|&u| h[(u, j)]).sum::<f64>() / members.len() as f64;
                assert!((km.centroids[(c, j)] - mean).abs() <= 1e-9);
            }
        }
        // every point sits with its nearest centroid
        for u in 0..n {
            let d = |c: usize| (0..3).map(|j| (h[(u, j)] - km.centroids[(c, j)]).powi(2)).sum::<f64>();
            let own = d(km.assignments[u]);
            assert!((0..k).all(|c| own <= d(c) + 1e-12));
        }
        assert!((sse(&h, &km.centroids, &km.assignments) - km.sse).abs() < 1e-9);
    }
}
