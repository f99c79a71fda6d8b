//! K-means over pooled feature vectors and elbow selection of the cluster
//! count, which downstream becomes the HMM state count.
//!
//! Determinism rules: all computation runs on a lexicographically sorted copy
//! of the input, so permuting the rows changes nothing; restarts draw from
//! per-restart RNG streams and the best result is picked by (wcss, restart
//! index); assignment ties go to the smallest centroid index. The elbow scan
//! additionally warm-starts each k from the previous k's best solution plus
//! one split centroid, which guarantees a non-increasing wcss curve.

use crate::error::{Error, Result};
use ndarray::{Array2, ArrayView1, ArrayView2};
use rand::{Rng, SeedableRng};
use rand_chacha::ChaCha8Rng;
use rayon::prelude::*;
use std::cmp::Ordering;

/// A fitted clustering; `assignments` indexes rows of the original input.
#[derive(Debug, Clone)]
pub struct Clustering {
    pub k: usize,
    /// k rows x feature dimension
    pub centroids: Array2<f64>,
    pub assignments: Vec<usize>,
    /// within-cluster sum of squared Euclidean distances
    pub wcss: f64,
}

/// The k vs wcss curve with the elbow pick.
#[derive(Debug, Clone)]
pub struct ElbowCurve {
    pub k_values: Vec<usize>,
    pub wcss_values: Vec<f64>,
    pub selected_k: usize,
}

fn dist2(a: ArrayView1<f64>, b: ArrayView1<f64>) -> f64 {
    a.iter()
        .zip(b.iter())
        .map(|(x, y)| (x - y) * (x - y))
        .sum()
}

/// Lexicographic row order; ties keep the lower original index (stable sort).
fn sorted_copy(x: &ArrayView2<f64>) -> (Array2<f64>, Vec<usize>) {
    let mut order: Vec<usize> = (0..x.nrows()).collect();
    order.sort_by(|&a, &b| {
        for j in 0..x.ncols() {
            match x[(a, j)].total_cmp(&x[(b, j)]) {
                Ordering::Equal => continue,
                other => return other,
            }
        }
        Ordering::Equal
    });
    let mut sorted = Array2::zeros((x.nrows(), x.ncols()));
    for (row, &idx) in order.iter().enumerate() {
        sorted.row_mut(row).assign(&x.row(idx));
    }
    (sorted, order)
}

struct Run {
    centroids: Array2<f64>,
    assignments: Vec<usize>,
    wcss: f64,
}

/// Nearest-centroid assignment; ties go to the smaller centroid index.
fn assign(x: &Array2<f64>, centroids: &Array2<f64>) -> Vec<usize> {
    let k = centroids.nrows();
    (0..x.nrows())
        .map(|i| {
            let mut best = 0;
            let mut best_d = dist2(x.row(i), centroids.row(0));
            for c in 1..k {
                let d = dist2(x.row(i), centroids.row(c));
                if d < best_d {
                    best_d = d;
                    best = c;
                }
            }
            best
        })
        .collect()
}

fn wcss_of(x: &Array2<f64>, centroids: &Array2<f64>, assignments: &[usize]) -> f64 {
    assignments
        .iter()
        .enumerate()
        .map(|(i, &a)| dist2(x.row(i), centroids.row(a)))
        .sum()
}

/// Recomputes centroids as member means, then refills any empty cluster with
/// the farthest member of the largest cluster (keeps k fixed).
fn update_centroids(x: &Array2<f64>, assignments: &mut [usize], k: usize) -> Array2<f64> {
    let d = x.ncols();
    let mut sums = Array2::<f64>::zeros((k, d));
    let mut counts = vec![0usize; k];
    for (i, &a) in assignments.iter().enumerate() {
        counts[a] += 1;
        let mut row = sums.row_mut(a);
        row += &x.row(i);
    }
    let mut centroids = Array2::zeros((k, d));
    for (c, &count) in counts.iter().enumerate() {
        if count > 0 {
            centroids.row_mut(c).assign(&(&sums.row(c) / count as f64));
        }
    }
    for empty in 0..k {
        if counts[empty] > 0 {
            continue;
        }
        // donor = largest cluster, ties to the smallest index
        let donor = (0..k)
            .max_by(|&a, &b| counts[a].cmp(&counts[b]).then(b.cmp(&a)))
            .unwrap();
        if counts[donor] == 0 {
            continue; // fewer distinct points than clusters; leave as zeros
        }
        // farthest member of the donor, ties to the smallest point index
        let mut far = None;
        let mut far_d = -1.0;
        for (i, &a) in assignments.iter().enumerate() {
            if a == donor {
                let dd = dist2(x.row(i), centroids.row(donor));
                if dd > far_d {
                    far_d = dd;
                    far = Some(i);
                }
            }
        }
        let far = far.unwrap();
        centroids.row_mut(empty).assign(&x.row(far));
        assignments[far] = empty;
        counts[empty] = 1;
        counts[donor] -= 1;
        if counts[donor] > 0 {
            let removed = &sums.row(donor) - &x.row(far);
            centroids
                .row_mut(donor)
                .assign(&(&removed / counts[donor] as f64));
        }
    }
    centroids
}

fn lloyd(x: &Array2<f64>, init: Array2<f64>, max_iter: usize) -> Run {
    let k = init.nrows();
    let mut centroids = init;
    let mut assignments = assign(x, &centroids);
    let mut prev_wcss = f64::INFINITY;
    for _ in 0..max_iter {
        centroids = update_centroids(x, &mut assignments, k);
        let next = assign(x, &centroids);
        let wcss = wcss_of(x, &centroids, &next);
        debug_assert!(
            wcss <= prev_wcss * (1.0 + 1e-12) + 1e-12,
            "lloyd objective increased: {prev_wcss} -> {wcss}"
        );
        prev_wcss = wcss;
        if next == assignments {
            break;
        }
        assignments = next;
    }
    // guarantee occupancy even in degenerate duplicate-point cases
    let mut counts = vec![0usize; k];
    for &a in &assignments {
        counts[a] += 1;
    }
    if counts.contains(&0) {
        centroids = update_centroids(x, &mut assignments, k);
    }
    let wcss = wcss_of(x, &centroids, &assignments);
    Run {
        centroids,
        assignments,
        wcss,
    }
}

/// k-means++ seeding on the sorted data.
fn seed_centroids(x: &Array2<f64>, k: usize, rng: &mut ChaCha8Rng) -> Array2<f64> {
    let n = x.nrows();
    let d = x.ncols();
    let mut centroids = Array2::zeros((k, d));
    let first = rng.gen_range(0..n);
    centroids.row_mut(0).assign(&x.row(first));
    let mut d2: Vec<f64> = (0..n).map(|i| dist2(x.row(i), centroids.row(0))).collect();
    for c in 1..k {
        let total: f64 = d2.iter().sum();
        let pick = if total > 0.0 {
            let r = rng.gen::<f64>() * total;
            let mut acc = 0.0;
            let mut pick = n - 1;
            for (i, &w) in d2.iter().enumerate() {
                acc += w;
                if acc > r {
                    pick = i;
                    break;
                }
            }
            pick
        } else {
            rng.gen_range(0..n)
        };
        centroids.row_mut(c).assign(&x.row(pick));
        for (i, best) in d2.iter_mut().enumerate() {
            let dd = dist2(x.row(i), centroids.row(c));
            if dd < *best {
                *best = dd;
            }
        }
    }
    centroids
}

fn run_restarts(
    x: &Array2<f64>,
    k: usize,
    seed: u64,
    restarts: usize,
    max_iter: usize,
) -> Run {
    let runs: Vec<Run> = (0..restarts.max(1))
        .into_par_iter()
        .map(|r| {
            let mut rng = ChaCha8Rng::seed_from_u64(seed);
            // stream 0 is reserved for callers; restarts use k- and r-derived streams
            rng.set_stream(((k as u64) << 32) | (r as u64 + 1));
            let init = seed_centroids(x, k, &mut rng);
            lloyd(x, init, max_iter)
        })
        .collect();
    // earliest restart wins ties, independent of scheduling
    runs.into_iter()
        .reduce(|best, run| if run.wcss < best.wcss { run } else { best })
        .expect("at least one restart")
}

fn validate_input(x: &ArrayView2<f64>, k: usize) -> Result<()> {
    if x.nrows() == 0 || k == 0 || k > x.nrows() {
        return Err(Error::NotEnoughPoints {
            points: x.nrows(),
            k,
        });
    }
    Ok(())
}

fn to_clustering(run: Run, order: &[usize], k: usize) -> Clustering {
    let mut assignments = vec![0usize; run.assignments.len()];
    for (sorted_pos, &orig) in order.iter().enumerate() {
        assignments[orig] = run.assignments[sorted_pos];
    }
    Clustering {
        k,
        centroids: run.centroids,
        assignments,
        wcss: run.wcss,
    }
}

/// Lloyd's algorithm with k-means++ seeding and `restarts` independent
/// restarts; returns the best run. Deterministic for a given seed and
/// invariant to the order of the input rows.
pub fn kmeans(
    x: &ArrayView2<f64>,
    k: usize,
    seed: u64,
    restarts: usize,
    max_iter: usize,
) -> Result<Clustering> {
    validate_input(x, k)?;
    let (sorted, order) = sorted_copy(x);
    let run = run_restarts(&sorted, k, seed, restarts, max_iter);
    Ok(to_clustering(run, &order, k))
}

/// Runs k-means for every k in the inclusive range and picks the elbow:
/// the interior k with the largest perpendicular distance to the chord
/// joining the curve's endpoints after normalizing both axes to [0, 1].
/// Ties and flat curves resolve to the smallest interior k.
///
/// Also returns the best clustering per k so callers can reuse the solution
/// at the selected k without refitting.
pub fn elbow_with_clusterings(
    x: &ArrayView2<f64>,
    k_min: usize,
    k_max: usize,
    seed: u64,
    restarts: usize,
    max_iter: usize,
) -> Result<(ElbowCurve, Vec<Clustering>)> {
    if k_min == 0 || k_min > k_max {
        return Err(Error::KRangeInvalid {
            detail: format!("bad bounds {k_min}..={k_max}"),
        });
    }
    if k_max - k_min + 1 < 3 {
        return Err(Error::KRangeInvalid {
            detail: format!("range {k_min}..={k_max} has fewer than 3 values"),
        });
    }
    validate_input(x, k_max)?;

    let (sorted, order) = sorted_copy(x);
    let mut runs: Vec<Run> = Vec::new();
    for k in k_min..=k_max {
        let mut best = run_restarts(&sorted, k, seed, restarts, max_iter);
        if let Some(prev) = runs.last() {
            // warm start: previous centroids plus the point farthest from its
            // centroid; its starting wcss is at most the previous optimum, so
            // the curve stays non-increasing
            let mut init = Array2::zeros((k, sorted.ncols()));
            init.slice_mut(ndarray::s![..k - 1, ..])
                .assign(&prev.centroids);
            let mut far = 0;
            let mut far_d = -1.0;
            for (i, &a) in prev.assignments.iter().enumerate() {
                let dd = dist2(sorted.row(i), prev.centroids.row(a));
                if dd > far_d {
                    far_d = dd;
                    far = i;
                }
            }
            init.row_mut(k - 1).assign(&sorted.row(far));
            let warm = lloyd(&sorted, init, max_iter);
            if warm.wcss < best.wcss {
                best = warm;
            }
        }
        runs.push(best);
    }

    let k_values: Vec<usize> = (k_min..=k_max).collect();
    let wcss_values: Vec<f64> = runs.iter().map(|r| r.wcss).collect();
    let selected_k = pick_elbow(&k_values, &wcss_values);
    let clusterings = runs
        .into_iter()
        .map(|r| {
            let k = r.centroids.nrows();
            to_clustering(r, &order, k)
        })
        .collect();
    Ok((
        ElbowCurve {
            k_values,
            wcss_values,
            selected_k,
        },
        clusterings,
    ))
}

/// As [`elbow_with_clusterings`] but returns only the curve.
pub fn elbow_select(
    x: &ArrayView2<f64>,
    k_min: usize,
    k_max: usize,
    seed: u64,
    restarts: usize,
    max_iter: usize,
) -> Result<ElbowCurve> {
    elbow_with_clusterings(x, k_min, k_max, seed, restarts, max_iter).map(|(curve, _)| curve)
}

fn pick_elbow(ks: &[usize], wcss: &[f64]) -> usize {
    let n = ks.len();
    let x0 = ks[0] as f64;
    let x_span = (ks[n - 1] - ks[0]) as f64;
    let w_lo = wcss.iter().copied().fold(f64::INFINITY, f64::min);
    let w_hi = wcss.iter().copied().fold(f64::NEG_INFINITY, f64::max);
    let norm_y = |w: f64| {
        if w_hi > w_lo {
            (w - w_lo) / (w_hi - w_lo)
        } else {
            0.0
        }
    };
    let (xa, ya) = (0.0, norm_y(wcss[0]));
    let (xb, yb) = (1.0, norm_y(wcss[n - 1]));
    let (dx, dy) = (xb - xa, yb - ya);
    let chord = (dx * dx + dy * dy).sqrt();
    let mut best_i = 1;
    let mut best_d = -1.0;
    for i in 1..n - 1 {
        let px = (ks[i] as f64 - x0) / x_span;
        let py = norm_y(wcss[i]);
        let d = (dx * (py - ya) - dy * (px - xa)).abs() / chord;
        if d > best_d {
            best_d = d;
            best_i = i;
        }
    }
    ks[best_i]
}

#[cfg(test)]
mod tests {
    use super::*;
    use ndarray::arr2;
    use rand::Rng;

    fn gauss(rng: &mut impl Rng) -> f64 {
        let u1: f64 = 1.0 - rng.gen::<f64>();
        let u2: f64 = rng.gen();
        (-2.0 * u1.ln()).sqrt() * (std::f64::consts::TAU * u2).cos()
    }

    /// Exhaustive minimum over all 2-partitions with both sides nonempty.
    fn best_two_partition_wcss(x: &Array2<f64>) -> f64 {
        let n = x.nrows();
        let mut best = f64::INFINITY;
        for mask in 1u32..(1 << n) - 1 {
            let mut wcss = 0.0;
            for side in 0..2 {
                let members: Vec<usize> = (0..n)
                    .filter(|&i| ((mask >> i) & 1) as usize == side)
                    .collect();
                let d = x.ncols();
                let mut mean = vec![0.0; d];
                for &i in &members {
                    for j in 0..d {
                        mean[j] += x[(i, j)];
                    }
                }
                for m in mean.iter_mut() {
                    *m /= members.len() as f64;
                }
                for &i in &members {
                    for j in 0..d {
                        let diff = x[(i, j)] - mean[j];
                        wcss += diff * diff;
                    }
                }
            }
            best = best.min(wcss);
        }
        best
    }

    #[test]
    fn matches_exhaustive_two_partition() {
        let mut rng = ChaCha8Rng::seed_from_u64(31);
        for trial in 0..5 {
            let n = 6 + (trial % 3);
            let mut x = Array2::zeros((n, 2));
            for v in x.iter_mut() {
                *v = rng.gen::<f64>() * 10.0 - 5.0;
            }
            let got = kmeans(&x.view(), 2, 77, 10, 100).unwrap().wcss;
            let want = best_two_partition_wcss(&x);
            assert!(
                got <= want * (1.0 + 1e-9) + 1e-12,
                "trial {trial}: kmeans {got} vs exhaustive {want}"
            );
        }
    }

    #[test]
    fn k1_closed_form() {
        let x = arr2(&[[1.0, 0.0], [3.0, 2.0], [5.0, 4.0], [7.0, 10.0]]);
        let c = kmeans(&x.view(), 1, 1, 3, 50).unwrap();
        let mean = [4.0, 4.0];
        assert!((c.centroids[(0, 0)] - mean[0]).abs() < 1e-12);
        assert!((c.centroids[(0, 1)] - mean[1]).abs() < 1e-12);
        let want: f64 = (0..4)
            .map(|i| dist2(x.row(i), ndarray::aview1(&mean)))
            .sum();
        assert!((c.wcss - want).abs() < 1e-12);
    }

    #[test]
    fn separated_clouds_recover_means() {
        let mut rng = ChaCha8Rng::seed_from_u64(5);
        let mut points = Vec::new();
        let centers = [[-6.0, 0.0], [6.0, 3.0]];
        for center in centers {
            for _ in 0..40 {
                points.push([
                    center[0] + 0.01 * gauss(&mut rng),
                    center[1] + 0.01 * gauss(&mut rng),
                ]);
            }
        }
        let x = Array2::from_shape_fn((80, 2), |(i, j)| points[i][j]);
        let c = kmeans(&x.view(), 2, 9, 8, 100).unwrap();
        // analytic means of the generated clouds, matched by nearest centroid
        for cloud in 0..2 {
            let members: Vec<usize> = (cloud * 40..(cloud + 1) * 40).collect();
            let mut mean = [0.0, 0.0];
            for &i in &members {
                mean[0] += x[(i, 0)];
                mean[1] += x[(i, 1)];
            }
            mean[0] /= 40.0;
            mean[1] /= 40.0;
            let nearest = (0..2)
                .min_by(|&a, &b| {
                    dist2(c.centroids.row(a), ndarray::aview1(&mean))
                        .total_cmp(&dist2(c.centroids.row(b), ndarray::aview1(&mean)))
                })
                .unwrap();
            assert!(dist2(c.centroids.row(nearest), ndarray::aview1(&mean)) < 1e-12);
        }
    }

    #[test]
    fn permutation_of_rows_changes_nothing() {
        let mut rng = ChaCha8Rng::seed_from_u64(12);
        let x = Array2::from_shape_fn((30, 3), |_| rng.gen::<f64>() * 4.0);
        let base = kmeans(&x.view(), 3, 42, 6, 100).unwrap();

        // rotate rows by 11
        let mut perm: Vec<usize> = (0..30).collect();
        perm.rotate_left(11);
        let shuffled = Array2::from_shape_fn((30, 3), |(i, j)| x[(perm[i], j)]);
        let moved = kmeans(&shuffled.view(), 3, 42, 6, 100).unwrap();

        assert_eq!(base.wcss.to_bits(), moved.wcss.to_bits());
        assert_eq!(base.centroids, moved.centroids);
        for (i, &p) in perm.iter().enumerate() {
            assert_eq!(base.assignments[p], moved.assignments[i]);
        }
    }

    #[test]
    fn wcss_matches_recomputation_and_clusters_nonempty() {
        let mut rng = ChaCha8Rng::seed_from_u64(3);
        let x = Array2::from_shape_fn((50, 4), |_| gauss(&mut rng));
        for k in [1usize, 2, 5, 9] {
            let c = kmeans(&x.view(), k, 7, 5, 100).unwrap();
            let mut counts = vec![0usize; k];
            let mut wcss = 0.0;
            for (i, &a) in c.assignments.iter().enumerate() {
                assert!(a < k);
                counts[a] += 1;
                wcss += dist2(x.row(i), c.centroids.row(a));
            }
            assert!(counts.iter().all(|&n| n > 0), "k={k}: empty cluster");
            assert!((wcss - c.wcss).abs() <= 1e-9 * wcss.max(1.0));
        }
    }

    #[test]
    fn rejects_bad_inputs() {
        let x = Array2::<f64>::zeros((3, 2));
        assert!(kmeans(&x.view(), 4, 0, 1, 10).is_err());
        assert!(kmeans(&x.view(), 0, 0, 1, 10).is_err());
        let empty = Array2::<f64>::zeros((0, 2));
        assert!(kmeans(&empty.view(), 1, 0, 1, 10).is_err());
        assert!(elbow_select(&x.view(), 1, 2, 0, 1, 10).is_err()); // range too short
    }

    #[test]
    fn elbow_finds_three_planted_gaussians() {
        let mut rng = ChaCha8Rng::seed_from_u64(21);
        let centers = [[0.0, 0.0], [10.0, 0.0], [0.0, 10.0]];
        let mut x = Array2::zeros((180, 2));
        for (i, mut row) in x.rows_mut().into_iter().enumerate() {
            let c = centers[i % 3];
            row[0] = c[0] + 0.5 * gauss(&mut rng);
            row[1] = c[1] + 0.5 * gauss(&mut rng);
        }
        let curve = elbow_select(&x.view(), 1, 8, 13, 6, 100).unwrap();
        assert_eq!(curve.selected_k, 3, "curve: {:?}", curve.wcss_values);
        // non-increasing wcss
        for pair in curve.wcss_values.windows(2) {
            assert!(pair[1] <= pair[0] * (1.0 + 1e-12));
        }
    }

    #[test]
    fn linear_curve_picks_smallest_interior_k() {
        // exercised through pick_elbow directly: a perfectly linear curve has
        // zero distance everywhere, so the first interior k wins
        let ks = [1usize, 2, 3, 4, 5];
        let wcss = [100.0, 80.0, 60.0, 40.0, 20.0];
        assert_eq!(pick_elbow(&ks, &wcss), 2);
        let flat = [5.0, 5.0, 5.0, 5.0, 5.0];
        assert_eq!(pick_elbow(&ks, &flat), 2);
        let kinked = [100.0, 40.0, 10.0, 8.0, 6.0];
        assert_eq!(pick_elbow(&ks, &kinked), 3);
    }

    #[test]
    fn elbow_curve_monotone_on_noise() {
        // unstructured data still must yield a non-increasing best-of curve
        let mut rng = ChaCha8Rng::seed_from_u64(77);
        let x = Array2::from_shape_fn((60, 3), |_| gauss(&mut rng));
        let curve = elbow_select(&x.view(), 1, 9, 5, 4, 60).unwrap();
        for pair in curve.wcss_values.windows(2) {
            assert!(
                pair[1] <= pair[0] * (1.0 + 1e-12) + 1e-12,
                "wcss increased: {:?}",
                curve.wcss_values
            );
        }
    }
}
