//! Seeded k-means (k-means++ seeding, Lloyd iterations, best of several
//! restarts) used to initialize HMM responsibilities.

use ndarray::{Array2, ArrayView2};
use rand::Rng;

use crate::rng::StreamRng;

const MAX_LLOYD: usize = 100;

fn sq_dist(a: ndarray::ArrayView1<'_, f64>, b: ndarray::ArrayView1<'_, f64>) -> f64 {
    a.iter().zip(b.iter()).map(|(x, y)| (x - y) * (x - y)).sum()
}

fn plus_plus(data: ArrayView2<'_, f64>, k: usize, rng: &mut StreamRng) -> Array2<f64> {
    let n = data.nrows();
    let mut centers = Array2::zeros((k, data.ncols()));
    centers.row_mut(0).assign(&data.row(rng.random_range(0..n)));
    let mut dist: Vec<f64> = data.rows().into_iter().map(|r| sq_dist(r, centers.row(0))).collect();
    for c in 1..k {
        let total: f64 = dist.iter().sum();
        let pick = if total > 0.0 {
            let u = rng.random::<f64>() * total;
            let mut acc = 0.0;
            dist.iter().position(|&d| {
                acc += d;
                acc > u
            })
            .unwrap_or(n - 1)
        } else {
            rng.random_range(0..n)
        };
        centers.row_mut(c).assign(&data.row(pick));
        for (i, r) in data.rows().into_iter().enumerate() {
            dist[i] = dist[i].min(sq_dist(r, centers.row(c)));
        }
    }
    centers
}

fn assign(data: ArrayView2<'_, f64>, centers: &Array2<f64>, labels: &mut [usize]) -> f64 {
    let mut inertia = 0.0;
    for (i, r) in data.rows().into_iter().enumerate() {
        let (best, d) = centers
            .rows()
            .into_iter()
            .map(|c| sq_dist(r, c))
            .enumerate()
            .min_by(|a, b| a.1.total_cmp(&b.1))
            .expect("k >= 1");
        labels[i] = best;
        inertia += d;
    }
    inertia
}

fn lloyd(data: ArrayView2<'_, f64>, k: usize, rng: &mut StreamRng) -> (Vec<usize>, f64) {
    let mut centers = plus_plus(data, k, rng);
    let mut labels = vec![0; data.nrows()];
    let mut inertia = assign(data, &centers, &mut labels);
    for _ in 0..MAX_LLOYD {
        let mut sums = Array2::<f64>::zeros(centers.dim());
        let mut counts = vec![0usize; k];
        for (r, &l) in data.rows().into_iter().zip(&labels) {
            sums.row_mut(l).scaled_add(1.0, &r);
            counts[l] += 1;
        }
        for c in 0..k {
            if counts[c] > 0 {
                centers.row_mut(c).assign(&(&sums.row(c) / counts[c] as f64));
            }
        }
        let previous = labels.clone();
        inertia = assign(data, &centers, &mut labels);
        if labels == previous {
            break;
        }
    }
    (labels, inertia)
}

/// Hard cluster labels of the lowest-inertia run among `restarts`.
pub(crate) fn kmeans(data: ArrayView2<'_, f64>, k: usize, restarts: usize, rng: &mut StreamRng) -> Vec<usize> {
    let mut best: Option<(Vec<usize>, f64)> = None;
    for _ in 0..restarts.max(1) {
        let run = lloyd(data, k, rng);
        if best.as_ref().is_none_or(|b| run.1 < b.1) {
            best = Some(run);
        }
    }
    best.expect("at least one restart").0
}

/// One-hot responsibilities from labels.
pub(crate) fn one_hot(labels: &[usize], k: usize) -> Array2<f64> {
    let mut g = Array2::zeros((labels.len(), k));
    for (t, &l) in labels.iter().enumerate() {
        g[[t, l]] = 1.0;
    }
    g
}
