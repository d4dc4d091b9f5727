//! Nearest-subspace classification, a k-means baseline, and clustering
//! agreement metrics with an optimal-assignment solver.

use nalgebra::{DMatrix, DVector};
use rand::prelude::*;
use rand_chacha::ChaCha8Rng;
use serde::Serialize;

use crate::error::{Error, Result};
use crate::matrix::{FeatureMatrix, LabelVector};
use crate::real::{real, Real};

/// Default number of principal components for the nearest-subspace
/// classifier, capped at each class's effective rank.
pub const DEFAULT_COMPONENTS: usize = 30;

/// Per-class model: mean and leading principal directions.
#[derive(Debug, Clone)]
pub struct ClassModel<T: Real> {
    pub mean: DVector<T>,
    /// Orthonormal d x r basis of the top principal components.
    pub basis: DMatrix<T>,
    pub r_j: usize,
    /// Set when the requested component count exceeded the effective rank.
    pub rank_truncated: bool,
}

/// Clustering agreement scores and the label assignment used by ACC.
#[derive(Debug, Clone, Serialize)]
pub struct MetricReport {
    pub nmi: f64,
    pub acc: f64,
    pub ari: f64,
    /// `assignment[j]` is the ground-truth label matched to cluster `j`.
    pub assignment: Vec<usize>,
}

/// Fits one [`ClassModel`] per class: the column mean and the top `r_j` left
/// singular vectors of the mean-centered class matrix. `r_j` is truncated to
/// the effective rank, flagged via `rank_truncated`.
pub fn fit_class_models<T: Real>(
    z: &FeatureMatrix<T>,
    labels: &LabelVector,
    r_j: usize,
    k: usize,
) -> Result<Vec<ClassModel<T>>> {
    if labels.len() != z.len() {
        return Err(Error::DimensionMismatch(
            "labels must match the sample count".into(),
        ));
    }
    if r_j == 0 {
        return Err(Error::InvalidInput("r_j must be positive".into()));
    }
    if let Some(&bad) = labels.as_slice().iter().find(|&&l| l >= k) {
        return Err(Error::InvalidInput(format!("label {bad} out of range for k={k}")));
    }
    let d = z.dim();
    let mut models = Vec::with_capacity(k);
    for j in 0..k {
        let cols: Vec<usize> = labels
            .as_slice()
            .iter()
            .enumerate()
            .filter_map(|(i, &l)| (l == j).then_some(i))
            .collect();
        if cols.is_empty() {
            return Err(Error::InvalidInput(format!("class {j} has no samples")));
        }
        let mut class = DMatrix::zeros(d, cols.len());
        for (dst, &src) in cols.iter().enumerate() {
            class.set_column(dst, &z.data().column(src));
        }
        let mean = class.column_mean();
        for mut c in class.column_iter_mut() {
            c -= &mean;
        }
        let svd = class.svd(true, false);
        let u = svd.u.expect("left singular vectors requested");
        let sv = &svd.singular_values;
        let smax = sv.iter().copied().fold(T::zero(), T::max);
        let thresh = smax * real::<T>(1e-9);
        // svd output is ordered descending in nalgebra
        let effective = sv.iter().filter(|&&s| s > thresh && s > T::zero()).count();
        let r = r_j.min(effective).min(d).min(cols.len());
        let mut order: Vec<usize> = (0..sv.len()).collect();
        order.sort_by(|&a, &b| sv[b].partial_cmp(&sv[a]).expect("finite singular values"));
        let mut basis = DMatrix::zeros(d, r);
        for (dst, &src) in order.iter().take(r).enumerate() {
            basis.set_column(dst, &u.column(src));
        }
        models.push(ClassModel {
            mean,
            basis,
            r_j: r,
            rank_truncated: r < r_j,
        });
    }
    Ok(models)
}

/// Squared residual of `z` against a class model:
/// `|(I - U U')(z - mean)|^2`.
fn residual_sq<T: Real>(model: &ClassModel<T>, z: &DVector<T>) -> T {
    let v = z - &model.mean;
    if model.r_j == 0 {
        return v.norm_squared();
    }
    let proj = &model.basis * (model.basis.transpose() * &v);
    (v - proj).norm_squared()
}

/// Label of the class with the smallest subspace residual; ties break to the
/// lowest class index.
pub fn nearest_subspace_predict<T: Real>(models: &[ClassModel<T>], z: &DVector<T>) -> Result<usize> {
    if models.is_empty() {
        return Err(Error::InvalidInput("no class models".into()));
    }
    if models.iter().any(|m| m.mean.len() != z.len()) {
        return Err(Error::DimensionMismatch(
            "query dimension does not match the models".into(),
        ));
    }
    if !z.iter().all(|x| x.is_finite()) {
        return Err(Error::InvalidInput("query vector is not finite".into()));
    }
    let mut best = 0;
    let mut best_res = residual_sq(&models[0], z);
    for (j, m) in models.iter().enumerate().skip(1) {
        let r = residual_sq(m, z);
        if r < best_res {
            best = j;
            best_res = r;
        }
    }
    Ok(best)
}

/// Lloyd's algorithm with seeded data-point initialization, re-seeding any
/// emptied cluster from the point farthest from its assigned centroid, and
/// best-of-`restarts` selection by within-cluster sum of squares (ties break
/// to the earlier restart).
pub fn kmeans<T: Real>(
    x: &FeatureMatrix<T>,
    k: usize,
    seed: u64,
    max_iters: usize,
    restarts: usize,
) -> Result<LabelVector> {
    let m = x.len();
    if k == 0 || k > m {
        return Err(Error::InvalidInput(format!(
            "k must lie in 1..={m}, got {k}"
        )));
    }
    if restarts == 0 {
        return Err(Error::InvalidInput("restarts must be positive".into()));
    }
    let mut rng = ChaCha8Rng::seed_from_u64(seed);
    let mut best: Option<(T, Vec<usize>)> = None;
    for _ in 0..restarts {
        // distinct initial centers via partial Fisher-Yates
        let mut idx: Vec<usize> = (0..m).collect();
        for i in 0..k {
            let j = rng.random_range(i..m);
            idx.swap(i, j);
        }
        let mut centers: Vec<DVector<T>> = idx[..k].iter().map(|&i| x.column(i)).collect();
        let mut assign = vec![0usize; m];
        for _ in 0..max_iters {
            let mut changed = false;
            for (i, slot) in assign.iter_mut().enumerate() {
                let col = x.data().column(i);
                let mut bj = 0;
                let mut bd = (col - &centers[0]).norm_squared();
                for (j, c) in centers.iter().enumerate().skip(1) {
                    let d2 = (col - c).norm_squared();
                    if d2 < bd {
                        bd = d2;
                        bj = j;
                    }
                }
                if *slot != bj {
                    *slot = bj;
                    changed = true;
                }
            }
            // recompute centers; re-seed empty clusters from the farthest point
            let mut counts = vec![0usize; k];
            let mut sums: Vec<DVector<T>> = vec![DVector::zeros(x.dim()); k];
            for (i, &a) in assign.iter().enumerate() {
                counts[a] += 1;
                sums[a] += x.data().column(i);
            }
            for j in 0..k {
                if counts[j] > 0 {
                    centers[j] = &sums[j] / real::<T>(counts[j] as f64);
                }
            }
            for j in 0..k {
                if counts[j] == 0 {
                    let far = (0..m)
                        .max_by(|&a, &b| {
                            let da = (x.data().column(a) - &centers[assign[a]]).norm_squared();
                            let db = (x.data().column(b) - &centers[assign[b]]).norm_squared();
                            da.partial_cmp(&db).expect("finite distances")
                        })
                        .expect("nonempty data");
                    centers[j] = x.column(far);
                    changed = true;
                }
            }
            if !changed {
                break;
            }
        }
        let mut wcss = T::zero();
        for i in 0..m {
            wcss += (x.data().column(i) - &centers[assign[i]]).norm_squared();
        }
        let better = match &best {
            None => true,
            Some((bw, _)) => wcss < *bw,
        };
        if better {
            best = Some((wcss, assign));
        }
    }
    Ok(LabelVector::from(best.expect("at least one restart").1))
}

fn check_lengths(y: &[usize], c: &[usize]) -> Result<usize> {
    if y.len() != c.len() {
        return Err(Error::DimensionMismatch(format!(
            "label vectors have lengths {} and {}",
            y.len(),
            c.len()
        )));
    }
    Ok(y.len())
}

fn contingency(y: &[usize], c: &[usize]) -> (Vec<Vec<usize>>, Vec<usize>, Vec<usize>) {
    let ky = y.iter().copied().max().map_or(1, |v| v + 1);
    let kc = c.iter().copied().max().map_or(1, |v| v + 1);
    let mut n = vec![vec![0usize; kc]; ky];
    let mut a = vec![0usize; ky];
    let mut b = vec![0usize; kc];
    for (&yi, &ci) in y.iter().zip(c) {
        n[yi][ci] += 1;
        a[yi] += 1;
        b[ci] += 1;
    }
    (n, a, b)
}

/// The two labelings induce the same partition (equal up to a bijection).
fn same_partition(y: &[usize], c: &[usize]) -> bool {
    let (n, a, b) = contingency(y, c);
    n.iter().flatten().filter(|&&v| v > 0).count()
        == a.iter().filter(|&&v| v > 0).count()
        && a.iter().filter(|&&v| v > 0).count() == b.iter().filter(|&&v| v > 0).count()
}

/// Normalized mutual information: mutual information over the geometric mean
/// of the two entropies. When either partition has zero entropy the formula
/// degenerates; the convention is 1 for identical partitions (up to
/// relabeling) and 0 otherwise.
pub fn nmi(y: &LabelVector, c: &LabelVector) -> Result<f64> {
    let m = check_lengths(y.as_slice(), c.as_slice())? as f64;
    if m == 0.0 {
        return Err(Error::InvalidInput("empty label vectors".into()));
    }
    let (n, a, b) = contingency(y.as_slice(), c.as_slice());
    let entropy = |counts: &[usize]| -> f64 {
        counts
            .iter()
            .filter(|&&v| v > 0)
            .map(|&v| {
                let p = v as f64 / m;
                -p * p.ln()
            })
            .sum()
    };
    let hy = entropy(&a);
    let hc = entropy(&b);
    if hy <= 0.0 || hc <= 0.0 {
        return Ok(if same_partition(y.as_slice(), c.as_slice()) {
            1.0
        } else {
            0.0
        });
    }
    let mut mi = 0.0;
    for (i, row) in n.iter().enumerate() {
        for (j, &nij) in row.iter().enumerate() {
            if nij > 0 {
                let nij = nij as f64;
                mi += (nij / m) * ((m * nij) / (a[i] as f64 * b[j] as f64)).ln();
            }
        }
    }
    Ok((mi / (hy * hc).sqrt()).clamp(0.0, 1.0))
}

/// Clustering accuracy: the best one-to-one cluster-to-label mapping,
/// solved by optimal assignment on the contingency table. Returns the
/// accuracy and the mapping (lexicographically smallest among optima).
pub fn acc(y: &LabelVector, c: &LabelVector, k: usize) -> Result<(f64, Vec<usize>)> {
    let m = check_lengths(y.as_slice(), c.as_slice())?;
    if m == 0 {
        return Err(Error::InvalidInput("empty label vectors".into()));
    }
    if let Some(&bad) = y
        .as_slice()
        .iter()
        .chain(c.as_slice())
        .find(|&&l| l >= k)
    {
        return Err(Error::InvalidInput(format!("label {bad} out of range for k={k}")));
    }
    let mut count = vec![vec![0usize; k]; k]; // count[label][cluster]
    for (&yi, &ci) in y.as_slice().iter().zip(c.as_slice()) {
        count[yi][ci] += 1;
    }
    // minimize cost[cluster][label] = -count
    let cost = DMatrix::from_fn(k, k, |j, l| -(count[l][j] as f64));
    let assignment = optimal_assignment(&cost)?;
    let hits: usize = assignment.iter().enumerate().map(|(j, &l)| count[l][j]).sum();
    Ok((hits as f64 / m as f64, assignment))
}

/// Adjusted Rand index via pair counts over the contingency table.
pub fn ari(y: &LabelVector, c: &LabelVector) -> Result<f64> {
    let m = check_lengths(y.as_slice(), c.as_slice())?;
    if m < 2 {
        return Err(Error::InvalidInput(
            "the adjusted Rand index needs at least two samples".into(),
        ));
    }
    let (n, a, b) = contingency(y.as_slice(), c.as_slice());
    let comb2 = |v: usize| -> f64 {
        let v = v as f64;
        v * (v - 1.0) / 2.0
    };
    let sum_ij: f64 = n.iter().flatten().map(|&v| comb2(v)).sum();
    let sum_a: f64 = a.iter().map(|&v| comb2(v)).sum();
    let sum_b: f64 = b.iter().map(|&v| comb2(v)).sum();
    let total = comb2(m);
    let expected = sum_a * sum_b / total;
    let max_index = 0.5 * (sum_a + sum_b);
    if (max_index - expected).abs() < 1e-12 {
        // both partitions degenerate the same way
        return Ok(if (sum_ij - expected).abs() < 1e-12 { 1.0 } else { 0.0 });
    }
    Ok((sum_ij - expected) / (max_index - expected))
}

/// All three metrics plus the ACC assignment in one report.
pub fn metric_report(y: &LabelVector, c: &LabelVector, k: usize) -> Result<MetricReport> {
    let (acc_val, assignment) = acc(y, c, k)?;
    Ok(MetricReport {
        nmi: nmi(y, c)?,
        acc: acc_val,
        ari: ari(y, c)?,
        assignment,
    })
}

/// Minimum-cost perfect matching on a square cost matrix, O(k^3) via
/// shortest augmenting paths with potentials. Returns `result[row] = column`,
/// the lexicographically smallest assignment among cost-minimal ones.
pub fn optimal_assignment(cost: &DMatrix<f64>) -> Result<Vec<usize>> {
    if cost.nrows() != cost.ncols() {
        return Err(Error::InvalidInput(format!(
            "assignment needs a square matrix, got {}x{}",
            cost.nrows(),
            cost.ncols()
        )));
    }
    if cost.is_empty() {
        return Err(Error::InvalidInput("assignment matrix is empty".into()));
    }
    if !cost.iter().all(|x| x.is_finite()) {
        return Err(Error::InvalidInput("assignment costs must be finite".into()));
    }
    let n = cost.nrows();
    let best = hungarian_value(cost);
    // Fix rows one at a time to the smallest column that still allows the
    // optimal total; exact for integral costs, 1e-9 slack otherwise.
    let mut chosen = vec![usize::MAX; n];
    let mut used = vec![false; n];
    for row in 0..n {
        let mut fixed_cost: f64 = (0..row).map(|r| cost[(r, chosen[r])]).sum();
        for col in 0..n {
            if used[col] {
                continue;
            }
            let rows_left: Vec<usize> = ((row + 1)..n).collect();
            let cols_left: Vec<usize> = (0..n).filter(|&cc| !used[cc] && cc != col).collect();
            let rest = if rows_left.is_empty() {
                0.0
            } else {
                let sub = DMatrix::from_fn(rows_left.len(), cols_left.len(), |i, j| {
                    cost[(rows_left[i], cols_left[j])]
                });
                hungarian_value(&sub)
            };
            if fixed_cost + cost[(row, col)] + rest <= best + 1e-9 {
                chosen[row] = col;
                used[col] = true;
                break;
            }
        }
        if chosen[row] == usize::MAX {
            return Err(Error::Numerical("assignment refinement failed".into()));
        }
        fixed_cost += cost[(row, chosen[row])];
        let _ = fixed_cost;
    }
    Ok(chosen)
}

/// Optimal assignment total cost (Jonker-Volgenant style, 1-indexed internal
/// arrays).
fn hungarian_value(cost: &DMatrix<f64>) -> f64 {
    let n = cost.nrows();
    if n == 0 {
        return 0.0;
    }
    let inf = f64::INFINITY;
    let mut u = vec![0.0f64; n + 1];
    let mut v = vec![0.0f64; n + 1];
    let mut p = vec![0usize; n + 1]; // p[col] = row matched to col (1-indexed)
    let mut way = vec![0usize; n + 1];
    for i in 1..=n {
        p[0] = i;
        let mut j0 = 0usize;
        let mut minv = vec![inf; n + 1];
        let mut used = vec![false; n + 1];
        loop {
            used[j0] = true;
            let i0 = p[j0];
            let mut delta = inf;
            let mut j1 = 0usize;
            for j in 1..=n {
                if !used[j] {
                    let cur = cost[(i0 - 1, j - 1)] - u[i0] - v[j];
                    if cur < minv[j] {
                        minv[j] = cur;
                        way[j] = j0;
                    }
                    if minv[j] < delta {
                        delta = minv[j];
                        j1 = j;
                    }
                }
            }
            for j in 0..=n {
                if used[j] {
                    u[p[j]] += delta;
                    v[j] -= delta;
                } else {
                    minv[j] -= delta;
                }
            }
            j0 = j1;
            if p[j0] == 0 {
                break;
            }
        }
        loop {
            let j1 = way[j0];
            p[j0] = p[j1];
            j0 = j1;
            if j0 == 0 {
                break;
            }
        }
    }
    let mut total = 0.0;
    for j in 1..=n {
        if p[j] > 0 {
            total += cost[(p[j] - 1, j - 1)];
        }
    }
    total
}
