//! Clustering pipeline: K-means (Lloyd), normalized mutual information and
//! a PCA baseline reducer.

use nalgebra::{DMatrix, DVector};
use rand::{Rng, SeedableRng};
use rand_chacha::ChaCha20Rng;
use serde::{Deserialize, Serialize};

use crate::boost::EnsembleModel;
use crate::error::{Error, Result};
use crate::network::Network;
use crate::persist::{EvalReport, MetricRecord};
use crate::tensor::Tensor;

#[derive(Debug, Clone, Copy, PartialEq, Eq, Serialize, Deserialize)]
#[serde(rename_all = "snake_case")]
pub enum KMeansInit {
    KMeansPlusPlus,
    Random,
}

#[derive(Debug, Clone)]
pub struct KMeansResult {
    pub centroids: Vec<Vec<f64>>,
    pub assignments: Vec<usize>,
    pub inertia: f64,
    pub iterations: usize,
}

fn sq_dist(a: &[f64], b: &[f64]) -> f64 {
    a.iter().zip(b).map(|(x, y)| (x - y) * (x - y)).sum()
}

/// Lloyd's algorithm. Runs until the assignment fixpoint, centroid shift
/// below `tol`, or `max_iter`. Deterministic given the seed. Empty clusters
/// are refilled with the point farthest from the largest cluster's centroid.
pub fn kmeans(
    points: &[Vec<f64>],
    k: usize,
    init: KMeansInit,
    seed: u64,
    max_iter: usize,
    tol: f64,
) -> Result<KMeansResult> {
    if points.is_empty() {
        return Err(Error::InvalidArgument("kmeans on empty input".into()));
    }
    if k == 0 {
        return Err(Error::InvalidArgument("k must be >= 1".into()));
    }
    let mut distinct: Vec<&Vec<f64>> = Vec::new();
    for p in points {
        if !distinct.iter().any(|d| *d == p) {
            distinct.push(p);
            if distinct.len() >= k {
                break;
            }
        }
    }
    if distinct.len() < k {
        return Err(Error::InvalidArgument(format!(
            "k={k} exceeds number of distinct points"
        )));
    }

    let mut rng = ChaCha20Rng::seed_from_u64(seed);
    let mut centroids = match init {
        KMeansInit::KMeansPlusPlus => kmeanspp_init(points, k, &mut rng),
        KMeansInit::Random => random_init(points, k, &mut rng),
    };

    let n = points.len();
    let mut assignments = vec![0usize; n];
    let mut inertia = f64::INFINITY;
    let mut iterations = 0;
    for _ in 0..max_iter {
        iterations += 1;
        // assignment step
        let mut changed = false;
        let mut new_inertia = 0.0;
        for (i, p) in points.iter().enumerate() {
            let (best, d) = nearest(p, &centroids);
            if assignments[i] != best {
                assignments[i] = best;
                changed = true;
            }
            new_inertia += d;
        }
        debug_assert!(new_inertia <= inertia + 1e-9, "Lloyd inertia increased");
        inertia = new_inertia;

        // refill empty clusters deterministically
        let mut counts = vec![0usize; k];
        for &a in &assignments {
            counts[a] += 1;
        }
        for c in 0..k {
            if counts[c] == 0 {
                let largest = (0..k).max_by_key(|&j| counts[j]).unwrap();
                let far = points
                    .iter()
                    .enumerate()
                    .filter(|(i, _)| assignments[*i] == largest)
                    .max_by(|(_, a), (_, b)| {
                        sq_dist(a, &centroids[largest])
                            .partial_cmp(&sq_dist(b, &centroids[largest]))
                            .unwrap()
                    })
                    .map(|(i, _)| i)
                    .unwrap();
                assignments[far] = c;
                counts[c] += 1;
                counts[largest] -= 1;
                changed = true;
            }
        }

        // update step
        let dim = points[0].len();
        let mut sums = vec![vec![0.0; dim]; k];
        for (p, &a) in points.iter().zip(&assignments) {
            for (s, v) in sums[a].iter_mut().zip(p) {
                *s += v;
            }
        }
        let mut shift: f64 = 0.0;
        for c in 0..k {
            let inv = 1.0 / counts[c] as f64;
            for v in sums[c].iter_mut() {
                *v *= inv;
            }
            shift = shift.max(sq_dist(&sums[c], &centroids[c]).sqrt());
            centroids[c] = std::mem::take(&mut sums[c]);
        }

        if !changed || shift < tol {
            break;
        }
    }
    // final inertia against the final centroids
    let mut final_inertia = 0.0;
    for (i, p) in points.iter().enumerate() {
        let (best, d) = nearest(p, &centroids);
        assignments[i] = best;
        final_inertia += d;
    }
    Ok(KMeansResult {
        centroids,
        assignments,
        inertia: final_inertia,
        iterations,
    })
}

fn nearest(p: &[f64], centroids: &[Vec<f64>]) -> (usize, f64) {
    let mut best = 0;
    let mut best_d = f64::INFINITY;
    for (c, cent) in centroids.iter().enumerate() {
        let d = sq_dist(p, cent);
        if d < best_d {
            best_d = d;
            best = c;
        }
    }
    (best, best_d)
}

fn random_init(points: &[Vec<f64>], k: usize, rng: &mut ChaCha20Rng) -> Vec<Vec<f64>> {
    // distinct starting points, first-come on shuffled order
    let mut order: Vec<usize> = (0..points.len()).collect();
    use rand::seq::SliceRandom;
    order.shuffle(rng);
    let mut out: Vec<Vec<f64>> = Vec::with_capacity(k);
    for i in order {
        if !out.iter().any(|c| c == &points[i]) {
            out.push(points[i].clone());
            if out.len() == k {
                break;
            }
        }
    }
    out
}

fn kmeanspp_init(points: &[Vec<f64>], k: usize, rng: &mut ChaCha20Rng) -> Vec<Vec<f64>> {
    let first = rng.random_range(0..points.len());
    let mut centroids = vec![points[first].clone()];
    let mut d2: Vec<f64> = points.iter().map(|p| sq_dist(p, &centroids[0])).collect();
    while centroids.len() < k {
        let total: f64 = d2.iter().sum();
        let next = if total > 0.0 {
            let u = rng.random::<f64>() * total;
            let mut acc = 0.0;
            let mut pick = points.len() - 1;
            for (i, &d) in d2.iter().enumerate() {
                acc += d;
                if u < acc {
                    pick = i;
                    break;
                }
            }
            pick
        } else {
            // all mass on existing centroids: fall back to a distinct point
            points
                .iter()
                .position(|p| !centroids.iter().any(|c| c == p))
                .unwrap_or(0)
        };
        centroids.push(points[next].clone());
        for (i, p) in points.iter().enumerate() {
            d2[i] = d2[i].min(sq_dist(p, centroids.last().unwrap()));
        }
    }
    centroids
}

/// Best-inertia K-means over several restarts; ties go to the lowest
/// restart index.
pub fn kmeans_best(
    points: &[Vec<f64>],
    k: usize,
    init: KMeansInit,
    seed: u64,
    restarts: usize,
    max_iter: usize,
    tol: f64,
) -> Result<KMeansResult> {
    let mut best: Option<KMeansResult> = None;
    for r in 0..restarts.max(1) {
        let result = kmeans(points, k, init, seed.wrapping_add(r as u64), max_iter, tol)?;
        if best.as_ref().map_or(true, |b| result.inertia < b.inertia) {
            best = Some(result);
        }
    }
    Ok(best.unwrap())
}

/// Normalized mutual information 2*I(Y;C)/(H(Y)+H(C)) with natural logs,
/// 0*log(0) := 0. Both-trivial partitions score 1, a single trivial one 0.
pub fn nmi(y: &[usize], c: &[usize]) -> Result<f64> {
    if y.is_empty() || y.len() != c.len() {
        return Err(Error::InvalidArgument(format!(
            "label lengths {} vs {}",
            y.len(),
            c.len()
        )));
    }
    let ky = y.iter().max().unwrap() + 1;
    let kc = c.iter().max().unwrap() + 1;
    let n = y.len() as f64;
    let mut table = vec![vec![0usize; kc]; ky];
    for (&a, &b) in y.iter().zip(c) {
        table[a][b] += 1;
    }
    let row: Vec<f64> = table
        .iter()
        .map(|r| r.iter().sum::<usize>() as f64 / n)
        .collect();
    let col: Vec<f64> = (0..kc)
        .map(|j| table.iter().map(|r| r[j]).sum::<usize>() as f64 / n)
        .collect();
    let h = |p: &[f64]| -> f64 { p.iter().filter(|&&v| v > 0.0).map(|&v| -v * v.ln()).sum() };
    let hy = h(&row);
    let hc = h(&col);
    if hy + hc == 0.0 {
        return Ok(1.0); // both single-cluster
    }
    let mut mi = 0.0;
    for i in 0..ky {
        for j in 0..kc {
            let p = table[i][j] as f64 / n;
            if p > 0.0 {
                mi += p * (p / (row[i] * col[j])).ln();
            }
        }
    }
    Ok((2.0 * mi / (hy + hc)).clamp(0.0, 1.0))
}

/// PCA target: a fixed dimension or the smallest dimension explaining at
/// least the given variance fraction.
#[derive(Debug, Clone, Copy, PartialEq, Serialize, Deserialize)]
#[serde(rename_all = "snake_case")]
pub enum PcaTarget {
    Dimensions(usize),
    VarianceFraction(f64),
}

#[derive(Debug, Clone)]
pub struct PcaBasis {
    pub mean: Vec<f64>,
    /// Row-per-component projection matrix, components orthonormal.
    pub components: Vec<Vec<f64>>,
    /// Explained-variance ratios for all feature dimensions, nonincreasing.
    pub explained_ratio: Vec<f64>,
}

impl PcaBasis {
    /// Back-projection into the original space.
    pub fn reconstruct(&self, z: &[f64]) -> Vec<f64> {
        let mut out = self.mean.clone();
        for (zc, comp) in z.iter().zip(&self.components) {
            for (o, c) in out.iter_mut().zip(comp) {
                *o += zc * c;
            }
        }
        out
    }
}

/// Mean-centered projection onto the top principal components of the
/// covariance matrix.
pub fn pca_reduce(data: &[Vec<f64>], target: PcaTarget) -> Result<(Vec<Vec<f64>>, PcaBasis)> {
    if data.is_empty() {
        return Err(Error::InvalidArgument("pca on empty input".into()));
    }
    let n = data.len();
    let d = data[0].len();
    let mut mean = vec![0.0; d];
    for row in data {
        for (m, v) in mean.iter_mut().zip(row) {
            *m += v;
        }
    }
    for m in mean.iter_mut() {
        *m /= n as f64;
    }

    let centered = DMatrix::from_fn(n, d, |i, j| data[i][j] - mean[j]);
    let cov = centered.transpose() * &centered / (n as f64);
    let eig = cov.symmetric_eigen();

    let mut order: Vec<usize> = (0..d).collect();
    order.sort_by(|&a, &b| eig.eigenvalues[b].partial_cmp(&eig.eigenvalues[a]).unwrap());
    let eigenvalues: Vec<f64> = order.iter().map(|&i| eig.eigenvalues[i].max(0.0)).collect();
    let total: f64 = eigenvalues.iter().sum();
    let explained_ratio: Vec<f64> = if total > 0.0 {
        eigenvalues.iter().map(|&v| v / total).collect()
    } else {
        vec![0.0; d]
    };

    let dims = match target {
        PcaTarget::Dimensions(k) => {
            if k == 0 || k > d {
                return Err(Error::InvalidArgument(format!(
                    "pca target {k} outside 1..={d}"
                )));
            }
            k
        }
        PcaTarget::VarianceFraction(v) => {
            if !(v > 0.0 && v <= 1.0) {
                return Err(Error::InvalidArgument(format!(
                    "variance fraction {v} outside (0,1]"
                )));
            }
            let mut acc = 0.0;
            let mut k = d;
            for (i, r) in explained_ratio.iter().enumerate() {
                acc += r;
                if acc >= v - 1e-12 {
                    k = i + 1;
                    break;
                }
            }
            k
        }
    };

    let components: Vec<Vec<f64>> = order[..dims]
        .iter()
        .map(|&i| {
            let col: DVector<f64> = eig.eigenvectors.column(i).into();
            col.iter().copied().collect()
        })
        .collect();

    let projected = data
        .iter()
        .map(|row| {
            components
                .iter()
                .map(|comp| {
                    comp.iter()
                        .zip(row.iter().zip(&mean))
                        .map(|(c, (v, m))| c * (v - m))
                        .sum()
                })
                .collect()
        })
        .collect();

    Ok((
        projected,
        PcaBasis {
            mean,
            components,
            explained_ratio,
        },
    ))
}

/// Dimensionality reducer feeding K-means.
pub enum Reducer<'a> {
    Ensemble(&'a EnsembleModel),
    SingleAe(&'a Network),
    Pca(PcaTarget),
    /// Flattened raw features, no reduction.
    Identity,
}

impl Reducer<'_> {
    pub fn name(&self) -> &'static str {
        match self {
            Reducer::Ensemble(_) => "boosted-ae",
            Reducer::SingleAe(_) => "single-ae",
            Reducer::Pca(_) => "pca",
            Reducer::Identity => "identity",
        }
    }

    pub fn reduce(&self, data: &[Tensor]) -> Result<Vec<Vec<f64>>> {
        match self {
            Reducer::Ensemble(model) => data
                .iter()
                .map(|x| Ok(model.encode(x)?.data().to_vec()))
                .collect(),
            Reducer::SingleAe(enc) => data
                .iter()
                .map(|x| Ok(enc.forward(x)?.0.data().to_vec()))
                .collect(),
            Reducer::Pca(target) => {
                let flat: Vec<Vec<f64>> = data.iter().map(|x| x.data().to_vec()).collect();
                Ok(pca_reduce(&flat, *target)?.0)
            }
            Reducer::Identity => Ok(data.iter().map(|x| x.data().to_vec()).collect()),
        }
    }
}

/// Encodes the data, runs K-means once per seed, and reports the
/// best-inertia run's NMI plus the mean/std across seeds.
pub fn eval_clustering(
    reducer: &Reducer<'_>,
    data: &[Tensor],
    true_labels: &[usize],
    k: usize,
    seeds: &[u64],
) -> Result<EvalReport> {
    if seeds.is_empty() {
        return Err(Error::InvalidArgument("need at least one seed".into()));
    }
    if data.len() != true_labels.len() {
        return Err(Error::InvalidArgument(format!(
            "{} samples vs {} labels",
            data.len(),
            true_labels.len()
        )));
    }
    let encoded = reducer.reduce(data)?;
    let mut nmis = Vec::with_capacity(seeds.len());
    let mut best: Option<(f64, f64)> = None; // (inertia, nmi)
    for &seed in seeds {
        let result = kmeans_best(&encoded, k, KMeansInit::KMeansPlusPlus, seed, 10, 300, 1e-9)?;
        let score = nmi(true_labels, &result.assignments)?;
        nmis.push(score);
        if best.map_or(true, |(bi, _)| result.inertia < bi) {
            best = Some((result.inertia, score));
        }
    }
    let mean = nmis.iter().sum::<f64>() / nmis.len() as f64;
    let std = (nmis.iter().map(|v| (v - mean) * (v - mean)).sum::<f64>() / nmis.len() as f64).sqrt();

    let mut report = EvalReport::new("eval-cluster");
    let ctx = format!("reducer={},k={k}", reducer.name());
    report.metrics.push(MetricRecord {
        name: "nmi_best".into(),
        value: best.unwrap().1,
        context: ctx.clone(),
    });
    report.metrics.push(MetricRecord {
        name: "nmi_mean".into(),
        value: mean,
        context: ctx.clone(),
    });
    report.metrics.push(MetricRecord {
        name: "nmi_std".into(),
        value: std,
        context: ctx,
    });
    Ok(report)
}

#[cfg(test)]
mod tests {
    use super::*;
    use crate::data::synth_blobs;

    #[test]
    fn kmeans_two_obvious_clusters() {
        let points = vec![
            vec![0.0, 0.0],
            vec![0.0, 1.0],
            vec![10.0, 0.0],
            vec![10.0, 1.0],
        ];
        let r = kmeans(&points, 2, KMeansInit::KMeansPlusPlus, 1, 100, 1e-9).unwrap();
        assert_eq!(r.assignments[0], r.assignments[1]);
        assert_eq!(r.assignments[2], r.assignments[3]);
        assert_ne!(r.assignments[0], r.assignments[2]);
        let mut centroids = r.centroids.clone();
        centroids.sort_by(|a, b| a[0].partial_cmp(&b[0]).unwrap());
        assert_eq!(centroids[0], vec![0.0, 0.5]);
        assert_eq!(centroids[1], vec![10.0, 0.5]);
        // exhaustive 2-partition check: this split has minimal inertia
        assert!((r.inertia - 1.0).abs() < 1e-12);
    }

    #[test]
    fn kmeans_k_equals_n() {
        let points: Vec<Vec<f64>> = (0..5).map(|i| vec![i as f64, 0.0]).collect();
        let r = kmeans(&points, 5, KMeansInit::KMeansPlusPlus, 3, 100, 1e-9).unwrap();
        assert_eq!(r.inertia, 0.0);
    }

    #[test]
    fn kmeans_rejects_k_above_distinct() {
        let points = vec![vec![1.0], vec![1.0], vec![2.0]];
        assert!(kmeans(&points, 3, KMeansInit::Random, 0, 10, 1e-9).is_err());
        assert!(kmeans(&[], 1, KMeansInit::Random, 0, 10, 1e-9).is_err());
    }

    #[test]
    fn kmeans_deterministic_per_seed() {
        let ds = synth_blobs(90, 3, 4, 0.1, 5);
        let pts: Vec<Vec<f64>> = ds.samples.iter().map(|s| s.data().to_vec()).collect();
        let a = kmeans(&pts, 3, KMeansInit::KMeansPlusPlus, 7, 300, 1e-9).unwrap();
        let b = kmeans(&pts, 3, KMeansInit::KMeansPlusPlus, 7, 300, 1e-9).unwrap();
        assert_eq!(a.assignments, b.assignments);
        assert_eq!(a.inertia, b.inertia);
    }

    #[test]
    fn separable_blobs_high_nmi() {
        let ds = synth_blobs(150, 3, 4, 0.02, 9);
        let pts: Vec<Vec<f64>> = ds.samples.iter().map(|s| s.data().to_vec()).collect();
        let r = kmeans_best(&pts, 3, KMeansInit::KMeansPlusPlus, 1, 10, 300, 1e-9).unwrap();
        let score = nmi(ds.labels.as_ref().unwrap(), &r.assignments).unwrap();
        assert!(score >= 0.95, "nmi {score}");
    }

    #[test]
    fn nmi_perfect_and_trivial() {
        let y = vec![0, 0, 1, 1, 2, 2];
        assert_eq!(nmi(&y, &y).unwrap(), 1.0);
        // bijective relabeling still scores 1
        let relabeled = vec![2, 2, 0, 0, 1, 1];
        assert!((nmi(&y, &relabeled).unwrap() - 1.0).abs() < 1e-12);
        // constant clustering scores 0
        let constant = vec![0; 6];
        assert_eq!(nmi(&y, &constant).unwrap(), 0.0);
        // both trivial: 1 by convention
        assert_eq!(nmi(&constant, &constant).unwrap(), 1.0);
    }

    #[test]
    fn nmi_contingency_hand_case() {
        // table [[2,1],[1,2]]
        let y = vec![0, 0, 0, 1, 1, 1];
        let c = vec![0, 0, 1, 0, 1, 1];
        // direct sum over the joint distribution
        let n = 6.0;
        let p = [[2.0 / n, 1.0 / n], [1.0 / n, 2.0 / n]];
        let marg = 0.5f64;
        let mut mi = 0.0;
        for row in &p {
            for &pij in row {
                mi += pij * (pij / (marg * marg)).ln();
            }
        }
        let h = -2.0 * marg * marg.ln();
        let expected = 2.0 * mi / (h + h);
        assert!((nmi(&y, &c).unwrap() - expected).abs() < 1e-10);
    }

    #[test]
    fn nmi_symmetric() {
        let y = vec![0, 1, 2, 0, 1, 2, 0, 0];
        let c = vec![1, 1, 0, 0, 2, 2, 1, 0];
        assert!((nmi(&y, &c).unwrap() - nmi(&c, &y).unwrap()).abs() < 1e-12);
        assert!(nmi(&y, &c[..5].to_vec()).is_err());
    }

    #[test]
    fn pca_recovers_planar_data() {
        // data on a 2-D plane inside R^5
        use rand::{Rng, SeedableRng};
        let mut rng = ChaCha20Rng::seed_from_u64(4);
        let b1 = [1.0, 0.5, -0.3, 0.2, 0.9];
        let b2 = [-0.4, 1.0, 0.6, -0.2, 0.1];
        let data: Vec<Vec<f64>> = (0..60)
            .map(|_| {
                let (a, b) = (rng.random::<f64>() * 4.0 - 2.0, rng.random::<f64>() * 4.0 - 2.0);
                (0..5).map(|i| a * b1[i] + b * b2[i] + 3.0).collect()
            })
            .collect();
        let (proj, basis) = pca_reduce(&data, PcaTarget::Dimensions(2)).unwrap();
        for (row, z) in data.iter().zip(&proj) {
            let rec = basis.reconstruct(z);
            for (a, b) in row.iter().zip(&rec) {
                assert!((a - b).abs() < 1e-8, "{a} vs {b}");
            }
        }
        // variance-fraction mode picks d'=2 here
        let (proj95, _) = pca_reduce(&data, PcaTarget::VarianceFraction(0.95)).unwrap();
        assert_eq!(proj95[0].len(), 2);
    }

    #[test]
    fn pca_full_basis_is_isometry() {
        let ds = synth_blobs(40, 3, 4, 0.2, 6);
        let data: Vec<Vec<f64>> = ds.samples.iter().map(|s| s.data().to_vec()).collect();
        let (proj, basis) = pca_reduce(&data, PcaTarget::Dimensions(4)).unwrap();
        for i in 0..10 {
            for j in 0..10 {
                let d_orig = sq_dist(&data[i], &data[j]).sqrt();
                let d_proj = sq_dist(&proj[i], &proj[j]).sqrt();
                assert!((d_orig - d_proj).abs() < 1e-8);
            }
        }
        // ratios nonincreasing and summing to 1
        let r = &basis.explained_ratio;
        for w in r.windows(2) {
            assert!(w[0] >= w[1] - 1e-12);
        }
        assert!((r.iter().sum::<f64>() - 1.0).abs() < 1e-9);
        // components orthonormal
        for a in 0..basis.components.len() {
            for b in 0..basis.components.len() {
                let dot: f64 = basis.components[a]
                    .iter()
                    .zip(&basis.components[b])
                    .map(|(x, y)| x * y)
                    .sum();
                let expected = if a == b { 1.0 } else { 0.0 };
                assert!((dot - expected).abs() < 1e-10);
            }
        }
    }

    #[test]
    fn pca_rejects_excess_dimensions() {
        let data = vec![vec![1.0, 2.0], vec![3.0, 4.0]];
        assert!(pca_reduce(&data, PcaTarget::Dimensions(3)).is_err());
    }

    #[test]
    fn eval_clustering_one_hot_oracle() {
        // true labels as one-hot "encoding" must cluster perfectly
        let labels: Vec<usize> = (0..30).map(|i| i % 3).collect();
        let data: Vec<Tensor> = labels
            .iter()
            .map(|&l| {
                let mut v = vec![0.0; 3];
                v[l] = 1.0;
                Tensor::vector(&v)
            })
            .collect();
        let report = eval_clustering(&Reducer::Identity, &data, &labels, 3, &[1, 2, 3]).unwrap();
        let best = report
            .metrics
            .iter()
            .find(|m| m.name == "nmi_best")
            .unwrap();
        assert_eq!(best.value, 1.0);
    }
}
