//! Semi-supervised anomaly detection: one-class dataset construction,
//! reconstruction-error scoring, ROC curve and AUC.

use rand::seq::SliceRandom;
use rand::SeedableRng;
use rand_chacha::ChaCha20Rng;

use crate::boost::EnsembleModel;
use crate::data::Dataset;
use crate::error::{Error, Result};
use crate::persist::{EvalReport, MetricRecord};
use crate::tensor::{sq_error_sum, Tensor};

/// One-class split: train/val hold only the normal class, the test set is
/// balanced across all classes with binary labels (normal=0, anomaly=1).
/// Test normals are held out before train/val construction, so the test set
/// is disjoint from training data.
#[derive(Debug, Clone)]
pub struct OneClassSplit {
    pub normal_class: usize,
    pub train: Dataset,
    pub val: Dataset,
    pub test: Dataset,
    /// Binary anomaly labels aligned with `test.samples`.
    pub test_labels: Vec<u8>,
}

pub fn build_one_class_split(
    dataset: &Dataset,
    normal_class: usize,
    val_fraction: f64,
    seed: u64,
) -> Result<OneClassSplit> {
    if !(val_fraction > 0.0 && val_fraction < 1.0) {
        return Err(Error::InvalidArgument(format!(
            "val_fraction {val_fraction} outside (0,1)"
        )));
    }
    let labels = dataset
        .labels
        .as_ref()
        .ok_or_else(|| Error::Dataset("one-class split requires labels".into()))?;
    let k = dataset.num_classes;
    if normal_class >= k {
        return Err(Error::Dataset(format!(
            "class {normal_class} absent (dataset has {k} classes)"
        )));
    }

    let mut rng = ChaCha20Rng::seed_from_u64(seed);
    let mut per_class: Vec<Vec<usize>> = vec![Vec::new(); k];
    for (i, &l) in labels.iter().enumerate() {
        per_class[l].push(i);
    }
    if per_class[normal_class].is_empty() {
        return Err(Error::Dataset(format!("class {normal_class} has no samples")));
    }
    for c in per_class.iter_mut() {
        c.shuffle(&mut rng);
    }

    // balanced test set: the same count from every class, capped so the
    // normal class keeps most of its samples for training
    let min_count = per_class.iter().map(|c| c.len()).min().unwrap();
    let normal_n = per_class[normal_class].len();
    let test_per_class = min_count.min((normal_n / 3).max(1));

    let mut test_idx = Vec::new();
    let mut test_labels = Vec::new();
    for (c, idx) in per_class.iter().enumerate() {
        for &i in &idx[..test_per_class] {
            test_idx.push(i);
            test_labels.push(u8::from(c != normal_class));
        }
    }

    let remaining_normal = &per_class[normal_class][test_per_class..];
    let n_val = ((val_fraction * remaining_normal.len() as f64).round() as usize)
        .min(remaining_normal.len().saturating_sub(1));
    let val_idx: Vec<usize> = remaining_normal[..n_val].to_vec();
    let train_idx: Vec<usize> = remaining_normal[n_val..].to_vec();
    if train_idx.is_empty() {
        return Err(Error::Dataset("no normal samples left for training".into()));
    }

    Ok(OneClassSplit {
        normal_class,
        train: dataset.subset(&train_idx),
        val: dataset.subset(&val_idx),
        test: dataset.subset(&test_idx),
        test_labels,
    })
}

/// Reconstruction error as the anomaly score: per-sample sum of squared
/// differences, the same quantity boosting uses for sample weights.
pub fn anomaly_score(model: &EnsembleModel, x: &Tensor) -> Result<f64> {
    let y = model.reconstruct(x)?;
    sq_error_sum(x, &y)
}

/// Scores with binary labels; higher score means more anomalous.
#[derive(Debug, Clone)]
pub struct ScoredSet {
    pub scores: Vec<f64>,
    pub labels: Vec<u8>,
}

impl ScoredSet {
    pub fn new(scores: Vec<f64>, labels: Vec<u8>) -> Result<Self> {
        if scores.len() != labels.len() {
            return Err(Error::InvalidArgument(format!(
                "{} scores vs {} labels",
                scores.len(),
                labels.len()
            )));
        }
        let s = ScoredSet { scores, labels };
        s.check_both_classes()?;
        Ok(s)
    }

    fn check_both_classes(&self) -> Result<()> {
        let pos = self.labels.iter().filter(|&&l| l == 1).count();
        if pos == 0 {
            return Err(Error::SingleClass(0));
        }
        if pos == self.labels.len() {
            return Err(Error::SingleClass(1));
        }
        Ok(())
    }
}

/// ROC points (FPR, TPR) swept over all distinct score thresholds, from
/// (0,0) to (1,1). Tied scores form a single point.
pub fn roc_curve(s: &ScoredSet) -> Result<Vec<(f64, f64)>> {
    s.check_both_classes()?;
    let n_pos = s.labels.iter().filter(|&&l| l == 1).count() as f64;
    let n_neg = s.labels.len() as f64 - n_pos;

    let mut order: Vec<usize> = (0..s.scores.len()).collect();
    order.sort_by(|&a, &b| s.scores[b].partial_cmp(&s.scores[a]).unwrap());

    let mut points = vec![(0.0, 0.0)];
    let (mut tp, mut fp) = (0usize, 0usize);
    let mut i = 0;
    while i < order.len() {
        let threshold = s.scores[order[i]];
        while i < order.len() && s.scores[order[i]] == threshold {
            if s.labels[order[i]] == 1 {
                tp += 1;
            } else {
                fp += 1;
            }
            i += 1;
        }
        points.push((fp as f64 / n_neg, tp as f64 / n_pos));
    }
    Ok(points)
}

/// Trapezoidal area under the ROC curve. Equals the Mann-Whitney statistic
/// P(score_anomaly > score_normal) + 0.5 * P(tie).
pub fn auc(s: &ScoredSet) -> Result<f64> {
    let curve = roc_curve(s)?;
    let mut area = 0.0;
    for w in curve.windows(2) {
        let (x0, y0) = w[0];
        let (x1, y1) = w[1];
        area += (x1 - x0) * (y0 + y1) / 2.0;
    }
    Ok(area)
}

/// Scores the split's test set with the model and reports its AUC.
pub fn eval_anomaly(model: &EnsembleModel, split: &OneClassSplit) -> Result<EvalReport> {
    let mut scores = Vec::with_capacity(split.test.len());
    for x in &split.test.samples {
        scores.push(anomaly_score(model, x)?);
    }
    let scored = ScoredSet::new(scores, split.test_labels.clone())?;
    let auc_value = auc(&scored)?;
    let mut report = EvalReport::new("eval-anomaly");
    report.metrics.push(MetricRecord {
        name: "auc".into(),
        value: auc_value,
        context: format!("normal_class={}", split.normal_class),
    });
    Ok(report)
}
