//! Detection metrics: IoU, greedy matching, precision, recall and mAP.

use crate::perception::{BoundingBox, BoxError, ClassId};
use serde::{Deserialize, Serialize};
use std::cmp::Ordering;
use std::collections::BTreeMap;
use std::path::Path;
use thiserror::Error;

/// Recall levels sampled by the interpolated AP.
pub const AP_POINTS: usize = 101;

pub const DEFAULT_IOU_THRESHOLD: f64 = 0.5;

#[derive(Debug, Error)]
pub enum MetricsError {
    #[error("cannot read {path}: {source}")]
    Io {
        path: String,
        source: std::io::Error,
    },
    #[error("{0}")]
    Parse(String),
    #[error("record {index}: {source}")]
    InvalidRecord { index: usize, source: BoxError },
    #[error("iou_threshold must lie in (0, 1], got {0}")]
    Threshold(f64),
}

fn default_confidence() -> f64 {
    1.0
}

/// One box of the detection interchange format.
#[derive(Debug, Clone, Copy, PartialEq, Serialize, Deserialize)]
#[serde(deny_unknown_fields)]
pub struct LabeledBox {
    pub image_id: u64,
    pub class: ClassId,
    /// `[u_min, v_min, u_max, v_max]`
    pub bbox: [f64; 4],
    #[serde(default = "default_confidence")]
    pub confidence: f64,
}

impl LabeledBox {
    pub fn to_box(&self) -> Result<BoundingBox, BoxError> {
        BoundingBox::new(self.bbox, self.class, self.confidence)
    }
}

/// Parses a JSON array of [`LabeledBox`].
pub fn parse_detections(json: &str) -> Result<Vec<LabeledBox>, MetricsError> {
    serde_json::from_str(json).map_err(|e| MetricsError::Parse(e.to_string()))
}

pub fn load_detections(path: &Path) -> Result<Vec<LabeledBox>, MetricsError> {
    let text = std::fs::read_to_string(path).map_err(|source| MetricsError::Io {
        path: path.display().to_string(),
        source,
    })?;
    parse_detections(&text)
}

/// Intersection over union; 0 for disjoint boxes.
pub fn iou(a: &BoundingBox, b: &BoundingBox) -> f64 {
    let w = (a.u_max.min(b.u_max) - a.u_min.max(b.u_min)).max(0.0);
    let h = (a.v_max.min(b.v_max) - a.v_min.max(b.v_min)).max(0.0);
    let inter = w * h;
    let union = a.area() + b.area() - inter;
    if union > 0.0 {
        (inter / union).clamp(0.0, 1.0)
    } else {
        0.0
    }
}

#[derive(Debug, Clone, PartialEq, Serialize, Deserialize)]
pub struct ClassMetrics {
    pub ground_truth: usize,
    pub predictions: usize,
    pub true_positives: usize,
    pub false_positives: usize,
    /// Absent when the class has no predictions.
    pub precision: Option<f64>,
    /// Absent when the class has no ground truth.
    pub recall: Option<f64>,
    /// Absent when the class has no ground truth.
    pub ap: Option<f64>,
}

#[derive(Debug, Clone, PartialEq, Serialize, Deserialize)]
pub struct MetricsReport {
    pub iou_threshold: f64,
    pub interpolation_points: usize,
    pub classes: BTreeMap<ClassId, ClassMetrics>,
    /// Mean AP over classes that have ground truth.
    pub map: Option<f64>,
}

fn lex(a: &[f64; 4], b: &[f64; 4]) -> Ordering {
    a.iter()
        .zip(b)
        .map(|(x, y)| x.total_cmp(y))
        .find(|o| o.is_ne())
        .unwrap_or(Ordering::Equal)
}

/// Ranking order for predictions: confidence descending, then lower image
/// id, then lexicographic box coordinates.
pub fn prediction_order(a: &LabeledBox, b: &LabeledBox) -> Ordering {
    b.confidence
        .total_cmp(&a.confidence)
        .then(a.image_id.cmp(&b.image_id))
        .then_with(|| lex(&a.bbox, &b.bbox))
}

/// Interpolated AP from a ranked true/false-positive sequence.
pub fn interpolated_ap(ranked_tp: &[bool], ground_truth: usize) -> f64 {
    let mut curve = Vec::with_capacity(ranked_tp.len());
    let mut tp = 0usize;
    for (i, hit) in ranked_tp.iter().enumerate() {
        tp += usize::from(*hit);
        curve.push((tp as f64 / ground_truth as f64, tp as f64 / (i + 1) as f64));
    }
    // Running maximum from the tail gives the precision envelope.
    for i in (0..curve.len().saturating_sub(1)).rev() {
        curve[i].1 = curve[i].1.max(curve[i + 1].1);
    }
    let mut sum = 0.0;
    let mut j = 0;
    for k in 0..AP_POINTS {
        let r = k as f64 / (AP_POINTS - 1) as f64;
        while j < curve.len() && curve[j].0 < r {
            j += 1;
        }
        if j < curve.len() {
            sum += curve[j].1;
        }
    }
    sum / AP_POINTS as f64
}

fn validate(records: &[LabeledBox]) -> Result<Vec<BoundingBox>, MetricsError> {
    records
        .iter()
        .enumerate()
        .map(|(index, r)| r.to_box().map_err(|source| MetricsError::InvalidRecord { index, source }))
        .collect()
}

/// Greedy confidence-ordered matching of `pred` against `gt`. Each ranked
/// prediction takes the unmatched same-class, same-image ground-truth box
/// with the highest IoU at or above `iou_threshold`; IoU ties go to the
/// lexicographically smaller box.
pub fn compute_metrics(
    gt: &[LabeledBox],
    pred: &[LabeledBox],
    iou_threshold: f64,
) -> Result<MetricsReport, MetricsError> {
    if !(iou_threshold > 0.0 && iou_threshold <= 1.0) {
        return Err(MetricsError::Threshold(iou_threshold));
    }
    validate(gt)?;
    validate(pred)?;

    let mut pools: BTreeMap<(ClassId, u64), Vec<(BoundingBox, bool)>> = BTreeMap::new();
    for g in gt {
        pools
            .entry((g.class, g.image_id))
            .or_default()
            .push((g.to_box().expect("validated"), false));
    }
    for pool in pools.values_mut() {
        pool.sort_by(|a, b| lex(&a.0.coords(), &b.0.coords()));
    }

    let mut ranked = pred.to_vec();
    ranked.sort_by(prediction_order);

    let mut hits: BTreeMap<ClassId, Vec<bool>> = BTreeMap::new();
    for p in &ranked {
        let pb = p.to_box().expect("validated");
        let mut best: Option<(usize, f64)> = None;
        if let Some(pool) = pools.get(&(p.class, p.image_id)) {
            for (i, (g, taken)) in pool.iter().enumerate() {
                let v = iou(&pb, g);
                if !taken && v >= iou_threshold && best.is_none_or(|(_, bv)| v > bv) {
                    best = Some((i, v));
                }
            }
        }
        if let Some((i, _)) = best {
            pools.get_mut(&(p.class, p.image_id)).expect("pool exists")[i].1 = true;
        }
        hits.entry(p.class).or_default().push(best.is_some());
    }

    let mut gt_counts: BTreeMap<ClassId, usize> = BTreeMap::new();
    for g in gt {
        *gt_counts.entry(g.class).or_default() += 1;
    }
    let mut classes = BTreeMap::new();
    for class in gt_counts.keys().chain(hits.keys()).copied() {
        let n_gt = gt_counts.get(&class).copied().unwrap_or(0);
        let ranked_tp = hits.get(&class).map(Vec::as_slice).unwrap_or(&[]);
        classes.entry(class).or_insert_with(|| class_metrics(ranked_tp, n_gt));
    }
    let aps: Vec<f64> = classes.values().filter_map(|c: &ClassMetrics| c.ap).collect();
    let map = (!aps.is_empty()).then(|| aps.iter().sum::<f64>() / aps.len() as f64);
    Ok(MetricsReport {
        iou_threshold,
        interpolation_points: AP_POINTS,
        classes,
        map,
    })
}

/// Counts and rates for one class from its ranked true/false-positive flags.
pub fn class_metrics(ranked_tp: &[bool], ground_truth: usize) -> ClassMetrics {
    let tp = ranked_tp.iter().filter(|h| **h).count();
    let n = ranked_tp.len();
    ClassMetrics {
        ground_truth,
        predictions: n,
        true_positives: tp,
        false_positives: n - tp,
        precision: (n > 0).then(|| tp as f64 / n as f64),
        recall: (ground_truth > 0).then(|| tp as f64 / ground_truth as f64),
        ap: (ground_truth > 0).then(|| interpolated_ap(ranked_tp, ground_truth)),
    }
}
