//! Per-class segmentation metrics: confusion counts, accuracy, precision,
//! recall, F1, IoU and ROC AUC.
//!
//! A metric whose denominator is zero is `None` ("undefined"), never 0 or
//! NaN.

use serde::{Deserialize, Serialize};

use crate::error::{Error, Result};
use crate::fusion::{assign_ownership, owned_segment_votes, FusionConfig};
use crate::par;
use crate::types::{ensure_dims, ClassId, ClassPlanes, LabelMask, SegmentSet};

/// The class metrics are reported for unless asked otherwise (occlusion).
pub const DEFAULT_CLASS: ClassId = 1;

/// One-vs-rest pixel counts for a single class.
#[derive(Debug, Clone, Copy, PartialEq, Eq, Default, Serialize, Deserialize)]
pub struct ConfusionMatrix {
    pub tp: u64,
    pub fp: u64,
    #[serde(rename = "fn")]
    pub fn_: u64,
    pub tn: u64,
}

fn ratio(num: u64, den: u64) -> Option<f64> {
    (den > 0).then(|| num as f64 / den as f64)
}

impl ConfusionMatrix {
    pub fn new(tp: u64, fp: u64, fn_: u64, tn: u64) -> Self {
        Self { tp, fp, fn_, tn }
    }

    pub fn total(&self) -> u64 {
        self.tp + self.fp + self.fn_ + self.tn
    }

    pub fn accuracy(&self) -> Option<f64> {
        ratio(self.tp + self.tn, self.total())
    }

    pub fn precision(&self) -> Option<f64> {
        ratio(self.tp, self.tp + self.fp)
    }

    pub fn recall(&self) -> Option<f64> {
        ratio(self.tp, self.tp + self.fn_)
    }

    /// Harmonic mean of precision and recall; undefined when either is. When
    /// precision or recall is zero the harmonic mean's limit, 0, is returned.
    pub fn f1(&self) -> Option<f64> {
        self.precision()?;
        self.recall()?;
        ratio(2 * self.tp, 2 * self.tp + self.fp + self.fn_)
    }

    pub fn iou(&self) -> Option<f64> {
        ratio(self.tp, self.tp + self.fp + self.fn_)
    }
}

/// Counts `cls` as positive, every other label as negative.
pub fn confusion(pred: &LabelMask, gt: &LabelMask, cls: ClassId) -> Result<ConfusionMatrix> {
    ensure_dims(gt.dims(), pred.dims())?;
    let (p, g) = (pred.labels(), gt.labels());
    let w = gt.width().max(1);
    let rows = gt.height();
    let count = |want_pred: bool, want_gt: bool| {
        par::sum_range(rows, |r| {
            p[r * w..(r + 1) * w]
                .iter()
                .zip(&g[r * w..(r + 1) * w])
                .filter(|(&a, &b)| (a == cls) == want_pred && (b == cls) == want_gt)
                .count() as u64
        })
    };
    Ok(ConfusionMatrix {
        tp: count(true, true),
        fp: count(true, false),
        fn_: count(false, true),
        tn: count(false, false),
    })
}

/// Row-major `f64` scores for one class, used for AUC.
#[derive(Debug, Clone, PartialEq)]
pub struct ScoreMap {
    height: usize,
    width: usize,
    values: Vec<f64>,
}

impl ScoreMap {
    pub fn new(height: usize, width: usize, values: Vec<f64>) -> Result<Self> {
        if values.len() != height * width {
            return Err(Error::BadShape(format!(
                "{height}x{width} score map needs {} values, got {}",
                height * width,
                values.len()
            )));
        }
        Ok(Self {
            height,
            width,
            values,
        })
    }

    /// The `class` plane of a confidence tensor.
    pub fn from_plane<P: ClassPlanes + ?Sized>(sem: &P, class: ClassId) -> Result<Self> {
        let class = class as usize;
        if class >= sem.n_classes() {
            return Err(Error::LabelOutOfRange {
                label: class as u32,
                n_classes: sem.n_classes(),
            });
        }
        Ok(Self {
            height: sem.height(),
            width: sem.width(),
            values: sem.plane(class).iter().map(|&v| v as f64).collect(),
        })
    }

    pub fn dims(&self) -> (usize, usize) {
        (self.height, self.width)
    }

    pub fn values(&self) -> &[f64] {
        &self.values
    }

    pub fn map(&self, f: impl Fn(f64) -> f64) -> Self {
        Self {
            values: self.values.iter().map(|&v| f(v)).collect(),
            ..self.clone()
        }
    }
}

/// Rank-based ROC AUC: the probability that a random positive pixel scores
/// above a random negative pixel, ties counting one half.
///
/// Computed exactly by sorting and integer counting. NaN scores sort below
/// every number.
pub fn auc(scores: &ScoreMap, gt: &LabelMask, cls: ClassId) -> Result<f64> {
    ensure_dims(gt.dims(), scores.dims())?;
    let mut pairs: Vec<(f64, bool)> = scores
        .values
        .iter()
        .zip(gt.labels())
        .map(|(&s, &l)| (s, l == cls))
        .collect();
    let n_pos = pairs.iter().filter(|(_, pos)| *pos).count() as u128;
    let n_neg = pairs.len() as u128 - n_pos;
    if n_pos == 0 {
        return Err(Error::SingleClassGroundTruth {
            class: cls,
            missing: "positive",
        });
    }
    if n_neg == 0 {
        return Err(Error::SingleClassGroundTruth {
            class: cls,
            missing: "negative",
        });
    }
    pairs.sort_by(|a, b| a.0.total_cmp(&b.0));

    // twice the Mann-Whitney U statistic: 2 per (pos > neg) pair, 1 per tie
    let mut doubled: u128 = 0;
    let mut neg_below: u128 = 0;
    let mut i = 0;
    while i < pairs.len() {
        let mut j = i;
        let (mut pos, mut neg) = (0u128, 0u128);
        while j < pairs.len() && pairs[j].0.total_cmp(&pairs[i].0).is_eq() {
            if pairs[j].1 {
                pos += 1;
            } else {
                neg += 1;
            }
            j += 1;
        }
        doubled += pos * (2 * neg_below + neg);
        neg_below += neg;
        i = j;
    }
    Ok(doubled as f64 / (2 * n_pos * n_neg) as f64)
}

/// Scores for fused output: an owned pixel gets its segment's mean
/// confidence for `cls`; an uncovered pixel keeps the map's own confidence.
pub fn fused_score_map<P: ClassPlanes + ?Sized>(
    sem: &P,
    segs: &SegmentSet,
    cfg: &FusionConfig,
    cls: ClassId,
) -> Result<ScoreMap> {
    ensure_dims(sem.dims(), segs.dims())?;
    let mut scores = ScoreMap::from_plane(sem, cls)?;
    let ownership = assign_ownership(segs, cfg.overlap);
    let means: Vec<Option<f64>> = owned_segment_votes(sem, segs, &ownership)
        .into_iter()
        .zip(segs.segments())
        .map(|(v, s)| v.map(|v| v.get(cls as usize) / s.area() as f64))
        .collect();
    for (score, owner) in scores.values.iter_mut().zip(ownership.owners()) {
        if let Some(i) = owner {
            *score = means[*i as usize].expect("owning segment has a vote");
        }
    }
    Ok(scores)
}

/// Metric bundle for one class. Serializes as a flat JSON object with
/// undefined metrics as `null`.
#[derive(Debug, Clone, Copy, PartialEq, Default, Serialize, Deserialize)]
pub struct MetricReport {
    pub accuracy: Option<f64>,
    pub precision: Option<f64>,
    pub recall: Option<f64>,
    pub f1: Option<f64>,
    pub iou: Option<f64>,
    pub auc: Option<f64>,
}

impl MetricReport {
    pub fn from_confusion(cm: &ConfusionMatrix) -> Self {
        Self {
            accuracy: cm.accuracy(),
            precision: cm.precision(),
            recall: cm.recall(),
            f1: cm.f1(),
            iou: cm.iou(),
            auc: None,
        }
    }

    pub fn with_auc(mut self, auc: f64) -> Self {
        self.auc = Some(auc);
        self
    }
}

/// Confusion-based metrics for `cls`, plus AUC when `scores` is given.
pub fn evaluate(
    pred: &LabelMask,
    gt: &LabelMask,
    scores: Option<&ScoreMap>,
    cls: ClassId,
) -> Result<MetricReport> {
    let report = MetricReport::from_confusion(&confusion(pred, gt, cls)?);
    match scores {
        Some(s) => Ok(report.with_auc(auc(s, gt, cls)?)),
        None => Ok(report),
    }
}
