//! Tracking metrics: Chamfer distance of the transformed clouds,
//! correspondence ℓ2 error and the matching-accuracy curve.
//!
//! Pair metrics are averaged over source points in index order; sequence
//! aggregates are arithmetic means over consecutive pairs.

use serde::Serialize;

use crate::error::{Error, Result};
use crate::geometry::{chamfer, distance, CorrespondenceMap, Point3, PointCloud};
use crate::infer::TrackingResult;
use crate::synmotion::GroundTruthSequence;

/// `(threshold, fraction of points within it)`, thresholds ascending.
pub type AccuracyCurve = Vec<(f64, f64)>;

#[derive(Debug, Clone, PartialEq, Serialize)]
pub struct MetricReport {
    pub chamfer: f64,
    pub correspondence_l2: f64,
    pub accuracy_curve: AccuracyCurve,
}

#[derive(Debug, Clone, PartialEq, Serialize)]
pub struct TrackingReport {
    /// One report per consecutive pair `(M_i, M_{i+1})`.
    pub pairs: Vec<MetricReport>,
    pub mean: MetricReport,
}

/// 51 thresholds spaced evenly over `[0, 0.25]`.
pub fn default_thresholds() -> Vec<f64> {
    (0..=50).map(|i| 0.25 * i as f64 / 50.0).collect()
}

fn check_thresholds(thresholds: &[f64]) -> Result<()> {
    if thresholds.is_empty() {
        return Err(Error::Config("threshold list is empty".into()));
    }
    if thresholds.iter().any(|t| !t.is_finite() || *t < 0.0) {
        return Err(Error::Config("thresholds must be finite and non-negative".into()));
    }
    if thresholds.windows(2).any(|w| w[0] > w[1]) {
        return Err(Error::Config("thresholds must be ascending".into()));
    }
    Ok(())
}

/// Distance from each predicted target point to where the point truly went.
pub fn point_errors(pred: &CorrespondenceMap, target: &PointCloud, truth: &[Point3]) -> Result<Vec<f64>> {
    pred.validate(target.len()).map_err(|e| Error::Shape(e.to_string()))?;
    if pred.len() != truth.len() {
        return Err(Error::Shape(format!(
            "prediction covers {} source points but the ground truth covers {}",
            pred.len(),
            truth.len()
        )));
    }
    Ok(pred
        .matches
        .iter()
        .zip(truth)
        .map(|(&j, t)| distance(&target.points()[j], t))
        .collect())
}

fn truth_from_map(pred: &CorrespondenceMap, gt: &CorrespondenceMap, target: &PointCloud) -> Result<Vec<Point3>> {
    if (pred.source_frame, pred.target_frame) != (gt.source_frame, gt.target_frame) {
        return Err(Error::Shape(format!(
            "prediction maps frame {} -> {} but ground truth maps {} -> {}",
            pred.source_frame, pred.target_frame, gt.source_frame, gt.target_frame
        )));
    }
    gt.validate(target.len()).map_err(|e| Error::Shape(e.to_string()))?;
    Ok(gt.matches.iter().map(|&j| target.points()[j]).collect())
}

fn mean(values: &[f64]) -> f64 {
    if values.is_empty() {
        return 0.0;
    }
    values.iter().sum::<f64>() / values.len() as f64
}

fn curve(errors: &[f64], thresholds: &[f64]) -> AccuracyCurve {
    let n = errors.len().max(1) as f64;
    thresholds
        .iter()
        .map(|&t| (t, errors.iter().filter(|&&e| e <= t).count() as f64 / n))
        .collect()
}

/// Mean over source points of `‖target[pred_k] − target[gt_k]‖`.
pub fn correspondence_l2(pred: &CorrespondenceMap, gt: &CorrespondenceMap, target: &PointCloud) -> Result<f64> {
    let truth = truth_from_map(pred, gt, target)?;
    Ok(mean(&point_errors(pred, target, &truth)?))
}

/// Fraction of source points with `‖target[pred_k] − target[gt_k]‖ ≤ τ`, per threshold.
pub fn matching_accuracy(
    pred: &CorrespondenceMap,
    gt: &CorrespondenceMap,
    target: &PointCloud,
    thresholds: &[f64],
) -> Result<AccuracyCurve> {
    check_thresholds(thresholds)?;
    let truth = truth_from_map(pred, gt, target)?;
    Ok(curve(&point_errors(pred, target, &truth)?, thresholds))
}

/// Metrics for each consecutive pair given transformed clouds and predicted maps.
///
/// Ground-truth targets come from [`GroundTruthSequence::target_positions`], so
/// sequences with per-frame subsets are scored against the true location of
/// every source point.
pub fn evaluate_pairs(
    transformed: &[PointCloud],
    maps: &[CorrespondenceMap],
    gt: &GroundTruthSequence,
    thresholds: &[f64],
) -> Result<TrackingReport> {
    check_thresholds(thresholds)?;
    let pairs = gt.len().saturating_sub(1);
    if transformed.len() != pairs || maps.len() != pairs {
        return Err(Error::Protocol(format!(
            "{} transformed clouds and {} maps for a {}-frame ground truth",
            transformed.len(),
            maps.len(),
            gt.len()
        )));
    }
    let mut reports = Vec::with_capacity(pairs);
    for i in 0..pairs {
        let source_len = gt.frames[i].len();
        if transformed[i].len() != source_len || maps[i].len() != source_len {
            return Err(Error::Protocol(format!(
                "pair {}: frame has {source_len} points, transformed cloud {}, map {}",
                i + 1,
                transformed[i].len(),
                maps[i].len()
            )));
        }
        let target = &gt.frames[i + 1];
        let errors = point_errors(&maps[i], target, &gt.target_positions(i))
            .map_err(|e| Error::Protocol(format!("pair {}: {e}", i + 1)))?;
        reports.push(MetricReport {
            chamfer: chamfer(&transformed[i], target)?,
            correspondence_l2: mean(&errors),
            accuracy_curve: curve(&errors, thresholds),
        });
    }
    let n = reports.len().max(1) as f64;
    let mean_report = MetricReport {
        chamfer: reports.iter().map(|r| r.chamfer).sum::<f64>() / n,
        correspondence_l2: reports.iter().map(|r| r.correspondence_l2).sum::<f64>() / n,
        accuracy_curve: thresholds
            .iter()
            .enumerate()
            .map(|(t, &tau)| (tau, reports.iter().map(|r| r.accuracy_curve[t].1).sum::<f64>() / n))
            .collect(),
    };
    Ok(TrackingReport {
        pairs: reports,
        mean: mean_report,
    })
}

pub fn evaluate_tracking(
    result: &TrackingResult,
    gt: &GroundTruthSequence,
    thresholds: &[f64],
) -> Result<TrackingReport> {
    evaluate_pairs(&result.transformed, &result.maps, gt, thresholds)
}
