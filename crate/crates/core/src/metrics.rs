//! HOTA evaluation: per-alpha detection/association accuracy, localization,
//! CLEAR-style FN/FP/ID-switch counts, and per-sequence aggregation.

use std::collections::BTreeMap;

use thiserror::Error;

use crate::assign::max_cardinality_min_cost;
use crate::types::{iou, Detection, TrackSet};

/// The 19 IoU thresholds 0.05, 0.10, ..., 0.95.
pub fn alpha_grid() -> Vec<f64> {
    (1..=19).map(|i| i as f64 * 0.05).collect()
}

/// Index into the alpha grid closest to the requested threshold.
pub fn alpha_index_for(alpha: f64) -> usize {
    let grid = alpha_grid();
    let mut best = 0;
    for (i, a) in grid.iter().enumerate() {
        if (a - alpha).abs() < (grid[best] - alpha).abs() {
            best = i;
        }
    }
    best
}

#[derive(Debug, Error, PartialEq)]
pub enum EvalError {
    #[error("frame count mismatch: gt has {gt}, pred has {pred}")]
    FrameCountMismatch { gt: usize, pred: usize },
    #[error("invalid track set ({side}): {reason}")]
    InvalidTrackSet { side: &'static str, reason: String },
    #[error("cannot aggregate an empty report list")]
    EmptyReports,
}

/// One frame's matching at a single IoU threshold.
#[derive(Debug, Clone, PartialEq)]
pub struct FrameMatching {
    pub alpha: f64,
    /// Matched (gt_id, pred_id, iou) triples, each id in at most one pair.
    pub pairs: Vec<(u32, u32, f64)>,
    /// Unmatched ground-truth ids (false negatives).
    pub fn_ids: Vec<u32>,
    /// Unmatched predicted ids (false positives).
    pub fp_ids: Vec<u32>,
}

/// Optimal one-to-one matching between one frame's gt and pred boxes,
/// restricted to pairs with iou >= alpha, lexicographically maximizing
/// (match count, total IoU).
pub fn match_frame(gt: &[&Detection], pred: &[&Detection], alpha: f64) -> FrameMatching {
    let ious: Vec<f64> = gt
        .iter()
        .flat_map(|g| pred.iter().map(move |p| iou(&g.bbox, &p.bbox)))
        .collect();
    let cols = pred.len();
    // Minimizing (1 - iou) over allowed pairs maximizes total IoU.
    let pairs_idx = max_cardinality_min_cost(gt.len(), cols, |i, j| {
        let v = ious[i * cols + j];
        (v >= alpha).then_some(1.0 - v)
    })
    .expect("finite costs");

    let mut gt_matched = vec![false; gt.len()];
    let mut pred_matched = vec![false; pred.len()];
    let mut pairs = Vec::with_capacity(pairs_idx.len());
    for (i, j) in pairs_idx {
        gt_matched[i] = true;
        pred_matched[j] = true;
        pairs.push((gt[i].track_id, pred[j].track_id, ious[i * cols + j]));
    }
    let fn_ids = gt
        .iter()
        .zip(&gt_matched)
        .filter(|(_, &m)| !m)
        .map(|(g, _)| g.track_id)
        .collect();
    let fp_ids = pred
        .iter()
        .zip(&pred_matched)
        .filter(|(_, &m)| !m)
        .map(|(p, _)| p.track_id)
        .collect();
    FrameMatching {
        alpha,
        pairs,
        fn_ids,
        fp_ids,
    }
}

/// Per-alpha component breakdown. Percentages are 0..=100.
#[derive(Debug, Clone, PartialEq)]
pub struct AlphaBreakdown {
    pub alpha: f64,
    pub tp: u64,
    pub fn_count: u64,
    pub fp_count: u64,
    pub deta: f64,
    pub assa: f64,
    pub hota: f64,
    pub loca: f64,
}

/// Evaluation result for one sequence. Score fields are percentages;
/// FN/FP/IDs are counts at the counting threshold (0.5 by default).
#[derive(Debug, Clone, PartialEq)]
pub struct EvalReport {
    pub sequence_name: String,
    pub hota: f64,
    pub deta: f64,
    pub assa: f64,
    pub loca: f64,
    pub fn_count: u64,
    pub fp_count: u64,
    pub id_switches: u64,
    pub per_alpha: Vec<AlphaBreakdown>,
}

/// Evaluation knobs. `alpha_for_counts` picks the threshold whose matching
/// FN/FP/IDs are reported.
#[derive(Debug, Clone, PartialEq)]
pub struct EvalConfig {
    pub alpha_for_counts: f64,
}

impl Default for EvalConfig {
    fn default() -> Self {
        EvalConfig {
            alpha_for_counts: 0.5,
        }
    }
}

pub fn compute_hota(gt: &TrackSet, pred: &TrackSet) -> Result<EvalReport, EvalError> {
    compute_hota_with(gt, pred, &EvalConfig::default())
}

pub fn compute_hota_with(
    gt: &TrackSet,
    pred: &TrackSet,
    cfg: &EvalConfig,
) -> Result<EvalReport, EvalError> {
    if gt.frame_count != pred.frame_count {
        return Err(EvalError::FrameCountMismatch {
            gt: gt.frame_count,
            pred: pred.frame_count,
        });
    }
    gt.validate()
        .map_err(|reason| EvalError::InvalidTrackSet { side: "gt", reason })?;
    pred.validate()
        .map_err(|reason| EvalError::InvalidTrackSet {
            side: "pred",
            reason,
        })?;

    let gt_frames = gt.by_frame();
    let pred_frames = pred.by_frame();
    // Each detection is a TP or FN (gt side) / TP or FP (pred side) at every
    // alpha, so per-id totals are alpha-independent.
    let mut gt_occ: BTreeMap<u32, u64> = BTreeMap::new();
    for d in &gt.detections {
        *gt_occ.entry(d.track_id).or_insert(0) += 1;
    }
    let mut pred_occ: BTreeMap<u32, u64> = BTreeMap::new();
    for d in &pred.detections {
        *pred_occ.entry(d.track_id).or_insert(0) += 1;
    }

    let grid = alpha_grid();
    let counts_idx = alpha_index_for(cfg.alpha_for_counts);
    let mut per_alpha = Vec::with_capacity(grid.len());
    let mut counts = (0u64, 0u64, 0u64); // fn, fp, id switches at the counting alpha

    for (ai, &alpha) in grid.iter().enumerate() {
        let mut frame_matchings = Vec::with_capacity(gt.frame_count);
        for f in 0..gt.frame_count {
            frame_matchings.push(match_frame(&gt_frames[f], &pred_frames[f], alpha));
        }

        let mut tp = 0u64;
        let mut fn_count = 0u64;
        let mut fp_count = 0u64;
        let mut iou_sum = 0.0f64;
        let mut pair_count: BTreeMap<(u32, u32), u64> = BTreeMap::new();
        for m in &frame_matchings {
            tp += m.pairs.len() as u64;
            fn_count += m.fn_ids.len() as u64;
            fp_count += m.fp_ids.len() as u64;
            for &(g, p, s) in &m.pairs {
                iou_sum += s;
                *pair_count.entry((g, p)).or_insert(0) += 1;
            }
        }

        let deta = if tp + fn_count + fp_count == 0 {
            0.0
        } else {
            tp as f64 / (tp + fn_count + fp_count) as f64
        };
        // Association score of a TP (g, p): TPA / (TPA + FNA + FPA) where the
        // denominator expands to |gt dets of g| + |pred dets of p| - TPA.
        let assa = if tp == 0 {
            0.0
        } else {
            let mut sum = 0.0;
            for (&(g, p), &tpa) in &pair_count {
                let denom = gt_occ[&g] + pred_occ[&p] - tpa;
                sum += tpa as f64 * (tpa as f64 / denom as f64);
            }
            sum / tp as f64
        };
        let hota = (deta * assa).sqrt();
        let loca = if tp == 0 { 1.0 } else { iou_sum / tp as f64 };

        if ai == counts_idx {
            counts = (fn_count, fp_count, count_id_switches(&frame_matchings));
        }
        per_alpha.push(AlphaBreakdown {
            alpha,
            tp,
            fn_count,
            fp_count,
            deta: deta * 100.0,
            assa: assa * 100.0,
            hota: hota * 100.0,
            loca: loca * 100.0,
        });
    }

    let n = per_alpha.len() as f64;
    let mean = |f: &dyn Fn(&AlphaBreakdown) -> f64| per_alpha.iter().map(f).sum::<f64>() / n;
    Ok(EvalReport {
        sequence_name: gt.sequence_name.clone(),
        hota: mean(&|a| a.hota),
        deta: mean(&|a| a.deta),
        assa: mean(&|a| a.assa),
        loca: mean(&|a| a.loca),
        fn_count: counts.0,
        fp_count: counts.1,
        id_switches: counts.2,
        per_alpha,
    })
}

/// A switch is counted each time a gt track's matched pred id differs from
/// the pred id it was last matched to, gaps included.
fn count_id_switches(frame_matchings: &[FrameMatching]) -> u64 {
    let mut last_pred: BTreeMap<u32, u32> = BTreeMap::new();
    let mut switches = 0u64;
    for m in frame_matchings {
        for &(g, p, _) in &m.pairs {
            if let Some(&prev) = last_pred.get(&g) {
                if prev != p {
                    switches += 1;
                }
            }
            last_pred.insert(g, p);
        }
    }
    switches
}

/// How the +/- column of aggregate tables is computed.
#[derive(Debug, Clone, Copy, PartialEq, Eq)]
pub enum StdMode {
    /// Sample standard deviation (divisor n-1, 0 when n = 1).
    Sample,
    /// Population standard deviation (divisor n).
    Population,
}

/// Mean and spread of one metric across sequences.
#[derive(Debug, Clone, Copy, PartialEq)]
pub struct MeanStd {
    pub mean: f64,
    pub std: f64,
}

fn mean_std(values: &[f64], mode: StdMode) -> MeanStd {
    let n = values.len() as f64;
    let mean = values.iter().sum::<f64>() / n;
    let ss: f64 = values.iter().map(|v| (v - mean).powi(2)).sum();
    let std = match mode {
        StdMode::Sample => {
            if values.len() < 2 {
                0.0
            } else {
                (ss / (n - 1.0)).sqrt()
            }
        }
        StdMode::Population => (ss / n).sqrt(),
    };
    MeanStd { mean, std }
}

/// Per-metric mean +/- std across sequences.
#[derive(Debug, Clone, PartialEq)]
pub struct AggregateReport {
    pub sequences: usize,
    pub hota: MeanStd,
    pub deta: MeanStd,
    pub assa: MeanStd,
    pub loca: MeanStd,
    pub fn_count: MeanStd,
    pub fp_count: MeanStd,
    pub id_switches: MeanStd,
}

pub fn aggregate(reports: &[EvalReport], mode: StdMode) -> Result<AggregateReport, EvalError> {
    if reports.is_empty() {
        return Err(EvalError::EmptyReports);
    }
    let collect = |f: &dyn Fn(&EvalReport) -> f64| -> Vec<f64> { reports.iter().map(f).collect() };
    Ok(AggregateReport {
        sequences: reports.len(),
        hota: mean_std(&collect(&|r| r.hota), mode),
        deta: mean_std(&collect(&|r| r.deta), mode),
        assa: mean_std(&collect(&|r| r.assa), mode),
        loca: mean_std(&collect(&|r| r.loca), mode),
        fn_count: mean_std(&collect(&|r| r.fn_count as f64), mode),
        fp_count: mean_std(&collect(&|r| r.fp_count as f64), mode),
        id_switches: mean_std(&collect(&|r| r.id_switches as f64), mode),
    })
}

/// CSV with one row per sequence plus a summary row.
pub fn report_csv(reports: &[EvalReport], agg: &AggregateReport) -> String {
    let mut out = String::from("sequence,hota,deta,assa,loca,fn,fp,ids\n");
    for r in reports {
        out.push_str(&format!(
            "{},{:.4},{:.4},{:.4},{:.4},{},{},{}\n",
            r.sequence_name, r.hota, r.deta, r.assa, r.loca, r.fn_count, r.fp_count, r.id_switches
        ));
    }
    out.push_str(&format!(
        "mean,{:.4},{:.4},{:.4},{:.4},{:.4},{:.4},{:.4}\n",
        agg.hota.mean,
        agg.deta.mean,
        agg.assa.mean,
        agg.loca.mean,
        agg.fn_count.mean,
        agg.fp_count.mean,
        agg.id_switches.mean
    ));
    out.push_str(&format!(
        "std,{:.4},{:.4},{:.4},{:.4},{:.4},{:.4},{:.4}\n",
        agg.hota.std,
        agg.deta.std,
        agg.assa.std,
        agg.loca.std,
        agg.fn_count.std,
        agg.fp_count.std,
        agg.id_switches.std
    ));
    out
}

impl MeanStd {
    pub fn formatted(&self) -> String {
        format!("{:.1} \u{b1} {:.1}", self.mean, self.std)
    }
}

/// Aligned per-sequence listing with a mean +/- std footer.
pub fn per_sequence_table(reports: &[EvalReport], agg: &AggregateReport) -> String {
    let name_w = reports
        .iter()
        .map(|r| r.sequence_name.len())
        .chain(std::iter::once("mean \u{b1} std".len()))
        .max()
        .unwrap_or(8);
    let mut out = format!(
        "{:<name_w$}  {:>7}  {:>7}  {:>7}  {:>7}  {:>6}  {:>6}  {:>5}\n",
        "sequence", "HOTA", "LocA", "DetA", "AssA", "FN", "FP", "IDs"
    );
    for r in reports {
        out.push_str(&format!(
            "{:<name_w$}  {:>7.1}  {:>7.1}  {:>7.1}  {:>7.1}  {:>6}  {:>6}  {:>5}\n",
            r.sequence_name, r.hota, r.loca, r.deta, r.assa, r.fn_count, r.fp_count, r.id_switches
        ));
    }
    out.push_str(&format!(
        "{:<name_w$}  {:>7.1}  {:>7.1}  {:>7.1}  {:>7.1}  {:>6.1}  {:>6.1}  {:>5.1}\n",
        "mean \u{b1} std",
        agg.hota.mean,
        agg.loca.mean,
        agg.deta.mean,
        agg.assa.mean,
        agg.fn_count.mean,
        agg.fp_count.mean,
        agg.id_switches.mean
    ));
    out.push_str(&format!(
        "{:<name_w$}  {:>7.1}  {:>7.1}  {:>7.1}  {:>7.1}  {:>6.1}  {:>6.1}  {:>5.1}\n",
        "",
        agg.hota.std,
        agg.loca.std,
        agg.deta.std,
        agg.assa.std,
        agg.fn_count.std,
        agg.fp_count.std,
        agg.id_switches.std
    ));
    out
}

/// Aligned plain-text table: one row per labeled aggregate, score columns
/// first, count columns below, mirroring the usual MOT comparison layout.
pub fn comparison_table(rows: &[(String, AggregateReport)]) -> String {
    let name_w = rows
        .iter()
        .map(|(n, _)| n.len())
        .chain(std::iter::once("Method".len()))
        .max()
        .unwrap_or(6);
    let cell_w = 14usize;
    let mut out = String::new();
    let header = |out: &mut String, cols: &[&str]| {
        out.push_str(&format!("{:<name_w$}", "Method"));
        for c in cols {
            out.push_str(&format!("  {c:>cell_w$}"));
        }
        out.push('\n');
    };
    header(&mut out, &["HOTA", "LocA", "DetA", "AssA"]);
    for (name, agg) in rows {
        out.push_str(&format!("{name:<name_w$}"));
        for m in [&agg.hota, &agg.loca, &agg.deta, &agg.assa] {
            out.push_str(&format!("  {:>cell_w$}", m.formatted()));
        }
        out.push('\n');
    }
    out.push('\n');
    header(&mut out, &["FN", "FP", "IDs"]);
    for (name, agg) in rows {
        out.push_str(&format!("{name:<name_w$}"));
        for m in [&agg.fn_count, &agg.fp_count, &agg.id_switches] {
            out.push_str(&format!("  {:>cell_w$}", m.formatted()));
        }
        out.push('\n');
    }
    out
}
