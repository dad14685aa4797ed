//! Annotation frame selection: k-means over downsampled frame appearance
//! (the toolchain default) versus occlusion-prioritized ranking.

use image::RgbImage;
use rand::{Rng, SeedableRng};
use rand_chacha::ChaCha8Rng;
use thiserror::Error;

use crate::types::{iou, BBox};

/// Feature grid side; features are SIDE x SIDE grayscale means (D = 1024).
pub const FEATURE_SIDE: usize = 32;

#[derive(Debug, Error, PartialEq)]
pub enum SelectError {
    #[error("cannot select {requested} frames from {available}")]
    NotEnoughFrames { requested: usize, available: usize },
    #[error("feature dimension mismatch: expected {expected}, frame {frame} has {got}")]
    DimensionMismatch {
        expected: usize,
        frame: usize,
        got: usize,
    },
    #[error("selection count must be >= 1")]
    ZeroRequested,
}

/// Appearance feature of one frame.
#[derive(Debug, Clone, PartialEq)]
pub struct FrameFeature {
    pub frame_index: usize,
    pub feature: Vec<f64>,
}

/// Mean BT.601 luma over a FEATURE_SIDE x FEATURE_SIDE cell grid.
pub fn frame_feature(frame_index: usize, img: &RgbImage) -> FrameFeature {
    let (w, h) = (img.width() as usize, img.height() as usize);
    let mut sums = vec![0.0f64; FEATURE_SIDE * FEATURE_SIDE];
    let mut counts = vec![0u32; FEATURE_SIDE * FEATURE_SIDE];
    for (x, y, p) in img.enumerate_pixels() {
        let luma = 0.299 * p.0[0] as f64 + 0.587 * p.0[1] as f64 + 0.114 * p.0[2] as f64;
        let cx = (x as usize * FEATURE_SIDE / w.max(1)).min(FEATURE_SIDE - 1);
        let cy = (y as usize * FEATURE_SIDE / h.max(1)).min(FEATURE_SIDE - 1);
        sums[cy * FEATURE_SIDE + cx] += luma;
        counts[cy * FEATURE_SIDE + cx] += 1;
    }
    let feature = sums
        .iter()
        .zip(&counts)
        .map(|(s, &c)| if c == 0 { 0.0 } else { s / c as f64 })
        .collect();
    FrameFeature {
        frame_index,
        feature,
    }
}

fn sq_dist(a: &[f64], b: &[f64]) -> f64 {
    a.iter().zip(b).map(|(x, y)| (x - y) * (x - y)).sum()
}

/// Lloyd iterations with k-means++ seeding; at most 100 rounds.
/// Returns final centroids and the within-cluster sum of squares per round.
pub(crate) fn kmeans_run(
    features: &[FrameFeature],
    k: usize,
    seed: u64,
) -> (Vec<Vec<f64>>, Vec<f64>) {
    let mut rng = ChaCha8Rng::seed_from_u64(seed);
    let n = features.len();

    // k-means++ seeding; exact duplicates of chosen centers carry weight 0,
    // and if every remaining point is a duplicate we fall back to the lowest
    // unchosen index so k distinct slots are always produced.
    let mut centers: Vec<Vec<f64>> = Vec::with_capacity(k);
    let mut chosen = vec![false; n];
    let first = rng.gen_range(0..n);
    chosen[first] = true;
    centers.push(features[first].feature.clone());
    while centers.len() < k {
        let weights: Vec<f64> = features
            .iter()
            .map(|f| {
                centers
                    .iter()
                    .map(|c| sq_dist(&f.feature, c))
                    .fold(f64::INFINITY, f64::min)
            })
            .collect();
        let total: f64 = weights.iter().sum();
        let next = if total > 0.0 {
            let mut target = rng.gen::<f64>() * total;
            let mut pick = n - 1;
            for (i, w) in weights.iter().enumerate() {
                if target < *w {
                    pick = i;
                    break;
                }
                target -= w;
            }
            pick
        } else {
            (0..n).find(|&i| !chosen[i]).unwrap_or(0)
        };
        chosen[next] = true;
        centers.push(features[next].feature.clone());
    }

    let mut assignment = vec![usize::MAX; n];
    let mut wcss_trace = Vec::new();
    for _ in 0..100 {
        let mut changed = false;
        let mut wcss = 0.0;
        for (i, f) in features.iter().enumerate() {
            let (best, best_d) = centers
                .iter()
                .enumerate()
                .map(|(c, center)| (c, sq_dist(&f.feature, center)))
                .min_by(|a, b| a.1.total_cmp(&b.1).then(a.0.cmp(&b.0)))
                .unwrap();
            wcss += best_d;
            if assignment[i] != best {
                assignment[i] = best;
                changed = true;
            }
        }
        wcss_trace.push(wcss);
        if !changed {
            break;
        }
        let dim = features[0].feature.len();
        let mut sums = vec![vec![0.0f64; dim]; k];
        let mut counts = vec![0usize; k];
        for (i, f) in features.iter().enumerate() {
            let c = assignment[i];
            counts[c] += 1;
            for (d, v) in f.feature.iter().enumerate() {
                sums[c][d] += v;
            }
        }
        for c in 0..k {
            if counts[c] > 0 {
                for v in sums[c].iter_mut() {
                    *v /= counts[c] as f64;
                }
                centers[c] = sums[c].clone();
            }
        }
    }
    (centers, wcss_trace)
}

/// k-means key-frame selection: the frame nearest each final centroid.
///
/// Each centroid claims the nearest frame not already selected (ties break
/// toward the lower frame index), so the result always holds k distinct
/// indices; k equal to the frame count selects every frame.
pub fn kmeans_select(
    features: &[FrameFeature],
    k: usize,
    seed: u64,
) -> Result<Vec<usize>, SelectError> {
    if k == 0 {
        return Err(SelectError::ZeroRequested);
    }
    if k > features.len() {
        return Err(SelectError::NotEnoughFrames {
            requested: k,
            available: features.len(),
        });
    }
    let dim = features[0].feature.len();
    for f in features {
        if f.feature.len() != dim {
            return Err(SelectError::DimensionMismatch {
                expected: dim,
                frame: f.frame_index,
                got: f.feature.len(),
            });
        }
    }
    let (centers, _) = kmeans_run(features, k, seed);
    let mut taken = vec![false; features.len()];
    let mut selected = Vec::with_capacity(k);
    for center in &centers {
        let (pick, _) = features
            .iter()
            .enumerate()
            .filter(|(i, _)| !taken[*i])
            .map(|(i, f)| (i, sq_dist(&f.feature, center)))
            .min_by(|a, b| {
                a.1.total_cmp(&b.1)
                    .then(features[a.0].frame_index.cmp(&features[b.0].frame_index))
            })
            .expect("k <= n leaves a free frame per centroid");
        taken[pick] = true;
        selected.push(features[pick].frame_index);
    }
    selected.sort_unstable();
    Ok(selected)
}

/// Maximum pairwise IoU among a frame's boxes; 0 with fewer than two boxes.
pub fn occlusion_score(frame_boxes: &[BBox]) -> f64 {
    let mut best = 0.0f64;
    for i in 0..frame_boxes.len() {
        for j in (i + 1)..frame_boxes.len() {
            best = best.max(iou(&frame_boxes[i], &frame_boxes[j]));
        }
    }
    best
}

/// Greedy descending-score selection with a minimum index gap.
///
/// Frames closer than `min_gap` to an already-selected frame are skipped;
/// if the gap constraint exhausts candidates, the remaining slots fill from
/// the best skipped frames. Ties break toward the lower frame index.
pub fn occlusion_prioritized_select(
    scores: &[f64],
    n: usize,
    min_gap: usize,
) -> Result<Vec<usize>, SelectError> {
    if n == 0 {
        return Err(SelectError::ZeroRequested);
    }
    if n > scores.len() {
        return Err(SelectError::NotEnoughFrames {
            requested: n,
            available: scores.len(),
        });
    }
    let mut order: Vec<usize> = (0..scores.len()).collect();
    order.sort_by(|&a, &b| scores[b].total_cmp(&scores[a]).then(a.cmp(&b)));

    let mut selected: Vec<usize> = Vec::with_capacity(n);
    let mut skipped: Vec<usize> = Vec::new();
    for &i in &order {
        if selected.len() == n {
            break;
        }
        let blocked = selected.iter().any(|&s| s.abs_diff(i) < min_gap);
        if blocked {
            skipped.push(i);
        } else {
            selected.push(i);
        }
    }
    for &i in &skipped {
        if selected.len() == n {
            break;
        }
        selected.push(i);
    }
    selected.sort_unstable();
    Ok(selected)
}
