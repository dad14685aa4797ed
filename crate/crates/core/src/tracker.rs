//! Tracking-by-detection baseline: constant-velocity Kalman filtering,
//! Hungarian IoU association and a tentative/confirmed/dead track lifecycle.

use thiserror::Error;

use crate::assign::max_cardinality_min_cost;
use crate::types::{iou, BBox, Detection, TrackSet};

#[derive(Debug, Error, PartialEq)]
pub enum TrackError {
    #[error("measurement has non-positive dimensions {w}x{h}")]
    InvalidMeasurement { w: f64, h: f64 },
    #[error("invalid tracker config: {0}")]
    InvalidConfig(String),
}

const DIM: usize = 8; // cx, cy, w, h and their per-frame velocities

// Noise scales relative to box height, as in the SORT lineage.
const STD_POSITION: f64 = 1.0 / 20.0;
const STD_VELOCITY: f64 = 1.0 / 160.0;
const STD_MEASUREMENT: f64 = 1.0 / 20.0;
const MIN_SIZE: f64 = 1e-3;

#[derive(Debug, Clone, Copy, PartialEq, Eq)]
pub enum TrackStatus {
    Tentative,
    Confirmed,
    Dead,
}

/// Constant-velocity box state with full covariance.
#[derive(Debug, Clone, PartialEq)]
pub struct KalmanTrackState {
    /// (cx, cy, w, h, vcx, vcy, vw, vh)
    pub mean: [f64; DIM],
    pub covariance: [[f64; DIM]; DIM],
    pub track_id: u32,
    pub hits: u32,
    pub misses: u32,
    pub status: TrackStatus,
    /// Birth measurement, kept until the second hit bootstraps the velocity.
    first_measurement: Option<[f64; 4]>,
}

fn bbox_to_state(b: &BBox) -> [f64; 4] {
    [b.x + b.w / 2.0, b.y + b.h / 2.0, b.w, b.h]
}

impl KalmanTrackState {
    pub fn from_detection(track_id: u32, bbox: &BBox) -> KalmanTrackState {
        let z = bbox_to_state(bbox);
        let h = z[3];
        let mut covariance = [[0.0; DIM]; DIM];
        for i in 0..4 {
            covariance[i][i] = (2.0 * STD_MEASUREMENT * h).powi(2);
            covariance[i + 4][i + 4] = (10.0 * STD_VELOCITY * h).powi(2);
        }
        KalmanTrackState {
            mean: [z[0], z[1], z[2], z[3], 0.0, 0.0, 0.0, 0.0],
            covariance,
            track_id,
            hits: 1,
            misses: 0,
            status: TrackStatus::Tentative,
            first_measurement: Some(z),
        }
    }

    /// Two-point track initiation: the second consecutive measurement fixes
    /// the state on the observed position and the differenced velocity.
    fn bootstrap_from_pair(&mut self, z1: [f64; 4], z2: [f64; 4]) {
        let h = z2[3];
        let r = (STD_MEASUREMENT * h).powi(2);
        let mut covariance = [[0.0; DIM]; DIM];
        for i in 0..4 {
            covariance[i][i] = r;
            covariance[i + 4][i + 4] = 2.0 * r;
        }
        self.mean = [
            z2[0],
            z2[1],
            z2[2].max(MIN_SIZE),
            z2[3].max(MIN_SIZE),
            z2[0] - z1[0],
            z2[1] - z1[1],
            z2[2] - z1[2],
            z2[3] - z1[3],
        ];
        self.covariance = covariance;
        self.first_measurement = None;
    }

    pub fn bbox(&self) -> BBox {
        let w = self.mean[2].max(MIN_SIZE);
        let h = self.mean[3].max(MIN_SIZE);
        BBox::new(self.mean[0] - w / 2.0, self.mean[1] - h / 2.0, w, h)
    }

    fn symmetrize(&mut self) {
        for i in 0..DIM {
            for j in (i + 1)..DIM {
                let v = 0.5 * (self.covariance[i][j] + self.covariance[j][i]);
                self.covariance[i][j] = v;
                self.covariance[j][i] = v;
            }
        }
    }
}

/// One constant-velocity propagation step; covariance grows by process noise.
pub fn kalman_predict(state: &KalmanTrackState) -> KalmanTrackState {
    debug_assert!(state.status != TrackStatus::Dead);
    let mut s = state.clone();
    for i in 0..4 {
        s.mean[i] += s.mean[i + 4];
    }
    s.mean[2] = s.mean[2].max(MIN_SIZE);
    s.mean[3] = s.mean[3].max(MIN_SIZE);

    // P <- F P F^T + Q with F = [I I; 0 I]: positions gain the velocity
    // cross terms, velocities keep their block.
    let p = s.covariance;
    let mut next = [[0.0; DIM]; DIM];
    for i in 0..DIM {
        for j in 0..DIM {
            let mut v = p[i][j];
            if i < 4 {
                v += p[i + 4][j];
            }
            if j < 4 {
                v += p[i][j + 4];
                if i < 4 {
                    v += p[i + 4][j + 4];
                }
            }
            next[i][j] = v;
        }
    }
    let h = s.mean[3];
    for i in 0..4 {
        next[i][i] += (STD_POSITION * h).powi(2);
        next[i + 4][i + 4] += (STD_VELOCITY * h).powi(2);
    }
    s.covariance = next;
    s.symmetrize();
    s
}

/// Linear measurement update on (cx, cy, w, h).
///
/// The measurement noise is diagonal, so the update runs as four scalar
/// updates, which is algebraically the batch update without a matrix
/// inverse.
#[allow(clippy::needless_range_loop)]
pub fn kalman_update(
    state: &KalmanTrackState,
    measurement: &BBox,
) -> Result<KalmanTrackState, TrackError> {
    if !(measurement.w.is_finite() && measurement.w > 0.0)
        || !(measurement.h.is_finite() && measurement.h > 0.0)
    {
        return Err(TrackError::InvalidMeasurement {
            w: measurement.w,
            h: measurement.h,
        });
    }
    let z = bbox_to_state(measurement);
    let r = (STD_MEASUREMENT * z[3]).powi(2);
    let mut s = state.clone();
    for m in 0..4 {
        let innovation = z[m] - s.mean[m];
        let gain_denom = s.covariance[m][m] + r;
        let gain: Vec<f64> = (0..DIM).map(|i| s.covariance[i][m] / gain_denom).collect();
        for i in 0..DIM {
            s.mean[i] += gain[i] * innovation;
        }
        let row_m = s.covariance[m];
        for i in 0..DIM {
            for j in 0..DIM {
                s.covariance[i][j] -= gain[i] * row_m[j];
            }
        }
    }
    s.mean[2] = s.mean[2].max(MIN_SIZE);
    s.mean[3] = s.mean[3].max(MIN_SIZE);
    s.symmetrize();
    Ok(s)
}

/// Gated Hungarian association on 1 - IoU.
///
/// Returns (matches, unmatched track indices, unmatched detection indices);
/// no match has IoU below `iou_min`.
pub fn associate(
    tracks: &[BBox],
    detections: &[BBox],
    iou_min: f64,
) -> (Vec<(usize, usize)>, Vec<usize>, Vec<usize>) {
    let pairs = max_cardinality_min_cost(tracks.len(), detections.len(), |i, j| {
        let v = iou(&tracks[i], &detections[j]);
        (v >= iou_min).then_some(1.0 - v)
    })
    .expect("iou costs are finite");
    let mut track_matched = vec![false; tracks.len()];
    let mut det_matched = vec![false; detections.len()];
    for &(i, j) in &pairs {
        track_matched[i] = true;
        det_matched[j] = true;
    }
    let unmatched_tracks = (0..tracks.len()).filter(|&i| !track_matched[i]).collect();
    let unmatched_dets = (0..detections.len()).filter(|&j| !det_matched[j]).collect();
    (pairs, unmatched_tracks, unmatched_dets)
}

#[derive(Debug, Clone, Copy, PartialEq)]
pub struct TrackerConfig {
    pub iou_min: f64,
    /// Consecutive matches before a track is confirmed and starts emitting.
    pub confirm_hits: u32,
    /// Consecutive misses before a confirmed track dies.
    pub max_misses: u32,
}

impl Default for TrackerConfig {
    fn default() -> Self {
        TrackerConfig {
            iou_min: 0.3,
            confirm_hits: 3,
            max_misses: 30,
        }
    }
}

impl TrackerConfig {
    pub fn validate(&self) -> Result<(), TrackError> {
        if !(0.0..=1.0).contains(&self.iou_min) {
            return Err(TrackError::InvalidConfig(format!(
                "iou_min must be in [0,1], got {}",
                self.iou_min
            )));
        }
        if self.confirm_hits < 1 {
            return Err(TrackError::InvalidConfig(
                "confirm_hits must be >= 1".into(),
            ));
        }
        Ok(())
    }
}

/// Runs the full tracking-by-detection loop over per-frame detections.
///
/// Track ids are assigned from 1 and never reused. Confirmed tracks emit a
/// detection on every frame they match; tentative and coasting tracks stay
/// silent. A tentative track dies on its first miss.
pub fn track(detections: &TrackSet, cfg: &TrackerConfig) -> Result<TrackSet, TrackError> {
    cfg.validate()?;
    let frames = detections.by_frame();
    let mut out = TrackSet::new(detections.sequence_name.clone(), detections.frame_count);
    let mut tracks: Vec<KalmanTrackState> = Vec::new();
    let mut next_id = 1u32;

    for (frame_index, dets) in frames.iter().enumerate() {
        for t in tracks.iter_mut() {
            *t = kalman_predict(t);
        }
        let predicted: Vec<BBox> = tracks.iter().map(|t| t.bbox()).collect();
        let det_boxes: Vec<BBox> = dets.iter().map(|d| d.bbox).collect();
        let (matches, unmatched_tracks, unmatched_dets) =
            associate(&predicted, &det_boxes, cfg.iou_min);

        for &(ti, dj) in &matches {
            let t = &mut tracks[ti];
            match t.first_measurement.take() {
                Some(z1) => t.bootstrap_from_pair(z1, bbox_to_state(&det_boxes[dj])),
                None => *t = kalman_update(t, &det_boxes[dj])?,
            }
            t.hits += 1;
            t.misses = 0;
            if t.status == TrackStatus::Tentative && t.hits >= cfg.confirm_hits {
                t.status = TrackStatus::Confirmed;
            }
            if t.status == TrackStatus::Confirmed {
                out.detections.push(Detection {
                    frame_index,
                    track_id: t.track_id,
                    bbox: t.bbox(),
                    confidence: dets[dj].confidence,
                });
            }
        }
        for &ti in &unmatched_tracks {
            let t = &mut tracks[ti];
            t.misses += 1;
            t.hits = 0;
            t.first_measurement = None;
            let expired = match t.status {
                TrackStatus::Tentative => true,
                TrackStatus::Confirmed => t.misses >= cfg.max_misses,
                TrackStatus::Dead => true,
            };
            if expired {
                t.status = TrackStatus::Dead;
            }
        }
        for &dj in &unmatched_dets {
            let state = KalmanTrackState::from_detection(next_id, &det_boxes[dj]);
            next_id += 1;
            let mut state = state;
            if cfg.confirm_hits <= 1 {
                state.status = TrackStatus::Confirmed;
                out.detections.push(Detection {
                    frame_index,
                    track_id: state.track_id,
                    bbox: state.bbox(),
                    confidence: dets[dj].confidence,
                });
            }
            tracks.push(state);
        }
        tracks.retain(|t| t.status != TrackStatus::Dead);
    }
    Ok(out)
}
