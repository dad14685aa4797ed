//! Keypoint-to-bounding-box conversion: tight Max_Min extent, the padded
//! variant compensating for unannotated arms, and the displacement filter
//! that drops keypoints caught jumping between players.

use std::collections::BTreeMap;

use thiserror::Error;

use crate::types::{keypoint_distance, BBox, Detection, KeypointName, Pose, PoseFrame, TrackSet};

#[derive(Debug, Error, PartialEq)]
pub enum ConvertError {
    #[error("pose at frame {frame} carries no player id; conversion needs identity-labeled input")]
    AnonymousPose { frame: usize },
    #[error("filter requires matching player ids, got {prev:?} and {cur:?}")]
    PlayerIdMismatch { prev: Option<u32>, cur: Option<u32> },
    #[error("invalid padding config: {0}")]
    InvalidPadding(String),
    #[error("invalid switch filter config: {0}")]
    InvalidFilter(String),
}

/// Offsets applied around the keypoint extent, each as a fraction of the
/// visible-keypoint body height.
#[derive(Debug, Clone, Copy, PartialEq)]
pub struct PaddingConfig {
    pub pad_x_frac: f64,
    pub pad_top_frac: f64,
    pub pad_bottom_frac: f64,
}

impl Default for PaddingConfig {
    fn default() -> Self {
        PaddingConfig {
            pad_x_frac: 0.15,
            pad_top_frac: 0.05,
            pad_bottom_frac: 0.05,
        }
    }
}

impl PaddingConfig {
    pub fn validate(&self) -> Result<(), ConvertError> {
        for (name, v) in [
            ("pad_x_frac", self.pad_x_frac),
            ("pad_top_frac", self.pad_top_frac),
            ("pad_bottom_frac", self.pad_bottom_frac),
        ] {
            if !v.is_finite() || v < 0.0 {
                return Err(ConvertError::InvalidPadding(format!(
                    "{name} must be >= 0, got {v}"
                )));
            }
        }
        Ok(())
    }
}

/// Absolute displacement threshold above which a keypoint is treated as an
/// ID switch and excluded.
#[derive(Debug, Clone, Copy, PartialEq)]
pub struct SwitchFilterConfig {
    pub distance_threshold_px: f64,
}

impl SwitchFilterConfig {
    pub fn new(distance_threshold_px: f64) -> Result<Self, ConvertError> {
        if !distance_threshold_px.is_finite() || distance_threshold_px <= 0.0 {
            return Err(ConvertError::InvalidFilter(format!(
                "distance_threshold_px must be > 0, got {distance_threshold_px}"
            )));
        }
        Ok(SwitchFilterConfig {
            distance_threshold_px,
        })
    }
}

/// How the filter threshold is chosen for a sequence.
#[derive(Debug, Clone, Copy, PartialEq)]
pub enum SwitchThreshold {
    /// factor x median visible-keypoint body height, measured in a first pass.
    MedianHeight { factor: f64 },
    /// Fixed pixel threshold.
    Absolute { px: f64 },
}

impl Default for SwitchThreshold {
    fn default() -> Self {
        SwitchThreshold::MedianHeight { factor: 0.5 }
    }
}

/// Conversion method selector.
#[derive(Debug, Clone, Copy, PartialEq, Eq)]
pub enum ConversionMethod {
    MaxMin,
    Padding,
}

impl ConversionMethod {
    pub fn parse(s: &str) -> Option<ConversionMethod> {
        match s {
            "maxmin" => Some(ConversionMethod::MaxMin),
            "padding" => Some(ConversionMethod::Padding),
            _ => None,
        }
    }

    pub fn as_str(self) -> &'static str {
        match self {
            ConversionMethod::MaxMin => "maxmin",
            ConversionMethod::Padding => "padding",
        }
    }
}

/// Marks not-visible every keypoint whose displacement from the previous
/// pose of the same player exceeds the threshold. Keypoints not visible in
/// `prev` pass through unfiltered.
pub fn filter_switched_keypoints(
    prev: &Pose,
    cur: &Pose,
    cfg: &SwitchFilterConfig,
) -> Result<Pose, ConvertError> {
    if prev.player_id != cur.player_id {
        return Err(ConvertError::PlayerIdMismatch {
            prev: prev.player_id.map(|p| p.0),
            cur: cur.player_id.map(|p| p.0),
        });
    }
    let mut out = cur.clone();
    for name in KeypointName::ALL {
        if let Some(d) = keypoint_distance(prev, cur, name) {
            if d > cfg.distance_threshold_px {
                out.keypoint_mut(name).visible = false;
            }
        }
    }
    Ok(out)
}

/// Tight box over visible keypoints. None with fewer than two visible
/// keypoints or a zero-width/height extent.
pub fn maxmin_bbox(pose: &Pose) -> Option<BBox> {
    if pose.visible_count() < 2 {
        return None;
    }
    let (x0, y0, x1, y1) = pose.visible_extent()?;
    let (w, h) = (x1 - x0, y1 - y0);
    if w <= 0.0 || h <= 0.0 {
        return None;
    }
    Some(BBox::new(x0, y0, w, h))
}

/// Max_Min extent expanded by stature-relative offsets.
pub fn padded_bbox(pose: &Pose, cfg: &PaddingConfig) -> Option<BBox> {
    let tight = maxmin_bbox(pose)?;
    let height = tight.h;
    Some(BBox::new(
        tight.x - cfg.pad_x_frac * height,
        tight.y - cfg.pad_top_frac * height,
        tight.w + 2.0 * cfg.pad_x_frac * height,
        height * (1.0 + cfg.pad_top_frac + cfg.pad_bottom_frac),
    ))
}

/// Resolves the switch threshold for a sequence; the median-height form
/// needs a first pass over all poses. Returns None (filter disabled) when
/// no pose has a measurable body height.
pub fn resolve_threshold(
    frames: &[PoseFrame],
    threshold: SwitchThreshold,
) -> Result<Option<SwitchFilterConfig>, ConvertError> {
    match threshold {
        SwitchThreshold::Absolute { px } => SwitchFilterConfig::new(px).map(Some),
        SwitchThreshold::MedianHeight { factor } => {
            if !factor.is_finite() || factor <= 0.0 {
                return Err(ConvertError::InvalidFilter(format!(
                    "median-height factor must be > 0, got {factor}"
                )));
            }
            let mut heights: Vec<f64> = frames
                .iter()
                .flat_map(|f| f.poses.iter())
                .filter_map(|p| p.body_height())
                .filter(|h| *h > 0.0)
                .collect();
            if heights.is_empty() {
                return Ok(None);
            }
            heights.sort_by(|a, b| a.total_cmp(b));
            let median = heights[heights.len() / 2];
            SwitchFilterConfig::new(factor * median).map(Some)
        }
    }
}

/// Converts identity-labeled pose frames to a TrackSet. Per player and
/// frame: filter against that player's most recent prior pose, then apply
/// the chosen conversion; no-box frames emit no detection. Detection
/// confidence is the mean confidence of the keypoints the box used.
pub fn convert_sequence(
    frames: &[PoseFrame],
    method: ConversionMethod,
    pad_cfg: &PaddingConfig,
    threshold: SwitchThreshold,
    sequence_name: &str,
) -> Result<TrackSet, ConvertError> {
    pad_cfg.validate()?;
    let filter_cfg = resolve_threshold(frames, threshold)?;
    let frame_count = frames.iter().map(|f| f.frame_index + 1).max().unwrap_or(0);
    let mut out = TrackSet::new(sequence_name, frame_count);
    // Most recent raw pose per player, as read from the input.
    let mut last_pose: BTreeMap<u32, Pose> = BTreeMap::new();

    let mut ordered: Vec<&PoseFrame> = frames.iter().collect();
    ordered.sort_by_key(|f| f.frame_index);

    for frame in ordered {
        let mut poses: Vec<&Pose> = frame.poses.iter().collect();
        poses.sort_by_key(|p| p.player_id.map(|id| id.0));
        for pose in poses {
            let id = pose.player_id.ok_or(ConvertError::AnonymousPose {
                frame: frame.frame_index,
            })?;
            let filtered = match (&filter_cfg, last_pose.get(&id.0)) {
                (Some(cfg), Some(prev)) => filter_switched_keypoints(prev, pose, cfg)?,
                _ => pose.clone(),
            };
            last_pose.insert(id.0, pose.clone());
            let bbox = match method {
                ConversionMethod::MaxMin => maxmin_bbox(&filtered),
                ConversionMethod::Padding => padded_bbox(&filtered, pad_cfg),
            };
            if let Some(bbox) = bbox {
                let visible: Vec<f64> = filtered
                    .iter()
                    .filter(|(_, k)| k.visible)
                    .map(|(_, k)| k.confidence)
                    .collect();
                let confidence = visible.iter().sum::<f64>() / visible.len() as f64;
                out.detections.push(Detection {
                    frame_index: frame.frame_index,
                    track_id: id.0,
                    bbox,
                    confidence,
                });
            }
        }
    }
    Ok(out)
}

#[cfg(test)]
mod tests {
    use super::*;
    use crate::types::{Keypoint, PlayerId, KEYPOINT_COUNT};
    use proptest::prelude::*;

    fn spec_pose(id: Option<u32>) -> Pose {
        // head(100,50), elbows (90,80) (110,80), center (100,90),
        // ankles (95,130) (105,130)
        let coords = [
            (100.0, 50.0),
            (90.0, 80.0),
            (110.0, 80.0),
            (100.0, 90.0),
            (95.0, 130.0),
            (105.0, 130.0),
        ];
        let mut kps = [Keypoint::new(0.0, 0.0, 1.0, true); KEYPOINT_COUNT];
        for (i, (x, y)) in coords.iter().enumerate() {
            kps[i] = Keypoint::new(*x, *y, 1.0, true);
        }
        Pose::new(kps, id.map(PlayerId))
    }

    #[test]
    fn maxmin_spec_example() {
        let b = maxmin_bbox(&spec_pose(None)).unwrap();
        assert_eq!((b.x, b.y, b.w, b.h), (90.0, 50.0, 20.0, 80.0));
    }

    #[test]
    fn maxmin_single_visible_is_none() {
        let mut p = spec_pose(None);
        for name in KeypointName::ALL.iter().skip(1) {
            p.keypoint_mut(*name).visible = false;
        }
        assert_eq!(maxmin_bbox(&p), None);
    }

    #[test]
    fn maxmin_zero_width_is_none() {
        let mut p = spec_pose(None);
        for name in KeypointName::ALL.iter().skip(2) {
            p.keypoint_mut(*name).visible = false;
        }
        // Keep head and left elbow, stacked on the same x.
        p.keypoint_mut(KeypointName::Head).x = 90.0;
        assert_eq!(maxmin_bbox(&p), None);
    }

    #[test]
    fn padded_spec_example() {
        let b = padded_bbox(&spec_pose(None), &PaddingConfig::default()).unwrap();
        assert!((b.x - 78.0).abs() < 1e-9);
        assert!((b.y - 46.0).abs() < 1e-9);
        assert!((b.w - 44.0).abs() < 1e-9);
        assert!((b.h - 88.0).abs() < 1e-9);
    }

    #[test]
    fn zero_pads_reduce_to_maxmin() {
        let cfg = PaddingConfig {
            pad_x_frac: 0.0,
            pad_top_frac: 0.0,
            pad_bottom_frac: 0.0,
        };
        let p = spec_pose(None);
        assert_eq!(padded_bbox(&p, &cfg), maxmin_bbox(&p));
    }

    #[test]
    fn filter_excludes_long_jump() {
        let prev = spec_pose(Some(1));
        let mut cur = spec_pose(Some(1));
        cur.keypoint_mut(KeypointName::Head).x = 400.0;
        cur.keypoint_mut(KeypointName::Head).y = 60.0;
        let cfg = SwitchFilterConfig::new(60.0).unwrap();
        let filtered = filter_switched_keypoints(&prev, &cur, &cfg).unwrap();
        assert!(!filtered.keypoint(KeypointName::Head).visible);
        assert_eq!(filtered.visible_count(), 5);
    }

    #[test]
    fn filter_keeps_identical_pose() {
        let p = spec_pose(Some(1));
        let cfg = SwitchFilterConfig::new(1.0).unwrap();
        let filtered = filter_switched_keypoints(&p, &p, &cfg).unwrap();
        assert_eq!(filtered.visible_count(), 6);
    }

    #[test]
    fn filter_can_empty_a_pose() {
        let prev = spec_pose(Some(1));
        let mut cur = spec_pose(Some(1));
        for name in KeypointName::ALL {
            cur.keypoint_mut(name).x += 500.0;
        }
        let cfg = SwitchFilterConfig::new(60.0).unwrap();
        let filtered = filter_switched_keypoints(&prev, &cur, &cfg).unwrap();
        assert_eq!(filtered.visible_count(), 0);
        assert_eq!(maxmin_bbox(&filtered), None);
    }

    #[test]
    fn filter_rejects_mismatched_ids() {
        let a = spec_pose(Some(1));
        let b = spec_pose(Some(2));
        let cfg = SwitchFilterConfig::new(60.0).unwrap();
        assert!(matches!(
            filter_switched_keypoints(&a, &b, &cfg),
            Err(ConvertError::PlayerIdMismatch { .. })
        ));
    }

    #[test]
    fn static_sequence_gives_identical_detections() {
        let frames: Vec<PoseFrame> = (0..5)
            .map(|f| PoseFrame {
                frame_index: f,
                poses: vec![spec_pose(Some(1))],
            })
            .collect();
        let ts = convert_sequence(
            &frames,
            ConversionMethod::Padding,
            &PaddingConfig::default(),
            SwitchThreshold::default(),
            "s",
        )
        .unwrap();
        assert_eq!(ts.detections.len(), 5);
        assert!(ts.detections.windows(2).all(|w| w[0].bbox == w[1].bbox));
        assert_eq!(ts.frame_count, 5);
    }

    #[test]
    fn injected_jump_is_excluded_for_that_frame() {
        let mut frames: Vec<PoseFrame> = (0..3)
            .map(|f| PoseFrame {
                frame_index: f,
                poses: vec![spec_pose(Some(1))],
            })
            .collect();
        // Frame 1's head jumps across the court and returns at frame 2.
        frames[1].poses[0].keypoint_mut(KeypointName::Head).x = 900.0;
        let ts = convert_sequence(
            &frames,
            ConversionMethod::MaxMin,
            &PaddingConfig::default(),
            SwitchThreshold::Absolute { px: 100.0 },
            "s",
        )
        .unwrap();
        // Frame 1's box is computed from the remaining five keypoints.
        let b1 = ts.detections.iter().find(|d| d.frame_index == 1).unwrap();
        assert_eq!((b1.bbox.y, b1.bbox.h), (80.0, 50.0));
        // Frame 2 compares against frame 1's raw pose, so the returning head
        // is excluded once more before the pose settles.
        let b2 = ts.detections.iter().find(|d| d.frame_index == 2).unwrap();
        assert_eq!((b2.bbox.y, b2.bbox.h), (80.0, 50.0));
    }

    #[test]
    fn empty_input_gives_empty_trackset() {
        let ts = convert_sequence(
            &[],
            ConversionMethod::Padding,
            &PaddingConfig::default(),
            SwitchThreshold::default(),
            "s",
        )
        .unwrap();
        assert!(ts.detections.is_empty());
        assert_eq!(ts.frame_count, 0);
    }

    #[test]
    fn anonymous_input_is_error() {
        let frames = vec![PoseFrame {
            frame_index: 0,
            poses: vec![spec_pose(None)],
        }];
        assert_eq!(
            convert_sequence(
                &frames,
                ConversionMethod::Padding,
                &PaddingConfig::default(),
                SwitchThreshold::default(),
                "s",
            ),
            Err(ConvertError::AnonymousPose { frame: 0 })
        );
    }

    fn arb_pose() -> impl Strategy<Value = Pose> {
        proptest::collection::vec((0.0..640.0f64, 0.0..360.0f64, proptest::bool::ANY), 6).prop_map(
            |kps| {
                let mut arr = [Keypoint::new(0.0, 0.0, 1.0, true); KEYPOINT_COUNT];
                for (i, (x, y, vis)) in kps.into_iter().enumerate() {
                    arr[i] = Keypoint::new(x, y, 1.0, vis);
                }
                Pose::new(arr, Some(PlayerId(1)))
            },
        )
    }

    proptest! {
        #[test]
        fn maxmin_contained_in_padded(pose in arb_pose(),
                                      px in 0.0..0.5f64, pt in 0.0..0.5f64, pb in 0.0..0.5f64) {
            let cfg = PaddingConfig { pad_x_frac: px, pad_top_frac: pt, pad_bottom_frac: pb };
            if let (Some(tight), Some(padded)) = (maxmin_bbox(&pose), padded_bbox(&pose, &cfg)) {
                prop_assert!(padded.x <= tight.x + 1e-9);
                prop_assert!(padded.y <= tight.y + 1e-9);
                prop_assert!(padded.right() >= tight.right() - 1e-9);
                prop_assert!(padded.bottom() >= tight.bottom() - 1e-9);
            }
        }

        #[test]
        fn filter_never_increases_visible_count(a in arb_pose(), b in arb_pose(), t in 1.0..500.0f64) {
            let cfg = SwitchFilterConfig::new(t).unwrap();
            let filtered = filter_switched_keypoints(&a, &b, &cfg).unwrap();
            prop_assert!(filtered.visible_count() <= b.visible_count());
        }

        #[test]
        fn conversion_is_translation_equivariant(pose in arb_pose(), tx in -50.0..50.0f64, ty in -50.0..50.0f64) {
            let mut moved = pose.clone();
            for name in KeypointName::ALL {
                moved.keypoint_mut(name).x += tx;
                moved.keypoint_mut(name).y += ty;
            }
            for (orig, shifted) in [
                (maxmin_bbox(&pose), maxmin_bbox(&moved)),
                (padded_bbox(&pose, &PaddingConfig::default()), padded_bbox(&moved, &PaddingConfig::default())),
            ] {
                match (orig, shifted) {
                    (Some(a), Some(b)) => {
                        prop_assert!((b.x - a.x - tx).abs() < 1e-9);
                        prop_assert!((b.y - a.y - ty).abs() < 1e-9);
                        prop_assert!((b.w - a.w).abs() < 1e-9);
                        prop_assert!((b.h - a.h).abs() < 1e-9);
                    }
                    (None, None) => {}
                    other => prop_assert!(false, "degeneracy differs: {other:?}"),
                }
            }
        }

        #[test]
        fn no_duplicate_frame_id_pairs(n in 1usize..6) {
            let frames: Vec<PoseFrame> = (0..n)
                .map(|f| PoseFrame {
                    frame_index: f,
                    poses: vec![
                        { let mut p = spec_pose(Some(1)); p.keypoint_mut(KeypointName::Head).x += f as f64; p },
                        { let mut p = spec_pose(Some(2)); for nm in KeypointName::ALL { p.keypoint_mut(nm).x += 300.0; } p },
                    ],
                })
                .collect();
            let ts = convert_sequence(
                &frames,
                ConversionMethod::Padding,
                &PaddingConfig::default(),
                SwitchThreshold::default(),
                "s",
            ).unwrap();
            prop_assert!(ts.validate().is_ok());
        }
    }
}
