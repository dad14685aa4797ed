//! Geometry primitives, the six-keypoint skeleton model and shared identifiers.

use std::fmt;

/// Number of keypoints in the skeleton model.
pub const KEYPOINT_COUNT: usize = 6;

/// Named body landmarks, in canonical order.
///
/// The order here is the canonical sort order used by the pose file format.
#[derive(Debug, Clone, Copy, PartialEq, Eq, Hash, PartialOrd, Ord)]
pub enum KeypointName {
    Head,
    ElbowLeft,
    ElbowRight,
    Center,
    AnkleLeft,
    AnkleRight,
}

impl KeypointName {
    pub const ALL: [KeypointName; KEYPOINT_COUNT] = [
        KeypointName::Head,
        KeypointName::ElbowLeft,
        KeypointName::ElbowRight,
        KeypointName::Center,
        KeypointName::AnkleLeft,
        KeypointName::AnkleRight,
    ];

    pub fn as_str(self) -> &'static str {
        match self {
            KeypointName::Head => "head",
            KeypointName::ElbowLeft => "elbow_left",
            KeypointName::ElbowRight => "elbow_right",
            KeypointName::Center => "center",
            KeypointName::AnkleLeft => "ankle_left",
            KeypointName::AnkleRight => "ankle_right",
        }
    }

    pub fn parse(s: &str) -> Option<KeypointName> {
        KeypointName::ALL.iter().copied().find(|k| k.as_str() == s)
    }

    /// Position in the canonical order.
    pub fn index(self) -> usize {
        self as usize
    }
}

impl fmt::Display for KeypointName {
    fn fmt(&self, f: &mut fmt::Formatter<'_>) -> fmt::Result {
        f.write_str(self.as_str())
    }
}

/// Identity label for a player, 1-based in file formats.
#[derive(Debug, Clone, Copy, PartialEq, Eq, Hash, PartialOrd, Ord)]
pub struct PlayerId(pub u32);

impl fmt::Display for PlayerId {
    fn fmt(&self, f: &mut fmt::Formatter<'_>) -> fmt::Result {
        write!(f, "{}", self.0)
    }
}

/// A single 2D landmark estimate. Coordinates are continuous (sub-pixel).
///
/// Not-visible keypoints keep their last estimated coordinates; downstream
/// distance filtering and bbox extents ignore them.
#[derive(Debug, Clone, Copy, PartialEq)]
pub struct Keypoint {
    pub x: f64,
    pub y: f64,
    /// Unitless score in [0,1].
    pub confidence: f64,
    pub visible: bool,
}

impl Keypoint {
    pub fn new(x: f64, y: f64, confidence: f64, visible: bool) -> Keypoint {
        debug_assert!((0.0..=1.0).contains(&confidence));
        Keypoint {
            x,
            y,
            confidence,
            visible,
        }
    }
}

/// A six-keypoint skeleton, anonymous or identity-labeled.
///
/// The fixed-size array guarantees exactly one entry per keypoint name.
#[derive(Debug, Clone, PartialEq)]
pub struct Pose {
    keypoints: [Keypoint; KEYPOINT_COUNT],
    pub player_id: Option<PlayerId>,
}

impl Pose {
    pub fn new(keypoints: [Keypoint; KEYPOINT_COUNT], player_id: Option<PlayerId>) -> Pose {
        Pose {
            keypoints,
            player_id,
        }
    }

    pub fn keypoint(&self, name: KeypointName) -> &Keypoint {
        &self.keypoints[name.index()]
    }

    pub fn keypoint_mut(&mut self, name: KeypointName) -> &mut Keypoint {
        &mut self.keypoints[name.index()]
    }

    /// Iterate keypoints in canonical order.
    pub fn iter(&self) -> impl Iterator<Item = (KeypointName, &Keypoint)> {
        KeypointName::ALL
            .iter()
            .map(move |&n| (n, self.keypoint(n)))
    }

    pub fn visible_count(&self) -> usize {
        self.keypoints.iter().filter(|k| k.visible).count()
    }

    /// Extent (x0, y0, x1, y1) over visible keypoints, if any are visible.
    pub fn visible_extent(&self) -> Option<(f64, f64, f64, f64)> {
        let mut ext: Option<(f64, f64, f64, f64)> = None;
        for k in self.keypoints.iter().filter(|k| k.visible) {
            ext = Some(match ext {
                None => (k.x, k.y, k.x, k.y),
                Some((x0, y0, x1, y1)) => (x0.min(k.x), y0.min(k.y), x1.max(k.x), y1.max(k.y)),
            });
        }
        ext
    }

    /// Visible-keypoint body height: max(y) - min(y). None without visible keypoints.
    pub fn body_height(&self) -> Option<f64> {
        self.visible_extent().map(|(_, y0, _, y1)| y1 - y0)
    }
}

/// All poses observed in one frame.
#[derive(Debug, Clone, PartialEq)]
pub struct PoseFrame {
    pub frame_index: usize,
    pub poses: Vec<Pose>,
}

/// Axis-aligned box, top-left origin plus width/height, in pixels.
#[derive(Debug, Clone, Copy, PartialEq)]
pub struct BBox {
    pub x: f64,
    pub y: f64,
    pub w: f64,
    pub h: f64,
}

impl BBox {
    pub fn new(x: f64, y: f64, w: f64, h: f64) -> BBox {
        debug_assert!(w > 0.0 && h > 0.0, "degenerate box {w}x{h}");
        BBox { x, y, w, h }
    }

    pub fn area(&self) -> f64 {
        self.w * self.h
    }

    pub fn right(&self) -> f64 {
        self.x + self.w
    }

    pub fn bottom(&self) -> f64 {
        self.y + self.h
    }
}

/// Intersection-over-union of two boxes; 0 when disjoint, exactly 1 for
/// identical boxes.
pub fn iou(a: &BBox, b: &BBox) -> f64 {
    if a == b {
        return 1.0;
    }
    let ix = (a.right().min(b.right()) - a.x.max(b.x)).max(0.0);
    let iy = (a.bottom().min(b.bottom()) - a.y.max(b.y)).max(0.0);
    let inter = ix * iy;
    if inter <= 0.0 {
        return 0.0;
    }
    inter / (a.area() + b.area() - inter)
}

/// Euclidean distance between the same named keypoint of two poses.
///
/// Returns None when either keypoint is not visible; the caller decides
/// the policy for absent distances.
pub fn keypoint_distance(a: &Pose, b: &Pose, name: KeypointName) -> Option<f64> {
    let ka = a.keypoint(name);
    let kb = b.keypoint(name);
    if !ka.visible || !kb.visible {
        return None;
    }
    Some(((ka.x - kb.x).powi(2) + (ka.y - kb.y).powi(2)).sqrt())
}

/// One identity-labeled box in one frame.
#[derive(Debug, Clone, Copy, PartialEq)]
pub struct Detection {
    pub frame_index: usize,
    pub track_id: u32,
    pub bbox: BBox,
    pub confidence: f64,
}

/// A named sequence of identity-labeled detections.
#[derive(Debug, Clone, PartialEq)]
pub struct TrackSet {
    pub sequence_name: String,
    pub frame_count: usize,
    pub detections: Vec<Detection>,
}

impl TrackSet {
    pub fn new(sequence_name: impl Into<String>, frame_count: usize) -> TrackSet {
        TrackSet {
            sequence_name: sequence_name.into(),
            frame_count,
            detections: Vec::new(),
        }
    }

    /// Group detections by frame index; every frame slot exists even if empty.
    pub fn by_frame(&self) -> Vec<Vec<&Detection>> {
        let mut frames: Vec<Vec<&Detection>> = vec![Vec::new(); self.frame_count];
        for d in &self.detections {
            frames[d.frame_index].push(d);
        }
        frames
    }

    /// Checks the (frame, id) uniqueness and frame range invariants.
    pub fn validate(&self) -> Result<(), String> {
        let mut seen = std::collections::BTreeSet::new();
        for d in &self.detections {
            if d.frame_index >= self.frame_count {
                return Err(format!(
                    "detection at frame {} outside frame_count {}",
                    d.frame_index, self.frame_count
                ));
            }
            if !seen.insert((d.frame_index, d.track_id)) {
                return Err(format!(
                    "duplicate detection for frame {} id {}",
                    d.frame_index, d.track_id
                ));
            }
        }
        Ok(())
    }
}
