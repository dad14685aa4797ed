//! Step 1 of the pipeline: temporal identity assignment for anonymous pose
//! frames, swap corrections, virtual-marker selection and overlay rendering.

use std::collections::{BTreeMap, BTreeSet};

use image::RgbImage;
use thiserror::Error;

use crate::assign::max_cardinality_min_cost;
use crate::types::{keypoint_distance, KeypointName, PlayerId, Pose, PoseFrame};

/// Maximum roster size; the court holds six players.
pub const MAX_PLAYERS: usize = 6;

pub type Color = [u8; 3];

#[derive(Debug, Error, PartialEq)]
pub enum VmError {
    #[error("frame {frame} has {count} poses, the roster holds at most {MAX_PLAYERS}")]
    TooManyPoses { frame: usize, count: usize },
    #[error("frame {frame} has a pose with no geometric continuity to the previous frame")]
    UnmatchablePose { frame: usize },
    #[error("input poses already carry ids at frame {frame}; expected anonymous input")]
    AlreadyLabeled { frame: usize },
    #[error("correction entry {index} swaps ({a}, {b}) but id {missing} never appears in frames {start}..={end}")]
    UnknownCorrectionId {
        index: usize,
        a: u32,
        b: u32,
        missing: u32,
        start: usize,
        end: usize,
    },
    #[error("correction entry {index} is malformed: {reason}")]
    BadCorrectionEntry { index: usize, reason: String },
    #[error("invalid marker config: {0}")]
    InvalidConfig(String),
    #[error("pose at frame {frame} has no player id; markers need labeled poses")]
    AnonymousPose { frame: usize },
}

/// Which keypoints become markers for a given marker count.
#[derive(Debug, Clone, Copy, PartialEq, Eq)]
pub enum VmQuantity {
    One,
    Three,
    Six,
}

impl VmQuantity {
    pub fn from_count(n: u32) -> Result<VmQuantity, VmError> {
        match n {
            1 => Ok(VmQuantity::One),
            3 => Ok(VmQuantity::Three),
            6 => Ok(VmQuantity::Six),
            other => Err(VmError::InvalidConfig(format!(
                "vm quantity must be 1, 3 or 6, got {other}"
            ))),
        }
    }

    pub fn count(self) -> u32 {
        match self {
            VmQuantity::One => 1,
            VmQuantity::Three => 3,
            VmQuantity::Six => 6,
        }
    }
}

/// Marker keypoint sets: head only, head plus both feet, or all six.
pub fn marker_keypoints(quantity: VmQuantity) -> &'static [KeypointName] {
    match quantity {
        VmQuantity::One => &[KeypointName::Head],
        VmQuantity::Three => &[
            KeypointName::Head,
            KeypointName::AnkleLeft,
            KeypointName::AnkleRight,
        ],
        VmQuantity::Six => &KeypointName::ALL,
    }
}

/// Marker rendering configuration.
#[derive(Debug, Clone, PartialEq)]
pub struct VmConfig {
    /// Square side in pixels.
    pub size_px: u32,
    pub quantity: VmQuantity,
    pub palette: BTreeMap<PlayerId, Color>,
}

/// Red, green, blue, yellow, magenta, cyan for ids 1..=6.
pub fn default_palette() -> BTreeMap<PlayerId, Color> {
    [
        (PlayerId(1), [255, 0, 0]),
        (PlayerId(2), [0, 255, 0]),
        (PlayerId(3), [0, 0, 255]),
        (PlayerId(4), [255, 255, 0]),
        (PlayerId(5), [255, 0, 255]),
        (PlayerId(6), [0, 255, 255]),
    ]
    .into_iter()
    .collect()
}

impl Default for VmConfig {
    fn default() -> Self {
        VmConfig {
            size_px: 1,
            quantity: VmQuantity::Six,
            palette: default_palette(),
        }
    }
}

impl VmConfig {
    pub fn validate(&self) -> Result<(), VmError> {
        if self.size_px < 1 {
            return Err(VmError::InvalidConfig("size_px must be >= 1".into()));
        }
        let mut seen = BTreeSet::new();
        for color in self.palette.values() {
            if !seen.insert(*color) {
                return Err(VmError::InvalidConfig(format!(
                    "palette colors must be pairwise distinct, {color:?} repeats"
                )));
            }
        }
        Ok(())
    }
}

/// One frame's markers, painted in list order.
#[derive(Debug, Clone, PartialEq)]
pub struct MarkerSet {
    pub frame_index: usize,
    pub markers: Vec<Marker>,
}

#[derive(Debug, Clone, Copy, PartialEq)]
pub struct Marker {
    pub player_id: PlayerId,
    pub keypoint: KeypointName,
    pub x: f64,
    pub y: f64,
    pub color: Color,
}

/// Builds the marker list for one labeled frame: the configured keypoint
/// subset of every pose, visible keypoints only, in (player, keypoint) order.
pub fn make_markers(frame: &PoseFrame, cfg: &VmConfig) -> Result<MarkerSet, VmError> {
    cfg.validate()?;
    let mut poses: Vec<&Pose> = frame.poses.iter().collect();
    poses.sort_by_key(|p| p.player_id.map(|id| id.0));
    let mut markers = Vec::new();
    for pose in poses {
        let id = pose.player_id.ok_or(VmError::AnonymousPose {
            frame: frame.frame_index,
        })?;
        let color = *cfg.palette.get(&id).ok_or_else(|| {
            VmError::InvalidConfig(format!("palette has no color for player {id}"))
        })?;
        for &name in marker_keypoints(cfg.quantity) {
            let k = pose.keypoint(name);
            if !k.visible {
                continue;
            }
            markers.push(Marker {
                player_id: id,
                keypoint: name,
                x: k.x,
                y: k.y,
                color,
            });
        }
    }
    let mut seen = BTreeSet::new();
    for m in &markers {
        debug_assert!(seen.insert((m.player_id, m.keypoint)));
    }
    Ok(MarkerSet {
        frame_index: frame.frame_index,
        markers,
    })
}

/// Pixel rows/cols covered by a square of side `size` centered on `c`,
/// biased toward the top-left for even sizes.
fn square_range(c: i64, size: u32) -> std::ops::Range<i64> {
    let half = (size as i64) / 2;
    (c - half)..(c - half + size as i64)
}

/// Paints each marker as a filled axis-aligned square of side `size_px`
/// centered at the rounded marker position, clipped to the image. Markers
/// paint in list order, so later markers overwrite earlier ones.
pub fn render_vm_overlay(image: &mut RgbImage, markers: &MarkerSet, size_px: u32) {
    let (w, h) = (image.width() as i64, image.height() as i64);
    for m in &markers.markers {
        let cx = m.x.round() as i64;
        let cy = m.y.round() as i64;
        for py in square_range(cy, size_px) {
            if py < 0 || py >= h {
                continue;
            }
            for px in square_range(cx, size_px) {
                if px < 0 || px >= w {
                    continue;
                }
                image.put_pixel(px as u32, py as u32, image::Rgb(m.color));
            }
        }
    }
}

/// Ordered swap directives fixing residual identity switches.
#[derive(Debug, Clone, Default, PartialEq)]
pub struct CorrectionLog {
    pub entries: Vec<SwapDirective>,
}

/// Within frames start..=end, every pose labeled `id_a` becomes `id_b` and
/// vice versa.
#[derive(Debug, Clone, Copy, PartialEq)]
pub struct SwapDirective {
    pub frame_start: usize,
    pub frame_end: usize,
    pub id_a: PlayerId,
    pub id_b: PlayerId,
}

/// Applies the log's entries in order. Both ids of every directive must
/// appear somewhere in the directive's frame range.
pub fn apply_corrections(
    frames: &[PoseFrame],
    log: &CorrectionLog,
) -> Result<Vec<PoseFrame>, VmError> {
    let mut out: Vec<PoseFrame> = frames.to_vec();
    for (index, entry) in log.entries.iter().enumerate() {
        if entry.frame_start > entry.frame_end {
            return Err(VmError::BadCorrectionEntry {
                index,
                reason: format!(
                    "frame_start {} > frame_end {}",
                    entry.frame_start, entry.frame_end
                ),
            });
        }
        if entry.id_a == entry.id_b {
            return Err(VmError::BadCorrectionEntry {
                index,
                reason: format!("swap ids must differ, both are {}", entry.id_a),
            });
        }
        let mut seen_a = false;
        let mut seen_b = false;
        for frame in out
            .iter()
            .filter(|f| f.frame_index >= entry.frame_start && f.frame_index <= entry.frame_end)
        {
            for pose in &frame.poses {
                seen_a |= pose.player_id == Some(entry.id_a);
                seen_b |= pose.player_id == Some(entry.id_b);
            }
        }
        for (id, seen) in [(entry.id_a, seen_a), (entry.id_b, seen_b)] {
            if !seen {
                return Err(VmError::UnknownCorrectionId {
                    index,
                    a: entry.id_a.0,
                    b: entry.id_b.0,
                    missing: id.0,
                    start: entry.frame_start,
                    end: entry.frame_end,
                });
            }
        }
        for frame in out
            .iter_mut()
            .filter(|f| f.frame_index >= entry.frame_start && f.frame_index <= entry.frame_end)
        {
            for pose in &mut frame.poses {
                if pose.player_id == Some(entry.id_a) {
                    pose.player_id = Some(entry.id_b);
                } else if pose.player_id == Some(entry.id_b) {
                    pose.player_id = Some(entry.id_a);
                }
            }
        }
    }
    Ok(out)
}

/// Per-frame assignment bookkeeping, for spotting suspect frames.
#[derive(Debug, Clone, PartialEq)]
pub struct FrameAssignStats {
    pub frame_index: usize,
    pub matched: usize,
    pub mean_cost: f64,
    pub max_cost: f64,
    pub new_ids: Vec<PlayerId>,
}

/// Identity-labeled frames plus diagnostics.
#[derive(Debug, Clone, PartialEq)]
pub struct IdAssignment {
    pub frames: Vec<PoseFrame>,
    pub stats: Vec<FrameAssignStats>,
}

/// Mean Euclidean distance over keypoints visible in both poses; None when
/// no keypoint is shared.
fn pose_distance(a: &Pose, b: &Pose) -> Option<f64> {
    let mut sum = 0.0;
    let mut n = 0usize;
    for name in KeypointName::ALL {
        if let Some(d) = keypoint_distance(a, b, name) {
            sum += d;
            n += 1;
        }
    }
    (n > 0).then(|| sum / n as f64)
}

/// Deterministic geometric ordering so results never depend on input order.
fn canonical_key(p: &Pose) -> Vec<(f64, f64)> {
    let head = p.keypoint(KeypointName::Head);
    let mut key = vec![(head.x, head.y)];
    key.extend(KeypointName::ALL.iter().skip(1).map(|&n| {
        let k = p.keypoint(n);
        (k.x, k.y)
    }));
    key
}

fn sort_canonically(poses: &mut [Pose]) {
    poses.sort_by(|a, b| {
        canonical_key(a)
            .into_iter()
            .zip(canonical_key(b))
            .find_map(|((ax, ay), (bx, by))| {
                let c = ax.total_cmp(&bx).then(ay.total_cmp(&by));
                (c != std::cmp::Ordering::Equal).then_some(c)
            })
            .unwrap_or(std::cmp::Ordering::Equal)
    });
}

/// Gives anonymous pose frames stable identities.
///
/// Each frame's poses are matched to the previous frame's labeled poses by
/// minimum-cost assignment on mean visible-keypoint distance. Poses left
/// over when every previous pose is consumed take the lowest free id in
/// left-to-right head order; the first (or any post-gap) frame therefore
/// gets ids 1..n by head x-coordinate. A pose that stays unmatched while
/// previous poses remain free has no finite-cost partner and is an error:
/// the roster is fixed, identities never appear from nothing mid-sequence.
pub fn assign_consistent_ids(frames: &[PoseFrame]) -> Result<IdAssignment, VmError> {
    let mut out = Vec::with_capacity(frames.len());
    let mut stats = Vec::with_capacity(frames.len());
    let mut prev: Vec<Pose> = Vec::new();

    let mut ordered: Vec<&PoseFrame> = frames.iter().collect();
    ordered.sort_by_key(|f| f.frame_index);

    for frame in ordered {
        if frame.poses.len() > MAX_PLAYERS {
            return Err(VmError::TooManyPoses {
                frame: frame.frame_index,
                count: frame.poses.len(),
            });
        }
        if frame.poses.iter().any(|p| p.player_id.is_some()) {
            return Err(VmError::AlreadyLabeled {
                frame: frame.frame_index,
            });
        }
        let mut cur: Vec<Pose> = frame.poses.clone();
        sort_canonically(&mut cur);

        let pairs = max_cardinality_min_cost(cur.len(), prev.len(), |i, j| {
            pose_distance(&cur[i], &prev[j])
        })
        .expect("pose distances are finite");

        let mut matched_prev = vec![false; prev.len()];
        let mut costs = Vec::with_capacity(pairs.len());
        for &(i, j) in &pairs {
            cur[i].player_id = prev[j].player_id;
            matched_prev[j] = true;
            costs.push(pose_distance(&cur[i], &prev[j]).unwrap());
        }
        let unmatched: Vec<usize> = (0..cur.len())
            .filter(|i| cur[*i].player_id.is_none())
            .collect();
        if !unmatched.is_empty() && matched_prev.iter().any(|m| !m) {
            return Err(VmError::UnmatchablePose {
                frame: frame.frame_index,
            });
        }

        // Excess poses: lowest free ids, assigned left to right by head x.
        let mut new_ids = Vec::new();
        if !unmatched.is_empty() {
            let taken: BTreeSet<u32> = cur
                .iter()
                .filter_map(|p| p.player_id.map(|id| id.0))
                .collect();
            let mut free: Vec<u32> = (1..=MAX_PLAYERS as u32)
                .filter(|id| !taken.contains(id))
                .collect();
            let mut by_head: Vec<usize> = unmatched.clone();
            by_head.sort_by(|&a, &b| {
                let ha = cur[a].keypoint(KeypointName::Head);
                let hb = cur[b].keypoint(KeypointName::Head);
                ha.x.total_cmp(&hb.x).then(ha.y.total_cmp(&hb.y))
            });
            for i in by_head {
                let id = PlayerId(free.remove(0));
                cur[i].player_id = Some(id);
                new_ids.push(id);
            }
        }

        cur.sort_by_key(|p| p.player_id.map(|id| id.0));
        stats.push(FrameAssignStats {
            frame_index: frame.frame_index,
            matched: costs.len(),
            mean_cost: if costs.is_empty() {
                0.0
            } else {
                costs.iter().sum::<f64>() / costs.len() as f64
            },
            max_cost: costs.iter().copied().fold(0.0, f64::max),
            new_ids,
        });
        prev = cur.clone();
        out.push(PoseFrame {
            frame_index: frame.frame_index,
            poses: cur,
        });
    }
    Ok(IdAssignment { frames: out, stats })
}

/// Frames where a labeled track jumps further than `threshold_px` between
/// consecutive appearances — the signature of a residual identity switch.
pub fn label_discontinuities(
    frames: &[PoseFrame],
    threshold_px: f64,
) -> Vec<(usize, PlayerId, f64)> {
    let mut last: BTreeMap<u32, Pose> = BTreeMap::new();
    let mut events = Vec::new();
    let mut ordered: Vec<&PoseFrame> = frames.iter().collect();
    ordered.sort_by_key(|f| f.frame_index);
    for frame in ordered {
        for pose in &frame.poses {
            let Some(id) = pose.player_id else { continue };
            if let Some(prev) = last.get(&id.0) {
                if let Some(d) = pose_distance(prev, pose) {
                    if d > threshold_px {
                        events.push((frame.frame_index, id, d));
                    }
                }
            }
            last.insert(id.0, pose.clone());
        }
    }
    events
}

#[cfg(test)]
mod tests {
    use super::*;
    use crate::types::{Keypoint, KEYPOINT_COUNT};

    fn pose_at(x: f64, y: f64) -> Pose {
        let offsets = [
            (0.0, -50.0),
            (-15.0, -20.0),
            (15.0, -20.0),
            (0.0, 0.0),
            (-10.0, 50.0),
            (10.0, 50.0),
        ];
        let mut kps = [Keypoint::new(0.0, 0.0, 1.0, true); KEYPOINT_COUNT];
        for (i, (dx, dy)) in offsets.iter().enumerate() {
            kps[i] = Keypoint::new(x + dx, y + dy, 1.0, true);
        }
        Pose::new(kps, None)
    }

    fn anon_frames(tracks: &[Vec<(f64, f64)>]) -> Vec<PoseFrame> {
        let frames = tracks[0].len();
        (0..frames)
            .map(|f| PoseFrame {
                frame_index: f,
                poses: tracks.iter().map(|t| pose_at(t[f].0, t[f].1)).collect(),
            })
            .collect()
    }

    #[test]
    fn smooth_translation_keeps_ids() {
        let a: Vec<(f64, f64)> = (0..20).map(|f| (100.0 + 3.0 * f as f64, 200.0)).collect();
        let b: Vec<(f64, f64)> = (0..20).map(|f| (500.0 - 3.0 * f as f64, 400.0)).collect();
        let result = assign_consistent_ids(&anon_frames(&[a, b])).unwrap();
        for frame in &result.frames {
            let ids: Vec<u32> = frame.poses.iter().map(|p| p.player_id.unwrap().0).collect();
            assert_eq!(ids, vec![1, 2]);
            // Player 1 started left and moves right; its head x grows.
            assert!(frame.poses[0].keypoint(KeypointName::Head).x < 400.0);
        }
    }

    #[test]
    fn single_pose_gets_id_one() {
        let t: Vec<(f64, f64)> = (0..10).map(|f| (100.0 + f as f64, 100.0)).collect();
        let result = assign_consistent_ids(&anon_frames(&[t])).unwrap();
        assert!(result
            .frames
            .iter()
            .all(|f| f.poses.len() == 1 && f.poses[0].player_id == Some(PlayerId(1))));
    }

    #[test]
    fn teleport_crossing_swaps_by_nearest_neighbor() {
        // Two poses swap positions instantaneously between frames. The 2x2
        // cost matrix is [[400, 0], [0, 400]] (up to gait offsets), so the
        // optimal assignment follows the nearest neighbor and swaps labels.
        let frames = anon_frames(&[
            vec![(100.0, 100.0), (100.0, 100.0)],
            vec![(500.0, 100.0), (500.0, 100.0)],
        ]);
        let mut frames = frames;
        frames[1].poses = vec![pose_at(500.0, 100.0), pose_at(100.0, 100.0)];
        frames[0].poses = vec![pose_at(100.0, 100.0), pose_at(500.0, 100.0)];
        let result = assign_consistent_ids(&frames).unwrap();
        let id_of = |f: usize, x: f64| {
            result.frames[f]
                .poses
                .iter()
                .find(|p| (p.keypoint(KeypointName::Center).x - x).abs() < 1.0)
                .unwrap()
                .player_id
                .unwrap()
        };
        assert_eq!(id_of(0, 100.0), PlayerId(1));
        assert_eq!(id_of(0, 500.0), PlayerId(2));
        // After the teleport the physical players swapped spots, but the
        // labels stay with the positions.
        assert_eq!(id_of(1, 100.0), PlayerId(1));
        assert_eq!(id_of(1, 500.0), PlayerId(2));
        // A correction entry restores physical identity: id 1 now sits where
        // its player teleported to.
        let log = CorrectionLog {
            entries: vec![SwapDirective {
                frame_start: 1,
                frame_end: 1,
                id_a: PlayerId(1),
                id_b: PlayerId(2),
            }],
        };
        let fixed = apply_corrections(&result.frames, &log).unwrap();
        let id_of_fixed = |f: usize, x: f64| {
            fixed[f]
                .poses
                .iter()
                .find(|p| (p.keypoint(KeypointName::Center).x - x).abs() < 1.0)
                .unwrap()
                .player_id
                .unwrap()
        };
        assert_eq!(id_of_fixed(1, 500.0), PlayerId(1));
        assert_eq!(id_of_fixed(1, 100.0), PlayerId(2));
    }

    #[test]
    fn correcting_a_label_swap_removes_discontinuities() {
        // Smooth two-player motion whose labels got swapped in frames 5..=10;
        // the swap shows up as displacement spikes, the correction removes them.
        let frames = anon_frames(&[
            (0..16).map(|f| (100.0 + 4.0 * f as f64, 100.0)).collect(),
            (0..16).map(|f| (700.0 - 4.0 * f as f64, 480.0)).collect(),
        ]);
        let mut labeled = assign_consistent_ids(&frames).unwrap().frames;
        for frame in labeled
            .iter_mut()
            .filter(|f| (5..=10).contains(&f.frame_index))
        {
            for pose in &mut frame.poses {
                pose.player_id = match pose.player_id {
                    Some(PlayerId(1)) => Some(PlayerId(2)),
                    Some(PlayerId(2)) => Some(PlayerId(1)),
                    other => other,
                };
            }
        }
        // Spikes at the swap start (frame 5) and where labels revert (frame 11).
        let spikes = label_discontinuities(&labeled, 50.0);
        let spike_frames: Vec<usize> = spikes.iter().map(|s| s.0).collect();
        assert_eq!(spike_frames, vec![5, 5, 11, 11]);

        let log = CorrectionLog {
            entries: vec![SwapDirective {
                frame_start: 5,
                frame_end: 10,
                id_a: PlayerId(1),
                id_b: PlayerId(2),
            }],
        };
        let fixed = apply_corrections(&labeled, &log).unwrap();
        assert!(label_discontinuities(&fixed, 50.0).is_empty());
    }

    #[test]
    fn too_many_poses_is_capacity_error() {
        let poses: Vec<Pose> = (0..7).map(|i| pose_at(100.0 * i as f64, 100.0)).collect();
        let frames = vec![PoseFrame {
            frame_index: 0,
            poses,
        }];
        assert_eq!(
            assign_consistent_ids(&frames),
            Err(VmError::TooManyPoses { frame: 0, count: 7 })
        );
    }

    #[test]
    fn first_frame_ids_follow_head_x() {
        let frames = vec![PoseFrame {
            frame_index: 0,
            poses: vec![
                pose_at(900.0, 100.0),
                pose_at(200.0, 300.0),
                pose_at(550.0, 200.0),
            ],
        }];
        let result = assign_consistent_ids(&frames).unwrap();
        let xs: Vec<(u32, f64)> = result.frames[0]
            .poses
            .iter()
            .map(|p| (p.player_id.unwrap().0, p.keypoint(KeypointName::Head).x))
            .collect();
        assert_eq!(xs, vec![(1, 200.0), (2, 550.0), (3, 900.0)]);
    }

    #[test]
    fn input_order_does_not_change_labels() {
        let mut frames = anon_frames(&[
            (0..15).map(|f| (100.0 + 2.0 * f as f64, 100.0)).collect(),
            (0..15).map(|f| (600.0 - 2.0 * f as f64, 500.0)).collect(),
        ]);
        let baseline = assign_consistent_ids(&frames).unwrap();
        for f in frames.iter_mut() {
            f.poses.reverse();
        }
        let reversed = assign_consistent_ids(&frames).unwrap();
        assert_eq!(baseline.frames, reversed.frames);
    }

    #[test]
    fn determinism() {
        let frames = anon_frames(&[
            (0..30)
                .map(|f| (100.0 + 2.0 * f as f64, 100.0 + f as f64))
                .collect(),
            (0..30).map(|f| (600.0 - 2.0 * f as f64, 500.0)).collect(),
            (0..30).map(|f| (300.0, 150.0 + 3.0 * f as f64)).collect(),
        ]);
        let a = assign_consistent_ids(&frames).unwrap();
        let b = assign_consistent_ids(&frames).unwrap();
        assert_eq!(a.frames, b.frames);
    }

    #[test]
    fn empty_log_is_identity() {
        let mut frames = anon_frames(&[vec![(100.0, 100.0); 3]]);
        let labeled = assign_consistent_ids(&std::mem::take(&mut frames))
            .unwrap()
            .frames;
        let out = apply_corrections(&labeled, &CorrectionLog::default()).unwrap();
        assert_eq!(out, labeled);
    }

    #[test]
    fn swap_is_involution() {
        let frames = anon_frames(&[
            (0..8).map(|f| (100.0 + f as f64, 100.0)).collect(),
            (0..8).map(|f| (500.0 - f as f64, 400.0)).collect(),
        ]);
        let labeled = assign_consistent_ids(&frames).unwrap().frames;
        let log = CorrectionLog {
            entries: vec![SwapDirective {
                frame_start: 0,
                frame_end: 7,
                id_a: PlayerId(1),
                id_b: PlayerId(2),
            }],
        };
        let once = apply_corrections(&labeled, &log).unwrap();
        assert_ne!(once, labeled);
        let twice = apply_corrections(&once, &log).unwrap();
        assert_eq!(twice, labeled);
    }

    #[test]
    fn corrections_preserve_label_multiset() {
        let frames = anon_frames(&[
            (0..6).map(|f| (100.0 + f as f64, 100.0)).collect(),
            (0..6).map(|f| (500.0, 400.0 + f as f64)).collect(),
        ]);
        let labeled = assign_consistent_ids(&frames).unwrap().frames;
        let log = CorrectionLog {
            entries: vec![SwapDirective {
                frame_start: 2,
                frame_end: 4,
                id_a: PlayerId(1),
                id_b: PlayerId(2),
            }],
        };
        let swapped = apply_corrections(&labeled, &log).unwrap();
        for (orig, new) in labeled.iter().zip(&swapped) {
            let mut a: Vec<u32> = orig.poses.iter().map(|p| p.player_id.unwrap().0).collect();
            let mut b: Vec<u32> = new.poses.iter().map(|p| p.player_id.unwrap().0).collect();
            a.sort();
            b.sort();
            assert_eq!(a, b);
        }
    }

    #[test]
    fn unknown_correction_id_is_error() {
        let frames = anon_frames(&[vec![(100.0, 100.0); 3]]);
        let labeled = assign_consistent_ids(&frames).unwrap().frames;
        let log = CorrectionLog {
            entries: vec![SwapDirective {
                frame_start: 0,
                frame_end: 2,
                id_a: PlayerId(1),
                id_b: PlayerId(5),
            }],
        };
        assert!(matches!(
            apply_corrections(&labeled, &log),
            Err(VmError::UnknownCorrectionId {
                index: 0,
                missing: 5,
                ..
            })
        ));
    }

    #[test]
    fn marker_keypoint_sets_match_configurations() {
        assert_eq!(marker_keypoints(VmQuantity::One), &[KeypointName::Head]);
        assert_eq!(
            marker_keypoints(VmQuantity::Three),
            &[
                KeypointName::Head,
                KeypointName::AnkleLeft,
                KeypointName::AnkleRight
            ]
        );
        assert_eq!(marker_keypoints(VmQuantity::Six), &KeypointName::ALL);
        assert!(VmQuantity::from_count(4).is_err());
    }

    #[test]
    fn render_size_one_rounding() {
        let mut img = RgbImage::new(32, 32);
        let markers = MarkerSet {
            frame_index: 0,
            markers: vec![Marker {
                player_id: PlayerId(1),
                keypoint: KeypointName::Head,
                x: 10.4,
                y: 20.6,
                color: [255, 0, 0],
            }],
        };
        render_vm_overlay(&mut img, &markers, 1);
        let changed: Vec<(u32, u32)> = img
            .enumerate_pixels()
            .filter(|(_, _, p)| p.0 != [0, 0, 0])
            .map(|(x, y, _)| (x, y))
            .collect();
        assert_eq!(changed, vec![(10, 21)]);
    }

    #[test]
    fn render_size_three_interior() {
        let mut img = RgbImage::new(32, 32);
        let markers = MarkerSet {
            frame_index: 0,
            markers: vec![Marker {
                player_id: PlayerId(1),
                keypoint: KeypointName::Head,
                x: 15.0,
                y: 15.0,
                color: [0, 255, 0],
            }],
        };
        render_vm_overlay(&mut img, &markers, 3);
        let changed = img.pixels().filter(|p| p.0 != [0, 0, 0]).count();
        assert_eq!(changed, 9);
        for (x, y) in [(14, 14), (16, 16), (15, 15)] {
            assert_eq!(img.get_pixel(x, y).0, [0, 255, 0]);
        }
    }

    #[test]
    fn render_clips_at_border() {
        let mut img = RgbImage::new(32, 32);
        let markers = MarkerSet {
            frame_index: 0,
            markers: vec![Marker {
                player_id: PlayerId(1),
                keypoint: KeypointName::Head,
                x: 0.0,
                y: 0.0,
                color: [0, 0, 255],
            }],
        };
        render_vm_overlay(&mut img, &markers, 3);
        let changed = img.pixels().filter(|p| p.0 != [0, 0, 0]).count();
        assert_eq!(changed, 4);
    }

    #[test]
    fn render_pixel_budget() {
        let frame = PoseFrame {
            frame_index: 0,
            poses: (0..4)
                .map(|i| {
                    let mut p = pose_at(150.0 + 200.0 * i as f64, 300.0);
                    p.player_id = Some(PlayerId(i + 1));
                    p
                })
                .collect(),
        };
        for quantity in [VmQuantity::One, VmQuantity::Three, VmQuantity::Six] {
            for size in [1u32, 3] {
                let cfg = VmConfig {
                    size_px: size,
                    quantity,
                    palette: default_palette(),
                };
                let markers = make_markers(&frame, &cfg).unwrap();
                let mut img = RgbImage::new(1280, 720);
                render_vm_overlay(&mut img, &markers, size);
                let changed = img.pixels().filter(|p| p.0 != [0, 0, 0]).count();
                assert!(changed <= (quantity.count() * 4 * size * size) as usize);
            }
        }
    }

    #[test]
    fn markers_require_labels_and_known_palette() {
        let frame = PoseFrame {
            frame_index: 0,
            poses: vec![pose_at(100.0, 100.0)],
        };
        assert!(matches!(
            make_markers(&frame, &VmConfig::default()),
            Err(VmError::AnonymousPose { frame: 0 })
        ));
        let mut labeled = frame;
        labeled.poses[0].player_id = Some(PlayerId(9));
        assert!(matches!(
            make_markers(&labeled, &VmConfig::default()),
            Err(VmError::InvalidConfig(_))
        ));
    }

    #[test]
    fn duplicate_palette_color_rejected() {
        let mut cfg = VmConfig::default();
        cfg.palette.insert(PlayerId(2), [255, 0, 0]);
        assert!(matches!(cfg.validate(), Err(VmError::InvalidConfig(_))));
    }
}
