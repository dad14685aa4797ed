//! Deterministic synthetic court scenarios: smooth skeleton trajectories with
//! latent arm extent, scripted screen events, and configurable degradation
//! into pose-model and detector outputs.
//!
//! Every player owns a court cell and roams inside it on a smooth spline
//! through random waypoints, so sequences without screen events stay
//! occlusion-free. A screen event steers two players to a meeting point at
//! the scripted frame, separated by a small perpendicular offset, and lets
//! them return to their cells. The reversal under detection dropout is what
//! breaks constant-velocity trackers while per-frame pose matching, whose
//! closest approach never drops below the offset, stays unambiguous.

use rand::{Rng, SeedableRng};
use rand_chacha::ChaCha8Rng;
use thiserror::Error;

use crate::select::occlusion_score;
use crate::types::{
    BBox, Detection, Keypoint, KeypointName, PlayerId, Pose, PoseFrame, TrackSet, KEYPOINT_COUNT,
};
use crate::vm::MAX_PLAYERS;

#[derive(Debug, Error, PartialEq)]
pub enum SimError {
    #[error("invalid scenario config: {0}")]
    InvalidConfig(String),
}

/// Convergence directive: the two players meet at the given frame.
#[derive(Debug, Clone, Copy, PartialEq)]
pub struct ScreenEvent {
    pub frame: usize,
    pub player_a: PlayerId,
    pub player_b: PlayerId,
}

#[derive(Debug, Clone, PartialEq)]
pub struct ScenarioConfig {
    pub players: u32,
    pub frames: usize,
    pub court_width: u32,
    pub court_height: u32,
    pub seed: u64,
    pub screen_events: Vec<ScreenEvent>,
    pub body_height_min: f64,
    pub body_height_max: f64,
    /// Latent horizontal reach added to ground-truth boxes on each side,
    /// as a fraction of body height. Keypoints never cover it.
    pub arm_extent_frac: f64,
}

impl Default for ScenarioConfig {
    fn default() -> Self {
        ScenarioConfig {
            players: 6,
            frames: 177,
            court_width: 1280,
            court_height: 720,
            seed: 1,
            screen_events: Vec::new(),
            body_height_min: 120.0,
            body_height_max: 180.0,
            arm_extent_frac: 0.2,
        }
    }
}

#[derive(Debug, Clone, PartialEq)]
pub struct DegradationConfig {
    /// Isotropic Gaussian sigma per keypoint, pixels.
    pub keypoint_noise_px: f64,
    /// Probability a keypoint is dropped (marked not visible).
    pub miss_rate: f64,
    /// Probability a whole detector box is dropped; quadrupled on frames
    /// whose occlusion label is at least 0.3.
    pub detector_miss_rate: f64,
    /// Probability per screen event that the two players' pose labels swap
    /// persistently from that frame onward.
    pub id_swap_rate: f64,
    pub seed: u64,
}

impl Default for DegradationConfig {
    fn default() -> Self {
        DegradationConfig {
            keypoint_noise_px: 1.0,
            miss_rate: 0.0,
            detector_miss_rate: 0.0,
            id_swap_rate: 0.0,
            seed: 1,
        }
    }
}

/// Ground truth for one sequence.
#[derive(Debug, Clone, PartialEq)]
pub struct Scenario {
    pub config: ScenarioConfig,
    pub gt_poses: Vec<PoseFrame>,
    pub gt_boxes: TrackSet,
    /// Per-frame max pairwise IoU of ground-truth boxes.
    pub occlusion_labels: Vec<f64>,
}

/// Degraded observation streams derived from a scenario.
#[derive(Debug, Clone, PartialEq)]
pub struct Degraded {
    /// Noisy identity-labeled poses (the single-agent model stand-in).
    pub labeled: Vec<PoseFrame>,
    /// The labeled stream with ids stripped and per-frame order shuffled
    /// (the multi-agent model stand-in).
    pub anonymous: Vec<PoseFrame>,
    /// Detector boxes with dropout (the detection stand-in).
    pub detector: TrackSet,
}

// PRNG stream channels. Generation and degradation use separate channel
// ranges so equal seeds still give independent streams.
const CH_TRAJECTORY: u64 = 0;
const CH_NOISE: u64 = 10;
const CH_MISS: u64 = 11;
const CH_DETECTOR: u64 = 12;
const CH_ID_SWAP: u64 = 13;
const CH_SHUFFLE: u64 = 14;

fn stream_rng(seed: u64, channel: u64, index: u64) -> ChaCha8Rng {
    let mut rng = ChaCha8Rng::seed_from_u64(seed);
    rng.set_stream((channel << 32) | index);
    rng
}

fn gaussian_pair(rng: &mut ChaCha8Rng) -> (f64, f64) {
    let u1: f64 = rng.gen::<f64>().max(1e-300);
    let u2: f64 = rng.gen();
    let r = (-2.0 * u1.ln()).sqrt();
    let theta = std::f64::consts::TAU * u2;
    (r * theta.cos(), r * theta.sin())
}

/// Body template: keypoint offsets from the hip center per unit height.
/// The vertical extent is exactly one body height.
const TEMPLATE: [(f64, f64); KEYPOINT_COUNT] = [
    (0.0, -0.5),   // head
    (-0.15, -0.2), // elbow_left
    (0.15, -0.2),  // elbow_right
    (0.0, 0.0),    // center
    (-0.10, 0.5),  // ankle_left
    (0.10, 0.5),   // ankle_right
];

const KNOT_SPACING: usize = 44;
const GAIT_PERIOD_FRAMES: f64 = 15.0;
/// Center separation at a screen event, as a fraction of the shorter
/// player's height (half on each side of the meeting point).
const EVENT_SEPARATION_FRAC: f64 = 0.15;
/// Court-edge reserve for Catmull-Rom overshoot past extreme waypoints.
const OVERSHOOT_PAD: f64 = 60.0;

#[derive(Debug, Clone, Copy, PartialEq)]
struct Vec2 {
    x: f64,
    y: f64,
}

/// Piecewise cubic Hermite through timed knots with Catmull-Rom tangents:
/// C1-continuous position for arbitrary (sorted, distinct) knot times.
#[derive(Debug, Clone)]
struct Spline {
    knots: Vec<(f64, Vec2)>,
}

impl Spline {
    fn tangent(&self, i: usize) -> Vec2 {
        let lo = i.saturating_sub(1);
        let hi = (i + 1).min(self.knots.len() - 1);
        let (t0, p0) = self.knots[lo];
        let (t1, p1) = self.knots[hi];
        let dt = (t1 - t0).max(f64::EPSILON);
        Vec2 {
            x: (p1.x - p0.x) / dt,
            y: (p1.y - p0.y) / dt,
        }
    }

    fn eval(&self, t: f64) -> Vec2 {
        let last = self.knots.len() - 1;
        if t <= self.knots[0].0 {
            return self.knots[0].1;
        }
        if t >= self.knots[last].0 {
            return self.knots[last].1;
        }
        let i = self.knots.partition_point(|(kt, _)| *kt <= t) - 1;
        let (t0, p0) = self.knots[i];
        let (t1, p1) = self.knots[i + 1];
        let dt = t1 - t0;
        let s = (t - t0) / dt;
        let (m0, m1) = (self.tangent(i), self.tangent(i + 1));
        let s2 = s * s;
        let s3 = s2 * s;
        let (h00, h10, h01, h11) = (
            2.0 * s3 - 3.0 * s2 + 1.0,
            s3 - 2.0 * s2 + s,
            -2.0 * s3 + 3.0 * s2,
            s3 - s2,
        );
        Vec2 {
            x: h00 * p0.x + h10 * dt * m0.x + h01 * p1.x + h11 * dt * m1.x,
            y: h00 * p0.y + h10 * dt * m0.y + h01 * p1.y + h11 * dt * m1.y,
        }
    }

    /// Drops interior knots within `radius` of `t`, then inserts (t, p).
    /// The first and final knots always survive.
    fn replace_near(&mut self, t: f64, radius: f64, p: Vec2) {
        let last_t = self.knots[self.knots.len() - 1].0;
        self.knots
            .retain(|(kt, _)| *kt == 0.0 || *kt == last_t || (kt - t).abs() > radius);
        let at = self.knots.partition_point(|(kt, _)| *kt < t);
        if self.knots.get(at).map(|(kt, _)| *kt == t) == Some(true) {
            self.knots[at].1 = p;
        } else {
            self.knots.insert(at, (t, p));
        }
    }
}

impl ScenarioConfig {
    pub fn validate(&self) -> Result<(), SimError> {
        if self.players == 0 || self.players as usize > MAX_PLAYERS {
            return Err(SimError::InvalidConfig(format!(
                "players must be 1..={MAX_PLAYERS}, got {}",
                self.players
            )));
        }
        if self.frames == 0 {
            return Err(SimError::InvalidConfig("frames must be >= 1".into()));
        }
        if !self.body_height_min.is_finite()
            || self.body_height_min <= 0.0
            || !self.body_height_max.is_finite()
            || self.body_height_max < self.body_height_min
        {
            return Err(SimError::InvalidConfig(format!(
                "body height range {}..{} is invalid",
                self.body_height_min, self.body_height_max
            )));
        }
        if !self.arm_extent_frac.is_finite() || self.arm_extent_frac < 0.0 {
            return Err(SimError::InvalidConfig(
                "arm_extent_frac must be >= 0".into(),
            ));
        }
        for (i, ev) in self.screen_events.iter().enumerate() {
            if ev.player_a == ev.player_b {
                return Err(SimError::InvalidConfig(format!(
                    "screen event {i} names player {} twice",
                    ev.player_a
                )));
            }
            for id in [ev.player_a, ev.player_b] {
                if id.0 == 0 || id.0 > self.players {
                    return Err(SimError::InvalidConfig(format!(
                        "screen event {i} references player {id} outside 1..={}",
                        self.players
                    )));
                }
            }
            if ev.frame >= self.frames {
                return Err(SimError::InvalidConfig(format!(
                    "screen event {i} at frame {} is past the sequence end {}",
                    ev.frame, self.frames
                )));
            }
        }
        // The court must fit the tallest player's roaming margins in every cell.
        for cell in 0..self.players as usize {
            if roam_region(self, cell).is_none() {
                return Err(SimError::InvalidConfig(format!(
                    "court {}x{} too small for body heights up to {}",
                    self.court_width, self.court_height, self.body_height_max
                )));
            }
        }
        Ok(())
    }
}

/// Waypoint sampling region for a cell: the cell shrunk by 18% per side,
/// kept clear of the court edges by the tallest body's margins plus the
/// overshoot pad. None when the region is empty.
fn roam_region(cfg: &ScenarioConfig, cell: usize) -> Option<(f64, f64, f64, f64)> {
    let (court_w, court_h) = (cfg.court_width as f64, cfg.court_height as f64);
    let (cx, cy, cw, ch) = cell_rect(court_w, court_h, cell);
    let hm = cfg.body_height_max;
    let x0 = (cx + 0.18 * cw).max(0.2 * hm + OVERSHOOT_PAD);
    let x1 = (cx + cw - 0.18 * cw).min(court_w - 0.2 * hm - OVERSHOOT_PAD);
    let y0 = (cy + 0.18 * ch).max(0.55 * hm + OVERSHOOT_PAD);
    let y1 = (cy + ch - 0.18 * ch).min(court_h - 0.55 * hm - OVERSHOOT_PAD);
    (x0 < x1 && y0 < y1).then_some((x0, x1, y0, y1))
}

fn cell_rect(court_w: f64, court_h: f64, cell: usize) -> (f64, f64, f64, f64) {
    let (col, row) = (cell % 3, cell / 3);
    let (w, h) = (court_w / 3.0, court_h / 2.0);
    (col as f64 * w, row as f64 * h, w, h)
}

fn cell_center(court_w: f64, court_h: f64, cell: usize) -> Vec2 {
    let (x, y, w, h) = cell_rect(court_w, court_h, cell);
    Vec2 {
        x: x + w / 2.0,
        y: y + h / 2.0,
    }
}

/// Generates the deterministic ground truth for one scenario.
pub fn generate(cfg: &ScenarioConfig) -> Result<Scenario, SimError> {
    cfg.validate()?;
    let players = cfg.players as usize;
    let (court_w, court_h) = (cfg.court_width as f64, cfg.court_height as f64);
    let n_knots = cfg.frames / KNOT_SPACING + 3;

    let mut heights = vec![0.0f64; players];
    let mut phases = vec![0.0f64; players];
    let mut splines: Vec<Spline> = Vec::with_capacity(players);
    for p in 0..players {
        let mut rng = stream_rng(cfg.seed, CH_TRAJECTORY, p as u64);
        heights[p] = rng.gen_range(cfg.body_height_min..=cfg.body_height_max);
        phases[p] = rng.gen::<f64>() * std::f64::consts::TAU;
        // Screen events pull players out of their cells, so the court
        // margins use the max height rather than the player's own.
        let (x0, x1, y0, y1) = roam_region(cfg, p).expect("validated");
        let knots = (0..n_knots)
            .map(|j| {
                let t = (j * KNOT_SPACING) as f64;
                (
                    t,
                    Vec2 {
                        x: rng.gen_range(x0..=x1),
                        y: rng.gen_range(y0..=y1),
                    },
                )
            })
            .collect();
        splines.push(Spline { knots });
    }

    // Screen events, in chronological order: a knot at the event frame puts
    // the pair on opposite sides of the meeting point with a small
    // perpendicular offset, and nearby waypoints are cleared so the approach
    // and the return to their own cells stay gentle.
    let mut events: Vec<ScreenEvent> = cfg.screen_events.clone();
    events.sort_by_key(|e| e.frame);
    for ev in &events {
        let a = (ev.player_a.0 - 1) as usize;
        let b = (ev.player_b.0 - 1) as usize;
        let ca = cell_center(court_w, court_h, a);
        let cb = cell_center(court_w, court_h, b);
        let mid = Vec2 {
            x: (ca.x + cb.x) / 2.0,
            y: (ca.y + cb.y) / 2.0,
        };
        let dir = Vec2 {
            x: cb.x - ca.x,
            y: cb.y - ca.y,
        };
        let len = (dir.x * dir.x + dir.y * dir.y).sqrt().max(1.0);
        let perp = Vec2 {
            x: -dir.y / len,
            y: dir.x / len,
        };
        let offset = 0.5 * EVENT_SEPARATION_FRAC * heights[a].min(heights[b]);
        let te = ev.frame as f64;
        let radius = KNOT_SPACING as f64;
        splines[a].replace_near(
            te,
            radius,
            Vec2 {
                x: mid.x + perp.x * offset,
                y: mid.y + perp.y * offset,
            },
        );
        splines[b].replace_near(
            te,
            radius,
            Vec2 {
                x: mid.x - perp.x * offset,
                y: mid.y - perp.y * offset,
            },
        );
    }

    let omega = std::f64::consts::TAU / GAIT_PERIOD_FRAMES;
    let mut gt_poses = Vec::with_capacity(cfg.frames);
    let mut gt_boxes = TrackSet::new(format!("sim_{:04}", cfg.seed), cfg.frames);
    let mut occlusion_labels = Vec::with_capacity(cfg.frames);

    for f in 0..cfg.frames {
        let mut poses = Vec::with_capacity(players);
        let mut boxes = Vec::with_capacity(players);
        for p in 0..players {
            let hip = splines[p].eval(f as f64);
            let h = heights[p];
            let s = (omega * f as f64 + phases[p]).sin();
            let s2 = (2.0 * omega * f as f64 + phases[p]).sin();
            let mut kps = [Keypoint::new(0.0, 0.0, 1.0, true); KEYPOINT_COUNT];
            for (i, (dx, dy)) in TEMPLATE.iter().enumerate() {
                kps[i] = Keypoint::new(hip.x + dx * h, hip.y + dy * h, 1.0, true);
            }
            kps[KeypointName::AnkleLeft.index()].x += 0.03 * h * s;
            kps[KeypointName::AnkleRight.index()].x -= 0.03 * h * s;
            kps[KeypointName::ElbowLeft.index()].x -= 0.02 * h * s;
            kps[KeypointName::ElbowRight.index()].x += 0.02 * h * s;
            kps[KeypointName::Head.index()].y += 0.01 * h * s2;
            let pose = Pose::new(kps, Some(PlayerId(p as u32 + 1)));

            let (x0, y0, x1, y1) = pose.visible_extent().expect("all keypoints visible");
            let arm = cfg.arm_extent_frac * h;
            let bbox = BBox::new(x0 - arm, y0, (x1 - x0) + 2.0 * arm, y1 - y0);
            boxes.push(bbox);
            gt_boxes.detections.push(Detection {
                frame_index: f,
                track_id: p as u32 + 1,
                bbox,
                confidence: 1.0,
            });
            poses.push(pose);
        }
        occlusion_labels.push(occlusion_score(&boxes));
        gt_poses.push(PoseFrame {
            frame_index: f,
            poses,
        });
    }

    Ok(Scenario {
        config: cfg.clone(),
        gt_poses,
        gt_boxes,
        occlusion_labels,
    })
}

impl DegradationConfig {
    pub fn validate(&self) -> Result<(), SimError> {
        for (name, v) in [
            ("miss_rate", self.miss_rate),
            ("detector_miss_rate", self.detector_miss_rate),
            ("id_swap_rate", self.id_swap_rate),
        ] {
            if !(0.0..=1.0).contains(&v) {
                return Err(SimError::InvalidConfig(format!(
                    "{name} must be in [0,1], got {v}"
                )));
            }
        }
        if !self.keypoint_noise_px.is_finite() || self.keypoint_noise_px < 0.0 {
            return Err(SimError::InvalidConfig(format!(
                "keypoint_noise_px must be finite and >= 0, got {}",
                self.keypoint_noise_px
            )));
        }
        Ok(())
    }
}

/// Derives the degraded observation streams from a scenario.
///
/// Every player and degradation channel draws from its own PRNG stream, so
/// toggling one channel never perturbs another.
pub fn degrade(scenario: &Scenario, cfg: &DegradationConfig) -> Result<Degraded, SimError> {
    cfg.validate()?;
    let players = scenario.config.players as usize;
    let frames = scenario.config.frames;

    let mut noise_rngs: Vec<ChaCha8Rng> = (0..players)
        .map(|p| stream_rng(cfg.seed, CH_NOISE, p as u64))
        .collect();
    let mut miss_rngs: Vec<ChaCha8Rng> = (0..players)
        .map(|p| stream_rng(cfg.seed, CH_MISS, p as u64))
        .collect();
    let mut det_rngs: Vec<ChaCha8Rng> = (0..players)
        .map(|p| stream_rng(cfg.seed, CH_DETECTOR, p as u64))
        .collect();
    let mut swap_rng = stream_rng(cfg.seed, CH_ID_SWAP, 0);
    let mut shuffle_rng = stream_rng(cfg.seed, CH_SHUFFLE, 0);

    // Persistent label swaps triggered per screen event.
    let mut events = scenario.config.screen_events.clone();
    events.sort_by_key(|e| e.frame);
    let mut swaps: Vec<ScreenEvent> = Vec::new();
    for ev in &events {
        if swap_rng.gen::<f64>() < cfg.id_swap_rate {
            swaps.push(*ev);
        }
    }

    let mut labeled = Vec::with_capacity(frames);
    let mut anonymous = Vec::with_capacity(frames);
    let mut detector = TrackSet::new(scenario.gt_boxes.sequence_name.clone(), frames);

    for (f, gt_frame) in scenario.gt_poses.iter().enumerate() {
        // Label permutation from all swaps active at this frame.
        let mut perm: Vec<u32> = (0..=players as u32).collect();
        for sw in swaps.iter().filter(|s| s.frame <= f) {
            perm.swap(sw.player_a.0 as usize, sw.player_b.0 as usize);
        }

        let mut poses = Vec::with_capacity(players);
        for (p, gt_pose) in gt_frame.poses.iter().enumerate() {
            let mut pose = gt_pose.clone();
            for name in KeypointName::ALL {
                let (z1, z2) = gaussian_pair(&mut noise_rngs[p]);
                let k = pose.keypoint_mut(name);
                k.x += cfg.keypoint_noise_px * z1;
                k.y += cfg.keypoint_noise_px * z2;
                let u: f64 = miss_rngs[p].gen();
                if u < cfg.miss_rate {
                    k.visible = false;
                    k.confidence = 0.0;
                }
            }
            pose.player_id = Some(PlayerId(perm[p + 1]));
            poses.push(pose);
        }
        poses.sort_by_key(|p| p.player_id.map(|id| id.0));
        labeled.push(PoseFrame {
            frame_index: f,
            poses,
        });

        // Detector stream: ground-truth boxes with dropout, boosted 4x
        // during occlusion overlap.
        let boost = if scenario.occlusion_labels[f] >= 0.3 {
            4.0
        } else {
            1.0
        };
        let rate = (cfg.detector_miss_rate * boost).min(1.0);
        #[allow(clippy::needless_range_loop)]
        for p in 0..players {
            let u: f64 = det_rngs[p].gen();
            let gt_det = &scenario.gt_boxes.detections[f * players + p];
            if u >= rate {
                detector.detections.push(*gt_det);
            }
        }
    }

    for frame in &labeled {
        let mut poses: Vec<Pose> = frame
            .poses
            .iter()
            .map(|p| {
                let mut anon = p.clone();
                anon.player_id = None;
                anon
            })
            .collect();
        for i in (1..poses.len()).rev() {
            let j = shuffle_rng.gen_range(0..=i);
            poses.swap(i, j);
        }
        anonymous.push(PoseFrame {
            frame_index: frame.frame_index,
            poses,
        });
    }

    Ok(Degraded {
        labeled,
        anonymous,
        detector,
    })
}
