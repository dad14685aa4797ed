//! Text formats binding the pipeline stages: the pose CSV, MOTChallenge
//! track files, correction logs, occlusion-label CSV and frame-index lists.
//!
//! Readers are strict: canonical ordering is required, trailing garbage is
//! rejected, and every parse error carries a 1-based line number, so
//! write-then-read is byte-identical on every canonical file.

use std::fs;
use std::io::Write;
use std::path::{Path, PathBuf};

use thiserror::Error;

use crate::types::{BBox, Detection, Keypoint, KeypointName, PlayerId, Pose, PoseFrame, TrackSet};
use crate::vm::{CorrectionLog, SwapDirective};

#[derive(Debug, Error)]
pub enum FileError {
    #[error("{path}:{line}: {message}")]
    Parse {
        path: PathBuf,
        line: usize,
        message: String,
    },
    #[error("cannot serialize: {0}")]
    Unwritable(String),
    #[error("{path}: {source}")]
    Io {
        path: PathBuf,
        #[source]
        source: std::io::Error,
    },
}

impl FileError {
    fn parse(path: &Path, line: usize, message: impl Into<String>) -> FileError {
        FileError::Parse {
            path: path.to_path_buf(),
            line,
            message: message.into(),
        }
    }

    pub fn line(&self) -> Option<usize> {
        match self {
            FileError::Parse { line, .. } => Some(*line),
            _ => None,
        }
    }
}

fn read_to_string(path: &Path) -> Result<String, FileError> {
    fs::read_to_string(path).map_err(|source| FileError::Io {
        path: path.to_path_buf(),
        source,
    })
}

/// Writes via a temp file in the same directory plus rename, so readers
/// never observe a half-written file.
pub fn write_atomic(path: &Path, contents: &[u8]) -> Result<(), FileError> {
    let io_err = |source| FileError::Io {
        path: path.to_path_buf(),
        source,
    };
    let mut tmp = path.as_os_str().to_owned();
    tmp.push(".tmp");
    let tmp = PathBuf::from(tmp);
    let mut file = fs::File::create(&tmp).map_err(io_err)?;
    file.write_all(contents).map_err(io_err)?;
    file.sync_all().map_err(io_err)?;
    drop(file);
    fs::rename(&tmp, path).map_err(io_err)?;
    Ok(())
}

pub const POSE_HEADER: &str = "frame,player,det,keypoint,x,y,confidence,visible";

/// Serializes pose frames to the canonical CSV. Labeled poses sort by
/// player id; anonymous poses keep their order and carry a det index.
pub fn pose_csv_string(frames: &[PoseFrame]) -> Result<String, FileError> {
    let mut labeled: Option<bool> = None;
    let mut out = String::from(POSE_HEADER);
    out.push('\n');
    let mut ordered: Vec<&PoseFrame> = frames.iter().collect();
    ordered.sort_by_key(|f| f.frame_index);
    for frame in ordered {
        let mut poses: Vec<&Pose> = frame.poses.iter().collect();
        poses.sort_by_key(|p| p.player_id.map(|id| id.0));
        for (det_index, pose) in poses.iter().enumerate() {
            let is_labeled = pose.player_id.is_some();
            match labeled {
                None => labeled = Some(is_labeled),
                Some(l) if l != is_labeled => {
                    return Err(FileError::Unwritable(format!(
                        "frame {} mixes labeled and anonymous poses",
                        frame.frame_index
                    )))
                }
                _ => {}
            }
            let (player, det) = match pose.player_id {
                Some(id) => (id.0.to_string(), "-".to_string()),
                None => ("-".to_string(), det_index.to_string()),
            };
            for (name, k) in pose.iter() {
                out.push_str(&format!(
                    "{},{},{},{},{:.3},{:.3},{:.3},{}\n",
                    frame.frame_index,
                    player,
                    det,
                    name,
                    k.x,
                    k.y,
                    k.confidence,
                    u8::from(k.visible)
                ));
            }
        }
    }
    Ok(out)
}

pub fn write_pose_file(path: &Path, frames: &[PoseFrame]) -> Result<(), FileError> {
    write_atomic(path, pose_csv_string(frames)?.as_bytes())
}

/// Reads a canonical pose CSV. The frame list is dense: frames without
/// rows come back empty, up to the highest frame present.
pub fn read_pose_file(path: &Path) -> Result<Vec<PoseFrame>, FileError> {
    let text = read_to_string(path)?;
    let mut lines = text.lines().enumerate();
    match lines.next() {
        Some((_, header)) if header == POSE_HEADER => {}
        Some((_, other)) => {
            return Err(FileError::parse(
                path,
                1,
                format!("expected header `{POSE_HEADER}`, got `{other}`"),
            ))
        }
        None => return Err(FileError::parse(path, 1, "empty file, header required")),
    }

    struct Row {
        frame: usize,
        player: Option<u32>,
        det: Option<usize>,
        keypoint: KeypointName,
        kp: Keypoint,
    }

    let mut rows: Vec<(usize, Row)> = Vec::new();
    let mut total_lines = 1usize;
    for (idx, raw) in lines {
        let line_no = idx + 1;
        total_lines = line_no;
        let fields: Vec<&str> = raw.split(',').collect();
        if fields.len() != 8 {
            return Err(FileError::parse(
                path,
                line_no,
                format!("expected 8 comma-separated fields, got {}", fields.len()),
            ));
        }
        let fail = |field: &str, value: &str| {
            FileError::parse(path, line_no, format!("invalid {field} `{value}`"))
        };
        let frame: usize = fields[0].parse().map_err(|_| fail("frame", fields[0]))?;
        let (player, det) = match (fields[1], fields[2]) {
            ("-", d) => {
                let det: usize = d.parse().map_err(|_| fail("det", d))?;
                (None, Some(det))
            }
            (p, "-") => {
                let id: u32 = p.parse().map_err(|_| fail("player", p))?;
                if id == 0 {
                    return Err(fail("player", p));
                }
                (Some(id), None)
            }
            (p, d) => {
                return Err(FileError::parse(
                    path,
                    line_no,
                    format!("exactly one of player/det must be `-`, got `{p}`/`{d}`"),
                ))
            }
        };
        let keypoint = KeypointName::parse(fields[3]).ok_or_else(|| fail("keypoint", fields[3]))?;
        let x: f64 = fields[4].parse().map_err(|_| fail("x", fields[4]))?;
        let y: f64 = fields[5].parse().map_err(|_| fail("y", fields[5]))?;
        let confidence: f64 = fields[6]
            .parse()
            .map_err(|_| fail("confidence", fields[6]))?;
        if !x.is_finite() || !y.is_finite() {
            return Err(FileError::parse(
                path,
                line_no,
                "coordinates must be finite",
            ));
        }
        if !(0.0..=1.0).contains(&confidence) {
            return Err(FileError::parse(
                path,
                line_no,
                format!("confidence {confidence} outside [0,1]"),
            ));
        }
        let visible = match fields[7] {
            "0" => false,
            "1" => true,
            other => return Err(fail("visible", other)),
        };
        rows.push((
            line_no,
            Row {
                frame,
                player,
                det,
                keypoint,
                kp: Keypoint::new(x, y, confidence, visible),
            },
        ));
    }

    if rows.is_empty() {
        return Ok(Vec::new());
    }
    if !rows.len().is_multiple_of(crate::types::KEYPOINT_COUNT) {
        return Err(FileError::parse(
            path,
            total_lines + 1,
            "file ends inside a pose (each pose needs all six keypoint rows)",
        ));
    }

    let labeled = rows[0].1.player.is_some();
    let mut frames: Vec<PoseFrame> = Vec::new();
    let mut prev_key: Option<(usize, u32)> = None;
    for group in rows.chunks(crate::types::KEYPOINT_COUNT) {
        let (first_line, first) = (&group[0].0, &group[0].1);
        if first.player.is_some() != labeled {
            return Err(FileError::parse(
                path,
                *first_line,
                "file mixes labeled and anonymous poses",
            ));
        }
        let sort_key = (
            first.frame,
            first.player.or(first.det.map(|d| d as u32)).unwrap_or(0),
        );
        if let Some(prev) = prev_key {
            if sort_key <= prev {
                return Err(FileError::parse(
                    path,
                    *first_line,
                    format!(
                        "rows out of canonical order: pose ({}, {}) follows ({}, {})",
                        sort_key.0, sort_key.1, prev.0, prev.1
                    ),
                ));
            }
        }
        prev_key = Some(sort_key);

        let mut kps = [Keypoint::new(0.0, 0.0, 0.0, false); crate::types::KEYPOINT_COUNT];
        for (i, (line_no, row)) in group.iter().enumerate() {
            if (row.frame, row.player, row.det) != (first.frame, first.player, first.det) {
                return Err(FileError::parse(
                    path,
                    *line_no,
                    "pose rows must be contiguous (six keypoints per pose)",
                ));
            }
            let expected = KeypointName::ALL[i];
            if row.keypoint != expected {
                return Err(FileError::parse(
                    path,
                    *line_no,
                    format!(
                        "expected keypoint `{expected}` here, got `{}`",
                        row.keypoint
                    ),
                ));
            }
            kps[i] = row.kp;
        }

        while frames.len() <= first.frame {
            frames.push(PoseFrame {
                frame_index: frames.len(),
                poses: Vec::new(),
            });
        }
        let frame = &mut frames[first.frame];
        if let Some(det) = first.det {
            if det != frame.poses.len() {
                return Err(FileError::parse(
                    path,
                    *first_line,
                    format!("det index {det} must count up from 0 within the frame"),
                ));
            }
        }
        frame.poses.push(Pose::new(kps, first.player.map(PlayerId)));
    }
    Ok(frames)
}

/// Serializes a track set as MOTChallenge text, 1-based frames, rows
/// sorted by (frame, id).
pub fn mot_string(ts: &TrackSet) -> String {
    let mut dets: Vec<&Detection> = ts.detections.iter().collect();
    dets.sort_by_key(|d| (d.frame_index, d.track_id));
    let mut out = String::new();
    for d in dets {
        out.push_str(&format!(
            "{},{},{:.2},{:.2},{:.2},{:.2},{:.2},-1,-1,-1\n",
            d.frame_index + 1,
            d.track_id,
            d.bbox.x,
            d.bbox.y,
            d.bbox.w,
            d.bbox.h,
            d.confidence
        ));
    }
    out
}

pub fn write_mot(path: &Path, ts: &TrackSet) -> Result<(), FileError> {
    write_atomic(path, mot_string(ts).as_bytes())
}

/// Reads MOTChallenge text. Rows may arrive in any order; the result is
/// sorted and frame_count set to the highest frame present.
pub fn read_mot(path: &Path, sequence_name: &str) -> Result<TrackSet, FileError> {
    let text = read_to_string(path)?;
    let mut detections = Vec::new();
    let mut seen = std::collections::BTreeSet::new();
    for (idx, raw) in text.lines().enumerate() {
        let line_no = idx + 1;
        let fields: Vec<&str> = raw.split(',').collect();
        if fields.len() != 10 {
            return Err(FileError::parse(
                path,
                line_no,
                format!("expected 10 comma-separated fields, got {}", fields.len()),
            ));
        }
        let fail = |field: &str, value: &str| {
            FileError::parse(path, line_no, format!("invalid {field} `{value}`"))
        };
        let frame: usize = fields[0].parse().map_err(|_| fail("frame", fields[0]))?;
        if frame == 0 {
            return Err(FileError::parse(path, line_no, "frame numbers are 1-based"));
        }
        let id: u32 = fields[1].parse().map_err(|_| fail("id", fields[1]))?;
        let mut nums = [0.0f64; 5];
        for (slot, field) in nums.iter_mut().zip(&fields[2..7]) {
            *slot = field.parse().map_err(|_| fail("numeric field", field))?;
            if !slot.is_finite() {
                return Err(fail("numeric field", field));
            }
        }
        let [x, y, w, h, conf] = nums;
        if w <= 0.0 || h <= 0.0 {
            return Err(FileError::parse(
                path,
                line_no,
                format!("degenerate box {w}x{h}"),
            ));
        }
        for tail in &fields[7..10] {
            if *tail != "-1" {
                return Err(FileError::parse(
                    path,
                    line_no,
                    format!("trailing fields must be literal -1,-1,-1, got `{tail}`"),
                ));
            }
        }
        if !seen.insert((frame, id)) {
            return Err(FileError::parse(
                path,
                line_no,
                format!("duplicate detection for frame {frame} id {id}"),
            ));
        }
        detections.push(Detection {
            frame_index: frame - 1,
            track_id: id,
            bbox: BBox::new(x, y, w, h),
            confidence: conf,
        });
    }
    detections.sort_by_key(|d| (d.frame_index, d.track_id));
    let frame_count = detections
        .iter()
        .map(|d| d.frame_index + 1)
        .max()
        .unwrap_or(0);
    Ok(TrackSet {
        sequence_name: sequence_name.to_string(),
        frame_count,
        detections,
    })
}

/// Correction log: one `frame_start,frame_end,id_a,id_b` directive per line.
pub fn read_corrections(path: &Path) -> Result<CorrectionLog, FileError> {
    let text = read_to_string(path)?;
    let mut entries = Vec::new();
    for (idx, raw) in text.lines().enumerate() {
        let line_no = idx + 1;
        let fields: Vec<&str> = raw.split(',').collect();
        if fields.len() != 4 {
            return Err(FileError::parse(
                path,
                line_no,
                format!("expected 4 comma-separated fields, got {}", fields.len()),
            ));
        }
        let int = |field: &str| -> Result<usize, FileError> {
            field
                .parse()
                .map_err(|_| FileError::parse(path, line_no, format!("invalid integer `{field}`")))
        };
        let entry = SwapDirective {
            frame_start: int(fields[0])?,
            frame_end: int(fields[1])?,
            id_a: PlayerId(int(fields[2])? as u32),
            id_b: PlayerId(int(fields[3])? as u32),
        };
        if entry.frame_start > entry.frame_end {
            return Err(FileError::parse(
                path,
                line_no,
                format!(
                    "frame_start {} > frame_end {}",
                    entry.frame_start, entry.frame_end
                ),
            ));
        }
        if entry.id_a == entry.id_b || entry.id_a.0 == 0 {
            return Err(FileError::parse(
                path,
                line_no,
                "swap needs two distinct nonzero ids",
            ));
        }
        entries.push(entry);
    }
    Ok(CorrectionLog { entries })
}

pub fn corrections_string(log: &CorrectionLog) -> String {
    log.entries
        .iter()
        .map(|e| format!("{},{},{},{}\n", e.frame_start, e.frame_end, e.id_a, e.id_b))
        .collect()
}

pub const OCCLUSION_HEADER: &str = "frame,occlusion";

pub fn occlusion_csv_string(labels: &[f64]) -> String {
    let mut out = String::from(OCCLUSION_HEADER);
    out.push('\n');
    for (f, v) in labels.iter().enumerate() {
        out.push_str(&format!("{f},{v:.6}\n"));
    }
    out
}

pub fn read_occlusion_csv(path: &Path) -> Result<Vec<f64>, FileError> {
    let text = read_to_string(path)?;
    let mut lines = text.lines().enumerate();
    match lines.next() {
        Some((_, header)) if header == OCCLUSION_HEADER => {}
        _ => {
            return Err(FileError::parse(
                path,
                1,
                format!("expected header `{OCCLUSION_HEADER}`"),
            ))
        }
    }
    let mut labels = Vec::new();
    for (idx, raw) in lines {
        let line_no = idx + 1;
        let (frame, value) = raw
            .split_once(',')
            .ok_or_else(|| FileError::parse(path, line_no, "expected `frame,occlusion`"))?;
        let frame: usize = frame
            .parse()
            .map_err(|_| FileError::parse(path, line_no, format!("invalid frame `{frame}`")))?;
        if frame != labels.len() {
            return Err(FileError::parse(
                path,
                line_no,
                format!("frames must count up from 0, got {frame}"),
            ));
        }
        let value: f64 = value
            .parse()
            .map_err(|_| FileError::parse(path, line_no, format!("invalid score `{value}`")))?;
        labels.push(value);
    }
    Ok(labels)
}

/// Newline-separated frame indices emitted by select-frames.
pub fn indices_string(indices: &[usize]) -> String {
    indices.iter().map(|i| format!("{i}\n")).collect()
}
