//! File-level orchestration of the pipeline stages. The CLI subcommands are
//! thin wrappers over these functions; outputs are written atomically so a
//! rerun with the same inputs and seed is byte-identical.

use std::fs;
use std::path::{Path, PathBuf};

use rayon::prelude::*;
use thiserror::Error;

use crate::config::{self, ConvertOptions, PipelineConfig};
use crate::convert::{self, ConvertError};
use crate::io::{self, FileError};
use crate::metrics::{self, AggregateReport, EvalConfig, EvalError, EvalReport, StdMode};
use crate::select::{self, SelectError};
use crate::sim::{self, SimError};
use crate::tracker::{self, TrackError, TrackerConfig};
use crate::types::TrackSet;
use crate::vm::{self, VmError};

#[derive(Debug, Error)]
pub enum PipelineError {
    #[error(transparent)]
    File(#[from] FileError),
    #[error(transparent)]
    Config(#[from] config::ConfigError),
    #[error(transparent)]
    Vm(#[from] VmError),
    #[error(transparent)]
    Convert(#[from] ConvertError),
    #[error(transparent)]
    Eval(#[from] EvalError),
    #[error(transparent)]
    Track(#[from] TrackError),
    #[error(transparent)]
    Select(#[from] SelectError),
    #[error(transparent)]
    Sim(#[from] SimError),
    #[error("{path}: {message}")]
    Image { path: PathBuf, message: String },
    #[error("{0}")]
    Invalid(String),
}

impl PipelineError {
    /// True for filesystem-level failures (exit code 2); everything else is
    /// a validation failure (exit code 1).
    pub fn is_io(&self) -> bool {
        matches!(self, PipelineError::File(FileError::Io { .. }))
    }
}

fn create_dir(path: &Path) -> Result<(), PipelineError> {
    fs::create_dir_all(path).map_err(|source| {
        FileError::Io {
            path: path.to_path_buf(),
            source,
        }
        .into()
    })
}

/// Runs `f` on a rayon pool with `jobs` threads (0 = rayon's default).
fn with_pool<T: Send>(
    jobs: usize,
    f: impl FnOnce() -> Result<T, PipelineError> + Send,
) -> Result<T, PipelineError> {
    let pool = rayon::ThreadPoolBuilder::new()
        .num_threads(jobs)
        .build()
        .map_err(|e| PipelineError::Invalid(format!("thread pool: {e}")))?;
    pool.install(f)
}

pub fn sequence_dir_name(index: usize) -> String {
    format!("seq_{index:03}")
}

/// Per-sequence artifact filenames emitted by simulate.
pub mod files {
    pub const GT_POSES: &str = "gt_poses.csv";
    pub const POSES_LABELED: &str = "poses_labeled.csv";
    pub const POSES_ANON: &str = "poses_anon.csv";
    pub const GT_BOXES: &str = "gt.txt";
    pub const DETECTIONS: &str = "det.txt";
    pub const OCCLUSION: &str = "occlusion.csv";
    pub const SCENARIO: &str = "scenario.json";
}

/// Generates one sequence into `dir`: ground-truth poses and boxes, the
/// degraded pose and detector streams, occlusion labels and a config echo.
pub fn simulate_sequence(dir: &Path, cfg: &PipelineConfig) -> Result<(), PipelineError> {
    create_dir(dir)?;
    let scenario = sim::generate(&cfg.scenario)?;
    let degraded = sim::degrade(&scenario, &cfg.degradation)?;
    io::write_pose_file(&dir.join(files::GT_POSES), &scenario.gt_poses)?;
    io::write_pose_file(&dir.join(files::POSES_LABELED), &degraded.labeled)?;
    io::write_pose_file(&dir.join(files::POSES_ANON), &degraded.anonymous)?;
    io::write_mot(&dir.join(files::GT_BOXES), &scenario.gt_boxes)?;
    io::write_mot(&dir.join(files::DETECTIONS), &degraded.detector)?;
    io::write_atomic(
        &dir.join(files::OCCLUSION),
        io::occlusion_csv_string(&scenario.occlusion_labels).as_bytes(),
    )?;
    io::write_atomic(
        &dir.join(files::SCENARIO),
        config::config_string(cfg).as_bytes(),
    )?;
    Ok(())
}

/// Simulates `cfg.sequences` sequences under `root`; sequence k (1-based)
/// lives in seq_00k and uses seed base_seed + k - 1.
pub fn simulate_batch(
    root: &Path,
    cfg: &PipelineConfig,
    jobs: usize,
) -> Result<Vec<PathBuf>, PipelineError> {
    create_dir(root)?;
    let runs: Vec<(PathBuf, PipelineConfig)> = (0..cfg.sequences)
        .map(|k| {
            let mut seq_cfg = cfg.clone();
            seq_cfg.scenario.seed = cfg.scenario.seed + k as u64;
            seq_cfg.degradation.seed = seq_cfg.scenario.seed;
            seq_cfg.sequences = 1;
            (root.join(sequence_dir_name(k + 1)), seq_cfg)
        })
        .collect();
    with_pool(jobs, || {
        runs.par_iter()
            .try_for_each(|(dir, seq_cfg)| simulate_sequence(dir, seq_cfg))
    })?;
    Ok(runs.into_iter().map(|(dir, _)| dir).collect())
}

/// assign-ids: anonymous poses in, labeled poses out, optional corrections
/// applied afterwards, optional per-frame diagnostics CSV.
pub fn run_assign(
    poses_in: &Path,
    poses_out: &Path,
    corrections: Option<&Path>,
    diagnostics_out: Option<&Path>,
) -> Result<(), PipelineError> {
    let frames = io::read_pose_file(poses_in)?;
    let assignment = vm::assign_consistent_ids(&frames)?;
    let mut labeled = assignment.frames;
    if let Some(log_path) = corrections {
        let log = io::read_corrections(log_path)?;
        labeled = vm::apply_corrections(&labeled, &log)?;
    }
    io::write_pose_file(poses_out, &labeled)?;
    if let Some(diag_path) = diagnostics_out {
        let mut text = String::from("frame,matched,mean_cost,max_cost,new_ids\n");
        for s in &assignment.stats {
            let new_ids = s
                .new_ids
                .iter()
                .map(|id| id.to_string())
                .collect::<Vec<_>>()
                .join(";");
            text.push_str(&format!(
                "{},{},{:.3},{:.3},{}\n",
                s.frame_index, s.matched, s.mean_cost, s.max_cost, new_ids
            ));
        }
        io::write_atomic(diag_path, text.as_bytes())?;
    }
    Ok(())
}

/// convert: labeled poses in, MOT tracks out.
pub fn run_convert(
    poses_in: &Path,
    tracks_out: &Path,
    opts: &ConvertOptions,
) -> Result<(), PipelineError> {
    let frames = io::read_pose_file(poses_in)?;
    let name = tracks_out
        .file_stem()
        .map(|s| s.to_string_lossy().into_owned())
        .unwrap_or_default();
    let ts = convert::convert_sequence(&frames, opts.method, &opts.padding, opts.threshold, &name)?;
    io::write_mot(tracks_out, &ts)?;
    Ok(())
}

/// track: detections in (ids ignored), baseline tracks out.
pub fn run_track(
    detections_in: &Path,
    tracks_out: &Path,
    cfg: &TrackerConfig,
) -> Result<(), PipelineError> {
    let dets = io::read_mot(detections_in, "detections")?;
    let ts = tracker::track(&dets, cfg)?;
    io::write_mot(tracks_out, &ts)?;
    Ok(())
}

/// Reads a gt/pred pair, padding the prediction's frame range up to the
/// ground truth's (a prediction may legitimately end early or be empty).
pub fn read_eval_pair(
    gt_path: &Path,
    pred_path: &Path,
) -> Result<(TrackSet, TrackSet), PipelineError> {
    let gt = io::read_mot(gt_path, &stem(gt_path))?;
    let mut pred = io::read_mot(pred_path, &stem(pred_path))?;
    if pred.frame_count > gt.frame_count {
        return Err(PipelineError::Invalid(format!(
            "prediction has {} frames, ground truth only {}",
            pred.frame_count, gt.frame_count
        )));
    }
    pred.frame_count = gt.frame_count;
    Ok((gt, pred))
}

fn stem(path: &Path) -> String {
    path.file_stem()
        .map(|s| s.to_string_lossy().into_owned())
        .unwrap_or_default()
}

pub fn run_evaluate(
    gt_path: &Path,
    pred_path: &Path,
    eval_cfg: &EvalConfig,
) -> Result<EvalReport, PipelineError> {
    let (gt, pred) = read_eval_pair(gt_path, pred_path)?;
    let mut report = metrics::compute_hota_with(&gt, &pred, eval_cfg)?;
    report.sequence_name = stem(gt_path);
    Ok(report)
}

/// Sorted seq_* subdirectories of a simulate root.
pub fn sequence_dirs(root: &Path) -> Result<Vec<PathBuf>, PipelineError> {
    let entries = fs::read_dir(root).map_err(|source| FileError::Io {
        path: root.to_path_buf(),
        source,
    })?;
    let mut dirs: Vec<PathBuf> = entries
        .filter_map(|e| e.ok())
        .map(|e| e.path())
        .filter(|p| {
            p.is_dir()
                && p.file_name()
                    .map(|n| n.to_string_lossy().starts_with("seq_"))
                    .unwrap_or(false)
        })
        .collect();
    dirs.sort();
    if dirs.is_empty() {
        return Err(PipelineError::Invalid(format!(
            "no seq_* directories under {}",
            root.display()
        )));
    }
    Ok(dirs)
}

/// Evaluates `pred_name` against `gt_name` in every sequence directory.
pub fn evaluate_root(
    root: &Path,
    gt_name: &str,
    pred_name: &str,
    eval_cfg: &EvalConfig,
    jobs: usize,
) -> Result<Vec<EvalReport>, PipelineError> {
    let dirs = sequence_dirs(root)?;
    with_pool(jobs, || {
        dirs.par_iter()
            .map(|dir| {
                let mut report = run_evaluate(&dir.join(gt_name), &dir.join(pred_name), eval_cfg)?;
                report.sequence_name = stem(dir);
                Ok(report)
            })
            .collect()
    })
}

/// One labeled method for compare.
pub struct CompareMethod {
    pub label: String,
    pub pred_name: String,
}

/// Side-by-side aggregate table plus a CSV, one row per method.
pub fn run_compare(
    root: &Path,
    gt_name: &str,
    methods: &[CompareMethod],
    eval_cfg: &EvalConfig,
    std_mode: StdMode,
    jobs: usize,
) -> Result<(String, String), PipelineError> {
    let mut rows: Vec<(String, AggregateReport)> = Vec::new();
    for m in methods {
        let reports = evaluate_root(root, gt_name, &m.pred_name, eval_cfg, jobs)?;
        rows.push((m.label.clone(), metrics::aggregate(&reports, std_mode)?));
    }
    let table = metrics::comparison_table(&rows);
    let mut csv = String::from(
        "method,hota_mean,hota_std,deta_mean,deta_std,assa_mean,assa_std,loca_mean,loca_std,fn_mean,fn_std,fp_mean,fp_std,ids_mean,ids_std\n",
    );
    for (label, agg) in &rows {
        csv.push_str(&format!(
            "{label},{:.4},{:.4},{:.4},{:.4},{:.4},{:.4},{:.4},{:.4},{:.4},{:.4},{:.4},{:.4},{:.4},{:.4}\n",
            agg.hota.mean, agg.hota.std, agg.deta.mean, agg.deta.std,
            agg.assa.mean, agg.assa.std, agg.loca.mean, agg.loca.std,
            agg.fn_count.mean, agg.fn_count.std, agg.fp_count.mean, agg.fp_count.std,
            agg.id_switches.mean, agg.id_switches.std
        ));
    }
    Ok((table, csv))
}

fn frame_file_name(index: usize) -> String {
    format!("frame_{index:06}.png")
}

fn open_rgb(path: &Path) -> Result<image::RgbImage, PipelineError> {
    match image::open(path) {
        Ok(img) => Ok(img.to_rgb8()),
        Err(image::ImageError::IoError(source)) => Err(FileError::Io {
            path: path.to_path_buf(),
            source,
        }
        .into()),
        Err(e) => Err(PipelineError::Image {
            path: path.to_path_buf(),
            message: e.to_string(),
        }),
    }
}

/// overlay: renders virtual markers onto frame_%06d.png rasters for every
/// frame in the pose file, writing the same names under `out_dir`.
pub fn run_overlay(
    frames_dir: &Path,
    poses_in: &Path,
    out_dir: &Path,
    vm_cfg: &vm::VmConfig,
) -> Result<usize, PipelineError> {
    vm_cfg.validate()?;
    let frames = io::read_pose_file(poses_in)?;
    create_dir(out_dir)?;
    for frame in &frames {
        let name = frame_file_name(frame.frame_index);
        let mut img = open_rgb(&frames_dir.join(&name))?;
        let markers = vm::make_markers(frame, vm_cfg)?;
        vm::render_vm_overlay(&mut img, &markers, vm_cfg.size_px);
        let out_path = out_dir.join(&name);
        let mut bytes = Vec::new();
        img.write_to(
            &mut std::io::Cursor::new(&mut bytes),
            image::ImageFormat::Png,
        )
        .map_err(|e| PipelineError::Image {
            path: out_path.clone(),
            message: e.to_string(),
        })?;
        io::write_atomic(&out_path, &bytes)?;
    }
    Ok(frames.len())
}

/// select-frames, k-means mode: features from frame_%06d.png under a
/// directory, k cluster-nearest frames out.
pub fn run_select_kmeans(
    frames_dir: &Path,
    k: usize,
    seed: u64,
    out: &Path,
) -> Result<Vec<usize>, PipelineError> {
    let entries = fs::read_dir(frames_dir).map_err(|source| FileError::Io {
        path: frames_dir.to_path_buf(),
        source,
    })?;
    let mut paths: Vec<PathBuf> = entries
        .filter_map(|e| e.ok())
        .map(|e| e.path())
        .filter(|p| {
            p.file_name()
                .map(|n| {
                    let n = n.to_string_lossy();
                    n.starts_with("frame_") && n.ends_with(".png")
                })
                .unwrap_or(false)
        })
        .collect();
    paths.sort();
    let mut features = Vec::with_capacity(paths.len());
    for (i, path) in paths.iter().enumerate() {
        features.push(select::frame_feature(i, &open_rgb(path)?));
    }
    let selected = select::kmeans_select(&features, k, seed)?;
    io::write_atomic(out, io::indices_string(&selected).as_bytes())?;
    Ok(selected)
}

/// Per-frame occlusion scores from a MOT boxes file.
pub fn occlusion_scores_from_boxes(boxes_path: &Path) -> Result<Vec<f64>, PipelineError> {
    let ts = io::read_mot(boxes_path, "boxes")?;
    let frames = ts.by_frame();
    Ok(frames
        .iter()
        .map(|dets| {
            let boxes: Vec<_> = dets.iter().map(|d| d.bbox).collect();
            select::occlusion_score(&boxes)
        })
        .collect())
}

/// select-frames, occlusion mode: greedy high-occlusion selection.
pub fn run_select_occlusion(
    scores: &[f64],
    n: usize,
    min_gap: usize,
    out: &Path,
) -> Result<Vec<usize>, PipelineError> {
    let selected = select::occlusion_prioritized_select(scores, n, min_gap)?;
    io::write_atomic(out, io::indices_string(&selected).as_bytes())?;
    Ok(selected)
}
