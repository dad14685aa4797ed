//! vmtrack: pose-based virtual-marker tracking pipeline.
//!
//! Subcommands chain into the full pipeline: simulate -> select-frames /
//! assign-ids -> overlay / convert -> track -> evaluate / compare.
//! Exit codes: 0 success, 1 validation error, 2 I/O error.

use std::path::PathBuf;
use std::process::ExitCode;

use clap::{Parser, Subcommand};

use vmtrack_core::config::{self, PipelineConfig};
use vmtrack_core::convert::{ConversionMethod, SwitchThreshold};
use vmtrack_core::io;
use vmtrack_core::metrics;
use vmtrack_core::pipeline::{self, CompareMethod, PipelineError};
use vmtrack_core::vm::VmQuantity;

#[derive(Parser)]
#[command(
    name = "vmtrack",
    version,
    about = "Virtual-marker multi-object tracking toolkit"
)]
struct Cli {
    /// JSON config file; command-line flags override its values.
    #[arg(long, global = true)]
    config: Option<PathBuf>,
    /// Worker threads for batch subcommands (0 = all cores).
    #[arg(long, global = true, default_value_t = 0)]
    jobs: usize,
    #[command(subcommand)]
    command: Command,
}

#[derive(Subcommand)]
enum Command {
    /// Generate synthetic sequences: ground truth, degraded poses, detections.
    Simulate {
        /// Output root; sequences land in seq_001, seq_002, ...
        #[arg(long)]
        out: PathBuf,
        /// Number of sequences (default from config, 21).
        #[arg(long)]
        sequences: Option<usize>,
        /// Base seed; sequence k uses seed + k - 1.
        #[arg(long)]
        seed: Option<u64>,
        /// Frames per sequence.
        #[arg(long)]
        frames: Option<usize>,
        /// Players per sequence (1..=6).
        #[arg(long)]
        players: Option<u32>,
    },
    /// Pick annotation frames by appearance clustering or occlusion ranking.
    SelectFrames {
        /// "kmeans" or "occlusion".
        #[arg(long)]
        mode: String,
        /// Directory of frame_%06d.png rasters (kmeans mode).
        #[arg(long)]
        frames_dir: Option<PathBuf>,
        /// MOT boxes file to score occlusion from (occlusion mode).
        #[arg(long)]
        boxes: Option<PathBuf>,
        /// Precomputed occlusion CSV (occlusion mode).
        #[arg(long)]
        scores: Option<PathBuf>,
        /// Frames to select.
        #[arg(long)]
        count: usize,
        /// Minimum index distance between selected frames (occlusion mode).
        #[arg(long)]
        min_gap: Option<usize>,
        /// Clustering seed (kmeans mode).
        #[arg(long, default_value_t = 0)]
        seed: u64,
        /// Output file: one selected frame index per line.
        #[arg(long)]
        out: PathBuf,
    },
    /// Give anonymous poses consistent identities.
    AssignIds {
        #[arg(long)]
        poses: PathBuf,
        #[arg(long)]
        out: PathBuf,
        /// Correction log of frame_start,frame_end,id_a,id_b swaps.
        #[arg(long)]
        corrections: Option<PathBuf>,
        /// Per-frame assignment diagnostics CSV.
        #[arg(long)]
        diagnostics: Option<PathBuf>,
    },
    /// Render virtual markers onto frames.
    Overlay {
        #[arg(long)]
        frames_dir: PathBuf,
        /// Identity-labeled pose file.
        #[arg(long)]
        poses: PathBuf,
        #[arg(long)]
        out_dir: PathBuf,
        /// Marker square side in pixels.
        #[arg(long)]
        size_px: Option<u32>,
        /// Markers per player: 1, 3 or 6.
        #[arg(long)]
        quantity: Option<u32>,
    },
    /// Convert labeled poses to MOT bounding-box tracks.
    Convert {
        #[arg(long)]
        poses: PathBuf,
        #[arg(long)]
        out: PathBuf,
        /// "padding" or "maxmin".
        #[arg(long)]
        method: Option<String>,
        #[arg(long)]
        pad_x: Option<f64>,
        #[arg(long)]
        pad_top: Option<f64>,
        #[arg(long)]
        pad_bottom: Option<f64>,
        /// Absolute ID-switch exclusion threshold in pixels
        /// (default: 0.5 x median body height).
        #[arg(long)]
        threshold_px: Option<f64>,
    },
    /// Run the tracking-by-detection baseline over a detections file.
    Track {
        #[arg(long)]
        detections: PathBuf,
        #[arg(long)]
        out: PathBuf,
        #[arg(long)]
        iou_min: Option<f64>,
        #[arg(long)]
        confirm_hits: Option<u32>,
        #[arg(long)]
        max_misses: Option<u32>,
    },
    /// Score predicted tracks against ground truth (HOTA and friends).
    Evaluate {
        /// Ground-truth MOT file, or its name inside each sequence dir
        /// when --root is given.
        #[arg(long)]
        gt: String,
        /// Predicted MOT file, or its name inside each sequence dir.
        #[arg(long)]
        pred: String,
        /// Simulate root holding seq_* directories (batch mode).
        #[arg(long)]
        root: Option<PathBuf>,
        /// Write the per-sequence report CSV here.
        #[arg(long)]
        out_csv: Option<PathBuf>,
    },
    /// Compare several track files against one ground truth, like a results table.
    Compare {
        #[arg(long)]
        root: PathBuf,
        /// Ground-truth file name inside each sequence directory.
        #[arg(long, default_value = "gt.txt")]
        gt: String,
        /// Method as label=pred_name; repeatable.
        #[arg(long = "pred", value_name = "LABEL=NAME", required = true)]
        preds: Vec<String>,
        #[arg(long)]
        out_csv: Option<PathBuf>,
        #[arg(long)]
        out_table: Option<PathBuf>,
    },
}

fn load_config(path: &Option<PathBuf>) -> Result<PipelineConfig, PipelineError> {
    match path {
        Some(p) => Ok(config::read_config(p)?),
        None => Ok(PipelineConfig::default()),
    }
}

fn run(cli: Cli) -> Result<(), PipelineError> {
    let mut cfg = load_config(&cli.config)?;
    match cli.command {
        Command::Simulate {
            out,
            sequences,
            seed,
            frames,
            players,
        } => {
            if let Some(n) = sequences {
                if n == 0 {
                    return Err(PipelineError::Invalid("--sequences must be >= 1".into()));
                }
                cfg.sequences = n;
            }
            if let Some(s) = seed {
                cfg.scenario.seed = s;
                cfg.degradation.seed = s;
            }
            if let Some(f) = frames {
                cfg.scenario.frames = f;
            }
            if let Some(p) = players {
                cfg.scenario.players = p;
            }
            let dirs = pipeline::simulate_batch(&out, &cfg, cli.jobs)?;
            println!("wrote {} sequences under {}", dirs.len(), out.display());
        }
        Command::SelectFrames {
            mode,
            frames_dir,
            boxes,
            scores,
            count,
            min_gap,
            seed,
            out,
        } => {
            let selected = match mode.as_str() {
                "kmeans" => {
                    let dir = frames_dir.ok_or_else(|| {
                        PipelineError::Invalid("--frames-dir is required in kmeans mode".into())
                    })?;
                    pipeline::run_select_kmeans(&dir, count, seed, &out)?
                }
                "occlusion" => {
                    let score_values = match (&boxes, &scores) {
                        (Some(b), None) => pipeline::occlusion_scores_from_boxes(b)?,
                        (None, Some(s)) => io::read_occlusion_csv(s)?,
                        _ => {
                            return Err(PipelineError::Invalid(
                                "occlusion mode needs exactly one of --boxes or --scores".into(),
                            ))
                        }
                    };
                    let gap = min_gap.unwrap_or(cfg.select.min_gap);
                    pipeline::run_select_occlusion(&score_values, count, gap, &out)?
                }
                other => {
                    return Err(PipelineError::Invalid(format!(
                        "unknown mode `{other}`, expected kmeans or occlusion"
                    )))
                }
            };
            println!("selected {} frames -> {}", selected.len(), out.display());
        }
        Command::AssignIds {
            poses,
            out,
            corrections,
            diagnostics,
        } => {
            pipeline::run_assign(&poses, &out, corrections.as_deref(), diagnostics.as_deref())?;
            println!("labeled poses -> {}", out.display());
        }
        Command::Overlay {
            frames_dir,
            poses,
            out_dir,
            size_px,
            quantity,
        } => {
            if let Some(s) = size_px {
                cfg.vm.size_px = s;
            }
            if let Some(q) = quantity {
                cfg.vm.quantity = VmQuantity::from_count(q)?;
            }
            let n = pipeline::run_overlay(&frames_dir, &poses, &out_dir, &cfg.vm)?;
            println!("overlaid {n} frames -> {}", out_dir.display());
        }
        Command::Convert {
            poses,
            out,
            method,
            pad_x,
            pad_top,
            pad_bottom,
            threshold_px,
        } => {
            if let Some(m) = method {
                cfg.convert.method = ConversionMethod::parse(&m).ok_or_else(|| {
                    PipelineError::Invalid(format!(
                        "unknown method `{m}`, expected maxmin or padding"
                    ))
                })?;
            }
            if let Some(v) = pad_x {
                cfg.convert.padding.pad_x_frac = v;
            }
            if let Some(v) = pad_top {
                cfg.convert.padding.pad_top_frac = v;
            }
            if let Some(v) = pad_bottom {
                cfg.convert.padding.pad_bottom_frac = v;
            }
            if let Some(px) = threshold_px {
                cfg.convert.threshold = SwitchThreshold::Absolute { px };
            }
            cfg.convert.padding.validate()?;
            pipeline::run_convert(&poses, &out, &cfg.convert)?;
            println!("tracks -> {}", out.display());
        }
        Command::Track {
            detections,
            out,
            iou_min,
            confirm_hits,
            max_misses,
        } => {
            if let Some(v) = iou_min {
                cfg.tracker.iou_min = v;
            }
            if let Some(v) = confirm_hits {
                cfg.tracker.confirm_hits = v;
            }
            if let Some(v) = max_misses {
                cfg.tracker.max_misses = v;
            }
            pipeline::run_track(&detections, &out, &cfg.tracker)?;
            println!("tracks -> {}", out.display());
        }
        Command::Evaluate {
            gt,
            pred,
            root,
            out_csv,
        } => {
            let reports = match &root {
                Some(root) => pipeline::evaluate_root(root, &gt, &pred, &cfg.eval, cli.jobs)?,
                None => vec![pipeline::run_evaluate(
                    gt.as_ref(),
                    pred.as_ref(),
                    &cfg.eval,
                )?],
            };
            let agg = metrics::aggregate(&reports, cfg.std_mode)?;
            print!("{}", metrics::per_sequence_table(&reports, &agg));
            if let Some(csv_path) = out_csv {
                io::write_atomic(&csv_path, metrics::report_csv(&reports, &agg).as_bytes())?;
                println!("report -> {}", csv_path.display());
            }
        }
        Command::Compare {
            root,
            gt,
            preds,
            out_csv,
            out_table,
        } => {
            let methods: Vec<CompareMethod> = preds
                .iter()
                .map(|entry| match entry.split_once('=') {
                    Some((label, name)) => CompareMethod {
                        label: label.to_string(),
                        pred_name: name.to_string(),
                    },
                    None => {
                        let label = std::path::Path::new(entry)
                            .file_stem()
                            .map(|s| s.to_string_lossy().into_owned())
                            .unwrap_or_else(|| entry.clone());
                        CompareMethod {
                            label,
                            pred_name: entry.clone(),
                        }
                    }
                })
                .collect();
            let (table, csv) =
                pipeline::run_compare(&root, &gt, &methods, &cfg.eval, cfg.std_mode, cli.jobs)?;
            print!("{table}");
            if let Some(p) = out_table {
                io::write_atomic(&p, table.as_bytes())?;
            }
            if let Some(p) = out_csv {
                io::write_atomic(&p, csv.as_bytes())?;
                println!("comparison -> {}", p.display());
            }
        }
    }
    Ok(())
}

fn main() -> ExitCode {
    let cli = match Cli::try_parse() {
        Ok(cli) => cli,
        Err(e) => {
            // clap's own exit-code convention differs; pin usage errors to 1.
            let _ = e.print();
            return match e.kind() {
                clap::error::ErrorKind::DisplayHelp | clap::error::ErrorKind::DisplayVersion => {
                    ExitCode::SUCCESS
                }
                _ => ExitCode::from(1),
            };
        }
    };
    match run(cli) {
        Ok(()) => ExitCode::SUCCESS,
        Err(e) => {
            eprintln!("error: {e}");
            ExitCode::from(if e.is_io() { 2 } else { 1 })
        }
    }
}
