//! One JSON document configures every pipeline stage. Unknown keys are
//! rejected, missing keys take the documented defaults, and every
//! validation error names the offending key.

use std::collections::BTreeMap;
use std::path::Path;

use serde_json::{Map, Value};
use thiserror::Error;

use crate::convert::{ConversionMethod, PaddingConfig, SwitchThreshold};
use crate::metrics::{EvalConfig, StdMode};
use crate::sim::{DegradationConfig, ScenarioConfig, ScreenEvent};
use crate::tracker::TrackerConfig;
use crate::types::PlayerId;
use crate::vm::{VmConfig, VmQuantity};

#[derive(Debug, Error)]
pub enum ConfigError {
    #[error("config is not valid JSON: {0}")]
    Json(#[from] serde_json::Error),
    #[error("unknown key `{0}`")]
    UnknownKey(String),
    #[error("key `{key}`: {reason}")]
    InvalidValue { key: String, reason: String },
    #[error("{0}")]
    Io(#[from] crate::io::FileError),
}

#[derive(Debug, Clone, PartialEq)]
pub struct ConvertOptions {
    pub method: ConversionMethod,
    pub padding: PaddingConfig,
    pub threshold: SwitchThreshold,
}

impl Default for ConvertOptions {
    fn default() -> Self {
        ConvertOptions {
            method: ConversionMethod::Padding,
            padding: PaddingConfig::default(),
            threshold: SwitchThreshold::default(),
        }
    }
}

#[derive(Debug, Clone, PartialEq)]
pub struct SelectOptions {
    pub min_gap: usize,
}

impl Default for SelectOptions {
    fn default() -> Self {
        SelectOptions { min_gap: 5 }
    }
}

/// Everything the CLI reads from --config.
#[derive(Debug, Clone, PartialEq)]
pub struct PipelineConfig {
    pub vm: VmConfig,
    pub convert: ConvertOptions,
    pub tracker: TrackerConfig,
    pub select: SelectOptions,
    pub scenario: ScenarioConfig,
    pub degradation: DegradationConfig,
    /// Batch size for simulate; sequence k of a batch uses seed sim.seed + k.
    pub sequences: usize,
    pub eval: EvalConfig,
    pub std_mode: StdMode,
}

impl Default for PipelineConfig {
    fn default() -> Self {
        PipelineConfig {
            vm: VmConfig::default(),
            convert: ConvertOptions::default(),
            tracker: TrackerConfig::default(),
            select: SelectOptions::default(),
            scenario: ScenarioConfig::default(),
            degradation: DegradationConfig::default(),
            sequences: 21,
            eval: EvalConfig::default(),
            std_mode: StdMode::Sample,
        }
    }
}

fn err(key: &str, reason: impl Into<String>) -> ConfigError {
    ConfigError::InvalidValue {
        key: key.to_string(),
        reason: reason.into(),
    }
}

struct Section<'a> {
    prefix: &'static str,
    map: BTreeMap<&'a String, &'a Value>,
}

impl<'a> Section<'a> {
    fn new(prefix: &'static str, map: &'a Map<String, Value>) -> Section<'a> {
        Section {
            prefix,
            map: map.iter().collect(),
        }
    }

    fn key(&self, name: &str) -> String {
        if self.prefix.is_empty() {
            name.to_string()
        } else {
            format!("{}.{name}", self.prefix)
        }
    }

    fn take(&mut self, name: &str) -> Option<&'a Value> {
        self.map.remove(&name.to_string())
    }

    fn finish(self) -> Result<(), ConfigError> {
        if let Some((name, _)) = self.map.iter().next() {
            return Err(ConfigError::UnknownKey(self.key(name)));
        }
        Ok(())
    }

    fn f64(&mut self, name: &str, default: f64) -> Result<f64, ConfigError> {
        match self.take(name) {
            None => Ok(default),
            Some(v) => v
                .as_f64()
                .ok_or_else(|| err(&self.key(name), format!("expected a number, got {v}"))),
        }
    }

    fn u64(&mut self, name: &str, default: u64) -> Result<u64, ConfigError> {
        match self.take(name) {
            None => Ok(default),
            Some(v) => v.as_u64().ok_or_else(|| {
                err(
                    &self.key(name),
                    format!("expected a non-negative integer, got {v}"),
                )
            }),
        }
    }

    fn string(&mut self, name: &str, default: &str) -> Result<String, ConfigError> {
        match self.take(name) {
            None => Ok(default.to_string()),
            Some(v) => v
                .as_str()
                .map(str::to_string)
                .ok_or_else(|| err(&self.key(name), format!("expected a string, got {v}"))),
        }
    }
}

fn subsection<'a>(
    root: &mut Section<'a>,
    name: &'static str,
) -> Result<Option<&'a Map<String, Value>>, ConfigError> {
    match root.take(name) {
        None => Ok(None),
        Some(Value::Object(map)) => Ok(Some(map)),
        Some(other) => Err(err(name, format!("expected an object, got {other}"))),
    }
}

/// Parses and validates a config document. An empty object yields defaults.
pub fn parse_config(text: &str) -> Result<PipelineConfig, ConfigError> {
    let value: Value = serde_json::from_str(text)?;
    let Value::Object(root_map) = value else {
        return Err(err("<root>", "config must be a JSON object"));
    };
    let mut root = Section::new("", &root_map);
    let mut cfg = PipelineConfig::default();

    if let Some(map) = subsection(&mut root, "vm")? {
        let mut s = Section::new("vm", map);
        cfg.vm.size_px = s.u64("size_px", cfg.vm.size_px as u64)? as u32;
        if cfg.vm.size_px < 1 {
            return Err(err("vm.size_px", "must be >= 1"));
        }
        let quantity = s.u64("quantity", cfg.vm.quantity.count() as u64)?;
        cfg.vm.quantity = VmQuantity::from_count(quantity as u32)
            .map_err(|e| err("vm.quantity", e.to_string()))?;
        if let Some(v) = s.take("palette") {
            let Value::Object(entries) = v else {
                return Err(err("vm.palette", "expected an object of id -> [r,g,b]"));
            };
            let mut palette = BTreeMap::new();
            for (id_str, color) in entries {
                let key = format!("vm.palette.{id_str}");
                let id: u32 = id_str
                    .parse()
                    .map_err(|_| err(&key, "player id must be an integer"))?;
                let arr = color
                    .as_array()
                    .ok_or_else(|| err(&key, "expected [r,g,b]"))?;
                if arr.len() != 3 {
                    return Err(err(&key, "expected exactly three channel values"));
                }
                let mut rgb = [0u8; 3];
                for (slot, ch) in rgb.iter_mut().zip(arr) {
                    let n = ch
                        .as_u64()
                        .filter(|n| *n <= 255)
                        .ok_or_else(|| err(&key, "channels must be integers in 0..=255"))?;
                    *slot = n as u8;
                }
                palette.insert(PlayerId(id), rgb);
            }
            cfg.vm.palette = palette;
        }
        cfg.vm
            .validate()
            .map_err(|e| err("vm.palette", e.to_string()))?;
        s.finish()?;
    }

    if let Some(map) = subsection(&mut root, "convert")? {
        let mut s = Section::new("convert", map);
        let method = s.string("method", cfg.convert.method.as_str())?;
        cfg.convert.method = ConversionMethod::parse(&method).ok_or_else(|| {
            err(
                "convert.method",
                format!("expected `maxmin` or `padding`, got `{method}`"),
            )
        })?;
        cfg.convert.padding.pad_x_frac = s.f64("pad_x_frac", cfg.convert.padding.pad_x_frac)?;
        cfg.convert.padding.pad_top_frac =
            s.f64("pad_top_frac", cfg.convert.padding.pad_top_frac)?;
        cfg.convert.padding.pad_bottom_frac =
            s.f64("pad_bottom_frac", cfg.convert.padding.pad_bottom_frac)?;
        cfg.convert
            .padding
            .validate()
            .map_err(|e| err("convert.pad_x_frac", e.to_string()))?;
        let factor = s.f64("threshold_height_factor", 0.5)?;
        if !factor.is_finite() || factor <= 0.0 {
            return Err(err("convert.threshold_height_factor", "must be > 0"));
        }
        cfg.convert.threshold = SwitchThreshold::MedianHeight { factor };
        if let Some(v) = s.take("threshold_px") {
            let px = v.as_f64().ok_or_else(|| {
                err(
                    "convert.threshold_px",
                    format!("expected a number, got {v}"),
                )
            })?;
            if !px.is_finite() || px <= 0.0 {
                return Err(err("convert.threshold_px", "must be > 0"));
            }
            cfg.convert.threshold = SwitchThreshold::Absolute { px };
        }
        s.finish()?;
    }

    if let Some(map) = subsection(&mut root, "tracker")? {
        let mut s = Section::new("tracker", map);
        cfg.tracker.iou_min = s.f64("iou_min", cfg.tracker.iou_min)?;
        cfg.tracker.confirm_hits = s.u64("confirm_hits", cfg.tracker.confirm_hits as u64)? as u32;
        cfg.tracker.max_misses = s.u64("max_misses", cfg.tracker.max_misses as u64)? as u32;
        cfg.tracker
            .validate()
            .map_err(|e| err("tracker.iou_min", e.to_string()))?;
        s.finish()?;
    }

    if let Some(map) = subsection(&mut root, "select")? {
        let mut s = Section::new("select", map);
        cfg.select.min_gap = s.u64("min_gap", cfg.select.min_gap as u64)? as usize;
        s.finish()?;
    }

    if let Some(map) = subsection(&mut root, "sim")? {
        let mut s = Section::new("sim", map);
        cfg.scenario.players = s.u64("players", cfg.scenario.players as u64)? as u32;
        cfg.scenario.frames = s.u64("frames", cfg.scenario.frames as u64)? as usize;
        cfg.scenario.court_width = s.u64("court_width", cfg.scenario.court_width as u64)? as u32;
        cfg.scenario.court_height = s.u64("court_height", cfg.scenario.court_height as u64)? as u32;
        cfg.scenario.seed = s.u64("seed", cfg.scenario.seed)?;
        cfg.scenario.body_height_min = s.f64("body_height_min", cfg.scenario.body_height_min)?;
        cfg.scenario.body_height_max = s.f64("body_height_max", cfg.scenario.body_height_max)?;
        cfg.scenario.arm_extent_frac = s.f64("arm_extent_frac", cfg.scenario.arm_extent_frac)?;
        if let Some(v) = s.take("screen_events") {
            let arr = v.as_array().ok_or_else(|| {
                err(
                    "sim.screen_events",
                    "expected an array of [frame, player_a, player_b]",
                )
            })?;
            let mut events = Vec::new();
            for (i, entry) in arr.iter().enumerate() {
                let key = format!("sim.screen_events[{i}]");
                let triple = entry
                    .as_array()
                    .filter(|t| t.len() == 3)
                    .ok_or_else(|| err(&key, "expected [frame, player_a, player_b]"))?;
                let nums: Vec<u64> = triple
                    .iter()
                    .map(|n| n.as_u64())
                    .collect::<Option<_>>()
                    .ok_or_else(|| err(&key, "entries must be non-negative integers"))?;
                events.push(ScreenEvent {
                    frame: nums[0] as usize,
                    player_a: PlayerId(nums[1] as u32),
                    player_b: PlayerId(nums[2] as u32),
                });
            }
            cfg.scenario.screen_events = events;
        }
        cfg.degradation.keypoint_noise_px =
            s.f64("keypoint_noise_px", cfg.degradation.keypoint_noise_px)?;
        cfg.degradation.miss_rate = s.f64("miss_rate", cfg.degradation.miss_rate)?;
        cfg.degradation.detector_miss_rate =
            s.f64("detector_miss_rate", cfg.degradation.detector_miss_rate)?;
        cfg.degradation.id_swap_rate = s.f64("id_swap_rate", cfg.degradation.id_swap_rate)?;
        cfg.degradation.seed = cfg.scenario.seed;
        cfg.sequences = s.u64("sequences", cfg.sequences as u64)? as usize;
        if cfg.sequences == 0 {
            return Err(err("sim.sequences", "must be >= 1"));
        }
        cfg.scenario
            .validate()
            .map_err(|e| err("sim.players", e.to_string()))?;
        cfg.degradation
            .validate()
            .map_err(|e| err("sim.miss_rate", e.to_string()))?;
        s.finish()?;
    }

    if let Some(map) = subsection(&mut root, "eval")? {
        let mut s = Section::new("eval", map);
        cfg.eval.alpha_for_counts = s.f64("alpha_for_counts", cfg.eval.alpha_for_counts)?;
        if !(0.0..=1.0).contains(&cfg.eval.alpha_for_counts) {
            return Err(err("eval.alpha_for_counts", "must be in [0,1]"));
        }
        let std = s.string("std", "sample")?;
        cfg.std_mode = match std.as_str() {
            "sample" => StdMode::Sample,
            "population" => StdMode::Population,
            other => {
                return Err(err(
                    "eval.std",
                    format!("expected `sample` or `population`, got `{other}`"),
                ))
            }
        };
        s.finish()?;
    }

    root.finish()?;
    Ok(cfg)
}

pub fn read_config(path: &Path) -> Result<PipelineConfig, ConfigError> {
    let text = std::fs::read_to_string(path).map_err(|source| {
        ConfigError::Io(crate::io::FileError::Io {
            path: path.to_path_buf(),
            source,
        })
    })?;
    parse_config(&text)
}

/// Canonical JSON text: every section and key present, keys sorted.
pub fn config_string(cfg: &PipelineConfig) -> String {
    let mut root = Map::new();

    let mut vm = Map::new();
    vm.insert("size_px".into(), cfg.vm.size_px.into());
    vm.insert("quantity".into(), cfg.vm.quantity.count().into());
    let palette: Map<String, Value> = cfg
        .vm
        .palette
        .iter()
        .map(|(id, rgb)| (id.0.to_string(), Value::from(rgb.to_vec())))
        .collect();
    vm.insert("palette".into(), palette.into());
    root.insert("vm".into(), vm.into());

    let mut convert = Map::new();
    convert.insert("method".into(), cfg.convert.method.as_str().into());
    convert.insert("pad_x_frac".into(), cfg.convert.padding.pad_x_frac.into());
    convert.insert(
        "pad_top_frac".into(),
        cfg.convert.padding.pad_top_frac.into(),
    );
    convert.insert(
        "pad_bottom_frac".into(),
        cfg.convert.padding.pad_bottom_frac.into(),
    );
    match cfg.convert.threshold {
        SwitchThreshold::MedianHeight { factor } => {
            convert.insert("threshold_height_factor".into(), factor.into());
        }
        SwitchThreshold::Absolute { px } => {
            convert.insert("threshold_px".into(), px.into());
        }
    }
    root.insert("convert".into(), convert.into());

    let mut tracker = Map::new();
    tracker.insert("iou_min".into(), cfg.tracker.iou_min.into());
    tracker.insert("confirm_hits".into(), cfg.tracker.confirm_hits.into());
    tracker.insert("max_misses".into(), cfg.tracker.max_misses.into());
    root.insert("tracker".into(), tracker.into());

    let mut select = Map::new();
    select.insert("min_gap".into(), cfg.select.min_gap.into());
    root.insert("select".into(), select.into());

    let mut sim = Map::new();
    sim.insert("players".into(), cfg.scenario.players.into());
    sim.insert("frames".into(), cfg.scenario.frames.into());
    sim.insert("court_width".into(), cfg.scenario.court_width.into());
    sim.insert("court_height".into(), cfg.scenario.court_height.into());
    sim.insert("seed".into(), cfg.scenario.seed.into());
    sim.insert(
        "body_height_min".into(),
        cfg.scenario.body_height_min.into(),
    );
    sim.insert(
        "body_height_max".into(),
        cfg.scenario.body_height_max.into(),
    );
    sim.insert(
        "arm_extent_frac".into(),
        cfg.scenario.arm_extent_frac.into(),
    );
    let events: Vec<Value> = cfg
        .scenario
        .screen_events
        .iter()
        .map(|e| {
            Value::from(vec![
                e.frame as u64,
                e.player_a.0 as u64,
                e.player_b.0 as u64,
            ])
        })
        .collect();
    sim.insert("screen_events".into(), events.into());
    sim.insert(
        "keypoint_noise_px".into(),
        cfg.degradation.keypoint_noise_px.into(),
    );
    sim.insert("miss_rate".into(), cfg.degradation.miss_rate.into());
    sim.insert(
        "detector_miss_rate".into(),
        cfg.degradation.detector_miss_rate.into(),
    );
    sim.insert("id_swap_rate".into(), cfg.degradation.id_swap_rate.into());
    sim.insert("sequences".into(), cfg.sequences.into());
    root.insert("sim".into(), sim.into());

    let mut eval = Map::new();
    eval.insert("alpha_for_counts".into(), cfg.eval.alpha_for_counts.into());
    eval.insert(
        "std".into(),
        match cfg.std_mode {
            StdMode::Sample => "sample",
            StdMode::Population => "population",
        }
        .into(),
    );
    root.insert("eval".into(), eval.into());

    let mut text = serde_json::to_string_pretty(&Value::Object(root)).expect("valid json");
    text.push('\n');
    text
}
