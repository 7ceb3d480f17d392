//! Tracker configuration: per-category thresholds, solver and life-cycle
//! selection, and the `key = value` config-file grammar with environment
//! overrides.

use std::fmt;
use std::ops::{Index, IndexMut};
use std::path::Path;

use crate::error::{Error, Result};
use crate::types::Category;

/// A value for every [`Category`], indexed by the category's stable index.
#[derive(Debug, Clone, Copy, PartialEq)]
pub struct PerCategory<T>([T; Category::COUNT]);

impl<T> PerCategory<T> {
    pub fn new(values: [T; Category::COUNT]) -> Self {
        PerCategory(values)
    }

    pub fn iter(&self) -> impl Iterator<Item = (Category, &T)> {
        Category::ALL.iter().copied().zip(self.0.iter())
    }
}

impl<T: Copy> PerCategory<T> {
    pub fn uniform(value: T) -> Self {
        PerCategory([value; Category::COUNT])
    }
}

impl<T> Index<Category> for PerCategory<T> {
    type Output = T;
    fn index(&self, cat: Category) -> &T {
        &self.0[cat.index()]
    }
}

impl<T> IndexMut<Category> for PerCategory<T> {
    fn index_mut(&mut self, cat: Category) -> &mut T {
        &mut self.0[cat.index()]
    }
}

/// Data association solver.
#[derive(Debug, Clone, Copy, PartialEq, Eq)]
pub enum Solver {
    Hungarian,
    Greedy,
    Mnn,
    Dto,
}

impl Solver {
    pub const ALL: [Solver; 4] = [Solver::Hungarian, Solver::Greedy, Solver::Mnn, Solver::Dto];

    pub fn name(self) -> &'static str {
        match self {
            Solver::Hungarian => "hungarian",
            Solver::Greedy => "greedy",
            Solver::Mnn => "mnn",
            Solver::Dto => "dto",
        }
    }

    pub fn parse(token: &str) -> Option<Solver> {
        match token.to_ascii_lowercase().as_str() {
            "hungarian" => Some(Solver::Hungarian),
            "greedy" => Some(Solver::Greedy),
            "mnn" => Some(Solver::Mnn),
            "dto" => Some(Solver::Dto),
            _ => None,
        }
    }
}

impl fmt::Display for Solver {
    fn fmt(&self, f: &mut fmt::Formatter<'_>) -> fmt::Result {
        f.write_str(self.name())
    }
}

/// Motion model selection per category.
#[derive(Debug, Clone, Copy, PartialEq, Eq)]
pub enum MotionModelKind {
    Cv,
    Ctra,
    Bicycle,
}

impl MotionModelKind {
    pub fn name(self) -> &'static str {
        match self {
            MotionModelKind::Cv => "cv",
            MotionModelKind::Ctra => "ctra",
            MotionModelKind::Bicycle => "bicycle",
        }
    }

    pub fn parse(token: &str) -> Option<MotionModelKind> {
        match token.to_ascii_lowercase().as_str() {
            "cv" => Some(MotionModelKind::Cv),
            "ctra" => Some(MotionModelKind::Ctra),
            "bicycle" => Some(MotionModelKind::Bicycle),
            _ => None,
        }
    }
}

/// Track termination strategy.
#[derive(Debug, Clone, Copy, PartialEq, Eq)]
pub enum LifeCycleMode {
    /// Terminate after `max_age` consecutive misses.
    CountMaxAge,
    /// Terminate when the latest (decayed) score falls below the delete
    /// threshold.
    ConfidenceLatest,
    /// Terminate when the exponentially weighted average score falls below
    /// the delete threshold.
    ConfidenceAverage,
    /// Average-score termination with the max-age backstop.
    ConfidenceCountMixed,
}

impl LifeCycleMode {
    pub const ALL: [LifeCycleMode; 4] = [
        LifeCycleMode::CountMaxAge,
        LifeCycleMode::ConfidenceLatest,
        LifeCycleMode::ConfidenceAverage,
        LifeCycleMode::ConfidenceCountMixed,
    ];

    pub fn name(self) -> &'static str {
        match self {
            LifeCycleMode::CountMaxAge => "count_max_age",
            LifeCycleMode::ConfidenceLatest => "confidence_latest",
            LifeCycleMode::ConfidenceAverage => "confidence_average",
            LifeCycleMode::ConfidenceCountMixed => "confidence_count_mixed",
        }
    }

    pub fn parse(token: &str) -> Option<LifeCycleMode> {
        match token.to_ascii_lowercase().as_str() {
            "count_max_age" => Some(LifeCycleMode::CountMaxAge),
            "confidence_latest" => Some(LifeCycleMode::ConfidenceLatest),
            "confidence_average" => Some(LifeCycleMode::ConfidenceAverage),
            "confidence_count_mixed" => Some(LifeCycleMode::ConfidenceCountMixed),
            _ => None,
        }
    }
}

impl fmt::Display for LifeCycleMode {
    fn fmt(&self, f: &mut fmt::Formatter<'_>) -> fmt::Result {
        f.write_str(self.name())
    }
}

/// Overlap metric used by non-maximum suppression.
#[derive(Debug, Clone, Copy, PartialEq, Eq)]
pub enum NmsMetric {
    IouBev,
    Iou3d,
}

impl NmsMetric {
    pub fn name(self) -> &'static str {
        match self {
            NmsMetric::IouBev => "iou_bev",
            NmsMetric::Iou3d => "iou_3d",
        }
    }

    pub fn parse(token: &str) -> Option<NmsMetric> {
        match token.to_ascii_lowercase().as_str() {
            "iou_bev" => Some(NmsMetric::IouBev),
            "iou_3d" => Some(NmsMetric::Iou3d),
            _ => None,
        }
    }
}

/// Every tunable of the tracking pipeline.
#[derive(Debug, Clone, PartialEq)]
pub struct TrackerConfig {
    /// Score-filter threshold per category; detections below are dropped.
    pub sf_threshold: PerCategory<f64>,
    /// NMS overlap threshold per category.
    pub nms_threshold: PerCategory<f64>,
    /// First-stage association gate per category (cost scale).
    pub assoc_threshold: PerCategory<f64>,
    /// Per-miss score decay per category.
    pub decay_rate: PerCategory<f64>,
    /// Soft-termination score threshold per category.
    pub delete_threshold: PerCategory<f64>,
    /// Overlap metric used by NMS per category.
    pub nms_metric: PerCategory<NmsMetric>,
    /// Pre-NMS footprint scaling per category; 1.0 disables.
    pub scale_nms_factor: PerCategory<f64>,
    /// Motion model per category.
    pub motion_model: PerCategory<MotionModelKind>,

    /// Max consecutive misses before count-based termination.
    pub max_age: u32,
    /// Weight of the newest score in the running average.
    pub ewma_alpha: f64,
    /// Spatial gating cell size in meters.
    pub voxel_size: f64,
    /// Likelihood-ratio pruning threshold for association hypotheses.
    pub mht_prune_alpha: f64,
    /// Number of association hypotheses kept per category.
    pub mht_top_k: usize,
    /// Effective wheelbase as a fraction of box length.
    pub wheelbase_ratio: f64,
    /// Rear-axle offset as a fraction of box length.
    pub rear_tire_ratio: f64,
    pub solver: Solver,
    /// Enables residual/velocity-driven scaling of R and Q.
    pub adaptive_noise: bool,
    /// Weights Kalman updates by the detection score.
    pub confidence_weighting: bool,
    /// Matches required before a tentative track is confirmed.
    pub min_hits_to_confirm: u32,
    pub life_cycle_mode: LifeCycleMode,
    /// Emit only confirmed tracks (standard submission practice).
    pub confirmed_only: bool,
    /// Second-stage gate on normalized center distance.
    pub stage2_gate: f64,
    /// Normalization divisor (meters) for the second-stage distance cost.
    pub stage2_distance_norm: f64,

    /// Initial position variance (m^2) on each position channel.
    pub init_pos_var: f64,
    /// Initial variance on angular channels (rad^2).
    pub init_yaw_var: f64,
    /// Initial variance on speed/acceleration channels ((m/s)^2).
    pub init_speed_var: f64,
    /// Diagonal process noise per state channel.
    pub process_noise: f64,
    /// Diagonal measurement noise per measurement channel.
    pub measurement_noise: f64,
    /// Default frame period in seconds (keyframe rate 2 Hz).
    pub frame_period: f64,
}

impl Default for TrackerConfig {
    fn default() -> Self {
        default_config()
    }
}

/// The tuned per-category configuration.
pub fn default_config() -> TrackerConfig {
    use Category::*;
    let mut sf = PerCategory::uniform(0.0);
    sf[Bicycle] = 0.15;
    sf[Car] = 0.16;
    sf[Motorcycle] = 0.16;
    sf[Bus] = 0.12;
    sf[Trailer] = 0.13;
    sf[Truck] = 0.0;
    sf[Pedestrian] = 0.13;

    let mut assoc = PerCategory::uniform(0.0);
    assoc[Bicycle] = 1.6;
    assoc[Motorcycle] = 1.6;
    assoc[Bus] = 1.6;
    assoc[Car] = 1.2;
    assoc[Truck] = 1.2;
    assoc[Trailer] = 1.16;
    assoc[Pedestrian] = 1.78;

    let mut decay = PerCategory::uniform(0.0);
    decay[Pedestrian] = 0.18;
    decay[Car] = 0.26;
    decay[Truck] = 0.28;
    decay[Motorcycle] = 0.28;
    decay[Trailer] = 0.22;
    decay[Bicycle] = 0.24;
    decay[Bus] = 0.24;

    let mut delete = PerCategory::uniform(0.04);
    delete[Bus] = 0.08;
    delete[Pedestrian] = 0.1;

    let mut motion = PerCategory::uniform(MotionModelKind::Ctra);
    motion[Bicycle] = MotionModelKind::Bicycle;
    motion[Motorcycle] = MotionModelKind::Bicycle;
    motion[Pedestrian] = MotionModelKind::Cv;

    TrackerConfig {
        sf_threshold: sf,
        nms_threshold: PerCategory::uniform(0.08),
        assoc_threshold: assoc,
        decay_rate: decay,
        delete_threshold: delete,
        nms_metric: PerCategory::uniform(NmsMetric::IouBev),
        scale_nms_factor: PerCategory::uniform(1.0),
        motion_model: motion,
        max_age: 20,
        ewma_alpha: 0.2,
        voxel_size: 5.0,
        mht_prune_alpha: 0.01,
        mht_top_k: 3,
        wheelbase_ratio: 0.6,
        rear_tire_ratio: 0.3,
        solver: Solver::Dto,
        adaptive_noise: true,
        confidence_weighting: true,
        min_hits_to_confirm: 2,
        life_cycle_mode: LifeCycleMode::ConfidenceCountMixed,
        confirmed_only: true,
        stage2_gate: 1.0,
        stage2_distance_norm: 10.0,
        init_pos_var: 1.0,
        init_yaw_var: 0.1,
        init_speed_var: 10.0,
        process_noise: 0.1,
        measurement_noise: 0.1,
        frame_period: 0.5,
    }
}

/// A single configuration invariant violation.
#[derive(Debug, Clone, PartialEq, Eq)]
pub struct ConfigError {
    pub field: String,
    pub message: String,
}

impl fmt::Display for ConfigError {
    fn fmt(&self, f: &mut fmt::Formatter<'_>) -> fmt::Result {
        write!(f, "{}: {}", self.field, self.message)
    }
}

/// Returns one error per violated field; empty means the config is valid.
pub fn validate_config(cfg: &TrackerConfig) -> Vec<ConfigError> {
    let mut errors = Vec::new();
    let check_per_category =
        |name: &str, map: &PerCategory<f64>, errors: &mut Vec<ConfigError>| {
            for (cat, &v) in map.iter() {
                if !v.is_finite() || v < 0.0 {
                    errors.push(ConfigError {
                        field: format!("{name}.{cat}"),
                        message: format!("must be finite and non-negative, got {v}"),
                    });
                }
            }
        };
    check_per_category("sf_threshold", &cfg.sf_threshold, &mut errors);
    check_per_category("nms_threshold", &cfg.nms_threshold, &mut errors);
    check_per_category("assoc_threshold", &cfg.assoc_threshold, &mut errors);
    check_per_category("decay_rate", &cfg.decay_rate, &mut errors);
    check_per_category("delete_threshold", &cfg.delete_threshold, &mut errors);

    for (cat, &v) in cfg.scale_nms_factor.iter() {
        if !v.is_finite() || v <= 0.0 {
            errors.push(ConfigError {
                field: format!("scale_nms_factor.{cat}"),
                message: format!("must be finite and positive, got {v}"),
            });
        }
    }

    let mut require = |field: &str, ok: bool, message: String| {
        if !ok {
            errors.push(ConfigError {
                field: field.to_string(),
                message,
            });
        }
    };
    require(
        "ewma_alpha",
        cfg.ewma_alpha > 0.0 && cfg.ewma_alpha < 1.0,
        format!("must lie in (0, 1), got {}", cfg.ewma_alpha),
    );
    require(
        "max_age",
        cfg.max_age >= 1,
        format!("must be >= 1, got {}", cfg.max_age),
    );
    require(
        "voxel_size",
        cfg.voxel_size.is_finite() && cfg.voxel_size > 0.0,
        format!("must be positive, got {}", cfg.voxel_size),
    );
    require(
        "mht_prune_alpha",
        cfg.mht_prune_alpha > 0.0 && cfg.mht_prune_alpha <= 1.0,
        format!("must lie in (0, 1], got {}", cfg.mht_prune_alpha),
    );
    require(
        "mht_top_k",
        cfg.mht_top_k >= 1,
        format!("must be >= 1, got {}", cfg.mht_top_k),
    );
    require(
        "wheelbase_ratio",
        cfg.wheelbase_ratio.is_finite() && cfg.wheelbase_ratio > 0.0,
        format!("must be positive, got {}", cfg.wheelbase_ratio),
    );
    require(
        "rear_tire_ratio",
        cfg.rear_tire_ratio.is_finite() && cfg.rear_tire_ratio > 0.0,
        format!("must be positive, got {}", cfg.rear_tire_ratio),
    );
    require(
        "min_hits_to_confirm",
        cfg.min_hits_to_confirm >= 1,
        format!("must be >= 1, got {}", cfg.min_hits_to_confirm),
    );
    require(
        "stage2_gate",
        cfg.stage2_gate.is_finite() && cfg.stage2_gate > 0.0,
        format!("must be positive, got {}", cfg.stage2_gate),
    );
    require(
        "stage2_distance_norm",
        cfg.stage2_distance_norm.is_finite() && cfg.stage2_distance_norm > 0.0,
        format!("must be positive, got {}", cfg.stage2_distance_norm),
    );
    for (field, value) in [
        ("init_pos_var", cfg.init_pos_var),
        ("init_yaw_var", cfg.init_yaw_var),
        ("init_speed_var", cfg.init_speed_var),
        ("process_noise", cfg.process_noise),
        ("measurement_noise", cfg.measurement_noise),
        ("frame_period", cfg.frame_period),
    ] {
        require(
            field,
            value.is_finite() && value > 0.0,
            format!("must be positive, got {value}"),
        );
    }
    errors
}

/// Environment variable prefix for config overrides; a key `a.b` maps to
/// `POLYTRACK_A__B`.
pub const ENV_PREFIX: &str = "POLYTRACK_";

fn env_name(key: &str) -> String {
    format!("{ENV_PREFIX}{}", key.replace('.', "__").to_ascii_uppercase())
}

/// Splits `key = value` lines, dropping blanks and `#` comments. Returns
/// (line number, key, value) triples.
pub(crate) fn parse_kv_lines(text: &str) -> Result<Vec<(usize, String, String)>> {
    let mut entries = Vec::new();
    for (idx, raw) in text.lines().enumerate() {
        let line_no = idx + 1;
        let line = match raw.find('#') {
            Some(pos) => &raw[..pos],
            None => raw,
        }
        .trim();
        if line.is_empty() {
            continue;
        }
        let (key, value) = line.split_once('=').ok_or_else(|| Error::Parse {
            line: line_no,
            message: format!("expected 'key = value', got '{line}'"),
        })?;
        entries.push((line_no, key.trim().to_string(), value.trim().to_string()));
    }
    Ok(entries)
}

impl TrackerConfig {
    /// Parses a config file body on top of the defaults.
    pub fn from_str(text: &str) -> Result<TrackerConfig> {
        let mut cfg = default_config();
        for (line, key, value) in parse_kv_lines(text)? {
            cfg.apply_key(&key, &value)
                .map_err(|message| Error::Parse { line, message })?;
        }
        Ok(cfg)
    }

    pub fn from_file(path: &Path) -> Result<TrackerConfig> {
        let text = std::fs::read_to_string(path)?;
        TrackerConfig::from_str(&text)
    }

    /// Applies `POLYTRACK_*` environment overrides on top of this config.
    pub fn apply_env_overrides(&mut self) -> Result<()> {
        for key in Self::known_keys() {
            if let Ok(value) = std::env::var(env_name(&key)) {
                self.apply_key(&key, &value)
                    .map_err(|message| Error::Config(format!("{}: {message}", env_name(&key))))?;
            }
        }
        Ok(())
    }

    fn known_keys() -> Vec<String> {
        let mut keys = Vec::new();
        for field in [
            "sf_threshold",
            "nms_threshold",
            "assoc_threshold",
            "decay_rate",
            "delete_threshold",
            "nms_metric",
            "scale_nms_factor",
            "motion_model",
        ] {
            for cat in Category::ALL {
                keys.push(format!("{field}.{cat}"));
            }
        }
        keys.extend(
            [
                "max_age",
                "ewma_alpha",
                "voxel_size",
                "mht_prune_alpha",
                "mht_top_k",
                "wheelbase_ratio",
                "rear_tire_ratio",
                "solver",
                "adaptive_noise",
                "confidence_weighting",
                "min_hits_to_confirm",
                "life_cycle_mode",
                "confirmed_only",
                "stage2_gate",
                "stage2_distance_norm",
                "init_pos_var",
                "init_yaw_var",
                "init_speed_var",
                "process_noise",
                "measurement_noise",
                "frame_period",
            ]
            .map(String::from),
        );
        keys
    }

    fn apply_key(&mut self, key: &str, value: &str) -> std::result::Result<(), String> {
        fn parse_f64(value: &str) -> std::result::Result<f64, String> {
            value
                .parse::<f64>()
                .map_err(|_| format!("invalid number '{value}'"))
        }
        fn parse_bool(value: &str) -> std::result::Result<bool, String> {
            match value {
                "true" | "1" | "on" => Ok(true),
                "false" | "0" | "off" => Ok(false),
                _ => Err(format!("invalid boolean '{value}'")),
            }
        }

        if let Some((section, cat_token)) = key.split_once('.') {
            let cat = Category::parse(cat_token)
                .ok_or_else(|| format!("unknown category '{cat_token}'"))?;
            match section {
                "sf_threshold" => self.sf_threshold[cat] = parse_f64(value)?,
                "nms_threshold" => self.nms_threshold[cat] = parse_f64(value)?,
                "assoc_threshold" => self.assoc_threshold[cat] = parse_f64(value)?,
                "decay_rate" => self.decay_rate[cat] = parse_f64(value)?,
                "delete_threshold" => self.delete_threshold[cat] = parse_f64(value)?,
                "scale_nms_factor" => self.scale_nms_factor[cat] = parse_f64(value)?,
                "nms_metric" => {
                    self.nms_metric[cat] = NmsMetric::parse(value)
                        .ok_or_else(|| format!("unknown NMS metric '{value}'"))?
                }
                "motion_model" => {
                    self.motion_model[cat] = MotionModelKind::parse(value)
                        .ok_or_else(|| format!("unknown motion model '{value}'"))?
                }
                _ => return Err(format!("unknown config key '{key}'")),
            }
            return Ok(());
        }

        match key {
            "max_age" => {
                self.max_age = value
                    .parse()
                    .map_err(|_| format!("invalid integer '{value}'"))?
            }
            "ewma_alpha" => self.ewma_alpha = parse_f64(value)?,
            "voxel_size" => self.voxel_size = parse_f64(value)?,
            "mht_prune_alpha" => self.mht_prune_alpha = parse_f64(value)?,
            "mht_top_k" => {
                self.mht_top_k = value
                    .parse()
                    .map_err(|_| format!("invalid integer '{value}'"))?
            }
            "wheelbase_ratio" => self.wheelbase_ratio = parse_f64(value)?,
            "rear_tire_ratio" => self.rear_tire_ratio = parse_f64(value)?,
            "solver" => {
                self.solver =
                    Solver::parse(value).ok_or_else(|| format!("unknown solver '{value}'"))?
            }
            "adaptive_noise" => self.adaptive_noise = parse_bool(value)?,
            "confidence_weighting" => self.confidence_weighting = parse_bool(value)?,
            "min_hits_to_confirm" => {
                self.min_hits_to_confirm = value
                    .parse()
                    .map_err(|_| format!("invalid integer '{value}'"))?
            }
            "life_cycle_mode" => {
                self.life_cycle_mode = LifeCycleMode::parse(value)
                    .ok_or_else(|| format!("unknown life-cycle mode '{value}'"))?
            }
            "confirmed_only" => self.confirmed_only = parse_bool(value)?,
            "stage2_gate" => self.stage2_gate = parse_f64(value)?,
            "stage2_distance_norm" => self.stage2_distance_norm = parse_f64(value)?,
            "init_pos_var" => self.init_pos_var = parse_f64(value)?,
            "init_yaw_var" => self.init_yaw_var = parse_f64(value)?,
            "init_speed_var" => self.init_speed_var = parse_f64(value)?,
            "process_noise" => self.process_noise = parse_f64(value)?,
            "measurement_noise" => self.measurement_noise = parse_f64(value)?,
            "frame_period" => self.frame_period = parse_f64(value)?,
            _ => return Err(format!("unknown config key '{key}'")),
        }
        Ok(())
    }
}
