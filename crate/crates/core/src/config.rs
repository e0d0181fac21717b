//! Run configuration: one flat JSON document holding every pipeline setting.
//!
//! [`validate_config`] rejects unknown keys, fills defaults and reports all
//! problems at once.

use std::fmt;
use std::path::PathBuf;

use serde::de::DeserializeOwned;
use serde::{Deserialize, Serialize};
use serde_json::{Map, Value};

use crate::explain::{ExplainParams, Method};
use crate::nn::HeadConfig;
use crate::trainer::{Monitor, TrainConfig};
use crate::{Error, Label, Result};

#[derive(Debug, Clone, PartialEq, Eq)]
pub struct ConfigError {
    pub field: String,
    pub message: String,
}

impl ConfigError {
    fn new(field: &str, message: impl Into<String>) -> Self {
        Self {
            field: field.to_string(),
            message: message.into(),
        }
    }
}

impl fmt::Display for ConfigError {
    fn fmt(&self, f: &mut fmt::Formatter<'_>) -> fmt::Result {
        write!(f, "{}: {}", self.field, self.message)
    }
}

/// Face detector selection: `"marker"` for the built-in marker detector, or
/// `"command:<program> [args…]"` for an external detector.
#[derive(Debug, Clone, PartialEq, Eq)]
pub enum DetectorSpec {
    Marker,
    Command(Vec<String>),
}

impl DetectorSpec {
    pub fn parse(s: &str) -> std::result::Result<Self, String> {
        if s == "marker" {
            return Ok(DetectorSpec::Marker);
        }
        match s.strip_prefix("command:") {
            Some(rest) => {
                let argv: Vec<String> = rest.split_whitespace().map(str::to_string).collect();
                if argv.is_empty() {
                    Err("command detector needs a program".to_string())
                } else {
                    Ok(DetectorSpec::Command(argv))
                }
            }
            None => Err(format!("expected `marker` or `command:<program>`, got `{s}`")),
        }
    }
}

#[derive(Debug, Clone, PartialEq, Serialize, Deserialize)]
pub struct RunConfig {
    pub run_id: String,
    pub real_dir: PathBuf,
    pub fake_dir: PathBuf,
    pub out_dir: PathBuf,
    pub max_epochs: usize,
    /// Report corrupted videos without deleting them.
    pub dry_run: bool,
    pub target_fps: f64,
    pub window: usize,
    pub order: usize,
    pub detector: String,
    pub ratios: [f64; 3],
    pub seed: u64,
    pub dense_units: usize,
    pub dropout_rate: f64,
    pub lr0: f64,
    pub batch_size: usize,
    pub plateau_patience: usize,
    pub plateau_factor: f64,
    pub min_lr: f64,
    pub fine_tune: bool,
    pub methods: Vec<Method>,
    pub class: Label,
    pub n: usize,
    pub sigma: f64,
    pub top_k: usize,
    /// Test crops explained per method.
    pub explain_samples: usize,
    /// Preprocessing worker threads.
    pub workers: usize,
}

pub const REQUIRED_FIELDS: [&str; 4] = ["real_dir", "fake_dir", "out_dir", "max_epochs"];

/// Defaults for every optional field, as a JSON object.
pub fn defaults() -> Map<String, Value> {
    let v = serde_json::json!({
        "run_id": "default",
        "dry_run": false,
        "target_fps": 30.0,
        "window": crate::keyframe::DEFAULT_WINDOW,
        "order": crate::keyframe::DEFAULT_ORDER,
        "detector": "marker",
        "ratios": [0.8, 0.1, 0.1],
        "seed": 0,
        "dense_units": 256,
        "dropout_rate": 0.5,
        "lr0": 1e-3,
        "batch_size": 16,
        "plateau_patience": 3,
        "plateau_factor": 0.5,
        "min_lr": 1e-6,
        "fine_tune": false,
        "methods": Method::ALL,
        "class": "fake",
        "n": crate::explain::DEFAULT_SAMPLES,
        "sigma": crate::explain::DEFAULT_SIGMA,
        "top_k": crate::explain::DEFAULT_TOP_K,
        "explain_samples": 1,
        "workers": 4,
    });
    match v {
        Value::Object(m) => m,
        _ => unreachable!(),
    }
}

/// Every key a config document may contain.
pub fn known_fields() -> Vec<String> {
    let mut keys: Vec<String> = REQUIRED_FIELDS.iter().map(|s| s.to_string()).collect();
    keys.extend(defaults().keys().cloned());
    keys
}

struct Fields {
    map: Map<String, Value>,
    errors: Vec<ConfigError>,
}

impl Fields {
    fn get<T: DeserializeOwned + Default>(&mut self, name: &str) -> T {
        match self.map.get(name) {
            None => T::default(),
            Some(v) => serde_json::from_value(v.clone()).unwrap_or_else(|e| {
                self.errors.push(ConfigError::new(name, format!("wrong type: {e}")));
                T::default()
            }),
        }
    }

    fn check(&mut self, name: &str, ok: bool, constraint: &str) {
        if !ok && self.map.contains_key(name) {
            self.errors.push(ConfigError::new(name, constraint));
        }
    }
}

/// Normalises a config document, or returns every problem found.
pub fn validate_config(document: &Value) -> std::result::Result<RunConfig, Vec<ConfigError>> {
    let Value::Object(doc) = document else {
        return Err(vec![ConfigError::new("<document>", "must be a JSON object")]);
    };
    let mut errors = Vec::new();
    let known = known_fields();
    for key in doc.keys() {
        if !known.contains(key) {
            errors.push(ConfigError::new(key, "unknown field"));
        }
    }
    for field in REQUIRED_FIELDS {
        if doc.get(field).is_none_or(Value::is_null) {
            errors.push(ConfigError::new(field, "required field is missing"));
        }
    }
    let mut map = defaults();
    for (k, v) in doc {
        if known.contains(k) && !v.is_null() {
            map.insert(k.clone(), v.clone());
        }
    }
    let mut f = Fields { map, errors };
    let mut cfg = RunConfig {
        run_id: f.get("run_id"),
        real_dir: f.get("real_dir"),
        fake_dir: f.get("fake_dir"),
        out_dir: f.get("out_dir"),
        max_epochs: f.get("max_epochs"),
        dry_run: f.get("dry_run"),
        target_fps: f.get("target_fps"),
        window: f.get("window"),
        order: f.get("order"),
        detector: f.get("detector"),
        ratios: f.get("ratios"),
        seed: f.get("seed"),
        dense_units: f.get("dense_units"),
        dropout_rate: f.get("dropout_rate"),
        lr0: f.get("lr0"),
        batch_size: f.get("batch_size"),
        plateau_patience: f.get("plateau_patience"),
        plateau_factor: f.get("plateau_factor"),
        min_lr: f.get("min_lr"),
        fine_tune: f.get("fine_tune"),
        methods: f.get("methods"),
        class: Label::Fake,
        n: f.get("n"),
        sigma: f.get("sigma"),
        top_k: f.get("top_k"),
        explain_samples: f.get("explain_samples"),
        workers: f.get("workers"),
    };
    let class: Option<Label> = f.get("class");
    cfg.class = class.unwrap_or(Label::Fake);

    let run_id_ok = !cfg.run_id.is_empty()
        && cfg.run_id.chars().all(|c| c.is_ascii_alphanumeric() || "-_.".contains(c))
        && cfg.run_id != "."
        && cfg.run_id != "..";
    f.check("run_id", run_id_ok, "must be a non-empty name of letters, digits, `-`, `_` or `.`");
    f.check("max_epochs", cfg.max_epochs >= 1, "must be at least 1");
    f.check("target_fps", cfg.target_fps > 0.0 && cfg.target_fps.is_finite(), "must be a positive number");
    f.check("window", cfg.window % 2 == 1, "must be odd");
    f.check("order", cfg.order >= 1, "must be at least 1");
    let detector = DetectorSpec::parse(&cfg.detector);
    if let Err(msg) = &detector {
        f.check("detector", false, msg);
    }
    f.check(
        "ratios",
        cfg.ratios.iter().all(|&r| r > 0.0) && (cfg.ratios.iter().sum::<f64>() - 1.0).abs() <= 1e-9,
        "must be three positive numbers summing to 1 within 1e-9",
    );
    f.check("dense_units", cfg.dense_units >= 1, "must be at least 1");
    f.check("dropout_rate", (0.0..1.0).contains(&cfg.dropout_rate), "must lie in [0, 1)");
    f.check("lr0", cfg.lr0 > 0.0 && cfg.lr0.is_finite(), "must be a positive number");
    f.check("batch_size", cfg.batch_size >= 1, "must be at least 1");
    f.check("plateau_patience", cfg.plateau_patience >= 1, "must be at least 1");
    f.check("plateau_factor", cfg.plateau_factor > 0.0 && cfg.plateau_factor < 1.0, "must lie in (0, 1)");
    f.check("min_lr", cfg.min_lr >= 0.0 && cfg.min_lr.is_finite(), "must be non-negative");
    f.check("methods", !cfg.methods.is_empty(), "must name at least one method");
    f.check("n", cfg.n >= 1, "must be at least 1");
    f.check("sigma", cfg.sigma >= 0.0 && cfg.sigma.is_finite(), "must be non-negative");
    f.check("top_k", cfg.top_k >= 1, "must be at least 1");
    f.check("explain_samples", cfg.explain_samples >= 1, "must be at least 1");
    f.check("workers", cfg.workers >= 1, "must be at least 1");

    if f.errors.is_empty() {
        Ok(cfg)
    } else {
        Err(f.errors)
    }
}

/// Reads and validates a JSON config file.
pub fn load_config(path: &std::path::Path) -> Result<RunConfig> {
    let text = std::fs::read_to_string(path).map_err(|e| Error::io(path, e))?;
    let doc: Value = serde_json::from_str(&text)?;
    validate_config(&doc).map_err(Error::Config)
}

impl RunConfig {
    pub fn run_dir(&self) -> PathBuf {
        self.out_dir.join(&self.run_id)
    }

    pub fn detector_spec(&self) -> DetectorSpec {
        DetectorSpec::parse(&self.detector).unwrap_or(DetectorSpec::Marker)
    }

    pub fn head_config(&self) -> HeadConfig {
        HeadConfig {
            dense_units: self.dense_units,
            dropout_rate: self.dropout_rate,
            classes: 2,
        }
    }

    pub fn train_config(&self) -> TrainConfig {
        TrainConfig {
            lr0: self.lr0,
            batch_size: self.batch_size,
            max_epochs: self.max_epochs,
            plateau_patience: self.plateau_patience,
            plateau_factor: self.plateau_factor,
            min_lr: self.min_lr,
            seed: self.seed,
            monitor: Monitor::ValLoss,
            fine_tune: self.fine_tune,
        }
    }

    pub fn explain_params(&self) -> ExplainParams {
        ExplainParams {
            samples: self.n,
            sigma: self.sigma,
            top_k: self.top_k,
            seed: self.seed,
            layer: None,
        }
    }
}
