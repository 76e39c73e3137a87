//! The toolkit config file and flag overrides.

use std::path::{Path, PathBuf};

use anyhow::{bail, Context};
use conv_core::detector::DEFAULT_ROUNDS;
use conv_core::{Aggregation, DetectorConfig, PerturbationSpec, Threshold, TrainConfig, TransformSpec};
use serde::{Deserialize, Serialize};

use crate::args::{DetectorArgs, GlobalArgs, TrainArgs};

pub const SCHEMA_VERSION: u32 = 1;

#[derive(Clone, Debug, PartialEq, Serialize, Deserialize)]
#[serde(default, deny_unknown_fields)]
pub struct DetectorSection {
    pub rounds: usize,
    pub threshold: Threshold,
    pub seed: u64,
    pub aggregation: Aggregation,
}

impl Default for DetectorSection {
    fn default() -> Self {
        DetectorSection {
            rounds: DEFAULT_ROUNDS,
            threshold: Threshold::Auto,
            seed: 0,
            aggregation: Aggregation::Mean,
        }
    }
}

#[derive(Clone, Debug, Default, PartialEq, Serialize, Deserialize)]
#[serde(default, deny_unknown_fields)]
pub struct EvalSection {
    /// Default grid for `sweep` when no perturbation flags are given.
    pub perturbations: Vec<PerturbationSpec>,
}

#[derive(Clone, Debug, PartialEq, Serialize, Deserialize)]
#[serde(default, deny_unknown_fields)]
pub struct ToolkitConfig {
    pub schema_version: u32,
    pub model: Option<PathBuf>,
    pub jobs: usize,
    pub transform: TransformSpec,
    pub detector: DetectorSection,
    pub trainer: TrainConfig,
    pub eval: EvalSection,
}

impl Default for ToolkitConfig {
    fn default() -> Self {
        ToolkitConfig {
            schema_version: SCHEMA_VERSION,
            model: None,
            jobs: 1,
            transform: TransformSpec::default(),
            detector: DetectorSection::default(),
            trainer: TrainConfig::default(),
            eval: EvalSection::default(),
        }
    }
}

impl ToolkitConfig {
    /// Read a TOML or JSON config. A run manifest is accepted too: its
    /// `config` snapshot is used.
    pub fn load(path: &Path) -> anyhow::Result<Self> {
        let text = std::fs::read_to_string(path).with_context(|| format!("reading config {}", path.display()))?;
        let is_json = path
            .extension()
            .and_then(|e| e.to_str())
            .is_some_and(|e| e.eq_ignore_ascii_case("json"));
        let config: ToolkitConfig = if is_json {
            let mut value: serde_json::Value =
                serde_json::from_str(&text).with_context(|| format!("parsing config {}", path.display()))?;
            if value.get("tool").is_some() {
                if let Some(snapshot) = value.get_mut("config") {
                    value = snapshot.take();
                }
            }
            serde_json::from_value(value).with_context(|| format!("parsing config {}", path.display()))?
        } else {
            toml::from_str(&text).with_context(|| format!("parsing config {}", path.display()))?
        };
        if config.schema_version != SCHEMA_VERSION {
            bail!(
                "{}: unsupported schema_version {} (expected {SCHEMA_VERSION})",
                path.display(),
                config.schema_version
            );
        }
        Ok(config)
    }

    pub fn resolve(global: &GlobalArgs) -> anyhow::Result<Self> {
        let mut config = match &global.config {
            Some(path) => Self::load(path)?,
            None => Self::default(),
        };
        if let Some(jobs) = global.jobs {
            config.jobs = jobs;
        }
        Ok(config)
    }

    pub fn apply_detector_args(&mut self, args: &DetectorArgs) {
        let d = &mut self.detector;
        if let Some(r) = args.rounds {
            d.rounds = r;
        }
        if let Some(s) = args.seed {
            d.seed = s;
        }
        if let Some(t) = args.threshold {
            d.threshold = t;
        }
        if let Some(a) = args.aggregation {
            d.aggregation = a.into();
        }
    }

    pub fn apply_train_args(&mut self, args: &TrainArgs) {
        let t = &mut self.trainer;
        if let Some(e) = args.epochs {
            t.epochs = e;
        }
        if let Some(s) = args.seed {
            t.seed = s;
        }
        if let Some(lr) = args.learning_rate {
            t.learning_rate = lr;
        }
        if let Some(b) = args.batch_size {
            t.batch_size = b;
        }
        if let Some(h) = args.hidden {
            t.flow.hidden = h;
        }
        if let Some(v) = args.val_fraction {
            t.val_fraction = v;
        }
        t.jobs = self.jobs;
    }

    pub fn detector_config(&self) -> DetectorConfig {
        DetectorConfig {
            rounds: self.detector.rounds,
            transform: self.transform.clone(),
            threshold: self.detector.threshold,
            seed: self.detector.seed,
            aggregation: self.detector.aggregation,
        }
    }

    /// Model path from the flag or environment, else the config file.
    pub fn model_path(&self, flag: Option<&PathBuf>) -> anyhow::Result<PathBuf> {
        match flag.or(self.model.as_ref()) {
            Some(p) => Ok(p.clone()),
            None => bail!("no backbone model given: use --model, CONV_MODEL or `model` in the config"),
        }
    }
}
