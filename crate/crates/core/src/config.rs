use std::path::Path;

use serde::{Deserialize, Serialize};

use crate::error::{Error, Result};
use crate::features::StftConfig;
use crate::metrics::FitnessWeights;
use crate::postproc::PostprocConfig;
use crate::qiga::QigaConfig;

#[derive(Debug, Clone, PartialEq, Serialize, Deserialize)]
#[serde(deny_unknown_fields, default)]
pub struct MaskConfig {
    pub n_bands: usize,
}

impl Default for MaskConfig {
    fn default() -> Self {
        MaskConfig { n_bands: 16 }
    }
}

#[derive(Debug, Clone, PartialEq, Serialize, Deserialize)]
#[serde(deny_unknown_fields, default)]
pub struct FeatureConfig {
    pub frame_len: usize,
    pub hop: usize,
    pub n_mels: usize,
    pub n_mfcc: usize,
    /// Run the encoding circuit over every frame and report the mean
    /// fidelity between consecutive frames.
    pub encode: bool,
}

impl Default for FeatureConfig {
    fn default() -> Self {
        FeatureConfig {
            frame_len: 1024,
            hop: 512,
            n_mels: 40,
            n_mfcc: 13,
            encode: true,
        }
    }
}

impl FeatureConfig {
    pub fn stft(&self, sample_rate: u32) -> Result<StftConfig> {
        StftConfig::new(self.frame_len, self.hop, sample_rate)
    }
}

#[derive(Debug, Clone, PartialEq, Serialize, Deserialize)]
#[serde(deny_unknown_fields, default)]
pub struct IoConfig {
    pub write_sources: bool,
    pub write_trace: bool,
}

impl Default for IoConfig {
    fn default() -> Self {
        IoConfig {
            write_sources: true,
            write_trace: true,
        }
    }
}

#[derive(Debug, Clone, Copy, PartialEq, Eq, Serialize, Deserialize)]
#[serde(rename_all = "kebab-case")]
pub enum ExperimentMode {
    /// Optimize masks separately for every mixture.
    Supervised,
    /// Optimize one mask on the train split, report on the test split.
    Transfer,
    /// Transfer mode repeated over subsampled train splits.
    DataSize,
}

#[derive(Debug, Clone, Copy, PartialEq, Eq, Serialize, Deserialize)]
#[serde(rename_all = "kebab-case")]
pub enum RecipeKind {
    BandDisjoint,
    OverlappingBands,
    MovingGain,
}

impl std::str::FromStr for RecipeKind {
    type Err = Error;

    fn from_str(s: &str) -> Result<Self> {
        match s {
            "band-disjoint" => Ok(RecipeKind::BandDisjoint),
            "overlapping-bands" => Ok(RecipeKind::OverlappingBands),
            "moving-gain" => Ok(RecipeKind::MovingGain),
            other => Err(Error::Config(format!(
                "unknown recipe {other:?}; expected band-disjoint, overlapping-bands or moving-gain"
            ))),
        }
    }
}

impl std::str::FromStr for ExperimentMode {
    type Err = Error;

    fn from_str(s: &str) -> Result<Self> {
        match s {
            "supervised" => Ok(ExperimentMode::Supervised),
            "transfer" => Ok(ExperimentMode::Transfer),
            "data-size" => Ok(ExperimentMode::DataSize),
            other => Err(Error::Config(format!(
                "unknown mode {other:?}; expected supervised, transfer or data-size"
            ))),
        }
    }
}

#[derive(Debug, Clone, PartialEq, Serialize, Deserialize)]
#[serde(deny_unknown_fields, default)]
pub struct ExperimentConfig {
    pub mode: ExperimentMode,
    pub recipe: RecipeKind,
    /// Number of synthetic mixtures when no manifest is given.
    pub count: usize,
    pub n_sources: usize,
    pub snr_db: f64,
    pub duration_s: f64,
    pub sample_rate: u32,
    /// Band overlap of the overlapping-bands recipe, in units of band width.
    pub overlap: f64,
    pub split: [f64; 3],
    pub fractions: Vec<f64>,
    pub seed: u64,
}

impl Default for ExperimentConfig {
    fn default() -> Self {
        ExperimentConfig {
            mode: ExperimentMode::Supervised,
            recipe: RecipeKind::BandDisjoint,
            count: 1,
            n_sources: 2,
            snr_db: 10.0,
            duration_s: 1.0,
            sample_rate: 16000,
            overlap: 0.3,
            split: [0.8, 0.1, 0.1],
            fractions: vec![0.1, 0.25, 0.5, 0.75],
            seed: 0,
        }
    }
}

#[derive(Debug, Clone, Default, PartialEq, Serialize, Deserialize)]
#[serde(deny_unknown_fields, default)]
pub struct Config {
    pub qiga: QigaConfig,
    pub masks: MaskConfig,
    pub features: FeatureConfig,
    pub postproc: PostprocConfig,
    pub metrics: FitnessWeights,
    pub io: IoConfig,
    pub experiment: ExperimentConfig,
}

impl Config {
    pub fn from_toml(text: &str) -> Result<Self> {
        let config: Config = toml::from_str(text).map_err(|e| Error::Config(e.to_string()))?;
        config.validate()?;
        Ok(config)
    }

    pub fn load(path: &Path) -> Result<Self> {
        let text = std::fs::read_to_string(path)
            .map_err(|e| Error::io(format!("reading {}", path.display()), e))?;
        Config::from_toml(&text).map_err(|e| match e {
            Error::Config(msg) => Error::Config(format!("{}: {msg}", path.display())),
            other => other,
        })
    }

    pub fn to_toml(&self) -> String {
        toml::to_string(self).expect("config always serializes")
    }

    /// Every failure is reported as [`Error::Config`].
    pub fn validate(&self) -> Result<()> {
        let cfg = |e: Error| match e {
            Error::InvalidArgument(m) => Error::Config(m),
            other => other,
        };
        self.qiga.validate().map_err(cfg)?;
        self.postproc.validate().map_err(cfg)?;
        self.metrics.validate().map_err(cfg)?;
        let stft = self.features.stft(self.experiment.sample_rate).map_err(cfg)?;
        if stft.cola_gain().is_none() {
            return Err(Error::Config(format!(
                "hop {} does not give constant overlap-add for frame_len {}",
                stft.hop, stft.frame_len
            )));
        }
        let f = &self.features;
        if f.n_mels == 0 || f.n_mfcc == 0 || f.n_mfcc > f.n_mels {
            return Err(Error::Config("need 0 < n_mfcc <= n_mels".into()));
        }
        if self.masks.n_bands == 0 || self.masks.n_bands > f.frame_len / 2 {
            return Err(Error::Config(format!(
                "n_bands must be in 1..={}",
                f.frame_len / 2
            )));
        }
        let e = &self.experiment;
        if e.n_sources == 0 || e.n_sources > crate::metrics::MAX_ALIGN_SOURCES {
            return Err(Error::Config(format!(
                "n_sources must be in 1..={}",
                crate::metrics::MAX_ALIGN_SOURCES
            )));
        }
        if e.count == 0 {
            return Err(Error::Config("count must be positive".into()));
        }
        if !(e.duration_s > 0.0 && e.duration_s.is_finite()) {
            return Err(Error::Config("duration_s must be positive".into()));
        }
        if !e.snr_db.is_finite() {
            return Err(Error::Config("snr_db must be finite".into()));
        }
        if !(0.0..=1.0).contains(&e.overlap) {
            return Err(Error::Config("overlap must be in [0, 1]".into()));
        }
        if e.split.iter().any(|v| !(0.0..=1.0).contains(v))
            || (e.split.iter().sum::<f64>() - 1.0).abs() > 1e-9
        {
            return Err(Error::Config("split fractions must be in [0, 1] and sum to 1".into()));
        }
        if e.fractions.is_empty() || e.fractions.iter().any(|v| !(*v > 0.0 && *v <= 1.0)) {
            return Err(Error::Config("fractions must be non-empty and in (0, 1]".into()));
        }
        Ok(())
    }
}
