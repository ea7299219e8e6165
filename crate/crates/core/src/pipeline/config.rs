use std::fmt;
use std::path::{Path, PathBuf};
use std::str::FromStr;

use serde::{Deserialize, Serialize};

use crate::augment::{DiscriminatorConfig, FillStrategy};
use crate::detect::ForestConfig;
use crate::error::{Error, Result};
use crate::ingest::CorpusFormat;
use crate::lm::LmConfig;
use crate::rng::derive_seed;

/// Environment variable naming the default config file.
pub const CONFIG_ENV: &str = "REQSYNTH_CONFIG";

#[derive(Debug, Clone, Copy, PartialEq, Eq, Serialize, Deserialize)]
#[serde(rename_all = "lowercase")]
pub enum Profile {
    Desk,
    Paper,
}

impl FromStr for Profile {
    type Err = Error;

    fn from_str(s: &str) -> Result<Self> {
        match s {
            "desk" => Ok(Profile::Desk),
            "paper" => Ok(Profile::Paper),
            other => Err(Error::Config(format!("unknown profile `{other}` (expected desk or paper)"))),
        }
    }
}

impl fmt::Display for Profile {
    fn fmt(&self, f: &mut fmt::Formatter<'_>) -> fmt::Result {
        f.write_str(match self {
            Profile::Desk => "desk",
            Profile::Paper => "paper",
        })
    }
}

#[derive(Debug, Clone, PartialEq, Serialize, Deserialize)]
pub struct DataConfig {
    /// Short name used in report rows.
    pub name: String,
    /// File or directory; when absent a synthetic smoke corpus is generated.
    #[serde(default, skip_serializing_if = "Option::is_none")]
    pub path: Option<PathBuf>,
    pub format: CorpusFormat,
    pub smoke_records: usize,
}

#[derive(Debug, Clone, PartialEq, Serialize, Deserialize)]
pub struct LexiconConfig {
    pub confidence: f64,
    /// Used verbatim instead of the normal quantile of `confidence`.
    #[serde(default, skip_serializing_if = "Option::is_none")]
    pub z_override: Option<f64>,
}

#[derive(Debug, Clone, PartialEq, Serialize, Deserialize)]
pub struct AugmentConfig {
    pub tau_accept: f64,
    pub tau_uncertainty: f64,
    pub strategy: FillStrategy,
}

#[derive(Debug, Clone, PartialEq, Serialize, Deserialize)]
pub struct PipelineConfig {
    pub profile: Profile,
    pub seed: u64,
    pub output: PathBuf,
    pub data: DataConfig,
    pub train_fraction: f64,
    pub lexicon: LexiconConfig,
    pub generator: LmConfig,
    pub discriminator: LmConfig,
    pub detector: LmConfig,
    pub augment: AugmentConfig,
    pub forest: ForestConfig,
    pub calibration_percentile: f64,
    /// Confidence levels for `ablate` when none are given on the command line.
    pub ablation_levels: Vec<f64>,
}

impl PipelineConfig {
    pub fn preset(profile: Profile) -> Self {
        let (generator, discriminator, detector) = match profile {
            Profile::Desk => {
                let mut disc = LmConfig::desk();
                disc.epochs = 8;
                (LmConfig::desk(), disc, LmConfig::desk())
            }
            Profile::Paper => (LmConfig::paper(), LmConfig::paper(), LmConfig::paper()),
        };
        Self {
            profile,
            seed: 0,
            output: PathBuf::from("runs").join(profile.to_string()),
            data: DataConfig {
                name: if profile == Profile::Desk { "smoke".into() } else { "csic".into() },
                path: None,
                format: CorpusFormat::CsicRaw,
                smoke_records: 200,
            },
            train_fraction: 0.7,
            lexicon: LexiconConfig { confidence: 0.9999, z_override: Some(5.73) },
            generator,
            discriminator,
            detector,
            augment: AugmentConfig { tau_accept: 0.9, tau_uncertainty: 0.3, strategy: FillStrategy::Top1Novel },
            forest: ForestConfig::default(),
            calibration_percentile: 99.0,
            ablation_levels: vec![0.97, 0.98, 0.99, 0.995],
        }
    }

    /// The profile preset with `overrides` (TOML) merged over it, key by key.
    pub fn from_toml(profile: Profile, overrides: &str) -> Result<Self> {
        let mut base = toml::Value::try_from(Self::preset(profile)).map_err(|e| Error::Config(e.to_string()))?;
        let user: toml::Value = toml::from_str(overrides).map_err(|e| Error::Config(e.to_string()))?;
        merge(&mut base, user);
        let config: Self = base.try_into().map_err(|e: toml::de::Error| Error::Config(e.to_string()))?;
        config.validate()?;
        Ok(config)
    }

    /// Reads `path`; a `profile` key in the file picks the preset unless
    /// `profile` is given.
    pub fn load(path: &Path, profile: Option<Profile>) -> Result<Self> {
        let text = std::fs::read_to_string(path)
            .map_err(|e| Error::Config(format!("cannot read config {}: {e}", path.display())))?;
        let file_profile = toml::from_str::<toml::Table>(&text)
            .map_err(|e| Error::Config(format!("{}: {e}", path.display())))?
            .get("profile")
            .and_then(|v| v.as_str())
            .map(str::parse)
            .transpose()?;
        let profile = profile.or(file_profile).unwrap_or(Profile::Desk);
        let mut text = text;
        if file_profile.is_some_and(|p| p != profile) {
            // the command-line profile wins over the file's
            let mut table: toml::Table = toml::from_str(&text).map_err(|e| Error::Config(e.to_string()))?;
            table.insert("profile".into(), toml::Value::String(profile.to_string()));
            text = toml::to_string(&table).map_err(|e| Error::Config(e.to_string()))?;
        }
        Self::from_toml(profile, &text)
    }

    pub fn validate(&self) -> Result<()> {
        if !(self.train_fraction > 0.0 && self.train_fraction < 1.0) {
            return Err(Error::Config("train_fraction must be in (0, 1)".into()));
        }
        if !(self.lexicon.confidence > 0.0 && self.lexicon.confidence < 1.0) {
            return Err(Error::Config("lexicon.confidence must be in (0, 1)".into()));
        }
        if !(self.calibration_percentile > 0.0 && self.calibration_percentile <= 100.0) {
            return Err(Error::Config("calibration_percentile must be in (0, 100]".into()));
        }
        for (name, lm) in [("generator", &self.generator), ("discriminator", &self.discriminator), ("detector", &self.detector)] {
            lm.validate().map_err(|e| Error::Config(format!("{name}: {e}")))?;
        }
        self.discriminator_config().validate()?;
        self.forest.validate()?;
        if let Some(p) = &self.data.path {
            if !p.exists() {
                return Err(Error::Config(format!("data.path {} does not exist", p.display())));
            }
        } else if self.data.smoke_records < 10 {
            return Err(Error::Config("data.smoke_records must be at least 10".into()));
        }
        if self.ablation_levels.iter().any(|l| !(*l > 0.0 && *l < 1.0)) {
            return Err(Error::Config("ablation levels must be in (0, 1)".into()));
        }
        Ok(())
    }

    pub fn seeds(&self) -> Seeds {
        let s = |name| derive_seed(self.seed, name);
        Seeds {
            master: self.seed,
            smoke: s("smoke-corpus"),
            split: s("split"),
            generator: s("generator"),
            candidates: s("candidates"),
            discriminator: s("discriminator"),
            detector: s("detector"),
            forest: s("forest"),
        }
    }

    pub fn generator_config(&self) -> LmConfig {
        self.generator.clone().with_seed(self.seeds().generator)
    }

    pub fn detector_config(&self) -> LmConfig {
        self.detector.clone().with_seed(self.seeds().detector)
    }

    pub fn discriminator_config(&self) -> DiscriminatorConfig {
        DiscriminatorConfig {
            encoder: self.discriminator.clone().with_seed(self.seeds().discriminator),
            tau_uncertainty: self.augment.tau_uncertainty,
            tau_accept: self.augment.tau_accept,
        }
    }

    pub fn forest_config(&self) -> ForestConfig {
        ForestConfig { seed: self.seeds().forest, ..self.forest.clone() }
    }
}

/// Per-stage seeds, all derived from `master`.
#[derive(Debug, Clone, Copy, PartialEq, Eq, Serialize, Deserialize)]
pub struct Seeds {
    pub master: u64,
    pub smoke: u64,
    pub split: u64,
    pub generator: u64,
    pub candidates: u64,
    pub discriminator: u64,
    pub detector: u64,
    pub forest: u64,
}

fn merge(base: &mut toml::Value, over: toml::Value) {
    match (base, over) {
        (toml::Value::Table(b), toml::Value::Table(o)) => {
            for (k, v) in o {
                match b.get_mut(&k) {
                    Some(slot) => merge(slot, v),
                    None => {
                        b.insert(k, v);
                    }
                }
            }
        }
        (slot, v) => *slot = v,
    }
}

#[cfg(test)]
mod tests {
    use super::*;

    #[test]
    fn paper_defaults() {
        let c = PipelineConfig::preset(Profile::Paper);
        assert_eq!(c.train_fraction, 0.7);
        assert_eq!(c.lexicon.confidence, 0.9999);
        assert_eq!(c.lexicon.z_override, Some(5.73));
        assert_eq!(c.calibration_percentile, 99.0);
        assert_eq!((c.detector.epochs, c.detector.batch_size, c.detector.block_size, c.detector.max_seq_len), (20, 32, 128, 512));
    }

    #[test]
    fn overrides_merge_key_by_key() {
        let c = PipelineConfig::from_toml(
            Profile::Desk,
            "seed = 7\n[generator]\nepochs = 3\n[augment]\ntau_accept = 0.0\n[augment.strategy]\nkind = \"sample-topk\"\nk = 5\ntemperature = 1.0\n",
        )
        .unwrap();
        assert_eq!(c.seed, 7);
        assert_eq!(c.generator.epochs, 3);
        assert_eq!(c.generator.hidden, 128);
        assert_eq!(c.augment.tau_accept, 0.0);
        assert_eq!(c.augment.tau_uncertainty, 0.3);
        assert_eq!(c.augment.strategy, FillStrategy::SampleTopk { k: 5, temperature: 1.0 });
    }

    #[test]
    fn rejects_bad_values() {
        assert!(PipelineConfig::from_toml(Profile::Desk, "train_fraction = 1.5").is_err());
        assert!(PipelineConfig::from_toml(Profile::Desk, "[generator]\nheads = 3").is_err());
        assert!(PipelineConfig::from_toml(Profile::Desk, "[data]\npath = \"/no/such/place\"").is_err());
        assert!(PipelineConfig::from_toml(Profile::Desk, "nonsense = [").is_err());
    }

    #[test]
    fn seeds_follow_master() {
        let a = PipelineConfig::preset(Profile::Desk);
        let mut b = a.clone();
        b.seed = 1;
        assert_ne!(a.seeds().split, b.seeds().split);
        assert_eq!(a.seeds(), PipelineConfig::preset(Profile::Desk).seeds());
        assert_eq!(a.generator_config().seed, a.seeds().generator);
    }
}
