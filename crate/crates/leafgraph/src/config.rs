//! Declarative pipeline configuration.
//!
//! ```toml
//! seed = 7
//!
//! [paths]
//! manifest = "data/manifest.csv"
//! features = "data/features.lgfs"
//! out_dir = "runs/a"
//!
//! [model]
//! arch = "sequential"
//! hidden_dims = [64]
//! layers = 1
//! fan_outs = [20]
//!
//! [split]
//! train = 0.8
//! val = 0.1
//! test = 0.1
//! ```
//!
//! Command-line flags override file values. The seed resolves as flag, then
//! the file's `seed` (or `[model] seed`), then `LEAFGRAPH_SEED`, then 0.

use std::path::{Path, PathBuf};

use leafgraph_core::dataset::SplitFractions;
use leafgraph_core::image::AugmentSpec;
use leafgraph_core::model::ModelConfig;
use serde::{Deserialize, Serialize};

use crate::error::{AppError, Result};
use crate::io;

pub const SEED_ENV: &str = "LEAFGRAPH_SEED";
pub const EFFECTIVE_CONFIG: &str = "effective_config.toml";

#[derive(Debug, Clone, PartialEq, Serialize, Deserialize)]
#[serde(default, deny_unknown_fields)]
pub struct Paths {
    #[serde(skip_serializing_if = "Option::is_none")]
    pub manifest: Option<PathBuf>,
    /// Pooled feature store.
    #[serde(skip_serializing_if = "Option::is_none")]
    pub features: Option<PathBuf>,
    /// Flattened grayscale pixels, for `gnn_only`.
    #[serde(skip_serializing_if = "Option::is_none")]
    pub raw_pixels: Option<PathBuf>,
    /// Spatial feature maps, for explanations.
    #[serde(skip_serializing_if = "Option::is_none")]
    pub spatial: Option<PathBuf>,
    #[serde(skip_serializing_if = "Option::is_none")]
    pub image_dir: Option<PathBuf>,
    #[serde(skip_serializing_if = "Option::is_none")]
    pub graph: Option<PathBuf>,
    #[serde(skip_serializing_if = "Option::is_none")]
    pub checkpoint: Option<PathBuf>,
    pub out_dir: PathBuf,
}

impl Default for Paths {
    fn default() -> Self {
        Self {
            manifest: None,
            features: None,
            raw_pixels: None,
            spatial: None,
            image_dir: None,
            graph: None,
            checkpoint: None,
            out_dir: PathBuf::from("out"),
        }
    }
}

#[derive(Debug, Clone, PartialEq, Serialize, Deserialize)]
#[serde(default, deny_unknown_fields)]
pub struct SynthConfig {
    pub classes: usize,
    pub per_class: usize,
    pub dim: usize,
    pub sigma: f64,
    /// `[height, width]` of companion spatial maps; none when empty.
    pub spatial: Vec<usize>,
    /// Also emit grayscale images and their raw-pixel store.
    pub images: bool,
    pub image_side: usize,
    pub pixel_noise: f64,
}

impl Default for SynthConfig {
    fn default() -> Self {
        Self {
            classes: 10,
            per_class: 50,
            dim: 64,
            sigma: 0.35,
            spatial: Vec::new(),
            images: false,
            image_side: 32,
            pixel_noise: 0.15,
        }
    }
}

#[derive(Debug, Clone, PartialEq, Serialize, Deserialize)]
#[serde(default, deny_unknown_fields)]
pub struct ServiceConfig {
    pub host: String,
    pub port: u16,
}

impl Default for ServiceConfig {
    fn default() -> Self {
        Self {
            host: "127.0.0.1".into(),
            port: 8080,
        }
    }
}

#[derive(Debug, Clone, PartialEq, Serialize, Deserialize)]
#[serde(default, deny_unknown_fields)]
pub struct PipelineConfig {
    #[serde(skip_serializing_if = "Option::is_none")]
    pub seed: Option<u64>,
    pub paths: Paths,
    pub model: ModelConfig,
    pub split: SplitFractions,
    pub augment: AugmentSpec,
    pub synth: SynthConfig,
    pub service: ServiceConfig,
}

impl Default for PipelineConfig {
    fn default() -> Self {
        Self {
            seed: None,
            paths: Paths::default(),
            model: ModelConfig::default(),
            split: SplitFractions::default(),
            augment: AugmentSpec::default(),
            synth: SynthConfig::default(),
            service: ServiceConfig::default(),
        }
    }
}

impl PipelineConfig {
    pub fn parse(text: &str) -> Result<Self> {
        let table: toml::Table = text.parse().map_err(|e| AppError::Usage(format!("config: {e}")))?;
        let model_seed = table.get("model").and_then(|m| m.get("seed")).is_some();
        let mut cfg: Self = table
            .try_into()
            .map_err(|e: toml::de::Error| AppError::Usage(format!("config: {e}")))?;
        if cfg.seed.is_none() && model_seed {
            cfg.seed = Some(cfg.model.seed);
        }
        Ok(cfg)
    }

    pub fn load(path: &Path) -> Result<Self> {
        let text = std::fs::read_to_string(path).map_err(|e| AppError::io(path, e))?;
        Self::parse(&text).map_err(|e| AppError::Usage(format!("{}: {e}", path.display())))
    }

    /// Fixes the seed from `flag`, the file, `env` (the value of
    /// `LEAFGRAPH_SEED`, if set) or 0, in that order, and copies it into the
    /// model config.
    pub fn resolve_seed(&mut self, flag: Option<u64>, env: Option<&str>) -> Result<u64> {
        let from_env = env
            .map(|v| {
                v.trim()
                    .parse::<u64>()
                    .map_err(|_| AppError::Usage(format!("{SEED_ENV}='{v}' is not an unsigned integer")))
            })
            .transpose()?;
        let seed = flag.or(self.seed).or(from_env).unwrap_or(0);
        self.seed = Some(seed);
        self.model.seed = seed;
        Ok(seed)
    }

    pub fn to_toml(&self) -> Result<String> {
        toml::to_string_pretty(self).map_err(|e| AppError::Runtime(format!("config: {e}")))
    }

    /// Writes the effective configuration to `out_dir/effective_config.toml`.
    pub fn echo(&self) -> Result<PathBuf> {
        let path = self.paths.out_dir.join(EFFECTIVE_CONFIG);
        io::write_bytes(&path, self.to_toml()?.as_bytes())?;
        Ok(path)
    }

    pub fn require<'a>(&self, value: &'a Option<PathBuf>, what: &str) -> Result<&'a Path> {
        value
            .as_deref()
            .ok_or_else(|| AppError::Usage(format!("missing path: {what} (flag or [paths] {what})")))
    }
}

#[cfg(test)]
mod tests {
    use super::*;
    use leafgraph_core::model::Arch;

    #[test]
    fn empty_file_gives_defaults() {
        assert_eq!(PipelineConfig::parse("").unwrap(), PipelineConfig::default());
    }

    #[test]
    fn file_values_are_read() {
        let cfg = PipelineConfig::parse(
            "seed = 4\n[paths]\nmanifest = \"m.csv\"\nout_dir = \"o\"\n[model]\narch = \"parallel\"\nhidden_dims = [32]\nlayers = 1\nfan_outs = [5]\n[split]\ntrain = 0.8\nval = 0.0\ntest = 0.2\n",
        )
        .unwrap();
        assert_eq!(cfg.seed, Some(4));
        assert_eq!(cfg.paths.manifest.as_deref(), Some(Path::new("m.csv")));
        assert_eq!(cfg.model.arch, Arch::Parallel);
        assert_eq!(cfg.model.hidden_dims, vec![32]);
        assert_eq!(cfg.split.test, 0.2);
    }

    #[test]
    fn unknown_keys_are_usage_errors() {
        let err = PipelineConfig::parse("[model]\nwidth = 3\n").unwrap_err();
        assert_eq!(err.exit_code(), 1);
        assert!(PipelineConfig::parse("sed = 1").is_err());
    }

    #[test]
    fn seed_precedence() {
        let mut cfg = PipelineConfig::parse("seed = 5").unwrap();
        assert_eq!(cfg.resolve_seed(Some(9), Some("11")).unwrap(), 9);
        assert_eq!(cfg.model.seed, 9);

        let mut cfg = PipelineConfig::parse("seed = 5").unwrap();
        assert_eq!(cfg.resolve_seed(None, Some("11")).unwrap(), 5);

        let mut cfg = PipelineConfig::parse("[model]\nseed = 6").unwrap();
        assert_eq!(cfg.resolve_seed(None, Some("11")).unwrap(), 6);

        let mut cfg = PipelineConfig::parse("").unwrap();
        assert_eq!(cfg.resolve_seed(None, Some("11")).unwrap(), 11);

        let mut cfg = PipelineConfig::parse("").unwrap();
        assert_eq!(cfg.resolve_seed(None, None).unwrap(), 0);

        let mut cfg = PipelineConfig::parse("").unwrap();
        assert_eq!(cfg.resolve_seed(None, Some("x")).unwrap_err().exit_code(), 1);
    }

    #[test]
    fn echo_round_trips() {
        let dir = tempfile::tempdir().unwrap();
        let mut cfg = PipelineConfig::default();
        cfg.paths.out_dir = dir.path().to_path_buf();
        cfg.paths.features = Some("f.lgfs".into());
        cfg.resolve_seed(Some(3), None).unwrap();
        let path = cfg.echo().unwrap();
        assert_eq!(PipelineConfig::load(&path).unwrap(), cfg);
    }
}
