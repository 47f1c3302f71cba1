//! The merged run configuration: config file first, then flags.

use std::path::{Path, PathBuf};

use serde::{Deserialize, Serialize};
use sewgpt_core::QuantConfig;
use sewgpt_nn::{ProviderSpec, SamplerOptions, TrainConfig};

use crate::exit::Usage;

pub const CONFIG_ENV: &str = "SEWCODEC_CONFIG";

/// Config file layout. Training and model keys sit at the top level; the
/// codec, sampler and caption provider get their own sections.
#[derive(Debug, Clone, Default, Serialize, Deserialize)]
#[serde(default)]
pub struct ConfigFile {
    #[serde(flatten)]
    pub train: TrainConfig,
    pub quant: Option<QuantConfig>,
    pub sampler: Option<SamplerOptions>,
    pub provider: Option<ProviderSpec>,
}

#[derive(Debug, Clone)]
pub struct CliConfig {
    pub train: TrainConfig,
    pub quant: QuantConfig,
    pub sampler: SamplerOptions,
    pub provider: ProviderSpec,
    /// The file the settings came from, if any.
    pub source: Option<PathBuf>,
}

impl CliConfig {
    /// Reads `flag`, else `$SEWCODEC_CONFIG`, else built-in defaults.
    pub fn load(flag: Option<&Path>) -> anyhow::Result<CliConfig> {
        let source = flag.map(Path::to_path_buf).or_else(|| std::env::var_os(CONFIG_ENV).map(PathBuf::from));
        let file: ConfigFile = match &source {
            Some(p) => sewgpt_core::io::load_json(p)?,
            None => ConfigFile::default(),
        };
        let quant = file.quant.unwrap_or(QuantConfig {
            k: file.train.model.k,
            max_tokens: file.train.model.max_seq_len,
            ..QuantConfig::default()
        });
        let provider = file.provider.unwrap_or_else(|| ProviderSpec::hashed_bow(file.train.model.d_cond_in));
        Ok(CliConfig { train: file.train, quant, sampler: file.sampler.unwrap_or_default(), provider, source })
    }

    /// Rejects settings that disagree with each other. Runs after flag overrides.
    pub fn check(&self) -> Result<(), Usage> {
        let bad = |m: String| Err(Usage(format!("config: {m}")));
        self.train.validate().map_err(|e| Usage(format!("config: {e}")))?;
        self.quant.validate().map_err(|e| Usage(format!("config: {e}")))?;
        self.sampler.validate().map_err(|e| Usage(format!("config: {e}")))?;
        let m = &self.train.model;
        if m.k != self.quant.k {
            return bad(format!("model K = {} but quant k = {}", m.k, self.quant.k));
        }
        if m.vocab_size != self.quant.vocab_size() {
            return bad(format!("vocab_size = {} but the codec produces {} ids", m.vocab_size, self.quant.vocab_size()));
        }
        if m.max_panels < self.quant.max_panels() {
            return bad(format!("max_panels = {} is below the codec's {}", m.max_panels, self.quant.max_panels()));
        }
        if self.provider.dim != m.d_cond_in {
            return bad(format!("provider dim = {} but d_cond_in = {}", self.provider.dim, m.d_cond_in));
        }
        Ok(())
    }
}

/// What a checkpoint carries besides the model: enough to turn captions
/// into conditions and tokens back into patterns.
#[derive(Debug, Clone, Serialize, Deserialize)]
pub struct Pipeline {
    pub quant: QuantConfig,
    pub stats: sewgpt_core::NormStats,
    pub provider: ProviderSpec,
}
