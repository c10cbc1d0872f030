use std::fs;
use std::path::{Path, PathBuf};

use jcmsim_core::dynamics::JcmParams;
use jcmsim_core::ensemble::EnsembleOptions;
use jcmsim_core::field::NoiseParams;
use jcmsim_core::state::{make_initial_state, InitialPreset};
use serde::{Deserialize, Serialize};

use crate::CliError;

/// Everything that determines the numbers a command produces.
///
/// The worker count and output path are deliberately absent: they never
/// change results, so leaving them out keeps the echoed configuration (and
/// with it the CSV bytes) identical across machines.
#[derive(Debug, Clone, PartialEq, Serialize, Deserialize)]
#[serde(default, deny_unknown_fields)]
pub struct RunConfig {
    pub initial: InitialPreset,
    /// Record every `record_stride`-th step.
    pub record_stride: u64,
    /// Stop the ensemble after this many steps instead of the full gate.
    pub horizon_steps: Option<u64>,
    /// Fixed-order reduction; required for byte-identical output.
    pub bitrepro: bool,
    pub jcm: JcmParams,
    pub noise: NoiseParams,
}

impl Default for RunConfig {
    fn default() -> Self {
        Self {
            initial: InitialPreset::EqualSuperpositionG012,
            record_stride: 100,
            horizon_steps: None,
            bitrepro: true,
            jcm: JcmParams::default(),
            noise: NoiseParams::default(),
        }
    }
}

impl RunConfig {
    /// Parses TOML, or the leading `# ` block of a CSV written by this tool.
    /// A CSV is recognised by its first non-comment line, the header row,
    /// which is neither a table heading nor a key assignment.
    pub fn parse(text: &str) -> Result<Self, CliError> {
        let first_data = text
            .lines()
            .map(str::trim)
            .find(|l| !l.is_empty() && !l.starts_with('#'));
        let is_csv = first_data.is_some_and(|l| !l.starts_with('[') && !l.contains('='));
        let body = if is_csv {
            text.lines()
                .take_while(|l| l.starts_with('#'))
                .map(|l| {
                    l.strip_prefix("# ")
                        .or_else(|| l.strip_prefix('#'))
                        .unwrap_or(l)
                })
                .collect::<Vec<_>>()
                .join("\n")
        } else {
            text.to_owned()
        };
        let cfg: RunConfig = toml::from_str(&body).map_err(|e| CliError::Config(e.to_string()))?;
        cfg.validate()?;
        Ok(cfg)
    }

    pub fn load(path: &Path) -> Result<Self, CliError> {
        let text = fs::read_to_string(path)
            .map_err(|e| CliError::Config(format!("{}: {e}", path.display())))?;
        Self::parse(&text).map_err(|e| match e {
            CliError::Config(msg) => CliError::Config(format!("{}: {msg}", path.display())),
            other => other,
        })
    }

    pub fn validate(&self) -> Result<(), CliError> {
        let wrap = |e: jcmsim_core::Error| CliError::Config(e.to_string());
        self.jcm.validate().map_err(wrap)?;
        self.noise.validate().map_err(wrap)?;
        make_initial_state(&self.initial, self.jcm.truncation).map_err(wrap)?;
        if self.record_stride == 0 {
            return Err(CliError::Config("record_stride must be at least 1".into()));
        }
        if let Some(h) = self.horizon_steps {
            if h == 0 || h > self.jcm.steps {
                return Err(CliError::Config(format!(
                    "horizon_steps must lie in [1, {}], got {h}",
                    self.jcm.steps
                )));
            }
        }
        Ok(())
    }

    pub fn ensemble_options(&self) -> EnsembleOptions {
        EnsembleOptions {
            record_stride: self.record_stride,
            horizon_steps: self.horizon_steps,
            bitrepro: self.bitrepro,
            stream_offset: 0,
        }
    }

    pub fn to_toml(&self) -> String {
        toml::to_string(self).expect("configuration always serializes")
    }
}

/// Command-line values that override the configuration file.
#[derive(Debug, Clone, Default, clap::Args)]
pub struct Overrides {
    /// Initial state: g012, 0plus or g1.
    #[arg(long)]
    pub preset: Option<InitialPreset>,
    /// Jump probability p.
    #[arg(long)]
    pub p: Option<f64>,
    /// Field step delta_e in rad/s.
    #[arg(long = "delta-e")]
    pub delta_e: Option<f64>,
    /// Number of samples M.
    #[arg(long)]
    pub samples: Option<u64>,
    /// Master seed.
    #[arg(long)]
    pub seed: Option<u64>,
    /// Time steps per gate N.
    #[arg(long)]
    pub steps: Option<u64>,
    /// Photon-number truncation K.
    #[arg(long)]
    pub truncation: Option<usize>,
    /// Gate index m.
    #[arg(long = "gate-index")]
    pub gate_index: Option<u32>,
    #[arg(long = "record-stride")]
    pub record_stride: Option<u64>,
    /// Stop after this many steps.
    #[arg(long)]
    pub horizon: Option<u64>,
    /// Fixed-order reduction for byte-identical output at any thread count.
    #[arg(long)]
    pub bitrepro: bool,
    /// Allow the reduction order to vary with scheduling.
    #[arg(long = "no-bitrepro", conflicts_with = "bitrepro")]
    pub no_bitrepro: bool,
}

impl Overrides {
    pub fn apply(&self, cfg: &mut RunConfig) {
        if let Some(v) = &self.preset {
            cfg.initial = v.clone();
        }
        if let Some(v) = self.p {
            cfg.noise.jump_probability = v;
        }
        if let Some(v) = self.delta_e {
            cfg.noise.delta_e = v;
        }
        if let Some(v) = self.samples {
            cfg.noise.samples = v;
        }
        if let Some(v) = self.seed {
            cfg.noise.seed = v;
        }
        if let Some(v) = self.steps {
            cfg.jcm.steps = v;
        }
        if let Some(v) = self.truncation {
            cfg.jcm.truncation = v;
        }
        if let Some(v) = self.gate_index {
            cfg.jcm.gate_index = v;
        }
        if let Some(v) = self.record_stride {
            cfg.record_stride = v;
        }
        if let Some(v) = self.horizon {
            cfg.horizon_steps = Some(v);
        }
        if self.bitrepro {
            cfg.bitrepro = true;
        }
        if self.no_bitrepro {
            cfg.bitrepro = false;
        }
    }
}

/// Loads the file (or defaults) and applies overrides, then re-validates.
pub fn resolve(path: Option<&PathBuf>, overrides: &Overrides) -> Result<RunConfig, CliError> {
    let mut cfg = match path {
        Some(p) => RunConfig::load(p)?,
        None => RunConfig::default(),
    };
    overrides.apply(&mut cfg);
    cfg.validate()?;
    Ok(cfg)
}
