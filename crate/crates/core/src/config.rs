//! Declarative run configuration (TOML) and the built-in profiles.

use std::path::{Path, PathBuf};

use serde::{Deserialize, Serialize};

use crate::bp::BpConfig;
use crate::channel::ChannelConfig;
use crate::cluster::{LlrMode, SizeWeights};
use crate::codec::CodeParams;
use crate::error::{Error, Result};
use crate::experiment::{DecoderSpec, SweepConfig};
use crate::fountain::SolitonParams;
use crate::pipeline::PipelineParams;

pub const PAPER_SCALE: &str = include_str!("../../../profiles/paper-scale.toml");
pub const DESK_SCALE: &str = include_str!("../../../profiles/desk-scale.toml");

#[derive(Clone, Debug, PartialEq, Serialize, Deserialize)]
#[serde(deny_unknown_fields)]
pub struct CodeSection {
    pub k: usize,
    pub c: f64,
    pub delta: f64,
    pub n_oligos: usize,
}

impl CodeSection {
    pub fn soliton(&self) -> Result<SolitonParams> {
        SolitonParams::new(self.k, self.c, self.delta)
    }

    pub fn params(&self) -> Result<CodeParams> {
        Ok(CodeParams {
            soliton: self.soliton()?,
            n_oligos: self.n_oligos,
        })
    }
}

#[derive(Clone, Debug, PartialEq, Serialize, Deserialize)]
#[serde(default, deny_unknown_fields)]
pub struct DecoderSection {
    pub n_re: usize,
    pub llr_mode: LlrMode,
    pub redecoding: bool,
    pub bp: BpConfig,
    /// Defaults to the per-bit crossover implied by the channel's
    /// substitution rate (two of three substitutions flip a given bit).
    pub crossover_p: Option<f64>,
    pub size_weights: Option<SizeWeights>,
}

impl Default for DecoderSection {
    fn default() -> Self {
        DecoderSection {
            n_re: 3,
            llr_mode: LlrMode::Proposed,
            redecoding: true,
            bp: BpConfig::default(),
            crossover_p: None,
            size_weights: None,
        }
    }
}

#[derive(Clone, Debug, PartialEq, Serialize, Deserialize)]
#[serde(default, deny_unknown_fields)]
pub struct SimulateSection {
    pub reads: u64,
}

impl Default for SimulateSection {
    fn default() -> Self {
        SimulateSection { reads: 100_000 }
    }
}

#[derive(Clone, Debug, PartialEq, Serialize, Deserialize)]
#[serde(default, deny_unknown_fields)]
pub struct ExperimentSection {
    /// Reads simulated as the pool that trials subsample, when no FASTQ is
    /// supplied.
    pub pool_reads: u64,
    pub sampling_points: Vec<usize>,
    pub trials: usize,
    pub rng_seed: u64,
    pub decoders: Vec<DecoderSpec>,
}

impl Default for ExperimentSection {
    fn default() -> Self {
        let sweep = SweepConfig::default();
        ExperimentSection {
            pool_reads: 40_000,
            sampling_points: sweep.sampling_points,
            trials: sweep.trials,
            rng_seed: sweep.rng_seed,
            decoders: sweep.decoders,
        }
    }
}

impl ExperimentSection {
    pub fn sweep(&self) -> SweepConfig {
        SweepConfig {
            sampling_points: self.sampling_points.clone(),
            trials: self.trials,
            rng_seed: self.rng_seed,
            decoders: self.decoders.clone(),
        }
    }
}

#[derive(Clone, Debug, Default, PartialEq, Serialize, Deserialize)]
#[serde(default, deny_unknown_fields)]
pub struct PathsSection {
    pub transition_table: Option<PathBuf>,
}

#[derive(Clone, Debug, PartialEq, Serialize, Deserialize)]
#[serde(deny_unknown_fields)]
pub struct RunConfig {
    pub name: String,
    pub code: CodeSection,
    #[serde(default)]
    pub channel: ChannelConfig,
    #[serde(default)]
    pub decoder: DecoderSection,
    #[serde(default)]
    pub simulate: SimulateSection,
    #[serde(default)]
    pub experiment: ExperimentSection,
    #[serde(default)]
    pub paths: PathsSection,
}

impl RunConfig {
    pub fn parse(text: &str) -> Result<Self> {
        let cfg: RunConfig = toml::from_str(text).map_err(|e| Error::Config(e.to_string()))?;
        cfg.validate()?;
        Ok(cfg)
    }

    pub fn load(path: &Path) -> Result<Self> {
        let text = std::fs::read_to_string(path).map_err(|e| Error::io(path, e))?;
        Self::parse(&text)
    }

    /// `paper-scale`, `desk-scale`, or a path to a TOML file.
    pub fn resolve(name_or_path: &str) -> Result<Self> {
        match name_or_path {
            "paper-scale" => Self::parse(PAPER_SCALE),
            "desk-scale" => Self::parse(DESK_SCALE),
            p => Self::load(Path::new(p)),
        }
    }

    pub fn desk_scale() -> Self {
        Self::parse(DESK_SCALE).expect("built-in profile parses")
    }

    pub fn paper_scale() -> Self {
        Self::parse(PAPER_SCALE).expect("built-in profile parses")
    }

    pub fn validate(&self) -> Result<()> {
        self.code.params()?.validate()?;
        self.channel.validate()?;
        self.pipeline_params()?.validate()
    }

    pub fn crossover_p(&self) -> f64 {
        self.decoder.crossover_p.unwrap_or(2.0 / 3.0 * self.channel.sub_rate).clamp(1e-9, 0.49)
    }

    pub fn pipeline_params(&self) -> Result<PipelineParams> {
        Ok(PipelineParams {
            soliton: self.code.soliton()?,
            n_re: self.decoder.n_re,
            llr_mode: self.decoder.llr_mode.clone(),
            redecoding: self.decoder.redecoding,
            bp: self.decoder.bp,
            crossover_p: self.crossover_p(),
            size_weights: self.decoder.size_weights,
        })
    }

    pub fn to_toml(&self) -> String {
        toml::to_string(self).expect("config serializes")
    }

    pub fn to_json(&self) -> serde_json::Value {
        serde_json::to_value(self).expect("config serializes")
    }
}
