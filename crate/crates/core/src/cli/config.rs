//! Flat `key = value` pipeline configuration with dotted keys.

use std::path::{Path, PathBuf};
use std::str::FromStr;

use serde::Serialize;
use thiserror::Error;

use crate::codec::DesignConstraints;
use crate::library::{Digestion, DigestionParams, LibraryParams};
use crate::probeop::{PcrParams, PolymeraseActivity, ProtocolConfig, ProtocolMode, StopRule};
use crate::seqsim::ErrorModel;

#[derive(Debug, Error, PartialEq)]
pub enum ConfigError {
    #[error("line {line}: expected `key = value`, got `{text}`")]
    Syntax { line: usize, text: String },
    #[error("line {line}: unknown key `{key}`")]
    UnknownKey { line: usize, key: String },
    #[error("line {line}: invalid value `{value}` for `{key}`: {reason}")]
    InvalidValue { line: usize, key: String, value: String, reason: String },
    #[error("line {line}: `{key}` set twice")]
    Duplicate { line: usize, key: String },
    #[error("{0}")]
    Invalid(String),
}

#[derive(Debug, Clone, Copy, PartialEq, Eq, Serialize)]
#[serde(rename_all = "snake_case")]
pub enum DecodeMode {
    /// Per-position codeword classification.
    Site,
    /// Whole-read alignment against all path-feasible colorings.
    Candidates,
}

#[derive(Debug, Clone, PartialEq, Serialize)]
pub struct SequencingConfig {
    pub n_reads: usize,
    /// Minimum expected reads for the rarest amplified strand; raises
    /// `n_reads` when set.
    pub coverage: f64,
    pub max_reads: usize,
    pub error: ErrorModel,
    pub align_band: usize,
    pub min_reads: usize,
    pub min_frac: f64,
    pub decode_mode: DecodeMode,
}

impl Default for SequencingConfig {
    fn default() -> Self {
        SequencingConfig {
            n_reads: 32_528,
            coverage: 0.0,
            max_reads: 2_000_000,
            error: ErrorModel::default(),
            align_band: 12,
            min_reads: 100,
            min_frac: 0.001,
            decode_mode: DecodeMode::Site,
        }
    }
}

#[derive(Debug, Clone, PartialEq, Serialize)]
pub struct LibraryConfig {
    pub params: LibraryParams,
    pub digestion: Digestion,
    pub digestion_extent: f64,
    pub yield_curve: DigestionParams,
}

impl Default for LibraryConfig {
    fn default() -> Self {
        LibraryConfig {
            params: LibraryParams::default(),
            digestion: Digestion::LambdaExo,
            digestion_extent: 0.6,
            yield_curve: DigestionParams::default(),
        }
    }
}

#[derive(Debug, Clone, PartialEq, Serialize)]
pub struct PipelineConfig {
    pub graph: Option<PathBuf>,
    pub seed: u64,
    /// Worker threads; 0 uses all cores.
    pub threads: usize,
    pub codec: DesignConstraints,
    pub library: LibraryConfig,
    pub protocol: ProtocolConfig,
    pub pcr: PcrParams,
    pub sequencing: SequencingConfig,
    pub output_dir: Option<PathBuf>,
}

impl Default for PipelineConfig {
    fn default() -> Self {
        PipelineConfig {
            graph: None,
            seed: 1,
            threads: 0,
            codec: DesignConstraints::default(),
            library: LibraryConfig::default(),
            protocol: ProtocolConfig::default(),
            pcr: PcrParams::default(),
            sequencing: SequencingConfig::default(),
            output_dir: None,
        }
    }
}

fn parse<T: FromStr>(value: &str) -> Result<T, String>
where
    T::Err: std::fmt::Display,
{
    value.parse::<T>().map_err(|e| e.to_string())
}

fn parse_choice<T: Copy>(value: &str, choices: &[(&str, T)]) -> Result<T, String> {
    choices.iter().find(|(name, _)| *name == value).map(|(_, v)| *v).ok_or_else(|| {
        let names: Vec<&str> = choices.iter().map(|(n, _)| *n).collect();
        format!("expected one of {}", names.join(", "))
    })
}

impl PipelineConfig {
    /// Every accepted key, in file order of the documentation.
    pub const KEYS: &'static [&'static str] = &[
        "graph",
        "seed",
        "threads",
        "codec.codeword_len",
        "codec.min_distance",
        "codec.gc_min",
        "codec.gc_max",
        "codec.max_cross_hyb",
        "codec.max_homopolymer",
        "codec.splint_left",
        "codec.splint_right",
        "codec.tag_len",
        "codec.primer_len",
        "codec.tag_cross_hyb",
        "codec.free_spacer_len",
        "codec.anchor_len",
        "codec.max_attempts",
        "library.initial_copies",
        "library.ligation_bias",
        "library.materialize_limit",
        "library.digestion",
        "library.digestion_extent",
        "library.peak_extent",
        "library.peak_yield",
        "library.over_digest_yield",
        "library.lambda_exo_purity",
        "library.late_pcr_purity",
        "protocol.mode",
        "protocol.probe_excess",
        "protocol.polymerase_activity",
        "protocol.extension_temp",
        "protocol.block_leak_base",
        "protocol.secondary_structure_penalty",
        "pcr.cycles",
        "pcr.stop_rule",
        "pcr.plateau",
        "pcr.max_cycles",
        "pcr.efficiency_min",
        "pcr.efficiency_max",
        "sequencing.n_reads",
        "sequencing.coverage",
        "sequencing.max_reads",
        "sequencing.sub_rate",
        "sequencing.ins_rate",
        "sequencing.del_rate",
        "sequencing.align_band",
        "sequencing.min_reads",
        "sequencing.min_frac",
        "sequencing.decode_mode",
        "output.dir",
    ];

    /// Parses config text. Relative paths resolve against `base_dir`.
    pub fn parse(text: &str, base_dir: &Path) -> Result<Self, ConfigError> {
        let mut cfg = PipelineConfig::default();
        let mut seen = std::collections::HashSet::new();
        for (k, raw) in text.lines().enumerate() {
            let line = k + 1;
            let content = raw.split('#').next().unwrap_or("").trim();
            if content.is_empty() {
                continue;
            }
            let (key, value) = content
                .split_once('=')
                .map(|(a, b)| (a.trim(), b.trim()))
                .filter(|(a, b)| !a.is_empty() && !b.is_empty())
                .ok_or_else(|| ConfigError::Syntax { line, text: raw.trim().to_string() })?;
            if !Self::KEYS.contains(&key) {
                return Err(ConfigError::UnknownKey { line, key: key.to_string() });
            }
            if !seen.insert(key.to_string()) {
                return Err(ConfigError::Duplicate { line, key: key.to_string() });
            }
            cfg.set(key, value, base_dir).map_err(|reason| ConfigError::InvalidValue {
                line,
                key: key.to_string(),
                value: value.to_string(),
                reason,
            })?;
        }
        cfg.validate()?;
        Ok(cfg)
    }

    pub fn load(path: &Path) -> Result<Self, ConfigError> {
        let text = std::fs::read_to_string(path)
            .map_err(|e| ConfigError::Invalid(format!("cannot read config {}: {e}", path.display())))?;
        Self::parse(&text, path.parent().unwrap_or(Path::new(".")))
    }

    fn set(&mut self, key: &str, v: &str, base_dir: &Path) -> Result<(), String> {
        let c = &mut self.codec;
        let l = &mut self.library;
        let p = &mut self.protocol;
        let s = &mut self.sequencing;
        match key {
            "graph" => self.graph = Some(base_dir.join(v)),
            "seed" => self.seed = parse(v)?,
            "threads" => self.threads = parse(v)?,
            "codec.codeword_len" => c.codeword_len = parse(v)?,
            "codec.min_distance" => c.min_distance = parse(v)?,
            "codec.gc_min" => c.gc_min = parse(v)?,
            "codec.gc_max" => c.gc_max = parse(v)?,
            "codec.max_cross_hyb" => c.max_cross_hyb = parse(v)?,
            "codec.max_homopolymer" => c.max_homopolymer = parse(v)?,
            "codec.splint_left" => c.splint_left = parse(v)?,
            "codec.splint_right" => c.splint_right = parse(v)?,
            "codec.tag_len" => c.tag_len = parse(v)?,
            "codec.primer_len" => c.primer_len = parse(v)?,
            "codec.tag_cross_hyb" => c.tag_cross_hyb = parse(v)?,
            "codec.free_spacer_len" => c.free_spacer_len = parse(v)?,
            "codec.anchor_len" => c.anchor_len = parse(v)?,
            "codec.max_attempts" => c.max_attempts = parse(v)?,
            "library.initial_copies" => l.params.initial_copies = parse(v)?,
            "library.ligation_bias" => l.params.ligation_bias = parse(v)?,
            "library.materialize_limit" => l.params.materialize_limit = parse(v)?,
            "library.digestion" => {
                l.digestion = parse_choice(v, &[("lambda_exo", Digestion::LambdaExo), ("late_pcr", Digestion::LatePcr)])?
            }
            "library.digestion_extent" => l.digestion_extent = parse(v)?,
            "library.peak_extent" => l.yield_curve.peak_extent = parse(v)?,
            "library.peak_yield" => l.yield_curve.peak_yield = parse(v)?,
            "library.over_digest_yield" => l.yield_curve.over_digest_yield = parse(v)?,
            "library.lambda_exo_purity" => l.yield_curve.lambda_exo_purity = parse(v)?,
            "library.late_pcr_purity" => l.yield_curve.late_pcr_purity = parse(v)?,
            "protocol.mode" => {
                p.mode = parse_choice(
                    v,
                    &[("anneal_ramp", ProtocolMode::AnnealRamp), ("direct_high_conc", ProtocolMode::DirectHighConc)],
                )?
            }
            "protocol.probe_excess" => p.probe_excess = parse(v)?,
            "protocol.polymerase_activity" => {
                p.polymerase_activity = parse_choice(
                    v,
                    &[
                        ("heat_activated", PolymeraseActivity::HeatActivated),
                        ("no_heat_activation", PolymeraseActivity::NoHeatActivation),
                    ],
                )?
            }
            "protocol.extension_temp" => p.extension_temp = parse(v)?,
            "protocol.block_leak_base" => p.block_leak_base = parse(v)?,
            "protocol.secondary_structure_penalty" => p.secondary_structure_penalty = parse(v)?,
            "pcr.cycles" => self.pcr.cycles = parse(v)?,
            "pcr.stop_rule" => {
                self.pcr.stop_rule = parse_choice(
                    v,
                    &[("fixed_cycles", StopRule::FixedCycles), ("late_exponential", StopRule::LateExponential)],
                )?
            }
            "pcr.plateau" => self.pcr.plateau = parse(v)?,
            "pcr.max_cycles" => self.pcr.max_cycles = parse(v)?,
            "pcr.efficiency_min" => self.pcr.efficiency_min = parse(v)?,
            "pcr.efficiency_max" => self.pcr.efficiency_max = parse(v)?,
            "sequencing.n_reads" => s.n_reads = parse(v)?,
            "sequencing.coverage" => s.coverage = parse(v)?,
            "sequencing.max_reads" => s.max_reads = parse(v)?,
            "sequencing.sub_rate" => s.error.sub_rate = parse(v)?,
            "sequencing.ins_rate" => s.error.ins_rate = parse(v)?,
            "sequencing.del_rate" => s.error.del_rate = parse(v)?,
            "sequencing.align_band" => s.align_band = parse(v)?,
            "sequencing.min_reads" => s.min_reads = parse(v)?,
            "sequencing.min_frac" => s.min_frac = parse(v)?,
            "sequencing.decode_mode" => {
                s.decode_mode = parse_choice(v, &[("site", DecodeMode::Site), ("candidates", DecodeMode::Candidates)])?
            }
            "output.dir" => self.output_dir = Some(base_dir.join(v)),
            other => unreachable!("key `{other}` listed in KEYS but not handled"),
        }
        Ok(())
    }

    /// Range checks owned by the stage types, plus the config's own.
    pub fn validate(&self) -> Result<(), ConfigError> {
        let err = |e: &dyn std::fmt::Display| ConfigError::Invalid(e.to_string());
        self.codec.validate().map_err(|e| err(&e))?;
        self.protocol.validate().map_err(|e| err(&e))?;
        self.pcr.validate().map_err(|e| err(&e))?;
        self.sequencing.error.validate().map_err(|e| err(&e))?;
        let l = &self.library;
        if !(0.0..=1.0).contains(&l.digestion_extent) {
            return Err(ConfigError::Invalid(format!("library.digestion_extent {} outside [0, 1]", l.digestion_extent)));
        }
        if !(l.params.initial_copies > 0.0) || !(0.0..1.0).contains(&l.params.ligation_bias) {
            return Err(ConfigError::Invalid("library.initial_copies must be positive and ligation_bias in [0, 1)".into()));
        }
        let y = &l.yield_curve;
        if !(0.0 < y.peak_extent && y.peak_extent < 1.0) {
            return Err(ConfigError::Invalid("library.peak_extent must lie in (0, 1)".into()));
        }
        for (name, v) in [
            ("peak_yield", y.peak_yield),
            ("over_digest_yield", y.over_digest_yield),
            ("lambda_exo_purity", y.lambda_exo_purity),
            ("late_pcr_purity", y.late_pcr_purity),
        ] {
            if !(0.0..=1.0).contains(&v) {
                return Err(ConfigError::Invalid(format!("library.{name} {v} outside [0, 1]")));
            }
        }
        let s = &self.sequencing;
        if !(0.0..=1.0).contains(&s.min_frac) || !(s.coverage >= 0.0) {
            return Err(ConfigError::Invalid("sequencing.min_frac must lie in [0, 1], coverage ≥ 0".into()));
        }
        Ok(())
    }
}
