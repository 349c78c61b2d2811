use std::collections::BTreeSet;
use std::fmt;
use std::path::Path;

use serde::{Deserialize, Serialize};
use thiserror::Error;

use crate::agents::{CPC_MAX_STEPS, SPA_MAX_STEPS};
use crate::harness::llm::PriceTable;
use crate::localization::{DEFAULT_CHUNK_LINES, DEFAULT_TOP_N};
use crate::repair::{candidate_temperature, Normalizer, SelectionStrategy, DEFAULT_CANDIDATES, DEFAULT_MARGIN};
use crate::symbol_analysis::SymbolBackendConfig;

#[derive(Debug, Error)]
pub enum ConfigError {
    #[error("invalid config: {0}")]
    Invalid(String),
    #[error("cannot parse config: {0}")]
    Parse(#[from] toml::de::Error),
    #[error(transparent)]
    Io(#[from] std::io::Error),
}

/// Downstream stages that receive the enhanced report instead of the plain
/// issue text.
#[derive(Debug, Clone, Copy, PartialEq, Eq, PartialOrd, Ord, Hash, Serialize, Deserialize)]
#[serde(rename_all = "snake_case")]
pub enum EnhanceStage {
    Localization,
    Generation,
}

#[derive(Debug, Clone, Copy, Default, PartialEq, Eq, Serialize, Deserialize)]
#[serde(rename_all = "snake_case")]
pub enum InputType {
    #[default]
    IssueReport,
    SanitizerLog,
}

#[derive(Debug, Clone, PartialEq, Eq, Serialize, Deserialize)]
#[serde(default, deny_unknown_fields)]
pub struct Caps {
    pub script_output_bytes: usize,
    pub poc_head_lines: usize,
    pub poc_tail_lines: usize,
    pub search_results: usize,
    pub reference_results: usize,
    pub read_radius: usize,
}

impl Default for Caps {
    fn default() -> Self {
        Self {
            script_output_bytes: crate::execution::DEFAULT_SCRIPT_OUTPUT_CAP,
            poc_head_lines: 100,
            poc_tail_lines: 100,
            search_results: 10,
            reference_results: 50,
            read_radius: 20,
        }
    }
}

#[derive(Debug, Clone, PartialEq, Eq, Serialize, Deserialize)]
#[serde(default, deny_unknown_fields)]
pub struct Timeouts {
    pub poc_secs: u64,
    pub script_secs: u64,
}

impl Default for Timeouts {
    fn default() -> Self {
        Self { poc_secs: 300, script_secs: 30 }
    }
}

#[derive(Debug, Clone, PartialEq, Serialize, Deserialize)]
#[serde(default, deny_unknown_fields)]
pub struct RunConfig {
    pub n_files: usize,
    pub margin: usize,
    pub t_patches: usize,
    pub chunk_lines: usize,
    pub enable_cpc: bool,
    pub enable_spa: bool,
    pub enhance_stages: BTreeSet<EnhanceStage>,
    pub selection_strategy: SelectionStrategy,
    pub input_type: InputType,
    pub cpc_max_steps: usize,
    pub spa_max_steps: usize,
    pub caps: Caps,
    pub timeouts: Timeouts,
    pub symbols: SymbolBackendConfig,
    pub normalizer: Normalizer,
    /// Sanitizer regexes; the built-in set when absent.
    pub sanitizer_signatures: Option<Vec<String>>,
    /// Optional command run against the selected patch. Off by default.
    pub functional_check: Option<String>,
    pub python: String,
    pub container_runtime: String,
    pub workers: usize,
    pub prices: PriceTable,
}

impl Default for RunConfig {
    fn default() -> Self {
        Self {
            n_files: DEFAULT_TOP_N,
            margin: DEFAULT_MARGIN,
            t_patches: DEFAULT_CANDIDATES,
            chunk_lines: DEFAULT_CHUNK_LINES,
            enable_cpc: true,
            enable_spa: true,
            enhance_stages: [EnhanceStage::Localization, EnhanceStage::Generation].into_iter().collect(),
            selection_strategy: SelectionStrategy::PocVoting,
            input_type: InputType::IssueReport,
            cpc_max_steps: CPC_MAX_STEPS,
            spa_max_steps: SPA_MAX_STEPS,
            caps: Caps::default(),
            timeouts: Timeouts::default(),
            symbols: SymbolBackendConfig::Fallback,
            normalizer: Normalizer::Builtin,
            sanitizer_signatures: None,
            functional_check: None,
            python: "python3".into(),
            container_runtime: "docker".into(),
            workers: 1,
            prices: PriceTable::default(),
        }
    }
}

impl RunConfig {
    pub fn load(path: &Path) -> Result<Self, ConfigError> {
        let config: RunConfig = toml::from_str(&std::fs::read_to_string(path)?)?;
        config.validate()?;
        Ok(config)
    }

    pub fn to_toml(&self) -> String {
        toml::to_string(self).expect("config serializes")
    }

    /// Sampling temperature of each patch candidate.
    pub fn temperatures(&self) -> Vec<f64> {
        (0..self.t_patches).map(candidate_temperature).collect()
    }

    pub fn any_agent(&self) -> bool {
        self.enable_cpc || self.enable_spa
    }

    pub fn enhances(&self, stage: EnhanceStage) -> bool {
        self.any_agent() && self.enhance_stages.contains(&stage)
    }

    /// Reject settings that cannot run or whose effect would be silently
    /// ignored.
    pub fn validate(&self) -> Result<(), ConfigError> {
        let positive = [
            ("n_files", self.n_files),
            ("t_patches", self.t_patches),
            ("chunk_lines", self.chunk_lines),
            ("cpc_max_steps", self.cpc_max_steps),
            ("spa_max_steps", self.spa_max_steps),
            ("workers", self.workers),
            ("caps.script_output_bytes", self.caps.script_output_bytes),
            ("caps.search_results", self.caps.search_results),
            ("caps.reference_results", self.caps.reference_results),
        ];
        for (name, value) in positive {
            if value == 0 {
                return Err(ConfigError::Invalid(format!("{name} must be at least 1")));
            }
        }
        if self.timeouts.poc_secs == 0 || self.timeouts.script_secs == 0 {
            return Err(ConfigError::Invalid("timeouts must be at least one second".into()));
        }
        if self.any_agent() && self.enhance_stages.is_empty() {
            return Err(ConfigError::Invalid(
                "agents are enabled but enhance_stages is empty, so their reports would be discarded".into(),
            ));
        }
        if !self.any_agent() && self.enhance_stages != RunConfig::default().enhance_stages {
            return Err(ConfigError::Invalid("enhance_stages has no effect when both agents are disabled".into()));
        }
        if let Some(patterns) = &self.sanitizer_signatures {
            if patterns.is_empty() {
                return Err(ConfigError::Invalid("sanitizer_signatures must not be empty".into()));
            }
            crate::execution::SanitizerSignatures::new(patterns)
                .map_err(|e| ConfigError::Invalid(format!("bad sanitizer signature: {e}")))?;
        }
        if let Normalizer::External { argv } = &self.normalizer {
            if argv.is_empty() {
                return Err(ConfigError::Invalid("normalizer argv must not be empty".into()));
            }
        }
        Ok(())
    }

    /// The named ablation this configuration realizes, if any.
    pub fn variant(&self) -> Option<AblationVariant> {
        AblationVariant::ALL.into_iter().find(|v| v.matches(self))
    }
}

/// Named pipeline configurations compared in the ablation study.
#[derive(Debug, Clone, Copy, PartialEq, Eq, Hash, Serialize, Deserialize)]
pub enum AblationVariant {
    #[serde(rename = "base")]
    Base,
    #[serde(rename = "cpc")]
    Cpc,
    #[serde(rename = "spa")]
    Spa,
    #[serde(rename = "full")]
    Full,
    #[serde(rename = "enhanceVulnLoc")]
    EnhanceVulnLoc,
    #[serde(rename = "enhancePatchGen")]
    EnhancePatchGen,
    #[serde(rename = "simpleVoting")]
    SimpleVoting,
    #[serde(rename = "sanitizer")]
    Sanitizer,
}

impl AblationVariant {
    pub const ALL: [AblationVariant; 8] = [
        AblationVariant::Base,
        AblationVariant::Cpc,
        AblationVariant::Spa,
        AblationVariant::Full,
        AblationVariant::EnhanceVulnLoc,
        AblationVariant::EnhancePatchGen,
        AblationVariant::SimpleVoting,
        AblationVariant::Sanitizer,
    ];

    pub fn name(self) -> &'static str {
        match self {
            AblationVariant::Base => "base",
            AblationVariant::Cpc => "cpc",
            AblationVariant::Spa => "spa",
            AblationVariant::Full => "full",
            AblationVariant::EnhanceVulnLoc => "enhanceVulnLoc",
            AblationVariant::EnhancePatchGen => "enhancePatchGen",
            AblationVariant::SimpleVoting => "simpleVoting",
            AblationVariant::Sanitizer => "sanitizer",
        }
    }

    pub fn parse(name: &str) -> Option<Self> {
        Self::ALL.into_iter().find(|v| v.name().eq_ignore_ascii_case(name))
    }

    /// Apply this variant's switches on top of `base`.
    pub fn apply(self, base: &RunConfig) -> RunConfig {
        let mut c = base.clone();
        let both: BTreeSet<EnhanceStage> = [EnhanceStage::Localization, EnhanceStage::Generation].into_iter().collect();
        c.enable_cpc = true;
        c.enable_spa = true;
        c.enhance_stages = both;
        c.selection_strategy = SelectionStrategy::PocVoting;
        c.input_type = InputType::IssueReport;
        match self {
            AblationVariant::Base => {
                c.enable_cpc = false;
                c.enable_spa = false;
            }
            AblationVariant::Cpc => c.enable_spa = false,
            AblationVariant::Spa => c.enable_cpc = false,
            AblationVariant::Full => {}
            AblationVariant::EnhanceVulnLoc => c.enhance_stages = [EnhanceStage::Localization].into_iter().collect(),
            AblationVariant::EnhancePatchGen => c.enhance_stages = [EnhanceStage::Generation].into_iter().collect(),
            AblationVariant::SimpleVoting => c.selection_strategy = SelectionStrategy::SimpleVoting,
            AblationVariant::Sanitizer => c.input_type = InputType::SanitizerLog,
        }
        c
    }

    pub fn config(self) -> RunConfig {
        self.apply(&RunConfig::default())
    }

    fn matches(self, config: &RunConfig) -> bool {
        let reference = self.apply(config);
        reference.enable_cpc == config.enable_cpc
            && reference.enable_spa == config.enable_spa
            && reference.enhance_stages == config.enhance_stages
            && reference.selection_strategy == config.selection_strategy
            && reference.input_type == config.input_type
    }
}

impl fmt::Display for AblationVariant {
    fn fmt(&self, f: &mut fmt::Formatter<'_>) -> fmt::Result {
        f.write_str(self.name())
    }
}
