use std::path::{Path, PathBuf};

use serde::{Deserialize, Serialize};

use crate::annotator::{CorpusPurpose, ScenarioSpec};
use crate::catalog::{SplitPart, DEFAULT_MAX_SEQUENCE_LEN};
use crate::eval::{EvalOptions, EvalScenario};
use crate::matcher::{DEFAULT_ALPHA, DEFAULT_NEGATIVES, DEFAULT_WINDOW};

use super::CliError;

/// Environment variable holding teacher/scorer credentials.
pub const API_KEY_ENV: &str = "RECPROMPT_API_KEY";

/// The single JSON document driving every command.
#[derive(Debug, Clone, PartialEq, Serialize, Deserialize)]
#[serde(deny_unknown_fields)]
pub struct RunConfig {
    pub dataset: DatasetConfig,
    #[serde(default = "default_kcore")]
    pub kcore: usize,
    #[serde(default = "default_max_len")]
    pub max_sequence_len: usize,
    pub seed: u64,
    pub output_dir: PathBuf,
    #[serde(default)]
    pub teacher: TeacherConfig,
    /// Prompt file; the built-in prompts when absent.
    #[serde(default)]
    pub prompts: Option<PathBuf>,
    #[serde(default)]
    pub annotate: AnnotateConfig,
    #[serde(default)]
    pub corpus: CorpusConfig,
    #[serde(default)]
    pub scorer: ScorerConfig,
    #[serde(default)]
    pub pool: PoolConfig,
    #[serde(default)]
    pub eval: EvalConfig,
    #[serde(default)]
    pub audit: AuditConfig,
    #[serde(default)]
    pub heldout: Option<HeldoutConfig>,
}

fn default_kcore() -> usize {
    5
}

fn default_max_len() -> usize {
    DEFAULT_MAX_SEQUENCE_LEN
}

#[derive(Debug, Clone, PartialEq, Serialize, Deserialize)]
#[serde(deny_unknown_fields)]
pub struct DatasetConfig {
    pub name: String,
    pub interactions: PathBuf,
    pub items: PathBuf,
    /// Optional `{"item", "query"}` lines for the product-search split.
    #[serde(default)]
    pub queries: Option<PathBuf>,
    #[serde(default = "default_error_rate")]
    pub max_error_rate: f64,
}

fn default_error_rate() -> f64 {
    0.01
}

#[derive(Debug, Clone, PartialEq, Default, Serialize, Deserialize)]
#[serde(tag = "kind", rename_all = "snake_case", deny_unknown_fields)]
pub enum TeacherConfig {
    #[default]
    Deterministic,
    Fixture {
        path: PathBuf,
    },
    Live {
        endpoint: String,
    },
}

#[derive(Debug, Clone, PartialEq, Serialize, Deserialize)]
#[serde(deny_unknown_fields)]
pub struct AnnotateConfig {
    #[serde(default = "all_parts")]
    pub parts: Vec<SplitPart>,
    #[serde(default)]
    pub max_upstream_calls: Option<usize>,
    #[serde(default = "default_concurrency")]
    pub concurrency: usize,
}

fn all_parts() -> Vec<SplitPart> {
    vec![SplitPart::Train, SplitPart::Validation, SplitPart::Test]
}

fn default_concurrency() -> usize {
    4
}

impl Default for AnnotateConfig {
    fn default() -> Self {
        AnnotateConfig {
            parts: all_parts(),
            max_upstream_calls: None,
            concurrency: default_concurrency(),
        }
    }
}

#[derive(Debug, Clone, PartialEq, Serialize, Deserialize)]
#[serde(deny_unknown_fields)]
pub struct CorpusConfig {
    #[serde(default)]
    pub scenarios: Vec<ScenarioSpec>,
    #[serde(default = "train")]
    pub part: SplitPart,
    #[serde(default)]
    pub purpose: CorpusPurpose,
    #[serde(default = "default_negatives")]
    pub negatives: usize,
}

fn train() -> SplitPart {
    SplitPart::Train
}

fn default_negatives() -> usize {
    DEFAULT_NEGATIVES
}

impl Default for CorpusConfig {
    fn default() -> Self {
        CorpusConfig {
            scenarios: Vec::new(),
            part: SplitPart::Train,
            purpose: CorpusPurpose::Training,
            negatives: DEFAULT_NEGATIVES,
        }
    }
}

#[derive(Debug, Clone, PartialEq, Default, Serialize, Deserialize)]
#[serde(tag = "kind", rename_all = "kebab-case", deny_unknown_fields)]
pub enum ScorerConfig {
    #[default]
    Lexical,
    MockOracle,
    MockInverseOracle,
    MockRandom {
        seed: u64,
    },
    Fixture {
        path: PathBuf,
    },
    Remote {
        endpoint: String,
    },
}

impl ScorerConfig {
    /// Parse the `--scorer` flag: `lexical`, `mock-oracle`,
    /// `mock-inverse-oracle`, `mock-random:SEED`, `fixture:PATH` or
    /// `remote:URL`.
    pub fn parse_flag(s: &str) -> Result<Self, String> {
        let (kind, arg) = match s.split_once(':') {
            Some((k, a)) => (k, Some(a)),
            None => (s, None),
        };
        match (kind, arg) {
            ("lexical", None) => Ok(ScorerConfig::Lexical),
            ("mock-oracle", None) => Ok(ScorerConfig::MockOracle),
            ("mock-inverse-oracle", None) => Ok(ScorerConfig::MockInverseOracle),
            ("mock-random", Some(seed)) => seed
                .parse()
                .map(|seed| ScorerConfig::MockRandom { seed })
                .map_err(|e| format!("mock-random seed: {e}")),
            ("fixture", Some(path)) => Ok(ScorerConfig::Fixture { path: path.into() }),
            ("remote", Some(url)) => Ok(ScorerConfig::Remote { endpoint: url.into() }),
            _ => Err(format!(
                "unknown scorer {s:?}; expected lexical, mock-oracle, mock-inverse-oracle, \
                 mock-random:SEED, fixture:PATH or remote:URL"
            )),
        }
    }
}

#[derive(Debug, Clone, Copy, PartialEq, Eq, Default, Serialize, Deserialize, clap::ValueEnum)]
#[serde(rename_all = "snake_case")]
pub enum PoolChoice {
    #[default]
    Uniform,
    Hard,
    Large,
}

#[derive(Debug, Clone, PartialEq, Serialize, Deserialize)]
#[serde(deny_unknown_fields)]
pub struct PoolConfig {
    #[serde(default)]
    pub kind: PoolChoice,
    #[serde(default = "default_negatives")]
    pub negatives: usize,
    #[serde(default = "default_alpha")]
    pub alpha: f64,
    #[serde(default = "default_window")]
    pub window: usize,
}

fn default_alpha() -> f64 {
    DEFAULT_ALPHA
}

fn default_window() -> usize {
    DEFAULT_WINDOW
}

impl Default for PoolConfig {
    fn default() -> Self {
        PoolConfig {
            kind: PoolChoice::Uniform,
            negatives: DEFAULT_NEGATIVES,
            alpha: DEFAULT_ALPHA,
            window: DEFAULT_WINDOW,
        }
    }
}

#[derive(Debug, Clone, PartialEq, Default, Serialize, Deserialize)]
#[serde(deny_unknown_fields)]
pub struct EvalConfig {
    #[serde(default)]
    pub scenarios: Vec<EvalScenario>,
    #[serde(default)]
    pub options: EvalOptions,
}

#[derive(Debug, Clone, PartialEq, Serialize, Deserialize)]
#[serde(deny_unknown_fields)]
pub struct AuditConfig {
    #[serde(default = "default_audit_n")]
    pub n_per_kind: usize,
}

fn default_audit_n() -> usize {
    100
}

impl Default for AuditConfig {
    fn default() -> Self {
        AuditConfig {
            n_per_kind: default_audit_n(),
        }
    }
}

#[derive(Debug, Clone, PartialEq, Serialize, Deserialize)]
#[serde(deny_unknown_fields)]
pub struct HeldoutConfig {
    pub scenario: EvalScenario,
    pub subsets: Vec<SubsetConfig>,
}

#[derive(Debug, Clone, PartialEq, Serialize, Deserialize)]
#[serde(deny_unknown_fields)]
pub struct SubsetConfig {
    pub id: String,
    pub scorer: ScorerConfig,
}

impl RunConfig {
    /// Parse and validate a config file. Relative paths are resolved
    /// against the file's directory.
    pub fn load(path: &Path) -> Result<Self, CliError> {
        let text = std::fs::read_to_string(path)
            .map_err(|e| CliError::Config(format!("{}: {e}", path.display())))?;
        let mut config = Self::parse(&text)?;
        let base = path.parent().unwrap_or(Path::new("."));
        config.resolve(base);
        config.validate()?;
        Ok(config)
    }

    /// Parse without touching the file system. Errors name the offending
    /// field path.
    pub fn parse(text: &str) -> Result<Self, CliError> {
        let de = &mut serde_json::Deserializer::from_str(text);
        serde_path_to_error::deserialize(de).map_err(|e| {
            let path = e.path().to_string();
            CliError::Config(format!("at `{path}`: {}", e.into_inner()))
        })
    }

    fn resolve(&mut self, base: &Path) {
        let fix = |p: &mut PathBuf| {
            if p.is_relative() {
                *p = base.join(&*p);
            }
        };
        fix(&mut self.dataset.interactions);
        fix(&mut self.dataset.items);
        if let Some(q) = &mut self.dataset.queries {
            fix(q);
        }
        fix(&mut self.output_dir);
        if let Some(p) = &mut self.prompts {
            fix(p);
        }
        if let TeacherConfig::Fixture { path } = &mut self.teacher {
            fix(path);
        }
        for s in self.scorers_mut() {
            if let ScorerConfig::Fixture { path } = s {
                fix(path);
            }
        }
    }

    fn scorers_mut(&mut self) -> Vec<&mut ScorerConfig> {
        let mut out = vec![&mut self.scorer];
        if let Some(h) = &mut self.heldout {
            out.extend(h.subsets.iter_mut().map(|s| &mut s.scorer));
        }
        out
    }

    /// Check that referenced inputs exist and values are in range.
    pub fn validate(&self) -> Result<(), CliError> {
        let must_exist = |field: &str, p: &Path| {
            if p.exists() {
                Ok(())
            } else {
                Err(CliError::Config(format!(
                    "at `{field}`: {} does not exist",
                    p.display()
                )))
            }
        };
        must_exist("dataset.interactions", &self.dataset.interactions)?;
        must_exist("dataset.items", &self.dataset.items)?;
        if let Some(q) = &self.dataset.queries {
            must_exist("dataset.queries", q)?;
        }
        if let Some(p) = &self.prompts {
            must_exist("prompts", p)?;
        }
        if let TeacherConfig::Fixture { path } = &self.teacher {
            must_exist("teacher.path", path)?;
        }
        if self.kcore == 0 {
            return Err(CliError::Config("at `kcore`: must be at least 1".into()));
        }
        if self.max_sequence_len < 3 {
            return Err(CliError::Config(
                "at `max_sequence_len`: must be at least 3".into(),
            ));
        }
        if !(0.0..=1.0).contains(&self.pool.alpha) {
            return Err(CliError::Config("at `pool.alpha`: must lie in [0, 1]".into()));
        }
        if !(0.0..=1.0).contains(&self.eval.options.skip_threshold) {
            return Err(CliError::Config(
                "at `eval.options.skip_threshold`: must lie in [0, 1]".into(),
            ));
        }
        if self.corpus.purpose == CorpusPurpose::Training && self.corpus.part == SplitPart::Test {
            return Err(CliError::Config(
                "at `corpus.part`: a training corpus cannot use the test part".into(),
            ));
        }
        Ok(())
    }
}
