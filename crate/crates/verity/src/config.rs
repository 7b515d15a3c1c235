//! Run configuration: a TOML file merged under command-line flags, with
//! built-in defaults below both.
//!
//! ```toml
//! [llm]
//! endpoint = "https://api.openai.com/v1/chat/completions"
//! model_id = "gpt-3.5-turbo"
//! temperature = 0.0
//!
//! [workflow]
//! mode = "self-designed"
//! strategy = "majority"
//! disabled_tools = ["Search_tool"]
//!
//! [run]
//! db = "domains.jsonl"
//! parallelism = 4
//! ```
//!
//! Relative paths in the file are resolved against the file's directory.

use std::path::{Path, PathBuf};
use std::time::Duration;

use serde::{Deserialize, Serialize};
use verity_core::evidence::DEFAULT_MAX_RESULTS;
use verity_core::llm::{DEFAULT_CALL_BUDGET, DEFAULT_MAX_OUTPUT_TOKENS, DEFAULT_MODEL_ID};
use verity_core::sampling::DEFAULT_SAMPLE_SIZE;
use verity_core::tools::TemplateKey;
use verity_core::{
    Checklist, EngineConfig, Mode, PromptSet, RatioConstraint, Strategy, ToolKind, ToolSwitches,
};

use crate::providers::{DEFAULT_CHAT_ENDPOINT, DEFAULT_SEARCH_ENDPOINT};
use crate::FileError;

pub const DEFAULT_OUT_DIR: &str = "verity-out";
pub const DEFAULT_TIMEOUT_SECS: u64 = 60;
pub const DEFAULT_MAX_ATTEMPTS: u32 = 4;
pub const DEFAULT_MAX_RATIO: u32 = 2;

#[derive(Debug, Clone, Copy, PartialEq, Eq, Serialize, Deserialize, clap::ValueEnum)]
#[serde(rename_all = "lowercase")]
pub enum ProviderKind {
    /// Chat-completions API and SerpApi, credentials from the environment.
    Live,
    /// Replies from a script file; never touches the network.
    Scripted,
}

#[derive(Debug, thiserror::Error)]
pub enum ConfigError {
    #[error("conflicting options: {0}")]
    Conflict(String),
    #[error("invalid option: {0}")]
    Invalid(String),
    #[error(transparent)]
    File(#[from] FileError),
}

#[derive(Debug, Clone, Default, PartialEq, Deserialize)]
#[serde(default, deny_unknown_fields)]
pub struct LlmSection {
    pub endpoint: Option<String>,
    pub model_id: Option<String>,
    pub temperature: Option<f32>,
    pub max_output_tokens: Option<u32>,
    pub call_budget: Option<usize>,
    pub max_attempts: Option<u32>,
    pub timeout_secs: Option<u64>,
}

#[derive(Debug, Clone, Default, PartialEq, Deserialize)]
#[serde(default, deny_unknown_fields)]
pub struct SearchSection {
    pub endpoint: Option<String>,
    pub max_results: Option<usize>,
}

#[derive(Debug, Clone, Default, PartialEq, Deserialize)]
#[serde(default, deny_unknown_fields)]
pub struct WorkflowSection {
    pub mode: Option<Mode>,
    pub strategy: Option<Strategy>,
    pub disabled_tools: Option<Vec<String>>,
    pub prompt_dir: Option<PathBuf>,
    pub checklist: Option<PathBuf>,
    pub self_plan_prompt: Option<PathBuf>,
}

#[derive(Debug, Clone, Default, PartialEq, Deserialize)]
#[serde(default, deny_unknown_fields)]
pub struct RunSection {
    pub provider: Option<ProviderKind>,
    pub script: Option<PathBuf>,
    pub search_fixture: Option<PathBuf>,
    pub db: Option<PathBuf>,
    pub out: Option<PathBuf>,
    pub parallelism: Option<usize>,
    pub seed: Option<u64>,
    pub n: Option<usize>,
    /// 0 disables the class-ratio limit.
    pub max_ratio: Option<u32>,
}

/// Partial settings, from a file or from flags.
#[derive(Debug, Clone, Default, PartialEq, Deserialize)]
#[serde(default, deny_unknown_fields)]
pub struct RunConfig {
    pub llm: LlmSection,
    pub search: SearchSection,
    pub workflow: WorkflowSection,
    pub run: RunSection,
}

fn rebase(base: &Path, p: &mut Option<PathBuf>) {
    if let Some(path) = p {
        if path.is_relative() {
            *path = base.join(&*path);
        }
    }
}

impl RunConfig {
    pub fn parse(text: &str) -> Result<Self, toml::de::Error> {
        toml::from_str(text)
    }

    pub fn load(path: &Path) -> Result<Self, ConfigError> {
        let text = crate::read_file(path)?;
        let mut cfg = Self::parse(&text).map_err(|e| {
            let line = e
                .span()
                .map(|s| text[..s.start].matches('\n').count() + 1)
                .unwrap_or(0);
            FileError::format(path, line, e.message().to_string())
        })?;
        let base = path.parent().unwrap_or(Path::new(""));
        for p in [
            &mut cfg.workflow.prompt_dir,
            &mut cfg.workflow.checklist,
            &mut cfg.workflow.self_plan_prompt,
            &mut cfg.run.script,
            &mut cfg.run.search_fixture,
            &mut cfg.run.db,
            &mut cfg.run.out,
        ] {
            rebase(base, p);
        }
        Ok(cfg)
    }

    /// Field-wise: values set in `self` win over `lower`.
    pub fn over(self, lower: RunConfig) -> RunConfig {
        let (a, b) = (self, lower);
        RunConfig {
            llm: LlmSection {
                endpoint: a.llm.endpoint.or(b.llm.endpoint),
                model_id: a.llm.model_id.or(b.llm.model_id),
                temperature: a.llm.temperature.or(b.llm.temperature),
                max_output_tokens: a.llm.max_output_tokens.or(b.llm.max_output_tokens),
                call_budget: a.llm.call_budget.or(b.llm.call_budget),
                max_attempts: a.llm.max_attempts.or(b.llm.max_attempts),
                timeout_secs: a.llm.timeout_secs.or(b.llm.timeout_secs),
            },
            search: SearchSection {
                endpoint: a.search.endpoint.or(b.search.endpoint),
                max_results: a.search.max_results.or(b.search.max_results),
            },
            workflow: WorkflowSection {
                mode: a.workflow.mode.or(b.workflow.mode),
                strategy: a.workflow.strategy.or(b.workflow.strategy),
                disabled_tools: a.workflow.disabled_tools.or(b.workflow.disabled_tools),
                prompt_dir: a.workflow.prompt_dir.or(b.workflow.prompt_dir),
                checklist: a.workflow.checklist.or(b.workflow.checklist),
                self_plan_prompt: a.workflow.self_plan_prompt.or(b.workflow.self_plan_prompt),
            },
            run: RunSection {
                provider: a.run.provider.or(b.run.provider),
                script: a.run.script.or(b.run.script),
                search_fixture: a.run.search_fixture.or(b.run.search_fixture),
                db: a.run.db.or(b.run.db),
                out: a.run.out.or(b.run.out),
                parallelism: a.run.parallelism.or(b.run.parallelism),
                seed: a.run.seed.or(b.run.seed),
                n: a.run.n.or(b.run.n),
                max_ratio: a.run.max_ratio.or(b.run.max_ratio),
            },
        }
    }
}

/// Fully resolved settings.
#[derive(Debug, Clone, PartialEq)]
pub struct Settings {
    pub provider: ProviderKind,
    pub script: Option<PathBuf>,
    pub search_fixture: Option<PathBuf>,
    pub llm_endpoint: String,
    pub search_endpoint: String,
    pub model_id: String,
    pub temperature: f32,
    pub max_output_tokens: u32,
    pub max_attempts: u32,
    pub timeout: Duration,
    pub engine: EngineConfig,
    pub prompt_dir: Option<PathBuf>,
    pub checklist: Option<PathBuf>,
    pub self_plan_prompt: Option<PathBuf>,
    pub db: Option<PathBuf>,
    pub out: PathBuf,
    pub parallelism: usize,
    pub seed: u64,
    pub n: usize,
    pub constraint: RatioConstraint,
}

impl Settings {
    /// Applies defaults and checks the combination. Nothing here touches
    /// the network, so conflicts surface before any provider is built.
    pub fn resolve(cfg: RunConfig) -> Result<Self, ConfigError> {
        let RunConfig {
            llm,
            search,
            workflow,
            run,
        } = cfg;
        let provider = match run.provider {
            Some(p) => p,
            None if run.script.is_some() => ProviderKind::Scripted,
            None => ProviderKind::Live,
        };
        match provider {
            ProviderKind::Live if run.script.is_some() => {
                return Err(ConfigError::Conflict(
                    "--script requires --provider scripted".into(),
                ))
            }
            ProviderKind::Live if run.search_fixture.is_some() => {
                return Err(ConfigError::Conflict(
                    "--search-fixture requires --provider scripted".into(),
                ))
            }
            ProviderKind::Scripted if run.script.is_none() => {
                return Err(ConfigError::Invalid(
                    "--provider scripted needs --script".into(),
                ))
            }
            _ => {}
        }

        let mode = workflow.mode.unwrap_or_default();
        if mode == Mode::Expert && workflow.self_plan_prompt.is_some() {
            return Err(ConfigError::Conflict(
                "--self-plan-prompt only applies to --mode self-designed".into(),
            ));
        }

        let mut switches = ToolSwitches::all_enabled();
        for name in workflow.disabled_tools.unwrap_or_default() {
            let kind: ToolKind = name
                .parse()
                .map_err(|_| ConfigError::Invalid(format!("unknown tool {name:?}")))?;
            switches = switches.disable(kind);
        }
        if ToolKind::ALL.iter().all(|&k| !switches.is_enabled(k)) {
            return Err(ConfigError::Invalid("every tool is disabled".into()));
        }

        let temperature = llm.temperature.unwrap_or(0.0);
        if !(0.0..=2.0).contains(&temperature) {
            return Err(ConfigError::Invalid(format!(
                "temperature {temperature} outside [0, 2]"
            )));
        }
        let positive = |v: usize, what: &str| {
            if v == 0 {
                Err(ConfigError::Invalid(format!("{what} must be at least 1")))
            } else {
                Ok(v)
            }
        };
        let parallelism = positive(run.parallelism.unwrap_or(1), "parallelism")?;
        let call_budget = positive(
            llm.call_budget.unwrap_or(DEFAULT_CALL_BUDGET),
            "call budget",
        )?;
        let max_results = positive(
            search.max_results.unwrap_or(DEFAULT_MAX_RESULTS),
            "max results",
        )?;
        let n = positive(run.n.unwrap_or(DEFAULT_SAMPLE_SIZE), "sample size")?;
        let max_output_tokens = llm.max_output_tokens.unwrap_or(DEFAULT_MAX_OUTPUT_TOKENS);
        if max_output_tokens == 0 {
            return Err(ConfigError::Invalid(
                "max_output_tokens must be at least 1".into(),
            ));
        }

        Ok(Settings {
            provider,
            script: run.script,
            search_fixture: run.search_fixture,
            llm_endpoint: llm.endpoint.unwrap_or_else(|| DEFAULT_CHAT_ENDPOINT.into()),
            search_endpoint: search
                .endpoint
                .unwrap_or_else(|| DEFAULT_SEARCH_ENDPOINT.into()),
            model_id: llm.model_id.unwrap_or_else(|| DEFAULT_MODEL_ID.into()),
            temperature,
            max_output_tokens,
            max_attempts: llm.max_attempts.unwrap_or(DEFAULT_MAX_ATTEMPTS).max(1),
            timeout: Duration::from_secs(llm.timeout_secs.unwrap_or(DEFAULT_TIMEOUT_SECS).max(1)),
            engine: EngineConfig {
                mode,
                strategy: workflow.strategy.unwrap_or_default(),
                switches,
                max_results,
                call_budget,
            },
            prompt_dir: workflow.prompt_dir,
            checklist: workflow.checklist,
            self_plan_prompt: workflow.self_plan_prompt,
            db: run.db,
            out: run.out.unwrap_or_else(|| DEFAULT_OUT_DIR.into()),
            parallelism,
            seed: run.seed.unwrap_or(0),
            n,
            constraint: match run.max_ratio.unwrap_or(DEFAULT_MAX_RATIO) {
                0 => RatioConstraint::Unconstrained,
                k => RatioConstraint::MaxRatio(k),
            },
        })
    }

    /// Built-in templates, overridden by `<prompt_dir>/<name>.txt` and
    /// `<prompt_dir>/system.txt` where present, then by the self-plan prompt.
    pub fn prompt_set(&self) -> Result<PromptSet, FileError> {
        let mut prompts = PromptSet::default();
        prompts.model_id = self.model_id.clone();
        prompts.temperature = self.temperature;
        prompts.max_output_tokens = self.max_output_tokens;
        let mut overrides: Vec<(TemplateKey, PathBuf)> = Vec::new();
        if let Some(dir) = &self.prompt_dir {
            if !dir.is_dir() {
                return Err(FileError::Io {
                    path: dir.clone(),
                    source: std::io::Error::new(std::io::ErrorKind::NotFound, "not a directory"),
                });
            }
            let system = dir.join("system.txt");
            if system.exists() {
                prompts.system_text = crate::read_file(&system)?.trim().to_string();
            }
            for key in TemplateKey::ALL {
                let path = dir.join(format!("{}.txt", key.file_stem()));
                if path.exists() {
                    overrides.push((key, path));
                }
            }
        }
        if let Some(path) = &self.self_plan_prompt {
            overrides.push((TemplateKey::Planner, path.clone()));
        }
        for (key, path) in overrides {
            let body = crate::read_file(&path)?;
            if !body.contains("{descriptor}") {
                return Err(FileError::format(
                    &path,
                    1,
                    "template lacks a {descriptor} placeholder",
                ));
            }
            prompts.set_template(key, body);
        }
        Ok(prompts)
    }

    pub fn load_checklist(&self) -> Result<Checklist, FileError> {
        match &self.checklist {
            None => Ok(Checklist::default()),
            Some(path) => {
                let text = crate::read_file(path)?;
                Checklist::parse(&text).map_err(|e| FileError::format(path, e.line, e.reason))
            }
        }
    }
}
