//! Command-line interface.

use std::ffi::OsString;
use std::fs;
use std::io::Write;
use std::path::PathBuf;
use std::sync::Arc;

use anyhow::{bail, Context, Result};
use chrono::NaiveDate;
use clap::{Args, Parser, Subcommand};
use verity_core::report::{render_text, TraceRecord};
use verity_core::{
    classify_politics, normalize_domain, normalize_label, parse_publish_date, plan_expert,
    plan_self_designed, sample_test_set, verify_claim, Checklist, DomainStore, MemoryDomainStore,
    Mode, NewsClaim, PromptSet, RetryPolicy, Retrying, SamplingSpec, SearchProvider, Services,
    Strategy, VeracityLabel,
};

use crate::config::{ProviderKind, RunConfig, Settings};
use crate::dataset::load_dataset;
use crate::harness::{render_table, run_evaluation, write_outputs, Harness};
use crate::offline::{FixtureSearch, ModelSource, NoSearch, ScriptSource, SharedModel};
use crate::providers::{
    credential, ChatCompletionsClient, RecordingSource, SerpApiSearch, CHAT_KEY_VAR, SEARCH_KEY_VAR,
};
use crate::store::FileDomainStore;

pub const EXIT_REAL: i32 = 0;
pub const EXIT_FAKE: i32 = 1;
pub const EXIT_ERROR: i32 = 2;

#[derive(Debug, Parser)]
#[command(
    name = "verity",
    version,
    about = "Check whether a news claim is real or fake"
)]
pub struct Cli {
    #[command(flatten)]
    pub opts: GlobalOpts,
    #[command(subcommand)]
    pub command: Command,
}

fn parse_mode(s: &str) -> Result<Mode, String> {
    match s.to_ascii_lowercase().replace('_', "-").as_str() {
        "expert" => Ok(Mode::Expert),
        "self-designed" | "self" => Ok(Mode::SelfDesigned),
        _ => Err(format!(
            "unknown mode {s:?} (expected expert or self-designed)"
        )),
    }
}

fn parse_strategy(s: &str) -> Result<Strategy, String> {
    match s.to_ascii_lowercase().as_str() {
        "checklist" => Ok(Strategy::ChecklistSummary),
        "majority" => Ok(Strategy::MajorityVote),
        _ => Err(format!(
            "unknown strategy {s:?} (expected checklist or majority)"
        )),
    }
}

#[derive(Debug, Args)]
pub struct GlobalOpts {
    /// TOML configuration file; flags take precedence over it.
    #[arg(long, global = true)]
    pub config: Option<PathBuf>,
    /// Workflow: expert or self-designed.
    #[arg(long, global = true, value_parser = parse_mode)]
    pub mode: Option<Mode>,
    /// Final decision: checklist or majority.
    #[arg(long, global = true, value_parser = parse_strategy)]
    pub strategy: Option<Strategy>,
    /// Remove a tool from every plan (repeatable), e.g. Search_tool.
    #[arg(long = "disable-tool", global = true)]
    pub disable_tool: Vec<String>,
    #[arg(long, global = true, value_enum)]
    pub provider: Option<ProviderKind>,
    /// Script of canned model replies (scripted provider).
    #[arg(long, global = true)]
    pub script: Option<PathBuf>,
    /// Canned search results (scripted provider).
    #[arg(long, global = true)]
    pub search_fixture: Option<PathBuf>,
    /// Domain history file (JSON Lines).
    #[arg(long, global = true)]
    pub db: Option<PathBuf>,
    /// Directory of prompt template overrides.
    #[arg(long, global = true)]
    pub prompt_dir: Option<PathBuf>,
    /// Checklist file with `Tool_tool: criterion` lines.
    #[arg(long, global = true)]
    pub checklist: Option<PathBuf>,
    /// Planner prompt override; self-designed mode only.
    #[arg(long, global = true)]
    pub self_plan_prompt: Option<PathBuf>,
    #[arg(long, global = true)]
    pub model: Option<String>,
    #[arg(long, global = true)]
    pub temperature: Option<f32>,
    /// Chat-completions endpoint URL.
    #[arg(long, global = true)]
    pub llm_endpoint: Option<String>,
    /// Maximum model calls per claim.
    #[arg(long, global = true)]
    pub call_budget: Option<usize>,
    /// Write every model exchange to this JSON Lines file.
    #[arg(long, global = true)]
    pub transcript: Option<PathBuf>,
}

#[derive(Debug, Args)]
pub struct ClaimArgs {
    #[arg(long)]
    pub title: String,
    /// Article URL or bare domain.
    #[arg(long)]
    pub url: Option<String>,
    /// Publication date, MM/DD/YYYY or YYYY-MM-DD.
    #[arg(long)]
    pub date: Option<String>,
    /// Claim id, also the script section used by the scripted provider.
    #[arg(long, default_value = "cli")]
    pub id: String,
}

#[derive(Debug, Subcommand)]
pub enum Command {
    /// Verify one claim. Exit status 0 = real, 1 = fake, 2 = error.
    Verify {
        #[command(flatten)]
        claim: ClaimArgs,
        /// Add the verdict to the domain history (needs --db).
        #[arg(long)]
        record: bool,
        /// Print the trace as JSON instead of text.
        #[arg(long)]
        json: bool,
    },
    /// Show the plan for a claim without running the tools.
    Plan {
        #[command(flatten)]
        claim: ClaimArgs,
    },
    /// Evaluate on a labeled dataset and write a report.
    Evaluate {
        #[arg(long)]
        dataset: PathBuf,
        #[arg(long)]
        seed: Option<u64>,
        /// Sample size.
        #[arg(long)]
        n: Option<usize>,
        /// Class-ratio limit for sampling; 0 disables it.
        #[arg(long)]
        max_ratio: Option<u32>,
        /// Fail on the first malformed dataset line instead of skipping it.
        #[arg(long)]
        strict: bool,
        #[arg(long)]
        out: Option<PathBuf>,
        #[arg(long)]
        parallelism: Option<usize>,
    },
    /// Inspect or edit the domain history.
    Db {
        #[command(subcommand)]
        action: DbCommand,
    },
}

#[derive(Debug, Subcommand)]
pub enum DbCommand {
    /// Record one verified article for a domain.
    Add {
        domain: String,
        /// real or fake (fact-checker labels are accepted too).
        label: String,
        #[arg(long)]
        date: Option<String>,
        #[arg(long)]
        overview: Option<String>,
    },
    /// Print the record for a domain; exit 1 if there is none.
    Show { domain: String },
}

impl Cli {
    fn run_config(&self) -> Result<RunConfig> {
        let o = &self.opts;
        let mut flags = RunConfig::default();
        flags.workflow.mode = o.mode;
        flags.workflow.strategy = o.strategy;
        if !o.disable_tool.is_empty() {
            flags.workflow.disabled_tools = Some(o.disable_tool.clone());
        }
        flags.workflow.prompt_dir = o.prompt_dir.clone();
        flags.workflow.checklist = o.checklist.clone();
        flags.workflow.self_plan_prompt = o.self_plan_prompt.clone();
        flags.run.provider = o.provider;
        flags.run.script = o.script.clone();
        flags.run.search_fixture = o.search_fixture.clone();
        flags.run.db = o.db.clone();
        flags.llm.model_id = o.model.clone();
        flags.llm.temperature = o.temperature;
        flags.llm.endpoint = o.llm_endpoint.clone();
        flags.llm.call_budget = o.call_budget;
        if let Command::Evaluate {
            seed,
            n,
            max_ratio,
            out,
            parallelism,
            ..
        } = &self.command
        {
            flags.run.seed = *seed;
            flags.run.n = *n;
            flags.run.max_ratio = *max_ratio;
            flags.run.out = out.clone();
            flags.run.parallelism = *parallelism;
        }
        let file = match &o.config {
            Some(path) => RunConfig::load(path)?,
            None => RunConfig::default(),
        };
        Ok(flags.over(file))
    }
}

/// Everything built from settings before any claim is processed.
struct Runtime {
    settings: Settings,
    prompts: PromptSet,
    checklist: Checklist,
    models: RecordingSource<Box<dyn ModelSource>>,
    search: Box<dyn SearchProvider>,
    store: Box<dyn DomainStore>,
    file_store: bool,
}

fn open_store(settings: &Settings) -> Result<(Box<dyn DomainStore>, bool)> {
    Ok(match &settings.db {
        Some(path) => (Box::new(FileDomainStore::open(path)?), true),
        None => (Box::new(MemoryDomainStore::new()), false),
    })
}

impl Runtime {
    fn build(settings: Settings) -> Result<Self> {
        let prompts = settings.prompt_set()?;
        let checklist = settings.load_checklist()?;
        let (store, file_store) = open_store(&settings)?;
        let (models, search): (Box<dyn ModelSource>, Box<dyn SearchProvider>) =
            match settings.provider {
                ProviderKind::Scripted => {
                    let script = settings.script.as_ref().expect("checked by resolve");
                    let search: Box<dyn SearchProvider> = match &settings.search_fixture {
                        Some(path) => Box::new(FixtureSearch::load(path)?),
                        None => Box::new(NoSearch),
                    };
                    (Box::new(ScriptSource::load(script)?), search)
                }
                ProviderKind::Live => {
                    let key = credential(CHAT_KEY_VAR)?;
                    let client =
                        ChatCompletionsClient::new(&settings.llm_endpoint, key, settings.timeout);
                    let policy = RetryPolicy {
                        max_attempts: settings.max_attempts,
                        ..RetryPolicy::default()
                    };
                    let model = Retrying::new(client, policy, std::thread::sleep);
                    let search: Box<dyn SearchProvider> = if settings
                        .engine
                        .switches
                        .is_enabled(verity_core::ToolKind::Search)
                    {
                        let key = credential(SEARCH_KEY_VAR).context(
                            "web search needs a SerpApi key (or pass --disable-tool Search_tool)",
                        )?;
                        Box::new(SerpApiSearch::new(
                            &settings.search_endpoint,
                            key,
                            settings.timeout,
                        ))
                    } else {
                        Box::new(NoSearch)
                    };
                    (Box::new(SharedModel(Arc::new(model))), search)
                }
            };
        Ok(Self {
            settings,
            prompts,
            checklist,
            models: RecordingSource::new(models),
            search,
            store,
            file_store,
        })
    }

    fn services<'a>(&'a self, model: &'a dyn verity_core::ChatModel) -> Services<'a> {
        Services {
            model,
            search: self.search.as_ref(),
            store: self.store.as_ref(),
            prompts: &self.prompts,
            checklist: &self.checklist,
        }
    }

    fn write_transcript(&self, path: Option<&PathBuf>) -> Result<()> {
        let Some(path) = path else { return Ok(()) };
        let mut text = String::new();
        for exchange in self.models.exchanges() {
            text.push_str(&serde_json::to_string(&exchange)?);
            text.push('\n');
        }
        fs::write(path, text).with_context(|| format!("writing {}", path.display()))
    }
}

fn build_claim(args: &ClaimArgs) -> Result<NewsClaim> {
    let mut claim = NewsClaim::new(args.id.clone(), args.title.clone())?;
    if let Some(url) = &args.url {
        claim = claim.with_domain(&normalize_domain(url)?)?;
    }
    if let Some(date) = &args.date {
        claim = claim.with_date(parse_publish_date(date)?);
    }
    Ok(claim)
}

fn today() -> NaiveDate {
    chrono::Local::now().date_naive()
}

/// Parses `args` and runs the command. Returns the process exit status.
pub fn run<I, T>(args: I, out: &mut dyn Write, err: &mut dyn Write) -> i32
where
    I: IntoIterator<Item = T>,
    T: Into<OsString> + Clone,
{
    let cli = match Cli::try_parse_from(args) {
        Ok(cli) => cli,
        Err(e) => {
            let code = e.exit_code();
            let text = e.render().to_string();
            if code == 0 {
                let _ = write!(out, "{text}");
            } else {
                let _ = write!(err, "{text}");
            }
            return code;
        }
    };
    match execute(cli, out, err) {
        Ok(code) => code,
        Err(e) => {
            let _ = writeln!(err, "error: {e:#}");
            EXIT_ERROR
        }
    }
}

fn execute(cli: Cli, out: &mut dyn Write, err: &mut dyn Write) -> Result<i32> {
    let settings = Settings::resolve(cli.run_config()?)?;
    let transcript = cli.opts.transcript.clone();
    match cli.command {
        Command::Db { action } => db_command(&settings, action, out),
        Command::Verify {
            claim,
            record,
            json,
        } => {
            if record && settings.db.is_none() {
                bail!("--record needs --db");
            }
            let claim = build_claim(&claim)?;
            let rt = Runtime::build(settings)?;
            let model = rt.models.model_for(claim.claim_id());
            let result = verify_claim(&claim, &rt.services(model.as_ref()), &rt.settings.engine);
            rt.write_transcript(transcript.as_ref())?;
            let v = result?;
            let trace = TraceRecord::from_verification(&claim, &v);
            if json {
                writeln!(out, "{}", serde_json::to_string_pretty(&trace)?)?;
            } else {
                write!(out, "{}", render_text(&trace))?;
            }
            if record {
                match claim.domain_url() {
                    Some(domain) => {
                        let rec = rt.store.record(
                            domain,
                            trace.label,
                            claim.publish_date().unwrap_or_else(today),
                            v.domain_overview.as_deref(),
                        )?;
                        writeln!(
                            err,
                            "recorded {}: {} real / {} fake",
                            rec.domain, rec.real_count, rec.fake_count
                        )?;
                    }
                    None => writeln!(err, "nothing recorded: claim has no domain URL")?,
                }
            }
            Ok(match trace.label {
                VeracityLabel::Real => EXIT_REAL,
                VeracityLabel::Fake => EXIT_FAKE,
            })
        }
        Command::Plan { claim } => {
            let claim = build_claim(&claim)?;
            let rt = Runtime::build(settings)?;
            let model = rt.models.model_for(claim.claim_id());
            let engine = &rt.settings.engine;
            let result = (|| -> Result<_> {
                let politics = classify_politics(&claim, model.as_ref(), &rt.prompts)?;
                Ok(match engine.mode {
                    Mode::Expert => (
                        plan_expert(&claim, &politics, &engine.switches)?,
                        Vec::new(),
                    ),
                    Mode::SelfDesigned => plan_self_designed(
                        &claim,
                        &politics,
                        model.as_ref(),
                        &rt.prompts,
                        &engine.switches,
                    )?,
                })
            })();
            rt.write_transcript(transcript.as_ref())?;
            let (plan, repairs) = result?;
            writeln!(
                out,
                "Politics: {}",
                if plan.politics.is_political {
                    "political"
                } else {
                    "not political"
                }
            )?;
            for (i, step) in plan.steps.iter().enumerate() {
                writeln!(out, "{}. {}", i + 1, step.tool_name())?;
            }
            for r in repairs {
                writeln!(out, "repair: {r}")?;
            }
            Ok(0)
        }
        Command::Evaluate {
            dataset, strict, ..
        } => {
            let loaded = load_dataset(&dataset, strict)?;
            for s in &loaded.skipped {
                writeln!(
                    err,
                    "skipped {} line {}: {}",
                    dataset.display(),
                    s.line,
                    s.reason
                )?;
            }
            let spec = SamplingSpec {
                n: settings.n,
                seed: settings.seed,
                constraint: settings.constraint,
            };
            let records = sample_test_set(&loaded.records, &spec)?;
            let rt = Runtime::build(settings)?;
            let harness = Harness {
                models: &rt.models,
                search: rt.search.as_ref(),
                store: rt.store.as_ref(),
                prompts: &rt.prompts,
                checklist: &rt.checklist,
                parallelism: rt.settings.parallelism,
            };
            let run = run_evaluation(&records, &harness, &rt.settings.engine)?;
            rt.write_transcript(transcript.as_ref())?;
            write_outputs(&rt.settings.out, &run)
                .with_context(|| format!("writing {}", rt.settings.out.display()))?;
            write!(out, "{}", render_table(&run.report))?;
            writeln!(
                err,
                "report written to {}",
                rt.settings.out.join("report.json").display()
            )?;
            if rt.file_store {
                writeln!(
                    err,
                    "note: the domain history is read-only during evaluation"
                )?;
            }
            Ok(0)
        }
    }
}

fn db_command(settings: &Settings, action: DbCommand, out: &mut dyn Write) -> Result<i32> {
    let Some(path) = &settings.db else {
        bail!("db commands need --db or run.db in the config file");
    };
    let store = FileDomainStore::open(path)?;
    match action {
        DbCommand::Add {
            domain,
            label,
            date,
            overview,
        } => {
            let label = normalize_label(&label)?;
            let when = match date {
                Some(d) => parse_publish_date(&d)?,
                None => today(),
            };
            let rec = store.record(&domain, label, when, overview.as_deref())?;
            writeln!(out, "{}", serde_json::to_string(&rec)?)?;
            Ok(0)
        }
        DbCommand::Show { domain } => match store.lookup(&domain)? {
            Some(rec) => {
                writeln!(out, "{}", serde_json::to_string_pretty(&rec)?)?;
                Ok(0)
            }
            None => {
                writeln!(out, "no record for {domain}")?;
                Ok(1)
            }
        },
    }
}
