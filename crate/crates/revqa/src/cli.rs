//! `revqa` command line.

use std::ffi::OsString;
use std::io::Write;
use std::path::{Path, PathBuf};

use anyhow::{anyhow, bail, Context, Result};
use clap::{Args, Parser, Subcommand};
use revqa_core::engine::{
    run_puzzle, run_question, Counters, EngineConfig, EngineError, EvidenceSource, RunContext,
    RunFailure, RunResult, DISCLAIMED,
};
use revqa_core::evalkit::DatasetFormat;
use revqa_core::journal::{replay, EntryKind, Outcome};
use revqa_core::kstore::PredicateRegistry;
use revqa_core::retrieval::Index;

use crate::bench::{run_benchmark, BenchOptions};
use crate::executor::Threaded;
use crate::files;

pub const EXIT_OK: i32 = 0;
pub const EXIT_ERROR: i32 = 1;
pub const EXIT_DISCLAIMED: i32 = 2;

#[derive(Debug, Parser)]
#[command(name = "revqa", version, about = "Multi-hop question answering with reversible multi-agent reasoning")]
pub struct Cli {
    #[command(subcommand)]
    pub command: Command,
}

#[derive(Debug, Subcommand)]
pub enum Command {
    /// Answer one question from a corpus or a scripted scenario.
    Ask(AskArgs),
    /// Score a dataset sample.
    Bench(BenchArgs),
    /// Rebuild the final state from a journal.
    Replay(LogArgs),
    /// Print journal entries, optionally of one kind.
    Inspect(InspectArgs),
    /// Validate a corpus (or convert dataset contexts into one).
    Ingest(IngestArgs),
}

#[derive(Debug, Args)]
pub struct AskArgs {
    #[arg(long)]
    pub question: Option<String>,
    #[arg(long)]
    pub config: Option<PathBuf>,
    #[arg(long, conflicts_with = "scenario")]
    pub corpus: Option<PathBuf>,
    #[arg(long)]
    pub scenario: Option<PathBuf>,
    /// Predicate schemas for corpus mode.
    #[arg(long)]
    pub registry: Option<PathBuf>,
    /// Run trace as JSON.
    #[arg(long)]
    pub trace_out: Option<PathBuf>,
    /// Journal as newline-delimited JSON.
    #[arg(long)]
    pub log_out: Option<PathBuf>,
    #[arg(long)]
    pub workers: Option<usize>,
    #[arg(long)]
    pub local_bt_depth: Option<usize>,
}

#[derive(Debug, Args)]
pub struct BenchArgs {
    #[arg(long)]
    pub dataset: PathBuf,
    /// hotpot, 2wiki or musique.
    #[arg(long)]
    pub format: String,
    #[arg(long)]
    pub n: Option<usize>,
    #[arg(long, default_value_t = 0)]
    pub seed: u64,
    #[arg(long)]
    pub config: Option<PathBuf>,
    /// Report as JSON.
    #[arg(long)]
    pub out: Option<PathBuf>,
    /// Also print the per-row table.
    #[arg(long)]
    pub table: bool,
    #[arg(long)]
    pub workers: Option<usize>,
    #[arg(long)]
    pub registry: Option<PathBuf>,
}

#[derive(Debug, Args)]
pub struct LogArgs {
    #[arg(long)]
    pub log: PathBuf,
}

#[derive(Debug, Args)]
pub struct InspectArgs {
    #[arg(long)]
    pub log: PathBuf,
    #[arg(long)]
    pub filter: Option<String>,
}

#[derive(Debug, Args)]
pub struct IngestArgs {
    #[arg(long, conflicts_with = "dataset")]
    pub corpus: Option<PathBuf>,
    #[arg(long, requires = "format")]
    pub dataset: Option<PathBuf>,
    #[arg(long)]
    pub format: Option<String>,
    /// Write the corpus as newline-delimited JSON.
    #[arg(long)]
    pub out: Option<PathBuf>,
}

/// Parses `args` and runs the command. Returns the process exit code.
pub fn run<I, T>(args: I, out: &mut dyn Write, err: &mut dyn Write) -> i32
where
    I: IntoIterator<Item = T>,
    T: Into<OsString> + Clone,
{
    let cli = match Cli::try_parse_from(args) {
        Ok(c) => c,
        Err(e) => {
            use clap::error::ErrorKind;
            return match e.kind() {
                ErrorKind::DisplayHelp | ErrorKind::DisplayVersion => {
                    let _ = write!(out, "{e}");
                    EXIT_OK
                }
                _ => {
                    let _ = write!(err, "{e}");
                    EXIT_ERROR
                }
            };
        }
    };
    let result = match cli.command {
        Command::Ask(a) => ask(&a, out),
        Command::Bench(a) => bench(&a, out).map(|_| EXIT_OK),
        Command::Replay(a) => replay_cmd(&a, out).map(|_| EXIT_OK),
        Command::Inspect(a) => inspect(&a, out).map(|_| EXIT_OK),
        Command::Ingest(a) => ingest(&a, out).map(|_| EXIT_OK),
    };
    match result {
        Ok(code) => code,
        Err(e) if is_broken_pipe(&e) => EXIT_OK,
        Err(e) => {
            let _ = writeln!(err, "error: {e:#}");
            EXIT_ERROR
        }
    }
}

fn is_broken_pipe(e: &anyhow::Error) -> bool {
    e.downcast_ref::<std::io::Error>()
        .is_some_and(|io| io.kind() == std::io::ErrorKind::BrokenPipe)
}

fn base_config(path: Option<&Path>) -> Result<EngineConfig> {
    Ok(match path {
        Some(p) => files::load_config(p)?,
        None => EngineConfig::default(),
    })
}

fn counters_line(rounds: usize, c: &Counters) -> String {
    format!(
        "rounds={rounds} local_backtracks={} global_rollbacks={} challenges={} overrides={} backend_calls={}",
        c.local_backtracks, c.global_rollbacks, c.challenges, c.overrides, c.backend_calls
    )
}

fn ask(a: &AskArgs, out: &mut dyn Write) -> Result<i32> {
    let mut cfg = base_config(a.config.as_deref())?;
    if let Some(w) = a.workers {
        cfg.workers = w;
    }
    if let Some(d) = a.local_bt_depth {
        cfg.local_bt_depth = d;
    }
    if let Some(path) = &a.scenario {
        let sc = files::load_scenario(path)?;
        let cfg = sc.effective_config(&cfg)?;
        let backend = files::build_backend(&cfg, Some(&sc.script))?;
        if !sc.hypotheses.is_empty() {
            return ask_puzzle(a, &sc, &cfg, backend.as_ref(), out);
        }
        let executor = Threaded::new(cfg.workers);
        let ctx = RunContext::for_scenario(backend.as_ref(), &sc)?.with_executor(&executor);
        let question = a.question.clone().unwrap_or_else(|| sc.question.clone());
        return finish_ask(a, run_question(&question, &cfg, &ctx), out);
    }
    let Some(corpus) = &a.corpus else {
        bail!("one of --corpus or --scenario is required");
    };
    let question = a
        .question
        .clone()
        .ok_or_else(|| anyhow!("--question is required with --corpus"))?;
    let docs = files::load_corpus(corpus)?;
    let index = Index::ingest(docs).with_context(|| corpus.display().to_string())?;
    let registry = match &a.registry {
        Some(p) => files::load_registry(p)?,
        None => PredicateRegistry::new(),
    };
    let backend = files::build_backend(&cfg, None)?;
    let executor = Threaded::new(cfg.workers);
    let ctx = RunContext::new(backend.as_ref(), EvidenceSource::Index(&index))
        .with_registry(registry)
        .with_executor(&executor);
    finish_ask(a, run_question(&question, &cfg, &ctx), out)
}

fn finish_ask(
    a: &AskArgs,
    result: Result<RunResult, RunFailure>,
    out: &mut dyn Write,
) -> Result<i32> {
    match result {
        Ok(r) => {
            writeln!(out, "{}", r.answer)?;
            writeln!(out, "{}", counters_line(r.trace.rounds, &r.trace.counters))?;
            if let Some(p) = &a.trace_out {
                files::write_text(p, &serde_json::to_string_pretty(&r.trace)?)?;
            }
            if let Some(p) = &a.log_out {
                files::write_journal(p, &r.trace.journal)?;
            }
            Ok(match r.outcome() {
                Outcome::Answered => EXIT_OK,
                Outcome::Disclaimed => EXIT_DISCLAIMED,
            })
        }
        Err(f) => {
            if let (Some(p), Some(t)) = (&a.trace_out, &f.trace) {
                files::write_text(p, &serde_json::to_string_pretty(t)?)?;
            }
            Err(anyhow!(f.error))
        }
    }
}

fn ask_puzzle(
    a: &AskArgs,
    sc: &revqa_core::engine::Scenario,
    cfg: &EngineConfig,
    backend: &dyn revqa_core::agents::Backend,
    out: &mut dyn Write,
) -> Result<i32> {
    match run_puzzle(sc, cfg, backend) {
        Ok(r) => {
            writeln!(out, "{}", r.answer)?;
            let rolled: Vec<&str> = r
                .trace
                .hypotheses
                .iter()
                .filter(|h| h.backtracked)
                .map(|h| h.label.as_str())
                .collect();
            writeln!(
                out,
                "survivors={} rolled_back={} ambiguous={}",
                r.trace.survivors.join(","),
                rolled.join(","),
                r.ambiguous
            )?;
            if let Some(p) = &a.trace_out {
                files::write_text(p, &serde_json::to_string_pretty(&r.trace)?)?;
            }
            if let Some(p) = &a.log_out {
                files::write_journal(p, &r.trace.journal)?;
            }
            Ok(EXIT_OK)
        }
        Err(EngineError::NoConsistentHypothesis) => {
            writeln!(out, "{DISCLAIMED}")?;
            Ok(EXIT_DISCLAIMED)
        }
        Err(e) => Err(e.into()),
    }
}

fn parse_format(s: &str) -> Result<DatasetFormat> {
    DatasetFormat::parse(s).ok_or_else(|| anyhow!("unknown dataset format `{s}` (hotpot, 2wiki, musique)"))
}

fn bench(a: &BenchArgs, out: &mut dyn Write) -> Result<()> {
    let format = parse_format(&a.format)?;
    let examples = files::load_dataset(&a.dataset, format)?;
    let cfg = base_config(a.config.as_deref())?;
    let backend = files::build_backend(&cfg, None)?;
    let registry = match &a.registry {
        Some(p) => files::load_registry(p)?,
        None => PredicateRegistry::new(),
    };
    let name = a
        .dataset
        .file_stem()
        .map(|s| s.to_string_lossy().into_owned())
        .unwrap_or_else(|| format.as_str().to_string());
    let opts = BenchOptions {
        name,
        n: a.n.unwrap_or(usize::MAX),
        seed: a.seed,
        workers: a.workers.unwrap_or(cfg.workers),
        registry,
    };
    let report = run_benchmark(&examples, &cfg, backend.as_ref(), &opts)?;
    if let Some(p) = &a.out {
        files::write_text(p, &serde_json::to_string_pretty(&report)?)?;
    }
    if a.table {
        write!(out, "{}", report.to_text())?;
    } else {
        writeln!(out, "{}", report.summary_line())?;
    }
    Ok(())
}

fn replay_cmd(a: &LogArgs, out: &mut dyn Write) -> Result<()> {
    let entries = files::load_journal(&a.log)?;
    let state = replay(&entries).with_context(|| a.log.display().to_string())?;
    writeln!(out, "time {}", state.time)?;
    match &state.final_answer {
        Some((answer, outcome)) => writeln!(out, "final answer: {answer} ({})", outcome_str(*outcome))?,
        None => writeln!(out, "final answer: none")?,
    }
    for (agent, set) in &state.sets {
        writeln!(out, "[{agent}] {} live", set.len())?;
        for a in set {
            writeln!(out, "  {:<10} {a}", a.id)?;
        }
    }
    writeln!(out, "checkpoints {}", state.checkpoints.len())?;
    Ok(())
}

fn outcome_str(o: Outcome) -> &'static str {
    match o {
        Outcome::Answered => "answered",
        Outcome::Disclaimed => "disclaimed",
    }
}

fn inspect(a: &InspectArgs, out: &mut dyn Write) -> Result<()> {
    let kind = match &a.filter {
        Some(k) => Some(EntryKind::parse(k).ok_or_else(|| {
            let known: Vec<&str> = EntryKind::ALL.iter().map(|k| k.as_str()).collect();
            anyhow!("unknown entry kind `{k}` (one of {})", known.join(", "))
        })?),
        None => None,
    };
    let entries = files::load_journal(&a.log)?;
    for e in entries.iter().filter(|e| kind.is_none_or(|k| e.kind() == k)) {
        let mut v = serde_json::to_value(e)?;
        let payload = v
            .get_mut("payload")
            .map(serde_json::Value::take)
            .unwrap_or(serde_json::Value::Null);
        writeln!(
            out,
            "{:>5} t={:<5} {:<12} {:<12} {}",
            e.seq,
            e.time,
            e.kind().as_str(),
            e.actor.to_string(),
            payload
        )?;
    }
    Ok(())
}

fn ingest(a: &IngestArgs, out: &mut dyn Write) -> Result<()> {
    let docs = match (&a.corpus, &a.dataset) {
        (Some(p), None) => files::load_corpus(p)?,
        (None, Some(p)) => {
            let format = parse_format(a.format.as_deref().unwrap_or_default())?;
            revqa_core::evalkit::corpus(&files::load_dataset(p, format)?)
        }
        _ => bail!("one of --corpus or --dataset is required"),
    };
    let index = Index::ingest(docs)?;
    writeln!(
        out,
        "documents={} terms={} avgdl={:.2}",
        index.len(),
        index.sparse().terms().count(),
        index.sparse().avgdl()
    )?;
    if let Some(p) = &a.out {
        files::write_text(p, &files::corpus_to_ndjson(index.documents()))?;
    }
    Ok(())
}
