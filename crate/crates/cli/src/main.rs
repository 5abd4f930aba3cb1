//! `proactiva`: ingest knowledge, chat, simulate, evaluate, serve, and audit prompts.
//!
//! Exit status is 0 on success, 1 on a domain error and 2 on a usage error.

use std::io::{BufRead, Write};
use std::path::{Path, PathBuf};
use std::process::ExitCode;
use std::sync::Arc;

use anyhow::{bail, Context, Result};
use clap::error::ErrorKind;
use clap::{Args, CommandFactory, Parser, Subcommand, ValueEnum};
use proactiva_core::config::EngineConfig;
use proactiva_core::dialogue::{DialogueHistory, Transcript};
use proactiva_core::embedding::{Embedder, HashingEmbedder, VectorStore};
use proactiva_core::eval::{render_report, run_evaluation, EvalConfig};
use proactiva_core::knowledge;
use proactiva_core::llm::{ChatBackend, ChatRequest, HttpBackend, Script, ScriptedBackend};
use proactiva_core::proactivity::{Judge, KeywordJudge, LlmRubricJudge, StrategyCatalog};
use proactiva_core::react::{append_trace_log, build_react_prompt, build_reflect_prompt, Engine, Input, TraceRecord};
use proactiva_core::rewriter::{build_rewrite_prompt, load_bank, RewriteBank};
use proactiva_core::simulator::{load_goals, run_dialogue, SimulatedUserGoal};
use proactiva_core::ProactivityLevel;

#[derive(Parser)]
#[command(name = "proactiva", version, about = "Proactive in-vehicle assistant engine")]
struct Cli {
    #[command(flatten)]
    global: Global,
    #[command(subcommand)]
    command: Command,
}

#[derive(Args)]
struct Global {
    /// TOML file overriding engine defaults.
    #[arg(long, global = true)]
    config: Option<PathBuf>,
    /// Where completions come from.
    #[arg(long, global = true, value_enum, default_value_t = BackendKind::Http)]
    backend: BackendKind,
    /// Scripted replies, required with `--backend scripted`.
    #[arg(long, global = true)]
    script: Option<PathBuf>,
    /// Knowledge directory of KB files, or a store dumped by `ingest`.
    #[arg(long, global = true, default_value = "fixtures/kb")]
    corpus: PathBuf,
    /// Rewrite example bank.
    #[arg(long, global = true, default_value = "fixtures/rewrite_bank.json")]
    bank: PathBuf,
}

#[derive(Clone, Copy, PartialEq, Eq, ValueEnum)]
enum BackendKind {
    Scripted,
    Http,
}

#[derive(Clone, Copy, PartialEq, Eq, ValueEnum)]
enum JudgeChoice {
    Keyword,
    Llm,
}

#[derive(Subcommand)]
enum Command {
    /// Index every KB file in a directory and dump the store.
    Ingest {
        dir: PathBuf,
        #[arg(long)]
        out: PathBuf,
    },
    /// Talk to the assistant in the terminal.
    Chat {
        #[arg(long, value_parser = parse_level)]
        level: ProactivityLevel,
        /// Situation the assistant opens with (levels 4 and 5).
        #[arg(long)]
        scenario: Option<String>,
        /// Write the conversation here on exit.
        #[arg(long)]
        transcript: Option<PathBuf>,
    },
    /// Run one simulated dialogue and print it.
    Simulate {
        #[arg(long)]
        goals: PathBuf,
        /// Goal id; defaults to the first goal.
        #[arg(long)]
        goal: Option<String>,
    },
    /// Run simulated dialogues, judge them and report attainment.
    Eval {
        #[arg(long)]
        goals: PathBuf,
        /// A single level or `all`.
        #[arg(long, default_value = "all", value_parser = parse_level_filter)]
        level_strategy: LevelFilter,
        #[arg(long, value_enum, default_value_t = JudgeChoice::Keyword)]
        judge: JudgeChoice,
        #[arg(long, default_value_t = 4, value_parser = clap::value_parser!(u16).range(1..))]
        workers: u16,
        #[arg(long)]
        out: Option<PathBuf>,
    },
    /// Serve the session API.
    Serve {
        #[arg(long, default_value_t = 8080)]
        port: u16,
        #[arg(long, default_value = "127.0.0.1")]
        host: String,
        /// Directory of UI assets served beside the API.
        #[arg(long = "static")]
        static_dir: Option<PathBuf>,
        /// Where closed-session transcripts are written.
        #[arg(long, default_value = "runs/service")]
        root: PathBuf,
    },
    /// Print the strategy text and the prompts assembled for a level.
    DumpPrompts {
        #[arg(long, value_parser = parse_level)]
        level: ProactivityLevel,
        #[arg(long, default_value = "It's so hot in here")]
        question: String,
    },
}

#[derive(Clone, Copy)]
enum LevelFilter {
    All,
    One(ProactivityLevel),
}

fn parse_level(s: &str) -> Result<ProactivityLevel, String> {
    let n: i64 = s.parse().map_err(|_| format!("{s:?} is not a number"))?;
    ProactivityLevel::new(n).map_err(|e| e.to_string())
}

fn parse_level_filter(s: &str) -> Result<LevelFilter, String> {
    if s.eq_ignore_ascii_case("all") {
        Ok(LevelFilter::All)
    } else {
        parse_level(s).map(LevelFilter::One)
    }
}

fn main() -> ExitCode {
    let cli = Cli::parse();
    let needs_backend = !matches!(cli.command, Command::Ingest { .. } | Command::DumpPrompts { .. });
    if needs_backend && cli.global.backend == BackendKind::Scripted && cli.global.script.is_none() {
        Cli::command()
            .error(ErrorKind::MissingRequiredArgument, "--backend scripted needs --script <file>")
            .exit();
    }
    tracing_subscriber::fmt()
        .with_env_filter(tracing_subscriber::EnvFilter::from_env("PROACTIVA_LOG"))
        .with_writer(std::io::stderr)
        .init();
    match run(cli) {
        Ok(()) => ExitCode::SUCCESS,
        Err(e) => {
            eprintln!("error: {e:#}");
            ExitCode::from(1)
        }
    }
}

fn run(cli: Cli) -> Result<()> {
    let g = &cli.global;
    match &cli.command {
        Command::Ingest { dir, out } => ingest(dir, out),
        Command::DumpPrompts { level, question } => dump_prompts(&load_config(g)?, *level, question),
        Command::Chat {
            level,
            scenario,
            transcript,
        } => chat(&build_engine(g)?, *level, scenario.as_deref(), transcript.as_deref()),
        Command::Simulate { goals, goal } => simulate(g, goals, goal.as_deref()),
        Command::Eval {
            goals,
            level_strategy,
            judge,
            workers,
            out,
        } => eval(g, goals, *level_strategy, *judge, usize::from(*workers), out.as_deref()),
        Command::Serve {
            port,
            host,
            static_dir,
            root,
        } => serve(g, host, *port, static_dir.clone(), root),
    }
}

fn load_config(g: &Global) -> Result<EngineConfig> {
    match &g.config {
        Some(path) => EngineConfig::load(path).with_context(|| format!("config {}", path.display())),
        None => Ok(EngineConfig::default()),
    }
}

fn backend(g: &Global) -> Result<Arc<dyn ChatBackend>> {
    match g.backend {
        BackendKind::Http => Ok(Arc::new(HttpBackend::from_env())),
        BackendKind::Scripted => {
            let Some(path) = &g.script else {
                bail!("--backend scripted needs --script <file>");
            };
            let script = Script::load(path).with_context(|| format!("script {}", path.display()))?;
            Ok(Arc::new(ScriptedBackend::new(script)))
        }
    }
}

fn load_store(corpus: &Path, embedder: &dyn Embedder) -> Result<VectorStore> {
    if corpus.is_dir() {
        let kbs = knowledge::load_directory(corpus)?;
        Ok(knowledge::index_knowledge(&kbs, embedder)?)
    } else {
        VectorStore::load(corpus).with_context(|| format!("store {}", corpus.display()))
    }
}

fn build_engine_with(g: &Global, backend: Arc<dyn ChatBackend>) -> Result<Engine> {
    let config = load_config(g)?;
    let embedder: Arc<dyn Embedder> = Arc::new(HashingEmbedder::default());
    let store = load_store(&g.corpus, embedder.as_ref())?;
    let pairs = load_bank(&g.bank).with_context(|| format!("rewrite bank {}", g.bank.display()))?;
    let bank = RewriteBank::new(pairs, embedder.as_ref())?;
    Ok(Engine::new(config, backend, embedder, Arc::new(store), Arc::new(bank))?)
}

fn build_engine(g: &Global) -> Result<Engine> {
    build_engine_with(g, backend(g)?)
}

fn ingest(dir: &Path, out: &Path) -> Result<()> {
    let embedder = HashingEmbedder::default();
    let kbs = knowledge::load_directory(dir)?;
    let store = knowledge::index_knowledge(&kbs, &embedder)?;
    store.save(out)?;
    println!("indexed {} rows from {} files into {}", store.len(), kbs.len(), out.display());
    Ok(())
}

fn print_request(title: &str, request: &ChatRequest) {
    println!("=== {title} ===");
    for m in &request.messages {
        println!("--- {:?} ---\n{}", m.role, m.content);
    }
    if !request.stop_sequences.is_empty() {
        println!("--- stop: {:?} ---", request.stop_sequences);
    }
    println!();
}

fn dump_prompts(config: &EngineConfig, level: ProactivityLevel, question: &str) -> Result<()> {
    let catalog = StrategyCatalog::canonical();
    let strategy = catalog.text(level);
    println!("=== Strategy (level {level}) ===\n{strategy}\n");
    let (rewrite, _) = build_rewrite_prompt(question, &[], config.temperature);
    print_request("Rewrite prompt (zero-shot)", &rewrite);
    let history = DialogueHistory::new("sample");
    print_request("ReAct prompt", &build_react_prompt(config, &history, question, strategy, &[])?);
    print_request(
        "Reflect prompt",
        &build_reflect_prompt(config, &history, question, strategy, "<candidate reply>"),
    );
    Ok(())
}

fn chat(engine: &Engine, level: ProactivityLevel, scenario: Option<&str>, transcript: Option<&Path>) -> Result<()> {
    let mut history = DialogueHistory::new("chat");
    if let Some(event) = scenario {
        let response = engine.respond(level, &history, &Input::Initiation(event.to_string()))?;
        println!("IVCA: {}", response.assistant_text);
        history = response.history;
    }
    let stdin = std::io::stdin();
    let mut lines = stdin.lock().lines();
    loop {
        print!("Driver: ");
        std::io::stdout().flush()?;
        let Some(line) = lines.next().transpose()? else { break };
        let line = line.trim();
        if line == "/quit" {
            break;
        }
        if line.is_empty() {
            continue;
        }
        match engine.respond(level, &history, &Input::Utterance(line.to_string())) {
            Ok(response) => {
                println!("IVCA: {}", response.assistant_text);
                history = response.history;
            }
            Err(e) => eprintln!("error: {e}"),
        }
    }
    println!();
    if let Some(path) = transcript {
        std::fs::write(path, Transcript::new(level, &history).to_json_string())?;
    }
    Ok(())
}

/// Reads a goals file, or every `*.json` file of a directory in name order.
fn read_goals(path: &Path) -> Result<Vec<SimulatedUserGoal>> {
    if !path.is_dir() {
        return load_goals(path).with_context(|| format!("goals {}", path.display()));
    }
    let mut files: Vec<PathBuf> = std::fs::read_dir(path)?
        .map(|e| e.map(|e| e.path()))
        .collect::<std::io::Result<_>>()?;
    files.retain(|p| p.extension().is_some_and(|x| x == "json"));
    files.sort();
    let mut goals = Vec::new();
    for file in files {
        goals.extend(load_goals(&file).with_context(|| format!("goals {}", file.display()))?);
    }
    Ok(goals)
}

fn simulate(g: &Global, goals: &Path, id: Option<&str>) -> Result<()> {
    let goals = read_goals(goals)?;
    let goal = match id {
        Some(id) => goals.iter().find(|x| x.id == id).with_context(|| format!("no goal {id:?}"))?,
        None => goals.first().context("goal file is empty")?,
    };
    let backend = backend(g)?;
    let engine = build_engine_with(g, backend.clone())?;
    let outcome = run_dialogue(&engine, backend.as_ref(), goal);
    println!("{} (level {})", goal.id, goal.level);
    println!("{}", outcome.conversation.render());
    println!("-- {:?} after {} turns", outcome.terminated, outcome.turn_count);
    if let Some(error) = &outcome.error {
        bail!("dialogue failed: {error}");
    }
    Ok(())
}

fn eval(
    g: &Global,
    goals: &Path,
    filter: LevelFilter,
    judge: JudgeChoice,
    workers: usize,
    out: Option<&Path>,
) -> Result<()> {
    let mut goals = read_goals(goals)?;
    if let LevelFilter::One(level) = filter {
        goals.retain(|x| x.level == level);
    }
    let backend = backend(g)?;
    let engine = build_engine_with(g, backend.clone())?;
    let judge: Arc<dyn Judge> = match judge {
        JudgeChoice::Keyword => Arc::new(KeywordJudge),
        JudgeChoice::Llm => Arc::new(LlmRubricJudge::new(backend.clone())),
    };
    let run = run_evaluation(EvalConfig {
        goals: &goals,
        engine: &engine,
        simulator: backend,
        judges: vec![judge],
        workers,
    })?;
    print!("{}", render_report(&run.report));
    if let Some(out) = out {
        let transcripts = out.join("transcripts");
        std::fs::create_dir_all(&transcripts)?;
        std::fs::write(out.join("report.json"), run.report.to_json_string())?;
        let traces = out.join("traces.jsonl");
        std::fs::write(&traces, "")?;
        for outcome in &run.outcomes {
            std::fs::write(
                transcripts.join(format!("{}.json", outcome.goal_id)),
                Transcript::new(outcome.level, &outcome.conversation).to_json_string(),
            )?;
            let records: &[TraceRecord] = &outcome.traces;
            append_trace_log(&traces, records)?;
        }
        println!("wrote {}", out.display());
    }
    Ok(())
}

fn serve(g: &Global, host: &str, port: u16, static_dir: Option<PathBuf>, root: &Path) -> Result<()> {
    // The engine blocks on its backend, so it is built before the runtime starts.
    let engine = Arc::new(build_engine(g)?);
    let store = Arc::new(proactiva_service::SessionStore::new(engine, root));
    let app = proactiva_service::app(store, static_dir);
    let runtime = tokio::runtime::Builder::new_multi_thread().enable_all().build()?;
    runtime.block_on(async {
        let listener = tokio::net::TcpListener::bind((host, port))
            .await
            .with_context(|| format!("bind {host}:{port}"))?;
        eprintln!("serving on http://{}", listener.local_addr()?);
        proactiva_service::serve(listener, app).await?;
        Ok(())
    })
}
