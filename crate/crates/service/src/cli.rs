//! Command-line entry points.

use std::io::{BufRead, Write};
use std::net::SocketAddr;
use std::path::{Path, PathBuf};
use std::sync::Arc;

use anyhow::{bail, Context, Result};
use callsim::corpus::{load_taxonomy, parse_corpus, write_corpus, TagTaxonomy};
use callsim::harness::{evaluate, read_logs, replay_all, write_logs, EvalDeps, EvalOptions, HarnessConfig};
use callsim::validation::{trainee_payload, SessionState};
use callsim::{Ablation, Clock, SimulationInstruction, SystemClock};
use clap::{Parser, Subcommand};

use crate::app::{router, AppState};
use crate::config::ServiceConfig;
use crate::store::EventStore;

#[derive(Debug, Parser)]
#[command(name = "callsim", version, about = "Simulated emergency callers for call-taker training")]
pub struct Cli {
    #[command(subcommand)]
    pub command: Command,
}

#[derive(Debug, Subcommand)]
pub enum Command {
    /// Validate an annotated corpus and write it back out normalised.
    Ingest {
        #[arg(long)]
        corpus: PathBuf,
        #[arg(long)]
        taxonomy: Option<PathBuf>,
        /// Output file; stdout when absent.
        #[arg(long)]
        out: Option<PathBuf>,
    },
    /// Build the knowledge bases and save the trained incident classifier.
    BuildKb {
        #[arg(long)]
        config: PathBuf,
        /// Where to write `classifier.json`.
        #[arg(long)]
        out: PathBuf,
    },
    /// Run the HTTP session service.
    Serve {
        #[arg(long)]
        config: PathBuf,
        #[arg(long)]
        listen: Option<SocketAddr>,
    },
    /// Interactive session on the terminal. Lines are call-taker turns;
    /// `/rate N [reject]` rates the latest caller turn and `/end` hangs up.
    Simulate {
        #[arg(long)]
        config: PathBuf,
        /// JSON file holding a simulation instruction.
        #[arg(long)]
        instruction: PathBuf,
        #[arg(long, default_value = "full")]
        ablation: String,
    },
    /// Replay every runtime of a harness config across its ablation rows.
    Replay {
        #[arg(long)]
        config: PathBuf,
        #[arg(long)]
        out: PathBuf,
    },
    /// Score replayed sessions against reference transcripts.
    Eval {
        #[arg(long)]
        config: PathBuf,
        #[arg(long)]
        sessions: PathBuf,
        /// Reference corpus; the config's corpus when absent.
        #[arg(long)]
        refs: Option<PathBuf>,
        /// Markdown report; a `.tsv` twin is written next to it.
        #[arg(long)]
        report: PathBuf,
    },
}

pub fn run(cli: Cli) -> Result<()> {
    match cli.command {
        Command::Ingest { corpus, taxonomy, out } => ingest(&corpus, taxonomy.as_deref(), out.as_deref()),
        Command::BuildKb { config, out } => build_kb(&config, &out),
        Command::Serve { config, listen } => serve(&config, listen),
        Command::Simulate { config, instruction, ablation } => {
            let stdin = std::io::stdin();
            simulate(&config, &instruction, &ablation, stdin.lock(), std::io::stdout())
        }
        Command::Replay { config, out } => replay(&config, &out),
        Command::Eval { config, sessions, refs, report } => eval(&config, &sessions, refs.as_deref(), &report),
    }
}

fn ingest(corpus: &Path, taxonomy: Option<&Path>, out: Option<&Path>) -> Result<()> {
    let taxonomy = match taxonomy {
        Some(p) => load_taxonomy(p)?,
        None => TagTaxonomy::bundled(),
    };
    let calls = parse_corpus(corpus, &taxonomy)?;
    match out {
        Some(p) => {
            let f = std::fs::File::create(p).with_context(|| format!("creating {}", p.display()))?;
            write_corpus(&calls, std::io::BufWriter::new(f))?;
        }
        None => write_corpus(&calls, std::io::stdout().lock())?,
    }
    let turns: usize = calls.iter().map(|c| c.turns.len()).sum();
    eprintln!("{} calls, {turns} turns", calls.len());
    Ok(())
}

fn build_kb(config: &Path, out: &Path) -> Result<()> {
    let config = ServiceConfig::load(config)?;
    let engine = config.engine()?;
    std::fs::create_dir_all(out).with_context(|| format!("creating {}", out.display()))?;
    let path = out.join("classifier.json");
    engine.classifier.save(&path)?;
    let k = &engine.knowledge;
    eprintln!(
        "{} calls indexed, {} addresses, {} map edges, {} protocol trees; classifier saved to {}",
        k.retrievable.entries().len(),
        k.gazetteer.len(),
        k.connectivity.edge_count(),
        k.protocols.len(),
        path.display()
    );
    Ok(())
}

fn serve(config: &Path, listen: Option<SocketAddr>) -> Result<()> {
    let config = ServiceConfig::load(config)?;
    let engine = config.engine()?;
    let store = EventStore::open(&config.store)?;
    let ablation = Ablation::from_row_name(&config.ablation).expect("checked on load");
    let token = config.instructor_token();
    if token.is_none() {
        eprintln!("instructor export disabled: no token configured");
    }
    let state = AppState::new(engine, store, Arc::new(SystemClock), token, ablation)?;
    let addr = listen.unwrap_or(config.listen);
    let rt = tokio::runtime::Runtime::new()?;
    rt.block_on(async move {
        let listener = tokio::net::TcpListener::bind(addr).await.with_context(|| format!("binding {addr}"))?;
        eprintln!("listening on {}", listener.local_addr()?);
        axum::serve(listener, router(Arc::new(state))).await?;
        Ok(())
    })
}

/// Terminal session loop over arbitrary input and output streams.
pub fn simulate<R: BufRead, W: Write>(
    config: &Path,
    instruction: &Path,
    ablation: &str,
    input: R,
    mut out: W,
) -> Result<()> {
    let config = ServiceConfig::load(config)?;
    let engine = config.engine()?;
    let ablation = Ablation::from_row_name(ablation).with_context(|| format!("unknown ablation row {ablation:?}"))?;
    let text = std::fs::read_to_string(instruction).with_context(|| format!("reading {}", instruction.display()))?;
    let instruction: SimulationInstruction = serde_json::from_str(&text)?;
    let clock = SystemClock;
    let deps = engine.deps(&clock);
    let id = format!("cli-{}", clock.now_ms());
    let mut s = SessionState::new(id, instruction, ablation, &engine.knowledge, &engine.profiles, &engine.generation)?;
    let i = s.open(&deps)?;
    writeln!(out, "caller: {}", s.history[i].text)?;
    for line in input.lines() {
        let line = line?;
        let line = line.trim();
        if line.is_empty() {
            continue;
        }
        if line == "/end" {
            break;
        }
        if let Some(rest) = line.strip_prefix("/rate") {
            let mut parts = rest.split_whitespace();
            let rating: u8 = match parts.next().map(str::parse) {
                Some(Ok(r)) => r,
                _ => {
                    writeln!(out, "usage: /rate N [reject]")?;
                    continue;
                }
            };
            let reject = parts.next() == Some("reject");
            let last = s.history.len() - 1;
            if let Err(e) = s.record_feedback(last, rating, None, reject, &clock) {
                writeln!(out, "error: {e}")?;
                continue;
            }
            if reject {
                let i = s.regenerate(last, &deps)?;
                writeln!(out, "caller: {}", s.history[i].text)?;
            }
            continue;
        }
        match s.respond(line, &deps) {
            Ok(i) => writeln!(out, "caller: {}", s.history[i].text)?,
            Err(e) => writeln!(out, "error: {e}")?,
        }
    }
    s.end()?;
    let view = trainee_payload(&s, &engine.knowledge.taxonomy);
    writeln!(out, "{}", serde_json::to_string(&view)?)?;
    Ok(())
}

fn replay(config: &Path, out: &Path) -> Result<()> {
    let config = HarnessConfig::load(config)?;
    let engine = config.engine()?;
    let runs = config.expand(&engine.knowledge.protocols)?;
    let logs = replay_all(&runs, &engine)?;
    write_logs(&logs, out)?;
    eprintln!("{} session logs written to {}", logs.len(), out.display());
    Ok(())
}

fn eval(config: &Path, sessions: &Path, refs: Option<&Path>, report: &Path) -> Result<()> {
    let config = HarnessConfig::load(config)?;
    let engine = config.engine()?;
    let logs = read_logs(sessions)?;
    if logs.is_empty() {
        bail!("no session logs in {}", sessions.display());
    }
    let refs = parse_corpus(refs.unwrap_or(&config.data.corpus), &engine.knowledge.taxonomy)?;
    let r = evaluate(&logs, &refs, &EvalDeps::of(&engine), &EvalOptions::default())?;
    std::fs::write(report, r.to_markdown()).with_context(|| format!("writing {}", report.display()))?;
    let tsv = report.with_extension("tsv");
    std::fs::write(&tsv, r.to_tsv()).with_context(|| format!("writing {}", tsv.display()))?;
    eprintln!("{} sessions scored; report in {} and {}", logs.len(), report.display(), tsv.display());
    Ok(())
}
