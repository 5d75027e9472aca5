use std::fs::File;
use std::io::{BufWriter, Write};
use std::path::{Path, PathBuf};
use std::process::ExitCode;
use std::sync::Arc;
use std::time::Instant;

use anyhow::{bail, Context};
use clap::{Parser, Subcommand, ValueEnum};

use cec_core::agent::{train_cec, write_training_log, AgentConfig, DdqnAgent};
use cec_core::lstm::{
    train_lstm_int, train_lstm_req, LstmIntConfig, LstmIntModel, LstmReqConfig, LstmReqModel,
};
use cec_core::policy::{PolicyContext, PolicyId};
use cec_core::sim::{
    compare, run_cec, run_fif_selector, run_simulation, SimulationConfig, SimulationReport,
};
use cec_core::trace::{generate_from_spec, load_trace, GeneratorSpec, Trace};
use cec_core::virtual_cache::EnsembleConfig;

#[derive(Parser)]
#[command(name = "cec", version, about = "Trace-driven edge cache simulator")]
struct Cli {
    #[command(subcommand)]
    command: Command,
}

#[derive(clap::Args)]
struct RunArgs {
    #[arg(long)]
    trace: PathBuf,
    #[arg(long)]
    capacity: usize,
    /// Leading requests excluded from metrics.
    #[arg(long, default_value_t = 0)]
    warmup: usize,
    /// Requests per instantaneous hit-ratio slot.
    #[arg(long, default_value_t = 500)]
    slot_size: usize,
    #[arg(long, default_value_t = 0)]
    seed: u64,
}

#[derive(clap::Args)]
struct ModelArgs {
    /// Trained LSTM-Int model; trained on the trace when needed and absent.
    #[arg(long)]
    lstm_int: Option<PathBuf>,
    /// Trained LSTM-Req models (repeatable).
    #[arg(long)]
    lstm_req: Vec<PathBuf>,
}

#[derive(Clone, Copy, ValueEnum)]
enum LstmKind {
    Int,
    Req,
}

#[derive(Subcommand)]
enum Command {
    /// Generate a synthetic trace from a JSON generator spec.
    GenTrace {
        spec: PathBuf,
        #[arg(short, long)]
        output: PathBuf,
        #[arg(long, default_value_t = 0)]
        seed: u64,
    },
    /// Run one policy over a trace.
    Simulate {
        #[command(flatten)]
        run: RunArgs,
        #[arg(long)]
        policy: PolicyId,
        #[command(flatten)]
        models: ModelArgs,
        #[arg(short, long)]
        output: Option<PathBuf>,
        /// Also write per-slot hit ratios as CSV.
        #[arg(long)]
        slots_csv: Option<PathBuf>,
    },
    /// Train an LSTM-Int or LSTM-Req model.
    TrainLstm {
        #[arg(long)]
        trace: PathBuf,
        #[arg(long, value_enum)]
        kind: LstmKind,
        /// Slot length in seconds (LSTM-Req).
        #[arg(long, default_value_t = 300.0)]
        slot_seconds: f64,
        #[arg(long, default_value_t = 20)]
        epochs: usize,
        #[arg(long, default_value_t = 0)]
        seed: u64,
        #[arg(long)]
        out: PathBuf,
    },
    /// Train the policy selector.
    TrainCec {
        #[arg(long)]
        trace: PathBuf,
        #[arg(long)]
        capacity: usize,
        /// JSON list of policy ids.
        #[arg(long)]
        ensemble: PathBuf,
        #[arg(long)]
        out: PathBuf,
        #[arg(long, default_value_t = 0)]
        seed: u64,
        /// JSON agent hyperparameters; missing fields keep their defaults.
        #[arg(long)]
        config: Option<PathBuf>,
        #[arg(long)]
        episodes: Option<usize>,
        #[arg(long)]
        sync_period: Option<usize>,
        /// Training log CSV.
        #[arg(long)]
        log: Option<PathBuf>,
        #[command(flatten)]
        models: ModelArgs,
    },
    /// Run a trained selector greedily.
    RunCec {
        #[command(flatten)]
        run: RunArgs,
        #[arg(long)]
        agent: PathBuf,
        #[arg(short, long)]
        output: Option<PathBuf>,
        #[arg(long)]
        slots_csv: Option<PathBuf>,
    },
    /// Oracle selector over an ensemble (upper bound for the trained selector).
    FifSelect {
        #[command(flatten)]
        run: RunArgs,
        #[arg(long)]
        ensemble: PathBuf,
        #[command(flatten)]
        models: ModelArgs,
        #[arg(short, long)]
        output: Option<PathBuf>,
    },
    /// Tabulate hit ratios and relative improvements of saved reports.
    Compare {
        #[arg(long, num_args = 1.., required = true)]
        reports: Vec<PathBuf>,
        /// Write the comparison as JSON.
        #[arg(short, long)]
        output: Option<PathBuf>,
    },
}

/// Loads a trace file with timestamps rebased to start at zero.
fn read_trace(path: &Path) -> anyhow::Result<Trace> {
    let trace = load_trace(path).with_context(|| format!("loading {}", path.display()))?;
    if trace.is_empty() {
        bail!("{} contains no requests", path.display());
    }
    Ok(trace.rebased())
}

fn sim_config(run: &RunArgs) -> SimulationConfig {
    SimulationConfig {
        capacity: run.capacity,
        slot_size: run.slot_size,
        warmup: run.warmup,
        seed: run.seed,
    }
}

/// Loads the given LSTM models and trains any missing one the policies need.
fn policy_context(
    trace: &Trace,
    policies: &[PolicyId],
    models: &ModelArgs,
    seed: u64,
) -> anyhow::Result<PolicyContext> {
    let mut ctx = PolicyContext::default();
    if let Some(path) = &models.lstm_int {
        ctx.lstm_int = Some(Arc::new(
            LstmIntModel::load(path).with_context(|| format!("loading {}", path.display()))?,
        ));
    }
    for path in &models.lstm_req {
        ctx.lstm_req.push(Arc::new(
            LstmReqModel::load(path).with_context(|| format!("loading {}", path.display()))?,
        ));
    }
    for id in policies {
        match id {
            PolicyId::LstmInt if ctx.lstm_int.is_none() => {
                log::warn!("no LSTM-Int model given; training one on the input trace");
                let mut cfg = LstmIntConfig::default();
                cfg.train.seed = seed;
                ctx.lstm_int = Some(Arc::new(train_lstm_int(trace, &cfg, None)?.0));
            }
            PolicyId::LstmReq(b) if !ctx.lstm_req.iter().any(|m| m.slot_seconds() == *b) => {
                log::warn!("no LSTM-Req model with b={b} given; training one on the input trace");
                let mut cfg = LstmReqConfig::new(*b);
                cfg.train.seed = seed;
                ctx.lstm_req.push(Arc::new(train_lstm_req(trace, &cfg)?.0));
            }
            _ => {}
        }
    }
    Ok(ctx)
}

fn emit_report(
    report: &SimulationReport,
    output: Option<&Path>,
    slots_csv: Option<&Path>,
) -> anyhow::Result<()> {
    match output {
        Some(path) => {
            report.save(path)?;
            print!("{}", report.summary());
        }
        None => print!("{}", report.to_json()?),
    }
    if let Some(path) = slots_csv {
        std::fs::write(path, report.slots_csv())?;
    }
    Ok(())
}

fn run(cli: Cli) -> anyhow::Result<()> {
    let started = Instant::now();
    match cli.command {
        Command::GenTrace { spec, output, seed } => {
            let text = std::fs::read_to_string(&spec)
                .with_context(|| format!("reading {}", spec.display()))?;
            let spec: GeneratorSpec =
                serde_json::from_str(&text).context("parsing generator spec")?;
            let trace = generate_from_spec(&spec, seed)?;
            trace.save(&output)?;
            println!(
                "wrote {} requests over {} items to {}",
                trace.len(),
                trace.catalog_size(),
                output.display()
            );
        }
        Command::Simulate {
            run,
            policy,
            models,
            output,
            slots_csv,
        } => {
            let trace = read_trace(&run.trace)?;
            let ctx = policy_context(&trace, &[policy], &models, run.seed)?;
            let report = run_simulation(&trace, &sim_config(&run), policy, &ctx)?;
            emit_report(&report, output.as_deref(), slots_csv.as_deref())?;
        }
        Command::TrainLstm {
            trace,
            kind,
            slot_seconds,
            epochs,
            seed,
            out,
        } => {
            let trace = read_trace(&trace)?;
            let summary = match kind {
                LstmKind::Int => {
                    let mut cfg = LstmIntConfig::default();
                    cfg.train.epochs = epochs;
                    cfg.train.seed = seed;
                    let (model, summary) = train_lstm_int(&trace, &cfg, None)?;
                    model.save(&out)?;
                    summary
                }
                LstmKind::Req => {
                    let mut cfg = LstmReqConfig::new(slot_seconds);
                    cfg.train.epochs = epochs;
                    cfg.train.seed = seed;
                    let (model, summary) = train_lstm_req(&trace, &cfg)?;
                    model.save(&out)?;
                    summary
                }
            };
            println!(
                "{} samples, loss {:.4} -> {:.4}; model written to {}",
                summary.samples,
                summary.initial_loss,
                summary.final_loss(),
                out.display()
            );
        }
        Command::TrainCec {
            trace,
            capacity,
            ensemble,
            out,
            seed,
            config,
            episodes,
            sync_period,
            log,
            models,
        } => {
            let trace = read_trace(&trace)?;
            let mut ensemble = EnsembleConfig::load(&ensemble)
                .with_context(|| format!("loading {}", ensemble.display()))?;
            if let Some(p) = sync_period {
                ensemble.sync_period = p;
            }
            let mut agent_cfg: AgentConfig = match &config {
                Some(path) => serde_json::from_str(&std::fs::read_to_string(path)?)
                    .context("parsing agent config")?,
                None => AgentConfig::default(),
            };
            if let Some(e) = episodes {
                agent_cfg.episodes = e;
            }
            let ctx = policy_context(&trace, &ensemble.policies, &models, seed)?;
            let policies = ensemble.policies.clone();
            let (agent, records) = train_cec(&trace, capacity, ensemble, &ctx, agent_cfg, seed)?;
            agent.save(&out, &ctx)?;
            if let Some(path) = log {
                write_training_log(&records, &policies, BufWriter::new(File::create(&path)?))?;
            }
            println!(
                "trained on {} decisions ({} train steps); agent written to {}",
                records.len(),
                agent.train_steps(),
                out.display()
            );
        }
        Command::RunCec {
            run,
            agent,
            output,
            slots_csv,
        } => {
            let trace = read_trace(&run.trace)?;
            let (agent, ctx) =
                DdqnAgent::load(&agent).with_context(|| format!("loading {}", agent.display()))?;
            let report = run_cec(&trace, &sim_config(&run), &agent, &ctx)?;
            emit_report(&report, output.as_deref(), slots_csv.as_deref())?;
        }
        Command::FifSelect {
            run,
            ensemble,
            models,
            output,
        } => {
            let trace = read_trace(&run.trace)?;
            let text = std::fs::read_to_string(&ensemble)
                .with_context(|| format!("reading {}", ensemble.display()))?;
            let ensemble =
                EnsembleConfig::new(serde_json::from_str(&text).context("parsing ensemble")?);
            let ctx = policy_context(&trace, &ensemble.policies, &models, run.seed)?;
            let report = run_fif_selector(&trace, &sim_config(&run), &ensemble, &ctx)?;
            emit_report(&report, output.as_deref(), None)?;
        }
        Command::Compare { reports, output } => {
            let loaded = reports
                .iter()
                .map(|p| {
                    SimulationReport::load(p).with_context(|| format!("loading {}", p.display()))
                })
                .collect::<anyhow::Result<Vec<_>>>()?;
            let cmp = compare(&loaded)?;
            print!("{}", cmp.to_text());
            if let Some(path) = output {
                let mut f = BufWriter::new(File::create(path)?);
                serde_json::to_writer_pretty(&mut f, &cmp)?;
                writeln!(f)?;
            }
        }
    }
    log::info!("finished in {:.2?}", started.elapsed());
    Ok(())
}

fn main() -> ExitCode {
    env_logger::Builder::from_env(env_logger::Env::default().default_filter_or("warn")).init();
    match run(Cli::parse()) {
        Ok(()) => ExitCode::SUCCESS,
        Err(e) => {
            eprintln!("error: {e:#}");
            ExitCode::FAILURE
        }
    }
}
