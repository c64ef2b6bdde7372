use std::fs;
use std::io::Write;
use std::path::PathBuf;
use std::process::ExitCode;

use clap::{Parser, Subcommand};

use botwatch::agent::{parse_flow_log, parse_host_list};
use botwatch::detector::Rho;
use botwatch::experiment::{analyze, replay, run_experiment, AnalyzeConfig, ExperimentConfig, Report};
use botwatch::Error;

#[derive(Parser, Debug)]
#[command(name = "botwatch", version, about = "Mutual-contacts botnet detection on a replicated ledger")]
struct Cli {
    #[command(subcommand)]
    command: Command,
}

#[derive(clap::Args, Debug, Default)]
struct Common {
    /// JSON experiment configuration; flags override its fields.
    #[arg(long)]
    config: Option<PathBuf>,
    #[arg(long)]
    seed: Option<u64>,
    #[arg(long)]
    rounds: Option<u64>,
    #[arg(long)]
    theta: Option<f64>,
    #[arg(long)]
    phi: Option<f64>,
    /// Pivotal-row threshold: a number or `auto`.
    #[arg(long)]
    rho: Option<Rho>,
    #[arg(long)]
    generators: Option<u32>,
    #[arg(long)]
    blocks_per_round: Option<u32>,
    /// Directory for chain segments, manifest and report.
    #[arg(long)]
    out: Option<PathBuf>,
    /// Print only the JSON report.
    #[arg(long)]
    json: bool,
}

#[derive(Subcommand, Debug)]
enum Command {
    /// Run the synthetic end-to-end experiment.
    Simulate(Common),
    /// Run the detection pipeline over a `tick,src_ip,dst_ip` flow log.
    Analyze {
        flowlog: PathBuf,
        /// One dotted quad per line.
        #[arg(long)]
        whitelist: Option<PathBuf>,
        #[arg(long)]
        blacklist: Option<PathBuf>,
        #[command(flatten)]
        common: Common,
    },
    /// Re-execute a persisted chain and verify every state root.
    Replay { chain_dir: PathBuf },
}

fn load_config(c: &Common) -> Result<ExperimentConfig, Error> {
    let mut cfg = match &c.config {
        Some(path) => serde_json::from_slice(&fs::read(path)?)?,
        None => ExperimentConfig::default(),
    };
    if let Some(v) = c.seed {
        cfg.world.rng_seed = v;
    }
    if let Some(v) = c.rounds {
        cfg.rounds = v;
    }
    if let Some(v) = c.theta {
        cfg.detector.theta = v;
    }
    if let Some(v) = c.phi {
        cfg.detector.phi = v;
    }
    if let Some(v) = c.rho {
        cfg.detector.rho = v;
    }
    if let Some(v) = c.generators {
        cfg.ledger.n_generators = v;
    }
    if let Some(v) = c.blocks_per_round {
        cfg.ledger.blocks_per_round = v;
    }
    if c.out.is_some() {
        cfg.output_dir = c.out.clone();
    }
    cfg.validate()?;
    Ok(cfg)
}

/// Writes to stdout; a closed pipe (e.g. `| head`) is not an error.
fn out(text: &str) -> Result<(), Error> {
    match std::io::stdout().lock().write_all(text.as_bytes()) {
        Err(e) if e.kind() == std::io::ErrorKind::BrokenPipe => Ok(()),
        r => Ok(r?),
    }
}

fn emit(report: &Report, json_only: bool) -> Result<(), Error> {
    let mut text = String::new();
    if !json_only {
        text.push_str(&report.table());
        if let Some(r) = report.all_bots_active_round {
            text.push_str(&format!("all bots active by round {r}\n"));
        }
    }
    text.push_str(&serde_json::to_string(report)?);
    text.push('\n');
    out(&text)
}

fn run(cli: Cli) -> Result<(), Error> {
    match cli.command {
        Command::Simulate(common) => {
            let cfg = load_config(&common)?;
            emit(&run_experiment(&cfg)?, common.json)
        }
        Command::Analyze {
            flowlog,
            whitelist,
            blacklist,
            common,
        } => {
            let cfg = load_config(&common)?;
            let log = parse_flow_log(&fs::read_to_string(&flowlog)?);
            if log.malformed > 0 {
                log::warn!("skipped {} malformed lines in {}", log.malformed, flowlog.display());
            }
            let read_list = |p: &Option<PathBuf>| -> Result<_, Error> {
                match p {
                    Some(p) => parse_host_list(&fs::read_to_string(p)?),
                    None => Ok(Default::default()),
                }
            };
            let acfg = AnalyzeConfig {
                ledger: cfg.ledger,
                detector: cfg.detector,
                whitelist: read_list(&whitelist)?,
                blacklist: read_list(&blacklist)?,
                output_dir: cfg.output_dir,
            };
            emit(&analyze(&log.flows, &acfg)?, common.json)
        }
        Command::Replay { chain_dir } => {
            let r = replay(&chain_dir)?;
            out(&format!(
                "replayed {} rounds ({} blocks); all state roots match; final root {}\n",
                r.rounds, r.blocks, r.final_root
            ))
        }
    }
}

fn main() -> ExitCode {
    env_logger::Builder::from_env(env_logger::Env::default().default_filter_or("warn")).init();
    match run(Cli::parse()) {
        Ok(()) => ExitCode::SUCCESS,
        Err(e) => {
            eprintln!("error: {e}");
            match e {
                Error::Divergence { .. } => ExitCode::from(2),
                _ => ExitCode::from(1),
            }
        }
    }
}
