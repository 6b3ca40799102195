mod net;

use std::path::{Path, PathBuf};
use std::time::Instant;

use anyhow::{bail, Context, Result};
use clap::{ArgAction, Args, Parser, Subcommand, ValueEnum};
use fedkit::coordinator::{ledger_csv, session_json, Dispatch};
use fedkit::experiment::{replot, run_experiment, sha256_hex, write_outputs, ExperimentConfig};
use fedkit::sim::{run_simulation, straggler_csv, straggler_report, SimOptions};

#[derive(Parser)]
#[command(name = "fedkit", version, about = "Cross-silo federated training and simulation")]
struct Cli {
    /// Experiment config (TOML). The built-in desk preset when absent.
    #[arg(long, global = true)]
    config: Option<PathBuf>,
    /// Seed for data generation, initialization and shuffling.
    #[arg(long, global = true)]
    seed: Option<u64>,
    /// Output directory.
    #[arg(long, global = true, default_value = "out")]
    out: PathBuf,
    /// Log more (-v info, -vv debug). RUST_LOG overrides.
    #[arg(short, long, global = true, action = ArgAction::Count)]
    verbose: u8,
    #[command(subcommand)]
    command: Command,
}

#[derive(Subcommand)]
enum Command {
    /// Train the six local, the centralized and the federated model and
    /// write the cross-silo matrix, curves, ledger and session summary.
    Experiment(ExperimentArgs),
    /// Run only the federated session on the virtual clock and report
    /// per-node round times.
    Sim(SimArgs),
    /// Coordinate a session over TCP.
    Server(net::ServerArgs),
    /// Join a session over TCP with one silo.
    Client(net::ClientArgs),
    /// Redraw matrix.svg and curves.svg from the CSVs in the output directory.
    Plot,
}

#[derive(Args)]
struct ExperimentArgs {
    /// Write the effective config to this path and exit.
    #[arg(long)]
    dump_config: Option<PathBuf>,
}

#[derive(Args)]
struct SimArgs {
    /// Override the number of rounds.
    #[arg(long)]
    rounds: Option<u32>,
    #[arg(long, value_enum, default_value_t = DispatchArg::Sequential)]
    dispatch: DispatchArg,
    /// Virtual seconds added to every client round.
    #[arg(long, default_value_t = 0.0)]
    overhead_s: f64,
    /// Virtual seconds charged per aggregation.
    #[arg(long, default_value_t = 0.0)]
    aggregation_cost_s: f64,
    /// Give single-board nodes the full workload of the others.
    #[arg(long)]
    unmitigated: bool,
    /// Leave these silos out.
    #[arg(long, value_delimiter = ',')]
    without: Vec<String>,
    /// Skip the per-round evaluation of the global model.
    #[arg(long)]
    no_eval: bool,
}

#[derive(Clone, Copy, ValueEnum)]
enum DispatchArg {
    Sequential,
    Concurrent,
}

/// The config and the SHA-256 of the bytes it came from.
fn load_config(path: Option<&Path>) -> Result<(ExperimentConfig, String)> {
    match path {
        Some(p) => ExperimentConfig::load(p).with_context(|| format!("loading {}", p.display())),
        None => {
            let cfg = ExperimentConfig::desk();
            let hash = sha256_hex(cfg.to_toml().as_bytes());
            Ok((cfg, hash))
        }
    }
}

fn write_file(dir: &Path, name: &str, text: &str) -> Result<()> {
    let path = dir.join(name);
    std::fs::write(&path, text).with_context(|| format!("writing {}", path.display()))
}

fn experiment(cli: &Cli, args: &ExperimentArgs) -> Result<()> {
    let (cfg, hash) = load_config(cli.config.as_deref())?;
    if let Some(path) = &args.dump_config {
        std::fs::write(path, cfg.to_toml()).with_context(|| format!("writing {}", path.display()))?;
        return Ok(());
    }
    let seed = cli.seed.unwrap_or(cfg.seed);
    let start = Instant::now();
    let result = run_experiment(&cfg, seed)?;
    write_outputs(&cli.out, &result, &hash)?;

    print!("{}", result.matrix.to_csv());
    let s = result.matrix.summary();
    println!(
        "centralized {:.4}  federated {:.4}  local {:.4} (best {:.4})  worst local on foreign {:.4} ({} on {})",
        s.centralized_mean,
        s.federated_mean,
        s.local_mean,
        s.best_local_mean,
        s.worst_local_foreign,
        s.worst_local_foreign_cell.0,
        s.worst_local_foreign_cell.1
    );
    println!(
        "seed {seed}, {:.1} s, outputs in {}",
        start.elapsed().as_secs_f64(),
        cli.out.display()
    );
    Ok(())
}

fn sim(cli: &Cli, args: &SimArgs) -> Result<()> {
    let (mut cfg, _) = load_config(cli.config.as_deref())?;
    if let Some(r) = args.rounds {
        cfg.rounds = r;
    }
    for id in &args.without {
        if !cfg.silos.iter().any(|s| &s.id == id) {
            bail!("no silo `{id}` in the config");
        }
    }
    cfg.silos.retain(|s| !args.without.contains(&s.id));
    cfg.validate()?;
    let mut profiles = cfg.profiles();
    if args.unmitigated {
        for p in &mut profiles {
            if p.device_class == fedkit::trainer::DeviceClass::Raspberry {
                *p = p.unmitigated();
            }
        }
    }
    let options = SimOptions {
        dispatch: match args.dispatch {
            DispatchArg::Sequential => Dispatch::Sequential,
            DispatchArg::Concurrent => Dispatch::Concurrent,
        },
        aggregation_cost_s: args.aggregation_cost_s,
        overhead_s: args.overhead_s,
        evaluate: !args.no_eval,
    };
    let seed = cli.seed.unwrap_or(cfg.seed);
    let out = run_simulation(
        &cfg.silo_specs(),
        &profiles,
        &cfg.plan(),
        &cfg.arch,
        &cfg.optim,
        seed,
        &options,
    )?;

    std::fs::create_dir_all(&cli.out).with_context(|| format!("creating {}", cli.out.display()))?;
    let stragglers = straggler_report(&out.report)?;
    write_file(&cli.out, "sim.csv", &out.report.to_csv())?;
    write_file(&cli.out, "sim.json", &out.report.to_json())?;
    write_file(&cli.out, "stragglers.csv", &straggler_csv(&stragglers))?;
    write_file(&cli.out, "ledger.csv", &ledger_csv(&out.ledger))?;
    write_file(&cli.out, "session.json", &session_json(&out.summary))?;

    println!("{:<10} {:>12} {:>9} {:>9}", "client", "mean round", "slowest", "slowdown");
    for r in &stragglers {
        println!(
            "{:<10} {:>10.1} s {:>8.0}% {:>8.2}x",
            r.client_id,
            r.mean_round_s,
            100.0 * r.slowest_share,
            r.slowdown
        );
    }
    println!(
        "{} rounds, {:.1} virtual minutes",
        out.report.rounds.len(),
        out.report.total_virtual_s / 60.0
    );
    if let Some(acc) = out.report.accuracy_curve().last() {
        println!("final mean test accuracy {acc:.4}");
    }
    Ok(())
}

fn main() -> Result<()> {
    let cli = Cli::parse();
    let level = match cli.verbose {
        0 => "warn",
        1 => "info",
        _ => "debug",
    };
    env_logger::Builder::from_env(env_logger::Env::default().default_filter_or(level)).init();

    match &cli.command {
        Command::Experiment(args) => experiment(&cli, args),
        Command::Sim(args) => sim(&cli, args),
        Command::Server(args) => net::server(&cli, args),
        Command::Client(args) => net::client(&cli, args),
        Command::Plot => {
            for path in replot(&cli.out)? {
                println!("wrote {}", path.display());
            }
            Ok(())
        }
    }
}
