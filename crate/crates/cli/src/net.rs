use std::net::TcpListener;
use std::path::PathBuf;
use std::time::Duration;

use anyhow::{anyhow, bail, Context, Result};
use clap::{Args, ValueEnum};
use fedkit::coordinator::{ledger_csv, session_json, Coordinator, CoordinatorConfig, Dispatch};
use fedkit::data::{ingest_directory, split, Split};
use fedkit::experiment::prepare;
use fedkit::nn::{build_model, ResidualNet};
use fedkit::sim::prepare_silos;
use fedkit::trainer::{client_loop, ClientEnd, ClientSession, NodeProfile};
use fedkit::wire::{
    client_config, default_addr, encode_weights, Identity, SecureClientTransport,
    SecureServerTransport, TcpTransport, Transport,
};

use crate::{load_config, write_file, Cli};

#[derive(Clone, Copy, PartialEq, Eq, ValueEnum)]
pub enum Link {
    TcpPlain,
    TcpSecure,
}

#[derive(Args)]
pub struct ServerArgs {
    /// Address to listen on (default: $FEDKIT_ADDR or 127.0.0.1:7787).
    #[arg(long)]
    listen: Option<String>,
    #[arg(long, value_enum, default_value_t = Link::TcpPlain)]
    transport: Link,
    /// Clients to wait for; the number of silos in the config by default.
    #[arg(long)]
    clients: Option<usize>,
    /// Override the number of rounds.
    #[arg(long)]
    rounds: Option<u32>,
    /// Barrier timeout per round, in seconds.
    #[arg(long)]
    round_timeout_s: Option<f64>,
    /// Where tcp_secure writes its self-signed certificate (DER) for clients
    /// to trust; `<out>/server.der` by default.
    #[arg(long)]
    cert_out: Option<PathBuf>,
    /// Names the certificate is valid for.
    #[arg(long, value_delimiter = ',', default_value = "localhost")]
    cert_names: Vec<String>,
    /// Score the global model each round on locally generated copies of the
    /// configured synthetic silos.
    #[arg(long)]
    eval: bool,
}

#[derive(Args)]
pub struct ClientArgs {
    /// A silo id from the config, or a directory of class subdirectories
    /// holding images.
    #[arg(long)]
    silo: String,
    /// A node preset name or a TOML profile file; the config's entry for
    /// the silo by default.
    #[arg(long)]
    profile: Option<String>,
    /// Server address (default: $FEDKIT_ADDR or 127.0.0.1:7787).
    #[arg(long)]
    connect: Option<String>,
    #[arg(long, value_enum, default_value_t = Link::TcpPlain)]
    transport: Link,
    /// Server certificate (DER) to trust for tcp_secure.
    #[arg(long)]
    ca: Option<PathBuf>,
    /// Name to verify on the server certificate.
    #[arg(long, default_value = "localhost")]
    server_name: String,
    /// Give up after waiting this long for the server, in seconds.
    #[arg(long)]
    idle_timeout_s: Option<f64>,
}

pub fn server(cli: &Cli, args: &ServerArgs) -> Result<()> {
    let (mut cfg, _) = load_config(cli.config.as_deref())?;
    if let Some(r) = args.rounds {
        cfg.rounds = r;
    }
    let seed = cli.seed.unwrap_or(cfg.seed);
    let mut plan = cfg.plan();
    if let Some(t) = args.round_timeout_s {
        plan.round_timeout = Duration::try_from_secs_f64(t).context("--round-timeout-s")?;
    }
    let expected = args.clients.unwrap_or(cfg.silos.len());
    if expected == 0 {
        bail!("--clients must be at least 1");
    }
    std::fs::create_dir_all(&cli.out).with_context(|| format!("creating {}", cli.out.display()))?;

    let addr = args.listen.clone().unwrap_or_else(default_addr);
    let listener = TcpListener::bind(&addr).with_context(|| format!("binding {addr}"))?;
    let mut links: Vec<Box<dyn Transport>> = Vec::with_capacity(expected);
    match args.transport {
        Link::TcpPlain => {
            println!("listening on {addr} (tcp_plain) for {expected} clients");
            while links.len() < expected {
                links.push(Box::new(TcpTransport::accept(&listener)?));
                log::info!("client {} of {expected} connected", links.len());
            }
        }
        Link::TcpSecure => {
            let names: Vec<&str> = args.cert_names.iter().map(String::as_str).collect();
            let identity = Identity::self_signed(&names)?;
            let cert_path = args.cert_out.clone().unwrap_or_else(|| cli.out.join("server.der"));
            std::fs::write(&cert_path, &identity.cert_der)
                .with_context(|| format!("writing {}", cert_path.display()))?;
            println!(
                "listening on {addr} (tcp_secure, certificate in {}) for {expected} clients",
                cert_path.display()
            );
            let tls = identity.server_config()?;
            while links.len() < expected {
                match SecureServerTransport::accept_tls(&listener, tls.clone()) {
                    Ok(t) => links.push(Box::new(t)),
                    Err(e) => log::warn!("rejected a connection: {e}"),
                }
            }
        }
    }

    let mut config = CoordinatorConfig::new(plan, cfg.arch.clone(), cfg.optim.clone(), seed);
    config.dispatch = Dispatch::Concurrent;
    let net = ResidualNet::new(cfg.arch.clone())?;
    let clients = if args.eval { prepare(&cfg, seed)? } else { Vec::new() };
    let tests: Vec<_> = clients.iter().map(|c| c.silo.labelled(Split::Test)).collect();
    let mut coordinator = Coordinator::new(config, build_model(&cfg.arch, seed)?)?;
    if args.eval {
        coordinator = coordinator.with_evaluator(Box::new(|_, w| {
            let evals: Vec<_> = tests
                .iter()
                .filter(|t| !t.is_empty())
                .filter_map(|t| net.evaluate(w, t).ok())
                .collect();
            let n = evals.len() as f64;
            (n > 0.0).then(|| {
                (
                    evals.iter().map(|e| e.accuracy).sum::<f64>() / n,
                    evals.iter().map(|e| e.mean_loss).sum::<f64>() / n,
                )
            })
        }));
    }

    let outcome = coordinator.run_session(&mut links);
    let summary = coordinator.summary();
    write_file(&cli.out, "ledger.csv", &ledger_csv(&summary.rounds))?;
    write_file(&cli.out, "session.json", &session_json(&summary))?;
    let result = outcome?;
    let model = cli.out.join("model.fedw");
    std::fs::write(&model, encode_weights(&result.weights))
        .with_context(|| format!("writing {}", model.display()))?;
    for r in &result.ledger {
        let eval = r.eval.map_or(String::new(), |e| format!("  accuracy {:.4}", e.accuracy));
        println!("round {:>3}  {:>8.2} s{eval}", r.round, r.duration_s);
    }
    println!("session complete; model in {}", model.display());
    Ok(())
}

fn resolve_profile(spec: Option<&str>, fallback: Option<NodeProfile>, silo: &str) -> Result<NodeProfile> {
    let Some(spec) = spec else {
        return fallback.ok_or_else(|| anyhow!("no profile for `{silo}`; pass --profile"));
    };
    let path = std::path::Path::new(spec);
    if path.is_file() {
        let text = std::fs::read_to_string(path).with_context(|| format!("reading {spec}"))?;
        return toml::from_str(&text).with_context(|| format!("parsing profile {spec}"));
    }
    match spec {
        "raspberry" => Ok(NodeProfile::raspberry(silo)),
        "cpu" | "default" => Ok(NodeProfile::new(silo)),
        name => {
            let mut p = NodeProfile::measured(name)
                .ok_or_else(|| anyhow!("unknown profile `{name}` (not a file or preset)"))?;
            p.client_id = silo.to_string();
            Ok(p)
        }
    }
}

pub fn client(cli: &Cli, args: &ClientArgs) -> Result<()> {
    let (cfg, _) = load_config(cli.config.as_deref())?;
    let seed = cli.seed.unwrap_or(cfg.seed);
    let dir = std::path::Path::new(&args.silo);

    let silo = if dir.is_dir() {
        let id = dir
            .file_name()
            .map(|n| n.to_string_lossy().into_owned())
            .unwrap_or_else(|| "local".into());
        let profile = resolve_profile(args.profile.as_deref(), Some(NodeProfile::new(&id)), &id)?;
        let report = ingest_directory(dir, cfg.arch.input_size)?;
        if !report.unreadable.is_empty() {
            log::warn!("{} unreadable files skipped", report.unreadable.len());
        }
        let mut data = report.dataset;
        data.silo_id = profile.client_id.clone();
        let val = (1.0 - profile.train_fraction).min(0.1);
        (split(data, profile.train_fraction, val, seed)?, profile)
    } else {
        let entry = cfg
            .silos
            .iter()
            .find(|s| s.id == args.silo)
            .ok_or_else(|| anyhow!("`{}` is neither a directory nor a silo in the config", args.silo))?;
        let profile = resolve_profile(args.profile.as_deref(), Some(entry.profile()), &entry.id)?;
        let spec = entry.spec(cfg.arch.input_size, &cfg.augment);
        let mut c = prepare_silos(&[spec], std::slice::from_ref(&profile), seed)?;
        (c.remove(0).silo, profile)
    };
    let (data, profile) = silo;
    println!(
        "{}: {} train images, {} epochs x batch {} per round",
        profile.client_id,
        data.split_len(Split::Train),
        profile.epochs_per_round,
        profile.batch_size
    );

    let addr = args.connect.clone().unwrap_or_else(default_addr);
    let idle = args
        .idle_timeout_s
        .map(Duration::try_from_secs_f64)
        .transpose()
        .context("--idle-timeout-s")?;
    let session = ClientSession::new(data, profile)?;
    let outcome = match args.transport {
        Link::TcpPlain => {
            let mut t = TcpTransport::connect(&addr).with_context(|| format!("connecting to {addr}"))?;
            client_loop(&mut t, session, idle)?
        }
        Link::TcpSecure => {
            let ca = args
                .ca
                .as_ref()
                .ok_or_else(|| anyhow!("tcp_secure needs --ca <server certificate>"))?;
            let der = std::fs::read(ca).with_context(|| format!("reading {}", ca.display()))?;
            let tls = client_config(&[der])?;
            let mut t = SecureClientTransport::connect_tls(&addr, &args.server_name, tls)
                .with_context(|| format!("connecting to {addr}"))?;
            client_loop(&mut t, session, idle)?
        }
    };
    match &outcome.end {
        ClientEnd::Finished(reason) => println!("finished after {} rounds: {reason}", outcome.rounds.len()),
        ClientEnd::Disconnected(why) => println!("disconnected after {} rounds: {why}", outcome.rounds.len()),
        ClientEnd::Aborted(why) => bail!("local training failed: {why}"),
    }
    Ok(())
}
