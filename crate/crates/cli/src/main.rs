use std::fmt::Write as _;
use std::path::{Path, PathBuf};
use std::process::ExitCode;

use clap::{Args, Parser, Subcommand};
use thiserror::Error;

use sendnet::kzg::{Fixture, KzgError};
use sendnet::netsim::{
    expected_total_time, predicted_categories, predicted_transmissions, run, ModelError, RelayComplexityModel,
    ScenarioError, Scheme, SimScenario,
};
use sendnet::pipeline::{run_chain, run_demo, Tamper};
use sendnet::poa::PoaError;

/// Edge-relay messaging toolkit: traffic simulation, relay settlement and
/// consensus fixtures.
///
/// Exit codes: 0 success, 1 usage, 2 file I/O, 3 scenario or model error,
/// 4 settlement rejected.
#[derive(Parser, Debug)]
#[command(name = "sendnet", version)]
struct Cli {
    #[command(subcommand)]
    command: Command,
}

#[derive(Subcommand, Debug)]
enum Command {
    /// Traffic simulation and transmission-count predictions.
    #[command(subcommand)]
    Sim(SimCommand),
    /// Relay settlement pipeline.
    #[command(subcommand)]
    Por(PorCommand),
    /// Validator chain built from settlement submissions.
    #[command(subcommand)]
    Chain(ChainCommand),
    /// Polynomial commitment fixtures.
    #[command(subcommand)]
    Kzg(KzgCommand),
}

#[derive(Subcommand, Debug)]
enum SimCommand {
    /// Run a scenario and compare measured against predicted counts.
    Run(SimRun),
    /// Print predicted transmission counts and relay-time integrals.
    Predict(SimPredict),
}

#[derive(Subcommand, Debug)]
enum PorCommand {
    /// Settle one relay segment end to end, optionally injecting a fault.
    Demo(PorDemo),
}

#[derive(Subcommand, Debug)]
enum ChainCommand {
    /// Produce and verify a few blocks, then dump them with account proofs.
    Dump(ChainDump),
}

#[derive(Subcommand, Debug)]
enum KzgCommand {
    /// Write seeded commitment and proof fixtures.
    Fixtures(KzgFixtures),
}

#[derive(Args, Debug)]
struct Output {
    /// Directory for report files; created if missing.
    #[arg(long, value_name = "DIR")]
    out: Option<PathBuf>,
    /// Also print flat key=value counters (and write counters.txt).
    #[arg(long)]
    counters: bool,
}

#[derive(Args, Debug)]
struct SimRun {
    /// Scenario file (TOML).
    #[arg(long, value_name = "PATH")]
    scenario: PathBuf,
    /// Overrides the scenario's seed.
    #[arg(long)]
    seed: Option<u64>,
    #[command(flatten)]
    output: Output,
}

#[derive(Args, Debug)]
struct SimPredict {
    /// Scenario file (TOML).
    #[arg(long, value_name = "PATH")]
    scenario: PathBuf,
    /// Accepted for symmetry with `sim run`; predictions do not depend on it.
    #[arg(long)]
    seed: Option<u64>,
    #[command(flatten)]
    output: Output,
}

#[derive(Args, Debug)]
struct PorDemo {
    /// Messages sent through the segment.
    #[arg(short = 'n', long, default_value_t = 100, value_parser = clap::value_parser!(u64).range(1..=100_000))]
    messages: u64,
    #[arg(long, default_value_t = 1)]
    seed: u64,
    /// Fault to inject: envelope, endorse, receipt, bill, proof or replay.
    #[arg(long, value_name = "STAGE", value_parser = parse_tamper)]
    tamper: Option<Tamper>,
    #[command(flatten)]
    output: Output,
}

#[derive(Args, Debug)]
struct ChainDump {
    #[arg(long, default_value_t = 1)]
    seed: u64,
    #[arg(long, default_value_t = 3, value_parser = clap::value_parser!(u64).range(1..=64))]
    blocks: u64,
    #[arg(long, default_value_t = 4, value_parser = clap::value_parser!(u64).range(1..=64))]
    validators: u64,
    /// Messages per block's settlement run.
    #[arg(long, default_value_t = 40, value_parser = clap::value_parser!(u64).range(1..=10_000))]
    messages: u64,
    #[command(flatten)]
    output: Output,
}

#[derive(Args, Debug)]
struct KzgFixtures {
    #[arg(long, default_value_t = 1)]
    seed: u64,
    /// Vector sizes, comma separated.
    #[arg(long, value_delimiter = ',', default_values_t = [1usize, 2, 8, 32])]
    sizes: Vec<usize>,
    #[command(flatten)]
    output: Output,
}

fn parse_tamper(s: &str) -> Result<Tamper, String> {
    s.parse::<Tamper>().map_err(|e| {
        let names: Vec<&str> = Tamper::ALL.iter().map(|t| t.as_str()).collect();
        format!("{e}; expected one of {}", names.join(", "))
    })
}

#[derive(Debug, Error)]
enum CliError {
    #[error("{path}: {source}")]
    Io { path: PathBuf, source: std::io::Error },
    #[error(transparent)]
    Scenario(#[from] ScenarioError),
    #[error(transparent)]
    Model(#[from] ModelError),
    #[error(transparent)]
    Chain(#[from] PoaError),
    #[error(transparent)]
    Kzg(#[from] KzgError),
    #[error("settlement rejected: {0}")]
    Rejected(String),
}

impl CliError {
    fn code(&self) -> u8 {
        match self {
            CliError::Io { .. } | CliError::Scenario(ScenarioError::Io { .. }) => 2,
            CliError::Scenario(_) | CliError::Model(_) | CliError::Kzg(_) => 3,
            CliError::Rejected(_) | CliError::Chain(_) => 4,
        }
    }
}

/// What a command prints and which files it writes.
struct Report {
    stdout: String,
    files: Vec<(String, Vec<u8>)>,
}

impl Report {
    fn new() -> Self {
        Report {
            stdout: String::new(),
            files: Vec::new(),
        }
    }

    fn with_counters(&mut self, output: &Output, counters: String) {
        if output.counters {
            self.stdout += &counters;
            self.file("counters.txt", counters);
        }
    }

    fn file(&mut self, name: impl Into<String>, body: impl Into<Vec<u8>>) {
        self.files.push((name.into(), body.into()));
    }

    fn write(&self, out: Option<&Path>) -> Result<(), CliError> {
        let Some(dir) = out else {
            return Ok(());
        };
        let io = |path: &Path, source| CliError::Io {
            path: path.to_path_buf(),
            source,
        };
        std::fs::create_dir_all(dir).map_err(|e| io(dir, e))?;
        for (name, body) in &self.files {
            let path = dir.join(name);
            std::fs::write(&path, body).map_err(|e| io(&path, e))?;
        }
        Ok(())
    }
}

fn load(path: &Path, seed: Option<u64>) -> Result<SimScenario, CliError> {
    let mut s = SimScenario::from_path(path)?;
    if let Some(seed) = seed {
        s.seed = seed;
    }
    Ok(s)
}

fn sim_run(args: &SimRun) -> Result<(Report, Option<String>), CliError> {
    let scenario = load(&args.scenario, args.seed)?;
    let r = run(&scenario);
    let mut rep = Report::new();
    rep.stdout += &r.comparison_table();
    let _ = writeln!(
        rep.stdout,
        "match = {}\ndelivered = {}/{}\nsettlement outbound={} relay={} inbound={} credited={} rejected={}",
        if r.matches_prediction() { "yes" } else { "no" },
        r.deliveries,
        r.expected_deliveries,
        r.settlement.outbound_total,
        r.settlement.relay_total,
        r.settlement.inbound_total,
        r.settlement.credited,
        r.settlement.rejected
    );
    rep.file("report.txt", r.to_text());
    rep.file("settlement.txt", r.settlement_text());
    rep.with_counters(&args.output, r.counters());
    let failure = (r.settlement.rejected > 0).then(|| format!("{} settlement steps rejected", r.settlement.rejected));
    Ok((rep, failure))
}

fn closed_form(model: &RelayComplexityModel, scheme: Scheme) -> Option<f64> {
    let constant = |f: &sendnet::netsim::PiecewiseLinear| f.points().len() <= 1;
    if !(constant(&model.latency) && constant(&model.loss) && constant(&model.retransmissions)) {
        return None;
    }
    Some(model.messages * model.fan_out(scheme) as f64 * model.integrand(0.0) * model.horizon)
}

fn sim_predict(args: &SimPredict) -> Result<Report, CliError> {
    let scenario = load(&args.scenario, args.seed)?;
    let p = predicted_transmissions(&scenario)?;
    let c = predicted_categories(&scenario);
    let m = &scenario.model;
    let broadcast = expected_total_time(m, Scheme::Broadcast);
    let edge = expected_total_time(m, Scheme::EdgeNetwork);
    let mut out = String::new();
    let _ = writeln!(out, "[transmissions]");
    let _ = writeln!(out, "groups = {}", scenario.groups.len());
    let _ = writeln!(out, "messages_per_group = {}", p.per_group);
    let _ = writeln!(out, "t_no_deleg = {}", p.t_no_deleg);
    let _ = writeln!(out, "t_deleg = {}", p.t_deleg);
    let _ = writeln!(out, "improvement = {:.6}", p.improvement);
    let _ = writeln!(out, "client_to_clientnode = {}", c.client_to_clientnode);
    let _ = writeln!(out, "delegation_direct = {}", c.delegation_direct);
    let _ = writeln!(out, "clientnode_to_edge = {}", c.clientnode_to_edge);
    let _ = writeln!(out, "edge_to_clientnode = {}", c.edge_to_clientnode);
    let _ = writeln!(out);
    let _ = writeln!(out, "[relay_time]");
    let _ = writeln!(
        out,
        "messages = {} client_nodes = {} k = {} t_m = {} horizon = {}",
        m.messages, m.client_nodes, m.k, m.t_m, m.horizon
    );
    let _ = writeln!(out, "broadcast = {broadcast:.9}");
    let _ = writeln!(out, "edge_network = {edge:.9}");
    let ratio = if broadcast == 0.0 { 0.0 } else { edge / broadcast };
    let _ = writeln!(out, "ratio = {ratio:.12}");
    let _ = writeln!(
        out,
        "fan_out_ratio = {}/{}",
        m.fan_out(Scheme::EdgeNetwork),
        m.fan_out(Scheme::Broadcast)
    );
    if let Some(closed) = closed_form(m, Scheme::Broadcast) {
        let rel = if closed == 0.0 { broadcast.abs() } else { ((broadcast - closed) / closed).abs() };
        let _ = writeln!(out, "closed_form_broadcast = {closed:.9}");
        let _ = writeln!(out, "closed_form_match = {}", if rel <= 1e-9 { "yes" } else { "no" });
    }
    let mut rep = Report::new();
    rep.stdout = out.clone();
    rep.file("prediction.txt", out);
    let counters = format!(
        "t_no_deleg={}\nt_deleg={}\nimprovement={:.6}\nbroadcast={broadcast:.9}\nedge_network={edge:.9}\n",
        p.t_no_deleg, p.t_deleg, p.improvement
    );
    rep.with_counters(&args.output, counters);
    Ok(rep)
}

fn por_demo(args: &PorDemo) -> (Report, Option<String>) {
    let r = run_demo(args.messages as usize, args.seed, args.tamper);
    let mut rep = Report::new();
    let trace = r.trace();
    rep.stdout += &trace;
    let verdict = match r.rejected_at() {
        Some(stage) => match args.tamper {
            Some(t) => format!("result=rejected stage={stage} expected={}\n", t.detected_at()),
            None => format!("result=rejected stage={stage}\n"),
        },
        None => format!("result={}\n", if r.settled() { "settled" } else { "unbalanced" }),
    };
    rep.stdout += &verdict;
    rep.file("trace.txt", format!("{trace}{verdict}"));
    let counters = format!(
        "messages={}\noutbound_total={}\nrelay_total={}\ninbound_total={}\ncredited={}\nrejected_at={}\nsettled={}\n",
        r.messages,
        r.outbound_total,
        r.relay_total,
        r.inbound_total,
        r.credited,
        r.rejected_at().map_or("none", |s| s.as_str()),
        r.settled()
    );
    rep.with_counters(&args.output, counters);
    let failure = r.rejected_at().map(|s| format!("at stage {s}"));
    (rep, failure)
}

fn chain_dump(args: &ChainDump) -> Result<Report, CliError> {
    let chain = run_chain(args.seed, args.validators as usize, args.blocks as usize, args.messages as usize)?;
    let dump = chain.dump();
    let mut rep = Report::new();
    rep.stdout = dump.clone();
    rep.file("chain.txt", dump);
    let counters = format!(
        "height={}\nstate_root={}\ncredited={}\nverified={}\n",
        chain.state.height,
        hex::encode(chain.state.state_root()),
        chain.state.ledger.total_credited(),
        chain.blocks.iter().all(|b| b.verified)
    );
    rep.with_counters(&args.output, counters);
    Ok(rep)
}

fn kzg_fixtures(args: &KzgFixtures) -> Result<Report, CliError> {
    let mut rep = Report::new();
    let mut counters = String::new();
    for &n in &args.sizes {
        let (_, fx) = Fixture::generate(args.seed, n)?;
        let ok = fx.verify();
        let bytes = fx.to_bytes();
        let name = format!("kzg-n{n}.bin");
        let _ = writeln!(
            rep.stdout,
            "n={n} commitment={} evals={} subvector={} bytes={} verify={} file={name}",
            hex::encode(fx.commitment.to_bytes()),
            fx.evals.len(),
            fx.subvector.indices.len(),
            bytes.len(),
            if ok { "ok" } else { "FAILED" }
        );
        let _ = writeln!(counters, "n{n}.verify={ok}");
        rep.file(name, bytes);
    }
    rep.with_counters(&args.output, counters);
    Ok(rep)
}

fn dispatch(cli: &Cli) -> Result<(Report, Option<String>, Option<PathBuf>), CliError> {
    Ok(match &cli.command {
        Command::Sim(SimCommand::Run(a)) => {
            let (rep, failure) = sim_run(a)?;
            (rep, failure, a.output.out.clone())
        }
        Command::Sim(SimCommand::Predict(a)) => (sim_predict(a)?, None, a.output.out.clone()),
        Command::Por(PorCommand::Demo(a)) => {
            let (rep, failure) = por_demo(a);
            (rep, failure, a.output.out.clone())
        }
        Command::Chain(ChainCommand::Dump(a)) => (chain_dump(a)?, None, a.output.out.clone()),
        Command::Kzg(KzgCommand::Fixtures(a)) => (kzg_fixtures(a)?, None, a.output.out.clone()),
    })
}

fn main() -> ExitCode {
    let cli = match Cli::try_parse() {
        Ok(cli) => cli,
        Err(e) => {
            let code = if e.use_stderr() { 1 } else { 0 };
            let _ = e.print();
            return ExitCode::from(code);
        }
    };
    let result = dispatch(&cli).and_then(|(rep, failure, out)| {
        print!("{}", rep.stdout);
        rep.write(out.as_deref())?;
        match failure {
            Some(reason) => Err(CliError::Rejected(reason)),
            None => Ok(()),
        }
    });
    match result {
        Ok(()) => ExitCode::SUCCESS,
        Err(e) => {
            eprintln!("error: {e}");
            ExitCode::from(e.code())
        }
    }
}
