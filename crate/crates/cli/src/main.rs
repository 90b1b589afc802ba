use std::collections::BTreeSet;
use std::fs;
use std::path::PathBuf;
use std::process::ExitCode;

use anyhow::{bail, Context, Result};
use clap::{Args, Parser, Subcommand};
use orthodromic::experiments::{
    min_radius_summary, run_sweep_with_threads, summary_json, MinRadius,
};
use orthodromic::lsdb::{FloodConfig, FloodSim};
use orthodromic::routing::default_hop_limit;
use orthodromic::{
    read_csv, route_packet, route_with_oracle_views, write_csv, ConstellationGraph,
    ExperimentConfig, LinkState, NodeId, Outcome, WalkerParams,
};

#[derive(Parser)]
#[command(name = "orsim", version, about = "Orthodromic routing simulator")]
struct Cli {
    #[command(subcommand)]
    command: Command,
}

#[derive(Subcommand)]
enum Command {
    /// Generate a Walker Delta constellation and write it as JSON.
    GenTopology(GenTopology),
    /// Route one packet and print its trace.
    Route(Route),
    /// Flood link state from every node and check each database.
    FloodSim(FloodSimArgs),
    /// Run a loss sweep and write the results CSV.
    Sweep(Sweep),
    /// Minimum radius per failure probability from a results CSV.
    MinRadius(MinRadiusArgs),
}

#[derive(Args)]
struct GenTopology {
    #[arg(long)]
    planes: usize,
    #[arg(long)]
    per_plane: usize,
    #[arg(long, default_value_t = 53.0)]
    inclination_deg: f64,
    #[arg(long, default_value_t = 1)]
    phasing: usize,
    /// Omit the links between the last and first plane.
    #[arg(long)]
    no_seam: bool,
    #[arg(long, default_value_t = 0.0)]
    epoch: f64,
    #[arg(long)]
    out: PathBuf,
}

#[derive(Args)]
struct Failures {
    #[arg(long)]
    topology: PathBuf,
    /// Probability that each link fails independently.
    #[arg(long, default_value_t = 0.0)]
    fail_prob: f64,
    /// Required whenever --fail-prob is positive.
    #[arg(long)]
    seed: Option<u64>,
    /// Force the link between two nodes down, as `a:b`. Repeatable.
    #[arg(long = "fail-link", value_parser = parse_link)]
    fail_links: Vec<(NodeId, NodeId)>,
}

impl Failures {
    fn load(&self) -> Result<ConstellationGraph> {
        let text = fs::read_to_string(&self.topology)
            .with_context(|| format!("reading {}", self.topology.display()))?;
        let mut graph = ConstellationGraph::from_json(&text)?;
        if !(0.0..=1.0).contains(&self.fail_prob) {
            bail!("--fail-prob must lie in [0, 1]");
        }
        if self.fail_prob > 0.0 {
            let seed = self
                .seed
                .context("--seed is required with a positive --fail-prob")?;
            graph = graph.apply_link_failures(self.fail_prob, seed);
        }
        for &(a, b) in &self.fail_links {
            graph = graph.with_link_state(a, b, LinkState::Down)?;
        }
        Ok(graph)
    }
}

#[derive(Args)]
struct Route {
    #[command(flatten)]
    failures: Failures,
    #[arg(long)]
    src: NodeId,
    #[arg(long)]
    dst: NodeId,
    #[arg(long)]
    radius: usize,
    /// Defaults to |V| times the radius.
    #[arg(long)]
    hop_limit: Option<usize>,
    /// Route over databases built by simulated flooding instead of reading
    /// the topology directly.
    #[arg(long)]
    flooded: bool,
}

#[derive(Args)]
struct FloodSimArgs {
    #[command(flatten)]
    failures: Failures,
    #[arg(long)]
    radius: u32,
    /// Per-hop delay in seconds.
    #[arg(long, default_value_t = 0.005)]
    latency: f64,
    /// Write one line per delivery: `time origin seq ttl from to action`.
    #[arg(long)]
    trace_out: Option<PathBuf>,
}

#[derive(Args)]
struct Sweep {
    /// JSON experiment config. Inline flags are ignored when given.
    #[arg(long)]
    config: Option<PathBuf>,
    #[arg(long, default_value_t = 24)]
    planes: usize,
    #[arg(long, default_value_t = 66)]
    per_plane: usize,
    #[arg(long, default_value_t = 53.0)]
    inclination_deg: f64,
    #[arg(long, default_value_t = 1)]
    phasing: usize,
    /// Failure probabilities, comma separated. Defaults to 0 to 0.375 in
    /// steps of 0.025.
    #[arg(long = "p", value_delimiter = ',')]
    p_values: Vec<f64>,
    /// Radii as a comma separated list of values and ranges such as `1-30`.
    #[arg(long = "r", default_value = "1-30", value_parser = parse_radii)]
    r_values: RadiusList,
    #[arg(long, default_value_t = 10_000)]
    trials: usize,
    #[arg(long)]
    seed: Option<u64>,
    /// Loss targets for the minimum radius summary.
    #[arg(long = "target", value_delimiter = ',', default_value = "0.01")]
    targets: Vec<f64>,
    #[arg(long, default_value_t = 1.0)]
    hop_limit_factor: f64,
    /// Worker threads; the output does not depend on it.
    #[arg(long)]
    threads: Option<usize>,
    #[arg(long)]
    out: PathBuf,
    /// Also write the minimum radius summary as JSON.
    #[arg(long)]
    summary_json: Option<PathBuf>,
}

#[derive(Args)]
struct MinRadiusArgs {
    #[arg(long)]
    csv: PathBuf,
    #[arg(long = "target", value_delimiter = ',', default_value = "0.01")]
    targets: Vec<f64>,
    /// Print JSON instead of text.
    #[arg(long)]
    json: bool,
}

#[derive(Debug, Clone)]
struct RadiusList(Vec<usize>);

fn parse_link(s: &str) -> Result<(NodeId, NodeId), String> {
    let (a, b) = s
        .split_once(':')
        .ok_or_else(|| format!("expected a:b, got {s}"))?;
    let id = |x: &str| x.trim().parse::<NodeId>().map_err(|e| format!("{x}: {e}"));
    Ok((id(a)?, id(b)?))
}

fn parse_radii(s: &str) -> Result<RadiusList, String> {
    let mut out = BTreeSet::new();
    for part in s.split(',').map(str::trim).filter(|p| !p.is_empty()) {
        let num = |x: &str| x.trim().parse::<usize>().map_err(|e| format!("{x}: {e}"));
        match part.split_once('-') {
            Some((lo, hi)) => {
                let (lo, hi) = (num(lo)?, num(hi)?);
                if lo > hi {
                    return Err(format!("empty range {part}"));
                }
                out.extend(lo..=hi);
            }
            None => {
                out.insert(num(part)?);
            }
        }
    }
    if out.is_empty() {
        return Err("no radii".into());
    }
    Ok(RadiusList(out.into_iter().collect()))
}

fn gen_topology(args: GenTopology) -> Result<ExitCode> {
    let mut params = WalkerParams::with_degrees(
        args.planes,
        args.per_plane,
        args.inclination_deg,
        args.phasing,
    );
    params.wrap_planes = !args.no_seam;
    let graph = ConstellationGraph::walker_delta(params, args.epoch)?;
    fs::write(&args.out, graph.to_json()?)
        .with_context(|| format!("writing {}", args.out.display()))?;
    println!("{} nodes, {} edges", graph.node_count(), graph.edge_count());
    Ok(ExitCode::SUCCESS)
}

fn route(args: Route) -> Result<ExitCode> {
    let graph = args.failures.load()?;
    let n = graph.node_count();
    let hop_limit = args
        .hop_limit
        .unwrap_or_else(|| default_hop_limit(n, args.radius));
    let trace = if args.flooded {
        let radius = u32::try_from(args.radius).context("radius too large")?;
        let mut sim = FloodSim::new(&graph, FloodConfig::new(radius.max(1)));
        sim.originate_all();
        sim.run_to_quiescence();
        route_packet(
            &graph,
            &sim.local_views(),
            args.src,
            args.dst,
            args.radius,
            hop_limit,
        )?
    } else {
        route_with_oracle_views(&graph, args.src, args.dst, args.radius, hop_limit)?
    };
    print!("{}", trace.render());
    Ok(match trace.outcome {
        Outcome::Delivered => ExitCode::SUCCESS,
        Outcome::DroppedNoProgress | Outcome::AbortedHopLimit => ExitCode::from(2),
    })
}

fn flood_sim(args: FloodSimArgs) -> Result<ExitCode> {
    if args.radius == 0 {
        bail!("--radius must be at least 1");
    }
    if !(args.latency.is_finite() && args.latency > 0.0) {
        bail!("--latency must be positive");
    }
    let graph = args.failures.load()?;
    let config = FloodConfig {
        hop_latency: args.latency,
        ..FloodConfig::new(args.radius)
    };
    let mut sim = FloodSim::new(&graph, config);
    if args.trace_out.is_some() {
        sim = sim.with_trace();
    }
    sim.originate_all();
    sim.run_to_quiescence();

    let mut mismatched = 0;
    for node in 0..graph.node_count() {
        let ball: BTreeSet<NodeId> = graph
            .hop_distances(node)
            .iter()
            .enumerate()
            .filter(|(_, d)| d.is_some_and(|d| d <= args.radius as usize))
            .map(|(n, _)| n)
            .collect();
        if sim.database(node).origins().collect::<BTreeSet<_>>() != ball {
            mismatched += 1;
        }
    }
    let stats = sim.stats();
    println!(
        "converged at t={:.3}s: {} originated, {} deliveries, {} stored, {} forwarded, {} ignored",
        sim.now(),
        stats.originated,
        stats.deliveries,
        stats.stored,
        stats.forwarded,
        stats.ignored
    );
    println!(
        "max copies of one update per link direction: {}",
        stats.max_copies_per_direction
    );
    println!(
        "{}/{} databases match the {}-hop ball",
        graph.node_count() - mismatched,
        graph.node_count(),
        args.radius
    );
    if let (Some(path), Some(trace)) = (&args.trace_out, sim.trace()) {
        fs::write(path, trace).with_context(|| format!("writing {}", path.display()))?;
    }
    if mismatched > 0 {
        bail!("{mismatched} databases differ from the hop ball");
    }
    Ok(ExitCode::SUCCESS)
}

fn print_summary(summary: &[MinRadius]) {
    for entry in summary {
        let r = entry
            .min_r
            .map_or_else(|| "none in range".to_string(), |r| r.to_string());
        println!("p={:.3} target={} min_r={r}", entry.p, entry.target);
    }
}

fn sweep(args: Sweep) -> Result<ExitCode> {
    let config = match &args.config {
        Some(path) => {
            let text =
                fs::read_to_string(path).with_context(|| format!("reading {}", path.display()))?;
            ExperimentConfig::from_json(&text)?
        }
        None => ExperimentConfig {
            walker: WalkerParams::with_degrees(
                args.planes,
                args.per_plane,
                args.inclination_deg,
                args.phasing,
            ),
            p_values: if args.p_values.is_empty() {
                orthodromic::experiments::default_p_grid()
            } else {
                args.p_values
            },
            r_values: args.r_values.0,
            trials_per_cell: args.trials,
            master_seed: args.seed.context("--seed is required")?,
            loss_targets: args.targets,
            hop_limit_factor: args.hop_limit_factor,
        },
    };
    let threads = args.threads.unwrap_or(0);
    let rows = run_sweep_with_threads(&config, threads)?;
    let bytes = write_csv(&rows, &args.out)?;
    println!(
        "wrote {} rows ({bytes} bytes) to {}",
        rows.len(),
        args.out.display()
    );
    let summary = min_radius_summary(&rows, &config.loss_targets);
    print_summary(&summary);
    if let Some(path) = &args.summary_json {
        fs::write(path, summary_json(&summary)?)
            .with_context(|| format!("writing {}", path.display()))?;
    }
    Ok(ExitCode::SUCCESS)
}

fn min_radius(args: MinRadiusArgs) -> Result<ExitCode> {
    let file =
        fs::File::open(&args.csv).with_context(|| format!("opening {}", args.csv.display()))?;
    let rows = read_csv(file)?;
    if let Some(t) = args.targets.iter().find(|t| !(0.0..=1.0).contains(*t)) {
        bail!("loss target {t} outside [0, 1]");
    }
    let summary = min_radius_summary(&rows, &args.targets);
    if args.json {
        println!("{}", summary_json(&summary)?);
    } else {
        print_summary(&summary);
    }
    Ok(ExitCode::SUCCESS)
}

fn main() -> ExitCode {
    let cli = match Cli::try_parse() {
        Ok(cli) => cli,
        Err(err) => {
            let code = if err.use_stderr() { 1 } else { 0 };
            let _ = err.print();
            return ExitCode::from(code);
        }
    };
    let result = match cli.command {
        Command::GenTopology(args) => gen_topology(args),
        Command::Route(args) => route(args),
        Command::FloodSim(args) => flood_sim(args),
        Command::Sweep(args) => sweep(args),
        Command::MinRadius(args) => min_radius(args),
    };
    result.unwrap_or_else(|err| {
        eprintln!("error: {err:#}");
        ExitCode::from(1)
    })
}
