//! Monte Carlo loss sweeps over link failure probability and routing radius.
//!
//! Trial `t` of failure probability `p_values[i]` draws its failures and its
//! source/destination pair from ChaCha8 stream `(i << 32) | t` keyed by the
//! master seed. Every radius routes over that same sample, so the rows of one
//! `p` are paired and the result does not depend on how trials are scheduled.

use std::fs::File;
use std::io::{BufWriter, Read, Write};
use std::path::Path;

use rand::{Rng, SeedableRng};
use rand_chacha::ChaCha8Rng;
use rayon::prelude::*;
use serde::{Deserialize, Serialize};

use crate::constellation::{ConstellationGraph, NodeId, WalkerParams};
use crate::error::{Error, Result};
use crate::routing::{check_monotone, default_hop_limit, route_with_oracle_views_in, Outcome};
use crate::spf::SpfWorkspace;

pub const CSV_HEADER: [&str; 7] = [
    "p",
    "r",
    "trials",
    "delivered",
    "dropped",
    "discarded_disconnected",
    "loss_rate",
];

#[derive(Debug, Clone, PartialEq, Serialize, Deserialize)]
#[serde(deny_unknown_fields)]
pub struct ExperimentConfig {
    pub walker: WalkerParams<f64>,
    pub p_values: Vec<f64>,
    pub r_values: Vec<usize>,
    pub trials_per_cell: usize,
    pub master_seed: u64,
    #[serde(default = "default_targets")]
    pub loss_targets: Vec<f64>,
    /// Hop limit is `factor · |V| · r`.
    #[serde(default = "one")]
    pub hop_limit_factor: f64,
}

fn default_targets() -> Vec<f64> {
    vec![0.01]
}

fn one() -> f64 {
    1.0
}

/// `0, 0.025, …, 0.375`.
pub fn default_p_grid() -> Vec<f64> {
    (0..16).map(|i| f64::from(i) * 0.025).collect()
}

impl Default for ExperimentConfig {
    /// 24 planes of 66 at 53°, the full failure grid, radii 1 to 30 and
    /// 10⁴ trials per cell.
    fn default() -> Self {
        Self {
            walker: WalkerParams::with_degrees(24, 66, 53.0, 1),
            p_values: default_p_grid(),
            r_values: (1..=30).collect(),
            trials_per_cell: 10_000,
            master_seed: 1,
            loss_targets: default_targets(),
            hop_limit_factor: 1.0,
        }
    }
}

impl ExperimentConfig {
    pub fn validate(&self) -> Result<()> {
        let bad = |msg: String| Err(Error::InvalidConfig(msg));
        self.walker
            .validate()
            .map_err(|e| Error::InvalidConfig(e.to_string()))?;
        if self.p_values.is_empty() || self.r_values.is_empty() {
            return bad("p_values and r_values must be nonempty".into());
        }
        if let Some(p) = self.p_values.iter().find(|p| !(0.0..1.0).contains(*p)) {
            return bad(format!("failure probability {p} outside [0, 1)"));
        }
        if self.r_values.contains(&0) {
            return bad("radius 0".into());
        }
        if self.trials_per_cell == 0 {
            return bad("trials_per_cell must be at least 1".into());
        }
        if self.trials_per_cell > u32::MAX as usize || self.p_values.len() > u32::MAX as usize {
            return bad("too many trials".into());
        }
        if let Some(t) = self.loss_targets.iter().find(|t| !(0.0..=1.0).contains(*t)) {
            return bad(format!("loss target {t} outside [0, 1]"));
        }
        if !(self.hop_limit_factor.is_finite() && self.hop_limit_factor > 0.0) {
            return bad(format!("hop_limit_factor {}", self.hop_limit_factor));
        }
        let mut ps = self.p_values.clone();
        ps.sort_by(f64::total_cmp);
        ps.dedup();
        let mut rs = self.r_values.clone();
        rs.sort_unstable();
        rs.dedup();
        if ps.len() != self.p_values.len() || rs.len() != self.r_values.len() {
            return bad("repeated p or r value".into());
        }
        Ok(())
    }

    pub fn from_json(text: &str) -> Result<Self> {
        let config: Self = serde_json::from_str(text)?;
        config.validate()?;
        Ok(config)
    }

    pub fn to_json(&self) -> Result<String> {
        Ok(serde_json::to_string_pretty(self)?)
    }

    pub fn hop_limit(&self, node_count: usize, radius: usize) -> usize {
        ((default_hop_limit(node_count, radius) as f64 * self.hop_limit_factor).ceil() as usize)
            .max(1)
    }
}

#[derive(Debug, Clone, Copy, PartialEq, Serialize, Deserialize)]
pub struct ResultRow {
    pub p: f64,
    pub r: usize,
    pub trials: u64,
    pub delivered: u64,
    pub dropped: u64,
    pub discarded_disconnected: u64,
    pub loss_rate: f64,
}

impl ResultRow {
    pub fn new(
        p: f64,
        r: usize,
        delivered: u64,
        dropped: u64,
        discarded_disconnected: u64,
    ) -> Self {
        let routed = delivered + dropped;
        let loss_rate = if routed == 0 {
            0.0
        } else {
            dropped as f64 / routed as f64
        };
        Self {
            p,
            r,
            trials: routed + discarded_disconnected,
            delivered,
            dropped,
            discarded_disconnected,
            loss_rate,
        }
    }
}

/// Sweep rows plus the routing audit.
#[derive(Debug, Clone, PartialEq)]
pub struct SweepReport {
    pub rows: Vec<ResultRow>,
    /// Packets routed (reachable pairs, summed over radii).
    pub traces: u64,
    /// Packets that hit the hop limit; also counted as dropped.
    pub aborted: u64,
    /// Traces for which the monotone-progress check failed.
    pub violations: u64,
}

#[derive(Debug, Clone, Copy, Default)]
struct Counts {
    delivered: u64,
    dropped: u64,
    discarded: u64,
    aborted: u64,
    violations: u64,
}

impl Counts {
    fn add(&mut self, other: &Counts) {
        self.delivered += other.delivered;
        self.dropped += other.dropped;
        self.discarded += other.discarded;
        self.aborted += other.aborted;
        self.violations += other.violations;
    }
}

/// Random generator for one trial.
pub fn trial_rng(master_seed: u64, p_index: usize, trial: usize) -> ChaCha8Rng {
    let mut rng = ChaCha8Rng::seed_from_u64(master_seed);
    rng.set_stream(((p_index as u64) << 32) | trial as u64);
    rng
}

/// Failed topology and distinct source/destination for one trial.
pub fn trial_sample(
    base: &ConstellationGraph,
    p: f64,
    rng: &mut ChaCha8Rng,
) -> (ConstellationGraph, NodeId, NodeId) {
    let graph = base.apply_link_failures_with(p, rng);
    let n = base.node_count();
    let s = rng.random_range(0..n);
    let mut d = rng.random_range(0..n - 1);
    if d >= s {
        d += 1;
    }
    (graph, s, d)
}

pub fn run_sweep(config: &ExperimentConfig) -> Result<Vec<ResultRow>> {
    Ok(run_sweep_audited(config, false)?.rows)
}

/// Runs on a dedicated pool of `threads` workers.
pub fn run_sweep_with_threads(config: &ExperimentConfig, threads: usize) -> Result<Vec<ResultRow>> {
    let pool = rayon::ThreadPoolBuilder::new()
        .num_threads(threads)
        .build()
        .map_err(|e| Error::InvalidConfig(e.to_string()))?;
    pool.install(|| run_sweep(config))
}

/// Runs the sweep. With `audit`, every trace also goes through
/// [`check_monotone`].
pub fn run_sweep_audited(config: &ExperimentConfig, audit: bool) -> Result<SweepReport> {
    config.validate()?;
    let base = ConstellationGraph::walker_delta(config.walker, 0.0)?;
    let n = base.node_count();
    let radii = config.r_values.len();
    let cells = config.p_values.len() * radii;
    let trials = config.trials_per_cell;

    let totals = (0..config.p_values.len() * trials)
        .into_par_iter()
        .fold(
            || (SpfWorkspace::new(), vec![Counts::default(); cells]),
            |(mut ws, mut acc), unit| {
                let (pi, t) = (unit / trials, unit % trials);
                let mut rng = trial_rng(config.master_seed, pi, t);
                let (graph, s, d) = trial_sample(&base, config.p_values[pi], &mut rng);
                let row = &mut acc[pi * radii..(pi + 1) * radii];
                if !graph.reachable(s, d) {
                    row.iter_mut().for_each(|c| c.discarded += 1);
                    return (ws, acc);
                }
                for (c, &r) in row.iter_mut().zip(&config.r_values) {
                    let trace = route_with_oracle_views_in(
                        &mut ws,
                        &graph,
                        s,
                        d,
                        r,
                        config.hop_limit(n, r),
                    )
                    .expect("oracle views always match the topology");
                    match trace.outcome {
                        Outcome::Delivered => c.delivered += 1,
                        Outcome::DroppedNoProgress => c.dropped += 1,
                        Outcome::AbortedHopLimit => {
                            c.dropped += 1;
                            c.aborted += 1;
                        }
                    }
                    if audit && !check_monotone(&trace).is_empty() {
                        c.violations += 1;
                    }
                }
                (ws, acc)
            },
        )
        .map(|(_, acc)| acc)
        .reduce(
            || vec![Counts::default(); cells],
            |mut a, b| {
                a.iter_mut().zip(&b).for_each(|(x, y)| x.add(y));
                a
            },
        );

    let mut rows = Vec::with_capacity(cells);
    let mut total = Counts::default();
    for (pi, &p) in config.p_values.iter().enumerate() {
        for (ri, &r) in config.r_values.iter().enumerate() {
            let c = &totals[pi * radii + ri];
            total.add(c);
            rows.push(ResultRow::new(p, r, c.delivered, c.dropped, c.discarded));
        }
    }
    sort_rows(&mut rows);
    Ok(SweepReport {
        rows,
        traces: total.delivered + total.dropped,
        aborted: total.aborted,
        violations: total.violations,
    })
}

fn sort_rows(rows: &mut [ResultRow]) {
    rows.sort_by(|a, b| a.p.total_cmp(&b.p).then(a.r.cmp(&b.r)));
}

fn same_p(a: f64, b: f64) -> bool {
    (a - b).abs() < 1e-9
}

/// Smallest radius among the rows for `p` whose loss rate is at most
/// `target`.
pub fn min_radius_for_loss(rows: &[ResultRow], p: f64, target: f64) -> Option<usize> {
    rows.iter()
        .filter(|row| same_p(row.p, p) && row.loss_rate <= target)
        .map(|row| row.r)
        .min()
}

#[derive(Debug, Clone, Copy, PartialEq, Serialize, Deserialize)]
pub struct MinRadius {
    pub p: f64,
    pub target: f64,
    pub min_r: Option<usize>,
}

/// Minimum radius for every `p` present in `rows` and every target.
pub fn min_radius_summary(rows: &[ResultRow], targets: &[f64]) -> Vec<MinRadius> {
    let mut ps: Vec<f64> = rows.iter().map(|r| r.p).collect();
    ps.sort_by(f64::total_cmp);
    ps.dedup_by(|a, b| same_p(*a, *b));
    targets
        .iter()
        .flat_map(|&target| ps.iter().map(move |&p| (p, target)))
        .map(|(p, target)| MinRadius {
            p,
            target,
            min_r: min_radius_for_loss(rows, p, target),
        })
        .collect()
}

pub fn summary_json(summary: &[MinRadius]) -> Result<String> {
    Ok(serde_json::to_string_pretty(summary)?)
}

/// The CSV document for `rows`, sorted by `(p, r)`.
pub fn csv_bytes(rows: &[ResultRow]) -> Result<Vec<u8>> {
    if rows.is_empty() {
        return Err(Error::EmptyRows);
    }
    let mut sorted = rows.to_vec();
    sort_rows(&mut sorted);
    let mut w = csv::Writer::from_writer(Vec::new());
    w.write_record(CSV_HEADER)?;
    for row in &sorted {
        w.write_record([
            format!("{:.6}", row.p),
            row.r.to_string(),
            row.trials.to_string(),
            row.delivered.to_string(),
            row.dropped.to_string(),
            row.discarded_disconnected.to_string(),
            format!("{:.6}", row.loss_rate),
        ])?;
    }
    w.into_inner().map_err(|e| Error::Io(e.into_error()))
}

/// Writes the CSV to `dest` and returns the number of bytes written.
pub fn write_csv(rows: &[ResultRow], dest: impl AsRef<Path>) -> Result<u64> {
    let bytes = csv_bytes(rows)?;
    let mut out = BufWriter::new(File::create(dest)?);
    out.write_all(&bytes)?;
    out.flush()?;
    Ok(bytes.len() as u64)
}

/// Parses a results CSV. Loss rates are checked against the counts.
pub fn read_csv(source: impl Read) -> Result<Vec<ResultRow>> {
    let mut reader = csv::Reader::from_reader(source);
    if reader.headers()?.iter().ne(CSV_HEADER) {
        return Err(Error::InvalidConfig("unexpected csv header".into()));
    }
    let mut rows = Vec::new();
    for record in reader.deserialize() {
        let row: ResultRow = record?;
        let expect = ResultRow::new(
            row.p,
            row.r,
            row.delivered,
            row.dropped,
            row.discarded_disconnected,
        );
        if expect.trials != row.trials || (expect.loss_rate - row.loss_rate).abs() > 5e-7 {
            return Err(Error::InvalidConfig(format!(
                "inconsistent row for p={} r={}",
                row.p, row.r
            )));
        }
        rows.push(row);
    }
    Ok(rows)
}
