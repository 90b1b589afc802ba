use std::path::{Path, PathBuf};
use std::process::{Command, Output};

use orthodromic::experiments::csv_bytes;
use orthodromic::{read_csv, route_with_oracle_views, ConstellationGraph, LinkState};
use tempfile::TempDir;

fn orsim(args: &[&str]) -> Output {
    Command::new(env!("CARGO_BIN_EXE_orsim"))
        .args(args)
        .output()
        .unwrap()
}

fn stdout(out: &Output) -> String {
    String::from_utf8_lossy(&out.stdout).into_owned()
}

fn topology(dir: &TempDir, planes: usize, per_plane: usize) -> PathBuf {
    let path = dir.path().join(format!("topo-{planes}x{per_plane}.json"));
    let out = orsim(&[
        "gen-topology",
        "--planes",
        &planes.to_string(),
        "--per-plane",
        &per_plane.to_string(),
        "--out",
        path.to_str().unwrap(),
    ]);
    assert!(
        out.status.success(),
        "{}",
        String::from_utf8_lossy(&out.stderr)
    );
    path
}

fn load(path: &Path) -> ConstellationGraph {
    ConstellationGraph::from_json(&std::fs::read_to_string(path).unwrap()).unwrap()
}

#[test]
fn gen_topology_reports_counts() {
    let dir = TempDir::new().unwrap();
    let path = dir.path().join("t.json");
    let out = orsim(&[
        "gen-topology",
        "--planes",
        "6",
        "--per-plane",
        "4",
        "--out",
        path.to_str().unwrap(),
    ]);
    assert_eq!(out.status.code(), Some(0));
    assert_eq!(stdout(&out).trim(), "24 nodes, 48 edges");

    let direct = ConstellationGraph::walker_delta(
        orthodromic::WalkerParams::with_degrees(6, 4, 53.0, 1),
        0.0,
    )
    .unwrap();
    assert_eq!(load(&path), direct);
}

#[test]
fn gen_topology_rejects_two_planes() {
    let dir = TempDir::new().unwrap();
    let path = dir.path().join("t.json");
    let out = orsim(&[
        "gen-topology",
        "--planes",
        "2",
        "--per-plane",
        "4",
        "--out",
        path.to_str().unwrap(),
    ]);
    assert_eq!(out.status.code(), Some(1));
    assert!(!path.exists());
}

#[test]
fn usage_errors_exit_one() {
    assert_eq!(orsim(&[]).status.code(), Some(1));
    assert_eq!(orsim(&["route", "--src", "x"]).status.code(), Some(1));
    assert_eq!(orsim(&["--help"]).status.code(), Some(0));
}

#[test]
fn route_to_self() {
    let dir = TempDir::new().unwrap();
    let topo = topology(&dir, 6, 6);
    let out = orsim(&[
        "route",
        "--topology",
        topo.to_str().unwrap(),
        "--src",
        "5",
        "--dst",
        "5",
        "--radius",
        "1",
    ]);
    assert_eq!(out.status.code(), Some(0));
    assert_eq!(stdout(&out), "outcome=Delivered hops=0\n");
}

#[test]
fn route_rejects_bad_ids_and_unseeded_failures() {
    let dir = TempDir::new().unwrap();
    let topo = topology(&dir, 6, 6);
    let t = topo.to_str().unwrap();
    assert_eq!(
        orsim(&[
            "route",
            "--topology",
            t,
            "--src",
            "0",
            "--dst",
            "36",
            "--radius",
            "1"
        ])
        .status
        .code(),
        Some(1)
    );
    let unseeded = orsim(&[
        "route",
        "--topology",
        t,
        "--src",
        "0",
        "--dst",
        "3",
        "--radius",
        "1",
        "--fail-prob",
        "0.2",
    ]);
    assert_eq!(unseeded.status.code(), Some(1));
    assert!(String::from_utf8_lossy(&unseeded.stderr).contains("--seed"));
}

#[test]
fn single_failure_blocks_radius_one_but_not_two() {
    let dir = TempDir::new().unwrap();
    let topo = topology(&dir, 6, 6);
    let g = load(&topo);
    let n = g.node_count();

    // a pair greedy routing delivers, and a link on its path whose loss traps
    // radius one while radius two still gets through
    let (s, d, (a, b)) = (0..n)
        .flat_map(|s| (0..n).map(move |d| (s, d)))
        .filter(|&(s, d)| s != d)
        .find_map(|(s, d)| {
            let clean = route_with_oracle_views(&g, s, d, 1, n).unwrap();
            if !clean.is_delivered() {
                return None;
            }
            clean
                .hops
                .iter()
                .map(|h| (h.current, h.next))
                .find(|&(a, b)| {
                    let cut = g.with_link_state(a, b, LinkState::Down).unwrap();
                    !route_with_oracle_views(&cut, s, d, 1, n)
                        .unwrap()
                        .is_delivered()
                        && route_with_oracle_views(&cut, s, d, 2, 2 * n)
                            .unwrap()
                            .is_delivered()
                })
                .map(|link| (s, d, link))
        })
        .expect("a scenario exists on 6x6");

    let t = topo.to_str().unwrap();
    let (src, dst, link) = (s.to_string(), d.to_string(), format!("{a}:{b}"));
    let base = ["route", "--topology", t, "--src", &src, "--dst", &dst];

    let clean = orsim(&[&base[..], &["--radius", "1"]].concat());
    assert_eq!(clean.status.code(), Some(0));
    assert!(stdout(&clean).contains("outcome=Delivered"));

    let trapped = orsim(&[&base[..], &["--radius", "1", "--fail-link", &link]].concat());
    assert_eq!(trapped.status.code(), Some(2));
    assert!(stdout(&trapped).contains("outcome=DroppedNoProgress"));

    let around = orsim(&[&base[..], &["--radius", "2", "--fail-link", &link]].concat());
    assert_eq!(around.status.code(), Some(0));
    assert!(stdout(&around).contains("outcome=Delivered"));

    let flooded = orsim(
        &[
            &base[..],
            &["--radius", "2", "--fail-link", &link, "--flooded"],
        ]
        .concat(),
    );
    assert_eq!(stdout(&flooded), stdout(&around));

    let hop_line = stdout(&around).lines().next().unwrap().to_string();
    let fields: Vec<&str> = hop_line.split(' ').collect();
    assert_eq!(fields.len(), 5);
    assert_eq!(fields[0], "hop");
    assert_eq!(fields[1], src);
}

#[test]
fn flood_sim_matches_balls_and_writes_trace() {
    let dir = TempDir::new().unwrap();
    let topo = topology(&dir, 8, 8);
    let trace = dir.path().join("flood.log");
    let out = orsim(&[
        "flood-sim",
        "--topology",
        topo.to_str().unwrap(),
        "--radius",
        "3",
        "--fail-prob",
        "0.2",
        "--seed",
        "4",
        "--trace-out",
        trace.to_str().unwrap(),
    ]);
    assert_eq!(
        out.status.code(),
        Some(0),
        "{}",
        String::from_utf8_lossy(&out.stderr)
    );
    let text = stdout(&out);
    assert!(
        text.contains("64/64 databases match the 3-hop ball"),
        "{text}"
    );
    assert!(text.contains("per link direction: 1"), "{text}");
    let log = std::fs::read_to_string(&trace).unwrap();
    assert!(log.lines().all(|l| l.split(' ').count() == 7));
    assert!(log.lines().any(|l| l.ends_with(" FORWARD")));
}

fn sweep(dir: &TempDir, name: &str, threads: &str) -> (Output, PathBuf) {
    let csv = dir.path().join(name);
    let out = orsim(&[
        "sweep",
        "--planes",
        "8",
        "--per-plane",
        "10",
        "--p",
        "0,0.25",
        "--r",
        "1-3,10",
        "--trials",
        "100",
        "--seed",
        "11",
        "--threads",
        threads,
        "--out",
        csv.to_str().unwrap(),
    ]);
    (out, csv)
}

#[test]
fn sweep_writes_csv_and_summary() {
    let dir = TempDir::new().unwrap();
    let (out, csv) = sweep(&dir, "a.csv", "1");
    assert_eq!(
        out.status.code(),
        Some(0),
        "{}",
        String::from_utf8_lossy(&out.stderr)
    );
    let rows = read_csv(std::fs::File::open(&csv).unwrap()).unwrap();
    assert_eq!(rows.len(), 8);
    assert!(rows.iter().all(|r| r.trials == 100));
    let text = stdout(&out);
    assert!(text.contains("p=0.250 target=0.01 min_r="), "{text}");

    let (again, csv2) = sweep(&dir, "b.csv", "4");
    assert_eq!(again.status.code(), Some(0));
    assert_eq!(std::fs::read(&csv).unwrap(), std::fs::read(&csv2).unwrap());
    assert_eq!(csv_bytes(&rows).unwrap(), std::fs::read(&csv).unwrap());
}

#[test]
fn sweep_requires_seed_and_valid_config() {
    let dir = TempDir::new().unwrap();
    let out_path = dir.path().join("x.csv");
    let o = out_path.to_str().unwrap();
    assert_eq!(
        orsim(&["sweep", "--trials", "1", "--out", o]).status.code(),
        Some(1)
    );
    assert_eq!(
        orsim(&["sweep", "--p", "1.5", "--seed", "1", "--trials", "1", "--out", o])
            .status
            .code(),
        Some(1)
    );

    let config = dir.path().join("c.json");
    std::fs::write(&config, r#"{"walker": {"planes": 2}}"#).unwrap();
    assert_eq!(
        orsim(&["sweep", "--config", config.to_str().unwrap(), "--out", o])
            .status
            .code(),
        Some(1)
    );
}

#[test]
fn sweep_from_config_file() {
    let dir = TempDir::new().unwrap();
    let config = orthodromic::ExperimentConfig {
        walker: orthodromic::WalkerParams::with_degrees(6, 6, 53.0, 1),
        p_values: vec![0.1],
        r_values: vec![1, 2],
        trials_per_cell: 50,
        master_seed: 3,
        ..Default::default()
    };
    let path = dir.path().join("c.json");
    std::fs::write(&path, config.to_json().unwrap()).unwrap();
    let csv = dir.path().join("out.csv");
    let summary = dir.path().join("s.json");
    let out = orsim(&[
        "sweep",
        "--config",
        path.to_str().unwrap(),
        "--out",
        csv.to_str().unwrap(),
        "--summary-json",
        summary.to_str().unwrap(),
    ]);
    assert_eq!(
        out.status.code(),
        Some(0),
        "{}",
        String::from_utf8_lossy(&out.stderr)
    );
    let expected = orthodromic::run_sweep(&config).unwrap();
    assert_eq!(std::fs::read(&csv).unwrap(), csv_bytes(&expected).unwrap());
    assert!(std::fs::read_to_string(&summary)
        .unwrap()
        .contains("\"min_r\""));
}

#[test]
fn min_radius_from_csv() {
    let dir = TempDir::new().unwrap();
    let csv = dir.path().join("rows.csv");
    std::fs::write(
        &csv,
        "p,r,trials,delivered,dropped,discarded_disconnected,loss_rate\n\
         0.100000,1,100,50,50,0,0.500000\n\
         0.100000,2,100,95,5,0,0.050000\n\
         0.100000,3,1000,991,9,0,0.009000\n\
         0.100000,4,1000,999,1,0,0.001000\n",
    )
    .unwrap();
    let out = orsim(&["min-radius", "--csv", csv.to_str().unwrap()]);
    assert_eq!(out.status.code(), Some(0));
    assert_eq!(stdout(&out).trim(), "p=0.100 target=0.01 min_r=3");

    let json = orsim(&[
        "min-radius",
        "--csv",
        csv.to_str().unwrap(),
        "--target",
        "0.0001",
        "--json",
    ]);
    assert!(stdout(&json).contains("\"min_r\": null"));
    assert_eq!(
        orsim(&["min-radius", "--csv", "/nonexistent.csv"])
            .status
            .code(),
        Some(1)
    );
}
