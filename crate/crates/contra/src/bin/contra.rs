//! Command-line entry point: compile policies, run the analysis and the
//! brute-force oracle, simulate scenarios, and sweep load levels.

use std::path::PathBuf;
use std::process::ExitCode;

use clap::{Args, Parser, Subcommand};

use contra::analysis::{analyze, decompose};
use contra::bundle::{compile, max_switch_state_bytes, render};
use contra::oracle::{compliant_paths, UtilMap};
use contra::policy::parse_policy;
use contra::sim::{parse_scenario, run_simulation, ScenarioConfig, Scheme};
use contra::topo::Topology;

#[derive(Parser)]
#[command(name = "contra", about = "performance-aware routing compiler and simulator")]
struct Cli {
    #[command(subcommand)]
    cmd: Cmd,
}

#[derive(Args, Clone)]
struct SimOverrides {
    /// RNG seed
    #[arg(long)]
    seed: Option<u64>,
    /// Probe period in nanoseconds
    #[arg(long)]
    probe_period: Option<u64>,
    /// Flowlet timeout in nanoseconds
    #[arg(long)]
    flowlet_timeout: Option<u64>,
    /// Failure-detection horizon in probe periods
    #[arg(long)]
    k_failure: Option<u64>,
    /// TTL-spread threshold for lazy loop breaking
    #[arg(long)]
    delta_threshold: Option<u8>,
    /// Forwarding scheme
    #[arg(long, value_parser = parse_scheme)]
    scheme: Option<Scheme>,
    /// Output directory for reports and CSVs
    #[arg(long)]
    out: Option<PathBuf>,
}

fn parse_scheme(s: &str) -> Result<Scheme, String> {
    Scheme::parse(s).ok_or_else(|| "expected contra|ecmp|hula|spain|sp".to_string())
}

#[derive(Subcommand)]
enum Cmd {
    /// Compile a policy against a topology into a per-switch config bundle
    Compile {
        policy_file: PathBuf,
        topology_file: PathBuf,
        #[arg(long)]
        out: Option<PathBuf>,
    },
    /// Analyze a policy: monotonicity, isotonicity, decomposition
    Analyze {
        policy_file: PathBuf,
        /// Topology providing the node-ID alphabet (optional; a policy
        /// without regexes needs none)
        #[arg(long)]
        topology: Option<PathBuf>,
    },
    /// Enumerate ranked compliant paths by brute force (small topologies)
    Oracle {
        policy_file: PathBuf,
        topology_file: PathBuf,
        src: String,
        dst: String,
    },
    /// Run one scenario
    Simulate {
        scenario_file: PathBuf,
        #[command(flatten)]
        ov: SimOverrides,
    },
    /// Run a scenario template across load levels, aggregating FCT curves
    Sweep {
        scenario_file: PathBuf,
        /// Comma-separated load fractions in (0,1]
        #[arg(long, value_delimiter = ',')]
        loads: Vec<f64>,
        #[command(flatten)]
        ov: SimOverrides,
    },
}

fn main() -> ExitCode {
    match run(Cli::parse()) {
        Ok(()) => ExitCode::SUCCESS,
        Err(e) => {
            eprintln!("error: {e}");
            ExitCode::FAILURE
        }
    }
}

fn read(p: &PathBuf) -> Result<String, String> {
    std::fs::read_to_string(p).map_err(|e| format!("{}: {e}", p.display()))
}

fn apply_overrides(cfg: &mut ScenarioConfig, ov: &SimOverrides) {
    if let Some(s) = ov.seed {
        cfg.seed = s;
    }
    if let Some(p) = ov.probe_period {
        cfg.params.probe_period_ns = p;
    }
    if let Some(t) = ov.flowlet_timeout {
        cfg.params.flowlet_timeout_ns = t;
    }
    if let Some(k) = ov.k_failure {
        cfg.params.k_failure = k;
    }
    if let Some(d) = ov.delta_threshold {
        cfg.params.delta_threshold = d;
    }
    if let Some(s) = ov.scheme {
        cfg.scheme = s;
    }
}

fn write_out(dir: &Option<PathBuf>, name: &str, content: &str) -> Result<(), String> {
    match dir {
        None => {
            print!("{content}");
            Ok(())
        }
        Some(d) => {
            std::fs::create_dir_all(d).map_err(|e| format!("{}: {e}", d.display()))?;
            let p = d.join(name);
            std::fs::write(&p, content).map_err(|e| format!("{}: {e}", p.display()))?;
            eprintln!("wrote {}", p.display());
            Ok(())
        }
    }
}

fn run(cli: Cli) -> Result<(), String> {
    match cli.cmd {
        Cmd::Compile { policy_file, topology_file, out } => {
            let topo = Topology::parse(&read(&topology_file)?).map_err(|e| e.to_string())?;
            let policy = read(&policy_file)?;
            let bundle = compile(&topo, policy.trim()).map_err(|e| e.to_string())?;
            let mut text = render(&bundle, &topo);
            text.push_str(&format!(
                "max_switch_state_bytes {}\n",
                max_switch_state_bytes(&bundle)
            ));
            write_out(&out, "bundle.txt", &text)
        }
        Cmd::Analyze { policy_file, topology } => {
            let alphabet = match topology {
                Some(t) => Topology::parse(&read(&t)?).map_err(|e| e.to_string())?.alphabet(),
                None => Default::default(),
            };
            let text = read(&policy_file)?;
            let policy = parse_policy(text.trim(), &alphabet).map_err(|e| e.to_string())?;
            let report = analyze(&policy);
            println!("{report}");
            match decompose(&policy, &report) {
                Ok(d) => println!("{d}"),
                Err(e) => return Err(e.to_string()),
            }
            Ok(())
        }
        Cmd::Oracle { policy_file, topology_file, src, dst } => {
            let topo = Topology::parse(&read(&topology_file)?).map_err(|e| e.to_string())?;
            if topo.n_nodes() > 12 {
                return Err(format!(
                    "oracle is exhaustive; topology has {} nodes (max 12)",
                    topo.n_nodes()
                ));
            }
            let text = read(&policy_file)?;
            let policy =
                parse_policy(text.trim(), &topo.alphabet()).map_err(|e| e.to_string())?;
            let s = topo.node(&src).ok_or(format!("unknown node {src}"))?;
            let d = topo.node(&dst).ok_or(format!("unknown node {dst}"))?;
            let utils = UtilMap::new();
            let paths = compliant_paths(&topo, &policy, &utils, s, d);
            if paths.is_empty() {
                println!("no compliant paths");
            }
            for rp in paths {
                let names: Vec<&str> = rp.nodes.iter().map(|&n| topo.name(n)).collect();
                println!("{}  rank={}", names.join("-"), rp.rank);
            }
            Ok(())
        }
        Cmd::Simulate { scenario_file, ov } => {
            let mut cfg = parse_scenario(&read(&scenario_file)?).map_err(|e| e.to_string())?;
            apply_overrides(&mut cfg, &ov);
            let topo = cfg.topo.clone();
            let report = run_simulation(cfg).map_err(|e| e.to_string())?;
            write_out(&ov.out, "report.txt", &report.render(&topo))?;
            write_out(&ov.out, "report.records", &report.records())?;
            write_out(&ov.out, "fct.csv", &report.fct_csv())
        }
        Cmd::Sweep { scenario_file, loads, ov } => {
            if loads.iter().any(|l| !(0.0..=1.0).contains(l) || *l == 0.0) {
                return Err("loads must be in (0,1]".into());
            }
            let base = parse_scenario(&read(&scenario_file)?).map_err(|e| e.to_string())?;
            let mut csv = String::from(
                "scheme,load,seed,config_hash,flows_completed,fct_mean_ns,fct_p99_ns,\
                 queue_drops,probe_fraction\n",
            );
            for &load in &loads {
                let mut cfg = base.clone();
                apply_overrides(&mut cfg, &ov);
                cfg.load = load;
                let report = run_simulation(cfg).map_err(|e| e.to_string())?;
                csv.push_str(&format!(
                    "{},{},{},{:016x},{},{},{},{},{:.8}\n",
                    report.scheme,
                    load,
                    report.seed,
                    report.config_hash,
                    report.completed_fcts().len(),
                    report.mean_fct_ns().map(|m| format!("{m:.0}")).unwrap_or_default(),
                    report
                        .percentile_fct_ns(99.0)
                        .map(|m| m.to_string())
                        .unwrap_or_default(),
                    report.queue_drops,
                    report.probe_fraction(),
                ));
            }
            write_out(&ov.out, "sweep.csv", &csv)
        }
    }
}
