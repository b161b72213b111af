//! Scenario configuration: programmatic struct, line-oriented `key=value`
//! text format, and validation (probe-period rule).

use crate::policy::{parse_policy, pretty_print, BoolTest, PolicyAst, RankExpr};
use crate::rank::Rat;
use crate::switch::SwitchParams;
use crate::topo::{NodeId, Topology};

use super::link::BUFFER_MSS;
use super::workload::{FlowSpec, SizeCdf};

#[derive(Debug, Clone, Copy, PartialEq, Eq)]
pub enum Scheme {
    Contra,
    Ecmp,
    Hula,
    Spain,
    Sp,
}

impl Scheme {
    pub fn parse(s: &str) -> Option<Scheme> {
        match s {
            "contra" => Some(Scheme::Contra),
            "ecmp" => Some(Scheme::Ecmp),
            "hula" => Some(Scheme::Hula),
            "spain" => Some(Scheme::Spain),
            "sp" => Some(Scheme::Sp),
            _ => None,
        }
    }

    pub fn as_str(&self) -> &'static str {
        match self {
            Scheme::Contra => "contra",
            Scheme::Ecmp => "ecmp",
            Scheme::Hula => "hula",
            Scheme::Spain => "spain",
            Scheme::Sp => "sp",
        }
    }
}

/// Constant-bit-rate UDP source (no acks, no retransmission).
#[derive(Debug, Clone)]
pub struct CbrSpec {
    pub src_host: usize,
    pub dst_host: usize,
    pub gbps: f64,
    pub start_ns: u64,
    pub end_ns: u64,
    /// Optional transport port: sources sharing (src, dst, port) hash to
    /// the same flowlet identifier. Defaults to a unique per-flow value.
    pub port: Option<u64>,
}

/// Timed static utilization override for one directed link.
#[derive(Debug, Clone)]
pub struct UtilSet {
    pub at_ns: u64,
    pub from: NodeId,
    pub to: NodeId,
    pub util: Rat,
}

/// Extra delay injected into probes crossing `from -> to` inside a window;
/// used to replay in-flight-probe race scenarios.
#[derive(Debug, Clone)]
pub struct ProbeDelay {
    pub from: NodeId,
    pub to: NodeId,
    pub extra_ns: u64,
    pub window: (u64, u64),
}

#[derive(Debug, Clone)]
pub struct FailureEvent {
    pub a: NodeId,
    pub b: NodeId,
    pub down_ns: u64,
    pub up_ns: Option<u64>,
}

#[derive(Debug, Clone)]
pub struct ScenarioConfig {
    pub topo: Topology,
    pub policy: String,
    pub scheme: Scheme,
    pub seed: u64,
    pub duration_ns: u64,
    pub params: SwitchParams,
    /// When false, regex path constraints are stripped from the compiled
    /// policy and packets carry no meaningful tags (the strawman protocol).
    pub enable_tagging: bool,
    /// Poisson workload: load fraction of per-host capacity plus a size CDF.
    pub load: f64,
    pub workload: Option<SizeCdf>,
    /// Explicitly scripted flows (in addition to any workload).
    pub flows: Vec<FlowSpec>,
    pub cbr: Vec<CbrSpec>,
    pub failures: Vec<FailureEvent>,
    pub util_script: Vec<UtilSet>,
    /// When set, link utilizations come only from the script (estimators
    /// ignored); for golden protocol-convergence scenarios.
    pub static_utils: bool,
    pub probe_delays: Vec<ProbeDelay>,
    /// Record, at every probe round tick, the best next hop at `watch.0`
    /// toward `watch.1`.
    pub watch: Option<(NodeId, NodeId)>,
    pub record_paths: bool,
    pub allow_short_probe_period: bool,
    pub host_gbps: f64,
    pub host_latency_ns: u64,
    pub sample_interval_ns: u64,
    pub cwnd_init: u32,
    pub cwnd_cap: u32,
    /// Number of precomputed edge-disjoint paths for the static-multipath
    /// baseline.
    pub spain_k: usize,
    /// Per-port output buffer bound, in MSS units.
    pub buffer_mss: u64,
    /// Retransmission timeout: a dropped packet holds its window slot and is
    /// requeued only after this delay.
    pub rto_ns: u64,
}

impl ScenarioConfig {
    pub fn new(topo: Topology, policy: &str) -> Self {
        ScenarioConfig {
            topo,
            policy: policy.to_string(),
            scheme: Scheme::Contra,
            seed: 1,
            duration_ns: 10_000_000,
            params: SwitchParams::default(),
            enable_tagging: true,
            load: 0.0,
            workload: None,
            flows: Vec::new(),
            cbr: Vec::new(),
            failures: Vec::new(),
            util_script: Vec::new(),
            static_utils: false,
            probe_delays: Vec::new(),
            watch: None,
            record_paths: false,
            allow_short_probe_period: false,
            host_gbps: 10.0,
            host_latency_ns: 0,
            sample_interval_ns: 256_000,
            cwnd_init: 10,
            cwnd_cap: 64,
            spain_k: 2,
            buffer_mss: BUFFER_MSS,
            rto_ns: 1_000_000,
        }
    }

    /// Host index -> attachment switch, expanding per-node host counts. If
    /// the topology declares no hosts, every switch gets one.
    pub fn host_switches(&self) -> Vec<NodeId> {
        let mut out = Vec::new();
        for n in 0..self.topo.n_nodes() {
            let c = self.topo.hosts(n);
            let c = if self.topo.total_hosts() == 0 { 1 } else { c };
            for _ in 0..c {
                out.push(n);
            }
        }
        out
    }

    pub fn validate(&self) -> Result<(), ScenarioError> {
        let min_period = self.topo.max_rtt_ns() / 2;
        if self.params.probe_period_ns < min_period && !self.allow_short_probe_period {
            return Err(ScenarioError::ProbePeriodTooShort {
                period: self.params.probe_period_ns,
                min: min_period,
            });
        }
        if !(0.0..=1.0).contains(&self.load) {
            return Err(ScenarioError::Invalid("load must be in [0,1]".into()));
        }
        if self.load > 0.0 && self.workload.is_none() {
            return Err(ScenarioError::Invalid("load > 0 requires a workload CDF".into()));
        }
        Ok(())
    }

    /// Stable hash of all reproducibility-relevant settings (FNV-1a over a
    /// canonical rendering).
    pub fn config_hash(&self) -> u64 {
        let mut s = String::new();
        s.push_str(&self.topo.to_text());
        s.push_str(&self.policy);
        s.push_str(self.scheme.as_str());
        s.push_str(&format!(
            "{} {} {} {} {} {} {} {} {} {} {} {} {} {} {}",
            self.seed,
            self.duration_ns,
            self.params.probe_period_ns,
            self.params.flowlet_timeout_ns,
            self.params.k_failure,
            self.params.delta_threshold,
            self.params.enable_versioning,
            self.params.policy_aware_flowlets,
            self.enable_tagging,
            self.load,
            self.cwnd_init,
            self.cwnd_cap,
            self.spain_k,
            self.buffer_mss,
            self.rto_ns,
        ));
        fnv1a(s.as_bytes())
    }
}

pub fn fnv1a(bytes: &[u8]) -> u64 {
    let mut h: u64 = 0xcbf29ce484222325;
    for &b in bytes {
        h ^= b as u64;
        h = h.wrapping_mul(0x100000001b3);
    }
    h
}

#[derive(Debug, thiserror::Error)]
pub enum ScenarioError {
    #[error(
        "probe period {period} ns is below 0.5 x max RTT ({min} ns); \
         set allow_short_probe_period to override"
    )]
    ProbePeriodTooShort { period: u64, min: u64 },
    #[error("scenario line {0}: {1}")]
    Parse(usize, String),
    #[error("invalid scenario: {0}")]
    Invalid(String),
}

/// Replace every regex guard by its non-infinite branch: the strawman
/// protocol that carries metrics but cannot enforce path constraints.
pub fn strip_regex_guards(policy: &PolicyAst) -> String {
    fn go(e: &RankExpr) -> RankExpr {
        match e {
            RankExpr::If(BoolTest::Regex(..), t, els) => {
                let (t, els) = (go(t), go(els));
                match (&t, &els) {
                    (RankExpr::Inf, _) => els,
                    (_, RankExpr::Inf) => t,
                    _ => t,
                }
            }
            RankExpr::If(c, t, els) => {
                RankExpr::If(c.clone(), Box::new(go(t)), Box::new(go(els)))
            }
            RankExpr::Bin(op, l, r) => {
                RankExpr::Bin(*op, Box::new(go(l)), Box::new(go(r)))
            }
            RankExpr::Tuple(cs) => RankExpr::Tuple(cs.iter().map(go).collect()),
            other => other.clone(),
        }
    }
    let root = go(&policy.root);
    let arity = root.arity();
    pretty_print(&PolicyAst { root, regexes: Vec::new(), arity })
}

/// Parse the line-oriented `key = value` scenario format. The topology is
/// given inline between `topology {` and `}` using the topology text format.
pub fn parse_scenario(text: &str) -> Result<ScenarioConfig, ScenarioError> {
    let mut topo_text = String::new();
    let mut in_topo = false;
    let mut kvs: Vec<(usize, String, String)> = Vec::new();
    for (i, raw) in text.lines().enumerate() {
        let line = raw.trim();
        if line.is_empty() || line.starts_with('#') {
            continue;
        }
        if in_topo {
            if line == "}" {
                in_topo = false;
            } else {
                topo_text.push_str(line);
                topo_text.push('\n');
            }
            continue;
        }
        if line == "topology {" {
            in_topo = true;
            continue;
        }
        let Some((k, v)) = line.split_once('=') else {
            return Err(ScenarioError::Parse(i + 1, "expected key = value".into()));
        };
        kvs.push((i + 1, k.trim().to_string(), v.trim().to_string()));
    }
    if topo_text.is_empty() {
        return Err(ScenarioError::Invalid("missing topology block".into()));
    }
    let topo = Topology::parse(&topo_text)
        .map_err(|e| ScenarioError::Invalid(format!("topology: {e}")))?;
    let policy = kvs
        .iter()
        .find(|(_, k, _)| k == "policy")
        .map(|(_, _, v)| v.clone())
        .ok_or_else(|| ScenarioError::Invalid("missing policy".into()))?;
    let mut cfg = ScenarioConfig::new(topo, &policy);

    let node = |cfg: &ScenarioConfig, ln: usize, name: &str| {
        cfg.topo
            .node(name)
            .ok_or_else(|| ScenarioError::Parse(ln, format!("unknown node {name}")))
    };
    for (ln, k, v) in kvs {
        let perr = |m: &str| ScenarioError::Parse(ln, m.to_string());
        match k.as_str() {
            "policy" => {}
            "scheme" => {
                cfg.scheme = Scheme::parse(&v).ok_or_else(|| perr("unknown scheme"))?
            }
            "seed" => cfg.seed = v.parse().map_err(|_| perr("bad seed"))?,
            "duration_ns" => cfg.duration_ns = v.parse().map_err(|_| perr("bad duration"))?,
            "probe_period_ns" => {
                cfg.params.probe_period_ns = v.parse().map_err(|_| perr("bad period"))?
            }
            "flowlet_timeout_ns" => {
                cfg.params.flowlet_timeout_ns = v.parse().map_err(|_| perr("bad timeout"))?
            }
            "k_failure" => cfg.params.k_failure = v.parse().map_err(|_| perr("bad k"))?,
            "delta_threshold" => {
                cfg.params.delta_threshold = v.parse().map_err(|_| perr("bad delta"))?
            }
            "enable_versioning" => {
                cfg.params.enable_versioning = v.parse().map_err(|_| perr("bad bool"))?
            }
            "policy_aware_flowlets" => {
                cfg.params.policy_aware_flowlets = v.parse().map_err(|_| perr("bad bool"))?
            }
            "enable_tagging" => {
                cfg.enable_tagging = v.parse().map_err(|_| perr("bad bool"))?
            }
            "allow_short_probe_period" => {
                cfg.allow_short_probe_period = v.parse().map_err(|_| perr("bad bool"))?
            }
            "record_paths" => cfg.record_paths = v.parse().map_err(|_| perr("bad bool"))?,
            "static_utils" => cfg.static_utils = v.parse().map_err(|_| perr("bad bool"))?,
            "load" => cfg.load = v.parse().map_err(|_| perr("bad load"))?,
            "host_gbps" => cfg.host_gbps = v.parse().map_err(|_| perr("bad host_gbps"))?,
            "sample_interval_ns" => {
                cfg.sample_interval_ns = v.parse().map_err(|_| perr("bad interval"))?
            }
            "cwnd_init" => cfg.cwnd_init = v.parse().map_err(|_| perr("bad cwnd"))?,
            "cwnd_cap" => cfg.cwnd_cap = v.parse().map_err(|_| perr("bad cwnd"))?,
            "spain_k" => cfg.spain_k = v.parse().map_err(|_| perr("bad spain_k"))?,
            "workload" => {
                cfg.workload = Some(match v.as_str() {
                    "web-search-like" => SizeCdf::web_search_like(),
                    "cache-like" => SizeCdf::cache_like(),
                    path => SizeCdf::parse(
                        &std::fs::read_to_string(path)
                            .map_err(|e| perr(&format!("workload file: {e}")))?,
                    )
                    .map_err(|e| perr(&format!("workload: {e}")))?,
                })
            }
            // flow = src_host dst_host bytes start_ns
            "flow" => {
                let p: Vec<&str> = v.split_whitespace().collect();
                if p.len() != 4 {
                    return Err(perr("flow = src_host dst_host bytes start_ns"));
                }
                cfg.flows.push(FlowSpec {
                    src_host: p[0].parse().map_err(|_| perr("bad src"))?,
                    dst_host: p[1].parse().map_err(|_| perr("bad dst"))?,
                    bytes: p[2].parse().map_err(|_| perr("bad bytes"))?,
                    start_ns: p[3].parse().map_err(|_| perr("bad start"))?,
                });
            }
            // cbr = src_host dst_host gbps start_ns end_ns [port]
            "cbr" => {
                let p: Vec<&str> = v.split_whitespace().collect();
                if p.len() != 5 && p.len() != 6 {
                    return Err(perr("cbr = src_host dst_host gbps start_ns end_ns [port]"));
                }
                cfg.cbr.push(CbrSpec {
                    src_host: p[0].parse().map_err(|_| perr("bad src"))?,
                    dst_host: p[1].parse().map_err(|_| perr("bad dst"))?,
                    gbps: p[2].parse().map_err(|_| perr("bad gbps"))?,
                    start_ns: p[3].parse().map_err(|_| perr("bad start"))?,
                    end_ns: p[4].parse().map_err(|_| perr("bad end"))?,
                    port: p.get(5).map(|s| s.parse()).transpose().map_err(|_| perr("bad port"))?,
                });
            }
            // fail = A B down_ns [up_ns]
            "fail" => {
                let p: Vec<&str> = v.split_whitespace().collect();
                if p.len() != 3 && p.len() != 4 {
                    return Err(perr("fail = A B down_ns [up_ns]"));
                }
                cfg.failures.push(FailureEvent {
                    a: node(&cfg, ln, p[0])?,
                    b: node(&cfg, ln, p[1])?,
                    down_ns: p[2].parse().map_err(|_| perr("bad time"))?,
                    up_ns: p.get(3).map(|s| s.parse()).transpose().map_err(|_| perr("bad time"))?,
                });
            }
            // util = at_ns FROM TO numer/denom   (applies one direction)
            "util" => {
                let p: Vec<&str> = v.split_whitespace().collect();
                if p.len() != 4 {
                    return Err(perr("util = at_ns FROM TO n/d"));
                }
                let (n, d) = p[3]
                    .split_once('/')
                    .ok_or_else(|| perr("util value must be n/d"))?;
                cfg.util_script.push(UtilSet {
                    at_ns: p[0].parse().map_err(|_| perr("bad time"))?,
                    from: node(&cfg, ln, p[1])?,
                    to: node(&cfg, ln, p[2])?,
                    util: Rat::new(
                        n.parse().map_err(|_| perr("bad numer"))?,
                        d.parse().map_err(|_| perr("bad denom"))?,
                    ),
                });
            }
            // probe_delay = FROM TO extra_ns win_start win_end
            "probe_delay" => {
                let p: Vec<&str> = v.split_whitespace().collect();
                if p.len() != 5 {
                    return Err(perr("probe_delay = FROM TO extra_ns start end"));
                }
                cfg.probe_delays.push(ProbeDelay {
                    from: node(&cfg, ln, p[0])?,
                    to: node(&cfg, ln, p[1])?,
                    extra_ns: p[2].parse().map_err(|_| perr("bad extra"))?,
                    window: (
                        p[3].parse().map_err(|_| perr("bad start"))?,
                        p[4].parse().map_err(|_| perr("bad end"))?,
                    ),
                });
            }
            // watch = SRC DST   (switch names)
            "watch" => {
                let p: Vec<&str> = v.split_whitespace().collect();
                if p.len() != 2 {
                    return Err(perr("watch = SRC DST"));
                }
                cfg.watch = Some((node(&cfg, ln, p[0])?, node(&cfg, ln, p[1])?));
            }
            other => return Err(perr(&format!("unknown key `{other}`"))),
        }
    }
    Ok(cfg)
}

/// The effective policy text the forwarding plane is compiled from.
pub fn effective_policy(cfg: &ScenarioConfig) -> Result<String, ScenarioError> {
    if cfg.enable_tagging {
        return Ok(cfg.policy.clone());
    }
    let ast = parse_policy(&cfg.policy, &cfg.topo.alphabet())
        .map_err(|e| ScenarioError::Invalid(format!("policy: {e}")))?;
    Ok(strip_regex_guards(&ast))
}

#[cfg(test)]
mod tests {
    use super::*;

    #[test]
    fn parse_minimal_scenario() {
        let text = "\
topology {
A B 10 1
}
policy = minimize(path.util)
scheme = contra
seed = 7
duration_ns = 1000000
";
        let cfg = parse_scenario(text).unwrap();
        assert_eq!(cfg.seed, 7);
        assert_eq!(cfg.topo.n_nodes(), 2);
        cfg.validate().unwrap();
    }

    #[test]
    fn probe_period_rule_enforced() {
        let mut t = Topology::new();
        let a = t.add_node("A");
        let b = t.add_node("B");
        t.add_link(a, b, 10.0, 400_000); // RTT 800 us
        let mut cfg = ScenarioConfig::new(t, "minimize(path.util)");
        assert!(matches!(
            cfg.validate(),
            Err(ScenarioError::ProbePeriodTooShort { .. })
        ));
        cfg.allow_short_probe_period = true;
        cfg.validate().unwrap();
    }

    #[test]
    fn strip_regex_guards_picks_finite_branch() {
        let mut t = Topology::new();
        for n in ["A", "B", "D"] {
            t.add_node(n);
        }
        let p = parse_policy(
            "minimize(if .* B A .* then inf else path.util)",
            &t.alphabet(),
        )
        .unwrap();
        assert_eq!(strip_regex_guards(&p), "minimize(path.util)");
        let p2 = parse_policy(
            "minimize(if (A B D) then 0 else if (B .* D) then path.util else inf)",
            &t.alphabet(),
        )
        .unwrap();
        // outer guard: neither branch statically infinite, keep `then`;
        // inner guard: else is inf, keep `then`
        assert_eq!(strip_regex_guards(&p2), "minimize(0)");
    }

    #[test]
    fn config_hash_changes_with_seed() {
        let mut t = Topology::new();
        let a = t.add_node("A");
        let b = t.add_node("B");
        t.add_link(a, b, 10.0, 1_000);
        let mut cfg = ScenarioConfig::new(t, "minimize(path.util)");
        let h1 = cfg.config_hash();
        cfg.seed = 2;
        assert_ne!(h1, cfg.config_hash());
    }
}
