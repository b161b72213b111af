//! The compile pipeline: policy text + topology in, per-switch protocol
//! configuration out. The bundle carries the analysis report, the
//! decomposition, the per-destination product graphs, and the static tables
//! each switch needs at runtime (tag tables, ingress maps, probe multicast
//! lists, probe-sender flags).

use std::collections::BTreeMap;
use std::fmt::Write as _;

use crate::analysis::{self, AnalysisReport, Decomposition, DecompositionMode};
use crate::automata::Dfa;
use crate::pg::{build_product_graph, compile_policy_dfas, ProbeScope, ProductGraph};
use crate::policy::{parse_policy, ParseError, PolicyAst};
use crate::topo::{NodeId, Topology};

/// Static per-destination configuration of one switch.
#[derive(Debug, Clone, Default)]
pub struct DstConfig {
    /// Regex verdicts per local tag (paths originating here with this tag).
    pub accepts: Vec<Vec<bool>>,
    /// Probe ingress resolution: (neighbor the probe came from, probe tag)
    /// -> local tag.
    pub ingress: BTreeMap<(NodeId, u32), u32>,
    /// Probe multicast lists per local tag (neighbors hosting product-graph
    /// successors).
    pub out_nbrs: Vec<Vec<NodeId>>,
    /// Set when this switch is the destination (probe-sending state).
    pub sender_tag: Option<u32>,
    /// Per local tag, the verdict vectors achievable at decision points
    /// upstream of this node; competing probes for one entry are ordered
    /// under all of these assignments at once.
    pub upstream_verdicts: Vec<Vec<Vec<bool>>>,
}

impl DstConfig {
    pub fn n_tags(&self) -> usize {
        self.accepts.len()
    }
}

#[derive(Debug, Clone, Default)]
pub struct SwitchConfig {
    pub per_dst: BTreeMap<NodeId, DstConfig>,
}

#[derive(Debug, Clone)]
pub struct CompiledBundle {
    pub policy_text: String,
    pub policy: PolicyAst,
    pub analysis: AnalysisReport,
    pub decomposition: Decomposition,
    pub dfas: Vec<Dfa>,
    pub destinations: Vec<NodeId>,
    pub pgs: BTreeMap<NodeId, ProductGraph>,
    pub switches: BTreeMap<NodeId, SwitchConfig>,
    pub tag_bits: u32,
}

#[derive(Debug, thiserror::Error)]
pub enum CompileError {
    #[error("policy parse error: {0}")]
    Parse(#[from] ParseError),
    #[error("policy rejected: {0}")]
    Decompose(#[from] analysis::DecomposeError),
    #[error("policy admits no valid destination on this topology")]
    NoValidDestination,
}

/// Compile a policy against a topology. Destinations are the host-attached
/// switches when the topology declares hosts, otherwise every policy-valid
/// switch.
pub fn compile(topo: &Topology, policy_text: &str) -> Result<CompiledBundle, CompileError> {
    compile_scoped(topo, policy_text, ProbeScope::Full)
}

pub fn compile_scoped(
    topo: &Topology,
    policy_text: &str,
    scope: ProbeScope,
) -> Result<CompiledBundle, CompileError> {
    let alphabet = topo.alphabet();
    let policy = parse_policy(policy_text, &alphabet)?;
    let analysis = analysis::analyze(&policy);
    let decomposition = analysis::decompose(&policy, &analysis)?;
    let dfas = compile_policy_dfas(&policy, &alphabet);

    let candidates: Vec<NodeId> = {
        let hosted = topo.host_nodes();
        if hosted.is_empty() {
            (0..topo.n_nodes()).collect()
        } else {
            hosted
        }
    };

    let mut pgs = BTreeMap::new();
    let mut destinations = Vec::new();
    for dst in candidates {
        if let Some(pg) = build_product_graph(topo, &policy, &dfas, dst, scope) {
            destinations.push(dst);
            pgs.insert(dst, pg);
        }
    }
    if destinations.is_empty() {
        return Err(CompileError::NoValidDestination);
    }

    let mut switches: BTreeMap<NodeId, SwitchConfig> = BTreeMap::new();
    for n in 0..topo.n_nodes() {
        switches.insert(n, SwitchConfig::default());
    }
    let mut tag_bits = 0u32;
    for (&dst, pg) in &pgs {
        tag_bits = tag_bits.max(bits_for(pg.max_tags_per_location()));
        let upstream = pg.upstream_verdicts();
        for (i, node) in pg.nodes.iter().enumerate() {
            let cfg = switches
                .get_mut(&node.loc)
                .unwrap()
                .per_dst
                .entry(dst)
                .or_default();
            let t = pg.tag[i] as usize;
            if cfg.accepts.len() <= t {
                cfg.accepts.resize(t + 1, Vec::new());
                cfg.out_nbrs.resize(t + 1, Vec::new());
                cfg.upstream_verdicts.resize(t + 1, Vec::new());
            }
            cfg.accepts[t] = pg.verdicts[i].clone();
            cfg.upstream_verdicts[t] = upstream[i].clone();
            for &s in &pg.succs[i] {
                let nbr = pg.nodes[s].loc;
                if !cfg.out_nbrs[t].contains(&nbr) {
                    cfg.out_nbrs[t].push(nbr);
                }
            }
            if i == pg.sender {
                cfg.sender_tag = Some(pg.tag[i]);
            }
        }
        for (i, node) in pg.nodes.iter().enumerate() {
            for &s in &pg.succs[i] {
                let scfg = switches
                    .get_mut(&pg.nodes[s].loc)
                    .unwrap()
                    .per_dst
                    .entry(dst)
                    .or_default();
                scfg.ingress.insert((node.loc, pg.tag[i]), pg.tag[s]);
            }
        }
    }
    for cfg in switches.values_mut() {
        for dc in cfg.per_dst.values_mut() {
            for nbrs in &mut dc.out_nbrs {
                nbrs.sort_unstable();
            }
        }
    }

    Ok(CompiledBundle {
        policy_text: policy_text.to_string(),
        policy,
        analysis,
        decomposition,
        dfas,
        destinations,
        pgs,
        switches,
        tag_bits,
    })
}

fn bits_for(n_tags: u32) -> u32 {
    if n_tags <= 1 {
        0
    } else {
        32 - (n_tags - 1).leading_zeros()
    }
}

/// Approximate worst-case dynamic state of one switch in bytes: one
/// forwarding entry per (destination, local tag, pid) — metric vector (8
/// bytes per carried attribute), next hop (4), next tag (4), version (4)
/// and key (12) — plus the static ingress map at 12 bytes per entry.
pub fn switch_state_bytes(bundle: &CompiledBundle, node: NodeId) -> usize {
    let cfg = match bundle.switches.get(&node) {
        Some(c) => c,
        None => return 0,
    };
    let n_pids = bundle.decomposition.subpolicies.len().max(1);
    let mv_bytes = 8 * bundle.decomposition.carried_attrs.len().max(1);
    let frontier = match bundle.decomposition.mode {
        DecompositionMode::Exact => 1,
        DecompositionMode::Pareto => 4,
    };
    let entry = 12 + frontier * (mv_bytes + 12);
    let mut total = 0usize;
    for dc in cfg.per_dst.values() {
        total += dc.n_tags() * n_pids * entry;
        total += dc.ingress.len() * 12;
    }
    total
}

pub fn max_switch_state_bytes(bundle: &CompiledBundle) -> usize {
    bundle
        .switches
        .keys()
        .map(|&n| switch_state_bytes(bundle, n))
        .max()
        .unwrap_or(0)
}

/// Versioned plain-text rendering of the bundle, stable across runs so
/// golden tests can diff it.
pub fn render(bundle: &CompiledBundle, topo: &Topology) -> String {
    let mut out = String::new();
    writeln!(out, "contra-bundle v1").unwrap();
    writeln!(out, "policy = {}", bundle.policy_text.trim()).unwrap();
    writeln!(out, "tag_bits = {}", bundle.tag_bits).unwrap();
    write!(out, "{}", bundle.analysis).unwrap();
    write!(out, "{}", bundle.decomposition).unwrap();
    let names: Vec<&str> =
        bundle.destinations.iter().map(|&d| topo.name(d)).collect();
    writeln!(out, "destinations = {}", names.join(",")).unwrap();
    for (&dst, pg) in &bundle.pgs {
        writeln!(out, "[pg {}]", topo.name(dst)).unwrap();
        for (i, n) in pg.nodes.iter().enumerate() {
            let states: Vec<String> = n
                .states
                .iter()
                .zip(&bundle.dfas)
                .map(|(&s, d)| if d.dead[s] { "-".into() } else { s.to_string() })
                .collect();
            let verdicts: Vec<&str> = bundle.pgs[&dst].verdicts[i]
                .iter()
                .map(|&v| if v { "1" } else { "0" })
                .collect();
            let succs: Vec<String> = pg.succs[i]
                .iter()
                .map(|&s| format!("{}{}", topo.name(pg.nodes[s].loc), pg.tag[s]))
                .collect();
            writeln!(
                out,
                "node {}{} states=({}) accepts=({}) -> {}",
                topo.name(n.loc),
                pg.tag[i],
                states.join(","),
                verdicts.join(","),
                succs.join(" ")
            )
            .unwrap();
        }
    }
    for (&sw, cfg) in &bundle.switches {
        if cfg.per_dst.is_empty() {
            continue;
        }
        writeln!(out, "[switch {}]", topo.name(sw)).unwrap();
        for (&dst, dc) in &cfg.per_dst {
            for t in 0..dc.n_tags() {
                let nbrs: Vec<&str> =
                    dc.out_nbrs[t].iter().map(|&n| topo.name(n)).collect();
                let sender = if dc.sender_tag == Some(t as u32) { " sender" } else { "" };
                writeln!(
                    out,
                    "dst {} tag {} out=({}){}",
                    topo.name(dst),
                    t,
                    nbrs.join(","),
                    sender
                )
                .unwrap();
            }
            for ((from, ftag), ltag) in &dc.ingress {
                writeln!(
                    out,
                    "dst {} ingress {}{} -> {}",
                    topo.name(dst),
                    topo.name(*from),
                    ftag,
                    ltag
                )
                .unwrap();
            }
        }
        writeln!(out, "state_bytes = {}", switch_state_bytes(bundle, sw)).unwrap();
    }
    out
}

#[cfg(test)]
mod tests {
    use super::*;

    fn diamond() -> Topology {
        let mut t = Topology::new();
        let a = t.add_node("A");
        let b = t.add_node("B");
        let c = t.add_node("C");
        let d = t.add_node("D");
        t.add_link(a, b, 10.0, 1_000);
        t.add_link(a, c, 10.0, 1_000);
        t.add_link(b, c, 10.0, 1_000);
        t.add_link(b, d, 10.0, 1_000);
        t.add_link(c, d, 10.0, 1_000);
        t
    }

    const RUNNING_EXAMPLE: &str =
        "minimize(if (A B D) then 0 else if (B .* D) then path.util else inf)";

    #[test]
    fn running_example_switch_b_has_two_tags() {
        let t = diamond();
        let bundle = compile(&t, RUNNING_EXAMPLE).unwrap();
        let d = t.node("D").unwrap();
        let b = t.node("B").unwrap();
        let bc = &bundle.switches[&b].per_dst[&d];
        assert_eq!(bc.n_tags(), 2);
        // tag 0 (the direct-from-D node) multicasts onward to A (and C)
        assert!(bc.out_nbrs[0].contains(&t.node("A").unwrap()));
        // probes from D arrive with D's sender tag and resolve to tag 0
        let dtag = bundle.switches[&d].per_dst[&d].sender_tag.unwrap();
        assert_eq!(bc.ingress[&(d, dtag)], 0);
        // probes from C resolve to tag 1
        let c = t.node("C").unwrap();
        assert_eq!(bc.ingress[&(c, 0)], 1);
        assert_eq!(bundle.tag_bits, 1);
    }

    #[test]
    fn plain_metric_policy_has_zero_tag_bits() {
        let t = Topology::fattree(4, 2);
        let bundle = compile(&t, "minimize(path.util)").unwrap();
        assert_eq!(bundle.tag_bits, 0);
        assert_eq!(bundle.decomposition.subpolicies.len(), 1);
        // hosts declared: destinations are the 8 edge switches
        assert_eq!(bundle.destinations.len(), 8);
    }

    #[test]
    fn congestion_aware_policy_gets_two_pids() {
        let t = diamond();
        let bundle = compile(
            &t,
            "minimize(if path.util < .8 then (1, 0, path.util) else (2, path.len, path.util))",
        )
        .unwrap();
        assert_eq!(bundle.decomposition.subpolicies.len(), 2);
        assert_eq!(bundle.decomposition.mode, DecompositionMode::Exact);
    }

    #[test]
    fn non_monotone_policy_is_rejected() {
        let t = diamond();
        let err = compile(&t, "minimize(10 - path.len)");
        assert!(matches!(err, Err(CompileError::Decompose(_))));
    }

    #[test]
    fn no_valid_destination_is_an_error() {
        let t = diamond();
        let err = compile(&t, "minimize(if .* then inf else inf)");
        assert!(matches!(err, Err(CompileError::NoValidDestination)));
    }

    #[test]
    fn render_is_stable_and_versioned() {
        let t = diamond();
        let b1 = compile(&t, RUNNING_EXAMPLE).unwrap();
        let b2 = compile(&t, RUNNING_EXAMPLE).unwrap();
        let r1 = render(&b1, &t);
        assert!(r1.starts_with("contra-bundle v1\n"));
        assert_eq!(r1, render(&b2, &t));
        assert!(r1.contains("dst D tag 1"));
    }

    #[test]
    fn state_size_is_small_on_desk_topologies() {
        let t = Topology::fattree(4, 2);
        let bundle = compile(&t, "minimize(path.util)").unwrap();
        assert!(max_switch_state_bytes(&bundle) < 70_000);
    }
}
