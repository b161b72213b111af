//! The product graph: topology locations crossed with policy-automaton
//! states. Probes flood the product graph outward from the destination;
//! traffic follows product-graph edges in the opposite direction, so every
//! forwarding decision stays policy-compliant by construction.

use std::collections::{BTreeMap, BTreeSet, VecDeque};

use crate::automata::{compile_regex, reverse_regex, Dfa};
use crate::policy::{BoolTest, PolicyAst, RankExpr};
use crate::topo::{NodeId, Topology};

/// A virtual node: a physical location plus one state per policy automaton.
#[derive(Debug, Clone, PartialEq, Eq)]
pub struct PgNode {
    pub loc: NodeId,
    pub states: Vec<usize>,
}

/// Which product-graph edges probes may use.
#[derive(Debug, Clone, Copy, PartialEq, Eq)]
pub enum ProbeScope {
    /// Every topology link.
    Full,
    /// Only edges along the shortest-path DAG toward the destination
    /// (probes only travel strictly away from it).
    ShortestPathDag,
}

/// The pruned per-destination product graph. Edges are stored in probe
/// direction: `succs[n]` are the nodes probes are multicast to from `n`,
/// and `preds[n]` are the traffic next hops available at `n`.
#[derive(Debug, Clone)]
pub struct ProductGraph {
    pub dst: NodeId,
    /// Kept virtual nodes in BFS discovery order; index 0 is the sender.
    pub nodes: Vec<PgNode>,
    pub sender: usize,
    pub succs: Vec<Vec<usize>>,
    pub preds: Vec<Vec<usize>>,
    /// Per node, per regex: does a path originating here satisfy the regex?
    pub verdicts: Vec<Vec<bool>>,
    /// BFS depth from the sender within the kept subgraph.
    pub depth: Vec<u32>,
    /// Dense per-location tag of each node.
    pub tag: Vec<u32>,
}

/// Compile the reversed policy regexes over the topology alphabet. Probes
/// consume node IDs destination-first, so the automata recognize reversed
/// paths.
pub fn compile_policy_dfas(policy: &PolicyAst, alphabet: &BTreeSet<String>) -> Vec<Dfa> {
    policy
        .regexes
        .iter()
        .map(|r| compile_regex(&reverse_regex(r), alphabet))
        .collect()
}

/// Build the product graph for one destination. Returns `None` when the
/// policy forbids every path to `dst` (invalid destination).
pub fn build_product_graph(
    topo: &Topology,
    policy: &PolicyAst,
    dfas: &[Dfa],
    dst: NodeId,
    scope: ProbeScope,
) -> Option<ProductGraph> {
    let hop = match scope {
        ProbeScope::Full => Vec::new(),
        ProbeScope::ShortestPathDag => topo.hop_distances(dst),
    };
    let edge_ok = |from: NodeId, to: NodeId| match scope {
        ProbeScope::Full => true,
        ProbeScope::ShortestPathDag => match (hop[from], hop[to]) {
            (Some(df), Some(dt)) => dt == df + 1,
            _ => false,
        },
    };

    // reachability BFS from the probe sender; probes arriving back at the
    // destination's location are dropped, so no other node at `dst` exists
    let sender_states: Vec<usize> =
        dfas.iter().map(|d| d.step_id(d.start, topo.name(dst))).collect();
    let mut nodes: Vec<PgNode> = vec![PgNode { loc: dst, states: sender_states }];
    let mut index: BTreeMap<(NodeId, Vec<usize>), usize> =
        BTreeMap::from([((nodes[0].loc, nodes[0].states.clone()), 0)]);
    let mut succs: Vec<Vec<usize>> = vec![Vec::new()];
    let mut q = VecDeque::from([0usize]);
    while let Some(i) = q.pop_front() {
        let loc = nodes[i].loc;
        let states = nodes[i].states.clone();
        let nbrs: Vec<NodeId> = topo.neighbors(loc).map(|(n, _)| n).collect();
        for nbr in nbrs {
            if nbr == dst || !edge_ok(loc, nbr) {
                continue;
            }
            let nstates: Vec<usize> = states
                .iter()
                .zip(dfas)
                .map(|(&s, d)| d.step_id(s, topo.name(nbr)))
                .collect();
            let key = (nbr, nstates.clone());
            let j = *index.entry(key).or_insert_with(|| {
                nodes.push(PgNode { loc: nbr, states: nstates });
                succs.push(Vec::new());
                q.push_back(nodes.len() - 1);
                nodes.len() - 1
            });
            succs[i].push(j);
        }
    }

    let verdicts: Vec<Vec<bool>> = nodes
        .iter()
        .map(|n| n.states.iter().zip(dfas).map(|(&s, d)| d.accepting[s]).collect())
        .collect();

    // co-reachability pruning: keep nodes from which a probe can still reach
    // some virtual node where traffic could originate with a finite rank
    let finite: Vec<bool> =
        verdicts.iter().map(|v| possibly_finite(&policy.root, v)).collect();
    let mut keep = finite.clone();
    let mut preds_all: Vec<Vec<usize>> = vec![Vec::new(); nodes.len()];
    for (i, ss) in succs.iter().enumerate() {
        for &j in ss {
            preds_all[j].push(i);
        }
    }
    let mut q: VecDeque<usize> =
        (0..nodes.len()).filter(|&i| keep[i]).collect();
    while let Some(i) = q.pop_front() {
        for &p in &preds_all[i] {
            if !keep[p] {
                keep[p] = true;
                q.push_back(p);
            }
        }
    }
    if !keep[0] {
        return None;
    }

    // reindex kept nodes (BFS discovery order is preserved; sender stays 0)
    let mut remap = vec![usize::MAX; nodes.len()];
    let mut knodes = Vec::new();
    for (i, n) in nodes.iter().enumerate() {
        if keep[i] {
            remap[i] = knodes.len();
            knodes.push(n.clone());
        }
    }
    let n = knodes.len();
    let mut ksuccs = vec![Vec::new(); n];
    let mut kpreds = vec![Vec::new(); n];
    for (i, ss) in succs.iter().enumerate() {
        if !keep[i] {
            continue;
        }
        for &j in ss {
            if keep[j] {
                ksuccs[remap[i]].push(remap[j]);
                kpreds[remap[j]].push(remap[i]);
            }
        }
    }
    let kverdicts: Vec<Vec<bool>> = (0..nodes.len())
        .filter(|&i| keep[i])
        .map(|i| verdicts[i].clone())
        .collect();

    // BFS depth over the kept subgraph
    let mut depth = vec![u32::MAX; n];
    depth[0] = 0;
    let mut q = VecDeque::from([0usize]);
    while let Some(i) = q.pop_front() {
        for &j in &ksuccs[i] {
            if depth[j] == u32::MAX {
                depth[j] = depth[i] + 1;
                q.push_back(j);
            }
        }
    }

    let tag = assign_tags(&knodes, &ksuccs, &kpreds, &kverdicts, &depth, dfas);

    Some(ProductGraph {
        dst,
        nodes: knodes,
        sender: 0,
        succs: ksuccs,
        preds: kpreds,
        verdicts: kverdicts,
        depth,
        tag,
    })
}

/// Dense per-location tags. Nodes at the same location are ordered by BFS
/// depth from the sender, ties broken by automaton-state vectors with dead
/// (garbage) states sorting first. Fully redundant duplicates (identical
/// verdicts, probe predecessors, and probe successors) share one tag.
fn assign_tags(
    nodes: &[PgNode],
    succs: &[Vec<usize>],
    preds: &[Vec<usize>],
    verdicts: &[Vec<bool>],
    depth: &[u32],
    dfas: &[Dfa],
) -> Vec<u32> {
    let states_key = |i: usize| -> Vec<Option<usize>> {
        nodes[i]
            .states
            .iter()
            .zip(dfas)
            .map(|(&s, d)| if d.dead[s] { None } else { Some(s) })
            .collect()
    };
    let mut by_loc: BTreeMap<NodeId, Vec<usize>> = BTreeMap::new();
    for (i, n) in nodes.iter().enumerate() {
        by_loc.entry(n.loc).or_default().push(i);
    }
    let mut tag = vec![0u32; nodes.len()];
    for (_, members) in by_loc {
        // one-shot merge of behaviorally identical duplicates
        type MergeKey = (Vec<bool>, Vec<usize>, Vec<usize>);
        let mut groups: BTreeMap<MergeKey, Vec<usize>> = BTreeMap::new();
        for &i in &members {
            let mut ss = succs[i].clone();
            let mut ps = preds[i].clone();
            ss.sort_unstable();
            ps.sort_unstable();
            groups.entry((verdicts[i].clone(), ps, ss)).or_default().push(i);
        }
        let mut ordered: Vec<Vec<usize>> = groups.into_values().collect();
        ordered.sort_by_key(|g| {
            let d = g.iter().map(|&i| depth[i]).min().unwrap();
            let k = g.iter().map(|&i| states_key(i)).min().unwrap();
            (d, k)
        });
        for (t, g) in ordered.into_iter().enumerate() {
            for i in g {
                tag[i] = t as u32;
            }
        }
    }
    tag
}

/// Can the rank's leading component be finite for some utilization and some
/// resolution of dynamic comparisons, given fixed regex verdicts?
pub fn possibly_finite(e: &RankExpr, verdicts: &[bool]) -> bool {
    match e {
        RankExpr::Const(_) | RankExpr::Attr(_) => true,
        RankExpr::Inf => false,
        RankExpr::Bin(_, l, r) => possibly_finite(l, verdicts) && possibly_finite(r, verdicts),
        RankExpr::If(test, t, el) => match static_test(test, verdicts) {
            Some(true) => possibly_finite(t, verdicts),
            Some(false) => possibly_finite(el, verdicts),
            None => possibly_finite(t, verdicts) || possibly_finite(el, verdicts),
        },
        RankExpr::Tuple(cs) => {
            cs.first().map(|c| possibly_finite(c, verdicts)).unwrap_or(true)
        }
    }
}

/// Evaluate a boolean test if it is static (regex-only); `None` if it
/// depends on a dynamic comparison.
fn static_test(t: &BoolTest, verdicts: &[bool]) -> Option<bool> {
    match t {
        BoolTest::Regex(i, _) => Some(verdicts[*i]),
        BoolTest::Cmp { .. } => None,
        BoolTest::Not(x) => static_test(x, verdicts).map(|b| !b),
        BoolTest::Or(a, b) => match (static_test(a, verdicts), static_test(b, verdicts)) {
            (Some(true), _) | (_, Some(true)) => Some(true),
            (Some(false), Some(false)) => Some(false),
            _ => None,
        },
        BoolTest::And(a, b) => match (static_test(a, verdicts), static_test(b, verdicts)) {
            (Some(false), _) | (_, Some(false)) => Some(false),
            (Some(true), Some(true)) => Some(true),
            _ => None,
        },
    }
}

impl ProductGraph {
    /// Virtual nodes at one location, in tag order.
    pub fn nodes_at(&self, loc: NodeId) -> Vec<usize> {
        let mut v: Vec<usize> =
            (0..self.nodes.len()).filter(|&i| self.nodes[i].loc == loc).collect();
        v.sort_by_key(|&i| self.tag[i]);
        v
    }

    /// Per virtual node, the deduplicated verdict vectors of every node
    /// reachable from it in probe direction (itself included): the verdict
    /// assignments upstream decision points may apply to metrics advertised
    /// through this node. Used to order competing probes soundly even where
    /// the local verdicts collapse the comparison.
    pub fn upstream_verdicts(&self) -> Vec<Vec<Vec<bool>>> {
        let n = self.nodes.len();
        let mut acc: Vec<std::collections::BTreeSet<Vec<bool>>> = (0..n)
            .map(|i| {
                let mut s = std::collections::BTreeSet::new();
                s.insert(self.verdicts[i].clone());
                s
            })
            .collect();
        // fixpoint over the (possibly cyclic) successor relation
        let mut changed = true;
        while changed {
            changed = false;
            for i in 0..n {
                for si in 0..self.succs[i].len() {
                    let s = self.succs[i][si];
                    let add: Vec<Vec<bool>> = acc[s].iter().cloned().collect();
                    for v in add {
                        if acc[i].insert(v) {
                            changed = true;
                        }
                    }
                }
            }
        }
        acc.into_iter().map(|s| s.into_iter().collect()).collect()
    }

    pub fn max_tags_per_location(&self) -> u32 {
        (0..self.nodes.len())
            .map(|i| self.tag[i] + 1)
            .max()
            .unwrap_or(0)
    }

    /// All physically-simple policy-compliant paths from `src` to the
    /// destination, each with the verdicts at its originating virtual node.
    pub fn simple_paths_from(&self, src: NodeId) -> Vec<(Vec<NodeId>, Vec<bool>)> {
        let mut out = Vec::new();
        let mut locs = vec![self.dst];
        let mut node_stack = vec![self.sender];
        self.dfs_paths(src, &mut node_stack, &mut locs, &mut out);
        out.sort();
        out.dedup();
        out
    }

    fn dfs_paths(
        &self,
        src: NodeId,
        node_stack: &mut Vec<usize>,
        locs: &mut Vec<NodeId>,
        out: &mut Vec<(Vec<NodeId>, Vec<bool>)>,
    ) {
        let cur = *node_stack.last().unwrap();
        if self.nodes[cur].loc == src && node_stack.len() > 1 {
            let path: Vec<NodeId> = locs.iter().rev().copied().collect();
            out.push((path, self.verdicts[cur].clone()));
        }
        for &nxt in &self.succs[cur] {
            let loc = self.nodes[nxt].loc;
            if locs.contains(&loc) {
                continue;
            }
            locs.push(loc);
            node_stack.push(nxt);
            self.dfs_paths(src, node_stack, locs, out);
            node_stack.pop();
            locs.pop();
        }
    }
}
