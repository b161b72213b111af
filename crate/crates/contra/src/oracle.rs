//! Ground-truth oracle: enumerate simple paths by brute force, test policy
//! regexes by direct recursive matching, and rank paths with the policy
//! evaluator over a static utilization assignment. Used to validate the
//! compiled product graph and the converged protocol state.

use std::collections::BTreeMap;

use crate::automata::regex_matches;
use crate::policy::{evaluate_rank, EvalFlags, PathAttributes, PolicyAst};
use crate::rank::{Rat, RankValue};
use crate::topo::{NodeId, Topology};

/// Static per-directed-link utilization in [0,1]; missing links are 0.
pub type UtilMap = BTreeMap<(NodeId, NodeId), Rat>;

#[derive(Debug, Clone, PartialEq, Eq)]
pub struct RankedPath {
    /// Node sequence from source to destination, inclusive.
    pub nodes: Vec<NodeId>,
    pub rank: RankValue,
    pub attrs: PathAttributes,
}

/// Attributes of a concrete path under a static utilization assignment.
pub fn path_attrs(topo: &Topology, utils: &UtilMap, nodes: &[NodeId]) -> PathAttributes {
    let mut attrs = PathAttributes::empty();
    for w in nodes.windows(2) {
        let (a, b) = (w[0], w[1]);
        let spec = topo.link(a, b).expect("path uses a missing link");
        attrs.len += 1;
        attrs.lat += Rat::from_integer(spec.latency_ns as i64);
        let u = utils.get(&(a, b)).copied().unwrap_or_else(|| Rat::from_integer(0));
        attrs.util = attrs.util.max(u);
    }
    attrs
}

/// All policy-compliant (finite-rank) simple paths from `src` to `dst`,
/// sorted by rank, ties broken by the node sequence.
pub fn compliant_paths(
    topo: &Topology,
    policy: &PolicyAst,
    utils: &UtilMap,
    src: NodeId,
    dst: NodeId,
) -> Vec<RankedPath> {
    let mut out = Vec::new();
    let mut visited = vec![false; topo.n_nodes()];
    let mut stack = vec![src];
    visited[src] = true;
    dfs(topo, policy, utils, dst, &mut stack, &mut visited, &mut out);
    out.sort_by(|a, b| a.rank.cmp(&b.rank).then_with(|| a.nodes.cmp(&b.nodes)));
    out
}

fn dfs(
    topo: &Topology,
    policy: &PolicyAst,
    utils: &UtilMap,
    dst: NodeId,
    stack: &mut Vec<NodeId>,
    visited: &mut Vec<bool>,
    out: &mut Vec<RankedPath>,
) {
    let here = *stack.last().unwrap();
    if here == dst {
        if let Some(rp) = rank_path(topo, policy, utils, stack) {
            out.push(rp);
        }
        return;
    }
    let nexts: Vec<NodeId> = topo.neighbors(here).map(|(n, _)| n).collect();
    for n in nexts {
        if !visited[n] {
            visited[n] = true;
            stack.push(n);
            dfs(topo, policy, utils, dst, stack, visited, out);
            stack.pop();
            visited[n] = false;
        }
    }
}

/// Rank a single concrete path; `None` if the policy assigns it infinity or
/// evaluation fails (e.g. subtraction of infinity).
pub fn rank_path(
    topo: &Topology,
    policy: &PolicyAst,
    utils: &UtilMap,
    nodes: &[NodeId],
) -> Option<RankedPath> {
    let word: Vec<&str> = nodes.iter().map(|&n| topo.name(n)).collect();
    let verdicts: Vec<bool> =
        policy.regexes.iter().map(|r| regex_matches(r, &word)).collect();
    let attrs = path_attrs(topo, utils, nodes);
    let mut flags = EvalFlags::default();
    let rank = evaluate_rank(policy, &attrs, &verdicts, &mut flags).ok()?;
    if rank.is_inf() {
        return None;
    }
    Some(RankedPath { nodes: nodes.to_vec(), rank, attrs })
}

/// The best compliant path, if any.
pub fn best_path(
    topo: &Topology,
    policy: &PolicyAst,
    utils: &UtilMap,
    src: NodeId,
    dst: NodeId,
) -> Option<RankedPath> {
    compliant_paths(topo, policy, utils, src, dst).into_iter().next()
}

#[cfg(test)]
mod tests {
    use super::*;
    use crate::policy::parse_policy;

    /// The running four-node example: a diamond with a cross link.
    fn diamond() -> (Topology, UtilMap) {
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
        let mut u = UtilMap::new();
        let mut set = |x: NodeId, y: NodeId, n: i64| {
            u.insert((x, y), Rat::new(n, 10));
            u.insert((y, x), Rat::new(n, 10));
        };
        set(b, d, 3);
        set(c, d, 1);
        set(b, c, 2);
        set(a, b, 5);
        set(a, c, 4);
        (t, u)
    }

    #[test]
    fn min_util_best_paths_in_diamond() {
        let (t, u) = diamond();
        let p = parse_policy("minimize(path.util)", &t.alphabet()).unwrap();
        let (a, b, c, d) = (0, 1, 2, 3);

        // from A: util 0.4 (A-C-D tied with A-C-B-D) beats A-B-D and
        // A-B-C-D at 0.5
        let paths = compliant_paths(&t, &p, &u, a, d);
        assert_eq!(paths[0].rank, RankValue::scalar(crate::rank::Ext::Finite(Rat::new(4, 10))));
        assert_eq!(paths[0].nodes[1], c, "best paths leave A via C");
        assert!(paths.iter().any(|rp| rp.nodes == vec![a, c, d]));

        // from B: B-C-D at util 0.2 beats direct B-D (0.3)
        let best = best_path(&t, &p, &u, b, d).unwrap();
        assert_eq!(best.nodes, vec![b, c, d]);
        assert_eq!(best.rank, RankValue::scalar(crate::rank::Ext::Finite(Rat::new(2, 10))));

        // from C: direct C-D at 0.1
        let best = best_path(&t, &p, &u, c, d).unwrap();
        assert_eq!(best.nodes, vec![c, d]);
    }

    #[test]
    fn all_simple_paths_enumerated() {
        let (t, u) = diamond();
        let p = parse_policy("minimize(path.len)", &t.alphabet()).unwrap();
        // A to D: A-B-D, A-C-D, A-B-C-D, A-C-B-D
        let paths = compliant_paths(&t, &p, &u, 0, 3);
        assert_eq!(paths.len(), 4);
        assert_eq!(paths[0].attrs.len, 2);
        assert_eq!(paths[1].attrs.len, 2);
        assert_eq!(paths[2].attrs.len, 3);
    }

    #[test]
    fn waypoint_filters_noncompliant() {
        let (t, u) = diamond();
        let p = parse_policy("minimize(if .* C .* then path.len else inf)", &t.alphabet())
            .unwrap();
        let paths = compliant_paths(&t, &p, &u, 0, 3);
        // only paths through C survive: A-C-D, A-B-C-D, A-C-B-D
        assert_eq!(paths.len(), 3);
        for rp in &paths {
            assert!(rp.nodes.contains(&2));
        }
        assert_eq!(paths[0].nodes, vec![0, 2, 3]);
    }

    #[test]
    fn unreachable_when_all_paths_infinite() {
        let (t, u) = diamond();
        // no path from A avoids both B and C
        let p = parse_policy(
            "minimize(if .* (B + C) .* then inf else path.len)",
            &t.alphabet(),
        )
        .unwrap();
        assert!(best_path(&t, &p, &u, 0, 3).is_none());
    }

    #[test]
    fn latency_accumulates() {
        let (t, u) = diamond();
        let p = parse_policy("minimize(path.lat)", &t.alphabet()).unwrap();
        let best = best_path(&t, &p, &u, 0, 3).unwrap();
        assert_eq!(best.attrs.lat, Rat::from_integer(2_000));
    }
}
