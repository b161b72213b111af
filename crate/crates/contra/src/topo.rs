//! Topologies: interned node IDs, directed capacitated links, attached
//! hosts, a plain-text format, and generators (fat-tree, seeded random,
//! and a WAN backbone modeled on a well-known research network).

use std::collections::{BTreeMap, BTreeSet, VecDeque};
use std::fmt::Write as _;

use rand::seq::SliceRandom;
use rand::{Rng, SeedableRng};
use rand_chacha::ChaCha8Rng;

pub type NodeId = usize;

#[derive(Debug, Clone, Copy, PartialEq)]
pub struct LinkSpec {
    pub capacity_gbps: f64,
    pub latency_ns: u64,
}

#[derive(Debug, Clone, Default)]
pub struct Topology {
    names: Vec<String>,
    index: BTreeMap<String, NodeId>,
    /// Directed adjacency; `add_link` installs both directions.
    adj: Vec<BTreeMap<NodeId, LinkSpec>>,
    hosts: Vec<u32>,
}

#[derive(Debug, Clone, thiserror::Error)]
pub enum TopoError {
    #[error("line {0}: expected `nodeA nodeB capacity_gbps latency_us` or `host <node> <count>`")]
    Malformed(usize),
    #[error("line {0}: unknown node `{1}`")]
    UnknownNode(usize, String),
    #[error("line {0}: bad number `{1}`")]
    BadNumber(usize, String),
    #[error("line {0}: self-loop on `{1}`")]
    SelfLoop(usize, String),
}

impl Topology {
    pub fn new() -> Self {
        Self::default()
    }

    pub fn add_node(&mut self, name: &str) -> NodeId {
        if let Some(&id) = self.index.get(name) {
            return id;
        }
        let id = self.names.len();
        self.names.push(name.to_string());
        self.index.insert(name.to_string(), id);
        self.adj.push(BTreeMap::new());
        self.hosts.push(0);
        id
    }

    pub fn node(&self, name: &str) -> Option<NodeId> {
        self.index.get(name).copied()
    }

    pub fn name(&self, id: NodeId) -> &str {
        &self.names[id]
    }

    pub fn n_nodes(&self) -> usize {
        self.names.len()
    }

    /// Install a bidirectional link.
    pub fn add_link(&mut self, a: NodeId, b: NodeId, capacity_gbps: f64, latency_ns: u64) {
        assert_ne!(a, b, "self-loop");
        let spec = LinkSpec { capacity_gbps, latency_ns };
        self.adj[a].insert(b, spec);
        self.adj[b].insert(a, spec);
    }

    pub fn remove_link(&mut self, a: NodeId, b: NodeId) {
        self.adj[a].remove(&b);
        self.adj[b].remove(&a);
    }

    pub fn set_hosts(&mut self, node: NodeId, count: u32) {
        self.hosts[node] = count;
    }

    pub fn hosts(&self, node: NodeId) -> u32 {
        self.hosts[node]
    }

    /// Nodes with at least one attached host, in id order.
    pub fn host_nodes(&self) -> Vec<NodeId> {
        (0..self.n_nodes()).filter(|&n| self.hosts[n] > 0).collect()
    }

    pub fn total_hosts(&self) -> u32 {
        self.hosts.iter().sum()
    }

    pub fn neighbors(&self, id: NodeId) -> impl Iterator<Item = (NodeId, &LinkSpec)> {
        self.adj[id].iter().map(|(&n, s)| (n, s))
    }

    pub fn link(&self, from: NodeId, to: NodeId) -> Option<&LinkSpec> {
        self.adj[from].get(&to)
    }

    /// All directed links as (from, to, spec), ordered by (from, to).
    pub fn directed_links(&self) -> Vec<(NodeId, NodeId, LinkSpec)> {
        let mut out = Vec::new();
        for a in 0..self.n_nodes() {
            for (&b, &s) in &self.adj[a] {
                out.push((a, b, s));
            }
        }
        out
    }

    pub fn n_undirected_links(&self) -> usize {
        self.directed_links().len() / 2
    }

    /// Node-ID alphabet for policy parsing and regex compilation.
    pub fn alphabet(&self) -> BTreeSet<String> {
        self.names.iter().cloned().collect()
    }

    /// Parse the plain-text format: one `nodeA nodeB capacity_gbps
    /// latency_us` link per line, `host <node> <count>` lines, `#` comments.
    pub fn parse(text: &str) -> Result<Topology, TopoError> {
        let mut t = Topology::new();
        let mut host_lines: Vec<(usize, String, String)> = Vec::new();
        for (ln, raw) in text.lines().enumerate() {
            let ln = ln + 1;
            let line = raw.split('#').next().unwrap_or("").trim();
            if line.is_empty() {
                continue;
            }
            let parts: Vec<&str> = line.split_whitespace().collect();
            if parts[0] == "host" {
                if parts.len() != 3 {
                    return Err(TopoError::Malformed(ln));
                }
                host_lines.push((ln, parts[1].to_string(), parts[2].to_string()));
                continue;
            }
            if parts.len() != 4 {
                return Err(TopoError::Malformed(ln));
            }
            if parts[0] == parts[1] {
                return Err(TopoError::SelfLoop(ln, parts[0].to_string()));
            }
            let cap: f64 = parts[2]
                .parse()
                .map_err(|_| TopoError::BadNumber(ln, parts[2].to_string()))?;
            let lat_us: f64 = parts[3]
                .parse()
                .map_err(|_| TopoError::BadNumber(ln, parts[3].to_string()))?;
            let a = t.add_node(parts[0]);
            let b = t.add_node(parts[1]);
            t.add_link(a, b, cap, (lat_us * 1000.0).round() as u64);
        }
        for (ln, node, count) in host_lines {
            let id = t
                .node(&node)
                .ok_or_else(|| TopoError::UnknownNode(ln, node.clone()))?;
            let c: u32 = count
                .parse()
                .map_err(|_| TopoError::BadNumber(ln, count.clone()))?;
            t.set_hosts(id, c);
        }
        Ok(t)
    }

    pub fn to_text(&self) -> String {
        let mut out = String::new();
        for (a, b, s) in self.directed_links() {
            if a < b {
                writeln!(
                    out,
                    "{} {} {} {}",
                    self.name(a),
                    self.name(b),
                    s.capacity_gbps,
                    s.latency_ns as f64 / 1000.0
                )
                .unwrap();
            }
        }
        for n in self.host_nodes() {
            writeln!(out, "host {} {}", self.name(n), self.hosts[n]).unwrap();
        }
        out
    }

    /// Hop distance from `from` to every node (BFS), `None` if unreachable.
    pub fn hop_distances(&self, from: NodeId) -> Vec<Option<u32>> {
        let mut dist = vec![None; self.n_nodes()];
        dist[from] = Some(0);
        let mut q = VecDeque::from([from]);
        while let Some(n) = q.pop_front() {
            let d = dist[n].unwrap();
            for (m, _) in self.neighbors(n) {
                if dist[m].is_none() {
                    dist[m] = Some(d + 1);
                    q.push_back(m);
                }
            }
        }
        dist
    }

    /// Latency of the minimum-latency path from `from` to every node
    /// (Dijkstra over link latencies), `None` if unreachable.
    pub fn latency_distances(&self, from: NodeId) -> Vec<Option<u64>> {
        let mut dist = vec![None; self.n_nodes()];
        let mut heap = std::collections::BinaryHeap::new();
        dist[from] = Some(0u64);
        heap.push(std::cmp::Reverse((0u64, from)));
        while let Some(std::cmp::Reverse((d, n))) = heap.pop() {
            if dist[n] != Some(d) {
                continue;
            }
            for (m, s) in self.neighbors(n) {
                let nd = d + s.latency_ns;
                if dist[m].is_none_or(|cur| nd < cur) {
                    dist[m] = Some(nd);
                    heap.push(std::cmp::Reverse((nd, m)));
                }
            }
        }
        dist
    }

    /// Maximum round-trip propagation latency over all connected node pairs.
    pub fn max_rtt_ns(&self) -> u64 {
        let mut max = 0u64;
        for n in 0..self.n_nodes() {
            for d in self.latency_distances(n).into_iter().flatten() {
                max = max.max(2 * d);
            }
        }
        max
    }

    pub fn is_connected(&self) -> bool {
        if self.n_nodes() == 0 {
            return true;
        }
        self.hop_distances(0).iter().all(|d| d.is_some())
    }

    /// A k-ary fat-tree: k pods of k/2 edge and k/2 aggregation switches,
    /// (k/2)^2 core switches, `hosts_per_edge` hosts on each edge switch.
    pub fn fattree(k: usize, hosts_per_edge: u32) -> Topology {
        assert!(k >= 2 && k % 2 == 0, "fat-tree arity must be even");
        let h = k / 2;
        let mut t = Topology::new();
        let cores: Vec<NodeId> = (0..h * h).map(|i| t.add_node(&format!("c{i}"))).collect();
        for pod in 0..k {
            let aggs: Vec<NodeId> =
                (0..h).map(|i| t.add_node(&format!("a{pod}_{i}"))).collect();
            let edges: Vec<NodeId> =
                (0..h).map(|i| t.add_node(&format!("e{pod}_{i}"))).collect();
            for &a in &aggs {
                for &e in &edges {
                    t.add_link(a, e, 10.0, 1_000);
                }
            }
            for (i, &a) in aggs.iter().enumerate() {
                for j in 0..h {
                    t.add_link(a, cores[i * h + j], 10.0, 1_000);
                }
            }
            for &e in &edges {
                t.set_hosts(e, hosts_per_edge);
            }
        }
        t
    }

    /// Connected random graph: a random spanning tree plus `extra_links`
    /// additional distinct links, deterministic in `seed`.
    pub fn random(n_nodes: usize, extra_links: usize, seed: u64) -> Topology {
        assert!(n_nodes >= 2);
        let mut rng = ChaCha8Rng::seed_from_u64(seed);
        let mut t = Topology::new();
        let ids: Vec<NodeId> = (0..n_nodes).map(|i| t.add_node(&format!("n{i}"))).collect();
        let mut order = ids.clone();
        order.shuffle(&mut rng);
        for i in 1..order.len() {
            let parent = order[rng.gen_range(0..i)];
            t.add_link(order[i], parent, 10.0, 1_000 + rng.gen_range(0..9) * 500);
        }
        let mut added = 0;
        let mut attempts = 0;
        while added < extra_links && attempts < extra_links * 50 {
            attempts += 1;
            let a = ids[rng.gen_range(0..n_nodes)];
            let b = ids[rng.gen_range(0..n_nodes)];
            if a != b && t.link(a, b).is_none() {
                t.add_link(a, b, 10.0, 1_000 + rng.gen_range(0..9) * 500);
                added += 1;
            }
        }
        t
    }

    /// An 11-node continental WAN backbone with 14 links; capacities 10 Gbps,
    /// latencies proportional to rough geographic distance.
    pub fn wan_backbone() -> Topology {
        let mut t = Topology::new();
        let links: &[(&str, &str, u64)] = &[
            ("SEA", "SUN", 4_000_000),
            ("SEA", "DEN", 5_000_000),
            ("SUN", "LAX", 2_000_000),
            ("SUN", "DEN", 5_000_000),
            ("LAX", "HOU", 7_000_000),
            ("DEN", "KAN", 3_000_000),
            ("KAN", "HOU", 4_000_000),
            ("KAN", "IND", 2_500_000),
            ("HOU", "ATL", 4_000_000),
            ("IND", "CHI", 1_000_000),
            ("IND", "ATL", 3_000_000),
            ("CHI", "NYC", 4_000_000),
            ("ATL", "WDC", 3_000_000),
            ("NYC", "WDC", 1_500_000),
        ];
        for (a, b, lat) in links {
            let a = t.add_node(a);
            let b = t.add_node(b);
            t.add_link(a, b, 10.0, *lat);
        }
        for n in 0..t.n_nodes() {
            t.set_hosts(n, 1);
        }
        t
    }
}

#[cfg(test)]
mod tests {
    use super::*;

    #[test]
    fn parse_round_trips() {
        let text = "A B 10 1\nB C 40 0.5\nhost A 2\nhost C 1\n";
        let t = Topology::parse(text).unwrap();
        assert_eq!(t.n_nodes(), 3);
        assert_eq!(t.n_undirected_links(), 2);
        let ab = t.link(t.node("A").unwrap(), t.node("B").unwrap()).unwrap();
        assert_eq!(ab.capacity_gbps, 10.0);
        assert_eq!(ab.latency_ns, 1_000);
        let bc = t.link(t.node("B").unwrap(), t.node("C").unwrap()).unwrap();
        assert_eq!(bc.latency_ns, 500);
        assert_eq!(t.hosts(t.node("A").unwrap()), 2);
        let t2 = Topology::parse(&t.to_text()).unwrap();
        assert_eq!(t.to_text(), t2.to_text());
    }

    #[test]
    fn parse_rejects_malformed() {
        assert!(matches!(Topology::parse("A B 10"), Err(TopoError::Malformed(1))));
        assert!(matches!(Topology::parse("A A 10 1"), Err(TopoError::SelfLoop(1, _))));
        assert!(matches!(
            Topology::parse("A B ten 1"),
            Err(TopoError::BadNumber(1, _))
        ));
        assert!(matches!(
            Topology::parse("A B 10 1\nhost Z 2"),
            Err(TopoError::UnknownNode(2, _))
        ));
    }

    #[test]
    fn comments_and_blank_lines_ignored() {
        let t = Topology::parse("# header\n\nA B 10 1 # trailing\n").unwrap();
        assert_eq!(t.n_undirected_links(), 1);
    }

    #[test]
    fn fattree_4_has_expected_shape() {
        let t = Topology::fattree(4, 2);
        // 4 cores + 4 pods x (2 agg + 2 edge) = 20 switches
        assert_eq!(t.n_nodes(), 20);
        // per pod: 4 edge-agg + 4 agg-core = 8; x4 pods = 32
        assert_eq!(t.n_undirected_links(), 32);
        assert_eq!(t.total_hosts(), 16);
        assert!(t.is_connected());
        // edge-to-edge across pods is 4 hops
        let e00 = t.node("e0_0").unwrap();
        let e10 = t.node("e1_0").unwrap();
        assert_eq!(t.hop_distances(e00)[e10], Some(4));
    }

    #[test]
    fn random_graph_is_connected_and_deterministic() {
        let a = Topology::random(12, 6, 42);
        let b = Topology::random(12, 6, 42);
        assert!(a.is_connected());
        assert_eq!(a.to_text(), b.to_text());
        let c = Topology::random(12, 6, 43);
        assert_ne!(a.to_text(), c.to_text());
    }

    #[test]
    fn wan_backbone_shape() {
        let t = Topology::wan_backbone();
        assert_eq!(t.n_nodes(), 11);
        assert_eq!(t.n_undirected_links(), 14);
        assert!(t.is_connected());
        assert_eq!(t.total_hosts(), 11);
    }

    #[test]
    fn latency_distances_take_min_latency_path() {
        // A-B 10us, A-C 1us, C-B 2us: best A->B is via C at 3us
        let mut t = Topology::new();
        let a = t.add_node("A");
        let b = t.add_node("B");
        let c = t.add_node("C");
        t.add_link(a, b, 10.0, 10_000);
        t.add_link(a, c, 10.0, 1_000);
        t.add_link(c, b, 10.0, 2_000);
        assert_eq!(t.latency_distances(a)[b], Some(3_000));
        assert_eq!(t.max_rtt_ns(), 6_000);
    }
}
