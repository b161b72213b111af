//! The discrete-event engine: switches, links, hosts, workloads, failure
//! and utilization scripts. Deterministic given the scenario and seed.

use std::cmp::Ordering;
use std::collections::{BTreeMap, BTreeSet, BinaryHeap, VecDeque};
use std::sync::Arc;

use rand::{Rng, SeedableRng};
use rand_chacha::ChaCha8Rng;

use crate::bundle::{compile_scoped, CompiledBundle};
use crate::pg::ProbeScope;
use crate::rank::Rat;
use crate::switch::{
    DropReason, ForwardDecision, Packet, Probe, Switch, INITIAL_TTL, PROBE_WIRE_BYTES,
};
use crate::topo::NodeId;

use super::config::{effective_policy, fnv1a, ScenarioConfig, ScenarioError, Scheme};
use super::link::{LinkDir, HEADER_BYTES, MSS};
use super::metrics::{FlowRecord, MetricsReport};
use super::workload::{poisson_flows, FlowSpec};

/// The policy the latency-oblivious shortest-then-least-utilized baseline
/// is compiled from (probes restricted to the shortest-path DAG).
pub const HULA_POLICY: &str = "minimize((path.len, path.util))";

#[derive(Debug, Clone)]
struct SimPacket {
    pkt: Packet,
    flow: usize,
    seq_no: u64,
    wire: u32,
    payload: u32,
    path: Vec<NodeId>,
    looped: bool,
    /// Source route for the static-multipath baseline: (path, position).
    route: Option<(Vec<NodeId>, usize)>,
}

#[derive(Debug, Clone, Copy, PartialEq, Eq)]
enum FlowKind {
    /// Windowed transport: slow-start-like ramp, halve on drop, out-of-band
    /// acks.
    Window,
    /// Constant bit rate UDP: fire-and-forget.
    Cbr { interval_ns: u64, end_ns: u64 },
}

#[derive(Debug, Clone)]
struct FlowState {
    src_host: usize,
    dst_host: usize,
    src_sw: NodeId,
    dst_sw: NodeId,
    bytes: u64,
    start_ns: u64,
    kind: FlowKind,
    n_pkts: u64,
    next_seq: u64,
    retx: VecDeque<u64>,
    inflight: u32,
    cwnd: u32,
    delivered_payload: u64,
    done_at: Option<u64>,
    host_free: u64,
    /// Flowlet hash identity; flows sharing (src, dst, port) share it.
    fid: u64,
}

#[derive(Debug)]
enum Ev {
    LinkDown(NodeId, NodeId),
    LinkUp(NodeId, NodeId),
    UtilSet(NodeId, NodeId, Rat),
    ProbeArrival { to: NodeId, from: NodeId, probe: Probe },
    PacketArrival { node: NodeId, pkt: Box<SimPacket> },
    ProbeTick,
    FlowStart(usize),
    Ack(usize),
    /// A dropped packet's retransmission timeout fired: the loss becomes
    /// visible to the sender and the sequence number is requeued.
    RetxTimeout(usize, u64),
    CbrSend(usize),
    Sample,
}

impl Ev {
    fn prio(&self) -> u8 {
        match self {
            Ev::LinkDown(..) | Ev::LinkUp(..) | Ev::UtilSet(..) => 0,
            Ev::ProbeArrival { .. } => 1,
            Ev::PacketArrival { .. } => 2,
            Ev::ProbeTick => 3,
            Ev::FlowStart(_) => 4,
            Ev::Ack(_) => 5,
            Ev::RetxTimeout(..) => 5,
            Ev::CbrSend(_) => 6,
            Ev::Sample => 7,
        }
    }
}

struct QueuedEvent {
    time: u64,
    prio: u8,
    seq: u64,
    ev: Ev,
}

impl PartialEq for QueuedEvent {
    fn eq(&self, other: &Self) -> bool {
        (self.time, self.prio, self.seq) == (other.time, other.prio, other.seq)
    }
}
impl Eq for QueuedEvent {}
impl PartialOrd for QueuedEvent {
    fn partial_cmp(&self, other: &Self) -> Option<Ordering> {
        Some(self.cmp(other))
    }
}
impl Ord for QueuedEvent {
    // reversed: BinaryHeap is a max-heap, we pop the earliest event
    fn cmp(&self, other: &Self) -> Ordering {
        (other.time, other.prio, other.seq).cmp(&(self.time, self.prio, self.seq))
    }
}

pub struct Engine {
    pub cfg: ScenarioConfig,
    bundle: Option<Arc<CompiledBundle>>,
    switches: BTreeMap<NodeId, Switch>,
    links: BTreeMap<(NodeId, NodeId), LinkDir>,
    util_override: BTreeMap<(NodeId, NodeId), Rat>,
    heap: BinaryHeap<QueuedEvent>,
    seq: u64,
    now: u64,
    version: u64,
    hosts: Vec<NodeId>,
    flows: Vec<FlowState>,
    flow_meta: Vec<FlowRecord>,
    rng: ChaCha8Rng,
    // baseline state
    dist_cache: BTreeMap<NodeId, Vec<Option<u32>>>,
    lat_cache: BTreeMap<NodeId, Vec<Option<u64>>>,
    spain_paths: BTreeMap<(NodeId, NodeId), Vec<Vec<NodeId>>>,
    spain_rr: BTreeMap<(NodeId, NodeId), usize>,
    spain_flowlets: BTreeMap<(NodeId, NodeId, u64), (usize, u64)>,
    ecmp_flowlets: BTreeMap<(NodeId, NodeId, u64), (NodeId, u64)>,
    // accounting
    report: MetricsReport,
    inflight_bytes: u64,
    failed_since: BTreeMap<(NodeId, NodeId), u64>,
    detected: BTreeSet<(NodeId, NodeId)>,
}

impl Engine {
    pub fn new(cfg: ScenarioConfig) -> Result<Engine, ScenarioError> {
        cfg.validate()?;
        let uses_probes = matches!(cfg.scheme, Scheme::Contra | Scheme::Hula);
        let bundle = if uses_probes {
            let (policy, scope) = match cfg.scheme {
                Scheme::Contra => (effective_policy(&cfg)?, ProbeScope::Full),
                _ => (HULA_POLICY.to_string(), ProbeScope::ShortestPathDag),
            };
            Some(Arc::new(
                compile_scoped(&cfg.topo, &policy, scope)
                    .map_err(|e| ScenarioError::Invalid(format!("compile: {e}")))?,
            ))
        } else {
            None
        };
        let mut switches = BTreeMap::new();
        if let Some(b) = &bundle {
            for n in 0..cfg.topo.n_nodes() {
                switches.insert(n, Switch::new(n, b.clone(), cfg.params));
            }
        }
        // utilization EWMA smoothed over several probe rounds so route
        // choices track sustained load rather than per-round noise
        let tau = 4 * cfg.params.probe_period_ns;
        let mut links = BTreeMap::new();
        for (a, b, spec) in cfg.topo.directed_links() {
            links.insert((a, b), LinkDir::new(spec.capacity_gbps, spec.latency_ns, tau, cfg.buffer_mss));
        }
        let hosts = cfg.host_switches();
        let mut report = MetricsReport {
            scheme: cfg.scheme.as_str().to_string(),
            seed: cfg.seed,
            config_hash: cfg.config_hash(),
            duration_ns: cfg.duration_ns,
            ..MetricsReport::default()
        };

        // workload flows are drawn from a dedicated RNG stream so the data
        // plane's RNG use cannot perturb the arrival pattern
        let mut all_flows: Vec<FlowSpec> = cfg.flows.clone();
        if cfg.load > 0.0 {
            let cdf = cfg.workload.as_ref().unwrap();
            let mut wrng = ChaCha8Rng::seed_from_u64(cfg.seed);
            all_flows.extend(poisson_flows(
                cdf,
                hosts.len(),
                cfg.host_gbps,
                cfg.load,
                cfg.duration_ns,
                &mut wrng,
            ));
        }
        let mut flows = Vec::new();
        for spec in &all_flows {
            let n_pkts = spec.bytes.div_ceil(MSS as u64).max(1);
            flows.push(FlowState {
                src_host: spec.src_host,
                dst_host: spec.dst_host,
                src_sw: hosts[spec.src_host],
                dst_sw: hosts[spec.dst_host],
                bytes: spec.bytes,
                start_ns: spec.start_ns,
                kind: FlowKind::Window,
                n_pkts,
                next_seq: 0,
                retx: VecDeque::new(),
                inflight: 0,
                cwnd: cfg.cwnd_init.max(1),
                delivered_payload: 0,
                done_at: None,
                host_free: spec.start_ns,
                fid: 0,
            });
        }
        for c in &cfg.cbr {
            let wire = (MSS + HEADER_BYTES) as u64;
            let interval_ns = ((wire * 8) as f64 / c.gbps).ceil() as u64;
            flows.push(FlowState {
                src_host: c.src_host,
                dst_host: c.dst_host,
                src_sw: hosts[c.src_host],
                dst_sw: hosts[c.dst_host],
                bytes: 0,
                start_ns: c.start_ns,
                kind: FlowKind::Cbr { interval_ns, end_ns: c.end_ns },
                n_pkts: 0,
                next_seq: 0,
                retx: VecDeque::new(),
                inflight: 0,
                cwnd: 0,
                delivered_payload: 0,
                done_at: None,
                host_free: c.start_ns,
                fid: c.port.map_or(0, |p| {
                    let mut key = Vec::new();
                    key.extend_from_slice(&(c.src_host as u64).to_le_bytes());
                    key.extend_from_slice(&(c.dst_host as u64).to_le_bytes());
                    key.extend_from_slice(&p.to_le_bytes());
                    fnv1a(&key)
                }),
            });
        }
        for (i, f) in flows.iter_mut().enumerate() {
            if f.fid == 0 {
                f.fid = fnv1a(&(i as u64).to_le_bytes());
            }
        }
        report.flows = flows
            .iter()
            .enumerate()
            .map(|(i, f)| FlowRecord {
                id: i,
                src_host: f.src_host,
                dst_host: f.dst_host,
                bytes: f.bytes,
                start_ns: f.start_ns,
                fct_ns: None,
            })
            .collect();

        let rng = ChaCha8Rng::seed_from_u64(cfg.seed ^ 0x9e3779b97f4a7c15);
        let mut eng = Engine {
            cfg,
            bundle,
            switches,
            links,
            util_override: BTreeMap::new(),
            heap: BinaryHeap::new(),
            seq: 0,
            now: 0,
            version: 0,
            hosts,
            flows,
            flow_meta: Vec::new(),
            rng,
            dist_cache: BTreeMap::new(),
            lat_cache: BTreeMap::new(),
            spain_paths: BTreeMap::new(),
            spain_rr: BTreeMap::new(),
            spain_flowlets: BTreeMap::new(),
            ecmp_flowlets: BTreeMap::new(),
            report,
            inflight_bytes: 0,
            failed_since: BTreeMap::new(),
            detected: BTreeSet::new(),
        };
        if eng.cfg.scheme == Scheme::Spain {
            eng.build_spain_paths();
        }
        eng.flow_meta = eng.report.flows.clone();
        Ok(eng)
    }

    pub fn switch(&self, id: NodeId) -> Option<&Switch> {
        self.switches.get(&id)
    }

    pub fn bundle(&self) -> Option<&CompiledBundle> {
        self.bundle.as_deref()
    }

    fn push(&mut self, time: u64, ev: Ev) {
        self.seq += 1;
        let prio = ev.prio();
        self.heap.push(QueuedEvent { time, prio, seq: self.seq, ev });
    }

    pub fn run(&mut self) -> MetricsReport {
        // initial schedule
        for i in 0..self.cfg.util_script.len() {
            let u = self.cfg.util_script[i].clone();
            self.push(u.at_ns, Ev::UtilSet(u.from, u.to, u.util));
        }
        for i in 0..self.cfg.failures.len() {
            let f = self.cfg.failures[i].clone();
            self.push(f.down_ns, Ev::LinkDown(f.a, f.b));
            if let Some(up) = f.up_ns {
                self.push(up, Ev::LinkUp(f.a, f.b));
            }
        }
        if self.bundle.is_some() {
            self.push(0, Ev::ProbeTick);
        }
        self.push(self.cfg.sample_interval_ns, Ev::Sample);
        for i in 0..self.flows.len() {
            self.push(self.flows[i].start_ns, Ev::FlowStart(i));
        }

        while let Some(qe) = self.heap.pop() {
            if qe.time > self.cfg.duration_ns {
                break;
            }
            self.now = qe.time;
            self.handle(qe.ev);
        }
        self.finalize()
    }

    fn handle(&mut self, ev: Ev) {
        match ev {
            Ev::LinkDown(a, b) => {
                self.links.get_mut(&(a, b)).unwrap().failed = true;
                self.links.get_mut(&(b, a)).unwrap().failed = true;
                self.failed_since.insert((a.min(b), a.max(b)), self.now);
            }
            Ev::LinkUp(a, b) => {
                self.links.get_mut(&(a, b)).unwrap().failed = false;
                self.links.get_mut(&(b, a)).unwrap().failed = false;
                self.failed_since.remove(&(a.min(b), a.max(b)));
            }
            Ev::UtilSet(from, to, u) => {
                self.util_override.insert((from, to), u);
            }
            Ev::ProbeTick => self.probe_tick(),
            Ev::ProbeArrival { to, from, probe } => self.probe_arrival(to, from, probe),
            Ev::PacketArrival { node, pkt } => self.packet_arrival(node, *pkt),
            Ev::FlowStart(i) => match self.flows[i].kind {
                FlowKind::Window => self.pump(i),
                FlowKind::Cbr { .. } => self.handle(Ev::CbrSend(i)),
            },
            Ev::CbrSend(i) => self.cbr_send(i),
            Ev::Ack(i) => {
                let f = &mut self.flows[i];
                f.inflight = f.inflight.saturating_sub(1);
                f.cwnd = (f.cwnd + 1).min(self.cfg.cwnd_cap);
                self.pump(i);
            }
            Ev::RetxTimeout(i, seq) => {
                self.retx_timeout(i, seq);
            }
            Ev::Sample => {
                self.report.throughput.push((self.now, self.report.bytes_delivered));
                self.check_failure_detections();
                let next = self.now + self.cfg.sample_interval_ns;
                if next <= self.cfg.duration_ns {
                    self.push(next, Ev::Sample);
                }
            }
        }
    }

    // ---- probes ----

    fn probe_tick(&mut self) {
        // sample the watched best next hop first: "selection at the tick",
        // after same-instant probe arrivals were processed
        if let Some((src, dst)) = self.cfg.watch {
            let nhop = self.switches.get(&src).and_then(|s| s.best_nhop(dst));
            self.report.watch_samples.push((self.now, nhop));
        }
        self.check_failure_detections();
        self.version += 1;
        let ids: Vec<NodeId> = self.switches.keys().copied().collect();
        for id in ids {
            let outs = self.switches.get_mut(&id).unwrap().init_probe(self.version);
            for (nbr, probe) in outs {
                self.send_probe(id, nbr, probe);
            }
        }
        let next = self.now + self.cfg.params.probe_period_ns;
        if next <= self.cfg.duration_ns {
            self.push(next, Ev::ProbeTick);
        }
    }

    fn send_probe(&mut self, from: NodeId, to: NodeId, probe: Probe) {
        let link = self.links.get_mut(&(from, to)).expect("probe on missing link");
        let Some(mut arrival) = link.send_probe(self.now, PROBE_WIRE_BYTES as u32) else {
            return;
        };
        for d in &self.cfg.probe_delays {
            if d.from == from && d.to == to && self.now >= d.window.0 && self.now < d.window.1 {
                arrival += d.extra_ns;
            }
        }
        self.report.probe_bytes += PROBE_WIRE_BYTES;
        self.push(arrival, Ev::ProbeArrival { to, from, probe });
    }

    fn probe_arrival(&mut self, to: NodeId, from: NodeId, probe: Probe) {
        if self.links[&(from, to)].failed {
            return;
        }
        // metric pickup: the receiver's egress utilization toward the sender
        // (the direction traffic would flow)
        let util = self.util_for(to, from);
        let lat = self.links[&(to, from)].latency_ns;
        let outs = {
            let sw = self.switches.get_mut(&to).unwrap();
            sw.process_probe(from, &probe, util, lat, self.now)
        };
        for (nbr, p) in outs {
            self.send_probe(to, nbr, p);
        }
    }

    fn util_for(&mut self, from: NodeId, to: NodeId) -> Rat {
        if let Some(u) = self.util_override.get(&(from, to)) {
            return *u;
        }
        if self.cfg.static_utils {
            return Rat::from_integer(0);
        }
        let now = self.now;
        self.links.get_mut(&(from, to)).unwrap().util(now)
    }

    fn check_failure_detections(&mut self) {
        if self.switches.is_empty() {
            return;
        }
        let horizon = self.cfg.params.k_failure * self.cfg.params.probe_period_ns;
        if self.now <= horizon {
            return;
        }
        let pairs: Vec<((NodeId, NodeId), u64)> =
            self.failed_since.iter().map(|(&k, &v)| (k, v)).collect();
        for ((a, b), tf) in pairs {
            for (sw, nbr) in [(a, b), (b, a)] {
                if self.detected.contains(&(sw, nbr)) {
                    continue;
                }
                let now = self.now;
                if self.switches.get_mut(&sw).unwrap().check_link_failed(nbr, now) {
                    self.detected.insert((sw, nbr));
                    self.report.failure_detections.push((sw, nbr, tf, now));
                }
            }
        }
    }

    // ---- data plane ----

    fn inject(&mut self, flow: usize, seq_no: u64, payload: u32, at: u64) {
        let f = &self.flows[flow];
        let wire = payload + HEADER_BYTES;
        let pkt = SimPacket {
            pkt: Packet {
                dst: f.dst_sw,
                tag: 0,
                pid: 0,
                fid: f.fid,
                pkt_hash: fnv1a(&((flow as u64) << 24 ^ seq_no).to_le_bytes()),
                ttl: INITIAL_TTL,
                size: wire,
                sel_mv: None,
                from_host: true,
            },
            flow,
            seq_no,
            wire,
            payload,
            path: Vec::new(),
            looped: false,
            route: None,
        };
        self.report.packets_injected += 1;
        self.report.bytes_injected += wire as u64;
        self.inflight_bytes += wire as u64;
        let node = f.src_sw;
        self.push(at + self.cfg.host_latency_ns, Ev::PacketArrival { node, pkt: Box::new(pkt) });
    }

    fn pump(&mut self, i: usize) {
        loop {
            let f = &mut self.flows[i];
            if f.done_at.is_some() || f.inflight >= f.cwnd {
                break;
            }
            let seq = if let Some(s) = f.retx.pop_front() {
                s
            } else if f.next_seq < f.n_pkts {
                let s = f.next_seq;
                f.next_seq += 1;
                s
            } else {
                break;
            };
            let payload = if seq == f.n_pkts - 1 {
                (f.bytes - (f.n_pkts - 1) * MSS as u64) as u32
            } else {
                MSS
            };
            let t = f.host_free.max(self.now);
            let ser = ((payload + HEADER_BYTES) as f64 * 8.0 / self.cfg.host_gbps).ceil() as u64;
            f.host_free = t + ser;
            f.inflight += 1;
            self.inject(i, seq, payload, t);
        }
    }

    fn cbr_send(&mut self, i: usize) {
        let FlowKind::Cbr { interval_ns, end_ns } = self.flows[i].kind else {
            return;
        };
        if self.now >= end_ns {
            return;
        }
        let seq = self.flows[i].next_seq;
        self.flows[i].next_seq += 1;
        self.inject(i, seq, MSS, self.now);
        let next = self.now + interval_ns;
        if next < end_ns && next <= self.cfg.duration_ns {
            self.push(next, Ev::CbrSend(i));
        }
    }

    fn packet_arrival(&mut self, node: NodeId, mut pkt: SimPacket) {
        if pkt.path.contains(&node) {
            pkt.looped = true;
        }
        pkt.path.push(node);
        let decision = self.route(node, &mut pkt);
        match decision {
            ForwardDecision::Deliver => self.deliver(pkt),
            ForwardDecision::Forward { nhop } => {
                let now = self.now;
                let wire = pkt.wire;
                match self.links.get_mut(&(node, nhop)).unwrap().enqueue(now, wire) {
                    Some(arrival) => {
                        self.push(arrival, Ev::PacketArrival { node: nhop, pkt: Box::new(pkt) })
                    }
                    None => self.on_drop(pkt, DropReason::Unroutable, true),
                }
            }
            ForwardDecision::Drop { reason } => self.on_drop(pkt, reason, false),
        }
    }

    fn route(&mut self, node: NodeId, pkt: &mut SimPacket) -> ForwardDecision {
        match self.cfg.scheme {
            Scheme::Contra | Scheme::Hula => {
                let now = self.now;
                self.switches.get_mut(&node).unwrap().forward_packet(&mut pkt.pkt, now)
            }
            Scheme::Ecmp => self.route_ecmp(node, pkt),
            Scheme::Sp => self.route_sp(node, pkt),
            Scheme::Spain => self.route_spain(node, pkt),
        }
    }

    fn dists_to(&mut self, dst: NodeId) -> &Vec<Option<u32>> {
        let topo = &self.cfg.topo;
        self.dist_cache.entry(dst).or_insert_with(|| topo.hop_distances(dst))
    }

    fn shortest_nhops(&mut self, node: NodeId, dst: NodeId) -> Vec<NodeId> {
        let dist = self.dists_to(dst).clone();
        let Some(dn) = dist[node] else { return Vec::new() };
        self.cfg
            .topo
            .neighbors(node)
            .map(|(n, _)| n)
            .filter(|&n| dist[n] == Some(dn - 1) && !self.links[&(node, n)].failed)
            .collect()
    }

    /// ECMP: per-flowlet random choice among equal-cost shortest next hops,
    /// oblivious to load.
    fn route_ecmp(&mut self, node: NodeId, pkt: &mut SimPacket) -> ForwardDecision {
        let dst = pkt.pkt.dst;
        if node == dst {
            return ForwardDecision::Deliver;
        }
        let key = (node, dst, pkt.pkt.fid);
        if let Some(&(nhop, t)) = self.ecmp_flowlets.get(&key) {
            if self.now.saturating_sub(t) <= self.cfg.params.flowlet_timeout_ns
                && !self.links[&(node, nhop)].failed
            {
                self.ecmp_flowlets.insert(key, (nhop, self.now));
                return ForwardDecision::Forward { nhop };
            }
        }
        let nhops = self.shortest_nhops(node, dst);
        if nhops.is_empty() {
            return ForwardDecision::Drop { reason: DropReason::Unroutable };
        }
        let nhop = nhops[self.rng.gen_range(0..nhops.len())];
        self.ecmp_flowlets.insert(key, (nhop, self.now));
        ForwardDecision::Forward { nhop }
    }

    fn route_sp(&mut self, node: NodeId, pkt: &mut SimPacket) -> ForwardDecision {
        let dst = pkt.pkt.dst;
        if node == dst {
            return ForwardDecision::Deliver;
        }
        match self.shortest_nhops(node, dst).into_iter().min() {
            Some(nhop) => ForwardDecision::Forward { nhop },
            None => ForwardDecision::Drop { reason: DropReason::Unroutable },
        }
    }

    /// Precompute up to `spain_k` edge-disjoint shortest paths per ordered
    /// switch pair that carries traffic.
    fn build_spain_paths(&mut self) {
        let mut pairs = BTreeSet::new();
        for f in &self.flows {
            if f.src_sw != f.dst_sw {
                pairs.insert((f.src_sw, f.dst_sw));
            }
        }
        for (src, dst) in pairs {
            let mut removed: BTreeSet<(NodeId, NodeId)> = BTreeSet::new();
            let mut paths = Vec::new();
            for _ in 0..self.cfg.spain_k {
                let Some(path) = bfs_path(&self.cfg.topo, src, dst, &removed) else {
                    break;
                };
                for w in path.windows(2) {
                    removed.insert((w[0], w[1]));
                    removed.insert((w[1], w[0]));
                }
                paths.push(path);
            }
            if !paths.is_empty() {
                self.spain_paths.insert((src, dst), paths);
            }
        }
    }

    fn route_spain(&mut self, node: NodeId, pkt: &mut SimPacket) -> ForwardDecision {
        let dst = pkt.pkt.dst;
        if node == dst {
            return ForwardDecision::Deliver;
        }
        if pkt.route.is_none() {
            let key = (node, dst);
            let Some(paths) = self.spain_paths.get(&key) else {
                return ForwardDecision::Drop { reason: DropReason::Unroutable };
            };
            let fkey = (node, dst, pkt.pkt.fid);
            let idx = match self.spain_flowlets.get(&fkey) {
                Some(&(idx, t))
                    if self.now.saturating_sub(t) <= self.cfg.params.flowlet_timeout_ns =>
                {
                    idx
                }
                _ => {
                    // round-robin assignment of new flowlets across the set
                    let rr = self.spain_rr.entry(key).or_insert(0);
                    let idx = *rr % paths.len();
                    *rr += 1;
                    idx
                }
            };
            self.spain_flowlets.insert(fkey, (idx, self.now));
            pkt.route = Some((paths[idx].clone(), 0));
        }
        let (path, pos) = pkt.route.as_mut().unwrap();
        debug_assert_eq!(path[*pos], node);
        let nhop = path[*pos + 1];
        *pos += 1;
        if self.links[&(node, nhop)].failed {
            return ForwardDecision::Drop { reason: DropReason::Unroutable };
        }
        ForwardDecision::Forward { nhop }
    }

    fn deliver(&mut self, pkt: SimPacket) {
        self.report.packets_delivered += 1;
        self.report.bytes_delivered += pkt.wire as u64;
        self.inflight_bytes -= pkt.wire as u64;
        if pkt.looped {
            self.report.looped_packets += 1;
        }
        if self.cfg.record_paths {
            self.report.delivered_paths.push(pkt.path.clone());
        }
        let i = pkt.flow;
        let (dst_sw, src_sw) = (self.flows[i].dst_sw, self.flows[i].src_sw);
        let f = &mut self.flows[i];
        f.delivered_payload += pkt.payload as u64;
        if f.kind == FlowKind::Window {
            if f.done_at.is_none() && f.delivered_payload >= f.bytes {
                let fct = self.now + self.cfg.host_latency_ns - f.start_ns;
                f.done_at = Some(self.now);
                self.flow_meta[i].fct_ns = Some(fct);
            }
            let ack_at = self.now + self.ack_latency(dst_sw, src_sw) + 500;
            self.push(ack_at, Ev::Ack(i));
        }
    }

    fn ack_latency(&mut self, from: NodeId, to: NodeId) -> u64 {
        let topo = &self.cfg.topo;
        let lat = self
            .lat_cache
            .entry(from)
            .or_insert_with(|| topo.latency_distances(from));
        lat[to].unwrap_or(0)
    }

    fn on_drop(&mut self, pkt: SimPacket, reason: DropReason, queue: bool) {
        self.report.bytes_dropped += pkt.wire as u64;
        self.inflight_bytes -= pkt.wire as u64;
        if queue {
            self.report.queue_drops += 1;
        } else {
            match reason {
                DropReason::TtlExpired => self.report.ttl_drops += 1,
                DropReason::Unroutable => self.report.unroutable_drops += 1,
            }
        }
        if pkt.looped {
            self.report.looped_packets += 1;
        }
        if self.cfg.record_paths {
            self.report.dropped_paths.push(pkt.path.clone());
        }
        let i = pkt.flow;
        let f = &mut self.flows[i];
        if f.kind == FlowKind::Window && f.done_at.is_none() {
            // the loss stays invisible (and the window slot occupied) until
            // the retransmission timeout fires
            let at = self.now + self.cfg.rto_ns;
            self.push(at, Ev::RetxTimeout(i, pkt.seq_no));
        }
    }

    fn retx_timeout(&mut self, i: usize, seq: u64) {
        let f = &mut self.flows[i];
        if f.kind != FlowKind::Window || f.done_at.is_some() {
            return;
        }
        f.retx.push_back(seq);
        f.inflight = f.inflight.saturating_sub(1);
        f.cwnd = (f.cwnd / 2).max(1);
        self.pump(i);
    }

    fn finalize(&mut self) -> MetricsReport {
        for sw in self.switches.values() {
            self.report.probes_sent += sw.counters.probes_sent;
            self.report.probes_discarded_stale += sw.counters.probes_discarded_stale;
        }
        self.report.peak_queue_bytes =
            self.links.values().map(|l| l.peak_queue_bytes).max().unwrap_or(0);
        self.report.bytes_in_flight = self.inflight_bytes;
        debug_assert_eq!(
            self.report.bytes_injected,
            self.report.bytes_delivered + self.report.bytes_dropped + self.report.bytes_in_flight,
            "byte conservation"
        );
        self.report.flows = self.flow_meta.clone();
        self.report.clone()
    }
}

fn bfs_path(
    topo: &crate::topo::Topology,
    src: NodeId,
    dst: NodeId,
    removed: &BTreeSet<(NodeId, NodeId)>,
) -> Option<Vec<NodeId>> {
    let mut prev: Vec<Option<NodeId>> = vec![None; topo.n_nodes()];
    let mut seen = vec![false; topo.n_nodes()];
    seen[src] = true;
    let mut q = VecDeque::from([src]);
    while let Some(u) = q.pop_front() {
        if u == dst {
            let mut path = vec![dst];
            let mut cur = dst;
            while let Some(p) = prev[cur] {
                path.push(p);
                cur = p;
            }
            path.reverse();
            return Some(path);
        }
        for (v, _) in topo.neighbors(u) {
            if !seen[v] && !removed.contains(&(u, v)) {
                seen[v] = true;
                prev[v] = Some(u);
                q.push_back(v);
            }
        }
    }
    None
}

/// Run one scenario end to end.
pub fn run_simulation(cfg: ScenarioConfig) -> Result<MetricsReport, ScenarioError> {
    let mut eng = Engine::new(cfg)?;
    Ok(eng.run())
}
