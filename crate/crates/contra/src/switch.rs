//! The per-switch runtime synthesized by the compiler: probe origination
//! and processing with version gates, forwarding-table maintenance, tagged
//! packet forwarding, policy-aware flowlet pinning, probe-based failure
//! expiration, and lazy loop breaking.

use std::collections::BTreeMap;
use std::fmt::Write as _;
use std::sync::Arc;

use crate::analysis::DecompositionMode;
use crate::bundle::CompiledBundle;
use crate::policy::{eval_expr, evaluate_rank, EvalFlags, PathAttributes};
use crate::rank::{Rat, RankValue};
use crate::topo::NodeId;

pub type Tag = u32;
pub type Pid = u8;

/// A protocol probe. `origin` is the destination the probe advertises.
#[derive(Debug, Clone, PartialEq, Eq)]
pub struct Probe {
    pub origin: NodeId,
    pub pid: Pid,
    pub tag: Tag,
    pub mv: PathAttributes,
    pub version: u64,
}

/// Probe wire size used for overhead accounting: origin (4) + pid/tag (4) +
/// version (4) + three metric slots (4 each).
pub const PROBE_WIRE_BYTES: u64 = 24;

/// Initial packet TTL; a backstop behind flowlet flushing.
pub const INITIAL_TTL: u8 = 64;

#[derive(Debug, Clone)]
pub struct Packet {
    pub dst: NodeId,
    pub tag: Tag,
    pub pid: Pid,
    /// Flow identifier (hash of the five-tuple).
    pub fid: u64,
    /// Loop-detection hash: five-tuple plus payload sequence identifier.
    pub pkt_hash: u64,
    pub ttl: u8,
    pub size: u32,
    /// Pareto-mode path selector: the metric vector the upstream element
    /// advertised, used to stay on the selected frontier element downstream.
    pub sel_mv: Option<PathAttributes>,
    /// True until the first switch stamps tag/pid from its BestT.
    pub from_host: bool,
}

/// One stored path option: `mv` ranks it locally; `adv_mv` is the metric
/// the upstream neighbor advertised (pre-extension), matched against packet
/// selectors in Pareto mode.
#[derive(Debug, Clone, PartialEq, Eq)]
pub struct FwdElem {
    pub mv: PathAttributes,
    pub adv_mv: PathAttributes,
    pub ntag: Tag,
    pub nhop: NodeId,
}

#[derive(Debug, Clone, Default)]
pub struct FwdVal {
    pub version: u64,
    pub elems: Vec<FwdElem>,
}

pub const PARETO_CAP: usize = 4;

#[derive(Debug, Clone, Copy, PartialEq, Eq)]
struct FlowletKey {
    dst: NodeId,
    tag: Tag,
    pid: Pid,
    fid: u64,
}

#[derive(Debug, Clone)]
struct FlowletEntry {
    nhop: NodeId,
    ntag: Tag,
    sel_mv: Option<PathAttributes>,
    t: u64,
}

#[derive(Debug, Clone, Copy)]
struct LoopEntry {
    maxttl: u8,
    minttl: u8,
    t: u64,
}

#[derive(Debug, Clone, Copy)]
pub struct SwitchParams {
    pub probe_period_ns: u64,
    pub flowlet_timeout_ns: u64,
    pub k_failure: u64,
    pub delta_threshold: u8,
    pub enable_versioning: bool,
    pub policy_aware_flowlets: bool,
}

impl Default for SwitchParams {
    fn default() -> Self {
        SwitchParams {
            probe_period_ns: 256_000,
            flowlet_timeout_ns: 200_000,
            k_failure: 3,
            delta_threshold: 4,
            enable_versioning: true,
            policy_aware_flowlets: true,
        }
    }
}

#[derive(Debug, Clone, Copy, Default, PartialEq, Eq)]
pub struct Counters {
    pub probes_sent: u64,
    pub probes_received: u64,
    pub probes_discarded_stale: u64,
    pub probes_unresolved: u64,
    pub flowlet_flushes: u64,
    pub failure_detections: u64,
}

#[derive(Debug, Clone, PartialEq, Eq)]
pub enum ForwardDecision {
    Deliver,
    Forward { nhop: NodeId },
    Drop { reason: DropReason },
}

#[derive(Debug, Clone, Copy, PartialEq, Eq)]
pub enum DropReason {
    Unroutable,
    TtlExpired,
}

pub struct Switch {
    pub id: NodeId,
    pub params: SwitchParams,
    bundle: Arc<CompiledBundle>,
    fwd: BTreeMap<(NodeId, Tag, Pid), FwdVal>,
    best: BTreeMap<NodeId, (Tag, Pid)>,
    flowlets: BTreeMap<(NodeId, Tag, Pid, u64), FlowletEntry>,
    loops: BTreeMap<u64, LoopEntry>,
    last_probe: BTreeMap<NodeId, u64>,
    failed_marked: BTreeMap<NodeId, bool>,
    pub counters: Counters,
}

/// The per-pid comparison rank used when competing probes update one entry:
/// the branch rank evaluated under every verdict assignment upstream
/// decision points may apply, concatenated in canonical order. Verdict
/// stability (checked at decomposition time) makes this profile's
/// lexicographic order agree with every upstream decision.
fn f_rank(
    bundle: &CompiledBundle,
    pid: Pid,
    mv: &PathAttributes,
    upstream: &[Vec<bool>],
) -> RankValue {
    let branch = &bundle.decomposition.subpolicies[pid as usize].branch_rank;
    let arity = branch.arity();
    let empty: [Vec<bool>; 1] = [Vec::new()];
    let assignments: &[Vec<bool>] = if upstream.is_empty() { &empty } else { upstream };
    let mut out = Vec::with_capacity(arity * assignments.len());
    for verdicts in assignments {
        let mut flags = EvalFlags::default();
        let r = eval_expr(branch, mv, verdicts, &mut flags)
            .unwrap_or_else(|_| RankValue::inf(arity))
            .pad_to(arity);
        out.extend(r.0);
    }
    RankValue(out)
}

/// The full recombined policy rank used to pick the best entry per
/// destination.
fn s_rank(bundle: &CompiledBundle, mv: &PathAttributes, verdicts: &[bool]) -> RankValue {
    let mut flags = EvalFlags::default();
    evaluate_rank(&bundle.policy, mv, verdicts, &mut flags)
        .unwrap_or_else(|_| RankValue::inf(bundle.policy.arity))
}

/// Extend a probe metric vector over the inbound traffic-direction link:
/// utilization is a max-accumulator, length a hop counter, latency a sum.
pub fn update_metric_vector(mv: &PathAttributes, link_util: Rat, link_lat_ns: u64) -> PathAttributes {
    PathAttributes {
        util: mv.util.max(link_util),
        len: mv.len + 1,
        lat: mv.lat + Rat::from_integer(link_lat_ns as i64),
    }
}

/// Componentwise dominance over the carried attributes.
fn dominates(bundle: &CompiledBundle, a: &PathAttributes, b: &PathAttributes) -> bool {
    use crate::policy::AttrName;
    bundle.decomposition.carried_attrs.iter().all(|attr| match attr {
        AttrName::Util => a.util <= b.util,
        AttrName::Len => a.len <= b.len,
        AttrName::Lat => a.lat <= b.lat,
    })
}

fn attrs_sort_key(a: &PathAttributes) -> (Rat, u64, Rat) {
    (a.util, a.len, a.lat)
}

impl Switch {
    pub fn new(id: NodeId, bundle: Arc<CompiledBundle>, params: SwitchParams) -> Self {
        Switch {
            id,
            params,
            bundle,
            fwd: BTreeMap::new(),
            best: BTreeMap::new(),
            flowlets: BTreeMap::new(),
            loops: BTreeMap::new(),
            last_probe: BTreeMap::new(),
            failed_marked: BTreeMap::new(),
            counters: Counters::default(),
        }
    }

    pub fn bundle(&self) -> &CompiledBundle {
        &self.bundle
    }

    /// Originate one probe round for this switch as a destination. Returns
    /// (neighbor, probe) multicast pairs; empty if this switch is not a
    /// valid (probe-sending) destination.
    pub fn init_probe(&mut self, version: u64) -> Vec<(NodeId, Probe)> {
        let Some(dc) = self.bundle.switches[&self.id].per_dst.get(&self.id) else {
            return Vec::new();
        };
        let Some(tag) = dc.sender_tag else {
            return Vec::new();
        };
        let mut out = Vec::new();
        let n_pids = self.bundle.decomposition.subpolicies.len();
        for pid in 0..n_pids {
            for &nbr in &dc.out_nbrs[tag as usize] {
                out.push((
                    nbr,
                    Probe {
                        origin: self.id,
                        pid: pid as Pid,
                        tag,
                        mv: PathAttributes::empty(),
                        version,
                    },
                ));
            }
        }
        self.counters.probes_sent += out.len() as u64;
        out
    }

    /// Process a probe that arrived from `from`. `link_util` and
    /// `link_lat_ns` describe this switch's egress link toward `from` (the
    /// traffic direction the probe advertises). Returns probes to multicast.
    pub fn process_probe(
        &mut self,
        from: NodeId,
        probe: &Probe,
        link_util: Rat,
        link_lat_ns: u64,
        now: u64,
    ) -> Vec<(NodeId, Probe)> {
        self.counters.probes_received += 1;
        self.note_probe_on_port(from, now);

        let Some(dc) = self.bundle.switches[&self.id].per_dst.get(&probe.origin) else {
            self.counters.probes_unresolved += 1;
            return Vec::new();
        };
        let Some(&local_tag) = dc.ingress.get(&(from, probe.tag)) else {
            self.counters.probes_unresolved += 1;
            return Vec::new();
        };

        let adv_mv = probe.mv.clone();
        let mv = update_metric_vector(&probe.mv, link_util, link_lat_ns);
        let upstream = dc.upstream_verdicts.get(local_tag as usize).cloned().unwrap_or_default();
        let key = (probe.origin, local_tag, probe.pid);
        let pareto = self.bundle.decomposition.mode == DecompositionMode::Pareto;

        let val = self.fwd.entry(key).or_default();
        if self.params.enable_versioning {
            if probe.version < val.version {
                self.counters.probes_discarded_stale += 1;
                return Vec::new();
            }
            if probe.version > val.version {
                // strictly newer round: stale metrics are discarded even if
                // they looked better
                val.version = probe.version;
                val.elems.clear();
            }
        }

        let elem = FwdElem { mv: mv.clone(), adv_mv, ntag: probe.tag, nhop: from };
        let installed = if pareto {
            insert_pareto(&self.bundle, val, elem)
        } else {
            let new_f = f_rank(&self.bundle, probe.pid, &mv, &upstream);
            match val.elems.first() {
                None => {
                    val.elems.push(elem);
                    true
                }
                Some(cur) if cur.nhop == from && cur.ntag == probe.tag => {
                    // the advertising neighbor is this entry's successor:
                    // its latest advertisement is authoritative for the
                    // stored metric, even when it worsened
                    val.elems[0] = elem;
                    true
                }
                Some(cur) => {
                    let cur_f = f_rank(&self.bundle, probe.pid, &cur.mv, &upstream);
                    // probes carry hop count and latency alongside the policy
                    // metrics; rank ties prefer the shorter path so equally
                    // ranked detours cannot displace a direct route
                    let new_key = (new_f, mv.len, mv.lat);
                    let cur_key = (cur_f, cur.mv.len, cur.mv.lat);
                    if new_key < cur_key {
                        val.elems[0] = elem;
                        true
                    } else {
                        false
                    }
                }
            }
        };
        if !installed {
            return Vec::new();
        }

        let out_nbrs = dc.out_nbrs[local_tag as usize].clone();
        self.recompute_best(probe.origin);
        let fwd_probe = Probe {
            origin: probe.origin,
            pid: probe.pid,
            tag: local_tag,
            mv,
            version: probe.version,
        };
        // Split horizon on the product graph: never send a probe straight
        // back into the product-graph node it just left. Such a walk revisits
        // that node, so no loop-free compliant path uses it, while the echo
        // would advertise a route through this switch back to its own
        // successor. (This predicate is static per (dst, tag, neighbor) and
        // would be a compile-time table on a real target.)
        let origin = probe.origin;
        let echoes_back = |n: NodeId| {
            n == from
                && self
                    .bundle
                    .switches
                    .get(&n)
                    .and_then(|s| s.per_dst.get(&origin))
                    .and_then(|d| d.ingress.get(&(self.id, local_tag)))
                    == Some(&probe.tag)
        };
        let out: Vec<(NodeId, Probe)> = out_nbrs
            .into_iter()
            .filter(|&n| !echoes_back(n))
            .map(|n| (n, fwd_probe.clone()))
            .collect();
        self.counters.probes_sent += out.len() as u64;
        out
    }

    fn note_probe_on_port(&mut self, from: NodeId, now: u64) {
        self.last_probe.insert(from, now);
        self.failed_marked.insert(from, false);
    }

    /// A link is considered failed when no probe has arrived on it for more
    /// than `k` probe periods.
    pub fn check_link_failed(&mut self, nbr: NodeId, now: u64) -> bool {
        let last = self.last_probe.get(&nbr).copied().unwrap_or(0);
        let failed = now.saturating_sub(last) > self.params.k_failure * self.params.probe_period_ns;
        if failed && !self.failed_marked.get(&nbr).copied().unwrap_or(false) {
            self.failed_marked.insert(nbr, true);
            self.counters.failure_detections += 1;
        }
        failed
    }

    fn recompute_best(&mut self, dst: NodeId) {
        let mut best: Option<((RankValue, u64, Rat), (Tag, Pid))> = None;
        let Some(dc) = self.bundle.switches[&self.id].per_dst.get(&dst) else {
            return;
        };
        for (&(d, tag, pid), val) in self.fwd.range((dst, 0, 0)..=(dst, Tag::MAX, Pid::MAX)) {
            debug_assert_eq!(d, dst);
            let verdicts = &dc.accepts[tag as usize];
            for e in &val.elems {
                let s = s_rank(&self.bundle, &e.mv, verdicts);
                if s.is_inf() {
                    continue;
                }
                // rank ties prefer shorter, lower-latency paths, then the
                // smaller key, so the selection is deterministic
                let k = (s, e.mv.len, e.mv.lat);
                let better = match &best {
                    None => true,
                    Some((bk, bkey)) => k < *bk || (k == *bk && (tag, pid) < *bkey),
                };
                if better {
                    best = Some((k, (tag, pid)));
                }
            }
        }
        match best {
            Some((_, k)) => {
                self.best.insert(dst, k);
            }
            None => {
                self.best.remove(&dst);
            }
        }
    }

    /// The (tag, pid) this switch's own traffic to `dst` currently uses.
    pub fn best_key(&self, dst: NodeId) -> Option<(Tag, Pid)> {
        self.best.get(&dst).copied()
    }

    /// The full best-path metric this switch currently advertises for its
    /// own traffic to `dst` (for tests and golden dumps).
    pub fn best_rank(&self, dst: NodeId) -> Option<RankValue> {
        let (tag, pid) = self.best_key(dst)?;
        let dc = self.bundle.switches[&self.id].per_dst.get(&dst)?;
        let verdicts = &dc.accepts[tag as usize];
        let val = self.fwd.get(&(dst, tag, pid))?;
        val.elems
            .iter()
            .map(|e| s_rank(&self.bundle, &e.mv, verdicts))
            .min()
    }

    pub fn fwd_entry(&self, dst: NodeId, tag: Tag, pid: Pid) -> Option<&FwdVal> {
        self.fwd.get(&(dst, tag, pid))
    }

    /// The next hop this switch's own new traffic to `dst` would take right
    /// now (liveness ignored); used by tests and the watch probe.
    pub fn best_nhop(&self, dst: NodeId) -> Option<NodeId> {
        let (tag, pid) = self.best_key(dst)?;
        let dc = self.bundle.switches[&self.id].per_dst.get(&dst)?;
        let verdicts = &dc.accepts[tag as usize];
        let val = self.fwd.get(&(dst, tag, pid))?;
        val.elems
            .iter()
            .min_by(|a, b| {
                s_rank(&self.bundle, &a.mv, verdicts)
                    .cmp(&s_rank(&self.bundle, &b.mv, verdicts))
                    .then_with(|| attrs_sort_key(&a.mv).cmp(&attrs_sort_key(&b.mv)))
            })
            .map(|e| e.nhop)
    }

    /// Forward one packet. The caller delivers `Deliver` results to hosts
    /// and moves `Forward` results across the chosen link.
    pub fn forward_packet(&mut self, pkt: &mut Packet, now: u64) -> ForwardDecision {
        if pkt.dst == self.id {
            return ForwardDecision::Deliver;
        }
        if pkt.ttl == 0 {
            return ForwardDecision::Drop { reason: DropReason::TtlExpired };
        }
        pkt.ttl -= 1;

        if pkt.from_host {
            let Some((tag, pid)) = self.best_key(pkt.dst) else {
                return ForwardDecision::Drop { reason: DropReason::Unroutable };
            };
            pkt.tag = tag;
            pkt.pid = pid;
            pkt.from_host = false;
        }

        // lazy loop breaking: a TTL spread above the threshold at one switch
        // means the packet's flow is circling through here
        let flush = self.note_ttl(pkt.pkt_hash, pkt.ttl, now);
        let flkey = self.flowlet_key(pkt);
        if flush {
            if self.flowlets.remove(&flkey).is_some() {
                self.counters.flowlet_flushes += 1;
            }
        }

        if let Some(fl) = self.flowlets.get(&flkey).cloned() {
            let live = now.saturating_sub(fl.t) <= self.params.flowlet_timeout_ns;
            if live && !self.check_link_failed(fl.nhop, now) {
                self.flowlets.get_mut(&flkey).unwrap().t = now;
                pkt.tag = fl.ntag;
                pkt.sel_mv = fl.sel_mv;
                return ForwardDecision::Forward { nhop: fl.nhop };
            }
            self.flowlets.remove(&flkey);
        }

        // new flowlet from the current table state
        let Some(elem) = self.pick_elem(pkt, now) else {
            return ForwardDecision::Drop { reason: DropReason::Unroutable };
        };
        let pareto = self.bundle.decomposition.mode == DecompositionMode::Pareto;
        let sel = if pareto { Some(elem.adv_mv.clone()) } else { None };
        self.flowlets.insert(
            flkey,
            FlowletEntry { nhop: elem.nhop, ntag: elem.ntag, sel_mv: sel.clone(), t: now },
        );
        let nhop = elem.nhop;
        pkt.tag = elem.ntag;
        pkt.sel_mv = sel;
        ForwardDecision::Forward { nhop }
    }

    fn flowlet_key(&self, pkt: &Packet) -> (NodeId, Tag, Pid, u64) {
        if self.params.policy_aware_flowlets {
            (pkt.dst, pkt.tag, pkt.pid, pkt.fid)
        } else {
            (pkt.dst, 0, 0, pkt.fid)
        }
    }

    /// Track (maxttl, minttl) per packet hash; true means the spread
    /// crossed the threshold and the matching flowlet must be flushed.
    fn note_ttl(&mut self, pkt_hash: u64, ttl: u8, now: u64) -> bool {
        // age out stale records lazily
        let window = 16 * self.params.flowlet_timeout_ns;
        let e = self.loops.entry(pkt_hash).or_insert(LoopEntry { maxttl: ttl, minttl: ttl, t: now });
        if now.saturating_sub(e.t) > window {
            *e = LoopEntry { maxttl: ttl, minttl: ttl, t: now };
            return false;
        }
        e.t = now;
        e.maxttl = e.maxttl.max(ttl);
        e.minttl = e.minttl.min(ttl);
        e.maxttl - e.minttl > self.params.delta_threshold
    }

    fn pick_elem(&mut self, pkt: &Packet, now: u64) -> Option<FwdElem> {
        let key = (pkt.dst, pkt.tag, pkt.pid);
        let dc = self.bundle.switches[&self.id].per_dst.get(&pkt.dst)?;
        let verdicts = dc.accepts.get(pkt.tag as usize)?.clone();
        let elems = self.fwd.get(&key)?.elems.clone();
        // exact continuation of the Pareto selection when possible
        if let Some(sel) = &pkt.sel_mv {
            if let Some(e) = elems
                .iter()
                .find(|e| e.mv == *sel && !self.check_link_failed(e.nhop, now))
            {
                return Some(e.clone());
            }
        }
        let mut live: Vec<FwdElem> = elems
            .into_iter()
            .filter(|e| !self.check_link_failed(e.nhop, now))
            .collect();
        live.sort_by(|a, b| {
            s_rank(&self.bundle, &a.mv, &verdicts)
                .cmp(&s_rank(&self.bundle, &b.mv, &verdicts))
                .then_with(|| attrs_sort_key(&a.mv).cmp(&attrs_sort_key(&b.mv)))
                .then_with(|| a.nhop.cmp(&b.nhop))
        });
        live.into_iter().next()
    }

    /// Golden-test table dump: one line per forwarding entry plus the best
    /// marks, deterministic ordering and formatting.
    pub fn dump_tables(&self, topo: &crate::topo::Topology) -> String {
        let mut out = String::new();
        for (&(dst, tag, pid), val) in &self.fwd {
            for e in &val.elems {
                let best =
                    if self.best.get(&dst) == Some(&(tag, pid)) { " *" } else { "" };
                writeln!(
                    out,
                    "fwd dst={} tag={} pid={} util={} len={} nhop={} ntag={} v={}{}",
                    topo.name(dst),
                    tag,
                    pid,
                    fmt_rat(e.mv.util),
                    e.mv.len,
                    topo.name(e.nhop),
                    e.ntag,
                    val.version,
                    best
                )
                .unwrap();
            }
        }
        out
    }
}

fn fmt_rat(r: Rat) -> String {
    let v = *r.numer() as f64 / *r.denom() as f64;
    format!("{v}")
}

/// Insert into a bounded non-dominated frontier; true if the new element is
/// kept (and thus worth propagating).
fn insert_pareto(bundle: &CompiledBundle, val: &mut FwdVal, elem: FwdElem) -> bool {
    if val
        .elems
        .iter()
        .any(|e| dominates(bundle, &e.mv, &elem.mv))
    {
        return false;
    }
    val.elems.retain(|e| !dominates(bundle, &elem.mv, &e.mv));
    val.elems.push(elem);
    val.elems
        .sort_by(|a, b| attrs_sort_key(&a.mv).cmp(&attrs_sort_key(&b.mv)));
    if val.elems.len() > PARETO_CAP {
        val.elems.truncate(PARETO_CAP);
    }
    true
}

#[cfg(test)]
mod tests {
    use std::collections::VecDeque;

    use super::*;
    use crate::bundle::compile;
    use crate::oracle::UtilMap;
    use crate::rank::Ext;
    use crate::topo::Topology;

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

    fn fig6_utils(t: &Topology) -> UtilMap {
        let mut u = UtilMap::new();
        let mut set = |x: &str, y: &str, n: i64| {
            let (x, y) = (t.node(x).unwrap(), t.node(y).unwrap());
            u.insert((x, y), Rat::new(n, 10));
            u.insert((y, x), Rat::new(n, 10));
        };
        set("B", "D", 3);
        set("C", "D", 1);
        set("B", "C", 2);
        set("A", "B", 5);
        set("A", "C", 4);
        u
    }

    /// Run synchronized probe rounds to quiescence over static utilization.
    fn run_rounds(
        topo: &Topology,
        switches: &mut BTreeMap<NodeId, Switch>,
        utils: &UtilMap,
        rounds: u64,
        now0: u64,
    ) -> u64 {
        let mut now = now0;
        for r in 0..rounds {
            let version = r + 1;
            let mut queue: VecDeque<(NodeId, NodeId, Probe)> = VecDeque::new();
            let ids: Vec<NodeId> = switches.keys().copied().collect();
            for &id in &ids {
                for (nbr, p) in switches.get_mut(&id).unwrap().init_probe(version) {
                    queue.push_back((id, nbr, p));
                }
            }
            while let Some((from, to, probe)) = queue.pop_front() {
                let util =
                    utils.get(&(to, from)).copied().unwrap_or_else(|| Rat::from_integer(0));
                let lat = topo.link(to, from).unwrap().latency_ns;
                let sw = switches.get_mut(&to).unwrap();
                for (nbr, p) in sw.process_probe(from, &probe, util, lat, now) {
                    queue.push_back((to, nbr, p));
                }
            }
            now += 256_000;
        }
        now
    }

    fn make_switches(
        topo: &Topology,
        policy: &str,
        params: SwitchParams,
    ) -> BTreeMap<NodeId, Switch> {
        let bundle = Arc::new(compile(topo, policy).unwrap());
        (0..topo.n_nodes())
            .map(|n| (n, Switch::new(n, bundle.clone(), params)))
            .collect()
    }

    const RUNNING_EXAMPLE: &str =
        "minimize(if (A B D) then 0 else if (B .* D) then path.util else inf)";

    #[test]
    fn running_example_converges_to_golden_tables() {
        let t = diamond();
        let mut sw = make_switches(&t, RUNNING_EXAMPLE, SwitchParams::default());
        let utils = fig6_utils(&t);
        run_rounds(&t, &mut sw, &utils, 3, 0);
        let (a, b, c, d) = (0usize, 1, 2, 3);

        // B tag 0 (direct): nhop D, util 0.3. B tag 1 (via C): nhop C,
        // util 0.2 and it is B's best.
        let bsw = &sw[&b];
        let e0 = &bsw.fwd_entry(d, 0, 0).unwrap().elems[0];
        assert_eq!(e0.nhop, d);
        assert_eq!(e0.mv.util, Rat::new(3, 10));
        let e1 = &bsw.fwd_entry(d, 1, 0).unwrap().elems[0];
        assert_eq!(e1.nhop, c);
        assert_eq!(e1.mv.util, Rat::new(2, 10));
        assert_eq!(bsw.best_key(d), Some((1, 0)));
        assert_eq!(
            bsw.best_rank(d),
            Some(RankValue::scalar(Ext::Finite(Rat::new(2, 10))))
        );

        // A's best is its accepting node (rank 0), next hop B
        let asw = &sw[&a];
        let (atag, apid) = asw.best_key(d).unwrap();
        let ae = &asw.fwd_entry(d, atag, apid).unwrap().elems[0];
        assert_eq!(ae.nhop, b);
        assert_eq!(asw.best_rank(d), Some(RankValue::scalar(Ext::zero())));

        // dump format is stable and shows the starred best entries
        let dump = bsw.dump_tables(&t);
        assert!(dump.contains("fwd dst=D tag=0 pid=0 util=0.3 len=1 nhop=D ntag=0 v=3"));
        assert!(dump.contains("fwd dst=D tag=1 pid=0 util=0.2 len=2 nhop=C ntag=0 v=3 *"));
    }

    #[test]
    fn packet_follows_golden_path_with_tag_rewrites() {
        let t = diamond();
        let mut sw = make_switches(&t, RUNNING_EXAMPLE, SwitchParams::default());
        let utils = fig6_utils(&t);
        let now = run_rounds(&t, &mut sw, &utils, 3, 0);
        let (a, b, d) = (0usize, 1, 3);

        let mut pkt = Packet {
            dst: d,
            tag: 0,
            pid: 0,
            fid: 7,
            pkt_hash: 99,
            ttl: INITIAL_TTL,
            size: 1500,
            sel_mv: None,
            from_host: true,
        };
        let mut here = a;
        let mut path = vec![a];
        loop {
            match sw.get_mut(&here).unwrap().forward_packet(&mut pkt, now) {
                ForwardDecision::Deliver => break,
                ForwardDecision::Forward { nhop } => {
                    here = nhop;
                    path.push(nhop);
                }
                other => panic!("unexpected {other:?}"),
            }
        }
        // A's own traffic takes A-B-D even though B's own best is via C
        assert_eq!(path, vec![a, b, d]);
    }

    #[test]
    fn older_version_probe_is_discarded() {
        let t = diamond();
        let mut sw = make_switches(&t, "minimize(path.util)", SwitchParams::default());
        let utils = fig6_utils(&t);
        run_rounds(&t, &mut sw, &utils, 2, 0);
        let (_, b, c, d) = (0usize, 1, 2, 3);
        // a stale version-1 probe from C with an attractive metric
        let stale = Probe {
            origin: d,
            pid: 0,
            tag: 0,
            mv: PathAttributes {
                util: Rat::new(1, 100),
                len: 1,
                lat: Rat::from_integer(1_000),
            },
            version: 1,
        };
        let bsw = sw.get_mut(&b).unwrap();
        let before = bsw.fwd_entry(d, 0, 0).unwrap().clone();
        let out = bsw.process_probe(c, &stale, Rat::new(2, 10), 1_000, 600_000);
        assert!(out.is_empty());
        assert_eq!(bsw.counters.probes_discarded_stale, 1);
        assert_eq!(bsw.fwd_entry(d, 0, 0).unwrap().elems, before.elems);
    }

    #[test]
    fn newer_version_wins_even_if_worse() {
        let t = diamond();
        let mut sw = make_switches(&t, "minimize(path.util)", SwitchParams::default());
        let utils = fig6_utils(&t);
        run_rounds(&t, &mut sw, &utils, 2, 0);
        let (_, b, _, d) = (0usize, 1, 2, 3);
        let worse = Probe {
            origin: d,
            pid: 0,
            tag: 0,
            mv: PathAttributes {
                util: Rat::new(9, 10),
                len: 1,
                lat: Rat::from_integer(1_000),
            },
            version: 7,
        };
        let bsw = sw.get_mut(&b).unwrap();
        let out = bsw.process_probe(d, &worse, Rat::new(3, 10), 1_000, 600_000);
        assert!(!out.is_empty(), "replacement propagates");
        let val = bsw.fwd_entry(d, 0, 0).unwrap();
        assert_eq!(val.version, 7);
        assert_eq!(val.elems[0].mv.util, Rat::new(9, 10));
    }

    #[test]
    fn versionless_mode_accepts_stale_probes() {
        let t = diamond();
        let params = SwitchParams { enable_versioning: false, ..SwitchParams::default() };
        let mut sw = make_switches(&t, "minimize(path.util)", params);
        let utils = fig6_utils(&t);
        run_rounds(&t, &mut sw, &utils, 2, 0);
        let (_, b, c, d) = (0usize, 1, 2, 3);
        let stale = Probe {
            origin: d,
            pid: 0,
            tag: 0,
            mv: PathAttributes {
                util: Rat::new(1, 100),
                len: 1,
                lat: Rat::from_integer(1_000),
            },
            version: 1,
        };
        let bsw = sw.get_mut(&b).unwrap();
        let out = bsw.process_probe(c, &stale, Rat::new(1, 100), 1_000, 600_000);
        assert!(!out.is_empty(), "without versioning the stale metric wins");
        assert_eq!(bsw.fwd_entry(d, 0, 0).unwrap().elems[0].nhop, c);
    }

    #[test]
    fn convergence_matches_oracle_on_random_graphs() {
        for seed in 0..10 {
            let t = Topology::random(7, 4, seed);
            let utils = {
                // deterministic pseudo-random static utilization
                let mut u = UtilMap::new();
                for (a, b, _) in t.directed_links() {
                    if a < b {
                        let v = Rat::new(((a * 7 + b * 13 + seed as usize) % 16) as i64, 16);
                        u.insert((a, b), v);
                        u.insert((b, a), v);
                    }
                }
                u
            };
            for policy in ["minimize(path.util)", "minimize((path.len, path.util))"] {
                let mut sw = make_switches(&t, policy, SwitchParams::default());
                run_rounds(&t, &mut sw, &utils, (t.n_nodes() + 2) as u64, 0);
                let p = crate::policy::parse_policy(policy, &t.alphabet()).unwrap();
                for src in 0..t.n_nodes() {
                    for dst in 0..t.n_nodes() {
                        if src == dst {
                            continue;
                        }
                        let want = crate::oracle::best_path(&t, &p, &utils, src, dst)
                            .map(|rp| rp.rank);
                        let got = sw[&src].best_rank(dst);
                        assert_eq!(want, got, "{policy} seed {seed} {src}->{dst}");
                    }
                }
            }
        }
    }

    #[test]
    fn failed_link_detection_and_reroute() {
        let t = diamond();
        let mut sw = make_switches(&t, "minimize(path.util)", SwitchParams::default());
        let utils = fig6_utils(&t);
        let now = run_rounds(&t, &mut sw, &utils, 3, 0);
        let (_, b, c, d) = (0usize, 1, 2, 3);
        let bsw = sw.get_mut(&b).unwrap();
        assert_eq!(bsw.fwd_entry(d, 0, 0).unwrap().elems[0].nhop, c);
        // no probes from C for 4 periods: the port is declared failed
        let later = now + 4 * 256_000;
        assert!(bsw.check_link_failed(c, later));
        assert_eq!(bsw.counters.failure_detections, 1);
        // the next round's probe from D resets the entry (newer version)
        // and restores forwarding over the surviving direct link
        let fresh = Probe {
            origin: d,
            pid: 0,
            tag: 0,
            mv: PathAttributes::empty(),
            version: 99,
        };
        bsw.process_probe(d, &fresh, Rat::new(3, 10), 1_000, later);
        assert_eq!(bsw.fwd_entry(d, 0, 0).unwrap().elems[0].nhop, d);
        let mut pkt = Packet {
            dst: d,
            tag: 0,
            pid: 0,
            fid: 1,
            pkt_hash: 1,
            ttl: INITIAL_TTL,
            size: 1500,
            sel_mv: None,
            from_host: true,
        };
        let dec = bsw.forward_packet(&mut pkt, later);
        assert_eq!(dec, ForwardDecision::Forward { nhop: d });
    }

    #[test]
    fn ttl_spread_flushes_flowlet() {
        let t = diamond();
        let mut sw = make_switches(&t, "minimize(path.util)", SwitchParams::default());
        let utils = fig6_utils(&t);
        let now = run_rounds(&t, &mut sw, &utils, 3, 0);
        let b = 1usize;
        let d = 3usize;
        let bsw = sw.get_mut(&b).unwrap();
        let mk = |ttl: u8| Packet {
            dst: d,
            tag: 0,
            pid: 0,
            fid: 5,
            pkt_hash: 42,
            ttl,
            size: 1500,
            sel_mv: None,
            from_host: true,
        };
        let mut p = mk(64);
        assert!(matches!(bsw.forward_packet(&mut p, now), ForwardDecision::Forward { .. }));
        assert_eq!(bsw.counters.flowlet_flushes, 0);
        // same packet hash seen again with a TTL 6 lower: spread > 4
        let mut p2 = mk(58);
        assert!(matches!(
            bsw.forward_packet(&mut p2, now + 1_000),
            ForwardDecision::Forward { .. }
        ));
        assert_eq!(bsw.counters.flowlet_flushes, 1);
    }

    #[test]
    fn ttl_zero_drops() {
        let t = diamond();
        let mut sw = make_switches(&t, "minimize(path.util)", SwitchParams::default());
        let utils = fig6_utils(&t);
        let now = run_rounds(&t, &mut sw, &utils, 3, 0);
        let mut pkt = Packet {
            dst: 3,
            tag: 0,
            pid: 0,
            fid: 1,
            pkt_hash: 2,
            ttl: 0,
            size: 64,
            sel_mv: None,
            from_host: true,
        };
        assert_eq!(
            sw.get_mut(&1).unwrap().forward_packet(&mut pkt, now),
            ForwardDecision::Drop { reason: DropReason::TtlExpired }
        );
    }

    #[test]
    fn pareto_frontier_is_bounded_and_nondominated() {
        let t = diamond();
        // widest-shortest falls back to Pareto mode
        let mut sw = make_switches(&t, "minimize((path.util, path.len))", SwitchParams::default());
        let utils = fig6_utils(&t);
        run_rounds(&t, &mut sw, &utils, 4, 0);
        for s in sw.values() {
            for ((_, _, _), val) in s.fwd.iter() {
                assert!(val.elems.len() <= PARETO_CAP);
                for (i, a) in val.elems.iter().enumerate() {
                    for (j, b) in val.elems.iter().enumerate() {
                        if i != j {
                            assert!(
                                !(a.mv.util <= b.mv.util && a.mv.len <= b.mv.len)
                                    || (a.mv.util == b.mv.util && a.mv.len == b.mv.len),
                                "dominated element retained"
                            );
                        }
                    }
                }
            }
        }
        // the converged best still matches the oracle optimum
        let p = crate::policy::parse_policy("minimize((path.util, path.len))", &t.alphabet())
            .unwrap();
        for src in 0..3 {
            let want = crate::oracle::best_path(&t, &p, &utils, src, 3).map(|rp| rp.rank);
            assert_eq!(want, sw[&src].best_rank(3), "src {src}");
        }
    }

    #[test]
    fn decomposed_policy_converges_to_oracle() {
        // the congestion-aware policy uses two pids recombined at decision
        // time
        let t = diamond();
        let policy =
            "minimize(if path.util < .8 then (1, 0, path.util) else (2, path.len, path.util))";
        let mut sw = make_switches(&t, policy, SwitchParams::default());
        // utilizations high enough that some paths cross the 0.8 threshold
        let mut utils = UtilMap::new();
        let mut set = |x: usize, y: usize, n: i64| {
            utils.insert((x, y), Rat::new(n, 10));
            utils.insert((y, x), Rat::new(n, 10));
        };
        set(1, 3, 9); // B-D almost saturated
        set(2, 3, 2);
        set(1, 2, 3);
        set(0, 1, 1);
        set(0, 2, 9);
        run_rounds(&t, &mut sw, &utils, 5, 0);
        let p = crate::policy::parse_policy(policy, &t.alphabet()).unwrap();
        for src in 0..3 {
            let want = crate::oracle::best_path(&t, &p, &utils, src, 3).map(|rp| rp.rank);
            assert_eq!(want, sw[&src].best_rank(3), "src {src}");
        }
    }
}
