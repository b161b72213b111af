//! Simulation results: per-flow records plus aggregate counters, rendered
//! as a human-readable table, a machine-readable record stream, and a
//! per-flow FCT CSV. Rendering is deterministic.

use std::fmt::Write as _;

use crate::topo::{NodeId, Topology};

#[derive(Debug, Clone, PartialEq)]
pub struct FlowRecord {
    pub id: usize,
    pub src_host: usize,
    pub dst_host: usize,
    pub bytes: u64,
    pub start_ns: u64,
    /// None if the flow did not finish within the simulation.
    pub fct_ns: Option<u64>,
}

#[derive(Debug, Clone, PartialEq, Default)]
pub struct MetricsReport {
    pub scheme: String,
    pub seed: u64,
    pub config_hash: u64,
    pub duration_ns: u64,

    pub flows: Vec<FlowRecord>,

    pub bytes_injected: u64,
    pub bytes_delivered: u64,
    pub bytes_dropped: u64,
    pub bytes_in_flight: u64,

    pub packets_injected: u64,
    pub packets_delivered: u64,
    pub queue_drops: u64,
    pub ttl_drops: u64,
    pub unroutable_drops: u64,

    pub probe_bytes: u64,
    pub probes_sent: u64,
    pub probes_discarded_stale: u64,

    pub looped_packets: u64,
    pub peak_queue_bytes: u64,

    /// (switch, neighbor, fail time, detect time) per detected failure.
    pub failure_detections: Vec<(NodeId, NodeId, u64, u64)>,
    /// Cumulative delivered bytes sampled at fixed intervals.
    pub throughput: Vec<(u64, u64)>,
    /// Best next hop of the watched (src, dst) pair at each probe tick.
    pub watch_samples: Vec<(u64, Option<NodeId>)>,
    /// Switch-level paths of delivered packets (when path recording is on).
    pub delivered_paths: Vec<Vec<NodeId>>,
    /// Paths of packets dropped in the network (when path recording is on).
    pub dropped_paths: Vec<Vec<NodeId>>,
}

impl MetricsReport {
    pub fn completed_fcts(&self) -> Vec<u64> {
        let mut v: Vec<u64> = self.flows.iter().filter_map(|f| f.fct_ns).collect();
        v.sort_unstable();
        v
    }

    pub fn mean_fct_ns(&self) -> Option<f64> {
        let v = self.completed_fcts();
        if v.is_empty() {
            return None;
        }
        Some(v.iter().sum::<u64>() as f64 / v.len() as f64)
    }

    pub fn percentile_fct_ns(&self, p: f64) -> Option<u64> {
        let v = self.completed_fcts();
        if v.is_empty() {
            return None;
        }
        let idx = ((p / 100.0) * (v.len() - 1) as f64).round() as usize;
        Some(v[idx])
    }

    pub fn probe_fraction(&self) -> f64 {
        let total = self.bytes_injected + self.probe_bytes;
        if total == 0 {
            return 0.0;
        }
        self.probe_bytes as f64 / total as f64
    }

    pub fn looped_fraction(&self) -> f64 {
        if self.packets_injected == 0 {
            return 0.0;
        }
        self.looped_packets as f64 / self.packets_injected as f64
    }

    /// Delivered-byte rate (bytes/ns) between two sample timestamps.
    pub fn throughput_between(&self, t0: u64, t1: u64) -> f64 {
        let at = |t: u64| {
            self.throughput
                .iter()
                .rev()
                .find(|&&(ts, _)| ts <= t)
                .map(|&(_, b)| b)
                .unwrap_or(0)
        };
        if t1 <= t0 {
            return 0.0;
        }
        (at(t1).saturating_sub(at(t0))) as f64 / (t1 - t0) as f64
    }

    /// Human-readable summary table.
    pub fn render(&self, topo: &Topology) -> String {
        let mut s = String::new();
        let _ = writeln!(s, "== simulation report ==");
        let _ = writeln!(s, "scheme        {}", self.scheme);
        let _ = writeln!(s, "seed          {}", self.seed);
        let _ = writeln!(s, "config_hash   {:016x}", self.config_hash);
        let _ = writeln!(s, "duration_ns   {}", self.duration_ns);
        let _ = writeln!(
            s,
            "flows         {} started, {} completed",
            self.flows.len(),
            self.completed_fcts().len()
        );
        if let Some(m) = self.mean_fct_ns() {
            let _ = writeln!(s, "fct_mean_ns   {m:.0}");
            let _ = writeln!(s, "fct_p50_ns    {}", self.percentile_fct_ns(50.0).unwrap());
            let _ = writeln!(s, "fct_p95_ns    {}", self.percentile_fct_ns(95.0).unwrap());
            let _ = writeln!(s, "fct_p99_ns    {}", self.percentile_fct_ns(99.0).unwrap());
        }
        let _ = writeln!(s, "bytes         injected={} delivered={} dropped={} in_flight={}",
            self.bytes_injected, self.bytes_delivered, self.bytes_dropped, self.bytes_in_flight);
        let _ = writeln!(s, "drops         queue={} ttl={} unroutable={}",
            self.queue_drops, self.ttl_drops, self.unroutable_drops);
        let _ = writeln!(
            s,
            "probes        sent={} bytes={} fraction={:.6} stale_discards={}",
            self.probes_sent,
            self.probe_bytes,
            self.probe_fraction(),
            self.probes_discarded_stale
        );
        let _ = writeln!(
            s,
            "loops         looped_packets={} fraction={:.6}",
            self.looped_packets,
            self.looped_fraction()
        );
        let _ = writeln!(s, "peak_queue_B  {}", self.peak_queue_bytes);
        for &(sw, nbr, tf, td) in &self.failure_detections {
            let _ = writeln!(
                s,
                "failure       {} saw {}-{} down at {} (failed at {}, latency {})",
                topo.name(sw),
                topo.name(sw),
                topo.name(nbr),
                td,
                tf,
                td - tf
            );
        }
        s
    }

    /// Machine-readable `key=value` record stream.
    pub fn records(&self) -> String {
        let mut s = String::new();
        let _ = writeln!(s, "scheme={}", self.scheme);
        let _ = writeln!(s, "seed={}", self.seed);
        let _ = writeln!(s, "config_hash={:016x}", self.config_hash);
        let _ = writeln!(s, "duration_ns={}", self.duration_ns);
        let _ = writeln!(s, "flows_started={}", self.flows.len());
        let _ = writeln!(s, "flows_completed={}", self.completed_fcts().len());
        if let Some(m) = self.mean_fct_ns() {
            let _ = writeln!(s, "fct_mean_ns={m:.0}");
            let _ = writeln!(s, "fct_p99_ns={}", self.percentile_fct_ns(99.0).unwrap());
        }
        let _ = writeln!(s, "bytes_injected={}", self.bytes_injected);
        let _ = writeln!(s, "bytes_delivered={}", self.bytes_delivered);
        let _ = writeln!(s, "bytes_dropped={}", self.bytes_dropped);
        let _ = writeln!(s, "bytes_in_flight={}", self.bytes_in_flight);
        let _ = writeln!(s, "queue_drops={}", self.queue_drops);
        let _ = writeln!(s, "ttl_drops={}", self.ttl_drops);
        let _ = writeln!(s, "unroutable_drops={}", self.unroutable_drops);
        let _ = writeln!(s, "probe_bytes={}", self.probe_bytes);
        let _ = writeln!(s, "probe_fraction={:.8}", self.probe_fraction());
        let _ = writeln!(s, "looped_packets={}", self.looped_packets);
        let _ = writeln!(s, "looped_fraction={:.8}", self.looped_fraction());
        let _ = writeln!(s, "peak_queue_bytes={}", self.peak_queue_bytes);
        s
    }

    /// Per-flow FCT CSV: `flow_id,src_host,dst_host,bytes,start_ns,fct_ns`.
    pub fn fct_csv(&self) -> String {
        let mut s = String::from("flow_id,src_host,dst_host,bytes,start_ns,fct_ns\n");
        for f in &self.flows {
            let fct = f.fct_ns.map(|v| v.to_string()).unwrap_or_default();
            let _ = writeln!(
                s,
                "{},{},{},{},{},{}",
                f.id, f.src_host, f.dst_host, f.bytes, f.start_ns, fct
            );
        }
        s
    }
}
