//! Deterministic discrete-event simulator hosting the synthesized switch
//! runtime, baseline forwarding schemes, hosts, workloads, and failure /
//! utilization scripts.

pub mod config;
pub mod engine;
pub mod link;
pub mod metrics;
pub mod workload;

pub use config::{
    parse_scenario, strip_regex_guards, CbrSpec, FailureEvent, ProbeDelay, ScenarioConfig,
    ScenarioError, Scheme, UtilSet,
};
pub use engine::{run_simulation, Engine, HULA_POLICY};
pub use metrics::{FlowRecord, MetricsReport};
pub use workload::{poisson_flows, FlowSpec, SizeCdf};

#[cfg(test)]
mod tests {
    use super::*;
    use crate::rank::Rat;
    use crate::topo::Topology;

    fn diamond_with_hosts() -> Topology {
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
        t.set_hosts(a, 1);
        t.set_hosts(d, 1);
        t
    }

    fn fig6_script(t: &Topology) -> Vec<UtilSet> {
        let mut v = Vec::new();
        let mut set = |x: &str, y: &str, n: i64| {
            let (x, y) = (t.node(x).unwrap(), t.node(y).unwrap());
            for (f, to) in [(x, y), (y, x)] {
                v.push(UtilSet { at_ns: 0, from: f, to, util: Rat::new(n, 10) });
            }
        };
        set("B", "D", 3);
        set("C", "D", 1);
        set("B", "C", 2);
        set("A", "B", 5);
        set("A", "C", 4);
        v
    }

    #[test]
    fn golden_tables_after_three_rounds() {
        let t = diamond_with_hosts();
        let mut cfg = ScenarioConfig::new(
            t.clone(),
            "minimize(if (A B D) then 0 else if (B .* D) then path.util else inf)",
        );
        cfg.static_utils = true;
        cfg.util_script = fig6_script(&t);
        cfg.duration_ns = 3 * cfg.params.probe_period_ns - 1;
        let mut eng = Engine::new(cfg).unwrap();
        eng.run();
        let (b, c, d) = (1, 2, 3);
        let bsw = eng.switch(b).unwrap();
        let e0 = &bsw.fwd_entry(d, 0, 0).unwrap().elems[0];
        assert_eq!((e0.nhop, e0.mv.util), (d, Rat::new(3, 10)));
        let e1 = &bsw.fwd_entry(d, 1, 0).unwrap().elems[0];
        assert_eq!((e1.nhop, e1.mv.util), (c, Rat::new(2, 10)));
        assert_eq!(bsw.best_key(d), Some((1, 0)));
        assert_eq!(eng.switch(0).unwrap().best_nhop(d), Some(b));
    }

    #[test]
    fn single_flow_fct_matches_closed_form() {
        // one 14600-byte flow (10 packets) on an idle network with a large
        // initial window: FCT = host pacing of 9 packets + per-hop
        // store-and-forward of the last packet over the 2-hop path
        let t = diamond_with_hosts();
        let mut cfg = ScenarioConfig::new(t, "minimize(path.len)");
        cfg.flows.push(FlowSpec { src_host: 0, dst_host: 1, bytes: 14_600, start_ns: 100_000 });
        cfg.cwnd_init = 64;
        cfg.duration_ns = 2_000_000;
        let report = run_simulation(cfg).unwrap();
        let fct = report.flows[0].fct_ns.unwrap();
        let ser = (1500.0_f64 * 8.0 / 10.0).ceil() as u64; // 1200 ns
        let expect = 9 * ser + 2 * (ser + 1_000);
        assert_eq!(fct, expect, "fct {fct} expected {expect}");
        assert_eq!(report.bytes_delivered, 10 * 1500);
        assert_eq!(report.looped_packets, 0);
    }

    #[test]
    fn determinism_byte_identical_reports() {
        let t = Topology::fattree(4, 1);
        let mk = || {
            let mut cfg = ScenarioConfig::new(t.clone(), "minimize(path.util)");
            cfg.seed = 42;
            cfg.load = 0.3;
            cfg.workload = Some(SizeCdf::cache_like());
            cfg.duration_ns = 2_000_000;
            cfg
        };
        let r1 = run_simulation(mk()).unwrap();
        let r2 = run_simulation(mk()).unwrap();
        assert_eq!(r1.records(), r2.records());
        assert_eq!(r1.fct_csv(), r2.fct_csv());
        assert!(r1.flows.iter().any(|f| f.fct_ns.is_some()), "some flows complete");
    }

    #[test]
    fn all_schemes_deliver_traffic() {
        let t = Topology::fattree(4, 1);
        for scheme in [Scheme::Contra, Scheme::Ecmp, Scheme::Hula, Scheme::Spain, Scheme::Sp] {
            let mut cfg = ScenarioConfig::new(t.clone(), "minimize(path.util)");
            cfg.scheme = scheme;
            cfg.seed = 7;
            cfg.flows.push(FlowSpec { src_host: 0, dst_host: 7, bytes: 50_000, start_ns: 600_000 });
            cfg.duration_ns = 3_000_000;
            let report = run_simulation(cfg).unwrap();
            assert!(
                report.flows[0].fct_ns.is_some(),
                "{} failed to complete the flow",
                scheme.as_str()
            );
            assert_eq!(report.looped_packets, 0, "{}", scheme.as_str());
        }
    }

    #[test]
    fn failure_detection_within_window() {
        let t = diamond_with_hosts();
        let mut cfg = ScenarioConfig::new(t.clone(), "minimize(path.util)");
        let (b, d) = (1, 3);
        cfg.failures.push(FailureEvent { a: b, b: d, down_ns: 2_000_000, up_ns: None });
        cfg.duration_ns = 5_000_000;
        cfg.sample_interval_ns = 64_000;
        let report = run_simulation(cfg).unwrap();
        let det = report
            .failure_detections
            .iter()
            .find(|&&(sw, nbr, _, _)| sw == b && nbr == d)
            .expect("B detects the B-D failure");
        let k = 3;
        let period = 256_000;
        assert!(det.3 - det.2 <= (k + 1) * period + 64_000, "latency {}", det.3 - det.2);
    }

    #[test]
    fn conservation_of_bytes() {
        let t = Topology::fattree(4, 1);
        let mut cfg = ScenarioConfig::new(t, "minimize(path.util)");
        cfg.load = 0.5;
        cfg.workload = Some(SizeCdf::web_search_like());
        cfg.seed = 3;
        cfg.duration_ns = 2_000_000;
        let r = run_simulation(cfg).unwrap();
        assert_eq!(
            r.bytes_injected,
            r.bytes_delivered + r.bytes_dropped + r.bytes_in_flight
        );
    }

    #[test]
    fn probe_overhead_is_counted() {
        let t = diamond_with_hosts();
        let mut cfg = ScenarioConfig::new(t, "minimize(path.util)");
        cfg.duration_ns = 1_000_000;
        let r = run_simulation(cfg).unwrap();
        assert!(r.probe_bytes > 0);
        assert!(r.probes_sent > 0);
    }
}
