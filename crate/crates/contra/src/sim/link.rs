//! Directed link model: bounded FIFO output queue with store-and-forward
//! serialization, plus an exponentially decaying utilization estimator.

use std::collections::VecDeque;

use crate::rank::{quantize_util, Rat};

/// Maximum segment size used by the transport model (payload bytes).
pub const MSS: u32 = 1460;
/// Per-packet header bytes added on the wire.
pub const HEADER_BYTES: u32 = 40;
/// Output buffer bound, in MSS units.
pub const BUFFER_MSS: u64 = 1000;

#[derive(Debug, Clone)]
pub struct LinkDir {
    pub capacity_gbps: f64,
    pub latency_ns: u64,
    pub failed: bool,
    /// Time the serializer becomes free.
    next_free: u64,
    /// Scheduled departures still occupying the buffer: (depart time, bytes).
    queued: VecDeque<(u64, u32)>,
    queued_bytes: u64,
    pub peak_queue_bytes: u64,
    pub drops: u64,
    pub bytes_tx: u64,
    /// EWMA byte rate in bytes/ns.
    rate: f64,
    rate_at: u64,
    tau_ns: f64,
    buffer_bytes: u64,
}

impl LinkDir {
    pub fn new(capacity_gbps: f64, latency_ns: u64, tau_ns: u64, buffer_mss: u64) -> Self {
        LinkDir {
            capacity_gbps,
            latency_ns,
            failed: false,
            next_free: 0,
            queued: VecDeque::new(),
            queued_bytes: 0,
            peak_queue_bytes: 0,
            drops: 0,
            bytes_tx: 0,
            rate: 0.0,
            rate_at: 0,
            tau_ns: tau_ns as f64,
            buffer_bytes: buffer_mss * (MSS + HEADER_BYTES) as u64,
        }
    }

    /// Serialization time of `bytes` on this link, in ns.
    pub fn ser_ns(&self, bytes: u32) -> u64 {
        ((bytes as f64) * 8.0 / self.capacity_gbps).ceil() as u64
    }

    fn drain(&mut self, now: u64) {
        while let Some(&(t, b)) = self.queued.front() {
            if t <= now {
                self.queued.pop_front();
                self.queued_bytes -= b as u64;
            } else {
                break;
            }
        }
    }

    /// Enqueue a data packet at `now`. Returns the arrival time at the far
    /// end, or `None` if the bounded buffer dropped it or the link is down.
    pub fn enqueue(&mut self, now: u64, bytes: u32) -> Option<u64> {
        if self.failed {
            self.drops += 1;
            return None;
        }
        self.drain(now);
        if self.queued_bytes + bytes as u64 > self.buffer_bytes {
            self.drops += 1;
            return None;
        }
        let start = self.next_free.max(now);
        let depart = start + self.ser_ns(bytes);
        self.next_free = depart;
        self.queued.push_back((depart, bytes));
        self.queued_bytes += bytes as u64;
        self.peak_queue_bytes = self.peak_queue_bytes.max(self.queued_bytes);
        self.note_tx(now, bytes);
        Some(depart + self.latency_ns)
    }

    /// Send a probe: bypasses the data queue (modeling the highest-priority
    /// queue, serialization negligible at probe size) and does not feed the
    /// utilization estimator.
    pub fn send_probe(&mut self, now: u64, _bytes: u32) -> Option<u64> {
        if self.failed {
            return None;
        }
        Some(now + self.latency_ns)
    }

    fn note_tx(&mut self, now: u64, bytes: u32) {
        let dt = now.saturating_sub(self.rate_at) as f64;
        self.rate *= (-dt / self.tau_ns).exp();
        self.rate += bytes as f64 / self.tau_ns;
        self.rate_at = now;
        self.bytes_tx += bytes as u64;
    }

    /// Estimated utilization in [0,1] at `now`.
    pub fn util(&mut self, now: u64) -> Rat {
        let dt = now.saturating_sub(self.rate_at) as f64;
        self.rate *= (-dt / self.tau_ns).exp();
        self.rate_at = now.max(self.rate_at);
        let cap_bytes_per_ns = self.capacity_gbps / 8.0;
        quantize_util((self.rate / cap_bytes_per_ns).clamp(0.0, 1.0))
    }

    pub fn queued_bytes(&mut self, now: u64) -> u64 {
        self.drain(now);
        self.queued_bytes
    }
}

#[cfg(test)]
mod tests {
    use super::*;

    #[test]
    fn idle_link_util_zero() {
        let mut l = LinkDir::new(10.0, 1_000, 256_000, BUFFER_MSS);
        assert_eq!(l.util(1_000_000), Rat::from_integer(0));
    }

    #[test]
    fn saturated_link_util_near_one() {
        // back-to-back 1500B packets on a 10G link for >= 3 tau
        let mut l = LinkDir::new(10.0, 1_000, 256_000, BUFFER_MSS);
        let ser = l.ser_ns(1500);
        let mut t = 0u64;
        while t < 4 * 256_000 {
            l.enqueue(t, 1500);
            t += ser;
        }
        let u = l.util(t);
        let uf = *u.numer() as f64 / *u.denom() as f64;
        assert!(uf >= 0.95, "util {uf}");
    }

    #[test]
    fn half_rate_cbr_util_near_half() {
        let mut l = LinkDir::new(10.0, 1_000, 256_000, BUFFER_MSS);
        let ser = l.ser_ns(1500);
        let mut t = 0u64;
        while t < 5 * 256_000 {
            l.enqueue(t, 1500);
            t += 2 * ser;
        }
        let u = l.util(t);
        let uf = *u.numer() as f64 / *u.denom() as f64;
        assert!((uf - 0.5).abs() <= 0.05, "util {uf}");
    }

    #[test]
    fn buffer_bound_drops_excess() {
        let mut l = LinkDir::new(10.0, 1_000, 256_000, BUFFER_MSS);
        let mut dropped = 0;
        for _ in 0..1200 {
            if l.enqueue(0, 1500).is_none() {
                dropped += 1;
            }
        }
        assert!(dropped > 0);
        assert!(l.queued_bytes(0) <= BUFFER_MSS * 1500);
    }

    #[test]
    fn fifo_ordering_and_pipeline() {
        let mut l = LinkDir::new(10.0, 5_000, 256_000, BUFFER_MSS);
        let a1 = l.enqueue(0, 1500).unwrap();
        let a2 = l.enqueue(0, 1500).unwrap();
        assert!(a2 > a1);
        assert_eq!(a2 - a1, l.ser_ns(1500));
    }
}
