//! Flow-size workloads: empirical CDFs with inverse-transform sampling and
//! Poisson flow arrivals tuned to a target load fraction.

use rand::Rng;
use rand_chacha::ChaCha8Rng;

/// An empirical flow-size CDF: (size_bytes, cumulative_prob) points with
/// piecewise-linear interpolation between them.
#[derive(Debug, Clone)]
pub struct SizeCdf {
    points: Vec<(f64, f64)>,
}

/// Heavy-tailed approximation of a web-search-style workload: mostly
/// mid-sized flows with a long tail of multi-megabyte transfers.
pub const WEB_SEARCH_LIKE: &[(u64, f64)] = &[
    (1_000, 0.0),
    (10_000, 0.15),
    (100_000, 0.50),
    (1_000_000, 0.80),
    (10_000_000, 0.95),
    (30_000_000, 1.0),
];

/// Approximation of a cache-follower-style workload: dominated by small
/// flows with a shorter tail.
pub const CACHE_LIKE: &[(u64, f64)] = &[
    (100, 0.0),
    (1_000, 0.50),
    (10_000, 0.80),
    (100_000, 0.95),
    (1_000_000, 1.0),
];

#[derive(Debug, thiserror::Error)]
pub enum CdfError {
    #[error("line {0}: expected `size_bytes cumulative_prob`")]
    Malformed(usize),
    #[error("cumulative probabilities must be nondecreasing and end at 1.0")]
    NotACdf,
}

impl SizeCdf {
    pub fn from_points(pts: &[(u64, f64)]) -> Result<SizeCdf, CdfError> {
        let points: Vec<(f64, f64)> = pts.iter().map(|&(s, p)| (s as f64, p)).collect();
        if points.len() < 2
            || points.windows(2).any(|w| w[1].1 < w[0].1 || w[1].0 <= w[0].0)
            || (points.last().unwrap().1 - 1.0).abs() > 1e-9
        {
            return Err(CdfError::NotACdf);
        }
        Ok(SizeCdf { points })
    }

    /// Parse a CDF file: one `size_bytes cumulative_prob` pair per line,
    /// `#` comments and blank lines ignored.
    pub fn parse(text: &str) -> Result<SizeCdf, CdfError> {
        let mut pts = Vec::new();
        for (i, line) in text.lines().enumerate() {
            let line = line.trim();
            if line.is_empty() || line.starts_with('#') {
                continue;
            }
            let mut it = line.split_whitespace();
            let (Some(s), Some(p)) = (it.next(), it.next()) else {
                return Err(CdfError::Malformed(i + 1));
            };
            let s: u64 = s.parse().map_err(|_| CdfError::Malformed(i + 1))?;
            let p: f64 = p.parse().map_err(|_| CdfError::Malformed(i + 1))?;
            pts.push((s, p));
        }
        SizeCdf::from_points(&pts)
    }

    pub fn web_search_like() -> SizeCdf {
        SizeCdf::from_points(WEB_SEARCH_LIKE).unwrap()
    }

    pub fn cache_like() -> SizeCdf {
        SizeCdf::from_points(CACHE_LIKE).unwrap()
    }

    /// Mean flow size in bytes under the piecewise-linear interpolation.
    pub fn mean_bytes(&self) -> f64 {
        self.points
            .windows(2)
            .map(|w| (w[1].1 - w[0].1) * (w[0].0 + w[1].0) / 2.0)
            .sum()
    }

    /// Inverse-transform sample; deterministic given the RNG state.
    pub fn sample(&self, rng: &mut ChaCha8Rng) -> u64 {
        let u: f64 = rng.gen();
        for w in self.points.windows(2) {
            let (s0, p0) = w[0];
            let (s1, p1) = w[1];
            if u <= p1 {
                if p1 == p0 {
                    return s1 as u64;
                }
                let f = (u - p0) / (p1 - p0);
                return (s0 + f * (s1 - s0)).round().max(1.0) as u64;
            }
        }
        self.points.last().unwrap().0 as u64
    }
}

/// A pre-generated flow arrival.
#[derive(Debug, Clone)]
pub struct FlowSpec {
    pub src_host: usize,
    pub dst_host: usize,
    pub bytes: u64,
    pub start_ns: u64,
}

/// Generate Poisson flow arrivals per source host so the injected byte rate
/// approximates `load` x per-host capacity. Deterministic given the seed.
pub fn poisson_flows(
    cdf: &SizeCdf,
    n_hosts: usize,
    host_gbps: f64,
    load: f64,
    duration_ns: u64,
    rng: &mut ChaCha8Rng,
) -> Vec<FlowSpec> {
    assert!(n_hosts >= 2, "need at least two hosts for traffic");
    let host_bytes_per_ns = host_gbps / 8.0;
    let lambda_per_ns = load * host_bytes_per_ns / cdf.mean_bytes();
    let mut flows = Vec::new();
    for src in 0..n_hosts {
        let mut t = 0.0f64;
        loop {
            let u: f64 = rng.gen_range(f64::EPSILON..1.0);
            t += -u.ln() / lambda_per_ns;
            if t >= duration_ns as f64 {
                break;
            }
            let mut dst = rng.gen_range(0..n_hosts - 1);
            if dst >= src {
                dst += 1;
            }
            flows.push(FlowSpec {
                src_host: src,
                dst_host: dst,
                bytes: cdf.sample(rng),
                start_ns: t as u64,
            });
        }
    }
    flows.sort_by_key(|f| (f.start_ns, f.src_host, f.dst_host, f.bytes));
    flows
}
