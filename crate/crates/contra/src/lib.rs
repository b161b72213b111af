//! Contra-style performance-aware routing: a policy compiler that turns
//! path-ranking policies plus a topology into per-switch protocol
//! configurations, and a discrete-event simulator in which switches run the
//! synthesized distance-vector protocol.

pub mod analysis;
pub mod automata;
pub mod bundle;
pub mod oracle;
pub mod pg;
pub mod policy;
pub mod rank;
pub mod sim;
pub mod switch;
pub mod topo;
