//! Static policy analysis: monotonicity and isotonicity checks, a randomized
//! isotonicity falsifier, and decomposition of non-isotonic policies into
//! probe-id-separated isotonic subpolicies recombined at decision time.

use std::fmt;

use rand::{Rng, SeedableRng};
use rand_chacha::ChaCha8Rng;

use crate::policy::{
    eval_expr, evaluate_rank, AttrName, BinOp, BoolTest, PathAttributes, PolicyAst, RankExpr,
};
use crate::policy::EvalFlags;
use crate::rank::Rat;

pub const FALSIFIER_SEED: u64 = 0xC0417A;
pub const FALSIFIER_SAMPLES: usize = 10_000;

#[derive(Debug, Clone, Copy, PartialEq, Eq)]
pub enum Property {
    Monotone,
    Isotone,
}

impl fmt::Display for Property {
    fn fmt(&self, f: &mut fmt::Formatter<'_>) -> fmt::Result {
        match self {
            Property::Monotone => write!(f, "monotone"),
            Property::Isotone => write!(f, "isotone"),
        }
    }
}

#[derive(Debug, Clone)]
pub struct Violation {
    pub property: Property,
    pub locus: String,
    pub note: String,
}

/// A concrete falsifier counterexample: two attribute assignments with
/// rank(a) <= rank(b) and a common extension under which the order reverses.
#[derive(Debug, Clone)]
pub struct IsoCounterexample {
    pub a: PathAttributes,
    pub b: PathAttributes,
    pub ext_util: Rat,
    pub ext_lat: Rat,
    pub verdicts: Vec<bool>,
}

#[derive(Debug, Clone)]
pub struct AnalysisReport {
    pub monotone: bool,
    pub isotone: bool,
    pub violations: Vec<Violation>,
    pub warnings: Vec<String>,
    pub counterexample: Option<IsoCounterexample>,
}

impl AnalysisReport {
    fn merge(mut self, other: AnalysisReport) -> AnalysisReport {
        self.monotone &= other.monotone;
        self.isotone &= other.isotone;
        self.violations.extend(other.violations);
        self.warnings.extend(other.warnings);
        if self.counterexample.is_none() {
            self.counterexample = other.counterexample;
        }
        self
    }
}

/// Run both property checks plus the falsifier.
pub fn analyze(policy: &PolicyAst) -> AnalysisReport {
    check_monotone(policy).merge(check_isotone(policy))
}

/// Conservative structural monotonicity check: path ranks must never improve
/// as the path grows. Any use of `-` is flagged.
pub fn check_monotone(policy: &PolicyAst) -> AnalysisReport {
    let mut violations = Vec::new();
    mono_expr(&policy.root, &mut violations);
    AnalysisReport {
        monotone: violations.is_empty(),
        isotone: true,
        violations,
        warnings: Vec::new(),
        counterexample: None,
    }
}

fn locus_of(e: &RankExpr) -> String {
    let s = crate::policy::pretty_print(&PolicyAst {
        root: e.clone(),
        regexes: Vec::new(),
        arity: e.arity(),
    });
    s.strip_prefix("minimize(")
        .and_then(|s| s.strip_suffix(')'))
        .unwrap_or(&s)
        .to_string()
}

fn mono_expr(e: &RankExpr, out: &mut Vec<Violation>) {
    match e {
        RankExpr::Const(_) | RankExpr::Inf | RankExpr::Attr(_) => {}
        RankExpr::Bin(BinOp::Sub, _, _) => out.push(Violation {
            property: Property::Monotone,
            locus: locus_of(e),
            note: "subtraction can decrease rank as the path grows".into(),
        }),
        RankExpr::Bin(_, l, r) => {
            mono_expr(l, out);
            mono_expr(r, out);
        }
        RankExpr::If(_, t, el) => {
            mono_expr(t, out);
            mono_expr(el, out);
        }
        RankExpr::Tuple(cs) => cs.iter().for_each(|c| mono_expr(c, out)),
    }
}

/// Metric-kind flags for a scalar subexpression, used by the structural
/// isotonicity rules: max-based (util) metrics must not be arithmetically
/// combined with sum-based (len/lat) metrics.
#[derive(Debug, Clone, Copy, Default)]
struct Kind {
    has_max: bool,
    has_sum: bool,
}

impl Kind {
    fn join(a: Kind, b: Kind) -> Kind {
        Kind { has_max: a.has_max || b.has_max, has_sum: a.has_sum || b.has_sum }
    }
    fn const_only(&self) -> bool {
        !self.has_max && !self.has_sum
    }
}

/// Conservative structural isotonicity check, applied after regexes are
/// factored out (regex tests are isotone-neutral because the product graph
/// separates them), plus a randomized falsifier with a fixed seed.
pub fn check_isotone(policy: &PolicyAst) -> AnalysisReport {
    let mut violations = Vec::new();
    iso_expr(&policy.root, &mut violations);
    let counterexample = falsify_isotone(policy, FALSIFIER_SAMPLES, FALSIFIER_SEED);
    let isotone = violations.is_empty() && counterexample.is_none();
    let mut warnings = Vec::new();
    if violations.is_empty() && counterexample.is_some() {
        warnings.push("structural check passed but the falsifier found a counterexample".into());
    }
    AnalysisReport { monotone: true, isotone, violations, warnings, counterexample }
}

fn iso_expr(e: &RankExpr, out: &mut Vec<Violation>) -> Kind {
    match e {
        RankExpr::Const(_) | RankExpr::Inf => Kind::default(),
        RankExpr::Attr(AttrName::Util) => Kind { has_max: true, has_sum: false },
        RankExpr::Attr(_) => Kind { has_max: false, has_sum: true },
        RankExpr::Bin(_, l, r) => {
            let k = Kind::join(iso_expr(l, out), iso_expr(r, out));
            if k.has_max && k.has_sum {
                out.push(Violation {
                    property: Property::Isotone,
                    locus: locus_of(e),
                    note: "arithmetic mixes max-based util with a sum-based metric".into(),
                });
            }
            k
        }
        RankExpr::If(BoolTest::Regex(..), t, el) => {
            Kind::join(iso_expr(t, out), iso_expr(el, out))
        }
        RankExpr::If(test, t, el) => {
            out.push(Violation {
                property: Property::Isotone,
                locus: locus_of(e),
                note: "branch on a dynamic comparison: downstream nodes may disagree".into(),
            });
            let _ = test;
            Kind::join(iso_expr(t, out), iso_expr(el, out))
        }
        RankExpr::Tuple(cs) => {
            let kinds: Vec<Kind> = cs.iter().map(|c| iso_expr(c, out)).collect();
            // a max-based component must be last or followed only by constants
            for (i, k) in kinds.iter().enumerate() {
                if k.has_max && i + 1 < kinds.len() {
                    let tail_const = kinds[i + 1..].iter().all(|t| t.const_only());
                    if !tail_const {
                        out.push(Violation {
                            property: Property::Isotone,
                            locus: locus_of(&cs[i]),
                            note: format!(
                                "max-based tuple component {i} is followed by non-constant components"
                            ),
                        });
                    }
                }
            }
            kinds.into_iter().fold(Kind::default(), Kind::join)
        }
    }
}

/// Grid used by the falsifier: utils on a 1/16 grid, lengths 0..8, latencies
/// on a 1/8 ms grid. Small and discrete so counterexamples are reproducible.
fn sample_attrs(rng: &mut ChaCha8Rng) -> PathAttributes {
    PathAttributes {
        util: Rat::new(rng.gen_range(0..=16), 16),
        len: rng.gen_range(0..8),
        lat: Rat::new(rng.gen_range(0..=16), 8),
    }
}

fn extend(a: &PathAttributes, ext_util: Rat, ext_lat: Rat) -> PathAttributes {
    PathAttributes { util: a.util.max(ext_util), len: a.len + 1, lat: a.lat + ext_lat }
}

/// Randomized isotonicity falsifier: sample attribute pairs a <= b (under
/// the policy's rank), a common single-link extension, and check that the
/// order is preserved. Regex verdicts are sampled but held fixed across the
/// pair and its extension (the product graph separates regex state).
pub fn falsify_isotone(
    policy: &PolicyAst,
    samples: usize,
    seed: u64,
) -> Option<IsoCounterexample> {
    let mut rng = ChaCha8Rng::seed_from_u64(seed);
    let nregex = policy.regexes.len();
    for _ in 0..samples {
        let mut a = sample_attrs(&mut rng);
        let mut b = sample_attrs(&mut rng);
        let verdicts: Vec<bool> = (0..nregex).map(|_| rng.gen_bool(0.5)).collect();
        let ext_util = Rat::new(rng.gen_range(0..=16), 16);
        let ext_lat = Rat::new(rng.gen_range(0..=16), 8);
        let mut flags = EvalFlags::default();
        let (Ok(ra), Ok(rb)) = (
            evaluate_rank(policy, &a, &verdicts, &mut flags),
            evaluate_rank(policy, &b, &verdicts, &mut flags),
        ) else {
            continue;
        };
        if ra > rb {
            std::mem::swap(&mut a, &mut b);
        }
        let (Ok(ra2), Ok(rb2)) = (
            evaluate_rank(policy, &extend(&a, ext_util, ext_lat), &verdicts, &mut flags),
            evaluate_rank(policy, &extend(&b, ext_util, ext_lat), &verdicts, &mut flags),
        ) else {
            continue;
        };
        if ra2 > rb2 {
            return Some(IsoCounterexample { a, b, ext_util, ext_lat, verdicts });
        }
    }
    None
}

/// Randomized monotonicity falsifier used as a test oracle: random paths,
/// random single-link extensions, rank must never decrease.
pub fn falsify_monotone(policy: &PolicyAst, samples: usize, seed: u64) -> Option<PathAttributes> {
    let mut rng = ChaCha8Rng::seed_from_u64(seed);
    let nregex = policy.regexes.len();
    for _ in 0..samples {
        let a = sample_attrs(&mut rng);
        let verdicts: Vec<bool> = (0..nregex).map(|_| rng.gen_bool(0.5)).collect();
        let ext_util = Rat::new(rng.gen_range(0..=16), 16);
        let ext_lat = Rat::new(rng.gen_range(0..=16), 8);
        let mut flags = EvalFlags::default();
        let (Ok(r), Ok(r2)) = (
            evaluate_rank(policy, &a, &verdicts, &mut flags),
            evaluate_rank(policy, &extend(&a, ext_util, ext_lat), &verdicts, &mut flags),
        ) else {
            continue;
        };
        if r2 < r {
            return Some(a);
        }
    }
    None
}

/// Randomized search for a verdict-order inversion: two metric vectors
/// whose ranks are strictly ordered one way under one regex-verdict
/// assignment and the opposite way under another. A single stored entry
/// per (destination, tag, pid) cannot serve all upstream decision points
/// for such a policy, so it must propagate a Pareto frontier instead.
pub fn falsify_verdict_stability(
    expr: &RankExpr,
    nregex: usize,
    samples: usize,
    seed: u64,
) -> Option<(PathAttributes, PathAttributes, Vec<bool>, Vec<bool>)> {
    if nregex == 0 {
        return None;
    }
    let mut rng = ChaCha8Rng::seed_from_u64(seed);
    for _ in 0..samples {
        let a = sample_attrs(&mut rng);
        let b = sample_attrs(&mut rng);
        let v: Vec<bool> = (0..nregex).map(|_| rng.gen_bool(0.5)).collect();
        let w: Vec<bool> = (0..nregex).map(|_| rng.gen_bool(0.5)).collect();
        let mut flags = EvalFlags::default();
        let (Ok(rav), Ok(rbv), Ok(raw), Ok(rbw)) = (
            eval_expr(expr, &a, &v, &mut flags),
            eval_expr(expr, &b, &v, &mut flags),
            eval_expr(expr, &a, &w, &mut flags),
            eval_expr(expr, &b, &w, &mut flags),
        ) else {
            continue;
        };
        if (rav < rbv && raw > rbw) || (rav > rbv && raw < rbw) {
            return Some((a, b, v, w));
        }
    }
    None
}

#[derive(Debug, Clone, Copy, PartialEq, Eq)]
pub enum DecompositionMode {
    /// Subpolicies are individually isotonic; probes per pid converge to the
    /// per-pid optimum and the original policy recombines them.
    Exact,
    /// The policy stays in one pid whose entries hold a bounded
    /// Pareto-frontier of metric vectors.
    Pareto,
}

#[derive(Debug, Clone)]
pub struct Subpolicy {
    pub pid: u8,
    pub branch_rank: RankExpr,
}

#[derive(Debug, Clone)]
pub struct Decomposition {
    pub subpolicies: Vec<Subpolicy>,
    /// Attributes the probe metric vector must carry: every attribute
    /// mentioned anywhere in the original policy, guards included.
    pub carried_attrs: Vec<AttrName>,
    /// The original policy, evaluated at decision time over stored metric
    /// vectors.
    pub recombine: PolicyAst,
    pub mode: DecompositionMode,
}

#[derive(Debug, Clone, thiserror::Error)]
pub enum DecomposeError {
    #[error("non-monotone policy refused: {0}")]
    NonMonotone(String),
}

/// Decompose a policy. Requires monotonicity; isotone policies become a
/// single pid, dynamic-comparison branches get one pid each, and anything
/// else falls back to bounded Pareto propagation.
pub fn decompose(
    policy: &PolicyAst,
    report: &AnalysisReport,
) -> Result<Decomposition, DecomposeError> {
    if !report.monotone {
        let locus = report
            .violations
            .iter()
            .find(|v| v.property == Property::Monotone)
            .map(|v| v.locus.clone())
            .unwrap_or_default();
        return Err(DecomposeError::NonMonotone(locus));
    }
    let carried_attrs: Vec<AttrName> = AttrName::all()
        .into_iter()
        .filter(|a| policy.root.mentions_attr(*a))
        .collect();
    let recombine = policy.clone();
    let nregex = policy.regexes.len();
    let verdict_stable = |e: &RankExpr| {
        falsify_verdict_stability(e, nregex, FALSIFIER_SAMPLES, FALSIFIER_SEED).is_none()
    };

    if report.isotone {
        let mode = if verdict_stable(&policy.root) {
            DecompositionMode::Exact
        } else {
            DecompositionMode::Pareto
        };
        return Ok(Decomposition {
            subpolicies: vec![Subpolicy { pid: 0, branch_rank: policy.root.clone() }],
            carried_attrs,
            recombine,
            mode,
        });
    }

    // expand maximal dynamic-comparison branches into candidate subpolicies
    let branches = expand_dynamic(&policy.root);
    let mut uniq: Vec<RankExpr> = Vec::new();
    for b in branches {
        if !uniq.contains(&b) {
            uniq.push(b);
        }
    }
    let all_iso = uniq.len() > 1
        && uniq.iter().all(|b| {
            let mut v = Vec::new();
            iso_expr(b, &mut v);
            v.is_empty() && verdict_stable(b)
        });
    if all_iso {
        let subpolicies = uniq
            .into_iter()
            .enumerate()
            .map(|(i, b)| Subpolicy { pid: i as u8, branch_rank: b })
            .collect();
        Ok(Decomposition {
            subpolicies,
            carried_attrs,
            recombine,
            mode: DecompositionMode::Exact,
        })
    } else {
        Ok(Decomposition {
            subpolicies: vec![Subpolicy { pid: 0, branch_rank: policy.root.clone() }],
            carried_attrs,
            recombine,
            mode: DecompositionMode::Pareto,
        })
    }
}

/// Expand each `if` over a dynamic comparison into its branches (regex `if`s
/// stay in place; the product graph handles them). The result is the list of
/// maximal dynamic branches in source order.
fn expand_dynamic(e: &RankExpr) -> Vec<RankExpr> {
    match e {
        RankExpr::Const(_) | RankExpr::Inf | RankExpr::Attr(_) => vec![e.clone()],
        RankExpr::Bin(op, l, r) => cross(expand_dynamic(l), expand_dynamic(r))
            .into_iter()
            .map(|(a, b)| RankExpr::Bin(*op, Box::new(a), Box::new(b)))
            .collect(),
        RankExpr::If(BoolTest::Regex(i, r), t, el) => {
            cross(expand_dynamic(t), expand_dynamic(el))
                .into_iter()
                .map(|(a, b)| {
                    RankExpr::If(BoolTest::Regex(*i, r.clone()), Box::new(a), Box::new(b))
                })
                .collect()
        }
        RankExpr::If(_, t, el) => {
            let mut out = expand_dynamic(t);
            out.extend(expand_dynamic(el));
            out
        }
        RankExpr::Tuple(cs) => {
            let mut acc: Vec<Vec<RankExpr>> = vec![Vec::new()];
            for c in cs {
                let opts = expand_dynamic(c);
                let mut next = Vec::new();
                for prefix in &acc {
                    for o in &opts {
                        let mut p = prefix.clone();
                        p.push(o.clone());
                        next.push(p);
                    }
                }
                acc = next;
            }
            acc.into_iter().map(RankExpr::Tuple).collect()
        }
    }
}

fn cross(a: Vec<RankExpr>, b: Vec<RankExpr>) -> Vec<(RankExpr, RankExpr)> {
    let mut out = Vec::with_capacity(a.len() * b.len());
    for x in &a {
        for y in &b {
            out.push((x.clone(), y.clone()));
        }
    }
    out
}

impl fmt::Display for AnalysisReport {
    fn fmt(&self, f: &mut fmt::Formatter<'_>) -> fmt::Result {
        writeln!(f, "monotone = {}", self.monotone)?;
        writeln!(f, "isotone = {}", self.isotone)?;
        for v in &self.violations {
            writeln!(f, "violation = {} | {} | {}", v.property, v.locus, v.note)?;
        }
        for w in &self.warnings {
            writeln!(f, "warning = {w}")?;
        }
        if let Some(c) = &self.counterexample {
            writeln!(
                f,
                "counterexample = a(util={},len={},lat={}) b(util={},len={},lat={}) ext(util={},lat={})",
                c.a.util, c.a.len, c.a.lat, c.b.util, c.b.len, c.b.lat, c.ext_util, c.ext_lat
            )?;
        }
        Ok(())
    }
}

impl fmt::Display for Decomposition {
    fn fmt(&self, f: &mut fmt::Formatter<'_>) -> fmt::Result {
        writeln!(
            f,
            "mode = {}",
            match self.mode {
                DecompositionMode::Exact => "exact",
                DecompositionMode::Pareto => "pareto",
            }
        )?;
        let attrs: Vec<&str> = self.carried_attrs.iter().map(|a| a.as_str()).collect();
        writeln!(f, "carried_attrs = {}", attrs.join(","))?;
        for sp in &self.subpolicies {
            writeln!(f, "pid {} = {}", sp.pid, locus_of(&sp.branch_rank))?;
        }
        Ok(())
    }
}

#[cfg(test)]
mod tests {
    use std::collections::BTreeSet;

    use super::*;
    use crate::policy::parse_policy;

    fn alpha() -> BTreeSet<String> {
        ["A", "B", "C", "D", "X", "Y", "W", "F1", "F2"]
            .iter()
            .map(|s| s.to_string())
            .collect()
    }

    fn parse(t: &str) -> PolicyAst {
        parse_policy(t, &alpha()).unwrap()
    }

    #[test]
    fn shortest_path_is_monotone() {
        let r = check_monotone(&parse("minimize(path.len)"));
        assert!(r.monotone);
    }

    #[test]
    fn congestion_aware_is_monotone() {
        // verified by the extension-sampling oracle as well
        let p = parse(
            "minimize(if path.util < .8 then (1, 0, path.util) else (2, path.len, path.util))",
        );
        assert!(check_monotone(&p).monotone);
        assert!(falsify_monotone(&p, 10_000, 7).is_none());
    }

    #[test]
    fn subtraction_is_non_monotone() {
        let r = check_monotone(&parse("minimize(10 - path.len)"));
        assert!(!r.monotone);
        assert!(r.violations[0].locus.contains('-'));
    }

    #[test]
    fn min_util_is_isotone() {
        let r = check_isotone(&parse("minimize(path.util)"));
        assert!(r.isotone);
        assert!(r.counterexample.is_none());
    }

    #[test]
    fn congestion_aware_is_non_isotone_at_dynamic_guard() {
        let p = parse(
            "minimize(if path.util < .8 then (1, 0, path.util) else (2, path.len, path.util))",
        );
        let r = check_isotone(&p);
        assert!(!r.isotone);
        assert!(r
            .violations
            .iter()
            .any(|v| v.property == Property::Isotone && v.note.contains("dynamic")));
    }

    #[test]
    fn widest_shortest_is_non_isotone_with_counterexample() {
        // (path.util, path.len): max saturation breaks the order.
        // The analytically forced counterexample: a=(0.1,5), b=(0.2,1),
        // extension util 0.3 gives a'=(0.3,6) > b'=(0.3,2).
        let p = parse("minimize((path.util, path.len))");
        let r = check_isotone(&p);
        assert!(!r.isotone);
        let mut flags = EvalFlags::default();
        let a = PathAttributes { util: Rat::new(1, 10), len: 5, lat: Rat::new(0, 1) };
        let b = PathAttributes { util: Rat::new(2, 10), len: 1, lat: Rat::new(0, 1) };
        let ra = evaluate_rank(&p, &a, &[], &mut flags).unwrap();
        let rb = evaluate_rank(&p, &b, &[], &mut flags).unwrap();
        assert!(ra < rb);
        let ext = |x: &PathAttributes| PathAttributes {
            util: x.util.max(Rat::new(3, 10)),
            len: x.len + 1,
            lat: x.lat,
        };
        let ra2 = evaluate_rank(&p, &ext(&a), &[], &mut flags).unwrap();
        let rb2 = evaluate_rank(&p, &ext(&b), &[], &mut flags).unwrap();
        assert!(ra2 > rb2);
        // the falsifier finds some counterexample too
        assert!(r.counterexample.is_some());
    }

    #[test]
    fn shortest_widest_is_isotone() {
        let r = check_isotone(&parse("minimize((path.len, path.util))"));
        assert!(r.isotone);
    }

    #[test]
    fn source_local_preference_is_isotone() {
        // P8: regex branches are isotone-neutral
        let r = check_isotone(&parse("minimize(if X .* then path.util else path.lat)"));
        assert!(r.isotone);
    }

    #[test]
    fn decompose_min_util_single_pid() {
        let p = parse("minimize(path.util)");
        let d = decompose(&p, &analyze(&p)).unwrap();
        assert_eq!(d.subpolicies.len(), 1);
        assert_eq!(d.subpolicies[0].pid, 0);
        assert_eq!(d.carried_attrs, vec![AttrName::Util]);
        assert_eq!(d.mode, DecompositionMode::Exact);
    }

    #[test]
    fn decompose_shortest_path_single_pid() {
        let p = parse("minimize(path.len)");
        let d = decompose(&p, &analyze(&p)).unwrap();
        assert_eq!(d.subpolicies.len(), 1);
        assert_eq!(d.carried_attrs, vec![AttrName::Len]);
    }

    #[test]
    fn decompose_congestion_aware_two_pids() {
        let p = parse(
            "minimize(if path.util < .8 then (1, 0, path.util) else (2, path.len, path.util))",
        );
        let d = decompose(&p, &analyze(&p)).unwrap();
        assert_eq!(d.mode, DecompositionMode::Exact);
        assert_eq!(d.subpolicies.len(), 2);
        assert_eq!(d.subpolicies[0].pid, 0);
        assert_eq!(d.subpolicies[1].pid, 1);
        // pid 0 minimizes (1, 0, util); pid 1 minimizes (2, len, util)
        assert_eq!(locus_of(&d.subpolicies[0].branch_rank), "(1, 0, path.util)");
        assert_eq!(locus_of(&d.subpolicies[1].branch_rank), "(2, path.len, path.util)");
        assert_eq!(d.carried_attrs, vec![AttrName::Util, AttrName::Len]);
    }

    #[test]
    fn decompose_widest_shortest_falls_back_to_pareto() {
        let p = parse("minimize((path.util, path.len))");
        let d = decompose(&p, &analyze(&p)).unwrap();
        assert_eq!(d.mode, DecompositionMode::Pareto);
        assert_eq!(d.subpolicies.len(), 1);
    }

    #[test]
    fn decompose_refuses_non_monotone() {
        let p = parse("minimize(10 - path.len)");
        let err = decompose(&p, &analyze(&p));
        assert!(matches!(err, Err(DecomposeError::NonMonotone(_))));
    }

    #[test]
    fn decompose_is_deterministic() {
        let p = parse(
            "minimize(if path.util < .8 then (1, 0, path.util) else (2, path.len, path.util))",
        );
        let d1 = decompose(&p, &analyze(&p)).unwrap();
        let d2 = decompose(&p, &analyze(&p)).unwrap();
        let pids1: Vec<(u8, String)> =
            d1.subpolicies.iter().map(|s| (s.pid, locus_of(&s.branch_rank))).collect();
        let pids2: Vec<(u8, String)> =
            d2.subpolicies.iter().map(|s| (s.pid, locus_of(&s.branch_rank))).collect();
        assert_eq!(pids1, pids2);
    }

    #[test]
    fn falsifier_soundness_on_structurally_isotone_policies() {
        // whenever the structural check says isotone, 10^4 samples find
        // no counterexample
        for t in [
            "minimize(path.len)",
            "minimize(path.util)",
            "minimize((path.len, path.util))",
            "minimize(if .* (F1 + F2) .* then path.util else inf)",
            "minimize(if .* X Y .* then path.util else inf)",
            "minimize((if .* X Y .* then 10 else 0) + path.len)",
            "minimize(if X .* then path.util else path.lat)",
        ] {
            let p = parse(t);
            let mut v = Vec::new();
            iso_expr(&p.root, &mut v);
            assert!(v.is_empty(), "{t} expected structurally isotone");
            assert!(
                falsify_isotone(&p, FALSIFIER_SAMPLES, FALSIFIER_SEED).is_none(),
                "falsifier contradicted structural isotonicity for {t}"
            );
        }
    }
}
