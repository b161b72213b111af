use crate::rank::Rat;

/// Path attribute names. `util` is the max link utilization along the path,
/// `len` the hop count, `lat` the summed link latency.
#[derive(Debug, Clone, Copy, PartialEq, Eq, Hash)]
pub enum AttrName {
    Util,
    Len,
    Lat,
}

impl AttrName {
    pub fn as_str(&self) -> &'static str {
        match self {
            AttrName::Util => "util",
            AttrName::Len => "len",
            AttrName::Lat => "lat",
        }
    }
}

#[derive(Debug, Clone, Copy, PartialEq, Eq, Hash)]
pub enum BinOp {
    Add,
    Sub,
    Mul,
}

/// Regular expressions over the topology's node-ID alphabet.
#[derive(Debug, Clone, PartialEq, Eq, Hash)]
pub enum Regex {
    Node(String),
    /// `.` — matches exactly one node ID.
    Any,
    Union(Box<Regex>, Box<Regex>),
    Concat(Box<Regex>, Box<Regex>),
    Star(Box<Regex>),
}

#[derive(Debug, Clone, PartialEq, Eq, Hash)]
pub enum BoolTest {
    /// A regular path test. The index points into `PolicyAst::regexes`.
    Regex(usize, Regex),
    /// Scalar comparison; `strict` distinguishes `<` from `<=`.
    Cmp {
        lhs: Box<RankExpr>,
        rhs: Box<RankExpr>,
        strict: bool,
    },
    Not(Box<BoolTest>),
    Or(Box<BoolTest>, Box<BoolTest>),
    And(Box<BoolTest>, Box<BoolTest>),
}

#[derive(Debug, Clone, PartialEq, Eq, Hash)]
pub enum RankExpr {
    Const(Rat),
    Inf,
    Attr(AttrName),
    Bin(BinOp, Box<RankExpr>, Box<RankExpr>),
    If(BoolTest, Box<RankExpr>, Box<RankExpr>),
    Tuple(Vec<RankExpr>),
}

impl RankExpr {
    /// Arity of the rank this expression evaluates to. Tuples have their
    /// component count, `if` takes the max of its branches (shorter branches
    /// are padded with trailing zeros at evaluation time).
    pub fn arity(&self) -> usize {
        match self {
            RankExpr::Const(_) | RankExpr::Inf | RankExpr::Attr(_) | RankExpr::Bin(..) => 1,
            RankExpr::If(_, t, e) => t.arity().max(e.arity()),
            RankExpr::Tuple(cs) => cs.len(),
        }
    }

    /// Does any `path.<attr>` of the given name occur in this expression,
    /// including inside boolean guards?
    pub fn mentions_attr(&self, name: AttrName) -> bool {
        match self {
            RankExpr::Const(_) | RankExpr::Inf => false,
            RankExpr::Attr(a) => *a == name,
            RankExpr::Bin(_, l, r) => l.mentions_attr(name) || r.mentions_attr(name),
            RankExpr::If(b, t, e) => {
                test_mentions_attr(b, name) || t.mentions_attr(name) || e.mentions_attr(name)
            }
            RankExpr::Tuple(cs) => cs.iter().any(|c| c.mentions_attr(name)),
        }
    }
}

fn test_mentions_attr(b: &BoolTest, name: AttrName) -> bool {
    match b {
        BoolTest::Regex(..) => false,
        BoolTest::Cmp { lhs, rhs, .. } => lhs.mentions_attr(name) || rhs.mentions_attr(name),
        BoolTest::Not(x) => test_mentions_attr(x, name),
        BoolTest::Or(a, b) | BoolTest::And(a, b) => {
            test_mentions_attr(a, name) || test_mentions_attr(b, name)
        }
    }
}

/// A parsed policy: the body of `minimize(e)` plus the interned regexes.
#[derive(Debug, Clone, PartialEq, Eq)]
pub struct PolicyAst {
    pub root: RankExpr,
    /// Deduplicated regexes in source order. `BoolTest::Regex` indices point
    /// here.
    pub regexes: Vec<Regex>,
    /// Fixed rank arity of the whole policy.
    pub arity: usize,
}

impl PolicyAst {
    /// The regexes of the policy, deduplicated, in source order.
    pub fn collect_regexes(&self) -> &[Regex] {
        &self.regexes
    }
}
