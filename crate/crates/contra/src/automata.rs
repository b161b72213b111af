//! Regex compilation: reversal, Thompson NFA construction, subset
//! determinization, and Moore minimization. The resulting DFAs are total
//! (every state has a transition on every symbol; non-matching runs fall
//! into an absorbing dead state) and canonically numbered by BFS from the
//! start state, so equal regexes over equal alphabets compile to identical
//! tables.

use std::collections::{BTreeMap, BTreeSet, VecDeque};
use std::fmt::Write as _;

use crate::policy::Regex;

/// A total DFA over an interned node-ID alphabet.
#[derive(Debug, Clone, PartialEq, Eq)]
pub struct Dfa {
    /// Sorted node IDs; symbol indices index into this.
    pub alphabet: Vec<String>,
    pub start: usize,
    pub accepting: Vec<bool>,
    /// `dead[s]`: no accepting state is reachable from `s`.
    pub dead: Vec<bool>,
    /// `trans[state][symbol]`.
    pub trans: Vec<Vec<usize>>,
}

impl Dfa {
    pub fn n_states(&self) -> usize {
        self.accepting.len()
    }

    pub fn symbol_index(&self, id: &str) -> Option<usize> {
        self.alphabet.binary_search_by(|a| a.as_str().cmp(id)).ok()
    }

    pub fn step(&self, state: usize, symbol: usize) -> usize {
        self.trans[state][symbol]
    }

    pub fn step_id(&self, state: usize, id: &str) -> usize {
        self.step(state, self.symbol_index(id).expect("symbol not in alphabet"))
    }

    pub fn accepts(&self, word: &[&str]) -> bool {
        let mut s = self.start;
        for id in word {
            s = self.step_id(s, id);
        }
        self.accepting[s]
    }

    /// Plain-text transition table (one line per state), used by the
    /// compile bundle dump.
    pub fn dump(&self) -> String {
        let mut out = String::new();
        for s in 0..self.n_states() {
            let mark = if self.accepting[s] {
                "A"
            } else if self.dead[s] {
                "X"
            } else {
                "."
            };
            let row: Vec<String> = self.trans[s].iter().map(|t| t.to_string()).collect();
            writeln!(out, "{s} {mark} {}", row.join(" ")).unwrap();
        }
        out
    }
}

/// Reverse a regex: the reversal matches exactly the reversed words.
pub fn reverse_regex(r: &Regex) -> Regex {
    match r {
        Regex::Node(_) | Regex::Any => r.clone(),
        Regex::Union(a, b) => {
            Regex::Union(Box::new(reverse_regex(a)), Box::new(reverse_regex(b)))
        }
        Regex::Concat(a, b) => {
            Regex::Concat(Box::new(reverse_regex(b)), Box::new(reverse_regex(a)))
        }
        Regex::Star(x) => Regex::Star(Box::new(reverse_regex(x))),
    }
}

struct Nfa {
    /// `eps[s]`: epsilon successors.
    eps: Vec<Vec<usize>>,
    /// `sym[s]`: (symbol, successor); symbol == usize::MAX means any.
    sym: Vec<Vec<(usize, usize)>>,
    start: usize,
    accept: usize,
}

const ANY: usize = usize::MAX;

impl Nfa {
    fn new_state(&mut self) -> usize {
        self.eps.push(Vec::new());
        self.sym.push(Vec::new());
        self.eps.len() - 1
    }
}

fn thompson(r: &Regex, sym_of: &BTreeMap<&str, usize>, nfa: &mut Nfa) -> (usize, usize) {
    let s = nfa.new_state();
    let t = nfa.new_state();
    match r {
        Regex::Node(id) => {
            let k = *sym_of.get(id.as_str()).expect("regex node not in alphabet");
            nfa.sym[s].push((k, t));
        }
        Regex::Any => nfa.sym[s].push((ANY, t)),
        Regex::Union(a, b) => {
            let (as_, at) = thompson(a, sym_of, nfa);
            let (bs, bt) = thompson(b, sym_of, nfa);
            nfa.eps[s].extend([as_, bs]);
            nfa.eps[at].push(t);
            nfa.eps[bt].push(t);
        }
        Regex::Concat(a, b) => {
            let (as_, at) = thompson(a, sym_of, nfa);
            let (bs, bt) = thompson(b, sym_of, nfa);
            nfa.eps[s].push(as_);
            nfa.eps[at].push(bs);
            nfa.eps[bt].push(t);
        }
        Regex::Star(x) => {
            let (xs, xt) = thompson(x, sym_of, nfa);
            nfa.eps[s].extend([xs, t]);
            nfa.eps[xt].extend([xs, t]);
        }
    }
    (s, t)
}

fn eps_closure(nfa: &Nfa, set: &BTreeSet<usize>) -> BTreeSet<usize> {
    let mut out = set.clone();
    let mut stack: Vec<usize> = set.iter().copied().collect();
    while let Some(s) = stack.pop() {
        for &n in &nfa.eps[s] {
            if out.insert(n) {
                stack.push(n);
            }
        }
    }
    out
}

/// Compile a regex to a minimal total DFA over the given alphabet.
pub fn compile_regex(r: &Regex, alphabet: &BTreeSet<String>) -> Dfa {
    let alpha: Vec<String> = alphabet.iter().cloned().collect();
    let sym_of: BTreeMap<&str, usize> =
        alpha.iter().enumerate().map(|(i, s)| (s.as_str(), i)).collect();

    let mut nfa = Nfa { eps: Vec::new(), sym: Vec::new(), start: 0, accept: 0 };
    let (s, t) = thompson(r, &sym_of, &mut nfa);
    nfa.start = s;
    nfa.accept = t;

    // subset construction; the empty set is the absorbing dead state
    let start_set = eps_closure(&nfa, &BTreeSet::from([nfa.start]));
    let mut index: BTreeMap<BTreeSet<usize>, usize> = BTreeMap::new();
    let mut sets: Vec<BTreeSet<usize>> = Vec::new();
    let mut trans: Vec<Vec<usize>> = Vec::new();
    let mut queue = VecDeque::new();
    index.insert(start_set.clone(), 0);
    sets.push(start_set);
    queue.push_back(0usize);
    while let Some(i) = queue.pop_front() {
        let mut row = Vec::with_capacity(alpha.len());
        for k in 0..alpha.len() {
            let mut next = BTreeSet::new();
            for &s in &sets[i] {
                for &(sym, dst) in &nfa.sym[s] {
                    if sym == k || sym == ANY {
                        next.insert(dst);
                    }
                }
            }
            let next = eps_closure(&nfa, &next);
            let j = *index.entry(next.clone()).or_insert_with(|| {
                sets.push(next);
                queue.push_back(sets.len() - 1);
                sets.len() - 1
            });
            row.push(j);
        }
        trans.push(row);
    }
    let accepting: Vec<bool> = sets.iter().map(|s| s.contains(&nfa.accept)).collect();

    minimize(&Dfa {
        alphabet: alpha,
        start: 0,
        accepting,
        dead: Vec::new(), // recomputed by minimize
        trans,
    })
}

/// Moore partition refinement followed by BFS renumbering from the start
/// state, visiting symbols in alphabet order.
fn minimize(d: &Dfa) -> Dfa {
    let n = d.n_states();
    let k = d.alphabet.len();
    // initial partition: accepting vs not
    let mut class: Vec<usize> = d.accepting.iter().map(|&a| usize::from(a)).collect();
    loop {
        let mut sig_to_class: BTreeMap<(usize, Vec<usize>), usize> = BTreeMap::new();
        let mut next: Vec<usize> = vec![0; n];
        for s in 0..n {
            let sig = (class[s], (0..k).map(|c| class[d.trans[s][c]]).collect::<Vec<_>>());
            let fresh = sig_to_class.len();
            next[s] = *sig_to_class.entry(sig).or_insert(fresh);
        }
        if next == class {
            break;
        }
        class = next;
    }

    // BFS canonical order over classes
    let mut order: BTreeMap<usize, usize> = BTreeMap::new();
    let mut bfs = VecDeque::new();
    let mut repr: Vec<usize> = Vec::new(); // representative original state per new id
    order.insert(class[d.start], 0);
    repr.push(d.start);
    bfs.push_back(d.start);
    while let Some(s) = bfs.pop_front() {
        for c in 0..k {
            let t = d.trans[s][c];
            if !order.contains_key(&class[t]) {
                order.insert(class[t], repr.len());
                repr.push(t);
                bfs.push_back(t);
            }
        }
    }

    let m = repr.len();
    let mut trans = vec![vec![0usize; k]; m];
    let mut accepting = vec![false; m];
    for (new_id, &orig) in repr.iter().enumerate() {
        accepting[new_id] = d.accepting[orig];
        for c in 0..k {
            trans[new_id][c] = order[&class[d.trans[orig][c]]];
        }
    }

    // dead states: cannot reach any accepting state
    let mut alive = accepting.clone();
    loop {
        let mut changed = false;
        for s in 0..m {
            if !alive[s] && trans[s].iter().any(|&t| alive[t]) {
                alive[s] = true;
                changed = true;
            }
        }
        if !changed {
            break;
        }
    }
    let dead: Vec<bool> = alive.iter().map(|&a| !a).collect();

    Dfa { alphabet: d.alphabet.clone(), start: 0, accepting, dead, trans }
}

/// Direct recursive regex matcher, used as an independent oracle in tests
/// and by the path-ranking oracle. Exponential in principle; fine for the
/// short paths it is used on.
pub fn regex_matches(r: &Regex, word: &[&str]) -> bool {
    match r {
        Regex::Node(id) => word.len() == 1 && word[0] == id,
        Regex::Any => word.len() == 1,
        Regex::Union(a, b) => regex_matches(a, word) || regex_matches(b, word),
        Regex::Concat(a, b) => (0..=word.len())
            .any(|i| regex_matches(a, &word[..i]) && regex_matches(b, &word[i..])),
        Regex::Star(x) => {
            if word.is_empty() {
                return true;
            }
            // first chunk must be non-empty to guarantee progress
            (1..=word.len())
                .any(|i| regex_matches(x, &word[..i]) && regex_matches(r, &word[i..]))
        }
    }
}
