use std::collections::BTreeSet;

use super::ast::{AttrName, BinOp, BoolTest, PolicyAst, RankExpr, Regex};
use super::lexer::{lex, Tok, Token};

#[derive(Debug, Clone, PartialEq, Eq, thiserror::Error)]
pub enum ParseError {
    #[error("syntax error at {line}:{col}: {msg}")]
    Syntax { line: u32, col: u32, msg: String },
    #[error("unknown node ID `{id}` at {line}:{col}")]
    UnknownNode { id: String, line: u32, col: u32 },
    #[error("nested tuple at {line}:{col}: tuple components must be scalar expressions")]
    NestedTuple { line: u32, col: u32 },
    #[error("tuple-valued operand in comparison at {line}:{col}: comparisons are scalar")]
    TupleInCmp { line: u32, col: u32 },
    #[error("tuple-valued operand in arithmetic at {line}:{col}")]
    TupleInArith { line: u32, col: u32 },
    #[error("empty alphabet")]
    EmptyAlphabet,
}

struct Parser<'a> {
    toks: Vec<Token>,
    pos: usize,
    alphabet: &'a BTreeSet<String>,
    regexes: Vec<Regex>,
}

/// Parse a policy of the form `minimize(e)` over the given node-ID alphabet.
pub fn parse_policy(text: &str, alphabet: &BTreeSet<String>) -> Result<PolicyAst, ParseError> {
    if alphabet.is_empty() {
        return Err(ParseError::EmptyAlphabet);
    }
    let toks = lex(text)?;
    let mut p = Parser { toks, pos: 0, alphabet, regexes: Vec::new() };
    p.expect(&Tok::Minimize, "expected `minimize`")?;
    p.expect(&Tok::LParen, "expected `(` after `minimize`")?;
    let root = p.parse_expr()?;
    p.expect(&Tok::RParen, "expected `)` closing `minimize(`")?;
    p.expect(&Tok::Eof, "trailing input after policy")?;
    let arity = root.arity();
    Ok(PolicyAst { root, regexes: p.regexes, arity })
}

impl<'a> Parser<'a> {
    fn peek(&self) -> &Tok {
        &self.toks[self.pos].tok
    }

    fn here(&self) -> (u32, u32) {
        let t = &self.toks[self.pos];
        (t.line, t.col)
    }

    fn bump(&mut self) -> Tok {
        let t = self.toks[self.pos].tok.clone();
        if self.pos + 1 < self.toks.len() {
            self.pos += 1;
        }
        t
    }

    fn err(&self, msg: impl Into<String>) -> ParseError {
        let (line, col) = self.here();
        ParseError::Syntax { line, col, msg: msg.into() }
    }

    fn expect(&mut self, t: &Tok, msg: &str) -> Result<(), ParseError> {
        if self.peek() == t {
            self.bump();
            Ok(())
        } else {
            Err(self.err(msg))
        }
    }

    // expr := term (('+'|'-') term)*
    fn parse_expr(&mut self) -> Result<RankExpr, ParseError> {
        let mut lhs = self.parse_term()?;
        loop {
            let op = match self.peek() {
                Tok::Plus => BinOp::Add,
                Tok::Minus => BinOp::Sub,
                _ => break,
            };
            let (line, col) = self.here();
            self.bump();
            let rhs = self.parse_term()?;
            check_scalar(&lhs, line, col)?;
            check_scalar(&rhs, line, col)?;
            lhs = RankExpr::Bin(op, Box::new(lhs), Box::new(rhs));
        }
        Ok(lhs)
    }

    // term := atom ('*' atom)*
    fn parse_term(&mut self) -> Result<RankExpr, ParseError> {
        let mut lhs = self.parse_atom()?;
        while matches!(self.peek(), Tok::Star) {
            let (line, col) = self.here();
            self.bump();
            let rhs = self.parse_atom()?;
            check_scalar(&lhs, line, col)?;
            check_scalar(&rhs, line, col)?;
            lhs = RankExpr::Bin(BinOp::Mul, Box::new(lhs), Box::new(rhs));
        }
        Ok(lhs)
    }

    fn parse_atom(&mut self) -> Result<RankExpr, ParseError> {
        match self.peek().clone() {
            Tok::Number(n) => {
                self.bump();
                Ok(RankExpr::Const(n))
            }
            Tok::Inf => {
                self.bump();
                Ok(RankExpr::Inf)
            }
            Tok::Attr(a) => {
                self.bump();
                Ok(RankExpr::Attr(a))
            }
            Tok::If => {
                self.bump();
                let test = self.parse_bool()?;
                self.expect(&Tok::Then, "expected `then`")?;
                let t = self.parse_expr()?;
                self.expect(&Tok::Else, "expected `else`")?;
                let e = self.parse_expr()?;
                Ok(RankExpr::If(test, Box::new(t), Box::new(e)))
            }
            Tok::LParen => {
                let (line, col) = self.here();
                self.bump();
                let first = self.parse_expr()?;
                if matches!(self.peek(), Tok::Comma) {
                    // tuple literal; components flattened, no nesting
                    let mut comps = flatten_component(first, line, col)?;
                    while matches!(self.peek(), Tok::Comma) {
                        self.bump();
                        let c = self.parse_expr()?;
                        comps.extend(flatten_component(c, line, col)?);
                    }
                    self.expect(&Tok::RParen, "expected `)` closing tuple")?;
                    Ok(RankExpr::Tuple(comps))
                } else {
                    self.expect(&Tok::RParen, "expected `)`")?;
                    Ok(first)
                }
            }
            _ => Err(self.err("expected a rank expression")),
        }
    }

    fn parse_bool(&mut self) -> Result<BoolTest, ParseError> {
        let mut lhs = self.parse_bool_and()?;
        while matches!(self.peek(), Tok::Or) {
            self.bump();
            let rhs = self.parse_bool_and()?;
            lhs = BoolTest::Or(Box::new(lhs), Box::new(rhs));
        }
        Ok(lhs)
    }

    fn parse_bool_and(&mut self) -> Result<BoolTest, ParseError> {
        let mut lhs = self.parse_bool_atom()?;
        while matches!(self.peek(), Tok::And) {
            self.bump();
            let rhs = self.parse_bool_atom()?;
            lhs = BoolTest::And(Box::new(lhs), Box::new(rhs));
        }
        Ok(lhs)
    }

    fn parse_bool_atom(&mut self) -> Result<BoolTest, ParseError> {
        match self.peek() {
            Tok::Not => {
                self.bump();
                let inner = self.parse_bool_atom()?;
                Ok(BoolTest::Not(Box::new(inner)))
            }
            // an identifier or `.` can only start a regex
            Tok::Ident(_) | Tok::Dot => self.parse_regex_test(),
            // `(` is ambiguous between a grouped regex and a scalar
            // comparison operand; try the regex first and fall back
            Tok::LParen => {
                let save = self.pos;
                let save_regexes = self.regexes.len();
                match self.parse_regex_test() {
                    Ok(t) if self.at_bool_follow() => Ok(t),
                    _ => {
                        self.pos = save;
                        self.regexes.truncate(save_regexes);
                        self.parse_cmp()
                    }
                }
            }
            _ => self.parse_cmp(),
        }
    }

    fn at_bool_follow(&self) -> bool {
        matches!(self.peek(), Tok::Then | Tok::Or | Tok::And | Tok::RParen)
    }

    fn parse_cmp(&mut self) -> Result<BoolTest, ParseError> {
        let (line, col) = self.here();
        let lhs = self.parse_expr()?;
        let strict = match self.peek() {
            Tok::Le => false,
            Tok::Lt => true,
            _ => return Err(self.err("expected `<=` or `<` in comparison")),
        };
        self.bump();
        let rhs = self.parse_expr()?;
        if lhs.arity() != 1 || rhs.arity() != 1 {
            return Err(ParseError::TupleInCmp { line, col });
        }
        Ok(BoolTest::Cmp { lhs: Box::new(lhs), rhs: Box::new(rhs), strict })
    }

    fn parse_regex_test(&mut self) -> Result<BoolTest, ParseError> {
        let r = self.parse_regex()?;
        let idx = self.intern_regex(&r);
        Ok(BoolTest::Regex(idx, r))
    }

    fn intern_regex(&mut self, r: &Regex) -> usize {
        if let Some(i) = self.regexes.iter().position(|x| x == r) {
            i
        } else {
            self.regexes.push(r.clone());
            self.regexes.len() - 1
        }
    }

    // regex := concat ('+' concat)*
    fn parse_regex(&mut self) -> Result<Regex, ParseError> {
        let mut lhs = self.parse_regex_concat()?;
        while matches!(self.peek(), Tok::Plus) {
            self.bump();
            let rhs = self.parse_regex_concat()?;
            lhs = Regex::Union(Box::new(lhs), Box::new(rhs));
        }
        Ok(lhs)
    }

    fn parse_regex_concat(&mut self) -> Result<Regex, ParseError> {
        let mut parts = vec![self.parse_regex_post()?];
        while matches!(self.peek(), Tok::Ident(_) | Tok::Dot | Tok::LParen) {
            parts.push(self.parse_regex_post()?);
        }
        let mut it = parts.into_iter();
        let first = it.next().unwrap();
        Ok(it.fold(first, |a, b| Regex::Concat(Box::new(a), Box::new(b))))
    }

    fn parse_regex_post(&mut self) -> Result<Regex, ParseError> {
        let mut r = self.parse_regex_atom()?;
        while matches!(self.peek(), Tok::Star) {
            self.bump();
            r = Regex::Star(Box::new(r));
        }
        Ok(r)
    }

    fn parse_regex_atom(&mut self) -> Result<Regex, ParseError> {
        match self.peek().clone() {
            Tok::Dot => {
                self.bump();
                Ok(Regex::Any)
            }
            Tok::Ident(id) => {
                let (line, col) = self.here();
                self.bump();
                self.ident_to_regex(&id, line, col)
            }
            Tok::LParen => {
                self.bump();
                let r = self.parse_regex()?;
                self.expect(&Tok::RParen, "expected `)` closing regex group")?;
                Ok(r)
            }
            _ => Err(self.err("expected a regex atom")),
        }
    }

    /// Resolve an identifier against the alphabet. `ABD` over alphabet
    /// {A,B,D} means the concatenation A B D; an identifier that is itself
    /// an alphabet symbol is used whole.
    fn ident_to_regex(&self, id: &str, line: u32, col: u32) -> Result<Regex, ParseError> {
        if self.alphabet.contains(id) {
            return Ok(Regex::Node(id.to_string()));
        }
        match split_symbols(id, self.alphabet) {
            Some(parts) => {
                let mut it = parts.into_iter().map(Regex::Node);
                let first = it.next().unwrap();
                Ok(it.fold(first, |a, b| Regex::Concat(Box::new(a), Box::new(b))))
            }
            None => Err(ParseError::UnknownNode { id: id.to_string(), line, col }),
        }
    }
}

/// Split a run-together identifier like `SCEFD` into alphabet symbols,
/// longest match first with backtracking.
fn split_symbols(s: &str, alphabet: &BTreeSet<String>) -> Option<Vec<String>> {
    if s.is_empty() {
        return Some(Vec::new());
    }
    // longest candidates first
    let mut cands: Vec<&String> = alphabet.iter().filter(|a| s.starts_with(a.as_str())).collect();
    cands.sort_by_key(|a| std::cmp::Reverse(a.len()));
    for c in cands {
        if let Some(mut rest) = split_symbols(&s[c.len()..], alphabet) {
            rest.insert(0, c.clone());
            return Some(rest);
        }
    }
    None
}

fn check_scalar(e: &RankExpr, line: u32, col: u32) -> Result<(), ParseError> {
    if e.arity() != 1 {
        Err(ParseError::TupleInArith { line, col })
    } else {
        Ok(())
    }
}

/// A tuple component must be scalar; a literal tuple is spliced in
/// (flattening), anything else tuple-valued is rejected.
fn flatten_component(e: RankExpr, line: u32, col: u32) -> Result<Vec<RankExpr>, ParseError> {
    match e {
        RankExpr::Tuple(cs) => Ok(cs),
        e if e.arity() == 1 => Ok(vec![e]),
        _ => Err(ParseError::NestedTuple { line, col }),
    }
}

impl AttrName {
    pub fn all() -> [AttrName; 3] {
        [AttrName::Util, AttrName::Len, AttrName::Lat]
    }
}
