use crate::policy::ast::AttrName;
use crate::rank::Rat;

use super::parser::ParseError;

#[derive(Debug, Clone, PartialEq, Eq)]
pub enum Tok {
    Ident(String),
    Number(Rat),
    Attr(AttrName),
    Minimize,
    If,
    Then,
    Else,
    Not,
    And,
    Or,
    Inf,
    Plus,
    Minus,
    Star,
    Dot,
    LParen,
    RParen,
    Comma,
    Le,
    Lt,
    Eof,
}

#[derive(Debug, Clone)]
pub struct Token {
    pub tok: Tok,
    pub line: u32,
    pub col: u32,
}

pub fn lex(text: &str) -> Result<Vec<Token>, ParseError> {
    let mut out = Vec::new();
    let chars: Vec<char> = text.chars().collect();
    let mut i = 0;
    let mut line = 1u32;
    let mut col = 1u32;
    macro_rules! push {
        ($t:expr, $l:expr, $c:expr) => {
            out.push(Token { tok: $t, line: $l, col: $c })
        };
    }
    while i < chars.len() {
        let c = chars[i];
        let (l0, c0) = (line, col);
        match c {
            '\n' => {
                line += 1;
                col = 1;
                i += 1;
            }
            ' ' | '\t' | '\r' => {
                col += 1;
                i += 1;
            }
            '(' => {
                push!(Tok::LParen, l0, c0);
                i += 1;
                col += 1;
            }
            ')' => {
                push!(Tok::RParen, l0, c0);
                i += 1;
                col += 1;
            }
            ',' => {
                push!(Tok::Comma, l0, c0);
                i += 1;
                col += 1;
            }
            '+' => {
                push!(Tok::Plus, l0, c0);
                i += 1;
                col += 1;
            }
            '-' => {
                push!(Tok::Minus, l0, c0);
                i += 1;
                col += 1;
            }
            '*' => {
                push!(Tok::Star, l0, c0);
                i += 1;
                col += 1;
            }
            '∞' => {
                push!(Tok::Inf, l0, c0);
                i += 1;
                col += 1;
            }
            '≤' => {
                push!(Tok::Le, l0, c0);
                i += 1;
                col += 1;
            }
            '<' => {
                if i + 1 < chars.len() && chars[i + 1] == '=' {
                    push!(Tok::Le, l0, c0);
                    i += 2;
                    col += 2;
                } else {
                    push!(Tok::Lt, l0, c0);
                    i += 1;
                    col += 1;
                }
            }
            '.' => {
                // `.8` is a number, a bare `.` is the any-node wildcard
                if i + 1 < chars.len() && chars[i + 1].is_ascii_digit() {
                    let (tok, adv) = lex_number(&chars[i..]);
                    push!(tok, l0, c0);
                    i += adv;
                    col += adv as u32;
                } else {
                    push!(Tok::Dot, l0, c0);
                    i += 1;
                    col += 1;
                }
            }
            _ if c.is_ascii_digit() => {
                let (tok, adv) = lex_number(&chars[i..]);
                push!(tok, l0, c0);
                i += adv;
                col += adv as u32;
            }
            _ if c.is_ascii_alphabetic() || c == '_' => {
                let start = i;
                while i < chars.len() && (chars[i].is_ascii_alphanumeric() || chars[i] == '_') {
                    i += 1;
                    col += 1;
                }
                let word: String = chars[start..i].iter().collect();
                let tok = match word.as_str() {
                    "minimize" => Tok::Minimize,
                    "if" => Tok::If,
                    "then" => Tok::Then,
                    "else" => Tok::Else,
                    "not" => Tok::Not,
                    "and" => Tok::And,
                    "or" => Tok::Or,
                    "inf" => Tok::Inf,
                    "path" => {
                        // must be followed by .util / .len / .lat
                        if i < chars.len() && chars[i] == '.' {
                            let astart = i + 1;
                            let mut j = astart;
                            while j < chars.len() && chars[j].is_ascii_alphanumeric() {
                                j += 1;
                            }
                            let attr: String = chars[astart..j].iter().collect();
                            let a = match attr.as_str() {
                                "util" => AttrName::Util,
                                "len" => AttrName::Len,
                                "lat" => AttrName::Lat,
                                _ => {
                                    return Err(ParseError::Syntax {
                                        line: l0,
                                        col: c0,
                                        msg: format!(
                                            "unknown path attribute `{attr}` (expected util, len, or lat)"
                                        ),
                                    })
                                }
                            };
                            col += (j - i) as u32;
                            i = j;
                            Tok::Attr(a)
                        } else {
                            return Err(ParseError::Syntax {
                                line: l0,
                                col: c0,
                                msg: "`path` must be followed by `.util`, `.len`, or `.lat`".into(),
                            });
                        }
                    }
                    _ => Tok::Ident(word),
                };
                push!(tok, l0, c0);
            }
            _ => {
                return Err(ParseError::Syntax {
                    line: l0,
                    col: c0,
                    msg: format!("unexpected character `{c}`"),
                })
            }
        }
    }
    out.push(Token { tok: Tok::Eof, line, col });
    Ok(out)
}

fn lex_number(chars: &[char]) -> (Tok, usize) {
    let mut i = 0;
    let mut int_part: i64 = 0;
    while i < chars.len() && chars[i].is_ascii_digit() {
        int_part = int_part * 10 + (chars[i] as i64 - '0' as i64);
        i += 1;
    }
    let mut num = int_part;
    let mut denom: i64 = 1;
    if i < chars.len() && chars[i] == '.' && i + 1 < chars.len() && chars[i + 1].is_ascii_digit() {
        i += 1;
        while i < chars.len() && chars[i].is_ascii_digit() {
            num = num * 10 + (chars[i] as i64 - '0' as i64);
            denom *= 10;
            i += 1;
        }
    }
    (Tok::Number(Rat::new(num, denom)), i)
}
