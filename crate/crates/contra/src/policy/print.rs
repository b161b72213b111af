use std::fmt::Write;

use super::ast::{BinOp, BoolTest, PolicyAst, RankExpr, Regex};

/// Render a policy back to parseable text. Parsing the output yields a
/// structurally equal AST (round-trip property).
pub fn pretty_print(p: &PolicyAst) -> String {
    let mut s = String::from("minimize(");
    write_expr(&mut s, &p.root);
    s.push(')');
    s
}

fn write_expr(out: &mut String, e: &RankExpr) {
    match e {
        RankExpr::Const(n) => {
            if n.is_integer() {
                write!(out, "{}", n.numer()).unwrap();
            } else {
                // decimal if the denominator is a power of ten, else a/b is
                // not representable; fall back to explicit division-free form
                write!(out, "{}", rat_to_decimal(n)).unwrap();
            }
        }
        RankExpr::Inf => out.push_str("inf"),
        RankExpr::Attr(a) => write!(out, "path.{}", a.as_str()).unwrap(),
        RankExpr::Bin(op, l, r) => {
            out.push('(');
            write_expr(out, l);
            out.push_str(match op {
                BinOp::Add => " + ",
                BinOp::Sub => " - ",
                BinOp::Mul => " * ",
            });
            write_expr(out, r);
            out.push(')');
        }
        RankExpr::If(t, a, b) => {
            // parenthesized so `else x + y` can't be re-parsed greedily when
            // the `if` sits inside arithmetic
            out.push_str("(if ");
            write_test(out, t);
            out.push_str(" then ");
            write_expr(out, a);
            out.push_str(" else ");
            write_expr(out, b);
            out.push(')');
        }
        RankExpr::Tuple(cs) => {
            out.push('(');
            for (i, c) in cs.iter().enumerate() {
                if i > 0 {
                    out.push_str(", ");
                }
                write_expr(out, c);
            }
            out.push(')');
        }
    }
}

fn rat_to_decimal(n: &crate::rank::Rat) -> String {
    // parsed decimal literals reduce to denominators of the form 2^a * 5^b
    let mut denom = *n.denom();
    let mut twos = 0u32;
    let mut fives = 0u32;
    while denom % 2 == 0 {
        denom /= 2;
        twos += 1;
    }
    while denom % 5 == 0 {
        denom /= 5;
        fives += 1;
    }
    debug_assert_eq!(denom, 1, "non-decimal constant {n}");
    let digits = twos.max(fives);
    let scale = 10i64.pow(digits);
    let scaled = n.numer() * (scale / n.denom());
    let int = scaled / scale;
    let frac = (scaled % scale).abs();
    format!("{int}.{frac:0width$}", width = digits as usize)
}

fn write_test(out: &mut String, t: &BoolTest) {
    match t {
        BoolTest::Regex(_, r) => {
            out.push('(');
            write_regex(out, r);
            out.push(')');
        }
        BoolTest::Cmp { lhs, rhs, strict } => {
            write_expr(out, lhs);
            out.push_str(if *strict { " < " } else { " <= " });
            write_expr(out, rhs);
        }
        BoolTest::Not(x) => {
            out.push_str("not ");
            write_test(out, x);
        }
        BoolTest::Or(a, b) => {
            write_test(out, a);
            out.push_str(" or ");
            write_test(out, b);
        }
        BoolTest::And(a, b) => {
            write_test(out, a);
            out.push_str(" and ");
            write_test(out, b);
        }
    }
}

fn write_regex(out: &mut String, r: &Regex) {
    match r {
        Regex::Node(id) => out.push_str(id),
        Regex::Any => out.push('.'),
        Regex::Union(a, b) => {
            out.push('(');
            write_regex(out, a);
            out.push_str(" + ");
            write_regex(out, b);
            out.push(')');
        }
        Regex::Concat(a, b) => {
            write_regex(out, a);
            out.push(' ');
            write_regex(out, b);
        }
        Regex::Star(x) => match **x {
            Regex::Node(_) | Regex::Any => {
                write_regex(out, x);
                out.push('*');
            }
            _ => {
                out.push('(');
                write_regex(out, x);
                out.push_str(")*");
            }
        },
    }
}

#[cfg(test)]
mod tests {
    use std::collections::BTreeSet;

    use super::*;
    use crate::policy::parse_policy;

    fn alpha(ids: &[&str]) -> BTreeSet<String> {
        ids.iter().map(|s| s.to_string()).collect()
    }

    #[test]
    fn round_trip_selected_policies() {
        let a = alpha(&["A", "B", "C", "D", "W", "X", "Y", "F1", "F2"]);
        let texts = [
            "minimize(path.len)",
            "minimize(path.util)",
            "minimize((path.util, path.len))",
            "minimize((path.len, path.util))",
            "minimize(if .* (F1 + F2) .* then path.util else inf)",
            "minimize(if .* X Y .* then path.util else inf)",
            "minimize((if .* X Y .* then 10 else 0) + path.len)",
            "minimize(if X .* then path.util else path.lat)",
            "minimize(if path.util < .8 then (1, 0, path.util) else (2, path.len, path.util))",
        ];
        for t in texts {
            let p1 = parse_policy(t, &a).unwrap();
            let printed = pretty_print(&p1);
            let p2 = parse_policy(&printed, &a).unwrap();
            assert_eq!(p1, p2, "round trip failed for {t}: printed as {printed}");
        }
    }
}
