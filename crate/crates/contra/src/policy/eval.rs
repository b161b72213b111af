use crate::rank::{Ext, Rat, RankValue};

use super::ast::{AttrName, BinOp, BoolTest, PolicyAst, RankExpr};

/// Concrete attributes of a path.
#[derive(Debug, Clone, PartialEq, Eq)]
pub struct PathAttributes {
    /// Max link utilization along the path, in [0,1]. 0 for the empty path.
    pub util: Rat,
    /// Hop count. 0 for the empty path.
    pub len: u64,
    /// Summed link latency. 0 for the empty path.
    pub lat: Rat,
}

impl PathAttributes {
    pub fn empty() -> Self {
        PathAttributes { util: Rat::from_integer(0), len: 0, lat: Rat::from_integer(0) }
    }

    pub fn get(&self, a: AttrName) -> Ext {
        match a {
            AttrName::Util => Ext::Finite(self.util),
            AttrName::Len => Ext::from_int(self.len as i64),
            AttrName::Lat => Ext::Finite(self.lat),
        }
    }
}

#[derive(Debug, Clone, PartialEq, Eq, thiserror::Error)]
pub enum EvalError {
    #[error("subtraction of infinity from a finite rank")]
    SubtractInf,
    #[error("regex verdict missing for regex index {0}")]
    MissingVerdict(usize),
}

/// Side-channel flags raised during evaluation.
#[derive(Debug, Clone, Copy, Default)]
pub struct EvalFlags {
    /// A subtraction produced a negative component and was clamped to 0.
    pub clamped: bool,
}

/// Evaluate a policy over concrete attributes. Regex verdicts are supplied
/// externally (at runtime they are encoded by product-graph state), indexed
/// by the policy's regex list.
pub fn evaluate_rank(
    policy: &PolicyAst,
    attrs: &PathAttributes,
    verdicts: &[bool],
    flags: &mut EvalFlags,
) -> Result<RankValue, EvalError> {
    if verdicts.len() < policy.regexes.len() {
        return Err(EvalError::MissingVerdict(verdicts.len()));
    }
    let v = eval_expr(&policy.root, attrs, verdicts, flags)?;
    Ok(v.pad_to(policy.arity))
}

/// Evaluate a bare rank expression (used for decomposed subpolicy ranks).
pub fn eval_expr(
    e: &RankExpr,
    attrs: &PathAttributes,
    verdicts: &[bool],
    flags: &mut EvalFlags,
) -> Result<RankValue, EvalError> {
    match e {
        RankExpr::Const(n) => Ok(RankValue::scalar(Ext::Finite(*n))),
        RankExpr::Inf => Ok(RankValue::scalar(Ext::Inf)),
        RankExpr::Attr(a) => Ok(RankValue::scalar(attrs.get(*a))),
        RankExpr::Bin(op, l, r) => {
            let lv = eval_scalar(l, attrs, verdicts, flags)?;
            let rv = eval_scalar(r, attrs, verdicts, flags)?;
            let out = match op {
                BinOp::Add => lv.add(rv),
                BinOp::Mul => lv.mul(rv),
                BinOp::Sub => {
                    let (res, clamped) = lv.sub(rv).map_err(|_| EvalError::SubtractInf)?;
                    if clamped {
                        flags.clamped = true;
                    }
                    res
                }
            };
            Ok(RankValue::scalar(out))
        }
        RankExpr::If(test, t, el) => {
            let arity = e.arity();
            let branch = if eval_test(test, attrs, verdicts, flags)? { t } else { el };
            Ok(eval_expr(branch, attrs, verdicts, flags)?.pad_to(arity))
        }
        RankExpr::Tuple(cs) => {
            let mut out = Vec::with_capacity(cs.len());
            for c in cs {
                out.push(eval_scalar(c, attrs, verdicts, flags)?);
            }
            Ok(RankValue(out))
        }
    }
}

fn eval_scalar(
    e: &RankExpr,
    attrs: &PathAttributes,
    verdicts: &[bool],
    flags: &mut EvalFlags,
) -> Result<Ext, EvalError> {
    let v = eval_expr(e, attrs, verdicts, flags)?;
    debug_assert_eq!(v.arity(), 1, "scalar context enforced at parse time");
    Ok(v.0[0])
}

fn eval_test(
    t: &BoolTest,
    attrs: &PathAttributes,
    verdicts: &[bool],
    flags: &mut EvalFlags,
) -> Result<bool, EvalError> {
    match t {
        BoolTest::Regex(i, _) => {
            verdicts.get(*i).copied().ok_or(EvalError::MissingVerdict(*i))
        }
        BoolTest::Cmp { lhs, rhs, strict } => {
            let l = eval_scalar(lhs, attrs, verdicts, flags)?;
            let r = eval_scalar(rhs, attrs, verdicts, flags)?;
            Ok(if *strict { l < r } else { l <= r })
        }
        BoolTest::Not(x) => Ok(!eval_test(x, attrs, verdicts, flags)?),
        BoolTest::Or(a, b) => {
            Ok(eval_test(a, attrs, verdicts, flags)? || eval_test(b, attrs, verdicts, flags)?)
        }
        BoolTest::And(a, b) => {
            Ok(eval_test(a, attrs, verdicts, flags)? && eval_test(b, attrs, verdicts, flags)?)
        }
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

    fn attrs(util: Rat, len: u64, lat: Rat) -> PathAttributes {
        PathAttributes { util, len, lat }
    }

    #[test]
    fn direct_attribute_read() {
        let p = parse_policy("minimize(path.util)", &alpha(&["A"])).unwrap();
        let mut f = EvalFlags::default();
        let v = evaluate_rank(
            &p,
            &attrs(Rat::new(3, 10), 0, Rat::from_integer(0)),
            &[],
            &mut f,
        )
        .unwrap();
        assert_eq!(v, RankValue::scalar(Ext::Finite(Rat::new(3, 10))));
    }

    #[test]
    fn waypoint_unmatched_is_inf() {
        let p = parse_policy("minimize(if .* W .* then 0 else inf)", &alpha(&["A", "W"]))
            .unwrap();
        let mut f = EvalFlags::default();
        let v = evaluate_rank(&p, &PathAttributes::empty(), &[false], &mut f).unwrap();
        assert_eq!(v, RankValue::scalar(Ext::Inf));
    }

    #[test]
    fn preferred_path_matched_gives_zero() {
        let p = parse_policy(
            "minimize(if (A B D) then 0 else path.util)",
            &alpha(&["A", "B", "C", "D"]),
        )
        .unwrap();
        let mut f = EvalFlags::default();
        let v = evaluate_rank(
            &p,
            &attrs(Rat::new(9, 10), 3, Rat::from_integer(0)),
            &[true],
            &mut f,
        )
        .unwrap();
        assert_eq!(v, RankValue::scalar(Ext::zero()));
    }

    #[test]
    fn weighted_link_policy() {
        // P7: (if .*XY.* then 10 else 0) + path.len, matched, len=3 -> 13
        let p = parse_policy(
            "minimize((if .*XY.* then 10 else 0) + path.len)",
            &alpha(&["X", "Y", "Z"]),
        )
        .unwrap();
        let mut f = EvalFlags::default();
        let v = evaluate_rank(
            &p,
            &attrs(Rat::from_integer(0), 3, Rat::from_integer(0)),
            &[true],
            &mut f,
        )
        .unwrap();
        assert_eq!(v, RankValue::scalar(Ext::from_int(13)));
    }

    #[test]
    fn clamped_subtraction_sets_flag() {
        let p = parse_policy("minimize(1 - path.len)", &alpha(&["A"])).unwrap();
        let mut f = EvalFlags::default();
        let v = evaluate_rank(
            &p,
            &attrs(Rat::from_integer(0), 5, Rat::from_integer(0)),
            &[],
            &mut f,
        )
        .unwrap();
        assert_eq!(v, RankValue::scalar(Ext::zero()));
        assert!(f.clamped);
    }

    #[test]
    fn branch_padding_keeps_arity_fixed() {
        let p = parse_policy(
            "minimize(if path.util < .8 then (1, 0, path.util) else inf)",
            &alpha(&["A"]),
        )
        .unwrap();
        assert_eq!(p.arity, 3);
        let mut f = EvalFlags::default();
        let hi = evaluate_rank(
            &p,
            &attrs(Rat::new(9, 10), 1, Rat::from_integer(0)),
            &[],
            &mut f,
        )
        .unwrap();
        assert_eq!(hi.arity(), 3);
        assert!(hi.is_inf());
    }

    #[test]
    fn subtract_inf_is_error() {
        let p = parse_policy("minimize(1 - inf)", &alpha(&["A"])).unwrap();
        let mut f = EvalFlags::default();
        let err = evaluate_rank(&p, &PathAttributes::empty(), &[], &mut f).unwrap_err();
        assert_eq!(err, EvalError::SubtractInf);
    }
}
