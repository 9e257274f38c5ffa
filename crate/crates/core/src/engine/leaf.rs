//! Executable subset of ensures clauses, for methods without an interaction body.

use crate::kernel::expr::{Expr, ExprKind};
use crate::kernel::theory::{Interp, Native, Theory};
use crate::kernel::value::Value;
use crate::roles::post_value_target;

/// One constructive conjunct of an ensures clause.
#[derive(Clone, Debug)]
pub enum LeafStep<'e> {
    /// `x' = t`, with `t` read in the pre state.
    SetValue { object: &'e Expr, value: &'e Expr },
    /// `result = t`
    Result(&'e Expr),
    /// `x in rel(h)` or `x notin rel(h)`
    Link {
        rel: String,
        holder: &'e Expr,
        target: &'e Expr,
        add: bool,
    },
    /// `inv(x) = h` where `inv` is the inverse of `rel`.
    Attach {
        rel: String,
        target: &'e Expr,
        holder: &'e Expr,
    },
    /// `forall v (v in s => steps)`
    ForEach {
        var: String,
        set: &'e Expr,
        steps: Vec<LeafStep<'e>>,
    },
}

fn step<'e>(th: &Theory, c: &'e Expr) -> Result<Option<LeafStep<'e>>, String> {
    match &c.kind {
        ExprKind::Lit(Value::Bool(true)) => return Ok(None),
        ExprKind::Eq(l, r) => {
            if let Some(object) = post_value_target(th, l) {
                return Ok(Some(LeafStep::SetValue { object, value: r }));
            }
            if matches!(&l.kind, ExprKind::Var(v) if v == "result") {
                return Ok(Some(LeafStep::Result(r)));
            }
            if let ExprKind::Op(id, args) = &l.kind {
                if let Interp::Inverse(rel) = th.op(*id).interp {
                    return Ok(Some(LeafStep::Attach {
                        rel: th.op(rel).name.clone(),
                        target: &args[0],
                        holder: r,
                    }));
                }
            }
        }
        ExprKind::Op(id, args) if args.len() == 2 => {
            let add = match th.op(*id).interp {
                Interp::Native(Native::In) => Some(true),
                Interp::Native(Native::NotIn) => Some(false),
                _ => None,
            };
            if let (Some(add), ExprKind::Op(rel, holder)) = (add, &args[1].kind) {
                if th.op(*rel).interp == Interp::Relation && holder.len() == 1 {
                    return Ok(Some(LeafStep::Link {
                        rel: th.op(*rel).name.clone(),
                        holder: &holder[0],
                        target: &args[0],
                        add,
                    }));
                }
            }
        }
        ExprKind::Forall(vars, body) if vars.len() == 1 => {
            if let ExprKind::Implies(g, inner) = &body.kind {
                if let ExprKind::Op(id, args) = &g.kind {
                    let is_member = th.op(*id).interp == Interp::Native(Native::In)
                        && matches!(&args[0].kind, ExprKind::Var(v) if *v == vars[0].0);
                    if is_member {
                        return Ok(Some(LeafStep::ForEach {
                            var: vars[0].0.clone(),
                            set: &args[1],
                            steps: leaf_steps(th, inner)?,
                        }));
                    }
                }
            }
        }
        _ => {}
    }
    Err(format!("`{}` is not of an executable form", c.show(th)))
}

/// Splits an ensures clause into executable steps, or names the first conjunct that is not.
pub fn leaf_steps<'e>(th: &Theory, ensures: &'e Expr) -> Result<Vec<LeafStep<'e>>, String> {
    let mut out = Vec::new();
    for c in ensures.conjuncts() {
        if let Some(s) = step(th, c)? {
            out.push(s);
        }
    }
    Ok(out)
}
