//! Canonical pretty-printer. Output re-parses to a structurally equal tree.

use std::fmt::Write;

use super::ast::*;

fn fmt_real(r: f64) -> String {
    // Debug formatting is the shortest round-tripping representation.
    let s = format!("{r:?}");
    if r < 0.0 {
        format!("({s})")
    } else {
        s
    }
}

fn fmt_value(v: Value) -> String {
    match v {
        Value::Bool(b) => b.to_string(),
        Value::Real(r) => format!("{r:?}"),
    }
}

pub fn print_expr(e: &Expr) -> String {
    let mut out = String::new();
    write_expr(&mut out, e);
    out
}

fn write_expr(out: &mut String, e: &Expr) {
    match e {
        Expr::Bool(b) => out.push_str(if *b { "true" } else { "false" }),
        Expr::Real(r) => out.push_str(&fmt_real(*r)),
        Expr::Term(t, _) => write!(out, "{t}").unwrap(),
        Expr::Apply { name, args, .. } => {
            out.push_str(name);
            if !args.is_empty() {
                out.push('(');
                for (i, a) in args.iter().enumerate() {
                    if i > 0 {
                        out.push_str(", ");
                    }
                    write!(out, "{a}").unwrap();
                }
                out.push(')');
            }
        }
        Expr::Unary { op, arg } => {
            out.push_str(match op {
                UnaryOp::Not => "~(",
                UnaryOp::Neg => "-(",
            });
            write_expr(out, arg);
            out.push(')');
        }
        Expr::Binary { op, lhs, rhs } => {
            out.push('(');
            write_expr(out, lhs);
            write!(out, " {} ", op.symbol()).unwrap();
            write_expr(out, rhs);
            out.push(')');
        }
        Expr::If {
            cond,
            then_branch,
            else_branch,
        } => {
            out.push_str("(if (");
            write_expr(out, cond);
            out.push_str(") then (");
            write_expr(out, then_branch);
            out.push_str(") else (");
            write_expr(out, else_branch);
            out.push_str("))");
        }
        Expr::Aggregate {
            op, var, ty, body, ..
        } => {
            write!(out, "({}{{{var} : {ty}}} [", op.keyword()).unwrap();
            write_expr(out, body);
            out.push_str("])");
        }
        Expr::Bernoulli(p) => {
            out.push_str("Bernoulli(");
            write_expr(out, p);
            out.push(')');
        }
        Expr::KronDelta(p) => {
            out.push_str("KronDelta(");
            write_expr(out, p);
            out.push(')');
        }
    }
}

pub fn print_domain(d: &DomainAst) -> String {
    let mut out = String::new();
    writeln!(out, "domain {} {{", d.name).unwrap();
    if !d.requirements.is_empty() {
        writeln!(out, "    requirements = {{ {} }};", d.requirements.join(", ")).unwrap();
    }
    out.push_str("    types {\n");
    for t in &d.types {
        writeln!(out, "        {} : object;", t.name).unwrap();
    }
    out.push_str("    };\n    pvariables {\n");
    for p in &d.pvariables {
        let params = if p.params.is_empty() {
            String::new()
        } else {
            format!("({})", p.params.join(", "))
        };
        writeln!(
            out,
            "        {}{} : {{ {}, {}, default = {} }};",
            p.name,
            params,
            p.kind.keyword(),
            p.range.keyword(),
            fmt_value(p.default)
        )
        .unwrap();
    }
    out.push_str("    };\n    cpfs {\n");
    for c in &d.cpfs {
        let params = if c.params.is_empty() {
            String::new()
        } else {
            format!("({})", c.params.join(", "))
        };
        writeln!(out, "        {}'{} = {};", c.name, params, print_expr(&c.expr)).unwrap();
    }
    out.push_str("    };\n");
    writeln!(out, "    reward = {};", print_expr(&d.reward)).unwrap();
    out.push_str("}\n");
    out
}

fn write_assignments(out: &mut String, block: &str, items: &[Assignment]) {
    writeln!(out, "    {block} {{").unwrap();
    for a in items {
        let args = if a.args.is_empty() {
            String::new()
        } else {
            format!("({})", a.args.join(", "))
        };
        writeln!(out, "        {}{} = {};", a.name, args, fmt_value(a.value)).unwrap();
    }
    out.push_str("    };\n");
}

fn write_objects(out: &mut String, objects: &[ObjectDecl]) {
    out.push_str("    objects {\n");
    for d in objects {
        writeln!(out, "        {} : {{ {} }};", d.class, d.objects.join(", ")).unwrap();
    }
    out.push_str("    };\n");
}

pub fn print_instance(i: &InstanceAst) -> String {
    let mut out = String::new();
    if let Some(nf) = &i.non_fluents_name {
        writeln!(out, "non-fluents {nf} {{").unwrap();
        writeln!(out, "    domain = {};", i.domain).unwrap();
        write_objects(&mut out, &i.objects);
        write_assignments(&mut out, "non-fluents", &i.non_fluents);
        out.push_str("}\n\n");
    }
    writeln!(out, "instance {} {{", i.name).unwrap();
    writeln!(out, "    domain = {};", i.domain).unwrap();
    if let Some(nf) = &i.non_fluents_name {
        writeln!(out, "    non-fluents = {nf};").unwrap();
    } else if !i.objects.is_empty() {
        write_objects(&mut out, &i.objects);
    }
    write_assignments(&mut out, "init-state", &i.init_state);
    match i.max_nondef_actions {
        Some(NonDefActions::Count(n)) => writeln!(out, "    max-nondef-actions = {n};").unwrap(),
        Some(NonDefActions::Unbounded) => out.push_str("    max-nondef-actions = pos-inf;\n"),
        None => {}
    }
    writeln!(out, "    horizon = {};", i.horizon).unwrap();
    writeln!(out, "    discount = {:?};", i.discount).unwrap();
    out.push_str("}\n");
    out
}
