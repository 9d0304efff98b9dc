//! Pretty-printer producing source that reparses to the same AST.

use std::fmt::Write;

use super::ast::{Clause, Expr, FunDef, Module, Pattern};

// Binding levels: 0 = bind/send, 1 = comparison, 2 = additive,
// 3 = multiplicative, 4 = primary.
const LVL_BIND: u8 = 0;
const LVL_PRIMARY: u8 = 4;

pub fn print_module(m: &Module) -> String {
    let mut out = String::new();
    for (i, def) in m.iter().enumerate() {
        if i > 0 {
            out.push('\n');
        }
        print_fundef(&mut out, def);
    }
    out
}

fn print_fundef(out: &mut String, def: &FunDef) {
    let _ = write!(out, "{}({}) ->", def.name, def.params.join(", "));
    print_body(out, &def.body, 1);
    out.push_str(".\n");
}

fn indent(out: &mut String, depth: usize) {
    out.push('\n');
    for _ in 0..depth {
        out.push_str("    ");
    }
}

/// Prints a sequence body, one expression per line.
fn print_body(out: &mut String, body: &Expr, depth: usize) {
    let mut cur = body;
    loop {
        indent(out, depth);
        match cur {
            Expr::Seq(first, rest) => {
                print_expr(out, first, LVL_BIND, depth);
                out.push(',');
                cur = rest;
            }
            last => {
                print_expr(out, last, LVL_BIND, depth);
                return;
            }
        }
    }
}

pub fn print_expr_string(e: &Expr) -> String {
    let mut out = String::new();
    print_expr(&mut out, e, LVL_BIND, 0);
    out
}

fn print_expr(out: &mut String, e: &Expr, min_level: u8, depth: usize) {
    let level = expr_level(e);
    let paren = level < min_level;
    if paren {
        out.push('(');
    }
    match e {
        Expr::Int(n) => {
            let _ = write!(out, "{n}");
        }
        Expr::Atom(a) | Expr::Var(a) => out.push_str(a),
        Expr::Tuple(items) => {
            out.push('{');
            print_list(out, items, depth);
            out.push('}');
        }
        Expr::Nil | Expr::Cons(..) => {
            out.push('[');
            let mut cur = e;
            let mut first = true;
            loop {
                match cur {
                    Expr::Nil => break,
                    Expr::Cons(h, t) => {
                        if !first {
                            out.push_str(", ");
                        }
                        first = false;
                        print_expr(out, h, LVL_BIND, depth);
                        cur = t;
                    }
                    tail => {
                        out.push_str(" | ");
                        print_expr(out, tail, LVL_BIND, depth);
                        break;
                    }
                }
            }
            out.push(']');
        }
        Expr::BinOp(op, l, r) => {
            let p = op.precedence();
            // Comparisons are non-associative; arithmetic is left-associative.
            let left_min = if p == 1 { 2 } else { p };
            print_expr(out, l, left_min, depth);
            let _ = write!(out, " {} ", op.symbol());
            print_expr(out, r, p + 1, depth);
        }
        Expr::Bind(p, rhs) => {
            print_pattern(out, p);
            out.push_str(" = ");
            print_expr(out, rhs, LVL_BIND, depth);
        }
        Expr::Seq(..) => {
            // Only reachable for hand-built trees; parenthesised sequences
            // are not part of the grammar, so emit the flattened body.
            out.push_str("case 0 of _ ->");
            print_body(out, e, depth + 1);
            indent(out, depth);
            out.push_str("end");
        }
        Expr::Call(name, args) => {
            out.push_str(name);
            out.push('(');
            print_list(out, args, depth);
            out.push(')');
        }
        Expr::SelfPid => out.push_str("self()"),
        Expr::Spawn(name, args) => {
            let _ = write!(out, "spawn({name}, [");
            print_list(out, args, depth);
            out.push_str("])");
        }
        Expr::Send(target, msg) => {
            print_expr(out, target, 1, depth);
            out.push_str(" ! ");
            print_expr(out, msg, LVL_BIND, depth);
        }
        Expr::Receive(clauses) => {
            out.push_str("receive");
            print_clauses(out, clauses, depth);
            indent(out, depth);
            out.push_str("end");
        }
        Expr::Case(scrutinee, clauses) => {
            out.push_str("case ");
            print_expr(out, scrutinee, LVL_BIND, depth);
            out.push_str(" of");
            print_clauses(out, clauses, depth);
            indent(out, depth);
            out.push_str("end");
        }
    }
    if paren {
        out.push(')');
    }
}

fn expr_level(e: &Expr) -> u8 {
    match e {
        Expr::Bind(..) | Expr::Send(..) => LVL_BIND,
        Expr::BinOp(op, ..) => op.precedence(),
        // A negative literal on the left of a binary operator still reads
        // back as a literal, so it can stay unparenthesised.
        _ => LVL_PRIMARY,
    }
}

fn print_list(out: &mut String, items: &[Expr], depth: usize) {
    for (i, item) in items.iter().enumerate() {
        if i > 0 {
            out.push_str(", ");
        }
        print_expr(out, item, LVL_BIND, depth);
    }
}

fn print_clauses(out: &mut String, clauses: &[Clause], depth: usize) {
    for (i, clause) in clauses.iter().enumerate() {
        indent(out, depth + 1);
        print_pattern(out, &clause.pattern);
        out.push_str(" ->");
        print_body(out, &clause.body, depth + 2);
        if i + 1 < clauses.len() {
            out.push(';');
        }
    }
}

pub fn print_pattern_string(p: &Pattern) -> String {
    let mut out = String::new();
    print_pattern(&mut out, p);
    out
}

fn print_pattern(out: &mut String, p: &Pattern) {
    match p {
        Pattern::Wildcard => out.push('_'),
        Pattern::Var(v) | Pattern::Atom(v) => out.push_str(v),
        Pattern::Int(n) => {
            let _ = write!(out, "{n}");
        }
        Pattern::Tuple(items) => {
            out.push('{');
            for (i, item) in items.iter().enumerate() {
                if i > 0 {
                    out.push_str(", ");
                }
                print_pattern(out, item);
            }
            out.push('}');
        }
        Pattern::Nil | Pattern::Cons(..) => {
            out.push('[');
            let mut cur = p;
            let mut first = true;
            loop {
                match cur {
                    Pattern::Nil => break,
                    Pattern::Cons(h, t) => {
                        if !first {
                            out.push_str(", ");
                        }
                        first = false;
                        print_pattern(out, h);
                        cur = t;
                    }
                    tail => {
                        out.push_str(" | ");
                        print_pattern(out, tail);
                        break;
                    }
                }
            }
            out.push(']');
        }
    }
}
