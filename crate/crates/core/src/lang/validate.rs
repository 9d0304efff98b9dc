//! Static checks run before a module is executed.

use std::collections::BTreeSet;
use std::fmt;

use super::ast::{Clause, Expr, FunDef, Module, Pattern};

#[derive(Debug, Clone, PartialEq, Eq)]
pub enum Diagnostic {
    UndefinedFunction { name: String, arity: usize, in_function: String },
    UnboundVariable { var: String, in_function: String },
    NonlinearPattern { var: String, in_function: String },
    DuplicateParameter { param: String, in_function: String },
}

impl fmt::Display for Diagnostic {
    fn fmt(&self, f: &mut fmt::Formatter<'_>) -> fmt::Result {
        match self {
            Diagnostic::UndefinedFunction { name, arity, in_function } => {
                write!(f, "{in_function}: undefined function {name}/{arity}")
            }
            Diagnostic::UnboundVariable { var, in_function } => {
                write!(f, "{in_function}: variable {var} is unbound")
            }
            Diagnostic::NonlinearPattern { var, in_function } => {
                write!(f, "{in_function}: nonlinear pattern, variable {var} occurs more than once")
            }
            Diagnostic::DuplicateParameter { param, in_function } => {
                write!(f, "{in_function}: duplicate parameter {param}")
            }
        }
    }
}

pub fn validate_module(m: &Module) -> Vec<Diagnostic> {
    let mut diags = Vec::new();
    for def in m.iter() {
        Checker { module: m, function: format!("{}/{}", def.name, def.arity()), diags: &mut diags }.fundef(def);
    }
    diags
}

type Scope = BTreeSet<String>;

struct Checker<'a> {
    module: &'a Module,
    function: String,
    diags: &'a mut Vec<Diagnostic>,
}

impl Checker<'_> {
    fn fundef(&mut self, def: &FunDef) {
        let mut scope = Scope::new();
        for p in &def.params {
            if !scope.insert(p.clone()) {
                self.diags.push(Diagnostic::DuplicateParameter {
                    param: p.clone(),
                    in_function: self.function.clone(),
                });
            }
        }
        self.expr(&def.body, &mut scope);
    }

    fn resolve(&mut self, name: &str, arity: usize) {
        if self.module.function(name, arity).is_none() {
            self.diags.push(Diagnostic::UndefinedFunction {
                name: name.to_string(),
                arity,
                in_function: self.function.clone(),
            });
        }
    }

    fn pattern(&mut self, p: &Pattern, scope: &mut Scope) {
        let vars = p.variables();
        let mut seen = BTreeSet::new();
        let mut reported = BTreeSet::new();
        for v in &vars {
            if !seen.insert(*v) && reported.insert(*v) {
                self.diags.push(Diagnostic::NonlinearPattern {
                    var: v.to_string(),
                    in_function: self.function.clone(),
                });
            }
        }
        scope.extend(vars.into_iter().map(str::to_string));
    }

    /// Checks `e`, extending `scope` with the variables it binds.
    fn expr(&mut self, e: &Expr, scope: &mut Scope) {
        match e {
            Expr::Int(_) | Expr::Atom(_) | Expr::Nil | Expr::SelfPid => {}
            Expr::Var(v) => {
                if !scope.contains(v) {
                    self.diags.push(Diagnostic::UnboundVariable {
                        var: v.clone(),
                        in_function: self.function.clone(),
                    });
                    // Report each unbound name once per scope.
                    scope.insert(v.clone());
                }
            }
            Expr::Tuple(items) => items.iter().for_each(|i| self.expr(i, scope)),
            Expr::Cons(h, t) | Expr::BinOp(_, h, t) | Expr::Seq(h, t) | Expr::Send(h, t) => {
                self.expr(h, scope);
                self.expr(t, scope);
            }
            Expr::Bind(p, rhs) => {
                self.expr(rhs, scope);
                self.pattern(p, scope);
            }
            Expr::Call(name, args) => {
                args.iter().for_each(|a| self.expr(a, scope));
                self.resolve(name, args.len());
            }
            Expr::Spawn(name, args) => {
                args.iter().for_each(|a| self.expr(a, scope));
                self.resolve(name, args.len());
            }
            Expr::Receive(clauses) => self.clauses(clauses, scope),
            Expr::Case(scrutinee, clauses) => {
                self.expr(scrutinee, scope);
                self.clauses(clauses, scope);
            }
        }
    }

    /// After a branching construct only variables bound on every branch
    /// remain in scope.
    fn clauses(&mut self, clauses: &[Clause], scope: &mut Scope) {
        let mut common: Option<Scope> = None;
        for clause in clauses {
            let mut branch = scope.clone();
            self.pattern(&clause.pattern, &mut branch);
            self.expr(&clause.body, &mut branch);
            common = Some(match common {
                None => branch,
                Some(c) => c.intersection(&branch).cloned().collect(),
            });
        }
        if let Some(c) = common {
            *scope = c;
        }
    }
}
