//! Abstract syntax of MMP programs.

use indexmap::IndexMap;

/// Binary operators, all strict in both operands.
#[derive(Debug, Clone, Copy, PartialEq, Eq, Hash)]
pub enum BinOp {
    Add,
    Sub,
    Mul,
    Eq,
    Ne,
    Lt,
    Le,
}

impl BinOp {
    pub fn symbol(self) -> &'static str {
        match self {
            BinOp::Add => "+",
            BinOp::Sub => "-",
            BinOp::Mul => "*",
            BinOp::Eq => "==",
            BinOp::Ne => "/=",
            BinOp::Lt => "<",
            BinOp::Le => "<=",
        }
    }

    pub(crate) fn precedence(self) -> u8 {
        match self {
            BinOp::Eq | BinOp::Ne | BinOp::Lt | BinOp::Le => 1,
            BinOp::Add | BinOp::Sub => 2,
            BinOp::Mul => 3,
        }
    }
}

#[derive(Debug, Clone, PartialEq, Eq, Hash)]
pub enum Expr {
    Int(i64),
    Atom(String),
    Var(String),
    Tuple(Vec<Expr>),
    Nil,
    Cons(Box<Expr>, Box<Expr>),
    BinOp(BinOp, Box<Expr>, Box<Expr>),
    /// `Pattern = Expr`; evaluates to the matched value.
    Bind(Pattern, Box<Expr>),
    /// `e1, e2`: evaluate `e1`, discard its value, continue with `e2`.
    Seq(Box<Expr>, Box<Expr>),
    Call(String, Vec<Expr>),
    SelfPid,
    Spawn(String, Vec<Expr>),
    /// `target ! message`
    Send(Box<Expr>, Box<Expr>),
    Receive(Vec<Clause>),
    Case(Box<Expr>, Vec<Clause>),
}

#[derive(Debug, Clone, PartialEq, Eq, Hash)]
pub struct Clause {
    pub pattern: Pattern,
    pub body: Expr,
}

#[derive(Debug, Clone, PartialEq, Eq, Hash)]
pub enum Pattern {
    Wildcard,
    Var(String),
    Int(i64),
    Atom(String),
    Tuple(Vec<Pattern>),
    Nil,
    Cons(Box<Pattern>, Box<Pattern>),
}

impl Pattern {
    /// Variables in left-to-right order, duplicates included.
    pub fn variables(&self) -> Vec<&str> {
        let mut out = Vec::new();
        self.collect_vars(&mut out);
        out
    }

    fn collect_vars<'a>(&'a self, out: &mut Vec<&'a str>) {
        match self {
            Pattern::Var(v) => out.push(v),
            Pattern::Tuple(ps) => ps.iter().for_each(|p| p.collect_vars(out)),
            Pattern::Cons(h, t) => {
                h.collect_vars(out);
                t.collect_vars(out);
            }
            Pattern::Wildcard | Pattern::Int(_) | Pattern::Atom(_) | Pattern::Nil => {}
        }
    }
}

#[derive(Debug, Clone, PartialEq, Eq, Hash)]
pub struct FunDef {
    pub name: String,
    pub params: Vec<String>,
    pub body: Expr,
}

impl FunDef {
    pub fn arity(&self) -> usize {
        self.params.len()
    }
}

/// A function is identified by its name and arity.
pub type FunKey = (String, usize);

/// The single implicit module of a program.
#[derive(Debug, Clone, Default, PartialEq, Eq)]
pub struct Module {
    pub functions: IndexMap<FunKey, FunDef>,
}

impl Module {
    pub fn function(&self, name: &str, arity: usize) -> Option<&FunDef> {
        self.functions.get(&(name.to_string(), arity))
    }

    pub fn iter(&self) -> impl Iterator<Item = &FunDef> {
        self.functions.values()
    }
}
