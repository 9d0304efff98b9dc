//! Runtime values.

use std::fmt;
use std::sync::Arc;

/// Opaque process identifier. Only the runtime mints these.
#[derive(Debug, Clone, Copy, PartialEq, Eq, PartialOrd, Ord, Hash)]
pub struct Pid(pub(crate) u32);

impl Pid {
    pub fn index(self) -> usize {
        self.0 as usize
    }
}

impl fmt::Display for Pid {
    fn fmt(&self, f: &mut fmt::Formatter<'_>) -> fmt::Result {
        write!(f, "<0.{}.0>", self.0)
    }
}

#[derive(Debug, Clone, PartialEq, Eq, Hash)]
pub enum Value {
    Int(i64),
    Atom(String),
    Pid(Pid),
    Tuple(Vec<Value>),
    Nil,
    Cons(Arc<Value>, Arc<Value>),
}

impl Value {
    pub fn atom(name: &str) -> Value {
        Value::Atom(name.to_string())
    }

    pub fn boolean(b: bool) -> Value {
        Value::atom(if b { "true" } else { "false" })
    }

    /// Builds a proper list.
    pub fn list<I>(items: I) -> Value
    where
        I: IntoIterator<Item = Value>,
        I::IntoIter: DoubleEndedIterator,
    {
        items
            .into_iter()
            .rev()
            .fold(Value::Nil, |tail, head| Value::Cons(Arc::new(head), Arc::new(tail)))
    }

    /// Renders the value, printing pids through `pid_name`.
    pub fn render_with(&self, pid_name: &dyn Fn(Pid) -> String) -> String {
        let mut out = String::new();
        self.write_with(&mut out, pid_name);
        out
    }

    fn write_with(&self, out: &mut String, pid_name: &dyn Fn(Pid) -> String) {
        match self {
            Value::Int(n) => out.push_str(&n.to_string()),
            Value::Atom(a) => out.push_str(a),
            Value::Pid(p) => out.push_str(&pid_name(*p)),
            Value::Tuple(items) => {
                out.push('{');
                for (i, v) in items.iter().enumerate() {
                    if i > 0 {
                        out.push(',');
                    }
                    v.write_with(out, pid_name);
                }
                out.push('}');
            }
            Value::Nil => out.push_str("[]"),
            Value::Cons(head, tail) => {
                out.push('[');
                head.write_with(out, pid_name);
                let mut rest: &Value = tail;
                loop {
                    match rest {
                        Value::Nil => break,
                        Value::Cons(h, t) => {
                            out.push(',');
                            h.write_with(out, pid_name);
                            rest = t;
                        }
                        other => {
                            out.push('|');
                            other.write_with(out, pid_name);
                            break;
                        }
                    }
                }
                out.push(']');
            }
        }
    }
}

impl fmt::Display for Value {
    fn fmt(&self, f: &mut fmt::Formatter<'_>) -> fmt::Result {
        f.write_str(&self.render_with(&|p| p.to_string()))
    }
}

#[cfg(test)]
mod tests {
    use super::*;

    #[test]
    fn display_nested() {
        let v = Value::Tuple(vec![
            Value::atom("ok"),
            Value::list([Value::Int(1), Value::Int(2)]),
            Value::Pid(Pid(3)),
        ]);
        assert_eq!(v.to_string(), "{ok,[1,2],<0.3.0>}");
    }

    #[test]
    fn display_improper_list() {
        let v = Value::Cons(Arc::new(Value::Int(1)), Arc::new(Value::Int(2)));
        assert_eq!(v.to_string(), "[1|2]");
    }
}
