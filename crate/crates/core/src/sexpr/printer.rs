use std::fmt::Write;

use super::Value;

/// Renders a value in reader syntax. Live stobjs render as `<NAME>`.
pub fn show(v: &Value) -> String {
    let mut out = String::new();
    write_value(&mut out, v);
    out
}

fn write_value(out: &mut String, v: &Value) {
    match v {
        Value::Nil => out.push_str("NIL"),
        Value::T => out.push('T'),
        Value::Int(n) => {
            let _ = write!(out, "{n}");
        }
        Value::Str(s) => {
            out.push('"');
            for c in s.chars() {
                if c == '"' || c == '\\' {
                    out.push('\\');
                }
                out.push(c);
            }
            out.push('"');
        }
        Value::Sym(s) => out.push_str(s.name()),
        Value::Stobj(st) => {
            let _ = write!(out, "<{}>", st.name());
        }
        Value::Cons(_) => {
            out.push('(');
            let mut cur = v;
            let mut first = true;
            loop {
                match cur {
                    Value::Cons(c) => {
                        if !first {
                            out.push(' ');
                        }
                        first = false;
                        write_value(out, &c.car);
                        cur = &c.cdr;
                    }
                    Value::Nil => break,
                    atom => {
                        out.push_str(" . ");
                        write_value(out, atom);
                        break;
                    }
                }
            }
            out.push(')');
        }
    }
}

/// Renders an association list with every entry spelled as an explicit
/// dotted pair, e.g. `((SUM . 30) (LST . NIL))`, the way loop traces show
/// environments.
pub fn show_alist(alist: &Value) -> String {
    if !alist.is_cons() {
        return show(alist);
    }
    let mut out = String::from("(");
    for (i, entry) in alist.iter().enumerate() {
        if i > 0 {
            out.push(' ');
        }
        match entry {
            Value::Cons(c) => {
                out.push('(');
                write_value(&mut out, &c.car);
                out.push_str(" . ");
                write_value(&mut out, &c.cdr);
                out.push(')');
            }
            other => write_value(&mut out, other),
        }
    }
    out.push(')');
    out
}
