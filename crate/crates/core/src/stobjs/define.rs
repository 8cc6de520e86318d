//! `defstobj` parsing.

use crate::error::{Error, Result};
use crate::sexpr::{Symbol, Value};

use super::{FieldKind, FieldSpec, StobjSpec};

fn err(name: &str, msg: impl std::fmt::Display) -> Error {
    Error::World(format!("defstobj {name}: {msg}"))
}

fn kw(v: &Value, name: &str) -> bool {
    matches!(v, Value::Sym(s) if s.name() == name)
}

/// Parses `(defstobj name field...)`. A field is `fld` or
/// `(fld [:type t|integer|(stobj-table)] [:initially v])`.
pub fn parse_defstobj(form: &Value) -> Result<StobjSpec> {
    let items = form
        .to_vec()
        .ok_or_else(|| Error::World("defstobj: malformed form".into()))?;
    let name = items
        .get(1)
        .and_then(Value::as_symbol)
        .filter(|s| !s.is_keyword())
        .ok_or_else(|| Error::World("defstobj: expected a stobj name".into()))?
        .clone();
    let n = name.name();
    if items.len() < 3 {
        return Err(err(n, "at least one field is required"));
    }
    let mut fields: Vec<FieldSpec> = Vec::new();
    for item in &items[2..] {
        if let Value::Sym(s) = item {
            if s.is_keyword() {
                return Err(err(n, format!("unsupported option {s}")));
            }
        }
        let field = parse_field(n, item)?;
        if fields.iter().any(|f| f.name == field.name) {
            return Err(err(n, format!("duplicate field name {}", field.name)));
        }
        fields.push(field);
    }
    Ok(StobjSpec::new(name, fields))
}

fn parse_field(stobj: &str, item: &Value) -> Result<FieldSpec> {
    if let Value::Sym(s) = item {
        return Ok(FieldSpec {
            name: s.clone(),
            kind: FieldKind::Scalar {
                initial: Value::Nil,
                integer: false,
            },
        });
    }
    let parts = item
        .to_vec()
        .filter(|p| !p.is_empty())
        .ok_or_else(|| err(stobj, format!("malformed field {item}")))?;
    let name: Symbol = parts[0]
        .as_symbol()
        .filter(|s| !s.is_keyword())
        .ok_or_else(|| err(stobj, format!("malformed field {item}")))?
        .clone();
    let mut type_spec: Option<Value> = None;
    let mut initially: Option<Value> = None;
    let mut rest = parts[1..].iter();
    while let Some(key) = rest.next() {
        let val = rest
            .next()
            .ok_or_else(|| err(stobj, format!("missing value for {key} in field {name}")))?;
        if kw(key, ":TYPE") {
            type_spec = Some(val.clone());
        } else if kw(key, ":INITIALLY") {
            initially = Some(val.clone());
        } else {
            return Err(err(stobj, format!("unsupported field option {key}")));
        }
    }
    let kind =
        match type_spec {
            None | Some(Value::T) => FieldKind::Scalar {
                initial: initially.unwrap_or(Value::Nil),
                integer: false,
            },
            Some(Value::Sym(s)) if s.name() == "INTEGER" => {
                let initial = initially.unwrap_or(Value::int(0));
                if initial.as_int().is_none() {
                    return Err(err(
                        stobj,
                        format!("field {name}: initial value {initial} is not an integer"),
                    ));
                }
                FieldKind::Scalar {
                    initial,
                    integer: true,
                }
            }
            Some(t) if is_table_type(&t) => {
                if initially.is_some() {
                    return Err(err(
                        stobj,
                        format!("field {name}: a stobj-table takes no :initially"),
                    ));
                }
                FieldKind::Table
            }
            Some(t) => return Err(err(
                stobj,
                format!(
                    "field {name}: unsupported field kind {t} (only t, integer and (stobj-table))"
                ),
            )),
        };
    if let FieldKind::Scalar { initial, .. } = &kind {
        if initial.contains_stobj() {
            return Err(err(stobj, format!("field {name}: bad initial value")));
        }
    }
    Ok(FieldSpec { name, kind })
}

fn is_table_type(t: &Value) -> bool {
    t.len() == 1
        && matches!(t.car(), Value::Sym(s) if s.name() == "STOBJ-TABLE")
        && t.is_proper_list()
}

#[cfg(test)]
mod tests {
    use super::*;
    use crate::sexpr::read_one;

    fn parse(src: &str) -> Result<StobjSpec> {
        parse_defstobj(&read_one(src).unwrap())
    }

    #[test]
    fn switch_and_table() {
        let sw = parse("(defstobj switch fld)").unwrap();
        assert_eq!(sw.name.name(), "SWITCH");
        assert_eq!(sw.creator.name(), "CREATE-SWITCH");
        assert_eq!(sw.recognizer.name(), "SWITCHP");
        let t = parse("(defstobj stobj-table (tbl :type (stobj-table)))").unwrap();
        assert!(t.has_table());
    }

    #[test]
    fn integer_fields_and_initial_values() {
        let p = parse("(defstobj pa (pa-left :type integer :initially 2))").unwrap();
        match &p.fields[0].kind {
            FieldKind::Scalar { initial, integer } => {
                assert!(*integer);
                assert_eq!(initial, &Value::int(2));
            }
            FieldKind::Table => panic!("scalar expected"),
        }
        assert!(parse("(defstobj q (x :type integer :initially nil))").is_err());
    }

    #[test]
    fn unsupported_kinds() {
        assert!(parse("(defstobj a (arr :type (array integer (10))))").is_err());
        assert!(parse("(defstobj a (s :type string))").is_err());
        assert!(parse("(defstobj a (h :type (hash-table eq)))").is_err());
        assert!(parse("(defstobj a x x)").is_err());
        assert!(parse("(defstobj a)").is_err());
    }
}
