//! S-expression reader. Symbols are upcased, `'x` reads as `(QUOTE x)` and
//! `;` starts a line comment.

use super::{Integer, Value};
use crate::error::Error;

#[derive(Clone, Copy, Debug, PartialEq, Eq)]
pub struct Pos {
    pub line: usize,
    pub col: usize,
}

struct Reader<'a> {
    chars: Vec<char>,
    idx: usize,
    line: usize,
    col: usize,
    _src: &'a str,
}

fn is_delimiter(c: char) -> bool {
    c.is_whitespace() || matches!(c, '(' | ')' | '\'' | '"' | ';')
}

impl<'a> Reader<'a> {
    fn new(src: &'a str) -> Self {
        Reader {
            chars: src.chars().collect(),
            idx: 0,
            line: 1,
            col: 1,
            _src: src,
        }
    }

    fn pos(&self) -> Pos {
        Pos {
            line: self.line,
            col: self.col,
        }
    }

    fn err(&self, pos: Pos, msg: impl Into<String>) -> Error {
        Error::Read {
            line: pos.line,
            col: pos.col,
            msg: msg.into(),
        }
    }

    fn peek(&self) -> Option<char> {
        self.chars.get(self.idx).copied()
    }

    fn bump(&mut self) -> Option<char> {
        let c = self.chars.get(self.idx).copied()?;
        self.idx += 1;
        if c == '\n' {
            self.line += 1;
            self.col = 1;
        } else {
            self.col += 1;
        }
        Some(c)
    }

    fn skip_trivia(&mut self) {
        while let Some(c) = self.peek() {
            if c.is_whitespace() {
                self.bump();
            } else if c == ';' {
                while let Some(c) = self.bump() {
                    if c == '\n' {
                        break;
                    }
                }
            } else {
                break;
            }
        }
    }

    fn read_all(&mut self) -> Result<Vec<(Value, Pos)>, Error> {
        let mut out = Vec::new();
        loop {
            self.skip_trivia();
            let pos = self.pos();
            match self.peek() {
                None => return Ok(out),
                Some(')') => return Err(self.err(pos, "unbalanced ')'")),
                Some(_) => out.push((self.read_form()?, pos)),
            }
        }
    }

    fn read_form(&mut self) -> Result<Value, Error> {
        self.skip_trivia();
        let pos = self.pos();
        match self.peek() {
            None => Err(self.err(pos, "unexpected end of input")),
            Some('(') => {
                self.bump();
                self.read_list_tail(pos)
            }
            Some(')') => Err(self.err(pos, "unbalanced ')'")),
            Some('\'') => {
                self.bump();
                let quoted = self.read_form()?;
                Ok(Value::list([Value::sym("QUOTE"), quoted]))
            }
            Some('"') => {
                self.bump();
                self.read_string(pos)
            }
            Some(_) => self.read_atom(pos),
        }
    }

    fn read_list_tail(&mut self, open: Pos) -> Result<Value, Error> {
        let mut items = Vec::new();
        let mut tail = Value::Nil;
        loop {
            self.skip_trivia();
            let pos = self.pos();
            match self.peek() {
                None => return Err(self.err(open, "unbalanced '(': missing ')'")),
                Some(')') => {
                    self.bump();
                    break;
                }
                Some('.') if self.dot_token_here() => {
                    if items.is_empty() {
                        return Err(self.err(pos, "'.' with no preceding element"));
                    }
                    self.bump();
                    tail = self.read_form()?;
                    self.skip_trivia();
                    match self.peek() {
                        Some(')') => {
                            self.bump();
                            break;
                        }
                        None => return Err(self.err(open, "unbalanced '(': missing ')'")),
                        Some(_) => {
                            let p = self.pos();
                            return Err(self.err(p, "more than one element after '.'"));
                        }
                    }
                }
                Some(_) => items.push(self.read_form()?),
            }
        }
        Ok(items
            .into_iter()
            .rev()
            .fold(tail, |acc, v| Value::cons(v, acc)))
    }

    fn dot_token_here(&self) -> bool {
        self.chars.get(self.idx) == Some(&'.')
            && self
                .chars
                .get(self.idx + 1)
                .is_none_or(|c| is_delimiter(*c))
    }

    fn read_string(&mut self, open: Pos) -> Result<Value, Error> {
        let mut s = String::new();
        loop {
            match self.bump() {
                None => return Err(self.err(open, "unterminated string")),
                Some('"') => return Ok(Value::string(&s)),
                Some('\\') => match self.bump() {
                    None => return Err(self.err(open, "unterminated string")),
                    Some(c) => s.push(c),
                },
                Some(c) => s.push(c),
            }
        }
    }

    fn read_atom(&mut self, pos: Pos) -> Result<Value, Error> {
        let mut tok = String::new();
        while let Some(c) = self.peek() {
            if is_delimiter(c) {
                break;
            }
            tok.push(c);
            self.bump();
        }
        if tok == "." {
            return Err(self.err(pos, "'.' outside dotted-pair position"));
        }
        if let Some(n) = Integer::parse(&tok) {
            return Ok(Value::Int(n));
        }
        if looks_numeric(&tok) {
            return Err(self.err(
                pos,
                format!("unsupported number syntax {tok:?}; only integers are supported"),
            ));
        }
        let name = tok.to_uppercase();
        Ok(match name.as_str() {
            "NIL" => Value::Nil,
            "T" => Value::T,
            _ => Value::sym(&name),
        })
    }
}

/// Rationals (`1/2`) and decimals (`1.5`) are rejected rather than read as
/// symbols.
fn looks_numeric(tok: &str) -> bool {
    let body = tok.strip_prefix(['+', '-']).unwrap_or(tok);
    let mut parts = body.splitn(2, ['/', '.']);
    let head = parts.next().unwrap_or("");
    match parts.next() {
        Some(rest) => {
            !head.is_empty()
                && head.bytes().all(|b| b.is_ascii_digit())
                && rest.bytes().all(|b| b.is_ascii_digit())
        }
        None => false,
    }
}

/// Reads every form in `source`.
pub fn read(source: &str) -> Result<Vec<Value>, Error> {
    Ok(read_spanned(source)?.into_iter().map(|(v, _)| v).collect())
}

/// Reads every form in `source`, returning each with its starting position.
pub fn read_spanned(source: &str) -> Result<Vec<(Value, Pos)>, Error> {
    Reader::new(source).read_all()
}

/// Reads exactly one form.
pub fn read_one(source: &str) -> Result<Value, Error> {
    let mut forms = read(source)?;
    match forms.len() {
        1 => Ok(forms.pop().unwrap_or(Value::Nil)),
        n => Err(Error::Read {
            line: 1,
            col: 1,
            msg: format!("expected one form, found {n}"),
        }),
    }
}
