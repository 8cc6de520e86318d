//! Sessions: file transcripts, REPL commands and the differential runner.

use std::fmt;
use std::str::FromStr;

use crate::error::{Error, Result};
use crate::kernel::{EvalConfig, Interp, Mode, NativeFault, UndoTarget};
use crate::sexpr::{read_spanned, show, Pos, Symbol};
use crate::stobj_table::TableRepr;

#[derive(Clone, Copy, Debug, PartialEq, Eq)]
pub enum SessionMode {
    Logical,
    Native,
    Diff,
}

impl FromStr for SessionMode {
    type Err = String;

    fn from_str(s: &str) -> std::result::Result<Self, String> {
        match s.to_ascii_lowercase().as_str() {
            "logical" => Ok(SessionMode::Logical),
            "native" => Ok(SessionMode::Native),
            "diff" => Ok(SessionMode::Diff),
            other => Err(format!(
                "unknown mode {other:?}; expected logical, native or diff"
            )),
        }
    }
}

impl fmt::Display for SessionMode {
    fn fmt(&self, f: &mut fmt::Formatter<'_>) -> fmt::Result {
        f.write_str(match self {
            SessionMode::Logical => "logical",
            SessionMode::Native => "native",
            SessionMode::Diff => "diff",
        })
    }
}

#[derive(Clone, Debug)]
pub struct SessionConfig {
    pub mode: SessionMode,
    pub guard_check: bool,
    pub cap: u64,
    pub seed: u64,
    pub trials: usize,
    /// Test hook: corrupts the native path.
    pub fault: Option<NativeFault>,
}

impl Default for SessionConfig {
    fn default() -> Self {
        SessionConfig {
            mode: SessionMode::Logical,
            guard_check: true,
            cap: EvalConfig::default().native_cap,
            seed: 0,
            trials: 1000,
            fault: None,
        }
    }
}

impl SessionConfig {
    pub fn eval_config(&self, mode: Mode) -> EvalConfig {
        EvalConfig {
            mode,
            guard_check: self.guard_check,
            native_cap: self.cap,
            fault: if mode == Mode::Native {
                self.fault
            } else {
                None
            },
            ..EvalConfig::default()
        }
    }

    pub fn interp(&self, mode: Mode) -> Interp {
        Interp::new(self.eval_config(mode))
    }
}

/// An error tagged with the position of the top-level form that raised it.
#[derive(Clone, Debug)]
pub struct Located {
    pub pos: Option<Pos>,
    pub error: Error,
}

impl fmt::Display for Located {
    fn fmt(&self, f: &mut fmt::Formatter<'_>) -> fmt::Result {
        match (&self.pos, &self.error) {
            (_, e @ Error::Read { .. }) => write!(f, "error: {e}"),
            (Some(p), e) => write!(f, "error at {}:{}: {e}", p.line, p.col),
            (None, e) => write!(f, "error: {e}"),
        }
    }
}

#[derive(Clone, Debug)]
pub struct Transcript {
    pub text: String,
    pub error: Option<Located>,
}

impl Transcript {
    pub fn ok(&self) -> bool {
        self.error.is_none()
    }
}

/// Evaluates every form in order, one result line per form preceded by any
/// printed output. Stops at the first error.
pub fn run_transcript(interp: &mut Interp, src: &str) -> Transcript {
    let mut text = String::new();
    let forms = match read_spanned(src) {
        Ok(f) => f,
        Err(error) => {
            let located = Located { pos: None, error };
            text.push_str(&format!("{located}\n"));
            return Transcript {
                text,
                error: Some(located),
            };
        }
    };
    for (form, pos) in forms {
        let r = interp.eval_top(&form);
        text.push_str(&interp.take_output());
        for w in interp.take_warnings() {
            text.push_str(&format!("warning: {w}\n"));
        }
        match r {
            Ok(r) => {
                text.push_str(&r.printed);
                text.push('\n');
            }
            Err(error) => {
                let located = Located {
                    pos: Some(pos),
                    error,
                };
                text.push_str(&format!("{located}\n"));
                return Transcript {
                    text,
                    error: Some(located),
                };
            }
        }
    }
    Transcript { text, error: None }
}

/// Outcome of a REPL line.
#[derive(Clone, Debug, Default)]
pub struct Reply {
    pub output: String,
    pub quit: bool,
    /// The input so far is an incomplete form; more lines are needed.
    pub pending: bool,
}

/// An interactive session. Feeds lines, buffering until forms are complete.
pub struct Repl {
    pub interp: Interp,
    config: SessionConfig,
    buffer: String,
}

fn incomplete(e: &Error) -> bool {
    matches!(e, Error::Read { msg, .. }
        if msg.contains("missing ')'") || msg.contains("unterminated string") || msg.contains("end of input"))
}

impl Repl {
    pub fn new(config: SessionConfig) -> Repl {
        let mode = match config.mode {
            SessionMode::Native => Mode::Native,
            _ => Mode::Logical,
        };
        Repl {
            interp: config.interp(mode),
            config,
            buffer: String::new(),
        }
    }

    pub fn prompt(&self) -> String {
        if self.buffer.is_empty() {
            format!("{} > ", self.interp.config.mode)
        } else {
            "... ".to_string()
        }
    }

    pub fn feed(&mut self, line: &str) -> Reply {
        let trimmed = line.trim();
        if self.buffer.is_empty() && trimmed.starts_with(':') {
            return self.command(trimmed);
        }
        self.buffer.push_str(line);
        self.buffer.push('\n');
        match read_spanned(&self.buffer) {
            Err(e) if incomplete(&e) => Reply {
                pending: true,
                ..Reply::default()
            },
            _ => {
                let src = std::mem::take(&mut self.buffer);
                Reply {
                    output: run_transcript(&mut self.interp, &src).text,
                    ..Reply::default()
                }
            }
        }
    }

    fn command(&mut self, line: &str) -> Reply {
        let mut parts = line.split_whitespace();
        let cmd = parts.next().unwrap_or("").to_ascii_lowercase();
        let arg = parts.next();
        let output = match (cmd.as_str(), arg) {
            (":q" | ":quit", _) => {
                return Reply {
                    quit: true,
                    ..Reply::default()
                }
            }
            (":events", _) => {
                let mut s = String::new();
                for e in self.interp.world().events() {
                    s.push_str(&format!("{e}\n"));
                }
                s
            }
            (":ubt", Some(a)) => {
                let target = match a.parse::<u64>() {
                    Ok(n) => UndoTarget::Index(n),
                    Err(_) => UndoTarget::Name(Symbol::intern(&a.to_ascii_uppercase())),
                };
                match self.interp.undo(&target) {
                    Ok(r) => {
                        let names: Vec<String> =
                            r.stobjs_undone.iter().map(|s| s.to_string()).collect();
                        format!(
                            "undid {} event(s); stobjs removed: [{}]; table keys retracted: {}\n",
                            r.events_removed,
                            names.join(" "),
                            r.keys_retracted
                        )
                    }
                    Err(e) => format!("error: {e}\n"),
                }
            }
            (":mode", Some(m)) => match m.parse::<SessionMode>() {
                Ok(SessionMode::Logical) => {
                    self.interp.set_mode(Mode::Logical);
                    "mode: logical\n".to_string()
                }
                Ok(SessionMode::Native) => {
                    self.interp.set_mode(Mode::Native);
                    self.interp.config.fault = self.config.fault;
                    "mode: native\n".to_string()
                }
                Ok(SessionMode::Diff) => {
                    "error: diff mode is only available for files\n".to_string()
                }
                Err(e) => format!("error: {e}\n"),
            },
            (":mode", None) => format!("mode: {}\n", self.interp.config.mode),
            (":ubt", None) => "error: :ubt needs an event index or name\n".to_string(),
            (c, _) => format!("error: unknown command {c}; try :ubt, :events, :mode or :q\n"),
        };
        Reply {
            output,
            ..Reply::default()
        }
    }
}

#[derive(Clone, Debug)]
pub struct Skipped {
    pub index: usize,
    pub pos: Pos,
    pub reason: String,
}

#[derive(Clone, Debug)]
pub struct Divergence {
    pub index: usize,
    pub pos: Pos,
    pub form: String,
    pub logical: String,
    pub native: String,
    pub logical_bank: String,
    pub native_bank: String,
}

#[derive(Clone, Debug)]
pub struct DiffReport {
    pub forms: usize,
    pub skipped: Vec<Skipped>,
    pub divergence: Option<Divergence>,
}

impl DiffReport {
    pub fn equivalent(&self) -> bool {
        self.divergence.is_none()
    }
}

impl fmt::Display for DiffReport {
    fn fmt(&self, f: &mut fmt::Formatter<'_>) -> fmt::Result {
        for s in &self.skipped {
            writeln!(
                f,
                "form {} at {}:{} skipped: {}",
                s.index, s.pos.line, s.pos.col, s.reason
            )?;
        }
        match &self.divergence {
            None => writeln!(
                f,
                "equivalent ({} forms, {} skipped)",
                self.forms,
                self.skipped.len()
            ),
            Some(d) => {
                writeln!(
                    f,
                    "divergence at form {} ({}:{}): {}",
                    d.index, d.pos.line, d.pos.col, d.form
                )?;
                writeln!(f, "  logical: {}", d.logical)?;
                writeln!(f, "  native:  {}", d.native)?;
                writeln!(f, "  logical bank: {}", d.logical_bank)?;
                writeln!(f, "  native bank:  {}", d.native_bank)
            }
        }
    }
}

fn render_bank(interp: &Interp) -> String {
    let parts: Vec<String> = interp
        .bank_view()
        .iter()
        .map(|(k, v)| format!("{k} = {}", show(v)))
        .collect();
    format!("{{{}}}", parts.join(", "))
}

fn outcome(r: &Result<crate::kernel::TopResult>, output: String) -> String {
    match r {
        Ok(t) => format!("{output}{}", t.printed),
        Err(e) => format!("{output}error: {e}"),
    }
}

/// Runs every form on a logical and a native interpreter and compares
/// results and final logical stobj banks after each form. Forms whose
/// logical evaluation fails a dynamic check are skipped, and the native bank
/// is resynchronised from the logical one.
pub fn diff_run(src: &str, config: &SessionConfig) -> Result<DiffReport> {
    let forms = read_spanned(src)?;
    let mut logical = config.interp(Mode::Logical);
    let mut native = config.interp(Mode::Native);
    let mut report = DiffReport {
        forms: forms.len(),
        skipped: Vec::new(),
        divergence: None,
    };
    for (index, (form, pos)) in forms.iter().enumerate() {
        let index = index + 1;
        let rl = logical.eval_top(form);
        let ol = logical.take_output();
        logical.take_warnings();
        if let Err(e) = &rl {
            if e.is_check_failure() {
                report.skipped.push(Skipped {
                    index,
                    pos: *pos,
                    reason: e.to_string(),
                });
                resync(&logical, &mut native);
                continue;
            }
        }
        let rn = native.eval_top(form);
        let on = native.take_output();
        native.take_warnings();
        let a = outcome(&rl, ol);
        let b = outcome(&rn, on);
        let same_result = match (&rl, &rn) {
            (Err(_), Err(_)) => true,
            _ => a == b,
        };
        let (lb, nb) = (render_bank(&logical), render_bank(&native));
        if !same_result || lb != nb {
            report.divergence = Some(Divergence {
                index,
                pos: *pos,
                form: show(form),
                logical: a,
                native: b,
                logical_bank: lb,
                native_bank: nb,
            });
            break;
        }
    }
    Ok(report)
}

fn resync(from: &Interp, to: &mut Interp) {
    let copies: Vec<_> = from
        .bank()
        .values()
        .map(|st| st.deep_copy(TableRepr::Hash))
        .collect();
    for st in copies {
        to.set_stobj(st);
    }
}

/// Exit statuses shared by the CLI.
pub mod exit {
    pub const OK: i32 = 0;
    pub const EVAL_ERROR: i32 = 1;
    pub const DIVERGENCE: i32 = 2;
}

/// Runs a whole file under `config`, returning the transcript and exit status.
pub fn run_file_source(src: &str, config: &SessionConfig) -> (String, i32) {
    match config.mode {
        SessionMode::Diff => match diff_run(src, config) {
            Ok(r) if r.equivalent() => (r.to_string(), exit::OK),
            Ok(r) => (r.to_string(), exit::DIVERGENCE),
            Err(e) => (format!("error: {e}\n"), exit::EVAL_ERROR),
        },
        m => {
            let mode = if m == SessionMode::Native {
                Mode::Native
            } else {
                Mode::Logical
            };
            let mut interp = config.interp(mode);
            let t = run_transcript(&mut interp, src);
            let status = if t.ok() { exit::OK } else { exit::EVAL_ERROR };
            (t.text, status)
        }
    }
}

#[cfg(test)]
mod tests {
    use super::*;

    #[test]
    fn transcript_reports_position() {
        let mut i = Interp::new(EvalConfig::default());
        let t = run_transcript(&mut i, "(+ 1 2)\n  (car 5)");
        assert_eq!(t.text.lines().next(), Some("3"));
        assert!(t.text.contains("error at 2:3"), "{}", t.text);
        let t = run_transcript(&mut i, "");
        assert!(t.ok() && t.text.is_empty());
    }

    #[test]
    fn repl_commands() {
        let mut r = Repl::new(SessionConfig::default());
        assert!(r.feed("(defstobj st fld)").output.contains("ST"));
        assert!(r.feed("(+ 1").pending);
        assert_eq!(r.feed(" 2)").output, "3\n");
        assert!(r.feed(":events").output.contains("defstobj"));
        assert!(r.feed(":bogus").output.starts_with("error"));
        assert!(r.feed(":ubt st").output.contains("undid 1"));
        assert!(r.feed(":events").output.is_empty());
        assert_eq!(r.feed(":mode native").output, "mode: native\n");
        assert!(r.feed(":q").quit);
    }

    #[test]
    fn event_indices_are_not_reused() {
        let mut r = Repl::new(SessionConfig::default());
        r.feed("(defun a (x) x)");
        r.feed(":ubt 1");
        r.feed("(defun b (x) x)");
        assert!(r.feed(":events").output.trim_start().starts_with('2'));
    }
}
