use std::io::Write;
use std::path::PathBuf;
use std::process::{Command, Output, Stdio};

fn corpus(rel: &str) -> PathBuf {
    PathBuf::from(env!("CARGO_MANIFEST_DIR"))
        .join("../../corpus")
        .join(rel)
}

fn dolisp(args: &[&str]) -> Command {
    let mut c = Command::new(env!("CARGO_BIN_EXE_dolisp"));
    c.args(args);
    for var in [
        "DOLISP_MODE",
        "DOLISP_GUARD_CHECK",
        "DOLISP_CAP",
        "DOLISP_SEED",
        "DOLISP_TRIALS",
    ] {
        c.env_remove(var);
    }
    c
}

fn run(c: &mut Command) -> (String, i32) {
    let out: Output = c.output().unwrap();
    (
        String::from_utf8(out.stdout).unwrap(),
        out.status.code().unwrap_or(-1),
    )
}

fn path(rel: &str) -> String {
    corpus(rel).to_string_lossy().into_owned()
}

#[test]
fn run_prints_one_line_per_form() {
    let (out, code) = run(&mut dolisp(&["run", &path("do_examples.lisp")]));
    assert_eq!(code, 0);
    assert_eq!(out, "ST\n30\n(30 <ST>)\n(16 9 4 1)\n30\nF\n30\n0\n");
}

#[test]
fn evaluation_errors_exit_1() {
    let (out, code) = run(&mut dolisp(&["run", &path("errors/nondecreasing.lisp")]));
    assert_eq!(code, 1);
    assert!(
        out.contains("error at 3:1") && out.contains("(t <error>)"),
        "{out}"
    );
    let (out, code) = run(&mut dolisp(&[
        "--mode",
        "native",
        "--cap",
        "5000",
        "run",
        &path("errors/nondecreasing.lisp"),
    ]));
    assert_eq!(code, 1);
    assert!(out.contains("iteration cap of 5000"), "{out}");
    let (_, code) = run(&mut dolisp(&["run", "/nonexistent/file.lisp"]));
    assert_eq!(code, 1);
}

#[test]
fn env_vars_apply_and_flags_win() {
    let file = path("errors/nondecreasing.lisp");
    let (out, _) = run(dolisp(&["run", &file])
        .env("DOLISP_MODE", "native")
        .env("DOLISP_CAP", "777"));
    assert!(out.contains("cap of 777"), "{out}");
    let (out, _) = run(dolisp(&["--cap", "888", "run", &file])
        .env("DOLISP_MODE", "native")
        .env("DOLISP_CAP", "777"));
    assert!(out.contains("cap of 888"), "{out}");
    let (out, _) = run(dolisp(&["--mode", "logical", "run", &file]).env("DOLISP_MODE", "native"));
    assert!(out.contains("(t <error>)"), "{out}");
}

#[test]
fn diff_reports_equivalence_and_divergence() {
    let (out, code) = run(&mut dolisp(&["diff", &path("loops.lisp")]));
    assert_eq!(code, 0, "{out}");
    assert!(out.starts_with("equivalent"));
    let (out, code) = run(&mut dolisp(&[
        "--fault",
        "ignore-first-setq",
        "diff",
        &path("loops.lisp"),
    ]));
    assert_eq!(code, 2);
    assert!(out.contains("divergence at form"));
    let (out, code) = run(&mut dolisp(&[
        "--mode",
        "diff",
        "run",
        &path("errors/f_unguarded.lisp"),
    ]));
    assert_eq!(code, 0);
    assert!(out.contains("skipped"));
}

#[test]
fn check_constraints_and_run() {
    let s = |f: &str| path(&format!("scheduler/{f}.lisp"));
    let (out, code) = run(&mut dolisp(&[
        "--trials",
        "200",
        "--seed",
        "7",
        "check-constraints",
        "--run",
        &s("base"),
        &s("procs"),
        &s("round_robin"),
    ]));
    assert_eq!(code, 0, "{out}");
    assert!(out.contains("200 trials") && out.contains("0 failures"));
    assert!(out.contains("sum-rank chain: (3) (2) (1) (0)"));
    let (out, code) = run(&mut dolisp(&[
        "--trials",
        "200",
        "check-constraints",
        "--run",
        &s("base"),
        &s("procs"),
        &s("adversarial"),
    ]));
    assert_eq!(code, 2, "{out}");
    assert!(out.contains("EXEC-NO-INTERFERE"));
}

#[test]
fn repl_session() {
    let mut child = dolisp(&["repl"])
        .stdin(Stdio::piped())
        .stdout(Stdio::piped())
        .spawn()
        .unwrap();
    child
        .stdin
        .take()
        .unwrap()
        .write_all(b"(defstobj st fld)\n(update-fld '(1 2)\n st)\n(fld st)\n:events\n:nonsense\n(+ 1 1)\n:q\n(+ 5 5)\n")
        .unwrap();
    let out = child.wait_with_output().unwrap();
    let text = String::from_utf8(out.stdout).unwrap();
    assert!(out.status.success());
    assert!(text.contains("<ST>\n(1 2)\n"), "{text}");
    assert!(text.contains("defstobj"));
    assert!(text.contains("error: unknown command"));
    assert!(text.contains("\n2\n"));
    assert!(!text.contains("10"));
}
