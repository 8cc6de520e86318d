//! Derived values computed by independent Rust models, then frozen.

use std::path::PathBuf;

use dolisp::kernel::{EvalConfig, Interp, Mode};
use dolisp::loops::LoopTrace;
use dolisp::refinement::run_scheduler;
use dolisp::session::{run_file_source, run_transcript, SessionConfig, SessionMode};

fn corpus(rel: &str) -> String {
    let p = PathBuf::from(env!("CARGO_MANIFEST_DIR"))
        .join("../../corpus")
        .join(rel);
    std::fs::read_to_string(p).unwrap()
}

/// The guarded loop, run by hand: count down from n adding squares.
fn f_model(n: u64) -> u64 {
    let (mut sum, mut i) = (0, n);
    while i != 0 {
        sum += i * i;
        i -= 1;
    }
    sum
}

#[test]
fn f_values() {
    assert_eq!(f_model(4), 30);
    assert_eq!(f_model(0), 0);
    let mut i = Interp::new(EvalConfig::default());
    i.run_source(&corpus("do_examples.lisp")).unwrap();
    for n in [0u64, 1, 4, 9] {
        assert_eq!(
            i.eval_str(&format!("(f {n})")).unwrap().to_string(),
            f_model(n).to_string()
        );
    }
}

/// The :MEASURE example: each application of the body is one step; the
/// step that reaches loop-finish counts too.
fn measure_model() -> (usize, Vec<u64>, u64) {
    let (mut sum, mut i) = (0u64, 1u64);
    let mut applications = 0;
    let mut measures = Vec::new();
    loop {
        applications += 1;
        measures.push(5u64.saturating_sub(i));
        if i <= 4 {
            sum += i * i;
            i += 1;
        } else {
            return (applications, measures, sum);
        }
    }
}

const FROZEN_APPLICATIONS: usize = 5;

#[test]
fn measure_example_applications() {
    let (n, measures, sum) = measure_model();
    assert_eq!(n, FROZEN_APPLICATIONS);
    assert_eq!(measures, [4, 3, 2, 1, 0]);
    assert_eq!(sum, 30);
    let src = "(loop$ WITH sum = 0 WITH i = 1 DO :MEASURE (nfix (- 5 i))
                 (if (<= i 4) (let ((sq (* i i))) (progn (setq sum (+ sq sum)) (setq i (1+ i))))
                   (loop-finish))
                 FINALLY (return sum))";
    let mut i = Interp::new(EvalConfig::default());
    i.enable_trace();
    i.eval_str(src).unwrap();
    let t: Vec<LoopTrace> = i.take_trace();
    assert_eq!(t[0].steps.len(), n);
    let chain: Vec<String> = t[0].measure_chain().iter().map(|m| m.to_string()).collect();
    let want: Vec<String> = measures.iter().map(|m| format!("({m})")).collect();
    assert_eq!(chain, want);
    let tokens: Vec<String> = t[0]
        .steps
        .iter()
        .map(|s| s.triple.car().to_string())
        .collect();
    assert_eq!(tokens, ["NIL", "NIL", "NIL", "NIL", ":LOOP-FINISH"]);
}

#[test]
fn switch_toggles() {
    let mut on = false;
    let mut model = vec![];
    for flips in 0..3 {
        if flips > 0 {
            on = !on;
        }
        model.push(if on { "\"ON\"" } else { "\"OFF\"" });
    }
    assert_eq!(model, ["\"OFF\"", "\"ON\"", "\"OFF\""]);
    let mut i = Interp::new(EvalConfig::default());
    let t = run_transcript(&mut i, &corpus("switch.lisp"));
    let shown: Vec<&str> = t.text.lines().filter(|l| l.starts_with('"')).collect();
    assert_eq!(shown, model);
}

/// Initial ranks are the :initially values of the two child stobjs.
fn initial_ranks(base: &str) -> Vec<u64> {
    base.split(":initially")
        .skip(1)
        .map(|rest| {
            rest.trim_start()
                .chars()
                .take_while(char::is_ascii_digit)
                .collect::<String>()
                .parse()
                .unwrap()
        })
        .collect()
}

/// Round robin by hand: alternate, skip a finished process, stop when the
/// pick is not ready.
fn round_robin_model(mut ranks: Vec<u64>) -> Vec<u64> {
    let mut last: Option<usize> = None;
    let mut chain = vec![ranks.iter().sum()];
    loop {
        let next = if last == Some(0) { 1 } else { 0 };
        let p = if ranks[next] > 0 { next } else { 1 - next };
        if ranks[p] == 0 {
            return chain;
        }
        ranks[p] -= 1;
        last = Some(p);
        chain.push(ranks.iter().sum());
    }
}

#[test]
fn scheduler_chain() {
    let base = corpus("scheduler/base.lisp");
    let ranks = initial_ranks(&base);
    assert_eq!(ranks, [2, 1]);
    let chain = round_robin_model(ranks);
    assert_eq!(chain, [3, 2, 1, 0]);
    for mode in [Mode::Logical, Mode::Native] {
        let mut i = Interp::new(EvalConfig::with_mode(mode));
        for f in [
            "scheduler/base.lisp",
            "scheduler/procs.lisp",
            "scheduler/round_robin.lisp",
        ] {
            i.run_source(&corpus(f)).unwrap();
        }
        let r = run_scheduler(&mut i).unwrap();
        let got: Vec<String> = r.chain.iter().map(|m| m.to_string()).collect();
        let want: Vec<String> = chain.iter().map(|m| format!("({m})")).collect();
        assert_eq!(got, want, "{mode}");
    }
}

const DO_EXAMPLES_TRANSCRIPT: &str = "ST\n30\n(30 <ST>)\n(16 9 4 1)\n30\nF\n30\n0\n";

#[test]
fn transcripts_are_golden_and_deterministic() {
    let src = corpus("do_examples.lisp");
    for mode in [SessionMode::Logical, SessionMode::Native] {
        let config = SessionConfig {
            mode,
            ..SessionConfig::default()
        };
        let (a, code) = run_file_source(&src, &config);
        assert_eq!(code, 0);
        assert_eq!(a, DO_EXAMPLES_TRANSCRIPT, "{mode}");
        let (b, _) = run_file_source(&src, &config);
        assert_eq!(a, b);
    }
    let (empty, code) = run_file_source("", &SessionConfig::default());
    assert_eq!((empty.as_str(), code), ("", 0));
}
