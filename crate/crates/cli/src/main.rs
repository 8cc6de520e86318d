use std::io::{BufRead, IsTerminal, Write};
use std::path::{Path, PathBuf};
use std::process::ExitCode;

use clap::{Parser, Subcommand, ValueEnum};
use dolisp::kernel::{Mode, NativeFault};
use dolisp::refinement::{check_constraints, run_scheduler};
use dolisp::session::{exit, run_file_source, run_transcript, Repl, SessionConfig, SessionMode};

#[derive(Clone, Copy, Debug, ValueEnum)]
enum Switch {
    On,
    Off,
}

#[derive(Clone, Copy, Debug, ValueEnum)]
enum CliMode {
    Logical,
    Native,
    Diff,
}

#[derive(Clone, Copy, Debug, ValueEnum)]
enum Fault {
    IgnoreFirstSetq,
}

#[derive(Parser, Debug)]
#[command(
    name = "dolisp",
    version,
    about = "Run, compare and check loop$ programs"
)]
struct Cli {
    /// Evaluation path: logical (do$), native (in place) or diff (both, compared)
    #[arg(
        long,
        global = true,
        env = "DOLISP_MODE",
        value_enum,
        default_value = "logical"
    )]
    mode: CliMode,

    /// Dynamic guard and type checking
    #[arg(
        long,
        global = true,
        env = "DOLISP_GUARD_CHECK",
        value_enum,
        default_value = "on"
    )]
    guard_check: Switch,

    /// Iteration cap for native loops
    #[arg(long, global = true, env = "DOLISP_CAP", default_value_t = 10_000_000)]
    cap: u64,

    /// Seed for randomized checks
    #[arg(long, global = true, env = "DOLISP_SEED", default_value_t = 0)]
    seed: u64,

    /// Trial count for randomized checks
    #[arg(long, global = true, env = "DOLISP_TRIALS", default_value_t = 1000)]
    trials: usize,

    /// Corrupt the native path (harness self-test)
    #[arg(long, global = true, value_enum, hide = true)]
    fault: Option<Fault>,

    #[command(subcommand)]
    command: Command,
}

#[derive(Subcommand, Debug)]
enum Command {
    /// Evaluate a file, printing one result line per form
    Run { path: PathBuf },
    /// Interactive session
    Repl,
    /// Run a file on both paths and report the first divergence
    Diff { path: PathBuf },
    /// Load files, then sample the constraints of every attached function
    CheckConstraints {
        #[arg(required = true)]
        paths: Vec<PathBuf>,
        /// Also evaluate (run <stobj>) and check its sum-rank chain
        #[arg(long)]
        run: bool,
    },
}

impl Cli {
    fn config(&self) -> SessionConfig {
        SessionConfig {
            mode: match self.mode {
                CliMode::Logical => SessionMode::Logical,
                CliMode::Native => SessionMode::Native,
                CliMode::Diff => SessionMode::Diff,
            },
            guard_check: matches!(self.guard_check, Switch::On),
            cap: self.cap,
            seed: self.seed,
            trials: self.trials,
            fault: self
                .fault
                .map(|Fault::IgnoreFirstSetq| NativeFault::IgnoreFirstSetq),
        }
    }
}

fn read(path: &Path) -> Result<String, i32> {
    std::fs::read_to_string(path).map_err(|e| {
        eprintln!("error: cannot read {}: {e}", path.display());
        exit::EVAL_ERROR
    })
}

fn run(cli: Cli) -> i32 {
    let mut config = cli.config();
    match &cli.command {
        Command::Run { path } => {
            let src = match read(path) {
                Ok(s) => s,
                Err(code) => return code,
            };
            let (text, code) = run_file_source(&src, &config);
            print!("{text}");
            code
        }
        Command::Diff { path } => {
            let src = match read(path) {
                Ok(s) => s,
                Err(code) => return code,
            };
            config.mode = SessionMode::Diff;
            let (text, code) = run_file_source(&src, &config);
            print!("{text}");
            code
        }
        Command::Repl => repl(config),
        Command::CheckConstraints { paths, run } => {
            if config.mode == SessionMode::Diff {
                config.mode = SessionMode::Logical;
            }
            let mode = if config.mode == SessionMode::Native {
                Mode::Native
            } else {
                Mode::Logical
            };
            let mut interp = config.interp(mode);
            for p in paths {
                let src = match read(p) {
                    Ok(s) => s,
                    Err(code) => return code,
                };
                let t = run_transcript(&mut interp, &src);
                if let Some(e) = t.error {
                    eprintln!("{}: {e}", p.display());
                    return exit::EVAL_ERROR;
                }
            }
            let report = match check_constraints(&mut interp, config.seed, config.trials) {
                Ok(r) => r,
                Err(e) => {
                    eprintln!("error: {e}");
                    return exit::EVAL_ERROR;
                }
            };
            print!("{report}");
            let mut code = if report.passed() {
                exit::OK
            } else {
                exit::DIVERGENCE
            };
            if *run {
                match run_scheduler(&mut interp) {
                    Ok(r) => {
                        print!("{}", r.output);
                        let chain: Vec<String> = r.chain.iter().map(|m| m.to_string()).collect();
                        println!("sum-rank chain: {}", chain.join(" "));
                        if !r.strictly_decreasing() {
                            println!("sum-rank chain is not strictly decreasing");
                            code = exit::DIVERGENCE;
                        }
                    }
                    Err(e) => {
                        println!("run: {e}");
                        code = if e.is_check_failure() {
                            exit::DIVERGENCE
                        } else {
                            exit::EVAL_ERROR
                        };
                    }
                }
            }
            code
        }
    }
}

fn repl(config: SessionConfig) -> i32 {
    let interactive = std::io::stdin().is_terminal();
    let mut session = Repl::new(config);
    let stdin = std::io::stdin();
    let mut out = std::io::stdout();
    let mut lines = stdin.lock().lines();
    loop {
        if interactive {
            let _ = write!(out, "{}", session.prompt());
            let _ = out.flush();
        }
        let Some(Ok(line)) = lines.next() else {
            break;
        };
        let reply = session.feed(&line);
        let _ = write!(out, "{}", reply.output);
        if reply.quit {
            break;
        }
    }
    exit::OK
}

fn main() -> ExitCode {
    let cli = Cli::parse();
    let code = dolisp::run_with_stack(move || run(cli));
    ExitCode::from(code as u8)
}
