use std::collections::BTreeSet;
use std::path::{Path, PathBuf};
use std::process::ExitCode;
use std::time::Duration;

use anyhow::{bail, Context};
use clap::{Args, Parser, Subcommand};

use lclean_core::annotate::{list_labels, Criterion};
use lclean_core::blocks::{detect_blocks, pair_counts};
use lclean_core::coverage::{self, ORACLE_LIMIT};
use lclean_core::pipeline::{self, load_input, PipelineConfig};
use lclean_core::prove::{prove_all, ProverConfig, SolverBackend, DEFAULT_SOLVER_COMMAND, SOLVER_ENV};
use lclean_core::status::{self, StatusMap};
use lclean_core::vcgen;
use lclean_core::{AnnotatedProgram, Error};

const FUEL: u64 = 1_000_000;

// Write errors on stdout (a closed pipe) are ignored.
macro_rules! out {
    ($($t:tt)*) => {{
        use std::io::Write;
        let _ = write!(std::io::stdout(), $($t)*);
    }};
}

macro_rules! outln {
    ($($t:tt)*) => {{
        use std::io::Write;
        let _ = writeln!(std::io::stdout(), $($t)*);
    }};
}

#[derive(Parser)]
#[command(name = "lclean", version, about = "Detects infeasible, duplicate and subsumed test objectives")]
struct Cli {
    #[command(subcommand)]
    command: Command,
}

#[derive(Args)]
struct InputArgs {
    /// WhileLang program, optionally carrying label pragmas.
    input: PathBuf,
    /// Add the labels of this criterion (dc, cc, mcc, gacc, wm).
    #[arg(long)]
    criterion: Option<Criterion>,
}

#[derive(Args, Clone)]
struct SolverArgs {
    /// Solver command; `{file}` is replaced by the SMT-LIB script path.
    #[arg(long, env = SOLVER_ENV, default_value = DEFAULT_SOLVER_COMMAND)]
    solver_cmd: String,
    /// Use the built-in enumerating solver over [min,max] instead of a command.
    #[arg(long, value_name = "MIN,MAX", value_parser = parse_range)]
    stub: Option<(i64, i64)>,
    /// Let the stub report `proven` after an exhaustive search.
    #[arg(long, requires = "stub")]
    stub_exhaustive: bool,
    /// Parallel solver processes (default: available cores).
    #[arg(long)]
    jobs: Option<usize>,
    /// Per-goal timeout in seconds.
    #[arg(long, default_value_t = 10.0)]
    timeout: f64,
    /// Per-process memory cap in MiB.
    #[arg(long, default_value_t = 1024)]
    memory: u64,
    /// One solver process per function instead of per goal.
    #[arg(long)]
    batch: bool,
}

impl SolverArgs {
    fn config(&self) -> anyhow::Result<ProverConfig> {
        let backend = match self.stub {
            Some((min, max)) => SolverBackend::Stub {
                min,
                max,
                exhaustive: self.stub_exhaustive,
            },
            None => SolverBackend::Command(self.solver_cmd.clone()),
        };
        if !(self.timeout.is_finite() && self.timeout > 0.0) {
            bail!(Error::Config(format!("timeout must be positive, got {}", self.timeout)));
        }
        let mut cfg = ProverConfig::new(backend);
        if let Some(j) = self.jobs {
            cfg.jobs = j;
        }
        cfg.timeout = Duration::from_secs_f64(self.timeout);
        cfg.memory_mb = self.memory;
        cfg.batch = self.batch;
        Ok(cfg)
    }
}

#[derive(Subcommand)]
enum Command {
    /// Print the program with the labels of a criterion.
    Annotate {
        #[command(flatten)]
        input: InputArgs,
        /// Write the annotated program here instead of stdout.
        #[arg(short, long)]
        output: Option<PathBuf>,
        /// Print the label list as JSON instead of the program.
        #[arg(long)]
        labels: bool,
    },
    /// Print co-reached label groups as JSON.
    Blocks {
        #[command(flatten)]
        input: InputArgs,
        /// Print pair counts per granularity instead.
        #[arg(long)]
        pairs: bool,
    },
    /// Write the verification conditions of the given steps as SMT-LIB files.
    Vcgen {
        #[command(flatten)]
        input: InputArgs,
        #[arg(long, value_parser = parse_steps, default_value = "1,2,3")]
        steps: BTreeSet<u8>,
        /// Earlier verdicts that restrict steps 2 and 3.
        #[arg(long)]
        status: Option<PathBuf>,
        #[arg(short, long)]
        output: PathBuf,
    },
    /// Prove the conditions of the given steps and print one JSON result per line.
    Prove {
        #[command(flatten)]
        input: InputArgs,
        #[arg(long, value_parser = parse_steps, default_value = "1")]
        steps: BTreeSet<u8>,
        #[arg(long)]
        status: Option<PathBuf>,
        #[command(flatten)]
        solver: SolverArgs,
    },
    /// Check a status file for integrity and print it in canonical form.
    Resolve {
        status: PathBuf,
        /// Rewrite the file in place.
        #[arg(long)]
        write: bool,
    },
    /// Summarize the artifacts of a run directory.
    Report {
        dir: PathBuf,
        #[arg(long)]
        json: bool,
    },
    /// Measure a test suite, raw and after pruning marked labels.
    Coverage {
        #[command(flatten)]
        input: InputArgs,
        /// JSON array of input vectors.
        #[arg(long)]
        suite: PathBuf,
        #[arg(long)]
        status: Option<PathBuf>,
        /// Also print the labels a dynamic analysis would flag.
        #[arg(long)]
        likely: bool,
        #[arg(long)]
        json: bool,
    },
    /// Check verdicts by running every input in [min,max]; exits 1 on a violation.
    Oracle {
        #[command(flatten)]
        input: InputArgs,
        #[arg(long)]
        status: PathBuf,
        #[arg(long, default_value_t = -3, allow_hyphen_values = true)]
        min: i64,
        #[arg(long, default_value_t = 3, allow_hyphen_values = true)]
        max: i64,
    },
    /// Run the whole pipeline into an output directory.
    Run {
        #[command(flatten)]
        input: InputArgs,
        #[arg(long, value_parser = parse_steps, default_value = "1,2,3")]
        steps: BTreeSet<u8>,
        #[arg(short, long)]
        output: PathBuf,
        #[command(flatten)]
        solver: SolverArgs,
    },
}

fn parse_steps(s: &str) -> Result<BTreeSet<u8>, String> {
    let mut out = BTreeSet::new();
    for part in s.split(',').map(str::trim).filter(|p| !p.is_empty()) {
        match part.parse::<u8>() {
            Ok(n @ 1..=3) => {
                out.insert(n);
            }
            _ => return Err(format!("`{part}` is not a step (expected 1, 2 or 3)")),
        }
    }
    if out.is_empty() {
        return Err("no steps given".into());
    }
    Ok(out)
}

fn parse_range(s: &str) -> Result<(i64, i64), String> {
    let (a, b) = s.split_once(',').ok_or("expected MIN,MAX")?;
    let a: i64 = a.trim().parse().map_err(|e| format!("{e}"))?;
    let b: i64 = b.trim().parse().map_err(|e| format!("{e}"))?;
    if a > b {
        return Err(format!("empty range {a},{b}"));
    }
    Ok((a, b))
}

fn load(input: &InputArgs) -> anyhow::Result<AnnotatedProgram> {
    Ok(load_input(&input.input, input.criterion)?)
}

fn load_status(path: Option<&Path>) -> anyhow::Result<StatusMap> {
    Ok(match path {
        Some(p) => status::load(p)?,
        None => StatusMap::new(),
    })
}

fn assertions(ap: &AnnotatedProgram, steps: &BTreeSet<u8>, statuses: &StatusMap) -> Vec<vcgen::Assertion> {
    let groups = detect_blocks(ap);
    let mut out = Vec::new();
    for step in steps {
        match step {
            1 => out.extend(vcgen::gen_step1(ap)),
            2 => out.extend(vcgen::gen_step2(ap, statuses)),
            _ => out.extend(vcgen::gen_step3(&groups, statuses).into_iter().flat_map(|(_, a)| a)),
        }
    }
    out
}

fn json<T: serde::Serialize>(v: &T) -> String {
    serde_json::to_string_pretty(v).expect("serializable")
}

fn execute(cmd: Command) -> anyhow::Result<ExitCode> {
    match cmd {
        Command::Annotate { input, output, labels } => {
            let ap = load(&input)?;
            let text = if labels {
                lclean_core::annotate::labels_to_json(&list_labels(&ap))
            } else {
                ap.to_source()
            };
            match output {
                Some(p) => std::fs::write(&p, text).with_context(|| p.display().to_string())?,
                None => out!("{text}"),
            }
        }
        Command::Blocks { input, pairs } => {
            let ap = load(&input)?;
            let groups = detect_blocks(&ap);
            if pairs {
                outln!("{}", json(&pair_counts(&ap, &groups)));
            } else {
                outln!("{}", json(&groups));
            }
        }
        Command::Vcgen {
            input,
            steps,
            status,
            output,
        } => {
            let ap = load(&input)?;
            let statuses = load_status(status.as_deref())?;
            let vcs = vcgen::wp(&ap, &detect_blocks(&ap), &assertions(&ap, &steps, &statuses));
            std::fs::create_dir_all(&output).with_context(|| output.display().to_string())?;
            for vc in &vcs {
                let p = output.join(vc.file_name());
                std::fs::write(&p, vc.smtlib()).with_context(|| p.display().to_string())?;
            }
            for step in &steps {
                let n = vcs.iter().filter(|v| v.purpose.step() == *step).count();
                outln!("step {step}: {n} conditions");
            }
        }
        Command::Prove {
            input,
            steps,
            status,
            solver,
        } => {
            let ap = load(&input)?;
            let statuses = load_status(status.as_deref())?;
            let vcs = vcgen::wp(&ap, &detect_blocks(&ap), &assertions(&ap, &steps, &statuses));
            for r in prove_all(&vcs, &solver.config()?)? {
                outln!("{}", serde_json::to_string(&r)?);
            }
        }
        Command::Resolve { status: path, write } => {
            let statuses = status::load(&path)?;
            status::check_integrity(&statuses)?;
            if write {
                status::save(&path, &statuses)?;
            } else {
                out!("{}", status::to_text(&statuses));
            }
        }
        Command::Report { dir, json: as_json } => {
            let rep = pipeline::report(&dir)?;
            if as_json {
                outln!("{}", json(&rep));
            } else {
                out!("{}", rep.to_text());
            }
        }
        Command::Coverage {
            input,
            suite,
            status,
            likely,
            json: as_json,
        } => {
            let ap = load(&input)?;
            let statuses = load_status(status.as_deref())?;
            let vecs = coverage::measure(&ap, &coverage::load_suite(&suite)?, FUEL)?;
            let rep = coverage::adjust(&vecs, &statuses);
            let marks = likely.then(|| coverage::dynamic_detect(&vecs));
            if as_json {
                let v = serde_json::json!({ "coverage": rep, "likely": marks });
                outln!("{}", json(&v));
            } else {
                out!("{}", rep.to_text());
                if let Some(m) = marks {
                    outln!("likely infeasible: {}", join(m.infeasible.iter()));
                    let d = m.duplicates.iter().map(|(a, b)| format!("{a}={b}"));
                    outln!("likely duplicates: {}", join(d));
                    let s = m.subsumed.iter().map(|(a, b)| format!("{a}<={b}"));
                    outln!("likely subsumed: {}", join(s));
                }
            }
        }
        Command::Oracle { input, status, min, max } => {
            let ap = load(&input)?;
            let statuses = status::load(&status)?;
            let v = coverage::oracle_check(&ap, &statuses, min, max, FUEL, ORACLE_LIMIT)?;
            outln!("{}", json(&v));
            if !v.passed() {
                return Ok(ExitCode::from(1));
            }
        }
        Command::Run {
            input,
            steps,
            output,
            solver,
        } => {
            let cfg = PipelineConfig {
                input: input.input,
                criterion: input.criterion,
                steps,
                prover: solver.config()?,
                outdir: output,
            };
            let outcome = pipeline::run(&cfg)?;
            out!("{}", outcome.report.to_text());
        }
    }
    Ok(ExitCode::SUCCESS)
}

fn join<T: ToString>(items: impl Iterator<Item = T>) -> String {
    let v: Vec<String> = items.map(|x| x.to_string()).collect();
    if v.is_empty() {
        "-".into()
    } else {
        v.join(" ")
    }
}

fn main() -> ExitCode {
    env_logger::Builder::from_env(env_logger::Env::default().default_filter_or("warn")).init();
    let cli = Cli::parse();
    match execute(cli.command) {
        Ok(code) => code,
        Err(e) => {
            eprintln!("error: {e:#}");
            ExitCode::from(2)
        }
    }
}
