mod config;
mod failure;
mod ops;

use std::path::{Path, PathBuf};
use std::process::ExitCode;
use std::time::Instant;

use clap::{Args, Parser, Subcommand};
use serde::Deserialize;
use serde_json::{json, Value};
use thermoqm::Exec;

use config::{Operation, Space, Thresholds};
use failure::{Failure, EXIT_PASS, EXIT_THRESHOLD};
use ops::Ctx;

/// Experiments on quasimorphisms over subshifts of finite type.
///
/// Every operation reads a JSON config. Exit codes: 0 pass, 1 threshold
/// failure, 2 input error, 3 resource limit.
#[derive(Parser)]
#[command(name = "thermoqm", version)]
struct Cli {
    /// Worker threads; results do not depend on it.
    #[arg(long, global = true)]
    threads: Option<usize>,
    /// Record wall time in the summary.
    #[arg(long, global = true)]
    timing: bool,
    /// Directory for summary.json and CSV files, overriding the config.
    #[arg(long, global = true)]
    out: Option<PathBuf>,
    #[command(subcommand)]
    command: Command,
}

#[derive(Args)]
struct Target {
    /// JSON config file.
    config: PathBuf,
}

#[derive(Subcommand)]
enum Command {
    /// Check a transition matrix and report word counts.
    SftValidate(Target),
    /// List admissible or periodic words of length n.
    Words(Target),
    /// Pressure interval from periodic partition sums.
    Pressure(Target),
    /// Periodic-orbit approximant of the equilibrium state.
    Gibbs(Target),
    /// Gibbs ratio bounds and distance to the approximant.
    GibbsCheck(Target),
    /// Block entropies of a Markov measure.
    Entropy(Target),
    /// Entropy plus integral against the pressure.
    Variational(Target),
    /// Depth-k potential of a measure.
    Potential(Target),
    /// Komlós averaged potential of a quasimorphism.
    Komlos(Target),
    /// Periodic-orbit cohomology test.
    Livsic(Target),
    /// Cesàro transfer function of a centered potential.
    Coboundary(Target),
    /// Normalize a Markov potential.
    Normalize(Target),
    /// Solve (Id - R) h = psi.
    SolveCohomological(Target),
    /// Limit variance computed two ways.
    Variance(Target),
    /// Central limit experiment.
    Clt(Target),
    /// Functional central limit checks.
    Invariance(Target),
    /// Iterated logarithm statistic along one orbit.
    Lil(Target),
    /// Large deviation tails and the Cramér rate.
    Deviations(Target),
    /// Cyclic words against the Parry measure of a free group.
    Compactify(Target),
    /// Central limit experiment on spheres of a free group.
    Spherical(Target),
    /// Run every config listed in a manifest.
    Suite(Target),
    /// Run a config naming its own operation.
    Run(Target),
}

impl Command {
    fn split(&self) -> (Option<Operation>, &Path) {
        use Command::*;
        let (op, t) = match self {
            SftValidate(t) => (Some(Operation::SftValidate), t),
            Words(t) => (Some(Operation::Words), t),
            Pressure(t) => (Some(Operation::Pressure), t),
            Gibbs(t) => (Some(Operation::Gibbs), t),
            GibbsCheck(t) => (Some(Operation::GibbsCheck), t),
            Entropy(t) => (Some(Operation::Entropy), t),
            Variational(t) => (Some(Operation::Variational), t),
            Potential(t) => (Some(Operation::Potential), t),
            Komlos(t) => (Some(Operation::Komlos), t),
            Livsic(t) => (Some(Operation::Livsic), t),
            Coboundary(t) => (Some(Operation::Coboundary), t),
            Normalize(t) => (Some(Operation::Normalize), t),
            SolveCohomological(t) => (Some(Operation::SolveCohomological), t),
            Variance(t) => (Some(Operation::Variance), t),
            Clt(t) => (Some(Operation::Clt), t),
            Invariance(t) => (Some(Operation::Invariance), t),
            Lil(t) => (Some(Operation::Lil), t),
            Deviations(t) => (Some(Operation::Deviations), t),
            Compactify(t) => (Some(Operation::Compactify), t),
            Spherical(t) => (Some(Operation::Spherical), t),
            Suite(t) | Run(t) => (None, t),
        };
        (op, &t.config)
    }
}

struct Global {
    exec: Exec,
    timing: bool,
}

fn write_outputs(dir: &Path, summary: &Value, files: &[(String, String)]) -> Result<(), Failure> {
    std::fs::create_dir_all(dir)?;
    let text = serde_json::to_string_pretty(summary).expect("summary serializes");
    std::fs::write(dir.join("summary.json"), text + "\n")?;
    for (name, body) in files {
        std::fs::write(dir.join(name), body)?;
    }
    Ok(())
}

/// Run one config. Returns the exit code and the summary on success.
fn run_config(path: &Path, forced: Option<Operation>, out: Option<&Path>, g: &Global) -> Result<(u8, Value), Failure> {
    let loaded = config::load(path)?;
    let cfg = &loaded.config;
    let op = match (forced, cfg.operation) {
        (Some(f), Some(c)) if f != c => {
            return Err(Failure::input(
                "operation_mismatch",
                format!("config names {} but {} was invoked", c.name(), f.name()),
            ))
        }
        (Some(f), _) => f,
        (None, Some(c)) => c,
        (None, None) => return Err(Failure::input("missing_field", "operation is required")),
    };
    let space = Space::build(&cfg.sft, &loaded.dir)?;
    if let Some(cap) = cfg.max_words {
        space.sft.set_word_cap(cap);
    }
    let ctx = Ctx { cfg, space, th: Thresholds::new(cfg.thresholds.clone()), exec: g.exec.clone() };
    let start = Instant::now();
    let outcome = ops::dispatch(op, &ctx)?;
    let elapsed = start.elapsed().as_secs_f64();
    let unused = ctx.th.unused();
    if !unused.is_empty() {
        return Err(Failure::input("unknown_threshold", format!("{} does not use thresholds {unused:?}", op.name())));
    }
    let pass = outcome.checks.iter().all(|c| c.pass);
    let mut summary = json!({
        "operation": op.name(),
        "inputs": loaded.raw,
        "outputs": outcome.outputs,
        "checks": outcome.checks,
        "pass": pass,
        "files": outcome.files.iter().map(|f| &f.0).collect::<Vec<_>>(),
    });
    if g.timing {
        summary["wall_time_s"] = json!(elapsed);
    }
    let dir = out.map(Path::to_path_buf).or_else(|| cfg.output.as_ref().map(|o| loaded.dir.join(o)));
    if let Some(dir) = dir {
        write_outputs(&dir, &summary, &outcome.files)?;
    }
    Ok((if pass { EXIT_PASS } else { EXIT_THRESHOLD }, summary))
}

#[derive(Deserialize)]
#[serde(deny_unknown_fields)]
struct Manifest {
    configs: Vec<PathBuf>,
}

fn run_suite(path: &Path, out: Option<&Path>, g: &Global) -> Result<(u8, Value), Failure> {
    let text = std::fs::read_to_string(path)
        .map_err(|e| Failure::input("unreadable_manifest", format!("{}: {e}", path.display())))?;
    let manifest: Manifest = serde_json::from_str(&text)
        .map_err(|e| Failure::input("invalid_manifest", format!("{}: {e}", path.display())))?;
    let dir = path.parent().unwrap_or(Path::new(""));
    let mut worst = EXIT_PASS;
    let mut rows = Vec::with_capacity(manifest.configs.len());
    for (i, rel) in manifest.configs.iter().enumerate() {
        let stem = rel.file_stem().and_then(|s| s.to_str()).unwrap_or("config");
        let sub = out.map(|o| o.join(format!("{:02}_{stem}", i + 1)));
        let (code, row) = match run_config(&dir.join(rel), None, sub.as_deref(), g) {
            Ok((code, summary)) => (code, json!({
                "config": rel,
                "operation": summary["operation"],
                "pass": summary["pass"],
                "exit_code": code,
            })),
            Err(f) => (f.code, json!({ "config": rel, "pass": false, "exit_code": f.code, "error": f })),
        };
        worst = worst.max(code);
        rows.push(row);
    }
    let table = json!({ "rows": rows, "pass": worst == EXIT_PASS });
    if let Some(o) = out {
        write_outputs(o, &table, &[])?;
    }
    Ok((worst, table))
}

fn main() -> ExitCode {
    let cli = Cli::parse();
    let exec = match cli.threads {
        Some(0) => {
            eprintln!("{}", json!(Failure::input("invalid_argument", "--threads must be positive")));
            return ExitCode::from(failure::EXIT_INPUT);
        }
        Some(n) => Exec::with_threads(n),
        None => Exec::global(),
    };
    let g = Global { exec, timing: cli.timing };
    let result = match &cli.command {
        Command::Suite(t) => run_suite(&t.config, cli.out.as_deref(), &g),
        cmd => {
            let (op, path) = cmd.split();
            run_config(path, op, cli.out.as_deref(), &g)
        }
    };
    match result {
        Ok((code, summary)) => {
            println!("{}", serde_json::to_string_pretty(&summary).expect("summary serializes"));
            ExitCode::from(code)
        }
        Err(f) => {
            eprintln!("{}", json!(f));
            ExitCode::from(f.code)
        }
    }
}
