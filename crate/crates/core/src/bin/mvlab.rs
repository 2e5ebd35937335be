use std::path::PathBuf;
use std::process::ExitCode;

use clap::{Args, Parser, Subcommand};
use meanvalue::cli::{run_experiment, run_table, ExperimentConfig, ExperimentKind};

/// Mean value formula experiments.
///
/// Exit status: 0 when the outcome matches the expectation, 1 on mismatch,
/// 2 on usage or configuration errors.
#[derive(Parser)]
#[command(name = "mvlab", version)]
struct Cli {
    #[command(subcommand)]
    command: Command,
}

#[derive(Args)]
struct Common {
    /// Sampler and Monte Carlo seed.
    #[arg(long)]
    seed: Option<u64>,
    /// Quadrature rule, e.g. `gauss:r=8,a=32` or `mc:n=100000,seed=7`.
    #[arg(long)]
    rule: Option<String>,
    /// Output path prefix (a directory for `table`).
    #[arg(long)]
    out: Option<PathBuf>,
    /// Expected outcome: converges, diverges, inconclusive, pass,
    /// exponent:LO..HI or witness:LO..HI.
    #[arg(long)]
    expect: Option<String>,
}

impl Common {
    fn overrides(&self, with_out: bool) -> Vec<(&'static str, String)> {
        let mut v = Vec::new();
        if let Some(s) = self.seed {
            v.push(("seed", s.to_string()));
        }
        if let Some(r) = &self.rule {
            v.push(("rule", r.clone()));
        }
        if let Some(e) = &self.expect {
            v.push(("expect", e.clone()));
        }
        if let (true, Some(o)) = (with_out, &self.out) {
            v.push(("out", o.to_string_lossy().into_owned()));
        }
        v
    }
}

#[derive(Args)]
struct Run {
    /// A config file and/or `key=value` overrides, applied in order.
    items: Vec<String>,
    #[command(flatten)]
    common: Common,
}

#[derive(Subcommand)]
enum Command {
    /// Check a mean value expansion against its closed-form operator.
    Verify(Run),
    /// Solve a Dirichlet problem by iterating the mean value formula.
    Solve(Run),
    /// The non-admissible example with unbounded coefficients.
    Counterexample(Run),
    /// Horizontal expansions on the Heisenberg group.
    HeisVerify(Run),
    /// Quadrature trace-identity checks.
    Selftest(Run),
    /// Run every `*.cfg` in a directory.
    Table {
        dir: PathBuf,
        #[command(flatten)]
        common: Common,
    },
}

fn build(kind: ExperimentKind, run: &Run) -> meanvalue::Result<ExperimentConfig> {
    let mut cfg = ExperimentConfig::new(kind);
    for (i, item) in run.items.iter().enumerate() {
        if item.contains('=') {
            cfg.set_arg(i + 1, item)?;
        } else {
            cfg = ExperimentConfig::from_file(item.as_ref(), Some(kind))?;
        }
    }
    for (k, v) in run.common.overrides(true) {
        cfg.set(k, &v);
    }
    Ok(cfg)
}

fn main() -> ExitCode {
    let cli = Cli::parse();
    let (kind, run) = match &cli.command {
        Command::Verify(r) => (ExperimentKind::Verify, r),
        Command::Solve(r) => (ExperimentKind::Solve, r),
        Command::Counterexample(r) => (ExperimentKind::Counterexample, r),
        Command::HeisVerify(r) => (ExperimentKind::HeisVerify, r),
        Command::Selftest(r) => (ExperimentKind::Selftest, r),
        Command::Table { dir, common } => {
            let overrides: Vec<(String, String)> = common
                .overrides(false)
                .into_iter()
                .map(|(k, v)| (k.to_string(), v))
                .collect();
            return match run_table(dir, common.out.as_deref(), &overrides) {
                Ok((lines, all)) => {
                    print!("{lines}");
                    ExitCode::from(if all { 0 } else { 1 })
                }
                Err(e) => {
                    eprintln!("mvlab: {e}");
                    ExitCode::from(2)
                }
            };
        }
    };
    match build(kind, run).and_then(|cfg| run_experiment(&cfg)) {
        Ok(outcome) => {
            print!("{}", outcome.summary);
            for f in &outcome.files {
                eprintln!("wrote {}", f.display());
            }
            ExitCode::from(outcome.exit_code() as u8)
        }
        Err(e) => {
            eprintln!("mvlab: {e}");
            ExitCode::from(2)
        }
    }
}
