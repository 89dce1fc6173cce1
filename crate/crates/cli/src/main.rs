use std::io::Write;
use std::path::PathBuf;
use std::process::ExitCode;

use ampc_cli::commands::{self, load_vf, parse_policy_list, thread_cap};
use ampc_cli::{BenchOptions, CliError, PolicyKind, RunConfig, SimulateOptions};
use clap::{Parser, ValueEnum};

#[derive(Clone, Copy, Debug, ValueEnum)]
enum Command {
    /// Sample, fit, and write a value-function artifact.
    Synth,
    /// Run one closed loop and write its trajectory CSV.
    Simulate,
    /// Compare average costs of several policies.
    Eval,
    /// Time the decision paths.
    Bench,
}

#[derive(Debug, Parser)]
#[command(name = "ampc", version, about = "Approximate MPC for switched converters")]
struct Args {
    command: Command,
    #[arg(long)]
    config: PathBuf,
    /// Value-function artifact (input for simulate/eval/bench).
    #[arg(long)]
    vf: Option<PathBuf>,
    /// `ampc`, `greedy` or `fcs-mpc:T`; comma-separated for eval.
    #[arg(long, default_value = "ampc")]
    policy: String,
    /// Output file; stdout when omitted (synth defaults to `vf.txt`).
    #[arg(long)]
    out: Option<PathBuf>,
    /// Overrides the sampling seed (synth) or state seed (bench).
    #[arg(long)]
    seed: Option<u64>,
    /// Leave the latency column empty for byte-reproducible trajectories.
    #[arg(long)]
    no_latency: bool,
    /// Decisions per path per repeat (bench).
    #[arg(long, default_value_t = 10_000)]
    decisions: usize,
}

fn emit(out: Option<&PathBuf>, text: &str) -> Result<(), CliError> {
    match out {
        Some(p) => std::fs::write(p, text)
            .map_err(|e| CliError::Config(format!("{}: {e}", p.display()))),
        None => std::io::stdout()
            .write_all(text.as_bytes())
            .map_err(|e| CliError::Config(e.to_string())),
    }
}

fn run(args: Args) -> Result<(), CliError> {
    let cfg = RunConfig::load(&args.config)?;
    let vf = args.vf.as_deref().map(load_vf).transpose()?;
    match args.command {
        Command::Synth => {
            let out = args.out.clone().unwrap_or_else(|| PathBuf::from("vf.txt"));
            let res = commands::synth(&cfg, args.seed, thread_cap()?, &out)?;
            eprint!("{}", res.report);
        }
        Command::Simulate => {
            let kind: PolicyKind = args.policy.parse()?;
            let opts = SimulateOptions { record_latency: !args.no_latency };
            emit(args.out.as_ref(), &commands::simulate(&cfg, vf.as_ref(), kind, opts)?)?;
        }
        Command::Eval => {
            let kinds = parse_policy_list(&args.policy)?;
            emit(args.out.as_ref(), &commands::eval(&cfg, vf.as_ref(), &kinds)?)?;
        }
        Command::Bench => {
            let vf = vf.ok_or_else(|| CliError::Config("bench needs --vf".into()))?;
            let opts = BenchOptions {
                decisions: args.decisions,
                seed: args.seed,
                ..BenchOptions::default()
            };
            emit(args.out.as_ref(), &commands::bench(&cfg, &vf, opts)?)?;
        }
    }
    Ok(())
}

fn main() -> ExitCode {
    let args = match Args::try_parse() {
        Ok(a) => a,
        Err(e) => {
            let code = if e.use_stderr() { 2 } else { 0 };
            let _ = e.print();
            return ExitCode::from(code);
        }
    };
    match run(args) {
        Ok(()) => ExitCode::SUCCESS,
        Err(e) => {
            eprintln!("ampc: {e}");
            ExitCode::from(e.exit_code() as u8)
        }
    }
}
