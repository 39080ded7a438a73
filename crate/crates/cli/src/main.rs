//! `ibc`: scenario checks, simulation, demand projection, optimization,
//! TTS reports and QP dumps for internal-boundary capacity sharing.

mod commands;
mod rundir;

use std::path::PathBuf;
use std::process::ExitCode;

use clap::{Args, Parser, Subcommand, ValueEnum};

#[derive(Parser, Debug)]
#[command(name = "ibc", version, about = "Optimal internal-boundary capacity sharing on a bidirectional lane-free highway")]
struct Cli {
    #[command(subcommand)]
    command: Command,
}

#[derive(Subcommand, Debug)]
enum Command {
    /// Validate a scenario and print its dimensions.
    Check {
        #[command(flatten)]
        scenario: ScenarioArg,
        /// Print the normalized scenario config instead of the summary.
        #[arg(long)]
        emit: bool,
    },
    /// Run the cell transmission model under the no-control plan or a plan file.
    Simulate {
        #[command(flatten)]
        scenario: ScenarioArg,
        #[command(flatten)]
        variant: VariantArg,
        /// Plan CSV (`section,k_c,eps`); the no-control plan when omitted.
        #[arg(long)]
        plan: Option<PathBuf>,
        #[command(flatten)]
        out: OutArgs,
    },
    /// Project demands at free speed and list structural bottlenecks.
    Project {
        #[command(flatten)]
        scenario: ScenarioArg,
        #[command(flatten)]
        out: OutArgs,
    },
    /// Solve the sharing QP and validate the plan by re-simulation.
    Optimize {
        #[command(flatten)]
        scenario: ScenarioArg,
        #[command(flatten)]
        variant: VariantArg,
        #[command(flatten)]
        solver: SolverArgs,
        #[command(flatten)]
        out: OutArgs,
        /// Exit with status 3 when a report invariant is violated.
        #[arg(long)]
        strict: bool,
        /// Also write `timing.json` (wall-clock, so not reproducible).
        #[arg(long)]
        timing: bool,
    },
    /// TTS comparison of no-control, QP and re-simulated runs.
    Report {
        /// Scenario files or builtin names; repeat for several.
        #[arg(long, short, required = true, num_args = 1..)]
        scenario: Vec<String>,
        /// Capacity-drop variants.
        #[arg(long, value_enum, default_value_t = DropArg::Both)]
        capacity_drop: DropArg,
        #[command(flatten)]
        solver: SolverArgs,
        #[command(flatten)]
        out: OutArgs,
        /// Exit with status 3 when a report invariant is violated.
        #[arg(long)]
        strict: bool,
    },
    /// Write the assembled QP (and optionally its solution) as JSON.
    Dump {
        #[command(flatten)]
        scenario: ScenarioArg,
        #[command(flatten)]
        variant: VariantArg,
        /// Solve the dumped problem and write the solution too.
        #[arg(long)]
        solve: bool,
        #[command(flatten)]
        solver: SolverArgs,
        #[command(flatten)]
        out: OutArgs,
    },
}

#[derive(Args, Debug)]
struct ScenarioArg {
    /// Scenario TOML file or builtin name (`uncongested`, `congested`).
    #[arg(long, short)]
    scenario: String,
}

#[derive(Args, Debug)]
struct VariantArg {
    /// Capacity-drop variants; defaults to the scenario's own setting.
    #[arg(long, value_enum)]
    capacity_drop: Option<DropArg>,
}

#[derive(Clone, Copy, Debug, PartialEq, Eq, ValueEnum)]
enum DropArg {
    On,
    Off,
    Both,
}

#[derive(Clone, Copy, Debug, PartialEq, Eq, ValueEnum)]
enum MethodArg {
    /// Primal-dual interior point.
    Ipm,
    /// Operator splitting with active-set polish.
    Admm,
}

#[derive(Args, Debug)]
struct SolverArgs {
    #[arg(long, value_enum, default_value_t = MethodArg::Ipm)]
    method: MethodArg,
    /// Absolute residual tolerance.
    #[arg(long)]
    eps_abs: Option<f64>,
    /// Relative residual tolerance.
    #[arg(long)]
    eps_rel: Option<f64>,
    /// Iteration cap of the chosen method.
    #[arg(long)]
    max_iter: Option<usize>,
    /// Distance to the tightest flow bound above which a flow counts as held
    /// back (veh/h).
    #[arg(long, default_value_t = ibc_core::holding_back::DEFAULT_TOL)]
    holding_back_tol: f64,
    /// Print solver progress to stderr.
    #[arg(long)]
    verbose: bool,
}

#[derive(Args, Debug)]
struct OutArgs {
    /// Run directory; defaults to `<out-root>/<scenario>/<command>`.
    #[arg(long)]
    out: Option<PathBuf>,
    /// Root for default run directories.
    #[arg(long, env = "IBC_OUT_DIR", default_value = "runs")]
    out_root: PathBuf,
}

fn main() -> ExitCode {
    let cli = Cli::parse();
    match commands::run(cli.command) {
        Ok(code) => code,
        Err(err) => {
            // Some causes repeat their source in their own message.
            let mut msg = String::new();
            for cause in err.chain().map(|c| c.to_string()) {
                if !msg.contains(&cause) {
                    if !msg.is_empty() {
                        msg.push_str(": ");
                    }
                    msg.push_str(&cause);
                }
            }
            eprintln!("error: {msg}");
            ExitCode::from(commands::exit_code(&err))
        }
    }
}
