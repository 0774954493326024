use clap::{Args, Parser, Subcommand, ValueEnum};
use icx_cli::commands::{self, CommonOpts, ReproduceTarget};
use icx_cli::report::Format;
use icx_cli::{config, exit};
use std::path::PathBuf;
use std::process::ExitCode;

/// Strategy-aware experiment design: simulate treatment-selection games,
/// certify incentive compatibility, build variance-stabilizing score
/// transforms and compare design power.
#[derive(Parser)]
#[command(name = "icx", version)]
struct Cli {
    #[command(subcommand)]
    command: Command,
    /// Number of worker threads for internal parallelism (0 = automatic).
    /// Results are bit-identical for any setting.
    #[arg(long, global = true, default_value_t = 0)]
    threads: usize,
}

#[derive(Subcommand)]
enum Command {
    /// Estimate winning probabilities at the natural profile by Monte Carlo
    Simulate(ScenarioArgs),
    /// Certify or refute incentive compatibility over the action grids
    IcCheck(IcCheckArgs),
    /// Compare design power against an alternative transform
    Power(PowerArgs),
    /// Build a variance-stabilizing transform and write its knot table
    Stabilize(StabilizeArgs),
    /// Re-run a bundled reference study and diff against expected values
    Reproduce(ReproduceArgs),
    /// Parse a config and print its canonical form
    DumpConfig(DumpArgs),
}

#[derive(Args)]
struct ScenarioArgs {
    /// Scenario configuration file
    #[arg(long)]
    config: PathBuf,
    /// Override [simulation].seed
    #[arg(long)]
    seed: Option<u64>,
    /// Override [simulation].reps
    #[arg(long)]
    reps: Option<u64>,
    /// Write the report here instead of stdout
    #[arg(long)]
    out: Option<PathBuf>,
    /// Output format
    #[arg(long, value_enum, default_value_t = FormatArg::Csv)]
    format: FormatArg,
}

#[derive(Args)]
struct IcCheckArgs {
    #[command(flatten)]
    common: ScenarioArgs,
    /// Certification method
    #[arg(long, value_enum, default_value_t = MethodArg::Analytic)]
    method: MethodArg,
}

#[derive(Args)]
struct PowerArgs {
    #[command(flatten)]
    common: ScenarioArgs,
    /// Transform of the comparison design D' (same statistic)
    #[arg(long)]
    alt_transform: String,
    /// Certification and estimation method
    #[arg(long, value_enum, default_value_t = MethodArg::Analytic)]
    method: MethodArg,
}

#[derive(Args)]
struct StabilizeArgs {
    /// Scenario configuration file
    #[arg(long)]
    config: PathBuf,
    /// Where to write the two-column knot table
    #[arg(long)]
    out: PathBuf,
    /// Output format of the summary
    #[arg(long, value_enum, default_value_t = FormatArg::Table)]
    format: FormatArg,
}

#[derive(Args)]
struct ReproduceArgs {
    /// Reference study: table2, example2a, example2d, example3b, example3g
    target: String,
    /// Override the study's default seed
    #[arg(long)]
    seed: Option<u64>,
    /// Override the study's default replication count
    #[arg(long)]
    reps: Option<u64>,
    /// Output format
    #[arg(long, value_enum, default_value_t = FormatArg::Table)]
    format: FormatArg,
}

#[derive(Args)]
struct DumpArgs {
    /// Scenario configuration file
    #[arg(long)]
    config: PathBuf,
}

#[derive(Clone, Copy, ValueEnum)]
enum FormatArg {
    Csv,
    Table,
}

impl From<FormatArg> for Format {
    fn from(f: FormatArg) -> Format {
        match f {
            FormatArg::Csv => Format::Csv,
            FormatArg::Table => Format::Table,
        }
    }
}

#[derive(Clone, Copy, ValueEnum, PartialEq, Eq)]
enum MethodArg {
    Analytic,
    Mc,
}

impl ScenarioArgs {
    fn common(&self) -> CommonOpts {
        CommonOpts {
            config: self.config.clone(),
            seed: self.seed,
            reps: self.reps,
            out: self.out.clone(),
            format: self.format.into(),
        }
    }
}

fn main() -> ExitCode {
    let cli = Cli::parse();
    let pool = rayon::ThreadPoolBuilder::new()
        .num_threads(cli.threads)
        .build();
    let pool = match pool {
        Ok(p) => p,
        Err(e) => {
            eprintln!("error: cannot build thread pool: {e}");
            return ExitCode::from(exit::RUNTIME);
        }
    };
    let code = pool.install(|| run(cli.command));
    match code {
        Ok(code) => ExitCode::from(code),
        Err(e) => {
            eprintln!("error: {e}");
            ExitCode::from(e.code)
        }
    }
}

fn method_of(arg: MethodArg) -> commands::Method {
    match arg {
        MethodArg::Analytic => commands::Method::Analytic,
        MethodArg::Mc => commands::Method::MonteCarlo,
    }
}

fn run(command: Command) -> Result<u8, commands::CmdError> {
    match command {
        Command::Simulate(args) => commands::simulate(&args.common()),
        Command::IcCheck(args) => commands::ic_check(&args.common.common(), method_of(args.method)),
        Command::Power(args) => commands::power(
            &args.common.common(),
            &args.alt_transform,
            method_of(args.method),
        ),
        Command::Stabilize(args) => {
            let common = CommonOpts {
                config: args.config,
                seed: None,
                reps: None,
                out: None,
                format: args.format.into(),
            };
            commands::stabilize(&common, &args.out)
        }
        Command::Reproduce(args) => {
            let target =
                ReproduceTarget::parse(&args.target).map_err(commands::CmdError::config)?;
            commands::reproduce(target, args.seed, args.reps, args.format.into())
        }
        Command::DumpConfig(args) => {
            let text = std::fs::read_to_string(&args.config).map_err(|e| {
                commands::CmdError::config(format!("cannot read {}: {e}", args.config.display()))
            })?;
            let parsed: config::ScenarioConfig = toml::from_str(&text).map_err(|e| {
                commands::CmdError::config(format!("{}: {e}", args.config.display()))
            })?;
            print!("{}", config::dump(&parsed));
            Ok(exit::OK)
        }
    }
}
