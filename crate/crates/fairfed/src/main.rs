use std::path::{Path, PathBuf};
use std::process::ExitCode;

use clap::{Parser, Subcommand};
use fairfed::config::RunSpec;
use fairfed::presets::{self, DEFAULT_SEED};
use fairfed::{runner, summary, Result};

#[derive(Parser)]
#[command(
    name = "fairfed",
    version,
    about = "Availability-aware fair client selection experiments"
)]
struct Cli {
    #[command(subcommand)]
    command: Command,
}

#[derive(Subcommand)]
enum Command {
    /// Run a JSON config; both arms share each availability draw.
    Run {
        #[arg(long)]
        config: PathBuf,
        /// Overrides the config seed.
        #[arg(long)]
        seed: Option<u64>,
        /// Output directory [default: $FAIRFED_OUT or ./fairfed_out].
        #[arg(long)]
        out: Option<PathBuf>,
        /// Overrides the replicate count.
        #[arg(long)]
        replicates: Option<usize>,
    },
    /// Run a named scenario and its checks; exit 3 if a check fails.
    #[command(after_help = PRESET_HELP)]
    Preset {
        /// One of the preset names listed by `fairfed preset --help`.
        name: String,
        #[arg(long, default_value_t = DEFAULT_SEED)]
        seed: u64,
        /// Output directory [default: <$FAIRFED_OUT or ./fairfed_out>/<name>].
        #[arg(long)]
        out: Option<PathBuf>,
    },
    /// Check a config without running it or writing anything.
    Validate {
        #[arg(long)]
        config: PathBuf,
    },
    /// Summarize final rounds of every metrics log under a directory.
    Summarize {
        #[arg(long = "in")]
        input: PathBuf,
    },
}

const PRESET_HELP: &str =
    "Presets: lemma1_convergence, lemma2_parity, theorem2_limits, appendix_a_identity, \
appendix_c_drift, surrogate_bounds, table2_comparison, figs34_trend";

fn default_out() -> PathBuf {
    std::env::var_os("FAIRFED_OUT").map_or_else(|| PathBuf::from("fairfed_out"), PathBuf::from)
}

fn base_dir(config: &Path) -> PathBuf {
    config.parent().map(Path::to_path_buf).unwrap_or_default()
}

fn execute(cmd: Command) -> Result<ExitCode> {
    match cmd {
        Command::Run {
            config,
            seed,
            out,
            replicates,
        } => {
            let mut spec = RunSpec::load(&config)?;
            if let Some(s) = seed {
                spec.seed = s;
            }
            if let Some(r) = replicates {
                spec.replicates = r;
            }
            let out = out.unwrap_or_else(default_out);
            runner::run_to_dir(&spec, &base_dir(&config), &out)?;
            print!("{}", summary::render(&summary::collect(&out)?));
            Ok(ExitCode::SUCCESS)
        }
        Command::Preset { name, seed, out } => {
            let preset = presets::find(&name)?;
            let out = out.unwrap_or_else(|| default_out().join(preset.name));
            let reports = preset.run(seed, &out)?;
            for r in &reports {
                println!("{r}");
            }
            println!("outputs in {}", out.display());
            Ok(if reports.iter().all(|r| r.pass) {
                ExitCode::SUCCESS
            } else {
                ExitCode::from(3)
            })
        }
        Command::Validate { config } => {
            RunSpec::load(&config)?.validate(&base_dir(&config))?;
            println!("{}: ok", config.display());
            Ok(ExitCode::SUCCESS)
        }
        Command::Summarize { input } => {
            print!("{}", summary::render(&summary::collect(&input)?));
            Ok(ExitCode::SUCCESS)
        }
    }
}

fn main() -> ExitCode {
    let cli = match Cli::try_parse() {
        Ok(cli) => cli,
        Err(e) => {
            let _ = e.print();
            // usage problems count as configuration errors
            return if e.use_stderr() {
                ExitCode::from(1)
            } else {
                ExitCode::SUCCESS
            };
        }
    };
    match execute(cli.command) {
        Ok(code) => code,
        Err(e) => {
            eprintln!("error: {e}");
            ExitCode::from(e.exit_code())
        }
    }
}
