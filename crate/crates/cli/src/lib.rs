//! Command-line front end: argument definitions, subcommand drivers, file
//! formats and plots.

pub mod commands;
pub mod io;
pub mod plot;

use std::path::PathBuf;

use clap::{Args, Parser, Subcommand, ValueEnum};

#[derive(Debug, Parser)]
#[command(
    name = "beatlab",
    version,
    about = "Simulate and analyze beating between independent pulsed light sources"
)]
pub struct Cli {
    #[command(subcommand)]
    pub command: Command,

    /// Worker threads (default: all cores).
    #[arg(long, global = true)]
    pub jobs: Option<usize>,
}

#[derive(Clone, Copy, Debug, Default, PartialEq, Eq, ValueEnum)]
pub enum Format {
    Csv,
    Svg,
    #[default]
    Both,
}

impl Format {
    pub fn csv(self) -> bool {
        matches!(self, Format::Csv | Format::Both)
    }

    pub fn svg(self) -> bool {
        matches!(self, Format::Svg | Format::Both)
    }
}

#[derive(Clone, Debug, Args)]
pub struct Common {
    /// Output directory (created if missing).
    #[arg(long)]
    pub out: PathBuf,

    /// Which artifacts to write.
    #[arg(long, value_enum, default_value_t = Format::Both)]
    pub format: Format,
}

#[derive(Clone, Debug, Args)]
pub struct RunConfig {
    /// Run config (TOML). Defaults apply to missing keys.
    #[arg(long)]
    pub config: Option<PathBuf>,

    /// Overrides `master_seed`.
    #[arg(long)]
    pub seed: Option<u64>,

    /// Overrides `n_pulses`.
    #[arg(long)]
    pub pulses: Option<usize>,
}

#[derive(Debug, Subcommand)]
pub enum Command {
    /// Synthesize an ensemble of pulse traces.
    Simulate {
        #[command(flatten)]
        run: RunConfig,
        #[command(flatten)]
        common: Common,
    },
    /// Mean trace, g2 and phase statistics of a stored ensemble.
    Analyze {
        /// Directory written by `simulate`.
        ensemble: PathBuf,
        #[command(flatten)]
        common: Common,
        /// Only the g2 table (flags combine; none means all).
        #[arg(long)]
        g2: bool,
        /// Only the phase table and uniformity test.
        #[arg(long)]
        phases: bool,
        /// Only the mean trace.
        #[arg(long)]
        mean: bool,
        /// Largest delay for g2, μs (default: 5 / gamma, capped by the window).
        #[arg(long)]
        tau_max: Option<f64>,
        /// Histogram bins for the phase test.
        #[arg(long, default_value_t = 20)]
        bins: usize,
    },
    /// Fit the dephased beat law to a `tau_us,g2` table.
    Fit {
        g2_csv: PathBuf,
        #[command(flatten)]
        common: Common,
        /// Fit an overall scale B instead of fixing it at 1.
        #[arg(long)]
        free_baseline: bool,
        /// Iteration cap for the solver.
        #[arg(long, default_value_t = 200)]
        max_iterations: usize,
    },
    /// Beat frequency against write power, or dephasing rate against temperature.
    Sweep {
        #[command(flatten)]
        run: RunConfig,
        #[command(flatten)]
        common: Common,
        /// Write power grid `start:stop:count`, mW.
        #[arg(
            long,
            conflicts_with = "temperature",
            required_unless_present = "temperature"
        )]
        power: Option<String>,
        /// Temperature grid `start:stop:count`, K.
        #[arg(long)]
        temperature: Option<String>,
        /// Traces per power point.
        #[arg(long, default_value_t = 16)]
        traces: usize,
    },
    /// Every figure-type output from one config in one directory.
    Report {
        #[command(flatten)]
        run: RunConfig,
        #[command(flatten)]
        common: Common,
    },
}

/// Process exit code for an error: 2 for bad input, 1 otherwise.
pub fn exit_code(err: &beatlab::Error) -> i32 {
    if err.is_input_error() {
        2
    } else {
        1
    }
}
