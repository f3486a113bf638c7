use std::fs;
use std::path::{Path, PathBuf};
use std::process::ExitCode;

use clap::{Args, Parser, Subcommand, ValueEnum};
use strucred::{GramianKind, ReductionMethod};
use strucred_cli::commands::{self, Output, Settings};
use strucred_cli::{CliError, Format, ModelFile};

#[derive(Parser)]
#[command(name = "strucred", version, about = "Structured model reduction of interconnected LTI systems")]
struct Cli {
    #[command(subcommand)]
    command: Command,
    #[command(flatten)]
    common: Common,
}

#[derive(Args)]
struct Common {
    #[arg(long, global = true, value_enum, default_value_t = MethodArg::Truncation)]
    method: MethodArg,
    #[arg(long, global = true, value_enum, default_value_t = GramianArg::Structured)]
    gramians: GramianArg,
    /// Relative-improvement tolerance of the subgradient descent
    #[arg(long, global = true, default_value_t = 1e-5)]
    tol: f64,
    #[arg(long = "max-iter", global = true, default_value_t = 300)]
    max_iter: usize,
    /// Output directory; without it the report goes to stdout
    #[arg(long, global = true)]
    out: Option<PathBuf>,
    /// Recorded in report metadata
    #[arg(long, global = true, default_value_t = 0)]
    seed: u64,
    #[arg(long, global = true, value_enum, default_value_t = FormatArg::Tsv)]
    format: FormatArg,
}

#[derive(Clone, Copy, ValueEnum)]
enum MethodArg {
    Truncation,
    Perturbation,
}

#[derive(Clone, Copy, ValueEnum)]
enum GramianArg {
    Structured,
    Generalized,
}

#[derive(Clone, Copy, ValueEnum)]
enum FormatArg {
    Tsv,
    JsonLikeText,
}

#[derive(Subcommand)]
enum Command {
    /// Structured and isolated Hankel singular values of every subsystem
    Hankel { model: PathBuf },
    /// Reduce to the given orders and report the closed-loop error
    Reduce {
        model: PathBuf,
        /// Comma-separated reduced orders, e.g. 6,4
        #[arg(long)]
        orders: String,
    },
    /// Error table over a grid of reduced orders
    Sweep {
        model: PathBuf,
        /// Candidate orders per subsystem, e.g. "8,6,4;10,8,6"
        #[arg(long)]
        orders: Option<String>,
        /// Refine every stable cell by subgradient descent
        #[arg(long)]
        improve: bool,
    },
    /// Refine a reduced model by subgradient descent
    Improve { model: PathBuf, reduced: PathBuf },
    /// Write the two-body mass-spring network
    DemoMassspring {
        #[arg(long, default_value_t = 10.0)]
        k: f64,
        #[arg(long, default_value = "8,10")]
        orders: String,
    },
}

impl Common {
    fn settings(&self) -> Settings {
        Settings {
            method: match self.method {
                MethodArg::Truncation => ReductionMethod::Truncation,
                MethodArg::Perturbation => ReductionMethod::Perturbation,
            },
            gramians: match self.gramians {
                GramianArg::Structured => GramianKind::Structured,
                GramianArg::Generalized => GramianKind::Generalized,
            },
            tol: self.tol,
            max_iter: self.max_iter,
            seed: self.seed,
            format: match self.format {
                FormatArg::Tsv => Format::Tsv,
                FormatArg::JsonLikeText => Format::JsonLike,
            },
        }
    }
}

fn load(path: &Path) -> Result<ModelFile, CliError> {
    let text = fs::read_to_string(path).map_err(|e| CliError::Read {
        path: path.display().to_string(),
        message: e.to_string(),
    })?;
    ModelFile::parse(&text)
}

fn write(path: &Path, contents: &str) -> Result<(), CliError> {
    fs::write(path, contents).map_err(|e| CliError::Write {
        path: path.display().to_string(),
        message: e.to_string(),
    })
}

fn run(cli: &Cli) -> Result<(&'static str, Output), CliError> {
    let s = cli.common.settings();
    let source = |p: &Path| p.display().to_string();
    Ok(match &cli.command {
        Command::Hankel { model } => ("hankel", commands::hankel(&load(model)?, &source(model), &s)?),
        Command::Reduce { model, orders } => {
            let orders = commands::parse_orders(orders)?;
            ("reduce", commands::reduce(&load(model)?, &source(model), &orders, &s)?)
        }
        Command::Sweep { model, orders, improve } => {
            let m = load(model)?;
            let grid = match orders {
                Some(text) => commands::parse_grid(text)?,
                None => commands::default_grid(&m.plant()?),
            };
            ("sweep", commands::sweep(&m, &source(model), &grid, *improve, &s)?)
        }
        Command::Improve { model, reduced } => (
            "improve",
            commands::improve(&load(model)?, &source(model), &load(reduced)?, &s)?,
        ),
        Command::DemoMassspring { k, orders } => {
            let o = commands::parse_orders(orders)?;
            if o.0.len() != 2 {
                return Err(CliError::Parse(format!("expected two body orders, got '{orders}'")));
            }
            ("demo-massspring", commands::demo_massspring(*k, o.0[0], o.0[1], &s)?)
        }
    })
}

fn emit(cli: &Cli, name: &str, out: &Output) -> Result<(), CliError> {
    let s = cli.common.settings();
    for w in &out.warnings {
        eprintln!("warning: {w}");
    }
    let ext = match s.format {
        Format::Tsv => "tsv",
        Format::JsonLike => "txt",
    };
    let report = out.report.render(s.format);
    match &cli.common.out {
        Some(dir) => {
            fs::create_dir_all(dir).map_err(|e| CliError::Write {
                path: dir.display().to_string(),
                message: e.to_string(),
            })?;
            write(&dir.join(format!("{name}.{ext}")), &report)?;
            for (file, contents) in &out.files {
                write(&dir.join(file), contents)?;
            }
        }
        None if matches!(cli.command, Command::DemoMassspring { .. }) => {
            print!("{}", out.files[0].1);
        }
        None => {
            print!("{report}");
            for (file, _) in &out.files {
                eprintln!("note: {file} not written; pass --out to keep it");
            }
        }
    }
    Ok(())
}

fn main() -> ExitCode {
    let cli = Cli::parse();
    match run(&cli).and_then(|(name, out)| emit(&cli, name, &out)) {
        Ok(()) => ExitCode::SUCCESS,
        Err(e) => {
            eprintln!("error: {e}");
            ExitCode::from(e.exit_code())
        }
    }
}
