use std::fs::File;
use std::io::{self, BufWriter, Write};
use std::path::PathBuf;
use std::process::ExitCode;

use clap::{Parser, Subcommand, ValueEnum};
use risnoma::constellation::{expressions_to_json, extract_ber_terms};
use risnoma::experiment::{list_presets, run_experiment, validate, Mode, Overrides};

#[derive(Parser)]
#[command(name = "risnoma", version, about = "BER experiments for RIS-assisted uplink NOMA")]
struct Cli {
    #[command(subcommand)]
    command: Command,
}

#[derive(Subcommand)]
enum Command {
    /// Run a preset file (or bundled preset name) and write CSV.
    Run {
        preset: String,
        #[arg(long, value_enum)]
        mode: Option<ModeArg>,
        #[arg(long)]
        runs: Option<u64>,
        #[arg(long)]
        seed: Option<u64>,
        /// Output file; stdout when omitted.
        #[arg(long)]
        out: Option<PathBuf>,
        #[arg(long, value_enum)]
        pa: Option<Switch>,
    },
    /// Check a preset without running it.
    Validate { preset: String },
    /// List bundled presets.
    Presets,
    /// Print the conditional BER terms for comma-separated bits per user.
    Terms { bits: String },
}

#[derive(Clone, Copy, ValueEnum)]
enum ModeArg {
    Analytic,
    Mc,
    Both,
}

impl From<ModeArg> for Mode {
    fn from(m: ModeArg) -> Mode {
        match m {
            ModeArg::Analytic => Mode::Analytic,
            ModeArg::Mc => Mode::Mc,
            ModeArg::Both => Mode::Both,
        }
    }
}

#[derive(Clone, Copy, ValueEnum)]
enum Switch {
    On,
    Off,
}

const VALIDATION_FAILURE: u8 = 1;
const RUNTIME_FAILURE: u8 = 2;

fn main() -> ExitCode {
    let cli = Cli::parse();
    match cli.command {
        Command::Presets => {
            for name in list_presets() {
                println!("{name}");
            }
            ExitCode::SUCCESS
        }
        Command::Validate { preset } => match validate(&preset) {
            Ok(p) => {
                println!("{}: ok ({} sweep points)", p.name, p.sweep().len());
                ExitCode::SUCCESS
            }
            Err(e) => {
                eprintln!("error: {e}");
                ExitCode::from(VALIDATION_FAILURE)
            }
        },
        Command::Terms { bits } => {
            let parsed: Result<Vec<u32>, _> = bits.split(',').map(|b| b.trim().parse()).collect();
            let Ok(parsed) = parsed else {
                eprintln!("error: bits must be a comma-separated list of integers");
                return ExitCode::from(VALIDATION_FAILURE);
            };
            match extract_ber_terms(&parsed) {
                Ok(exprs) => {
                    println!("{}", expressions_to_json(&exprs));
                    ExitCode::SUCCESS
                }
                Err(e) => {
                    eprintln!("error: {e}");
                    ExitCode::from(VALIDATION_FAILURE)
                }
            }
        }
        Command::Run {
            preset,
            mode,
            runs,
            seed,
            out,
            pa,
        } => {
            let overrides = Overrides {
                mode: mode.map(Mode::from),
                runs,
                seed,
                pa: pa.map(|s| matches!(s, Switch::On)),
            };
            let preset = match validate(&preset).and_then(|p| {
                let p = p.with_overrides(&overrides);
                p.validate().map(|_| p)
            }) {
                Ok(p) => p,
                Err(e) => {
                    eprintln!("error: {e}");
                    return ExitCode::from(VALIDATION_FAILURE);
                }
            };
            let result = match run_experiment(&preset) {
                Ok(r) => r,
                Err(e) => {
                    eprintln!("error: {e}");
                    return ExitCode::from(RUNTIME_FAILURE);
                }
            };
            let written = match &out {
                Some(path) => File::create(path)
                    .map_err(|e| format!("{}: {e}", path.display()))
                    .and_then(|f| {
                        let mut w = BufWriter::new(f);
                        result.write_csv(&mut w).map_err(|e| e.to_string())?;
                        w.flush().map_err(|e| e.to_string())
                    }),
                None => {
                    let stdout = io::stdout();
                    let mut lock = stdout.lock();
                    result.write_csv(&mut lock).map_err(|e| e.to_string())
                }
            };
            if let Err(e) = written {
                eprintln!("error: {e}");
                return ExitCode::from(RUNTIME_FAILURE);
            }
            let failed = result.failed_points();
            if failed > 0 {
                eprintln!("error: {failed} sweep point(s) failed; see the point lines in the output");
                return ExitCode::from(RUNTIME_FAILURE);
            }
            ExitCode::SUCCESS
        }
    }
}
