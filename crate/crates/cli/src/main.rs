use std::path::{Path, PathBuf};
use std::process::ExitCode;

use clap::{Args, Parser, Subcommand, ValueEnum};

use nvltm_cli::csv_io::{read_csv, Column, Table};
use nvltm_cli::output::OutputDir;
use nvltm_cli::{
    parse_config, run_scenario, run_scenario_with_workers, selftest, CliError, CliResult, RunReport, DEFAULT_OUT_DIR,
    OUT_DIR_ENV,
};
use nvltm_core::analysis::{fit_lorentzian, fit_threshold, lsd};
use nvltm_core::{FitResult, TimeTrace, TraceMeta};

#[derive(Parser)]
#[command(name = "nvltm", version, about = "NV-diamond laser-threshold magnetometer simulator")]
struct Cli {
    #[command(subcommand)]
    command: Command,
}

#[derive(Args)]
struct Common {
    /// Base output directory; each run writes to `<out>/<run name>/`.
    #[arg(long, env = OUT_DIR_ENV, default_value = DEFAULT_OUT_DIR)]
    out: PathBuf,
    /// Print nothing on success.
    #[arg(long)]
    quiet: bool,
}

#[derive(Subcommand)]
enum Command {
    /// Run the scenario described by a config file.
    Simulate {
        #[arg(long)]
        config: PathBuf,
        /// Overrides `[run] seed`.
        #[arg(long)]
        seed: Option<u64>,
        /// Worker threads; defaults to all cores.
        #[arg(long)]
        workers: Option<usize>,
        #[command(flatten)]
        common: Common,
    },
    /// Fit or transform a CSV table written by `simulate`.
    Analyze {
        /// Input CSV file.
        input: PathBuf,
        #[arg(long, value_enum)]
        kind: AnalysisKind,
        /// Column holding the values to analyze.
        #[arg(long, default_value = "voltage")]
        column: String,
        /// Segment length in seconds for `lsd`.
        #[arg(long, default_value_t = 1.0)]
        segment: f64,
        /// Number of peaks for `lorentzian`.
        #[arg(long, default_value_t = 2)]
        peaks: usize,
        #[command(flatten)]
        common: Common,
    },
    /// Check and print a finished run's report.
    Report {
        /// Run directory containing `report.txt`.
        dir: PathBuf,
        #[arg(long)]
        quiet: bool,
    },
    /// Run the built-in numerical checks.
    Selftest {
        #[arg(long)]
        quiet: bool,
    },
}

#[derive(Clone, Copy, ValueEnum)]
enum AnalysisKind {
    /// Threshold fit of the rising-current samples of a sweep trace.
    Threshold,
    /// Linear spectral density of a time trace.
    Lsd,
    /// Lorentzian fit of a frequency scan.
    Lorentzian,
}

fn main() -> ExitCode {
    let cli = Cli::parse();
    match run(cli.command) {
        Ok(code) => code,
        Err(e) => {
            eprintln!("error: {e}");
            ExitCode::FAILURE
        }
    }
}

fn run(cmd: Command) -> CliResult<ExitCode> {
    match cmd {
        Command::Simulate {
            config,
            seed,
            workers,
            common,
        } => {
            let text = std::fs::read_to_string(&config).map_err(|e| CliError::io(&config, e))?;
            let mut cfg = parse_config(&text)?;
            if seed.is_some() {
                cfg.run.seed = seed;
            }
            let report = match workers {
                Some(n) => run_scenario_with_workers(&cfg, &common.out, n)?,
                None => run_scenario(&cfg, &common.out)?,
            };
            if !common.quiet {
                println!("wrote {}", common.out.join(&cfg.run.name).display());
                print!("{}", report.to_text());
            }
            Ok(ExitCode::SUCCESS)
        }
        Command::Analyze {
            input,
            kind,
            column,
            segment,
            peaks,
            common,
        } => {
            analyze(&input, kind, &column, segment, peaks, &common)?;
            Ok(ExitCode::SUCCESS)
        }
        Command::Report { dir, quiet } => {
            let path = dir.join("report.txt");
            let text = std::fs::read_to_string(&path).map_err(|e| CliError::io(&path, e))?;
            let report = RunReport::parse(&text)?;
            report.verify_files(&dir)?;
            if !quiet {
                print!("{}", report.to_text());
                println!("\n{} files match the manifest", report.files.len());
            }
            Ok(ExitCode::SUCCESS)
        }
        Command::Selftest { quiet } => {
            let checks = selftest::run_all();
            let ok = checks.iter().all(|c| c.passed);
            for c in &checks {
                if !quiet || !c.passed {
                    println!("{} {}: {}", if c.passed { "PASS" } else { "FAIL" }, c.name, c.detail);
                }
            }
            Ok(if ok { ExitCode::SUCCESS } else { ExitCode::FAILURE })
        }
    }
}

fn values<'t>(t: &'t Table, name: &str, path: &Path) -> CliResult<&'t [f64]> {
    t.column(name)
        .map(|c| c.values.as_slice())
        .ok_or_else(|| CliError::Csv {
            path: path.to_path_buf(),
            msg: format!("no column named `{name}`"),
        })
}

fn print_fit(fit: &FitResult) {
    for p in &fit.params {
        println!("{} = {:.10e} +- {:.3e} {}", p.name, p.value, p.stderr, p.unit);
    }
    println!("residual_rms = {:.6e}", fit.residual_rms);
}

fn analyze(input: &Path, kind: AnalysisKind, column: &str, segment: f64, peaks: usize, common: &Common) -> CliResult<()> {
    let table = read_csv(input)?;
    let model = |e: nvltm_core::Error| CliError::Model {
        context: format!("analyzing {}", input.display()),
        source: e,
    };
    match kind {
        AnalysisKind::Threshold => {
            let current = values(&table, "current", input)?;
            let v = values(&table, column, input)?;
            // rising half of the sawtooth only
            let (i, p): (Vec<f64>, Vec<f64>) = current
                .windows(2)
                .zip(&v[1..])
                .filter(|(w, _)| w[1] > w[0])
                .map(|(w, &v)| (w[1], v))
                .unzip();
            let fit = fit_threshold(&i, &p).map_err(model)?;
            if !common.quiet {
                print_fit(&fit);
            }
        }
        AnalysisKind::Lorentzian => {
            let f = values(&table, "frequency", input)?;
            let v = values(&table, column, input)?;
            let fit = fit_lorentzian(f, v, peaks, None).map_err(model)?;
            if !common.quiet {
                print_fit(&fit);
            }
        }
        AnalysisKind::Lsd => {
            let t = values(&table, "time", input)?;
            let v = values(&table, column, input)?;
            if t.len() < 2 {
                return Err(CliError::Table("need at least two samples".into()));
            }
            let fs = (t.len() - 1) as f64 / (t[t.len() - 1] - t[0]);
            let trace = TimeTrace::new(v.to_vec(), fs, t[0], TraceMeta::new("imported")).map_err(model)?;
            let sd = lsd(&trace, segment).map_err(model)?;
            let unit = format!("{}/rtHz", table.column(column).map_or("V", |c| c.unit.as_str()));
            let stem = input.file_stem().and_then(|s| s.to_str()).unwrap_or("trace");
            let mut out = OutputDir::create(&common.out)?;
            let name = format!("lsd_{stem}.csv");
            out.write_table(
                &name,
                &Table::new(vec![
                    Column::new("frequency", "Hz", sd.freqs.clone()),
                    Column::new("density", unit, sd.values.clone()),
                ]),
            )?;
            out.commit();
            if !common.quiet {
                println!("wrote {}", common.out.join(name).display());
            }
        }
    }
    Ok(())
}
