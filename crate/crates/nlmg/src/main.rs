//! `nlmg` command line: run convergence studies, sweep config directories,
//! and recompute rate tables. Exit codes: 0 ok, 2 config error, 3 solver
//! failure, 4 acceptance-check failure.

use std::path::PathBuf;
use std::process::ExitCode;

use clap::{Parser, Subcommand, ValueEnum};

use nlmg::config::{RunConfig, RunMode};
use nlmg::report::{check_report, execute, rates_report_from_csv_bytes, write_report_files};
use nlmg::Error;

#[derive(Parser)]
#[command(name = "nlmg", version, about = "Multilevel-correction eigenvalue solver")]
struct Cli {
    #[command(subcommand)]
    command: Command,
}

#[derive(Clone, Copy, ValueEnum)]
enum ModeArg {
    Scheme,
    Direct,
    Both,
}

impl From<ModeArg> for RunMode {
    fn from(m: ModeArg) -> RunMode {
        match m {
            ModeArg::Scheme => RunMode::Scheme,
            ModeArg::Direct => RunMode::Direct,
            ModeArg::Both => RunMode::Both,
        }
    }
}

#[derive(Subcommand)]
enum Command {
    /// Execute one run described by a JSON config file.
    Run {
        #[arg(long)]
        config: PathBuf,
        /// Override the config's mode.
        #[arg(long)]
        mode: Option<ModeArg>,
        /// Evaluate the built-in acceptance gates after the run.
        #[arg(long)]
        check: bool,
        /// Override the config's output directory.
        #[arg(long)]
        out: Option<PathBuf>,
    },
    /// Run every *.json config in a directory (independent outputs).
    Sweep {
        #[arg(long)]
        configs: PathBuf,
    },
    /// Recompute rate columns from a table.csv produced by `run`.
    Rates {
        #[arg(long)]
        csv: PathBuf,
        #[arg(long, default_value_t = 2)]
        beta: u32,
    },
}

fn load_config(path: &PathBuf) -> Result<RunConfig, Error> {
    let text = std::fs::read_to_string(path)
        .map_err(|e| Error::Config(format!("cannot read {}: {e}", path.display())))?;
    RunConfig::from_json_str(&text)
}

fn run_one(cfg: &RunConfig, check: bool, out: Option<PathBuf>) -> Result<i32, Error> {
    let report = execute(cfg)?;
    let out_dir = out.unwrap_or_else(|| PathBuf::from(&cfg.out_dir));
    let (json_path, csv_path) = write_report_files(&report, &out_dir)?;
    let final_row = report.rows.last().expect("rows are never empty");
    println!(
        "levels={} lambda={:.12} wall={:.3}s report={} table={}",
        report.rows.len(),
        final_row.lambda,
        report.wall_time_seconds,
        json_path.display(),
        csv_path.display()
    );
    for w in &report.warnings {
        eprintln!("warning: {w}");
    }
    if check {
        let failures = check_report(&report);
        if !failures.is_empty() {
            for f in &failures {
                eprintln!("check failed: {f}");
            }
            return Ok(4);
        }
        println!("all checks passed");
    }
    Ok(0)
}

fn main() -> ExitCode {
    env_logger::Builder::from_env(env_logger::Env::new().filter("NLMG_LOG")).init();
    let cli = Cli::parse();
    let code = match cli.command {
        Command::Run {
            config,
            mode,
            check,
            out,
        } => {
            let result = load_config(&config).map(|mut cfg| {
                if let Some(m) = mode {
                    cfg.mode = m.into();
                }
                cfg
            });
            match result {
                Ok(cfg) => match run_one(&cfg, check, out) {
                    Ok(code) => code,
                    Err(e) => {
                        eprintln!("error: {e}");
                        e.exit_code()
                    }
                },
                Err(e) => {
                    eprintln!("error: {e}");
                    e.exit_code()
                }
            }
        }
        Command::Sweep { configs } => sweep(&configs),
        Command::Rates { csv, beta } => match std::fs::read(&csv) {
            Ok(bytes) => match rates_report_from_csv_bytes(&bytes, beta) {
                Ok(table) => {
                    print!("{table}");
                    0
                }
                Err(e) => {
                    eprintln!("error: {e}");
                    e.exit_code()
                }
            },
            Err(e) => {
                eprintln!("error: cannot read {}: {e}", csv.display());
                2
            }
        },
    };
    ExitCode::from(code as u8)
}

fn sweep(dir: &PathBuf) -> i32 {
    let mut entries: Vec<PathBuf> = match std::fs::read_dir(dir) {
        Ok(rd) => rd
            .filter_map(|e| e.ok())
            .map(|e| e.path())
            .filter(|p| p.extension().is_some_and(|x| x == "json"))
            .collect(),
        Err(e) => {
            eprintln!("error: cannot read {}: {e}", dir.display());
            return 2;
        }
    };
    entries.sort();
    if entries.is_empty() {
        eprintln!("error: no *.json configs in {}", dir.display());
        return 2;
    }
    let mut worst = 0;
    std::thread::scope(|scope| {
        let handles: Vec<_> = entries
            .iter()
            .map(|path| {
                scope.spawn(move || -> i32 {
                    let stem = path
                        .file_stem()
                        .map(|s| s.to_string_lossy().into_owned())
                        .unwrap_or_else(|| "run".into());
                    match load_config(path) {
                        Ok(cfg) => {
                            let out = PathBuf::from(&cfg.out_dir).join(&stem);
                            match run_one(&cfg, false, Some(out)) {
                                Ok(code) => code,
                                Err(e) => {
                                    eprintln!("error in {stem}: {e}");
                                    e.exit_code()
                                }
                            }
                        }
                        Err(e) => {
                            eprintln!("error in {stem}: {e}");
                            e.exit_code()
                        }
                    }
                })
            })
            .collect();
        for h in handles {
            worst = worst.max(h.join().unwrap_or(3));
        }
    });
    worst
}
