use std::path::{Path, PathBuf};
use std::process::ExitCode;

use clap::{Parser, Subcommand};

use covert_lab::harness::config::ExperimentConfig;
use covert_lab::harness::experiments::{default_suite, experiments, replay, run_experiment, WORKERS_ENV};
use covert_lab::harness::report::Report;
use covert_lab::mockmodel::fixtures;
use covert_lab::{Error, Result};

#[derive(Parser)]
#[command(name = "covert-lab", version, about = "Seeded covert-conversation experiments")]
#[command(after_help = format!("Set {WORKERS_ENV} to bound the trial worker pool."))]
struct Cli {
    #[command(subcommand)]
    command: Command,
}

#[derive(Subcommand)]
enum Command {
    /// Run experiment configs (TOML); exit status 0 iff every criterion passes.
    Run {
        configs: Vec<PathBuf>,
        /// Run the default config of every registered experiment.
        #[arg(long)]
        all: bool,
        /// Override the master seed of every config.
        #[arg(long)]
        seed: Option<u64>,
        /// Directory for `<experiment>.jsonl` reports; a config's own
        /// `output` path wins.
        #[arg(long)]
        out: Option<PathBuf>,
    },
    /// List experiment ids with their acceptance criterion.
    ListExperiments,
    /// Re-run the config echoed in a report and compare bytes.
    Replay { report: PathBuf },
    /// List shipped mock-model fixtures.
    Fixtures,
}

fn read(path: &Path) -> Result<String> {
    std::fs::read_to_string(path).map_err(|e| Error::Io(format!("{}: {e}", path.display())))
}

fn write_report(report: &Report, cfg: &ExperimentConfig, out: Option<&Path>) -> Result<()> {
    let path = match (&cfg.output, out) {
        (Some(p), _) => PathBuf::from(p),
        (None, Some(dir)) => dir.join(format!("{}.jsonl", cfg.experiment)),
        (None, None) => return Ok(()),
    };
    if let Some(parent) = path.parent().filter(|p| !p.as_os_str().is_empty()) {
        std::fs::create_dir_all(parent).map_err(|e| Error::Io(e.to_string()))?;
    }
    std::fs::write(&path, report.to_jsonl()).map_err(|e| Error::Io(format!("{}: {e}", path.display())))
}

fn run(configs: &[PathBuf], all: bool, seed: Option<u64>, out: Option<&Path>) -> Result<bool> {
    let mut cfgs = Vec::new();
    if all {
        cfgs.extend(default_suite(seed.unwrap_or(0)));
    }
    for path in configs {
        let mut cfg = ExperimentConfig::from_toml(&read(path)?)?;
        if let Some(s) = seed {
            cfg.seed = s;
        }
        cfgs.push(cfg);
    }
    if cfgs.is_empty() {
        return Err(Error::Config("no configs given (pass paths or --all)".into()));
    }
    let mut ok = true;
    for cfg in &cfgs {
        let report = run_experiment(cfg)?;
        print!("{}", report.table());
        write_report(&report, cfg, out)?;
        ok &= report.passed();
    }
    Ok(ok)
}

fn main() -> ExitCode {
    let cli = Cli::parse();
    let result = match cli.command {
        Command::Run {
            configs,
            all,
            seed,
            out,
        } => run(&configs, all, seed, out.as_deref()),
        Command::ListExperiments => {
            for e in experiments() {
                let c = e.criterion.map_or("-".into(), |c| c.to_string());
                println!("{:<26} {:>3}  {}", e.id, c, e.summary);
            }
            Ok(true)
        }
        Command::Replay { report } => read(&report).and_then(|text| {
            let (fresh, same) = replay(&text)?;
            print!("{}", fresh.table());
            println!("replay {}", if same { "byte-identical" } else { "DIFFERS" });
            Ok(same && fresh.passed())
        }),
        Command::Fixtures => {
            for f in fixtures::library() {
                let c = f.min_entropy.map_or("-".into(), |c| format!("{c}"));
                println!("{:<20} w={:<3} c={:<4} {}", f.name, f.width, c, f.description);
            }
            println!("parametric: const-minent-N, high-entropy-N, bit-per-token-N, interleaved-N");
            Ok(true)
        }
    };
    match result {
        Ok(true) => ExitCode::SUCCESS,
        Ok(false) => ExitCode::from(1),
        Err(e) => {
            eprintln!("error: {e}");
            ExitCode::from(2)
        }
    }
}
