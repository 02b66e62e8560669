use std::path::{Path, PathBuf};
use std::process::ExitCode;

use clap::{Parser, Subcommand};

use roadchain::analysis::{default_p_grid, sweep_attack_grid};
use roadchain::config::ScenarioConfig;
use roadchain::report::{self, Figure};
use roadchain::sim::{audit_chain, run_scenario, Halt, MetricsRow};
use roadchain::Error;

#[derive(Parser)]
#[command(name = "roadchain", version, about = "Reputation-based vehicle position ledger: simulation and analysis")]
struct Cli {
    #[command(subcommand)]
    command: Command,
}

#[derive(clap::Args)]
struct ScenarioArgs {
    /// Scenario file (TOML) or a manifest.json from an earlier run.
    #[arg(short, long)]
    config: Option<PathBuf>,
    /// Start from the full-size profile instead of the desk profile.
    #[arg(long)]
    paper_scale: bool,
    /// Override one key, e.g. `--set attack.fraction=0.2`. Repeatable.
    #[arg(long = "set", value_name = "KEY=VALUE")]
    overrides: Vec<String>,
    #[arg(long)]
    seed: Option<u64>,
    /// Output directory [default: $ROADCHAIN_OUT_DIR or ./out].
    #[arg(short, long)]
    out: Option<PathBuf>,
}

#[derive(Subcommand)]
enum Command {
    /// Run one scenario and write metrics.csv, consensus.csv, chain.jsonl and manifest.json.
    Run {
        #[command(flatten)]
        scenario: ScenarioArgs,
        /// Also write reputation.csv with every participant's score per block.
        #[arg(long)]
        dump_reputation: bool,
    },
    /// Run the scenario once per value of one parameter.
    Sweep {
        #[command(flatten)]
        scenario: ScenarioArgs,
        /// Key to vary, dotted for the attack table.
        #[arg(long)]
        param: String,
        /// Comma-separated values.
        #[arg(long, value_delimiter = ',', required = true)]
        values: Vec<String>,
    },
    /// Closed-form and Monte Carlo malicious-block probability over a (p, f) grid.
    AnalyzeConsensus {
        /// Monte Carlo trials per grid point; 0 skips the simulation.
        #[arg(long, default_value_t = 100_000)]
        trials: usize,
        #[arg(long, default_value_t = 1)]
        seed: u64,
        #[arg(long, value_delimiter = ',', default_value = "1,2,3,4,5,6,7,8")]
        f: Vec<usize>,
        #[arg(short, long)]
        out: Option<PathBuf>,
        /// Also write a gnuplot script for the table.
        #[arg(long)]
        plot: bool,
    },
    /// Write a gnuplot script for a metrics or analysis CSV.
    Plot {
        csv: PathBuf,
        /// fig4, fig5, fig6 or fig7.
        #[arg(long)]
        figure: Figure,
        #[arg(short, long)]
        out: Option<PathBuf>,
    },
}

fn out_dir(arg: Option<PathBuf>) -> PathBuf {
    arg.or_else(|| std::env::var_os("ROADCHAIN_OUT_DIR").map(PathBuf::from))
        .unwrap_or_else(|| PathBuf::from("out"))
}

fn load(args: &ScenarioArgs) -> roadchain::Result<ScenarioConfig> {
    let base = if args.paper_scale {
        ScenarioConfig::paper_scale()
    } else {
        ScenarioConfig::desk()
    };
    let mut config = match &args.config {
        Some(path) => ScenarioConfig::load_with_base(path, &base)?,
        None => base,
    };
    for item in &args.overrides {
        let (key, value) = item
            .split_once('=')
            .ok_or_else(|| Error::Config(format!("--set expects KEY=VALUE, got {item}")))?;
        config.set_param(key.trim(), value.trim())?;
    }
    if let Some(seed) = args.seed {
        config.seed = seed;
    }
    config.check()?;
    Ok(config)
}

fn summarize(rows: &[MetricsRow]) -> String {
    match rows.last() {
        Some(last) => format!(
            "{} blocks; final avg_rep_legit {:.1}, avg_rep_malicious {:.1}",
            rows.len(),
            last.avg_rep_legit,
            last.avg_rep_malicious
        ),
        None => "no blocks appended".to_string(),
    }
}

fn run_one(config: &ScenarioConfig, dir: &Path, dump: bool) -> roadchain::Result<(Vec<MetricsRow>, Option<Halt>)> {
    let output = run_scenario(config)?;
    let quorum = roadchain::consensus::quorum_for(config.fault_tolerance, config.quorum_policy);
    audit_chain(&output.chain, config.fault_tolerance, quorum, config.block_time())?;
    report::write_run(dir, config, &output, dump)?;
    Ok((output.metrics, output.halt))
}

fn halt_note(halt: Option<Halt>) -> String {
    halt.map_or_else(String::new, |h| format!(" (halted at {} s: {})", h.time_s, h.to_error()))
}

fn execute(command: Command) -> roadchain::Result<()> {
    match command {
        Command::Run {
            scenario,
            dump_reputation,
        } => {
            let config = load(&scenario)?;
            let dir = out_dir(scenario.out);
            let (rows, halt) = run_one(&config, &dir, dump_reputation)?;
            println!("{}: {}{}", dir.display(), summarize(&rows), halt_note(halt));
            if let Some(h) = halt {
                return Err(h.to_error());
            }
        }
        Command::Sweep {
            scenario,
            param,
            values,
        } => {
            let base = load(&scenario)?;
            let dir = out_dir(scenario.out);
            // validate every value before spending time on any run
            let configs: Vec<(String, ScenarioConfig)> = values
                .iter()
                .map(|v| {
                    let mut c = base.clone();
                    c.set_param(&param, v)?;
                    Ok((v.clone(), c))
                })
                .collect::<roadchain::Result<_>>()?;
            let workers = std::thread::available_parallelism().map_or(1, |n| n.get()).min(configs.len());
            type Run = (String, Vec<MetricsRow>, Option<Halt>);
            let results: Vec<roadchain::Result<Run>> = std::thread::scope(|s| {
                let chunks: Vec<&[(String, ScenarioConfig)]> = configs.chunks(configs.len().div_ceil(workers)).collect();
                let handles: Vec<_> = chunks
                    .into_iter()
                    .map(|chunk| {
                        let dir = &dir;
                        let param = &param;
                        s.spawn(move || {
                            chunk
                                .iter()
                                .map(|(v, c)| {
                                    let sub = dir.join(format!("{param}={v}"));
                                    run_one(c, &sub, false).map(|(rows, halt)| (v.clone(), rows, halt))
                                })
                                .collect::<Vec<_>>()
                        })
                    })
                    .collect();
                handles.into_iter().flat_map(|h| h.join().expect("sweep worker panicked")).collect()
            });
            let runs: Vec<Run> = results.into_iter().collect::<roadchain::Result<_>>()?;
            for (v, rows, halt) in &runs {
                println!("{param}={v}: {}{}", summarize(rows), halt_note(*halt));
            }
            let runs: Vec<(String, Vec<MetricsRow>)> = runs.into_iter().map(|(v, rows, _)| (v, rows)).collect();
            report::write_sweep(&dir.join("sweep.csv"), &param, &runs)?;
        }
        Command::AnalyzeConsensus {
            trials,
            seed,
            f,
            out,
            plot,
        } => {
            let dir = out_dir(out);
            std::fs::create_dir_all(&dir).map_err(|e| Error::Io {
                path: dir.clone(),
                source: e,
            })?;
            let rows = sweep_attack_grid(&default_p_grid(), &f, trials, seed)?;
            let path = dir.join("fig4.csv");
            report::write_fig4(&path, &rows)?;
            println!("wrote {}", path.display());
            if plot {
                println!("wrote {}", report::plot(&path, Figure::Fig4, None)?.display());
            }
        }
        Command::Plot { csv, figure, out } => {
            let script = report::plot(&csv, figure, out.as_deref())?;
            println!("wrote {}", script.display());
        }
    }
    Ok(())
}

fn main() -> ExitCode {
    let cli = Cli::parse();
    match execute(cli.command) {
        Ok(()) => ExitCode::SUCCESS,
        Err(e) => {
            eprintln!("roadchain: {e}");
            ExitCode::from(match e {
                Error::Config(_) => 2,
                Error::ElectionExhausted { .. } => 3,
                _ => 1,
            })
        }
    }
}
