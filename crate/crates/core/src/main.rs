use std::path::{Path, PathBuf};
use std::process::ExitCode;

use clap::{Parser, Subcommand};
use num_traits::ToPrimitive;

use edgemarket::gasmeter::{parse_penalty, CostArgs, CostGrid};
use edgemarket::harness::{
    optimize_scenario, parse_list, parse_range, run_rounds, run_sweep, write_outputs, RunMetrics,
    ScenarioConfig, SweepSpec,
};
use edgemarket::ledger::Ledger;

#[derive(Parser)]
#[command(
    name = "edgemarket",
    version,
    about = "Edge resource marketplace simulator"
)]
struct Cli {
    #[command(subcommand)]
    command: Command,
}

#[derive(Subcommand)]
enum Command {
    /// Run one scenario and write metrics plus per-round ledgers.
    Run {
        #[arg(long)]
        config: PathBuf,
        /// Overrides the seed in the config file.
        #[arg(long)]
        seed: Option<u64>,
        #[arg(long)]
        out: PathBuf,
    },
    /// Run a grid of scenarios and write summary.csv and heads.csv.
    Sweep {
        #[arg(long, default_value = "25:125:25")]
        users: String,
        #[arg(long, default_value = "2,4")]
        cities: String,
        #[arg(long, default_value = "5,50")]
        budgets: String,
        #[arg(long, default_value_t = 10)]
        rounds: u32,
        #[arg(long, default_value_t = 0)]
        seed: u64,
        /// Base config for every parameter not swept.
        #[arg(long)]
        config: Option<PathBuf>,
        #[arg(long)]
        out: PathBuf,
    },
    /// Search a grid of cost arguments for the minimum of avg + zeta * var.
    Optimize {
        #[arg(long)]
        config: PathBuf,
        /// Non-negative rational, e.g. `0`, `1/1000` or `0.25`.
        #[arg(long)]
        zeta: String,
        #[arg(long)]
        grid: PathBuf,
    },
    /// Check the hash chain of an exported ledger.
    Verify {
        #[arg(long)]
        chain: PathBuf,
    },
}

fn main() -> ExitCode {
    match dispatch(Cli::parse().command) {
        Ok(code) => code,
        Err(e) => {
            eprintln!("error: {e}");
            ExitCode::FAILURE
        }
    }
}

fn dispatch(command: Command) -> edgemarket::Result<ExitCode> {
    match command {
        Command::Run { config, seed, out } => run(&config, seed, &out),
        Command::Sweep {
            users,
            cities,
            budgets,
            rounds,
            seed,
            config,
            out,
        } => {
            let base = match config {
                Some(path) => ScenarioConfig::load(&path)?,
                None => ScenarioConfig::default(),
            };
            let spec = SweepSpec {
                users: parse_range(&users)?,
                cities: parse_list(&cities)?,
                budgets: parse_list(&budgets)?,
                rounds,
                seed,
                base,
            };
            let cells = run_sweep(&spec)?;
            write_outputs(&cells, &out)?;
            for (i, m) in cells.iter().enumerate() {
                print_cell(i, m);
            }
            println!("wrote {}", out.display());
            Ok(ExitCode::SUCCESS)
        }
        Command::Optimize { config, zeta, grid } => {
            let cfg = ScenarioConfig::load(&config)?;
            let zeta = parse_penalty(&zeta)?;
            let candidates = CostGrid::load(&grid)?.candidates()?;
            let report = optimize_scenario(&cfg, &candidates, zeta)?;
            println!("candidate\tavg\tvar\tobjective");
            for s in &report.scores {
                println!(
                    "{}\t{:.3}\t{:.3}\t{:.3}",
                    describe(&s.args),
                    f(&s.stats.avg),
                    f(&s.stats.var),
                    f(&s.objective)
                );
            }
            println!("zeta      {}", report.zeta);
            println!("optimal   {}", describe(&report.optimal));
            println!("min avg   {}", describe(&report.args_avg));
            println!("min var   {}", describe(&report.args_var));
            Ok(ExitCode::SUCCESS)
        }
        Command::Verify { chain } => match Ledger::read_from(&chain) {
            Ok(ledger) if ledger.verify_chain() => {
                println!(
                    "ok: {} transactions, head {}",
                    ledger.len(),
                    ledger.head().to_hex()
                );
                Ok(ExitCode::SUCCESS)
            }
            Ok(_) => {
                println!("TAMPERED: hash chain does not verify");
                Ok(ExitCode::FAILURE)
            }
            Err(e) => {
                println!("TAMPERED: {e}");
                Ok(ExitCode::FAILURE)
            }
        },
    }
}

fn run(config: &Path, seed: Option<u64>, out: &Path) -> edgemarket::Result<ExitCode> {
    let mut cfg = ScenarioConfig::load(config)?;
    if let Some(seed) = seed {
        cfg.seed = seed;
    }
    let rounds = run_rounds(&cfg)?;
    let metrics = RunMetrics::aggregate(&cfg, &rounds)?;
    write_outputs(std::slice::from_ref(&metrics), out)?;
    for r in &rounds {
        r.ledger
            .write_to(&out.join(format!("chain_round_{}.bin", r.round)))?;
    }
    std::fs::write(out.join("config.toml"), cfg.to_toml_string())?;
    print_cell(0, &metrics);
    if !metrics.audit_passed {
        eprintln!("audit failed");
        return Ok(ExitCode::FAILURE);
    }
    println!("wrote {}", out.display());
    Ok(ExitCode::SUCCESS)
}

fn print_cell(i: usize, m: &RunMetrics) {
    println!(
        "#{i:<3} users={:<4} cities={} budget=${:<3} eng={:.4} var={:.6} latency={:.2} cmp={:.2} gas={:.0} settled={} aborted={}",
        m.users_per_role,
        m.cities,
        m.budget_base_usd,
        m.eng_rate.avg_f64(),
        m.eng_rate.var_f64(),
        m.latency.avg_f64(),
        m.comparisons.avg_f64(),
        m.gas.avg_f64(),
        m.sessions_settled,
        m.sessions_aborted,
    );
}

fn f(r: &num_rational::Ratio<i128>) -> f64 {
    r.to_f64().unwrap_or(f64::NAN)
}

fn describe(a: &CostArgs) -> String {
    format!(
        "mix={}/{}/{} batch={} comm={} share={}",
        a.op_mix.add, a.op_mix.delete, a.op_mix.lookup, a.eng_batch, a.comm_interval, a.setup_share
    )
}
