//! `cellbal`: generate scenarios, simulate the strategy grid, report.
//!
//! Every flag can also be set through an environment variable with the
//! `CELLBAL_` prefix (`CELLBAL_SEED`, `CELLBAL_OUT`, `CELLBAL_JOBS`, ...).

use std::path::{Path, PathBuf};
use std::process::ExitCode;
use std::sync::atomic::{AtomicUsize, Ordering};

use anyhow::{bail, Context};
use cellbal::harness::{desk_checks, Comparison};
use cellbal::output::{read_results_json, write_plot_data, write_results_csv, write_results_json};
use cellbal::scenario::{generate_suite, scenario_seed};
use cellbal::solver::LpDumpAdapter;
use cellbal::{compare, run_grid, MicrolpAdapter, RunConfig, Scenario, SimResult, SolverAdapter};
use clap::{Args, Parser, Subcommand};

const CONFIG_FILE: &str = "config.json";
const SCENARIO_DIR: &str = "scenarios";
const RESULTS_JSON: &str = "results.json";
const RESULTS_CSV: &str = "results.csv";
const TRACE_CSV: &str = "soh_trace.csv";
const TRACE_STRIDE_DAYS: usize = 30;

const PAIRS: [(&str, &str); 3] = [("wla", "none"), ("wla", "opportunistic"), ("opportunistic", "none")];

#[derive(Parser, Debug)]
#[command(name = "cellbal", version, about = "Wear-leveling-aware cell balancing experiments")]
struct Cli {
    #[command(flatten)]
    opts: Opts,
    #[command(subcommand)]
    command: Command,
}

#[derive(Args, Debug, Clone)]
struct Opts {
    /// Run configuration (JSON). Without it, OUT/config.json is used if present,
    /// else the built-in desk-scale defaults.
    #[arg(long, global = true, env = "CELLBAL_CONFIG")]
    config: Option<PathBuf>,
    /// Master seed; overrides the config.
    #[arg(long, global = true, env = "CELLBAL_SEED")]
    seed: Option<u64>,
    /// Output directory; overrides the config.
    #[arg(long, global = true, env = "CELLBAL_OUT")]
    out: Option<PathBuf>,
    /// Worker threads for the simulation grid.
    #[arg(long, global = true, env = "CELLBAL_JOBS", default_value_t = 1)]
    jobs: usize,
    /// Wall-clock budget per solver call, seconds; overrides the config.
    #[arg(long, global = true, env = "CELLBAL_SOLVER_BUDGET_S")]
    solver_budget_s: Option<f64>,
    /// Exit nonzero if a directional acceptance check fails.
    #[arg(long, global = true, env = "CELLBAL_ASSERT_ACCEPTANCE")]
    assert_acceptance: bool,
    /// Write every integer program handed to the solver as an LP file here.
    #[arg(long, global = true, env = "CELLBAL_DUMP_LP")]
    dump_lp: Option<PathBuf>,
}

#[derive(Subcommand, Debug)]
enum Command {
    /// Write scenario bundles to OUT/scenarios.
    Generate,
    /// Simulate every scenario × strategy × pattern and write result files.
    Simulate,
    /// Print lifespan deltas and op-count ratios from OUT/results.json.
    Report,
    /// generate, simulate and report in one go.
    Run,
}

fn main() -> ExitCode {
    env_logger::Builder::from_env(env_logger::Env::new().filter_or("CELLBAL_LOG", "info")).init();
    let cli = Cli::parse();
    match dispatch(&cli) {
        Ok(true) => ExitCode::SUCCESS,
        Ok(false) => ExitCode::from(1),
        Err(e) => {
            eprintln!("error: {e:#}");
            ExitCode::from(2)
        }
    }
}

/// Returns `false` when an enabled acceptance check failed.
fn dispatch(cli: &Cli) -> anyhow::Result<bool> {
    let cfg = resolve_config(&cli.opts)?;
    let out = cfg.output_dir.clone();
    match cli.command {
        Command::Generate => {
            generate(&cfg, &out)?;
            Ok(true)
        }
        Command::Simulate => {
            simulate(&cfg, &out, &cli.opts)?;
            Ok(true)
        }
        Command::Report => report(&out, cli.opts.assert_acceptance),
        Command::Run => {
            generate(&cfg, &out)?;
            simulate(&cfg, &out, &cli.opts)?;
            report(&out, cli.opts.assert_acceptance)
        }
    }
}

fn resolve_config(opts: &Opts) -> anyhow::Result<RunConfig> {
    let mut cfg = match (&opts.config, &opts.out) {
        (Some(path), _) => RunConfig::load(path).with_context(|| format!("loading {}", path.display()))?,
        (None, Some(out)) if out.join(CONFIG_FILE).exists() => {
            let path = out.join(CONFIG_FILE);
            RunConfig::load(&path).with_context(|| format!("loading {}", path.display()))?
        }
        _ => RunConfig::default(),
    };
    if let Some(seed) = opts.seed {
        cfg.master_seed = seed;
    }
    if let Some(out) = &opts.out {
        cfg.output_dir = out.clone();
    }
    if let Some(budget) = opts.solver_budget_s {
        cfg.sim.solver_budget_s = budget;
    }
    cfg.validate()?;
    Ok(cfg)
}

fn bundle_path(out: &Path, id: usize) -> PathBuf {
    out.join(SCENARIO_DIR).join(format!("scenario_{id:03}.json"))
}

fn write_config(cfg: &RunConfig, out: &Path) -> anyhow::Result<()> {
    std::fs::create_dir_all(out).with_context(|| format!("creating {}", out.display()))?;
    std::fs::write(out.join(CONFIG_FILE), cfg.to_json()? + "\n")?;
    Ok(())
}

fn generate(cfg: &RunConfig, out: &Path) -> anyhow::Result<()> {
    write_config(cfg, out)?;
    std::fs::create_dir_all(out.join(SCENARIO_DIR))?;
    let suite = generate_suite(&cfg.scenario, cfg.n_scenarios, cfg.master_seed)?;
    for s in &suite {
        s.save(&bundle_path(out, s.id))?;
    }
    log::info!("wrote {} scenario bundles to {}", suite.len(), out.join(SCENARIO_DIR).display());
    Ok(())
}

fn load_bundles(cfg: &RunConfig, out: &Path) -> anyhow::Result<Vec<Scenario>> {
    (0..cfg.n_scenarios)
        .map(|id| {
            let path = bundle_path(out, id);
            if !path.exists() {
                bail!("missing scenario bundle {} (run `cellbal generate` first)", path.display());
            }
            let s = Scenario::load(&path).with_context(|| format!("loading {}", path.display()))?;
            let expected = scenario_seed(cfg.master_seed, id);
            if s.id != id || s.seed != expected {
                bail!(
                    "{} holds scenario {} seed {}, but the config expects scenario {id} seed {expected}",
                    path.display(),
                    s.id,
                    s.seed
                );
            }
            Ok(s)
        })
        .collect()
}

fn simulate(cfg: &RunConfig, out: &Path, opts: &Opts) -> anyhow::Result<()> {
    write_config(cfg, out)?;
    let scenarios = load_bundles(cfg, out)?;
    let n_runs = scenarios.len() * cfg.strategies.len() * cfg.patterns.len();
    log::info!("simulating {n_runs} runs on {} worker(s)", opts.jobs.max(1));

    let dump_count = AtomicUsize::new(0);
    let dump_dir = opts.dump_lp.clone();
    let make_solver = move || -> Box<dyn SolverAdapter> {
        match &dump_dir {
            None => Box::new(MicrolpAdapter::default()),
            Some(dir) => {
                let k = dump_count.fetch_add(1, Ordering::Relaxed);
                match LpDumpAdapter::new(MicrolpAdapter::default(), dir.join(format!("run_{k:04}"))) {
                    Ok(a) => Box::new(a),
                    Err(e) => {
                        log::warn!("LP dump disabled: {e}");
                        Box::new(MicrolpAdapter::default())
                    }
                }
            }
        }
    };
    let started = std::time::Instant::now();
    let results = run_grid(&scenarios, &cfg.strategies, &cfg.patterns, &cfg.sim, opts.jobs, &make_solver)?;
    log::info!("simulation finished in {:.1} s", started.elapsed().as_secs_f64());

    write_results_csv(&out.join(RESULTS_CSV), &results)?;
    write_results_json(&out.join(RESULTS_JSON), &results)?;
    write_plot_data(&out.join(TRACE_CSV), &results, TRACE_STRIDE_DAYS)?;
    log::info!("wrote {RESULTS_CSV}, {RESULTS_JSON} and {TRACE_CSV} to {}", out.display());
    Ok(())
}

fn print_comparison(c: &Comparison) {
    println!("{} vs {}", c.a, c.b);
    if c.rows.is_empty() {
        println!("  no shared runs");
        return;
    }
    println!(
        "  {:<8} {:>5} {:>16} {:>10} {:>12} {:>12}",
        "pattern", "runs", "mean_delta_days", "op_ratio", "floor_viol_a", "floor_viol_b"
    );
    for p in &c.per_pattern {
        let ratio = p.op_ratio.map_or_else(|| "n/a".to_string(), |r| format!("{r:.6}"));
        println!(
            "  {:<8} {:>5} {:>16.3} {:>10} {:>12} {:>12}",
            p.pattern.label(),
            p.rows,
            p.mean_delta_days,
            ratio,
            p.floor_violations_a,
            p.floor_violations_b
        );
    }
}

fn report(out: &Path, assert_acceptance: bool) -> anyhow::Result<bool> {
    let path = out.join(RESULTS_JSON);
    if !path.exists() {
        bail!("no results at {} (run `cellbal simulate` first)", path.display());
    }
    let results: Vec<SimResult> = read_results_json(&path)?;
    for (a, b) in PAIRS {
        print_comparison(&compare(&results, a, b)?);
    }
    if !assert_acceptance {
        return Ok(true);
    }
    let checks = match desk_checks(&results) {
        Ok(c) => c,
        Err(e) => {
            println!("FAIL acceptance: {e}");
            return Ok(false);
        }
    };
    let mut ok = true;
    for c in &checks {
        println!("{} {} ({})", if c.passed { "PASS" } else { "FAIL" }, c.name, c.detail);
        ok &= c.passed;
    }
    Ok(ok)
}
