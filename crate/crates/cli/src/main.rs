use std::fs;
use std::path::{Path, PathBuf};
use std::process::ExitCode;

use anyhow::{bail, Context};
use clap::{Args, Parser, Subcommand, ValueEnum};
use serde_json::json;

use noisy_ce::experiment::{run_and_write, ExperimentConfig, ExperimentKind};
use noisy_ce::io::{
    estimates_to_csv, load_market, load_outcome, load_unit_demand_csv, market_to_json, unit_demand_to_csv,
};
use noisy_ce::learning::{ea, eap, invert_hoeffding_t, BoundMode, Budget, EapConfig, LearnResult, MarketStructure};
use noisy_ce::metrics::um_loss_per_buyer;
use noisy_ce::pricing::{linear_ce_prices, linear_ce_prices_unit_demand, verify_price_solution, PriceObjective};
use noisy_ce::valuation::{gen_unit_demand, unit_demand_to_market};
use noisy_ce::welfare::{max_welfare_exact, max_welfare_unit_demand};
use noisy_ce::{Allocation, Bundle, Distribution, IndexSet, Market, NoiseSpec, NoisyOracle, Schedules, Valuations};

#[derive(Parser)]
#[command(name = "noisy-ce", version, about = "Learn competitive equilibria from noisy value queries")]
struct Cli {
    /// Master seed for generators and oracles.
    #[arg(long, global = true, default_value_t = 0)]
    seed: u64,
    /// Directory for result files; results go to stdout when absent.
    #[arg(long, global = true)]
    out_dir: Option<PathBuf>,
    /// Worker threads (0 = all cores).
    #[arg(long, global = true, default_value_t = 0)]
    threads: usize,
    /// Use the full experiment grid.
    #[arg(long, global = true)]
    full: bool,
    #[command(subcommand)]
    command: Command,
}

#[derive(Subcommand)]
enum Command {
    /// Draw a random unit-demand market.
    Generate {
        #[arg(long, default_value = "uniform")]
        distribution: Distribution,
        #[arg(long)]
        buyers: usize,
        #[arg(long)]
        goods: usize,
        #[arg(long, value_enum, default_value_t = Format::Csv)]
        format: Format,
    },
    /// Maximum-welfare allocation.
    SolveWelfare {
        #[command(flatten)]
        input: MarketInput,
    },
    /// Linear prices supporting an allocation.
    SolvePrices {
        #[command(flatten)]
        input: MarketInput,
        /// Comma-separated bundle bitmasks, one per buyer.
        #[arg(long, value_delimiter = ',')]
        allocation: Vec<u32>,
        #[arg(long, default_value = "min-slack")]
        objective: PriceObjective,
    },
    /// One round of elicitation to a target radius.
    RunEa {
        #[command(flatten)]
        input: MarketInput,
        #[command(flatten)]
        noise: NoiseArgs,
        #[arg(long)]
        eps: f64,
        #[arg(long, default_value_t = 0.1)]
        delta: f64,
    },
    /// Elicitation with pruning.
    RunEap {
        #[command(flatten)]
        input: MarketInput,
        #[command(flatten)]
        noise: NoiseArgs,
        #[arg(long, value_delimiter = ',', required = true)]
        schedule: Vec<u64>,
        #[arg(long, value_delimiter = ',', required = true)]
        deltas: Vec<f64>,
        /// Per-iteration candidate budgets; `inf` for no cap. Defaults to all `inf`.
        #[arg(long, value_delimiter = ',')]
        budgets: Vec<Budget>,
        #[arg(long, default_value = "exact")]
        bound_mode: BoundMode,
        #[arg(long, default_value_t = 0.0)]
        target_eps: f64,
    },
    /// UM-loss of an outcome in a market.
    UmLoss {
        #[arg(long)]
        truth: PathBuf,
        #[arg(long)]
        outcome: PathBuf,
    },
    /// Run an experiment grid and write CSVs plus a manifest.
    Experiment {
        #[arg(value_enum)]
        kind: Kind,
        /// JSON config; flags below override it.
        #[arg(long)]
        config: Option<PathBuf>,
        #[arg(long)]
        draws: Option<usize>,
        #[arg(long)]
        noise_half_width: Option<f64>,
    },
}

#[derive(Clone, Copy, ValueEnum)]
enum Format {
    Csv,
    Json,
}

#[derive(Clone, Copy, ValueEnum)]
enum Kind {
    Table1,
    Heatmap,
}

#[derive(Args)]
#[group(required = true, multiple = false)]
struct MarketInput {
    /// Market JSON file.
    #[arg(long)]
    market: Option<PathBuf>,
    /// Unit-demand value matrix as CSV.
    #[arg(long)]
    unit_demand: Option<PathBuf>,
}

#[derive(Args)]
struct NoiseArgs {
    #[arg(long, default_value_t = 1.0)]
    noise_half_width: f64,
    /// Bound on every sample; defaults to the largest value plus the noise half-width.
    #[arg(long)]
    c: Option<f64>,
}

enum Input {
    General(Market),
    UnitDemand(noisy_ce::UnitDemandMatrix),
}

impl MarketInput {
    fn load(&self) -> anyhow::Result<Input> {
        match (&self.market, &self.unit_demand) {
            (Some(path), _) => Ok(Input::General(
                load_market(path).with_context(|| format!("reading {}", path.display()))?,
            )),
            (_, Some(path)) => Ok(Input::UnitDemand(
                load_unit_demand_csv(path).with_context(|| format!("reading {}", path.display()))?,
            )),
            _ => bail!(noisy_ce::Error::Config("one of --market or --unit-demand is required".into())),
        }
    }
}

fn value_range(noise: &NoiseArgs, max_value: f64) -> f64 {
    noise.c.unwrap_or(max_value.max(f64::MIN_POSITIVE) + noise.noise_half_width)
}

fn emit(out_dir: Option<&Path>, name: &str, content: &str) -> anyhow::Result<()> {
    match out_dir {
        Some(dir) => {
            fs::create_dir_all(dir)?;
            let path = dir.join(name);
            let mut text = content.to_string();
            if !text.ends_with('\n') {
                text.push('\n');
            }
            fs::write(&path, text).with_context(|| format!("writing {}", path.display()))?;
            log::info!("wrote {}", path.display());
        }
        None => println!("{}", content.trim_end()),
    }
    Ok(())
}

fn masks(alloc: &Allocation) -> Vec<u32> {
    alloc.bundles().iter().map(|s| s.mask()).collect()
}

fn learn_json(result: &LearnResult) -> serde_json::Value {
    json!({
        "eps_hat": result.eps_hat,
        "delta_spent": result.delta_spent,
        "delta_schedule_total": result.delta_schedule_total,
        "iterations_run": result.iterations_run,
        "total_samples": result.total_samples,
        "active": result.estimates.active().len(),
        "pruned": result.estimates.pruned().len(),
        "history": result.history,
    })
}

fn run(cli: Cli) -> anyhow::Result<()> {
    let out_dir = cli.out_dir.as_deref();
    match cli.command {
        Command::Generate { distribution, buyers, goods, format } => {
            let v = gen_unit_demand(distribution, buyers, goods, cli.seed)?;
            match format {
                Format::Csv => emit(out_dir, "market.csv", &unit_demand_to_csv(&v))?,
                Format::Json => emit(out_dir, "market.json", &market_to_json(&unit_demand_to_market(&v)?)?)?,
            }
        }
        Command::SolveWelfare { input } => {
            let result = match input.load()? {
                Input::General(m) => max_welfare_exact(&m)?,
                Input::UnitDemand(v) => max_welfare_unit_demand(&v),
            };
            let body = json!({ "allocation": masks(&result.allocation), "welfare": result.value });
            emit(out_dir, "welfare.json", &serde_json::to_string_pretty(&body)?)?;
        }
        Command::SolvePrices { input, allocation, objective } => {
            let alloc = Allocation::new(allocation.into_iter().map(Bundle::from_mask).collect());
            let (sol, report) = match input.load()? {
                Input::General(m) => {
                    let sol = linear_ce_prices(&m, &alloc, objective)?;
                    let report = verify_price_solution(&m, &alloc, &sol);
                    (sol, report)
                }
                Input::UnitDemand(v) => {
                    let sol = linear_ce_prices_unit_demand(&v, &alloc, objective)?;
                    let report = verify_price_solution(&v, &alloc, &sol);
                    (sol, report)
                }
            };
            let body = json!({
                "allocation": masks(&alloc),
                "prices": { "linear": sol.prices },
                "objective": objective,
                "total_slack": sol.total_slack,
                "revenue": sol.revenue(),
                "max_residual": report.max_violation,
                "verified": report.ok(),
            });
            emit(out_dir, "prices.json", &serde_json::to_string_pretty(&body)?)?;
        }
        Command::RunEa { input, noise, eps, delta } => {
            let spec = NoiseSpec::uniform(noise.noise_half_width)?;
            let (estimates, body) = match input.load()? {
                Input::General(m) => {
                    let c = value_range(&noise, m.max_value());
                    let idx = IndexSet::full(m.num_buyers(), m.num_goods());
                    run_ea(NoisyOracle::new(m, spec, cli.seed, c)?, &idx, eps, delta)?
                }
                Input::UnitDemand(v) => {
                    let c = value_range(&noise, v.as_slice().iter().copied().fold(0.0, f64::max));
                    let idx = IndexSet::singletons(v.num_buyers(), v.num_goods());
                    run_ea(NoisyOracle::new(v, spec, cli.seed, c)?, &idx, eps, delta)?
                }
            };
            emit(out_dir, "estimates.csv", &estimates)?;
            emit(out_dir, "result.json", &serde_json::to_string_pretty(&body)?)?;
        }
        Command::RunEap { input, noise, schedule, deltas, budgets, bound_mode, target_eps } => {
            let budgets = if budgets.is_empty() { vec![Budget::Unbounded; schedule.len()] } else { budgets };
            let schedules = Schedules::new(schedule, deltas, budgets)?;
            let spec = NoiseSpec::uniform(noise.noise_half_width)?;
            let mut config = EapConfig { schedules, target_eps, bound_mode, structure: MarketStructure::General };
            let result = match input.load()? {
                Input::General(m) => {
                    let c = value_range(&noise, m.max_value());
                    eap(&mut NoisyOracle::new(m, spec, cli.seed, c)?, &config)?
                }
                Input::UnitDemand(v) => {
                    config.structure = MarketStructure::UnitDemand;
                    let c = value_range(&noise, v.as_slice().iter().copied().fold(0.0, f64::max));
                    eap(&mut NoisyOracle::new(v, spec, cli.seed, c)?, &config)?
                }
            };
            emit(out_dir, "estimates.csv", &estimates_to_csv(&result.estimates)?)?;
            emit(out_dir, "result.json", &serde_json::to_string_pretty(&learn_json(&result))?)?;
        }
        Command::UmLoss { truth, outcome } => {
            let market = load_market(&truth).with_context(|| format!("reading {}", truth.display()))?;
            let outcome = load_outcome(&outcome, market.num_buyers(), market.num_goods())
                .with_context(|| format!("reading {}", outcome.display()))?;
            let per_buyer = um_loss_per_buyer(&market, &outcome);
            let body = json!({
                "um_loss_per_buyer": per_buyer,
                "um_loss_market": per_buyer.iter().copied().fold(0.0, f64::max),
            });
            emit(out_dir, "um_loss.json", &serde_json::to_string_pretty(&body)?)?;
        }
        Command::Experiment { kind, config, draws, noise_half_width } => {
            let mut cfg = match config {
                Some(path) => {
                    let text = fs::read_to_string(&path).with_context(|| format!("reading {}", path.display()))?;
                    serde_json::from_str(&text).map_err(|e| noisy_ce::Error::Config(e.to_string()))?
                }
                None if cli.full => ExperimentConfig::full(),
                None => ExperimentConfig::default(),
            };
            if cli.full {
                let full = ExperimentConfig::full();
                cfg.buyers = full.buyers;
                cfg.goods = full.goods;
                cfg.draws = full.draws;
            }
            cfg.seed = cli.seed;
            cfg.threads = cli.threads;
            if let Some(d) = draws {
                cfg.draws = d;
            }
            if let Some(a) = noise_half_width {
                cfg.noise_half_width = a;
            }
            let kind = match kind {
                Kind::Table1 => ExperimentKind::Table1,
                Kind::Heatmap => ExperimentKind::Heatmap,
            };
            let dir = out_dir.map(Path::to_path_buf).unwrap_or_else(|| PathBuf::from("results"));
            let manifest = run_and_write(kind, &cfg, &dir)?;
            println!("{}", serde_json::to_string_pretty(&manifest)?);
        }
    }
    Ok(())
}

fn run_ea<V: Valuations + Sync>(
    mut oracle: NoisyOracle<V>,
    idx: &IndexSet,
    eps: f64,
    delta: f64,
) -> anyhow::Result<(String, serde_json::Value)> {
    let t = invert_hoeffding_t(oracle.value_range(), idx.len(), delta, eps)?;
    let out = ea(&mut oracle, idx, t, delta)?;
    let mut csv = String::from("buyer,bundle,mean,radius,status,samples\n");
    for ((i, s), mean) in &out.estimates {
        csv.push_str(&format!("{i},{},{mean},{},active,{t}\n", s.mask(), out.eps_hat));
    }
    let body = json!({
        "eps_hat": out.eps_hat,
        "delta_spent": delta,
        "iterations_run": 1,
        "samples_per_pair": t,
        "total_samples": t * idx.len() as u64,
        "value_range": oracle.value_range(),
    });
    Ok((csv, body))
}

fn exit_code(err: &anyhow::Error) -> u8 {
    err.chain()
        .find_map(|e| e.downcast_ref::<noisy_ce::Error>())
        .map_or(1, |e| e.exit_code() as u8)
}

fn main() -> ExitCode {
    env_logger::Builder::from_env(env_logger::Env::default().default_filter_or("warn")).init();
    let cli = match Cli::try_parse() {
        Ok(cli) => cli,
        Err(e) => {
            let code = if e.use_stderr() { 1 } else { 0 };
            let _ = e.print();
            return ExitCode::from(code);
        }
    };
    if cli.threads > 0 {
        if let Err(e) = rayon::ThreadPoolBuilder::new().num_threads(cli.threads).build_global() {
            log::warn!("could not size the thread pool: {e}");
        }
    }
    match run(cli) {
        Ok(()) => ExitCode::SUCCESS,
        Err(e) => {
            eprintln!("error: {e:#}");
            ExitCode::from(exit_code(&e))
        }
    }
}
