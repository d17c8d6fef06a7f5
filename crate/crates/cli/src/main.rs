use std::fs;
use std::io::Write;
use std::path::{Path, PathBuf};
use std::process::ExitCode;

use anyhow::{anyhow, Context};
use clap::{Args, Parser, Subcommand};

use tepstor::benders::{escalate_shed_penalty, solve_subproblem, Phase, RetainedFlows, Termination};
use tepstor::bounds::{certify, compute_lower_bound, fixture_hash};
use tepstor::extensive::{solve_extensive, ExtensiveOptions};
use tepstor::grid::{apply_year_scaling, load_case_with, plan_capex, CostConfig, InvestmentPlan};
use tepstor::planner::{export_results, run_rolling_horizon, Mode, PlanFile, PlanningInputs, RunConfig};
use tepstor::ptdf::{compute_ptdf, sparsify_ptdf};
use tepstor::scenario::{build_day_profiles, min_pairwise_distance, select_representative_days, AnnualSeries};
use tepstor::solver::HighsBackend;
use tepstor::{Error, Instance};

#[derive(Parser)]
#[command(name = "tepstor", version, about = "Transmission and storage expansion planning")]
struct Cli {
    #[command(subcommand)]
    command: Command,
}

#[derive(Subcommand)]
enum Command {
    /// Rolling-horizon plan: warm start, stabilized Benders, certificates.
    Plan(RunArgs),
    /// Solve one year's extensive form directly.
    Oracle {
        #[command(flatten)]
        run: RunArgs,
        /// Year to solve; the first configured year by default.
        #[arg(long)]
        year: Option<u32>,
    },
    /// Lower bound for one year, and its gap against a plan if given.
    Bounds {
        #[command(flatten)]
        run: RunArgs,
        #[arg(long)]
        year: Option<u32>,
        /// Plan to certify against the uncommitted network: a `plan_<year>.json`
        /// export (its cumulative plan) or a bare `{gamma, units, unit_mwh}` object.
        #[arg(long)]
        plan: Option<PathBuf>,
    },
    /// Pick representative days from an hourly series.
    SelectDays {
        #[arg(long)]
        series: PathBuf,
        #[arg(long, default_value_t = 18)]
        k_r: usize,
        /// Output JSON; stdout when absent.
        #[arg(long)]
        out: Option<PathBuf>,
    },
    /// Export the (sparsified) PTDF matrix as CSV.
    Ptdf {
        #[arg(long)]
        case: PathBuf,
        #[arg(long)]
        costs: Option<PathBuf>,
        #[arg(long, default_value_t = 0.005)]
        k_p: f64,
        #[arg(long)]
        out: Option<PathBuf>,
    },
}

/// Config file plus field overrides.
#[derive(Args, Debug, Default)]
struct RunArgs {
    #[arg(long)]
    config: Option<PathBuf>,
    #[arg(long)]
    case: Option<PathBuf>,
    #[arg(long)]
    series: Option<PathBuf>,
    #[arg(long)]
    scenarios: Option<PathBuf>,
    #[arg(long)]
    scaling: Option<PathBuf>,
    #[arg(long)]
    costs: Option<PathBuf>,
    #[arg(long)]
    out: Option<PathBuf>,
    #[arg(long)]
    k_r: Option<usize>,
    #[arg(long)]
    k_p: Option<f64>,
    #[arg(long)]
    k_v: Option<usize>,
    #[arg(long)]
    alpha: Option<f64>,
    #[arg(long)]
    epsilon: Option<f64>,
    #[arg(long)]
    master_gap: Option<f64>,
    #[arg(long)]
    lambda0: Option<f64>,
    #[arg(long)]
    storage_radius: Option<u32>,
    /// Seconds per year.
    #[arg(long)]
    time_limit: Option<f64>,
    #[arg(long, value_delimiter = ',')]
    years: Option<Vec<u32>>,
    #[arg(long)]
    seed: Option<u64>,
    /// Disable the trust region and candidate restriction.
    #[arg(long)]
    no_tr: bool,
    /// Start from the zero plan instead of the relaxation warm start.
    #[arg(long)]
    no_warm_start: bool,
}

impl RunArgs {
    fn config(&self, mode: Mode) -> Result<RunConfig, Error> {
        let mut cfg = match &self.config {
            Some(p) => RunConfig::load(p)?,
            None => RunConfig::default(),
        };
        let p = &mut cfg.paths;
        for (dst, src) in [
            (&mut p.case, &self.case),
            (&mut p.annual_series, &self.series),
            (&mut p.scenarios, &self.scenarios),
            (&mut p.scaling, &self.scaling),
            (&mut p.cost_config, &self.costs),
            (&mut p.output_dir, &self.out),
        ] {
            if src.is_some() {
                dst.clone_from(src);
            }
        }
        if self.scenarios.is_some() && self.series.is_none() {
            p.annual_series = None;
        }
        macro_rules! set {
            ($dst:expr, $src:expr) => {
                if let Some(v) = $src.clone() {
                    $dst = v;
                }
            };
        }
        set!(cfg.k_r, self.k_r);
        set!(cfg.k_p, self.k_p);
        set!(cfg.k_v, self.k_v);
        set!(cfg.alpha, self.alpha);
        set!(cfg.epsilon, self.epsilon);
        set!(cfg.master_gap, self.master_gap);
        set!(cfg.lambda0, self.lambda0.map(Some));
        set!(cfg.storage_radius, self.storage_radius);
        set!(cfg.time_limit_s, self.time_limit);
        set!(cfg.years, self.years);
        set!(cfg.seed, self.seed);
        cfg.trust_region &= !self.no_tr;
        cfg.warm_start &= !self.no_warm_start;
        cfg.mode = mode;
        cfg.validate()?;
        Ok(cfg)
    }
}

const EXIT_INVALID: u8 = 2;
const EXIT_TIME_LIMIT: u8 = 3;
const EXIT_INFEASIBLE: u8 = 4;

fn exit_code(err: &anyhow::Error) -> u8 {
    match err.downcast_ref::<Error>() {
        Some(
            Error::InvalidInput(_)
            | Error::InvalidCase { .. }
            | Error::DimensionMismatch(_)
            | Error::UnknownYear(_)
            | Error::SingularSusceptance
            | Error::UnbalancedInjection(_)
            | Error::Json(_)
            | Error::Csv(_)
            | Error::PathIo { .. },
        ) => EXIT_INVALID,
        Some(Error::InfeasibleAtMax(_) | Error::MasterInfeasible(_) | Error::PenaltyEscalation { .. }) => EXIT_INFEASIBLE,
        _ if err.downcast_ref::<std::io::Error>().is_some() => EXIT_INVALID,
        _ => 1,
    }
}

fn main() -> ExitCode {
    env_logger::Builder::from_env(env_logger::Env::default().default_filter_or("warn")).init();
    let cli = Cli::parse();
    match run(cli) {
        Ok(code) => ExitCode::from(code),
        Err(e) => {
            eprintln!("error: {e:#}");
            ExitCode::from(exit_code(&e))
        }
    }
}

fn run(cli: Cli) -> anyhow::Result<u8> {
    match cli.command {
        Command::Plan(args) => plan(&args.config(Mode::Plan)?),
        Command::Oracle { run, year } => oracle(&run.config(Mode::Oracle)?, year),
        Command::Bounds { run, year, plan } => bounds(&run.config(Mode::Bounds)?, year, plan.as_deref()),
        Command::SelectDays { series, k_r, out } => select_days(&series, k_r, out.as_deref()),
        Command::Ptdf { case, costs, k_p, out } => ptdf(&case, costs.as_deref(), k_p, out.as_deref()),
    }
}

fn plan(cfg: &RunConfig) -> anyhow::Result<u8> {
    let inputs = PlanningInputs::load(cfg)?;
    let backend = HighsBackend::default();
    let run = run_rolling_horizon(&backend, &inputs, cfg)?;
    let mut stdout = std::io::stdout().lock();
    writeln!(stdout, "year,objective,gap,termination,lambda,lines,storage_nodes,storage_mwh")?;
    for r in &run.years {
        writeln!(
            stdout,
            "{},{:.2},{:.6},{:?},{},{},{},{}",
            r.year,
            r.objective,
            r.gap,
            r.termination,
            r.lambda,
            r.incremental.upgraded_branches(),
            r.incremental.storage_sites(),
            r.incremental.total_storage_mwh()
        )?;
    }
    if let (Some(dir), false) = (&cfg.paths.output_dir, run.years.is_empty()) {
        export_results(&run.years, &inputs.net, dir)?;
        fs::write(dir.join("config.json"), serde_json::to_string_pretty(cfg)? + "\n")
            .with_context(|| format!("writing config to {}", dir.display()))?;
    }
    if let Some(f) = run.failure {
        return Err(anyhow::Error::new(f.error).context(format!("year {}", f.year)));
    }
    let timed_out = run.years.iter().any(|r| r.termination == Termination::TimeLimit);
    Ok(if timed_out { EXIT_TIME_LIMIT } else { 0 })
}

struct YearData {
    net: tepstor::grid::Network,
    ptdf: tepstor::ptdf::PtdfMatrix,
    costs: CostConfig,
    scenarios: Vec<tepstor::scenario::Scenario>,
}

fn year_data(cfg: &RunConfig, year: Option<u32>) -> anyhow::Result<(u32, YearData)> {
    let inputs = PlanningInputs::load(cfg)?;
    let year = year.unwrap_or(cfg.years[0]);
    let ptdf = inputs.ptdf(cfg.k_p)?;
    let scenarios = inputs.scenarios_for(&inputs.net, year)?;
    let net = apply_year_scaling(&inputs.net, &inputs.scaling, year)?;
    Ok((
        year,
        YearData {
            net,
            ptdf,
            costs: inputs.costs,
            scenarios,
        },
    ))
}

impl YearData {
    fn instance(&self, alpha: f64) -> Instance<'_> {
        Instance {
            net: &self.net,
            ptdf: &self.ptdf,
            costs: &self.costs,
            scenarios: &self.scenarios,
            alpha,
        }
    }
}

fn oracle(cfg: &RunConfig, year: Option<u32>) -> anyhow::Result<u8> {
    let (year, data) = year_data(cfg, year)?;
    let inst = data.instance(cfg.alpha);
    inst.validate()?;
    let backend = HighsBackend::default();
    let opts = ExtensiveOptions {
        time_limit: cfg.time_limit_s,
        k_v: cfg.k_v,
        ..Default::default()
    };
    let lambda0 = cfg.lambda0.unwrap_or_else(|| inst.default_shed_penalty());
    let esc = escalate_shed_penalty(
        lambda0,
        cfg.max_doublings,
        |l| solve_extensive(&backend, &inst, l, opts),
        |s| s.shedding_scenarios(tepstor::FEASIBILITY_TOL),
    )?;
    let sol = esc.result;
    let plan = sol.integer_plan.clone().ok_or_else(|| anyhow!("extensive form returned no integer plan"))?;
    let report = serde_json::json!({
        "year": year,
        "objective": sol.objective,
        "capex": sol.capex,
        "best_bound": sol.best_bound,
        "gap": sol.gap,
        "lambda": esc.lambda,
        "limit_hit": sol.limit_hit,
        "plan": plan,
    });
    emit(&serde_json::to_string_pretty(&report)?, cfg.paths.output_dir.as_deref(), &format!("oracle_{year}.json"))?;
    Ok(if sol.limit_hit { EXIT_TIME_LIMIT } else { 0 })
}

fn bounds(cfg: &RunConfig, year: Option<u32>, plan: Option<&Path>) -> anyhow::Result<u8> {
    let (year, data) = year_data(cfg, year)?;
    let inst = data.instance(cfg.alpha);
    inst.validate()?;
    let backend = HighsBackend::default();
    let lambda = cfg.lambda0.unwrap_or_else(|| inst.default_shed_penalty());
    let lb = compute_lower_bound(&backend, &inst, lambda, cfg.k_v)?;
    let Some(path) = plan else {
        emit(&serde_json::to_string_pretty(&lb)?, cfg.paths.output_dir.as_deref(), &format!("lower_bound_{year}.json"))?;
        return Ok(0);
    };
    let text = fs::read_to_string(path).with_context(|| format!("reading {}", path.display()))?;
    let plan = match serde_json::from_str::<PlanFile>(&text) {
        Ok(f) => f.cumulative,
        Err(_) => serde_json::from_str::<InvestmentPlan>(&text).map_err(Error::from)?,
    };
    plan.validate(&data.net)?;
    let point = plan.relaxed();
    let mut ub = plan_capex(&plan, &data.net)?;
    for (s, sc) in data.scenarios.iter().enumerate() {
        let r = solve_subproblem(&backend, &inst, s, &point, lambda, cfg.k_v, &mut RetainedFlows::default())?;
        if r.phase == Phase::Feasibility {
            return Err(Error::InvalidInput(format!("plan sheds {:.3} MW in scenario {}", r.phase1_shed, sc.id)).into());
        }
        ub += sc.weight * r.value;
    }
    let cert = certify(&lb, ub).with_provenance(fixture_hash(&data.net, &data.scenarios)?, cfg.hash());
    emit(&serde_json::to_string_pretty(&cert)?, cfg.paths.output_dir.as_deref(), &format!("certificate_{year}.json"))?;
    Ok(0)
}

fn select_days(series: &Path, k_r: usize, out: Option<&Path>) -> anyhow::Result<u8> {
    let series = AnnualSeries::load_csv(series)?;
    let profiles = build_day_profiles(&series)?;
    let sel = select_representative_days(&profiles, k_r)?;
    log::info!("minimum pairwise distance {:.4}", min_pairwise_distance(&profiles, &sel.days));
    match out {
        Some(p) => sel.write_json(p)?,
        None => println!("{}", serde_json::to_string_pretty(&sel)?),
    }
    Ok(0)
}

fn ptdf(case: &Path, costs: Option<&Path>, k_p: f64, out: Option<&Path>) -> anyhow::Result<u8> {
    let costs: CostConfig = match costs {
        Some(p) => serde_json::from_str(&fs::read_to_string(p).with_context(|| format!("reading {}", p.display()))?)
            .map_err(Error::from)?,
        None => CostConfig::default(),
    };
    let net = load_case_with(case, &costs)?;
    let full = compute_ptdf(&net)?;
    let sparse = sparsify_ptdf(&full, k_p)?;
    let report = sparse.sparsity();
    eprintln!(
        "cutoff {:.6e}, nonzeros {} -> {} ({:.1}% removed)",
        report.cutoff,
        report.nnz_before,
        report.nnz_after,
        100.0 * report.reduction_ratio
    );
    match out {
        Some(p) => {
            let file = fs::File::create(p).with_context(|| format!("creating {}", p.display()))?;
            sparse.write_csv(&net, file)?;
        }
        None => sparse.write_csv(&net, std::io::stdout().lock())?,
    }
    Ok(0)
}

/// Writes `text` to `dir/name` when an output directory is set, else stdout.
fn emit(text: &str, dir: Option<&Path>, name: &str) -> anyhow::Result<()> {
    match dir {
        Some(d) => {
            fs::create_dir_all(d).with_context(|| format!("creating {}", d.display()))?;
            let path = d.join(name);
            fs::write(&path, format!("{text}\n")).with_context(|| format!("writing {}", path.display()))?;
            println!("{}", path.display());
        }
        None => println!("{text}"),
    }
    Ok(())
}
