//! Rolling-horizon multiyear driver, run configuration and result export.

use std::fs;
use std::path::{Path, PathBuf};

use serde::{Deserialize, Serialize};

use crate::benders::{plan_with_escalation, write_trace_csv, BendersConfig, Termination, TraceRow};
use crate::bounds::{fixture_hash, sha256_hex, BoundCertificate};
use crate::error::{Error, Result};
use crate::grid::{apply_year_scaling, capex_split, commit_plan, load_case_with, CostConfig, InvestmentPlan, Network, ScalingTable};
use crate::instance::Instance;
use crate::ptdf::{compute_ptdf, sparsify_ptdf, PtdfMatrix};
use crate::scenario::{build_day_profiles, load_scenarios, materialize_scenarios, select_representative_days, AnnualSeries, DaySelection, Scenario};
use crate::solver::Backend;

#[derive(Debug, Clone, Copy, PartialEq, Eq, Default, Serialize, Deserialize)]
#[serde(rename_all = "kebab-case")]
pub enum Mode {
    #[default]
    Plan,
    Oracle,
    Bounds,
    SelectDays,
    Ptdf,
}

#[derive(Debug, Clone, PartialEq, Default, Serialize, Deserialize)]
#[serde(default, deny_unknown_fields)]
pub struct RunPaths {
    pub case: Option<PathBuf>,
    /// Hourly CSV for representative-day selection.
    pub annual_series: Option<PathBuf>,
    /// Ready-made scenarios (JSON array); used when no annual series is given.
    pub scenarios: Option<PathBuf>,
    /// Year multipliers; the built-in projection when absent.
    pub scaling: Option<PathBuf>,
    pub cost_config: Option<PathBuf>,
    pub output_dir: Option<PathBuf>,
}

#[derive(Debug, Clone, PartialEq, Serialize, Deserialize)]
#[serde(default, deny_unknown_fields)]
pub struct RunConfig {
    pub paths: RunPaths,
    pub k_r: usize,
    pub k_p: f64,
    pub k_v: usize,
    /// Days per decision period.
    pub alpha: f64,
    /// Relative optimality gap target.
    pub epsilon: f64,
    pub master_gap: f64,
    /// Initial shed penalty, $/MWh; ten times the largest marginal cost when absent.
    pub lambda0: Option<f64>,
    pub max_doublings: usize,
    /// Storage trust-region radius, in units.
    pub storage_radius: u32,
    /// Benders wall-clock budget per year, seconds.
    pub time_limit_s: f64,
    pub max_iterations: usize,
    pub years: Vec<u32>,
    pub seed: u64,
    pub mode: Mode,
    pub trust_region: bool,
    pub warm_start: bool,
}

impl Default for RunConfig {
    fn default() -> Self {
        Self {
            paths: RunPaths::default(),
            k_r: 18,
            k_p: 0.005,
            k_v: 32,
            alpha: 1825.0,
            epsilon: 1e-3,
            master_gap: 1e-3,
            lambda0: None,
            max_doublings: crate::benders::DEFAULT_MAX_DOUBLINGS,
            storage_radius: 2,
            time_limit_s: 600.0,
            max_iterations: 1000,
            years: vec![2030, 2035, 2040, 2045],
            seed: 0,
            mode: Mode::Plan,
            trust_region: true,
            warm_start: true,
        }
    }
}

impl RunConfig {
    pub fn load(path: impl AsRef<Path>) -> Result<Self> {
        let text = read(path.as_ref())?;
        let mut cfg: RunConfig = serde_json::from_str(&text)?;
        cfg.resolve_paths(path.as_ref().parent().unwrap_or(Path::new(".")));
        cfg.validate()?;
        Ok(cfg)
    }

    /// Makes relative paths relative to `base`.
    pub fn resolve_paths(&mut self, base: &Path) {
        let p = &mut self.paths;
        for slot in [
            &mut p.case,
            &mut p.annual_series,
            &mut p.scenarios,
            &mut p.scaling,
            &mut p.cost_config,
            &mut p.output_dir,
        ] {
            if let Some(x) = slot.as_mut() {
                if x.is_relative() {
                    *x = base.join(&*x);
                }
            }
        }
    }

    pub fn validate(&self) -> Result<()> {
        if !(self.epsilon > 0.0) {
            return Err(Error::InvalidInput(format!("epsilon must be positive, got {}", self.epsilon)));
        }
        if !(self.master_gap >= 0.0) {
            return Err(Error::InvalidInput("master_gap must be nonnegative".into()));
        }
        if self.k_r < 1 {
            return Err(Error::InvalidInput("k_r must be at least 1".into()));
        }
        if !(0.0..1.0).contains(&self.k_p) {
            return Err(Error::InvalidInput(format!("k_p must lie in [0, 1), got {}", self.k_p)));
        }
        if self.k_v < 1 {
            return Err(Error::InvalidInput("k_v must be at least 1".into()));
        }
        if !(self.alpha > 0.0) {
            return Err(Error::InvalidInput("alpha must be positive".into()));
        }
        if let Some(l) = self.lambda0 {
            if !(l > 0.0 && l.is_finite()) {
                return Err(Error::InvalidInput(format!("lambda0 must be positive, got {l}")));
            }
        }
        if !(self.time_limit_s > 0.0) {
            return Err(Error::InvalidInput("time_limit_s must be positive".into()));
        }
        if self.years.is_empty() {
            return Err(Error::InvalidInput("years is empty".into()));
        }
        if self.years.windows(2).any(|w| w[1] <= w[0]) {
            return Err(Error::InvalidInput(format!("years must be strictly increasing, got {:?}", self.years)));
        }
        Ok(())
    }

    pub fn benders(&self) -> BendersConfig {
        BendersConfig {
            epsilon: self.epsilon,
            master_gap: self.master_gap,
            k_v: self.k_v,
            time_limit: self.time_limit_s,
            trust_region: self.trust_region,
            warm_start: self.warm_start,
            storage_radius: self.storage_radius,
            max_iterations: self.max_iterations,
        }
    }

    pub fn hash(&self) -> String {
        sha256_hex(serde_json::to_string(self).expect("config serializes").as_bytes())
    }
}

fn read(path: &Path) -> Result<String> {
    fs::read_to_string(path).map_err(|source| Error::PathIo {
        path: path.to_path_buf(),
        source,
    })
}

#[derive(Debug, Clone)]
pub enum ScenarioSource {
    /// Representative days of an hourly year, rescaled per planning year.
    Series { series: AnnualSeries, selection: DaySelection },
    /// Base-year scenarios, rescaled per planning year.
    Fixed(Vec<Scenario>),
}

/// Everything the rolling horizon reads from disk.
#[derive(Debug, Clone)]
pub struct PlanningInputs {
    pub net: Network,
    pub costs: CostConfig,
    pub scaling: ScalingTable,
    pub source: ScenarioSource,
}

impl PlanningInputs {
    pub fn load(cfg: &RunConfig) -> Result<Self> {
        let costs = match &cfg.paths.cost_config {
            Some(p) => {
                let c: CostConfig = serde_json::from_str(&read(p)?)?;
                c.validate()?;
                c
            }
            None => CostConfig::default(),
        };
        let case = cfg
            .paths
            .case
            .as_ref()
            .ok_or_else(|| Error::InvalidInput("no case file configured".into()))?;
        let net = load_case_with(case, &costs)?;
        let scaling = match &cfg.paths.scaling {
            Some(p) => ScalingTable::load(p)?,
            None => ScalingTable::texas_projection(),
        };
        let source = match (&cfg.paths.annual_series, &cfg.paths.scenarios) {
            (Some(p), _) => {
                let series = AnnualSeries::load_csv(p)?;
                let selection = select_representative_days(&build_day_profiles(&series)?, cfg.k_r)?;
                ScenarioSource::Series { series, selection }
            }
            (None, Some(p)) => ScenarioSource::Fixed(load_scenarios(p)?),
            (None, None) => {
                return Err(Error::InvalidInput("configure either an annual series or a scenario file".into()))
            }
        };
        Ok(Self {
            net,
            costs,
            scaling,
            source,
        })
    }

    /// The year's scenarios on the given (committed, unscaled) network.
    pub fn scenarios_for(&self, net: &Network, year: u32) -> Result<Vec<Scenario>> {
        match &self.source {
            ScenarioSource::Series { series, selection } => materialize_scenarios(net, series, selection, year, &self.scaling),
            ScenarioSource::Fixed(base) => {
                let ys = self.scaling.get(year)?;
                Ok(base.iter().map(|s| s.scaled(net, ys)).collect())
            }
        }
    }

    pub fn ptdf(&self, k_p: f64) -> Result<PtdfMatrix> {
        sparsify_ptdf(&compute_ptdf(&self.net)?, k_p)
    }
}

#[derive(Debug, Clone, Serialize)]
pub struct YearResult {
    pub year: u32,
    pub incremental: InvestmentPlan,
    pub cumulative: InvestmentPlan,
    pub capex_lines: f64,
    pub capex_storage: f64,
    /// Probability-weighted, `alpha`-scaled.
    pub opex_gen: f64,
    pub opex_storage: f64,
    pub opex_shed: f64,
    pub objective: f64,
    pub gap: f64,
    pub termination: Termination,
    pub lambda: f64,
    pub doublings: usize,
    pub total_shed: f64,
    #[serde(skip)]
    pub trace: Vec<TraceRow>,
    pub certificate: BoundCertificate,
}

#[derive(Debug)]
pub struct YearFailure {
    pub year: u32,
    pub error: Error,
}

/// Completed years, and the year that stopped the run if any.
#[derive(Debug)]
pub struct HorizonRun {
    pub years: Vec<YearResult>,
    pub failure: Option<YearFailure>,
    /// Network with every completed year's investment committed.
    pub network: Network,
}

impl HorizonRun {
    pub fn into_result(self) -> Result<Vec<YearResult>> {
        match self.failure {
            Some(f) => Err(f.error),
            None => Ok(self.years),
        }
    }
}

/// Solves the years in order, committing each year's plan into the network
/// the next year starts from. Stops at the first failing year and keeps the
/// years already solved.
pub fn run_rolling_horizon(backend: &dyn Backend, inputs: &PlanningInputs, cfg: &RunConfig) -> Result<HorizonRun> {
    cfg.validate()?;
    inputs.costs.validate()?;
    // Upgrades change limits, not reactances, so one matrix serves every year.
    let ptdf = inputs.ptdf(cfg.k_p)?;
    let bcfg = cfg.benders();
    let config_hash = cfg.hash();
    let mut net = inputs.net.clone();
    let mut cumulative = InvestmentPlan::zero(&net, inputs.costs.storage_unit_mwh);
    let mut years = Vec::new();
    for &year in &cfg.years {
        match solve_year(backend, inputs, cfg, &bcfg, &ptdf, &net, year, &config_hash) {
            Ok((mut result, next)) => {
                cumulative = cumulative.plus(&result.incremental);
                result.cumulative = cumulative.clone();
                log::info!(
                    "year {year}: objective {:.2}, gap {:.4}, {:?}",
                    result.objective,
                    result.gap,
                    result.termination
                );
                net = next;
                years.push(result);
            }
            Err(error) => {
                log::error!("year {year} failed: {error}");
                return Ok(HorizonRun {
                    years,
                    failure: Some(YearFailure { year, error }),
                    network: net,
                });
            }
        }
    }
    Ok(HorizonRun {
        years,
        failure: None,
        network: net,
    })
}

#[allow(clippy::too_many_arguments)]
fn solve_year(
    backend: &dyn Backend,
    inputs: &PlanningInputs,
    cfg: &RunConfig,
    bcfg: &BendersConfig,
    ptdf: &PtdfMatrix,
    net: &Network,
    year: u32,
    config_hash: &str,
) -> Result<(YearResult, Network)> {
    let scaled = apply_year_scaling(net, &inputs.scaling, year)?;
    let scenarios = inputs.scenarios_for(net, year)?;
    let inst = Instance {
        net: &scaled,
        ptdf,
        costs: &inputs.costs,
        scenarios: &scenarios,
        alpha: cfg.alpha,
    };
    inst.validate()?;
    let lambda0 = cfg.lambda0.unwrap_or_else(|| inst.default_shed_penalty());
    let esc = plan_with_escalation(backend, &inst, lambda0, cfg.max_doublings, bcfg)?;
    let out = esc.result;
    let weights: Vec<f64> = scenarios.iter().map(|s| s.weight).collect();
    let opex = out.expected_opex(&weights);
    let [capex_lines, capex_storage] = capex_split(&out.plan, &scaled);
    let certificate = out
        .certificate
        .clone()
        .with_provenance(fixture_hash(&scaled, &scenarios)?, config_hash.to_string());
    let next = commit_plan(net, &out.plan)?;
    let result = YearResult {
        year,
        cumulative: out.plan.clone(),
        incremental: out.plan,
        capex_lines,
        capex_storage,
        opex_gen: opex.generation,
        opex_storage: opex.storage,
        opex_shed: opex.shed,
        objective: out.objective,
        gap: certificate.gap,
        termination: out.termination,
        lambda: esc.lambda,
        doublings: esc.doublings,
        total_shed: out.recourse.iter().map(|r| r.dispatch.total_shed()).sum(),
        trace: out.trace,
        certificate,
    };
    Ok((result, next))
}

/// One row of the per-year summary table.
#[derive(Debug, Clone, PartialEq, Serialize, Deserialize)]
pub struct SummaryRow {
    pub year: u32,
    pub n_lines: usize,
    pub n_storage_nodes: usize,
    #[serde(rename = "GWh")]
    pub gwh: f64,
    pub capex_lines: f64,
    pub capex_storage: f64,
    pub opex_gen: f64,
    pub opex_storage: f64,
    pub gap: f64,
}

impl From<&YearResult> for SummaryRow {
    fn from(r: &YearResult) -> Self {
        Self {
            year: r.year,
            n_lines: r.incremental.upgraded_branches(),
            n_storage_nodes: r.incremental.storage_sites(),
            gwh: r.incremental.total_storage_mwh() / 1000.0,
            capex_lines: r.capex_lines,
            capex_storage: r.capex_storage,
            opex_gen: r.opex_gen,
            opex_storage: r.opex_storage,
            gap: r.gap,
        }
    }
}

/// Contents of `plan_<year>.json`.
#[derive(Debug, Clone, PartialEq, Serialize, Deserialize)]
pub struct PlanFile {
    pub year: u32,
    pub branch_ids: Vec<usize>,
    pub bus_ids: Vec<usize>,
    pub incremental: InvestmentPlan,
    pub cumulative: InvestmentPlan,
}

/// Writes `plan_<year>.json`, `trace_<year>.csv`, `certificate_<year>.json`
/// and `summary.csv` under `dir`. Returns the paths written.
pub fn export_results(results: &[YearResult], net: &Network, dir: impl AsRef<Path>) -> Result<Vec<PathBuf>> {
    let dir = dir.as_ref();
    if results.is_empty() {
        return Err(Error::InvalidInput("no results to export".into()));
    }
    let io = |path: &Path| {
        let path = path.to_path_buf();
        move |source| Error::PathIo { path, source }
    };
    fs::create_dir_all(dir).map_err(io(dir))?;
    let branch_ids: Vec<usize> = net.branches.iter().map(|b| b.id).collect();
    let bus_ids: Vec<usize> = net.buses.iter().map(|b| b.id).collect();
    let mut written = Vec::new();
    for r in results {
        let plan_path = dir.join(format!("plan_{}.json", r.year));
        let doc = PlanFile {
            year: r.year,
            branch_ids: branch_ids.clone(),
            bus_ids: bus_ids.clone(),
            incremental: r.incremental.clone(),
            cumulative: r.cumulative.clone(),
        };
        fs::write(&plan_path, serde_json::to_string_pretty(&doc)? + "\n").map_err(io(&plan_path))?;
        written.push(plan_path);

        let trace_path = dir.join(format!("trace_{}.csv", r.year));
        let mut buf = Vec::new();
        write_trace_csv(&r.trace, &mut buf)?;
        fs::write(&trace_path, buf).map_err(io(&trace_path))?;
        written.push(trace_path);

        let cert_path = dir.join(format!("certificate_{}.json", r.year));
        r.certificate.write_json(&cert_path)?;
        written.push(cert_path);
    }
    let summary_path = dir.join("summary.csv");
    let mut w = csv::Writer::from_writer(Vec::new());
    for r in results {
        w.serialize(SummaryRow::from(r))?;
    }
    let bytes = w.into_inner().map_err(|e| Error::Io(e.into_error()))?;
    fs::write(&summary_path, bytes).map_err(io(&summary_path))?;
    written.push(summary_path);
    Ok(written)
}
