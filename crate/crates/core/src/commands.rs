//! Command entry points shared by the binary and the examples. Each command
//! reads its section of a [`RunConfig`], writes CSV files into `out` and
//! returns their paths. Results depend only on the configuration and the
//! seed, never on the thread count.

use std::path::{Path, PathBuf};
use std::sync::Arc;

use crate::calibration::{
    default_extraction_bandwidth, default_moneyness_grid, extract_eta_surface, select_beta, simulate_original_calibrated,
    simulate_particle_system, Estimation, ParticleCloud, ParticleSystem,
};
use crate::config::{CalibrateConfig, CalibrationFamily, Family, Grid, RunConfig};
use crate::error::{Error, Result};
use crate::io::{
    bounds_table, coverage_table, dump_table, report_table, slopes_table, smile_table, study_table, summary_table,
    surface_table, worst_of_table, Table,
};
use crate::model::{LimitSpec, ModelSpec};
use crate::pricing::{smile, worst_of_on};
use crate::sde::{
    simulate_market_model, simulate_original, simulate_simplified, MarketModel, NoisePlan, PathEnsemble,
    SimplifiedModel, SimulationRequest, StockSelection, StockSpec, Underlying,
};
use crate::surface::{local_vol_surface, PriceSurface};
use crate::theory::{bound_report, convergence_study, BoundConstants, StudyConfig};

#[derive(Debug, Clone, Copy, PartialEq, Eq)]
pub enum Command {
    Simulate,
    Calibrate,
    Smile,
    WorstOf,
    Dupire,
    Theorems,
}

impl Command {
    pub fn name(self) -> &'static str {
        match self {
            Command::Simulate => "simulate",
            Command::Calibrate => "calibrate",
            Command::Smile => "smile",
            Command::WorstOf => "worst-of",
            Command::Dupire => "dupire",
            Command::Theorems => "theorems",
        }
    }
}

pub fn run(command: Command, config: &RunConfig, out: &Path) -> Result<Vec<PathBuf>> {
    match command {
        Command::Simulate => cmd_simulate(config, out),
        Command::Calibrate => cmd_calibrate(config, out),
        Command::Smile => cmd_smile(config, out),
        Command::WorstOf => cmd_worst_of(config, out),
        Command::Dupire => cmd_dupire(config, out),
        Command::Theorems => cmd_theorems(config, out),
    }
}

/// Tables are held until the command has succeeded, so a failure part-way
/// leaves no partial output behind.
struct Outputs<'a> {
    dir: &'a Path,
    pending: Vec<(PathBuf, Table)>,
}

impl<'a> Outputs<'a> {
    fn new(dir: &'a Path) -> Self {
        Self {
            dir,
            pending: Vec::new(),
        }
    }

    fn put(&mut self, name: &str, table: Table) -> Result<()> {
        self.pending.push((self.dir.join(name), table));
        Ok(())
    }

    fn finish(self) -> Result<Vec<PathBuf>> {
        let mut written = Vec::with_capacity(self.pending.len());
        for (path, table) in self.pending {
            table.write(&path)?;
            written.push(path);
        }
        Ok(written)
    }
}

fn model(config: &RunConfig) -> Result<ModelSpec> {
    config.section("model", &config.model)?.build(&config.base_dir)
}

fn one_based(field: &str, ids: &[usize], m: usize) -> Result<Vec<usize>> {
    ids.iter()
        .map(|&j| {
            if j == 0 || j > m {
                Err(Error::validation(field, format!("stock id {j} is outside 1..={m}")))
            } else {
                Ok(j - 1)
            }
        })
        .collect()
}

/// Runs the `[simulate]` section against `[model]`.
pub fn simulate_ensemble(config: &RunConfig) -> Result<PathEnsemble> {
    let sim = config.section("simulate", &config.simulate)?;
    let spec = model(config)?;
    let m = spec.len();
    let record = match &sim.record {
        Some(ids) => StockSelection::Only(one_based("record", ids, m)?),
        None => StockSelection::All,
    };
    let mut request = SimulationRequest::new(sim.steps, sim.paths).record(record);
    if sim.companion {
        request = request.with_companion();
    }
    let noise = NoisePlan::new(config.seed);
    let limit = LimitSpec::from_model(&spec)?.with_beta(sim.limit_beta);
    match sim.family {
        Family::Original => simulate_original(&spec, &limit, &request, &noise),
        Family::Simplified => {
            let stocks = (0..m)
                .map(|j| StockSpec {
                    s0: spec.initial_stocks[j],
                    beta: spec.betas[j],
                    dividend: spec.dividends[j],
                    eta: spec.idio_vols[j].clone(),
                })
                .collect();
            let model = SimplifiedModel {
                limit,
                stocks,
                weights: Some(spec.weights.clone()),
                rate: spec.rate,
                horizon: spec.horizon,
            };
            simulate_simplified(&model, &request, &noise)
        }
        Family::Market => {
            let rho = sim
                .rho
                .ok_or_else(|| Error::validation("rho", "the market family needs a correlation"))?;
            let model = MarketModel {
                local_vols: spec.idio_vols.clone(),
                s0: spec.initial_stocks.clone(),
                dividends: spec.dividends.clone(),
                weights: Some(spec.weights.clone()),
                rho,
                rate: spec.rate,
                horizon: spec.horizon,
            };
            simulate_market_model(&model, &request, &noise)
        }
    }
}

/// `summary.csv`, plus `paths.csv` when `dump` is set.
pub fn cmd_simulate(config: &RunConfig, out: &Path) -> Result<Vec<PathBuf>> {
    let ensemble = simulate_ensemble(config)?;
    let mut o = Outputs::new(out);
    o.put("summary.csv", summary_table(&ensemble)?)?;
    if config.simulate.as_ref().is_some_and(|s| s.dump) {
        o.put("paths.csv", dump_table(&ensemble)?)?;
    }
    o.finish()
}

fn required<T: Clone>(field: &str, v: &Option<T>) -> Result<T> {
    v.clone()
        .ok_or_else(|| Error::validation(field, "required for the simplified calibration"))
}

/// Builds and runs the single-stock particle system of `[calibrate]`.
pub fn calibrate_cloud(config: &RunConfig) -> Result<(ParticleSystem, ParticleCloud)> {
    let c = config.section("calibrate", &config.calibrate)?;
    if !(c.s0 > 0.0) {
        return Err(Error::validation("s0", "must be positive"));
    }
    if !(c.horizon > 0.0) {
        return Err(Error::validation("horizon", "must be positive"));
    }
    let local_vol = required("local_vol", &c.local_vol)?.resolve(&config.base_dir, c.horizon)?;
    let index_vol = required("index_vol", &c.index_vol)?.resolve(&config.base_dir, c.horizon)?;
    let i0 = c.i0.unwrap_or(c.s0);
    let beta = match (c.beta, c.beta_hist) {
        (Some(b), _) => b,
        (None, Some(h)) => select_beta(&local_vol, &index_vol, c.s0, i0, h)?,
        (None, None) => return Err(Error::validation("beta", "give beta or beta_hist")),
    };
    let system = ParticleSystem {
        limit: LimitSpec::new(beta, c.dividend, c.index_dividend, i0, index_vol)?,
        local_vol,
        beta,
        rate: c.rate,
        dividend: c.dividend,
        s0: c.s0,
        horizon: c.horizon,
    };
    let estimation = match &c.regression {
        Some(basis) => Estimation::Regression(basis.clone()),
        None => {
            config.budget.unwrap_or_default().check(1, c.steps, c.particles)?;
            Estimation::Kernel(c.kernel)
        }
    };
    let cloud = simulate_particle_system(&system, c.particles, c.steps, &estimation, &NoisePlan::new(config.seed))?;
    Ok((system, cloud))
}

fn extraction_grid(c: &CalibrateConfig) -> Vec<f64> {
    c.moneyness.clone().unwrap_or_else(default_moneyness_grid)
}

/// Simplified family: `eta_surface.csv`, `calibration_report.csv`,
/// `coverage.csv`, and with a smile grid `particle_smile.csv` plus, when
/// `independent_paths` is set, `independent_smile.csv` from paths driven by
/// the extracted surface. Original family: the report plus one surface and
/// coverage file per stock.
pub fn cmd_calibrate(config: &RunConfig, out: &Path) -> Result<Vec<PathBuf>> {
    let c = config.section("calibrate", &config.calibrate)?;
    let mut o = Outputs::new(out);
    let moneyness = extraction_grid(c);
    let bandwidth = c.bandwidth.unwrap_or_else(|| default_extraction_bandwidth(c.particles));
    match c.family {
        CalibrationFamily::Simplified => {
            let (system, cloud) = calibrate_cloud(config)?;
            let (eta, coverage) = extract_eta_surface(&cloud, None, &moneyness, bandwidth)?;
            o.put("eta_surface.csv", surface_table(&eta))?;
            o.put("calibration_report.csv", report_table(&cloud.reports))?;
            o.put("coverage.csv", coverage_table(&coverage))?;
            if let Some(grid) = &c.smile_moneyness {
                o.put("particle_smile.csv", smile_table(&cloud.smile(grid, c.estimator)?))?;
                if let Some(paths) = c.independent_paths {
                    let model = SimplifiedModel {
                        limit: system.limit.clone(),
                        stocks: vec![StockSpec {
                            s0: system.s0,
                            beta: system.beta,
                            dividend: system.dividend,
                            eta: Arc::new(eta),
                        }],
                        weights: None,
                        rate: system.rate,
                        horizon: system.horizon,
                    };
                    let request = SimulationRequest::new(c.steps, paths);
                    let ensemble = simulate_simplified(&model, &request, &NoisePlan::new(config.seed).derive(1))?;
                    o.put(
                        "independent_smile.csv",
                        smile_table(&smile(&ensemble, Underlying::Stock(0), grid, c.estimator)?),
                    )?;
                }
            }
        }
        CalibrationFamily::Original => {
            let spec = model(config)?;
            let guard = config.budget.unwrap_or_default();
            let limit_vols = spec.idio_vols.clone();
            let cloud = simulate_original_calibrated(
                &spec,
                &limit_vols,
                c.particles,
                c.steps,
                &c.kernel,
                &NoisePlan::new(config.seed),
                &guard,
                &StockSelection::All,
            )?;
            o.put("calibration_report.csv", report_table(&cloud.reports))?;
            for j in 0..spec.len() {
                let stock = cloud.stock_cloud(j)?;
                let (eta, coverage) = extract_eta_surface(&stock, None, &moneyness, bandwidth)?;
                o.put(&format!("eta_surface_stock_{}.csv", j + 1), surface_table(&eta))?;
                o.put(&format!("coverage_stock_{}.csv", j + 1), coverage_table(&coverage))?;
            }
        }
    }
    o.finish()
}

/// `smile.csv` for the `[smile]` underlying of the `[simulate]` ensemble.
pub fn cmd_smile(config: &RunConfig, out: &Path) -> Result<Vec<PathBuf>> {
    let s = config.section("smile", &config.smile)?;
    let underlying: Underlying = s.underlying.parse()?;
    let ensemble = simulate_ensemble(config)?;
    let curve = smile(&ensemble, underlying, &s.moneyness, s.estimator)?;
    let mut o = Outputs::new(out);
    o.put("smile.csv", smile_table(&curve))?;
    o.finish()
}

/// `worst_of.csv`: call on the worst normalized performer for every strike.
pub fn cmd_worst_of(config: &RunConfig, out: &Path) -> Result<Vec<PathBuf>> {
    let w = config.section("worst_of", &config.worst_of)?;
    if w.strikes.is_empty() {
        return Err(Error::validation("strikes", "at least one strike is required"));
    }
    let ensemble = simulate_ensemble(config)?;
    let m = model(config)?.len();
    let ids = match &w.stocks {
        Some(ids) => one_based("stocks", ids, m)?,
        None => ensemble.stocks.iter().map(|s| s.id).collect(),
    };
    let rows = w
        .strikes
        .iter()
        .map(|&k| worst_of_on(&ensemble, &ids, k).map(|e| (k, e)))
        .collect::<Result<Vec<_>>>()?;
    let mut o = Outputs::new(out);
    o.put("worst_of.csv", worst_of_table(&rows))?;
    o.finish()
}

/// `local_vol.csv` from a call price grid or synthetic lognormal prices.
pub fn cmd_dupire(config: &RunConfig, out: &Path) -> Result<Vec<PathBuf>> {
    let d = config.section("dupire", &config.dupire)?;
    let prices = match (&d.prices, d.lognormal_vol) {
        (Some(path), _) => crate::io::read_price_csv(&config.base_dir.join(path), d.spot, d.rate, d.dividend)?,
        (None, Some(vol)) => {
            let times = d
                .times
                .as_ref()
                .map(Grid::nodes)
                .ok_or_else(|| Error::validation("times", "required with lognormal_vol"))?;
            let strikes = d
                .strikes
                .as_ref()
                .map(Grid::nodes)
                .ok_or_else(|| Error::validation("strikes", "required with lognormal_vol"))?;
            PriceSurface::lognormal(d.spot, d.rate, d.dividend, vol, times, strikes)?
        }
        (None, None) => return Err(Error::validation("prices", "give a price file or lognormal_vol")),
    };
    let surface = local_vol_surface(&prices, d.cap)?;
    let mut o = Outputs::new(out);
    o.put("local_vol.csv", surface_table(&surface))?;
    o.finish()
}

/// `bounds.csv` for `[model]`, and `study.csv` / `study_slopes.csv` from
/// homogeneous baskets of the `sizes` built from the first entries of `[model]`.
pub fn cmd_theorems(config: &RunConfig, out: &Path) -> Result<Vec<PathBuf>> {
    let t = config.section("theorems", &config.theorems)?;
    let mc = config.section("model", &config.model)?;
    let spec = mc.build(&config.base_dir)?;
    let limit = LimitSpec::from_model(&spec)?.with_beta(t.beta);
    let limit = LimitSpec { delta: t.delta, ..limit };
    let constants = t.constants.unwrap_or_else(|| BoundConstants::from_surfaces(&spec));
    let reports = t
        .orders
        .iter()
        .map(|&p| bound_report(&spec, &limit, &constants, p))
        .collect::<Result<Vec<_>>>()?;
    let study = convergence_study(
        |m| mc.build_with(&config.base_dir, m),
        &StudyConfig {
            sizes: t.sizes.clone(),
            p: t.study_order,
            paths: t.paths,
            steps: t.steps,
            beta: t.beta,
            delta: t.delta,
            constants: t.constants,
        },
        &NoisePlan::new(config.seed),
    )?;
    let mut o = Outputs::new(out);
    o.put("bounds.csv", bounds_table(&reports))?;
    o.put("study.csv", study_table(&study))?;
    o.put("study_slopes.csv", slopes_table(std::slice::from_ref(&study)))?;
    o.finish()
}
