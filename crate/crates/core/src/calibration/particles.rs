//! Interacting particle approximation of the calibrated simplified model,
//! in which a stock's idiosyncratic variance is
//! `v_loc(t, S) - beta^2 E[sigma^2(t, I) | S]`.

use std::sync::Arc;

use rayon::prelude::*;

use crate::error::{Error, Result};
use crate::model::{LimitSpec, ModelSpec};
use crate::pricing::{smile_from_samples, Estimator, SmileCurve};
use crate::sde::{euler_step, Channel, NoisePlan, PathEnsemble, StockSelection, TimeGrid, Underlying, POSITIVITY_FLOOR};
use crate::surface::VolSurface;

use super::kernel::{estimate_at_samples, KernelConfig};
use super::regression::{fit_parametric, BasisSpec};

/// How `E[sigma^2(t, I) | S = S_i]` is estimated across the cloud.
#[derive(Debug, Clone, PartialEq)]
pub enum Estimation {
    Kernel(KernelConfig),
    Regression(BasisSpec),
}

impl From<KernelConfig> for Estimation {
    fn from(k: KernelConfig) -> Self {
        Estimation::Kernel(k)
    }
}

impl Estimation {
    fn validate(&self) -> Result<()> {
        match self {
            Estimation::Kernel(k) => k.validate(),
            Estimation::Regression(b) if b.is_empty() => {
                Err(Error::validation("basis", "at least one basis function is required"))
            }
            Estimation::Regression(_) => Ok(()),
        }
    }

    /// Conditional expectation of `ys` given `xs` at every sample, and the work spent.
    pub fn at_samples(&self, xs: &[f64], ys: &[f64]) -> Result<(Vec<f64>, u64)> {
        match self {
            Estimation::Kernel(k) => {
                let e = estimate_at_samples(xs, ys, k)?;
                Ok((e.values, e.interactions))
            }
            Estimation::Regression(basis) => {
                let a = fit_parametric(xs, ys, basis)?;
                let lo = ys.iter().copied().fold(f64::INFINITY, f64::min);
                let hi = ys.iter().copied().fold(f64::NEG_INFINITY, f64::max);
                let values = xs.par_iter().map(|&x| basis.eval(&a, x).clamp(lo, hi)).collect();
                Ok((values, (xs.len() * basis.len()) as u64))
            }
        }
    }
}

/// Per-step diagnostics of a particle run.
#[derive(Debug, Clone, Copy, PartialEq)]
pub struct StepReport {
    pub step: usize,
    pub time: f64,
    /// Particles whose idiosyncratic variance came out negative and was set to 0.
    pub clamp_count: u64,
    /// Sum of the clamped negative variances' magnitudes.
    pub clamp_mass: f64,
    pub min_eta: f64,
    pub max_eta: f64,
    /// Kernel evaluations (or basis evaluations) spent on the step.
    pub interactions: u64,
}

/// Particle snapshots, step-major: step `k` occupies `[k * N, (k + 1) * N)`.
#[derive(Debug, Clone)]
pub struct ParticleCloud {
    pub grid: TimeGrid,
    pub particles: usize,
    pub s0: f64,
    pub i0: f64,
    pub beta: f64,
    pub rate: f64,
    pub dividend: f64,
    /// Target local volatility of the stock, when the cloud was calibrated to one.
    pub local_vol: Option<Arc<VolSurface>>,
    pub index_vol: Arc<VolSurface>,
    stock: Vec<f64>,
    index: Vec<f64>,
    /// Post-clamp idiosyncratic variance used on each step; empty for clouds built from paths.
    idio_variance: Vec<f64>,
    pub reports: Vec<StepReport>,
    /// Euler steps that hit the positivity floor.
    pub floor_hits: u64,
}

impl ParticleCloud {
    fn slice<'a>(&self, data: &'a [f64], k: usize) -> &'a [f64] {
        &data[k * self.particles..(k + 1) * self.particles]
    }

    pub fn stock_at(&self, k: usize) -> &[f64] {
        self.slice(&self.stock, k)
    }

    pub fn index_at(&self, k: usize) -> &[f64] {
        self.slice(&self.index, k)
    }

    pub fn idio_variance_at(&self, k: usize) -> Option<&[f64]> {
        (!self.idio_variance.is_empty() && k < self.grid.steps).then(|| self.slice(&self.idio_variance, k))
    }

    pub fn terminal_stock(&self) -> &[f64] {
        self.stock_at(self.grid.steps)
    }

    /// `sigma^2(t_k, I_i)` for every particle at step `k`.
    pub fn index_variance_at(&self, k: usize) -> Vec<f64> {
        let t = self.grid.time(k);
        self.index_at(k)
            .iter()
            .map(|&i| {
                let s = self.index_vol.eval(t, i);
                s * s
            })
            .collect()
    }

    pub fn total_interactions(&self) -> u64 {
        self.reports.iter().map(|r| r.interactions).sum()
    }

    pub fn total_clamps(&self) -> u64 {
        self.reports.iter().map(|r| r.clamp_count).sum()
    }

    /// Smile of the terminal stock distribution.
    pub fn smile(&self, moneyness: &[f64], estimator: Estimator) -> Result<SmileCurve> {
        smile_from_samples(
            self.terminal_stock(),
            "stock",
            self.s0,
            moneyness,
            self.rate,
            self.dividend,
            self.grid.horizon,
            estimator,
        )
    }

    /// A cloud view of simulated paths: stock `stock` against the ensemble's
    /// index, with `beta` the stock's loading on the index volatility.
    pub fn from_ensemble(
        ensemble: &PathEnsemble,
        stock: usize,
        index_vol: Arc<VolSurface>,
        beta: f64,
    ) -> Result<Self> {
        let (_, s0, dividend) = ensemble.series(Underlying::Stock(stock))?;
        let (_, i0, _) = ensemble.series(Underlying::Index)?;
        let steps = ensemble.grid.steps;
        let mut stock_levels = Vec::with_capacity((steps + 1) * ensemble.paths);
        let mut index_levels = Vec::with_capacity((steps + 1) * ensemble.paths);
        for k in 0..=steps {
            stock_levels.extend(ensemble.at_step(Underlying::Stock(stock), k)?);
            index_levels.extend(ensemble.at_step(Underlying::Index, k)?);
        }
        Ok(Self {
            grid: ensemble.grid,
            particles: ensemble.paths,
            s0,
            i0,
            beta,
            rate: ensemble.rate,
            dividend,
            local_vol: None,
            index_vol,
            stock: stock_levels,
            index: index_levels,
            idio_variance: Vec::new(),
            reports: Vec::new(),
            floor_hits: ensemble.clamp_count,
        })
    }
}

/// Inputs of the single-stock particle system.
#[derive(Debug, Clone)]
pub struct ParticleSystem {
    pub limit: LimitSpec,
    /// Target local volatility `sqrt(v_loc)` of the stock.
    pub local_vol: Arc<VolSurface>,
    pub beta: f64,
    pub rate: f64,
    /// Stock dividend yield.
    pub dividend: f64,
    pub s0: f64,
    pub horizon: f64,
}

/// Largest admissible beta: `min(beta_hist, inf sqrt(v_loc(t, s0 x)) / sigma(t, i0 x))`,
/// scanned over the union of both surfaces' nodes expressed in moneyness.
pub fn select_beta(local_vol: &VolSurface, index_vol: &VolSurface, s0: f64, i0: f64, beta_hist: f64) -> Result<f64> {
    if !(s0 > 0.0 && i0 > 0.0) {
        return Err(Error::validation("s0", "initial levels must be positive"));
    }
    let mut times: Vec<f64> = local_vol.times().iter().chain(index_vol.times()).copied().collect();
    times.sort_by(f64::total_cmp);
    times.dedup();
    let mut xs: Vec<f64> = local_vol
        .levels()
        .iter()
        .map(|&z| local_vol.axis().level(z) / s0)
        .chain(index_vol.levels().iter().map(|&z| index_vol.axis().level(z) / i0))
        .collect();
    xs.sort_by(f64::total_cmp);
    xs.dedup();
    let mut best = beta_hist;
    for &t in &times {
        for &x in &xs {
            let sigma = index_vol.eval(t, i0 * x);
            if !(sigma > 0.0) {
                return Err(Error::validation(
                    "index_vol",
                    format!("index volatility vanishes at t = {t}, moneyness {x}"),
                ));
            }
            best = best.min(local_vol.eval(t, s0 * x) / sigma);
        }
    }
    Ok(best)
}

/// Euler scheme of the interacting system. At step `k` every particle gets
/// `c_i`, the cloud estimate of `E[sigma^2(t_k, I) | S = S_i]`, then
///
/// `S_i <- S_i (1 + (r - delta) dt + beta sigma(t_k, I_i) sqrt(dt) G + sqrt(v_i) sqrt(dt) G~)`
/// `I_i <- I_i (1 + (r - delta_I) dt + sigma(t_k, I_i) sqrt(dt) G)`
///
/// with `v_i = max(v_loc(t_k, S_i) - beta^2 c_i, 0)`. `G` is particle `i`'s
/// index draw and `G~` its own particle draw.
pub fn simulate_particle_system(
    system: &ParticleSystem,
    particles: usize,
    steps: usize,
    estimation: &Estimation,
    noise: &NoisePlan,
) -> Result<ParticleCloud> {
    if particles < 2 {
        return Err(Error::validation("particles", "at least two particles are required"));
    }
    if !(system.s0 > 0.0) {
        return Err(Error::validation("s0", "must be positive"));
    }
    if !system.beta.is_finite() {
        return Err(Error::validation("beta", "must be finite"));
    }
    estimation.validate()?;
    let grid = TimeGrid::new(system.horizon, steps)?;
    let n = particles;
    let dt = grid.dt();
    let sqdt = dt.sqrt();
    let b2 = system.beta * system.beta;
    let limit = &system.limit;

    let mut stock = Vec::with_capacity((steps + 1) * n);
    let mut index = Vec::with_capacity((steps + 1) * n);
    let mut idio = Vec::with_capacity(steps * n);
    let mut reports = Vec::with_capacity(steps);
    let mut floor_hits = 0;
    stock.resize(n, system.s0);
    index.resize(n, limit.i0);

    for k in 0..steps {
        let t = grid.time(k);
        let s = &stock[k * n..(k + 1) * n];
        let ix = &index[k * n..(k + 1) * n];
        let sigma: Vec<f64> = ix.iter().map(|&i| limit.index_vol.eval(t, i)).collect();
        let ys: Vec<f64> = sigma.iter().map(|v| v * v).collect();
        let (c, interactions) = estimation.at_samples(s, &ys)?;

        let mut report = StepReport {
            step: k,
            time: t,
            clamp_count: 0,
            clamp_mass: 0.0,
            min_eta: f64::INFINITY,
            max_eta: 0.0,
            interactions,
        };
        let v: Vec<f64> = s
            .iter()
            .zip(&c)
            .map(|(&x, &ci)| {
                let lv = system.local_vol.eval(t, x);
                lv * lv - b2 * ci
            })
            .collect();
        for vi in &v {
            if *vi < 0.0 {
                report.clamp_count += 1;
                report.clamp_mass -= vi;
            }
        }
        let v: Vec<f64> = v.into_iter().map(|x| x.max(0.0)).collect();
        for vi in &v {
            let eta = vi.sqrt();
            report.min_eta = report.min_eta.min(eta);
            report.max_eta = report.max_eta.max(eta);
        }

        let next: Vec<(f64, f64, u64)> = (0..n)
            .into_par_iter()
            .map(|i| {
                let mut rng = noise.path(i);
                let g = rng.normal(k, Channel::Index);
                let gt = rng.normal(k, Channel::Particle);
                let mut hits = 0;
                let inc_s = (system.rate - system.dividend) * dt
                    + (system.beta * sigma[i] * g + v[i].sqrt() * gt) * sqdt;
                let inc_i = (system.rate - limit.delta_index) * dt + sigma[i] * g * sqdt;
                let s_next = euler_step(s[i], inc_s, POSITIVITY_FLOOR * system.s0, &mut hits);
                let i_next = euler_step(ix[i], inc_i, POSITIVITY_FLOOR * limit.i0, &mut hits);
                (s_next, i_next, hits)
            })
            .collect();
        if next.iter().any(|(a, b, _)| !a.is_finite() || !b.is_finite()) {
            return Err(Error::Numerical(format!("non-finite particle level at step {k}")));
        }
        for (a, b, h) in next {
            stock.push(a);
            index.push(b);
            floor_hits += h;
        }
        idio.extend(v);
        reports.push(report);
    }

    Ok(ParticleCloud {
        grid,
        particles: n,
        s0: system.s0,
        i0: limit.i0,
        beta: system.beta,
        rate: system.rate,
        dividend: system.dividend,
        local_vol: Some(system.local_vol.clone()),
        index_vol: limit.index_vol.clone(),
        stock,
        index,
        idio_variance: idio,
        reports,
        floor_hits,
    })
}

/// Refuses particle runs whose naive interaction count exceeds `budget`.
#[derive(Debug, Clone, Copy, PartialEq, serde::Deserialize, serde::Serialize)]
pub struct CostGuard {
    pub budget: f64,
    #[serde(default)]
    pub allow_over_budget: bool,
}

impl Default for CostGuard {
    fn default() -> Self {
        Self {
            budget: 5e10,
            allow_over_budget: false,
        }
    }
}

impl CostGuard {
    /// `M n N^2`: kernel evaluations of a naive run.
    pub fn estimate(stocks: usize, steps: usize, particles: usize) -> f64 {
        stocks as f64 * steps as f64 * (particles as f64).powi(2)
    }

    pub fn check(&self, stocks: usize, steps: usize, particles: usize) -> Result<()> {
        let estimated = Self::estimate(stocks, steps, particles);
        if estimated > self.budget && !self.allow_over_budget {
            return Err(Error::Budget {
                estimated,
                budget: self.budget,
            });
        }
        Ok(())
    }
}

/// Interacting run of the original model: every particle carries all `M`
/// stocks, the index is their weighted sum, and stock `j` is calibrated to
/// `local_vols[j]` through `E[sigma^2(t, I) | S^j]` estimated across the cloud.
#[derive(Debug, Clone)]
pub struct OriginalCloud {
    pub grid: TimeGrid,
    pub particles: usize,
    /// Ids of the stocks whose snapshots are kept.
    pub recorded: Vec<usize>,
    stocks: Vec<Vec<f64>>,
    index: Vec<f64>,
    pub initial_stocks: Vec<f64>,
    pub betas: Vec<f64>,
    pub dividends: Vec<f64>,
    pub rate: f64,
    pub index_vol: Arc<VolSurface>,
    pub local_vols: Vec<Arc<VolSurface>>,
    /// One report per step, aggregated over stocks.
    pub reports: Vec<StepReport>,
    pub floor_hits: u64,
}

impl OriginalCloud {
    pub fn index_at(&self, k: usize) -> &[f64] {
        &self.index[k * self.particles..(k + 1) * self.particles]
    }

    pub fn stock_at(&self, id: usize, k: usize) -> Result<&[f64]> {
        let slot = self
            .recorded
            .iter()
            .position(|&j| j == id)
            .ok_or_else(|| Error::validation("record", format!("stock {} was not recorded", id + 1)))?;
        Ok(&self.stocks[slot][k * self.particles..(k + 1) * self.particles])
    }

    /// Single-stock view, usable for surface extraction.
    pub fn stock_cloud(&self, id: usize) -> Result<ParticleCloud> {
        let mut stock = Vec::with_capacity((self.grid.steps + 1) * self.particles);
        for k in 0..=self.grid.steps {
            stock.extend_from_slice(self.stock_at(id, k)?);
        }
        Ok(ParticleCloud {
            grid: self.grid,
            particles: self.particles,
            s0: self.initial_stocks[id],
            i0: self.index[0],
            beta: self.betas[id],
            rate: self.rate,
            dividend: self.dividends[id],
            local_vol: Some(self.local_vols[id].clone()),
            index_vol: self.index_vol.clone(),
            stock,
            index: self.index.clone(),
            idio_variance: Vec::new(),
            reports: Vec::new(),
            floor_hits: self.floor_hits,
        })
    }

    pub fn total_interactions(&self) -> u64 {
        self.reports.iter().map(|r| r.interactions).sum()
    }
}

/// Simulates the original model with every idiosyncratic volatility
/// calibrated on the fly. `spec.idio_vols` is ignored.
#[allow(clippy::too_many_arguments)]
pub fn simulate_original_calibrated(
    spec: &ModelSpec,
    local_vols: &[Arc<VolSurface>],
    particles: usize,
    steps: usize,
    kernel: &KernelConfig,
    noise: &NoisePlan,
    guard: &CostGuard,
    record: &StockSelection,
) -> Result<OriginalCloud> {
    spec.validate()?;
    kernel.validate()?;
    let m = spec.len();
    if local_vols.len() != m {
        return Err(Error::validation(
            "local_vols",
            format!("expected {m} surfaces, got {}", local_vols.len()),
        ));
    }
    if particles < 2 {
        return Err(Error::validation("particles", "at least two particles are required"));
    }
    guard.check(m, steps, particles)?;
    let recorded = record.resolve(m)?;
    let grid = TimeGrid::new(spec.horizon, steps)?;
    let n = particles;
    let dt = grid.dt();
    let sqdt = dt.sqrt();

    // particle-major current state
    let mut state: Vec<Vec<f64>> = vec![spec.initial_stocks.clone(); n];
    let weighted = |s: &[f64]| spec.weights.iter().zip(s).map(|(w, x)| w * x).sum::<f64>();
    let mut index: Vec<f64> = state.iter().map(|s| weighted(s)).collect();
    let mut stocks: Vec<Vec<f64>> = recorded
        .iter()
        .map(|&j| {
            let mut v = Vec::with_capacity((steps + 1) * n);
            v.resize(n, spec.initial_stocks[j]);
            v
        })
        .collect();
    let mut index_out = Vec::with_capacity((steps + 1) * n);
    index_out.extend_from_slice(&index);
    let mut reports = Vec::with_capacity(steps);
    let mut floor_hits = 0;

    for k in 0..steps {
        let t = grid.time(k);
        let sigma: Vec<f64> = index.iter().map(|&i| spec.index_vol.eval(t, i)).collect();
        let ys: Vec<f64> = sigma.iter().map(|v| v * v).collect();
        let mut report = StepReport {
            step: k,
            time: t,
            clamp_count: 0,
            clamp_mass: 0.0,
            min_eta: f64::INFINITY,
            max_eta: 0.0,
            interactions: 0,
        };
        // idiosyncratic vol of every (particle, stock), particle-major
        let mut eta = vec![0.0; n * m];
        for j in 0..m {
            let xs: Vec<f64> = state.iter().map(|s| s[j]).collect();
            let est = estimate_at_samples(&xs, &ys, kernel)?;
            report.interactions += est.interactions;
            let b2 = spec.betas[j] * spec.betas[j];
            for (i, (&x, &c)) in xs.iter().zip(&est.values).enumerate() {
                let lv = local_vols[j].eval(t, x);
                let v = lv * lv - b2 * c;
                if v < 0.0 {
                    report.clamp_count += 1;
                    report.clamp_mass -= v;
                }
                let e = v.max(0.0).sqrt();
                report.min_eta = report.min_eta.min(e);
                report.max_eta = report.max_eta.max(e);
                eta[i * m + j] = e;
            }
        }
        let hits: u64 = state
            .par_iter_mut()
            .enumerate()
            .map(|(i, s)| {
                let mut rng = noise.path(i);
                let mut z = vec![0.0; m + 1];
                rng.fill_step(k, &mut z);
                let mut hits = 0;
                for j in 0..m {
                    let inc = (spec.rate - spec.dividends[j]) * dt
                        + (spec.betas[j] * sigma[i] * z[0] + eta[i * m + j] * z[1 + j]) * sqdt;
                    s[j] = euler_step(s[j], inc, POSITIVITY_FLOOR * spec.initial_stocks[j], &mut hits);
                }
                hits
            })
            .sum();
        floor_hits += hits;
        if state.iter().flatten().any(|x| !x.is_finite()) {
            return Err(Error::Numerical(format!("non-finite particle level at step {k}")));
        }
        index = state.iter().map(|s| weighted(s)).collect();
        index_out.extend_from_slice(&index);
        for (slot, &j) in recorded.iter().enumerate() {
            stocks[slot].extend(state.iter().map(|s| s[j]));
        }
        reports.push(report);
    }

    Ok(OriginalCloud {
        grid,
        particles: n,
        recorded,
        stocks,
        index: index_out,
        initial_stocks: spec.initial_stocks.clone(),
        betas: spec.betas.clone(),
        dividends: spec.dividends.clone(),
        rate: spec.rate,
        index_vol: spec.index_vol.clone(),
        local_vols: local_vols.to_vec(),
        reports,
        floor_hits,
    })
}
