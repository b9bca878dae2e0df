use std::sync::Arc;

use rayon::prelude::*;

use crate::error::{Error, Result};
use crate::model::{LimitSpec, ModelSpec};
use crate::surface::VolSurface;

use super::ensemble::{Companion, IndexPaths, PathEnsemble, StockPaths};
use super::noise::NoisePlan;
use super::{euler_step, SimulationRequest, TimeGrid, POSITIVITY_FLOOR};

/// One stock of the simplified model.
#[derive(Debug, Clone)]
pub struct StockSpec {
    pub s0: f64,
    pub beta: f64,
    pub dividend: f64,
    pub eta: Arc<VolSurface>,
}

/// Stocks driven by the autonomous index `dI/I = (r - delta_I) dt + sigma(t, I) dB`.
#[derive(Debug, Clone)]
pub struct SimplifiedModel {
    pub limit: LimitSpec,
    pub stocks: Vec<StockSpec>,
    /// When present, the reconstructed index `sum_j w_j S^j` is also emitted.
    pub weights: Option<Vec<f64>>,
    pub rate: f64,
    pub horizon: f64,
}

/// Local-volatility stocks with constant pairwise correlation `rho`.
#[derive(Debug, Clone)]
pub struct MarketModel {
    pub local_vols: Vec<Arc<VolSurface>>,
    pub s0: Vec<f64>,
    pub dividends: Vec<f64>,
    /// When present, the index `sum_j w_j S^j` is also emitted.
    pub weights: Option<Vec<f64>>,
    pub rho: f64,
    pub rate: f64,
    pub horizon: f64,
}

#[derive(Default)]
struct PathOut {
    index: Vec<f64>,
    reconstructed: Vec<f64>,
    stocks: Vec<Vec<f64>>,
    companion_index: Vec<f64>,
    companion_stocks: Vec<Vec<f64>>,
    clamps: u64,
}

fn non_finite(path: usize, step: usize, what: &str) -> Error {
    Error::Numerical(format!("non-finite {what} at path {path}, step {step}"))
}

fn gather(outs: &[PathOut], pick: impl Fn(&PathOut) -> &Vec<f64>) -> Vec<f64> {
    let mut v = Vec::with_capacity(outs.len() * pick(&outs[0]).len());
    for o in outs {
        v.extend_from_slice(pick(o));
    }
    v
}

fn weighted_dividend(weights: &[f64], s0: &[f64], dividends: &[f64]) -> f64 {
    let i0: f64 = weights.iter().zip(s0).map(|(w, s)| w * s).sum();
    weights
        .iter()
        .zip(s0)
        .zip(dividends)
        .map(|((w, s), d)| w * s * d)
        .sum::<f64>()
        / i0
}

/// Original coupled model: each stock uses `sigma(t, I^M)` with `I^M = sum_j w_j S^j`
/// recomputed after every step. With `request.companion`, the limit index
/// `dI = (r - delta) I dt + beta I sigma(t, I) dB` and the limit stocks are
/// evolved on the same draws.
pub fn simulate_original(
    spec: &ModelSpec,
    limit: &LimitSpec,
    request: &SimulationRequest,
    noise: &NoisePlan,
) -> Result<PathEnsemble> {
    spec.validate()?;
    request.validate()?;
    let grid = TimeGrid::new(spec.horizon, request.steps)?;
    let m = spec.len();
    let recorded = request.record.resolve(m)?;
    let dt = grid.dt();
    let sqdt = dt.sqrt();
    let r = spec.rate;
    let width = grid.steps + 1;

    let run = |p: usize| -> Result<PathOut> {
        let mut rng = noise.path(p);
        let mut z = vec![0.0; m + 1];
        let mut s = spec.initial_stocks.clone();
        let mut index = spec.initial_index();
        let mut out = PathOut {
            index: Vec::with_capacity(width),
            stocks: vec![Vec::with_capacity(width); recorded.len()],
            ..Default::default()
        };
        let mut lim_index = limit.i0;
        let mut lim_stocks: Vec<f64> = recorded.iter().map(|&j| spec.initial_stocks[j]).collect();
        if request.companion {
            out.companion_stocks = vec![Vec::with_capacity(width); recorded.len()];
        }
        let record = |out: &mut PathOut, s: &[f64], index: f64, lim_index: f64, lim: &[f64]| {
            out.index.push(index);
            for (slot, &j) in recorded.iter().enumerate() {
                out.stocks[slot].push(s[j]);
            }
            if request.companion {
                out.companion_index.push(lim_index);
                for (slot, v) in lim.iter().enumerate() {
                    out.companion_stocks[slot].push(*v);
                }
            }
        };
        record(&mut out, &s, index, lim_index, &lim_stocks);

        for k in 0..grid.steps {
            let t = grid.time(k);
            rng.fill_step(k, &mut z);
            let g = z[0];
            let sigma = spec.index_vol.eval(t, index);
            for j in 0..m {
                let eta = spec.idio_vols[j].eval(t, s[j]);
                let inc = (r - spec.dividends[j]) * dt + (spec.betas[j] * sigma * g + eta * z[1 + j]) * sqdt;
                if !inc.is_finite() {
                    return Err(non_finite(p, k, "stock increment"));
                }
                s[j] = euler_step(s[j], inc, POSITIVITY_FLOOR * spec.initial_stocks[j], &mut out.clamps);
            }
            if request.companion {
                let lim_sigma = limit.index_vol.eval(t, lim_index);
                for (slot, &j) in recorded.iter().enumerate() {
                    let x = lim_stocks[slot];
                    let eta = spec.idio_vols[j].eval(t, x);
                    let inc = (r - spec.dividends[j]) * dt
                        + (spec.betas[j] * lim_sigma * g + eta * z[1 + j]) * sqdt;
                    lim_stocks[slot] =
                        euler_step(x, inc, POSITIVITY_FLOOR * spec.initial_stocks[j], &mut out.clamps);
                }
                let inc = (r - limit.delta) * dt + limit.beta * lim_sigma * g * sqdt;
                lim_index = euler_step(lim_index, inc, POSITIVITY_FLOOR * limit.i0, &mut out.clamps);
            }
            index = spec.weights.iter().zip(&s).map(|(w, x)| w * x).sum();
            record(&mut out, &s, index, lim_index, &lim_stocks);
        }
        Ok(out)
    };

    let outs: Vec<PathOut> = (0..request.paths).into_par_iter().map(run).collect::<Result<_>>()?;
    let clamp_count = outs.iter().map(|o| o.clamps).sum();
    let stock_paths = |pick_companion: bool| -> Vec<StockPaths> {
        recorded
            .iter()
            .enumerate()
            .map(|(slot, &j)| StockPaths {
                id: j,
                initial: spec.initial_stocks[j],
                dividend: spec.dividends[j],
                levels: gather(&outs, |o| {
                    if pick_companion {
                        &o.companion_stocks[slot]
                    } else {
                        &o.stocks[slot]
                    }
                }),
            })
            .collect()
    };
    let companion = request.companion.then(|| Companion {
        index: IndexPaths {
            initial: limit.i0,
            dividend: limit.delta,
            levels: gather(&outs, |o| &o.companion_index),
        },
        stocks: stock_paths(true),
    });
    Ok(PathEnsemble {
        family: "original",
        grid,
        paths: request.paths,
        rate: spec.rate,
        seed: noise.seed(),
        index: Some(IndexPaths {
            initial: spec.initial_index(),
            dividend: weighted_dividend(&spec.weights, &spec.initial_stocks, &spec.dividends),
            levels: gather(&outs, |o| &o.index),
        }),
        reconstructed_index: None,
        stocks: stock_paths(false),
        companion,
        clamp_count,
    })
}

impl SimplifiedModel {
    pub fn validate(&self) -> Result<()> {
        if self.stocks.is_empty() {
            return Err(Error::validation("stocks", "at least one stock is required"));
        }
        if let Some(w) = &self.weights {
            if w.len() != self.stocks.len() || w.iter().any(|x| !(*x > 0.0)) {
                return Err(Error::validation("weights", "one positive weight per stock is required"));
            }
        }
        if self.stocks.iter().any(|s| !(s.s0 > 0.0) || !(s.dividend >= 0.0)) {
            return Err(Error::validation("stocks", "s0 must be positive and dividends non-negative"));
        }
        Ok(())
    }
}

/// Simplified model: the index is autonomous and each stock sees `sigma(t, I)`.
pub fn simulate_simplified(
    model: &SimplifiedModel,
    request: &SimulationRequest,
    noise: &NoisePlan,
) -> Result<PathEnsemble> {
    model.validate()?;
    request.validate()?;
    let grid = TimeGrid::new(model.horizon, request.steps)?;
    let m = model.stocks.len();
    let recorded = request.record.resolve(m)?;
    let dt = grid.dt();
    let sqdt = dt.sqrt();
    let r = model.rate;
    let limit = &model.limit;
    let width = grid.steps + 1;

    let run = |p: usize| -> Result<PathOut> {
        let mut rng = noise.path(p);
        let mut z = vec![0.0; m + 1];
        let mut s: Vec<f64> = model.stocks.iter().map(|x| x.s0).collect();
        let mut index = limit.i0;
        let mut out = PathOut {
            index: Vec::with_capacity(width),
            stocks: vec![Vec::with_capacity(width); recorded.len()],
            ..Default::default()
        };
        let record = |out: &mut PathOut, s: &[f64], index: f64| {
            out.index.push(index);
            for (slot, &j) in recorded.iter().enumerate() {
                out.stocks[slot].push(s[j]);
            }
            if let Some(w) = &model.weights {
                out.reconstructed.push(w.iter().zip(s).map(|(w, x)| w * x).sum());
            }
        };
        record(&mut out, &s, index);
        for k in 0..grid.steps {
            let t = grid.time(k);
            rng.fill_step(k, &mut z);
            let g = z[0];
            let sigma = limit.index_vol.eval(t, index);
            for (j, stock) in model.stocks.iter().enumerate() {
                let eta = stock.eta.eval(t, s[j]);
                let inc = (r - stock.dividend) * dt + (stock.beta * sigma * g + eta * z[1 + j]) * sqdt;
                if !inc.is_finite() {
                    return Err(non_finite(p, k, "stock increment"));
                }
                s[j] = euler_step(s[j], inc, POSITIVITY_FLOOR * stock.s0, &mut out.clamps);
            }
            let inc = (r - limit.delta_index) * dt + sigma * g * sqdt;
            if !inc.is_finite() {
                return Err(non_finite(p, k, "index increment"));
            }
            index = euler_step(index, inc, POSITIVITY_FLOOR * limit.i0, &mut out.clamps);
            record(&mut out, &s, index);
        }
        Ok(out)
    };

    let outs: Vec<PathOut> = (0..request.paths).into_par_iter().map(run).collect::<Result<_>>()?;
    let clamp_count = outs.iter().map(|o| o.clamps).sum();
    let stocks = recorded
        .iter()
        .enumerate()
        .map(|(slot, &j)| StockPaths {
            id: j,
            initial: model.stocks[j].s0,
            dividend: model.stocks[j].dividend,
            levels: gather(&outs, |o| &o.stocks[slot]),
        })
        .collect();
    let reconstructed_index = model.weights.as_ref().map(|w| {
        let s0: Vec<f64> = model.stocks.iter().map(|x| x.s0).collect();
        let div: Vec<f64> = model.stocks.iter().map(|x| x.dividend).collect();
        IndexPaths {
            initial: w.iter().zip(&s0).map(|(w, s)| w * s).sum(),
            dividend: weighted_dividend(w, &s0, &div),
            levels: gather(&outs, |o| &o.reconstructed),
        }
    });
    Ok(PathEnsemble {
        family: "simplified",
        grid,
        paths: request.paths,
        rate: r,
        seed: noise.seed(),
        index: Some(IndexPaths {
            initial: limit.i0,
            dividend: limit.delta_index,
            levels: gather(&outs, |o| &o.index),
        }),
        reconstructed_index,
        stocks,
        companion: None,
        clamp_count,
    })
}

impl MarketModel {
    pub fn validate(&self) -> Result<()> {
        let m = self.local_vols.len();
        if m == 0 {
            return Err(Error::validation("local_vols", "at least one stock is required"));
        }
        if self.s0.len() != m || self.dividends.len() != m {
            return Err(Error::validation("s0", "one initial level and dividend per stock"));
        }
        if let Some(w) = &self.weights {
            if w.len() != m || w.iter().any(|x| !(*x > 0.0)) {
                return Err(Error::validation("weights", "one positive weight per stock is required"));
            }
        }
        if !(0.0..1.0).contains(&self.rho) {
            return Err(Error::validation("rho", format!("{} is outside [0, 1)", self.rho)));
        }
        if self.s0.iter().any(|s| !(*s > 0.0)) {
            return Err(Error::validation("s0", "initial levels must be positive"));
        }
        Ok(())
    }
}

/// Market model: `dS^j/S^j = (r - delta_j) dt + sqrt(v_loc^j) dW~^j` with
/// `W~^j = sqrt(rho) Z_0 + sqrt(1 - rho) Z_j`. `Z_0` is drawn on the index
/// channel and `Z_j` on the stock channels, so a shared seed couples this
/// model with the simplified one.
pub fn simulate_market_model(
    model: &MarketModel,
    request: &SimulationRequest,
    noise: &NoisePlan,
) -> Result<PathEnsemble> {
    model.validate()?;
    request.validate()?;
    let grid = TimeGrid::new(model.horizon, request.steps)?;
    let m = model.local_vols.len();
    let recorded = request.record.resolve(m)?;
    let dt = grid.dt();
    let sqdt = dt.sqrt();
    let common = model.rho.sqrt();
    let own = (1.0 - model.rho).sqrt();
    let width = grid.steps + 1;

    let run = |p: usize| -> Result<PathOut> {
        let mut rng = noise.path(p);
        let mut z = vec![0.0; m + 1];
        let mut s = model.s0.clone();
        let mut out = PathOut {
            stocks: vec![Vec::with_capacity(width); recorded.len()],
            ..Default::default()
        };
        let record = |out: &mut PathOut, s: &[f64]| {
            for (slot, &j) in recorded.iter().enumerate() {
                out.stocks[slot].push(s[j]);
            }
            if let Some(w) = &model.weights {
                out.index.push(w.iter().zip(s).map(|(w, x)| w * x).sum());
            }
        };
        record(&mut out, &s);
        for k in 0..grid.steps {
            let t = grid.time(k);
            rng.fill_step(k, &mut z);
            for j in 0..m {
                let vol = model.local_vols[j].eval(t, s[j]);
                let inc = (model.rate - model.dividends[j]) * dt + vol * (common * z[0] + own * z[1 + j]) * sqdt;
                if !inc.is_finite() {
                    return Err(non_finite(p, k, "stock increment"));
                }
                s[j] = euler_step(s[j], inc, POSITIVITY_FLOOR * model.s0[j], &mut out.clamps);
            }
            record(&mut out, &s);
        }
        Ok(out)
    };

    let outs: Vec<PathOut> = (0..request.paths).into_par_iter().map(run).collect::<Result<_>>()?;
    let clamp_count = outs.iter().map(|o| o.clamps).sum();
    let stocks = recorded
        .iter()
        .enumerate()
        .map(|(slot, &j)| StockPaths {
            id: j,
            initial: model.s0[j],
            dividend: model.dividends[j],
            levels: gather(&outs, |o| &o.stocks[slot]),
        })
        .collect();
    let index = model.weights.as_ref().map(|w| IndexPaths {
        initial: w.iter().zip(&model.s0).map(|(w, s)| w * s).sum(),
        dividend: weighted_dividend(w, &model.s0, &model.dividends),
        levels: gather(&outs, |o| &o.index),
    });
    Ok(PathEnsemble {
        family: "market",
        grid,
        paths: request.paths,
        rate: model.rate,
        seed: noise.seed(),
        index,
        reconstructed_index: None,
        stocks,
        companion: None,
        clamp_count,
    })
}
