//! Side-by-side runs of the simplified, original and market models on one
//! basket, all calibrated to the same single-stock smiles.
//!
//! The simplified model is the reference. Its stock local volatilities are
//! reconstructed from a simulated cloud, the market model is driven by those
//! surfaces with the correlation that matches the ATM index volatility, and
//! the original model is recalibrated to the same surfaces by a particle run
//! before being simulated with independent paths.

use std::sync::Arc;

use crate::calibration::{
    default_extraction_bandwidth, extract_eta_surface, reconstruct_market_vloc, simulate_original_calibrated,
    CostGuard, CoverageReport, KernelConfig, ParticleCloud,
};
use crate::error::{Error, Result};
use crate::model::{LimitSpec, ModelSpec};
use crate::pricing::{smile, Estimator, SmileCurve};
use crate::sde::{
    simulate_market_model, simulate_original, simulate_simplified, MarketModel, NoisePlan, PathEnsemble,
    SimplifiedModel, SimulationRequest, StockSelection, StockSpec, Underlying,
};
use crate::surface::VolSurface;

/// Implied volatility of an at-the-money call.
pub fn atm_vol(ensemble: &PathEnsemble, underlying: Underlying, estimator: Estimator) -> Result<f64> {
    smile(ensemble, underlying, &[1.0], estimator)?.points[0]
        .implied_vol
        .ok_or_else(|| Error::Numerical(format!("ATM {underlying} price outside the inversion band")))
}

/// Bisection on `rho` so that the market index has ATM implied volatility
/// `target`. Every trial reuses `noise`, which makes the ATM volatility a
/// continuous increasing function of `rho`.
pub fn match_index_correlation(
    model: &MarketModel,
    target: f64,
    steps: usize,
    paths: usize,
    noise: &NoisePlan,
    tolerance: f64,
) -> Result<f64> {
    let request = SimulationRequest::new(steps, paths).record(StockSelection::None);
    let vol_at = |rho: f64| -> Result<f64> {
        let m = MarketModel {
            rho,
            ..model.clone()
        };
        atm_vol(&simulate_market_model(&m, &request, noise)?, Underlying::Index, Estimator::Controlled)
    };
    let (mut lo, mut hi) = (0.0, 1.0 - 1e-9);
    let (v_lo, v_hi) = (vol_at(lo)?, vol_at(hi)?);
    if !(v_lo <= target && target <= v_hi) {
        return Err(Error::Numerical(format!(
            "ATM index vol {target} is outside the attainable range [{v_lo}, {v_hi}]"
        )));
    }
    for _ in 0..60 {
        let mid = 0.5 * (lo + hi);
        let v = vol_at(mid)?;
        if (v - target).abs() <= tolerance {
            return Ok(mid);
        }
        if v < target {
            lo = mid;
        } else {
            hi = mid;
        }
    }
    Ok(0.5 * (lo + hi))
}

/// `vol(lo) - vol(hi)` and its standard error, treating the two points as independent.
pub fn smile_slope(curve: &SmileCurve, lo: f64, hi: f64) -> Result<(f64, f64)> {
    let point = |m: f64| {
        curve
            .point_at(m)
            .and_then(|p| Some((p.implied_vol?, p.vol_stderr?)))
            .ok_or_else(|| Error::Numerical(format!("no implied volatility at moneyness {m}")))
    };
    let (a, sa) = point(lo)?;
    let (b, sb) = point(hi)?;
    Ok((a - b, sa.hypot(sb)))
}

#[derive(Debug, Clone)]
pub struct ComparisonConfig {
    /// Basket of the simplified model; `idio_vols` are its `eta` surfaces and
    /// `index_vol` is `sigma`.
    pub spec: ModelSpec,
    pub steps: usize,
    pub paths: usize,
    /// Particles of the original-model calibration run.
    pub calibration_particles: usize,
    pub kernel: KernelConfig,
    pub guard: CostGuard,
    /// Moneyness grid of the reconstructed and extracted surfaces.
    pub moneyness: Vec<f64>,
    /// Tolerance of the correlation match, in volatility points.
    pub rho_tolerance: f64,
}

#[derive(Debug, Clone)]
pub struct Comparison {
    pub simplified: PathEnsemble,
    pub market: PathEnsemble,
    pub original: PathEnsemble,
    pub rho: f64,
    pub market_local_vols: Vec<Arc<VolSurface>>,
    /// `eta` surfaces of the recalibrated original model.
    pub original_etas: Vec<Arc<VolSurface>>,
    pub coverage: Vec<CoverageReport>,
}

impl Comparison {
    pub fn stock_ids(&self) -> Vec<usize> {
        self.simplified.stocks.iter().map(|s| s.id).collect()
    }
}

/// Runs the three models on common random numbers. The original-model
/// calibration cloud uses `noise.derive(1)`.
pub fn run_comparison(config: &ComparisonConfig, noise: &NoisePlan) -> Result<Comparison> {
    let spec = &config.spec;
    spec.validate()?;
    let m = spec.len();
    let limit = LimitSpec::new(1.0, 0.0, 0.0, spec.initial_index(), spec.index_vol.clone())?;
    let request = SimulationRequest::new(config.steps, config.paths);

    let simplified_model = SimplifiedModel {
        limit: limit.clone(),
        stocks: (0..m)
            .map(|j| StockSpec {
                s0: spec.initial_stocks[j],
                beta: spec.betas[j],
                dividend: spec.dividends[j],
                eta: spec.idio_vols[j].clone(),
            })
            .collect(),
        weights: Some(spec.weights.clone()),
        rate: spec.rate,
        horizon: spec.horizon,
    };
    let simplified = simulate_simplified(&simplified_model, &request, noise)?;

    let bandwidth = default_extraction_bandwidth(config.paths);
    let market_local_vols = (0..m)
        .map(|j| {
            let cloud = ParticleCloud::from_ensemble(&simplified, j, spec.index_vol.clone(), spec.betas[j])?;
            let (v, _) = reconstruct_market_vloc(&spec.idio_vols[j], &cloud, None, &config.moneyness, bandwidth)?;
            Ok(Arc::new(v))
        })
        .collect::<Result<Vec<_>>>()?;

    let mut market_model = MarketModel {
        local_vols: market_local_vols.clone(),
        s0: spec.initial_stocks.clone(),
        dividends: spec.dividends.clone(),
        weights: Some(spec.weights.clone()),
        rho: 0.0,
        rate: spec.rate,
        horizon: spec.horizon,
    };
    // the market index is a basket, so it is matched to the basket of the simplified stocks
    let target = atm_vol(&simplified, Underlying::ReconstructedIndex, Estimator::Controlled)?;
    market_model.rho = match_index_correlation(
        &market_model,
        target,
        config.steps,
        config.paths,
        noise,
        config.rho_tolerance,
    )?;
    let market = simulate_market_model(&market_model, &request, noise)?;

    let cloud = simulate_original_calibrated(
        spec,
        &market_local_vols,
        config.calibration_particles,
        config.steps,
        &config.kernel,
        &noise.derive(1),
        &config.guard,
        &StockSelection::All,
    )?;
    let extraction_bandwidth = default_extraction_bandwidth(config.calibration_particles);
    let mut original_etas = Vec::with_capacity(m);
    let mut coverage = Vec::with_capacity(m);
    for j in 0..m {
        let (eta, report) = extract_eta_surface(&cloud.stock_cloud(j)?, None, &config.moneyness, extraction_bandwidth)?;
        original_etas.push(Arc::new(eta));
        coverage.push(report);
    }
    let original_spec = ModelSpec {
        idio_vols: original_etas.clone(),
        ..spec.clone()
    };
    let original = simulate_original(&original_spec, &limit, &request, noise)?;

    Ok(Comparison {
        simplified,
        market,
        original,
        rho: market_model.rho,
        market_local_vols,
        original_etas,
        coverage,
    })
}
