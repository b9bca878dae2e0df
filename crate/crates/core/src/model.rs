//! Parameterization of the coupled index/stock model and the closed-form
//! quantities attached to it: stochastic cross-correlations, proximity
//! metrics between the model and its large-basket limit, and the weighted
//! median used to pick the limit's constant parameters.

use std::sync::Arc;

use crate::error::{Error, Result};
use crate::surface::VolSurface;

/// The `M`-stock model: each stock is driven by the index volatility
/// `beta_j * sigma(t, I)` and its own idiosyncratic volatility `eta_j(t, S_j)`,
/// and the index is the weighted sum of the stocks.
#[derive(Debug, Clone)]
pub struct ModelSpec {
    pub weights: Vec<f64>,
    pub betas: Vec<f64>,
    pub dividends: Vec<f64>,
    pub rate: f64,
    pub initial_stocks: Vec<f64>,
    pub index_vol: Arc<VolSurface>,
    pub idio_vols: Vec<Arc<VolSurface>>,
    pub horizon: f64,
}

impl ModelSpec {
    #[allow(clippy::too_many_arguments)]
    pub fn new(
        weights: Vec<f64>,
        betas: Vec<f64>,
        dividends: Vec<f64>,
        rate: f64,
        initial_stocks: Vec<f64>,
        index_vol: Arc<VolSurface>,
        idio_vols: Vec<Arc<VolSurface>>,
        horizon: f64,
    ) -> Result<Self> {
        let spec = Self {
            weights,
            betas,
            dividends,
            rate,
            initial_stocks,
            index_vol,
            idio_vols,
            horizon,
        };
        spec.validate()?;
        Ok(spec)
    }

    /// `m` identical stocks with equal weights `1/m`.
    pub fn homogeneous(
        m: usize,
        s0: f64,
        beta: f64,
        dividend: f64,
        rate: f64,
        index_vol: Arc<VolSurface>,
        idio_vol: Arc<VolSurface>,
        horizon: f64,
    ) -> Result<Self> {
        Self::new(
            vec![1.0 / m as f64; m],
            vec![beta; m],
            vec![dividend; m],
            rate,
            vec![s0; m],
            index_vol,
            vec![idio_vol; m],
            horizon,
        )
    }

    pub fn validate(&self) -> Result<()> {
        let m = self.weights.len();
        if m == 0 {
            return Err(Error::validation("weights", "at least one stock is required"));
        }
        for (name, len) in [
            ("betas", self.betas.len()),
            ("dividends", self.dividends.len()),
            ("initial_stocks", self.initial_stocks.len()),
            ("idio_vols", self.idio_vols.len()),
        ] {
            if len != m {
                return Err(Error::validation(name, format!("expected {m} entries, got {len}")));
            }
        }
        if self.weights.iter().any(|w| !(*w > 0.0 && w.is_finite())) {
            return Err(Error::validation("weights", "weights must be positive"));
        }
        if self.initial_stocks.iter().any(|s| !(*s > 0.0 && s.is_finite())) {
            return Err(Error::validation("initial_stocks", "initial levels must be positive"));
        }
        if self.dividends.iter().any(|d| !(*d >= 0.0 && d.is_finite())) {
            return Err(Error::validation("dividends", "dividends must be non-negative"));
        }
        if self.betas.iter().any(|b| !b.is_finite()) {
            return Err(Error::validation("betas", "betas must be finite"));
        }
        if !self.rate.is_finite() {
            return Err(Error::validation("rate", "must be finite"));
        }
        if !(self.horizon > 0.0 && self.horizon.is_finite()) {
            return Err(Error::validation("horizon", "must be positive"));
        }
        Ok(())
    }

    pub fn len(&self) -> usize {
        self.weights.len()
    }

    pub fn is_empty(&self) -> bool {
        self.weights.is_empty()
    }

    /// Initial index level `sum_j w_j s0_j`.
    pub fn initial_index(&self) -> f64 {
        self.weights
            .iter()
            .zip(&self.initial_stocks)
            .map(|(w, s)| w * s)
            .sum()
    }

    pub fn max_abs_beta(&self) -> f64 {
        self.betas.iter().fold(0.0, |m, b| m.max(b.abs()))
    }

    /// Smallest bound on `sigma + eta_j` implied by the surfaces' values.
    pub fn observed_vol_bound(&self) -> f64 {
        let eta = self.idio_vols.iter().map(|s| s.max_value()).fold(0.0, f64::max);
        self.index_vol.max_value() + eta
    }
}

/// Large-basket limit of the index: `dI/I = (r - delta) dt + beta sigma(t, I) dB`.
/// `delta_index` is the dividend yield used by the simplified model's index,
/// whose volatility is `sigma` itself.
#[derive(Debug, Clone)]
pub struct LimitSpec {
    pub beta: f64,
    pub delta: f64,
    pub delta_index: f64,
    pub i0: f64,
    pub index_vol: Arc<VolSurface>,
}

impl LimitSpec {
    pub fn new(beta: f64, delta: f64, delta_index: f64, i0: f64, index_vol: Arc<VolSurface>) -> Result<Self> {
        if !(i0 > 0.0 && i0.is_finite()) {
            return Err(Error::validation("i0", "initial index must be positive"));
        }
        if !beta.is_finite() || !delta.is_finite() || !delta_index.is_finite() {
            return Err(Error::validation("limit", "beta and dividends must be finite"));
        }
        Ok(Self {
            beta,
            delta,
            delta_index,
            i0,
            index_vol,
        })
    }

    /// beta = 1, delta = delta_index = weighted median of the dividends.
    pub fn from_model(spec: &ModelSpec) -> Result<Self> {
        let delta = optimal_constant(&spec.weights, &spec.dividends)?;
        Self::new(1.0, delta, delta, spec.initial_index(), spec.index_vol.clone())
    }

    /// Same as [`LimitSpec::from_model`] with beta set to the weighted median of the betas.
    pub fn optimal_from_model(spec: &ModelSpec) -> Result<Self> {
        let mut limit = Self::from_model(spec)?;
        limit.beta = optimal_constant(&spec.weights, &spec.betas)?;
        Ok(limit)
    }

    pub fn with_beta(mut self, beta: f64) -> Self {
        self.beta = beta;
        self
    }
}

/// Instantaneous correlation between stocks `i` and `j` given the index and
/// stock levels.
#[allow(clippy::too_many_arguments)]
pub fn cross_correlation(
    spec: &ModelSpec,
    i: usize,
    j: usize,
    t: f64,
    index_level: f64,
    s_i: f64,
    s_j: f64,
) -> Result<f64> {
    if i == j {
        return Err(Error::validation("j", "stocks must differ"));
    }
    if i >= spec.len() || j >= spec.len() {
        return Err(Error::validation("i", "stock index out of range"));
    }
    let sigma = spec.index_vol.eval(t, index_level);
    let eta_i = spec.idio_vols[i].eval(t, s_i);
    let eta_j = spec.idio_vols[j].eval(t, s_j);
    correlation_from_vols(spec.betas[i], spec.betas[j], sigma, eta_i, eta_j)
}

/// `beta_i beta_j sigma^2 / sqrt((beta_i^2 sigma^2 + eta_i^2)(beta_j^2 sigma^2 + eta_j^2))`.
pub fn correlation_from_vols(beta_i: f64, beta_j: f64, sigma: f64, eta_i: f64, eta_j: f64) -> Result<f64> {
    let s2 = sigma * sigma;
    let var_i = beta_i * beta_i * s2 + eta_i * eta_i;
    let var_j = beta_j * beta_j * s2 + eta_j * eta_j;
    if var_i <= 0.0 || var_j <= 0.0 {
        return Err(Error::UndefinedCorrelation(format!(
            "a stock has zero total volatility (variances {var_i}, {var_j})"
        )));
    }
    Ok((beta_i * beta_j * s2 / (var_i.sqrt() * var_j.sqrt())).clamp(-1.0, 1.0))
}

/// Weighted median: the smallest data value minimizing `sum_j w_j |v_j - m|`.
pub fn optimal_constant(weights: &[f64], values: &[f64]) -> Result<f64> {
    if values.is_empty() {
        return Err(Error::validation("values", "empty input"));
    }
    if weights.len() != values.len() {
        return Err(Error::validation("weights", "length differs from values"));
    }
    if weights.iter().any(|w| !(*w > 0.0 && w.is_finite())) {
        return Err(Error::validation("weights", "weights must be positive"));
    }
    let mut order: Vec<usize> = (0..values.len()).collect();
    order.sort_by(|&a, &b| values[a].total_cmp(&values[b]));
    let total: f64 = weights.iter().sum();
    let mut cumulative = 0.0;
    for &k in &order {
        cumulative += weights[k];
        if 2.0 * cumulative >= total {
            return Ok(values[k]);
        }
    }
    Ok(values[*order.last().unwrap()])
}

#[derive(Debug, Clone, Copy, PartialEq)]
pub struct ProximityMetrics {
    /// `sqrt(sum w_j^2)`
    pub p_w: f64,
    /// `sum w_j |beta_j - beta|`
    pub p_beta: f64,
    /// `sum w_j |delta_j - delta|`
    pub p_delta: f64,
}

impl ProximityMetrics {
    pub fn from_parts(weights: &[f64], betas: &[f64], dividends: &[f64], beta: f64, delta: f64) -> Self {
        let p_w = weights.iter().map(|w| w * w).sum::<f64>().sqrt();
        let p_beta = weights.iter().zip(betas).map(|(w, b)| w * (b - beta).abs()).sum();
        let p_delta = weights.iter().zip(dividends).map(|(w, d)| w * (d - delta).abs()).sum();
        Self { p_w, p_beta, p_delta }
    }

    /// `(P_w^2)^p + P_beta^(2p) + P_delta^(2p)`
    pub fn combined(&self, p: u32) -> f64 {
        let q = 2 * p as i32;
        self.p_w.powi(q) + self.p_beta.powi(q) + self.p_delta.powi(q)
    }
}

pub fn proximity_metrics(spec: &ModelSpec, beta: f64, delta: f64) -> Result<ProximityMetrics> {
    spec.validate()?;
    Ok(ProximityMetrics::from_parts(
        &spec.weights,
        &spec.betas,
        &spec.dividends,
        beta,
        delta,
    ))
}
