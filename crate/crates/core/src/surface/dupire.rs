use crate::error::{Error, Result};
use crate::pricing::lognormal_call;

use super::{LevelAxis, VolSurface};

/// Lower clamp applied to every Dupire local variance.
pub const VARIANCE_FLOOR: f64 = 1e-6;
const CONVEXITY_FLOOR: f64 = 1e-14;

/// Call prices on a maturity × strike grid.
#[derive(Debug, Clone, PartialEq)]
pub struct PriceSurface {
    times: Vec<f64>,
    strikes: Vec<f64>,
    prices: Vec<f64>,
    pub spot: f64,
    pub rate: f64,
    pub dividend: f64,
}

impl PriceSurface {
    pub fn new(
        times: Vec<f64>,
        strikes: Vec<f64>,
        prices: Vec<f64>,
        spot: f64,
        rate: f64,
        dividend: f64,
    ) -> Result<Self> {
        super::check_grid("time_grid", &times, true)?;
        super::check_grid("strike_grid", &strikes, true)?;
        if prices.len() != times.len() * strikes.len() {
            return Err(Error::validation("call_prices", "dimensions do not match the grids"));
        }
        if !(spot > 0.0) {
            return Err(Error::validation("spot", "must be positive"));
        }
        let tol = 1e-8 * spot;
        for (i, &t) in times.iter().enumerate() {
            let row = &prices[i * strikes.len()..(i + 1) * strikes.len()];
            for (k, (&c, &strike)) in row.iter().zip(&strikes).enumerate() {
                if !c.is_finite() || c < 0.0 {
                    return Err(Error::validation("call_prices", format!("negative price at ({t}, {strike})")));
                }
                let intrinsic = ((-dividend * t).exp() * spot - (-rate * t).exp() * strike).max(0.0);
                if c < intrinsic - tol {
                    return Err(Error::validation(
                        "call_prices",
                        format!("price {c} below intrinsic {intrinsic} at ({t}, {strike})"),
                    ));
                }
                if k > 0 && c > row[k - 1] + tol {
                    return Err(Error::validation(
                        "call_prices",
                        format!("prices increase in strike at ({t}, {strike})"),
                    ));
                }
            }
        }
        Ok(Self {
            times,
            strikes,
            prices,
            spot,
            rate,
            dividend,
        })
    }

    /// Prices generated by a constant-volatility lognormal model.
    pub fn lognormal(
        spot: f64,
        rate: f64,
        dividend: f64,
        vol: f64,
        times: Vec<f64>,
        strikes: Vec<f64>,
    ) -> Result<Self> {
        let mut prices = Vec::with_capacity(times.len() * strikes.len());
        for &t in &times {
            for &k in &strikes {
                prices.push(lognormal_call(spot, k, t, rate, dividend, vol));
            }
        }
        Self::new(times, strikes, prices, spot, rate, dividend)
    }

    pub fn times(&self) -> &[f64] {
        &self.times
    }

    pub fn strikes(&self) -> &[f64] {
        &self.strikes
    }

    pub fn prices(&self) -> &[f64] {
        &self.prices
    }

    #[inline]
    pub fn price(&self, time_index: usize, strike_index: usize) -> f64 {
        self.prices[time_index * self.strikes.len() + strike_index]
    }

    /// Overwrites a single node; used to build perturbed test surfaces.
    pub fn with_price(mut self, time_index: usize, strike_index: usize, value: f64) -> Self {
        let n = self.strikes.len();
        self.prices[time_index * n + strike_index] = value;
        self
    }

    /// Dupire local variance at grid node `(i, k)`, `k` interior.
    pub fn local_variance_at(&self, i: usize, k: usize, cap: f64) -> Result<f64> {
        let nt = self.times.len();
        let nk = self.strikes.len();
        if k == 0 || k + 1 >= nk || nt < 2 || i >= nt {
            return Err(Error::validation("strike", "node is not interior to the price grid"));
        }
        let t = self.times[i];
        let strike = self.strikes[k];
        let c = self.price(i, k);

        let dc_dt = if i == 0 {
            (self.price(1, k) - c) / (self.times[1] - t)
        } else if i + 1 == nt {
            (c - self.price(i - 1, k)) / (t - self.times[i - 1])
        } else {
            (self.price(i + 1, k) - self.price(i - 1, k)) / (self.times[i + 1] - self.times[i - 1])
        };

        let h1 = strike - self.strikes[k - 1];
        let h2 = self.strikes[k + 1] - strike;
        let (cm, cp) = (self.price(i, k - 1), self.price(i, k + 1));
        let dc_dk = (h1 * h1 * cp - h2 * h2 * cm + (h2 * h2 - h1 * h1) * c) / (h1 * h2 * (h1 + h2));
        let d2c_dk2 = 2.0 * (h1 * cp - (h1 + h2) * c + h2 * cm) / (h1 * h2 * (h1 + h2));

        if !(d2c_dk2 > CONVEXITY_FLOOR) {
            return Err(Error::ButterflyArbitrage {
                t,
                strike,
                value: d2c_dk2,
            });
        }
        let q = self.dividend;
        let numerator = dc_dt + (self.rate - q) * strike * dc_dk + q * c;
        let variance = 2.0 * numerator / (strike * strike * d2c_dk2);
        Ok(variance.clamp(VARIANCE_FLOOR, cap * cap))
    }
}

fn grid_index(grid: &[f64], x: f64, field: &str) -> Result<usize> {
    grid.iter()
        .position(|g| (g - x).abs() <= 1e-12 * g.abs().max(1.0))
        .ok_or_else(|| Error::validation(field, format!("{x} is not a grid node")))
}

/// Local variance from call prices at the grid node `(t, strike)`, clamped to
/// `[VARIANCE_FLOOR, DEFAULT_CAP^2]`.
pub fn dupire_local_variance(prices: &PriceSurface, t: f64, strike: f64) -> Result<f64> {
    let i = grid_index(&prices.times, t, "t")?;
    let k = grid_index(&prices.strikes, strike, "strike")?;
    prices.local_variance_at(i, k, super::DEFAULT_CAP)
}

/// Local volatility surface on the interior strikes of `prices`, absolute level axis.
pub fn local_vol_surface(prices: &PriceSurface, cap: f64) -> Result<VolSurface> {
    let nk = prices.strikes.len();
    if nk < 3 {
        return Err(Error::validation("strike_grid", "need at least three strikes"));
    }
    let levels = prices.strikes[1..nk - 1].to_vec();
    let mut values = Vec::with_capacity(prices.times.len() * levels.len());
    for i in 0..prices.times.len() {
        for k in 1..nk - 1 {
            values.push(prices.local_variance_at(i, k, cap)?.sqrt());
        }
    }
    VolSurface::new(prices.times.clone(), levels, values, LevelAxis::Absolute, cap)
}
