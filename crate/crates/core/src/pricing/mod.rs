//! Monte Carlo and closed-form option pricing, and smile extraction.

mod black_scholes;
mod smile;

pub use black_scholes::{
    implied_vol, implied_vol_detailed, lognormal_call, lognormal_vega, norm_cdf, norm_pdf,
    ImpliedVol, IMPLIED_VOL_LOWER, IMPLIED_VOL_UPPER,
};
pub use smile::{smile, smile_from_samples, Estimator, SmileCurve, SmilePoint, SmileStatus};

use crate::error::{Error, Result};
use crate::sde::{PathEnsemble, Underlying};

/// Discounted Monte Carlo price and its standard error.
#[derive(Debug, Clone, Copy, PartialEq)]
pub struct McEstimate {
    pub price: f64,
    pub stderr: f64,
}

fn mean_and_stderr(values: impl ExactSizeIterator<Item = f64> + Clone) -> (f64, f64) {
    let n = values.len() as f64;
    let mean = values.clone().sum::<f64>() / n;
    if values.len() < 2 {
        return (mean, 0.0);
    }
    let var = values.map(|x| (x - mean) * (x - mean)).sum::<f64>() / (n - 1.0);
    (mean, (var / n).sqrt())
}

/// `(1/N) sum e^{-rT} (S_T - K)^+` over terminal samples.
pub fn mc_vanilla(terminal: &[f64], strike: f64, rate: f64, maturity: f64) -> Result<McEstimate> {
    if terminal.is_empty() {
        return Err(Error::validation("ensemble", "no paths to price"));
    }
    let df = (-rate * maturity).exp();
    let (price, stderr) = mean_and_stderr(terminal.iter().map(|s| df * (s - strike).max(0.0)));
    Ok(McEstimate { price, stderr })
}

/// Call price with the discounted terminal level as control variate; its
/// expectation is `forward * e^{-rT}` for any martingale model.
pub fn mc_vanilla_controlled(
    terminal: &[f64],
    strike: f64,
    rate: f64,
    maturity: f64,
    forward: f64,
) -> Result<McEstimate> {
    if terminal.is_empty() {
        return Err(Error::validation("ensemble", "no paths to price"));
    }
    let df = (-rate * maturity).exp();
    let n = terminal.len() as f64;
    let pay_mean = terminal.iter().map(|s| (s - strike).max(0.0)).sum::<f64>() / n;
    let s_mean = terminal.iter().sum::<f64>() / n;
    let (mut cov, mut var) = (0.0, 0.0);
    for s in terminal {
        let ds = s - s_mean;
        cov += ((s - strike).max(0.0) - pay_mean) * ds;
        var += ds * ds;
    }
    let b = if var > 0.0 { cov / var } else { 0.0 };
    let price = df * (pay_mean - b * (s_mean - forward));
    if terminal.len() < 2 {
        return Ok(McEstimate { price, stderr: 0.0 });
    }
    let resid_var = terminal
        .iter()
        .map(|s| {
            let e = (s - strike).max(0.0) - pay_mean - b * (s - s_mean);
            e * e
        })
        .sum::<f64>()
        / (n - 2.0).max(1.0);
    Ok(McEstimate {
        price,
        stderr: df * (resid_var / n).sqrt(),
    })
}

/// Vanilla call on an ensemble underlying.
pub fn mc_vanilla_on(ensemble: &PathEnsemble, underlying: Underlying, strike: f64) -> Result<McEstimate> {
    let terminal = ensemble.terminal(underlying)?;
    mc_vanilla(&terminal, strike, ensemble.rate, ensemble.grid.horizon)
}

/// Call on the worst normalized performer: `(min_i S^i_T / S^i_0 - K)^+`.
/// `terminals[i]` holds the terminal levels of stock `i`, all of equal length.
pub fn worst_of_price(
    terminals: &[Vec<f64>],
    initial: &[f64],
    strike: f64,
    rate: f64,
    maturity: f64,
) -> Result<McEstimate> {
    if terminals.is_empty() || terminals.len() != initial.len() {
        return Err(Error::validation("stocks", "one terminal series and initial level per stock"));
    }
    let n = terminals[0].len();
    if n == 0 || terminals.iter().any(|t| t.len() != n) {
        return Err(Error::validation("stocks", "terminal series must be non-empty and equally long"));
    }
    let df = (-rate * maturity).exp();
    let payoff = (0..n).map(|p| {
        let worst = terminals
            .iter()
            .zip(initial)
            .map(|(t, s0)| t[p] / s0)
            .fold(f64::INFINITY, f64::min);
        df * (worst - strike).max(0.0)
    });
    let (price, stderr) = mean_and_stderr(payoff);
    Ok(McEstimate { price, stderr })
}

/// Worst-of call over the listed stocks of an ensemble (all stocks when `ids` is empty).
pub fn worst_of_on(ensemble: &PathEnsemble, ids: &[usize], strike: f64) -> Result<McEstimate> {
    let ids: Vec<usize> = if ids.is_empty() {
        ensemble.stocks.iter().map(|s| s.id).collect()
    } else {
        ids.to_vec()
    };
    let mut terminals = Vec::with_capacity(ids.len());
    let mut initial = Vec::with_capacity(ids.len());
    for &j in &ids {
        let s = ensemble
            .stock(j)
            .ok_or_else(|| Error::validation("stocks", format!("stock {} has no paths", j + 1)))?;
        initial.push(s.initial);
        terminals.push(ensemble.terminal(Underlying::Stock(j))?);
    }
    worst_of_price(&terminals, &initial, strike, ensemble.rate, ensemble.grid.horizon)
}
