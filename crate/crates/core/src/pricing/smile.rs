use crate::error::{Error, Result};
use crate::sde::{PathEnsemble, Underlying};

use super::{implied_vol_detailed, lognormal_vega, mc_vanilla, mc_vanilla_controlled, McEstimate};

/// How call prices are estimated from terminal samples.
#[derive(Debug, Clone, Copy, PartialEq, Eq, Default, serde::Deserialize, serde::Serialize)]
#[serde(rename_all = "snake_case")]
pub enum Estimator {
    /// Plain discounted payoff average.
    #[default]
    Plain,
    /// Payoff average corrected with the terminal level as control variate.
    Controlled,
}

#[derive(Debug, Clone, Copy, PartialEq, Eq)]
pub enum SmileStatus {
    Ok,
    /// Inversion needed a volatility above the default bracket.
    Widened,
    BelowBand,
    AboveBand,
    NoRoot,
}

impl SmileStatus {
    pub fn as_str(&self) -> &'static str {
        match self {
            SmileStatus::Ok => "ok",
            SmileStatus::Widened => "widened",
            SmileStatus::BelowBand => "below_band",
            SmileStatus::AboveBand => "above_band",
            SmileStatus::NoRoot => "no_root",
        }
    }
}

#[derive(Debug, Clone, PartialEq)]
pub struct SmilePoint {
    pub moneyness: f64,
    pub strike: f64,
    pub price: f64,
    pub stderr: f64,
    pub implied_vol: Option<f64>,
    /// Price standard error mapped through the vega at the implied volatility.
    pub vol_stderr: Option<f64>,
    pub status: SmileStatus,
}

#[derive(Debug, Clone, PartialEq)]
pub struct SmileCurve {
    pub underlying: String,
    pub maturity: f64,
    pub spot: f64,
    pub points: Vec<SmilePoint>,
}

impl SmileCurve {
    pub fn vol_at(&self, moneyness: f64) -> Option<f64> {
        self.points
            .iter()
            .find(|p| (p.moneyness - moneyness).abs() < 1e-12)
            .and_then(|p| p.implied_vol)
    }

    pub fn point_at(&self, moneyness: f64) -> Option<&SmilePoint> {
        self.points.iter().find(|p| (p.moneyness - moneyness).abs() < 1e-12)
    }
}

/// Prices a call at each `spot * moneyness` and inverts the implied volatility.
/// Strikes whose price leaves the no-arbitrage band are marked rather than failing.
#[allow(clippy::too_many_arguments)]
pub fn smile_from_samples(
    terminal: &[f64],
    underlying: impl Into<String>,
    spot: f64,
    moneyness: &[f64],
    rate: f64,
    dividend: f64,
    maturity: f64,
    estimator: Estimator,
) -> Result<SmileCurve> {
    if moneyness.windows(2).any(|w| w[1] <= w[0]) || moneyness.iter().any(|m| !(*m > 0.0)) {
        return Err(Error::validation("moneyness", "must be positive and strictly increasing"));
    }
    let forward = spot * ((rate - dividend) * maturity).exp();
    let mut points = Vec::with_capacity(moneyness.len());
    for &m in moneyness {
        let strike = spot * m;
        let McEstimate { price, stderr } = match estimator {
            Estimator::Plain => mc_vanilla(terminal, strike, rate, maturity)?,
            Estimator::Controlled => mc_vanilla_controlled(terminal, strike, rate, maturity, forward)?,
        };
        let (implied_vol, vol_stderr, status) =
            match implied_vol_detailed(price, spot, strike, maturity, rate, dividend) {
                Ok(iv) => {
                    let vega = lognormal_vega(spot, strike, maturity, rate, dividend, iv.vol);
                    let status = if iv.widened { SmileStatus::Widened } else { SmileStatus::Ok };
                    (Some(iv.vol), (vega > 0.0).then(|| stderr / vega), status)
                }
                Err(Error::BelowIntrinsic { .. }) => (None, None, SmileStatus::BelowBand),
                Err(Error::AboveSpot { .. }) => (None, None, SmileStatus::AboveBand),
                Err(_) => (None, None, SmileStatus::NoRoot),
            };
        points.push(SmilePoint {
            moneyness: m,
            strike,
            price,
            stderr,
            implied_vol,
            vol_stderr,
            status,
        });
    }
    Ok(SmileCurve {
        underlying: underlying.into(),
        maturity,
        spot,
        points,
    })
}

/// Smile of an ensemble underlying at the ensemble horizon. The dividend
/// yield is the one attached to the underlying's paths.
pub fn smile(
    ensemble: &PathEnsemble,
    underlying: Underlying,
    moneyness: &[f64],
    estimator: Estimator,
) -> Result<SmileCurve> {
    let (_, spot, dividend) = ensemble.series(underlying)?;
    let terminal = ensemble.terminal(underlying)?;
    smile_from_samples(
        &terminal,
        underlying.to_string(),
        spot,
        moneyness,
        ensemble.rate,
        dividend,
        ensemble.grid.horizon,
        estimator,
    )
}

#[cfg(test)]
mod tests {
    use super::*;

    #[test]
    fn empty_grid_gives_empty_curve() {
        let c = smile_from_samples(&[100.0, 101.0], "x", 100.0, &[], 0.0, 0.0, 1.0, Estimator::Plain).unwrap();
        assert!(c.points.is_empty());
    }

    #[test]
    fn out_of_band_strikes_are_marked() {
        // deterministic samples at the forward: zero time value at every strike
        let c = smile_from_samples(&[100.0; 8], "x", 100.0, &[0.5, 1.5], 0.0, 0.0, 1.0, Estimator::Plain).unwrap();
        assert_eq!(c.points[0].status, SmileStatus::BelowBand);
        assert_eq!(c.points[1].status, SmileStatus::BelowBand);
        assert!(c.points.iter().all(|p| p.implied_vol.is_none()));
    }

    #[test]
    fn unsorted_grid_rejected() {
        assert!(smile_from_samples(&[1.0], "x", 1.0, &[1.0, 0.9], 0.0, 0.0, 1.0, Estimator::Plain).is_err());
    }
}
