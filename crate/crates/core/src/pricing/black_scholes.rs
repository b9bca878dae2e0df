use statrs::function::erf::erfc;

use crate::error::{Error, Result};

pub const IMPLIED_VOL_LOWER: f64 = 1e-4;
pub const IMPLIED_VOL_UPPER: f64 = 5.0;
const IMPLIED_VOL_HARD_UPPER: f64 = 40.0;

#[inline]
pub fn norm_cdf(x: f64) -> f64 {
    0.5 * erfc(-x / std::f64::consts::SQRT_2)
}

#[inline]
pub fn norm_pdf(x: f64) -> f64 {
    (-0.5 * x * x).exp() / (2.0 * std::f64::consts::PI).sqrt()
}

/// Lognormal (Black-Scholes) call with continuous dividend yield `q`.
pub fn lognormal_call(spot: f64, strike: f64, maturity: f64, rate: f64, q: f64, vol: f64) -> f64 {
    let df = (-rate * maturity).exp();
    let dq = (-q * maturity).exp();
    if strike <= 0.0 {
        return dq * spot - df * strike;
    }
    let sd = vol * maturity.sqrt();
    if sd <= 0.0 {
        return (dq * spot - df * strike).max(0.0);
    }
    let d1 = ((spot / strike).ln() + (rate - q) * maturity) / sd + 0.5 * sd;
    let d2 = d1 - sd;
    dq * spot * norm_cdf(d1) - df * strike * norm_cdf(d2)
}

/// Sensitivity of [`lognormal_call`] to the volatility.
pub fn lognormal_vega(spot: f64, strike: f64, maturity: f64, rate: f64, q: f64, vol: f64) -> f64 {
    let sd = vol * maturity.sqrt();
    if sd <= 0.0 || strike <= 0.0 {
        return 0.0;
    }
    let d1 = ((spot / strike).ln() + (rate - q) * maturity) / sd + 0.5 * sd;
    (-q * maturity).exp() * spot * norm_pdf(d1) * maturity.sqrt()
}

/// Result of an implied volatility inversion.
#[derive(Debug, Clone, Copy, PartialEq)]
pub struct ImpliedVol {
    pub vol: f64,
    /// The root lay above [`IMPLIED_VOL_UPPER`] and the bracket had to be widened.
    pub widened: bool,
}

/// Inverts [`lognormal_call`] in volatility over `[1e-4, 5]`, widening the
/// upper end if needed.
pub fn implied_vol_detailed(
    price: f64,
    spot: f64,
    strike: f64,
    maturity: f64,
    rate: f64,
    q: f64,
) -> Result<ImpliedVol> {
    if !(spot > 0.0 && strike > 0.0 && maturity > 0.0) || !price.is_finite() {
        return Err(Error::validation(
            "implied_vol",
            "spot, strike and maturity must be positive and the price finite",
        ));
    }
    let lower_bound = ((-q * maturity).exp() * spot - (-rate * maturity).exp() * strike).max(0.0);
    let upper_bound = (-q * maturity).exp() * spot;
    if price <= lower_bound {
        return Err(Error::BelowIntrinsic {
            price,
            bound: lower_bound,
        });
    }
    if price >= upper_bound {
        return Err(Error::AboveSpot {
            price,
            bound: upper_bound,
        });
    }
    let f = |v: f64| lognormal_call(spot, strike, maturity, rate, q, v) - price;

    let mut lo = IMPLIED_VOL_LOWER;
    let mut hi = IMPLIED_VOL_UPPER;
    let mut widened = false;
    if f(lo) > 0.0 {
        return Err(Error::Numerical(format!(
            "implied volatility below {IMPLIED_VOL_LOWER} for price {price}"
        )));
    }
    while f(hi) < 0.0 {
        if hi >= IMPLIED_VOL_HARD_UPPER {
            return Err(Error::Numerical(format!(
                "implied volatility above {IMPLIED_VOL_HARD_UPPER} for price {price}"
            )));
        }
        hi *= 2.0;
        widened = true;
    }

    // Newton steps safeguarded by bisection on the bracket [lo, hi].
    let tol = 1e-13 * spot;
    let mut x = 0.5 * (lo + hi);
    for _ in 0..200 {
        let fx = f(x);
        if fx.abs() <= tol {
            break;
        }
        if fx < 0.0 {
            lo = x;
        } else {
            hi = x;
        }
        if hi - lo < 1e-15 {
            break;
        }
        let vega = lognormal_vega(spot, strike, maturity, rate, q, x);
        let newton = if vega > 0.0 { x - fx / vega } else { f64::NAN };
        x = if newton > lo && newton < hi {
            newton
        } else {
            0.5 * (lo + hi)
        };
    }
    Ok(ImpliedVol { vol: x, widened })
}

pub fn implied_vol(
    price: f64,
    spot: f64,
    strike: f64,
    maturity: f64,
    rate: f64,
    q: f64,
) -> Result<f64> {
    implied_vol_detailed(price, spot, strike, maturity, rate, q).map(|iv| iv.vol)
}
