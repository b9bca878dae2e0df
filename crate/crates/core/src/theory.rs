//! Explicit error bounds between the coupled model and its large-basket
//! limit, and empirical convergence studies to test them against.
//!
//! The bounds are functions of three proximity metrics and of constants
//! controlling the volatility surfaces:
//!
//! - `K_b`: bound on `sigma + eta_j`,
//! - `K_sigma`: Lipschitz constant of `x -> x sigma(t, x)`,
//! - `K_eta`: Lipschitz constant of `x -> x eta_j(t, x)`,
//! - `K_Lip`: Lipschitz constant of `x -> sigma(t, x)`,
//!
//! plus `K_p`, a constant of the Burkholder-Davis-Gundy inequality
//! `E[sup_t |M_t|^q] <= K_p E[<M>_T^{q/2}]` for `q = 2p`. We use the
//! constant `(q^{q+1} / (2 (q-1)^{q-1}))^{q/2}` (Mao, *Stochastic
//! Differential Equations and Applications*, Theorem 1.7.3), which equals 4
//! at `p = 1`, the Doob value.

use rayon::prelude::*;

use crate::error::{Error, Result};
use crate::model::{LimitSpec, ModelSpec, ProximityMetrics};
use crate::sde::{simulate_original, NoisePlan, SimulationRequest, StockSelection, Underlying};

/// BDG constant for the `2p`-th moment.
pub fn universal_bdg_constant(p: u32) -> f64 {
    let q = 2.0 * p as f64;
    (q.powf(q + 1.0) / (2.0 * (q - 1.0).powf(q - 1.0))).powf(q / 2.0)
}

/// Surface constants entering the bounds.
#[derive(Debug, Clone, Copy, PartialEq, serde::Deserialize, serde::Serialize)]
pub struct BoundConstants {
    pub k_b: f64,
    pub k_sigma: f64,
    pub k_eta: f64,
    pub k_lip: f64,
}

impl BoundConstants {
    /// Discrete estimates from the surfaces' node values.
    pub fn from_surfaces(spec: &ModelSpec) -> Self {
        Self {
            k_b: spec.observed_vol_bound(),
            k_sigma: spec.index_vol.scaled_level_lipschitz(),
            k_eta: spec
                .idio_vols
                .iter()
                .map(|s| s.scaled_level_lipschitz())
                .fold(0.0, f64::max),
            k_lip: spec.index_vol.level_lipschitz(),
        }
    }
}

fn check_order(p: u32) -> Result<()> {
    if p < 1 {
        return Err(Error::validation("p", "moment order must be at least 1"));
    }
    Ok(())
}

/// A non-negative quantity held by its natural logarithm, so constants far
/// beyond the `f64` range stay representable.
#[derive(Debug, Clone, Copy, PartialEq, PartialOrd)]
pub struct Magnitude {
    pub ln: f64,
}

impl Magnitude {
    pub const ZERO: Magnitude = Magnitude { ln: f64::NEG_INFINITY };

    pub fn from_value(v: f64) -> Self {
        Self { ln: v.ln() }
    }

    /// The value as `f64`; `inf` when it exceeds the range.
    pub fn value(&self) -> f64 {
        self.ln.exp()
    }

    pub fn log10(&self) -> f64 {
        self.ln / std::f64::consts::LN_10
    }

    pub fn is_zero(&self) -> bool {
        self.ln == f64::NEG_INFINITY
    }

    pub fn mul(self, other: Magnitude) -> Self {
        if self.is_zero() || other.is_zero() {
            return Self::ZERO;
        }
        Self { ln: self.ln + other.ln }
    }

    fn finite(self, name: &str) -> Result<f64> {
        let v = self.value();
        if v.is_finite() {
            Ok(v)
        } else {
            Err(Error::Numerical(format!(
                "{name} is about 1e{:.0}, beyond the f64 range",
                self.log10()
            )))
        }
    }
}

/// Scientific notation with 6 significant digits, for any exponent.
impl std::fmt::Display for Magnitude {
    fn fmt(&self, f: &mut std::fmt::Formatter<'_>) -> std::fmt::Result {
        if self.is_zero() {
            return write!(f, "0");
        }
        let digits = f.precision().unwrap_or(5);
        let l = self.log10();
        let mut e = l.floor();
        let mut m = 10f64.powf(l - e);
        if format!("{m:.digits$}").starts_with("10") {
            m /= 10.0;
            e += 1.0;
        }
        write!(f, "{m:.digits$}e{e:.0}")
    }
}

fn ln_lemma1(spec: &ModelSpec, k_b: f64, p: u32) -> Result<f64> {
    check_order(p)?;
    spec.validate()?;
    let observed = spec.observed_vol_bound();
    if !(k_b >= observed * (1.0 - 1e-12)) {
        return Err(Error::validation(
            "k_b",
            format!("{k_b} is below the surfaces' bound {observed}"),
        ));
    }
    let pf = p as f64;
    let s0 = spec.initial_stocks.iter().fold(0.0, |m: f64, s| m.max(s.abs()));
    let b2 = spec.max_abs_beta().powi(2);
    let rate = 2.0 * spec.rate + (2.0 * pf - 1.0) * (b2 + 1.0) * k_b * k_b;
    Ok(2.0 * pf * s0.ln() + rate * pf * spec.horizon)
}

fn ln_theorem1_constant(spec: &ModelSpec, limit: &LimitSpec, c: &BoundConstants, p: u32) -> Result<f64> {
    let ln_cp = ln_lemma1(spec, c.k_b, p)?;
    let q = 2 * p as i32;
    let (t, kp) = (spec.horizon, universal_bdg_constant(p));
    let tp = t.powi(p as i32);
    let inner = 2f64.powi(q - 1) * kp * t.powi(p as i32 - 1) * (limit.beta * c.k_sigma).powi(q)
        + (2.0 * t).powi(q - 1) * limit.delta.powi(q)
        + spec.rate.powi(q) * t.powi(q - 1);
    Ok((q - 1) as f64 * 8f64.ln() + tp.ln() + (tp + kp * c.k_b.powi(q)).ln() + ln_cp + 4f64.powi(q - 1) * t * inner)
}

fn ln_theorem2_constant(spec: &ModelSpec, j: usize, c: &BoundConstants, p: u32) -> Result<f64> {
    check_order(p)?;
    if j >= spec.len() {
        return Err(Error::validation("j", format!("stock {j} out of range")));
    }
    let ln_c2p = ln_lemma1(spec, c.k_b, 2 * p)?;
    let q = 2 * p as i32;
    let (t, kp) = (spec.horizon, universal_bdg_constant(p));
    let beta_q = spec.betas[j].powi(q);
    let inner = (spec.rate - spec.dividends[j]).powi(q) * t.powi(q - 1)
        + kp * t.powi(p as i32 - 1) * c.k_eta.powi(q)
        + 2f64.powi(q - 1) * kp * t.powi(p as i32 - 1) * beta_q * c.k_b.powi(q);
    let pre = (q - 1) as f64 * 6f64.ln() + kp.ln() + t.powi(p as i32).ln();
    let zero = beta_q == 0.0 || c.k_lip == 0.0;
    if zero {
        return Ok(f64::NEG_INFINITY);
    }
    Ok(pre + beta_q.ln() + 0.5 * ln_c2p + q as f64 * c.k_lip.ln() + 3f64.powi(q - 1) * inner * t)
}

fn metric_term(spec: &ModelSpec, limit: &LimitSpec, p: u32) -> (ProximityMetrics, Magnitude) {
    let m = ProximityMetrics::from_parts(&spec.weights, &spec.betas, &spec.dividends, limit.beta, limit.delta);
    (m, Magnitude::from_value(m.combined(p)))
}

/// Moment bound `C_p >= E[sup_t |S^j_t|^{2p}]`:
/// `max_j s0_j^{2p} exp((2r + (2p - 1)(max beta_j^2 + 1) K_b^2) p T)`.
pub fn lemma1_bound(spec: &ModelSpec, k_b: f64, p: u32) -> Result<f64> {
    let ln = ln_lemma1(spec, k_b, p)?;
    let s0 = spec.initial_stocks.iter().fold(0.0, |m: f64, s| m.max(s.abs()));
    let direct = s0.powi(2 * p as i32) * (ln - 2.0 * p as f64 * s0.ln()).exp();
    if direct.is_finite() {
        Ok(direct)
    } else {
        Magnitude { ln }.finite("C_p")
    }
}

/// `C_T` of the index bound.
pub fn theorem1_constant(spec: &ModelSpec, limit: &LimitSpec, c: &BoundConstants, p: u32) -> Result<f64> {
    Magnitude { ln: ln_theorem1_constant(spec, limit, c, p)? }.finite("C_T")
}

/// Bound on `E[sup_t |I^M_t - I_t|^{2p}]`.
pub fn theorem1_bound(spec: &ModelSpec, limit: &LimitSpec, c: &BoundConstants, p: u32) -> Result<f64> {
    let (_, term) = metric_term(spec, limit, p);
    Magnitude { ln: ln_theorem1_constant(spec, limit, c, p)? }.mul(term).finite("theorem 1 bound")
}

/// `C~^j_T` of the per-stock bound.
pub fn theorem2_constant(spec: &ModelSpec, j: usize, c: &BoundConstants, p: u32) -> Result<f64> {
    Magnitude { ln: ln_theorem2_constant(spec, j, c, p)? }.finite("C~_T")
}

/// Bound on `E[sup_t |S^{j,M}_t - S^j_t|^{2p}]`.
pub fn theorem2_bound(spec: &ModelSpec, limit: &LimitSpec, j: usize, c: &BoundConstants, p: u32) -> Result<f64> {
    let (_, term) = metric_term(spec, limit, p);
    Magnitude { ln: ln_theorem2_constant(spec, j, c, p)? }.mul(term).finite("theorem 2 bound")
}

/// Bound on `E[sup_t |I^M_t - sum_j w_j S^j_t|^{2p}]`.
pub fn reconstructed_index_bound(spec: &ModelSpec, limit: &LimitSpec, c: &BoundConstants, p: u32) -> Result<f64> {
    bound_report(spec, limit, c, p)?.reconstructed.finite("reconstructed index bound")
}

/// Constants and bounds at one moment order. Values may exceed the `f64`
/// range, hence [`Magnitude`].
#[derive(Debug, Clone, PartialEq)]
pub struct BoundReport {
    pub p: u32,
    pub metrics: ProximityMetrics,
    pub constants: BoundConstants,
    pub k_p: f64,
    pub c_p: Magnitude,
    pub c_t: Magnitude,
    /// `C~^j_T` per stock.
    pub c_tilde_j: Vec<Magnitude>,
    pub c_tilde: Magnitude,
    pub theorem1: Magnitude,
    /// Per-stock bound.
    pub theorem2: Vec<Magnitude>,
    pub reconstructed: Magnitude,
}

pub fn bound_report(spec: &ModelSpec, limit: &LimitSpec, constants: &BoundConstants, p: u32) -> Result<BoundReport> {
    let (metrics, term) = metric_term(spec, limit, p);
    let c_t = Magnitude {
        ln: ln_theorem1_constant(spec, limit, constants, p)?,
    };
    let c_tilde_j = (0..spec.len())
        .map(|j| ln_theorem2_constant(spec, j, constants, p).map(|ln| Magnitude { ln }))
        .collect::<Result<Vec<_>>>()?;
    let c_tilde = c_tilde_j.iter().copied().fold(Magnitude::ZERO, |a, b| if b > a { b } else { a });
    let w: f64 = spec.weights.iter().sum();
    let w_term = Magnitude::from_value(w.powi(2 * p as i32));
    Ok(BoundReport {
        p,
        metrics,
        constants: *constants,
        k_p: universal_bdg_constant(p),
        c_p: Magnitude {
            ln: ln_lemma1(spec, constants.k_b, p)?,
        },
        c_t,
        theorem1: c_t.mul(term),
        theorem2: c_tilde_j.iter().map(|c| c.mul(term)).collect(),
        c_tilde_j,
        c_tilde,
        reconstructed: c_tilde.mul(w_term).mul(term),
    })
}

/// Settings of a convergence study over basket sizes.
#[derive(Debug, Clone, PartialEq)]
pub struct StudyConfig {
    pub sizes: Vec<usize>,
    pub p: u32,
    pub paths: usize,
    pub steps: usize,
    /// Limit-model parameters.
    pub beta: f64,
    pub delta: f64,
    /// When `None`, constants are estimated from each row's surfaces.
    pub constants: Option<BoundConstants>,
}

#[derive(Debug, Clone, PartialEq)]
pub struct StudyRow {
    pub m: usize,
    pub seed: u64,
    pub metrics: ProximityMetrics,
    /// Monte Carlo estimate of `E[sup_k |I^M - I|^{2p}]` over grid times.
    pub index_distance: f64,
    pub index_stderr: f64,
    /// Same for the first stock against its limit counterpart.
    pub stock_distance: f64,
    pub stock_stderr: f64,
    pub theorem1: f64,
    pub theorem2: f64,
    /// Standard error above half the estimate.
    pub flagged: bool,
}

#[derive(Debug, Clone, PartialEq)]
pub struct StudyTable {
    pub p: u32,
    pub rows: Vec<StudyRow>,
    /// Least-squares slope of `ln(index_distance)` against `ln(M)`.
    pub index_slope: Option<f64>,
    pub stock_slope: Option<f64>,
}

fn mean_stderr(v: &[f64]) -> (f64, f64) {
    let n = v.len() as f64;
    let mean = v.iter().sum::<f64>() / n;
    if v.len() < 2 {
        return (mean, 0.0);
    }
    let var = v.iter().map(|x| (x - mean).powi(2)).sum::<f64>() / (n - 1.0);
    (mean, (var / n).sqrt())
}

/// Slope of the least-squares line through `(ln x, ln y)` over points with `y > 0`.
pub fn log_log_slope(points: &[(f64, f64)]) -> Option<f64> {
    let pts: Vec<(f64, f64)> = points
        .iter()
        .filter(|(x, y)| *x > 0.0 && *y > 0.0)
        .map(|(x, y)| (x.ln(), y.ln()))
        .collect();
    if pts.len() < 2 {
        return None;
    }
    let n = pts.len() as f64;
    let mx = pts.iter().map(|p| p.0).sum::<f64>() / n;
    let my = pts.iter().map(|p| p.1).sum::<f64>() / n;
    let sxx: f64 = pts.iter().map(|p| (p.0 - mx).powi(2)).sum();
    if sxx == 0.0 {
        return None;
    }
    Some(pts.iter().map(|p| (p.0 - mx) * (p.1 - my)).sum::<f64>() / sxx)
}

/// Simulates the coupled model and its limit on shared noise for each basket
/// size and compares the distances with the bounds. Row `M` draws from
/// `noise.derive(M)`.
pub fn convergence_study(
    family: impl Fn(usize) -> Result<ModelSpec> + Sync,
    config: &StudyConfig,
    noise: &NoisePlan,
) -> Result<StudyTable> {
    check_order(config.p)?;
    if config.sizes.is_empty() {
        return Err(Error::validation("sizes", "at least one basket size is required"));
    }
    let q = 2 * config.p as i32;
    let rows = config
        .sizes
        .par_iter()
        .map(|&m| -> Result<StudyRow> {
            let spec = family(m)?;
            let limit = LimitSpec::new(
                config.beta,
                config.delta,
                config.delta,
                spec.initial_index(),
                spec.index_vol.clone(),
            )?;
            let constants = config.constants.unwrap_or_else(|| BoundConstants::from_surfaces(&spec));
            let row_noise = noise.derive(m as u64);
            let request = SimulationRequest::new(config.steps, config.paths)
                .record(StockSelection::Only(vec![0]))
                .with_companion();
            let ens = simulate_original(&spec, &limit, &request, &row_noise)?;
            let (index_distance, index_stderr) =
                mean_stderr(&ens.sup_distance(Underlying::Index, Underlying::CompanionIndex, q)?);
            let (stock_distance, stock_stderr) =
                mean_stderr(&ens.sup_distance(Underlying::Stock(0), Underlying::CompanionStock(0), q)?);
            let metrics =
                ProximityMetrics::from_parts(&spec.weights, &spec.betas, &spec.dividends, limit.beta, limit.delta);
            let flagged = index_stderr > 0.5 * index_distance || stock_stderr > 0.5 * stock_distance;
            Ok(StudyRow {
                m,
                seed: row_noise.seed(),
                metrics,
                index_distance,
                index_stderr,
                stock_distance,
                stock_stderr,
                theorem1: theorem1_bound(&spec, &limit, &constants, config.p)?,
                theorem2: theorem2_bound(&spec, &limit, 0, &constants, config.p)?,
                flagged,
            })
        })
        .collect::<Result<Vec<_>>>()?;
    let pick = |f: fn(&StudyRow) -> f64| -> Vec<(f64, f64)> { rows.iter().map(|r| (r.m as f64, f(r))).collect() };
    Ok(StudyTable {
        p: config.p,
        index_slope: log_log_slope(&pick(|r| r.index_distance)),
        stock_slope: log_log_slope(&pick(|r| r.stock_distance)),
        rows,
    })
}
