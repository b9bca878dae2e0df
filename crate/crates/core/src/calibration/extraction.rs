//! Surfaces read off a particle cloud: the idiosyncratic volatility `eta`
//! and the stock local volatility consistent with a given `eta`.

use rayon::prelude::*;

use crate::error::{Error, Result};
use crate::surface::{linspace, LevelAxis, VolSurface, DEFAULT_CAP};

use super::kernel::{gaussian_kernel, DENOMINATOR_FLOOR};
use super::particles::ParticleCloud;

/// 41 moneyness points over `[0.3, 2.0]`.
pub fn default_moneyness_grid() -> Vec<f64> {
    linspace(0.3, 2.0, 41)
}

/// `N^{-1/10}`.
pub fn default_extraction_bandwidth(particles: usize) -> f64 {
    (particles as f64).powf(-0.1)
}

/// Grid nodes where no particle had a non-negligible kernel weight.
#[derive(Debug, Clone, PartialEq, Default)]
pub struct CoverageReport {
    pub nodes: usize,
    /// `(time, moneyness)` of every node filled from its nearest populated neighbour.
    pub filled: Vec<(f64, f64)>,
}

impl CoverageReport {
    pub fn is_complete(&self) -> bool {
        self.filled.is_empty()
    }

    pub fn coverage(&self) -> f64 {
        1.0 - self.filled.len() as f64 / self.nodes.max(1) as f64
    }
}

/// Time nodes (deduplicated, sorted) and the cloud step each one reads.
fn time_nodes(cloud: &ParticleCloud, times: Option<&[f64]>) -> Result<Vec<(f64, usize)>> {
    let dt = cloud.grid.dt();
    let mut ts: Vec<f64> = match times {
        Some(t) => t.to_vec(),
        None => cloud.grid.times(),
    };
    if ts.is_empty() || ts.iter().any(|t| !t.is_finite() || *t < 0.0) {
        return Err(Error::validation("time_grid", "times must be non-empty and non-negative"));
    }
    ts.sort_by(f64::total_cmp);
    ts.dedup();
    Ok(ts
        .into_iter()
        .map(|t| (t, ((t / dt).round() as usize).min(cloud.grid.steps)))
        .collect())
}

/// Kernel estimate of `E[sigma^2(t_k, I) | S = s0 m]` on the grid, with
/// empty nodes flat-filled from the nearest populated node in the same row.
fn conditional_index_variance(
    cloud: &ParticleCloud,
    times: &[(f64, usize)],
    moneyness: &[f64],
    bandwidth: f64,
) -> Result<(Vec<f64>, CoverageReport)> {
    if moneyness.is_empty() || moneyness.windows(2).any(|w| w[1] <= w[0]) || moneyness[0] <= 0.0 {
        return Err(Error::validation("level_grid", "moneyness grid must be positive and increasing"));
    }
    if !(bandwidth > 0.0) {
        return Err(Error::validation("bandwidth", "must be positive"));
    }
    let width = moneyness.len();
    let rows: Vec<Vec<Option<f64>>> = times
        .par_iter()
        .map(|&(_, k)| {
            let xs = cloud.stock_at(k);
            let ys = cloud.index_variance_at(k);
            moneyness
                .iter()
                .map(|m| {
                    let x = cloud.s0 * m;
                    let (mut num, mut den) = (0.0, 0.0);
                    let (mut lo, mut hi) = (f64::INFINITY, f64::NEG_INFINITY);
                    for (xi, yi) in xs.iter().zip(&ys) {
                        let w = gaussian_kernel((x - xi) / bandwidth);
                        if w > 0.0 {
                            num += w * yi;
                            den += w;
                            lo = lo.min(*yi);
                            hi = hi.max(*yi);
                        }
                    }
                    (den > DENOMINATOR_FLOOR).then(|| (num / den).clamp(lo, hi))
                })
                .collect()
        })
        .collect();

    let mut report = CoverageReport {
        nodes: times.len() * width,
        filled: Vec::new(),
    };
    let mut values = Vec::with_capacity(times.len() * width);
    for (row, &(t, _)) in rows.iter().zip(times) {
        let populated: Vec<usize> = (0..width).filter(|&j| row[j].is_some()).collect();
        if populated.is_empty() {
            return Err(Error::KernelUnderflow { query: t });
        }
        for j in 0..width {
            match row[j] {
                Some(v) => values.push(v),
                None => {
                    let nearest = *populated
                        .iter()
                        .min_by(|&&a, &&b| {
                            (moneyness[a] - moneyness[j])
                                .abs()
                                .total_cmp(&(moneyness[b] - moneyness[j]).abs())
                        })
                        .unwrap();
                    values.push(row[nearest].unwrap());
                    report.filled.push((t, moneyness[j]));
                }
            }
        }
    }
    Ok((values, report))
}

fn surface_from_rows(cloud: &ParticleCloud, times: &[(f64, usize)], moneyness: &[f64], values: Vec<f64>) -> Result<VolSurface> {
    let cap = values.iter().copied().fold(DEFAULT_CAP, f64::max);
    VolSurface::new(
        times.iter().map(|t| t.0).collect(),
        moneyness.to_vec(),
        values,
        LevelAxis::Moneyness { reference: cloud.s0 },
        cap,
    )
}

/// `eta(t, x) = sqrt(max(v_loc(t, x) - beta^2 E[sigma^2 | S = x], 0))` on a
/// moneyness grid around the cloud's `s0`. Without `time_grid`, every Euler
/// step time is used; a requested time reads the nearest cloud step.
pub fn extract_eta_surface(
    cloud: &ParticleCloud,
    time_grid: Option<&[f64]>,
    moneyness: &[f64],
    bandwidth: f64,
) -> Result<(VolSurface, CoverageReport)> {
    let local_vol = cloud
        .local_vol
        .as_ref()
        .ok_or_else(|| Error::validation("cloud", "no target local volatility attached"))?;
    let times = time_nodes(cloud, time_grid)?;
    let (cond, report) = conditional_index_variance(cloud, &times, moneyness, bandwidth)?;
    let b2 = cloud.beta * cloud.beta;
    let width = moneyness.len();
    let values = cond
        .iter()
        .enumerate()
        .map(|(node, c)| {
            let (_, k) = times[node / width];
            let lv = local_vol.eval(cloud.grid.time(k), cloud.s0 * moneyness[node % width]);
            (lv * lv - b2 * c).max(0.0).sqrt()
        })
        .collect();
    Ok((surface_from_rows(cloud, &times, moneyness, values)?, report))
}

/// Stock local volatility `sqrt(eta^2 + beta^2 E[sigma^2 | S = x])` implied
/// by an idiosyncratic surface and a cloud of the model it drives.
pub fn reconstruct_market_vloc(
    eta: &VolSurface,
    cloud: &ParticleCloud,
    time_grid: Option<&[f64]>,
    moneyness: &[f64],
    bandwidth: f64,
) -> Result<(VolSurface, CoverageReport)> {
    let times = time_nodes(cloud, time_grid)?;
    let (cond, report) = conditional_index_variance(cloud, &times, moneyness, bandwidth)?;
    let b2 = cloud.beta * cloud.beta;
    let width = moneyness.len();
    let values = cond
        .iter()
        .enumerate()
        .map(|(node, c)| {
            let (_, k) = times[node / width];
            let e = eta.eval(cloud.grid.time(k), cloud.s0 * moneyness[node % width]);
            (e * e + b2 * c).sqrt()
        })
        .collect();
    Ok((surface_from_rows(cloud, &times, moneyness, values)?, report))
}
