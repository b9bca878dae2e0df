//! Gridded volatility surfaces and their extraction from call prices.
//!
//! A [`VolSurface`] holds volatilities (per square-root year) on a
//! time × level grid. Evaluation is bilinear inside the grid hull and flat
//! outside it, so every evaluation stays inside `[0, cap]`.

mod dupire;

pub use dupire::{dupire_local_variance, local_vol_surface, PriceSurface, VARIANCE_FLOOR};

use crate::error::{Error, Result};

/// Default bound on surface values, per square-root year.
pub const DEFAULT_CAP: f64 = 5.0;

/// How the level axis of a surface is read.
#[derive(Debug, Clone, Copy, PartialEq)]
pub enum LevelAxis {
    /// Grid levels are absolute asset levels.
    Absolute,
    /// Grid levels are `x / reference`.
    Moneyness { reference: f64 },
}

impl LevelAxis {
    #[inline]
    pub fn coordinate(&self, level: f64) -> f64 {
        match *self {
            LevelAxis::Absolute => level,
            LevelAxis::Moneyness { reference } => level / reference,
        }
    }

    #[inline]
    pub fn level(&self, coordinate: f64) -> f64 {
        match *self {
            LevelAxis::Absolute => coordinate,
            LevelAxis::Moneyness { reference } => coordinate * reference,
        }
    }
}

#[derive(Debug, Clone, PartialEq)]
pub struct VolSurface {
    times: Vec<f64>,
    levels: Vec<f64>,
    /// Row-major, one row per time node.
    values: Vec<f64>,
    axis: LevelAxis,
    cap: f64,
}

fn check_grid(name: &str, grid: &[f64], positive: bool) -> Result<()> {
    if grid.is_empty() {
        return Err(Error::validation(name, "grid is empty"));
    }
    if grid.iter().any(|x| !x.is_finite()) {
        return Err(Error::validation(name, "grid contains non-finite values"));
    }
    if grid.windows(2).any(|w| w[1] <= w[0]) {
        return Err(Error::validation(name, "grid must be strictly increasing"));
    }
    if positive && grid[0] <= 0.0 {
        return Err(Error::validation(name, "grid must be positive"));
    }
    if !positive && grid[0] < 0.0 {
        return Err(Error::validation(name, "grid must be non-negative"));
    }
    Ok(())
}

/// Locates `x` in `grid`: lower node, upper node and the weight of the upper node.
#[inline]
fn bracket(grid: &[f64], x: f64) -> (usize, usize, f64) {
    let last = grid.len() - 1;
    if x <= grid[0] {
        return (0, 0, 0.0);
    }
    if x >= grid[last] {
        return (last, last, 0.0);
    }
    let k = grid.partition_point(|g| *g <= x) - 1;
    let w = (x - grid[k]) / (grid[k + 1] - grid[k]);
    (k, k + 1, w)
}

impl VolSurface {
    pub fn new(
        times: Vec<f64>,
        levels: Vec<f64>,
        values: Vec<f64>,
        axis: LevelAxis,
        cap: f64,
    ) -> Result<Self> {
        check_grid("time_grid", &times, false)?;
        check_grid("level_grid", &levels, true)?;
        if let LevelAxis::Moneyness { reference } = axis {
            if !(reference > 0.0 && reference.is_finite()) {
                return Err(Error::validation("reference", "moneyness reference must be positive"));
            }
        }
        if !(cap >= 0.0 && cap.is_finite()) {
            return Err(Error::validation("cap", "cap must be finite and non-negative"));
        }
        if values.len() != times.len() * levels.len() {
            return Err(Error::validation(
                "values",
                format!(
                    "expected {}x{} values, got {}",
                    times.len(),
                    levels.len(),
                    values.len()
                ),
            ));
        }
        for (idx, v) in values.iter().enumerate() {
            if !v.is_finite() || *v < 0.0 {
                return Err(Error::validation(
                    "values",
                    format!("value {v} at node {idx} is negative or non-finite"),
                ));
            }
            if *v > cap {
                return Err(Error::validation(
                    "values",
                    format!("value {v} at node {idx} exceeds the cap {cap}"),
                ));
            }
        }
        Ok(Self {
            times,
            levels,
            values,
            axis,
            cap,
        })
    }

    /// A surface equal to `value` everywhere.
    pub fn constant(value: f64) -> Result<Self> {
        Self::new(vec![0.0], vec![1.0], vec![value], LevelAxis::Absolute, DEFAULT_CAP.max(value))
    }

    /// Samples `f(t, z)` at every grid node, `z` being the grid coordinate
    /// (absolute level or moneyness depending on `axis`).
    pub fn from_fn(
        times: Vec<f64>,
        levels: Vec<f64>,
        axis: LevelAxis,
        cap: f64,
        f: impl Fn(f64, f64) -> f64,
    ) -> Result<Self> {
        let mut values = Vec::with_capacity(times.len() * levels.len());
        for &t in &times {
            for &z in &levels {
                values.push(f(t, z));
            }
        }
        Self::new(times, levels, values, axis, cap)
    }

    pub fn times(&self) -> &[f64] {
        &self.times
    }

    pub fn levels(&self) -> &[f64] {
        &self.levels
    }

    pub fn values(&self) -> &[f64] {
        &self.values
    }

    pub fn axis(&self) -> LevelAxis {
        self.axis
    }

    pub fn cap(&self) -> f64 {
        self.cap
    }

    #[inline]
    pub fn node(&self, time_index: usize, level_index: usize) -> f64 {
        self.values[time_index * self.levels.len() + level_index]
    }

    /// Volatility at time `t` and absolute level `x`.
    #[inline]
    pub fn eval(&self, t: f64, x: f64) -> f64 {
        self.eval_coordinate(t, self.axis.coordinate(x))
    }

    /// Volatility at time `t` and grid coordinate `z`.
    #[inline]
    pub fn eval_coordinate(&self, t: f64, z: f64) -> f64 {
        let (i0, i1, wt) = bracket(&self.times, t);
        let (j0, j1, wz) = bracket(&self.levels, z);
        let row = |i: usize| {
            let a = self.node(i, j0);
            if wz == 0.0 {
                a
            } else {
                (1.0 - wz) * a + wz * self.node(i, j1)
            }
        };
        let lo = row(i0);
        if wt == 0.0 {
            lo
        } else {
            (1.0 - wt) * lo + wt * row(i1)
        }
    }

    pub fn max_value(&self) -> f64 {
        self.values.iter().copied().fold(0.0, f64::max)
    }

    pub fn min_value(&self) -> f64 {
        self.values.iter().copied().fold(f64::INFINITY, f64::min)
    }

    /// Largest slope of `x -> vol(t, x)` between adjacent level nodes, in absolute units.
    pub fn level_lipschitz(&self) -> f64 {
        let mut best: f64 = 0.0;
        for i in 0..self.times.len() {
            for j in 1..self.levels.len() {
                let dx = self.axis.level(self.levels[j]) - self.axis.level(self.levels[j - 1]);
                let dv = (self.node(i, j) - self.node(i, j - 1)).abs();
                best = best.max(dv / dx);
            }
        }
        best
    }

    /// Discrete Lipschitz estimate of `x -> x * vol(t, x)`, including the
    /// flat-extrapolated tails where the slope equals the edge value.
    pub fn scaled_level_lipschitz(&self) -> f64 {
        let last = self.levels.len() - 1;
        let mut best: f64 = 0.0;
        for i in 0..self.times.len() {
            best = best.max(self.node(i, 0)).max(self.node(i, last));
            for j in 1..self.levels.len() {
                let x0 = self.axis.level(self.levels[j - 1]);
                let x1 = self.axis.level(self.levels[j]);
                let d = (x1 * self.node(i, j) - x0 * self.node(i, j - 1)).abs();
                best = best.max(d / (x1 - x0));
            }
        }
        best
    }
}

/// Samples a non-negative function on a grid; `eval` reproduces `f` exactly at the nodes.
pub fn build_surface_from_function(
    f: impl Fn(f64, f64) -> f64,
    time_grid: Vec<f64>,
    level_grid: Vec<f64>,
    axis: LevelAxis,
    cap: f64,
) -> Result<VolSurface> {
    VolSurface::from_fn(time_grid, level_grid, axis, cap, f)
}

/// Quadratic skew in moneyness, clamped to `[floor, ceiling]`:
/// `atm + slope * (m - 1) + curvature * (m - 1)^2`.
#[derive(Debug, Clone, Copy, PartialEq, serde::Deserialize, serde::Serialize)]
pub struct SkewParams {
    pub atm: f64,
    pub slope: f64,
    #[serde(default)]
    pub curvature: f64,
    pub floor: f64,
    pub ceiling: f64,
}

impl SkewParams {
    #[inline]
    pub fn vol(&self, moneyness: f64) -> f64 {
        let d = moneyness - 1.0;
        (self.atm + self.slope * d + self.curvature * d * d).clamp(self.floor, self.ceiling)
    }
}

/// Synthetic equity-index skew used by the bundled configurations: 25% at
/// the money, falling 30 points per unit of moneyness with curvature 0.2,
/// clamped to [10%, 60%]. Over moneyness 0.3 to 2.0 it runs from about 56%
/// down to a minimum near 14% and back to 15%.
pub const SYNTHETIC_INDEX_SKEW: SkewParams = SkewParams {
    atm: 0.25,
    slope: -0.3,
    curvature: 0.2,
    floor: 0.1,
    ceiling: 0.6,
};

/// [`SYNTHETIC_INDEX_SKEW`] around `reference` on 35 moneyness points over `[0.3, 2.0]`.
pub fn synthetic_index_surface(reference: f64, horizon: f64) -> Result<VolSurface> {
    skewed_surface(reference, SYNTHETIC_INDEX_SKEW, horizon, linspace(0.3, 2.0, 35))
}

/// Evenly spaced grid with `count` points from `lo` to `hi` inclusive.
pub fn linspace(lo: f64, hi: f64, count: usize) -> Vec<f64> {
    match count {
        0 => Vec::new(),
        1 => vec![lo],
        _ => (0..count)
            .map(|i| {
                if i + 1 == count {
                    hi
                } else {
                    lo + (hi - lo) * i as f64 / (count - 1) as f64
                }
            })
            .collect(),
    }
}

/// A time-homogeneous skewed surface on a moneyness axis around `reference`.
pub fn skewed_surface(
    reference: f64,
    skew: SkewParams,
    horizon: f64,
    level_grid: Vec<f64>,
) -> Result<VolSurface> {
    let cap = DEFAULT_CAP.max(skew.ceiling);
    VolSurface::from_fn(
        vec![0.0, horizon],
        level_grid,
        LevelAxis::Moneyness { reference },
        cap,
        |_, m| skew.vol(m),
    )
}

#[cfg(test)]
mod tests {
    use super::*;

    fn corners() -> VolSurface {
        VolSurface::new(
            vec![0.0, 1.0],
            vec![90.0, 110.0],
            vec![0.1, 0.2, 0.3, 0.5],
            LevelAxis::Absolute,
            1.0,
        )
        .unwrap()
    }

    #[test]
    fn constant_surface_is_constant() {
        let s = VolSurface::constant(0.3).unwrap();
        for (t, x) in [(0.0, 1.0), (2.0, 1e-3), (0.5, 1e6)] {
            assert_eq!(s.eval(t, x), 0.3);
        }
    }

    #[test]
    fn nodes_are_exact() {
        let s = corners();
        assert_eq!(s.eval(0.0, 90.0), 0.1);
        assert_eq!(s.eval(0.0, 110.0), 0.2);
        assert_eq!(s.eval(1.0, 90.0), 0.3);
        assert_eq!(s.eval(1.0, 110.0), 0.5);
    }

    #[test]
    fn cell_midpoint_is_bilinear_blend() {
        let s = corners();
        let expected = (0.1 + 0.2 + 0.3 + 0.5) / 4.0;
        assert!((s.eval(0.5, 100.0) - expected).abs() < 1e-15);
    }

    #[test]
    fn flat_extrapolation() {
        let s = corners();
        assert_eq!(s.eval(-1.0, 50.0), 0.1);
        assert_eq!(s.eval(5.0, 500.0), 0.5);
        assert!((s.eval(5.0, 100.0) - 0.4).abs() < 1e-15);
    }

    #[test]
    fn toy_constant_surface_from_function() {
        let s = build_surface_from_function(
            |_, _| 0.6,
            linspace(0.0, 1.0, 21),
            linspace(0.3, 2.0, 41),
            LevelAxis::Moneyness { reference: 100.0 },
            DEFAULT_CAP,
        )
        .unwrap();
        assert!(s.values().iter().all(|v| *v == 0.6));
    }

    #[test]
    fn step_function_reproduced_at_nodes() {
        let spot = 100.0;
        let f = |_t: f64, x: f64| 0.2 + if x < spot { 0.1 } else { 0.0 };
        let times = linspace(0.0, 1.0, 5);
        let levels = linspace(50.0, 150.0, 11);
        let s = build_surface_from_function(f, times.clone(), levels.clone(), LevelAxis::Absolute, 1.0)
            .unwrap();
        for &t in &times {
            for &x in &levels {
                assert_eq!(s.eval(t, x), f(t, x));
            }
        }
    }

    #[test]
    fn cap_and_sign_rejected() {
        let over = build_surface_from_function(|_, _| 1.5, vec![0.0], vec![1.0], LevelAxis::Absolute, 1.0);
        assert!(matches!(over, Err(Error::Validation { .. })));
        let neg = build_surface_from_function(|_, _| -0.1, vec![0.0], vec![1.0], LevelAxis::Absolute, 1.0);
        assert!(matches!(neg, Err(Error::Validation { .. })));
    }

    #[test]
    fn grids_validated() {
        let bad = VolSurface::new(vec![0.0, 0.0], vec![1.0], vec![0.1, 0.1], LevelAxis::Absolute, 1.0);
        assert!(bad.is_err());
        let bad = VolSurface::new(vec![0.0], vec![1.0, 2.0], vec![0.1], LevelAxis::Absolute, 1.0);
        assert!(bad.is_err());
    }

    #[test]
    fn lipschitz_estimates() {
        let s = corners();
        // max |dv/dx| = 0.2 / 20
        assert!((s.level_lipschitz() - 0.01).abs() < 1e-15);
        // x*vol: row 1 goes from 27 to 55 over 20
        assert!((s.scaled_level_lipschitz() - 1.4).abs() < 1e-12);
    }

    #[test]
    fn moneyness_axis_scales_levels() {
        let s = skewed_surface(
            50.0,
            SkewParams { atm: 0.2, slope: -0.1, curvature: 0.0, floor: 0.05, ceiling: 0.5 },
            1.0,
            linspace(0.5, 1.5, 11),
        )
        .unwrap();
        assert!((s.eval(0.3, 50.0) - 0.2).abs() < 1e-15);
        assert!((s.eval(0.3, 75.0) - 0.15).abs() < 1e-12);
    }

    mod properties {
        use super::*;
        use proptest::prelude::*;

        proptest! {
            #[test]
            fn eval_is_lipschitz_continuous(
                vals in proptest::collection::vec(0.0f64..1.0, 9),
                t in 0.0f64..2.0,
                x in 40.0f64..160.0,
            ) {
                let s = VolSurface::new(
                    vec![0.0, 0.5, 1.0],
                    vec![80.0, 100.0, 120.0],
                    vals,
                    LevelAxis::Absolute,
                    1.0,
                ).unwrap();
                // corner differences are < 1, so slopes are bounded by 1/cell size
                let lt = 1.0 / 0.5;
                let lx = 1.0 / 20.0;
                let d = 1e-4;
                let v = s.eval(t, x);
                prop_assert!((s.eval(t + d, x) - v).abs() <= lt * d + 1e-12);
                prop_assert!((s.eval(t, x + d) - v).abs() <= lx * d + 1e-12);
                prop_assert!((0.0..=1.0).contains(&v));
            }
        }
    }
}
