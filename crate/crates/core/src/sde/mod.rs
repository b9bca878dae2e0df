//! Euler simulation of the three model families: the original coupled
//! model, the simplified large-basket model and the constantly correlated
//! local-volatility ("market") model.

mod ensemble;
mod models;
mod noise;

pub use ensemble::{Companion, IndexPaths, PathEnsemble, StockPaths, Underlying};
pub use models::{
    simulate_market_model, simulate_original, simulate_simplified, MarketModel, SimplifiedModel,
    StockSpec,
};
pub use noise::{normal_from_bits, Channel, NoisePlan, PathNoise};

use crate::error::{Error, Result};

/// Levels produced by an Euler step at or below zero are replaced by
/// `POSITIVITY_FLOOR * s0` and counted.
pub const POSITIVITY_FLOOR: f64 = 1e-12;

/// Uniform grid `t_k = T k / n`.
#[derive(Debug, Clone, Copy, PartialEq)]
pub struct TimeGrid {
    pub horizon: f64,
    pub steps: usize,
}

impl TimeGrid {
    pub fn new(horizon: f64, steps: usize) -> Result<Self> {
        if steps == 0 {
            return Err(Error::validation("steps", "at least one time step is required"));
        }
        if !(horizon > 0.0 && horizon.is_finite()) {
            return Err(Error::validation("horizon", "must be positive"));
        }
        Ok(Self { horizon, steps })
    }

    #[inline]
    pub fn dt(&self) -> f64 {
        self.horizon / self.steps as f64
    }

    #[inline]
    pub fn time(&self, k: usize) -> f64 {
        if k == self.steps {
            self.horizon
        } else {
            self.horizon * k as f64 / self.steps as f64
        }
    }

    pub fn times(&self) -> Vec<f64> {
        (0..=self.steps).map(|k| self.time(k)).collect()
    }
}

/// Which stock paths to keep in the ensemble.
#[derive(Debug, Clone, PartialEq, Eq, Default)]
pub enum StockSelection {
    #[default]
    All,
    None,
    Only(Vec<usize>),
}

impl StockSelection {
    pub fn resolve(&self, m: usize) -> Result<Vec<usize>> {
        match self {
            StockSelection::All => Ok((0..m).collect()),
            StockSelection::None => Ok(Vec::new()),
            StockSelection::Only(ids) => {
                if let Some(bad) = ids.iter().find(|&&j| j >= m) {
                    return Err(Error::validation("record", format!("stock {bad} out of range (M = {m})")));
                }
                Ok(ids.clone())
            }
        }
    }
}

#[derive(Debug, Clone, PartialEq)]
pub struct SimulationRequest {
    pub steps: usize,
    pub paths: usize,
    pub record: StockSelection,
    /// Also evolve the limit index (and limit stocks for recorded ids) on the same noise.
    pub companion: bool,
}

impl SimulationRequest {
    pub fn new(steps: usize, paths: usize) -> Self {
        Self {
            steps,
            paths,
            record: StockSelection::All,
            companion: false,
        }
    }

    pub fn record(mut self, record: StockSelection) -> Self {
        self.record = record;
        self
    }

    pub fn with_companion(mut self) -> Self {
        self.companion = true;
        self
    }

    pub(crate) fn validate(&self) -> Result<()> {
        if self.steps == 0 {
            return Err(Error::validation("steps", "at least one time step is required"));
        }
        if self.paths == 0 {
            return Err(Error::validation("paths", "at least one path is required"));
        }
        Ok(())
    }
}

/// Multiplicative Euler step with the positivity floor applied.
#[inline]
pub(crate) fn euler_step(level: f64, increment: f64, floor: f64, clamps: &mut u64) -> f64 {
    let next = level * (1.0 + increment);
    if next > 0.0 {
        next
    } else {
        *clamps += 1;
        floor
    }
}
