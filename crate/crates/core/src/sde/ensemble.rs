use crate::error::{Error, Result};

use super::TimeGrid;

/// Path-major storage: path `p` occupies `levels[p * (n + 1)..(p + 1) * (n + 1)]`.
#[derive(Debug, Clone, PartialEq)]
pub struct IndexPaths {
    pub initial: f64,
    /// Dividend yield used when quoting options on this index.
    pub dividend: f64,
    pub levels: Vec<f64>,
}

#[derive(Debug, Clone, PartialEq)]
pub struct StockPaths {
    pub id: usize,
    pub initial: f64,
    pub dividend: f64,
    pub levels: Vec<f64>,
}

/// Limit-model paths driven by the same Brownian increments.
#[derive(Debug, Clone, PartialEq)]
pub struct Companion {
    pub index: IndexPaths,
    pub stocks: Vec<StockPaths>,
}

#[derive(Debug, Clone, Copy, PartialEq, Eq)]
pub enum Underlying {
    Index,
    Stock(usize),
    /// `sum_j w_j S^j` in the simplified model.
    ReconstructedIndex,
    CompanionIndex,
    CompanionStock(usize),
}

impl std::fmt::Display for Underlying {
    fn fmt(&self, f: &mut std::fmt::Formatter<'_>) -> std::fmt::Result {
        match self {
            Underlying::Index => write!(f, "index"),
            Underlying::Stock(j) => write!(f, "stock_{}", j + 1),
            Underlying::ReconstructedIndex => write!(f, "reconstructed_index"),
            Underlying::CompanionIndex => write!(f, "limit_index"),
            Underlying::CompanionStock(j) => write!(f, "limit_stock_{}", j + 1),
        }
    }
}

impl std::str::FromStr for Underlying {
    type Err = Error;

    /// Inverse of `Display`; stock ids are 1-based.
    fn from_str(s: &str) -> Result<Self> {
        let id = |rest: &str| -> Result<usize> {
            match rest.parse::<usize>() {
                Ok(j) if j >= 1 => Ok(j - 1),
                _ => Err(Error::validation("underlying", format!("bad stock id in '{s}'"))),
            }
        };
        match s {
            "index" => Ok(Underlying::Index),
            "reconstructed_index" => Ok(Underlying::ReconstructedIndex),
            "limit_index" => Ok(Underlying::CompanionIndex),
            _ => {
                if let Some(rest) = s.strip_prefix("limit_stock_") {
                    Ok(Underlying::CompanionStock(id(rest)?))
                } else if let Some(rest) = s.strip_prefix("stock_") {
                    Ok(Underlying::Stock(id(rest)?))
                } else {
                    Err(Error::validation("underlying", format!("unknown underlying '{s}'")))
                }
            }
        }
    }
}

#[derive(Debug, Clone, PartialEq)]
pub struct PathEnsemble {
    pub family: &'static str,
    pub grid: TimeGrid,
    pub paths: usize,
    pub rate: f64,
    pub seed: u64,
    pub index: Option<IndexPaths>,
    pub reconstructed_index: Option<IndexPaths>,
    pub stocks: Vec<StockPaths>,
    pub companion: Option<Companion>,
    /// Number of Euler steps that hit the positivity floor.
    pub clamp_count: u64,
}

impl PathEnsemble {
    #[inline]
    pub fn width(&self) -> usize {
        self.grid.steps + 1
    }

    pub fn stock(&self, id: usize) -> Option<&StockPaths> {
        self.stocks.iter().find(|s| s.id == id)
    }

    /// Levels, initial value and dividend yield of an underlying.
    pub fn series(&self, underlying: Underlying) -> Result<(&[f64], f64, f64)> {
        let missing = || Error::validation("underlying", format!("{underlying} is not in the ensemble"));
        let (levels, initial, dividend) = match underlying {
            Underlying::Index => {
                let i = self.index.as_ref().ok_or_else(missing)?;
                (&i.levels, i.initial, i.dividend)
            }
            Underlying::ReconstructedIndex => {
                let i = self.reconstructed_index.as_ref().ok_or_else(missing)?;
                (&i.levels, i.initial, i.dividend)
            }
            Underlying::Stock(j) => {
                let s = self.stock(j).ok_or_else(missing)?;
                (&s.levels, s.initial, s.dividend)
            }
            Underlying::CompanionIndex => {
                let c = self.companion.as_ref().ok_or_else(missing)?;
                (&c.index.levels, c.index.initial, c.index.dividend)
            }
            Underlying::CompanionStock(j) => {
                let c = self.companion.as_ref().ok_or_else(missing)?;
                let s = c.stocks.iter().find(|s| s.id == j).ok_or_else(missing)?;
                (&s.levels, s.initial, s.dividend)
            }
        };
        Ok((levels.as_slice(), initial, dividend))
    }

    pub fn path(&self, underlying: Underlying, p: usize) -> Result<&[f64]> {
        let (levels, _, _) = self.series(underlying)?;
        let w = self.width();
        levels
            .get(p * w..(p + 1) * w)
            .ok_or_else(|| Error::validation("path", format!("path {p} out of range")))
    }

    /// Levels of an underlying at grid step `k` across all paths.
    pub fn at_step(&self, underlying: Underlying, k: usize) -> Result<Vec<f64>> {
        let (levels, _, _) = self.series(underlying)?;
        if k > self.grid.steps {
            return Err(Error::validation("step", format!("step {k} beyond the grid")));
        }
        let w = self.width();
        Ok(levels.iter().skip(k).step_by(w).copied().collect())
    }

    pub fn terminal(&self, underlying: Underlying) -> Result<Vec<f64>> {
        self.at_step(underlying, self.grid.steps)
    }

    /// Per-path `sup_k |a_k - b_k|^q`.
    pub fn sup_distance(&self, a: Underlying, b: Underlying, q: i32) -> Result<Vec<f64>> {
        let (la, _, _) = self.series(a)?;
        let (lb, _, _) = self.series(b)?;
        let w = self.width();
        Ok(la
            .chunks(w)
            .zip(lb.chunks(w))
            .map(|(x, y)| {
                x.iter()
                    .zip(y)
                    .map(|(u, v)| (u - v).abs())
                    .fold(0.0, f64::max)
                    .powi(q)
            })
            .collect())
    }
}
