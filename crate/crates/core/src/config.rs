//! TOML run configurations. Every command reads its own section; the
//! `[model]` section is shared by the simulation-based commands. Relative
//! file paths are resolved against the directory of the configuration file.

use std::fs;
use std::path::{Path, PathBuf};
use std::sync::Arc;

use serde::Deserialize;

use crate::calibration::{BasisSpec, CostGuard, KernelConfig};
use crate::error::{Error, Result};
use crate::io::read_surface_csv;
use crate::model::ModelSpec;
use crate::pricing::Estimator;
use crate::surface::{linspace, SkewParams, VolSurface};
use crate::theory::BoundConstants;

/// A scalar applied to every stock, or one value per stock.
#[derive(Debug, Clone, Deserialize, PartialEq)]
#[serde(untagged)]
pub enum OneOrMany<T> {
    One(T),
    Many(Vec<T>),
}

impl<T: Clone> OneOrMany<T> {
    pub fn expand(&self, field: &str, m: usize) -> Result<Vec<T>> {
        match self {
            OneOrMany::One(v) => Ok(vec![v.clone(); m]),
            OneOrMany::Many(v) if v.len() == m => Ok(v.clone()),
            OneOrMany::Many(v) => Err(Error::validation(field, format!("expected {m} entries, got {}", v.len()))),
        }
    }

    pub fn first(&self) -> Option<&T> {
        match self {
            OneOrMany::One(v) => Some(v),
            OneOrMany::Many(v) => v.first(),
        }
    }
}

/// Skewed surface on a moneyness grid around `reference`.
#[derive(Debug, Clone, Deserialize, PartialEq)]
#[serde(deny_unknown_fields)]
pub struct SkewSurfaceSpec {
    pub atm: f64,
    pub slope: f64,
    #[serde(default)]
    pub curvature: f64,
    pub floor: f64,
    pub ceiling: f64,
    pub reference: f64,
    #[serde(default = "default_m_min")]
    pub moneyness_min: f64,
    #[serde(default = "default_m_max")]
    pub moneyness_max: f64,
    #[serde(default = "default_points")]
    pub points: usize,
}

fn default_m_min() -> f64 {
    0.3
}
fn default_m_max() -> f64 {
    2.0
}
fn default_points() -> usize {
    35
}

#[derive(Debug, Clone, Deserialize, PartialEq)]
#[serde(rename_all = "snake_case", deny_unknown_fields)]
pub enum SurfaceSpec {
    Constant(f64),
    Skew(SkewSurfaceSpec),
    /// A surface CSV.
    File(PathBuf),
}

impl SurfaceSpec {
    pub fn resolve(&self, base: &Path, horizon: f64) -> Result<Arc<VolSurface>> {
        let s = match self {
            SurfaceSpec::Constant(v) => VolSurface::constant(*v)?,
            SurfaceSpec::Skew(k) => {
                if k.points < 2 {
                    return Err(Error::validation("points", "a skew grid needs at least two points"));
                }
                let params = SkewParams {
                    atm: k.atm,
                    slope: k.slope,
                    curvature: k.curvature,
                    floor: k.floor,
                    ceiling: k.ceiling,
                };
                crate::surface::skewed_surface(
                    k.reference,
                    params,
                    horizon,
                    linspace(k.moneyness_min, k.moneyness_max, k.points),
                )?
            }
            SurfaceSpec::File(p) => read_surface_csv(&base.join(p))?,
        };
        Ok(Arc::new(s))
    }
}

#[derive(Debug, Clone, Deserialize, PartialEq)]
#[serde(deny_unknown_fields)]
pub struct ModelConfig {
    pub stocks: usize,
    pub s0: OneOrMany<f64>,
    /// Defaults to equal weights `1/M`.
    #[serde(default)]
    pub weights: Option<Vec<f64>>,
    #[serde(default = "unit_beta")]
    pub beta: OneOrMany<f64>,
    #[serde(default = "zero_dividend")]
    pub dividend: OneOrMany<f64>,
    pub rate: f64,
    pub horizon: f64,
    pub index_vol: SurfaceSpec,
    /// Idiosyncratic volatilities; local volatilities for the market family.
    pub idio_vol: OneOrMany<SurfaceSpec>,
}

fn unit_beta() -> OneOrMany<f64> {
    OneOrMany::One(1.0)
}
fn zero_dividend() -> OneOrMany<f64> {
    OneOrMany::One(0.0)
}

impl ModelConfig {
    pub fn build(&self, base: &Path) -> Result<ModelSpec> {
        self.build_with(base, self.stocks)
    }

    /// The model with `m` stocks, scalar fields taken from the first entry.
    pub fn build_with(&self, base: &Path, m: usize) -> Result<ModelSpec> {
        if m == 0 {
            return Err(Error::validation("stocks", "at least one stock is required"));
        }
        let resized = m != self.stocks;
        let pick = |field: &str, v: &OneOrMany<f64>| -> Result<Vec<f64>> {
            if resized {
                let first = *v.first().ok_or_else(|| Error::validation(field, "no value"))?;
                Ok(vec![first; m])
            } else {
                v.expand(field, m)
            }
        };
        let weights = match &self.weights {
            Some(w) if !resized => w.clone(),
            _ => vec![1.0 / m as f64; m],
        };
        let idio: Vec<SurfaceSpec> = if resized {
            vec![self.idio_vol.first().cloned().ok_or_else(|| Error::validation("idio_vol", "no surface"))?; m]
        } else {
            self.idio_vol.expand("idio_vol", m)?
        };
        // identical specs share one surface
        let mut resolved: Vec<(SurfaceSpec, Arc<VolSurface>)> = Vec::new();
        let mut idio_vols = Vec::with_capacity(m);
        for s in idio {
            if let Some((_, a)) = resolved.iter().find(|(spec, _)| *spec == s) {
                idio_vols.push(a.clone());
            } else {
                let a = s.resolve(base, self.horizon)?;
                resolved.push((s, a.clone()));
                idio_vols.push(a);
            }
        }
        ModelSpec::new(
            weights,
            pick("beta", &self.beta)?,
            pick("dividend", &self.dividend)?,
            self.rate,
            pick("s0", &self.s0)?,
            self.index_vol.resolve(base, self.horizon)?,
            idio_vols,
            self.horizon,
        )
    }
}

#[derive(Debug, Clone, Copy, Deserialize, PartialEq, Eq)]
#[serde(rename_all = "snake_case")]
pub enum Family {
    Original,
    Simplified,
    Market,
}

#[derive(Debug, Clone, Deserialize, PartialEq)]
#[serde(deny_unknown_fields)]
pub struct SimulateConfig {
    pub family: Family,
    pub paths: usize,
    pub steps: usize,
    /// Also evolve the limit model on the same noise (original family).
    #[serde(default)]
    pub companion: bool,
    /// Write every path to `paths.csv`.
    #[serde(default)]
    pub dump: bool,
    /// 1-based ids of the stocks to keep; all when absent.
    #[serde(default)]
    pub record: Option<Vec<usize>>,
    /// Pairwise correlation of the market family.
    #[serde(default)]
    pub rho: Option<f64>,
    /// Limit beta; the limit dividend is the weighted median of the dividends.
    #[serde(default = "one")]
    pub limit_beta: f64,
}

fn one() -> f64 {
    1.0
}

#[derive(Debug, Clone, Copy, Default, Deserialize, PartialEq, Eq)]
#[serde(rename_all = "snake_case")]
pub enum CalibrationFamily {
    /// One stock against an autonomous index; uses this section only.
    #[default]
    Simplified,
    /// Every stock of `[model]` at once, with `idio_vol` read as the target local volatilities.
    Original,
}

#[derive(Debug, Clone, Deserialize, PartialEq)]
#[serde(deny_unknown_fields)]
pub struct CalibrateConfig {
    #[serde(default)]
    pub family: CalibrationFamily,
    #[serde(default)]
    pub s0: f64,
    /// Initial index level; defaults to `s0`.
    #[serde(default)]
    pub i0: Option<f64>,
    #[serde(default)]
    pub rate: f64,
    #[serde(default)]
    pub dividend: f64,
    #[serde(default)]
    pub index_dividend: f64,
    #[serde(default)]
    pub horizon: f64,
    #[serde(default)]
    pub local_vol: Option<SurfaceSpec>,
    #[serde(default)]
    pub index_vol: Option<SurfaceSpec>,
    /// Fixed beta; when absent it is selected from `beta_hist`.
    #[serde(default)]
    pub beta: Option<f64>,
    #[serde(default)]
    pub beta_hist: Option<f64>,
    pub particles: usize,
    pub steps: usize,
    #[serde(default = "KernelConfig::accelerated")]
    pub kernel: KernelConfig,
    /// Parametric regression instead of the kernel (simplified family).
    #[serde(default)]
    pub regression: Option<BasisSpec>,
    /// Extraction grid; 41 points over [0.3, 2] when absent.
    #[serde(default)]
    pub moneyness: Option<Vec<f64>>,
    /// Extraction bandwidth; `particles^{-1/10}` when absent.
    #[serde(default)]
    pub bandwidth: Option<f64>,
    /// Smile grid for the particle and independent-path smiles.
    #[serde(default)]
    pub smile_moneyness: Option<Vec<f64>>,
    #[serde(default)]
    pub estimator: Estimator,
    /// Second stage: independent paths driven by the extracted surface.
    #[serde(default)]
    pub independent_paths: Option<usize>,
}

#[derive(Debug, Clone, Deserialize, PartialEq)]
#[serde(deny_unknown_fields)]
pub struct SmileConfig {
    /// `index`, `reconstructed_index`, `stock_<j>`, `limit_index` or `limit_stock_<j>`.
    pub underlying: String,
    pub moneyness: Vec<f64>,
    #[serde(default)]
    pub estimator: Estimator,
}

#[derive(Debug, Clone, Deserialize, PartialEq)]
#[serde(deny_unknown_fields)]
pub struct WorstOfConfig {
    /// Strikes on the worst normalized performance `min_j S^j_T / S^j_0`.
    pub strikes: Vec<f64>,
    /// 1-based stock ids; all recorded stocks when absent.
    #[serde(default)]
    pub stocks: Option<Vec<usize>>,
}

/// An explicit list of nodes or `{ from, to, points }` evenly spaced.
#[derive(Debug, Clone, Deserialize, PartialEq)]
#[serde(untagged)]
pub enum Grid {
    List(Vec<f64>),
    Range { from: f64, to: f64, points: usize },
}

impl Grid {
    pub fn nodes(&self) -> Vec<f64> {
        match self {
            Grid::List(v) => v.clone(),
            Grid::Range { from, to, points } => linspace(*from, *to, *points),
        }
    }
}

#[derive(Debug, Clone, Deserialize, PartialEq)]
#[serde(deny_unknown_fields)]
pub struct DupireConfig {
    pub spot: f64,
    pub rate: f64,
    #[serde(default)]
    pub dividend: f64,
    /// Call price grid (first header cell `strike`).
    #[serde(default)]
    pub prices: Option<PathBuf>,
    /// Synthetic lognormal prices on `times` x `strikes` instead of a file.
    #[serde(default)]
    pub lognormal_vol: Option<f64>,
    #[serde(default)]
    pub times: Option<Grid>,
    #[serde(default)]
    pub strikes: Option<Grid>,
    #[serde(default = "default_cap")]
    pub cap: f64,
}

fn default_cap() -> f64 {
    crate::surface::DEFAULT_CAP
}

#[derive(Debug, Clone, Deserialize, PartialEq)]
#[serde(deny_unknown_fields)]
pub struct TheoremsConfig {
    /// Moment orders of the bound report.
    #[serde(default = "default_orders")]
    pub orders: Vec<u32>,
    /// Moment order of the convergence study.
    #[serde(default = "default_study_order")]
    pub study_order: u32,
    pub sizes: Vec<usize>,
    pub paths: usize,
    pub steps: usize,
    #[serde(default = "one")]
    pub beta: f64,
    #[serde(default)]
    pub delta: f64,
    /// Surface constants; estimated from the surfaces when absent.
    #[serde(default)]
    pub constants: Option<BoundConstants>,
}

fn default_orders() -> Vec<u32> {
    vec![1, 2]
}
fn default_study_order() -> u32 {
    1
}

#[derive(Debug, Clone, Deserialize, PartialEq)]
#[serde(deny_unknown_fields)]
pub struct RunConfig {
    pub seed: u64,
    #[serde(default)]
    pub model: Option<ModelConfig>,
    #[serde(default)]
    pub simulate: Option<SimulateConfig>,
    #[serde(default)]
    pub calibrate: Option<CalibrateConfig>,
    #[serde(default)]
    pub smile: Option<SmileConfig>,
    #[serde(default)]
    pub worst_of: Option<WorstOfConfig>,
    #[serde(default)]
    pub dupire: Option<DupireConfig>,
    #[serde(default)]
    pub theorems: Option<TheoremsConfig>,
    #[serde(default)]
    pub budget: Option<CostGuard>,
    /// Directory that relative paths are resolved against.
    #[serde(skip)]
    pub base_dir: PathBuf,
}

impl RunConfig {
    pub fn parse(text: &str, base_dir: &Path, origin: &Path) -> Result<Self> {
        let mut c: RunConfig = toml::from_str(text).map_err(|e| Error::Parse {
            path: origin.to_path_buf(),
            message: e.to_string(),
        })?;
        c.base_dir = base_dir.to_path_buf();
        Ok(c)
    }

    pub fn from_file(path: &Path) -> Result<Self> {
        let text = fs::read_to_string(path).map_err(|e| Error::Io {
            path: path.to_path_buf(),
            source: e,
        })?;
        let base = path.parent().map(Path::to_path_buf).unwrap_or_default();
        Self::parse(&text, &base, path)
    }

    pub fn section<'a, T>(&self, name: &str, s: &'a Option<T>) -> Result<&'a T> {
        s.as_ref()
            .ok_or_else(|| Error::validation(name, format!("the [{name}] section is required")))
    }
}
