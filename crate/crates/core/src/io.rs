//! CSV emission and parsing with fixed headers.
//!
//! Numbers are written with 17 significant digits (`{:.16e}`) so files
//! round-trip exactly. Files are written to a temporary sibling and renamed
//! into place.
//!
//! Surface files: the first header cell names the level axis (`absolute` or
//! `moneyness:<reference>`), the remaining header cells are the level grid,
//! and every following row is a time followed by one value per level.

use std::fs;
use std::io::Write;
use std::path::{Path, PathBuf};

use crate::calibration::{CoverageReport, StepReport};
use crate::error::{Error, Result};
use crate::pricing::{McEstimate, SmileCurve};
use crate::sde::{PathEnsemble, Underlying};
use crate::surface::{LevelAxis, PriceSurface, VolSurface, DEFAULT_CAP};
use crate::theory::{BoundReport, Magnitude, StudyTable};

pub const SMILE_HEADER: &[&str] = &["moneyness", "implied_vol", "price", "stderr", "status"];
pub const REPORT_HEADER: &[&str] = &["step", "time", "clamp_count", "clamp_mass", "min_eta", "max_eta", "interactions"];
pub const COVERAGE_HEADER: &[&str] = &["time", "moneyness"];
pub const SUMMARY_HEADER: &[&str] = &[
    "asset",
    "initial",
    "mean",
    "stderr",
    "discounted_mean",
    "discounted_stderr",
    "min",
    "max",
    "floor_hits",
];
pub const WORST_OF_HEADER: &[&str] = &["strike", "price", "stderr"];
pub const BOUNDS_HEADER: &[&str] = &["p", "quantity", "value"];
pub const STUDY_HEADER: &[&str] = &[
    "m",
    "seed",
    "p_w",
    "p_beta",
    "p_delta",
    "index_distance",
    "index_stderr",
    "stock_distance",
    "stock_stderr",
    "theorem1",
    "theorem2",
    "flagged",
];
pub const SLOPES_HEADER: &[&str] = &["p", "index_slope", "stock_slope"];

#[inline]
pub fn fmt_num(x: f64) -> String {
    format!("{x:.16e}")
}

fn opt_num(x: Option<f64>) -> String {
    x.map(fmt_num).unwrap_or_default()
}

fn io_err(path: &Path, source: std::io::Error) -> Error {
    Error::Io {
        path: path.to_path_buf(),
        source,
    }
}

/// Writes `bytes` to `path` through a temporary file in the same directory.
pub fn write_atomic(path: &Path, bytes: &[u8]) -> Result<()> {
    let dir = match path.parent() {
        Some(d) if !d.as_os_str().is_empty() => d.to_path_buf(),
        _ => PathBuf::from("."),
    };
    fs::create_dir_all(&dir).map_err(|e| io_err(&dir, e))?;
    let mut tmp = tempfile::NamedTempFile::new_in(&dir).map_err(|e| io_err(&dir, e))?;
    tmp.write_all(bytes).map_err(|e| io_err(path, e))?;
    tmp.persist(path).map_err(|e| io_err(path, e.error))?;
    Ok(())
}

/// A CSV table built in memory, then written atomically.
pub struct Table {
    writer: csv::Writer<Vec<u8>>,
}

impl Table {
    pub fn new<S: AsRef<str>>(header: &[S]) -> Self {
        let mut writer = csv::Writer::from_writer(Vec::new());
        writer
            .write_record(header.iter().map(|h| h.as_ref()))
            .expect("writing to memory");
        Self { writer }
    }

    pub fn row<S: AsRef<str>>(&mut self, cells: &[S]) {
        self.writer
            .write_record(cells.iter().map(|c| c.as_ref()))
            .expect("writing to memory");
    }

    pub fn into_bytes(self) -> Vec<u8> {
        self.writer.into_inner().expect("writing to memory")
    }

    pub fn write(self, path: &Path) -> Result<()> {
        write_atomic(path, &self.into_bytes())
    }
}

fn axis_label(axis: LevelAxis) -> String {
    match axis {
        LevelAxis::Absolute => "absolute".into(),
        LevelAxis::Moneyness { reference } => format!("moneyness:{}", fmt_num(reference)),
    }
}

pub fn surface_table(surface: &VolSurface) -> Table {
    let mut header = vec![axis_label(surface.axis())];
    header.extend(surface.levels().iter().map(|&l| fmt_num(l)));
    let mut t = Table::new(&header);
    for (i, &time) in surface.times().iter().enumerate() {
        let mut row = vec![fmt_num(time)];
        row.extend((0..surface.levels().len()).map(|j| fmt_num(surface.node(i, j))));
        t.row(&row);
    }
    t
}

pub fn write_surface_csv(surface: &VolSurface, path: &Path) -> Result<()> {
    surface_table(surface).write(path)
}

fn parse_num(path: &Path, cell: &str, what: &str) -> Result<f64> {
    cell.trim().parse::<f64>().map_err(|_| Error::Parse {
        path: path.to_path_buf(),
        message: format!("{what}: '{cell}' is not a number"),
    })
}

/// Axis, level grid, time grid and row-major values of a gridded CSV.
type Grid = (String, Vec<f64>, Vec<f64>, Vec<f64>);

fn read_grid(path: &Path) -> Result<Grid> {
    let text = fs::read_to_string(path).map_err(|e| io_err(path, e))?;
    let mut reader = csv::ReaderBuilder::new().has_headers(false).from_reader(text.as_bytes());
    let parse_err = |message: String| Error::Parse {
        path: path.to_path_buf(),
        message,
    };
    let mut records = reader.records();
    let header = records
        .next()
        .ok_or_else(|| parse_err("empty file".into()))?
        .map_err(|e| parse_err(e.to_string()))?;
    let label = header.get(0).unwrap_or_default().trim().to_string();
    let levels = header
        .iter()
        .skip(1)
        .map(|c| parse_num(path, c, "level"))
        .collect::<Result<Vec<_>>>()?;
    let mut times = Vec::new();
    let mut values = Vec::new();
    for (row, rec) in records.enumerate() {
        let rec = rec.map_err(|e| parse_err(e.to_string()))?;
        if rec.len() != levels.len() + 1 {
            return Err(parse_err(format!(
                "row {} has {} cells, expected {}",
                row + 2,
                rec.len(),
                levels.len() + 1
            )));
        }
        times.push(parse_num(path, &rec[0], "time")?);
        for c in rec.iter().skip(1) {
            values.push(parse_num(path, c, "value")?);
        }
    }
    Ok((label, levels, times, values))
}

pub fn read_surface_csv(path: &Path) -> Result<VolSurface> {
    let (label, levels, times, values) = read_grid(path)?;
    let axis = if label == "absolute" {
        LevelAxis::Absolute
    } else if let Some(r) = label.strip_prefix("moneyness:") {
        LevelAxis::Moneyness {
            reference: parse_num(path, r, "moneyness reference")?,
        }
    } else {
        return Err(Error::Parse {
            path: path.to_path_buf(),
            message: format!("unknown level axis '{label}'"),
        });
    };
    let cap = values.iter().copied().fold(DEFAULT_CAP, f64::max);
    VolSurface::new(times, levels, values, axis, cap)
}

/// Call prices in the surface layout; the first header cell must be `strike`.
pub fn read_price_csv(path: &Path, spot: f64, rate: f64, dividend: f64) -> Result<PriceSurface> {
    let (label, strikes, times, prices) = read_grid(path)?;
    if label != "strike" {
        return Err(Error::Parse {
            path: path.to_path_buf(),
            message: format!("price grids start with 'strike', found '{label}'"),
        });
    }
    PriceSurface::new(times, strikes, prices, spot, rate, dividend)
}

pub fn smile_table(curve: &SmileCurve) -> Table {
    let mut t = Table::new(SMILE_HEADER);
    for p in &curve.points {
        t.row(&[
            fmt_num(p.moneyness),
            opt_num(p.implied_vol),
            fmt_num(p.price),
            fmt_num(p.stderr),
            p.status.as_str().to_string(),
        ]);
    }
    t
}

pub fn report_table(reports: &[StepReport]) -> Table {
    let mut t = Table::new(REPORT_HEADER);
    for r in reports {
        t.row(&[
            r.step.to_string(),
            fmt_num(r.time),
            r.clamp_count.to_string(),
            fmt_num(r.clamp_mass),
            fmt_num(r.min_eta),
            fmt_num(r.max_eta),
            r.interactions.to_string(),
        ]);
    }
    t
}

pub fn coverage_table(report: &CoverageReport) -> Table {
    let mut t = Table::new(COVERAGE_HEADER);
    for (time, m) in &report.filled {
        t.row(&[fmt_num(*time), fmt_num(*m)]);
    }
    t
}

fn underlyings(ensemble: &PathEnsemble) -> Vec<Underlying> {
    let mut u = Vec::new();
    if ensemble.index.is_some() {
        u.push(Underlying::Index);
    }
    if ensemble.reconstructed_index.is_some() {
        u.push(Underlying::ReconstructedIndex);
    }
    u.extend(ensemble.stocks.iter().map(|s| Underlying::Stock(s.id)));
    if let Some(c) = &ensemble.companion {
        u.push(Underlying::CompanionIndex);
        u.extend(c.stocks.iter().map(|s| Underlying::CompanionStock(s.id)));
    }
    u
}

/// Terminal statistics per underlying.
pub fn summary_table(ensemble: &PathEnsemble) -> Result<Table> {
    let mut t = Table::new(SUMMARY_HEADER);
    let df = (-ensemble.rate * ensemble.grid.horizon).exp();
    for u in underlyings(ensemble) {
        let (_, initial, _) = ensemble.series(u)?;
        let terminal = ensemble.terminal(u)?;
        let n = terminal.len() as f64;
        let mean = terminal.iter().sum::<f64>() / n;
        let var = if terminal.len() > 1 {
            terminal.iter().map(|x| (x - mean).powi(2)).sum::<f64>() / (n - 1.0)
        } else {
            0.0
        };
        let stderr = (var / n).sqrt();
        t.row(&[
            u.to_string(),
            fmt_num(initial),
            fmt_num(mean),
            fmt_num(stderr),
            fmt_num(df * mean),
            fmt_num(df * stderr),
            fmt_num(terminal.iter().copied().fold(f64::INFINITY, f64::min)),
            fmt_num(terminal.iter().copied().fold(f64::NEG_INFINITY, f64::max)),
            ensemble.clamp_count.to_string(),
        ]);
    }
    Ok(t)
}

/// Every path and step: `path, step, time, index, stock_1..`.
pub fn dump_table(ensemble: &PathEnsemble) -> Result<Table> {
    let mut header = vec!["path".to_string(), "step".into(), "time".into(), "index".into()];
    header.extend(ensemble.stocks.iter().map(|s| format!("stock_{}", s.id + 1)));
    let mut t = Table::new(&header);
    let index = ensemble.index.as_ref().or(ensemble.reconstructed_index.as_ref());
    let w = ensemble.width();
    for p in 0..ensemble.paths {
        for k in 0..w {
            let mut row = vec![p.to_string(), k.to_string(), fmt_num(ensemble.grid.time(k))];
            row.push(index.map(|i| fmt_num(i.levels[p * w + k])).unwrap_or_default());
            row.extend(ensemble.stocks.iter().map(|s| fmt_num(s.levels[p * w + k])));
            t.row(&row);
        }
    }
    Ok(t)
}

pub fn worst_of_table(rows: &[(f64, McEstimate)]) -> Table {
    let mut t = Table::new(WORST_OF_HEADER);
    for (k, e) in rows {
        t.row(&[fmt_num(*k), fmt_num(e.price), fmt_num(e.stderr)]);
    }
    t
}

/// Full precision when the value fits in `f64`, otherwise a 17-digit mantissa
/// with an unbounded exponent.
fn fmt_magnitude(m: Magnitude) -> String {
    let v = m.value();
    if v.is_finite() && (m.is_zero() || v > 0.0) {
        fmt_num(v)
    } else {
        format!("{m:.16}")
    }
}

/// One row per quantity; magnitudes in scientific notation of any exponent.
pub fn bounds_table(reports: &[BoundReport]) -> Table {
    let mut t = Table::new(BOUNDS_HEADER);
    for r in reports {
        let p = r.p.to_string();
        let mut put = |q: &str, v: String| t.row(&[p.clone(), q.to_string(), v]);
        put("p_w", fmt_num(r.metrics.p_w));
        put("p_beta", fmt_num(r.metrics.p_beta));
        put("p_delta", fmt_num(r.metrics.p_delta));
        put("k_p", fmt_num(r.k_p));
        put("k_b", fmt_num(r.constants.k_b));
        put("k_sigma", fmt_num(r.constants.k_sigma));
        put("k_eta", fmt_num(r.constants.k_eta));
        put("k_lip", fmt_num(r.constants.k_lip));
        put("c_p", fmt_magnitude(r.c_p));
        put("c_t", fmt_magnitude(r.c_t));
        put("c_tilde", fmt_magnitude(r.c_tilde));
        put("theorem1", fmt_magnitude(r.theorem1));
        for (j, (c, b)) in r.c_tilde_j.iter().zip(&r.theorem2).enumerate() {
            put(&format!("c_tilde_stock_{}", j + 1), fmt_magnitude(*c));
            put(&format!("theorem2_stock_{}", j + 1), fmt_magnitude(*b));
        }
        put("reconstructed", fmt_magnitude(r.reconstructed));
    }
    t
}

pub fn study_table(table: &StudyTable) -> Table {
    let mut t = Table::new(STUDY_HEADER);
    for r in &table.rows {
        t.row(&[
            r.m.to_string(),
            r.seed.to_string(),
            fmt_num(r.metrics.p_w),
            fmt_num(r.metrics.p_beta),
            fmt_num(r.metrics.p_delta),
            fmt_num(r.index_distance),
            fmt_num(r.index_stderr),
            fmt_num(r.stock_distance),
            fmt_num(r.stock_stderr),
            fmt_num(r.theorem1),
            fmt_num(r.theorem2),
            r.flagged.to_string(),
        ]);
    }
    t
}

pub fn slopes_table(tables: &[StudyTable]) -> Table {
    let mut t = Table::new(SLOPES_HEADER);
    for s in tables {
        t.row(&[s.p.to_string(), opt_num(s.index_slope), opt_num(s.stock_slope)]);
    }
    t
}
