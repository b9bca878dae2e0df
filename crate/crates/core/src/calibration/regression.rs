//! Least-squares conditional expectation on a finite basis.

use nalgebra::{DMatrix, DVector};

use crate::error::{Error, Result};

/// A scalar basis function of the conditioning level.
#[derive(Debug, Clone, Copy, PartialEq, serde::Deserialize, serde::Serialize)]
#[serde(rename_all = "snake_case", tag = "kind")]
pub enum BasisFunction {
    /// `x^power`
    Monomial { power: u32 },
    /// `ln(x / reference)^power`
    LogMonomial { power: u32, reference: f64 },
}

impl BasisFunction {
    #[inline]
    pub fn eval(&self, x: f64) -> f64 {
        match *self {
            BasisFunction::Monomial { power } => x.powi(power as i32),
            BasisFunction::LogMonomial { power, reference } => (x / reference).ln().powi(power as i32),
        }
    }

    pub fn name(&self) -> String {
        match *self {
            BasisFunction::Monomial { power } => format!("x^{power}"),
            BasisFunction::LogMonomial { power, .. } => format!("log_moneyness^{power}"),
        }
    }
}

#[derive(Debug, Clone, PartialEq, serde::Deserialize, serde::Serialize)]
pub struct BasisSpec {
    pub functions: Vec<BasisFunction>,
}

impl BasisSpec {
    /// `1, z, ..., z^degree` with `z = ln(x / reference)`.
    pub fn log_polynomial(degree: u32, reference: f64) -> Self {
        Self {
            functions: (0..=degree)
                .map(|power| BasisFunction::LogMonomial { power, reference })
                .collect(),
        }
    }

    /// `1, x, ..., x^degree`.
    pub fn polynomial(degree: u32) -> Self {
        Self {
            functions: (0..=degree).map(|power| BasisFunction::Monomial { power }).collect(),
        }
    }

    pub fn len(&self) -> usize {
        self.functions.len()
    }

    pub fn is_empty(&self) -> bool {
        self.functions.is_empty()
    }

    pub fn eval(&self, coefficients: &[f64], x: f64) -> f64 {
        self.functions
            .iter()
            .zip(coefficients)
            .map(|(f, a)| a * f.eval(x))
            .sum()
    }

    pub fn design(&self, xs: &[f64]) -> DMatrix<f64> {
        DMatrix::from_fn(xs.len(), self.len(), |i, l| self.functions[l].eval(xs[i]))
    }
}

/// Relative tolerance below which a column counts as a combination of the previous ones.
const RANK_TOLERANCE: f64 = 1e-8;

/// Coefficients minimizing `sum_i (y_i - sum_l a_l f_l(x_i))^2`.
pub fn fit_parametric(xs: &[f64], ys: &[f64], basis: &BasisSpec) -> Result<Vec<f64>> {
    if basis.is_empty() {
        return Err(Error::validation("basis", "at least one basis function is required"));
    }
    if xs.len() != ys.len() {
        return Err(Error::validation("ys", "length differs from xs"));
    }
    if xs.len() < basis.len() {
        return Err(Error::validation(
            "xs",
            format!("{} samples cannot determine {} coefficients", xs.len(), basis.len()),
        ));
    }
    let x = basis.design(xs);
    if x.iter().any(|v| !v.is_finite()) {
        return Err(Error::Numerical("basis evaluates to a non-finite value".into()));
    }
    let offending = dependent_columns(&x);
    if !offending.is_empty() {
        return Err(Error::RankDeficient(
            offending.iter().map(|&l| basis.functions[l].name()).collect(),
        ));
    }
    let y = DVector::from_column_slice(ys);
    let qr = x.qr();
    let qty = qr.q().transpose() * y;
    let coefficients = qr
        .r()
        .solve_upper_triangular(&qty)
        .ok_or_else(|| Error::Numerical("singular triangular factor".into()))?;
    Ok(coefficients.iter().copied().collect())
}

/// Columns that are, up to tolerance, linear combinations of earlier columns.
fn dependent_columns(x: &DMatrix<f64>) -> Vec<usize> {
    let mut basis: Vec<DVector<f64>> = Vec::new();
    let mut offending = Vec::new();
    for l in 0..x.ncols() {
        let col = x.column(l).into_owned();
        let norm = col.norm();
        if norm == 0.0 {
            offending.push(l);
            continue;
        }
        let mut v = col / norm;
        // two passes of Gram-Schmidt for stability
        for _ in 0..2 {
            for q in &basis {
                let c = q.dot(&v);
                v.axpy(-c, q, 1.0);
            }
        }
        let r = v.norm();
        if r <= RANK_TOLERANCE {
            offending.push(l);
        } else {
            basis.push(v / r);
        }
    }
    offending
}
