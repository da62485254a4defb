//! Incremental ordinary least squares.
//!
//! A [`RegressionFit`] keeps only the sufficient statistics `X'X`, `X'y`,
//! `y'y` and `n`, so absorbing a batch costs `O(rows * p^2)` and two fits over
//! disjoint data merge by addition.

use std::sync::OnceLock;

use thiserror::Error;

/// Factorization pivots below this fraction of the column's own squared norm mark
/// the design as rank deficient.
pub const RANK_TOLERANCE: f64 = 1e-12;

#[derive(Debug, Clone, PartialEq, Error)]
pub enum FitError {
    #[error("dimension mismatch: expected {expected} predictors, got {got}")]
    DimensionMismatch { expected: usize, got: usize },
    #[error("non-finite value in observation")]
    NonFinite,
    #[error("cross-product matrix is singular (pivot ratio {pivot_ratio:.3e} at column {column})")]
    RankDeficient { column: usize, pivot_ratio: f64 },
    #[error("insufficient data: n = {n} must exceed p = {p}")]
    InsufficientData { n: usize, p: usize },
}

#[derive(Debug, Clone, PartialEq)]
pub struct Observation {
    pub y: f64,
    pub x: Vec<f64>,
}

impl Observation {
    pub fn new(y: f64, x: Vec<f64>) -> Result<Self, FitError> {
        if !y.is_finite() || x.iter().any(|v| !v.is_finite()) {
            return Err(FitError::NonFinite);
        }
        Ok(Self { y, x })
    }

    pub fn p(&self) -> usize {
        self.x.len()
    }
}

/// Least-squares solution at the current sample size.
#[derive(Debug, Clone, PartialEq)]
pub struct Solution {
    pub beta: Vec<f64>,
    pub s2: f64,
    /// Set when rounding produced a slightly negative residual sum of squares
    /// and `s2` was clamped to zero.
    pub s2_clamped: bool,
}

#[derive(Debug, Clone)]
pub struct RegressionFit {
    p: usize,
    n: usize,
    // row-major p x p, both triangles kept
    xtx: Vec<f64>,
    xty: Vec<f64>,
    yty: f64,
    cached: OnceLock<Solution>,
}

impl RegressionFit {
    /// Empty fit for `p` parameters.
    pub fn new(p: usize) -> Self {
        Self {
            p,
            n: 0,
            xtx: vec![0.0; p * p],
            xty: vec![0.0; p],
            yty: 0.0,
            cached: OnceLock::new(),
        }
    }

    pub fn from_rows(rows: &[Observation], p: usize) -> Result<Self, FitError> {
        let mut fit = Self::new(p);
        fit.update(rows)?;
        Ok(fit)
    }

    /// Absorbs `rows`. The batch is checked up front, so on error the fit is
    /// left untouched.
    pub fn update(&mut self, rows: &[Observation]) -> Result<(), FitError> {
        if let Some(bad) = rows.iter().find(|r| r.x.len() != self.p) {
            return Err(FitError::DimensionMismatch {
                expected: self.p,
                got: bad.x.len(),
            });
        }
        if rows.is_empty() {
            return Ok(());
        }
        let p = self.p;
        for row in rows {
            for i in 0..p {
                let xi = row.x[i];
                self.xty[i] += xi * row.y;
                for j in i..p {
                    self.xtx[i * p + j] += xi * row.x[j];
                }
            }
            self.yty += row.y * row.y;
        }
        for i in 0..p {
            for j in 0..i {
                self.xtx[i * p + j] = self.xtx[j * p + i];
            }
        }
        self.n += rows.len();
        self.cached = OnceLock::new();
        Ok(())
    }

    pub fn with_rows(mut self, rows: &[Observation]) -> Result<Self, FitError> {
        self.update(rows)?;
        Ok(self)
    }

    /// Fit over the union of the data behind `self` and `other`.
    pub fn merge(&self, other: &RegressionFit) -> Result<RegressionFit, FitError> {
        if self.p != other.p {
            return Err(FitError::DimensionMismatch {
                expected: self.p,
                got: other.p,
            });
        }
        let add = |a: &[f64], b: &[f64]| a.iter().zip(b).map(|(x, y)| x + y).collect::<Vec<_>>();
        Ok(RegressionFit {
            p: self.p,
            n: self.n + other.n,
            xtx: add(&self.xtx, &other.xtx),
            xty: add(&self.xty, &other.xty),
            yty: self.yty + other.yty,
            cached: OnceLock::new(),
        })
    }

    pub fn n(&self) -> usize {
        self.n
    }
    pub fn p(&self) -> usize {
        self.p
    }
    pub fn xtx(&self) -> &[f64] {
        &self.xtx
    }
    pub fn xtx_at(&self, i: usize, j: usize) -> f64 {
        self.xtx[i * self.p + j]
    }
    pub fn xty(&self) -> &[f64] {
        &self.xty
    }
    pub fn yty(&self) -> f64 {
        self.yty
    }

    /// Square-root-free `L D L'` factorization: unit lower `L` with the
    /// pivots `D` stored on its diagonal.
    fn factor(&self) -> Result<Vec<f64>, FitError> {
        let p = self.p;
        let mut l = vec![0.0; p * p];
        for j in 0..p {
            let diag = self.xtx[j * p + j];
            let mut d = diag;
            for k in 0..j {
                d -= l[j * p + k] * l[j * p + k] * l[k * p + k];
            }
            let ratio = if diag > 0.0 { d / diag } else { 0.0 };
            if ratio.is_nan() || ratio <= RANK_TOLERANCE {
                return Err(FitError::RankDeficient {
                    column: j,
                    pivot_ratio: ratio,
                });
            }
            l[j * p + j] = d;
            for i in (j + 1)..p {
                let mut s = self.xtx[i * p + j];
                for k in 0..j {
                    s -= l[i * p + k] * l[j * p + k] * l[k * p + k];
                }
                l[i * p + j] = s / d;
            }
        }
        Ok(l)
    }

    fn factor_solve(&self, l: &[f64], rhs: &[f64]) -> Vec<f64> {
        let p = self.p;
        let mut z = rhs.to_vec();
        for i in 0..p {
            for k in 0..i {
                z[i] -= l[i * p + k] * z[k];
            }
        }
        for i in 0..p {
            z[i] /= l[i * p + i];
        }
        for i in (0..p).rev() {
            for k in (i + 1)..p {
                z[i] -= l[k * p + i] * z[k];
            }
        }
        z
    }

    fn quad_form(&self, v: &[f64]) -> f64 {
        let p = self.p;
        (0..p)
            .map(|i| v[i] * (0..p).map(|j| self.xtx[i * p + j] * v[j]).sum::<f64>())
            .sum()
    }

    fn compute_solution(&self) -> Result<Solution, FitError> {
        if self.n <= self.p {
            return Err(FitError::InsufficientData {
                n: self.n,
                p: self.p,
            });
        }
        let l = self.factor()?;
        let beta = self.factor_solve(&l, &self.xty);
        // y'y - 2 b'X'y + b'X'Xb is second order in the solve error, unlike y'y - b'X'y.
        let cross: f64 = beta.iter().zip(&self.xty).map(|(b, v)| b * v).sum();
        let rss = self.yty - 2.0 * cross + self.quad_form(&beta);
        let s2 = rss / (self.n - self.p) as f64;
        let s2_clamped = s2 < 0.0;
        Ok(Solution {
            beta,
            s2: s2.max(0.0),
            s2_clamped,
        })
    }

    /// Solves the normal equations; cached until the next update.
    pub fn solve(&self) -> Result<&Solution, FitError> {
        if let Some(sol) = self.cached.get() {
            return Ok(sol);
        }
        let sol = self.compute_solution()?;
        Ok(self.cached.get_or_init(|| sol))
    }

    fn margin(&self, beta_true: &[f64]) -> Result<Vec<f64>, FitError> {
        if beta_true.len() != self.p {
            return Err(FitError::DimensionMismatch {
                expected: self.p,
                got: beta_true.len(),
            });
        }
        let sol = self.solve()?;
        Ok(sol.beta.iter().zip(beta_true).map(|(b, t)| b - t).collect())
    }

    /// Loss `n^-1 (b - beta)' X'X (b - beta)`, whose expectation is `p sigma^2 / n`.
    pub fn loss(&self, beta_true: &[f64]) -> Result<f64, FitError> {
        let d = self.margin(beta_true)?;
        Ok(self.quad_form(&d) / self.n as f64)
    }

    /// Loss weighted by `(X'X)^-1` instead of `X'X`. Kept for comparison
    /// only; its expectation is not `p sigma^2 / n`.
    pub fn loss_inverse_weighted(&self, beta_true: &[f64]) -> Result<f64, FitError> {
        let d = self.margin(beta_true)?;
        let l = self.factor()?;
        let w = self.factor_solve(&l, &d);
        Ok(d.iter().zip(&w).map(|(a, b)| a * b).sum::<f64>() / self.n as f64)
    }

    /// Diagonal of `(X'X)^-1`.
    pub fn inverse_diagonal(&self) -> Result<Vec<f64>, FitError> {
        let l = self.factor()?;
        let mut e = vec![0.0; self.p];
        Ok((0..self.p)
            .map(|j| {
                e.iter_mut().for_each(|v| *v = 0.0);
                e[j] = 1.0;
                self.factor_solve(&l, &e)[j]
            })
            .collect())
    }

    /// Standard errors `sqrt(s2 * [(X'X)^-1]_jj)` for reporting.
    pub fn standard_errors(&self) -> Result<Vec<f64>, FitError> {
        let s2 = self.solve()?.s2;
        Ok(self
            .inverse_diagonal()?
            .into_iter()
            .map(|d| (s2 * d).sqrt())
            .collect())
    }
}

pub fn fit_init(rows: &[Observation], p: usize) -> Result<RegressionFit, FitError> {
    RegressionFit::from_rows(rows, p)
}

pub fn fit_update(fit: RegressionFit, rows: &[Observation]) -> Result<RegressionFit, FitError> {
    fit.with_rows(rows)
}

pub fn fit_solve(fit: &RegressionFit) -> Result<(Vec<f64>, f64), FitError> {
    fit.solve().map(|s| (s.beta.clone(), s.s2))
}

pub fn loss_value(beta_true: &[f64], fit: &RegressionFit) -> Result<f64, FitError> {
    fit.loss(beta_true)
}
