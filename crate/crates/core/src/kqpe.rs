//! Kernel estimate of the conditional CDF and the quantile partial effect derived from it.
//!
//! The conditional CDF is smoothed as
//! `F(y | x) = sum_i K_i S_i / sum_i K_i` with a Gaussian covariate kernel `K_i` and a
//! logistic step `S_i = logistic((y - y_i) / hy)`. The quantile partial effect along
//! covariate `j` is `-dF/dx_j / dF/dy`, using the exact derivatives of that expression.

use std::fmt::Write as _;

use ndarray::Array2;
use rand::{seq::index, SeedableRng};
use rand_chacha::ChaCha8Rng;

use crate::datasets::SampleMatrix;
use crate::error::{Error, Result};
use crate::scalar::{logistic, logistic_slope};
use crate::Real;

/// Lower bound applied to the smoothed conditional density before dividing by it.
pub const DENSITY_FLOOR: f64 = 1e-12;
pub const DEFAULT_MIN_ESS: f64 = 5.0;
pub const DEFAULT_TEST_SAMPLES: usize = 20;
pub const DEFAULT_TEST_LOCATIONS: usize = 20;
pub const DEFAULT_LOCATION_RANGE: f64 = 2.5;

#[derive(Debug, Clone, PartialEq)]
pub struct KernelConfig<T> {
    /// Covariate bandwidth, one per covariate.
    pub hx: Vec<T>,
    /// Response smoothing scale of the logistic step.
    pub hy: T,
    /// Minimum kernel mass at a test point for its estimates to count.
    pub min_ess: T,
}

impl<T: Real> KernelConfig<T> {
    pub fn validate(&self, covariates: usize) -> Result<()> {
        if self.hx.len() != covariates {
            return Err(Error::DimensionMismatch {
                expected: covariates,
                found: self.hx.len(),
            });
        }
        if self.hx.iter().any(|h| !(*h > T::zero()) || !h.is_finite()) || !(self.hy > T::zero()) || !self.hy.is_finite()
        {
            return Err(Error::InvalidConfig("bandwidths must be positive and finite".into()));
        }
        if !(self.min_ess >= T::one()) {
            return Err(Error::InvalidConfig("min_ess must be >= 1".into()));
        }
        Ok(())
    }

    /// Silverman-style rule `1.06 * sd * n^(-1/5)` for every dimension.
    pub fn silverman(sd_x: &[T], sd_y: T, n: usize) -> Self {
        let factor = T::lit(1.06 * (n as f64).powf(-0.2));
        KernelConfig {
            hx: sd_x.iter().map(|&s| factor * s).collect(),
            hy: factor * sd_y,
            min_ess: T::lit(DEFAULT_MIN_ESS),
        }
    }
}

/// Smoothed conditional CDF at one query with its analytic derivatives.
#[derive(Debug, Clone, PartialEq)]
pub struct CdfEval<T> {
    pub f: T,
    pub df_dy: T,
    pub grad_x: Vec<T>,
    /// Total covariate kernel mass `sum_i K_i`.
    pub ess: T,
    /// False when the kernel mass underflows.
    pub valid: bool,
}

/// Per-dimension Silverman bandwidths for regressing `target` on `covariates`.
pub fn default_bandwidths<T: Real>(
    samples: &SampleMatrix<T>,
    covariates: &[usize],
    target: usize,
) -> Result<KernelConfig<T>> {
    let mut sd_x = Vec::with_capacity(covariates.len());
    for &c in covariates.iter().chain(std::iter::once(&target)) {
        check_column(samples, c)?;
        let (_, sd) = samples.column_mean_sd(c);
        if !(sd > T::zero()) {
            return Err(Error::ZeroVariance {
                column: samples.names()[c].clone(),
            });
        }
        sd_x.push(sd);
    }
    let sd_y = sd_x.pop().expect("target pushed last");
    Ok(KernelConfig::silverman(&sd_x, sd_y, samples.n()))
}

fn check_column<T: Real>(samples: &SampleMatrix<T>, c: usize) -> Result<()> {
    if c >= samples.d() {
        return Err(Error::DimensionMismatch {
            expected: samples.d(),
            found: c + 1,
        });
    }
    Ok(())
}

/// Kernel weights at a fixed covariate point, shifted so the largest weight is 1.
struct Weights<T> {
    k: Vec<T>,
    /// `k_i * (x_ij - x_j) / hx_j^2`, row-major N x p.
    dk: Vec<T>,
    sum_k: T,
    sum_dk: Vec<T>,
    ess: T,
    valid: bool,
}

/// Conditional CDF estimator over fixed covariate / response columns.
struct KernelCdf<'a, T> {
    x: Array2<T>,
    y: Vec<T>,
    cfg: &'a KernelConfig<T>,
}

impl<'a, T: Real> KernelCdf<'a, T> {
    fn new(samples: &SampleMatrix<T>, covariates: &[usize], target: usize, cfg: &'a KernelConfig<T>) -> Result<Self> {
        for &c in covariates.iter().chain(std::iter::once(&target)) {
            check_column(samples, c)?;
        }
        if covariates.contains(&target) {
            return Err(Error::InvalidConfig("target cannot also be a covariate".into()));
        }
        cfg.validate(covariates.len())?;
        let x = samples.data().select(ndarray::Axis(1), covariates);
        let y = samples.column(target).to_vec();
        Ok(KernelCdf { x, y, cfg })
    }

    fn weights(&self, at: &[T]) -> Weights<T> {
        let n = self.y.len();
        let p = at.len();
        let half = T::lit(0.5);
        let inv_h2: Vec<T> = self.cfg.hx.iter().map(|h| T::one() / (*h * *h)).collect();
        let mut q: Vec<T> = Vec::with_capacity(n);
        for row in self.x.rows() {
            let mut s = T::zero();
            for j in 0..p {
                let u = row[j] - at[j];
                s += u * u * inv_h2[j];
            }
            q.push(s * half);
        }
        let qmin = q.iter().copied().fold(T::infinity(), T::min);
        let mut k = Vec::with_capacity(n);
        let mut dk = Vec::with_capacity(n * p);
        let mut sum_k = T::zero();
        let mut sum_dk = vec![T::zero(); p];
        for (row, qi) in self.x.rows().into_iter().zip(&q) {
            let ki = (qmin - *qi).exp();
            sum_k += ki;
            for j in 0..p {
                let g = ki * (row[j] - at[j]) * inv_h2[j];
                sum_dk[j] += g;
                dk.push(g);
            }
            k.push(ki);
        }
        // unshifted mass = exp(-qmin) * sum_k
        let log_ess = sum_k.ln() - qmin;
        let ess = log_ess.exp();
        let valid = log_ess.is_finite() && log_ess > T::min_positive_value().ln();
        Weights {
            k,
            dk,
            sum_k,
            sum_dk,
            ess,
            valid,
        }
    }

    fn eval(&self, w: &Weights<T>, y: T) -> CdfEval<T> {
        let p = w.sum_dk.len();
        let inv_hy = T::one() / self.cfg.hy;
        let mut num = T::zero();
        let mut dens = T::zero();
        let mut grad_num = vec![T::zero(); p];
        for (i, (&yi, &ki)) in self.y.iter().zip(&w.k).enumerate() {
            let z = (y - yi) * inv_hy;
            let s = logistic(z);
            num += ki * s;
            dens += ki * logistic_slope(z);
            let row = &w.dk[i * p..(i + 1) * p];
            for j in 0..p {
                grad_num[j] += row[j] * s;
            }
        }
        let f = num / w.sum_k;
        let grad_x = grad_num
            .iter()
            .zip(&w.sum_dk)
            .map(|(g, sd)| (*g - f * *sd) / w.sum_k)
            .collect();
        CdfEval {
            f: f.max(T::zero()).min(T::one()),
            df_dy: dens * inv_hy / w.sum_k,
            grad_x,
            ess: w.ess,
            valid: w.valid,
        }
    }
}

/// Evaluates the smoothed conditional CDF of column `target` given `covariates` at `(x, y)`.
pub fn cdf_hat<T: Real>(
    samples: &SampleMatrix<T>,
    covariates: &[usize],
    target: usize,
    x: &[T],
    y: T,
    config: &KernelConfig<T>,
) -> Result<CdfEval<T>> {
    if x.len() != covariates.len() {
        return Err(Error::DimensionMismatch {
            expected: covariates.len(),
            found: x.len(),
        });
    }
    let est = KernelCdf::new(samples, covariates, target, config)?;
    let w = est.weights(x);
    Ok(est.eval(&w, y))
}

#[derive(Debug, Clone, PartialEq)]
pub enum TestX<T> {
    /// Covariate values of these sample rows.
    Rows(Vec<usize>),
    /// Explicit covariate points in standardized units.
    Points(Vec<Vec<T>>),
}

/// Where the quantile partial effect is evaluated. Response locations are in standardized units.
#[derive(Debug, Clone, PartialEq)]
pub struct TestDesign<T> {
    pub x: TestX<T>,
    pub y: Vec<T>,
}

impl<T: Real> TestDesign<T> {
    /// `t` sample rows drawn without replacement and `m` evenly spaced locations on
    /// `[-half_range, half_range]`.
    pub fn sampled(n: usize, t: usize, m: usize, half_range: f64, seed: u64) -> Self {
        let mut rng = ChaCha8Rng::seed_from_u64(seed);
        let mut rows = index::sample(&mut rng, n, t.min(n)).into_vec();
        rows.sort_unstable();
        TestDesign {
            x: TestX::Rows(rows),
            y: linspace(-half_range, half_range, m),
        }
    }

    /// 20 drawn rows, 20 locations on [-2.5, 2.5].
    pub fn standard(n: usize, seed: u64) -> Self {
        Self::sampled(n, DEFAULT_TEST_SAMPLES, DEFAULT_TEST_LOCATIONS, DEFAULT_LOCATION_RANGE, seed)
    }
}

pub fn linspace<T: Real>(lo: f64, hi: f64, m: usize) -> Vec<T> {
    match m {
        0 => Vec::new(),
        1 => vec![T::lit(0.5 * (lo + hi))],
        _ => (0..m)
            .map(|i| T::lit(lo + (hi - lo) * i as f64 / (m - 1) as f64))
            .collect(),
    }
}

/// Estimated quantile partial effects on a test grid, in standardized units.
#[derive(Debug, Clone, PartialEq)]
pub struct QpeGrid<T> {
    pub covariates: Vec<usize>,
    pub target: usize,
    pub test_x: Vec<Vec<T>>,
    pub test_y: Vec<T>,
    /// One T x M matrix per covariate. Rows failing the coverage guard hold NaN.
    pub psi: Vec<Array2<T>>,
    pub valid: Vec<bool>,
    pub ess: Vec<T>,
    pub config: KernelConfig<T>,
}

impl<T: Real> QpeGrid<T> {
    /// Wraps externally computed effect matrices, e.g. analytic ones.
    pub fn from_psi(test_y: Vec<T>, psi: Vec<Array2<T>>, valid: Vec<bool>) -> Result<Self> {
        let rows = valid.len();
        for m in &psi {
            if m.dim() != (rows, test_y.len()) {
                return Err(Error::DimensionMismatch {
                    expected: rows * test_y.len(),
                    found: m.len(),
                });
            }
        }
        let p = psi.len();
        Ok(QpeGrid {
            covariates: (0..p).collect(),
            target: p,
            test_x: vec![vec![T::nan(); p]; rows],
            test_y,
            psi,
            ess: vec![T::nan(); rows],
            valid,
            config: KernelConfig {
                hx: vec![T::one(); p],
                hy: T::one(),
                min_ess: T::one(),
            },
        })
    }

    pub fn valid_count(&self) -> usize {
        self.valid.iter().filter(|&&v| v).count()
    }

    /// Rows `covariate,t,m,x...,y,psi,valid`.
    pub fn to_csv(&self, covariate_names: &[String]) -> String {
        let p = self.covariates.len();
        let mut out = String::from("covariate,t,m");
        for j in 0..p {
            let _ = write!(out, ",x{j}");
        }
        out.push_str(",y,psi,valid\n");
        for (i, psi) in self.psi.iter().enumerate() {
            let label = covariate_names.get(i).cloned().unwrap_or_else(|| i.to_string());
            for (t, x) in self.test_x.iter().enumerate() {
                for (m, y) in self.test_y.iter().enumerate() {
                    let _ = write!(out, "{label},{t},{m}");
                    for v in x {
                        let _ = write!(out, ",{v}");
                    }
                    let _ = writeln!(out, ",{y},{},{}", psi[[t, m]], self.valid[t]);
                }
            }
        }
        out
    }
}

/// Estimates the quantile partial effect of `target` given `covariates` on a test design.
///
/// The used columns are standardized first; a `None` config selects Silverman bandwidths on
/// the standardized data, a supplied config is read in standardized units.
pub fn qpe_grid<T: Real>(
    samples: &SampleMatrix<T>,
    covariates: &[usize],
    target: usize,
    design: &TestDesign<T>,
    config: Option<&KernelConfig<T>>,
) -> Result<QpeGrid<T>> {
    if design.y.is_empty() {
        return Err(Error::InvalidConfig("no test locations".into()));
    }
    if covariates.is_empty() {
        return Err(Error::InvalidConfig("no covariates".into()));
    }
    let mut cols = covariates.to_vec();
    cols.push(target);
    let std = samples.select(&cols)?.standardize()?.samples;
    let p = covariates.len();
    let local_cov: Vec<usize> = (0..p).collect();
    let owned;
    let cfg = match config {
        Some(c) => c,
        None => {
            owned = KernelConfig::silverman(&vec![T::one(); p], T::one(), std.n());
            &owned
        }
    };
    let est = KernelCdf::new(&std, &local_cov, p, cfg)?;
    let test_x: Vec<Vec<T>> = match &design.x {
        TestX::Rows(rows) => rows
            .iter()
            .map(|&r| {
                if r >= std.n() {
                    Err(Error::DimensionMismatch {
                        expected: std.n(),
                        found: r + 1,
                    })
                } else {
                    Ok((0..p).map(|j| std.data()[[r, j]]).collect())
                }
            })
            .collect::<Result<_>>()?,
        TestX::Points(pts) => {
            if let Some(bad) = pts.iter().find(|pt| pt.len() != p) {
                return Err(Error::DimensionMismatch {
                    expected: p,
                    found: bad.len(),
                });
            }
            pts.clone()
        }
    };
    if test_x.is_empty() {
        return Err(Error::InvalidConfig("no test samples".into()));
    }
    let floor = T::lit(DENSITY_FLOOR);
    let (t_len, m_len) = (test_x.len(), design.y.len());
    let mut psi = vec![Array2::from_elem((t_len, m_len), T::nan()); p];
    let mut valid = Vec::with_capacity(t_len);
    let mut ess = Vec::with_capacity(t_len);
    for (t, x) in test_x.iter().enumerate() {
        let w = est.weights(x);
        let ok = w.valid && w.ess >= cfg.min_ess;
        valid.push(ok);
        ess.push(w.ess);
        if !ok {
            continue;
        }
        for (m, &y) in design.y.iter().enumerate() {
            let e = est.eval(&w, y);
            let dens = e.df_dy.max(floor);
            for j in 0..p {
                psi[j][[t, m]] = -e.grad_x[j] / dens;
            }
        }
    }
    if !valid.iter().any(|&v| v) {
        return Err(Error::InsufficientCoverage);
    }
    Ok(QpeGrid {
        covariates: covariates.to_vec(),
        target,
        test_x,
        test_y: design.y.clone(),
        psi,
        valid,
        ess,
        config: cfg.clone(),
    })
}
