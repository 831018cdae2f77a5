//! Closed-form references: quantile partial effects of common functional causal models,
//! analytic scores of a heteroscedastic Gaussian family, and the CV of the squared QPE.
//!
//! Every effect here follows `psi = -dF/dx / dF/dy` evaluated on the true conditional CDF.

use std::fmt;
use std::sync::Arc;

use rand::{Rng, SeedableRng};
use rand_chacha::ChaCha8Rng;
use rand_distr::{Distribution, Gumbel, StandardNormal};

use crate::error::{Error, Result};
use crate::scalar::{logistic, softplus};

type ScalarFn = Arc<dyn Fn(f64) -> f64 + Send + Sync>;

/// A scalar function with its analytic derivative.
#[derive(Clone)]
pub struct Smooth {
    pub f: ScalarFn,
    pub df: ScalarFn,
}

impl Smooth {
    pub fn new(f: impl Fn(f64) -> f64 + Send + Sync + 'static, df: impl Fn(f64) -> f64 + Send + Sync + 'static) -> Self {
        Smooth {
            f: Arc::new(f),
            df: Arc::new(df),
        }
    }

    pub fn constant(c: f64) -> Self {
        Smooth::new(move |_| c, |_| 0.0)
    }

    pub fn linear(intercept: f64, slope: f64) -> Self {
        Smooth::new(move |x| intercept + slope * x, move |_| slope)
    }

    pub fn eval(&self, x: f64) -> f64 {
        (self.f)(x)
    }

    pub fn deriv(&self, x: f64) -> f64 {
        (self.df)(x)
    }
}

impl fmt::Debug for Smooth {
    fn fmt(&self, f: &mut fmt::Formatter<'_>) -> fmt::Result {
        f.write_str("Smooth")
    }
}

/// An invertible post-nonlinear map `g` with derivative and inverse.
#[derive(Clone)]
pub struct Invertible {
    pub g: Smooth,
    pub inv: ScalarFn,
}

impl Invertible {
    /// `g = tanh`, invertible on `(-1, 1)`.
    pub fn tanh() -> Self {
        Invertible {
            g: Smooth::new(f64::tanh, |u| 1.0 - u.tanh().powi(2)),
            inv: Arc::new(f64::atanh),
        }
    }

    fn inverse(&self, y: f64) -> Result<f64> {
        let u = (self.inv)(y);
        if u.is_finite() {
            Ok(u)
        } else {
            Err(Error::Domain(format!("y = {y} is outside the range of the post-nonlinear map")))
        }
    }
}

impl fmt::Debug for Invertible {
    fn fmt(&self, f: &mut fmt::Formatter<'_>) -> fmt::Result {
        f.write_str("Invertible")
    }
}

#[derive(Debug, Clone)]
pub enum AnalyticModel {
    /// `Y = cX + U`, `U` standard Gumbel.
    Lingam { c: f64 },
    /// `Y = a(X) + U`
    Anm { a: Smooth },
    /// `Y = a(X) + b(X) U`
    Hnm { a: Smooth, b: Smooth },
    /// `Y = g(a(X) + U)`
    PnlAnm { a: Smooth, g: Invertible },
    /// `Y = g(a(X) + b(X) U)`
    PnlHnm { a: Smooth, b: Smooth, g: Invertible },
    /// `Y | X ~ N(mu(X), sigma(X)^2)`
    HeteroGauss { mu: Smooth, sigma: Smooth },
    /// `X = Z + W`, `Y = exp(X^2 + Z + U)` with `Z, W, U` standard normal.
    ExampleA1,
    /// `X = Z + W`, `Y = exp(X + Z + U^2)` with `Z, W, U` standard normal.
    ExampleA2,
}

fn positive(v: f64, what: &str, x: f64) -> Result<f64> {
    if v > 0.0 && v.is_finite() {
        Ok(v)
    } else {
        Err(Error::Domain(format!("{what}({x}) = {v} must be positive")))
    }
}

impl AnalyticModel {
    /// The heteroscedastic example `Y = X^3 + (1 + tanh((X - 1)^2)) U`.
    pub fn fig1_hnm() -> Self {
        AnalyticModel::Hnm {
            a: Smooth::new(|x| x.powi(3), |x| 3.0 * x * x),
            b: Smooth::new(
                |x| 1.0 + ((x - 1.0) * (x - 1.0)).tanh(),
                |x| {
                    let t = ((x - 1.0) * (x - 1.0)).tanh();
                    (1.0 - t * t) * 2.0 * (x - 1.0)
                },
            ),
        }
    }

    pub fn name(&self) -> &'static str {
        match self {
            AnalyticModel::Lingam { .. } => "lingam",
            AnalyticModel::Anm { .. } => "anm",
            AnalyticModel::Hnm { .. } => "hnm",
            AnalyticModel::PnlAnm { .. } => "pnl-anm",
            AnalyticModel::PnlHnm { .. } => "pnl-hnm",
            AnalyticModel::HeteroGauss { .. } => "heterogauss",
            AnalyticModel::ExampleA1 => "example-a1",
            AnalyticModel::ExampleA2 => "example-a2",
        }
    }

    /// Closed-form quantile partial effect at `(x, y)`.
    pub fn qpe(&self, x: f64, y: f64) -> Result<f64> {
        Ok(match self {
            AnalyticModel::Lingam { c } => *c,
            AnalyticModel::Anm { a } => a.deriv(x),
            AnalyticModel::Hnm { a, b } => {
                let bv = positive(b.eval(x), "b", x)?;
                let db = b.deriv(x);
                (a.deriv(x) - a.eval(x) / bv * db) + db / bv * y
            }
            AnalyticModel::PnlAnm { a, g } => {
                let u = g.inverse(y)?;
                g.g.deriv(u) * a.deriv(x)
            }
            AnalyticModel::PnlHnm { a, b, g } => {
                let u = g.inverse(y)?;
                let bv = positive(b.eval(x), "b", x)?;
                g.g.deriv(u) * (a.deriv(x) + b.deriv(x) * (u - a.eval(x)) / bv)
            }
            AnalyticModel::HeteroGauss { mu, sigma } => {
                let s = positive(sigma.eval(x), "sigma", x)?;
                mu.deriv(x) + (y - mu.eval(x)) * sigma.deriv(x) / s
            }
            AnalyticModel::ExampleA1 => (2.0 * x + 0.5) * y,
            AnalyticModel::ExampleA2 => 1.5 * y,
        })
    }

    /// Draws `Y` given `X = x` from the structural form.
    pub fn sample_conditional<R: Rng + ?Sized>(&self, x: f64, rng: &mut R) -> Result<f64> {
        let n: f64 = StandardNormal.sample(rng);
        Ok(match self {
            AnalyticModel::Lingam { c } => {
                let u: f64 = Gumbel::new(0.0, 1.0).expect("valid").sample(rng);
                c * x + u
            }
            AnalyticModel::Anm { a } => a.eval(x) + n,
            AnalyticModel::Hnm { a, b } => a.eval(x) + positive(b.eval(x), "b", x)? * n,
            AnalyticModel::PnlAnm { a, g } => g.g.eval(a.eval(x) + n),
            AnalyticModel::PnlHnm { a, b, g } => g.g.eval(a.eval(x) + positive(b.eval(x), "b", x)? * n),
            AnalyticModel::HeteroGauss { mu, sigma } => mu.eval(x) + positive(sigma.eval(x), "sigma", x)? * n,
            AnalyticModel::ExampleA1 | AnalyticModel::ExampleA2 => {
                // Z | X = x is N(x/2, 1/2) because X = Z + W with Z, W independent standard normal.
                let u: f64 = StandardNormal.sample(rng);
                let z = 0.5 * x + 0.5f64.sqrt() * n;
                if matches!(self, AnalyticModel::ExampleA1) {
                    (x * x + z + u).exp()
                } else {
                    (x + z + u * u).exp()
                }
            }
        })
    }
}

/// Table of the standard model rows with fixed, smooth parameter functions.
pub fn reference_models() -> Vec<AnalyticModel> {
    let a = || Smooth::new(|x| x + 0.5 * x.sin(), |x| 1.0 + 0.5 * x.cos());
    let b = || Smooth::new(|x| 1.0 + 0.5 * x.tanh(), |x| 0.5 * (1.0 - x.tanh().powi(2)));
    let scaled = |s: f64| {
        Smooth::new(move |x| s * (x + 0.5 * x.sin()), move |x| s * (1.0 + 0.5 * x.cos()))
    };
    vec![
        AnalyticModel::Lingam { c: 2.0 },
        AnalyticModel::Anm { a: a() },
        AnalyticModel::Hnm { a: a(), b: b() },
        AnalyticModel::PnlAnm { a: scaled(0.3), g: Invertible::tanh() },
        AnalyticModel::PnlHnm {
            a: scaled(0.3),
            b: Smooth::new(|x| 0.3 + 0.1 * x.tanh(), |x| 0.1 * (1.0 - x.tanh().powi(2))),
            g: Invertible::tanh(),
        },
        AnalyticModel::HeteroGauss {
            mu: Smooth::linear(0.5, 1.0),
            sigma: Smooth::new(|x| softplus(0.5 * x), |x| 0.5 * logistic(0.5 * x)),
        },
        AnalyticModel::ExampleA1,
        AnalyticModel::ExampleA2,
    ]
}

/// Empirical conditional quantile derivative at `x` for each `tau`, by central differences with
/// shared noise draws. Returns `(tau, Q(tau | x), dQ/dx)`.
pub fn empirical_qpe(model: &AnalyticModel, x: f64, taus: &[f64], n: usize, step: f64, seed: u64) -> Result<Vec<(f64, f64, f64)>> {
    let draw = |x: f64| -> Result<Vec<f64>> {
        let mut rng = ChaCha8Rng::seed_from_u64(seed);
        let mut v = (0..n).map(|_| model.sample_conditional(x, &mut rng)).collect::<Result<Vec<_>>>()?;
        v.sort_by(f64::total_cmp);
        Ok(v)
    };
    let (lo, mid, hi) = (draw(x - step)?, draw(x)?, draw(x + step)?);
    Ok(taus
        .iter()
        .map(|&tau| {
            let k = ((tau * n as f64) as usize).min(n - 1);
            (tau, mid[k], (hi[k] - lo[k]) / (2.0 * step))
        })
        .collect())
}

/// Distribution of the covariate in [`LinearHeteroGauss`].
#[derive(Debug, Clone, Copy, PartialEq)]
pub enum XMarginal {
    Gaussian { sd: f64 },
    Uniform { half_width: f64 },
}

/// `X ~ N(0, sd^2)`, `Y | X ~ N(mu0 + mu1 X, sigma(X)^2)` with `sigma(x) = softplus(s0 + s1 x)`.
#[derive(Debug, Clone, Copy, PartialEq)]
pub struct LinearHeteroGauss {
    pub mu0: f64,
    pub mu1: f64,
    pub s0: f64,
    pub s1: f64,
    pub x: XMarginal,
}

impl LinearHeteroGauss {
    pub fn new(mu0: f64, mu1: f64, s0: f64, s1: f64) -> Self {
        LinearHeteroGauss {
            mu0,
            mu1,
            s0,
            s1,
            x: XMarginal::Gaussian { sd: 1.0 },
        }
    }

    /// Constant noise scale `sigma > 0`.
    pub fn homoscedastic(mu0: f64, mu1: f64, sigma: f64) -> Self {
        LinearHeteroGauss::new(mu0, mu1, sigma.exp_m1().ln(), 0.0)
    }

    pub fn require_gaussian_x(&self) -> Result<f64> {
        match self.x {
            XMarginal::Gaussian { sd } if sd > 0.0 => Ok(sd),
            XMarginal::Gaussian { .. } => Err(Error::Domain("covariate sd must be positive".into())),
            XMarginal::Uniform { .. } => Err(Error::Unsupported("analytic scores need a Gaussian covariate".into())),
        }
    }

    pub fn as_model(&self) -> AnalyticModel {
        let (s0, s1) = (self.s0, self.s1);
        AnalyticModel::HeteroGauss {
            mu: Smooth::linear(self.mu0, self.mu1),
            sigma: Smooth::new(move |x| softplus(s0 + s1 * x), move |x| s1 * logistic(s0 + s1 * x)),
        }
    }

    pub fn mu(&self, x: f64) -> f64 {
        self.mu0 + self.mu1 * x
    }

    pub fn sigma(&self, x: f64) -> f64 {
        softplus(self.s0 + self.s1 * x)
    }

    pub fn dsigma(&self, x: f64) -> f64 {
        self.s1 * logistic(self.s0 + self.s1 * x)
    }

    pub fn sample<R: Rng + ?Sized>(&self, rng: &mut R) -> (f64, f64) {
        let x = match self.x {
            XMarginal::Gaussian { sd } => sd * <StandardNormal as Distribution<f64>>::sample(&StandardNormal, rng),
            XMarginal::Uniform { half_width } => rng.random_range(-half_width..half_width),
        };
        let u: f64 = StandardNormal.sample(rng);
        (x, self.mu(x) + self.sigma(x) * u)
    }

    fn z(&self, x: f64, y: f64) -> f64 {
        (y - self.mu(x)) / self.sigma(x)
    }

    pub fn psi(&self, x: f64, y: f64) -> f64 {
        self.mu1 + self.z(x, y) * self.dsigma(x)
    }

    pub fn dpsi_dy(&self, x: f64, _y: f64) -> f64 {
        self.dsigma(x) / self.sigma(x)
    }

    pub fn d2psi_dy2(&self, _x: f64, _y: f64) -> f64 {
        0.0
    }

    /// Marginal score of the covariate.
    pub fn r_x(&self, x: f64) -> f64 {
        match self.x {
            XMarginal::Gaussian { sd } => -x / (sd * sd),
            XMarginal::Uniform { .. } => 0.0,
        }
    }

    /// `d/dy log p(x, y)`
    pub fn s_y(&self, x: f64, y: f64) -> f64 {
        -self.z(x, y) / self.sigma(x)
    }

    /// `d/dx log p(x, y)`
    pub fn s_x(&self, x: f64, y: f64) -> f64 {
        let z = self.z(x, y);
        let s = self.sigma(x);
        let ds = self.dsigma(x);
        self.r_x(x) - ds / s + z * self.mu1 / s + z * z * ds / s
    }

    /// Marginal score of `Y`, integrating the covariate out on a fine grid.
    pub fn r_y(&self, y: f64) -> Result<f64> {
        let sd = self.require_gaussian_x()?;
        if self.s1 == 0.0 {
            let s = self.sigma(0.0);
            return Ok(-(y - self.mu0) / (self.mu1 * self.mu1 * sd * sd + s * s));
        }
        let steps = 8000;
        let span = 12.0 * sd;
        let dx = 2.0 * span / steps as f64;
        let (mut p, mut dp) = (0.0, 0.0);
        for i in 0..=steps {
            let x = -span + i as f64 * dx;
            let w = if i == 0 || i == steps { 0.5 } else { 1.0 };
            let s = self.sigma(x);
            let z = (y - self.mu(x)) / s;
            let dens = w * (-0.5 * (x / sd).powi(2) - 0.5 * z * z).exp() / s;
            p += dens;
            dp += dens * (-z / s);
        }
        if !(p > 0.0) {
            return Err(Error::Domain(format!("marginal density of y vanishes at {y}")));
        }
        Ok(dp / p)
    }
}

/// CV of the squared QPE under linear heteroscedastic Gaussian noise with `kappa = sigma'/mu'`.
#[derive(Debug, Clone, Copy, PartialEq)]
pub struct CvBound {
    pub kappa: f64,
    pub cv: f64,
}

pub fn cv_squared_qpe(kappa: f64) -> CvBound {
    let k2 = kappa * kappa;
    let cv = if kappa.is_infinite() {
        2f64.sqrt()
    } else {
        (4.0 + 2.0 * k2).sqrt() / (1.0 + k2) * kappa.abs()
    };
    CvBound { kappa, cv }
}

#[cfg(test)]
mod tests {
    use super::*;

    #[test]
    fn lingam_is_constant() {
        let m = AnalyticModel::Lingam { c: 2.0 };
        for (x, y) in [(0.0, 0.0), (-3.0, 5.0), (1.0, -2.0)] {
            assert_eq!(m.qpe(x, y).unwrap(), 2.0);
        }
    }

    #[test]
    fn fig1_hnm_at_origin_is_proportional_to_y() {
        let m = AnalyticModel::fig1_hnm();
        let t = 1f64.tanh();
        let ratio = (1.0 - t * t) * -2.0 / (1.0 + t);
        for y in [-2.0, 0.5, 3.0] {
            assert!((m.qpe(0.0, y).unwrap() - ratio * y).abs() < 1e-14);
        }
    }

    #[test]
    fn examples_signs_and_magnitudes() {
        assert_eq!(AnalyticModel::ExampleA1.qpe(1.0, 2.0).unwrap(), 5.0);
        for x in [-1.0, 0.0, 2.0] {
            assert_eq!(AnalyticModel::ExampleA2.qpe(x, 3.0).unwrap().abs(), 4.5);
        }
    }

    #[test]
    fn domain_violations() {
        let m = AnalyticModel::Hnm { a: Smooth::constant(0.0), b: Smooth::linear(0.0, 1.0) };
        assert!(matches!(m.qpe(-1.0, 0.0), Err(Error::Domain(_))));
        let g = AnalyticModel::HeteroGauss { mu: Smooth::constant(0.0), sigma: Smooth::constant(0.0) };
        assert!(g.qpe(0.0, 0.0).is_err());
        let p = AnalyticModel::PnlAnm { a: Smooth::linear(0.0, 1.0), g: Invertible::tanh() };
        assert!(p.qpe(0.0, 1.5).is_err());
    }

    #[test]
    fn every_row_matches_empirical_quantile_slope() {
        let taus = [0.2, 0.35, 0.5, 0.65, 0.8];
        for (i, m) in reference_models().iter().enumerate() {
            for x in [-0.6, 0.3, 0.9] {
                for (tau, q, fd) in empirical_qpe(m, x, &taus, 100_000, 1e-3, 40 + i as u64).unwrap() {
                    let psi = m.qpe(x, q).unwrap();
                    let tol = 0.1 * psi.abs().max(1e-3);
                    assert!((fd - psi).abs() <= tol, "{} x={x} tau={tau}: fd {fd} vs {psi}", m.name());
                }
            }
        }
    }

    #[test]
    fn heterogauss_model_matches_general_form() {
        let l = LinearHeteroGauss::new(0.3, 1.2, -0.2, 0.7);
        let m = l.as_model();
        for (x, y) in [(0.0, 1.0), (-1.5, 0.2), (2.0, -3.0)] {
            assert!((m.qpe(x, y).unwrap() - l.psi(x, y)).abs() < 1e-14);
        }
    }

    #[test]
    fn linear_gaussian_scores() {
        let m = LinearHeteroGauss::homoscedastic(0.0, 1.0, 1.0);
        for (x, y) in [(0.3, -1.0), (1.2, 2.5), (-2.0, 0.0)] {
            assert!((m.s_y(x, y) + (y - x)).abs() < 1e-12);
            assert!((m.r_y(y).unwrap() + y / 2.0).abs() < 1e-12);
            // joint log-density -x^2/2 - (y - x)^2/2
            assert!((m.s_x(x, y) - (-x + (y - x))).abs() < 1e-12);
        }
    }

    #[test]
    fn independent_scores_factorize() {
        let m = LinearHeteroGauss::homoscedastic(0.0, 0.0, 1.0);
        for (x, y) in [(0.3, -1.0), (1.2, 2.5)] {
            assert_eq!(m.s_x(x, y), m.r_x(x));
        }
    }

    #[test]
    fn quadrature_marginal_score_matches_homoscedastic_closed_form() {
        let exact = LinearHeteroGauss::homoscedastic(0.2, 1.5, 0.8);
        let mut numeric = exact;
        numeric.s1 = 1e-300;
        for y in [-2.0, 0.0, 1.0, 3.0] {
            assert!((exact.r_y(y).unwrap() - numeric.r_y(y).unwrap()).abs() < 1e-9);
        }
    }

    #[test]
    fn score_decomposition_holds_pointwise() {
        let mut rng = ChaCha8Rng::seed_from_u64(9);
        for _ in 0..1000 {
            let m = LinearHeteroGauss::new(
                rng.random_range(-1.0..1.0),
                rng.random_range(-2.0..2.0),
                rng.random_range(-1.0..1.0),
                rng.random_range(-2.0..2.0),
            );
            let (x, y) = m.sample(&mut rng);
            let res = m.s_x(x, y) - m.r_x(x) + m.psi(x, y) * m.s_y(x, y) + m.dpsi_dy(x, y);
            assert!(res.abs() < 1e-10, "{res}");
        }
    }

    #[test]
    fn cv_values() {
        assert_eq!(cv_squared_qpe(0.0).cv, 0.0);
        assert!((cv_squared_qpe(1e6).cv - 2f64.sqrt()).abs() < 1e-6);
        assert!((cv_squared_qpe(1.0).cv - 6f64.sqrt() / 2.0).abs() < 1e-15);
        assert!((cv_squared_qpe(-1.0).cv - 6f64.sqrt() / 2.0).abs() < 1e-15);
    }

    #[test]
    fn cv_increases_with_abs_kappa() {
        let grid: Vec<f64> = (0..100).map(|i| i as f64 * 0.25).collect();
        for w in grid.windows(2) {
            let (a, b) = (cv_squared_qpe(w[0]).cv, cv_squared_qpe(w[1]).cv);
            assert!(b > a, "{} -> {}", w[0], w[1]);
            assert!(b < 2f64.sqrt());
        }
    }
}
