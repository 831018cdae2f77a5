//! Kernel Stein gradient estimate of the joint score at the sample points, and the per-variable
//! Fisher information derived from it.

use ndarray::{Array2, Axis};
use rand::SeedableRng;
use rand_chacha::ChaCha8Rng;
use rayon::prelude::*;

use crate::datasets::SampleMatrix;
use crate::error::{Error, Result};
use crate::linalg::Cholesky;
use crate::oracle::LinearHeteroGauss;
use crate::Real;

/// Default ridge factor; the regularizer added to the kernel diagonal is `eta * N`.
pub const DEFAULT_ETA: f64 = 1e-3;
pub const DEFAULT_MAX_ESCALATIONS: u32 = 3;
pub const DEFAULT_MAX_SAMPLES: usize = 3000;

#[derive(Debug, Clone, PartialEq)]
pub struct SteinOptions {
    pub eta: f64,
    /// How many times `eta` is multiplied by 10 after a failed factorization.
    pub max_escalations: u32,
    /// Larger samples are subsampled (without replacement) to this many rows.
    pub max_samples: Option<usize>,
    /// Seed of the subsample draw.
    pub seed: u64,
}

impl Default for SteinOptions {
    fn default() -> Self {
        SteinOptions {
            eta: DEFAULT_ETA,
            max_escalations: DEFAULT_MAX_ESCALATIONS,
            max_samples: Some(DEFAULT_MAX_SAMPLES),
            seed: 0,
        }
    }
}

#[derive(Debug, Clone)]
pub struct ScoreField<T> {
    /// `g[a][i]`: estimated `d/dx_i log p` at sample `rows[a]`, in inverse data units.
    pub g: Array2<T>,
    /// Input rows the estimate refers to (all rows unless subsampled).
    pub rows: Vec<usize>,
    /// RBF bandwidth `h`, in standardized units.
    pub bandwidth: T,
    /// Diagonal regularizer actually used.
    pub ridge: T,
}

#[derive(Debug, Clone, PartialEq)]
pub struct FisherInfo<T> {
    pub values: Vec<T>,
}

impl<T: Real> FisherInfo<T> {
    /// Index of the smallest value; the lowest index wins ties.
    pub fn argmin(&self) -> Option<usize> {
        let mut best: Option<usize> = None;
        for (i, v) in self.values.iter().enumerate() {
            match best {
                Some(b) if !(*v < self.values[b]) => {}
                _ => best = Some(i),
            }
        }
        best
    }
}

fn median_and_mean<T: Real>(mut v: Vec<T>) -> (T, T) {
    let mean = v.iter().copied().sum::<T>() / T::lit(v.len() as f64);
    let k = v.len() / 2;
    let even = v.len() % 2 == 0;
    let cmp = |a: &T, b: &T| a.partial_cmp(b).expect("finite distances");
    let (lower, upper, _) = v.select_nth_unstable_by(k, cmp);
    let upper = *upper;
    let median = if even && k > 0 {
        let below = lower.iter().copied().fold(T::neg_infinity(), T::max);
        (below + upper) / T::lit(2.0)
    } else {
        upper
    };
    (median, mean)
}

/// Stein gradient estimate `G = -(K + eta N I)^{-1} H` with an RBF kernel `K` on standardized
/// columns, median-heuristic bandwidth `h^2 = median(|x_a - x_b|^2) / 2`, and
/// `H[a][i] = sum_b K_ab (x_ai - x_bi) / h^2`.
pub fn stein_score<T: Real>(samples: &SampleMatrix<T>, opts: &SteinOptions) -> Result<ScoreField<T>> {
    if samples.n() < 10 {
        return Err(Error::InvalidConfig(format!("score estimation needs at least 10 samples, got {}", samples.n())));
    }
    if !(opts.eta > 0.0) || !opts.eta.is_finite() {
        return Err(Error::InvalidConfig("eta must be positive".into()));
    }
    samples.check_finite()?;
    let std = samples.standardize()?;
    let rows: Vec<usize> = match opts.max_samples {
        Some(m) if m < 10 => return Err(Error::InvalidConfig("max_samples must be at least 10".into())),
        Some(m) if samples.n() > m => {
            let mut rng = ChaCha8Rng::seed_from_u64(opts.seed);
            let mut idx = rand::seq::index::sample(&mut rng, samples.n(), m).into_vec();
            idx.sort_unstable();
            idx
        }
        _ => (0..samples.n()).collect(),
    };
    let x = std.samples.data().select(Axis(0), &rows);
    let (n, d) = x.dim();
    let xs = x.as_slice().expect("standard layout");

    let dist: Vec<T> = (0..n)
        .into_par_iter()
        .flat_map_iter(|a| {
            let xa = &xs[a * d..(a + 1) * d];
            (0..n).map(move |b| {
                let xb = &xs[b * d..(b + 1) * d];
                xa.iter().zip(xb).map(|(p, q)| (*p - *q) * (*p - *q)).sum::<T>()
            })
        })
        .collect();
    let upper: Vec<T> = (0..n).flat_map(|a| dist[a * n + a + 1..(a + 1) * n].iter().copied()).collect();
    let (median, mean) = median_and_mean(upper);
    let two = T::lit(2.0);
    let h2 = if median > T::zero() { median / two } else { mean / two };
    if !(h2 > T::zero()) {
        return Err(Error::Domain("all samples coincide; no kernel bandwidth".into()));
    }
    let inv = T::one() / (two * h2);
    let kernel: Vec<T> = dist.into_par_iter().map(|v| (-v * inv).exp()).collect();
    let k = Array2::from_shape_vec((n, n), kernel).expect("square kernel");

    let kx = k.dot(&x);
    let row_sums = k.sum_axis(Axis(1));
    let mut h = Array2::zeros((n, d));
    for a in 0..n {
        for i in 0..d {
            h[[a, i]] = (x[[a, i]] * row_sums[a] - kx[[a, i]]) / h2;
        }
    }

    let mut eta = opts.eta;
    for _ in 0..=opts.max_escalations {
        let ridge = T::lit(eta * n as f64);
        let mut a = k.clone();
        a.diag_mut().mapv_inplace(|v| v + ridge);
        if let Ok(chol) = Cholesky::factor(a) {
            let mut g = chol.solve(&h);
            for i in 0..d {
                let s = std.sd[i];
                g.column_mut(i).mapv_inplace(|v| -v / s);
            }
            if g.iter().all(|v| v.is_finite()) {
                return Ok(ScoreField {
                    g,
                    rows,
                    bandwidth: h2.sqrt(),
                    ridge,
                });
            }
        }
        eta *= 10.0;
    }
    Err(Error::Factorization {
        attempts: opts.max_escalations as usize + 1,
        ridge: eta / 10.0 * n as f64,
    })
}

/// Column-wise second moments of the estimated scores.
pub fn fisher_info<T: Real>(field: &ScoreField<T>) -> FisherInfo<T> {
    let n = T::lit(field.g.nrows() as f64);
    FisherInfo {
        values: field
            .g
            .columns()
            .into_iter()
            .map(|c| c.iter().map(|v| *v * *v).sum::<T>() / n)
            .collect(),
    }
}

impl<T: Real> ScoreField<T> {
    /// `row,<names...>` with one line per scored sample.
    pub fn to_csv(&self, names: &[String]) -> String {
        let mut out = String::from("row");
        for n in names {
            out.push(',');
            out.push_str(n);
        }
        out.push('\n');
        for (a, r) in self.rows.iter().enumerate() {
            out.push_str(&r.to_string());
            for v in self.g.row(a) {
                out.push_str(&format!(",{v}"));
            }
            out.push('\n');
        }
        out
    }
}

/// Monte-Carlo estimates of both sides of the Fisher information identity
/// `E[psi^2 s_Y^2] = E[s_X^2] - E[r_X^2] + E[(d_y psi)^2 + 2 psi d_yy psi]`.
#[derive(Debug, Clone, Copy, PartialEq)]
pub struct FiIdentity {
    pub lhs: f64,
    pub rhs: f64,
    /// `|lhs - rhs| / max(|lhs|, |rhs|)`, or 0 when both sides vanish.
    pub residual: f64,
    /// `E[s_X^2]`
    pub fisher_x: f64,
    /// `E[s_Y^2]`
    pub fisher_y: f64,
    /// `E[(d_y psi)^2 + 2 psi d_yy psi]`
    pub curvature: f64,
    /// `E[(psi^2 - 1) s_Y^2] + E[r_X^2]`
    pub bound: f64,
}

fn relative_residual(a: f64, b: f64) -> f64 {
    let scale = a.abs().max(b.abs());
    if scale == 0.0 {
        0.0
    } else {
        (a - b).abs() / scale
    }
}

/// Evaluates the identity with analytic integrands on `n_mc` joint draws.
pub fn verify_fi_identity(model: &LinearHeteroGauss, n_mc: usize, seed: u64) -> Result<FiIdentity> {
    model.require_gaussian_x()?;
    if n_mc == 0 {
        return Err(Error::InvalidConfig("n_mc must be positive".into()));
    }
    let mut rng = ChaCha8Rng::seed_from_u64(seed);
    let (mut lhs, mut sx2, mut rx2, mut curv, mut sy2) = (0.0, 0.0, 0.0, 0.0, 0.0);
    for _ in 0..n_mc {
        let (x, y) = model.sample(&mut rng);
        let psi = model.psi(x, y);
        let sy = model.s_y(x, y);
        let sx = model.s_x(x, y);
        let rx = model.r_x(x);
        let dpsi = model.dpsi_dy(x, y);
        lhs += psi * psi * sy * sy;
        sx2 += sx * sx;
        rx2 += rx * rx;
        curv += dpsi * dpsi + 2.0 * psi * model.d2psi_dy2(x, y);
        sy2 += sy * sy;
    }
    let n = n_mc as f64;
    let (lhs, sx2, rx2, curv, sy2) = (lhs / n, sx2 / n, rx2 / n, curv / n, sy2 / n);
    let rhs = sx2 - rx2 + curv;
    Ok(FiIdentity {
        lhs,
        rhs,
        residual: relative_residual(lhs, rhs),
        fisher_x: sx2,
        fisher_y: sy2,
        curvature: curv,
        bound: lhs - sy2 + rx2,
    })
}
