//! Synthetic structural causal models over random DAGs.

use std::f64::consts::PI;
use std::fmt;
use std::str::FromStr;

use rand::{Rng, SeedableRng};
use rand_chacha::ChaCha8Rng;
use rand_distr::{Distribution, Gumbel, Normal, StandardNormal, Uniform};

use super::dag::{random_dag_with, Dag, GraphModel};
use super::samples::{default_names, SampleMatrix};
use super::Effect;
use crate::error::{Error, Result};
use crate::scalar::{mean_and_sd, softplus};

const RFF_FEATURES: usize = 100;
const GMM_COMPONENTS: usize = 3;

#[derive(Debug, Clone, Copy, PartialEq, Eq)]
pub enum Family {
    /// Linear mechanism with standard Gumbel noise.
    Lingam,
    /// `GP(P) + GMM`.
    AnmGp,
    /// `GP1(P) + softplus(GP2(P)) * GMM`.
    HnmGp,
    /// `mu(P) + sigma(P) * N(0,1)` with sin-perturbed affine mean and scale.
    HeteroGauss,
    AnmGpConfounded,
    HnmGpConfounded,
}

impl Family {
    pub const ALL: [Family; 6] = [
        Family::Lingam,
        Family::AnmGp,
        Family::HnmGp,
        Family::HeteroGauss,
        Family::AnmGpConfounded,
        Family::HnmGpConfounded,
    ];

    fn confounded(self) -> bool {
        matches!(self, Family::AnmGpConfounded | Family::HnmGpConfounded)
    }
}

impl FromStr for Family {
    type Err = Error;
    fn from_str(s: &str) -> Result<Self> {
        let key: String = s.to_ascii_lowercase().chars().filter(|c| c.is_ascii_alphanumeric()).collect();
        match key.as_str() {
            "lingam" => Ok(Family::Lingam),
            "anmgp" | "anm" | "an" => Ok(Family::AnmGp),
            "hnmgp" | "hnm" | "ls" => Ok(Family::HnmGp),
            "heterogauss" | "hg" => Ok(Family::HeteroGauss),
            "anmgpc" | "anmgpconfounded" => Ok(Family::AnmGpConfounded),
            "hnmgpc" | "hnmgpconfounded" => Ok(Family::HnmGpConfounded),
            _ => Err(Error::InvalidConfig(format!("unknown family `{s}`"))),
        }
    }
}

impl fmt::Display for Family {
    fn fmt(&self, f: &mut fmt::Formatter<'_>) -> fmt::Result {
        f.write_str(match self {
            Family::Lingam => "lingam",
            Family::AnmGp => "anm-gp",
            Family::HnmGp => "hnm-gp",
            Family::HeteroGauss => "heterogauss",
            Family::AnmGpConfounded => "anm-gp-c",
            Family::HnmGpConfounded => "hnm-gp-c",
        })
    }
}

#[derive(Debug, Clone, PartialEq)]
pub struct GenConfig {
    pub family: Family,
    pub graph: GraphModel,
    pub d: usize,
    pub n: usize,
    /// Expected edges per variable.
    pub edge_factor: f64,
    /// Sin-perturbation magnitude (HeteroGauss only).
    pub alpha: f64,
    /// Slope scale of the log-scale affine part (HeteroGauss only).
    pub beta: f64,
    /// Standardize every variable before its children are generated.
    pub iscm: bool,
    pub seed: u64,
}

impl Default for GenConfig {
    fn default() -> Self {
        GenConfig {
            family: Family::Lingam,
            graph: GraphModel::Er,
            d: 10,
            n: 1000,
            edge_factor: 4.0,
            alpha: 0.0,
            beta: 0.25,
            iscm: true,
            seed: 0,
        }
    }
}

impl GenConfig {
    pub fn validate(&self) -> Result<()> {
        let bad = |m: String| Err(Error::InvalidConfig(m));
        if self.d < 2 {
            return bad(format!("d must be >= 2, got {}", self.d));
        }
        if self.n < 2 {
            return bad(format!("n must be >= 2, got {}", self.n));
        }
        if !(self.edge_factor > 0.0) || !self.edge_factor.is_finite() {
            return bad(format!("edge_factor must be > 0, got {}", self.edge_factor));
        }
        if !(self.alpha >= 0.0) || !(self.beta >= 0.0) || !self.alpha.is_finite() || !self.beta.is_finite() {
            return bad(format!("alpha and beta must be >= 0, got {} and {}", self.alpha, self.beta));
        }
        Ok(())
    }

    pub fn to_key_values(&self) -> Vec<(&'static str, String)> {
        vec![
            ("family", self.family.to_string()),
            ("graph", self.graph.to_string()),
            ("d", self.d.to_string()),
            ("n", self.n.to_string()),
            ("edge_factor", self.edge_factor.to_string()),
            ("alpha", self.alpha.to_string()),
            ("beta", self.beta.to_string()),
            ("iscm", self.iscm.to_string()),
            ("seed", self.seed.to_string()),
        ]
    }

    pub fn from_key_values<'a>(pairs: impl IntoIterator<Item = (&'a str, &'a str)>) -> Result<Self> {
        fn num<F: FromStr>(k: &str, v: &str) -> Result<F> {
            v.parse().map_err(|_| Error::Structure(format!("bad value `{v}` for `{k}`")))
        }
        let mut cfg = GenConfig::default();
        for (k, v) in pairs {
            match k {
                "family" => cfg.family = v.parse()?,
                "graph" => cfg.graph = v.parse()?,
                "d" => cfg.d = num(k, v)?,
                "n" => cfg.n = num(k, v)?,
                "edge_factor" => cfg.edge_factor = num(k, v)?,
                "alpha" => cfg.alpha = num(k, v)?,
                "beta" => cfg.beta = num(k, v)?,
                "iscm" => cfg.iscm = num(k, v)?,
                "seed" => cfg.seed = num(k, v)?,
                _ => {}
            }
        }
        cfg.validate()?;
        Ok(cfg)
    }
}

/// Random Fourier feature approximation of a GP draw with an RBF kernel of unit lengthscale.
#[derive(Debug, Clone)]
pub(crate) struct RffGp {
    omega: Vec<Vec<f64>>,
    phase: Vec<f64>,
    weight: Vec<f64>,
}

impl RffGp {
    pub(crate) fn sample<R: Rng + ?Sized>(rng: &mut R, inputs: usize) -> Self {
        let phase_dist = Uniform::new(0.0, 2.0 * PI).expect("valid range");
        let mut omega = Vec::with_capacity(RFF_FEATURES);
        let mut phase = Vec::with_capacity(RFF_FEATURES);
        let mut weight = Vec::with_capacity(RFF_FEATURES);
        for _ in 0..RFF_FEATURES {
            omega.push((0..inputs).map(|_| rng.sample::<f64, _>(StandardNormal)).collect());
            phase.push(phase_dist.sample(rng));
            weight.push(rng.sample::<f64, _>(StandardNormal));
        }
        RffGp { omega, phase, weight }
    }

    fn eval_raw(&self, point: &[f64]) -> f64 {
        let mut s = 0.0;
        for ((w, b), a) in self.omega.iter().zip(&self.phase).zip(&self.weight) {
            let arg: f64 = w.iter().zip(point).map(|(wi, xi)| wi * xi).sum::<f64>() + b;
            s += a * arg.cos();
        }
        s * (2.0 / RFF_FEATURES as f64).sqrt()
    }

    /// Evaluates at every row of `inputs` (column-major), rescaled to zero mean and unit
    /// empirical variance.
    pub(crate) fn eval_standardized(&self, inputs: &[&[f64]]) -> Vec<f64> {
        let n = inputs.first().map_or(0, |c| c.len());
        let mut point = vec![0.0; inputs.len()];
        let mut out: Vec<f64> = (0..n)
            .map(|r| {
                for (k, col) in inputs.iter().enumerate() {
                    point[k] = col[r];
                }
                self.eval_raw(&point)
            })
            .collect();
        let (m, s) = mean_and_sd(out.iter().copied());
        let s = if s > 1e-12 { s } else { 1.0 };
        for v in &mut out {
            *v = (*v - m) / s;
        }
        out
    }
}

/// Equal-weight three-component Gaussian mixture.
#[derive(Debug, Clone)]
pub(crate) struct Gmm {
    means: [f64; GMM_COMPONENTS],
    sds: [f64; GMM_COMPONENTS],
}

impl Gmm {
    pub(crate) fn sample_params<R: Rng + ?Sized>(rng: &mut R) -> Self {
        let mut means = [0.0; GMM_COMPONENTS];
        let mut sds = [0.0; GMM_COMPONENTS];
        for k in 0..GMM_COMPONENTS {
            means[k] = rng.random_range(-1.0..=1.0);
            sds[k] = rng.random_range(0.25..=2.0);
        }
        Gmm { means, sds }
    }

    pub(crate) fn draw<R: Rng + ?Sized>(&self, rng: &mut R) -> f64 {
        let k = rng.random_range(0..GMM_COMPONENTS);
        let z: f64 = rng.sample(StandardNormal);
        self.means[k] + self.sds[k] * z
    }

    fn draws<R: Rng + ?Sized>(&self, rng: &mut R, n: usize) -> Vec<f64> {
        (0..n).map(|_| self.draw(rng)).collect()
    }
}

fn normal_draws<R: Rng + ?Sized>(rng: &mut R, n: usize) -> Vec<f64> {
    (0..n).map(|_| rng.sample(StandardNormal)).collect()
}

fn root_noise<R: Rng + ?Sized>(family: Family, rng: &mut R, n: usize) -> Vec<f64> {
    match family {
        Family::Lingam => {
            let g = Gumbel::new(0.0, 1.0).expect("valid gumbel");
            (0..n).map(|_| g.sample(rng)).collect()
        }
        Family::HeteroGauss => normal_draws(rng, n),
        _ => Gmm::sample_params(rng).draws(rng, n),
    }
}

/// `beta * (sum_j a_j p_j + b) + alpha * sum_j sin(p_j)` at row `r`.
fn sin_affine(parents: &[&[f64]], coef: &[f64], bias: f64, alpha: f64, beta: f64, r: usize) -> f64 {
    let mut lin = bias;
    let mut per = 0.0;
    for (col, a) in parents.iter().zip(coef) {
        lin += a * col[r];
        per += col[r].sin();
    }
    beta * lin + alpha * per
}

fn mechanism<R: Rng + ?Sized>(
    cfg: &GenConfig,
    rng: &mut R,
    parents: &[&[f64]],
    confounder: Option<&[f64]>,
) -> Vec<f64> {
    let n = cfg.n;
    let with_z: Vec<&[f64]> = parents.iter().copied().chain(confounder).collect();
    match cfg.family {
        Family::Lingam => {
            let coef: Vec<f64> = parents
                .iter()
                .map(|_| {
                    let mag = rng.random_range(0.5..=2.0);
                    if rng.random::<bool>() {
                        mag
                    } else {
                        -mag
                    }
                })
                .collect();
            let bias: f64 = rng.sample(StandardNormal);
            let g = Gumbel::new(0.0, 1.0).expect("valid gumbel");
            (0..n)
                .map(|r| sin_affine(parents, &coef, bias, 0.0, 1.0, r) + g.sample(rng))
                .collect()
        }
        Family::AnmGp | Family::AnmGpConfounded => {
            let gp = RffGp::sample(rng, with_z.len());
            let f = gp.eval_standardized(&with_z);
            let noise = Gmm::sample_params(rng);
            f.into_iter().map(|v| v + noise.draw(rng)).collect()
        }
        Family::HnmGp | Family::HnmGpConfounded => {
            let loc = RffGp::sample(rng, parents.len()).eval_standardized(parents);
            let scale = RffGp::sample(rng, with_z.len()).eval_standardized(&with_z);
            let noise = Gmm::sample_params(rng);
            loc.into_iter()
                .zip(scale)
                .map(|(m, s)| m + softplus(s) * noise.draw(rng))
                .collect()
        }
        Family::HeteroGauss => {
            let var2 = Normal::new(0.0, 2f64.sqrt()).expect("valid normal");
            let a: Vec<f64> = parents.iter().map(|_| rng.sample(StandardNormal)).collect();
            let b = var2.sample(rng);
            let c: Vec<f64> = parents.iter().map(|_| rng.sample(StandardNormal)).collect();
            let d = var2.sample(rng);
            (0..n)
                .map(|r| {
                    let mu = sin_affine(parents, &a, b, cfg.alpha, 1.0, r);
                    let sigma = softplus(sin_affine(parents, &c, d, cfg.alpha, cfg.beta, r));
                    let z: f64 = rng.sample(StandardNormal);
                    mu + sigma * z
                })
                .collect()
        }
    }
}

/// Samples the configured SCM on a fixed DAG.
pub fn generate_on_dag<R: Rng + ?Sized>(cfg: &GenConfig, dag: &Dag, rng: &mut R) -> Result<SampleMatrix<f64>> {
    cfg.validate()?;
    if dag.d() != cfg.d {
        return Err(Error::DimensionMismatch {
            expected: cfg.d,
            found: dag.d(),
        });
    }
    let order = dag
        .topological_order()
        .ok_or_else(|| Error::Structure("graph contains a cycle".into()))?;
    let names = default_names(cfg.d);
    let confounder = cfg
        .family
        .confounded()
        .then(|| Gmm::sample_params(rng).draws(rng, cfg.n));
    let mut columns: Vec<Vec<f64>> = vec![Vec::new(); cfg.d];
    for &i in &order {
        let parents = dag.parents(i);
        let mut x = if parents.is_empty() {
            root_noise(cfg.family, rng, cfg.n)
        } else {
            let cols: Vec<&[f64]> = parents.iter().map(|&p| columns[p].as_slice()).collect();
            mechanism(cfg, rng, &cols, confounder.as_deref())
        };
        if x.iter().any(|v| !v.is_finite()) {
            return Err(Error::NonFinite {
                column: names[i].clone(),
            });
        }
        if cfg.iscm {
            let (m, s) = mean_and_sd(x.iter().copied());
            if !(s > 0.0) {
                return Err(Error::ZeroVariance {
                    column: names[i].clone(),
                });
            }
            for v in &mut x {
                *v = (*v - m) / s;
            }
        }
        columns[i] = x;
    }
    SampleMatrix::from_columns(&columns, names)
}

/// Draws a DAG and samples the configured SCM on it.
pub fn generate(cfg: &GenConfig) -> Result<(SampleMatrix<f64>, Dag)> {
    cfg.validate()?;
    let mut rng = ChaCha8Rng::seed_from_u64(cfg.seed);
    let dag = random_dag_with(cfg.d, cfg.graph, cfg.edge_factor, &mut rng)?;
    let samples = generate_on_dag(cfg, &dag, &mut rng)?;
    Ok((samples, dag))
}

/// One bivariate cause-effect pair with a random edge direction.
pub fn generate_pair(family: Family, n: usize, seed: u64) -> Result<(SampleMatrix<f64>, Effect)> {
    let cfg = GenConfig {
        family,
        d: 2,
        n,
        seed,
        ..GenConfig::default()
    };
    let (samples, dag) = generate(&cfg)?;
    let truth = if dag.has_edge(0, 1) { Effect::Y } else { Effect::X };
    Ok((samples, truth))
}
