//! Least-squares basis test on estimated quantile partial effects and the resulting
//! cause/effect decision.
//!
//! For a response grid `y_1..y_M` and basis `phi_1..phi_k`, each valid row of the effect
//! matrix is projected onto `span(phi)` with `P = B (B^T B)^+ B^T`. The fit score is the
//! negated mean (over covariates) of the residual Frobenius norms, each divided by the square
//! root of the number of valid rows. A score of zero means every row lies in the span.

use std::fmt;
use std::str::FromStr;
use std::sync::Arc;

use ndarray::Array2;
use rayon::prelude::*;

use crate::datasets::{Effect, PairDataset, SampleMatrix};
use crate::error::{Error, Result};
use crate::kqpe::{qpe_grid, KernelConfig, QpeGrid, TestDesign, DEFAULT_LOCATION_RANGE, DEFAULT_TEST_LOCATIONS, DEFAULT_TEST_SAMPLES};
use crate::linalg::thin_svd;
use crate::metrics;
use crate::Real;

/// Scores closer than this are treated as tied.
pub const TIE_TOLERANCE: f64 = 1e-12;

/// A named scalar function of the response.
#[derive(Clone)]
pub struct BasisFn {
    pub name: String,
    pub f: Arc<dyn Fn(f64) -> f64 + Send + Sync>,
}

impl BasisFn {
    pub fn new(name: impl Into<String>, f: impl Fn(f64) -> f64 + Send + Sync + 'static) -> Self {
        BasisFn {
            name: name.into(),
            f: Arc::new(f),
        }
    }
}

impl fmt::Debug for BasisFn {
    fn fmt(&self, f: &mut fmt::Formatter<'_>) -> fmt::Result {
        write!(f, "BasisFn({})", self.name)
    }
}

#[derive(Debug, Clone)]
pub enum BasisSpec {
    /// `{1}`
    Constant,
    /// `{1, y}`
    Affine,
    /// `{1, y, ..., y^K}`
    Polynomial(usize),
    Custom(Vec<BasisFn>),
}

impl Default for BasisSpec {
    fn default() -> Self {
        BasisSpec::Affine
    }
}

impl BasisSpec {
    /// Number of basis functions.
    pub fn k(&self) -> usize {
        match self {
            BasisSpec::Constant => 1,
            BasisSpec::Affine => 2,
            BasisSpec::Polynomial(deg) => deg + 1,
            BasisSpec::Custom(fs) => fs.len(),
        }
    }

    fn name_of(&self, j: usize) -> String {
        match self {
            BasisSpec::Custom(fs) => fs[j].name.clone(),
            _ if j == 0 => "1".into(),
            _ if j == 1 => "y".into(),
            _ => format!("y^{j}"),
        }
    }

    fn eval(&self, j: usize, y: f64) -> f64 {
        match self {
            BasisSpec::Custom(fs) => (fs[j].f)(y),
            _ => y.powi(j as i32),
        }
    }

    /// Checks `k >= 1` and finiteness of every function on `[-10, 10]`.
    pub fn validate(&self) -> Result<()> {
        if self.k() == 0 {
            return Err(Error::InvalidConfig("basis needs at least one function".into()));
        }
        for i in 0..=200 {
            let y = -10.0 + 0.1 * i as f64;
            for j in 0..self.k() {
                if !self.eval(j, y).is_finite() {
                    return Err(Error::BasisNotFinite {
                        function: self.name_of(j),
                        location: y,
                    });
                }
            }
        }
        Ok(())
    }
}

impl FromStr for BasisSpec {
    type Err = Error;
    fn from_str(s: &str) -> Result<Self> {
        let s = s.trim().to_ascii_lowercase();
        match s.as_str() {
            "const" | "constant" => Ok(BasisSpec::Constant),
            "affine" => Ok(BasisSpec::Affine),
            _ => match s.strip_prefix("poly:") {
                Some(k) => k
                    .parse()
                    .map(BasisSpec::Polynomial)
                    .map_err(|_| Error::InvalidConfig(format!("bad polynomial degree `{k}`"))),
                None => Err(Error::InvalidConfig(format!("unknown basis `{s}`"))),
            },
        }
    }
}

impl fmt::Display for BasisSpec {
    fn fmt(&self, f: &mut fmt::Formatter<'_>) -> fmt::Result {
        match self {
            BasisSpec::Constant => f.write_str("const"),
            BasisSpec::Affine => f.write_str("affine"),
            BasisSpec::Polynomial(k) => write!(f, "poly:{k}"),
            BasisSpec::Custom(fs) => {
                let names: Vec<&str> = fs.iter().map(|b| b.name.as_str()).collect();
                write!(f, "custom:{}", names.join("|"))
            }
        }
    }
}

/// `B[m][j] = phi_j(y_m)`.
pub fn basis_matrix<T: Real>(spec: &BasisSpec, test_y: &[T]) -> Result<Array2<T>> {
    if test_y.is_empty() {
        return Err(Error::InvalidConfig("no test locations".into()));
    }
    let k = spec.k();
    if k == 0 {
        return Err(Error::InvalidConfig("basis needs at least one function".into()));
    }
    let mut b = Array2::zeros((test_y.len(), k));
    for (m, y) in test_y.iter().enumerate() {
        let y = y.as_f64();
        for j in 0..k {
            let v = spec.eval(j, y);
            if !v.is_finite() {
                return Err(Error::BasisNotFinite {
                    function: spec.name_of(j),
                    location: y,
                });
            }
            b[[m, j]] = T::lit(v);
        }
    }
    Ok(b)
}

/// Orthogonal projector `B (B^T B)^+ B^T` onto the span of the basis columns.
pub fn projector<T: Real>(b: &Array2<T>) -> Array2<T> {
    let (m, k) = b.dim();
    let (u, sigma, _) = thin_svd(b);
    let top = sigma.iter().fold(T::zero(), |acc, s| acc.max(*s));
    let cutoff = T::lit(m.max(k) as f64) * T::epsilon() * top;
    let keep: Vec<usize> = (0..k).filter(|&j| sigma[j] > cutoff).collect();
    let ur = u.select(ndarray::Axis(1), &keep);
    ur.dot(&ur.t())
}

/// Residual norm of every covariate after projecting its valid rows onto `span(B)`, scaled by
/// `1 / sqrt(valid rows)`.
pub fn residual_norms<T: Real>(grid: &QpeGrid<T>, spec: &BasisSpec) -> Result<Vec<T>> {
    let b = basis_matrix(spec, &grid.test_y)?;
    let proj = projector(&b);
    let m = grid.test_y.len();
    let complement = Array2::<T>::eye(m) - &proj;
    let rows: Vec<usize> = (0..grid.valid.len()).filter(|&t| grid.valid[t]).collect();
    if rows.is_empty() {
        return Err(Error::InsufficientCoverage);
    }
    let scale = T::one() / T::lit(rows.len() as f64).sqrt();
    Ok(grid
        .psi
        .iter()
        .map(|psi| {
            let sub = psi.select(ndarray::Axis(0), &rows);
            let r = sub.dot(&complement);
            r.iter().map(|v| *v * *v).sum::<T>().sqrt() * scale
        })
        .collect())
}

/// Fit score `-(1/d) sum_i ||R_i||`; always `<= 0`, zero iff every valid row is in the span.
pub fn ols_residual<T: Real>(grid: &QpeGrid<T>, spec: &BasisSpec) -> Result<T> {
    let norms = residual_norms(grid, spec)?;
    if norms.is_empty() {
        return Err(Error::InvalidConfig("grid has no covariates".into()));
    }
    let mean = norms.iter().copied().sum::<T>() / T::lit(norms.len() as f64);
    Ok(if mean == T::zero() { T::zero() } else { -mean })
}

#[derive(Debug, Clone, PartialEq)]
pub struct DirectionOptions<T> {
    /// Bandwidths in standardized units; `None` uses the Silverman rule.
    pub kernel: Option<KernelConfig<T>>,
    pub test_samples: usize,
    pub test_locations: usize,
    pub location_range: f64,
    /// Seed of the shared test-row draw.
    pub seed: u64,
}

impl<T> Default for DirectionOptions<T> {
    fn default() -> Self {
        DirectionOptions {
            kernel: None,
            test_samples: DEFAULT_TEST_SAMPLES,
            test_locations: DEFAULT_TEST_LOCATIONS,
            location_range: DEFAULT_LOCATION_RANGE,
            seed: 0,
        }
    }
}

#[derive(Debug, Clone, PartialEq)]
pub struct DirectionDecision<T> {
    /// Fit score when the first column is the cause.
    pub eps_xy: T,
    /// Fit score when the second column is the cause.
    pub eps_yx: T,
    pub effect: Effect,
    pub margin: T,
    /// Scores tied within [`TIE_TOLERANCE`]; the effect defaults to `Y`.
    pub tie: bool,
}

impl<T: Real> DirectionDecision<T> {
    fn from_scores(eps_xy: T, eps_yx: T) -> Self {
        let diff = eps_xy - eps_yx;
        if diff.abs() <= T::lit(TIE_TOLERANCE) {
            DirectionDecision {
                eps_xy,
                eps_yx,
                effect: Effect::Y,
                margin: T::zero(),
                tie: true,
            }
        } else {
            DirectionDecision {
                eps_xy,
                eps_yx,
                effect: if diff > T::zero() { Effect::Y } else { Effect::X },
                margin: diff.abs(),
                tie: false,
            }
        }
    }
}

/// Scores both conditioning directions of a two-column sample on a shared test design.
pub fn decide_direction<T: Real>(
    pair: &SampleMatrix<T>,
    spec: &BasisSpec,
    opts: &DirectionOptions<T>,
) -> Result<DirectionDecision<T>> {
    if pair.d() != 2 {
        return Err(Error::DimensionMismatch {
            expected: 2,
            found: pair.d(),
        });
    }
    let design = TestDesign::sampled(pair.n(), opts.test_samples, opts.test_locations, opts.location_range, opts.seed);
    let kernel = opts.kernel.as_ref();
    let xy = qpe_grid(pair, &[0], 1, &design, kernel).and_then(|g| ols_residual(&g, spec));
    let yx = qpe_grid(pair, &[1], 0, &design, kernel).and_then(|g| ols_residual(&g, spec));
    match (xy, yx) {
        (Ok(a), Ok(b)) => Ok(DirectionDecision::from_scores(a, b)),
        (Err(a), Err(b)) => Err(Error::Undecidable(format!("x->y: {a}; y->x: {b}"))),
        (Err(e), _) | (_, Err(e)) => Err(e),
    }
}

#[derive(Debug, Clone)]
pub struct PairOutcome {
    pub id: String,
    pub truth: Effect,
    pub weight: f64,
    pub decision: std::result::Result<DirectionDecision<f64>, String>,
}

impl PairOutcome {
    pub fn correct(&self) -> Option<bool> {
        self.decision.as_ref().ok().map(|d| d.effect == self.truth)
    }
}

#[derive(Debug, Clone)]
pub struct CorpusReport {
    pub outcomes: Vec<PairOutcome>,
    /// Weighted accuracy over decided pairs; `None` when nothing was decided.
    pub accuracy: Option<f64>,
    pub audrc: Option<f64>,
}

impl CorpusReport {
    pub fn undecided(&self) -> impl Iterator<Item = &PairOutcome> {
        self.outcomes.iter().filter(|o| o.decision.is_err())
    }

    /// `pair_id,eps_xy,eps_yx,decision,margin,truth,correct`
    pub fn to_csv(&self) -> String {
        let mut out = String::from("pair_id,eps_xy,eps_yx,decision,margin,truth,correct\n");
        for o in &self.outcomes {
            match &o.decision {
                Ok(d) => out.push_str(&format!(
                    "{},{},{},{},{},{},{}\n",
                    o.id,
                    d.eps_xy,
                    d.eps_yx,
                    d.effect,
                    d.margin,
                    o.truth,
                    d.effect == o.truth
                )),
                Err(_) => out.push_str(&format!("{},NA,NA,undecided,NA,{},NA\n", o.id, o.truth)),
            }
        }
        out
    }
}

/// Decides every pair of a corpus and summarizes weighted accuracy and AUDRC.
pub fn evaluate_corpus(
    pairs: &PairDataset,
    spec: &BasisSpec,
    opts: &DirectionOptions<f64>,
) -> Result<CorpusReport> {
    if pairs.is_empty() {
        return Err(Error::InvalidConfig("empty corpus".into()));
    }
    spec.validate()?;
    let outcomes: Vec<PairOutcome> = pairs
        .pairs
        .par_iter()
        .map(|p| PairOutcome {
            id: p.id.clone(),
            truth: p.truth,
            weight: p.weight,
            decision: decide_direction(&p.samples, spec, opts).map_err(|e| e.to_string()),
        })
        .collect();
    let decisions: Vec<Option<Effect>> = outcomes.iter().map(|o| o.decision.as_ref().ok().map(|d| d.effect)).collect();
    let margins: Vec<f64> = outcomes
        .iter()
        .map(|o| o.decision.as_ref().map_or(0.0, |d| d.margin))
        .collect();
    let truths: Vec<Effect> = outcomes.iter().map(|o| o.truth).collect();
    let weights: Vec<f64> = outcomes.iter().map(|o| o.weight).collect();
    let accuracy = metrics::pair_accuracy(&decisions, &truths, &weights).ok();
    let audrc = metrics::audrc(&margins, &decisions, &truths, &weights).ok();
    Ok(CorpusReport {
        outcomes,
        accuracy,
        audrc,
    })
}
