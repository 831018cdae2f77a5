//! Fast built-in checks of the estimators against closed-form references.

use std::time::Instant;

use ndarray::Array2;
use rand::{Rng, SeedableRng};
use rand_chacha::ChaCha8Rng;
use rand_distr::{Distribution, StandardNormal};

use crate::basistest::{ols_residual, BasisSpec};
use crate::datasets::{Dag, Effect, SampleMatrix};
use crate::fico::CausalOrder;
use crate::kqpe::{cdf_hat, linspace, KernelConfig, QpeGrid};
use crate::metrics::{audrc, order_divergence, pair_accuracy};
use crate::oracle::{cv_squared_qpe, empirical_qpe, AnalyticModel, LinearHeteroGauss};
use crate::score::{fisher_info, stein_score, SteinOptions};

pub const SUITES: [&str; 5] = ["oracle", "metrics", "kqpe", "basis", "score"];

#[derive(Debug, Clone)]
pub struct SuiteResult {
    pub name: String,
    pub outcome: Result<(), String>,
    pub seconds: f64,
}

fn check(cond: bool, msg: impl FnOnce() -> String) -> Result<(), String> {
    if cond {
        Ok(())
    } else {
        Err(msg())
    }
}

fn oracle_suite() -> Result<(), String> {
    check((cv_squared_qpe(1.0).cv - 6f64.sqrt() / 2.0).abs() < 1e-12, || "cv at kappa 1".into())?;
    check((cv_squared_qpe(1e6).cv - 2f64.sqrt()).abs() < 1e-6, || "cv limit".into())?;
    let m = LinearHeteroGauss::new(0.2, 1.3, -0.4, 0.8);
    let mut rng = ChaCha8Rng::seed_from_u64(0);
    for _ in 0..200 {
        let (x, y) = m.sample(&mut rng);
        let res = m.s_x(x, y) - m.r_x(x) + m.psi(x, y) * m.s_y(x, y) + m.dpsi_dy(x, y);
        check(res.abs() < 1e-10, || format!("score decomposition residual {res}"))?;
    }
    let hnm = AnalyticModel::fig1_hnm();
    for (tau, q, fd) in empirical_qpe(&hnm, 0.5, &[0.3, 0.5, 0.7], 20_000, 1e-3, 1).map_err(|e| e.to_string())? {
        let psi = hnm.qpe(0.5, q).map_err(|e| e.to_string())?;
        check((fd - psi).abs() <= 0.1 * psi.abs().max(1e-3), || format!("hnm quantile slope at tau {tau}: {fd} vs {psi}"))?;
    }
    Ok(())
}

fn metrics_suite() -> Result<(), String> {
    let chain = Dag::chain(3);
    let fwd = CausalOrder::identity(3);
    let od = |o: &CausalOrder, d: &Dag| order_divergence(o, d).map_err(|e| e.to_string());
    check(od(&fwd, &chain)?.od == 0, || "topological order".into())?;
    check(od(&fwd.reversed(), &chain)?.odr == 1.0, || "reversed chain".into())?;
    let collider = Dag::from_edges(3, &[(0, 2), (1, 2)]).map_err(|e| e.to_string())?;
    let o = CausalOrder::from_order(vec![1, 2, 0]).map_err(|e| e.to_string())?;
    check(od(&o, &collider)?.odr == 0.5, || "collider".into())?;
    let truths = [Effect::Y, Effect::Y];
    let acc = pair_accuracy(&[Some(Effect::Y), Some(Effect::X)], &truths, &[3.0, 1.0]).map_err(|e| e.to_string())?;
    check(acc == 0.75, || format!("weighted accuracy {acc}"))?;
    let a = audrc(&[0.9, 0.1], &[Some(Effect::Y), Some(Effect::X)], &truths, &[1.0, 1.0]).map_err(|e| e.to_string())?;
    check(a == 0.75, || format!("audrc {a}"))
}

fn kqpe_suite() -> Result<(), String> {
    let mut rng = ChaCha8Rng::seed_from_u64(3);
    let data = Array2::from_shape_fn((300, 3), |_| StandardNormal.sample(&mut rng));
    let s = SampleMatrix::with_default_names(data).map_err(|e| e.to_string())?;
    let cfg = KernelConfig { hx: vec![0.4, 0.5], hy: 0.3, min_ess: 1.0 };
    for _ in 0..10 {
        let x = [rng.random_range(-1.0..1.0), rng.random_range(-1.0..1.0)];
        let y: f64 = rng.random_range(-1.0..1.0);
        let at = |x: &[f64], y: f64| cdf_hat(&s, &[0, 1], 2, x, y, &cfg).map_err(|e| e.to_string());
        let e = at(&x, y)?;
        let h = 1e-5;
        let fd_y = (at(&x, y + h)?.f - at(&x, y - h)?.f) / (2.0 * h);
        check((fd_y - e.df_dy).abs() <= 1e-5 * e.df_dy.abs().max(1e-3), || format!("dF/dy {} vs {fd_y}", e.df_dy))?;
        for j in 0..2 {
            let (mut p, mut q) = (x, x);
            p[j] += h;
            q[j] -= h;
            let fd = (at(&p, y)?.f - at(&q, y)?.f) / (2.0 * h);
            check((fd - e.grad_x[j]).abs() <= 1e-5 * e.grad_x[j].abs().max(1e-3), || format!("dF/dx{j} {} vs {fd}", e.grad_x[j]))?;
        }
    }
    Ok(())
}

fn basis_suite() -> Result<(), String> {
    let y: Vec<f64> = linspace(-2.5, 2.5, 20);
    let psi = Array2::from_shape_fn((10, 20), |(t, m)| t as f64 * 0.1 - 0.3 * y[m]);
    let grid = QpeGrid::from_psi(y, vec![psi], vec![true; 10]).map_err(|e| e.to_string())?;
    let eps = ols_residual(&grid, &BasisSpec::Affine).map_err(|e| e.to_string())?;
    check(eps.abs() < 1e-10, || format!("in-span residual {eps}"))?;
    let eps_c = ols_residual(&grid, &BasisSpec::Constant).map_err(|e| e.to_string())?;
    check(eps_c < eps, || "constant basis should fit worse".into())
}

fn score_suite() -> Result<(), String> {
    let mut rng = ChaCha8Rng::seed_from_u64(5);
    let data = Array2::from_shape_fn((1000, 2), |_| StandardNormal.sample(&mut rng));
    let s = SampleMatrix::with_default_names(data).map_err(|e| e.to_string())?;
    let fi = fisher_info(&stein_score(&s, &SteinOptions::default()).map_err(|e| e.to_string())?);
    for v in fi.values {
        check((0.8..=1.2).contains(&v), || format!("standard normal Fisher information {v}"))?;
    }
    Ok(())
}

/// Runs the named suites (all when `only` is empty). With `inject_failure` an extra suite that
/// always fails is appended.
pub fn run(only: &[String], inject_failure: bool) -> Result<Vec<SuiteResult>, String> {
    if let Some(bad) = only.iter().find(|s| !SUITES.contains(&s.as_str())) {
        return Err(format!("unknown suite `{bad}`; expected one of {}", SUITES.join(", ")));
    }
    let mut out = Vec::new();
    for name in SUITES {
        if !only.is_empty() && !only.iter().any(|s| s == name) {
            continue;
        }
        let t = Instant::now();
        let outcome = match name {
            "oracle" => oracle_suite(),
            "metrics" => metrics_suite(),
            "kqpe" => kqpe_suite(),
            "basis" => basis_suite(),
            _ => score_suite(),
        };
        out.push(SuiteResult { name: name.to_string(), outcome, seconds: t.elapsed().as_secs_f64() });
    }
    if inject_failure {
        out.push(SuiteResult { name: "injected".into(), outcome: Err("injected failure".into()), seconds: 0.0 });
    }
    Ok(out)
}

#[cfg(test)]
mod tests {
    use super::*;

    #[test]
    fn all_suites_pass() {
        for r in run(&[], false).unwrap() {
            assert!(r.outcome.is_ok(), "{}: {:?}", r.name, r.outcome);
        }
    }

    #[test]
    fn selection_and_injection() {
        let r = run(&["metrics".into()], true).unwrap();
        assert_eq!(r.len(), 2);
        assert!(r[0].outcome.is_ok());
        assert!(r[1].outcome.is_err());
        assert!(run(&["nope".into()], false).is_err());
    }
}
