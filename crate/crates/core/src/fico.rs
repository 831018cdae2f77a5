//! Causal ordering by repeated removal of the variable with the smallest Fisher information.

use rayon::prelude::*;

use crate::datasets::{Dag, SampleMatrix};
use crate::error::{Error, Result};
use crate::metrics::{order_divergence, OrderScore};
use crate::score::{fisher_info, stein_score, SteinOptions};
use crate::Real;

/// A permutation of the variables, earliest cause first.
#[derive(Debug, Clone, PartialEq, Eq)]
pub struct CausalOrder {
    order: Vec<usize>,
    pos: Vec<usize>,
}

impl CausalOrder {
    pub fn from_order(order: Vec<usize>) -> Result<Self> {
        let d = order.len();
        let mut pos = vec![usize::MAX; d];
        for (p, &v) in order.iter().enumerate() {
            if v >= d || pos[v] != usize::MAX {
                return Err(Error::InvalidConfig(format!("{order:?} is not a permutation of 0..{d}")));
            }
            pos[v] = p;
        }
        Ok(CausalOrder { order, pos })
    }

    pub fn from_positions(pos: Vec<usize>) -> Result<Self> {
        let d = pos.len();
        let mut order = vec![usize::MAX; d];
        for (v, &p) in pos.iter().enumerate() {
            if p >= d || order[p] != usize::MAX {
                return Err(Error::InvalidConfig(format!("{pos:?} is not a permutation of 0..{d}")));
            }
            order[p] = v;
        }
        Ok(CausalOrder { order, pos })
    }

    pub fn identity(d: usize) -> Self {
        CausalOrder {
            order: (0..d).collect(),
            pos: (0..d).collect(),
        }
    }

    pub fn len(&self) -> usize {
        self.order.len()
    }

    pub fn is_empty(&self) -> bool {
        self.order.is_empty()
    }

    /// Variables sorted by position.
    pub fn order(&self) -> &[usize] {
        &self.order
    }

    /// `pos()[v]` is the position of variable `v`.
    pub fn pos(&self) -> &[usize] {
        &self.pos
    }

    pub fn reversed(&self) -> Self {
        let mut order = self.order.clone();
        order.reverse();
        CausalOrder::from_order(order).expect("reversal is a permutation")
    }

    /// The complete DAG in which every variable points to every later one.
    pub fn induced_dag(&self) -> Dag {
        let d = self.len();
        let mut edges = Vec::with_capacity(d * d.saturating_sub(1) / 2);
        for (p, &i) in self.order.iter().enumerate() {
            for &j in &self.order[p + 1..] {
                edges.push((i, j));
            }
        }
        Dag::from_edges(d, &edges).expect("an order induces an acyclic graph")
    }

    /// Single CSV row of variable names in causal order.
    pub fn to_csv(&self, names: &[String]) -> String {
        let row: Vec<&str> = self.order.iter().map(|&v| names[v].as_str()).collect();
        format!("{}\n", row.join(","))
    }
}

#[derive(Debug, Clone, PartialEq)]
pub struct FicoStep<T> {
    /// Surviving variables at this step, in ascending original index.
    pub survivors: Vec<usize>,
    /// Fisher information of each survivor; empty when a single variable remained.
    pub fisher: Vec<T>,
    pub removed: usize,
}

#[derive(Debug, Clone, PartialEq)]
pub struct FicoResult<T> {
    pub order: CausalOrder,
    pub trace: Vec<FicoStep<T>>,
}

impl<T: Real> FicoResult<T> {
    /// `step,variable,fisher_info,removed`, one line per survivor per step.
    pub fn trace_csv(&self, names: &[String]) -> String {
        let mut out = String::from("step,variable,fisher_info,removed\n");
        for (s, step) in self.trace.iter().enumerate() {
            for (k, &v) in step.survivors.iter().enumerate() {
                let fi = step.fisher.get(k).map_or_else(|| "NA".to_string(), |f| f.to_string());
                out.push_str(&format!("{},{},{},{}\n", s + 1, names[v], fi, v == step.removed));
            }
        }
        out
    }
}

#[derive(Debug, Clone, PartialEq, Default)]
pub struct FicoOptions {
    pub stein: SteinOptions,
    /// Rescale every column to unit variance once before ordering, so Fisher information is
    /// compared in standardized rather than data units.
    pub standardize: bool,
}

/// Orders the columns of `samples` by repeatedly removing the survivor with the smallest
/// estimated Fisher information and prepending it to the order.
pub fn fico_order<T: Real>(samples: &SampleMatrix<T>, opts: &FicoOptions) -> Result<FicoResult<T>> {
    let d = samples.d();
    if samples.n() < 10 {
        return Err(Error::InvalidConfig(format!("ordering needs at least 10 samples, got {}", samples.n())));
    }
    samples.check_finite()?;
    let std = if opts.standardize { samples.standardize()?.samples } else { samples.clone() };
    let mut survivors: Vec<usize> = (0..d).collect();
    let mut reversed = Vec::with_capacity(d);
    let mut trace = Vec::with_capacity(d);
    for step in 1..=d {
        let (removed, fisher) = if survivors.len() == 1 {
            (survivors[0], Vec::new())
        } else {
            let sub = std.select(&survivors)?;
            let field = stein_score(&sub, &opts.stein).map_err(|e| Error::ScoreStep {
                step,
                columns: survivors.iter().map(|&v| samples.names()[v].clone()).collect(),
                source: Box::new(e),
            })?;
            let fi = fisher_info(&field);
            let k = fi.argmin().expect("nonempty survivors");
            (survivors[k], fi.values)
        };
        trace.push(FicoStep {
            survivors: survivors.clone(),
            fisher,
            removed,
        });
        survivors.retain(|&v| v != removed);
        reversed.push(removed);
    }
    reversed.reverse();
    let order = CausalOrder::from_order(reversed)?;
    debug_assert_eq!(order.len(), d);
    Ok(FicoResult { order, trace })
}

#[derive(Debug, Clone)]
pub struct BatchItem {
    pub id: String,
    pub result: std::result::Result<(CausalOrder, OrderScore), String>,
}

#[derive(Debug, Clone)]
pub struct BatchReport {
    pub items: Vec<BatchItem>,
    pub mean_odr: Option<f64>,
    /// Sample standard deviation; 0 for a single successful item.
    pub sd_odr: Option<f64>,
}

/// Orders every dataset against its ground-truth DAG; failures are recorded per item.
pub fn fico_batch(datasets: &[(String, SampleMatrix<f64>, Dag)], opts: &FicoOptions) -> BatchReport {
    let items: Vec<BatchItem> = datasets
        .par_iter()
        .map(|(id, samples, dag)| {
            let result = (|| {
                if samples.d() != dag.d() {
                    return Err(Error::DimensionMismatch {
                        expected: dag.d(),
                        found: samples.d(),
                    });
                }
                let r: FicoResult<f64> = fico_order(samples, opts)?;
                let score = order_divergence(&r.order, dag)?;
                Ok((r.order, score))
            })()
            .map_err(|e: Error| e.to_string());
            BatchItem { id: id.clone(), result }
        })
        .collect();
    let odrs: Vec<f64> = items.iter().filter_map(|i| i.result.as_ref().ok().map(|r| r.1.odr)).collect();
    let (mean_odr, sd_odr) = if odrs.is_empty() {
        (None, None)
    } else {
        let n = odrs.len() as f64;
        let mean = odrs.iter().sum::<f64>() / n;
        let sd = if odrs.len() > 1 {
            (odrs.iter().map(|v| (v - mean).powi(2)).sum::<f64>() / (n - 1.0)).sqrt()
        } else {
            0.0
        };
        (Some(mean), Some(sd))
    };
    BatchReport { items, mean_odr, sd_odr }
}

#[cfg(test)]
mod tests {
    use super::*;
    use ndarray::Array2;
    use rand::SeedableRng;
    use rand_chacha::ChaCha8Rng;
    use rand_distr::{Distribution, StandardNormal};

    fn linear_pair(n: usize, seed: u64) -> SampleMatrix<f64> {
        let mut rng = ChaCha8Rng::seed_from_u64(seed);
        let mut data = Array2::zeros((n, 2));
        for a in 0..n {
            let x: f64 = StandardNormal.sample(&mut rng);
            let u: f64 = StandardNormal.sample(&mut rng);
            data[[a, 0]] = x;
            data[[a, 1]] = 2.0 * x + 0.5 * u;
        }
        SampleMatrix::with_default_names(data).unwrap()
    }

    #[test]
    fn order_and_positions_are_inverse() {
        let o = CausalOrder::from_order(vec![2, 0, 1]).unwrap();
        assert_eq!(o.pos(), &[1, 2, 0]);
        assert_eq!(CausalOrder::from_positions(vec![1, 2, 0]).unwrap(), o);
        assert!(CausalOrder::from_order(vec![0, 0, 1]).is_err());
        assert!(CausalOrder::from_order(vec![0, 3]).is_err());
        assert_eq!(o.reversed().order(), &[1, 0, 2]);
    }

    #[test]
    fn induced_dag_is_complete_and_consistent() {
        let o = CausalOrder::from_order(vec![2, 0, 1]).unwrap();
        let dag = o.induced_dag();
        assert_eq!(dag.edge_count(), 3);
        assert!(dag.has_edge(2, 0) && dag.has_edge(2, 1) && dag.has_edge(0, 1));
        assert_eq!(order_divergence(&o, &dag).unwrap().od, 0);
    }

    #[test]
    fn linear_pair_cause_first() {
        let mut right = 0;
        for seed in 0..100 {
            let r: FicoResult<f64> = fico_order(&linear_pair(2000, seed), &FicoOptions::default()).unwrap();
            if r.order.order() == [0, 1] {
                right += 1;
            }
        }
        assert!(right >= 90, "{right}");
    }

    #[test]
    fn single_variable() {
        let mut rng = ChaCha8Rng::seed_from_u64(0);
        let data = Array2::from_shape_fn((20, 1), |_| StandardNormal.sample(&mut rng));
        let r: FicoResult<f64> = fico_order(&SampleMatrix::with_default_names(data).unwrap(), &FicoOptions::default()).unwrap();
        assert_eq!(r.order.order(), &[0]);
        assert_eq!(r.trace.len(), 1);
        assert!(r.trace[0].fisher.is_empty());
    }

    #[test]
    fn trace_shrinks_by_one() {
        let mut rng = ChaCha8Rng::seed_from_u64(1);
        let data = Array2::from_shape_fn((200, 4), |_| StandardNormal.sample(&mut rng));
        let r: FicoResult<f64> = fico_order(&SampleMatrix::with_default_names(data).unwrap(), &FicoOptions::default()).unwrap();
        for (s, step) in r.trace.iter().enumerate() {
            assert_eq!(step.survivors.len(), 4 - s);
            if step.survivors.len() > 1 {
                assert_eq!(step.fisher.len(), step.survivors.len());
            }
        }
        assert_eq!(r.order.order()[0], r.trace[3].removed);
        let csv = r.trace_csv(&crate::datasets::default_names(4));
        assert_eq!(csv.lines().count(), 1 + 4 + 3 + 2 + 1);
    }

    #[test]
    fn independent_columns_have_no_preferred_order() {
        let mut counts = std::collections::HashMap::new();
        for seed in 0..300 {
            let mut rng = ChaCha8Rng::seed_from_u64(seed);
            let data = Array2::from_shape_fn((100, 3), |_| StandardNormal.sample(&mut rng));
            let r: FicoResult<f64> = fico_order(&SampleMatrix::with_default_names(data).unwrap(), &FicoOptions::default()).unwrap();
            *counts.entry(r.order.order().to_vec()).or_insert(0usize) += 1;
        }
        let max = counts.values().copied().max().unwrap();
        assert!(max <= 120, "{counts:?}");
    }

    #[test]
    fn batch_summary() {
        let chain = Dag::chain(2);
        let s = linear_pair(300, 3);
        let items = vec![
            ("a".to_string(), s.clone(), chain.clone()),
            ("b".to_string(), s.clone(), chain.clone()),
            ("bad".to_string(), s, Dag::chain(3)),
        ];
        let r = fico_batch(&items, &FicoOptions::default());
        assert!(r.items[2].result.is_err());
        let (a, b) = (r.items[0].result.as_ref().unwrap(), r.items[1].result.as_ref().unwrap());
        assert_eq!(a, b);
        assert_eq!(r.sd_odr, Some(0.0));
    }

    #[test]
    fn perfect_and_reversed_orders() {
        let dag = Dag::chain(4);
        let topo = CausalOrder::identity(4);
        assert_eq!(order_divergence(&topo, &dag).unwrap().odr, 0.0);
        assert_eq!(order_divergence(&topo.reversed(), &dag).unwrap().odr, 1.0);
    }
}
