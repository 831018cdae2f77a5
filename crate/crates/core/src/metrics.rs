//! Evaluation metrics: order divergence against a ground-truth DAG, weighted pair accuracy,
//! and the area under the decision-rate curve.

use crate::datasets::{Dag, Effect};
use crate::error::{Error, Result};
use crate::fico::CausalOrder;

#[derive(Debug, Clone, Copy, PartialEq)]
pub struct OrderScore {
    /// Number of true edges `i -> j` placed with `j` before `i`.
    pub od: usize,
    /// `od / total_edges`, or 0 for an empty graph.
    pub odr: f64,
    pub total_edges: usize,
}

pub fn order_divergence(order: &CausalOrder, dag: &Dag) -> Result<OrderScore> {
    if order.len() != dag.d() {
        return Err(Error::DimensionMismatch {
            expected: dag.d(),
            found: order.len(),
        });
    }
    let pos = order.pos();
    let mut od = 0;
    let mut total_edges = 0;
    for (i, j) in dag.edges() {
        total_edges += 1;
        if pos[i] > pos[j] {
            od += 1;
        }
    }
    let odr = if total_edges == 0 { 0.0 } else { od as f64 / total_edges as f64 };
    Ok(OrderScore { od, odr, total_edges })
}

fn check_lengths(n: usize, others: &[usize]) -> Result<()> {
    for &m in others {
        if m != n {
            return Err(Error::DimensionMismatch { expected: n, found: m });
        }
    }
    Ok(())
}

fn check_weights(weights: &[f64]) -> Result<()> {
    if weights.iter().any(|w| !w.is_finite() || *w < 0.0) {
        return Err(Error::InvalidConfig("weights must be finite and non-negative".into()));
    }
    if weights.iter().all(|w| *w == 0.0) {
        return Err(Error::InvalidConfig("weights are all zero".into()));
    }
    Ok(())
}

/// Weighted fraction of correct decisions; `None` entries are undecided and ignored.
pub fn pair_accuracy(decisions: &[Option<Effect>], truths: &[Effect], weights: &[f64]) -> Result<f64> {
    check_lengths(decisions.len(), &[truths.len(), weights.len()])?;
    check_weights(weights)?;
    let mut hit = 0.0;
    let mut total = 0.0;
    let mut decided = 0;
    for ((d, t), w) in decisions.iter().zip(truths).zip(weights) {
        if let Some(d) = d {
            decided += 1;
            total += w;
            if d == t {
                hit += w;
            }
        }
    }
    if decided == 0 || total == 0.0 {
        return Err(Error::NoDecisions);
    }
    Ok(hit / total)
}

/// Mean weighted accuracy over the top-`r` prefixes of the decided pairs ranked by descending
/// margin, `r = 1..P`. Equal margins keep their input order. Prefixes that carry zero weight are
/// left out of the mean.
pub fn audrc(margins: &[f64], decisions: &[Option<Effect>], truths: &[Effect], weights: &[f64]) -> Result<f64> {
    check_lengths(decisions.len(), &[margins.len(), truths.len(), weights.len()])?;
    check_weights(weights)?;
    if margins.iter().any(|m| m.is_nan()) {
        return Err(Error::InvalidConfig("margins must not be NaN".into()));
    }
    let mut idx: Vec<usize> = (0..decisions.len()).filter(|&i| decisions[i].is_some()).collect();
    if idx.is_empty() {
        return Err(Error::NoDecisions);
    }
    idx.sort_by(|&a, &b| margins[b].total_cmp(&margins[a]));
    let mut hit = 0.0;
    let mut total = 0.0;
    let mut sum = 0.0;
    let mut count = 0usize;
    for i in idx {
        total += weights[i];
        if decisions[i] == Some(truths[i]) {
            hit += weights[i];
        }
        if total > 0.0 {
            sum += hit / total;
            count += 1;
        }
    }
    if count == 0 {
        return Err(Error::NoDecisions);
    }
    Ok(sum / count as f64)
}

#[cfg(test)]
mod tests {
    use super::*;
    use crate::datasets::{random_dag, GraphModel};
    use proptest::prelude::*;
    use rand::seq::SliceRandom;
    use rand::{Rng, SeedableRng};
    use rand_chacha::ChaCha8Rng;

    fn order(v: &[usize]) -> CausalOrder {
        CausalOrder::from_order(v.to_vec()).unwrap()
    }

    #[test]
    fn chain_orders() {
        let dag = Dag::chain(3);
        let s = order_divergence(&order(&[0, 1, 2]), &dag).unwrap();
        assert_eq!((s.od, s.odr, s.total_edges), (0, 0.0, 2));
        let s = order_divergence(&order(&[2, 1, 0]), &dag).unwrap();
        assert_eq!((s.od, s.odr), (2, 1.0));
    }

    #[test]
    fn collider() {
        let dag = Dag::from_edges(3, &[(0, 2), (1, 2)]).unwrap();
        let s = order_divergence(&order(&[1, 2, 0]), &dag).unwrap();
        assert_eq!((s.od, s.odr), (1, 0.5));
    }

    #[test]
    fn empty_graph_and_mismatch() {
        let s = order_divergence(&order(&[1, 0]), &Dag::empty(2)).unwrap();
        assert_eq!((s.od, s.odr, s.total_edges), (0, 0.0, 0));
        assert!(order_divergence(&order(&[0, 1]), &Dag::empty(3)).is_err());
    }

    fn brute_force(pos: &[usize], dag: &Dag) -> usize {
        let d = dag.d();
        let mut od = 0;
        for i in 0..d {
            for j in 0..d {
                if dag.has_edge(i, j) && pos[i] > pos[j] {
                    od += 1;
                }
            }
        }
        od
    }

    proptest! {
        #[test]
        fn matches_brute_force(d in 2usize..=8, seed in any::<u64>(), ef in 0.5f64..3.0, sf in any::<bool>()) {
            let model = if sf { GraphModel::Sf } else { GraphModel::Er };
            let dag = random_dag(d, model, ef, seed).unwrap();
            let mut perm: Vec<usize> = (0..d).collect();
            perm.shuffle(&mut ChaCha8Rng::seed_from_u64(seed ^ 0x5eed));
            let o = order(&perm);
            let s = order_divergence(&o, &dag).unwrap();
            prop_assert_eq!(s.od, brute_force(o.pos(), &dag));
            prop_assert!(s.odr >= 0.0 && s.odr <= 1.0);
            let topo = order(&dag.topological_order().unwrap());
            prop_assert_eq!(order_divergence(&topo, &dag).unwrap().od, 0);
        }

        #[test]
        fn relabeling_invariance(d in 2usize..=8, seed in any::<u64>()) {
            let dag = random_dag(d, GraphModel::Er, 1.5, seed).unwrap();
            let mut rng = ChaCha8Rng::seed_from_u64(seed);
            let mut perm: Vec<usize> = (0..d).collect();
            perm.shuffle(&mut rng);
            let mut relabel: Vec<usize> = (0..d).collect();
            relabel.shuffle(&mut rng);
            let edges: Vec<(usize, usize)> = dag.edges().map(|(i, j)| (relabel[i], relabel[j])).collect();
            let dag2 = Dag::from_edges(d, &edges).unwrap();
            let perm2: Vec<usize> = perm.iter().map(|&v| relabel[v]).collect();
            prop_assert_eq!(
                order_divergence(&order(&perm), &dag).unwrap().od,
                order_divergence(&order(&perm2), &dag2).unwrap().od
            );
        }
    }

    #[test]
    fn accuracy_examples() {
        let t = [Effect::Y, Effect::X];
        assert_eq!(pair_accuracy(&[Some(Effect::Y), Some(Effect::X)], &t, &[1.0, 1.0]).unwrap(), 1.0);
        assert_eq!(pair_accuracy(&[Some(Effect::X), Some(Effect::Y)], &t, &[1.0, 1.0]).unwrap(), 0.0);
        assert_eq!(pair_accuracy(&[Some(Effect::Y), Some(Effect::Y)], &t, &[3.0, 1.0]).unwrap(), 0.75);
        assert_eq!(pair_accuracy(&[Some(Effect::Y), None], &t, &[1.0, 1.0]).unwrap(), 1.0);
        assert!(matches!(pair_accuracy(&[None, None], &t, &[1.0, 1.0]), Err(Error::NoDecisions)));
        assert!(pair_accuracy(&[Some(Effect::Y), None], &t, &[0.0, 0.0]).is_err());
        assert!(pair_accuracy(&[Some(Effect::Y)], &t, &[1.0, 1.0]).is_err());
    }

    #[test]
    fn audrc_examples() {
        let t = [Effect::Y, Effect::Y];
        let w = [1.0, 1.0];
        assert_eq!(audrc(&[0.3, 0.1], &[Some(Effect::Y), Some(Effect::Y)], &t, &w).unwrap(), 1.0);
        assert_eq!(audrc(&[0.3, 0.1], &[Some(Effect::Y), Some(Effect::X)], &t, &w).unwrap(), 0.75);
        assert_eq!(audrc(&[0.3, 0.1], &[Some(Effect::X), Some(Effect::Y)], &t, &w).unwrap(), 0.25);
        assert_eq!(audrc(&[0.1, 0.3], &[Some(Effect::X), Some(Effect::Y)], &t, &w).unwrap(), 0.75);
    }

    #[test]
    fn random_rule_audrc_near_half() {
        let mut rng = ChaCha8Rng::seed_from_u64(11);
        let mut total = 0.0;
        for _ in 0..1000 {
            let margins: Vec<f64> = (0..50).map(|_| rng.random()).collect();
            let decisions: Vec<Option<Effect>> =
                (0..50).map(|_| Some(if rng.random_bool(0.5) { Effect::Y } else { Effect::X })).collect();
            let truths = vec![Effect::Y; 50];
            total += audrc(&margins, &decisions, &truths, &[1.0; 50]).unwrap();
        }
        let mean = total / 1000.0;
        assert!((mean - 0.5).abs() < 0.05, "{mean}");
    }
}
