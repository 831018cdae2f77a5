use std::fmt;
use std::str::FromStr;

use rand::seq::SliceRandom;
use rand::{Rng, SeedableRng};
use rand_chacha::ChaCha8Rng;

use crate::error::{Error, Result};

/// Directed acyclic graph stored as a dense adjacency matrix; `adj[i][j]` is the edge `i -> j`.
#[derive(Debug, Clone, PartialEq, Eq)]
pub struct Dag {
    d: usize,
    adj: Vec<bool>,
}

#[derive(Debug, Clone, Copy, PartialEq, Eq)]
pub enum GraphModel {
    /// Erdos-Renyi over a random ordering.
    Er,
    /// Linear preferential attachment, edges from older to newer nodes.
    Sf,
}

impl FromStr for GraphModel {
    type Err = Error;
    fn from_str(s: &str) -> Result<Self> {
        match s.to_ascii_lowercase().as_str() {
            "er" => Ok(GraphModel::Er),
            "sf" => Ok(GraphModel::Sf),
            other => Err(Error::InvalidConfig(format!("unknown graph model `{other}`"))),
        }
    }
}

impl fmt::Display for GraphModel {
    fn fmt(&self, f: &mut fmt::Formatter<'_>) -> fmt::Result {
        f.write_str(match self {
            GraphModel::Er => "er",
            GraphModel::Sf => "sf",
        })
    }
}

impl Dag {
    pub fn empty(d: usize) -> Self {
        Dag {
            d,
            adj: vec![false; d * d],
        }
    }

    pub fn from_edges(d: usize, edges: &[(usize, usize)]) -> Result<Self> {
        let mut g = Dag::empty(d);
        for &(i, j) in edges {
            if i >= d || j >= d {
                return Err(Error::Structure(format!("edge {i}->{j} out of range for d={d}")));
            }
            if i == j {
                return Err(Error::Structure(format!("self-loop on {i}")));
            }
            g.adj[i * d + j] = true;
        }
        if !g.is_acyclic() {
            return Err(Error::Structure("graph contains a cycle".into()));
        }
        Ok(g)
    }

    pub fn from_adjacency(rows: &[Vec<bool>]) -> Result<Self> {
        let d = rows.len();
        let mut edges = Vec::new();
        for (i, row) in rows.iter().enumerate() {
            if row.len() != d {
                return Err(Error::DimensionMismatch {
                    expected: d,
                    found: row.len(),
                });
            }
            edges.extend(row.iter().enumerate().filter(|(_, &e)| e).map(|(j, _)| (i, j)));
        }
        Dag::from_edges(d, &edges)
    }

    /// `0 -> 1 -> ... -> d-1`.
    pub fn chain(d: usize) -> Self {
        let edges: Vec<_> = (1..d).map(|j| (j - 1, j)).collect();
        Dag::from_edges(d, &edges).expect("chains are acyclic")
    }

    pub fn d(&self) -> usize {
        self.d
    }

    #[inline]
    pub fn has_edge(&self, i: usize, j: usize) -> bool {
        self.adj[i * self.d + j]
    }

    pub fn edges(&self) -> impl Iterator<Item = (usize, usize)> + '_ {
        (0..self.d).flat_map(move |i| (0..self.d).filter(move |&j| self.has_edge(i, j)).map(move |j| (i, j)))
    }

    pub fn edge_count(&self) -> usize {
        self.adj.iter().filter(|&&e| e).count()
    }

    pub fn parents(&self, j: usize) -> Vec<usize> {
        (0..self.d).filter(|&i| self.has_edge(i, j)).collect()
    }

    pub fn children(&self, i: usize) -> Vec<usize> {
        (0..self.d).filter(|&j| self.has_edge(i, j)).collect()
    }

    pub fn adjacency_rows(&self) -> Vec<Vec<bool>> {
        (0..self.d).map(|i| (0..self.d).map(|j| self.has_edge(i, j)).collect()).collect()
    }

    /// Kahn's algorithm, smallest ready index first. `None` if a cycle exists.
    pub fn topological_order(&self) -> Option<Vec<usize>> {
        let d = self.d;
        let mut indeg: Vec<usize> = (0..d).map(|j| self.parents(j).len()).collect();
        let mut ready: std::collections::BTreeSet<usize> = (0..d).filter(|&j| indeg[j] == 0).collect();
        let mut order = Vec::with_capacity(d);
        while let Some(&i) = ready.iter().next() {
            ready.remove(&i);
            order.push(i);
            for j in 0..d {
                if self.has_edge(i, j) {
                    indeg[j] -= 1;
                    if indeg[j] == 0 {
                        ready.insert(j);
                    }
                }
            }
        }
        (order.len() == d).then_some(order)
    }

    pub fn is_acyclic(&self) -> bool {
        (0..self.d).all(|i| !self.has_edge(i, i)) && self.topological_order().is_some()
    }
}

/// Draws a random DAG. `edge_factor * d` is the expected edge count for ER and the number of
/// out-edges each new node receives under preferential attachment.
pub fn random_dag_with<R: Rng + ?Sized>(
    d: usize,
    model: GraphModel,
    edge_factor: f64,
    rng: &mut R,
) -> Result<Dag> {
    if d < 2 {
        return Err(Error::InvalidConfig(format!("d must be >= 2, got {d}")));
    }
    if !(edge_factor > 0.0) || !edge_factor.is_finite() {
        return Err(Error::InvalidConfig(format!("edge factor must be > 0, got {edge_factor}")));
    }
    let mut perm: Vec<usize> = (0..d).collect();
    perm.shuffle(rng);
    let mut g = Dag::empty(d);
    match model {
        GraphModel::Er => {
            let slots = (d * (d - 1) / 2) as f64;
            let p = (edge_factor * d as f64 / slots).clamp(0.0, 1.0);
            for a in 0..d {
                for b in a + 1..d {
                    if p >= 1.0 || rng.random::<f64>() < p {
                        g.adj[perm[a] * d + perm[b]] = true;
                    }
                }
            }
        }
        GraphModel::Sf => {
            let m = (edge_factor.round() as usize).max(1);
            let mut degree = vec![0usize; d];
            for t in 1..d {
                let take = m.min(t);
                let mut chosen: Vec<usize> = Vec::with_capacity(take);
                while chosen.len() < take {
                    let total: usize = (0..t).filter(|s| !chosen.contains(s)).map(|s| degree[s] + 1).sum();
                    let mut ticket = rng.random_range(0..total);
                    for s in (0..t).filter(|s| !chosen.contains(s)) {
                        let w = degree[s] + 1;
                        if ticket < w {
                            chosen.push(s);
                            break;
                        }
                        ticket -= w;
                    }
                }
                for s in chosen {
                    g.adj[perm[s] * d + perm[t]] = true;
                    degree[s] += 1;
                    degree[t] += 1;
                }
            }
        }
    }
    Ok(g)
}

pub fn random_dag(d: usize, model: GraphModel, edge_factor: f64, seed: u64) -> Result<Dag> {
    let mut rng = ChaCha8Rng::seed_from_u64(seed);
    random_dag_with(d, model, edge_factor, &mut rng)
}

#[cfg(test)]
mod tests {
    use super::*;

    #[test]
    fn two_nodes_always_connected() {
        for seed in 0..50 {
            let g = random_dag(2, GraphModel::Er, 4.0, seed).unwrap();
            assert_eq!(g.edge_count(), 1);
        }
    }

    #[test]
    fn five_nodes_complete() {
        for seed in 0..20 {
            let g = random_dag(5, GraphModel::Er, 4.0, seed).unwrap();
            assert_eq!(g.edge_count(), 10);
            assert!(g.is_acyclic());
        }
    }

    #[test]
    fn er_mean_edge_count_matches_binomial() {
        // p = 80/190; the expected count is exactly 80.
        let total: usize = (0..1000)
            .map(|s| random_dag(20, GraphModel::Er, 4.0, s).unwrap().edge_count())
            .sum();
        let mean = total as f64 / 1000.0;
        assert!((mean - 80.0).abs() < 8.0, "mean {mean}");
    }

    #[test]
    fn sf_edges_per_new_node() {
        let g = random_dag(10, GraphModel::Sf, 2.0, 3).unwrap();
        // node added at step t gets min(2, t) parents
        assert_eq!(g.edge_count(), 1 + 2 * 8);
        assert!(g.is_acyclic());
    }

    #[test]
    fn cycles_and_loops_rejected() {
        assert!(Dag::from_edges(3, &[(0, 1), (1, 2), (2, 0)]).is_err());
        assert!(Dag::from_edges(2, &[(1, 1)]).is_err());
        assert_eq!(Dag::chain(4).topological_order().unwrap(), vec![0, 1, 2, 3]);
    }

    #[test]
    fn invalid_parameters() {
        assert!(random_dag(1, GraphModel::Er, 4.0, 0).is_err());
        assert!(random_dag(4, GraphModel::Sf, 0.0, 0).is_err());
    }
}
