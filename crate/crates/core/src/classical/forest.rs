//! Random forest of CART trees with gini splits.

use rand::seq::SliceRandom;
use rand::{Rng, SeedableRng};
use rand_chacha::ChaCha8Rng;
use rayon::prelude::*;
use serde::{Deserialize, Serialize};

use crate::error::{Error, Result};

#[derive(Debug, Clone, Copy, PartialEq, Serialize, Deserialize)]
#[serde(default)]
pub struct ForestConfig {
    pub n_trees: usize,
    /// Columns drawn per split; `None` means floor(sqrt(d)).
    pub max_features: Option<usize>,
    pub min_leaf: usize,
    pub bootstrap: bool,
    pub seed: u64,
}

impl Default for ForestConfig {
    fn default() -> Self {
        ForestConfig { n_trees: 100, max_features: None, min_leaf: 1, bootstrap: true, seed: 0 }
    }
}

impl ForestConfig {
    pub fn validate(&self) -> Result<()> {
        if self.n_trees == 0 {
            return Err(Error::Config("forest needs n_trees >= 1".into()));
        }
        if self.min_leaf == 0 {
            return Err(Error::Config("forest min_leaf must be >= 1".into()));
        }
        if self.max_features == Some(0) {
            return Err(Error::Config("forest max_features must be >= 1".into()));
        }
        Ok(())
    }
}

#[derive(Debug, Clone, PartialEq, Serialize, Deserialize)]
pub enum Node {
    Leaf { label: u8 },
    Split { feature: usize, threshold: f64, left: usize, right: usize },
}

/// Flat tree; node 0 is the root.
#[derive(Debug, Clone, PartialEq, Serialize, Deserialize)]
pub struct Tree {
    pub nodes: Vec<Node>,
}

impl Tree {
    pub fn predict(&self, x: &[f64]) -> u8 {
        let mut at = 0;
        loop {
            match self.nodes[at] {
                Node::Leaf { label } => return label,
                Node::Split { feature, threshold, left, right } => {
                    at = if x[feature] <= threshold { left } else { right };
                }
            }
        }
    }
}

#[derive(Debug, Clone, PartialEq, Serialize, Deserialize)]
pub struct ForestModel {
    pub trees: Vec<Tree>,
    pub n_features: usize,
}

impl ForestModel {
    /// Fraction of trees voting PD.
    pub fn predict_proba(&self, x: &[f64]) -> Result<f64> {
        if x.len() != self.n_features {
            return Err(Error::DimensionMismatch { expected: self.n_features, got: x.len() });
        }
        let votes = self.trees.iter().filter(|t| t.predict(x) == 1).count();
        Ok(votes as f64 / self.trees.len() as f64)
    }

    pub fn predict(&self, x: &[f64]) -> Result<(u8, f64)> {
        let p = self.predict_proba(x)?;
        Ok((u8::from(p > 0.5), p))
    }
}

pub fn train_random_forest(x: &[Vec<f64>], y: &[u8], config: &ForestConfig) -> Result<ForestModel> {
    config.validate()?;
    if x.is_empty() || x.len() != y.len() {
        return Err(Error::invalid("forest needs matching, non-empty rows and labels"));
    }
    if !(y.contains(&0) && y.contains(&1)) {
        return Err(Error::invalid("forest training data must contain both classes"));
    }
    let d = x[0].len();
    let max_features = config.max_features.unwrap_or(((d as f64).sqrt().floor() as usize).max(1)).min(d);
    let trees = (0..config.n_trees)
        .into_par_iter()
        .map(|t| {
            let mut rng = ChaCha8Rng::seed_from_u64(config.seed);
            rng.set_stream(t as u64);
            let rows: Vec<usize> = if config.bootstrap {
                (0..x.len()).map(|_| rng.random_range(0..x.len())).collect()
            } else {
                (0..x.len()).collect()
            };
            let mut builder = Builder { x, y, max_features, min_leaf: config.min_leaf, rng, nodes: Vec::new() };
            builder.grow(rows);
            Tree { nodes: builder.nodes }
        })
        .collect();
    Ok(ForestModel { trees, n_features: d })
}

struct Builder<'a> {
    x: &'a [Vec<f64>],
    y: &'a [u8],
    max_features: usize,
    min_leaf: usize,
    rng: ChaCha8Rng,
    nodes: Vec<Node>,
}

impl Builder<'_> {
    fn grow(&mut self, rows: Vec<usize>) -> usize {
        let id = self.nodes.len();
        let pd = rows.iter().filter(|&&r| self.y[r] == 1).count();
        let majority = u8::from(2 * pd > rows.len() || (2 * pd == rows.len() && self.y[rows[0]] == 1));
        self.nodes.push(Node::Leaf { label: majority });
        if pd == 0 || pd == rows.len() || rows.len() < 2 * self.min_leaf {
            return id;
        }
        let Some((feature, threshold)) = self.best_split(&rows) else {
            return id;
        };
        let (l, r): (Vec<usize>, Vec<usize>) = rows.iter().partition(|&&i| self.x[i][feature] <= threshold);
        let left = self.grow(l);
        let right = self.grow(r);
        self.nodes[id] = Node::Split { feature, threshold, left, right };
        id
    }

    /// Scans random columns until `max_features` non-constant ones have been
    /// evaluated (or all columns are exhausted).
    fn best_split(&mut self, rows: &[usize]) -> Option<(usize, f64)> {
        let d = self.x[0].len();
        let mut cols: Vec<usize> = (0..d).collect();
        cols.shuffle(&mut self.rng);
        let n = rows.len() as f64;
        let total_pd = rows.iter().filter(|&&r| self.y[r] == 1).count() as f64;
        let mut best: Option<(f64, usize, f64)> = None;
        let mut evaluated = 0;
        let mut pairs: Vec<(f64, u8)> = Vec::with_capacity(rows.len());
        for &j in &cols {
            if evaluated >= self.max_features {
                break;
            }
            pairs.clear();
            pairs.extend(rows.iter().map(|&r| (self.x[r][j], self.y[r])));
            pairs.sort_by(|a, b| a.0.total_cmp(&b.0));
            if pairs[0].0 == pairs[pairs.len() - 1].0 {
                continue;
            }
            evaluated += 1;
            let mut left_n = 0.0;
            let mut left_pd = 0.0;
            for s in 0..pairs.len() - 1 {
                left_n += 1.0;
                left_pd += f64::from(pairs[s].1);
                if pairs[s].0 == pairs[s + 1].0 {
                    continue;
                }
                let right_n = n - left_n;
                if (left_n as usize) < self.min_leaf || (right_n as usize) < self.min_leaf {
                    continue;
                }
                let right_pd = total_pd - left_pd;
                let impurity = left_n * gini(left_pd / left_n) + right_n * gini(right_pd / right_n);
                if best.is_none_or(|(b, _, _)| impurity < b) {
                    best = Some((impurity, j, 0.5 * (pairs[s].0 + pairs[s + 1].0)));
                }
            }
        }
        best.map(|(_, j, t)| (j, t))
    }
}

fn gini(p: f64) -> f64 {
    2.0 * p * (1.0 - p)
}

#[cfg(test)]
mod tests {
    use super::*;
    use rand_distr::{Distribution, Normal};

    fn blobs(n: usize, seed: u64) -> (Vec<Vec<f64>>, Vec<u8>) {
        let mut rng = ChaCha8Rng::seed_from_u64(seed);
        let noise = Normal::new(0.0, 1.0).unwrap();
        let mut x = Vec::new();
        let mut y = Vec::new();
        for i in 0..n {
            let label = (i % 2) as u8;
            let c = if label == 1 { 3.0 } else { -3.0 };
            x.push((0..6).map(|_| c + noise.sample(&mut rng)).collect());
            y.push(label);
        }
        (x, y)
    }

    #[test]
    fn single_tree_memorizes() {
        let (x, y) = blobs(40, 1);
        let mut y = y;
        y[0] = 1 - y[0];
        let cfg = ForestConfig { n_trees: 1, bootstrap: false, max_features: Some(6), ..Default::default() };
        let m = train_random_forest(&x, &y, &cfg).unwrap();
        for (r, l) in x.iter().zip(&y) {
            assert_eq!(m.predict(r).unwrap().0, *l);
        }
    }

    #[test]
    fn deterministic() {
        let (x, y) = blobs(60, 2);
        let cfg = ForestConfig { n_trees: 15, seed: 9, ..Default::default() };
        let a = train_random_forest(&x, &y, &cfg).unwrap();
        let b = train_random_forest(&x, &y, &cfg).unwrap();
        assert_eq!(a, b);
    }

    #[test]
    fn separable_blobs_generalize() {
        let (x, y) = blobs(100, 3);
        let (tx, ty) = blobs(200, 4);
        let m = train_random_forest(&x, &y, &ForestConfig { n_trees: 30, seed: 1, ..Default::default() }).unwrap();
        let correct = tx.iter().zip(&ty).filter(|(r, l)| m.predict(r).unwrap().0 == **l).count();
        assert!(correct as f64 / 200.0 >= 0.95);
    }

    #[test]
    fn probability_is_vote_fraction() {
        let (x, y) = blobs(50, 5);
        let m = train_random_forest(&x, &y, &ForestConfig { n_trees: 7, seed: 2, ..Default::default() }).unwrap();
        let q = vec![0.1; 6];
        let votes = m.trees.iter().filter(|t| t.predict(&q) == 1).count();
        assert_eq!(m.predict_proba(&q).unwrap(), votes as f64 / 7.0);
    }

    #[test]
    fn single_class_rejected() {
        assert!(train_random_forest(&[vec![0.0], vec![1.0]], &[1, 1], &ForestConfig::default()).is_err());
    }
}
