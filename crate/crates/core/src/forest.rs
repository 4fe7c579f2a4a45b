//! CART classification trees and a bagged random forest. Feature importance
//! is mean decrease in Gini impurity.

use rand::seq::index::sample;
use rand::Rng;
use rayon::prelude::*;
use serde::{Deserialize, Serialize};

use crate::error::{Error, Result};
use crate::rng::{derive_seed, stream, Stage, StreamRng};

/// Splits must decrease impurity by more than this to count as positive.
pub const MIN_DECREASE: f64 = 1e-12;

/// `1 - sum(p_c^2)`.
pub fn gini(class_counts: &[usize]) -> Result<f64> {
    let total: usize = class_counts.iter().sum();
    if total == 0 {
        return Err(Error::Domain("gini of an empty node".into()));
    }
    Ok(gini_unchecked(class_counts, total))
}

fn gini_unchecked(counts: &[usize], total: usize) -> f64 {
    let t = total as f64;
    1.0 - counts
        .iter()
        .map(|&c| {
            let p = c as f64 / t;
            p * p
        })
        .sum::<f64>()
}

/// Impurity decrease of splitting a node with `parent` counts into `left`/`right`.
pub fn split_decrease(parent: &[usize], left: &[usize], right: &[usize]) -> f64 {
    let n: usize = parent.iter().sum();
    let nl: usize = left.iter().sum();
    let nr = n - nl;
    let nf = n as f64;
    gini_unchecked(parent, n)
        - (nl as f64 / nf) * gini_unchecked(left, nl)
        - (nr as f64 / nf) * gini_unchecked(right, nr)
}

/// Exact ranking key of a split within one node. The decrease equals
/// `(sum_l c^2 / n_l + sum_r c^2 / n_r - sum_p c^2 / n) / n`, so within a node
/// it orders like the fraction `(s_l n_r + s_r n_l) / (n_l n_r)`. Comparing
/// that fraction in integers makes mathematically equal gains tie exactly.
#[derive(Debug, Clone, Copy)]
struct GainKey {
    num: u128,
    den: u128,
}

impl GainKey {
    fn new(left: &[usize], right: &[usize]) -> Self {
        let sq = |c: &[usize]| c.iter().map(|&v| (v as u128) * (v as u128)).sum::<u128>();
        let nl = left.iter().sum::<usize>() as u128;
        let nr = right.iter().sum::<usize>() as u128;
        GainKey {
            num: sq(left) * nr + sq(right) * nl,
            den: nl * nr,
        }
    }

    fn beats(&self, other: &GainKey) -> bool {
        self.num * other.den > other.num * self.den
    }
}

#[derive(Debug, Clone, Copy, PartialEq, Serialize, Deserialize)]
pub struct Split {
    pub feature: usize,
    /// Samples with `x[feature] <= threshold` go left.
    pub threshold: f64,
    pub impurity_decrease: f64,
}

fn midpoint(lo: f64, hi: f64) -> f64 {
    let m = lo + (hi - lo) / 2.0;
    if m >= hi {
        lo
    } else {
        m
    }
}

/// Best Gini split of the given samples over `candidate_features`, trying
/// midpoints between consecutive distinct values. Ties go to the lower
/// feature index, then the lower threshold.
pub fn best_split(
    samples: &[Vec<f64>],
    labels: &[usize],
    candidate_features: &[usize],
    n_classes: usize,
) -> Option<Split> {
    let idx: Vec<usize> = (0..samples.len()).collect();
    best_split_on(samples, labels, &idx, candidate_features, n_classes, MIN_DECREASE)
}

fn best_split_on(
    samples: &[Vec<f64>],
    labels: &[usize],
    idx: &[usize],
    candidate_features: &[usize],
    n_classes: usize,
    min_decrease: f64,
) -> Option<Split> {
    if idx.len() < 2 {
        return None;
    }
    let mut parent = vec![0usize; n_classes];
    for &i in idx {
        parent[labels[i]] += 1;
    }
    let mut features = candidate_features.to_vec();
    features.sort_unstable();
    features.dedup();

    let mut best: Option<(Split, GainKey)> = None;
    let mut order = idx.to_vec();
    let mut left = vec![0usize; n_classes];
    let mut right = vec![0usize; n_classes];
    for &f in &features {
        order.sort_by(|&a, &b| samples[a][f].total_cmp(&samples[b][f]));
        left.iter_mut().for_each(|c| *c = 0);
        right.copy_from_slice(&parent);
        for w in 0..order.len() - 1 {
            let lab = labels[order[w]];
            left[lab] += 1;
            right[lab] -= 1;
            let (lo, hi) = (samples[order[w]][f], samples[order[w + 1]][f]);
            if lo == hi {
                continue;
            }
            let decrease = split_decrease(&parent, &left, &right);
            if decrease <= min_decrease {
                continue;
            }
            let key = GainKey::new(&left, &right);
            // features ascend and thresholds ascend within a feature, so
            // strict improvement keeps the earliest of tied candidates
            if best.as_ref().is_none_or(|(_, b)| key.beats(b)) {
                let split = Split {
                    feature: f,
                    threshold: midpoint(lo, hi),
                    impurity_decrease: decrease,
                };
                best = Some((split, key));
            }
        }
    }
    best.map(|(split, _)| split)
}

#[derive(Debug, Clone, PartialEq, Serialize, Deserialize)]
pub enum Node {
    Leaf {
        class_counts: Vec<usize>,
    },
    Internal {
        feature: usize,
        threshold: f64,
        left: usize,
        right: usize,
        /// Node-local Gini decrease of the split.
        impurity_decrease: f64,
        n_samples: usize,
    },
}

#[derive(Debug, Clone, PartialEq, Serialize, Deserialize)]
pub struct Tree {
    /// Root at index 0.
    pub nodes: Vec<Node>,
    pub n_features: usize,
    pub n_classes: usize,
    pub n_samples: usize,
}

fn plurality(counts: &[usize]) -> usize {
    let mut best = 0;
    for (c, &n) in counts.iter().enumerate() {
        if n > counts[best] {
            best = c;
        }
    }
    best
}

impl Tree {
    pub fn predict(&self, x: &[f64]) -> usize {
        let mut at = 0;
        loop {
            match &self.nodes[at] {
                Node::Leaf { class_counts } => return plurality(class_counts),
                Node::Internal { feature, threshold, left, right, .. } => {
                    at = if x[*feature] <= *threshold { *left } else { *right };
                }
            }
        }
    }

    /// Impurity decrease per feature, each split weighted by the fraction of
    /// the tree's samples reaching it, normalized to sum 1 (all zero if the
    /// tree has no positive-gain split).
    pub fn importance(&self) -> Vec<f64> {
        let mut imp = vec![0.0; self.n_features];
        for node in &self.nodes {
            if let Node::Internal { feature, impurity_decrease, n_samples, .. } = node {
                imp[*feature] += *n_samples as f64 / self.n_samples as f64 * impurity_decrease;
            }
        }
        normalize(&mut imp);
        imp
    }

    pub fn split_count(&self) -> usize {
        self.nodes.iter().filter(|n| matches!(n, Node::Internal { .. })).count()
    }
}

fn normalize(v: &mut [f64]) {
    let s: f64 = v.iter().sum();
    if s > 0.0 {
        v.iter_mut().for_each(|x| *x /= s);
    }
}

#[derive(Debug, Clone, Copy, PartialEq, Serialize, Deserialize)]
pub struct ForestParams {
    pub n_trees: usize,
    /// `None` grows until pure or too small to split.
    pub max_depth: Option<usize>,
    pub min_samples_split: usize,
    /// Candidate features drawn per split; `None` means `ceil(sqrt(d))`.
    pub features_per_split: Option<usize>,
    pub bootstrap: bool,
}

impl Default for ForestParams {
    fn default() -> Self {
        ForestParams {
            n_trees: 100,
            max_depth: None,
            min_samples_split: 2,
            features_per_split: None,
            bootstrap: true,
        }
    }
}

struct Grower<'a> {
    samples: &'a [Vec<f64>],
    labels: &'a [usize],
    n_classes: usize,
    n_features: usize,
    features_per_split: usize,
    params: &'a ForestParams,
    rng: StreamRng,
    nodes: Vec<Node>,
}

impl Grower<'_> {
    fn counts(&self, idx: &[usize]) -> Vec<usize> {
        let mut c = vec![0; self.n_classes];
        for &i in idx {
            c[self.labels[i]] += 1;
        }
        c
    }

    fn choose_split(&mut self, idx: &[usize]) -> Option<Split> {
        let d = self.n_features;
        let drawn: Vec<usize> = sample(&mut self.rng, d, self.features_per_split).into_vec();
        if let Some(s) = best_split_on(self.samples, self.labels, idx, &drawn, self.n_classes, MIN_DECREASE) {
            return Some(s);
        }
        // nothing splits among the drawn features: fall back to the rest
        let rest: Vec<usize> = (0..d).filter(|f| !drawn.contains(f)).collect();
        if let Some(s) = best_split_on(self.samples, self.labels, idx, &rest, self.n_classes, MIN_DECREASE) {
            return Some(s);
        }
        // An impure node can have no positive-gain axis split (XOR-like
        // layouts). Take the best zero-gain split so the tree still grows to
        // purity; its gain is recorded as 0 so importances are unaffected.
        let all: Vec<usize> = (0..d).collect();
        best_split_on(self.samples, self.labels, idx, &all, self.n_classes, f64::NEG_INFINITY)
            .map(|s| Split { impurity_decrease: 0.0, ..s })
    }

    fn grow(&mut self, idx: Vec<usize>, depth: usize) -> usize {
        let counts = self.counts(&idx);
        let at = self.nodes.len();
        self.nodes.push(Node::Leaf { class_counts: counts.clone() });
        let pure = counts.iter().filter(|&&c| c > 0).count() <= 1;
        let depth_capped = self.params.max_depth.is_some_and(|m| depth >= m);
        if pure || depth_capped || idx.len() < self.params.min_samples_split.max(2) {
            return at;
        }
        let Some(split) = self.choose_split(&idx) else {
            return at;
        };
        let (l, r): (Vec<usize>, Vec<usize>) = idx
            .iter()
            .partition(|&&i| self.samples[i][split.feature] <= split.threshold);
        let n_samples = idx.len();
        let left = self.grow(l, depth + 1);
        let right = self.grow(r, depth + 1);
        self.nodes[at] = Node::Internal {
            feature: split.feature,
            threshold: split.threshold,
            left,
            right,
            impurity_decrease: split.impurity_decrease,
            n_samples,
        };
        at
    }
}

/// Fits one CART tree on the rows listed in `idx` (repeats allowed).
pub fn fit_tree(
    samples: &[Vec<f64>],
    labels: &[usize],
    idx: Vec<usize>,
    n_classes: usize,
    params: &ForestParams,
    rng: StreamRng,
) -> Tree {
    let n_features = samples[0].len();
    let fps = params
        .features_per_split
        .unwrap_or_else(|| (n_features as f64).sqrt().ceil() as usize)
        .clamp(1, n_features);
    let n_samples = idx.len();
    let mut g = Grower {
        samples,
        labels,
        n_classes,
        n_features,
        features_per_split: fps,
        params,
        rng,
        nodes: Vec::new(),
    };
    g.grow(idx, 0);
    Tree {
        nodes: g.nodes,
        n_features,
        n_classes,
        n_samples,
    }
}

#[derive(Debug, Clone, PartialEq, Serialize, Deserialize)]
pub struct Forest {
    pub trees: Vec<Tree>,
    pub n_features: usize,
    pub n_classes: usize,
    pub importances: Vec<f64>,
    pub params: ForestParams,
    pub seed: u64,
}

/// Fits `n_trees` trees; tree `t` draws its bootstrap sample and feature
/// subsets from the stream `(seed, t)`.
pub fn forest_fit(samples: &[Vec<f64>], labels: &[usize], params: &ForestParams, seed: u64) -> Result<Forest> {
    let n = samples.len();
    if n < 2 {
        return Err(Error::Domain("forest needs at least two samples".into()));
    }
    if labels.len() != n {
        return Err(Error::Domain("labels and samples differ in length".into()));
    }
    let d = samples[0].len();
    if d == 0 || samples.iter().any(|s| s.len() != d) {
        return Err(Error::Domain("samples must share a nonzero dimension".into()));
    }
    if samples.iter().flatten().any(|v| !v.is_finite()) {
        return Err(Error::Domain("samples must be finite".into()));
    }
    if params.n_trees == 0 {
        return Err(Error::Domain("forest needs at least one tree".into()));
    }
    let n_classes = labels.iter().max().map_or(1, |m| m + 1);
    let trees: Vec<Tree> = (0..params.n_trees as u64)
        .into_par_iter()
        .map(|t| {
            let mut rng = stream(seed, Stage::Tree, t);
            let idx: Vec<usize> = if params.bootstrap {
                (0..n).map(|_| rng.gen_range(0..n)).collect()
            } else {
                (0..n).collect()
            };
            fit_tree(samples, labels, idx, n_classes, params, rng)
        })
        .collect();
    let mut forest = Forest {
        trees,
        n_features: d,
        n_classes,
        importances: Vec::new(),
        params: *params,
        seed,
    };
    forest.importances = feature_importance(&forest);
    Ok(forest)
}

/// Mean of per-tree normalized importances, renormalized to sum 1. All zero
/// when no tree made a positive-gain split.
pub fn feature_importance(forest: &Forest) -> Vec<f64> {
    let mut total = vec![0.0; forest.n_features];
    for tree in &forest.trees {
        for (t, v) in total.iter_mut().zip(tree.importance()) {
            *t += v;
        }
    }
    let k = forest.trees.len().max(1) as f64;
    total.iter_mut().for_each(|v| *v /= k);
    normalize(&mut total);
    total
}

/// Majority vote of tree predictions; ties go to the lowest class.
pub fn predict(forest: &Forest, x: &[f64]) -> Result<usize> {
    if x.len() != forest.n_features {
        return Err(Error::Domain(format!(
            "expected {} features, got {}",
            forest.n_features,
            x.len()
        )));
    }
    let mut votes = vec![0usize; forest.n_classes];
    for t in &forest.trees {
        votes[t.predict(x)] += 1;
    }
    Ok(plurality(&votes))
}

/// Derives the forest seed for a parent stream.
pub fn forest_seed(parent: u64) -> u64 {
    derive_seed(parent, Stage::Forest, 0)
}

#[cfg(test)]
mod tests {
    use super::*;
    use rand::SeedableRng;

    #[test]
    fn gini_examples() {
        assert_eq!(gini(&[4, 0]).unwrap(), 0.0);
        assert_eq!(gini(&[2, 2]).unwrap(), 0.5);
        assert!((gini(&[1; 7]).unwrap() - 6.0 / 7.0).abs() < 1e-15);
        assert!(gini(&[0, 0]).is_err());
    }

    #[test]
    fn separable_split() {
        let s: Vec<Vec<f64>> = [1.0, 2.0, 9.0, 10.0].iter().map(|&v| vec![v]).collect();
        let sp = best_split(&s, &[0, 0, 1, 1], &[0], 2).unwrap();
        assert_eq!(sp.feature, 0);
        assert_eq!(sp.threshold, 5.5);
        assert_eq!(sp.impurity_decrease, 0.5);
        assert!(best_split(&s, &[1, 1, 1, 1], &[0], 2).is_none());
    }

    #[test]
    fn split_ties_prefer_lower_feature() {
        let s = vec![vec![0.0, 0.0], vec![1.0, 1.0]];
        let sp = best_split(&s, &[0, 1], &[1, 0], 2).unwrap();
        assert_eq!(sp.feature, 0);
    }

    fn stump_forest() -> Forest {
        let s: Vec<Vec<f64>> = [1.0, 2.0, 9.0, 10.0].iter().map(|&v| vec![0.0, 0.0, v]).collect();
        let params = ForestParams { n_trees: 1, bootstrap: false, features_per_split: Some(3), ..Default::default() };
        forest_fit(&s, &[0, 0, 1, 1], &params, 3).unwrap()
    }

    #[test]
    fn stump_importance_is_one_hot() {
        let f = stump_forest();
        assert_eq!(f.trees[0].split_count(), 1);
        assert_eq!(f.importances, vec![0.0, 0.0, 1.0]);
        // hand computation: root weight 4/4, decrease 0.5
        match &f.trees[0].nodes[0] {
            Node::Internal { impurity_decrease, n_samples, .. } => {
                assert_eq!(*impurity_decrease, 0.5);
                assert_eq!(*n_samples, 4);
            }
            _ => panic!("root should split"),
        }
    }

    #[test]
    fn xor_grows_through_zero_gain_root() {
        let s = vec![vec![0.0, 0.0], vec![0.0, 1.0], vec![1.0, 0.0], vec![1.0, 1.0]];
        let labels = [0, 1, 1, 0];
        assert!(best_split(&s, &labels, &[0, 1], 2).is_none());
        let p = ForestParams { n_trees: 1, bootstrap: false, ..Default::default() };
        let f = forest_fit(&s, &labels, &p, 0).unwrap();
        for (x, &y) in s.iter().zip(&labels) {
            assert_eq!(predict(&f, x).unwrap(), y);
        }
        match &f.trees[0].nodes[0] {
            Node::Internal { feature, impurity_decrease, .. } => assert_eq!((*feature, *impurity_decrease), (0, 0.0)),
            _ => panic!("root should split"),
        }
        assert!((f.importances.iter().sum::<f64>() - 1.0).abs() < 1e-12);
    }

    #[test]
    fn constant_labels_never_split() {
        let s: Vec<Vec<f64>> = (0..10).map(|i| vec![i as f64, (i * 7 % 3) as f64]).collect();
        let f = forest_fit(&s, &[0; 10], &ForestParams { n_trees: 5, ..Default::default() }, 1).unwrap();
        assert_eq!(f.importances, vec![0.0, 0.0]);
        assert!(f.trees.iter().all(|t| t.split_count() == 0));
    }

    #[test]
    fn exact_tree_count_and_single_tree_prediction() {
        let s: Vec<Vec<f64>> = (0..20).map(|i| vec![i as f64]).collect();
        let labels: Vec<usize> = (0..20).map(|i| usize::from(i >= 10)).collect();
        let f = forest_fit(&s, &labels, &ForestParams::default(), 8).unwrap();
        assert_eq!(f.trees.len(), 100);
        let one = forest_fit(&s, &labels, &ForestParams { n_trees: 1, bootstrap: false, ..Default::default() }, 8).unwrap();
        for x in &s {
            assert_eq!(predict(&one, x).unwrap(), one.trees[0].predict(x));
        }
        let acc = s.iter().zip(&labels).filter(|(x, &y)| predict(&one, x).unwrap() == y).count();
        assert_eq!(acc, 20);
        assert!(predict(&one, &[1.0, 2.0]).is_err());
    }

    #[test]
    fn vote_ties_go_to_lowest_class() {
        let leaf = |c: Vec<usize>| Tree { nodes: vec![Node::Leaf { class_counts: c }], n_features: 1, n_classes: 4, n_samples: 1 };
        let f = Forest {
            trees: vec![leaf(vec![0, 1, 0, 0]), leaf(vec![1, 0, 0, 0])],
            n_features: 1,
            n_classes: 4,
            importances: vec![0.0],
            params: ForestParams::default(),
            seed: 0,
        };
        assert_eq!(predict(&f, &[0.0]).unwrap(), 0);
        let unanimous = Forest { trees: vec![leaf(vec![0, 0, 0, 2]); 3], ..f };
        assert_eq!(predict(&unanimous, &[0.0]).unwrap(), 3);
    }

    #[test]
    fn single_sample_rejected() {
        assert!(matches!(forest_fit(&[vec![1.0]], &[0], &ForestParams::default(), 0), Err(Error::Domain(_))));
    }

    fn random_data(n: usize, d: usize, classes: usize, seed: u64) -> (Vec<Vec<f64>>, Vec<usize>) {
        let mut rng = StreamRng::seed_from_u64(seed);
        let s = (0..n).map(|_| (0..d).map(|_| rng.gen::<f64>()).collect()).collect();
        let l = (0..n).map(|_| rng.gen_range(0..classes)).collect();
        (s, l)
    }

    #[test]
    fn memorizes_distinct_samples() {
        let (s, l) = random_data(60, 4, 5, 2);
        for fps in [1, 2, 4] {
            let p = ForestParams { n_trees: 1, bootstrap: false, features_per_split: Some(fps), ..Default::default() };
            let f = forest_fit(&s, &l, &p, 4).unwrap();
            for (x, &y) in s.iter().zip(&l) {
                assert_eq!(predict(&f, x).unwrap(), y);
            }
        }
    }

    #[test]
    fn constant_column_gets_zero_importance() {
        let (mut s, l) = random_data(80, 3, 3, 6);
        s.iter_mut().for_each(|r| r.push(0.25));
        let f = forest_fit(&s, &l, &ForestParams { n_trees: 20, ..Default::default() }, 1).unwrap();
        assert_eq!(f.importances[3], 0.0);
        assert!((f.importances.iter().sum::<f64>() - 1.0).abs() < 1e-9);
    }

    #[test]
    fn column_permutation_preserves_split_gains() {
        // Equal-gain ties across features are broken by index, so only the
        // gains (not which feature won) survive a column permutation in general.
        let (s, l) = random_data(70, 4, 3, 13);
        let perm = [2, 0, 3, 1];
        let permuted: Vec<Vec<f64>> = s.iter().map(|r| perm.iter().map(|&j| r[j]).collect()).collect();
        let p = ForestParams { n_trees: 15, max_depth: Some(1), features_per_split: Some(4), ..Default::default() };
        let a = forest_fit(&s, &l, &p, 5).unwrap();
        let b = forest_fit(&permuted, &l, &p, 5).unwrap();
        let gain = |t: &Tree| match &t.nodes[0] {
            Node::Internal { impurity_decrease, .. } => *impurity_decrease,
            Node::Leaf { .. } => 0.0,
        };
        for (ta, tb) in a.trees.iter().zip(&b.trees) {
            assert_eq!(gain(ta), gain(tb));
        }
        let stump = ForestParams { n_trees: 1, bootstrap: false, ..p };
        let a = forest_fit(&s, &l, &stump, 5).unwrap().importances;
        let b = forest_fit(&permuted, &l, &stump, 5).unwrap().importances;
        for (new, &old) in perm.iter().enumerate() {
            assert_eq!(b[new], a[old], "{a:?} vs {b:?}");
        }
    }

    #[test]
    fn deterministic_given_seed() {
        let (s, l) = random_data(50, 5, 4, 1);
        let p = ForestParams { n_trees: 10, ..Default::default() };
        assert_eq!(forest_fit(&s, &l, &p, 77).unwrap(), forest_fit(&s, &l, &p, 77).unwrap());
    }
}
