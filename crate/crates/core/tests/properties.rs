//! Cross-module invariants checked with generated inputs.

use proptest::prelude::*;

use atmloc::forest::{forest_fit, ForestParams, Node};
use atmloc::global_model::{default_global_weights, global_zip_score};
use atmloc::kmeans::{kmeans_fit, sse, KMeansParams};
use atmloc::optimizer::{exact_placement, greedy_placement, Candidate};
use atmloc::wealth::{wealth_estimate, WealthInputs};

fn points(max_n: usize, d: usize) -> impl Strategy<Value = Vec<Vec<f64>>> {
    prop::collection::vec(prop::collection::vec(0.0f64..1.0, d), 1..=max_n)
}

fn candidates(max_n: usize) -> impl Strategy<Value = Vec<Candidate>> {
    prop::collection::vec((0u32..50, 1u32..20), 1..=max_n).prop_map(|v| {
        v.into_iter()
            .enumerate()
            .map(|(i, (s, c))| Candidate::new(format!("c{i:02}"), f64::from(s), f64::from(c) / 2.0).unwrap())
            .collect()
    })
}

proptest! {
    #![proptest_config(ProptestConfig::with_cases(64))]

    #[test]
    fn kmeans_model_invariants(pts in points(25, 3), k in 1usize..5, seed in any::<u64>()) {
        prop_assume!(k <= pts.len());
        let params = KMeansParams { k, restarts: 3, max_iter: 50, ..KMeansParams::default() };
        let m = kmeans_fit(&pts, &params, seed).unwrap();
        prop_assert!(m.labels.iter().all(|&l| l < k));
        prop_assert!(m.iterations_run <= params.max_iter);
        for c in 0..k {
            prop_assert!(m.labels.contains(&c), "cluster {} empty", c);
        }
        let recomputed = sse(&pts, &m.centroids, &m.labels).unwrap();
        prop_assert!((recomputed - m.sse).abs() <= 1e-9);
        for w in m.sse_trace.windows(2) {
            prop_assert!(w[1] <= w[0] + 1e-9);
        }
        prop_assert_eq!(&m, &kmeans_fit(&pts, &params, seed).unwrap());
    }

    #[test]
    fn forest_structure_and_importances(
        rows in prop::collection::vec((prop::collection::vec(0.0f64..1.0, 4), 0usize..3), 2..40),
        seed in any::<u64>(),
    ) {
        let (mut samples, labels): (Vec<Vec<f64>>, Vec<usize>) = rows.into_iter().unzip();
        samples.iter_mut().for_each(|r| r.push(0.125));
        let f = forest_fit(&samples, &labels, &ForestParams { n_trees: 8, ..Default::default() }, seed).unwrap();
        prop_assert_eq!(f.importances[4], 0.0);
        prop_assert!(f.importances.iter().all(|&v| v >= 0.0));
        let sum: f64 = f.importances.iter().sum();
        let gained = f.trees.iter().flat_map(|t| &t.nodes).any(|n| {
            matches!(n, Node::Internal { impurity_decrease, .. } if *impurity_decrease > 0.0)
        });
        if gained {
            prop_assert!((sum - 1.0).abs() <= 1e-9);
        } else {
            prop_assert_eq!(sum, 0.0);
        }
        for t in &f.trees {
            for node in &t.nodes {
                if let Node::Internal { left, right, n_samples, .. } = node {
                    let count = |i: usize| -> usize {
                        // samples reaching a child: leaf counts or recorded n_samples
                        match &t.nodes[i] {
                            Node::Leaf { class_counts } => class_counts.iter().sum(),
                            Node::Internal { n_samples, .. } => *n_samples,
                        }
                    };
                    prop_assert!(count(*left) > 0 && count(*right) > 0);
                    prop_assert_eq!(count(*left) + count(*right), *n_samples);
                }
            }
        }
    }

    #[test]
    fn unbounded_tree_fits_consistent_training_data(
        rows in prop::collection::vec(prop::collection::vec(0u8..6, 3), 2..40),
        seed in any::<u64>(),
    ) {
        // labels as a function of the row guarantee no conflicting duplicates
        let samples: Vec<Vec<f64>> = rows.iter().map(|r| r.iter().map(|&v| f64::from(v)).collect()).collect();
        let labels: Vec<usize> = rows.iter().map(|r| usize::from(r[0] + 2 * r[1] + r[2]) % 3).collect();
        let p = ForestParams { n_trees: 1, bootstrap: false, ..Default::default() };
        let f = forest_fit(&samples, &labels, &p, seed).unwrap();
        for (x, &y) in samples.iter().zip(&labels) {
            prop_assert_eq!(f.trees[0].predict(x), y);
        }
    }

    #[test]
    fn plans_feasible_and_ordered(cs in candidates(14), budget in 0.0f64..60.0) {
        let exact = exact_placement(&cs, budget).unwrap();
        let greedy = greedy_placement(&cs, budget).unwrap();
        for plan in [&exact, &greedy] {
            prop_assert!(plan.total_cost <= budget);
            let picked: Vec<&Candidate> = cs.iter().filter(|c| plan.selected.contains(&c.id)).collect();
            let s: f64 = picked.iter().map(|c| c.score).sum();
            let c: f64 = picked.iter().map(|c| c.cost).sum();
            prop_assert!((s - plan.total_score).abs() <= 1e-9);
            prop_assert!((c - plan.total_cost).abs() <= 1e-9);
        }
        prop_assert!(exact.total_score >= greedy.total_score);
        prop_assert!(greedy.total_score >= 0.5 * exact.total_score);
        prop_assert_eq!(&exact, &exact_placement(&cs, budget).unwrap());
    }

    #[test]
    fn exact_monotone_in_budget(cs in candidates(12), low in 0.0f64..40.0, extra in 0.0f64..20.0) {
        let a = exact_placement(&cs, low).unwrap();
        let b = exact_placement(&cs, low + extra).unwrap();
        prop_assert!(b.total_score >= a.total_score);
    }

    #[test]
    fn wealth_estimate_monotone(
        pd in 0.0f64..1.0, mhi in 0.0f64..1.0, pne in 0.0f64..1.0,
        dpd in 0.0f64..1.0, dmhi in 0.0f64..1.0, dpne in 0.0f64..1.0,
    ) {
        let we = |a, b, c| wealth_estimate(&WealthInputs::new(a, b, c).unwrap());
        let base = we(pd, mhi, pne);
        prop_assert!(we((pd + dpd).min(1.0), mhi, pne) >= base);
        prop_assert!(we(pd, (mhi + dmhi).min(1.0), pne) >= base);
        prop_assert!(we(pd, mhi, (pne + dpne).min(1.0)) <= base);
    }

    #[test]
    fn global_score_is_linear_and_bounded(
        x in prop::collection::vec(0.0f64..1.0, 11),
        y in prop::collection::vec(0.0f64..1.0, 11),
        a in -3.0f64..3.0, b in -3.0f64..3.0,
    ) {
        let weights = default_global_weights();
        let names: Vec<String> = weights.entries().iter().map(|(n, _)| n.clone()).collect();
        let score = |row: &[f64]| global_zip_score(&weights, &names, "00000", row).unwrap().y_global;
        let mixed: Vec<f64> = x.iter().zip(&y).map(|(p, q)| a * p + b * q).collect();
        prop_assert!((score(&mixed) - (a * score(&x) + b * score(&y))).abs() <= 1e-12);
        let sx = score(&x);
        prop_assert!((0.0..=weights.sum() + 1e-12).contains(&sx));
    }
}
