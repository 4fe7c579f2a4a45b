//! Budgeted placement: pick candidates (counties or individual sites) that
//! maximize total score with total setup cost within budget. This is a 0/1
//! knapsack over real-valued scores and costs.
//!
//! Totals are always accumulated in candidate order, so equal subsets give
//! bit-identical totals regardless of how they were found.

use std::cmp::Ordering;

use serde::{Deserialize, Serialize};

use crate::error::{Error, Result};

pub const DEFAULT_EXACT_LIMIT: usize = 24;

#[derive(Debug, Clone, PartialEq, Serialize, Deserialize)]
pub struct Candidate {
    pub id: String,
    pub score: f64,
    pub cost: f64,
}

impl Candidate {
    pub fn new(id: impl Into<String>, score: f64, cost: f64) -> Result<Self> {
        let c = Candidate {
            id: id.into(),
            score,
            cost,
        };
        c.validate()?;
        Ok(c)
    }

    fn validate(&self) -> Result<()> {
        if !self.score.is_finite() || self.score < 0.0 {
            return Err(Error::Validation(format!("candidate '{}': score must be finite and >= 0", self.id)));
        }
        if !self.cost.is_finite() || self.cost <= 0.0 {
            return Err(Error::Validation(format!("candidate '{}': cost must be finite and > 0", self.id)));
        }
        Ok(())
    }
}

#[derive(Debug, Clone, Copy, PartialEq, Eq, Serialize, Deserialize)]
#[serde(rename_all = "lowercase")]
pub enum Method {
    Exact,
    Greedy,
}

impl std::fmt::Display for Method {
    fn fmt(&self, f: &mut std::fmt::Formatter<'_>) -> std::fmt::Result {
        f.write_str(match self {
            Method::Exact => "exact",
            Method::Greedy => "greedy",
        })
    }
}

#[derive(Debug, Clone, PartialEq, Serialize, Deserialize)]
pub struct Plan {
    /// Selected ids in candidate order.
    pub selected: Vec<String>,
    pub total_score: f64,
    pub total_cost: f64,
    pub method: Method,
}

fn check(candidates: &[Candidate], budget: f64) -> Result<()> {
    if !budget.is_finite() || budget < 0.0 {
        return Err(Error::Domain(format!("budget {budget} must be finite and >= 0")));
    }
    for c in candidates {
        c.validate()?;
    }
    Ok(())
}

fn plan_from(candidates: &[Candidate], mut picked: Vec<usize>, method: Method) -> Plan {
    picked.sort_unstable();
    let (mut s, mut c) = (0.0, 0.0);
    for &i in &picked {
        s += candidates[i].score;
        c += candidates[i].cost;
    }
    Plan {
        selected: picked.iter().map(|&i| candidates[i].id.clone()).collect(),
        total_score: s,
        total_cost: c,
        method,
    }
}

fn sorted_ids(plan: &Plan) -> Vec<&str> {
    let mut ids: Vec<&str> = plan.selected.iter().map(String::as_str).collect();
    ids.sort_unstable();
    ids
}

/// `Less` when `a` is the better plan: higher score, then lower cost, then
/// lexicographically smaller sorted id set.
pub fn compare_plans(a: &Plan, b: &Plan) -> Ordering {
    b.total_score
        .total_cmp(&a.total_score)
        .then(a.total_cost.total_cmp(&b.total_cost))
        .then_with(|| sorted_ids(a).cmp(&sorted_ids(b)))
}

struct Search<'a> {
    candidates: &'a [Candidate],
    budget: f64,
    /// suffix_score[i] = sum of scores of candidates i..
    suffix_score: Vec<f64>,
    stack: Vec<usize>,
    best: Option<Plan>,
}

impl Search<'_> {
    fn visit(&mut self, next: usize, score: f64, cost: f64) {
        if next == self.candidates.len() {
            let plan = Plan {
                selected: self.stack.iter().map(|&i| self.candidates[i].id.clone()).collect(),
                total_score: score,
                total_cost: cost,
                method: Method::Exact,
            };
            if self.best.as_ref().is_none_or(|b| compare_plans(&plan, b) == Ordering::Less) {
                self.best = Some(plan);
            }
            return;
        }
        if let Some(best) = &self.best {
            // sums are of nonnegative terms; an upper bound strictly below
            // the incumbent cannot tie or win
            if score + self.suffix_score[next] * (1.0 + 1e-12) < best.total_score {
                return;
            }
        }
        let c = &self.candidates[next];
        let with_cost = cost + c.cost;
        if with_cost <= self.budget {
            self.stack.push(next);
            self.visit(next + 1, score + c.score, with_cost);
            self.stack.pop();
        }
        self.visit(next + 1, score, cost);
    }
}

/// Exact optimum by depth-first enumeration with cost and score-bound pruning.
pub fn exact_placement(candidates: &[Candidate], budget: f64) -> Result<Plan> {
    exact_placement_with_limit(candidates, budget, DEFAULT_EXACT_LIMIT)
}

pub fn exact_placement_with_limit(candidates: &[Candidate], budget: f64, limit: usize) -> Result<Plan> {
    check(candidates, budget)?;
    if candidates.len() > limit {
        return Err(Error::Capacity(format!(
            "{} candidates exceed the exact-solver limit of {limit}; use greedy placement",
            candidates.len()
        )));
    }
    let mut suffix_score = vec![0.0; candidates.len() + 1];
    for i in (0..candidates.len()).rev() {
        suffix_score[i] = suffix_score[i + 1] + candidates[i].score;
    }
    let mut search = Search {
        candidates,
        budget,
        suffix_score,
        stack: Vec::new(),
        best: None,
    };
    search.visit(0, 0.0, 0.0);
    Ok(search.best.expect("the empty plan is always feasible"))
}

/// Ratio-greedy prefix compared against the best single affordable candidate.
pub fn greedy_placement(candidates: &[Candidate], budget: f64) -> Result<Plan> {
    check(candidates, budget)?;
    let mut order: Vec<usize> = (0..candidates.len()).collect();
    order.sort_by(|&a, &b| {
        let (ca, cb) = (&candidates[a], &candidates[b]);
        (cb.score / cb.cost)
            .total_cmp(&(ca.score / ca.cost))
            .then(cb.score.total_cmp(&ca.score))
            .then_with(|| ca.id.cmp(&cb.id))
    });
    let mut picked = Vec::new();
    let mut spent = 0.0;
    for &i in &order {
        if spent + candidates[i].cost > budget {
            break;
        }
        spent += candidates[i].cost;
        picked.push(i);
    }
    let greedy = plan_from(candidates, picked, Method::Greedy);
    let single = (0..candidates.len())
        .filter(|&i| candidates[i].cost <= budget)
        .map(|i| plan_from(candidates, vec![i], Method::Greedy))
        .min_by(compare_plans);
    Ok(match single {
        Some(s) if compare_plans(&s, &greedy) == Ordering::Less => s,
        _ => greedy,
    })
}

pub fn place(candidates: &[Candidate], budget: f64, method: Method) -> Result<Plan> {
    match method {
        Method::Exact => exact_placement(candidates, budget),
        Method::Greedy => greedy_placement(candidates, budget),
    }
}

#[cfg(test)]
mod tests {
    use super::*;

    fn c(id: &str, score: f64, cost: f64) -> Candidate {
        Candidate::new(id, score, cost).unwrap()
    }

    #[test]
    fn unconstrained_budget_takes_everything() {
        let cs = vec![c("a", 1.0, 2.0), c("b", 3.0, 1.0), c("c", 0.5, 4.0)];
        let p = exact_placement(&cs, 100.0).unwrap();
        assert_eq!(p.selected, vec!["a", "b", "c"]);
        assert_eq!(p.total_cost, 7.0);
    }

    #[test]
    fn zero_budget_is_empty() {
        let cs = vec![c("a", 1.0, 2.0)];
        let p = exact_placement(&cs, 0.0).unwrap();
        assert!(p.selected.is_empty());
        assert_eq!(p.total_score, 0.0);
        assert!(greedy_placement(&cs, 0.0).unwrap().selected.is_empty());
    }

    #[test]
    fn over_limit_is_capacity_error() {
        let cs: Vec<_> = (0..25).map(|i| c(&format!("c{i}"), 1.0, 1.0)).collect();
        let err = exact_placement(&cs, 3.0).unwrap_err();
        assert!(matches!(err, Error::Capacity(_)));
        assert!(err.to_string().contains("greedy"));
    }

    #[test]
    fn invalid_inputs() {
        assert!(Candidate::new("x", 1.0, 0.0).is_err());
        assert!(Candidate::new("x", -1.0, 1.0).is_err());
        assert!(matches!(exact_placement(&[], -1.0), Err(Error::Domain(_))));
    }

    #[test]
    fn greedy_falls_back_to_best_single() {
        let cs = vec![c("big", 10.0, 10.0), c("small", 9.0, 1.0)];
        let p = greedy_placement(&cs, 10.0).unwrap();
        assert_eq!(p.selected, vec!["big"]);
        assert_eq!(p.total_score, 10.0);
        let one = greedy_placement(&[c("a", 2.0, 1.0)], 1.0).unwrap();
        assert_eq!(one.selected, vec!["a"]);
    }

    #[test]
    fn ties_prefer_lower_cost_then_ids() {
        let cs = vec![c("b", 5.0, 2.0), c("a", 5.0, 3.0), c("c", 5.0, 2.0)];
        let p = exact_placement(&cs, 2.0).unwrap();
        assert_eq!(p.selected, vec!["b"]);
        let p = exact_placement(&cs, 3.0).unwrap();
        assert_eq!(p.selected, vec!["b"]);
    }
}
