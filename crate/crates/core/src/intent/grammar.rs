use std::collections::BTreeMap;

use rand::{Rng, SeedableRng};
use rand_chacha::ChaCha8Rng;
use serde::{Deserialize, Serialize};

use super::IntentError;

/// Above this many orderings the next-subgoal prior is estimated by sampling.
pub const ENUMERATION_LIMIT: u64 = 10_000;
const MAX_SUBGOALS: usize = 20;

/// Weight of one complete subgoal ordering.
#[derive(Debug, Clone, PartialEq, Serialize, Deserialize)]
pub struct SequenceWeight {
    pub sequence: Vec<String>,
    pub weight: f64,
}

/// Partial-order task grammar: subgoals, precedence pairs `a ≺ b`, and
/// optional weights on complete orderings (unlisted orderings weigh 1).
#[derive(Debug, Clone, PartialEq, Serialize, Deserialize)]
#[serde(deny_unknown_fields)]
pub struct TaskGrammar {
    pub subgoals: Vec<String>,
    #[serde(default)]
    pub before: Vec<(String, String)>,
    #[serde(default)]
    pub weights: Vec<SequenceWeight>,
}

impl TaskGrammar {
    pub fn new(subgoals: Vec<String>, before: Vec<(String, String)>) -> Result<Self, IntentError> {
        let g = Self { subgoals, before, weights: Vec::new() };
        g.validate()?;
        Ok(g)
    }

    pub fn unordered<S: Into<String>>(subgoals: impl IntoIterator<Item = S>) -> Self {
        Self { subgoals: subgoals.into_iter().map(Into::into).collect(), before: Vec::new(), weights: Vec::new() }
    }

    /// Mug before coffee maker; milk and sugar in any order.
    pub fn coffee() -> Self {
        Self {
            subgoals: ["mug", "coffee_maker", "milk", "sugar"].map(String::from).to_vec(),
            before: vec![("mug".into(), "coffee_maker".into())],
            weights: Vec::new(),
        }
    }

    fn index(&self, id: &str) -> Result<usize, IntentError> {
        self.subgoals.iter().position(|s| s == id).ok_or_else(|| IntentError::UnknownSubgoal(id.to_owned()))
    }

    pub fn validate(&self) -> Result<(), IntentError> {
        if self.subgoals.is_empty() {
            return Err(IntentError::EmptyGoals);
        }
        if self.subgoals.len() > MAX_SUBGOALS {
            return Err(IntentError::TooManySubgoals(self.subgoals.len()));
        }
        for (i, s) in self.subgoals.iter().enumerate() {
            if self.subgoals[..i].contains(s) {
                return Err(IntentError::DuplicateGoal(s.clone()));
            }
        }
        let preds = self.predecessor_masks()?;
        // Kahn's algorithm over bitmasks
        let mut done = 0u32;
        for _ in 0..self.subgoals.len() {
            let ready = (0..self.subgoals.len()).find(|&i| done & (1 << i) == 0 && preds[i] & !done == 0);
            match ready {
                Some(i) => done |= 1 << i,
                None => return Err(IntentError::CyclicGrammar),
            }
        }
        for w in &self.weights {
            if !(w.weight >= 0.0 && w.weight.is_finite()) {
                return Err(IntentError::InvalidParam("sequence weights must be finite and non-negative".into()));
            }
            for s in &w.sequence {
                self.index(s)?;
            }
        }
        Ok(())
    }

    fn predecessor_masks(&self) -> Result<Vec<u32>, IntentError> {
        let mut preds = vec![0u32; self.subgoals.len()];
        for (a, b) in &self.before {
            let (a, b) = (self.index(a)?, self.index(b)?);
            preds[b] |= 1 << a;
        }
        Ok(preds)
    }

    fn sequence_weight(&self, completed: &[String], rest: &[usize]) -> f64 {
        for w in &self.weights {
            let n = completed.len();
            if w.sequence.len() != n + rest.len() {
                continue;
            }
            let head_ok = w.sequence[..n].iter().all(|s| completed.contains(s));
            let tail_ok = w.sequence[n..].iter().zip(rest).all(|(s, &i)| *s == self.subgoals[i]);
            if head_ok && tail_ok {
                return w.weight;
            }
        }
        1.0
    }

    /// Orderings of the subgoals not yet completed that respect the partial
    /// order given `completed`.
    pub fn count_orderings(&self, completed: &[String]) -> Result<u64, IntentError> {
        let (preds, start) = self.state(completed)?;
        Ok(count_table(&preds, self.subgoals.len())[start as usize])
    }

    fn state(&self, completed: &[String]) -> Result<(Vec<u32>, u32), IntentError> {
        self.validate()?;
        let preds = self.predecessor_masks()?;
        let mut mask = 0u32;
        for c in completed {
            mask |= 1 << self.index(c)?;
        }
        Ok((preds, mask))
    }

    /// Prior over the next subgoal: total weight of the consistent orderings
    /// that start with it, normalized. Orderings are enumerated up to
    /// `ENUMERATION_LIMIT`, otherwise that many are drawn uniformly with a
    /// generator seeded by `seed`.
    pub fn next_subgoal_prior(&self, completed: &[String], seed: u64) -> Result<BTreeMap<String, f64>, IntentError> {
        let (preds, start) = self.state(completed)?;
        let n = self.subgoals.len();
        let counts = count_table(&preds, n);
        let mut mass = vec![0.0; n];
        if counts[start as usize] == 0 {
            return Err(IntentError::NoConsistentParse);
        }
        if counts[start as usize] <= ENUMERATION_LIMIT {
            let mut seq = Vec::new();
            self.enumerate(&preds, start, &mut seq, completed, &mut mass);
        } else {
            let mut rng = ChaCha8Rng::seed_from_u64(seed);
            for _ in 0..ENUMERATION_LIMIT {
                let seq = sample_ordering(&preds, &counts, start, n, &mut rng);
                mass[seq[0]] += self.sequence_weight(completed, &seq);
            }
        }
        let total: f64 = mass.iter().sum();
        if !(total > 0.0) {
            return Err(IntentError::NoConsistentParse);
        }
        Ok((0..n).filter(|&i| mass[i] > 0.0).map(|i| (self.subgoals[i].clone(), mass[i] / total)).collect())
    }

    fn enumerate(&self, preds: &[u32], mask: u32, seq: &mut Vec<usize>, completed: &[String], mass: &mut [f64]) {
        let n = self.subgoals.len();
        if mask.count_ones() as usize == n {
            if let Some(&first) = seq.first() {
                mass[first] += self.sequence_weight(completed, seq);
            }
            return;
        }
        for i in 0..n {
            if mask & (1 << i) == 0 && preds[i] & !mask == 0 {
                seq.push(i);
                self.enumerate(preds, mask | (1 << i), seq, completed, mass);
                seq.pop();
            }
        }
    }
}

/// `table[mask]` = number of valid orderings of the items outside `mask`.
fn count_table(preds: &[u32], n: usize) -> Vec<u64> {
    let full = (1u32 << n) - 1;
    let mut table = vec![0u64; 1 << n];
    table[full as usize] = 1;
    for mask in (0..full).rev() {
        let mut total = 0u64;
        for i in 0..n {
            if mask & (1 << i) == 0 && preds[i] & !mask == 0 {
                total = total.saturating_add(table[(mask | (1 << i)) as usize]);
            }
        }
        table[mask as usize] = total;
    }
    table
}

/// Uniform draw among the valid orderings, choosing each next item with
/// probability proportional to its completion count.
fn sample_ordering(preds: &[u32], counts: &[u64], mut mask: u32, n: usize, rng: &mut impl Rng) -> Vec<usize> {
    let mut seq = Vec::with_capacity(n);
    while (mask.count_ones() as usize) < n {
        let total = counts[mask as usize];
        let mut u = rng.random_range(0..total);
        for i in 0..n {
            if mask & (1 << i) == 0 && preds[i] & !mask == 0 {
                let c = counts[(mask | (1 << i)) as usize];
                if u < c {
                    seq.push(i);
                    mask |= 1 << i;
                    break;
                }
                u -= c;
            }
        }
    }
    seq
}

#[cfg(test)]
mod tests {
    use super::*;

    fn s(v: &[&str]) -> Vec<String> {
        v.iter().map(|x| x.to_string()).collect()
    }

    #[test]
    fn coffee_orderings() {
        let g = TaskGrammar::coffee();
        assert_eq!(g.count_orderings(&[]).unwrap(), 12);
        let p = g.next_subgoal_prior(&[], 0).unwrap();
        // 4!/2 orderings; mug leads 6, milk 3, sugar 3, coffee maker never
        assert_eq!(p.get("mug"), Some(&0.5));
        assert_eq!(p.get("milk"), Some(&0.25));
        assert!(!p.contains_key("coffee_maker"));
    }

    #[test]
    fn completed_mug_unlocks_coffee_maker() {
        let p = TaskGrammar::coffee().next_subgoal_prior(&s(&["mug"]), 0).unwrap();
        assert!(p.contains_key("coffee_maker"));
        assert!(!p.contains_key("mug"));
        assert!((p.values().sum::<f64>() - 1.0).abs() < 1e-12);
    }

    #[test]
    fn cycles_rejected() {
        let r = TaskGrammar::new(s(&["a", "b"]), vec![("a".into(), "b".into()), ("b".into(), "a".into())]);
        assert!(matches!(r, Err(IntentError::CyclicGrammar)));
        assert!(matches!(TaskGrammar::new(s(&["a"]), vec![("a".into(), "z".into())]), Err(IntentError::UnknownSubgoal(_))));
    }

    #[test]
    fn weights_shift_prior() {
        let mut g = TaskGrammar::unordered(["a", "b"]);
        g.weights.push(SequenceWeight { sequence: s(&["b", "a"]), weight: 3.0 });
        let p = g.next_subgoal_prior(&[], 0).unwrap();
        assert_eq!(p["b"], 0.75);
    }

    #[test]
    fn sampled_prior_close_to_exact_marginal() {
        // 8 unordered items: 40320 orderings, each first with mass 1/8
        let g = TaskGrammar::unordered((0..8).map(|i| format!("g{i}")));
        assert!(g.count_orderings(&[]).unwrap() > ENUMERATION_LIMIT);
        let p = g.next_subgoal_prior(&[], 3).unwrap();
        for v in p.values() {
            assert!((v - 0.125).abs() < 0.02, "{v}");
        }
    }
}
