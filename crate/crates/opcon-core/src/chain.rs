//! Finite-state analysis of the generator walk: stationary distributions and
//! the balance condition under which the walk reproduces the concept
//! distribution.

use nalgebra::{DMatrix, DVector};
use rand::Rng;
use serde::{Deserialize, Serialize};

use crate::error::{Error, Result};
use crate::util::seeded_rng;

/// A finite Markov chain over feature-vector states, with the concept
/// distribution it is meant to reproduce.
#[derive(Clone, Debug, Serialize, Deserialize)]
pub struct FiniteChain {
    pub states: Vec<Vec<f64>>,
    /// Row-stochastic transition matrix: `transition[i][j]` is P(j | i).
    pub transition: Vec<Vec<f64>>,
    /// Target probability vector over `states`.
    pub target: Vec<f64>,
}

impl FiniteChain {
    pub fn new(states: Vec<Vec<f64>>, transition: Vec<Vec<f64>>, target: Vec<f64>) -> Result<Self> {
        let n = states.len();
        if transition.len() != n || target.len() != n {
            return Err(Error::DimensionMismatch {
                expected: n,
                got: transition.len().max(target.len()),
            });
        }
        for row in &transition {
            if row.len() != n {
                return Err(Error::DimensionMismatch {
                    expected: n,
                    got: row.len(),
                });
            }
            if row.iter().any(|&p| p < 0.0) {
                return Err(Error::InvalidConfig(
                    "transition probabilities must be nonnegative".into(),
                ));
            }
            let sum: f64 = row.iter().sum();
            if (sum - 1.0).abs() > 1e-12 {
                return Err(Error::InvalidConfig(format!(
                    "transition row sums to {sum}, expected 1"
                )));
            }
        }
        let tsum: f64 = target.iter().sum();
        if (tsum - 1.0).abs() > 1e-12 {
            return Err(Error::InvalidConfig(format!(
                "target sums to {tsum}, expected 1"
            )));
        }
        Ok(FiniteChain {
            states,
            transition,
            target,
        })
    }

    pub fn len(&self) -> usize {
        self.states.len()
    }

    pub fn is_empty(&self) -> bool {
        self.states.is_empty()
    }
}

/// Strongly connected components of the nonzero-transition graph, in Tarjan
/// discovery order.
fn strongly_connected_components(transition: &[Vec<f64>]) -> Vec<Vec<usize>> {
    let n = transition.len();
    let mut index = vec![usize::MAX; n];
    let mut lowlink = vec![0usize; n];
    let mut on_stack = vec![false; n];
    let mut stack: Vec<usize> = Vec::new();
    let mut next_index = 0usize;
    let mut components: Vec<Vec<usize>> = Vec::new();

    // Iterative Tarjan: frames carry (node, next successor to try).
    for start in 0..n {
        if index[start] != usize::MAX {
            continue;
        }
        let mut frames: Vec<(usize, usize)> = vec![(start, 0)];
        while let Some(&mut (v, ref mut next)) = frames.last_mut() {
            if *next == 0 {
                index[v] = next_index;
                lowlink[v] = next_index;
                next_index += 1;
                stack.push(v);
                on_stack[v] = true;
            }
            let mut advanced = false;
            while *next < n {
                let w = *next;
                *next += 1;
                if transition[v][w] <= 0.0 {
                    continue;
                }
                if index[w] == usize::MAX {
                    frames.push((w, 0));
                    advanced = true;
                    break;
                } else if on_stack[w] {
                    lowlink[v] = lowlink[v].min(index[w]);
                }
            }
            if advanced {
                continue;
            }
            if lowlink[v] == index[v] {
                let mut component = Vec::new();
                while let Some(w) = stack.pop() {
                    on_stack[w] = false;
                    component.push(w);
                    if w == v {
                        break;
                    }
                }
                component.sort_unstable();
                components.push(component);
            }
            frames.pop();
            if let Some(&mut (parent, _)) = frames.last_mut() {
                lowlink[parent] = lowlink[parent].min(lowlink[v]);
            }
        }
    }
    components
}

/// Left eigenvector of the transition matrix for eigenvalue 1, normalized to
/// a probability vector. Errors on reducible chains, reporting the
/// disconnected components.
pub fn stationary_distribution(chain: &FiniteChain) -> Result<Vec<f64>> {
    let n = chain.len();
    if n == 0 {
        return Err(Error::EmptyDataset);
    }
    let components = strongly_connected_components(&chain.transition);
    if components.len() != 1 {
        return Err(Error::ReducibleChain { components });
    }
    // Solve pi (P - I) = 0 with sum(pi) = 1: transpose, replace the last
    // equation by the normalization.
    let mut a = DMatrix::from_fn(n, n, |r, c| {
        chain.transition[c][r] - if r == c { 1.0 } else { 0.0 }
    });
    for c in 0..n {
        a[(n - 1, c)] = 1.0;
    }
    let mut b = DVector::zeros(n);
    b[n - 1] = 1.0;
    let solution = a
        .clone()
        .lu()
        .solve(&b)
        .or_else(|| a.svd(true, true).solve(&b, 1e-12).ok())
        .ok_or_else(|| Error::InvalidConfig("stationary solve failed".into()))?;
    let mut pi: Vec<f64> = solution.iter().map(|&x| x.max(0.0)).collect();
    let total: f64 = pi.iter().sum();
    if total <= 0.0 {
        return Err(Error::InvalidConfig("stationary solve degenerate".into()));
    }
    for p in &mut pi {
        *p /= total;
    }
    Ok(pi)
}

/// Result of checking the balance condition
/// sum_x target(x) P(x'|x) = target(x') for all x'.
#[derive(Clone, Copy, Debug, Serialize, Deserialize)]
pub struct BalanceCheck {
    pub holds: bool,
    pub max_deviation: f64,
}

pub fn check_balance(chain: &FiniteChain) -> BalanceCheck {
    let n = chain.len();
    let mut max_deviation = 0.0_f64;
    for next in 0..n {
        let mut mass = 0.0;
        for (state, row) in chain.transition.iter().enumerate() {
            mass += chain.target[state] * row[next];
        }
        max_deviation = max_deviation.max((mass - chain.target[next]).abs());
    }
    BalanceCheck {
        holds: max_deviation <= 1e-9,
        max_deviation,
    }
}

/// Walk the chain and return per-state visit frequencies over `steps`
/// post-burn-in steps.
pub fn empirical_distribution(
    chain: &FiniteChain,
    steps: usize,
    burn_in: usize,
    seed: u64,
) -> Result<Vec<f64>> {
    let n = chain.len();
    if n == 0 || steps == 0 {
        return Err(Error::EmptyDataset);
    }
    let mut rng = seeded_rng(seed);
    let mut state = 0usize;
    let mut counts = vec![0usize; n];
    for step in 0..burn_in + steps {
        let u: f64 = rng.gen();
        let mut acc = 0.0;
        let mut next = n - 1;
        for (j, &p) in chain.transition[state].iter().enumerate() {
            acc += p;
            if u < acc {
                next = j;
                break;
            }
        }
        state = next;
        if step >= burn_in {
            counts[state] += 1;
        }
    }
    Ok(counts.iter().map(|&c| c as f64 / steps as f64).collect())
}

/// Total-variation distance between two probability vectors.
pub fn total_variation(a: &[f64], b: &[f64]) -> f64 {
    0.5 * a
        .iter()
        .zip(b.iter())
        .map(|(x, y)| (x - y).abs())
        .sum::<f64>()
}

#[cfg(test)]
mod tests {
    use super::*;
    use approx::assert_relative_eq;

    fn unit_states(n: usize) -> Vec<Vec<f64>> {
        (0..n).map(|i| vec![i as f64]).collect()
    }

    #[test]
    fn symmetric_three_state_chain_is_uniform() {
        let chain = FiniteChain::new(
            unit_states(3),
            vec![
                vec![0.0, 0.5, 0.5],
                vec![0.5, 0.0, 0.5],
                vec![0.5, 0.5, 0.0],
            ],
            vec![1.0 / 3.0; 3],
        )
        .unwrap();
        let pi = stationary_distribution(&chain).unwrap();
        for &p in &pi {
            assert_relative_eq!(p, 1.0 / 3.0, epsilon = 1e-12);
        }
        let balance = check_balance(&chain);
        assert!(balance.holds);
        assert_relative_eq!(balance.max_deviation, 0.0);
    }

    #[test]
    fn identity_transition_is_reducible() {
        let chain = FiniteChain::new(
            unit_states(3),
            vec![
                vec![1.0, 0.0, 0.0],
                vec![0.0, 1.0, 0.0],
                vec![0.0, 0.0, 1.0],
            ],
            vec![1.0 / 3.0; 3],
        )
        .unwrap();
        match stationary_distribution(&chain).unwrap_err() {
            Error::ReducibleChain { components } => assert_eq!(components.len(), 3),
            other => panic!("expected reducible error, got {other:?}"),
        }
    }

    #[test]
    fn two_state_chain_has_known_stationary_vector() {
        let chain = FiniteChain::new(
            unit_states(2),
            vec![vec![0.9, 0.1], vec![0.2, 0.8]],
            vec![2.0 / 3.0, 1.0 / 3.0],
        )
        .unwrap();
        let pi = stationary_distribution(&chain).unwrap();
        assert_relative_eq!(pi[0], 2.0 / 3.0, epsilon = 1e-9);
        assert_relative_eq!(pi[1], 1.0 / 3.0, epsilon = 1e-9);
        assert!(check_balance(&chain).holds);
    }

    #[test]
    fn mismatched_target_fails_balance() {
        let chain = FiniteChain::new(
            unit_states(2),
            vec![vec![0.9, 0.1], vec![0.2, 0.8]],
            vec![0.5, 0.5],
        )
        .unwrap();
        let balance = check_balance(&chain);
        assert!(!balance.holds);
        assert!(balance.max_deviation > 0.01);
    }

    #[test]
    fn single_state_chain_is_balanced() {
        let chain =
            FiniteChain::new(unit_states(1), vec![vec![1.0]], vec![1.0]).unwrap();
        assert!(check_balance(&chain).holds);
        assert_eq!(stationary_distribution(&chain).unwrap(), vec![1.0]);
    }

    #[test]
    fn empirical_frequencies_approach_the_target() {
        // random positive chain: irreducible and aperiodic, so frequencies
        // converge to the stationary vector
        let mut rng = seeded_rng(5);
        let n = 5;
        let mut transition = Vec::new();
        for _ in 0..n {
            let mut row: Vec<f64> = (0..n).map(|_| rng.gen::<f64>() + 0.05).collect();
            let s: f64 = row.iter().sum();
            row.iter_mut().for_each(|p| *p /= s);
            transition.push(row);
        }
        let chain = FiniteChain::new(unit_states(n), transition, vec![1.0 / n as f64; n]).unwrap();
        let pi = stationary_distribution(&chain).unwrap();
        let balanced = FiniteChain::new(chain.states.clone(), chain.transition.clone(), pi.clone())
            .unwrap();
        assert!(check_balance(&balanced).holds);
        let freq = empirical_distribution(&balanced, 100_000, 1_000, 13).unwrap();
        let tv = total_variation(&freq, &pi);
        assert!(tv <= 0.02, "tv = {tv}");
    }

    #[test]
    fn rejects_malformed_rows() {
        let err = FiniteChain::new(unit_states(2), vec![vec![0.5, 0.4], vec![0.2, 0.8]], vec![
            0.5, 0.5,
        ])
        .unwrap_err();
        assert!(matches!(err, Error::InvalidConfig(_)));
    }
}
