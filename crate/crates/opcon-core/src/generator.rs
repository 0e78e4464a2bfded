//! Candidate-producing processes standing in for the large generative model:
//! pool selection, a membership-rejecting Gaussian random walk, and an
//! external stub speaking line-delimited JSON.

use std::collections::BTreeSet;
use std::io::{BufRead, BufReader, Write};
use std::net::TcpStream;
use std::process::{Command, Stdio};
use std::sync::mpsc;
use std::time::Duration;

use rand::Rng;
use rand_distr::StandardNormal;
use serde::{Deserialize, Serialize};

use crate::concept::{ConceptDataset, Example, Membership, Provenance};
use crate::error::{Error, Result};
use crate::util::seeded_rng;

/// The in-concept examples shown to the generator as context.
#[derive(Clone, Debug, Serialize, Deserialize)]
pub struct Prompt {
    pub examples: Vec<Example>,
    pub m: usize,
}

/// Sample `m` distinct prompt examples with probability proportional to
/// `scores`; all-zero scores fall back to a uniform draw.
pub fn build_prompt(
    dataset: &ConceptDataset,
    scores: &[f64],
    m: usize,
    seed: u64,
) -> Result<Prompt> {
    if dataset.is_empty() {
        return Err(Error::EmptyDataset);
    }
    if scores.len() != dataset.len() {
        return Err(Error::DimensionMismatch {
            expected: dataset.len(),
            got: scores.len(),
        });
    }
    if m > dataset.len() {
        return Err(Error::PromptTooLarge {
            m,
            available: dataset.len(),
        });
    }
    for (i, &s) in scores.iter().enumerate() {
        if s < 0.0 {
            return Err(Error::NegativeScore { index: i, score: s });
        }
    }
    let mut weights: Vec<f64> = scores.to_vec();
    if weights.iter().all(|&w| w == 0.0) {
        weights = vec![1.0; weights.len()];
    }
    let mut rng = seeded_rng(seed);
    let mut remaining: Vec<usize> = (0..dataset.len()).collect();
    let mut chosen = Vec::with_capacity(m);
    for _ in 0..m {
        let total: f64 = remaining.iter().map(|&i| weights[i]).sum();
        let pick = if total <= 0.0 {
            // Weighted entries are exhausted; fall back to uniform among the rest.
            rng.gen_range(0..remaining.len())
        } else {
            let mut u = rng.gen::<f64>() * total;
            let mut idx = remaining.len() - 1;
            for (pos, &i) in remaining.iter().enumerate() {
                u -= weights[i];
                if u < 0.0 {
                    idx = pos;
                    break;
                }
            }
            idx
        };
        chosen.push(remaining.remove(pick));
    }
    Ok(Prompt {
        examples: chosen
            .into_iter()
            .map(|i| dataset.examples[i].clone())
            .collect(),
        m,
    })
}

/// How an external stub is reached.
#[derive(Clone, Debug, PartialEq, Serialize, Deserialize)]
#[serde(tag = "transport", rename_all = "lowercase")]
pub enum StubEndpoint {
    Tcp { addr: String },
    Command {
        program: String,
        #[serde(default)]
        args: Vec<String>,
    },
}

#[derive(Serialize)]
struct StubRequest<'a> {
    prompt_texts: Vec<&'a str>,
    count: usize,
}

#[derive(Deserialize)]
struct StubResponse {
    candidates: Vec<StubCandidate>,
}

#[derive(Deserialize)]
struct StubCandidate {
    features: Vec<f64>,
    #[serde(default)]
    text: Option<String>,
}

/// A candidate generator with its private state; serializable so sessions
/// can checkpoint mid-run.
#[derive(Clone, Debug, Serialize, Deserialize)]
#[serde(tag = "kind", rename_all = "snake_case")]
pub enum Generator {
    /// Selects items from a fixed pool of unlabeled examples.
    Pool {
        items: Vec<Example>,
        consume: bool,
        #[serde(default)]
        consumed: BTreeSet<String>,
    },
    /// Gaussian steps from prompt examples, rejected until the membership
    /// predicate accepts; a fully rejected step stays at its origin.
    Perturbation {
        step_sigma: f64,
        membership: Membership,
        max_rejections: usize,
        #[serde(default)]
        counter: u64,
    },
    /// Synchronous request/response to an external process or socket.
    ExternalStub {
        endpoint: StubEndpoint,
        timeout_ms: u64,
        #[serde(default)]
        counter: u64,
    },
}

impl Generator {
    pub fn pool(items: Vec<Example>, consume: bool) -> Result<Self> {
        if items.is_empty() {
            return Err(Error::EmptyDataset);
        }
        Ok(Generator::Pool {
            items,
            consume,
            consumed: BTreeSet::new(),
        })
    }

    pub fn perturbation(
        step_sigma: f64,
        membership: Membership,
        max_rejections: usize,
    ) -> Result<Self> {
        if step_sigma <= 0.0 {
            return Err(Error::InvalidConfig("step_sigma must be positive".into()));
        }
        if max_rejections == 0 {
            return Err(Error::InvalidConfig(
                "max_rejections must be at least 1".into(),
            ));
        }
        Ok(Generator::Perturbation {
            step_sigma,
            membership,
            max_rejections,
            counter: 0,
        })
    }

    pub fn external_stub(endpoint: StubEndpoint, timeout_ms: u64) -> Self {
        Generator::ExternalStub {
            endpoint,
            timeout_ms,
            counter: 0,
        }
    }

    /// Produce `count` candidates. Pool generators rank by the supplied
    /// score function when one is given, otherwise by distance to the
    /// nearest prompt example.
    pub fn generate(
        &mut self,
        prompt: &Prompt,
        count: usize,
        seed: u64,
        scorer: Option<&dyn Fn(&[f64]) -> f64>,
    ) -> Result<Vec<Example>> {
        self.generate_inner(prompt, count, seed, scorer, true)
    }

    /// Like [`Generator::generate`] but never consumes pool items; used for
    /// convergence sampling, which must not eat the training supply.
    pub fn generate_peek(
        &mut self,
        prompt: &Prompt,
        count: usize,
        seed: u64,
        scorer: Option<&dyn Fn(&[f64]) -> f64>,
    ) -> Result<Vec<Example>> {
        self.generate_inner(prompt, count, seed, scorer, false)
    }

    /// Number of pool items still available; `None` for unbounded kinds.
    pub fn remaining(&self) -> Option<usize> {
        match self {
            Generator::Pool {
                items, consumed, ..
            } => Some(items.iter().filter(|e| !consumed.contains(&e.id)).count()),
            _ => None,
        }
    }

    fn generate_inner(
        &mut self,
        prompt: &Prompt,
        count: usize,
        seed: u64,
        scorer: Option<&dyn Fn(&[f64]) -> f64>,
        allow_consume: bool,
    ) -> Result<Vec<Example>> {
        if count == 0 {
            return Err(Error::InvalidConfig("count must be at least 1".into()));
        }
        if prompt.examples.is_empty() {
            return Err(Error::EmptyDataset);
        }
        match self {
            Generator::Pool {
                items,
                consume,
                consumed,
            } => {
                let mut available: Vec<&Example> =
                    items.iter().filter(|e| !consumed.contains(&e.id)).collect();
                if count > available.len() {
                    return Err(Error::PoolExhausted {
                        requested: count,
                        available: available.len(),
                    });
                }
                match scorer {
                    Some(f) => available.sort_by(|a, b| {
                        let sa = f(&a.features);
                        let sb = f(&b.features);
                        sb.partial_cmp(&sa)
                            .unwrap_or(std::cmp::Ordering::Equal)
                            .then_with(|| a.id.cmp(&b.id))
                    }),
                    None => available.sort_by(|a, b| {
                        let da = nearest_distance(&a.features, prompt);
                        let db = nearest_distance(&b.features, prompt);
                        da.partial_cmp(&db)
                            .unwrap_or(std::cmp::Ordering::Equal)
                            .then_with(|| a.id.cmp(&b.id))
                    }),
                }
                let taken: Vec<Example> = available[..count].iter().map(|e| (*e).clone()).collect();
                if *consume && allow_consume {
                    for e in &taken {
                        consumed.insert(e.id.clone());
                    }
                }
                Ok(taken)
            }
            Generator::Perturbation {
                step_sigma,
                membership,
                max_rejections,
                counter,
            } => {
                let mut rng = seeded_rng(seed);
                let mut out = Vec::with_capacity(count);
                for _ in 0..count {
                    let origin = &prompt.examples[rng.gen_range(0..prompt.examples.len())];
                    let dim = origin.features.len();
                    let mut accepted: Option<Vec<f64>> = None;
                    for _ in 0..*max_rejections {
                        let cand: Vec<f64> = origin
                            .features
                            .iter()
                            .map(|&x| x + *step_sigma * rng.sample::<f64, _>(StandardNormal))
                            .collect();
                        debug_assert_eq!(cand.len(), dim);
                        if membership.accepts(&cand) {
                            accepted = Some(cand);
                            break;
                        }
                    }
                    // Full rejection means we remain at the origin.
                    let features = accepted.unwrap_or_else(|| origin.features.clone());
                    let id = format!("g{}-{}", origin.concept_id, *counter);
                    *counter += 1;
                    out.push(
                        Example::new(id, features, origin.concept_id)
                            .with_provenance(Provenance::Generated),
                    );
                }
                Ok(out)
            }
            Generator::ExternalStub {
                endpoint,
                timeout_ms,
                counter,
            } => {
                let request = StubRequest {
                    prompt_texts: prompt
                        .examples
                        .iter()
                        .map(|e| e.text.as_deref().unwrap_or(""))
                        .collect(),
                    count,
                };
                let line = serde_json::to_string(&request)?;
                let reply = call_stub(endpoint, &line, *timeout_ms)?;
                let response: StubResponse = serde_json::from_str(&reply)
                    .map_err(|e| Error::Stub(format!("bad response: {e}")))?;
                let concept_id = prompt.examples[0].concept_id;
                let mut out = Vec::with_capacity(response.candidates.len());
                for c in response.candidates {
                    let id = format!("stub{}-{}", concept_id, *counter);
                    *counter += 1;
                    let mut e = Example::new(id, c.features, concept_id)
                        .with_provenance(Provenance::Generated);
                    e.text = c.text;
                    out.push(e);
                }
                Ok(out)
            }
        }
    }
}

fn nearest_distance(features: &[f64], prompt: &Prompt) -> f64 {
    prompt
        .examples
        .iter()
        .map(|p| {
            features
                .iter()
                .zip(p.features.iter())
                .map(|(a, b)| (a - b) * (a - b))
                .sum::<f64>()
        })
        .fold(f64::INFINITY, f64::min)
        .sqrt()
}

fn call_stub(endpoint: &StubEndpoint, request_line: &str, timeout_ms: u64) -> Result<String> {
    match endpoint {
        StubEndpoint::Tcp { addr } => {
            let stream = TcpStream::connect(addr)
                .map_err(|e| Error::Stub(format!("connect {addr}: {e}")))?;
            let timeout = Some(Duration::from_millis(timeout_ms));
            stream
                .set_read_timeout(timeout)
                .and_then(|_| stream.set_write_timeout(timeout))
                .map_err(|e| Error::Stub(e.to_string()))?;
            let mut writer = stream
                .try_clone()
                .map_err(|e| Error::Stub(e.to_string()))?;
            writeln!(writer, "{request_line}").map_err(|e| Error::Stub(e.to_string()))?;
            writer.flush().map_err(|e| Error::Stub(e.to_string()))?;
            let mut reader = BufReader::new(stream);
            let mut line = String::new();
            reader
                .read_line(&mut line)
                .map_err(|e| Error::Stub(format!("read: {e}")))?;
            if line.is_empty() {
                return Err(Error::Stub("stub closed the connection".into()));
            }
            Ok(line)
        }
        StubEndpoint::Command { program, args } => {
            let mut child = Command::new(program)
                .args(args)
                .stdin(Stdio::piped())
                .stdout(Stdio::piped())
                .spawn()
                .map_err(|e| Error::Stub(format!("spawn {program}: {e}")))?;
            {
                let stdin = child.stdin.as_mut().expect("stdin is piped");
                writeln!(stdin, "{request_line}").map_err(|e| Error::Stub(e.to_string()))?;
            }
            drop(child.stdin.take());
            let stdout = child.stdout.take().expect("stdout is piped");
            let (tx, rx) = mpsc::channel();
            std::thread::spawn(move || {
                let mut reader = BufReader::new(stdout);
                let mut line = String::new();
                let result = reader
                    .read_line(&mut line)
                    .map(|_| line)
                    .map_err(|e| e.to_string());
                let _ = tx.send(result);
            });
            let reply = match rx.recv_timeout(Duration::from_millis(timeout_ms)) {
                Ok(Ok(line)) if !line.is_empty() => line,
                Ok(Ok(_)) => {
                    let _ = child.kill();
                    return Err(Error::Stub("stub produced no output".into()));
                }
                Ok(Err(e)) => {
                    let _ = child.kill();
                    return Err(Error::Stub(e));
                }
                Err(_) => {
                    let _ = child.kill();
                    return Err(Error::Stub(format!("timeout after {timeout_ms} ms")));
                }
            };
            let _ = child.wait();
            Ok(reply)
        }
    }
}

#[cfg(test)]
mod tests {
    use super::*;
    use crate::concept::ConceptDataset;

    fn dataset_of(n: usize) -> ConceptDataset {
        let mut ds = ConceptDataset::new(1);
        for i in 0..n {
            ds.push(
                Example::new(format!("e{i}"), vec![i as f64, 0.0], 1).with_label(1.0),
            )
            .unwrap();
        }
        ds
    }

    #[test]
    fn degenerate_weights_always_pick_the_scored_example() {
        let ds = dataset_of(3);
        for seed in 0..50 {
            let p = build_prompt(&ds, &[1.0, 0.0, 0.0], 1, seed).unwrap();
            assert_eq!(p.examples[0].id, "e0");
        }
    }

    #[test]
    fn uniform_weights_cover_pairs_evenly() {
        let ds = dataset_of(4);
        let mut counts = std::collections::BTreeMap::new();
        let trials = 10_000;
        for seed in 0..trials {
            let p = build_prompt(&ds, &[1.0; 4], 2, seed).unwrap();
            let mut pair: Vec<&str> = p.examples.iter().map(|e| e.id.as_str()).collect();
            pair.sort();
            *counts.entry(format!("{}|{}", pair[0], pair[1])).or_insert(0) += 1;
        }
        // 6 unordered pairs, expect trials/6 each within 3 sigma of binomial
        let p = 1.0 / 6.0;
        let sigma = (trials as f64 * p * (1.0 - p)).sqrt();
        for (pair, &c) in &counts {
            assert!(
                (c as f64 - trials as f64 * p).abs() < 3.0 * sigma,
                "pair {pair} count {c}"
            );
        }
    }

    #[test]
    fn prompt_of_everything_returns_whole_dataset() {
        let ds = dataset_of(3);
        let p = build_prompt(&ds, &[0.0; 3], 3, 1).unwrap();
        assert_eq!(p.examples.len(), 3);
        let mut ids: Vec<&str> = p.examples.iter().map(|e| e.id.as_str()).collect();
        ids.sort();
        assert_eq!(ids, vec!["e0", "e1", "e2"]);
    }

    #[test]
    fn prompt_larger_than_dataset_errors() {
        let ds = dataset_of(2);
        assert!(matches!(
            build_prompt(&ds, &[0.0; 2], 3, 1),
            Err(Error::PromptTooLarge { .. })
        ));
    }

    fn prompt_from(ds: &ConceptDataset) -> Prompt {
        Prompt {
            examples: ds.examples.clone(),
            m: ds.len(),
        }
    }

    #[test]
    fn total_rejection_remains_at_origin() {
        let ds = dataset_of(2);
        let mut g = Generator::perturbation(1.0, Membership::Never, 5).unwrap();
        let out = g.generate(&prompt_from(&ds), 4, 9, None).unwrap();
        assert_eq!(out.len(), 4);
        for c in &out {
            assert!(ds.examples.iter().any(|e| e.features == c.features));
            assert_eq!(c.provenance, Provenance::Generated);
        }
    }

    #[test]
    fn perturbation_respects_membership() {
        // concept x1 = x2 in R^3: every accepted candidate satisfies it
        let membership = Membership::CoordsEqual {
            a: 0,
            b: 1,
            tol: 0.05,
        };
        let mut ds = ConceptDataset::new(1);
        ds.push(Example::new("s", vec![1.0, 1.0, 0.0], 1).with_label(2.0))
            .unwrap();
        let mut g = Generator::perturbation(1.0, membership.clone(), 400).unwrap();
        let out = g.generate(&prompt_from(&ds), 1000, 3, None).unwrap();
        for c in &out {
            assert!(
                membership.accepts(&c.features),
                "candidate {:?} escaped the membership predicate",
                c.features
            );
        }
        // the walk actually moves off the seed
        assert!(out.iter().any(|c| c.features != ds.examples[0].features));
    }

    #[test]
    fn pool_exhaustion_is_reported() {
        let items: Vec<Example> = (0..5)
            .map(|i| Example::new(format!("p{i}"), vec![i as f64], 1))
            .collect();
        let mut g = Generator::pool(items, true).unwrap();
        let ds = dataset_of(1);
        let err = g.generate(&prompt_from(&ds), 7, 1, None).unwrap_err();
        assert!(matches!(
            err,
            Error::PoolExhausted {
                requested: 7,
                available: 5
            }
        ));
    }

    #[test]
    fn consuming_pool_never_repeats_items() {
        let items: Vec<Example> = (0..6)
            .map(|i| Example::new(format!("p{i}"), vec![i as f64, 0.0], 1))
            .collect();
        let mut g = Generator::pool(items, true).unwrap();
        let ds = dataset_of(1);
        let first = g.generate(&prompt_from(&ds), 3, 1, None).unwrap();
        let second = g.generate(&prompt_from(&ds), 3, 2, None).unwrap();
        let mut ids: Vec<String> = first.iter().chain(second.iter()).map(|e| e.id.clone()).collect();
        ids.sort();
        ids.dedup();
        assert_eq!(ids.len(), 6);
        assert_eq!(g.remaining(), Some(0));
    }

    #[test]
    fn peek_does_not_consume() {
        let items: Vec<Example> = (0..4)
            .map(|i| Example::new(format!("p{i}"), vec![i as f64, 0.0], 1))
            .collect();
        let mut g = Generator::pool(items, true).unwrap();
        let ds = dataset_of(1);
        g.generate_peek(&prompt_from(&ds), 4, 1, None).unwrap();
        assert_eq!(g.remaining(), Some(4));
    }

    #[test]
    fn scored_pool_ranks_by_score_then_id() {
        let items: Vec<Example> = (0..4)
            .map(|i| Example::new(format!("p{i}"), vec![i as f64, 0.0], 1))
            .collect();
        let mut g = Generator::pool(items, false).unwrap();
        let ds = dataset_of(1);
        let scorer = |f: &[f64]| if f[0] >= 2.0 { 1.0 } else { 0.0 };
        let out = g
            .generate(&prompt_from(&ds), 3, 1, Some(&scorer))
            .unwrap();
        let ids: Vec<&str> = out.iter().map(|e| e.id.as_str()).collect();
        assert_eq!(ids, vec!["p2", "p3", "p0"]);
    }

    #[test]
    fn generation_is_deterministic_per_seed() {
        let membership = Membership::Always;
        let ds = dataset_of(3);
        let mut g1 = Generator::perturbation(0.5, membership.clone(), 10).unwrap();
        let mut g2 = Generator::perturbation(0.5, membership, 10).unwrap();
        let a = g1.generate(&prompt_from(&ds), 8, 11, None).unwrap();
        let b = g2.generate(&prompt_from(&ds), 8, 11, None).unwrap();
        assert_eq!(a, b);
    }

    #[test]
    fn external_stub_round_trip_over_tcp() {
        use std::net::TcpListener;
        let listener = TcpListener::bind("127.0.0.1:0").unwrap();
        let addr = listener.local_addr().unwrap().to_string();
        let server = std::thread::spawn(move || {
            let (stream, _) = listener.accept().unwrap();
            let mut reader = BufReader::new(stream.try_clone().unwrap());
            let mut line = String::new();
            reader.read_line(&mut line).unwrap();
            let req: serde_json::Value = serde_json::from_str(&line).unwrap();
            assert_eq!(req["count"], 2);
            let mut w = stream;
            writeln!(
                w,
                "{}",
                serde_json::json!({"candidates": [
                    {"features": [1.0, 2.0], "text": "alpha"},
                    {"features": [3.0, 4.0]}
                ]})
            )
            .unwrap();
        });
        let mut g = Generator::external_stub(StubEndpoint::Tcp { addr }, 5_000);
        let mut ds = ConceptDataset::new(2);
        let mut seed_example = Example::new("s", vec![0.0, 0.0], 2).with_label(1.0);
        seed_example.text = Some("seed text".into());
        ds.push(seed_example).unwrap();
        let out = g.generate(&prompt_from(&ds), 2, 1, None).unwrap();
        server.join().unwrap();
        assert_eq!(out.len(), 2);
        assert_eq!(out[0].features, vec![1.0, 2.0]);
        assert_eq!(out[0].text.as_deref(), Some("alpha"));
        assert_eq!(out[0].concept_id, 2);
        assert_eq!(out[1].text, None);
    }

    #[test]
    fn unreachable_stub_surfaces_an_error() {
        let mut g = Generator::external_stub(
            StubEndpoint::Tcp {
                addr: "127.0.0.1:1".into(),
            },
            200,
        );
        let ds = dataset_of(1);
        assert!(matches!(
            g.generate(&prompt_from(&ds), 1, 1, None),
            Err(Error::Stub(_))
        ));
    }
}
