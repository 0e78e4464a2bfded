//! The labeler abstraction standing in for the human user: reject an example
//! as out-of-concept or supply its label.

use std::io::{BufRead, Write};

use serde::{Deserialize, Serialize};
use serde_json::json;

use crate::concept::{Example, GaussianMixture, Membership};
use crate::error::{Error, Result};
use crate::model::{self, Model};
use crate::subspace::dot;

/// A labeler's answer to one query.
#[derive(Clone, Debug, PartialEq, Serialize, Deserialize)]
#[serde(tag = "kind", rename_all = "lowercase")]
pub enum LabelResponse {
    Reject,
    Label { value: f64 },
}

impl LabelResponse {
    pub fn label(value: f64) -> Self {
        LabelResponse::Label { value }
    }
}

/// Deterministic ground-truth functions used by oracle labelers.
#[derive(Clone, Debug, PartialEq, Serialize, Deserialize)]
#[serde(tag = "kind", rename_all = "snake_case")]
pub enum GroundTruth {
    /// y = theta . x
    LinearRegression { theta: Vec<f64> },
    /// +1 if w . x + bias >= 0 else -1
    LinearClass { weights: Vec<f64>, bias: f64 },
    /// Class label of the nearest mixture component.
    NearestComponent { mixture: GaussianMixture },
    /// Thresholded predictions of a frozen model (used to treat the base
    /// model as a user over the base distribution).
    Model { model: Model, threshold: f64 },
}

impl GroundTruth {
    pub fn label(&self, features: &[f64]) -> Result<f64> {
        match self {
            GroundTruth::LinearRegression { theta } => {
                if theta.len() != features.len() {
                    return Err(Error::DimensionMismatch {
                        expected: theta.len(),
                        got: features.len(),
                    });
                }
                Ok(dot(theta, features))
            }
            GroundTruth::LinearClass { weights, bias } => {
                if weights.len() != features.len() {
                    return Err(Error::DimensionMismatch {
                        expected: weights.len(),
                        got: features.len(),
                    });
                }
                Ok(if dot(weights, features) + bias >= 0.0 {
                    1.0
                } else {
                    -1.0
                })
            }
            GroundTruth::NearestComponent { mixture } => {
                let (idx, _) = mixture.nearest_component(features)?;
                Ok(mixture.components[idx].class_label)
            }
            GroundTruth::Model { model, threshold } => {
                let score = model::predict(model, features)?;
                Ok(match model.kind {
                    model::ModelKind::MinNormLinear => score,
                    model::ModelKind::RidgeLogistic => {
                        if score >= *threshold {
                            1.0
                        } else {
                            -1.0
                        }
                    }
                })
            }
        }
    }
}

/// Anything that can answer label queries.
pub trait Labeler {
    fn query(&mut self, example: &Example) -> Result<LabelResponse>;
}

/// Labels from a ground-truth function, rejecting out-of-membership points.
#[derive(Clone, Debug, Serialize, Deserialize)]
pub struct OracleLabeler {
    pub truth: GroundTruth,
    pub membership: Membership,
}

impl Labeler for OracleLabeler {
    fn query(&mut self, example: &Example) -> Result<LabelResponse> {
        if !self.membership.accepts(&example.features) {
            return Ok(LabelResponse::Reject);
        }
        Ok(LabelResponse::label(self.truth.label(&example.features)?))
    }
}

/// Replays a fixed log of responses, erroring once it runs out.
#[derive(Clone, Debug, Serialize, Deserialize)]
pub struct ScriptedLabeler {
    pub responses: Vec<LabelResponse>,
    pub cursor: usize,
}

impl ScriptedLabeler {
    pub fn new(responses: Vec<LabelResponse>) -> Self {
        ScriptedLabeler {
            responses,
            cursor: 0,
        }
    }
}

impl Labeler for ScriptedLabeler {
    fn query(&mut self, _example: &Example) -> Result<LabelResponse> {
        match self.responses.get(self.cursor) {
            Some(r) => {
                self.cursor += 1;
                Ok(r.clone())
            }
            None => Err(Error::ScriptExhausted {
                answered: self.cursor,
            }),
        }
    }
}

/// Line protocol over a pair of streams: the engine writes one JSON object
/// `{id, features, text?}` per query, the peer answers `reject` or
/// `label <value>`. A closed stream surfaces as [`Error::LabelerClosed`] so
/// the session can checkpoint and exit cleanly.
pub struct StreamLabeler<R, W> {
    reader: R,
    writer: W,
}

impl<R: BufRead, W: Write> StreamLabeler<R, W> {
    pub fn new(reader: R, writer: W) -> Self {
        StreamLabeler { reader, writer }
    }
}

impl<R: BufRead, W: Write> Labeler for StreamLabeler<R, W> {
    fn query(&mut self, example: &Example) -> Result<LabelResponse> {
        let mut msg = json!({
            "id": example.id,
            "features": example.features,
        });
        if let Some(text) = &example.text {
            msg["text"] = json!(text);
        }
        writeln!(self.writer, "{msg}")?;
        self.writer.flush()?;

        let mut line = String::new();
        let n = self.reader.read_line(&mut line)?;
        if n == 0 {
            return Err(Error::LabelerClosed);
        }
        parse_reply(line.trim())
    }
}

fn parse_reply(reply: &str) -> Result<LabelResponse> {
    if reply == "reject" {
        return Ok(LabelResponse::Reject);
    }
    if let Some(rest) = reply.strip_prefix("label ") {
        let value: f64 = rest.trim().parse().map_err(|_| {
            Error::InvalidConfig(format!("labeler reply has a non-numeric value: {reply:?}"))
        })?;
        return Ok(LabelResponse::label(value));
    }
    Err(Error::InvalidConfig(format!(
        "labeler reply must be 'reject' or 'label <value>', got {reply:?}"
    )))
}

/// Serializable description of a labeler, so checkpoints can be resumed.
/// `Interactive` reattaches to the process's standard streams.
#[derive(Clone, Debug, Serialize, Deserialize)]
#[serde(tag = "kind", rename_all = "lowercase")]
pub enum LabelerSpec {
    Oracle {
        truth: GroundTruth,
        membership: Membership,
    },
    Scripted {
        responses: Vec<LabelResponse>,
        #[serde(default)]
        cursor: usize,
    },
    Interactive,
}

impl LabelerSpec {
    pub fn build(&self) -> Box<dyn Labeler> {
        match self {
            LabelerSpec::Oracle { truth, membership } => Box::new(OracleLabeler {
                truth: truth.clone(),
                membership: membership.clone(),
            }),
            LabelerSpec::Scripted { responses, cursor } => Box::new(ScriptedLabeler {
                responses: responses.clone(),
                cursor: *cursor,
            }),
            LabelerSpec::Interactive => Box::new(StreamLabeler::new(
                std::io::BufReader::new(std::io::stdin()),
                std::io::stdout(),
            )),
        }
    }

    /// Fold a labeler's progress back into the spec so a checkpoint resumes
    /// where the session stopped.
    pub fn advanced_by(&self, queries_answered: usize) -> LabelerSpec {
        match self {
            LabelerSpec::Scripted { responses, cursor } => LabelerSpec::Scripted {
                responses: responses.clone(),
                cursor: cursor + queries_answered,
            },
            other => other.clone(),
        }
    }
}
