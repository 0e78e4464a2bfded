//! Metric series and report emission: one JSON per report, one CSV per
//! series, plot-ready and deterministic.

use std::collections::BTreeMap;
use std::path::{Path, PathBuf};

use serde::{Deserialize, Serialize};

use crate::error::{Error, Result};
use crate::util::{sha256_hex, write_atomic};

pub const REPORT_SCHEMA_VERSION: u32 = 1;

#[derive(Clone, Copy, Debug, PartialEq, Eq, PartialOrd, Ord, Serialize, Deserialize)]
#[serde(rename_all = "lowercase")]
pub enum Method {
    /// Local/global disagreement-driven selection with occasional
    /// agreement-region sampling.
    Disagreement,
    Random,
    Uncertainty,
}

impl Method {
    pub fn name(&self) -> &'static str {
        match self {
            Method::Disagreement => "disagreement",
            Method::Random => "random",
            Method::Uncertainty => "uncertainty",
        }
    }
}

/// Accuracy snapshot after a model update.
#[derive(Clone, Copy, Debug, PartialEq, Serialize, Deserialize)]
pub struct MetricPoint {
    pub labels_spent: usize,
    pub concept_accuracy: f64,
    pub base_accuracy: f64,
}

#[derive(Clone, Debug, PartialEq, Serialize, Deserialize)]
pub struct MetricSeries {
    pub method: Method,
    pub seed: u64,
    pub concept_id: usize,
    pub points: Vec<MetricPoint>,
}

impl MetricSeries {
    pub fn final_concept_accuracy(&self) -> Option<f64> {
        self.points.last().map(|p| p.concept_accuracy)
    }

    fn validate(&self) -> Result<()> {
        let mut last = 0usize;
        for p in &self.points {
            if p.labels_spent < last {
                return Err(Error::InvalidConfig(format!(
                    "series labels_spent not monotone: {} after {last}",
                    p.labels_spent
                )));
            }
            last = p.labels_spent;
        }
        Ok(())
    }

    pub fn to_csv(&self) -> String {
        let mut out = String::from("labels_spent,concept_accuracy,base_accuracy\n");
        for p in &self.points {
            out.push_str(&format!(
                "{},{},{}\n",
                p.labels_spent, p.concept_accuracy, p.base_accuracy
            ));
        }
        out
    }
}

/// Per-method aggregate in the worst-case/average table shape.
#[derive(Clone, Debug, PartialEq, Serialize, Deserialize)]
pub struct MethodAggregate {
    /// Mean over concepts of the seed-averaged final concept accuracy.
    pub overall_average: f64,
    /// Minimum over concepts of the seed-averaged final concept accuracy.
    pub worst_case: f64,
    /// Seed-averaged final accuracy per concept id.
    pub per_concept_final: BTreeMap<usize, f64>,
}

#[derive(Clone, Debug, Serialize, Deserialize)]
pub struct ExperimentReport {
    pub schema_version: u32,
    pub scenario: String,
    pub engine_version: String,
    pub config_hash: String,
    pub notes: Vec<String>,
    /// Free-form named scalars (oracle-achievable accuracies, label counts
    /// to target, and similar), keyed deterministically.
    pub extras: BTreeMap<String, f64>,
    pub series: Vec<MetricSeries>,
    pub aggregates: BTreeMap<String, MethodAggregate>,
}

impl ExperimentReport {
    pub fn new(scenario: impl Into<String>, config_hash: String) -> Self {
        ExperimentReport {
            schema_version: REPORT_SCHEMA_VERSION,
            scenario: scenario.into(),
            engine_version: env!("CARGO_PKG_VERSION").to_string(),
            config_hash,
            notes: Vec::new(),
            extras: BTreeMap::new(),
            series: Vec::new(),
            aggregates: BTreeMap::new(),
        }
    }

    /// Recompute the per-method aggregates from the stored series.
    pub fn compute_aggregates(series: &[MetricSeries]) -> BTreeMap<String, MethodAggregate> {
        let mut per_method: BTreeMap<&'static str, BTreeMap<usize, Vec<f64>>> = BTreeMap::new();
        for s in series {
            if let Some(acc) = s.final_concept_accuracy() {
                per_method
                    .entry(s.method.name())
                    .or_default()
                    .entry(s.concept_id)
                    .or_default()
                    .push(acc);
            }
        }
        per_method
            .into_iter()
            .map(|(name, concepts)| {
                let per_concept_final: BTreeMap<usize, f64> = concepts
                    .into_iter()
                    .map(|(cid, accs)| {
                        let mean = accs.iter().sum::<f64>() / accs.len() as f64;
                        (cid, mean)
                    })
                    .collect();
                let overall_average = per_concept_final.values().sum::<f64>()
                    / per_concept_final.len().max(1) as f64;
                let worst_case = per_concept_final
                    .values()
                    .cloned()
                    .fold(f64::INFINITY, f64::min);
                (
                    name.to_string(),
                    MethodAggregate {
                        overall_average,
                        worst_case,
                        per_concept_final,
                    },
                )
            })
            .collect()
    }

    pub fn finalize(&mut self) {
        self.aggregates = Self::compute_aggregates(&self.series);
    }

    pub fn validate(&self) -> Result<()> {
        for s in &self.series {
            s.validate()?;
        }
        Ok(())
    }

    /// Write the JSON report plus one CSV per series and an aggregate CSV.
    /// Returns the paths written.
    pub fn emit(&self, dir: &Path, stem: &str) -> Result<Vec<PathBuf>> {
        self.validate()?;
        let mut written = Vec::new();
        let json_path = dir.join(format!("{stem}.json"));
        write_atomic(&json_path, &serde_json::to_vec_pretty(self)?)?;
        written.push(json_path);
        for s in &self.series {
            let path = dir.join(format!(
                "{stem}_{}_s{}_c{}.csv",
                s.method.name(),
                s.seed,
                s.concept_id
            ));
            write_atomic(&path, s.to_csv().as_bytes())?;
            written.push(path);
        }
        let mut agg = String::from("method,concept_id,final_accuracy,overall_average,worst_case\n");
        for (name, a) in &self.aggregates {
            for (cid, acc) in &a.per_concept_final {
                agg.push_str(&format!(
                    "{name},{cid},{acc},{},{}\n",
                    a.overall_average, a.worst_case
                ));
            }
        }
        let agg_path = dir.join(format!("{stem}_aggregate.csv"));
        write_atomic(&agg_path, agg.as_bytes())?;
        written.push(agg_path);
        Ok(written)
    }
}

/// Hash of a serializable config, recorded in reports for provenance.
pub fn config_hash<T: Serialize>(value: &T) -> String {
    sha256_hex(&serde_json::to_vec(value).expect("config serializes"))
}
