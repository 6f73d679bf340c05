use serde::{Deserialize, Serialize};

use crate::config::{Config, ExperimentMode};
use crate::error::Result;
use crate::metrics::{EvalTriple, MetricFlags};
use crate::qiga::FitnessTrace;

/// JSON schema every serialized [`ExperimentReport`] conforms to.
pub const REPORT_SCHEMA: &str = include_str!("../../../../schemas/report.schema.json");

#[derive(Debug, Clone, PartialEq, Serialize, Deserialize)]
pub struct SourceReport {
    /// Reference index.
    pub reference: usize,
    /// Output index matched to the reference.
    pub estimate: usize,
    pub metrics: EvalTriple,
    pub flags: MetricFlags,
}

#[derive(Debug, Clone, PartialEq, Serialize, Deserialize)]
pub struct MethodResult {
    pub sources: Vec<SourceReport>,
    pub mean: EvalTriple,
}

impl MethodResult {
    pub fn new(sources: Vec<SourceReport>) -> Self {
        let mean = mean_triple(sources.iter().map(|s| &s.metrics));
        MethodResult { sources, mean }
    }
}

pub fn mean_triple<'a>(triples: impl IntoIterator<Item = &'a EvalTriple>) -> EvalTriple {
    let mut sum = EvalTriple { sdr: 0.0, sir: 0.0, sar: 0.0 };
    let mut n = 0usize;
    for t in triples {
        sum.sdr += t.sdr;
        sum.sir += t.sir;
        sum.sar += t.sar;
        n += 1;
    }
    let n = n.max(1) as f64;
    EvalTriple {
        sdr: sum.sdr / n,
        sir: sum.sir / n,
        sar: sum.sar / n,
    }
}

#[derive(Debug, Clone, PartialEq, Serialize, Deserialize)]
pub struct Baselines {
    /// Every output is the unprocessed mixture.
    pub duplicate: MethodResult,
    /// Best band gains chosen with access to the references.
    pub oracle: MethodResult,
}

#[derive(Debug, Clone, PartialEq, Serialize, Deserialize)]
pub struct OptimizerSummary {
    pub best_fitness: f64,
    pub evaluations: usize,
    pub generations: usize,
    pub n_mixtures: usize,
    pub trace: FitnessTrace,
}

#[derive(Debug, Clone, PartialEq, Serialize, Deserialize)]
pub struct EncodingDiagnostic {
    pub frames: usize,
    pub features_per_frame: usize,
    /// Mean fidelity between the encoded states of consecutive frames.
    pub mean_adjacent_fidelity: f64,
}

#[derive(Debug, Clone, PartialEq, Serialize, Deserialize)]
pub struct MaskSummary {
    pub band_edges_hz: Vec<f64>,
    pub gains: Vec<Vec<f64>>,
    pub masks: Vec<Vec<f64>>,
    pub degenerate: bool,
}

#[derive(Debug, Clone, Default, PartialEq, Serialize, Deserialize)]
pub struct Timings {
    pub features_s: f64,
    pub optimize_s: f64,
    pub evaluate_s: f64,
    pub total_s: f64,
}

#[derive(Debug, Clone, PartialEq, Serialize, Deserialize)]
pub struct SeparationReport {
    pub entry: String,
    pub mode: ExperimentMode,
    pub sample_rate: u32,
    pub n_samples: usize,
    pub result: MethodResult,
    pub baselines: Baselines,
    /// Absent when the masks were optimized on other mixtures.
    pub optimizer: Option<OptimizerSummary>,
    pub encoding: Option<EncodingDiagnostic>,
    pub masks: MaskSummary,
    pub warnings: Vec<String>,
    pub config: Config,
    pub timings: Timings,
}

#[derive(Debug, Clone, PartialEq, Serialize, Deserialize)]
pub struct EntryFailure {
    pub index: usize,
    pub entry: String,
    pub error: String,
}

#[derive(Debug, Clone, PartialEq, Serialize, Deserialize)]
pub struct TransferSummary {
    pub train: Vec<String>,
    pub validation: Vec<String>,
    pub test: Vec<String>,
    pub optimizer: OptimizerSummary,
    pub masks: MaskSummary,
    pub validation_mean: Option<EvalTriple>,
    pub test_mean: EvalTriple,
}

#[derive(Debug, Clone, PartialEq, Serialize, Deserialize)]
pub struct DataSizeRow {
    pub fraction: f64,
    pub n_train: usize,
    pub test_mean: EvalTriple,
    pub duplicate_test_mean: EvalTriple,
    pub best_fitness: f64,
    pub degenerate: bool,
}

#[derive(Debug, Clone, PartialEq, Serialize, Deserialize)]
pub struct ExperimentReport {
    pub mode: ExperimentMode,
    pub reports: Vec<SeparationReport>,
    pub failures: Vec<EntryFailure>,
    pub transfer: Option<TransferSummary>,
    pub data_size: Vec<DataSizeRow>,
    pub config: Config,
    pub timings: Timings,
}

impl ExperimentReport {
    pub fn to_json(&self) -> Result<String> {
        Ok(serde_json::to_string_pretty(self)?)
    }

    pub fn from_json(text: &str) -> Result<Self> {
        Ok(serde_json::from_str(text)?)
    }
}

/// Removes every `timings` member, at any depth, so that reports of
/// identical runs compare equal.
pub fn strip_timings(value: &mut serde_json::Value) {
    match value {
        serde_json::Value::Object(map) => {
            map.remove("timings");
            map.values_mut().for_each(strip_timings);
        }
        serde_json::Value::Array(items) => items.iter_mut().for_each(strip_timings),
        _ => {}
    }
}
