//! Per-round accuracy and cumulative communication records.

use alloc::vec::Vec;

use serde::{Deserialize, Serialize};

#[derive(Debug, Clone, Copy, PartialEq, Eq, Hash, PartialOrd, Ord, Serialize, Deserialize)]
#[serde(rename_all = "lowercase")]
pub enum Stage {
    /// A FedAvg/FedProx round.
    Avg,
    /// A per-cluster averaging round.
    Encoder,
    /// A post-training round of the global classifier.
    Classifier,
}

impl Stage {
    pub fn as_str(self) -> &'static str {
        match self {
            Stage::Avg => "avg",
            Stage::Encoder => "encoder",
            Stage::Classifier => "classifier",
        }
    }
}

impl core::fmt::Display for Stage {
    fn fmt(&self, f: &mut core::fmt::Formatter<'_>) -> core::fmt::Result {
        f.write_str(self.as_str())
    }
}

#[derive(Debug, Clone, PartialEq, Serialize, Deserialize)]
pub struct RoundRecord {
    /// 1-based within the stage.
    pub round: usize,
    pub stage: Stage,
    pub accuracy: f64,
    /// Parameters transferred so far, all clients, both directions.
    pub cumulative_cost: f64,
}

#[derive(Debug, Clone, Default, PartialEq, Serialize, Deserialize)]
pub struct MetricsLog {
    pub records: Vec<RoundRecord>,
    /// Parameters transferred over the whole run.
    pub total_cost: f64,
}

impl MetricsLog {
    pub fn add_cost(&mut self, params: f64) {
        self.total_cost += params;
    }

    /// Records an evaluation at the current cumulative cost.
    pub fn record(&mut self, stage: Stage, round: usize, accuracy: f64) {
        self.records.push(RoundRecord {
            round,
            stage,
            accuracy,
            cumulative_cost: self.total_cost,
        });
    }

    pub fn final_accuracy(&self) -> Option<f64> {
        self.records.last().map(|r| r.accuracy)
    }

    pub fn rounds_in(&self, stage: Stage) -> usize {
        self.records.iter().filter(|r| r.stage == stage).count()
    }

    /// Accuracy of the last record whose cumulative cost does not exceed `budget`.
    pub fn accuracy_at_budget(&self, budget: f64) -> Option<f64> {
        self.records
            .iter()
            .take_while(|r| r.cumulative_cost <= budget)
            .last()
            .map(|r| r.accuracy)
    }
}
