//! Pipeline configuration: thresholds, budgets, and the seed.
//!
//! Defaults mirror the tool's shipped operating point. Config files are JSON
//! with exactly these keys; unknown keys are rejected so typos surface as
//! config errors instead of silently falling back to defaults.

use serde::{Deserialize, Serialize};

use crate::error::{CoreError, Result};

/// How the support-edge budget `max_support_edges` is applied.
#[derive(Clone, Copy, Debug, Default, PartialEq, Eq, Serialize, Deserialize)]
#[serde(rename_all = "kebab-case")]
pub enum PruneMode {
    /// Keep the `M` highest-similarity support edges of the whole graph.
    #[default]
    Global,
    /// Keep each node within at most `M` incident support edges.
    PerNode,
}

/// All tunable knobs of the pipeline, JSON-serializable for provenance.
#[derive(Clone, Debug, PartialEq, Serialize, Deserialize)]
#[serde(deny_unknown_fields, default)]
pub struct PipelineConfig {
    /// Query-relevance gate: keep a node iff cos(query, node) >= tau_q.
    pub tau_q: f64,
    /// Candidate-pair gate: verify a pair iff cosine >= tau_sim.
    pub tau_sim: f64,
    /// Edge-confidence gate: materialize an edge iff verifier confidence
    /// >= tau_conf.
    pub tau_conf: f64,
    /// Acceptance threshold on node probability (validation and active-pair
    /// mining).
    pub tau_accept: f64,
    /// Arbitration gate: a verdict is decisive iff its confidence >= tau_gate.
    pub tau_gate: f64,
    /// Claim-merge threshold on embedding cosine (with equal entity sets).
    pub tau_merge: f64,
    /// Logit step applied to winner (+) and loser (-) of a decisive verdict.
    pub eta: f64,
    /// Arbitration calls allowed per round.
    pub budget_k: usize,
    /// Support-edge budget M retained at pruning.
    pub max_support_edges: usize,
    /// How the support budget is applied (global top-M or per-node cap).
    pub prune_mode: PruneMode,
    /// Maximum arbitration rounds T.
    pub rounds: usize,
    /// Decisive arbitrations allowed per contradiction pair before it is
    /// retired.
    pub per_pair_cap: u32,
    /// Root seed for scenario generation and sweeps.
    pub seed: u64,
}

impl Default for PipelineConfig {
    fn default() -> Self {
        Self {
            tau_q: 0.3,
            tau_sim: 0.6,
            tau_conf: 0.7,
            tau_accept: 0.3,
            tau_gate: 0.6,
            tau_merge: 0.92,
            eta: 0.8,
            budget_k: 3,
            max_support_edges: 60,
            prune_mode: PruneMode::Global,
            rounds: 5,
            per_pair_cap: 3,
            seed: 0,
        }
    }
}

impl PipelineConfig {
    /// Validates the invariants; the error message names the offending key.
    pub fn validate(&self) -> Result<()> {
        for (key, value) in [
            ("tau_q", self.tau_q),
            ("tau_sim", self.tau_sim),
            ("tau_conf", self.tau_conf),
            ("tau_accept", self.tau_accept),
            ("tau_gate", self.tau_gate),
            ("tau_merge", self.tau_merge),
        ] {
            if !(0.0..=1.0).contains(&value) {
                return Err(CoreError::InvalidConfig(format!(
                    "{key} must lie in [0, 1], got {value}"
                )));
            }
        }
        if !(self.eta > 0.0) {
            return Err(CoreError::InvalidConfig(format!(
                "eta must be > 0, got {}",
                self.eta
            )));
        }
        if self.budget_k < 1 {
            return Err(CoreError::InvalidConfig("budget_k must be >= 1".into()));
        }
        if self.rounds < 1 {
            return Err(CoreError::InvalidConfig("rounds must be >= 1".into()));
        }
        if self.per_pair_cap < 1 {
            return Err(CoreError::InvalidConfig("per_pair_cap must be >= 1".into()));
        }
        Ok(())
    }
}
