//! Stage III: iterative conflict arbitration.
//!
//! Contradiction edges whose endpoints are both still credible define the
//! *active* set. Each round snapshots credibilities once, schedules up to
//! `budget_k` active pairs under a pluggable policy, asks the arbitrator for
//! a verdict per pair, and applies symmetric logit updates — winner up by
//! `eta`, loser down by `eta` — so the total logit mass of the graph is
//! conserved. The loop stops early once no pair is active, otherwise it runs
//! for the configured number of rounds and reports the residual conflict
//! count.
//!
//! Everything here is deterministic: ties break on the `(a, b)` pair key,
//! context ranking uses the round-start snapshot (never mid-round state),
//! and the trace records enough to replay the exact final graph from the
//! pre-arbitration one.

use std::collections::{BTreeMap, BTreeSet};
use std::fmt;
use std::str::FromStr;

use serde::{Deserialize, Serialize};

use crate::backend::{ArbitrationVerdict, EvidenceBackend, CONTEXT_CAP};
use crate::config::PipelineConfig;
use crate::error::{CoreError, Result};
use crate::math::conflict_intensity;
use crate::model::{ClaimNode, EvidenceGraph};

/// Order in which active pairs are scheduled within a round.
#[derive(Clone, Copy, Debug, Default, PartialEq, Eq, Serialize, Deserialize)]
#[serde(rename_all = "kebab-case")]
pub enum SchedulingPolicy {
    /// Highest conflict intensity first (the shipped default).
    #[default]
    ConflictAware,
    /// Smallest credibility gap first — the closest calls.
    HardFirst,
    /// Largest credibility gap first — the most lopsided calls.
    EasyFirst,
}

impl SchedulingPolicy {
    pub const ALL: [SchedulingPolicy; 3] = [
        SchedulingPolicy::ConflictAware,
        SchedulingPolicy::HardFirst,
        SchedulingPolicy::EasyFirst,
    ];

    pub fn name(self) -> &'static str {
        match self {
            SchedulingPolicy::ConflictAware => "conflict-aware",
            SchedulingPolicy::HardFirst => "hard-first",
            SchedulingPolicy::EasyFirst => "easy-first",
        }
    }
}

impl fmt::Display for SchedulingPolicy {
    fn fmt(&self, f: &mut fmt::Formatter<'_>) -> fmt::Result {
        f.write_str(self.name())
    }
}

impl FromStr for SchedulingPolicy {
    type Err = CoreError;

    fn from_str(s: &str) -> Result<Self> {
        match s.to_ascii_lowercase().as_str() {
            "conflict-aware" | "conflict_aware" => Ok(SchedulingPolicy::ConflictAware),
            "hard-first" | "hard_first" => Ok(SchedulingPolicy::HardFirst),
            "easy-first" | "easy_first" => Ok(SchedulingPolicy::EasyFirst),
            other => Err(CoreError::InvalidConfig(format!(
                "unknown scheduling policy `{other}` (expected conflict-aware, hard-first or easy-first)"
            ))),
        }
    }
}

/// A contradiction pair eligible for arbitration this round, with the
/// round-start credibilities it was mined under.
#[derive(Clone, Debug, PartialEq, Serialize, Deserialize)]
pub struct ActivePair {
    pub a: String,
    pub b: String,
    pub p_a: f64,
    pub p_b: f64,
    /// `(p_a + p_b) / (1 + |p_a - p_b|)` — high when both sides are credible
    /// and evenly matched.
    pub intensity: f64,
}

impl ActivePair {
    pub fn gap(&self) -> f64 {
        (self.p_a - self.p_b).abs()
    }

    fn key(&self) -> (&str, &str) {
        (&self.a, &self.b)
    }
}

/// One signed logit adjustment applied to a node.
#[derive(Clone, Debug, PartialEq, Serialize, Deserialize)]
pub struct LogitUpdate {
    pub node: String,
    pub delta: f64,
}

/// One arbitration call: the pair, the context shown, the verdict, and the
/// updates that were applied (empty when the arbiter abstained).
#[derive(Clone, Debug, PartialEq, Serialize, Deserialize)]
pub struct ArbitrationStep {
    pub a: String,
    pub b: String,
    pub context: Vec<String>,
    pub verdict: ArbitrationVerdict,
    pub updates: Vec<LogitUpdate>,
}

/// One round of the loop.
#[derive(Clone, Debug, PartialEq, Serialize, Deserialize)]
pub struct ArbitrationRound {
    /// 1-based round index.
    pub index: usize,
    /// Size of the active set mined at the start of the round.
    pub active: usize,
    pub steps: Vec<ArbitrationStep>,
}

/// Full record of an arbitration run — enough to replay it exactly.
#[derive(Clone, Debug, PartialEq, Serialize, Deserialize)]
pub struct ArbitrationTrace {
    pub policy: SchedulingPolicy,
    pub rounds: Vec<ArbitrationRound>,
    /// Rounds actually executed (excludes the round that found nothing
    /// active).
    pub rounds_used: usize,
    /// True when the loop exited before its round budget because the active
    /// set emptied.
    pub stopped_early: bool,
    /// True when no pair was active after the run — either by early stop or
    /// because the final round settled the last conflict.
    pub converged: bool,
    /// Pairs still active after the final round (0 when converged).
    pub remaining_active: usize,
    /// Relation-verification calls spent building the graph, when known.
    /// Arbitration itself never issues verification calls; runners thread
    /// the construction tally through here so exports carry the full cost.
    #[serde(default, skip_serializing_if = "Option::is_none")]
    pub verifier_calls: Option<u64>,
}

impl ArbitrationTrace {
    /// Number of arbitration calls issued across all rounds.
    pub fn arbitration_calls(&self) -> u64 {
        self.rounds.iter().map(|r| r.steps.len() as u64).sum()
    }

    /// Verification plus arbitration calls, when the verification tally is
    /// known; otherwise just the arbitration calls.
    pub fn total_calls(&self) -> u64 {
        self.verifier_calls.unwrap_or(0) + self.arbitration_calls()
    }

    /// Re-applies the recorded updates to a pre-arbitration graph. After
    /// replay the graph matches the post-arbitration state exactly: same
    /// logits, same per-pair resolution counts.
    pub fn replay(&self, graph: &mut EvidenceGraph) -> Result<()> {
        for round in &self.rounds {
            for step in &round.steps {
                for update in &step.updates {
                    graph.node_mut(&update.node)?.logit += update.delta;
                }
                if step.verdict.is_decisive() {
                    bump_resolved(graph, &step.a, &step.b)?;
                }
            }
        }
        Ok(())
    }
}

fn bump_resolved(graph: &mut EvidenceGraph, a: &str, b: &str) -> Result<()> {
    *graph
        .node_mut(a)?
        .resolved_pairs
        .entry(b.to_string())
        .or_insert(0) += 1;
    *graph
        .node_mut(b)?
        .resolved_pairs
        .entry(a.to_string())
        .or_insert(0) += 1;
    Ok(())
}

fn resolved_count(graph: &EvidenceGraph, a: &str, b: &str) -> u32 {
    let one = |x: &str, y: &str| {
        graph
            .nodes
            .get(x)
            .and_then(|n| n.resolved_pairs.get(y))
            .copied()
            .unwrap_or(0)
    };
    // Both sides are incremented together; take the max defensively in case
    // a hand-built graph only filled one side.
    one(a, b).max(one(b, a))
}

/// Mines the active set: contradiction edges whose endpoints are both
/// *strictly* above `tau_accept` and whose decisive-arbitration count is
/// still below `per_pair_cap`. Sorted by intensity descending, ties by
/// `(a, b)`.
pub fn mine_active(
    graph: &EvidenceGraph,
    tau_accept: f64,
    per_pair_cap: u32,
) -> Result<Vec<ActivePair>> {
    let mut active = Vec::new();
    for edge in &graph.contradiction_edges {
        if resolved_count(graph, &edge.a, &edge.b) >= per_pair_cap {
            continue;
        }
        let p_a = graph.node(&edge.a)?.probability();
        let p_b = graph.node(&edge.b)?.probability();
        if p_a > tau_accept && p_b > tau_accept {
            active.push(ActivePair {
                a: edge.a.clone(),
                b: edge.b.clone(),
                p_a,
                p_b,
                intensity: conflict_intensity(p_a, p_b),
            });
        }
    }
    active.sort_by(|x, y| {
        y.intensity
            .total_cmp(&x.intensity)
            .then_with(|| x.key().cmp(&y.key()))
    });
    Ok(active)
}

/// Takes the `k` pairs the policy ranks first. Ordering keys:
/// conflict-aware = intensity descending, hard-first = gap ascending,
/// easy-first = gap descending. All ties break by `(a, b)` ascending.
pub fn select_top_k(pairs: &[ActivePair], policy: SchedulingPolicy, k: usize) -> Vec<ActivePair> {
    let mut ranked = pairs.to_vec();
    ranked.sort_by(|x, y| {
        let by_policy = match policy {
            SchedulingPolicy::ConflictAware => y.intensity.total_cmp(&x.intensity),
            SchedulingPolicy::HardFirst => x.gap().total_cmp(&y.gap()),
            SchedulingPolicy::EasyFirst => y.gap().total_cmp(&x.gap()),
        };
        by_policy.then_with(|| x.key().cmp(&y.key()))
    });
    ranked.truncate(k);
    ranked
}

/// Collects the supporting context for a conflict: the union of the support
/// neighbors of both endpoints, endpoints excluded, deduplicated, ranked by
/// snapshot credibility descending (ties by id ascending) and capped at
/// [`CONTEXT_CAP`]. `snapshot` holds round-start probabilities; nodes
/// missing from it fall back to their live value.
pub fn supporting_context<'g>(
    graph: &'g EvidenceGraph,
    a: &str,
    b: &str,
    snapshot: &BTreeMap<String, f64>,
) -> Result<Vec<&'g ClaimNode>> {
    let mut ids: BTreeSet<String> = BTreeSet::new();
    ids.extend(graph.support_neighbors(a));
    ids.extend(graph.support_neighbors(b));
    ids.remove(a);
    ids.remove(b);

    let mut ranked: Vec<&ClaimNode> = Vec::with_capacity(ids.len());
    for id in &ids {
        ranked.push(graph.node(id)?);
    }
    let p_of = |n: &ClaimNode| snapshot.get(&n.id).copied().unwrap_or_else(|| n.probability());
    ranked.sort_by(|x, y| {
        p_of(y)
            .total_cmp(&p_of(x))
            .then_with(|| x.id.cmp(&y.id))
    });
    ranked.truncate(CONTEXT_CAP);
    Ok(ranked)
}

/// Applies a verdict to the graph: decisive verdicts move the winner up and
/// the loser down by `eta` and count toward the pair's resolution cap;
/// abstentions change nothing. Returns the updates that were applied.
fn apply_verdict(
    graph: &mut EvidenceGraph,
    a: &str,
    b: &str,
    verdict: &ArbitrationVerdict,
    eta: f64,
) -> Result<Vec<LogitUpdate>> {
    if !verdict.is_decisive() {
        return Ok(Vec::new());
    }
    let named = |id: &str| id == a || id == b;
    if !named(&verdict.winner) || !named(&verdict.loser) || verdict.winner == verdict.loser {
        return Err(CoreError::InvalidGraph(format!(
            "arbitration verdict names ({}, {}) but the pair is ({a}, {b})",
            verdict.winner, verdict.loser
        )));
    }
    graph.node_mut(&verdict.winner)?.logit += eta;
    graph.node_mut(&verdict.loser)?.logit -= eta;
    bump_resolved(graph, a, b)?;
    Ok(vec![
        LogitUpdate {
            node: verdict.winner.clone(),
            delta: eta,
        },
        LogitUpdate {
            node: verdict.loser.clone(),
            delta: -eta,
        },
    ])
}

/// Runs the arbitration loop in place and returns its trace.
///
/// Per round: snapshot credibilities once, mine the active set (empty set
/// stops the loop), schedule `budget_k` pairs under `policy`, then for each
/// scheduled pair assemble context, call the arbiter, and apply the verdict
/// immediately — later pairs in the same round see updated credibilities in
/// the graph, but scheduling and context ranking stay pinned to the
/// snapshot.
pub fn run_arbitration(
    graph: &mut EvidenceGraph,
    backend: &dyn EvidenceBackend,
    cfg: &PipelineConfig,
    policy: SchedulingPolicy,
) -> Result<ArbitrationTrace> {
    cfg.validate()?;
    let mut trace = ArbitrationTrace {
        policy,
        rounds: Vec::new(),
        rounds_used: 0,
        stopped_early: false,
        converged: false,
        remaining_active: 0,
        verifier_calls: None,
    };

    for index in 1..=cfg.rounds {
        let snapshot: BTreeMap<String, f64> = graph
            .nodes
            .iter()
            .map(|(id, n)| (id.clone(), n.probability()))
            .collect();
        let active = mine_active(graph, cfg.tau_accept, cfg.per_pair_cap)?;
        if active.is_empty() {
            trace.stopped_early = true;
            break;
        }

        let mut steps = Vec::new();
        for pair in select_top_k(&active, policy, cfg.budget_k) {
            let verdict = {
                let ctx = supporting_context(graph, &pair.a, &pair.b, &snapshot)?;
                backend.arbitrate(graph.node(&pair.a)?, graph.node(&pair.b)?, &ctx)?
            };
            let context_ids = {
                // Recompute ids only (cheap) so the step records what was shown.
                supporting_context(graph, &pair.a, &pair.b, &snapshot)?
                    .iter()
                    .map(|n| n.id.clone())
                    .collect()
            };
            let updates = apply_verdict(graph, &pair.a, &pair.b, &verdict, cfg.eta)?;
            steps.push(ArbitrationStep {
                a: pair.a.clone(),
                b: pair.b.clone(),
                context: context_ids,
                verdict,
                updates,
            });
        }
        trace.rounds.push(ArbitrationRound {
            index,
            active: active.len(),
            steps,
        });
    }

    trace.rounds_used = trace.rounds.len();
    trace.remaining_active = mine_active(graph, cfg.tau_accept, cfg.per_pair_cap)?.len();
    trace.converged = trace.remaining_active == 0;
    Ok(trace)
}

/// The validated set: nodes at or above `tau_accept` (inclusive), ordered by
/// credibility descending, ties by id ascending.
pub fn validated_set(graph: &EvidenceGraph, tau_accept: f64) -> Vec<&ClaimNode> {
    let mut nodes: Vec<&ClaimNode> = graph
        .nodes
        .values()
        .filter(|n| n.probability() >= tau_accept)
        .collect();
    nodes.sort_by(|x, y| {
        y.probability()
            .total_cmp(&x.probability())
            .then_with(|| x.id.cmp(&y.id))
    });
    nodes
}

/// Renders the validated set as a numbered context block, one claim per
/// line: `N. [id] text (sources: d1, d2; p=0.832)`. An empty set renders a
/// single comment line so downstream consumers always get non-empty output.
pub fn assemble_context(validated: &[&ClaimNode]) -> String {
    if validated.is_empty() {
        return "# no validated evidence\n".to_string();
    }
    let mut out = String::new();
    for (i, node) in validated.iter().enumerate() {
        let sources: Vec<&str> = node.sources.iter().map(String::as_str).collect();
        out.push_str(&format!(
            "{}. [{}] {} (sources: {}; p={:.3})\n",
            i + 1,
            node.id,
            node.canonical_text,
            sources.join(", "),
            node.probability(),
        ));
    }
    out
}

/// Recovers the node ids from a context block produced by
/// [`assemble_context`]. Comment and blank lines are skipped.
pub fn parse_context(text: &str) -> Vec<String> {
    text.lines()
        .filter_map(|line| {
            let line = line.trim();
            if line.is_empty() || line.starts_with('#') {
                return None;
            }
            let open = line.find('[')?;
            let close = line[open..].find(']')? + open;
            Some(line[open + 1..close].to_string())
        })
        .collect()
}
