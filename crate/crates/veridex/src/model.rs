//! Core data model: documents, atomic claims, claim nodes, typed edges, and
//! the evidence graph they form.
//!
//! Identifiers are plain strings ordered lexicographically; every container
//! that affects iteration order is a `BTreeMap`/`BTreeSet` so that identical
//! inputs always produce identical artifacts.

use std::collections::{BTreeMap, BTreeSet};

use serde::{Deserialize, Serialize};

use crate::error::{CoreError, Result};
use crate::math::sigmoid;

/// Maximum deviation from unit length tolerated for claim embeddings.
pub const UNIT_NORM_TOLERANCE: f64 = 1e-6;

/// A source document handed to claim extraction.
#[derive(Clone, Debug, PartialEq, Eq, Serialize, Deserialize)]
pub struct Document {
    pub id: String,
    pub text: String,
}

impl Document {
    pub fn new(id: impl Into<String>, text: impl Into<String>) -> Self {
        Self {
            id: id.into(),
            text: text.into(),
        }
    }
}

/// A minimal, self-contained factual assertion extracted from one document.
#[derive(Clone, Debug, PartialEq, Serialize, Deserialize)]
pub struct AtomicClaim {
    pub id: String,
    pub text: String,
    /// Document the claim was extracted from.
    pub source_doc: String,
    /// Normalized entity mentions (lowercased, single-spaced).
    #[serde(default)]
    pub entities: BTreeSet<String>,
    /// Unit-normalized embedding; attached by the embedding backend.
    #[serde(default, skip_serializing_if = "Option::is_none")]
    pub embedding: Option<Vec<f64>>,
}

impl AtomicClaim {
    /// Returns the embedding or an error naming the claim.
    pub fn embedding(&self) -> Result<&[f64]> {
        self.embedding
            .as_deref()
            .ok_or_else(|| CoreError::MissingEmbedding(self.id.clone()))
    }

    /// Checks the unit-norm invariant of an attached embedding.
    pub fn check_embedding_norm(&self) -> Result<()> {
        if let Some(v) = &self.embedding {
            let norm = v.iter().map(|x| x * x).sum::<f64>().sqrt();
            if (norm - 1.0).abs() > UNIT_NORM_TOLERANCE {
                return Err(CoreError::NotUnitNorm {
                    id: self.id.clone(),
                    norm,
                });
            }
        }
        Ok(())
    }
}

/// The claim-pool artifact: extraction output for one query's documents.
#[derive(Clone, Debug, Default, PartialEq, Serialize, Deserialize)]
pub struct ClaimPool {
    #[serde(default)]
    pub query: String,
    pub claims: Vec<AtomicClaim>,
}

/// Canonical representative of a cluster of equivalent atomic claims.
#[derive(Clone, Debug, PartialEq)]
pub struct ClaimNode {
    /// Id of the cluster's founding claim.
    pub id: String,
    /// Longest member text — the most detailed phrasing of the fact.
    pub canonical_text: String,
    /// Ids of the merged member claims, ascending.
    pub members: Vec<String>,
    /// Union of the members' source documents.
    pub sources: BTreeSet<String>,
    /// Entity set shared by every member (merging never crosses it).
    pub entities: BTreeSet<String>,
    /// Credibility in log-odds space.
    pub logit: f64,
    /// Embedding of the founding claim; `None` once a graph has been
    /// round-tripped through JSON (arbitration does not need it).
    pub embedding: Option<Vec<f64>>,
    /// Decisive-arbitration counts against opposing node ids.
    pub resolved_pairs: BTreeMap<String, u32>,
}

impl ClaimNode {
    /// Current credibility probability `sigmoid(logit)`.
    pub fn probability(&self) -> f64 {
        sigmoid(self.logit)
    }

    pub fn embedding(&self) -> Result<&[f64]> {
        self.embedding
            .as_deref()
            .ok_or_else(|| CoreError::MissingEmbedding(self.id.clone()))
    }
}

/// Edge type in the evidence graph.
#[derive(Clone, Copy, Debug, PartialEq, Eq, PartialOrd, Ord, Serialize, Deserialize)]
#[serde(rename_all = "lowercase")]
pub enum EdgeKind {
    Support,
    Contradiction,
}

/// An undirected typed edge between two claim nodes, stored with `a < b`.
#[derive(Clone, Debug, PartialEq, Serialize, Deserialize)]
pub struct Edge {
    pub a: String,
    pub b: String,
    pub kind: EdgeKind,
    /// Verifier confidence in the relation, in `[0, 1]`.
    pub confidence: f64,
    /// Embedding similarity recorded when the pair was mined, in `[-1, 1]`.
    pub similarity: f64,
}

impl Edge {
    /// Builds an edge, canonicalizing endpoint order to `a < b`.
    pub fn new(
        a: impl Into<String>,
        b: impl Into<String>,
        kind: EdgeKind,
        confidence: f64,
        similarity: f64,
    ) -> Result<Self> {
        let (a, b) = (a.into(), b.into());
        if a == b {
            return Err(CoreError::InvalidGraph(format!(
                "self-edge on node `{a}`"
            )));
        }
        let (a, b) = if a < b { (a, b) } else { (b, a) };
        Ok(Self {
            a,
            b,
            kind,
            confidence,
            similarity,
        })
    }

    /// The `(a, b)` key used for deterministic ordering.
    pub fn key(&self) -> (&str, &str) {
        (&self.a, &self.b)
    }

    /// Whether the edge touches the given node.
    pub fn touches(&self, id: &str) -> bool {
        self.a == id || self.b == id
    }

    /// The endpoint opposite to `id`, if the edge touches it.
    pub fn other(&self, id: &str) -> Option<&str> {
        if self.a == id {
            Some(&self.b)
        } else if self.b == id {
            Some(&self.a)
        } else {
            None
        }
    }
}

/// Graph over claim nodes with typed support/contradiction edges.
#[derive(Clone, Debug, Default, PartialEq)]
pub struct EvidenceGraph {
    pub query: String,
    pub nodes: BTreeMap<String, ClaimNode>,
    pub support_edges: Vec<Edge>,
    pub contradiction_edges: Vec<Edge>,
}

impl EvidenceGraph {
    pub fn node(&self, id: &str) -> Result<&ClaimNode> {
        self.nodes
            .get(id)
            .ok_or_else(|| CoreError::UnknownNode(id.to_string()))
    }

    pub fn node_mut(&mut self, id: &str) -> Result<&mut ClaimNode> {
        self.nodes
            .get_mut(id)
            .ok_or_else(|| CoreError::UnknownNode(id.to_string()))
    }

    /// Ids of nodes connected to `id` by support edges, ascending.
    pub fn support_neighbors(&self, id: &str) -> Vec<String> {
        let mut out: Vec<String> = self
            .support_edges
            .iter()
            .filter_map(|e| e.other(id).map(str::to_string))
            .collect();
        out.sort();
        out.dedup();
        out
    }

    /// Sorts both edge lists by their `(a, b)` key.
    pub fn sort_edges(&mut self) {
        self.support_edges
            .sort_by(|x, y| x.key().cmp(&y.key()));
        self.contradiction_edges
            .sort_by(|x, y| x.key().cmp(&y.key()));
    }

    /// Sum of all node logits — conserved by decisive arbitration updates.
    pub fn total_logit(&self) -> f64 {
        self.nodes.values().map(|n| n.logit).sum()
    }

    /// Checks the structural invariants: known endpoints, canonical `a < b`
    /// order, sorted edge lists, at most one edge per unordered pair, and
    /// bounded confidences/similarities.
    pub fn validate(&self) -> Result<()> {
        let mut seen: BTreeSet<(&str, &str)> = BTreeSet::new();
        for edge in self.support_edges.iter().chain(&self.contradiction_edges) {
            if edge.a >= edge.b {
                return Err(CoreError::InvalidGraph(format!(
                    "edge ({}, {}) is not in canonical order",
                    edge.a, edge.b
                )));
            }
            for end in [&edge.a, &edge.b] {
                if !self.nodes.contains_key(end) {
                    return Err(CoreError::InvalidGraph(format!(
                        "edge endpoint `{end}` is not a node"
                    )));
                }
            }
            if !seen.insert((&edge.a, &edge.b)) {
                return Err(CoreError::InvalidGraph(format!(
                    "duplicate edge on pair ({}, {})",
                    edge.a, edge.b
                )));
            }
            if !(0.0..=1.0).contains(&edge.confidence) {
                return Err(CoreError::InvalidGraph(format!(
                    "edge ({}, {}) confidence {} outside [0, 1]",
                    edge.a, edge.b, edge.confidence
                )));
            }
            if !(-1.0..=1.0).contains(&edge.similarity) {
                return Err(CoreError::InvalidGraph(format!(
                    "edge ({}, {}) similarity {} outside [-1, 1]",
                    edge.a, edge.b, edge.similarity
                )));
            }
        }
        for list in [&self.support_edges, &self.contradiction_edges] {
            if !list.windows(2).all(|w| w[0].key() <= w[1].key()) {
                return Err(CoreError::InvalidGraph(
                    "edge list is not sorted by (a, b)".into(),
                ));
            }
        }
        Ok(())
    }
}
