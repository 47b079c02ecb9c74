//! Pluggable evidence backends.
//!
//! Four judgment calls are delegated behind [`EvidenceBackend`]: claim
//! extraction, embedding, pairwise relation verification, and gated
//! arbitration. Two implementations ship:
//!
//! * [`OracleBackend`] — a deterministic lookup table, the workhorse for
//!   tests, simulations, and offline runs;
//! * [`RemoteBackend`] — an OpenAI-compatible chat/embeddings client for
//!   real model backends.
//!
//! Backends are stateless per call (`&self`, `Send + Sync`), so callers may
//! fan out over them from worker threads. Repeated calls with equal inputs
//! must return equal outputs — the oracle by construction, the remote client
//! by pinning temperature to 0 (best effort).

mod oracle;
mod remote;

pub use oracle::{
    ArbitrationMode, ArbitrationRule, ExtractionRule, OracleBackend, OracleTable, RelationRule,
};
pub use remote::{RemoteBackend, RemoteConfig};

use std::sync::atomic::{AtomicU64, Ordering};

use serde::{Deserialize, Serialize};

use crate::error::BackendError;
use crate::model::{AtomicClaim, ClaimNode, Document};

/// How many context nodes an arbitration prompt may carry.
pub const CONTEXT_CAP: usize = 8;

/// Relation classes a verifier can assign to a claim pair.
#[derive(Clone, Copy, Debug, PartialEq, Eq, Serialize, Deserialize)]
#[serde(rename_all = "lowercase")]
pub enum RelationKind {
    Support,
    Contradiction,
    /// No edge; also the fail-closed value for unknown or unparseable pairs.
    Neutral,
}

/// Verdict of the relation verifier for one unordered claim pair.
#[derive(Clone, Copy, Debug, PartialEq, Serialize, Deserialize)]
pub struct RelationVerdict {
    pub relation: RelationKind,
    /// Verifier confidence in `[0, 1]`.
    pub confidence: f64,
}

impl RelationVerdict {
    /// The fail-closed verdict: no edge, zero confidence.
    pub const NEUTRAL: Self = Self {
        relation: RelationKind::Neutral,
        confidence: 0.0,
    };
}

/// Gated verdict of the arbitrator for one contradiction pair.
///
/// `gate_w` is fully derived: 1 iff `confidence >= tau_gate`. An abstention is
/// expressed as zero confidence (hence `gate_w = 0`), never as a high-
/// confidence verdict with the gate forced shut.
#[derive(Clone, Debug, PartialEq, Serialize, Deserialize)]
pub struct ArbitrationVerdict {
    pub winner: String,
    pub loser: String,
    /// 1 = decisive (apply the logit update), 0 = abstain.
    pub gate_w: u8,
    pub confidence: f64,
}

impl ArbitrationVerdict {
    /// Builds a verdict, deriving the gate bit from the confidence.
    pub fn gated(
        winner: impl Into<String>,
        loser: impl Into<String>,
        confidence: f64,
        tau_gate: f64,
    ) -> Self {
        Self {
            winner: winner.into(),
            loser: loser.into(),
            gate_w: u8::from(confidence >= tau_gate),
            confidence,
        }
    }

    /// The abstaining verdict for a pair (zero confidence, gate shut).
    /// Winner/loser are filled in id order so the record stays deterministic.
    pub fn abstain(a: &str, b: &str) -> Self {
        let (w, l) = if a <= b { (a, b) } else { (b, a) };
        Self {
            winner: w.to_string(),
            loser: l.to_string(),
            gate_w: 0,
            confidence: 0.0,
        }
    }

    pub fn is_decisive(&self) -> bool {
        self.gate_w == 1
    }
}

/// The judgment interface the pipeline is generic over.
pub trait EvidenceBackend: Send + Sync {
    /// Decomposes a document into atomic claims with deterministic ids
    /// (`{doc_id}#{index}`) and normalized entities. Claims come back
    /// without embeddings; attach them via [`EvidenceBackend::embed`].
    fn extract_claims(&self, doc: &Document) -> Result<Vec<AtomicClaim>, BackendError>;

    /// Embeds texts into unit vectors, one per input, all of equal dimension.
    fn embed(&self, texts: &[String]) -> Result<Vec<Vec<f64>>, BackendError>;

    /// Classifies the relation between two claim nodes. Symmetric: the pair
    /// is canonicalized before lookup/prompting, so argument order never
    /// changes the verdict.
    fn verify_relation(
        &self,
        a: &ClaimNode,
        b: &ClaimNode,
    ) -> Result<RelationVerdict, BackendError>;

    /// Arbitrates a contradiction given supporting context (already ranked,
    /// at most [`CONTEXT_CAP`] nodes). Winner/loser are node ids.
    fn arbitrate(
        &self,
        a: &ClaimNode,
        b: &ClaimNode,
        ctx: &[&ClaimNode],
    ) -> Result<ArbitrationVerdict, BackendError>;
}

impl<B: EvidenceBackend + ?Sized> EvidenceBackend for &B {
    fn extract_claims(&self, doc: &Document) -> Result<Vec<AtomicClaim>, BackendError> {
        (**self).extract_claims(doc)
    }
    fn embed(&self, texts: &[String]) -> Result<Vec<Vec<f64>>, BackendError> {
        (**self).embed(texts)
    }
    fn verify_relation(
        &self,
        a: &ClaimNode,
        b: &ClaimNode,
    ) -> Result<RelationVerdict, BackendError> {
        (**self).verify_relation(a, b)
    }
    fn arbitrate(
        &self,
        a: &ClaimNode,
        b: &ClaimNode,
        ctx: &[&ClaimNode],
    ) -> Result<ArbitrationVerdict, BackendError> {
        (**self).arbitrate(a, b, ctx)
    }
}

impl<B: EvidenceBackend + ?Sized> EvidenceBackend for Box<B> {
    fn extract_claims(&self, doc: &Document) -> Result<Vec<AtomicClaim>, BackendError> {
        (**self).extract_claims(doc)
    }
    fn embed(&self, texts: &[String]) -> Result<Vec<Vec<f64>>, BackendError> {
        (**self).embed(texts)
    }
    fn verify_relation(
        &self,
        a: &ClaimNode,
        b: &ClaimNode,
    ) -> Result<RelationVerdict, BackendError> {
        (**self).verify_relation(a, b)
    }
    fn arbitrate(
        &self,
        a: &ClaimNode,
        b: &ClaimNode,
        ctx: &[&ClaimNode],
    ) -> Result<ArbitrationVerdict, BackendError> {
        (**self).arbitrate(a, b, ctx)
    }
}

/// Snapshot of how many backend calls a run consumed.
#[derive(Clone, Copy, Debug, Default, PartialEq, Eq, Serialize, Deserialize)]
pub struct CallCounts {
    pub extract: u64,
    pub embed: u64,
    pub verify: u64,
    pub arbitrate: u64,
}

/// Wraps any backend and tallies calls per method (thread-safe).
pub struct CountingBackend<B> {
    inner: B,
    extract: AtomicU64,
    embed: AtomicU64,
    verify: AtomicU64,
    arbitrate: AtomicU64,
}

impl<B: EvidenceBackend> CountingBackend<B> {
    pub fn new(inner: B) -> Self {
        Self {
            inner,
            extract: AtomicU64::new(0),
            embed: AtomicU64::new(0),
            verify: AtomicU64::new(0),
            arbitrate: AtomicU64::new(0),
        }
    }

    pub fn counts(&self) -> CallCounts {
        CallCounts {
            extract: self.extract.load(Ordering::Relaxed),
            embed: self.embed.load(Ordering::Relaxed),
            verify: self.verify.load(Ordering::Relaxed),
            arbitrate: self.arbitrate.load(Ordering::Relaxed),
        }
    }

    pub fn into_inner(self) -> B {
        self.inner
    }
}

impl<B: EvidenceBackend> EvidenceBackend for CountingBackend<B> {
    fn extract_claims(&self, doc: &Document) -> Result<Vec<AtomicClaim>, BackendError> {
        self.extract.fetch_add(1, Ordering::Relaxed);
        self.inner.extract_claims(doc)
    }
    fn embed(&self, texts: &[String]) -> Result<Vec<Vec<f64>>, BackendError> {
        self.embed.fetch_add(1, Ordering::Relaxed);
        self.inner.embed(texts)
    }
    fn verify_relation(
        &self,
        a: &ClaimNode,
        b: &ClaimNode,
    ) -> Result<RelationVerdict, BackendError> {
        self.verify.fetch_add(1, Ordering::Relaxed);
        self.inner.verify_relation(a, b)
    }
    fn arbitrate(
        &self,
        a: &ClaimNode,
        b: &ClaimNode,
        ctx: &[&ClaimNode],
    ) -> Result<ArbitrationVerdict, BackendError> {
        self.arbitrate.fetch_add(1, Ordering::Relaxed);
        self.inner.arbitrate(a, b, ctx)
    }
}

/// Entity normalization shared by all backends: lowercase, single-spaced.
pub(crate) fn normalize_entity(raw: &str) -> String {
    raw.to_lowercase()
        .split_whitespace()
        .collect::<Vec<_>>()
        .join(" ")
}
