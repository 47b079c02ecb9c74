//! Claim normalization: merging equivalent phrasings into claim nodes and
//! assigning the multiplicity-based credibility prior.
//!
//! Clustering is greedy over claims in ascending id order. Each claim joins
//! the first existing cluster (in creation order) whose *founding* claim is
//! within `tau_merge` cosine and has an identical entity set; otherwise it
//! founds a new cluster. Comparing against the founder — rather than the
//! longest or latest member — keeps the procedure order-independent of later
//! growth and makes it idempotent: re-clustering the resulting nodes changes
//! nothing, because any two founders already failed the merge test against
//! each other.

use std::collections::BTreeSet;

use crate::config::PipelineConfig;
use crate::error::Result;
use crate::math::cosine;
use crate::model::{AtomicClaim, ClaimNode};

/// Initial credibility prior from source multiplicity:
/// `p0 = min(0.9, 0.5 + 0.1 * (|sources| - 1))`.
///
/// A single-source claim starts undecided at 0.5; each extra independent
/// source adds 0.1, saturating at 0.9 so no prior is unappealable.
pub fn initial_credibility(node: &ClaimNode) -> f64 {
    let extra = node.sources.len().saturating_sub(1) as f64;
    (0.5 + 0.1 * extra).min(0.9)
}

/// Merges equivalent claims into [`ClaimNode`]s.
///
/// Two claims are equivalent iff their embedding cosine is at least
/// `cfg.tau_merge` *and* their entity sets are exactly equal — a 2003 founding
/// and a 2004 founding never merge however similar the sentences read.
///
/// The canonical text of a node is its longest member text (ties keep the
/// earlier member); sources are the union of member sources; the node id and
/// embedding are the founder's. Output order follows founder ids, ascending.
///
/// Errors if any claim lacks an embedding or carries a non-unit one.
pub fn normalize_claims(pool: &[AtomicClaim], cfg: &PipelineConfig) -> Result<Vec<ClaimNode>> {
    let mut claims: Vec<&AtomicClaim> = pool.iter().collect();
    claims.sort_by(|a, b| a.id.cmp(&b.id));

    struct Cluster<'a> {
        founder: &'a AtomicClaim,
        members: Vec<&'a AtomicClaim>,
    }

    let mut clusters: Vec<Cluster> = Vec::new();
    for claim in claims {
        claim.check_embedding_norm()?;
        let embedding = claim.embedding()?;
        let mut joined = false;
        for cluster in &mut clusters {
            if cluster.founder.entities != claim.entities {
                continue;
            }
            if cosine(cluster.founder.embedding()?, embedding)? >= cfg.tau_merge {
                cluster.members.push(claim);
                joined = true;
                break;
            }
        }
        if !joined {
            clusters.push(Cluster {
                founder: claim,
                members: vec![claim],
            });
        }
    }

    Ok(clusters
        .into_iter()
        .map(|cluster| {
            let canonical = cluster
                .members
                .iter()
                .max_by_key(|c| c.text.len())
                .expect("cluster has at least its founder");
            let sources: BTreeSet<String> = cluster
                .members
                .iter()
                .map(|c| c.source_doc.clone())
                .collect();
            ClaimNode {
                id: cluster.founder.id.clone(),
                canonical_text: canonical.text.clone(),
                members: cluster.members.iter().map(|c| c.id.clone()).collect(),
                sources,
                entities: cluster.founder.entities.clone(),
                logit: 0.0,
                embedding: cluster.founder.embedding.clone(),
                resolved_pairs: Default::default(),
            }
        })
        .collect())
}
