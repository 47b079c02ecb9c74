//! Stage II: evidence-graph construction.
//!
//! From a normalized claim pool this module drops query-irrelevant nodes,
//! mines embedding-similar candidate pairs, asks the relation verifier to
//! type each candidate, and prunes the support structure down to the edge
//! budget. Exactly one verifier call is made per candidate pair; edges are
//! materialized in sorted pair order regardless of how the verdicts were
//! fetched, so construction is deterministic for a deterministic backend.

use std::collections::{BTreeMap, HashMap};

use rayon::prelude::*;
use serde::{Deserialize, Serialize};

use crate::backend::{EvidenceBackend, RelationKind};
use crate::config::{PipelineConfig, PruneMode};
use crate::error::{CoreError, Result};
use crate::math::{cosine, logit};
use crate::model::{AtomicClaim, ClaimNode, Document, Edge, EdgeKind, EvidenceGraph};
use crate::normalize::{initial_credibility, normalize_claims};

/// An unordered node pair whose embedding similarity cleared `tau_sim`.
#[derive(Clone, Debug, PartialEq, Serialize, Deserialize)]
pub struct CandidatePair {
    pub a: String,
    pub b: String,
    pub similarity: f64,
}

/// Keeps the nodes whose embedding cosine against the query reaches `tau_q`
/// (inclusive). Input order is preserved.
pub fn filter_by_query(
    query_embedding: &[f64],
    nodes: Vec<ClaimNode>,
    tau_q: f64,
) -> Result<Vec<ClaimNode>> {
    let mut kept = Vec::with_capacity(nodes.len());
    for node in nodes {
        if cosine(query_embedding, node.embedding()?)? >= tau_q {
            kept.push(node);
        }
    }
    Ok(kept)
}

/// All unordered pairs with cosine >= `tau_sim` (inclusive), each stored with
/// `a < b` and the whole list sorted by `(a, b)`.
pub fn mine_candidates(nodes: &[ClaimNode], tau_sim: f64) -> Result<Vec<CandidatePair>> {
    let mut pairs = Vec::new();
    for (i, left) in nodes.iter().enumerate() {
        for right in &nodes[i + 1..] {
            let similarity = cosine(left.embedding()?, right.embedding()?)?;
            if similarity >= tau_sim {
                let (a, b) = if left.id < right.id {
                    (&left.id, &right.id)
                } else {
                    (&right.id, &left.id)
                };
                pairs.push(CandidatePair {
                    a: a.clone(),
                    b: b.clone(),
                    similarity,
                });
            }
        }
    }
    pairs.sort_by(|x, y| (&x.a, &x.b).cmp(&(&y.a, &y.b)));
    Ok(pairs)
}

/// Fetches one relation verdict per candidate pair (in parallel) and
/// materializes typed edges for non-neutral verdicts whose confidence
/// reaches `tau_conf`. Returns `(support, contradiction)` lists sorted by
/// `(a, b)`.
pub fn build_edges(
    nodes: &[ClaimNode],
    pairs: &[CandidatePair],
    backend: &dyn EvidenceBackend,
    tau_conf: f64,
) -> Result<(Vec<Edge>, Vec<Edge>)> {
    let by_id: HashMap<&str, &ClaimNode> = nodes.iter().map(|n| (n.id.as_str(), n)).collect();
    let resolve = |id: &str| -> Result<&ClaimNode> {
        by_id
            .get(id)
            .copied()
            .ok_or_else(|| CoreError::UnknownNode(id.to_string()))
    };

    // Verification fans out across worker threads; the verdict list comes
    // back in pair order, so edge materialization below stays deterministic.
    let verdicts = pairs
        .par_iter()
        .map(|pair| {
            let verdict = backend.verify_relation(resolve(&pair.a)?, resolve(&pair.b)?)?;
            Ok((pair, verdict))
        })
        .collect::<Result<Vec<_>>>()?;

    let mut support = Vec::new();
    let mut contradiction = Vec::new();
    for (pair, verdict) in verdicts {
        if verdict.confidence < tau_conf {
            continue;
        }
        let kind = match verdict.relation {
            RelationKind::Support => EdgeKind::Support,
            RelationKind::Contradiction => EdgeKind::Contradiction,
            RelationKind::Neutral => continue,
        };
        let edge = Edge::new(&pair.a, &pair.b, kind, verdict.confidence, pair.similarity)?;
        match kind {
            EdgeKind::Support => support.push(edge),
            EdgeKind::Contradiction => contradiction.push(edge),
        }
    }
    // Pairs arrive sorted, so the split lists already are; keep the guarantee
    // explicit anyway.
    support.sort_by(|x, y| x.key().cmp(&y.key()));
    contradiction.sort_by(|x, y| x.key().cmp(&y.key()));
    Ok((support, contradiction))
}

/// Applies the support-edge budget `m`.
///
/// `Global` keeps the `m` highest-similarity edges of the whole graph;
/// `PerNode` keeps an edge only while it ranks within the top `m` incident
/// edges of *both* endpoints, so no node exceeds the budget. Ties always
/// break by `(a, b)` ascending; the result is re-sorted by `(a, b)`.
pub fn prune_support(edges: Vec<Edge>, m: usize, mode: PruneMode) -> Vec<Edge> {
    let mut kept: Vec<Edge> = match mode {
        PruneMode::Global => {
            let mut ranked = edges;
            ranked.sort_by(|x, y| {
                y.similarity
                    .total_cmp(&x.similarity)
                    .then_with(|| x.key().cmp(&y.key()))
            });
            ranked.truncate(m);
            ranked
        }
        PruneMode::PerNode => {
            // Rank each node's incident edges; an edge survives only if both
            // endpoints rank it within their top m.
            let mut incident: BTreeMap<&str, Vec<usize>> = BTreeMap::new();
            for (i, e) in edges.iter().enumerate() {
                incident.entry(&e.a).or_default().push(i);
                incident.entry(&e.b).or_default().push(i);
            }
            let mut in_budget = vec![0u8; edges.len()];
            for (_, mut ids) in incident {
                ids.sort_by(|&x, &y| {
                    edges[y]
                        .similarity
                        .total_cmp(&edges[x].similarity)
                        .then_with(|| edges[x].key().cmp(&edges[y].key()))
                });
                for &i in ids.iter().take(m) {
                    in_budget[i] += 1;
                }
            }
            edges
                .into_iter()
                .enumerate()
                .filter(|(i, _)| in_budget[*i] == 2)
                .map(|(_, e)| e)
                .collect()
        }
    };
    kept.sort_by(|x, y| x.key().cmp(&y.key()));
    kept
}

/// Runs Stage I + II from an already-extracted claim pool: embed anything
/// missing an embedding, normalize, filter by the query, assign priors, mine
/// pairs, verify, prune.
pub fn build_graph_from_pool(
    query: &str,
    mut pool: Vec<AtomicClaim>,
    backend: &dyn EvidenceBackend,
    cfg: &PipelineConfig,
) -> Result<EvidenceGraph> {
    cfg.validate()?;

    // Embed the query plus any claims the pool does not already cover.
    let mut texts = vec![query.to_string()];
    let missing: Vec<usize> = pool
        .iter()
        .enumerate()
        .filter(|(_, c)| c.embedding.is_none())
        .map(|(i, _)| i)
        .collect();
    texts.extend(missing.iter().map(|&i| pool[i].text.clone()));
    let mut vectors = backend.embed(&texts)?.into_iter();
    let query_embedding = vectors.next().ok_or_else(|| {
        CoreError::Backend(crate::error::BackendError::Malformed {
            attempts: 1,
            detail: "embed returned no vector for the query".into(),
        })
    })?;
    for (i, vector) in missing.into_iter().zip(vectors) {
        pool[i].embedding = Some(vector);
    }

    let nodes = normalize_claims(&pool, cfg)?;
    let mut nodes = filter_by_query(&query_embedding, nodes, cfg.tau_q)?;
    for node in &mut nodes {
        node.logit = logit(initial_credibility(node))?;
    }

    let pairs = mine_candidates(&nodes, cfg.tau_sim)?;
    let (support, contradiction) = build_edges(&nodes, &pairs, backend, cfg.tau_conf)?;
    let support = prune_support(support, cfg.max_support_edges, cfg.prune_mode);

    let mut graph = EvidenceGraph {
        query: query.to_string(),
        nodes: nodes.into_iter().map(|n| (n.id.clone(), n)).collect(),
        support_edges: support,
        contradiction_edges: contradiction,
    };
    graph.sort_edges();
    graph.validate()?;
    Ok(graph)
}

/// Full Stage I + II from raw documents: extract claims per document, then
/// [`build_graph_from_pool`].
pub fn build_graph(
    query: &str,
    documents: &[Document],
    backend: &dyn EvidenceBackend,
    cfg: &PipelineConfig,
) -> Result<EvidenceGraph> {
    let mut pool = Vec::new();
    for doc in documents {
        pool.extend(backend.extract_claims(doc)?);
    }
    build_graph_from_pool(query, pool, backend, cfg)
}

#[cfg(test)]
mod tests {
    use super::*;
    use crate::backend::{
        ArbitrationMode, ArbitrationRule, CountingBackend, ExtractionRule, OracleBackend,
        OracleTable, RelationRule, RelationVerdict,
    };
    use std::collections::BTreeSet;

    fn node(id: &str, emb: Vec<f64>) -> ClaimNode {
        ClaimNode {
            id: id.into(),
            canonical_text: format!("text {id}"),
            members: vec![id.into()],
            sources: BTreeSet::from(["d".into()]),
            entities: BTreeSet::new(),
            logit: 0.0,
            embedding: Some(emb),
            resolved_pairs: BTreeMap::new(),
        }
    }

    #[test]
    fn filter_keeps_inclusive_boundary_and_preserves_order() {
        let q = vec![1.0, 0.0];
        let nodes = vec![
            node("n0", vec![0.3, (1.0f64 - 0.09).sqrt()]), // cos exactly 0.3
            node("n1", vec![0.29, (1.0f64 - 0.0841).sqrt()]), // cos 0.29
            node("n2", vec![1.0, 0.0]),                    // cos 1.0
        ];
        let kept = filter_by_query(&q, nodes, 0.3).unwrap();
        let ids: Vec<&str> = kept.iter().map(|n| n.id.as_str()).collect();
        assert_eq!(ids, vec!["n0", "n2"]);
    }

    #[test]
    fn filter_zero_threshold_keeps_nonnegative_cosines() {
        let q = vec![1.0, 0.0];
        let nodes = vec![node("n0", vec![0.0, 1.0]), node("n1", vec![0.5, 0.8660254037844386])];
        assert_eq!(filter_by_query(&q, nodes, 0.0).unwrap().len(), 2);
    }

    #[test]
    fn mine_candidates_orthogonal_yields_none() {
        let nodes = vec![
            node("n0", vec![1.0, 0.0, 0.0]),
            node("n1", vec![0.0, 1.0, 0.0]),
            node("n2", vec![0.0, 0.0, 1.0]),
        ];
        assert!(mine_candidates(&nodes, 0.6).unwrap().is_empty());
    }

    #[test]
    fn mine_candidates_identical_embeddings_all_pair() {
        let nodes = vec![
            node("n0", vec![1.0, 0.0]),
            node("n1", vec![1.0, 0.0]),
            node("n2", vec![1.0, 0.0]),
        ];
        let pairs = mine_candidates(&nodes, 0.6).unwrap();
        let keys: Vec<(&str, &str)> = pairs.iter().map(|p| (p.a.as_str(), p.b.as_str())).collect();
        assert_eq!(keys, vec![("n0", "n1"), ("n0", "n2"), ("n1", "n2")]);
        assert!(pairs.iter().all(|p| (p.similarity - 1.0).abs() < 1e-12));
    }

    #[test]
    fn mine_candidates_inclusive_boundary() {
        // cos(n0, n1) = 0.6 exactly.
        let nodes = vec![node("n0", vec![1.0, 0.0]), node("n1", vec![0.6, 0.8])];
        assert_eq!(mine_candidates(&nodes, 0.6).unwrap().len(), 1);
        assert_eq!(mine_candidates(&nodes, 0.6000001).unwrap().len(), 0);
    }

    fn relation_table(rules: Vec<RelationRule>) -> OracleBackend {
        OracleBackend::new(
            OracleTable {
                relations: rules,
                ..Default::default()
            },
            0.6,
        )
        .unwrap()
    }

    #[test]
    fn build_edges_applies_confidence_gate_and_kind() {
        let nodes = vec![
            node("n0", vec![1.0, 0.0]),
            node("n1", vec![1.0, 0.0]),
            node("n2", vec![1.0, 0.0]),
            node("n3", vec![1.0, 0.0]),
        ];
        let backend = relation_table(vec![
            RelationRule {
                a: "text n0".into(),
                b: "text n1".into(),
                relation: RelationKind::Support,
                confidence: 0.71,
            },
            RelationRule {
                a: "text n0".into(),
                b: "text n2".into(),
                relation: RelationKind::Contradiction,
                confidence: 0.65, // below tau_conf: dropped
            },
            RelationRule {
                a: "text n2".into(),
                b: "text n3".into(),
                relation: RelationKind::Contradiction,
                confidence: 0.9,
            },
        ]);
        let pairs = mine_candidates(&nodes, 0.6).unwrap();
        assert_eq!(pairs.len(), 6);
        let (support, contradiction) = build_edges(&nodes, &pairs, &backend, 0.7).unwrap();
        assert_eq!(support.len(), 1);
        assert_eq!(support[0].key(), ("n0", "n1"));
        assert_eq!(contradiction.len(), 1);
        assert_eq!(contradiction[0].key(), ("n2", "n3"));
        // Neutral defaults and sub-threshold verdicts leave no edge.
    }

    #[test]
    fn one_verifier_call_per_candidate_pair() {
        let nodes: Vec<ClaimNode> = (0..7).map(|i| node(&format!("n{i}"), vec![1.0, 0.0])).collect();
        let backend = CountingBackend::new(relation_table(vec![]));
        let pairs = mine_candidates(&nodes, 0.6).unwrap();
        let expected = pairs.len() as u64;
        build_edges(&nodes, &pairs, &backend, 0.7).unwrap();
        assert_eq!(backend.counts().verify, expected);
        assert_eq!(expected, 21); // 7 choose 2
    }

    fn edge(a: &str, b: &str, sim: f64) -> Edge {
        Edge::new(a, b, EdgeKind::Support, 0.9, sim).unwrap()
    }

    #[test]
    fn global_prune_keeps_top_m_by_similarity() {
        let edges = vec![
            edge("n0", "n1", 0.95),
            edge("n0", "n2", 0.80),
            edge("n1", "n2", 0.99),
            edge("n2", "n3", 0.70),
            edge("n3", "n4", 0.85),
        ];
        let kept = prune_support(edges.clone(), 3, PruneMode::Global);
        let keys: Vec<(&str, &str)> = kept.iter().map(Edge::key).collect();
        assert_eq!(keys, vec![("n0", "n1"), ("n1", "n2"), ("n3", "n4")]);

        assert!(prune_support(edges.clone(), 0, PruneMode::Global).is_empty());
        assert_eq!(prune_support(edges.clone(), 99, PruneMode::Global).len(), 5);
    }

    #[test]
    fn global_prune_breaks_ties_by_pair_key() {
        let edges = vec![
            edge("n3", "n4", 0.9),
            edge("n0", "n1", 0.9),
            edge("n1", "n2", 0.9),
        ];
        let kept = prune_support(edges, 2, PruneMode::Global);
        let keys: Vec<(&str, &str)> = kept.iter().map(Edge::key).collect();
        assert_eq!(keys, vec![("n0", "n1"), ("n1", "n2")]);
    }

    #[test]
    fn per_node_prune_caps_every_node() {
        // Star around n0 plus an outlying edge; cap m = 2.
        let edges = vec![
            edge("n0", "n1", 0.95),
            edge("n0", "n2", 0.90),
            edge("n0", "n3", 0.85),
            edge("n0", "n4", 0.80),
            edge("n5", "n6", 0.50),
        ];
        let kept = prune_support(edges, 2, PruneMode::PerNode);
        let keys: Vec<(&str, &str)> = kept.iter().map(Edge::key).collect();
        assert_eq!(keys, vec![("n0", "n1"), ("n0", "n2"), ("n5", "n6")]);
        for n in ["n0", "n1", "n2", "n5", "n6"] {
            let deg = kept.iter().filter(|e| e.touches(n)).count();
            assert!(deg <= 2, "node {n} exceeds cap: {deg}");
        }
    }

    #[test]
    fn build_graph_single_doc_single_claim() {
        let table = OracleTable {
            extraction: BTreeMap::from([(
                "d1".into(),
                vec![ExtractionRule {
                    text: "the only fact".into(),
                    entities: vec!["fact".into()],
                }],
            )]),
            embeddings: BTreeMap::from([
                ("q".into(), vec![1.0, 0.0]),
                ("the only fact".into(), vec![0.8, 0.6]),
            ]),
            ..Default::default()
        };
        let backend = OracleBackend::new(table, 0.6).unwrap();
        let cfg = PipelineConfig::default();
        let graph =
            build_graph("q", &[Document::new("d1", "irrelevant")], &backend, &cfg).unwrap();
        assert_eq!(graph.nodes.len(), 1);
        let n = graph.nodes.values().next().unwrap();
        assert_eq!(n.id, "d1#00");
        assert_eq!(n.probability(), 0.5); // single source prior
        assert!(graph.support_edges.is_empty());
        assert!(graph.contradiction_edges.is_empty());
    }

    #[test]
    fn build_graph_is_deterministic() {
        let table = OracleTable {
            extraction: BTreeMap::from([
                (
                    "d1".into(),
                    vec![
                        ExtractionRule {
                            text: "claim alpha".into(),
                            entities: vec!["alpha".into()],
                        },
                        ExtractionRule {
                            text: "claim beta".into(),
                            entities: vec!["beta".into()],
                        },
                    ],
                ),
                (
                    "d2".into(),
                    vec![ExtractionRule {
                        text: "claim gamma".into(),
                        entities: vec!["gamma".into()],
                    }],
                ),
            ]),
            relations: vec![
                RelationRule {
                    a: "claim alpha".into(),
                    b: "claim beta".into(),
                    relation: RelationKind::Support,
                    confidence: 0.8,
                },
                RelationRule {
                    a: "claim alpha".into(),
                    b: "claim gamma".into(),
                    relation: RelationKind::Contradiction,
                    confidence: 0.9,
                },
            ],
            arbitrations: vec![ArbitrationRule {
                a: "claim alpha".into(),
                b: "claim gamma".into(),
                mode: ArbitrationMode::Fixed,
                winner: Some("claim alpha".into()),
                confidence: 0.9,
                invert: false,
            }],
            embeddings: BTreeMap::from([
                ("q".into(), vec![1.0, 0.0, 0.0]),
                ("claim alpha".into(), vec![0.8, 0.6, 0.0]),
                ("claim beta".into(), vec![0.8, 0.59, 0.1]),
                ("claim gamma".into(), vec![0.8, 0.55, 0.23]),
            ]),
            ..Default::default()
        };
        let docs = [Document::new("d1", ""), Document::new("d2", "")];
        let cfg = PipelineConfig::default();
        let backend = OracleBackend::new(table.clone(), cfg.tau_gate).unwrap();
        let g1 = build_graph("q", &docs, &backend, &cfg).unwrap();
        let g2 = build_graph("q", &docs, &backend, &cfg).unwrap();
        assert_eq!(g1, g2);
        assert!(!g1.support_edges.is_empty());
        assert!(!g1.contradiction_edges.is_empty());
    }

    #[test]
    fn raising_thresholds_is_monotone() {
        let q = vec![1.0, 0.0];
        let mk = |c: f64| {
            let s = (1.0 - c * c).sqrt();
            vec![c, s]
        };
        let nodes: Vec<ClaimNode> = (0..10)
            .map(|i| node(&format!("n{i}"), mk(0.1 * i as f64)))
            .collect();
        let mut last_kept = usize::MAX;
        for tau in [0.0, 0.3, 0.6, 0.9] {
            let kept = filter_by_query(&q, nodes.clone(), tau).unwrap().len();
            assert!(kept <= last_kept);
            last_kept = kept;
        }
        let mut last_pairs = usize::MAX;
        for tau in [0.0, 0.5, 0.8, 0.95] {
            let pairs = mine_candidates(&nodes, tau).unwrap().len();
            assert!(pairs <= last_pairs);
            last_pairs = pairs;
        }
    }

    #[test]
    fn verdict_is_neutral_for_unreg_pairs_means_no_edge() {
        assert_eq!(
            RelationVerdict::NEUTRAL,
            RelationVerdict {
                relation: RelationKind::Neutral,
                confidence: 0.0
            }
        );
    }
}
