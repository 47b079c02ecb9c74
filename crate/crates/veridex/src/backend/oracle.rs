//! Deterministic table-driven backend.
//!
//! An [`OracleTable`] pins every judgment the pipeline would otherwise ask a
//! model for: extraction per document, an embedding per text, a relation
//! verdict per unordered text pair (defaulting to neutral), and an
//! arbitration rule per conflicting text pair. Tables are plain JSON, so
//! scenario fixtures can be committed, diffed, and replayed byte-for-byte.
//!
//! Arbitration rules come in two modes:
//!
//! * `fixed` — the stored winner, at the stored confidence;
//! * `context_majority` — the winner is the side with strictly more of its
//!   supporters present in the offered context, where "x supports y" is read
//!   off the table's own relation rules; a tie abstains. This is what lets
//!   planted scenarios reward or punish the support-edge budget.
//!
//! An `invert` flag swaps the resolved winner and loser — the hook used by
//! scenario generation to plant arbitrator errors.

use std::collections::{BTreeMap, HashMap};

use serde::{Deserialize, Serialize};

use super::{
    normalize_entity, ArbitrationVerdict, EvidenceBackend, RelationKind, RelationVerdict,
    CONTEXT_CAP,
};
use crate::error::BackendError;
use crate::model::{AtomicClaim, ClaimNode, Document};

/// One claim an extraction rule yields.
#[derive(Clone, Debug, PartialEq, Eq, Serialize, Deserialize)]
pub struct ExtractionRule {
    pub text: String,
    #[serde(default)]
    pub entities: Vec<String>,
}

/// Relation verdict for one unordered text pair.
#[derive(Clone, Debug, PartialEq, Serialize, Deserialize)]
pub struct RelationRule {
    pub a: String,
    pub b: String,
    pub relation: RelationKind,
    pub confidence: f64,
}

/// How an arbitration rule resolves its pair.
#[derive(Clone, Copy, Debug, Default, PartialEq, Eq, Serialize, Deserialize)]
#[serde(rename_all = "snake_case")]
pub enum ArbitrationMode {
    #[default]
    Fixed,
    ContextMajority,
}

/// Arbitration outcome for one unordered text pair.
#[derive(Clone, Debug, PartialEq, Serialize, Deserialize)]
pub struct ArbitrationRule {
    pub a: String,
    pub b: String,
    #[serde(default)]
    pub mode: ArbitrationMode,
    /// Winning text; required for `fixed`, ignored for `context_majority`.
    #[serde(default, skip_serializing_if = "Option::is_none")]
    pub winner: Option<String>,
    pub confidence: f64,
    /// Swap the resolved winner/loser — a planted arbitrator error.
    #[serde(default, skip_serializing_if = "std::ops::Not::not")]
    pub invert: bool,
}

/// The full lookup table backing an [`OracleBackend`].
#[derive(Clone, Debug, Default, PartialEq, Serialize, Deserialize)]
pub struct OracleTable {
    /// Document id -> extracted claims, in extraction order.
    #[serde(default)]
    pub extraction: BTreeMap<String, Vec<ExtractionRule>>,
    #[serde(default)]
    pub relations: Vec<RelationRule>,
    #[serde(default)]
    pub arbitrations: Vec<ArbitrationRule>,
    /// Text -> embedding; vectors are unit-normalized on load.
    #[serde(default)]
    pub embeddings: BTreeMap<String, Vec<f64>>,
}

impl OracleTable {
    pub fn from_json(text: &str) -> Result<Self, BackendError> {
        serde_json::from_str(text)
            .map_err(|e| BackendError::InvalidTable(format!("unparseable table JSON: {e}")))
    }
}

fn pair_key(a: &str, b: &str) -> (String, String) {
    if a <= b {
        (a.to_string(), b.to_string())
    } else {
        (b.to_string(), a.to_string())
    }
}

/// Deterministic backend answering every call from an [`OracleTable`].
pub struct OracleBackend {
    table: OracleTable,
    tau_gate: f64,
    relation_index: HashMap<(String, String), RelationVerdict>,
    arbitration_index: HashMap<(String, String), ArbitrationRule>,
}

impl OracleBackend {
    /// Validates the table and builds the pair indices.
    ///
    /// `tau_gate` is the arbitration gate threshold the verdicts' `gate_w`
    /// bit is derived from.
    pub fn new(mut table: OracleTable, tau_gate: f64) -> Result<Self, BackendError> {
        let mut embedding_dim = None;
        for (text, vector) in &mut table.embeddings {
            let dim = *embedding_dim.get_or_insert(vector.len());
            if vector.len() != dim {
                return Err(BackendError::InvalidTable(format!(
                    "embedding for {text:?} has dimension {}, expected {dim}",
                    vector.len()
                )));
            }
            let norm = vector.iter().map(|x| x * x).sum::<f64>().sqrt();
            if norm == 0.0 || !norm.is_finite() {
                return Err(BackendError::InvalidTable(format!(
                    "embedding for {text:?} is zero or non-finite"
                )));
            }
            for x in vector.iter_mut() {
                *x /= norm;
            }
        }

        let mut relation_index = HashMap::new();
        for rule in &table.relations {
            if !(0.0..=1.0).contains(&rule.confidence) {
                return Err(BackendError::InvalidTable(format!(
                    "relation rule ({}, {}) confidence {} outside [0, 1]",
                    rule.a, rule.b, rule.confidence
                )));
            }
            relation_index.insert(
                pair_key(&rule.a, &rule.b),
                RelationVerdict {
                    relation: rule.relation,
                    confidence: rule.confidence,
                },
            );
        }

        let mut arbitration_index = HashMap::new();
        for rule in &table.arbitrations {
            if rule.mode == ArbitrationMode::Fixed {
                match &rule.winner {
                    Some(w) if w == &rule.a || w == &rule.b => {}
                    Some(w) => {
                        return Err(BackendError::InvalidTable(format!(
                            "arbitration rule ({}, {}) names winner {w:?} outside the pair",
                            rule.a, rule.b
                        )))
                    }
                    None => {
                        return Err(BackendError::InvalidTable(format!(
                            "fixed arbitration rule ({}, {}) has no winner",
                            rule.a, rule.b
                        )))
                    }
                }
            }
            arbitration_index.insert(pair_key(&rule.a, &rule.b), rule.clone());
        }

        Ok(Self {
            table,
            tau_gate,
            relation_index,
            arbitration_index,
        })
    }

    pub fn table(&self) -> &OracleTable {
        &self.table
    }

    fn relation_between(&self, a: &str, b: &str) -> RelationVerdict {
        self.relation_index
            .get(&pair_key(a, b))
            .copied()
            .unwrap_or(RelationVerdict::NEUTRAL)
    }
}

impl EvidenceBackend for OracleBackend {
    fn extract_claims(&self, doc: &Document) -> Result<Vec<AtomicClaim>, BackendError> {
        let rules = self
            .table
            .extraction
            .get(&doc.id)
            .ok_or_else(|| BackendError::UnknownDocument(doc.id.clone()))?;
        Ok(rules
            .iter()
            .enumerate()
            .map(|(i, rule)| AtomicClaim {
                id: format!("{}#{i:02}", doc.id),
                text: rule.text.clone(),
                source_doc: doc.id.clone(),
                entities: rule.entities.iter().map(|e| normalize_entity(e)).collect(),
                embedding: None,
            })
            .collect())
    }

    fn embed(&self, texts: &[String]) -> Result<Vec<Vec<f64>>, BackendError> {
        texts
            .iter()
            .map(|t| {
                self.table
                    .embeddings
                    .get(t)
                    .cloned()
                    .ok_or_else(|| BackendError::UnknownText(t.clone()))
            })
            .collect()
    }

    fn verify_relation(
        &self,
        a: &ClaimNode,
        b: &ClaimNode,
    ) -> Result<RelationVerdict, BackendError> {
        Ok(self.relation_between(&a.canonical_text, &b.canonical_text))
    }

    fn arbitrate(
        &self,
        a: &ClaimNode,
        b: &ClaimNode,
        ctx: &[&ClaimNode],
    ) -> Result<ArbitrationVerdict, BackendError> {
        let Some(rule) = self
            .arbitration_index
            .get(&pair_key(&a.canonical_text, &b.canonical_text))
        else {
            return Ok(ArbitrationVerdict::abstain(&a.id, &b.id));
        };

        let ctx = &ctx[..ctx.len().min(CONTEXT_CAP)];
        let (winner, loser) = match rule.mode {
            ArbitrationMode::Fixed => {
                let winner_text = rule.winner.as_deref().expect("validated at construction");
                if winner_text == a.canonical_text {
                    (a, b)
                } else {
                    (b, a)
                }
            }
            ArbitrationMode::ContextMajority => {
                let backers = |side: &ClaimNode| {
                    ctx.iter()
                        .filter(|x| {
                            self.relation_between(&x.canonical_text, &side.canonical_text)
                                .relation
                                == RelationKind::Support
                        })
                        .count()
                };
                let (sup_a, sup_b) = (backers(a), backers(b));
                if sup_a == sup_b {
                    // No majority to lean on: abstain.
                    return Ok(ArbitrationVerdict::abstain(&a.id, &b.id));
                } else if sup_a > sup_b {
                    (a, b)
                } else {
                    (b, a)
                }
            }
        };
        let (winner, loser) = if rule.invert {
            (loser, winner)
        } else {
            (winner, loser)
        };
        Ok(ArbitrationVerdict::gated(
            &winner.id,
            &loser.id,
            rule.confidence,
            self.tau_gate,
        ))
    }
}

#[cfg(test)]
mod tests {
    use super::*;
    use std::collections::BTreeSet;

    fn node(id: &str, text: &str) -> ClaimNode {
        ClaimNode {
            id: id.into(),
            canonical_text: text.into(),
            members: vec![id.into()],
            sources: BTreeSet::from(["d".into()]),
            entities: BTreeSet::new(),
            logit: 0.0,
            embedding: None,
            resolved_pairs: BTreeMap::new(),
        }
    }

    fn table() -> OracleTable {
        OracleTable {
            extraction: BTreeMap::from([(
                "d1".into(),
                vec![
                    ExtractionRule {
                        text: "first claim".into(),
                        entities: vec!["  Some   Entity ".into()],
                    },
                    ExtractionRule {
                        text: "second claim".into(),
                        entities: vec![],
                    },
                ],
            )]),
            relations: vec![RelationRule {
                a: "x".into(),
                b: "y".into(),
                relation: RelationKind::Contradiction,
                confidence: 0.9,
            }],
            arbitrations: vec![ArbitrationRule {
                a: "x".into(),
                b: "y".into(),
                mode: ArbitrationMode::Fixed,
                winner: Some("x".into()),
                confidence: 0.9,
                invert: false,
            }],
            embeddings: BTreeMap::from([
                ("x".into(), vec![2.0, 0.0]), // normalized on load
                ("y".into(), vec![0.0, 1.0]),
            ]),
        }
    }

    #[test]
    fn extraction_assigns_deterministic_ids_and_normalized_entities() {
        let backend = OracleBackend::new(table(), 0.6).unwrap();
        let claims = backend
            .extract_claims(&Document::new("d1", "whatever"))
            .unwrap();
        assert_eq!(claims.len(), 2);
        assert_eq!(claims[0].id, "d1#00");
        assert_eq!(claims[1].id, "d1#01");
        assert!(claims[0].entities.contains("some entity"));
        assert!(claims[0].embedding.is_none());
    }

    #[test]
    fn unknown_document_errors() {
        let backend = OracleBackend::new(table(), 0.6).unwrap();
        assert!(matches!(
            backend.extract_claims(&Document::new("nope", "")),
            Err(BackendError::UnknownDocument(_))
        ));
    }

    #[test]
    fn embeddings_are_normalized_and_unknown_text_errors() {
        let backend = OracleBackend::new(table(), 0.6).unwrap();
        let vs = backend.embed(&["x".into(), "y".into()]).unwrap();
        assert_eq!(vs[0], vec![1.0, 0.0]);
        assert!(matches!(
            backend.embed(&["unknown".into()]),
            Err(BackendError::UnknownText(_))
        ));
    }

    #[test]
    fn relation_is_symmetric_and_defaults_to_neutral() {
        let backend = OracleBackend::new(table(), 0.6).unwrap();
        let nx = node("n1", "x");
        let ny = node("n2", "y");
        let ab = backend.verify_relation(&nx, &ny).unwrap();
        let ba = backend.verify_relation(&ny, &nx).unwrap();
        assert_eq!(ab, ba);
        assert_eq!(ab.relation, RelationKind::Contradiction);

        let nz = node("n3", "z");
        assert_eq!(
            backend.verify_relation(&nx, &nz).unwrap(),
            RelationVerdict::NEUTRAL
        );
    }

    #[test]
    fn fixed_arbitration_resolves_winner_and_gate() {
        let backend = OracleBackend::new(table(), 0.6).unwrap();
        let nx = node("n1", "x");
        let ny = node("n2", "y");
        let v = backend.arbitrate(&nx, &ny, &[]).unwrap();
        assert_eq!(v.winner, "n1");
        assert_eq!(v.loser, "n2");
        assert_eq!(v.gate_w, 1);

        // Same rule under a higher gate: no longer decisive.
        let strict = OracleBackend::new(table(), 0.95).unwrap();
        let v = strict.arbitrate(&nx, &ny, &[]).unwrap();
        assert_eq!(v.gate_w, 0);
    }

    #[test]
    fn unknown_pair_abstains() {
        let backend = OracleBackend::new(table(), 0.6).unwrap();
        let v = backend
            .arbitrate(&node("n1", "x"), &node("n9", "unrelated"), &[])
            .unwrap();
        assert_eq!(v.gate_w, 0);
        assert_eq!(v.confidence, 0.0);
    }

    #[test]
    fn context_majority_counts_supporters_from_relation_rules() {
        let mut t = table();
        t.relations = vec![
            RelationRule {
                a: "s1".into(),
                b: "x".into(),
                relation: RelationKind::Support,
                confidence: 0.9,
            },
            RelationRule {
                a: "s2".into(),
                b: "x".into(),
                relation: RelationKind::Support,
                confidence: 0.9,
            },
            RelationRule {
                a: "s3".into(),
                b: "y".into(),
                relation: RelationKind::Support,
                confidence: 0.9,
            },
        ];
        t.arbitrations = vec![ArbitrationRule {
            a: "x".into(),
            b: "y".into(),
            mode: ArbitrationMode::ContextMajority,
            winner: None,
            confidence: 0.9,
            invert: false,
        }];
        let backend = OracleBackend::new(t, 0.6).unwrap();
        let nx = node("n1", "x");
        let ny = node("n2", "y");
        let s1 = node("c1", "s1");
        let s2 = node("c2", "s2");
        let s3 = node("c3", "s3");

        // 2-1 for x: decisive win for x.
        let v = backend.arbitrate(&nx, &ny, &[&s1, &s2, &s3]).unwrap();
        assert_eq!((v.winner.as_str(), v.gate_w), ("n1", 1));

        // 1-1 tie: abstain.
        let v = backend.arbitrate(&nx, &ny, &[&s1, &s3]).unwrap();
        assert_eq!(v.gate_w, 0);
        assert_eq!(v.confidence, 0.0);

        // Empty context: abstain.
        let v = backend.arbitrate(&nx, &ny, &[]).unwrap();
        assert_eq!(v.gate_w, 0);
    }

    #[test]
    fn invert_flag_swaps_the_resolved_winner() {
        let mut t = table();
        t.arbitrations[0].invert = true;
        let backend = OracleBackend::new(t, 0.6).unwrap();
        let v = backend
            .arbitrate(&node("n1", "x"), &node("n2", "y"), &[])
            .unwrap();
        assert_eq!(v.winner, "n2");
        assert_eq!(v.gate_w, 1);
    }

    #[test]
    fn table_validation_catches_bad_rules() {
        let mut t = table();
        t.arbitrations[0].winner = Some("not in pair".into());
        assert!(matches!(
            OracleBackend::new(t, 0.6),
            Err(BackendError::InvalidTable(_))
        ));

        let mut t = table();
        t.embeddings.insert("bad".into(), vec![0.0, 0.0]);
        assert!(OracleBackend::new(t, 0.6).is_err());

        let mut t = table();
        t.embeddings.insert("bad".into(), vec![1.0, 0.0, 0.0]);
        assert!(OracleBackend::new(t, 0.6).is_err());

        let mut t = table();
        t.relations[0].confidence = 1.4;
        assert!(OracleBackend::new(t, 0.6).is_err());
    }

    #[test]
    fn repeated_calls_are_referentially_transparent() {
        let backend = OracleBackend::new(table(), 0.6).unwrap();
        let nx = node("n1", "x");
        let ny = node("n2", "y");
        let first = backend.arbitrate(&nx, &ny, &[]).unwrap();
        for _ in 0..5 {
            assert_eq!(backend.arbitrate(&nx, &ny, &[]).unwrap(), first);
        }
    }
}
