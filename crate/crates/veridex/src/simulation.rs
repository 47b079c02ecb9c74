//! Synthetic scenario harness: deterministic fixtures with known ground
//! truth, run evaluation, and parameter sweeps.
//!
//! A scenario plants a small universe of facts — conflicting claim pairs,
//! paraphrases, supporters, off-topic homonyms — together with the oracle
//! table that answers every backend call about them. Geometry is explicit:
//! every text gets a hand-placed unit vector, so which pairs merge, which
//! get mined, and which edges survive pruning are all decided by
//! construction, not by luck. Arbitrator noise is baked into the table at
//! generation time (seeded inversion flags), which keeps the oracle
//! referentially transparent: two runs over the same fixture see identical
//! verdicts, and different scheduling policies compete on scheduling alone.

use std::collections::{BTreeMap, BTreeSet};
use std::fmt;
use std::str::FromStr;

use rand::{Rng, SeedableRng};
use rand_chacha::ChaCha8Rng;
use serde::{Deserialize, Serialize};

use crate::arbitration::{
    assemble_context, run_arbitration, validated_set, ArbitrationTrace, SchedulingPolicy,
};
use crate::backend::{
    ArbitrationMode, ArbitrationRule, CountingBackend, EvidenceBackend, ExtractionRule,
    OracleBackend, OracleTable, RelationKind, RelationRule,
};
use crate::builder::build_graph_from_pool;
use crate::config::PipelineConfig;
use crate::error::{CoreError, Result};
use crate::model::{AtomicClaim, ClaimNode, Document, EvidenceGraph};

/// Ground-truth label attached to a planted claim text.
#[derive(Clone, Copy, Debug, PartialEq, Eq, Serialize, Deserialize)]
#[serde(rename_all = "lowercase")]
pub enum TruthLabel {
    True,
    False,
    /// On some other topic entirely; should be filtered, never validated.
    Irrelevant,
}

/// Knobs controlling what a generated scenario plants.
///
/// Counts are totals unless noted. The default is the empty scenario.
#[derive(Clone, Debug, Default, PartialEq, Serialize, Deserialize)]
#[serde(default)]
pub struct NoiseKnobs {
    /// True/false claim pairs that contradict each other, one topic each.
    pub conflicting_pairs: usize,
    /// Extra paraphrase documents per true core claim; each adds a source
    /// to the merged node, raising its prior.
    pub redundant_paraphrases: usize,
    /// Off-topic claims that share surface vocabulary with the query.
    pub homonym_claims: usize,
    /// Probability that a conflict's arbitration rule is inverted (baked in
    /// at generation time, seeded).
    pub arbitrator_error_rate: f64,
    /// True claims on their own topics, unconnected to any conflict.
    pub standalone_true: usize,
    /// True claims only weakly related to the query (low query cosine).
    pub weakly_relevant_true: usize,
    /// Per conflict: supporters of the true side (high-similarity).
    pub genuine_supporters: usize,
    /// Per conflict: supporters of the false side (lower similarity).
    pub noisy_supporters: usize,
    /// Use context-counting arbitration rules instead of fixed winners, so
    /// outcomes depend on which support edges survived pruning.
    pub context_sensitive: bool,
}

/// A planted document corpus with ground truth, plus the seed and knobs
/// that produced it.
#[derive(Clone, Debug, PartialEq, Serialize, Deserialize)]
pub struct SyntheticScenario {
    pub query: String,
    pub documents: Vec<Document>,
    /// Label per planted claim text.
    pub truth_labels: BTreeMap<String, TruthLabel>,
    pub knobs: NoiseKnobs,
    pub seed: u64,
}

/// A scenario together with the oracle table that answers for it.
#[derive(Clone, Debug, PartialEq, Serialize, Deserialize)]
pub struct ScenarioFixture {
    pub scenario: SyntheticScenario,
    pub oracle: OracleTable,
}

// Geometry constants. Every planted vector is built from an orthonormal
// basis: axis 0 is the query direction; each topic owns private axes. The
// resulting cosines (all fixed by construction):
//   core claim        <-> query:        0.70   (kept at tau_q = 0.3 or 0.6)
//   weakly relevant   <-> query:        0.35   (kept at 0.3, dropped at 0.6)
//   homonym           <-> query:        0.05   (dropped at 0.3, kept at 0)
//   true core         <-> false core:   0.898  (mined; below tau_merge)
//   genuine supporter <-> true core:    0.9388 (mined; outranks noisy edges)
//   noisy supporter   <-> false core:   0.830  (mined)
//   anything cross-topic:               0.49   (never mined at 0.6)
const COS_CORE_QUERY: f64 = 0.7;
const COS_WEAK_QUERY: f64 = 0.35;
const COS_HOMONYM_QUERY: f64 = 0.05;
/// In-topic magnitude for core/supporter vectors: sqrt(1 - 0.7^2).
const IN_TOPIC: f64 = 0.714_142_842_854_285;
/// False core's in-topic direction is (0.8 t + 0.6 u).
const FALSE_T: f64 = 0.8;
const FALSE_U: f64 = 0.6;
/// Genuine supporter: in-topic component 0.88 along t (cos to true 0.9388).
const GENUINE_T: f64 = 0.88;
/// Noisy supporter: in-topic component 2/3 along the false direction
/// (cos to false 0.83 exactly).
const NOISY_F: f64 = 2.0 / 3.0;

/// Builds a deterministic scenario from knobs and a seed.
///
/// The seeded RNG draws, in documented order, one mission year and one
/// error flip per conflict — nothing else. All texts, entities and vectors
/// follow from those draws, so equal inputs give byte-equal fixtures.
pub fn generate_scenario(knobs: &NoiseKnobs, seed: u64) -> ScenarioFixture {
    let mut rng = ChaCha8Rng::seed_from_u64(seed);
    let c = knobs.conflicting_pairs;
    let g = knobs.genuine_supporters;
    let n = knobs.noisy_supporters;

    let mut years = Vec::with_capacity(c);
    let mut flips = Vec::with_capacity(c);
    for _ in 0..c {
        years.push(rng.gen_range(2010..2020u32));
        flips.push(rng.gen::<f64>() < knobs.arbitrator_error_rate);
    }

    // Axis layout: 0 = query; per conflict a (t, u) pair; then one private
    // axis per supporter, standalone, weak and homonym claim.
    let mut axis = 1 + 2 * c;
    let mut take_axis = || {
        let a = axis;
        axis += 1;
        a
    };
    let genuine_axes: Vec<Vec<usize>> = (0..c)
        .map(|_| (0..g).map(|_| take_axis()).collect())
        .collect();
    let noisy_axes: Vec<Vec<usize>> = (0..c)
        .map(|_| (0..n).map(|_| take_axis()).collect())
        .collect();
    let standalone_axes: Vec<usize> = (0..knobs.standalone_true).map(|_| take_axis()).collect();
    let weak_axes: Vec<usize> = (0..knobs.weakly_relevant_true).map(|_| take_axis()).collect();
    let homonym_axes: Vec<usize> = (0..knobs.homonym_claims).map(|_| take_axis()).collect();
    let dim = axis;

    let vector = |components: &[(usize, f64)]| -> Vec<f64> {
        let mut v = vec![0.0; dim];
        for (i, x) in components {
            v[*i] = *x;
        }
        v
    };
    // Core/supporter vectors share the query cosine and differ in-topic.
    let in_topic = |t: usize, u_axis: Option<(usize, f64, f64)>| -> Vec<(usize, f64)> {
        match u_axis {
            None => vec![(0, COS_CORE_QUERY), (t, IN_TOPIC)],
            Some((u, ct, cu)) => vec![
                (0, COS_CORE_QUERY),
                (t, IN_TOPIC * ct),
                (u, IN_TOPIC * cu),
            ],
        }
    };

    let query = "Did the experimental probes reach their target orbits?".to_string();
    let mut documents = Vec::new();
    let mut truth_labels = BTreeMap::new();
    let mut extraction: BTreeMap<String, Vec<ExtractionRule>> = BTreeMap::new();
    let mut embeddings = BTreeMap::new();
    let mut relations = Vec::new();
    let mut arbitrations = Vec::new();
    let mut doc_counter = 0usize;
    let mut plant = |documents: &mut Vec<Document>,
                     extraction: &mut BTreeMap<String, Vec<ExtractionRule>>,
                     text: &str,
                     entities: Vec<String>| {
        let doc_id = format!("d{doc_counter:03}");
        doc_counter += 1;
        documents.push(Document::new(&doc_id, text));
        extraction.insert(
            doc_id,
            vec![ExtractionRule {
                text: text.to_string(),
                entities,
            }],
        );
    };

    const PARAPHRASE_TEMPLATES: [&str; 3] = [
        "In {year}, probe {name} attained its planned orbit.",
        "Probe {name} settled into its intended orbit during {year}.",
        "Mission records show probe {name} reaching orbit in {year}.",
    ];

    embeddings.insert(query.clone(), vector(&[(0, 1.0)]));

    for i in 0..c {
        let name = format!("VX-{i:02}");
        let year = years[i];
        let (t, u) = (1 + 2 * i, 2 + 2 * i);
        let true_vec = vector(&in_topic(t, None));
        let false_vec = vector(&in_topic(t, Some((u, FALSE_T, FALSE_U))));

        let true_text = format!("Probe {name} reached its target orbit in {year}.");
        let false_text = format!("Probe {name} missed its target orbit as of {ny}.", ny = year + 1);
        let core_entities = vec![name.to_lowercase(), year.to_string()];
        let false_entities = vec![name.to_lowercase(), (year + 1).to_string()];

        // True core plus its paraphrases (identical vector, same entities,
        // one extra source document each).
        let mut true_members = vec![true_text.clone()];
        plant(&mut documents, &mut extraction, &true_text, core_entities.clone());
        for j in 0..knobs.redundant_paraphrases {
            let text = PARAPHRASE_TEMPLATES[j % PARAPHRASE_TEMPLATES.len()]
                .replace("{name}", &name)
                .replace("{year}", &year.to_string());
            let text = if j < PARAPHRASE_TEMPLATES.len() {
                text
            } else {
                format!("{text} (entry {j})")
            };
            plant(&mut documents, &mut extraction, &text, core_entities.clone());
            embeddings.insert(text.clone(), true_vec.clone());
            truth_labels.insert(text.clone(), TruthLabel::True);
            true_members.push(text);
        }
        plant(&mut documents, &mut extraction, &false_text, false_entities);

        embeddings.insert(true_text.clone(), true_vec.clone());
        embeddings.insert(false_text.clone(), false_vec.clone());
        truth_labels.insert(true_text.clone(), TruthLabel::True);
        truth_labels.insert(false_text.clone(), TruthLabel::False);

        // The merged true node's canonical text can be any member, so the
        // table covers every (member, false) combination.
        for tm in &true_members {
            relations.push(RelationRule {
                a: tm.clone(),
                b: false_text.clone(),
                relation: RelationKind::Contradiction,
                confidence: 0.9,
            });
            arbitrations.push(ArbitrationRule {
                a: tm.clone(),
                b: false_text.clone(),
                mode: if knobs.context_sensitive {
                    ArbitrationMode::ContextMajority
                } else {
                    ArbitrationMode::Fixed
                },
                winner: if knobs.context_sensitive {
                    None
                } else {
                    Some(tm.clone())
                },
                confidence: 0.9,
                invert: flips[i],
            });
        }

        for (j, w_axis) in genuine_axes[i].iter().enumerate() {
            let text =
                format!("Telemetry batch {i}-{j} recorded {name} holding a stable orbit.");
            let comp = (1.0 - GENUINE_T * GENUINE_T).sqrt();
            embeddings.insert(
                text.clone(),
                vector(&[
                    (0, COS_CORE_QUERY),
                    (t, IN_TOPIC * GENUINE_T),
                    (*w_axis, IN_TOPIC * comp),
                ]),
            );
            truth_labels.insert(text.clone(), TruthLabel::True);
            for tm in &true_members {
                relations.push(RelationRule {
                    a: text.clone(),
                    b: tm.clone(),
                    relation: RelationKind::Support,
                    confidence: 0.9,
                });
            }
            plant(
                &mut documents,
                &mut extraction,
                &text,
                vec![name.to_lowercase(), format!("batch {i}-{j}")],
            );
        }

        for (j, z_axis) in noisy_axes[i].iter().enumerate() {
            let text =
                format!("Commentary piece {i}-{j} repeated that {name} missed its orbit.");
            let comp = (1.0 - NOISY_F * NOISY_F).sqrt();
            embeddings.insert(
                text.clone(),
                vector(&[
                    (0, COS_CORE_QUERY),
                    (t, IN_TOPIC * NOISY_F * FALSE_T),
                    (u, IN_TOPIC * NOISY_F * FALSE_U),
                    (*z_axis, IN_TOPIC * comp),
                ]),
            );
            truth_labels.insert(text.clone(), TruthLabel::False);
            relations.push(RelationRule {
                a: text.clone(),
                b: false_text.clone(),
                relation: RelationKind::Support,
                confidence: 0.9,
            });
            plant(
                &mut documents,
                &mut extraction,
                &text,
                vec![name.to_lowercase(), format!("piece {i}-{j}")],
            );
        }
    }

    for (s, a) in standalone_axes.iter().enumerate() {
        let text = format!("Relay station {s} operates on its published schedule.");
        let comp = (1.0 - COS_CORE_QUERY * COS_CORE_QUERY).sqrt();
        embeddings.insert(text.clone(), vector(&[(0, COS_CORE_QUERY), (*a, comp)]));
        truth_labels.insert(text.clone(), TruthLabel::True);
        plant(&mut documents, &mut extraction, &text, vec![format!("relay {s}")]);
    }
    for (w, a) in weak_axes.iter().enumerate() {
        let text = format!("Maintenance log {w} was archived without incident.");
        let comp = (1.0 - COS_WEAK_QUERY * COS_WEAK_QUERY).sqrt();
        embeddings.insert(text.clone(), vector(&[(0, COS_WEAK_QUERY), (*a, comp)]));
        truth_labels.insert(text.clone(), TruthLabel::True);
        plant(&mut documents, &mut extraction, &text, vec![format!("log {w}")]);
    }
    for (h, a) in homonym_axes.iter().enumerate() {
        let text = format!("The Probe brand blender {h} purees vegetables in seconds.");
        let comp = (1.0 - COS_HOMONYM_QUERY * COS_HOMONYM_QUERY).sqrt();
        embeddings.insert(text.clone(), vector(&[(0, COS_HOMONYM_QUERY), (*a, comp)]));
        truth_labels.insert(text.clone(), TruthLabel::Irrelevant);
        plant(&mut documents, &mut extraction, &text, vec![format!("blender {h}")]);
    }

    ScenarioFixture {
        scenario: SyntheticScenario {
            query,
            documents,
            truth_labels,
            knobs: knobs.clone(),
            seed,
        },
        oracle: OracleTable {
            extraction,
            relations,
            arbitrations,
            embeddings,
        },
    }
}

/// Derives `count` scenario seeds from one batch seed and generates the
/// fixtures. Seeds are drawn from a ChaCha8 stream, so batches are
/// reproducible and extendable (a longer batch starts with the same
/// scenarios).
pub fn scenario_batch(knobs: &NoiseKnobs, batch_seed: u64, count: usize) -> Vec<ScenarioFixture> {
    let mut rng = ChaCha8Rng::seed_from_u64(batch_seed);
    (0..count)
        .map(|_| generate_scenario(knobs, rng.gen::<u64>()))
        .collect()
}

/// The membership worked example: four documents about East Asia Summit
/// membership — a true membership claim, an attendance claim supporting it,
/// a skipped-session claim plus a false non-membership claim, and an
/// "Emergency Alert System" homonym that query filtering must drop.
///
/// Under the default operating point: the homonym is filtered; the
/// weak support verdict (0.65 < tau_conf) leaves no edge; the membership
/// conflict is arbitrated twice from context and the false claim is
/// rejected; the run converges with three validated claims.
pub fn eas_preset() -> ScenarioFixture {
    let query = "Is the United States a member of the East Asia Summit?".to_string();
    let c1 = "The United States joined the East Asia Summit in 2011.";
    let c2 = "The United States has attended East Asia Summit meetings since joining.";
    let c3 = "The United States skipped the East Asia Summit session in 2017.";
    let c4 = "The United States is not a member of the East Asia Summit.";
    let c5 = "The Emergency Alert System interrupts broadcasts for national emergencies.";

    // Axes: 0 query, 1 membership, 2 attendance, 3 the 2017 session,
    // 4 the broadcast-system homonym. Chosen cosines:
    //   (c1,c2) 0.74, (c1,c3) 0.74, (c1,c4) 0.86, (c2,c3) 0.847,
    //   (c2,c4) 0.64, (c3,c4) 0.895 — all mined; (query,c5) 0.1 — filtered.
    let dim = 5;
    let v = |components: &[(usize, f64)]| -> Vec<f64> {
        let mut out = vec![0.0; dim];
        for (i, x) in components {
            out[*i] = *x;
        }
        out
    };
    let embeddings = BTreeMap::from([
        (query.clone(), v(&[(0, 1.0)])),
        (c1.to_string(), v(&[(0, 0.8), (1, 0.6)])),
        (c2.to_string(), v(&[(0, 0.7), (1, 0.3), (2, 0.42f64.sqrt())])),
        (
            c3.to_string(),
            v(&[(0, 0.7), (1, 0.3), (3, 0.5), (2, 0.17f64.sqrt())]),
        ),
        (c4.to_string(), v(&[(0, 0.7), (1, 0.5), (3, 0.26f64.sqrt())])),
        (c5.to_string(), v(&[(0, 0.1), (4, 0.99f64.sqrt())])),
    ]);

    let us = "united states".to_string();
    let eas = "east asia summit".to_string();
    let extraction = BTreeMap::from([
        (
            "d1".to_string(),
            vec![ExtractionRule {
                text: c1.to_string(),
                entities: vec![us.clone(), eas.clone(), "2011".to_string()],
            }],
        ),
        (
            "d2".to_string(),
            vec![ExtractionRule {
                text: c2.to_string(),
                entities: vec![us.clone(), eas.clone()],
            }],
        ),
        (
            "d3".to_string(),
            vec![
                ExtractionRule {
                    text: c3.to_string(),
                    entities: vec![us.clone(), eas.clone(), "2017".to_string()],
                },
                ExtractionRule {
                    text: c4.to_string(),
                    entities: vec![us.clone(), eas.clone()],
                },
            ],
        ),
        (
            "d4".to_string(),
            vec![ExtractionRule {
                text: c5.to_string(),
                entities: vec!["emergency alert system".to_string()],
            }],
        ),
    ]);

    let documents = vec![
        Document::new("d1", c1),
        Document::new("d2", c2),
        Document::new("d3", format!("{c3} {c4}")),
        Document::new("d4", c5),
    ];

    let relations = vec![
        RelationRule {
            a: c2.to_string(),
            b: c1.to_string(),
            relation: RelationKind::Support,
            confidence: 0.8,
        },
        // Too weak to survive the confidence gate at tau_conf = 0.7.
        RelationRule {
            a: c3.to_string(),
            b: c4.to_string(),
            relation: RelationKind::Support,
            confidence: 0.65,
        },
        RelationRule {
            a: c1.to_string(),
            b: c4.to_string(),
            relation: RelationKind::Contradiction,
            confidence: 0.9,
        },
    ];
    // Context-counting arbitration: c1 brings its attendance supporter, c4
    // brings nothing, so c1 wins each round.
    let arbitrations = vec![ArbitrationRule {
        a: c1.to_string(),
        b: c4.to_string(),
        mode: ArbitrationMode::ContextMajority,
        winner: None,
        confidence: 0.9,
        invert: false,
    }];

    let truth_labels = BTreeMap::from([
        (c1.to_string(), TruthLabel::True),
        (c2.to_string(), TruthLabel::True),
        (c3.to_string(), TruthLabel::True),
        (c4.to_string(), TruthLabel::False),
        (c5.to_string(), TruthLabel::Irrelevant),
    ]);

    ScenarioFixture {
        scenario: SyntheticScenario {
            query,
            documents,
            truth_labels,
            knobs: NoiseKnobs::default(),
            seed: 0,
        },
        oracle: OracleTable {
            extraction,
            relations,
            arbitrations,
            embeddings,
        },
    }
}

/// Quality and cost measures for one pipeline run over a scenario.
#[derive(Clone, Copy, Debug, PartialEq, Serialize, Deserialize)]
pub struct RunMetrics {
    /// Fraction of true planted texts covered by some validated node.
    pub recall: f64,
    /// Fraction of validated nodes whose canonical claim is true.
    pub precision: f64,
    /// Validated true nodes per whitespace token of the assembled context —
    /// how much signal each token of output carries.
    pub density: f64,
    /// Backend calls charged to the run: relation verification plus
    /// arbitration.
    pub calls: u64,
}

impl RunMetrics {
    /// Precision x recall, the scalar used to compare operating points.
    pub fn quality(&self) -> f64 {
        self.recall * self.precision
    }
}

/// Scores a finished run against the scenario's ground truth.
///
/// `pool` maps claim ids back to planted texts; `validated` holds the ids
/// of the accepted nodes. Any validated node whose canonical text has no
/// label is an error — scoring must never silently guess.
pub fn evaluate_run(
    scenario: &SyntheticScenario,
    pool: &[AtomicClaim],
    graph: &EvidenceGraph,
    validated: &[String],
    trace: &ArbitrationTrace,
) -> Result<RunMetrics> {
    let text_of: BTreeMap<&str, &str> = pool
        .iter()
        .map(|c| (c.id.as_str(), c.text.as_str()))
        .collect();
    let label_of = |text: &str| -> Result<TruthLabel> {
        scenario
            .truth_labels
            .get(text)
            .copied()
            .ok_or_else(|| CoreError::UnknownLabel(text.to_string()))
    };

    let mut covered: BTreeSet<&str> = BTreeSet::new();
    let mut true_nodes = 0usize;
    let mut nodes: Vec<&ClaimNode> = Vec::with_capacity(validated.len());
    for id in validated {
        let node = graph.node(id)?;
        nodes.push(node);
        if label_of(&node.canonical_text)? == TruthLabel::True {
            true_nodes += 1;
        }
        for member in &node.members {
            if let Some(text) = text_of.get(member.as_str()) {
                covered.insert(text);
            }
        }
    }

    let true_texts: Vec<&str> = scenario
        .truth_labels
        .iter()
        .filter(|(_, l)| **l == TruthLabel::True)
        .map(|(t, _)| t.as_str())
        .collect();
    let recall = if true_texts.is_empty() {
        1.0
    } else {
        let hit = true_texts.iter().filter(|t| covered.contains(**t)).count();
        hit as f64 / true_texts.len() as f64
    };
    let precision = if nodes.is_empty() {
        1.0
    } else {
        true_nodes as f64 / nodes.len() as f64
    };
    let tokens = assemble_context(&nodes).split_whitespace().count();
    let density = if tokens == 0 {
        0.0
    } else {
        true_nodes as f64 / tokens as f64
    };
    Ok(RunMetrics {
        recall,
        precision,
        density,
        calls: trace.total_calls(),
    })
}

/// Everything produced by one end-to-end run over a fixture.
#[derive(Clone, Debug, PartialEq)]
pub struct ScenarioOutcome {
    pub pool: Vec<AtomicClaim>,
    pub graph: EvidenceGraph,
    pub trace: ArbitrationTrace,
    /// Validated node ids, credibility-descending.
    pub validated: Vec<String>,
    pub context: String,
    pub metrics: RunMetrics,
}

/// Runs the full pipeline — extract, build, arbitrate, validate, score —
/// over a fixture with the given configuration and policy.
pub fn execute_scenario(
    fixture: &ScenarioFixture,
    cfg: &PipelineConfig,
    policy: SchedulingPolicy,
) -> Result<ScenarioOutcome> {
    let backend = CountingBackend::new(OracleBackend::new(fixture.oracle.clone(), cfg.tau_gate)?);
    let mut pool = Vec::new();
    for doc in &fixture.scenario.documents {
        pool.extend(backend.extract_claims(doc)?);
    }
    let mut graph = build_graph_from_pool(&fixture.scenario.query, pool.clone(), &backend, cfg)?;
    let mut trace = run_arbitration(&mut graph, &backend, cfg, policy)?;
    trace.verifier_calls = Some(backend.counts().verify);

    let nodes = validated_set(&graph, cfg.tau_accept);
    let context = assemble_context(&nodes);
    let validated: Vec<String> = nodes.into_iter().map(|n| n.id.clone()).collect();
    let metrics = evaluate_run(&fixture.scenario, &pool, &graph, &validated, &trace)?;
    Ok(ScenarioOutcome {
        pool,
        graph,
        trace,
        validated,
        context,
        metrics,
    })
}

/// Which pipeline parameter a sweep varies.
#[derive(Clone, Copy, Debug, PartialEq, Eq, Serialize, Deserialize)]
#[serde(rename_all = "kebab-case")]
pub enum SweepParameter {
    /// Query-relevance threshold `tau_q`.
    TauQ,
    /// Support-edge budget `max_support_edges`.
    SupportBudget,
    /// Arbitrations per round `budget_k`.
    ArbitrationBudget,
    /// Scheduling policy (grid values are policy names).
    Policy,
}

impl SweepParameter {
    pub fn name(self) -> &'static str {
        match self {
            SweepParameter::TauQ => "tau-q",
            SweepParameter::SupportBudget => "support-budget",
            SweepParameter::ArbitrationBudget => "arbitration-budget",
            SweepParameter::Policy => "policy",
        }
    }
}

impl fmt::Display for SweepParameter {
    fn fmt(&self, f: &mut fmt::Formatter<'_>) -> fmt::Result {
        f.write_str(self.name())
    }
}

impl FromStr for SweepParameter {
    type Err = CoreError;

    fn from_str(s: &str) -> Result<Self> {
        match s.to_ascii_lowercase().as_str() {
            "tau-q" | "tau_q" => Ok(SweepParameter::TauQ),
            "support-budget" | "support_budget" | "max-support-edges" => {
                Ok(SweepParameter::SupportBudget)
            }
            "arbitration-budget" | "arbitration_budget" | "budget-k" => {
                Ok(SweepParameter::ArbitrationBudget)
            }
            "policy" => Ok(SweepParameter::Policy),
            other => Err(CoreError::InvalidConfig(format!(
                "unknown sweep parameter `{other}` (expected tau-q, support-budget, arbitration-budget or policy)"
            ))),
        }
    }
}

/// One sweep grid point: the value swept to and metric means over the batch.
#[derive(Clone, Debug, PartialEq, Serialize, Deserialize)]
pub struct SweepRow {
    pub parameter: String,
    pub value: String,
    pub recall_mean: f64,
    pub precision_mean: f64,
    pub density_mean: f64,
    pub calls_mean: f64,
}

/// Sweep results, one row per grid value in grid order.
#[derive(Clone, Debug, Default, PartialEq, Serialize, Deserialize)]
pub struct SweepTable {
    pub rows: Vec<SweepRow>,
}

impl SweepTable {
    /// Renders the table as CSV with a fixed header.
    pub fn to_csv(&self) -> String {
        let mut out = String::from(
            "parameter,value,recall_mean,precision_mean,density_mean,calls_mean\n",
        );
        for r in &self.rows {
            out.push_str(&format!(
                "{},{},{},{},{},{}\n",
                r.parameter, r.value, r.recall_mean, r.precision_mean, r.density_mean, r.calls_mean
            ));
        }
        out
    }
}

fn parse_grid_value<T: FromStr>(parameter: SweepParameter, raw: &str) -> Result<T> {
    raw.trim().parse::<T>().map_err(|_| {
        CoreError::InvalidConfig(format!(
            "grid value `{raw}` is not valid for parameter `{parameter}`"
        ))
    })
}

/// Runs every fixture at every grid value of one parameter and averages the
/// metrics per grid point.
pub fn sweep(
    parameter: SweepParameter,
    grid: &[String],
    fixtures: &[ScenarioFixture],
    base_cfg: &PipelineConfig,
    base_policy: SchedulingPolicy,
) -> Result<SweepTable> {
    if grid.is_empty() {
        return Err(CoreError::InvalidConfig("sweep grid is empty".into()));
    }
    if fixtures.is_empty() {
        return Err(CoreError::InvalidConfig(
            "sweep needs at least one scenario".into(),
        ));
    }
    let mut rows = Vec::with_capacity(grid.len());
    for raw in grid {
        let mut cfg = base_cfg.clone();
        let mut policy = base_policy;
        let value = match parameter {
            SweepParameter::TauQ => {
                cfg.tau_q = parse_grid_value::<f64>(parameter, raw)?;
                format!("{}", cfg.tau_q)
            }
            SweepParameter::SupportBudget => {
                cfg.max_support_edges = parse_grid_value::<usize>(parameter, raw)?;
                format!("{}", cfg.max_support_edges)
            }
            SweepParameter::ArbitrationBudget => {
                cfg.budget_k = parse_grid_value::<usize>(parameter, raw)?;
                format!("{}", cfg.budget_k)
            }
            SweepParameter::Policy => {
                policy = parse_grid_value::<SchedulingPolicy>(parameter, raw)?;
                policy.name().to_string()
            }
        };
        cfg.validate()?;

        let (mut recall, mut precision, mut density, mut calls) = (0.0, 0.0, 0.0, 0.0);
        for fixture in fixtures {
            let outcome = execute_scenario(fixture, &cfg, policy)?;
            recall += outcome.metrics.recall;
            precision += outcome.metrics.precision;
            density += outcome.metrics.density;
            calls += outcome.metrics.calls as f64;
        }
        let k = fixtures.len() as f64;
        rows.push(SweepRow {
            parameter: parameter.name().to_string(),
            value,
            recall_mean: recall / k,
            precision_mean: precision / k,
            density_mean: density / k,
            calls_mean: calls / k,
        });
    }
    Ok(SweepTable { rows })
}
