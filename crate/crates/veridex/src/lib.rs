//! Evidence arbitration over claim graphs.
//!
//! The pipeline turns a set of free-text documents into a *validated* set of
//! atomic claims in three stages:
//!
//! 1. **Decompose & normalize** — a backend extracts atomic claims from each
//!    document, near-duplicates are merged into claim nodes, and each node
//!    receives an initial credibility prior from its source multiplicity.
//! 2. **Graph construction** — nodes irrelevant to the query are dropped,
//!    embedding-similar pairs are mined as candidates, and a relation
//!    verifier types each candidate as a support or contradiction edge.
//! 3. **Arbitration** — contradiction edges whose endpoints are both still
//!    credible are scheduled by conflict intensity and settled pairwise by a
//!    gated arbitrator; winners gain credibility logit, losers lose it, and
//!    the surviving nodes form the validated context.
//!
//! Everything is deterministic given a seed and an oracle backend: the same
//! inputs produce byte-identical artifacts. See the `cli` crate for the
//! command-line driver and `simulation` for planted-truth scenario tooling.

pub mod arbitration;
pub mod backend;
pub mod builder;
pub mod config;
pub mod error;
pub mod export;
pub mod math;
pub mod model;
pub mod normalize;
pub mod simulation;

pub use arbitration::{
    assemble_context, mine_active, parse_context, run_arbitration, select_top_k,
    supporting_context, validated_set, ActivePair, ArbitrationTrace, SchedulingPolicy,
};
pub use backend::{
    ArbitrationVerdict, CallCounts, CountingBackend, EvidenceBackend, OracleBackend, OracleTable,
    RelationKind, RelationVerdict, RemoteBackend, RemoteConfig,
};
pub use builder::{
    build_edges, build_graph, build_graph_from_pool, filter_by_query, mine_candidates,
    prune_support, CandidatePair,
};
pub use config::{PipelineConfig, PruneMode};
pub use error::{BackendError, CoreError};
pub use export::{
    graph_to_dot, graph_to_json, load_graph, load_trace, read_json, render_validated_context,
    save_graph, save_trace, write_json, ManifestArtifacts, RunManifest,
};
pub use math::{conflict_intensity, cosine, logit, sigmoid};
pub use model::{AtomicClaim, ClaimNode, ClaimPool, Document, Edge, EdgeKind, EvidenceGraph};
pub use normalize::{initial_credibility, normalize_claims};
pub use simulation::{
    eas_preset, evaluate_run, execute_scenario, generate_scenario, scenario_batch, sweep,
    NoiseKnobs, RunMetrics, ScenarioFixture, ScenarioOutcome, SweepParameter, SweepRow,
    SweepTable, SyntheticScenario, TruthLabel,
};
