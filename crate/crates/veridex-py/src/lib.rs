//! Python bindings for the veridex pipeline.
//!
//! The module mirrors the library's main operations — configuration, the
//! credibility math, scenario generation, end-to-end execution, and sweeps —
//! behind a small, JSON-friendly surface. Structured inputs (fixtures,
//! oracle tables, sweep results) cross the boundary as JSON strings, so the
//! same files work interchangeably with the `veridex` CLI; run results come
//! back as an [`Outcome`] object with typed accessors.
//!
//! Usage from Python:
//!
//! ```text
//! import veridex_py as vx
//! out = vx.run_scenario(vx.eas_preset())
//! print(out.validated, out.recall)
//! ```

use pyo3::exceptions::{PyKeyError, PyRuntimeError, PyValueError};
use pyo3::prelude::*;

use veridex::backend::EvidenceBackend;
use veridex::{
    assemble_context, build_graph_from_pool, execute_scenario, generate_scenario, graph_to_dot,
    graph_to_json, run_arbitration, scenario_batch, validated_set, ArbitrationTrace, CoreError,
    CountingBackend, Document, EvidenceGraph, NoiseKnobs, OracleBackend, OracleTable,
    PipelineConfig, PruneMode, RunMetrics, ScenarioFixture, SchedulingPolicy, SweepParameter,
};

fn core_err(err: CoreError) -> PyErr {
    match err {
        CoreError::UnknownNode(_) | CoreError::UnknownLabel(_) => {
            PyKeyError::new_err(err.to_string())
        }
        CoreError::Backend(_) | CoreError::Io(_) => PyRuntimeError::new_err(err.to_string()),
        _ => PyValueError::new_err(err.to_string()),
    }
}

fn json_err(err: serde_json::Error) -> PyErr {
    PyValueError::new_err(format!("malformed JSON: {err}"))
}

fn parse_policy(name: &str) -> PyResult<SchedulingPolicy> {
    name.parse().map_err(core_err)
}

// ============================================================================
// Config
// ============================================================================

/// Pipeline configuration. Construct with keyword arguments; anything not
/// given keeps the shipped default.
///
/// ```text
/// Config(tau_accept=0.25, budget_k=5)
/// ```
#[pyclass(frozen, skip_from_py_object)]
#[derive(Clone)]
struct Config {
    inner: PipelineConfig,
}

impl Config {
    fn resolve(config: Option<&Config>) -> PipelineConfig {
        config.map(|c| c.inner.clone()).unwrap_or_default()
    }
}

#[pymethods]
impl Config {
    #[new]
    #[pyo3(signature = (*, tau_q=None, tau_sim=None, tau_conf=None, tau_accept=None,
        tau_gate=None, tau_merge=None, eta=None, budget_k=None, max_support_edges=None,
        prune_mode=None, rounds=None, per_pair_cap=None, seed=None))]
    #[allow(clippy::too_many_arguments)]
    fn new(
        tau_q: Option<f64>,
        tau_sim: Option<f64>,
        tau_conf: Option<f64>,
        tau_accept: Option<f64>,
        tau_gate: Option<f64>,
        tau_merge: Option<f64>,
        eta: Option<f64>,
        budget_k: Option<usize>,
        max_support_edges: Option<usize>,
        prune_mode: Option<&str>,
        rounds: Option<usize>,
        per_pair_cap: Option<u32>,
        seed: Option<u64>,
    ) -> PyResult<Self> {
        let mut inner = PipelineConfig::default();
        macro_rules! overlay {
            ($($field:ident),*) => {
                $(if let Some(value) = $field { inner.$field = value; })*
            };
        }
        overlay!(
            tau_q,
            tau_sim,
            tau_conf,
            tau_accept,
            tau_gate,
            tau_merge,
            eta,
            budget_k,
            max_support_edges,
            rounds,
            per_pair_cap,
            seed
        );
        if let Some(mode) = prune_mode {
            inner.prune_mode = match mode {
                "global" => PruneMode::Global,
                "per-node" | "per_node" => PruneMode::PerNode,
                other => {
                    return Err(PyValueError::new_err(format!(
                        "unknown prune mode `{other}` (expected global or per-node)"
                    )))
                }
            };
        }
        inner.validate().map_err(core_err)?;
        Ok(Self { inner })
    }

    /// Parses a config from its JSON form (the same shape the CLI's
    /// `--config` files use). Missing keys default; unknown keys are errors.
    #[staticmethod]
    fn from_json(text: &str) -> PyResult<Self> {
        let inner: PipelineConfig = serde_json::from_str(text).map_err(json_err)?;
        inner.validate().map_err(core_err)?;
        Ok(Self { inner })
    }

    fn to_json(&self) -> PyResult<String> {
        serde_json::to_string_pretty(&self.inner).map_err(json_err)
    }

    #[getter]
    fn tau_q(&self) -> f64 {
        self.inner.tau_q
    }

    #[getter]
    fn tau_sim(&self) -> f64 {
        self.inner.tau_sim
    }

    #[getter]
    fn tau_conf(&self) -> f64 {
        self.inner.tau_conf
    }

    #[getter]
    fn tau_accept(&self) -> f64 {
        self.inner.tau_accept
    }

    #[getter]
    fn tau_gate(&self) -> f64 {
        self.inner.tau_gate
    }

    #[getter]
    fn tau_merge(&self) -> f64 {
        self.inner.tau_merge
    }

    #[getter]
    fn eta(&self) -> f64 {
        self.inner.eta
    }

    #[getter]
    fn budget_k(&self) -> usize {
        self.inner.budget_k
    }

    #[getter]
    fn max_support_edges(&self) -> usize {
        self.inner.max_support_edges
    }

    #[getter]
    fn prune_mode(&self) -> &'static str {
        match self.inner.prune_mode {
            PruneMode::Global => "global",
            PruneMode::PerNode => "per-node",
        }
    }

    #[getter]
    fn rounds(&self) -> usize {
        self.inner.rounds
    }

    #[getter]
    fn per_pair_cap(&self) -> u32 {
        self.inner.per_pair_cap
    }

    #[getter]
    fn seed(&self) -> u64 {
        self.inner.seed
    }

    fn __repr__(&self) -> String {
        format!(
            "Config(tau_q={}, tau_sim={}, tau_conf={}, tau_accept={}, tau_gate={}, \
             tau_merge={}, eta={}, budget_k={}, max_support_edges={}, prune_mode='{}', \
             rounds={}, per_pair_cap={}, seed={})",
            self.inner.tau_q,
            self.inner.tau_sim,
            self.inner.tau_conf,
            self.inner.tau_accept,
            self.inner.tau_gate,
            self.inner.tau_merge,
            self.inner.eta,
            self.inner.budget_k,
            self.inner.max_support_edges,
            self.prune_mode(),
            self.inner.rounds,
            self.inner.per_pair_cap,
            self.inner.seed,
        )
    }
}

// ============================================================================
// Outcome
// ============================================================================

/// Everything produced by one end-to-end run: the final graph, the
/// arbitration trace, the validated claims, and (for synthetic scenarios
/// with ground truth) the evaluation metrics.
#[pyclass(frozen)]
struct Outcome {
    graph: EvidenceGraph,
    trace: ArbitrationTrace,
    validated: Vec<String>,
    context: String,
    metrics: Option<RunMetrics>,
    cfg: PipelineConfig,
}

#[pymethods]
impl Outcome {
    /// Validated node ids, credibility-descending.
    #[getter]
    fn validated(&self) -> Vec<String> {
        self.validated.clone()
    }

    /// The validated claims rendered as a numbered context block.
    #[getter]
    fn context(&self) -> &str {
        &self.context
    }

    #[getter]
    fn policy(&self) -> &'static str {
        self.trace.policy.name()
    }

    #[getter]
    fn rounds_used(&self) -> usize {
        self.trace.rounds_used
    }

    #[getter]
    fn converged(&self) -> bool {
        self.trace.converged
    }

    #[getter]
    fn stopped_early(&self) -> bool {
        self.trace.stopped_early
    }

    #[getter]
    fn remaining_active(&self) -> usize {
        self.trace.remaining_active
    }

    /// Relation-verification calls spent building the graph.
    #[getter]
    fn verifier_calls(&self) -> Option<u64> {
        self.trace.verifier_calls
    }

    /// Arbitration calls issued across all rounds.
    #[getter]
    fn arbitration_calls(&self) -> u64 {
        self.trace.arbitration_calls()
    }

    /// Verification plus arbitration calls.
    #[getter]
    fn calls(&self) -> u64 {
        self.trace.total_calls()
    }

    /// Recall against planted truth; None when the run had no ground truth.
    #[getter]
    fn recall(&self) -> Option<f64> {
        self.metrics.as_ref().map(|m| m.recall)
    }

    /// Precision against planted truth; None when the run had no ground truth.
    #[getter]
    fn precision(&self) -> Option<f64> {
        self.metrics.as_ref().map(|m| m.precision)
    }

    /// Validated-truth density of the context; None without ground truth.
    #[getter]
    fn density(&self) -> Option<f64> {
        self.metrics.as_ref().map(|m| m.density)
    }

    fn node_ids(&self) -> Vec<String> {
        self.graph.nodes.keys().cloned().collect()
    }

    /// Final credibility of a node.
    fn probability(&self, id: &str) -> PyResult<f64> {
        Ok(self.graph.node(id).map_err(core_err)?.probability())
    }

    /// Final credibility logit of a node.
    fn logit(&self, id: &str) -> PyResult<f64> {
        Ok(self.graph.node(id).map_err(core_err)?.logit)
    }

    fn canonical_text(&self, id: &str) -> PyResult<String> {
        Ok(self.graph.node(id).map_err(core_err)?.canonical_text.clone())
    }

    fn sources(&self, id: &str) -> PyResult<Vec<String>> {
        Ok(self
            .graph
            .node(id)
            .map_err(core_err)?
            .sources
            .iter()
            .cloned()
            .collect())
    }

    /// Support edges as (a, b, confidence, similarity) tuples.
    fn support_edges(&self) -> Vec<(String, String, f64, f64)> {
        self.graph
            .support_edges
            .iter()
            .map(|e| (e.a.clone(), e.b.clone(), e.confidence, e.similarity))
            .collect()
    }

    /// Contradiction edges as (a, b, confidence, similarity) tuples.
    fn contradiction_edges(&self) -> Vec<(String, String, f64, f64)> {
        self.graph
            .contradiction_edges
            .iter()
            .map(|e| (e.a.clone(), e.b.clone(), e.confidence, e.similarity))
            .collect()
    }

    /// The final (post-arbitration) graph in the CLI's JSON artifact format.
    fn graph_json(&self) -> PyResult<String> {
        graph_to_json(&self.graph, &self.cfg).map_err(core_err)
    }

    /// The final graph in DOT format.
    fn graph_dot(&self) -> String {
        graph_to_dot(&self.graph, &self.cfg)
    }

    /// The full arbitration trace as JSON.
    fn trace_json(&self) -> PyResult<String> {
        serde_json::to_string_pretty(&self.trace).map_err(json_err)
    }

    fn __repr__(&self) -> String {
        format!(
            "Outcome(validated={}/{}, rounds_used={}, converged={})",
            self.validated.len(),
            self.graph.nodes.len(),
            self.trace.rounds_used,
            self.trace.converged,
        )
    }
}

// ============================================================================
// Math
// ============================================================================

/// Logistic function p = 1 / (1 + exp(-s)).
#[pyfunction]
fn sigmoid(s: f64) -> f64 {
    veridex::sigmoid(s)
}

/// Log-odds s = ln(p / (1 - p)); raises ValueError outside (0, 1).
#[pyfunction]
fn logit(p: f64) -> PyResult<f64> {
    veridex::logit(p).map_err(core_err)
}

/// Conflict intensity (p_i + p_j) / (1 + |p_i - p_j|).
#[pyfunction]
fn conflict_intensity(p_i: f64, p_j: f64) -> f64 {
    veridex::conflict_intensity(p_i, p_j)
}

/// Cosine similarity of two equal-dimension unit vectors.
#[pyfunction]
fn cosine(a: Vec<f64>, b: Vec<f64>) -> PyResult<f64> {
    veridex::cosine(&a, &b).map_err(core_err)
}

// ============================================================================
// Fixtures
// ============================================================================

fn knobs(
    conflicting_pairs: usize,
    redundant_paraphrases: usize,
    homonym_claims: usize,
    arbitrator_error_rate: f64,
    standalone_true: usize,
    weakly_relevant_true: usize,
    genuine_supporters: usize,
    noisy_supporters: usize,
    context_sensitive: bool,
) -> NoiseKnobs {
    NoiseKnobs {
        conflicting_pairs,
        redundant_paraphrases,
        homonym_claims,
        arbitrator_error_rate,
        standalone_true,
        weakly_relevant_true,
        genuine_supporters,
        noisy_supporters,
        context_sensitive,
    }
}

fn fixture_json(fixture: &ScenarioFixture) -> PyResult<String> {
    serde_json::to_string_pretty(fixture).map_err(json_err)
}

/// The bundled walkthrough fixture (four documents, one planted conflict,
/// one homonym) as scenario JSON.
#[pyfunction]
fn eas_preset() -> PyResult<String> {
    fixture_json(&veridex::eas_preset())
}

/// Generates one planted-truth scenario as JSON. All knobs default to zero.
#[pyfunction]
#[pyo3(signature = (seed, *, conflicting_pairs=0, redundant_paraphrases=0, homonym_claims=0,
    arbitrator_error_rate=0.0, standalone_true=0, weakly_relevant_true=0,
    genuine_supporters=0, noisy_supporters=0, context_sensitive=false))]
#[allow(clippy::too_many_arguments)]
fn make_scenario(
    seed: u64,
    conflicting_pairs: usize,
    redundant_paraphrases: usize,
    homonym_claims: usize,
    arbitrator_error_rate: f64,
    standalone_true: usize,
    weakly_relevant_true: usize,
    genuine_supporters: usize,
    noisy_supporters: usize,
    context_sensitive: bool,
) -> PyResult<String> {
    let fixture = generate_scenario(
        &knobs(
            conflicting_pairs,
            redundant_paraphrases,
            homonym_claims,
            arbitrator_error_rate,
            standalone_true,
            weakly_relevant_true,
            genuine_supporters,
            noisy_supporters,
            context_sensitive,
        ),
        seed,
    );
    fixture_json(&fixture)
}

/// Generates a seeded batch of scenarios, one JSON string each.
#[pyfunction]
#[pyo3(signature = (batch_seed, count, *, conflicting_pairs=0, redundant_paraphrases=0,
    homonym_claims=0, arbitrator_error_rate=0.0, standalone_true=0, weakly_relevant_true=0,
    genuine_supporters=0, noisy_supporters=0, context_sensitive=false))]
#[allow(clippy::too_many_arguments)]
fn make_batch(
    batch_seed: u64,
    count: usize,
    conflicting_pairs: usize,
    redundant_paraphrases: usize,
    homonym_claims: usize,
    arbitrator_error_rate: f64,
    standalone_true: usize,
    weakly_relevant_true: usize,
    genuine_supporters: usize,
    noisy_supporters: usize,
    context_sensitive: bool,
) -> PyResult<Vec<String>> {
    scenario_batch(
        &knobs(
            conflicting_pairs,
            redundant_paraphrases,
            homonym_claims,
            arbitrator_error_rate,
            standalone_true,
            weakly_relevant_true,
            genuine_supporters,
            noisy_supporters,
            context_sensitive,
        ),
        batch_seed,
        count,
    )
    .iter()
    .map(fixture_json)
    .collect()
}

// ============================================================================
// Execution
// ============================================================================

fn parse_fixture(text: &str) -> PyResult<ScenarioFixture> {
    serde_json::from_str(text).map_err(json_err)
}

/// Runs the full pipeline over a scenario fixture (JSON) and scores it
/// against the planted truth.
#[pyfunction]
#[pyo3(signature = (fixture, config=None, policy="conflict-aware"))]
fn run_scenario(fixture: &str, config: Option<&Config>, policy: &str) -> PyResult<Outcome> {
    let fixture = parse_fixture(fixture)?;
    let cfg = Config::resolve(config);
    let policy = parse_policy(policy)?;
    let outcome = execute_scenario(&fixture, &cfg, policy).map_err(core_err)?;
    Ok(Outcome {
        graph: outcome.graph,
        trace: outcome.trace,
        validated: outcome.validated,
        context: outcome.context,
        metrics: Some(outcome.metrics),
        cfg,
    })
}

/// Runs the full pipeline over raw documents with an oracle-table backend.
///
/// `documents` is a list of `(id, text)` pairs; `oracle_table` is the
/// table's JSON. No ground truth is involved, so the outcome's metric
/// accessors return None.
#[pyfunction]
#[pyo3(signature = (query, documents, oracle_table, config=None, policy="conflict-aware"))]
fn run_documents(
    query: &str,
    documents: Vec<(String, String)>,
    oracle_table: &str,
    config: Option<&Config>,
    policy: &str,
) -> PyResult<Outcome> {
    let table: OracleTable = serde_json::from_str(oracle_table).map_err(json_err)?;
    let cfg = Config::resolve(config);
    let policy = parse_policy(policy)?;
    let backend = CountingBackend::new(
        OracleBackend::new(table, cfg.tau_gate).map_err(|e| core_err(e.into()))?,
    );

    let mut pool = Vec::new();
    for (id, text) in documents {
        pool.extend(
            backend
                .extract_claims(&Document::new(id, text))
                .map_err(|e| core_err(e.into()))?,
        );
    }
    let mut graph = build_graph_from_pool(query, pool, &backend, &cfg).map_err(core_err)?;
    let mut trace = run_arbitration(&mut graph, &backend, &cfg, policy).map_err(core_err)?;
    trace.verifier_calls = Some(backend.counts().verify);

    let nodes = validated_set(&graph, cfg.tau_accept);
    let context = assemble_context(&nodes);
    let validated = nodes.into_iter().map(|n| n.id.clone()).collect();
    Ok(Outcome {
        graph,
        trace,
        validated,
        context,
        metrics: None,
        cfg,
    })
}

/// Sweeps one parameter over a grid, running every fixture at every grid
/// value, and returns the averaged table as JSON.
///
/// `parameter` is one of `tau-q`, `support-budget`, `arbitration-budget`,
/// `policy`; `fixtures` is a list of scenario JSON strings.
#[pyfunction]
#[pyo3(signature = (parameter, grid, fixtures, config=None, policy="conflict-aware"))]
fn run_sweep(
    parameter: &str,
    grid: Vec<String>,
    fixtures: Vec<String>,
    config: Option<&Config>,
    policy: &str,
) -> PyResult<String> {
    let parameter: SweepParameter = parameter.parse().map_err(core_err)?;
    let fixtures = fixtures
        .iter()
        .map(|f| parse_fixture(f))
        .collect::<PyResult<Vec<_>>>()?;
    let cfg = Config::resolve(config);
    let policy = parse_policy(policy)?;
    let table = veridex::sweep(parameter, &grid, &fixtures, &cfg, policy).map_err(core_err)?;
    serde_json::to_string_pretty(&table).map_err(json_err)
}

#[pymodule]
fn veridex_py(m: &Bound<'_, PyModule>) -> PyResult<()> {
    m.add("__version__", env!("CARGO_PKG_VERSION"))?;
    m.add_class::<Config>()?;
    m.add_class::<Outcome>()?;
    m.add_function(wrap_pyfunction!(sigmoid, m)?)?;
    m.add_function(wrap_pyfunction!(logit, m)?)?;
    m.add_function(wrap_pyfunction!(conflict_intensity, m)?)?;
    m.add_function(wrap_pyfunction!(cosine, m)?)?;
    m.add_function(wrap_pyfunction!(eas_preset, m)?)?;
    m.add_function(wrap_pyfunction!(make_scenario, m)?)?;
    m.add_function(wrap_pyfunction!(make_batch, m)?)?;
    m.add_function(wrap_pyfunction!(run_scenario, m)?)?;
    m.add_function(wrap_pyfunction!(run_documents, m)?)?;
    m.add_function(wrap_pyfunction!(run_sweep, m)?)?;
    Ok(())
}
