//! Artifact serialization: graph/trace/pool JSON, DOT rendering, the
//! validated-context file and the run manifest.
//!
//! All writers are deterministic — map keys are ordered, lists are sorted on
//! save, floats use the shortest round-trip form — so re-running a pipeline
//! over identical inputs yields byte-identical files.

use std::fs;
use std::path::Path;

use serde::de::DeserializeOwned;
use serde::{Deserialize, Serialize};

use crate::arbitration::{assemble_context, validated_set, ArbitrationTrace, SchedulingPolicy};
use crate::config::PipelineConfig;
use crate::error::{CoreError, Result};
use crate::model::{ClaimNode, Edge, EdgeKind, EvidenceGraph};

/// Writes any serializable value as pretty-printed JSON with a trailing
/// newline.
pub fn write_json<T: Serialize>(path: &Path, value: &T) -> Result<()> {
    let mut text = serde_json::to_string_pretty(value)?;
    text.push('\n');
    fs::write(path, text)?;
    Ok(())
}

/// Reads a JSON file into any deserializable value.
pub fn read_json<T: DeserializeOwned>(path: &Path) -> Result<T> {
    let text = fs::read_to_string(path)?;
    Ok(serde_json::from_str(&text)?)
}

/// On-disk node record. `p` duplicates the logit for human readers and is
/// cross-checked on load.
#[derive(Clone, Debug, PartialEq, Serialize, Deserialize)]
#[serde(deny_unknown_fields)]
struct NodeRecord {
    id: String,
    canonical_text: String,
    members: Vec<String>,
    sources: Vec<String>,
    entities: Vec<String>,
    logit: f64,
    p: f64,
    #[serde(default, skip_serializing_if = "Option::is_none")]
    embedding: Option<Vec<f64>>,
    #[serde(default, skip_serializing_if = "std::collections::BTreeMap::is_empty")]
    resolved_pairs: std::collections::BTreeMap<String, u32>,
}

/// On-disk graph artifact: the configuration it was built under plus nodes
/// and a single merged edge list.
#[derive(Clone, Debug, PartialEq, Serialize, Deserialize)]
#[serde(deny_unknown_fields)]
struct GraphFile {
    query: String,
    config: PipelineConfig,
    nodes: Vec<NodeRecord>,
    edges: Vec<Edge>,
}

fn graph_file(graph: &EvidenceGraph, cfg: &PipelineConfig) -> GraphFile {
    let nodes = graph
        .nodes
        .values()
        .map(|n| NodeRecord {
            id: n.id.clone(),
            canonical_text: n.canonical_text.clone(),
            members: n.members.clone(),
            sources: n.sources.iter().cloned().collect(),
            entities: n.entities.iter().cloned().collect(),
            logit: n.logit,
            p: n.probability(),
            embedding: n.embedding.clone(),
            resolved_pairs: n.resolved_pairs.clone(),
        })
        .collect();
    let mut edges: Vec<Edge> = graph
        .support_edges
        .iter()
        .chain(&graph.contradiction_edges)
        .cloned()
        .collect();
    edges.sort_by(|x, y| x.key().cmp(&y.key()));
    GraphFile {
        query: graph.query.clone(),
        config: cfg.clone(),
        nodes,
        edges,
    }
}

/// Saves a graph (and the configuration that produced it) as JSON.
pub fn save_graph(path: &Path, graph: &EvidenceGraph, cfg: &PipelineConfig) -> Result<()> {
    graph.validate()?;
    write_json(path, &graph_file(graph, cfg))
}

/// Renders the graph artifact JSON as a string — the exact bytes
/// [`save_graph`] would write.
pub fn graph_to_json(graph: &EvidenceGraph, cfg: &PipelineConfig) -> Result<String> {
    graph.validate()?;
    let mut text = serde_json::to_string_pretty(&graph_file(graph, cfg))?;
    text.push('\n');
    Ok(text)
}

/// Loads a graph artifact, returning the graph and the configuration it
/// embeds. The structure is re-validated and the stored `p` column is
/// checked against the stored logit.
pub fn load_graph(path: &Path) -> Result<(EvidenceGraph, PipelineConfig)> {
    let file: GraphFile = read_json(path)?;
    let mut graph = EvidenceGraph {
        query: file.query,
        ..Default::default()
    };
    for record in file.nodes {
        let node = ClaimNode {
            id: record.id.clone(),
            canonical_text: record.canonical_text,
            members: record.members,
            sources: record.sources.into_iter().collect(),
            entities: record.entities.into_iter().collect(),
            logit: record.logit,
            embedding: record.embedding,
            resolved_pairs: record.resolved_pairs,
        };
        if (node.probability() - record.p).abs() > 1e-9 {
            return Err(CoreError::InvalidGraph(format!(
                "node `{}` stores p={} but its logit implies {}",
                node.id,
                record.p,
                node.probability()
            )));
        }
        if graph.nodes.insert(node.id.clone(), node).is_some() {
            return Err(CoreError::InvalidGraph(format!(
                "duplicate node id `{}`",
                record.id
            )));
        }
    }
    for edge in file.edges {
        match edge.kind {
            EdgeKind::Support => graph.support_edges.push(edge),
            EdgeKind::Contradiction => graph.contradiction_edges.push(edge),
        }
    }
    graph.sort_edges();
    graph.validate()?;
    file.config.validate()?;
    Ok((graph, file.config))
}

/// Saves an arbitration trace as JSON.
pub fn save_trace(path: &Path, trace: &ArbitrationTrace) -> Result<()> {
    write_json(path, trace)
}

/// Loads an arbitration trace.
pub fn load_trace(path: &Path) -> Result<ArbitrationTrace> {
    read_json(path)
}

fn dot_escape(text: &str) -> String {
    text.replace('\\', "\\\\").replace('"', "\\\"")
}

fn dot_label(node: &ClaimNode) -> String {
    const MAX_CHARS: usize = 40;
    let mut text: String = node.canonical_text.chars().take(MAX_CHARS).collect();
    if node.canonical_text.chars().count() > MAX_CHARS {
        text.push_str("...");
    }
    format!("{} (p={:.3})", dot_escape(&text), node.probability())
}

/// Renders the graph in Graphviz DOT form: undirected, support edges solid,
/// contradiction edges dashed, node labels showing the (truncated) claim
/// and its credibility. The active configuration is echoed as comments.
pub fn graph_to_dot(graph: &EvidenceGraph, cfg: &PipelineConfig) -> String {
    let mut out = String::from("graph evidence {\n");
    out.push_str(&format!("  // query: {}\n", graph.query.replace('\n', " ")));
    out.push_str(&format!(
        "  // tau_q={} tau_sim={} tau_conf={} tau_accept={} tau_gate={} tau_merge={}\n",
        cfg.tau_q, cfg.tau_sim, cfg.tau_conf, cfg.tau_accept, cfg.tau_gate, cfg.tau_merge
    ));
    out.push_str(&format!(
        "  // eta={} budget_k={} rounds={} per_pair_cap={} max_support_edges={} seed={}\n",
        cfg.eta, cfg.budget_k, cfg.rounds, cfg.per_pair_cap, cfg.max_support_edges, cfg.seed
    ));
    out.push_str("  node [shape=box, fontsize=10];\n");
    for node in graph.nodes.values() {
        out.push_str(&format!(
            "  \"{}\" [label=\"{}\"];\n",
            dot_escape(&node.id),
            dot_label(node)
        ));
    }
    let edge_line = |e: &Edge, style: &str| {
        format!(
            "  \"{}\" -- \"{}\" [style={}, label=\"{:.2}\"];\n",
            dot_escape(&e.a),
            dot_escape(&e.b),
            style,
            e.confidence
        )
    };
    for e in &graph.support_edges {
        out.push_str(&edge_line(e, "solid"));
    }
    for e in &graph.contradiction_edges {
        out.push_str(&edge_line(e, "dashed"));
    }
    out.push_str("}\n");
    out
}

/// Renders the validated-context file: a comment header naming the query
/// and acceptance threshold, then the numbered claim lines.
pub fn render_validated_context(graph: &EvidenceGraph, cfg: &PipelineConfig) -> String {
    let validated = validated_set(graph, cfg.tau_accept);
    format!(
        "# query: {}\n# tau_accept: {}\n# validated nodes: {}\n{}",
        graph.query.replace('\n', " "),
        cfg.tau_accept,
        validated.len(),
        assemble_context(&validated)
    )
}

/// Manifest tying one `run` invocation together: inputs, configuration and
/// the artifact files it wrote. A manifest is enough to re-run the pipeline
/// and reproduce every artifact byte for byte.
#[derive(Clone, Debug, PartialEq, Serialize, Deserialize)]
#[serde(deny_unknown_fields)]
pub struct RunManifest {
    pub query: String,
    pub config: PipelineConfig,
    pub policy: SchedulingPolicy,
    /// Backend kind: "oracle" or "remote".
    pub backend: String,
    /// Path of the scenario fixture driving the run, if any.
    #[serde(default, skip_serializing_if = "Option::is_none")]
    pub scenario: Option<String>,
    /// Path of the raw documents file, if the run started from documents.
    #[serde(default, skip_serializing_if = "Option::is_none")]
    pub documents: Option<String>,
    /// Path of the oracle table, for oracle runs not driven by a fixture.
    #[serde(default, skip_serializing_if = "Option::is_none")]
    pub oracle_table: Option<String>,
    pub artifacts: ManifestArtifacts,
}

/// The files a `run` writes, relative to the manifest's directory.
#[derive(Clone, Debug, PartialEq, Serialize, Deserialize)]
#[serde(deny_unknown_fields)]
pub struct ManifestArtifacts {
    pub pool: String,
    pub graph: String,
    pub dot: String,
    pub trace: String,
    pub context: String,
}
