//! `veridex` — command-line driver for the evidence-arbitration pipeline.
//!
//! Subcommands mirror the pipeline stages: `ingest` turns documents into a
//! claim pool, `build` turns a pool (or documents) into an evidence graph,
//! `arbitrate` runs the iterative conflict loop over a saved graph, `run`
//! executes everything end to end into an artifact directory, `sweep`
//! evaluates a parameter grid over scenario batches, and `export` re-renders
//! saved artifacts.
//!
//! Exit codes are a stable contract: 0 success (for `arbitrate`/`run`: the
//! active set emptied within the round budget), 1 round budget exhausted
//! with conflicts still active, 2 configuration error, 3 backend error,
//! 4 I/O or artifact error.

use std::fmt;
use std::fs;
use std::path::{Path, PathBuf};

use clap::{Args, Parser, Subcommand};

use veridex::{
    build_graph_from_pool, eas_preset, evaluate_run, graph_to_dot, graph_to_json, load_graph,
    read_json, render_validated_context, run_arbitration, save_graph, save_trace, scenario_batch,
    sweep, validated_set, write_json, ArbitrationTrace, ClaimPool, CoreError, CountingBackend,
    Document, EvidenceBackend, EvidenceGraph, ManifestArtifacts, NoiseKnobs, OracleBackend,
    OracleTable, PipelineConfig, PruneMode, RemoteBackend, RemoteConfig, RunManifest, RunMetrics,
    ScenarioFixture, SchedulingPolicy, SweepParameter, SweepTable,
};

/// An error tagged with the pipeline stage it occurred in, so failures print
/// as `error: <stage>: <cause>` and map onto the exit-code contract.
struct CliError {
    stage: &'static str,
    source: CoreError,
}

impl fmt::Display for CliError {
    fn fmt(&self, f: &mut fmt::Formatter<'_>) -> fmt::Result {
        write!(f, "{}: {}", self.stage, self.source)
    }
}

impl CliError {
    fn exit_code(&self) -> i32 {
        match &self.source {
            CoreError::InvalidConfig(_) => 2,
            CoreError::Backend(_) => 3,
            _ => 4,
        }
    }
}

trait StageExt<T> {
    /// Tags the error, if any, with the stage label.
    fn stage(self, stage: &'static str) -> Result<T, CliError>;
}

impl<T, E: Into<CoreError>> StageExt<T> for Result<T, E> {
    fn stage(self, stage: &'static str) -> Result<T, CliError> {
        self.map_err(|e| CliError {
            stage,
            source: e.into(),
        })
    }
}

/// A configuration/usage error (exit code 2).
fn usage(message: impl Into<String>) -> CliError {
    CliError {
        stage: "config",
        source: CoreError::InvalidConfig(message.into()),
    }
}

#[derive(Parser)]
#[command(
    name = "veridex",
    version,
    about = "Build evidence graphs from document claims and arbitrate their conflicts",
    propagate_version = true
)]
struct Cli {
    #[command(subcommand)]
    command: Command,
}

#[derive(Subcommand)]
enum Command {
    /// Extract and embed claims from documents into a claim-pool JSON file.
    Ingest(IngestArgs),
    /// Build the evidence graph from a claim pool or raw documents.
    Build(BuildArgs),
    /// Run iterative conflict arbitration over a saved evidence graph.
    Arbitrate(ArbitrateArgs),
    /// Execute the full pipeline and write all artifacts to a directory.
    Run(RunArgs),
    /// Evaluate one parameter over a grid of values across scenario batches.
    Sweep(SweepArgs),
    /// Re-render a saved graph (or emit a built-in scenario preset).
    Export(ExportArgs),
}

/// Pipeline knobs. Precedence: flags > `--config` file > defaults (for
/// `arbitrate` and manifest re-runs, the config embedded in the input
/// artifact replaces the defaults as the base layer).
#[derive(Args, Clone, Debug, Default)]
struct ConfigArgs {
    /// JSON config file; keys it omits fall back to the shipped defaults.
    #[arg(long, value_name = "PATH", help_heading = "Config")]
    config: Option<PathBuf>,
    /// Query-relevance threshold (keep a node iff cos >= tau-q).
    #[arg(long, value_name = "X", help_heading = "Config")]
    tau_q: Option<f64>,
    /// Candidate-pair similarity threshold.
    #[arg(long, value_name = "X", help_heading = "Config")]
    tau_sim: Option<f64>,
    /// Verifier-confidence threshold for materializing an edge.
    #[arg(long, value_name = "X", help_heading = "Config")]
    tau_conf: Option<f64>,
    /// Acceptance threshold on node credibility.
    #[arg(long, value_name = "X", help_heading = "Config")]
    tau_accept: Option<f64>,
    /// Arbitration-confidence gate for decisive verdicts.
    #[arg(long, value_name = "X", help_heading = "Config")]
    tau_gate: Option<f64>,
    /// Claim-merge cosine threshold.
    #[arg(long, value_name = "X", help_heading = "Config")]
    tau_merge: Option<f64>,
    /// Logit step applied to winner (+) and loser (-).
    #[arg(long, value_name = "X", help_heading = "Config")]
    eta: Option<f64>,
    /// Arbitration calls allowed per round.
    #[arg(long, value_name = "K", help_heading = "Config")]
    budget_k: Option<usize>,
    /// Support-edge budget M retained at pruning.
    #[arg(long, value_name = "M", help_heading = "Config")]
    max_support_edges: Option<usize>,
    /// How the support budget applies: "global" or "per-node".
    #[arg(long, value_name = "MODE", help_heading = "Config")]
    prune_mode: Option<String>,
    /// Maximum arbitration rounds T.
    #[arg(long, value_name = "T", help_heading = "Config")]
    rounds: Option<usize>,
    /// Decisive arbitrations allowed per contradiction pair.
    #[arg(long, value_name = "N", help_heading = "Config")]
    per_pair_cap: Option<u32>,
    /// Root seed for scenario generation and sweeps.
    #[arg(long, value_name = "SEED", help_heading = "Config")]
    seed: Option<u64>,
}

impl ConfigArgs {
    fn resolve(&self, base: PipelineConfig) -> Result<PipelineConfig, CoreError> {
        let mut cfg = match &self.config {
            Some(path) => read_json::<PipelineConfig>(path).map_err(|e| match e {
                // A config file that parses wrong is a config error, not an
                // artifact error; the serde message names the offending key.
                CoreError::Json(cause) => CoreError::InvalidConfig(format!(
                    "config file {}: {cause}",
                    path.display()
                )),
                other => other,
            })?,
            None => base,
        };
        if let Some(v) = self.tau_q {
            cfg.tau_q = v;
        }
        if let Some(v) = self.tau_sim {
            cfg.tau_sim = v;
        }
        if let Some(v) = self.tau_conf {
            cfg.tau_conf = v;
        }
        if let Some(v) = self.tau_accept {
            cfg.tau_accept = v;
        }
        if let Some(v) = self.tau_gate {
            cfg.tau_gate = v;
        }
        if let Some(v) = self.tau_merge {
            cfg.tau_merge = v;
        }
        if let Some(v) = self.eta {
            cfg.eta = v;
        }
        if let Some(v) = self.budget_k {
            cfg.budget_k = v;
        }
        if let Some(v) = self.max_support_edges {
            cfg.max_support_edges = v;
        }
        if let Some(mode) = &self.prune_mode {
            cfg.prune_mode = match mode.to_ascii_lowercase().as_str() {
                "global" => PruneMode::Global,
                "per-node" | "per_node" => PruneMode::PerNode,
                other => {
                    return Err(CoreError::InvalidConfig(format!(
                        "unknown prune mode `{other}` (expected global or per-node)"
                    )))
                }
            };
        }
        if let Some(v) = self.rounds {
            cfg.rounds = v;
        }
        if let Some(v) = self.per_pair_cap {
            cfg.per_pair_cap = v;
        }
        if let Some(v) = self.seed {
            cfg.seed = v;
        }
        cfg.validate()?;
        Ok(cfg)
    }
}

/// Backend selection. The oracle answers from a JSON rule table; the remote
/// backend speaks to an OpenAI-compatible endpoint. The remote credential is
/// read from the environment variable named by `--api-key-env` — it is never
/// written into any artifact.
#[derive(Args, Clone, Debug, Default)]
struct BackendArgs {
    /// Evidence backend: "oracle" or "remote".
    #[arg(long, value_name = "KIND", value_parser = ["oracle", "remote"], help_heading = "Backend")]
    backend: Option<String>,
    /// Oracle rule table (JSON); required for the oracle backend unless a
    /// scenario fixture supplies its own table.
    #[arg(long, value_name = "PATH", help_heading = "Backend")]
    oracle_table: Option<PathBuf>,
    /// Base URL of the remote endpoint (e.g. https://api.example.com/v1).
    #[arg(long, value_name = "URL", help_heading = "Backend")]
    endpoint: Option<String>,
    /// Environment variable holding the remote API credential.
    #[arg(long, value_name = "NAME", help_heading = "Backend")]
    api_key_env: Option<String>,
    /// Remote model identifier.
    #[arg(long, value_name = "MODEL", help_heading = "Backend")]
    model: Option<String>,
    /// Remote per-request timeout in seconds.
    #[arg(long, value_name = "SECS", help_heading = "Backend")]
    timeout_secs: Option<u64>,
    /// Remote retries after the first attempt of each call.
    #[arg(long, value_name = "N", help_heading = "Backend")]
    retries: Option<u32>,
}

impl BackendArgs {
    fn kind(&self) -> &str {
        self.backend.as_deref().unwrap_or("oracle")
    }

    fn build(
        &self,
        tau_gate: f64,
        fixture_table: Option<OracleTable>,
    ) -> Result<Box<dyn EvidenceBackend>, CoreError> {
        match self.kind() {
            "oracle" => {
                let table = match (&self.oracle_table, fixture_table) {
                    (Some(path), _) => read_json::<OracleTable>(path)?,
                    (None, Some(table)) => table,
                    (None, None) => {
                        return Err(CoreError::InvalidConfig(
                            "--backend oracle needs --oracle-table PATH (or a --scenario \
                             fixture carrying its own table)"
                                .into(),
                        ))
                    }
                };
                Ok(Box::new(OracleBackend::new(table, tau_gate)?))
            }
            "remote" => {
                let endpoint = self.endpoint.clone().ok_or_else(|| {
                    CoreError::InvalidConfig("--backend remote needs --endpoint URL".into())
                })?;
                let mut remote = RemoteConfig::new(endpoint);
                remote.api_key_env = self.api_key_env.clone();
                if let Some(model) = &self.model {
                    remote.model = model.clone();
                }
                if let Some(secs) = self.timeout_secs {
                    remote.timeout_secs = secs;
                }
                if let Some(n) = self.retries {
                    remote.retries = n;
                }
                Ok(Box::new(RemoteBackend::new(remote, tau_gate)?))
            }
            other => Err(CoreError::InvalidConfig(format!(
                "unknown backend `{other}` (expected oracle or remote)"
            ))),
        }
    }
}

#[derive(Args)]
struct IngestArgs {
    /// Documents: a JSON file (list of {id, text}) or a directory of .txt
    /// files (document id = file stem, read in name order).
    #[arg(long, value_name = "PATH")]
    docs: Option<PathBuf>,
    /// Scenario fixture supplying documents, query, and oracle table.
    #[arg(long, value_name = "PATH")]
    scenario: Option<PathBuf>,
    /// Query to store in the pool (defaults to the fixture's query).
    #[arg(long, value_name = "TEXT")]
    query: Option<String>,
    /// Output claim-pool JSON file.
    #[arg(long, value_name = "PATH")]
    out: PathBuf,
    #[command(flatten)]
    cfg: ConfigArgs,
    #[command(flatten)]
    backend: BackendArgs,
}

#[derive(Args)]
struct BuildArgs {
    /// Claim-pool JSON produced by `ingest`.
    #[arg(long, value_name = "PATH")]
    pool: Option<PathBuf>,
    /// Documents: JSON list or directory of .txt files.
    #[arg(long, value_name = "PATH")]
    docs: Option<PathBuf>,
    /// Scenario fixture supplying documents, query, and oracle table.
    #[arg(long, value_name = "PATH")]
    scenario: Option<PathBuf>,
    /// Query text (overrides the pool's or fixture's stored query).
    #[arg(long, value_name = "TEXT")]
    query: Option<String>,
    /// Output graph JSON file.
    #[arg(long, value_name = "PATH")]
    out: PathBuf,
    #[command(flatten)]
    cfg: ConfigArgs,
    #[command(flatten)]
    backend: BackendArgs,
}

#[derive(Args)]
struct ArbitrateArgs {
    /// Input graph JSON (as written by `build` or `run`).
    #[arg(long, value_name = "PATH")]
    graph: PathBuf,
    /// Output JSON for the arbitrated graph.
    #[arg(long, value_name = "PATH")]
    out: PathBuf,
    /// Output JSON for the arbitration trace (default: OUT with a
    /// `.trace.json` suffix).
    #[arg(long, value_name = "PATH")]
    trace: Option<PathBuf>,
    /// Scheduling policy: conflict-aware, hard-first, or easy-first.
    #[arg(long, value_name = "POLICY")]
    policy: Option<String>,
    #[command(flatten)]
    cfg: ConfigArgs,
    #[command(flatten)]
    backend: BackendArgs,
}

#[derive(Args)]
struct RunArgs {
    /// Query text (required unless a fixture or manifest supplies it).
    #[arg(long, value_name = "TEXT")]
    query: Option<String>,
    /// Documents: JSON list or directory of .txt files.
    #[arg(long, value_name = "PATH")]
    docs: Option<PathBuf>,
    /// Scenario fixture supplying documents, query, and oracle table.
    #[arg(long, value_name = "PATH")]
    scenario: Option<PathBuf>,
    /// Re-run a previous run from its manifest (artifacts are rewritten next
    /// to the manifest; oracle runs reproduce byte-identical artifacts).
    #[arg(long, value_name = "PATH")]
    manifest: Option<PathBuf>,
    /// Artifact directory (created if missing).
    #[arg(long, value_name = "DIR")]
    out: Option<PathBuf>,
    /// Scheduling policy: conflict-aware, hard-first, or easy-first.
    #[arg(long, value_name = "POLICY")]
    policy: Option<String>,
    #[command(flatten)]
    cfg: ConfigArgs,
    #[command(flatten)]
    backend: BackendArgs,
}

#[derive(Args)]
struct SweepArgs {
    /// Parameter to sweep: tau-q, support-budget, arbitration-budget, or
    /// policy.
    #[arg(long, value_name = "NAME")]
    parameter: String,
    /// Comma-separated grid values (e.g. "0,0.3,0.6" or
    /// "conflict-aware,easy-first").
    #[arg(long, value_name = "V1,V2,..")]
    grid: String,
    /// Evaluate a single scenario fixture instead of a generated batch.
    #[arg(long, value_name = "PATH")]
    scenario: Option<PathBuf>,
    /// Noise-knob JSON describing the scenario family to generate.
    #[arg(long, value_name = "PATH")]
    knobs: Option<PathBuf>,
    /// Number of scenarios to generate from --knobs.
    #[arg(long, value_name = "N", default_value_t = 8)]
    scenarios: usize,
    /// Seed for the generated batch (default: the config seed).
    #[arg(long, value_name = "SEED")]
    batch_seed: Option<u64>,
    /// Base scheduling policy (grid values override it when sweeping
    /// policy).
    #[arg(long, value_name = "POLICY")]
    policy: Option<String>,
    /// Output format.
    #[arg(long, value_name = "FMT", value_parser = ["csv", "json"], default_value = "csv")]
    export: String,
    /// Output file (default: stdout).
    #[arg(long, value_name = "PATH")]
    out: Option<PathBuf>,
    #[command(flatten)]
    cfg: ConfigArgs,
}

#[derive(Args)]
struct ExportArgs {
    /// Graph JSON to re-render.
    #[arg(long, value_name = "PATH")]
    graph: Option<PathBuf>,
    /// Emit a built-in scenario preset instead (available: eas).
    #[arg(long, value_name = "NAME")]
    preset: Option<String>,
    /// Output format for --graph: normalized artifact JSON, Graphviz DOT, or
    /// a node-summary CSV.
    #[arg(long, value_name = "FMT", value_parser = ["json", "dot", "csv"], default_value = "json")]
    export: String,
    /// Output file (default: stdout).
    #[arg(long, value_name = "PATH")]
    out: Option<PathBuf>,
}

fn main() {
    env_logger::Builder::from_env(env_logger::Env::default().default_filter_or("warn"))
        .format_timestamp(None)
        .init();
    let cli = Cli::parse();
    let code = match dispatch(cli) {
        Ok(code) => code,
        Err(e) => {
            eprintln!("error: {e}");
            e.exit_code()
        }
    };
    std::process::exit(code);
}

fn dispatch(cli: Cli) -> Result<i32, CliError> {
    match cli.command {
        Command::Ingest(args) => cmd_ingest(args),
        Command::Build(args) => cmd_build(args),
        Command::Arbitrate(args) => cmd_arbitrate(args),
        Command::Run(args) => cmd_run(args),
        Command::Sweep(args) => cmd_sweep(args),
        Command::Export(args) => cmd_export(args),
    }
}

/// Resolved input side of a run: where documents, query, and (optionally) an
/// oracle table come from.
struct Inputs {
    documents: Vec<Document>,
    query: Option<String>,
    fixture: Option<ScenarioFixture>,
    /// Provenance for the manifest, as absolute paths.
    scenario_path: Option<String>,
    docs_path: Option<String>,
}

fn absolute_string(path: &Path) -> String {
    std::path::absolute(path)
        .unwrap_or_else(|_| path.to_path_buf())
        .display()
        .to_string()
}

/// Loads documents from a JSON list or a directory of `.txt` files.
fn load_documents(path: &Path) -> Result<Vec<Document>, CoreError> {
    let meta = fs::metadata(path)?;
    let docs: Vec<Document> = if meta.is_dir() {
        let mut files: Vec<PathBuf> = fs::read_dir(path)?
            .collect::<std::io::Result<Vec<_>>>()?
            .into_iter()
            .map(|entry| entry.path())
            .filter(|p| p.extension().is_some_and(|ext| ext == "txt"))
            .collect();
        files.sort();
        let mut docs = Vec::with_capacity(files.len());
        for file in files {
            let id = file
                .file_stem()
                .map(|stem| stem.to_string_lossy().into_owned())
                .unwrap_or_default();
            docs.push(Document::new(id, fs::read_to_string(&file)?));
        }
        if docs.is_empty() {
            return Err(CoreError::Io(std::io::Error::new(
                std::io::ErrorKind::NotFound,
                format!("no .txt documents found in {}", path.display()),
            )));
        }
        docs
    } else {
        read_json(path)?
    };
    let mut seen = std::collections::BTreeSet::new();
    for doc in &docs {
        if !seen.insert(doc.id.as_str()) {
            return Err(CoreError::InvalidConfig(format!(
                "duplicate document id `{}`",
                doc.id
            )));
        }
    }
    Ok(docs)
}

/// Resolves `--docs` / `--scenario` / `--query` into concrete inputs.
fn gather_inputs(
    docs: &Option<PathBuf>,
    scenario: &Option<PathBuf>,
    query: Option<&str>,
) -> Result<Inputs, CliError> {
    match (docs, scenario) {
        (Some(_), Some(_)) => Err(usage("give --docs or --scenario, not both")),
        (None, None) => Err(usage("one of --docs or --scenario is required")),
        (Some(path), None) => Ok(Inputs {
            documents: load_documents(path).stage("ingest")?,
            query: query.map(str::to_string),
            fixture: None,
            scenario_path: None,
            docs_path: Some(absolute_string(path)),
        }),
        (None, Some(path)) => {
            let fixture: ScenarioFixture = read_json(path).stage("read")?;
            Ok(Inputs {
                documents: fixture.scenario.documents.clone(),
                query: Some(
                    query
                        .map(str::to_string)
                        .unwrap_or_else(|| fixture.scenario.query.clone()),
                ),
                fixture: Some(fixture),
                scenario_path: Some(absolute_string(path)),
                docs_path: None,
            })
        }
    }
}

fn parse_policy(raw: Option<&str>) -> Result<SchedulingPolicy, CoreError> {
    match raw {
        Some(text) => text.parse(),
        None => Ok(SchedulingPolicy::default()),
    }
}

/// Extracts claims from documents and embeds them (one embed call for the
/// whole pool).
fn extract_and_embed(
    documents: &[Document],
    backend: &dyn EvidenceBackend,
) -> Result<Vec<veridex::AtomicClaim>, CliError> {
    let mut claims = Vec::new();
    for doc in documents {
        claims.extend(backend.extract_claims(doc).stage("extract")?);
    }
    if !claims.is_empty() {
        let texts: Vec<String> = claims.iter().map(|c| c.text.clone()).collect();
        let vectors = backend.embed(&texts).stage("embed")?;
        if vectors.len() != claims.len() {
            return Err(CliError {
                stage: "embed",
                source: CoreError::InvalidGraph(format!(
                    "backend returned {} embeddings for {} claims",
                    vectors.len(),
                    claims.len()
                )),
            });
        }
        for (claim, vector) in claims.iter_mut().zip(vectors) {
            claim.embedding = Some(vector);
        }
    }
    Ok(claims)
}

fn cmd_ingest(args: IngestArgs) -> Result<i32, CliError> {
    let cfg = args.cfg.resolve(PipelineConfig::default()).stage("config")?;
    let inputs = gather_inputs(&args.docs, &args.scenario, args.query.as_deref())?;
    let table = inputs.fixture.as_ref().map(|f| f.oracle.clone());
    let backend = args.backend.build(cfg.tau_gate, table).stage("backend")?;
    let claims = extract_and_embed(&inputs.documents, backend.as_ref())?;
    let pool = ClaimPool {
        query: inputs.query.unwrap_or_default(),
        claims,
    };
    write_json(&args.out, &pool).stage("write")?;
    println!(
        "ingested {} document(s) -> {} claim(s) -> {}",
        inputs.documents.len(),
        pool.claims.len(),
        args.out.display()
    );
    Ok(0)
}

fn cmd_build(args: BuildArgs) -> Result<i32, CliError> {
    let cfg = args.cfg.resolve(PipelineConfig::default()).stage("config")?;
    let selected = [&args.pool, &args.docs, &args.scenario]
        .iter()
        .filter(|o| o.is_some())
        .count();
    if selected != 1 {
        return Err(usage("exactly one of --pool, --docs or --scenario is required"));
    }

    let (query, claims, table) = if let Some(path) = &args.pool {
        let pool: ClaimPool = read_json(path).stage("read")?;
        let query = args.query.clone().unwrap_or(pool.query);
        (query, pool.claims, None)
    } else {
        let inputs = gather_inputs(&args.docs, &args.scenario, args.query.as_deref())?;
        let table = inputs.fixture.as_ref().map(|f| f.oracle.clone());
        let backend = args
            .backend
            .build(cfg.tau_gate, table.clone())
            .stage("backend")?;
        let mut claims = Vec::new();
        for doc in &inputs.documents {
            claims.extend(backend.extract_claims(doc).stage("extract")?);
        }
        (inputs.query.unwrap_or_default(), claims, table)
    };
    if query.trim().is_empty() {
        return Err(usage(
            "a non-empty query is required (--query, or one stored in the pool/fixture)",
        ));
    }

    let backend = args.backend.build(cfg.tau_gate, table).stage("backend")?;
    let graph = build_graph_from_pool(&query, claims, backend.as_ref(), &cfg).stage("build")?;
    save_graph(&args.out, &graph, &cfg).stage("write")?;
    println!(
        "built graph: {} node(s), {} support edge(s), {} contradiction edge(s) -> {}",
        graph.nodes.len(),
        graph.support_edges.len(),
        graph.contradiction_edges.len(),
        args.out.display()
    );
    Ok(0)
}

fn decisive_steps(trace: &ArbitrationTrace) -> usize {
    trace
        .rounds
        .iter()
        .flat_map(|round| &round.steps)
        .filter(|step| step.verdict.is_decisive())
        .count()
}

fn cmd_arbitrate(args: ArbitrateArgs) -> Result<i32, CliError> {
    let (mut graph, embedded) = load_graph(&args.graph).stage("read")?;
    let cfg = args.cfg.resolve(embedded).stage("config")?;
    let policy = parse_policy(args.policy.as_deref()).stage("config")?;
    let backend = args.backend.build(cfg.tau_gate, None).stage("backend")?;

    let trace = run_arbitration(&mut graph, backend.as_ref(), &cfg, policy).stage("arbitrate")?;
    save_graph(&args.out, &graph, &cfg).stage("write")?;
    let trace_path = args.trace.clone().unwrap_or_else(|| {
        let mut path = args.out.clone();
        path.set_extension("trace.json");
        path
    });
    save_trace(&trace_path, &trace).stage("write")?;

    let validated = validated_set(&graph, cfg.tau_accept);
    println!(
        "arbitration ({}): {} round(s) used, {} decisive step(s), {} pair(s) still active, \
         {} validated -> {} + {}",
        policy,
        trace.rounds_used,
        decisive_steps(&trace),
        trace.remaining_active,
        validated.len(),
        args.out.display(),
        trace_path.display()
    );
    Ok(if trace.converged { 0 } else { 1 })
}

fn cmd_run(args: RunArgs) -> Result<i32, CliError> {
    if let Some(manifest_path) = &args.manifest {
        return rerun_from_manifest(&args, manifest_path);
    }
    let out_dir = args
        .out
        .clone()
        .ok_or_else(|| usage("--out DIR is required (unless re-running via --manifest)"))?;
    let cfg = args.cfg.resolve(PipelineConfig::default()).stage("config")?;
    let policy = parse_policy(args.policy.as_deref()).stage("config")?;
    let inputs = gather_inputs(&args.docs, &args.scenario, args.query.as_deref())?;
    execute_run(&out_dir, inputs, &cfg, policy, &args.backend)
}

fn rerun_from_manifest(args: &RunArgs, manifest_path: &Path) -> Result<i32, CliError> {
    let manifest: RunManifest = read_json(manifest_path).stage("read")?;
    let out_dir = manifest_path
        .parent()
        .filter(|p| !p.as_os_str().is_empty())
        .unwrap_or_else(|| Path::new("."))
        .to_path_buf();
    let cfg = args.cfg.resolve(manifest.config.clone()).stage("config")?;
    let policy = match args.policy.as_deref() {
        Some(raw) => raw.parse().stage("config")?,
        None => manifest.policy,
    };

    // Resolve the recorded input paths (relative ones against the manifest's
    // directory) and rebuild the input set exactly as the original run saw it.
    let resolve = |stored: &String| -> PathBuf {
        let path = PathBuf::from(stored);
        if path.is_absolute() {
            path
        } else {
            out_dir.join(path)
        }
    };
    let scenario = manifest.scenario.as_ref().map(&resolve);
    let docs = manifest.documents.as_ref().map(&resolve);
    let query = args.query.clone().unwrap_or(manifest.query);
    let inputs = gather_inputs(&docs, &scenario, Some(query.as_str()))?;

    let mut backend_args = args.backend.clone();
    if backend_args.backend.is_none() {
        backend_args.backend = Some(manifest.backend.clone());
    }
    if backend_args.oracle_table.is_none() {
        backend_args.oracle_table = manifest.oracle_table.as_ref().map(&resolve);
    }
    execute_run(&out_dir, inputs, &cfg, policy, &backend_args)
}

fn execute_run(
    out_dir: &Path,
    inputs: Inputs,
    cfg: &PipelineConfig,
    policy: SchedulingPolicy,
    backend_args: &BackendArgs,
) -> Result<i32, CliError> {
    let query = inputs.query.clone().unwrap_or_default();
    if query.trim().is_empty() {
        return Err(usage("a non-empty --query is required"));
    }
    fs::create_dir_all(out_dir).stage("write")?;

    let table = inputs.fixture.as_ref().map(|f| f.oracle.clone());
    let inner = backend_args.build(cfg.tau_gate, table).stage("backend")?;
    let backend = CountingBackend::new(inner);

    let claims = extract_and_embed(&inputs.documents, &backend)?;
    let pool = ClaimPool {
        query: query.clone(),
        claims,
    };
    write_json(&out_dir.join("pool.json"), &pool).stage("write")?;

    let graph =
        build_graph_from_pool(&query, pool.claims.clone(), &backend, cfg).stage("build")?;
    save_graph(&out_dir.join("graph.json"), &graph, cfg).stage("write")?;
    fs::write(out_dir.join("graph.dot"), graph_to_dot(&graph, cfg)).stage("write")?;

    let mut arbitrated = graph.clone();
    let mut trace =
        run_arbitration(&mut arbitrated, &backend, cfg, policy).stage("arbitrate")?;
    trace.verifier_calls = Some(backend.counts().verify);
    save_trace(&out_dir.join("trace.json"), &trace).stage("write")?;
    fs::write(
        out_dir.join("validated.txt"),
        render_validated_context(&arbitrated, cfg),
    )
    .stage("write")?;

    let manifest = RunManifest {
        query: query.clone(),
        config: cfg.clone(),
        policy,
        backend: backend_args.kind().to_string(),
        scenario: inputs.scenario_path.clone(),
        documents: inputs.docs_path.clone(),
        oracle_table: backend_args.oracle_table.as_deref().map(absolute_string),
        artifacts: ManifestArtifacts {
            pool: "pool.json".into(),
            graph: "graph.json".into(),
            dot: "graph.dot".into(),
            trace: "trace.json".into(),
            context: "validated.txt".into(),
        },
    };
    write_json(&out_dir.join("manifest.json"), &manifest).stage("write")?;

    let validated = validated_set(&arbitrated, cfg.tau_accept);
    let counts = backend.counts();
    println!("run complete -> {}", out_dir.display());
    println!(
        "  graph: {} node(s), {} support edge(s), {} contradiction edge(s)",
        graph.nodes.len(),
        graph.support_edges.len(),
        graph.contradiction_edges.len()
    );
    println!(
        "  arbitration ({}): {} round(s) used, {} decisive step(s), {} pair(s) still active ({})",
        policy,
        trace.rounds_used,
        decisive_steps(&trace),
        trace.remaining_active,
        if trace.converged {
            "converged"
        } else {
            "round budget exhausted"
        }
    );
    println!(
        "  validated: {} node(s); backend calls: extract {}, embed {}, verify {}, arbitrate {}",
        validated.len(),
        counts.extract,
        counts.embed,
        counts.verify,
        counts.arbitrate
    );
    if let Some(fixture) = &inputs.fixture {
        let ids: Vec<String> = validated.iter().map(|n| n.id.clone()).collect();
        match evaluate_run(&fixture.scenario, &pool.claims, &arbitrated, &ids, &trace) {
            Ok(metrics) => print_metrics(&metrics),
            Err(e) => log::warn!("could not score the run against its scenario labels: {e}"),
        }
    }
    Ok(if trace.converged { 0 } else { 1 })
}

fn print_metrics(metrics: &RunMetrics) {
    println!(
        "  metrics: recall {:.4}, precision {:.4}, density {:.4}, calls {}",
        metrics.recall, metrics.precision, metrics.density, metrics.calls
    );
}

fn cmd_sweep(args: SweepArgs) -> Result<i32, CliError> {
    let cfg = args.cfg.resolve(PipelineConfig::default()).stage("config")?;
    let parameter: SweepParameter = args.parameter.parse().stage("config")?;
    let grid: Vec<String> = args
        .grid
        .split(',')
        .map(|v| v.trim().to_string())
        .filter(|v| !v.is_empty())
        .collect();
    if grid.is_empty() {
        return Err(usage("--grid needs at least one value"));
    }
    let policy = parse_policy(args.policy.as_deref()).stage("config")?;

    let fixtures: Vec<ScenarioFixture> = match (&args.scenario, &args.knobs) {
        (Some(_), Some(_)) => return Err(usage("give --scenario or --knobs, not both")),
        (Some(path), None) => vec![read_json(path).stage("read")?],
        (None, Some(path)) => {
            let knobs: NoiseKnobs = read_json(path).stage("read")?;
            if args.scenarios == 0 {
                return Err(usage("--scenarios must be >= 1"));
            }
            scenario_batch(&knobs, args.batch_seed.unwrap_or(cfg.seed), args.scenarios)
        }
        (None, None) => {
            return Err(usage(
                "scenario source required: --scenario FIXTURE or --knobs JSON",
            ))
        }
    };

    let table = sweep(parameter, &grid, &fixtures, &cfg, policy).stage("sweep")?;
    let rendered = render_sweep(&table, &args.export).stage("sweep")?;
    match &args.out {
        Some(path) => {
            fs::write(path, rendered).stage("write")?;
            println!(
                "swept {} over {} value(s) x {} scenario(s) -> {}",
                parameter,
                table.rows.len(),
                fixtures.len(),
                path.display()
            );
        }
        None => print!("{rendered}"),
    }
    Ok(0)
}

fn render_sweep(table: &SweepTable, format: &str) -> Result<String, CoreError> {
    match format {
        "csv" => Ok(table.to_csv()),
        "json" => {
            let mut text = serde_json::to_string_pretty(table)?;
            text.push('\n');
            Ok(text)
        }
        other => Err(CoreError::InvalidConfig(format!(
            "unknown sweep format `{other}` (expected csv or json)"
        ))),
    }
}

fn csv_quote(field: &str) -> String {
    format!("\"{}\"", field.replace('"', "\"\""))
}

/// Per-node summary CSV for a saved graph.
fn graph_to_csv(graph: &EvidenceGraph) -> String {
    let mut out = String::from("id,probability,logit,sources,canonical_text\n");
    for node in graph.nodes.values() {
        let sources: Vec<&str> = node.sources.iter().map(String::as_str).collect();
        out.push_str(&format!(
            "{},{:.6},{:.6},{},{}\n",
            node.id,
            node.probability(),
            node.logit,
            csv_quote(&sources.join("|")),
            csv_quote(&node.canonical_text)
        ));
    }
    out
}

fn cmd_export(args: ExportArgs) -> Result<i32, CliError> {
    if let Some(name) = &args.preset {
        if name != "eas" {
            return Err(usage(format!(
                "unknown preset `{name}` (available: eas)"
            )));
        }
        let fixture = eas_preset();
        let mut text = serde_json::to_string_pretty(&fixture).stage("export")?;
        text.push('\n');
        return emit(&args.out, &text, "preset eas");
    }

    let graph_path = args
        .graph
        .as_ref()
        .ok_or_else(|| usage("either --graph PATH or --preset NAME is required"))?;
    let (graph, cfg) = load_graph(graph_path).stage("read")?;
    let rendered = match args.export.as_str() {
        "json" => graph_to_json(&graph, &cfg).stage("export")?,
        "dot" => graph_to_dot(&graph, &cfg),
        "csv" => graph_to_csv(&graph),
        other => {
            return Err(usage(format!(
                "unknown export format `{other}` (expected json, dot or csv)"
            )))
        }
    };
    emit(&args.out, &rendered, &args.export)
}

fn emit(out: &Option<PathBuf>, text: &str, what: &str) -> Result<i32, CliError> {
    match out {
        Some(path) => {
            fs::write(path, text).stage("write")?;
            println!("exported {what} -> {}", path.display());
        }
        None => print!("{text}"),
    }
    Ok(0)
}
