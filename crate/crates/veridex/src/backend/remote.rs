//! OpenAI-compatible remote backend.
//!
//! Talks to `{endpoint}/chat/completions` for extraction, relation
//! verification, and arbitration, and to `{endpoint}/embeddings` for
//! embeddings. Requests pin `temperature` to 0 for best-effort determinism.
//! The credential is read from the environment variable *named* in the
//! config — the key itself is never written to any file or artifact.
//!
//! Every chat call demands strict JSON back (the prompt templates below are
//! part of the tool's contract). A malformed or failed response is retried up
//! to [`RemoteConfig::retries`] times; after that the handling is fail-closed
//! by default:
//!
//! * extraction — fails the ingest (there is nothing safe to substitute);
//! * relation verification — returns `neutral/0.0`, i.e. no edge from noise;
//! * arbitration — returns an abstention (`gate_w = 0`), i.e. no update.
//!
//! Setting `fail_closed: false` propagates the error instead, for callers
//! that prefer to halt.

use std::sync::{Condvar, Mutex};
use std::time::Duration;

use serde::{Deserialize, Serialize};
use serde_json::json;

use super::{
    normalize_entity, ArbitrationVerdict, EvidenceBackend, RelationKind, RelationVerdict,
    CONTEXT_CAP,
};
use crate::error::BackendError;
use crate::model::{AtomicClaim, ClaimNode, Document};

/// Connection settings for a [`RemoteBackend`].
#[derive(Clone, Debug, PartialEq, Eq, Serialize, Deserialize)]
pub struct RemoteConfig {
    /// Base URL, e.g. `https://api.example.com/v1`.
    pub endpoint: String,
    /// Name of the environment variable holding the API key; `None` sends no
    /// Authorization header (e.g. local servers).
    #[serde(default)]
    pub api_key_env: Option<String>,
    /// Model identifier placed in each request.
    #[serde(default = "default_model")]
    pub model: String,
    /// Maximum concurrent in-flight requests.
    #[serde(default = "default_max_in_flight")]
    pub max_in_flight: usize,
    /// Retries after the first attempt of each call.
    #[serde(default = "default_retries")]
    pub retries: u32,
    /// Whether verification/arbitration failures degrade to neutral/abstain
    /// verdicts instead of propagating.
    #[serde(default = "default_fail_closed")]
    pub fail_closed: bool,
    /// Per-request timeout in seconds.
    #[serde(default = "default_timeout_secs")]
    pub timeout_secs: u64,
}

fn default_model() -> String {
    "default".into()
}
fn default_max_in_flight() -> usize {
    4
}
fn default_retries() -> u32 {
    2
}
fn default_fail_closed() -> bool {
    true
}
fn default_timeout_secs() -> u64 {
    60
}

impl RemoteConfig {
    pub fn new(endpoint: impl Into<String>) -> Self {
        Self {
            endpoint: endpoint.into(),
            api_key_env: None,
            model: default_model(),
            max_in_flight: default_max_in_flight(),
            retries: default_retries(),
            fail_closed: default_fail_closed(),
            timeout_secs: default_timeout_secs(),
        }
    }
}

/// Counting semaphore bounding in-flight requests.
struct Semaphore {
    permits: Mutex<usize>,
    available: Condvar,
}

impl Semaphore {
    fn new(permits: usize) -> Self {
        Self {
            permits: Mutex::new(permits.max(1)),
            available: Condvar::new(),
        }
    }

    fn acquire(&self) -> SemaphoreGuard<'_> {
        let mut permits = self.permits.lock().unwrap();
        while *permits == 0 {
            permits = self.available.wait(permits).unwrap();
        }
        *permits -= 1;
        SemaphoreGuard { semaphore: self }
    }
}

struct SemaphoreGuard<'a> {
    semaphore: &'a Semaphore,
}

impl Drop for SemaphoreGuard<'_> {
    fn drop(&mut self) {
        *self.semaphore.permits.lock().unwrap() += 1;
        self.semaphore.available.notify_one();
    }
}

/// Evidence backend over an OpenAI-compatible HTTP API.
pub struct RemoteBackend {
    config: RemoteConfig,
    api_key: Option<String>,
    tau_gate: f64,
    client: reqwest::blocking::Client,
    in_flight: Semaphore,
}

impl RemoteBackend {
    /// Builds the client, resolving the credential from the configured
    /// environment variable. Errors if that variable is named but unset.
    pub fn new(config: RemoteConfig, tau_gate: f64) -> Result<Self, BackendError> {
        let api_key = match &config.api_key_env {
            Some(var) => Some(
                std::env::var(var).map_err(|_| BackendError::MissingCredential(var.clone()))?,
            ),
            None => None,
        };
        let client = reqwest::blocking::Client::builder()
            .timeout(Duration::from_secs(config.timeout_secs))
            .build()
            .map_err(|e| BackendError::Transport(e.to_string()))?;
        let in_flight = Semaphore::new(config.max_in_flight);
        Ok(Self {
            config,
            api_key,
            tau_gate,
            client,
            in_flight,
        })
    }

    fn url(&self, path: &str) -> String {
        format!("{}/{path}", self.config.endpoint.trim_end_matches('/'))
    }

    fn post(&self, path: &str, body: &serde_json::Value) -> Result<serde_json::Value, BackendError> {
        let _permit = self.in_flight.acquire();
        let mut request = self.client.post(self.url(path)).json(body);
        if let Some(key) = &self.api_key {
            request = request.bearer_auth(key);
        }
        let response = request
            .send()
            .map_err(|e| BackendError::Transport(e.to_string()))?;
        let status = response.status();
        if !status.is_success() {
            let body = response.text().unwrap_or_default();
            return Err(BackendError::Transport(format!(
                "{path} returned {status}: {}",
                body.chars().take(200).collect::<String>()
            )));
        }
        response
            .json()
            .map_err(|e| BackendError::Transport(format!("{path} body unreadable: {e}")))
    }

    /// One chat-completion round-trip; returns the assistant message content.
    fn chat(&self, prompt: &str) -> Result<String, BackendError> {
        let body = json!({
            "model": self.config.model,
            "temperature": 0.0,
            "messages": [{"role": "user", "content": prompt}],
        });
        let value = self.post("chat/completions", &body)?;
        value
            .pointer("/choices/0/message/content")
            .and_then(|v| v.as_str())
            .map(str::to_string)
            .ok_or_else(|| BackendError::Transport("response carries no message content".into()))
    }

    /// Runs `attempt` with retries; classifies the terminal failure.
    fn with_retries<T>(
        &self,
        what: &str,
        attempt: impl Fn() -> Result<T, BackendError>,
    ) -> Result<T, BackendError> {
        let attempts = 1 + self.config.retries;
        let mut last = None;
        for n in 1..=attempts {
            match attempt() {
                Ok(value) => return Ok(value),
                Err(err) => {
                    log::warn!("{what} attempt {n}/{attempts} failed: {err}");
                    last = Some(err);
                }
            }
        }
        Err(match last.expect("at least one attempt ran") {
            BackendError::Transport(detail) => BackendError::Transport(detail),
            other => BackendError::Malformed {
                attempts,
                detail: other.to_string(),
            },
        })
    }
}

/// Strips a Markdown code fence if the model wrapped its JSON in one.
fn strip_fence(content: &str) -> &str {
    let trimmed = content.trim();
    let Some(inner) = trimmed.strip_prefix("```") else {
        return trimmed;
    };
    let inner = inner.strip_prefix("json").unwrap_or(inner);
    inner.strip_suffix("```").unwrap_or(inner).trim()
}

fn parse_reply<T: serde::de::DeserializeOwned>(content: &str) -> Result<T, BackendError> {
    serde_json::from_str(strip_fence(content)).map_err(|e| BackendError::Malformed {
        attempts: 1,
        detail: format!("{e}; content: {}", content.chars().take(120).collect::<String>()),
    })
}

#[derive(Deserialize)]
struct ExtractedClaimReply {
    text: String,
    #[serde(default)]
    entities: Vec<String>,
}

#[derive(Deserialize)]
struct RelationReply {
    relation: String,
    confidence: f64,
}

#[derive(Deserialize)]
struct ArbitrationReply {
    winner: String,
    confidence: f64,
}

fn extraction_prompt(doc: &Document) -> String {
    format!(
        "Decompose the document below into atomic claims: minimal, self-contained, \
         independently verifiable factual statements. Resolve pronouns so each claim \
         stands alone. Respond with ONLY a JSON array, no prose, where each element is \
         {{\"text\": string, \"entities\": [string, ...]}} and entities lists the named \
         entities and literal values the claim mentions.\n\nDocument {id}:\n{text}",
        id = doc.id,
        text = doc.text,
    )
}

fn relation_prompt(first: &str, second: &str) -> String {
    format!(
        "Classify the relation between the two statements. Answer \"support\" if they \
         corroborate the same fact, \"contradiction\" if they cannot both be true, and \
         \"neutral\" otherwise. Respond with ONLY a JSON object \
         {{\"relation\": \"support\"|\"contradiction\"|\"neutral\", \"confidence\": number in [0,1]}}.\
         \n\nStatement 1: {first}\nStatement 2: {second}"
    )
}

fn arbitration_prompt(first: &ClaimNode, second: &ClaimNode, ctx: &[&ClaimNode]) -> String {
    let mut rendered_ctx = String::new();
    if ctx.is_empty() {
        rendered_ctx.push_str("(none)\n");
    }
    for (i, node) in ctx.iter().enumerate() {
        rendered_ctx.push_str(&format!("{}. {}\n", i + 1, node.canonical_text));
    }
    format!(
        "Two claims conflict; exactly one should prevail. Weigh the supporting context \
         below and decide which claim is better substantiated. Respond with ONLY a JSON \
         object {{\"winner\": \"A\"|\"B\", \"confidence\": number in [0,1]}}.\n\n\
         Claim A: {a}\nClaim B: {b}\n\nSupporting context:\n{rendered_ctx}",
        a = first.canonical_text,
        b = second.canonical_text,
    )
}

impl EvidenceBackend for RemoteBackend {
    fn extract_claims(&self, doc: &Document) -> Result<Vec<AtomicClaim>, BackendError> {
        // Extraction has no safe fallback: failures propagate after retries.
        let replies: Vec<ExtractedClaimReply> = self.with_retries("extract_claims", || {
            parse_reply(&self.chat(&extraction_prompt(doc))?)
        })?;
        Ok(replies
            .into_iter()
            .enumerate()
            .map(|(i, reply)| AtomicClaim {
                id: format!("{}#{i:02}", doc.id),
                text: reply.text,
                source_doc: doc.id.clone(),
                entities: reply.entities.iter().map(|e| normalize_entity(e)).collect(),
                embedding: None,
            })
            .collect())
    }

    fn embed(&self, texts: &[String]) -> Result<Vec<Vec<f64>>, BackendError> {
        if texts.is_empty() {
            return Ok(Vec::new());
        }
        let body = json!({"model": self.config.model, "input": texts});
        // Validation runs inside the retry loop: a response that parses as
        // HTTP but carries a bad payload gets the same retries a garbled
        // chat reply does. No fail-closed fallback exists for embeddings.
        self.with_retries("embed", || {
            let value = self.post("embeddings", &body)?;
            let data = value
                .get("data")
                .and_then(|d| d.as_array())
                .ok_or_else(|| BackendError::Malformed {
                    attempts: 1,
                    detail: "embeddings response has no data array".into(),
                })?;
            if data.len() != texts.len() {
                return Err(BackendError::Malformed {
                    attempts: 1,
                    detail: format!("asked for {} embeddings, got {}", texts.len(), data.len()),
                });
            }
            data.iter()
                .map(|datum| {
                    let mut vector: Vec<f64> = datum
                        .get("embedding")
                        .and_then(|e| serde_json::from_value(e.clone()).ok())
                        .ok_or_else(|| BackendError::Malformed {
                            attempts: 1,
                            detail: "embedding datum is not a float array".into(),
                        })?;
                    let norm = vector.iter().map(|x| x * x).sum::<f64>().sqrt();
                    if norm == 0.0 || !norm.is_finite() {
                        return Err(BackendError::Malformed {
                            attempts: 1,
                            detail: "embedding has zero or non-finite norm".into(),
                        });
                    }
                    for x in &mut vector {
                        *x /= norm;
                    }
                    Ok(vector)
                })
                .collect()
        })
    }

    fn verify_relation(
        &self,
        a: &ClaimNode,
        b: &ClaimNode,
    ) -> Result<RelationVerdict, BackendError> {
        // Canonicalize pair order so the verdict is symmetric by construction.
        let (first, second) = if a.canonical_text <= b.canonical_text {
            (&a.canonical_text, &b.canonical_text)
        } else {
            (&b.canonical_text, &a.canonical_text)
        };
        let outcome = self.with_retries("verify_relation", || {
            let reply: RelationReply = parse_reply(&self.chat(&relation_prompt(first, second))?)?;
            let relation = match reply.relation.to_lowercase().as_str() {
                "support" => RelationKind::Support,
                "contradiction" => RelationKind::Contradiction,
                "neutral" => RelationKind::Neutral,
                other => {
                    return Err(BackendError::Malformed {
                        attempts: 1,
                        detail: format!("unknown relation {other:?}"),
                    })
                }
            };
            Ok(RelationVerdict {
                relation,
                confidence: reply.confidence.clamp(0.0, 1.0),
            })
        });
        match outcome {
            Ok(verdict) => Ok(verdict),
            Err(err) if self.config.fail_closed => {
                log::warn!("verify_relation fail-closed to neutral: {err}");
                Ok(RelationVerdict::NEUTRAL)
            }
            Err(err) => Err(err),
        }
    }

    fn arbitrate(
        &self,
        a: &ClaimNode,
        b: &ClaimNode,
        ctx: &[&ClaimNode],
    ) -> Result<ArbitrationVerdict, BackendError> {
        // Canonicalize by node id: the lower id is always presented as "A".
        let (first, second) = if a.id <= b.id { (a, b) } else { (b, a) };
        let ctx = &ctx[..ctx.len().min(CONTEXT_CAP)];
        let outcome = self.with_retries("arbitrate", || {
            let reply: ArbitrationReply =
                parse_reply(&self.chat(&arbitration_prompt(first, second, ctx))?)?;
            let (winner, loser) = match reply.winner.trim() {
                "A" | "a" => (first, second),
                "B" | "b" => (second, first),
                other => {
                    return Err(BackendError::Malformed {
                        attempts: 1,
                        detail: format!("winner must be \"A\" or \"B\", got {other:?}"),
                    })
                }
            };
            Ok(ArbitrationVerdict::gated(
                &winner.id,
                &loser.id,
                reply.confidence.clamp(0.0, 1.0),
                self.tau_gate,
            ))
        });
        match outcome {
            Ok(verdict) => Ok(verdict),
            Err(err) if self.config.fail_closed => {
                log::warn!("arbitrate fail-closed to abstention: {err}");
                Ok(ArbitrationVerdict::abstain(&a.id, &b.id))
            }
            Err(err) => Err(err),
        }
    }
}
