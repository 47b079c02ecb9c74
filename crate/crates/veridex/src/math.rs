//! Scalar functions underlying credibility bookkeeping.
//!
//! Credibility lives in log-odds space: a node's probability `p` and its
//! logit `s = log(p / (1 - p))` are interchangeable via [`logit`] and
//! [`sigmoid`], which are exact inverses inside the open unit interval.
//! Conflict scheduling uses [`conflict_intensity`], which favors pairs where
//! both sides are credible *and* close — the conflicts worth spending an
//! arbitration call on.

use crate::error::{CoreError, Result};

/// Logistic function: maps a credibility logit back to a probability.
///
/// Evaluated in a branch that never exponentiates a large positive argument,
/// so it is stable over the whole f64 range.
pub fn sigmoid(s: f64) -> f64 {
    if s >= 0.0 {
        1.0 / (1.0 + (-s).exp())
    } else {
        let e = s.exp();
        e / (1.0 + e)
    }
}

/// Log-odds of a probability: `logit(p) = ln(p / (1 - p))`.
///
/// Errors with [`CoreError::LogitDomain`] for `p <= 0` or `p >= 1` (including
/// NaN), since credibility updates assume finite logits.
pub fn logit(p: f64) -> Result<f64> {
    if p > 0.0 && p < 1.0 {
        Ok((p / (1.0 - p)).ln())
    } else {
        Err(CoreError::LogitDomain(p))
    }
}

/// Conflict intensity of a contradiction between two nodes with current
/// probabilities `p_i` and `p_j`:
///
/// `I = (p_i + p_j) / (1 + |p_i - p_j|)`
///
/// High when both endpoints are credible and near-tied; low when one side is
/// already discredited or the pair is far apart.
pub fn conflict_intensity(p_i: f64, p_j: f64) -> f64 {
    (p_i + p_j) / (1.0 + (p_i - p_j).abs())
}

/// Cosine similarity between two embedding vectors.
///
/// Works for any non-zero vectors (the full normalized form, not a bare dot
/// product), and errors on dimension mismatch.
pub fn cosine(a: &[f64], b: &[f64]) -> Result<f64> {
    if a.len() != b.len() {
        return Err(CoreError::DimensionMismatch {
            left: a.len(),
            right: b.len(),
        });
    }
    let mut dot = 0.0;
    let mut na = 0.0;
    let mut nb = 0.0;
    for (x, y) in a.iter().zip(b) {
        dot += x * y;
        na += x * x;
        nb += y * y;
    }
    if na == 0.0 || nb == 0.0 {
        return Ok(0.0);
    }
    Ok(dot / (na.sqrt() * nb.sqrt()))
}
