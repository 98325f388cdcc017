//! Action-type entropy of predicted chunks and the execution-horizon rule.
//!
//! A chunk's entropy is the sum, over its action-type token positions, of the
//! Shannon entropy (nats) of the decoder's distribution at that position.
//! Numeric tokens are carried along but never contribute.
//!
//! Given per-chunk entropies `H_1..H_T`, the executed prefix ends at the first
//! `t` with `H_t > H_{t+1}`; when the profile never drops the last chunk is
//! dropped instead. A single predicted chunk is always executed.

use std::collections::BTreeMap;

use serde::{Deserialize, Serialize};
use thiserror::Error;

use crate::grammar::{Action, ActionChunk};

/// Tolerance on the total mass of a distribution.
pub const MASS_TOLERANCE: f64 = 1e-6;

#[derive(Clone, Debug, PartialEq, Default, Serialize, Deserialize)]
#[serde(transparent)]
pub struct TokenDistribution {
    pub probs: BTreeMap<String, f64>,
}

impl TokenDistribution {
    pub fn new(probs: BTreeMap<String, f64>) -> Result<Self, EntropyError> {
        let dist = Self { probs };
        dist.validate()?;
        Ok(dist)
    }

    /// Mass `1 - spread` on `token`, `spread` shared evenly by the rest of
    /// `vocab`. Tokens with zero mass are omitted.
    pub fn concentrated(token: &str, vocab: &[&str], spread: f64) -> Self {
        let others = vocab.iter().filter(|v| **v != token).count();
        let mut probs = BTreeMap::new();
        probs.insert(token.to_owned(), 1.0 - spread);
        if spread > 0.0 && others > 0 {
            let each = spread / others as f64;
            for v in vocab.iter().filter(|v| **v != token) {
                probs.insert((*v).to_owned(), each);
            }
        }
        Self { probs }
    }

    pub fn validate(&self) -> Result<(), EntropyError> {
        let mut total = 0.0;
        for (token, &p) in &self.probs {
            if !p.is_finite() || p < 0.0 {
                return Err(EntropyError::InvalidDistribution(format!(
                    "token {token:?} has probability {p}"
                )));
            }
            total += p;
        }
        if (total - 1.0).abs() > MASS_TOLERANCE {
            return Err(EntropyError::InvalidDistribution(format!(
                "total mass {total}"
            )));
        }
        Ok(())
    }

    /// Shannon entropy in nats, with `0 ln 0 = 0`.
    pub fn entropy(&self) -> f64 {
        -self
            .probs
            .values()
            .filter(|&&p| p > 0.0)
            .map(|&p| p * p.ln())
            .sum::<f64>()
    }
}

/// Action-type vocabulary in the order the tokens are listed.
pub fn action_vocab() -> [&'static str; 4] {
    Action::ALL.map(Action::type_token)
}

/// One decoded chunk together with its per-position token distributions.
#[derive(Clone, Debug, PartialEq)]
pub struct ChunkPrediction {
    pub chunk: ActionChunk,
    /// One distribution per action-type token, i.e. per sub-chunk.
    pub type_token_dists: Vec<TokenDistribution>,
    pub numeric_token_dists: Vec<TokenDistribution>,
}

impl ChunkPrediction {
    pub fn new(
        chunk: ActionChunk,
        type_token_dists: Vec<TokenDistribution>,
        numeric_token_dists: Vec<TokenDistribution>,
    ) -> Result<Self, EntropyError> {
        if type_token_dists.len() != chunk.len() {
            return Err(EntropyError::PositionMismatch {
                sub_chunks: chunk.len(),
                distributions: type_token_dists.len(),
            });
        }
        Ok(Self {
            chunk,
            type_token_dists,
            numeric_token_dists,
        })
    }
}

#[derive(Clone, Debug, PartialEq)]
pub struct EntropyProfile {
    pub entropies: Vec<f64>,
    /// 1-based length of the executed prefix.
    pub t_star: usize,
    pub executed: Vec<ActionChunk>,
}

#[derive(Debug, Error, Clone, PartialEq)]
pub enum EntropyError {
    #[error("invalid token distribution: {0}")]
    InvalidDistribution(String),
    #[error("chunk has {sub_chunks} sub-chunks but {distributions} action-type distributions")]
    PositionMismatch {
        sub_chunks: usize,
        distributions: usize,
    },
    #[error("entropy profile is empty")]
    EmptyProfile,
}

pub fn chunk_entropy(pred: &ChunkPrediction) -> Result<f64, EntropyError> {
    if pred.type_token_dists.len() != pred.chunk.len() {
        return Err(EntropyError::PositionMismatch {
            sub_chunks: pred.chunk.len(),
            distributions: pred.type_token_dists.len(),
        });
    }
    pred.type_token_dists.iter().try_fold(0.0, |acc, d| {
        d.validate()?;
        Ok(acc + d.entropy())
    })
}

/// Length of the executed prefix for the entropy profile `h`.
pub fn select_horizon(h: &[f64]) -> Result<usize, EntropyError> {
    match h.len() {
        0 => Err(EntropyError::EmptyProfile),
        1 => Ok(1),
        len => Ok(h
            .windows(2)
            .position(|w| w[0] > w[1])
            .map_or(len - 1, |i| i + 1)),
    }
}

pub fn executed_prefix(preds: &[ChunkPrediction]) -> Result<EntropyProfile, EntropyError> {
    let entropies = preds
        .iter()
        .map(chunk_entropy)
        .collect::<Result<Vec<_>, _>>()?;
    let t_star = select_horizon(&entropies)?;
    Ok(EntropyProfile {
        executed: preds[..t_star].iter().map(|p| p.chunk.clone()).collect(),
        entropies,
        t_star,
    })
}
