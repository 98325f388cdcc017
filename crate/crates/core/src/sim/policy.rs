//! Chunk policies that stand in for the learned navigator.
//!
//! Both policies emit [`ChunkPrediction`]s with per-position action-type
//! distributions so the execution-horizon rule sees the same contract a
//! decoder would provide.

use rand::Rng;
use serde::{Deserialize, Serialize};

use super::planner::{plan_actions, FollowerConfig};
use super::pose::Pose;
use super::world::World;
use super::SimError;
use crate::entropy::{action_vocab, ChunkPrediction, TokenDistribution};
use crate::grammar::{render_chunk, Action, ActionChunk, ActionUnits, Token};
use crate::hpac::{chunk_with_rng, HpacConfig};
use crate::seed::{self, Stream};

/// Mass left off the emitted token by a fully confident prediction.
pub const ORACLE_EPSILON: f64 = 1e-6;

#[derive(Clone, Debug, PartialEq)]
pub struct PolicyOutput {
    pub predictions: Vec<ChunkPrediction>,
    /// Which predictions were corrupted; empty for noise-free policies.
    pub corrupted: Vec<bool>,
}

impl PolicyOutput {
    pub fn chunks(&self) -> Vec<ActionChunk> {
        self.predictions.iter().map(|p| p.chunk.clone()).collect()
    }
}

pub trait Policy: Send {
    fn predict(&mut self, world: &World, pose: &Pose, k_max: usize) -> Result<PolicyOutput, SimError>;
}

impl<P: Policy + ?Sized> Policy for Box<P> {
    fn predict(&mut self, world: &World, pose: &Pose, k_max: usize) -> Result<PolicyOutput, SimError> {
        (**self).predict(world, pose, k_max)
    }
}

/// Prediction for `chunk` with mass `1 - spread` on each emitted action type.
pub fn predict_chunk(chunk: ActionChunk, units: &ActionUnits, spread: f64) -> ChunkPrediction {
    let vocab = action_vocab();
    let type_dists = chunk
        .sub_chunks()
        .iter()
        .map(|s| TokenDistribution::concentrated(s.action().type_token(), &vocab, spread))
        .collect();
    let numeric_dists = render_chunk(&chunk, units)
        .tokens
        .into_iter()
        .filter(|t| matches!(t, Token::Numeric { .. }))
        .map(|t| TokenDistribution::concentrated(&t.to_string(), &[], 0.0))
        .collect();
    ChunkPrediction::new(chunk, type_dists, numeric_dists).expect("one distribution per sub-chunk")
}

/// Shortest-path follower, chunked on every query.
pub struct OraclePolicy {
    units: ActionUnits,
    hpac: HpacConfig,
    follower: FollowerConfig,
    rng: Stream,
}

impl OraclePolicy {
    /// HPAC draws come from a stream seeded with `hpac.seed`.
    pub fn new(units: ActionUnits, hpac: HpacConfig) -> Self {
        Self {
            units,
            hpac,
            follower: FollowerConfig::default(),
            rng: seed::stream(hpac.seed),
        }
    }

    pub fn with_follower(mut self, follower: FollowerConfig) -> Self {
        self.follower = follower;
        self
    }

    /// The full chunked plan from `pose`, not truncated to `k_max`.
    pub fn plan_chunks(&mut self, world: &World, pose: &Pose) -> Result<Vec<ActionChunk>, SimError> {
        let plan = plan_actions(world, pose, &self.units, &self.follower)?;
        Ok(chunk_with_rng(&plan.actions, &self.hpac, &mut self.rng)?.chunks)
    }
}

impl Policy for OraclePolicy {
    fn predict(&mut self, world: &World, pose: &Pose, k_max: usize) -> Result<PolicyOutput, SimError> {
        let mut chunks = self.plan_chunks(world, pose)?;
        chunks.truncate(k_max.max(1));
        Ok(PolicyOutput {
            predictions: chunks
                .into_iter()
                .map(|c| predict_chunk(c, &self.units, ORACLE_EPSILON))
                .collect(),
            corrupted: Vec::new(),
        })
    }
}

/// Corruption model for [`NoisyPolicy`].
///
/// Chunk `t` (1-based) is corrupted with probability
/// `q_t = min(1, q0 + growth * (t - 1))`. Emitted distributions put `1 - q_t`
/// on the emitted token, except that a corrupted chunk is emitted with a
/// near point mass with probability `miscalibration`.
#[derive(Clone, Copy, Debug, PartialEq, Serialize, Deserialize)]
pub struct NoiseModel {
    pub q0: f64,
    pub growth: f64,
    pub miscalibration: f64,
}

impl Default for NoiseModel {
    fn default() -> Self {
        Self {
            q0: 0.05,
            growth: 0.15,
            miscalibration: 0.3,
        }
    }
}

impl NoiseModel {
    pub fn corruption_prob(&self, t: usize) -> f64 {
        (self.q0 + self.growth * (t as f64 - 1.0)).clamp(0.0, 1.0)
    }

    pub fn validate(&self) -> Result<(), String> {
        let ok = |v: f64| (0.0..=1.0).contains(&v);
        if ok(self.q0) && self.growth >= 0.0 && self.growth.is_finite() && ok(self.miscalibration) {
            Ok(())
        } else {
            Err(format!("invalid noise model {self:?}"))
        }
    }
}

/// Oracle chunks with calibrated, growing corruption.
///
/// Draw order per chunk: corruption test; if corrupted, the sub-chunk index,
/// the replacement kind, then the overconfidence test.
pub struct NoisyPolicy {
    base: OraclePolicy,
    noise: NoiseModel,
    units: ActionUnits,
    rng: Stream,
}

impl NoisyPolicy {
    /// The base oracle uses `hpac.seed`; the corruption stream uses
    /// `derive_seed(hpac.seed, "noise")`.
    pub fn new(units: ActionUnits, hpac: HpacConfig, noise: NoiseModel) -> Self {
        Self {
            base: OraclePolicy::new(units, hpac),
            noise,
            units,
            rng: seed::stream(seed::derive_seed(hpac.seed, "noise")),
        }
    }
}

fn corrupt<R: Rng>(chunk: &ActionChunk, rng: &mut R) -> ActionChunk {
    let subs = chunk.sub_chunks();
    let at = rng.gen_range(0..subs.len());
    let original = subs[at].action();
    let others: Vec<Action> = Action::ALL.into_iter().filter(|&a| a != original).collect();
    let replacement = others[rng.gen_range(0..others.len())];
    if replacement == Action::Stop {
        return ActionChunk::stop();
    }
    let mut out = subs.to_vec();
    out[at] = subs[at].with_action(replacement);
    ActionChunk::new(out).expect("movement-only chunk")
}

impl Policy for NoisyPolicy {
    fn predict(&mut self, world: &World, pose: &Pose, k_max: usize) -> Result<PolicyOutput, SimError> {
        let clean = self.base.predict(world, pose, k_max)?;
        let mut predictions = Vec::with_capacity(clean.predictions.len());
        let mut corrupted = Vec::with_capacity(clean.predictions.len());
        for (i, pred) in clean.predictions.into_iter().enumerate() {
            let q = self.noise.corruption_prob(i + 1);
            let spread = q.max(ORACLE_EPSILON);
            if seed::unit_draw(&mut self.rng) <= q {
                let chunk = corrupt(&pred.chunk, &mut self.rng);
                let overconfident = seed::unit_draw(&mut self.rng) <= self.noise.miscalibration;
                let spread = if overconfident { ORACLE_EPSILON } else { spread };
                let stop = chunk.is_stop();
                predictions.push(predict_chunk(chunk, &self.units, spread));
                corrupted.push(true);
                if stop {
                    break;
                }
            } else {
                predictions.push(predict_chunk(pred.chunk, &self.units, spread));
                corrupted.push(false);
            }
        }
        Ok(PolicyOutput {
            predictions,
            corrupted,
        })
    }
}

/// Emits `stop` immediately.
pub struct StopPolicy;

impl Policy for StopPolicy {
    fn predict(&mut self, _: &World, _: &Pose, _: usize) -> Result<PolicyOutput, SimError> {
        Ok(PolicyOutput {
            predictions: vec![predict_chunk(ActionChunk::stop(), &ActionUnits::default(), ORACLE_EPSILON)],
            corrupted: Vec::new(),
        })
    }
}

/// Replays fixed chunks, one query at a time; used in tests and examples.
pub struct ScriptedPolicy {
    queue: std::collections::VecDeque<Vec<ActionChunk>>,
    units: ActionUnits,
}

impl ScriptedPolicy {
    pub fn new(units: ActionUnits, responses: Vec<Vec<ActionChunk>>) -> Self {
        Self {
            queue: responses.into(),
            units,
        }
    }
}

impl Policy for ScriptedPolicy {
    fn predict(&mut self, _: &World, _: &Pose, _: usize) -> Result<PolicyOutput, SimError> {
        let chunks = self
            .queue
            .pop_front()
            .ok_or_else(|| SimError::PolicyFailure("script exhausted".into()))?;
        Ok(PolicyOutput {
            predictions: chunks
                .into_iter()
                .map(|c| predict_chunk(c, &self.units, ORACLE_EPSILON))
                .collect(),
            corrupted: Vec::new(),
        })
    }
}
