//! Hierarchical probabilistic action chunking.
//!
//! Level 1 merges up to three equal adjacent atomic actions into a sub-chunk,
//! accepting each eligible merge with probability `p`. Level 2 then groups
//! consecutive sub-chunks greedily into chunks of at most `n`, without looking
//! at their kind. A terminal `stop` is kept out of both levels and emitted as
//! its own final chunk.
//!
//! Draw contract: exactly one (0, 1] draw is consumed for every index `i` with
//! `a[i] == a[i-1]` and a current sub-chunk shorter than three, in sequence
//! order. No other draws are made.

use rand::Rng;
use serde::{Deserialize, Serialize};
use thiserror::Error;

use crate::grammar::{Action, ActionChunk, SubChunk, MAX_SUB_CHUNK_COUNT};
use crate::seed;

#[derive(Clone, Copy, Debug, PartialEq, Serialize, Deserialize)]
pub struct HpacConfig {
    pub merge_prob: f64,
    pub max_chunk_size: usize,
    pub seed: u64,
}

impl Default for HpacConfig {
    fn default() -> Self {
        Self {
            merge_prob: 0.7,
            max_chunk_size: 3,
            seed: 0,
        }
    }
}

impl HpacConfig {
    pub fn validate(&self) -> Result<(), HpacError> {
        if !(0.0..=1.0).contains(&self.merge_prob) {
            return Err(HpacError::InvalidMergeProb(self.merge_prob));
        }
        if self.max_chunk_size == 0 {
            return Err(HpacError::InvalidChunkSize);
        }
        Ok(())
    }

    /// Same configuration with the seed replaced by `derive_seed(seed, key)`.
    pub fn for_episode(&self, episode_id: &str) -> Self {
        Self {
            seed: seed::derive_seed(self.seed, episode_id),
            ..*self
        }
    }
}

#[derive(Debug, Error, Clone, PartialEq)]
pub enum HpacError {
    #[error("cannot chunk an empty action sequence")]
    EmptySequence,
    #[error("stop at index {index} is not the final action")]
    StopNotTerminal { index: usize },
    #[error("merge probability {0} outside [0, 1]")]
    InvalidMergeProb(f64),
    #[error("max chunk size must be at least 1")]
    InvalidChunkSize,
}

/// Result of chunking one action sequence.
#[derive(Clone, Debug, PartialEq)]
pub struct ChunkedSequence {
    pub chunks: Vec<ActionChunk>,
    pub source_len: usize,
    /// Half-open `[start, end)` range of each chunk in the source sequence.
    pub boundaries: Vec<(usize, usize)>,
}

impl ChunkedSequence {
    pub fn len(&self) -> usize {
        self.chunks.len()
    }

    pub fn is_empty(&self) -> bool {
        self.chunks.is_empty()
    }

    /// Chunks followed by their source range.
    pub fn iter(&self) -> impl Iterator<Item = (&ActionChunk, (usize, usize))> {
        self.chunks.iter().zip(self.boundaries.iter().copied())
    }

    /// Indices of chunks that must be full: every movement chunk except the
    /// last one before the end or before a terminal stop.
    pub fn full_chunk_indices(&self) -> std::ops::Range<usize> {
        let movement = self.chunks.iter().filter(|c| !c.is_stop()).count();
        0..movement.saturating_sub(1)
    }
}

/// Level 1: probabilistic merging of equal adjacent actions.
pub fn merge_level1<R: Rng + ?Sized>(
    actions: &[Action],
    merge_prob: f64,
    rng: &mut R,
) -> Result<Vec<SubChunk>, HpacError> {
    let (first, rest) = actions.split_first().ok_or(HpacError::EmptySequence)?;
    let mut out = Vec::new();
    let mut current = SubChunk::single(*first);
    let mut prev = *first;
    for &a in rest {
        let eligible =
            a == prev && a != Action::Stop && current.count() < MAX_SUB_CHUNK_COUNT;
        if eligible && seed::unit_draw(rng) <= merge_prob {
            current.grow();
        } else {
            out.push(current);
            current = SubChunk::single(a);
        }
        prev = a;
    }
    out.push(current);
    Ok(out)
}

/// Level 2: greedy grouping of consecutive sub-chunks, at most `max` each.
pub fn merge_level2(sub_chunks: &[SubChunk], max: usize) -> Result<Vec<ActionChunk>, HpacError> {
    if max == 0 {
        return Err(HpacError::InvalidChunkSize);
    }
    if sub_chunks.is_empty() {
        return Err(HpacError::EmptySequence);
    }
    // Stop sub-chunks are isolated so the grammar invariant holds even when
    // callers feed level 1 output containing stops directly.
    let mut chunks = Vec::new();
    let mut group: Vec<SubChunk> = Vec::with_capacity(max);
    for &sub in sub_chunks {
        if sub.action() == Action::Stop {
            if !group.is_empty() {
                chunks.push(ActionChunk::new(std::mem::take(&mut group)).expect("non-empty"));
            }
            chunks.push(ActionChunk::stop());
            continue;
        }
        if group.len() == max {
            chunks.push(ActionChunk::new(std::mem::take(&mut group)).expect("non-empty"));
        }
        group.push(sub);
    }
    if !group.is_empty() {
        chunks.push(ActionChunk::new(group).expect("non-empty"));
    }
    Ok(chunks)
}

/// Chunks `actions` with a stream seeded from `config.seed`.
pub fn chunk_trajectory(actions: &[Action], config: &HpacConfig) -> Result<ChunkedSequence, HpacError> {
    let mut rng = seed::stream(config.seed);
    chunk_with_rng(actions, config, &mut rng)
}

/// Same as [`chunk_trajectory`] but draws from a caller-owned stream.
pub fn chunk_with_rng<R: Rng + ?Sized>(
    actions: &[Action],
    config: &HpacConfig,
    rng: &mut R,
) -> Result<ChunkedSequence, HpacError> {
    config.validate()?;
    if actions.is_empty() {
        return Err(HpacError::EmptySequence);
    }
    if let Some(index) = actions
        .iter()
        .position(|&a| a == Action::Stop)
        .filter(|&i| i + 1 != actions.len())
    {
        return Err(HpacError::StopNotTerminal { index });
    }
    let (movement, stop) = match actions.last() {
        Some(Action::Stop) => (&actions[..actions.len() - 1], true),
        _ => (actions, false),
    };

    let mut chunks = if movement.is_empty() {
        Vec::new()
    } else {
        let subs = merge_level1(movement, config.merge_prob, rng)?;
        merge_level2(&subs, config.max_chunk_size)?
    };
    if stop {
        chunks.push(ActionChunk::stop());
    }

    let mut boundaries = Vec::with_capacity(chunks.len());
    let mut start = 0;
    for c in &chunks {
        let end = start + c.atomic_len();
        boundaries.push((start, end));
        start = end;
    }
    debug_assert_eq!(start, actions.len());
    Ok(ChunkedSequence {
        chunks,
        source_len: actions.len(),
        boundaries,
    })
}

#[cfg(test)]
mod tests {
    use super::*;
    use crate::grammar::flatten;
    use proptest::prelude::*;
    use Action::*;

    fn subs(v: &[(Action, u8)]) -> Vec<SubChunk> {
        v.iter().map(|&(a, c)| SubChunk::new(a, c).unwrap()).collect()
    }

    fn shape(seq: &ChunkedSequence) -> Vec<Vec<(Action, u8)>> {
        seq.chunks
            .iter()
            .map(|c| c.sub_chunks().iter().map(|s| (s.action(), s.count())).collect())
            .collect()
    }

    #[test]
    fn level1_p_one_caps_at_three() {
        let mut rng = seed::stream(0);
        let out = merge_level1(&[Forward; 4], 1.0, &mut rng).unwrap();
        assert_eq!(out, subs(&[(Forward, 3), (Forward, 1)]));
    }

    #[test]
    fn level1_no_equal_neighbours_consumes_no_draws() {
        let mut rng = seed::stream(5);
        let out = merge_level1(&[Forward, TurnLeft, Forward], 0.7, &mut rng).unwrap();
        assert_eq!(out, subs(&[(Forward, 1), (TurnLeft, 1), (Forward, 1)]));
        let mut fresh = seed::stream(5);
        assert_eq!(seed::unit_draw(&mut rng), seed::unit_draw(&mut fresh));
    }

    // First draws of the seed-7 stream, frozen so the hand trace below stays
    // tied to the generator.
    const SEED7_DRAWS: [f64; 4] = [
        0.15779609702061947,
        0.1679893627721014,
        0.7042761280364566,
        0.7267412967132652,
    ];

    #[test]
    fn seed7_stream_is_frozen() {
        let mut rng = seed::stream(7);
        for want in SEED7_DRAWS {
            assert_eq!(seed::unit_draw(&mut rng), want);
        }
    }

    #[test]
    fn level1_hand_trace_seed7() {
        // [F,F,F,F,L,L], p = 0.7
        // i=1 F==F, len 1: draw .158 <= .7 -> (F,2)
        // i=2 F==F, len 2: draw .168 <= .7 -> (F,3)
        // i=3 F==F, len 3: cap, no draw -> close (F,3), start (F,1)
        // i=4 L!=F       : no draw, close (F,1), start (L,1)
        // i=5 L==L, len 1: draw .704 > .7 -> close (L,1), start (L,1)
        let mut rng = seed::stream(7);
        let out = merge_level1(&[Forward, Forward, Forward, Forward, TurnLeft, TurnLeft], 0.7, &mut rng)
            .unwrap();
        assert_eq!(
            out,
            subs(&[(Forward, 3), (Forward, 1), (TurnLeft, 1), (TurnLeft, 1)])
        );
        // exactly three draws were consumed
        assert_eq!(seed::unit_draw(&mut rng), SEED7_DRAWS[3]);
    }

    #[test]
    fn level1_empty() {
        let mut rng = seed::stream(0);
        assert_eq!(merge_level1(&[], 0.5, &mut rng), Err(HpacError::EmptySequence));
    }

    #[test]
    fn level2_grouping() {
        let seven = subs(&[(Forward, 1); 7]);
        let sizes: Vec<usize> = merge_level2(&seven, 3).unwrap().iter().map(|c| c.len()).collect();
        assert_eq!(sizes, vec![3, 3, 1]);
        assert_eq!(merge_level2(&seven[..3], 3).unwrap().len(), 1);
        assert!(merge_level2(&seven, 1).unwrap().iter().all(|c| c.len() == 1));
        assert_eq!(merge_level2(&seven, 1).unwrap().len(), 7);
        assert_eq!(merge_level2(&[], 3), Err(HpacError::EmptySequence));
        assert_eq!(merge_level2(&seven, 0), Err(HpacError::InvalidChunkSize));
    }

    #[test]
    fn level2_mixes_kinds() {
        let mixed = subs(&[(Forward, 3), (TurnLeft, 2), (TurnRight, 1), (Forward, 1)]);
        let chunks = merge_level2(&mixed, 3).unwrap();
        assert_eq!(chunks[0].len(), 3);
        assert_eq!(chunks[1].len(), 1);
    }

    #[test]
    fn chunk_examples() {
        let cfg = HpacConfig {
            merge_prob: 1.0,
            max_chunk_size: 3,
            seed: 1,
        };
        let seq = chunk_trajectory(&[Forward, Forward, Forward, Forward, TurnLeft, TurnLeft], &cfg).unwrap();
        assert_eq!(
            shape(&seq),
            vec![vec![(Forward, 3), (Forward, 1), (TurnLeft, 2)]]
        );
        assert_eq!(seq.boundaries, vec![(0, 6)]);

        let seq = chunk_trajectory(&[Forward; 12], &cfg).unwrap();
        assert_eq!(
            shape(&seq),
            vec![vec![(Forward, 3); 3], vec![(Forward, 3)]]
        );
        assert_eq!(seq.boundaries, vec![(0, 9), (9, 12)]);
    }

    #[test]
    fn stop_is_isolated() {
        let cfg = HpacConfig {
            merge_prob: 1.0,
            ..HpacConfig::default()
        };
        let seq = chunk_trajectory(&[Forward, Forward, Stop], &cfg).unwrap();
        assert_eq!(shape(&seq), vec![vec![(Forward, 2)], vec![(Stop, 1)]]);
        assert_eq!(seq.boundaries, vec![(0, 2), (2, 3)]);

        let seq = chunk_trajectory(&[Stop], &cfg).unwrap();
        assert_eq!(shape(&seq), vec![vec![(Stop, 1)]]);

        assert_eq!(
            chunk_trajectory(&[Forward, Stop, Forward], &cfg),
            Err(HpacError::StopNotTerminal { index: 1 })
        );
        assert_eq!(chunk_trajectory(&[], &cfg), Err(HpacError::EmptySequence));
    }

    #[test]
    fn config_validation() {
        let bad = HpacConfig {
            merge_prob: 1.5,
            ..HpacConfig::default()
        };
        assert!(chunk_trajectory(&[Forward], &bad).is_err());
        let bad = HpacConfig {
            max_chunk_size: 0,
            ..HpacConfig::default()
        };
        assert!(chunk_trajectory(&[Forward], &bad).is_err());
    }

    fn arb_actions() -> impl Strategy<Value = Vec<Action>> {
        (
            prop::collection::vec(
                prop::sample::select(vec![Forward, TurnLeft, TurnRight]),
                0..120,
            ),
            any::<bool>(),
        )
            .prop_filter_map("non-empty", |(mut v, stop)| {
                if stop {
                    v.push(Stop);
                }
                (!v.is_empty()).then_some(v)
            })
    }

    proptest! {
        #[test]
        fn reconstruction_and_caps(
            actions in arb_actions(),
            p in prop::sample::select(vec![0.0, 0.3, 0.7, 1.0]),
            n in 1usize..5,
            s in any::<u64>(),
        ) {
            let cfg = HpacConfig { merge_prob: p, max_chunk_size: n, seed: s };
            let seq = chunk_trajectory(&actions, &cfg).unwrap();
            prop_assert_eq!(flatten(&seq.chunks), actions.clone());
            prop_assert_eq!(seq.source_len, actions.len());
            let mut expected_start = 0;
            for (c, (a, b)) in seq.iter() {
                prop_assert_eq!(a, expected_start);
                prop_assert_eq!(b - a, c.atomic_len());
                prop_assert!(c.len() >= 1 && c.len() <= n);
                expected_start = b;
            }
            prop_assert_eq!(expected_start, actions.len());
            for i in seq.full_chunk_indices() {
                prop_assert_eq!(seq.chunks[i].len(), n);
                let covered = seq.chunks[i].atomic_len();
                prop_assert!(covered >= n && covered <= 3 * n);
            }
            prop_assert_eq!(chunk_trajectory(&actions, &cfg).unwrap(), seq);
        }

        #[test]
        fn run_length_law(k in 1usize..40, s in any::<u64>()) {
            let run = vec![TurnRight; k];
            let mut rng = seed::stream(s);
            prop_assert_eq!(merge_level1(&run, 1.0, &mut rng).unwrap().len(), k.div_ceil(3));
            prop_assert_eq!(merge_level1(&run, 0.0, &mut rng).unwrap().len(), k);
        }
    }
}
