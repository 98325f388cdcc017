//! Inverse-dynamics triplets, chunked VLN samples, prompts and corpus
//! statistics built from trajectory logs.

use std::collections::BTreeMap;
use std::fmt::Write as _;

use serde::{Deserialize, Serialize};
use thiserror::Error;

use crate::grammar::{Action, ActionUnits};
use crate::hpac::{chunk_trajectory, ChunkedSequence, HpacConfig, HpacError};
use crate::sim::planner::{plan_actions, FollowerConfig};
use crate::sim::pose::{self, kinematic_step, Pose};
use crate::sim::worldgen::{nth_world, WorldGenConfig};
use crate::sim::World;

/// Replay tolerance in meters and degrees.
pub const REPLAY_TOLERANCE: f64 = 1e-6;
/// History frames kept per VLN sample.
pub const HISTORY_CAP: usize = 8;
pub const DEFAULT_K_MAX: usize = 3;
pub const PROGRESS_BINS: usize = 10;

const IMAGE: &str = "<image>";

#[derive(Clone, Debug, PartialEq, Serialize, Deserialize)]
#[serde(deny_unknown_fields)]
pub struct Trajectory {
    pub episode_id: String,
    pub instruction: String,
    pub actions: Vec<Action>,
    #[serde(with = "pose::as_arrays")]
    pub poses: Vec<Pose>,
    #[serde(default, skip_serializing_if = "Option::is_none")]
    pub frame_refs: Option<Vec<String>>,
}

#[derive(Debug, Error, Clone, PartialEq)]
pub enum IdsError {
    #[error("invalid trajectory {episode_id}: {reason}")]
    InvalidTrajectory { episode_id: String, reason: String },
    #[error("VLN and FDS prompts need an instruction")]
    MissingInstruction,
    #[error(transparent)]
    Hpac(#[from] HpacError),
}

/// Steps whose replay misses the logged next pose.
#[derive(Clone, Debug, Default, PartialEq, Serialize, Deserialize)]
pub struct ValidationReport {
    pub episode_id: String,
    /// Set when the pose count does not match the action count.
    pub length_mismatch: bool,
    pub bad_steps: Vec<usize>,
}

impl ValidationReport {
    pub fn is_ok(&self) -> bool {
        !self.length_mismatch && self.bad_steps.is_empty()
    }
}

pub fn validate_trajectory(traj: &Trajectory, units: &ActionUnits) -> ValidationReport {
    let mut report = ValidationReport {
        episode_id: traj.episode_id.clone(),
        length_mismatch: traj.poses.len() != traj.actions.len() + 1,
        bad_steps: Vec::new(),
    };
    for (t, (&a, w)) in traj.actions.iter().zip(traj.poses.windows(2)).enumerate() {
        if !kinematic_step(&w[0], a, units).approx_eq(&w[1], REPLAY_TOLERANCE) {
            report.bad_steps.push(t);
        }
    }
    report
}

fn ensure_valid(traj: &Trajectory, units: &ActionUnits) -> Result<(), IdsError> {
    let invalid = |reason: String| IdsError::InvalidTrajectory {
        episode_id: traj.episode_id.clone(),
        reason,
    };
    if traj.actions.is_empty() {
        return Err(invalid("no actions".into()));
    }
    let report = validate_trajectory(traj, units);
    if report.length_mismatch {
        return Err(invalid(format!(
            "{} poses for {} actions",
            traj.poses.len(),
            traj.actions.len()
        )));
    }
    if let Some(&t) = report.bad_steps.first() {
        return Err(invalid(format!("replay mismatch at step {t}")));
    }
    if let Some(refs) = &traj.frame_refs {
        if refs.len() != traj.poses.len() {
            return Err(invalid(format!("{} frame refs for {} poses", refs.len(), traj.poses.len())));
        }
    }
    Ok(())
}

/// A frame: the pose it was taken at and, when available, an image reference.
#[derive(Clone, Debug, PartialEq, Serialize, Deserialize)]
pub struct View {
    #[serde(with = "pose_array")]
    pub pose: Pose,
    #[serde(default, skip_serializing_if = "Option::is_none")]
    pub frame_ref: Option<String>,
}

mod pose_array {
    use serde::{Deserialize, Deserializer, Serialize, Serializer};

    use crate::sim::Pose;

    pub fn serialize<S: Serializer>(p: &Pose, s: S) -> Result<S::Ok, S::Error> {
        p.to_array().serialize(s)
    }

    pub fn deserialize<'de, D: Deserializer<'de>>(d: D) -> Result<Pose, D::Error> {
        Ok(Pose::from(<[f64; 3]>::deserialize(d)?))
    }
}

fn view(traj: &Trajectory, i: usize) -> View {
    View {
        pose: traj.poses[i],
        frame_ref: traj.frame_refs.as_ref().map(|r| r[i].clone()),
    }
}

#[derive(Clone, Debug, PartialEq, Serialize, Deserialize)]
pub struct IdsTriplet {
    pub episode_id: String,
    pub start_index: usize,
    pub end_index: usize,
    /// Length of the source trajectory in atomic actions.
    pub trajectory_len: usize,
    pub current_view: View,
    pub goal_view: View,
    /// Canonical chunk text.
    pub label: String,
    pub prompt: String,
}

impl IdsTriplet {
    pub fn atomic_len(&self) -> usize {
        self.end_index - self.start_index
    }
}

fn chunk(traj: &Trajectory, config: &HpacConfig, units: &ActionUnits) -> Result<ChunkedSequence, IdsError> {
    ensure_valid(traj, units)?;
    Ok(chunk_trajectory(&traj.actions, &config.for_episode(&traj.episode_id))?)
}

/// One triplet per chunk, with the chunk boundaries as waypoints.
///
/// The chunking stream is seeded per episode (see [`HpacConfig::for_episode`]).
pub fn build_ids_triplets(
    traj: &Trajectory,
    config: &HpacConfig,
    units: &ActionUnits,
) -> Result<Vec<IdsTriplet>, IdsError> {
    let seq = chunk(traj, config, units)?;
    let prompt = render_prompt(PromptKind::Ids, None, 0)?;
    Ok(seq
        .iter()
        .map(|(c, (a, b))| IdsTriplet {
            episode_id: traj.episode_id.clone(),
            start_index: a,
            end_index: b,
            trajectory_len: traj.actions.len(),
            current_view: view(traj, a),
            goal_view: view(traj, b),
            label: c.render(units).text,
            prompt: prompt.clone(),
        })
        .collect())
}

#[derive(Clone, Debug, PartialEq, Serialize, Deserialize)]
pub struct VlnSample {
    pub episode_id: String,
    pub step_index: usize,
    pub history_indices: Vec<usize>,
    pub instruction: String,
    pub target: Vec<String>,
    pub prompt: String,
}

/// One sample per chunk start; the target is the next `k_max` chunks.
pub fn build_vln_samples(
    traj: &Trajectory,
    config: &HpacConfig,
    units: &ActionUnits,
    k_max: usize,
) -> Result<Vec<VlnSample>, IdsError> {
    let seq = chunk(traj, config, units)?;
    let texts: Vec<String> = seq.chunks.iter().map(|c| c.render(units).text).collect();
    let k = k_max.max(1);
    seq.boundaries
        .iter()
        .enumerate()
        .map(|(i, &(start, _))| {
            let all: Vec<usize> = (0..=start).collect();
            let history_indices = subsample_history(&all, HISTORY_CAP);
            let prompt = render_prompt(PromptKind::Vln, Some(&traj.instruction), history_indices.len() - 1)?;
            Ok(VlnSample {
                episode_id: traj.episode_id.clone(),
                step_index: start,
                history_indices,
                instruction: traj.instruction.clone(),
                target: texts[i..(i + k).min(texts.len())].to_vec(),
                prompt,
            })
        })
        .collect()
}

/// At most `cap` entries at evenly spaced positions, both ends kept.
///
/// Position `j` maps to `round(j * (len - 1) / (cap - 1))`, halves rounded up.
pub fn subsample_history<T: Copy>(indices: &[T], cap: usize) -> Vec<T> {
    let len = indices.len();
    if len <= cap {
        return indices.to_vec();
    }
    if cap == 0 {
        return Vec::new();
    }
    if cap == 1 {
        return vec![indices[len - 1]];
    }
    let den = cap - 1;
    (0..cap)
        .map(|j| indices[(2 * j * (len - 1) + den) / (2 * den)])
        .collect()
}

#[derive(Clone, Copy, Debug, PartialEq, Eq, Serialize, Deserialize)]
#[serde(rename_all = "lowercase")]
pub enum PromptKind {
    Vln,
    Ids,
    Fds,
}

fn placeholders(n: usize) -> String {
    vec![IMAGE; n].join(",")
}

/// Prompt text with `n_history` historical image placeholders.
///
/// The instruction is required for VLN and FDS and ignored for IDS.
pub fn render_prompt(kind: PromptKind, instruction: Option<&str>, n_history: usize) -> Result<String, IdsError> {
    const OPENING: &str = "Imagine you are a robot programmed for navigation tasks. ";
    let instruction = || instruction.ok_or(IdsError::MissingInstruction);
    Ok(match kind {
        PromptKind::Vln => format!(
            "{OPENING}You have been given a video of historical observations: {} and current observation: {IMAGE}. \
             Your assigned task is: {}. Analyze this series of images to decide your next move, which could involve \
             turning left or right by a specific degree, moving forward a certain distance.",
            placeholders(n_history),
            instruction()?
        ),
        PromptKind::Ids => format!(
            "{OPENING}You have been given an image of current view {IMAGE} and an image of the goal view {IMAGE}. \
             Analyze the two images to predict the navigation action that would move the robot from the current \
             viewpoint to the goal view, which could involve turning left or right by a specific degree or moving \
             forward a certain distance."
        ),
        PromptKind::Fds => format!(
            "{OPENING}You have been given a video of historical observations: {} and and current observation: {IMAGE}. \
             Your assigned task is: {}. Analyze this series of images to predict the future observation.",
            placeholders(n_history),
            instruction()?
        ),
    })
}

#[derive(Clone, Debug, PartialEq, Serialize, Deserialize)]
pub struct DatasetStats {
    /// Atomic actions per chunk -> number of chunks.
    pub chunk_size_histogram: BTreeMap<usize, usize>,
    /// Mean atomic actions per chunk in each progress bin; `None` for empty bins.
    pub progress_profile: Vec<Option<f64>>,
    pub total_chunks: usize,
}

impl DatasetStats {
    pub fn mode(&self) -> Option<usize> {
        // ties go to the smaller size
        self.chunk_size_histogram
            .iter()
            .max_by(|a, b| a.1.cmp(b.1).then(b.0.cmp(a.0)))
            .map(|(&k, _)| k)
    }

    pub fn to_table(&self) -> String {
        let mut out = String::new();
        let _ = writeln!(out, "{:>6} {:>8} {:>7}", "size", "chunks", "share");
        for (size, count) in &self.chunk_size_histogram {
            let share = *count as f64 / self.total_chunks.max(1) as f64;
            let _ = writeln!(out, "{size:>6} {count:>8} {:>6.1}%", 100.0 * share);
        }
        let _ = writeln!(out, "{:>6} {:>8}", "total", self.total_chunks);
        let _ = writeln!(out);
        let _ = writeln!(out, "{:>9} {:>10}", "progress", "mean size");
        for (i, bin) in self.progress_profile.iter().enumerate() {
            let lo = i as f64 / PROGRESS_BINS as f64;
            let hi = (i + 1) as f64 / PROGRESS_BINS as f64;
            match bin {
                Some(m) => _ = writeln!(out, "{lo:.1}-{hi:.1} {m:>10.3}"),
                None => _ = writeln!(out, "{lo:.1}-{hi:.1} {:>10}", "-"),
            }
        }
        out
    }
}

/// Histogram of label lengths and mean label length per progress decile,
/// where progress is `start_index / trajectory_len`.
pub fn compute_stats<'a>(triplets: impl IntoIterator<Item = &'a IdsTriplet>) -> DatasetStats {
    let mut hist = BTreeMap::new();
    let mut sums = [(0usize, 0usize); PROGRESS_BINS];
    let mut total = 0;
    for t in triplets {
        let size = t.atomic_len();
        *hist.entry(size).or_insert(0) += 1;
        let progress = t.start_index as f64 / t.trajectory_len.max(1) as f64;
        let bin = ((progress * PROGRESS_BINS as f64) as usize).min(PROGRESS_BINS - 1);
        sums[bin].0 += size;
        sums[bin].1 += 1;
        total += 1;
    }
    DatasetStats {
        chunk_size_histogram: hist,
        progress_profile: sums
            .iter()
            .map(|&(s, n)| (n > 0).then(|| s as f64 / n as f64))
            .collect(),
        total_chunks: total,
    }
}

const HEADINGS: [&str; 8] = [
    "east",
    "north-east",
    "north",
    "north-west",
    "west",
    "south-west",
    "south",
    "south-east",
];

fn instruction_for(world: &World) -> String {
    let dx = world.goal[0] - world.start.x;
    let dy = world.goal[1] - world.start.y;
    let bearing = dy.atan2(dx).to_degrees().rem_euclid(360.0);
    let sector = ((bearing + 22.5) / 45.0) as usize % 8;
    format!(
        "Walk to the spot about {:.1} meters to the {} and stop there.",
        dx.hypot(dy),
        HEADINGS[sector]
    )
}

/// Oracle trajectory from the world's start to its goal, ending with `stop`.
pub fn oracle_trajectory(
    world: &World,
    episode_id: &str,
    units: &ActionUnits,
    follower: &FollowerConfig,
) -> Result<Trajectory, crate::sim::SimError> {
    let plan = plan_actions(world, &world.start, units, follower)?;
    Ok(Trajectory {
        episode_id: episode_id.to_owned(),
        instruction: instruction_for(world),
        actions: plan.actions,
        poses: plan.poses,
        frame_refs: None,
    })
}

/// `count` oracle trajectories over generated worlds, ids `ep-00000`...
pub fn oracle_corpus(
    count: usize,
    master_seed: u64,
    worlds: &WorldGenConfig,
    units: &ActionUnits,
) -> Result<Vec<Trajectory>, crate::sim::SimError> {
    use rayon::prelude::*;
    (0..count)
        .into_par_iter()
        .map(|i| {
            let world = nth_world(worlds, master_seed, i)?;
            oracle_trajectory(&world, &format!("ep-{i:05}"), units, &FollowerConfig::default())
        })
        .collect()
}

#[cfg(test)]
mod tests {
    use super::*;
    use crate::grammar::flatten;
    use crate::grammar::Action::*;

    fn straight(n: usize) -> Trajectory {
        let units = ActionUnits::default();
        let mut actions = vec![Forward; n];
        actions.push(Stop);
        Trajectory {
            episode_id: "t".into(),
            instruction: "go".into(),
            poses: crate::sim::episode::replay(&Pose::new(0.0, 0.0, 0.0), &actions, &units),
            actions,
            frame_refs: None,
        }
    }

    #[test]
    fn subsample_examples() {
        let eight: Vec<usize> = (0..8).collect();
        assert_eq!(subsample_history(&eight, 8), eight);
        let fifteen: Vec<usize> = (0..15).collect();
        assert_eq!(subsample_history(&fifteen, 8), vec![0, 2, 4, 6, 8, 10, 12, 14]);
        let nine: Vec<usize> = (10..19).collect();
        let s = subsample_history(&nine, 8);
        assert_eq!((s[0], s[7], s.len()), (10, 18, 8));
    }

    #[test]
    fn subsample_matches_float_rounding() {
        for len in 9..200usize {
            let idx: Vec<usize> = (0..len).collect();
            let want: Vec<usize> = (0..8)
                .map(|j| (j as f64 * (len - 1) as f64 / 7.0 + 0.5).floor() as usize)
                .collect();
            assert_eq!(subsample_history(&idx, 8), want, "len {len}");
        }
    }

    #[test]
    fn prompts() {
        let ids = render_prompt(PromptKind::Ids, None, 0).unwrap();
        assert!(ids.contains("an image of current view"));
        assert!(ids.contains("the goal view"));
        assert!(ids.contains("predict the navigation action"));
        let vln = render_prompt(PromptKind::Vln, Some("go left"), 3).unwrap();
        assert!(vln.contains("Your assigned task is: go left."));
        assert_eq!(vln.matches(IMAGE).count(), 4);
        let fds = render_prompt(PromptKind::Fds, Some("go left"), 2).unwrap();
        assert!(fds.contains("predict the future observation"));
        assert_eq!(render_prompt(PromptKind::Vln, None, 1), Err(IdsError::MissingInstruction));
    }

    #[test]
    fn single_chunk_trajectory() {
        let traj = Trajectory {
            actions: vec![Forward, Forward, TurnLeft, TurnLeft, Forward, Forward],
            ..straight(0)
        };
        let traj = Trajectory {
            poses: crate::sim::episode::replay(&Pose::new(0.0, 0.0, 0.0), &traj.actions, &ActionUnits::default()),
            ..traj
        };
        let cfg = HpacConfig {
            merge_prob: 1.0,
            ..HpacConfig::default()
        };
        let t = build_ids_triplets(&traj, &cfg, &ActionUnits::default()).unwrap();
        assert_eq!(t.len(), 1);
        assert_eq!((t[0].start_index, t[0].end_index), (0, 6));
        assert_eq!(t[0].label, "move forward 50 cm, turn left 30 degree, move forward 50 cm");
    }

    #[test]
    fn vln_windowing() {
        let units = ActionUnits::default();
        // p = 0: twelve (F,1) sub-chunks group into four chunks, then the stop chunk
        let traj = straight(12);
        let cfg = HpacConfig {
            merge_prob: 0.0,
            ..HpacConfig::default()
        };
        let samples = build_vln_samples(&traj, &cfg, &units, 3).unwrap();
        assert_eq!(samples.len(), 5);
        assert_eq!(samples[0].target.len(), 3);
        assert_eq!(samples[0].target[0], "move forward 25 cm, move forward 25 cm, move forward 25 cm");
        assert_eq!(samples[4].target, vec!["stop".to_string()]);
        assert_eq!(samples[3].target.len(), 2);
        assert_eq!(samples[4].history_indices, vec![0, 2, 3, 5, 7, 9, 10, 12]);
        assert!(samples[0].prompt.contains("historical observations:  and current"));
    }

    #[test]
    fn corrupted_pose_is_reported() {
        let units = ActionUnits::default();
        let mut traj = straight(6);
        assert!(validate_trajectory(&traj, &units).is_ok());
        traj.poses[3].x += 0.01;
        // step 2 lands wrong and step 3 starts wrong
        assert_eq!(validate_trajectory(&traj, &units).bad_steps, vec![2, 3]);
        assert!(matches!(
            build_ids_triplets(&traj, &HpacConfig::default(), &units),
            Err(IdsError::InvalidTrajectory { .. })
        ));
    }

    #[test]
    fn stats_basics() {
        let units = ActionUnits::default();
        let traj = Trajectory {
            actions: vec![Forward; 4],
            poses: crate::sim::episode::replay(&Pose::new(0.0, 0.0, 0.0), &[Forward; 4], &units),
            ..straight(0)
        };
        let cfg = HpacConfig {
            merge_prob: 1.0,
            ..HpacConfig::default()
        };
        let t = build_ids_triplets(&traj, &cfg, &units).unwrap();
        let stats = compute_stats(&t);
        assert_eq!(stats.chunk_size_histogram, BTreeMap::from([(4, 1)]));
        assert_eq!(stats.total_chunks, 1);
        assert_eq!(stats.progress_profile[0], Some(4.0));
        assert!(stats.progress_profile[1..].iter().all(Option::is_none));
    }

    #[test]
    fn labels_tile_generated_corpus() {
        let units = ActionUnits::default();
        let corpus = oracle_corpus(20, 11, &WorldGenConfig::default(), &units).unwrap();
        for traj in &corpus {
            assert!(validate_trajectory(traj, &units).is_ok());
            let t = build_ids_triplets(traj, &HpacConfig::default(), &units).unwrap();
            let mut labels = Vec::new();
            let mut at = 0;
            for tr in &t {
                assert_eq!(tr.start_index, at);
                at = tr.end_index;
                labels.push(crate::grammar::parse_chunk(&tr.label, &units).unwrap());
            }
            assert_eq!(at, traj.actions.len());
            assert_eq!(flatten(&labels), traj.actions);
        }
    }
}
