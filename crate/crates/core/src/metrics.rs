//! Navigation metrics: NE, SR, OSR, SPL and nDTW.

use std::fmt::Write as _;

use serde::{Deserialize, Serialize};
use thiserror::Error;

use crate::sim::episode::{dedup_positions, EpisodeResult};
use crate::sim::pose::{distance, Point};

#[derive(Debug, Error, Clone, PartialEq)]
pub enum MetricError {
    #[error("shortest-path length must be positive, got {0}")]
    NonPositiveReference(f64),
    #[error("path is empty")]
    EmptyPath,
    #[error("no episodes to aggregate")]
    EmptyCorpus,
    #[error("nDTW normalizer must be positive, got {0}")]
    NonPositiveEta(f64),
}

pub fn navigation_error(final_pos: Point, goal: Point) -> f64 {
    distance(final_pos, goal)
}

pub fn success(final_pos: Point, goal: Point, tau: f64, stopped: bool) -> bool {
    stopped && distance(final_pos, goal) <= tau
}

pub fn oracle_success(path: &[Point], goal: Point, tau: f64) -> Result<bool, MetricError> {
    if path.is_empty() {
        return Err(MetricError::EmptyPath);
    }
    Ok(path.iter().any(|&p| distance(p, goal) <= tau))
}

pub fn spl(success: bool, shortest: f64, actual: f64) -> Result<f64, MetricError> {
    if !(shortest > 0.0) {
        return Err(MetricError::NonPositiveReference(shortest));
    }
    Ok(if success { shortest / actual.max(shortest) } else { 0.0 })
}

pub fn path_length(path: &[Point]) -> f64 {
    path.windows(2).map(|w| distance(w[0], w[1])).sum()
}

/// Dynamic time warping cost with Euclidean point costs.
pub fn dtw(a: &[Point], b: &[Point]) -> Result<f64, MetricError> {
    if a.is_empty() || b.is_empty() {
        return Err(MetricError::EmptyPath);
    }
    let m = b.len();
    let mut prev = vec![f64::INFINITY; m + 1];
    let mut cur = vec![f64::INFINITY; m + 1];
    prev[0] = 0.0;
    for &p in a {
        cur[0] = f64::INFINITY;
        for j in 1..=m {
            let best = prev[j].min(cur[j - 1]).min(prev[j - 1]);
            cur[j] = distance(p, b[j - 1]) + best;
        }
        std::mem::swap(&mut prev, &mut cur);
    }
    Ok(prev[m])
}

pub fn ndtw(path: &[Point], reference: &[Point], eta: f64) -> Result<f64, MetricError> {
    if !(eta > 0.0) {
        return Err(MetricError::NonPositiveEta(eta));
    }
    Ok((-dtw(path, reference)? / eta).exp())
}

/// Normalizer for nDTW.
#[derive(Clone, Copy, Debug, Default, PartialEq, Eq, Serialize, Deserialize)]
#[serde(rename_all = "snake_case")]
pub enum EtaMode {
    /// `tau * |reference|`, with the reference counted in points.
    #[default]
    TauTimesReferenceLen,
    ShortestPathLength,
}

impl std::str::FromStr for EtaMode {
    type Err = String;

    fn from_str(s: &str) -> Result<Self, Self::Err> {
        match s {
            "tau_times_reference_len" => Ok(Self::TauTimesReferenceLen),
            "shortest_path_length" => Ok(Self::ShortestPathLength),
            _ => Err(format!(
                "unknown eta mode {s:?}; expected tau_times_reference_len or shortest_path_length"
            )),
        }
    }
}

#[derive(Clone, Copy, Debug, PartialEq, Serialize, Deserialize)]
pub struct EpisodeMetrics {
    pub ne: f64,
    pub success: bool,
    pub oracle_success: bool,
    pub spl: f64,
    pub ndtw: f64,
}

pub fn episode_metrics(ep: &EpisodeResult, eta_mode: EtaMode) -> Result<EpisodeMetrics, MetricError> {
    let path: Vec<Point> = ep.path.iter().map(|p| p.position()).collect();
    let last = *path.last().ok_or(MetricError::EmptyPath)?;
    let ok = success(last, ep.goal, ep.tau, ep.stopped);
    let walked = dedup_positions(path.iter().copied());
    let eta = match eta_mode {
        EtaMode::TauTimesReferenceLen => ep.tau * ep.reference_path.len() as f64,
        EtaMode::ShortestPathLength => ep.shortest_path_length,
    };
    Ok(EpisodeMetrics {
        ne: navigation_error(last, ep.goal),
        success: ok,
        oracle_success: oracle_success(&path, ep.goal, ep.tau)?,
        spl: spl(ok, ep.shortest_path_length, path_length(&path))?,
        ndtw: ndtw(&walked, &ep.reference_path, eta)?,
    })
}

#[derive(Clone, Debug, PartialEq, Serialize, Deserialize)]
pub struct MetricReport {
    pub episodes: usize,
    pub ne: f64,
    pub sr: f64,
    pub osr: f64,
    pub spl: f64,
    pub ndtw: f64,
    pub per_episode: Vec<EpisodeMetrics>,
}

pub fn aggregate(per_episode: Vec<EpisodeMetrics>) -> Result<MetricReport, MetricError> {
    if per_episode.is_empty() {
        return Err(MetricError::EmptyCorpus);
    }
    let n = per_episode.len() as f64;
    let mean = |f: fn(&EpisodeMetrics) -> f64| per_episode.iter().map(f).sum::<f64>() / n;
    Ok(MetricReport {
        episodes: per_episode.len(),
        ne: mean(|m| m.ne),
        sr: mean(|m| f64::from(u8::from(m.success))),
        osr: mean(|m| f64::from(u8::from(m.oracle_success))),
        spl: mean(|m| m.spl),
        ndtw: mean(|m| m.ndtw),
        per_episode,
    })
}

pub fn evaluate<'a>(
    episodes: impl IntoIterator<Item = &'a EpisodeResult>,
    eta_mode: EtaMode,
) -> Result<MetricReport, MetricError> {
    aggregate(
        episodes
            .into_iter()
            .map(|e| episode_metrics(e, eta_mode))
            .collect::<Result<_, _>>()?,
    )
}

impl MetricReport {
    /// Percent table; NE in meters.
    pub fn table<'a>(rows: impl IntoIterator<Item = (&'a str, &'a MetricReport)>) -> String {
        let rows: Vec<_> = rows.into_iter().collect();
        let w = rows.iter().map(|(n, _)| n.len()).max().unwrap_or(0).max(6);
        let mut out = String::new();
        let _ = writeln!(
            out,
            "{:<w$} {:>6} {:>6} {:>6} {:>6} {:>6} {:>6}",
            "method", "NE↓", "OS↑", "SR↑", "SPL↑", "nDTW↑", "eps"
        );
        for (name, r) in rows {
            let _ = writeln!(
                out,
                "{name:<w$} {:>6.2} {:>6.1} {:>6.1} {:>6.1} {:>6.1} {:>6}",
                r.ne,
                100.0 * r.osr,
                100.0 * r.sr,
                100.0 * r.spl,
                100.0 * r.ndtw,
                r.episodes
            );
        }
        out
    }
}

#[cfg(test)]
mod tests {
    use super::*;

    #[test]
    fn scalar_examples() {
        assert_eq!(navigation_error([1.0, 1.0], [1.0, 1.0]), 0.0);
        assert_eq!(navigation_error([0.0, 0.0], [3.0, 4.0]), 5.0);
        assert!(success([0.0, 2.9], [0.0, 0.0], 3.0, true));
        assert!(!success([0.0, 2.9], [0.0, 0.0], 3.0, false));
        assert!(success([0.0, 3.0], [0.0, 0.0], 3.0, true));
        assert!(!success([0.0, 3.0 + 1e-9], [0.0, 0.0], 3.0, true));
    }

    #[test]
    fn oracle_success_examples() {
        let through = [[-5.0, 0.0], [0.0, 0.0], [5.0, 0.0]];
        assert_eq!(oracle_success(&through, [0.0, 0.0], 1.0), Ok(true));
        assert_eq!(oracle_success(&through, [0.0, 10.0], 3.0), Ok(false));
        assert_eq!(oracle_success(&[], [0.0, 0.0], 3.0), Err(MetricError::EmptyPath));
    }

    #[test]
    fn spl_examples() {
        assert_eq!(spl(true, 4.0, 4.0), Ok(1.0));
        assert_eq!(spl(false, 4.0, 4.0), Ok(0.0));
        assert_eq!(spl(true, 4.0, 8.0), Ok(0.5));
        // a shorter-than-geodesic walk is capped at 1
        assert_eq!(spl(true, 4.0, 3.0), Ok(1.0));
        assert_eq!(spl(true, 0.0, 3.0), Err(MetricError::NonPositiveReference(0.0)));
    }

    #[test]
    fn ndtw_two_point_offset() {
        // 2x2 table: D11 = d, D22 = d + min(D12, D21, D11) = 2d
        let d = 0.7;
        let a = [[0.0, 0.0], [1.0, 0.0]];
        let b = [[0.0, d], [1.0, d]];
        let eta = 3.0;
        assert!((ndtw(&a, &b, eta).unwrap() - (-2.0 * d / eta).exp()).abs() < 1e-12);
        assert_eq!(ndtw(&a, &a, eta), Ok(1.0));
        assert_eq!(dtw(&a, &[]), Err(MetricError::EmptyPath));
    }

    #[test]
    fn aggregate_examples() {
        let good = EpisodeMetrics {
            ne: 0.0,
            success: true,
            oracle_success: true,
            spl: 1.0,
            ndtw: 1.0,
        };
        let bad = EpisodeMetrics {
            ne: 8.0,
            success: false,
            oracle_success: false,
            spl: 0.0,
            ndtw: 0.2,
        };
        let one = aggregate(vec![good]).unwrap();
        assert_eq!((one.sr, one.spl, one.osr), (1.0, 1.0, 1.0));
        let mixed = aggregate(vec![good, bad]).unwrap();
        assert_eq!(mixed.sr, 0.5);
        assert_eq!(mixed.ne, 4.0);
        assert_eq!(aggregate(vec![]), Err(MetricError::EmptyCorpus));
    }
}
