use chunknav::grammar::ActionUnits;
use chunknav::hpac::HpacConfig;
use chunknav::metrics::{dtw, episode_metrics, evaluate, navigation_error, ndtw, EtaMode};
use chunknav::sim::episode::{run_episode, ExecMode};
use chunknav::sim::policy::{NoiseModel, NoisyPolicy};
use chunknav::sim::pose::Point;
use chunknav::sim::worldgen::{nth_world, WorldGenConfig};
use proptest::prelude::*;

/// Minimum cost over every monotone warping path, enumerated recursively.
fn dtw_enumerated(a: &[Point], b: &[Point]) -> f64 {
    fn cost(p: Point, q: Point) -> f64 {
        ((p[0] - q[0]).powi(2) + (p[1] - q[1]).powi(2)).sqrt()
    }
    fn walk(a: &[Point], b: &[Point], i: usize, j: usize, acc: f64, best: &mut f64) {
        let acc = acc + cost(a[i], b[j]);
        if i + 1 == a.len() && j + 1 == b.len() {
            *best = best.min(acc);
            return;
        }
        if i + 1 < a.len() {
            walk(a, b, i + 1, j, acc, best);
        }
        if j + 1 < b.len() {
            walk(a, b, i, j + 1, acc, best);
        }
        if i + 1 < a.len() && j + 1 < b.len() {
            walk(a, b, i + 1, j + 1, acc, best);
        }
    }
    let mut best = f64::INFINITY;
    walk(a, b, 0, 0, 0.0, &mut best);
    best
}

const GRID: [f64; 3] = [0.0, 1.0, 2.5];

fn grid_points() -> Vec<Point> {
    GRID.iter().flat_map(|&x| GRID.iter().map(move |&y| [x, y])).collect()
}

#[test]
fn dtw_matches_enumeration_on_small_paths() {
    let pts = grid_points();
    let mut paths: Vec<Vec<Point>> = Vec::new();
    // every path of length 1..=3 over the grid, plus a sample of longer ones
    for len in 1..=3usize {
        let mut idx = vec![0usize; len];
        loop {
            paths.push(idx.iter().map(|&k| pts[k]).collect());
            let mut d = 0;
            while d < len {
                idx[d] += 1;
                if idx[d] < pts.len() {
                    break;
                }
                idx[d] = 0;
                d += 1;
            }
            if d == len {
                break;
            }
        }
    }
    for k in 0..200usize {
        let len = 4 + k % 3;
        paths.push((0..len).map(|j| pts[(k * 7 + j * 5) % pts.len()]).collect());
    }
    let probe: Vec<&Vec<Point>> = paths.iter().step_by(37).collect();
    for a in &probe {
        for b in &probe {
            let want = dtw_enumerated(a, b);
            assert!((dtw(a, b).unwrap() - want).abs() < 1e-9, "{a:?} {b:?}");
        }
    }
}

fn arb_path(max: usize) -> impl Strategy<Value = Vec<Point>> {
    prop::collection::vec((-5.0f64..5.0, -5.0f64..5.0).prop_map(|(x, y)| [x, y]), 1..=max)
}

proptest! {
    #![proptest_config(ProptestConfig::with_cases(500))]

    #[test]
    fn dtw_matches_enumeration_on_random_paths(a in arb_path(6), b in arb_path(6)) {
        prop_assert!((dtw(&a, &b).unwrap() - dtw_enumerated(&a, &b)).abs() < 1e-9);
    }

    #[test]
    fn dtw_is_symmetric(a in arb_path(12), b in arb_path(12)) {
        prop_assert!((dtw(&a, &b).unwrap() - dtw(&b, &a).unwrap()).abs() < 1e-9);
    }

    #[test]
    fn ndtw_is_bounded_and_translation_invariant(
        a in arb_path(10),
        b in arb_path(10),
        dx in -20.0f64..20.0,
        dy in -20.0f64..20.0,
        eta in 0.1f64..30.0,
    ) {
        let v = ndtw(&a, &b, eta).unwrap();
        prop_assert!(v > 0.0 && v <= 1.0);
        let shift = |p: &Vec<Point>| p.iter().map(|q| [q[0] + dx, q[1] + dy]).collect::<Vec<_>>();
        prop_assert!((ndtw(&shift(&a), &shift(&b), eta).unwrap() - v).abs() < 1e-9);
        prop_assert_eq!(ndtw(&a, &a, eta).unwrap(), 1.0);
    }

    #[test]
    fn navigation_error_is_euclidean(a in (-50.0f64..50.0, -50.0f64..50.0), b in (-50.0f64..50.0, -50.0f64..50.0)) {
        let want = ((a.0 - b.0) * (a.0 - b.0) + (a.1 - b.1) * (a.1 - b.1)).sqrt();
        prop_assert!((navigation_error([a.0, a.1], [b.0, b.1]) - want).abs() < 1e-9);
    }
}

#[test]
fn metric_implications_on_evaluated_corpora() {
    let units = ActionUnits::default();
    let cfg = WorldGenConfig::default();
    for (noise, mode) in [
        (NoiseModel { q0: 0.0, growth: 0.0, miscalibration: 0.0 }, ExecMode::All),
        (NoiseModel::default(), ExecMode::All),
        (NoiseModel::default(), ExecMode::Entropy),
        (NoiseModel { q0: 0.3, growth: 0.3, miscalibration: 0.5 }, ExecMode::FixedTrunc(2)),
    ] {
        let episodes: Vec<_> = (0..60)
            .map(|i| {
                let w = nth_world(&cfg, 17, i).unwrap();
                let mut p = NoisyPolicy::new(units, HpacConfig { seed: i as u64, ..HpacConfig::default() }, noise);
                run_episode(&w, &mut p, mode, &units, 3).unwrap()
            })
            .collect();
        for eta in [EtaMode::TauTimesReferenceLen, EtaMode::ShortestPathLength] {
            let report = evaluate(&episodes, eta).unwrap();
            assert!(0.0 <= report.spl && report.spl <= report.sr && report.sr <= report.osr && report.osr <= 1.0);
            for (ep, m) in episodes.iter().zip(&report.per_episode) {
                assert!(m.spl <= f64::from(u8::from(m.success)));
                assert!(m.oracle_success || !m.success);
                assert!(m.ndtw > 0.0 && m.ndtw <= 1.0);
                assert_eq!(*m, episode_metrics(ep, eta).unwrap());
            }
        }
    }
}
