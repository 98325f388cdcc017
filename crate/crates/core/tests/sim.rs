use chunknav::grammar::{Action, ActionChunk, ActionUnits, SubChunk};
use chunknav::hpac::HpacConfig;
use chunknav::sim::episode::{replay, run_episode, ExecMode};
use chunknav::sim::policy::{NoiseModel, NoisyPolicy, OraclePolicy, ScriptedPolicy, StopPolicy};
use chunknav::sim::pose::kinematic_step;
use chunknav::sim::recover::{recover_chunk, RecoverError, RECOVER_TOLERANCE};
use chunknav::sim::worldgen::{nth_world, WorldGenConfig};
use chunknav::sim::{step, Pose, World};
use proptest::prelude::*;

fn units() -> ActionUnits {
    ActionUnits::default()
}

fn room() -> World {
    World::open(10.0, 10.0, 0.5, Pose::new(1.0, 1.0, 0.0), [8.5, 8.0]).unwrap()
}

#[test]
fn step_examples() {
    let w = World::open(4.0, 4.0, 0.5, Pose::new(0.25, 0.25, 0.0), [3.0, 3.0]).unwrap();
    let o = Pose::new(0.25, 0.25, 0.0);
    let (p, hit) = step(&o, Action::Forward, &w, &units());
    assert!(!hit);
    assert!(p.approx_eq(&Pose::new(0.5, 0.25, 0.0), 1e-12));
    let (p, _) = step(&o, Action::TurnLeft, &w, &units());
    assert_eq!(p, Pose::new(0.25, 0.25, 15.0));
    assert_eq!(step(&o, Action::Stop, &w, &units()), (o, false));

    let walled: World = "cell_size=0.5\n#####\n#S.##\n#..G#\n#####\n".parse().unwrap();
    let facing_wall = Pose::new(0.75, 1.25, 0.0);
    assert_eq!(step(&facing_wall, Action::Forward, &walled, &units()).1, false);
    let at_wall = Pose::new(1.4, 1.25, 0.0);
    assert_eq!(step(&at_wall, Action::Forward, &walled, &units()), (at_wall, true));
}

#[test]
fn oracle_succeeds_in_open_room() {
    let w = room();
    let mut p = OraclePolicy::new(units(), HpacConfig::default());
    let r = run_episode(&w, &mut p, ExecMode::All, &units(), 3).unwrap();
    assert!(r.stopped);
    assert_eq!(r.collisions, 0);
    assert!(r.path.last().unwrap().distance_to(w.goal) <= w.tau);
    assert_eq!(r.path.len(), r.atomic_step_count + 1);
    assert_eq!(r.path[0], w.start);
}

#[test]
fn immediate_stop_fails() {
    let w = room();
    let r = run_episode(&w, &mut StopPolicy, ExecMode::Entropy, &units(), 3).unwrap();
    assert!(r.stopped);
    assert_eq!(r.path.len(), 1);
    let m = chunknav::metrics::episode_metrics(&r, Default::default()).unwrap();
    assert!(!m.success);
}

#[test]
fn scripted_policy_exhaustion_is_a_policy_failure() {
    let w = room();
    let one = ActionChunk::new(vec![SubChunk::new(Action::Forward, 1).unwrap()]).unwrap();
    let mut p = ScriptedPolicy::new(units(), vec![vec![one]]);
    let err = run_episode(&w, &mut p, ExecMode::All, &units(), 3).unwrap_err();
    assert!(matches!(err, chunknav::sim::SimError::PolicyFailure(_)));
}

#[test]
fn oracle_succeeds_on_500_generated_worlds() {
    let cfg = WorldGenConfig::default();
    let mut failures = Vec::new();
    for i in 0..500 {
        let w = nth_world(&cfg, 42, i).unwrap();
        let mut p = OraclePolicy::new(units(), HpacConfig { seed: i as u64, ..HpacConfig::default() });
        let r = run_episode(&w, &mut p, ExecMode::All, &units(), 3).unwrap();
        let ok = r.stopped && r.path.last().unwrap().distance_to(w.goal) <= w.tau && r.collisions == 0;
        if !ok {
            failures.push(i);
        }
    }
    assert!(failures.is_empty(), "{failures:?}");
}

#[test]
fn truncation_never_hurts_the_oracle() {
    let cfg = WorldGenConfig::default();
    for i in 0..60 {
        let w = nth_world(&cfg, 8, i).unwrap();
        let hpac = HpacConfig { seed: i as u64, ..HpacConfig::default() };
        let all = run_episode(&w, &mut OraclePolicy::new(units(), hpac), ExecMode::All, &units(), 3).unwrap();
        let one =
            run_episode(&w, &mut OraclePolicy::new(units(), hpac), ExecMode::FixedTrunc(1), &units(), 3).unwrap();
        let ok = |r: &chunknav::sim::EpisodeResult| r.stopped && r.path.last().unwrap().distance_to(w.goal) <= w.tau;
        assert_eq!(ok(&all), ok(&one), "world {i}");
        assert!(one.queries.len() >= all.queries.len());
    }
}

#[test]
fn noisy_episodes_respect_walls_and_budget() {
    let cfg = WorldGenConfig::default();
    let noise = NoiseModel { q0: 0.3, growth: 0.3, miscalibration: 0.5 };
    for i in 0..40 {
        let mut w = nth_world(&cfg, 5, i).unwrap();
        w.t_max = 150;
        for mode in [ExecMode::All, ExecMode::Entropy, ExecMode::FixedTrunc(2)] {
            let mut p = NoisyPolicy::new(units(), HpacConfig { seed: i as u64, ..HpacConfig::default() }, noise);
            let r = run_episode(&w, &mut p, mode, &units(), 3).unwrap();
            assert!(r.atomic_step_count <= w.t_max);
            assert_eq!(r.path.len(), r.atomic_step_count + 1);
            for pose in &r.path {
                assert!(!w.point_blocked(pose.position()), "world {i} {mode}: {pose:?}");
            }
            for q in &r.queries {
                assert!(q.t_star >= 1 && q.t_star <= q.chunks.len());
            }
        }
    }
}

#[test]
fn exec_mode_text() {
    for m in [ExecMode::All, ExecMode::Entropy, ExecMode::FixedTrunc(2)] {
        assert_eq!(m.to_string().parse::<ExecMode>().unwrap(), m);
    }
    assert!("fixed:0".parse::<ExecMode>().is_err());
    assert!("some".parse::<ExecMode>().is_err());
}

fn lattice_chunk() -> impl Strategy<Value = Vec<Action>> {
    let turn = prop::sample::select(vec![Action::TurnLeft, Action::TurnRight]);
    (turn.clone(), 0usize..13, 0usize..20, turn, 0usize..13).prop_filter_map(
        "some motion",
        |(t1, n1, f, t2, n2)| {
            let mut v = vec![t1; n1];
            v.extend(std::iter::repeat(Action::Forward).take(f));
            v.extend(std::iter::repeat(t2).take(n2));
            (!v.is_empty()).then_some(v)
        },
    )
}

proptest! {
    #![proptest_config(ProptestConfig::with_cases(1000))]

    #[test]
    fn turns_compose(h in 0.0f64..360.0, k in 0usize..30) {
        let u = units();
        let p = Pose::new(1.0, 2.0, h);
        let back = kinematic_step(&kinematic_step(&p, Action::TurnLeft, &u), Action::TurnRight, &u);
        prop_assert!(back.approx_eq(&p, 1e-9));
        let full = (0..(360 / u.turn_deg) as usize * (k % 3 + 1)).fold(p, |q, _| kinematic_step(&q, Action::TurnRight, &u));
        prop_assert!(full.approx_eq(&p, 1e-9));
    }

    #[test]
    fn recovered_chunk_lands_on_the_end_pose(
        actions in lattice_chunk(),
        x in 5.0f64..15.0,
        y in 5.0f64..15.0,
        h in prop::sample::select(vec![0.0, 15.0, 90.0, 37.3, 211.7]),
    ) {
        let u = units();
        let start = Pose::new(x, y, h);
        let end = *replay(&start, &actions, &u).last().unwrap();
        prop_assume!(!end.approx_eq(&start, RECOVER_TOLERANCE));
        let c = recover_chunk(&start, &end, &u).unwrap();
        let reached = c.atomic_actions().fold(start, |p, a| kinematic_step(&p, a, &u));
        prop_assert!(reached.approx_eq(&end, RECOVER_TOLERANCE));
    }

    #[test]
    fn off_lattice_ends_are_rejected(
        actions in lattice_chunk(),
        dh in 0.5f64..14.5,
        r in 0.01f64..0.1,
        theta in 0.0f64..360.0,
        perturb_position in any::<bool>(),
    ) {
        let u = units();
        let start = Pose::new(10.0, 10.0, 0.0);
        let end = *replay(&start, &actions, &u).last().unwrap();
        let bad = if perturb_position {
            Pose::new(end.x + r * theta.to_radians().cos(), end.y + r * theta.to_radians().sin(), end.heading)
        } else {
            Pose::new(end.x, end.y, end.heading + dh)
        };
        prop_assert!(matches!(recover_chunk(&start, &bad, &u), Err(RecoverError::NotReachable(_))));
    }
}
