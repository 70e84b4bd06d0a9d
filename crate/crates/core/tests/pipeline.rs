//! End-to-end integration tests across the public API: the full stage loop,
//! its bookkeeping, determinism under thread caps, and environment rollouts.

use dfpo_core::dynamics::{AnalyticHamiltonian, DynamicsOperator, ScoreForm};
use dfpo_core::envs::Env;
use dfpo_core::eval::{eval_terminal, pointwise_error};
use dfpo_core::linalg::SpdMatrix;
use dfpo_core::net::ScoreNet;
use dfpo_core::parallel::set_thread_cap;
use dfpo_core::phase::PhasePoint;
use dfpo_core::rng::stream;
use dfpo_core::trainer::{
    expected_memory_size, make_schedule, run_stage, train, NetConfig, OptConfig, ReplayMemory,
    ScheduleMode,
};
use proptest::prelude::*;

fn quad_env(horizon: usize) -> Env {
    Env::quadratic(SpdMatrix::identity(2), horizon, 0.1, ScoreForm::Legendre).unwrap()
}

#[test]
fn train_history_is_consistent_with_the_schedule() {
    let env = quad_env(5);
    let schedule = make_schedule(ScheduleMode::Budget { total_episodes: 200 }, 5, 0.05).unwrap();
    let (net, history) =
        train(&env, &schedule, &NetConfig::default(), &OptConfig::default(), 11).unwrap();

    assert_eq!(history.stages.len(), 4);
    assert_eq!(history.snapshots.len(), 5, "theta_0 plus one snapshot per stage");
    assert_eq!(history.episodes.len(), schedule.per_stage.iter().sum::<usize>());
    assert_eq!(net.flat_params(), history.snapshots.last().unwrap().flat_params());

    for (i, record) in history.stages.iter().enumerate() {
        let stage = i + 1;
        assert_eq!(record.stage, stage);
        assert_eq!(record.samples_added, schedule.per_stage[i] * stage.saturating_sub(1).max(1));
        assert_eq!(record.memory_size, expected_memory_size(&schedule.per_stage, stage));
        assert!(!record.losses.is_empty() && record.losses.iter().all(|l| l.is_finite()));
    }
    for episode in &history.episodes {
        assert!(episode.terminal_score.is_finite());
        assert!((1..=4).contains(&episode.stage));
    }
}

#[test]
fn training_improves_the_one_step_operator_on_the_quadratic_oracle() {
    let env = quad_env(6);
    let schedule = make_schedule(ScheduleMode::Budget { total_episodes: 800 }, 6, 0.05).unwrap();
    let (net, history) =
        train(&env, &schedule, &NetConfig::default(), &OptConfig::default(), 3).unwrap();
    let oracle = AnalyticHamiltonian::Quadratic { matrix: SpdMatrix::identity(2) };

    let trained = DynamicsOperator::new(env.dt(), &net);
    let untrained = DynamicsOperator::new(env.dt(), &history.snapshots[0]);
    let trained_err = pointwise_error(&trained, &oracle, 1, 300, 3).unwrap();
    let untrained_err = pointwise_error(&untrained, &oracle, 1, 300, 3).unwrap();
    assert!(
        trained_err.mean < 0.6 * untrained_err.mean,
        "one-step error should drop well below the near-identity baseline: \
         trained {:.4} vs untrained {:.4}",
        trained_err.mean,
        untrained_err.mean
    );
}

#[test]
fn manual_stage_loop_reproduces_train() {
    let env = quad_env(4);
    let schedule = make_schedule(ScheduleMode::Budget { total_episodes: 90 }, 4, 0.05).unwrap();
    let net_config = NetConfig::default();
    let opt_config = OptConfig::default();
    let seed = 29;
    let (from_train, _) = train(&env, &schedule, &net_config, &opt_config, seed).unwrap();

    let mut rng = stream(seed, "theta0", 0);
    let mut net = ScoreNet::init_random(
        net_config.widths(env.phase_dim()),
        net_config.activation,
        net_config.init_scale,
        &mut rng,
    )
    .unwrap();
    let mut memory = ReplayMemory::new();
    for stage in 1..env.horizon() {
        let (next, _, _) =
            run_stage(stage, &net, &mut memory, &env, schedule.per_stage[stage - 1], &opt_config, seed)
                .unwrap();
        net = next;
    }
    assert_eq!(net.flat_params(), from_train.flat_params(), "stage-by-stage loop must be bitwise identical");
}

#[test]
fn results_are_identical_under_different_thread_caps() {
    let env = quad_env(4);
    let schedule = make_schedule(ScheduleMode::Budget { total_episodes: 60 }, 4, 0.05).unwrap();
    set_thread_cap(1);
    let (serial, _) = train(&env, &schedule, &NetConfig::default(), &OptConfig::default(), 7).unwrap();
    set_thread_cap(3);
    let (threaded, _) = train(&env, &schedule, &NetConfig::default(), &OptConfig::default(), 7).unwrap();
    set_thread_cap(0);
    assert_eq!(serial.flat_params(), threaded.flat_params());
}

#[test]
fn identity_policy_episodes_on_the_benchmark_envs_are_well_formed() {
    for env in [
        Env::surface(16, 6, 0.01, ScoreForm::Legendre).unwrap(),
        Env::grid(5, 2, 6, 0.01, ScoreForm::Legendre).unwrap(),
    ] {
        let zeros = ScoreNet::zeros(vec![env.phase_dim(), 8, 1], dfpo_core::net::Activation::Tanh).unwrap();
        let policy = DynamicsOperator::new(env.dt(), &zeros);
        let mut rng = stream(13, "starts", 0);
        let starts: Vec<PhasePoint> = (0..4).map(|_| env.sample_start(&mut rng)).collect();
        let result = env.query(&policy, &starts);

        assert!(result.failed_indices().is_empty(), "{:?} episodes failed", env.kind());
        for (start, trajectory) in result.starts.iter().zip(&result.trajectories) {
            let trajectory = trajectory.as_ref().unwrap();
            assert_eq!(trajectory.len(), env.horizon(), "points j = 0 … H−1");
            assert_eq!(trajectory.scores.len(), env.horizon());
            assert!(trajectory.scores.iter().all(|s| s.is_finite()));
            // A zero score network moves nothing: every point equals the start.
            for point in &trajectory.points {
                assert_eq!(point.to_flat(), start.to_flat());
            }
            assert!((trajectory.terminal_score() - env.score(start).unwrap()).abs() <= 1e-15);
        }
    }
}

#[test]
fn terminal_evaluation_of_the_identity_policy_reports_start_costs() {
    let env = quad_env(6);
    let zeros = ScoreNet::zeros(vec![env.phase_dim(), 8, 1], dfpo_core::net::Activation::Tanh).unwrap();
    let policy = DynamicsOperator::new(env.dt(), &zeros);
    let report = eval_terminal(&env, &policy, 50, 21);

    assert_eq!(report.episodes.len(), 50);
    assert_eq!(report.failed, 0);
    assert_eq!(report.step_mean_costs.len(), env.horizon());
    let first = report.step_mean_costs[0];
    for step_mean in &report.step_mean_costs {
        assert!((step_mean - first).abs() < 1e-12, "identity policy keeps the cost constant");
    }
    assert!((report.mean - first).abs() < 1e-12);
}

proptest! {
    #![proptest_config(ProptestConfig::with_cases(24))]

    #[test]
    fn budget_schedules_cover_every_stage(horizon in 2usize..12, total in 1usize..4000) {
        prop_assume!(total >= horizon - 1);
        let schedule = make_schedule(ScheduleMode::Budget { total_episodes: total }, horizon, 0.05).unwrap();
        prop_assert_eq!(schedule.per_stage.len(), horizon - 1);
        let expected = total.div_ceil(horizon - 1);
        prop_assert!(schedule.per_stage.iter().all(|&n| n == expected));
        prop_assert!(schedule.per_stage.iter().sum::<usize>() >= total);

        prop_assert_eq!(schedule.deltas.len(), horizon - 1);
        for (i, pair) in schedule.deltas.windows(2).enumerate() {
            let ratio = pair[1] / pair[0];
            prop_assert!((ratio - 3.0).abs() < 1e-12, "delta_{} ratio {}", i + 1, ratio);
        }
    }

    #[test]
    fn memory_counting_rule_matches_a_direct_sum(
        horizon in 2usize..10,
        per in 1usize..40,
    ) {
        let per_stage = vec![per; horizon - 1];
        let mut direct = 0usize;
        for stage in 1..horizon {
            direct += per * stage.saturating_sub(1).max(1);
            prop_assert_eq!(expected_memory_size(&per_stage, stage), direct);
        }
    }
}
