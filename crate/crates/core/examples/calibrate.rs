//! Desk calibration for the benchmark environments.
//!
//! Prints, per environment: the mean start cost, the terminal cost of an
//! untrained (freshly initialized) policy, the terminal cost of the oracle
//! policy that follows the true score gradient, and measured throughput for
//! episode generation and gradient steps. These numbers back the default
//! network/optimizer settings and the expected wall time of a full run.
//!
//! Run with: `cargo run --release -p dfpo-core --example calibrate`

use std::time::Instant;

use dfpo_core::dynamics::{DynamicsOperator, ScoreForm};
use dfpo_core::envs::Env;
use dfpo_core::eval::eval_terminal;
use dfpo_core::net::{Grads, LabeledSample, Provenance, Scratch, ScoreNet};
use dfpo_core::rng::stream;
use dfpo_core::trainer::{expected_memory_size, make_schedule, NetConfig, ScheduleMode};

fn mean(values: &[f64]) -> f64 {
    values.iter().sum::<f64>() / values.len().max(1) as f64
}

fn calibrate(name: &str, env: &Env, n_untrained: usize, n_oracle: usize) {
    let net_config = NetConfig::default();
    let mut rng = stream(1, "theta0", 0);
    let net = ScoreNet::init_random(
        net_config.widths(env.phase_dim()),
        net_config.activation,
        net_config.init_scale,
        &mut rng,
    )
    .unwrap();

    // Start-cost distribution (what an identity policy would score).
    let mut start_rng = stream(2, "calibrate-starts", 0);
    let start_costs: Vec<f64> = (0..n_untrained)
        .filter_map(|_| env.cost(&env.sample_start(&mut start_rng).s).ok())
        .collect();

    // Untrained policy, with episode throughput.
    let policy = DynamicsOperator::new(env.dt(), &net);
    let t0 = Instant::now();
    let untrained = eval_terminal(env, &policy, n_untrained, 3);
    let episodes_per_s = untrained.episodes.len() as f64 / t0.elapsed().as_secs_f64();

    // Oracle policy: finite-difference score gradient, expensive but exact
    // in the limit — the ceiling a perfectly trained operator approaches.
    let score = env.score_function();
    let oracle_policy = DynamicsOperator::new(env.dt(), &score);
    let t0 = Instant::now();
    let oracle = eval_terminal(env, &oracle_policy, n_oracle, 3);
    let oracle_s = t0.elapsed().as_secs_f64();

    // Cost-gradient magnitude at the starts, and the energy-conservation
    // ceiling on how far the dual flow can lower the cost from rest over one
    // episode: the flow conserves ½‖p‖² + F, so ΔF ≤ ½‖p(T)‖² ≈ ½T²‖∇F‖²
    // while the gradient stays roughly constant.
    use dfpo_core::dynamics::ScoreFunction;
    let mut grad_rng = stream(5, "calibrate-grads", 0);
    let grad_norms: Vec<f64> = (0..5)
        .map(|_| {
            let x = env.sample_start(&mut grad_rng);
            let g = score.gradient(&x.to_flat());
            g.iter().map(|v| v * v).sum::<f64>().sqrt()
        })
        .collect();
    let grad_norm = mean(&grad_norms);
    let horizon_t = env.dt() * env.horizon() as f64;
    let descent_ceiling = 0.5 * horizon_t * horizon_t * grad_norm * grad_norm;

    // Gradient-step throughput on synthetic samples at this input width.
    let dim = env.phase_dim();
    let mut xrng = stream(4, "calibrate-sgd", 0);
    let samples: Vec<LabeledSample> = (0..512)
        .map(|_| {
            use rand::Rng;
            let x: Vec<f64> = (0..dim).map(|_| xrng.gen_range(-1.0..1.0)).collect();
            LabeledSample { x, y: 1.0, stage: 1, provenance: Provenance::TrueScore }
        })
        .collect();
    let mut scratch = Scratch::for_net(&net);
    let mut grads = Grads::zeros_like(&net);
    let t0 = Instant::now();
    let mut visits = 0usize;
    while t0.elapsed().as_secs_f64() < 1.0 {
        for sample in &samples {
            net.accumulate_sample(&sample.x, sample.y, 1.0, &mut scratch, &mut grads);
        }
        visits += samples.len();
    }
    let visits_per_s = visits as f64 / t0.elapsed().as_secs_f64();

    // Projected wall time of the full default run (epochs as an upper bound).
    let schedule = make_schedule(ScheduleMode::Budget { total_episodes: 5000 }, env.horizon(), 0.05).unwrap();
    let total_episodes: usize = schedule.per_stage.iter().sum();
    let total_visits: usize = (1..=schedule.stage_count())
        .map(|k| expected_memory_size(&schedule.per_stage, k))
        .sum();
    let projected_min =
        (total_episodes as f64 / episodes_per_s + 50.0 * total_visits as f64 / visits_per_s) / 60.0;

    println!("== {name} (state {}, phase {}) ==", env.state_dim(), env.phase_dim());
    println!("  start cost mean            {:>9.4}  ({} samples)", mean(&start_costs), start_costs.len());
    println!(
        "  untrained terminal mean    {:>9.4}  ({} ok, {} failed)",
        untrained.mean,
        untrained.episodes.len(),
        untrained.failed
    );
    println!(
        "  oracle terminal mean       {:>9.4}  ({} ok, {} failed, {:.1}s)",
        oracle.mean,
        oracle.episodes.len(),
        oracle.failed,
        oracle_s
    );
    println!("  start ‖∇F‖ mean            {grad_norm:>9.3}");
    println!("  energy descent ceiling     {descent_ceiling:>9.3}  (≈ ½T²‖∇F‖², T = {horizon_t})");
    println!("  episodes/s (net policy)    {episodes_per_s:>9.1}");
    println!("  grad sample visits/s       {visits_per_s:>9.0}");
    println!("  projected full run         {projected_min:>9.1} min (50-epoch upper bound)");
}

fn main() {
    let surface = Env::surface(64, 20, 0.01, ScoreForm::Legendre).unwrap();
    calibrate("surface n=64", &surface, 200, 30);

    let grid21 = Env::grid(21, 4, 20, 0.01, ScoreForm::Legendre).unwrap();
    calibrate("grid m=21 ff=4", &grid21, 100, 10);

    let grid25 = Env::grid(25, 4, 20, 0.01, ScoreForm::Legendre).unwrap();
    calibrate("grid m=25 ff=4", &grid25, 100, 10);
}
