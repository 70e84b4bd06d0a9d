//! Property tests for the run-configuration format: any config the parser
//! accepts must round-trip through its canonical echo unchanged.

use dfpo_cli::config::RunConfig;
use proptest::prelude::*;

#[derive(Debug, Clone)]
struct Pieces {
    kind: &'static str,
    steps: usize,
    dt: f64,
    total_episodes: usize,
    hidden: Vec<usize>,
    activation: &'static str,
    init_scale: f64,
    learning_rate: f64,
    batch_size: usize,
    epochs: usize,
    seed: u64,
    matrix_diag: Option<Vec<f64>>,
    weight_bound: Option<f64>,
    score_form: &'static str,
}

fn pieces() -> impl Strategy<Value = Pieces> {
    (
        prop_oneof![Just("surface"), Just("grid"), Just("quadratic")],
        2usize..40,
        0.001f64..0.5,
        1usize..5000,
        prop::collection::vec(1usize..100, 1..4),
        prop_oneof![Just("tanh"), Just("softplus")],
        1e-4f64..2.0,
        (
            1e-5f64..0.1,
            1usize..200,
            1usize..80,
            any::<u64>(),
            prop::option::of(prop::collection::vec(0.05f64..4.0, 1..4)),
            prop::option::of(0.5f64..20.0),
            prop_oneof![Just("legendre"), Just("cost_only")],
        ),
    )
        .prop_map(
            |(
                kind,
                steps,
                dt,
                total_episodes,
                hidden,
                activation,
                init_scale,
                (learning_rate, batch_size, epochs, seed, matrix_diag, weight_bound, score_form),
            )| Pieces {
                kind,
                steps,
                dt,
                total_episodes,
                hidden,
                activation,
                init_scale,
                learning_rate,
                batch_size,
                epochs,
                seed,
                matrix_diag,
                weight_bound,
                score_form,
            },
        )
}

fn render(p: &Pieces) -> String {
    let mut text = String::new();
    text.push_str("# generated run configuration\n");
    text.push_str(&format!("env.kind = {}\n", p.kind));
    if p.kind == "quadratic" {
        if let Some(diag) = &p.matrix_diag {
            let list: Vec<String> = diag.iter().map(|v| format!("{v}")).collect();
            text.push_str(&format!("env.matrix_diag = {}\n", list.join(",")));
        }
    }
    text.push_str(&format!("env.steps = {}\n", p.steps));
    text.push_str(&format!("env.dt = {}\n", p.dt));
    text.push_str(&format!("env.score_form = {}\n", p.score_form));
    text.push_str("schedule.mode = budget\n");
    text.push_str(&format!("schedule.total_episodes = {}\n", p.total_episodes));
    let hidden: Vec<String> = p.hidden.iter().map(|w| w.to_string()).collect();
    text.push_str(&format!("net.hidden = {}\n", hidden.join(",")));
    text.push_str(&format!("net.activation = {}\n", p.activation));
    text.push_str(&format!("net.init_scale = {}\n", p.init_scale));
    text.push_str(&format!("optimizer.learning_rate = {}\n", p.learning_rate));
    text.push_str(&format!("optimizer.batch_size = {}\n", p.batch_size));
    text.push_str(&format!("optimizer.epochs = {}\n", p.epochs));
    if let Some(bound) = p.weight_bound {
        text.push_str(&format!("optimizer.weight_bound = {bound}\n"));
    }
    text.push_str(&format!("run.seed = {}\n", p.seed));
    text
}

proptest! {
    #![proptest_config(ProptestConfig::with_cases(48))]

    #[test]
    fn accepted_configs_round_trip_through_echo(p in pieces()) {
        // The budget must be spreadable over H−1 stages.
        prop_assume!(p.total_episodes >= p.steps - 1);
        let text = render(&p);
        let parsed = match RunConfig::parse(&text) {
            Ok(config) => config,
            // Strategies can produce rejectable combinations (e.g. budgets
            // below the stage count after rounding); skip those.
            Err(_) => return Ok(()),
        };
        let echoed = parsed.echo();
        let reparsed = RunConfig::parse(&echoed).expect("canonical echo must parse");
        prop_assert_eq!(&parsed, &reparsed);
        prop_assert_eq!(echoed.clone(), reparsed.echo(), "echo is a fixpoint");
    }

    #[test]
    fn duplicate_keys_are_always_rejected(p in pieces()) {
        let mut text = render(&p);
        text.push_str(&format!("env.steps = {}\n", p.steps));
        prop_assert!(RunConfig::parse(&text).is_err());
    }
}
