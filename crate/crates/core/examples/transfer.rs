//! Train on small instances and report exact values on a larger one.
//!
//! `cargo run --release --example transfer -- <sysadmin|wildfire|direct> [steps] [seed]`

use relnet::corpus;
use relnet::eval::{greedy_policy_value, random_policy_value, value_iteration};
use relnet::ground::ground;
use relnet::model::{DomainModel, InstanceContext, ModelConfig};
use relnet::train::{train, TrainConfig, TrainSinks};

fn main() {
    let args: Vec<String> = std::env::args().collect();
    let which = args.get(1).map(String::as_str).unwrap_or("sysadmin");
    let steps: u64 = args.get(2).and_then(|s| s.parse().ok()).unwrap_or(100_000);
    let seed: u64 = args.get(3).and_then(|s| s.parse().ok()).unwrap_or(0);
    let (domain, train_on, test_on): (&str, Vec<&str>, &str) = match which {
        "sysadmin" => (
            corpus::SYSADMIN_RING,
            vec![corpus::SYSADMIN_RING_3, corpus::SYSADMIN_RING_4, corpus::SYSADMIN_RING_5],
            corpus::SYSADMIN_RING_8,
        ),
        "wildfire" => (
            corpus::MINI_WILDFIRE,
            vec![corpus::MINI_WILDFIRE_2X1, corpus::MINI_WILDFIRE_3X1],
            corpus::MINI_WILDFIRE_2X3,
        ),
        _ => (corpus::MINI_WILDFIRE, vec![corpus::MINI_WILDFIRE_2X1], corpus::MINI_WILDFIRE_2X1),
    };
    let config = ModelConfig::default();
    let ctx_of = |inst: &str| {
        let tm = corpus::load(domain, inst).expect("bundled pair");
        InstanceContext::from_mdp(ground(&tm).expect("grounds"), &config)
    };
    let tm = corpus::load(domain, test_on).expect("bundled pair");
    let model = DomainModel::new(&tm.domain, config);
    let contexts: Vec<_> = train_on.iter().map(|i| ctx_of(i)).collect();
    let test = ctx_of(test_on);
    let gamma = test.mdp.discount;
    let v_star = value_iteration(&test.mdp).expect("oracle").value;
    let v_rand = random_policy_value(&test.mdp, gamma).expect("oracle");
    println!("V* = {v_star:.4}, V_rand = {v_rand:.4}");
    let mut params = model.init_params(seed);
    let chunk = (steps / 10).max(1);
    for round in 1..=10 {
        let cfg = TrainConfig {
            total_steps: chunk,
            workers: 1,
            seed: seed + round,
            log_every: u64::MAX / 2,
            ..TrainConfig::default()
        };
        let out = train(&model, &contexts, params, &cfg, TrainSinks::default()).expect("training");
        params = out.params;
        let v = greedy_policy_value(&model, &params, &test, gamma).expect("oracle");
        println!(
            "{:>8} steps  {:.1}s  V = {v:.4}  alpha = {:.3}",
            chunk * round,
            out.seconds,
            (v - v_rand) / (v_star - v_rand)
        );
    }
}
