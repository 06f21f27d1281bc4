mod common;

use common::{max_relative_error, random_batch};
use kraft::agent::QNetwork;
use proptest::prelude::*;
use rand::SeedableRng;
use rand_chacha::ChaCha8Rng;

#[test]
fn gradient_matches_finite_differences_4_8_3() {
    let mut rng = ChaCha8Rng::seed_from_u64(11);
    let net = QNetwork::new(&[4, 8, 3], &mut rng).unwrap();
    let target = QNetwork::new(&[4, 8, 3], &mut rng).unwrap();
    let batch = random_batch(&mut rng, 4, 3, 5);
    let err = max_relative_error(&net, &target, &batch, 1e-4);
    assert!(err <= 1e-4, "max relative error {err}");
}

proptest! {
    #![proptest_config(ProptestConfig::with_cases(24))]
    #[test]
    fn gradient_check_on_random_nets(seed in any::<u64>(), hidden in 2usize..7, n_in in 1usize..5, n_out in 1usize..4) {
        let mut rng = ChaCha8Rng::seed_from_u64(seed);
        let net = QNetwork::new(&[n_in, hidden, n_out], &mut rng).unwrap();
        let target = QNetwork::new(&[n_in, hidden, n_out], &mut rng).unwrap();
        let batch = random_batch(&mut rng, n_in, n_out, 4);
        // a ReLU kink inside the probe interval breaks the finite difference,
        // so the looser bound only guards against systematic errors
        let err = max_relative_error(&net, &target, &batch, 1e-6);
        prop_assert!(err <= 1e-3, "max relative error {}", err);
    }
}

#[test]
fn identical_seeds_train_identically() {
    let run = || {
        let mut agent = kraft::agent::DqnAgent::new(3, 2, kraft::agent::AgentConfig { seed: 4, ..Default::default() }).unwrap();
        let mut rng = ChaCha8Rng::seed_from_u64(0);
        for t in random_batch(&mut rng, 3, 2, 40) {
            agent.observe(t);
            agent.train_step().unwrap();
        }
        agent.network().clone()
    };
    assert_eq!(run(), run());
}
