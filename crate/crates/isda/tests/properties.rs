//! Randomized structural properties that hold on every trajectory, checked
//! with proptest on top of the deterministic simulator.

use isda::ce::{select_elites, update_distribution};
use isda::mac::{
    contention_round, run_episode, run_slot, ConstPolicy, ContentionOutcome, MacConfig, Scenario,
};
use isda::model::{
    can_transmit, initial_state, step_aoi, step_idt_eh, step_queue, AoiState, IdtEhState,
    InnerState, QueueState, TerminalConfig,
};
use isda::policy::{forward, NetShape, PolicyParams};
use isda::rng::baseline_rng;
use proptest::prelude::*;
use rand::{Rng, SeedableRng};
use rand_chacha::ChaCha8Rng;

/// Drive one terminal of each kind through a random trajectory and check the
/// per-slot structural invariants along the way: the buffered packet is
/// always fresher than the destination's information, ages and gaps grow by
/// exactly one without a delivery, energy moves by at most one unit and stays
/// within the buffer, and the queue obeys its one-step recursion.
fn check_trajectory(seed: u64, slots: usize) {
    let mut rng = ChaCha8Rng::seed_from_u64(seed);
    let mut aoi = AoiState { buffered_age: None, destination_aoi: 1 };
    let cap = 2u32;
    let mut idt = IdtEhState { elapsed_since_delivery: 1, energy_level: 0, energy_capacity: cap };
    let mut queue = QueueState { queue_length: 0 };

    for _ in 0..slots {
        // AoI terminal; a lone transmitter always delivers here, contention is
        // exercised separately.
        let arrival = rng.random::<f64>() < 0.35;
        let post = aoi.after_arrival(arrival);
        if let Some(a) = post.buffered_age {
            assert!(a < post.destination_aoi, "buffered packet must be fresher");
        }
        let deliver = post.buffered_age.is_some() && rng.random::<f64>() < 0.5;
        let next = step_aoi(aoi, arrival, deliver);
        if deliver {
            assert_eq!(next.destination_aoi, post.buffered_age.unwrap() + 1);
            assert_eq!(next.buffered_age, None);
        } else {
            assert_eq!(next.destination_aoi, post.destination_aoi + 1);
        }
        if let Some(a) = next.buffered_age {
            assert!(a < next.destination_aoi);
        }
        aoi = next;

        let harvest = rng.random::<f64>() < 0.4;
        let post = idt.after_arrival(harvest);
        let transmit = post.energy_level >= 1 && rng.random::<f64>() < 0.5;
        let next = step_idt_eh(idt, harvest, transmit, transmit);
        let delta = next.energy_level as i64 - idt.energy_level as i64;
        assert!((-1..=1).contains(&delta), "energy moves by at most one unit");
        assert!(next.energy_level <= cap);
        if transmit {
            assert_eq!(next.elapsed_since_delivery, 1);
        } else {
            assert_eq!(next.elapsed_since_delivery, idt.elapsed_since_delivery + 1);
        }
        idt = next;

        let arrival = rng.random::<f64>() < 0.35;
        let post = queue.after_arrival(arrival);
        let deliver = post.queue_length >= 1 && rng.random::<f64>() < 0.5;
        let next = step_queue(queue, arrival, deliver);
        let delta = next.queue_length as i64 - queue.queue_length as i64;
        assert!((-1..=1).contains(&delta));
        queue = next;
    }
}

#[test]
fn long_trajectory_invariants() {
    check_trajectory(0xABCD, 100_000);
}

fn three_terminal_scenario() -> Scenario<f64> {
    Scenario {
        terminals: vec![
            TerminalConfig::aoi(0.2f64, 1.0),
            TerminalConfig::idt_eh(0.3f64, 1, 1.0),
            TerminalConfig::queue(0.2f64, 1.0),
        ],
        mac: MacConfig {
            data_slot_ms: 1.0,
            mini_slot_ms: 0.25,
            mini_slot_count: 2,
            count_overhead_in_time: false,
        },
    }
}

proptest! {
    #![proptest_config(ProptestConfig::with_cases(64))]

    #[test]
    fn trajectory_invariants_hold(seed in any::<u64>()) {
        check_trajectory(seed, 2_000);
    }

    #[test]
    fn contention_respects_eligibility(
        seed in any::<u64>(),
        probs in proptest::collection::vec(0.0f64..=1.0, 1..=5),
        eligible in proptest::collection::vec(any::<bool>(), 5),
        k in 1usize..=4,
    ) {
        let n = probs.len();
        let eligible = &eligible[..n];
        let mut rng = ChaCha8Rng::seed_from_u64(seed);
        match contention_round(&probs, eligible, k, &mut rng).unwrap() {
            ContentionOutcome::Success(i) => prop_assert!(eligible[i]),
            ContentionOutcome::Collision(who) => {
                prop_assert!(who.len() >= 2);
                for &i in &who {
                    prop_assert!(eligible[i]);
                }
            }
            ContentionOutcome::Idle => {}
        }
    }

    #[test]
    fn slot_delivers_at_most_one(seed in any::<u64>(), p in 0.0f64..=1.0) {
        let scenario = three_terminal_scenario();
        let rates = [0.2, 0.3, 0.2];
        let mut rng = ChaCha8Rng::seed_from_u64(seed);
        let mut states: Vec<InnerState> =
            scenario.terminals.iter().map(initial_state).collect();
        for _ in 0..50 {
            let post: Vec<InnerState> = states
                .iter()
                .zip(rates)
                .map(|(s, lambda)| s.after_arrival(rng.random::<f64>() < lambda))
                .collect();
            let result = run_slot(&post, &[p; 3], 2, &mut rng).unwrap();
            prop_assert!(result.delivered.iter().filter(|&&d| d).count() <= 1);
            for i in 0..3 {
                if !can_transmit(&post[i]) {
                    prop_assert!(!result.transmitted[i]);
                }
                if result.delivered[i] {
                    prop_assert!(result.transmitted[i]);
                }
            }
            states = post
                .iter()
                .zip(&result.transmitted)
                .zip(&result.delivered)
                .map(|((s, &tx), &del)| match s {
                    InnerState::Aoi(a) => InnerState::Aoi(step_aoi(*a, false, del)),
                    InnerState::IdtEh(e) => InnerState::IdtEh(step_idt_eh(*e, false, tx, del)),
                    InnerState::Queue(q) => InnerState::Queue(step_queue(*q, false, del)),
                })
                .collect();
        }
    }

    #[test]
    fn episode_is_bit_reproducible(seed in any::<u64>()) {
        let scenario = three_terminal_scenario();
        let a = run_episode(&scenario, &ConstPolicy(0.4f64), 200, &mut baseline_rng(seed)).unwrap();
        let b = run_episode(&scenario, &ConstPolicy(0.4f64), 200, &mut baseline_rng(seed)).unwrap();
        prop_assert_eq!(a, b);
    }

    #[test]
    fn full_elite_fraction_refits_to_plain_average(
        seed in any::<u64>(),
        n in 2usize..=20,
    ) {
        let mut rng = ChaCha8Rng::seed_from_u64(seed);
        let params: Vec<PolicyParams<f64>> = (0..n)
            .map(|_| PolicyParams::new((0..4).map(|_| rng.random::<f64>() * 4.0 - 2.0).collect()))
            .collect();
        let costs: Vec<f64> = (0..n).map(|_| rng.random::<f64>()).collect();
        let elites = select_elites(&costs, 1.0).unwrap();
        prop_assert_eq!(elites.len(), n);
        let updated = update_distribution(&params, 0.0, 0).unwrap();
        for j in 0..4 {
            let avg = params.iter().map(|p| p.values[j]).sum::<f64>() / n as f64;
            prop_assert!((updated.mean[j] - avg).abs() < 1e-12);
        }
    }

    #[test]
    fn policy_output_is_a_probability(
        w in proptest::collection::vec(-50.0f64..=50.0, 27),
        a in 0u32..=1000,
        h in 1u32..=1000,
    ) {
        let shape = NetShape { input_dim: 2, hidden_dim: 5, output_dim: 2 };
        let params = PolicyParams::new(w);
        let p = forward(&shape, &params, &[a as f64 / 10.0, h as f64 / 10.0]).unwrap();
        prop_assert!(p.is_finite());
        prop_assert!((0.0..=1.0).contains(&p));
    }
}
