use distobs::network::{self, NeighborGraph};
use distobs::random;
use distobs::switching::{self, SwitchingSignal};
use proptest::prelude::*;
use rand::{Rng, SeedableRng};
use rand_chacha::ChaCha8Rng;

proptest! {
    #![proptest_config(ProptestConfig::with_cases(1000))]

    #[test]
    fn generated_dwell_signals_validate(seed in any::<u64>(), modes in 1usize..4, tau in 0.1f64..2.0) {
        let s = switching::generate_dwell(modes, tau, 10.0, seed).unwrap();
        prop_assert!(s.validate_dwell(tau));
        prop_assert!(s.validate_average_dwell(tau, 1.0));
        prop_assert!(s.max_value() < modes);
    }

    #[test]
    fn generated_average_dwell_signals_validate(
        seed in any::<u64>(),
        modes in 2usize..4,
        tau in 0.2f64..2.0,
        n0 in 1.0f64..4.0,
    ) {
        let s = switching::generate_average_dwell(modes, tau, n0, 10.0 * tau, seed).unwrap();
        prop_assert!(s.validate_average_dwell(tau, n0));
    }
}

proptest! {
    #![proptest_config(ProptestConfig::with_cases(300))]

    #[test]
    fn dwell_implies_average_dwell_with_unit_chatter(
        gaps in proptest::collection::vec(0.05f64..3.0, 0..12),
        tau in 0.05f64..2.0,
    ) {
        let mut t = 0.0;
        let times: Vec<f64> = gaps.iter().map(|g| { t += g; t }).collect();
        let values: Vec<usize> = (0..=times.len()).map(|k| k % 2).collect();
        let s = SwitchingSignal::new(times, values, t + 1.0).unwrap();
        if s.validate_dwell(tau) {
            prop_assert!(s.validate_average_dwell(tau, 1.0));
        }
    }

    #[test]
    fn average_dwell_check_matches_pairwise_enumeration(
        gaps in proptest::collection::vec(0.01f64..2.0, 0..40),
        tau in 0.1f64..2.0,
        n0 in 0.5f64..4.0,
    ) {
        let mut t = 0.0;
        let times: Vec<f64> = gaps.iter().map(|g| { t += g; t }).collect();
        let values: Vec<usize> = (0..=times.len()).map(|k| k % 2).collect();
        let s = SwitchingSignal::new(times.clone(), values, t + 1.0).unwrap();
        // every interval is dominated by one shrinking onto a pair of switches
        let mut brute = true;
        for a in 0..times.len() {
            for b in a..times.len() {
                let allowed = n0 + (times[b] - times[a]) / tau;
                if (b - a + 1) as f64 > allowed + 1e-9 * (1.0 + allowed) {
                    brute = false;
                }
            }
        }
        prop_assert_eq!(s.validate_average_dwell(tau, n0), brute);
    }

    #[test]
    fn stochastic_matrices_are_row_stochastic(seed in any::<u64>()) {
        let mut r = ChaCha8Rng::seed_from_u64(seed);
        let m = r.random_range(1..=6);
        let extra = r.random_range(0.0..1.0);
        let g = random::strongly_connected_graph(&mut r, m, extra);
        prop_assert!(g.is_strongly_connected());
        let s = g.stochastic_matrix();
        for i in 0..m {
            prop_assert!((s.row(i).sum() - 1.0).abs() <= 1e-12);
            prop_assert!(s[(i, i)] > 0.0);
        }
        prop_assert!(s.iter().all(|&x| x >= 0.0));
    }

    #[test]
    fn generalized_laplacians_of_doubly_stochastic_graphs(seed in any::<u64>()) {
        let mut r = ChaCha8Rng::seed_from_u64(seed);
        let m = r.random_range(1..=6);
        let s = random::doubly_stochastic_graph(&mut r, m).stochastic_matrix();
        let l = network::generalized_laplacian(&s).unwrap();
        for i in 0..m {
            prop_assert!(l.row(i).sum().abs() <= 1e-12);
            for j in 0..m {
                if i != j {
                    prop_assert!(l[(i, j)] <= 1e-12);
                }
            }
        }
        prop_assert!((&l - l.transpose()).amax() == 0.0);
    }
}

#[test]
fn average_dwell_generator_produces_chatter() {
    let mut short = 0;
    for seed in 0..50 {
        let s = switching::generate_average_dwell(3, 1.0, 3.0, 10.0, seed).unwrap();
        assert!(s.validate_average_dwell(1.0, 3.0));
        assert!(!s.validate_dwell(1.0));
        short += usize::from(s.min_gap() < 1.0);
    }
    assert_eq!(short, 50);
}

#[test]
fn directed_cycle_is_not_doubly_stochastic_with_a_chord() {
    let g = NeighborGraph::new(3, [(0, 1), (1, 2), (2, 0), (0, 2)]).unwrap();
    assert!(!network::is_doubly_stochastic(&g.stochastic_matrix(), 1e-12));
    assert!(network::generalized_laplacian(&g.stochastic_matrix()).is_err());
}
