use proptest::prelude::*;
use selectcond::rng::replication_stream;
use selectcond::two_stage::{
    compare_two_stage_inference, conditional_inference, sample_size_pmf_given_selection, simulate_selected,
    SampleSizePrior, DEFAULT_THRESHOLD,
};

proptest! {
    #[test]
    fn selected_size_law_is_a_simplex(theta in -10.0..10.0f64) {
        let prior = SampleSizePrior::uniform((5..=40).step_by(5).collect()).unwrap();
        let w = sample_size_pmf_given_selection(&prior, theta, DEFAULT_THRESHOLD).unwrap();
        prop_assert_eq!(w.len(), 8);
        prop_assert!(w.iter().all(|&v| (0.0..=1.0).contains(&v)));
        prop_assert!((w.iter().sum::<f64>() - 1.0).abs() < 1e-12);
    }

    #[test]
    fn positive_means_favour_large_first_stages(theta in 0.001..5.0f64) {
        let prior = SampleSizePrior::uniform(vec![2, 4, 8, 16, 32]).unwrap();
        let w = sample_size_pmf_given_selection(&prior, theta, DEFAULT_THRESHOLD).unwrap();
        for pair in w.windows(2) {
            prop_assert!(pair[1] >= pair[0] * (1.0 - 1e-12));
        }
    }
}

#[test]
fn conditional_inference_ignores_the_prior() {
    let mut rng = replication_stream(51, 0);
    let priors = [
        SampleSizePrior::point_mass(6).unwrap(),
        SampleSizePrior::uniform(vec![3, 6, 9]).unwrap(),
        SampleSizePrior::new(vec![6, 50], vec![0.01, 0.99]).unwrap(),
    ];
    for _ in 0..20 {
        let d = simulate_selected(6, 4, 0.3, DEFAULT_THRESHOLD, &mut rng).unwrap();
        let direct = conditional_inference(&d, 0.9).unwrap();
        for prior in &priors {
            let c = compare_two_stage_inference(&d, prior, 0.9).unwrap();
            assert_eq!(c.conditional.estimate, direct.estimate);
            assert_eq!(c.conditional.ci, direct.ci);
        }
    }
}

#[test]
fn conditional_intervals_cover() {
    let theta = 0.25;
    let mut rng = replication_stream(52, 0);
    let reps = 2_000;
    let covered = (0..reps)
        .filter(|_| {
            let d = simulate_selected(8, 8, theta, DEFAULT_THRESHOLD, &mut rng).unwrap();
            conditional_inference(&d, 0.9).unwrap().ci.contains(theta)
        })
        .count();
    let rate = covered as f64 / reps as f64;
    // binomial sd at 2000 reps is 0.0067
    assert!((rate - 0.9).abs() < 0.025, "coverage {rate}");
}
