use proptest::prelude::*;
use rand::Rng;
use selectcond::distributions::{normal, TruncatedGaussian};
use selectcond::rng::replication_stream;
use selectcond::stats::ks_statistic;

fn arb_truncation() -> impl Strategy<Value = TruncatedGaussian> {
    (
        -5.0..5.0f64,
        0.1..4.0f64,
        prop::collection::vec((-8.0..8.0f64, 0.05..3.0f64), 1..4),
    )
        .prop_filter_map("empty truncation", |(mu, sigma, raw)| {
            let iv: Vec<(f64, f64)> = raw.into_iter().map(|(l, w)| (l, l + w)).collect();
            TruncatedGaussian::from_union(mu, sigma, &iv).ok()
        })
}

proptest! {
    #![proptest_config(ProptestConfig::with_cases(1000))]

    #[test]
    fn cdf_is_monotone(tg in arb_truncation(), xs in prop::collection::vec(-12.0..12.0f64, 2..20)) {
        let mut xs = xs;
        xs.sort_by(f64::total_cmp);
        let mut prev = 0.0;
        for x in xs {
            let c = tg.cdf(x);
            prop_assert!((0.0..=1.0).contains(&c));
            prop_assert!(c >= prev - 1e-15);
            prev = c;
        }
    }

    #[test]
    fn cdf_reaches_one_at_the_supremum(tg in arb_truncation()) {
        prop_assert!((tg.cdf(tg.support_max()) - 1.0).abs() <= 1e-12);
        prop_assert!(tg.cdf(tg.support_min()).abs() <= 1e-12);
    }

    #[test]
    fn cdf_and_sf_are_complementary(tg in arb_truncation(), x in -12.0..12.0f64) {
        let (c, s) = tg.cdf_sf(x);
        prop_assert!((c + s - 1.0).abs() < 1e-12);
    }
}

#[test]
fn quantile_inverts_cdf_including_extremes() {
    let cases = [
        TruncatedGaussian::interval(0.0, 1.0, -1.0, 2.0).unwrap(),
        TruncatedGaussian::interval(1.5, 0.7, 2.0, f64::INFINITY).unwrap(),
        TruncatedGaussian::from_union(0.0, 1.0, &[(-3.0, -1.0), (0.5, 4.0)]).unwrap(),
        TruncatedGaussian::interval(0.0, 1.0, 30.0, 31.0).unwrap(),
    ];
    let mut qs = vec![1e-8, 1e-4, 0.01, 0.5, 0.99, 1.0 - 1e-4, 1.0 - 1e-8];
    qs.extend((1..20).map(|i| i as f64 / 20.0));
    for tg in &cases {
        for &q in &qs {
            let x = tg.quantile(q).unwrap();
            assert!((tg.cdf(x) - q).abs() <= 1e-10, "{:?} q={q}", tg.intervals());
        }
    }
}

#[test]
fn far_tail_interval_is_stable() {
    let tg = TruncatedGaussian::interval(0.0, 1.0, 30.0, 31.0).unwrap();
    let mut prev = 0.0;
    for i in 0..=100 {
        let c = tg.cdf(30.0 + i as f64 / 100.0);
        assert!(c.is_finite() && (0.0..=1.0).contains(&c));
        assert!(c >= prev);
        prev = c;
    }
    // P(X ≤ 30 + 1/30) ≈ 1 − e^{-1} for an exponential of rate 30
    assert!((tg.cdf(30.0 + 1.0 / 30.0) - (1.0 - (-1.0f64).exp())).abs() < 2e-3);
}

#[test]
fn samples_follow_the_cdf() {
    let cases = [
        TruncatedGaussian::interval(0.3, 1.2, -0.5, 1.0).unwrap(),
        TruncatedGaussian::interval(0.0, 1.0, 7.0, f64::INFINITY).unwrap(),
        TruncatedGaussian::interval(0.0, 1.0, f64::NEG_INFINITY, -9.0).unwrap(),
        TruncatedGaussian::interval(0.0, 1.0, 8.0, 8.2).unwrap(),
        TruncatedGaussian::from_union(0.0, 1.0, &[(-2.0, -1.0), (0.0, 0.5), (3.0, 5.0)]).unwrap(),
    ];
    for (k, tg) in cases.iter().enumerate() {
        let mut rng = replication_stream(101, k as u64);
        let xs: Vec<f64> = (0..10_000).map(|_| tg.sample(&mut rng)).collect();
        assert!(xs.iter().all(|&x| tg.contains(x)));
        let d = ks_statistic(&xs, |x| tg.cdf(x));
        assert!(d < 0.02, "case {k}: KS {d}");
    }
}

#[test]
fn normal_tails_match_direct_evaluation() {
    let mut rng = replication_stream(5, 0);
    for _ in 0..1000 {
        let x: f64 = rng.random_range(-8.0..8.0);
        assert!((normal::cdf(x) + normal::sf(x) - 1.0).abs() < 1e-15);
        assert!((normal::log_sf(x) - normal::sf(x).ln()).abs() < 1e-12 * normal::log_sf(x).abs().max(1.0));
    }
    // Mills ratio asymptotics: log sf(x) ≈ log φ(x) − log x − 1/x²
    let x = 40.0;
    let approx = normal::log_pdf(x) - x.ln() - 1.0 / (x * x);
    assert!((normal::log_sf(x) - approx).abs() < 1e-5);
}
