use eapred::data::{generate_synthetic, SyntheticSpec};
use eapred::exec::Execution;
use eapred::labeling::{classify, distribution, label, label_event, Direction};
use eapred::numerics::RngStream;
use proptest::prelude::*;

/// Independent restatement of the three-way rule.
fn oracle(p_prev: f64, p_ea: f64, tau: f64) -> usize {
    let r = (p_ea - p_prev) / p_prev;
    if r >= tau {
        0
    } else if -r >= tau {
        1
    } else {
        2
    }
}

#[test]
fn brute_force_oracle_on_random_triples() {
    let mut rng = RngStream::new(99);
    for _ in 0..100_000 {
        let p_prev = rng.uniform_range(0.5, 500.0);
        let p_ea = p_prev * rng.uniform_range(0.85, 1.15);
        let tau = rng.uniform_range(0.0, 0.08);
        let (r, l) = label(p_prev, p_ea, tau).unwrap();
        assert_eq!(r, (p_ea - p_prev) / p_prev);
        assert_eq!(l.index(), oracle(p_prev, p_ea, tau));
    }
}

#[test]
fn synthetic_default_events_are_two_thirds_neutral() {
    // default spec scaled up to ~10^4 events
    let spec = SyntheticSpec {
        firms: 3600,
        background_article_rate: 0.0,
        signal_articles: 0,
        ..SyntheticSpec::default()
    };
    let ds = generate_synthetic(&spec, Execution::Parallel).unwrap();
    let labels: Vec<Direction> = ds
        .iter()
        .flat_map(|f| f.events.iter().map(move |e| label_event(f, e, 0.03).unwrap().label))
        .collect();
    assert!(labels.len() >= 10_000, "{}", labels.len());
    let dist = distribution(labels).unwrap();
    assert!((dist.fractions[2] - 0.67).abs() <= 0.03, "{:?}", dist);
    assert!((dist.fractions.iter().sum::<f64>() - 1.0).abs() < 1e-12);
}

proptest! {
    #[test]
    fn exactly_one_label_for_finite_returns(r in -1.0e3f64..1.0e3, tau in 0.0f64..1.0) {
        let l = classify(r, tau);
        let hits = [r >= tau, r <= -tau && r < tau, r > -tau && r < tau];
        prop_assert_eq!(hits.iter().filter(|h| **h).count(), 1);
        prop_assert!(hits[l.index()]);
    }

    #[test]
    fn antisymmetric_outside_the_band(r in -0.5f64..0.5, tau in 1e-6f64..0.2) {
        prop_assume!(r.abs() >= tau);
        prop_assert_eq!(classify(r, tau) == Direction::Up, classify(-r, tau) == Direction::Down);
    }

    #[test]
    fn monotone_in_return(a in -0.5f64..0.5, b in -0.5f64..0.5, tau in 0.0f64..0.2) {
        let (lo, hi) = if a <= b { (a, b) } else { (b, a) };
        prop_assert!(classify(lo, tau).rank() <= classify(hi, tau).rank());
    }

    #[test]
    fn non_positive_previous_price_is_rejected(p in -100.0f64..=0.0, q in 0.1f64..10.0) {
        prop_assert!(label(p, q, 0.03).is_err());
    }
}
