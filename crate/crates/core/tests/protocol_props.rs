use proptest::prelude::*;

use resest::protocol::{
    lfse_update, rescale_delayed, swlfse_update, trim_extremes, EstimateMsg, NodeBuffer, WeightRule,
};

fn rule() -> impl Strategy<Value = WeightRule> {
    prop_oneof![Just(WeightRule::Uniform), Just(WeightRule::Median)]
}

fn lambda() -> impl Strategy<Value = f64> {
    prop_oneof![0.5f64..2.0, -2.0f64..-0.5]
}

/// Adversarial payloads: stamps may be stale, current, from the future or
/// missing, and values may be huge.
fn adversarial_msg() -> impl Strategy<Value = (f64, Option<u64>)> {
    (
        prop_oneof![Just(1e12), Just(-1e12), -1e6f64..1e6, -1.0f64..1.0],
        prop_oneof![Just(None), (0u64..30).prop_map(Some)],
    )
}

proptest! {
    #![proptest_config(ProptestConfig::with_cases(1000))]

    #[test]
    fn trimming_keeps_regular_range(
        f in 1usize..=2,
        extra in 0usize..=4,
        regular_vals in prop::collection::vec(-1.0f64..1.0, 9),
        adv_vals in prop::collection::vec(prop_oneof![Just(1e12), Just(-1e12), -1e6f64..1e6], 2),
        adv_count in 0usize..=2,
        positions in prop::collection::vec(any::<prop::sample::Index>(), 2),
    ) {
        let size = 2 * f + 1 + extra;
        let adv_count = adv_count.min(f);
        let mut values: Vec<(usize, f64)> = (0..size).map(|i| (i, regular_vals[i])).collect();
        let mut adversarial = Vec::new();
        for a in 0..adv_count {
            let pos = positions[a].index(size);
            if !adversarial.contains(&pos) {
                adversarial.push(pos);
                values[pos].1 = adv_vals[a];
            }
        }
        let regular: Vec<f64> = values.iter().filter(|(i, _)| !adversarial.contains(i)).map(|p| p.1).collect();
        let lo = regular.iter().copied().fold(f64::INFINITY, f64::min);
        let hi = regular.iter().copied().fold(f64::NEG_INFINITY, f64::max);

        let t = trim_extremes(&values, f).unwrap();
        prop_assert_eq!(t.discarded_high.len(), f);
        prop_assert_eq!(t.discarded_low.len(), f);
        let mut all: Vec<(usize, f64)> = t.kept.iter().chain(&t.discarded_high).chain(&t.discarded_low).copied().collect();
        all.sort_by_key(|p| p.0);
        prop_assert_eq!(&all, &values);
        for &(_, v) in &t.kept {
            prop_assert!(lo <= v && v <= hi);
        }
    }

    #[test]
    fn weights_are_a_distribution(rule in rule(), count in 1usize..20) {
        let w = rule.weights(count);
        prop_assert_eq!(w.len(), count);
        prop_assert!(w.iter().all(|x| *x >= 0.0));
        prop_assert!((w.iter().sum::<f64>() - 1.0).abs() < 1e-12);
    }

    #[test]
    fn sliding_window_update_stays_in_convex_hull(
        f in 0usize..=2,
        extra in 0usize..=3,
        lambda in lambda(),
        rule in rule(),
        now in 5u64..12,
        regular in prop::collection::vec((-5.0f64..5.0, 0u64..5), 8),
        adversarial in prop::collection::vec(adversarial_msg(), 2),
        adv_count in 0usize..=2,
    ) {
        let n = 2 * f + 1 + extra;
        let adv_count = adv_count.min(f);
        let mut buffer = NodeBuffer::new((0..n).collect());
        let mut hull = Vec::new();
        for l in 0..n {
            if l < adv_count {
                let (value, timestamp) = adversarial[l];
                buffer.offer(&EstimateMsg { sender: l, mode: 0, value, timestamp }, now);
            } else {
                let (value, delay) = regular[l];
                let ts = now - delay;
                buffer.offer(&EstimateMsg { sender: l, mode: 0, value, timestamp: Some(ts) }, now);
                hull.push(lambda.powi(delay as i32) * value);
            }
        }
        let lo = hull.iter().copied().fold(f64::INFINITY, f64::min);
        let hi = hull.iter().copied().fold(f64::NEG_INFINITY, f64::max);
        let next = swlfse_update(lambda, &buffer, now, 0.0, f, rule).unwrap() / lambda;
        let slack = 1e-12 * (1.0 + lo.abs().max(hi.abs()));
        prop_assert!(lo - slack <= next && next <= hi + slack, "{next} not in [{lo}, {hi}]");
    }

    #[test]
    fn buffer_stamps_never_decrease(
        offers in prop::collection::vec((0usize..3, -1.0f64..1.0, prop::option::of(0u64..40), 0u64..3), 1..60),
    ) {
        let mut buffer = NodeBuffer::new(vec![0, 1, 2]);
        let mut now = 0u64;
        let mut last: Vec<Option<u64>> = vec![None; 3];
        for (sender, value, ts, advance) in offers {
            now += advance;
            buffer.offer(&EstimateMsg { sender, mode: 0, value, timestamp: ts }, now);
            for (l, stamp) in buffer.stamps().iter().enumerate() {
                if let (Some(prev), Some(cur)) = (last[l], stamp) {
                    prop_assert!(*cur >= prev);
                }
                if let Some(cur) = stamp {
                    prop_assert!(*cur <= now);
                }
                if last[l].is_some() {
                    prop_assert!(stamp.is_some());
                }
                last[l] = *stamp;
            }
        }
    }

    #[test]
    fn lfse_open_loop_below_quorum(
        f in 1usize..=3,
        lambda in lambda(),
        current in -10.0f64..10.0,
        received in prop::collection::vec(-10.0f64..10.0, 0..7),
    ) {
        let vals: Vec<(usize, f64)> = received.iter().copied().enumerate().collect();
        let next = lfse_update(lambda, &vals, f, current, WeightRule::Uniform);
        if vals.len() < 2 * f + 1 {
            prop_assert_eq!(next, lambda * current);
        } else {
            let mut sorted = received.clone();
            sorted.sort_by(|a, b| b.partial_cmp(a).unwrap());
            let kept = &sorted[f..sorted.len() - f];
            let want = lambda * kept.iter().sum::<f64>() / kept.len() as f64;
            prop_assert!((next - want).abs() <= 1e-12 * (1.0 + want.abs()));
        }
    }
}

#[test]
fn false_timestamp_rescales_by_lambda_cubed() {
    let mut buffer = NodeBuffer::new(vec![4]);
    assert!(buffer.offer(
        &EstimateMsg {
            sender: 4,
            mode: 0,
            value: 1.5,
            timestamp: Some(7)
        },
        10
    ));
    assert_eq!(buffer.rescaled(2.0, 10, 0.0), vec![(4, 12.0)]);
    assert_eq!(rescale_delayed(2.0, 3, 1.5), 12.0);
}

#[test]
fn silent_neighbors_count_as_sentinel() {
    // Three neighbors, none ever heard from: all read as the origin.
    let buffer = NodeBuffer::new(vec![1, 2, 3]);
    assert_eq!(swlfse_update(1.3, &buffer, 4, -2.0, 1, WeightRule::Uniform).unwrap(), 1.3 * -2.0);
}

#[test]
fn future_stamps_are_unusable() {
    let mut buffer = NodeBuffer::new(vec![0]);
    buffer.offer(
        &EstimateMsg {
            sender: 0,
            mode: 0,
            value: 3.0,
            timestamp: Some(2),
        },
        2,
    );
    buffer.offer(
        &EstimateMsg {
            sender: 0,
            mode: 0,
            value: 99.0,
            timestamp: Some(50),
        },
        3,
    );
    assert_eq!(buffer.stamps(), &[Some(2)]);
    assert_eq!(buffer.rescaled(2.0, 3, 0.5), vec![(0, 0.5)]);
}
