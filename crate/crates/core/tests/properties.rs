use dimlab_core::estimators::trace_orbit;
use dimlab_core::measures::{metric_d, Evaluator, MomentFamily, Moments};
use dimlab_core::pressure::{n_bernoulli_measure, tilted_block_weights, GoodCylinderFilter};
use dimlab_core::symbolic::coded_orbit;
use dimlab_core::{IntervalMap, MeasureSpec, Sequential};
use proptest::prelude::*;
use std::sync::OnceLock;

fn manneville_eval() -> &'static Evaluator {
    static E: OnceLock<Evaluator> = OnceLock::new();
    E.get_or_init(|| {
        let m = IntervalMap::manneville(1.0).unwrap();
        Evaluator::new(&m, MomentFamily::default(), 12, &Sequential).unwrap()
    })
}

fn simplex(n: usize) -> impl Strategy<Value = Vec<f64>> {
    prop::collection::vec(0.01f64..1.0, n).prop_map(|v| {
        let s: f64 = v.iter().sum();
        v.into_iter().map(|x| x / s).collect()
    })
}

fn spec() -> impl Strategy<Value = MeasureSpec> {
    prop_oneof![
        simplex(2).prop_map(|p| MeasureSpec::bernoulli(p).unwrap()),
        (simplex(2), simplex(2)).prop_map(|(a, b)| MeasureSpec::markov(vec![a, b]).unwrap()),
    ]
}

fn moments_of(s: &MeasureSpec) -> Moments {
    manneville_eval().moments(s, MomentFamily::default()).unwrap()
}

proptest! {
    #![proptest_config(ProptestConfig::with_cases(1000))]

    #[test]
    fn metric_axioms(a in spec(), b in spec(), c in spec()) {
        let (ma, mb, mc) = (moments_of(&a), moments_of(&b), moments_of(&c));
        let ab = metric_d(&ma, &mb).unwrap().distance;
        let ba = metric_d(&mb, &ma).unwrap().distance;
        let bc = metric_d(&mb, &mc).unwrap().distance;
        let ac = metric_d(&ma, &mc).unwrap().distance;
        prop_assert_eq!(ab, ba);
        prop_assert!(ac <= ab + bc + 1e-12);
        prop_assert_eq!(metric_d(&ma, &ma).unwrap().distance, 0.0);
        prop_assert!(ab <= 1.0);
    }
}

proptest! {
    #![proptest_config(ProptestConfig::with_cases(64))]

    #[test]
    fn moments_decrease_and_stay_in_unit_interval(s in spec()) {
        let m = moments_of(&s);
        for w in m.values.windows(2) {
            prop_assert!(w[1] <= w[0] + 1e-12);
        }
        prop_assert!(m.values.iter().all(|&v| (0.0..=1.0).contains(&v)));
    }

    #[test]
    fn lyapunov_is_nonnegative_and_zero_only_at_the_parabolic_point(s in spec()) {
        let lam = manneville_eval().lyapunov(&s).unwrap();
        prop_assert!(lam > 0.0);
        let d = MeasureSpec::dirac_fixed(0, 2).unwrap();
        prop_assert_eq!(manneville_eval().lyapunov(&d).unwrap(), 0.0);
    }

    #[test]
    fn block_entropy_identity(s in 0.2f64..1.5, n in 3usize..8) {
        let t = IntervalMap::manneville(1.0).unwrap();
        let f = GoodCylinderFilter::unconstrained(0.2, 0.1).unwrap();
        let tb = tilted_block_weights(&t, &f, n, s).unwrap();
        let mu = n_bernoulli_measure(tb.words.clone(), tb.weights.clone(), 2).unwrap();
        prop_assert!((mu.block_entropy() - tb.entropy_from_identity()).abs() <= 1e-12);
        prop_assert!((mu.entropy() - mu.block_entropy() / n as f64).abs() <= 1e-15);
    }

    #[test]
    fn trace_distances_are_nonnegative(word in prop::collection::vec(0u8..2, 1..400)) {
        let t = IntervalMap::manneville(1.0).unwrap();
        let orbit = coded_orbit(&t, &word, 0.5).unwrap();
        let tr = trace_orbit(&orbit, &Moments::lebesgue(MomentFamily::default())).unwrap();
        prop_assert!(tr.distances.iter().all(|&d| d >= 0.0));
        prop_assert!(tr.tail_liminf <= tr.tail_limsup);
        prop_assert_eq!(*tr.n.last().unwrap(), word.len());
    }
}
