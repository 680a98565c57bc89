use dimlab_core::estimators::{cn_ball_report, generic_trace, OrbitSource};
use dimlab_core::measures::{moments, Evaluator, MomentFamily};
use dimlab_core::moran::{build_moran_m, build_moran_padded, MoranConfig};
use dimlab_core::pressure::{select_good, GoodCylinderFilter, OptimizerConfig, PressureTables};
use dimlab_core::{Executor, IntervalMap, MeasureSpec, Sequential};
use rand::SeedableRng;
use rand_chacha::ChaCha8Rng;

/// Runs chunks back to front, returning results in chunk order.
struct Reversed;

impl Executor for Reversed {
    fn map_chunks<A, F>(&self, chunks: usize, f: F) -> Vec<A>
    where
        A: Send,
        F: Fn(usize) -> A + Sync + Send,
    {
        let mut out: Vec<A> = (0..chunks).rev().map(f).collect();
        out.reverse();
        out
    }
}

#[test]
fn reductions_do_not_depend_on_chunk_schedule() {
    let m = IntervalMap::manneville(1.0).unwrap();
    let f = GoodCylinderFilter::new(vec![0.4], 0.3, 0.1).unwrap();
    let a = select_good(&m, &f, 14, &Sequential).unwrap();
    let b = select_good(&m, &f, 14, &Reversed).unwrap();
    assert_eq!(a, b);
    let ta = PressureTables::build(&m, &f, (8, 14), &Sequential).unwrap().estimate(0.7).unwrap();
    let tb = PressureTables::build(&m, &f, (8, 14), &Reversed).unwrap().estimate(0.7).unwrap();
    assert_eq!(ta, tb);
    let ea = Evaluator::new(&m, MomentFamily::default(), 12, &Sequential).unwrap();
    let eb = Evaluator::new(&m, MomentFamily::default(), 12, &Reversed).unwrap();
    let mu = MeasureSpec::bernoulli(vec![0.4, 0.6]).unwrap();
    assert_eq!(ea.moments(&mu, MomentFamily::default()).unwrap(), eb.moments(&mu, MomentFamily::default()).unwrap());
}

#[test]
fn construction_points_are_generic() {
    let t = IntervalMap::cantor24();
    let g = (5f64.sqrt() - 1.0) / 2.0;
    let mu = MeasureSpec::bernoulli(vec![g, 1.0 - g]).unwrap();
    let cfg = MoranConfig::default();
    let c = build_moran_m(&t, &mu, &cfg, &Sequential).unwrap();
    let target = moments(&mu, &t, MomentFamily::default(), 16).unwrap();
    let eps = c.schedule.eps(c.schedule.stages());
    for seed in 0..3 {
        let mut rng = ChaCha8Rng::seed_from_u64(seed);
        let w = c.sample_word(&mut rng, None);
        let tr = generic_trace(&t, &OrbitSource::Word(w.clone()), &target, w.len()).unwrap();
        assert!(tr.tail_limsup <= 2.0 * eps, "{} > {}", tr.tail_limsup, 2.0 * eps);
    }
}

#[test]
fn padded_points_drift_towards_the_parabolic_point() {
    let m = IntervalMap::manneville(1.0).unwrap();
    let mu = MeasureSpec::bernoulli(vec![0.5, 0.5]).unwrap();
    let cfg = MoranConfig { max_total_length: 1 << 16, ..Default::default() };
    let c = build_moran_padded(&m, &mu, &cfg, &Sequential).unwrap();
    assert!(c.padded);
    let target = moments(&mu, &m, MomentFamily::default(), 16).unwrap();
    let eps = c.schedule.eps(c.schedule.stages());
    let mut rng = ChaCha8Rng::seed_from_u64(0);
    let w = c.sample_word(&mut rng, None);
    let tr = generic_trace(&m, &OrbitSource::Word(w.clone()), &target, w.len()).unwrap();
    assert!(tr.tail_liminf <= 2.0 * eps);
    assert!(tr.tail_limsup >= 0.1, "pad drift too small: {}", tr.tail_limsup);

    let plain = build_moran_m(&m, &mu, &cfg, &Sequential).unwrap();
    let w = plain.sample_word(&mut ChaCha8Rng::seed_from_u64(0), None);
    let tp = generic_trace(&m, &OrbitSource::Word(w.clone()), &target, w.len()).unwrap();
    assert!(tp.tail_limsup < tr.tail_limsup);
}

#[test]
fn coarse_index_needs_one_ball() {
    let m = IntervalMap::manneville(1.0).unwrap();
    let cfg = OptimizerConfig { restarts: 2, iterations: 40, depth: 10, ..Default::default() };
    // the two-point grid {δ_0, Bernoulli(0, 1)} leaves one member in C_2
    let r = cn_ball_report(&m, 0, 2, 1, 0.99, &cfg, &Sequential).unwrap();
    assert_eq!((r.grid_size, r.members), (2, 1));
    assert_eq!(r.balls.len(), 1);
    assert!(r.balls[0].distance_to_parabolic > r.radius);
}
