//! Dimension diagnostics: box counting on sampled sets, generic-point traces
//! of empirical measures, and ball coverings of measures kept away from a
//! parabolic point.

use alloc::vec;
use alloc::vec::Vec;

use rand::{Rng, SeedableRng};
use rand_chacha::ChaCha8Rng;

use crate::error::{Error, Result};
use crate::exec::Executor;
use crate::map::IntervalMap;
use crate::math::{abs, fit_line, floor, ln, round};
use crate::measures::{metric_d, next_composition, Evaluator, MeasureSpec, MomentFamily, Moments};
use crate::moran::MoranScheme;
use crate::pressure::{sup_dim_ratio_with, ConstraintBall, OptimizerConfig};
use crate::symbolic::{coded_orbit, forward_orbit};

pub const MIN_BOX_POINTS: usize = 10_000;
pub const BOX_J_RANGE: (usize, usize) = (4, 20);
/// Scales where the occupied-box count exceeds `points / SATURATION` are
/// left out of the fit: a sample that size cannot resolve them.
pub const SATURATION: usize = 8;

#[derive(Debug, Clone, PartialEq)]
pub struct BoxCountReport {
    pub j: Vec<usize>,
    /// `2^{-j}`.
    pub scales: Vec<f64>,
    /// Occupied boxes at each scale.
    pub counts: Vec<u64>,
    /// Shannon entropy (nats) of the sample's distribution over the boxes.
    pub entropies: Vec<f64>,
    /// Whether each scale entered the regression.
    pub fitted: Vec<bool>,
    /// Slope of box entropy against `j log 2`, clamped to `[0, 1]`.
    pub slope: f64,
    pub r2: f64,
    /// Slope of `log N_j` against `j log 2`. For a sample of a fully
    /// supported measure this sits near 1 whatever the measure is.
    pub occupied_slope: f64,
}

/// Dyadic box counts of a point set and the fitted dimension of the
/// sampled measure.
///
/// Counting occupied boxes only sees the support, so the regression uses the
/// entropy of the box frequencies instead; on self-similar and Bernoulli
/// samples it tracks `dim μ`, and on uniformly spread sets it agrees with
/// the occupied-box slope.
pub fn box_dimension(points: &[f64], j_range: (usize, usize)) -> Result<BoxCountReport> {
    if points.len() < MIN_BOX_POINTS {
        return Err(Error::TooFewPoints { got: points.len(), need: MIN_BOX_POINTS });
    }
    let (j0, j1) = j_range;
    if j0 < BOX_J_RANGE.0 || j1 > BOX_J_RANGE.1 || j1 <= j0 {
        return Err(Error::InvalidInput("j range must be increasing and inside [4, 20]".into()));
    }
    if points.iter().any(|x| !(0.0..=1.0).contains(x)) {
        return Err(Error::InvalidInput("points must lie in [0, 1]".into()));
    }
    let mut sorted = points.to_vec();
    sorted.sort_by(|a, b| a.partial_cmp(b).unwrap());
    let total = sorted.len() as f64;
    let cap = (points.len() / SATURATION) as u64;
    let mut rep = BoxCountReport {
        j: Vec::new(),
        scales: Vec::new(),
        counts: Vec::new(),
        entropies: Vec::new(),
        fitted: Vec::new(),
        slope: 0.0,
        r2: 0.0,
        occupied_slope: 0.0,
    };
    let (mut xs, mut ys, mut yo) = (Vec::new(), Vec::new(), Vec::new());
    for j in j0..=j1 {
        let boxes = (1u64 << j) as f64;
        let top = (1u64 << j) - 1;
        let mut count = 0u64;
        let mut entropy = 0.0;
        let mut run = 0usize;
        let mut last = u64::MAX;
        for &x in &sorted {
            let b = (floor(x * boxes) as u64).min(top);
            if b != last {
                if run > 0 {
                    let p = run as f64 / total;
                    entropy -= p * ln(p);
                }
                count += 1;
                last = b;
                run = 0;
            }
            run += 1;
        }
        let p = run as f64 / total;
        entropy -= p * ln(p);
        let fit = count <= cap;
        rep.j.push(j);
        rep.scales.push(1.0 / boxes);
        rep.counts.push(count);
        rep.entropies.push(entropy);
        rep.fitted.push(fit);
        if fit {
            xs.push(j as f64 * ln(2.0));
            ys.push(entropy);
            yo.push(ln(count as f64));
        }
    }
    let f = fit_line(&xs, &ys).ok_or_else(|| Error::Degenerate("fewer than two unsaturated scales".into()))?;
    rep.slope = f.slope.clamp(0.0, 1.0);
    rep.r2 = f.r2;
    rep.occupied_slope = fit_line(&xs, &yo).map(|f| f.slope).unwrap_or(0.0);
    Ok(rep)
}

/// Points drawn from the scheme's measure: descend the level tree choosing
/// children by weight, then pick a uniform point of the deepest interval.
pub fn sample_scheme_points<E: Executor>(scheme: &MoranScheme, count: usize, seed: u64, exec: &E) -> Vec<f64> {
    let levels = scheme.levels();
    // children lists per level, in index order
    let mut children: Vec<Vec<Vec<usize>>> = Vec::with_capacity(levels.len());
    children.push(vec![(0..levels[0].len()).collect()]);
    for li in 1..levels.len() {
        let mut kids = vec![Vec::new(); levels[li - 1].len()];
        for (j, iv) in levels[li].iter().enumerate() {
            kids[iv.parent].push(j);
        }
        children.push(kids);
    }
    const CHUNK: usize = 4096;
    let chunks = count.div_ceil(CHUNK);
    let parts = exec.map_chunks(chunks, |c| {
        let mut rng = ChaCha8Rng::seed_from_u64(seed);
        rng.set_stream(c as u64);
        let n = CHUNK.min(count - c * CHUNK);
        let mut out = Vec::with_capacity(n);
        for _ in 0..n {
            let mut node = 0usize;
            for (li, kids) in children.iter().enumerate() {
                let opts = &kids[node];
                let total: f64 = opts.iter().map(|&k| levels[li][k].weight).sum();
                let mut u = rng.gen::<f64>() * total;
                let mut pick = *opts.last().unwrap();
                for &k in opts {
                    let w = levels[li][k].weight;
                    if u < w {
                        pick = k;
                        break;
                    }
                    u -= w;
                }
                node = pick;
            }
            let iv = levels[levels.len() - 1][node];
            out.push(iv.lo + rng.gen::<f64>() * (iv.hi - iv.lo));
        }
        out
    });
    parts.into_iter().flatten().collect()
}

/// Where a trace's orbit comes from.
#[derive(Debug, Clone, PartialEq)]
pub enum OrbitSource {
    /// Forward iteration of a point.
    Point(f64),
    /// The point coded by a word, its orbit computed through inverse
    /// branches, which stays accurate for arbitrarily long words.
    Word(Vec<u8>),
}

#[derive(Debug, Clone, PartialEq)]
pub struct GenericTrace {
    pub n: Vec<usize>,
    /// `d((A_n)_* δ_x, μ)` at each grid point.
    pub distances: Vec<f64>,
    /// Grid index where the tail (last half) starts.
    pub tail_start: usize,
    pub tail_liminf: f64,
    pub tail_limsup: f64,
}

/// Roughly geometric grid `1 ≤ n ≤ n_max`, `per_octave` points per doubling,
/// always ending at `n_max`.
pub fn geometric_grid(n_max: usize, per_octave: usize) -> Vec<usize> {
    let mut out: Vec<usize> = Vec::new();
    let mut t = 0;
    loop {
        let v = round(crate::math::powf(2.0, t as f64 / per_octave as f64)) as usize;
        if v > n_max {
            break;
        }
        if out.last() != Some(&v) {
            out.push(v);
        }
        t += 1;
    }
    if out.last() != Some(&n_max) {
        out.push(n_max);
    }
    out
}

pub fn orbit_of(map: &IntervalMap, source: &OrbitSource, n_max: usize) -> Result<Vec<f64>> {
    match source {
        OrbitSource::Point(x) => forward_orbit(map, *x, n_max),
        OrbitSource::Word(w) => {
            if w.len() < n_max {
                return Err(Error::InvalidInput("word shorter than n_max".into()));
            }
            coded_orbit(map, &w[..n_max], 0.5)
        }
    }
}

/// Distance of the empirical measures along an orbit to `target`, on a
/// geometric grid with four points per octave.
pub fn generic_trace(map: &IntervalMap, source: &OrbitSource, target: &Moments, n_max: usize) -> Result<GenericTrace> {
    if n_max == 0 {
        return Err(Error::InvalidInput("n_max must be positive".into()));
    }
    let orbit = orbit_of(map, source, n_max)?;
    trace_orbit(&orbit, target)
}

/// [`generic_trace`] on an orbit already computed.
pub fn trace_orbit(orbit: &[f64], target: &Moments) -> Result<GenericTrace> {
    let k = target.count();
    let grid = geometric_grid(orbit.len(), 4);
    let mut sums = vec![0.0; k];
    let mut distances = Vec::with_capacity(grid.len());
    let mut next = 0;
    for (t, &x) in orbit.iter().enumerate() {
        let mut p = 1.0;
        for s in sums.iter_mut() {
            p *= x;
            *s += p;
        }
        if next < grid.len() && grid[next] == t + 1 {
            let n = (t + 1) as f64;
            let emp = Moments::exact(sums.iter().map(|s| s / n).collect());
            distances.push(metric_d(&emp, target)?.distance);
            next += 1;
        }
    }
    let tail_start = grid.len() / 2;
    let tail = &distances[tail_start..];
    let tail_liminf = tail.iter().copied().fold(f64::INFINITY, f64::min);
    let tail_limsup = tail.iter().copied().fold(0.0, f64::max);
    Ok(GenericTrace { n: grid, distances, tail_start, tail_liminf, tail_limsup })
}

/// Birkhoff averages of `x^j` at block boundaries and the interpolation
/// bound between them.
#[derive(Debug, Clone, PartialEq)]
pub struct BoundaryCheck {
    /// Block boundaries `n_q`.
    pub boundaries: Vec<usize>,
    /// `max_j |A_{n_q} x^j − ∫ x^j dμ|` per boundary.
    pub deviations: Vec<f64>,
    /// Worst excess of `|A_n x^j − ∫x^j dμ|` over
    /// `deviation_q + 2 (n_{q+1} − n_q) / n_q` for `n_q ≤ n < n_{q+1}`;
    /// non-positive when the bound holds everywhere.
    pub interpolation_excess: f64,
}

pub fn boundary_check(orbit: &[f64], boundaries: &[usize], targets: &[f64]) -> Result<BoundaryCheck> {
    let k = targets.len();
    if boundaries.windows(2).any(|w| w[1] <= w[0]) || boundaries.last().is_some_and(|&b| b > orbit.len()) {
        return Err(Error::InvalidInput("boundaries must increase and fit in the orbit".into()));
    }
    let mut sums = vec![0.0; k];
    let mut avgs: Vec<Vec<f64>> = Vec::with_capacity(orbit.len());
    for &x in orbit {
        let mut p = 1.0;
        for s in sums.iter_mut() {
            p *= x;
            *s += p;
        }
        avgs.push(sums.clone());
    }
    let dev = |n: usize| -> f64 {
        (0..k).map(|j| abs(avgs[n - 1][j] / n as f64 - targets[j])).fold(0.0, f64::max)
    };
    let deviations: Vec<f64> = boundaries.iter().map(|&b| dev(b)).collect();
    let mut excess = f64::NEG_INFINITY;
    for (q, w) in boundaries.windows(2).enumerate() {
        let (a, b) = (w[0], w[1]);
        let bound = deviations[q] + 2.0 * (b - a) as f64 / a as f64;
        for n in a..b {
            excess = excess.max(dev(n) - bound);
        }
    }
    Ok(BoundaryCheck { boundaries: boundaries.to_vec(), deviations, interpolation_excess: excess })
}

#[derive(Debug, Clone, PartialEq)]
pub struct CoveringBall {
    pub center: MeasureSpec,
    /// `d(center, δ_p)`.
    pub distance_to_parabolic: f64,
    /// `sup h/λ` inside the ball, `None` when nothing feasible was found.
    pub sup_ratio: Option<f64>,
}

#[derive(Debug, Clone, PartialEq)]
pub struct CnReport {
    pub n: usize,
    pub radius: f64,
    pub grid_size: usize,
    /// Grid measures with `d(μ, δ_p) ≥ 1/n`.
    pub members: usize,
    pub balls: Vec<CoveringBall>,
    pub unconstrained_sup: f64,
}

/// Covers the grid part of `C_n = {μ : d(μ, δ_p) ≥ 1/n}` by balls of radius
/// `radius_factor / n` centred on grid points, chosen greedily in grid
/// order, and reports `sup h/λ` inside each ball.
#[allow(clippy::too_many_arguments)]
pub fn cn_ball_report<E: Executor>(
    map: &IntervalMap,
    parabolic_branch: usize,
    n: usize,
    grid_steps: usize,
    radius_factor: f64,
    cfg: &OptimizerConfig,
    exec: &E,
) -> Result<CnReport> {
    if map.parabolic_branches().is_empty() {
        return Err(Error::Degenerate("map has no parabolic fixed point".into()));
    }
    if parabolic_branch >= map.alphabet() || !map.fixed_point(parabolic_branch).parabolic {
        return Err(Error::InvalidInput("branch does not carry a parabolic fixed point".into()));
    }
    if n == 0 || grid_steps == 0 || !(radius_factor > 0.0 && radius_factor < 1.0) {
        return Err(Error::InvalidInput("need n ≥ 1, a non-empty grid and radius factor in (0, 1)".into()));
    }
    let family: MomentFamily = cfg.family;
    let eval = Evaluator::new(map, family, cfg.depth, exec)?;
    let dirac = Moments::dirac(map.fixed_point(parabolic_branch).x, family);
    let m = map.alphabet();
    let mut comp = vec![0usize; m];
    comp[m - 1] = grid_steps;
    let mut members: Vec<(MeasureSpec, Moments, f64)> = Vec::new();
    let mut grid_size = 0;
    loop {
        grid_size += 1;
        let p: Vec<f64> = comp.iter().map(|&c| c as f64 / grid_steps as f64).collect();
        let spec = MeasureSpec::bernoulli(p)?;
        let mo = eval.moments(&spec, family)?;
        let d = metric_d(&mo, &dirac)?.distance;
        if d >= 1.0 / n as f64 {
            members.push((spec, mo, d));
        }
        if !next_composition(&mut comp) {
            break;
        }
    }
    let radius = radius_factor / n as f64;
    let mut centers: Vec<usize> = Vec::new();
    for i in 0..members.len() {
        let covered = centers
            .iter()
            .any(|&c| metric_d(&members[c].1, &members[i].1).map(|v| v.distance <= radius).unwrap_or(false));
        if !covered {
            centers.push(i);
        }
    }
    let unconstrained_sup = sup_dim_ratio_with(&eval, None, 1, cfg, exec)?.ratio;
    let mut balls = Vec::with_capacity(centers.len());
    for &c in &centers {
        let (spec, _, d) = &members[c];
        let ball = ConstraintBall::new(spec.clone(), radius, 0.0)?;
        let sup_ratio = match sup_dim_ratio_with(&eval, Some(&ball), 1, cfg, exec) {
            Ok(o) => Some(o.ratio),
            Err(Error::Infeasible) => None,
            Err(e) => return Err(e),
        };
        balls.push(CoveringBall { center: spec.clone(), distance_to_parabolic: *d, sup_ratio });
    }
    Ok(CnReport { n, radius, grid_size, members: members.len(), balls, unconstrained_sup })
}

/// `x^j` moments of a point sample, handy for comparing a sample with a
/// measure.
pub fn sample_moments(points: &[f64], family: MomentFamily) -> Moments {
    Moments::empirical(points, family)
}

/// Fraction of the trace tail within `tol` of the target.
pub fn tail_hit_fraction(trace: &GenericTrace, tol: f64) -> f64 {
    let tail = &trace.distances[trace.tail_start..];
    tail.iter().filter(|&&d| d <= tol).count() as f64 / tail.len() as f64
}

#[cfg(test)]
mod tests {
    use super::*;
    use crate::exec::Sequential;
    use crate::math::powi;
    use crate::measures::moments;

    #[test]
    fn box_count_of_uniform_points() {
        let mut rng = ChaCha8Rng::seed_from_u64(1);
        let pts: Vec<f64> = (0..100_000).map(|_| rng.gen::<f64>()).collect();
        let r = box_dimension(&pts, (4, 20)).unwrap();
        assert!(abs(r.slope - 1.0) < 0.05, "{}", r.slope);
        assert!(r.counts.windows(2).all(|w| w[1] >= w[0]));
        assert!(matches!(box_dimension(&pts[..100], (4, 20)), Err(Error::TooFewPoints { got: 100, .. })));
    }

    #[test]
    fn box_count_of_middle_thirds_measure() {
        let t = IntervalMap::middle_thirds();
        let s = MoranScheme::from_cylinders(&t, 14, |w, _| powi(0.5, w.len() as u32)).unwrap();
        let pts = sample_scheme_points(&s, 100_000, 0, &Sequential);
        let r = box_dimension(&pts, (4, 20)).unwrap();
        assert!(abs(r.slope - ln(2.0) / ln(3.0)) < 0.05, "{}", r.slope);
        assert!(abs(r.occupied_slope - ln(2.0) / ln(3.0)) < 0.05);
    }

    #[test]
    fn box_count_of_besicovitch_measure() {
        let t = IntervalMap::doubling();
        let mu = MeasureSpec::bernoulli(vec![0.7, 0.3]).unwrap();
        let s = MoranScheme::from_measure(&t, &mu, 16).unwrap();
        let pts = sample_scheme_points(&s, 100_000, 0, &Sequential);
        let r = box_dimension(&pts, (4, 20)).unwrap();
        let h = -(0.7 * ln(0.7) + 0.3 * ln(0.3)) / ln(2.0);
        assert!(abs(r.slope - h) < 0.06, "{} vs {}", r.slope, h);
    }

    #[test]
    fn grid_shape() {
        let g = geometric_grid(100, 4);
        assert_eq!(g[..5], [1, 2, 3, 4, 5]);
        assert_eq!(*g.last().unwrap(), 100);
        assert!(g.windows(2).all(|w| w[1] > w[0]));
    }

    #[test]
    fn trace_at_parabolic_point_is_zero() {
        let m = IntervalMap::manneville(1.0).unwrap();
        let dirac = Moments::dirac(0.0, MomentFamily::default());
        let tr = generic_trace(&m, &OrbitSource::Point(0.0), &dirac, 200).unwrap();
        assert!(tr.distances.iter().all(|&d| d == 0.0));
        assert!(matches!(
            generic_trace(&IntervalMap::middle_thirds(), &OrbitSource::Point(0.5), &dirac, 10),
            Err(Error::OrbitEscaped { step: 0, .. })
        ));
    }

    #[test]
    fn trace_matches_direct_moments() {
        let t = IntervalMap::doubling();
        let mu = MeasureSpec::bernoulli(vec![0.3, 0.7]).unwrap();
        let target = moments(&mu, &t, MomentFamily::default(), 16).unwrap();
        let mut rng = ChaCha8Rng::seed_from_u64(4);
        let w = mu.sample_word(&mut rng, 2000);
        let src = OrbitSource::Word(w.clone());
        let tr = generic_trace(&t, &src, &target, 2000).unwrap();
        let orbit = coded_orbit(&t, &w, 0.5).unwrap();
        for idx in [3, tr.n.len() / 2, tr.n.len() - 1] {
            let n = tr.n[idx];
            let emp = Moments::empirical(&orbit[..n], MomentFamily::default());
            let d = metric_d(&emp, &target).unwrap().distance;
            assert!(abs(d - tr.distances[idx]) < 1e-10);
        }
        assert!(tr.tail_limsup < 0.1);
    }

    #[test]
    fn interpolation_bound_holds_on_random_orbit() {
        let mut rng = ChaCha8Rng::seed_from_u64(2);
        let orbit: Vec<f64> = (0..500).map(|_| rng.gen::<f64>()).collect();
        let c = boundary_check(&orbit, &[10, 25, 60, 130, 300, 500], &[0.5, 1.0 / 3.0]).unwrap();
        assert!(c.interpolation_excess <= 1e-12);
    }

    #[test]
    fn cn_covering_avoids_parabolic_point() {
        let m = IntervalMap::manneville(1.0).unwrap();
        let cfg = OptimizerConfig { restarts: 2, iterations: 60, depth: 10, ..Default::default() };
        let r = cn_ball_report(&m, 0, 2, 100, 0.99, &cfg, &Sequential).unwrap();
        assert!(r.members > 0 && !r.balls.is_empty());
        for b in &r.balls {
            assert!(b.distance_to_parabolic > r.radius);
            if let Some(s) = b.sup_ratio {
                assert!(s <= r.unconstrained_sup + 1e-6);
            }
        }
        assert!(matches!(
            cn_ball_report(&IntervalMap::doubling(), 0, 2, 10, 0.99, &cfg, &Sequential),
            Err(Error::Degenerate(_))
        ));
    }
}
