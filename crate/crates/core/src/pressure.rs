//! Good-cylinder selection, pressure sums, Bowen roots and the variational
//! side (block-Bernoulli measures and constrained `sup h/λ`).
//!
//! Rates are least-squares slopes of `log Σ` against `n`, which removes the
//! bounded offsets that finite-`n` sums carry.

use alloc::format;
use alloc::vec;
use alloc::vec::Vec;

use rand::{Rng, SeedableRng};
use rand_chacha::ChaCha8Rng;

use crate::error::{Error, Result};
use crate::exec::Executor;
use crate::map::IntervalMap;
use crate::math::{abs, exp, fit_line, ln, project_simplex, solve_dense, LogSum};
use crate::measures::{metric_d, Evaluator, MeasureKind, MeasureSpec, MomentFamily, Moments};
use crate::symbolic::{moment_observables, CylinderEnumerator, CylinderView, EnumConfig, SEED_CENTER};

/// Default depth range for rate fits.
pub const DEFAULT_N_RANGE: (usize, usize) = (8, 20);

/// Cylinder filter: `|A_n f_i − α_i| < eps` for the first `k = alpha.len()`
/// monomials and `A_n g ≥ delta − eps`, tested at the left endpoint and at
/// the centre of each cylinder.
#[derive(Debug, Clone, PartialEq)]
pub struct GoodCylinderFilter {
    pub alpha: Vec<f64>,
    pub delta: f64,
    pub eps: f64,
}

impl GoodCylinderFilter {
    pub fn new(alpha: Vec<f64>, delta: f64, eps: f64) -> Result<Self> {
        if alpha.iter().any(|a| !a.is_finite()) {
            return Err(Error::InvalidInput("alpha must be finite".into()));
        }
        if !(delta > 0.0) {
            return Err(Error::InvalidInput("delta must be positive".into()));
        }
        if !(eps > 0.0 && eps < delta) {
            return Err(Error::InvalidInput(format!("eps must lie in (0, delta), got {eps}")));
        }
        Ok(GoodCylinderFilter { alpha, delta, eps })
    }

    /// No moment constraint, only `A_n g ≥ delta − eps`.
    pub fn unconstrained(delta: f64, eps: f64) -> Result<Self> {
        GoodCylinderFilter::new(Vec::new(), delta, eps)
    }

    /// Targets `α_i = ∫ x^i dm` for `i ≤ k`.
    pub fn from_moments(m: &Moments, k: usize, delta: f64, eps: f64) -> Result<Self> {
        if k > m.count() {
            return Err(Error::InvalidInput("not enough moments for k".into()));
        }
        GoodCylinderFilter::new(m.values[..k].to_vec(), delta, eps)
    }

    pub fn k(&self) -> usize {
        self.alpha.len()
    }

    pub fn with_eps(&self, eps: f64) -> Result<Self> {
        GoodCylinderFilter::new(self.alpha.clone(), self.delta, eps)
    }

    fn passes_at(&self, v: &CylinderView<'_>, seed: usize, n: f64) -> bool {
        if v.lyapunov_sum(seed) / n < self.delta - self.eps {
            return false;
        }
        self.alpha.iter().enumerate().all(|(i, a)| abs(v.observable_sum(seed, i) / n - a) < self.eps)
    }

    /// Left endpoint or centre passes.
    pub fn passes(&self, v: &CylinderView<'_>) -> bool {
        let n = v.depth() as f64;
        self.passes_at(v, v.left_seed(), n) || self.passes_at(v, SEED_CENTER, n)
    }

    /// Largest spread of `A_n f_i` and `A_n g` across the tracked points of a
    /// cylinder; a lower estimate of `var_n / n`.
    fn spread(&self, v: &CylinderView<'_>) -> f64 {
        let n = v.depth() as f64;
        let mut worst: f64 = 0.0;
        let mut span = |f: &dyn Fn(usize) -> f64| {
            let a = [f(0), f(1), f(2)];
            let mx = a.iter().copied().fold(f64::NEG_INFINITY, f64::max);
            let mn = a.iter().copied().fold(f64::INFINITY, f64::min);
            worst = worst.max((mx - mn) / n);
        };
        span(&|s| v.lyapunov_sum(s));
        for i in 0..self.k() {
            span(&|s| v.observable_sum(s, i));
        }
        worst
    }
}

fn enumerator<'m>(map: &'m IntervalMap, k: usize, n: usize) -> Result<CylinderEnumerator<'m>> {
    CylinderEnumerator::new(map, n, &moment_observables(k), EnumConfig::default())
}

#[derive(Debug, Clone, Copy, PartialEq)]
pub struct Selection {
    pub n: usize,
    pub count: u64,
    pub total: u64,
    /// Largest witness-to-witness spread of the filtered averages: how far a
    /// borderline cylinder could be misclassified.
    pub misclassification_budget: f64,
}

pub fn select_good<E: Executor>(map: &IntervalMap, filter: &GoodCylinderFilter, n: usize, exec: &E) -> Result<Selection> {
    let en = enumerator(map, filter.k(), n)?;
    let (count, spread) = en.fold(
        exec,
        || (0u64, 0.0f64),
        |acc, v| {
            if filter.passes(v) {
                acc.0 += 1;
            }
            acc.1 = acc.1.max(filter.spread(v));
        },
        |a, b| {
            a.0 += b.0;
            a.1 = a.1.max(b.1);
        },
    )?;
    Ok(Selection { n, count, total: en.cylinder_count() as u64, misclassification_budget: spread })
}

/// Streams the selected cylinders in lexicographic order.
pub fn select_good_visit<F: FnMut(&CylinderView<'_>)>(
    map: &IntervalMap,
    filter: &GoodCylinderFilter,
    n: usize,
    mut visitor: F,
) -> Result<u64> {
    let en = enumerator(map, filter.k(), n)?;
    let mut count = 0;
    en.for_each(|v| {
        if filter.passes(v) {
            count += 1;
            visitor(v);
        }
    })?;
    Ok(count)
}

/// For one depth: `log diam` and `min S_n g` over the selected cylinders.
#[derive(Debug, Clone)]
struct DepthTable {
    n: usize,
    log_diam: Vec<f64>,
    min_sg: Vec<f64>,
}

/// Selected cylinders for every depth of a range; evaluates the pressure
/// sums for any `s` without re-enumerating.
#[derive(Debug, Clone)]
pub struct PressureTables {
    depths: Vec<DepthTable>,
}

impl PressureTables {
    pub fn build<E: Executor>(
        map: &IntervalMap,
        filter: &GoodCylinderFilter,
        n_range: (usize, usize),
        exec: &E,
    ) -> Result<Self> {
        check_range(n_range)?;
        let mut depths = Vec::new();
        for n in n_range.0..=n_range.1 {
            let en = enumerator(map, filter.k(), n)?;
            let (log_diam, min_sg) = en.fold(
                exec,
                || (Vec::new(), Vec::new()),
                |acc, v| {
                    if filter.passes(v) {
                        acc.0.push(ln(v.diam));
                        let m = v.lyapunov_sum(0).min(v.lyapunov_sum(1)).min(v.lyapunov_sum(2));
                        acc.1.push(m);
                    }
                },
                |a, b| {
                    a.0.extend(b.0);
                    a.1.extend(b.1);
                },
            )?;
            depths.push(DepthTable { n, log_diam, min_sg });
        }
        Ok(PressureTables { depths })
    }

    pub fn counts(&self) -> Vec<(usize, u64)> {
        self.depths.iter().map(|d| (d.n, d.log_diam.len() as u64)).collect()
    }

    pub fn estimate(&self, s: f64) -> Result<PressureEstimate> {
        if !(s >= 0.0) {
            return Err(Error::InvalidInput("s must be non-negative".into()));
        }
        let mut est = PressureEstimate {
            s,
            n_values: Vec::new(),
            counts: Vec::new(),
            log_sums_diam: Vec::new(),
            log_sums_sup: Vec::new(),
            rate: f64::NAN,
            rate_stderr: f64::NAN,
            rate_sup: f64::NAN,
            rate_sup_stderr: f64::NAN,
        };
        let (mut xs, mut yd, mut ys) = (Vec::new(), Vec::new(), Vec::new());
        for d in &self.depths {
            let mut a = LogSum::default();
            let mut b = LogSum::default();
            for (&ld, &mg) in d.log_diam.iter().zip(&d.min_sg) {
                a.push(s * ld);
                b.push(-s * mg);
            }
            let (va, vb) = (a.value(), b.value());
            est.n_values.push(d.n);
            est.counts.push(d.log_diam.len() as u64);
            est.log_sums_diam.push(va);
            est.log_sums_sup.push(vb);
            if va.is_finite() {
                xs.push(d.n as f64);
                yd.push(va);
                ys.push(vb);
            }
        }
        if xs.len() < 2 {
            let (lo, hi) = (self.depths[0].n, self.depths.last().unwrap().n);
            return Err(Error::EmptySelection { n_min: lo, n_max: hi });
        }
        let fd = fit_line(&xs, &yd).expect("two distinct depths");
        let fs = fit_line(&xs, &ys).expect("two distinct depths");
        est.rate = fd.slope;
        est.rate_stderr = fd.slope_stderr;
        est.rate_sup = fs.slope;
        est.rate_sup_stderr = fs.slope_stderr;
        Ok(est)
    }
}

fn check_range(r: (usize, usize)) -> Result<()> {
    if r.0 == 0 || r.1 <= r.0 {
        return Err(Error::InvalidInput(format!("depth range {}..={} needs at least two depths", r.0, r.1)));
    }
    Ok(())
}

/// Pressure sums at one exponent.
#[derive(Debug, Clone, PartialEq)]
pub struct PressureEstimate {
    pub s: f64,
    pub n_values: Vec<usize>,
    pub counts: Vec<u64>,
    /// `log Σ diam^s`, `-inf` where nothing was selected.
    pub log_sums_diam: Vec<f64>,
    /// `log Σ sup exp(−s S_n g)`.
    pub log_sums_sup: Vec<f64>,
    pub rate: f64,
    pub rate_stderr: f64,
    pub rate_sup: f64,
    pub rate_sup_stderr: f64,
}

impl PressureEstimate {
    pub fn rate_gap(&self) -> f64 {
        abs(self.rate - self.rate_sup)
    }

    pub fn empty_depths(&self) -> Vec<usize> {
        self.n_values.iter().zip(&self.counts).filter(|(_, &c)| c == 0).map(|(&n, _)| n).collect()
    }
}

pub fn pressure_sums<E: Executor>(
    map: &IntervalMap,
    filter: &GoodCylinderFilter,
    s: f64,
    n_range: (usize, usize),
    exec: &E,
) -> Result<PressureEstimate> {
    PressureTables::build(map, filter, n_range, exec)?.estimate(s)
}

/// How the growth rate of the constrained sums is measured.
#[derive(Debug, Clone, Copy, PartialEq, Eq)]
pub enum RateMethod {
    /// Count the cylinders passing the `eps`-window directly.
    Windowed,
    /// Exponentially tilted sums: the window indicator is replaced by its
    /// Chernoff bound, minimized over the tilt. This is the `eps → 0` limit
    /// of the windowed rate without the boundary noise of a hard window.
    Tilted,
}

#[derive(Debug, Clone, Copy, PartialEq)]
pub struct BowenOptions {
    pub n_range: (usize, usize),
    pub s_tol: f64,
    /// `None` picks `Tilted` when there are moment constraints and
    /// `Windowed` otherwise.
    pub method: Option<RateMethod>,
}

impl Default for BowenOptions {
    fn default() -> Self {
        BowenOptions { n_range: DEFAULT_N_RANGE, s_tol: 1e-5, method: None }
    }
}

#[derive(Debug, Clone, PartialEq)]
pub struct BowenRoot {
    pub s: f64,
    pub bracket: (f64, f64),
    pub rate_at_zero: f64,
    pub method: RateMethod,
    pub evaluations: usize,
}

/// Zero of the fitted rate `s ↦ P(s)` by bisection.
pub fn bowen_root<E: Executor>(
    map: &IntervalMap,
    filter: &GoodCylinderFilter,
    opts: &BowenOptions,
    exec: &E,
) -> Result<BowenRoot> {
    check_range(opts.n_range)?;
    if !(opts.s_tol > 0.0) {
        return Err(Error::InvalidInput("s_tol must be positive".into()));
    }
    let method = opts.method.unwrap_or(if filter.k() > 0 { RateMethod::Tilted } else { RateMethod::Windowed });
    match method {
        RateMethod::Windowed => {
            let tables = PressureTables::build(map, filter, opts.n_range, exec)?;
            bisect_rate(|s| tables.estimate(s).map(|e| e.rate), opts.s_tol, method)
        }
        RateMethod::Tilted => {
            let tables = TiltTables::build(map, filter, opts.n_range, exec)?;
            let mut warm = tables.fresh_state();
            bisect_rate(|s| tables.rate(s, &mut warm, exec), opts.s_tol, method)
        }
    }
}

fn bisect_rate<F: FnMut(f64) -> Result<f64>>(mut rate: F, tol: f64, method: RateMethod) -> Result<BowenRoot> {
    let r0 = rate(0.0)?;
    let mut evaluations = 1;
    if !(r0 > 0.0) {
        return Err(Error::NoBracket { rate_at_zero: r0 });
    }
    let mut lo = 0.0;
    let mut hi = 1.0;
    loop {
        let r = rate(hi)?;
        evaluations += 1;
        if r < 0.0 {
            break;
        }
        if r == 0.0 {
            return Ok(BowenRoot { s: hi, bracket: (hi, hi), rate_at_zero: r0, method, evaluations });
        }
        lo = hi;
        hi *= 2.0;
        if hi > 1e6 {
            return Err(Error::Degenerate("rate stays non-negative for every s".into()));
        }
    }
    while hi - lo > tol {
        let mid = 0.5 * (lo + hi);
        let r = rate(mid)?;
        evaluations += 1;
        if r > 0.0 {
            lo = mid;
        } else if r < 0.0 {
            hi = mid;
        } else {
            lo = mid;
            hi = mid;
        }
    }
    Ok(BowenRoot { s: 0.5 * (lo + hi), bracket: (lo, hi), rate_at_zero: r0, method, evaluations })
}

/// Per depth and per tracked point: `S_n f_i − n α_i` and `S_n g`.
struct TiltDepth {
    n: usize,
    /// rows of `k + 1` values
    rows: Vec<f64>,
}

struct TiltTables {
    k: usize,
    delta: f64,
    depths: Vec<TiltDepth>,
}

/// Warm starts for the per-depth tilt optimizations.
struct TiltState {
    theta: Vec<Vec<f64>>,
}

const TILT_CHUNK: usize = 1 << 14;

impl TiltTables {
    fn build<E: Executor>(
        map: &IntervalMap,
        filter: &GoodCylinderFilter,
        n_range: (usize, usize),
        exec: &E,
    ) -> Result<Self> {
        let k = filter.k();
        let mut depths = Vec::new();
        for n in n_range.0..=n_range.1 {
            let en = enumerator(map, k, n)?;
            let nf = n as f64;
            let rows = en.fold(
                exec,
                Vec::new,
                |acc: &mut Vec<f64>, v| {
                    for seed in 0..3 {
                        for (i, a) in filter.alpha.iter().enumerate() {
                            acc.push(v.observable_sum(seed, i) - nf * a);
                        }
                        acc.push(v.lyapunov_sum(seed));
                    }
                },
                |a, b| a.extend(b),
            )?;
            depths.push(TiltDepth { n, rows });
        }
        Ok(TiltTables { k, delta: filter.delta, depths })
    }

    fn fresh_state(&self) -> TiltState {
        TiltState { theta: vec![vec![0.0; self.k + 1]; self.depths.len()] }
    }

    fn rate<E: Executor>(&self, s: f64, state: &mut TiltState, exec: &E) -> Result<f64> {
        let mut xs = Vec::with_capacity(self.depths.len());
        let mut ys = Vec::with_capacity(self.depths.len());
        for (d, theta) in self.depths.iter().zip(state.theta.iter_mut()) {
            let l = self.minimize(d, s, theta, exec);
            xs.push(d.n as f64);
            ys.push(l);
        }
        Ok(fit_line(&xs, &ys).expect("at least two depths").slope)
    }

    /// value, gradient and Hessian of
    /// `Φ(θ) = log Σ_rows exp(q·v + r (S_n g − n δ) − s S_n g)`
    /// over the active coordinates (`q` always, `r` when `with_r`).
    fn evaluate<E: Executor>(
        &self,
        d: &TiltDepth,
        s: f64,
        theta: &[f64],
        with_r: bool,
        exec: &E,
    ) -> (f64, Vec<f64>, Vec<f64>) {
        let k = self.k;
        let dim = k + with_r as usize;
        let width = k + 1;
        let nd = d.n as f64 * self.delta;
        let rows = d.rows.len() / width;
        let exponent = |row: &[f64]| -> f64 {
            let mut e = -s * row[k];
            for i in 0..k {
                e += theta[i] * row[i];
            }
            if with_r {
                e += theta[k] * (row[k] - nd);
            }
            e
        };
        let chunks = rows.div_ceil(TILT_CHUNK);
        // pass 1: max exponent
        let maxes = exec.map_chunks(chunks, |c| {
            let lo = c * TILT_CHUNK;
            let hi = ((c + 1) * TILT_CHUNK).min(rows);
            (lo..hi).map(|j| exponent(&d.rows[j * width..(j + 1) * width])).fold(f64::NEG_INFINITY, f64::max)
        });
        let mx = maxes.into_iter().fold(f64::NEG_INFINITY, f64::max);
        // pass 2: weighted sums
        let parts = exec.map_chunks(chunks, |c| {
            let lo = c * TILT_CHUNK;
            let hi = ((c + 1) * TILT_CHUNK).min(rows);
            let mut z = 0.0;
            let mut g = vec![0.0; dim];
            let mut h = vec![0.0; dim * dim];
            let mut u = vec![0.0; dim];
            for j in lo..hi {
                let row = &d.rows[j * width..(j + 1) * width];
                let w = exp(exponent(row) - mx);
                u[..k].copy_from_slice(&row[..k]);
                if with_r {
                    u[k] = row[k] - nd;
                }
                z += w;
                for a in 0..dim {
                    g[a] += w * u[a];
                    for b in 0..=a {
                        h[a * dim + b] += w * u[a] * u[b];
                    }
                }
            }
            (z, g, h)
        });
        let mut z = 0.0;
        let mut g = vec![0.0; dim];
        let mut h = vec![0.0; dim * dim];
        for (pz, pg, ph) in parts {
            z += pz;
            for a in 0..dim {
                g[a] += pg[a];
            }
            for a in 0..dim * dim {
                h[a] += ph[a];
            }
        }
        for a in 0..dim {
            g[a] /= z;
        }
        for a in 0..dim {
            for b in 0..=a {
                let v = h[a * dim + b] / z - g[a] * g[b];
                h[a * dim + b] = v;
                h[b * dim + a] = v;
            }
        }
        (mx + ln(z), g, h)
    }

    fn newton<E: Executor>(&self, d: &TiltDepth, s: f64, theta: &mut [f64], with_r: bool, exec: &E) -> f64 {
        let k = self.k;
        let dim = k + with_r as usize;
        let (mut val, mut g, mut h) = self.evaluate(d, s, theta, with_r, exec);
        for _ in 0..60 {
            if dim == 0 {
                break;
            }
            let gnorm = g.iter().map(|x| x * x).sum::<f64>();
            if gnorm < 1e-22 * (d.n * d.n) as f64 {
                break;
            }
            let mut hm = h.clone();
            let trace: f64 = (0..dim).map(|a| hm[a * dim + a]).sum();
            for a in 0..dim {
                hm[a * dim + a] += 1e-12 * trace.max(1e-300);
            }
            let rhs: Vec<f64> = g.iter().map(|x| -x).collect();
            let step = solve_dense(hm, rhs, dim).unwrap_or_else(|| g.iter().map(|x| -x).collect());
            let mut t = 1.0;
            let mut improved = false;
            for _ in 0..40 {
                let mut cand: Vec<f64> = theta.to_vec();
                for a in 0..dim {
                    cand[a] += t * step[a];
                }
                if with_r && cand[k] < 0.0 {
                    cand[k] = 0.0;
                }
                let (v2, g2, h2) = self.evaluate(d, s, &cand, with_r, exec);
                if v2 <= val {
                    let gain = val - v2;
                    theta.copy_from_slice(&cand);
                    val = v2;
                    g = g2;
                    h = h2;
                    improved = gain > 0.0;
                    break;
                }
                t *= 0.5;
            }
            if !improved {
                break;
            }
        }
        val
    }

    /// `min_{q, r ≥ 0} Φ`, warm-started from `theta`.
    fn minimize<E: Executor>(&self, d: &TiltDepth, s: f64, theta: &mut Vec<f64>, exec: &E) -> f64 {
        let k = self.k;
        let start_r = theta[k];
        if start_r > 0.0 {
            let v = self.newton(d, s, theta, true, exec);
            if theta[k] > 0.0 {
                return v;
            }
        }
        theta[k] = 0.0;
        let v = self.newton(d, s, theta, false, exec);
        // KKT: r = 0 is optimal iff ∂Φ/∂r ≥ 0 there.
        let (_, g, _) = self.evaluate(d, s, theta, true, exec);
        if g[k] >= 0.0 {
            return v;
        }
        theta[k] = 1e-3;
        self.newton(d, s, theta, true, exec)
    }
}

/// Windowed Bowen roots on a halving `eps` sweep with a three-point
/// Richardson extrapolation (error model `a eps + b eps²`).
#[derive(Debug, Clone, PartialEq)]
pub struct RichardsonSweep {
    pub eps: Vec<f64>,
    pub roots: Vec<f64>,
    pub extrapolated: f64,
    pub spread: f64,
}

pub fn richardson_sweep<E: Executor>(
    map: &IntervalMap,
    filter: &GoodCylinderFilter,
    eps: [f64; 3],
    opts: &BowenOptions,
    exec: &E,
) -> Result<RichardsonSweep> {
    let o = BowenOptions { method: Some(RateMethod::Windowed), ..*opts };
    let mut roots = Vec::new();
    for &e in &eps {
        roots.push(bowen_root(map, &filter.with_eps(e)?, &o, exec)?.s);
    }
    let extrapolated = (8.0 * roots[2] - 6.0 * roots[1] + roots[0]) / 3.0;
    let mx = roots.iter().copied().fold(f64::NEG_INFINITY, f64::max);
    let mn = roots.iter().copied().fold(f64::INFINITY, f64::min);
    Ok(RichardsonSweep { eps: eps.to_vec(), roots, extrapolated, spread: mx - mn })
}

/// The tilted block distribution `μ̃_n(ω) ∝ sup_{I_n(ω)} exp(−s S_n g)` over
/// the selected cylinders.
#[derive(Debug, Clone, PartialEq)]
pub struct TiltedBlocks {
    pub n: usize,
    pub s: f64,
    pub words: Vec<Vec<u8>>,
    pub weights: Vec<f64>,
    /// `inf S_n g` over each selected cylinder (three-point estimate).
    pub inf_sums: Vec<f64>,
    /// `S_n g` at the left endpoint of each selected cylinder.
    pub left_sums: Vec<f64>,
    /// `I_n = log Σ sup exp(−s S_n g)`.
    pub log_partition: f64,
}

impl TiltedBlocks {
    /// `s ∫ inf S_n g dμ̃_n + I_n`, which equals `H(μ̃_n)` identically.
    pub fn entropy_from_identity(&self) -> f64 {
        let avg: f64 = self.weights.iter().zip(&self.inf_sums).map(|(w, a)| w * a).sum();
        self.s * avg + self.log_partition
    }

    /// Largest `S_n g(left) − inf S_n g` over the blocks.
    pub fn max_variation(&self) -> f64 {
        self.left_sums.iter().zip(&self.inf_sums).map(|(l, i)| l - i).fold(0.0, f64::max)
    }
}

pub fn tilted_block_weights(
    map: &IntervalMap,
    filter: &GoodCylinderFilter,
    n: usize,
    s: f64,
) -> Result<TiltedBlocks> {
    if !(s >= 0.0) {
        return Err(Error::InvalidInput("s must be non-negative".into()));
    }
    let mut words = Vec::new();
    let mut inf_sums = Vec::new();
    let mut left_sums = Vec::new();
    select_good_visit(map, filter, n, |v| {
        words.push(v.word.to_vec());
        inf_sums.push(v.lyapunov_sum(0).min(v.lyapunov_sum(1)).min(v.lyapunov_sum(2)));
        left_sums.push(v.lyapunov_sum(v.left_seed()));
    })?;
    if words.is_empty() {
        return Err(Error::EmptySelection { n_min: n, n_max: n });
    }
    let logs: Vec<f64> = inf_sums.iter().map(|a| -s * a).collect();
    let log_partition = crate::math::log_sum_exp(&logs);
    let weights: Vec<f64> = logs.iter().map(|l| exp(l - log_partition)).collect();
    Ok(TiltedBlocks { n, s, words, weights, inf_sums, left_sums, log_partition })
}

/// Block-Bernoulli measure of order `n` built from a block distribution.
pub fn n_bernoulli_measure(words: Vec<Vec<u8>>, weights: Vec<f64>, alphabet: usize) -> Result<MeasureSpec> {
    if words.is_empty() {
        return Err(Error::EmptySelection { n_min: 0, n_max: 0 });
    }
    // tolerate rounding in weights that were normalized elsewhere
    let total: f64 = weights.iter().sum();
    let weights = if abs(total - 1.0) < 1e-9 { weights.iter().map(|w| w / total).collect() } else { weights };
    MeasureSpec::block_bernoulli(words, weights, alphabet)
}

/// Metric ball `B_d(center, radius)` intersected with `λ > floor`.
#[derive(Debug, Clone, PartialEq)]
pub struct ConstraintBall {
    pub center: MeasureSpec,
    pub radius: f64,
    pub lyapunov_floor: f64,
}

impl ConstraintBall {
    pub fn new(center: MeasureSpec, radius: f64, lyapunov_floor: f64) -> Result<Self> {
        if !(radius >= 0.0) {
            return Err(Error::InvalidInput("ball radius must be non-negative".into()));
        }
        Ok(ConstraintBall { center, radius, lyapunov_floor })
    }
}

#[derive(Debug, Clone, Copy, PartialEq)]
pub struct OptimizerConfig {
    pub restarts: usize,
    pub iterations: usize,
    pub fd_step: f64,
    pub seed: u64,
    /// Quadrature depth on nonlinear maps.
    pub depth: usize,
    pub family: MomentFamily,
    /// Slack allowed on the ball constraint when checking the result.
    pub feasibility_tol: f64,
}

impl Default for OptimizerConfig {
    fn default() -> Self {
        OptimizerConfig {
            restarts: 20,
            iterations: 500,
            fd_step: 1e-6,
            seed: 0,
            depth: 12,
            family: MomentFamily::default(),
            feasibility_tol: 1e-6,
        }
    }
}

#[derive(Debug, Clone, PartialEq)]
pub struct DimRatioOptimum {
    pub ratio: f64,
    pub spec: MeasureSpec,
    pub entropy: f64,
    pub lyapunov: f64,
    /// Distance to the ball centre, when constrained.
    pub distance: Option<f64>,
    pub feasible_restarts: usize,
}

struct Objective<'a> {
    eval: &'a Evaluator,
    alphabet: usize,
    order: usize,
    ball: Option<(&'a ConstraintBall, Moments)>,
    family: MomentFamily,
}

struct Point {
    h: f64,
    lam: f64,
    dist: f64,
}

impl Objective<'_> {
    fn rows(&self) -> usize {
        if self.order == 1 {
            1
        } else {
            crate::math::checked_pow(self.alphabet, self.order - 1) as usize
        }
    }

    fn spec(&self, x: &[f64]) -> Result<MeasureSpec> {
        if self.order == 1 {
            MeasureSpec::bernoulli(x.to_vec())
        } else {
            MeasureSpec::markov_order(self.order - 1, self.alphabet, x.to_vec())
        }
    }

    fn point(&self, x: &[f64]) -> Option<Point> {
        let spec = self.spec(x).ok()?;
        let lam = self.eval.lyapunov(&spec).ok()?;
        let dist = match &self.ball {
            Some((_, c)) => metric_d(&self.eval.moments(&spec, self.family).ok()?, c).ok()?.distance,
            None => 0.0,
        };
        Some(Point { h: spec.entropy(), lam, dist })
    }

    fn value(&self, x: &[f64], penalty: f64) -> f64 {
        let Some(p) = self.point(x) else { return f64::NEG_INFINITY };
        let mut v = if p.lam > 0.0 { p.h / p.lam } else { 0.0 };
        if let Some((ball, _)) = &self.ball {
            let over = (p.dist - ball.radius).max(0.0);
            let under = (ball.lyapunov_floor - p.lam).max(0.0);
            v -= penalty * (over * over + under * under);
        }
        v
    }

    fn project(&self, x: &mut [f64]) {
        for row in x.chunks_mut(self.alphabet) {
            project_simplex(row);
        }
    }
}

fn dirichlet_start(rng: &mut ChaCha8Rng, dims: usize, rows: usize) -> Vec<f64> {
    let mut x = Vec::with_capacity(dims * rows);
    for _ in 0..rows {
        let e: Vec<f64> = (0..dims).map(|_| -ln(1.0 - rng.gen::<f64>())).collect();
        let t: f64 = e.iter().sum();
        x.extend(e.iter().map(|v| v / t));
    }
    x
}

fn ascend(obj: &Objective<'_>, x: &mut Vec<f64>, iterations: usize, fd: f64, penalty: f64) {
    let mut fx = obj.value(x, penalty);
    let mut t: f64 = 1.0;
    for _ in 0..iterations {
        let mut grad = vec![0.0; x.len()];
        for i in 0..x.len() {
            let orig = x[i];
            let up = orig + fd;
            let dn = (orig - fd).max(0.0);
            x[i] = up;
            let fu = obj.value(&normalized(obj, x), penalty);
            x[i] = dn;
            let fdn = obj.value(&normalized(obj, x), penalty);
            x[i] = orig;
            grad[i] = (fu - fdn) / (up - dn);
            if !grad[i].is_finite() {
                grad[i] = 0.0;
            }
        }
        let mut accepted = false;
        t = (t * 4.0).min(1e3);
        for _ in 0..60 {
            let mut cand: Vec<f64> = x.iter().zip(&grad).map(|(a, g)| a + t * g).collect();
            obj.project(&mut cand);
            let dir: f64 = cand.iter().zip(x.iter()).zip(&grad).map(|((c, a), g)| (c - a) * g).sum();
            let fc = obj.value(&cand, penalty);
            if fc >= fx + 1e-4 * dir && fc.is_finite() {
                let moved: f64 = cand.iter().zip(x.iter()).map(|(c, a)| abs(c - a)).sum();
                *x = cand;
                let gain = fc - fx;
                fx = fc;
                accepted = moved > 1e-15 && gain > 0.0;
                break;
            }
            t *= 0.5;
        }
        if !accepted {
            break;
        }
    }
}

fn normalized(obj: &Objective<'_>, x: &[f64]) -> Vec<f64> {
    let mut y = x.to_vec();
    for row in y.chunks_mut(obj.alphabet) {
        let s: f64 = row.iter().sum();
        for v in row.iter_mut() {
            *v /= s;
        }
    }
    y
}

/// `sup h(μ)/λ(μ)` over Bernoulli (`order = 1`) or Markov measures of order
/// `order − 1`, optionally restricted to a metric ball.
pub fn sup_dim_ratio<E: Executor>(
    map: &IntervalMap,
    ball: Option<&ConstraintBall>,
    order: usize,
    cfg: &OptimizerConfig,
    exec: &E,
) -> Result<DimRatioOptimum> {
    if order == 0 {
        return Err(Error::InvalidInput("order must be at least 1".into()));
    }
    if cfg.restarts == 0 {
        return Err(Error::InvalidInput("need at least one restart".into()));
    }
    let eval = Evaluator::new(map, cfg.family, cfg.depth, exec)?;
    sup_dim_ratio_with(&eval, ball, order, cfg, exec)
}

/// [`sup_dim_ratio`] against a prebuilt evaluator, for repeated calls on the
/// same map.
pub fn sup_dim_ratio_with<E: Executor>(
    eval: &Evaluator,
    ball: Option<&ConstraintBall>,
    order: usize,
    cfg: &OptimizerConfig,
    exec: &E,
) -> Result<DimRatioOptimum> {
    if order == 0 {
        return Err(Error::InvalidInput("order must be at least 1".into()));
    }
    if cfg.restarts == 0 {
        return Err(Error::InvalidInput("need at least one restart".into()));
    }
    let map = eval.map();
    let ball = match ball {
        Some(b) => {
            b.center.check_map(map)?;
            Some((b, eval.moments(&b.center, cfg.family)?))
        }
        None => None,
    };
    let obj = Objective { eval, alphabet: map.alphabet(), order, ball, family: cfg.family };
    let rows = obj.rows();
    let dims = map.alphabet();
    let penalties: &[f64] = if obj.ball.is_some() { &[1e2, 1e4, 1e6, 1e8] } else { &[0.0] };
    let per_stage = (cfg.iterations / penalties.len()).max(1);
    let results = exec.map_chunks(cfg.restarts, |i| {
        let mut x = if i == 0 {
            vec![1.0 / dims as f64; dims * rows]
        } else {
            let mut rng = ChaCha8Rng::seed_from_u64(cfg.seed);
            rng.set_stream(i as u64);
            dirichlet_start(&mut rng, dims, rows)
        };
        for &pen in penalties {
            ascend(&obj, &mut x, per_stage, cfg.fd_step, pen);
        }
        let p = obj.point(&x)?;
        let feasible = match &obj.ball {
            Some((b, _)) => p.dist <= b.radius + cfg.feasibility_tol && p.lam > b.lyapunov_floor,
            None => p.lam > 0.0,
        };
        if !feasible {
            return None;
        }
        Some((x, p))
    });
    let feasible_restarts = results.iter().filter(|r| r.is_some()).count();
    let mut best: Option<(Vec<f64>, Point)> = None;
    for (x, p) in results.into_iter().flatten() {
        let better = match &best {
            None => true,
            Some((_, b)) => p.h / p.lam > b.h / b.lam,
        };
        if better {
            best = Some((x, p));
        }
    }
    let (x, p) = best.ok_or(Error::Infeasible)?;
    let spec = obj.spec(&x)?;
    Ok(DimRatioOptimum {
        ratio: p.h / p.lam,
        spec,
        entropy: p.h,
        lyapunov: p.lam,
        distance: obj.ball.as_ref().map(|_| p.dist),
        feasible_restarts,
    })
}

/// Probability vector of a Bernoulli spec, if it is one.
pub fn bernoulli_vector(spec: &MeasureSpec) -> Option<&[f64]> {
    match spec.kind() {
        MeasureKind::Bernoulli { p } => Some(p),
        _ => None,
    }
}

#[cfg(test)]
mod tests {
    use super::*;
    use crate::exec::Sequential;
    use crate::measures::moments;
    use crate::symbolic::coded_orbit;

    #[test]
    fn unconstrained_selection_on_doubling() {
        let t = IntervalMap::doubling();
        let f = GoodCylinderFilter::unconstrained(0.5, 0.1).unwrap();
        let s = select_good(&t, &f, 5, &Sequential).unwrap();
        assert_eq!((s.count, s.total), (32, 32));
    }

    #[test]
    fn moment_selection_matches_brute_force() {
        let t = IntervalMap::doubling();
        let f = GoodCylinderFilter::new(vec![0.5], 0.5, 0.05).unwrap();
        let s = select_good(&t, &f, 10, &Sequential).unwrap();
        // brute force: each word, left endpoint and centre orbits
        let mut count = 0;
        for r in 0..1024u32 {
            let w: Vec<u8> = (0..10).rev().map(|b| ((r >> b) & 1) as u8).collect();
            let ok = [0.0, 0.5].iter().any(|&seed| {
                let orbit = coded_orbit(&t, &w, seed).unwrap();
                let a: f64 = orbit.iter().sum::<f64>() / 10.0;
                abs(a - 0.5) < 0.05
            });
            count += ok as u64;
        }
        assert_eq!(s.count, count);
        assert!(count > 0 && count < 1024);
    }

    #[test]
    fn manneville_selection_excludes_parabolic_cylinder() {
        let m = IntervalMap::manneville(1.0).unwrap();
        let f = GoodCylinderFilter::unconstrained(0.6, 0.05).unwrap();
        let mut has_zero_word = false;
        let count = select_good_visit(&m, &f, 8, |v| has_zero_word |= v.word.iter().all(|&s| s == 0)).unwrap();
        assert!(!has_zero_word);
        assert!(count > 0);
        // direct orbit of the left endpoint of 0^8 has A_8 g = 0
        let orbit = coded_orbit(&m, &[0; 8], 0.0).unwrap();
        let a: f64 = orbit.iter().map(|&x| ln(m.branch(0).derivative(x))).sum::<f64>() / 8.0;
        assert_eq!(a, 0.0);
    }

    #[test]
    fn pressure_rates_on_linear_maps() {
        let t = IntervalMap::doubling();
        let f = GoodCylinderFilter::unconstrained(0.5, 0.1).unwrap();
        for s in [0.0, 0.3, 1.0, 1.7] {
            let e = pressure_sums(&t, &f, s, (8, 14), &Sequential).unwrap();
            assert!(abs(e.rate - (1.0 - s) * ln(2.0)) < 1e-12);
            assert!(e.rate_gap() < 1e-12);
            for (a, b) in e.log_sums_diam.iter().zip(&e.log_sums_sup) {
                assert!(abs(a - b) < 1e-12);
            }
        }
        let mt = IntervalMap::middle_thirds();
        let e = pressure_sums(&mt, &f, ln(2.0) / ln(3.0), (8, 14), &Sequential).unwrap();
        assert!(abs(e.rate) < 1e-10);
        let c = IntervalMap::cantor24();
        let u: f64 = (5.0f64.sqrt() - 1.0) / 2.0;
        let s = -ln(u) / ln(2.0);
        let e = pressure_sums(&c, &f, s, (8, 14), &Sequential).unwrap();
        assert!(abs(e.rate) < 1e-6);
    }

    #[test]
    fn rate_decreases_in_s() {
        let m = IntervalMap::manneville(1.0).unwrap();
        let f = GoodCylinderFilter::unconstrained(0.3, 0.1).unwrap();
        let tables = PressureTables::build(&m, &f, (6, 10), &Sequential).unwrap();
        let mut prev = f64::INFINITY;
        for j in 0..=20 {
            let r = tables.estimate(j as f64 * 0.1).unwrap().rate;
            assert!(r < prev);
            prev = r;
        }
    }

    #[test]
    fn unconstrained_bowen_roots() {
        let opts = BowenOptions { n_range: (8, 14), ..Default::default() };
        let f = GoodCylinderFilter::unconstrained(0.5, 0.1).unwrap();
        let r = bowen_root(&IntervalMap::middle_thirds(), &f, &opts, &Sequential).unwrap();
        assert!(abs(r.s - ln(2.0) / ln(3.0)) < 1e-4);
        let r = bowen_root(&IntervalMap::cantor24(), &f, &opts, &Sequential).unwrap();
        assert!(abs(r.s - 0.694242) < 1e-4);
        assert_eq!(r.method, RateMethod::Windowed);
    }

    #[test]
    fn no_bracket_when_selection_is_thin() {
        let t = IntervalMap::doubling();
        // only cylinders with average near 0.01: just the zero word survives
        let f = GoodCylinderFilter::new(vec![0.0], 0.5, 0.001).unwrap();
        let opts = BowenOptions { n_range: (8, 12), method: Some(RateMethod::Windowed), ..Default::default() };
        assert!(matches!(bowen_root(&t, &f, &opts, &Sequential), Err(Error::NoBracket { .. })));
    }

    #[test]
    fn tilted_root_on_besicovitch_set() {
        let t = IntervalMap::doubling();
        let b = MeasureSpec::bernoulli(vec![0.3, 0.7]).unwrap();
        let mo = moments(&b, &t, MomentFamily::default(), 16).unwrap();
        assert!(abs(mo.values[0] - 0.7) < 1e-15);
        let f = GoodCylinderFilter::from_moments(&mo, 1, 0.5, 0.05).unwrap();
        let opts = BowenOptions { n_range: (8, 16), s_tol: 1e-4, method: Some(RateMethod::Tilted) };
        let r = bowen_root(&t, &f, &opts, &Sequential).unwrap();
        let oracle = b.entropy() / ln(2.0);
        assert!(abs(r.s - oracle) < 0.01, "{} vs {}", r.s, oracle);
    }

    #[test]
    fn block_measures_and_identity() {
        let t = IntervalMap::doubling();
        let f = GoodCylinderFilter::unconstrained(0.5, 0.1).unwrap();
        let tb = tilted_block_weights(&t, &f, 6, 0.8).unwrap();
        let spec = n_bernoulli_measure(tb.words.clone(), tb.weights.clone(), 2).unwrap();
        assert!(abs(spec.entropy() - ln(2.0)) < 1e-14);
        assert!(abs(spec.block_entropy() - tb.entropy_from_identity()) < 1e-12);
        let single = n_bernoulli_measure(vec![vec![0, 1, 1]], vec![1.0], 2).unwrap();
        assert_eq!(single.entropy(), 0.0);
    }

    #[test]
    fn equilibrium_blocks_recover_dimension() {
        let c = IntervalMap::cantor24();
        let s = 0.6942419136306174;
        let f = GoodCylinderFilter::unconstrained(0.5, 0.1).unwrap();
        let tb = tilted_block_weights(&c, &f, 10, s).unwrap();
        let spec = n_bernoulli_measure(tb.words, tb.weights, 2).unwrap();
        let lam = crate::measures::lyapunov(&spec, &c, 1).unwrap();
        assert!(abs(spec.entropy() / lam - s) < 1e-3);
    }

    #[test]
    fn optimizer_on_linear_maps() {
        let cfg = OptimizerConfig { restarts: 4, ..Default::default() };
        let c = IntervalMap::cantor24();
        let o = sup_dim_ratio(&c, None, 1, &cfg, &Sequential).unwrap();
        assert!(abs(o.ratio - 0.694242) < 1e-4);
        let p = bernoulli_vector(&o.spec).unwrap();
        assert!(abs(p[0] - 0.618034) < 1e-3 && abs(p[1] - 0.381966) < 1e-3);
        let mt = IntervalMap::middle_thirds();
        let o = sup_dim_ratio(&mt, None, 1, &cfg, &Sequential).unwrap();
        assert!(abs(o.ratio - ln(2.0) / ln(3.0)) < 1e-6);
        let d = IntervalMap::doubling();
        let ball = ConstraintBall::new(MeasureSpec::bernoulli(vec![0.5, 0.5]).unwrap(), 0.0, 0.0).unwrap();
        let o = sup_dim_ratio(&d, Some(&ball), 1, &cfg, &Sequential).unwrap();
        assert!(abs(o.ratio - 1.0) < 1e-9);
    }

    #[test]
    fn markov_optimizer_matches_bernoulli_on_linear_map() {
        let cfg = OptimizerConfig { restarts: 3, iterations: 300, ..Default::default() };
        let c = IntervalMap::cantor24();
        let o = sup_dim_ratio(&c, None, 2, &cfg, &Sequential).unwrap();
        assert!(abs(o.ratio - 0.694242) < 1e-3);
    }
}
