//! Moran schemes.
//!
//! Two layers live here. [`MoranScheme`] is an explicit tree of nested
//! fundamental intervals with a consistent weight on each, small enough to
//! hold in memory. [`MoranConstruction`] is the block-concatenation set: a
//! sequence of harvested word families whose product is far too large to
//! materialize, so its level statistics are computed family by family.

use alloc::collections::BTreeSet;
use alloc::format;
use alloc::string::String;
use alloc::vec;
use alloc::vec::Vec;

use rand::{Rng, SeedableRng};
use rand_chacha::ChaCha8Rng;

use crate::error::{Error, Result};
use crate::exec::Executor;
use crate::map::IntervalMap;
use crate::math::{abs, ceil, checked_pow, exp, ln, powi, sqrt};
use crate::measures::{self, MeasureSpec, MomentFamily, DEFAULT_DEPTH};
use crate::symbolic::{coded_orbit, cylinder_interval, log_cylinder_interval, variation};

/// Budget on materialized intervals.
/// `ln 1e-13`: narrower intervals lose their endpoints to rounding.
pub const MIN_SCHEME_LOG_DIAM: f64 = -29.933606208922594;
pub const MAX_SCHEME_INTERVALS: usize = 1 << 22;

const SCHEME_TOL: f64 = 1e-12;

#[derive(Debug, Clone, Copy, PartialEq)]
pub struct FundamentalInterval {
    pub lo: f64,
    pub hi: f64,
    /// Usually `hi - lo`; cylinder schemes carry the multiplicatively
    /// tracked diameter instead.
    pub diam: f64,
    pub weight: f64,
    /// Index into the previous level; ignored on the first level.
    pub parent: usize,
}

impl FundamentalInterval {
    pub fn new(lo: f64, hi: f64, weight: f64, parent: usize) -> Self {
        FundamentalInterval { lo, hi, diam: hi - lo, weight, parent }
    }
}

/// Nested levels of disjoint closed intervals below `[0, 1]`.
#[derive(Debug, Clone, PartialEq)]
pub struct MoranScheme {
    levels: Vec<Vec<FundamentalInterval>>,
}

impl MoranScheme {
    pub fn new(levels: Vec<Vec<FundamentalInterval>>) -> Result<Self> {
        let bad = |msg: String| Err(Error::MalformedScheme(msg));
        if levels.is_empty() {
            return bad("no levels".into());
        }
        let mut prev_big_r = f64::INFINITY;
        for (li, level) in levels.iter().enumerate() {
            if level.is_empty() {
                return bad(format!("level {} is empty", li + 1));
            }
            for (j, iv) in level.iter().enumerate() {
                if !(iv.lo <= iv.hi) || iv.lo < -SCHEME_TOL || iv.hi > 1.0 + SCHEME_TOL || !(iv.diam > 0.0) {
                    return bad(format!("interval {j} of level {} is not a proper subinterval of [0,1]", li + 1));
                }
                if !(iv.weight >= 0.0) {
                    return bad(format!("interval {j} of level {} has a negative weight", li + 1));
                }
            }
            let mut order: Vec<usize> = (0..level.len()).collect();
            order.sort_by(|&a, &b| level[a].lo.partial_cmp(&level[b].lo).unwrap());
            for w in order.windows(2) {
                let (a, b) = (&level[w[0]], &level[w[1]]);
                if a.hi > b.lo + SCHEME_TOL {
                    return bad(format!("intervals {} and {} of level {} overlap", w[0], w[1], li + 1));
                }
            }
            let big_r = level.iter().map(|iv| iv.diam).fold(0.0, f64::max);
            if !(big_r < prev_big_r) {
                return bad(format!("largest diameter does not shrink at level {}", li + 1));
            }
            prev_big_r = big_r;
            if li == 0 {
                let total: f64 = level.iter().map(|iv| iv.weight).sum();
                if abs(total - 1.0) > SCHEME_TOL {
                    return bad(format!("first-level weights sum to {total}"));
                }
                continue;
            }
            let parents = &levels[li - 1];
            let mut sums = vec![0.0; parents.len()];
            let mut kids = vec![0usize; parents.len()];
            for (j, iv) in level.iter().enumerate() {
                let Some(p) = parents.get(iv.parent) else {
                    return bad(format!("interval {j} of level {} has no parent", li + 1));
                };
                if iv.lo < p.lo - SCHEME_TOL || iv.hi > p.hi + SCHEME_TOL {
                    return bad(format!("interval {j} of level {} leaves its parent", li + 1));
                }
                sums[iv.parent] += iv.weight;
                kids[iv.parent] += 1;
            }
            for (pi, p) in parents.iter().enumerate() {
                if kids[pi] == 0 {
                    return bad(format!("interval {pi} of level {li} has no children"));
                }
                if abs(sums[pi] - p.weight) > SCHEME_TOL * p.weight.max(1.0) {
                    return bad(format!("children of interval {pi} of level {li} do not add up to its weight"));
                }
            }
        }
        Ok(MoranScheme { levels })
    }

    /// Levels `1..=depth` of the cylinder tree, weighted by
    /// `weight(word, diam)`.
    pub fn from_cylinders<F: Fn(&[u8], f64) -> f64>(map: &IntervalMap, depth: usize, weight: F) -> Result<Self> {
        if depth == 0 {
            return Err(Error::InvalidInput("depth must be at least 1".into()));
        }
        let m = map.alphabet();
        let total: u128 = (1..=depth).map(|n| checked_pow(m, n)).fold(0u128, |a, b| a.saturating_add(b));
        if total > MAX_SCHEME_INTERVALS as u128 {
            return Err(Error::budget("scheme intervals", total, MAX_SCHEME_INTERVALS as u128));
        }
        let mut levels = Vec::with_capacity(depth);
        let mut words: Vec<Vec<u8>> = vec![Vec::new()];
        for n in 1..=depth {
            let mut next = Vec::with_capacity(words.len() * m);
            let mut level = Vec::with_capacity(words.len() * m);
            for (pi, w) in words.iter().enumerate() {
                for a in 0..m {
                    let mut c = w.clone();
                    c.push(a as u8);
                    let (lo, hi, diam) = cylinder_interval(map, &c)?;
                    level.push(FundamentalInterval { lo, hi, diam, weight: weight(&c, diam), parent: if n == 1 { 0 } else { pi } });
                    next.push(c);
                }
            }
            levels.push(level);
            words = next;
        }
        MoranScheme::new(levels)
    }

    /// Cylinder tree weighted by `μ[w]`.
    pub fn from_measure(map: &IntervalMap, spec: &MeasureSpec, depth: usize) -> Result<Self> {
        spec.check_map(map)?;
        MoranScheme::from_cylinders(map, depth, |w, _| exp(spec.log_word_probability(w)))
    }

    pub fn levels(&self) -> &[Vec<FundamentalInterval>] {
        &self.levels
    }

    pub fn depth(&self) -> usize {
        self.levels.len()
    }

    /// `(r_n, R_n)` at level `n` (1-based).
    pub fn diameters(&self, n: usize) -> (f64, f64) {
        let level = &self.levels[n - 1];
        let r = level.iter().map(|iv| iv.diam).fold(f64::INFINITY, f64::min);
        let big = level.iter().map(|iv| iv.diam).fold(0.0, f64::max);
        (r, big)
    }
}

#[derive(Debug, Clone, Copy, PartialEq)]
pub struct LevelReport {
    pub level: usize,
    pub count: usize,
    pub r: f64,
    pub big_r: f64,
    /// `log R_n / log r_n`.
    pub diameter_ratio: f64,
    /// `log r_{n+1} / log r_n`; absent on the last level.
    pub growth_ratio: Option<f64>,
    /// `min log η / max log η`.
    pub balance: f64,
}

#[derive(Debug, Clone, PartialEq)]
pub struct SchemeReport {
    pub levels: Vec<LevelReport>,
    /// Names of the sequences that fail to approach 1 over the last half of
    /// the levels.
    pub flags: Vec<&'static str>,
}

impl SchemeReport {
    pub fn flagged(&self) -> bool {
        !self.flags.is_empty()
    }
}

/// `min log η / max log η` over a set of log-weights, 1 when both are 0.
pub fn balance_ratio(min_log: f64, max_log: f64) -> f64 {
    if min_log == max_log {
        1.0
    } else {
        min_log / max_log
    }
}

/// A sequence "approaches 1" over its tail when its distance to 1 shrinks
/// from the first tail entry to the last, or is already negligible.
fn approaches_one(values: &[f64]) -> bool {
    if values.len() < 2 {
        return true;
    }
    let half = values.len() / 2;
    let tail = &values[half.min(values.len() - 2)..];
    let first = abs(tail[0] - 1.0);
    let last = abs(tail[tail.len() - 1] - 1.0);
    last <= 1e-9 || last < first * (1.0 - 1e-9)
}

pub fn check_abstract_scheme(scheme: &MoranScheme) -> Result<SchemeReport> {
    let depth = scheme.depth();
    if depth < 3 {
        return Err(Error::MalformedScheme(format!("need at least 3 levels, got {depth}")));
    }
    let mut levels = Vec::with_capacity(depth);
    for n in 1..=depth {
        let (r, big_r) = scheme.diameters(n);
        let growth_ratio = (n < depth).then(|| ln(scheme.diameters(n + 1).0) / ln(r));
        let logs = scheme.levels[n - 1].iter().filter(|iv| iv.weight > 0.0).map(|iv| ln(iv.weight));
        let (mn, mx) = logs.fold((f64::INFINITY, f64::NEG_INFINITY), |(a, b), v| (a.min(v), b.max(v)));
        levels.push(LevelReport {
            level: n,
            count: scheme.levels[n - 1].len(),
            r,
            big_r,
            diameter_ratio: ln(big_r) / ln(r),
            growth_ratio,
            balance: balance_ratio(mn, mx),
        });
    }
    let mut flags = Vec::new();
    let seq = |f: &dyn Fn(&LevelReport) -> Option<f64>| levels.iter().filter_map(f).collect::<Vec<f64>>();
    if !approaches_one(&seq(&|l| Some(l.diameter_ratio))) {
        flags.push("diameter_ratio");
    }
    if !approaches_one(&seq(&|l| l.growth_ratio)) {
        flags.push("growth_ratio");
    }
    if !approaches_one(&seq(&|l| Some(l.balance))) {
        flags.push("balance");
    }
    Ok(SchemeReport { levels, flags })
}

/// Level-`n` quotients `log η(I) / log diam(I)`.
#[derive(Debug, Clone, PartialEq)]
pub struct LocalDimension {
    pub level: usize,
    pub quotients: Vec<f64>,
    pub min: f64,
    pub max: f64,
    /// `η`-weighted mean of the quotients.
    pub weighted_mean: f64,
}

pub fn local_dimension(scheme: &MoranScheme, n: usize) -> Result<LocalDimension> {
    if n == 0 || n > scheme.depth() {
        return Err(Error::MalformedScheme(format!("level {n} is not built (depth {})", scheme.depth())));
    }
    let level = &scheme.levels[n - 1];
    let mut quotients = Vec::with_capacity(level.len());
    let (mut mn, mut mx, mut mean) = (f64::INFINITY, f64::NEG_INFINITY, 0.0);
    for iv in level {
        let q = if iv.weight > 0.0 { ln(iv.weight) / ln(iv.diam) } else { f64::INFINITY };
        if iv.weight > 0.0 {
            mn = mn.min(q);
            mx = mx.max(q);
            mean += iv.weight * q;
        }
        quotients.push(q);
    }
    Ok(LocalDimension { level: n, quotients, min: mn, max: mx, weighted_mean: mean })
}

/// Block lengths per stage: `l_{i,j} = m_i + j` for `j = 0..=p_i`,
/// `p_i = m_{i+1} − m_i − 1`, tolerances `eps_i = 1/i`, pad factors
/// `ceil(√i)`.
#[derive(Debug, Clone, PartialEq)]
pub struct BlockSchedule {
    m: Vec<usize>,
    cont_rank: Vec<Option<usize>>,
}

/// One block of the relabeled sequence `l*_t`.
#[derive(Debug, Clone, Copy, PartialEq, Eq)]
pub struct BlockSlot {
    pub stage: usize,
    pub index: usize,
    pub length: usize,
    pub pad_factor: usize,
}

impl BlockSchedule {
    pub fn new(stages: usize, m1: usize) -> Result<Self> {
        if stages == 0 || m1 == 0 {
            return Err(Error::InvalidInput("need at least one stage and m_1 ≥ 1".into()));
        }
        let mut m = vec![m1];
        for _ in 0..stages {
            let last = *m.last().unwrap();
            m.push(2 * last);
        }
        Ok(BlockSchedule { m, cont_rank: vec![None; stages] })
    }

    pub fn stages(&self) -> usize {
        self.m.len() - 1
    }

    /// Stage indices are 1-based throughout.
    pub fn eps(&self, i: usize) -> f64 {
        1.0 / i as f64
    }

    pub fn m(&self, i: usize) -> usize {
        self.m[i - 1]
    }

    pub fn p(&self, i: usize) -> usize {
        self.m[i] - self.m[i - 1] - 1
    }

    pub fn lengths(&self, i: usize) -> Vec<usize> {
        (0..=self.p(i)).map(|j| self.m(i) + j).collect()
    }

    pub fn pad_factor(&self, i: usize) -> usize {
        ceil(sqrt(i as f64)) as usize
    }

    pub fn cont_rank(&self, i: usize) -> Option<usize> {
        self.cont_rank[i - 1]
    }

    /// `l*_t` in concatenation order.
    pub fn blocks(&self) -> Vec<BlockSlot> {
        let mut out = Vec::new();
        for i in 1..=self.stages() {
            for (j, length) in self.lengths(i).into_iter().enumerate() {
                out.push(BlockSlot { stage: i, index: j, length, pad_factor: self.pad_factor(i) });
            }
        }
        out
    }

    /// Total word length with pads scaled by `pad_scale` (0 for none).
    pub fn total_length(&self, pad_scale: usize) -> usize {
        self.blocks().iter().map(|b| b.length * (1 + pad_scale * b.pad_factor)).sum()
    }

    /// Doubles `m_i` and restores `m_{k+1} ≥ 2 m_k` above it.
    pub fn raise(&mut self, i: usize) {
        self.m[i - 1] *= 2;
        for k in i..self.m.len() {
            self.m[k] = self.m[k].max(2 * self.m[k - 1]);
        }
    }

    /// `max_j l_{i,j+1} / l_{i,j}`.
    pub fn step_ratio(&self, i: usize) -> f64 {
        if self.p(i) == 0 {
            1.0
        } else {
            (self.m(i) + 1) as f64 / self.m(i) as f64
        }
    }

    /// `n_{q+1} / n_q` for the partial sums of block lengths (pads included
    /// with `pad_scale`).
    pub fn partial_sum_ratios(&self, pad_scale: usize) -> Vec<f64> {
        let mut sums = Vec::new();
        let mut acc = 0usize;
        for b in self.blocks() {
            acc += b.length * (1 + pad_scale * b.pad_factor);
            sums.push(acc as f64);
        }
        sums.windows(2).map(|w| w[1] / w[0]).collect()
    }

    /// Smallest `n ≤ cap` at which `var_n(g)/n` and `var_n(x^j)/n` for
    /// `j ≤ i` all drop below `eps_i`.
    pub fn compute_cont_ranks<E: Executor>(&mut self, map: &IntervalMap, cap: usize, exec: &E) -> Result<()> {
        let g = |x: f64| map.derivative(x).map(|d| ln(abs(d))).unwrap_or(0.0);
        let mut table: Vec<Vec<f64>> = Vec::new();
        for n in 1..=cap {
            let mut row = vec![variation(map, g, n, exec)? / n as f64];
            for j in 1..=self.stages() {
                row.push(variation(map, |x| powi(x, j as u32), n, exec)? / n as f64);
            }
            table.push(row);
        }
        for i in 1..=self.stages() {
            let eps = self.eps(i);
            self.cont_rank[i - 1] = table.iter().position(|row| row[..=i].iter().all(|&v| v < eps)).map(|p| p + 1);
        }
        Ok(())
    }
}

/// What harvested words are compared against.
#[derive(Debug, Clone, PartialEq)]
pub struct HarvestTargets {
    /// `∫ x^j dμ` for `j = 1..=k`.
    pub moments: Vec<f64>,
    pub lyapunov: f64,
    pub entropy: f64,
}

impl HarvestTargets {
    pub fn new(map: &IntervalMap, mu: &MeasureSpec, k: usize) -> Result<Self> {
        mu.check_map(map)?;
        let lyapunov = measures::lyapunov(mu, map, DEFAULT_DEPTH)?;
        if !(lyapunov > 1e-12) {
            return Err(Error::InvalidInput(format!("measure is not hyperbolic (λ = {lyapunov})")));
        }
        let fam = MomentFamily::new(k.max(8))?;
        let m = measures::moments(mu, map, fam, DEFAULT_DEPTH)?;
        Ok(HarvestTargets { moments: m.values[..k].to_vec(), lyapunov, entropy: mu.entropy() })
    }
}

#[derive(Debug, Clone, Copy, PartialEq)]
pub struct HarvestParams {
    pub stage: usize,
    pub index: usize,
    pub eps: f64,
    /// Prefixes of every length in `from..=length` are tested.
    pub from: usize,
    pub length: usize,
    pub delta: f64,
    pub samples: usize,
    pub seed: u64,
}

/// Exhaustive harvesting when there are at most this many words.
pub const EXACT_HARVEST_LIMIT: u128 = 1 << 18;
/// Retained Monte-Carlo samples kept per family.
pub const MAX_STORED_SAMPLES: usize = 4096;

const BOUND_NAMES: [&str; 3] = ["moment", "lyapunov", "entropy"];
const SAMPLE_CHUNK: usize = 1000;

/// One harvested family `Σ(i, j)`.
#[derive(Debug, Clone, PartialEq)]
pub struct BlockFamily {
    pub stage: usize,
    pub index: usize,
    pub length: usize,
    pub pad_symbol: u8,
    pub pad: usize,
    /// Core words, without the pad. Exhaustive families hold all of `Ω`;
    /// sampled ones hold retained draws, which are distributed as `ρ`.
    pub words: Vec<Vec<u8>>,
    /// `log ρ_w = log μ[w] − log μ(Ω)`.
    pub log_rho: Vec<f64>,
    /// `log diam` of the padded word's cylinder.
    pub log_diam: Vec<f64>,
    pub retained_mass: f64,
    pub exact: bool,
    pub failures: [usize; 3],
    cumulative: Vec<f64>,
}

impl BlockFamily {
    pub fn total_length(&self) -> usize {
        self.length + self.pad
    }

    /// Draws a word index according to `ρ`.
    pub fn pick<R: Rng + ?Sized>(&self, rng: &mut R) -> usize {
        if self.exact {
            let u: f64 = rng.gen::<f64>() * self.cumulative.last().copied().unwrap_or(1.0);
            self.cumulative.partition_point(|&c| c <= u).min(self.words.len() - 1)
        } else {
            rng.gen_range(0..self.words.len())
        }
    }

    pub fn padded_word(&self, idx: usize) -> Vec<u8> {
        let mut w = self.words[idx].clone();
        w.resize(self.length + self.pad, self.pad_symbol);
        w
    }
}

/// Index of the first bound a word violates, if any.
fn violated_bound(
    map: &IntervalMap,
    mu: &MeasureSpec,
    targets: &HarvestTargets,
    k: usize,
    params: &HarvestParams,
    w: &[u8],
) -> Result<Option<usize>> {
    let orbit = coded_orbit(map, w, 0.5)?;
    let logp = mu.log_prefix_probabilities(w);
    let mut sg = 0.0;
    let mut sf = vec![0.0; k];
    let eps = params.eps;
    for (t, &z) in orbit.iter().enumerate() {
        sg += map.branch(w[t] as usize).log_derivative(z);
        let mut zp = 1.0;
        for s in sf.iter_mut() {
            zp *= z;
            *s += zp;
        }
        let n = t + 1;
        if n < params.from {
            continue;
        }
        let nf = n as f64;
        if sf.iter().zip(&targets.moments).any(|(s, a)| !(abs(s / nf - a) < eps)) {
            return Ok(Some(0));
        }
        if !(abs(sg / nf - targets.lyapunov) < eps) {
            return Ok(Some(1));
        }
        if !(abs(-logp[t] / nf - targets.entropy) < eps) {
            return Ok(Some(2));
        }
    }
    Ok(None)
}

fn stream_id(stage: usize, length: usize, chunk: usize) -> u64 {
    ((stage as u64) << 44) | ((length as u64) << 24) | chunk as u64
}

/// Samples (or enumerates) words of length `params.length` and keeps those
/// whose prefixes stay within `eps` of the targets for the first
/// `min(stage, k)` moments, the Lyapunov exponent and the entropy.
pub fn harvest_blocks<E: Executor>(
    map: &IntervalMap,
    mu: &MeasureSpec,
    targets: &HarvestTargets,
    params: &HarvestParams,
    exec: &E,
) -> Result<BlockFamily> {
    if params.samples < 1000 {
        return Err(Error::InvalidInput("harvesting needs at least 1000 samples".into()));
    }
    if params.from == 0 || params.from > params.length {
        return Err(Error::InvalidInput("need 1 ≤ m_i ≤ block length".into()));
    }
    if !(params.delta > 0.0 && params.delta < 1.0) {
        return Err(Error::InvalidInput("delta must lie in (0, 1)".into()));
    }
    let k = params.stage.min(targets.moments.len());
    let m = map.alphabet();
    let count = checked_pow(m, params.length);
    let mut failures = [0usize; 3];
    let (words, log_mu, mass, exact) = if count <= EXACT_HARVEST_LIMIT {
        let mut words = Vec::new();
        let mut log_mu = Vec::new();
        let mut mass = 0.0;
        let mut w = vec![0u8; params.length];
        for _ in 0..count {
            let lp = mu.log_word_probability(&w);
            if lp > f64::NEG_INFINITY {
                match violated_bound(map, mu, targets, k, params, &w)? {
                    None => {
                        mass += exp(lp);
                        words.push(w.clone());
                        log_mu.push(lp);
                    }
                    Some(b) => failures[b] += 1,
                }
            }
            for t in (0..w.len()).rev() {
                w[t] += 1;
                if (w[t] as usize) < m {
                    break;
                }
                w[t] = 0;
            }
        }
        (words, log_mu, mass, true)
    } else {
        let chunks = params.samples.div_ceil(SAMPLE_CHUNK);
        let parts = exec.map_chunks(chunks, |c| -> Result<(Vec<Vec<u8>>, usize, [usize; 3])> {
            let mut rng = ChaCha8Rng::seed_from_u64(params.seed);
            rng.set_stream(stream_id(params.stage, params.length, c));
            let n = SAMPLE_CHUNK.min(params.samples - c * SAMPLE_CHUNK);
            let mut kept = Vec::new();
            let mut fails = [0usize; 3];
            for _ in 0..n {
                let w = mu.sample_word(&mut rng, params.length);
                match violated_bound(map, mu, targets, k, params, &w)? {
                    None => kept.push(w),
                    Some(b) => fails[b] += 1,
                }
            }
            let retained = kept.len();
            Ok((kept, retained, fails))
        });
        let mut words = Vec::new();
        let mut retained = 0;
        for part in parts {
            let (kept, r, fails) = part?;
            retained += r;
            for b in 0..3 {
                failures[b] += fails[b];
            }
            for w in kept {
                if words.len() < MAX_STORED_SAMPLES {
                    words.push(w);
                }
            }
        }
        let log_mu = words.iter().map(|w| mu.log_word_probability(w)).collect();
        (words, log_mu, retained as f64 / params.samples as f64, false)
    };
    if words.is_empty() || mass < 1.0 - params.delta {
        let worst = (0..3).max_by_key(|&b| (failures[b], usize::MAX - b)).unwrap();
        return Err(Error::HarvestFailed { stage: params.stage, retained: mass, bound: BOUND_NAMES[worst] });
    }
    let log_mass = ln(mass);
    let log_rho: Vec<f64> = log_mu.iter().map(|l| l - log_mass).collect();
    let mut cumulative = Vec::new();
    if exact {
        let mut acc = 0.0;
        for l in &log_rho {
            acc += exp(*l);
            cumulative.push(acc);
        }
    }
    let mut fam = BlockFamily {
        stage: params.stage,
        index: params.index,
        length: params.length,
        pad_symbol: 0,
        pad: 0,
        words,
        log_rho,
        log_diam: Vec::new(),
        retained_mass: mass,
        exact,
        failures,
        cumulative,
    };
    fam.log_diam = padded_log_diams(map, &fam)?;
    Ok(fam)
}

fn padded_log_diams(map: &IntervalMap, fam: &BlockFamily) -> Result<Vec<f64>> {
    (0..fam.words.len()).map(|i| log_cylinder_interval(map, &fam.padded_word(i)).map(|c| c.2)).collect()
}

#[derive(Debug, Clone, Copy, PartialEq)]
pub struct MoranConfig {
    pub stages: usize,
    /// Starting value of `m_1`; harvesting may raise it.
    pub m1: usize,
    pub delta: f64,
    pub samples: usize,
    /// Raises of `m_i` allowed per stage.
    pub max_retries: usize,
    pub max_total_length: usize,
    pub seed: u64,
    pub pad_symbol: u8,
    /// Require the pad symbol's fixed point to be parabolic.
    pub strict_pad: bool,
    /// Multiplier on the pad factors; 0 turns the padded construction into
    /// the plain one.
    pub pad_scale: usize,
    /// Random paths used for diameter statistics on nonlinear maps.
    pub path_samples: usize,
}

impl Default for MoranConfig {
    fn default() -> Self {
        MoranConfig {
            stages: 3,
            m1: 8,
            delta: 0.1,
            samples: 10_000,
            max_retries: 4,
            max_total_length: 4096,
            seed: 0,
            pad_symbol: 0,
            strict_pad: true,
            pad_scale: 1,
            path_samples: 256,
        }
    }
}

/// Statistics of one level (the first `level` blocks concatenated).
#[derive(Debug, Clone, Copy, PartialEq)]
pub struct LevelStats {
    pub level: usize,
    /// Word length `n_q` including pads.
    pub length: usize,
    pub min_log_eta: f64,
    pub max_log_eta: f64,
    pub min_log_diam: f64,
    pub max_log_diam: f64,
    pub min_quotient: f64,
    pub max_quotient: f64,
    /// Bounds for `log η` predicted from `h`, `eps` and `delta`.
    pub eta_bounds: (f64, f64),
    /// Bounds for `log diam` predicted from `λ` and `eps`.
    pub diam_bounds: (f64, f64),
    /// Diameter extremes come from every stored word (affine maps) rather
    /// than from sampled paths.
    pub exhaustive: bool,
}

impl LevelStats {
    pub fn balance(&self) -> f64 {
        balance_ratio(self.min_log_eta, self.max_log_eta)
    }

    pub fn eta_sandwich_holds(&self) -> bool {
        let tol = 1e-9 * self.eta_bounds.0.abs().max(1.0);
        self.eta_bounds.0 - tol <= self.min_log_eta && self.max_log_eta <= self.eta_bounds.1 + tol
    }

    pub fn diam_sandwich_holds(&self) -> bool {
        let tol = 1e-9 * self.diam_bounds.0.abs().max(1.0);
        self.diam_bounds.0 - tol <= self.min_log_diam && self.max_log_diam <= self.diam_bounds.1 + tol
    }
}

/// The concatenated block set with its product measure.
#[derive(Debug, Clone, PartialEq)]
pub struct MoranConstruction {
    pub schedule: BlockSchedule,
    /// Families in concatenation order.
    pub families: Vec<BlockFamily>,
    pub targets: HarvestTargets,
    pub delta: f64,
    pub padded: bool,
    pub levels: Vec<LevelStats>,
    pub retries: usize,
}

/// Index of the first occurrence of each distinct stored word, in storage
/// order.
fn distinct_words(fam: &BlockFamily) -> Vec<usize> {
    let mut seen: BTreeSet<&[u8]> = BTreeSet::new();
    (0..fam.words.len()).filter(|&i| seen.insert(fam.words[i].as_slice())).collect()
}

/// The plain construction `M`.
pub fn build_moran_m<E: Executor>(
    map: &IntervalMap,
    mu: &MeasureSpec,
    cfg: &MoranConfig,
    exec: &E,
) -> Result<MoranConstruction> {
    build(map, mu, cfg, 0, exec)
}

/// The padded construction: every harvested word `w` of length `l` in stage
/// `i` is followed by `pad_symbol` repeated `pad_factor_i · pad_scale · l`
/// times.
pub fn build_moran_padded<E: Executor>(
    map: &IntervalMap,
    mu: &MeasureSpec,
    cfg: &MoranConfig,
    exec: &E,
) -> Result<MoranConstruction> {
    let s = cfg.pad_symbol as usize;
    if s >= map.alphabet() {
        return Err(Error::PadSymbolInvalid { symbol: s, reason: "outside the alphabet".into() });
    }
    if cfg.strict_pad && !map.fixed_point(s).parabolic {
        return Err(Error::PadSymbolInvalid {
            symbol: s,
            reason: format!("fixed point {} of branch {s} is not parabolic", map.fixed_point(s).x),
        });
    }
    build(map, mu, cfg, cfg.pad_scale, exec)
}

fn build<E: Executor>(
    map: &IntervalMap,
    mu: &MeasureSpec,
    cfg: &MoranConfig,
    pad_scale: usize,
    exec: &E,
) -> Result<MoranConstruction> {
    if !(cfg.delta > 0.0 && cfg.delta < 1.0) {
        return Err(Error::InvalidInput("delta must lie in (0, 1)".into()));
    }
    let targets = HarvestTargets::new(map, mu, cfg.stages)?;
    let mut schedule = BlockSchedule::new(cfg.stages, cfg.m1)?;
    let mut stages: Vec<Vec<BlockFamily>> = Vec::new();
    let mut retries = vec![0usize; cfg.stages + 1];
    let mut total_retries = 0;
    let mut i = 1;
    while i <= cfg.stages {
        let total = schedule.total_length(pad_scale);
        if total > cfg.max_total_length {
            return Err(Error::budget("total word length", total as u128, cfg.max_total_length as u128));
        }
        let mut fams = Vec::new();
        let mut failed = None;
        for (j, length) in schedule.lengths(i).into_iter().enumerate() {
            let params = HarvestParams {
                stage: i,
                index: j,
                eps: schedule.eps(i),
                from: schedule.m(i),
                length,
                delta: cfg.delta,
                samples: cfg.samples,
                seed: cfg.seed,
            };
            match harvest_blocks(map, mu, &targets, &params, exec) {
                Ok(mut fam) => {
                    if pad_scale > 0 {
                        fam.pad_symbol = cfg.pad_symbol;
                        fam.pad = schedule.pad_factor(i) * pad_scale * length;
                        fam.log_diam = padded_log_diams(map, &fam)?;
                    }
                    fams.push(fam);
                }
                Err(e @ Error::HarvestFailed { .. }) => {
                    failed = Some(e);
                    break;
                }
                Err(e) => return Err(e),
            }
        }
        match failed {
            None => {
                stages.push(fams);
                i += 1;
            }
            Some(e) => {
                retries[i] += 1;
                total_retries += 1;
                if retries[i] > cfg.max_retries {
                    return Err(e);
                }
                schedule.raise(i);
                // raising m_i lengthens the previous stage, so redo it too
                let restart = if i > 1 { i - 1 } else { 1 };
                stages.truncate(restart - 1);
                i = restart;
            }
        }
    }
    let families: Vec<BlockFamily> = stages.into_iter().flatten().collect();
    let mut c = MoranConstruction {
        schedule,
        families,
        targets,
        delta: cfg.delta,
        padded: pad_scale > 0,
        levels: Vec::new(),
        retries: total_retries,
    };
    c.levels = c.compute_levels(map, cfg, exec)?;
    Ok(c)
}

/// `(log ρ, log diam)` pairs of a family with near-duplicates removed.
fn distinct_pairs(fam: &BlockFamily) -> Vec<(f64, f64)> {
    let mut v: Vec<(f64, f64)> = fam.log_rho.iter().copied().zip(fam.log_diam.iter().copied()).collect();
    v.sort_by(|a, b| a.partial_cmp(b).unwrap());
    v.dedup_by(|a, b| abs(a.0 - b.0) < 1e-9 && abs(a.1 - b.1) < 1e-9);
    v
}

/// Extremes of `Σ a_b / Σ d_b` over one pair per family (`d < 0`), by
/// bisection on the separable functions `Σ_b min/max_w (a − t d)`.
fn quotient_extremes(pairs: &[Vec<(f64, f64)>]) -> (f64, f64) {
    let lo_fn = |t: f64| pairs.iter().map(|p| p.iter().map(|(a, d)| a - t * d).fold(f64::INFINITY, f64::min)).sum::<f64>();
    let hi_fn = |t: f64| pairs.iter().map(|p| p.iter().map(|(a, d)| a - t * d).fold(f64::NEG_INFINITY, f64::max)).sum::<f64>();
    let top = pairs.iter().flatten().map(|(a, d)| a / d).fold(0.0, f64::max) + 1.0;
    // max quotient: sup { t : lo_fn(t) ≤ 0 }, lo_fn increasing
    let root = |f: &dyn Fn(f64) -> f64| {
        let (mut a, mut b) = (0.0, top);
        for _ in 0..100 {
            let mid = 0.5 * (a + b);
            if f(mid) <= 0.0 {
                a = mid;
            } else {
                b = mid;
            }
        }
        0.5 * (a + b)
    };
    let max_q = root(&lo_fn);
    // min quotient: inf { t : hi_fn(t) ≥ 0 }, hi_fn increasing
    let min_q = root(&|t| if hi_fn(t) < 0.0 { -1.0 } else { 1.0 });
    (min_q, max_q)
}

impl MoranConstruction {
    pub fn total_length(&self) -> usize {
        self.families.iter().map(|f| f.total_length()).sum()
    }

    /// `h / λ` of the harvesting measure.
    pub fn target_dimension(&self) -> f64 {
        self.targets.entropy / self.targets.lyapunov
    }

    pub fn final_level(&self) -> &LevelStats {
        self.levels.last().expect("constructions have at least one level")
    }

    fn compute_levels<E: Executor>(&self, map: &IntervalMap, cfg: &MoranConfig, exec: &E) -> Result<Vec<LevelStats>> {
        let h = self.targets.entropy;
        let lam = self.targets.lyapunov;
        let exhaustive = map.is_affine();
        let paths = if exhaustive { None } else { Some(self.path_log_diams(map, cfg, exec)?) };
        let mut pairs = Vec::new();
        let mut out = Vec::with_capacity(self.families.len());
        let (mut min_eta, mut max_eta, mut min_d, mut max_d) = (0.0, 0.0, 0.0, 0.0);
        let (mut sum_l, mut sum_lh_lo, mut sum_lh_hi, mut sum_le, mut sum_lke, mut length) = (0.0, 0.0, 0.0, 0.0, 0.0, 0);
        for (q, fam) in self.families.iter().enumerate() {
            let fold = |v: &[f64]| v.iter().fold((f64::INFINITY, f64::NEG_INFINITY), |(a, b), &x| (a.min(x), b.max(x)));
            let (a0, a1) = fold(&fam.log_rho);
            min_eta += a0;
            max_eta += a1;
            length += fam.total_length();
            let l = fam.length as f64;
            let e = self.schedule.eps(fam.stage);
            let kf = if fam.length > 0 { fam.pad as f64 / l } else { 0.0 };
            sum_l += l;
            sum_lh_lo += l * (h + e);
            sum_lh_hi += l * (h - e);
            sum_le += l * e;
            sum_lke += l * (1.0 + kf) * e;
            let level = q + 1;
            let (min_q, max_q, dmin, dmax);
            if let Some(paths) = &paths {
                let mut qmin = f64::INFINITY;
                let mut qmax = f64::NEG_INFINITY;
                let mut lo = f64::INFINITY;
                let mut hi = f64::NEG_INFINITY;
                for (eta, ld) in paths {
                    qmin = qmin.min(eta[q] / ld[q]);
                    qmax = qmax.max(eta[q] / ld[q]);
                    lo = lo.min(ld[q]);
                    hi = hi.max(ld[q]);
                }
                (min_q, max_q, dmin, dmax) = (qmin, qmax, lo, hi);
            } else {
                let (d0, d1) = fold(&fam.log_diam);
                min_d += d0;
                max_d += d1;
                pairs.push(distinct_pairs(fam));
                let (a, b) = quotient_extremes(&pairs);
                (min_q, max_q, dmin, dmax) = (a, b, min_d, max_d);
            }
            let diam_slack = if self.padded { sum_lke } else { sum_l * e + sum_le };
            out.push(LevelStats {
                level,
                length,
                min_log_eta: min_eta,
                max_log_eta: max_eta,
                min_log_diam: dmin,
                max_log_diam: dmax,
                min_quotient: min_q,
                max_quotient: max_q,
                eta_bounds: (-sum_lh_lo, -(level as f64) * ln(1.0 - self.delta) - sum_lh_hi),
                diam_bounds: (-sum_l * lam - diam_slack, -sum_l * lam + diam_slack),
                exhaustive: paths.is_none(),
            });
        }
        Ok(out)
    }

    /// Per sampled path: cumulative `log η` and `log diam` at every level.
    fn path_log_diams<E: Executor>(
        &self,
        map: &IntervalMap,
        cfg: &MoranConfig,
        exec: &E,
    ) -> Result<Vec<(Vec<f64>, Vec<f64>)>> {
        let runs = exec.map_chunks(cfg.path_samples.max(1), |p| -> Result<(Vec<f64>, Vec<f64>)> {
            let mut rng = ChaCha8Rng::seed_from_u64(cfg.seed);
            rng.set_stream((1u64 << 62) | p as u64);
            let mut word = Vec::new();
            let mut eta = Vec::with_capacity(self.families.len());
            let mut ld = Vec::with_capacity(self.families.len());
            let mut acc = 0.0;
            for fam in &self.families {
                let idx = fam.pick(&mut rng);
                acc += fam.log_rho[idx];
                word.extend(fam.padded_word(idx));
                eta.push(acc);
                ld.push(log_cylinder_interval(map, &word)?.2);
            }
            Ok((eta, ld))
        });
        runs.into_iter().collect()
    }

    /// A random word of the construction, blocks drawn by `ρ`, cut at
    /// `max_len` symbols when given.
    pub fn sample_word<R: Rng + ?Sized>(&self, rng: &mut R, max_len: Option<usize>) -> Vec<u8> {
        let cap = max_len.unwrap_or(usize::MAX);
        let mut word = Vec::new();
        for fam in &self.families {
            if word.len() >= cap {
                break;
            }
            let idx = fam.pick(rng);
            word.extend(fam.padded_word(idx));
        }
        word.truncate(cap);
        word
    }

    /// `count` points `π(ω)` for random construction words truncated to
    /// `max_len` symbols.
    pub fn sample_points<E: Executor>(&self, map: &IntervalMap, count: usize, max_len: usize, seed: u64, exec: &E) -> Result<Vec<f64>> {
        let chunks = count.div_ceil(SAMPLE_CHUNK);
        let parts = exec.map_chunks(chunks, |c| -> Result<Vec<f64>> {
            let mut rng = ChaCha8Rng::seed_from_u64(seed);
            rng.set_stream(c as u64);
            let n = SAMPLE_CHUNK.min(count - c * SAMPLE_CHUNK);
            let mut pts = Vec::with_capacity(n);
            for _ in 0..n {
                let w = self.sample_word(&mut rng, Some(max_len));
                let jitter: f64 = rng.gen();
                let orbit = coded_orbit(map, &w, jitter)?;
                pts.push(orbit.first().copied().unwrap_or(jitter));
            }
            Ok(pts)
        });
        let mut out = Vec::with_capacity(count);
        for p in parts {
            out.extend(p?);
        }
        Ok(out)
    }

    /// Largest `levels` for which [`MoranConstruction::to_scheme_capped`]
    /// keeps at most `max_intervals` intervals, all of them wide enough to
    /// stay distinct in double precision.
    pub fn scheme_levels_within(&self, max_words: usize, max_intervals: usize) -> usize {
        let mut size: u128 = 1;
        let mut total: u128 = 0;
        let mut log_diam = 0.0;
        for (q, fam) in self.families.iter().enumerate() {
            size = size.saturating_mul(distinct_words(fam).len().min(max_words) as u128);
            total = total.saturating_add(size);
            log_diam += fam.log_diam.iter().copied().fold(0.0, f64::min);
            if total > max_intervals.min(MAX_SCHEME_INTERVALS) as u128 || log_diam < MIN_SCHEME_LOG_DIAM {
                return q;
            }
        }
        self.families.len()
    }

    /// The first `levels` levels as an explicit scheme. Sampled families
    /// contribute their stored distinct words with `ρ` renormalized over
    /// them, so the result is a restriction of the construction.
    pub fn to_scheme(&self, map: &IntervalMap, levels: usize) -> Result<MoranScheme> {
        self.to_scheme_capped(map, levels, usize::MAX)
    }

    /// [`MoranConstruction::to_scheme`] keeping only the `max_words` words of
    /// largest `ρ` in each family.
    pub fn to_scheme_capped(&self, map: &IntervalMap, levels: usize, max_words: usize) -> Result<MoranScheme> {
        let levels = levels.min(self.families.len());
        if levels == 0 || max_words == 0 {
            return Err(Error::InvalidInput("need at least one level and one word".into()));
        }
        let mut choices: Vec<Vec<(Vec<u8>, f64)>> = Vec::new();
        let mut size: u128 = 1;
        let mut total: u128 = 0;
        for fam in &self.families[..levels] {
            let mut idx = distinct_words(fam);
            if idx.len() > max_words {
                idx.sort_by(|&a, &b| fam.log_rho[b].total_cmp(&fam.log_rho[a]).then(a.cmp(&b)));
                idx.truncate(max_words);
                idx.sort_unstable();
            }
            let mut seen: Vec<(Vec<u8>, f64)> =
                idx.into_iter().map(|i| (fam.padded_word(i), exp(fam.log_rho[i]))).collect();
            let z: f64 = seen.iter().map(|s| s.1).sum();
            for s in seen.iter_mut() {
                s.1 /= z;
            }
            size = size.saturating_mul(seen.len() as u128);
            total = total.saturating_add(size);
            choices.push(seen);
        }
        if total > MAX_SCHEME_INTERVALS as u128 {
            return Err(Error::budget("scheme intervals", total, MAX_SCHEME_INTERVALS as u128));
        }
        let mut out: Vec<Vec<FundamentalInterval>> = Vec::new();
        let mut prefix: Vec<(Vec<u8>, f64)> = vec![(Vec::new(), 1.0)];
        for (q, fam) in choices.iter().enumerate() {
            let mut next = Vec::new();
            let mut level = Vec::new();
            for (pi, (pw, pweight)) in prefix.iter().enumerate() {
                for (w, r) in fam {
                    let mut c = pw.clone();
                    c.extend_from_slice(w);
                    let (lo, hi, ld) = log_cylinder_interval(map, &c)?;
                    let weight = pweight * r;
                    level.push(FundamentalInterval { lo, hi, diam: exp(ld), weight, parent: if q == 0 { 0 } else { pi } });
                    next.push((c, weight));
                }
            }
            out.push(level);
            prefix = next;
        }
        MoranScheme::new(out)
    }
}

/// Direct evaluation of `η` and `diam` for one construction word split into
/// its blocks; used to cross-check level statistics.
pub fn word_log_eta(c: &MoranConstruction, picks: &[usize]) -> f64 {
    c.families.iter().zip(picks).map(|(f, &i)| f.log_rho[i]).sum()
}

pub(crate) fn pick_words<R: Rng + ?Sized>(c: &MoranConstruction, rng: &mut R) -> Vec<usize> {
    c.families.iter().map(|f| f.pick(rng)).collect()
}

pub(crate) fn assemble(c: &MoranConstruction, picks: &[usize]) -> Vec<u8> {
    let mut w = Vec::new();
    for (f, &i) in c.families.iter().zip(picks) {
        w.extend(f.padded_word(i));
    }
    w
}

/// Draws a full construction word.
pub fn random_word(c: &MoranConstruction, seed: u64) -> Vec<u8> {
    let mut rng = ChaCha8Rng::seed_from_u64(seed);
    assemble(c, &pick_words(c, &mut rng))
}

#[cfg(test)]
mod tests {
    use super::*;
    use crate::exec::Sequential;

    fn uniform_scheme(map: &IntervalMap, depth: usize) -> MoranScheme {
        let m = map.alphabet() as f64;
        MoranScheme::from_cylinders(map, depth, |w, _| powi(1.0 / m, w.len() as u32)).unwrap()
    }

    #[test]
    fn middle_thirds_uniform_report() {
        let s = uniform_scheme(&IntervalMap::middle_thirds(), 8);
        let r = check_abstract_scheme(&s).unwrap();
        for l in &r.levels {
            assert!(abs(l.diameter_ratio - 1.0) < 1e-12);
            assert!(abs(l.balance - 1.0) < 1e-12);
            if let Some(g) = l.growth_ratio {
                let n = l.level as f64;
                assert!(abs(g - (n + 1.0) / n) < 1e-12);
            }
        }
        assert!(!r.flagged());
        let ld = local_dimension(&s, 8).unwrap();
        for q in &ld.quotients {
            assert!(abs(q - ln(2.0) / ln(3.0)) < 1e-12);
        }
        let d = uniform_scheme(&IntervalMap::doubling(), 6);
        assert!(abs(local_dimension(&d, 6).unwrap().max - 1.0) < 1e-12);
    }

    #[test]
    fn mismatched_diameters_are_flagged() {
        let mut levels = Vec::new();
        for n in 1..=8 {
            let a = powi(1.0 / 3.0, n);
            let b = powi(0.5, n);
            levels.push(vec![FundamentalInterval::new(0.0, a, 0.5, 0), FundamentalInterval::new(1.0 - b, 1.0, 0.5, 1)]);
        }
        let r = check_abstract_scheme(&MoranScheme::new(levels).unwrap()).unwrap();
        let last = r.levels.last().unwrap();
        assert!(abs(last.diameter_ratio - ln(2.0) / ln(3.0)) < 1e-12);
        assert!(r.flags.contains(&"diameter_ratio"));
    }

    #[test]
    fn equilibrium_cylinder_scheme() {
        let c = IntervalMap::cantor24();
        let s_star = 0.6942419136306174;
        let s = MoranScheme::from_cylinders(&c, 10, |_, d| crate::math::powf(d, s_star)).unwrap();
        let ld = local_dimension(&s, 10).unwrap();
        assert!(abs(ld.min - s_star) < 1e-9 && abs(ld.max - s_star) < 1e-9);
        let r = check_abstract_scheme(&s).unwrap();
        // min log η / max log η compares 4^{-n} with 2^{-n}
        assert!(abs(r.levels[9].balance - 2.0) < 1e-9);
    }

    #[test]
    fn besicovitch_scheme_brackets_oracle() {
        let t = IntervalMap::doubling();
        let mu = MeasureSpec::bernoulli(vec![0.3, 0.7]).unwrap();
        let s = MoranScheme::from_measure(&t, &mu, 12).unwrap();
        let oracle = mu.entropy() / ln(2.0);
        let ld = local_dimension(&s, 12).unwrap();
        assert!(ld.min < oracle && oracle < ld.max);
        assert!(abs(ld.weighted_mean - oracle) < 1e-12);
        assert!(abs(ld.min - ln(0.7) / ln(0.5)) < 1e-12);
    }

    #[test]
    fn malformed_schemes_rejected() {
        let l1 = vec![FundamentalInterval::new(0.0, 0.6, 0.5, 0), FundamentalInterval::new(0.5, 1.0, 0.5, 0)];
        assert!(matches!(MoranScheme::new(vec![l1]), Err(Error::MalformedScheme(_))));
        let l1 = vec![FundamentalInterval::new(0.0, 0.4, 1.0, 0)];
        let l2 = vec![FundamentalInterval::new(0.3, 0.5, 1.0, 0)];
        assert!(MoranScheme::new(vec![l1, l2]).is_err());
        let s = uniform_scheme(&IntervalMap::doubling(), 2);
        assert!(check_abstract_scheme(&s).is_err());
    }

    #[test]
    fn schedule_shape() {
        let mut s = BlockSchedule::new(3, 4).unwrap();
        assert_eq!(s.lengths(1), vec![4, 5, 6, 7]);
        assert_eq!(s.lengths(2), (8..16).collect::<Vec<_>>());
        assert_eq!(s.step_ratio(1), 1.25);
        assert_eq!(s.pad_factor(1), 1);
        assert_eq!(s.pad_factor(4), 2);
        assert_eq!(s.pad_factor(5), 3);
        assert_eq!(s.total_length(0), (4..32).sum::<usize>());
        let ratios = s.partial_sum_ratios(0);
        assert!(ratios.windows(2).all(|w| w[1] <= w[0]));
        s.raise(2);
        assert_eq!((s.m(1), s.m(2), s.m(3), s.m(4)), (4, 16, 32, 64));
        assert_eq!(s.p(1), 11);
    }

    #[test]
    fn cont_ranks_on_linear_map() {
        let mut s = BlockSchedule::new(2, 4).unwrap();
        s.compute_cont_ranks(&IntervalMap::doubling(), 8, &Sequential).unwrap();
        // var_n(x)/n = 1/(n 2^n)... the variation of x on depth-n cylinders
        assert_eq!(s.cont_rank(1), Some(1));
        assert!(s.cont_rank(2).unwrap() >= 1);
    }

    #[test]
    fn harvest_uniform_doubling_keeps_everything() {
        let t = IntervalMap::doubling();
        let mu = MeasureSpec::bernoulli(vec![0.5, 0.5]).unwrap();
        let targets = HarvestTargets::new(&t, &mu, 1).unwrap();
        for (len, eps) in [(10, 0.5), (30, 0.5)] {
            let p = HarvestParams { stage: 1, index: 0, eps, from: len, length: len, delta: 0.1, samples: 2000, seed: 3, };
            let f = harvest_blocks(&t, &mu, &targets, &p, &Sequential).unwrap();
            assert_eq!(f.retained_mass, 1.0);
            assert_eq!(f.exact, len == 10);
        }
    }

    #[test]
    fn dirac_measure_is_not_harvestable() {
        let m = IntervalMap::manneville(1.0).unwrap();
        let mu = MeasureSpec::dirac_fixed(0, 2).unwrap();
        assert!(matches!(HarvestTargets::new(&m, &mu, 1), Err(Error::InvalidInput(_))));
    }

    #[test]
    fn exact_harvest_mass_matches_binomial() {
        // cantor24 with the equilibrium weights: A_n g = ln 2 (1 + k/n) with
        // k the number of 1s, so only the count of 1s matters at n = L
        let c = IntervalMap::cantor24();
        let u = (sqrt(5.0) - 1.0) / 2.0;
        let mu = MeasureSpec::bernoulli(vec![u, 1.0 - u]).unwrap();
        let targets = HarvestTargets::new(&c, &mu, 1).unwrap();
        let len = 16;
        let eps = 0.2;
        let p = HarvestParams { stage: 0, index: 0, eps, from: len, length: len, delta: 0.9, samples: 1000, seed: 0 };
        let f = harvest_blocks(&c, &mu, &targets, &p, &Sequential).unwrap();
        let lam = targets.lyapunov;
        let h = targets.entropy;
        let binom = crate::math::binomials(len);
        let mut oracle = 0.0;
        for k in 0..=len {
            let n = len as f64;
            let ag = ln(2.0) * (1.0 + k as f64 / n);
            let ent = -((n - k as f64) * ln(u) + k as f64 * ln(1.0 - u)) / n;
            if abs(ag - lam) < eps && abs(ent - h) < eps {
                oracle += binom[len][k] * powi(u, (len - k) as u32) * powi(1.0 - u, k as u32);
            }
        }
        assert!(abs(f.retained_mass - oracle) < 1e-12, "{} vs {}", f.retained_mass, oracle);
    }

    #[test]
    fn uniform_doubling_construction_is_one_dimensional() {
        let t = IntervalMap::doubling();
        let mu = MeasureSpec::bernoulli(vec![0.5, 0.5]).unwrap();
        let cfg = MoranConfig { samples: 1000, ..Default::default() };
        let c = build_moran_m(&t, &mu, &cfg, &Sequential).unwrap();
        assert_eq!(c.retries, 0);
        // only the x^2 bound ever bites, on words that are nearly all 1s
        assert!(c.families.iter().all(|f| f.retained_mass > 0.997 && f.failures[1] + f.failures[2] == 0));
        for l in &c.levels {
            assert!(abs(l.min_quotient - 1.0) < 1e-4 && abs(l.max_quotient - 1.0) < 1e-4);
            assert!(l.eta_sandwich_holds() && l.diam_sandwich_holds());
        }
    }

    #[test]
    fn level_stats_agree_with_direct_words() {
        let c = IntervalMap::cantor24();
        let mu = MeasureSpec::bernoulli(vec![0.618034, 0.381966]).unwrap();
        let cfg = MoranConfig { m1: 4, stages: 2, samples: 1000, ..Default::default() };
        let m = build_moran_m(&c, &mu, &cfg, &Sequential).unwrap();
        let mut rng = ChaCha8Rng::seed_from_u64(9);
        let last = m.final_level();
        for _ in 0..20 {
            let picks = pick_words(&m, &mut rng);
            let w = assemble(&m, &picks);
            let eta = word_log_eta(&m, &picks);
            let ld = log_cylinder_interval(&c, &w).unwrap().2;
            let q = eta / ld;
            assert!(q >= last.min_quotient - 1e-9 && q <= last.max_quotient + 1e-9);
            assert!(eta >= last.min_log_eta - 1e-9 && eta <= last.max_log_eta + 1e-9);
            assert!(ld >= last.min_log_diam - 1e-9 && ld <= last.max_log_diam + 1e-9);
        }
    }

    #[test]
    fn zero_pad_equals_plain() {
        let c = IntervalMap::manneville(1.0).unwrap();
        let mu = MeasureSpec::bernoulli(vec![0.5, 0.5]).unwrap();
        let cfg = MoranConfig { m1: 4, stages: 2, samples: 1000, path_samples: 16, ..Default::default() };
        let a = build_moran_m(&c, &mu, &cfg, &Sequential).unwrap();
        let b = build_moran_padded(&c, &mu, &MoranConfig { pad_scale: 0, ..cfg }, &Sequential).unwrap();
        assert_eq!(a.families, b.families);
        assert_eq!(a.levels, b.levels);
    }

    #[test]
    fn padding_needs_a_parabolic_symbol() {
        let t = IntervalMap::doubling();
        let mu = MeasureSpec::bernoulli(vec![0.5, 0.5]).unwrap();
        let r = build_moran_padded(&t, &mu, &MoranConfig::default(), &Sequential);
        assert!(matches!(r, Err(Error::PadSymbolInvalid { symbol: 0, .. })));
    }

    #[test]
    fn restricted_scheme_is_consistent() {
        let t = IntervalMap::doubling();
        let mu = MeasureSpec::bernoulli(vec![0.3, 0.7]).unwrap();
        let cfg = MoranConfig { m1: 2, stages: 1, samples: 1000, ..Default::default() };
        let c = build_moran_m(&t, &mu, &cfg, &Sequential).unwrap();
        let s = c.to_scheme(&t, 2).unwrap();
        assert_eq!(s.depth(), 2);
    }
}
