//! Parameterized invariant measures, their moments, and the moment metric
//!
//! `d(μ, ν) = Σ_{n ≤ N} 2^{-n} |∫x^n dμ − ∫x^n dν|`.
//!
//! Measures live on the symbol space and are pushed to `[0, 1]` through the
//! coding map. For affine maps the push-forward moments follow from the
//! self-affinity recursion and are exact; for nonlinear maps they come from
//! cylinder quadrature with an explicit error bound.

use alloc::collections::BTreeMap;
use alloc::format;
use alloc::vec;
use alloc::vec::Vec;

use rand::Rng;

use crate::error::{Error, Result};
use crate::exec::Executor;
use crate::map::{BranchKind, IntervalMap};
use crate::math::{abs, binomials, checked_pow, ln, neg_xlogx, powi, shannon, solve_dense};
use crate::symbolic::{CylinderEnumerator, EnumConfig};

/// Default truncation of the moment metric.
pub const DEFAULT_MOMENTS: usize = 32;
/// Default quadrature depth for nonlinear maps.
pub const DEFAULT_DEPTH: usize = 16;

const PROB_TOL: f64 = 1e-12;
const STATIONARY_TOL: f64 = 1e-10;

/// The test functions `f_n(x) = x^n`, `n = 1..=N`.
#[derive(Debug, Clone, Copy, PartialEq, Eq)]
pub struct MomentFamily {
    count: usize,
}

impl MomentFamily {
    pub fn new(count: usize) -> Result<Self> {
        if count < 8 {
            return Err(Error::InvalidInput(format!("moment family needs N >= 8, got {count}")));
        }
        if count > 1000 {
            return Err(Error::InvalidInput("moment family larger than 1000".into()));
        }
        Ok(MomentFamily { count })
    }

    pub fn count(&self) -> usize {
        self.count
    }

    /// Bound on the part of the metric dropped by truncation.
    pub fn tail_bound(&self) -> f64 {
        powi(0.5, self.count as u32 - 1)
    }

    #[inline]
    pub fn eval(&self, n: usize, x: f64) -> f64 {
        powi(x, n as u32)
    }
}

impl Default for MomentFamily {
    fn default() -> Self {
        MomentFamily { count: DEFAULT_MOMENTS }
    }
}

/// First `N` moments of a measure on `[0, 1]`.
#[derive(Debug, Clone, PartialEq)]
pub struct Moments {
    /// `values[n-1] = ∫ x^n`.
    pub values: Vec<f64>,
    /// Bound on how far quadrature points sit from the true mass, in `x`.
    /// Each moment is then off by at most `n * position_error`.
    pub position_error: f64,
}

impl Moments {
    pub fn exact(values: Vec<f64>) -> Self {
        Moments { values, position_error: 0.0 }
    }

    pub fn dirac(x: f64, family: MomentFamily) -> Self {
        Moments::exact((1..=family.count()).map(|n| powi(x, n as u32)).collect())
    }

    /// Lebesgue measure: `1/(n+1)`.
    pub fn lebesgue(family: MomentFamily) -> Self {
        Moments::exact((1..=family.count()).map(|n| 1.0 / (n as f64 + 1.0)).collect())
    }

    /// Empirical moments of a finite point set.
    pub fn empirical(points: &[f64], family: MomentFamily) -> Self {
        let mut v = vec![0.0; family.count()];
        for &x in points {
            let mut p = 1.0;
            for slot in v.iter_mut() {
                p *= x;
                *slot += p;
            }
        }
        let n = points.len().max(1) as f64;
        for slot in v.iter_mut() {
            *slot /= n;
        }
        Moments::exact(v)
    }

    pub fn count(&self) -> usize {
        self.values.len()
    }

    /// `λ a + (1 − λ) b` style mixtures.
    pub fn mixture(parts: &[(f64, &Moments)]) -> Self {
        let n = parts[0].1.count();
        let mut v = vec![0.0; n];
        let mut err = 0.0;
        for (w, m) in parts {
            for (slot, x) in v.iter_mut().zip(&m.values) {
                *slot += w * x;
            }
            err += w * m.position_error;
        }
        Moments { values: v, position_error: err }
    }
}

/// Result of [`metric_d`].
#[derive(Debug, Clone, Copy, PartialEq)]
pub struct MetricValue {
    pub distance: f64,
    /// `2^{1-N}`.
    pub truncation_bound: f64,
    /// Effect of quadrature error on the truncated sum.
    pub quadrature_bound: f64,
}

pub fn metric_d(mu: &Moments, nu: &Moments) -> Result<MetricValue> {
    if mu.count() != nu.count() {
        return Err(Error::InvalidInput(format!(
            "moment vectors of different lengths ({} and {})",
            mu.count(),
            nu.count()
        )));
    }
    let n = mu.count();
    let mut distance = 0.0;
    let mut w = 1.0;
    for (a, b) in mu.values.iter().zip(&nu.values) {
        w *= 0.5;
        distance += w * abs(a - b);
    }
    Ok(MetricValue {
        distance,
        truncation_bound: powi(0.5, n as u32 - 1),
        quadrature_bound: 2.0 * (mu.position_error + nu.position_error),
    })
}

#[derive(Debug, Clone, PartialEq)]
pub enum MeasureKind {
    /// Independent symbols with probabilities `p`.
    Bernoulli { p: Vec<f64> },
    /// Stationary Markov chain of the given order. `transition` is row-major
    /// with `m^order` rows (states are blocks of the last `order` symbols,
    /// oldest symbol most significant) and `m` columns.
    Markov { order: usize, transition: Vec<f64>, stationary: Vec<f64> },
    /// Point mass at the fixed point of `branch`.
    DiracFixed { branch: usize },
    /// Independent concatenation of blocks of length `block` drawn with the
    /// given weights; as a `T`-invariant measure it stands for the average of
    /// its first `block` shifts.
    BlockBernoulli { block: usize, words: Vec<Vec<u8>>, weights: Vec<f64> },
}

#[derive(Debug, Clone, PartialEq)]
pub struct MeasureSpec {
    kind: MeasureKind,
    alphabet: usize,
    entropy: f64,
}

fn check_probabilities(p: &[f64], what: &str) -> Result<()> {
    if p.iter().any(|&x| !(x >= 0.0) || !x.is_finite()) {
        return Err(Error::InvalidMeasure(format!("{what}: entries must be finite and non-negative")));
    }
    let s: f64 = p.iter().sum();
    if abs(s - 1.0) > PROB_TOL {
        return Err(Error::InvalidMeasure(format!("{what}: entries sum to {s}, not 1")));
    }
    Ok(())
}

impl MeasureSpec {
    pub fn bernoulli(p: Vec<f64>) -> Result<Self> {
        if p.is_empty() || p.len() > 255 {
            return Err(Error::InvalidMeasure("Bernoulli vector must have 1..=255 entries".into()));
        }
        check_probabilities(&p, "Bernoulli vector")?;
        let entropy = p.iter().map(|&x| neg_xlogx(x)).sum();
        let alphabet = p.len();
        Ok(MeasureSpec { kind: MeasureKind::Bernoulli { p }, alphabet, entropy })
    }

    /// First-order Markov measure from its transition rows.
    pub fn markov(rows: Vec<Vec<f64>>) -> Result<Self> {
        let m = rows.len();
        if m == 0 || rows.iter().any(|r| r.len() != m) {
            return Err(Error::InvalidMeasure("transition matrix must be square".into()));
        }
        MeasureSpec::markov_order(1, m, rows.concat())
    }

    /// Markov measure of order `order ≥ 1` with a row-major transition table
    /// of `m^order` rows.
    pub fn markov_order(order: usize, alphabet: usize, transition: Vec<f64>) -> Result<Self> {
        if order == 0 || alphabet == 0 || alphabet > 255 {
            return Err(Error::InvalidMeasure("Markov order and alphabet must be positive".into()));
        }
        let states = checked_pow(alphabet, order);
        if states > 1 << 16 {
            return Err(Error::budget("Markov states", states, 1 << 16));
        }
        let states = states as usize;
        if transition.len() != states * alphabet {
            return Err(Error::InvalidMeasure(format!(
                "expected {} transition entries, got {}",
                states * alphabet,
                transition.len()
            )));
        }
        for s in 0..states {
            check_probabilities(&transition[s * alphabet..(s + 1) * alphabet], "transition row")?;
        }
        let stationary = stationary_vector(order, alphabet, &transition)?;
        let mut entropy = 0.0;
        for s in 0..states {
            let row: f64 = transition[s * alphabet..(s + 1) * alphabet].iter().map(|&x| neg_xlogx(x)).sum();
            entropy += stationary[s] * row;
        }
        Ok(MeasureSpec { kind: MeasureKind::Markov { order, transition, stationary }, alphabet, entropy })
    }

    pub fn dirac_fixed(branch: usize, alphabet: usize) -> Result<Self> {
        if branch >= alphabet {
            return Err(Error::InvalidMeasure(format!("branch {branch} outside alphabet")));
        }
        Ok(MeasureSpec { kind: MeasureKind::DiracFixed { branch }, alphabet, entropy: 0.0 })
    }

    /// Product of independent copies of a measure on `n`-blocks.
    pub fn block_bernoulli(words: Vec<Vec<u8>>, weights: Vec<f64>, alphabet: usize) -> Result<Self> {
        if words.is_empty() {
            return Err(Error::EmptySelection { n_min: 0, n_max: 0 });
        }
        if words.len() != weights.len() {
            return Err(Error::InvalidMeasure("one weight per word".into()));
        }
        let block = words[0].len();
        if block == 0 || words.iter().any(|w| w.len() != block) {
            return Err(Error::InvalidMeasure("all words must share one positive length".into()));
        }
        if words.iter().flatten().any(|&s| s as usize >= alphabet) {
            return Err(Error::InvalidMeasure("word symbol outside alphabet".into()));
        }
        if weights.iter().any(|&w| !(w > 0.0)) {
            return Err(Error::InvalidMeasure("block weights must be positive".into()));
        }
        check_probabilities(&weights, "block weights")?;
        let entropy = shannon(&weights) / block as f64;
        Ok(MeasureSpec { kind: MeasureKind::BlockBernoulli { block, words, weights }, alphabet, entropy })
    }

    pub fn kind(&self) -> &MeasureKind {
        &self.kind
    }

    pub fn alphabet(&self) -> usize {
        self.alphabet
    }

    /// Entropy per shift step, in nats.
    pub fn entropy(&self) -> f64 {
        self.entropy
    }

    /// Shannon entropy of the block distribution (not divided by the block
    /// length); zero for everything but block-Bernoulli measures.
    pub fn block_entropy(&self) -> f64 {
        match &self.kind {
            MeasureKind::BlockBernoulli { weights, .. } => shannon(weights),
            _ => 0.0,
        }
    }

    pub fn check_map(&self, map: &IntervalMap) -> Result<()> {
        if self.alphabet != map.alphabet() {
            return Err(Error::InvalidMeasure(format!(
                "measure has {} symbols, map has {} branches",
                self.alphabet,
                map.alphabet()
            )));
        }
        Ok(())
    }

    /// `log μ[w|_n]` for `n = 1..=len`, shift-invariant cylinder masses.
    /// Block-Bernoulli measures are read with blocks aligned at position 0.
    pub fn log_prefix_probabilities(&self, w: &[u8]) -> Vec<f64> {
        let mut out = Vec::with_capacity(w.len());
        match &self.kind {
            MeasureKind::Bernoulli { p } => {
                let mut acc = 0.0;
                for &s in w {
                    acc += ln(p[s as usize]);
                    out.push(acc);
                }
            }
            MeasureKind::DiracFixed { branch } => {
                let mut alive = true;
                for &s in w {
                    alive &= s as usize == *branch;
                    out.push(if alive { 0.0 } else { f64::NEG_INFINITY });
                }
            }
            MeasureKind::Markov { order, transition, stationary } => {
                let m = self.alphabet;
                let r = *order;
                for n in 1..=w.len().min(r) {
                    // marginal of the first n symbols of a stationary block
                    let head = w[..n].iter().fold(0usize, |acc, &s| acc * m + s as usize);
                    let span = checked_pow(m, r - n) as usize;
                    let mass: f64 = stationary[head * span..(head + 1) * span].iter().sum();
                    out.push(ln(mass));
                }
                if w.len() > r {
                    let states = stationary.len();
                    let mut state = w[..r].iter().fold(0usize, |acc, &s| acc * m + s as usize);
                    let mut acc = *out.last().unwrap();
                    for &s in &w[r..] {
                        acc += ln(transition[state * m + s as usize]);
                        out.push(acc);
                        state = (state * m + s as usize) % states;
                    }
                }
            }
            MeasureKind::BlockBernoulli { block, words, weights } => {
                let mut acc = 0.0;
                let mut t = 0;
                while t < w.len() {
                    let end = (t + block).min(w.len());
                    for e in t + 1..=end {
                        let part = &w[t..e];
                        let mass: f64 = words
                            .iter()
                            .zip(weights)
                            .filter(|(u, _)| u.starts_with(part))
                            .map(|(_, &q)| q)
                            .sum();
                        out.push(acc + ln(mass));
                    }
                    acc = *out.last().unwrap();
                    t = end;
                }
            }
        }
        out
    }

    pub fn log_word_probability(&self, w: &[u8]) -> f64 {
        if w.is_empty() {
            return 0.0;
        }
        *self.log_prefix_probabilities(w).last().unwrap()
    }

    /// Draws a word of length `len`.
    pub fn sample_word<R: Rng + ?Sized>(&self, rng: &mut R, len: usize) -> Vec<u8> {
        let mut out = Vec::with_capacity(len);
        match &self.kind {
            MeasureKind::Bernoulli { p } => {
                for _ in 0..len {
                    out.push(categorical(rng, p) as u8);
                }
            }
            MeasureKind::DiracFixed { branch } => out.resize(len, *branch as u8),
            MeasureKind::Markov { order, transition, stationary } => {
                let m = self.alphabet;
                let states = stationary.len();
                let mut state = categorical(rng, stationary);
                let mut head = vec![0u8; *order];
                let mut s = state;
                for t in (0..*order).rev() {
                    head[t] = (s % m) as u8;
                    s /= m;
                }
                out.extend(head.iter().take(len));
                while out.len() < len {
                    let a = categorical(rng, &transition[state * m..(state + 1) * m]);
                    out.push(a as u8);
                    state = (state * m + a) % states;
                }
            }
            MeasureKind::BlockBernoulli { words, weights, .. } => {
                while out.len() < len {
                    let j = categorical(rng, weights);
                    let room = len - out.len();
                    out.extend(words[j].iter().take(room));
                }
            }
        }
        out
    }
}

fn categorical<R: Rng + ?Sized>(rng: &mut R, p: &[f64]) -> usize {
    let u: f64 = rng.gen();
    let mut acc = 0.0;
    let mut last = 0;
    for (i, &q) in p.iter().enumerate() {
        if q > 0.0 {
            last = i;
        }
        acc += q;
        if u < acc {
            return i;
        }
    }
    last
}

/// Stationary distribution over states of a Markov chain of given order.
fn stationary_vector(order: usize, m: usize, transition: &[f64]) -> Result<Vec<f64>> {
    let states = checked_pow(m, order) as usize;
    let next = |s: usize, a: usize| (s * m + a) % states;
    // Solve π (P − I) = 0 with Σ π = 1 replacing the last equation.
    let mut a = vec![0.0; states * states];
    for s in 0..states {
        for x in 0..m {
            let t = next(s, x);
            // column t of P^T row s: equation index t, variable s
            a[t * states + s] += transition[s * m + x];
        }
        a[s * states + s] -= 1.0;
    }
    for s in 0..states {
        a[(states - 1) * states + s] = 1.0;
    }
    let mut b = vec![0.0; states];
    b[states - 1] = 1.0;
    let mut pi = match solve_dense(a, b, states) {
        Some(pi) => pi,
        None => power_iteration(states, m, transition),
    };
    for x in pi.iter_mut() {
        if *x < 0.0 {
            if *x < -STATIONARY_TOL {
                return Err(Error::InvalidMeasure("stationary vector has negative entries".into()));
            }
            *x = 0.0;
        }
    }
    let s: f64 = pi.iter().sum();
    for x in pi.iter_mut() {
        *x /= s;
    }
    // πP = π check
    let mut img = vec![0.0; states];
    for s in 0..states {
        for x in 0..m {
            img[next(s, x)] += pi[s] * transition[s * m + x];
        }
    }
    let err = img.iter().zip(&pi).map(|(a, b)| abs(a - b)).fold(0.0, f64::max);
    if err > STATIONARY_TOL {
        return Err(Error::InvalidMeasure(format!("no unique stationary vector (residual {err:e})")));
    }
    Ok(pi)
}

fn power_iteration(states: usize, m: usize, transition: &[f64]) -> Vec<f64> {
    let mut pi = vec![1.0 / states as f64; states];
    for _ in 0..100_000 {
        let mut img = vec![0.0; states];
        for s in 0..states {
            for x in 0..m {
                img[(s * m + x) % states] += pi[s] * transition[s * m + x];
            }
        }
        // lazy step avoids oscillation on periodic chains
        for (p, q) in pi.iter_mut().zip(&img) {
            *p = 0.5 * (*p + q);
        }
    }
    pi
}

/// Affine coefficients `(α, β)` of the inverse branches `S_i(y) = α y + β`.
fn affine_inverses(map: &IntervalMap) -> Option<Vec<(f64, f64)>> {
    map.branches()
        .iter()
        .map(|b| match b.kind {
            BranchKind::Linear { slope, offset } => Some((1.0 / slope, -offset / slope)),
            _ => None,
        })
        .collect()
}

/// `λ(μ) = ∫ log|T'| dμ`.
pub fn lyapunov(spec: &MeasureSpec, map: &IntervalMap, depth: usize) -> Result<f64> {
    spec.check_map(map)?;
    if let MeasureKind::DiracFixed { branch } = spec.kind {
        let fp = map.fixed_point(branch);
        return Ok(if fp.parabolic { 0.0 } else { map.branch(branch).log_derivative(fp.x) });
    }
    if map.is_affine() {
        let logs: Vec<f64> = map.branches().iter().map(|b| b.log_derivative(0.0)).collect();
        return Ok(match &spec.kind {
            MeasureKind::Bernoulli { p } => p.iter().zip(&logs).map(|(p, l)| p * l).sum(),
            MeasureKind::Markov { order, stationary, .. } => {
                // marginal law of one symbol is the law of the first symbol of a block
                let m = spec.alphabet;
                let span = checked_pow(m, order - 1) as usize;
                (0..m).map(|a| stationary[a * span..(a + 1) * span].iter().sum::<f64>() * logs[a]).sum()
            }
            MeasureKind::BlockBernoulli { block, words, weights } => {
                let per: f64 = words
                    .iter()
                    .zip(weights)
                    .map(|(w, q)| q * w.iter().map(|&s| logs[s as usize]).sum::<f64>())
                    .sum();
                per / *block as f64
            }
            MeasureKind::DiracFixed { .. } => unreachable!(),
        });
    }
    if let MeasureKind::BlockBernoulli { block, words, weights } = &spec.kind {
        let mut total = 0.0;
        for (w, q) in words.iter().zip(weights) {
            let (_, sum) = left_lyapunov_sum(map, w)?;
            total += q * sum;
        }
        return Ok(total / *block as f64);
    }
    let table = QuadratureTable::build(map, depth, 1, &crate::exec::Sequential)?;
    table.lyapunov(spec)
}

/// `S_n g` at the left endpoint of the cylinder of `w`.
fn left_lyapunov_sum(map: &IntervalMap, w: &[u8]) -> Result<(usize, f64)> {
    let mut u = 0.0;
    let mut v = 1.0;
    let mut su = 0.0;
    let mut sv = 0.0;
    for &a in w.iter().rev() {
        let b = map.branch(a as usize);
        u = b.inverse(u, crate::map::DEFAULT_TOL)?;
        v = b.inverse(v, crate::map::DEFAULT_TOL)?;
        su += b.log_derivative(u);
        sv += b.log_derivative(v);
    }
    Ok(if u <= v { (0, su) } else { (1, sv) })
}

/// First `family.count()` moments of the push-forward of `spec`.
pub fn moments(spec: &MeasureSpec, map: &IntervalMap, family: MomentFamily, depth: usize) -> Result<Moments> {
    spec.check_map(map)?;
    let n = family.count();
    if let MeasureKind::DiracFixed { branch } = spec.kind {
        return Ok(Moments::dirac(map.fixed_point(branch).x, family));
    }
    if let Some(aff) = affine_inverses(map) {
        return Ok(Moments::exact(affine_moments(spec, &aff, n)));
    }
    if let MeasureKind::BlockBernoulli { .. } = spec.kind {
        return block_moments_nonlinear(spec, map, n);
    }
    let table = QuadratureTable::build(map, depth, n, &crate::exec::Sequential)?;
    table.moments(spec, n)
}

fn affine_moments(spec: &MeasureSpec, aff: &[(f64, f64)], n: usize) -> Vec<f64> {
    let binom = binomials(n);
    // Σ_{i<k} C(k,i) α^i β^{k-i} M_i
    let lower = |k: usize, a: f64, b: f64, mv: &dyn Fn(usize) -> f64| -> f64 {
        let mut s = 0.0;
        for i in 0..k {
            s += binom[k][i] * powi(a, i as u32) * powi(b, (k - i) as u32) * mv(i);
        }
        s
    };
    match &spec.kind {
        MeasureKind::Bernoulli { p } => {
            let mut mom = vec![1.0; n + 1];
            for k in 1..=n {
                let mut rhs = 0.0;
                let mut diag = 1.0;
                for (i, &(a, b)) in aff.iter().enumerate() {
                    rhs += p[i] * lower(k, a, b, &|j| mom[j]);
                    diag -= p[i] * powi(a, k as u32);
                }
                mom[k] = rhs / diag;
            }
            mom[1..].to_vec()
        }
        MeasureKind::Markov { order, transition, stationary } => {
            let m = spec.alphabet;
            let states = stationary.len();
            let lead = checked_pow(m, order - 1) as usize;
            let mut per: Vec<Vec<f64>> = vec![vec![1.0; states]];
            for k in 1..=n {
                let mut mat = vec![0.0; states * states];
                let mut rhs = vec![0.0; states];
                for s in 0..states {
                    let (a, b) = aff[s / lead];
                    mat[s * states + s] += 1.0;
                    for x in 0..m {
                        let q = transition[s * m + x];
                        if q == 0.0 {
                            continue;
                        }
                        let t = (s * m + x) % states;
                        mat[s * states + t] -= q * powi(a, k as u32);
                        rhs[s] += q * lower(k, a, b, &|j| per[j][t]);
                    }
                }
                let sol = solve_dense(mat, rhs, states).expect("contraction keeps the system regular");
                per.push(sol);
            }
            (1..=n).map(|k| per[k].iter().zip(stationary).map(|(x, p)| x * p).sum()).collect()
        }
        MeasureKind::BlockBernoulli { block, words, weights } => {
            // composite maps of every suffix of every word
            let suffixes: Vec<Vec<(f64, f64)>> = words
                .iter()
                .map(|w| {
                    let mut out = vec![(1.0, 0.0); w.len()];
                    let (mut ca, mut cb) = (1.0, 0.0);
                    for t in (0..w.len()).rev() {
                        let (a, b) = aff[w[t] as usize];
                        ca *= a;
                        cb = a * cb + b;
                        out[t] = (ca, cb);
                    }
                    out
                })
                .collect();
            let mut mom = vec![1.0; n + 1];
            for k in 1..=n {
                let mut rhs = 0.0;
                let mut diag = 1.0;
                for (sfx, &q) in suffixes.iter().zip(weights) {
                    let (a, b) = sfx[0];
                    rhs += q * lower(k, a, b, &|j| mom[j]);
                    diag -= q * powi(a, k as u32);
                }
                mom[k] = rhs / diag;
            }
            let mut out = vec![0.0; n];
            for (sfx, &q) in suffixes.iter().zip(weights) {
                for &(a, b) in sfx {
                    for k in 1..=n {
                        out[k - 1] += q * (lower(k, a, b, &|j| mom[j]) + powi(a, k as u32) * mom[k]);
                    }
                }
            }
            for v in out.iter_mut() {
                *v /= *block as f64;
            }
            out
        }
        MeasureKind::DiracFixed { .. } => unreachable!(),
    }
}

const BLOCK_QUADRATURE_LIMIT: usize = 4096;

fn block_moments_nonlinear(spec: &MeasureSpec, map: &IntervalMap, n: usize) -> Result<Moments> {
    let MeasureKind::BlockBernoulli { block, words, weights } = &spec.kind else {
        unreachable!()
    };
    if words.len() > BLOCK_QUADRATURE_LIMIT {
        return Err(Error::budget("block quadrature words", words.len() as u128, BLOCK_QUADRATURE_LIMIT as u128));
    }
    // The tail π(σ^n ω) is distributed like the block measure again; use
    // the centres of the block cylinders as its quadrature nodes.
    let mut tails = Vec::with_capacity(words.len());
    for w in words {
        let orbit = crate::symbolic::coded_orbit(map, w, 0.5)?;
        tails.push(orbit[0]);
    }
    let mut out = vec![0.0; n];
    let mut err = 0.0;
    for (w, &q) in words.iter().zip(weights) {
        for (&tail, &qt) in tails.iter().zip(weights) {
            let mut z = tail;
            let mut lo = 0.0;
            let mut hi = 1.0;
            for t in (0..w.len()).rev() {
                let b = map.branch(w[t] as usize);
                z = b.inverse(z, crate::map::DEFAULT_TOL)?;
                lo = b.inverse(lo, crate::map::DEFAULT_TOL)?;
                hi = b.inverse(hi, crate::map::DEFAULT_TOL)?;
                let mut p = 1.0;
                for slot in out.iter_mut() {
                    p *= z;
                    *slot += q * qt * p;
                }
                err += q * qt * abs(hi - lo);
            }
        }
    }
    let bl = *block as f64;
    for v in out.iter_mut() {
        *v /= bl;
    }
    Ok(Moments { values: out, position_error: err / bl })
}

/// Depth-`d` cylinder quadrature nodes for a nonlinear map, with per-class
/// aggregates so Bernoulli measures evaluate in time independent of `m^d`.
#[derive(Debug, Clone)]
pub struct QuadratureTable {
    depth: usize,
    alphabet: usize,
    moments: usize,
    words: Vec<u8>,
    center: Vec<f64>,
    half_diam: Vec<f64>,
    g_left: Vec<f64>,
    classes: Vec<ClassAggregate>,
}

#[derive(Debug, Clone)]
struct ClassAggregate {
    counts: Vec<u32>,
    powers: Vec<f64>,
    g_left: f64,
    half_diam: f64,
}

impl QuadratureTable {
    pub fn build<E: Executor>(map: &IntervalMap, depth: usize, moments: usize, exec: &E) -> Result<Self> {
        let en = CylinderEnumerator::new(map, depth, &[], EnumConfig::default())?;
        let m = map.alphabet();
        struct Acc {
            words: Vec<u8>,
            center: Vec<f64>,
            half: Vec<f64>,
            g: Vec<f64>,
        }
        let acc = en.fold(
            exec,
            || Acc { words: Vec::new(), center: Vec::new(), half: Vec::new(), g: Vec::new() },
            |a, v| {
                a.words.extend_from_slice(v.word);
                let (lo, hi) = (v.lo(), v.hi());
                a.center.push(0.5 * (lo + hi));
                a.half.push(0.5 * v.diam);
                a.g.push(map.branch(v.word[0] as usize).log_derivative(lo));
            },
            |a, b| {
                a.words.extend(b.words);
                a.center.extend(b.center);
                a.half.extend(b.half);
                a.g.extend(b.g);
            },
        )?;
        let mut index: BTreeMap<Vec<u32>, usize> = BTreeMap::new();
        let mut classes: Vec<ClassAggregate> = Vec::new();
        for (c, w) in acc.words.chunks(depth).enumerate() {
            let mut counts = vec![0u32; m];
            for &s in w {
                counts[s as usize] += 1;
            }
            let id = *index.entry(counts.clone()).or_insert_with(|| {
                classes.push(ClassAggregate { counts, powers: vec![0.0; moments], g_left: 0.0, half_diam: 0.0 });
                classes.len() - 1
            });
            let cls = &mut classes[id];
            let x = acc.center[c];
            let mut p = 1.0;
            for slot in cls.powers.iter_mut() {
                p *= x;
                *slot += p;
            }
            cls.g_left += acc.g[c];
            cls.half_diam += acc.half[c];
        }
        Ok(QuadratureTable {
            depth,
            alphabet: m,
            moments,
            words: acc.words,
            center: acc.center,
            half_diam: acc.half,
            g_left: acc.g,
            classes,
        })
    }

    pub fn depth(&self) -> usize {
        self.depth
    }

    fn bernoulli_weight(p: &[f64], counts: &[u32]) -> f64 {
        p.iter().zip(counts).map(|(&q, &c)| powi(q, c)).product()
    }

    fn word_weights(&self, spec: &MeasureSpec) -> Vec<f64> {
        self.words.chunks(self.depth).map(|w| crate::math::exp(spec.log_word_probability(w))).collect()
    }

    pub fn moments(&self, spec: &MeasureSpec, n: usize) -> Result<Moments> {
        if spec.alphabet != self.alphabet {
            return Err(Error::InvalidMeasure("alphabet mismatch".into()));
        }
        if n > self.moments {
            return Err(Error::InvalidInput(format!("table holds {} moments, asked for {n}", self.moments)));
        }
        match &spec.kind {
            MeasureKind::Bernoulli { p } => {
                let mut v = vec![0.0; n];
                let mut err = 0.0;
                for cls in &self.classes {
                    let w = Self::bernoulli_weight(p, &cls.counts);
                    if w == 0.0 {
                        continue;
                    }
                    for (slot, x) in v.iter_mut().zip(&cls.powers) {
                        *slot += w * x;
                    }
                    err += w * cls.half_diam;
                }
                Ok(Moments { values: v, position_error: err })
            }
            MeasureKind::Markov { .. } => {
                let weights = self.word_weights(spec);
                let mut v = vec![0.0; n];
                let mut err = 0.0;
                for ((&w, &x), &h) in weights.iter().zip(&self.center).zip(&self.half_diam) {
                    if w == 0.0 {
                        continue;
                    }
                    let mut p = 1.0;
                    for slot in v.iter_mut() {
                        p *= x;
                        *slot += w * p;
                    }
                    err += w * h;
                }
                Ok(Moments { values: v, position_error: err })
            }
            _ => Err(Error::InvalidMeasure("quadrature tables serve Bernoulli and Markov measures".into())),
        }
    }

    pub fn lyapunov(&self, spec: &MeasureSpec) -> Result<f64> {
        match &spec.kind {
            MeasureKind::Bernoulli { p } => {
                Ok(self.classes.iter().map(|c| Self::bernoulli_weight(p, &c.counts) * c.g_left).sum())
            }
            MeasureKind::Markov { .. } => {
                let weights = self.word_weights(spec);
                Ok(weights.iter().zip(&self.g_left).map(|(w, g)| w * g).sum())
            }
            _ => Err(Error::InvalidMeasure("quadrature tables serve Bernoulli and Markov measures".into())),
        }
    }
}

/// Precomputed moments and Lyapunov exponents for repeated evaluation.
#[derive(Debug, Clone)]
pub enum Evaluator {
    Affine { aff: Vec<(f64, f64)>, map: IntervalMap },
    Table { table: QuadratureTable, map: IntervalMap },
}

impl Evaluator {
    pub fn new<E: Executor>(map: &IntervalMap, family: MomentFamily, depth: usize, exec: &E) -> Result<Self> {
        Ok(match affine_inverses(map) {
            Some(aff) => Evaluator::Affine { aff, map: map.clone() },
            None => Evaluator::Table {
                table: QuadratureTable::build(map, depth, family.count(), exec)?,
                map: map.clone(),
            },
        })
    }

    pub fn map(&self) -> &IntervalMap {
        match self {
            Evaluator::Affine { map, .. } | Evaluator::Table { map, .. } => map,
        }
    }

    pub fn moments(&self, spec: &MeasureSpec, family: MomentFamily) -> Result<Moments> {
        match self {
            Evaluator::Affine { aff, map, .. } => match spec.kind {
                MeasureKind::DiracFixed { branch } => Ok(Moments::dirac(map.fixed_point(branch).x, family)),
                _ => Ok(Moments::exact(affine_moments(spec, aff, family.count()))),
            },
            Evaluator::Table { table, map } => match spec.kind {
                MeasureKind::DiracFixed { branch } => Ok(Moments::dirac(map.fixed_point(branch).x, family)),
                MeasureKind::BlockBernoulli { .. } => block_moments_nonlinear(spec, map, family.count()),
                _ => table.moments(spec, family.count()),
            },
        }
    }

    pub fn lyapunov(&self, spec: &MeasureSpec) -> Result<f64> {
        match self {
            Evaluator::Affine { map, .. } => lyapunov(spec, map, 1),
            Evaluator::Table { table, map } => match spec.kind {
                MeasureKind::Bernoulli { .. } | MeasureKind::Markov { .. } => table.lyapunov(spec),
                _ => lyapunov(spec, map, table.depth()),
            },
        }
    }
}

/// Per-observable membership test `|A_n f_i − ∫ f_i dm| < eps`, `i ≤ k`, for
/// the orbit points `orbit`.
pub fn level_constraint_check(orbit: &[f64], m: &Moments, k: usize, eps: f64) -> Result<Vec<bool>> {
    if orbit.is_empty() {
        return Err(Error::InvalidInput("empty orbit".into()));
    }
    if k > m.count() {
        return Err(Error::InvalidInput(format!("k = {k} exceeds the {} available moments", m.count())));
    }
    let n = orbit.len() as f64;
    let mut sums = vec![0.0; k];
    for &x in orbit {
        let mut p = 1.0;
        for s in sums.iter_mut() {
            p *= x;
            *s += p;
        }
    }
    Ok(sums.iter().zip(&m.values).map(|(s, target)| abs(s / n - target) < eps).collect())
}

/// Vertices of the parabolic simplex: the Dirac masses at parabolic fixed
/// points.
#[derive(Debug, Clone, PartialEq)]
pub struct ParabolicSimplex {
    pub vertices: Vec<(usize, f64)>,
}

impl ParabolicSimplex {
    pub fn of_map(map: &IntervalMap) -> Self {
        ParabolicSimplex {
            vertices: map.fixed_points().iter().filter(|f| f.parabolic).map(|f| (f.branch, f.x)).collect(),
        }
    }

    pub fn dimension(&self) -> isize {
        self.vertices.len() as isize - 1
    }

    pub fn vertex_specs(&self, alphabet: usize) -> Result<Vec<MeasureSpec>> {
        self.vertices.iter().map(|&(b, _)| MeasureSpec::dirac_fixed(b, alphabet)).collect()
    }
}

#[derive(Debug, Clone, PartialEq)]
pub struct Separation {
    /// Grid minimum of `d(m, Σ λ_i δ_{p_i})`.
    pub gamma: f64,
    /// Barycentric weights attaining it.
    pub weights: Vec<f64>,
    /// A measure sharing the first `k` moments with `m` is within `2^{-k}`
    /// of `m`; `gamma > 2^{-k}` therefore certifies separation at this `k`.
    pub certified: bool,
}

pub fn separation_gamma(
    m: &Moments,
    lyapunov_of_m: f64,
    k: usize,
    simplex: &ParabolicSimplex,
    resolution: f64,
) -> Result<Separation> {
    if !(lyapunov_of_m > 0.0) {
        return Err(Error::InvalidInput("separation needs lambda(m) > 0".into()));
    }
    if simplex.vertices.is_empty() {
        return Err(Error::Degenerate("map has no parabolic fixed point".into()));
    }
    if !(resolution > 0.0 && resolution <= 1.0) {
        return Err(Error::InvalidInput("resolution must lie in (0, 1]".into()));
    }
    let family = MomentFamily { count: m.count() };
    let verts: Vec<Moments> = simplex.vertices.iter().map(|&(_, x)| Moments::dirac(x, family)).collect();
    let parts = verts.len();
    let steps = crate::math::round(1.0 / resolution) as usize;
    // number of grid points C(steps + parts - 1, parts - 1)
    let mut count: u128 = 1;
    for j in 1..parts as u128 {
        count = count * (steps as u128 + j) / j;
    }
    if count > 50_000_000 {
        return Err(Error::budget("simplex grid points", count, 50_000_000));
    }
    let mut best = f64::INFINITY;
    let mut best_w = vec![0.0; parts];
    let mut comp = vec![0usize; parts];
    comp[parts - 1] = steps;
    loop {
        let w: Vec<f64> = comp.iter().map(|&c| c as f64 / steps as f64).collect();
        let mut d = 0.0;
        let mut scale = 1.0;
        for n in 0..m.count() {
            scale *= 0.5;
            let mix: f64 = w.iter().zip(&verts).map(|(a, v)| a * v.values[n]).sum();
            d += scale * abs(m.values[n] - mix);
        }
        if d < best {
            best = d;
            best_w = w;
        }
        if !next_composition(&mut comp) {
            break;
        }
    }
    Ok(Separation { gamma: best, weights: best_w, certified: best > powi(0.5, k as u32) })
}

/// Steps through compositions of a fixed total in lexicographic order.
pub(crate) fn next_composition(c: &mut [usize]) -> bool {
    let n = c.len();
    if n < 2 {
        return false;
    }
    // find rightmost position (excluding last) that can be increased
    let total_tail: usize = c[n - 1];
    if total_tail > 0 {
        // move one unit from the last part to the part before it
        c[n - 2] += 1;
        c[n - 1] -= 1;
        return true;
    }
    // last part empty: carry
    let mut i = n - 2;
    loop {
        if i == 0 {
            return false;
        }
        if c[i] > 0 {
            let moved = c[i];
            c[i] = 0;
            c[i - 1] += 1;
            c[n - 1] = moved - 1;
            return true;
        }
        i -= 1;
    }
}

#[cfg(test)]
mod tests {
    use super::*;
    use crate::exec::Sequential;

    fn fam() -> MomentFamily {
        MomentFamily::default()
    }

    #[test]
    fn entropy_examples() {
        let b = MeasureSpec::bernoulli(vec![0.5, 0.5]).unwrap();
        assert!(abs(b.entropy() - core::f64::consts::LN_2) < 1e-15);
        let d = MeasureSpec::dirac_fixed(0, 2).unwrap();
        assert_eq!(d.entropy(), 0.0);
        let b = MeasureSpec::bernoulli(vec![0.9, 0.1]).unwrap();
        let oracle = -0.9 * ln(0.9) - 0.1 * ln(0.1);
        assert!(abs(b.entropy() - oracle) < 1e-15);
        assert!(abs(b.entropy() - 0.3250830) < 1e-7);
    }

    #[test]
    fn lyapunov_examples() {
        let mt = IntervalMap::middle_thirds();
        for p in [0.1, 0.5, 0.77] {
            let b = MeasureSpec::bernoulli(vec![p, 1.0 - p]).unwrap();
            assert!(abs(lyapunov(&b, &mt, 8).unwrap() - ln(3.0)) < 1e-15);
        }
        let m = IntervalMap::manneville(1.0).unwrap();
        assert_eq!(lyapunov(&MeasureSpec::dirac_fixed(0, 2).unwrap(), &m, 8).unwrap(), 0.0);
        let c = IntervalMap::cantor24();
        let b = MeasureSpec::bernoulli(vec![0.618034, 0.381966]).unwrap();
        let oracle = 0.618034 * ln(2.0) + 0.381966 * ln(4.0);
        assert!(abs(lyapunov(&b, &c, 8).unwrap() - oracle) < 1e-15);
        assert!(abs(oracle - 0.9579058) < 1e-6);
    }

    #[test]
    fn metric_examples() {
        let f = fam();
        let leb = Moments::lebesgue(f);
        assert_eq!(metric_d(&leb, &leb).unwrap().distance, 0.0);
        let d01 = metric_d(&Moments::dirac(0.0, f), &Moments::dirac(1.0, f)).unwrap();
        assert!(d01.distance >= 1.0 - f.tail_bound() && d01.distance <= 1.0);
        let oracle: f64 = (1..=32).map(|n| powi(0.5, n) / (n as f64 + 1.0)).sum();
        let d = metric_d(&leb, &Moments::dirac(0.0, f)).unwrap();
        assert!(abs(d.distance - oracle) < 1e-15);
        assert!(abs(d.distance - (2.0 * ln(2.0) - 1.0)) < 1e-6);
    }

    #[test]
    fn doubling_bernoulli_half_is_lebesgue() {
        let t = IntervalMap::doubling();
        let b = MeasureSpec::bernoulli(vec![0.5, 0.5]).unwrap();
        let mo = moments(&b, &t, fam(), 16).unwrap();
        for (n, v) in mo.values.iter().enumerate() {
            assert!(abs(v - 1.0 / (n as f64 + 2.0)) < 1e-14);
        }
    }

    #[test]
    fn affine_moments_match_brute_force_quadrature() {
        let t = IntervalMap::cantor24();
        let b = MeasureSpec::bernoulli(vec![0.3, 0.7]).unwrap();
        let exact = moments(&b, &t, fam(), 16).unwrap();
        // independent: enumerate depth-18 cylinders, weight by word probability
        let mut acc = vec![0.0; 32];
        crate::symbolic::enumerate_cylinders(&t, 18, EnumConfig::default(), |c| {
            let w = crate::math::exp(b.log_word_probability(c.word.symbols()));
            let x = 0.5 * (c.lo + c.hi);
            for (k, slot) in acc.iter_mut().enumerate() {
                *slot += w * powi(x, k as u32 + 1);
            }
        })
        .unwrap();
        for k in 0..32 {
            assert!(abs(acc[k] - exact.values[k]) < 1e-5 * (k as f64 + 1.0));
        }
    }

    #[test]
    fn markov_affine_moments_match_quadrature() {
        let t = IntervalMap::doubling();
        let mk = MeasureSpec::markov(vec![vec![0.9, 0.1], vec![0.4, 0.6]]).unwrap();
        let exact = moments(&mk, &t, fam(), 16).unwrap();
        let mut acc = vec![0.0; 8];
        crate::symbolic::enumerate_cylinders(&t, 16, EnumConfig::default(), |c| {
            let w = crate::math::exp(mk.log_word_probability(c.word.symbols()));
            let x = 0.5 * (c.lo + c.hi);
            for (k, slot) in acc.iter_mut().enumerate() {
                *slot += w * powi(x, k as u32 + 1);
            }
        })
        .unwrap();
        for k in 0..8 {
            assert!(abs(acc[k] - exact.values[k]) < (k as f64 + 1.0) * powi(0.5, 17));
        }
        // stationary (0.8, 0.2): P(x < 1/2) = 0.8
        if let MeasureKind::Markov { stationary, .. } = mk.kind() {
            assert!(abs(stationary[0] - 0.8) < 1e-14);
        }
        let h = 0.8 * (neg_xlogx(0.9) + neg_xlogx(0.1)) + 0.2 * (neg_xlogx(0.4) + neg_xlogx(0.6));
        assert!(abs(mk.entropy() - h) < 1e-15);
    }

    #[test]
    fn second_order_markov_matches_first_order_when_memoryless() {
        let t = IntervalMap::cantor24();
        // order-2 table whose rows ignore the older symbol
        let rows = vec![0.7, 0.3, 0.2, 0.8, 0.7, 0.3, 0.2, 0.8];
        let m2 = MeasureSpec::markov_order(2, 2, rows).unwrap();
        let m1 = MeasureSpec::markov(vec![vec![0.7, 0.3], vec![0.2, 0.8]]).unwrap();
        let a = moments(&m2, &t, fam(), 16).unwrap();
        let b = moments(&m1, &t, fam(), 16).unwrap();
        for (x, y) in a.values.iter().zip(&b.values) {
            assert!(abs(x - y) < 1e-14);
        }
        assert!(abs(m2.entropy() - m1.entropy()) < 1e-14);
        assert!(abs(lyapunov(&m2, &t, 1).unwrap() - lyapunov(&m1, &t, 1).unwrap()) < 1e-14);
    }

    #[test]
    fn nonlinear_quadrature_converges() {
        let m = IntervalMap::manneville(1.0).unwrap();
        let b = MeasureSpec::bernoulli(vec![0.5, 0.5]).unwrap();
        let coarse = moments(&b, &m, fam(), 12).unwrap();
        let fine = moments(&b, &m, fam(), 16).unwrap();
        assert!(fine.position_error < coarse.position_error);
        for (x, y) in coarse.values.iter().zip(&fine.values) {
            assert!(abs(x - y) <= 40.0 * coarse.position_error);
        }
        // Markov path agrees with Bernoulli path for a memoryless chain
        let mk = MeasureSpec::markov(vec![vec![0.5, 0.5], vec![0.5, 0.5]]).unwrap();
        let t = QuadratureTable::build(&m, 10, 32, &Sequential).unwrap();
        let a = t.moments(&b, 32).unwrap();
        let c = t.moments(&mk, 32).unwrap();
        for (x, y) in a.values.iter().zip(&c.values) {
            assert!(abs(x - y) < 1e-13);
        }
        assert!(abs(t.lyapunov(&b).unwrap() - t.lyapunov(&mk).unwrap()) < 1e-13);
    }

    #[test]
    fn block_bernoulli_of_bernoulli_blocks_is_bernoulli() {
        let t = IntervalMap::cantor24();
        let p = [0.3, 0.7];
        let mut words = Vec::new();
        let mut weights = Vec::new();
        for r in 0..8u8 {
            let w = vec![(r >> 2) & 1, (r >> 1) & 1, r & 1];
            weights.push(w.iter().map(|&s| p[s as usize]).product());
            words.push(w);
        }
        let bb = MeasureSpec::block_bernoulli(words, weights, 2).unwrap();
        let b = MeasureSpec::bernoulli(p.to_vec()).unwrap();
        assert!(abs(bb.entropy() - b.entropy()) < 1e-14);
        let x = moments(&bb, &t, fam(), 16).unwrap();
        let y = moments(&b, &t, fam(), 16).unwrap();
        for (u, v) in x.values.iter().zip(&y.values) {
            assert!(abs(u - v) < 1e-14);
        }
        assert!(abs(lyapunov(&bb, &t, 1).unwrap() - lyapunov(&b, &t, 1).unwrap()) < 1e-14);
    }

    #[test]
    fn level_constraint_examples() {
        let f = fam();
        let leb = Moments::lebesgue(f);
        let zero = vec![0.0; 100];
        assert_eq!(level_constraint_check(&zero, &leb, 1, 0.1).unwrap(), vec![false]);
        let d0 = Moments::dirac(0.0, f);
        assert!(level_constraint_check(&zero, &d0, 5, 1e-9).unwrap().iter().all(|&b| b));
    }

    #[test]
    fn separation_on_manneville() {
        let m = IntervalMap::manneville(1.0).unwrap();
        let b = MeasureSpec::bernoulli(vec![0.5, 0.5]).unwrap();
        let mo = moments(&b, &m, fam(), 14).unwrap();
        let lam = lyapunov(&b, &m, 14).unwrap();
        let s = ParabolicSimplex::of_map(&m);
        assert_eq!(s.dimension(), 0);
        let sep = separation_gamma(&mo, lam, 8, &s, 1e-3).unwrap();
        let direct = metric_d(&mo, &Moments::dirac(0.0, fam())).unwrap().distance;
        assert_eq!(sep.gamma, direct);
        assert!(sep.gamma > 0.0 && sep.certified);
        assert!(matches!(separation_gamma(&mo, 0.0, 8, &s, 1e-3), Err(Error::InvalidInput(_))));
        let empty = ParabolicSimplex::of_map(&IntervalMap::doubling());
        assert!(matches!(separation_gamma(&mo, lam, 8, &empty, 1e-3), Err(Error::Degenerate(_))));
    }

    #[test]
    fn compositions_cover_grid() {
        let mut c = vec![0, 0, 4];
        let mut n = 1;
        while next_composition(&mut c) {
            assert_eq!(c.iter().sum::<usize>(), 4);
            n += 1;
        }
        assert_eq!(n, 15);
    }
}
