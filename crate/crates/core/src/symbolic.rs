//! Words, cylinders and Birkhoff sums.
//!
//! A word `ω = ω_0 … ω_{n-1}` names the cylinder
//! `I_n(ω) = S_{ω_0} ∘ ⋯ ∘ S_{ω_{n-1}}([0, 1])`; the innermost branch is
//! applied first. Points inside a cylinder are always produced by pulling a
//! seed in `[0, 1]` back through the inverse branches, never by iterating
//! `T` forward, so orbits of cylinder points are exact up to rounding.

use alloc::format;
use alloc::string::String;
use alloc::vec;
use alloc::vec::Vec;
use core::fmt;

use crate::error::{Error, Result};
use crate::exec::Executor;
use crate::map::IntervalMap;
use crate::math::{abs, checked_pow, ln, powi};

/// Default cap on the number of cylinders visited by one enumeration.
pub const DEFAULT_BUDGET: u128 = 1 << 24;

/// Seeds tracked through every cylinder: the images of 0 and 1 are the
/// endpoints, the image of 1/2 is an interior point we call the centre.
pub const SEEDS: [f64; 3] = [0.0, 1.0, 0.5];
pub const SEED_CENTER: usize = 2;

const TABLE_ENTRIES: u128 = 1 << 13;

/// A non-empty finite word over `{0, …, m-1}`.
#[derive(Debug, Clone, PartialEq, Eq, PartialOrd, Ord, Hash)]
pub struct Word(Vec<u8>);

impl Word {
    pub fn new(symbols: Vec<u8>) -> Result<Self> {
        if symbols.is_empty() {
            return Err(Error::InvalidInput("words have length at least 1".into()));
        }
        Ok(Word(symbols))
    }

    /// Parses `"0110"` or a comma/space separated list such as `"0, 11, 3"`.
    pub fn parse(text: &str) -> Result<Self> {
        let t = text.trim();
        let symbols: Vec<u8> = if t.contains(',') || t.contains(' ') {
            t.split(|c: char| c == ',' || c.is_whitespace())
                .filter(|s| !s.is_empty())
                .map(|s| s.parse::<u8>().map_err(|_| Error::InvalidInput(format!("bad symbol {s:?}"))))
                .collect::<Result<_>>()?
        } else {
            t.chars()
                .map(|c| {
                    c.to_digit(10)
                        .map(|d| d as u8)
                        .ok_or_else(|| Error::InvalidInput(format!("bad symbol {c:?}")))
                })
                .collect::<Result<_>>()?
        };
        Word::new(symbols)
    }

    pub fn check(&self, alphabet: usize) -> Result<()> {
        match self.0.iter().find(|&&s| s as usize >= alphabet) {
            Some(s) => Err(Error::InvalidInput(format!("symbol {s} outside alphabet of size {alphabet}"))),
            None => Ok(()),
        }
    }

    pub fn symbols(&self) -> &[u8] {
        &self.0
    }

    pub fn len(&self) -> usize {
        self.0.len()
    }

    pub fn is_empty(&self) -> bool {
        false
    }

    pub fn into_inner(self) -> Vec<u8> {
        self.0
    }
}

impl fmt::Display for Word {
    fn fmt(&self, f: &mut fmt::Formatter<'_>) -> fmt::Result {
        f.write_str(&format_symbols(&self.0))
    }
}

/// Digits when every symbol is below 10, otherwise a comma separated list.
pub fn format_symbols(symbols: &[u8]) -> String {
    if symbols.iter().all(|&s| s < 10) {
        symbols.iter().map(|&s| (b'0' + s) as char).collect()
    } else {
        let parts: Vec<String> = symbols.iter().map(|s| format!("{s}")).collect();
        parts.join(",")
    }
}

/// A word together with its interval.
#[derive(Debug, Clone, PartialEq)]
pub struct Cylinder {
    pub word: Word,
    pub lo: f64,
    pub hi: f64,
    /// Tracked multiplicatively through the branches; agrees with `hi - lo`
    /// up to rounding but keeps full relative precision for tiny intervals.
    pub diam: f64,
}

/// Interval of the word as `(lo, hi, diam)`.
pub fn cylinder_interval(map: &IntervalMap, symbols: &[u8]) -> Result<(f64, f64, f64)> {
    let (mut u, mut v, mut diam) = (0.0, 1.0, 1.0);
    for &a in symbols.iter().rev() {
        let a = a as usize;
        if a >= map.alphabet() {
            return Err(Error::InvalidInput(format!("symbol {a} outside alphabet")));
        }
        let nu = map.inverse(a, u)?;
        let nv = map.inverse(a, v)?;
        diam /= abs(map.branch(a).divided_difference(nu, nv));
        u = nu;
        v = nv;
    }
    Ok((u.min(v), u.max(v), diam))
}

/// Like [`cylinder_interval`] but returns `log diam`, which stays finite for
/// words long enough to underflow the diameter itself.
pub fn log_cylinder_interval(map: &IntervalMap, symbols: &[u8]) -> Result<(f64, f64, f64)> {
    let (mut u, mut v, mut log_diam) = (0.0, 1.0, 0.0);
    for &a in symbols.iter().rev() {
        let a = a as usize;
        if a >= map.alphabet() {
            return Err(Error::InvalidInput(format!("symbol {a} outside alphabet")));
        }
        let nu = map.inverse(a, u)?;
        let nv = map.inverse(a, v)?;
        log_diam -= ln(abs(map.branch(a).divided_difference(nu, nv)));
        u = nu;
        v = nv;
    }
    Ok((u.min(v), u.max(v), log_diam))
}

pub fn cylinder(map: &IntervalMap, word: &Word) -> Result<Cylinder> {
    word.check(map.alphabet())?;
    let (lo, hi, diam) = cylinder_interval(map, word.symbols())?;
    Ok(Cylinder { word: word.clone(), lo, hi, diam })
}

/// Orbit `z_0, …, z_{n-1}` of the point `S_{w_0} ∘ ⋯ ∘ S_{w_{n-1}}(seed)`:
/// `z_t` lies in branch `w_t` and `T z_t = z_{t+1}`.
pub fn coded_orbit(map: &IntervalMap, symbols: &[u8], seed: f64) -> Result<Vec<f64>> {
    let mut out = vec![0.0; symbols.len()];
    let mut z = seed;
    for t in (0..symbols.len()).rev() {
        let a = symbols[t] as usize;
        if a >= map.alphabet() {
            return Err(Error::InvalidInput(format!("symbol {a} outside alphabet")));
        }
        z = map.inverse(a, z)?;
        out[t] = z;
    }
    Ok(out)
}

/// `x, Tx, …, T^{n-1}x`.
pub fn forward_orbit(map: &IntervalMap, x: f64, n: usize) -> Result<Vec<f64>> {
    let mut out = Vec::with_capacity(n);
    let mut z = x;
    for step in 0..n {
        if map.branch_of(z).is_err() {
            return Err(Error::OrbitEscaped { step, x: z });
        }
        out.push(z);
        if step + 1 < n {
            z = map.eval(z)?;
        }
    }
    Ok(out)
}

/// `(1/n) Σ_{j<n} f(T^j x)`.
pub fn birkhoff_average<F: Fn(f64) -> f64>(map: &IntervalMap, f: F, x: f64, n: usize) -> Result<f64> {
    if n == 0 {
        return Err(Error::InvalidInput("n must be at least 1".into()));
    }
    let orbit = forward_orbit(map, x, n)?;
    Ok(orbit.iter().map(|&z| f(z)).sum::<f64>() / n as f64)
}

/// An observable whose Birkhoff sums are tracked during enumeration.
#[derive(Clone, Copy)]
pub enum Observable {
    /// `x^k`.
    Moment(u32),
    Func(fn(f64) -> f64),
}

impl Observable {
    #[inline]
    pub fn eval(&self, x: f64) -> f64 {
        match *self {
            Observable::Moment(k) => powi(x, k),
            Observable::Func(f) => f(x),
        }
    }
}

impl fmt::Debug for Observable {
    fn fmt(&self, f: &mut fmt::Formatter<'_>) -> fmt::Result {
        match self {
            Observable::Moment(k) => write!(f, "Moment({k})"),
            Observable::Func(_) => f.write_str("Func"),
        }
    }
}

/// The first `k` monomials `x, x², …, x^k`.
pub fn moment_observables(k: usize) -> Vec<Observable> {
    (1..=k as u32).map(Observable::Moment).collect()
}

/// What the enumerator hands to visitors.
pub struct CylinderView<'a> {
    pub word: &'a [u8],
    pub diam: f64,
    data: &'a [f64],
    obs: usize,
}

impl<'a> CylinderView<'a> {
    #[inline]
    fn slot(&self, seed: usize) -> usize {
        seed * (2 + self.obs)
    }

    /// Image of `SEEDS[seed]`.
    #[inline]
    pub fn point(&self, seed: usize) -> f64 {
        self.data[self.slot(seed)]
    }

    /// `S_n g` at the image of `SEEDS[seed]`, with `g = log|T'|` taken on the
    /// branch named by the word.
    #[inline]
    pub fn lyapunov_sum(&self, seed: usize) -> f64 {
        self.data[self.slot(seed) + 1]
    }

    /// `S_n f_j` at the image of `SEEDS[seed]`.
    #[inline]
    pub fn observable_sum(&self, seed: usize, j: usize) -> f64 {
        self.data[self.slot(seed) + 2 + j]
    }

    pub fn observable_count(&self) -> usize {
        self.obs
    }

    /// Index of the seed landing on the left endpoint.
    #[inline]
    pub fn left_seed(&self) -> usize {
        if self.point(0) <= self.point(1) {
            0
        } else {
            1
        }
    }

    #[inline]
    pub fn lo(&self) -> f64 {
        self.point(0).min(self.point(1))
    }

    #[inline]
    pub fn hi(&self) -> f64 {
        self.point(0).max(self.point(1))
    }

    #[inline]
    pub fn depth(&self) -> usize {
        self.word.len()
    }

    pub fn to_cylinder(&self) -> Cylinder {
        Cylinder { word: Word(self.word.to_vec()), lo: self.lo(), hi: self.hi(), diam: self.diam }
    }
}

#[derive(Debug, Clone, Copy, PartialEq)]
pub struct EnumConfig {
    pub budget: u128,
}

impl Default for EnumConfig {
    fn default() -> Self {
        EnumConfig { budget: DEFAULT_BUDGET }
    }
}

/// Visits every cylinder of a fixed depth in lexicographic order.
///
/// The deepest `suffix_len` symbols are precomputed once into a table; each
/// chunk fixes a prefix and pulls every table entry back through it. Chunks
/// come in lexicographic order, and so do entries within a chunk.
pub struct CylinderEnumerator<'m> {
    map: &'m IntervalMap,
    depth: usize,
    observables: Vec<Observable>,
    suffix_len: usize,
    table: Vec<f64>,
    words: Vec<u8>,
    entries: usize,
    chunks: usize,
}

impl<'m> CylinderEnumerator<'m> {
    pub fn new(map: &'m IntervalMap, depth: usize, observables: &[Observable], cfg: EnumConfig) -> Result<Self> {
        if depth == 0 {
            return Err(Error::InvalidInput("depth must be at least 1".into()));
        }
        let m = map.alphabet();
        let total = checked_pow(m, depth);
        if total > cfg.budget {
            return Err(Error::budget("cylinders", total, cfg.budget));
        }
        let mut suffix_len = 1;
        while suffix_len < depth && checked_pow(m, suffix_len + 1) <= TABLE_ENTRIES {
            suffix_len += 1;
        }
        let entries = checked_pow(m, suffix_len) as usize;
        let chunks = checked_pow(m, depth - suffix_len) as usize;
        let mut en = CylinderEnumerator {
            map,
            depth,
            observables: observables.to_vec(),
            suffix_len,
            table: Vec::new(),
            words: Vec::new(),
            entries,
            chunks,
        };
        en.build_table()?;
        Ok(en)
    }

    fn stride(&self) -> usize {
        3 * (2 + self.observables.len()) + 1
    }

    /// Pulls `state` back through branch `a`.
    #[inline]
    fn apply(&self, a: usize, state: &mut [f64]) -> Result<()> {
        let k = self.observables.len();
        let w = 2 + k;
        let branch = self.map.branch(a);
        for s in 0..3 {
            let base = s * w;
            let x = branch.inverse(state[base], crate::map::DEFAULT_TOL)?;
            state[base] = x;
            state[base + 1] += branch.log_derivative(x);
            for (j, o) in self.observables.iter().enumerate() {
                state[base + 2 + j] += o.eval(x);
            }
        }
        let dd = abs(branch.divided_difference(state[0], state[w]));
        state[3 * w] /= dd;
        Ok(())
    }

    fn seed_state(&self) -> Vec<f64> {
        let w = 2 + self.observables.len();
        let mut st = vec![0.0; self.stride()];
        for (s, &x) in SEEDS.iter().enumerate() {
            st[s * w] = x;
        }
        st[3 * w] = 1.0;
        st
    }

    fn build_table(&mut self) -> Result<()> {
        let m = self.map.alphabet();
        let l = self.suffix_len;
        let stride = self.stride();
        self.table = vec![0.0; self.entries * stride];
        self.words = vec![0; self.entries * l];
        // Depth-first over the innermost symbol first; leaves are written to
        // their lexicographic rank.
        let mut states: Vec<Vec<f64>> = vec![self.seed_state(); l + 1];
        let mut digits = vec![0u8; l];
        let mut weights = vec![1usize; l + 1];
        for d in 1..=l {
            weights[d] = weights[d - 1] * m;
        }
        let mut stack: Vec<(usize, u8)> = Vec::new();
        stack.extend((0..m as u8).rev().map(|a| (1usize, a)));
        while let Some((d, a)) = stack.pop() {
            // d symbols fixed after this step: positions l-d ..= l-1
            let pos = l - d;
            digits[pos] = a;
            let (head, tail) = states.split_at_mut(d);
            tail[0].copy_from_slice(&head[d - 1]);
            self.apply(a as usize, &mut tail[0])?;
            if d == l {
                let rank: usize = digits.iter().fold(0usize, |r, &s| r * m + s as usize);
                self.table[rank * stride..(rank + 1) * stride].copy_from_slice(&states[l]);
                self.words[rank * l..(rank + 1) * l].copy_from_slice(&digits);
            } else {
                stack.extend((0..m as u8).rev().map(|b| (d + 1, b)));
            }
        }
        Ok(())
    }

    pub fn depth(&self) -> usize {
        self.depth
    }

    pub fn map(&self) -> &IntervalMap {
        self.map
    }

    pub fn chunk_count(&self) -> usize {
        self.chunks
    }

    pub fn cylinder_count(&self) -> usize {
        self.chunks * self.entries
    }

    /// Visits the cylinders whose leading `depth - suffix_len` symbols spell
    /// the base-`m` digits of `chunk`.
    pub fn visit_chunk<F: FnMut(&CylinderView<'_>)>(&self, chunk: usize, mut f: F) -> Result<()> {
        let m = self.map.alphabet();
        let k = self.depth - self.suffix_len;
        let l = self.suffix_len;
        let stride = self.stride();
        let mut prefix = vec![0u8; k];
        let mut c = chunk;
        for t in (0..k).rev() {
            prefix[t] = (c % m) as u8;
            c /= m;
        }
        let mut word = vec![0u8; self.depth];
        word[..k].copy_from_slice(&prefix);
        let mut state = vec![0.0; stride];
        let obs = self.observables.len();
        for e in 0..self.entries {
            state.copy_from_slice(&self.table[e * stride..(e + 1) * stride]);
            for t in (0..k).rev() {
                self.apply(prefix[t] as usize, &mut state)?;
            }
            word[k..].copy_from_slice(&self.words[e * l..(e + 1) * l]);
            let diam = state[stride - 1];
            let view = CylinderView { word: &word, diam, data: &state[..stride - 1], obs };
            f(&view);
        }
        Ok(())
    }

    /// Sequential visit of every cylinder in lexicographic order.
    pub fn for_each<F: FnMut(&CylinderView<'_>)>(&self, mut f: F) -> Result<()> {
        for c in 0..self.chunks {
            self.visit_chunk(c, &mut f)?;
        }
        Ok(())
    }

    /// Chunked reduction. Each chunk folds into a fresh accumulator; the
    /// per-chunk results are merged left to right in chunk order.
    pub fn fold<A, E, I, S, M>(&self, exec: &E, init: I, step: S, mut merge: M) -> Result<A>
    where
        A: Send,
        E: Executor,
        I: Fn() -> A + Sync + Send,
        S: Fn(&mut A, &CylinderView<'_>) + Sync + Send,
        M: FnMut(&mut A, A),
    {
        let parts = exec.map_chunks(self.chunks, |c| {
            let mut acc = init();
            self.visit_chunk(c, |v| step(&mut acc, v)).map(|_| acc)
        });
        let mut it = parts.into_iter();
        let mut acc = it.next().expect("at least one chunk")?;
        for p in it {
            merge(&mut acc, p?);
        }
        Ok(acc)
    }
}

// `fn` pointers and shared references are Sync, so the enumerator can be
// shared by worker threads.
const _: fn() = || {
    fn assert_sync<T: Sync>() {}
    assert_sync::<CylinderEnumerator<'static>>();
};

/// Streams all `m^n` cylinders in lexicographic order.
pub fn enumerate_cylinders<F: FnMut(&Cylinder)>(
    map: &IntervalMap,
    n: usize,
    cfg: EnumConfig,
    mut visitor: F,
) -> Result<()> {
    let en = CylinderEnumerator::new(map, n, &[], cfg)?;
    en.for_each(|v| visitor(&v.to_cylinder()))
}

/// `max_ω (sup f − inf f)` over the depth-`n` cylinders, sampling endpoints
/// and the centre and refining on a 16-point grid when the centre falls
/// outside the endpoint range.
pub fn variation<F, E>(map: &IntervalMap, f: F, n: usize, exec: &E) -> Result<f64>
where
    F: Fn(f64) -> f64 + Sync + Send,
    E: Executor,
{
    let en = CylinderEnumerator::new(map, n, &[], EnumConfig::default())?;
    en.fold(
        exec,
        || 0.0f64,
        |acc, v| {
            let (lo, hi) = (v.lo(), v.hi());
            let (a, b) = (f(lo), f(hi));
            let c = f(v.point(SEED_CENTER));
            let mut mn = a.min(b);
            let mut mx = a.max(b);
            if c < mn || c > mx {
                mn = mn.min(c);
                mx = mx.max(c);
                for j in 1..16 {
                    let y = f(lo + (hi - lo) * j as f64 / 16.0);
                    mn = mn.min(y);
                    mx = mx.max(y);
                }
            }
            *acc = acc.max(mx - mn);
        },
        |acc, other| *acc = acc.max(other),
    )
}

/// `sup_ω | -log D_n(ω)/n - A_n G(ω) |` with `A_n G` read at the left
/// endpoint of each cylinder.
pub fn lemma21_gap<E: Executor>(map: &IntervalMap, n: usize, exec: &E) -> Result<f64> {
    let en = CylinderEnumerator::new(map, n, &[], EnumConfig::default())?;
    let nf = n as f64;
    en.fold(
        exec,
        || 0.0f64,
        |acc, v| {
            let gap = abs(-ln(v.diam) / nf - v.lyapunov_sum(v.left_seed()) / nf);
            *acc = acc.max(gap);
        },
        |acc, other| *acc = acc.max(other),
    )
}

#[cfg(test)]
mod tests {
    use super::*;
    use crate::exec::Sequential;
    use alloc::string::ToString;

    #[test]
    fn middle_thirds_word_01() {
        let t = IntervalMap::middle_thirds();
        let c = cylinder(&t, &Word::parse("01").unwrap()).unwrap();
        assert!(abs(c.lo - 2.0 / 9.0) < 1e-15);
        assert!(abs(c.hi - 3.0 / 9.0) < 1e-15);
        assert!(abs(c.diam - 1.0 / 9.0) < 1e-16);
    }

    #[test]
    fn doubling_zero_words() {
        let t = IntervalMap::doubling();
        for n in 1..30 {
            let c = cylinder(&t, &Word::new(vec![0; n]).unwrap()).unwrap();
            assert_eq!(c.lo, 0.0);
            assert_eq!(c.hi, powi(0.5, n as u32));
            assert_eq!(c.diam, powi(0.5, n as u32));
        }
    }

    #[test]
    fn manneville_word_0() {
        let t = IntervalMap::manneville(1.0).unwrap();
        let c = cylinder(&t, &Word::parse("0").unwrap()).unwrap();
        assert_eq!(c.lo, 0.0);
        assert!(abs(c.hi - 0.6180339887498949) < 1e-15);
        assert!(abs(c.diam - 0.6180339887498949) < 1e-15);
    }

    #[test]
    fn enumeration_order_and_partition() {
        let t = IntervalMap::doubling();
        let mut seen = Vec::new();
        let mut total = 0.0;
        enumerate_cylinders(&t, 3, EnumConfig::default(), |c| {
            seen.push(c.word.to_string());
            total += c.diam;
        })
        .unwrap();
        assert_eq!(seen, ["000", "001", "010", "011", "100", "101", "110", "111"]);
        assert!(abs(total - 1.0) < 1e-15);

        let m = IntervalMap::manneville(1.0).unwrap();
        let mut total = 0.0;
        enumerate_cylinders(&m, 2, EnumConfig::default(), |c| total += c.diam).unwrap();
        assert!(abs(total - 1.0) < 1e-10);

        let mt = IntervalMap::middle_thirds();
        enumerate_cylinders(&mt, 2, EnumConfig::default(), |c| assert!(abs(c.diam - 1.0 / 9.0) < 1e-16))
            .unwrap();
    }

    #[test]
    fn chunked_enumeration_matches_direct_cylinders() {
        let m = IntervalMap::manneville(1.0).unwrap();
        let en = CylinderEnumerator::new(&m, 15, &moment_observables(2), EnumConfig::default()).unwrap();
        assert!(en.chunk_count() > 1);
        let mut count = 0usize;
        let mut prev: Option<Vec<u8>> = None;
        en.for_each(|v| {
            if count % 997 == 0 {
                let (lo, hi, _) = cylinder_interval(&m, v.word).unwrap();
                assert!(abs(lo - v.lo()) < 1e-15 && abs(hi - v.hi()) < 1e-15);
                let orbit = coded_orbit(&m, v.word, 0.5).unwrap();
                let s1: f64 = orbit.iter().sum();
                assert!(abs(s1 - v.observable_sum(SEED_CENTER, 0)) < 1e-12);
            }
            if let Some(p) = &prev {
                assert!(p.as_slice() < v.word);
            }
            prev = Some(v.word.to_vec());
            count += 1;
        })
        .unwrap();
        assert_eq!(count, 1 << 15);
    }

    #[test]
    fn budget_is_enforced() {
        let t = IntervalMap::doubling();
        let r = CylinderEnumerator::new(&t, 25, &[], EnumConfig::default());
        assert!(matches!(r, Err(Error::BudgetExceeded { .. })));
    }

    #[test]
    fn birkhoff_examples() {
        let d = IntervalMap::doubling();
        let g = |x: f64| ln(abs(d.derivative(x).unwrap()));
        let a = birkhoff_average(&d, g, 0.123, 10).unwrap();
        assert!(abs(a - core::f64::consts::LN_2) < 1e-15);
        let a = birkhoff_average(&d, |x| x, 1.0 / 3.0, 2).unwrap();
        assert!(abs(a - 0.5) < 1e-15);
        let m = IntervalMap::manneville(1.0).unwrap();
        let gm = |x: f64| ln(abs(m.derivative(x).unwrap()));
        assert_eq!(birkhoff_average(&m, gm, 0.0, 50).unwrap(), 0.0);
        let mt = IntervalMap::middle_thirds();
        assert!(matches!(birkhoff_average(&mt, |x| x, 0.2, 5), Err(Error::OrbitEscaped { step: 1, .. })));
    }

    #[test]
    fn variation_examples() {
        let d = IntervalMap::doubling();
        let v = variation(&d, |x| x, 4, &Sequential).unwrap();
        assert!(abs(v - 1.0 / 16.0) < 1e-15);
        assert_eq!(variation(&d, |_| 2.5, 6, &Sequential).unwrap(), 0.0);
        let m = IntervalMap::manneville(1.0).unwrap();
        let f = |x: f64| ln(abs(m.derivative(x).unwrap()));
        let v = variation(&m, f, 1, &Sequential).unwrap();
        // brute force over a 1e-5 grid of each closed branch cylinder
        let mut best: f64 = 0.0;
        for (lo, hi) in [(0.0, m.branch(0).domain.1), (m.branch(1).domain.0, 1.0)] {
            let mut mn = f64::INFINITY;
            let mut mx = f64::NEG_INFINITY;
            let steps = ((hi - lo) / 1e-5) as usize;
            for j in 0..=steps {
                let y = f((lo + j as f64 * 1e-5).min(hi));
                mn = mn.min(y);
                mx = mx.max(y);
            }
            let y = f(hi);
            mx = mx.max(y);
            mn = mn.min(y);
            best = best.max(mx - mn);
        }
        assert!(abs(v - best) < 1e-9);
        // the oscillation lives on branch 0: log(1 + 2c) - log 1 = ln(5)/2
        assert!(abs(v - 0.8047189562170503) < 1e-9);
    }

    #[test]
    fn lemma21_gap_linear_is_zero() {
        for t in [IntervalMap::doubling(), IntervalMap::middle_thirds(), IntervalMap::cantor24()] {
            for n in [1, 4, 9, 14] {
                assert!(lemma21_gap(&t, n, &Sequential).unwrap() <= 1e-12);
            }
        }
    }

    #[test]
    fn word_parsing() {
        assert_eq!(Word::parse("0110").unwrap().symbols(), &[0, 1, 1, 0]);
        assert_eq!(Word::parse("0, 11, 3").unwrap().symbols(), &[0, 11, 3]);
        assert!(Word::parse("").is_err());
        assert_eq!(format_symbols(&[1, 12]), "1,12");
    }
}
