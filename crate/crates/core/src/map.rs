//! Piecewise-expanding interval maps with finitely many full branches.
//!
//! Each branch is a strictly monotone C¹ map from its domain onto `[0, 1]`
//! that expands everywhere except possibly at its (unique) fixed point. A
//! fixed point with `|T'| = 1` is called parabolic.

use alloc::format;
use alloc::vec::Vec;

use crate::error::{Error, Result};
use crate::math::{abs, ln, powf, sqrt};

/// Default accuracy for inverse branches.
pub const DEFAULT_TOL: f64 = 1e-13;
/// Tolerance used for the surjectivity check at branch endpoints.
pub const SURJECTIVITY_TOL: f64 = 1e-12;
/// `| |T'(x_i)| - 1 |` below this marks a fixed point as parabolic.
pub const PARABOLIC_TOL: f64 = 1e-9;

const BISECTION_BUDGET: usize = 200;
const NEWTON_BUDGET: usize = 50;
const GRID: usize = 1000;

#[derive(Debug, Clone, PartialEq)]
pub enum BranchKind {
    /// `T(x) = slope * x + offset`.
    Linear { slope: f64, offset: f64 },
    /// `T(x) = x + x^(1+beta) - offset`, i.e. the Manneville–Pomeau map with
    /// the mod-1 reduction folded into `offset`.
    Manneville { beta: f64, offset: f64 },
    /// `T(x) = Σ coeffs[k] x^k`.
    Polynomial { coeffs: Vec<f64> },
}

impl BranchKind {
    #[inline]
    fn raw(&self, x: f64) -> f64 {
        match self {
            BranchKind::Linear { slope, offset } => slope * x + offset,
            BranchKind::Manneville { beta, offset } => (x + powf(x, 1.0 + beta)) - offset,
            BranchKind::Polynomial { coeffs } => coeffs.iter().rev().fold(0.0, |acc, &c| acc * x + c),
        }
    }

    #[inline]
    fn deriv(&self, x: f64) -> f64 {
        match self {
            BranchKind::Linear { slope, .. } => *slope,
            BranchKind::Manneville { beta, .. } => {
                if *beta == 1.0 {
                    1.0 + 2.0 * x
                } else {
                    1.0 + (1.0 + beta) * powf(x, *beta)
                }
            }
            BranchKind::Polynomial { coeffs } => {
                let mut d = 0.0;
                for k in (1..coeffs.len()).rev() {
                    d = d * x + coeffs[k] * k as f64;
                }
                d
            }
        }
    }
}

/// One full branch of the map together with its domain.
#[derive(Debug, Clone, PartialEq)]
pub struct BranchSpec {
    pub index: usize,
    pub domain: (f64, f64),
    pub kind: BranchKind,
}

impl BranchSpec {
    /// The branch formula, without any domain check or clamping.
    #[inline]
    pub fn raw(&self, x: f64) -> f64 {
        self.kind.raw(x)
    }

    #[inline]
    pub fn derivative(&self, x: f64) -> f64 {
        self.kind.deriv(x)
    }

    #[inline]
    pub fn log_derivative(&self, x: f64) -> f64 {
        ln(abs(self.kind.deriv(x)))
    }

    pub fn increasing(&self) -> bool {
        let (a, b) = self.domain;
        self.raw(b) > self.raw(a)
    }

    pub fn contains(&self, x: f64) -> bool {
        self.domain.0 <= x && x <= self.domain.1
    }

    /// `(T(b) - T(a)) / (b - a)` evaluated without cancellation. For `a == b`
    /// this is `T'(a)`.
    pub fn divided_difference(&self, a: f64, b: f64) -> f64 {
        match &self.kind {
            BranchKind::Linear { slope, .. } => *slope,
            BranchKind::Manneville { beta, .. } => {
                let beta = *beta;
                if beta == 1.0 {
                    return 1.0 + a + b;
                }
                let (lo, hi) = if a <= b { (a, b) } else { (b, a) };
                let h = 0.5 * (hi - lo);
                let m = 0.5 * (hi + lo);
                if h == 0.0 {
                    return self.derivative(m);
                }
                if h <= 1e-4 * m {
                    // Symmetric Taylor expansion of x^(1+beta) about the midpoint.
                    let g = 1.0 + beta;
                    let t = h / m;
                    let base = g * powf(m, beta);
                    let c3 = beta * (beta - 1.0) / 6.0;
                    let c5 = beta * (beta - 1.0) * (beta - 2.0) * (beta - 3.0) / 120.0;
                    1.0 + base * (1.0 + c3 * t * t + c5 * t * t * t * t)
                } else {
                    1.0 + (powf(hi, 1.0 + beta) - powf(lo, 1.0 + beta)) / (hi - lo)
                }
            }
            BranchKind::Polynomial { coeffs } => {
                // (b^k - a^k)/(b - a) = Σ_{j<k} a^j b^(k-1-j)
                let mut total = 0.0;
                for (k, &c) in coeffs.iter().enumerate().skip(1) {
                    let mut s = 0.0;
                    let mut ap = 1.0;
                    for j in 0..k {
                        s += ap * crate::math::powi(b, (k - 1 - j) as u32);
                        ap *= a;
                    }
                    total += c * s;
                }
                total
            }
        }
    }

    /// `S_i(y)`: the unique point of the domain mapped to `y`.
    pub fn inverse(&self, y: f64, tol: f64) -> Result<f64> {
        let (a, b) = self.domain;
        match &self.kind {
            BranchKind::Linear { slope, offset } => Ok(((y - offset) / slope).clamp(a, b)),
            BranchKind::Manneville { beta, offset } if *beta == 1.0 => {
                // x^2 + x + c = 0 with c = -(y + offset); the root below is the
                // cancellation-free form of (-1 + sqrt(1 - 4c)) / 2.
                let c = -(y + offset);
                let x = -2.0 * c / (1.0 + sqrt(1.0 - 4.0 * c));
                Ok(x.clamp(a, b))
            }
            _ => self.inverse_iterative(y, tol),
        }
    }

    fn inverse_iterative(&self, y: f64, tol: f64) -> Result<f64> {
        let (mut lo, mut hi) = self.domain;
        let inc = self.increasing();
        let f = |x: f64| {
            let v = self.raw(x) - y;
            if inc {
                v
            } else {
                -v
            }
        };
        let flo = f(lo);
        if flo >= 0.0 {
            return self.check_inverse(lo, y, tol);
        }
        let fhi = f(hi);
        if fhi <= 0.0 {
            return self.check_inverse(hi, y, tol);
        }
        let mut it = 0;
        while hi - lo > 1e-6 && it < BISECTION_BUDGET {
            let mid = 0.5 * (lo + hi);
            let v = f(mid);
            if v == 0.0 {
                return self.check_inverse(mid, y, tol);
            }
            if v < 0.0 {
                lo = mid;
            } else {
                hi = mid;
            }
            it += 1;
        }
        let mut x = 0.5 * (lo + hi);
        for _ in 0..NEWTON_BUDGET {
            let v = f(x);
            if v == 0.0 {
                break;
            }
            if v < 0.0 {
                lo = x;
            } else {
                hi = x;
            }
            let d = abs(self.derivative(x));
            let mut next = x - v / d;
            if !(next > lo && next < hi) {
                next = 0.5 * (lo + hi);
            }
            if abs(next - x) <= 1e-17 + 1e-16 * abs(x) {
                x = next;
                break;
            }
            x = next;
        }
        self.check_inverse(x, y, tol)
    }

    fn check_inverse(&self, x: f64, y: f64, tol: f64) -> Result<f64> {
        let d = abs(self.derivative(x)).max(1.0);
        let residual = abs(self.raw(x) - y);
        if residual / d > tol {
            return Err(Error::NoConvergence { symbol: self.index, y, residual });
        }
        Ok(x)
    }
}

/// A fixed point of one branch.
#[derive(Debug, Clone, Copy, PartialEq)]
pub struct FixedPoint {
    pub branch: usize,
    pub x: f64,
    pub parabolic: bool,
}

/// Definition of a branch before validation. Domains of Manneville branches
/// are always derived from the formula; linear domains may be derived too.
#[derive(Debug, Clone, PartialEq)]
pub struct BranchDef {
    pub kind: BranchKind,
    pub domain: Option<(f64, f64)>,
}

impl BranchDef {
    pub fn new(kind: BranchKind) -> Self {
        BranchDef { kind, domain: None }
    }

    pub fn with_domain(kind: BranchKind, domain: (f64, f64)) -> Self {
        BranchDef { kind, domain: Some(domain) }
    }
}

/// A validated map. Immutable and cheap to share across threads.
#[derive(Debug, Clone, PartialEq)]
pub struct IntervalMap {
    branches: Vec<BranchSpec>,
    fixed: Vec<FixedPoint>,
    affine: bool,
}

impl IntervalMap {
    pub fn new(defs: Vec<BranchDef>) -> Result<Self> {
        if defs.is_empty() {
            return Err(Error::InvalidMap("no branches".into()));
        }
        if defs.len() > 255 {
            return Err(Error::InvalidMap("at most 255 branches are supported".into()));
        }
        let mut branches = Vec::with_capacity(defs.len());
        for (index, def) in defs.into_iter().enumerate() {
            let domain = resolve_domain(index, &def)?;
            branches.push(BranchSpec { index, domain, kind: def.kind });
        }
        for b in &branches {
            validate_branch(b)?;
        }
        let mut order: Vec<usize> = (0..branches.len()).collect();
        order.sort_by(|&i, &j| branches[i].domain.0.partial_cmp(&branches[j].domain.0).unwrap());
        for w in order.windows(2) {
            let (x, y) = (&branches[w[0]], &branches[w[1]]);
            if x.domain.1 > y.domain.0 + SURJECTIVITY_TOL {
                return Err(Error::InvalidMap(format!(
                    "domains of branches {} and {} overlap",
                    x.index, y.index
                )));
            }
        }
        let affine = branches.iter().all(|b| matches!(b.kind, BranchKind::Linear { .. }));
        let mut map = IntervalMap { branches, fixed: Vec::new(), affine };
        map.fixed = map.find_fixed_points(DEFAULT_TOL)?;
        for fp in &map.fixed {
            let b = &map.branches[fp.branch];
            let t = abs(b.derivative(fp.x));
            if t < 1.0 - PARABOLIC_TOL {
                return Err(Error::InvalidMap(format!(
                    "branch {} contracts at its fixed point (|T'| = {t})",
                    fp.branch
                )));
            }
        }
        Ok(map)
    }

    /// `T(x) = x + x^(1+beta) mod 1`.
    pub fn manneville(beta: f64) -> Result<Self> {
        if !(beta > 0.0 && beta <= 1.0) {
            return Err(Error::InvalidMap(format!("beta must lie in (0, 1], got {beta}")));
        }
        IntervalMap::new(alloc::vec![
            BranchDef::new(BranchKind::Manneville { beta, offset: 0.0 }),
            BranchDef::new(BranchKind::Manneville { beta, offset: 1.0 }),
        ])
    }

    /// Increasing affine branches mapping each listed domain onto `[0, 1]`.
    pub fn affine(domains: &[(f64, f64)]) -> Result<Self> {
        let defs = domains
            .iter()
            .map(|&(a, b)| {
                let slope = 1.0 / (b - a);
                BranchDef::with_domain(BranchKind::Linear { slope, offset: -a * slope }, (a, b))
            })
            .collect();
        IntervalMap::new(defs)
    }

    pub fn doubling() -> Self {
        IntervalMap::new(alloc::vec![
            BranchDef::new(BranchKind::Linear { slope: 2.0, offset: 0.0 }),
            BranchDef::new(BranchKind::Linear { slope: 2.0, offset: -1.0 }),
        ])
        .expect("doubling map is valid")
    }

    pub fn middle_thirds() -> Self {
        IntervalMap::new(alloc::vec![
            BranchDef::new(BranchKind::Linear { slope: 3.0, offset: 0.0 }),
            BranchDef::new(BranchKind::Linear { slope: 3.0, offset: -2.0 }),
        ])
        .expect("middle-thirds map is valid")
    }

    /// Slope 2 on `[0, 1/2]` and slope 4 on `[3/4, 1]`.
    pub fn cantor24() -> Self {
        IntervalMap::new(alloc::vec![
            BranchDef::new(BranchKind::Linear { slope: 2.0, offset: 0.0 }),
            BranchDef::new(BranchKind::Linear { slope: 4.0, offset: -3.0 }),
        ])
        .expect("(2, 4) Cantor map is valid")
    }

    pub fn alphabet(&self) -> usize {
        self.branches.len()
    }

    pub fn branches(&self) -> &[BranchSpec] {
        &self.branches
    }

    pub fn branch(&self, symbol: usize) -> &BranchSpec {
        &self.branches[symbol]
    }

    pub fn fixed_points(&self) -> &[FixedPoint] {
        &self.fixed
    }

    pub fn fixed_point(&self, branch: usize) -> FixedPoint {
        self.fixed[branch]
    }

    pub fn parabolic_branches(&self) -> Vec<usize> {
        self.fixed.iter().filter(|f| f.parabolic).map(|f| f.branch).collect()
    }

    /// True when every branch is affine.
    pub fn is_affine(&self) -> bool {
        self.affine
    }

    /// True when the branch domains cover `[0, 1]` with no gaps.
    pub fn is_full(&self) -> bool {
        let mut doms: Vec<(f64, f64)> = self.branches.iter().map(|b| b.domain).collect();
        doms.sort_by(|a, b| a.0.partial_cmp(&b.0).unwrap());
        let mut reach = 0.0;
        for (a, b) in doms {
            if a > reach + SURJECTIVITY_TOL {
                return false;
            }
            reach = b;
        }
        reach >= 1.0 - SURJECTIVITY_TOL
    }

    /// The branch used for `x`. On a shared boundary the branch whose domain
    /// starts at `x` wins; remaining ties go to the lower index.
    pub fn branch_of(&self, x: f64) -> Result<usize> {
        let mut first = None;
        for b in &self.branches {
            if b.contains(x) {
                if b.domain.0 == x {
                    return Ok(b.index);
                }
                if first.is_none() {
                    first = Some(b.index);
                }
            }
        }
        first.ok_or(Error::OutOfDomain { x })
    }

    pub fn eval(&self, x: f64) -> Result<f64> {
        let i = self.branch_of(x)?;
        Ok(self.eval_branch(i, x))
    }

    /// `T(x)` using branch `symbol` regardless of where `x` sits.
    pub fn eval_branch(&self, symbol: usize, x: f64) -> f64 {
        self.branches[symbol].raw(x).clamp(0.0, 1.0)
    }

    pub fn derivative(&self, x: f64) -> Result<f64> {
        let i = self.branch_of(x)?;
        Ok(self.branches[i].derivative(x))
    }

    pub fn inverse(&self, symbol: usize, y: f64) -> Result<f64> {
        self.inverse_tol(symbol, y, DEFAULT_TOL)
    }

    pub fn inverse_tol(&self, symbol: usize, y: f64, tol: f64) -> Result<f64> {
        if symbol >= self.branches.len() {
            return Err(Error::InvalidInput(format!("symbol {symbol} outside alphabet")));
        }
        if !(tol > 0.0) {
            return Err(Error::InvalidInput("tolerance must be positive".into()));
        }
        if !(-SURJECTIVITY_TOL..=1.0 + SURJECTIVITY_TOL).contains(&y) {
            return Err(Error::InvalidInput(format!("y = {y} outside [0, 1]")));
        }
        self.branches[symbol].inverse(y.clamp(0.0, 1.0), tol)
    }

    /// The unique root of `T(x) = x` on each branch.
    pub fn find_fixed_points(&self, tol: f64) -> Result<Vec<FixedPoint>> {
        self.branches.iter().map(|b| fixed_point_of(b, tol)).collect()
    }
}

fn resolve_domain(index: usize, def: &BranchDef) -> Result<(f64, f64)> {
    match (&def.kind, def.domain) {
        (BranchKind::Manneville { beta, .. }, _) => {
            if !(*beta > 0.0 && *beta <= 1.0) {
                return Err(Error::InvalidMap(format!("branch {index}: beta must lie in (0, 1]")));
            }
            let kind = &def.kind;
            let lo = if kind.raw(0.0) < 0.0 { solve_increasing(kind, 0.0)? } else { 0.0 };
            let hi = if kind.raw(1.0) > 1.0 { solve_increasing(kind, 1.0)? } else { 1.0 };
            Ok((lo, hi))
        }
        (_, Some(d)) => Ok(d),
        (BranchKind::Linear { slope, offset }, None) => {
            if *slope == 0.0 {
                return Err(Error::InvalidMap(format!("branch {index}: zero slope")));
            }
            let u = (0.0 - offset) / slope;
            let v = (1.0 - offset) / slope;
            Ok(if u <= v { (u, v) } else { (v, u) })
        }
        (BranchKind::Polynomial { .. }, None) => {
            Err(Error::InvalidMap(format!("branch {index}: polynomial branches need a domain")))
        }
    }
}

/// Root of `raw(x) = target` on `[0, 1]` for an increasing formula, by
/// bisection to 1e-14 followed by a Newton polish.
fn solve_increasing(kind: &BranchKind, target: f64) -> Result<f64> {
    let (mut lo, mut hi) = (0.0f64, 1.0f64);
    if !(kind.raw(lo) <= target && kind.raw(hi) >= target) {
        return Err(Error::InvalidMap("branch does not cross the target value".into()));
    }
    while hi - lo > 1e-14 {
        let mid = 0.5 * (lo + hi);
        if kind.raw(mid) < target {
            lo = mid;
        } else {
            hi = mid;
        }
    }
    let mut x = 0.5 * (lo + hi);
    for _ in 0..3 {
        let r = kind.raw(x) - target;
        let next = x - r / kind.deriv(x);
        if abs(kind.raw(next) - target) < abs(r) {
            x = next;
        } else {
            break;
        }
    }
    Ok(x)
}

fn validate_branch(b: &BranchSpec) -> Result<()> {
    let (a, c) = b.domain;
    let i = b.index;
    if !(a.is_finite() && c.is_finite()) || a >= c {
        return Err(Error::InvalidMap(format!("branch {i}: empty or non-finite domain")));
    }
    if a < -SURJECTIVITY_TOL || c > 1.0 + SURJECTIVITY_TOL {
        return Err(Error::InvalidMap(format!("branch {i}: domain leaves [0, 1]")));
    }
    let (ya, yc) = (b.raw(a), b.raw(c));
    let onto = (abs(ya) <= SURJECTIVITY_TOL && abs(yc - 1.0) <= SURJECTIVITY_TOL)
        || (abs(ya - 1.0) <= SURJECTIVITY_TOL && abs(yc) <= SURJECTIVITY_TOL);
    if !onto {
        return Err(Error::InvalidMap(format!(
            "branch {i}: endpoint images ({ya}, {yc}) are not {{0, 1}}"
        )));
    }
    let sign = if yc > ya { 1.0 } else { -1.0 };
    let h = fixed_point_of(b, DEFAULT_TOL)?;
    for j in 0..=GRID {
        let x = a + (c - a) * j as f64 / GRID as f64;
        let d = b.derivative(x);
        if !d.is_finite() || d * sign <= 0.0 {
            return Err(Error::InvalidMap(format!("branch {i}: not strictly monotone near {x}")));
        }
        if abs(x - h.x) > 1e-6 && abs(d) <= 1.0 {
            return Err(Error::InvalidMap(format!("branch {i}: |T'| <= 1 at {x}")));
        }
    }
    Ok(())
}

fn fixed_point_of(b: &BranchSpec, tol: f64) -> Result<FixedPoint> {
    let (a, c) = b.domain;
    let h = |x: f64| b.raw(x) - x;
    let pts: Vec<f64> = (0..=256).map(|j| a + (c - a) * j as f64 / 256.0).collect();
    let vals: Vec<f64> = pts.iter().map(|&x| h(x)).collect();
    let mut roots = 0usize;
    let mut exact = None;
    let mut bracket = None;
    let mut prev: Option<f64> = None;
    let mut zero_run = false;
    for (j, &v) in vals.iter().enumerate() {
        if v == 0.0 {
            if zero_run {
                return Err(Error::NotUnique { branch: b.index });
            }
            roots += 1;
            exact = Some(pts[j]);
            zero_run = true;
            prev = None;
            continue;
        }
        zero_run = false;
        if let Some(p) = prev {
            if (p < 0.0) != (v < 0.0) {
                roots += 1;
                bracket = Some((pts[j - 1], pts[j]));
            }
        }
        prev = Some(v);
    }
    if roots > 1 {
        return Err(Error::NotUnique { branch: b.index });
    }
    let x = if let Some(x) = exact {
        x
    } else if let Some((mut lo, mut hi)) = bracket {
        let up = h(hi) > 0.0;
        while hi - lo > tol.min(1e-14).max(f64::EPSILON * hi.max(1e-300)) {
            let mid = 0.5 * (lo + hi);
            let v = h(mid);
            if v == 0.0 {
                lo = mid;
                hi = mid;
                break;
            }
            if (v > 0.0) == up {
                hi = mid;
            } else {
                lo = mid;
            }
        }
        0.5 * (lo + hi)
    } else {
        return Err(Error::InvalidMap(format!("branch {} has no fixed point", b.index)));
    };
    let parabolic = abs(abs(b.derivative(x)) - 1.0) < PARABOLIC_TOL;
    Ok(FixedPoint { branch: b.index, x, parabolic })
}

#[cfg(test)]
mod tests {
    use super::*;

    fn close(a: f64, b: f64, tol: f64) -> bool {
        abs(a - b) <= tol
    }

    #[test]
    fn manneville_evaluation() {
        let t = IntervalMap::manneville(1.0).unwrap();
        assert_eq!(t.eval(0.5).unwrap(), 0.75);
        assert!(close(t.eval(0.8).unwrap(), 0.44, 1e-15));
        assert_eq!(t.derivative(0.0).unwrap(), 1.0);
        assert_eq!(t.derivative(1.0).unwrap(), 3.0);
    }

    #[test]
    fn doubling_evaluation() {
        let t = IntervalMap::doubling();
        assert_eq!(t.eval(0.3).unwrap(), 0.6);
        for x in [0.0, 0.2, 0.5, 0.77, 1.0] {
            assert_eq!(t.derivative(x).unwrap(), 2.0);
        }
        assert_eq!(t.inverse(0, 0.5).unwrap(), 0.25);
    }

    #[test]
    fn manneville_breakpoint_and_inverse() {
        let t = IntervalMap::manneville(1.0).unwrap();
        let c = 0.6180339887498949;
        assert!(close(t.branch(0).domain.1, c, 1e-15));
        assert!(close(t.branch(1).domain.0, c, 1e-15));
        assert!(close(t.inverse(0, 1.0).unwrap(), c, 1e-15));
        assert_eq!(t.inverse(0, 0.0).unwrap(), 0.0);
    }

    #[test]
    fn boundary_goes_to_branch_starting_there() {
        let t = IntervalMap::doubling();
        assert_eq!(t.branch_of(0.5).unwrap(), 1);
        assert_eq!(t.eval(0.5).unwrap(), 0.0);
        let m = IntervalMap::manneville(1.0).unwrap();
        let c = m.branch(1).domain.0;
        assert_eq!(m.branch_of(c).unwrap(), 1);
    }

    #[test]
    fn gaps_are_out_of_domain() {
        let t = IntervalMap::middle_thirds();
        assert_eq!(t.eval(0.5), Err(Error::OutOfDomain { x: 0.5 }));
        assert!(t.eval(0.2).is_ok());
    }

    #[test]
    fn fixed_points_of_examples() {
        let m = IntervalMap::manneville(1.0).unwrap();
        let f = m.fixed_points();
        assert_eq!(f[0], FixedPoint { branch: 0, x: 0.0, parabolic: true });
        assert_eq!(f[1], FixedPoint { branch: 1, x: 1.0, parabolic: false });
        let d = IntervalMap::doubling();
        assert_eq!(d.fixed_points()[0], FixedPoint { branch: 0, x: 0.0, parabolic: false });
        assert_eq!(d.fixed_points()[1], FixedPoint { branch: 1, x: 1.0, parabolic: false });
        let c = IntervalMap::affine(&[(0.0, 1.0 / 3.0), (2.0 / 3.0, 1.0)]).unwrap();
        assert_eq!(c.fixed_points()[0].x, 0.0);
        assert!(close(c.fixed_points()[1].x, 1.0, 1e-15));
        assert!(c.parabolic_branches().is_empty());
    }

    #[test]
    fn general_beta_uses_iterative_inverse() {
        let m = IntervalMap::manneville(0.5).unwrap();
        for j in 0..=1000 {
            let y = j as f64 / 1000.0;
            for s in 0..2 {
                let x = m.inverse(s, y).unwrap();
                assert!(abs(m.eval_branch(s, x) - y) <= 2.0 * DEFAULT_TOL);
            }
        }
        assert!(m.fixed_points()[0].parabolic);
    }

    #[test]
    fn decreasing_branches_are_supported() {
        let t = IntervalMap::new(alloc::vec![
            BranchDef::new(BranchKind::Linear { slope: 2.0, offset: 0.0 }),
            BranchDef::new(BranchKind::Linear { slope: -2.0, offset: 2.0 }),
        ])
        .unwrap();
        assert_eq!(t.branch(1).domain, (0.5, 1.0));
        assert!(close(t.fixed_points()[1].x, 2.0 / 3.0, 1e-14));
        assert_eq!(t.inverse(1, 0.0).unwrap(), 1.0);
    }

    #[test]
    fn two_parabolic_polynomial_map() {
        let t = IntervalMap::new(alloc::vec![
            BranchDef::with_domain(BranchKind::Polynomial { coeffs: alloc::vec![0.0, 1.0, 2.0] }, (0.0, 0.5)),
            BranchDef::with_domain(
                BranchKind::Polynomial { coeffs: alloc::vec![-2.0, 5.0, -2.0] },
                (0.5, 1.0)
            ),
        ])
        .unwrap();
        assert_eq!(t.parabolic_branches(), alloc::vec![0, 1]);
        let x = t.inverse(1, 0.3).unwrap();
        assert!(abs(t.eval_branch(1, x) - 0.3) < 1e-13);
    }

    #[test]
    fn rejects_bad_maps() {
        let contracting = IntervalMap::new(alloc::vec![BranchDef::new(BranchKind::Linear {
            slope: 0.5,
            offset: 0.0
        })]);
        assert!(contracting.is_err());
        let overlap = IntervalMap::affine(&[(0.0, 0.6), (0.4, 1.0)]);
        assert!(overlap.is_err());
        assert!(IntervalMap::manneville(1.5).is_err());
    }
}
