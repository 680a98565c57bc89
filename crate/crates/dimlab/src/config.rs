//! JSON file formats: maps, measures, cylinder filters and Moran schemes.

use std::fs;
use std::path::Path;

use dimlab_core::map::BranchDef;
use dimlab_core::measures::{moments, MeasureKind, DEFAULT_DEPTH};
use dimlab_core::moran::{FundamentalInterval, LevelStats, MoranConstruction, MoranScheme};
use dimlab_core::pressure::GoodCylinderFilter;
use dimlab_core::{BranchKind, IntervalMap, MeasureSpec, MomentFamily, Moments};
use serde::{Deserialize, Serialize};

use crate::CliError;

pub fn read_json<T: serde::de::DeserializeOwned>(path: &Path) -> Result<(T, serde_json::Value), CliError> {
    let text = fs::read_to_string(path).map_err(|e| CliError::Io(format!("{}: {e}", path.display())))?;
    let raw: serde_json::Value =
        serde_json::from_str(&text).map_err(|e| CliError::Validation(format!("{}: {e}", path.display())))?;
    let parsed = serde_json::from_value(raw.clone())
        .map_err(|e| CliError::Validation(format!("{}: {e}", path.display())))?;
    Ok((parsed, raw))
}

#[derive(Debug, Clone, PartialEq, Serialize, Deserialize)]
#[serde(untagged)]
pub enum MapFile {
    Branches { branches: Vec<BranchFile> },
    Preset { preset: Preset },
    Manneville { kind: MannevilleTag, beta: f64 },
}

#[derive(Debug, Clone, Copy, PartialEq, Serialize, Deserialize)]
#[serde(rename_all = "lowercase")]
pub enum MannevilleTag {
    Manneville,
}

#[derive(Debug, Clone, Copy, PartialEq, Eq, Serialize, Deserialize)]
#[serde(rename_all = "snake_case")]
pub enum Preset {
    Doubling,
    MiddleThirds,
    Cantor24,
}

#[derive(Debug, Clone, PartialEq, Serialize, Deserialize)]
#[serde(tag = "kind", rename_all = "snake_case")]
pub enum BranchFile {
    Linear {
        slope: f64,
        offset: f64,
        #[serde(default, skip_serializing_if = "Option::is_none")]
        domain: Option<(f64, f64)>,
    },
    Manneville {
        beta: f64,
        offset: f64,
        #[serde(default, skip_serializing_if = "Option::is_none")]
        domain: Option<(f64, f64)>,
    },
    Polynomial {
        coeffs: Vec<f64>,
        #[serde(default, skip_serializing_if = "Option::is_none")]
        domain: Option<(f64, f64)>,
    },
}

impl MapFile {
    pub fn build(&self) -> Result<IntervalMap, CliError> {
        let map = match self {
            MapFile::Preset { preset: Preset::Doubling } => IntervalMap::doubling(),
            MapFile::Preset { preset: Preset::MiddleThirds } => IntervalMap::middle_thirds(),
            MapFile::Preset { preset: Preset::Cantor24 } => IntervalMap::cantor24(),
            MapFile::Manneville { beta, .. } => IntervalMap::manneville(*beta)?,
            MapFile::Branches { branches } => {
                let defs = branches
                    .iter()
                    .map(|b| {
                        let (kind, domain) = match b {
                            BranchFile::Linear { slope, offset, domain } => {
                                (BranchKind::Linear { slope: *slope, offset: *offset }, domain)
                            }
                            BranchFile::Manneville { beta, offset, domain } => {
                                (BranchKind::Manneville { beta: *beta, offset: *offset }, domain)
                            }
                            BranchFile::Polynomial { coeffs, domain } => {
                                (BranchKind::Polynomial { coeffs: coeffs.clone() }, domain)
                            }
                        };
                        match domain {
                            Some(d) => BranchDef::with_domain(kind, *d),
                            None => BranchDef::new(kind),
                        }
                    })
                    .collect();
                IntervalMap::new(defs)?
            }
        };
        Ok(map)
    }
}

/// A measure file. Besides invariant measures it accepts `lebesgue`, whose
/// moments are known in closed form, so it can serve as a metric argument
/// or a trace target but not as an optimizer or harvest input.
#[derive(Debug, Clone, PartialEq, Serialize, Deserialize)]
#[serde(tag = "variant", rename_all = "snake_case")]
pub enum MeasureFile {
    Bernoulli { p: Vec<f64> },
    Markov {
        #[serde(default = "one")]
        order: usize,
        transition: Vec<Vec<f64>>,
    },
    DiracFixed { branch: usize },
    BlockBernoulli { words: Vec<Vec<u8>>, weights: Vec<f64> },
    Lebesgue,
}

fn one() -> usize {
    1
}

impl MeasureFile {
    pub fn spec(&self, map: &IntervalMap) -> Result<MeasureSpec, CliError> {
        let m = map.alphabet();
        let spec = match self {
            MeasureFile::Bernoulli { p } => MeasureSpec::bernoulli(p.clone())?,
            MeasureFile::Markov { order, transition } => {
                MeasureSpec::markov_order(*order, m, transition.concat())?
            }
            MeasureFile::DiracFixed { branch } => MeasureSpec::dirac_fixed(*branch, m)?,
            MeasureFile::BlockBernoulli { words, weights } => {
                MeasureSpec::block_bernoulli(words.clone(), weights.clone(), m)?
            }
            MeasureFile::Lebesgue => {
                return Err(CliError::Validation("lebesgue is not an invariant measure spec here".into()))
            }
        };
        spec.check_map(map)?;
        Ok(spec)
    }

    pub fn moments(&self, map: &IntervalMap, family: MomentFamily, depth: usize) -> Result<Moments, CliError> {
        match self {
            MeasureFile::Lebesgue => Ok(Moments::lebesgue(family)),
            _ => Ok(moments(&self.spec(map)?, map, family, depth)?),
        }
    }

    pub fn from_spec(spec: &MeasureSpec) -> Self {
        match spec.kind() {
            MeasureKind::Bernoulli { p } => MeasureFile::Bernoulli { p: p.clone() },
            MeasureKind::Markov { order, transition, .. } => MeasureFile::Markov {
                order: *order,
                transition: transition.chunks(spec.alphabet()).map(|r| r.to_vec()).collect(),
            },
            MeasureKind::DiracFixed { branch } => MeasureFile::DiracFixed { branch: *branch },
            MeasureKind::BlockBernoulli { words, weights, .. } => {
                MeasureFile::BlockBernoulli { words: words.clone(), weights: weights.clone() }
            }
        }
    }
}

/// Good-cylinder filter. Either `alpha` is given directly, or `mu` and `k`
/// name a measure whose first `k` moments become the targets; with neither
/// the filter only bounds the Lyapunov average.
#[derive(Debug, Clone, PartialEq, Serialize, Deserialize)]
pub struct FilterFile {
    #[serde(default)]
    pub alpha: Option<Vec<f64>>,
    #[serde(default)]
    pub mu: Option<MeasureFile>,
    #[serde(default)]
    pub k: Option<usize>,
    pub delta: f64,
    pub eps: f64,
}

impl FilterFile {
    pub fn build(&self, map: &IntervalMap) -> Result<GoodCylinderFilter, CliError> {
        let f = match (&self.alpha, &self.mu) {
            (Some(_), Some(_)) => return Err(CliError::Validation("give either alpha or mu, not both".into())),
            (Some(a), None) => GoodCylinderFilter::new(a.clone(), self.delta, self.eps)?,
            (None, Some(mu)) => {
                let k = self.k.unwrap_or(1);
                let mo = mu.moments(map, MomentFamily::default(), DEFAULT_DEPTH)?;
                GoodCylinderFilter::from_moments(&mo, k, self.delta, self.eps)?
            }
            (None, None) => GoodCylinderFilter::unconstrained(self.delta, self.eps)?,
        };
        Ok(f)
    }
}

#[derive(Debug, Clone, PartialEq, Serialize, Deserialize)]
pub struct IntervalFile {
    pub lo: f64,
    pub hi: f64,
    pub diam: f64,
    pub weight: f64,
    pub parent: usize,
}

#[derive(Debug, Clone, PartialEq, Serialize, Deserialize)]
pub struct ScheduleFile {
    pub stages: usize,
    pub m: Vec<usize>,
    pub eps: Vec<f64>,
    pub block_lengths: Vec<usize>,
    pub padded: bool,
    pub total_length: usize,
    pub target_dimension: f64,
}

/// Per-level statistics of a construction, computed in log space and so
/// available far below the depth an explicit scheme can resolve.
#[derive(Debug, Clone, PartialEq, Serialize, Deserialize)]
pub struct LevelStatsFile {
    pub level: usize,
    pub length: usize,
    pub min_log_eta: f64,
    pub max_log_eta: f64,
    pub min_log_diam: f64,
    pub max_log_diam: f64,
    pub min_quotient: f64,
    pub max_quotient: f64,
    pub balance: f64,
    pub eta_sandwich: bool,
    pub diam_sandwich: bool,
    pub exhaustive: bool,
}

impl LevelStatsFile {
    pub fn of(l: &LevelStats) -> Self {
        LevelStatsFile {
            level: l.level,
            length: l.length,
            min_log_eta: l.min_log_eta,
            max_log_eta: l.max_log_eta,
            min_log_diam: l.min_log_diam,
            max_log_diam: l.max_log_diam,
            min_quotient: l.min_quotient,
            max_quotient: l.max_quotient,
            balance: l.balance(),
            eta_sandwich: l.eta_sandwich_holds(),
            diam_sandwich: l.diam_sandwich_holds(),
            exhaustive: l.exhaustive,
        }
    }
}

/// Moran scheme on disk: explicit levels plus, for built constructions, the
/// block schedule and level statistics.
#[derive(Debug, Clone, PartialEq, Serialize, Deserialize)]
pub struct SchemeFile {
    pub levels: Vec<Vec<IntervalFile>>,
    #[serde(default, skip_serializing_if = "Option::is_none")]
    pub schedule: Option<ScheduleFile>,
    #[serde(default, skip_serializing_if = "Vec::is_empty")]
    pub stats: Vec<LevelStatsFile>,
}

impl SchemeFile {
    pub fn from_scheme(scheme: &MoranScheme, schedule: Option<ScheduleFile>) -> Self {
        let levels = scheme
            .levels()
            .iter()
            .map(|lv| {
                lv.iter()
                    .map(|iv| IntervalFile { lo: iv.lo, hi: iv.hi, diam: iv.diam, weight: iv.weight, parent: iv.parent })
                    .collect()
            })
            .collect();
        SchemeFile { levels, schedule, stats: Vec::new() }
    }

    pub fn scheme(&self) -> Result<MoranScheme, CliError> {
        let levels = self
            .levels
            .iter()
            .map(|lv| {
                lv.iter()
                    .map(|iv| FundamentalInterval { lo: iv.lo, hi: iv.hi, diam: iv.diam, weight: iv.weight, parent: iv.parent })
                    .collect()
            })
            .collect();
        Ok(MoranScheme::new(levels)?)
    }
}

impl ScheduleFile {
    pub fn of(c: &MoranConstruction) -> Self {
        let s = &c.schedule;
        let stages = s.stages();
        ScheduleFile {
            stages,
            m: (1..=stages + 1).map(|i| s.m(i)).collect(),
            eps: (1..=stages).map(|i| s.eps(i)).collect(),
            block_lengths: c.families.iter().map(|f| f.total_length()).collect(),
            padded: c.padded,
            total_length: c.total_length(),
            target_dimension: c.target_dimension(),
        }
    }
}

#[cfg(test)]
mod tests {
    use super::*;

    #[test]
    fn map_formats() {
        let m: MapFile = serde_json::from_str(r#"{"kind":"manneville","beta":1.0}"#).unwrap();
        assert_eq!(m.build().unwrap().parabolic_branches(), vec![0]);
        let t: MapFile = serde_json::from_str(
            r#"{"branches":[{"kind":"linear","domain":[0,0.3333333333333333],"slope":3,"offset":0},
                            {"kind":"linear","domain":[0.6666666666666666,1],"slope":3,"offset":-2}]}"#,
        )
        .unwrap();
        assert_eq!(t.build().unwrap().alphabet(), 2);
        let p: MapFile = serde_json::from_str(r#"{"preset":"cantor24"}"#).unwrap();
        assert_eq!(p.build().unwrap().alphabet(), 2);
    }

    #[test]
    fn measure_round_trip() {
        let map = IntervalMap::doubling();
        let f: MeasureFile = serde_json::from_str(r#"{"variant":"bernoulli","p":[0.5,0.5]}"#).unwrap();
        let spec = f.spec(&map).unwrap();
        assert_eq!(MeasureFile::from_spec(&spec), f);
        let mk: MeasureFile =
            serde_json::from_str(r#"{"variant":"markov","transition":[[0.9,0.1],[0.2,0.8]]}"#).unwrap();
        let spec = mk.spec(&map).unwrap();
        assert_eq!(MeasureFile::from_spec(&spec), mk);
        let bad: MeasureFile = serde_json::from_str(r#"{"variant":"bernoulli","p":[0.2,0.2,0.6]}"#).unwrap();
        assert!(matches!(bad.spec(&map), Err(CliError::Validation(_))));
    }
}
