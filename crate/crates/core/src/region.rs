//! Sets over the state space: boxes, balls, sublevel sets of expressions and
//! their boolean combinations.

use crate::dynamics::BoxDomain;
use crate::{Error, Result};
use exmex::{Express, FlatEx};
use serde::{Deserialize, Serialize};

/// Largest state dimension accepted by expression-defined fields and regions.
pub const MAX_EXPR_DIM: usize = 8;

/// A compiled scalar expression over the variables `x1, …, xn`.
#[derive(Clone, Debug)]
pub struct Expr {
    src: String,
    flat: FlatEx<f64>,
    slots: Vec<usize>,
}

impl Expr {
    pub fn parse(src: &str) -> Result<Self> {
        let err = |msg: String| Error::Expression {
            expr: src.to_string(),
            msg,
        };
        let flat = exmex::parse::<f64>(src).map_err(|e| err(e.to_string()))?;
        let slots = flat
            .var_names()
            .iter()
            .map(|name| {
                name.strip_prefix('x')
                    .and_then(|k| k.parse::<usize>().ok())
                    .filter(|&k| (1..=MAX_EXPR_DIM).contains(&k))
                    .map(|k| k - 1)
                    .ok_or_else(|| {
                        err(format!(
                            "unknown variable `{name}` (expected x1..x{MAX_EXPR_DIM})"
                        ))
                    })
            })
            .collect::<Result<Vec<_>>>()?;
        Ok(Expr {
            src: src.to_string(),
            flat,
            slots,
        })
    }

    pub fn source(&self) -> &str {
        &self.src
    }

    /// Largest state index referenced, plus one.
    pub fn min_dim(&self) -> usize {
        self.slots.iter().map(|s| s + 1).max().unwrap_or(0)
    }

    pub fn eval(&self, x: &[f64]) -> f64 {
        let mut buf = [0.0; MAX_EXPR_DIM];
        for (b, &s) in buf.iter_mut().zip(&self.slots) {
            *b = x[s];
        }
        self.flat.eval(&buf[..self.slots.len()]).unwrap_or(f64::NAN)
    }
}

impl PartialEq for Expr {
    fn eq(&self, other: &Self) -> bool {
        self.src == other.src
    }
}

/// A measurable subset of the state space.
///
/// `Implicit(e)` is the sublevel set `{x : e(x) ≤ 0}`.
#[derive(Clone, Debug, PartialEq, Serialize, Deserialize)]
#[serde(try_from = "RegionSpec", into = "RegionSpec")]
#[allow(clippy::large_enum_variant)]
pub enum Region {
    Box { lo: Vec<f64>, hi: Vec<f64> },
    Ball { center: Vec<f64>, radius: f64 },
    Implicit(Expr),
    Complement(Box<Region>),
    Union(Vec<Region>),
    Intersection(Vec<Region>),
}

#[derive(Clone, Debug, Serialize, Deserialize)]
#[serde(rename_all = "snake_case", deny_unknown_fields)]
pub enum RegionSpec {
    Box { lo: Vec<f64>, hi: Vec<f64> },
    Ball { center: Vec<f64>, radius: f64 },
    Implicit(String),
    Complement(Box<RegionSpec>),
    Union(Vec<RegionSpec>),
    Intersection(Vec<RegionSpec>),
}

impl TryFrom<RegionSpec> for Region {
    type Error = Error;

    fn try_from(spec: RegionSpec) -> Result<Self> {
        Ok(match spec {
            RegionSpec::Box { lo, hi } => {
                if lo.len() != hi.len() {
                    return Err(Error::Dimension(format!(
                        "box lo has {} entries, hi has {}",
                        lo.len(),
                        hi.len()
                    )));
                }
                Region::Box { lo, hi }
            }
            RegionSpec::Ball { center, radius } => Region::Ball { center, radius },
            RegionSpec::Implicit(s) => Region::Implicit(Expr::parse(&s)?),
            RegionSpec::Complement(r) => Region::Complement(Box::new(Region::try_from(*r)?)),
            RegionSpec::Union(v) => {
                Region::Union(v.into_iter().map(Region::try_from).collect::<Result<_>>()?)
            }
            RegionSpec::Intersection(v) => {
                Region::Intersection(v.into_iter().map(Region::try_from).collect::<Result<_>>()?)
            }
        })
    }
}

impl From<Region> for RegionSpec {
    fn from(r: Region) -> Self {
        match r {
            Region::Box { lo, hi } => RegionSpec::Box { lo, hi },
            Region::Ball { center, radius } => RegionSpec::Ball { center, radius },
            Region::Implicit(e) => RegionSpec::Implicit(e.src),
            Region::Complement(r) => RegionSpec::Complement(Box::new((*r).into())),
            Region::Union(v) => RegionSpec::Union(v.into_iter().map(Into::into).collect()),
            Region::Intersection(v) => {
                RegionSpec::Intersection(v.into_iter().map(Into::into).collect())
            }
        }
    }
}

impl Region {
    pub fn boxed(lo: &[f64], hi: &[f64]) -> Self {
        Region::Box {
            lo: lo.to_vec(),
            hi: hi.to_vec(),
        }
    }

    pub fn ball(center: &[f64], radius: f64) -> Self {
        Region::Ball {
            center: center.to_vec(),
            radius,
        }
    }

    pub fn implicit(src: &str) -> Result<Self> {
        Ok(Region::Implicit(Expr::parse(src)?))
    }

    pub fn complement(self) -> Self {
        Region::Complement(Box::new(self))
    }

    pub fn contains(&self, x: &[f64]) -> bool {
        match self {
            Region::Box { lo, hi } => x
                .iter()
                .zip(lo.iter().zip(hi))
                .all(|(&xi, (&l, &h))| l <= xi && xi <= h),
            Region::Ball { center, radius } => {
                x.iter()
                    .zip(center)
                    .map(|(a, b)| (a - b) * (a - b))
                    .sum::<f64>()
                    <= radius * radius
            }
            Region::Implicit(e) => e.eval(x) <= 0.0,
            Region::Complement(r) => !r.contains(x),
            Region::Union(v) => v.iter().any(|r| r.contains(x)),
            Region::Intersection(v) => v.iter().all(|r| r.contains(x)),
        }
    }

    /// Checks that every coordinate list and expression fits a `dim`-dimensional state.
    pub fn check_dim(&self, dim: usize) -> Result<()> {
        let bad = |what: &str, n: usize| {
            Err(Error::Dimension(format!(
                "{what} has {n} entries, state has {dim}"
            )))
        };
        match self {
            Region::Box { lo, hi } => {
                if lo.len() != dim || hi.len() != dim {
                    return bad("box", lo.len());
                }
            }
            Region::Ball { center, .. } => {
                if center.len() != dim {
                    return bad("ball center", center.len());
                }
            }
            Region::Implicit(e) => {
                if e.min_dim() > dim {
                    return Err(Error::Dimension(format!(
                        "`{}` references x{}",
                        e.src,
                        e.min_dim()
                    )));
                }
            }
            Region::Complement(r) => r.check_dim(dim)?,
            Region::Union(v) | Region::Intersection(v) => {
                for r in v {
                    r.check_dim(dim)?;
                }
            }
        }
        Ok(())
    }

    /// True when the region is a box or ball with no interior.
    pub fn is_degenerate(&self) -> bool {
        match self {
            Region::Box { lo, hi } => lo.iter().zip(hi).any(|(l, h)| !(h > l)),
            Region::Ball { radius, .. } => !(*radius > 0.0),
            _ => false,
        }
    }

    /// Smallest box known to contain `self ∩ domain`.
    pub fn bounding_box(&self, domain: &BoxDomain) -> BoxDomain {
        match self {
            Region::Box { lo, hi } => domain.clip(lo, hi),
            Region::Ball { center, radius } => {
                let lo: Vec<f64> = center.iter().map(|c| c - radius).collect();
                let hi: Vec<f64> = center.iter().map(|c| c + radius).collect();
                domain.clip(&lo, &hi)
            }
            Region::Intersection(v) => v.iter().fold(domain.clone(), |acc, r| r.bounding_box(&acc)),
            Region::Union(v) if !v.is_empty() => {
                let boxes: Vec<BoxDomain> = v.iter().map(|r| r.bounding_box(domain)).collect();
                let lo = (0..domain.dim())
                    .map(|i| boxes.iter().map(|b| b.lo[i]).fold(f64::INFINITY, f64::min))
                    .collect::<Vec<_>>();
                let hi = (0..domain.dim())
                    .map(|i| {
                        boxes
                            .iter()
                            .map(|b| b.hi[i])
                            .fold(f64::NEG_INFINITY, f64::max)
                    })
                    .collect::<Vec<_>>();
                domain.clip(&lo, &hi)
            }
            _ => domain.clone(),
        }
    }

    /// Lebesgue measure. Boxes and balls are exact; anything else is measured
    /// inside `domain` by midpoint quadrature.
    pub fn volume(&self, domain: &BoxDomain) -> f64 {
        match self {
            Region::Box { lo, hi } => lo.iter().zip(hi).map(|(l, h)| (h - l).max(0.0)).product(),
            Region::Ball { center, radius } => ball_volume(center.len(), *radius),
            Region::Complement(inner) if matches!(**inner, Region::Box { .. }) => {
                let Region::Box { lo, hi } = &**inner else {
                    unreachable!()
                };
                let overlap: f64 = (0..domain.dim())
                    .map(|i| (hi[i].min(domain.hi[i]) - lo[i].max(domain.lo[i])).max(0.0))
                    .product();
                domain.volume() - overlap
            }
            _ => {
                let bb = self.bounding_box(domain);
                let n = bb.dim();
                let res = ((4.0e5f64).powf(1.0 / n as f64).floor() as usize).max(2);
                let cell: f64 = bb
                    .lo
                    .iter()
                    .zip(&bb.hi)
                    .map(|(l, h)| (h - l) / res as f64)
                    .product();
                let count = midpoints(&bb, &vec![res; n])
                    .filter(|x| self.contains(x))
                    .count();
                count as f64 * cell
            }
        }
    }
}

/// Volume of the `n`-ball of radius `r`.
pub fn ball_volume(n: usize, r: f64) -> f64 {
    let (mut v, start) = if n.is_multiple_of(2) {
        (1.0, 2)
    } else {
        (2.0 * r, 3)
    };
    let mut k = start;
    while k <= n {
        v *= 2.0 * std::f64::consts::PI * r * r / k as f64;
        k += 2;
    }
    v
}

/// Iterates the cell midpoints of a tensor grid over `bb`, last axis fastest.
pub fn midpoints<'a>(bb: &'a BoxDomain, res: &'a [usize]) -> impl Iterator<Item = Vec<f64>> + 'a {
    let total: usize = res.iter().product();
    (0..total).map(move |mut flat| {
        let mut x = vec![0.0; res.len()];
        for i in (0..res.len()).rev() {
            let k = flat % res[i];
            flat /= res[i];
            let h = (bb.hi[i] - bb.lo[i]) / res[i] as f64;
            x[i] = bb.lo[i] + h * (k as f64 + 0.5);
        }
        x
    })
}
