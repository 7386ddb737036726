//! Hazard intensity `p(x)` and Monte Carlo estimates of the collision functional
//! `∫₀^T ∫ p(s_t(x)) dμ₀(x) dt`.

use crate::dynamics::{simulate, BoxDomain, End, Trajectory, VectorField};
use crate::numfmt::sig15;
use crate::region::Region;
use crate::{Error, Result};
use rand::{RngExt, SeedableRng};
use rand_chacha::ChaCha8Rng;
use rayon::prelude::*;
use serde::{Deserialize, Serialize};
use std::path::Path;

#[derive(Clone, Copy, Debug, PartialEq, Eq, Serialize, Deserialize)]
#[serde(rename_all = "snake_case")]
pub enum LevelMode {
    /// `p = level / m(region)` inside the region.
    Uniform,
    /// `p = level` inside the region.
    Raw,
}

#[derive(Clone, Debug, PartialEq, Serialize, Deserialize)]
#[serde(deny_unknown_fields)]
pub struct HazardPiece {
    pub region: Region,
    pub level: f64,
    pub mode: LevelMode,
}

impl HazardPiece {
    pub fn raw(region: Region, level: f64) -> Self {
        HazardPiece {
            region,
            level,
            mode: LevelMode::Raw,
        }
    }

    pub fn uniform(region: Region, level: f64) -> Self {
        HazardPiece {
            region,
            level,
            mode: LevelMode::Uniform,
        }
    }
}

/// Sum of piecewise-constant hazard levels.
#[derive(Clone, Debug, PartialEq)]
pub struct HazardModel {
    pieces: Vec<(Region, f64)>,
}

impl HazardModel {
    /// Resolves uniform pieces against their volume; non-box, non-ball regions are
    /// measured inside `domain`.
    pub fn new(pieces: &[HazardPiece], domain: &BoxDomain) -> Result<Self> {
        let mut out = Vec::with_capacity(pieces.len());
        for (k, p) in pieces.iter().enumerate() {
            if !(p.level >= 0.0 && p.level.is_finite()) {
                return Err(Error::Invalid(format!(
                    "hazard piece {k}: level must be a finite nonnegative number"
                )));
            }
            p.region.check_dim(domain.dim())?;
            let value = match p.mode {
                LevelMode::Raw => p.level,
                LevelMode::Uniform => {
                    let vol = p.region.volume(domain);
                    if !(vol > 0.0) {
                        return Err(Error::ZeroVolume);
                    }
                    p.level / vol
                }
            };
            out.push((p.region.clone(), value));
        }
        Ok(HazardModel { pieces: out })
    }

    pub fn zero() -> Self {
        HazardModel { pieces: vec![] }
    }

    /// Effective value of each piece inside its region.
    pub fn values(&self) -> Vec<f64> {
        self.pieces.iter().map(|(_, v)| *v).collect()
    }

    pub fn regions(&self) -> impl Iterator<Item = &Region> {
        self.pieces.iter().map(|(r, _)| r)
    }

    pub fn eval_p(&self, x: &[f64]) -> f64 {
        self.pieces
            .iter()
            .filter(|(r, _)| r.contains(x))
            .map(|(_, v)| v)
            .sum()
    }

    /// Same regions with every value multiplied by `alpha`.
    pub fn scaled(&self, alpha: f64) -> Self {
        HazardModel {
            pieces: self
                .pieces
                .iter()
                .map(|(r, v)| (r.clone(), v * alpha))
                .collect(),
        }
    }

    pub fn with_piece(&self, region: Region, value: f64) -> Self {
        let mut pieces = self.pieces.clone();
        pieces.push((region, value));
        HazardModel { pieces }
    }
}

/// Uniform samples from a region by rejection inside its bounding box.
#[derive(Clone, Debug)]
pub struct Mu0Sampler {
    region: Region,
    bbox: BoxDomain,
}

impl Mu0Sampler {
    pub fn new(region: Region, domain: &BoxDomain) -> Self {
        let bbox = region.bounding_box(domain);
        Mu0Sampler { region, bbox }
    }

    pub fn sample(&self, rng: &mut ChaCha8Rng) -> Result<Vec<f64>> {
        for _ in 0..100_000 {
            let x: Vec<f64> = self
                .bbox
                .lo
                .iter()
                .zip(&self.bbox.hi)
                .map(|(l, h)| rng.random_range(*l..=*h))
                .collect();
            if self.region.contains(&x) {
                return Ok(x);
            }
        }
        Err(Error::Invalid(
            "initial set rejected 100000 consecutive samples".into(),
        ))
    }

    /// `count` samples from a generator seeded with `seed`.
    pub fn draw(&self, count: usize, seed: u64) -> Result<Vec<Vec<f64>>> {
        let mut rng = ChaCha8Rng::seed_from_u64(seed);
        (0..count).map(|_| self.sample(&mut rng)).collect()
    }
}

#[derive(Clone, Debug, PartialEq)]
pub struct McOptions {
    pub horizon: f64,
    pub dt: f64,
    pub n_samples: usize,
    pub seed: u64,
    /// Integration stops on entry; the remaining horizon is charged at `p(x_final)`.
    pub target: Option<Region>,
}

#[derive(Clone, Debug, PartialEq)]
pub struct McSample {
    pub x0: Vec<f64>,
    pub hazard: f64,
    pub end: End,
    pub t_end: f64,
    /// [`occupancy_fraction`] of each hazard piece, in model order.
    pub occupancy: Vec<f64>,
}

#[derive(Clone, Debug, PartialEq)]
pub struct McReport {
    pub estimate: f64,
    pub stderr: f64,
    /// Fraction of samples still short of the target at the horizon.
    pub tail_fraction: f64,
    pub exit_fraction: f64,
    pub samples: Vec<McSample>,
}

impl McReport {
    pub fn write_samples_csv(&self, path: &Path) -> Result<()> {
        let dim = self.samples.first().map_or(0, |s| s.x0.len());
        let mut s = String::from("sample");
        for i in 1..=dim {
            s.push_str(&format!(",x0_{i}"));
        }
        s.push_str(",hazard,end,t_end");
        for i in 1..=self.samples.first().map_or(0, |s| s.occupancy.len()) {
            s.push_str(&format!(",occupancy_{i}"));
        }
        s.push('\n');
        for (k, m) in self.samples.iter().enumerate() {
            s.push_str(&k.to_string());
            for v in &m.x0 {
                s.push(',');
                s.push_str(&sig15(*v));
            }
            s.push_str(&format!(
                ",{},{},{}",
                sig15(m.hazard),
                m.end.as_str(),
                sig15(m.t_end)
            ));
            for o in &m.occupancy {
                s.push(',');
                s.push_str(&sig15(*o));
            }
            s.push('\n');
        }
        std::fs::write(path, s).map_err(|e| Error::io(path, e))
    }
}

/// Left Riemann sum of `p` along a trajectory, excluding the final state.
pub fn hazard_along(model: &HazardModel, tr: &Trajectory, dt: f64) -> f64 {
    let n = tr.states.len().saturating_sub(1);
    kahan(tr.states[..n].iter().map(|x| model.eval_p(x) * dt))
}

fn kahan(values: impl Iterator<Item = f64>) -> f64 {
    let (mut sum, mut comp) = (0.0f64, 0.0f64);
    for v in values {
        let y = v - comp;
        let t = sum + y;
        comp = (t - sum) - y;
        sum = t;
    }
    sum
}

pub fn collision_probability_mc(
    field: &VectorField,
    sampler: &Mu0Sampler,
    model: &HazardModel,
    opts: &McOptions,
) -> Result<McReport> {
    if opts.n_samples == 0 {
        return Err(Error::Invalid("n_samples must be at least 1".into()));
    }
    let samples = (0..opts.n_samples)
        .into_par_iter()
        .map(|j| {
            let mut rng = ChaCha8Rng::seed_from_u64(opts.seed);
            rng.set_stream(j as u64);
            let x0 = sampler.sample(&mut rng)?;
            let tr = simulate(field, &x0, opts.horizon, opts.dt, opts.target.as_ref())?;
            let mut hazard = hazard_along(model, &tr, opts.dt);
            let t_end = *tr.times.last().expect("nonempty");
            if tr.end == End::Reached {
                hazard += model.eval_p(tr.last()) * (opts.horizon - t_end).max(0.0);
            }
            let occupancy = model
                .regions()
                .map(|r| occupancy_fraction(&tr, r))
                .collect();
            Ok(McSample {
                x0,
                hazard,
                end: tr.end,
                t_end,
                occupancy,
            })
        })
        .collect::<Result<Vec<_>>>()?;
    let n = samples.len() as f64;
    let mean = kahan(samples.iter().map(|s| s.hazard)) / n;
    let var = if samples.len() > 1 {
        kahan(samples.iter().map(|s| (s.hazard - mean).powi(2))) / (n - 1.0)
    } else {
        0.0
    };
    let frac = |e: End| samples.iter().filter(|s| s.end == e).count() as f64 / n;
    let tail_fraction = if opts.target.is_some() {
        frac(End::Horizon)
    } else {
        0.0
    };
    Ok(McReport {
        estimate: mean,
        stderr: (var / n).sqrt(),
        tail_fraction,
        exit_fraction: frac(End::LeftDomain),
        samples,
    })
}

/// Fraction of the trajectory's duration spent in `region` (left Riemann count).
pub fn occupancy_fraction(tr: &Trajectory, region: &Region) -> f64 {
    let total = tr.duration();
    if tr.states.len() < 2 || total <= 0.0 {
        return if tr.states.first().is_some_and(|x| region.contains(x)) {
            1.0
        } else {
            0.0
        };
    }
    let inside: f64 = tr
        .times
        .windows(2)
        .zip(&tr.states)
        .filter(|(_, x)| region.contains(x))
        .map(|(t, _)| t[1] - t[0])
        .sum();
    inside / total
}
