//! Gaussian RBF dictionary `ψ_k(x) = exp(−‖x − c_k‖² / 2σ²)`.

use crate::dynamics::{dist, BoxDomain};
use crate::region::{midpoints, Region};
use crate::{Error, Result};
use nalgebra::{DMatrix, DVector};
use rayon::prelude::*;
use serde::{Deserialize, Serialize};
use sha2::{Digest, Sha256};

/// Quadrature points processed per block when accumulating Gram-type sums.
const CHUNK: usize = 2048;

/// How the shared width is chosen for a grid of centers.
#[derive(Clone, Copy, Debug, PartialEq, Serialize, Deserialize)]
#[serde(rename_all = "snake_case")]
pub enum SigmaRule {
    /// `σ = factor · d` with `d` the largest center spacing; requires `d ≤ 3σ ≤ 1.5d`.
    Factor(f64),
    Fixed(f64),
}

impl Default for SigmaRule {
    fn default() -> Self {
        SigmaRule::Factor(1.25 / 3.0)
    }
}

#[derive(Clone, Debug, PartialEq)]
pub struct RbfBasis {
    centers: Vec<Vec<f64>>,
    sigma: f64,
    /// Distinct center coordinates per axis; a Gaussian factorizes over axes,
    /// so `ψ_k(x) = Π_i exp(−(x_i − axes[i][slot])² / 2σ²)`.
    axes: Vec<Vec<f64>>,
    /// `slots[k·dim + i]` indexes `axes[i]` for center `k`.
    slots: Vec<usize>,
}

impl RbfBasis {
    pub fn new(centers: Vec<Vec<f64>>, sigma: f64) -> Result<Self> {
        let dim = centers.first().map_or(0, Vec::len);
        if centers.is_empty() || dim == 0 {
            return Err(Error::Invalid("basis needs at least one center".into()));
        }
        if centers.iter().any(|c| c.len() != dim) {
            return Err(Error::Dimension("centers of differing length".into()));
        }
        if !(sigma > 0.0 && sigma.is_finite()) {
            return Err(Error::Invalid(format!(
                "sigma must be positive, got {sigma}"
            )));
        }
        let mut sorted: Vec<&Vec<f64>> = centers.iter().collect();
        sorted.sort_by(|a, b| a.partial_cmp(b).expect("finite centers"));
        if sorted.windows(2).any(|w| w[0] == w[1]) {
            return Err(Error::Invalid("duplicate centers".into()));
        }
        let mut axes = Vec::with_capacity(dim);
        let mut slots = vec![0; centers.len() * dim];
        for i in 0..dim {
            let mut vals: Vec<f64> = centers.iter().map(|c| c[i]).collect();
            vals.sort_by(|a, b| a.partial_cmp(b).expect("finite centers"));
            vals.dedup();
            for (k, c) in centers.iter().enumerate() {
                slots[k * dim + i] = vals
                    .binary_search_by(|v| v.partial_cmp(&c[i]).expect("finite"))
                    .expect("present");
            }
            axes.push(vals);
        }
        Ok(RbfBasis {
            centers,
            sigma,
            axes,
            slots,
        })
    }

    /// Centers on a uniform grid over `domain` (endpoints included).
    pub fn grid(domain: &BoxDomain, dims: &[usize], rule: SigmaRule) -> Result<Self> {
        if dims.len() != domain.dim() || dims.iter().any(|&n| n < 2) {
            return Err(Error::Invalid(format!(
                "basis grid {dims:?} needs at least 2 centers per axis"
            )));
        }
        let d = dims
            .iter()
            .enumerate()
            .map(|(i, &n)| (domain.hi[i] - domain.lo[i]) / (n - 1) as f64)
            .fold(0.0, f64::max);
        let sigma = match rule {
            SigmaRule::Factor(f) => {
                if !(1.0 / 3.0 - 1e-12..=0.5 + 1e-12).contains(&f) {
                    return Err(Error::Invalid(format!(
                        "sigma factor {f} violates d <= 3 sigma <= 1.5 d"
                    )));
                }
                f * d
            }
            SigmaRule::Fixed(s) => {
                if !(d <= 3.0 * s && 3.0 * s <= 1.5 * d) {
                    log::warn!(
                        "sigma {s} is outside the rule of thumb d <= 3 sigma <= 1.5 d for d = {d}"
                    );
                }
                s
            }
        };
        RbfBasis::new(domain.grid(dims), sigma)
    }

    pub fn len(&self) -> usize {
        self.centers.len()
    }

    pub fn is_empty(&self) -> bool {
        self.centers.is_empty()
    }

    pub fn dim(&self) -> usize {
        self.centers[0].len()
    }

    pub fn sigma(&self) -> f64 {
        self.sigma
    }

    pub fn centers(&self) -> &[Vec<f64>] {
        &self.centers
    }

    /// Indices of centers within `radius` of `p`.
    pub fn centers_within(&self, p: &[f64], radius: f64) -> Vec<usize> {
        (0..self.len())
            .filter(|&k| dist(&self.centers[k], p) <= radius)
            .collect()
    }

    pub fn eval_into(&self, x: &[f64], out: &mut [f64]) {
        let s = -0.5 / (self.sigma * self.sigma);
        let dim = self.dim();
        let mut factors: Vec<Vec<f64>> = Vec::with_capacity(dim);
        for (i, vals) in self.axes.iter().enumerate() {
            factors.push(
                vals.iter()
                    .map(|c| (s * (x[i] - c) * (x[i] - c)).exp())
                    .collect(),
            );
        }
        for (k, o) in out.iter_mut().enumerate() {
            let slot = &self.slots[k * dim..(k + 1) * dim];
            *o = factors[0][slot[0]];
            for i in 1..dim {
                *o *= factors[i][slot[i]];
            }
        }
    }

    pub fn eval(&self, x: &[f64]) -> DVector<f64> {
        let mut out = DVector::zeros(self.len());
        self.eval_into(x, out.as_mut_slice());
        out
    }

    /// `Ψ(x)ᵀ c`.
    pub fn combine(&self, x: &[f64], coef: &[f64]) -> f64 {
        let mut psi = vec![0.0; self.len()];
        self.eval_into(x, &mut psi);
        psi.iter().zip(coef).map(|(p, c)| p * c).sum()
    }

    /// Rows are `Ψ(p)ᵀ` for each point.
    pub fn design(&self, points: &[Vec<f64>]) -> DMatrix<f64> {
        let n = self.len();
        let mut m = DMatrix::zeros(points.len(), n);
        let mut row = vec![0.0; n];
        for (i, p) in points.iter().enumerate() {
            self.eval_into(p, &mut row);
            for (k, v) in row.iter().enumerate() {
                m[(i, k)] = *v;
            }
        }
        m
    }

    /// `Λ = ∫ Ψ Ψᵀ dx` over `ℝⁿ`: `Λ_ij = (πσ²)^{n/2} exp(−‖c_i − c_j‖² / 4σ²)`.
    pub fn gram_lambda(&self) -> DMatrix<f64> {
        let s2 = self.sigma * self.sigma;
        let scale = (std::f64::consts::PI * s2).powf(self.dim() as f64 / 2.0);
        let n = self.len();
        DMatrix::from_fn(n, n, |i, j| {
            let r = dist(&self.centers[i], &self.centers[j]);
            scale * (-r * r / (4.0 * s2)).exp()
        })
    }

    /// `Σ_x Ψ(x)Ψ(x)ᵀ` over `points`, accumulated block by block in a fixed order.
    pub fn outer_sum(&self, points: &[Vec<f64>]) -> DMatrix<f64> {
        let n = self.len();
        let mut acc = DMatrix::zeros(n, n);
        for part in points
            .par_chunks(CHUNK)
            .map(|c| {
                let phi = self.design(c);
                phi.transpose() * &phi
            })
            .collect::<Vec<_>>()
        {
            acc += part;
        }
        acc
    }

    /// `Σ_x Ψ(x)Ψ(x)ᵀ` over every point of `quad`. The grid is a tensor product,
    /// so the sum factorizes into one small table per axis.
    pub fn quad_outer_sum(&self, quad: &QuadGrid) -> DMatrix<f64> {
        let s = -0.5 / (self.sigma * self.sigma);
        let dim = self.dim();
        let tables: Vec<DMatrix<f64>> = (0..dim)
            .map(|i| {
                let (lo, hi, r) = (quad.domain.lo[i], quad.domain.hi[i], quad.res[i]);
                let h = (hi - lo) / r as f64;
                let vals = &self.axes[i];
                let e = DMatrix::from_fn(vals.len(), r, |a, j| {
                    let t = lo + h * (j as f64 + 0.5);
                    (s * (t - vals[a]) * (t - vals[a])).exp()
                });
                &e * e.transpose()
            })
            .collect();
        let n = self.len();
        DMatrix::from_fn(n, n, |k, l| {
            (0..dim)
                .map(|i| tables[i][(self.slots[k * dim + i], self.slots[l * dim + i])])
                .product()
        })
    }

    /// `D = ∫_{X₁} Ψ Ψᵀ dx` by midpoint quadrature on `quad`, masked to `region`.
    pub fn mass_matrix_d(&self, region: &Region, quad: &QuadGrid) -> Result<DMatrix<f64>> {
        if region.is_degenerate() {
            return Err(Error::ZeroVolume);
        }
        let (inside, outside): (Vec<Vec<f64>>, Vec<Vec<f64>>) =
            quad.points().into_iter().partition(|x| region.contains(x));
        let sum = if outside.len() < inside.len() {
            self.quad_outer_sum(quad) - self.outer_sum(&outside)
        } else {
            self.outer_sum(&inside)
        };
        Ok(sum * quad.cell_volume())
    }

    /// Least-squares coefficients of `f` on the quadrature points.
    pub fn project_density(
        &self,
        f: &(dyn Fn(&[f64]) -> f64 + Sync),
        quad: &QuadGrid,
        opts: &ProjectOptions,
        role: Role,
    ) -> Result<Projection> {
        let pts = quad.points();
        if pts.is_empty() {
            return Err(Error::Invalid("empty quadrature grid".into()));
        }
        let n = self.len();
        let fv: Vec<f64> = pts.par_iter().map(|x| f(x)).collect();
        let mut coef = if opts.ridge > 0.0 {
            let mut h = self.quad_outer_sum(quad);
            let mut b = DVector::zeros(n);
            let parts: Vec<_> = pts
                .par_chunks(CHUNK)
                .zip(fv.par_chunks(CHUNK))
                .map(|(c, fc)| self.design(c).tr_mul(&DVector::from_column_slice(fc)))
                .collect();
            for bp in parts {
                b += bp;
            }
            for i in 0..n {
                h[(i, i)] += opts.ridge;
            }
            h.cholesky()
                .ok_or(Error::NotPositiveDefinite { jitter: opts.ridge })?
                .solve(&b)
        } else {
            let phi = self.design(&pts);
            let svd = phi.svd(true, true);
            let smax = svd.singular_values.max();
            let tol = smax * f64::EPSILON * pts.len().max(n) as f64;
            let rank = svd.singular_values.iter().filter(|&&s| s > tol).count();
            if rank < n {
                return Err(Error::RankDeficient { rank, n });
            }
            svd.solve(&DVector::from_vec(fv.clone()), tol)
                .map_err(|e| Error::Invalid(e.to_string()))?
        };
        let mut clipped = 0;
        if opts.nonneg {
            for c in coef.iter_mut() {
                if *c < 0.0 {
                    *c = 0.0;
                    clipped += 1;
                }
            }
        }
        let (num, den) = pts
            .par_chunks(CHUNK)
            .zip(fv.par_chunks(CHUNK))
            .map(|(c, fc)| {
                let fit = self.design(c) * &coef;
                fit.iter().zip(fc).fold((0.0, 0.0), |(a, b), (p, q)| {
                    (a + (p - q) * (p - q), b + q * q)
                })
            })
            .collect::<Vec<_>>()
            .into_iter()
            .fold((0.0, 0.0), |(a, b), (c, d)| (a + c, b + d));
        let rel_residual = if den > 0.0 {
            (num / den).sqrt()
        } else {
            num.sqrt()
        };
        Ok(Projection {
            coef: CoefVector { coef, role },
            rel_residual,
            clipped,
        })
    }

    /// SHA-256 over dimension, width and centers, as lowercase hex.
    pub fn hash(&self) -> String {
        let mut h = Sha256::new();
        h.update((self.dim() as u64).to_le_bytes());
        h.update((self.len() as u64).to_le_bytes());
        h.update(self.sigma.to_le_bytes());
        for c in &self.centers {
            for v in c {
                h.update(v.to_le_bytes());
            }
        }
        h.finalize().iter().map(|b| format!("{b:02x}")).collect()
    }
}

/// Tensor grid of cell midpoints over a box.
#[derive(Clone, Debug, PartialEq)]
pub struct QuadGrid {
    pub domain: BoxDomain,
    pub res: Vec<usize>,
}

impl QuadGrid {
    pub fn new(domain: BoxDomain, res: Vec<usize>) -> Self {
        QuadGrid { domain, res }
    }

    pub fn uniform(domain: &BoxDomain, per_axis: usize) -> Self {
        QuadGrid {
            domain: domain.clone(),
            res: vec![per_axis; domain.dim()],
        }
    }

    pub fn points(&self) -> Vec<Vec<f64>> {
        midpoints(&self.domain, &self.res).collect()
    }

    pub fn cell_volume(&self) -> f64 {
        self.domain
            .lo
            .iter()
            .zip(&self.domain.hi)
            .zip(&self.res)
            .map(|((l, h), &r)| (h - l) / r as f64)
            .product()
    }
}

#[derive(Clone, Copy, Debug, PartialEq)]
pub struct ProjectOptions {
    pub ridge: f64,
    /// Truncate negative coefficients to zero after the fit.
    pub nonneg: bool,
}

impl Default for ProjectOptions {
    fn default() -> Self {
        ProjectOptions {
            ridge: 1e-8,
            nonneg: false,
        }
    }
}

/// What a coefficient vector stands for. The tag carries no sign guarantee.
#[derive(Clone, Copy, Debug, PartialEq, Eq)]
pub enum Role {
    Density,
    Signed,
    Initial,
    Hazard,
}

#[derive(Clone, Debug, PartialEq)]
pub struct CoefVector {
    pub coef: DVector<f64>,
    pub role: Role,
}

#[derive(Clone, Debug)]
pub struct Projection {
    pub coef: CoefVector,
    /// `‖Φc − f‖ / ‖f‖` on the quadrature points.
    pub rel_residual: f64,
    /// Number of coefficients set to zero by the nonnegativity option.
    pub clipped: usize,
}
