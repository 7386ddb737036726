//! Density feedback `k(x) = Ψᵀw / Ψᵀv` with an LQR handoff near the target.

use crate::basis::RbfBasis;
use crate::dynamics::{dist, Policy, VectorField};
use crate::matio::{read_matrix, write_matrix, Sidecar};
use crate::synthesis::DensityPair;
use crate::{Error, Result};
use nalgebra::{DMatrix, DVector};
use rand::{RngExt, SeedableRng};
use rand_chacha::ChaCha8Rng;
use std::path::Path;
use std::sync::atomic::{AtomicBool, Ordering};
use std::sync::Arc;

pub const BUNDLE_MATRIX: &str = "controller.pfnavmat";
pub const BUNDLE_META: &str = "controller.meta";

#[derive(Debug)]
pub struct NavigationController {
    basis: RbfBasis,
    pair: DensityPair,
    input_bound: f64,
    x_r: Vec<f64>,
    epsilon_l: f64,
    gain: Vec<f64>,
    denom_floor: f64,
    warned: AtomicBool,
}

impl Clone for NavigationController {
    fn clone(&self) -> Self {
        NavigationController {
            basis: self.basis.clone(),
            pair: self.pair.clone(),
            input_bound: self.input_bound,
            x_r: self.x_r.clone(),
            epsilon_l: self.epsilon_l,
            gain: self.gain.clone(),
            denom_floor: self.denom_floor,
            warned: AtomicBool::new(self.warned.load(Ordering::Relaxed)),
        }
    }
}

impl NavigationController {
    /// The density floor defaults to `1e−8 · max v`.
    pub fn new(
        basis: RbfBasis,
        pair: DensityPair,
        input_bound: f64,
        x_r: Vec<f64>,
        epsilon_l: f64,
        gain: Vec<f64>,
    ) -> Result<Self> {
        let floor = 1e-8 * pair.v.max().max(0.0);
        Self::with_floor(basis, pair, input_bound, x_r, epsilon_l, gain, floor)
    }

    pub fn with_floor(
        basis: RbfBasis,
        pair: DensityPair,
        input_bound: f64,
        x_r: Vec<f64>,
        epsilon_l: f64,
        gain: Vec<f64>,
        denom_floor: f64,
    ) -> Result<Self> {
        let (n, d) = (basis.len(), basis.dim());
        if pair.v.len() != n || pair.w.len() != n {
            return Err(Error::Dimension(format!(
                "basis has {n} functions, pair has {} and {}",
                pair.v.len(),
                pair.w.len()
            )));
        }
        if x_r.len() != d || gain.len() != d {
            return Err(Error::Dimension(format!(
                "state dimension {d}, x_r {}, gain {}",
                x_r.len(),
                gain.len()
            )));
        }
        if !(input_bound > 0.0) || !(epsilon_l >= 0.0) {
            return Err(Error::Invalid(format!(
                "input bound {input_bound} and epsilon {epsilon_l}"
            )));
        }
        let denom_floor = if denom_floor > 0.0 {
            denom_floor
        } else {
            f64::MIN_POSITIVE
        };
        Ok(NavigationController {
            basis,
            pair,
            input_bound,
            x_r,
            epsilon_l,
            gain,
            denom_floor,
            warned: AtomicBool::new(false),
        })
    }

    pub fn basis(&self) -> &RbfBasis {
        &self.basis
    }

    pub fn pair(&self) -> &DensityPair {
        &self.pair
    }

    pub fn input_bound(&self) -> f64 {
        self.input_bound
    }

    pub fn x_r(&self) -> &[f64] {
        &self.x_r
    }

    pub fn epsilon_l(&self) -> f64 {
        self.epsilon_l
    }

    pub fn gain(&self) -> &[f64] {
        &self.gain
    }

    pub fn denom_floor(&self) -> f64 {
        self.denom_floor
    }

    pub fn in_handoff(&self, x: &[f64]) -> bool {
        dist(x, &self.x_r) <= self.epsilon_l
    }

    /// `ρ(x) = Ψ(x)ᵀv`.
    pub fn rho(&self, x: &[f64]) -> f64 {
        self.basis.combine(x, self.pair.v.as_slice())
    }

    pub fn control(&self, x: &[f64]) -> f64 {
        let m = self.input_bound;
        if self.in_handoff(x) {
            let u: f64 = -self
                .gain
                .iter()
                .zip(x.iter().zip(&self.x_r))
                .map(|(k, (a, b))| k * (a - b))
                .sum::<f64>();
            return u.clamp(-m, m);
        }
        let mut psi = vec![0.0; self.basis.len()];
        self.basis.eval_into(x, &mut psi);
        let den: f64 = psi.iter().zip(self.pair.v.iter()).map(|(p, v)| p * v).sum();
        if !(den >= self.denom_floor) {
            if !self.warned.swap(true, Ordering::Relaxed) {
                log::warn!(
                    "density {den:e} below floor {:e} at {x:?}; returning zero input",
                    self.denom_floor
                );
            }
            return 0.0;
        }
        let num: f64 = psi.iter().zip(self.pair.w.iter()).map(|(p, w)| p * w).sum();
        (num / den).clamp(-m, m)
    }

    pub fn policy(self: &Arc<Self>) -> Policy {
        let c = Arc::clone(self);
        Arc::new(move |x: &[f64]| c.control(x))
    }

    /// Writes `controller.pfnavmat` (`[centers | v | w]`, one row per basis
    /// function) and `controller.meta` into `dir`.
    pub fn save(&self, dir: &Path) -> Result<()> {
        let (n, d) = (self.basis.len(), self.basis.dim());
        let m = DMatrix::from_fn(n, d + 2, |i, j| match j {
            j if j < d => self.basis.centers()[i][j],
            j if j == d => self.pair.v[i],
            _ => self.pair.w[i],
        });
        write_matrix(&dir.join(BUNDLE_MATRIX), &m)?;
        let mut meta = Sidecar::new();
        meta.set("dim", d)
            .set("n", n)
            .set("sigma", self.basis.sigma())
            .set("input_bound", self.input_bound)
            .set_list("x_r", &self.x_r)
            .set("epsilon_l", self.epsilon_l)
            .set_list("gain", &self.gain)
            .set("denom_floor", self.denom_floor)
            .set("residual_eq", self.pair.residual_eq)
            .set("hazard_value", self.pair.hazard_value)
            .set("lp_iterations", self.pair.lp_iterations)
            .set("basis_hash", self.basis.hash());
        meta.write(&dir.join(BUNDLE_META))
    }

    pub fn load(dir: &Path) -> Result<Self> {
        let mpath = dir.join(BUNDLE_MATRIX);
        let meta_path = dir.join(BUNDLE_META);
        let m = read_matrix(&mpath)?;
        let meta = Sidecar::read(&meta_path)?;
        let d: usize = meta.req(&meta_path, "dim")?;
        if m.ncols() != d + 2 {
            return Err(Error::Format {
                path: mpath,
                msg: format!("expected {} columns, found {}", d + 2, m.ncols()),
            });
        }
        let centers = (0..m.nrows())
            .map(|i| (0..d).map(|j| m[(i, j)]).collect())
            .collect();
        let basis = RbfBasis::new(centers, meta.req(&meta_path, "sigma")?)?;
        let hash: String = meta.req(&meta_path, "basis_hash")?;
        if hash != basis.hash() {
            return Err(Error::Format {
                path: meta_path,
                msg: "basis hash does not match the stored centers".into(),
            });
        }
        let pair = DensityPair {
            v: m.column(d).into_owned(),
            w: m.column(d + 1).into_owned(),
            residual_eq: meta.req(&meta_path, "residual_eq")?,
            hazard_value: meta.req(&meta_path, "hazard_value")?,
            lp_iterations: meta.req(&meta_path, "lp_iterations")?,
        };
        Self::with_floor(
            basis,
            pair,
            meta.req(&meta_path, "input_bound")?,
            meta.req_list(&meta_path, "x_r")?,
            meta.req(&meta_path, "epsilon_l")?,
            meta.req_list(&meta_path, "gain")?,
            meta.req(&meta_path, "denom_floor")?,
        )
    }
}

/// `A = ∂f/∂x` at `x_r` by central differences with step `1e−5`, `B = g(x_r)`.
pub fn linearize(
    f: &VectorField,
    g: &VectorField,
    x_r: &[f64],
) -> Result<(DMatrix<f64>, DMatrix<f64>)> {
    let n = f.dim();
    if x_r.len() != n || g.dim() != n {
        return Err(Error::Dimension(format!(
            "x_r has {} entries, f {}, g {}",
            x_r.len(),
            n,
            g.dim()
        )));
    }
    if !f.domain().contains(x_r) {
        return Err(Error::Invalid(format!(
            "x_r {x_r:?} lies outside the domain"
        )));
    }
    let h = 1e-5;
    let mut a = DMatrix::zeros(n, n);
    let mut xp = x_r.to_vec();
    for j in 0..n {
        xp[j] = x_r[j] + h;
        let fp = f.eval(&xp);
        xp[j] = x_r[j] - h;
        let fm = f.eval(&xp);
        xp[j] = x_r[j];
        for i in 0..n {
            a[(i, j)] = (fp[i] - fm[i]) / (2.0 * h);
        }
    }
    let gx = g.eval(x_r);
    if a.iter().chain(&gx).any(|v| !v.is_finite()) {
        return Err(Error::Integration {
            state: x_r.to_vec(),
        });
    }
    Ok((a, DMatrix::from_column_slice(n, 1, &gx)))
}

#[derive(Clone, Debug)]
pub struct Lqr {
    /// `m × n`, `u = −K x`.
    pub k: DMatrix<f64>,
    pub p: DMatrix<f64>,
    /// Closed-loop eigenvalues `(re, im)`.
    pub eigs: Vec<(f64, f64)>,
    pub iterations: usize,
    /// `trace(P_k)` for every Newton iterate.
    pub traces: Vec<f64>,
}

impl Lqr {
    pub fn max_real_eig(&self) -> f64 {
        self.eigs
            .iter()
            .map(|e| e.0)
            .fold(f64::NEG_INFINITY, f64::max)
    }
}

fn eigs(a: &DMatrix<f64>) -> Vec<(f64, f64)> {
    a.clone()
        .complex_eigenvalues()
        .iter()
        .map(|c| (c.re, c.im))
        .collect()
}

fn is_hurwitz(a: &DMatrix<f64>) -> bool {
    eigs(a).iter().all(|e| e.0 < 0.0)
}

/// Solves `F X + X Gᵀ = C` through the Kronecker form.
fn sylvester(f: &DMatrix<f64>, g: &DMatrix<f64>, c: &DMatrix<f64>) -> Option<DMatrix<f64>> {
    let n = f.nrows();
    let id = DMatrix::<f64>::identity(n, n);
    let l = id.kronecker(f) + g.kronecker(&id);
    let x = l.lu().solve(&DVector::from_column_slice(c.as_slice()))?;
    Some(DMatrix::from_column_slice(n, n, x.as_slice()))
}

/// Continuous-time LQR by Kleinman–Newton iteration.
///
/// The seed is `K = 0` when `A` is already Hurwitz, otherwise Bass's shifted
/// Lyapunov gain with a randomized shift.
pub fn lqr_gain(
    a: &DMatrix<f64>,
    b: &DMatrix<f64>,
    q: &DMatrix<f64>,
    r: &DMatrix<f64>,
) -> Result<Lqr> {
    let n = a.nrows();
    if a.ncols() != n
        || b.nrows() != n
        || q.shape() != (n, n)
        || r.shape() != (b.ncols(), b.ncols())
    {
        return Err(Error::Dimension(format!(
            "A {:?}, B {:?}, Q {:?}, R {:?}",
            a.shape(),
            b.shape(),
            q.shape(),
            r.shape()
        )));
    }
    let r_inv = r
        .clone()
        .try_inverse()
        .ok_or_else(|| Error::Invalid("R is singular".into()))?;
    let mut k = seed_gain(a, b)?;
    let mut traces = Vec::new();
    let mut p = DMatrix::zeros(n, n);
    let mut iterations = 0;
    for it in 0..100 {
        iterations = it + 1;
        let acl = a - b * &k;
        let rhs = -(q + k.transpose() * r * &k);
        p = sylvester(&acl.transpose(), &acl.transpose(), &rhs).ok_or(Error::Unstabilizable)?;
        p = (&p + p.transpose()) * 0.5;
        traces.push(p.trace());
        let next = &r_inv * b.transpose() * &p;
        let step = (&next - &k).norm();
        k = next;
        if step <= 1e-13 * (1.0 + k.norm()) {
            break;
        }
    }
    let closed = a - b * &k;
    let eigs = eigs(&closed);
    if eigs.iter().any(|e| !(e.0 < 0.0)) {
        return Err(Error::Unstabilizable);
    }
    Ok(Lqr {
        k,
        p,
        eigs,
        iterations,
        traces,
    })
}

fn seed_gain(a: &DMatrix<f64>, b: &DMatrix<f64>) -> Result<DMatrix<f64>> {
    let n = a.nrows();
    if is_hurwitz(a) {
        return Ok(DMatrix::zeros(b.ncols(), n));
    }
    let id = DMatrix::<f64>::identity(n, n);
    let bb2 = b * b.transpose() * 2.0;
    let mut rng = ChaCha8Rng::seed_from_u64(0x5eed);
    for _ in 0..20 {
        let beta = (a.norm() + 1.0) * (1.0 + rng.random_range(0.0..2.0));
        let f = a + &id * beta;
        let Some(z) = sylvester(&f, &f, &bb2) else {
            continue;
        };
        let Some(z_inv) = ((&z + z.transpose()) * 0.5).try_inverse() else {
            continue;
        };
        let k = b.transpose() * z_inv;
        if is_hurwitz(&(a - b * &k)) {
            return Ok(k);
        }
    }
    Err(Error::Unstabilizable)
}
