//! Dense linear programming by a homogeneous self-dual interior point method
//! with Mehrotra predictor–corrector steps.
//!
//! [`lp_solve`] accepts equalities, `≤` rows and per-variable bounds, and reduces
//! them to `min cᵀx, Ax = b, 0 ≤ x ≤ u` with `u` possibly infinite. Finite upper
//! bounds are kept out of the normal matrix by eliminating their slack block.

use crate::{Error, Result};
use nalgebra::{Cholesky, DMatrix, DVector, Dyn};

#[derive(Clone, Debug, PartialEq)]
pub struct LpProblem {
    pub c: DVector<f64>,
    pub a_eq: DMatrix<f64>,
    pub b_eq: DVector<f64>,
    pub a_ub: DMatrix<f64>,
    pub b_ub: DVector<f64>,
    /// `(lo, hi)` per variable; either side may be infinite.
    pub bounds: Vec<(f64, f64)>,
}

impl LpProblem {
    /// `min cᵀx` over `x ≥ 0` with no other constraints.
    pub fn new(c: DVector<f64>) -> Self {
        let n = c.len();
        LpProblem {
            c,
            a_eq: DMatrix::zeros(0, n),
            b_eq: DVector::zeros(0),
            a_ub: DMatrix::zeros(0, n),
            b_ub: DVector::zeros(0),
            bounds: vec![(0.0, f64::INFINITY); n],
        }
    }

    pub fn eq(mut self, a: DMatrix<f64>, b: DVector<f64>) -> Self {
        self.a_eq = a;
        self.b_eq = b;
        self
    }

    pub fn ub(mut self, a: DMatrix<f64>, b: DVector<f64>) -> Self {
        self.a_ub = a;
        self.b_ub = b;
        self
    }

    pub fn bounds(mut self, bounds: Vec<(f64, f64)>) -> Self {
        self.bounds = bounds;
        self
    }

    fn check(&self) -> Result<()> {
        let n = self.c.len();
        let bad = |s: String| Err(Error::Dimension(s));
        if self.a_eq.ncols() != n || self.a_eq.nrows() != self.b_eq.len() {
            return bad(format!(
                "a_eq is {:?}, b_eq has {}, n = {n}",
                self.a_eq.shape(),
                self.b_eq.len()
            ));
        }
        if self.a_ub.ncols() != n || self.a_ub.nrows() != self.b_ub.len() {
            return bad(format!(
                "a_ub is {:?}, b_ub has {}, n = {n}",
                self.a_ub.shape(),
                self.b_ub.len()
            ));
        }
        if self.bounds.len() != n {
            return bad(format!("{} bounds for {n} variables", self.bounds.len()));
        }
        Ok(())
    }
}

#[derive(Clone, Copy, Debug, PartialEq)]
pub struct LpOptions {
    pub tol: f64,
    pub max_iter: usize,
    /// Refinement sweeps on each normal-equation solve.
    pub refine: usize,
}

impl Default for LpOptions {
    fn default() -> Self {
        LpOptions {
            tol: 1e-8,
            max_iter: 200,
            refine: 2,
        }
    }
}

#[derive(Clone, Copy, Debug, PartialEq, Eq)]
pub enum LpStatus {
    Optimal,
    Infeasible,
    Unbounded,
}

/// Relative KKT residuals at termination.
#[derive(Clone, Copy, Debug, Default, PartialEq)]
pub struct Residuals {
    pub primal: f64,
    pub dual: f64,
    pub gap: f64,
}

#[derive(Clone, Debug, PartialEq)]
pub struct LpSolution {
    pub status: LpStatus,
    /// Optimal point in the caller's variables; empty unless optimal.
    pub x: DVector<f64>,
    pub objective: f64,
    pub iterations: usize,
    pub residuals: Residuals,
}

enum Map {
    /// `x = shift + sign · x̃[col]`
    Single { col: usize, shift: f64, sign: f64 },
    /// `x = x̃[pos] − x̃[neg]`
    Split { pos: usize, neg: usize },
}

pub fn lp_solve(p: &LpProblem, opts: &LpOptions) -> Result<LpSolution> {
    p.check()?;
    let n = p.c.len();
    let infeasible = |iterations| LpSolution {
        status: LpStatus::Infeasible,
        x: DVector::zeros(0),
        objective: f64::INFINITY,
        iterations,
        residuals: Residuals::default(),
    };
    if p.bounds.iter().any(|(l, h)| {
        l > h || l.is_nan() || h.is_nan() || *l == f64::INFINITY || *h == f64::NEG_INFINITY
    }) {
        return Ok(infeasible(0));
    }
    let mut maps = Vec::with_capacity(n);
    let mut cols = 0;
    let mut ub = Vec::new();
    for &(lo, hi) in &p.bounds {
        if lo.is_finite() {
            maps.push(Map::Single {
                col: cols,
                shift: lo,
                sign: 1.0,
            });
            ub.push(hi - lo);
            cols += 1;
        } else if hi.is_finite() {
            maps.push(Map::Single {
                col: cols,
                shift: hi,
                sign: -1.0,
            });
            ub.push(f64::INFINITY);
            cols += 1;
        } else {
            maps.push(Map::Split {
                pos: cols,
                neg: cols + 1,
            });
            ub.extend([f64::INFINITY, f64::INFINITY]);
            cols += 2;
        }
    }
    let (meq, mub) = (p.a_eq.nrows(), p.a_ub.nrows());
    let m = meq + mub;
    let nt = cols + mub;
    ub.extend(std::iter::repeat_n(f64::INFINITY, mub));
    let mut a = DMatrix::zeros(m, nt);
    let mut c = DVector::zeros(nt);
    let mut b = DVector::zeros(m);
    b.rows_mut(0, meq).copy_from(&p.b_eq);
    b.rows_mut(meq, mub).copy_from(&p.b_ub);
    let mut offset = 0.0;
    for (j, map) in maps.iter().enumerate() {
        match *map {
            Map::Single { col, shift, sign } => {
                c[col] = sign * p.c[j];
                offset += p.c[j] * shift;
                for i in 0..meq {
                    a[(i, col)] = sign * p.a_eq[(i, j)];
                    b[i] -= p.a_eq[(i, j)] * shift;
                }
                for i in 0..mub {
                    a[(meq + i, col)] = sign * p.a_ub[(i, j)];
                    b[meq + i] -= p.a_ub[(i, j)] * shift;
                }
            }
            Map::Split { pos, neg } => {
                c[pos] = p.c[j];
                c[neg] = -p.c[j];
                for i in 0..meq {
                    a[(i, pos)] = p.a_eq[(i, j)];
                    a[(i, neg)] = -p.a_eq[(i, j)];
                }
                for i in 0..mub {
                    a[(meq + i, pos)] = p.a_ub[(i, j)];
                    a[(meq + i, neg)] = -p.a_ub[(i, j)];
                }
            }
        }
    }
    for i in 0..mub {
        a[(meq + i, cols + i)] = 1.0;
    }
    let out = solve_standard(&c, &a, &b, &ub, opts)?;
    if out.status != LpStatus::Optimal {
        let objective = if out.status == LpStatus::Unbounded {
            f64::NEG_INFINITY
        } else {
            f64::INFINITY
        };
        return Ok(LpSolution {
            status: out.status,
            x: DVector::zeros(0),
            objective,
            iterations: out.iterations,
            residuals: out.residuals,
        });
    }
    let xt = &out.x;
    let x = DVector::from_iterator(
        n,
        maps.iter().map(|m| match *m {
            Map::Single { col, shift, sign } => shift + sign * xt[col],
            Map::Split { pos, neg } => xt[pos] - xt[neg],
        }),
    );
    let objective = p.c.dot(&x);
    debug_assert!((objective - (out.objective + offset)).abs() <= 1e-6 * (1.0 + objective.abs()));
    Ok(LpSolution {
        status: LpStatus::Optimal,
        x,
        objective,
        iterations: out.iterations,
        residuals: out.residuals,
    })
}

/// Iterations without a new best iterate before giving up.
const STALL: usize = 30;
/// A stalled run is still accepted when every residual is within this multiple of `tol`.
const STALL_ACCEPT: f64 = 100.0;

/// Solves `min cᵀx, Ax = b, 0 ≤ x ≤ ub` (entries of `ub` may be `+∞`).
pub fn solve_standard(
    c: &DVector<f64>,
    a: &DMatrix<f64>,
    b: &DVector<f64>,
    ub: &[f64],
    opts: &LpOptions,
) -> Result<LpSolution> {
    Hsd::new(c, a, b, ub).run(opts)
}

struct Hsd<'a> {
    c: &'a DVector<f64>,
    a: &'a DMatrix<f64>,
    b: &'a DVector<f64>,
    /// Indices of upper-bounded variables.
    bounded: Vec<usize>,
    u: DVector<f64>,
    m: usize,
    n: usize,
}

struct Factor {
    chol: Cholesky<f64, Dyn>,
    dx: DVector<f64>,
    dw: DVector<f64>,
}

impl<'a> Hsd<'a> {
    fn new(c: &'a DVector<f64>, a: &'a DMatrix<f64>, b: &'a DVector<f64>, ub: &[f64]) -> Self {
        let bounded: Vec<usize> = (0..ub.len()).filter(|&j| ub[j].is_finite()).collect();
        let u = DVector::from_iterator(bounded.len(), bounded.iter().map(|&j| ub[j]));
        Hsd {
            c,
            a,
            b,
            bounded,
            u,
            m: a.nrows(),
            n: a.ncols(),
        }
    }

    fn k(&self) -> usize {
        self.bounded.len()
    }

    /// `[A x ; x_B + w]` for `xf = [x ; w]`.
    fn afull(&self, xf: &DVector<f64>) -> DVector<f64> {
        let x = xf.rows(0, self.n);
        let mut out = DVector::zeros(self.m + self.k());
        out.rows_mut(0, self.m).copy_from(&(self.a * x));
        for (i, &j) in self.bounded.iter().enumerate() {
            out[self.m + i] = xf[j] + xf[self.n + i];
        }
        out
    }

    /// `[Aᵀ y₁ + E y₂ ; y₂]`.
    fn afull_t(&self, y: &DVector<f64>) -> DVector<f64> {
        let mut out = DVector::zeros(self.n + self.k());
        out.rows_mut(0, self.n)
            .copy_from(&self.a.tr_mul(&y.rows(0, self.m)));
        for (i, &j) in self.bounded.iter().enumerate() {
            out[j] += y[self.m + i];
            out[self.n + i] = y[self.m + i];
        }
        out
    }

    fn factor(&self, d: &DVector<f64>) -> Result<Factor> {
        let dx = d.rows(0, self.n).into_owned();
        let dw = d.rows(self.n, self.k()).into_owned();
        let mut dp = dx.clone();
        for (i, &j) in self.bounded.iter().enumerate() {
            dp[j] = dx[j] * dw[i] / (dx[j] + dw[i]);
        }
        let mut scaled = self.a.clone();
        for (j, mut col) in scaled.column_iter_mut().enumerate() {
            col *= dp[j].sqrt();
        }
        let s = &scaled * scaled.transpose();
        let base = (s.trace() / self.m.max(1) as f64).max(1.0);
        let mut reg = 1e-14;
        loop {
            let mut sr = s.clone();
            for i in 0..self.m {
                sr[(i, i)] += reg * base;
            }
            if let Some(chol) = sr.cholesky() {
                return Ok(Factor { chol, dx, dw });
            }
            reg *= 100.0;
            if reg > 1e-4 {
                return Err(Error::NotPositiveDefinite { jitter: reg * base });
            }
        }
    }

    /// Solves `Afull · diag(d) · Afullᵀ v = r` through the Schur complement on the bound block.
    fn nsolve(&self, f: &Factor, r: &DVector<f64>) -> DVector<f64> {
        let k = self.k();
        let r1 = r.rows(0, self.m);
        let r2 = r.rows(self.m, k);
        let mut shifted = DVector::zeros(self.n);
        for (i, &j) in self.bounded.iter().enumerate() {
            shifted[j] = f.dx[j] * r2[i] / (f.dx[j] + f.dw[i]);
        }
        let t = r1 - self.a * shifted;
        let v1 = f.chol.solve(&t);
        let atv = self.a.tr_mul(&v1);
        let mut out = DVector::zeros(self.m + k);
        out.rows_mut(0, self.m).copy_from(&v1);
        for (i, &j) in self.bounded.iter().enumerate() {
            out[self.m + i] = (r2[i] - f.dx[j] * atv[j]) / (f.dx[j] + f.dw[i]);
        }
        out
    }

    /// Solves `[−D⁻¹ Aᵀ; A 0] [dx; dy] = [r₁; r₂]`.
    fn symsolve(
        &self,
        f: &Factor,
        d: &DVector<f64>,
        r1: &DVector<f64>,
        r2: &DVector<f64>,
        refine: usize,
    ) -> (DVector<f64>, DVector<f64>) {
        let rhs = r2 + self.afull(&d.component_mul(r1));
        let mut v = self.nsolve(f, &rhs);
        for _ in 0..refine {
            let res = &rhs - self.afull(&d.component_mul(&self.afull_t(&v)));
            v += self.nsolve(f, &res);
        }
        let dx = d.component_mul(&(self.afull_t(&v) - r1));
        (dx, v)
    }

    fn run(&self, opts: &LpOptions) -> Result<LpSolution> {
        let nn = self.n + self.k();
        let mut bf = DVector::zeros(self.m + self.k());
        bf.rows_mut(0, self.m).copy_from(self.b);
        bf.rows_mut(self.m, self.k()).copy_from(&self.u);
        let mut cf = DVector::zeros(nn);
        cf.rows_mut(0, self.n).copy_from(self.c);

        let mut x = DVector::from_element(nn, 1.0);
        let mut z = DVector::from_element(nn, 1.0);
        let mut y = DVector::zeros(self.m + self.k());
        let (mut tau, mut kap) = (1.0f64, 1.0f64);

        let rp0 = (&bf - self.afull(&x)).norm().max(1.0);
        let rd0 = (&cf - self.afull_t(&y) - &z).norm().max(1.0);
        let rg0 = (cf.dot(&x) - bf.dot(&y) + kap).abs().max(1.0);
        let mu0 = (x.dot(&z) + tau * kap) / (nn + 1) as f64;
        let tol = opts.tol;
        let mut res = Residuals::default();
        // once μ is tiny the normal equations lose accuracy and the residuals can
        // drift back up, so the best iterate seen so far is kept
        let mut best: Option<(f64, DVector<f64>, Residuals, usize)> = None;

        for it in 0..opts.max_iter {
            let rp = &bf * tau - self.afull(&x);
            let rd = &cf * tau - self.afull_t(&y) - &z;
            let rg = cf.dot(&x) - bf.dot(&y) + kap;
            let mu = (x.dot(&z) + tau * kap) / (nn + 1) as f64;
            let rho_p = rp.norm() / rp0;
            let rho_d = rd.norm() / rd0;
            let rho_g = rg.abs() / rg0;
            let rho_a = (cf.dot(&x) - bf.dot(&y)).abs() / (tau + bf.dot(&y).abs());
            res = Residuals {
                primal: rho_p,
                dual: rho_d,
                gap: rho_a,
            };
            if rho_p < tol && rho_d < tol && rho_a < tol {
                let xs = x.rows(0, self.n) / tau;
                let objective = self.c.dot(&xs);
                return Ok(LpSolution {
                    status: LpStatus::Optimal,
                    x: xs,
                    objective,
                    iterations: it,
                    residuals: res,
                });
            }
            if ((rho_p < tol && rho_d < tol && rho_g < tol) || mu / mu0 < tol)
                && tau < tol * kap.max(1.0)
            {
                let status = if bf.dot(&y) > tol {
                    LpStatus::Infeasible
                } else {
                    LpStatus::Unbounded
                };
                return Ok(LpSolution {
                    status,
                    x: DVector::zeros(0),
                    objective: f64::NAN,
                    iterations: it,
                    residuals: res,
                });
            }
            let merit = rho_p.max(rho_d).max(rho_a);
            if best.as_ref().is_none_or(|b| merit < b.0) {
                best = Some((merit, x.rows(0, self.n) / tau, res, it));
            }
            let (bm, bit) = best.as_ref().map(|b| (b.0, b.3)).expect("set above");
            if it >= bit + STALL || mu / mu0 < tol * tol {
                if bm <= STALL_ACCEPT * tol {
                    let (_, xs, r, _) = best.expect("set above");
                    log::warn!("LP stalled at iteration {it}; returning iterate {bit} with residuals {r:?}");
                    let objective = self.c.dot(&xs);
                    return Ok(LpSolution {
                        status: LpStatus::Optimal,
                        x: xs,
                        objective,
                        iterations: it,
                        residuals: r,
                    });
                }
                if it >= bit + STALL {
                    break;
                }
            }
            let d = x.component_div(&z);
            let f = self.factor(&d)?;
            let (p, q) = self.symsolve(&f, &d, &cf, &bf, opts.refine);
            let denom_base = -cf.dot(&p) + bf.dot(&q);
            let delta =
                |rp: &DVector<f64>, rd: &DVector<f64>, rg: f64, rxs: &DVector<f64>, rtk: f64| {
                    let (uu, vv) =
                        self.symsolve(&f, &d, &(rd - rxs.component_div(&x)), rp, opts.refine);
                    let dtau =
                        (rg + rtk / tau - (-cf.dot(&uu) + bf.dot(&vv))) / (kap / tau + denom_base);
                    let dx = uu + &p * dtau;
                    let dy = vv + &q * dtau;
                    let dz = (rxs - z.component_mul(&dx)).component_div(&x);
                    let dk = (rtk - kap * dtau) / tau;
                    (dx, dy, dz, dtau, dk)
                };
            let step = |dx: &DVector<f64>, dz: &DVector<f64>, dtau: f64, dk: f64| {
                let mut a = 1.0f64;
                for (v, dv) in x.iter().zip(dx.iter()).chain(z.iter().zip(dz.iter())) {
                    if *dv < 0.0 {
                        a = a.min(-v / dv);
                    }
                }
                if dtau < 0.0 {
                    a = a.min(-tau / dtau);
                }
                if dk < 0.0 {
                    a = a.min(-kap / dk);
                }
                a
            };
            let xz = -x.component_mul(&z);
            let (dx, _, dz, dtau, dk) = delta(&rp, &rd, rg, &xz, -tau * kap);
            let alpha = step(&dx, &dz, dtau, dk);
            let gamma = (1.0 - alpha).powi(2) * (1.0 - alpha).min(0.1);
            let eta = 1.0 - gamma;
            let rxs = &xz - dx.component_mul(&dz) + DVector::from_element(nn, gamma * mu);
            let rtk = gamma * mu - tau * kap - dtau * dk;
            let (dx, dy, dz, dtau, dk) = delta(&(&rp * eta), &(&rd * eta), rg * eta, &rxs, rtk);
            let alpha = 0.99995 * step(&dx, &dz, dtau, dk);
            log::trace!("it {it} primal {rho_p:.2e} dual {rho_d:.2e} gap {rho_a:.2e} mu {mu:.2e} tau {tau:.2e} kappa {kap:.2e} alpha {alpha:.3}");
            x += dx * alpha;
            y += dy * alpha;
            z += dz * alpha;
            tau += alpha * dtau;
            kap += alpha * dk;
        }
        let r = best.map_or(res, |b| b.2);
        Err(Error::LpNotConverged {
            iterations: opts.max_iter,
            primal: r.primal,
            dual: r.dual,
            gap: r.gap,
        })
    }
}

#[cfg(test)]
mod tests {
    use super::*;

    fn v(s: &[f64]) -> DVector<f64> {
        DVector::from_column_slice(s)
    }

    #[test]
    fn min_x_nonneg() {
        let s = lp_solve(&LpProblem::new(v(&[1.0])), &LpOptions::default()).unwrap();
        assert_eq!(s.status, LpStatus::Optimal);
        assert!(s.x[0].abs() < 1e-7 && s.objective.abs() < 1e-7);
    }

    #[test]
    fn min_neg_x_unbounded() {
        let s = lp_solve(&LpProblem::new(v(&[-1.0])), &LpOptions::default()).unwrap();
        assert_eq!(s.status, LpStatus::Unbounded);
    }

    #[test]
    fn simplex_sum() {
        let p = LpProblem::new(v(&[1.0, 1.0]))
            .eq(DMatrix::from_row_slice(1, 2, &[1.0, 1.0]), v(&[1.0]));
        let s = lp_solve(&p, &LpOptions::default()).unwrap();
        assert_eq!(s.status, LpStatus::Optimal);
        assert!((s.objective - 1.0).abs() < 1e-7);
        assert!(s.x.iter().all(|&x| x >= -1e-9) && (s.x.sum() - 1.0).abs() < 1e-7);
    }

    #[test]
    fn infeasible_detected() {
        let p = LpProblem::new(v(&[1.0, 1.0]))
            .eq(DMatrix::from_row_slice(1, 2, &[1.0, 1.0]), v(&[-1.0]));
        assert_eq!(
            lp_solve(&p, &LpOptions::default()).unwrap().status,
            LpStatus::Infeasible
        );
        let crossed = LpProblem::new(v(&[1.0])).bounds(vec![(2.0, 1.0)]);
        assert_eq!(
            lp_solve(&crossed, &LpOptions::default()).unwrap().status,
            LpStatus::Infeasible
        );
    }

    #[test]
    fn upper_bounds_free_and_inequalities() {
        // min −x1 − 2x2 + x3, x1 + x2 ≤ 3, x1 ∈ [0, 2], x2 ∈ [−1, 1.5], x3 free with x3 = x1 − 1
        let p = LpProblem::new(v(&[-1.0, -2.0, 1.0]))
            .ub(DMatrix::from_row_slice(1, 3, &[1.0, 1.0, 0.0]), v(&[3.0]))
            .eq(DMatrix::from_row_slice(1, 3, &[1.0, 0.0, -1.0]), v(&[1.0]))
            .bounds(vec![
                (0.0, 2.0),
                (-1.0, 1.5),
                (f64::NEG_INFINITY, f64::INFINITY),
            ]);
        let s = lp_solve(&p, &LpOptions::default()).unwrap();
        assert_eq!(s.status, LpStatus::Optimal);
        // x2 = 1.5, x1 = 1.5 (budget), x3 = 0.5: −1.5 − 3 + 0.5 = −4
        assert!((s.objective + 4.0).abs() < 1e-6, "{}", s.objective);
        assert!((s.x[1] - 1.5).abs() < 1e-6);
    }

    #[test]
    fn upper_only_bound() {
        let p = LpProblem::new(v(&[-1.0])).bounds(vec![(f64::NEG_INFINITY, 4.0)]);
        let s = lp_solve(&p, &LpOptions::default()).unwrap();
        assert!((s.x[0] - 4.0).abs() < 1e-6);
    }

    #[test]
    fn deterministic() {
        let p = LpProblem::new(v(&[1.0, 2.0, 0.5])).eq(
            DMatrix::from_row_slice(2, 3, &[1.0, 1.0, 1.0, 0.0, 1.0, -1.0]),
            v(&[2.0, 0.5]),
        );
        let a = lp_solve(&p, &LpOptions::default()).unwrap();
        let b = lp_solve(&p, &LpOptions::default()).unwrap();
        assert_eq!(a, b);
    }
}
