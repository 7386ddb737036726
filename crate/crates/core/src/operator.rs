//! EDMD and NSDMD approximations of the Koopman / Perron–Frobenius operators.
//!
//! NSDMD solves `min ‖Ĝ P̂ − Â‖_F` over matrices whose rows lie on the probability
//! simplex, with `Ĝ = G Λ⁻¹` and `Â = A Λ⁻¹`. The P-F matrix is `P = P̂ᵀ` and its
//! generator `M = (P̂ᵀ − I) / Δt`.

use crate::basis::RbfBasis;
use crate::dynamics::{generate_snapshots, Sampling, SnapshotSet, VectorField};
use crate::{Error, Result};
use nalgebra::{Cholesky, DMatrix, Dyn};

#[derive(Clone, Copy, Debug, PartialEq)]
pub struct NsdmdOptions {
    pub max_iter: usize,
    /// Stop once an accepted step lowers the objective by less than this fraction.
    pub rel_tol: f64,
    /// First jitter tried on Λ, relative to `trace(Λ)/N`.
    pub jitter: f64,
}

impl Default for NsdmdOptions {
    fn default() -> Self {
        NsdmdOptions {
            max_iter: 50_000,
            rel_tol: 1e-9,
            jitter: 1e-10,
        }
    }
}

#[derive(Clone, Debug, PartialEq)]
pub struct SolverReport {
    pub iterations: usize,
    pub objective: f64,
    pub constraint_violation: f64,
    pub converged: bool,
    pub restarts: usize,
    /// Final Lipschitz estimate after backtracking.
    pub lipschitz: f64,
}

#[derive(Clone, Debug, PartialEq)]
pub struct OperatorApprox {
    pub p_hat: DMatrix<f64>,
    pub p: DMatrix<f64>,
    pub m_gen: DMatrix<f64>,
    pub dt: f64,
    pub fit_residual: f64,
}

impl OperatorApprox {
    pub fn from_p_hat(p_hat: DMatrix<f64>, dt: f64, fit_residual: f64) -> Self {
        let n = p_hat.nrows();
        let p = p_hat.transpose();
        let m_gen = (&p - DMatrix::<f64>::identity(n, n)) / dt;
        OperatorApprox {
            p_hat,
            p,
            m_gen,
            dt,
            fit_residual,
        }
    }

    pub fn len(&self) -> usize {
        self.p_hat.nrows()
    }

    pub fn is_empty(&self) -> bool {
        self.p_hat.is_empty()
    }

    /// Largest of `max |row sum − 1|` and `max(−min entry, 0)` over `P̂`.
    pub fn markov_violation(&self) -> f64 {
        markov_violation(&self.p_hat)
    }

    /// Largest absolute column sum of the generator.
    pub fn generator_column_drift(&self) -> f64 {
        self.m_gen
            .column_iter()
            .map(|c| c.sum().abs())
            .fold(0.0, f64::max)
    }
}

pub fn markov_violation(p_hat: &DMatrix<f64>) -> f64 {
    let rows = p_hat
        .row_iter()
        .map(|r| (r.sum() - 1.0).abs())
        .fold(0.0, f64::max);
    let neg = (-p_hat.min()).max(0.0);
    rows.max(neg)
}

/// `G = (1/M) Σ Ψ(x)Ψ(x)ᵀ`, `A = (1/M) Σ Ψ(x)Ψ(y)ᵀ`.
pub fn gram_pair(snap: &SnapshotSet, basis: &RbfBasis) -> (DMatrix<f64>, DMatrix<f64>) {
    let px = basis.design(&snap.x);
    let py = basis.design(&snap.y);
    let m = snap.len() as f64;
    let pxt = px.transpose();
    (&pxt * &px / m, &pxt * &py / m)
}

#[derive(Clone, Debug)]
pub struct Edmd {
    pub k: DMatrix<f64>,
    /// Singular values of `G` dropped by the pseudo-inverse.
    pub truncated: usize,
}

/// `K = G⁺ A`, dropping singular values below `1e−10·σ_max`.
pub fn edmd(snap: &SnapshotSet, basis: &RbfBasis) -> Result<Edmd> {
    if snap.is_empty() {
        return Err(Error::NoSnapshots);
    }
    let (g, a) = gram_pair(snap, basis);
    let svd = g.svd(true, true);
    let cut = 1e-10 * svd.singular_values.max();
    let truncated = svd.singular_values.iter().filter(|&&s| s <= cut).count();
    if truncated > 0 {
        log::warn!(
            "edmd: pseudo-inverse dropped {truncated} of {} singular values",
            basis.len()
        );
    }
    let pinv = svd
        .pseudo_inverse(cut)
        .map_err(|e| Error::Invalid(e.to_string()))?;
    Ok(Edmd {
        k: pinv * a,
        truncated,
    })
}

/// Cholesky of `Λ`, adding diagonal jitter in decades if the plain factorization fails.
pub fn factor_lambda(lambda: &DMatrix<f64>, jitter: f64) -> Result<Cholesky<f64, Dyn>> {
    if let Some(c) = lambda.clone().cholesky() {
        return Ok(c);
    }
    let n = lambda.nrows();
    let base = lambda.trace() / n as f64;
    let mut j = jitter;
    while j <= 1e-4 {
        let mut l = lambda.clone();
        for i in 0..n {
            l[(i, i)] += j * base;
        }
        if let Some(c) = l.cholesky() {
            log::warn!("Λ needed diagonal jitter {:e}", j * base);
            return Ok(c);
        }
        j *= 10.0;
    }
    Err(Error::NotPositiveDefinite { jitter: j * base })
}

pub fn nsdmd(
    snap: &SnapshotSet,
    basis: &RbfBasis,
    opts: &NsdmdOptions,
) -> Result<(OperatorApprox, SolverReport)> {
    if snap.is_empty() {
        return Err(Error::NoSnapshots);
    }
    let (g, a) = gram_pair(snap, basis);
    let chol = factor_lambda(&basis.gram_lambda(), opts.jitter)?;
    let g_hat = chol.solve(&g).transpose();
    let a_hat = chol.solve(&a.transpose()).transpose();
    let (p_hat, report) = simplex_lsq(&g_hat, &a_hat, opts);
    if !report.converged {
        log::warn!(
            "nsdmd stopped after {} iterations without meeting the tolerance",
            report.iterations
        );
    }
    Ok((
        OperatorApprox::from_p_hat(p_hat, snap.dt, report.objective),
        report,
    ))
}

/// Euclidean projection onto `{z ≥ 0, Σ z = 1}`.
pub fn project_row_simplex(row: &[f64]) -> Vec<f64> {
    let mut out = row.to_vec();
    project_in_place(&mut out, &mut Vec::with_capacity(row.len()));
    out
}

fn project_in_place(row: &mut [f64], buf: &mut Vec<f64>) {
    buf.clear();
    buf.extend_from_slice(row);
    buf.sort_unstable_by(|a, b| b.total_cmp(a));
    let mut cum = 0.0;
    let mut theta = 0.0;
    for (k, &u) in buf.iter().enumerate() {
        cum += u;
        let t = (cum - 1.0) / (k + 1) as f64;
        if u - t > 0.0 {
            theta = t;
        }
    }
    for v in row.iter_mut() {
        *v = (*v - theta).max(0.0);
    }
}

fn project_rows(m: &mut DMatrix<f64>) {
    let (r, c) = m.shape();
    let mut row = vec![0.0; c];
    let mut buf = Vec::with_capacity(c);
    for i in 0..r {
        for j in 0..c {
            row[j] = m[(i, j)];
        }
        project_in_place(&mut row, &mut buf);
        for j in 0..c {
            m[(i, j)] = row[j];
        }
    }
}

fn norm2_estimate(g: &DMatrix<f64>) -> f64 {
    let n = g.ncols();
    let mut v = nalgebra::DVector::from_fn(n, |i, _| 1.0 + (i % 7) as f64 * 0.1);
    v /= v.norm();
    let mut lam = 0.0;
    for _ in 0..100 {
        let w = g.tr_mul(&(g * &v));
        let nw = w.norm();
        if nw == 0.0 {
            return 0.0;
        }
        let next = v.dot(&w);
        v = w / nw;
        if (next - lam).abs() <= 1e-10 * next {
            lam = next;
            break;
        }
        lam = next;
    }
    lam
}

/// Accelerated projected gradient for `min ‖Ĝ P − Â‖²_F` over row-stochastic `P`,
/// started at the identity, with backtracking on the step and momentum restart
/// whenever the objective would increase.
pub fn simplex_lsq(
    g_hat: &DMatrix<f64>,
    a_hat: &DMatrix<f64>,
    opts: &NsdmdOptions,
) -> (DMatrix<f64>, SolverReport) {
    let n = g_hat.ncols();
    let half_sq = |r: &DMatrix<f64>| 0.5 * r.norm_squared();
    let mut lip = 1.01 * norm2_estimate(g_hat);
    if lip <= 0.0 {
        lip = 1.0;
    }
    let g_hat_t = g_hat.transpose();
    let mut p = DMatrix::<f64>::identity(n, n);
    let mut rp = g_hat * &p - a_hat;
    let mut fp = half_sq(&rp);
    let mut z = p.clone();
    let mut rz = rp.clone();
    let mut t = 1.0f64;
    let mut iterations = 0;
    let mut restarts = 0;
    let mut converged = fp <= f64::MIN_POSITIVE;
    while !converged && iterations < opts.max_iter {
        iterations += 1;
        let grad = &g_hat_t * &rz;
        let fz = half_sq(&rz);
        let (pn, rn, fnew) = loop {
            let mut cand = &z - &grad / lip;
            project_rows(&mut cand);
            let r = g_hat * &cand - a_hat;
            let f = half_sq(&r);
            let d = &cand - &z;
            if f <= fz + grad.dot(&d) + 0.5 * lip * d.norm_squared() * (1.0 + 1e-12) + 1e-300 {
                break (cand, r, f);
            }
            lip *= 2.0;
        };
        if fnew > fp {
            restarts += 1;
            z.copy_from(&p);
            rz.copy_from(&rp);
            t = 1.0;
            continue;
        }
        let t_next = 0.5 * (1.0 + (1.0 + 4.0 * t * t).sqrt());
        let beta = (t - 1.0) / t_next;
        z = &pn + (&pn - &p) * beta;
        rz = &rn + (&rn - &rp) * beta;
        let decrease = fp - fnew;
        p = pn;
        rp = rn;
        fp = fnew;
        t = t_next;
        if decrease <= opts.rel_tol * (fp + decrease) || fp <= f64::MIN_POSITIVE {
            converged = true;
        }
    }
    let report = SolverReport {
        iterations,
        objective: 2.0 * fp,
        constraint_violation: markov_violation(&p),
        converged,
        restarts,
        lipschitz: lip,
    };
    (p, report)
}

/// Learned generators for the drift `f` and the input field `g`.
#[derive(Clone, Debug)]
pub struct Generators {
    pub drift: OperatorApprox,
    pub input: OperatorApprox,
    pub drift_report: SolverReport,
    pub input_report: SolverReport,
    pub drift_snapshots: usize,
    pub input_snapshots: usize,
}

impl Generators {
    pub fn m0(&self) -> &DMatrix<f64> {
        &self.drift.m_gen
    }

    pub fn m1(&self) -> &DMatrix<f64> {
        &self.input.m_gen
    }
}

pub fn learn_generators(
    f: &VectorField,
    g: &VectorField,
    basis: &RbfBasis,
    sampling: &Sampling,
    dt: f64,
    opts: &NsdmdOptions,
) -> Result<Generators> {
    let sf = generate_snapshots(f, sampling, dt).map_err(Error::stage("drift snapshots"))?;
    let (drift, drift_report) = nsdmd(&sf, basis, opts).map_err(Error::stage("drift nsdmd"))?;
    let sg = generate_snapshots(g, sampling, dt).map_err(Error::stage("input snapshots"))?;
    let (input, input_report) = nsdmd(&sg, basis, opts).map_err(Error::stage("input nsdmd"))?;
    Ok(Generators {
        drift,
        input,
        drift_report,
        input_report,
        drift_snapshots: sf.len(),
        input_snapshots: sg.len(),
    })
}
