//! Finite-dimensional density feasibility problems.
//!
//! Synthesis looks for `v ≥ 0` and `|w| ≤ M v` with `−M0 v − M1 w = m` and
//! minimizes the hazard `uᵀ D v`; the problem is feasible when the minimum is at
//! most `γ`. Rows listed in [`SafetyProblem::absorbing`] are exempt from the
//! equality: they belong to basis functions centered at the target, where the
//! transported density leaves the domain of interest.

use crate::lp::{lp_solve, LpOptions, LpProblem, LpStatus};
use crate::{Error, Result};
use nalgebra::{DMatrix, DVector};

#[derive(Clone, Debug, PartialEq)]
pub struct SafetyProblem {
    pub m0: DMatrix<f64>,
    pub m1: DMatrix<f64>,
    pub m: DVector<f64>,
    pub d: DMatrix<f64>,
    pub u: DVector<f64>,
    pub gamma: f64,
    pub input_bound: f64,
    pub equality_tol: f64,
    pub absorbing: Vec<usize>,
}

impl SafetyProblem {
    pub fn len(&self) -> usize {
        self.m.len()
    }

    pub fn is_empty(&self) -> bool {
        self.m.is_empty()
    }

    /// `1e−6 · ‖m‖∞ · N`.
    pub fn default_equality_tol(m: &DVector<f64>) -> f64 {
        1e-6 * m.amax() * m.len() as f64
    }

    pub fn check(&self) -> Result<()> {
        let n = self.m.len();
        let sq = |a: &DMatrix<f64>| a.shape() == (n, n);
        if !(sq(&self.m0) && sq(&self.m1) && sq(&self.d) && self.u.len() == n) {
            return Err(Error::Dimension(format!(
                "m has {n} entries but M0 {:?}, M1 {:?}, D {:?}, u {}",
                self.m0.shape(),
                self.m1.shape(),
                self.d.shape(),
                self.u.len()
            )));
        }
        if !(self.gamma >= 0.0) {
            return Err(Error::Invalid(format!(
                "gamma must be nonnegative, got {}",
                self.gamma
            )));
        }
        if !(self.input_bound > 0.0) {
            return Err(Error::Invalid(format!(
                "input bound must be positive, got {}",
                self.input_bound
            )));
        }
        if !(self.equality_tol >= 0.0) {
            return Err(Error::Invalid(format!(
                "equality tolerance must be nonnegative, got {}",
                self.equality_tol
            )));
        }
        if let Some(&k) = self.absorbing.iter().find(|&&k| k >= n) {
            return Err(Error::Dimension(format!("absorbing row {k} out of range")));
        }
        Ok(())
    }

    /// Row indices that carry the equality constraint.
    pub fn constrained_rows(&self) -> Vec<usize> {
        (0..self.len())
            .filter(|k| !self.absorbing.contains(k))
            .collect()
    }
}

#[derive(Clone, Debug, PartialEq)]
pub struct DensityPair {
    pub v: DVector<f64>,
    pub w: DVector<f64>,
    /// `‖−M0v − M1w − m‖∞` over the constrained rows.
    pub residual_eq: f64,
    /// `uᵀ D v`.
    pub hazard_value: f64,
    pub lp_iterations: usize,
}

#[derive(Clone, Debug, PartialEq)]
pub enum Synthesis {
    Feasible(DensityPair),
    /// `best_gamma` is the smallest attainable hazard; it is infinite when the
    /// equality system itself has no solution within tolerance, in which case
    /// `min_residual` holds the smallest achievable `‖·‖∞` violation.
    Infeasible {
        best_gamma: f64,
        pair: Option<DensityPair>,
        min_residual: Option<f64>,
    },
}

impl Synthesis {
    pub fn is_feasible(&self) -> bool {
        matches!(self, Synthesis::Feasible(_))
    }

    pub fn pair(&self) -> Option<&DensityPair> {
        match self {
            Synthesis::Feasible(p) => Some(p),
            Synthesis::Infeasible { pair, .. } => pair.as_ref(),
        }
    }

    pub fn best_gamma(&self) -> f64 {
        match self {
            Synthesis::Feasible(p) => p.hazard_value,
            Synthesis::Infeasible { best_gamma, .. } => *best_gamma,
        }
    }
}

#[derive(Clone, Copy, Debug, PartialEq)]
pub struct Diagnostics {
    /// `‖−M0v − M1w − m‖∞` over the constrained rows.
    pub residual_eq: f64,
    /// The same residual over the absorbing rows.
    pub absorbed: f64,
    pub hazard_value: f64,
    pub min_v: f64,
    /// `max_i (|w_i| − M v_i)`.
    pub bound_violation: f64,
}

pub fn residual_report(problem: &SafetyProblem, v: &DVector<f64>, w: &DVector<f64>) -> Diagnostics {
    let r = -(&problem.m0 * v) - &problem.m1 * w - &problem.m;
    let (mut eq, mut absorbed) = (0.0f64, 0.0f64);
    for (k, x) in r.iter().enumerate() {
        if problem.absorbing.contains(&k) {
            absorbed = absorbed.max(x.abs());
        } else {
            eq = eq.max(x.abs());
        }
    }
    let bound_violation = w
        .iter()
        .zip(v.iter())
        .map(|(wi, vi)| wi.abs() - problem.input_bound * vi)
        .fold(f64::NEG_INFINITY, f64::max);
    Diagnostics {
        residual_eq: eq,
        absorbed,
        hazard_value: problem.u.dot(&(&problem.d * v)),
        min_v: v.min(),
        bound_violation: if v.is_empty() { 0.0 } else { bound_violation },
    }
}

/// Minimizes `uᵀDv` over the synthesis constraints and compares with `γ`.
///
/// The LP is posed in `a = v + w/M ≥ 0`, `b = v − w/M ≥ 0`, which turns the
/// bound `|w| ≤ M v` into plain nonnegativity.
pub fn synthesize(problem: &SafetyProblem, opts: &LpOptions) -> Result<Synthesis> {
    problem.check()?;
    let n = problem.len();
    let rows = problem.constrained_rows();
    let r = rows.len();
    let mb = problem.input_bound;
    let du = &problem.d * &problem.u;
    let mut a_eq = DMatrix::zeros(r, 2 * n + r);
    for (i, &row) in rows.iter().enumerate() {
        for j in 0..n {
            let (f, g) = (problem.m0[(row, j)], problem.m1[(row, j)]);
            a_eq[(i, j)] = -0.5 * f - 0.5 * mb * g;
            a_eq[(i, n + j)] = -0.5 * f + 0.5 * mb * g;
        }
        a_eq[(i, 2 * n + i)] = 1.0;
    }
    let b_eq = DVector::from_iterator(r, rows.iter().map(|&k| problem.m[k]));
    let c = DVector::from_iterator(
        2 * n + r,
        du.iter()
            .chain(du.iter())
            .map(|x| 0.5 * x)
            .chain(std::iter::repeat_n(0.0, r)),
    );
    let tol = problem.equality_tol;
    let bounds: Vec<(f64, f64)> = std::iter::repeat_n((0.0, f64::INFINITY), 2 * n)
        .chain(std::iter::repeat_n((-tol, tol), r))
        .collect();
    let lp = LpProblem::new(c)
        .eq(a_eq.clone(), b_eq.clone())
        .bounds(bounds);
    let sol = lp_solve(&lp, opts)?;
    match sol.status {
        LpStatus::Optimal => {
            let (a, b) = (sol.x.rows(0, n), sol.x.rows(n, n));
            let v = (a + b) * 0.5;
            let w = (a - b) * (0.5 * mb);
            Ok(classify(problem, v, w, sol.iterations))
        }
        LpStatus::Unbounded => Err(Error::Invalid(
            "synthesis LP reported unbounded; the hazard weights are not nonnegative".into(),
        )),
        LpStatus::Infeasible => {
            let min_residual = min_violation(&a_eq.columns(0, 2 * n).into_owned(), &b_eq, opts)?;
            Ok(Synthesis::Infeasible {
                best_gamma: f64::INFINITY,
                pair: None,
                min_residual: Some(min_residual),
            })
        }
    }
}

/// The autonomous case: `−M0 v = m`, `v ≥ 0`, `uᵀDv ≤ γ`.
#[allow(clippy::too_many_arguments)]
pub fn verify_autonomous(
    m0: &DMatrix<f64>,
    m: &DVector<f64>,
    d: &DMatrix<f64>,
    u: &DVector<f64>,
    gamma: f64,
    equality_tol: f64,
    absorbing: &[usize],
    opts: &LpOptions,
) -> Result<Synthesis> {
    let n = m.len();
    let problem = SafetyProblem {
        m0: m0.clone(),
        m1: DMatrix::zeros(n, n),
        m: m.clone(),
        d: d.clone(),
        u: u.clone(),
        gamma,
        input_bound: 1.0,
        equality_tol,
        absorbing: absorbing.to_vec(),
    };
    problem.check()?;
    let rows = problem.constrained_rows();
    let r = rows.len();
    let mut a_eq = DMatrix::zeros(r, n + r);
    for (i, &row) in rows.iter().enumerate() {
        for j in 0..n {
            a_eq[(i, j)] = -m0[(row, j)];
        }
        a_eq[(i, n + i)] = 1.0;
    }
    let b_eq = DVector::from_iterator(r, rows.iter().map(|&k| m[k]));
    let du = d * u;
    let c = DVector::from_iterator(n + r, du.iter().copied().chain(std::iter::repeat_n(0.0, r)));
    let bounds: Vec<(f64, f64)> = std::iter::repeat_n((0.0, f64::INFINITY), n)
        .chain(std::iter::repeat_n((-equality_tol, equality_tol), r))
        .collect();
    let sol = lp_solve(
        &LpProblem::new(c)
            .eq(a_eq.clone(), b_eq.clone())
            .bounds(bounds),
        opts,
    )?;
    match sol.status {
        LpStatus::Optimal => {
            let v = sol.x.rows(0, n).into_owned();
            Ok(classify(&problem, v, DVector::zeros(n), sol.iterations))
        }
        LpStatus::Unbounded => Err(Error::Invalid(
            "verification LP reported unbounded; the hazard weights are not nonnegative".into(),
        )),
        LpStatus::Infeasible => {
            let min_residual = min_violation(&a_eq.columns(0, n).into_owned(), &b_eq, opts)?;
            Ok(Synthesis::Infeasible {
                best_gamma: f64::INFINITY,
                pair: None,
                min_residual: Some(min_residual),
            })
        }
    }
}

fn classify(
    problem: &SafetyProblem,
    v: DVector<f64>,
    w: DVector<f64>,
    lp_iterations: usize,
) -> Synthesis {
    let diag = residual_report(problem, &v, &w);
    let pair = DensityPair {
        v,
        w,
        residual_eq: diag.residual_eq,
        hazard_value: diag.hazard_value,
        lp_iterations,
    };
    if pair.hazard_value <= problem.gamma {
        Synthesis::Feasible(pair)
    } else {
        Synthesis::Infeasible {
            best_gamma: pair.hazard_value,
            pair: Some(pair),
            min_residual: None,
        }
    }
}

/// Smallest `‖a x − b‖∞` over `x ≥ 0`.
fn min_violation(a: &DMatrix<f64>, b: &DVector<f64>, opts: &LpOptions) -> Result<f64> {
    let (r, n) = a.shape();
    // variables [x (n), t]; rows  a x − b ≤ t  and  −(a x − b) ≤ t
    let mut a_ub = DMatrix::zeros(2 * r, n + 1);
    let mut b_ub = DVector::zeros(2 * r);
    for i in 0..r {
        for j in 0..n {
            a_ub[(i, j)] = a[(i, j)];
            a_ub[(r + i, j)] = -a[(i, j)];
        }
        a_ub[(i, n)] = -1.0;
        a_ub[(r + i, n)] = -1.0;
        b_ub[i] = b[i];
        b_ub[r + i] = -b[i];
    }
    let mut c = DVector::zeros(n + 1);
    c[n] = 1.0;
    let sol = lp_solve(&LpProblem::new(c).ub(a_ub, b_ub), opts)?;
    Ok(if sol.status == LpStatus::Optimal {
        sol.objective
    } else {
        f64::INFINITY
    })
}

#[cfg(test)]
mod tests {
    use super::*;

    /// Three-cell chain 0 → 1 → 2 with cell 2 absorbing, a controllable shortcut 0 → 2.
    fn chain(hazard_mid: f64, gamma: f64) -> SafetyProblem {
        let m0 = DMatrix::from_row_slice(3, 3, &[-1.0, 0.0, 0.0, 1.0, -1.0, 0.0, 0.0, 1.0, 0.0]);
        let m1 = DMatrix::from_row_slice(3, 3, &[0.0, 0.0, 0.0, -0.5, 0.0, 0.0, 0.5, 0.0, 0.0]);
        SafetyProblem {
            m0,
            m1,
            m: DVector::from_column_slice(&[1.0, 0.0, 0.0]),
            d: DMatrix::identity(3, 3),
            u: DVector::from_column_slice(&[0.0, hazard_mid, 0.0]),
            gamma,
            input_bound: 1.0,
            equality_tol: 1e-9,
            absorbing: vec![2],
        }
    }

    fn opts() -> LpOptions {
        LpOptions {
            tol: 1e-10,
            ..LpOptions::default()
        }
    }

    #[test]
    fn zero_hazard_is_feasible() {
        let s = synthesize(&chain(0.0, 0.0), &opts()).unwrap();
        assert!(s.is_feasible());
        let p = s.pair().unwrap();
        assert!(p.hazard_value.abs() < 1e-8);
        assert!(p.residual_eq <= 1e-9);
    }

    #[test]
    fn controller_diverts_mass_around_hazard() {
        // v0 = 1 is forced; w0 = 1 sends 0.5 of the mass straight to the sink,
        // leaving v1 = 0.5 and a hazard of 0.5 · h.
        let s = synthesize(&chain(2.0, 10.0), &opts()).unwrap();
        let p = s.pair().unwrap();
        assert!((p.hazard_value - 1.0).abs() < 1e-6, "{}", p.hazard_value);
        assert!((p.w[0] - 1.0).abs() < 1e-6);
        let s = synthesize(&chain(2.0, 0.5), &opts()).unwrap();
        assert!(!s.is_feasible());
        assert!((s.best_gamma() - 1.0).abs() < 1e-6);
    }

    #[test]
    fn pair_respects_bound() {
        let pr = chain(2.0, 10.0);
        let p = synthesize(&pr, &opts()).unwrap().pair().unwrap().clone();
        let d = residual_report(&pr, &p.v, &p.w);
        assert!(d.bound_violation <= 1e-9 && d.min_v >= -1e-9);
        let mut bad = p.w.clone();
        bad[0] *= 2.0;
        assert!(residual_report(&pr, &p.v, &bad).bound_violation > 0.0);
    }

    #[test]
    fn zero_case_report() {
        let mut pr = chain(1.0, 1.0);
        pr.m.fill(0.0);
        let z = DVector::zeros(3);
        let d = residual_report(&pr, &z, &z);
        assert_eq!(
            (d.residual_eq, d.absorbed, d.hazard_value, d.bound_violation),
            (0.0, 0.0, 0.0, 0.0)
        );
    }

    #[test]
    fn inconsistent_equalities() {
        let mut pr = chain(1.0, 1.0);
        pr.absorbing.clear();
        let s = synthesize(&pr, &opts()).unwrap();
        match s {
            Synthesis::Infeasible {
                best_gamma,
                min_residual: Some(r),
                ..
            } => {
                assert!(best_gamma.is_infinite());
                assert!(r > 1e-3);
            }
            other => panic!("{other:?}"),
        }
    }

    #[test]
    fn autonomous_matches_vanishing_bound() {
        let pr = chain(2.0, 10.0);
        let a = verify_autonomous(
            &pr.m0,
            &pr.m,
            &pr.d,
            &pr.u,
            10.0,
            pr.equality_tol,
            &pr.absorbing,
            &opts(),
        )
        .unwrap();
        let tiny = SafetyProblem {
            input_bound: 1e-9,
            ..pr.clone()
        };
        let s = synthesize(&tiny, &opts()).unwrap();
        assert!((a.best_gamma() - 2.0).abs() < 1e-6);
        assert!((a.best_gamma() - s.best_gamma()).abs() < 1e-6);
    }

    #[test]
    fn huge_gamma_accepts() {
        let pr = chain(2.0, 1e9);
        let a = verify_autonomous(
            &pr.m0,
            &pr.m,
            &pr.d,
            &pr.u,
            1e9,
            pr.equality_tol,
            &pr.absorbing,
            &opts(),
        )
        .unwrap();
        assert!(a.is_feasible());
    }
}
