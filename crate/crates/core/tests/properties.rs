use nalgebra::{DMatrix, DVector};
use pfnav::basis::{ProjectOptions, QuadGrid, Role};
use pfnav::controller::{lqr_gain, NavigationController};
use pfnav::dynamics::{flow_step, generate_snapshots, simulate, Sampling};
use pfnav::lp::{lp_solve, LpOptions, LpProblem, LpStatus};
use pfnav::operator::project_row_simplex;
use pfnav::safety::{collision_probability_mc, HazardModel, HazardPiece, McOptions, Mu0Sampler};
use pfnav::synthesis::DensityPair;
use pfnav::{BoxDomain, RbfBasis, Region, VectorField};
use proptest::prelude::*;
use std::sync::Arc;

fn plane(r: f64) -> BoxDomain {
    BoxDomain::new(vec![-r, -r], vec![r, r]).unwrap()
}

fn mat2() -> impl Strategy<Value = DMatrix<f64>> {
    prop::array::uniform4(-2.0..2.0f64).prop_map(|a| DMatrix::from_row_slice(2, 2, &a))
}

fn one_step_error(a: &DMatrix<f64>, x0: &[f64], dt: f64) -> f64 {
    let f = VectorField::linear(plane(1e6), a.clone());
    let got = flow_step(&f, x0, dt).unwrap();
    let exact = (a * dt).exp() * DVector::from_column_slice(x0);
    ((got[0] - exact[0]).powi(2) + (got[1] - exact[1]).powi(2)).sqrt()
}

/// 2–5 centers in `[-1, 1]²`.
fn small_basis() -> impl Strategy<Value = RbfBasis> {
    (
        prop::collection::vec(prop::array::uniform2(-1.0..1.0f64), 2..6),
        0.2..0.5f64,
    )
        .prop_map(|(c, s)| RbfBasis::new(c.into_iter().map(|p| p.to_vec()).collect(), s).unwrap())
}

/// Basic feasible solutions of `a x = b, x ≥ 0`.
fn vertices(a: &DMatrix<f64>, b: &DVector<f64>) -> Vec<DVector<f64>> {
    let (m, n) = a.shape();
    let mut out = Vec::new();
    let mut pick = (0..m).collect::<Vec<_>>();
    loop {
        let sub = DMatrix::from_fn(m, m, |i, j| a[(i, pick[j])]);
        if sub.determinant().abs() > 1e-9 {
            if let Some(xb) = sub.lu().solve(b) {
                if xb.iter().all(|&v| v >= -1e-10) {
                    let mut x = DVector::zeros(n);
                    for (j, &c) in pick.iter().enumerate() {
                        x[c] = xb[j].max(0.0);
                    }
                    out.push(x);
                }
            }
        }
        // next m-combination of 0..n
        let mut i = m;
        while i > 0 && pick[i - 1] == n - m + i - 1 {
            i -= 1;
        }
        if i == 0 {
            return out;
        }
        pick[i - 1] += 1;
        for j in i..m {
            pick[j] = pick[j - 1] + 1;
        }
    }
}

fn mc(model: &HazardModel, seed: u64) -> pfnav::safety::McReport {
    let dom = plane(5.0);
    let f = VectorField::constant(dom.clone(), vec![1.0, 0.2]);
    let x0 = Mu0Sampler::new(Region::boxed(&[-4.0, -1.0], &[-3.0, 1.0]), &dom);
    let opts = McOptions {
        horizon: 6.0,
        dt: 0.05,
        n_samples: 40,
        seed,
        target: None,
    };
    collision_probability_mc(&f, &x0, model, &opts).unwrap()
}

fn hazard_box() -> impl Strategy<Value = (Vec<f64>, Vec<f64>)> {
    (
        prop::array::uniform2(-4.0..3.0f64),
        prop::array::uniform2(0.2..2.0f64),
    )
        .prop_map(|(lo, w)| (lo.to_vec(), vec![lo[0] + w[0], lo[1] + w[1]]))
}

proptest! {
    #![proptest_config(ProptestConfig { cases: 48, ..ProptestConfig::default() })]

    #[test]
    fn rk4_local_error_is_fifth_order(a in mat2(), x0 in prop::array::uniform2(-1.0..1.0f64)) {
        let e1 = one_step_error(&a, &x0, 0.1);
        let e2 = one_step_error(&a, &x0, 0.05);
        prop_assume!(e2 > 1e-13);
        let ratio = e1 / e2;
        prop_assert!((28.0..=36.0).contains(&ratio), "ratio {ratio}");
    }

    #[test]
    fn snapshots_are_one_flow_step(seed in any::<u64>(), dt in 0.001..0.1f64) {
        let f = VectorField::example2_drift();
        let s = generate_snapshots(&f, &Sampling::Random { count: 30, seed }, dt).unwrap();
        prop_assert_eq!(s.dt, dt);
        for (x, y) in s.x.iter().zip(&s.y) {
            prop_assert!(f.domain().contains(x) && f.domain().contains(y));
            prop_assert_eq!(&flow_step(&f, x, dt).unwrap(), y);
        }
    }

    #[test]
    fn lambda_matches_quadrature(b in small_basis()) {
        let dom = plane(4.0);
        let q = QuadGrid::uniform(&dom, 400);
        let brute = b.quad_outer_sum(&q) * q.cell_volume();
        let lam = b.gram_lambda();
        let rel = (&brute - &lam).abs().max() / lam.abs().max();
        prop_assert!(rel <= 1e-3, "Λ vs quadrature {rel:e}");
        let d = b.mass_matrix_d(&dom.as_region(), &QuadGrid::uniform(&dom, 200)).unwrap();
        let rel = (&d - &lam).abs().max() / lam.abs().max();
        prop_assert!(rel <= 1e-2, "D vs Λ {rel:e}");
    }

    #[test]
    fn projection_recovers_basis_combinations(b in small_basis(), c in prop::collection::vec(-1.0..1.0f64, 6)) {
        let c = DVector::from_iterator(b.len(), c.into_iter().take(b.len()));
        let dom = plane(2.0);
        let q = QuadGrid::uniform(&dom, 60);
        let bb = b.clone();
        let cc = c.clone();
        let f = move |x: &[f64]| bb.combine(x, cc.as_slice());
        let p = b.project_density(&f, &q, &ProjectOptions { ridge: 0.0, nonneg: false }, Role::Signed).unwrap();
        prop_assert!((&p.coef.coef - &c).amax() < 1e-6, "{} vs {}", p.coef.coef, c);
        prop_assert!(p.rel_residual < 1e-8);
    }

    #[test]
    fn simplex_projection_is_nearest_point(row in prop::collection::vec(-3.0..3.0f64, 1..10), probe in prop::collection::vec(0.0..1.0f64, 10)) {
        let z = project_row_simplex(&row);
        prop_assert!(z.iter().all(|&v| v >= 0.0));
        prop_assert!((z.iter().sum::<f64>() - 1.0).abs() < 1e-12);
        let s: f64 = probe[..row.len()].iter().sum::<f64>().max(1e-12);
        let other: Vec<f64> = probe[..row.len()].iter().map(|p| p / s).collect();
        let d = |a: &[f64]| a.iter().zip(&row).map(|(p, q)| (p - q).powi(2)).sum::<f64>();
        prop_assert!(d(&z) <= d(&other) + 1e-12);
    }

    #[test]
    fn lp_matches_vertex_enumeration(
        n in 3usize..=6,
        row in prop::collection::vec(-1.0..2.0f64, 6),
        xs in prop::collection::vec(0.0..1.0f64, 6),
        c in prop::collection::vec(-1.0..1.0f64, 6),
    ) {
        // rows: Σx = s and a random row; bounded since x ≥ 0 and Σx is fixed
        let a = DMatrix::from_fn(2, n, |i, j| if i == 0 { 1.0 } else { row[j] });
        let b = &a * DVector::from_column_slice(&xs[..n]);
        let c = DVector::from_column_slice(&c[..n]);
        let best = vertices(&a, &b).iter().map(|x| c.dot(x)).fold(f64::INFINITY, f64::min);
        prop_assume!(best.is_finite());
        let sol = lp_solve(&LpProblem::new(c.clone()).eq(a, b), &LpOptions::default()).unwrap();
        prop_assert_eq!(sol.status, LpStatus::Optimal);
        prop_assert!((sol.objective - best).abs() <= 1e-6 * (1.0 + best.abs()), "{} vs {}", sol.objective, best);
    }

    #[test]
    fn mc_estimate_is_monotone_in_hazard(hb in hazard_box(), lo in 0.0..2.0f64, extra in 0.0..2.0f64, seed in any::<u64>()) {
        let dom = plane(5.0);
        let r = Region::boxed(&hb.0, &hb.1);
        let small = HazardModel::new(&[HazardPiece::raw(r.clone(), lo)], &dom).unwrap();
        let big = HazardModel::new(&[HazardPiece::raw(r, lo + extra)], &dom).unwrap();
        prop_assert!(mc(&small, seed).estimate <= mc(&big, seed).estimate);
    }

    #[test]
    fn mc_estimate_scales_with_hazard(hb in hazard_box(), alpha in 0.0..5.0f64, seed in any::<u64>()) {
        let dom = plane(5.0);
        let m = HazardModel::new(&[HazardPiece::raw(Region::boxed(&hb.0, &hb.1), 1.0)], &dom).unwrap();
        let base = mc(&m, seed).estimate;
        let scaled = mc(&m.scaled(alpha), seed).estimate;
        prop_assert!((scaled - alpha * base).abs() <= 1e-12 * (1.0 + alpha * base));
    }

    #[test]
    fn mc_is_deterministic(hb in hazard_box(), seed in any::<u64>()) {
        let m = HazardModel::new(&[HazardPiece::raw(Region::boxed(&hb.0, &hb.1), 1.0)], &plane(5.0)).unwrap();
        prop_assert_eq!(mc(&m, seed), mc(&m, seed));
    }

    #[test]
    fn control_respects_input_bound(
        b in small_basis(),
        v in prop::collection::vec(0.0..1.0f64, 6),
        w in prop::collection::vec(-50.0..50.0f64, 6),
        x in prop::array::uniform2(-3.0..3.0f64),
        bound in 0.01..10.0f64,
    ) {
        let n = b.len();
        let pair = DensityPair {
            v: DVector::from_iterator(n, v.into_iter().take(n)),
            w: DVector::from_iterator(n, w.into_iter().take(n)),
            residual_eq: 0.0,
            hazard_value: 0.0,
            lp_iterations: 0,
        };
        let c = NavigationController::new(b, pair, bound, vec![0.0, 0.0], 0.3, vec![100.0, -100.0]).unwrap();
        let u = c.control(&x);
        prop_assert!(u.is_finite() && u.abs() <= bound);
    }

    #[test]
    fn lqr_value_decreases_along_closed_loop(a in mat2(), b in prop::array::uniform2(-1.0..1.0f64), x0 in prop::array::uniform2(-1.0..1.0f64)) {
        let bm = DMatrix::from_column_slice(2, 1, &b);
        // controllability margin
        let ctrb = DMatrix::from_columns(&[bm.column(0).into_owned(), (&a * &bm).column(0).into_owned()]);
        prop_assume!(ctrb.determinant().abs() > 1e-2);
        let l = lqr_gain(&a, &bm, &DMatrix::identity(2, 2), &DMatrix::from_element(1, 1, 1.0)).unwrap();
        prop_assert!(l.max_real_eig() < 0.0);
        for t in l.traces.windows(2).skip(1) {
            prop_assert!(t[1] <= t[0] * (1.0 + 1e-9) + 1e-12, "traces {:?}", l.traces);
        }
        let acl = &a - &bm * &l.k;
        let f = VectorField::linear(plane(1e6), acl);
        let tr = simulate(&f, &x0, 5.0, 0.01, None).unwrap();
        let vals: Vec<f64> = tr.states.iter().map(|x| {
            let x = DVector::from_column_slice(x);
            (x.transpose() * &l.p * &x)[0]
        }).collect();
        for s in vals.windows(2) {
            prop_assert!(s[1] <= s[0] + 1e-12);
        }
    }
}

#[test]
fn handoff_band_is_invariant_under_linear_lqr() {
    // xᵀPx sublevel sets are invariant, so the ball inscribed in one stays inside the outer ball
    let a = DMatrix::from_row_slice(2, 2, &[0.0, 1.0, 0.0, 0.0]);
    let b = DMatrix::from_column_slice(2, 1, &[0.0, 1.0]);
    let l = lqr_gain(
        &a,
        &b,
        &DMatrix::identity(2, 2),
        &DMatrix::from_element(1, 1, 1.0),
    )
    .unwrap();
    let eig = l.p.clone().symmetric_eigenvalues();
    let (lo, hi) = (eig.min(), eig.max());
    let eps = 0.002;
    let inner = eps * (lo / hi).sqrt();
    let k: Vec<f64> = l.k.row(0).iter().copied().collect();
    let basis = RbfBasis::new(vec![vec![0.0, 0.0]], 1.0).unwrap();
    let pair = DensityPair {
        v: DVector::from_element(1, 1.0),
        w: DVector::zeros(1),
        residual_eq: 0.0,
        hazard_value: 0.0,
        lp_iterations: 0,
    };
    let c = Arc::new(NavigationController::new(basis, pair, 1.0, vec![0.0, 0.0], eps, k).unwrap());
    let f = VectorField::linear(plane(1.0), a);
    let g = VectorField::unit_input(plane(1.0), 1);
    for th in 0..16 {
        let th = th as f64 * std::f64::consts::PI / 8.0;
        let x0 = [inner * th.cos(), inner * th.sin()];
        let tr = pfnav::dynamics::simulate_controlled(&f, &g, c.policy(), &x0, 10.0, 0.01, None)
            .unwrap();
        assert!(tr.states.iter().all(|x| c.in_handoff(x)));
    }
}
