//! LQR gains at the two targets and a closed-loop run from the edge of the
//! handoff ball around the example 2 origin.
//!
//!     cargo run --example lqr_handoff

use nalgebra::{DMatrix, DVector};
use pfnav::controller::{linearize, lqr_gain, NavigationController};
use pfnav::dynamics::simulate_controlled;
use pfnav::synthesis::DensityPair;
use pfnav::{RbfBasis, VectorField};
use std::sync::Arc;

fn main() -> pfnav::Result<()> {
    let q = DMatrix::identity(2, 2);
    let r = DMatrix::from_element(1, 1, 1.0);
    for (name, f, x_r) in [
        ("example1", VectorField::example1_drift(), [9.7, 3.8]),
        ("example2", VectorField::example2_drift(), [0.0, 0.0]),
    ] {
        let g = VectorField::unit_input(f.domain().clone(), 1);
        let (a, b) = linearize(&f, &g, &x_r)?;
        let l = lqr_gain(&a, &b, &q, &r)?;
        let rows = |m: &DMatrix<f64>| {
            m.row_iter()
                .map(|r| format!("{:.4?}", r.iter().collect::<Vec<_>>()))
                .collect::<Vec<_>>()
                .join(" ")
        };
        println!("{name}: A = {} B = {}", rows(&a), rows(&b));
        println!(
            "  K = {} after {} Newton steps, max Re λ {:.4}",
            rows(&l.k),
            l.iterations,
            l.max_real_eig()
        );
        println!(
            "  trace(P) per step: {:?}",
            l.traces
                .iter()
                .map(|t| format!("{t:.4}"))
                .collect::<Vec<_>>()
        );
    }

    // LQR only: a one-function density that is never consulted inside the ball
    let f = VectorField::example2_drift();
    let g = VectorField::unit_input(f.domain().clone(), 1);
    let (a, b) = linearize(&f, &g, &[0.0, 0.0])?;
    let k = lqr_gain(&a, &b, &q, &r)?.k;
    let pair = DensityPair {
        v: DVector::from_element(1, 1.0),
        w: DVector::zeros(1),
        residual_eq: 0.0,
        hazard_value: 0.0,
        lp_iterations: 0,
    };
    let basis = RbfBasis::new(vec![vec![0.0, 0.0]], 1.0)?;
    let ctrl = Arc::new(NavigationController::new(
        basis,
        pair,
        1.0,
        vec![0.0, 0.0],
        0.002,
        vec![k[(0, 0)], k[(0, 1)]],
    )?);
    let tr = simulate_controlled(&f, &g, ctrl.policy(), &[0.0015, 0.0], 20.0, 0.01, None)?;
    let worst = tr
        .states
        .iter()
        .map(|x| x[0].hypot(x[1]))
        .fold(0.0, f64::max);
    println!(
        "from |x| = 0.0015: max |x| over 20 s = {worst:.6}, final |x| = {:.2e}",
        tr.last()[0].hypot(tr.last()[1])
    );
    Ok(())
}
