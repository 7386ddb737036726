//! A three-cell chain solved twice: with the interior point LP directly, and as a
//! density synthesis problem.
//!
//!     cargo run --example lp_small

use nalgebra::{DMatrix, DVector};
use pfnav::lp::{lp_solve, LpOptions, LpProblem};
use pfnav::synthesis::{residual_report, synthesize, SafetyProblem};

fn main() -> pfnav::Result<()> {
    // min x0 + 2 x1 + 3 x2  s.t.  x0 + x1 + x2 = 1,  x0 ≤ 0.4,  x ≥ 0
    let p = LpProblem::new(DVector::from_vec(vec![1.0, 2.0, 3.0]))
        .eq(
            DMatrix::from_row_slice(1, 3, &[1.0, 1.0, 1.0]),
            DVector::from_vec(vec![1.0]),
        )
        .ub(
            DMatrix::from_row_slice(1, 3, &[1.0, 0.0, 0.0]),
            DVector::from_vec(vec![0.4]),
        );
    let sol = lp_solve(&p, &LpOptions::default())?;
    println!(
        "{:?}: x = {:.6?} objective {:.6} in {} iterations",
        sol.status,
        sol.x.as_slice(),
        sol.objective,
        sol.iterations
    );

    // mass enters cell 0 and drains to the absorbing cell 2 through cell 1 or a
    // controlled bypass from cell 0; cell 1 is hazardous. With |w| ≤ 19 v the
    // bypass can carry all but 5% of the mass
    let m0 = DMatrix::from_row_slice(3, 3, &[-1.0, 0.0, 0.0, 1.0, -1.0, 0.0, 0.0, 1.0, 0.0]);
    let m1 = DMatrix::from_row_slice(3, 3, &[-1.0, 0.0, 0.0, 0.0, 0.0, 0.0, 1.0, 0.0, 0.0]);
    let problem = SafetyProblem {
        m0,
        m1,
        m: DVector::from_vec(vec![1.0, 0.0, 0.0]),
        d: DMatrix::identity(3, 3),
        u: DVector::from_vec(vec![0.0, 1.0, 0.0]),
        gamma: 0.1,
        input_bound: 19.0,
        equality_tol: 1e-9,
        absorbing: vec![2],
    };
    let result = synthesize(&problem, &LpOptions::default())?;
    match result.pair() {
        Some(pair) => {
            println!(
                "feasible {} hazard {:.3e}",
                result.is_feasible(),
                pair.hazard_value
            );
            println!("v = {:.4?}", pair.v.as_slice());
            println!("w = {:.4?}", pair.w.as_slice());
            println!("{:?}", residual_report(&problem, &pair.v, &pair.w));
        }
        None => println!("no pair: {result:?}"),
    }
    Ok(())
}
