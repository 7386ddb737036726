//! Fit a Markov generator for the example 2 drift and compare it with plain EDMD.
//!
//!     cargo run --release --example nsdmd_operator

use pfnav::basis::SigmaRule;
use pfnav::dynamics::{generate_snapshots, Sampling};
use pfnav::operator::{edmd, markov_violation, nsdmd, NsdmdOptions};
use pfnav::{RbfBasis, VectorField};

fn main() -> pfnav::Result<()> {
    let f = VectorField::example2_drift();
    let basis = RbfBasis::grid(f.domain(), &[15, 15], SigmaRule::Factor(1.25 / 3.0))?;
    let snaps = generate_snapshots(&f, &Sampling::Grid(vec![40, 40]), 0.01)?;
    println!(
        "{} snapshot pairs, {} basis functions, sigma {:.4}",
        snaps.len(),
        basis.len(),
        basis.sigma()
    );

    let plain = edmd(&snaps, &basis)?;
    println!("EDMD markov violation   {:.3e}", markov_violation(&plain.k));

    let (op, rep) = nsdmd(&snaps, &basis, &NsdmdOptions::default())?;
    println!("NSDMD markov violation  {:.3e}", op.markov_violation());
    println!(
        "generator column drift  {:.3e}",
        op.generator_column_drift()
    );
    println!(
        "iterations {} objective {:.4e} converged {}",
        rep.iterations, rep.objective, rep.converged
    );
    Ok(())
}
