//! Monte Carlo collision estimates for a straight-line flow crossing a hazard box,
//! with the exact answer alongside.
//!
//!     cargo run --example collision_mc

use pfnav::safety::{collision_probability_mc, HazardModel, HazardPiece, McOptions, Mu0Sampler};
use pfnav::{BoxDomain, Region, VectorField};

fn main() -> pfnav::Result<()> {
    let plane = BoxDomain::new(vec![-5.0, -5.0], vec![5.0, 5.0])?;
    let f = VectorField::constant(plane.clone(), vec![1.0, 0.0]);
    // uniform hazard on a 1 × 2 box: density 1/2, one time unit inside
    let hazard = HazardModel::new(
        &[HazardPiece::uniform(
            Region::boxed(&[1.0, -1.0], &[2.0, 1.0]),
            1.0,
        )],
        &plane,
    )?;

    for (label, x0) in [
        ("point start", Region::boxed(&[0.0, 0.0], &[0.0, 0.0])),
        (
            "half the starts miss",
            Region::boxed(&[0.0, 0.0], &[0.0, 2.0]),
        ),
    ] {
        let sampler = Mu0Sampler::new(x0, &plane);
        for dt in [0.1, 0.01] {
            let opts = McOptions {
                horizon: 4.0,
                dt,
                n_samples: 400,
                seed: 11,
                target: None,
            };
            let r = collision_probability_mc(&f, &sampler, &hazard, &opts)?;
            println!(
                "{label:22} dt {dt:<5} estimate {:.4} ± {:.4}",
                r.estimate, r.stderr
            );
        }
    }
    println!("exact: 0.5 and 0.25");
    Ok(())
}
