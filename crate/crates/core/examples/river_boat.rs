//! Boat crossing a river (the shipped `example1` scenario), every stage in order.
//!
//!     cargo run --release --example river_boat [-- OUT_DIR]

use pfnav::config;
use pfnav::dynamics::End;
use pfnav::pipeline::Scenario;
use pfnav::safety::occupancy_fraction;
use std::path::PathBuf;

fn main() -> pfnav::Result<()> {
    let out = std::env::args()
        .nth(1)
        .map(PathBuf::from)
        .unwrap_or_else(|| PathBuf::from("out/river_boat"));
    let s = Scenario::new(config::builtin("example1")?, false, Some(out))?;
    s.write_config()?;
    let ops = s.fit(&s.snapshots()?)?;
    let problem = s.problem(&ops)?;
    let (result, ctrl) = s.synthesize(&problem)?;
    println!(
        "feasible {} bound uᵀDv = {:.4e}",
        result.is_feasible(),
        result.best_gamma()
    );
    let Some(ctrl) = ctrl else { return Ok(()) };

    let banks: Vec<_> = s.hazard.regions().collect();
    for (k, r) in s.simulate(&ctrl)?.iter().enumerate() {
        let wet =
            |tr: &pfnav::Trajectory| banks.iter().map(|b| occupancy_fraction(tr, b)).sum::<f64>();
        println!(
            "{k}: closed {:11} t {:5.2} closest {:.3} in water {:.4} | open {:11} in water {:.4}",
            r.closed.end.as_str(),
            r.closed.duration(),
            r.closed.closest_approach(&s.cfg.sets.x_r),
            wet(&r.closed),
            r.open.end.as_str(),
            wet(&r.open),
        );
        if r.closed.end == End::Reached {
            println!("   reached x_r");
        }
    }
    let mc = s.evaluate(&ctrl)?;
    println!(
        "MC estimate {:.4e} ± {:.1e} (n = {})",
        mc.estimate,
        mc.stderr,
        mc.samples.len()
    );
    s.density_grid(&ctrl, s.cfg.density_grid)?;
    println!("artifacts in {}", s.out.display());
    Ok(())
}
