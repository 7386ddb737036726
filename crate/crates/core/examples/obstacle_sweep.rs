//! Two adjacent obstacles with the hazard mass split (1, 0), (0.8, 0.2) and
//! (0.5, 0.5). The density should avoid the obstacle carrying more of it.
//!
//!     cargo run --release --example obstacle_sweep

use pfnav::config;
use pfnav::pipeline::Scenario;
use pfnav::Region;

fn mean_rho(s: &Scenario, rho: &dyn Fn(&[f64]) -> f64, region: &Region) -> f64 {
    let res = 100;
    let d = &s.domain;
    let (mut sum, mut n) = (0.0, 0);
    for i in 0..res {
        for j in 0..res {
            let x = [
                d.lo[0] + (i as f64 + 0.5) * (d.hi[0] - d.lo[0]) / res as f64,
                d.lo[1] + (j as f64 + 0.5) * (d.hi[1] - d.lo[1]) / res as f64,
            ];
            if region.contains(&x) {
                sum += rho(&x);
                n += 1;
            }
        }
    }
    sum / n as f64
}

fn main() -> pfnav::Result<()> {
    println!(
        "{:22} {:>10} {:>12} {:>12}",
        "levels", "uᵀDv", "mean ρ X_u1", "mean ρ X_u2"
    );
    for name in ["example2", "example2_sweep_08_02", "example2_sweep_05_05"] {
        let s = Scenario::new(
            config::builtin(name)?,
            false,
            Some(format!("out/obstacle_sweep/{name}").into()),
        )?;
        let ops = s.fit(&s.snapshots()?)?;
        let (result, ctrl) = s.synthesize(&s.problem(&ops)?)?;
        let levels = format!("({}, {})", s.cfg.hazard[0].level, s.cfg.hazard[1].level);
        match ctrl {
            Some(c) => {
                let rho = |x: &[f64]| c.rho(x);
                let m1 = mean_rho(&s, &rho, &s.cfg.hazard[0].region);
                let m2 = mean_rho(&s, &rho, &s.cfg.hazard[1].region);
                println!(
                    "{levels:22} {:10.4} {m1:12.4e} {m2:12.4e}",
                    result.best_gamma()
                );
            }
            None => println!("{levels:22} {:>10}", "no pair"),
        }
    }
    Ok(())
}
