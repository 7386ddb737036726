//! Synthesize the example 2 density and print it as a coarse character map,
//! then write the full grid as `x1,x2,rho` CSV.
//!
//!     cargo run --release --example density_grid

use pfnav::config;
use pfnav::pipeline::Scenario;

fn main() -> pfnav::Result<()> {
    let s = Scenario::new(
        config::builtin("example2")?,
        false,
        Some("out/density_grid".into()),
    )?;
    let ops = s.fit(&s.snapshots()?)?;
    let (_, ctrl) = s.synthesize(&s.problem(&ops)?)?;
    let ctrl = ctrl.expect("density pair");
    let rows = s.density_grid(&ctrl, 100)?;
    let max = rows.iter().map(|r| r.1).fold(0.0, f64::max);
    println!(
        "max ρ {max:.4e}; wrote {}",
        s.out.join("density_grid.csv").display()
    );

    // log-scaled shading on a 48 × 24 grid, x2 increasing upward
    let shades: Vec<char> = " .:-=+*#%@".chars().collect();
    let (w, h) = (48, 24);
    let d = &s.domain;
    for j in (0..h).rev() {
        let line: String = (0..w)
            .map(|i| {
                let x = [
                    d.lo[0] + (i as f64 + 0.5) * (d.hi[0] - d.lo[0]) / w as f64,
                    d.lo[1] + (j as f64 + 0.5) * (d.hi[1] - d.lo[1]) / h as f64,
                ];
                let r = (ctrl.rho(&x) / max).max(1e-6);
                let k = ((r.log10() + 6.0) / 6.0 * (shades.len() - 1) as f64).round() as usize;
                shades[k.min(shades.len() - 1)]
            })
            .collect();
        println!("{line}");
    }
    Ok(())
}
