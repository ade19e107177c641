//! How quantum and classical quantities approach each other for a box,
//! first as β shrinks at fixed h, then as h shrinks at fixed β.
//!
//!     cargo run --example semiclassical_limits

use qcstat::ensemble::System;
use qcstat::potential::Potential;
use qcstat::verify::{self, WehrlGaps};

fn main() -> qcstat::Result<()> {
    let well = Potential::box_well(&[1.0])?;

    let betas = verify::halving(1.0, 9);
    let system = System::prepare(well.clone(), &betas, &[1.0], verify::sweep_policy())?;
    println!("h = 1, beta -> 0");
    println!("{:>10} {:>12} {:>12}", "beta", "R_Z", "R_E");
    for &b in &betas {
        let p = system.point(b, 1.0)?;
        let rz = (p.ln_z_scaled() - p.z_classical.ln()).exp();
        println!("{b:10.6} {rz:12.8} {:12.8}", p.e_quantum / p.e_classical);
    }
    println!("(|R - 1| falls like sqrt(beta): the walls cost a boundary layer)");

    let hs = verify::halving(1.0, 7);
    let system = System::prepare(well, &[1.0], &hs, verify::sweep_policy())?;
    println!("\nbeta = 1, h -> 0");
    println!("{:>10} {:>12} {:>12} {:>12}", "h", "energy", "sum", "entropy");
    for &h in &hs {
        let g = WehrlGaps::from_point(&system.point(1.0, h)?);
        println!("{h:10.6} {:12.4e} {:12.4e} {:12.4e}", g.energy, g.sum, g.entropy);
    }
    Ok(())
}
