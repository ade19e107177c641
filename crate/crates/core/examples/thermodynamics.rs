//! Quantum and classical partition sums, energies and entropies on a grid.
//!
//!     cargo run --example thermodynamics

use qcstat::ensemble::{self, System};
use qcstat::potential::Potential;
use qcstat::spectrum::TruncationPolicy;

fn main() -> qcstat::Result<()> {
    let betas = [0.1, 0.5, 1.0, 5.0];
    let hs = [0.5, 1.0, 2.0];
    let potential = Potential::homogeneous(1, 2.0)?;
    let system = System::prepare(potential, &betas, &hs, TruncationPolicy::new(0.1))?;

    println!("{:>5} {:>4} {:>12} {:>12} {:>10} {:>10} {:>12} {:>12}", "beta", "h", "(2πh)Zq", "Zc", "Eq", "Ec", "Sq", "Sc");
    for row in system.table(&betas, &hs) {
        row.check_identities()?;
        let p = row.point?;
        println!(
            "{:5} {:4} {:12.6e} {:12.6e} {:10.5} {:10.5} {:12.5e} {:12.5}",
            p.beta,
            p.planck,
            p.z_scaled(),
            p.z_classical,
            p.e_quantum,
            p.e_classical,
            p.s_quantum,
            p.s_classical
        );
    }

    // Individual quantities. The bounds cover truncation and level errors,
    // not floating-point rounding.
    let spec = system.spectrum(1.0)?;
    let z = ensemble::z_quantum(&spec, 1.0)?;
    let e = ensemble::mean_energy_quantum(&spec, 1.0)?;
    let s = ensemble::entropy_quantum(&spec, 1.0)?;
    println!("\nbeta = 1, h = 1: ln Zq = {}", z.ln_value);
    println!("  Eq = {}, truncation bound {:.1e}", e.value, e.error);
    println!("  Sq = {}, truncation bound {:.1e}, P_1 = {:.6}", s.value, s.error, s.probabilities[0]);
    Ok(())
}
