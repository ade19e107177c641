//! The quantum entropy falls with β and with h, and `Ψ(λ)` has a closed-form
//! derivative that is never positive.
//!
//!     cargo run --example entropy_monotonicity

use qcstat::ensemble::{self, System};
use qcstat::potential::Potential;
use qcstat::spectrum::{self, TruncationPolicy};

fn main() -> qcstat::Result<()> {
    let quartic = Potential::homogeneous(1, 4.0)?;
    let betas = [0.2, 0.5, 1.0, 2.0, 5.0];
    // Enough levels for the hottest corner of the grid, solved once at h = 1.
    let system = System::prepare(quartic.clone(), &betas, &[0.5, 4.0], TruncationPolicy::new(0.2))?;
    let base = system.base_spectrum().expect("scaling model").clone();
    let alpha = quartic.energy_scaling_exponent().unwrap();

    print!("{:>6}", "h\\beta");
    for b in betas {
        print!(" {b:>11}");
    }
    println!();
    for h in [0.5, 1.0, 2.0] {
        let spec = spectrum::rescale(&base, h, alpha)?;
        print!("{h:>6}");
        for b in betas {
            print!(" {:11.5e}", ensemble::entropy_quantum(&spec, b)?.value);
        }
        println!();
    }

    // Deep in the quantum regime S_q underflows but ln S_q does not.
    let spec = spectrum::rescale(&base, 4.0, alpha)?;
    let s = ensemble::entropy_quantum(&spec, 400.0)?;
    println!("\nh = 4, beta = 400: S_q = {}, ln S_q = {:.6}", s.value, s.ln_value);

    let levels = &base.levels()[..6];
    println!("\nPsi over the six lowest levels");
    for lambda in [0.1, 0.5, 1.0, 3.0] {
        let psi = ensemble::psi(levels, lambda)?;
        println!("  lambda = {lambda:3}: Psi = {:.8}, Psi' = {:.8e}", psi.value, psi.derivative);
    }
    Ok(())
}
