//! Energy levels: closed forms where they exist, finite differences otherwise.
//!
//!     cargo run --example spectra

use qcstat::potential::Potential;
use qcstat::spectrum::{self, FdGrid};

fn main() -> qcstat::Result<()> {
    let h = 1.0;

    let boxed = spectrum::solve_box(&[1.0], 1.0, h, 5)?;
    println!("box, L = 1 ({}): {:?}", boxed.source().name(), boxed.levels());

    let osc = Potential::homogeneous(1, 2.0)?;
    let harmonic = spectrum::solve_count(&osc, h, 5, 1e-8)?;
    println!("oscillator ({}): {:?}", harmonic.source().name(), harmonic.levels());

    let quartic = Potential::homogeneous(1, 4.0)?;
    let fd = spectrum::solve_fd_1d(&quartic, h, FdGrid::symmetric(6.0, 2000), 4, 1e-8)?;
    println!("quartic ({}):", fd.source().name());
    for (e, err) in fd.levels().iter().zip(fd.errors().unwrap()) {
        println!("  {e:.12}  ± {err:.1e}");
    }

    // E_n(h) = h^{2ν/(2+ν)} E_n(1) for V = |x|^ν.
    let alpha = quartic.energy_scaling_exponent().unwrap();
    for h in [0.5, 2.0] {
        let scaled = spectrum::rescale(&fd, h, alpha)?;
        println!("quartic at h = {h}: E_1 = {:.12}", scaled.levels()[0]);
    }

    // Three-point discretization converges as P^-2.
    let well = Potential::box_well(&[1.0])?;
    let exact = std::f64::consts::PI.powi(2) / 2.0;
    let mut previous = None;
    for p in [250, 500, 1000, 2000] {
        let err = spectrum::fd_levels(&well, h, (0.0, 1.0), p, 1)?[0] - exact;
        let ratio = previous.map_or(String::new(), |q: f64| format!("  ratio {:.4}", q / err));
        println!("box FD with P = {p:4}: error {err:.3e}{ratio}");
        previous = Some(err);
    }
    Ok(())
}
