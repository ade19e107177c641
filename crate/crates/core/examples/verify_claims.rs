//! Runs every check against the harmonic oscillator and prints the reports.
//!
//!     cargo run --example verify_claims

use qcstat::potential::Potential;
use qcstat::verify::{self, Claim, VerifyConfig};

fn main() -> qcstat::Result<()> {
    let potential = Potential::homogeneous(1, 2.0)?;
    let reports = verify::run(&potential, &Claim::ALL, &VerifyConfig::default())?;
    for r in &reports {
        println!("{}", r.summary());
    }
    let violated: Vec<_> = reports
        .iter()
        .filter(|r| r.claim_id.is_theorem() && r.status == verify::Status::Violated)
        .map(|r| r.claim_id)
        .collect();
    println!("\nproven statements violated: {violated:?}");
    Ok(())
}
