//! The three potential families: a box, `V = |x|^ν`, and a table read from CSV.
//!
//!     cargo run --example potentials

use qcstat::potential::{scaling_exponents, Potential};

fn main() -> qcstat::Result<()> {
    let well = Potential::box_well(&[1.0, 2.0])?;
    println!("box: N = {}, volume = {}", well.dimension(), well.volume().unwrap());
    println!("  V(0.5, 1.0) = {}", well.evaluate(&[0.5, 1.0])?);

    let quartic = Potential::homogeneous(1, 4.0)?.with_mass(2.0)?;
    let s = scaling_exponents(4.0)?;
    println!("r^4 with m = 2: E_n(h) = h^{} E_n(1)", s.energy);
    let dev = quartic.check_homogeneity(4.0, &[0.5, 3.0], &[vec![0.3], vec![-1.7]])?;
    println!("  homogeneity deviation {dev:.1e}");

    // A double well sampled on a grid, linear between samples.
    let mut csv = String::from("x,V\n");
    for i in 0..=40 {
        let x = -2.0 + 0.1 * i as f64;
        csv.push_str(&format!("{x},{}\n", (x * x - 1.0).powi(2)));
    }
    let double_well = Potential::from_csv_reader(csv.as_bytes())?;
    println!(
        "tabulated: interval {:?}, V(0) = {}",
        double_well.interval().unwrap(),
        double_well.evaluate(&[0.0])?
    );

    let descriptor = serde_json::to_string(&quartic.descriptor()).expect("serializable");
    println!("descriptor: {descriptor}");
    Ok(())
}
