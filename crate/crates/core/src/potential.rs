//! Model families: the potential well, radial homogeneous potentials
//! `V(r) = r^ν`, and piecewise-linear tabulated potentials on an interval.
//!
//! Units: mass defaults to 1 and the Boltzmann constant is 1, so `β = 1/T`.

use std::io::Read;
use std::path::Path;

use serde::{Deserialize, Serialize};

use crate::error::{Error, Result};

#[derive(Debug, Clone, Copy, PartialEq, Eq, Serialize, Deserialize)]
#[serde(rename_all = "lowercase")]
pub enum PotentialKind {
    Box,
    Homogeneous,
    Tabulated,
}

#[derive(Debug, Clone, PartialEq)]
enum Shape {
    Box { lengths: Vec<f64> },
    Homogeneous { exponent: f64 },
    Tabulated { xs: Vec<f64>, values: Vec<f64> },
}

/// A potential together with the particle mass and configuration domain.
#[derive(Debug, Clone, PartialEq)]
pub struct Potential {
    dimension: usize,
    mass: f64,
    shape: Shape,
}

/// Serializable summary of a model, used in reports.
#[derive(Debug, Clone, PartialEq, Serialize, Deserialize)]
pub struct ModelDescriptor {
    pub kind: PotentialKind,
    pub dimension: usize,
    pub mass: f64,
    #[serde(skip_serializing_if = "Option::is_none", default)]
    pub exponent: Option<f64>,
    #[serde(skip_serializing_if = "Option::is_none", default)]
    pub lengths: Option<Vec<f64>>,
    #[serde(skip_serializing_if = "Option::is_none", default)]
    pub samples: Option<usize>,
}

/// The two exponents attached to a homogeneity degree `ν`.
///
/// `substitution` is the `a` in `x = h^a y` that balances kinetic and
/// potential terms (`2 - 2a = aν`); `energy` is the exponent of
/// `φ(h) = h^energy` in `E_n(h) = φ(h) E_n(1)`. They differ by the factor ν
/// and must not be confused.
#[derive(Debug, Clone, Copy, PartialEq)]
pub struct ScalingExponents {
    pub substitution: f64,
    pub energy: f64,
}

/// Exponents for a homogeneity degree `nu > 0`.
pub fn scaling_exponents(nu: f64) -> Result<ScalingExponents> {
    if !(nu > 0.0 && nu.is_finite()) {
        return Err(Error::Argument(format!(
            "homogeneity exponent nu must be positive and finite, got {nu}"
        )));
    }
    Ok(ScalingExponents {
        substitution: 2.0 / (2.0 + nu),
        energy: 2.0 * nu / (2.0 + nu),
    })
}

fn check_positive(name: &str, value: f64) -> Result<()> {
    if value > 0.0 && value.is_finite() {
        Ok(())
    } else {
        Err(Error::Argument(format!("{name} must be positive and finite, got {value}")))
    }
}

impl Potential {
    /// Infinite well (`V ≡ 0`) on the box `[0, L_1] × … × [0, L_N]`.
    pub fn box_well(lengths: &[f64]) -> Result<Self> {
        if lengths.is_empty() {
            return Err(Error::Argument("box needs at least one side length".into()));
        }
        for &l in lengths {
            check_positive("box side length L", l)?;
        }
        Ok(Self {
            dimension: lengths.len(),
            mass: 1.0,
            shape: Shape::Box {
                lengths: lengths.to_vec(),
            },
        })
    }

    /// Radial homogeneous potential `V(x) = |x|^ν` on all of `R^N`.
    pub fn homogeneous(dimension: usize, exponent: f64) -> Result<Self> {
        if dimension == 0 {
            return Err(Error::Argument("dimension N must be at least 1".into()));
        }
        check_positive("homogeneity exponent nu", exponent)?;
        Ok(Self {
            dimension,
            mass: 1.0,
            shape: Shape::Homogeneous { exponent },
        })
    }

    /// One-dimensional potential interpolated linearly between samples.
    /// The domain is the sample interval with hard walls at its ends.
    pub fn tabulated(xs: Vec<f64>, values: Vec<f64>) -> Result<Self> {
        if xs.len() != values.len() || xs.len() < 2 {
            return Err(Error::Argument(format!(
                "tabulated potential needs >= 2 matching samples, got {} x and {} V",
                xs.len(),
                values.len()
            )));
        }
        if xs.iter().any(|x| !x.is_finite()) || xs.windows(2).any(|w| w[1] <= w[0]) {
            return Err(Error::Argument("tabulated x values must be finite and strictly increasing".into()));
        }
        if let Some(v) = values.iter().find(|v| !(**v >= 0.0 && v.is_finite())) {
            return Err(Error::Argument(format!(
                "tabulated potential must be finite and non-negative, found V = {v}"
            )));
        }
        Ok(Self {
            dimension: 1,
            mass: 1.0,
            shape: Shape::Tabulated { xs, values },
        })
    }

    /// Reads a two-column CSV with header `x,V`.
    pub fn from_csv_reader<R: Read>(reader: R) -> Result<Self> {
        let mut rdr = csv::ReaderBuilder::new().trim(csv::Trim::All).from_reader(reader);
        let headers = rdr.headers()?.clone();
        if headers.len() != 2 || &headers[0] != "x" || &headers[1] != "V" {
            return Err(Error::Parse(format!(
                "expected header `x,V`, found `{}`",
                headers.iter().collect::<Vec<_>>().join(",")
            )));
        }
        let mut xs = Vec::new();
        let mut values = Vec::new();
        for (line, record) in rdr.records().enumerate() {
            let record = record?;
            let parse = |i: usize| -> Result<f64> {
                record[i].parse::<f64>().map_err(|e| {
                    Error::Parse(format!("row {}: column {}: {e}", line + 2, i + 1))
                })
            };
            xs.push(parse(0)?);
            values.push(parse(1)?);
        }
        Self::tabulated(xs, values)
    }

    pub fn load_csv(path: impl AsRef<Path>) -> Result<Self> {
        let file = std::fs::File::open(path.as_ref())
            .map_err(|e| Error::Io(format!("{}: {e}", path.as_ref().display())))?;
        Self::from_csv_reader(file)
    }

    pub fn with_mass(mut self, mass: f64) -> Result<Self> {
        check_positive("mass m", mass)?;
        self.mass = mass;
        Ok(self)
    }

    pub fn kind(&self) -> PotentialKind {
        match self.shape {
            Shape::Box { .. } => PotentialKind::Box,
            Shape::Homogeneous { .. } => PotentialKind::Homogeneous,
            Shape::Tabulated { .. } => PotentialKind::Tabulated,
        }
    }

    pub fn dimension(&self) -> usize {
        self.dimension
    }

    pub fn mass(&self) -> f64 {
        self.mass
    }

    /// Homogeneity degree `ν` for the homogeneous family.
    pub fn exponent(&self) -> Option<f64> {
        match self.shape {
            Shape::Homogeneous { exponent } => Some(exponent),
            _ => None,
        }
    }

    pub fn lengths(&self) -> Option<&[f64]> {
        match &self.shape {
            Shape::Box { lengths } => Some(lengths),
            _ => None,
        }
    }

    pub fn samples(&self) -> Option<(&[f64], &[f64])> {
        match &self.shape {
            Shape::Tabulated { xs, values } => Some((xs, values)),
            _ => None,
        }
    }

    /// Volume of a bounded domain.
    pub fn volume(&self) -> Option<f64> {
        match &self.shape {
            Shape::Box { lengths } => Some(lengths.iter().product()),
            Shape::Tabulated { xs, .. } => Some(xs[xs.len() - 1] - xs[0]),
            Shape::Homogeneous { .. } => None,
        }
    }

    pub fn is_bounded(&self) -> bool {
        !matches!(self.shape, Shape::Homogeneous { .. })
    }

    /// The interval of a bounded one-dimensional domain.
    pub fn interval(&self) -> Option<(f64, f64)> {
        match &self.shape {
            Shape::Box { lengths } if lengths.len() == 1 => Some((0.0, lengths[0])),
            Shape::Tabulated { xs, .. } => Some((xs[0], xs[xs.len() - 1])),
            _ => None,
        }
    }

    /// Exponent `a` with `E_n(h) = h^a E_n(1)`, when the family has one:
    /// 2 for the well and `2ν/(2+ν)` for homogeneous potentials.
    pub fn energy_scaling_exponent(&self) -> Option<f64> {
        match self.shape {
            Shape::Box { .. } => Some(2.0),
            Shape::Homogeneous { exponent } => Some(2.0 * exponent / (2.0 + exponent)),
            Shape::Tabulated { .. } => None,
        }
    }

    pub fn descriptor(&self) -> ModelDescriptor {
        ModelDescriptor {
            kind: self.kind(),
            dimension: self.dimension,
            mass: self.mass,
            exponent: self.exponent(),
            lengths: self.lengths().map(<[f64]>::to_vec),
            samples: self.samples().map(|(xs, _)| xs.len()),
        }
    }

    /// `V(x)` at a point of the closed domain.
    pub fn evaluate(&self, x: &[f64]) -> Result<f64> {
        if x.len() != self.dimension {
            return Err(Error::Argument(format!(
                "point has {} coordinates, potential has dimension {}",
                x.len(),
                self.dimension
            )));
        }
        if x.iter().any(|c| !c.is_finite()) {
            return Err(Error::Domain {
                point: x.to_vec(),
                reason: "non-finite coordinate".into(),
            });
        }
        match &self.shape {
            Shape::Box { lengths } => {
                if let Some((i, _)) = x
                    .iter()
                    .zip(lengths)
                    .enumerate()
                    .find(|(_, (c, l))| **c < 0.0 || **c > **l)
                {
                    return Err(Error::Domain {
                        point: x.to_vec(),
                        reason: format!("coordinate {i} outside [0, {}]", lengths[i]),
                    });
                }
                Ok(0.0)
            }
            Shape::Homogeneous { exponent } => {
                let r = x.iter().map(|c| c * c).sum::<f64>().sqrt();
                Ok(r.powf(*exponent))
            }
            Shape::Tabulated { xs, values } => interpolate(xs, values, x[0]),
        }
    }

    /// Unchecked one-dimensional evaluation used by the grid solvers.
    /// Box walls and tabulated range ends are the caller's concern.
    pub(crate) fn value_1d(&self, x: f64) -> f64 {
        match &self.shape {
            Shape::Box { .. } => 0.0,
            Shape::Homogeneous { exponent } => x.abs().powf(*exponent),
            Shape::Tabulated { xs, values } => {
                let x = x.clamp(xs[0], xs[xs.len() - 1]);
                interpolate(xs, values, x).unwrap_or(0.0)
            }
        }
    }

    /// Largest relative deviation from `V(h x) = h^ν V(x)` over all scale /
    /// sample pairs.
    pub fn check_homogeneity(&self, exponent: f64, scales: &[f64], samples: &[Vec<f64>]) -> Result<f64> {
        if matches!(self.shape, Shape::Box { .. }) {
            return Err(Error::Argument("homogeneity check needs a homogeneous or tabulated potential".into()));
        }
        if samples.is_empty() || scales.is_empty() {
            return Err(Error::Argument("homogeneity check needs at least one scale and one sample".into()));
        }
        for &h in scales {
            check_positive("scale h", h)?;
        }
        let mut worst = 0.0f64;
        for &h in scales {
            for x in samples {
                let scaled: Vec<f64> = x.iter().map(|c| h * c).collect();
                let lhs = self.evaluate(&scaled)?;
                let rhs = h.powf(exponent) * self.evaluate(x)?;
                let rel = (lhs - rhs).abs() / rhs.abs().max(1e-300);
                worst = worst.max(rel);
            }
        }
        Ok(worst)
    }
}

fn interpolate(xs: &[f64], values: &[f64], x: f64) -> Result<f64> {
    let (lo, hi) = (xs[0], xs[xs.len() - 1]);
    if !(x >= lo && x <= hi) {
        return Err(Error::Range { x, lo, hi });
    }
    let i = match xs.binary_search_by(|p| p.total_cmp(&x)) {
        Ok(i) => return Ok(values[i]),
        Err(i) => i,
    };
    let (x0, x1) = (xs[i - 1], xs[i]);
    let t = (x - x0) / (x1 - x0);
    Ok(values[i - 1] + t * (values[i] - values[i - 1]))
}

#[cfg(test)]
mod tests {
    use super::*;

    #[test]
    fn evaluate_examples() {
        let b = Potential::box_well(&[1.0, 1.0]).unwrap();
        assert_eq!(b.evaluate(&[0.3, 0.4]).unwrap(), 0.0);
        let h3 = Potential::homogeneous(3, 2.0).unwrap();
        assert!((h3.evaluate(&[1.0, 2.0, 2.0]).unwrap() - 9.0).abs() < 1e-14);
        let h1 = Potential::homogeneous(1, 4.0).unwrap();
        assert_eq!(h1.evaluate(&[2.0]).unwrap(), 16.0);
    }

    #[test]
    fn evaluate_errors() {
        let b = Potential::box_well(&[1.0]).unwrap();
        assert!(matches!(b.evaluate(&[1.5]), Err(Error::Domain { .. })));
        assert!(matches!(b.evaluate(&[0.5, 0.5]), Err(Error::Argument(_))));
        let t = Potential::tabulated(vec![0.0, 1.0], vec![0.0, 1.0]).unwrap();
        assert!(matches!(t.evaluate(&[2.0]), Err(Error::Range { .. })));
        assert!((t.evaluate(&[0.25]).unwrap() - 0.25).abs() < 1e-15);
    }

    #[test]
    fn constructor_validation() {
        assert!(Potential::homogeneous(1, -1.0).is_err());
        assert!(Potential::homogeneous(0, 2.0).is_err());
        assert!(Potential::box_well(&[1.0, 0.0]).is_err());
        assert!(Potential::tabulated(vec![0.0, 0.0], vec![1.0, 1.0]).is_err());
        assert!(Potential::tabulated(vec![0.0, 1.0], vec![1.0, -1.0]).is_err());
        assert!(Potential::box_well(&[1.0]).unwrap().with_mass(0.0).is_err());
    }

    #[test]
    fn homogeneity_of_exact_family() {
        let p = Potential::homogeneous(1, 2.0).unwrap();
        let e = p.check_homogeneity(2.0, &[0.5, 2.0], &[vec![1.0], vec![3.0]]).unwrap();
        assert!(e <= 1e-12);
        let p = Potential::homogeneous(2, 3.0).unwrap();
        let e = p.check_homogeneity(3.0, &[10.0], &[vec![1.0, 1.0]]).unwrap();
        assert!(e <= 1e-12);
        assert!(p.check_homogeneity(3.0, &[2.0], &[]).is_err());
    }

    #[test]
    fn tabulated_square_is_nearly_homogeneous() {
        let n = 10_001;
        let xs: Vec<f64> = (0..n).map(|i| 10.0 * i as f64 / (n - 1) as f64).collect();
        let vs: Vec<f64> = xs.iter().map(|x| x * x).collect();
        let p = Potential::tabulated(xs, vs).unwrap();
        let e = p.check_homogeneity(2.0, &[2.0], &[vec![1.0], vec![2.0]]).unwrap();
        assert!(e <= 1e-6, "{e}");
        // Off-node samples: measured against the exact r² oracle.
        let e = p.check_homogeneity(2.0, &[1.7], &[vec![1.234_567], vec![2.5]]).unwrap();
        assert!(e <= 1e-6, "{e}");
    }

    #[test]
    fn scaling_exponent_examples() {
        let s = scaling_exponents(2.0).unwrap();
        assert_eq!((s.substitution, s.energy), (0.5, 1.0));
        let s = scaling_exponents(1.0).unwrap();
        assert!((s.substitution - 2.0 / 3.0).abs() < 1e-15 && (s.energy - 2.0 / 3.0).abs() < 1e-15);
        let s = scaling_exponents(1e6).unwrap();
        assert!((s.energy - 2.0).abs() < 1e-5);
        assert!(scaling_exponents(0.0).is_err());
        assert!(scaling_exponents(-1.0).is_err());
    }

    #[test]
    fn csv_loading() {
        let text = "x,V\n-1,1\n0,0\n1,1\n";
        let p = Potential::from_csv_reader(text.as_bytes()).unwrap();
        assert_eq!(p.kind(), PotentialKind::Tabulated);
        assert!((p.evaluate(&[0.5]).unwrap() - 0.5).abs() < 1e-15);
        assert!(Potential::from_csv_reader("a,b\n1,2\n3,4\n".as_bytes()).is_err());
        assert!(Potential::from_csv_reader("x,V\n1,2\n0,4\n".as_bytes()).is_err());
        assert!(Potential::from_csv_reader("x,V\n1,2\n2,oops\n".as_bytes()).is_err());
    }

    mod props {
        use super::*;
        use proptest::prelude::*;

        proptest! {
            #[test]
            fn homogeneous_scaling_holds(nu in 0.2f64..8.0, h in 0.05f64..20.0,
                                         x in prop::collection::vec(-5.0f64..5.0, 1..4)) {
                let p = Potential::homogeneous(x.len(), nu).unwrap();
                let scaled: Vec<f64> = x.iter().map(|c| h * c).collect();
                let lhs = p.evaluate(&scaled).unwrap();
                let rhs = h.powf(nu) * p.evaluate(&x).unwrap();
                prop_assert!((lhs - rhs).abs() <= 1e-12 * (1.0 + rhs));
                prop_assert!(lhs >= 0.0);
            }

            #[test]
            fn exponents_satisfy_balance(nu in 1e-3f64..1e3) {
                let s = scaling_exponents(nu).unwrap();
                prop_assert!(((2.0 - 2.0 * s.substitution) - s.substitution * nu).abs() <= 1e-14 * (1.0 + nu));
                prop_assert!((s.energy - s.substitution * nu).abs() <= 1e-14 * s.energy.max(1.0));
            }

            #[test]
            fn evaluate_is_deterministic(x in -3.0f64..3.0) {
                let p = Potential::homogeneous(1, 2.5).unwrap();
                prop_assert_eq!(p.evaluate(&[x]).unwrap().to_bits(), p.evaluate(&[x]).unwrap().to_bits());
            }
        }
    }
}
