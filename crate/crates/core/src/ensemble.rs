//! Canonical-ensemble quantities: quantum and classical statistical sums,
//! mean energies and entropies, with truncation and quadrature error
//! estimates.
//!
//! Quantum sums are evaluated with weights `e^{-β(E_n - E_1)}` and the
//! factor `e^{-βE_1}` kept in log space, so nothing overflows or underflows
//! across wide β sweeps.

use std::f64::consts::PI;
use std::io::Write;

use rayon::prelude::*;
use serde::{Deserialize, Serialize};
use statrs::function::gamma::{gamma, ln_gamma};

use crate::error::{Error, Result};
use crate::numeric::sum::ln_upper_incomplete_gamma_bound;
use crate::numeric::{integrate_with_breaks, CompensatedSum, LogSumExp, QuadratureOptions};
use crate::potential::{Potential, PotentialKind};
use crate::spectrum::{self, relative_tails_with, Spectrum, TruncationPolicy};

/// Truncation tolerance required of every truncated quantum sum.
pub const TAIL_TOLERANCE: f64 = 1e-10;

/// A value with an absolute error estimate.
#[derive(Debug, Clone, Copy, PartialEq, Serialize, Deserialize)]
pub struct Estimate {
    pub value: f64,
    pub error: f64,
}

/// `Z_q = Σ e^{-βE_n}` over the held levels.
#[derive(Debug, Clone, Copy, PartialEq)]
pub struct QuantumSum {
    /// May underflow to zero for very large `βE_1`; `ln_value` does not.
    pub value: f64,
    pub ln_value: f64,
    /// Upper estimate of the omitted `Σ_{n>M} e^{-βE_n}`.
    pub tail: f64,
    /// Relative error bound: tail plus propagated level errors.
    pub relative_error: f64,
}

/// Everything derived from one pass over the levels at one β.
struct Sums {
    e1: f64,
    /// `S0 - 1 = Σ_{n>1} e^{-β(E_n - E_1)}`.
    excess: f64,
    /// `S0`.
    s0: f64,
    /// `S1 = Σ (E_n - E_1) e^{-β(E_n - E_1)}`.
    s1: f64,
    used: usize,
    rel_z: f64,
    rel_e: f64,
    /// `Σ δE_n w_n` for finite-difference levels.
    level_error: f64,
    /// `Σ δE_n |E_n - E_q| w_n`.
    spread_error: f64,
}

impl Sums {
    fn mean_energy(&self) -> f64 {
        self.e1 + self.s1 / self.s0
    }

    fn ln_z(&self, beta: f64) -> f64 {
        -beta * self.e1 + self.excess.ln_1p()
    }

    fn z_relative_error(&self, beta: f64) -> f64 {
        self.rel_z + beta * self.level_error / self.s0
    }

    fn energy_error(&self, beta: f64) -> f64 {
        self.mean_energy() * (self.rel_e + self.rel_z) + (self.level_error + beta * self.spread_error) / self.s0
    }

    /// `S_q = ln S0 + β S1/S0`: both terms are non-negative, so no
    /// cancellation occurs.
    fn entropy(&self, beta: f64) -> f64 {
        self.excess.ln_1p() + beta * self.s1 / self.s0
    }

    /// Absolute error bound on `S_q`. `S_q` depends on level gaps only, and
    /// `∂S/∂E_n = -β² P_n (E_n - E_q)`, so level errors enter through the
    /// spread sum rather than through `ln Z`.
    fn entropy_error(&self, beta: f64) -> f64 {
        self.rel_z + beta * (self.rel_e + self.rel_z) * self.mean_energy() + beta * beta * self.spread_error / self.s0
    }
}

/// Error bound on `ln S_q`. Where the excited weights underflow, `S_q` is
/// dominated by the first gap and its relative error is `β(δE_1 + δE_2)`.
fn ln_entropy_error(spectrum: &Spectrum, beta: f64, s: &Sums, ln_s: f64) -> f64 {
    let rounding = 1e-14 * (1.0 + ln_s.abs());
    if !ln_s.is_finite() {
        return f64::INFINITY;
    }
    if s.excess > 1e-250 {
        return s.entropy_error(beta) / s.entropy(beta) + rounding;
    }
    let level = spectrum.errors().map_or(0.0, |e| beta * (e[0] + e.get(1).copied().unwrap_or(0.0)));
    level + rounding
}

fn check_beta(beta: f64) -> Result<()> {
    if beta > 0.0 && beta.is_finite() {
        Ok(())
    } else {
        Err(Error::Argument(format!("beta must be positive and finite, got {beta}")))
    }
}

/// Sums at β, failing when either relative tail reaches [`TAIL_TOLERANCE`].
fn sums(spectrum: &Spectrum, beta: f64) -> Result<Sums> {
    check_beta(beta)?;
    let levels = spectrum.levels();
    let sh = spectrum::shifted_sums(levels, beta);
    let (rel_z, rel_e) = relative_tails_with(spectrum, beta, &sh)?;
    let worst = rel_z.max(rel_e);
    if !(worst < TAIL_TOLERANCE) {
        return Err(Error::Truncation {
            beta,
            relative_tail: worst,
            tolerance: TAIL_TOLERANCE,
        });
    }
    let e1 = levels[0];
    let s0 = 1.0 + sh.excess;
    let mean = e1 + sh.s1 / s0;
    let (level_error, spread_error) = match spectrum.errors() {
        Some(errs) => {
            let mut a = 0.0;
            let mut b = 0.0;
            for (&e, &de) in levels[..sh.used].iter().zip(errs) {
                let w = (-beta * (e - e1)).exp();
                a += de * w;
                b += de * (e - mean).abs() * w;
            }
            (a, b)
        }
        None => (0.0, 0.0),
    };
    Ok(Sums {
        e1,
        excess: sh.excess,
        s0,
        s1: sh.s1,
        used: sh.used,
        rel_z,
        rel_e,
        level_error,
        spread_error,
    })
}

/// `Z_q(β, h) = Σ_n e^{-βE_n(h)}`.
pub fn z_quantum(spectrum: &Spectrum, beta: f64) -> Result<QuantumSum> {
    let s = sums(spectrum, beta)?;
    let ln_value = s.ln_z(beta);
    let value = ln_value.exp();
    Ok(QuantumSum {
        value,
        ln_value,
        tail: s.rel_z * value,
        relative_error: s.z_relative_error(beta),
    })
}

/// `E_q = Σ E_n e^{-βE_n} / Z_q`.
pub fn mean_energy_quantum(spectrum: &Spectrum, beta: f64) -> Result<Estimate> {
    let s = sums(spectrum, beta)?;
    Ok(Estimate {
        value: s.mean_energy(),
        error: s.energy_error(beta),
    })
}

/// Entropy of the Gibbs distribution together with its probabilities.
#[derive(Debug, Clone, PartialEq)]
pub struct Entropy {
    /// `S_q = -Σ P_n ln P_n`.
    pub value: f64,
    /// `ln S_q`, accurate even where `S_q` underflows (deep quantum regime).
    pub ln_value: f64,
    pub error: f64,
    /// Absolute error bound on `ln_value`.
    pub ln_error: f64,
    /// `P_n = e^{-βE_n} / Z_q`.
    pub probabilities: Vec<f64>,
}

fn ln_entropy(spectrum: &Spectrum, beta: f64, s: &Sums) -> f64 {
    if s.excess > 1e-250 {
        s.entropy(beta).ln()
    } else {
        ln_entropy_deep(spectrum, beta)
    }
}

/// `S_q = -Σ P_n ln P_n`, with `P_n` returned alongside.
pub fn entropy_quantum(spectrum: &Spectrum, beta: f64) -> Result<Entropy> {
    let s = sums(spectrum, beta)?;
    let e1 = s.e1;
    let probabilities = spectrum
        .levels()
        .iter()
        .map(|e| (-beta * (e - e1)).exp() / s.s0)
        .collect();
    let ln_value = ln_entropy(spectrum, beta, &s);
    Ok(Entropy {
        value: s.entropy(beta),
        ln_value,
        error: s.entropy_error(beta),
        ln_error: ln_entropy_error(spectrum, beta, &s, ln_value),
        probabilities,
    })
}

/// `ln S_q` when every excited weight is below ~1e-250, from
/// `S_q ≈ R + βS1` with `R = Σ_{n>1} w_n` summed in log space.
fn ln_entropy_deep(spectrum: &Spectrum, beta: f64) -> f64 {
    let levels = spectrum.levels();
    let e1 = levels[0];
    let mut r = LogSumExp::new();
    let mut s1 = LogSumExp::new();
    let mut first = None;
    for &e in &levels[1..] {
        let gap = e - e1;
        if gap > 0.0 {
            let t = -beta * gap;
            // Sorted levels: once a term is e^{-60} below the first, stop.
            let lead = *first.get_or_insert(t + gap.ln());
            if t + gap.ln() < lead - 60.0 && t < lead - 60.0 {
                break;
            }
            r.add(t);
            s1.add(gap.ln() + t);
        } else {
            r.add(0.0);
        }
    }
    let mut total = LogSumExp::new();
    total.add(r.value());
    total.add(beta.ln() + s1.value());
    total.value()
}

/// `(2πm/β)^{N/2}` from the momentum integral.
fn momentum_factor(potential: &Potential, beta: f64) -> f64 {
    (2.0 * PI * potential.mass() / beta).powf(potential.dimension() as f64 / 2.0)
}

/// Surface area of the unit sphere in `N` dimensions (2 for the line).
fn unit_sphere_area(n: usize) -> f64 {
    2.0 * PI.powf(n as f64 / 2.0) / gamma(n as f64 / 2.0)
}

/// Radial moments `∫_0^∞ r^{N-1} (r^ν)^k e^{-βr^ν} dr` for `k = 0, 1` by
/// adaptive quadrature, cut where `βr^ν = 50` with an analytic tail bound.
fn radial_moment(n: usize, nu: f64, beta: f64, k: i32) -> Result<Estimate> {
    // Break at several levels of βr^ν: a single panel cannot see a steep
    // edge after a long plateau when ν is large.
    let mut breaks = vec![0.0];
    breaks.extend([1e-12, 1e-6, 1e-3, 0.1, 1.0, 5.0, 20.0, 50.0].map(|t: f64| (t / beta).powf(1.0 / nu)));
    let shape = n as f64 - 1.0;
    let r = integrate_with_breaks(
        |r: f64| {
            let v = r.powf(nu);
            let radial = if shape == 0.0 { 1.0 } else { r.powf(shape) };
            radial * v.powi(k) * (-beta * v).exp()
        },
        &breaks,
        QuadratureOptions::relative(1e-12),
    )?;
    // Substituting t = βr^ν: ∫_{50}^∞ = β^{-(N/ν+k)} Γ(N/ν + k, 50)/ν.
    let s = n as f64 / nu + k as f64;
    let ln_tail = ln_upper_incomplete_gamma_bound(s, 50.0) - s * beta.ln() - nu.ln();
    let tail = ln_tail.exp();
    Ok(Estimate {
        value: r.value + tail,
        error: r.error + tail,
    })
}

/// Closed form of the same moment: `Γ(N/ν + k) / (ν β^{N/ν + k})`.
fn radial_moment_exact(n: usize, nu: f64, beta: f64, k: i32) -> f64 {
    let s = n as f64 / nu + k as f64;
    (ln_gamma(s) - s * beta.ln() - nu.ln()).exp()
}

/// `∫_0^w e^{-β(V0 + Δt/w)} dt` and the energy-weighted analog, exact for a
/// linear segment, returned as `(e^{-βV0} w g0, e^{-βV0} w (V0 g0 + Δ g1))`.
fn linear_segment(w: f64, v0: f64, v1: f64, beta: f64) -> (f64, f64) {
    let delta = v1 - v0;
    let u = beta * delta;
    let g0 = if u == 0.0 { 1.0 } else { -(-u).exp_m1() / u };
    // g1(u) = ∫_0^1 s e^{-us} ds
    let g1 = if u.abs() < 0.5 {
        let mut term = 1.0;
        let mut sum = 0.5;
        for k in 1..30 {
            term *= -u / k as f64;
            sum += term / (k as f64 + 2.0);
        }
        sum
    } else {
        (1.0 - (-u).exp() * (1.0 + u)) / (u * u)
    };
    let base = w * (-beta * v0).exp();
    (base * g0, base * (v0 * g0 + delta * g1))
}

fn tabulated_integrals(potential: &Potential, beta: f64) -> (f64, f64) {
    let (xs, vs) = potential.samples().expect("tabulated");
    let mut z = CompensatedSum::new();
    let mut ev = CompensatedSum::new();
    for i in 0..xs.len() - 1 {
        let (a, b) = linear_segment(xs[i + 1] - xs[i], vs[i], vs[i + 1], beta);
        z.add(a);
        ev.add(b);
    }
    (z.value(), ev.value())
}

fn cross_check(what: &str, quad: Estimate, exact: f64) -> Result<()> {
    let rel = (quad.value - exact).abs() / exact;
    if rel > 1e-8_f64.max(10.0 * quad.error / exact) {
        return Err(Error::Integrability(format!(
            "{what}: quadrature {} disagrees with closed form {exact} (relative {rel:e})",
            quad.value
        )));
    }
    Ok(())
}

/// `Z_c(β) = (2πm/β)^{N/2} ∫_Ω e^{-βV} dx`.
pub fn z_classical(potential: &Potential, beta: f64) -> Result<Estimate> {
    check_beta(beta)?;
    let pf = momentum_factor(potential, beta);
    match potential.kind() {
        PotentialKind::Box => Ok(Estimate {
            value: pf * potential.volume().expect("box"),
            error: 0.0,
        }),
        PotentialKind::Homogeneous => {
            let nu = potential.exponent().expect("homogeneous");
            let n = potential.dimension();
            let quad = radial_moment(n, nu, beta, 0)?;
            let exact = radial_moment_exact(n, nu, beta, 0);
            if !exact.is_finite() || exact <= 0.0 {
                return Err(Error::Integrability(format!(
                    "configuration integral of r^{nu} in N = {n} is not finite at beta = {beta}"
                )));
            }
            cross_check("configuration integral", quad, exact)?;
            let area = unit_sphere_area(n);
            Ok(Estimate {
                value: pf * area * quad.value,
                error: pf * area * quad.error,
            })
        }
        PotentialKind::Tabulated => {
            let (z, _) = tabulated_integrals(potential, beta);
            Ok(Estimate {
                value: pf * z,
                error: pf * z * 1e-14,
            })
        }
    }
}

/// `E_c(β)`: `N/(2β)` for the well, `N(2+ν)/(2νβ)` for `r^ν` (checked
/// against quadrature of the energy-weighted phase-space integral), and
/// `N/(2β) + ⟨V⟩` for tabulated potentials.
pub fn mean_energy_classical(potential: &Potential, beta: f64) -> Result<f64> {
    check_beta(beta)?;
    let n = potential.dimension() as f64;
    let kinetic = n / (2.0 * beta);
    match potential.kind() {
        PotentialKind::Box => Ok(kinetic),
        PotentialKind::Homogeneous => {
            let nu = potential.exponent().expect("homogeneous");
            let closed = n * (2.0 + nu) / (2.0 * nu * beta);
            let z = radial_moment(potential.dimension(), nu, beta, 0)?;
            let v = radial_moment(potential.dimension(), nu, beta, 1)?;
            let quad = Estimate {
                value: kinetic + v.value / z.value,
                error: (v.error / z.value) + v.value * z.error / (z.value * z.value),
            };
            cross_check("classical mean energy", quad, closed)?;
            Ok(closed)
        }
        PotentialKind::Tabulated => {
            let (z, ev) = tabulated_integrals(potential, beta);
            Ok(kinetic + ev / z)
        }
    }
}

/// `S_c(β, h) = βE_c + ln Z_c - N ln(2πh)`.
pub fn entropy_classical(potential: &Potential, beta: f64, planck: f64) -> Result<f64> {
    if !(planck > 0.0) {
        return Err(Error::Argument(format!("Planck parameter h must be positive, got {planck}")));
    }
    let ec = mean_energy_classical(potential, beta)?;
    let zc = z_classical(potential, beta)?;
    Ok(beta * ec + zc.value.ln() - potential.dimension() as f64 * (2.0 * PI * planck).ln())
}

/// `Ψ(λ) = -λΦ'/Φ + ln Φ` with `Φ(λ) = Σ e^{-λE_n}`, and its derivative.
#[derive(Debug, Clone, Copy, PartialEq)]
pub struct Psi {
    pub value: f64,
    pub derivative: f64,
}

/// Evaluates `Ψ` and the closed form
/// `Ψ'(λ) = -λ Σ_{n>m} (E_n - E_m)² e^{-λ(E_n+E_m)} / Φ²`.
/// The pair sum is quadratic in the number of levels.
pub fn psi(levels: &[f64], lambda: f64) -> Result<Psi> {
    if levels.is_empty() {
        return Err(Error::Argument("psi needs at least one level".into()));
    }
    if !(lambda > 0.0 && lambda.is_finite()) {
        return Err(Error::Argument(format!("lambda must be positive, got {lambda}")));
    }
    if levels.iter().any(|e| !e.is_finite()) {
        return Err(Error::Argument("levels must be finite".into()));
    }
    let e_min = levels.iter().cloned().fold(f64::INFINITY, f64::min);
    let w: Vec<f64> = levels.iter().map(|e| (-lambda * (e - e_min)).exp()).collect();
    let phi: f64 = w.iter().sum();
    let p: Vec<f64> = w.iter().map(|x| x / phi).collect();
    let mean: f64 = p.iter().zip(levels).map(|(p, e)| p * (e - e_min)).sum();
    let value = lambda * mean + phi.ln();
    let mut pairs = CompensatedSum::new();
    for n in 0..levels.len() {
        for m in 0..n {
            let d = levels[n] - levels[m];
            pairs.add(d * d * p[n] * p[m]);
        }
    }
    Ok(Psi {
        value,
        derivative: -lambda * pairs.value(),
    })
}

/// All ensemble quantities at one `(β, h)`.
#[derive(Debug, Clone, PartialEq, Serialize, Deserialize)]
pub struct ThermoPoint {
    pub beta: f64,
    pub planck: f64,
    pub dimension: usize,
    pub z_quantum: f64,
    pub ln_z_quantum: f64,
    /// Relative error bound on `Z_q` (tail plus level errors).
    pub z_quantum_error: f64,
    pub z_classical: f64,
    /// Absolute error estimate on `Z_c`.
    pub z_classical_error: f64,
    pub e_quantum: f64,
    pub e_quantum_error: f64,
    pub e_classical: f64,
    pub s_quantum: f64,
    pub ln_s_quantum: f64,
    pub s_quantum_error: f64,
    /// Absolute error bound on `ln S_q`.
    pub ln_s_quantum_error: f64,
    pub s_classical: f64,
    /// Number of leading levels whose Boltzmann weight did not underflow.
    pub levels: usize,
}

impl ThermoPoint {
    /// `ln((2πh)^N Z_q)`.
    pub fn ln_z_scaled(&self) -> f64 {
        self.ln_z_quantum + self.dimension as f64 * (2.0 * PI * self.planck).ln()
    }

    /// `(2πh)^N Z_q`, comparable with `Z_c`.
    pub fn z_scaled(&self) -> f64 {
        self.ln_z_scaled().exp()
    }

    pub fn evaluate(potential: &Potential, spectrum: &Spectrum, beta: f64) -> Result<Self> {
        let planck = spectrum.planck();
        let s = sums(spectrum, beta)?;
        let zc = z_classical(potential, beta)?;
        let ec = mean_energy_classical(potential, beta)?;
        let sc = beta * ec + zc.value.ln() - potential.dimension() as f64 * (2.0 * PI * planck).ln();
        let ln_z = s.ln_z(beta);
        let ln_s = ln_entropy(spectrum, beta, &s);
        Ok(Self {
            beta,
            planck,
            dimension: potential.dimension(),
            z_quantum: ln_z.exp(),
            ln_z_quantum: ln_z,
            z_quantum_error: s.z_relative_error(beta),
            z_classical: zc.value,
            z_classical_error: zc.error,
            e_quantum: s.mean_energy(),
            e_quantum_error: s.energy_error(beta),
            e_classical: ec,
            s_quantum: s.entropy(beta),
            ln_s_quantum: ln_s,
            s_quantum_error: s.entropy_error(beta),
            ln_s_quantum_error: ln_entropy_error(spectrum, beta, &s, ln_s),
            s_classical: sc,
            levels: s.used,
        })
    }
}

/// A model prepared for sweeps over `(β, h)`.
///
/// Potentials with the scaling law `E_n(h) = φ(h) E_n(1)` solve one base
/// spectrum at `h = 1`, deep enough for the smallest `β φ(h)` requested, and
/// rescale it. Tabulated potentials are solved once per `h`.
#[derive(Debug, Clone)]
pub struct System {
    potential: Potential,
    policy: TruncationPolicy,
    base: Option<Spectrum>,
    energy_exponent: Option<f64>,
}

impl System {
    /// Prepares `potential` for every combination of the given grids.
    pub fn prepare(potential: Potential, betas: &[f64], planck: &[f64], policy: TruncationPolicy) -> Result<Self> {
        if betas.is_empty() || planck.is_empty() {
            return Err(Error::Argument("beta and h grids must be non-empty".into()));
        }
        for &b in betas {
            check_beta(b)?;
        }
        if let Some(h) = planck.iter().find(|h| !(**h > 0.0 && h.is_finite())) {
            return Err(Error::Argument(format!("Planck parameter h must be positive, got {h}")));
        }
        let energy_exponent = potential.energy_scaling_exponent();
        let beta_min = betas.iter().cloned().fold(f64::INFINITY, f64::min);
        let base = match energy_exponent {
            Some(a) => {
                let lambda_min = planck
                    .iter()
                    .map(|h| beta_min * h.powf(a))
                    .fold(f64::INFINITY, f64::min);
                Some(spectrum::solve(&potential, 1.0, &TruncationPolicy { beta_min: lambda_min, ..policy })?)
            }
            None => None,
        };
        Ok(Self {
            potential,
            policy: TruncationPolicy { beta_min, ..policy },
            base,
            energy_exponent,
        })
    }

    pub fn potential(&self) -> &Potential {
        &self.potential
    }

    /// The cached `h = 1` spectrum, if the model rescales.
    pub fn base_spectrum(&self) -> Option<&Spectrum> {
        self.base.as_ref()
    }

    pub fn spectrum(&self, planck: f64) -> Result<Spectrum> {
        match (&self.base, self.energy_exponent) {
            (Some(base), Some(a)) => spectrum::rescale(base, planck, a),
            _ => spectrum::solve(&self.potential, planck, &self.policy),
        }
    }

    pub fn point(&self, beta: f64, planck: f64) -> Result<ThermoPoint> {
        ThermoPoint::evaluate(&self.potential, &self.spectrum(planck)?, beta)
    }

    /// Evaluates the grid in row-major order (`h` outer, `β` inner),
    /// solving each `h` once.
    pub fn table(&self, betas: &[f64], planck: &[f64]) -> Vec<TableRow> {
        planck
            .par_iter()
            .flat_map_iter(|&h| {
                let spec = self.spectrum(h);
                betas
                    .iter()
                    .map(|&beta| TableRow {
                        beta,
                        planck: h,
                        point: spec
                            .as_ref()
                            .map_err(Clone::clone)
                            .and_then(|s| ThermoPoint::evaluate(&self.potential, s, beta)),
                    })
                    .collect::<Vec<_>>()
            })
            .collect()
    }
}

/// One grid point of a table; failures are kept in place.
#[derive(Debug, Clone)]
pub struct TableRow {
    pub beta: f64,
    pub planck: f64,
    pub point: Result<ThermoPoint>,
}

impl TableRow {
    /// Checks `S_q = βE_q + ln Z_q` and `S_c = βE_c + ln Z_c - N ln(2πh)`
    /// to `1e-10` absolute.
    pub fn check_identities(&self) -> Result<()> {
        let p = match &self.point {
            Ok(p) => p,
            Err(e) => return Err(e.clone()),
        };
        let n = p.dimension as f64;
        let q = p.beta * p.e_quantum + p.ln_z_quantum;
        let c = p.beta * p.e_classical + p.z_classical.ln() - n * (2.0 * PI * p.planck).ln();
        let (dq, dc) = ((p.s_quantum - q).abs(), (p.s_classical - c).abs());
        if dq > 1e-10 || dc > 1e-10 {
            return Err(Error::Contract(format!(
                "entropy identities off by {dq:e} (quantum) and {dc:e} (classical)"
            )));
        }
        if !(p.z_scaled() > 0.0) {
            return Err(Error::Range {
                x: p.ln_z_scaled(),
                lo: f64::MIN_POSITIVE.ln(),
                hi: f64::MAX.ln(),
            });
        }
        Ok(())
    }
}

pub const TABLE_HEADER: [&str; 8] = ["beta", "h", "Zq_scaled", "Zc", "Eq", "Ec", "Sq", "Sc"];

fn row_values(p: &ThermoPoint) -> [f64; 8] {
    [
        p.beta,
        p.planck,
        p.z_scaled(),
        p.z_classical,
        p.e_quantum,
        p.e_classical,
        p.s_quantum,
        p.s_classical,
    ]
}

/// Writes the table as CSV with 17 significant digits. A trailing `status`
/// column appears only when some row failed its evaluation or identity check.
pub fn write_table_csv<W: Write>(rows: &[TableRow], out: W) -> Result<()> {
    let statuses: Vec<Option<String>> = rows.iter().map(|r| r.check_identities().err().map(|e| e.to_string())).collect();
    let with_status = statuses.iter().any(Option::is_some);
    let mut w = csv::Writer::from_writer(out);
    let mut header: Vec<&str> = TABLE_HEADER.to_vec();
    if with_status {
        header.push("status");
    }
    w.write_record(&header)?;
    for (row, status) in rows.iter().zip(&statuses) {
        let mut record: Vec<String> = match &row.point {
            Ok(p) => row_values(p).iter().map(|v| format!("{v:.16e}")).collect(),
            Err(_) => {
                let mut r = vec![format!("{:.16e}", row.beta), format!("{:.16e}", row.planck)];
                r.extend(std::iter::repeat_n(String::new(), 6));
                r
            }
        };
        if with_status {
            record.push(status.clone().unwrap_or_else(|| "ok".into()));
        }
        w.write_record(&record)?;
    }
    w.flush()?;
    Ok(())
}

/// JSON array mirroring the CSV columns (values as numbers or `null`).
pub fn table_json(rows: &[TableRow]) -> serde_json::Value {
    let statuses: Vec<Option<String>> = rows.iter().map(|r| r.check_identities().err().map(|e| e.to_string())).collect();
    let with_status = statuses.iter().any(Option::is_some);
    let items = rows
        .iter()
        .zip(&statuses)
        .map(|(row, status)| {
            let mut obj = serde_json::Map::new();
            let values: Vec<Option<f64>> = match &row.point {
                Ok(p) => row_values(p).iter().map(|v| Some(*v)).collect(),
                Err(_) => {
                    let mut v = vec![Some(row.beta), Some(row.planck)];
                    v.extend(std::iter::repeat_n(None, 6));
                    v
                }
            };
            for (key, v) in TABLE_HEADER.iter().zip(values) {
                obj.insert((*key).into(), v.map_or(serde_json::Value::Null, serde_json::Value::from));
            }
            if with_status {
                obj.insert("status".into(), status.clone().unwrap_or_else(|| "ok".into()).into());
            }
            serde_json::Value::Object(obj)
        })
        .collect();
    serde_json::Value::Array(items)
}

#[cfg(test)]
mod tests {
    use super::*;
    use crate::spectrum::solve_box;

    fn close(a: f64, b: f64, rel: f64) -> bool {
        (a - b).abs() <= rel * b.abs()
    }

    fn finite(levels: &[f64]) -> Spectrum {
        Spectrum::from_levels(levels.to_vec(), 1.0).unwrap()
    }

    #[test]
    fn z_quantum_examples() {
        let z = z_quantum(&finite(&[1.0, 2.0]), 1.0).unwrap();
        assert!(close(z.value, (-1f64).exp() + (-2f64).exp(), 1e-15));
        assert_eq!(z.tail, 0.0);

        let well = solve_box(&[1.0], 1.0, 1.0, 50).unwrap();
        let z = z_quantum(&well, 1.0).unwrap();
        assert!(close(z.value, 7.191_886_031_114_359e-3, 1e-14), "{}", z.value);

        let s = finite(&[1.0, 1.0, 3.0]);
        for beta in [10.0, 20.0, 40.0] {
            let z = z_quantum(&s, beta).unwrap();
            let ratio = (z.ln_value + beta).exp();
            assert!((ratio - 2.0).abs() < 3.0 * (-2.0 * beta).exp() + 1e-13);
        }
    }

    #[test]
    fn z_quantum_refuses_fat_tails() {
        let well = solve_box(&[1.0], 1.0, 1.0, 10).unwrap();
        assert!(matches!(z_quantum(&well, 1e-3), Err(Error::Truncation { .. })));
    }

    #[test]
    fn z_classical_examples() {
        let b1 = Potential::box_well(&[1.0]).unwrap();
        assert!(close(z_classical(&b1, 1.0).unwrap().value, (2.0 * PI).sqrt(), 1e-15));
        let b3 = Potential::box_well(&[1.0, 1.0, 2.0]).unwrap();
        assert!(close(z_classical(&b3, 2.0).unwrap().value, PI.powf(1.5) * 2.0, 1e-14));
        let h = Potential::homogeneous(1, 2.0).unwrap();
        let z = z_classical(&h, 1.0).unwrap();
        assert!(close(z.value, 4.442_882_938_158_366, 1e-11), "{}", z.value);
    }

    #[test]
    fn z_classical_matches_gamma_form_across_dimensions() {
        for (n, nu, beta) in [(1, 4.0, 0.3), (2, 2.0, 1.7), (3, 1.0, 0.05), (3, 6.0, 9.0)] {
            let p = Potential::homogeneous(n, nu).unwrap();
            let z = z_classical(&p, beta).unwrap();
            let exact = momentum_factor(&p, beta) * unit_sphere_area(n) * radial_moment_exact(n, nu, beta, 0);
            assert!(close(z.value, exact, 1e-10));
        }
    }

    #[test]
    fn mean_energy_examples() {
        assert!(close(mean_energy_quantum(&finite(&[1.0, 1.0]), 3.0).unwrap().value, 1.0, 1e-15));
        let e = mean_energy_quantum(&finite(&[1.0, 2.0]), 1e-8).unwrap().value;
        assert!((e - 1.5).abs() < 1e-7);

        let b3 = Potential::box_well(&[1.0, 1.0, 1.0]).unwrap();
        assert_eq!(mean_energy_classical(&b3, 2.0).unwrap(), 0.75);
        let h = Potential::homogeneous(1, 2.0).unwrap();
        assert!(close(mean_energy_classical(&h, 1.0).unwrap(), 1.0, 1e-15));
        let stiff = Potential::homogeneous(2, 1e6).unwrap();
        assert!((mean_energy_classical(&stiff, 1.0).unwrap() - 1.0).abs() < 1e-4);
    }

    #[test]
    fn mean_energy_is_minus_log_derivative() {
        let well = solve_box(&[1.0], 1.0, 1.0, 4000).unwrap();
        let beta = 0.01;
        let d = 1e-4 * beta;
        let lz = |b: f64| z_quantum(&well, b).unwrap().ln_value;
        let fd = -(lz(beta + d) - lz(beta - d)) / (2.0 * d);
        let e = mean_energy_quantum(&well, beta).unwrap().value;
        assert!(close(e, fd, 1e-6), "{e} vs {fd}");

        for p in [
            Potential::box_well(&[1.0, 2.0]).unwrap(),
            Potential::homogeneous(1, 4.0).unwrap(),
            Potential::homogeneous(2, 1.0).unwrap(),
        ] {
            let beta = 0.7;
            let d = 1e-4 * beta;
            let lz = |b: f64| z_classical(&p, b).unwrap().value.ln();
            let fd = -(lz(beta + d) - lz(beta - d)) / (2.0 * d);
            assert!(close(mean_energy_classical(&p, beta).unwrap(), fd, 1e-6));
        }
    }

    #[test]
    fn entropy_examples() {
        let s = entropy_quantum(&finite(&[1.0]), 2.0).unwrap();
        assert_eq!(s.value, 0.0);
        let s = entropy_quantum(&finite(&[1.0, 2.0]), 1e-8).unwrap();
        assert!((s.value - 2f64.ln()).abs() < 1e-8);
        let s = entropy_quantum(&finite(&[1.0, 2.0, 3.0]), 1.0).unwrap();
        assert!(close(s.value, 0.832_395_581_839_938_9, 1e-14));
        let direct: f64 = -s.probabilities.iter().map(|p| p * p.ln()).sum::<f64>();
        assert!(close(s.value, direct, 1e-14));

        let b1 = Potential::box_well(&[1.0]).unwrap();
        assert!(close(entropy_classical(&b1, 1.0, 1.0).unwrap(), -0.418_938_533_204_672_7, 1e-14));
        let h = Potential::homogeneous(1, 2.0).unwrap();
        assert!(close(entropy_classical(&h, 1.0, 1.0).unwrap(), 0.653_426_409_720_027_3, 1e-10));
        let diff = entropy_classical(&h, 1.0, 2.0).unwrap() - entropy_classical(&h, 1.0, 0.5).unwrap();
        assert!((diff + 4f64.ln()).abs() < 1e-13);
    }

    #[test]
    fn deep_quantum_entropy_keeps_its_logarithm() {
        let well = solve_box(&[1.0], 1.0, 4.0, 64).unwrap();
        let s = entropy_quantum(&well, 10.0).unwrap();
        assert_eq!(s.value, 0.0);
        let gap = well.levels()[1] - well.levels()[0];
        // S ≈ (1 + β·gap) e^{-β·gap}
        let expect = -10.0 * gap + (1.0 + 10.0 * gap).ln();
        assert!((s.ln_value - expect).abs() < 1e-9, "{} vs {expect}", s.ln_value);
    }

    #[test]
    fn psi_examples() {
        let p = psi(&[5.0], 2.0).unwrap();
        assert!(p.value.abs() < 1e-15 && p.derivative == 0.0);
        let p = psi(&[1.0, 2.0], 1.0).unwrap();
        let phi = (-1f64).exp() + (-2f64).exp();
        assert!(close(p.derivative, -(-3f64).exp() / (phi * phi), 1e-14));
        let levels = [1.0, 2.0, 3.0];
        let d = 1e-5;
        let fd = (psi(&levels, 0.7 + d).unwrap().value - psi(&levels, 0.7 - d).unwrap().value) / (2.0 * d);
        assert!(close(psi(&levels, 0.7).unwrap().derivative, fd, 1e-7));
        assert!(psi(&[], 1.0).is_err());
    }

    #[test]
    fn psi_equals_entropy_of_rescaled_levels() {
        let levels = [0.5, 1.25, 2.0, 4.5];
        let s = entropy_quantum(&finite(&levels), 0.8).unwrap();
        assert!(close(psi(&levels, 0.8).unwrap().value, s.value, 1e-13));
    }

    #[test]
    fn thermo_point_identities_and_table() {
        let p = Potential::box_well(&[1.0]).unwrap();
        let sys = System::prepare(p, &[1.0, 0.1], &[1.0, 0.5], TruncationPolicy::default()).unwrap();
        let rows = sys.table(&[1.0, 0.1], &[1.0, 0.5]);
        assert_eq!(rows.len(), 4);
        for r in &rows {
            r.check_identities().unwrap();
        }
        let first = rows[0].point.as_ref().unwrap();
        assert!(close(first.z_classical, (2.0 * PI).sqrt(), 1e-15));
        let mut buf = Vec::new();
        write_table_csv(&rows, &mut buf).unwrap();
        let text = String::from_utf8(buf).unwrap();
        assert!(text.starts_with("beta,h,Zq_scaled,Zc,Eq,Ec,Sq,Sc\n"));
        assert!(!text.contains("status"));
        let json = table_json(&rows);
        assert_eq!(json.as_array().unwrap().len(), 4);
        assert_eq!(json[0]["Zc"].as_f64().unwrap(), first.z_classical);
    }

    #[test]
    fn rescaled_system_matches_direct_solve() {
        let p = Potential::homogeneous(1, 1.0).unwrap();
        let sys = System::prepare(p.clone(), &[0.5], &[0.5, 2.0], TruncationPolicy::default()).unwrap();
        let via_rescale = sys.point(0.5, 2.0).unwrap();
        let direct = spectrum::solve(&p, 2.0, &TruncationPolicy::new(0.5)).unwrap();
        let direct = ThermoPoint::evaluate(&p, &direct, 0.5).unwrap();
        // The two level counts differ, so agreement is limited by the
        // truncation tolerance.
        assert!((via_rescale.ln_z_quantum - direct.ln_z_quantum).abs() < 2.0 * TAIL_TOLERANCE);
        assert!(close(via_rescale.s_quantum, direct.s_quantum, 1e-9));
    }

    #[test]
    fn tabulated_classical_sums_are_exact_for_linear_pieces() {
        // V = x on [0, 3] sampled at three points is exactly linear.
        let p = Potential::tabulated(vec![0.0, 1.0, 3.0], vec![0.0, 1.0, 3.0]).unwrap();
        let beta: f64 = 1.3;
        let conf = (1.0 - (-3.0 * beta).exp()) / beta;
        let z = z_classical(&p, beta).unwrap().value;
        assert!(close(z, (2.0 * PI / beta).sqrt() * conf, 1e-14));
        // ⟨V⟩ = 1/β - 3 e^{-3β} / (1 - e^{-3β})
        let mean_v = 1.0 / beta - 3.0 * (-3.0 * beta).exp() / (1.0 - (-3.0 * beta).exp());
        assert!(close(mean_energy_classical(&p, beta).unwrap(), 0.5 / beta + mean_v, 1e-13));
        // Near-flat piece exercises the series branch.
        let flat = Potential::tabulated(vec![0.0, 1.0], vec![1.0, 1.0 + 1e-9]).unwrap();
        assert!(close(mean_energy_classical(&flat, 1.0).unwrap(), 0.5 + 1.0 + 0.5e-9, 1e-15));
    }

    mod props {
        use super::*;
        use proptest::prelude::*;

        fn level_set() -> impl Strategy<Value = Vec<f64>> {
            prop::collection::vec(0.1f64..10.0, 2..8).prop_map(|mut v| {
                v.sort_by(f64::total_cmp);
                v
            })
        }

        proptest! {
            #[test]
            fn entropy_identity(levels in level_set(), beta in 0.01f64..20.0) {
                let s = finite(&levels);
                let z = z_quantum(&s, beta).unwrap();
                let e = mean_energy_quantum(&s, beta).unwrap();
                let ent = entropy_quantum(&s, beta).unwrap();
                prop_assert!((ent.value - (beta * e.value + z.ln_value)).abs() < 1e-10);
                let total: f64 = ent.probabilities.iter().sum();
                prop_assert!((total - 1.0).abs() < 1e-12);
                prop_assert!(ent.probabilities.iter().all(|p| *p > 0.0 && *p <= 1.0));
            }

            #[test]
            fn psi_is_decreasing(levels in level_set(), l1 in 0.01f64..5.0, dl in 0.01f64..5.0) {
                prop_assume!(levels.first() != levels.last());
                let a = psi(&levels, l1).unwrap();
                let b = psi(&levels, l1 + dl).unwrap();
                prop_assert!(b.value < a.value);
                prop_assert!(a.derivative < 0.0);
            }

            #[test]
            fn gibbs_maximizes_entropy_at_fixed_energy(
                levels in prop::collection::vec(0.1f64..10.0, 3..8),
                beta in 0.05f64..3.0,
                dir in prop::collection::vec(-1.0f64..1.0, 8),
                eps in 1e-4f64..1e-2,
            ) {
                let mut levels = levels;
                levels.sort_by(f64::total_cmp);
                prop_assume!(levels[levels.len() - 1] - levels[0] > 0.1);
                let ent = entropy_quantum(&finite(&levels), beta).unwrap();
                let p = &ent.probabilities;
                let k = levels.len();
                // Project the direction onto {Σδ = 0, ΣE δ = 0}.
                let mut d: Vec<f64> = dir[..k].to_vec();
                let mean_e = levels.iter().sum::<f64>() / k as f64;
                let centered: Vec<f64> = levels.iter().map(|e| e - mean_e).collect();
                let dm = d.iter().sum::<f64>() / k as f64;
                d.iter_mut().for_each(|x| *x -= dm);
                let cc: f64 = centered.iter().map(|c| c * c).sum();
                let dc: f64 = d.iter().zip(&centered).map(|(a, b)| a * b).sum();
                d.iter_mut().zip(&centered).for_each(|(x, c)| *x -= dc / cc * c);
                let norm = d.iter().map(|x| x * x).sum::<f64>().sqrt();
                prop_assume!(norm > 1e-6);
                let min_p = p.iter().cloned().fold(1.0, f64::min);
                let step = eps * min_p / norm;
                let q: Vec<f64> = p.iter().zip(&d).map(|(p, x)| p + step * x).collect();
                prop_assume!(q.iter().all(|x| *x > 0.0));
                let sq: f64 = -q.iter().map(|x| x * x.ln()).sum::<f64>();
                prop_assert!(sq <= ent.value + 1e-9);
            }
        }
    }
}
