//! Grid sweeps that test the quantum–classical inequalities, limits and
//! monotonicity properties, one [`VerificationReport`] per claim.
//!
//! Every margin is normalized (relative for sums, energies and entropies,
//! absolute for entropy differences) and compared against the error bounds
//! in force: a claim holds only when its worst margin exceeds the bound.

use std::cell::Cell;
use std::f64::consts::PI;
use std::fmt;
use std::str::FromStr;

use serde::Serialize;

use crate::ensemble::{self, System, ThermoPoint};
use crate::error::{Error, Result};
use crate::numeric::{integrate, QuadratureOptions};
use crate::potential::{ModelDescriptor, Potential, PotentialKind};
use crate::spectrum::{self, Spectrum, TruncationPolicy};

/// Identifier of a checked statement.
#[derive(Debug, Clone, Copy, PartialEq, Eq, Hash, Serialize)]
pub enum ClaimId {
    /// `(2πh)^N Z_q ≤ Z_c`.
    #[serde(rename = "C1_1")]
    C11,
    /// `E_q ≥ E_c`.
    #[serde(rename = "C1_2")]
    C12,
    /// `(2πh)^N Z_q / Z_c → 1` as `β → 0`.
    #[serde(rename = "C1_3_Z")]
    C13Z,
    /// `E_q / E_c → 1` as `β → 0`.
    #[serde(rename = "C1_3_E")]
    C13E,
    /// `∫_τ^β (E_q - E_c) dγ = [ln(Z_c / (2πh)^N Z_q)]_τ^β`.
    #[serde(rename = "T3_1")]
    T31,
    /// `S_q` strictly decreasing in β.
    #[serde(rename = "T4_1_beta")]
    T41Beta,
    /// `S_q` strictly decreasing in h.
    #[serde(rename = "T4_1_h")]
    T41H,
    /// `h^N Z_q` decreasing in h.
    #[serde(rename = "C4_1")]
    C41,
    /// `d/dh (h^N Z_q) = h^{N-1} Z_q (N - αβE_q)`.
    #[serde(rename = "P4_1")]
    P41,
    /// `sign(N - αβE_q) = -sign(E_q - E_c)`.
    #[serde(rename = "P4_3")]
    P43,
    /// `S_q - S_c → 0` as `h → 0`, with the energy and sum gaps.
    #[serde(rename = "WEHRL_S")]
    WehrlS,
}

impl ClaimId {
    pub fn as_str(self) -> &'static str {
        match self {
            ClaimId::C11 => "C1_1",
            ClaimId::C12 => "C1_2",
            ClaimId::C13Z => "C1_3_Z",
            ClaimId::C13E => "C1_3_E",
            ClaimId::T31 => "T3_1",
            ClaimId::T41Beta => "T4_1_beta",
            ClaimId::T41H => "T4_1_h",
            ClaimId::C41 => "C4_1",
            ClaimId::P41 => "P4_1",
            ClaimId::P43 => "P4_3",
            ClaimId::WehrlS => "WEHRL_S",
        }
    }

    /// Proven statements, as opposed to conjectures and asymptotic remarks.
    /// A violation of one of these on a shipped model is a defect.
    pub fn is_theorem(self) -> bool {
        matches!(
            self,
            ClaimId::C11 | ClaimId::T31 | ClaimId::T41Beta | ClaimId::T41H | ClaimId::P41 | ClaimId::P43
        )
    }
}

impl fmt::Display for ClaimId {
    fn fmt(&self, f: &mut fmt::Formatter<'_>) -> fmt::Result {
        f.write_str(self.as_str())
    }
}

#[derive(Debug, Clone, Copy, PartialEq, Eq, Serialize)]
pub enum Status {
    Holds,
    Violated,
    Inconclusive,
}

impl fmt::Display for Status {
    fn fmt(&self, f: &mut fmt::Formatter<'_>) -> fmt::Result {
        f.write_str(match self {
            Status::Holds => "Holds",
            Status::Violated => "Violated",
            Status::Inconclusive => "Inconclusive",
        })
    }
}

/// Violated iff `worst < -tolerance`; Holds iff `worst > tolerance` and no
/// point failed; Inconclusive otherwise.
pub fn classify(worst_margin: f64, tolerance: f64, had_failures: bool) -> Status {
    if worst_margin < -tolerance {
        Status::Violated
    } else if had_failures || !(worst_margin > tolerance) {
        Status::Inconclusive
    } else {
        Status::Holds
    }
}

#[derive(Debug, Clone, PartialEq, Serialize)]
pub struct Grid {
    pub beta: Vec<f64>,
    pub h: Vec<f64>,
}

#[derive(Debug, Clone, PartialEq, Serialize)]
pub struct VerificationReport {
    pub claim_id: ClaimId,
    pub model: ModelDescriptor,
    pub grid: Grid,
    pub status: Status,
    pub worst_margin: f64,
    pub tolerance: f64,
    pub notes: Vec<String>,
}

impl VerificationReport {
    fn new(claim_id: ClaimId, model: ModelDescriptor, grid: Grid, acc: Accumulator) -> Self {
        let status = classify(acc.worst, acc.tolerance, acc.failures > 0);
        let mut notes = acc.notes;
        if acc.failures > 0 {
            notes.push(format!("{} grid point(s) could not be evaluated", acc.failures));
        }
        Self {
            claim_id,
            model,
            grid,
            status,
            worst_margin: acc.worst,
            tolerance: acc.tolerance,
            notes,
        }
    }

    /// A report for a model or grid that could not be prepared at all.
    fn unavailable(claim_id: ClaimId, model: ModelDescriptor, grid: Grid, err: &Error) -> Self {
        Self {
            claim_id,
            model,
            grid,
            status: Status::Inconclusive,
            worst_margin: f64::NAN,
            tolerance: f64::NAN,
            notes: vec![format!("evaluation failed: {err}")],
        }
    }

    /// One line for the terminal.
    pub fn summary(&self) -> String {
        format!(
            "{:<10} {:<12} worst_margin={:<12.4e} tolerance={:<10.3e} {}",
            self.claim_id.as_str(),
            self.status.to_string(),
            self.worst_margin,
            self.tolerance,
            self.notes.join("; ")
        )
    }
}

/// Running minimum of margins with the matching error bound.
struct Accumulator {
    worst: f64,
    tolerance: f64,
    failures: usize,
    notes: Vec<String>,
}

impl Accumulator {
    fn new() -> Self {
        Self {
            worst: f64::INFINITY,
            tolerance: 0.0,
            failures: 0,
            notes: Vec::new(),
        }
    }

    fn push(&mut self, margin: f64, tolerance: f64) {
        self.worst = self.worst.min(margin);
        self.tolerance = self.tolerance.max(tolerance);
    }

    fn fail(&mut self, beta: f64, h: f64, err: &Error) {
        if self.failures < 3 {
            self.notes.push(format!("beta={beta:e}, h={h:e}: {err}"));
        }
        self.failures += 1;
    }
}

/// `n` points log-spaced from `lo` to `hi` inclusive.
pub fn log_space(lo: f64, hi: f64, n: usize) -> Vec<f64> {
    if n == 1 {
        return vec![lo];
    }
    let (a, b) = (lo.ln(), hi.ln());
    (0..n).map(|i| (a + (b - a) * i as f64 / (n - 1) as f64).exp()).collect()
}

/// Log-spaced grid with `per_decade` points per factor of ten.
pub fn log_grid(lo: f64, hi: f64, per_decade: usize) -> Vec<f64> {
    let n = (per_decade as f64 * (hi / lo).log10()).round() as usize + 1;
    log_space(lo, hi, n)
}

/// β from 1e-2 to 10, nine points per decade.
pub fn default_beta_grid() -> Vec<f64> {
    log_grid(1e-2, 10.0, 9)
}

/// h from 0.25 to 4, nine points per decade.
pub fn default_h_grid() -> Vec<f64> {
    log_grid(0.25, 4.0, 9)
}

/// `start, start/2, …` with `count` entries.
pub fn halving(start: f64, count: usize) -> Vec<f64> {
    (0..count).map(|i| start * 0.5f64.powi(i as i32)).collect()
}

/// Truncation used by sweeps: tighter than the ensemble default so tail
/// bounds stay far below the semiclassical gaps.
pub fn sweep_policy() -> TruncationPolicy {
    TruncationPolicy {
        tail_tolerance: 1e-12,
        ..TruncationPolicy::default()
    }
}

fn relative_z_error(p: &ThermoPoint) -> f64 {
    p.z_quantum_error + p.z_classical_error / p.z_classical + 1e-14
}

fn sweep(potential: &Potential, betas: &[f64], hs: &[f64], policy: TruncationPolicy) -> Result<Vec<ensemble::TableRow>> {
    let system = System::prepare(potential.clone(), betas, hs, policy)?;
    Ok(system.table(betas, hs))
}

fn grid_check(
    claim: ClaimId,
    potential: &Potential,
    betas: &[f64],
    hs: &[f64],
    policy: TruncationPolicy,
    margin: impl Fn(&ThermoPoint) -> (f64, f64),
) -> VerificationReport {
    let grid = Grid {
        beta: betas.to_vec(),
        h: hs.to_vec(),
    };
    let rows = match sweep(potential, betas, hs, policy) {
        Ok(rows) => rows,
        Err(e) => return VerificationReport::unavailable(claim, potential.descriptor(), grid, &e),
    };
    let mut acc = Accumulator::new();
    let mut at = (f64::NAN, f64::NAN);
    for row in &rows {
        match &row.point {
            Ok(p) => {
                let (m, tol) = margin(p);
                if m < acc.worst {
                    at = (row.beta, row.planck);
                }
                acc.push(m, tol);
            }
            Err(e) => acc.fail(row.beta, row.planck, e),
        }
    }
    acc.notes.insert(0, format!("worst at beta={:e}, h={:e}", at.0, at.1));
    VerificationReport::new(claim, potential.descriptor(), grid, acc)
}

/// `(2πh)^N Z_q ≤ Z_c` on the grid. Margin `1 - (2πh)^N Z_q / Z_c`.
pub fn check_c11(potential: &Potential, betas: &[f64], hs: &[f64], policy: TruncationPolicy) -> VerificationReport {
    grid_check(ClaimId::C11, potential, betas, hs, policy, |p| {
        (-(p.ln_z_scaled() - p.z_classical.ln()).exp_m1(), relative_z_error(p))
    })
}

/// `E_q ≥ E_c` on the grid. Margin `(E_q - E_c) / E_c`.
pub fn check_c12(potential: &Potential, betas: &[f64], hs: &[f64], policy: TruncationPolicy) -> VerificationReport {
    grid_check(ClaimId::C12, potential, betas, hs, policy, |p| {
        (
            (p.e_quantum - p.e_classical) / p.e_classical,
            p.e_quantum_error / p.e_classical + 1e-12,
        )
    })
}

/// Judges a sequence of ratios approaching 1: the deviation `|R - 1|` must
/// shrink strictly over the last four points and end below `threshold`.
///
/// Margin `threshold - |R_last - 1|`; a non-shrinking tail is
/// Inconclusive. The notes carry the log-log slope of `|R - 1|` against
/// the sequence parameter.
pub fn asymptotic_report(
    claim: ClaimId,
    model: ModelDescriptor,
    grid: Grid,
    parameter: &[f64],
    ratios: &[f64],
    errors: &[f64],
    threshold: f64,
) -> VerificationReport {
    let dev: Vec<f64> = ratios.iter().map(|r| (r - 1.0).abs()).collect();
    let mut acc = Accumulator::new();
    let last = dev.len().saturating_sub(1);
    acc.push(threshold - dev[last], errors[last] + 1e-14);
    let tail = &dev[dev.len().saturating_sub(4)..];
    let shrinking = tail.windows(2).all(|w| w[1] < w[0] || (w[0] == 0.0 && w[1] == 0.0));
    let all_shrinking = dev.windows(2).all(|w| w[1] <= w[0]);
    acc.notes.push(format!(
        "final |R-1| = {:.6e} at {:e}; last four {}; full range {}",
        dev[last],
        parameter[last],
        if shrinking { "shrinking" } else { "not shrinking" },
        if all_shrinking { "monotone" } else { "not monotone" }
    ));
    if let Some(slope) = log_log_slope(parameter, &dev) {
        acc.notes.push(format!("log-log slope of |R-1| = {slope:.4}"));
    }
    let mut report = VerificationReport::new(claim, model, grid, acc);
    if !shrinking && report.status != Status::Violated {
        report.status = Status::Inconclusive;
    }
    report
}

fn log_log_slope(x: &[f64], y: &[f64]) -> Option<f64> {
    let pts: Vec<(f64, f64)> = x
        .iter()
        .zip(y)
        .filter(|(a, b)| **a > 0.0 && **b > 0.0)
        .map(|(a, b)| (a.ln(), b.ln()))
        .collect();
    if pts.len() < 2 {
        return None;
    }
    let n = pts.len() as f64;
    let (mx, my) = (pts.iter().map(|p| p.0).sum::<f64>() / n, pts.iter().map(|p| p.1).sum::<f64>() / n);
    let sxy: f64 = pts.iter().map(|p| (p.0 - mx) * (p.1 - my)).sum();
    let sxx: f64 = pts.iter().map(|p| (p.0 - mx).powi(2)).sum();
    (sxx > 0.0).then(|| sxy / sxx)
}

/// Ratios `R_Z = (2πh)^N Z_q / Z_c` and `R_E = E_q / E_c` along a
/// decreasing β sequence at fixed `h`. Returns the Z report then the E
/// report.
pub fn check_c13(potential: &Potential, planck: f64, betas: &[f64], policy: TruncationPolicy) -> [VerificationReport; 2] {
    let grid = Grid {
        beta: betas.to_vec(),
        h: vec![planck],
    };
    let model = potential.descriptor();
    let rows = match sweep(potential, betas, &[planck], policy) {
        Ok(rows) => rows,
        Err(e) => {
            return [ClaimId::C13Z, ClaimId::C13E]
                .map(|c| VerificationReport::unavailable(c, model.clone(), grid.clone(), &e))
        }
    };
    let points: Result<Vec<ThermoPoint>> = rows.into_iter().map(|r| r.point).collect();
    let points = match points {
        Ok(p) => p,
        Err(e) => {
            return [ClaimId::C13Z, ClaimId::C13E]
                .map(|c| VerificationReport::unavailable(c, model.clone(), grid.clone(), &e))
        }
    };
    let rz: Vec<f64> = points.iter().map(|p| (p.ln_z_scaled() - p.z_classical.ln()).exp()).collect();
    let ez: Vec<f64> = points.iter().zip(&rz).map(|(p, r)| r * relative_z_error(p)).collect();
    let re: Vec<f64> = points.iter().map(|p| p.e_quantum / p.e_classical).collect();
    let ee: Vec<f64> = points.iter().map(|p| p.e_quantum_error / p.e_classical).collect();
    [
        asymptotic_report(ClaimId::C13Z, model.clone(), grid.clone(), betas, &rz, &ez, 0.02),
        asymptotic_report(ClaimId::C13E, model, grid, betas, &re, &ee, 0.02),
    ]
}

/// Both sides of the integrated energy gap identity over `[τ, β]`.
#[derive(Debug, Clone, Copy, PartialEq)]
pub struct T31Sides {
    /// `∫_τ^β (E_q(γ) - E_c(γ)) dγ` by adaptive quadrature.
    pub lhs: f64,
    /// `[ln(Z_c(γ) / (2πh)^N Z_q(γ))]_τ^β`.
    pub rhs: f64,
    /// Quadrature error plus propagated ensemble error bounds.
    pub error: f64,
}

/// Evaluates [`T31Sides`] on a prepared spectrum.
pub fn t31_sides(potential: &Potential, spectrum: &Spectrum, beta: f64, tau: f64) -> Result<T31Sides> {
    if !(tau > 0.0 && tau <= beta) {
        return Err(Error::Argument(format!("need 0 < tau <= beta, got tau={tau}, beta={beta}")));
    }
    let ln_ratio = |g: f64| -> Result<(f64, f64)> {
        let p = ThermoPoint::evaluate(potential, spectrum, g)?;
        Ok((p.z_classical.ln() - p.ln_z_scaled(), relative_z_error(&p)))
    };
    let (hi, hi_err) = ln_ratio(beta)?;
    let (lo, lo_err) = ln_ratio(tau)?;
    if tau == beta {
        return Ok(T31Sides {
            lhs: 0.0,
            rhs: 0.0,
            error: 0.0,
        });
    }
    let failure: Cell<Option<Error>> = Cell::new(None);
    let energy_error = Cell::new(0.0f64);
    // γ = e^t spreads the 1/γ growth of both energies evenly.
    let integrand = |t: f64| {
        let g = t.exp();
        match (ensemble::mean_energy_quantum(spectrum, g), ensemble::mean_energy_classical(potential, g)) {
            (Ok(q), Ok(c)) => {
                energy_error.set(energy_error.get().max(q.error * g));
                (q.value - c) * g
            }
            (Err(e), _) | (_, Err(e)) => {
                failure.set(Some(e));
                f64::NAN
            }
        }
    };
    let integral = integrate(integrand, tau.ln(), beta.ln(), QuadratureOptions::relative(1e-11));
    if let Some(e) = failure.take() {
        return Err(e);
    }
    let integral = integral?;
    let span = beta.ln() - tau.ln();
    Ok(T31Sides {
        lhs: integral.value,
        rhs: hi - lo,
        error: integral.error + energy_error.get() * span + hi_err + lo_err,
    })
}

/// Checks `|LHS - RHS| < 1e-3·max(1, |RHS|)` and `LHS ≥ -1e-3`.
pub fn check_t31(potential: &Potential, planck: f64, beta: f64, tau: f64, policy: TruncationPolicy) -> Result<VerificationReport> {
    if !(tau > 0.0 && tau <= beta) {
        return Err(Error::Argument(format!("need 0 < tau <= beta, got tau={tau}, beta={beta}")));
    }
    let grid = Grid {
        beta: vec![tau, beta],
        h: vec![planck],
    };
    let model = potential.descriptor();
    let sides = System::prepare(potential.clone(), &[tau, beta], &[planck], policy)
        .and_then(|s| s.spectrum(planck))
        .and_then(|spec| t31_sides(potential, &spec, beta, tau));
    let sides = match sides {
        Ok(s) => s,
        Err(e) => return Ok(VerificationReport::unavailable(ClaimId::T31, model, grid, &e)),
    };
    let mut acc = Accumulator::new();
    let identity = 1e-3 * sides.rhs.abs().max(1.0) - (sides.lhs - sides.rhs).abs();
    acc.push(identity, sides.error);
    acc.push(sides.lhs + 1e-3, sides.error);
    acc.notes.push(format!(
        "LHS = {:.12e}, RHS = {:.12e}, |LHS-RHS| = {:.3e}",
        sides.lhs,
        sides.rhs,
        (sides.lhs - sides.rhs).abs()
    ));
    Ok(VerificationReport::new(ClaimId::T31, model, grid, acc))
}

/// Strict decrease of `S_q` along β (first report) and along h (second)
/// for a base spectrum at `h = 1` that rescales as `E_n(h) = h^a E_n(1)`.
///
/// Margins are the relative drops `1 - S_next / S` taken from `ln S_q`, so
/// the deep quantum regime where `S_q` underflows is still resolved.
pub fn check_t41_spectrum(
    model: ModelDescriptor,
    base: &Spectrum,
    energy_exponent: f64,
    betas: &[f64],
    hs: &[f64],
) -> [VerificationReport; 2] {
    let grid = Grid {
        beta: betas.to_vec(),
        h: hs.to_vec(),
    };
    // values[i][j] = (ln S, error) at h_i, β_j.
    let values: Vec<Vec<Result<(f64, f64)>>> = hs
        .iter()
        .map(|&h| {
            let spec = spectrum::rescale(base, h, energy_exponent);
            betas
                .iter()
                .map(|&b| {
                    let s = spec.as_ref().map_err(Clone::clone)?;
                    let e = ensemble::entropy_quantum(s, b)?;
                    Ok((e.ln_value, e.ln_error))
                })
                .collect()
        })
        .collect();
    type Pair<'a> = ((f64, f64), &'a Result<(f64, f64)>, &'a Result<(f64, f64)>);
    let judge = |pairs: Vec<Pair>, claim: ClaimId| {
        let mut acc = Accumulator::new();
        let mut vacuous = false;
        for ((b, h), a, n) in pairs {
            match (a, n) {
                (Ok((la, ea)), Ok((ln, en))) => {
                    if *la == f64::NEG_INFINITY || *ln == f64::NEG_INFINITY {
                        vacuous = true;
                        continue;
                    }
                    acc.push(-(ln - la).exp_m1(), ea + en);
                }
                (Err(e), _) | (_, Err(e)) => acc.fail(b, h, e),
            }
        }
        if vacuous {
            acc.notes.push("S_q vanishes identically (single level); monotonicity is vacuous".into());
            acc.failures += 1;
        }
        VerificationReport::new(claim, model.clone(), grid.clone(), acc)
    };
    let mut along_beta = Vec::new();
    let mut along_h = Vec::new();
    for (i, &h) in hs.iter().enumerate() {
        for (j, &b) in betas.iter().enumerate() {
            if j + 1 < betas.len() {
                along_beta.push(((b, h), &values[i][j], &values[i][j + 1]));
            }
            if i + 1 < hs.len() {
                along_h.push(((b, h), &values[i][j], &values[i + 1][j]));
            }
        }
    }
    [judge(along_beta, ClaimId::T41Beta), judge(along_h, ClaimId::T41H)]
}

fn sorted(v: &[f64]) -> Vec<f64> {
    let mut v = v.to_vec();
    v.sort_by(f64::total_cmp);
    v
}

/// [`check_t41_spectrum`] for a box or homogeneous potential.
pub fn check_t41(potential: &Potential, betas: &[f64], hs: &[f64], policy: TruncationPolicy) -> Result<[VerificationReport; 2]> {
    let Some(a) = potential.energy_scaling_exponent() else {
        return Err(Error::Argument(
            "entropy monotonicity in h needs a box or homogeneous potential".into(),
        ));
    };
    let (betas, hs) = (sorted(betas), sorted(hs));
    let model = potential.descriptor();
    let grid = Grid {
        beta: betas.clone(),
        h: hs.clone(),
    };
    let system = match System::prepare(potential.clone(), &betas, &hs, policy) {
        Ok(s) => s,
        Err(e) => {
            return Ok([ClaimId::T41Beta, ClaimId::T41H]
                .map(|c| VerificationReport::unavailable(c, model.clone(), grid.clone(), &e)))
        }
    };
    let base = system.base_spectrum().expect("scaling models cache a base spectrum");
    Ok(check_t41_spectrum(model, base, a, &betas, &hs))
}

/// Monotonicity of `h^N Z_q` in h, the derivative identity and the sign
/// equivalence, at fixed β for `V = r^ν`. Returns C4_1, P4_1, P4_3.
pub fn check_c41_and_props(
    potential: &Potential,
    beta: f64,
    hs: &[f64],
    policy: TruncationPolicy,
) -> Result<[VerificationReport; 3]> {
    if potential.kind() != PotentialKind::Homogeneous {
        return Err(Error::Argument("these checks need a homogeneous potential r^nu".into()));
    }
    let alpha = potential.energy_scaling_exponent().expect("homogeneous");
    let n = potential.dimension() as f64;
    let hs = sorted(hs);
    let model = potential.descriptor();
    let grid = Grid {
        beta: vec![beta],
        h: hs.clone(),
    };
    let ids = [ClaimId::C41, ClaimId::P41, ClaimId::P43];
    // Central differences need h(1 ± 2e-3) as well.
    let h_lo = hs[0] * (1.0 - 3e-3);
    let system = match System::prepare(potential.clone(), &[beta], &[h_lo], policy) {
        Ok(s) => s,
        Err(e) => return Ok(ids.map(|c| VerificationReport::unavailable(c, model.clone(), grid.clone(), &e))),
    };
    // G(h) = ln(h^N Z_q(β, h)).
    let g = |h: f64| -> Result<f64> { Ok(n * h.ln() + ensemble::z_quantum(&system.spectrum(h)?, beta)?.ln_value) };

    let mut mono = Accumulator::new();
    let mut ident = Accumulator::new();
    let mut sign = Accumulator::new();
    let points: Vec<Result<ThermoPoint>> = hs.iter().map(|&h| system.point(beta, h)).collect();

    for w in points.windows(2).zip(hs.windows(2)) {
        match w {
            ([Ok(a), Ok(b)], [ha, hb]) => {
                let ga = n * ha.ln() + a.ln_z_quantum;
                let gb = n * hb.ln() + b.ln_z_quantum;
                mono.push(-(gb - ga).exp_m1(), a.z_quantum_error + b.z_quantum_error + 1e-14);
            }
            ([Err(e), _], [ha, _]) | ([_, Err(e)], [_, ha]) => mono.fail(beta, *ha, e),
            _ => unreachable!("windows(2) yields pairs"),
        }
    }

    let mut signs_text = Vec::new();
    for (p, &h) in points.iter().zip(&hs) {
        let p = match p {
            Ok(p) => p,
            Err(e) => {
                ident.fail(beta, h, e);
                sign.fail(beta, h, e);
                continue;
            }
        };
        let rhs = n - alpha * beta * p.e_quantum;
        let rhs_err = alpha * beta * p.e_quantum_error;
        let stencil = |d: f64| -> Result<(f64, f64)> {
            let d1 = g(h + d)? - g(h - d)?;
            let d2 = g(h + 2.0 * d)? - g(h - 2.0 * d)?;
            Ok(((8.0 * d1 - d2) / (12.0 * d), d1 / (2.0 * d)))
        };
        match stencil(1e-3 * h) {
            Ok((fd4, fd2)) => {
                let residual = (h * fd4 - rhs).abs() / rhs.abs();
                let fd_err = (h * (fd4 - fd2)).abs() * 1e-3 + (rhs_err + 1e-13);
                ident.push(1e-5 - residual, fd_err / rhs.abs());
            }
            Err(e) => ident.fail(beta, h, &e),
        }
        // N - αβE_q = αβ(E_c - E_q) for V = r^ν.
        let x = rhs / n;
        let y = (p.e_quantum - p.e_classical) / p.e_classical;
        let agree = x.signum() == -y.signum() && x != 0.0;
        let size = x.abs().min(y.abs());
        sign.push(if agree { size } else { -size }, rhs_err / n + p.e_quantum_error / p.e_classical + 1e-14);
        signs_text.push(if x < 0.0 { '-' } else { '+' });
    }
    ident.notes.push(format!("alpha = 2nu/(2+nu) = {alpha}"));
    sign.notes.push(format!(
        "sign of N - alpha*beta*E_q over h: {}",
        signs_text.iter().collect::<String>()
    ));
    let [a, b, c] = ids;
    Ok([
        VerificationReport::new(a, model.clone(), grid.clone(), mono),
        VerificationReport::new(b, model.clone(), grid.clone(), ident),
        VerificationReport::new(c, model, grid, sign),
    ])
}

/// The three semiclassical gaps at one point.
#[derive(Debug, Clone, Copy, PartialEq)]
pub struct WehrlGaps {
    pub planck: f64,
    /// `|E_q - E_c| / E_c`.
    pub energy: f64,
    /// `|(2πh)^N Z_q / Z_c - 1|`.
    pub sum: f64,
    /// `S_q - S_c`.
    pub entropy: f64,
    /// `S_q - S_c` rebuilt as `β(E_q - E_c) + ln((2πh)^N Z_q / Z_c)`.
    pub entropy_composed: f64,
}

impl WehrlGaps {
    pub fn from_point(p: &ThermoPoint) -> Self {
        let ln_r = p.ln_z_scaled() - p.z_classical.ln();
        Self {
            planck: p.planck,
            energy: (p.e_quantum - p.e_classical).abs() / p.e_classical,
            sum: ln_r.exp_m1().abs(),
            entropy: p.s_quantum - p.s_classical,
            entropy_composed: p.beta * (p.e_quantum - p.e_classical) + ln_r,
        }
    }
}

/// Energy, sum and entropy gaps along a decreasing h sequence at fixed β.
/// Holds when all three end below 0.02 and shrink strictly over the last
/// four points.
pub fn check_wehrl(potential: &Potential, beta: f64, hs: &[f64], policy: TruncationPolicy) -> VerificationReport {
    let grid = Grid {
        beta: vec![beta],
        h: hs.to_vec(),
    };
    let model = potential.descriptor();
    let points = sweep(potential, &[beta], hs, policy)
        .and_then(|rows| rows.into_iter().map(|r| r.point).collect::<Result<Vec<_>>>());
    let points = match points {
        Ok(p) => p,
        Err(e) => return VerificationReport::unavailable(ClaimId::WehrlS, model, grid, &e),
    };
    let gaps: Vec<WehrlGaps> = points.iter().map(WehrlGaps::from_point).collect();
    let last = gaps.len() - 1;
    let tail = &gaps[gaps.len().saturating_sub(4)..];
    let p = &points[last];
    let mut acc = Accumulator::new();
    acc.push(0.02 - gaps[last].energy, p.e_quantum_error / p.e_classical + 1e-14);
    acc.push(0.02 - gaps[last].sum, relative_z_error(p));
    acc.push(0.02 - gaps[last].entropy.abs(), p.s_quantum_error + 1e-13);
    let shrinks = |f: fn(&WehrlGaps) -> f64| tail.windows(2).all(|w| f(&w[1]) < f(&w[0]));
    let ok = [
        ("energy", shrinks(|g| g.energy)),
        ("sum", shrinks(|g| g.sum)),
        ("entropy", shrinks(|g| g.entropy.abs())),
    ];
    let composed = gaps
        .iter()
        .map(|g| (g.entropy - g.entropy_composed).abs())
        .fold(0.0, f64::max);
    acc.notes.push(format!(
        "final gaps at h={:e}: energy {:.6e}, sum {:.6e}, entropy {:.6e}",
        gaps[last].planck, gaps[last].energy, gaps[last].sum, gaps[last].entropy
    ));
    acc.notes.push(format!("entropy gap recomposed from energy and sum gaps to {composed:.2e}"));
    for (name, shrinking) in ok {
        if !shrinking {
            acc.notes.push(format!("{name} gap does not shrink over the last four points"));
        }
    }
    let mut report = VerificationReport::new(ClaimId::WehrlS, model, grid, acc);
    if ok.iter().any(|(_, s)| !s) && report.status == Status::Holds {
        report.status = Status::Inconclusive;
    }
    report
}

/// Selectable groups of checks.
#[derive(Debug, Clone, Copy, PartialEq, Eq, Hash)]
pub enum Claim {
    C11,
    C12,
    C13,
    T31,
    T41,
    C41,
    Wehrl,
}

impl Claim {
    pub fn as_str(self) -> &'static str {
        match self {
            Claim::C11 => "c11",
            Claim::C12 => "c12",
            Claim::C13 => "c13",
            Claim::T31 => "t31",
            Claim::T41 => "t41",
            Claim::C41 => "c41",
            Claim::Wehrl => "wehrl",
        }
    }

    pub const ALL: [Claim; 7] = [Claim::C11, Claim::C12, Claim::C13, Claim::T31, Claim::T41, Claim::C41, Claim::Wehrl];
}

impl FromStr for Claim {
    type Err = Error;

    fn from_str(s: &str) -> Result<Self> {
        let key: String = s
            .chars()
            .filter(|c| !matches!(c, '_' | '.' | '-'))
            .flat_map(char::to_lowercase)
            .collect();
        Ok(match key.as_str() {
            "c11" => Claim::C11,
            "c12" => Claim::C12,
            "c13" | "c13z" | "c13e" => Claim::C13,
            "t31" => Claim::T31,
            "t41" | "t41beta" | "t41h" => Claim::T41,
            "c41" | "p41" | "p43" => Claim::C41,
            "wehrl" | "wehrls" => Claim::Wehrl,
            _ => {
                return Err(Error::Argument(format!(
                    "unknown claim '{s}'; expected one of c11, c12, c13, t31, t41, c41, p41, p43, wehrl"
                )))
            }
        })
    }
}

/// Grids and parameters for [`run`].
#[derive(Debug, Clone, PartialEq)]
pub struct VerifyConfig {
    /// β and h sweeps for C1_1, C1_2 and T4_1.
    pub betas: Vec<f64>,
    pub hs: Vec<f64>,
    pub policy: TruncationPolicy,
    /// Fixed h and decreasing β sequence for C1_3.
    pub limit_h: f64,
    pub limit_betas: Vec<f64>,
    /// Upper end β of the T3_1 integral at h = `limit_h`; τ = `tau_fraction`·β.
    pub t31_beta: f64,
    pub tau_fraction: f64,
    /// β and h grid for C4_1, P4_1, P4_3.
    pub c41_beta: f64,
    pub c41_hs: Vec<f64>,
    /// β and decreasing h sequence for the entropy limit.
    pub wehrl_beta: f64,
    pub wehrl_hs: Vec<f64>,
}

impl Default for VerifyConfig {
    fn default() -> Self {
        Self {
            betas: default_beta_grid(),
            hs: default_h_grid(),
            policy: sweep_policy(),
            limit_h: 1.0,
            limit_betas: halving(1.0, 9),
            t31_beta: 1.0,
            tau_fraction: 1e-3,
            c41_beta: 1.0,
            c41_hs: log_grid(0.5, 4.0, 9),
            wehrl_beta: 1.0,
            wehrl_hs: halving(1.0, 7),
        }
    }
}

/// Runs the selected checks in the order given. Checks that do not apply
/// to the model (C4_1 on a box, T4_1 on a tabulated potential) fail with
/// an argument error.
pub fn run(potential: &Potential, claims: &[Claim], config: &VerifyConfig) -> Result<Vec<VerificationReport>> {
    let mut out = Vec::new();
    for claim in claims {
        match claim {
            Claim::C11 => out.push(check_c11(potential, &config.betas, &config.hs, config.policy)),
            Claim::C12 => out.push(check_c12(potential, &config.betas, &config.hs, config.policy)),
            Claim::C13 => out.extend(check_c13(potential, config.limit_h, &config.limit_betas, config.policy)),
            Claim::T31 => out.push(check_t31(
                potential,
                config.limit_h,
                config.t31_beta,
                config.tau_fraction * config.t31_beta,
                config.policy,
            )?),
            Claim::T41 => out.extend(check_t41(potential, &config.betas, &config.hs, config.policy)?),
            Claim::C41 => out.extend(check_c41_and_props(potential, config.c41_beta, &config.c41_hs, config.policy)?),
            Claim::Wehrl => out.push(check_wehrl(potential, config.wehrl_beta, &config.wehrl_hs, config.policy)),
        }
    }
    Ok(out)
}

/// `(2πh)^N`.
pub fn phase_cell(dimension: usize, planck: f64) -> f64 {
    (2.0 * PI * planck).powi(dimension as i32)
}
