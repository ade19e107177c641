//! Ordered eigenvalue lists `E_n(h)` of `-(h²/2m)Δ + V` with Dirichlet
//! boundary conditions.
//!
//! Closed forms are used for the well, the isotropic oscillator `V = r²`
//! and the one-dimensional `V = |x|` (Airy zeros). Everything else goes
//! through a second-order finite-difference discretization with Richardson
//! extrapolation. Degenerate levels are listed with multiplicity.

use std::cmp::{Ordering, Reverse};
use std::collections::{BinaryHeap, HashSet};
use std::f64::consts::PI;
use std::fmt::Write as _;
use std::io::{BufRead, Write};

use serde::{Deserialize, Serialize};

use crate::error::{Error, Result};
use crate::numeric::airy::{ai_prime_zero, ai_zero};
use crate::numeric::sum::ln_upper_incomplete_gamma_bound;
use crate::numeric::SymTridiagonal;
use crate::potential::{Potential, PotentialKind};

/// Default cap on multi-indices visited while enumerating separable spectra.
pub const DEFAULT_ENUMERATION_CAP: usize = 4_000_000;

#[derive(Debug, Clone, Copy, PartialEq, Eq, Serialize, Deserialize)]
pub enum SpectrumSource {
    AnalyticBox,
    AnalyticHarmonic,
    AnalyticLinear,
    FiniteDifference,
    Rescaled,
    Explicit,
}

impl SpectrumSource {
    pub fn name(self) -> &'static str {
        match self {
            Self::AnalyticBox => "AnalyticBox",
            Self::AnalyticHarmonic => "AnalyticHarmonic",
            Self::AnalyticLinear => "AnalyticLinear",
            Self::FiniteDifference => "FiniteDifference",
            Self::Rescaled => "Rescaled",
            Self::Explicit => "Explicit",
        }
    }

    fn parse(s: &str) -> Result<Self> {
        Ok(match s {
            "AnalyticBox" => Self::AnalyticBox,
            "AnalyticHarmonic" => Self::AnalyticHarmonic,
            "AnalyticLinear" => Self::AnalyticLinear,
            "FiniteDifference" => Self::FiniteDifference,
            "Rescaled" => Self::Rescaled,
            "Explicit" => Self::Explicit,
            other => return Err(Error::Parse(format!("unknown spectrum source `{other}`"))),
        })
    }
}

/// Power-law growth `E_n ≈ prefactor · n^exponent` fitted to the top
/// quartile of the held levels.
#[derive(Debug, Clone, Copy, PartialEq, Serialize, Deserialize)]
pub struct TailModel {
    pub exponent: f64,
    pub prefactor: f64,
}

#[derive(Debug, Clone, PartialEq)]
pub struct Spectrum {
    levels: Vec<f64>,
    errors: Option<Vec<f64>>,
    planck: f64,
    source: SpectrumSource,
    truncated: bool,
    tail_model: Option<TailModel>,
}

fn validate_levels(levels: &[f64]) -> Result<()> {
    if levels.is_empty() {
        return Err(Error::Argument("a spectrum needs at least one level".into()));
    }
    if let Some(e) = levels.iter().find(|e| !(**e > 0.0 && e.is_finite())) {
        return Err(Error::Argument(format!("levels must be positive and finite, found {e}")));
    }
    if levels.windows(2).any(|w| w[1] < w[0]) {
        return Err(Error::Argument("levels must be non-decreasing".into()));
    }
    Ok(())
}

fn fit_tail(levels: &[f64]) -> Option<TailModel> {
    let m = levels.len();
    if m < 8 {
        return None;
    }
    let start = (3 * m) / 4;
    let pts: Vec<(f64, f64)> = (start..m)
        .map(|i| (((i + 1) as f64).ln(), levels[i].ln()))
        .collect();
    let k = pts.len() as f64;
    let mx = pts.iter().map(|p| p.0).sum::<f64>() / k;
    let my = pts.iter().map(|p| p.1).sum::<f64>() / k;
    let sxx: f64 = pts.iter().map(|p| (p.0 - mx).powi(2)).sum();
    let sxy: f64 = pts.iter().map(|p| (p.0 - mx) * (p.1 - my)).sum();
    let exponent = sxy / sxx;
    Some(TailModel {
        exponent,
        prefactor: (my - exponent * mx).exp(),
    })
}

impl Spectrum {
    fn build(
        levels: Vec<f64>,
        errors: Option<Vec<f64>>,
        planck: f64,
        source: SpectrumSource,
        truncated: bool,
    ) -> Result<Self> {
        validate_levels(&levels)?;
        if !(planck > 0.0 && planck.is_finite()) {
            return Err(Error::Argument(format!("Planck parameter h must be positive, got {planck}")));
        }
        let tail_model = if truncated { fit_tail(&levels) } else { None };
        Ok(Self {
            levels,
            errors,
            planck,
            source,
            truncated,
            tail_model,
        })
    }

    /// A complete finite level set (no omitted states).
    pub fn from_levels(levels: Vec<f64>, planck: f64) -> Result<Self> {
        Self::build(levels, None, planck, SpectrumSource::Explicit, false)
    }

    /// The first `levels.len()` levels of an infinite spectrum.
    pub fn truncated_from_levels(levels: Vec<f64>, planck: f64) -> Result<Self> {
        Self::build(levels, None, planck, SpectrumSource::Explicit, true)
    }

    pub fn levels(&self) -> &[f64] {
        &self.levels
    }

    /// Per-level absolute error estimates (finite-difference spectra only).
    pub fn errors(&self) -> Option<&[f64]> {
        self.errors.as_deref()
    }

    pub fn planck(&self) -> f64 {
        self.planck
    }

    pub fn count(&self) -> usize {
        self.levels.len()
    }

    pub fn source(&self) -> SpectrumSource {
        self.source
    }

    pub fn is_truncated(&self) -> bool {
        self.truncated
    }

    pub fn tail_model(&self) -> Option<TailModel> {
        self.tail_model
    }

    pub fn ground_energy(&self) -> f64 {
        self.levels[0]
    }

    /// Eigenvalues `λ_n = (m/h²) E_n` of `-½Δ + (m/h²)V`.
    pub fn operator_eigenvalues(&self, mass: f64) -> Vec<f64> {
        let s = mass / (self.planck * self.planck);
        self.levels.iter().map(|e| s * e).collect()
    }

    /// Natural log of [`tail_bound`]; `-inf` for complete spectra.
    pub fn ln_tail_bound(&self, beta: f64) -> Result<f64> {
        if !(beta > 0.0) {
            return Err(Error::Argument(format!("beta must be positive, got {beta}")));
        }
        if !self.truncated {
            return Ok(f64::NEG_INFINITY);
        }
        let model = self.tail_model.ok_or_else(|| {
            Error::Argument(format!("tail bound needs at least 8 levels, have {}", self.count()))
        })?;
        if !(model.exponent > 0.0) {
            return Err(Error::Model(format!(
                "fitted growth exponent {} is not positive; spectrum is not growing",
                model.exponent
            )));
        }
        let (g, c) = (model.exponent, model.prefactor);
        let m = self.count() as f64;
        let x = beta * c * m.powf(g);
        let s = 1.0 / g;
        Ok(-g.ln() - s * (beta * c).ln() + ln_upper_incomplete_gamma_bound(s, x))
    }

    /// Log of an upper estimate of `Σ_{n>M} E_n e^{-βE_n}` under the tail
    /// model; `+inf` when the model term is not yet decreasing at `n = M`.
    pub fn ln_energy_tail_bound(&self, beta: f64) -> Result<f64> {
        let ln_plain = self.ln_tail_bound(beta)?;
        if ln_plain == f64::NEG_INFINITY {
            return Ok(ln_plain);
        }
        let model = self.tail_model.expect("checked by ln_tail_bound");
        let (g, c) = (model.exponent, model.prefactor);
        let m = self.count() as f64;
        let x = beta * c * m.powf(g);
        if x < 1.0 {
            return Ok(f64::INFINITY);
        }
        let s = 1.0 / g;
        Ok(-g.ln() - beta.ln() - s * (beta * c).ln() + ln_upper_incomplete_gamma_bound(s + 1.0, x))
    }

    /// Writes `n,E` CSV preceded by `# h=`, `# source=` and `# truncated=`
    /// comment lines. Values carry 17 significant digits.
    pub fn write_csv<W: Write>(&self, mut out: W) -> Result<()> {
        let mut buf = String::new();
        writeln!(buf, "# h={:.16e}", self.planck).unwrap();
        writeln!(buf, "# source={}", self.source.name()).unwrap();
        writeln!(buf, "# truncated={}", self.truncated).unwrap();
        buf.push_str("n,E\n");
        for (i, e) in self.levels.iter().enumerate() {
            writeln!(buf, "{},{:.16e}", i + 1, e).unwrap();
        }
        out.write_all(buf.as_bytes())?;
        Ok(())
    }

    pub fn read_csv<R: BufRead>(input: R) -> Result<Self> {
        let mut planck = None;
        let mut source = SpectrumSource::Explicit;
        let mut truncated = true;
        let mut header_seen = false;
        let mut levels = Vec::new();
        for (lineno, line) in input.lines().enumerate() {
            let line = line?;
            let line = line.trim();
            if line.is_empty() {
                continue;
            }
            if let Some(meta) = line.strip_prefix('#') {
                if let Some((key, value)) = meta.trim().split_once('=') {
                    let value = value.trim();
                    match key.trim() {
                        "h" => {
                            planck = Some(value.parse::<f64>().map_err(|e| {
                                Error::Parse(format!("line {}: bad h: {e}", lineno + 1))
                            })?)
                        }
                        "source" => source = SpectrumSource::parse(value)?,
                        "truncated" => {
                            truncated = value.parse::<bool>().map_err(|e| {
                                Error::Parse(format!("line {}: bad truncated flag: {e}", lineno + 1))
                            })?
                        }
                        _ => {}
                    }
                }
                continue;
            }
            if !header_seen {
                if line.replace(' ', "") != "n,E" {
                    return Err(Error::Parse(format!("expected header `n,E`, found `{line}`")));
                }
                header_seen = true;
                continue;
            }
            let (n, e) = line
                .split_once(',')
                .ok_or_else(|| Error::Parse(format!("line {}: expected `n,E`", lineno + 1)))?;
            let n: usize = n
                .trim()
                .parse()
                .map_err(|err| Error::Parse(format!("line {}: bad index: {err}", lineno + 1)))?;
            if n != levels.len() + 1 {
                return Err(Error::Parse(format!(
                    "line {}: level index {n} out of sequence",
                    lineno + 1
                )));
            }
            let e: f64 = e
                .trim()
                .parse()
                .map_err(|err| Error::Parse(format!("line {}: bad energy: {err}", lineno + 1)))?;
            levels.push(e);
        }
        let planck = planck.ok_or_else(|| Error::Parse("missing `# h=` metadata line".into()))?;
        Self::build(levels, None, planck, source, truncated)
    }
}

/// Upper estimate of `Σ_{n>M} e^{-βE_n}` from the fitted tail model, via
/// `Σ_{n>M} e^{-βCn^γ} ≤ ∫_M^∞ e^{-βCt^γ} dt`. Zero for complete spectra.
pub fn tail_bound(spectrum: &Spectrum, beta: f64) -> Result<f64> {
    Ok(spectrum.ln_tail_bound(beta)?.exp())
}

#[derive(Clone, Debug)]
struct HeapEntry {
    energy: f64,
    index: Vec<u32>,
}

impl PartialEq for HeapEntry {
    fn eq(&self, other: &Self) -> bool {
        self.energy == other.energy && self.index == other.index
    }
}
impl Eq for HeapEntry {}
impl PartialOrd for HeapEntry {
    fn partial_cmp(&self, other: &Self) -> Option<Ordering> {
        Some(self.cmp(other))
    }
}
impl Ord for HeapEntry {
    fn cmp(&self, other: &Self) -> Ordering {
        self.energy
            .total_cmp(&other.energy)
            .then_with(|| self.index.cmp(&other.index))
    }
}

/// Smallest `count` values of `Σ_i f_i(n_i)` over multi-indices with
/// `n_i ≥ start`, each `f_i` increasing. Best-first lattice walk.
fn enumerate_separable<F>(dims: usize, start: u32, count: usize, cap: usize, energy: F) -> Result<Vec<f64>>
where
    F: Fn(&[u32]) -> f64,
{
    let mut heap = BinaryHeap::new();
    let mut seen = HashSet::new();
    let first = vec![start; dims];
    heap.push(Reverse(HeapEntry {
        energy: energy(&first),
        index: first.clone(),
    }));
    seen.insert(first);
    let mut out = Vec::with_capacity(count);
    while out.len() < count {
        let Reverse(entry) = heap.pop().expect("lattice is infinite");
        out.push(entry.energy);
        for axis in 0..dims {
            let mut next = entry.index.clone();
            next[axis] += 1;
            if seen.insert(next.clone()) {
                if seen.len() > cap {
                    return Err(Error::Resource(format!(
                        "enumerating {count} levels visits more than {cap} multi-indices"
                    )));
                }
                heap.push(Reverse(HeapEntry {
                    energy: energy(&next),
                    index: next,
                }));
            }
        }
    }
    Ok(out)
}

/// Levels of the infinite well `(h²π²/2m) Σ (n_i/L_i)²`.
pub fn solve_box(lengths: &[f64], mass: f64, planck: f64, count: usize) -> Result<Spectrum> {
    solve_box_capped(lengths, mass, planck, count, DEFAULT_ENUMERATION_CAP)
}

pub fn solve_box_capped(lengths: &[f64], mass: f64, planck: f64, count: usize, cap: usize) -> Result<Spectrum> {
    Potential::box_well(lengths)?.with_mass(mass)?;
    if count == 0 {
        return Err(Error::Argument("level count M must be at least 1".into()));
    }
    if count > cap {
        return Err(Error::Resource(format!("{count} levels exceed the enumeration cap {cap}")));
    }
    let pref = planck * planck * PI * PI / (2.0 * mass);
    let levels = if lengths.len() == 1 {
        let l2 = lengths[0] * lengths[0];
        (1..=count).map(|n| pref * (n * n) as f64 / l2).collect()
    } else {
        let inv_sq: Vec<f64> = lengths.iter().map(|l| 1.0 / (l * l)).collect();
        enumerate_separable(lengths.len(), 1, count, cap, |idx| {
            pref * idx
                .iter()
                .zip(&inv_sq)
                .map(|(&n, w)| (n as f64) * (n as f64) * w)
                .sum::<f64>()
        })?
    };
    Spectrum::build(levels, None, planck, SpectrumSource::AnalyticBox, true)
}

/// Levels of `-(h²/2m)Δ + r²` in `N` dimensions: `hω(n + N/2)` with
/// `ω = √(2/m)`, listed with their shell degeneracy.
pub fn solve_harmonic(dimension: usize, mass: f64, planck: f64, count: usize) -> Result<Spectrum> {
    Potential::homogeneous(dimension, 2.0)?.with_mass(mass)?;
    if count == 0 {
        return Err(Error::Argument("level count M must be at least 1".into()));
    }
    let quantum = planck * (2.0 / mass).sqrt();
    let mut levels = Vec::with_capacity(count);
    let mut shell: u64 = 0;
    while levels.len() < count {
        // Number of ways to write `shell` as a sum of N non-negative integers.
        let mut degeneracy: u64 = 1;
        for j in 1..dimension as u64 {
            degeneracy = degeneracy * (shell + j) / j;
        }
        let e = quantum * (shell as f64 + dimension as f64 / 2.0);
        for _ in 0..degeneracy.min((count - levels.len()) as u64) {
            levels.push(e);
        }
        shell += 1;
    }
    Spectrum::build(levels, None, planck, SpectrumSource::AnalyticHarmonic, true)
}

/// Levels of `-(h²/2m)u'' + |x|u` on the line: `(h²/2m)^{1/3}` times the
/// magnitudes of the zeros of `Ai'` (even states) and `Ai` (odd states).
pub fn solve_linear(mass: f64, planck: f64, count: usize) -> Result<Spectrum> {
    Potential::homogeneous(1, 1.0)?.with_mass(mass)?;
    if count == 0 {
        return Err(Error::Argument("level count M must be at least 1".into()));
    }
    let scale = (planck * planck / (2.0 * mass)).cbrt();
    let levels = (1..=count)
        .map(|n| {
            let k = n.div_ceil(2);
            let z = if n % 2 == 1 { ai_prime_zero(k) } else { ai_zero(k) };
            -scale * z
        })
        .collect();
    Spectrum::build(levels, None, planck, SpectrumSource::AnalyticLinear, true)
}

/// Grid for [`solve_fd_1d`]: `intervals` uniform cells on the domain, and
/// the half-width `R` of `[-R, R]` for unbounded potentials.
#[derive(Debug, Clone, Copy, PartialEq)]
pub struct FdGrid {
    pub intervals: usize,
    pub half_width: Option<f64>,
}

impl FdGrid {
    pub fn bounded(intervals: usize) -> Self {
        Self {
            intervals,
            half_width: None,
        }
    }

    pub fn symmetric(half_width: f64, intervals: usize) -> Self {
        Self {
            intervals,
            half_width: Some(half_width),
        }
    }
}

fn fd_interval(potential: &Potential, grid: &FdGrid) -> Result<(f64, f64)> {
    if potential.dimension() != 1 {
        return Err(Error::Argument(format!(
            "finite differences handle one-dimensional potentials only (N = {})",
            potential.dimension()
        )));
    }
    match (potential.interval(), grid.half_width) {
        (Some(iv), _) => Ok(iv),
        (None, Some(r)) if r > 0.0 && r.is_finite() => Ok((-r, r)),
        (None, _) => Err(Error::Argument(
            "an unbounded potential needs a positive grid half-width R".into(),
        )),
    }
}

/// Lowest `count` eigenvalues of the three-point discretization of
/// `-(h²/2m)u'' + V u` with `u = 0` at both ends of `[a, b]`, using
/// `intervals` uniform cells (`intervals - 1` unknowns).
pub fn fd_levels(
    potential: &Potential,
    planck: f64,
    interval: (f64, f64),
    intervals: usize,
    count: usize,
) -> Result<Vec<f64>> {
    fd_matrix(potential, planck, interval, intervals)?.lowest_eigenvalues(count)
}

fn fd_matrix(potential: &Potential, planck: f64, (a, b): (f64, f64), intervals: usize) -> Result<SymTridiagonal> {
    if intervals < 4 {
        return Err(Error::Argument(format!("grid needs at least 4 intervals, got {intervals}")));
    }
    if !(b > a) {
        return Err(Error::Argument(format!("empty grid interval [{a}, {b}]")));
    }
    if !(planck > 0.0) {
        return Err(Error::Argument(format!("Planck parameter h must be positive, got {planck}")));
    }
    let dx = (b - a) / intervals as f64;
    let kinetic = planck * planck / (2.0 * potential.mass() * dx * dx);
    let diag: Vec<f64> = (1..intervals)
        .map(|i| 2.0 * kinetic + potential.value_1d(a + i as f64 * dx))
        .collect();
    let off = vec![-kinetic; intervals - 2];
    SymTridiagonal::new(diag, &off)
}

/// Richardson-extrapolated finite-difference spectrum.
///
/// Solves on `P`, `2P` and `4P` intervals (`P` rounded up to even so that
/// `x = 0` is a node). Levels are the extrapolation of the two finest grids;
/// each carries the error estimate `|R(2P,4P) - R(P,2P)| / 15`. A level
/// whose estimate exceeds `tolerance · max(E_n, 1)` is reported as an
/// [`Error::Accuracy`].
pub fn solve_fd_1d(potential: &Potential, planck: f64, grid: FdGrid, count: usize, tolerance: f64) -> Result<Spectrum> {
    let interval = fd_interval(potential, &grid)?;
    let p = grid.intervals + grid.intervals % 2;
    if count == 0 || 4 * count > p {
        return Err(Error::Argument(format!(
            "level count {count} must be positive and well below the grid size {p}"
        )));
    }
    let e1 = fd_levels(potential, planck, interval, p, count)?;
    let e2 = fd_levels(potential, planck, interval, 2 * p, count)?;
    // Richardson predicts the finest grid well enough to warm-start it.
    let guesses: Vec<f64> = e1.iter().zip(&e2).map(|(a, b)| b + (b - a) / 4.0).collect();
    let e4 = fd_matrix(potential, planck, interval, 4 * p)?.eigenvalues_near(&guesses)?;
    let mut levels = Vec::with_capacity(count);
    let mut errors = Vec::with_capacity(count);
    for n in 0..count {
        let coarse = (4.0 * e2[n] - e1[n]) / 3.0;
        let fine = (4.0 * e4[n] - e2[n]) / 3.0;
        let est = (fine - coarse).abs() / 15.0 + 4.0 * f64::EPSILON * fine.abs();
        if est > tolerance * fine.abs().max(1.0) {
            return Err(Error::Accuracy {
                level: n + 1,
                estimate: est,
                tolerance,
            });
        }
        levels.push(fine);
        errors.push(est);
    }
    if levels.windows(2).any(|w| w[1] < w[0]) {
        let mut pairs: Vec<(f64, f64)> = levels.into_iter().zip(errors).collect();
        pairs.sort_by(|a, b| a.0.total_cmp(&b.0));
        let (l, e): (Vec<f64>, Vec<f64>) = pairs.into_iter().unzip();
        levels = l;
        errors = e;
    }
    Spectrum::build(levels, Some(errors), planck, SpectrumSource::FiniteDifference, true)
}

/// `E_n(h) = (h/h₀)^a E_n(h₀)` for a base spectrum computed at `h₀`.
pub fn rescale(base: &Spectrum, planck: f64, energy_exponent: f64) -> Result<Spectrum> {
    if base.source == SpectrumSource::Rescaled {
        return Err(Error::Argument("rescale expects an unscaled base spectrum".into()));
    }
    if !(planck > 0.0 && planck.is_finite()) {
        return Err(Error::Argument(format!("Planck parameter h must be positive, got {planck}")));
    }
    if !(energy_exponent > 0.0) {
        return Err(Error::Argument(format!("energy exponent must be positive, got {energy_exponent}")));
    }
    let factor = (planck / base.planck).powf(energy_exponent);
    Ok(Spectrum {
        levels: base.levels.iter().map(|e| e * factor).collect(),
        errors: base.errors.as_ref().map(|es| es.iter().map(|e| e * factor).collect()),
        planck,
        source: SpectrumSource::Rescaled,
        truncated: base.truncated,
        tail_model: base.tail_model.map(|t| TailModel {
            exponent: t.exponent,
            prefactor: t.prefactor * factor,
        }),
    })
}

/// Truncation control for [`solve`].
#[derive(Debug, Clone, Copy, PartialEq)]
pub struct TruncationPolicy {
    /// Smallest inverse temperature the spectrum must serve.
    pub beta_min: f64,
    /// Required `tail / partial sum` for both `Σ e^{-βE}` and `Σ E e^{-βE}`.
    pub tail_tolerance: f64,
    pub max_levels: usize,
    /// Relative Richardson tolerance for finite-difference levels.
    pub fd_tolerance: f64,
    /// Largest finite-difference grid (intervals on the finest of the three grids).
    pub max_grid: usize,
}

impl TruncationPolicy {
    pub fn new(beta_min: f64) -> Self {
        Self {
            beta_min,
            ..Self::default()
        }
    }
}

impl Default for TruncationPolicy {
    fn default() -> Self {
        Self {
            beta_min: 1.0,
            tail_tolerance: 1e-10,
            max_levels: 2_000_000,
            fd_tolerance: 1e-4,
            max_grid: 4_000_000,
        }
    }
}

/// Boltzmann sums measured from the ground state: `excess = Σ_{n>1} w_n`
/// and `s1 = Σ (E_n - E_1) w_n` with `w_n = e^{-β(E_n - E_1)}`. Summation
/// stops at the first weight that underflows (levels are sorted).
#[derive(Debug, Clone, Copy)]
pub(crate) struct ShiftedSums {
    pub excess: f64,
    pub s1: f64,
    /// Number of leading levels with non-zero weight.
    pub used: usize,
}

pub(crate) fn shifted_sums(levels: &[f64], beta: f64) -> ShiftedSums {
    let e1 = levels[0];
    let mut excess = crate::numeric::CompensatedSum::new();
    let mut s1 = crate::numeric::CompensatedSum::new();
    let mut used = 1;
    for &e in &levels[1..] {
        let w = (-beta * (e - e1)).exp();
        if w == 0.0 {
            break;
        }
        excess.add(w);
        s1.add((e - e1) * w);
        used += 1;
    }
    ShiftedSums {
        excess: excess.value(),
        s1: s1.value(),
        used,
    }
}

/// Relative truncation of `Σ e^{-βE}` and `Σ E e^{-βE}` given the held sums.
pub(crate) fn relative_tails_with(spectrum: &Spectrum, beta: f64, sums: &ShiftedSums) -> Result<(f64, f64)> {
    let ln_tail = spectrum.ln_tail_bound(beta)?;
    if ln_tail == f64::NEG_INFINITY {
        return Ok((0.0, 0.0));
    }
    let ln_etail = spectrum.ln_energy_tail_bound(beta)?;
    let e1 = spectrum.ground_energy();
    let s0 = 1.0 + sums.excess;
    let shift = beta * e1;
    let ln_z = s0.ln();
    let ln_ez = (e1 * s0 + sums.s1).ln();
    Ok(((ln_tail + shift - ln_z).exp(), (ln_etail + shift - ln_ez).exp()))
}

pub(crate) fn relative_tails(spectrum: &Spectrum, beta: f64) -> Result<(f64, f64)> {
    relative_tails_with(spectrum, beta, &shifted_sums(spectrum.levels(), beta))
}

fn tails_ok(spectrum: &Spectrum, policy: &TruncationPolicy) -> Result<bool> {
    let (z, e) = relative_tails(spectrum, policy.beta_min)?;
    Ok(z < policy.tail_tolerance && e < policy.tail_tolerance)
}

/// Chooses the analytic or finite-difference route for `potential` and
/// grows the level count until the truncation policy holds at
/// `policy.beta_min`.
pub fn solve(potential: &Potential, planck: f64, policy: &TruncationPolicy) -> Result<Spectrum> {
    if !(policy.beta_min > 0.0) {
        return Err(Error::Argument(format!("beta_min must be positive, got {}", policy.beta_min)));
    }
    let mass = potential.mass();
    let analytic: Option<Box<dyn Fn(usize) -> Result<Spectrum>>> = match potential.kind() {
        PotentialKind::Box => {
            let lengths = potential.lengths().expect("box").to_vec();
            Some(Box::new(move |m| solve_box(&lengths, mass, planck, m)))
        }
        PotentialKind::Homogeneous if potential.exponent() == Some(2.0) => {
            let n = potential.dimension();
            Some(Box::new(move |m| solve_harmonic(n, mass, planck, m)))
        }
        PotentialKind::Homogeneous if potential.exponent() == Some(1.0) && potential.dimension() == 1 => {
            Some(Box::new(move |m| solve_linear(mass, planck, m)))
        }
        _ => None,
    };

    if let Some(levels_for) = analytic {
        let mut m = 64usize;
        loop {
            let s = levels_for(m)?;
            if tails_ok(&s, policy)? {
                return Ok(s);
            }
            if m >= policy.max_levels {
                let (rel, _) = relative_tails(&s, policy.beta_min)?;
                return Err(Error::Truncation {
                    beta: policy.beta_min,
                    relative_tail: rel,
                    tolerance: policy.tail_tolerance,
                });
            }
            m = (m * 2).min(policy.max_levels);
        }
    }
    solve_fd_auto(potential, planck, policy)
}

/// The lowest `count` levels of `potential`, from a closed form where one
/// exists and otherwise by finite differences on a window sized from a
/// coarse estimate of `E_count`.
pub fn solve_count(potential: &Potential, planck: f64, count: usize, fd_tolerance: f64) -> Result<Spectrum> {
    let mass = potential.mass();
    match potential.kind() {
        PotentialKind::Box => return solve_box(potential.lengths().expect("box"), mass, planck, count),
        PotentialKind::Homogeneous if potential.exponent() == Some(2.0) => {
            return solve_harmonic(potential.dimension(), mass, planck, count)
        }
        PotentialKind::Homogeneous if potential.exponent() == Some(1.0) && potential.dimension() == 1 => {
            return solve_linear(mass, planck, count)
        }
        _ => {}
    }
    if potential.dimension() != 1 {
        return Err(Error::Argument(format!(
            "no spectrum solver for a {:?} potential in N = {}",
            potential.kind(),
            potential.dimension()
        )));
    }
    if count == 0 {
        return Err(Error::Argument("count must be at least 1".into()));
    }
    let domain_for = |energy: f64| -> (f64, f64) {
        match potential.interval() {
            Some(iv) => iv,
            None => {
                let nu = potential.exponent().expect("homogeneous");
                let r = (1.25 * energy + 10.0).powf(1.0 / nu);
                (-r, r)
            }
        }
    };
    // Coarse pass: the scale of E_count, widened until the window holds it.
    let mut guess = match potential.interval() {
        Some(_) => 0.0,
        None => {
            let nu = potential.exponent().expect("homogeneous");
            20.0 * (planck * planck / mass).powf(nu / (2.0 + nu))
        }
    };
    let coarse = (8 * count).max(2000);
    let e_top = loop {
        let levels = fd_levels(potential, planck, domain_for(guess), coarse, count)?;
        let top = levels[count - 1];
        if potential.interval().is_some() || top <= guess {
            break top;
        }
        guess = 2.0 * top;
    };
    let e_cut = 1.25 * e_top + 10.0;
    let (a, b) = match potential.interval() {
        Some(iv) => iv,
        None => {
            // Past the turning point of E_count, walk out until the WKB
            // decay exponent reaches 30.
            let nu = potential.exponent().expect("homogeneous");
            let turn = e_top.powf(1.0 / nu);
            let dx = 1e-3 * turn.max(1e-3);
            let (mut x, mut decay) = (turn, 0.0);
            while decay < 30.0 {
                x += dx;
                decay += (2.0 * mass * (x.powf(nu) - e_top)).sqrt() / planck * dx;
            }
            (-x, x)
        }
    };
    let k_cut = (2.0 * mass * e_cut).sqrt() / planck;
    let mut p = ((b - a) * k_cut / 0.6).ceil() as usize;
    p = p.max(4 * count).max(400);
    p += p % 2;
    let grid = if potential.interval().is_some() {
        FdGrid::bounded(p)
    } else {
        FdGrid::symmetric(b, p)
    };
    solve_fd_1d(potential, planck, grid, count, fd_tolerance)
}

/// Picks domain, grid and level count for a finite-difference solve.
fn solve_fd_auto(potential: &Potential, planck: f64, policy: &TruncationPolicy) -> Result<Spectrum> {
    if potential.dimension() != 1 {
        return Err(Error::Argument(format!(
            "no spectrum solver for a {:?} potential in N = {} (only separable or one-dimensional models)",
            potential.kind(),
            potential.dimension()
        )));
    }
    let mass = potential.mass();
    let domain_for = |energy: f64| -> (f64, f64) {
        match potential.interval() {
            Some(iv) => iv,
            None => {
                let nu = potential.exponent().expect("unbounded potentials are homogeneous");
                let r = (1.25 * energy + 10.0).powf(1.0 / nu);
                (-r, r)
            }
        }
    };
    // Ground-state estimate on a modest grid.
    let probe_domain = match potential.interval() {
        Some(iv) => iv,
        None => {
            let nu = potential.exponent().expect("homogeneous");
            let scale = (planck * planck / mass).powf(nu / (2.0 + nu));
            domain_for(20.0 * scale)
        }
    };
    let e1 = fd_levels(potential, planck, probe_domain, 2000, 1)?[0];

    let ln_tol = policy.tail_tolerance.ln();
    let mut window = (12.0 - ln_tol) / policy.beta_min;
    for _ in 0..6 {
        let e_cut = e1 + window;
        let (a, b) = domain_for(e_cut);
        let v_min = 0.0;
        let k_cut = (2.0 * mass * (e_cut - v_min)).sqrt() / planck;
        let mut p = ((b - a) * k_cut / 0.6).ceil() as usize;
        p = p.max(400);
        p += p % 2;
        if 4 * p > policy.max_grid {
            return Err(Error::Resource(format!(
                "finite-difference grid of {} intervals exceeds the cap {}",
                4 * p,
                policy.max_grid
            )));
        }
        let count = fd_matrix(potential, planck, (a, b), p)?.count_below(e_cut).max(8);
        if count > policy.max_levels || 4 * count > p {
            return Err(Error::Resource(format!(
                "{count} finite-difference levels needed below E = {e_cut:.3e}; cap is {}",
                policy.max_levels
            )));
        }
        let grid = if potential.interval().is_some() {
            FdGrid::bounded(p)
        } else {
            FdGrid::symmetric(b, p)
        };
        let s = solve_fd_1d(potential, planck, grid, count, policy.fd_tolerance)?;
        if tails_ok(&s, policy)? {
            return Ok(s);
        }
        window *= 1.5;
    }
    Err(Error::Truncation {
        beta: policy.beta_min,
        relative_tail: f64::NAN,
        tolerance: policy.tail_tolerance,
    })
}

#[cfg(test)]
mod tests {
    use super::*;

    fn close(a: f64, b: f64, rel: f64) -> bool {
        (a - b).abs() <= rel * b.abs().max(1e-300)
    }

    #[test]
    fn solve_count_routes() {
        let b = Potential::box_well(&[1.0]).unwrap();
        assert_eq!(solve_count(&b, 1.0, 10, 1e-4).unwrap().count(), 10);
        let q = Potential::homogeneous(1, 4.0).unwrap();
        let s = solve_count(&q, 1.0, 5, 1e-6).unwrap();
        assert_eq!(s.count(), 5);
        assert!(close(s.levels()[0], 0.667_986_259_155_777_1, 1e-6), "{:?} {:?}", s.levels(), s.errors());
    }

    #[test]
    fn box_levels_1d() {
        let s = solve_box(&[1.0], 1.0, 1.0, 3).unwrap();
        let base = PI * PI / 2.0;
        for (n, e) in s.levels().iter().enumerate() {
            let k = (n + 1) as f64;
            assert!(close(*e, base * k * k, 1e-15));
        }
        let s = solve_box(&[1.0], 1.0, 2.0, 1).unwrap();
        assert!(close(s.levels()[0], 4.0 * base, 1e-15));
    }

    /// Brute force over a cube of multi-indices.
    fn brute_box(lengths: &[f64], count: usize) -> Vec<f64> {
        let nmax = 12u32;
        let mut all = Vec::new();
        let dims = lengths.len();
        let mut idx = vec![1u32; dims];
        loop {
            let e: f64 = idx
                .iter()
                .zip(lengths)
                .map(|(&n, l)| (n as f64 / l).powi(2))
                .sum::<f64>()
                * PI
                * PI
                / 2.0;
            all.push(e);
            let mut d = 0;
            loop {
                if d == dims {
                    all.sort_by(f64::total_cmp);
                    all.truncate(count);
                    return all;
                }
                idx[d] += 1;
                if idx[d] <= nmax {
                    break;
                }
                idx[d] = 1;
                d += 1;
            }
        }
    }

    #[test]
    fn box_levels_match_brute_force() {
        let s = solve_box(&[1.0, 1.0], 1.0, 1.0, 2).unwrap();
        assert!(close(s.levels()[0], PI * PI, 1e-15));
        assert!(close(s.levels()[1], 2.5 * PI * PI, 1e-15));
        let s = solve_box(&[1.0, 1.0], 1.0, 1.0, 3).unwrap();
        assert_eq!(s.levels()[1], s.levels()[2]);

        for lengths in [vec![1.0, 1.3], vec![1.0, 1.0, 1.0], vec![0.7, 1.1, 2.0]] {
            let s = solve_box(&lengths, 1.0, 1.0, 40).unwrap();
            let b = brute_box(&lengths, 40);
            for (x, y) in s.levels().iter().zip(&b) {
                assert!(close(*x, *y, 1e-13), "{lengths:?}: {x} vs {y}");
            }
        }
    }

    #[test]
    fn box_enumeration_cap() {
        assert!(matches!(
            solve_box_capped(&[1.0, 1.0], 1.0, 1.0, 100, 50),
            Err(Error::Resource(_))
        ));
        assert!(matches!(
            solve_box_capped(&[1.0, 1.0, 1.0], 1.0, 1.0, 40, 45),
            Err(Error::Resource(_))
        ));
    }

    #[test]
    fn harmonic_levels_and_degeneracy() {
        let s = solve_harmonic(1, 1.0, 1.0, 3).unwrap();
        let w = 2f64.sqrt();
        assert!(close(s.levels()[0], 0.5 * w, 1e-15));
        assert!(close(s.levels()[2] - s.levels()[1], w, 1e-14));
        let s = solve_harmonic(3, 1.0, 1.0, 10).unwrap();
        // shells 0,1,2 have 1, 3, 6 states
        assert_eq!(s.levels().iter().filter(|&&e| e == s.levels()[1]).count(), 3);
        assert_eq!(s.levels().iter().filter(|&&e| e == s.levels()[4]).count(), 6);
    }

    #[test]
    fn linear_levels_from_airy_zeros() {
        let s = solve_linear(1.0, 1.0, 4).unwrap();
        let scale = 0.5f64.cbrt();
        assert!(close(s.levels()[0], scale * 1.018_792_971_647_471, 1e-15));
        assert!(close(s.levels()[1], scale * 2.338_107_410_459_767, 1e-15));
        // φ(h) = h^{2/3}
        let s2 = solve_linear(1.0, 8.0, 4).unwrap();
        assert!(close(s2.levels()[3], 4.0 * s.levels()[3], 1e-14));
    }

    #[test]
    fn fd_box_matches_analytic() {
        let p = Potential::box_well(&[1.0]).unwrap();
        let s = solve_fd_1d(&p, 1.0, FdGrid::bounded(4000), 1, 1e-6).unwrap();
        assert!((s.levels()[0] - PI * PI / 2.0).abs() < 1e-5);
        assert_eq!(s.source(), SpectrumSource::FiniteDifference);
    }

    #[test]
    fn fd_box_converges_at_second_order() {
        let p = Potential::box_well(&[1.0]).unwrap();
        let exact = PI * PI / 2.0;
        let e1 = fd_levels(&p, 1.0, (0.0, 1.0), 500, 1).unwrap()[0];
        let e2 = fd_levels(&p, 1.0, (0.0, 1.0), 1000, 1).unwrap()[0];
        let ratio = (e1 - exact) / (e2 - exact);
        assert!((ratio - 4.0).abs() < 0.05, "ratio {ratio}");
    }

    #[test]
    fn fd_oscillator_spacing_and_scaling() {
        let p = Potential::homogeneous(1, 2.0).unwrap();
        let s = solve_fd_1d(&p, 1.0, FdGrid::symmetric(8.0, 2000), 2, 1e-6).unwrap();
        let gap = s.levels()[1] - s.levels()[0];
        assert!(close(gap, 2f64.sqrt(), 1e-5), "{gap}");
        let s2 = solve_fd_1d(&p, 2.0, FdGrid::symmetric(8.0, 2000), 1, 1e-6).unwrap();
        assert!(close(s2.levels()[0] / s.levels()[0], 2.0, 1e-4));
    }

    #[test]
    fn fd_linear_matches_airy() {
        let p = Potential::homogeneous(1, 1.0).unwrap();
        let fd = solve_fd_1d(&p, 1.0, FdGrid::symmetric(40.0, 8000), 6, 1e-6).unwrap();
        let exact = solve_linear(1.0, 1.0, 6).unwrap();
        for (a, b) in fd.levels().iter().zip(exact.levels()) {
            assert!(close(*a, *b, 1e-7), "{a} vs {b}");
        }
    }

    #[test]
    fn fd_requires_half_width_for_unbounded() {
        let p = Potential::homogeneous(1, 4.0).unwrap();
        assert!(solve_fd_1d(&p, 1.0, FdGrid::bounded(1000), 2, 1e-6).is_err());
        let p2 = Potential::homogeneous(2, 4.0).unwrap();
        assert!(solve_fd_1d(&p2, 1.0, FdGrid::symmetric(5.0, 1000), 2, 1e-6).is_err());
    }

    #[test]
    fn fd_accuracy_error_names_level() {
        let p = Potential::homogeneous(1, 2.0).unwrap();
        match solve_fd_1d(&p, 1.0, FdGrid::symmetric(8.0, 40), 10, 1e-12) {
            Err(Error::Accuracy { level, .. }) => assert!(level >= 1),
            other => panic!("expected accuracy error, got {other:?}"),
        }
    }

    #[test]
    fn rescale_examples() {
        let base = Spectrum::from_levels(vec![1.0, 2.0, 3.0], 1.0).unwrap();
        let same = rescale(&base, 1.0, 1.0).unwrap();
        assert_eq!(same.levels(), base.levels());
        assert_eq!(same.source(), SpectrumSource::Rescaled);

        let well = Spectrum::from_levels(vec![PI * PI / 2.0], 1.0).unwrap();
        let r = rescale(&well, 3.0, 2.0).unwrap();
        assert!(close(r.levels()[0], 9.0 * PI * PI / 2.0, 1e-15));

        let one = Spectrum::from_levels(vec![1.0], 1.0).unwrap();
        let r = rescale(&one, 4.0, 2.0 / 3.0).unwrap();
        assert!(close(r.levels()[0], 2.519_842_099_789_746, 1e-12));

        assert!(rescale(&one, 0.0, 1.0).is_err());
        assert!(rescale(&r, 2.0, 1.0).is_err());
    }

    #[test]
    fn rescale_is_multiplicative() {
        let base = solve_box(&[1.0], 1.0, 1.0, 10).unwrap();
        let (h1, h2, a) = (1.7, 0.6, 2.0);
        let joint = rescale(&base, h1 * h2, a).unwrap();
        for (x, b) in joint.levels().iter().zip(base.levels()) {
            assert!(close(*x, b * (h1 * h2).powf(a), 1e-14));
        }
    }

    #[test]
    fn tail_bound_box_is_negligible() {
        let levels: Vec<f64> = (1..=50).map(|n| (n * n) as f64 * PI * PI / 2.0).collect();
        let s = Spectrum::truncated_from_levels(levels, 1.0).unwrap();
        let t = tail_bound(&s, 1.0).unwrap();
        assert!(t <= 1e-100);
        // The integral comparison starts at t = M, so the bound sits between
        // e^{-βE_51} and e^{-βE_50}.
        let ln_t = s.ln_tail_bound(1.0).unwrap();
        assert!(ln_t < -(50.0f64 * 50.0 * PI * PI / 2.0));
        assert!(ln_t > -(51.0f64 * 51.0 * PI * PI / 2.0));
    }

    #[test]
    fn tail_bound_linear_growth_vs_geometric_series() {
        let levels: Vec<f64> = (1..=20).map(|n| n as f64).collect();
        let s = Spectrum::truncated_from_levels(levels, 1.0).unwrap();
        let bound = tail_bound(&s, 1.0).unwrap();
        let oracle = (-21.0f64).exp() / (1.0 - (-1.0f64).exp());
        assert!(bound >= oracle && bound <= 3.0 * oracle, "{bound} vs {oracle}");
    }

    #[test]
    fn tail_bound_errors() {
        let short = Spectrum::truncated_from_levels(vec![1.0, 2.0, 3.0], 1.0).unwrap();
        assert!(tail_bound(&short, 1.0).is_err());
        let flat = Spectrum::truncated_from_levels(vec![1.0; 12], 1.0).unwrap();
        assert!(matches!(tail_bound(&flat, 1.0), Err(Error::Model(_))));
        let complete = Spectrum::from_levels(vec![1.0, 2.0], 1.0).unwrap();
        assert_eq!(tail_bound(&complete, 1.0).unwrap(), 0.0);
    }

    #[test]
    fn csv_round_trip_and_validation() {
        let s = solve_box(&[1.0, 2.0], 1.0, 0.5, 12).unwrap();
        let mut buf = Vec::new();
        s.write_csv(&mut buf).unwrap();
        let text = String::from_utf8(buf.clone()).unwrap();
        assert!(text.starts_with("# h="));
        assert!(text.contains("\nn,E\n"));
        let back = Spectrum::read_csv(buf.as_slice()).unwrap();
        assert_eq!(back.levels(), s.levels());
        assert_eq!(back.planck(), s.planck());
        assert_eq!(back.source(), SpectrumSource::AnalyticBox);

        let bad_order = "# h=1\nn,E\n1,2.0\n2,1.0\n";
        assert!(Spectrum::read_csv(bad_order.as_bytes()).is_err());
        let negative = "# h=1\nn,E\n1,-2.0\n";
        assert!(Spectrum::read_csv(negative.as_bytes()).is_err());
        let no_h = "n,E\n1,2.0\n";
        assert!(Spectrum::read_csv(no_h.as_bytes()).is_err());
    }

    #[test]
    fn auto_solve_meets_truncation_policy() {
        for p in [
            Potential::box_well(&[1.0]).unwrap(),
            Potential::homogeneous(1, 2.0).unwrap(),
            Potential::homogeneous(1, 1.0).unwrap(),
        ] {
            let policy = TruncationPolicy::new(0.05);
            let s = solve(&p, 1.0, &policy).unwrap();
            let (z, e) = relative_tails(&s, 0.05).unwrap();
            assert!(z < 1e-10 && e < 1e-10, "{:?}: {z:e} {e:e}", p.kind());
        }
    }

    #[test]
    fn auto_solve_fd_quartic() {
        let p = Potential::homogeneous(1, 4.0).unwrap();
        let s = solve(&p, 1.0, &TruncationPolicy::new(1.0)).unwrap();
        assert_eq!(s.source(), SpectrumSource::FiniteDifference);
        // Ground state of -½u'' + x⁴u.
        assert!(close(s.levels()[0], 0.667_986_259_155_777_1, 1e-7), "{}", s.levels()[0]);
    }

    mod props {
        use super::*;
        use proptest::prelude::*;

        proptest! {
            #[test]
            fn tail_bound_monotone_in_beta(gamma in 0.5f64..3.0, c in 0.5f64..5.0, beta in 0.01f64..5.0) {
                let levels: Vec<f64> = (1..=40).map(|n| c * (n as f64).powf(gamma)).collect();
                let s = Spectrum::truncated_from_levels(levels, 1.0).unwrap();
                let a = s.ln_tail_bound(beta).unwrap();
                let b = s.ln_tail_bound(2.0 * beta).unwrap();
                prop_assert!(b <= a);
            }
        }
    }
}
