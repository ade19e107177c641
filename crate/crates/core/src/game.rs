//! The energy–entropy compromise `F = λE + S` as a function of
//! unnormalized weights `p_n`, where `P_n = p_n / Z` and `Z = Σ p_n`.
//!
//! `F` is homogeneous of degree zero in `p`. Its stationary point is
//! `p_n = e^{λE_n}` (the Gibbs distribution at `β = -λ`), and it is a
//! maximum transverse to the scale ray `c·p`.

use std::io::Write;

use nalgebra::DMatrix;
use twofloat::TwoFloat;

use crate::error::{Error, Result};
use crate::numeric::CompensatedSum;

/// Levels, multiplier `λ ≤ 0` and positive weights.
#[derive(Debug, Clone, PartialEq)]
pub struct GameState {
    levels: Vec<f64>,
    lambda: f64,
    weights: Vec<f64>,
}

fn check_levels(levels: &[f64]) -> Result<()> {
    if levels.is_empty() {
        return Err(Error::Argument("the game needs at least one level".into()));
    }
    if let Some(e) = levels.iter().find(|e| !(**e > 0.0 && e.is_finite())) {
        return Err(Error::Argument(format!("levels must be positive and finite, found {e}")));
    }
    Ok(())
}

fn check_lambda(lambda: f64) -> Result<()> {
    if lambda <= 0.0 && lambda.is_finite() {
        Ok(())
    } else {
        Err(Error::Argument(format!(
            "lambda = -beta must be finite and not positive, got {lambda}"
        )))
    }
}

impl GameState {
    pub fn new(levels: Vec<f64>, lambda: f64, weights: Vec<f64>) -> Result<Self> {
        check_levels(&levels)?;
        check_lambda(lambda)?;
        if weights.len() != levels.len() {
            return Err(Error::Argument(format!(
                "{} weights for {} levels",
                weights.len(),
                levels.len()
            )));
        }
        if weights.iter().any(|p| !(*p > 0.0 && p.is_finite())) {
            return Err(Error::Domain {
                point: weights,
                reason: "weights must be positive and finite".into(),
            });
        }
        Ok(Self { levels, lambda, weights })
    }

    /// The state at `p_n = e^{λE_n}`.
    pub fn stationary(levels: Vec<f64>, lambda: f64) -> Result<Self> {
        let weights = stationary_point(&levels, lambda)?;
        Self::new(levels, lambda, weights)
    }

    pub fn levels(&self) -> &[f64] {
        &self.levels
    }

    pub fn lambda(&self) -> f64 {
        self.lambda
    }

    pub fn weights(&self) -> &[f64] {
        &self.weights
    }

    /// `Z = Σ p_n`.
    pub fn z(&self) -> f64 {
        self.weights.iter().copied().collect::<CompensatedSum>().value()
    }

    /// `Z_k = Σ_{j≠k} p_j`.
    pub fn z_partial(&self, k: usize) -> f64 {
        self.weights
            .iter()
            .enumerate()
            .filter(|(j, _)| *j != k)
            .map(|(_, p)| *p)
            .collect::<CompensatedSum>()
            .value()
    }

    pub fn probabilities(&self) -> Vec<f64> {
        let z = self.z();
        self.weights.iter().map(|p| p / z).collect()
    }
}

/// `F`, the mean energy `E` and the entropy `S` at a state.
#[derive(Debug, Clone, Copy, PartialEq)]
pub struct Compromise {
    pub f: f64,
    pub energy: f64,
    pub entropy: f64,
}

/// `E = Σ E_n P_n`, `S = -Σ P_n ln P_n`, `F = λE + S`.
pub fn compromise(state: &GameState) -> Compromise {
    let probs = state.probabilities();
    let energy: f64 = probs.iter().zip(&state.levels).map(|(p, e)| p * e).sum();
    let entropy: f64 = -probs.iter().map(|p| p * p.ln()).sum::<f64>();
    Compromise {
        f: state.lambda * energy + entropy,
        energy,
        entropy,
    }
}

/// `∂F/∂p_k = λ(E_k/Z - Σ E_n p_n/Z²) - ln p_k/Z + Σ p_n ln p_n/Z²`.
///
/// Evaluated in the equivalent scale-free form
/// `(λ(E_k - E) - ln P_k - S) / Z`, which avoids cancelling the two
/// logarithmic terms when `Z` is far from 1.
pub fn gradient(state: &GameState) -> Vec<f64> {
    let z = state.z();
    let c = compromise(state);
    let ln_z = z.ln();
    state
        .levels
        .iter()
        .zip(&state.weights)
        .map(|(e, p)| (state.lambda * (e - c.energy) - (p.ln() - ln_z) - c.entropy) / z)
        .collect()
}

/// `p_n = e^{λE_n}`, unique up to a positive factor.
pub fn stationary_point(levels: &[f64], lambda: f64) -> Result<Vec<f64>> {
    check_levels(levels)?;
    check_lambda(lambda)?;
    Ok(levels.iter().map(|e| (lambda * e).exp()).collect())
}

/// Largest relative deviation of the state's probabilities from the Gibbs
/// distribution `e^{λE_n} / Σ e^{λE_m}`.
pub fn distance_from_stationary(state: &GameState) -> f64 {
    let gibbs = gibbs_probabilities(&state.levels, state.lambda);
    state
        .probabilities()
        .iter()
        .zip(&gibbs)
        .map(|(p, g)| ((p - g) / g).abs())
        .fold(0.0, f64::max)
}

fn gibbs_probabilities(levels: &[f64], lambda: f64) -> Vec<f64> {
    let e_min = levels.iter().copied().fold(f64::INFINITY, f64::min);
    let w: Vec<f64> = levels.iter().map(|e| (lambda * (e - e_min)).exp()).collect();
    let total: f64 = w.iter().sum();
    w.iter().map(|x| x / total).collect()
}

/// Hessian of `F` at the stationary point: `-Z_k/(p_k Z²)` on the
/// diagonal and `1/Z²` off it. Fails with a contract error when the state
/// is not stationary to `1e-10` relative.
pub fn hessian(state: &GameState) -> Result<DMatrix<f64>> {
    let dist = distance_from_stationary(state);
    if dist > 1e-10 {
        return Err(Error::Contract(format!(
            "the closed-form Hessian holds only at the stationary point; probabilities deviate by {dist:e}"
        )));
    }
    let k = state.levels.len();
    let z = state.z();
    let off = 1.0 / (z * z);
    Ok(DMatrix::from_fn(k, k, |i, j| {
        if i == j {
            -state.z_partial(i) / (state.weights[i] * z * z)
        } else {
            off
        }
    }))
}

/// `f(a)` and `f'(a)` for `f(x) = Π (r_i - x)`.
fn product_and_derivative(r: &[f64], a: f64) -> (f64, f64) {
    // f'(a) = -Σ_i Π_{j≠i} (r_j - a), with prefix/suffix products so that a
    // zero factor needs no division.
    let n = r.len();
    let mut suffix = vec![1.0; n + 1];
    for i in (0..n).rev() {
        suffix[i] = suffix[i + 1] * (r[i] - a);
    }
    let mut prefix = 1.0;
    let mut deriv = 0.0;
    for i in 0..n {
        deriv -= prefix * suffix[i + 1];
        prefix *= r[i] - a;
    }
    (suffix[0], deriv)
}

/// Determinant of the matrix with diagonal `r` and every off-diagonal entry
/// equal to `a`: `f(a) - a f'(a)` with `f(x) = Π (r_i - x)`.
pub fn structured_det(diagonal: &[f64], a: f64) -> Result<f64> {
    if diagonal.is_empty() {
        return Err(Error::Argument("structured determinant needs k >= 1".into()));
    }
    let (f, df) = product_and_derivative(diagonal, a);
    Ok(f - a * df)
}

/// Determinant with diagonal `r`, `a` above and `b` below the diagonal:
/// `(a f(b) - b f(a)) / (a - b)`, reducing to [`structured_det`] at `a = b`.
pub fn structured_det_general(diagonal: &[f64], a: f64, b: f64) -> Result<f64> {
    if a == b {
        return structured_det(diagonal, a);
    }
    if diagonal.is_empty() {
        return Err(Error::Argument("structured determinant needs k >= 1".into()));
    }
    let (fa, _) = product_and_derivative(diagonal, a);
    let (fb, _) = product_and_derivative(diagonal, b);
    Ok((a * fb - b * fa) / (a - b))
}

/// Closed form of the `k`-th leading principal minor of the Hessian at the
/// stationary point: `(-Z)^{-k} (1 - Σ_{n≤k} p_n / Z) / Π_{n≤k} p_n`.
pub fn leading_minor(state: &GameState, k: usize) -> f64 {
    let z = state.z();
    // 1 - Σ_{n≤k} p_n/Z, summed from the tail to avoid cancellation.
    let tail: f64 = state.weights[k..].iter().sum();
    let prod: f64 = state.weights[..k].iter().product();
    (-z).powi(-(k as i32)) * (tail / z) / prod
}

/// Leading `k×k` minor of the Hessian by Gaussian elimination with partial
/// pivoting, entries and arithmetic in double-double.
///
/// The minor is proportional to the tail weight `Σ_{n>k} p_n / Z`, so its
/// condition number grows like `Z / tail`; entries rounded to f64 alone
/// would put the determinant off by that factor times machine epsilon.
pub fn direct_minor(weights: &[f64], k: usize) -> f64 {
    let z: TwoFloat = weights.iter().fold(TwoFloat::from(0.0), |acc, p| acc + *p);
    let inv_z2 = recip(z * z);
    let mut m: Vec<Vec<TwoFloat>> = (0..k)
        .map(|i| {
            (0..k)
                .map(|j| {
                    if i == j {
                        -((z - weights[i]) / weights[i]) * inv_z2
                    } else {
                        inv_z2
                    }
                })
                .collect()
        })
        .collect();
    let mut det = TwoFloat::from(1.0);
    for col in 0..k {
        let pivot = (col..k)
            .max_by(|a, b| m[*a][col].abs().partial_cmp(&m[*b][col].abs()).unwrap())
            .unwrap();
        if pivot != col {
            m.swap(pivot, col);
            det = -det;
        }
        let d = m[col][col];
        det *= d;
        let inv_d = recip(d);
        let (upper, lower) = m.split_at_mut(col + 1);
        let pivot_row = &upper[col];
        for row in lower.iter_mut() {
            let factor = row[col] * inv_d;
            for (x, p) in row[col..].iter_mut().zip(&pivot_row[col..]) {
                *x -= factor * *p;
            }
        }
    }
    f64::from(det)
}

/// `1/x` to double-double accuracy by Newton refinement of the f64
/// reciprocal. twofloat's own `TwoFloat / TwoFloat` is only f64-accurate.
fn recip(x: TwoFloat) -> TwoFloat {
    let mut r = TwoFloat::from(1.0 / x.hi());
    for _ in 0..2 {
        let residual = TwoFloat::from(1.0) - x * r;
        r += r * residual;
    }
    r
}

/// One leading minor: closed form, direct determinant and sign.
#[derive(Debug, Clone, Copy, PartialEq)]
pub struct MinorCheck {
    pub k: usize,
    pub closed_form: f64,
    pub direct: f64,
    /// `-1` or `+1`, taken from the closed form.
    pub sign: i32,
}

/// Signs of the leading principal minors `H_1 … H_{k_max}` at the
/// stationary point, each with the matching [`direct_minor`].
///
/// Only `k < K` is meaningful: the full Hessian annihilates `p`, so
/// `H_K = 0` and `k_max >= K` is a contract error.
pub fn principal_minor_signs(levels: &[f64], lambda: f64, k_max: usize) -> Result<Vec<MinorCheck>> {
    check_levels(levels)?;
    if !(lambda < 0.0 && lambda.is_finite()) {
        return Err(Error::Argument(format!("minor signs need lambda < 0, got {lambda}")));
    }
    let mut sorted = levels.to_vec();
    sorted.sort_by(f64::total_cmp);
    if sorted.windows(2).any(|w| w[0] == w[1]) {
        return Err(Error::Argument("minor signs need distinct levels".into()));
    }
    if k_max == 0 || k_max >= levels.len() {
        return Err(Error::Contract(format!(
            "k_max must satisfy 1 <= k_max < K = {}; the full Hessian is singular along p",
            levels.len()
        )));
    }
    let state = GameState::stationary(levels.to_vec(), lambda)?;
    Ok((1..=k_max)
        .map(|k| {
            let closed_form = leading_minor(&state, k);
            let direct = direct_minor(state.weights(), k);
            MinorCheck {
                k,
                closed_form,
                direct,
                sign: if closed_form < 0.0 { -1 } else { 1 },
            }
        })
        .collect())
}

/// Step control for [`ascend`].
#[derive(Debug, Clone, Copy, PartialEq)]
pub struct AscentOptions {
    pub step: f64,
    /// Stop once `max_k |u_k - ū| < tolerance` (see [`ascend`]).
    pub tolerance: f64,
    pub max_iterations: usize,
}

impl Default for AscentOptions {
    fn default() -> Self {
        Self {
            step: 0.5,
            tolerance: 1e-12,
            max_iterations: 100_000,
        }
    }
}

/// One row of an ascent trace.
#[derive(Debug, Clone, Copy, PartialEq)]
pub struct TracePoint {
    pub iter: usize,
    pub f: f64,
    pub grad_norm: f64,
}

#[derive(Debug, Clone, PartialEq)]
pub struct Ascent {
    pub state: GameState,
    pub iterations: usize,
    pub trace: Vec<TracePoint>,
}

fn norm(v: &[f64]) -> f64 {
    v.iter().map(|x| x * x).sum::<f64>().sqrt()
}

/// Natural-gradient ascent of `F` in log-weights `θ = ln p`.
///
/// With `u_k = λE_k - ln P_k` the direction is `u_k - ū` (`ū = Σ P u`); a
/// unit step lands on the Gibbs point, so the default step of one half
/// converges linearly. Steps that would lower `F` are halved. After each
/// step the weights are rescaled so `Σ p = Σ e^{λE_n}`, fixing the scale.
pub fn ascend(levels: &[f64], lambda: f64, initial: &[f64], options: AscentOptions) -> Result<Ascent> {
    if !(lambda < 0.0) {
        return Err(Error::Argument(format!("ascent needs lambda < 0, got {lambda}")));
    }
    let gibbs_weights = stationary_point(levels, lambda)?;
    let gauge: f64 = gibbs_weights.iter().sum();
    let ln_gauge = gauge.ln();
    let ln_gibbs: Vec<f64> = levels.iter().map(|e| lambda * e - ln_gauge).collect();
    let mut state = GameState::new(levels.to_vec(), lambda, initial.to_vec())?;
    let rescale = |w: &mut Vec<f64>| {
        let s: f64 = w.iter().sum();
        w.iter_mut().for_each(|x| *x *= gauge / s);
    };
    rescale(&mut state.weights);
    // F = ln Σe^{λE} - KL(P || Gibbs). The divergence form stays accurate
    // where F itself has flattened to its last few bits.
    let divergence = |s: &GameState| kl_to(&s.probabilities(), &ln_gibbs);
    let mut kl = divergence(&state);
    let mut trace = vec![TracePoint {
        iter: 0,
        f: ln_gauge - kl,
        grad_norm: norm(&gradient(&state)),
    }];
    for iter in 0..options.max_iterations {
        let probs = state.probabilities();
        let u: Vec<f64> = levels.iter().zip(&probs).map(|(e, p)| lambda * e - p.ln()).collect();
        let mean: f64 = u.iter().zip(&probs).map(|(u, p)| u * p).sum();
        let dir: Vec<f64> = u.iter().map(|x| x - mean).collect();
        let spread = dir.iter().fold(0.0f64, |m, x| m.max(x.abs()));
        if spread < options.tolerance {
            return Ok(Ascent {
                state,
                iterations: iter,
                trace,
            });
        }
        let mut eta = options.step;
        loop {
            let mut trial: Vec<f64> = state
                .weights
                .iter()
                .zip(&dir)
                .map(|(p, d)| p.ln() + eta * d)
                .collect();
            let top = trial.iter().copied().fold(f64::NEG_INFINITY, f64::max);
            trial.iter_mut().for_each(|t| *t = (*t - top).exp());
            rescale(&mut trial);
            let candidate = GameState {
                levels: state.levels.clone(),
                lambda,
                weights: trial,
            };
            let kl_new = divergence(&candidate);
            if kl_new <= kl {
                kl = kl_new;
                state = candidate;
                break;
            }
            eta *= 0.5;
            if eta < 1e-12 {
                return Err(Error::Convergence {
                    iterations: iter,
                    gradient_norm: norm(&gradient(&state)),
                });
            }
        }
        trace.push(TracePoint {
            iter: iter + 1,
            f: ln_gauge - kl,
            grad_norm: norm(&gradient(&state)),
        });
    }
    Err(Error::Convergence {
        iterations: options.max_iterations,
        gradient_norm: norm(&gradient(&state)),
    })
}

/// `Σ P_n ln(P_n / G_n)` written as `Σ P_n (r_n - 1 - ln r_n)` with
/// `r = G/P`, a sum of non-negative terms.
fn kl_to(probs: &[f64], ln_target: &[f64]) -> f64 {
    probs
        .iter()
        .zip(ln_target)
        .map(|(p, lg)| {
            let l = lg - p.ln();
            let term = if l.abs() < 1e-3 {
                l * l * (0.5 + l * (1.0 / 6.0 + l / 24.0))
            } else {
                l.exp_m1() - l
            };
            p * term
        })
        .sum()
}

/// Writes `iter,F,grad_norm` rows with 17 significant digits.
pub fn write_trace_csv<W: Write>(trace: &[TracePoint], out: W) -> Result<()> {
    let mut w = csv::Writer::from_writer(out);
    w.write_record(["iter", "F", "grad_norm"])?;
    for t in trace {
        w.write_record([t.iter.to_string(), format!("{:.16e}", t.f), format!("{:.16e}", t.grad_norm)])?;
    }
    w.flush()?;
    Ok(())
}
