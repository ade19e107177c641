//! Selected eigenvalues of real symmetric tridiagonal matrices.
//!
//! Eigenvalues are isolated with Sturm counts (the number of negative
//! pivots of `T - xI = LDLᵀ`) and then polished by Newton's method on the
//! characteristic polynomial, safeguarded by the Sturm bracket.

use rayon::prelude::*;

use crate::error::{Error, Result};

#[derive(Debug, Clone)]
pub struct SymTridiagonal {
    diag: Vec<f64>,
    off_sq: Vec<f64>,
    pivmin: f64,
}

impl SymTridiagonal {
    /// `off[i]` couples rows `i` and `i + 1`, so `off.len() == diag.len() - 1`.
    pub fn new(diag: Vec<f64>, off: &[f64]) -> Result<Self> {
        if diag.is_empty() || off.len() + 1 != diag.len() {
            return Err(Error::Argument(format!(
                "tridiagonal shape mismatch: {} diagonal, {} off-diagonal entries",
                diag.len(),
                off.len()
            )));
        }
        let off_sq: Vec<f64> = off.iter().map(|e| e * e).collect();
        let max_sq = off_sq.iter().cloned().fold(1.0, f64::max);
        Ok(Self {
            diag,
            off_sq,
            pivmin: f64::MIN_POSITIVE * max_sq,
        })
    }

    pub fn len(&self) -> usize {
        self.diag.len()
    }

    pub fn is_empty(&self) -> bool {
        self.diag.is_empty()
    }

    /// Gershgorin enclosure of the spectrum.
    pub fn gershgorin(&self) -> (f64, f64) {
        let n = self.len();
        let mut lo = f64::INFINITY;
        let mut hi = f64::NEG_INFINITY;
        for i in 0..n {
            let left = if i > 0 { self.off_sq[i - 1].sqrt() } else { 0.0 };
            let right = if i + 1 < n { self.off_sq[i].sqrt() } else { 0.0 };
            lo = lo.min(self.diag[i] - left - right);
            hi = hi.max(self.diag[i] + left + right);
        }
        (lo, hi)
    }

    /// Number of eigenvalues strictly below `x`.
    pub fn count_below(&self, x: f64) -> usize {
        let mut q = self.diag[0] - x;
        if q.abs() <= self.pivmin {
            q = -self.pivmin;
        }
        let mut count = usize::from(q < 0.0);
        for i in 1..self.diag.len() {
            q = self.diag[i] - x - self.off_sq[i - 1] / q;
            if q.abs() <= self.pivmin {
                q = -self.pivmin;
            }
            count += usize::from(q < 0.0);
        }
        count
    }

    /// Sturm count and Newton correction `det(T - x) / det'(T - x)` at `x`.
    fn count_and_newton(&self, x: f64) -> (usize, f64) {
        let mut q = self.diag[0] - x;
        if q.abs() <= self.pivmin {
            q = -self.pivmin;
        }
        let mut inv = 1.0 / q;
        let mut dq = -1.0;
        let mut log_deriv = dq * inv;
        let mut count = usize::from(q < 0.0);
        for i in 1..self.diag.len() {
            let e2 = self.off_sq[i - 1];
            let t = e2 * inv;
            dq = -1.0 + t * dq * inv;
            q = self.diag[i] - x - t;
            if q.abs() <= self.pivmin {
                q = -self.pivmin;
            }
            inv = 1.0 / q;
            log_deriv += dq * inv;
            count += usize::from(q < 0.0);
        }
        (count, 1.0 / log_deriv)
    }

    /// Eigenvalue `index` inside `[lo, hi]`, which must satisfy
    /// `count_below(lo) <= index < count_below(hi)`. `isolated` says the
    /// bracket holds no other eigenvalue, so Newton cannot be led astray.
    fn refine(&self, index: usize, mut lo: f64, mut hi: f64, start: f64, isolated: bool) -> f64 {
        let (g_lo, g_hi) = self.gershgorin();
        // Sturm counts are reliable to about eps·‖T‖ in absolute terms.
        let count_resolution = 8.0 * f64::EPSILON * g_lo.abs().max(g_hi.abs()) + self.pivmin;
        let mut x = if start > lo && start < hi { start } else { 0.5 * (lo + hi) };
        let mut prev_step = f64::INFINITY;
        for _ in 0..400 {
            let (count, step) = self.count_and_newton(x);
            if count > index {
                hi = x;
            } else {
                lo = x;
            }
            // Below the count resolution further bisection only samples noise.
            let width_tol = 2.0 * f64::EPSILON * lo.abs().max(hi.abs()) + 0.25 * count_resolution;
            if hi - lo <= width_tol {
                return 0.5 * (lo + hi);
            }
            let candidate = x - step;
            let inside = step.is_finite() && candidate >= lo && candidate <= hi;
            // Newton converges quadratically, so once the step is at the noise
            // floor the corrected point is as good as the arithmetic allows.
            if inside && step.abs() <= 16.0 * f64::EPSILON * x.abs() + count_resolution {
                if isolated {
                    return candidate;
                }
                // A tiny step can also come from cancellation near a pole of
                // an intermediate pivot, so confirm with a Sturm bracket.
                let delta = 4.0 * step.abs() + count_resolution;
                if self.count_below(candidate - delta) <= index && self.count_below(candidate + delta) > index {
                    return candidate;
                }
                x = 0.5 * (lo + hi);
                prev_step = f64::INFINITY;
                continue;
            }
            // Newton must contract; otherwise fall back to bisection.
            if inside && candidate != lo && candidate != hi && step.abs() < 0.7 * prev_step {
                prev_step = step.abs();
                x = candidate;
            } else {
                x = 0.5 * (lo + hi);
                prev_step = f64::INFINITY;
            }
        }
        0.5 * (lo + hi)
    }

    /// Eigenvalues `0..guesses.len()` given approximations good to a fraction
    /// of the level spacing. Midpoints between consecutive guesses are
    /// checked with one Sturm count each; if any fails to separate, this
    /// falls back to [`lowest_eigenvalues`](Self::lowest_eigenvalues).
    pub fn eigenvalues_near(&self, guesses: &[f64]) -> Result<Vec<f64>> {
        let count = guesses.len();
        if count == 0 || count >= self.len() {
            return self.lowest_eigenvalues(count);
        }
        let (g_lo, _) = self.gershgorin();
        let last_gap = if count >= 2 { guesses[count - 1] - guesses[count - 2] } else { guesses[0].abs() + 1.0 };
        let mut cuts = Vec::with_capacity(count + 1);
        cuts.push(g_lo - f64::EPSILON * g_lo.abs() - self.pivmin - 1.0);
        for w in guesses.windows(2) {
            cuts.push(0.5 * (w[0] + w[1]));
        }
        cuts.push(guesses[count - 1] + 0.5 * last_gap.max(0.0));
        let separated = cuts.windows(2).all(|w| w[1] > w[0])
            && cuts[1..].par_iter().enumerate().all(|(k, &c)| self.count_below(c) == k + 1);
        if !separated {
            return self.lowest_eigenvalues(count);
        }
        Ok((0..count)
            .into_par_iter()
            .map(|n| self.refine(n, cuts[n], cuts[n + 1], guesses[n], true))
            .collect())
    }

    /// The `count` smallest eigenvalues in ascending order.
    pub fn lowest_eigenvalues(&self, count: usize) -> Result<Vec<f64>> {
        if count == 0 || count > self.len() {
            return Err(Error::Argument(format!(
                "requested {count} eigenvalues of a {0}x{0} matrix",
                self.len()
            )));
        }
        let (g_lo, g_hi) = self.gershgorin();
        let pad = f64::EPSILON * g_lo.abs().max(g_hi.abs()) * 4.0 + self.pivmin;
        let lo = g_lo - pad;
        let mut hi = g_hi + pad;
        // Tighten the upper end: most callers want a small low-lying subset.
        let mut probe = lo + (hi - lo) / 1024.0;
        while probe < hi {
            if self.count_below(probe) >= count {
                hi = probe;
                break;
            }
            probe = lo + 2.0 * (probe - lo);
        }
        let c_hi = self.count_below(hi);

        let mut isolated: Vec<(usize, f64, f64)> = Vec::with_capacity(count);
        let mut clustered: Vec<(usize, f64)> = Vec::new();
        let mut stack = vec![(lo, hi, 0usize, c_hi)];
        while let Some((a, b, ca, cb)) = stack.pop() {
            if cb <= ca || ca >= count {
                continue;
            }
            if cb - ca == 1 {
                isolated.push((ca, a, b));
                continue;
            }
            let mid = 0.5 * (a + b);
            if mid <= a || mid >= b || b - a <= 4.0 * f64::EPSILON * a.abs().max(b.abs()) {
                for idx in ca..cb.min(count) {
                    clustered.push((idx, mid));
                }
                continue;
            }
            let cm = self.count_below(mid);
            stack.push((mid, b, cm, cb));
            stack.push((a, mid, ca, cm));
        }

        let mut values = vec![0.0; count];
        let refined: Vec<(usize, f64)> = isolated
            .par_iter()
            .map(|&(idx, a, b)| (idx, self.refine(idx, a, b, 0.5 * (a + b), true)))
            .collect();
        for (idx, v) in refined.into_iter().chain(clustered) {
            values[idx] = v;
        }
        Ok(values)
    }
}
