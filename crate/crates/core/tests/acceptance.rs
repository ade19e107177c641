//! Acceptance criteria 1-9. Runs as a plain binary so that every criterion
//! prints its PASS/FAIL line; exits non-zero if any criterion fails.

use std::f64::consts::PI;
use std::panic::{self, AssertUnwindSafe};
use std::process::ExitCode;
use std::time::Instant;

use nalgebra::DMatrix;
use qcstat::ensemble;
use qcstat::game::{self, AscentOptions, GameState};
use qcstat::potential::Potential;
use qcstat::spectrum::{self, FdGrid, TruncationPolicy};
use qcstat::verify::{self, Status, VerificationReport};
use rand::{Rng, SeedableRng};
use rand_chacha::ChaCha8Rng;

type Outcome = Result<String, String>;
type Criterion = (&'static str, fn() -> Outcome);

fn ensure(ok: bool, msg: impl Into<String>) -> Result<(), String> {
    if ok {
        Ok(())
    } else {
        Err(msg.into())
    }
}

fn holds(r: &VerificationReport) -> Result<(), String> {
    ensure(r.status == Status::Holds, r.summary())
}

fn rel(a: f64, b: f64) -> f64 {
    (a - b).abs() / b.abs().max(f64::MIN_POSITIVE)
}

fn box1() -> Potential {
    Potential::box_well(&[1.0]).unwrap()
}

fn homogeneous(nu: f64) -> Potential {
    Potential::homogeneous(1, nu).unwrap()
}

/// Random distinct positive levels, sorted.
fn random_levels(rng: &mut ChaCha8Rng, k: usize) -> Vec<f64> {
    loop {
        let mut e: Vec<f64> = (0..k).map(|_| rng.gen_range(0.05..4.0)).collect();
        e.sort_by(f64::total_cmp);
        if e.windows(2).all(|w| w[1] - w[0] > 1e-3) {
            return e;
        }
    }
}

fn criterion_1() -> Outcome {
    let start = Instant::now();
    let betas = verify::default_beta_grid();
    let hs = verify::default_h_grid();
    let mut worst = Vec::new();
    for (name, p) in [
        ("box", box1()),
        ("nu=1", homogeneous(1.0)),
        ("nu=2", homogeneous(2.0)),
        ("nu=4", homogeneous(4.0)),
    ] {
        let r = verify::check_c11(&p, &betas, &hs, verify::sweep_policy());
        holds(&r)?;
        ensure(
            r.grid.beta.len() * r.grid.h.len() == 28 * 12,
            format!("{name}: grid has {}x{} points", r.grid.beta.len(), r.grid.h.len()),
        )?;
        worst.push(format!("{name} {:.3e}", r.worst_margin));
    }
    let secs = start.elapsed().as_secs_f64();
    ensure(secs < 120.0, format!("took {secs:.1} s"))?;
    Ok(format!("worst margins {}; {secs:.1} s", worst.join(", ")))
}

fn criterion_2() -> Outcome {
    let start = Instant::now();
    let betas = verify::halving(1.0, 9);
    ensure(betas.last() == Some(&(1.0 / 256.0)), "grid does not end at 1/256")?;
    let [z, e] = verify::check_c13(&box1(), 1.0, &betas, verify::sweep_policy());
    let secs = start.elapsed().as_secs_f64();
    let detail = format!("{} | {}", z.summary(), e.summary());
    holds(&z).map_err(|_| detail.clone())?;
    holds(&e).map_err(|_| detail.clone())?;
    ensure(secs < 60.0, format!("took {secs:.1} s"))?;
    Ok(detail)
}

fn criterion_3() -> Outcome {
    let mut out = Vec::new();
    for (name, p) in [("box", box1()), ("nu=2", homogeneous(2.0))] {
        let r = verify::check_t31(&p, 1.0, 1.0, 1e-3, verify::sweep_policy()).map_err(|e| e.to_string())?;
        holds(&r)?;
        let policy = TruncationPolicy {
            beta_min: 1e-3,
            ..verify::sweep_policy()
        };
        let spec = spectrum::solve(&p, 1.0, &policy).map_err(|e| e.to_string())?;
        let s = verify::t31_sides(&p, &spec, 1.0, 1e-3).map_err(|e| e.to_string())?;
        ensure(
            (s.lhs - s.rhs).abs() < 1e-3 * s.rhs.abs().max(1.0),
            format!("{name}: LHS {} RHS {}", s.lhs, s.rhs),
        )?;
        ensure(s.lhs >= -1e-3, format!("{name}: LHS {} below -1e-3", s.lhs))?;
        out.push(format!("{name} |LHS-RHS| = {:.1e}", (s.lhs - s.rhs).abs()));
    }
    Ok(out.join(", "))
}

fn criterion_4() -> Outcome {
    let mut rng = ChaCha8Rng::seed_from_u64(4);
    let mut worst: f64 = 0.0;
    for _ in 0..100 {
        let k = rng.gen_range(2..=8);
        let levels = random_levels(&mut rng, k);
        let lambda = rng.gen_range(0.1..3.0);
        let d = 1e-3 * lambda;
        let f = |l: f64| ensemble::psi(&levels, l).unwrap().value;
        let fd = (8.0 * (f(lambda + d) - f(lambda - d)) - (f(lambda + 2.0 * d) - f(lambda - 2.0 * d))) / (12.0 * d);
        let closed = ensemble::psi(&levels, lambda).map_err(|e| e.to_string())?.derivative;
        let err = rel(fd, closed);
        worst = worst.max(err);
        ensure(err < 1e-7, format!("Psi' mismatch {err:e} at {levels:?}, lambda {lambda}"))?;
    }
    let betas = verify::default_beta_grid();
    let hs = verify::default_h_grid();
    for p in [box1(), homogeneous(2.0), homogeneous(4.0)] {
        let [b, h] = verify::check_t41(&p, &betas, &hs, verify::sweep_policy()).map_err(|e| e.to_string())?;
        holds(&b)?;
        holds(&h)?;
    }
    Ok(format!("Psi' worst relative error {worst:.1e}; S_q decreasing in beta and h"))
}

fn criterion_5() -> Outcome {
    let hs = verify::log_grid(0.5, 4.0, 9);
    let reports = verify::check_c41_and_props(&homogeneous(2.0), 1.0, &hs, verify::sweep_policy())
        .map_err(|e| e.to_string())?;
    for r in &reports {
        holds(r)?;
    }
    Ok(format!("{} h points; {}", hs.len(), reports[2].notes.join("; ")))
}

fn criterion_6() -> Outcome {
    let hs = verify::halving(1.0, 7);
    ensure(hs.last() == Some(&(1.0 / 64.0)), "grid does not end at 1/64")?;
    let r = verify::check_wehrl(&box1(), 1.0, &hs, verify::sweep_policy());
    holds(&r)?;
    Ok(r.notes[0].clone())
}

fn criterion_7() -> Outcome {
    let mut rng = ChaCha8Rng::seed_from_u64(7);
    let mut notes = Vec::new();

    // Gradient against a fourth-order central stencil.
    let mut worst: f64 = 0.0;
    for _ in 0..100 {
        let k = rng.gen_range(1..=8);
        let levels: Vec<f64> = (0..k).map(|_| rng.gen_range(0.05..4.0)).collect();
        let lambda = rng.gen_range(-2.0..=0.0);
        let w: Vec<f64> = (0..k).map(|_| rng.gen_range(0.1..10.0)).collect();
        let state = GameState::new(levels.clone(), lambda, w.clone()).map_err(|e| e.to_string())?;
        let g = game::gradient(&state);
        let scale = g.iter().fold(0.0f64, |m, x| m.max(x.abs()));
        let f = |w: &[f64]| game::compromise(&GameState::new(levels.clone(), lambda, w.to_vec()).unwrap()).f;
        for i in 0..k {
            let d = 1e-3 * w[i];
            let at = |s: f64| {
                let mut v = w.clone();
                v[i] += s * d;
                f(&v)
            };
            let fd = (8.0 * (at(1.0) - at(-1.0)) - (at(2.0) - at(-2.0))) / (12.0 * d);
            let err = (fd - g[i]).abs() / scale.max(1e-300);
            worst = worst.max(err);
            ensure(err < 1e-7, format!("gradient component {i} off by {err:e}"))?;
        }
    }
    notes.push(format!("gradient {worst:.1e}"));

    // Stationary point: gradient, F, Hessian, H·p, minors.
    let (mut g_max, mut f_max, mut hess_max, mut hp_max, mut minor_max) = (0.0f64, 0.0f64, 0.0f64, 0.0f64, 0.0f64);
    for _ in 0..100 {
        let k = rng.gen_range(2..=8);
        let levels = random_levels(&mut rng, k);
        let lambda = -rng.gen_range(0.1..2.0);
        let state = GameState::stationary(levels.clone(), lambda).map_err(|e| e.to_string())?;
        let g = game::gradient(&state);
        let gm = g.iter().fold(0.0f64, |m, x| m.max(x.abs()));
        g_max = g_max.max(gm);
        ensure(gm < 1e-12, format!("stationary gradient {gm:e}"))?;

        let m = levels.iter().map(|e| lambda * e).fold(f64::NEG_INFINITY, f64::max);
        let lse = m + levels.iter().map(|e| (lambda * e - m).exp()).sum::<f64>().ln();
        let fe = (game::compromise(&state).f - lse).abs();
        f_max = f_max.max(fe);
        ensure(fe < 1e-12, format!("F at stationary point off by {fe:e}"))?;

        let h = game::hessian(&state).map_err(|e| e.to_string())?;
        let w = state.weights().to_vec();
        let amax = h.amax().max(1.0 / (state.z() * state.z()));
        for i in 0..k {
            let d = 1e-4 * w[i];
            let at = |s: f64| {
                let mut v = w.clone();
                v[i] += s * d;
                game::gradient(&GameState::new(levels.clone(), lambda, v).unwrap())
            };
            let (p1, m1, p2, m2) = (at(1.0), at(-1.0), at(2.0), at(-2.0));
            for j in 0..k {
                let fd = (8.0 * (p1[j] - m1[j]) - (p2[j] - m2[j])) / (12.0 * d);
                let err = (fd - h[(j, i)]).abs() / amax;
                hess_max = hess_max.max(err);
                ensure(err < 1e-5, format!("Hessian ({j},{i}) off by {err:e}"))?;
            }
        }
        let hp = &h * nalgebra::DVector::from_vec(w.clone());
        let hpn = hp.amax();
        hp_max = hp_max.max(hpn);
        ensure(hpn < 1e-10, format!("|H p| = {hpn:e}"))?;

        for mc in game::principal_minor_signs(&levels, lambda, k - 1).map_err(|e| e.to_string())? {
            let want = if mc.k % 2 == 0 { 1 } else { -1 };
            ensure(mc.sign == want, format!("minor H_{} has sign {}", mc.k, mc.sign))?;
            let err = rel(mc.closed_form, mc.direct);
            minor_max = minor_max.max(err);
            ensure(err < 1e-9, format!("minor H_{} closed form vs direct {err:e}", mc.k))?;
        }
    }
    notes.push(format!(
        "stationary gradient {g_max:.1e}, F {f_max:.1e}, Hessian {hess_max:.1e}, Hp {hp_max:.1e}, minors {minor_max:.1e}"
    ));

    // Ascent from random starts reaches the Gibbs distribution.
    let levels = vec![0.2, 0.7, 1.3, 2.2, 3.0];
    let lambda = -0.8;
    let gibbs = GameState::stationary(levels.clone(), lambda).unwrap().probabilities();
    let mut tv_max: f64 = 0.0;
    for _ in 0..20 {
        let start: Vec<f64> = levels.iter().map(|_| rng.gen_range(0.1..10.0)).collect();
        let a = game::ascend(&levels, lambda, &start, AscentOptions::default()).map_err(|e| e.to_string())?;
        let tv = 0.5 * a.state.probabilities().iter().zip(&gibbs).map(|(p, q)| (p - q).abs()).sum::<f64>();
        tv_max = tv_max.max(tv);
        ensure(tv < 1e-8, format!("ascent ended at TV {tv:e}"))?;
    }
    notes.push(format!("ascent TV {tv_max:.1e}"));
    Ok(notes.join("; "))
}

fn criterion_8() -> Outcome {
    let exact = PI * PI / 2.0;
    let p = box1();
    let e = |n: usize| spectrum::fd_levels(&p, 1.0, (0.0, 1.0), n, 1).map(|v| v[0]).map_err(|e| e.to_string());
    let (e1, e2, e4) = (e(1000)?, e(2000)?, e(4000)?);
    ensure((e2 - exact).abs() < 1e-5, format!("E_1 = {e2}, error {:e}", (e2 - exact).abs()))?;
    let ratios = [(e1 - exact) / (e2 - exact), (e2 - exact) / (e4 - exact)];
    for r in ratios {
        ensure((r - 4.0).abs() < 0.5, format!("error ratio {r}"))?;
    }

    let osc = homogeneous(2.0);
    let e1 = |h: f64| {
        let grid = FdGrid::symmetric(12.0 * h.sqrt(), 4000);
        spectrum::solve_fd_1d(&osc, h, grid, 1, 1e-6)
            .map(|s| s.levels()[0])
            .map_err(|e| e.to_string())
    };
    let base = e1(1.0)?;
    let mut scal = Vec::new();
    for h in [0.5, 2.0] {
        let r = e1(h)? / base;
        ensure((r - h).abs() < 1e-4, format!("E_1({h})/E_1(1) = {r}"))?;
        scal.push(format!("{r:.8}"));
    }
    Ok(format!(
        "box E_1 error {:.1e}, ratios {:.3}/{:.3}; oscillator ratios {}",
        (e2 - exact).abs(),
        ratios[0],
        ratios[1],
        scal.join(", ")
    ))
}

fn criterion_9() -> Outcome {
    let mut rng = ChaCha8Rng::seed_from_u64(9);
    let mut worst: f64 = 0.0;
    for i in 0..50 {
        let k = rng.gen_range(1..=6);
        let r: Vec<f64> = (0..k).map(|_| rng.gen_range(0.5..3.0)).collect();
        let a = rng.gen_range(-0.4..0.4);
        // Every other instance has a different value below the diagonal.
        let b = if i % 2 == 0 { a } else { rng.gen_range(-0.4..0.4) };
        let dense = DMatrix::from_fn(k, k, |i, j| match i.cmp(&j) {
            std::cmp::Ordering::Equal => r[i],
            std::cmp::Ordering::Less => a,
            std::cmp::Ordering::Greater => b,
        })
        .determinant();
        let formula = if a == b {
            game::structured_det(&r, a)
        } else {
            game::structured_det_general(&r, a, b)
        }
        .map_err(|e| e.to_string())?;
        let err = rel(formula, dense);
        worst = worst.max(err);
        ensure(err < 1e-10, format!("k={k}: formula {formula} vs dense {dense}"))?;
    }
    Ok(format!("worst relative error {worst:.1e}"))
}

fn main() -> ExitCode {
    let criteria: [Criterion; 9] = [
        ("classical bound on the quantum sum", criterion_1),
        ("semiclassical ratios at small beta", criterion_2),
        ("integrated energy gap identity", criterion_3),
        ("entropy decreasing in beta and h", criterion_4),
        ("homogeneous derivative identity and signs", criterion_5),
        ("semiclassical gaps as h shrinks", criterion_6),
        ("energy-entropy game", criterion_7),
        ("spectrum oracles", criterion_8),
        ("structured determinants", criterion_9),
    ];
    panic::set_hook(Box::new(|_| {}));
    let mut failed = 0;
    for (i, (name, run)) in criteria.iter().enumerate() {
        let start = Instant::now();
        let outcome = panic::catch_unwind(AssertUnwindSafe(run)).unwrap_or_else(|p| {
            let msg = p
                .downcast_ref::<String>()
                .cloned()
                .or_else(|| p.downcast_ref::<&str>().map(|s| s.to_string()))
                .unwrap_or_default();
            Err(format!("panicked: {msg}"))
        });
        let secs = start.elapsed().as_secs_f64();
        match outcome {
            Ok(detail) => println!("criterion {}: PASS  {name} ({secs:.1} s)  {detail}", i + 1),
            Err(detail) => {
                failed += 1;
                println!("criterion {}: FAIL  {name} ({secs:.1} s)  {detail}", i + 1);
            }
        }
    }
    println!("{} of {} criteria passed", criteria.len() - failed, criteria.len());
    if failed == 0 {
        ExitCode::SUCCESS
    } else {
        ExitCode::FAILURE
    }
}
