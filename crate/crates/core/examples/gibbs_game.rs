//! The energy-entropy game `F = λE + S` over unnormalized weights: its
//! stationary point, the Hessian's leading minors, and an ascent to Gibbs.
//!
//!     cargo run --example gibbs_game

use qcstat::game::{self, AscentOptions, GameState};

fn main() -> qcstat::Result<()> {
    let levels = vec![0.5, 1.0, 1.8, 2.9];
    let lambda = -1.2;

    let state = GameState::stationary(levels.clone(), lambda)?;
    let c = game::compromise(&state);
    let lse: f64 = levels.iter().map(|e| (lambda * e).exp()).sum::<f64>().ln();
    println!("stationary P = {:?}", state.probabilities());
    println!("F = {} (log-sum-exp {lse})", c.f);
    println!("max |grad F| = {:.1e}", game::distance_from_stationary(&state));

    let h = game::hessian(&state)?;
    println!("Hessian:\n{h:.4e}");
    for m in game::principal_minor_signs(&levels, lambda, levels.len() - 1)? {
        println!(
            "H_{}: closed form {:+.10e}, elimination {:+.10e}",
            m.k, m.closed_form, m.direct
        );
    }

    let start = vec![3.0, 0.2, 5.0, 1.0];
    let ascent = game::ascend(&levels, lambda, &start, AscentOptions::default())?;
    println!("\nascent from {start:?}: {} iterations", ascent.iterations);
    for t in ascent.trace.iter().step_by(5) {
        println!("  {:3}  F = {:.15}  |grad| = {:.2e}", t.iter, t.f, t.grad_norm);
    }
    println!("final P = {:?}", ascent.state.probabilities());
    Ok(())
}
