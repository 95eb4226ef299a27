//! Solves a racing scenario (the bundled overtaking one by default) in every
//! mode and prints lateral excursions, final states and costs.

use std::time::Instant;

use ilqgame::dynamics::{IDX_N, IDX_S, IDX_V, STATE_DIM};
use ilqgame::racing::lateral_excursion;
use ilqgame::{RacingScenario, SolverMode};

fn main() -> Result<(), Box<dyn std::error::Error>> {
    let scenario = match std::env::args().nth(1) {
        Some(path) => RacingScenario::load(path)?,
        None => RacingScenario::fig1(),
    };
    for mode in [
        SolverMode::IlqrBaseline,
        SolverMode::Feedback,
        SolverMode::OpenLoop,
    ] {
        let start = Instant::now();
        let (_, report) = scenario.solve_with(&scenario.solver.with_mode(mode))?;
        let traj = &report.trajectory;
        println!(
            "{mode}: converged={} iterations={} [{:.2?}]",
            report.converged,
            report.iterations,
            start.elapsed()
        );
        let last = traj.states.last().expect("K + 1 states");
        for i in 0..scenario.players.len() {
            let x = &last.as_slice()[i * STATE_DIM..];
            println!(
                "  p{}: excursion {:.3} m, final s {:.1} n {:.2} V {:.2}, cost {:.4}",
                i + 1,
                lateral_excursion(traj, i),
                x[IDX_S],
                x[IDX_N],
                x[IDX_V],
                traj.costs[i]
            );
        }
    }
    Ok(())
}
