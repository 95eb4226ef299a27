use std::path::Path;

use anyhow::{bail, Context, Result};
use ilqgame::export::{self, ColumnLayout, RunMetadata};
use ilqgame::game::{random_state, LinearQuadraticGame};
use ilqgame::solver::{self, certify, zero_inputs};
use ilqgame::{DynamicGame, RacingScenario, ScenarioSweep, SolveReport, SolverSettings};
use rayon::prelude::*;
use serde::Serialize;

use crate::SolverFlags;

#[derive(Debug, Clone, Copy, PartialEq, Eq, PartialOrd, Ord)]
pub enum Status {
    Converged,
    NotConverged,
}

impl Status {
    fn of(report: &SolveReport) -> Self {
        if report.converged {
            Status::Converged
        } else {
            Status::NotConverged
        }
    }
}

pub struct ToyShape {
    pub seed: u64,
    pub players: usize,
    pub state_dim: usize,
    pub input_dim: usize,
    pub horizon: usize,
}

fn summary(label: &str, report: &SolveReport, out: &Path) {
    let costs: Vec<String> = report
        .trajectory
        .costs
        .iter()
        .map(|c| format!("{c:.6}"))
        .collect();
    println!(
        "{label}mode={} converged={} iterations={} costs=[{}] -> {}",
        report.trajectory.mode,
        report.converged,
        report.iterations,
        costs.join(", "),
        out.display()
    );
}

fn solve_and_export(
    sc: &RacingScenario,
    flags: &SolverFlags,
    out: &Path,
    label: &str,
) -> Result<Status> {
    let settings = flags.apply(sc.solver);
    let (game, report) = sc.solve_with(&settings).context("solve failed")?;
    let certificate = if flags.certify {
        Some(certify(&game, &report.trajectory, &settings).context("certification failed")?)
    } else {
        None
    };
    let mut meta = RunMetadata::new(&report, &settings, certificate.as_ref());
    meta.speed_floor_hits = game.speed_floor_hits();
    export::export(
        out,
        &report,
        sc.dt,
        &ColumnLayout::racing(sc.players.len()),
        &meta,
    )
    .with_context(|| format!("cannot write results to {}", out.display()))?;
    summary(label, &report, out);
    Ok(Status::of(&report))
}

pub fn scenario(path: &Path, flags: &SolverFlags, out: &Path) -> Result<Status> {
    let sc = RacingScenario::load(path)
        .with_context(|| format!("invalid scenario {}", path.display()))?;
    solve_and_export(&sc, flags, out, "")
}

#[derive(Serialize)]
struct SweepIndex<'a> {
    pointer: &'a str,
    values: &'a [f64],
    runs: Vec<String>,
}

pub fn sweep(path: &Path, flags: &SolverFlags, out: &Path) -> Result<Status> {
    let (spec, base) =
        ScenarioSweep::load(path).with_context(|| format!("invalid sweep {}", path.display()))?;
    let scenarios = spec
        .expand(&base)
        .with_context(|| format!("invalid sweep {}", path.display()))?;
    let names: Vec<String> = (0..scenarios.len()).map(|i| format!("run_{i}")).collect();
    let results: Vec<Result<Status>> = scenarios
        .par_iter()
        .zip(&names)
        .zip(&spec.values)
        .map(|((sc, name), value)| {
            let label = format!("{name} ({}={value}): ", spec.pointer);
            solve_and_export(sc, flags, &out.join(name), &label)
                .with_context(|| format!("{name} ({}={value})", spec.pointer))
        })
        .collect();
    let index = SweepIndex {
        pointer: &spec.pointer,
        values: &spec.values,
        runs: names,
    };
    std::fs::create_dir_all(out).with_context(|| format!("cannot create {}", out.display()))?;
    std::fs::write(
        out.join("sweep.json"),
        serde_json::to_string_pretty(&index)? + "\n",
    )
    .with_context(|| format!("cannot write results to {}", out.display()))?;
    let mut worst = Status::Converged;
    let mut errors = Vec::new();
    for r in results {
        match r {
            Ok(s) => worst = worst.max(s),
            Err(e) => errors.push(format!("{e:#}")),
        }
    }
    if !errors.is_empty() {
        bail!(
            "{} of {} runs failed:\n  {}",
            errors.len(),
            spec.values.len(),
            errors.join("\n  ")
        );
    }
    Ok(worst)
}

pub fn lq_toy(shape: ToyShape, flags: &SolverFlags, out: &Path) -> Result<Status> {
    if shape.players == 0
        || shape.state_dim < shape.players
        || shape.input_dim == 0
        || shape.horizon == 0
    {
        bail!("lq-toy needs players >= 1, state-dim >= players, input-dim >= 1 and horizon >= 1");
    }
    let game = LinearQuadraticGame::random(
        shape.seed,
        shape.players,
        shape.state_dim,
        shape.input_dim,
        shape.horizon,
    );
    let x0 = random_state(shape.seed, shape.state_dim);
    let base = SolverSettings {
        eta: 1.0,
        ..SolverSettings::default()
    };
    let settings = flags.apply(base);
    let report = solver::solve(
        &game,
        &x0,
        zero_inputs(&game.input_dims(), shape.horizon),
        &settings,
    )
    .context("solve failed")?;
    let certificate = if flags.certify {
        Some(certify(&game, &report.trajectory, &settings).context("certification failed")?)
    } else {
        None
    };
    let meta = RunMetadata::new(&report, &settings, certificate.as_ref());
    let layout = ColumnLayout::partitioned(shape.state_dim, &game.input_dims());
    export::export(out, &report, 1.0, &layout, &meta)
        .with_context(|| format!("cannot write results to {}", out.display()))?;
    summary("", &report, out);
    Ok(Status::of(&report))
}
