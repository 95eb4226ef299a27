//! Racing scenario files (JSON): loading, validation and writing.

use std::path::Path;

use nalgebra::DVector;
use serde::{Deserialize, Serialize};

use crate::costs::CostParams;
use crate::dynamics::{GGDiamond, JointState, PlayerInput, PlayerState, V_MIN};
use crate::error::{Error, Result};
use crate::racing::{self, RacingGame, RacingPlayer};
use crate::solver::{SolveReport, SolverSettings};
use crate::track::{Track, TrackSegment};

/// The bundled two-player overtaking scenario.
pub const FIG1_JSON: &str = include_str!("../scenarios/fig1.json");

#[derive(Debug, Clone, PartialEq)]
pub struct ScenarioPlayer {
    pub x0: PlayerState,
    pub costs: CostParams,
    pub gg: GGDiamond,
    /// Warm start; zero jerks when absent.
    pub initial_inputs: Option<Vec<PlayerInput>>,
}

#[derive(Debug, Clone, PartialEq)]
pub struct RacingScenario {
    pub track: Track,
    pub players: Vec<ScenarioPlayer>,
    pub horizon: usize,
    pub dt: f64,
    pub solver: SolverSettings,
}

#[derive(Serialize, Deserialize)]
#[serde(deny_unknown_fields)]
struct ScenarioFile {
    track: TrackFile,
    players: Vec<PlayerFile>,
    horizon: HorizonFile,
    #[serde(default)]
    solver: SolverSettings,
}

#[derive(Serialize, Deserialize)]
#[serde(deny_unknown_fields)]
struct TrackFile {
    segments: Vec<TrackSegment>,
}

#[derive(Serialize, Deserialize)]
#[serde(deny_unknown_fields)]
struct HorizonFile {
    #[serde(rename = "K")]
    stages: usize,
    dt: f64,
}

#[derive(Serialize, Deserialize)]
#[serde(deny_unknown_fields)]
struct PlayerFile {
    x0: PlayerState,
    costs: CostParams,
    gg: GgFile,
    #[serde(default, skip_serializing_if = "Option::is_none")]
    initial_inputs: Option<Vec<[f64; 2]>>,
}

/// Either explicit tables or the linear default shape.
#[derive(Serialize, Deserialize)]
#[serde(untagged)]
enum GgFile {
    Tables(GGDiamond),
    Linear { v_max: f64, a0: f64, rho: f64 },
}

impl RacingScenario {
    pub fn from_json(text: &str) -> Result<Self> {
        let file: ScenarioFile = serde_json::from_str(text)?;
        Self::from_file(file)
    }

    pub fn load(path: impl AsRef<Path>) -> Result<Self> {
        Self::from_json(&std::fs::read_to_string(path)?)
    }

    /// The bundled two-player scenario.
    pub fn fig1() -> Self {
        Self::from_json(FIG1_JSON).expect("bundled scenario is valid")
    }

    fn from_file(file: ScenarioFile) -> Result<Self> {
        let mut errors = Vec::new();
        let track = match Track::new(file.track.segments) {
            Ok(t) => Some(t),
            Err(Error::Validation(e)) => {
                errors.extend(e);
                None
            }
            Err(e) => return Err(e),
        };
        let horizon = file.horizon.stages;
        let dt = file.horizon.dt;
        if horizon == 0 {
            errors.push("horizon.K: must be >= 1".to_owned());
        }
        if !(dt > 0.0 && dt.is_finite()) {
            errors.push(format!("horizon.dt: must be > 0, got {dt}"));
        }
        errors.extend(file.solver.check("solver"));
        if file.players.is_empty() {
            errors.push("players: at least one player is required".to_owned());
        }

        let mut players = Vec::with_capacity(file.players.len());
        for (i, p) in file.players.into_iter().enumerate() {
            let gg = match p.gg {
                GgFile::Tables(t) => t,
                GgFile::Linear { v_max, a0, rho } => {
                    if v_max.partial_cmp(&0.0) != Some(std::cmp::Ordering::Greater) {
                        errors.push(format!("players[{i}].gg.v_max: must be > 0, got {v_max}"));
                    }
                    GGDiamond::linear(v_max.max(f64::MIN_POSITIVE), a0, rho)
                }
            };
            errors.extend(gg.check(&format!("players[{i}].gg")));
            errors.extend(p.costs.check(&format!("players[{i}].costs")));
            if let Some(track) = &track {
                errors.extend(check_initial_state(&p.x0, track, i));
            }
            if let Some(inputs) = &p.initial_inputs {
                if inputs.len() != horizon {
                    errors.push(format!(
                        "players[{i}].initial_inputs: expected {horizon} entries, got {}",
                        inputs.len()
                    ));
                }
                if inputs.iter().flatten().any(|v| !v.is_finite()) {
                    errors.push(format!(
                        "players[{i}].initial_inputs: values must be finite"
                    ));
                }
            }
            players.push(ScenarioPlayer {
                x0: p.x0,
                costs: p.costs,
                gg,
                initial_inputs: p.initial_inputs.map(|v| {
                    v.into_iter()
                        .map(|[jx, jy]| PlayerInput::new(jx, jy))
                        .collect()
                }),
            });
        }

        match track {
            Some(track) if errors.is_empty() => Ok(Self {
                track,
                players,
                horizon,
                dt,
                solver: file.solver,
            }),
            _ => Err(Error::Validation(errors)),
        }
    }

    fn to_file(&self) -> ScenarioFile {
        ScenarioFile {
            track: TrackFile {
                segments: self.track.segments().to_vec(),
            },
            players: self
                .players
                .iter()
                .map(|p| PlayerFile {
                    x0: p.x0,
                    costs: p.costs,
                    gg: GgFile::Tables(p.gg.clone()),
                    initial_inputs: p
                        .initial_inputs
                        .as_ref()
                        .map(|v| v.iter().map(|u| [u.jx, u.jy]).collect()),
                })
                .collect(),
            horizon: HorizonFile {
                stages: self.horizon,
                dt: self.dt,
            },
            solver: self.solver,
        }
    }

    pub fn to_json(&self) -> String {
        serde_json::to_string_pretty(&self.to_file()).expect("scenario serializes")
    }

    pub fn write(&self, path: impl AsRef<Path>) -> Result<()> {
        std::fs::write(path, self.to_json())?;
        Ok(())
    }

    pub fn game(&self) -> RacingGame {
        RacingGame::new(
            self.track.clone(),
            self.players
                .iter()
                .map(|p| RacingPlayer {
                    params: p.costs,
                    gg: p.gg.clone(),
                })
                .collect(),
            self.dt,
        )
    }

    pub fn initial_state(&self) -> JointState {
        JointState::new(self.players.iter().map(|p| p.x0).collect())
    }

    pub fn initial_inputs(&self) -> Vec<Vec<DVector<f64>>> {
        self.players
            .iter()
            .map(|p| match &p.initial_inputs {
                Some(v) => v.iter().map(|u| u.to_dvector()).collect(),
                None => vec![DVector::zeros(2); self.horizon],
            })
            .collect()
    }

    /// Solves with the scenario's own settings; player 0 is the ego in ilqr mode.
    pub fn solve(&self) -> Result<(RacingGame, SolveReport)> {
        self.solve_with(&self.solver)
    }

    pub fn solve_with(&self, settings: &SolverSettings) -> Result<(RacingGame, SolveReport)> {
        self.solve_from(settings, self.initial_inputs())
    }

    pub fn solve_from(
        &self,
        settings: &SolverSettings,
        initial_inputs: Vec<Vec<DVector<f64>>>,
    ) -> Result<(RacingGame, SolveReport)> {
        let game = self.game();
        let report = racing::solve_racing(
            &game,
            &self.initial_state().to_dvector(),
            initial_inputs,
            settings,
            0,
        )?;
        Ok((game, report))
    }
}

/// A one-parameter family of scenarios: `base` (a scenario file, relative
/// to the sweep file) with the number at JSON `pointer` set to each value.
#[derive(Debug, Clone, PartialEq, Serialize, Deserialize)]
#[serde(deny_unknown_fields)]
pub struct ScenarioSweep {
    pub base: String,
    pub pointer: String,
    pub values: Vec<f64>,
}

/// The bundled sweep over the opponent's collision weight.
pub const FIG2_SWEEP_JSON: &str = include_str!("../scenarios/fig2_sweep.json");

impl ScenarioSweep {
    pub fn from_json(text: &str) -> Result<Self> {
        Ok(serde_json::from_str(text)?)
    }

    /// The bundled sweep, resolved against the bundled base scenario.
    pub fn fig2() -> Result<Vec<RacingScenario>> {
        Self::from_json(FIG2_SWEEP_JSON)?.expand(FIG1_JSON)
    }

    /// Loads the sweep and its base scenario text.
    pub fn load(path: impl AsRef<Path>) -> Result<(Self, String)> {
        let path = path.as_ref();
        let sweep = Self::from_json(&std::fs::read_to_string(path)?)?;
        let base = path.parent().unwrap_or(Path::new(".")).join(&sweep.base);
        let text = std::fs::read_to_string(base)?;
        Ok((sweep, text))
    }

    /// One validated scenario per value.
    pub fn expand(&self, base_json: &str) -> Result<Vec<RacingScenario>> {
        if self.values.is_empty() {
            return Err(Error::Validation(vec!["values: must not be empty".into()]));
        }
        let base: serde_json::Value = serde_json::from_str(base_json)?;
        self.values
            .iter()
            .map(|&v| {
                let mut doc = base.clone();
                match doc.pointer_mut(&self.pointer) {
                    Some(slot) if slot.is_number() => *slot = serde_json::json!(v),
                    _ => {
                        return Err(Error::Validation(vec![format!(
                            "pointer: {} does not name a number in the base scenario",
                            self.pointer
                        )]))
                    }
                }
                RacingScenario::from_json(&doc.to_string())
            })
            .collect()
    }
}

fn check_initial_state(x0: &PlayerState, track: &Track, i: usize) -> Vec<String> {
    let mut errors = Vec::new();
    let fields = [x0.s, x0.v, x0.n, x0.chi, x0.ax, x0.ay];
    if fields.iter().any(|v| !v.is_finite()) {
        errors.push(format!("players[{i}].x0: all fields must be finite"));
        return errors;
    }
    if x0.v < V_MIN {
        errors.push(format!(
            "players[{i}].x0.V: must be >= {V_MIN}, got {}",
            x0.v
        ));
    }
    match (track.curvature_at(x0.s), track.width_at(x0.s)) {
        (Ok(kappa), Ok((wl, wr))) => {
            if x0.n > wl || x0.n < -wr {
                errors.push(format!(
                    "players[{i}].x0.n: {} outside corridor [-{wr}, {wl}]",
                    x0.n
                ));
            }
            if (x0.n * kappa).abs() >= 1.0 {
                errors.push(format!(
                    "players[{i}].x0: |n * kappa| = {} must be < 1 (curvilinear singularity)",
                    (x0.n * kappa).abs()
                ));
            }
        }
        _ => errors.push(format!(
            "players[{i}].x0.s: {} outside track [0, {}]",
            x0.s,
            track.total_length()
        )),
    }
    errors
}

#[cfg(test)]
mod tests {
    use super::*;

    #[test]
    fn bundled_scenario_matches_described_setup() {
        let sc = RacingScenario::fig1();
        assert_eq!(sc.players.len(), 2);
        assert_eq!(sc.players[0].x0.v, 20.0);
        assert_eq!(sc.players[0].gg.v_max(), 20.0);
        assert_eq!(sc.players[1].x0.v, 23.0);
        assert_eq!(sc.players[1].gg.v_max(), 25.0);
        assert_eq!(sc.players[1].x0.n, 2.0);
    }

    #[test]
    fn write_then_load_round_trips() {
        let sc = RacingScenario::fig1();
        let again = RacingScenario::from_json(&sc.to_json()).unwrap();
        assert_eq!(again, sc);
    }

    fn edit(f: impl FnOnce(&mut serde_json::Value)) -> Result<RacingScenario> {
        let mut v: serde_json::Value = serde_json::from_str(FIG1_JSON).unwrap();
        f(&mut v);
        RacingScenario::from_json(&v.to_string())
    }

    #[test]
    fn bundled_sweep_sets_opponent_collision_weight() {
        let runs = ScenarioSweep::fig2().unwrap();
        let weights: Vec<f64> = runs.iter().map(|s| s.players[1].costs.c_c).collect();
        assert_eq!(weights, vec![10.0, 20.0, 40.0]);
        assert!(runs.iter().all(|s| s.players[0].costs.c_c == 10.0));
    }

    #[test]
    fn sweep_pointer_must_name_a_number() {
        let sweep = ScenarioSweep {
            base: String::new(),
            pointer: "/players/1/gg".into(),
            values: vec![1.0],
        };
        assert!(matches!(sweep.expand(FIG1_JSON), Err(Error::Validation(_))));
    }

    #[test]
    fn zero_players_rejected() {
        let err = edit(|v| v["players"] = serde_json::json!([])).unwrap_err();
        assert!(
            matches!(err, Error::Validation(ref e) if e.iter().any(|l| l.starts_with("players:")))
        );
    }

    #[test]
    fn singular_start_rejected() {
        let err = edit(|v| {
            v["track"]["segments"] = serde_json::json!([
                {"length_m": 400.0, "curvature_1pm": 0.2, "width_left_m": 6.0, "width_right_m": 6.0}
            ]);
        })
        .unwrap_err();
        match err {
            Error::Validation(lines) => {
                assert!(
                    lines.iter().any(|l| l.contains("track.segments[0]")),
                    "{lines:?}"
                );
            }
            other => panic!("{other}"),
        }

        let err = edit(|v| {
            v["track"]["segments"] = serde_json::json!([
                {"length_m": 400.0, "curvature_1pm": 0.09, "width_left_m": 11.0, "width_right_m": 11.0}
            ]);
            v["players"][1]["x0"]["n"] = serde_json::json!(12.0);
        })
        .unwrap_err();
        match err {
            Error::Validation(lines) => {
                assert!(
                    lines.iter().any(|l| l.contains("curvilinear singularity")),
                    "{lines:?}"
                );
            }
            other => panic!("{other}"),
        }
    }

    #[test]
    fn every_failure_is_listed() {
        let err = edit(|v| {
            v["players"][0]["x0"]["n"] = serde_json::json!(50.0);
            v["players"][1]["costs"]["c_w"] = serde_json::json!(-1.0);
            v["horizon"]["dt"] = serde_json::json!(0.0);
            v["solver"]["eta"] = serde_json::json!(1.5);
        })
        .unwrap_err();
        match err {
            Error::Validation(lines) => assert_eq!(lines.len(), 4, "{lines:?}"),
            other => panic!("{other}"),
        }
    }

    #[test]
    fn parse_errors_carry_line_numbers() {
        let err = RacingScenario::from_json("{\n  \"track\": 3\n}").unwrap_err();
        assert!(err.to_string().contains("line 2"), "{err}");
    }

    #[test]
    fn linear_gg_shorthand_accepted() {
        let sc = edit(|v| {
            v["players"][0]["gg"] = serde_json::json!({"v_max": 30.0, "a0": 6.0, "rho": 10.0});
        })
        .unwrap();
        assert_eq!(sc.players[0].gg, GGDiamond::linear(30.0, 6.0, 10.0));
    }
}
