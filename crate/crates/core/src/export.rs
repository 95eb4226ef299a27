//! Trajectory CSV and run-metadata JSON export.

use std::fs;
use std::io::{Read, Write};
use std::path::Path;

use nalgebra::DVector;
use serde::{Deserialize, Serialize};

use crate::dynamics::{INPUT_DIM, STATE_DIM};
use crate::error::{Error, Result};
use crate::solver::{Certificate, GameTrajectory, GapStatus, SolveReport, SolverSettings};

pub const TRAJECTORY_FILE: &str = "trajectory.csv";
pub const METADATA_FILE: &str = "metadata.json";

/// Column names and vector slots for each player.
#[derive(Debug, Clone)]
pub struct ColumnLayout {
    /// `[player] -> [(field name, state index)]`
    pub states: Vec<Vec<(String, usize)>>,
    /// `[player] -> [field name]`, in input-vector order.
    pub inputs: Vec<Vec<String>>,
}

impl ColumnLayout {
    /// `p<i>_{s,V,n,chi,ax,ay,jx,jy}` per racing player.
    pub fn racing(players: usize) -> Self {
        const STATES: [&str; STATE_DIM] = ["s", "V", "n", "chi", "ax", "ay"];
        const INPUTS: [&str; INPUT_DIM] = ["jx", "jy"];
        Self {
            states: (0..players)
                .map(|i| {
                    STATES
                        .iter()
                        .enumerate()
                        .map(|(d, name)| (name.to_string(), i * STATE_DIM + d))
                        .collect()
                })
                .collect(),
            inputs: (0..players)
                .map(|_| INPUTS.iter().map(|s| s.to_string()).collect())
                .collect(),
        }
    }

    /// Splits the state evenly between players as `p<i>_x<d>`, inputs as `p<i>_u<d>`.
    pub fn partitioned(state_dim: usize, input_dims: &[usize]) -> Self {
        let players = input_dims.len();
        let per = state_dim / players;
        Self {
            states: (0..players)
                .map(|i| {
                    let end = if i + 1 == players {
                        state_dim
                    } else {
                        (i + 1) * per
                    };
                    (i * per..end)
                        .map(|d| (format!("x{}", d - i * per), d))
                        .collect()
                })
                .collect(),
            inputs: input_dims
                .iter()
                .map(|&m| (0..m).map(|d| format!("u{d}")).collect())
                .collect(),
        }
    }

    pub fn header(&self) -> Vec<String> {
        let mut h = vec!["t".to_owned()];
        for (i, (states, inputs)) in self.states.iter().zip(&self.inputs).enumerate() {
            h.extend(states.iter().map(|(name, _)| format!("p{}_{name}", i + 1)));
            h.extend(inputs.iter().map(|name| format!("p{}_{name}", i + 1)));
        }
        h
    }
}

/// 17 significant digits.
fn fmt(v: f64) -> String {
    format!("{v:.16e}")
}

pub fn write_trajectory_csv<W: Write>(
    writer: W,
    trajectory: &GameTrajectory,
    dt: f64,
    layout: &ColumnLayout,
) -> Result<()> {
    let mut w = csv::Writer::from_writer(writer);
    w.write_record(layout.header())?;
    let horizon = trajectory.horizon();
    for (k, x) in trajectory.states.iter().enumerate() {
        let mut row = vec![fmt(k as f64 * dt)];
        for (i, (states, inputs)) in layout.states.iter().zip(&layout.inputs).enumerate() {
            row.extend(states.iter().map(|&(_, idx)| fmt(x[idx])));
            for d in 0..inputs.len() {
                row.push(if k < horizon {
                    fmt(trajectory.inputs[i][k][d])
                } else {
                    String::new()
                });
            }
        }
        w.write_record(&row)?;
    }
    w.flush()?;
    Ok(())
}

/// States and inputs parsed back from a trajectory CSV.
#[derive(Debug, Clone, PartialEq)]
pub struct TrajectoryTable {
    pub header: Vec<String>,
    pub times: Vec<f64>,
    pub states: Vec<DVector<f64>>,
    /// `[i][k]`
    pub inputs: Vec<Vec<DVector<f64>>>,
}

pub fn read_trajectory_csv<R: Read>(reader: R, layout: &ColumnLayout) -> Result<TrajectoryTable> {
    let mut r = csv::Reader::from_reader(reader);
    let header: Vec<String> = r.headers()?.iter().map(str::to_owned).collect();
    let expected = layout.header();
    if header != expected {
        return Err(Error::Invalid(format!(
            "unexpected CSV header {header:?}, expected {expected:?}"
        )));
    }
    let state_dim = layout
        .states
        .iter()
        .flatten()
        .map(|&(_, idx)| idx + 1)
        .max()
        .unwrap_or(0);
    let mut times = Vec::new();
    let mut states = Vec::new();
    let mut inputs: Vec<Vec<DVector<f64>>> = vec![Vec::new(); layout.inputs.len()];
    let parse = |s: &str| -> Result<f64> {
        s.trim()
            .parse::<f64>()
            .map_err(|e| Error::Invalid(format!("bad number {s:?}: {e}")))
    };
    for record in r.records() {
        let record = record?;
        let mut col = 0;
        times.push(parse(&record[col])?);
        col += 1;
        let mut x = DVector::zeros(state_dim);
        for (i, (st, inp)) in layout.states.iter().zip(&layout.inputs).enumerate() {
            for &(_, idx) in st {
                x[idx] = parse(&record[col])?;
                col += 1;
            }
            if !record[col].is_empty() {
                let u = (0..inp.len())
                    .map(|d| parse(&record[col + d]))
                    .collect::<Result<Vec<_>>>()?;
                inputs[i].push(DVector::from_vec(u));
            }
            col += inp.len();
        }
        states.push(x);
    }
    Ok(TrajectoryTable {
        header,
        times,
        states,
        inputs,
    })
}

#[derive(Debug, Clone, PartialEq, Serialize, Deserialize)]
pub struct RunMetadata {
    pub mode: String,
    pub eta: f64,
    pub iterations: usize,
    pub converged: bool,
    pub costs: Vec<f64>,
    #[serde(default, skip_serializing_if = "Option::is_none")]
    pub gaps: Option<Vec<f64>>,
    #[serde(default, skip_serializing_if = "Option::is_none")]
    pub gap_status: Option<Vec<String>>,
    #[serde(default, skip_serializing_if = "Option::is_none")]
    pub gap_kind: Option<String>,
    /// Max-norm state change per iteration.
    pub state_changes: Vec<f64>,
    #[serde(default)]
    pub speed_floor_hits: usize,
}

impl RunMetadata {
    pub fn new(
        report: &SolveReport,
        settings: &SolverSettings,
        certificate: Option<&Certificate>,
    ) -> Self {
        let gaps = certificate.map(|c| c.gaps.as_slice());
        Self {
            mode: report.trajectory.mode.to_string(),
            eta: settings.eta,
            iterations: report.iterations,
            converged: report.converged,
            costs: report.trajectory.costs.clone(),
            gaps: gaps.map(|g| g.iter().map(|b| b.gap).collect()),
            gap_status: gaps.map(|g| {
                g.iter()
                    .map(|b| match b.status {
                        GapStatus::Verified => "verified".to_owned(),
                        GapStatus::Unverifiable => "unverifiable".to_owned(),
                    })
                    .collect()
            }),
            gap_kind: certificate.map(|c| c.kind.as_str().to_owned()),
            state_changes: report.history.iter().map(|h| h.state_change).collect(),
            speed_floor_hits: 0,
        }
    }
}

/// Writes `trajectory.csv` and `metadata.json` into `dir`, creating it if needed.
pub fn export(
    dir: impl AsRef<Path>,
    report: &SolveReport,
    dt: f64,
    layout: &ColumnLayout,
    metadata: &RunMetadata,
) -> Result<()> {
    let dir = dir.as_ref();
    fs::create_dir_all(dir)?;
    let csv_file = fs::File::create(dir.join(TRAJECTORY_FILE))?;
    write_trajectory_csv(
        std::io::BufWriter::new(csv_file),
        &report.trajectory,
        dt,
        layout,
    )?;
    let meta = serde_json::to_string_pretty(metadata)?;
    fs::write(dir.join(METADATA_FILE), meta + "\n")?;
    Ok(())
}

#[cfg(test)]
mod tests {
    use super::*;
    use crate::solver::SolverMode;

    fn toy_trajectory() -> GameTrajectory {
        let states = (0..4)
            .map(|k| DVector::from_fn(12, |r, _| (r * 10 + k) as f64 / 7.0))
            .collect();
        let inputs = (0..2)
            .map(|i| {
                (0..3)
                    .map(|k| DVector::from_vec(vec![i as f64 + 0.1 * k as f64, -1.0 / 3.0]))
                    .collect()
            })
            .collect();
        GameTrajectory {
            states,
            inputs,
            costs: vec![1.0, 2.0],
            iteration: 3,
            mode: SolverMode::Feedback,
        }
    }

    #[test]
    fn racing_header_and_shape() {
        let layout = ColumnLayout::racing(2);
        let h = layout.header();
        assert_eq!(h.len(), 1 + 2 * 8);
        assert_eq!(h[0], "t");
        assert_eq!(h[1], "p1_s");
        assert_eq!(h[2], "p1_V");
        assert_eq!(h[16], "p2_jy");

        let mut buf = Vec::new();
        write_trajectory_csv(&mut buf, &toy_trajectory(), 0.1, &layout).unwrap();
        let text = String::from_utf8(buf).unwrap();
        let lines: Vec<&str> = text.lines().collect();
        assert_eq!(lines.len(), 1 + 4);
        assert!(
            lines[4].ends_with(",,"),
            "terminal row has empty jerks: {}",
            lines[4]
        );
    }

    #[test]
    fn csv_values_round_trip_exactly() {
        let layout = ColumnLayout::racing(2);
        let traj = toy_trajectory();
        let mut buf = Vec::new();
        write_trajectory_csv(&mut buf, &traj, 0.1, &layout).unwrap();
        let table = read_trajectory_csv(buf.as_slice(), &layout).unwrap();
        assert_eq!(table.states, traj.states);
        assert_eq!(table.inputs, traj.inputs);
    }

    #[test]
    fn partitioned_layout_names() {
        let layout = ColumnLayout::partitioned(4, &[1, 1]);
        assert_eq!(
            layout.header(),
            vec!["t", "p1_x0", "p1_x1", "p1_u0", "p2_x0", "p2_x1", "p2_u0"]
        );
    }
}
