//! File formats: the model file, run-log CSVs, and small text helpers.
//!
//! The model file is TOML with keys `M`, `I`, `P` (row-major), `mu`
//! (row-major) and an optional `initial_belief`. Floats are written with
//! shortest round-trip formatting so identical inputs always produce
//! identical bytes.

use crate::belief::BeliefHistory;
use crate::error::HarnessError;
use crate::model::{Belief, HmmBanditModel, Trajectory};
use crate::seeu::RunLog;
use nalgebra::DMatrix;
use serde::{Deserialize, Serialize};
use std::io::Write;
use std::path::Path;

/// On-disk model description.
#[derive(Debug, Clone, Serialize, Deserialize)]
pub struct ModelFile {
    #[serde(rename = "M")]
    pub m: usize,
    #[serde(rename = "I")]
    pub i: usize,
    #[serde(rename = "P")]
    pub p: Vec<f64>,
    pub mu: Vec<f64>,
    #[serde(default, skip_serializing_if = "Option::is_none")]
    pub initial_belief: Option<Vec<f64>>,
}

impl ModelFile {
    pub fn from_model(model: &HmmBanditModel, initial_belief: Option<&Belief>) -> Self {
        Self {
            m: model.num_states(),
            i: model.num_arms(),
            p: row_major(model.transition()),
            mu: row_major(model.mean_rewards()),
            initial_belief: initial_belief.map(|b| b.components().to_vec()),
        }
    }

    pub fn into_model(self) -> Result<(HmmBanditModel, Option<Belief>), HarnessError> {
        let check = |name: &str, len: usize, want: usize| {
            if len != want {
                Err(HarnessError::InvalidConfig(format!(
                    "{name} has {len} entries, expected {want}"
                )))
            } else {
                Ok(())
            }
        };
        check("P", self.p.len(), self.m * self.m)?;
        check("mu", self.mu.len(), self.m * self.i)?;
        let p = DMatrix::from_row_slice(self.m, self.m, &self.p);
        let mu = DMatrix::from_row_slice(self.m, self.i, &self.mu);
        let model = HmmBanditModel::validate(p, mu)?;
        let belief = match self.initial_belief {
            Some(b) => {
                check("initial_belief", b.len(), self.m)?;
                Some(Belief::new(b).map_err(HarnessError::Model)?)
            }
            None => None,
        };
        Ok((model, belief))
    }
}

fn row_major(m: &DMatrix<f64>) -> Vec<f64> {
    let mut out = Vec::with_capacity(m.nrows() * m.ncols());
    for r in 0..m.nrows() {
        for c in 0..m.ncols() {
            out.push(m[(r, c)]);
        }
    }
    out
}

/// Read and validate a model file.
pub fn read_model(path: &Path) -> Result<(HmmBanditModel, Option<Belief>), HarnessError> {
    let text = std::fs::read_to_string(path).map_err(|source| HarnessError::Io {
        path: path.display().to_string(),
        source,
    })?;
    let file: ModelFile = toml::from_str(&text).map_err(|e| HarnessError::ModelFile {
        path: path.display().to_string(),
        message: e.to_string(),
    })?;
    file.into_model()
}

/// Write a model file.
pub fn write_model(
    path: &Path,
    model: &HmmBanditModel,
    initial_belief: Option<&Belief>,
) -> Result<(), HarnessError> {
    let file = ModelFile::from_model(model, initial_belief);
    let text = toml::to_string(&file).expect("model serializes");
    write_text(path, &text)
}

/// Write text to a file, creating parent directories.
pub fn write_text(path: &Path, text: &str) -> Result<(), HarnessError> {
    if let Some(parent) = path.parent() {
        if !parent.as_os_str().is_empty() {
            std::fs::create_dir_all(parent).map_err(|source| HarnessError::Io {
                path: parent.display().to_string(),
                source,
            })?;
        }
    }
    let mut f = std::fs::File::create(path).map_err(|source| HarnessError::Io {
        path: path.display().to_string(),
        source,
    })?;
    f.write_all(text.as_bytes()).map_err(|source| HarnessError::Io {
        path: path.display().to_string(),
        source,
    })
}

/// Shortest round-trip float formatting (stable across runs and platforms).
pub fn fmt_f64(x: f64) -> String {
    if x.is_nan() {
        "nan".to_string()
    } else {
        format!("{x}")
    }
}

// ---------------------------------------------------------------------------
// CSV emission
// ---------------------------------------------------------------------------

/// Trajectory CSV: `t,state,arm,reward` (1-based time, 0-based indices).
pub fn trajectory_csv(traj: &Trajectory) -> String {
    let mut out = String::from("t,state,arm,reward\n");
    for (idx, ((state, arm), reward)) in traj
        .states
        .iter()
        .zip(&traj.arms)
        .zip(&traj.rewards)
        .enumerate()
    {
        out.push_str(&format!("{},{state},{arm},{reward}\n", idx + 1));
    }
    out
}

/// Step log CSV: `t,episode,phase,arm,reward[,b1..bM]`.
pub fn runlog_csv(log: &RunLog, num_states: usize) -> String {
    let with_belief = log.steps.iter().any(|s| !s.belief.is_empty());
    let mut header = String::from("t,episode,phase,arm,reward");
    if with_belief {
        for m in 1..=num_states {
            header.push_str(&format!(",b{m}"));
        }
    }
    let mut out = header;
    out.push('\n');
    for s in &log.steps {
        out.push_str(&format!(
            "{},{},{},{},{}",
            s.t,
            s.episode,
            s.phase.as_str(),
            s.arm,
            s.reward
        ));
        if with_belief {
            for m in 0..num_states {
                out.push(',');
                out.push_str(&fmt_f64(s.belief.get(m).copied().unwrap_or(f64::NAN)));
            }
        }
        out.push('\n');
    }
    out
}

/// Per-episode estimate CSV with matrices flattened row-major.
pub fn episodes_csv(log: &RunLog, num_states: usize, num_arms: usize) -> String {
    let mut header = String::from("k,n_triples,delta_k,radius_mu,radius_p,rho_opt,planner_residual,fallback");
    let matrix_cols = |name: &str, rows: usize, cols: usize, header: &mut String| {
        for r in 0..rows {
            for c in 0..cols {
                header.push_str(&format!(",{name}_{r}_{c}"));
            }
        }
    };
    matrix_cols("mu_hat", num_states, num_arms, &mut header);
    matrix_cols("p_hat", num_states, num_states, &mut header);
    matrix_cols("mu_opt", num_states, num_arms, &mut header);
    matrix_cols("p_opt", num_states, num_states, &mut header);
    let mut out = header;
    out.push('\n');

    let push_matrix = |m: &Option<DMatrix<f64>>, rows: usize, cols: usize, out: &mut String| {
        for r in 0..rows {
            for c in 0..cols {
                out.push(',');
                match m {
                    Some(mat) => out.push_str(&fmt_f64(mat[(r, c)])),
                    None => out.push_str("nan"),
                }
            }
        }
    };
    for e in &log.episodes {
        out.push_str(&format!(
            "{},{},{},{},{},{},{},{}",
            e.k,
            e.n_triples,
            fmt_f64(e.delta_k),
            fmt_f64(e.radius_mu),
            fmt_f64(e.radius_p),
            fmt_f64(e.rho_optimistic),
            fmt_f64(e.planner_residual),
            e.fallback
        ));
        push_matrix(&e.mu_hat, num_states, num_arms, &mut out);
        push_matrix(&e.p_hat, num_states, num_states, &mut out);
        push_matrix(&e.chosen_mu, num_states, num_arms, &mut out);
        push_matrix(&e.chosen_p, num_states, num_states, &mut out);
        out.push('\n');
    }
    out
}

/// Belief path CSV: `t,b1..bM,arm,reward` (the row at `t` holds the belief
/// before observing that row's step; the last row has no step).
pub fn belief_history_csv(history: &BeliefHistory) -> String {
    let m = history.initial.dim();
    let mut header = String::from("t");
    for i in 1..=m {
        header.push_str(&format!(",b{i}"));
    }
    header.push_str(",arm,reward\n");
    let mut out = header;
    for (t, belief) in history.beliefs.iter().enumerate() {
        out.push_str(&format!("{}", t + 1));
        for v in belief.components() {
            out.push(',');
            out.push_str(&fmt_f64(*v));
        }
        match history.steps.get(t) {
            Some((arm, reward)) => out.push_str(&format!(",{arm},{reward}\n")),
            None => out.push_str(",,\n"),
        }
    }
    out
}
