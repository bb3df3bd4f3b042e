//! Experiment orchestration: regret sweeps over a horizon grid, summary
//! statistics, and log-log slope fits.
//!
//! A sweep is described by a TOML config (model path, horizon grid, runs per
//! point, master seed, algorithm list). Per-run seeds are derived by stable
//! hashing of `(master seed, algorithm label, horizon, run index)`, so adding
//! an algorithm or a horizon never perturbs existing results. Runs execute in
//! parallel; outputs are gathered and written in a deterministic order.
//!
//! ```
//! use regime_bandits::bench::loglog_slope;
//!
//! // points on y = x^(2/3) fit slope 2/3 exactly
//! let pts: Vec<(f64, f64)> = [2e3, 5e3, 1e4, 2e4, 5e4].iter()
//!     .map(|t: &f64| (*t, t.powf(2.0 / 3.0))).collect();
//! let fit = loglog_slope(&pts).unwrap();
//! assert!((fit.slope - 2.0 / 3.0).abs() < 1e-12 && fit.stderr < 1e-12);
//! ```

use crate::baselines::{run_baseline, BaselineConfig, BaselineKind};
use crate::error::HarnessError;
use crate::io::{fmt_f64, read_model, write_text};
use crate::model::HmmBanditModel;
use crate::rng::{mix, mix_label};
use crate::seeu::{regret, run_seeu, solve_rho_star, SeeuConfig};
use rayon::prelude::*;
use serde::Deserialize;
use std::path::Path;

/// One algorithm entry in the experiment config.
#[derive(Debug, Clone, Deserialize)]
#[serde(tag = "kind", rename_all = "snake_case")]
pub enum AlgorithmSpec {
    Seeu {
        #[serde(default)]
        label: Option<String>,
        #[serde(default = "default_tau1")]
        tau1: usize,
        #[serde(default = "default_tau2")]
        tau2: usize,
        #[serde(default = "default_delta")]
        delta: f64,
        #[serde(default = "default_c")]
        c1: f64,
        #[serde(default = "default_c")]
        c2: f64,
        #[serde(default = "default_grid")]
        grid: usize,
        #[serde(default = "default_candidates")]
        candidates: usize,
    },
    EpsilonGreedy {
        #[serde(default)]
        label: Option<String>,
        epsilon: f64,
    },
    SwUcb {
        #[serde(default)]
        label: Option<String>,
        /// Fixed window; when absent, runs the documented per-horizon sweep
        /// over `{sqrt(T), T^(2/3), 4 sqrt(T)}` and also reports the best.
        #[serde(default)]
        window: Option<usize>,
        #[serde(default = "default_xi")]
        xi: f64,
    },
    Exp3s {
        #[serde(default)]
        label: Option<String>,
        #[serde(default)]
        gamma: Option<f64>,
        #[serde(default)]
        alpha: Option<f64>,
        /// Change budget; defaults to the horizon.
        #[serde(default)]
        l: Option<usize>,
    },
    BestFixedArm {
        #[serde(default)]
        label: Option<String>,
    },
    FullInfoOracle {
        #[serde(default)]
        label: Option<String>,
    },
}

fn default_tau1() -> usize {
    100
}
fn default_tau2() -> usize {
    50
}
fn default_delta() -> f64 {
    0.05
}
fn default_c() -> f64 {
    1.0
}
fn default_grid() -> usize {
    100
}
fn default_candidates() -> usize {
    64
}
fn default_xi() -> f64 {
    2.0
}
fn default_rho_grid() -> usize {
    200
}

impl AlgorithmSpec {
    pub fn label(&self) -> String {
        match self {
            AlgorithmSpec::Seeu { label, .. } => label.clone().unwrap_or_else(|| "seeu".into()),
            AlgorithmSpec::EpsilonGreedy { label, .. } => {
                label.clone().unwrap_or_else(|| "epsilon_greedy".into())
            }
            AlgorithmSpec::SwUcb { label, .. } => label.clone().unwrap_or_else(|| "sw_ucb".into()),
            AlgorithmSpec::Exp3s { label, .. } => label.clone().unwrap_or_else(|| "exp3s".into()),
            AlgorithmSpec::BestFixedArm { label } => {
                label.clone().unwrap_or_else(|| "best_fixed_arm".into())
            }
            AlgorithmSpec::FullInfoOracle { label } => {
                label.clone().unwrap_or_else(|| "full_info_oracle".into())
            }
        }
    }
}

/// Experiment description, usually parsed from TOML.
#[derive(Debug, Clone, Deserialize)]
pub struct ExperimentConfig {
    pub model: String,
    pub t_grid: Vec<usize>,
    pub runs: usize,
    pub master_seed: u64,
    /// Worker threads; 0 uses all cores.
    #[serde(default)]
    pub workers: usize,
    /// Grid resolution for the benchmark `rho_star` solve.
    #[serde(default = "default_rho_grid")]
    pub rho_star_grid: usize,
    pub algorithms: Vec<AlgorithmSpec>,
}

impl ExperimentConfig {
    pub fn from_toml(text: &str) -> Result<Self, HarnessError> {
        let cfg: ExperimentConfig =
            toml::from_str(text).map_err(|e| HarnessError::InvalidConfig(e.to_string()))?;
        cfg.validate()?;
        Ok(cfg)
    }

    pub fn load(path: &Path) -> Result<Self, HarnessError> {
        let text = std::fs::read_to_string(path).map_err(|source| HarnessError::Io {
            path: path.display().to_string(),
            source,
        })?;
        Self::from_toml(&text)
    }

    pub fn validate(&self) -> Result<(), HarnessError> {
        if self.runs < 1 {
            return Err(HarnessError::InvalidConfig("runs must be >= 1".into()));
        }
        if self.t_grid.is_empty() || self.t_grid.windows(2).any(|w| w[0] >= w[1]) {
            return Err(HarnessError::InvalidConfig(
                "t_grid must be nonempty and strictly increasing".into(),
            ));
        }
        if self.algorithms.is_empty() {
            return Err(HarnessError::InvalidConfig("no algorithms listed".into()));
        }
        Ok(())
    }
}

/// Stable per-run seed: independent of grid order and of the other entries.
pub fn derive_seed(master_seed: u64, label: &str, horizon: usize, run: usize) -> u64 {
    mix(mix_label(mix(master_seed) ^ mix(horizon as u64), label) ^ mix(run as u64))
}

/// One raw result row.
#[derive(Debug, Clone)]
pub struct RawResult {
    pub algo: String,
    pub horizon: usize,
    pub run: usize,
    pub seed: u64,
    pub final_regret: f64,
}

/// Mean final regret at one (algorithm, horizon) cell.
#[derive(Debug, Clone)]
pub struct SummaryRow {
    pub algo: String,
    pub horizon: usize,
    pub mean: f64,
    pub stderr: f64,
    pub runs: usize,
}

/// Least-squares fit of `log(mean regret)` on `log(T)`.
#[derive(Debug, Clone, Copy)]
pub struct SlopeFit {
    pub slope: f64,
    pub stderr: f64,
    pub intercept: f64,
    pub points_used: usize,
    pub points_dropped: usize,
}

/// Everything a sweep produces.
#[derive(Debug, Clone)]
pub struct RegretSummary {
    pub raw: Vec<RawResult>,
    pub rows: Vec<SummaryRow>,
    pub slopes: Vec<(String, Option<SlopeFit>)>,
    pub rho_star: f64,
    pub rho_star_refined: f64,
    pub failed_runs: usize,
}

impl RegretSummary {
    pub fn mean_at(&self, algo: &str, horizon: usize) -> Option<&SummaryRow> {
        self.rows
            .iter()
            .find(|r| r.algo == algo && r.horizon == horizon)
    }

    pub fn slope_of(&self, algo: &str) -> Option<SlopeFit> {
        self.slopes
            .iter()
            .find(|(a, _)| a == algo)
            .and_then(|(_, s)| *s)
    }
}

/// Fit `log y = intercept + slope log x` by least squares.
///
/// Non-positive `y` points are dropped (their logs are undefined) and
/// counted; fewer than 3 surviving points is an error.
pub fn loglog_slope(points: &[(f64, f64)]) -> Result<SlopeFit, HarnessError> {
    let usable: Vec<(f64, f64)> = points
        .iter()
        .filter(|(x, y)| *x > 0.0 && *y > 0.0)
        .map(|(x, y)| (x.ln(), y.ln()))
        .collect();
    let dropped = points.len() - usable.len();
    if usable.len() < 3 {
        return Err(HarnessError::TooFewPoints(usable.len()));
    }
    let n = usable.len() as f64;
    let mean_x = usable.iter().map(|(x, _)| x).sum::<f64>() / n;
    let mean_y = usable.iter().map(|(_, y)| y).sum::<f64>() / n;
    let sxx: f64 = usable.iter().map(|(x, _)| (x - mean_x).powi(2)).sum();
    let sxy: f64 = usable
        .iter()
        .map(|(x, y)| (x - mean_x) * (y - mean_y))
        .sum();
    let slope = sxy / sxx;
    let intercept = mean_y - slope * mean_x;
    let ssr: f64 = usable
        .iter()
        .map(|(x, y)| (y - intercept - slope * x).powi(2))
        .sum();
    let dof = (usable.len() as f64 - 2.0).max(1.0);
    let stderr = (ssr / dof / sxx).sqrt();
    Ok(SlopeFit {
        slope,
        stderr,
        intercept,
        points_used: usable.len(),
        points_dropped: dropped,
    })
}

enum Runner {
    Seeu(SeeuConfig),
    Baseline(BaselineConfig),
}

fn build_runner(spec: &AlgorithmSpec, horizon: usize) -> Runner {
    match spec {
        AlgorithmSpec::Seeu {
            tau1,
            tau2,
            delta,
            c1,
            c2,
            grid,
            candidates,
            ..
        } => Runner::Seeu(SeeuConfig {
            tau1: *tau1,
            tau2: *tau2,
            delta: *delta,
            c1: *c1,
            c2: *c2,
            grid_resolution: *grid,
            n_candidates: *candidates,
            ..Default::default()
        }),
        AlgorithmSpec::EpsilonGreedy { epsilon, .. } => Runner::Baseline(BaselineConfig {
            kind: BaselineKind::EpsilonGreedy { epsilon: *epsilon },
        }),
        AlgorithmSpec::SwUcb { window, xi, .. } => Runner::Baseline(BaselineConfig {
            kind: BaselineKind::SlidingWindowUcb {
                window: window.unwrap_or(horizon),
                xi: *xi,
            },
        }),
        AlgorithmSpec::Exp3s {
            gamma, alpha, l, ..
        } => Runner::Baseline(BaselineConfig {
            kind: BaselineKind::Exp3S {
                gamma: *gamma,
                alpha: *alpha,
                l: *l,
            },
        }),
        AlgorithmSpec::BestFixedArm { .. } => Runner::Baseline(BaselineConfig {
            kind: BaselineKind::BestFixedArm,
        }),
        AlgorithmSpec::FullInfoOracle { .. } => Runner::Baseline(BaselineConfig {
            kind: BaselineKind::FullInformationOracle,
        }),
    }
}

/// The sliding-window sweep documented for `sw_ucb` when no window is pinned.
pub fn window_sweep(horizon: usize) -> Vec<(String, usize)> {
    let t = horizon as f64;
    vec![
        ("sqrt_t".to_string(), t.sqrt().round() as usize),
        ("t_2_3".to_string(), t.powf(2.0 / 3.0).round() as usize),
        ("4sqrt_t".to_string(), (4.0 * t.sqrt()).round() as usize),
    ]
}

struct Task {
    label: String,
    spec: AlgorithmSpec,
    horizon: usize,
    run: usize,
    seed: u64,
}

/// Run the full sweep. Returns the summary; callers write files separately
/// via [`write_outputs`].
pub fn run_experiment(
    config: &ExperimentConfig,
    model: &HmmBanditModel,
) -> Result<RegretSummary, HarnessError> {
    config.validate()?;

    // benchmark average reward from the true model, with a refinement probe
    let rho_solution = solve_rho_star(model, config.rho_star_grid)?;
    let rho_refined = solve_rho_star(model, config.rho_star_grid * 2)?;
    let rho_star = rho_solution.rho;

    // expand algorithm entries: a window-less sw_ucb becomes the documented
    // sweep plus a per-horizon best
    let mut expanded: Vec<(String, AlgorithmSpec, Option<String>)> = Vec::new();
    for spec in &config.algorithms {
        match spec {
            AlgorithmSpec::SwUcb {
                window: None, xi, label,
            } => {
                let base = spec.label();
                for (suffix, _) in window_sweep(1) {
                    // per-horizon window resolved later; keep the suffix label
                    expanded.push((
                        format!("{base}[{suffix}]"),
                        AlgorithmSpec::SwUcb {
                            label: label.clone(),
                            window: None,
                            xi: *xi,
                        },
                        Some(suffix.clone()),
                    ));
                }
            }
            other => expanded.push((other.label(), other.clone(), None)),
        }
    }

    let mut tasks: Vec<Task> = Vec::new();
    for (label, spec, sweep_suffix) in expanded.iter() {
        for &horizon in &config.t_grid {
            let resolved = match (spec, sweep_suffix) {
                (AlgorithmSpec::SwUcb { xi, label, .. }, Some(suffix)) => {
                    let window = window_sweep(horizon)
                        .into_iter()
                        .find(|(s, _)| s == suffix)
                        .map(|(_, w)| w)
                        .unwrap();
                    AlgorithmSpec::SwUcb {
                        label: label.clone(),
                        window: Some(window),
                        xi: *xi,
                    }
                }
                _ => spec.clone(),
            };
            for run in 0..config.runs {
                tasks.push(Task {
                    label: label.clone(),
                    spec: resolved.clone(),
                    horizon,
                    run,
                    seed: derive_seed(config.master_seed, label, horizon, run),
                });
            }
        }
    }

    let execute = |task: &Task| -> Option<f64> {
        let outcome = match build_runner(&task.spec, task.horizon) {
            Runner::Seeu(cfg) => run_seeu(model, &cfg, task.horizon, task.seed),
            Runner::Baseline(cfg) => run_baseline(model, &cfg, task.horizon, task.seed),
        };
        match outcome {
            Ok(log) => {
                let series = regret(&log.rewards(), rho_star);
                series.last().copied()
            }
            Err(_) => None,
        }
    };

    let results: Vec<Option<f64>> = if config.workers == 1 {
        tasks.iter().map(execute).collect()
    } else {
        let pool = rayon::ThreadPoolBuilder::new()
            .num_threads(config.workers)
            .build()
            .map_err(|e| HarnessError::InvalidConfig(e.to_string()))?;
        pool.install(|| tasks.par_iter().map(execute).collect())
    };

    let mut raw: Vec<RawResult> = Vec::new();
    let mut failed = 0usize;
    for (task, result) in tasks.iter().zip(results) {
        match result {
            Some(final_regret) => raw.push(RawResult {
                algo: task.label.clone(),
                horizon: task.horizon,
                run: task.run,
                seed: task.seed,
                final_regret,
            }),
            None => failed += 1,
        }
    }
    raw.sort_by(|a, b| {
        a.algo
            .cmp(&b.algo)
            .then(a.horizon.cmp(&b.horizon))
            .then(a.run.cmp(&b.run))
    });

    // summary rows in (expanded algo, horizon) order
    let mut rows: Vec<SummaryRow> = Vec::new();
    let mut labels: Vec<String> = expanded.iter().map(|(l, _, _)| l.clone()).collect();
    for label in &labels {
        for &horizon in &config.t_grid {
            let values: Vec<f64> = raw
                .iter()
                .filter(|r| &r.algo == label && r.horizon == horizon)
                .map(|r| r.final_regret)
                .collect();
            if values.is_empty() {
                continue;
            }
            let n = values.len() as f64;
            let mean = values.iter().sum::<f64>() / n;
            let var = if values.len() > 1 {
                values.iter().map(|v| (v - mean).powi(2)).sum::<f64>() / (n - 1.0)
            } else {
                0.0
            };
            rows.push(SummaryRow {
                algo: label.clone(),
                horizon,
                mean,
                stderr: (var / n).sqrt(),
                runs: values.len(),
            });
        }
    }

    // per-horizon best of a swept sw_ucb becomes its own reported algorithm
    let sweep_bases: Vec<String> = config
        .algorithms
        .iter()
        .filter_map(|s| match s {
            AlgorithmSpec::SwUcb { window: None, .. } => Some(s.label()),
            _ => None,
        })
        .collect();
    for base in &sweep_bases {
        let best_label = format!("{base}[best]");
        for &horizon in &config.t_grid {
            let best = rows
                .iter()
                .filter(|r| {
                    r.horizon == horizon
                        && r.algo.starts_with(&format!("{base}["))
                        && !r.algo.ends_with("[best]")
                })
                .min_by(|a, b| a.mean.partial_cmp(&b.mean).unwrap());
            if let Some(b) = best {
                rows.push(SummaryRow {
                    algo: best_label.clone(),
                    horizon,
                    mean: b.mean,
                    stderr: b.stderr,
                    runs: b.runs,
                });
            }
        }
        labels.push(best_label);
    }

    let mut slopes: Vec<(String, Option<SlopeFit>)> = Vec::new();
    for label in &labels {
        let points: Vec<(f64, f64)> = rows
            .iter()
            .filter(|r| &r.algo == label)
            .map(|r| (r.horizon as f64, r.mean))
            .collect();
        slopes.push((label.clone(), loglog_slope(&points).ok()));
    }

    Ok(RegretSummary {
        raw,
        rows,
        slopes,
        rho_star,
        rho_star_refined: rho_refined.rho,
        failed_runs: failed,
    })
}

/// Write `raw.csv`, `summary.csv`, `slopes.csv`, and `meta.txt`.
pub fn write_outputs(
    summary: &RegretSummary,
    config: &ExperimentConfig,
    out_dir: &Path,
) -> Result<(), HarnessError> {
    let mut raw = String::from("algo,T,run,seed,final_regret\n");
    for r in &summary.raw {
        raw.push_str(&format!(
            "{},{},{},{},{}\n",
            r.algo,
            r.horizon,
            r.run,
            r.seed,
            fmt_f64(r.final_regret)
        ));
    }
    write_text(&out_dir.join("raw.csv"), &raw)?;

    let mut rows = String::from("algo,T,mean_regret,stderr,runs\n");
    for r in &summary.rows {
        rows.push_str(&format!(
            "{},{},{},{},{}\n",
            r.algo,
            r.horizon,
            fmt_f64(r.mean),
            fmt_f64(r.stderr),
            r.runs
        ));
    }
    write_text(&out_dir.join("summary.csv"), &rows)?;

    let mut slopes = String::from("algo,slope,stderr,intercept,points_used,points_dropped\n");
    for (algo, fit) in &summary.slopes {
        match fit {
            Some(f) => slopes.push_str(&format!(
                "{algo},{},{},{},{},{}\n",
                fmt_f64(f.slope),
                fmt_f64(f.stderr),
                fmt_f64(f.intercept),
                f.points_used,
                f.points_dropped
            )),
            None => slopes.push_str(&format!("{algo},,,,0,0\n")),
        }
    }
    write_text(&out_dir.join("slopes.csv"), &slopes)?;

    let mut meta = String::new();
    meta.push_str(&format!("version = {}\n", env!("CARGO_PKG_VERSION")));
    meta.push_str(&format!("model = {}\n", config.model));
    meta.push_str(&format!(
        "t_grid = [{}]\n",
        config
            .t_grid
            .iter()
            .map(|t| t.to_string())
            .collect::<Vec<_>>()
            .join(", ")
    ));
    meta.push_str(&format!("runs = {}\n", config.runs));
    meta.push_str(&format!("master_seed = {}\n", config.master_seed));
    meta.push_str(&format!("workers = {}\n", config.workers));
    meta.push_str(&format!("rho_star_grid = {}\n", config.rho_star_grid));
    meta.push_str(&format!("rho_star = {}\n", fmt_f64(summary.rho_star)));
    meta.push_str(&format!(
        "rho_star_refined = {}\n",
        fmt_f64(summary.rho_star_refined)
    ));
    meta.push_str(&format!(
        "rho_star_discretization_estimate = {}\n",
        fmt_f64((summary.rho_star - summary.rho_star_refined).abs())
    ));
    meta.push_str(&format!("failed_runs = {}\n", summary.failed_runs));
    for spec in &config.algorithms {
        meta.push_str(&format!("algorithm = {spec:?}\n"));
    }
    write_text(&out_dir.join("meta.txt"), &meta)?;
    Ok(())
}

/// Convenience: load the config's model relative to the config location.
pub fn load_experiment_model(
    config: &ExperimentConfig,
    config_path: &Path,
) -> Result<HmmBanditModel, HarnessError> {
    let model_path = Path::new(&config.model);
    let resolved = if model_path.is_relative() {
        config_path
            .parent()
            .map(|p| p.join(model_path))
            .unwrap_or_else(|| model_path.to_path_buf())
    } else {
        model_path.to_path_buf()
    };
    // fall back to the raw path when the sibling resolution misses
    let path = if resolved.exists() || !model_path.exists() {
        resolved
    } else {
        model_path.to_path_buf()
    };
    Ok(read_model(&path)?.0)
}
