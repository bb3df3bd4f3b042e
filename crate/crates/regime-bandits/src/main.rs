//! Command-line harness: simulate, estimate, plan, run agents, and sweep
//! regret experiments. Every command is deterministic given its flags, so
//! re-running with the same seed reproduces output files byte for byte.

use clap::{Parser, Subcommand};
use nalgebra::DMatrix;
use rand_chacha::rand_core::SeedableRng;
use regime_bandits::baselines::{run_baseline, BaselineConfig, BaselineKind};
use regime_bandits::bench::{
    load_experiment_model, loglog_slope, run_experiment, write_outputs, ExperimentConfig,
};
use regime_bandits::error::HarnessError;
use regime_bandits::io::{
    belief_history_csv, episodes_csv, fmt_f64, read_model, runlog_csv, trajectory_csv, write_text,
};
use regime_bandits::linalg::Tensor3;
use regime_bandits::model::Belief;
use regime_bandits::planner::{bias_span, solve_average_reward, SimplexGrid, DEFAULT_GRID_BUDGET};
use regime_bandits::rng::RunRng;
use regime_bandits::seeu::{run_seeu, SeeuConfig};
use regime_bandits::sim::{sample_trajectory, ArmSource};
use regime_bandits::spectral::{
    collect_triples, confidence_region, estimate_moments, recover_parameters,
    ExplorationSegments, RecoveryFloors,
};
use regime_bandits::tensor::{tensor_decompose, PowerMethodParams};
use std::path::PathBuf;
use std::sync::Arc;

#[derive(Parser)]
#[command(
    name = "regime-bandits",
    about = "Bandits with hidden Markov regime switching: simulation, estimation, planning, learning, benchmarks",
    version
)]
struct Cli {
    #[command(subcommand)]
    command: Command,
}

#[derive(Subcommand)]
enum Command {
    /// Sample a trajectory from a model and write it as CSV.
    Simulate {
        #[arg(long)]
        model: PathBuf,
        #[arg(long)]
        steps: usize,
        #[arg(long, default_value_t = 0)]
        seed: u64,
        /// Pull this arm every period instead of uniform random arms.
        #[arg(long)]
        arm: Option<usize>,
        #[arg(long)]
        out: Option<PathBuf>,
    },
    /// Generate uniform-exploration data from a model and estimate its
    /// parameters spectrally.
    Estimate {
        #[arg(long)]
        model: PathBuf,
        /// Exploration steps to sample.
        #[arg(long)]
        samples: usize,
        #[arg(long, default_value_t = 0)]
        seed: u64,
        #[arg(long, default_value_t = 0.05)]
        delta: f64,
        #[arg(long, default_value_t = 1.0)]
        c1: f64,
        #[arg(long, default_value_t = 1.0)]
        c2: f64,
        /// Write the estimate (TOML) here.
        #[arg(long)]
        out: Option<PathBuf>,
        /// Also dump the cross moments and M2 as CSV.
        #[arg(long)]
        dump_moments: Option<PathBuf>,
    },
    /// Solve the average-reward planning problem on the belief grid.
    Plan {
        #[arg(long)]
        model: PathBuf,
        /// Grid resolution (points per unit simplex edge).
        #[arg(long, default_value_t = 100)]
        grid: usize,
        #[arg(long, default_value_t = 1e-6)]
        tol: f64,
        /// Write the policy table CSV here.
        #[arg(long)]
        out: Option<PathBuf>,
    },
    /// Run the episodic explore/exploit learner.
    Seeu {
        #[arg(long)]
        model: PathBuf,
        #[arg(long = "T")]
        horizon: usize,
        #[arg(long, default_value_t = 100)]
        tau1: usize,
        #[arg(long, default_value_t = 50)]
        tau2: usize,
        #[arg(long, default_value_t = 0.05)]
        delta: f64,
        #[arg(long, default_value_t = 1.0)]
        c1: f64,
        #[arg(long, default_value_t = 1.0)]
        c2: f64,
        #[arg(long, default_value_t = 100)]
        grid: usize,
        #[arg(long, default_value_t = 64)]
        candidates: usize,
        #[arg(long, default_value_t = 0)]
        seed: u64,
        /// Directory for steps.csv and episodes.csv.
        #[arg(long)]
        out: Option<PathBuf>,
    },
    /// Run a baseline policy.
    Baseline {
        /// One of: epsilon_greedy, sw_ucb, exp3s, best_fixed_arm,
        /// full_info_oracle.
        #[arg(long)]
        kind: String,
        #[arg(long)]
        model: PathBuf,
        #[arg(long = "T")]
        horizon: usize,
        #[arg(long, default_value_t = 0.1)]
        epsilon: f64,
        #[arg(long)]
        window: Option<usize>,
        #[arg(long, default_value_t = 2.0)]
        xi: f64,
        #[arg(long)]
        gamma: Option<f64>,
        #[arg(long)]
        alpha: Option<f64>,
        /// Change budget for exp3s (defaults to the horizon).
        #[arg(long)]
        l: Option<usize>,
        #[arg(long, default_value_t = 0)]
        seed: u64,
        #[arg(long)]
        out: Option<PathBuf>,
    },
    /// Run a full regret sweep from a TOML config.
    Bench {
        #[arg(long)]
        config: PathBuf,
        #[arg(long)]
        out: PathBuf,
    },
    /// Fit a log-log slope to (T, value) points from a CSV file.
    Slope {
        /// CSV with either `T,value` columns or summary.csv format.
        #[arg(long = "in")]
        input: PathBuf,
        /// Algorithm filter when reading summary.csv.
        #[arg(long)]
        algo: Option<String>,
    },
    /// Replay a belief path for a recorded history CSV (t,arm,reward).
    Beliefs {
        #[arg(long)]
        model: PathBuf,
        #[arg(long)]
        history: PathBuf,
        #[arg(long)]
        out: Option<PathBuf>,
    },
}

fn main() {
    let cli = Cli::parse();
    match dispatch(cli.command) {
        Ok(code) => std::process::exit(code),
        Err(err) => {
            eprintln!("error: {err}");
            std::process::exit(1);
        }
    }
}

fn dispatch(cmd: Command) -> Result<i32, HarnessError> {
    match cmd {
        Command::Simulate {
            model,
            steps,
            seed,
            arm,
            out,
        } => {
            let (model, initial) = read_model(&model)?;
            let source = match arm {
                Some(a) => ArmSource::Fixed(a),
                None => ArmSource::Uniform,
            };
            let traj = sample_trajectory(
                &model,
                &source,
                steps,
                initial.as_ref(),
                &RunRng::new(seed),
            )?;
            let csv = trajectory_csv(&traj);
            match out {
                Some(path) => write_text(&path, &csv)?,
                None => print!("{csv}"),
            }
            println!("steps = {steps}");
            println!("mean_reward = {}", fmt_f64(traj.mean_reward()));
            Ok(0)
        }

        Command::Estimate {
            model,
            samples,
            seed,
            delta,
            c1,
            c2,
            out,
            dump_moments,
        } => {
            let (model, _) = read_model(&model)?;
            let rng = RunRng::new(seed);
            let traj = sample_trajectory(&model, &ArmSource::Uniform, samples, None, &rng)?;
            let mut segments = ExplorationSegments::new();
            segments.push_segment(
                traj.arms
                    .iter()
                    .cloned()
                    .zip(traj.rewards.iter().cloned())
                    .collect(),
            );
            let triples = collect_triples(&segments, model.num_arms())?;
            let moments = estimate_moments(&triples, model.alphabet_size(), model.num_states())?;
            let mut est_rng =
                rand_chacha::ChaCha12Rng::seed_from_u64(regime_bandits::rng::mix(seed ^ 3));
            let decomposition = tensor_decompose(
                &moments.m2,
                &moments.m3,
                model.num_states(),
                &PowerMethodParams::default(),
                &mut est_rng,
            )?;
            let estimate = recover_parameters(
                &decomposition,
                &moments,
                model.num_states(),
                model.num_arms(),
                &RecoveryFloors::default(),
            )?;
            let region = confidence_region(
                estimate.mu_hat.clone(),
                estimate.p_hat.clone(),
                model.num_arms(),
                triples.len(),
                delta,
                c1,
                c2,
            );

            let mut text = String::new();
            text.push_str(&format!("M = {}\n", model.num_states()));
            text.push_str(&format!("I = {}\n", model.num_arms()));
            text.push_str(&format!("n_triples = {}\n", triples.len()));
            text.push_str(&format!("delta = {}\n", fmt_f64(delta)));
            text.push_str(&matrix_toml("mu_hat", &estimate.mu_hat));
            text.push_str(&matrix_toml("P_hat", &estimate.p_hat));
            text.push_str(&format!(
                "radius_mu_row = {}\n",
                fmt_f64(region.radius_mu_row)
            ));
            text.push_str(&format!("radius_P = {}\n", fmt_f64(region.radius_p)));
            text.push_str(&format!(
                "reconstruction_residual = {}\n",
                fmt_f64(estimate.diagnostics.reconstruction_residual)
            ));
            text.push_str(&format!(
                "whitening_condition = {}\n",
                fmt_f64(estimate.diagnostics.whitening_condition)
            ));
            match out {
                Some(path) => write_text(&path, &text)?,
                None => print!("{text}"),
            }
            if let Some(path) = dump_moments {
                write_text(&path, &moments_csv(&moments))?;
            }
            Ok(0)
        }

        Command::Plan {
            model,
            grid,
            tol,
            out,
        } => {
            let (model, _) = read_model(&model)?;
            let grid = Arc::new(SimplexGrid::build(
                model.num_states(),
                grid,
                DEFAULT_GRID_BUDGET,
            )?);
            let solution = solve_average_reward(&model, &grid, tol, 100_000)?;
            println!("rho = {}", fmt_f64(solution.rho));
            println!("span_h = {}", fmt_f64(bias_span(&solution)));
            println!("iterations = {}", solution.iterations);
            println!("converged = {}", solution.converged);
            println!("residual_span = {}", fmt_f64(solution.residual_span));
            if let Some(path) = out {
                let mut csv = String::new();
                for m in 1..=model.num_states() {
                    csv.push_str(&format!("b{m},"));
                }
                csv.push_str("arm,h\n");
                for (idx, point) in solution.grid.points().iter().enumerate() {
                    for v in point {
                        csv.push_str(&fmt_f64(*v));
                        csv.push(',');
                    }
                    csv.push_str(&format!(
                        "{},{}\n",
                        solution.policy[idx],
                        fmt_f64(solution.h[idx])
                    ));
                }
                write_text(&path, &csv)?;
            }
            Ok(if solution.converged { 0 } else { 2 })
        }

        Command::Seeu {
            model,
            horizon,
            tau1,
            tau2,
            delta,
            c1,
            c2,
            grid,
            candidates,
            seed,
            out,
        } => {
            let (model, initial) = read_model(&model)?;
            let cfg = SeeuConfig {
                tau1,
                tau2,
                delta,
                c1,
                c2,
                grid_resolution: grid,
                n_candidates: candidates,
                initial_belief: initial,
                ..Default::default()
            };
            let log = run_seeu(&model, &cfg, horizon, seed)?;
            println!("total_reward = {}", fmt_f64(log.total_reward()));
            println!("episodes = {}", log.episodes.len());
            println!(
                "fallbacks = {}",
                log.episodes.iter().filter(|e| e.fallback).count()
            );
            if let Some(dir) = out {
                write_text(
                    &dir.join("steps.csv"),
                    &runlog_csv(&log, model.num_states()),
                )?;
                write_text(
                    &dir.join("episodes.csv"),
                    &episodes_csv(&log, model.num_states(), model.num_arms()),
                )?;
            }
            Ok(0)
        }

        Command::Baseline {
            kind,
            model,
            horizon,
            epsilon,
            window,
            xi,
            gamma,
            alpha,
            l,
            seed,
            out,
        } => {
            let (model, _) = read_model(&model)?;
            let kind = match kind.as_str() {
                "epsilon_greedy" => BaselineKind::EpsilonGreedy { epsilon },
                "sw_ucb" => BaselineKind::SlidingWindowUcb {
                    window: window.unwrap_or(horizon),
                    xi,
                },
                "exp3s" => BaselineKind::Exp3S { gamma, alpha, l },
                "best_fixed_arm" => BaselineKind::BestFixedArm,
                "full_info_oracle" => BaselineKind::FullInformationOracle,
                other => {
                    return Err(HarnessError::InvalidBaseline(format!(
                        "unknown kind {other}"
                    )))
                }
            };
            let log = run_baseline(&model, &BaselineConfig { kind }, horizon, seed)?;
            println!("total_reward = {}", fmt_f64(log.total_reward()));
            if let Some(path) = out {
                write_text(&path, &runlog_csv(&log, model.num_states()))?;
            }
            Ok(0)
        }

        Command::Bench { config, out } => {
            let cfg = ExperimentConfig::load(&config)?;
            let model = load_experiment_model(&cfg, &config)?;
            let summary = run_experiment(&cfg, &model)?;
            write_outputs(&summary, &cfg, &out)?;
            println!("rho_star = {}", fmt_f64(summary.rho_star));
            for (algo, fit) in &summary.slopes {
                match fit {
                    Some(f) => println!(
                        "slope {algo} = {} +- {}",
                        fmt_f64(f.slope),
                        fmt_f64(f.stderr)
                    ),
                    None => println!("slope {algo} = (needs >= 3 horizons)"),
                }
            }
            if summary.failed_runs > 0 {
                eprintln!("warning: {} runs failed", summary.failed_runs);
                return Ok(2);
            }
            Ok(0)
        }

        Command::Slope { input, algo } => {
            let text = std::fs::read_to_string(&input).map_err(|source| HarnessError::Io {
                path: input.display().to_string(),
                source,
            })?;
            let points = parse_points(&text, algo.as_deref())?;
            let fit = loglog_slope(&points)?;
            println!("slope = {}", fmt_f64(fit.slope));
            println!("stderr = {}", fmt_f64(fit.stderr));
            println!("intercept = {}", fmt_f64(fit.intercept));
            println!("points_used = {}", fit.points_used);
            println!("points_dropped = {}", fit.points_dropped);
            Ok(0)
        }

        Command::Beliefs {
            model,
            history,
            out,
        } => {
            let (model, initial) = read_model(&model)?;
            let text = std::fs::read_to_string(&history).map_err(|source| HarnessError::Io {
                path: history.display().to_string(),
                source,
            })?;
            let mut steps = Vec::new();
            for line in text.lines().skip(1) {
                let cols: Vec<&str> = line.split(',').collect();
                if cols.len() < 3 {
                    continue;
                }
                let arm: usize = cols[1].trim().parse().map_err(|_| {
                    HarnessError::InvalidConfig(format!("bad arm in line: {line}"))
                })?;
                let reward: u8 = cols[2].trim().parse().map_err(|_| {
                    HarnessError::InvalidConfig(format!("bad reward in line: {line}"))
                })?;
                steps.push((arm, reward));
            }
            let b1 = initial.unwrap_or_else(|| Belief::uniform(model.num_states()));
            let replay = regime_bandits::belief::replay_beliefs(&model, &b1, &steps)?;
            let csv = belief_history_csv(&replay);
            match out {
                Some(path) => write_text(&path, &csv)?,
                None => print!("{csv}"),
            }
            Ok(0)
        }
    }
}

fn matrix_toml(name: &str, m: &DMatrix<f64>) -> String {
    let mut vals = Vec::with_capacity(m.nrows() * m.ncols());
    for r in 0..m.nrows() {
        for c in 0..m.ncols() {
            vals.push(fmt_f64(m[(r, c)]));
        }
    }
    format!("{name} = [{}]\n", vals.join(", "))
}

fn moments_csv(moments: &regime_bandits::spectral::MomentStats) -> String {
    let mut out = String::from("matrix,row,col,value\n");
    let mut dump = |name: &str, m: &DMatrix<f64>| {
        for r in 0..m.nrows() {
            for c in 0..m.ncols() {
                out.push_str(&format!("{name},{r},{c},{}\n", fmt_f64(m[(r, c)])));
            }
        }
    };
    dump("W_prev_cur", &moments.w_prev_cur);
    dump("W_next_cur", &moments.w_next_cur);
    dump("W_cur_prev", &moments.w_cur_prev);
    dump("W_next_prev", &moments.w_next_prev);
    dump("M2", &moments.m2);
    let mut dump_tensor = |name: &str, t: &Tensor3| {
        for a in 0..t.dim() {
            for b in 0..t.dim() {
                for c in 0..t.dim() {
                    out.push_str(&format!(
                        "{name},{a},{},{}\n",
                        b * t.dim() + c,
                        fmt_f64(t.get(a, b, c))
                    ));
                }
            }
        }
    };
    dump_tensor("M3", &moments.m3);
    out
}

fn parse_points(text: &str, algo: Option<&str>) -> Result<Vec<(f64, f64)>, HarnessError> {
    let mut points = Vec::new();
    for (idx, line) in text.lines().enumerate() {
        let cols: Vec<&str> = line.split(',').map(str::trim).collect();
        if cols.len() < 2 {
            continue;
        }
        // summary.csv format: algo,T,mean_regret,...
        if cols.len() >= 3 && cols[0].parse::<f64>().is_err() {
            if idx == 0 {
                continue; // header
            }
            if let Some(want) = algo {
                if cols[0] != want {
                    continue;
                }
            } else if idx > 0 && cols[0].parse::<f64>().is_err() && algo.is_none() {
                // summary format without a filter: accept every row
            }
            let (t, y) = (cols[1].parse::<f64>(), cols[2].parse::<f64>());
            if let (Ok(t), Ok(y)) = (t, y) {
                points.push((t, y));
            }
            continue;
        }
        // plain two-column format
        if let (Ok(t), Ok(y)) = (cols[0].parse::<f64>(), cols[1].parse::<f64>()) {
            points.push((t, y));
        }
    }
    if points.is_empty() {
        return Err(HarnessError::InvalidConfig(
            "no usable (T, value) points found".into(),
        ));
    }
    Ok(points)
}
