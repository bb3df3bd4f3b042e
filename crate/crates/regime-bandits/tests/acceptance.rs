//! Acceptance suite: the crate's quantitative contract, one test per
//! criterion, each printing a PASS line with its timing (run with
//! `--nocapture` to see them on success).

use nalgebra::DMatrix;
use rand::Rng;
use rand_chacha::rand_core::SeedableRng;
use rand_chacha::ChaCha12Rng;
use regime_bandits::belief::{
    belief_error_constants, belief_update, forgetting_constants, replay_beliefs,
};
use regime_bandits::bench::{run_experiment, ExperimentConfig};
use regime_bandits::linalg::{frobenius, max_abs, max_column_l1};
use regime_bandits::model::{example_2x2, Belief, HmmBanditModel};
use regime_bandits::planner::{
    bias_span, bias_span_bound, solve_average_reward, SimplexGrid, DEFAULT_GRID_BUDGET,
};
use regime_bandits::rng::RunRng;
use regime_bandits::seeu::episode_schedule;
use regime_bandits::sim::{sample_trajectory, ArmSource, Environment};
use regime_bandits::spectral::{
    align_permutation, apply_permutation, estimate_from_segments, population_moments,
    recover_parameters, ExplorationSegments, RecoveryFloors,
};
use regime_bandits::tensor::{tensor_decompose, PowerMethodParams};
use std::sync::Arc;
use std::time::Instant;

/// Random valid model with floors comfortably inside the assumptions.
fn random_model(states: usize, arms: usize, rng: &mut ChaCha12Rng) -> HmmBanditModel {
    loop {
        let mut p = DMatrix::zeros(states, states);
        for r in 0..states {
            let mut row: Vec<f64> = (0..states).map(|_| rng.random::<f64>() + 0.15).collect();
            let sum: f64 = row.iter().sum();
            row.iter_mut().for_each(|x| *x /= sum);
            for (c, v) in row.iter().enumerate() {
                p[(r, c)] = *v;
            }
        }
        let mu = DMatrix::from_fn(states, arms, |_, _| 0.1 + 0.8 * rng.random::<f64>());
        if let Ok(model) = HmmBanditModel::validate(p, mu) {
            // identifiability needs well-separated observation views, not just
            // nonsingularity; resample until the current view is conditioned
            if let Ok(views) = regime_bandits::spectral::population_views(&model) {
                if regime_bandits::linalg::sigma_min(&views.current) > 0.02
                    && model.transition().clone().lu().determinant().abs() > 0.02
                {
                    return model;
                }
            }
        }
    }
}

fn run_pipeline_on_population(model: &HmmBanditModel, seed: u64) -> (f64, f64) {
    let moments = population_moments(model).expect("population moments");
    let mut rng = ChaCha12Rng::seed_from_u64(seed);
    let dec = tensor_decompose(
        &moments.m2,
        &moments.m3,
        model.num_states(),
        &PowerMethodParams::default(),
        &mut rng,
    )
    .expect("decomposition");
    let est = recover_parameters(
        &dec,
        &moments,
        model.num_states(),
        model.num_arms(),
        &RecoveryFloors {
            mu_floor: 1e-6,
            p_floor: 1e-9,
        },
    )
    .expect("recovery");
    let perm = align_permutation(&est.mu_hat, model.mean_rewards());
    let (mu, p) = apply_permutation(&est.mu_hat, &est.p_hat, &perm);
    (
        max_abs(&(mu - model.mean_rewards())),
        max_abs(&(p - model.transition())),
    )
}

#[test]
fn criterion_1_population_oracle_exactness() {
    let start = Instant::now();
    let reference = example_2x2();
    let (err_mu, err_p) = run_pipeline_on_population(&reference, 1);
    assert!(err_mu <= 1e-6, "reference mu error {err_mu}");
    assert!(err_p <= 1e-6, "reference P error {err_p}");

    let mut rng = ChaCha12Rng::seed_from_u64(1001);
    let mut checked = 0;
    for states in [2usize, 3] {
        for arms in [2usize, 3] {
            for _ in 0..5 {
                let model = random_model(states, arms, &mut rng);
                let (err_mu, err_p) = run_pipeline_on_population(&model, 7 + checked);
                assert!(
                    err_mu <= 1e-6 && err_p <= 1e-6,
                    "M={states} I={arms}: mu {err_mu}, P {err_p}"
                );
                checked += 1;
            }
        }
    }
    assert_eq!(checked, 20);
    let elapsed = start.elapsed();
    assert!(
        elapsed.as_secs_f64() < 10.0,
        "runtime budget exceeded: {elapsed:?}"
    );
    println!(
        "PASS criterion 1: population-moment pipeline exact (<= 1e-6) on reference + 20 random models in {elapsed:.2?}"
    );
}

#[test]
fn criterion_2_finite_sample_recovery() {
    let start = Instant::now();
    let model = example_2x2();
    let mu = model.mean_rewards();
    let p = model.transition();
    let n = 200_000usize;
    let seeds = 20u64;
    let mut passes = 0;
    let mut ratios = Vec::new();

    let estimate = |arms: &[usize], rewards: &[u8], take: usize, seed: u64| {
        let mut segments = ExplorationSegments::new();
        segments.push_segment(
            arms[..take]
                .iter()
                .cloned()
                .zip(rewards[..take].iter().cloned())
                .collect(),
        );
        let mut rng = ChaCha12Rng::seed_from_u64(seed);
        let (est, _) = estimate_from_segments(
            &segments,
            2,
            2,
            &RecoveryFloors::default(),
            &PowerMethodParams::default(),
            &mut rng,
        )
        .expect("estimation");
        let perm = align_permutation(&est.mu_hat, mu);
        apply_permutation(&est.mu_hat, &est.p_hat, &perm)
    };

    for seed in 0..seeds {
        // one long run per seed; the 4n estimate extends the n estimate
        let traj = sample_trajectory(&model, &ArmSource::Uniform, 4 * n, None, &RunRng::new(seed))
            .expect("trajectory");
        let (mu_1, p_1) = estimate(&traj.arms, &traj.rewards, n, seed ^ 0x51ec);
        let err_mu = max_abs(&(mu_1.clone() - mu));
        let err_p = max_abs(&(p_1 - p));
        if err_mu <= 0.05 && err_p <= 0.10 {
            passes += 1;
        }
        let (mu_4, _) = estimate(&traj.arms, &traj.rewards, 4 * n, seed ^ 0x51ec);
        ratios.push(err_mu / max_abs(&(mu_4 - mu)));
    }
    ratios.sort_by(|a, b| a.partial_cmp(b).unwrap());
    let median_ratio = ratios[ratios.len() / 2];

    assert!(passes >= 18, "only {passes}/20 seeds within thresholds");
    assert!(
        (1.6..=2.6).contains(&median_ratio),
        "sqrt(n) rate: median error ratio {median_ratio}"
    );
    let elapsed = start.elapsed();
    assert!(
        elapsed.as_secs_f64() < 120.0,
        "runtime budget exceeded: {elapsed:?}"
    );
    println!(
        "PASS criterion 2: finite-sample recovery {passes}/20 within (0.05, 0.10), 4x-sample error ratio median {median_ratio:.2} in [1.6, 2.6], in {elapsed:.2?}"
    );
}

#[test]
fn criterion_3_planner_correctness() {
    let start = Instant::now();
    let model = example_2x2();
    let grid = Arc::new(SimplexGrid::build(2, 100, DEFAULT_GRID_BUDGET).unwrap());
    let sol = solve_average_reward(&model, &grid, 1e-6, 100_000).unwrap();
    assert!(sol.converged);

    // derived sandwich: best fixed arm under omega vs full-information oracle
    let lower = 12.1 / 17.0;
    let upper = 12.9 / 17.0;
    assert!(
        sol.rho >= lower - 1e-4 && sol.rho <= upper + 1e-4,
        "rho {} outside [{lower}, {upper}]",
        sol.rho
    );

    // rollout of the returned policy over 10^6 steps matches rho within 0.01
    let rng = RunRng::new(33);
    let mut env = Environment::from_stationary(&model, &rng).unwrap();
    let mut belief = Belief::uniform(2);
    let steps = 1_000_000;
    let mut total = 0u64;
    for _ in 0..steps {
        let arm = sol.action_for(&belief);
        let r = env.step(arm);
        total += u64::from(r);
        belief = belief_update(&model, &belief, arm, r).unwrap();
    }
    let rollout = total as f64 / steps as f64;
    assert!(
        (rollout - sol.rho).abs() <= 0.01,
        "rollout {rollout} vs rho {}",
        sol.rho
    );

    // grid refinement d = 100 -> 200 moves rho by at most 0.01
    let fine = Arc::new(SimplexGrid::build(2, 200, DEFAULT_GRID_BUDGET).unwrap());
    let sol_fine = solve_average_reward(&model, &fine, 1e-6, 100_000).unwrap();
    assert!(
        (sol_fine.rho - sol.rho).abs() <= 0.01,
        "refinement moved rho by {}",
        (sol_fine.rho - sol.rho).abs()
    );

    let elapsed = start.elapsed();
    assert!(
        elapsed.as_secs_f64() < 60.0,
        "runtime budget exceeded: {elapsed:?}"
    );
    println!(
        "PASS criterion 3: rho {:.6} in sandwich, rollout within 0.01, refinement delta {:.2e}, in {elapsed:.2?}",
        sol.rho,
        (sol_fine.rho - sol.rho).abs()
    );
}

#[test]
fn criterion_4_bias_span_bound() {
    let start = Instant::now();
    let model = example_2x2();
    let grid = Arc::new(SimplexGrid::build(2, 100, DEFAULT_GRID_BUDGET).unwrap());
    let sol = solve_average_reward(&model, &grid, 1e-6, 100_000).unwrap();
    let span = bias_span(&sol);
    let bound = bias_span_bound(0.25).unwrap();
    assert!((bound - 745.5218066).abs() < 1e-3);
    assert!(span <= bound, "span {span} above D(1/4) = {bound}");

    let mut prev = f64::INFINITY;
    let mut eps = 0.05;
    while eps <= 0.451 {
        let d = bias_span_bound(eps).unwrap();
        assert!(d < prev, "D not decreasing at eps {eps}");
        prev = d;
        eps += 0.05;
    }
    println!(
        "PASS criterion 4: span(h) = {span:.4} <= D(1/4) = {bound:.1}; D decreasing on [0.05, 0.45], in {:.2?}",
        start.elapsed()
    );
}

#[test]
fn criterion_5_belief_robustness() {
    let start = Instant::now();
    let model = example_2x2();
    let constants = belief_error_constants(&model).unwrap();
    assert!((constants.l1 - 720.0).abs() < 1e-9);
    assert!((constants.l2 - (288.0 + 2.0_f64.sqrt())).abs() < 1e-9);

    let mut rng = ChaCha12Rng::seed_from_u64(55);
    let b1 = Belief::uniform(2);

    // perturbed-model inequality on 100 random (model, history) draws
    for trial in 0..100 {
        // zero-sum row perturbations keep P stochastic and within 0.05
        let mut p = model.transition().clone();
        for r in 0..2 {
            let d = 0.05 * (2.0 * rng.random::<f64>() - 1.0);
            p[(r, 0)] += d;
            p[(r, 1)] -= d;
        }
        let mu = model
            .mean_rewards()
            .map(|x| (x + 0.05 * (2.0 * rng.random::<f64>() - 1.0)).clamp(0.02, 0.98));
        let perturbed = HmmBanditModel::validate(p, mu).expect("perturbed model valid");

        let traj = sample_trajectory(
            &model,
            &ArmSource::Uniform,
            50,
            None,
            &RunRng::new(9000 + trial),
        )
        .unwrap();
        let history: Vec<(usize, u8)> = traj
            .arms
            .iter()
            .cloned()
            .zip(traj.rewards.iter().cloned())
            .collect();
        let truth = replay_beliefs(&model, &b1, &history).unwrap();
        let approx = replay_beliefs(&perturbed, &b1, &history).unwrap();

        let mu_dist = max_column_l1(&(perturbed.mean_rewards() - model.mean_rewards()));
        let p_dist = frobenius(&(perturbed.transition() - model.transition()));
        let budget = constants.l1 * mu_dist + constants.l2 * p_dist;
        for (a, b) in truth.beliefs.iter().zip(&approx.beliefs) {
            assert!(
                a.l1_distance(b) <= budget,
                "belief error {} above budget {budget}",
                a.l1_distance(b)
            );
        }
    }

    // exponential forgetting with rate 2/3 and prefactor 6
    let (c4, alpha) = forgetting_constants(&model);
    assert_eq!((c4, alpha), (6.0, 2.0 / 3.0));
    for trial in 0..100u64 {
        let traj =
            sample_trajectory(&model, &ArmSource::Uniform, 50, None, &RunRng::new(500 + trial))
                .unwrap();
        let history: Vec<(usize, u8)> = traj
            .arms
            .iter()
            .cloned()
            .zip(traj.rewards.iter().cloned())
            .collect();
        let mut a1: Vec<f64> = (0..2).map(|_| rng.random::<f64>() + 1e-3).collect();
        let s: f64 = a1.iter().sum();
        a1.iter_mut().for_each(|x| *x /= s);
        let b_a = Belief::new(a1).unwrap();
        let mut b2: Vec<f64> = (0..2).map(|_| rng.random::<f64>() + 1e-3).collect();
        let s: f64 = b2.iter().sum();
        b2.iter_mut().for_each(|x| *x /= s);
        let b_b = Belief::new(b2).unwrap();

        let ra = replay_beliefs(&model, &b_a, &history).unwrap();
        let rb = replay_beliefs(&model, &b_b, &history).unwrap();
        let d0 = b_a.l1_distance(&b_b);
        for (t, (x, y)) in ra.beliefs.iter().zip(&rb.beliefs).enumerate() {
            let bound = c4 * alpha.powi(t as i32 - 1) * d0 + 1e-12;
            assert!(
                x.l1_distance(y) <= bound,
                "forgetting violated at t = {t}: {} > {bound}",
                x.l1_distance(y)
            );
        }
    }
    println!(
        "PASS criterion 5: belief-error inequality (L1 = 720, L2 = 289.41) and forgetting (C4 = 6, alpha = 2/3) on 100 + 100 trials, in {:.2?}",
        start.elapsed()
    );
}

#[test]
fn criterion_6_episode_schedule() {
    let start = Instant::now();
    let mut rng = ChaCha12Rng::seed_from_u64(99);
    for _ in 0..1000 {
        let tau1 = rng.random_range(3..250usize);
        let tau2 = rng.random_range(1..250usize);
        let horizon = rng.random_range(1..30_000usize);
        let s = episode_schedule(tau1, tau2, horizon).unwrap();
        assert!(s.partitions_horizon(), "partition {tau1} {tau2} {horizon}");
        assert!(
            s.episode_bound_holds(),
            "bound tau1={tau1} tau2={tau2} T={horizon} K={}",
            s.num_episodes()
        );
    }
    println!(
        "PASS criterion 6: schedule partitions the horizon and episode-count bound holds on 1000 random configurations, in {:.2?}",
        start.elapsed()
    );
}

#[test]
fn criterion_7_slope_separation() {
    let start = Instant::now();
    let config_path = std::path::Path::new(env!("CARGO_MANIFEST_DIR"))
        .join("../../configs/desk_bench.toml");
    let config = ExperimentConfig::load(&config_path).expect("shipped bench config parses");
    let model =
        regime_bandits::bench::load_experiment_model(&config, &config_path).expect("model loads");
    let summary = run_experiment(&config, &model).expect("sweep runs");
    assert_eq!(summary.failed_runs, 0, "runs failed");

    let seeu = summary.slope_of("seeu").expect("seeu slope");
    assert!(
        (0.55..=0.85).contains(&seeu.slope),
        "seeu slope {} outside [0.55, 0.85]",
        seeu.slope
    );
    for baseline in ["epsilon_greedy", "sw_ucb", "exp3s"] {
        let fit = summary.slope_of(baseline).expect("baseline slope");
        assert!(
            fit.slope >= 0.90,
            "{baseline} slope {} below 0.90",
            fit.slope
        );
    }

    // ordering at the longest horizon: seeu strictly below every baseline at
    // two combined standard errors
    let top = *config.t_grid.last().unwrap();
    let seeu_row = summary.mean_at("seeu", top).expect("seeu row");
    for baseline in ["epsilon_greedy", "sw_ucb", "exp3s"] {
        let row = summary.mean_at(baseline, top).expect("baseline row");
        let margin = 2.0 * (seeu_row.stderr.powi(2) + row.stderr.powi(2)).sqrt();
        assert!(
            seeu_row.mean + margin < row.mean,
            "seeu {} + {margin} not below {baseline} {}",
            seeu_row.mean,
            row.mean
        );
    }

    let elapsed = start.elapsed();
    assert!(
        elapsed.as_secs_f64() < 1800.0,
        "runtime budget exceeded: {elapsed:?}"
    );
    let slopes: Vec<String> = summary
        .slopes
        .iter()
        .filter_map(|(a, f)| f.map(|f| format!("{a} {:.3}", f.slope)))
        .collect();
    println!(
        "PASS criterion 7: slopes [{}], seeu regret at T = {top} is {:.0} vs epsilon_greedy {:.0}, in {elapsed:.2?}",
        slopes.join(", "),
        seeu_row.mean,
        summary.mean_at("epsilon_greedy", top).unwrap().mean
    );
}

#[test]
fn criterion_8_cli_determinism() {
    // Every CLI command, run twice with identical flags and seed, must
    // produce byte-identical output files (and byte-identical stdout).
    let start = Instant::now();
    let bin = env!("CARGO_BIN_EXE_regime-bandits");
    let model_path = std::path::Path::new(env!("CARGO_MANIFEST_DIR"))
        .join("../../models/paper_2x2.model");
    let model = model_path.to_str().unwrap();
    let base = std::env::temp_dir().join(format!("rb-acceptance-{}", std::process::id()));
    std::fs::create_dir_all(&base).unwrap();

    let run = |args: &[String], tag: &str| -> (String, Vec<(String, Vec<u8>)>) {
        let dir = base.join(tag);
        std::fs::create_dir_all(&dir).unwrap();
        let expanded: Vec<String> = args
            .iter()
            .map(|a| a.replace("{OUT}", dir.to_str().unwrap()))
            .collect();
        let output = std::process::Command::new(bin)
            .args(&expanded)
            .output()
            .expect("CLI runs");
        assert!(
            output.status.success(),
            "{tag}: CLI failed: {}",
            String::from_utf8_lossy(&output.stderr)
        );
        let mut files: Vec<(String, Vec<u8>)> = Vec::new();
        let mut stack = vec![dir.clone()];
        while let Some(d) = stack.pop() {
            for entry in std::fs::read_dir(&d).unwrap() {
                let path = entry.unwrap().path();
                if path.is_dir() {
                    stack.push(path);
                } else {
                    let rel = path.strip_prefix(&dir).unwrap().display().to_string();
                    files.push((rel, std::fs::read(&path).unwrap()));
                }
            }
        }
        files.sort();
        (String::from_utf8_lossy(&output.stdout).to_string(), files)
    };

    let bench_config = base.join("bench.toml");
    std::fs::write(
        &bench_config,
        format!(
            r#"model = "{model}"
t_grid = [300, 600, 1200]
runs = 2
master_seed = 5
rho_star_grid = 60

[[algorithms]]
kind = "seeu"
tau1 = 30
tau2 = 60
grid = 40
candidates = 4

[[algorithms]]
kind = "epsilon_greedy"
epsilon = 0.1
"#
        ),
    )
    .unwrap();
    let slope_csv = base.join("points.csv");
    std::fs::write(&slope_csv, "100,21.5\n1000,100.1\n10000,465\n").unwrap();
    let history_csv = base.join("history.csv");
    std::fs::write(&history_csv, "t,arm,reward\n1,0,1\n2,1,0\n3,0,0\n").unwrap();

    let s = |v: &[&str]| -> Vec<String> { v.iter().map(|x| x.to_string()).collect() };
    let commands: Vec<(&str, Vec<String>)> = vec![
        (
            "simulate",
            s(&[
                "simulate", "--model", model, "--steps", "500", "--seed", "3", "--out",
                "{OUT}/traj.csv",
            ]),
        ),
        (
            "estimate",
            s(&[
                "estimate",
                "--model",
                model,
                "--samples",
                "20000",
                "--seed",
                "3",
                "--out",
                "{OUT}/estimate.toml",
                "--dump-moments",
                "{OUT}/moments.csv",
            ]),
        ),
        (
            "plan",
            s(&[
                "plan", "--model", model, "--grid", "60", "--tol", "1e-6", "--out",
                "{OUT}/policy.csv",
            ]),
        ),
        (
            "seeu",
            s(&[
                "seeu", "--model", model, "--T", "800", "--tau1", "30", "--tau2", "60", "--grid",
                "40", "--candidates", "4", "--seed", "3", "--out", "{OUT}",
            ]),
        ),
        (
            "baseline",
            s(&[
                "baseline",
                "--kind",
                "sw_ucb",
                "--model",
                model,
                "--T",
                "2000",
                "--window",
                "100",
                "--seed",
                "3",
                "--out",
                "{OUT}/sw.csv",
            ]),
        ),
        (
            "bench",
            vec![
                "bench".into(),
                "--config".into(),
                bench_config.display().to_string(),
                "--out".into(),
                "{OUT}".into(),
            ],
        ),
        (
            "slope",
            vec![
                "slope".into(),
                "--in".into(),
                slope_csv.display().to_string(),
            ],
        ),
        (
            "beliefs",
            vec![
                "beliefs".into(),
                "--model".into(),
                model.into(),
                "--history".into(),
                history_csv.display().to_string(),
                "--out".into(),
                "{OUT}/beliefs.csv".into(),
            ],
        ),
    ];

    for (name, args) in &commands {
        let (out_a, files_a) = run(args, &format!("{name}-a"));
        let (out_b, files_b) = run(args, &format!("{name}-b"));
        assert_eq!(out_a, out_b, "{name}: stdout differs between reruns");
        assert_eq!(
            files_a.len(),
            files_b.len(),
            "{name}: file sets differ between reruns"
        );
        for ((name_a, bytes_a), (name_b, bytes_b)) in files_a.iter().zip(&files_b) {
            assert_eq!(name_a, name_b, "{name}: file names differ");
            assert_eq!(
                bytes_a, bytes_b,
                "{name}: {name_a} differs byte-wise between reruns"
            );
        }
        assert!(
            !args.contains(&"{OUT}".to_string()) || !files_a.is_empty(),
            "{name}: produced no files"
        );
    }

    std::fs::remove_dir_all(&base).ok();
    println!(
        "PASS criterion 8: {} CLI commands byte-identical across reruns, in {:.2?}",
        commands.len(),
        start.elapsed()
    );
}
