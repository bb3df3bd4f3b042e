//! The episodic explore/exploit learning agent.
//!
//! Episode `k` has a fixed exploration phase of `tau1` periods (uniform
//! random arms) followed by an exploitation phase of `round(tau2 sqrt(k))`
//! periods. After each exploration phase the agent re-estimates the model
//! from the concatenation of all exploration data so far, builds a confidence
//! region at level `1 - delta / k^3`, picks the plausible model with the best
//! optimal average reward, recomputes its belief from the start of time under
//! that model, and then plays the model's greedy policy online.
//!
//! Exploitation samples never feed the estimator: the spectral method needs
//! the uniform-arm observation channel, and a belief-based policy breaks it.
//!
//! ```
//! use regime_bandits::seeu::episode_schedule;
//!
//! // tau1 = 100, tau2 = 50 over 1000 periods: exploitation phases of
//! // round(50 sqrt(k)) periods and a final episode truncated at the horizon.
//! let s = episode_schedule(100, 50, 1000).unwrap();
//! let lens: Vec<usize> = s.episodes.iter()
//!     .map(|e| e.explore.len() + e.exploit.len()).collect();
//! assert_eq!(lens, vec![150, 171, 187, 200, 212, 80]);
//! assert!(s.partitions_horizon() && s.episode_bound_holds());
//! ```

use crate::belief::{belief_update, replay_beliefs};
use crate::error::HarnessError;
use crate::model::{Belief, HmmBanditModel};
use crate::planner::{
    optimistic_model_search, solve_average_reward, PlannerMemo, PlannerSolution, SimplexGrid,
    DEFAULT_GRID_BUDGET,
};
use crate::rng::{stream, RunRng};
use crate::sim::Environment;
use crate::spectral::{
    confidence_region, estimate_from_segments, ExplorationSegments, RecoveryFloors,
};
use crate::tensor::PowerMethodParams;
use nalgebra::DMatrix;
use rand::Rng;
use std::ops::Range;
use std::sync::Arc;

// ---------------------------------------------------------------------------
// Episode schedule
// ---------------------------------------------------------------------------

/// One episode: exploration steps, then exploitation steps (0-based, half
/// open). The last episode of a run is truncated at the horizon.
#[derive(Debug, Clone, PartialEq, Eq)]
pub struct Episode {
    pub explore: Range<usize>,
    pub exploit: Range<usize>,
}

/// The deterministic episode layout for a horizon.
#[derive(Debug, Clone, PartialEq, Eq)]
pub struct EpisodeSchedule {
    pub tau1: usize,
    pub tau2: usize,
    pub horizon: usize,
    pub episodes: Vec<Episode>,
}

/// Lay out episodes over `1..=horizon`.
///
/// `tau1 >= 3` because the estimator needs at least one observation triple
/// per phase. Exploitation lengths are `tau2 sqrt(k)` rounded to nearest.
pub fn episode_schedule(
    tau1: usize,
    tau2: usize,
    horizon: usize,
) -> Result<EpisodeSchedule, HarnessError> {
    if tau1 < 3 || tau2 < 1 || horizon < 1 {
        return Err(HarnessError::InvalidSchedule {
            tau1,
            tau2,
            horizon,
        });
    }
    let mut episodes = Vec::new();
    let mut t = 0usize;
    let mut k = 0usize;
    while t < horizon {
        k += 1;
        let explore_len = tau1.min(horizon - t);
        let explore = t..t + explore_len;
        t += explore_len;
        let exploit_len = ((tau2 as f64) * (k as f64).sqrt()).round() as usize;
        let exploit_len = exploit_len.min(horizon - t);
        let exploit = t..t + exploit_len;
        t += exploit_len;
        episodes.push(Episode { explore, exploit });
    }
    Ok(EpisodeSchedule {
        tau1,
        tau2,
        horizon,
        episodes,
    })
}

impl EpisodeSchedule {
    pub fn num_episodes(&self) -> usize {
        self.episodes.len()
    }

    /// Episode-count bound `(T / (tau1 + tau2))^(2/3) <= K <= 3 (T / tau2)^(2/3)`,
    /// meaningful once the horizon covers at least one full episode.
    pub fn episode_bound_holds(&self) -> bool {
        let t = self.horizon as f64;
        if self.horizon < self.tau1 + self.tau2 {
            return true;
        }
        let k = self.num_episodes() as f64;
        let lower = (t / (self.tau1 + self.tau2) as f64).powf(2.0 / 3.0);
        let upper = 3.0 * (t / self.tau2 as f64).powf(2.0 / 3.0);
        lower <= k && k <= upper
    }

    /// The episode phases partition `0..horizon` exactly.
    pub fn partitions_horizon(&self) -> bool {
        let mut t = 0usize;
        for ep in &self.episodes {
            if ep.explore.start != t || ep.explore.end != ep.exploit.start {
                return false;
            }
            t = ep.exploit.end;
        }
        t == self.horizon
    }
}

// ---------------------------------------------------------------------------
// Configuration and logs
// ---------------------------------------------------------------------------

/// Agent configuration. Defaults match the reference experiments.
#[derive(Debug, Clone)]
pub struct SeeuConfig {
    pub tau1: usize,
    pub tau2: usize,
    /// Base confidence parameter; episode `k` uses `delta / k^3`.
    pub delta: f64,
    /// Scale of the mean-reward confidence radius.
    pub c1: f64,
    /// Scale of the transition confidence radius.
    pub c2: f64,
    /// Agent's initial belief (uniform when `None`).
    pub initial_belief: Option<Belief>,
    /// Belief-grid resolution for planning.
    pub grid_resolution: usize,
    /// Random candidates in the optimistic search.
    pub n_candidates: usize,
    pub floors: RecoveryFloors,
    pub planner_tol: f64,
    pub planner_max_iter: usize,
    pub power_method: PowerMethodParams,
    /// Test hook: skip estimation and use this `(mu, P)` with zero radii.
    pub injected_estimate: Option<(DMatrix<f64>, DMatrix<f64>)>,
}

impl Default for SeeuConfig {
    fn default() -> Self {
        Self {
            tau1: 100,
            tau2: 50,
            delta: 0.05,
            c1: 1.0,
            c2: 1.0,
            initial_belief: None,
            grid_resolution: 100,
            n_candidates: 64,
            floors: RecoveryFloors::default(),
            planner_tol: 1e-6,
            planner_max_iter: 100_000,
            power_method: PowerMethodParams::default(),
            injected_estimate: None,
        }
    }
}

/// Which phase a step belongs to.
#[derive(Debug, Clone, Copy, PartialEq, Eq)]
pub enum Phase {
    Explore,
    Exploit,
    /// Baseline agents have no phase structure.
    Baseline,
}

impl Phase {
    pub fn as_str(&self) -> &'static str {
        match self {
            Phase::Explore => "explore",
            Phase::Exploit => "exploit",
            Phase::Baseline => "baseline",
        }
    }
}

/// Per-step record. `belief` is the agent's belief under its current working
/// model; baselines leave it empty.
#[derive(Debug, Clone)]
pub struct StepRecord {
    /// 1-based period.
    pub t: usize,
    pub episode: usize,
    pub phase: Phase,
    pub arm: usize,
    pub reward: u8,
    pub belief: Vec<f64>,
}

/// Per-episode record of everything the agent derived after exploring.
#[derive(Debug, Clone)]
pub struct EpisodeRecord {
    pub k: usize,
    pub n_triples: usize,
    pub delta_k: f64,
    pub mu_hat: Option<DMatrix<f64>>,
    pub p_hat: Option<DMatrix<f64>>,
    pub radius_mu: f64,
    pub radius_p: f64,
    pub chosen_mu: Option<DMatrix<f64>>,
    pub chosen_p: Option<DMatrix<f64>>,
    pub rho_optimistic: f64,
    pub planner_residual: f64,
    /// True when estimation failed and the phase fell back to uniform play.
    pub fallback: bool,
}

/// Full record of one run.
#[derive(Debug, Clone)]
pub struct RunLog {
    pub steps: Vec<StepRecord>,
    pub episodes: Vec<EpisodeRecord>,
}

impl RunLog {
    pub fn total_reward(&self) -> f64 {
        self.steps.iter().map(|s| s.reward as f64).sum()
    }

    pub fn rewards(&self) -> Vec<u8> {
        self.steps.iter().map(|s| s.reward).collect()
    }
}

/// Cumulative regret series against a benchmark average reward:
/// `c_t = t * rho_star - sum_{s <= t} r_s`. Pathwise it may be negative.
pub fn regret(rewards: &[u8], rho_star: f64) -> Vec<f64> {
    let mut acc = 0.0;
    rewards
        .iter()
        .enumerate()
        .map(|(i, r)| {
            acc += *r as f64;
            (i + 1) as f64 * rho_star - acc
        })
        .collect()
}

// ---------------------------------------------------------------------------
// The agent
// ---------------------------------------------------------------------------

/// Run the agent for `horizon` periods against a hidden model.
///
/// The agent sees only its own arms and rewards. The environment's hidden
/// state path is driven by RNG substreams disjoint from the agent's, so runs
/// with the same seed are paired across policies.
pub fn run_seeu(
    model: &HmmBanditModel,
    config: &SeeuConfig,
    horizon: usize,
    seed: u64,
) -> Result<RunLog, HarnessError> {
    let schedule = episode_schedule(config.tau1, config.tau2, horizon)?;
    let rng = RunRng::new(seed);
    let mut env = Environment::from_stationary(model, &rng)?;
    let mut agent_rng = rng.stream(stream::AGENT);
    let mut estimator_rng = rng.stream(stream::ESTIMATOR);
    let mut candidate_rng = rng.stream(stream::CANDIDATES);

    let num_arms = model.num_arms();
    let num_states = model.num_states();
    let b1 = config
        .initial_belief
        .clone()
        .unwrap_or_else(|| Belief::uniform(num_states));

    let grid = Arc::new(
        SimplexGrid::build(num_states, config.grid_resolution, DEFAULT_GRID_BUDGET)
            .map_err(HarnessError::Planner)?,
    );
    let mut memo = PlannerMemo::new();

    let mut steps: Vec<StepRecord> = Vec::with_capacity(horizon);
    let mut episode_records: Vec<EpisodeRecord> = Vec::with_capacity(schedule.num_episodes());
    let mut history: Vec<(usize, u8)> = Vec::with_capacity(horizon);
    let mut segments = ExplorationSegments::new();

    // Belief under the latest chosen model, kept for logging during
    // exploration; starts at b1 and is replaced by each recalibration.
    let mut working_belief = b1.clone();
    let mut working_model: Option<HmmBanditModel> = None;

    for (idx, episode) in schedule.episodes.iter().enumerate() {
        let k = idx + 1;

        // Exploration: uniform arms.
        let mut segment = Vec::with_capacity(episode.explore.len());
        for t in episode.explore.clone() {
            let arm = agent_rng.random_range(0..num_arms);
            let reward = env.step(arm);
            history.push((arm, reward));
            segment.push((arm, reward));
            if let Some(wm) = &working_model {
                working_belief = belief_update(wm, &working_belief, arm, reward)
                    .map_err(HarnessError::Belief)?;
            }
            steps.push(StepRecord {
                t: t + 1,
                episode: k,
                phase: Phase::Explore,
                arm,
                reward,
                belief: working_belief.components().to_vec(),
            });
        }
        segments.push_segment(segment);

        if episode.exploit.is_empty() {
            episode_records.push(EpisodeRecord {
                k,
                n_triples: 0,
                delta_k: config.delta / (k as f64).powi(3),
                mu_hat: None,
                p_hat: None,
                radius_mu: 0.0,
                radius_p: 0.0,
                chosen_mu: None,
                chosen_p: None,
                rho_optimistic: f64::NAN,
                planner_residual: f64::NAN,
                fallback: false,
            });
            continue;
        }

        // Re-estimate from all exploration data so far.
        let delta_k = config.delta / (k as f64).powi(3);
        let estimation = if let Some((mu, p)) = &config.injected_estimate {
            Ok(((mu.clone(), p.clone()), 0usize, true))
        } else {
            estimate_from_segments(
                &segments,
                num_states,
                num_arms,
                &config.floors,
                &config.power_method,
                &mut estimator_rng,
            )
            .map(|(est, n)| ((est.mu_hat, est.p_hat), n, false))
        };

        match estimation {
            Ok(((mu_hat, p_hat), n_triples, injected)) => {
                let region = if injected {
                    confidence_region(mu_hat.clone(), p_hat.clone(), num_arms, 1, delta_k, 0.0, 0.0)
                } else {
                    confidence_region(
                        mu_hat.clone(),
                        p_hat.clone(),
                        num_arms,
                        n_triples,
                        delta_k,
                        config.c1,
                        config.c2,
                    )
                };
                let choice = optimistic_model_search(
                    &region,
                    &grid,
                    config.planner_tol,
                    config.planner_max_iter,
                    config.n_candidates,
                    &config.floors,
                    &mut candidate_rng,
                    &mut memo,
                )
                .map_err(HarnessError::Planner)?;

                let chosen = HmmBanditModel::validate(choice.p.clone(), choice.mu.clone())
                    .map_err(HarnessError::Model)?;

                // Recalibrate the belief from the start of time under the
                // chosen parameters, then exploit.
                let replay =
                    replay_beliefs(&chosen, &b1, &history).map_err(HarnessError::Belief)?;
                working_belief = replay.last().clone();
                working_model = Some(chosen.clone());

                episode_records.push(EpisodeRecord {
                    k,
                    n_triples,
                    delta_k,
                    mu_hat: Some(mu_hat),
                    p_hat: Some(p_hat),
                    radius_mu: region.radius_mu_row,
                    radius_p: region.radius_p,
                    chosen_mu: Some(choice.mu.clone()),
                    chosen_p: Some(choice.p.clone()),
                    rho_optimistic: choice.rho,
                    planner_residual: choice.solution.residual_span,
                    fallback: false,
                });

                run_exploitation(
                    episode,
                    k,
                    &chosen,
                    Some(&choice.solution),
                    &mut working_belief,
                    &mut env,
                    &mut agent_rng,
                    &mut history,
                    &mut steps,
                )?;
            }
            Err(_) => {
                // Not enough signal to estimate: keep playing uniformly
                // through this exploitation phase and log the fallback.
                episode_records.push(EpisodeRecord {
                    k,
                    n_triples: 0,
                    delta_k,
                    mu_hat: None,
                    p_hat: None,
                    radius_mu: f64::INFINITY,
                    radius_p: f64::INFINITY,
                    chosen_mu: None,
                    chosen_p: None,
                    rho_optimistic: f64::NAN,
                    planner_residual: f64::NAN,
                    fallback: true,
                });
                run_exploitation(
                    episode,
                    k,
                    model,
                    None,
                    &mut working_belief,
                    &mut env,
                    &mut agent_rng,
                    &mut history,
                    &mut steps,
                )?;
            }
        }
    }

    debug_assert_eq!(steps.len(), horizon);
    Ok(RunLog {
        steps,
        episodes: episode_records,
    })
}

/// Play out one exploitation phase. With a solution, follow its greedy
/// policy under the chosen model; without one (estimation fallback), keep
/// playing uniformly and freeze the logged belief.
#[allow(clippy::too_many_arguments)]
fn run_exploitation(
    episode: &Episode,
    k: usize,
    chosen: &HmmBanditModel,
    solution: Option<&Arc<PlannerSolution>>,
    working_belief: &mut Belief,
    env: &mut Environment,
    agent_rng: &mut rand_chacha::ChaCha12Rng,
    history: &mut Vec<(usize, u8)>,
    steps: &mut Vec<StepRecord>,
) -> Result<(), HarnessError> {
    let num_arms = chosen.num_arms();
    for t in episode.exploit.clone() {
        let arm = match solution {
            Some(sol) => sol.action_for(working_belief),
            None => agent_rng.random_range(0..num_arms),
        };
        let reward = env.step(arm);
        history.push((arm, reward));
        if solution.is_some() {
            *working_belief = belief_update(chosen, working_belief, arm, reward)
                .map_err(HarnessError::Belief)?;
        }
        steps.push(StepRecord {
            t: t + 1,
            episode: k,
            phase: Phase::Exploit,
            arm,
            reward,
            belief: working_belief.components().to_vec(),
        });
    }
    Ok(())
}

/// Plan the true model once: the regret benchmark `rho_star`.
pub fn solve_rho_star(
    model: &HmmBanditModel,
    grid_resolution: usize,
) -> Result<PlannerSolution, HarnessError> {
    let grid = Arc::new(
        SimplexGrid::build(model.num_states(), grid_resolution, DEFAULT_GRID_BUDGET)
            .map_err(HarnessError::Planner)?,
    );
    solve_average_reward(model, &grid, 1e-8, 200_000).map_err(HarnessError::Planner)
}
