//! Reward ordering between the learner and the reference policies, and the
//! regret bookkeeping checked against a closed-form oracle.

use regime_bandits::baselines::{run_baseline, BaselineConfig, BaselineKind};
use regime_bandits::model::example_2x2;
use regime_bandits::seeu::{regret, run_seeu, solve_rho_star, SeeuConfig};

/// The full-information oracle strictly dominates the learner in mean
/// cumulative reward, beyond two combined standard errors.
///
/// The complementary floor comparison is measured in the regret benchmark:
/// on this instance the best fixed arm already attains the benchmark rate
/// `rho_star` (beliefs never leave the region where one arm is greedy), so a
/// learner paying any exploration cost sits below the best-fixed-arm *path*
/// while still driving its per-period gap to zero. The meaningful floor
/// statement is criterion 7's: the learner's regret grows sublinearly while
/// every stateless learner's grows linearly.
#[test]
fn oracle_dominates_learner_at_two_standard_errors() {
    let model = example_2x2();
    let horizon = 20_000;
    let seeds = 12;
    let cfg = SeeuConfig {
        tau1: 50,
        tau2: 300,
        c1: 0.5,
        c2: 0.5,
        ..Default::default()
    };

    let mut oracle = Vec::new();
    let mut learner = Vec::new();
    for seed in 0..seeds {
        let o = run_baseline(
            &model,
            &BaselineConfig {
                kind: BaselineKind::FullInformationOracle,
            },
            horizon,
            seed,
        )
        .unwrap();
        oracle.push(o.total_reward());
        let l = run_seeu(&model, &cfg, horizon, seed).unwrap();
        learner.push(l.total_reward());
    }
    let stats = |v: &[f64]| {
        let n = v.len() as f64;
        let mean = v.iter().sum::<f64>() / n;
        let var = v.iter().map(|x| (x - mean).powi(2)).sum::<f64>() / (n - 1.0);
        (mean, (var / n).sqrt())
    };
    let (om, ose) = stats(&oracle);
    let (lm, lse) = stats(&learner);
    let margin = 2.0 * (ose * ose + lse * lse).sqrt();
    assert!(
        om - margin > lm,
        "oracle {om} not above learner {lm} at margin {margin}"
    );
}

/// The regret series of a constant arm matches the stationary-average
/// oracle: mean final regret over 50 seeds at T = 10^5 equals
/// `T (rho_star - sum_m omega(m) mu[m][arm])` within three standard errors.
/// For the best fixed arm that target is numerically zero on this instance.
#[test]
fn fixed_arm_regret_matches_stationary_average_oracle() {
    let model = example_2x2();
    let horizon = 100_000;
    let seeds = 50;
    let rho_star = solve_rho_star(&model, 200).unwrap().rho;
    let fixed_arm_value = 12.1 / 17.0; // omega-weighted mean of arm 0

    let mut finals = Vec::new();
    for seed in 0..seeds {
        let log = run_baseline(
            &model,
            &BaselineConfig {
                kind: BaselineKind::BestFixedArm,
            },
            horizon,
            seed,
        )
        .unwrap();
        finals.push(*regret(&log.rewards(), rho_star).last().unwrap());
    }
    let n = finals.len() as f64;
    let mean = finals.iter().sum::<f64>() / n;
    let var = finals.iter().map(|x| (x - mean).powi(2)).sum::<f64>() / (n - 1.0);
    let se = (var / n).sqrt();
    let target = horizon as f64 * (rho_star - fixed_arm_value);
    assert!(
        (mean - target).abs() <= 3.0 * se,
        "mean {mean} vs oracle {target} (se {se})"
    );
}
