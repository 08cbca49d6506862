//! Empirical continuity probes: cost sensitivity to the controller's
//! nominal dynamics and to the starting state, both estimated with common
//! random numbers so that differences are not drowned in sampling noise.

use rand::Rng;
use rayon::prelude::*;

use crate::control::TruncatedLinearController;
use crate::domain::{CostParams, Dynamics, SafetyBounds};
use crate::noise::NoiseModel;
use crate::oracle::k_opt_search;
use crate::stream::{derive_seed, rng_for, tag};
use crate::Result;

/// One row of the dynamics-continuity table.
#[derive(Debug, Clone, Copy)]
pub struct ThetaProbeRow {
    pub eps: f64,
    /// `|J*(theta*, C^theta_{K(theta)}) - J*(theta*, C^{theta*}_{K(theta*)})|`
    /// per-step, under shared noise.
    pub delta: f64,
    /// `delta / eps` (zero at `eps = 0`).
    pub ratio: f64,
}

/// One row of the starting-state-continuity table.
#[derive(Debug, Clone, Copy)]
pub struct StateProbeRow {
    pub delta_x: f64,
    /// `|T J(x) - T J(y)|` under one shared noise sequence.
    pub diff: f64,
    pub ratio: f64,
}

/// Cost continuity in the nominal dynamics: for each `eps`, picks
/// `theta = theta* + eps * dir` (a fixed seeded direction of unit inf-norm),
/// searches the optimal gain for `theta`, and compares the cost of running
/// that controller on the true plant against the true-optimal controller
/// using the same noise streams.
pub fn probe_continuity_in_theta(
    theta_star: &Dynamics,
    bounds: &SafetyBounds,
    cost: &CostParams,
    noise: &NoiseModel,
    eps_list: &[f64],
    probe_horizon: usize,
    reps: usize,
    search_tol: f64,
    seed: u64,
) -> Result<Vec<ThetaProbeRow>> {
    let mut dir_rng = rng_for(seed, &[tag::PROBE, 0]);
    let (mut da, mut db): (f64, f64) = (
        dir_rng.gen::<f64>() * 2.0 - 1.0,
        dir_rng.gen::<f64>() * 2.0 - 1.0,
    );
    let scale = da.abs().max(db.abs());
    da /= scale;
    db /= scale;

    // Shared evaluation streams for every cost difference.
    let eval_streams: Vec<Vec<f64>> = (0..reps)
        .into_par_iter()
        .map(|rep| {
            let mut rng = rng_for(seed, &[tag::PROBE, 1, rep as u64]);
            (0..probe_horizon).map(|_| noise.sample(&mut rng)).collect()
        })
        .collect();
    let mean_cost = |ctrl: &TruncatedLinearController| -> Result<f64> {
        let totals: Result<Vec<f64>> = eval_streams
            .par_iter()
            .map(|seq| {
                crate::oracle::rollout(
                    theta_star,
                    |x| ctrl.control(x),
                    cost,
                    probe_horizon,
                    0.0,
                    seq,
                )
                .map(|r| r.total_cost)
            })
            .collect();
        Ok(totals?.iter().sum::<f64>() / (reps * probe_horizon) as f64)
    };

    let search_seed = derive_seed(seed, &[tag::PROBE, 2]);
    let (k_star, _) = k_opt_search(
        theta_star,
        bounds,
        cost,
        noise,
        probe_horizon,
        reps,
        search_tol,
        search_seed,
    );
    let ctrl_star = TruncatedLinearController::new(*theta_star, k_star, *bounds)?;
    let j_star = mean_cost(&ctrl_star)?;

    let mut rows = Vec::with_capacity(eps_list.len());
    for &eps in eps_list {
        let row = if eps == 0.0 {
            // Identical controller and identical streams: exactly zero.
            ThetaProbeRow {
                eps,
                delta: 0.0,
                ratio: 0.0,
            }
        } else {
            let theta = Dynamics::new(theta_star.a + eps * da, theta_star.b + eps * db)?;
            let (k, _) = k_opt_search(
                &theta,
                bounds,
                cost,
                noise,
                probe_horizon,
                reps,
                search_tol,
                search_seed,
            );
            let ctrl = TruncatedLinearController::new(theta, k, *bounds)?;
            let delta = (mean_cost(&ctrl)? - j_star).abs();
            ThetaProbeRow {
                eps,
                delta,
                ratio: delta / eps,
            }
        };
        rows.push(row);
    }
    Ok(rows)
}

/// Cost continuity in the starting state: rolls the same controller from
/// `x` and `x + delta` with one shared noise sequence.
pub fn probe_continuity_in_state(
    theta_star: &Dynamics,
    ctrl: &TruncatedLinearController,
    cost: &CostParams,
    noise: &NoiseModel,
    x_base: f64,
    deltas: &[f64],
    probe_horizon: usize,
    seed: u64,
) -> Result<Vec<StateProbeRow>> {
    let mut rng = rng_for(seed, &[tag::PROBE, 3]);
    let shared: Vec<f64> = (0..probe_horizon).map(|_| noise.sample(&mut rng)).collect();
    let total = |x0: f64| -> Result<f64> {
        Ok(crate::oracle::rollout(
            theta_star,
            |x| ctrl.control(x),
            cost,
            probe_horizon,
            x0,
            &shared,
        )?
        .total_cost)
    };
    let base = total(x_base)?;
    let mut rows = Vec::with_capacity(deltas.len());
    for &d in deltas {
        let diff = if d == 0.0 {
            0.0
        } else {
            (total(x_base + d)? - base).abs()
        };
        rows.push(StateProbeRow {
            delta_x: d,
            diff,
            ratio: if d == 0.0 { 0.0 } else { diff / d },
        });
    }
    Ok(rows)
}

/// Per-step gap `d_i = |x_i - y_i|` between two trajectories started `d0`
/// apart under the same controller and noise.
pub fn state_gap_trajectory(
    theta_star: &Dynamics,
    ctrl: &TruncatedLinearController,
    x0: f64,
    y0: f64,
    steps: usize,
    noise: &NoiseModel,
    seed: u64,
) -> Vec<f64> {
    let mut rng = rng_for(seed, &[tag::PROBE, 4]);
    let mut gaps = Vec::with_capacity(steps + 1);
    let (mut x, mut y) = (x0, y0);
    gaps.push((x - y).abs());
    for _ in 0..steps {
        let w = noise.sample(&mut rng);
        x = theta_star.a * x + theta_star.b * ctrl.control(x) + w;
        y = theta_star.a * y + theta_star.b * ctrl.control(y) + w;
        gaps.push((x - y).abs());
    }
    gaps
}

#[cfg(test)]
mod tests {
    use super::*;
    use crate::domain::UncertaintyBox;

    fn setup() -> (Dynamics, SafetyBounds, CostParams, NoiseModel) {
        (
            Dynamics::new(1.0, 1.0).unwrap(),
            SafetyBounds::new(-0.8, 0.8, 4096).unwrap(),
            CostParams::new(1.0, 1.0).unwrap(),
            NoiseModel::uniform(1.0).unwrap(),
        )
    }

    #[test]
    fn zero_perturbation_is_exactly_zero() {
        let (theta, bounds, cost, noise) = setup();
        let rows = probe_continuity_in_theta(
            &theta,
            &bounds,
            &cost,
            &noise,
            &[0.0, 0.02],
            1024,
            8,
            1e-3,
            5,
        )
        .unwrap();
        assert_eq!(rows[0].delta, 0.0);
        assert!(rows[1].delta >= 0.0);
    }

    #[test]
    fn zero_state_delta_is_exactly_zero() {
        let (theta, bounds, cost, noise) = setup();
        let ctrl = TruncatedLinearController::new(theta, 0.5, bounds).unwrap();
        let rows =
            probe_continuity_in_state(&theta, &ctrl, &cost, &noise, 0.2, &[0.0, 0.02], 1024, 7)
                .unwrap();
        assert_eq!(rows[0].diff, 0.0);
    }

    #[test]
    fn state_gap_contracts_for_stable_closed_loop() {
        let (theta, bounds, cost, noise) = setup();
        let _ = cost;
        // a - bK = 0.4, comfortably below the contraction threshold.
        let ctrl = TruncatedLinearController::new(theta, 0.6, bounds).unwrap();
        let gaps = state_gap_trajectory(&theta, &ctrl, 0.3, 0.35, 200, &noise, 11);
        assert!(gaps[200] < gaps[0]);
        assert!(
            gaps[200] < 1e-9,
            "gap should have collapsed, got {}",
            gaps[200]
        );
    }

    #[test]
    fn theta_direction_is_deterministic_and_in_prior_scale() {
        let (theta, bounds, cost, noise) = setup();
        let a = probe_continuity_in_theta(&theta, &bounds, &cost, &noise, &[0.04], 512, 4, 1e-3, 9)
            .unwrap();
        let b = probe_continuity_in_theta(&theta, &bounds, &cost, &noise, &[0.04], 512, 4, 1e-3, 9)
            .unwrap();
        assert_eq!(a[0].delta.to_bits(), b[0].delta.to_bits());
        let _ = UncertaintyBox::new(0.9, 1.1, 0.9, 1.1).unwrap();
    }
}
