//! Closed-form scalar LQR quantities: the infinite-horizon cost of an
//! unconstrained linear controller, its optimal gain, the boundary gain at
//! which truncation becomes vacuous, and the associated stability margins.

use crate::domain::{CostParams, Dynamics};
use crate::{Error, Result};

/// Admissible gain range `[(a-1)/b, a/b]` for a truncated linear controller.
#[derive(Debug, Clone, Copy)]
pub struct GainInterval {
    pub lo: f64,
    pub hi: f64,
}

impl GainInterval {
    pub fn for_dynamics(theta: &Dynamics) -> Self {
        Self {
            lo: (theta.a - 1.0) / theta.b,
            hi: theta.a / theta.b,
        }
    }

    pub fn contains(&self, k: f64) -> bool {
        self.lo <= k && k <= self.hi
    }
}

/// Infinite-horizon average cost of the unconstrained controller `u = -Kx`:
/// `sigma^2 (q + r K^2) / (1 - (a - bK)^2)`, infinite at the random-walk
/// boundary `a - bK = 1`.
pub fn unconstrained_cost(
    theta: &Dynamics,
    gain: f64,
    cost: &CostParams,
    noise_variance: f64,
) -> Result<f64> {
    let interval = GainInterval::for_dynamics(theta);
    if gain < interval.lo - 1e-12 || gain > interval.hi + 1e-12 {
        return Err(Error::Domain(format!(
            "gain {gain} outside [{}, {}]",
            interval.lo, interval.hi
        )));
    }
    let rho = theta.a - theta.b * gain;
    if rho >= 1.0 {
        return Ok(f64::INFINITY);
    }
    Ok(noise_variance * (cost.q + cost.r * gain * gain) / (1.0 - rho * rho))
}

/// Optimal unconstrained gain, the positive root of the stationarity
/// equation `a b r K^2 + (b^2 q + r - a^2 r) K - a b q = 0`.
pub fn f_opt(theta: &Dynamics, cost: &CostParams) -> f64 {
    let Dynamics { a, b } = *theta;
    let CostParams { q, r } = *cost;
    let mid = b * b * q + r - a * a * r;
    let disc = (mid * mid + 4.0 * a * a * b * b * q * r).sqrt();
    (-mid + disc) / (2.0 * a * b * r)
}

/// Gain at which the nominal truncation point sits exactly `w_bar` above
/// `d_hi`, i.e. the threshold between binding and vacuous constraints:
/// `d_hi / (a - bK) - d_hi = w_bar`.
pub fn k_du(theta: &Dynamics, d_hi: f64, w_bar: f64) -> Result<f64> {
    if !w_bar.is_finite() {
        return Err(Error::Domain(
            "boundary gain undefined for unbounded noise".into(),
        ));
    }
    if !(d_hi > 0.0 && w_bar >= 0.0) {
        return Err(Error::Domain(format!(
            "boundary gain needs d_hi > 0 and w_bar >= 0, got ({d_hi}, {w_bar})"
        )));
    }
    Ok((theta.a - d_hi / (d_hi + w_bar)) / theta.b)
}

/// Distances of the optimal closed loop from both ends of `[0, 1]`:
/// `(a - b F_opt, 1 - (a - b F_opt))`. Both are strictly positive for any
/// valid dynamics and cost.
pub fn check_gain_margins(theta: &Dynamics, cost: &CostParams) -> (f64, f64) {
    let rho = theta.a - theta.b * f_opt(theta, cost);
    (rho, 1.0 - rho)
}

#[cfg(test)]
mod tests {
    use super::*;
    use proptest::prelude::*;

    fn dyn_(a: f64, b: f64) -> Dynamics {
        Dynamics::new(a, b).unwrap()
    }

    fn qr(q: f64, r: f64) -> CostParams {
        CostParams::new(q, r).unwrap()
    }

    /// Golden-section minimizer over (lo, hi], used as the independent
    /// oracle for the closed-form gain.
    pub(crate) fn golden_min<F: Fn(f64) -> f64>(f: F, mut lo: f64, mut hi: f64, tol: f64) -> f64 {
        const INV_PHI: f64 = 0.6180339887498949;
        let mut x1 = hi - INV_PHI * (hi - lo);
        let mut x2 = lo + INV_PHI * (hi - lo);
        let mut f1 = f(x1);
        let mut f2 = f(x2);
        while hi - lo > tol {
            if f1 < f2 {
                hi = x2;
                x2 = x1;
                f2 = f1;
                x1 = hi - INV_PHI * (hi - lo);
                f1 = f(x1);
            } else {
                lo = x1;
                x1 = x2;
                f1 = f2;
                x2 = lo + INV_PHI * (hi - lo);
                f2 = f(x2);
            }
        }
        0.5 * (lo + hi)
    }

    #[test]
    fn deadbeat_cost_is_pure_noise() {
        let c = unconstrained_cost(&dyn_(1.0, 1.0), 1.0, &qr(1.0, 1.0), 1.0).unwrap();
        assert!((c - 2.0).abs() < 1e-15);
    }

    #[test]
    fn random_walk_boundary_is_infinite() {
        let c = unconstrained_cost(&dyn_(1.0, 1.0), 0.0, &qr(1.0, 1.0), 1.0).unwrap();
        assert!(c.is_infinite());
    }

    #[test]
    fn formula_evaluation_example() {
        let c = unconstrained_cost(&dyn_(1.0, 1.0), 0.5, &qr(1.0, 1.0), 1.0).unwrap();
        assert!((c - 5.0 / 3.0).abs() < 1e-15);
    }

    #[test]
    fn gain_outside_interval_is_domain_error() {
        assert!(unconstrained_cost(&dyn_(1.0, 1.0), 1.5, &qr(1.0, 1.0), 1.0).is_err());
    }

    #[test]
    fn golden_ratio_gain() {
        let k = f_opt(&dyn_(1.0, 1.0), &qr(1.0, 1.0));
        assert!((k - (5f64.sqrt() - 1.0) / 2.0).abs() < 1e-12);
    }

    #[test]
    fn deadbeat_limit_for_large_state_cost() {
        let k = f_opt(&dyn_(1.0, 1.0), &qr(1e6, 1.0));
        assert!((k - 1.0).abs() < 1e-3);
    }

    #[test]
    fn stationarity_equation_root() {
        // a b r K^2 + (b^2 q + r - a^2 r) K - a b q = 0 at theta = (0.5, 1).
        let theta = dyn_(0.5, 1.0);
        let cost = qr(1.0, 1.0);
        let k = f_opt(&theta, &cost);
        let residual = 0.5 * k * k + (1.0 + 1.0 - 0.25) * k - 0.5;
        assert!(residual.abs() < 1e-12, "residual {residual}");
        let k_gs = golden_min(
            |g| unconstrained_cost(&theta, g, &cost, 1.0).unwrap(),
            -0.5 + 1e-9,
            0.5,
            1e-10,
        );
        assert!((k - k_gs).abs() < 1e-6, "formula {k} vs golden {k_gs}");
    }

    #[test]
    fn k_du_examples() {
        assert!((k_du(&dyn_(1.0, 1.0), 1.0, 1.0).unwrap() - 0.5).abs() < 1e-15);
        assert!(k_du(&dyn_(1.0, 1.0), 1.0, 0.0).unwrap().abs() < 1e-15);
        assert!((k_du(&dyn_(1.0, 2.0), 1.0, 1.0).unwrap() - 0.25).abs() < 1e-15);
        assert!(k_du(&dyn_(1.0, 1.0), 1.0, f64::INFINITY).is_err());
    }

    #[test]
    fn margin_examples() {
        let (lo, hi) = check_gain_margins(&dyn_(1.0, 1.0), &qr(1.0, 1.0));
        assert!((lo - 0.3819660112501051).abs() < 1e-12);
        assert!((hi - 0.6180339887498949).abs() < 1e-12);
        let (lo, _) = check_gain_margins(&dyn_(1.0, 1.0), &qr(1e6, 1.0));
        assert!(lo > 0.0 && lo < 1e-2);
        let (lo, hi) = check_gain_margins(&dyn_(2.0, 1.0), &qr(1.0, 1.0));
        assert!(lo > 0.0 && lo < 1.0 && hi > 0.0 && hi < 1.0);
    }

    proptest! {
        /// The closed form is a strict local minimum of the cost.
        #[test]
        fn f_opt_is_unique_minimizer(
            a in 0.1f64..3.0,
            b in 0.1f64..3.0,
            q in 0.1f64..10.0,
            r in 0.1f64..10.0,
        ) {
            let theta = dyn_(a, b);
            let cost = qr(q, r);
            let k = f_opt(&theta, &cost);
            let interval = GainInterval::for_dynamics(&theta);
            prop_assert!(interval.lo < k && k < interval.hi);
            let j0 = unconstrained_cost(&theta, k, &cost, 1.0).unwrap();
            for delta in [1e-3, 1e-2] {
                for sign in [-1.0, 1.0] {
                    let kd = k + sign * delta;
                    if interval.contains(kd) {
                        let jd = unconstrained_cost(&theta, kd, &cost, 1.0).unwrap();
                        prop_assert!(jd > j0, "J({kd}) = {jd} <= J({k}) = {j0}");
                    }
                }
            }
        }

        /// The boundary-gain definition round-trips to 1e-12.
        #[test]
        fn k_du_round_trip(
            a in 0.2f64..3.0,
            b in 0.2f64..3.0,
            d_hi in 0.05f64..5.0,
            w_bar in 0.01f64..5.0,
        ) {
            let theta = dyn_(a, b);
            let k = k_du(&theta, d_hi, w_bar).unwrap();
            let lhs = d_hi / (a - b * k) - d_hi;
            prop_assert!((lhs - w_bar).abs() < 1e-12 * (1.0 + w_bar));
        }

        /// Margins are strictly positive everywhere on the sampled grid.
        #[test]
        fn margins_strictly_positive(
            a in 0.1f64..3.0,
            b in 0.1f64..3.0,
            q in 0.1f64..10.0,
            r in 0.1f64..10.0,
        ) {
            let (lo, hi) = check_gain_margins(&dyn_(a, b), &qr(q, r));
            prop_assert!(lo > 1e-12 && hi > 1e-12);
        }
    }
}
