//! Shared domain types: dynamics, cost weights, safety bounds, uncertainty
//! boxes, and the experiment configuration.
//!
//! All types here are immutable value types and safe to copy across
//! concurrent replications.

use crate::noise::NoiseModel;
use crate::{Error, Result};

/// Scalar plant parameters `(a, b)` for `x_{t+1} = a*x_t + b*u_t + w_t`.
///
/// Both gains are strictly positive by the standing sign convention.
#[derive(Debug, Clone, Copy, PartialEq)]
pub struct Dynamics {
    pub a: f64,
    pub b: f64,
}

impl Dynamics {
    pub fn new(a: f64, b: f64) -> Result<Self> {
        if !(a.is_finite() && b.is_finite() && a > 0.0 && b > 0.0) {
            return Err(Error::InvalidDynamics(format!(
                "need a > 0 and b > 0, got ({a}, {b})"
            )));
        }
        Ok(Self { a, b })
    }

    /// `max(|a - other.a|, |b - other.b|)`.
    pub fn inf_dist(&self, other: &Dynamics) -> f64 {
        (self.a - other.a).abs().max((self.b - other.b).abs())
    }
}

/// Axis-aligned rectangle `[a_lo, a_hi] x [b_lo, b_hi]` of candidate
/// dynamics. Houses both the prior uncertainty set and the confidence
/// balls (an inf-norm ball is a box).
#[derive(Debug, Clone, Copy, PartialEq)]
pub struct UncertaintyBox {
    pub a_lo: f64,
    pub a_hi: f64,
    pub b_lo: f64,
    pub b_hi: f64,
}

impl UncertaintyBox {
    pub fn new(a_lo: f64, a_hi: f64, b_lo: f64, b_hi: f64) -> Result<Self> {
        let ok = a_lo.is_finite()
            && a_hi.is_finite()
            && b_lo.is_finite()
            && b_hi.is_finite()
            && a_lo > 0.0
            && b_lo > 0.0
            && a_hi >= a_lo
            && b_hi >= b_lo;
        if !ok {
            return Err(Error::InvalidBox(format!(
                "need a_hi >= a_lo > 0 and b_hi >= b_lo > 0, got [{a_lo}, {a_hi}] x [{b_lo}, {b_hi}]"
            )));
        }
        Ok(Self {
            a_lo,
            a_hi,
            b_lo,
            b_hi,
        })
    }

    /// Degenerate box holding a single point.
    pub fn degenerate(theta: Dynamics) -> Self {
        Self {
            a_lo: theta.a,
            a_hi: theta.a,
            b_lo: theta.b,
            b_hi: theta.b,
        }
    }

    /// `max(a_hi - a_lo, b_hi - b_lo)`.
    pub fn size(&self) -> f64 {
        (self.a_hi - self.a_lo).max(self.b_hi - self.b_lo)
    }

    /// Box midpoint.
    pub fn center(&self) -> Dynamics {
        Dynamics {
            a: 0.5 * (self.a_lo + self.a_hi),
            b: 0.5 * (self.b_lo + self.b_hi),
        }
    }

    /// Clips an unconstrained estimate into the box. The result is always
    /// valid dynamics because the box has positive lower edges.
    pub fn clip(&self, a: f64, b: f64) -> Dynamics {
        Dynamics {
            a: a.clamp(self.a_lo, self.a_hi),
            b: b.clamp(self.b_lo, self.b_hi),
        }
    }
}

/// Membership test for priors and confidence boxes.
pub fn box_contains(boxed: &UncertaintyBox, theta: &Dynamics) -> bool {
    boxed.a_lo <= theta.a && theta.a <= boxed.a_hi && boxed.b_lo <= theta.b && theta.b <= boxed.b_hi
}

/// Inf-norm ball of radius `eps` around `center`, intersected with `prior`.
///
/// The intersection keeps every downstream consumer inside the prior; it is
/// nonempty whenever `center` lies in the prior. An empty intersection is
/// reported as [`Error::BallOutsidePrior`].
pub fn ball_to_box(center: Dynamics, eps: f64, prior: &UncertaintyBox) -> Result<UncertaintyBox> {
    if eps.is_nan() || eps < 0.0 {
        return Err(Error::Domain(format!(
            "ball radius must be >= 0, got {eps}"
        )));
    }
    let a_lo = (center.a - eps).max(prior.a_lo);
    let a_hi = (center.a + eps).min(prior.a_hi);
    let b_lo = (center.b - eps).max(prior.b_lo);
    let b_hi = (center.b + eps).min(prior.b_hi);
    if a_lo > a_hi || b_lo > b_hi {
        return Err(Error::BallOutsidePrior(center.a, center.b, eps));
    }
    UncertaintyBox::new(a_lo, a_hi, b_lo, b_hi)
}

/// State-space cost weights `q` (state) and `r` (control), both positive.
#[derive(Debug, Clone, Copy, PartialEq)]
pub struct CostParams {
    pub q: f64,
    pub r: f64,
}

impl CostParams {
    pub fn new(q: f64, r: f64) -> Result<Self> {
        if !(q.is_finite() && r.is_finite() && q > 0.0 && r > 0.0) {
            return Err(Error::InvalidCost(format!(
                "need q > 0 and r > 0, got ({q}, {r})"
            )));
        }
        Ok(Self { q, r })
    }
}

/// Expected-state constraint boundaries `d_lo < 0 < d_hi`.
///
/// Construction checks the horizon-dependent width requirement
/// `d_hi - d_lo >= 1/ln(T)`.
#[derive(Debug, Clone, Copy, PartialEq)]
pub struct SafetyBounds {
    pub d_lo: f64,
    pub d_hi: f64,
}

impl SafetyBounds {
    pub fn new(d_lo: f64, d_hi: f64, horizon: usize) -> Result<Self> {
        if !(d_lo.is_finite() && d_hi.is_finite() && d_lo < 0.0 && 0.0 < d_hi) {
            return Err(Error::InvalidBounds(format!(
                "need d_lo < 0 < d_hi, got ({d_lo}, {d_hi})"
            )));
        }
        let min_width = 1.0 / (horizon as f64).ln();
        if d_hi - d_lo < min_width {
            return Err(Error::InvalidBounds(format!(
                "width {} below 1/ln(T) = {min_width} for T = {horizon}",
                d_hi - d_lo
            )));
        }
        Ok(Self { d_lo, d_hi })
    }
}

/// Settings for the Monte Carlo gain-search oracle.
#[derive(Debug, Clone, Copy, PartialEq)]
pub struct OracleSettings {
    /// Rollout horizon floor for the infinite-horizon gain proxy.
    pub eval_horizon: usize,
    /// Number of common-random-number rollouts per gain evaluation.
    pub rollouts: usize,
    /// Gain-search termination tolerance.
    pub tol: f64,
}

impl Default for OracleSettings {
    fn default() -> Self {
        Self {
            eval_horizon: 4096,
            rollouts: 64,
            tol: 1e-3,
        }
    }
}

impl OracleSettings {
    /// Horizon used when approximating the infinite-horizon optimal gain:
    /// the configured floor, or `ceil(sqrt(T))` if that is larger.
    pub fn proxy_horizon(&self, total_horizon: usize) -> usize {
        self.eval_horizon
            .max((total_horizon as f64).sqrt().ceil() as usize)
    }

    pub fn validate(&self) -> Result<()> {
        if self.eval_horizon == 0 || self.rollouts < 2 || self.tol.is_nan() || self.tol <= 0.0 {
            return Err(Error::InvalidConfig(format!(
                "oracle settings need eval_horizon > 0, rollouts >= 2, tol > 0; got {self:?}"
            )));
        }
        Ok(())
    }
}

/// Full description of one experiment instance.
#[derive(Debug, Clone)]
pub struct ExperimentConfig {
    pub horizon: usize,
    pub dynamics_true: Dynamics,
    pub prior: UncertaintyBox,
    pub cost: CostParams,
    pub bounds: SafetyBounds,
    pub noise: NoiseModel,
    /// Ridge regularizer for the least-squares estimator.
    pub ridge: f64,
    /// Branch-switch scale; the small-noise branch is taken when the switch
    /// quantity is at most `c_switch * T^(-1/4)`.
    pub c_switch: f64,
    pub seed: u64,
    pub replications: usize,
    pub oracle: OracleSettings,
}

impl ExperimentConfig {
    /// Cross-field validation. Individual field constructors have already
    /// enforced their own invariants.
    pub fn validate(&self) -> Result<()> {
        if self.horizon < 16 {
            return Err(Error::InvalidConfig(format!(
                "horizon must be at least 16, got {}",
                self.horizon
            )));
        }
        if !box_contains(&self.prior, &self.dynamics_true) {
            return Err(Error::InvalidConfig(format!(
                "true dynamics ({}, {}) outside prior",
                self.dynamics_true.a, self.dynamics_true.b
            )));
        }
        if !(self.ridge.is_finite() && self.ridge > 0.0) {
            return Err(Error::InvalidConfig(format!(
                "ridge must be > 0, got {}",
                self.ridge
            )));
        }
        if !(self.c_switch.is_finite() && self.c_switch > 0.0) {
            return Err(Error::InvalidConfig(format!(
                "c_switch must be > 0, got {}",
                self.c_switch
            )));
        }
        if self.replications == 0 {
            return Err(Error::InvalidConfig("replications must be positive".into()));
        }
        self.oracle.validate()
    }

    /// Default switch scale when the config does not set one.
    pub fn default_c_switch(bounds: &SafetyBounds) -> f64 {
        bounds.d_hi
    }
}

#[cfg(test)]
mod tests {
    use super::*;
    use proptest::prelude::*;

    fn boxed(a_lo: f64, a_hi: f64, b_lo: f64, b_hi: f64) -> UncertaintyBox {
        UncertaintyBox::new(a_lo, a_hi, b_lo, b_hi).unwrap()
    }

    #[test]
    fn contains_center_point() {
        let b = boxed(0.9, 1.1, 0.9, 1.1);
        assert!(box_contains(&b, &Dynamics::new(1.0, 1.0).unwrap()));
    }

    #[test]
    fn rejects_point_outside_a_range() {
        let b = boxed(0.9, 1.1, 0.9, 1.1);
        assert!(!box_contains(&b, &Dynamics::new(1.2, 1.0).unwrap()));
    }

    #[test]
    fn degenerate_box_boundary_counts_as_inside() {
        let b = boxed(1.0, 1.0, 1.0, 1.0);
        assert!(box_contains(&b, &Dynamics::new(1.0, 1.0).unwrap()));
    }

    #[test]
    fn interior_ball() {
        let prior = boxed(0.5, 1.5, 0.5, 1.5);
        let b = ball_to_box(Dynamics::new(1.0, 1.0).unwrap(), 0.1, &prior).unwrap();
        assert_eq!(b, boxed(0.9, 1.1, 0.9, 1.1));
    }

    #[test]
    fn zero_radius_ball_is_degenerate() {
        let prior = boxed(0.5, 1.5, 0.5, 1.5);
        let b = ball_to_box(Dynamics::new(1.0, 1.0).unwrap(), 0.0, &prior).unwrap();
        assert_eq!(b, boxed(1.0, 1.0, 1.0, 1.0));
    }

    #[test]
    fn ball_clipped_at_prior_edge() {
        let prior = boxed(0.5, 1.5, 0.5, 1.5);
        let b = ball_to_box(Dynamics::new(0.55, 1.0).unwrap(), 0.1, &prior).unwrap();
        assert!((b.a_lo - 0.5).abs() < 1e-15);
        assert!((b.a_hi - 0.65).abs() < 1e-15);
        assert!((b.b_lo - 0.9).abs() < 1e-15);
        assert!((b.b_hi - 1.1).abs() < 1e-15);
    }

    #[test]
    fn ball_fully_outside_prior_errors() {
        let prior = boxed(0.5, 1.5, 0.5, 1.5);
        let err = ball_to_box(Dynamics::new(3.0, 1.0).unwrap(), 0.1, &prior);
        assert!(matches!(err, Err(Error::BallOutsidePrior(..))));
    }

    #[test]
    fn bounds_reject_width_below_inverse_log_horizon() {
        // 1/ln(10000) = 0.1086; width 0.1 is too narrow.
        assert!(SafetyBounds::new(-0.05, 0.05, 10_000).is_err());
        assert!(SafetyBounds::new(-0.06, 0.06, 10_000).is_ok());
    }

    proptest! {
        #[test]
        fn ball_nesting_is_monotone(
            a in 0.6f64..1.4,
            b in 0.6f64..1.4,
            e1 in 0.0f64..0.5,
            e2 in 0.0f64..0.5,
        ) {
            let prior = boxed(0.5, 1.5, 0.5, 1.5);
            let (small, large) = if e1 <= e2 { (e1, e2) } else { (e2, e1) };
            let c = Dynamics::new(a, b).unwrap();
            let inner = ball_to_box(c, small, &prior).unwrap();
            let outer = ball_to_box(c, large, &prior).unwrap();
            prop_assert!(outer.a_lo <= inner.a_lo && inner.a_hi <= outer.a_hi);
            prop_assert!(outer.b_lo <= inner.b_lo && inner.b_hi <= outer.b_hi);
        }

        #[test]
        fn ball_always_contains_its_center(
            a in 0.5f64..1.5,
            b in 0.5f64..1.5,
            eps in 0.0f64..1.0,
        ) {
            let prior = boxed(0.5, 1.5, 0.5, 1.5);
            let c = Dynamics::new(a, b).unwrap();
            let ball = ball_to_box(c, eps, &prior).unwrap();
            prop_assert!(box_contains(&ball, &c));
        }
    }
}
