//! Controllers: plain linear, truncated linear, the initial safe controller,
//! and the robust safety clamp used by the learning algorithm.

use crate::domain::{Dynamics, SafetyBounds, UncertaintyBox};
use crate::noise::NoiseModel;
use crate::{Error, Result};

/// `u = -K x`.
pub fn linear_control(gain: f64, x: f64) -> f64 {
    -gain * x
}

/// A linear controller truncated so that the *nominal* expected next state
/// `a x + b u` always lands in `[d_lo, d_hi]` exactly.
///
/// The admissible gain range is `[(a-1)/b, a/b]`, which keeps the closed-loop
/// coefficient `a - b K` in `[0, 1]`.
#[derive(Debug, Clone, Copy)]
pub struct TruncatedLinearController {
    pub theta: Dynamics,
    pub gain: f64,
    pub bounds: SafetyBounds,
}

impl TruncatedLinearController {
    pub fn new(theta: Dynamics, gain: f64, bounds: SafetyBounds) -> Result<Self> {
        let lo = (theta.a - 1.0) / theta.b;
        let hi = theta.a / theta.b;
        // Small slack so gains produced by searches at the interval edge pass.
        if gain < lo - 1e-12 || gain > hi + 1e-12 {
            return Err(Error::Domain(format!(
                "gain {gain} outside [{lo}, {hi}] for dynamics ({}, {})",
                theta.a, theta.b
            )));
        }
        Ok(Self {
            theta,
            gain,
            bounds,
        })
    }

    /// Closed-loop coefficient `a - b K`, inside `[0, 1]` by construction.
    pub fn closed_loop(&self) -> f64 {
        self.theta.a - self.theta.b * self.gain
    }

    pub fn control(&self, x: f64) -> f64 {
        trunc_linear_control(self, x)
    }
}

/// Truncated linear control law: linear while the nominal expected next
/// state stays inside the bounds, otherwise clipped exactly onto the
/// violated boundary.
pub fn trunc_linear_control(c: &TruncatedLinearController, x: f64) -> f64 {
    let Dynamics { a, b } = c.theta;
    let expected = (a - b * c.gain) * x;
    if expected > c.bounds.d_hi {
        (c.bounds.d_hi - a * x) / b
    } else if expected < c.bounds.d_lo {
        (c.bounds.d_lo - a * x) / b
    } else {
        -c.gain * x
    }
}

/// The known-safe initial controller: deadbeat for the prior's center,
/// `u = -(a0/b0) x`. Its expected next state under the center dynamics is
/// exactly zero.
pub fn init_control(prior: &UncertaintyBox, x: f64) -> f64 {
    let c = prior.center();
    -(c.a / c.b) * x
}

/// First grid point where the initial controller violates the required safe
/// margin `b*/ln(T)`, if any.
///
/// The check runs on a 1000-point grid over
/// `[d_lo + F^{-1}(1/T^4), d_hi + F^{-1}(1 - 1/T^4)]`.
pub fn init_controller_violation(
    prior: &UncertaintyBox,
    theta_true: &Dynamics,
    bounds: &SafetyBounds,
    noise: &NoiseModel,
    horizon: usize,
) -> Option<f64> {
    let t4 = (horizon as f64).powi(4);
    let p_lo = (1.0 / t4).max(f64::MIN_POSITIVE);
    let q_lo = noise.quantile(p_lo).expect("p in (0,1)");
    let lo = bounds.d_lo + q_lo;
    // All models are symmetric, so F^{-1}(1 - p) = -F^{-1}(p); computing it
    // this way survives 1 - p rounding to 1 at large horizons.
    let hi = bounds.d_hi - q_lo;
    let margin = theta_true.b / (horizon as f64).ln();
    let n = 1000;
    for i in 0..n {
        let x = lo + (hi - lo) * i as f64 / (n - 1) as f64;
        let next = theta_true.a * x + theta_true.b * init_control(prior, x);
        if next < bounds.d_lo + margin || next > bounds.d_hi - margin {
            return Some(x);
        }
    }
    None
}

/// True when the initial controller keeps the required margin on the whole
/// grid for the given true dynamics.
pub fn validate_init_controller(
    prior: &UncertaintyBox,
    theta_true: &Dynamics,
    bounds: &SafetyBounds,
    noise: &NoiseModel,
    horizon: usize,
) -> bool {
    init_controller_violation(prior, theta_true, bounds, noise, horizon).is_none()
}

/// Confidence box plus bounds, the inputs of the robust safety clamp.
#[derive(Debug, Clone, Copy)]
pub struct SafeClampSpec {
    pub ball: UncertaintyBox,
    pub bounds: SafetyBounds,
}

/// Largest `u` with `max_{theta in ball} (a x + b u) <= d_hi`.
///
/// The box maximum is attained at a corner: the worst `a` is `a_hi` for
/// `x >= 0` and `a_lo` otherwise, and the worst `b` depends on the sign of
/// `u`, which makes the closed form a two-branch division.
pub fn safe_upper(spec: &SafeClampSpec, x: f64) -> f64 {
    upper_for(&spec.ball, spec.bounds.d_hi, x)
}

fn upper_for(ball: &UncertaintyBox, d_hi: f64, x: f64) -> f64 {
    let a_worst = if x >= 0.0 { ball.a_hi } else { ball.a_lo };
    let slack = d_hi - a_worst * x;
    if slack > 0.0 {
        slack / ball.b_hi
    } else if slack < 0.0 {
        slack / ball.b_lo
    } else {
        0.0
    }
}

/// Smallest `u` with `min_{theta in ball} (a x + b u) >= d_lo`; the mirror
/// image of [`safe_upper`] under `(x, u, d) -> (-x, -u, -d)`.
pub fn safe_lower(spec: &SafeClampSpec, x: f64) -> f64 {
    -upper_for(&spec.ball, -spec.bounds.d_lo, -x)
}

/// Which side of the safe interval a clamp landed on.
#[derive(Debug, Clone, Copy, PartialEq, Eq, Hash)]
pub enum ClampTag {
    None,
    Upper,
    Lower,
    /// The robust interval crossed (`safe_lower > safe_upper`). Resolved to
    /// the interval midpoint; callers record the incident.
    Infeasible,
}

impl ClampTag {
    pub fn as_str(&self) -> &'static str {
        match self {
            ClampTag::None => "none",
            ClampTag::Upper => "upper",
            ClampTag::Lower => "lower",
            ClampTag::Infeasible => "infeasible",
        }
    }
}

/// Clamps a nominal control into the robust-safe interval.
pub fn clamp_control(u_nominal: f64, spec: &SafeClampSpec, x: f64) -> (f64, ClampTag) {
    let lo = safe_lower(spec, x);
    let hi = safe_upper(spec, x);
    if lo > hi {
        return (0.5 * (lo + hi), ClampTag::Infeasible);
    }
    if u_nominal > hi {
        (hi, ClampTag::Upper)
    } else if u_nominal < lo {
        (lo, ClampTag::Lower)
    } else {
        (u_nominal, ClampTag::None)
    }
}
