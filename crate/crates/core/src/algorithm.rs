//! The safe LQR learning controller: warm-up with Rademacher dither,
//! regularized least squares, a one-shot small-noise/large-noise branch
//! decision, epoch doubling with optimistic certainty equivalence, and a
//! per-step robust safety clamp.
//!
//! The policy object never sees the true dynamics; it interacts with the
//! plant only through observed states. The plant side lives in
//! [`run_algorithm`].

use rand::Rng;
use rand_chacha::ChaCha12Rng;

use crate::analytic::f_opt;
use crate::control::{
    clamp_control, init_control, linear_control, ClampTag, SafeClampSpec, TruncatedLinearController,
};
use crate::domain::{ball_to_box, ExperimentConfig, UncertaintyBox};
use crate::noise::NoiseModel;
use crate::oracle::KoptOracle;
use crate::stream::{derive_seed, rng_for, tag};
use crate::sysid::{
    confidence_radius, gram_update, ls_estimate, select_optimistic_theta, GramState,
};
use crate::{CostParams, Dynamics, Error, Result, SafetyBounds};

/// Shortest horizon the learner accepts: below this the warm-up dither
/// `1/ln(T)` is too large a bite out of the safety margin.
pub const MIN_HORIZON: usize = 100;

/// Grid resolution per axis for the optimistic parameter selection.
pub const OPTIMISM_GRID: usize = 5;

/// Divergence guard for the closed-loop state.
const DIVERGENCE_LIMIT: f64 = 1e9;

#[derive(Debug, Clone, Copy, PartialEq, Eq)]
pub enum Phase {
    Warmup,
    Epoch(usize),
}

#[derive(Debug, Clone, Copy, PartialEq, Eq)]
pub enum Branch {
    Unset,
    SmallNoise,
    LargeNoise,
}

impl Branch {
    pub fn as_str(&self) -> &'static str {
        match self {
            Branch::Unset => "unset",
            Branch::SmallNoise => "small_noise",
            Branch::LargeNoise => "large_noise",
        }
    }
}

#[derive(Debug, Clone, Copy, PartialEq, Eq)]
pub enum NominalKind {
    UnconstrainedLinear,
    TruncatedLinear,
}

/// Per-epoch bookkeeping: estimates, radius, and the chosen controller.
#[derive(Debug, Clone, Copy)]
pub struct EpochRecord {
    pub s: usize,
    pub t_start: usize,
    pub t_end: usize,
    pub theta_pre: (f64, f64),
    pub theta_hat: Dynamics,
    pub eps: f64,
    pub gain: f64,
    pub kind: NominalKind,
}

/// One executed step of the algorithm.
#[derive(Debug, Clone, Copy)]
pub struct StepRecord {
    pub t: usize,
    pub x: f64,
    pub u: f64,
    pub tag: ClampTag,
    pub phase: Phase,
    /// Current confidence radius (none during warm-up).
    pub eps: Option<f64>,
    /// Current optimistic estimate (none during warm-up).
    pub theta_hat: Option<Dynamics>,
    /// Rademacher dither sign during warm-up.
    pub dither: Option<i8>,
    /// Expected next state under the true dynamics; filled by the plant.
    pub margin_true: f64,
}

/// Clamp outcomes tallied over a run.
#[derive(Debug, Clone, Copy, Default)]
pub struct IncidentCounts {
    pub none: u64,
    pub upper: u64,
    pub lower: u64,
    pub infeasible: u64,
}

impl IncidentCounts {
    pub(crate) fn record(&mut self, tag: ClampTag) {
        match tag {
            ClampTag::None => self.none += 1,
            ClampTag::Upper => self.upper += 1,
            ClampTag::Lower => self.lower += 1,
            ClampTag::Infeasible => self.infeasible += 1,
        }
    }
}

/// What the policy decided at one step.
#[derive(Debug, Clone, Copy)]
pub struct ControlDecision {
    pub u: f64,
    pub tag: ClampTag,
    pub phase: Phase,
    pub eps: Option<f64>,
    pub theta_hat: Option<Dynamics>,
    pub dither: Option<i8>,
}

struct CurrentEpoch {
    s: usize,
    t_end: usize,
    eps: f64,
    theta_hat: Dynamics,
    clamp_ball: UncertaintyBox,
    nominal: Nominal,
}

enum Nominal {
    Linear(f64),
    Truncated(TruncatedLinearController),
}

/// The learning controller. Constructed from everything the algorithm is
/// allowed to know; the true dynamics are deliberately not constructible
/// from this type's inputs.
pub struct SafeLqrPolicy {
    prior: UncertaintyBox,
    bounds: SafetyBounds,
    cost: CostParams,
    horizon: usize,
    warmup_len: usize,
    c_switch: f64,
    alpha: f64,
    w_bar: f64,
    dither_magnitude: f64,
    gram: GramState,
    t: usize,
    branch: Branch,
    theta_wu: Option<Dynamics>,
    f_wu: f64,
    eps0: f64,
    small_noise_ball: Option<UncertaintyBox>,
    switch_value: f64,
    current: Option<CurrentEpoch>,
    epochs: Vec<EpochRecord>,
    pub incidents: IncidentCounts,
    dither_rng: ChaCha12Rng,
    oracle: KoptOracle,
}

impl SafeLqrPolicy {
    /// Builds the policy from the non-privileged parts of a config plus a
    /// replication-level seed for its internal streams.
    pub fn new(
        prior: UncertaintyBox,
        bounds: SafetyBounds,
        cost: CostParams,
        noise: &NoiseModel,
        horizon: usize,
        ridge: f64,
        c_switch: f64,
        settings: &crate::domain::OracleSettings,
        rep_seed: u64,
    ) -> Result<Self> {
        if horizon < MIN_HORIZON {
            return Err(Error::InvalidConfig(format!(
                "horizon {horizon} below the minimum {MIN_HORIZON} (warm-up dither 1/ln(T) needs room)"
            )));
        }
        let warmup_len = (horizon as f64).sqrt().ceil() as usize;
        let oracle = KoptOracle::new(
            bounds,
            cost,
            noise,
            settings,
            horizon,
            derive_seed(rep_seed, &[tag::POLICY_ORACLE]),
        );
        Ok(Self {
            prior,
            bounds,
            cost,
            horizon,
            warmup_len,
            c_switch,
            alpha: noise.subgaussian_alpha(),
            w_bar: noise.support_bound(),
            dither_magnitude: 1.0 / (horizon as f64).ln(),
            gram: GramState::new(ridge),
            t: 0,
            branch: Branch::Unset,
            theta_wu: None,
            f_wu: f64::NAN,
            eps0: f64::NAN,
            small_noise_ball: None,
            switch_value: f64::NAN,
            current: None,
            epochs: Vec::new(),
            incidents: IncidentCounts::default(),
            dither_rng: rng_for(rep_seed, &[tag::DITHER]),
            oracle,
        })
    }

    pub fn from_config(config: &ExperimentConfig, rep_seed: u64) -> Result<Self> {
        Self::new(
            config.prior,
            config.bounds,
            config.cost,
            &config.noise,
            config.horizon,
            config.ridge,
            config.c_switch,
            &config.oracle,
            rep_seed,
        )
    }

    pub fn warmup_len(&self) -> usize {
        self.warmup_len
    }

    pub fn branch(&self) -> Branch {
        self.branch
    }

    pub fn switch_value(&self) -> f64 {
        self.switch_value
    }

    pub fn epochs(&self) -> &[EpochRecord] {
        &self.epochs
    }

    pub fn phase(&self) -> Phase {
        if self.t < self.warmup_len {
            Phase::Warmup
        } else {
            Phase::Epoch(self.current.as_ref().map(|c| c.s).unwrap_or(0))
        }
    }

    /// Chooses the control for the current state.
    pub fn control(&mut self, x: f64) -> ControlDecision {
        if self.t < self.warmup_len {
            self.warmup_control(x)
        } else {
            self.exploit_control(x)
        }
    }

    /// Warm-up law: the initial safe controller plus `±1/ln(T)` dither,
    /// clamped robustly over the whole prior.
    pub fn warmup_control(&mut self, x: f64) -> ControlDecision {
        let phi: i8 = if self.dither_rng.gen::<bool>() { 1 } else { -1 };
        let u_raw = init_control(&self.prior, x) + phi as f64 * self.dither_magnitude;
        let spec = SafeClampSpec {
            ball: self.prior,
            bounds: self.bounds,
        };
        let (u, tag) = clamp_control(u_raw, &spec, x);
        self.incidents.record(tag);
        ControlDecision {
            u,
            tag,
            phase: Phase::Warmup,
            eps: None,
            theta_hat: None,
            dither: Some(phi),
        }
    }

    /// Exploitation law: the branch's nominal controller clamped into the
    /// robust-safe interval for the branch's confidence ball.
    pub fn exploit_control(&mut self, x: f64) -> ControlDecision {
        let current = self.current.as_ref().expect("exploit before epoch setup");
        let u_nominal = match &current.nominal {
            Nominal::Linear(gain) => linear_control(*gain, x),
            Nominal::Truncated(ctrl) => ctrl.control(x),
        };
        let spec = SafeClampSpec {
            ball: current.clamp_ball,
            bounds: self.bounds,
        };
        let (u, tag) = clamp_control(u_nominal, &spec, x);
        self.incidents.record(tag);
        ControlDecision {
            u,
            tag,
            phase: Phase::Epoch(current.s),
            eps: Some(current.eps),
            theta_hat: Some(current.theta_hat),
            dither: None,
        }
    }

    /// Feeds one observed transition back into the estimator and advances
    /// the phase machinery at warm-up/epoch boundaries.
    pub fn observe(&mut self, x: f64, u: f64, x_next: f64) {
        self.gram = gram_update(&self.gram, x, u, x_next);
        self.t += 1;
        if self.t == self.warmup_len {
            self.finish_warmup();
            self.epoch_setup(0);
        } else if let Some(cur) = &self.current {
            if self.t == cur.t_end && self.t < self.horizon {
                let next_s = cur.s + 1;
                self.epoch_setup(next_s);
            }
        }
    }

    /// Switch quantity `S = w_bar + d_hi - d_hi/(a - b F_opt(theta))`,
    /// infinite (never small-noise) for unbounded noise or a non-positive
    /// closed loop.
    pub fn switch_quantity(theta_wu: &Dynamics, cost: &CostParams, w_bar: f64, d_hi: f64) -> f64 {
        if !w_bar.is_finite() {
            return f64::INFINITY;
        }
        let rho = theta_wu.a - theta_wu.b * f_opt(theta_wu, cost);
        if rho <= 0.0 {
            return f64::INFINITY;
        }
        w_bar + d_hi - d_hi / rho
    }

    /// End of warm-up: least-squares estimate, then the one-shot branch
    /// decision against `c_switch * T^(-1/4)`.
    fn finish_warmup(&mut self) {
        let (a_raw, b_raw) = ls_estimate(&self.gram);
        let theta_wu = self.prior.clip(a_raw, b_raw);
        self.f_wu = f_opt(&theta_wu, &self.cost);
        self.switch_value =
            Self::switch_quantity(&theta_wu, &self.cost, self.w_bar, self.bounds.d_hi);
        let threshold = self.c_switch * (self.horizon as f64).powf(-0.25);
        self.branch = if self.switch_value <= threshold {
            Branch::SmallNoise
        } else {
            Branch::LargeNoise
        };
        self.theta_wu = Some(theta_wu);
    }

    /// Start of epoch `s`: refresh the radius and estimates, pick the
    /// optimistic parameters, and install the branch's nominal controller
    /// and clamp ball.
    fn epoch_setup(&mut self, s: usize) {
        let eps = confidence_radius(&self.gram, self.alpha, &self.prior, self.horizon)
            .expect("validated config keeps the bound well-defined");
        let theta_pre = ls_estimate(&self.gram);
        let theta_hat =
            select_optimistic_theta(theta_pre, eps, &self.prior, &mut self.oracle, OPTIMISM_GRID);
        if s == 0 {
            self.eps0 = eps;
            let theta_wu = self.theta_wu.expect("warm-up finished");
            self.small_noise_ball =
                Some(ball_to_box(theta_wu, eps, &self.prior).expect("center inside prior"));
        }
        let (gain, kind, nominal, clamp_ball) = match self.branch {
            Branch::SmallNoise => (
                self.f_wu,
                NominalKind::UnconstrainedLinear,
                Nominal::Linear(self.f_wu),
                self.small_noise_ball.expect("set at epoch 0"),
            ),
            Branch::LargeNoise => {
                let gain = self.oracle.k_opt(&theta_hat);
                let ctrl = TruncatedLinearController::new(theta_hat, gain, self.bounds)
                    .expect("search stays in the gain interval");
                let ball = ball_to_box(theta_hat, eps, &self.prior).expect("center inside prior");
                (
                    gain,
                    NominalKind::TruncatedLinear,
                    Nominal::Truncated(ctrl),
                    ball,
                )
            }
            Branch::Unset => unreachable!("epoch before warm-up finished"),
        };
        let t_start = (1usize << s) * self.warmup_len;
        let t_end = (t_start * 2).min(self.horizon);
        self.epochs.push(EpochRecord {
            s,
            t_start,
            t_end,
            theta_pre,
            theta_hat,
            eps,
            gain,
            kind,
        });
        self.current = Some(CurrentEpoch {
            s,
            t_end,
            eps,
            theta_hat,
            clamp_ball,
            nominal,
        });
    }
}

/// Everything one run produces: the step trace, the epoch schedule, the
/// branch decision, and the realized total cost.
#[derive(Debug, Clone)]
pub struct AlgRun {
    pub steps: Vec<StepRecord>,
    pub epochs: Vec<EpochRecord>,
    pub branch: Branch,
    pub switch_value: f64,
    pub incidents: IncidentCounts,
    pub total_cost: f64,
    pub diverged: bool,
}

/// Executes Algorithm 3 against the true plant for `config.horizon` steps.
///
/// The initial-controller margin check runs first and refuses the
/// experiment when it fails. A diverged trajectory ends the run early with
/// the trace intact and `diverged` set.
pub fn run_algorithm(config: &ExperimentConfig, rep: u64) -> Result<AlgRun> {
    config.validate()?;
    if let Some(x) = crate::control::init_controller_violation(
        &config.prior,
        &config.dynamics_true,
        &config.bounds,
        &config.noise,
        config.horizon,
    ) {
        return Err(Error::InitControllerUnsafe(x));
    }
    let rep_seed = derive_seed(config.seed, &[tag::REPLICATION, rep]);
    let mut policy = SafeLqrPolicy::from_config(config, rep_seed)?;
    let mut plant_rng = rng_for(rep_seed, &[tag::PLANT]);
    let theta = config.dynamics_true;
    let CostParams { q, r } = config.cost;

    let mut steps = Vec::with_capacity(config.horizon);
    let mut x = 0.0f64;
    let mut total_cost = 0.0;
    let mut diverged = false;
    for t in 0..config.horizon {
        let decision = policy.control(x);
        let margin = theta.a * x + theta.b * decision.u;
        let w = config.noise.sample(&mut plant_rng);
        let x_next = margin + w;
        total_cost += q * x * x + r * decision.u * decision.u;
        steps.push(StepRecord {
            t,
            x,
            u: decision.u,
            tag: decision.tag,
            phase: decision.phase,
            eps: decision.eps,
            theta_hat: decision.theta_hat,
            dither: decision.dither,
            margin_true: margin,
        });
        if !x_next.is_finite() || x_next.abs() > DIVERGENCE_LIMIT {
            diverged = true;
            break;
        }
        policy.observe(x, decision.u, x_next);
        x = x_next;
    }
    if !diverged {
        total_cost += q * x * x;
    }
    Ok(AlgRun {
        steps,
        epochs: policy.epochs().to_vec(),
        branch: policy.branch(),
        switch_value: policy.switch_value(),
        incidents: policy.incidents,
        total_cost,
        diverged,
    })
}

/// True-margin safety audit: steps whose expected next state under the true
/// dynamics left `[d_lo, d_hi]` (beyond float dust).
pub fn count_violations(run: &AlgRun, bounds: &SafetyBounds) -> u64 {
    const AUDIT_TOL: f64 = 1e-9;
    run.steps
        .iter()
        .filter(|s| {
            s.margin_true > bounds.d_hi + AUDIT_TOL || s.margin_true < bounds.d_lo - AUDIT_TOL
        })
        .count() as u64
}
