//! Experiment orchestration: regret replications, sweeps over the horizon,
//! continuity probes, the verification suite, config ingestion, and CSV/JSON
//! emission.

pub mod config;
pub mod probes;
pub mod verify;

use rayon::prelude::*;

use crate::algorithm::{count_violations, run_algorithm, AlgRun, Branch, Phase};
use crate::control::init_control;
use crate::domain::ExperimentConfig;
use crate::oracle::{baseline_cost, BaselineResult};
use crate::stream::{derive_seed, rng_for, tag};
use crate::{Error, Result};

/// Fresh-stream rollouts used to pin down the baseline expectation.
const BASELINE_EVAL_REPS: usize = 256;

/// Sizes the global worker pool. A no-op once any pool exists; results are
/// identical for every worker count by construction.
pub fn set_worker_threads(n: usize) {
    let _ = rayon::ThreadPoolBuilder::new()
        .num_threads(n)
        .build_global();
}

/// Floor applied to median regret before taking logarithms; the baseline is
/// estimated, so small negative empirical regret is possible.
const REGRET_FLOOR: f64 = 1.0;

/// Which controller a replication runs. `InitOnly` is the linear-regret
/// control group: it keeps using the warm-up controller forever.
#[derive(Debug, Clone, Copy, PartialEq, Eq)]
pub enum PolicyKind {
    SafeLqr,
    InitOnly,
}

/// Outcome of one replication against the cached baseline.
#[derive(Debug, Clone, Copy)]
pub struct RegretReport {
    pub horizon: usize,
    pub rep: u64,
    pub alg_total_cost: f64,
    pub baseline_mean: f64,
    pub baseline_stderr: f64,
    pub regret: f64,
    /// True-margin violations; `-1` flags a diverged trajectory.
    pub violations: i64,
    pub infeasible_clamps: u64,
    pub branch: Branch,
}

/// Runs `reps` independent replications of the learning algorithm in
/// parallel; results arrive in replication order.
pub fn run_algorithm_batch(config: &ExperimentConfig, reps: usize) -> Result<Vec<AlgRun>> {
    (0..reps as u64)
        .into_par_iter()
        .map(|rep| run_algorithm(config, rep))
        .collect()
}

/// Computes the regret baseline for a config once; shared by every
/// replication at that horizon.
pub fn compute_baseline(config: &ExperimentConfig) -> Result<BaselineResult> {
    baseline_cost(
        &config.dynamics_true,
        &config.bounds,
        &config.cost,
        &config.noise,
        config.horizon,
        config.oracle.rollouts.max(32),
        BASELINE_EVAL_REPS,
        config.oracle.tol,
        derive_seed(config.seed, &[config.horizon as u64]),
    )
}

/// Runs one replication and assembles its report. The true dynamics enter
/// only through plant simulation, the safety audit, and the baseline.
pub fn run_replication(
    config: &ExperimentConfig,
    rep: u64,
    baseline: &BaselineResult,
) -> Result<RegretReport> {
    let run = run_algorithm(config, rep)?;
    Ok(report_from_run(config, rep, baseline, &run))
}

fn report_from_run(
    config: &ExperimentConfig,
    rep: u64,
    baseline: &BaselineResult,
    run: &AlgRun,
) -> RegretReport {
    let violations = if run.diverged {
        -1
    } else {
        count_violations(run, &config.bounds) as i64
    };
    RegretReport {
        horizon: config.horizon,
        rep,
        alg_total_cost: run.total_cost,
        baseline_mean: baseline.estimate.mean,
        baseline_stderr: baseline.estimate.stderr,
        regret: run.total_cost - baseline.estimate.mean,
        violations,
        infeasible_clamps: run.incidents.infeasible,
        branch: run.branch,
    }
}

/// As [`run_replication`] but with a selectable policy (used for the
/// linear-regret control group).
pub fn run_replication_with_policy(
    config: &ExperimentConfig,
    rep: u64,
    baseline: &BaselineResult,
    policy: PolicyKind,
) -> Result<RegretReport> {
    match policy {
        PolicyKind::SafeLqr => run_replication(config, rep, baseline),
        PolicyKind::InitOnly => {
            let run = run_init_only(config, rep)?;
            Ok(report_from_run(config, rep, baseline, &run))
        }
    }
}

/// The always-initial-controller policy: `C_init` plus dither at every step.
fn run_init_only(config: &ExperimentConfig, rep: u64) -> Result<AlgRun> {
    config.validate()?;
    let rep_seed = derive_seed(config.seed, &[tag::REPLICATION, rep]);
    let mut plant_rng = rng_for(rep_seed, &[tag::PLANT]);
    let mut dither_rng = rng_for(rep_seed, &[tag::DITHER]);
    let theta = config.dynamics_true;
    let dither = 1.0 / (config.horizon as f64).ln();
    let spec = crate::control::SafeClampSpec {
        ball: config.prior,
        bounds: config.bounds,
    };
    let mut x = 0.0f64;
    let mut total = 0.0;
    let mut incidents = crate::algorithm::IncidentCounts::default();
    let mut steps = Vec::with_capacity(config.horizon);
    for t in 0..config.horizon {
        use rand::Rng;
        let phi: f64 = if dither_rng.gen::<bool>() {
            dither
        } else {
            -dither
        };
        let (u, tag_) =
            crate::control::clamp_control(init_control(&config.prior, x) + phi, &spec, x);
        incidents.record(tag_);
        let margin = theta.a * x + theta.b * u;
        total += config.cost.q * x * x + config.cost.r * u * u;
        steps.push(crate::algorithm::StepRecord {
            t,
            x,
            u,
            tag: tag_,
            phase: Phase::Warmup,
            eps: None,
            theta_hat: None,
            dither: Some(if phi > 0.0 { 1 } else { -1 }),
            margin_true: margin,
        });
        x = margin + config.noise.sample(&mut plant_rng);
    }
    total += config.cost.q * x * x;
    Ok(AlgRun {
        steps,
        epochs: Vec::new(),
        branch: Branch::Unset,
        switch_value: f64::NAN,
        incidents,
        total_cost: total,
        diverged: false,
    })
}

/// A full horizon sweep: per-horizon baselines, replication reports sorted
/// by `(T, rep)`, and the fitted log-log slope of median regret.
#[derive(Debug, Clone)]
pub struct SweepResult {
    pub rows: Vec<RegretReport>,
    pub t_values: Vec<usize>,
    pub median_regret: Vec<f64>,
    pub fitted_slope: f64,
    pub slope_stderr: f64,
}

/// Reconfigures the base instance for a different horizon. Safety-bound
/// width and prior membership are revalidated at the new horizon.
pub fn config_at_horizon(base: &ExperimentConfig, horizon: usize) -> Result<ExperimentConfig> {
    let mut c = base.clone();
    c.horizon = horizon;
    c.bounds = crate::SafetyBounds::new(base.bounds.d_lo, base.bounds.d_hi, horizon)?;
    c.validate()?;
    Ok(c)
}

/// Runs `reps` replications at every horizon in `t_list` and fits the
/// log-log slope of the per-horizon median regret.
pub fn sweep_regret(base: &ExperimentConfig, t_list: &[usize], reps: usize) -> Result<SweepResult> {
    sweep_regret_with_policy(base, t_list, reps, PolicyKind::SafeLqr)
}

pub fn sweep_regret_with_policy(
    base: &ExperimentConfig,
    t_list: &[usize],
    reps: usize,
    policy: PolicyKind,
) -> Result<SweepResult> {
    if t_list.len() < 2 {
        return Err(Error::InvalidConfig(
            "sweep needs at least two horizons to fit a slope".into(),
        ));
    }
    let mut rows = Vec::with_capacity(t_list.len() * reps);
    let mut medians = Vec::with_capacity(t_list.len());
    for &t in t_list {
        let config = config_at_horizon(base, t)?;
        let baseline = compute_baseline(&config)?;
        let reports: Result<Vec<RegretReport>> = (0..reps as u64)
            .into_par_iter()
            .map(|rep| run_replication_with_policy(&config, rep, &baseline, policy))
            .collect();
        let reports = reports?;
        medians.push(median(reports.iter().map(|r| r.regret)));
        rows.extend(reports);
    }
    let pts: Vec<(f64, f64)> = t_list
        .iter()
        .zip(&medians)
        .map(|(&t, &m)| ((t as f64).ln(), m.max(REGRET_FLOOR).ln()))
        .collect();
    let (slope, stderr) = fit_line_slope(&pts);
    Ok(SweepResult {
        rows,
        t_values: t_list.to_vec(),
        median_regret: medians,
        fitted_slope: slope,
        slope_stderr: stderr,
    })
}

/// Sample median (average of the middle pair for even counts).
pub fn median<I: IntoIterator<Item = f64>>(values: I) -> f64 {
    let mut v: Vec<f64> = values.into_iter().collect();
    v.sort_by(|a, b| a.partial_cmp(b).expect("no NaN in medians"));
    let n = v.len();
    assert!(n > 0);
    if n % 2 == 1 {
        v[n / 2]
    } else {
        0.5 * (v[n / 2 - 1] + v[n / 2])
    }
}

/// Ordinary least squares slope and its standard error.
pub fn fit_line_slope(pts: &[(f64, f64)]) -> (f64, f64) {
    let n = pts.len() as f64;
    let mx = pts.iter().map(|p| p.0).sum::<f64>() / n;
    let my = pts.iter().map(|p| p.1).sum::<f64>() / n;
    let sxx: f64 = pts.iter().map(|p| (p.0 - mx) * (p.0 - mx)).sum();
    let sxy: f64 = pts.iter().map(|p| (p.0 - mx) * (p.1 - my)).sum();
    let slope = sxy / sxx;
    if pts.len() <= 2 {
        return (slope, 0.0);
    }
    let intercept = my - slope * mx;
    let sse: f64 = pts
        .iter()
        .map(|p| {
            let e = p.1 - (intercept + slope * p.0);
            e * e
        })
        .sum();
    let stderr = (sse / (n - 2.0) / sxx).sqrt();
    (slope, stderr)
}

/// Floating-point formatting used in every emitted file: 12 significant
/// digits, scientific notation.
pub fn fmt_g(x: f64) -> String {
    format!("{x:.11e}")
}

/// Serializes a trace as CSV with the documented column set.
pub fn trace_to_csv(run: &AlgRun) -> String {
    let mut out = String::from("t,x,u,tag,phase,epoch,eps_s,theta_hat_a,theta_hat_b,margin_true\n");
    for s in &run.steps {
        let (phase, epoch) = match s.phase {
            Phase::Warmup => ("warmup", String::new()),
            Phase::Epoch(e) => ("epoch", e.to_string()),
        };
        let eps = s.eps.map(fmt_g).unwrap_or_default();
        let (ta, tb) = match s.theta_hat {
            Some(d) => (fmt_g(d.a), fmt_g(d.b)),
            None => (String::new(), String::new()),
        };
        out.push_str(&format!(
            "{},{},{},{},{},{},{},{},{},{}\n",
            s.t,
            fmt_g(s.x),
            fmt_g(s.u),
            s.tag.as_str(),
            phase,
            epoch,
            eps,
            ta,
            tb,
            fmt_g(s.margin_true),
        ));
    }
    out
}

/// Serializes a replication report as JSON.
pub fn report_to_json(r: &RegretReport) -> String {
    format!(
        concat!(
            "{{\n",
            "  \"T\": {},\n",
            "  \"rep\": {},\n",
            "  \"alg_total_cost\": {},\n",
            "  \"baseline_mean\": {},\n",
            "  \"baseline_stderr\": {},\n",
            "  \"regret\": {},\n",
            "  \"violations\": {},\n",
            "  \"infeasible_clamps\": {},\n",
            "  \"branch\": \"{}\"\n",
            "}}\n"
        ),
        r.horizon,
        r.rep,
        fmt_g(r.alg_total_cost),
        fmt_g(r.baseline_mean),
        fmt_g(r.baseline_stderr),
        fmt_g(r.regret),
        r.violations,
        r.infeasible_clamps,
        r.branch.as_str(),
    )
}

/// Serializes sweep rows as CSV (`T,rep,regret,violations,branch`).
pub fn sweep_to_csv(sweep: &SweepResult) -> String {
    let mut out = String::from("T,rep,regret,violations,branch\n");
    for r in &sweep.rows {
        out.push_str(&format!(
            "{},{},{},{},{}\n",
            r.horizon,
            r.rep,
            fmt_g(r.regret),
            r.violations,
            r.branch.as_str(),
        ));
    }
    out
}

/// Serializes the sweep summary as JSON.
pub fn sweep_summary_json(sweep: &SweepResult) -> String {
    let ts: Vec<String> = sweep.t_values.iter().map(|t| t.to_string()).collect();
    let meds: Vec<String> = sweep.median_regret.iter().map(|&m| fmt_g(m)).collect();
    format!(
        concat!(
            "{{\n",
            "  \"fitted_slope\": {},\n",
            "  \"slope_stderr\": {},\n",
            "  \"t_values\": [{}],\n",
            "  \"median_regret\": [{}]\n",
            "}}\n"
        ),
        fmt_g(sweep.fitted_slope),
        fmt_g(sweep.slope_stderr),
        ts.join(", "),
        meds.join(", "),
    )
}

/// Serializes a baseline result as JSON.
pub fn baseline_to_json(horizon: usize, b: &BaselineResult) -> String {
    format!(
        concat!(
            "{{\n",
            "  \"T\": {},\n",
            "  \"k_opt\": {},\n",
            "  \"mean_total_cost\": {},\n",
            "  \"stderr\": {},\n",
            "  \"reps\": {}\n",
            "}}\n"
        ),
        horizon,
        fmt_g(b.k_opt),
        fmt_g(b.estimate.mean),
        fmt_g(b.estimate.stderr),
        b.estimate.reps,
    )
}

#[cfg(test)]
mod tests {
    use super::*;
    use crate::domain::{CostParams, Dynamics, OracleSettings, SafetyBounds, UncertaintyBox};
    use crate::NoiseModel;

    fn quick_config() -> ExperimentConfig {
        ExperimentConfig {
            horizon: 400,
            dynamics_true: Dynamics::new(1.0, 1.0).unwrap(),
            prior: UncertaintyBox::new(0.9, 1.1, 0.9, 1.1).unwrap(),
            cost: CostParams::new(1.0, 1.0).unwrap(),
            bounds: SafetyBounds::new(-0.6, 0.6, 400).unwrap(),
            noise: NoiseModel::uniform(1.0).unwrap(),
            ridge: 1.0,
            c_switch: 0.05,
            seed: 31,
            replications: 2,
            oracle: OracleSettings {
                eval_horizon: 256,
                rollouts: 8,
                tol: 1e-3,
            },
        }
    }

    #[test]
    fn replication_reports_are_reproducible() {
        let config = quick_config();
        let baseline = compute_baseline(&config).unwrap();
        let a = run_replication(&config, 3, &baseline).unwrap();
        let b = run_replication(&config, 3, &baseline).unwrap();
        assert_eq!(a.alg_total_cost.to_bits(), b.alg_total_cost.to_bits());
        assert_eq!(a.violations, b.violations);
        assert_eq!(a.regret.to_bits(), b.regret.to_bits());
    }

    #[test]
    fn regret_is_cost_minus_baseline_by_construction() {
        let config = quick_config();
        let baseline = compute_baseline(&config).unwrap();
        let r = run_replication(&config, 0, &baseline).unwrap();
        assert_eq!(r.regret, r.alg_total_cost - r.baseline_mean);
    }

    #[test]
    fn perfect_information_regret_is_statistically_zero() {
        // Degenerate prior at the truth with loose bounds: the algorithm
        // plays (clamped) near-optimal controls from the start.
        let mut config = quick_config();
        config.horizon = 4096;
        config.prior = UncertaintyBox::new(1.0, 1.0, 1.0, 1.0).unwrap();
        config.bounds = SafetyBounds::new(-6.0, 6.0, 4096).unwrap();
        config.oracle = OracleSettings {
            eval_horizon: 2048,
            rollouts: 32,
            tol: 1e-3,
        };
        let baseline = compute_baseline(&config).unwrap();
        let mut regrets = Vec::new();
        for rep in 0..8 {
            regrets.push(run_replication(&config, rep, &baseline).unwrap().regret);
        }
        let mean = regrets.iter().sum::<f64>() / regrets.len() as f64;
        // Scale of one trajectory's total-cost noise.
        let spread = baseline.estimate.stderr * (BASELINE_EVAL_REPS as f64).sqrt();
        assert!(
            mean.abs() <= 4.0 * spread / (regrets.len() as f64).sqrt() + 2.0,
            "mean regret {mean} vs trajectory spread {spread}"
        );
    }

    #[test]
    fn sweep_shape_and_determinism() {
        let config = quick_config();
        let t_list = [144, 256, 400, 576];
        let a = sweep_regret(&config, &t_list, 2).unwrap();
        let b = sweep_regret(&config, &t_list, 2).unwrap();
        assert_eq!(a.rows.len(), 8);
        assert_eq!(sweep_to_csv(&a), sweep_to_csv(&b));
        assert_eq!(sweep_summary_json(&a), sweep_summary_json(&b));
        // Rows arrive sorted by (T, rep).
        for w in a.rows.windows(2) {
            assert!(
                (w[0].horizon, w[0].rep) < (w[1].horizon, w[1].rep),
                "rows out of order"
            );
        }
    }

    #[test]
    fn median_even_and_odd() {
        assert_eq!(median([3.0, 1.0, 2.0]), 2.0);
        assert_eq!(median([4.0, 1.0, 2.0, 3.0]), 2.5);
    }

    #[test]
    fn slope_fit_recovers_power_law() {
        let pts: Vec<(f64, f64)> = (1..=6)
            .map(|i| {
                let t = (4f64).powi(i);
                (t.ln(), (3.0 * t.powf(0.5)).ln())
            })
            .collect();
        let (slope, stderr) = fit_line_slope(&pts);
        assert!((slope - 0.5).abs() < 1e-12);
        assert!(stderr < 1e-12);
    }
}
