//! Config-file ingestion.
//!
//! The on-disk format is flat `key = value` text (a TOML subset with dotted
//! keys). See the repository README for the full schema. Unset keys fall
//! back to documented defaults; `c_switch` defaults to `d_hi`.

use serde::Deserialize;

use crate::domain::{
    CostParams, Dynamics, ExperimentConfig, OracleSettings, SafetyBounds, UncertaintyBox,
};
use crate::noise::NoiseModel;
use crate::{Error, Result};

#[derive(Debug, Deserialize)]
#[serde(deny_unknown_fields)]
struct RawConfig {
    horizon: usize,
    #[serde(default)]
    seed: u64,
    #[serde(default = "one")]
    replications: usize,
    #[serde(default = "one_f64")]
    ridge: f64,
    c_switch: Option<f64>,
    dynamics: RawDynamics,
    prior: RawPrior,
    cost: RawCost,
    bounds: RawBounds,
    noise: RawNoise,
    #[serde(default)]
    oracle: RawOracle,
    #[serde(default)]
    sweep: RawSweep,
}

fn one() -> usize {
    1
}

fn one_f64() -> f64 {
    1.0
}

#[derive(Debug, Deserialize)]
#[serde(deny_unknown_fields)]
struct RawDynamics {
    a: f64,
    b: f64,
}

#[derive(Debug, Deserialize)]
#[serde(deny_unknown_fields)]
struct RawPrior {
    a_lo: f64,
    a_hi: f64,
    b_lo: f64,
    b_hi: f64,
}

#[derive(Debug, Deserialize)]
#[serde(deny_unknown_fields)]
struct RawCost {
    q: f64,
    r: f64,
}

#[derive(Debug, Deserialize)]
#[serde(deny_unknown_fields)]
struct RawBounds {
    d_lo: f64,
    d_hi: f64,
}

#[derive(Debug, Deserialize)]
#[serde(deny_unknown_fields)]
struct RawNoise {
    kind: String,
    param: f64,
    cut: Option<f64>,
}

#[derive(Debug, Deserialize, Default)]
#[serde(deny_unknown_fields)]
struct RawOracle {
    eval_horizon: Option<usize>,
    rollouts: Option<usize>,
    tol: Option<f64>,
}

#[derive(Debug, Deserialize, Default)]
#[serde(deny_unknown_fields)]
struct RawSweep {
    t_list: Option<Vec<usize>>,
}

/// A parsed config plus sweep settings that sit outside the per-run config.
#[derive(Debug, Clone)]
pub struct LoadedConfig {
    pub experiment: ExperimentConfig,
    pub sweep_t_list: Vec<usize>,
}

/// Default sweep grid: powers of four from 4^5 to 4^8.
pub fn default_t_list() -> Vec<usize> {
    vec![1024, 4096, 16384, 65536]
}

/// Parses the flat key-value config text.
pub fn parse_config(text: &str) -> Result<LoadedConfig> {
    let raw: RawConfig = toml::from_str(text).map_err(|e| Error::ConfigParse(e.to_string()))?;

    let noise = match raw.noise.kind.as_str() {
        "uniform" => NoiseModel::uniform(raw.noise.param)?,
        "gaussian" => NoiseModel::gaussian(raw.noise.param)?,
        "truncated_gaussian" => {
            let cut = raw.noise.cut.ok_or_else(|| {
                Error::ConfigParse("noise.cut is required for truncated_gaussian".into())
            })?;
            NoiseModel::truncated_gaussian(raw.noise.param, cut)?
        }
        other => {
            return Err(Error::ConfigParse(format!(
                "unknown noise.kind {other:?} (expected uniform, gaussian, or truncated_gaussian)"
            )))
        }
    };

    let bounds = SafetyBounds::new(raw.bounds.d_lo, raw.bounds.d_hi, raw.horizon)?;
    let defaults = OracleSettings::default();
    let experiment = ExperimentConfig {
        horizon: raw.horizon,
        dynamics_true: Dynamics::new(raw.dynamics.a, raw.dynamics.b)?,
        prior: UncertaintyBox::new(
            raw.prior.a_lo,
            raw.prior.a_hi,
            raw.prior.b_lo,
            raw.prior.b_hi,
        )?,
        cost: CostParams::new(raw.cost.q, raw.cost.r)?,
        bounds,
        noise,
        ridge: raw.ridge,
        c_switch: raw
            .c_switch
            .unwrap_or_else(|| ExperimentConfig::default_c_switch(&bounds)),
        seed: raw.seed,
        replications: raw.replications,
        oracle: OracleSettings {
            eval_horizon: raw.oracle.eval_horizon.unwrap_or(defaults.eval_horizon),
            rollouts: raw.oracle.rollouts.unwrap_or(defaults.rollouts),
            tol: raw.oracle.tol.unwrap_or(defaults.tol),
        },
    };
    experiment.validate()?;
    Ok(LoadedConfig {
        experiment,
        sweep_t_list: raw.sweep.t_list.unwrap_or_else(default_t_list),
    })
}

/// Reads and parses a config file.
pub fn load_config(path: &std::path::Path) -> Result<LoadedConfig> {
    let text =
        std::fs::read_to_string(path).map_err(|e| Error::Io(format!("{}: {e}", path.display())))?;
    parse_config(&text)
}

#[cfg(test)]
mod tests {
    use super::*;

    const SAMPLE: &str = r#"
horizon = 16384
seed = 42
replications = 8
ridge = 1.0
c_switch = 0.05
dynamics.a = 1.0
dynamics.b = 1.0
prior.a_lo = 0.9
prior.a_hi = 1.1
prior.b_lo = 0.9
prior.b_hi = 1.1
cost.q = 1.0
cost.r = 1.0
bounds.d_lo = -0.6
bounds.d_hi = 0.6
noise.kind = "uniform"
noise.param = 1.0
oracle.eval_horizon = 2048
oracle.rollouts = 16
sweep.t_list = [1024, 4096]
"#;

    #[test]
    fn parses_full_sample() {
        let loaded = parse_config(SAMPLE).unwrap();
        let c = &loaded.experiment;
        assert_eq!(c.horizon, 16384);
        assert_eq!(c.seed, 42);
        assert_eq!(c.replications, 8);
        assert_eq!(c.c_switch, 0.05);
        assert_eq!(c.oracle.eval_horizon, 2048);
        assert_eq!(c.oracle.rollouts, 16);
        assert_eq!(c.oracle.tol, 1e-3);
        assert_eq!(loaded.sweep_t_list, vec![1024, 4096]);
        assert!(matches!(c.noise, NoiseModel::Uniform { .. }));
    }

    #[test]
    fn c_switch_defaults_to_d_hi() {
        let text = SAMPLE.replace("c_switch = 0.05\n", "");
        let loaded = parse_config(&text).unwrap();
        assert_eq!(loaded.experiment.c_switch, 0.6);
    }

    #[test]
    fn truncated_gaussian_requires_cut() {
        let text = SAMPLE.replace(
            "noise.kind = \"uniform\"",
            "noise.kind = \"truncated_gaussian\"",
        );
        assert!(matches!(parse_config(&text), Err(Error::ConfigParse(_))));
        let with_cut = format!("{text}\nnoise.cut = 2.0");
        assert!(parse_config(&with_cut).is_ok());
    }

    #[test]
    fn unknown_keys_are_rejected() {
        let text = format!("{SAMPLE}\nnot_a_key = 3\n");
        assert!(matches!(parse_config(&text), Err(Error::ConfigParse(_))));
    }

    #[test]
    fn truth_outside_prior_rejected() {
        let text = SAMPLE.replace("dynamics.a = 1.0", "dynamics.a = 1.3");
        assert!(matches!(parse_config(&text), Err(Error::InvalidConfig(_))));
    }
}
