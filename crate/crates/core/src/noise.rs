//! Known noise distributions for the plant disturbance `w_t`.
//!
//! Every model is symmetric around zero, has a bounded density, and exposes
//! the handful of scalars the learning algorithm needs: the variance, the
//! support bound `w_bar` (infinite for the Gaussian), the density bound, and
//! a sub-gaussian scale `alpha`.

use rand::distributions::Uniform as UniformDist;
use rand::Rng;
use rand_distr::{Distribution, Normal as NormalDist};
use statrs::distribution::{ContinuousCDF, Normal as StatNormal};

use crate::{Error, Result};

const SQRT_2PI: f64 = 2.5066282746310002;

fn std_normal() -> StatNormal {
    StatNormal::new(0.0, 1.0).expect("standard normal")
}

fn std_normal_pdf(x: f64) -> f64 {
    (-0.5 * x * x).exp() / SQRT_2PI
}

/// A zero-mean continuous noise distribution.
#[derive(Debug, Clone, Copy, PartialEq)]
pub enum NoiseModel {
    /// Uniform on `[-half_width, half_width]`.
    Uniform { half_width: f64 },
    /// `Normal(0, sigma^2)` conditioned on `|w| <= cut` and renormalized.
    /// Symmetric truncation keeps the mean exactly zero.
    TruncatedGaussian { sigma: f64, cut: f64 },
    /// `Normal(0, sigma^2)`, unbounded support.
    Gaussian { sigma: f64 },
}

impl NoiseModel {
    pub fn uniform(half_width: f64) -> Result<Self> {
        if !(half_width.is_finite() && half_width > 0.0) {
            return Err(Error::Domain(format!(
                "uniform half width must be > 0, got {half_width}"
            )));
        }
        Ok(NoiseModel::Uniform { half_width })
    }

    pub fn truncated_gaussian(sigma: f64, cut: f64) -> Result<Self> {
        if !(sigma.is_finite() && sigma > 0.0 && cut.is_finite() && cut > 0.0) {
            return Err(Error::Domain(format!(
                "truncated gaussian needs sigma > 0 and cut > 0, got ({sigma}, {cut})"
            )));
        }
        Ok(NoiseModel::TruncatedGaussian { sigma, cut })
    }

    pub fn gaussian(sigma: f64) -> Result<Self> {
        if !(sigma.is_finite() && sigma > 0.0) {
            return Err(Error::Domain(format!(
                "gaussian sigma must be > 0, got {sigma}"
            )));
        }
        Ok(NoiseModel::Gaussian { sigma })
    }

    /// Mass inside the truncation window, `2*Phi(cut/sigma) - 1`.
    fn trunc_mass(sigma: f64, cut: f64) -> f64 {
        let n = std_normal();
        2.0 * n.cdf(cut / sigma) - 1.0
    }

    /// One draw. Bounded kinds never exceed their support bound.
    pub fn sample<R: Rng + ?Sized>(&self, rng: &mut R) -> f64 {
        match *self {
            NoiseModel::Uniform { half_width } => {
                rng.sample(UniformDist::new_inclusive(-half_width, half_width))
            }
            NoiseModel::TruncatedGaussian { sigma, cut } => {
                // Rejection from the base normal is exact for the
                // renormalized (conditional) distribution.
                let base = NormalDist::new(0.0, sigma).expect("valid sigma");
                loop {
                    let w = base.sample(rng);
                    if w.abs() <= cut {
                        return w;
                    }
                }
            }
            NoiseModel::Gaussian { sigma } => NormalDist::new(0.0, sigma)
                .expect("valid sigma")
                .sample(rng),
        }
    }

    /// Distribution variance (closed form for every kind).
    pub fn variance(&self) -> f64 {
        match *self {
            NoiseModel::Uniform { half_width } => half_width * half_width / 3.0,
            NoiseModel::TruncatedGaussian { sigma, cut } => {
                let beta = cut / sigma;
                let mass = Self::trunc_mass(sigma, cut);
                sigma * sigma * (1.0 - 2.0 * beta * std_normal_pdf(beta) / mass)
            }
            NoiseModel::Gaussian { sigma } => sigma * sigma,
        }
    }

    /// Support bound `w_bar`; `+inf` for the Gaussian.
    pub fn support_bound(&self) -> f64 {
        match *self {
            NoiseModel::Uniform { half_width } => half_width,
            NoiseModel::TruncatedGaussian { cut, .. } => cut,
            NoiseModel::Gaussian { .. } => f64::INFINITY,
        }
    }

    pub fn is_bounded(&self) -> bool {
        self.support_bound().is_finite()
    }

    /// Supremum of the probability density.
    pub fn density_bound(&self) -> f64 {
        match *self {
            NoiseModel::Uniform { half_width } => 0.5 / half_width,
            NoiseModel::TruncatedGaussian { sigma, cut } => {
                std_normal_pdf(0.0) / (sigma * Self::trunc_mass(sigma, cut))
            }
            NoiseModel::Gaussian { sigma } => std_normal_pdf(0.0) / sigma,
        }
    }

    /// Sub-gaussian scale `alpha` with `E[exp(g*w)] <= exp(g^2*alpha^2/2)`.
    ///
    /// Bounded kinds use the Hoeffding scale `alpha = w_bar`; the Gaussian is
    /// exactly sub-gaussian with `alpha = sigma`.
    pub fn subgaussian_alpha(&self) -> f64 {
        match *self {
            NoiseModel::Uniform { half_width } => half_width,
            NoiseModel::TruncatedGaussian { cut, .. } => cut,
            NoiseModel::Gaussian { sigma } => sigma,
        }
    }

    /// Cumulative distribution function.
    pub fn cdf(&self, x: f64) -> f64 {
        match *self {
            NoiseModel::Uniform { half_width } => {
                ((x + half_width) / (2.0 * half_width)).clamp(0.0, 1.0)
            }
            NoiseModel::TruncatedGaussian { sigma, cut } => {
                if x <= -cut {
                    0.0
                } else if x >= cut {
                    1.0
                } else {
                    let n = std_normal();
                    let mass = Self::trunc_mass(sigma, cut);
                    (n.cdf(x / sigma) - n.cdf(-cut / sigma)) / mass
                }
            }
            NoiseModel::Gaussian { sigma } => std_normal().cdf(x / sigma),
        }
    }

    /// Quantile function `F^{-1}(p)` for `p` in the open unit interval.
    pub fn quantile(&self, p: f64) -> Result<f64> {
        if !(p > 0.0 && p < 1.0) {
            return Err(Error::Domain(format!(
                "quantile needs p in (0, 1), got {p}"
            )));
        }
        Ok(match *self {
            NoiseModel::Uniform { half_width } => half_width * (2.0 * p - 1.0),
            NoiseModel::TruncatedGaussian { sigma, cut } => {
                let n = std_normal();
                let mass = Self::trunc_mass(sigma, cut);
                let base = n.cdf(-cut / sigma) + p * mass;
                sigma * n.inverse_cdf(base)
            }
            NoiseModel::Gaussian { sigma } => sigma * std_normal().inverse_cdf(p),
        })
    }
}
