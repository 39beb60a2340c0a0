//! Bounded sampling distributions for scenario augmentation.
//!
//! Each named distribution is mapped onto a bounded range `[a, b]`:
//! uniform directly; gaussian with mean at the midpoint and σ = (b−a)/6,
//! truncated to the range; gamma(k=2, θ=(b−a)/6) shifted to `a` and
//! truncated at `b`; binomial(n=20, p=0.5) and poisson(λ=10, support
//! capped at 20) rescaled affinely from their integer support; beta(2,2)
//! rescaled. Sampling goes through the quantile function of the truncated
//! law, which is what makes the comonotone height/speed coupling in
//! [`crate::scene`] possible while preserving every marginal.

use rand::Rng;
use serde::{Deserialize, Serialize};
use statrs::distribution::{Beta, ContinuousCDF, Gamma, Normal};

use crate::error::{Error, Result};

#[derive(Debug, Clone, Copy, PartialEq, Eq, Serialize, Deserialize)]
#[serde(rename_all = "lowercase")]
pub enum DistKind {
    Uniform,
    Gaussian,
    Gamma,
    Binomial,
    Poisson,
    Beta,
}

impl DistKind {
    pub fn parse(name: &str) -> Result<Self> {
        match name.to_ascii_lowercase().as_str() {
            "uniform" => Ok(Self::Uniform),
            "gaussian" | "normal" => Ok(Self::Gaussian),
            "gamma" => Ok(Self::Gamma),
            "binomial" => Ok(Self::Binomial),
            "poisson" => Ok(Self::Poisson),
            "beta" => Ok(Self::Beta),
            other => Err(Error::Config(format!("unknown distribution kind '{other}'"))),
        }
    }
}

/// Quantile of the named law mapped onto the unit interval, `p` in [0, 1).
///
/// The unit-interval form is affinely stretched onto the caller's range, so
/// the quantile here fully determines the bounded law.
pub fn unit_quantile(kind: DistKind, p: f64) -> f64 {
    let p = p.clamp(0.0, 1.0 - 1e-15);
    let q = match kind {
        DistKind::Uniform => p,
        DistKind::Gaussian => {
            // mean 1/2, sigma 1/6, truncated to [0, 1]
            let n = Normal::new(0.5, 1.0 / 6.0).unwrap();
            let (fa, fb) = (n.cdf(0.0), n.cdf(1.0));
            n.inverse_cdf(fa + p * (fb - fa))
        }
        DistKind::Gamma => {
            // shape 2, scale 1/6 (rate 6), truncated at 1
            let g = Gamma::new(2.0, 6.0).unwrap();
            let fb = g.cdf(1.0);
            g.inverse_cdf(p * fb)
        }
        DistKind::Binomial => discrete_quantile(&binomial_pmf_20(), p) / 20.0,
        DistKind::Poisson => discrete_quantile(&poisson_pmf_10_capped(), p) / 20.0,
        DistKind::Beta => Beta::new(2.0, 2.0).unwrap().inverse_cdf(p),
    };
    q.clamp(0.0, 1.0)
}

/// Draws one value from the named law on `[a, b]`.
pub fn sample(kind: DistKind, range: [f64; 2], rng: &mut impl Rng) -> Result<f64> {
    let [a, b] = range;
    if !(a <= b) {
        return Err(Error::Argument(format!("invalid range [{a}, {b}]")));
    }
    if a == b {
        return Ok(a);
    }
    Ok(span(range, unit_quantile(kind, rng.gen::<f64>())))
}

/// Affine map of a unit-interval value onto `[a, b]`.
pub fn span(range: [f64; 2], u: f64) -> f64 {
    range[0] + u * (range[1] - range[0])
}

fn discrete_quantile(pmf: &[f64; 21], p: f64) -> f64 {
    let mut cdf = 0.0;
    for (k, w) in pmf.iter().enumerate() {
        cdf += w;
        if p < cdf {
            return k as f64;
        }
    }
    20.0
}

fn binomial_pmf_20() -> [f64; 21] {
    let mut pmf = [0.0; 21];
    // C(20, k) / 2^20
    let mut c = 1.0f64;
    for k in 0..=20usize {
        pmf[k] = c / (1u64 << 20) as f64;
        c = c * (20 - k) as f64 / (k + 1) as f64;
    }
    pmf
}

fn poisson_pmf_10_capped() -> [f64; 21] {
    // lambda = 10, support capped at 20 and renormalized
    let mut pmf = [0.0; 21];
    let mut term = (-10.0f64).exp();
    let mut total = 0.0;
    for k in 0..=20usize {
        pmf[k] = term;
        total += term;
        term *= 10.0 / (k + 1) as f64;
    }
    for w in pmf.iter_mut() {
        *w /= total;
    }
    pmf
}
