use rand::Rng;
use rand_distr::StandardNormal;
use serde::{Deserialize, Serialize};

use crate::error::{Error, Result};

#[derive(Debug, Clone, Copy, PartialEq, Eq, Serialize, Deserialize)]
#[serde(rename_all = "snake_case")]
pub enum NoiseFamily {
    Gaussian,
    Gumbel,
    Laplace,
}

const EULER_GAMMA: f64 = 0.577_215_664_901_532_9;

/// Zero-mean additive noise with a target variance.
#[derive(Debug, Clone, Copy, PartialEq, Serialize, Deserialize)]
pub struct NoiseSpec {
    pub family: NoiseFamily,
    pub variance: f64,
}

impl NoiseSpec {
    pub fn new(family: NoiseFamily, variance: f64) -> Result<Self> {
        let spec = Self { family, variance };
        spec.validate()?;
        Ok(spec)
    }

    pub fn gaussian(variance: f64) -> Result<Self> {
        Self::new(NoiseFamily::Gaussian, variance)
    }

    pub fn validate(&self) -> Result<()> {
        if !(self.variance > 0.0) || !self.variance.is_finite() {
            return Err(Error::InvalidParameter(format!(
                "noise variance must be positive, got {}",
                self.variance
            )));
        }
        Ok(())
    }

    pub fn sample<R: Rng + ?Sized>(&self, rng: &mut R) -> f64 {
        match self.family {
            NoiseFamily::Gaussian => {
                let z: f64 = rng.sample(StandardNormal);
                z * self.variance.sqrt()
            }
            NoiseFamily::Gumbel => {
                // var = pi^2 beta^2 / 6, mean = beta * gamma
                let beta = (6.0 * self.variance).sqrt() / std::f64::consts::PI;
                let u = open_unit(rng);
                -beta * (-u.ln()).ln() - beta * EULER_GAMMA
            }
            NoiseFamily::Laplace => {
                // var = 2 b^2
                let b = (self.variance / 2.0).sqrt();
                let u = open_unit(rng) - 0.5;
                -b * u.signum() * (1.0 - 2.0 * u.abs()).ln()
            }
        }
    }
}

/// Uniform draw on the open interval (0, 1).
fn open_unit<R: Rng + ?Sized>(rng: &mut R) -> f64 {
    loop {
        let u: f64 = rng.random();
        if u > 0.0 {
            return u;
        }
    }
}

#[cfg(test)]
mod tests {
    use super::*;
    use crate::seed;

    #[test]
    fn centered_with_target_variance() {
        for family in [NoiseFamily::Gaussian, NoiseFamily::Gumbel, NoiseFamily::Laplace] {
            for target in [1.0, 0.3] {
                let spec = NoiseSpec::new(family, target).unwrap();
                let mut rng = seed::stream(5, "noise-test", family as u64);
                let n = 100_000;
                let xs: Vec<f64> = (0..n).map(|_| spec.sample(&mut rng)).collect();
                let mean = xs.iter().sum::<f64>() / n as f64;
                let var = xs.iter().map(|x| (x - mean).powi(2)).sum::<f64>() / (n - 1) as f64;
                assert!(mean.abs() < 0.02, "{family:?} mean {mean}");
                assert!((var - target).abs() < 0.05 * target, "{family:?} var {var}");
            }
        }
    }

    #[test]
    fn rejects_nonpositive_variance() {
        assert!(NoiseSpec::gaussian(0.0).is_err());
        assert!(NoiseSpec::new(NoiseFamily::Laplace, -1.0).is_err());
        assert!(NoiseSpec::gaussian(f64::NAN).is_err());
    }
}
