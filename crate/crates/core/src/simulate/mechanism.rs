use rand::Rng;
use rand_distr::StandardNormal;
use serde::{Deserialize, Serialize};

use crate::error::{Error, Result};
use crate::seed;

pub const DEFAULT_RFF_FEATURES: usize = 128;
pub const GP_BANDWIDTH: f64 = 0.5;

#[derive(Debug, Clone, Copy, PartialEq, Eq, Serialize, Deserialize)]
#[serde(rename_all = "snake_case")]
pub enum InnerFn {
    Sinc,
    Cos,
}

impl InnerFn {
    fn apply(self, x: f64) -> f64 {
        match self {
            InnerFn::Sinc => sinc(x),
            InnerFn::Cos => x.cos(),
        }
    }
}

/// Unnormalized sinc with `sinc(0) = 1`.
pub fn sinc(x: f64) -> f64 {
    if x == 0.0 {
        1.0
    } else {
        x.sin() / x
    }
}

/// Random-Fourier-feature approximation of a draw from a zero-mean GP with
/// an RBF kernel. Fixed once built, so it can be shared across environments.
#[derive(Debug, Clone, PartialEq, Serialize, Deserialize)]
pub struct RffFunction {
    pub input_dim: usize,
    pub bandwidth: f64,
    pub function_seed: u64,
    /// `features x input_dim`, row-major.
    omegas: Vec<f64>,
    phases: Vec<f64>,
    amplitudes: Vec<f64>,
}

impl RffFunction {
    pub fn new(input_dim: usize, features: usize, bandwidth: f64, function_seed: u64) -> Result<Self> {
        if features == 0 || !(bandwidth > 0.0) {
            return Err(Error::InvalidParameter(format!(
                "RFF needs features > 0 and bandwidth > 0 (got {features}, {bandwidth})"
            )));
        }
        let mut rng = seed::stream(function_seed, "rff", input_dim as u64);
        let scale = 1.0 / bandwidth;
        let omegas = (0..features * input_dim)
            .map(|_| scale * rng.sample::<f64, _>(StandardNormal))
            .collect();
        let phases = (0..features)
            .map(|_| rng.random::<f64>() * std::f64::consts::TAU)
            .collect();
        let amplitudes = (0..features).map(|_| rng.sample(StandardNormal)).collect();
        Ok(Self {
            input_dim,
            bandwidth,
            function_seed,
            omegas,
            phases,
            amplitudes,
        })
    }

    pub fn features(&self) -> usize {
        self.phases.len()
    }

    fn eval(&self, x: &[f64]) -> f64 {
        let f = self.features();
        let mut acc = 0.0;
        for k in 0..f {
            let w = &self.omegas[k * self.input_dim..(k + 1) * self.input_dim];
            let proj: f64 = w.iter().zip(x).map(|(a, b)| a * b).sum();
            acc += self.amplitudes[k] * (proj + self.phases[k]).cos();
        }
        (2.0 / f as f64).sqrt() * acc
    }
}

/// A causal mechanism over an ordered list of inputs.
#[derive(Debug, Clone, PartialEq, Serialize, Deserialize)]
#[serde(tag = "kind", rename_all = "snake_case")]
pub enum MechanismSpec {
    /// `Σ sin(x_i²)`
    SinSquare,
    /// `Σ 4 cos(2x_i² − 3x_i)`
    CosMix,
    /// `Σ c_i f_i(−2x_i³ + 3x_i² + 4x_i)`
    C3Mix { coefs: Vec<f64>, inner: Vec<InnerFn> },
    GpRff(RffFunction),
    Scaled { base: Box<MechanismSpec>, factor: f64 },
}

impl MechanismSpec {
    /// Number of inputs, or `None` when any length is accepted.
    pub fn arity(&self) -> Option<usize> {
        match self {
            MechanismSpec::SinSquare | MechanismSpec::CosMix => None,
            MechanismSpec::C3Mix { coefs, .. } => Some(coefs.len()),
            MechanismSpec::GpRff(f) => Some(f.input_dim),
            MechanismSpec::Scaled { base, .. } => base.arity(),
        }
    }

    /// Random c3 mixture: coefficients from `±Uniform[2, 5]`, inner function
    /// uniform over {sinc, cos}.
    pub fn random_c3<R: Rng + ?Sized>(inputs: usize, rng: &mut R) -> Self {
        let mut coefs = Vec::with_capacity(inputs);
        let mut inner = Vec::with_capacity(inputs);
        for _ in 0..inputs {
            let mag = 2.0 + 3.0 * rng.random::<f64>();
            coefs.push(if rng.random::<bool>() { mag } else { -mag });
            inner.push(if rng.random::<bool>() { InnerFn::Sinc } else { InnerFn::Cos });
        }
        MechanismSpec::C3Mix { coefs, inner }
    }
}

pub fn eval_mechanism(mech: &MechanismSpec, x: &[f64]) -> Result<f64> {
    if let Some(a) = mech.arity() {
        if a != x.len() {
            return Err(Error::ArityMismatch {
                expected: a,
                got: x.len(),
            });
        }
    }
    if let Some(v) = x.iter().find(|v| !v.is_finite()) {
        return Err(Error::NonFinite(format!("mechanism input {v}")));
    }
    Ok(eval_unchecked(mech, x))
}

fn eval_unchecked(mech: &MechanismSpec, x: &[f64]) -> f64 {
    match mech {
        MechanismSpec::SinSquare => x.iter().map(|v| (v * v).sin()).sum(),
        MechanismSpec::CosMix => x.iter().map(|v| 4.0 * (2.0 * v * v - 3.0 * v).cos()).sum(),
        MechanismSpec::C3Mix { coefs, inner } => x
            .iter()
            .zip(coefs.iter().zip(inner))
            .map(|(v, (c, f))| c * f.apply(-2.0 * v * v * v + 3.0 * v * v + 4.0 * v))
            .sum(),
        MechanismSpec::GpRff(f) => f.eval(x),
        MechanismSpec::Scaled { base, factor } => factor * eval_unchecked(base, x),
    }
}

/// One additive piece of a node's structural equation.
#[derive(Debug, Clone, PartialEq, Serialize, Deserialize)]
pub struct MechanismTerm {
    pub parents: Vec<usize>,
    pub mechanism: MechanismSpec,
}

/// `X_j = Σ_terms mechanism(X_parents) + N_j`.
#[derive(Debug, Clone, PartialEq, Default, Serialize, Deserialize)]
pub struct NodeMechanism {
    pub terms: Vec<MechanismTerm>,
}

impl NodeMechanism {
    pub fn single(parents: Vec<usize>, mechanism: MechanismSpec) -> Self {
        let mut m = Self::default();
        m.push(parents, mechanism);
        m
    }

    /// Adds a term; empty parent lists are dropped.
    pub fn push(&mut self, parents: Vec<usize>, mechanism: MechanismSpec) {
        if !parents.is_empty() {
            self.terms.push(MechanismTerm { parents, mechanism });
        }
    }

    pub fn inputs(&self) -> impl Iterator<Item = usize> + '_ {
        self.terms.iter().flat_map(|t| t.parents.iter().copied())
    }

    /// Evaluate against a full sample row.
    pub fn eval_row(&self, row: &[f64]) -> Result<f64> {
        let mut buf = Vec::new();
        let mut acc = 0.0;
        for t in &self.terms {
            buf.clear();
            buf.extend(t.parents.iter().map(|&p| row[p]));
            acc += eval_mechanism(&t.mechanism, &buf)?;
        }
        Ok(acc)
    }
}
