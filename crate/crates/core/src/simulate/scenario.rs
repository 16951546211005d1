use std::collections::{BTreeMap, BTreeSet};

use rand::seq::{IndexedRandom, SliceRandom};
use serde::{Deserialize, Serialize};

use super::mechanism::{MechanismSpec, NodeMechanism, RffFunction, DEFAULT_RFF_FEATURES, GP_BANDWIDTH};
use super::noise::{NoiseFamily, NoiseSpec};
use super::{sample_environment, MechanismMap};
use crate::data::EnvironmentData;
use crate::error::{Error, Result};
use crate::graph::{generate_er, generate_sf, Dag, Edge};
use crate::seed;

const MAX_DELETED_PARENTS: usize = 3;
const GP_SHIFT_FACTOR: f64 = 2.0;

#[derive(Debug, Clone, Copy, PartialEq, Eq, Serialize, Deserialize)]
#[serde(rename_all = "snake_case")]
pub enum ShiftKind {
    /// Same DAG everywhere; shifted nodes change their function.
    FunctionalOnly,
    /// Shifted nodes lose up to three incoming edges outside environment 0.
    EdgeDeletion,
    /// Edge deletion with random cubic-composite mechanisms on the deleted
    /// parents.
    MixedC3,
}

#[derive(Debug, Clone, Copy, PartialEq, Eq, Serialize, Deserialize)]
#[serde(rename_all = "snake_case")]
pub enum MechanismFamily {
    /// `sin(x²)` baseline with `4cos(2x² − 3x)` or c3 mixtures on shifts.
    Trig,
    /// Random-Fourier-feature GP draws (bandwidth 0.5).
    Gp,
}

#[derive(Debug, Clone, Copy, PartialEq, Eq, Serialize, Deserialize)]
#[serde(rename_all = "snake_case")]
pub enum GraphModel {
    Er,
    Sf,
}

#[derive(Debug, Clone, PartialEq, Serialize, Deserialize)]
pub struct ScenarioSpec {
    pub base_dag: Dag,
    pub num_envs: usize,
    pub shifted_fraction: f64,
    pub shift_kind: ShiftKind,
    pub mechanism: MechanismFamily,
    pub rff_features: usize,
    pub samples_per_env: Vec<usize>,
    pub noise: NoiseSpec,
    pub seed: u64,
}

impl ScenarioSpec {
    pub fn validate(&self) -> Result<()> {
        if self.num_envs < 2 {
            return Err(Error::InvalidParameter(format!(
                "need at least 2 environments, got {}",
                self.num_envs
            )));
        }
        if !(0.0..=1.0).contains(&self.shifted_fraction) {
            return Err(Error::InvalidParameter(format!(
                "shifted_fraction must lie in [0, 1], got {}",
                self.shifted_fraction
            )));
        }
        if self.samples_per_env.len() != self.num_envs {
            return Err(Error::InvalidParameter(format!(
                "{} sample sizes for {} environments",
                self.samples_per_env.len(),
                self.num_envs
            )));
        }
        if self.samples_per_env.contains(&0) {
            return Err(Error::InvalidParameter("sample sizes must be >= 1".into()));
        }
        if self.shift_kind == ShiftKind::MixedC3 && self.mechanism != MechanismFamily::Trig {
            return Err(Error::InvalidParameter(
                "mixed_c3 shifts use trig mechanisms".into(),
            ));
        }
        self.noise.validate()
    }

    pub fn num_shifted(&self) -> usize {
        let raw = self.shifted_fraction * self.base_dag.num_nodes() as f64;
        // absorb representation error such as 0.2 * 30 = 6.000000000000001
        (raw - 1e-9).ceil().max(0.0) as usize
    }
}

/// File-level scenario description; the DAG is generated from it.
#[derive(Debug, Clone, PartialEq, Serialize, Deserialize)]
#[serde(deny_unknown_fields)]
pub struct ScenarioConfig {
    pub graph: GraphModel,
    pub d: usize,
    pub k: f64,
    #[serde(default = "default_envs")]
    pub num_envs: usize,
    pub shift_kind: ShiftKind,
    #[serde(default = "default_fraction")]
    pub shifted_fraction: f64,
    #[serde(default = "default_family")]
    pub mechanism: MechanismFamily,
    #[serde(default = "default_features")]
    pub rff_features: usize,
    pub noise_family: NoiseFamily,
    #[serde(default = "default_variance")]
    pub noise_variance: f64,
    /// One size per environment, or a single size broadcast to all.
    pub samples_per_env: Vec<usize>,
    pub seed: u64,
}

fn default_envs() -> usize {
    2
}
fn default_fraction() -> f64 {
    0.2
}
fn default_family() -> MechanismFamily {
    MechanismFamily::Trig
}
fn default_features() -> usize {
    DEFAULT_RFF_FEATURES
}
fn default_variance() -> f64 {
    1.0
}

impl ScenarioConfig {
    /// ER4-style two-environment setup with `m` rows each.
    pub fn new(graph: GraphModel, d: usize, k: f64, shift_kind: ShiftKind, m: usize, seed: u64) -> Self {
        Self {
            graph,
            d,
            k,
            num_envs: 2,
            shift_kind,
            shifted_fraction: 0.2,
            mechanism: MechanismFamily::Trig,
            rff_features: DEFAULT_RFF_FEATURES,
            noise_family: NoiseFamily::Gaussian,
            noise_variance: 1.0,
            samples_per_env: vec![m],
            seed,
        }
    }

    /// Random base DAG. Scale-free graphs get a random relabeling so node
    /// indices carry no information about insertion order.
    pub fn base_dag(&self) -> Result<Dag> {
        let graph_seed = seed::derive_seed(self.seed, "graph", 0);
        match self.graph {
            GraphModel::Er => generate_er(self.d, self.k, graph_seed),
            GraphModel::Sf => {
                if self.k.fract() != 0.0 || self.k < 1.0 {
                    return Err(Error::InvalidParameter(format!(
                        "SF attachment count must be a positive integer, got {}",
                        self.k
                    )));
                }
                let g = generate_sf(self.d, self.k as usize, graph_seed)?;
                let mut perm: Vec<usize> = (0..self.d).collect();
                perm.shuffle(&mut seed::stream(self.seed, "relabel", 0));
                g.relabel(&perm)
            }
        }
    }

    pub fn to_spec(&self) -> Result<ScenarioSpec> {
        let samples_per_env = match self.samples_per_env.as_slice() {
            [m] => vec![*m; self.num_envs],
            list => list.to_vec(),
        };
        let spec = ScenarioSpec {
            base_dag: self.base_dag()?,
            num_envs: self.num_envs,
            shifted_fraction: self.shifted_fraction,
            shift_kind: self.shift_kind,
            mechanism: self.mechanism,
            rff_features: self.rff_features,
            samples_per_env,
            noise: NoiseSpec::new(self.noise_family, self.noise_variance)?,
            seed: self.seed,
        };
        spec.validate()?;
        Ok(spec)
    }
}

#[derive(Debug, Clone, PartialEq, Serialize, Deserialize)]
pub struct GroundTruth {
    pub shifted_nodes: BTreeSet<usize>,
    pub per_env_dags: Vec<Dag>,
    /// Parents whose edge into the node is removed outside environment 0.
    pub deleted_parents: BTreeMap<usize, BTreeSet<usize>>,
    pub structurally_shifted_edges: BTreeSet<Edge>,
}

/// Choose shifted nodes and the per-environment DAGs.
///
/// Environment 0 keeps the base DAG; every other environment shares one
/// shifted DAG.
pub fn inject_shifts(spec: &ScenarioSpec) -> Result<GroundTruth> {
    spec.validate()?;
    let g = &spec.base_dag;
    let d = g.num_nodes();
    let mut candidates: Vec<usize> = (0..d).filter(|&j| !g.is_root(j)).collect();
    let want = spec.num_shifted();
    if candidates.len() < want {
        return Err(Error::InvalidParameter(format!(
            "{want} shifted nodes requested but only {} non-root nodes",
            candidates.len()
        )));
    }
    let mut rng = seed::stream(spec.seed, "shifted-nodes", 0);
    candidates.shuffle(&mut rng);
    let shifted: BTreeSet<usize> = candidates[..want].iter().copied().collect();

    let mut deleted_parents = BTreeMap::new();
    let mut removed = BTreeSet::new();
    if spec.shift_kind != ShiftKind::FunctionalOnly {
        for &j in &shifted {
            let parents = g.parents(j);
            let take = MAX_DELETED_PARENTS.min(parents.len());
            let mut rng = seed::stream(spec.seed, "delete", j as u64);
            let chosen: BTreeSet<usize> = parents.choose_multiple(&mut rng, take).copied().collect();
            for &p in &chosen {
                removed.insert((p, j));
            }
            deleted_parents.insert(j, chosen);
        }
    }
    let shifted_dag = g.without_edges(&removed);
    let mut per_env_dags = vec![g.clone()];
    per_env_dags.extend(std::iter::repeat_n(shifted_dag, spec.num_envs - 1));
    Ok(GroundTruth {
        shifted_nodes: shifted,
        per_env_dags,
        deleted_parents,
        structurally_shifted_edges: removed,
    })
}

/// Per-environment structural equations implementing the scenario.
pub fn assign_mechanisms(spec: &ScenarioSpec, truth: &GroundTruth) -> Result<Vec<MechanismMap>> {
    let d = spec.base_dag.num_nodes();
    let gp = |inputs: usize, tag: &str, idx: u64| -> Result<MechanismSpec> {
        let fseed = seed::derive_seed(spec.seed, tag, idx);
        Ok(MechanismSpec::GpRff(RffFunction::new(
            inputs,
            spec.rff_features,
            GP_BANDWIDTH,
            fseed,
        )?))
    };
    let mut out = Vec::with_capacity(spec.num_envs);
    for (h, dag) in truth.per_env_dags.iter().enumerate() {
        let mut map = MechanismMap::new();
        for j in 0..d {
            let parents = dag.parents(j);
            if parents.is_empty() {
                continue;
            }
            let shifted = truth.shifted_nodes.contains(&j);
            let reference = h == 0;
            let mut node = NodeMechanism::default();
            match (spec.mechanism, spec.shift_kind) {
                (MechanismFamily::Trig, _) if !shifted => {
                    node.push(parents, MechanismSpec::SinSquare);
                }
                (MechanismFamily::Trig, ShiftKind::FunctionalOnly) => {
                    let mech = if reference {
                        MechanismSpec::SinSquare
                    } else {
                        MechanismSpec::CosMix
                    };
                    node.push(parents, mech);
                }
                (MechanismFamily::Trig, kind) => {
                    if reference {
                        let deleted = &truth.deleted_parents[&j];
                        let (gone, kept): (Vec<usize>, Vec<usize>) =
                            parents.iter().partition(|p| deleted.contains(p));
                        node.push(kept, MechanismSpec::SinSquare);
                        let mech = if kind == ShiftKind::MixedC3 {
                            let mut rng = seed::stream(spec.seed, "c3", j as u64);
                            MechanismSpec::random_c3(gone.len(), &mut rng)
                        } else {
                            MechanismSpec::CosMix
                        };
                        node.push(gone, mech);
                    } else {
                        node.push(parents, MechanismSpec::SinSquare);
                    }
                }
                (MechanismFamily::Gp, _) if !shifted => {
                    let n = parents.len();
                    node.push(parents, gp(n, "gp-invariant", j as u64)?);
                }
                (MechanismFamily::Gp, _) => {
                    let n = parents.len();
                    if reference {
                        node.push(parents, gp(n, "gp-reference", j as u64)?);
                    } else {
                        let base = gp(n, "gp-shifted", j as u64)?;
                        node.push(
                            parents,
                            MechanismSpec::Scaled {
                                base: Box::new(base),
                                factor: GP_SHIFT_FACTOR,
                            },
                        );
                    }
                }
            }
            map.insert(j, node);
        }
        out.push(map);
    }
    Ok(out)
}

/// A simulated multi-environment dataset with its ground truth.
#[derive(Debug, Clone)]
pub struct Scenario {
    pub datasets: Vec<EnvironmentData<f64>>,
    pub truth: GroundTruth,
    pub mechanisms: Vec<MechanismMap>,
}

pub fn build_scenario(spec: &ScenarioSpec) -> Result<Scenario> {
    let truth = inject_shifts(spec)?;
    let mechanisms = assign_mechanisms(spec, &truth)?;
    let mut datasets = Vec::with_capacity(spec.num_envs);
    for h in 0..spec.num_envs {
        let env_seed = seed::derive_seed(spec.seed, "environment", h as u64);
        let mut data = sample_environment(
            &truth.per_env_dags[h],
            &mechanisms[h],
            &spec.noise,
            spec.samples_per_env[h],
            env_seed,
        )?;
        data.env_id = h;
        datasets.push(data);
    }
    Ok(Scenario {
        datasets,
        truth,
        mechanisms,
    })
}
