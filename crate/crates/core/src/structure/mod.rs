//! Localizing which edges into shifted nodes changed across environments.

mod basis;
mod codec;
mod regression;

use std::collections::{BTreeMap, BTreeSet};

use rayon::prelude::*;
use serde::{Deserialize, Serialize};

pub use basis::{basis_expand, BasisConfig, BasisFamily};
pub use codec::{codec, foci_select, CodecValue, FociConfig};
pub use regression::{additive_design, fit_additive, wald_equality, AdditiveFit, WaldResult};

use crate::data::{common_width, EnvironmentData};
use crate::error::{Error, Result};
use crate::graph::{dot_from_edges, Edge, TopologicalOrder};
use crate::matrix::Matrix;
use crate::scalar::Real;
use crate::seed;

#[derive(Debug, Clone, Copy, PartialEq, Eq, Serialize, Deserialize)]
#[serde(rename_all = "snake_case")]
pub enum DiffKind {
    Structural,
    Functional,
}

/// Per-edge evidence. Structural rows list the environments whose selected
/// parents include the source; functional rows carry the test outcome.
#[derive(Debug, Clone, PartialEq, Serialize, Deserialize)]
pub struct EdgeDetail {
    pub source: usize,
    pub target: usize,
    pub shifted: bool,
    #[serde(skip_serializing_if = "Option::is_none", default)]
    pub present_in: Option<Vec<usize>>,
    #[serde(skip_serializing_if = "Option::is_none", default)]
    pub statistic: Option<f64>,
    #[serde(skip_serializing_if = "Option::is_none", default)]
    pub df: Option<usize>,
    #[serde(skip_serializing_if = "Option::is_none", default)]
    pub p_value: Option<f64>,
}

/// Selected parents: node → environment id → parent set.
#[derive(Debug, Clone, Default, PartialEq, Serialize, Deserialize)]
pub struct ParentEstimate {
    pub per_node: BTreeMap<usize, BTreeMap<usize, BTreeSet<usize>>>,
}

#[derive(Debug, Clone, PartialEq, Serialize, Deserialize)]
pub struct SkippedTarget {
    pub node: usize,
    pub reason: String,
}

#[derive(Debug, Clone, PartialEq, Serialize, Deserialize)]
pub struct DiffEdges {
    pub kind: DiffKind,
    pub edges: BTreeSet<Edge>,
    pub details: Vec<EdgeDetail>,
    #[serde(skip_serializing_if = "Option::is_none", default)]
    pub parents: Option<ParentEstimate>,
    #[serde(default)]
    pub skipped: Vec<SkippedTarget>,
}

impl DiffEdges {
    /// DOT rendering with shifted edges in red. Structural output also
    /// draws every selected parent edge.
    pub fn to_dot(&self, num_nodes: usize, labels: Option<&[String]>) -> String {
        let drawn: BTreeSet<Edge> = match self.kind {
            DiffKind::Structural => self.details.iter().map(|d| (d.source, d.target)).collect(),
            DiffKind::Functional => self.edges.clone(),
        };
        dot_from_edges(num_nodes, drawn, labels, Some(&self.edges))
    }
}

fn check_targets<T: Real>(
    datasets: &[EnvironmentData<T>],
    order: &TopologicalOrder,
    shifted: &BTreeSet<usize>,
) -> Result<usize> {
    if datasets.is_empty() {
        return Err(Error::InvalidParameter("no datasets".into()));
    }
    let d = common_width(datasets)?;
    if order.len() != d {
        return Err(Error::DimensionMismatch(format!(
            "order covers {} nodes, data has {d} columns",
            order.len()
        )));
    }
    if let Some(j) = shifted.iter().find(|&&j| j >= d) {
        return Err(Error::InvalidParameter(format!("shifted node {j} out of range")));
    }
    Ok(d)
}

/// Selects parents of each shifted node per environment among its
/// predecessors, then reports the edges whose presence differs.
pub fn diff_structural_edges<T: Real>(
    datasets: &[EnvironmentData<T>],
    order: &TopologicalOrder,
    shifted: &BTreeSet<usize>,
    cfg: &FociConfig,
) -> Result<DiffEdges> {
    check_targets(datasets, order, shifted)?;
    let targets: Vec<usize> = shifted.iter().copied().collect();
    let per_target: Vec<Vec<BTreeSet<usize>>> = targets
        .par_iter()
        .map(|&j| {
            let pre = order.predecessors(j);
            datasets
                .iter()
                .enumerate()
                .map(|(h, env)| {
                    let cands = env.values.select_columns(&pre);
                    let target = env.values.column(j);
                    let mut rng = seed::stream(cfg.seed, "foci", ((j as u64) << 32) | h as u64);
                    let picked = foci_select(&cands, &target, cfg.min_gain, &mut rng)?;
                    Ok(picked.into_iter().map(|p| pre[p]).collect())
                })
                .collect::<Result<Vec<_>>>()
        })
        .collect::<Result<_>>()?;

    let mut edges = BTreeSet::new();
    let mut details = Vec::new();
    let mut parents = ParentEstimate::default();
    for (&j, sets) in targets.iter().zip(&per_target) {
        let union: BTreeSet<usize> = sets.iter().flatten().copied().collect();
        for &k in &union {
            let present_in: Vec<usize> = sets
                .iter()
                .zip(datasets)
                .filter(|(s, _)| s.contains(&k))
                .map(|(_, e)| e.env_id)
                .collect();
            let shifted = present_in.len() < sets.len();
            if shifted {
                edges.insert((k, j));
            }
            details.push(EdgeDetail {
                source: k,
                target: j,
                shifted,
                present_in: Some(present_in),
                statistic: None,
                df: None,
                p_value: None,
            });
        }
        let by_env = sets
            .iter()
            .zip(datasets)
            .map(|(s, e)| (e.env_id, s.clone()))
            .collect();
        parents.per_node.insert(j, by_env);
    }
    Ok(DiffEdges {
        kind: DiffKind::Structural,
        edges,
        details,
        parents: Some(parents),
        skipped: Vec::new(),
    })
}

/// Pooled per-column location and scale.
fn pooled_standardization(datasets: &[EnvironmentData<f64>], d: usize) -> Vec<(f64, f64)> {
    (0..d)
        .map(|j| {
            let vals: Vec<f64> = datasets.iter().flat_map(|e| e.values.column(j)).collect();
            let n = vals.len() as f64;
            let mean = vals.iter().sum::<f64>() / n;
            let var = vals.iter().map(|v| (v - mean).powi(2)).sum::<f64>() / (n - 1.0);
            let sd = var.sqrt();
            (mean, if sd > 0.0 { sd } else { 1.0 })
        })
        .collect()
}

/// Regresses each shifted node on basis expansions of its predecessors in
/// every environment and tests each predecessor's coefficient block for
/// equality across environments.
pub fn diff_functional_edges<T: Real>(
    datasets: &[EnvironmentData<T>],
    order: &TopologicalOrder,
    shifted: &BTreeSet<usize>,
    cfg: &BasisConfig,
) -> Result<DiffEdges> {
    cfg.validate()?;
    let d = check_targets(datasets, order, shifted)?;
    if datasets.len() < 2 {
        return Err(Error::InvalidParameter("need at least 2 environments".into()));
    }
    let data: Vec<EnvironmentData<f64>> = datasets.iter().map(|e| e.cast()).collect();
    let scale = if cfg.standardize {
        pooled_standardization(&data, d)
    } else {
        vec![(0.0, 1.0); d]
    };
    let r = cfg.family.regression_width();

    let mut edges = BTreeSet::new();
    let mut details = Vec::new();
    let mut skipped = Vec::new();
    for &j in shifted {
        let pre = order.predecessors(j);
        if pre.is_empty() {
            continue;
        }
        let need = pre.len() * r + 1;
        if let Some(e) = data.iter().find(|e| e.num_samples() <= need) {
            return Err(Error::InsufficientSamples(format!(
                "node {j}: environment {} has {} samples for {need} coefficients",
                e.env_id,
                e.num_samples()
            )));
        }
        let fits: Vec<Result<AdditiveFit>> = data
            .par_iter()
            .map(|e| {
                let x = Matrix::from_fn(e.num_samples(), pre.len(), |i, p| {
                    let (mu, sd) = scale[pre[p]];
                    (e.values.get(i, pre[p]) - mu) / sd
                });
                fit_additive(&x, &e.values.column(j), &cfg.family).map_err(|err| match err {
                    Error::SingularSystem { .. } => Error::RankDeficient { node: j, env: e.env_id },
                    other => other,
                })
            })
            .collect();
        let mut ok = Vec::with_capacity(fits.len());
        let mut failure = None;
        for f in fits {
            match f {
                Ok(fit) => ok.push(fit),
                Err(e @ Error::RankDeficient { .. }) | Err(e @ Error::InvalidParameter(_)) => {
                    failure = Some(e.to_string());
                    break;
                }
                Err(e) => return Err(e),
            }
        }
        if let Some(reason) = failure {
            log::warn!("skipping node {j}: {reason}");
            skipped.push(SkippedTarget { node: j, reason });
            continue;
        }
        for (p, &k) in pre.iter().enumerate() {
            let blocks: Vec<&[f64]> = ok.iter().map(|f| f.blocks[p].as_slice()).collect();
            let covs: Vec<Matrix<f64>> = ok.iter().map(|f| f.block_covariance(p)).collect();
            let w = match wald_equality(&blocks, &covs) {
                Ok(w) => w,
                Err(Error::SingularSystem { .. }) => {
                    log::warn!("skipping edge ({k}, {j}): singular coefficient covariance");
                    continue;
                }
                Err(e) => return Err(e),
            };
            let reject = w.p_value < cfg.alpha;
            if reject {
                edges.insert((k, j));
            }
            details.push(EdgeDetail {
                source: k,
                target: j,
                shifted: reject,
                present_in: None,
                statistic: Some(w.statistic),
                df: Some(w.df),
                p_value: Some(w.p_value),
            });
        }
    }
    Ok(DiffEdges {
        kind: DiffKind::Functional,
        edges,
        details,
        parents: None,
        skipped,
    })
}

#[cfg(test)]
mod tests {
    use super::*;
    use rand::Rng;

    fn envs(seed: u64, m: usize) -> Vec<EnvironmentData<f64>> {
        (0..2)
            .map(|h| {
                let mut rng = seed::stream(seed, "env", h);
                let x = Matrix::from_fn(m, 3, |_, _| rng.random::<f64>());
                EnvironmentData::new(x, h as usize).unwrap()
            })
            .collect()
    }

    #[test]
    fn empty_shifted_set_gives_no_edges() {
        let data = envs(1, 50);
        let order = TopologicalOrder::new(vec![0, 1, 2]).unwrap();
        let none = BTreeSet::new();
        let s = diff_structural_edges(&data, &order, &none, &FociConfig::default()).unwrap();
        assert!(s.edges.is_empty() && s.details.is_empty());
        let f = diff_functional_edges(&data, &order, &none, &BasisConfig::default()).unwrap();
        assert!(f.edges.is_empty() && f.details.is_empty());
    }

    #[test]
    fn edges_point_into_shifted_nodes_from_earlier_nodes() {
        let mut data = envs(2, 300);
        // Environment 1: node 2 driven by node 0; environment 0: by node 1.
        for i in 0..300 {
            for (h, src) in [(0, 1), (1, 0)] {
                let v = data[h].values.get(i, src);
                let noise = data[h].values.get(i, 2);
                data[h].values.set(i, 2, (4.0 * v).sin() + 0.05 * noise);
            }
        }
        let order = TopologicalOrder::new(vec![1, 0, 2]).unwrap();
        let shifted: BTreeSet<usize> = [2].into();
        let pos = order.positions();
        for diff in [
            diff_structural_edges(&data, &order, &shifted, &FociConfig::default()).unwrap(),
            diff_functional_edges(&data, &order, &shifted, &BasisConfig::default()).unwrap(),
        ] {
            assert!(!diff.edges.is_empty());
            for &(k, j) in &diff.edges {
                assert_eq!(j, 2);
                assert!(pos[k] < pos[j]);
            }
        }
        let s = diff_structural_edges(&data, &order, &shifted, &FociConfig::default()).unwrap();
        assert_eq!(s.edges, [(0, 2), (1, 2)].into());
    }

    #[test]
    fn json_and_dot() {
        let diff = DiffEdges {
            kind: DiffKind::Functional,
            edges: [(0, 2)].into(),
            details: vec![EdgeDetail {
                source: 0,
                target: 2,
                shifted: true,
                present_in: None,
                statistic: Some(30.5),
                df: Some(5),
                p_value: Some(1e-5),
            }],
            parents: None,
            skipped: Vec::new(),
        };
        let json = serde_json::to_string(&diff).unwrap();
        assert!(json.contains("\"kind\":\"functional\""));
        let back: DiffEdges = serde_json::from_str(&json).unwrap();
        assert_eq!(back, diff);
        assert!(diff.to_dot(3, None).contains("0 -> 2 [color=red];"));
    }

    #[test]
    fn rank_deficient_target_is_skipped() {
        let mut data = envs(3, 40);
        for e in &mut data {
            for i in 0..40 {
                let v = e.values.get(i, 0);
                e.values.set(i, 1, v);
            }
        }
        let order = TopologicalOrder::new(vec![0, 1, 2]).unwrap();
        let shifted: BTreeSet<usize> = [2].into();
        let cfg = BasisConfig {
            standardize: false,
            ..BasisConfig::default()
        };
        let f = diff_functional_edges(&data, &order, &shifted, &cfg).unwrap();
        assert_eq!(f.skipped.len(), 1);
        assert!(f.edges.is_empty());
    }
}
