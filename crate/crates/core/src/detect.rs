//! Shifted-node detection: iterative common-leaf removal with a
//! pooled-versus-per-environment variance statistic.

use rayon::prelude::*;
use serde::{Deserialize, Serialize};

use crate::data::{common_width, EnvironmentData};
use crate::error::{Error, Result};
use crate::graph::TopologicalOrder;
use crate::matrix::Matrix;
use crate::scalar::Real;
use crate::score::{jacobian_variance_columns, KernelConfig};

pub const DEFAULT_THRESHOLD: f64 = 2.0;
pub const DEFAULT_EPSILON: f64 = 1e-9;

#[derive(Debug, Clone, Copy, PartialEq, Serialize, Deserialize)]
#[serde(tag = "mode", rename_all = "snake_case")]
pub enum Selection {
    /// `stats_j > t`
    Threshold { t: f64 },
    /// Knee of the sorted statistic profile.
    Elbow,
}

impl Default for Selection {
    fn default() -> Self {
        Selection::Threshold {
            t: DEFAULT_THRESHOLD,
        }
    }
}

#[derive(Debug, Clone, Copy, PartialEq, Serialize, Deserialize)]
#[serde(default, deny_unknown_fields)]
pub struct DetectConfig {
    pub kernel: KernelConfig,
    pub selection: Selection,
    pub epsilon: f64,
}

impl Default for DetectConfig {
    fn default() -> Self {
        Self {
            kernel: KernelConfig::default(),
            selection: Selection::default(),
            epsilon: DEFAULT_EPSILON,
        }
    }
}

impl DetectConfig {
    pub fn validate(&self) -> Result<()> {
        self.kernel.validate()?;
        if !(self.epsilon > 0.0) || !self.epsilon.is_finite() {
            return Err(Error::InvalidParameter(format!(
                "epsilon must be > 0, got {}",
                self.epsilon
            )));
        }
        if let Selection::Threshold { t } = self.selection {
            if !(t > 0.0) || !t.is_finite() {
                return Err(Error::InvalidParameter(format!("threshold must be > 0, got {t}")));
            }
        }
        Ok(())
    }
}

/// One leaf-removal round.
#[derive(Debug, Clone, PartialEq, Serialize, Deserialize)]
pub struct RoundRecord<T> {
    pub leaf: usize,
    /// Original indices of the columns still present at the start of the round.
    pub remaining: Vec<usize>,
    /// `env_vars[h][p]`: variance for `remaining[p]` in environment `h`.
    pub env_vars: Vec<Vec<T>>,
    pub rank_sum: Vec<usize>,
    /// Pooled-data variance of the chosen leaf.
    pub pooled_var: T,
}

#[derive(Debug, Clone, PartialEq, Serialize, Deserialize)]
pub struct ShiftReport<T> {
    /// Ascending original indices.
    pub shifted: Vec<usize>,
    pub order: TopologicalOrder,
    /// Indexed by original column.
    pub stats: Vec<T>,
    pub iteration_log: Vec<RoundRecord<T>>,
    pub config: DetectConfig,
}

/// Position of each entry in the ascending sort; ties by index.
pub fn rank_positions<T: Real>(v: &[T]) -> Vec<usize> {
    let mut idx: Vec<usize> = (0..v.len()).collect();
    idx.sort_by(|&a, &b| v[a].partial_cmp(&v[b]).unwrap_or(std::cmp::Ordering::Equal).then(a.cmp(&b)));
    let mut rank = vec![0; v.len()];
    for (pos, &i) in idx.iter().enumerate() {
        rank[i] = pos;
    }
    rank
}

/// Indices ordered by decreasing value; ties by index.
fn descending_indices<T: Real>(v: &[T]) -> Vec<usize> {
    let mut idx: Vec<usize> = (0..v.len()).collect();
    idx.sort_by(|&a, &b| v[b].partial_cmp(&v[a]).unwrap_or(std::cmp::Ordering::Equal).then(a.cmp(&b)));
    idx
}

pub fn select_by_threshold<T: Real>(stats: &[T], t: f64) -> Vec<usize> {
    let t = T::lit(t);
    (0..stats.len()).filter(|&j| stats[j] > t).collect()
}

pub fn top_k_stats<T: Real>(stats: &[T], k: usize) -> Result<Vec<usize>> {
    if k == 0 || k > stats.len() {
        return Err(Error::InvalidParameter(format!(
            "k must lie in 1..={}, got {k}",
            stats.len()
        )));
    }
    let mut idx = descending_indices(stats);
    idx.truncate(k);
    Ok(idx)
}

/// Knee index of a non-increasing convex profile (x = 0, 1, ...), using
/// the kneedle difference curve with sensitivity 1, linear interpolation
/// and online updating. `None` when no knee is found.
pub fn kneedle_decreasing_convex(y: &[f64]) -> Option<usize> {
    let n = y.len();
    if n < 2 {
        return None;
    }
    let (ymin, ymax) = y
        .iter()
        .fold((f64::INFINITY, f64::NEG_INFINITY), |(lo, hi), &v| (lo.min(v), hi.max(v)));
    let span = ymax - ymin;
    if !(span > 0.0) || !span.is_finite() {
        return None;
    }
    let last = (n - 1) as f64;
    let x: Vec<f64> = (0..n).map(|i| i as f64 / last).collect();
    let yn: Vec<f64> = y.iter().map(|&v| (v - ymin) / span).collect();
    let top = yn.iter().copied().fold(f64::NEG_INFINITY, f64::max);
    let diff: Vec<f64> = yn.iter().zip(&x).map(|(&v, &xi)| (top - v) - xi).collect();

    let neighbours = |i: usize| (diff[i.saturating_sub(1)], diff[(i + 1).min(n - 1)]);
    let maxima: Vec<usize> = (0..n)
        .filter(|&i| {
            let (l, r) = neighbours(i);
            diff[i] >= l && diff[i] >= r
        })
        .collect();
    let is_min = |i: usize| {
        let (l, r) = neighbours(i);
        diff[i] <= l && diff[i] <= r
    };
    let first = *maxima.first()?;
    let step = x.windows(2).map(|w| w[1] - w[0]).sum::<f64>() / last;

    let mut next_max = 0;
    let mut threshold = 0.0;
    let mut threshold_index = first;
    let mut active = true;
    let mut knee = None;
    for i in first..n - 1 {
        if maxima.get(next_max) == Some(&i) {
            threshold = diff[i] - step.abs();
            threshold_index = i;
            next_max += 1;
            active = true;
        }
        if is_min(i) {
            threshold = 0.0;
            active = false;
        }
        if active && diff[i + 1] < threshold {
            knee = Some(threshold_index);
        }
    }
    knee
}

/// Nodes ranked strictly before the knee of the sorted statistics.
pub fn select_by_elbow<T: Real>(stats: &[T]) -> Vec<usize> {
    if stats.len() < 3 {
        return Vec::new();
    }
    let idx = descending_indices(stats);
    let sorted: Vec<f64> = idx.iter().map(|&i| stats[i].as_f64()).collect();
    let mut out = match kneedle_decreasing_convex(&sorted) {
        Some(k) => idx[..k].to_vec(),
        None => Vec::new(),
    };
    out.sort_unstable();
    out
}

pub fn apply_selection<T: Real>(stats: &[T], selection: &Selection) -> Vec<usize> {
    match *selection {
        Selection::Threshold { t } => select_by_threshold(stats, t),
        Selection::Elbow => select_by_elbow(stats),
    }
}

/// Detects nodes whose mechanism differs across environments.
pub fn iscan<T: Real>(datasets: &[EnvironmentData<T>], cfg: &DetectConfig) -> Result<ShiftReport<T>> {
    cfg.validate()?;
    if datasets.len() < 2 {
        return Err(Error::InvalidParameter(format!(
            "need at least 2 environments, got {}",
            datasets.len()
        )));
    }
    let d = common_width(datasets)?;
    if d == 0 {
        return Err(Error::InvalidParameter("datasets have no columns".into()));
    }
    for e in datasets {
        if e.num_samples() < 3 {
            return Err(Error::InsufficientSamples(format!(
                "environment {} has {} samples, need at least 3",
                e.env_id,
                e.num_samples()
            )));
        }
    }
    let eps = T::lit(cfg.epsilon);
    let mut remaining: Vec<usize> = (0..d).collect();
    let mut stats = vec![T::zero(); d];
    let mut reversed_order = Vec::with_capacity(d);
    let mut log = Vec::with_capacity(d);

    while !remaining.is_empty() {
        let parts: Vec<Matrix<T>> = datasets.iter().map(|e| e.values.select_columns(&remaining)).collect();
        let all: Vec<usize> = (0..remaining.len()).collect();
        let env_vars: Vec<Vec<T>> = parts
            .par_iter()
            .map(|x| jacobian_variance_columns(x, &cfg.kernel, &all))
            .collect::<Result<_>>()?;

        let mut rank_sum = vec![0usize; remaining.len()];
        for v in &env_vars {
            for (acc, r) in rank_sum.iter_mut().zip(rank_positions(v)) {
                *acc += r;
            }
        }
        // `remaining` is ascending, so the first minimum has the lowest index.
        let pos = (0..remaining.len()).min_by_key(|&p| rank_sum[p]).unwrap();
        let leaf = remaining[pos];

        let refs: Vec<&Matrix<T>> = parts.iter().collect();
        let pooled = Matrix::vstack(&refs)?;
        drop(parts);
        let pooled_var = jacobian_variance_columns(&pooled, &cfg.kernel, &[pos])?[0];
        let min_env = env_vars.iter().map(|v| v[pos]).fold(T::infinity(), T::min);
        stats[leaf] = pooled_var / (min_env + eps);

        log.push(RoundRecord {
            leaf,
            remaining: remaining.clone(),
            env_vars,
            rank_sum,
            pooled_var,
        });
        reversed_order.push(leaf);
        remaining.remove(pos);
    }
    reversed_order.reverse();
    let shifted = apply_selection(&stats, &cfg.selection);
    Ok(ShiftReport {
        shifted,
        order: TopologicalOrder::new(reversed_order)?,
        stats,
        iteration_log: log,
        config: *cfg,
    })
}

#[cfg(test)]
mod tests {
    use super::*;

    #[test]
    fn rank_examples() {
        assert_eq!(rank_positions(&[5.2, 3.1, 4.5, 1.6]), vec![3, 1, 2, 0]);
        assert_eq!(rank_positions(&[1.0, 1.0]), vec![0, 1]);
        assert_eq!(rank_positions(&[0.1, 0.2, 0.3, 0.4]), vec![0, 1, 2, 3]);
    }

    #[test]
    fn threshold_is_strict() {
        assert_eq!(select_by_threshold(&[0.9, 5.0, 1.1], 2.0), vec![1]);
        assert!(select_by_threshold(&[0.9, 1.5, 1.1], 2.0).is_empty());
        assert!(select_by_threshold(&[2.0, 1.0], 2.0).is_empty());
    }

    #[test]
    fn top_k_examples() {
        assert_eq!(top_k_stats(&[0.5, 9.0, 3.0], 2).unwrap(), vec![1, 2]);
        let mut all = top_k_stats(&[0.5, 9.0, 3.0, 3.0], 4).unwrap();
        assert_eq!(all, vec![1, 2, 3, 0]);
        all.sort();
        assert_eq!(all, vec![0, 1, 2, 3]);
        assert!(top_k_stats(&[1.0], 0).is_err());
        assert!(top_k_stats(&[1.0], 2).is_err());
    }

    #[test]
    fn elbow_two_dominant_then_drop() {
        let mut stats = vec![1.2, 1.0, 1.5, 1.3, 1.8, 20.0, 2.0, 2.5, 18.0, 3.0];
        assert_eq!(select_by_elbow(&stats), vec![5, 8]);
        stats.swap(0, 5);
        assert_eq!(select_by_elbow(&stats), vec![0, 8]);
    }

    #[test]
    fn elbow_degenerate_profiles() {
        let linear: Vec<f64> = (0..10).map(|i| 10.0 - i as f64).collect();
        assert!(select_by_elbow(&linear).is_empty());
        let shuffled = [4.0, 9.0, 1.0, 7.0, 3.0, 10.0, 2.0, 8.0, 6.0, 5.0];
        assert!(select_by_elbow(&shuffled).is_empty());
        assert!(select_by_elbow(&[3.0; 6]).is_empty());
        assert!(select_by_elbow(&[5.0, 1.0]).is_empty());
    }

    #[test]
    fn kneedle_matches_reference_fixtures() {
        // Knee indices from the reference `kneed` implementation
        // (convex, decreasing, interp1d, online).
        let cases: &[(&[f64], Option<usize>)] = &[
            (&[4.994, 1.8, 1.535, 1.431, 1.135, 1.075, 0.966, 0.72, 0.579, 0.554, 0.475, 0.343, 0.327, 0.304], Some(1)),
            (&[2.303, 1.385, 1.207, 0.754, 0.577, 0.219, 0.213, 0.199, 0.11, 0.102], Some(5)),
            (&[1.146, 0.943, 0.524, 0.159, 0.049], None),
            (&[3.572, 2.89, 0.962, 0.875, 0.564, 0.496, 0.379, 0.379, 0.309], Some(2)),
            (&[11.029, 5.107, 2.805, 2.496, 1.998, 1.154, 1.096, 1.094, 1.08, 0.797, 0.463, 0.237, 0.23, 0.156], Some(5)),
            (&[5.619, 3.952, 2.94, 2.269, 2.227, 1.276, 1.165, 0.923, 0.79, 0.574, 0.499, 0.445, 0.241], Some(5)),
            (&[6.223, 4.52, 2.287, 2.173, 1.527, 0.89, 0.741, 0.695, 0.675, 0.643, 0.598, 0.574, 0.385, 0.092], Some(5)),
            (&[4.053, 0.986, 0.865, 0.789, 0.587, 0.263], Some(1)),
            (&[3.534, 2.23, 2.014, 1.516, 0.994, 0.971, 0.694, 0.665, 0.212, 0.132, 0.087], Some(8)),
            (&[14.786, 1.218, 0.369, 0.34], Some(1)),
            (&[1.807, 1.28, 0.809, 0.781], None),
            (&[3.211, 2.323, 1.866, 1.366, 1.26, 1.043, 0.909, 0.357, 0.289, 0.282], Some(7)),
            (&[20.0, 18.0, 3.0, 2.5, 2.0, 1.8, 1.5, 1.3, 1.2, 1.0], Some(2)),
            (&[5.0, 1.0, 0.9, 0.8, 0.7], Some(1)),
            (&[10.0, 9.0, 8.0, 7.0, 6.0, 1.0], Some(0)),
        ];
        for (y, expected) in cases {
            assert_eq!(kneedle_decreasing_convex(y), *expected, "{y:?}");
        }
    }

    #[test]
    fn config_validation() {
        let mut cfg = DetectConfig::default();
        assert!(cfg.validate().is_ok());
        cfg.epsilon = 0.0;
        assert!(cfg.validate().is_err());
        cfg.epsilon = 1e-9;
        cfg.selection = Selection::Threshold { t: 0.0 };
        assert!(cfg.validate().is_err());
    }

    #[test]
    fn rejects_bad_inputs() {
        let a = EnvironmentData::new(Matrix::<f64>::zeros(10, 3), 0).unwrap();
        let b = EnvironmentData::new(Matrix::<f64>::zeros(10, 2), 1).unwrap();
        let cfg = DetectConfig::default();
        assert!(matches!(iscan(&[a.clone(), b], &cfg), Err(Error::DimensionMismatch(_))));
        assert!(iscan(&[a.clone()], &cfg).is_err());
        let short = EnvironmentData::new(Matrix::<f64>::zeros(2, 3), 1).unwrap();
        assert!(matches!(iscan(&[a, short], &cfg), Err(Error::InsufficientSamples(_))));
    }
}
