//! Set-level scoring against ground truth and the seeded benchmark grid.

use std::collections::BTreeSet;
use std::io::Write;
use std::time::Instant;

use rayon::prelude::*;
use serde::{Deserialize, Serialize};

use crate::detect::{iscan, top_k_stats, DetectConfig};
use crate::error::{Error, Result};
use crate::scalar::Real;
use crate::simulate::{build_scenario, ScenarioConfig};
use crate::structure::{diff_structural_edges, FociConfig};

#[derive(Debug, Clone, Copy, PartialEq, Serialize, Deserialize)]
pub struct Metrics {
    pub precision: f64,
    pub recall: f64,
    pub f1: f64,
}

/// Precision, recall and F1 of `predicted` against `truth`.
///
/// Empty sets: both empty scores 1/1/1, an empty prediction has precision 1,
/// and an empty truth has recall 1.
pub fn set_metrics<K: Ord>(predicted: &BTreeSet<K>, truth: &BTreeSet<K>) -> Metrics {
    let hits = predicted.intersection(truth).count() as f64;
    let precision = if predicted.is_empty() {
        1.0
    } else {
        hits / predicted.len() as f64
    };
    let recall = if truth.is_empty() {
        1.0
    } else {
        hits / truth.len() as f64
    };
    let f1 = if precision + recall > 0.0 {
        2.0 * precision * recall / (precision + recall)
    } else {
        0.0
    };
    Metrics { precision, recall, f1 }
}

/// Fraction of the `k` largest statistics that are truly shifted.
pub fn top_k_precision<T: Real>(stats: &[T], truth: &BTreeSet<usize>, k: usize) -> Result<f64> {
    let top = top_k_stats(stats, k)?;
    Ok(top.iter().filter(|j| truth.contains(j)).count() as f64 / k as f64)
}

#[derive(Debug, Clone, Copy, PartialEq, Serialize, Deserialize)]
pub struct MeanSe {
    pub mean: f64,
    /// Sample standard deviation over `sqrt(n)`; zero for a single value.
    pub stderr: f64,
}

impl MeanSe {
    /// `None` for an empty sample. Values are summed in the given order.
    pub fn of(values: &[f64]) -> Option<Self> {
        let n = values.len();
        if n == 0 {
            return None;
        }
        let mean = values.iter().sum::<f64>() / n as f64;
        let stderr = if n > 1 {
            let var = values.iter().map(|v| (v - mean).powi(2)).sum::<f64>() / (n - 1) as f64;
            (var / n as f64).sqrt()
        } else {
            0.0
        };
        Some(Self { mean, stderr })
    }
}

/// One benchmark configuration. Seed `s` of a run uses scenario seed
/// `scenario.seed + s`.
#[derive(Debug, Clone, PartialEq, Serialize, Deserialize)]
#[serde(deny_unknown_fields)]
pub struct GridCell {
    #[serde(default)]
    pub label: Option<String>,
    pub scenario: ScenarioConfig,
    #[serde(default)]
    pub detect: DetectConfig,
    /// Also recover structurally shifted edges on the estimated order.
    #[serde(default)]
    pub structural: Option<FociConfig>,
}

#[derive(Debug, Clone, PartialEq, Serialize, Deserialize)]
pub struct SeedRecord {
    pub seed: u64,
    pub node: Option<Metrics>,
    pub edge: Option<Metrics>,
    /// Wall-clock of the detection step.
    pub seconds: Option<f64>,
    pub error: Option<String>,
}

#[derive(Debug, Clone, PartialEq, Serialize, Deserialize)]
pub struct Aggregate {
    pub runs: usize,
    pub failures: usize,
    pub node_precision: Option<MeanSe>,
    pub node_recall: Option<MeanSe>,
    pub node_f1: Option<MeanSe>,
    pub edge_f1: Option<MeanSe>,
    pub seconds: Option<MeanSe>,
}

impl Aggregate {
    fn from_records(records: &[SeedRecord]) -> Self {
        let ok: Vec<&SeedRecord> = records.iter().filter(|r| r.error.is_none()).collect();
        let node = |f: fn(&Metrics) -> f64| {
            MeanSe::of(&ok.iter().filter_map(|r| r.node.as_ref().map(f)).collect::<Vec<_>>())
        };
        Self {
            runs: records.len(),
            failures: records.len() - ok.len(),
            node_precision: node(|m| m.precision),
            node_recall: node(|m| m.recall),
            node_f1: node(|m| m.f1),
            edge_f1: MeanSe::of(&ok.iter().filter_map(|r| r.edge.map(|m| m.f1)).collect::<Vec<_>>()),
            seconds: MeanSe::of(&ok.iter().filter_map(|r| r.seconds).collect::<Vec<_>>()),
        }
    }
}

#[derive(Debug, Clone, PartialEq, Serialize, Deserialize)]
pub struct BenchmarkResult {
    pub cell: GridCell,
    pub records: Vec<SeedRecord>,
    pub aggregate: Aggregate,
}

/// Simulate, detect and score a single seed of a cell.
pub fn run_seed(cell: &GridCell, seed: u64) -> Result<SeedRecord> {
    let mut scenario = cell.scenario.clone();
    scenario.seed = seed;
    let sc = build_scenario(&scenario.to_spec()?)?;
    let start = Instant::now();
    let report = iscan(&sc.datasets, &cell.detect)?;
    let seconds = start.elapsed().as_secs_f64();
    let predicted: BTreeSet<usize> = report.shifted.iter().copied().collect();
    let node = set_metrics(&predicted, &sc.truth.shifted_nodes);
    let edge = match &cell.structural {
        Some(foci) => {
            let cfg = FociConfig { seed, ..*foci };
            let diff = diff_structural_edges(&sc.datasets, &report.order, &predicted, &cfg)?;
            Some(set_metrics(&diff.edges, &sc.truth.structurally_shifted_edges))
        }
        None => None,
    };
    Ok(SeedRecord {
        seed,
        node: Some(node),
        edge,
        seconds: Some(seconds),
        error: None,
    })
}

/// Runs every cell for `seeds` seeds. Failing runs are kept as records with
/// an error tag and left out of the aggregates.
pub fn run_benchmark(grid: &[GridCell], seeds: usize) -> Result<Vec<BenchmarkResult>> {
    if grid.is_empty() {
        return Err(Error::InvalidParameter("benchmark grid is empty".into()));
    }
    if seeds == 0 {
        return Err(Error::InvalidParameter("need at least one seed".into()));
    }
    let jobs: Vec<(usize, u64)> = (0..grid.len())
        .flat_map(|c| (0..seeds as u64).map(move |s| (c, s)))
        .collect();
    let records: Vec<SeedRecord> = jobs
        .par_iter()
        .map(|&(c, s)| {
            let seed = grid[c].scenario.seed.wrapping_add(s);
            run_seed(&grid[c], seed).unwrap_or_else(|e| {
                log::warn!("cell {c} seed {seed}: {e}");
                SeedRecord {
                    seed,
                    node: None,
                    edge: None,
                    seconds: None,
                    error: Some(format!("{}: {e}", e.tag())),
                }
            })
        })
        .collect();
    Ok(grid
        .iter()
        .zip(records.chunks(seeds))
        .map(|(cell, recs)| BenchmarkResult {
            cell: cell.clone(),
            records: recs.to_vec(),
            aggregate: Aggregate::from_records(recs),
        })
        .collect())
}

pub const RESULT_COLUMNS: [&str; 19] = [
    "cell",
    "label",
    "graph",
    "k",
    "d",
    "noise",
    "shift_kind",
    "mechanism",
    "samples_per_env",
    "seed",
    "node_precision",
    "node_recall",
    "node_f1",
    "edge_precision",
    "edge_recall",
    "edge_f1",
    "seconds",
    "selection",
    "error",
];

fn lower_name<S: Serialize>(v: &S) -> String {
    serde_json::to_value(v)
        .ok()
        .and_then(|v| v.as_str().map(str::to_owned))
        .unwrap_or_default()
}

/// One CSV row per cell and seed.
pub fn write_results_csv<W: Write>(results: &[BenchmarkResult], out: W) -> Result<()> {
    let mut w = csv::Writer::from_writer(out);
    w.write_record(RESULT_COLUMNS)?;
    let opt = |v: Option<f64>| v.map(|x| x.to_string()).unwrap_or_default();
    for (c, res) in results.iter().enumerate() {
        let sc = &res.cell.scenario;
        let sizes: Vec<String> = sc.samples_per_env.iter().map(|m| m.to_string()).collect();
        let selection = serde_json::to_string(&res.cell.detect.selection)?;
        for r in &res.records {
            w.write_record([
                c.to_string(),
                res.cell.label.clone().unwrap_or_default(),
                lower_name(&sc.graph),
                sc.k.to_string(),
                sc.d.to_string(),
                lower_name(&sc.noise_family),
                lower_name(&sc.shift_kind),
                lower_name(&sc.mechanism),
                sizes.join(";"),
                r.seed.to_string(),
                opt(r.node.map(|m| m.precision)),
                opt(r.node.map(|m| m.recall)),
                opt(r.node.map(|m| m.f1)),
                opt(r.edge.map(|m| m.precision)),
                opt(r.edge.map(|m| m.recall)),
                opt(r.edge.map(|m| m.f1)),
                opt(r.seconds),
                selection.clone(),
                r.error.clone().unwrap_or_default(),
            ])?;
        }
    }
    w.flush()?;
    Ok(())
}

/// Per-cell `(x, mean, stderr)` triples of node F1, for external plotting.
pub fn plot_series(results: &[BenchmarkResult], x: impl Fn(&GridCell) -> f64) -> Vec<(f64, f64, f64)> {
    results
        .iter()
        .filter_map(|r| r.aggregate.node_f1.map(|a| (x(&r.cell), a.mean, a.stderr)))
        .collect()
}
