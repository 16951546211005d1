//! Rank-based conditional dependence coefficient and forward selection.

use rand::Rng as _;
use serde::{Deserialize, Serialize};
use statrs::distribution::{ContinuousCDF, Normal};

use crate::error::{Error, Result};
use crate::matrix::Matrix;
use crate::scalar::Real;
use crate::seed::Rng;

#[derive(Debug, Clone, Copy, PartialEq, Serialize, Deserialize)]
pub struct CodecValue {
    pub t: f64,
}

fn cmp<T: Real>(a: &T, b: &T) -> std::cmp::Ordering {
    a.partial_cmp(b).unwrap_or(std::cmp::Ordering::Equal)
}

/// `#{j : v_j <= v_i}` for every `i`.
fn ranks_le<T: Real>(v: &[T]) -> Vec<u64> {
    let n = v.len();
    let mut idx: Vec<usize> = (0..n).collect();
    idx.sort_by(|&a, &b| cmp(&v[a], &v[b]));
    let mut out = vec![0u64; n];
    let mut start = 0;
    while start < n {
        let mut end = start + 1;
        while end < n && v[idx[end]] == v[idx[start]] {
            end += 1;
        }
        for &i in &idx[start..end] {
            out[i] = end as u64;
        }
        start = end;
    }
    out
}

/// `#{j : v_j >= v_i}` for every `i`.
fn ranks_ge<T: Real>(v: &[T]) -> Vec<u64> {
    let neg: Vec<T> = v.iter().map(|&x| -x).collect();
    ranks_le(&neg)
}

/// Per-coordinate normal scores `Φ⁻¹(rank / (n + 1))`; nearest-neighbour
/// search runs on these. Being a function of ranks only, they make the
/// coefficient invariant under increasing maps of each coordinate, while
/// unlike raw ranks they do not put both 1-D neighbours at equal distance.
#[derive(Debug, Clone)]
pub(crate) struct RankColumns {
    cols: Vec<Vec<f64>>,
}

impl RankColumns {
    pub(crate) fn from_matrix<T: Real>(x: &Matrix<T>) -> Self {
        let n = x.nrows() as f64;
        let std_normal = Normal::standard();
        let cols = (0..x.ncols())
            .map(|j| {
                ranks_le(&x.column(j))
                    .into_iter()
                    .map(|r| std_normal.inverse_cdf(r as f64 / (n + 1.0)))
                    .collect()
            })
            .collect();
        Self { cols }
    }

    fn select(&self, which: &[usize]) -> Vec<&[f64]> {
        which.iter().map(|&c| self.cols[c].as_slice()).collect()
    }
}

/// Nearest neighbour of every row (excluding itself) in the space spanned by
/// `cols`; ties drawn uniformly from `rng`.
fn nearest_neighbours(cols: &[&[f64]], n: usize, rng: &mut Rng) -> Vec<usize> {
    let mut out = Vec::with_capacity(n);
    let mut ties = Vec::new();
    for i in 0..n {
        let mut best = f64::INFINITY;
        ties.clear();
        for k in 0..n {
            if k == i {
                continue;
            }
            let mut dist = 0.0;
            for c in cols {
                let diff = c[i] - c[k];
                dist += diff * diff;
                if dist > best {
                    break;
                }
            }
            if dist < best {
                best = dist;
                ties.clear();
                ties.push(k);
            } else if dist == best {
                ties.push(k);
            }
        }
        let pick = if ties.len() == 1 {
            ties[0]
        } else {
            ties[rng.random_range(0..ties.len())]
        };
        out.push(pick);
    }
    out
}

fn check_inputs<T: Real>(y: &[T], mats: &[&Matrix<T>]) -> Result<()> {
    let n = y.len();
    if n < 3 {
        return Err(Error::InsufficientSamples(format!("codec needs n >= 3, got {n}")));
    }
    if y.iter().any(|v| !v.is_finite()) {
        return Err(Error::NonFinite("codec response".into()));
    }
    for m in mats {
        if m.nrows() != n {
            return Err(Error::DimensionMismatch(format!(
                "response has {n} rows, predictors have {}",
                m.nrows()
            )));
        }
        if let Some((i, j)) = m.first_non_finite() {
            return Err(Error::NonFinite(format!("codec predictor row {i} column {j}")));
        }
    }
    Ok(())
}

fn unconditional(r: &[u64], l: &[u64], m: &[usize]) -> Result<f64> {
    let n = r.len() as i128;
    let mut num: i128 = 0;
    let mut den: i128 = 0;
    for i in 0..r.len() {
        let li = l[i] as i128;
        num += n * r[i].min(r[m[i]]) as i128 - li * li;
        den += li * (n - li);
    }
    if den == 0 {
        return Err(Error::DegenerateDenominator);
    }
    Ok(num as f64 / den as f64)
}

fn conditional(r: &[u64], m: &[usize], nb: &[usize]) -> Result<f64> {
    let mut num: i128 = 0;
    let mut den: i128 = 0;
    for i in 0..r.len() {
        let rn = r[i].min(r[nb[i]]) as i128;
        num += r[i].min(r[m[i]]) as i128 - rn;
        den += r[i] as i128 - rn;
    }
    if den == 0 {
        return Err(Error::DegenerateDenominator);
    }
    Ok(num as f64 / den as f64)
}

/// Dependence of `y` on `z`, optionally given `x_cond`.
///
/// Predictors enter only through per-coordinate ranks, so the value is
/// unchanged by strictly increasing maps of any coordinate.
pub fn codec<T: Real>(
    y: &[T],
    z: &Matrix<T>,
    x_cond: Option<&Matrix<T>>,
    rng: &mut Rng,
) -> Result<CodecValue> {
    let mut mats = vec![z];
    mats.extend(x_cond);
    check_inputs(y, &mats)?;
    let n = y.len();
    let r = ranks_le(y);
    let zr = RankColumns::from_matrix(z);
    let t = match x_cond {
        None => {
            let l = ranks_ge(y);
            let all: Vec<usize> = (0..z.ncols()).collect();
            let m = nearest_neighbours(&zr.select(&all), n, rng);
            unconditional(&r, &l, &m)?
        }
        Some(x) => {
            let xr = RankColumns::from_matrix(x);
            let xcols: Vec<usize> = (0..x.ncols()).collect();
            let zcols: Vec<usize> = (0..z.ncols()).collect();
            let nb = nearest_neighbours(&xr.select(&xcols), n, rng);
            let mut joint = xr.select(&xcols);
            joint.extend(zr.select(&zcols));
            let m = nearest_neighbours(&joint, n, rng);
            conditional(&r, &m, &nb)?
        }
    };
    Ok(CodecValue { t })
}

#[derive(Debug, Clone, Copy, PartialEq, Serialize, Deserialize)]
#[serde(default, deny_unknown_fields)]
pub struct FociConfig {
    /// Selection continues while the best gain exceeds this (default 0).
    pub min_gain: f64,
    pub seed: u64,
}

impl Default for FociConfig {
    fn default() -> Self {
        Self { min_gain: 0.0, seed: 0 }
    }
}

/// Greedy forward selection of the candidate columns that predict `target`.
/// Returns candidate positions in selection order.
pub fn foci_select<T: Real>(
    candidates: &Matrix<T>,
    target: &[T],
    min_gain: f64,
    rng: &mut Rng,
) -> Result<Vec<usize>> {
    let p = candidates.ncols();
    if p == 0 {
        return Ok(Vec::new());
    }
    check_inputs(target, &[candidates])?;
    let n = target.len();
    let r = ranks_le(target);
    let l = ranks_ge(target);
    let ranks = RankColumns::from_matrix(candidates);
    let mut selected: Vec<usize> = Vec::new();

    while selected.len() < p {
        let base = if selected.is_empty() {
            None
        } else {
            Some(nearest_neighbours(&ranks.select(&selected), n, rng))
        };
        let mut best: Option<(usize, f64)> = None;
        let mut degenerate = false;
        for c in (0..p).filter(|c| !selected.contains(c)) {
            let mut cols = selected.clone();
            cols.push(c);
            let m = nearest_neighbours(&ranks.select(&cols), n, rng);
            let t = match &base {
                None => unconditional(&r, &l, &m),
                Some(nb) => conditional(&r, &m, nb),
            };
            match t {
                Ok(t) => {
                    if best.is_none_or(|(_, b)| t > b) {
                        best = Some((c, t));
                    }
                }
                Err(Error::DegenerateDenominator) => {
                    degenerate = true;
                    break;
                }
                Err(e) => return Err(e),
            }
        }
        match best {
            Some((c, t)) if !degenerate && t > min_gain => selected.push(c),
            _ => break,
        }
    }
    Ok(selected)
}
