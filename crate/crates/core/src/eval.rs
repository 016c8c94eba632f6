//! Accuracy metrics and posterior summaries of fitted excitation functions.
//!
//! Curves are evaluated on a midpoint grid over `(0, T0)`. All K×K arrays are
//! indexed parent-first.

use std::path::Path;

use rayon::prelude::*;
use serde::{Deserialize, Serialize};

use crate::error::{ensure_positive, Error, Result};
use crate::linalg::spectral_radius;
use crate::model::HawkesParams;

/// `n_points` midpoints spanning `(0, support)`.
#[derive(Debug, Clone, Copy, PartialEq, Serialize, Deserialize)]
pub struct GridSpec {
    pub n_points: usize,
    #[serde(rename = "T0")]
    pub support: f64,
}

impl GridSpec {
    pub const DEFAULT_POINTS: usize = 512;

    pub fn new(n_points: usize, support: f64) -> Result<Self> {
        if n_points < 2 {
            return Err(Error::Config(format!("grid needs at least 2 points, got {n_points}")));
        }
        ensure_positive("T0", support)?;
        Ok(Self { n_points, support })
    }

    pub fn with_default_points(support: f64) -> Result<Self> {
        Self::new(Self::DEFAULT_POINTS, support)
    }

    pub fn spacing(&self) -> f64 {
        self.support / self.n_points as f64
    }

    pub fn points(&self) -> Vec<f64> {
        let dx = self.spacing();
        (0..self.n_points).map(|i| (i as f64 + 0.5) * dx).collect()
    }
}

/// One curve per (parent, child) pair on a grid.
#[derive(Debug, Clone, PartialEq)]
pub struct Curves {
    pub num_dims: usize,
    pub grid: GridSpec,
    /// `values[pair][point]`.
    pub values: Vec<Vec<f64>>,
}

impl Curves {
    pub fn from_fn(num_dims: usize, grid: GridSpec, f: impl Fn(usize, usize, f64) -> f64 + Sync) -> Self {
        let xs = grid.points();
        let values = (0..num_dims * num_dims)
            .into_par_iter()
            .map(|pair| xs.iter().map(|&x| f(pair / num_dims, pair % num_dims, x)).collect())
            .collect();
        Self { num_dims, grid, values }
    }
}

/// Excitation curves of many parameter draws: `values[pair][draw][point]`.
#[derive(Debug, Clone, PartialEq)]
pub struct CurveSamples {
    pub num_dims: usize,
    pub grid: GridSpec,
    pub values: Vec<Vec<Vec<f64>>>,
}

impl CurveSamples {
    /// Evaluates the excitation densities `φ̃_{p,c}` of every draw.
    pub fn from_params(draws: &[HawkesParams], grid: GridSpec) -> Result<Self> {
        let num_dims = draws.first().map_or(0, HawkesParams::num_dims);
        if draws.iter().any(|d| d.num_dims() != num_dims) {
            return Err(Error::Shape("parameter draws disagree on the number of dimensions".into()));
        }
        let xs = grid.points();
        let values = (0..num_dims * num_dims)
            .into_par_iter()
            .map(|pair| {
                let (p, c) = (pair / num_dims, pair % num_dims);
                draws
                    .iter()
                    .map(|d| xs.iter().map(|&x| d.excitation().eval(p, c, x)).collect::<Result<Vec<_>>>())
                    .collect::<Result<Vec<_>>>()
            })
            .collect::<Result<Vec<_>>>()?;
        Self::new(num_dims, grid, values)
    }

    pub fn new(num_dims: usize, grid: GridSpec, values: Vec<Vec<Vec<f64>>>) -> Result<Self> {
        if values.len() != num_dims * num_dims {
            return Err(Error::Shape(format!("{} curve blocks for K = {num_dims}", values.len())));
        }
        let draws = values.first().map_or(0, Vec::len);
        for block in &values {
            if block.len() != draws || block.iter().any(|row| row.len() != grid.n_points) {
                return Err(Error::Shape("curve samples must be draws × grid points for every pair".into()));
            }
            if block.iter().flatten().any(|&v| !(v >= 0.0) || !v.is_finite()) {
                return Err(Error::Domain("excitation values must be finite and >= 0".into()));
            }
        }
        Ok(Self { num_dims, grid, values })
    }

    pub fn num_draws(&self) -> usize {
        self.values.first().map_or(0, Vec::len)
    }

    /// Pointwise posterior mean per pair.
    pub fn mean_curves(&self) -> Curves {
        let values = self
            .values
            .iter()
            .map(|block| {
                let n = block.len().max(1) as f64;
                (0..self.grid.n_points).map(|i| block.iter().map(|row| row[i]).sum::<f64>() / n).collect()
            })
            .collect();
        Curves { num_dims: self.num_dims, grid: self.grid, values }
    }

    fn check_truth(&self, truth: &Curves) -> Result<()> {
        if truth.num_dims != self.num_dims || truth.grid != self.grid || truth.values.len() != self.values.len() {
            return Err(Error::Contract("truth and samples are on different pairs or grids".into()));
        }
        if truth.values.iter().any(|row| row.len() != self.grid.n_points) {
            return Err(Error::Contract("truth curve length differs from the grid".into()));
        }
        Ok(())
    }

    fn require_draws(&self, at_least: usize) -> Result<()> {
        if self.num_draws() < at_least {
            return Err(Error::Contract(format!("need at least {at_least} draws, got {}", self.num_draws())));
        }
        Ok(())
    }

    /// Pointwise `(lower, upper)` quantile curves at central probability `level`.
    fn quantile_curves(&self, level: f64) -> Vec<Vec<(f64, f64)>> {
        let tail = (1.0 - level) / 2.0;
        self.values
            .par_iter()
            .map(|block| {
                let mut column = vec![0.0; block.len()];
                (0..self.grid.n_points)
                    .map(|i| {
                        for (c, row) in column.iter_mut().zip(block) {
                            *c = row[i];
                        }
                        column.sort_by(f64::total_cmp);
                        (quantile_sorted(&column, tail), quantile_sorted(&column, 1.0 - tail))
                    })
                    .collect()
            })
            .collect()
    }
}

/// Linear interpolation between order statistics (Hyndman–Fan type 7).
pub fn quantile_sorted(sorted: &[f64], q: f64) -> f64 {
    match sorted.len() {
        0 => f64::NAN,
        1 => sorted[0],
        n => {
            let h = (n - 1) as f64 * q.clamp(0.0, 1.0);
            let lo = h.floor() as usize;
            let hi = (lo + 1).min(n - 1);
            sorted[lo] + (h - lo as f64) * (sorted[hi] - sorted[lo])
        }
    }
}

/// Root mean integrated squared error of the posterior-mean curves, averaged
/// over the K² pairs.
pub fn rmise(truth: &Curves, samples: &CurveSamples) -> Result<f64> {
    samples.check_truth(truth)?;
    samples.require_draws(1)?;
    let mean = samples.mean_curves();
    Ok(rmise_curves(truth, &mean))
}

/// RMISE between two sets of curves on the same grid.
pub fn rmise_curves(truth: &Curves, estimate: &Curves) -> f64 {
    let dx = truth.grid.spacing();
    let total: f64 = truth
        .values
        .iter()
        .zip(&estimate.values)
        .map(|(t, e)| (t.iter().zip(e).map(|(a, b)| (a - b) * (a - b)).sum::<f64>() * dx).sqrt())
        .sum();
    total / truth.values.len() as f64
}

/// Fraction of (pair, point) cells whose true value lies in the pointwise
/// central `level` interval.
pub fn coverage_acr(samples: &CurveSamples, truth: &Curves, level: f64) -> Result<f64> {
    samples.check_truth(truth)?;
    samples.require_draws(2)?;
    let bands = samples.quantile_curves(level);
    let (mut covered, mut cells) = (0usize, 0usize);
    for (band, t) in bands.iter().zip(&truth.values) {
        for (&(l, u), &x) in band.iter().zip(t) {
            cells += 1;
            if l <= x && x <= u {
                covered += 1;
            }
        }
    }
    Ok(covered as f64 / cells as f64)
}

/// Interval score of one cell for a central `1 − alpha` interval.
pub fn interval_score_cell(lower: f64, upper: f64, x: f64, alpha: f64) -> f64 {
    let mut score = upper - lower;
    if x < lower {
        score += 2.0 / alpha * (lower - x);
    }
    if x > upper {
        score += 2.0 / alpha * (x - upper);
    }
    score
}

/// Mean interval score over all (pair, point) cells.
pub fn interval_score(samples: &CurveSamples, truth: &Curves, level: f64) -> Result<f64> {
    samples.check_truth(truth)?;
    samples.require_draws(2)?;
    let alpha = 1.0 - level;
    let bands = samples.quantile_curves(level);
    let (mut total, mut cells) = (0.0, 0usize);
    for (band, t) in bands.iter().zip(&truth.values) {
        for (&(l, u), &x) in band.iter().zip(t) {
            total += interval_score_cell(l, u, x, alpha);
            cells += 1;
        }
    }
    Ok(total / cells as f64)
}

/// Pointwise mean and central-interval curves of one pair.
#[derive(Debug, Clone, PartialEq)]
pub struct Band {
    pub parent: usize,
    pub child: usize,
    pub x: Vec<f64>,
    pub mean: Vec<f64>,
    pub lower: Vec<f64>,
    pub upper: Vec<f64>,
}

pub fn excitation_bands(samples: &CurveSamples, level: f64) -> Result<Vec<Band>> {
    samples.require_draws(2)?;
    let k = samples.num_dims;
    let xs = samples.grid.points();
    let mean = samples.mean_curves();
    let quantiles = samples.quantile_curves(level);
    Ok(quantiles
        .into_iter()
        .zip(mean.values)
        .enumerate()
        .map(|(pair, (q, mean))| Band {
            parent: pair / k,
            child: pair % k,
            x: xs.clone(),
            lower: q.iter().map(|b| b.0).collect(),
            upper: q.iter().map(|b| b.1).collect(),
            mean,
        })
        .collect())
}

/// `parent,child,x,mean,lower,upper` with 1-based dimensions.
pub fn write_bands_csv(bands: &[Band], path: &Path) -> Result<()> {
    let mut w = csv::Writer::from_path(path)?;
    w.write_record(["parent", "child", "x", "mean", "lower", "upper"])?;
    for b in bands {
        for i in 0..b.x.len() {
            w.write_record([
                (b.parent + 1).to_string(),
                (b.child + 1).to_string(),
                b.x[i].to_string(),
                b.mean[i].to_string(),
                b.lower[i].to_string(),
                b.upper[i].to_string(),
            ])?;
        }
    }
    w.flush()?;
    Ok(())
}

#[derive(Debug, Clone, PartialEq, Serialize, Deserialize)]
pub struct HistogramBin {
    pub lower: f64,
    pub upper: f64,
    pub count: usize,
}

/// Spectral radii of α draws, binned.
#[derive(Debug, Clone, PartialEq, Serialize, Deserialize)]
pub struct SpectralHistogram {
    pub radii: Vec<f64>,
    pub bins: Vec<HistogramBin>,
    /// Fraction of draws with ρ(α) < 1.
    pub stationary_fraction: f64,
}

impl SpectralHistogram {
    /// `bin_lower,bin_upper,count`.
    pub fn write_csv(&self, path: &Path) -> Result<()> {
        let mut w = csv::Writer::from_path(path)?;
        w.write_record(["bin_lower", "bin_upper", "count"])?;
        for b in &self.bins {
            w.write_record([b.lower.to_string(), b.upper.to_string(), b.count.to_string()])?;
        }
        w.flush()?;
        Ok(())
    }
}

/// Histogram of ρ(α) over row-major K×K draws. Identical radii collapse to a
/// single degenerate bin.
pub fn spectral_histogram(alpha_draws: &[Vec<f64>], num_dims: usize, n_bins: usize) -> Result<SpectralHistogram> {
    if alpha_draws.is_empty() {
        return Err(Error::Contract("spectral histogram needs at least one draw".into()));
    }
    if n_bins == 0 {
        return Err(Error::Config("histogram needs at least one bin".into()));
    }
    let radii = alpha_draws.iter().map(|a| spectral_radius(a, num_dims)).collect::<Result<Vec<_>>>()?;
    let lo = radii.iter().copied().fold(f64::INFINITY, f64::min);
    let hi = radii.iter().copied().fold(f64::NEG_INFINITY, f64::max);
    let bins = if hi <= lo {
        vec![HistogramBin { lower: lo, upper: hi, count: radii.len() }]
    } else {
        let width = (hi - lo) / n_bins as f64;
        let mut bins: Vec<HistogramBin> = (0..n_bins)
            .map(|i| HistogramBin { lower: lo + i as f64 * width, upper: lo + (i + 1) as f64 * width, count: 0 })
            .collect();
        bins[n_bins - 1].upper = hi;
        for &r in &radii {
            let i = (((r - lo) / width) as usize).min(n_bins - 1);
            bins[i].count += 1;
        }
        bins
    };
    let stationary = radii.iter().filter(|&&r| r < 1.0).count();
    Ok(SpectralHistogram { stationary_fraction: stationary as f64 / radii.len() as f64, radii, bins })
}

/// One row of the metrics table.
#[derive(Debug, Clone, PartialEq, Serialize, Deserialize)]
pub struct MetricRow {
    pub method: String,
    pub variant: String,
    pub eps_true: Option<f64>,
    pub seed: u64,
    pub metric: String,
    pub value: f64,
}

/// `method,variant,eps_true,seed,metric,value`.
pub fn write_metrics(rows: &[MetricRow], path: &Path) -> Result<()> {
    let mut w = csv::Writer::from_path(path)?;
    for row in rows {
        w.serialize(row)?;
    }
    if rows.is_empty() {
        w.write_record(["method", "variant", "eps_true", "seed", "metric", "value"])?;
    }
    w.flush()?;
    Ok(())
}

pub fn read_metrics(path: &Path) -> Result<Vec<MetricRow>> {
    let mut r = csv::Reader::from_path(path)?;
    r.deserialize().map(|row| row.map_err(Error::from)).collect()
}
