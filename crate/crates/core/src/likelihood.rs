//! Intensity and likelihood evaluation over the windowed pair structure.
//!
//! Kernels vanish beyond the support T0, so event `j` can only be excited by
//! the contiguous block of earlier events whose lag is below T0. Walking a
//! sliding left boundary gives all candidate pairs in O(n + pairs).

use std::ops::Range;

use crate::error::{ensure_finite, Error, Result};
use crate::kernel::LagFeatures;
use crate::model::{Allocation, Compensator, EventSequence, HawkesParams, LatentState, Source};

/// Indices `i < j` with `t_j − t_i ∈ (0, support)`, in increasing order.
pub fn candidate_parents(seq: &EventSequence, j: usize, support: f64) -> Range<usize> {
    let t = seq.times();
    let tj = t[j];
    let lo = t[..j].partition_point(|&ti| !(tj - ti < support));
    lo..j
}

/// Left boundaries of the candidate-parent blocks for every event.
#[derive(Debug, Clone, PartialEq)]
pub struct ParentIndex {
    starts: Vec<usize>,
    offsets: Vec<usize>,
}

impl ParentIndex {
    pub fn new(seq: &EventSequence, support: f64) -> Self {
        let t = seq.times();
        let mut starts = Vec::with_capacity(t.len());
        let mut offsets = Vec::with_capacity(t.len() + 1);
        offsets.push(0);
        let mut lo = 0;
        for (j, &tj) in t.iter().enumerate() {
            while lo < j && !(tj - t[lo] < support) {
                lo += 1;
            }
            starts.push(lo);
            offsets.push(offsets[j] + (j - lo));
        }
        Self { starts, offsets }
    }

    pub fn len(&self) -> usize {
        self.starts.len()
    }

    pub fn is_empty(&self) -> bool {
        self.starts.is_empty()
    }

    #[inline]
    pub fn parents(&self, j: usize) -> Range<usize> {
        self.starts[j]..j
    }

    /// Position of the pair block of event `j` in a flat pair array.
    #[inline]
    pub fn pair_range(&self, j: usize) -> Range<usize> {
        self.offsets[j]..self.offsets[j + 1]
    }

    /// Flat pair index of (parent `i`, child `j`); `i` must be a candidate.
    #[inline]
    pub fn pair(&self, i: usize, j: usize) -> usize {
        debug_assert!(i >= self.starts[j] && i < j);
        self.offsets[j] + (i - self.starts[j])
    }

    pub fn total_pairs(&self) -> usize {
        *self.offsets.last().unwrap_or(&0)
    }
}

/// Candidate pairs with their precomputed log-lag features.
#[derive(Debug, Clone)]
pub struct PairTable {
    pub index: ParentIndex,
    pub lags: Vec<LagFeatures>,
}

impl PairTable {
    pub fn new(seq: &EventSequence, support: f64) -> Self {
        let index = ParentIndex::new(seq, support);
        let t = seq.times();
        let mut lags = Vec::with_capacity(index.total_pairs());
        for j in 0..t.len() {
            for i in index.parents(j) {
                lags.push(LagFeatures::new(t[j] - t[i], support).expect("candidate lag inside support"));
            }
        }
        Self { index, lags }
    }
}

fn check_dim(k: usize, dims: usize) -> Result<()> {
    if k < dims {
        Ok(())
    } else {
        Err(Error::Index { index: k, dims })
    }
}

fn check_compatible(params: &HawkesParams, seq: &EventSequence) -> Result<()> {
    if params.num_dims() != seq.num_dims() {
        return Err(Error::Shape(format!(
            "parameters have {} dimensions, sequence has {}",
            params.num_dims(),
            seq.num_dims()
        )));
    }
    Ok(())
}

/// Conditional intensity λ_k(t) given all events strictly before `t`.
pub fn intensity(params: &HawkesParams, seq: &EventSequence, k: usize, t: f64) -> Result<f64> {
    check_compatible(params, seq)?;
    check_dim(k, params.num_dims())?;
    ensure_finite("t", t)?;
    let times = seq.times();
    let dims = seq.dims();
    let exc = params.excitation();
    let support = exc.support();
    let end = times.partition_point(|&ti| ti < t);
    let mut rate = params.mu()[k];
    for i in (0..end).rev() {
        let lag = t - times[i];
        if !(lag < support) {
            break;
        }
        if let Some(f) = LagFeatures::new(lag, support) {
            rate += params.alpha(dims[i], k) * exc.unit_density(dims[i], k, &f) / support;
        }
    }
    Ok(rate)
}

/// Σ_i Σ_k α_{d_i,k} C(T − t_i) with C the kernel CDF (exact) or 1 (approx).
pub fn alpha_compensator(params: &HawkesParams, seq: &EventSequence, mode: Compensator) -> f64 {
    let k = params.num_dims();
    let horizon = seq.horizon();
    let exc = params.excitation();
    let mut total = 0.0;
    for (&ti, &di) in seq.times().iter().zip(seq.dims()) {
        for child in 0..k {
            let a = params.alpha(di, child);
            if a == 0.0 {
                continue;
            }
            let c = match mode {
                Compensator::Approx => 1.0,
                Compensator::Exact => exc.cdf(di, child, horizon - ti).unwrap_or(1.0),
            };
            total += a * c;
        }
    }
    total
}

/// Observed-data log-likelihood of the sequence.
pub fn log_likelihood(params: &HawkesParams, seq: &EventSequence, mode: Compensator) -> Result<f64> {
    check_compatible(params, seq)?;
    let table = PairTable::new(seq, params.support());
    log_likelihood_with(params, seq, &table, mode)
}

/// [`log_likelihood`] reusing a precomputed pair table.
pub fn log_likelihood_with(
    params: &HawkesParams,
    seq: &EventSequence,
    table: &PairTable,
    mode: Compensator,
) -> Result<f64> {
    check_compatible(params, seq)?;
    let dims = seq.dims();
    let exc = params.excitation();
    let inv_support = 1.0 / exc.support();
    let mut ll = 0.0;
    for j in 0..seq.len() {
        let dj = dims[j];
        let mut rate = params.mu()[dj];
        let base = table.index.pair_range(j).start;
        for (o, i) in table.index.parents(j).enumerate() {
            let di = dims[i];
            let a = params.alpha(di, dj);
            if a > 0.0 {
                rate += a * exc.unit_density(di, dj, &table.lags[base + o]) * inv_support;
            }
        }
        if !(rate > 0.0) || !rate.is_finite() {
            return Err(Error::NonFiniteLikelihood { event: j, value: rate });
        }
        ll += rate.ln();
    }
    let mu_total: f64 = params.mu().iter().sum();
    Ok(ll - mu_total * seq.horizon() - alpha_compensator(params, seq, mode))
}

fn background_terms(params: &HawkesParams, seq: &EventSequence, latent_parents: &[Option<usize>]) -> f64 {
    let dims = seq.dims();
    let mut v = 0.0;
    for (j, p) in latent_parents.iter().enumerate() {
        if p.is_none() {
            v += params.mu()[dims[j]].ln();
        }
    }
    v - params.mu().iter().sum::<f64>() * seq.horizon()
}

fn check_parents(seq: &EventSequence, parents: &[Option<usize>], support: f64) -> Result<()> {
    if parents.len() != seq.len() {
        return Err(Error::Contract(format!(
            "branching covers {} events, sequence has {}",
            parents.len(),
            seq.len()
        )));
    }
    let t = seq.times();
    for (j, p) in parents.iter().enumerate() {
        if let Some(i) = *p {
            if i >= j || !(t[j] - t[i] > 0.0 && t[j] - t[i] < support) {
                return Err(Error::Contract(format!("event {j}: parent {i} is not a candidate parent")));
            }
        }
    }
    Ok(())
}

/// Log-likelihood given the branching structure only, with each offspring
/// lag scored by the full blended excitation density.
pub fn branching_log_likelihood(
    params: &HawkesParams,
    seq: &EventSequence,
    parents: &[Option<usize>],
    mode: Compensator,
) -> Result<f64> {
    check_compatible(params, seq)?;
    let support = params.support();
    check_parents(seq, parents, support)?;
    let t = seq.times();
    let d = seq.dims();
    let exc = params.excitation();
    let mut v = background_terms(params, seq, parents);
    for (j, p) in parents.iter().enumerate() {
        if let Some(i) = *p {
            let lag = LagFeatures::new(t[j] - t[i], support).expect("checked lag");
            v += params.alpha(d[i], d[j]).ln() + (exc.unit_density(d[i], d[j], &lag) / support).ln();
        }
    }
    Ok(v - alpha_compensator(params, seq, mode))
}

/// Log density of the allocated Beta component at a lag (no mixture weight).
pub fn allocated_log_density(params: &HawkesParams, parent_dim: usize, child_dim: usize, alloc: Allocation, lag: f64) -> Result<f64> {
    let exc = params.excitation();
    let mixture = match alloc.source {
        Source::Common => exc.common(),
        Source::Idiosyncratic => exc.idio(parent_dim, child_dim),
    };
    let comp = mixture.components().get(alloc.component).ok_or_else(|| {
        Error::Contract(format!("component {} outside truncation {}", alloc.component, mixture.len()))
    })?;
    let f = LagFeatures::new(lag, exc.support())
        .ok_or_else(|| Error::Contract(format!("lag {lag} outside kernel support")))?;
    Ok(comp.ln_unit_pdf(&f) - exc.support().ln())
}

/// Log prior mass of an allocation: ln ε + ln p⁰_h or ln(1 − ε) + ln p^{ℓ,k}_h.
pub fn allocation_log_prior(params: &HawkesParams, parent_dim: usize, child_dim: usize, alloc: Allocation) -> f64 {
    let exc = params.excitation();
    let (w, mixture) = match alloc.source {
        Source::Common => (exc.eps(), exc.common()),
        Source::Idiosyncratic => (1.0 - exc.eps(), exc.idio(parent_dim, child_dim)),
    };
    match mixture.weights().get(alloc.component) {
        Some(&p) => w.ln() + p.ln(),
        None => f64::NEG_INFINITY,
    }
}

/// Complete-data log-likelihood given branching and allocations:
/// Σ|I_ℓ| ln μ_ℓ − Σ μ_ℓ T + Σ_pairs [ln α + ln f_alloc(lag)] − α compensator.
pub fn augmented_log_likelihood(
    params: &HawkesParams,
    seq: &EventSequence,
    latent: &LatentState,
    mode: Compensator,
) -> Result<f64> {
    check_compatible(params, seq)?;
    latent.validate(seq, params.support())?;
    let t = seq.times();
    let d = seq.dims();
    let mut v = background_terms(params, seq, &latent.parent);
    for (j, (p, a)) in latent.parent.iter().zip(&latent.alloc).enumerate() {
        if let (Some(i), Some(alloc)) = (*p, *a) {
            v += params.alpha(d[i], d[j]).ln() + allocated_log_density(params, d[i], d[j], alloc, t[j] - t[i])?;
        }
    }
    Ok(v - alpha_compensator(params, seq, mode))
}
