//! Metropolis-within-Gibbs sampler for the truncated DDP Beta-mixture Hawkes
//! model.
//!
//! One sweep updates, in order: the branching structure, the (W, Z)
//! allocations of offspring pairs, the rates μ and α (Gamma conjugate), the
//! Beta shapes (random-walk MH on the log scale), and the mixture weights and
//! ε (Dirichlet / Beta conjugate). The full conditionals are exposed as pure
//! functions so they can be checked against hand-derived values.

use std::path::Path;
use std::time::Instant;

use rand::Rng;
use rand_chacha::ChaCha8Rng;
use serde::{Deserialize, Serialize};

use crate::error::{Error, Result};
use crate::kernel::{BetaMixture, ExcitationModel, LagFeatures};
use crate::likelihood::{log_likelihood_with, PairTable};
use crate::model::{
    Allocation, Compensator, EventSequence, GammaParams, HawkesParams, Hyperparams, LatentState, ShapePrior, Source, Variant,
};
use crate::rng::stream;
use crate::special::{
    ln_beta_norm, sample_beta, sample_categorical, sample_dirichlet, sample_gamma, sample_standard_normal,
    softmax_in_place,
};

/// Sampler settings.
#[derive(Debug, Clone, PartialEq, Serialize, Deserialize)]
#[serde(default)]
pub struct McmcConfig {
    pub iterations: usize,
    pub burn_in: usize,
    pub variant: Variant,
    /// Truncation of the common mixture.
    pub h0: usize,
    /// Truncation of each idiosyncratic mixture.
    pub h: usize,
    /// Initial proposal standard deviation on the log scale.
    pub mh_step: f64,
    /// Robbins–Monro adaptation of each proposal scale during burn-in.
    pub adapt: bool,
    pub target_acceptance: f64,
    pub hyper: Hyperparams,
    pub compensator: Compensator,
    pub seed: u64,
}

impl Default for McmcConfig {
    fn default() -> Self {
        Self {
            iterations: 4000,
            burn_in: 2000,
            variant: Variant::Random,
            h0: 10,
            h: 10,
            mh_step: 0.3,
            adapt: true,
            target_acceptance: 0.35,
            hyper: Hyperparams::default(),
            compensator: Compensator::Approx,
            seed: 0,
        }
    }
}

impl McmcConfig {
    pub fn validate(&self) -> Result<()> {
        if self.burn_in >= self.iterations {
            return Err(Error::Config(format!(
                "burn_in ({}) must be below iterations ({})",
                self.burn_in, self.iterations
            )));
        }
        if self.h0 == 0 || self.h == 0 {
            return Err(Error::Config("truncation levels must be at least 1".into()));
        }
        if !(self.mh_step > 0.0) || !self.mh_step.is_finite() {
            return Err(Error::Config(format!("mh_step must be positive, got {}", self.mh_step)));
        }
        if !(self.target_acceptance > 0.0 && self.target_acceptance < 1.0) {
            return Err(Error::Config("target_acceptance must lie in (0, 1)".into()));
        }
        self.hyper.validate()
    }
}

/// Weights and shapes of one truncated mixture.
#[derive(Debug, Clone, PartialEq, Serialize, Deserialize)]
pub struct MixtureState {
    pub p: Vec<f64>,
    pub a: Vec<f64>,
    pub b: Vec<f64>,
}

impl MixtureState {
    pub fn len(&self) -> usize {
        self.p.len()
    }

    pub fn is_empty(&self) -> bool {
        self.p.is_empty()
    }

    pub fn to_mixture(&self) -> Result<BetaMixture> {
        BetaMixture::from_unnormalized(self.p.clone(), self.a.clone(), self.b.clone())
    }
}

/// Current value of every parameter and latent variable.
#[derive(Debug, Clone, PartialEq)]
pub struct McmcState {
    pub mu: Vec<f64>,
    /// Row-major, parent-first.
    pub alpha: Vec<f64>,
    pub eps: f64,
    pub common: MixtureState,
    /// Row-major, parent-first.
    pub idio: Vec<MixtureState>,
    pub latent: LatentState,
}

impl McmcState {
    pub fn num_dims(&self) -> usize {
        self.mu.len()
    }

    pub fn excitation(&self, support: f64) -> Result<ExcitationModel> {
        let k = self.num_dims();
        let idio = self
            .idio
            .chunks(k)
            .map(|row| row.iter().map(MixtureState::to_mixture).collect::<Result<Vec<_>>>())
            .collect::<Result<Vec<_>>>()?;
        ExcitationModel::new(self.eps, support, self.common.to_mixture()?, idio)
    }

    pub fn params(&self, support: f64) -> Result<HawkesParams> {
        HawkesParams::from_flat(self.mu.clone(), self.alpha.clone(), self.excitation(support)?)
    }
}

/// Sufficient statistics of the allocated lags of one Beta component.
#[derive(Debug, Clone, Copy, Default, PartialEq)]
pub struct ComponentStats {
    pub n: usize,
    /// Σ ln(lag / T0)
    pub sum_ln_x: f64,
    /// Σ ln(1 − lag / T0)
    pub sum_ln_1mx: f64,
}

impl ComponentStats {
    fn add(&mut self, lag: &LagFeatures) {
        self.n += 1;
        self.sum_ln_x += lag.ln_x;
        self.sum_ln_1mx += lag.ln_1mx;
    }
}

/// Counts implied by a latent state.
#[derive(Debug, Clone, PartialEq)]
pub struct LatentCounts {
    /// |I_ℓ|
    pub immigrants: Vec<usize>,
    /// |O_{ℓ,k}|, parent-first.
    pub offspring: Vec<usize>,
    /// Per common component.
    pub common: Vec<ComponentStats>,
    /// Per pair (parent-first), per idiosyncratic component.
    pub idio: Vec<Vec<ComponentStats>>,
}

impl LatentCounts {
    pub fn common_counts(&self) -> Vec<usize> {
        self.common.iter().map(|s| s.n).collect()
    }

    pub fn idio_counts(&self, pair: usize) -> Vec<usize> {
        self.idio[pair].iter().map(|s| s.n).collect()
    }

    pub fn total_common(&self) -> usize {
        self.common.iter().map(|s| s.n).sum()
    }

    pub fn total_idio(&self) -> usize {
        self.idio.iter().flatten().map(|s| s.n).sum()
    }
}

/// Tallies the latent state. Allocations must be consistent with the
/// truncation levels and lags must lie inside the support.
pub fn latent_counts(seq: &EventSequence, latent: &LatentState, support: f64, h0: usize, h: usize) -> Result<LatentCounts> {
    latent.validate(seq, support)?;
    let k = seq.num_dims();
    let t = seq.times();
    let d = seq.dims();
    let mut c = LatentCounts {
        immigrants: vec![0; k],
        offspring: vec![0; k * k],
        common: vec![ComponentStats::default(); h0],
        idio: vec![vec![ComponentStats::default(); h]; k * k],
    };
    for (j, (p, a)) in latent.parent.iter().zip(&latent.alloc).enumerate() {
        match (*p, *a) {
            (None, _) => c.immigrants[d[j]] += 1,
            (Some(i), Some(alloc)) => {
                let pair = d[i] * k + d[j];
                c.offspring[pair] += 1;
                let lag = LagFeatures::new(t[j] - t[i], support).expect("validated lag");
                let slot = match alloc.source {
                    Source::Common => c.common.get_mut(alloc.component),
                    Source::Idiosyncratic => c.idio[pair].get_mut(alloc.component),
                };
                slot.ok_or_else(|| Error::Contract(format!("event {j}: component {} out of range", alloc.component)))?
                    .add(&lag);
            }
            (Some(_), None) => unreachable!("validated latent state"),
        }
    }
    Ok(c)
}

/// Full conditionals of μ and α.
#[derive(Debug, Clone, PartialEq)]
pub struct RateConditionals {
    pub mu: Vec<GammaParams>,
    /// Parent-first.
    pub alpha: Vec<GammaParams>,
}

/// μ_ℓ | · ~ Gamma(e + |I_ℓ|, f + T) and α_{ℓ,k} | · ~ Gamma(g + |O_{ℓ,k}|,
/// h + Σ_{d_i=ℓ} C(T − t_i)) with C = Φ̃_{ℓ,k} (exact) or 1 (approx).
pub fn rate_conditionals(
    seq: &EventSequence,
    counts: &LatentCounts,
    hyper: &Hyperparams,
    mode: Compensator,
    excitation: &ExcitationModel,
) -> RateConditionals {
    let k = seq.num_dims();
    let horizon = seq.horizon();
    let mu = counts
        .immigrants
        .iter()
        .map(|&n| GammaParams { shape: hyper.e + n as f64, rate: hyper.f + horizon })
        .collect();
    let mut exposure = vec![0.0; k * k];
    match mode {
        Compensator::Approx => {
            let n = seq.counts();
            for p in 0..k {
                for c in 0..k {
                    exposure[p * k + c] = n[p] as f64;
                }
            }
        }
        Compensator::Exact => {
            for (&ti, &di) in seq.times().iter().zip(seq.dims()) {
                for c in 0..k {
                    exposure[di * k + c] += excitation.cdf(di, c, horizon - ti).unwrap_or(1.0);
                }
            }
        }
    }
    let alpha = counts
        .offspring
        .iter()
        .zip(&exposure)
        .map(|(&o, &x)| GammaParams { shape: hyper.g + o as f64, rate: hyper.h + x })
        .collect();
    RateConditionals { mu, alpha }
}

/// Normalized parent probabilities for event `j`: entry 0 is the immigrant
/// category, entry `1 + o` the `o`-th candidate parent in `index.parents(j)`.
pub fn branching_probabilities(params: &HawkesParams, seq: &EventSequence, table: &PairTable, j: usize) -> Vec<f64> {
    let mut w = Vec::with_capacity(1 + table.index.parents(j).len());
    branching_log_weights(params, seq, table, j, &mut w);
    softmax_in_place(&mut w);
    w
}

fn branching_log_weights(params: &HawkesParams, seq: &EventSequence, table: &PairTable, j: usize, out: &mut Vec<f64>) {
    let d = seq.dims();
    let dj = d[j];
    let exc = params.excitation();
    let ln_support = exc.support().ln();
    out.clear();
    out.push(params.mu()[dj].ln());
    let base = table.index.pair_range(j).start;
    for (o, i) in table.index.parents(j).enumerate() {
        let a = params.alpha(d[i], dj);
        let dens = exc.unit_density(d[i], dj, &table.lags[base + o]);
        out.push(a.ln() + dens.ln() - ln_support);
    }
}

/// Normalized allocation probabilities for a pair at a lag: the first `H0`
/// entries are common components, the next `H` idiosyncratic ones.
/// Sources excluded by the variant get probability zero.
pub fn allocation_probabilities(
    excitation: &ExcitationModel,
    parent_dim: usize,
    child_dim: usize,
    lag: &LagFeatures,
    variant: Variant,
) -> Result<Vec<f64>> {
    let mut w = Vec::new();
    allocation_log_weights(excitation, parent_dim, child_dim, lag, variant, &mut w);
    if softmax_in_place(&mut w) == f64::NEG_INFINITY {
        return Err(Error::Contract("every allocation has zero density at this lag".into()));
    }
    Ok(w)
}

fn allocation_log_weights(
    excitation: &ExcitationModel,
    parent_dim: usize,
    child_dim: usize,
    lag: &LagFeatures,
    variant: Variant,
    out: &mut Vec<f64>,
) {
    out.clear();
    let common = excitation.common();
    let idio = excitation.idio(parent_dim, child_dim);
    let ln_eps = if variant.allows(Source::Common) { excitation.eps().ln() } else { f64::NEG_INFINITY };
    let ln_1m = if variant.allows(Source::Idiosyncratic) { (1.0 - excitation.eps()).ln() } else { f64::NEG_INFINITY };
    for (&p, c) in common.weights().iter().zip(common.components()) {
        out.push(ln_eps + p.ln() + c.ln_unit_pdf(lag));
    }
    for (&p, c) in idio.weights().iter().zip(idio.components()) {
        out.push(ln_1m + p.ln() + c.ln_unit_pdf(lag));
    }
}

/// Full conditionals of the mixture weights and ε.
#[derive(Debug, Clone, PartialEq)]
pub struct WeightConditionals {
    pub common: Vec<f64>,
    /// Parent-first.
    pub idio: Vec<Vec<f64>>,
    /// Beta parameters of ε; `None` when the variant fixes ε.
    pub eps: Option<(f64, f64)>,
}

/// p⁰ ~ Dir(γ/H0 + N⁰), p^{ℓ,k} ~ Dir(γ/H + N^{ℓ,k}),
/// ε ~ Beta(1 + Σ N⁰, 1 + Σ N^{ℓ,k}).
pub fn weight_conditionals(counts: &LatentCounts, hyper: &Hyperparams, variant: Variant) -> WeightConditionals {
    let h0 = counts.common.len() as f64;
    let common = counts.common.iter().map(|s| hyper.gamma_dp / h0 + s.n as f64).collect();
    let idio = counts
        .idio
        .iter()
        .map(|pair| {
            let h = pair.len() as f64;
            pair.iter().map(|s| hyper.gamma_dp / h + s.n as f64).collect()
        })
        .collect();
    let eps = match variant {
        Variant::Random => Some((1.0 + counts.total_common() as f64, 1.0 + counts.total_idio() as f64)),
        _ => None,
    };
    WeightConditionals { common, idio, eps }
}

/// Which shape of a Beta component is being updated.
#[derive(Debug, Clone, Copy, PartialEq, Eq)]
pub enum Shape {
    A,
    B,
}

/// Log full conditional of a shape, expressed in θ = ln(shape) (the
/// Jacobian term ln(shape) is included):
/// (c − 1) ln s − d s + n ln B(a, b)⁻¹ + (s − 1) Σ ln y + ln s,
/// where `y` is x for the a-shape and 1 − x for the b-shape.
pub fn shape_log_target(value: f64, other: f64, which: Shape, stats: &ComponentStats, prior: &ShapePrior) -> f64 {
    if !(value > 0.0) || !value.is_finite() {
        return f64::NEG_INFINITY;
    }
    let (c, d, a, b, sum) = match which {
        Shape::A => (prior.c_a, prior.d_a, value, other, stats.sum_ln_x),
        Shape::B => (prior.c_b, prior.d_b, other, value, stats.sum_ln_1mx),
    };
    let mut v = (c - 1.0) * value.ln() - d * value + value.ln();
    if stats.n > 0 {
        v += stats.n as f64 * ln_beta_norm(a, b) + (value - 1.0) * sum;
    }
    v
}

/// Log MH acceptance ratio of a log-scale random-walk move.
pub fn shape_log_mh_ratio(current: f64, proposed: f64, other: f64, which: Shape, stats: &ComponentStats, prior: &ShapePrior) -> f64 {
    shape_log_target(proposed, other, which, stats, prior) - shape_log_target(current, other, which, stats, prior)
}

/// Accepted / proposed counts per shape block.
#[derive(Debug, Clone, Copy, Default, PartialEq, Serialize, Deserialize)]
pub struct AcceptanceCounter {
    pub accepted: u64,
    pub proposed: u64,
}

impl AcceptanceCounter {
    pub fn rate(&self) -> f64 {
        if self.proposed == 0 {
            0.0
        } else {
            self.accepted as f64 / self.proposed as f64
        }
    }
}

#[derive(Debug, Clone, Copy, Default, PartialEq, Serialize, Deserialize)]
pub struct Acceptance {
    pub common_a: AcceptanceCounter,
    pub common_b: AcceptanceCounter,
    pub idio_a: AcceptanceCounter,
    pub idio_b: AcceptanceCounter,
}

/// A retained draw.
#[derive(Debug, Clone, PartialEq, Serialize, Deserialize)]
pub struct Draw {
    pub mu: Vec<f64>,
    pub alpha: Vec<f64>,
    pub eps: f64,
    pub common: MixtureState,
    pub idio: Vec<MixtureState>,
    /// Observed-data log-likelihood at this draw.
    pub log_lik: f64,
}

impl Draw {
    pub fn params(&self, support: f64) -> Result<HawkesParams> {
        let k = self.mu.len();
        let idio = self
            .idio
            .chunks(k)
            .map(|row| row.iter().map(MixtureState::to_mixture).collect::<Result<Vec<_>>>())
            .collect::<Result<Vec<_>>>()?;
        let exc = ExcitationModel::new(self.eps, support, self.common.to_mixture()?, idio)?;
        HawkesParams::from_flat(self.mu.clone(), self.alpha.clone(), exc)
    }
}

/// Output of one chain.
#[derive(Debug, Clone)]
pub struct PosteriorSamples {
    pub config: McmcConfig,
    pub support: f64,
    pub num_dims: usize,
    pub draws: Vec<Draw>,
    pub acceptance: Acceptance,
    pub final_state: McmcState,
    pub seconds: f64,
}

impl PosteriorSamples {
    pub fn mean_log_lik(&self) -> f64 {
        if self.draws.is_empty() {
            return f64::NEG_INFINITY;
        }
        self.draws.iter().map(|d| d.log_lik).sum::<f64>() / self.draws.len() as f64
    }

    pub fn params(&self) -> Result<Vec<HawkesParams>> {
        self.draws.iter().map(|d| d.params(self.support)).collect()
    }

    /// One row per draw with flattened, 1-based parameter names.
    pub fn write_csv(&self, path: &Path) -> Result<()> {
        let k = self.num_dims;
        let mut header = Vec::new();
        for i in 0..k {
            header.push(format!("mu_{}", i + 1));
        }
        for p in 0..k {
            for c in 0..k {
                header.push(format!("alpha_{}_{}", p + 1, c + 1));
            }
        }
        header.push("eps".to_string());
        for h in 0..self.config.h0 {
            for name in ["p0", "a0", "b0"] {
                header.push(format!("{name}_{}", h + 1));
            }
        }
        for p in 0..k {
            for c in 0..k {
                for h in 0..self.config.h {
                    for name in ["p", "a", "b"] {
                        header.push(format!("{name}_{}_{}_{}", p + 1, c + 1, h + 1));
                    }
                }
            }
        }
        header.push("log_lik".to_string());
        let mut w = csv::Writer::from_path(path)?;
        w.write_record(&header)?;
        for d in &self.draws {
            let mut row: Vec<String> = Vec::with_capacity(header.len());
            row.extend(d.mu.iter().map(f64::to_string));
            row.extend(d.alpha.iter().map(f64::to_string));
            row.push(d.eps.to_string());
            push_mixture(&mut row, &d.common);
            for m in &d.idio {
                push_mixture(&mut row, m);
            }
            row.push(d.log_lik.to_string());
            w.write_record(&row)?;
        }
        w.flush()?;
        Ok(())
    }
}

/// Reads draws written by [`PosteriorSamples::write_csv`].
pub fn read_draws_csv(path: &Path, num_dims: usize, h0: usize, h: usize) -> Result<Vec<Draw>> {
    let k = num_dims;
    let width = k + k * k + 1 + 3 * h0 + 3 * h * k * k + 1;
    let mut r = csv::Reader::from_path(path)?;
    if r.headers()?.len() != width {
        return Err(Error::Shape(format!(
            "{}: expected {width} columns for K={k}, H0={h0}, H={h}, found {}",
            path.display(),
            r.headers()?.len()
        )));
    }
    let mixture = |vals: &[f64]| MixtureState {
        p: vals.iter().step_by(3).copied().collect(),
        a: vals.iter().skip(1).step_by(3).copied().collect(),
        b: vals.iter().skip(2).step_by(3).copied().collect(),
    };
    let mut draws = Vec::new();
    for record in r.records() {
        let record = record?;
        let vals = record
            .iter()
            .map(|f| f.parse::<f64>().map_err(|e| Error::Shape(format!("{}: bad value {f:?}: {e}", path.display()))))
            .collect::<Result<Vec<f64>>>()?;
        let (mu, rest) = vals.split_at(k);
        let (alpha, rest) = rest.split_at(k * k);
        let (eps, rest) = rest.split_at(1);
        let (common, rest) = rest.split_at(3 * h0);
        let (idio, log_lik) = rest.split_at(3 * h * k * k);
        draws.push(Draw {
            mu: mu.to_vec(),
            alpha: alpha.to_vec(),
            eps: eps[0],
            common: mixture(common),
            idio: idio.chunks(3 * h).map(mixture).collect(),
            log_lik: log_lik[0],
        });
    }
    Ok(draws)
}

fn push_mixture(row: &mut Vec<String>, m: &MixtureState) {
    for h in 0..m.len() {
        row.push(m.p[h].to_string());
        row.push(m.a[h].to_string());
        row.push(m.b[h].to_string());
    }
}

const INIT_SHAPE_RANGE: (f64, f64) = (0.1, 20.0);

fn init_mixture(n: usize, prior: &ShapePrior, rng: &mut ChaCha8Rng) -> MixtureState {
    let clamp = |x: f64| x.clamp(INIT_SHAPE_RANGE.0, INIT_SHAPE_RANGE.1);
    let a = (0..n).map(|_| clamp(sample_gamma(prior.c_a, prior.d_a, rng))).collect();
    let b = (0..n).map(|_| clamp(sample_gamma(prior.c_b, prior.d_b, rng))).collect();
    MixtureState { p: vec![1.0 / n as f64; n], a, b }
}

/// Starting point: μ_k = max(n_k, 1)/(2T), α = 0.5/K, ε = 0.5 (or the value
/// fixed by the variant), shapes drawn from their priors, uniform weights and
/// every event an immigrant.
pub fn initial_state(cfg: &McmcConfig, seq: &EventSequence, rng: &mut ChaCha8Rng) -> McmcState {
    let k = seq.num_dims();
    let horizon = seq.horizon().max(f64::MIN_POSITIVE);
    let mu = seq.counts().iter().map(|&n| n.max(1) as f64 / (2.0 * horizon)).collect();
    let alpha = vec![0.5 / k as f64; k * k];
    let eps = cfg.variant.fixed_eps().unwrap_or(0.5);
    let common = init_mixture(cfg.h0, &cfg.hyper.common, rng);
    let idio = (0..k * k).map(|_| init_mixture(cfg.h, &cfg.hyper.idio, rng)).collect();
    McmcState { mu, alpha, eps, common, idio, latent: LatentState::all_immigrants(seq.len()) }
}

/// Mutable sampler: configuration, data views and per-parameter proposal scales.
pub struct Sampler<'a> {
    cfg: &'a McmcConfig,
    seq: &'a EventSequence,
    table: PairTable,
    support: f64,
    pub state: McmcState,
    steps_common: [Vec<f64>; 2],
    steps_idio: Vec<[Vec<f64>; 2]>,
    pub acceptance: Acceptance,
    scratch: Vec<f64>,
}

impl<'a> Sampler<'a> {
    pub fn new(cfg: &'a McmcConfig, seq: &'a EventSequence, support: f64, rng: &mut ChaCha8Rng) -> Result<Self> {
        cfg.validate()?;
        let state = initial_state(cfg, seq, rng);
        Self::with_state(cfg, seq, support, state)
    }

    pub fn with_state(cfg: &'a McmcConfig, seq: &'a EventSequence, support: f64, state: McmcState) -> Result<Self> {
        cfg.validate()?;
        if !(support > 0.0) || !support.is_finite() {
            return Err(Error::Config(format!("T0 must be positive, got {support}")));
        }
        let k = seq.num_dims();
        if state.mu.len() != k || state.idio.len() != k * k || state.common.len() != cfg.h0 {
            return Err(Error::Shape("state does not match the data and truncation levels".into()));
        }
        state.latent.validate(seq, support)?;
        let table = PairTable::new(seq, support);
        Ok(Self {
            cfg,
            seq,
            table,
            support,
            state,
            steps_common: [vec![cfg.mh_step; cfg.h0], vec![cfg.mh_step; cfg.h0]],
            steps_idio: vec![[vec![cfg.mh_step; cfg.h], vec![cfg.mh_step; cfg.h]]; k * k],
            acceptance: Acceptance::default(),
            scratch: Vec::new(),
        })
    }

    pub fn pair_table(&self) -> &PairTable {
        &self.table
    }

    pub fn params(&self) -> Result<HawkesParams> {
        self.state.params(self.support)
    }

    /// Redraws every parent from its full conditional.
    pub fn sample_branching(&mut self, rng: &mut ChaCha8Rng) -> Result<()> {
        let params = self.params()?;
        for j in 0..self.seq.len() {
            let parents = self.table.index.parents(j);
            if parents.is_empty() {
                self.state.latent.parent[j] = None;
                continue;
            }
            branching_log_weights(&params, self.seq, &self.table, j, &mut self.scratch);
            softmax_in_place(&mut self.scratch);
            let pick = sample_categorical(&self.scratch, rng);
            self.state.latent.parent[j] = if pick == 0 { None } else { Some(parents.start + pick - 1) };
        }
        Ok(())
    }

    /// Redraws (W, Z) for every offspring pair; clears it for immigrants.
    pub fn sample_allocations(&mut self, rng: &mut ChaCha8Rng) -> Result<()> {
        let exc = self.state.excitation(self.support)?;
        let d = self.seq.dims();
        let h0 = self.cfg.h0;
        for j in 0..self.seq.len() {
            let Some(i) = self.state.latent.parent[j] else {
                self.state.latent.alloc[j] = None;
                continue;
            };
            let lag = &self.table.lags[self.table.index.pair(i, j)];
            allocation_log_weights(&exc, d[i], d[j], lag, self.cfg.variant, &mut self.scratch);
            if softmax_in_place(&mut self.scratch) == f64::NEG_INFINITY {
                return Err(Error::Contract(format!("event {j}: every allocation has zero density")));
            }
            let pick = sample_categorical(&self.scratch, rng);
            let alloc = if pick < h0 {
                Allocation { source: Source::Common, component: pick }
            } else {
                Allocation { source: Source::Idiosyncratic, component: pick - h0 }
            };
            self.state.latent.alloc[j] = Some(alloc);
        }
        Ok(())
    }

    pub fn counts(&self) -> Result<LatentCounts> {
        latent_counts(self.seq, &self.state.latent, self.support, self.cfg.h0, self.cfg.h)
    }

    /// Gamma draws of μ and α from their full conditionals.
    pub fn sample_rates(&mut self, counts: &LatentCounts, rng: &mut ChaCha8Rng) -> Result<()> {
        let exc = self.state.excitation(self.support)?;
        let cond = rate_conditionals(self.seq, counts, &self.cfg.hyper, self.cfg.compensator, &exc);
        for (m, g) in self.state.mu.iter_mut().zip(&cond.mu) {
            *m = sample_gamma(g.shape, g.rate, rng).max(f64::MIN_POSITIVE);
        }
        for (a, g) in self.state.alpha.iter_mut().zip(&cond.alpha) {
            *a = sample_gamma(g.shape, g.rate, rng).max(f64::MIN_POSITIVE);
        }
        Ok(())
    }

    /// Log-scale random-walk MH for every shape parameter.
    pub fn sample_shapes(&mut self, counts: &LatentCounts, rng: &mut ChaCha8Rng, adapt_weight: Option<f64>) {
        let hyper = self.cfg.hyper;
        let target = self.cfg.target_acceptance;
        let (ca, cb) = mh_mixture(
            &mut self.state.common,
            &counts.common,
            &hyper.common,
            &mut self.steps_common,
            rng,
            adapt_weight,
            target,
        );
        merge(&mut self.acceptance.common_a, ca);
        merge(&mut self.acceptance.common_b, cb);
        for (pair, m) in self.state.idio.iter_mut().enumerate() {
            let (ia, ib) = mh_mixture(
                m,
                &counts.idio[pair],
                &hyper.idio,
                &mut self.steps_idio[pair],
                rng,
                adapt_weight,
                target,
            );
            merge(&mut self.acceptance.idio_a, ia);
            merge(&mut self.acceptance.idio_b, ib);
        }
    }

    /// Dirichlet draws of the weights and, for RANDOM, a Beta draw of ε.
    pub fn sample_weights(&mut self, counts: &LatentCounts, rng: &mut ChaCha8Rng) {
        let cond = weight_conditionals(counts, &self.cfg.hyper, self.cfg.variant);
        self.state.common.p = sample_dirichlet(&cond.common, rng);
        for (m, conc) in self.state.idio.iter_mut().zip(&cond.idio) {
            m.p = sample_dirichlet(conc, rng);
        }
        match cond.eps {
            Some((a, b)) => self.state.eps = sample_beta(a, b, rng).clamp(f64::MIN_POSITIVE, 1.0 - f64::EPSILON / 2.0),
            None => self.state.eps = self.cfg.variant.fixed_eps().unwrap_or(self.state.eps),
        }
    }

    /// One full sweep. `adapt_weight` is the Robbins–Monro gain for the
    /// proposal scales, or `None` to keep them fixed.
    pub fn sweep(&mut self, rng: &mut ChaCha8Rng, adapt_weight: Option<f64>) -> Result<()> {
        self.sample_branching(rng)?;
        self.sample_allocations(rng)?;
        let counts = self.counts()?;
        self.sample_rates(&counts, rng)?;
        self.sample_shapes(&counts, rng, adapt_weight);
        self.sample_weights(&counts, rng);
        Ok(())
    }

    pub fn log_likelihood(&self) -> Result<f64> {
        log_likelihood_with(&self.params()?, self.seq, &self.table, self.cfg.compensator)
    }
}

fn merge(total: &mut AcceptanceCounter, step: AcceptanceCounter) {
    total.accepted += step.accepted;
    total.proposed += step.proposed;
}

fn mh_mixture(
    m: &mut MixtureState,
    stats: &[ComponentStats],
    prior: &ShapePrior,
    steps: &mut [Vec<f64>; 2],
    rng: &mut ChaCha8Rng,
    adapt_weight: Option<f64>,
    target: f64,
) -> (AcceptanceCounter, AcceptanceCounter) {
    let mut acc = [AcceptanceCounter::default(); 2];
    for h in 0..m.len() {
        for (s, which) in [Shape::A, Shape::B].into_iter().enumerate() {
            let (value, other) = match which {
                Shape::A => (m.a[h], m.b[h]),
                Shape::B => (m.b[h], m.a[h]),
            };
            let step = steps[s][h];
            let proposed = value * (step * sample_standard_normal(rng)).exp();
            let log_ratio = shape_log_mh_ratio(value, proposed, other, which, &stats[h], prior);
            let prob = log_ratio.min(0.0).exp();
            let accept = rng.random::<f64>() < prob;
            acc[s].proposed += 1;
            if accept {
                acc[s].accepted += 1;
                match which {
                    Shape::A => m.a[h] = proposed,
                    Shape::B => m.b[h] = proposed,
                }
            }
            if let Some(gain) = adapt_weight {
                let new = (step.ln() + gain * (prob - target)).exp();
                steps[s][h] = new.clamp(1e-3, 5.0);
            }
        }
    }
    (acc[0], acc[1])
}

/// Runs one chain and keeps every post-burn-in draw.
pub fn run_chain(cfg: &McmcConfig, seq: &EventSequence, support: f64) -> Result<PosteriorSamples> {
    let start = Instant::now();
    cfg.validate()?;
    let mut rng = stream(cfg.seed, &[0x6d63]);
    let mut sampler = Sampler::new(cfg, seq, support, &mut rng)?;
    let mut draws = Vec::with_capacity(cfg.iterations - cfg.burn_in);
    for it in 0..cfg.iterations {
        let gain = (cfg.adapt && it < cfg.burn_in).then(|| (it as f64 + 1.0).powf(-0.6));
        sampler.sweep(&mut rng, gain)?;
        if it + 1 == cfg.burn_in {
            sampler.acceptance = Acceptance::default();
        }
        if it >= cfg.burn_in {
            let s = &sampler.state;
            draws.push(Draw {
                mu: s.mu.clone(),
                alpha: s.alpha.clone(),
                eps: s.eps,
                common: s.common.clone(),
                idio: s.idio.clone(),
                log_lik: sampler.log_likelihood()?,
            });
        }
    }
    Ok(PosteriorSamples {
        config: cfg.clone(),
        support,
        num_dims: seq.num_dims(),
        draws,
        acceptance: sampler.acceptance,
        final_state: sampler.state,
        seconds: start.elapsed().as_secs_f64(),
    })
}

/// Index of the run with the highest mean retained log-likelihood; ties go
/// to the lowest index.
pub fn select_best_restart(runs: &[PosteriorSamples]) -> Result<usize> {
    best_index(runs.iter().map(PosteriorSamples::mean_log_lik))
}

/// Argmax with lowest-index tie-break; NaN scores never win.
pub fn best_index(scores: impl IntoIterator<Item = f64>) -> Result<usize> {
    let mut best: Option<(usize, f64)> = None;
    for (i, s) in scores.into_iter().enumerate() {
        match best {
            None => best = Some((i, s)),
            Some((_, b)) if s > b || (b.is_nan() && !s.is_nan()) => best = Some((i, s)),
            _ => {}
        }
    }
    best.map(|(i, _)| i).ok_or_else(|| Error::Contract("no runs to select from".into()))
}
