//! Stochastic mean-field variational inference.
//!
//! Global factors are Gamma for μ, α and every Beta shape, Dirichlet for the
//! mixture weights and Beta for ε. The local factors are, per event, a
//! categorical over {immigrant} ∪ candidate parents (η_B) and, per pair, a
//! joint categorical over (source, component) (η_W, η_Z). The allocation of a
//! pair only enters the objective when the pair is active, so the pair block is
//! weighted by η_B both in the objective and in the sufficient statistics.
//!
//! `E[ln Γ(a+b)/Γ(a)Γ(b)]` has no closed form under Gamma factors; it is
//! replaced by a second-order Taylor expansion around the variational means
//! ([`taylor_elbo_bound`]), and the shape updates are the closed forms implied
//! by that expansion.

use std::ops::Range;
use std::path::Path;
use std::time::Instant;

use rand::Rng;
use serde::{Deserialize, Serialize};

use crate::error::{Error, Result};
use crate::kernel::{BetaMixture, ExcitationModel, LagFeatures};
use crate::likelihood::PairTable;
use crate::mcmc::{initial_state, McmcConfig};
use crate::model::{EventSequence, GammaParams, HawkesParams, Hyperparams, ShapePrior, Variant};
use crate::rng::stream;
use crate::special::{
    digamma, ln_gamma, sample_beta, sample_dirichlet, sample_gamma, softmax_in_place, trigamma,
};

const MIN_PARAM: f64 = 1e-10;

/// Step-size schedule for the global updates.
#[derive(Debug, Clone, Copy, PartialEq, Serialize, Deserialize)]
#[serde(rename_all = "snake_case")]
pub enum Schedule {
    /// ρ_r = ρ0 (r + τ1)^(−τ2). A delay τ1 ≫ 1 with ρ0 = (1 + τ1)^τ2 keeps
    /// early steps near 1, which shortens the initial transient considerably.
    RobbinsMonro { rho0: f64, tau1: f64, tau2: f64 },
    /// Fixed step; `Constant(1.0)` with κ = 1 is batch coordinate ascent.
    Constant(f64),
}

impl Default for Schedule {
    fn default() -> Self {
        Schedule::RobbinsMonro { rho0: 1.0, tau1: 1.0, tau2: 0.7 }
    }
}

impl Schedule {
    pub fn rate(&self, r: usize) -> f64 {
        match *self {
            Schedule::RobbinsMonro { rho0, tau1, tau2 } => learning_rate(r, rho0, tau1, tau2),
            Schedule::Constant(rho) => rho,
        }
    }

    fn validate(&self) -> Result<()> {
        match *self {
            Schedule::RobbinsMonro { rho0, tau1, tau2 } => {
                if !(rho0 > 0.0 && rho0.is_finite()) {
                    return Err(Error::Config(format!("rho0 must be > 0, got {rho0}")));
                }
                if !(tau1 >= 0.0 && tau1.is_finite()) {
                    return Err(Error::Config(format!("tau1 must be >= 0, got {tau1}")));
                }
                if !(tau2 > 0.5 && tau2 <= 1.0) {
                    return Err(Error::Config(format!("tau2 must lie in (0.5, 1], got {tau2}")));
                }
                let first = learning_rate(1, rho0, tau1, tau2);
                if first > 1.0 + 1e-12 {
                    return Err(Error::Config(format!("first step rho0 (1 + tau1)^-tau2 = {first} exceeds 1")));
                }
            }
            Schedule::Constant(rho) => {
                if !(rho > 0.0 && rho <= 1.0) {
                    return Err(Error::Config(format!("constant step must lie in (0, 1], got {rho}")));
                }
            }
        }
        Ok(())
    }
}

/// ρ0 (r + τ1)^(−τ2) for iteration `r ≥ 1`.
pub fn learning_rate(r: usize, rho0: f64, tau1: f64, tau2: f64) -> f64 {
    rho0 * (r as f64 + tau1).powf(-tau2)
}

#[derive(Debug, Clone, PartialEq, Serialize, Deserialize)]
#[serde(default)]
pub struct SviConfig {
    pub kappa: f64,
    pub schedule: Schedule,
    pub iterations: usize,
    pub h0: usize,
    pub h: usize,
    pub hyper: Hyperparams,
    pub variant: Variant,
    /// Full-data ELBO evaluation cadence; the last iteration is always evaluated.
    pub elbo_every: usize,
    pub seed: u64,
}

impl Default for SviConfig {
    fn default() -> Self {
        Self {
            kappa: 0.2,
            schedule: Schedule::default(),
            iterations: 1000,
            h0: 10,
            h: 10,
            hyper: Hyperparams::default(),
            variant: Variant::Random,
            elbo_every: 25,
            seed: 0,
        }
    }
}

impl SviConfig {
    pub fn validate(&self) -> Result<()> {
        if !(self.kappa > 0.0 && self.kappa <= 1.0) {
            return Err(Error::Config(format!("kappa must lie in (0, 1], got {}", self.kappa)));
        }
        self.schedule.validate()?;
        if self.h0 == 0 || self.h == 0 {
            return Err(Error::Config("truncation levels H0 and H must be at least 1".into()));
        }
        if self.elbo_every == 0 {
            return Err(Error::Config("elbo_every must be at least 1".into()));
        }
        self.hyper.validate()
    }
}

/// Moments of a Gamma variational factor.
fn e_ln(g: &GammaParams) -> f64 {
    digamma(g.shape) - g.rate.ln()
}

/// `E[(ln x − ln E x)²]` under Gamma(shape, rate).
fn e_sq_log_dev(g: &GammaParams) -> f64 {
    let d = digamma(g.shape) - g.shape.ln();
    d * d + trigamma(g.shape)
}

/// Expected log-weights under a Dirichlet factor.
fn dirichlet_e_ln(eta: &[f64]) -> Vec<f64> {
    let total = digamma(eta.iter().sum());
    eta.iter().map(|&v| digamma(v) - total).collect()
}

/// Second-order Taylor expansion of `E[ln Γ(a+b) − ln Γ(a) − ln Γ(b)]` in
/// `(ln a, ln b)` around the variational means.
pub fn taylor_elbo_bound(eta_a: &GammaParams, eta_b: &GammaParams) -> f64 {
    let (a, b) = (eta_a.mean(), eta_b.mean());
    let da = e_ln(eta_a) - a.ln();
    let db = e_ln(eta_b) - b.ln();
    let psi_ab = digamma(a + b);
    let tri_ab = trigamma(a + b);
    ln_gamma(a + b) - ln_gamma(a) - ln_gamma(b)
        + a * (psi_ab - digamma(a)) * da
        + b * (psi_ab - digamma(b)) * db
        + 0.5 * (a * (psi_ab - digamma(a)) + a * a * (tri_ab - trigamma(a))) * e_sq_log_dev(eta_a)
        + 0.5 * (b * (psi_ab - digamma(b)) + b * b * (tri_ab - trigamma(b))) * e_sq_log_dev(eta_b)
        + a * b * tri_ab * da * db
}

/// Approximate `E_q[ln f_Beta(t | a, b, T0)]` for the scaled Beta density.
pub fn q_expected_log_beta(eta_a: &GammaParams, eta_b: &GammaParams, t: f64, support: f64) -> Result<f64> {
    let lag = LagFeatures::new(t, support)
        .ok_or_else(|| Error::Domain(format!("lag {t} outside (0, {support})")))?;
    Ok(ComponentQ::new(eta_a, eta_b, 0.0, support).score(&lag))
}

/// Per-component constants of the pair score.
#[derive(Debug, Clone, Copy)]
struct ComponentQ {
    offset: f64,
    a_minus_1: f64,
    b_minus_1: f64,
}

impl ComponentQ {
    fn new(eta_a: &GammaParams, eta_b: &GammaParams, e_ln_weight: f64, support: f64) -> Self {
        Self {
            offset: e_ln_weight + taylor_elbo_bound(eta_a, eta_b) - support.ln(),
            a_minus_1: eta_a.mean() - 1.0,
            b_minus_1: eta_b.mean() - 1.0,
        }
    }

    #[inline]
    fn score(&self, lag: &LagFeatures) -> f64 {
        self.offset + self.a_minus_1 * lag.ln_x + self.b_minus_1 * lag.ln_1mx
    }
}

/// Variational factors of one Beta mixture.
#[derive(Debug, Clone, PartialEq, Serialize, Deserialize)]
pub struct MixtureQ {
    /// Dirichlet concentration over the weights.
    pub p: Vec<f64>,
    pub a: Vec<GammaParams>,
    pub b: Vec<GammaParams>,
}

impl MixtureQ {
    pub fn len(&self) -> usize {
        self.p.len()
    }

    pub fn is_empty(&self) -> bool {
        self.p.is_empty()
    }

    /// Mixture at the variational means.
    pub fn mean_mixture(&self) -> Result<BetaMixture> {
        BetaMixture::from_unnormalized(
            self.p.clone(),
            self.a.iter().map(GammaParams::mean).collect(),
            self.b.iter().map(GammaParams::mean).collect(),
        )
    }

    fn sample<R: Rng + ?Sized>(&self, rng: &mut R) -> Result<BetaMixture> {
        let p = sample_dirichlet(&self.p, rng);
        let a = self.a.iter().map(|g| sample_gamma(g.shape, g.rate, rng).max(f64::MIN_POSITIVE)).collect();
        let b = self.b.iter().map(|g| sample_gamma(g.shape, g.rate, rng).max(f64::MIN_POSITIVE)).collect();
        BetaMixture::from_unnormalized(p, a, b)
    }
}

fn excitation_from_flat(eps: f64, support: f64, common: BetaMixture, idio: Vec<BetaMixture>) -> Result<ExcitationModel> {
    let k = (idio.len() as f64).sqrt().round() as usize;
    let rows = idio.chunks(k.max(1)).map(<[BetaMixture]>::to_vec).collect();
    ExcitationModel::new(eps, support, common, rows)
}

/// Global variational parameters.
#[derive(Debug, Clone, PartialEq, Serialize, Deserialize)]
pub struct VariationalState {
    pub variant: Variant,
    #[serde(rename = "T0")]
    pub support: f64,
    pub mu: Vec<GammaParams>,
    /// Row-major, row = parent.
    pub alpha: Vec<GammaParams>,
    /// Beta(η_ε1, η_ε2) on ε; ignored when the variant fixes ε.
    pub eps: (f64, f64),
    pub common: MixtureQ,
    pub idio: Vec<MixtureQ>,
}

impl VariationalState {
    pub fn num_dims(&self) -> usize {
        self.mu.len()
    }

    /// Variational means of ε (or the value fixed by the variant).
    pub fn eps_mean(&self) -> f64 {
        self.variant.fixed_eps().unwrap_or(self.eps.0 / (self.eps.0 + self.eps.1))
    }

    /// `(E ln ε, E ln(1 − ε))`; −∞ marks a source the variant excludes.
    fn e_ln_eps(&self) -> (f64, f64) {
        match self.variant {
            Variant::Random => {
                let total = digamma(self.eps.0 + self.eps.1);
                (digamma(self.eps.0) - total, digamma(self.eps.1) - total)
            }
            Variant::Common => (0.0, f64::NEG_INFINITY),
            Variant::Idio => (f64::NEG_INFINITY, 0.0),
        }
    }

    /// Point estimate at the variational means.
    pub fn mean_params(&self) -> Result<HawkesParams> {
        let common = self.common.mean_mixture()?;
        let idio = self.idio.iter().map(MixtureQ::mean_mixture).collect::<Result<Vec<_>>>()?;
        let exc = excitation_from_flat(self.eps_mean(), self.support, common, idio)?;
        HawkesParams::from_flat(
            self.mu.iter().map(GammaParams::mean).collect(),
            self.alpha.iter().map(GammaParams::mean).collect(),
            exc,
        )
    }

    fn check_positive(&self) -> Result<()> {
        let gammas = self
            .mu
            .iter()
            .chain(&self.alpha)
            .chain(std::iter::once(&self.common).chain(&self.idio).flat_map(|m| m.a.iter().chain(&m.b)));
        let ok = gammas.clone().all(|g| g.shape > 0.0 && g.rate > 0.0 && g.shape.is_finite() && g.rate.is_finite())
            && std::iter::once(&self.common).chain(&self.idio).all(|m| m.p.iter().all(|&v| v > 0.0 && v.is_finite()))
            && self.eps.0 > 0.0
            && self.eps.1 > 0.0;
        if ok {
            Ok(())
        } else {
            Err(Error::InvalidParams("variational parameters must be finite and > 0".into()))
        }
    }

    pub fn write_json(&self, path: &Path) -> Result<()> {
        crate::io::write_json(self, path)
    }

    pub fn read_json(path: &Path) -> Result<Self> {
        let state: Self = crate::io::read_json(path)?;
        state.check_positive()?;
        Ok(state)
    }
}

/// Initial state whose means equal the sampler's initial values, with shape 2.
pub fn initial_variational_state(cfg: &SviConfig, seq: &EventSequence, support: f64) -> VariationalState {
    let mcmc_cfg = McmcConfig { h0: cfg.h0, h: cfg.h, hyper: cfg.hyper, variant: cfg.variant, ..McmcConfig::default() };
    let mut rng = stream(cfg.seed, &[0x7376, 0]);
    let init = initial_state(&mcmc_cfg, seq, &mut rng);
    let at_mean = |m: f64| GammaParams::new(2.0, 2.0 / m);
    let mixture = |m: &crate::mcmc::MixtureState| MixtureQ {
        p: vec![2.0 / m.p.len() as f64; m.p.len()],
        a: m.a.iter().map(|&v| at_mean(v)).collect(),
        b: m.b.iter().map(|&v| at_mean(v)).collect(),
    };
    VariationalState {
        variant: cfg.variant,
        support,
        mu: init.mu.iter().map(|&v| at_mean(v)).collect(),
        alpha: init.alpha.iter().map(|&v| at_mean(v)).collect(),
        eps: (1.0, 1.0),
        common: mixture(&init.common),
        idio: init.idio.iter().map(mixture).collect(),
    }
}

/// Subsampling window of length κT starting at `start`. A window running
/// past T wraps to the beginning, so it consists of at most two segments of
/// event indices; each segment is self-contained for parent lookup.
#[derive(Debug, Clone, PartialEq)]
pub struct Window {
    pub start: f64,
    pub length: f64,
    pub segments: Vec<Range<usize>>,
}

impl Window {
    pub fn full(seq: &EventSequence) -> Self {
        Self { start: 0.0, length: seq.horizon(), segments: vec![0..seq.len()] }
    }

    pub fn len(&self) -> usize {
        self.segments.iter().map(Range::len).sum()
    }

    pub fn is_empty(&self) -> bool {
        self.len() == 0
    }

    pub fn is_full(&self, seq: &EventSequence) -> bool {
        self.segments.len() == 1 && self.segments[0] == (0..seq.len())
    }

    /// Event indices in window order.
    pub fn events(&self) -> impl Iterator<Item = usize> + '_ {
        self.segments.iter().flat_map(Range::clone)
    }

    /// The window's events as a sequence on the original time axis.
    pub fn subsequence(&self, seq: &EventSequence) -> Result<EventSequence> {
        let mut idx: Vec<usize> = self.events().collect();
        idx.sort_unstable();
        EventSequence::new(
            idx.iter().map(|&j| seq.times()[j]).collect(),
            idx.iter().map(|&j| seq.dims()[j]).collect(),
            seq.horizon(),
            seq.num_dims(),
        )
    }
}

/// Draws `start ~ U[0, T)` and returns the events of `[start, start + κT]`,
/// wrapped around T. Every event is included with probability κ, so
/// κ⁻¹-scaled window sums are unbiased for the full-data sums.
pub fn select_window<R: Rng + ?Sized>(seq: &EventSequence, kappa: f64, rng: &mut R) -> Window {
    if kappa >= 1.0 {
        return Window::full(seq);
    }
    let horizon = seq.horizon();
    let start = rng.random::<f64>() * horizon;
    let length = kappa * horizon;
    let end = start + length;
    let t = seq.times();
    let lo = t.partition_point(|&x| x < start);
    let mut segments = vec![lo..t.partition_point(|&x| x <= end.min(horizon))];
    if end > horizon {
        segments.push(0..t.partition_point(|&x| x <= end - horizon).min(lo));
    }
    segments.retain(|r| !r.is_empty());
    Window { start, length, segments }
}

/// Local factors for the events of one window.
#[derive(Debug, Clone, PartialEq)]
pub struct LocalState {
    pub window: Window,
    /// Event indices in window order.
    pub events: Vec<usize>,
    /// η_B(immigrant) per window event.
    pub immigrant: Vec<f64>,
    /// Candidate parents per window event, restricted to the window.
    pub parents: Vec<Range<usize>>,
    /// Offsets into `branch` per window event.
    pub offsets: Vec<usize>,
    /// η_B(parent) per pair.
    pub branch: Vec<f64>,
    /// Joint (η_W, η_Z) per pair, `H0` common entries followed by `H` idiosyncratic ones.
    pub alloc: Vec<f64>,
    pub h0: usize,
    pub h: usize,
}

impl LocalState {
    pub fn num_pairs(&self) -> usize {
        self.branch.len()
    }

    pub fn block_len(&self) -> usize {
        self.h0 + self.h
    }

    pub fn alloc_block(&self, pair: usize) -> &[f64] {
        let w = self.block_len();
        &self.alloc[pair * w..(pair + 1) * w]
    }

    /// Expected offspring mass (Σ η_B η_W η_Z over all pairs and components).
    pub fn offspring_mass(&self) -> f64 {
        self.branch.iter().sum()
    }
}

/// Precomputed pair-score constants for the current globals.
struct ScoreCache {
    e_ln_mu: Vec<f64>,
    e_ln_alpha: Vec<f64>,
    common: Vec<ComponentQ>,
    idio: Vec<Vec<ComponentQ>>,
}

impl ScoreCache {
    fn new(state: &VariationalState) -> Self {
        let (ln_eps, ln_1m_eps) = state.e_ln_eps();
        let support = state.support;
        let mixture = |m: &MixtureQ, ln_src: f64| -> Vec<ComponentQ> {
            let e_ln_p = dirichlet_e_ln(&m.p);
            (0..m.len()).map(|h| ComponentQ::new(&m.a[h], &m.b[h], ln_src + e_ln_p[h], support)).collect()
        };
        Self {
            e_ln_mu: state.mu.iter().map(e_ln).collect(),
            e_ln_alpha: state.alpha.iter().map(e_ln).collect(),
            common: mixture(&state.common, ln_eps),
            idio: state.idio.iter().map(|m| mixture(m, ln_1m_eps)).collect(),
        }
    }

    /// Fills `out` with the allocation scores of a pair (without ln α).
    fn pair_scores(&self, pair_type: usize, lag: &LagFeatures, out: &mut [f64]) {
        let (c, i) = out.split_at_mut(self.common.len());
        for (o, q) in c.iter_mut().zip(&self.common) {
            *o = q.score(lag);
        }
        for (o, q) in i.iter_mut().zip(&self.idio[pair_type]) {
            *o = q.score(lag);
        }
    }
}

/// Pair scores for one event: the immigrant score and, per candidate parent,
/// the allocation block's log-normalizer plus E ln α.
fn event_update(
    cache: &ScoreCache,
    seq: &EventSequence,
    table: &PairTable,
    j: usize,
    parents: Range<usize>,
    branch: &mut [f64],
    alloc: &mut [f64],
) -> f64 {
    let k = seq.num_dims();
    let dims = seq.dims();
    let dj = dims[j];
    let width = cache.common.len() + cache.idio.first().map_or(0, Vec::len);
    let imm = cache.e_ln_mu[dj];
    for (slot, i) in parents.enumerate() {
        let lag = &table.lags[table.index.pair(i, j)];
        let pair_type = dims[i] * k + dj;
        let block = &mut alloc[slot * width..(slot + 1) * width];
        cache.pair_scores(pair_type, lag, block);
        let ln_norm = softmax_in_place(block);
        branch[slot] = cache.e_ln_alpha[pair_type] + ln_norm;
    }
    let mut scores = Vec::with_capacity(branch.len() + 1);
    scores.push(imm);
    scores.extend_from_slice(branch);
    softmax_in_place(&mut scores);
    branch.copy_from_slice(&scores[1..]);
    scores[0]
}

/// Coordinate update of the local factors for every event in `window`, given
/// the current globals. Parents before the start of an event's window
/// segment are excluded.
pub fn update_local(state: &VariationalState, seq: &EventSequence, table: &PairTable, window: &Window) -> LocalState {
    let cache = ScoreCache::new(state);
    let h0 = state.common.len();
    let h = state.idio.first().map_or(0, MixtureQ::len);
    let width = h0 + h;
    let mut events = Vec::with_capacity(window.len());
    let mut parents = Vec::with_capacity(window.len());
    for segment in &window.segments {
        for j in segment.clone() {
            let r = table.index.parents(j);
            events.push(j);
            parents.push(r.start.max(segment.start)..r.end);
        }
    }
    let mut offsets = Vec::with_capacity(parents.len() + 1);
    offsets.push(0);
    for r in &parents {
        offsets.push(offsets.last().unwrap() + r.len());
    }
    let total = *offsets.last().unwrap();
    let mut branch = vec![0.0; total];
    let mut alloc = vec![0.0; total * width];
    let mut immigrant = Vec::with_capacity(parents.len());
    for (slot, &j) in events.iter().enumerate() {
        let range = offsets[slot]..offsets[slot + 1];
        immigrant.push(event_update(
            &cache,
            seq,
            table,
            j,
            parents[slot].clone(),
            &mut branch[range.clone()],
            &mut alloc[range.start * width..range.end * width],
        ));
    }
    LocalState { window: window.clone(), events, immigrant, parents, offsets, branch, alloc, h0, h }
}

/// Responsibility-weighted sufficient statistics of one mixture component.
#[derive(Debug, Clone, Copy, Default, PartialEq)]
pub struct SoftStats {
    pub n: f64,
    pub sum_ln_x: f64,
    pub sum_ln_1mx: f64,
}

impl SoftStats {
    fn add(&mut self, w: f64, lag: &LagFeatures) {
        self.n += w;
        self.sum_ln_x += w * lag.ln_x;
        self.sum_ln_1mx += w * lag.ln_1mx;
    }

    fn scaled(&self, s: f64) -> Self {
        Self { n: s * self.n, sum_ln_x: s * self.sum_ln_x, sum_ln_1mx: s * self.sum_ln_1mx }
    }
}

/// Expected counts from a local state, scaled by `scale` (κ⁻¹ for a window).
#[derive(Debug, Clone, PartialEq)]
pub struct WindowStats {
    pub immigrants: Vec<f64>,
    /// Row-major, row = parent.
    pub offspring: Vec<f64>,
    pub common: Vec<SoftStats>,
    pub idio: Vec<Vec<SoftStats>>,
}

impl WindowStats {
    pub fn total_common(&self) -> f64 {
        self.common.iter().map(|s| s.n).sum()
    }

    pub fn total_idio(&self) -> f64 {
        self.idio.iter().flatten().map(|s| s.n).sum()
    }
}

pub fn window_stats(local: &LocalState, seq: &EventSequence, table: &PairTable, scale: f64) -> WindowStats {
    let k = seq.num_dims();
    let dims = seq.dims();
    let width = local.block_len();
    let mut immigrants = vec![0.0; k];
    let mut offspring = vec![0.0; k * k];
    let mut common = vec![SoftStats::default(); local.h0];
    let mut idio = vec![vec![SoftStats::default(); local.h]; k * k];
    for (slot, &j) in local.events.iter().enumerate() {
        immigrants[dims[j]] += local.immigrant[slot];
        for (n, i) in local.parents[slot].clone().enumerate() {
            let pair = local.offsets[slot] + n;
            let b = local.branch[pair];
            let pair_type = dims[i] * k + dims[j];
            offspring[pair_type] += b;
            let lag = &table.lags[table.index.pair(i, j)];
            let block = &local.alloc[pair * width..(pair + 1) * width];
            for (h, &r) in block[..local.h0].iter().enumerate() {
                common[h].add(b * r, lag);
            }
            for (h, &r) in block[local.h0..].iter().enumerate() {
                idio[pair_type][h].add(b * r, lag);
            }
        }
    }
    WindowStats {
        immigrants: immigrants.into_iter().map(|v| v * scale).collect(),
        offspring: offspring.into_iter().map(|v| v * scale).collect(),
        common: common.iter().map(|s| s.scaled(scale)).collect(),
        idio: idio.iter().map(|row| row.iter().map(|s| s.scaled(scale)).collect()).collect(),
    }
}

fn blend(current: f64, target: f64, rho: f64, what: &str) -> f64 {
    let v = (1.0 - rho) * current + rho * target;
    if v > MIN_PARAM && v.is_finite() {
        v
    } else {
        log::warn!("variational parameter {what} = {v} clamped to {MIN_PARAM}");
        MIN_PARAM
    }
}

fn blend_gamma(g: &mut GammaParams, shape: f64, rate: f64, rho: f64, what: &str) {
    g.shape = blend(g.shape, shape, rho, what);
    g.rate = blend(g.rate, rate, rho, what);
}

/// μ and α factors. The α rate uses the approximate compensator `h + n_ℓ`.
pub fn update_rates(state: &mut VariationalState, stats: &WindowStats, seq: &EventSequence, hyper: &Hyperparams, rho: f64) {
    let horizon = seq.horizon();
    for (g, &imm) in state.mu.iter_mut().zip(&stats.immigrants) {
        blend_gamma(g, hyper.e + imm, hyper.f + horizon, rho, "mu");
    }
    let k = seq.num_dims();
    let counts = seq.counts();
    for (pc, g) in state.alpha.iter_mut().enumerate() {
        blend_gamma(g, hyper.g + stats.offspring[pc], hyper.h + counts[pc / k] as f64, rho, "alpha");
    }
}

/// Dirichlet factors of the mixture weights.
pub fn update_weights(state: &mut VariationalState, stats: &WindowStats, hyper: &Hyperparams, rho: f64) {
    let h0 = state.common.len() as f64;
    for (p, s) in state.common.p.iter_mut().zip(&stats.common) {
        *p = blend(*p, hyper.gamma_dp / h0 + s.n, rho, "p0");
    }
    for (m, row) in state.idio.iter_mut().zip(&stats.idio) {
        let h = m.len() as f64;
        for (p, s) in m.p.iter_mut().zip(row) {
            *p = blend(*p, hyper.gamma_dp / h + s.n, rho, "p");
        }
    }
}

/// Beta factor of ε; a no-op when the variant fixes ε.
pub fn update_eps(state: &mut VariationalState, stats: &WindowStats, rho: f64) {
    if state.variant != Variant::Random {
        return;
    }
    state.eps.0 = blend(state.eps.0, 1.0 + stats.total_common(), rho, "eps");
    state.eps.1 = blend(state.eps.1, 1.0 + stats.total_idio(), rho, "eps");
}

/// Closed-form shape targets implied by the Taylor-expanded objective.
fn shape_targets(a: &GammaParams, b: &GammaParams, s: &SoftStats, prior: &ShapePrior) -> (f64, f64, f64, f64) {
    let (am, bm) = (a.mean(), b.mean());
    let da = e_ln(a) - am.ln();
    let db = e_ln(b) - bm.ln();
    let psi_ab = digamma(am + bm);
    let cross = am * bm * trigamma(am + bm);
    let a_shape = prior.c_a + s.n * (am * (psi_ab - digamma(am)) + cross * db);
    let a_rate = prior.d_a - s.sum_ln_x;
    let b_shape = prior.c_b + s.n * (bm * (psi_ab - digamma(bm)) + cross * da);
    let b_rate = prior.d_b - s.sum_ln_1mx;
    (a_shape, a_rate, b_shape, b_rate)
}

/// Gamma factors of every Beta shape; targets are computed from the current
/// factors before any of them is overwritten.
pub fn update_shapes(state: &mut VariationalState, stats: &WindowStats, hyper: &Hyperparams, rho: f64) {
    let apply = |m: &mut MixtureQ, stats: &[SoftStats], prior: &ShapePrior| {
        for h in 0..m.len() {
            let (sa, ra, sb, rb) = shape_targets(&m.a[h], &m.b[h], &stats[h], prior);
            blend_gamma(&mut m.a[h], sa, ra, rho, "a");
            blend_gamma(&mut m.b[h], sb, rb, rho, "b");
        }
    };
    apply(&mut state.common, &stats.common, &hyper.common);
    for (m, row) in state.idio.iter_mut().zip(&stats.idio) {
        apply(m, row, &hyper.idio);
    }
}

/// All global blocks from one set of window statistics.
pub fn update_global(state: &mut VariationalState, stats: &WindowStats, seq: &EventSequence, hyper: &Hyperparams, rho: f64) {
    update_shapes(state, stats, hyper, rho);
    update_rates(state, stats, seq, hyper, rho);
    update_weights(state, stats, hyper, rho);
    update_eps(state, stats, rho);
}

/// `E_q[ln Gamma(x | c, d)] − E_q[ln q(x)]`.
fn gamma_kl_term(c: f64, d: f64, q: &GammaParams) -> f64 {
    let el = e_ln(q);
    let prior = c * d.ln() - ln_gamma(c) + (c - 1.0) * el - d * q.mean();
    let entropy_neg = q.shape * q.rate.ln() - ln_gamma(q.shape) + (q.shape - 1.0) * el - q.shape;
    prior - entropy_neg
}

fn dirichlet_ln_norm(conc: &[f64]) -> f64 {
    ln_gamma(conc.iter().sum()) - conc.iter().map(|&v| ln_gamma(v)).sum::<f64>()
}

/// `E_q[ln Dir(p | prior)] − E_q[ln q(p)]`.
fn dirichlet_kl_term(prior: f64, eta: &[f64]) -> f64 {
    let el = dirichlet_e_ln(eta);
    let prior_conc = vec![prior; eta.len()];
    let lp = dirichlet_ln_norm(&prior_conc) + el.iter().map(|v| (prior - 1.0) * v).sum::<f64>();
    let lq = dirichlet_ln_norm(eta) + eta.iter().zip(&el).map(|(&e, v)| (e - 1.0) * v).sum::<f64>();
    lp - lq
}

fn xlogx_neg(values: &[f64]) -> f64 {
    values.iter().filter(|&&v| v > 0.0).map(|&v| -v * v.ln()).sum()
}

/// Evidence lower bound with the given full-data local factors.
pub fn elbo_with_local(
    state: &VariationalState,
    seq: &EventSequence,
    table: &PairTable,
    local: &LocalState,
    hyper: &Hyperparams,
) -> Result<f64> {
    if !local.window.is_full(seq) {
        return Err(Error::Contract("the objective needs full-data local factors".into()));
    }
    let cache = ScoreCache::new(state);
    let k = seq.num_dims();
    let dims = seq.dims();
    let width = local.block_len();
    let mut scores = vec![0.0; width];
    let mut total = 0.0;
    for (slot, &j) in local.events.iter().enumerate() {
        let q_imm = local.immigrant[slot];
        if q_imm > 0.0 {
            total += q_imm * (cache.e_ln_mu[dims[j]] - q_imm.ln());
        }
        for (n, i) in local.parents[slot].clone().enumerate() {
            let pair = local.offsets[slot] + n;
            let b = local.branch[pair];
            if b <= 0.0 {
                continue;
            }
            let pair_type = dims[i] * k + dims[j];
            let block = &local.alloc[pair * width..(pair + 1) * width];
            cache.pair_scores(pair_type, &table.lags[table.index.pair(i, j)], &mut scores);
            let expected: f64 = block.iter().zip(&scores).filter(|(&r, _)| r > 0.0).map(|(&r, &s)| r * s).sum();
            total += b * (cache.e_ln_alpha[pair_type] - b.ln() + expected + xlogx_neg(block));
        }
    }
    let horizon = seq.horizon();
    for g in &state.mu {
        total += gamma_kl_term(hyper.e, hyper.f, g) - horizon * g.mean();
    }
    let counts = seq.counts();
    for (pc, g) in state.alpha.iter().enumerate() {
        total += gamma_kl_term(hyper.g, hyper.h, g) - counts[pc / k] as f64 * g.mean();
    }
    let mixture = |m: &MixtureQ, prior: &ShapePrior| -> f64 {
        dirichlet_kl_term(hyper.gamma_dp / m.len() as f64, &m.p)
            + m.a.iter().map(|g| gamma_kl_term(prior.c_a, prior.d_a, g)).sum::<f64>()
            + m.b.iter().map(|g| gamma_kl_term(prior.c_b, prior.d_b, g)).sum::<f64>()
    };
    total += mixture(&state.common, &hyper.common);
    total += state.idio.iter().map(|m| mixture(m, &hyper.idio)).sum::<f64>();
    if state.variant == Variant::Random {
        total += dirichlet_kl_term(1.0, &[state.eps.0, state.eps.1]);
    }
    if total.is_finite() {
        Ok(total)
    } else {
        Err(Error::Domain(format!("objective is not finite: {total}")))
    }
}

/// Evidence lower bound at the optimal full-data local factors.
pub fn elbo(state: &VariationalState, seq: &EventSequence, table: &PairTable, hyper: &Hyperparams) -> Result<f64> {
    let local = update_local(state, seq, table, &Window::full(seq));
    elbo_with_local(state, seq, table, &local, hyper)
}

/// Fitted variational state with its objective trace.
#[derive(Debug, Clone)]
pub struct SviResult {
    pub config: SviConfig,
    pub state: VariationalState,
    /// `(iteration, elbo)` pairs.
    pub trace: Vec<(usize, f64)>,
    pub seconds: f64,
}

impl SviResult {
    pub fn final_elbo(&self) -> f64 {
        self.trace.last().map_or(f64::NEG_INFINITY, |&(_, v)| v)
    }

    pub fn write_trace(&self, path: &Path) -> Result<()> {
        let mut w = csv::Writer::from_path(path)?;
        w.write_record(["iter", "elbo"])?;
        for &(it, v) in &self.trace {
            w.write_record([it.to_string(), v.to_string()])?;
        }
        w.flush()?;
        Ok(())
    }
}

/// Runs `cfg.iterations` window → local → global steps from the default
/// initialization.
pub fn run_svi(cfg: &SviConfig, seq: &EventSequence, support: f64) -> Result<SviResult> {
    cfg.validate()?;
    let state = initial_variational_state(cfg, seq, support);
    run_svi_from(cfg, seq, state)
}

pub fn run_svi_from(cfg: &SviConfig, seq: &EventSequence, mut state: VariationalState) -> Result<SviResult> {
    cfg.validate()?;
    if state.num_dims() != seq.num_dims() {
        return Err(Error::Shape(format!(
            "state has {} dimensions but the sequence has {}",
            state.num_dims(),
            seq.num_dims()
        )));
    }
    state.variant = cfg.variant;
    let clock = Instant::now();
    let table = PairTable::new(seq, state.support);
    let mut rng = stream(cfg.seed, &[0x7376, 1]);
    let mut trace = Vec::new();
    for r in 1..=cfg.iterations {
        let window = select_window(seq, cfg.kappa, &mut rng);
        let local = update_local(&state, seq, &table, &window);
        let stats = window_stats(&local, seq, &table, 1.0 / cfg.kappa);
        update_global(&mut state, &stats, seq, &cfg.hyper, cfg.schedule.rate(r));
        if r % cfg.elbo_every == 0 || r == cfg.iterations {
            let value = elbo(&state, seq, &table, &cfg.hyper)?;
            log::debug!("svi iteration {r}: elbo {value:.4}");
            trace.push((r, value));
        }
    }
    if trace.is_empty() {
        trace.push((0, elbo(&state, seq, &table, &cfg.hyper)?));
    }
    Ok(SviResult { config: cfg.clone(), state, trace, seconds: clock.elapsed().as_secs_f64() })
}

/// Index of the restart with the highest final ELBO.
pub fn select_best_restart(runs: &[SviResult]) -> Result<usize> {
    crate::mcmc::best_index(runs.iter().map(SviResult::final_elbo))
}

/// One joint draw of the global parameters.
#[derive(Debug, Clone, PartialEq)]
pub struct VariationalDraw {
    pub mu: Vec<f64>,
    pub alpha: Vec<f64>,
    pub eps: f64,
    pub common: BetaMixture,
    pub idio: Vec<BetaMixture>,
}

impl VariationalDraw {
    pub fn params(&self, support: f64) -> Result<HawkesParams> {
        let exc = excitation_from_flat(self.eps, support, self.common.clone(), self.idio.clone())?;
        HawkesParams::from_flat(self.mu.clone(), self.alpha.clone(), exc)
    }
}

/// Independent draws from the variational families.
pub fn sample_from_variational<R: Rng + ?Sized>(
    state: &VariationalState,
    n_draws: usize,
    rng: &mut R,
) -> Result<Vec<VariationalDraw>> {
    (0..n_draws)
        .map(|_| {
            let gamma = |g: &GammaParams, rng: &mut R| sample_gamma(g.shape, g.rate, rng);
            let mu = state.mu.iter().map(|g| gamma(g, rng)).collect();
            let alpha = state.alpha.iter().map(|g| gamma(g, rng)).collect();
            let eps = match state.variant.fixed_eps() {
                Some(e) => e,
                None => sample_beta(state.eps.0, state.eps.1, rng).clamp(0.0, 1.0),
            };
            let common = state.common.sample(rng)?;
            let idio = state.idio.iter().map(|m| m.sample(rng)).collect::<Result<Vec<_>>>()?;
            Ok(VariationalDraw { mu, alpha, eps, common, idio })
        })
        .collect()
}
