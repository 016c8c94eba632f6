//! Synthetic realizations of multivariate Hawkes processes.
//!
//! [`simulate_branching`] builds the cluster representation generation by
//! generation and returns the true branching; [`simulate_thinning`] is an
//! independent Ogata-style rejection sampler on the conditional intensity.
//!
//! Random streams: immigrants of dimension k draw from stream `[1, k]`; each
//! event carries a key, its offspring draw from the stream of that key, and
//! child keys are derived from the parent key. The output therefore does not
//! depend on the order in which generations are processed.

use std::collections::VecDeque;

use rand::Rng;
use rand_chacha::ChaCha8Rng;
use rand_distr::{Distribution, Exp, Poisson};
use serde::{Deserialize, Serialize};

use crate::error::{ensure_positive, Error, Result};
use crate::kernel::{BetaMixture, ExcitationModel};
use crate::linalg::{expected_rates, spectral_radius};
use crate::model::{Allocation, EventSequence, HawkesParams, LatentState, Source};
use crate::rng::{derive_seed, stream};
use crate::special::{sample_beta, sample_categorical};

/// Exponential-blend excitation ε e^{−t} + (1 − ε) λ e^{−λ t}, unbounded support.
#[derive(Debug, Clone, PartialEq, Serialize, Deserialize)]
pub struct ExponentialTruth {
    pub mu: Vec<f64>,
    /// `alpha[parent][child]`.
    pub alpha: Vec<Vec<f64>>,
    pub eps: f64,
    /// Decay rate of the idiosyncratic part, `rates[parent][child]`.
    pub rates: Vec<Vec<f64>>,
}

impl ExponentialTruth {
    fn validate(&self) -> Result<()> {
        let k = self.mu.len();
        if k == 0 || self.alpha.len() != k || self.rates.len() != k {
            return Err(Error::Shape("exponential truth needs K-vectors and K×K matrices".into()));
        }
        if self.alpha.iter().chain(&self.rates).any(|r| r.len() != k) {
            return Err(Error::Shape("exponential truth matrices must be K×K".into()));
        }
        if !(0.0..=1.0).contains(&self.eps) {
            return Err(Error::InvalidParams(format!("eps must lie in [0, 1], got {}", self.eps)));
        }
        if self.mu.iter().chain(self.alpha.iter().flatten()).any(|&v| !v.is_finite() || v < 0.0) {
            return Err(Error::InvalidParams("mu and alpha must be finite and >= 0".into()));
        }
        for &r in self.rates.iter().flatten() {
            ensure_positive("decay rate", r)?;
        }
        Ok(())
    }

    pub fn density(&self, parent: usize, child: usize, t: f64) -> f64 {
        if t <= 0.0 {
            return 0.0;
        }
        let l = self.rates[parent][child];
        self.eps * (-t).exp() + (1.0 - self.eps) * l * (-l * t).exp()
    }
}

/// Data-generating mechanism.
#[derive(Debug, Clone, PartialEq, Serialize, Deserialize)]
#[serde(tag = "kind", rename_all = "snake_case")]
pub enum Truth {
    /// Beta-mixture excitations on (0, T0).
    Params { params: HawkesParams },
    Exponential(ExponentialTruth),
}

/// μ = (0.05, 0.1) and α = [[0.6, 0.15], [0.3, 0.6]], shared by both paper truths.
pub const PAPER_MU: [f64; 2] = [0.05, 0.1];
pub const PAPER_ALPHA: [[f64; 2]; 2] = [[0.6, 0.15], [0.3, 0.6]];
/// Horizon of the full-scale simulation study.
pub const PAPER_HORIZON: f64 = 15000.0;
/// ε grid of the simulation study.
pub const PAPER_EPS_GRID: [f64; 5] = [0.0, 0.2, 0.5, 0.8, 1.0];

impl Truth {
    /// Common Beta(1, 4), idiosyncratic a = [[2, 4], [1.5, 1]], b = [[6, 1], [5, 1]], T0 = 1.
    pub fn paper_beta(eps: f64) -> Result<Self> {
        let a = [[2.0, 4.0], [1.5, 1.0]];
        let b = [[6.0, 1.0], [5.0, 1.0]];
        let idio = (0..2)
            .map(|p| (0..2).map(|c| BetaMixture::single(a[p][c], b[p][c])).collect::<Result<Vec<_>>>())
            .collect::<Result<Vec<_>>>()?;
        let exc = ExcitationModel::new(eps, 1.0, BetaMixture::single(1.0, 4.0)?, idio)?;
        let params = HawkesParams::new(PAPER_MU.to_vec(), PAPER_ALPHA.iter().map(|r| r.to_vec()).collect(), exc)?;
        Ok(Truth::Params { params })
    }

    /// Exponential blend with idiosyncratic decay rates [[2, 0.8], [0.8, 2]].
    pub fn paper_exponential(eps: f64) -> Result<Self> {
        let truth = ExponentialTruth {
            mu: PAPER_MU.to_vec(),
            alpha: PAPER_ALPHA.iter().map(|r| r.to_vec()).collect(),
            eps,
            rates: vec![vec![2.0, 0.8], vec![0.8, 2.0]],
        };
        truth.validate()?;
        Ok(Truth::Exponential(truth))
    }

    pub fn validate(&self) -> Result<()> {
        match self {
            Truth::Params { .. } => Ok(()),
            Truth::Exponential(e) => e.validate(),
        }
    }

    pub fn num_dims(&self) -> usize {
        match self {
            Truth::Params { params } => params.num_dims(),
            Truth::Exponential(e) => e.mu.len(),
        }
    }

    pub fn mu(&self) -> &[f64] {
        match self {
            Truth::Params { params } => params.mu(),
            Truth::Exponential(e) => &e.mu,
        }
    }

    pub fn alpha(&self, parent: usize, child: usize) -> f64 {
        match self {
            Truth::Params { params } => params.alpha(parent, child),
            Truth::Exponential(e) => e.alpha[parent][child],
        }
    }

    pub fn alpha_flat(&self) -> Vec<f64> {
        let k = self.num_dims();
        (0..k * k).map(|i| self.alpha(i / k, i % k)).collect()
    }

    pub fn eps(&self) -> f64 {
        match self {
            Truth::Params { params } => params.excitation().eps(),
            Truth::Exponential(e) => e.eps,
        }
    }

    /// Normalized excitation density φ̃_{parent,child}(t).
    pub fn density(&self, parent: usize, child: usize, t: f64) -> f64 {
        match self {
            Truth::Params { params } => params.excitation().eval(parent, child, t).unwrap_or(0.0),
            Truth::Exponential(e) => e.density(parent, child, t),
        }
    }

    /// Largest lag at which an excitation is not negligible.
    fn reach(&self) -> f64 {
        match self {
            Truth::Params { params } => params.support(),
            Truth::Exponential(e) => {
                let slowest = e.rates.iter().flatten().copied().fold(1.0, f64::min);
                40.0 / slowest
            }
        }
    }

    /// Stationary mean rates (I − Aᵀ)⁻¹ μ.
    pub fn expected_rates(&self) -> Result<Vec<f64>> {
        match self {
            Truth::Params { params } => expected_rates(params),
            Truth::Exponential(e) => {
                let m = BetaMixture::single(1.0, 1.0)?;
                let k = e.mu.len();
                let exc = ExcitationModel::shared(0.0, 1.0, m.clone(), m, k)?;
                expected_rates(&HawkesParams::new(e.mu.clone(), e.alpha.clone(), exc)?)
            }
        }
    }

    fn check_stationary(&self) -> Result<()> {
        self.validate()?;
        let radius = spectral_radius(&self.alpha_flat(), self.num_dims())?;
        if radius >= 1.0 {
            return Err(Error::NonStationary(radius));
        }
        Ok(())
    }

    /// Draws an offspring lag and the mixture branch it came from.
    fn sample_lag(&self, parent: usize, child: usize, rng: &mut ChaCha8Rng) -> (f64, Allocation) {
        match self {
            Truth::Params { params } => {
                let exc = params.excitation();
                let common = rng.random::<f64>() < exc.eps();
                let (source, mixture) = if common {
                    (Source::Common, exc.common())
                } else {
                    (Source::Idiosyncratic, exc.idio(parent, child))
                };
                let h = sample_categorical(mixture.weights(), rng);
                let comp = mixture.components()[h];
                let lag = loop {
                    let x = sample_beta(comp.a(), comp.b(), rng);
                    if x > 0.0 && x < 1.0 {
                        break x * exc.support();
                    }
                };
                (lag, Allocation { source, component: h })
            }
            Truth::Exponential(e) => {
                let common = rng.random::<f64>() < e.eps;
                let rate = if common { 1.0 } else { e.rates[parent][child] };
                let lag = Exp::new(rate).expect("positive rate").sample(rng);
                let source = if common { Source::Common } else { Source::Idiosyncratic };
                (lag, Allocation { source, component: 0 })
            }
        }
    }

    /// Upper bound of φ̃_{parent,child} over lags in [lo, hi].
    fn density_bound(&self, parent: usize, child: usize, lo: f64, hi: f64) -> f64 {
        match self {
            Truth::Params { params } => {
                let exc = params.excitation();
                let support = exc.support();
                let (x0, x1) = ((lo / support).max(0.0), (hi / support).min(1.0));
                if x0 >= 1.0 || x1 <= 0.0 {
                    return 0.0;
                }
                let mut bound = 0.0;
                if exc.eps() > 0.0 {
                    bound += exc.eps() * mixture_bound(exc.common(), x0, x1);
                }
                if exc.eps() < 1.0 {
                    bound += (1.0 - exc.eps()) * mixture_bound(exc.idio(parent, child), x0, x1);
                }
                bound / support
            }
            Truth::Exponential(e) => e.density(parent, child, lo.max(f64::MIN_POSITIVE)),
        }
    }
}

/// Supremum of a unit-scale Beta mixture over [x0, x1] ⊂ [0, 1], bounded by
/// the sum of component suprema. Shapes must be ≥ 1.
fn mixture_bound(m: &BetaMixture, x0: f64, x1: f64) -> f64 {
    let mut total = 0.0;
    for (&w, c) in m.weights().iter().zip(m.components()) {
        if w == 0.0 {
            continue;
        }
        let (a, b) = (c.a(), c.b());
        let mode = if a + b > 2.0 { (a - 1.0) / (a + b - 2.0) } else { 0.5 };
        let x = mode.clamp(x0, x1);
        let ln = c.ln_norm() + (a - 1.0) * ln_or_zero(x, a) + (b - 1.0) * ln_or_zero(1.0 - x, b);
        total += w * ln.exp();
    }
    total
}

fn ln_or_zero(x: f64, shape: f64) -> f64 {
    if shape == 1.0 {
        0.0
    } else {
        x.ln()
    }
}

/// Scenario: truth, horizon and seed.
#[derive(Debug, Clone, PartialEq, Serialize, Deserialize)]
pub struct SimScenario {
    pub truth: Truth,
    #[serde(rename = "T")]
    pub horizon: f64,
    pub seed: u64,
}

/// A simulated sequence with the true branching and allocations.
#[derive(Debug, Clone)]
pub struct Simulation {
    pub sequence: EventSequence,
    /// For exponential truths the allocation records the branch (component
    /// 0) and lags may exceed any Beta support.
    pub latent: LatentState,
}

struct Pending {
    time: f64,
    dim: usize,
    key: u64,
    parent: Option<usize>,
    alloc: Option<Allocation>,
}

fn poisson(mean: f64, rng: &mut ChaCha8Rng) -> u64 {
    if mean <= 0.0 {
        return 0;
    }
    Poisson::new(mean).expect("finite positive mean").sample(rng) as u64
}

/// Cluster-process simulation with the true branching structure.
pub fn simulate_branching(scenario: &SimScenario) -> Result<Simulation> {
    let truth = &scenario.truth;
    truth.check_stationary()?;
    ensure_positive("T", scenario.horizon)?;
    let horizon = scenario.horizon;
    let k = truth.num_dims();
    let mut events: Vec<Pending> = Vec::new();
    for d in 0..k {
        let mut rng = stream(scenario.seed, &[1, d as u64]);
        let n = poisson(truth.mu()[d] * horizon, &mut rng);
        for m in 0..n {
            events.push(Pending {
                time: rng.random::<f64>() * horizon,
                dim: d,
                key: derive_seed(scenario.seed, &[2, d as u64, m]),
                parent: None,
                alloc: None,
            });
        }
    }
    let mut cursor = 0;
    while cursor < events.len() {
        let (t, d, key) = (events[cursor].time, events[cursor].dim, events[cursor].key);
        let mut rng = stream(key, &[3]);
        let mut m = 0u64;
        for child in 0..k {
            let n = poisson(truth.alpha(d, child), &mut rng);
            for _ in 0..n {
                let (lag, alloc) = truth.sample_lag(d, child, &mut rng);
                m += 1;
                let time = t + lag;
                if time <= horizon {
                    events.push(Pending {
                        time,
                        dim: child,
                        key: derive_seed(key, &[4, m]),
                        parent: Some(cursor),
                        alloc: Some(alloc),
                    });
                }
            }
        }
        cursor += 1;
    }
    let mut order: Vec<usize> = (0..events.len()).collect();
    order.sort_by(|&x, &y| events[x].time.total_cmp(&events[y].time).then(x.cmp(&y)));
    let mut rank = vec![0; events.len()];
    for (r, &e) in order.iter().enumerate() {
        rank[e] = r;
    }
    let mut times = Vec::with_capacity(order.len());
    let mut dims = Vec::with_capacity(order.len());
    let mut parent = Vec::with_capacity(order.len());
    let mut alloc = Vec::with_capacity(order.len());
    for &e in &order {
        let mut time = events[e].time;
        if let Some(&last) = times.last() {
            if time <= last {
                time = f64::next_up(last);
            }
        }
        times.push(time);
        dims.push(events[e].dim);
        parent.push(events[e].parent.map(|p| rank[p]));
        alloc.push(events[e].alloc);
    }
    let horizon = horizon.max(times.last().copied().unwrap_or(0.0));
    let sequence = EventSequence::new(times, dims, horizon, k)?;
    Ok(Simulation { sequence, latent: LatentState { parent, alloc } })
}

/// Ogata thinning on the conditional intensity.
///
/// The dominating rate on each step is the sum of per-event kernel suprema
/// over a look-ahead window of length T0/64 (or the constant background rate
/// when no event is active). Beta shapes below 1 are rejected because their
/// densities are unbounded near the support edges.
pub fn simulate_thinning(scenario: &SimScenario) -> Result<EventSequence> {
    let truth = &scenario.truth;
    truth.check_stationary()?;
    ensure_positive("T", scenario.horizon)?;
    if let Truth::Params { params } = truth {
        let exc = params.excitation();
        let mut mixtures = vec![exc.common()];
        for p in 0..exc.dims() {
            for c in 0..exc.dims() {
                mixtures.push(exc.idio(p, c));
            }
        }
        if mixtures.iter().flat_map(|m| m.components()).any(|c| c.a() < 1.0 || c.b() < 1.0) {
            return Err(Error::InvalidParams("thinning requires Beta shapes >= 1".into()));
        }
    }
    let horizon = scenario.horizon;
    let k = truth.num_dims();
    let reach = truth.reach();
    let step = match truth {
        Truth::Params { params } => params.support() / 64.0,
        Truth::Exponential(_) => 1.0 / 64.0,
    };
    let mu_total: f64 = truth.mu().iter().sum();
    let mut rng = stream(scenario.seed, &[5]);
    let mut times = Vec::new();
    let mut dims = Vec::new();
    let mut active: VecDeque<(f64, usize)> = VecDeque::new();
    let mut t = 0.0;
    let mut rates = vec![0.0; k];
    loop {
        while let Some(&(ti, _)) = active.front() {
            if t - ti >= reach {
                active.pop_front();
            } else {
                break;
            }
        }
        let (bound, window_end) = if active.is_empty() {
            (mu_total, f64::INFINITY)
        } else {
            let end = t + step;
            let mut b = mu_total;
            for &(ti, di) in &active {
                for c in 0..k {
                    let a = truth.alpha(di, c);
                    if a > 0.0 {
                        b += a * truth.density_bound(di, c, t - ti, end - ti);
                    }
                }
            }
            (b, end)
        };
        if bound <= 0.0 {
            if window_end.is_infinite() {
                break;
            }
            t = window_end;
            continue;
        }
        let w = Exp::new(bound).expect("positive bound").sample(&mut rng);
        if t + w > window_end {
            t = window_end;
            if t > horizon {
                break;
            }
            continue;
        }
        t += w;
        if t > horizon {
            break;
        }
        let mut total = 0.0;
        for (c, r) in rates.iter_mut().enumerate() {
            *r = truth.mu()[c];
            for &(ti, di) in &active {
                *r += truth.alpha(di, c) * truth.density(di, c, t - ti);
            }
            total += *r;
        }
        debug_assert!(total <= bound * (1.0 + 1e-9), "intensity {total} exceeds bound {bound}");
        let u: f64 = rng.random::<f64>() * bound;
        if u < total {
            for r in rates.iter_mut() {
                *r /= total;
            }
            let d = sample_categorical(&rates, &mut rng);
            if let Some(&last) = times.last() {
                if t <= last {
                    t = f64::next_up(last);
                }
            }
            times.push(t);
            dims.push(d);
            active.push_back((t, d));
        }
    }
    EventSequence::new(times, dims, horizon, k)
}

#[cfg(test)]
mod tests {
    use super::*;

    fn poisson_truth(mu: Vec<f64>) -> Truth {
        let k = mu.len();
        let m = BetaMixture::single(2.0, 3.0).unwrap();
        let exc = ExcitationModel::shared(0.0, 1.0, m.clone(), m, k).unwrap();
        Truth::Params { params: HawkesParams::new(mu, vec![vec![0.0; k]; k], exc).unwrap() }
    }

    #[test]
    fn branching_is_deterministic_and_consistent() {
        let s = SimScenario { truth: Truth::paper_beta(0.5).unwrap(), horizon: 500.0, seed: 11 };
        let a = simulate_branching(&s).unwrap();
        let b = simulate_branching(&s).unwrap();
        assert_eq!(a.sequence, b.sequence);
        assert_eq!(a.latent, b.latent);
        a.latent.validate(&a.sequence, 1.0).unwrap();
        assert!(a.latent.alloc.iter().flatten().all(|al| al.component == 0));
    }

    #[test]
    fn zero_alpha_gives_poisson_counts() {
        let s = SimScenario { truth: poisson_truth(vec![0.5, 1.5]), horizon: 2000.0, seed: 3 };
        let sim = simulate_branching(&s).unwrap();
        let c = sim.sequence.counts();
        assert!(sim.latent.parent.iter().all(Option::is_none));
        for (n, mean) in c.iter().zip([1000.0, 3000.0]) {
            assert!((*n as f64 - mean).abs() < 4.0 * f64::sqrt(mean), "{n} vs {mean}");
        }
        let thin = simulate_thinning(&s).unwrap().counts();
        for (n, mean) in thin.iter().zip([1000.0, 3000.0]) {
            assert!((*n as f64 - mean).abs() < 4.0 * f64::sqrt(mean), "{n} vs {mean}");
        }
    }

    #[test]
    fn zero_background_gives_empty_sequence() {
        let s = SimScenario { truth: poisson_truth(vec![0.0, 0.0]), horizon: 100.0, seed: 1 };
        assert!(simulate_thinning(&s).unwrap().is_empty());
        assert!(simulate_branching(&s).unwrap().sequence.is_empty());
    }

    #[test]
    fn refuses_explosive_scenarios() {
        let m = BetaMixture::single(1.0, 1.0).unwrap();
        let exc = ExcitationModel::shared(0.0, 1.0, m.clone(), m, 1).unwrap();
        let p = HawkesParams::new(vec![0.1], vec![vec![1.1]], exc).unwrap();
        let s = SimScenario { truth: Truth::Params { params: p }, horizon: 10.0, seed: 0 };
        assert!(matches!(simulate_branching(&s), Err(Error::NonStationary(_))));
        assert!(matches!(simulate_thinning(&s), Err(Error::NonStationary(_))));
    }

    #[test]
    fn exponential_truth_is_normalized_blend() {
        let t = Truth::paper_exponential(0.3).unwrap();
        let h = 1e-3;
        let integral: f64 = (0..60_000).map(|i| t.density(0, 1, (i as f64 + 0.5) * h) * h).sum();
        assert!((integral - 1.0).abs() < 1e-6);
        let s = SimScenario { truth: t, horizon: 300.0, seed: 5 };
        let sim = simulate_branching(&s).unwrap();
        assert_eq!(sim.sequence.len(), sim.latent.len());
    }

    #[test]
    fn density_bound_dominates_density() {
        let truth = Truth::paper_beta(0.4).unwrap();
        for p in 0..2 {
            for c in 0..2 {
                for i in 0..64 {
                    let lo = i as f64 / 64.0;
                    let hi = lo + 1.0 / 64.0;
                    let b = truth.density_bound(p, c, lo, hi);
                    for s in 0..=20 {
                        let x = lo + (hi - lo) * s as f64 / 20.0;
                        assert!(truth.density(p, c, x) <= b * (1.0 + 1e-12));
                    }
                }
            }
        }
    }
}
