//! Observed data, model parameters, priors and the latent branching state.
//!
//! Dimensions are 0-based in memory (`0..K`). File formats use 1-based
//! dimension marks; the conversion happens in [`crate::io`].
//!
//! The interaction matrix is indexed `alpha[parent][child]`: a parent event
//! on dimension ℓ raises the intensity of dimension k by `α_{ℓ,k} φ̃_{ℓ,k}`.

use serde::{Deserialize, Serialize};

use crate::error::{ensure_positive, Error, Result};
use crate::kernel::ExcitationModel;

/// Marked event times on `[0, T]`.
#[derive(Debug, Clone, PartialEq)]
pub struct EventSequence {
    times: Vec<f64>,
    dims: Vec<usize>,
    horizon: f64,
    k: usize,
}

impl EventSequence {
    /// Times must be finite, nonnegative and strictly increasing; dimension
    /// marks are 0-based and below `k`.
    pub fn new(times: Vec<f64>, dims: Vec<usize>, horizon: f64, k: usize) -> Result<Self> {
        if k == 0 {
            return Err(Error::InvalidSequence("K must be at least 1".into()));
        }
        if times.len() != dims.len() {
            return Err(Error::InvalidSequence(format!(
                "{} times but {} dimension marks",
                times.len(),
                dims.len()
            )));
        }
        if !horizon.is_finite() || horizon < 0.0 {
            return Err(Error::InvalidSequence(format!("horizon must be finite and >= 0, got {horizon}")));
        }
        let mut prev = f64::NEG_INFINITY;
        for (i, (&t, &d)) in times.iter().zip(&dims).enumerate() {
            if !t.is_finite() || t < 0.0 {
                return Err(Error::InvalidSequence(format!("event {i}: time {t} is not a finite nonnegative number")));
            }
            if t <= prev {
                return Err(Error::InvalidSequence(format!(
                    "event {i}: time {t} does not exceed previous time {prev}"
                )));
            }
            if d >= k {
                return Err(Error::InvalidSequence(format!("event {i}: dimension {d} outside 0..{k}")));
            }
            prev = t;
        }
        if prev > horizon {
            return Err(Error::InvalidSequence(format!("last event at {prev} exceeds horizon {horizon}")));
        }
        Ok(Self { times, dims, horizon, k })
    }

    pub fn empty(horizon: f64, k: usize) -> Result<Self> {
        Self::new(Vec::new(), Vec::new(), horizon, k)
    }

    pub fn times(&self) -> &[f64] {
        &self.times
    }

    pub fn dims(&self) -> &[usize] {
        &self.dims
    }

    pub fn horizon(&self) -> f64 {
        self.horizon
    }

    pub fn num_dims(&self) -> usize {
        self.k
    }

    pub fn len(&self) -> usize {
        self.times.len()
    }

    pub fn is_empty(&self) -> bool {
        self.times.is_empty()
    }

    /// Per-dimension event counts n_k.
    pub fn counts(&self) -> Vec<usize> {
        let mut counts = vec![0; self.k];
        for &d in &self.dims {
            counts[d] += 1;
        }
        counts
    }
}

/// Background rates, interaction matrix and excitation kernels.
#[derive(Debug, Clone, PartialEq, Serialize, Deserialize)]
#[serde(try_from = "RawParams", into = "RawParams")]
pub struct HawkesParams {
    mu: Vec<f64>,
    alpha: Vec<f64>,
    excitation: ExcitationModel,
}

#[derive(Serialize, Deserialize)]
struct RawParams {
    mu: Vec<f64>,
    alpha: Vec<Vec<f64>>,
    excitation: ExcitationModel,
}

impl HawkesParams {
    /// `alpha[parent][child]`.
    pub fn new(mu: Vec<f64>, alpha: Vec<Vec<f64>>, excitation: ExcitationModel) -> Result<Self> {
        let k = mu.len();
        if alpha.len() != k || alpha.iter().any(|row| row.len() != k) {
            return Err(Error::Shape(format!("alpha must be {k}×{k} to match mu")));
        }
        Self::from_flat(mu, alpha.into_iter().flatten().collect(), excitation)
    }

    /// Row-major flat `alpha` (row = parent).
    pub fn from_flat(mu: Vec<f64>, alpha: Vec<f64>, excitation: ExcitationModel) -> Result<Self> {
        let k = mu.len();
        if k == 0 {
            return Err(Error::InvalidParams("mu must have at least one entry".into()));
        }
        if alpha.len() != k * k {
            return Err(Error::Shape(format!("alpha has {} entries, expected {}", alpha.len(), k * k)));
        }
        if excitation.dims() != k {
            return Err(Error::Shape(format!(
                "excitation has {} dimensions but mu has {k}",
                excitation.dims()
            )));
        }
        if mu.iter().chain(&alpha).any(|&v| !v.is_finite() || v < 0.0) {
            return Err(Error::InvalidParams("mu and alpha entries must be finite and >= 0".into()));
        }
        Ok(Self { mu, alpha, excitation })
    }

    pub fn num_dims(&self) -> usize {
        self.mu.len()
    }

    pub fn mu(&self) -> &[f64] {
        &self.mu
    }

    /// Row-major flat interaction matrix.
    pub fn alpha_flat(&self) -> &[f64] {
        &self.alpha
    }

    pub fn alpha(&self, parent: usize, child: usize) -> f64 {
        self.alpha[parent * self.mu.len() + child]
    }

    pub fn alpha_rows(&self) -> Vec<Vec<f64>> {
        self.alpha.chunks(self.mu.len()).map(<[f64]>::to_vec).collect()
    }

    pub fn excitation(&self) -> &ExcitationModel {
        &self.excitation
    }

    pub fn support(&self) -> f64 {
        self.excitation.support()
    }
}

impl TryFrom<RawParams> for HawkesParams {
    type Error = Error;
    fn try_from(raw: RawParams) -> Result<Self> {
        HawkesParams::new(raw.mu, raw.alpha, raw.excitation)
    }
}

impl From<HawkesParams> for RawParams {
    fn from(p: HawkesParams) -> Self {
        let alpha = p.alpha_rows();
        RawParams { mu: p.mu, alpha, excitation: p.excitation }
    }
}

/// Gamma(shape, rate) parameters.
#[derive(Debug, Clone, Copy, PartialEq, Serialize, Deserialize)]
pub struct GammaParams {
    pub shape: f64,
    pub rate: f64,
}

impl GammaParams {
    pub fn new(shape: f64, rate: f64) -> Self {
        Self { shape, rate }
    }

    pub fn mean(&self) -> f64 {
        self.shape / self.rate
    }
}

/// Gamma(shape, rate) priors on Beta shapes: a ~ Gamma(c_a, d_a), b ~ Gamma(c_b, d_b).
#[derive(Debug, Clone, Copy, PartialEq, Serialize, Deserialize)]
pub struct ShapePrior {
    pub c_a: f64,
    pub d_a: f64,
    pub c_b: f64,
    pub d_b: f64,
}

impl ShapePrior {
    pub fn validate(&self) -> Result<()> {
        ensure_positive("c_a", self.c_a)?;
        ensure_positive("d_a", self.d_a)?;
        ensure_positive("c_b", self.c_b)?;
        ensure_positive("d_b", self.d_b)
    }
}

/// Prior hyperparameters. Rates μ ~ Gamma(e, f), α ~ Gamma(g, h), mixture
/// weights ~ Dirichlet(γ/H, …, γ/H), ε ~ Beta(1, 1).
#[derive(Debug, Clone, Copy, PartialEq, Serialize, Deserialize)]
#[serde(default)]
pub struct Hyperparams {
    pub e: f64,
    pub f: f64,
    pub g: f64,
    pub h: f64,
    pub common: ShapePrior,
    pub idio: ShapePrior,
    pub gamma_dp: f64,
}

impl Default for Hyperparams {
    fn default() -> Self {
        Self {
            e: 1.0,
            f: 1.0,
            g: 1.0,
            h: 1.0,
            common: ShapePrior { c_a: 0.5, d_a: 1.0, c_b: 2.0, d_b: 1.0 },
            idio: ShapePrior { c_a: 1.0, d_a: 1.0, c_b: 1.0, d_b: 1.0 },
            gamma_dp: 1.0,
        }
    }
}

impl Hyperparams {
    pub fn validate(&self) -> Result<()> {
        ensure_positive("e", self.e)?;
        ensure_positive("f", self.f)?;
        ensure_positive("g", self.g)?;
        ensure_positive("h", self.h)?;
        ensure_positive("gamma_dp", self.gamma_dp)?;
        self.common.validate()?;
        self.idio.validate()
    }

    pub fn shape_prior(&self, source: Source) -> &ShapePrior {
        match source {
            Source::Common => &self.common,
            Source::Idiosyncratic => &self.idio,
        }
    }
}

/// Treatment of the compensator term Σ α Φ̃(T − t_i).
#[derive(Debug, Clone, Copy, PartialEq, Eq, Serialize, Deserialize, Default)]
#[serde(rename_all = "lowercase")]
pub enum Compensator {
    /// Uses the kernel CDF at the remaining horizon.
    Exact,
    /// Replaces every Φ̃(T − t_i) by 1.
    #[default]
    Approx,
}

/// Constraint on the common/idiosyncratic blend weight ε.
#[derive(Debug, Clone, Copy, PartialEq, Eq, Serialize, Deserialize, Default)]
#[serde(rename_all = "UPPERCASE")]
pub enum Variant {
    /// ε is learned.
    #[default]
    Random,
    /// ε fixed at 0.
    Idio,
    /// ε fixed at 1.
    Common,
}

impl Variant {
    pub fn fixed_eps(self) -> Option<f64> {
        match self {
            Variant::Random => None,
            Variant::Idio => Some(0.0),
            Variant::Common => Some(1.0),
        }
    }

    /// Sources an offspring pair may be allocated to.
    pub fn allows(self, source: Source) -> bool {
        match self {
            Variant::Random => true,
            Variant::Idio => source == Source::Idiosyncratic,
            Variant::Common => source == Source::Common,
        }
    }

    pub fn as_str(self) -> &'static str {
        match self {
            Variant::Random => "RANDOM",
            Variant::Idio => "IDIO",
            Variant::Common => "COMMON",
        }
    }
}

impl std::fmt::Display for Variant {
    fn fmt(&self, f: &mut std::fmt::Formatter<'_>) -> std::fmt::Result {
        f.write_str(self.as_str())
    }
}

impl std::str::FromStr for Variant {
    type Err = Error;
    fn from_str(s: &str) -> Result<Self> {
        match s.to_ascii_uppercase().as_str() {
            "RANDOM" => Ok(Variant::Random),
            "IDIO" => Ok(Variant::Idio),
            "COMMON" => Ok(Variant::Common),
            other => Err(Error::Config(format!("unknown variant {other:?}"))),
        }
    }
}

/// Which mixture an offspring pair is drawn from (W). W = 1 is idiosyncratic.
#[derive(Debug, Clone, Copy, PartialEq, Eq, Hash, Serialize, Deserialize)]
pub enum Source {
    Common,
    Idiosyncratic,
}

impl Source {
    /// The W indicator value.
    pub fn w(self) -> u8 {
        match self {
            Source::Common => 0,
            Source::Idiosyncratic => 1,
        }
    }
}

/// Allocation (W, Z) of an offspring pair.
#[derive(Debug, Clone, Copy, PartialEq, Eq, Hash)]
pub struct Allocation {
    pub source: Source,
    pub component: usize,
}

/// Branching structure B and allocations. `parent[j] = None` marks an
/// immigrant; `alloc[j]` is set exactly when `parent[j]` is.
#[derive(Debug, Clone, PartialEq)]
pub struct LatentState {
    pub parent: Vec<Option<usize>>,
    pub alloc: Vec<Option<Allocation>>,
}

impl LatentState {
    pub fn all_immigrants(n: usize) -> Self {
        Self { parent: vec![None; n], alloc: vec![None; n] }
    }

    pub fn len(&self) -> usize {
        self.parent.len()
    }

    pub fn is_empty(&self) -> bool {
        self.parent.is_empty()
    }

    /// Checks lengths, parent ordering and lag support against a sequence.
    pub fn validate(&self, seq: &EventSequence, support: f64) -> Result<()> {
        if self.parent.len() != seq.len() || self.alloc.len() != seq.len() {
            return Err(Error::Contract(format!(
                "latent state covers {} events, sequence has {}",
                self.parent.len(),
                seq.len()
            )));
        }
        let t = seq.times();
        for (j, (&p, a)) in self.parent.iter().zip(&self.alloc).enumerate() {
            match p {
                None => {
                    if a.is_some() {
                        return Err(Error::Contract(format!("immigrant {j} carries an allocation")));
                    }
                }
                Some(i) => {
                    if i >= j {
                        return Err(Error::Contract(format!("event {j} has parent {i} that is not earlier")));
                    }
                    let lag = t[j] - t[i];
                    if !(lag > 0.0 && lag < support) {
                        return Err(Error::Contract(format!("event {j}: parent lag {lag} outside (0, {support})")));
                    }
                    if a.is_none() {
                        return Err(Error::Contract(format!("offspring {j} has no allocation")));
                    }
                }
            }
        }
        Ok(())
    }

    /// Immigrant counts |I_ℓ| per dimension.
    pub fn immigrant_counts(&self, seq: &EventSequence) -> Vec<usize> {
        let mut c = vec![0; seq.num_dims()];
        for (j, p) in self.parent.iter().enumerate() {
            if p.is_none() {
                c[seq.dims()[j]] += 1;
            }
        }
        c
    }

    /// Offspring counts |O_{ℓ,k}|, row-major parent-first.
    pub fn offspring_counts(&self, seq: &EventSequence) -> Vec<usize> {
        let k = seq.num_dims();
        let d = seq.dims();
        let mut c = vec![0; k * k];
        for (j, p) in self.parent.iter().enumerate() {
            if let Some(i) = *p {
                c[d[i] * k + d[j]] += 1;
            }
        }
        c
    }
}

#[cfg(test)]
mod tests {
    use super::*;
    use crate::kernel::BetaMixture;

    #[test]
    fn sequence_rejects_ties_and_bad_marks() {
        assert!(EventSequence::new(vec![0.1, 0.1], vec![0, 0], 1.0, 1).is_err());
        assert!(EventSequence::new(vec![0.1, 0.2], vec![0, 2], 1.0, 2).is_err());
        assert!(EventSequence::new(vec![0.1, 1.2], vec![0, 0], 1.0, 1).is_err());
        assert!(EventSequence::new(vec![0.1], vec![0], 1.0, 0).is_err());
        let s = EventSequence::new(vec![0.1, 0.4, 0.9], vec![0, 1, 1], 1.0, 2).unwrap();
        assert_eq!(s.counts(), vec![1, 2]);
    }

    #[test]
    fn params_json_roundtrip_keeps_parent_rows() {
        let exc = ExcitationModel::shared(
            0.5,
            1.0,
            BetaMixture::single(1.0, 4.0).unwrap(),
            BetaMixture::single(2.0, 6.0).unwrap(),
            2,
        )
        .unwrap();
        let p = HawkesParams::new(vec![0.05, 0.1], vec![vec![0.6, 0.15], vec![0.3, 0.6]], exc).unwrap();
        assert_eq!(p.alpha(0, 1), 0.15);
        assert_eq!(p.alpha(1, 0), 0.3);
        let json = serde_json::to_string(&p).unwrap();
        let v: serde_json::Value = serde_json::from_str(&json).unwrap();
        assert_eq!(v["alpha"][1][0], 0.3);
        let back: HawkesParams = serde_json::from_str(&json).unwrap();
        assert_eq!(back, p);
    }

    #[test]
    fn params_reject_negative_entries() {
        let exc = ExcitationModel::shared(
            0.0,
            1.0,
            BetaMixture::single(1.0, 1.0).unwrap(),
            BetaMixture::single(1.0, 1.0).unwrap(),
            1,
        )
        .unwrap();
        assert!(HawkesParams::new(vec![-0.1], vec![vec![0.5]], exc.clone()).is_err());
        assert!(HawkesParams::new(vec![0.1, 0.2], vec![vec![0.5]], exc).is_err());
    }

    #[test]
    fn latent_validation() {
        let s = EventSequence::new(vec![0.1, 0.5, 2.0], vec![0, 0, 1], 3.0, 2).unwrap();
        let alloc = Some(Allocation { source: Source::Common, component: 0 });
        let ok = LatentState { parent: vec![None, Some(0), None], alloc: vec![None, alloc, None] };
        ok.validate(&s, 1.0).unwrap();
        assert_eq!(ok.immigrant_counts(&s), vec![1, 1]);
        assert_eq!(ok.offspring_counts(&s), vec![1, 0, 0, 0]);
        let far = LatentState { parent: vec![None, None, Some(0)], alloc: vec![None, None, alloc] };
        assert!(matches!(far.validate(&s, 1.0), Err(Error::Contract(_))));
        let missing = LatentState { parent: vec![None, Some(0), None], alloc: vec![None; 3] };
        assert!(missing.validate(&s, 1.0).is_err());
    }

    #[test]
    fn hyperparams_defaults_are_valid() {
        Hyperparams::default().validate().unwrap();
        let h: Hyperparams = serde_json::from_str(r#"{"gamma_dp": 2.0}"#).unwrap();
        assert_eq!(h.gamma_dp, 2.0);
        assert_eq!(h.common.c_b, 2.0);
    }
}
