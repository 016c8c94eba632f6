//! Scaled Beta kernels on (0, T0), truncated Beta mixtures, and the
//! common/idiosyncratic excitation blend.
//!
//! A normalized excitation for the pair (parent ℓ, child k) is
//!
//! ```text
//! φ̃_{ℓ,k}(t) = ε Σ_h p⁰_h f(t | a⁰_h, b⁰_h, T0) + (1 − ε) Σ_h p^{ℓ,k}_h f(t | a^{ℓ,k}_h, b^{ℓ,k}_h, T0)
//! ```
//!
//! with `f` the Beta(a, b) density rescaled to the support (0, T0).
//! Densities are assembled in log space from `ln Γ`.

use serde::{Deserialize, Serialize};

use crate::error::{ensure_finite, ensure_positive, Error, Result};
use crate::special::{beta_reg, ln_beta_norm};

/// Density of the Beta(a, b) law scaled to (0, support). Zero outside the
/// open interval, including at the endpoints.
pub fn beta_pdf(t: f64, a: f64, b: f64, support: f64) -> Result<f64> {
    Ok(beta_ln_pdf(t, a, b, support)?.exp())
}

/// Log of [`beta_pdf`]; −∞ outside (0, support).
pub fn beta_ln_pdf(t: f64, a: f64, b: f64, support: f64) -> Result<f64> {
    check_kernel_args(t, a, b, support)?;
    if t <= 0.0 || t >= support {
        return Ok(f64::NEG_INFINITY);
    }
    let x = t / support;
    Ok(ln_beta_norm(a, b) - support.ln() + (a - 1.0) * x.ln() + (b - 1.0) * (-x).ln_1p())
}

/// Distribution function of the scaled Beta law, clamped to [0, 1].
pub fn beta_cdf(t: f64, a: f64, b: f64, support: f64) -> Result<f64> {
    check_kernel_args(t, a, b, support)?;
    if t <= 0.0 {
        return Ok(0.0);
    }
    if t >= support {
        return Ok(1.0);
    }
    Ok(beta_reg(a, b, t / support).clamp(0.0, 1.0))
}

fn check_kernel_args(t: f64, a: f64, b: f64, support: f64) -> Result<()> {
    ensure_finite("t", t)?;
    ensure_positive("a", a)?;
    ensure_positive("b", b)?;
    ensure_positive("support", support)
}

/// Precomputed lag features used by every kernel evaluation at that lag.
#[derive(Debug, Clone, Copy, PartialEq)]
pub struct LagFeatures {
    /// ln(t / T0)
    pub ln_x: f64,
    /// ln(1 − t / T0)
    pub ln_1mx: f64,
}

impl LagFeatures {
    /// Returns `None` when the lag is outside (0, support).
    pub fn new(lag: f64, support: f64) -> Option<Self> {
        if !(lag > 0.0 && lag < support) {
            return None;
        }
        let x = lag / support;
        Some(Self { ln_x: x.ln(), ln_1mx: (-x).ln_1p() })
    }
}

/// One Beta component with its cached log normalizer.
#[derive(Debug, Clone, Copy, PartialEq)]
pub struct BetaComponent {
    a: f64,
    b: f64,
    ln_norm: f64,
}

impl BetaComponent {
    pub fn new(a: f64, b: f64) -> Result<Self> {
        ensure_positive("a", a)?;
        ensure_positive("b", b)?;
        Ok(Self { a, b, ln_norm: ln_beta_norm(a, b) })
    }

    pub fn a(&self) -> f64 {
        self.a
    }

    pub fn b(&self) -> f64 {
        self.b
    }

    /// ln Γ(a+b) − ln Γ(a) − ln Γ(b).
    pub fn ln_norm(&self) -> f64 {
        self.ln_norm
    }

    /// Log density on the unit interval (without the −ln T0 scale term).
    #[inline]
    pub fn ln_unit_pdf(&self, lag: &LagFeatures) -> f64 {
        self.ln_norm + (self.a - 1.0) * lag.ln_x + (self.b - 1.0) * lag.ln_1mx
    }
}

#[derive(Serialize, Deserialize)]
struct RawMixture {
    p: Vec<f64>,
    a: Vec<f64>,
    b: Vec<f64>,
}

/// Truncated Beta mixture: weights on the simplex and positive shapes.
#[derive(Debug, Clone, PartialEq, Serialize, Deserialize)]
#[serde(try_from = "RawMixture", into = "RawMixture")]
pub struct BetaMixture {
    weights: Vec<f64>,
    components: Vec<BetaComponent>,
}

const SIMPLEX_TOL: f64 = 1e-12;

impl BetaMixture {
    pub fn new(weights: Vec<f64>, a: Vec<f64>, b: Vec<f64>) -> Result<Self> {
        if weights.is_empty() {
            return Err(Error::InvalidParams("mixture needs at least one component".into()));
        }
        if weights.len() != a.len() || weights.len() != b.len() {
            return Err(Error::InvalidParams(format!(
                "mixture arrays differ in length: p={}, a={}, b={}",
                weights.len(),
                a.len(),
                b.len()
            )));
        }
        if weights.iter().any(|&p| !(p >= 0.0) || !p.is_finite()) {
            return Err(Error::InvalidParams("mixture weights must be finite and >= 0".into()));
        }
        let total: f64 = weights.iter().sum();
        if (total - 1.0).abs() > SIMPLEX_TOL * weights.len().max(1) as f64 {
            return Err(Error::InvalidParams(format!("mixture weights sum to {total}, not 1")));
        }
        let components = a
            .iter()
            .zip(&b)
            .map(|(&a, &b)| BetaComponent::new(a, b))
            .collect::<Result<Vec<_>>>()?;
        Ok(Self { weights, components })
    }

    /// Single-component mixture.
    pub fn single(a: f64, b: f64) -> Result<Self> {
        Self::new(vec![1.0], vec![a], vec![b])
    }

    /// Normalizes nonnegative weights before validation.
    pub fn from_unnormalized(weights: Vec<f64>, a: Vec<f64>, b: Vec<f64>) -> Result<Self> {
        let total: f64 = weights.iter().sum();
        if !(total > 0.0) || !total.is_finite() {
            return Err(Error::InvalidParams(format!("cannot normalize weights with total {total}")));
        }
        Self::new(weights.iter().map(|w| w / total).collect(), a, b)
    }

    pub fn len(&self) -> usize {
        self.weights.len()
    }

    pub fn is_empty(&self) -> bool {
        self.weights.is_empty()
    }

    pub fn weights(&self) -> &[f64] {
        &self.weights
    }

    pub fn components(&self) -> &[BetaComponent] {
        &self.components
    }

    pub fn shapes_a(&self) -> Vec<f64> {
        self.components.iter().map(|c| c.a).collect()
    }

    pub fn shapes_b(&self) -> Vec<f64> {
        self.components.iter().map(|c| c.b).collect()
    }

    /// Mixture density at lag `t` on (0, support).
    pub fn pdf(&self, t: f64, support: f64) -> f64 {
        match LagFeatures::new(t, support) {
            Some(lag) => self.unit_pdf(&lag) / support,
            None => 0.0,
        }
    }

    /// Mixture density on the unit scale for a precomputed lag.
    #[inline]
    pub fn unit_pdf(&self, lag: &LagFeatures) -> f64 {
        self.weights
            .iter()
            .zip(&self.components)
            .filter(|(&w, _)| w > 0.0)
            .map(|(&w, c)| w * c.ln_unit_pdf(lag).exp())
            .sum()
    }

    pub fn cdf(&self, t: f64, support: f64) -> f64 {
        if t <= 0.0 {
            return 0.0;
        }
        if t >= support {
            return 1.0;
        }
        let x = t / support;
        let v: f64 = self
            .weights
            .iter()
            .zip(&self.components)
            .map(|(&w, c)| w * beta_reg(c.a, c.b, x))
            .sum();
        v.clamp(0.0, 1.0)
    }
}

impl TryFrom<RawMixture> for BetaMixture {
    type Error = Error;
    fn try_from(raw: RawMixture) -> Result<Self> {
        BetaMixture::new(raw.p, raw.a, raw.b)
    }
}

impl From<BetaMixture> for RawMixture {
    fn from(m: BetaMixture) -> Self {
        let a = m.shapes_a();
        let b = m.shapes_b();
        RawMixture { p: m.weights, a, b }
    }
}

#[derive(Serialize, Deserialize)]
struct RawExcitation {
    eps: f64,
    #[serde(rename = "T0")]
    support: f64,
    common: BetaMixture,
    idio: Vec<Vec<BetaMixture>>,
}

/// ε-blend of a common Beta mixture and K×K idiosyncratic mixtures, indexed
/// parent-first.
#[derive(Debug, Clone, PartialEq, Serialize, Deserialize)]
#[serde(try_from = "RawExcitation", into = "RawExcitation")]
pub struct ExcitationModel {
    eps: f64,
    support: f64,
    dims: usize,
    common: BetaMixture,
    idio: Vec<BetaMixture>,
}

impl ExcitationModel {
    /// `idio[parent][child]` is the idiosyncratic mixture of that pair.
    pub fn new(eps: f64, support: f64, common: BetaMixture, idio: Vec<Vec<BetaMixture>>) -> Result<Self> {
        if !(0.0..=1.0).contains(&eps) {
            return Err(Error::InvalidParams(format!("eps must lie in [0, 1], got {eps}")));
        }
        ensure_positive("T0", support)?;
        let dims = idio.len();
        if dims == 0 {
            return Err(Error::InvalidParams("excitation needs at least one dimension".into()));
        }
        if idio.iter().any(|row| row.len() != dims) {
            return Err(Error::Shape("idiosyncratic mixtures must form a K×K array".into()));
        }
        Ok(Self { eps, support, dims, common, idio: idio.into_iter().flatten().collect() })
    }

    /// Same mixture for every pair; convenient for single-kernel truths.
    pub fn shared(eps: f64, support: f64, common: BetaMixture, idio: BetaMixture, dims: usize) -> Result<Self> {
        Self::new(eps, support, common, vec![vec![idio; dims]; dims])
    }

    pub fn eps(&self) -> f64 {
        self.eps
    }

    pub fn support(&self) -> f64 {
        self.support
    }

    pub fn dims(&self) -> usize {
        self.dims
    }

    pub fn common(&self) -> &BetaMixture {
        &self.common
    }

    pub fn idio(&self, parent: usize, child: usize) -> &BetaMixture {
        &self.idio[parent * self.dims + child]
    }

    fn check(&self, index: usize) -> Result<()> {
        if index < self.dims {
            Ok(())
        } else {
            Err(Error::Index { index, dims: self.dims })
        }
    }

    /// φ̃_{parent,child}(t).
    pub fn eval(&self, parent: usize, child: usize, t: f64) -> Result<f64> {
        self.check(parent)?;
        self.check(child)?;
        ensure_finite("t", t)?;
        Ok(match LagFeatures::new(t, self.support) {
            Some(lag) => self.unit_density(parent, child, &lag) / self.support,
            None => 0.0,
        })
    }

    /// Blend density on the unit scale; indices are not checked.
    #[inline]
    pub fn unit_density(&self, parent: usize, child: usize, lag: &LagFeatures) -> f64 {
        let mut v = 0.0;
        if self.eps > 0.0 {
            v += self.eps * self.common.unit_pdf(lag);
        }
        if self.eps < 1.0 {
            v += (1.0 - self.eps) * self.idio(parent, child).unit_pdf(lag);
        }
        v
    }

    /// Φ̃_{parent,child}(t) = ∫₀ᵗ φ̃.
    pub fn cdf(&self, parent: usize, child: usize, t: f64) -> Result<f64> {
        self.check(parent)?;
        self.check(child)?;
        ensure_finite("t", t)?;
        let mut v = 0.0;
        if self.eps > 0.0 {
            v += self.eps * self.common.cdf(t, self.support);
        }
        if self.eps < 1.0 {
            v += (1.0 - self.eps) * self.idio(parent, child).cdf(t, self.support);
        }
        Ok(v.clamp(0.0, 1.0))
    }
}

impl TryFrom<RawExcitation> for ExcitationModel {
    type Error = Error;
    fn try_from(raw: RawExcitation) -> Result<Self> {
        ExcitationModel::new(raw.eps, raw.support, raw.common, raw.idio)
    }
}

impl From<ExcitationModel> for RawExcitation {
    fn from(m: ExcitationModel) -> Self {
        let dims = m.dims;
        let mut rows = Vec::with_capacity(dims);
        let mut it = m.idio.into_iter();
        for _ in 0..dims {
            rows.push(it.by_ref().take(dims).collect());
        }
        RawExcitation { eps: m.eps, support: m.support, common: m.common, idio: rows }
    }
}
