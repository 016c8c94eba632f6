//! Spectral radius of interaction matrices and stationary event rates.

use nalgebra::{DMatrix, DVector};

use crate::error::{Error, Result};
use crate::model::HawkesParams;

/// Largest eigenvalue modulus of a row-major `n × n` matrix.
pub fn spectral_radius(values: &[f64], n: usize) -> Result<f64> {
    if values.len() != n * n {
        return Err(Error::Shape(format!("{} entries do not form a {n}×{n} matrix", values.len())));
    }
    if values.iter().any(|v| !v.is_finite()) {
        return Err(Error::Domain("matrix entries must be finite".into()));
    }
    if n == 0 {
        return Ok(0.0);
    }
    let m = DMatrix::from_row_slice(n, n, values);
    Ok(m.complex_eigenvalues().iter().map(|z| z.norm()).fold(0.0, f64::max))
}

/// Spectral radius of a matrix given as rows; rejects ragged input.
pub fn spectral_radius_rows(rows: &[Vec<f64>]) -> Result<f64> {
    let n = rows.len();
    if rows.iter().any(|r| r.len() != n) {
        return Err(Error::Shape("matrix is not square".into()));
    }
    let flat: Vec<f64> = rows.iter().flatten().copied().collect();
    spectral_radius(&flat, n)
}

/// Stationary mean rates Λ = (I − Aᵀ)⁻¹ μ with A the parent-first α matrix.
pub fn expected_rates(params: &HawkesParams) -> Result<Vec<f64>> {
    let k = params.num_dims();
    let radius = spectral_radius(params.alpha_flat(), k)?;
    if radius >= 1.0 {
        return Err(Error::NonStationary(radius));
    }
    let a = DMatrix::from_row_slice(k, k, params.alpha_flat());
    let system = DMatrix::identity(k, k) - a.transpose();
    let mu = DVector::from_column_slice(params.mu());
    let lambda = system
        .lu()
        .solve(&mu)
        .ok_or(Error::NonStationary(radius))?;
    Ok(lambda.iter().copied().collect())
}

#[cfg(test)]
mod tests {
    use super::*;
    use crate::kernel::{BetaMixture, ExcitationModel};

    #[test]
    fn radius_examples() {
        assert!((spectral_radius(&[1.0, 0.0, 0.0, 1.0], 2).unwrap() - 1.0).abs() < 1e-12);
        assert_eq!(spectral_radius(&[0.0; 4], 2).unwrap(), 0.0);
        let r = spectral_radius(&[0.6, 0.15, 0.3, 0.6], 2).unwrap();
        assert!((r - (0.6 + 0.045f64.sqrt())).abs() < 1e-12);
        assert!(matches!(spectral_radius(&[1.0, 2.0, 3.0], 2), Err(Error::Shape(_))));
        assert!(spectral_radius_rows(&[vec![1.0, 2.0], vec![3.0]]).is_err());
    }

    #[test]
    fn radius_of_rotation_uses_modulus() {
        let r = spectral_radius(&[0.0, -0.5, 0.5, 0.0], 2).unwrap();
        assert!((r - 0.5).abs() < 1e-12);
    }

    fn params(mu: Vec<f64>, alpha: Vec<Vec<f64>>) -> HawkesParams {
        let k = mu.len();
        let m = BetaMixture::single(1.0, 1.0).unwrap();
        let exc = ExcitationModel::shared(0.0, 1.0, m.clone(), m, k).unwrap();
        HawkesParams::new(mu, alpha, exc).unwrap()
    }

    #[test]
    fn expected_rate_examples() {
        let p = params(vec![0.05, 0.1], vec![vec![0.6, 0.15], vec![0.3, 0.6]]);
        let l = expected_rates(&p).unwrap();
        // (1 − 0.6)Λ₁ − 0.3Λ₂ = 0.05, −0.15Λ₁ + (1 − 0.6)Λ₂ = 0.1
        assert!((0.4 * l[0] - 0.3 * l[1] - 0.05).abs() < 1e-12);
        assert!((-0.15 * l[0] + 0.4 * l[1] - 0.1).abs() < 1e-12);
        assert!((l[0] - 0.434783).abs() < 1e-6);
        assert!((l[1] - 0.413043).abs() < 1e-6);

        let p = params(vec![0.3, 0.7], vec![vec![0.0; 2]; 2]);
        assert_eq!(expected_rates(&p).unwrap(), vec![0.3, 0.7]);

        let p = params(vec![0.5], vec![vec![1.2]]);
        assert!(matches!(expected_rates(&p), Err(Error::NonStationary(_))));
    }
}
