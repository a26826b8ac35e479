//! Exact spectral machinery for `H = L^2(0,1)` and `A = -d^2/dx^2` with
//! homogeneous Dirichlet boundary conditions.
//!
//! The eigenpairs are closed form, `A e_k = lambda_k e_k` with
//! `lambda_k = (k pi)^2` and `e_k(x) = sqrt(2) sin(k pi x)`, so every operator
//! used downstream (semigroup, fractional powers, projections) is diagonal in
//! the `(e_k)` basis and exact up to floating-point rounding.

use crate::{Result, SpdeError};

/// Coefficients of an `H`-valued element in the Dirichlet eigenbasis:
/// entry `k` (0-based index `k-1`) is the inner product with `e_k`.
///
/// The universal state representation of the crate. All entries are finite
/// and the dimension is at least 1; both are enforced at construction.
#[derive(Debug, Clone, PartialEq)]
pub struct SpectralVector {
    coeffs: Vec<f64>,
}

impl SpectralVector {
    pub fn new(coeffs: Vec<f64>) -> Result<Self> {
        if coeffs.is_empty() {
            return Err(SpdeError::Domain("spectral vector must have dim >= 1".into()));
        }
        if let Some(bad) = coeffs.iter().find(|c| !c.is_finite()) {
            return Err(SpdeError::Domain(format!("non-finite coefficient {bad}")));
        }
        Ok(Self { coeffs })
    }

    /// Zero element of the given dimension.
    pub fn zero(dim: usize) -> Self {
        assert!(dim >= 1, "dim must be >= 1");
        Self { coeffs: vec![0.0; dim] }
    }

    /// Wraps coefficients without the finiteness check. Used where values are
    /// produced pointwise from caller-supplied maps and validated later.
    pub(crate) fn from_raw(coeffs: Vec<f64>) -> Self {
        debug_assert!(!coeffs.is_empty());
        Self { coeffs }
    }

    /// The basis vector `e_k` (mode `k` is 1-based) embedded in dimension `dim`.
    pub fn basis(dim: usize, k: usize) -> Result<Self> {
        if k == 0 || k > dim {
            return Err(SpdeError::Domain(format!("mode {k} outside 1..={dim}")));
        }
        let mut coeffs = vec![0.0; dim];
        coeffs[k - 1] = 1.0;
        Ok(Self { coeffs })
    }

    pub fn dim(&self) -> usize {
        self.coeffs.len()
    }

    pub fn coeffs(&self) -> &[f64] {
        &self.coeffs
    }

    /// Coefficient of mode `k` (1-based); zero beyond the stored dimension.
    pub fn coeff(&self, k: usize) -> f64 {
        assert!(k >= 1, "mode index is 1-based");
        self.coeffs.get(k - 1).copied().unwrap_or(0.0)
    }

    /// Restriction to the first `n` modes.
    pub fn truncate(&self, n: usize) -> Result<Self> {
        if n == 0 {
            return Err(SpdeError::Domain("truncation dimension must be >= 1".into()));
        }
        let mut coeffs = self.coeffs.clone();
        coeffs.resize(n, 0.0);
        Ok(Self { coeffs })
    }

    pub fn scale(&self, s: f64) -> Self {
        Self { coeffs: self.coeffs.iter().map(|c| c * s).collect() }
    }

    /// Entrywise sum; the shorter vector is zero-padded.
    pub fn add(&self, other: &Self) -> Self {
        let n = self.dim().max(other.dim());
        let mut coeffs = vec![0.0; n];
        for (i, c) in coeffs.iter_mut().enumerate() {
            *c = self.coeffs.get(i).copied().unwrap_or(0.0)
                + other.coeffs.get(i).copied().unwrap_or(0.0);
        }
        Self { coeffs }
    }

    pub fn sub(&self, other: &Self) -> Self {
        self.add(&other.scale(-1.0))
    }

    pub fn norm_h(&self) -> f64 {
        h_inner(self, self).sqrt()
    }
}

/// The Dirichlet eigensystem of `A` on `(0,1)`. Eigenvalues are evaluated on
/// demand from the closed form and never stored approximately.
#[derive(Debug, Clone, Copy, Default)]
pub struct EigenSystem;

impl EigenSystem {
    /// `lambda_k = (k pi)^2` for `k >= 1`.
    pub fn lambda(&self, k: usize) -> Result<f64> {
        eigenvalue(k)
    }

    /// The first `n` eigenvalues, strictly increasing.
    pub fn lambdas(&self, n: usize) -> Vec<f64> {
        (1..=n).map(|k| (k as f64 * std::f64::consts::PI).powi(2)).collect()
    }
}

/// `lambda_k = (k pi)^2`. `k` is 1-based; `k = 0` is a domain error.
pub fn eigenvalue(k: usize) -> Result<f64> {
    if k == 0 {
        return Err(SpdeError::Domain("eigenvalue index k must be >= 1".into()));
    }
    Ok((k as f64 * std::f64::consts::PI).powi(2))
}

/// `e_k(x) = sqrt(2) sin(k pi x)` for `x` in `[0,1]`.
pub fn evaluate_basis(k: usize, x: f64) -> Result<f64> {
    if k == 0 {
        return Err(SpdeError::Domain("basis index k must be >= 1".into()));
    }
    if !(0.0..=1.0).contains(&x) {
        return Err(SpdeError::Domain(format!("x = {x} outside [0, 1]")));
    }
    Ok(std::f64::consts::SQRT_2 * (k as f64 * std::f64::consts::PI * x).sin())
}

/// Applies the analytic contraction semigroup `S(t) = e^{-tA}` mode by mode.
pub fn apply_semigroup(t: f64, v: &SpectralVector) -> Result<SpectralVector> {
    if !(t >= 0.0) {
        return Err(SpdeError::Domain(format!("semigroup time t = {t} must be >= 0")));
    }
    let coeffs = v
        .coeffs()
        .iter()
        .enumerate()
        .map(|(i, c)| {
            let lambda = ((i + 1) as f64 * std::f64::consts::PI).powi(2);
            (-lambda * t).exp() * c
        })
        .collect();
    Ok(SpectralVector { coeffs })
}

/// The fractional Sobolev norm `||v||_s = (sum_k lambda_k^s v_k^2)^{1/2}`
/// induced by `A^{s/2}`; `s = 0` recovers the `H`-norm.
pub fn hs_fractional_norm(s: f64, v: &SpectralVector) -> Result<f64> {
    if !(s >= 0.0) {
        return Err(SpdeError::Domain(format!("fractional order s = {s} must be >= 0")));
    }
    let sum: f64 = v
        .coeffs()
        .iter()
        .enumerate()
        .map(|(i, c)| {
            let lambda = ((i + 1) as f64 * std::f64::consts::PI).powi(2);
            lambda.powf(s) * c * c
        })
        .sum();
    Ok(sum.sqrt())
}

/// Parseval form of the `H` inner product; the shorter vector is zero-padded.
pub fn h_inner(v: &SpectralVector, w: &SpectralVector) -> f64 {
    v.coeffs().iter().zip(w.coeffs().iter()).map(|(a, b)| a * b).sum()
}
