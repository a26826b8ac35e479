//! Galerkin subspaces `V_h`: spectral truncation and P1 finite elements.
//!
//! Both families come with the discrete operator `A_h` (defined through the
//! `H^1_0` bilinear form), the discrete semigroup `S_h(t) = e^{-t A_h}`, the
//! orthogonal projections `P_h` (in `H`) and `R_h` (Ritz, in `H^1_0`), and the
//! deterministic error operator `F_h(t) = S_h(t) P_h - S(t)`.
//!
//! Spectral truncation keeps everything diagonal and exact and is the primary
//! vehicle for the rate experiments; the P1 family exercises the variational
//! definition of `A_h` and the smoothing estimate `||F_h(t)|| <= C h^2 / t`.
//! The mesh parameter is `h = 1/(N pi) = lambda_N^{-1/2}` for truncation at
//! `N` modes and `h = 1/(M+1)` for a mesh with `M` interior nodes.
//!
//! Load vectors of the sine basis against the hat functions are evaluated
//! from closed-form antiderivatives, not quadrature, so that no quadrature
//! error enters the convergence-rate experiments.

use crate::spectral::SpectralVector;
use crate::{Result, SpdeError};
use nalgebra::DMatrix;
use std::f64::consts::PI;

/// Relative residual allowed for each generalized eigenpair.
const EIGEN_RESIDUAL_TOL: f64 = 1e-10;
/// Pairwise mass-orthonormality tolerance.
const ORTHONORMALITY_TOL: f64 = 1e-10;
/// Relative accuracy of the power iteration in `operator_norm_f_h`.
const POWER_ITERATION_TOL: f64 = 1e-7;
const POWER_ITERATION_MAX: usize = 100_000;

/// A Galerkin family member: spectral truncation after `N` modes or a uniform
/// P1 mesh with `M` interior nodes.
#[derive(Debug, Clone, Copy, PartialEq, Eq)]
pub enum Discretization {
    SpectralTruncation { modes: usize },
    FemMesh { interior_nodes: usize },
}

impl Discretization {
    /// Mesh parameter: `lambda_N^{-1/2} = 1/(N pi)` resp. `1/(M+1)`.
    pub fn mesh_width(&self) -> f64 {
        match self {
            Self::SpectralTruncation { modes } => 1.0 / (*modes as f64 * PI),
            Self::FemMesh { interior_nodes } => 1.0 / (*interior_nodes as f64 + 1.0),
        }
    }

    /// Dimension of `V_h`.
    pub fn resolved_dim(&self) -> usize {
        match self {
            Self::SpectralTruncation { modes } => *modes,
            Self::FemMesh { interior_nodes } => *interior_nodes,
        }
    }

    pub fn validate(&self) -> Result<()> {
        if self.resolved_dim() == 0 {
            return Err(SpdeError::Domain("discretization dimension must be >= 1".into()));
        }
        Ok(())
    }
}

impl std::fmt::Display for Discretization {
    fn fmt(&self, f: &mut std::fmt::Formatter<'_>) -> std::fmt::Result {
        match self {
            Self::SpectralTruncation { modes } => write!(f, "spectral:{modes}"),
            Self::FemMesh { interior_nodes } => write!(f, "fem:{interior_nodes}"),
        }
    }
}

/// Symmetric tridiagonal matrix, stored as main diagonal and subdiagonal.
#[derive(Debug, Clone, PartialEq)]
pub struct SymTridiag {
    pub diag: Vec<f64>,
    pub off: Vec<f64>,
}

impl SymTridiag {
    pub fn dim(&self) -> usize {
        self.diag.len()
    }

    pub fn matvec(&self, x: &[f64]) -> Vec<f64> {
        let n = self.dim();
        let mut y = vec![0.0; n];
        for i in 0..n {
            y[i] = self.diag[i] * x[i];
            if i > 0 {
                y[i] += self.off[i - 1] * x[i - 1];
            }
            if i + 1 < n {
                y[i] += self.off[i] * x[i + 1];
            }
        }
        y
    }

    pub fn quadratic_form(&self, x: &[f64]) -> f64 {
        x.iter().zip(self.matvec(x)).map(|(a, b)| a * b).sum()
    }

    /// Solves `self * x = b` by the Thomas sweep. Valid for the SPD matrices
    /// assembled here; no pivoting.
    pub fn solve(&self, b: &[f64]) -> Result<Vec<f64>> {
        let n = self.dim();
        assert_eq!(b.len(), n);
        let mut c = vec![0.0; n.saturating_sub(1)];
        let mut d = vec![0.0; n];
        let mut denom = self.diag[0];
        if denom == 0.0 {
            return Err(SpdeError::Computation("singular tridiagonal system".into()));
        }
        if n > 1 {
            c[0] = self.off[0] / denom;
        }
        d[0] = b[0] / denom;
        for i in 1..n {
            denom = self.diag[i] - self.off[i - 1] * c[i - 1];
            if denom == 0.0 {
                return Err(SpdeError::Computation("singular tridiagonal system".into()));
            }
            if i < n - 1 {
                c[i] = self.off[i] / denom;
            }
            d[i] = (b[i] - self.off[i - 1] * d[i - 1]) / denom;
        }
        let mut x = d;
        for i in (0..n - 1).rev() {
            let next = x[i + 1];
            x[i] -= c[i] * next;
        }
        Ok(x)
    }

    fn to_dense(&self) -> DMatrix<f64> {
        let n = self.dim();
        DMatrix::from_fn(n, n, |i, j| {
            if i == j {
                self.diag[i]
            } else if i.abs_diff(j) == 1 {
                self.off[i.min(j)]
            } else {
                0.0
            }
        })
    }
}

/// Stiffness and mass matrices of the P1 hat basis on the uniform mesh.
#[derive(Debug, Clone, PartialEq)]
pub struct FemOperator {
    pub interior_nodes: usize,
    pub mesh_width: f64,
    pub stiffness: SymTridiag,
    pub mass: SymTridiag,
}

/// Exact P1 matrices on the uniform mesh with `M` interior nodes:
/// stiffness rows `(1/h) [-1, 2, -1]`, mass rows `(h/6) [1, 4, 1]`.
pub fn assemble_p1(interior_nodes: usize) -> Result<FemOperator> {
    if interior_nodes == 0 {
        return Err(SpdeError::Domain("mesh needs at least one interior node".into()));
    }
    let m = interior_nodes;
    let h = 1.0 / (m as f64 + 1.0);
    let stiffness = SymTridiag {
        diag: vec![2.0 / h; m],
        off: vec![-1.0 / h; m.saturating_sub(1)],
    };
    let mass = SymTridiag {
        diag: vec![4.0 * h / 6.0; m],
        off: vec![h / 6.0; m.saturating_sub(1)],
    };
    Ok(FemOperator { interior_nodes: m, mesh_width: h, stiffness, mass })
}

/// Mass-orthonormal eigenpairs of `A_h`: `stiffness psi = lambda mass psi`,
/// sorted by ascending eigenvalue.
#[derive(Debug, Clone)]
pub struct DiscreteEigenSystem {
    pub lambdas: Vec<f64>,
    /// `vectors[i]` is the coordinate vector of the i-th eigenfunction.
    pub vectors: Vec<Vec<f64>>,
}

/// Solves the generalized tridiagonal eigenproblem by Cholesky reduction of
/// the mass matrix to a standard symmetric problem, then verifies residuals
/// and mass-orthonormality.
pub fn discrete_eigensystem(op: &FemOperator) -> Result<DiscreteEigenSystem> {
    let n = op.interior_nodes;
    let k = op.stiffness.to_dense();
    let mass = op.mass.to_dense();
    let chol = nalgebra::Cholesky::new(mass.clone())
        .ok_or_else(|| SpdeError::Computation("mass matrix not positive definite".into()))?;
    let l = chol.l();
    // C = L^{-1} K L^{-T}, symmetric standard problem
    let z = l.solve_lower_triangular(&k).ok_or_else(|| {
        SpdeError::Computation("singular Cholesky factor in eigen reduction".into())
    })?;
    let c = l
        .solve_lower_triangular(&z.transpose())
        .ok_or_else(|| SpdeError::Computation("singular Cholesky factor in eigen reduction".into()))?
        .transpose();
    let sym = nalgebra::SymmetricEigen::new(c);
    let mut order: Vec<usize> = (0..n).collect();
    order.sort_by(|&a, &b| sym.eigenvalues[a].total_cmp(&sym.eigenvalues[b]));

    let mut lambdas = Vec::with_capacity(n);
    let mut vectors = Vec::with_capacity(n);
    for &idx in &order {
        let lambda = sym.eigenvalues[idx];
        let y = sym.eigenvectors.column(idx).into_owned();
        // psi = L^{-T} y is mass-orthonormal
        let psi = l
            .tr_solve_lower_triangular(&y)
            .ok_or_else(|| SpdeError::Computation("back substitution failed".into()))?;
        let mut v: Vec<f64> = psi.iter().copied().collect();
        // fix the sign so results do not depend on eigensolver conventions
        if let Some(first) = v.iter().find(|x| x.abs() > 1e-12) {
            if *first < 0.0 {
                v.iter_mut().for_each(|x| *x = -*x);
            }
        }
        lambdas.push(lambda);
        vectors.push(v);
    }

    for (i, (lambda, v)) in lambdas.iter().zip(&vectors).enumerate() {
        if !(*lambda > 0.0) {
            return Err(SpdeError::Computation(format!("eigenvalue {i} not positive: {lambda}")));
        }
        let kv = op.stiffness.matvec(v);
        let mv = op.mass.matvec(v);
        let residual: f64 = kv
            .iter()
            .zip(&mv)
            .map(|(a, b)| (a - lambda * b) * (a - lambda * b))
            .sum::<f64>()
            .sqrt();
        if residual > EIGEN_RESIDUAL_TOL * lambda {
            return Err(SpdeError::Computation(format!(
                "eigenpair {i} residual {residual:.3e} exceeds {EIGEN_RESIDUAL_TOL:.0e} * lambda ({lambda:.6e})"
            )));
        }
        for (j, w) in vectors.iter().enumerate().take(i + 1) {
            let inner: f64 = w.iter().zip(&mv).map(|(a, b)| a * b).sum();
            let expected = if i == j { 1.0 } else { 0.0 };
            if (inner - expected).abs() > ORTHONORMALITY_TOL {
                return Err(SpdeError::Computation(format!(
                    "mass-orthonormality violated for pair ({i}, {j}): {inner}"
                )));
            }
        }
    }
    Ok(DiscreteEigenSystem { lambdas, vectors })
}

/// Closed-form load vector `<e_k, phi_i>_H` for all interior nodes `i`:
/// `sqrt(2) sin(k pi x_i) * 4 sin^2(k pi h / 2) / (k^2 pi^2 h)`.
pub fn sine_load(k: usize, interior_nodes: usize) -> Vec<f64> {
    assert!(k >= 1, "mode index is 1-based");
    let m = interior_nodes;
    let h = 1.0 / (m as f64 + 1.0);
    let kf = k as f64;
    let half = (kf * PI * h / 2.0).sin();
    let factor = std::f64::consts::SQRT_2 * 4.0 * half * half / (kf * kf * PI * PI * h);
    (1..=m).map(|i| factor * (kf * PI * i as f64 * h).sin()).collect()
}

/// Assembled P1 space with its eigensystem; immutable after construction and
/// freely shareable across threads.
#[derive(Debug, Clone)]
pub struct FemSystem {
    pub op: FemOperator,
    pub eigen: DiscreteEigenSystem,
}

impl FemSystem {
    pub fn build(interior_nodes: usize) -> Result<Self> {
        let op = assemble_p1(interior_nodes)?;
        let eigen = discrete_eigensystem(&op)?;
        Ok(Self { op, eigen })
    }

    pub fn interior_nodes(&self) -> usize {
        self.op.interior_nodes
    }
}

/// Coupling table between the first `dim` sine modes and the discrete
/// eigenfunctions: `gamma[i][k] = <psi_i, e_k>_H = psi_i^T w_k` with `w_k`
/// the closed-form load vector. Built once per discretization, then shared.
#[derive(Debug, Clone)]
pub struct ModeCoupling {
    pub dim: usize,
    m: usize,
    gamma: Vec<f64>, // row i, column k: gamma[i * dim + k]
}

impl ModeCoupling {
    pub fn build(sys: &FemSystem, dim: usize) -> Self {
        let m = sys.interior_nodes();
        let mut gamma = vec![0.0; m * dim];
        for k in 0..dim {
            let w = sine_load(k + 1, m);
            for (i, psi) in sys.eigen.vectors.iter().enumerate() {
                gamma[i * dim + k] = psi.iter().zip(&w).map(|(a, b)| a * b).sum();
            }
        }
        Self { dim, m, gamma }
    }

    /// Row of couplings for discrete eigenfunction `i`.
    pub fn row(&self, i: usize) -> &[f64] {
        &self.gamma[i * self.dim..(i + 1) * self.dim]
    }

    /// Eigen-coefficients of `P_h v`: `alpha_i = sum_k gamma[i][k] v_k`.
    pub fn project_to_eigen(&self, v: &[f64]) -> Vec<f64> {
        let n = v.len().min(self.dim);
        (0..self.m)
            .map(|i| {
                let row = self.row(i);
                row[..n].iter().zip(v).map(|(g, c)| g * c).sum()
            })
            .collect()
    }

    /// Adds the sine coefficients of `sum_i alpha_i psi_i` into `out`.
    pub fn accumulate_spectral(&self, alpha: &[f64], out: &mut [f64]) {
        let n = out.len().min(self.dim);
        for (i, a) in alpha.iter().enumerate() {
            if *a == 0.0 {
                continue;
            }
            let row = self.row(i);
            for k in 0..n {
                out[k] += a * row[k];
            }
        }
    }
}

/// A built Galerkin space ready to apply projections, the discrete semigroup
/// and the error operator `F_h`.
#[derive(Debug, Clone)]
pub enum GalerkinSpace {
    Spectral { modes: usize },
    Fem(FemSystem),
}

impl GalerkinSpace {
    pub fn build(disc: &Discretization) -> Result<Self> {
        disc.validate()?;
        match disc {
            Discretization::SpectralTruncation { modes } => Ok(Self::Spectral { modes: *modes }),
            Discretization::FemMesh { interior_nodes } => Ok(Self::Fem(FemSystem::build(*interior_nodes)?)),
        }
    }

    pub fn discretization(&self) -> Discretization {
        match self {
            Self::Spectral { modes } => Discretization::SpectralTruncation { modes: *modes },
            Self::Fem(sys) => Discretization::FemMesh { interior_nodes: sys.interior_nodes() },
        }
    }

    pub fn mesh_width(&self) -> f64 {
        self.discretization().mesh_width()
    }

    pub fn resolved_dim(&self) -> usize {
        self.discretization().resolved_dim()
    }

    /// `P_h v` in `V_h` coordinates: truncated sine coefficients for spectral
    /// truncation; the mass-matrix solve `mass c = (<v, phi_i>)_i` for P1.
    pub fn p_h_project(&self, v: &SpectralVector) -> Result<Vec<f64>> {
        match self {
            Self::Spectral { modes } => Ok(v.truncate(*modes)?.coeffs().to_vec()),
            Self::Fem(sys) => {
                let b = load_against(v, sys.interior_nodes(), |_k, w| w);
                sys.op.mass.solve(&b)
            }
        }
    }

    /// Ritz projection `R_h v`: for spectral truncation `R_h = P_h`; for P1
    /// the stiffness solve with the `H^1_0`-weighted loads
    /// `<v, phi_i>_{H^1_0} = sum_k lambda_k v_k <e_k, phi_i>_H`.
    pub fn r_h_project(&self, v: &SpectralVector) -> Result<Vec<f64>> {
        match self {
            Self::Spectral { modes } => Ok(v.truncate(*modes)?.coeffs().to_vec()),
            Self::Fem(sys) => {
                let b = load_against(v, sys.interior_nodes(), |k, w| {
                    (k as f64 * PI).powi(2) * w
                });
                sys.op.stiffness.solve(&b)
            }
        }
    }

    /// `S_h(t) c` for a coordinate vector `c` of `V_h`: expand in the discrete
    /// eigenbasis, damp mode `i` by `e^{-lambda_{h,i} t}`, reassemble.
    pub fn apply_discrete_semigroup(&self, t: f64, c: &[f64]) -> Result<Vec<f64>> {
        if !(t >= 0.0) {
            return Err(SpdeError::Domain(format!("semigroup time t = {t} must be >= 0")));
        }
        match self {
            Self::Spectral { modes } => {
                assert_eq!(c.len(), *modes, "coordinate dimension mismatch");
                Ok(c.iter()
                    .enumerate()
                    .map(|(i, x)| (-((i + 1) as f64 * PI).powi(2) * t).exp() * x)
                    .collect())
            }
            Self::Fem(sys) => {
                let m = sys.interior_nodes();
                assert_eq!(c.len(), m, "coordinate dimension mismatch");
                let mc = sys.op.mass.matvec(c);
                let mut out = vec![0.0; m];
                for (lambda, psi) in sys.eigen.lambdas.iter().zip(&sys.eigen.vectors) {
                    let alpha: f64 = psi.iter().zip(&mc).map(|(a, b)| a * b).sum();
                    let damped = alpha * (-lambda * t).exp();
                    for (o, p) in out.iter_mut().zip(psi) {
                        *o += damped * p;
                    }
                }
                Ok(out)
            }
        }
    }

    /// `H`-norm of the `V_h` element with coordinates `c`.
    pub fn coords_norm_h(&self, c: &[f64]) -> f64 {
        match self {
            Self::Spectral { .. } => c.iter().map(|x| x * x).sum::<f64>().sqrt(),
            Self::Fem(sys) => sys.op.mass.quadratic_form(c).max(0.0).sqrt(),
        }
    }

    /// Sine coefficients (up to `dim`) of the `V_h` element with coordinates `c`.
    pub fn coords_to_spectral(&self, c: &[f64], dim: usize) -> Result<SpectralVector> {
        if dim == 0 {
            return Err(SpdeError::Domain("spectral dimension must be >= 1".into()));
        }
        match self {
            Self::Spectral { .. } => {
                let mut coeffs = c.to_vec();
                coeffs.resize(dim, 0.0);
                SpectralVector::new(coeffs)
            }
            Self::Fem(sys) => {
                let mut coeffs = vec![0.0; dim];
                for (k, out) in coeffs.iter_mut().enumerate() {
                    let w = sine_load(k + 1, sys.interior_nodes());
                    *out = w.iter().zip(c).map(|(a, b)| a * b).sum();
                }
                SpectralVector::new(coeffs)
            }
        }
    }

    /// `F_h(t) v = S_h(t) P_h v - S(t) v`, expanded in the sine basis up to
    /// `ref_dim`. Requires `t > 0` and `ref_dim >= dim(v)`.
    pub fn apply_f_h(&self, t: f64, v: &SpectralVector, ref_dim: usize) -> Result<SpectralVector> {
        if !(t > 0.0) {
            return Err(SpdeError::Domain(format!(
                "F_h(t) is evaluated for t > 0 only (got {t}); the bound C h^2/t degenerates at 0"
            )));
        }
        if ref_dim < v.dim() {
            return Err(SpdeError::Domain(format!(
                "ref_dim {ref_dim} must cover the input dimension {}",
                v.dim()
            )));
        }
        match self {
            Self::Spectral { modes } => {
                let mut coeffs = vec![0.0; ref_dim];
                for k in (*modes + 1)..=v.dim() {
                    let lambda = (k as f64 * PI).powi(2);
                    coeffs[k - 1] = -(-lambda * t).exp() * v.coeff(k);
                }
                SpectralVector::new(coeffs)
            }
            Self::Fem(sys) => {
                let coupling = ModeCoupling::build(sys, ref_dim);
                let mut padded = v.coeffs().to_vec();
                padded.resize(ref_dim, 0.0);
                Ok(apply_f_h_with_coupling(sys, &coupling, t, &padded))
            }
        }
    }

    /// Estimates `||F_h(t)||_{L(H)}` on the `ref_dim`-dimensional sine space
    /// by power iteration on `F_h(t)^T F_h(t)` (`F_h(t)` is self-adjoint, so
    /// this iterates `F_h^2`). Requires `ref_dim >= 4 *` resolved dimension so
    /// that the unresolved tail dominates correctly.
    pub fn operator_norm_f_h(&self, t: f64, ref_dim: usize) -> Result<f64> {
        if !(t > 0.0) {
            return Err(SpdeError::Domain(format!("operator norm needs t > 0 (got {t})")));
        }
        if ref_dim < 4 * self.resolved_dim() {
            return Err(SpdeError::Domain(format!(
                "ref_dim {ref_dim} must be at least 4x the resolved dimension {}",
                self.resolved_dim()
            )));
        }
        let coupling = match self {
            Self::Spectral { .. } => None,
            Self::Fem(sys) => Some(ModeCoupling::build(sys, ref_dim)),
        };
        let apply = |x: &[f64]| -> Vec<f64> {
            match self {
                Self::Spectral { modes } => {
                    let mut y = vec![0.0; ref_dim];
                    for k in (*modes + 1)..=ref_dim {
                        let lambda = (k as f64 * PI).powi(2);
                        y[k - 1] = -(-lambda * t).exp() * x[k - 1];
                    }
                    y
                }
                Self::Fem(sys) => {
                    apply_f_h_with_coupling(sys, coupling.as_ref().unwrap(), t, x)
                        .coeffs()
                        .to_vec()
                }
            }
        };

        // deterministic pseudo-random start vector; a structured start could
        // be orthogonal to the dominant eigenvector by mesh symmetry
        let mut rng = crate::rng::substream(0x4658_0001, 0);
        let mut x: Vec<f64> = (0..ref_dim).map(|_| rand::Rng::gen_range(&mut rng, -1.0..1.0)).collect();
        let nx = x.iter().map(|a| a * a).sum::<f64>().sqrt();
        x.iter_mut().for_each(|a| *a /= nx);

        let mut prev = f64::INFINITY;
        let mut stable = 0;
        for _ in 0..POWER_ITERATION_MAX {
            let y = apply(&apply(&x));
            let ny = y.iter().map(|a| a * a).sum::<f64>().sqrt();
            if ny == 0.0 || ny < 1e-300 {
                return Ok(0.0);
            }
            let sigma = ny.sqrt();
            x = y.into_iter().map(|a| a / ny).collect();
            if (sigma - prev).abs() <= POWER_ITERATION_TOL * sigma {
                stable += 1;
                if stable >= 3 {
                    return Ok(sigma);
                }
            } else {
                stable = 0;
            }
            prev = sigma;
        }
        Err(SpdeError::Computation(format!(
            "power iteration stagnated after {POWER_ITERATION_MAX} iterations (t = {t}, last = {prev:.6e})"
        )))
    }

    /// Exact `||R_h v - v||_H` via the closed-form load integrals:
    /// `||R_h v - v||^2 = c^T mass c - 2 c^T w(v) + ||v||^2`.
    pub fn ritz_error_h(&self, v: &SpectralVector) -> Result<f64> {
        let c = self.r_h_project(v)?;
        match self {
            Self::Spectral { .. } => {
                let tail: f64 = v.coeffs().iter().skip(c.len()).map(|x| x * x).sum();
                Ok(tail.sqrt())
            }
            Self::Fem(sys) => {
                let w = load_against(v, sys.interior_nodes(), |_k, w| w);
                let quad = sys.op.mass.quadratic_form(&c);
                let cross: f64 = c.iter().zip(&w).map(|(a, b)| a * b).sum();
                let norm2 = crate::spectral::h_inner(v, v);
                Ok((quad - 2.0 * cross + norm2).max(0.0).sqrt())
            }
        }
    }
}

/// `b_i = sum_k weight(k, <e_k, phi_i>) v_k` over the modes of `v`.
fn load_against<F: Fn(usize, f64) -> f64>(v: &SpectralVector, m: usize, weight: F) -> Vec<f64> {
    let mut b = vec![0.0; m];
    for (idx, coeff) in v.coeffs().iter().enumerate() {
        if *coeff == 0.0 {
            continue;
        }
        let k = idx + 1;
        let w = sine_load(k, m);
        for (bi, wi) in b.iter_mut().zip(&w) {
            *bi += coeff * weight(k, *wi);
        }
    }
    b
}

/// `F_h(t) x` in sine coordinates via the coupling table:
/// `Gamma^T diag(e^{-lambda_h t}) Gamma x - diag(e^{-lambda t}) x`.
fn apply_f_h_with_coupling(sys: &FemSystem, coupling: &ModeCoupling, t: f64, x: &[f64]) -> SpectralVector {
    let mut alpha = coupling.project_to_eigen(x);
    for (a, lambda) in alpha.iter_mut().zip(&sys.eigen.lambdas) {
        *a *= (-lambda * t).exp();
    }
    let mut out = vec![0.0; coupling.dim];
    coupling.accumulate_spectral(&alpha, &mut out);
    for (k, o) in out.iter_mut().enumerate() {
        let lambda = ((k + 1) as f64 * PI).powi(2);
        *o -= (-lambda * t).exp() * x.get(k).copied().unwrap_or(0.0);
    }
    SpectralVector::new(out).expect("finite arithmetic")
}
