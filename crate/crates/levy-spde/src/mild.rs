//! Exact per-path evaluation of the mild solutions `X(T)` and `X_h(T)`,
//!
//! ```text
//! X_h(T) = S_h(T) P_h x0 + int_0^T S_h(T-s) P_h f ds + int_0^T S_h(T-s) P_h G dL(s),
//! ```
//!
//! together with their closed-form first and second moments. The driving
//! noise is finite activity and `f`, `G` are constant in time, so both the
//! Bochner integral and the stochastic convolution reduce to finite sums of
//! exponentials: there is no quadrature and no time-stepping error, only
//! rounding. The reference solution is the same evaluation on a spectral
//! space that resolves every excited mode.

use crate::fem::{Discretization, GalerkinSpace, ModeCoupling};
use crate::levy::{covariance_diag, LevyMeasureSpec, PoissonSamplePath};
use crate::spectral::SpectralVector;
use crate::{Result, SpdeError};
use std::f64::consts::PI;

/// Data of the evolution equation: initial value, constant forcing, diagonal
/// noise operator `G = diag(g_k)`, horizon and jump measure.
#[derive(Debug, Clone)]
pub struct ModelSpec {
    pub x0: SpectralVector,
    pub f_const: SpectralVector,
    pub g_diag: Vec<f64>,
    pub horizon: f64,
    pub levy: LevyMeasureSpec,
}

impl ModelSpec {
    pub fn new(
        x0: SpectralVector,
        f_const: SpectralVector,
        g_diag: Vec<f64>,
        horizon: f64,
        levy: LevyMeasureSpec,
    ) -> Result<Self> {
        if !(horizon > 0.0) {
            return Err(SpdeError::Domain(format!("horizon {horizon} must be > 0")));
        }
        if g_diag.iter().any(|g| !g.is_finite()) {
            return Err(SpdeError::Domain("noise multipliers g_k must be finite".into()));
        }
        Ok(Self { x0, f_const, g_diag, horizon, levy })
    }

    /// Smallest spectral dimension that carries all data and noise modes.
    pub fn num_modes(&self) -> usize {
        self.x0
            .dim()
            .max(self.f_const.dim())
            .max(self.g_diag.len())
            .max(self.levy.num_modes())
    }

    /// `g_k` (1-based), zero beyond the stored diagonal.
    pub fn g(&self, k: usize) -> f64 {
        assert!(k >= 1, "mode index is 1-based");
        self.g_diag.get(k - 1).copied().unwrap_or(0.0)
    }
}

/// Value of `X_h(T)` for one noise realization, in `V_h` coordinates.
#[derive(Debug, Clone, PartialEq)]
pub struct SolutionSample {
    pub coords: Vec<f64>,
    pub disc: Discretization,
    pub path_id: u64,
}

/// Per-mode mean of the reference solution:
/// `m_k = x0_k e^{-lambda_k T} + f_k (1 - e^{-lambda_k T}) / lambda_k`.
pub fn reference_mode_means(spec: &ModelSpec, dim: usize) -> Vec<f64> {
    (1..=dim)
        .map(|k| {
            let lambda = (k as f64 * PI).powi(2);
            mode_mean(lambda, spec.x0.coeff(k), spec.f_const.coeff(k), spec.horizon)
        })
        .collect()
}

/// Per-mode variance of the reference solution:
/// `v_k = q_k g_k^2 (1 - e^{-2 lambda_k T}) / (2 lambda_k)`.
pub fn reference_mode_variances(spec: &ModelSpec, dim: usize) -> Vec<f64> {
    let q = covariance_diag(&spec.levy);
    (1..=dim)
        .map(|k| {
            let lambda = (k as f64 * PI).powi(2);
            mode_variance(lambda, q.entry(k) * spec.g(k) * spec.g(k), spec.horizon)
        })
        .collect()
}

pub(crate) fn mode_mean(lambda: f64, x0: f64, f: f64, t: f64) -> f64 {
    x0 * (-lambda * t).exp() + f * (-(-lambda * t).exp_m1()) / lambda
}

pub(crate) fn mode_variance(lambda: f64, qg2: f64, t: f64) -> f64 {
    qg2 * (-(-2.0 * lambda * t).exp_m1()) / (2.0 * lambda)
}

/// Solver for one `(model, discretization)` pair. The deterministic part and
/// the eigen-expansion of the pushed-forward noise modes are cached at
/// construction; afterwards every method is pure and the solver can be shared
/// across worker threads.
#[derive(Debug, Clone)]
pub struct MildSolver {
    spec: ModelSpec,
    space: GalerkinSpace,
    det: Vec<f64>,
    /// FEM only: coupling rows over all data/noise modes, and the per-mode
    /// eigen-expansion damping integrals used by the second-moment formula.
    coupling: Option<ModeCoupling>,
}

impl MildSolver {
    pub fn new(spec: &ModelSpec, disc: &Discretization) -> Result<Self> {
        let space = GalerkinSpace::build(disc)?;
        Self::with_space(spec, space)
    }

    /// Reference evaluation: spectral truncation at `ref_dim`, which is exact
    /// when `ref_dim >= spec.num_modes()`.
    pub fn reference(spec: &ModelSpec, ref_dim: usize) -> Result<Self> {
        if ref_dim < spec.num_modes() {
            return Err(SpdeError::Domain(format!(
                "reference dimension {ref_dim} does not resolve all {} model modes",
                spec.num_modes()
            )));
        }
        Self::new(spec, &Discretization::SpectralTruncation { modes: ref_dim })
    }

    fn with_space(spec: &ModelSpec, space: GalerkinSpace) -> Result<Self> {
        let coupling = match &space {
            GalerkinSpace::Spectral { .. } => None,
            GalerkinSpace::Fem(sys) => Some(ModeCoupling::build(sys, spec.num_modes())),
        };
        let det = match &space {
            GalerkinSpace::Spectral { modes } => (1..=*modes)
                .map(|k| {
                    let lambda = (k as f64 * PI).powi(2);
                    mode_mean(lambda, spec.x0.coeff(k), spec.f_const.coeff(k), spec.horizon)
                })
                .collect(),
            GalerkinSpace::Fem(sys) => {
                let coupling = coupling.as_ref().unwrap();
                let alpha = coupling.project_to_eigen(spec.x0.coeffs());
                let beta = coupling.project_to_eigen(spec.f_const.coeffs());
                let mut nodal = vec![0.0; sys.interior_nodes()];
                for (i, (lambda, psi)) in
                    sys.eigen.lambdas.iter().zip(&sys.eigen.vectors).enumerate()
                {
                    let value = mode_mean(*lambda, alpha[i], beta[i], spec.horizon);
                    for (n, p) in nodal.iter_mut().zip(psi) {
                        *n += value * p;
                    }
                }
                nodal
            }
        };
        Ok(Self { spec: spec.clone(), space, det, coupling })
    }

    pub fn spec(&self) -> &ModelSpec {
        &self.spec
    }

    pub fn space(&self) -> &GalerkinSpace {
        &self.space
    }

    /// `S_h(T) P_h x0 + int_0^T S_h(T-s) P_h f ds` in `V_h` coordinates.
    pub fn deterministic_part(&self) -> &[f64] {
        &self.det
    }

    /// Expectation of `X_h(T)`; the stochastic term is mean-zero.
    pub fn analytic_mean(&self) -> &[f64] {
        &self.det
    }

    /// `int_0^T S_h(T-s) P_h G dL(s)` evaluated exactly jump by jump.
    pub fn stochastic_convolution(&self, path: &PoissonSamplePath) -> Result<Vec<f64>> {
        if path.horizon() != self.spec.horizon {
            return Err(SpdeError::Domain(format!(
                "path horizon {} does not match model horizon {}",
                path.horizon(),
                self.spec.horizon
            )));
        }
        let t = self.spec.horizon;
        match &self.space {
            GalerkinSpace::Spectral { modes } => {
                let mut conv = vec![0.0; *modes];
                for j in path.jumps() {
                    if j.mode <= *modes {
                        let g = self.spec.g(j.mode);
                        if g != 0.0 {
                            let lambda = (j.mode as f64 * PI).powi(2);
                            conv[j.mode - 1] += (-lambda * (t - j.time)).exp() * g * j.size;
                        }
                    }
                }
                Ok(conv)
            }
            GalerkinSpace::Fem(sys) => {
                let coupling = self.coupling.as_ref().unwrap();
                let m = sys.interior_nodes();
                let mut acc = vec![0.0; m];
                for j in path.jumps() {
                    let g = self.spec.g(j.mode);
                    if g == 0.0 || j.mode > coupling.dim {
                        continue;
                    }
                    let weight = g * j.size;
                    for (i, (a, lambda)) in acc.iter_mut().zip(&sys.eigen.lambdas).enumerate() {
                        let gamma = coupling.row(i)[j.mode - 1];
                        if gamma != 0.0 {
                            *a += weight * gamma * (-lambda * (t - j.time)).exp();
                        }
                    }
                }
                let mut nodal = vec![0.0; m];
                for (i, psi) in sys.eigen.vectors.iter().enumerate() {
                    if acc[i] != 0.0 {
                        for (n, p) in nodal.iter_mut().zip(psi) {
                            *n += acc[i] * p;
                        }
                    }
                }
                Ok(nodal)
            }
        }
    }

    /// `X_h(T)` = deterministic part + stochastic convolution.
    pub fn solve(&self, path: &PoissonSamplePath, path_id: u64) -> Result<SolutionSample> {
        let conv = self.stochastic_convolution(path)?;
        let coords = self.det.iter().zip(&conv).map(|(a, b)| a + b).collect();
        Ok(SolutionSample { coords, disc: self.space.discretization(), path_id })
    }

    /// `E ||X_h(T)||_H^2`, exactly: `||mean||^2` plus the Ito-isometry
    /// variance sum over resolved (spectral) or pushed-forward (FEM) modes.
    pub fn analytic_second_moment(&self) -> f64 {
        let mean_sq = {
            let n = self.space.coords_norm_h(&self.det);
            n * n
        };
        mean_sq + self.noise_variance_sum()
    }

    /// `E || int_0^T S_h(T-s) P_h G dL ||_H^2` by the Ito isometry:
    /// `sum_k q_k g_k^2 int_0^T || S_h(s) P_h e_k ||_H^2 ds` in closed form.
    pub fn noise_variance_sum(&self) -> f64 {
        let q = covariance_diag(&self.spec.levy);
        let t = self.spec.horizon;
        match &self.space {
            GalerkinSpace::Spectral { modes } => (1..=*modes)
                .map(|k| {
                    let lambda = (k as f64 * PI).powi(2);
                    mode_variance(lambda, q.entry(k) * self.spec.g(k) * self.spec.g(k), t)
                })
                .sum::<f64>(),
            GalerkinSpace::Fem(sys) => {
                let coupling = self.coupling.as_ref().unwrap();
                let mut sum = 0.0;
                for k in 1..=coupling.dim {
                    let qg2 = q.entry(k) * self.spec.g(k) * self.spec.g(k);
                    if qg2 == 0.0 {
                        continue;
                    }
                    for (i, lambda) in sys.eigen.lambdas.iter().enumerate() {
                        let gamma = coupling.row(i)[k - 1];
                        sum += qg2 * gamma * gamma * (-(-2.0 * lambda * t).exp_m1()) / (2.0 * lambda);
                    }
                }
                sum
            }
        }
    }

    /// `H` inner product of two coordinate vectors of this solver's space.
    pub fn inner_h(&self, a: &[f64], b: &[f64]) -> f64 {
        match &self.space {
            GalerkinSpace::Spectral { .. } => a.iter().zip(b).map(|(x, y)| x * y).sum(),
            GalerkinSpace::Fem(sys) => {
                let mb = sys.op.mass.matvec(b);
                a.iter().zip(&mb).map(|(x, y)| x * y).sum()
            }
        }
    }

    /// Per-coordinate weights of the linear functional `x -> <x, psi>_H`, so
    /// that `<X_h, psi> = coords . weights`. Cache per solver, not per sample.
    pub fn functional_weights(&self, psi: &SpectralVector) -> Vec<f64> {
        match &self.space {
            GalerkinSpace::Spectral { modes } => {
                (1..=*modes).map(|k| psi.coeff(k)).collect()
            }
            GalerkinSpace::Fem(sys) => {
                let m = sys.interior_nodes();
                let mut w = vec![0.0; m];
                for (idx, c) in psi.coeffs().iter().enumerate() {
                    if *c == 0.0 {
                        continue;
                    }
                    let load = crate::fem::sine_load(idx + 1, m);
                    for (wi, li) in w.iter_mut().zip(&load) {
                        *wi += c * li;
                    }
                }
                w
            }
        }
    }

    /// `H`-norm of a coordinate vector of this solver's space.
    pub fn norm_h(&self, coords: &[f64]) -> f64 {
        self.space.coords_norm_h(coords)
    }
}

#[cfg(test)]
mod tests {
    use super::*;
    use crate::levy::{sample_path, Jump};
    use crate::rng::substream;
    use approx::{assert_abs_diff_eq, assert_relative_eq};

    fn small_levy() -> LevyMeasureSpec {
        LevyMeasureSpec::new(8.0, vec![0.4, 0.3, 0.2, 0.1], vec![0.5, 0.25, 0.4, 0.3]).unwrap()
    }

    fn small_model() -> ModelSpec {
        ModelSpec::new(
            SpectralVector::new(vec![1.0, 0.5, -0.25, 0.125]).unwrap(),
            SpectralVector::new(vec![0.8, -0.4, 0.2, -0.1]).unwrap(),
            vec![1.0, 0.7, 0.5, 0.3],
            1.0,
            small_levy(),
        )
        .unwrap()
    }

    #[test]
    fn deterministic_part_pure_decay() {
        let spec = ModelSpec::new(
            SpectralVector::basis(2, 1).unwrap(),
            SpectralVector::zero(2),
            vec![0.0, 0.0],
            1.0,
            small_levy(),
        )
        .unwrap();
        let solver = MildSolver::new(&spec, &Discretization::SpectralTruncation { modes: 2 }).unwrap();
        assert_relative_eq!(solver.deterministic_part()[0], (-PI * PI).exp(), max_relative = 1e-14);
        assert_eq!(solver.deterministic_part()[1], 0.0);
    }

    #[test]
    fn deterministic_part_stationary_limit() {
        // x0 = 0, f = e_1, T large -> f_1 / lambda_1
        let spec = ModelSpec::new(
            SpectralVector::zero(1),
            SpectralVector::basis(1, 1).unwrap(),
            vec![0.0],
            60.0,
            small_levy(),
        )
        .unwrap();
        let solver = MildSolver::new(&spec, &Discretization::SpectralTruncation { modes: 1 }).unwrap();
        assert_relative_eq!(solver.deterministic_part()[0], 1.0 / (PI * PI), max_relative = 1e-13);
    }

    #[test]
    fn deterministic_part_fem_converges_h_squared() {
        let spec = small_model();
        let reference = MildSolver::reference(&spec, 2048).unwrap();
        let ref_vec = SpectralVector::new(reference.deterministic_part().to_vec()).unwrap();
        let mut prev_err = f64::INFINITY;
        for m in [7usize, 15, 31] {
            let solver = MildSolver::new(&spec, &Discretization::FemMesh { interior_nodes: m }).unwrap();
            let approx_spectral = solver
                .space()
                .coords_to_spectral(solver.deterministic_part(), 2048)
                .unwrap();
            let err = approx_spectral.sub(&ref_vec).norm_h();
            let h = solver.space().mesh_width();
            assert!(err <= 2.0 * h * h * ref_vec.norm_h() / 0.01, "err {err} at h {h}");
            assert!(err < prev_err);
            // halving h should reduce the error by roughly 4
            if prev_err.is_finite() {
                let factor = prev_err / err;
                assert!((2.5..6.0).contains(&factor), "factor {factor}");
            }
            prev_err = err;
        }
    }

    #[test]
    fn convolution_empty_and_single_jump() {
        let spec = small_model();
        let solver = MildSolver::new(&spec, &Discretization::SpectralTruncation { modes: 4 }).unwrap();
        let empty = PoissonSamplePath::new(1.0, 4, vec![]).unwrap();
        assert_eq!(solver.stochastic_convolution(&empty).unwrap(), vec![0.0; 4]);

        let tau = 0.3;
        let one = PoissonSamplePath::new(1.0, 4, vec![Jump { time: tau, mode: 2, size: -0.25 }]).unwrap();
        let conv = solver.stochastic_convolution(&one).unwrap();
        let lambda2 = (2.0 * PI).powi(2);
        let expected = (-lambda2 * (1.0 - tau)).exp() * spec.g(2) * (-0.25);
        assert_relative_eq!(conv[1], expected, max_relative = 1e-15);
        assert!(conv[0] == 0.0 && conv[2] == 0.0 && conv[3] == 0.0);

        // horizon mismatch rejected
        let wrong = PoissonSamplePath::new(2.0, 4, vec![]).unwrap();
        assert!(solver.stochastic_convolution(&wrong).is_err());
    }

    #[test]
    fn noise_free_solution_is_deterministic_part() {
        let mut spec = small_model();
        spec.g_diag = vec![0.0; 4];
        let solver = MildSolver::new(&spec, &Discretization::SpectralTruncation { modes: 4 }).unwrap();
        let path = sample_path(&spec.levy, 1.0, &mut substream(1, 0)).unwrap();
        let sol = solver.solve(&path, 0).unwrap();
        assert_eq!(sol.coords, solver.deterministic_part());
        assert_relative_eq!(
            solver.analytic_second_moment(),
            solver.norm_h(solver.deterministic_part()).powi(2),
            max_relative = 1e-14
        );
    }

    #[test]
    fn coupling_consistency_resolved_modes_exact() {
        // with data and noise supported on modes <= N, the truncated solution
        // equals the first-N restriction of the reference, bit for bit
        let spec = small_model();
        let coarse = MildSolver::new(&spec, &Discretization::SpectralTruncation { modes: 4 }).unwrap();
        let reference = MildSolver::reference(&spec, 64).unwrap();
        for i in 0..20 {
            let path = sample_path(&spec.levy, 1.0, &mut substream(42, i)).unwrap();
            let a = coarse.solve(&path, i).unwrap();
            let b = reference.solve(&path, i).unwrap();
            assert_eq!(a.coords[..], b.coords[..4]);
            assert!(b.coords[4..].iter().all(|x| *x == 0.0));
        }
    }

    #[test]
    fn solver_is_deterministic() {
        let spec = small_model();
        let solver = MildSolver::new(&spec, &Discretization::FemMesh { interior_nodes: 9 }).unwrap();
        let path = sample_path(&spec.levy, 1.0, &mut substream(7, 3)).unwrap();
        let a = solver.solve(&path, 3).unwrap();
        let b = solver.solve(&path, 3).unwrap();
        assert_eq!(a, b);
    }

    #[test]
    fn analytic_mean_matches_monte_carlo() {
        let spec = small_model();
        let solver = MildSolver::new(&spec, &Discretization::SpectralTruncation { modes: 4 }).unwrap();
        let n = 10_000;
        let mut sums = [0.0; 4];
        let mut sq = [0.0; 4];
        for i in 0..n {
            let path = sample_path(&spec.levy, 1.0, &mut substream(900, i)).unwrap();
            let sol = solver.solve(&path, i).unwrap();
            for k in 0..4 {
                sums[k] += sol.coords[k];
                sq[k] += sol.coords[k] * sol.coords[k];
            }
        }
        for k in 0..4 {
            let mean = sums[k] / n as f64;
            let var = (sq[k] / n as f64 - mean * mean).max(0.0);
            let se = (var / n as f64).sqrt();
            let expected = solver.analytic_mean()[k];
            assert!(
                (mean - expected).abs() <= 4.0 * se,
                "mode {k}: {mean} vs {expected} (se {se})"
            );
        }
    }

    #[test]
    fn second_moment_single_mode_long_time() {
        // x0 = f = 0, q_1 = g_1 = 1: E||X||^2 -> 1/(2 pi^2)
        let levy = LevyMeasureSpec::new(1.0, vec![1.0], vec![1.0]).unwrap();
        let spec = ModelSpec::new(SpectralVector::zero(1), SpectralVector::zero(1), vec![1.0], 50.0, levy).unwrap();
        let solver = MildSolver::new(&spec, &Discretization::SpectralTruncation { modes: 1 }).unwrap();
        assert_relative_eq!(solver.analytic_second_moment(), 1.0 / (2.0 * PI * PI), max_relative = 1e-12);
        // frozen numeric value
        assert_abs_diff_eq!(solver.analytic_second_moment(), 0.05066059182116889, epsilon = 1e-15);
    }

    #[test]
    fn second_moment_matches_monte_carlo() {
        let spec = small_model();
        for disc in [
            Discretization::SpectralTruncation { modes: 4 },
            Discretization::FemMesh { interior_nodes: 9 },
        ] {
            let solver = MildSolver::new(&spec, &disc).unwrap();
            let n = 10_000;
            let mut sum = 0.0;
            let mut sumsq = 0.0;
            for i in 0..n {
                let path = sample_path(&spec.levy, 1.0, &mut substream(901, i)).unwrap();
                let sol = solver.solve(&path, i).unwrap();
                let v = solver.norm_h(&sol.coords).powi(2);
                sum += v;
                sumsq += v * v;
            }
            let mean = sum / n as f64;
            let var = (sumsq / n as f64 - mean * mean).max(0.0);
            let se = (var / n as f64).sqrt();
            let expected = solver.analytic_second_moment();
            assert!(
                (mean - expected).abs() <= 4.0 * se,
                "{disc:?}: {mean} vs {expected} (se {se})"
            );
        }
    }

    #[test]
    fn ito_isometry_per_mode_variance() {
        let spec = small_model();
        let solver = MildSolver::new(&spec, &Discretization::SpectralTruncation { modes: 4 }).unwrap();
        let variances = reference_mode_variances(&spec, 4);
        let n = 20_000;
        let mut sum = [0.0; 4];
        let mut sumsq = [0.0; 4];
        let mut sum4 = [0.0; 4];
        for i in 0..n {
            let path = sample_path(&spec.levy, 1.0, &mut substream(902, i)).unwrap();
            let conv = solver.stochastic_convolution(&path).unwrap();
            for k in 0..4 {
                sum[k] += conv[k];
                sumsq[k] += conv[k] * conv[k];
                sum4[k] += conv[k].powi(4);
            }
        }
        for k in 0..4 {
            let mean_sq = sumsq[k] / n as f64;
            let var_of_sq = (sum4[k] / n as f64 - mean_sq * mean_sq).max(0.0);
            let se = (var_of_sq / n as f64).sqrt();
            assert!(sum[k].abs() / n as f64 <= 4.0 * (mean_sq / n as f64).sqrt());
            assert!(
                (mean_sq - variances[k]).abs() <= 4.0 * se,
                "mode {k}: {mean_sq} vs {} (se {se})",
                variances[k]
            );
        }
    }

    #[test]
    fn strong_error_matches_analytic_tail() {
        // E||X_N - X_ref||^2 = sum_{k>N} (m_k^2 + v_k), sampled with coupling
        let spec = small_model();
        let n_modes = 4;
        let coarse = MildSolver::new(&spec, &Discretization::SpectralTruncation { modes: 2 }).unwrap();
        let reference = MildSolver::reference(&spec, n_modes).unwrap();
        let means = reference_mode_means(&spec, n_modes);
        let vars = reference_mode_variances(&spec, n_modes);
        let expected: f64 = (2..n_modes).map(|idx| means[idx] * means[idx] + vars[idx]).sum();
        let n = 10_000;
        let mut sum = 0.0;
        let mut sumsq = 0.0;
        for i in 0..n {
            let path = sample_path(&spec.levy, 1.0, &mut substream(903, i)).unwrap();
            let a = coarse.solve(&path, i).unwrap();
            let b = reference.solve(&path, i).unwrap();
            let mut padded = a.coords.clone();
            padded.resize(n_modes, 0.0);
            let d2: f64 = padded.iter().zip(&b.coords).map(|(x, y)| (x - y) * (x - y)).sum();
            sum += d2;
            sumsq += d2 * d2;
        }
        let mean = sum / n as f64;
        let var = (sumsq / n as f64 - mean * mean).max(0.0);
        let se = (var / n as f64).sqrt();
        assert!((mean - expected).abs() <= 4.0 * se, "{mean} vs {expected} (se {se})");
    }

    #[test]
    fn fem_solution_close_to_reference_on_same_path() {
        // pathwise FEM error is O(h^2) for resolved smooth data
        let spec = small_model();
        let fem = MildSolver::new(&spec, &Discretization::FemMesh { interior_nodes: 15 }).unwrap();
        let reference = MildSolver::reference(&spec, 512).unwrap();
        let path = sample_path(&spec.levy, 1.0, &mut substream(904, 1)).unwrap();
        let a = fem.solve(&path, 1).unwrap();
        let b = reference.solve(&path, 1).unwrap();
        let a_spectral = fem.space().coords_to_spectral(&a.coords, 512).unwrap();
        let b_spectral = SpectralVector::new(b.coords).unwrap();
        let err = a_spectral.sub(&b_spectral).norm_h();
        let h = fem.space().mesh_width();
        assert!(err < 3.0 * h * h * b_spectral.norm_h() / 0.01, "err {err}");
    }

    #[test]
    fn linear_functional_weights_agree_between_spaces() {
        let spec = small_model();
        let psi = SpectralVector::new(vec![0.5, -0.2, 0.1, 0.05]).unwrap();
        // spectral: plain truncated dot product
        let s = MildSolver::new(&spec, &Discretization::SpectralTruncation { modes: 4 }).unwrap();
        let w = s.functional_weights(&psi);
        assert_eq!(w, psi.coeffs());
        // FEM weights reproduce <X, psi> via the load integrals
        let f = MildSolver::new(&spec, &Discretization::FemMesh { interior_nodes: 31 }).unwrap();
        let wf = f.functional_weights(&psi);
        let path = sample_path(&spec.levy, 1.0, &mut substream(905, 2)).unwrap();
        let sol = f.solve(&path, 2).unwrap();
        let direct: f64 = sol.coords.iter().zip(&wf).map(|(a, b)| a * b).sum();
        let spectral = f.space().coords_to_spectral(&sol.coords, 512).unwrap();
        let via_expansion = crate::spectral::h_inner(&spectral, &psi);
        assert_relative_eq!(direct, via_expansion, max_relative = 1e-10, epsilon = 1e-12);
    }

    #[test]
    fn mode_statistics_monotone_in_lambda() {
        // both the damped mean (for nonnegative data) and the variance factor
        // decrease when an eigenvalue grows
        let t = 1.0;
        for lambda in [5.0, 50.0, 500.0] {
            let eps = lambda * 1e-4;
            assert!(mode_mean(lambda + eps, 1.0, 0.7, t) <= mode_mean(lambda, 1.0, 0.7, t));
            assert!(mode_variance(lambda + eps, 1.0, t) <= mode_variance(lambda, 1.0, t));
        }
    }

    #[test]
    fn model_spec_validation() {
        let levy = small_levy();
        assert!(ModelSpec::new(SpectralVector::zero(1), SpectralVector::zero(1), vec![1.0], 0.0, levy.clone()).is_err());
        assert!(ModelSpec::new(SpectralVector::zero(1), SpectralVector::zero(1), vec![f64::NAN], 1.0, levy).is_err());
    }
}
