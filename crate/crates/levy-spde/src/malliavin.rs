//! Desk-scale Malliavin calculus on a Poisson random measure.
//!
//! Random variables are cylindrical, `F = sum_i f_i(p(B_1), ..., p(B_M)) h_i`,
//! over a finite partition of disjoint cells with finite measures. On this
//! space the Malliavin derivative is the add-one-point difference operator
//!
//! ```text
//! [DF]_m = sum_i (f_i(p(B) + e_m) - f_i(p(B))) h_i   on cell B_m,
//! ```
//!
//! and its adjoint, the divergence, has the pathwise form
//! `delta(Phi)(n) = sum_m (n_m Phi_m(n - e_m) - mu_m Phi_m(n)) h_m`.
//!
//! Expectations are evaluated exactly by enumerating a truncated product
//! lattice of Poisson counts; the neglected tail mass is tracked and kept
//! below a configured bound, so the duality, chain-rule, `D delta = id` and
//! Skorokhod-vs-Ito identities can be verified to near machine precision
//! instead of Monte Carlo accuracy. The only sampled check is the
//! integration-by-parts formula for the mild solution, whose left-hand side
//! lives outside the cylindrical class.

use crate::fem::Discretization;
use crate::mild::{MildSolver, ModelSpec};
use crate::rng::substream;
use crate::spectral::SpectralVector;
use crate::{Result, SpdeError};
use rand::Rng;
use std::sync::Arc;

/// Hard cap on enumerated lattice points.
const LATTICE_BUDGET: usize = 50_000_000;

/// A tabulated map on the count lattice `Z_+^M`.
pub type LatticeFn = Arc<dyn Fn(&[u32]) -> f64 + Send + Sync>;

/// Finite family of disjoint cells `B_m` with measures `mu_m = nu(A) * |I|`
/// and a time-window tag used by the predictability checks: cells in window
/// `w` sit strictly later in time than cells in windows `< w`.
#[derive(Debug, Clone)]
pub struct CellPartition {
    measures: Vec<f64>,
    windows: Vec<usize>,
}

impl CellPartition {
    pub fn new(measures: Vec<f64>) -> Result<Self> {
        let windows = (0..measures.len()).map(|_| 0).collect();
        Self::with_windows(measures, windows)
    }

    pub fn with_windows(measures: Vec<f64>, windows: Vec<usize>) -> Result<Self> {
        if measures.is_empty() {
            return Err(SpdeError::Domain("partition needs at least one cell".into()));
        }
        if measures.len() != windows.len() {
            return Err(SpdeError::Domain("one window tag per cell required".into()));
        }
        if measures.iter().any(|m| !m.is_finite() || *m <= 0.0) {
            return Err(SpdeError::Domain("cell measures must be finite > 0".into()));
        }
        Ok(Self { measures, windows })
    }

    pub fn len(&self) -> usize {
        self.measures.len()
    }

    pub fn is_empty(&self) -> bool {
        self.measures.is_empty()
    }

    pub fn measure(&self, m: usize) -> f64 {
        self.measures[m]
    }

    pub fn measures(&self) -> &[f64] {
        &self.measures
    }

    pub fn window(&self, m: usize) -> usize {
        self.windows[m]
    }
}

/// `F = sum_i f_i(counts) h_i`.
#[derive(Clone)]
pub struct CylindricalRV {
    terms: Vec<(LatticeFn, SpectralVector)>,
}

impl std::fmt::Debug for CylindricalRV {
    fn fmt(&self, f: &mut std::fmt::Formatter<'_>) -> std::fmt::Result {
        write!(f, "CylindricalRV({} terms)", self.terms.len())
    }
}

impl CylindricalRV {
    pub fn new(terms: Vec<(LatticeFn, SpectralVector)>) -> Self {
        Self { terms }
    }

    /// Constant random variable.
    pub fn deterministic(h: SpectralVector) -> Self {
        Self::new(vec![(Arc::new(|_: &[u32]| 1.0), h)])
    }

    pub fn zero() -> Self {
        Self::new(Vec::new())
    }

    pub fn dim(&self) -> usize {
        self.terms.iter().map(|(_, h)| h.dim()).max().unwrap_or(1)
    }

    /// Pointwise value at a count vector. A non-finite value of some `f_i`
    /// propagates into the coefficients and is rejected by [`expectation`].
    pub fn evaluate(&self, counts: &[u32]) -> SpectralVector {
        let mut out = vec![0.0; self.dim()];
        for (f, h) in &self.terms {
            let c = f(counts);
            for (o, hv) in out.iter_mut().zip(h.coeffs()) {
                *o += c * hv;
            }
        }
        SpectralVector::from_raw(out)
    }
}

/// Deterministic simple field `Phi = sum 1_{B_m} h_m`, at most one value per cell.
#[derive(Debug, Clone)]
pub struct SimpleField {
    entries: Vec<(usize, SpectralVector)>,
}

impl SimpleField {
    pub fn new(part: &CellPartition, entries: Vec<(usize, SpectralVector)>) -> Result<Self> {
        let mut seen = vec![false; part.len()];
        for (m, _) in &entries {
            if *m >= part.len() {
                return Err(SpdeError::Domain(format!("cell index {m} out of range")));
            }
            if seen[*m] {
                return Err(SpdeError::Domain(format!("cell {m} assigned twice")));
            }
            seen[*m] = true;
        }
        Ok(Self { entries })
    }

    pub fn entries(&self) -> &[(usize, SpectralVector)] {
        &self.entries
    }
}

/// Elementary predictable field: per-cell scalar coefficients times a fixed
/// direction, each coefficient reading only the declared `depends` cells.
#[derive(Clone)]
pub struct ElementaryField {
    pub entries: Vec<FieldEntry>,
}

#[derive(Clone)]
pub struct FieldEntry {
    /// Cell carrying this term.
    pub cell: usize,
    /// Scalar coefficient as a function of the full count vector.
    pub coeff: LatticeFn,
    /// Cells the coefficient actually reads (the measurability declaration).
    pub depends: Vec<usize>,
    pub h: SpectralVector,
}

impl ElementaryField {
    /// Deterministic field from a [`SimpleField`].
    pub fn from_simple(simple: &SimpleField) -> Self {
        let entries = simple
            .entries()
            .iter()
            .map(|(m, h)| FieldEntry {
                cell: *m,
                coeff: Arc::new(|_: &[u32]| 1.0) as LatticeFn,
                depends: Vec::new(),
                h: h.clone(),
            })
            .collect();
        Self { entries }
    }
}

/// Truncated product lattice of independent Poisson counts with the per-cell
/// pmf weights and the neglected tail mass.
#[derive(Debug, Clone)]
pub struct PoissonLattice {
    pub n_max: usize,
    /// `weights[m][n] = e^{-mu_m} mu_m^n / n!`.
    pub weights: Vec<Vec<f64>>,
    /// Union bound on the probability mass outside the lattice.
    pub tail_mass: f64,
}

impl PoissonLattice {
    /// Chooses the smallest truncation level with total tail mass below
    /// `target_tail` (at most 1e-12 per the lab contract).
    pub fn build(part: &CellPartition, target_tail: f64) -> Result<Self> {
        if !(target_tail > 0.0 && target_tail <= 1e-12) {
            return Err(SpdeError::Domain("lattice tail target must be in (0, 1e-12]".into()));
        }
        let per_cell = target_tail / part.len() as f64;
        let mut n_max = 0usize;
        for mu in part.measures() {
            let mut n = 0usize;
            let mut term = (-mu).exp();
            let mut cdf = term;
            while 1.0 - cdf > per_cell {
                n += 1;
                term *= mu / n as f64;
                cdf += term;
                if n > 400 {
                    return Err(SpdeError::Computation(format!(
                        "cell measure {mu} too large for an exact lattice at tail {target_tail:.1e}"
                    )));
                }
            }
            // headroom: polynomially-weighted tails stay below the target too
            n_max = n_max.max(n + 8);
        }
        let mut weights = Vec::with_capacity(part.len());
        let mut tail_mass = 0.0;
        for mu in part.measures() {
            let mut w = Vec::with_capacity(n_max + 1);
            let mut term = (-mu).exp();
            w.push(term);
            for n in 1..=n_max {
                term *= mu / n as f64;
                w.push(term);
            }
            tail_mass += (1.0 - w.iter().sum::<f64>()).max(0.0);
            weights.push(w);
        }
        if tail_mass > target_tail {
            return Err(SpdeError::Computation(format!(
                "lattice tail mass {tail_mass:.3e} exceeds target {target_tail:.1e}"
            )));
        }
        Ok(Self { n_max, weights, tail_mass })
    }

    fn cells(&self) -> usize {
        self.weights.len()
    }

    fn check_budget(&self) -> Result<()> {
        let points = (self.n_max + 1).checked_pow(self.cells() as u32);
        match points {
            Some(p) if p <= LATTICE_BUDGET => Ok(()),
            _ => Err(SpdeError::Computation(format!(
                "lattice enumeration budget exceeded: (n_max+1)^M = {}^{}",
                self.n_max + 1,
                self.cells()
            ))),
        }
    }

    /// Enumerates all lattice points, calling `visit(counts, weight)`.
    fn for_each_point<V: FnMut(&[u32], f64)>(&self, mut visit: V) -> Result<()> {
        self.check_budget()?;
        let m = self.cells();
        let mut counts = vec![0u32; m];
        loop {
            let mut w = 1.0;
            for (c, ws) in counts.iter().zip(&self.weights) {
                w *= ws[*c as usize];
            }
            visit(&counts, w);
            // odometer increment
            let mut idx = 0;
            loop {
                if idx == m {
                    return Ok(());
                }
                if (counts[idx] as usize) < self.n_max {
                    counts[idx] += 1;
                    break;
                }
                counts[idx] = 0;
                idx += 1;
            }
        }
    }
}

/// The add-one-point difference derivative, one cylindrical variable per cell:
/// `[DF]_m` has functions `n -> f_i(n + e_m) - f_i(n)`.
pub fn malliavin_derivative(f: &CylindricalRV, part: &CellPartition) -> Vec<CylindricalRV> {
    (0..part.len())
        .map(|m| {
            let terms = f
                .terms
                .iter()
                .map(|(fi, h)| {
                    let fi = fi.clone();
                    let shifted: LatticeFn = Arc::new(move |n: &[u32]| {
                        let mut up = n.to_vec();
                        up[m] += 1;
                        fi(&up) - fi(n)
                    });
                    (shifted, h.clone())
                })
                .collect();
            CylindricalRV::new(terms)
        })
        .collect()
}

/// Divergence of a deterministic simple field:
/// `delta(Phi) = sum_m q(B_m) h_m`, a cylindrical variable with
/// `f_m(n) = n_m - mu_m`.
pub fn divergence_simple(phi: &SimpleField, part: &CellPartition) -> CylindricalRV {
    let terms = phi
        .entries()
        .iter()
        .map(|(m, h)| {
            let m = *m;
            let mu = part.measure(m);
            let f: LatticeFn = Arc::new(move |n: &[u32]| n[m] as f64 - mu);
            (f, h.clone())
        })
        .collect();
    CylindricalRV::new(terms)
}

/// Pathwise divergence of an elementary field,
/// `delta(Phi)(n) = sum_m (n_m c_m(n - e_m) - mu_m c_m(n)) h_m`.
/// Satisfies the duality with `D` by the Mecke identity.
pub fn divergence_pathwise(
    phi: &ElementaryField,
    part: &CellPartition,
    counts: &[u32],
) -> SpectralVector {
    let dim = phi.entries.iter().map(|e| e.h.dim()).max().unwrap_or(1);
    let mut out = vec![0.0; dim];
    for entry in &phi.entries {
        let m = entry.cell;
        let mu = part.measure(m);
        let mut value = -mu * (entry.coeff)(counts);
        if counts[m] > 0 {
            let mut down = counts.to_vec();
            down[m] -= 1;
            value += counts[m] as f64 * (entry.coeff)(&down);
        }
        for (o, hv) in out.iter_mut().zip(entry.h.coeffs()) {
            *o += value * hv;
        }
    }
    SpectralVector::from_raw(out)
}

/// Exact expectation of a cylindrical variable over the truncated lattice;
/// the truncation error is bounded by `tail_mass * sup |f| * ||h||`. A map
/// that is not finite on the lattice is a domain error.
pub fn expectation(f: &CylindricalRV, lattice: &PoissonLattice) -> Result<SpectralVector> {
    let mut acc = vec![0.0; f.dim()];
    lattice.for_each_point(|counts, w| {
        let v = f.evaluate(counts);
        for (a, c) in acc.iter_mut().zip(v.coeffs()) {
            *a += w * c;
        }
    })?;
    SpectralVector::new(acc).map_err(|_| {
        SpdeError::Domain("cylindrical map is not finite on the truncated lattice".into())
    })
}

/// Absolute residual of the duality relation
/// `E sum_m mu_m <[DF]_m, h_m> = E <F, delta(Phi)>` for a deterministic
/// simple field, both sides evaluated with the exact lattice oracle.
pub fn duality_residual(
    f: &CylindricalRV,
    phi: &SimpleField,
    part: &CellPartition,
    lattice: &PoissonLattice,
) -> Result<f64> {
    let df = malliavin_derivative(f, part);
    let delta = divergence_simple(phi, part);
    let mut lhs = 0.0;
    let mut rhs = 0.0;
    lattice.for_each_point(|counts, w| {
        for (m, h) in phi.entries() {
            let d = df[*m].evaluate(counts);
            lhs += w * part.measure(*m) * crate::spectral::h_inner(&d, h);
        }
        let fv = f.evaluate(counts);
        let dv = delta.evaluate(counts);
        rhs += w * crate::spectral::h_inner(&fv, &dv);
    })?;
    Ok((lhs - rhs).abs())
}

/// The Lipschitz test maps for the chain rule.
#[derive(Debug, Clone)]
pub enum LipschitzMap {
    Identity,
    /// `x -> ||x||_H * u` for a fixed direction `u`.
    NormScaling(SpectralVector),
    /// `x -> clamp(scale * x + shift, [-cap, cap])`, entrywise.
    ClampedAffine { scale: f64, shift: SpectralVector, cap: f64 },
}

impl LipschitzMap {
    pub fn apply(&self, x: &SpectralVector) -> SpectralVector {
        match self {
            Self::Identity => x.clone(),
            Self::NormScaling(u) => u.scale(x.norm_h()),
            Self::ClampedAffine { scale, shift, cap } => {
                let v = x.scale(*scale).add(shift);
                SpectralVector::new(v.coeffs().iter().map(|c| c.clamp(-cap, *cap)).collect())
                    .expect("clamped values are finite")
            }
        }
    }
}

/// Max residual of the chain rule `D phi(F) = phi(F + DF) - phi(F)` over all
/// lattice realizations and cells. The identity is exact, so the residual is
/// pure floating-point noise.
pub fn chain_rule_check(
    map: &LipschitzMap,
    f: &CylindricalRV,
    part: &CellPartition,
    lattice: &PoissonLattice,
) -> Result<f64> {
    let mut max_residual: f64 = 0.0;
    lattice.for_each_point(|counts, _| {
        let fv = f.evaluate(counts);
        let phi_f = map.apply(&fv);
        for m in 0..part.len() {
            let mut up = counts.to_vec();
            up[m] += 1;
            let f_up = f.evaluate(&up);
            // derivative of the composed variable
            let d_composed = map.apply(&f_up).sub(&phi_f);
            // chain-rule side: phi(F + [DF]_m) - phi(F)
            let df_m = f_up.sub(&fv);
            let chain = map.apply(&fv.add(&df_m)).sub(&phi_f);
            max_residual = max_residual.max(d_composed.sub(&chain).norm_h());
        }
    })?;
    Ok(max_residual)
}

/// Max residual of `D(delta(phi)) = phi` over lattice realizations and cells.
pub fn d_delta_identity_check(phi: &SimpleField, part: &CellPartition, lattice: &PoissonLattice) -> Result<f64> {
    let delta = divergence_simple(phi, part);
    let d = malliavin_derivative(&delta, part);
    let mut expected: Vec<SpectralVector> = (0..part.len()).map(|_| SpectralVector::zero(1)).collect();
    for (m, h) in phi.entries() {
        expected[*m] = h.clone();
    }
    let mut max_residual: f64 = 0.0;
    lattice.for_each_point(|counts, _| {
        for m in 0..part.len() {
            let got = d[m].evaluate(counts);
            max_residual = max_residual.max(got.sub(&expected[m]).norm_h());
        }
    })?;
    Ok(max_residual)
}

/// Result of the Skorokhod-vs-Ito comparison.
#[derive(Debug, Clone, Copy)]
pub struct SkorohodReport {
    /// Max over realizations of `||delta(Phi) - I(Phi)(T)||_H`.
    pub max_residual: f64,
    /// `|E ||I(Phi)(T)||^2 - sum_m mu_m E[c_m^2] ||h_m||^2|`.
    pub isometry_residual: f64,
}

/// For a predictable elementary field, the divergence equals the Ito sum
/// `sum_m c_m (p(B_m) - mu_m) h_m` realization by realization, and the Ito
/// isometry holds. Fields whose coefficients read their own or a later time
/// window are rejected.
pub fn skorohod_ito_check(
    phi: &ElementaryField,
    part: &CellPartition,
    lattice: &PoissonLattice,
) -> Result<SkorohodReport> {
    for entry in &phi.entries {
        if entry.cell >= part.len() {
            return Err(SpdeError::Domain(format!("cell index {} out of range", entry.cell)));
        }
        for dep in &entry.depends {
            if part.window(*dep) >= part.window(entry.cell) {
                return Err(SpdeError::Domain(format!(
                    "field is not predictable: coefficient on cell {} (window {}) reads cell {} (window {})",
                    entry.cell,
                    part.window(entry.cell),
                    dep,
                    part.window(*dep)
                )));
            }
        }
    }
    let dim = phi.entries.iter().map(|e| e.h.dim()).max().unwrap_or(1);
    let mut max_residual: f64 = 0.0;
    let mut e_ito_sq = 0.0;
    let mut e_field_sq = 0.0;
    lattice.for_each_point(|counts, w| {
        let mut ito = vec![0.0; dim];
        for entry in &phi.entries {
            let c = (entry.coeff)(counts);
            let compensated = counts[entry.cell] as f64 - part.measure(entry.cell);
            for (o, hv) in ito.iter_mut().zip(entry.h.coeffs()) {
                *o += c * compensated * hv;
            }
            let h_norm_sq = crate::spectral::h_inner(&entry.h, &entry.h);
            e_field_sq += w * part.measure(entry.cell) * c * c * h_norm_sq;
        }
        let ito = SpectralVector::new(ito).expect("finite Ito sum");
        let div = divergence_pathwise(phi, part, counts);
        max_residual = max_residual.max(div.sub(&ito).norm_h());
        e_ito_sq += w * crate::spectral::h_inner(&ito, &ito);
    })?;
    Ok(SkorohodReport { max_residual, isometry_residual: (e_ito_sq - e_field_sq).abs() })
}

/// Monte Carlo check of the integration-by-parts formula
/// `E <F, int Phi dL> = E int int <[DF](s,u), Phi(s) u> nu(du) ds`
/// for `F = X_h(T)` and `Phi(s) = S_h(T-s) P_h G`. The derivative of the mild
/// solution is the deterministic field `S_h(T-s) P_h G u`, so the right-hand
/// side is the closed-form Ito-isometry sum; the left is estimated over
/// coupled samples.
#[derive(Debug, Clone, Copy)]
pub struct IbpReport {
    pub lhs_mean: f64,
    pub lhs_se: f64,
    pub rhs: f64,
    pub residual: f64,
    pub pass: bool,
}

pub fn integration_by_parts_check(
    spec: &ModelSpec,
    disc: &Discretization,
    samples: u64,
    seed: u64,
) -> Result<IbpReport> {
    if samples == 0 {
        return Err(SpdeError::Domain("need at least one sample".into()));
    }
    let solver = MildSolver::new(spec, disc)?;
    let det = solver.deterministic_part().to_vec();
    let mut sum = 0.0;
    let mut sumsq = 0.0;
    for i in 0..samples {
        let path = crate::levy::sample_path(&spec.levy, spec.horizon, &mut substream(seed, i))?;
        let conv = solver.stochastic_convolution(&path)?;
        let x: Vec<f64> = det.iter().zip(&conv).map(|(a, b)| a + b).collect();
        let v = solver.inner_h(&x, &conv);
        sum += v;
        sumsq += v * v;
    }
    let n = samples as f64;
    let lhs_mean = sum / n;
    let var = ((sumsq / n) - lhs_mean * lhs_mean).max(0.0) * n / (n - 1.0).max(1.0);
    let lhs_se = (var / n).sqrt();
    let rhs = solver.noise_variance_sum();
    let residual = (lhs_mean - rhs).abs();
    Ok(IbpReport { lhs_mean, lhs_se, rhs, residual, pass: residual <= 4.0 * lhs_se })
}

/// Runs the duality check over a reproducible randomized family of
/// `(F, Phi)` pairs with polynomial `f_i` of degree <= 3 and cell measures
/// in (0, 1]; returns the maximum residual observed.
pub fn randomized_duality_max_residual(pairs: usize, seed: u64) -> Result<f64> {
    let mut rng = substream(seed, 0);
    let mut max_residual: f64 = 0.0;
    for _ in 0..pairs {
        let m = rng.gen_range(1..=3usize);
        let measures: Vec<f64> = (0..m).map(|_| rng.gen_range(0.2..=1.0)).collect();
        let part = CellPartition::new(measures)?;
        let lattice = PoissonLattice::build(&part, 1e-12)?;

        let n_terms = rng.gen_range(1..=2usize);
        let dim = 3;
        let mut terms = Vec::new();
        for _ in 0..n_terms {
            // random polynomial of total degree <= 3 in the counts
            let n_monomials = rng.gen_range(1..=4usize);
            let mut monomials: Vec<(f64, Vec<u32>)> = Vec::new();
            for _ in 0..n_monomials {
                let coeff = rng.gen_range(-1.0..=1.0);
                let mut powers = vec![0u32; m];
                let degree = rng.gen_range(0..=3u32);
                for _ in 0..degree {
                    let which = rng.gen_range(0..m);
                    powers[which] += 1;
                }
                monomials.push((coeff, powers));
            }
            let f: LatticeFn = Arc::new(move |n: &[u32]| {
                monomials
                    .iter()
                    .map(|(c, powers)| {
                        c * powers
                            .iter()
                            .zip(n)
                            .map(|(p, x)| (*x as f64).powi(*p as i32))
                            .product::<f64>()
                    })
                    .sum()
            });
            let h = SpectralVector::new((0..dim).map(|_| rng.gen_range(-1.0..=1.0)).collect())?;
            terms.push((f, h));
        }
        let f = CylindricalRV::new(terms);

        let mut entries = Vec::new();
        for cell in 0..m {
            if rng.gen::<bool>() || m == 1 {
                let h = SpectralVector::new((0..dim).map(|_| rng.gen_range(-1.0..=1.0)).collect())?;
                entries.push((cell, h));
            }
        }
        if entries.is_empty() {
            entries.push((0, SpectralVector::basis(dim, 1)?));
        }
        let phi = SimpleField::new(&part, entries)?;
        max_residual = max_residual.max(duality_residual(&f, &phi, &part, &lattice)?);
    }
    Ok(max_residual)
}

#[cfg(test)]
mod tests {
    use super::*;
    use crate::levy::LevyMeasureSpec;
    use approx::{assert_abs_diff_eq, assert_relative_eq};

    fn two_cells() -> (CellPartition, PoissonLattice) {
        let part = CellPartition::new(vec![0.5, 0.8]).unwrap();
        let lattice = PoissonLattice::build(&part, 1e-12).unwrap();
        (part, lattice)
    }

    fn count_fn(m: usize) -> LatticeFn {
        Arc::new(move |n: &[u32]| n[m] as f64)
    }

    #[test]
    fn lattice_tail_is_tiny_and_weights_normalized() {
        let (_, lattice) = two_cells();
        assert!(lattice.tail_mass <= 1e-12);
        for w in &lattice.weights {
            assert_abs_diff_eq!(w.iter().sum::<f64>(), 1.0, epsilon = 1e-12);
        }
    }

    #[test]
    fn derivative_of_linear_count_is_constant() {
        let (part, lattice) = two_cells();
        let h = SpectralVector::new(vec![2.0, -1.0]).unwrap();
        let f = CylindricalRV::new(vec![(count_fn(0), h.clone())]);
        let d = malliavin_derivative(&f, &part);
        lattice
            .for_each_point(|counts, _| {
                assert_eq!(d[0].evaluate(counts).coeffs(), h.coeffs());
                assert_eq!(d[1].evaluate(counts).coeffs(), &[0.0, 0.0]);
            })
            .unwrap();
    }

    #[test]
    fn derivative_of_constant_is_zero() {
        let (part, lattice) = two_cells();
        let f = CylindricalRV::deterministic(SpectralVector::new(vec![3.0]).unwrap());
        let d = malliavin_derivative(&f, &part);
        lattice
            .for_each_point(|counts, _| {
                for dm in &d {
                    assert_eq!(dm.evaluate(counts).coeffs(), &[0.0]);
                }
            })
            .unwrap();
    }

    #[test]
    fn derivative_of_squared_count() {
        // f(n) = n_1^2 at count c: increment is (c+1)^2 - c^2 = 2c + 1
        let (part, _) = two_cells();
        let sq: LatticeFn = Arc::new(|n: &[u32]| (n[0] as f64) * (n[0] as f64));
        let h = SpectralVector::new(vec![1.0]).unwrap();
        let f = CylindricalRV::new(vec![(sq, h)]);
        let d = malliavin_derivative(&f, &part);
        for c in [0u32, 1, 3, 7] {
            let counts = [c, 2];
            assert_relative_eq!(d[0].evaluate(&counts).coeffs()[0], 2.0 * c as f64 + 1.0);
        }
    }

    #[test]
    fn representation_independence() {
        // n_1 h  versus  (n_1 + n_2) h + (-n_2) h
        let (part, lattice) = two_cells();
        let h = SpectralVector::new(vec![1.0, 0.5]).unwrap();
        let f1 = CylindricalRV::new(vec![(count_fn(0), h.clone())]);
        let sum_fn: LatticeFn = Arc::new(|n: &[u32]| (n[0] + n[1]) as f64);
        let neg_fn: LatticeFn = Arc::new(|n: &[u32]| -(n[1] as f64));
        let f2 = CylindricalRV::new(vec![(sum_fn, h.clone()), (neg_fn, h)]);
        let d1 = malliavin_derivative(&f1, &part);
        let d2 = malliavin_derivative(&f2, &part);
        lattice
            .for_each_point(|counts, _| {
                for m in 0..2 {
                    let a = d1[m].evaluate(counts);
                    let b = d2[m].evaluate(counts);
                    assert!(a.sub(&b).norm_h() < 1e-15);
                }
            })
            .unwrap();
    }

    #[test]
    fn derivative_and_divergence_are_linear() {
        let (part, lattice) = two_cells();
        let h1 = SpectralVector::new(vec![1.0, 0.0]).unwrap();
        let h2 = SpectralVector::new(vec![0.0, 1.0]).unwrap();
        let f = CylindricalRV::new(vec![(count_fn(0), h1.clone()), (count_fn(1), h2.clone())]);
        let fa = CylindricalRV::new(vec![(count_fn(0), h1.clone())]);
        let fb = CylindricalRV::new(vec![(count_fn(1), h2.clone())]);
        let d = malliavin_derivative(&f, &part);
        let da = malliavin_derivative(&fa, &part);
        let db = malliavin_derivative(&fb, &part);
        lattice
            .for_each_point(|counts, _| {
                for m in 0..2 {
                    let lhs = d[m].evaluate(counts);
                    let rhs = da[m].evaluate(counts).add(&db[m].evaluate(counts));
                    assert!(lhs.sub(&rhs).norm_h() < 1e-15);
                }
            })
            .unwrap();
        // divergence linearity over simple fields
        let pa = SimpleField::new(&part, vec![(0, h1.clone())]).unwrap();
        let pb = SimpleField::new(&part, vec![(1, h2.clone())]).unwrap();
        let pc = SimpleField::new(&part, vec![(0, h1), (1, h2)]).unwrap();
        let (sa, sb, sc) = (
            divergence_simple(&pa, &part),
            divergence_simple(&pb, &part),
            divergence_simple(&pc, &part),
        );
        lattice
            .for_each_point(|counts, _| {
                let lhs = sc.evaluate(counts);
                let rhs = sa.evaluate(counts).add(&sb.evaluate(counts));
                assert!(lhs.sub(&rhs).norm_h() < 1e-15);
            })
            .unwrap();
    }

    #[test]
    fn divergence_of_single_cell_field() {
        let (part, lattice) = two_cells();
        let h = SpectralVector::new(vec![1.5]).unwrap();
        let phi = SimpleField::new(&part, vec![(0, h.clone())]).unwrap();
        let delta = divergence_simple(&phi, &part);
        let counts = [3u32, 1];
        assert_relative_eq!(delta.evaluate(&counts).coeffs()[0], (3.0 - 0.5) * 1.5);
        // E[delta(phi)] = 0 within the tail bound
        let mean = expectation(&delta, &lattice).unwrap();
        assert!(mean.norm_h() <= 1e-10);
    }

    #[test]
    fn expectation_examples() {
        // Poisson(0.5): mean 0.5, second moment mu + mu^2 = 0.75
        let part = CellPartition::new(vec![0.5]).unwrap();
        let lattice = PoissonLattice::build(&part, 1e-12).unwrap();
        let h = SpectralVector::new(vec![1.0]).unwrap();
        let mean = expectation(&CylindricalRV::new(vec![(count_fn(0), h.clone())]), &lattice).unwrap();
        assert_abs_diff_eq!(mean.coeffs()[0], 0.5, epsilon = 1e-11);
        let sq: LatticeFn = Arc::new(|n: &[u32]| (n[0] as f64).powi(2));
        let m2 = expectation(&CylindricalRV::new(vec![(sq, h)]), &lattice).unwrap();
        assert_abs_diff_eq!(m2.coeffs()[0], 0.75, epsilon = 1e-11);
    }

    #[test]
    fn duality_simple_cases() {
        let (part, lattice) = two_cells();
        // deterministic F: both sides vanish
        let f = CylindricalRV::deterministic(SpectralVector::new(vec![1.0, 2.0]).unwrap());
        let phi = SimpleField::new(
            &part,
            vec![(0, SpectralVector::new(vec![1.0, 0.0]).unwrap()), (1, SpectralVector::new(vec![0.5, 0.5]).unwrap())],
        )
        .unwrap();
        assert!(duality_residual(&f, &phi, &part, &lattice).unwrap() <= 1e-12);

        // F = delta(phi): both sides equal sum_m mu_m ||h_m||^2
        let delta = divergence_simple(&phi, &part);
        let expected = 0.5 * 1.0 + 0.8 * 0.5;
        let df = malliavin_derivative(&delta, &part);
        let mut lhs = 0.0;
        lattice
            .for_each_point(|counts, w| {
                for (m, h) in phi.entries() {
                    lhs += w * part.measure(*m)
                        * crate::spectral::h_inner(&df[*m].evaluate(counts), h);
                }
            })
            .unwrap();
        assert_abs_diff_eq!(lhs, expected, epsilon = 1e-10);
        assert!(duality_residual(&delta, &phi, &part, &lattice).unwrap() <= 1e-10);
    }

    #[test]
    fn randomized_duality_family_is_tight() {
        let max = randomized_duality_max_residual(100, 0xD0A1).unwrap();
        assert!(max <= 1e-10, "max duality residual {max}");
    }

    #[test]
    fn chain_rule_residuals() {
        let (part, lattice) = two_cells();
        let h = SpectralVector::new(vec![1.0, -0.5]).unwrap();
        let f = CylindricalRV::new(vec![(count_fn(0), h.clone()), (count_fn(1), h.scale(0.3))]);
        let maps = [
            LipschitzMap::Identity,
            LipschitzMap::NormScaling(SpectralVector::new(vec![0.7, 0.2]).unwrap()),
            LipschitzMap::ClampedAffine {
                scale: 0.8,
                shift: SpectralVector::new(vec![0.1, -0.2]).unwrap(),
                cap: 1.5,
            },
        ];
        for map in &maps {
            let r = chain_rule_check(map, &f, &part, &lattice).unwrap();
            assert!(r <= 1e-12, "{map:?}: residual {r}");
        }
        // identity map commutes exactly
        let r = chain_rule_check(&LipschitzMap::Identity, &f, &part, &lattice).unwrap();
        assert_eq!(r, 0.0);
    }

    #[test]
    fn d_delta_recovers_the_field() {
        let (part, lattice) = two_cells();
        let single = SimpleField::new(&part, vec![(0, SpectralVector::new(vec![2.0]).unwrap())]).unwrap();
        assert!(d_delta_identity_check(&single, &part, &lattice).unwrap() <= 1e-12);
        let multi = SimpleField::new(
            &part,
            vec![
                (0, SpectralVector::new(vec![1.0, 0.3]).unwrap()),
                (1, SpectralVector::new(vec![-0.4, 0.9]).unwrap()),
            ],
        )
        .unwrap();
        assert!(d_delta_identity_check(&multi, &part, &lattice).unwrap() <= 1e-12);
        let zero = SimpleField::new(&part, vec![]).unwrap();
        assert_eq!(d_delta_identity_check(&zero, &part, &lattice).unwrap(), 0.0);
    }

    #[test]
    fn skorohod_deterministic_and_predictable() {
        // two time windows, two cells each
        let part = CellPartition::with_windows(vec![0.5, 0.4, 0.6, 0.3], vec![0, 0, 1, 1]).unwrap();
        let lattice = PoissonLattice::build(&part, 1e-12).unwrap();
        let h = SpectralVector::new(vec![1.0, 0.5]).unwrap();

        let simple = SimpleField::new(&part, vec![(0, h.clone()), (2, h.scale(-0.5))]).unwrap();
        let det = ElementaryField::from_simple(&simple);
        let report = skorohod_ito_check(&det, &part, &lattice).unwrap();
        assert!(report.max_residual <= 1e-12);
        assert!(report.isometry_residual <= 1e-10);

        // one-step predictable: the window-1 coefficient reads a window-0 count
        let coeff: LatticeFn = Arc::new(|n: &[u32]| n[0] as f64);
        let pred = ElementaryField {
            entries: vec![
                FieldEntry { cell: 0, coeff: Arc::new(|_: &[u32]| 1.0), depends: vec![], h: h.clone() },
                FieldEntry { cell: 2, coeff, depends: vec![0], h: h.clone() },
            ],
        };
        let report = skorohod_ito_check(&pred, &part, &lattice).unwrap();
        assert!(report.max_residual <= 1e-12, "residual {}", report.max_residual);
        assert!(report.isometry_residual <= 1e-10, "isometry {}", report.isometry_residual);

        // non-predictable: coefficient reads its own cell
        let own: LatticeFn = Arc::new(|n: &[u32]| n[2] as f64);
        let bad = ElementaryField {
            entries: vec![FieldEntry { cell: 2, coeff: own, depends: vec![2], h }],
        };
        let err = skorohod_ito_check(&bad, &part, &lattice);
        assert!(matches!(err, Err(SpdeError::Domain(_))));
    }

    #[test]
    fn pathwise_divergence_detects_non_predictable_mismatch() {
        // for a coefficient reading its own cell, delta(Phi) != Ito sum
        let part = CellPartition::new(vec![0.7]).unwrap();
        let h = SpectralVector::new(vec![1.0]).unwrap();
        let own: LatticeFn = Arc::new(|n: &[u32]| n[0] as f64);
        let field = ElementaryField {
            entries: vec![FieldEntry { cell: 0, coeff: own.clone(), depends: vec![0], h: h.clone() }],
        };
        let counts = [2u32];
        let div = divergence_pathwise(&field, &part, &counts);
        // delta = n c(n - e) - mu c(n) = 2*1 - 0.7*2 = 0.6
        assert_relative_eq!(div.coeffs()[0], 0.6, max_relative = 1e-14);
        // Ito sum would be c(n)(n - mu) = 2 * 1.3 = 2.6
        assert!((div.coeffs()[0] - 2.6f64).abs() > 1.0);
    }

    #[test]
    fn pathwise_divergence_satisfies_duality() {
        // Mecke identity: E<F, delta(Phi)> = E sum_m mu_m <[DF]_m, Phi_m>
        let part = CellPartition::with_windows(vec![0.5, 0.8], vec![0, 1]).unwrap();
        let lattice = PoissonLattice::build(&part, 1e-12).unwrap();
        let h = SpectralVector::new(vec![1.0, -0.3]).unwrap();
        let coeff: LatticeFn = Arc::new(|n: &[u32]| 1.0 + n[0] as f64);
        let field = ElementaryField {
            entries: vec![FieldEntry { cell: 1, coeff: coeff.clone(), depends: vec![0], h: h.clone() }],
        };
        let sq: LatticeFn = Arc::new(|n: &[u32]| (n[0] as f64) * (n[1] as f64));
        let f = CylindricalRV::new(vec![(sq, SpectralVector::new(vec![0.4, 1.1]).unwrap())]);
        let df = malliavin_derivative(&f, &part);
        let mut lhs = 0.0;
        let mut rhs = 0.0;
        lattice
            .for_each_point(|counts, w| {
                let c = coeff(counts);
                let phi_val = h.scale(c);
                lhs += w * part.measure(1) * crate::spectral::h_inner(&df[1].evaluate(counts), &phi_val);
                let fv = f.evaluate(counts);
                rhs += w * crate::spectral::h_inner(&fv, &divergence_pathwise(&field, &part, counts));
            })
            .unwrap();
        assert_abs_diff_eq!(lhs, rhs, epsilon = 1e-10);
    }

    #[test]
    fn integration_by_parts_zero_noise_and_single_mode() {
        let levy = LevyMeasureSpec::new(2.0, vec![1.0], vec![0.5]).unwrap();
        let zero_g = ModelSpec::new(
            SpectralVector::new(vec![1.0]).unwrap(),
            SpectralVector::zero(1),
            vec![0.0],
            1.0,
            levy.clone(),
        )
        .unwrap();
        let disc = Discretization::SpectralTruncation { modes: 1 };
        let report = integration_by_parts_check(&zero_g, &disc, 200, 7).unwrap();
        assert_eq!(report.lhs_mean, 0.0);
        assert_eq!(report.rhs, 0.0);
        assert!(report.pass);

        // single mode: rhs = q g^2 (1 - e^{-2 lambda T}) / (2 lambda)
        let spec = ModelSpec::new(
            SpectralVector::new(vec![1.0]).unwrap(),
            SpectralVector::new(vec![0.3]).unwrap(),
            vec![0.8],
            1.0,
            levy,
        )
        .unwrap();
        let lambda = std::f64::consts::PI.powi(2);
        let q = 2.0 * 0.25;
        let expected = q * 0.64 * (1.0 - (-2.0 * lambda).exp()) / (2.0 * lambda);
        let report = integration_by_parts_check(&spec, &disc, 10_000, 8).unwrap();
        assert_relative_eq!(report.rhs, expected, max_relative = 1e-13);
        assert!(report.pass, "residual {} se {}", report.residual, report.lhs_se);
    }

    #[test]
    fn non_finite_map_is_a_domain_error() {
        let part = CellPartition::new(vec![0.5]).unwrap();
        let lattice = PoissonLattice::build(&part, 1e-12).unwrap();
        let blow_up: LatticeFn = Arc::new(|n: &[u32]| if n[0] > 3 { f64::INFINITY } else { 1.0 });
        let f = CylindricalRV::new(vec![(blow_up, SpectralVector::new(vec![1.0]).unwrap())]);
        assert!(matches!(expectation(&f, &lattice), Err(SpdeError::Domain(_))));
    }

    #[test]
    fn lattice_budget_enforced() {
        let part = CellPartition::new(vec![1.0; 8]).unwrap();
        let lattice = PoissonLattice::build(&part, 1e-12).unwrap();
        let f = CylindricalRV::deterministic(SpectralVector::new(vec![1.0]).unwrap());
        assert!(matches!(expectation(&f, &lattice), Err(SpdeError::Computation(_))));
    }

    #[test]
    fn partition_validation() {
        assert!(CellPartition::new(vec![]).is_err());
        assert!(CellPartition::new(vec![0.0]).is_err());
        assert!(CellPartition::new(vec![-1.0]).is_err());
        assert!(CellPartition::with_windows(vec![1.0], vec![0, 1]).is_err());
        let part = CellPartition::new(vec![1.0]).unwrap();
        let h = SpectralVector::new(vec![1.0]).unwrap();
        assert!(SimpleField::new(&part, vec![(0, h.clone()), (0, h.clone())]).is_err());
        assert!(SimpleField::new(&part, vec![(1, h)]).is_err());
    }
}
