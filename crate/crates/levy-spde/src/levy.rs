//! Compound-Poisson realization of the driving Levy process `L`.
//!
//! The jump measure `nu` has finite total intensity: jumps arrive at rate
//! `intensity`, land in mode `k` with probability `p_k` and have the symmetric
//! two-point size `+-a_k` along the basis direction `e_k`. Symmetry makes the
//! compensator vanish, so `L(t) = sum_{tau_j <= t} xi_j e_{kappa_j}` is
//! already a mean-zero square-integrable martingale, and the covariance
//! operator `Q` is diagonal with entries `q_k = intensity * p_k * a_k^2`.
//!
//! Finite activity permits exact jump-wise evaluation of every stochastic
//! integral downstream; there is no time discretization anywhere.

use crate::rng::{sample_categorical, sample_poisson, sample_sign};
use crate::spectral::SpectralVector;
use crate::{Result, SpdeError};
use rand::Rng;
use rand_chacha::ChaCha8Rng;
use std::io::{BufRead, Write};

/// Finite-activity jump measure: total intensity, per-mode probabilities and
/// symmetric two-point jump sizes.
#[derive(Debug, Clone, PartialEq)]
pub struct LevyMeasureSpec {
    intensity: f64,
    mode_probs: Vec<f64>,
    jump_scales: Vec<f64>,
    cum_probs: Vec<f64>,
}

impl LevyMeasureSpec {
    pub fn new(intensity: f64, mode_probs: Vec<f64>, jump_scales: Vec<f64>) -> Result<Self> {
        if !(intensity >= 0.0) || !intensity.is_finite() {
            return Err(SpdeError::Domain(format!("intensity {intensity} must be finite >= 0")));
        }
        if mode_probs.is_empty() || mode_probs.len() != jump_scales.len() {
            return Err(SpdeError::Domain(
                "mode_probs and jump_scales must be nonempty and of equal length".into(),
            ));
        }
        if mode_probs.iter().any(|p| !p.is_finite() || *p < 0.0) {
            return Err(SpdeError::Domain("mode probabilities must be finite >= 0".into()));
        }
        let total: f64 = mode_probs.iter().sum();
        if (total - 1.0).abs() > 1e-12 {
            return Err(SpdeError::Domain(format!("mode probabilities sum to {total}, not 1")));
        }
        if jump_scales.iter().any(|a| !a.is_finite() || *a <= 0.0) {
            return Err(SpdeError::Domain("jump scales must be finite > 0".into()));
        }
        let mut cum = Vec::with_capacity(mode_probs.len());
        let mut acc = 0.0;
        for p in &mode_probs {
            acc += p;
            cum.push(acc);
        }
        if let Some(last) = cum.last_mut() {
            *last = 1.0;
        }
        Ok(Self { intensity, mode_probs, jump_scales, cum_probs: cum })
    }

    /// Normalizes arbitrary nonnegative weights to probabilities.
    pub fn from_weights(intensity: f64, weights: Vec<f64>, jump_scales: Vec<f64>) -> Result<Self> {
        let total: f64 = weights.iter().sum();
        if !(total > 0.0) {
            return Err(SpdeError::Domain("mode weights must have positive sum".into()));
        }
        let probs = weights.into_iter().map(|w| w / total).collect();
        Self::new(intensity, probs, jump_scales)
    }

    pub fn intensity(&self) -> f64 {
        self.intensity
    }

    pub fn mode_probs(&self) -> &[f64] {
        &self.mode_probs
    }

    pub fn jump_scales(&self) -> &[f64] {
        &self.jump_scales
    }

    /// Number of excited modes `K`.
    pub fn num_modes(&self) -> usize {
        self.mode_probs.len()
    }
}

/// One jump of the driving process: `xi * e_mode` at time `time`.
#[derive(Debug, Clone, Copy, PartialEq)]
pub struct Jump {
    /// Jump time in `(0, T]`.
    pub time: f64,
    /// Excited mode, 1-based.
    pub mode: usize,
    /// Signed jump size, `+-a_mode`.
    pub size: f64,
}

/// One realization of the Poisson random measure's marks on `(0, T]`,
/// sorted by strictly increasing time.
#[derive(Debug, Clone, PartialEq)]
pub struct PoissonSamplePath {
    horizon: f64,
    num_modes: usize,
    jumps: Vec<Jump>,
}

impl PoissonSamplePath {
    /// Assembles a path from raw jumps, enforcing the path invariants.
    pub fn new(horizon: f64, num_modes: usize, mut jumps: Vec<Jump>) -> Result<Self> {
        if !(horizon > 0.0) {
            return Err(SpdeError::Domain(format!("horizon {horizon} must be > 0")));
        }
        jumps.sort_by(|a, b| a.time.total_cmp(&b.time));
        for w in jumps.windows(2) {
            if !(w[0].time < w[1].time) {
                return Err(SpdeError::Domain("jump times must be strictly increasing".into()));
            }
        }
        for j in &jumps {
            if !(j.time > 0.0 && j.time <= horizon) {
                return Err(SpdeError::Domain(format!("jump time {} outside (0, T]", j.time)));
            }
            if j.mode == 0 || j.mode > num_modes {
                return Err(SpdeError::Domain(format!("jump mode {} outside 1..={num_modes}", j.mode)));
            }
        }
        Ok(Self { horizon, num_modes, jumps })
    }

    pub fn horizon(&self) -> f64 {
        self.horizon
    }

    pub fn num_modes(&self) -> usize {
        self.num_modes
    }

    pub fn jumps(&self) -> &[Jump] {
        &self.jumps
    }
}

/// Diagonal of the covariance operator `Q` in the `(e_k)` basis,
/// `q_k = intensity * p_k * a_k^2`.
#[derive(Debug, Clone, PartialEq)]
pub struct CovarianceDiag {
    q: Vec<f64>,
}

impl CovarianceDiag {
    pub fn entries(&self) -> &[f64] {
        &self.q
    }

    /// `q_k` for 1-based mode `k`; zero beyond `K`.
    pub fn entry(&self, k: usize) -> f64 {
        assert!(k >= 1, "mode index is 1-based");
        self.q.get(k - 1).copied().unwrap_or(0.0)
    }

    pub fn trace(&self) -> f64 {
        self.q.iter().sum()
    }
}

/// `q_k = intensity * p_k * a_k^2`; `Q` is diagonal by the per-mode jump construction.
pub fn covariance_diag(spec: &LevyMeasureSpec) -> CovarianceDiag {
    let q = spec
        .mode_probs
        .iter()
        .zip(&spec.jump_scales)
        .map(|(p, a)| spec.intensity * p * a * a)
        .collect();
    CovarianceDiag { q }
}

/// `int ||u||^2 nu(du) = intensity * sum_k p_k a_k^2 = trace(Q)`.
pub fn second_moment_of_measure(spec: &LevyMeasureSpec) -> f64 {
    covariance_diag(spec).trace()
}

/// Scales mode `k` of `v` by `q_k^{1/2}`; modes with `q_k = 0` (including all
/// modes beyond `K`) are annihilated, matching the pseudo-inverse convention
/// of the reproducing-kernel space `U_0 = Q^{1/2}(U)`.
pub fn q_sqrt_apply(spec: &LevyMeasureSpec, v: &SpectralVector) -> SpectralVector {
    let q = covariance_diag(spec);
    let coeffs: Vec<f64> = v
        .coeffs()
        .iter()
        .enumerate()
        .map(|(i, c)| c * q.entry(i + 1).sqrt())
        .collect();
    SpectralVector::new(coeffs).expect("scaling preserves finiteness")
}

/// Draws one realization of the jump marks on `(0, T]`:
/// `N ~ Poisson(intensity * T)`, i.i.d. uniform times (sorted), categorical
/// modes and fair signs. Pure function of the substream state.
pub fn sample_path(spec: &LevyMeasureSpec, horizon: f64, stream: &mut ChaCha8Rng) -> Result<PoissonSamplePath> {
    if !(horizon > 0.0) {
        return Err(SpdeError::Domain(format!("horizon {horizon} must be > 0")));
    }
    let n = sample_poisson(spec.intensity * horizon, stream) as usize;
    // draw times until strictly increasing after sorting (ties have probability zero)
    let mut times: Vec<f64>;
    loop {
        times = (0..n).map(|_| horizon * (1.0 - stream.gen::<f64>())).collect();
        times.sort_by(|a, b| a.total_cmp(b));
        if times.windows(2).all(|w| w[0] < w[1]) {
            break;
        }
    }
    let jumps = times
        .into_iter()
        .map(|t| {
            let mode = sample_categorical(&spec.cum_probs, stream) + 1;
            let size = spec.jump_scales[mode - 1] * sample_sign(stream);
            Jump { time: t, mode, size }
        })
        .collect();
    Ok(PoissonSamplePath { horizon, num_modes: spec.num_modes(), jumps })
}

/// `L(t) = sum_{tau_j <= t} xi_j e_{kappa_j}` as a spectral vector of
/// dimension `K`. The compensator vanishes by jump symmetry.
pub fn evaluate_l(path: &PoissonSamplePath, t: f64) -> Result<SpectralVector> {
    if !(0.0..=path.horizon).contains(&t) {
        return Err(SpdeError::Domain(format!("t = {t} outside [0, {}]", path.horizon)));
    }
    let mut coeffs = vec![0.0; path.num_modes.max(1)];
    for j in &path.jumps {
        if j.time <= t {
            coeffs[j.mode - 1] += j.size;
        }
    }
    SpectralVector::new(coeffs)
}

/// Writes paths in the dump format `sample_id, jump_time, mode, size`,
/// one row per jump, UTF-8 with LF line endings.
pub fn write_paths_csv<W: Write>(out: &mut W, paths: &[(u64, &PoissonSamplePath)]) -> Result<()> {
    out.write_all(b"sample_id,jump_time,mode,size\n")?;
    for (id, path) in paths {
        for j in path.jumps() {
            out.write_all(format!("{},{},{},{}\n", id, j.time, j.mode, j.size).as_bytes())?;
        }
    }
    Ok(())
}

/// Reads the dump format back for external replay. `horizon` and `num_modes`
/// are not stored in the file and must be supplied.
pub fn read_paths_csv<R: BufRead>(input: R, horizon: f64, num_modes: usize) -> Result<Vec<(u64, PoissonSamplePath)>> {
    let mut by_id: Vec<(u64, Vec<Jump>)> = Vec::new();
    for (lineno, line) in input.lines().enumerate() {
        let line = line?;
        if lineno == 0 {
            if line.trim() != "sample_id,jump_time,mode,size" {
                return Err(SpdeError::Domain(format!("unexpected header: {line}")));
            }
            continue;
        }
        if line.trim().is_empty() {
            continue;
        }
        let fields: Vec<&str> = line.split(',').collect();
        if fields.len() != 4 {
            return Err(SpdeError::Domain(format!("line {}: expected 4 fields", lineno + 1)));
        }
        let parse = |s: &str, what: &str| -> Result<f64> {
            s.trim()
                .parse::<f64>()
                .map_err(|e| SpdeError::Domain(format!("line {}: bad {what}: {e}", lineno + 1)))
        };
        let id = fields[0]
            .trim()
            .parse::<u64>()
            .map_err(|e| SpdeError::Domain(format!("line {}: bad sample_id: {e}", lineno + 1)))?;
        let time = parse(fields[1], "jump_time")?;
        let mode = fields[2]
            .trim()
            .parse::<usize>()
            .map_err(|e| SpdeError::Domain(format!("line {}: bad mode: {e}", lineno + 1)))?;
        let size = parse(fields[3], "size")?;
        match by_id.last_mut() {
            Some((last_id, jumps)) if *last_id == id => jumps.push(Jump { time, mode, size }),
            _ => by_id.push((id, vec![Jump { time, mode, size }])),
        }
    }
    by_id
        .into_iter()
        .map(|(id, jumps)| Ok((id, PoissonSamplePath::new(horizon, num_modes, jumps)?)))
        .collect()
}
