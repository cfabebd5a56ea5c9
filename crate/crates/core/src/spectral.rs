//! Truncated Gaussian reference measure `N(0, C)` held in the eigenbasis of `C`.
//!
//! Coefficients are expansions in the orthonormal sine basis
//! `φ_j(τ) = √(2/T) sin(jπτ/T)` of `L²(0, T)`, so `C` acts diagonally with
//! entries `λ_j²`. [`SineTransform`] moves between coefficient vectors and
//! path values on a uniform interior grid.

use std::f64::consts::PI;
use std::fmt;
use std::sync::Arc;

use rand::Rng;
use rand_distr::StandardNormal;
use rustfft::num_complex::Complex;
use rustfft::{Fft, FftPlanner};
use serde::{Deserialize, Serialize};

use crate::error::{check_len, Error, Result};

/// Standard deviations `λ_j = T/(jπ)` of the unit Brownian bridge on `(0, T)`.
///
/// `λ_j²` are the inverse eigenvalues of the Dirichlet Laplacian, so the
/// covariance decays with exponent `κ = 1`.
pub fn bridge_eigenvalues(interval_length: f64, modes: usize) -> Result<Vec<f64>> {
    if !(interval_length.is_finite() && interval_length > 0.0) {
        return Err(Error::invalid(
            "interval_length",
            format!("must be positive and finite, got {interval_length}"),
        ));
    }
    if modes == 0 {
        return Err(Error::invalid("modes", "need at least one mode"));
    }
    Ok((1..=modes)
        .map(|j| interval_length / (j as f64 * PI))
        .collect())
}

/// Gaussian measure `N(0, C)` truncated to its leading `N` eigenpairs.
#[derive(Debug, Clone, PartialEq, Serialize, Deserialize)]
pub struct SpectralPrior {
    interval_length: f64,
    eigenvalues: Vec<f64>,
    kappa: f64,
    sobolev_index: f64,
}

impl SpectralPrior {
    /// Builds a prior from standard deviations `λ_j` (not variances).
    ///
    /// Requires `λ_j > 0` strictly decreasing, `κ > 1/2` and
    /// `0 ≤ s < κ - 1/2`.
    pub fn new(
        interval_length: f64,
        eigenvalues: Vec<f64>,
        kappa: f64,
        sobolev_index: f64,
    ) -> Result<Self> {
        if !(interval_length.is_finite() && interval_length > 0.0) {
            return Err(Error::invalid(
                "interval_length",
                format!("must be positive and finite, got {interval_length}"),
            ));
        }
        if eigenvalues.is_empty() {
            return Err(Error::invalid("modes", "need at least one mode"));
        }
        if let Some((j, l)) = eigenvalues
            .iter()
            .enumerate()
            .find(|(_, l)| !(l.is_finite() && **l > 0.0))
        {
            return Err(Error::invalid(
                "eigenvalues",
                format!("lambda_{} = {l} is not positive", j + 1),
            ));
        }
        if let Some(j) = eigenvalues.windows(2).position(|w| w[1] >= w[0]) {
            return Err(Error::invalid(
                "eigenvalues",
                format!("not strictly decreasing at j = {}", j + 2),
            ));
        }
        if !(kappa.is_finite() && kappa > 0.5) {
            return Err(Error::invalid(
                "kappa",
                format!("decay exponent must exceed 1/2, got {kappa}"),
            ));
        }
        if !(sobolev_index.is_finite() && sobolev_index >= 0.0 && sobolev_index < kappa - 0.5) {
            return Err(Error::invalid(
                "sobolev_index",
                format!(
                    "must lie in [0, {}) for kappa = {kappa}, got {sobolev_index}",
                    kappa - 0.5
                ),
            ));
        }
        Ok(Self {
            interval_length,
            eigenvalues,
            kappa,
            sobolev_index,
        })
    }

    /// Unit Brownian bridge on `(0, T)` truncated to `modes` terms, with `s = 0`.
    pub fn brownian_bridge(interval_length: f64, modes: usize) -> Result<Self> {
        let eigenvalues = bridge_eigenvalues(interval_length, modes)?;
        Self::new(interval_length, eigenvalues, 1.0, 0.0)
    }

    pub fn with_sobolev_index(self, sobolev_index: f64) -> Result<Self> {
        Self::new(
            self.interval_length,
            self.eigenvalues,
            self.kappa,
            sobolev_index,
        )
    }

    pub fn interval_length(&self) -> f64 {
        self.interval_length
    }

    pub fn len(&self) -> usize {
        self.eigenvalues.len()
    }

    pub fn is_empty(&self) -> bool {
        self.eigenvalues.is_empty()
    }

    /// Standard deviations `λ_j`.
    pub fn eigenvalues(&self) -> &[f64] {
        &self.eigenvalues
    }

    /// Variances `λ_j²`, the eigenvalues of `C`.
    pub fn variances(&self) -> Vec<f64> {
        self.eigenvalues.iter().map(|l| l * l).collect()
    }

    pub fn kappa(&self) -> f64 {
        self.kappa
    }

    pub fn sobolev_index(&self) -> f64 {
        self.sobolev_index
    }

    /// Draws `q_j = λ_j ρ_j` with `ρ_j` i.i.d. standard normal.
    pub fn sample<R: Rng + ?Sized>(&self, rng: &mut R) -> Vec<f64> {
        self.eigenvalues
            .iter()
            .map(|l| l * rng.sample::<f64, _>(StandardNormal))
            .collect()
    }

    /// Karhunen–Loève synthesis from given standard normal coordinates.
    pub fn scale_normals(&self, normals: &[f64]) -> Result<Vec<f64>> {
        check_len(self.len(), normals.len())?;
        Ok(self
            .eigenvalues
            .iter()
            .zip(normals)
            .map(|(l, r)| l * r)
            .collect())
    }

    /// `C w`.
    pub fn apply_c(&self, w: &[f64]) -> Result<Vec<f64>> {
        check_len(self.len(), w.len())?;
        Ok(self
            .eigenvalues
            .iter()
            .zip(w)
            .map(|(l, x)| l * l * x)
            .collect())
    }

    /// `C^{1/2} w`.
    pub fn apply_c_sqrt(&self, w: &[f64]) -> Result<Vec<f64>> {
        self.scale_normals(w)
    }

    /// `‖w‖_C² = Σ_j w_j² / λ_j²`, the Cameron–Martin norm squared.
    pub fn cameron_martin_sq(&self, w: &[f64]) -> Result<f64> {
        check_len(self.len(), w.len())?;
        Ok(self
            .eigenvalues
            .iter()
            .zip(w)
            .map(|(l, x)| (x / l) * (x / l))
            .sum())
    }

    /// `‖w‖_r = (Σ_j j^{2r} w_j²)^{1/2}`.
    pub fn sobolev_norm(&self, w: &[f64], r: f64) -> Result<f64> {
        check_len(self.len(), w.len())?;
        Ok(sobolev_norm(w, r))
    }

    /// Trace of `C` in `H^r`: `Σ_j λ_j² j^{2r}`.
    pub fn trace_in(&self, r: f64) -> f64 {
        self.eigenvalues
            .iter()
            .enumerate()
            .map(|(i, l)| l * l * ((i + 1) as f64).powf(2.0 * r))
            .sum()
    }

    /// Physical-space transform for this prior on a grid of `grid` intervals.
    pub fn transform(&self, grid: usize) -> Result<SineTransform> {
        SineTransform::new(self.interval_length, self.len(), grid)
    }

    pub fn synthesize(&self, q: &[f64], grid: usize) -> Result<Vec<f64>> {
        self.transform(grid)?.synthesize(q)
    }

    pub fn analyze(&self, path: &[f64], grid: usize) -> Result<Vec<f64>> {
        self.transform(grid)?.analyze(path)
    }
}

pub(crate) fn sobolev_norm(w: &[f64], r: f64) -> f64 {
    if r == 0.0 {
        return w.iter().map(|x| x * x).sum::<f64>().sqrt();
    }
    w.iter()
        .enumerate()
        .map(|(i, x)| ((i + 1) as f64).powf(2.0 * r) * x * x)
        .sum::<f64>()
        .sqrt()
}

/// A point `x = (q, v)` of the extended phase space, in eigen-coordinates.
#[derive(Debug, Clone, PartialEq, Serialize, Deserialize)]
pub struct PhasePoint {
    pub q: Vec<f64>,
    pub v: Vec<f64>,
}

impl PhasePoint {
    pub fn new(q: Vec<f64>, v: Vec<f64>) -> Result<Self> {
        check_len(q.len(), v.len())?;
        let x = Self { q, v };
        if !x.is_finite() {
            return Err(Error::invalid("phase_point", "entries must be finite"));
        }
        Ok(x)
    }

    pub fn zeros(modes: usize) -> Self {
        Self {
            q: vec![0.0; modes],
            v: vec![0.0; modes],
        }
    }

    /// Independent draws of `q` and `v` from `N(0, C)`.
    pub fn sample<R: Rng + ?Sized>(prior: &SpectralPrior, rng: &mut R) -> Self {
        let q = prior.sample(rng);
        let v = prior.sample(rng);
        Self { q, v }
    }

    pub fn len(&self) -> usize {
        self.q.len()
    }

    pub fn is_empty(&self) -> bool {
        self.q.is_empty()
    }

    pub fn is_finite(&self) -> bool {
        self.q.iter().chain(&self.v).all(|x| x.is_finite())
    }

    /// `‖q‖² + ‖v‖²` in `H`.
    pub fn norm_sq(&self) -> f64 {
        self.q.iter().chain(&self.v).map(|x| x * x).sum()
    }

    pub fn flip_velocity(mut self) -> Self {
        self.v.iter_mut().for_each(|x| *x = -*x);
        self
    }
}

/// Sine synthesis and analysis on the interior points `τ_m = mT/M`,
/// `m = 1, …, M-1`, of a uniform grid. Path endpoints are identically zero.
#[derive(Clone)]
pub struct SineTransform {
    interval_length: f64,
    modes: usize,
    grid: usize,
    fft: Arc<dyn Fft<f64>>,
}

impl fmt::Debug for SineTransform {
    fn fmt(&self, f: &mut fmt::Formatter<'_>) -> fmt::Result {
        f.debug_struct("SineTransform")
            .field("interval_length", &self.interval_length)
            .field("modes", &self.modes)
            .field("grid", &self.grid)
            .finish()
    }
}

impl SineTransform {
    /// `grid` is the number of intervals `M`; it must be at least `2N`.
    pub fn new(interval_length: f64, modes: usize, grid: usize) -> Result<Self> {
        if !(interval_length.is_finite() && interval_length > 0.0) {
            return Err(Error::invalid(
                "interval_length",
                format!("must be positive and finite, got {interval_length}"),
            ));
        }
        if modes == 0 {
            return Err(Error::invalid("modes", "need at least one mode"));
        }
        if grid < 2 * modes {
            return Err(Error::Aliasing { grid, modes });
        }
        let fft = FftPlanner::new().plan_fft_forward(2 * grid);
        Ok(Self {
            interval_length,
            modes,
            grid,
            fft,
        })
    }

    pub fn modes(&self) -> usize {
        self.modes
    }

    /// Number of grid intervals `M`.
    pub fn grid(&self) -> usize {
        self.grid
    }

    pub fn interval_length(&self) -> f64 {
        self.interval_length
    }

    /// Quadrature weight `T/M`.
    pub fn spacing(&self) -> f64 {
        self.interval_length / self.grid as f64
    }

    /// Interior grid points `τ_m`.
    pub fn nodes(&self) -> Vec<f64> {
        let dt = self.spacing();
        (1..self.grid).map(|m| m as f64 * dt).collect()
    }

    /// `Σ_j q_j φ_j(τ_m)` at the `M - 1` interior nodes.
    pub fn synthesize(&self, q: &[f64]) -> Result<Vec<f64>> {
        check_len(self.modes, q.len())?;
        let mut path = vec![0.0; self.grid - 1];
        self.synthesize_into(q, &mut path);
        Ok(path)
    }

    /// Coefficients `(T/M) Σ_m f(τ_m) φ_j(τ_m)` for `j = 1, …, N`.
    pub fn analyze(&self, path: &[f64]) -> Result<Vec<f64>> {
        check_len(self.grid - 1, path.len())?;
        let mut q = vec![0.0; self.modes];
        self.analyze_into(path, &mut q);
        Ok(q)
    }

    pub(crate) fn synthesize_into(&self, q: &[f64], path: &mut [f64]) {
        let scale = (2.0 / self.interval_length).sqrt();
        self.dst(q, path, scale);
    }

    pub(crate) fn analyze_into(&self, path: &[f64], q: &mut [f64]) {
        let scale = self.spacing() * (2.0 / self.interval_length).sqrt();
        self.dst(path, q, scale);
    }

    /// `out_m = scale · Σ_k input_k sin(π k m / M)` with both indices starting at 1,
    /// computed from an odd extension of length `2M`.
    fn dst(&self, input: &[f64], out: &mut [f64], scale: f64) {
        let len = 2 * self.grid;
        let mut buf = vec![Complex::new(0.0, 0.0); len];
        for (k, &x) in input.iter().enumerate() {
            buf[k + 1].re = x;
            buf[len - k - 1].re = -x;
        }
        self.fft.process(&mut buf);
        for (m, y) in out.iter_mut().enumerate() {
            *y = -0.5 * scale * buf[m + 1].im;
        }
    }
}
