//! Change of measure `Ψ` relative to the Gaussian reference.
//!
//! `Ψ(q) = ½ ∫₀ᵀ V(q(τ)) dτ` is evaluated by the trapezoid rule on the
//! uniform grid of a [`SineTransform`]; the path vanishes at both endpoints,
//! which still contribute `V(0)` with half weight. The gradient is the exact
//! gradient of this discrete functional.

use std::fmt;
use std::sync::Arc;

use crate::error::{check_len, Error, Result};
use crate::spectral::{SineTransform, SpectralPrior};

/// Pointwise potential `V` and its derivative.
pub trait PathPotential: Send + Sync + fmt::Debug {
    fn value(&self, u: f64) -> f64;
    fn derivative(&self, u: f64) -> f64;
}

/// `V(u) = (u² - 1)²`.
#[derive(Debug, Clone, Copy, Default)]
pub struct DoubleWell;

impl PathPotential for DoubleWell {
    fn value(&self, u: f64) -> f64 {
        let w = u * u - 1.0;
        w * w
    }

    fn derivative(&self, u: f64) -> f64 {
        4.0 * u * (u * u - 1.0)
    }
}

pub const GAUSSIAN_LABEL: &str = "gaussian";
pub const DOUBLE_WELL_LABEL: &str = "double-well";

/// `Ψ`, `∇Ψ` and `C∇Ψ` at a single position.
#[derive(Debug, Clone, PartialEq)]
pub struct Evaluation {
    pub psi: f64,
    /// `∇Ψ(q)` as plain eigen-coordinates, so `⟨∇Ψ, h⟩ = Σ_j grad_j h_j`.
    pub grad: Vec<f64>,
    /// `C∇Ψ(q)`.
    pub c_grad: Vec<f64>,
}

impl Evaluation {
    /// `‖C^{1/2}∇Ψ‖² = ⟨∇Ψ, C∇Ψ⟩`.
    pub fn c_half_norm_sq(&self) -> f64 {
        dot(&self.grad, &self.c_grad)
    }
}

pub(crate) fn dot(a: &[f64], b: &[f64]) -> f64 {
    a.iter().zip(b).map(|(x, y)| x * y).sum()
}

/// Target `dΠ/dΠ₀ ∝ exp(-Ψ(q))` on top of a [`SpectralPrior`].
#[derive(Clone)]
pub struct TargetModel {
    prior: SpectralPrior,
    transform: SineTransform,
    potential: Option<Arc<dyn PathPotential>>,
    label: String,
}

impl fmt::Debug for TargetModel {
    fn fmt(&self, f: &mut fmt::Formatter<'_>) -> fmt::Result {
        f.debug_struct("TargetModel")
            .field("label", &self.label)
            .field("modes", &self.prior.len())
            .field("grid", &self.transform.grid())
            .field("potential", &self.potential)
            .finish()
    }
}

impl TargetModel {
    /// `Ψ ≡ 0`: the target is the reference measure itself.
    pub fn gaussian(prior: SpectralPrior, grid: usize) -> Result<Self> {
        Self::build(prior, grid, None, GAUSSIAN_LABEL.to_string())
    }

    pub fn double_well(prior: SpectralPrior, grid: usize) -> Result<Self> {
        Self::build(
            prior,
            grid,
            Some(Arc::new(DoubleWell)),
            DOUBLE_WELL_LABEL.to_string(),
        )
    }

    pub fn with_potential(
        prior: SpectralPrior,
        grid: usize,
        potential: Arc<dyn PathPotential>,
        label: impl Into<String>,
    ) -> Result<Self> {
        Self::build(prior, grid, Some(potential), label.into())
    }

    /// Looks up one of the registered targets, `"gaussian"` or `"double-well"`.
    pub fn from_label(label: &str, prior: SpectralPrior, grid: usize) -> Result<Self> {
        match label {
            GAUSSIAN_LABEL => Self::gaussian(prior, grid),
            DOUBLE_WELL_LABEL => Self::double_well(prior, grid),
            other => Err(Error::invalid(
                "label",
                format!("unknown target `{other}` (expected `gaussian` or `double-well`)"),
            )),
        }
    }

    fn build(
        prior: SpectralPrior,
        grid: usize,
        potential: Option<Arc<dyn PathPotential>>,
        label: String,
    ) -> Result<Self> {
        let transform = prior.transform(grid)?;
        Ok(Self {
            prior,
            transform,
            potential,
            label,
        })
    }

    pub fn prior(&self) -> &SpectralPrior {
        &self.prior
    }

    pub fn transform(&self) -> &SineTransform {
        &self.transform
    }

    pub fn label(&self) -> &str {
        &self.label
    }

    pub fn modes(&self) -> usize {
        self.prior.len()
    }

    /// True when `Ψ ≡ 0`.
    pub fn is_gaussian(&self) -> bool {
        self.potential.is_none()
    }

    pub fn psi(&self, q: &[f64]) -> Result<f64> {
        check_len(self.modes(), q.len())?;
        Ok(match &self.potential {
            None => 0.0,
            Some(v) => {
                let path = self.transform.synthesize(q)?;
                self.quadrature(v.as_ref(), &path)
            }
        })
    }

    pub fn grad_psi(&self, q: &[f64]) -> Result<Vec<f64>> {
        check_len(self.modes(), q.len())?;
        Ok(self.evaluate_unchecked(q).grad)
    }

    /// `C∇Ψ(q)`.
    pub fn c_grad_psi(&self, q: &[f64]) -> Result<Vec<f64>> {
        check_len(self.modes(), q.len())?;
        Ok(self.evaluate_unchecked(q).c_grad)
    }

    /// `F(q) = q + C∇Ψ(q)`.
    pub fn force(&self, q: &[f64]) -> Result<Vec<f64>> {
        let mut f = self.c_grad_psi(q)?;
        f.iter_mut().zip(q).for_each(|(f, q)| *f += q);
        Ok(f)
    }

    pub fn evaluate(&self, q: &[f64]) -> Result<Evaluation> {
        check_len(self.modes(), q.len())?;
        Ok(self.evaluate_unchecked(q))
    }

    /// Value and gradients from a single synthesis and a single analysis.
    pub(crate) fn evaluate_unchecked(&self, q: &[f64]) -> Evaluation {
        let n = self.modes();
        let Some(v) = &self.potential else {
            return Evaluation {
                psi: 0.0,
                grad: vec![0.0; n],
                c_grad: vec![0.0; n],
            };
        };
        let mut path = vec![0.0; self.transform.grid() - 1];
        self.transform.synthesize_into(q, &mut path);
        let psi = self.quadrature(v.as_ref(), &path);
        for u in path.iter_mut() {
            *u = 0.5 * v.derivative(*u);
        }
        let mut grad = vec![0.0; n];
        self.transform.analyze_into(&path, &mut grad);
        let c_grad = grad
            .iter()
            .zip(self.prior.eigenvalues())
            .map(|(g, l)| l * l * g)
            .collect();
        Evaluation { psi, grad, c_grad }
    }

    fn quadrature(&self, v: &dyn PathPotential, path: &[f64]) -> f64 {
        let interior: f64 = path.iter().map(|u| v.value(*u)).sum();
        0.5 * self.transform.spacing() * (interior + v.value(0.0))
    }
}
