//! Finite-truncation integrators for the second-order Langevin equation
//!
//! ```text
//! dq = (v - Γ₁F(q)) dt + √(2Γ₁) dB₁
//! dv = (-F(q) - Γ₂v) dt + √(2Γ₂) dB₂,     F(q) = q + C∇Ψ(q),
//! ```
//!
//! with `B₁, B₂` independent `C`-Brownian motions and diagonal `Γ₁, Γ₂`.
//! Both preserve `Π` in continuous time; they serve as the reference law for
//! the diffusion-limit checks.

use rand::Rng;
use rand_distr::StandardNormal;
use serde::{Deserialize, Serialize};

use crate::error::{check_len, Error, Result};
use crate::spectral::PhasePoint;
use crate::target::TargetModel;

#[derive(Debug, Clone, Copy, PartialEq, Eq, Default, Serialize, Deserialize)]
#[serde(rename_all = "kebab-case")]
pub enum Scheme {
    /// Strang splitting: exact half-step of the linear part (rotation,
    /// friction and noise, per mode) around an explicit `C∇Ψ` kick.
    #[default]
    OuSplitting,
    EulerMaruyama,
}

#[derive(Debug, Clone, PartialEq, Serialize, Deserialize)]
pub struct SdeParams {
    pub gamma1: Vec<f64>,
    pub gamma2: Vec<f64>,
    pub dt: f64,
    pub t_final: f64,
    pub scheme: Scheme,
    /// Keep a snapshot every this many steps in [`simulate`].
    pub record_every: usize,
}

impl SdeParams {
    /// `Γ₁ = 0`, `Γ₂ = I`: the equation reached in the diffusion limit.
    pub fn langevin(modes: usize, dt: f64, t_final: f64) -> Self {
        Self::new(vec![0.0; modes], vec![1.0; modes], dt, t_final)
    }

    pub fn new(gamma1: Vec<f64>, gamma2: Vec<f64>, dt: f64, t_final: f64) -> Self {
        Self {
            gamma1,
            gamma2,
            dt,
            t_final,
            scheme: Scheme::default(),
            record_every: 1,
        }
    }

    pub fn with_scheme(mut self, scheme: Scheme) -> Self {
        self.scheme = scheme;
        self
    }

    pub fn validate(&self, modes: usize) -> Result<()> {
        for (key, g) in [("gamma1", &self.gamma1), ("gamma2", &self.gamma2)] {
            if g.len() != modes {
                return Err(Error::invalid(
                    key,
                    format!("expected {modes} entries, got {}", g.len()),
                ));
            }
            if g.iter().any(|x| !(x.is_finite() && *x >= 0.0)) {
                return Err(Error::invalid(key, "entries must be finite and nonnegative"));
            }
        }
        if !(self.dt.is_finite() && self.dt > 0.0) {
            return Err(Error::invalid("dt", format!("must be positive, got {}", self.dt)));
        }
        if !(self.t_final.is_finite() && self.t_final >= 0.0) {
            return Err(Error::invalid(
                "t_final",
                format!("must be nonnegative, got {}", self.t_final),
            ));
        }
        if self.t_final > 0.0 && self.dt > self.t_final {
            return Err(Error::invalid("dt", "exceeds t_final"));
        }
        if self.record_every == 0 {
            return Err(Error::invalid("record_every", "must be at least 1"));
        }
        Ok(())
    }

    /// Number of steps to reach `t_final`.
    pub fn steps(&self) -> usize {
        (self.t_final / self.dt).round() as usize
    }

    pub fn has_position_noise(&self) -> bool {
        self.gamma1.iter().any(|g| *g != 0.0)
    }
}

/// Exact flow of the linear part of one mode over a fixed time: mean map
/// `e^{At}` and the Cholesky factor of the added covariance.
#[derive(Debug, Clone, Copy, PartialEq)]
struct LinearMode {
    flow: [[f64; 2]; 2],
    chol: [f64; 3],
}

impl LinearMode {
    fn new(lambda: f64, g1: f64, g2: f64, t: f64) -> Self {
        // A = [[-g1, 1], [-1, -g2]] = a I + B with B² = (d² - 1) I
        let a = -0.5 * (g1 + g2);
        let d = 0.5 * (g1 - g2);
        let disc = d * d - 1.0;
        let (c, s) = if disc < 0.0 {
            let w = (-disc).sqrt();
            ((w * t).cos(), (w * t).sin() / w)
        } else if disc > 0.0 {
            let w = disc.sqrt();
            ((w * t).cosh(), (w * t).sinh() / w)
        } else {
            (1.0, t)
        };
        let e = (a * t).exp();
        let flow = [[e * (c - s * d), e * s], [-e * s, e * (c + s * d)]];
        // Π₀ is stationary, so the added covariance is λ²(I - E Eᵀ).
        let l2 = lambda * lambda;
        let s11 = l2 * (1.0 - flow[0][0] * flow[0][0] - flow[0][1] * flow[0][1]);
        let s12 = -l2 * (flow[0][0] * flow[1][0] + flow[0][1] * flow[1][1]);
        let s22 = l2 * (1.0 - flow[1][0] * flow[1][0] - flow[1][1] * flow[1][1]);
        if g1 == 0.0 && g2 == 0.0 {
            return Self {
                flow,
                chol: [0.0; 3],
            };
        }
        let (l11, l21) = if s11 > 1e-300 {
            let l11 = s11.sqrt();
            (l11, s12 / l11)
        } else {
            (0.0, 0.0)
        };
        let l22 = (s22 - l21 * l21).max(0.0).sqrt();
        Self {
            flow,
            chol: [l11, l21, l22],
        }
    }

    fn apply<R: Rng + ?Sized>(&self, q: &mut f64, v: &mut f64, rng: &mut R) {
        let [[a, b], [c, d]] = self.flow;
        let (q0, v0) = (*q, *v);
        let z1: f64 = rng.sample(StandardNormal);
        let z2: f64 = rng.sample(StandardNormal);
        *q = a * q0 + b * v0 + self.chol[0] * z1;
        *v = c * q0 + d * v0 + self.chol[1] * z1 + self.chol[2] * z2;
    }
}

/// Precomputed stepping data for one target and parameter set.
#[derive(Debug, Clone)]
pub struct SdeIntegrator<'a> {
    target: &'a TargetModel,
    params: SdeParams,
    half_steps: Vec<LinearMode>,
    noise_q: Vec<f64>,
    noise_v: Vec<f64>,
}

impl<'a> SdeIntegrator<'a> {
    pub fn new(target: &'a TargetModel, params: SdeParams) -> Result<Self> {
        params.validate(target.modes())?;
        let lambdas = target.prior().eigenvalues();
        let half_steps = lambdas
            .iter()
            .enumerate()
            .map(|(j, l)| LinearMode::new(*l, params.gamma1[j], params.gamma2[j], 0.5 * params.dt))
            .collect();
        let em_sd = |g: &[f64]| -> Vec<f64> {
            lambdas
                .iter()
                .zip(g)
                .map(|(l, g)| l * (2.0 * g * params.dt).sqrt())
                .collect()
        };
        let noise_q = em_sd(&params.gamma1);
        let noise_v = em_sd(&params.gamma2);
        Ok(Self {
            target,
            params,
            half_steps,
            noise_q,
            noise_v,
        })
    }

    pub fn params(&self) -> &SdeParams {
        &self.params
    }

    /// Advances `x` by `dt`.
    pub fn step<R: Rng + ?Sized>(&self, x: &mut PhasePoint, rng: &mut R) {
        let dt = self.params.dt;
        match self.params.scheme {
            Scheme::OuSplitting => {
                self.linear_half(x, rng);
                if !self.target.is_gaussian() {
                    let cg = self.target.evaluate_unchecked(&x.q).c_grad;
                    for j in 0..x.len() {
                        x.q[j] -= dt * self.params.gamma1[j] * cg[j];
                        x.v[j] -= dt * cg[j];
                    }
                }
                self.linear_half(x, rng);
            }
            Scheme::EulerMaruyama => {
                let cg = self.target.evaluate_unchecked(&x.q).c_grad;
                for j in 0..x.len() {
                    let f = x.q[j] + cg[j];
                    let (q, v) = (x.q[j], x.v[j]);
                    let z1: f64 = rng.sample(StandardNormal);
                    let z2: f64 = rng.sample(StandardNormal);
                    x.q[j] = q + dt * (v - self.params.gamma1[j] * f) + self.noise_q[j] * z1;
                    x.v[j] = v + dt * (-f - self.params.gamma2[j] * v) + self.noise_v[j] * z2;
                }
            }
        }
    }

    fn linear_half<R: Rng + ?Sized>(&self, x: &mut PhasePoint, rng: &mut R) {
        for ((q, v), m) in x.q.iter_mut().zip(x.v.iter_mut()).zip(&self.half_steps) {
            m.apply(q, v, rng);
        }
    }

    /// State at `t_final`.
    pub fn terminal<R: Rng + ?Sized>(&self, x0: &PhasePoint, rng: &mut R) -> Result<PhasePoint> {
        check_len(self.target.modes(), x0.len())?;
        let mut x = x0.clone();
        for k in 1..=self.params.steps() {
            self.step(&mut x, rng);
            if !x.is_finite() {
                return Err(Error::NonFinite { what: "sde state", step: k });
            }
        }
        Ok(x)
    }
}

/// One step of the chosen scheme.
pub fn sde_step<R: Rng + ?Sized>(
    target: &TargetModel,
    x: &PhasePoint,
    params: &SdeParams,
    rng: &mut R,
) -> Result<PhasePoint> {
    check_len(target.modes(), x.len())?;
    let integrator = SdeIntegrator::new(target, params.clone())?;
    let mut y = x.clone();
    integrator.step(&mut y, rng);
    if !y.is_finite() {
        return Err(Error::NonFinite { what: "sde state", step: 1 });
    }
    Ok(y)
}

/// Integrates to `t_final`, returning `(time, state)` snapshots every
/// `record_every` steps, starting with `x0`.
pub fn simulate<R: Rng + ?Sized>(
    target: &TargetModel,
    x0: &PhasePoint,
    params: &SdeParams,
    rng: &mut R,
) -> Result<Vec<(f64, PhasePoint)>> {
    check_len(target.modes(), x0.len())?;
    let integrator = SdeIntegrator::new(target, params.clone())?;
    let mut x = x0.clone();
    let mut out = vec![(0.0, x.clone())];
    for k in 1..=params.steps() {
        integrator.step(&mut x, rng);
        if !x.is_finite() {
            return Err(Error::NonFinite { what: "sde state", step: k });
        }
        if k % params.record_every == 0 {
            out.push((k as f64 * params.dt, x.clone()));
        }
    }
    Ok(out)
}

#[cfg(test)]
mod tests {
    use super::*;
    use crate::sampler::chain_rng;
    use crate::spectral::SpectralPrior;
    use approx::assert_relative_eq;

    fn gaussian(n: usize) -> TargetModel {
        TargetModel::gaussian(SpectralPrior::brownian_bridge(10.0, n).unwrap(), 4 * n).unwrap()
    }

    #[test]
    fn linear_flow_matches_matrix_exponential() {
        // compare against a fine explicit Taylor series of e^{At}
        for (g1, g2) in [(0.0, 0.0), (0.0, 1.0), (1.0, 1.0), (3.0, 0.5), (0.2, 2.2)] {
            let t = 0.7;
            let a = [[-g1 * t, t], [-t, -g2 * t]];
            let mut term = [[1.0, 0.0], [0.0, 1.0]];
            let mut sum = term;
            for k in 1..40 {
                let mut next = [[0.0; 2]; 2];
                for i in 0..2 {
                    for j in 0..2 {
                        next[i][j] = (term[i][0] * a[0][j] + term[i][1] * a[1][j]) / k as f64;
                    }
                }
                term = next;
                for i in 0..2 {
                    for j in 0..2 {
                        sum[i][j] += term[i][j];
                    }
                }
            }
            let m = LinearMode::new(1.0, g1, g2, t);
            for i in 0..2 {
                for j in 0..2 {
                    assert!((m.flow[i][j] - sum[i][j]).abs() < 1e-12, "g=({g1},{g2})");
                }
            }
        }
    }

    #[test]
    fn frictionless_gaussian_flow_is_a_rotation() {
        let target = gaussian(8);
        let params = SdeParams::new(vec![0.0; 8], vec![0.0; 8], 0.01, 1.0);
        let mut rng = chain_rng(1, 0);
        let x0 = PhasePoint::sample(target.prior(), &mut rng);
        let path = simulate(&target, &x0, &params, &mut rng).unwrap();
        let (t, x1) = path.last().unwrap();
        assert_relative_eq!(*t, 1.0, max_relative = 1e-12);
        assert!((x1.norm_sq() - x0.norm_sq()).abs() <= 1e-10 * x0.norm_sq());
        let rotated = crate::integrators::rotate(&x0, 1.0);
        for (a, b) in x1.q.iter().zip(&rotated.q) {
            assert!((a - b).abs() < 1e-10);
        }
    }

    #[test]
    fn zero_horizon_returns_start() {
        let target = gaussian(4);
        let mut rng = chain_rng(2, 0);
        let x0 = PhasePoint::sample(target.prior(), &mut rng);
        let path = simulate(&target, &x0, &SdeParams::langevin(4, 0.1, 0.0), &mut rng).unwrap();
        assert_eq!(path, vec![(0.0, x0)]);
    }

    #[test]
    fn reproducible_under_fixed_seed() {
        let target =
            TargetModel::double_well(SpectralPrior::brownian_bridge(10.0, 8).unwrap(), 32).unwrap();
        let x0 = PhasePoint::zeros(8);
        let params = SdeParams::langevin(8, 0.01, 0.5);
        let a = simulate(&target, &x0, &params, &mut chain_rng(3, 0)).unwrap();
        let b = simulate(&target, &x0, &params, &mut chain_rng(3, 0)).unwrap();
        assert_eq!(a, b);
        let em = params.clone().with_scheme(Scheme::EulerMaruyama);
        assert!(sde_step(&target, &x0, &em, &mut chain_rng(3, 0)).is_ok());
    }

    #[test]
    fn parameter_validation() {
        let target = gaussian(4);
        let bad = SdeParams::new(vec![0.0; 3], vec![1.0; 4], 0.1, 1.0);
        assert!(matches!(
            SdeIntegrator::new(&target, bad),
            Err(Error::Invalid { key: "gamma1", .. })
        ));
        let neg = SdeParams::new(vec![0.0; 4], vec![-1.0; 4], 0.1, 1.0);
        assert!(SdeIntegrator::new(&target, neg).is_err());
        let coarse = SdeParams::langevin(4, 2.0, 1.0);
        assert!(matches!(
            SdeIntegrator::new(&target, coarse),
            Err(Error::Invalid { key: "dt", .. })
        ));
    }
}
