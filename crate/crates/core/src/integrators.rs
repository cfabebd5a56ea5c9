//! Flow maps of the split second-order Langevin dynamics.
//!
//! * [`theta0`]: exact Ornstein–Uhlenbeck evolution of the velocity over time `δ`.
//! * [`theta1`]: nonlinear kick `v ← v - t C∇Ψ(q)`.
//! * [`rotate`]: exact flow of `q' = v, v' = -q`.
//! * [`chi`]: `Θ₁^{h/2} ∘ R^h ∘ Θ₁^{h/2}` with its energy error, and [`chi_multi`]
//!   composing it `N_d` times.
//!
//! Energy differences are accumulated step by step from pairings that are
//! finite sums in the eigenbasis, so the Hamiltonian itself (which diverges as
//! `N → ∞`) is never formed. [`hamiltonian_oracle`] exists to check them.

use nalgebra::DMatrix;
use rand::Rng;
use rand_distr::StandardNormal;
use serde::{Deserialize, Serialize};

use crate::error::{check_len, Error, Result};
use crate::spectral::{PhasePoint, SpectralPrior};
use crate::target::{dot, Evaluation, TargetModel};

/// Number of integrator steps per proposal.
#[derive(Debug, Clone, Copy, PartialEq, Eq, Serialize, Deserialize)]
#[serde(rename_all = "kebab-case")]
pub enum TrajectoryLength {
    Fixed(usize),
    /// Drawn uniformly from `min..=max` at every MCMC step.
    Uniform { min: usize, max: usize },
}

impl TrajectoryLength {
    pub fn draw<R: Rng + ?Sized>(&self, rng: &mut R) -> usize {
        match *self {
            TrajectoryLength::Fixed(n) => n,
            TrajectoryLength::Uniform { min, max } => rng.random_range(min..=max),
        }
    }

    /// Mean number of steps.
    pub fn mean(&self) -> f64 {
        match *self {
            TrajectoryLength::Fixed(n) => n as f64,
            TrajectoryLength::Uniform { min, max } => 0.5 * (min + max) as f64,
        }
    }

    fn validate(&self) -> Result<()> {
        match *self {
            TrajectoryLength::Fixed(0) => Err(Error::invalid("n_steps", "must be at least 1")),
            TrajectoryLength::Uniform { min, max } if min == 0 || min > max => Err(
                Error::invalid("n_steps", format!("bad uniform range {min}..={max}")),
            ),
            _ => Ok(()),
        }
    }
}

/// Strength of the velocity refresh `Θ₀^δ`.
#[derive(Debug, Clone, PartialEq, Serialize, Deserialize)]
#[serde(rename_all = "kebab-case")]
pub enum Refresh {
    /// `v' = √(1-ι²) v + ι w`, `w ~ N(0, C)`; implies `Γ₂ = I` and `e^{-2δ} = 1 - ι²`.
    Iota(f64),
    /// OU time `δ` (may be `+∞`) with diagonal friction `Γ₂`; `None` is the identity.
    Delta { delta: f64, gamma2: Option<Vec<f64>> },
}

#[derive(Debug, Clone, PartialEq, Serialize, Deserialize)]
pub struct IntegratorParams {
    /// Hamiltonian step `h`.
    pub step_size: f64,
    pub n_steps: TrajectoryLength,
    pub refresh: Refresh,
}

impl IntegratorParams {
    pub fn with_iota(step_size: f64, n_steps: usize, iota: f64) -> Self {
        Self {
            step_size,
            n_steps: TrajectoryLength::Fixed(n_steps),
            refresh: Refresh::Iota(iota),
        }
    }

    pub fn with_delta(step_size: f64, n_steps: usize, delta: f64) -> Self {
        Self {
            step_size,
            n_steps: TrajectoryLength::Fixed(n_steps),
            refresh: Refresh::Delta {
                delta,
                gamma2: None,
            },
        }
    }

    /// The regime `δ = h = τ` whose interpolants have a diffusion limit.
    pub fn diffusion_limit(delta: f64) -> Self {
        Self::with_delta(delta, 1, delta)
    }

    pub fn validate(&self, modes: usize) -> Result<()> {
        if !(self.step_size.is_finite() && self.step_size >= 0.0) {
            return Err(Error::invalid(
                "step_size",
                format!("must be finite and nonnegative, got {}", self.step_size),
            ));
        }
        self.n_steps.validate()?;
        match &self.refresh {
            Refresh::Iota(iota) => {
                if !(0.0..=1.0).contains(iota) {
                    return Err(Error::invalid("iota", format!("must lie in [0, 1], got {iota}")));
                }
            }
            Refresh::Delta { delta, gamma2 } => {
                if delta.is_nan() || *delta <= 0.0 {
                    return Err(Error::invalid("delta", format!("must be positive, got {delta}")));
                }
                if let Some(g) = gamma2 {
                    check_len(modes, g.len()).map_err(|_| {
                        Error::invalid("gamma2", format!("expected {modes} entries, got {}", g.len()))
                    })?;
                    if g.iter().any(|x| !(x.is_finite() && *x > 0.0)) {
                        return Err(Error::invalid("gamma2", "entries must be positive and finite"));
                    }
                }
            }
        }
        Ok(())
    }

    /// OU time `δ`, resolving `ι` through `e^{-2δ} = 1 - ι²`.
    pub fn delta(&self) -> f64 {
        match &self.refresh {
            Refresh::Iota(iota) => iota_to_delta(*iota),
            Refresh::Delta { delta, .. } => *delta,
        }
    }

    /// `ι`, defined only when `Γ₂ = I`.
    pub fn iota(&self) -> Option<f64> {
        match &self.refresh {
            Refresh::Iota(iota) => Some(*iota),
            Refresh::Delta { delta, gamma2: None } => Some(delta_to_iota(*delta)),
            Refresh::Delta { .. } => None,
        }
    }

    /// Integration time `τ = N_d h` (mean value for random `N_d`).
    pub fn duration(&self) -> f64 {
        self.n_steps.mean() * self.step_size
    }
}

/// `δ = -½ ln(1 - ι²)`; `ι = 1` gives `δ = ∞`.
pub fn iota_to_delta(iota: f64) -> f64 {
    -0.5 * (-iota * iota).ln_1p()
}

/// `ι = √(1 - e^{-2δ})`.
pub fn delta_to_iota(delta: f64) -> f64 {
    (-(-2.0 * delta).exp_m1()).sqrt()
}

/// Per-mode coefficients of the exact OU velocity update.
#[derive(Debug, Clone, PartialEq)]
pub struct OuRefresh {
    decay: Vec<f64>,
    noise_sd: Vec<f64>,
}

impl OuRefresh {
    pub fn new(prior: &SpectralPrior, params: &IntegratorParams) -> Result<Self> {
        params.validate(prior.len())?;
        let lambdas = prior.eigenvalues();
        let (decay, noise_sd) = match &params.refresh {
            Refresh::Iota(iota) => {
                let keep = (1.0 - iota * iota).sqrt();
                (vec![keep; lambdas.len()], lambdas.iter().map(|l| l * iota).collect())
            }
            Refresh::Delta { delta, gamma2 } => lambdas
                .iter()
                .enumerate()
                .map(|(j, l)| {
                    let rate = delta * gamma2.as_ref().map_or(1.0, |g| g[j]);
                    let noise = -(-2.0 * rate).exp_m1();
                    ((-rate).exp(), l * noise.sqrt())
                })
                .unzip(),
        };
        Ok(Self { decay, noise_sd })
    }

    /// Multipliers `e^{-δγ_j}`.
    pub fn decay(&self) -> &[f64] {
        &self.decay
    }

    /// Standard deviations of `ξ^δ`, `λ_j √(1 - e^{-2δγ_j})`.
    pub fn noise_sd(&self) -> &[f64] {
        &self.noise_sd
    }
}

/// `Θ₀^δ`: returns the refreshed point and the noise `ξ^δ` that was added.
pub fn theta0<R: Rng + ?Sized>(
    x: &PhasePoint,
    refresh: &OuRefresh,
    rng: &mut R,
) -> Result<(PhasePoint, Vec<f64>)> {
    check_len(refresh.decay.len(), x.len())?;
    let xi: Vec<f64> = refresh
        .noise_sd
        .iter()
        .map(|sd| sd * rng.sample::<f64, _>(StandardNormal))
        .collect();
    let v = x
        .v
        .iter()
        .zip(&refresh.decay)
        .zip(&xi)
        .map(|((v, a), n)| a * v + n)
        .collect();
    Ok((
        PhasePoint {
            q: x.q.clone(),
            v,
        },
        xi,
    ))
}

/// `Θ₁^t`: `v ← v - t C∇Ψ(q)`.
pub fn theta1(target: &TargetModel, x: &PhasePoint, t: f64) -> Result<PhasePoint> {
    let c_grad = target.c_grad_psi(&x.q)?;
    let mut out = x.clone();
    axpy(-t, &c_grad, &mut out.v);
    Ok(out)
}

/// `R^t`: rotation of every `(q_j, v_j)` pair by angle `t`.
pub fn rotate(x: &PhasePoint, t: f64) -> PhasePoint {
    let mut out = x.clone();
    rotate_in_place(&mut out, t);
    out
}

fn rotate_in_place(x: &mut PhasePoint, t: f64) {
    let (s, c) = t.sin_cos();
    for (q, v) in x.q.iter_mut().zip(x.v.iter_mut()) {
        let (q0, v0) = (*q, *v);
        *q = c * q0 + s * v0;
        *v = -s * q0 + c * v0;
    }
}

fn axpy(a: f64, x: &[f64], y: &mut [f64]) {
    y.iter_mut().zip(x).for_each(|(y, x)| *y += a * x);
}

/// One `χ^h` step; returns the new point and `H(input) - H(output)`.
pub fn chi(target: &TargetModel, x: &PhasePoint, h: f64) -> Result<(PhasePoint, f64)> {
    chi_multi(target, x, h, 1)
}

/// `χ^h` applied `n_steps` times, with the telescoped energy difference.
pub fn chi_multi(
    target: &TargetModel,
    x: &PhasePoint,
    h: f64,
    n_steps: usize,
) -> Result<(PhasePoint, f64)> {
    check_len(target.modes(), x.len())?;
    let start = target.evaluate_unchecked(&x.q);
    let trajectory = integrate(target, x.clone(), start, h, n_steps);
    Ok((trajectory.end, trajectory.delta_h))
}

pub(crate) struct Trajectory {
    pub end: PhasePoint,
    pub end_eval: Evaluation,
    pub delta_h: f64,
}

/// Integrates from `x` given `Ψ` data at `x.q`, reusing each position's
/// evaluation for both the closing half-kick and the next opening half-kick.
pub(crate) fn integrate(
    target: &TargetModel,
    mut x: PhasePoint,
    mut eval: Evaluation,
    h: f64,
    n_steps: usize,
) -> Trajectory {
    let half = 0.5 * h;
    let mut delta_h = 0.0;
    if target.is_gaussian() {
        rotate_in_place(&mut x, h * n_steps as f64);
        return Trajectory {
            end: x,
            end_eval: eval,
            delta_h,
        };
    }
    for _ in 0..n_steps {
        let in_pairing = dot(&eval.grad, &x.v);
        let in_norm = eval.c_half_norm_sq();
        let psi_in = eval.psi;
        axpy(-half, &eval.c_grad, &mut x.v);
        rotate_in_place(&mut x, h);
        eval = target.evaluate_unchecked(&x.q);
        axpy(-half, &eval.c_grad, &mut x.v);
        let out_pairing = dot(&eval.grad, &x.v);
        delta_h += psi_in - eval.psi
            + half * (in_pairing + out_pairing)
            + 0.125 * h * h * (eval.c_half_norm_sq() - in_norm);
    }
    Trajectory {
        end: x,
        end_eval: eval,
        delta_h,
    }
}

/// `H(q, v) = ½⟨q, C⁻¹q⟩ + ½⟨v, C⁻¹v⟩ + Ψ(q)` at finite truncation.
///
/// Only meaningful for small `N`; the quadratic terms grow without bound with
/// the truncation level for typical draws.
pub fn hamiltonian_oracle(target: &TargetModel, x: &PhasePoint) -> Result<f64> {
    let prior = target.prior();
    Ok(0.5 * prior.cameron_martin_sq(&x.q)?
        + 0.5 * prior.cameron_martin_sq(&x.v)?
        + target.psi(&x.q)?)
}

/// Determinant of the central-difference Jacobian of `chi_multi` viewed as a
/// map on `ℝ^{2N}`. Limited to `N ≤ 8`.
pub fn jacobian_check(target: &TargetModel, x: &PhasePoint, h: f64, n_steps: usize) -> Result<f64> {
    let n = x.len();
    check_len(target.modes(), n)?;
    if n > 8 {
        return Err(Error::invalid("modes", format!("jacobian check needs N <= 8, got {n}")));
    }
    let flat = |p: &PhasePoint| -> Vec<f64> { p.q.iter().chain(&p.v).copied().collect() };
    let unflat = |z: &[f64]| PhasePoint {
        q: z[..n].to_vec(),
        v: z[n..].to_vec(),
    };
    let z0 = flat(x);
    let mut jac = DMatrix::<f64>::zeros(2 * n, 2 * n);
    for i in 0..2 * n {
        let eps = 1e-6 * z0[i].abs().max(1.0);
        let mut plus = z0.clone();
        plus[i] += eps;
        let mut minus = z0.clone();
        minus[i] -= eps;
        let fp = flat(&chi_multi(target, &unflat(&plus), h, n_steps)?.0);
        let fm = flat(&chi_multi(target, &unflat(&minus), h, n_steps)?.0);
        for r in 0..2 * n {
            jac[(r, i)] = (fp[r] - fm[r]) / (2.0 * eps);
        }
    }
    Ok(jac.determinant())
}

#[cfg(test)]
mod tests {
    use super::*;
    use approx::assert_relative_eq;
    use rand::SeedableRng;
    use rand_chacha::ChaCha8Rng;
    use std::f64::consts::FRAC_PI_2;

    fn double_well(t: f64, n: usize) -> TargetModel {
        TargetModel::double_well(SpectralPrior::brownian_bridge(t, n).unwrap(), 4 * n).unwrap()
    }

    fn gaussian(t: f64, n: usize) -> TargetModel {
        TargetModel::gaussian(SpectralPrior::brownian_bridge(t, n).unwrap(), 4 * n).unwrap()
    }

    fn e1(n: usize) -> Vec<f64> {
        let mut e = vec![0.0; n];
        e[0] = 1.0;
        e
    }

    #[test]
    fn iota_delta_conversion() {
        assert_eq!(iota_to_delta(0.0), 0.0);
        assert_eq!(iota_to_delta(1.0), f64::INFINITY);
        assert_eq!(delta_to_iota(f64::INFINITY), 1.0);
        for iota in [0.1, 0.5, 0.9, 0.999] {
            let d = iota_to_delta(iota);
            assert_relative_eq!((-2.0 * d).exp(), 1.0 - iota * iota, max_relative = 1e-12);
            assert_relative_eq!(delta_to_iota(d), iota, max_relative = 1e-12);
        }
    }

    #[test]
    fn params_validation() {
        assert!(IntegratorParams::with_iota(0.1, 1, 1.5).validate(4).is_err());
        assert!(IntegratorParams::with_iota(0.1, 0, 0.5).validate(4).is_err());
        assert!(IntegratorParams::with_delta(0.1, 1, 0.0).validate(4).is_err());
        assert!(IntegratorParams::with_delta(0.1, 1, f64::INFINITY).validate(4).is_ok());
        let mut p = IntegratorParams::with_delta(0.1, 1, 0.3);
        p.refresh = Refresh::Delta {
            delta: 0.3,
            gamma2: Some(vec![1.0, -1.0, 1.0, 1.0]),
        };
        assert!(matches!(p.validate(4), Err(Error::Invalid { key: "gamma2", .. })));
        p.n_steps = TrajectoryLength::Uniform { min: 5, max: 2 };
        assert!(p.validate(4).is_err());
    }

    #[test]
    fn theta0_without_refresh_is_identity() {
        let prior = SpectralPrior::brownian_bridge(10.0, 6).unwrap();
        let mut rng = ChaCha8Rng::seed_from_u64(1);
        let x = PhasePoint::sample(&prior, &mut rng);
        let ou = OuRefresh::new(&prior, &IntegratorParams::with_iota(0.1, 1, 0.0)).unwrap();
        let (y, xi) = theta0(&x, &ou, &mut rng).unwrap();
        assert_eq!(y, x);
        assert!(xi.iter().all(|n| *n == 0.0));
    }

    #[test]
    fn theta0_full_refresh_forgets_velocity() {
        let prior = SpectralPrior::brownian_bridge(10.0, 6).unwrap();
        let ou = OuRefresh::new(&prior, &IntegratorParams::with_iota(0.1, 1, 1.0)).unwrap();
        let x = PhasePoint {
            q: vec![1.0; 6],
            v: vec![1e6; 6],
        };
        let y = PhasePoint {
            q: vec![1.0; 6],
            v: vec![-3.0; 6],
        };
        let a = theta0(&x, &ou, &mut ChaCha8Rng::seed_from_u64(4)).unwrap().0;
        let b = theta0(&y, &ou, &mut ChaCha8Rng::seed_from_u64(4)).unwrap().0;
        assert_eq!(a, b);
        assert_eq!(a.q, x.q);

        let inf = OuRefresh::new(&prior, &IntegratorParams::with_delta(0.1, 1, f64::INFINITY))
            .unwrap();
        assert_eq!(inf, ou);
    }

    #[test]
    fn theta1_inverts_and_ignores_gaussian() {
        let target = double_well(20.0, 8);
        let x = PhasePoint::sample(target.prior(), &mut ChaCha8Rng::seed_from_u64(2));
        let back = theta1(&target, &theta1(&target, &x, 0.3).unwrap(), -0.3).unwrap();
        assert_eq!(back.q, x.q);
        for (a, b) in back.v.iter().zip(&x.v) {
            assert!((a - b).abs() <= 1e-12 * b.abs().max(1.0));
        }
        let at_origin = PhasePoint {
            q: vec![0.0; 8],
            v: x.v.clone(),
        };
        assert_eq!(theta1(&target, &at_origin, 0.7).unwrap(), at_origin);
        assert_eq!(theta1(&gaussian(20.0, 8), &x, 0.7).unwrap(), x);
    }

    #[test]
    fn quarter_rotation() {
        let x = PhasePoint {
            q: e1(3),
            v: vec![0.0; 3],
        };
        let y = rotate(&x, FRAC_PI_2);
        assert!(y.q[0].abs() < 1e-15);
        assert_relative_eq!(y.v[0], -1.0);
    }

    #[test]
    fn rotation_is_isometric_and_invertible() {
        let prior = SpectralPrior::brownian_bridge(10.0, 16).unwrap();
        let x = PhasePoint::sample(&prior, &mut ChaCha8Rng::seed_from_u64(7));
        for t in [0.1, 1.0, 2.5, -4.0] {
            let y = rotate(&x, t);
            assert_relative_eq!(y.norm_sq(), x.norm_sq(), max_relative = 1e-14);
            let z = rotate(&y, -t);
            for (a, b) in z.q.iter().chain(&z.v).zip(x.q.iter().chain(&x.v)) {
                assert!((a - b).abs() <= 1e-14 * x.norm_sq().sqrt());
            }
        }
    }

    #[test]
    fn gaussian_chi_is_exact_rotation() {
        let target = gaussian(10.0, 16);
        let x = PhasePoint::sample(target.prior(), &mut ChaCha8Rng::seed_from_u64(8));
        let (y, dh) = chi(&target, &x, 0.3).unwrap();
        assert_eq!(dh, 0.0);
        let r = rotate(&x, 0.3);
        for (a, b) in y.q.iter().chain(&y.v).zip(r.q.iter().chain(&r.v)) {
            assert_relative_eq!(*a, *b, max_relative = 1e-14);
        }
    }

    #[test]
    fn single_step_matches_closed_form() {
        let target = double_well(10.0, 16);
        let mut rng = ChaCha8Rng::seed_from_u64(11);
        for h in [0.01, 0.05, 0.2] {
            let x = PhasePoint::sample(target.prior(), &mut rng);
            let (y, _) = chi(&target, &x, h).unwrap();
            let (s, c) = h.sin_cos();
            let cg = target.c_grad_psi(&x.q).unwrap();
            let q_star: Vec<f64> = (0..16)
                .map(|j| c * x.q[j] + s * x.v[j] - 0.5 * h * s * cg[j])
                .collect();
            let cg_star = target.c_grad_psi(&q_star).unwrap();
            let v_star: Vec<f64> = (0..16)
                .map(|j| -s * x.q[j] + c * x.v[j] - 0.5 * h * c * cg[j] - 0.5 * h * cg_star[j])
                .collect();
            for j in 0..16 {
                assert!((y.q[j] - q_star[j]).abs() <= 1e-12 * q_star[j].abs().max(1.0));
                assert!((y.v[j] - v_star[j]).abs() <= 1e-12 * v_star[j].abs().max(1.0));
            }
        }
    }

    #[test]
    fn energy_bookkeeping_matches_oracle() {
        let mut rng = ChaCha8Rng::seed_from_u64(12);
        for (t, n, h, steps) in [(10.0, 8, 0.05, 1), (10.0, 32, 0.02, 50), (3.0, 16, 0.1, 20)] {
            let target = double_well(t, n);
            let x = PhasePoint::sample(target.prior(), &mut rng);
            let (y, dh) = chi_multi(&target, &x, h, steps).unwrap();
            let direct =
                hamiltonian_oracle(&target, &x).unwrap() - hamiltonian_oracle(&target, &y).unwrap();
            assert!((dh - direct).abs() < 1e-8, "N={n}: {dh} vs {direct}");
        }
    }

    #[test]
    fn oracle_values() {
        let target = gaussian(10.0, 4);
        assert_eq!(hamiltonian_oracle(&target, &PhasePoint::zeros(4)).unwrap(), 0.0);
        let mut q = vec![0.0; 4];
        q[0] = target.prior().eigenvalues()[0];
        let x = PhasePoint { q, v: vec![0.0; 4] };
        assert_relative_eq!(hamiltonian_oracle(&target, &x).unwrap(), 0.5, max_relative = 1e-15);
        let h0 = hamiltonian_oracle(&target, &x).unwrap();
        let h1 = hamiltonian_oracle(&target, &rotate(&x, 0.77)).unwrap();
        assert_relative_eq!(h0, h1, max_relative = 1e-10);
    }

    #[test]
    fn jacobian_is_unimodular() {
        let target = double_well(10.0, 4);
        let x = PhasePoint::sample(target.prior(), &mut ChaCha8Rng::seed_from_u64(13));
        let det = jacobian_check(&target, &x, 0.1, 5).unwrap();
        assert!((det - 1.0).abs() < 1e-5, "det {det}");
        let g = gaussian(10.0, 4);
        assert!((jacobian_check(&g, &x, 0.1, 5).unwrap() - 1.0).abs() < 1e-8);
        assert!((jacobian_check(&target, &x, 0.0, 3).unwrap() - 1.0).abs() < 1e-8);
        assert!(jacobian_check(&double_well(10.0, 9), &PhasePoint::zeros(9), 0.1, 1).is_err());
    }
}
