use proptest::prelude::*;
use solhmc::integrators::{chi_multi, delta_to_iota, iota_to_delta, rotate, theta1};
use solhmc::{PhasePoint, SpectralPrior, TargetModel};

const N: usize = 8;

fn target() -> TargetModel {
    TargetModel::double_well(SpectralPrior::brownian_bridge(5.0, N).unwrap(), 4 * N).unwrap()
}

fn coeffs() -> impl Strategy<Value = Vec<f64>> {
    prop::collection::vec(-2.0..2.0f64, N)
}

fn state() -> impl Strategy<Value = PhasePoint> {
    (coeffs(), coeffs()).prop_map(|(q, v)| PhasePoint { q, v })
}

fn close(a: &[f64], b: &[f64], tol: f64) -> bool {
    a.iter().zip(b).all(|(x, y)| (x - y).abs() <= tol * (1.0 + y.abs()))
}

proptest! {
    #![proptest_config(ProptestConfig::with_cases(64))]

    #[test]
    fn round_trip_through_grid(q in coeffs()) {
        let t = SpectralPrior::brownian_bridge(5.0, N).unwrap().transform(4 * N).unwrap();
        let back = t.analyze(&t.synthesize(&q).unwrap()).unwrap();
        prop_assert!(close(&back, &q, 1e-10));
    }

    #[test]
    fn sobolev_zero_is_euclidean(w in coeffs()) {
        let prior = SpectralPrior::brownian_bridge(5.0, N).unwrap();
        let euclid = w.iter().map(|x| x * x).sum::<f64>().sqrt();
        prop_assert_eq!(prior.sobolev_norm(&w, 0.0).unwrap(), euclid);
    }

    #[test]
    fn psi_is_nonnegative_and_even(q in coeffs()) {
        let target = target();
        let neg: Vec<f64> = q.iter().map(|x| -x).collect();
        let psi = target.psi(&q).unwrap();
        prop_assert!(psi >= 0.0);
        prop_assert_eq!(psi, target.psi(&neg).unwrap());
    }

    #[test]
    fn rotation_is_an_invertible_isometry(x in state(), t in -7.0..7.0f64) {
        let y = rotate(&x, t);
        prop_assert!((y.norm_sq() - x.norm_sq()).abs() <= 1e-14 * (1.0 + x.norm_sq()) * 4.0);
        let z = rotate(&y, -t);
        prop_assert!(close(&z.q, &x.q, 1e-14) && close(&z.v, &x.v, 1e-14));
    }

    #[test]
    fn kick_inverts_exactly(x in state(), t in -1.0..1.0f64) {
        let target = target();
        let back = theta1(&target, &theta1(&target, &x, t).unwrap(), -t).unwrap();
        prop_assert_eq!(&back.q, &x.q);
        prop_assert!(close(&back.v, &x.v, 1e-14));
    }

    #[test]
    fn integrator_is_time_reversible(x in state(), h in 0.005..0.1f64, nd in 1usize..20) {
        let target = target();
        let (y, dh) = chi_multi(&target, &x, h, nd).unwrap();
        let (z, dh_back) = chi_multi(&target, &y.flip_velocity(), h, nd).unwrap();
        let z = z.flip_velocity();
        prop_assert!(close(&z.q, &x.q, 1e-10) && close(&z.v, &x.v, 1e-10));
        prop_assert!((dh + dh_back).abs() < 1e-9);
    }

    #[test]
    fn iota_delta_round_trip(iota in 0.0..0.999f64) {
        prop_assert!((delta_to_iota(iota_to_delta(iota)) - iota).abs() < 1e-12);
    }
}
