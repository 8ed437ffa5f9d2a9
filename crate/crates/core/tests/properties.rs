use num_complex::Complex64 as C64;
use proptest::prelude::*;
use rand::SeedableRng;
use rand_chacha::ChaCha8Rng;

use disptorus::diagnostics::{identity_audit, random_audit_fields, AUDIT_TOLERANCE};
use disptorus::operators::{apply_p, nonlinearity_f};
use disptorus::spectral::{CutoffProfile, TorusField, TorusGrid};
use disptorus::system::SystemSpec;
use disptorus::tensor::{check_conditions, derive_s, sample_admissible, sample_generic, CoeffTensor, DEFAULT_TOLERANCE};

fn field(n: usize, len: usize, band: i64, seed: u64) -> TorusField {
    let mut rng = ChaCha8Rng::seed_from_u64(seed);
    TorusField::random_band_limited(n, TorusGrid::new(len).unwrap(), band, &mut rng)
}

proptest! {
    #![proptest_config(ProptestConfig::with_cases(48))]

    #[test]
    fn tensor_json_round_trip(n in 1usize..=3, seed in any::<u64>()) {
        let mut rng = ChaCha8Rng::seed_from_u64(seed);
        let omega = sample_generic(n, &mut rng);
        let back = CoeffTensor::from_json(&omega.to_json().unwrap()).unwrap();
        prop_assert_eq!(back, omega);
    }

    #[test]
    fn field_json_round_trip(n in 1usize..=3, band in 1i64..15, seed in any::<u64>()) {
        let f = field(n, 32, band, seed);
        prop_assert_eq!(TorusField::from_json(&f.to_json().unwrap()).unwrap(), f);
    }

    #[test]
    fn sampled_admissible_tensors_pass(n in 1usize..=3, seed in any::<u64>()) {
        let mut rng = ChaCha8Rng::seed_from_u64(seed);
        let report = check_conditions(&sample_admissible(n, &mut rng), DEFAULT_TOLERANCE).unwrap();
        prop_assert!(report.a_set() && report.b_set() && report.c_set() && report.g_set());
    }

    #[test]
    fn s_tensor_is_real_linear(n in 1usize..=2, seed in any::<u64>(), t in -3.0f64..3.0) {
        let mut rng = ChaCha8Rng::seed_from_u64(seed);
        let (a, b) = (sample_generic(n, &mut rng), sample_generic(n, &mut rng));
        let combo = CoeffTensor::from_fn(n, |k, j, p, q, r| a.get(k, j, p, q, r) + b.get(k, j, p, q, r) * t);
        let (sa, sb, sc) = (derive_s(&a), derive_s(&b), derive_s(&combo));
        for l in 1..=5 {
            for j in 0..n { for p in 0..n { for q in 0..n { for r in 0..n {
                let lhs = sc.get(l, j, p, q, r);
                let rhs = sa.get(l, j, p, q, r) + sb.get(l, j, p, q, r) * t;
                prop_assert!((lhs - rhs).norm() <= 1e-12 * (1.0 + rhs.norm()));
            }}}}
        }
    }

    #[test]
    fn sobolev_norms_increase_with_order(band in 1i64..15, seed in any::<u64>()) {
        let f = field(2, 64, band, seed);
        for m in 0..6 {
            prop_assert!(f.sobolev_norm(m) <= f.sobolev_norm(m + 1) * (1.0 + 1e-14));
        }
    }

    #[test]
    fn mollifier_never_increases_norms(eps in 0.01f64..0.99, seed in any::<u64>()) {
        let f = field(1, 128, 63, seed);
        let g = f.mollify(eps).unwrap();
        for m in 0..=4 {
            prop_assert!(g.sobolev_norm(m) <= f.sobolev_norm(m));
        }
    }

    #[test]
    fn cutoff_profile_is_monotone_and_bounded(a in 0.0f64..3.0, b in 0.0f64..3.0) {
        let (lo, hi) = if a <= b { (a, b) } else { (b, a) };
        let phi = CutoffProfile;
        prop_assert!((0.0..=1.0).contains(&phi.eval(lo)));
        prop_assert!(phi.eval(hi) <= phi.eval(lo));
        prop_assert_eq!(phi.eval(-lo), phi.eval(lo));
    }

    #[test]
    fn nonlinearity_is_cubic_under_scaling(seed in any::<u64>(), t in 0.1f64..3.0) {
        let mut rng = ChaCha8Rng::seed_from_u64(seed);
        let spec = SystemSpec::from_tensor(1.0, sample_admissible(2, &mut rng)).unwrap();
        let q = field(2, 64, 5, seed ^ 1);
        let lhs = nonlinearity_f(&spec, &q.scale_real(t)).unwrap();
        let rhs = nonlinearity_f(&spec, &q).unwrap().scale_real(t.powi(3));
        prop_assert!(lhs.sub(&rhs).l2_norm() <= 1e-12 * rhs.l2_norm().max(1e-300));
    }

    #[test]
    fn p_operators_are_real_linear_in_v(seed in any::<u64>(), kind in 1usize..=5, level in 1usize..=5) {
        let mut rng = ChaCha8Rng::seed_from_u64(seed);
        let s = derive_s(&sample_admissible(2, &mut rng));
        let (q, v, w) = random_audit_fields(2, TorusGrid::new(32).unwrap(), 4, seed);
        let sum = apply_p(&s, kind, level, &q, &v.add(&w.scale_real(2.0))).unwrap();
        let parts = apply_p(&s, kind, level, &q, &v).unwrap()
            .add(&apply_p(&s, kind, level, &q, &w).unwrap().scale_real(2.0));
        prop_assert!(sum.sub(&parts).l2_norm() <= 1e-12 * parts.l2_norm().max(1e-300));
    }

    #[test]
    fn admissible_identity_audit(n in 1usize..=3, seed in any::<u64>()) {
        let mut rng = ChaCha8Rng::seed_from_u64(seed);
        let spec = SystemSpec::from_tensor(1.0, sample_admissible(n, &mut rng)).unwrap();
        let (q, v, w) = random_audit_fields(n, TorusGrid::new(64).unwrap(), 5, seed);
        let audit = identity_audit(&spec, &q, &v, &w, 4).unwrap();
        prop_assert!(audit.max_residual <= AUDIT_TOLERANCE, "{:?}", audit.rows);
    }
}

#[test]
fn plane_waves_have_closed_form_norms() {
    let g = TorusGrid::new(32).unwrap();
    let f = TorusField::plane_wave(1, g, 0, 3, C64::new(0.0, 2.0));
    let l2 = (2.0 * std::f64::consts::PI).sqrt() * 2.0;
    assert!((f.l2_norm() - l2).abs() <= 1e-13);
    // The H¹ weight of mode 3 is 1 + 9.
    assert!((f.sobolev_norm(1) - l2 * 10f64.sqrt()).abs() <= 1e-12);
}
