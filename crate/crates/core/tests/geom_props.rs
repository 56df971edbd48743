use coopload::geom::{attitude_error, exp_so3, hat, is_rotation, link_error, log_so3, orthogonality_defect, reproject, vee, Mat3, Vec3};
use proptest::prelude::*;

fn vec3(bound: f64) -> impl Strategy<Value = Vec3> {
    prop::array::uniform3(-bound..bound).prop_map(Vec3::from)
}

fn unit3() -> impl Strategy<Value = Vec3> {
    vec3(1.0).prop_filter("away from zero", |v| v.norm() > 1e-2).prop_map(|v| v.normalize())
}

fn rotation() -> impl Strategy<Value = Mat3> {
    (unit3(), 0.0..std::f64::consts::PI).prop_map(|(a, t)| exp_so3(&(a * t)))
}

proptest! {
    #[test]
    fn hat_vee_round_trip(v in vec3(10.0)) {
        prop_assert_eq!(vee(&hat(&v)).unwrap(), v);
        prop_assert!((hat(&v) + hat(&v).transpose()).norm() == 0.0);
    }

    #[test]
    fn hat_is_the_cross_product(a in vec3(10.0), b in vec3(10.0)) {
        prop_assert!((hat(&a) * b - a.cross(&b)).norm() <= 1e-12 * (1.0 + a.norm() * b.norm()));
    }

    #[test]
    fn unit_hat_cubed_is_minus_hat(q in unit3()) {
        let h = hat(&q);
        prop_assert!((h * h * h + h).norm() < 1e-12);
        prop_assert!((Mat3::identity() + h * h - q * q.transpose()).norm() < 1e-12);
    }

    #[test]
    fn exp_lands_on_so3_and_log_inverts(w in vec3(3.0)) {
        let r = exp_so3(&w);
        prop_assert!(is_rotation(&r, 1e-12));
        if w.norm() < std::f64::consts::PI - 1e-3 {
            prop_assert!((log_so3(&r) - w).norm() < 1e-9);
        }
    }

    #[test]
    fn attitude_error_norm_identity(r in rotation(), rd in rotation()) {
        let e = attitude_error(&r, &rd, &Vec3::zeros(), &Vec3::zeros());
        prop_assert!(e.psi >= -1e-15 && e.psi <= 2.0 + 1e-15);
        prop_assert!((e.e_r.norm_squared() - e.psi * (2.0 - e.psi)).abs() < 1e-12);
        // Ψ = ½ tr(I − R_dᵀR) = ¼‖R − R_d‖²_F
        prop_assert!((e.psi - 0.25 * (r - rd).norm_squared()).abs() < 1e-12);
    }

    #[test]
    fn link_error_identities(q in unit3(), qd in unit3()) {
        let e = link_error(&q, &qd, &Vec3::zeros(), &Vec3::zeros());
        prop_assert!((e.psi - 0.5 * (q - qd).norm_squared()).abs() < 1e-12);
        prop_assert!((e.e_q.norm_squared() - e.psi * (2.0 - e.psi)).abs() < 1e-12);
    }

    #[test]
    fn reproject_is_idempotent(r in rotation(), q in unit3(), w in vec3(3.0), noise in vec3(1e-3), scale in 0.8..1.2f64) {
        let drifted = r + hat(&noise) * 0.5 + Mat3::identity() * noise.x;
        let (r1, q1, w1) = reproject(&drifted, &(q * scale), &w).unwrap();
        prop_assert!(orthogonality_defect(&r1) < 1e-12);
        prop_assert!((q1.norm() - 1.0).abs() < 1e-15);
        prop_assert!(w1.dot(&q1).abs() < 1e-12);
        let (r2, q2, w2) = reproject(&r1, &q1, &w1).unwrap();
        prop_assert!((r2 - r1).norm() < 1e-14);
        prop_assert!((q2 - q1).norm() < 1e-15);
        prop_assert!((w2 - w1).norm() < 1e-13);
    }
}
