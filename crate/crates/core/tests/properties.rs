use droplet_core::decomposition::{
    decomposed_velocity, kernel_defect, reassembled_velocity, recenter, translation_identity_defect,
    DecomposedState,
};
use droplet_core::dynamics::Model;
use droplet_core::elliptic::{EllipticSolver, ModelParams};
use droplet_core::geometry::{make_shape, BoundaryShape, FourierCoeffs, ReferenceCircle};
use droplet_core::linearization::{assemble_a, assemble_b, assemble_dh0, spectrum};
use droplet_core::scalar::cplx;
use proptest::prelude::*;

fn small_shape(n: usize, amps: &[(f64, f64)]) -> BoundaryShape<f64> {
    let reference = ReferenceCircle::new(1.0, n).unwrap();
    let mut c = FourierCoeffs::zeros(n);
    for (k, (a, b)) in amps.iter().enumerate() {
        let mode = k + 2;
        if mode <= n {
            let decay = 1.0 / (mode * mode) as f64;
            c.set_real_mode(mode, cplx(a * decay, b * decay));
        }
    }
    make_shape(&reference, &c).unwrap()
}

fn amps() -> impl Strategy<Value = Vec<(f64, f64)>> {
    prop::collection::vec((-0.02f64..0.02, -0.02f64..0.02), 1..5)
}

fn model_params() -> impl Strategy<Value = ModelParams<f64>> {
    (0.5f64..2.0, 0.5f64..2.0, 0.0f64..0.5, 0.5f64..2.0)
        .prop_map(|(a, b, mu, v)| ModelParams::new(a, b, mu, v).unwrap())
}

proptest! {
    #![proptest_config(ProptestConfig::with_cases(64))]

    #[test]
    fn dh0_annihilates_translations_and_is_real(p in model_params(), n in 2usize..20) {
        let dh = assemble_dh0(n, &p).unwrap();
        for row in -(n as i64)..=n as i64 {
            prop_assert_eq!(dh.get(row, 1), cplx(0.0, 0.0));
            prop_assert_eq!(dh.get(row, -1), cplx(0.0, 0.0));
        }
        prop_assert_eq!(dh.reality_defect(), 0.0);
        let b = assemble_b(n, &p).unwrap();
        for m in -(n as i64)..=n as i64 {
            prop_assert_eq!(b.get(0, m), cplx(0.0, 0.0));
        }
    }

    #[test]
    fn spectrum_of_a_is_integer_multiples(p in model_params(), n in 2usize..16) {
        let omega = p.omega();
        let s = spectrum(&assemble_a(n, &p).unwrap()).unwrap();
        for z in &s.eigenvalues {
            let k = -z.re / (4.0 * omega);
            prop_assert!((k - k.round()).abs() < 1e-9);
            prop_assert!(z.im.abs() < 1e-12);
        }
        prop_assert_eq!(s.kernel_count, 2);
    }

    #[test]
    fn translating_circle_is_stationary(p in model_params()) {
        let reference = p.reference_circle(12).unwrap();
        let v = Model::new(p).velocity_h(&BoundaryShape::circle(reference)).unwrap();
        for x in &v.values {
            prop_assert!(x.abs() < 1e-11);
        }
    }

    #[test]
    fn volume_constraint_holds(a in amps(), mu in 0.0f64..0.5) {
        let p = ModelParams::default().with_mu(mu);
        let f = EllipticSolver::default().solve_full(&small_shape(16, &a), &p).unwrap();
        prop_assert!((f.volume - p.volume).abs() < 1e-12);
        prop_assert!(f.boundary_residual < 1e-6);
    }

    #[test]
    fn recenter_inverts_translation(zx in -0.05f64..0.05, zy in -0.05f64..0.05, a in amps()) {
        let rb = small_shape(16, &a);
        let state = DecomposedState::new([zx, zy], &rb).unwrap();
        let shape = state.reconstruct().unwrap();
        let back = recenter(&shape).unwrap();
        prop_assert!((back.z[0] - zx).abs() < 1e-9 && (back.z[1] - zy).abs() < 1e-9);
        prop_assert!(kernel_defect(back.rho_bar.coeffs()) <= 1e-12);
        let rebuilt = back.reconstruct().unwrap();
        let err = rebuilt.grid().iter().zip(shape.grid()).fold(0.0f64, |m, (x, y)| m.max((x - y).abs()));
        prop_assert!(err < 1e-9);
    }

    #[test]
    fn contact_slope_is_translation_invariant(zx in -0.03f64..0.03, zy in -0.03f64..0.03, a in amps()) {
        let model = Model::new(ModelParams::default().with_mu(0.1));
        let state = DecomposedState::new([zx, zy], &small_shape(16, &a)).unwrap();
        prop_assert!(translation_identity_defect(&model, &state).unwrap() < 1e-8);
    }

    #[test]
    fn decomposed_velocity_reassembles(a in amps(), mu in 0.0f64..0.2) {
        let model = Model::new(ModelParams::default().with_mu(mu));
        let s = small_shape(16, &a);
        let d = decomposed_velocity(&model, &s).unwrap();
        let reference = s.reference();
        let h = reference.synthesize(&reference.analyze(&d.velocity.values));
        let rebuilt = reassembled_velocity(&s, &d);
        let err = rebuilt.iter().zip(&h).fold(0.0f64, |m, (x, y)| m.max((x - y).abs()));
        prop_assert!(err < 1e-8);
        prop_assert!(kernel_defect(&d.rho_bar_dot) == 0.0);
    }
}
