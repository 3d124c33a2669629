//! Cross-checks of the stencil code against explicitly assembled matrices.

mod common;

use nalgebra::DVector;
use pvb::{operator_norm, pv, Image, JetField, NormChoice, OperatorSpec};
use pvb_oracle::{dense_assemble, dense_operator_norm, randomized_pv_lower_bound, OracleError};
use rand::Rng;

fn field_from(v: &DVector<f64>, w: usize, h: usize, k: usize) -> JetField {
    JetField::new(w, h, k, v.as_slice().to_vec()).unwrap()
}

#[test]
fn zero_blocks_assemble_to_zero() {
    let m = dense_assemble(&OperatorSpec::zeros(2).unwrap(), 3, 3).unwrap();
    assert_eq!(m.shape(), (6 * 9, 9));
    assert!(m.iter().all(|&v| v == 0.0));
}

#[test]
fn two_by_two_gradient_matrix_by_hand() {
    // pixels 0 1 / 2 3; rows pixel-major (∂x, ∂y)
    #[rustfmt::skip]
    let expected = [
        -1.0, 1.0, 0.0, 0.0,   // p0 ∂x
        -1.0, 0.0, 1.0, 0.0,   // p0 ∂y
         0.0, 0.0, 0.0, 0.0,   // p1 ∂x (last column)
         0.0,-1.0, 0.0, 1.0,   // p1 ∂y
         0.0, 0.0,-1.0, 1.0,   // p2 ∂x
         0.0, 0.0, 0.0, 0.0,   // p2 ∂y (last row)
         0.0, 0.0, 0.0, 0.0,
         0.0, 0.0, 0.0, 0.0,
    ];
    let m = dense_assemble(&OperatorSpec::identity(1).unwrap(), 2, 2).unwrap();
    assert_eq!(m.shape(), (8, 4));
    for r in 0..8 {
        for c in 0..4 {
            assert_eq!(m[(r, c)], expected[r * 4 + c], "entry ({r}, {c})");
        }
    }
}

#[test]
fn matvec_matches_apply_and_transpose_matches_adjoint() {
    let mut rng = common::rng(31);
    for d in 1..=3 {
        let spec = common::random_spec(&mut rng, d);
        let (w, h) = (5, 4);
        let k = spec.channels();
        let m = dense_assemble(&spec, w, h).unwrap();
        let mt = m.transpose();
        for _ in 0..100 {
            let u = common::random_image(&mut rng, w, h);
            let dense = &m * DVector::from_column_slice(u.values());
            let applied = spec.apply(&u);
            for (a, b) in dense.iter().zip(applied.values()) {
                assert!((a - b).abs() <= 1e-12, "d={d}");
            }
        }
        for _ in 0..20 {
            let v = DVector::from_fn(k * w * h, |_, _| rng.random_range(-1.0..1.0));
            let dense = &mt * &v;
            let adj = spec.adjoint(&field_from(&v, w, h, k)).unwrap();
            for (a, b) in dense.iter().zip(adj.values()) {
                assert!((a - b).abs() <= 1e-12, "d={d}");
            }
        }
    }
}

#[test]
fn size_cap() {
    let spec = OperatorSpec::identity(1).unwrap();
    assert!(matches!(
        dense_assemble(&spec, 17, 16),
        Err(OracleError::TooLarge(272))
    ));
}

#[test]
fn gradient_norm_bound() {
    let spec = OperatorSpec::identity(1).unwrap();
    let l = operator_norm(&spec, 16, 16).unwrap();
    assert!((2.6..=2.8569).contains(&l), "{l}");
    for n in [4, 8] {
        let exact = dense_operator_norm(&spec, n, n).unwrap();
        assert!(exact <= 8f64.sqrt() + 1e-12);
        let est = operator_norm(&spec, n, n).unwrap();
        assert!(
            est >= exact && est <= 1.01 * exact + 1e-12,
            "{n}: {est} vs {exact}"
        );
    }
    assert_eq!(
        operator_norm(&OperatorSpec::zeros(1).unwrap(), 8, 8).unwrap(),
        0.0
    );
}

#[test]
fn operator_norm_of_random_specs_within_one_percent() {
    let mut rng = common::rng(32);
    for d in 1..=2 {
        for _ in 0..5 {
            let spec = common::random_spec(&mut rng, d);
            let exact = dense_operator_norm(&spec, 8, 8).unwrap();
            let est = operator_norm(&spec, 8, 8).unwrap();
            assert!(
                est >= exact && est <= 1.01 * exact + 1e-12,
                "{est} vs {exact}"
            );
        }
    }
}

#[test]
fn randomized_lower_bound() {
    let spec = OperatorSpec::identity(1).unwrap();
    let c = Image::constant(6, 6, 0.4).unwrap();
    assert!(
        randomized_pv_lower_bound(&spec, &c, NormChoice::L2, 10, 1)
            .unwrap()
            .abs()
            <= 1e-12
    );

    let mut rng = common::rng(33);
    let img = common::smooth_image(&mut rng, 10);
    for norm in [NormChoice::L1, NormChoice::L2, NormChoice::LInf] {
        let value = pv(&spec, &img, norm);
        let analytic = randomized_pv_lower_bound(&spec, &img, norm, 0, 2).unwrap();
        assert!((analytic - value).abs() <= 1e-10 * value);
        let lower = randomized_pv_lower_bound(&spec, &img, norm, 1000, 3).unwrap();
        assert!(lower <= value + 1e-9 && lower >= 0.5 * value);
    }
}

#[test]
fn certificates_from_random_feasible_fields() {
    let mut rng = common::rng(34);
    for norm in [NormChoice::L1, NormChoice::L2, NormChoice::LInf] {
        let spec = common::random_spec(&mut rng, 2);
        let img = common::random_image(&mut rng, 6, 6);
        let value = pv(&spec, &img, norm);
        for _ in 0..1000 {
            let v = pvb_oracle::random_feasible_field(6, 6, spec.channels(), norm, &mut rng);
            assert!(pvb::dual_certificate(&spec, &img, &v, norm).unwrap() <= value + 1e-9);
        }
    }
}

#[test]
fn empirical_pv_continuity() {
    // |PV_a(u) − PV_b(u)| ≤ c·min(PV_a(u), PV_b(u)) on smooth images, P = 2
    let mut rng = common::rng(35);
    for _ in 0..50 {
        let a = common::random_shear(&mut rng);
        let b = common::random_shear(&mut rng);
        let c = OperatorSpec::continuity_modulus(&a, &b, 2.0).unwrap();
        let u = common::smooth_image(&mut rng, 12);
        let (pa, pb) = (pv(&a, &u, NormChoice::L2), pv(&b, &u, NormChoice::L2));
        assert!((pa - pb).abs() <= c * pa.min(pb) + 1e-12, "{pa} {pb} {c}");
    }
}
