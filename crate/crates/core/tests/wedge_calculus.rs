use faer::complex_native::c64;
use proptest::prelude::*;
use rand::SeedableRng;
use rand_chacha::ChaCha8Rng;
use wedgefield::wedge::{
    det, left_op, lift_rotation, random_special_unitary, random_unitary, relative_charge,
    sea_inner, DiracSea, GrayZone, WedgeVector,
};
use wedgefield::{Error, Matrix};

fn rng(seed: u64) -> ChaCha8Rng {
    ChaCha8Rng::seed_from_u64(seed)
}

#[test]
fn overlap_of_a_sea_with_itself_is_one() {
    let phi = DiracSea::random(&mut rng(1), 9, 4).unwrap();
    let z = sea_inner(&phi, &phi).unwrap();
    assert!((z.re - 1.0).abs() < 1e-13 && z.im.abs() < 1e-13);
}

#[test]
fn disjoint_basis_seas_are_orthogonal() {
    let a = DiracSea::basis(6, &[0, 1]).unwrap();
    let b = DiracSea::basis(6, &[1, 2]).unwrap();
    assert_eq!(sea_inner(&a, &b).unwrap().norm(), 0.0);
}

#[test]
fn fewer_occupied_modes_carry_negative_charge() {
    let full = DiracSea::basis(10, &[0, 1, 2, 3, 4]).unwrap();
    let hole = DiracSea::basis(10, &[0, 1, 2, 3]).unwrap();
    let extra = DiracSea::basis(10, &[0, 1, 2, 3, 4, 5]).unwrap();
    let g = GrayZone::default();
    assert_eq!(relative_charge(&hole, &full, g).unwrap(), -1);
    assert_eq!(relative_charge(&extra, &full, g).unwrap(), 1);
    assert_eq!(relative_charge(&full, &full, g).unwrap(), 0);
}

#[test]
fn lift_between_seas_of_different_size_is_a_charge_error() {
    let a = DiracSea::basis(6, &[0, 1]).unwrap();
    let b = DiracSea::basis(6, &[0, 1, 2]).unwrap();
    let u = Matrix::identity(6, 6);
    assert!(matches!(
        lift_rotation(&u, &a, &b, 1e-8),
        Err(Error::RelativeChargeNonzero(-1))
    ));
}

#[test]
fn orthogonal_target_is_a_conditioning_error() {
    let a = DiracSea::basis(6, &[0, 1]).unwrap();
    let b = DiracSea::basis(6, &[2, 3]).unwrap();
    let u = Matrix::identity(6, 6);
    assert!(matches!(
        lift_rotation(&u, &a, &b, 1e-8),
        Err(Error::Conditioning { .. })
    ));
}

#[test]
fn non_unitary_left_factor_is_refused() {
    let a = WedgeVector::single(DiracSea::basis(4, &[0]).unwrap());
    let u = Matrix::from_fn(4, 4, |i, j| c64::new(if i == j { 2.0 } else { 0.0 }, 0.0));
    assert!(matches!(left_op(&u, &a), Err(Error::NotUnitary(_))));
}

proptest! {
    #![proptest_config(ProptestConfig::with_cases(64))]

    #[test]
    fn overlaps_are_bounded_and_conjugate_symmetric(seed in any::<u64>(), n in 2usize..9, m in 1usize..4) {
        prop_assume!(m < n);
        let mut r = rng(seed);
        let a = DiracSea::random(&mut r, n, m).unwrap();
        let b = DiracSea::random(&mut r, n, m).unwrap();
        let ab = sea_inner(&a, &b).unwrap();
        let ba = sea_inner(&b, &a).unwrap();
        prop_assert!((ab - ba.conj()).norm() < 1e-13);
        prop_assert!(ab.norm() <= 1.0 + 1e-12);
    }

    #[test]
    fn unitaries_preserve_overlaps(seed in any::<u64>(), n in 2usize..9, m in 1usize..4) {
        prop_assume!(m < n);
        let mut r = rng(seed);
        let a = WedgeVector::single(DiracSea::random(&mut r, n, m).unwrap());
        let b = WedgeVector::single(DiracSea::random(&mut r, n, m).unwrap());
        let u = random_unitary(&mut r, n);
        let before = a.inner(&b).unwrap();
        let after = left_op(&u, &a).unwrap().inner(&left_op(&u, &b).unwrap()).unwrap();
        prop_assert!((before - after).norm() < 1e-12);
    }

    #[test]
    fn special_unitaries_have_unit_determinant(seed in any::<u64>(), m in 1usize..6) {
        let s = random_special_unitary(&mut rng(seed), m);
        prop_assert!((det(&s) - wedgefield::C64::new(1.0, 0.0)).norm() < 1e-12);
    }
}
