use std::f64::consts::{PI, TAU};

use gabor_core::flow::{chi, integrate_flow, BumpSpec, TruncatedHamiltonian};
use gabor_core::lattice::{
    classify_points, count_in_ellipsoid, deform_point_set, distance_to_ellipsoid, max_safe_epsilon,
    points_within, DEFAULT_EPS_MAX,
};
use gabor_core::quantum::{gaussian_packet, heisenberg};
use gabor_core::symplectic::{flow_matrix, symplectic_defect};
use gabor_core::{c64, Ellipsoid, GridSpec, PhasePoint, PointSet, QuadraticHamiltonian};
use nalgebra::DMatrix;
use proptest::prelude::*;

/// `AAᵀ + cI` from raw entries.
fn pd_matrix(n: usize, raw: &[f64], shift: f64) -> DMatrix<f64> {
    let a = DMatrix::from_iterator(2 * n, 2 * n, raw.iter().copied());
    &a * a.transpose() + DMatrix::identity(2 * n, 2 * n) * shift
}

fn hamiltonian() -> impl Strategy<Value = QuadraticHamiltonian> {
    (1usize..=2)
        .prop_flat_map(|n| {
            (
                Just(n),
                prop::collection::vec(-1.0..1.0f64, 4 * n * n),
                0.2..2.0f64,
            )
        })
        .prop_map(|(n, raw, c)| QuadraticHamiltonian::new(pd_matrix(n, &raw, c)).unwrap())
}

fn max_abs(m: &DMatrix<f64>) -> f64 {
    m.iter().fold(0.0, |a: f64, v| a.max(v.abs()))
}

fn planar_set(coords: Vec<(f64, f64)>) -> Option<PointSet> {
    let pts: Vec<PhasePoint> = coords
        .into_iter()
        .map(|(x, p)| PhasePoint::planar(x, p))
        .collect();
    PointSet::from_points(1, pts).ok()
}

proptest! {
    #![proptest_config(ProptestConfig::with_cases(128))]

    #[test]
    fn flows_are_symplectic(h in hamiltonian(), t in -10.0..10.0f64) {
        let s = flow_matrix(&h, t).unwrap();
        prop_assert!(symplectic_defect(s.matrix()).unwrap() <= 1e-9);
    }

    #[test]
    fn flows_form_a_group(h in hamiltonian(), t in -10.0..10.0f64, s in -10.0..10.0f64) {
        let a = flow_matrix(&h, t).unwrap();
        let b = flow_matrix(&h, s).unwrap();
        let ab = flow_matrix(&h, t + s).unwrap();
        let scale = max_abs(ab.matrix()).max(1.0);
        prop_assert!(max_abs(&(a.compose(&b).matrix() - ab.matrix())) <= 1e-9 * scale);
        let back = flow_matrix(&h, -t).unwrap();
        let scale = max_abs(back.matrix()).max(1.0);
        prop_assert!(max_abs(&(back.matrix() - a.inverse().matrix())) <= 1e-9 * scale);
    }

    #[test]
    fn flows_conserve_energy(h in hamiltonian(), t in -10.0..10.0f64, raw in prop::collection::vec(-3.0..3.0f64, 4)) {
        let z = PhasePoint::new(raw[..2 * h.dof()].to_vec()).unwrap();
        let zt = flow_matrix(&h, t).unwrap().apply(&z);
        let e = h.energy(&z);
        prop_assert!((h.energy(&zt) - e).abs() <= 1e-9 * (1.0 + e.abs()));
    }

    #[test]
    fn classification_partitions(
        coords in prop::collection::vec((-4.0..4.0f64, -4.0..4.0f64), 1..60),
        h in hamiltonian().prop_filter("planar", |h| h.dof() == 1),
        e in 0.1..5.0f64,
    ) {
        let Some(p) = planar_set(coords) else { return Ok(()) };
        let ell = Ellipsoid::new(h, e).unwrap();
        let c = classify_points(&p, &ell, 1e-9).unwrap();
        let mut all: Vec<usize> = c.interior.iter().chain(&c.boundary).chain(&c.exterior).copied().collect();
        all.sort_unstable();
        prop_assert_eq!(all, (0..p.len()).collect::<Vec<_>>());
        // random energies are never exactly on a point, so F counts H ≤ E
        prop_assert_eq!(c.enclosed().len(), count_in_ellipsoid(&p, &ell).unwrap());
    }

    #[test]
    fn safe_epsilon_thickening(
        coords in prop::collection::vec((-4.0..4.0f64, -4.0..4.0f64), 2..40),
        h in hamiltonian().prop_filter("planar", |h| h.dof() == 1),
        e in 0.1..5.0f64,
        fracs in prop::collection::vec(0.0..1.0f64, 100),
    ) {
        let Some(p) = planar_set(coords) else { return Ok(()) };
        let ell = Ellipsoid::new(h, e).unwrap();
        let tol = 1e-9;
        let eps_star = max_safe_epsilon(&p, &ell, tol, DEFAULT_EPS_MAX).unwrap();
        for f in fracs {
            let eps = f * eps_star;
            for z in p.points() {
                if distance_to_ellipsoid(z, &ell).unwrap().distance <= eps && eps < eps_star {
                    prop_assert!((ell.value(z) - e).abs() <= tol * e);
                }
            }
            prop_assert!(eps >= eps_star || points_within(&p, &ell, tol, eps).unwrap().is_empty());
        }
    }

    #[test]
    fn distance_vanishes_exactly_on_sigma(
        h in hamiltonian(),
        e in 0.1..5.0f64,
        raw in prop::collection::vec(-1.0..1.0f64, 4),
        bump in -1e-9..1e-9f64,
    ) {
        let ell = Ellipsoid::new(h.clone(), e).unwrap();
        let v = PhasePoint::new(raw[..2 * h.dof()].to_vec()).unwrap();
        prop_assume!(v.norm() > 1e-3);
        // scale onto a level set near Σ
        let hv = h.energy(&v);
        let target = e * (1.0 + bump);
        let z = PhasePoint::from_vector(&(v.to_vector() * (target / hv).sqrt()));
        let d = distance_to_ellipsoid(&z, &ell).unwrap().distance;
        prop_assert_eq!(d == 0.0, (ell.value(&z) - e).abs() <= 1e-10 * e);
    }

    #[test]
    fn deformation_keeps_exterior_and_energy(
        coords in prop::collection::vec((-4.0..4.0f64, -4.0..4.0f64), 1..60),
        h in hamiltonian().prop_filter("planar", |h| h.dof() == 1),
        e in 0.1..5.0f64,
        t in -5.0..5.0f64,
    ) {
        let Some(p) = planar_set(coords) else { return Ok(()) };
        let ell = Ellipsoid::new(h, e).unwrap();
        let c = classify_points(&p, &ell, 1e-9).unwrap();
        let d = deform_point_set(&p, &ell, t, 1e-9).unwrap();
        prop_assert_eq!(d.points.len(), p.len());
        for &i in &c.exterior {
            let a = d.points.points()[i].coords();
            let b = p.points()[i].coords();
            prop_assert!(a.iter().zip(b).all(|(x, y)| x.to_bits() == y.to_bits()));
        }
        for &i in &d.moved {
            let before = ell.value(&p.points()[i]);
            let after = ell.value(&d.points.points()[i]);
            prop_assert!((after - before).abs() <= 1e-9 * before.max(1e-300) + 1e-15);
        }
    }

    #[test]
    fn heisenberg_is_unitary_and_invertible(q in -3.0..3.0f64, p in -3.0..3.0f64) {
        let g = GridSpec::centered(256, 12.0, 1.0 / TAU).unwrap();
        let psi = gaussian_packet(c64::new(0.2, 1.3), &PhasePoint::planar(0.4, -0.7), &g).unwrap();
        let z = PhasePoint::planar(q, p);
        let moved = heisenberg(&z, &psi, &g).unwrap();
        prop_assert!((moved.norm(&g) - psi.norm(&g)).abs() <= 1e-12);
        let back = heisenberg(&z.neg(), &moved, &g).unwrap();
        prop_assert!(back.distance(&psi, &g) <= 1e-10);
    }
}

fn unit_circle_bump() -> TruncatedHamiltonian {
    let ell = Ellipsoid::new(QuadraticHamiltonian::isotropic(1).unwrap(), 0.5).unwrap();
    TruncatedHamiltonian::new(BumpSpec::new(ell, 0.3).unwrap())
}

proptest! {
    #![proptest_config(ProptestConfig::with_cases(1000))]

    #[test]
    fn exterior_starts_never_move(r in 1.3..10.0f64, th in 0.0..TAU, t in -10.0..10.0f64) {
        let th_ = unit_circle_bump();
        let z = PhasePoint::planar(r * th.cos(), r * th.sin());
        let out = integrate_flow(&z, &th_, t, 1e-3).unwrap();
        prop_assert!(out.coords().iter().zip(z.coords()).all(|(a, b)| a.to_bits() == b.to_bits()));
    }
}

proptest! {
    #![proptest_config(ProptestConfig::with_cases(24))]

    #[test]
    fn interior_starts_follow_the_linear_flow(r in 0.0..1.0f64, th in 0.0..TAU, t in -TAU..TAU) {
        let bump = unit_circle_bump();
        let z = PhasePoint::planar(r * th.cos(), r * th.sin());
        let out = integrate_flow(&z, &bump, t, 1e-3).unwrap();
        let exact = flow_matrix(bump.bump().ellipsoid().hamiltonian(), t).unwrap().apply(&z);
        prop_assert!(out.distance(&exact) <= 1e-6);
    }

    #[test]
    fn truncated_energy_is_conserved(r in 0.0..1.6f64, th in 0.0..TAU, t in -TAU..TAU) {
        let bump = unit_circle_bump();
        // keep clear of the edges of the transition shell
        let s = (r - 1.0).max(0.0);
        prop_assume!(!(0.15 - 1e-3..=0.3 + 1e-3).contains(&s));
        let z = PhasePoint::planar(r * th.cos(), r * th.sin());
        let out = integrate_flow(&z, &bump, t, 1e-3).unwrap();
        let (a, b) = (bump.value(&z).unwrap(), bump.value(&out).unwrap());
        prop_assert!((a - b).abs() <= 1e-6 * (1.0 + a.abs()));
    }

    #[test]
    fn chi_decreases_outward(th in 0.0..PI, a in 0.5..2.0f64, b in 0.5..2.0f64) {
        let h = QuadraticHamiltonian::from_diagonal(&[a, b]).unwrap();
        let bump = BumpSpec::new(Ellipsoid::new(h, 0.7).unwrap(), 0.4).unwrap();
        let mut prev = 1.0;
        for k in 0..300 {
            let r = 0.5 + k as f64 * 0.01;
            let c = chi(&PhasePoint::planar(r * th.cos(), r * th.sin()), &bump).unwrap();
            prop_assert!(c <= prev + 1e-15);
            prev = c;
        }
    }
}
