//! End-to-end certificates on geometries beyond the acceptance set: biased and
//! asymmetric ground states, S-bends with parallel asymptotes, polynomial
//! curvature and a sharp bend.

use softguide::certifier::*;
use softguide::curvegeom::*;
use softguide::profile1d::*;

fn certified(c: &PlanarCurve, p: &ProfilePotential, case: CaseTag) -> CertificateReport {
    let r = certify(c, p, &Budget::default()).unwrap();
    assert_eq!(r.case_tag, case);
    assert_eq!(r.verdict, Verdict::Certified, "Q = {} err = {}", r.shifted_form, r.quadrature_error_bound);
    assert!(r.shifted_form + r.quadrature_error_bound < 0.0);
    assert!(r.continuity_mismatch < 1e-8);
    assert!(r.precondition_checks.iter().all(|c| c.passed));
    let last = r.trace.last().unwrap();
    assert!(last.certified && last.s0 == r.params.s0 && last.s_star == r.params.s_star);
    r
}

fn well() -> ProfilePotential {
    ProfilePotential::square_well(1.0, 1.0, 0.0).unwrap()
}

#[test]
fn biased_ground_state_on_either_convex_side() {
    let p = ProfilePotential::steps(1.0, &[-1.0, 0.2, 1.0], &[-1.0, -2.0], 0.5).unwrap();
    certified(&arc_bend(0.4, 1.0).unwrap(), &p, CaseTag::T2b);
    certified(&arc_bend(0.4, -1.0).unwrap(), &p, CaseTag::T2b);
}

#[test]
fn asymmetric_ground_state_without_bias() {
    let p = ProfilePotential::steps(1.0, &[-1.0, 0.2, 1.0], &[-1.0, -2.0], 0.0).unwrap();
    certified(&arc_bend(0.4, 1.0).unwrap(), &p, CaseTag::T2b);
}

#[test]
fn s_bends_with_parallel_asymptotes() {
    let sb = PlanarCurve::build(&[PieceSpec::Arc { length: 1.0, kappa: 0.5 }, PieceSpec::Arc { length: 1.0, kappa: -0.5 }])
        .unwrap();
    assert_eq!(sb.asymptotes().kind, AsymptoteKind::ParallelCodirected);
    let r = certified(&sb, &well(), CaseTag::T2a);
    assert!(r.notes.iter().any(|n| n.contains("parallel")));
    let sb2 = PlanarCurve::build(&[
        PieceSpec::Arc { length: 2.0, kappa: 0.4 },
        PieceSpec::Straight { length: 1.0 },
        PieceSpec::Arc { length: 2.0, kappa: -0.4 },
    ])
    .unwrap();
    certified(&sb2, &well(), CaseTag::T2a);
}

#[test]
fn polynomial_curvature_and_sharp_bend() {
    let cl = PlanarCurve::build(&[PieceSpec::Poly { length: 1.0, coeffs: vec![0.0, 0.8] }, PieceSpec::Arc { length: 1.0, kappa: 0.8 }])
        .unwrap();
    certified(&cl, &well(), CaseTag::T2a);
    certified(&arc_bend(0.9, 2.5).unwrap(), &well(), CaseTag::T2a);
}

#[test]
fn weak_bias_is_not_certified_on_the_concave_side() {
    // resonance with bias needs Ω+ convex; turning the other way has no case
    let shape = ProfilePotential::steps(1.0, &[-1.0, 1.0], &[-1.0], 0.3).unwrap();
    let p = shape.scaled(critical_coupling(&shape, 1.0, 100.0).unwrap());
    let e = certify(&arc_bend(0.5, -std::f64::consts::FRAC_PI_2).unwrap(), &p, &Budget::default()).unwrap_err();
    assert!(matches!(e, softguide::Error::UnsupportedCase(_)));
}
