use std::f64::consts::{FRAC_1_SQRT_2, FRAC_PI_2, PI};

use nalgebra::Matrix4;
use num_complex::Complex64 as C;
use qqm_core::correlations::{
    cqm_reference, deviation_scan, expectation, ghsz_state, loop_holonomy, pauli, singlet_state, site_polygon,
    transport, transport_from, Analyzer, CorrelationModel, EtaField, FieldFamily, Interpolation, MultiParticleState,
    SampledGrid, Site, DEFAULT_STEP,
};
use qqm_core::quat::{Quaternion, UnitImaginary, UnitQuaternion};
use qqm_core::vec3::{self, Vec3};
use rand::{Rng, SeedableRng};
use rand_chacha::ChaCha8Rng;

fn random_unit(rng: &mut ChaCha8Rng) -> Vec3 {
    loop {
        let v = [rng.random_range(-1.0..1.0), rng.random_range(-1.0..1.0), rng.random_range(-1.0..1.0)];
        let n = vec3::norm(&v);
        if n > 1e-3 && n <= 1.0 {
            return vec3::scale(&v, 1.0 / n);
        }
    }
}

fn random_axis(rng: &mut ChaCha8Rng) -> UnitImaginary {
    UnitImaginary::new(random_unit(rng)).unwrap()
}

/// Complex 2×2 image of `q = z + w i2` with `z, w` in the `i1` plane.
fn embed(q: Quaternion) -> [[C; 2]; 2] {
    let z = C::new(q.a0, q.a1);
    let w = C::new(q.a2, q.a3);
    [[z, w], [-w.conj(), z.conj()]]
}

fn embed_matrix(m: &qqm_core::PauliMatrix2Q) -> Matrix4<C> {
    let mut out = Matrix4::<C>::zeros();
    for i in 0..2 {
        for j in 0..2 {
            let b = embed(m.entry(i, j));
            for a in 0..2 {
                for c in 0..2 {
                    out[(2 * i + a, 2 * j + c)] = b[a][c];
                }
            }
        }
    }
    out
}

fn planar_sites(n: usize) -> Vec<Site> {
    (1..=n).map(|j| Site::new(j, [j as f64, (j * j) as f64 * 0.1, 0.0])).collect()
}

fn solid_angle(a: Vec3, b: Vec3, c: Vec3) -> f64 {
    let num = vec3::dot(&a, &vec3::cross(&b, &c)).abs();
    let den = 1.0 + vec3::dot(&a, &b) + vec3::dot(&b, &c) + vec3::dot(&c, &a);
    2.0 * num.atan2(den)
}

fn random_field(rng: &mut ChaCha8Rng) -> EtaField {
    match rng.random_range(0..4) {
        0 => EtaField::Hedgehog { center: std::array::from_fn(|_| rng.random_range(-0.5..0.5)) },
        1 => EtaField::SmoothTwist { tau: rng.random_range(-2.0..2.0) },
        2 => FieldFamily::HedgehogBlend.field(rng.random_range(0.0..1.0)),
        _ => EtaField::Hedgehog { center: [0.0; 3] }.rotated(UnitQuaternion::from_axis_angle(random_axis(rng), 1.0)),
    }
}

fn random_path(rng: &mut ChaCha8Rng, from: Vec3, to: Vec3) -> Vec<Vec3> {
    let mut p = vec![from];
    for _ in 0..rng.random_range(0..3) {
        p.push(std::array::from_fn(|_| rng.random_range(-2.0..2.0)));
    }
    p.push(to);
    p
}

#[test]
fn embedding_is_a_homomorphism() {
    let mut rng = ChaCha8Rng::seed_from_u64(9);
    for _ in 0..100 {
        let a = Quaternion::new(rng.random(), rng.random(), rng.random(), rng.random());
        let b = Quaternion::new(rng.random(), rng.random(), rng.random(), rng.random());
        let (ea, eb, eab) = (embed(a), embed(b), embed(a * b));
        for i in 0..2 {
            for j in 0..2 {
                let prod = ea[i][0] * eb[0][j] + ea[i][1] * eb[1][j];
                assert!((prod - eab[i][j]).norm() < 1e-14);
            }
        }
    }
}

#[test]
fn pauli_eigenvalues_are_plus_minus_one() {
    let mut rng = ChaCha8Rng::seed_from_u64(10);
    for _ in 0..100 {
        let p = pauli(random_unit(&mut rng), random_axis(&mut rng));
        let m = embed_matrix(&p);
        assert!((m - m.adjoint()).norm() < 1e-14);
        let mut ev: Vec<f64> = m.symmetric_eigen().eigenvalues.iter().copied().collect();
        ev.sort_by(|a, b| a.partial_cmp(b).unwrap());
        for (got, want) in ev.iter().zip([-1.0, -1.0, 1.0, 1.0]) {
            assert!((got - want).abs() < 1e-12, "{ev:?}");
        }
    }
}

#[test]
fn cqm_reference_hand_formulas() {
    let sites = planar_sites(4);
    let grid = [-PI / 2.0, -0.7, 0.0, 1.1, PI];
    for &p1 in &grid {
        for &p2 in &grid {
            let phis = [p1, p2, 0.0, 0.0];
            let an: Vec<Analyzer> = sites.iter().zip(phis).map(|(s, p)| Analyzer::planar(*s, p)).collect();
            let want = -(p1 + p2).cos();
            assert!((cqm_reference(&ghsz_state(), &an).unwrap() - want).abs() < 1e-12);
        }
    }
    let mut rng = ChaCha8Rng::seed_from_u64(11);
    let two = planar_sites(2);
    for _ in 0..100 {
        let (a, b) = (random_unit(&mut rng), random_unit(&mut rng));
        let an = [Analyzer::new(two[0], a).unwrap(), Analyzer::new(two[1], b).unwrap()];
        assert!((cqm_reference(&singlet_state(), &an).unwrap() + vec3::dot(&a, &b)).abs() < 1e-12);
    }
    let up = MultiParticleState::product(&[false; 4]).unwrap();
    let an: Vec<Analyzer> = sites.iter().map(|s| Analyzer::new(*s, [0.0, 0.0, 1.0]).unwrap()).collect();
    assert_eq!(cqm_reference(&up, &an).unwrap(), 1.0);
}

#[test]
fn ghsz_constant_field_both_models_on_grid() {
    let sites = planar_sites(4);
    let field = EtaField::constant(UnitImaginary::I1);
    let transported = CorrelationModel::straight(2, &sites, 0.05).unwrap();
    let grid = [-2.0, -0.5, 0.0, 0.9, 2.5];
    for &p1 in &grid {
        for &p2 in &grid {
            let phis = [p1, p2, 0.3, -0.4];
            let an: Vec<Analyzer> = sites.iter().zip(phis).map(|(s, p)| Analyzer::planar(*s, p)).collect();
            let want = cqm_reference(&ghsz_state(), &an).unwrap();
            assert!((want + (p1 + p2 - 0.3 + 0.4).cos()).abs() < 1e-12);
            for model in [&CorrelationModel::Local, &transported] {
                assert!((expectation(&ghsz_state(), &an, &field, model).unwrap().value - want).abs() < 1e-10);
            }
        }
    }
}

#[test]
fn z_analyzers_are_field_independent() {
    let mut rng = ChaCha8Rng::seed_from_u64(12);
    let sites = planar_sites(4);
    let an: Vec<Analyzer> = sites.iter().map(|s| Analyzer::new(*s, [0.0, 0.0, 1.0]).unwrap()).collect();
    for _ in 0..20 {
        let field = random_field(&mut rng);
        let b = CorrelationModel::straight(1, &sites, 0.05).unwrap();
        for model in [&CorrelationModel::Local, &b] {
            let e = expectation(&ghsz_state(), &an, &field, model).unwrap();
            assert!((e.value - 1.0).abs() < 1e-12);
            assert!(e.full.imag().iter().all(|x| x.abs() < 1e-12));
        }
    }
}

#[test]
fn local_model_singlet_closed_form() {
    let mut rng = ChaCha8Rng::seed_from_u64(13);
    for _ in 0..200 {
        let (e1, e2) = (random_axis(&mut rng), random_axis(&mut rng));
        let grid =
            SampledGrid::new([0.0; 3], 1.0, [2, 1, 1], vec![e1.vector(), e2.vector()], Interpolation::Nearest).unwrap();
        let field = EtaField::Sampled(grid);
        let s = [Site::new(1, [0.0; 3]), Site::new(2, [1.0, 0.0, 0.0])];
        let (a, b) = (random_unit(&mut rng), random_unit(&mut rng));
        let an = [Analyzer::new(s[0], a).unwrap(), Analyzer::new(s[1], b).unwrap()];
        let e = expectation(&singlet_state(), &an, &field, &CorrelationModel::Local).unwrap().value;
        let want = -a[0] * b[0] - a[2] * b[2] - e1.dot(&e2) * a[1] * b[1];
        assert!((e - want).abs() < 1e-10, "{e} vs {want}");
    }
}

#[test]
fn transported_model_hides_two_body_deviation() {
    let mut rng = ChaCha8Rng::seed_from_u64(14);
    for _ in 0..25 {
        let field = random_field(&mut rng);
        let p1: Vec3 = std::array::from_fn(|_| rng.random_range(-2.0..2.0));
        let p2: Vec3 = std::array::from_fn(|_| rng.random_range(-2.0..2.0));
        let sites = [Site::new(1, p1), Site::new(2, p2)];
        let base = rng.random_range(1..=2);
        let origin = sites[base - 1].position;
        let paths = sites
            .iter()
            .map(|s| if s.index == base { vec![origin] } else { random_path(&mut rng, origin, s.position) })
            .collect();
        let model = CorrelationModel::Transported { base, paths, step: 0.01 };
        for _ in 0..25 {
            let (a, b) = (random_unit(&mut rng), random_unit(&mut rng));
            let an = [Analyzer::new(sites[0], a).unwrap(), Analyzer::new(sites[1], b).unwrap()];
            let e = expectation(&singlet_state(), &an, &field, &model).unwrap().value;
            assert!((e + vec3::dot(&a, &b)).abs() < 1e-10, "{e} vs {}", -vec3::dot(&a, &b));
        }
    }
}

#[test]
fn global_conjugation_leaves_expectation_unchanged() {
    let mut rng = ChaCha8Rng::seed_from_u64(15);
    let sites = planar_sites(4);
    for _ in 0..30 {
        let field = random_field(&mut rng);
        let q = UnitQuaternion::from_axis_angle(random_axis(&mut rng), rng.random_range(-PI..PI));
        let rotated = field.clone().rotated(q);
        let an: Vec<Analyzer> = sites
            .iter()
            .map(|s| Analyzer::from_angles(*s, rng.random_range(-PI..PI), rng.random_range(0.0..PI)))
            .collect();
        let b = CorrelationModel::straight(3, &sites, 0.02).unwrap();
        for model in [&CorrelationModel::Local, &b] {
            let e0 = expectation(&ghsz_state(), &an, &field, model).unwrap().value;
            let e1 = expectation(&ghsz_state(), &an, &rotated, model).unwrap().value;
            assert!((e0 - e1).abs() < 1e-10, "{model:?}: {e0} vs {e1}");
        }
    }
}

#[test]
fn expectation_is_bounded() {
    let mut rng = ChaCha8Rng::seed_from_u64(16);
    let sites = planar_sites(4);
    for _ in 0..200 {
        let field = random_field(&mut rng);
        let an: Vec<Analyzer> = sites.iter().map(|s| Analyzer::new(*s, random_unit(&mut rng)).unwrap()).collect();
        let b = CorrelationModel::straight(1, &sites, 0.05).unwrap();
        for model in [&CorrelationModel::Local, &b] {
            let e = expectation(&ghsz_state(), &an, &field, model).unwrap().value;
            assert!(e.abs() <= 1.0 + 1e-10, "{e}");
        }
    }
}

#[test]
fn transport_properties() {
    let hedgehog = EtaField::hedgehog();
    // quarter circle in the x–y plane
    let arc: Vec<Vec3> = (0..=64)
        .map(|i| {
            let t = FRAC_PI_2 * i as f64 / 64.0;
            [t.cos(), t.sin(), 0.0]
        })
        .collect();
    let q = transport(&hedgehog, &arc, 1e-3).unwrap();
    assert!(q.rotate(hedgehog.eta(arc[0])).dot(&hedgehog.eta(arc[64])) > 1.0 - 1e-12);
    // geodesic arc: pure rotation about i3 by π/2
    assert!((q.signed_angle_about(UnitImaginary::I3) - FRAC_PI_2).abs() < 1e-8);

    let c = EtaField::constant(UnitImaginary::new([1.0, -2.0, 0.5]).unwrap());
    assert_eq!(transport(&c, &arc, 1e-2).unwrap(), UnitQuaternion::IDENTITY);

    // concatenation equals continuation
    let twist = EtaField::SmoothTwist { tau: 1.3 };
    let p1 = [[0.0, 0.0, 0.0], [1.0, 0.5, 0.0], [0.2, 1.4, 0.3]];
    let p2 = [[0.2, 1.4, 0.3], [-0.6, 0.9, 0.0], [0.0, -0.3, 0.2]];
    let mut whole = p1.to_vec();
    whole.extend_from_slice(&p2[1..]);
    let h = 0.01;
    let a = transport(&twist, &whole, h).unwrap();
    let b = transport_from(&twist, &p2, h, transport(&twist, &p1, h).unwrap());
    assert_eq!(a, b);
    let c2 = transport(&twist, &p2, h).unwrap() * transport(&twist, &p1, h).unwrap();
    assert!(a.quaternion().max_abs_diff(&c2.quaternion()) < 1e-12);
}

#[test]
fn transport_converges_under_refinement() {
    let field = EtaField::SmoothTwist { tau: 1.7 };
    let path = [[0.0, 0.0, 0.0], [1.2, 0.4, 0.0], [0.3, 1.5, 0.0], [-0.5, 0.2, 0.0]];
    let reference = transport(&field, &path, 1e-4).unwrap().quaternion();
    let err = |h: f64| transport(&field, &path, h).unwrap().quaternion().max_abs_diff(&reference);
    let (e1, e2) = (err(0.04), err(0.02));
    let order = (e1 / e2).log2();
    assert!(order >= 1.0, "convergence order {order} ({e1:e}, {e2:e})");
}

#[test]
fn hedgehog_loops_match_solid_angle() {
    let field = EtaField::hedgehog();
    let octant = [[1.0, 0.0, 0.0], [0.0, 1.0, 0.0], [0.0, 0.0, 1.0]];
    let h = loop_holonomy(&field, &octant, 1e-3).unwrap();
    assert!((h.abs() - FRAC_PI_2).abs() < 0.02 * FRAC_PI_2);
    let reversed: Vec<Vec3> = octant.iter().rev().copied().collect();
    assert!((loop_holonomy(&field, &reversed, 1e-3).unwrap() + h).abs() < 1e-12);
    let mut rng = ChaCha8Rng::seed_from_u64(17);
    for _ in 0..20 {
        let (a, b, c) = (random_unit(&mut rng), random_unit(&mut rng), random_unit(&mut rng));
        let omega = solid_angle(a, b, c);
        let got = loop_holonomy(&field, &[a, b, c], 1e-3).unwrap().abs();
        // compare modulo the orientation ambiguity of large triangles
        let d = (got - omega).abs().min((2.0 * PI - got - omega).abs());
        assert!(d < 1e-6, "{got} vs {omega}");
    }
    let constant = EtaField::constant(UnitImaginary::I3);
    assert!(loop_holonomy(&constant, &octant, 1e-3).unwrap().abs() < 1e-12);
}

#[test]
fn default_step_resolves_preset_holonomies() {
    let lp = [[0.9, 0.1, 0.0], [0.1, 1.1, 0.2], [-0.2, 0.3, 1.0], [0.4, -0.3, 0.5]];
    for field in [EtaField::hedgehog(), EtaField::SmoothTwist { tau: 1.0 }, FieldFamily::HedgehogBlend.field(0.6)] {
        let a = loop_holonomy(&field, &lp, DEFAULT_STEP).unwrap();
        let b = loop_holonomy(&field, &lp, DEFAULT_STEP / 2.0).unwrap();
        assert!((a - b).abs() < 1e-4, "{field:?}: {a} vs {b}");
    }
}

fn octant_sites() -> Vec<Site> {
    [[1.0, 0.0, 0.0], [0.0, 1.0, 0.0], [0.0, 0.0, 1.0], [FRAC_1_SQRT_2, 0.0, FRAC_1_SQRT_2]]
        .iter()
        .enumerate()
        .map(|(j, p)| Site::new(j + 1, *p))
        .collect()
}

#[test]
fn four_body_hedgehog_golden_deviation() {
    let sites = octant_sites();
    let an: Vec<Analyzer> = sites.iter().map(|s| Analyzer::planar(*s, 0.0)).collect();
    let model = CorrelationModel::straight(1, &sites, 1e-3).unwrap();
    let field = EtaField::hedgehog();
    let polygon_holonomy = loop_holonomy(&field, &site_polygon(&sites, 1), 1e-3).unwrap();
    assert!((polygon_holonomy.abs() - FRAC_PI_2).abs() < 0.02 * FRAC_PI_2);
    let e = expectation(&ghsz_state(), &an, &field, &model).unwrap().value;
    let cqm = cqm_reference(&ghsz_state(), &an).unwrap();
    assert!((cqm + 1.0).abs() < 1e-12);
    // golden fixture
    assert!((e - 1.0).abs() < 1e-8, "{e}");
    assert!(((e - cqm).abs() - 2.0).abs() < 1e-8);
    let constant = EtaField::constant(UnitImaginary::new([0.3, -0.2, 0.9]).unwrap());
    let ec = expectation(&ghsz_state(), &an, &constant, &model).unwrap().value;
    assert!((ec - cqm).abs() < 1e-10);
}

#[test]
fn scans() {
    let sites = octant_sites();
    let an4: Vec<Analyzer> = sites.iter().map(|s| Analyzer::planar(*s, 0.0)).collect();
    let model4 = CorrelationModel::straight(1, &sites, 1e-3).unwrap();

    // constant rows vanish for both models
    let tilts: Vec<f64> = (0..7).map(|i| i as f64 * 0.5).collect();
    for model in [&CorrelationModel::Local, &model4] {
        for row in deviation_scan(&ghsz_state(), &an4, FieldFamily::ConstantTilt, &tilts, model) {
            let v = row.outcome.unwrap();
            assert!(v.abs_dev < 1e-10 && v.holonomy.abs() < 1e-12);
        }
    }

    // deviation fades continuously with the twist
    let taus = [1.0, 0.5, 0.25, 0.1, 0.01, 0.0];
    let rows = deviation_scan(&ghsz_state(), &an4, FieldFamily::TwistStrength, &taus, &model4);
    let devs: Vec<f64> = rows.iter().map(|r| r.outcome.as_ref().unwrap().abs_dev).collect();
    assert!(devs.windows(2).all(|w| w[1] <= w[0] + 1e-12), "{devs:?}");
    assert!(devs[4] < 1e-4 && devs[5] < 1e-12);
    assert_eq!(rows.iter().map(|r| r.param).collect::<Vec<_>>(), taus);

    // two bodies never deviate under the transported model
    let two = &sites[..2];
    let an2 = [Analyzer::new(two[0], [0.6, 0.0, 0.8]).unwrap(), Analyzer::planar(two[1], 1.1)];
    let model2 = CorrelationModel::straight(1, two, 1e-3).unwrap();
    let blends: Vec<f64> = (0..=10).map(|i| i as f64 / 10.0).collect();
    for family in [FieldFamily::HedgehogBlend, FieldFamily::TwistStrength, FieldFamily::ConstantTilt] {
        for row in deviation_scan(&singlet_state(), &an2, family, &blends, &model2) {
            assert!(row.outcome.unwrap().abs_dev < 1e-10);
        }
    }
}
