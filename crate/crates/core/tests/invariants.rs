use approx::assert_abs_diff_eq;
use proptest::prelude::*;
use revmap::bump::{Bump, Generator};
use revmap::cocycle::{classify_periodic, orbit_matrix, PARABOLIC_TOL};
use revmap::linalg::{Mat2, Vec2};
use revmap::perturb::{symmetrize, symmetrize_post};
use revmap::torus::{torus_distance, Point};
use revmap::validation::{check_area, check_reversibility, GridSpec};
use revmap::{InvolutionSpec, MapSpec};

fn generator() -> impl Strategy<Value = Generator<f64>> {
    prop_oneof![
        (-1e-3..1e-3f64, -1e-3..1e-3f64).prop_map(|(a, b)| Generator::Push { v: Vec2::new(a, b) }),
        (-0.3..0.3f64).prop_map(|theta| Generator::Rotation { theta }),
        (-0.2..0.2f64, -0.2..0.2f64, -0.2..0.2f64).prop_map(|(a, b, d)| Generator::LinearGen { s: Mat2::new(a, b, b, d) }),
    ]
}

fn bump() -> impl Strategy<Value = Bump<f64>> {
    (0.0..1.0f64, 0.0..1.0f64, 0.01..0.04f64, 0.2..0.6f64, generator())
        .prop_map(|(x, y, outer, frac, g)| Bump::new(Point::new(x, y), frac * outer, outer, g).unwrap())
}

fn point() -> impl Strategy<Value = Point<f64>> {
    (0.0..1.0f64, 0.0..1.0f64).prop_map(|(x, y)| Point::new(x, y))
}

proptest! {
    #![proptest_config(ProptestConfig::with_cases(24))]

    #[test]
    fn twinned_layers_stay_reversible_and_area_preserving(k in 0.0..3.0f64, h1 in bump(), h2 in bump(), post in any::<bool>()) {
        let (f, r) = (MapSpec::standard(k), InvolutionSpec::standard(k));
        let Ok(g) = symmetrize(&f, &r, &h1) else { return Ok(()) };
        let g = if post { symmetrize_post(&g, &r, &h2).unwrap_or(g) } else { g };
        let grid = GridSpec::square(24);
        prop_assert!(check_reversibility(&g, &r, &grid, 1e-10).unwrap().passed);
        prop_assert!(check_area(&g, &grid, 1e-8).unwrap().passed);
    }

    #[test]
    fn inverse_undoes_a_perturbed_map(k in 0.0..2.0f64, h in bump(), p in point()) {
        let (f, r) = (MapSpec::standard(k), InvolutionSpec::standard(k));
        let Ok(g) = symmetrize(&f, &r, &h) else { return Ok(()) };
        let q = g.eval_inverse(g.eval(p).unwrap()).unwrap();
        prop_assert!(torus_distance(q, p) < 1e-12);
    }

    #[test]
    fn perturbed_maps_round_trip_through_json(k in 0.0..2.0f64, h in bump(), p in point()) {
        let (f, r) = (MapSpec::standard(k), InvolutionSpec::standard(k));
        let Ok(g) = symmetrize_post(&f, &r, &h) else { return Ok(()) };
        let back: MapSpec = serde_json::from_str(&serde_json::to_string(&g).unwrap()).unwrap();
        prop_assert_eq!(&back, &g);
        let (a, b) = (g.eval(p).unwrap(), back.eval(p).unwrap());
        prop_assert_eq!((a.x.to_bits(), a.y.to_bits()), (b.x.to_bits(), b.y.to_bits()));
    }

    #[test]
    fn orbit_matrices_are_unimodular(k in 0.0..4.0f64, p in point(), n in 1usize..40) {
        let m = orbit_matrix(&MapSpec::standard(k), p, n).unwrap();
        let scale = m.value().frobenius().powi(2).max(1.0);
        prop_assert!((m.value().det() - 1.0).abs() <= 1e-12 * scale);
    }
}

#[test]
fn fixed_point_traces_follow_the_parameter() {
    for k in [0.25, 1.5, 3.0, 5.0] {
        let f = MapSpec::standard(k);
        assert_abs_diff_eq!(orbit_matrix(&f, Point::new(0.0, 0.0), 1).unwrap().trace(), 2.0 + k, epsilon = 1e-12);
        let c = classify_periodic(&f, Point::new(0.5, 0.0), 1, PARABOLIC_TOL).unwrap();
        assert_abs_diff_eq!(c.trace().unwrap(), 2.0 - k, epsilon = 1e-12);
        assert_eq!(c.is_elliptic(), k < 4.0);
    }
}

#[test]
fn f32_and_f64_agree_on_the_standard_map() {
    let p64 = Point::new(0.1234, 0.5678);
    let p32 = Point::new(0.1234f32, 0.5678f32);
    let a = MapSpec::standard(0.9f64).iterate(p64, 5).unwrap();
    let b = revmap::maps::MapSpec::standard(0.9f32).iterate(p32, 5).unwrap();
    assert_abs_diff_eq!(a.x, b.x as f64, epsilon = 1e-4);
    assert_abs_diff_eq!(a.y, b.y as f64, epsilon = 1e-4);
}
