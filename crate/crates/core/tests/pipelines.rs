use std::f64::consts::PI;

use finsler_core::control::{attainable_set, orbit_set, ReachParams, Window};
use finsler_core::formats::{
    field_to_csv, grid_to_csv, parse_field_csv, parse_grid_csv, parse_trajectory_csv, rows_to_csv, series_to_field_csv,
    trajectory_to_csv, TripleSpec,
};
use finsler_core::geodesic::{integrate_geodesic, PhaseState};
use finsler_core::jacobi::{classify_subspace, singular_instants, transverse_triple, Subspace, DEFAULT_FIELD_STEP};
use finsler_core::scene::{scenario, ScenarioName};
use finsler_core::submersion::{horizontal_lift_geodesic, is_horizontal};
use finsler_core::suite::cone_fields;
use finsler_core::Vector;

fn v(xs: &[f64]) -> Vector {
    Vector::from_column_slice(xs)
}

#[test]
fn figure_geodesic_through_csv() {
    let scene = scenario(ScenarioName::SinWindR3);
    let s0 = PhaseState::from_slices(&[0.0, 0.0, 0.0], &[1.0, 0.0, 0.25]);
    let traj = integrate_geodesic(&scene, &s0, 2.0 * PI, 1e-3).unwrap();
    let text = trajectory_to_csv(&traj);
    let back = parse_trajectory_csv(&text).unwrap();
    assert_eq!(trajectory_to_csv(&back), text);
    for (t, s) in back.times.iter().zip(&back.states).step_by(100) {
        let want = v(&[*t, 0.0, 3.0 * t / 8.0 - (2.0 * t).sin() / 16.0]);
        assert!((&s.x - want).amax() <= 1e-5, "t = {t}");
    }
}

#[test]
fn lifted_base_line_is_the_figure_geodesic() {
    let scene = scenario(ScenarioName::SinWindR3);
    let base = scenario(ScenarioName::Euclidean);
    let line = integrate_geodesic(&base, &PhaseState::from_slices(&[0.0, 0.0], &[1.0, 0.0]), PI, 1e-2).unwrap();
    let lift = horizontal_lift_geodesic(&scene, &v(&[0.0, 0.0, 0.0]), &line).unwrap();
    let end = lift.last();
    assert!((&end.x - v(&[PI, 0.0, 3.0 * PI / 8.0])).amax() <= 1e-5);
    for s in &lift.states {
        assert!(is_horizontal(&scene, s, 1e-6).unwrap());
    }
}

#[test]
fn cone_grids_are_nested_and_reproducible() {
    let sys = cone_fields(scenario(ScenarioName::ConeR2)).unwrap();
    let params = ReachParams {
        horizon: 6.0,
        max_letters: 4,
        samples: 5_000,
        window: Window::new(-2.0, 2.0, -2.0, 2.0).unwrap(),
        resolution: 0.1,
        seed: 42,
        step: 1e-2,
    };
    let q0 = v(&[0.0, 0.0]);
    let a = attainable_set(&sys, &q0, &params).unwrap();
    let o = orbit_set(&sys, &q0, &params).unwrap();
    assert!(a.is_subset_of(&o));
    assert!(o.occupied_cells() > a.occupied_cells());
    let text = grid_to_csv(&a);
    assert_eq!(grid_to_csv(&attainable_set(&sys, &q0, &params).unwrap()), text);
    assert_eq!(rows_to_csv(&parse_grid_csv(&text).unwrap()), text);
}

#[test]
fn triple_file_to_transverse_fields() {
    let spec = TripleSpec::from_json(r#"{"n": 2, "R": "hopf", "domain": [0, 6.283185307179586], "basis": [[1, 0, 0, 1]]}"#)
        .unwrap();
    let (triple, basis) = spec.build().unwrap();
    let line = Subspace::new(&triple, basis, DEFAULT_FIELD_STEP).unwrap();
    assert!(classify_subspace(&line, 1e-12).isotropic);
    assert!(singular_instants(&line, 1e-2, 1e-6).unwrap().is_empty());
    let tt = transverse_triple(&line).unwrap();
    assert!((tt.triple.curvature_at(1.0)[(0, 0)] - 4.0).abs() < 1e-6);
    let text = field_to_csv(&line.fields()[0]);
    assert_eq!(series_to_field_csv(&parse_field_csv(&text).unwrap()), text);
}
