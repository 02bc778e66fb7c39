use lorenz_core::flow::{first_return_by_flow, CrossSectionPoint, GeometricLorenzParams, Side};
use lorenz_core::manifolds::{
    build_holonomy_chart_with_grid, find_gap_interval, project_separatrix, unstable_separatrix,
};
use lorenz_core::return_map::{apply_L, lowest_period_orbit, ReturnMapParams};
use lorenz_core::specification::catmap::{CatGluingProblem, TorusCatSystem};
use lorenz_core::specification::mixing::{catmap_box_graph, lorenz_box_graph, rotation_box_graph};
use lorenz_core::specification::{
    search_gluing, test_mixing, Anchor, LorenzGluingProblem, Outcome, SpecificationInstance,
};

#[test]
fn flow_and_return_map_agree_on_a_grid() {
    let p = GeometricLorenzParams::default();
    let rp = ReturnMapParams::from(&p);
    for i in 1..20 {
        for j in 0..5 {
            let x = -1.0 + 0.1 * i as f64 + 0.013;
            let y = -0.8 + 0.4 * j as f64;
            let q = CrossSectionPoint::new(x, y);
            let (_, by_flow) = first_return_by_flow(&p, &q).unwrap();
            let by_map = apply_L(&rp, &q).unwrap();
            assert!(by_flow.distance(&by_map) < 1e-9, "{q:?}");
        }
    }
}

#[test]
fn lorenz_search_fails_below_threshold_and_succeeds_when_loose() {
    let p = GeometricLorenzParams::default();
    let orbit = lowest_period_orbit(&p, 8).unwrap();
    let chart = build_holonomy_chart_with_grid(&p, &orbit, 0.1, 40).unwrap();
    let sep = unstable_separatrix(&p, Side::Plus, 70.0).unwrap();
    let proj = project_separatrix(&chart, &sep, 50.0).unwrap();
    let cert = find_gap_interval(&proj, &chart, 1e-3).unwrap();
    let tight = 0.9 * cert.d_star / (2.0 * chart.l_const);
    let g = LorenzGluingProblem::with_step(&chart, &cert, tight, 5e-3, 20.0).unwrap();
    let r = search_gluing(&g, tight);
    assert!(!r.is_witness());
    assert!(r.deviation() >= tight);

    let instance = g.instance();
    instance.validate(&p).unwrap();
    let back =
        SpecificationInstance::from_json(&serde_json::to_string(&instance).unwrap()).unwrap();
    assert_eq!(back, instance);
    assert!(matches!(back.segments[0].anchor, Anchor::Singularity));

    let loose = 10.0 * cert.d_star;
    let g = LorenzGluingProblem::with_step(&chart, &cert, loose, 5e-3, 20.0).unwrap();
    let r = search_gluing(&g, loose);
    match r.outcome {
        Outcome::Witness {
            point,
            max_deviation,
            ..
        } => {
            assert!(max_deviation < loose);
            assert!(g.verify(&point) <= loose * 1.01);
        }
        Outcome::ExhaustedNoWitness { .. } => panic!("loose eps should admit a witness"),
    }
}

#[test]
fn mixing_does_not_imply_specification() {
    let p = GeometricLorenzParams::default();
    assert!(
        test_mixing(&lorenz_box_graph(&p, 1 << 8), 200)
            .unwrap()
            .mixing
    );
    assert!(
        !test_mixing(&rotation_box_graph(0.25, 64), 200)
            .unwrap()
            .mixing
    );
    let sys = TorusCatSystem::default();
    assert!(test_mixing(&catmap_box_graph(&sys, 32), 50).unwrap().mixing);
    let gap = sys.default_gap(0.05);
    let g = CatGluingProblem::new(sys, [3, 5], [17, 11], 4, 4, gap, 0.05);
    assert!(search_gluing(&g, 0.05).is_witness());
}

#[test]
fn malformed_instances_are_rejected() {
    let p = GeometricLorenzParams::default();
    assert!(SpecificationInstance::from_json("{\"segments\": 3}").is_err());
    let text = r#"{"segments":[{"start":0.0,"end":1.0,"anchor":{"kind":"singularity"}},
        {"start":1.5,"end":2.0,"anchor":{"kind":"singularity"}}],"gap":1.0,"eps":0.1}"#;
    let inst = SpecificationInstance::from_json(text).unwrap();
    assert!(inst.validate(&p).is_err());
}
