use parallax_core::geometry::depth_from_gamma;
use parallax_core::imaging::warp_by_homography;
use parallax_core::solver::{block_match_flow_with, solve_gamma_map, BlockMatchConfig};
use parallax_core::synth::{SceneSpec, View};

#[test]
fn block_matching_residual_flow_is_sub_pixel_on_the_standard_scene() {
    let scene = SceneSpec::standard(0);
    let gt = scene.ground_truth().unwrap();
    let source = scene.render(View::Source).unwrap().image;
    let target = scene.render(View::Target).unwrap().image;
    let (warped, mask) = warp_by_homography(&source, &gt.homography).unwrap();
    let flow = block_match_flow_with(&warped, Some(&mask), &target, &BlockMatchConfig::default()).unwrap();

    let mut errors: Vec<f64> = gt
        .flow_res
        .iter_valid()
        .filter_map(|(x, y, u)| flow.get(x, y).map(|v| (v - u).norm()))
        .collect();
    assert!(errors.len() > 20_000, "{} matched cells", errors.len());
    errors.sort_by(f64::total_cmp);
    let median = errors[errors.len() / 2];
    assert!(median < 0.5, "median end-point error {median}");
}

#[test]
fn exact_flow_recovers_exact_depth() {
    let scene = SceneSpec::random(12);
    let gt = scene.ground_truth().unwrap();
    let report = solve_gamma_map(&gt.flow_res, &scene.motion, &scene.plane, &scene.camera).unwrap();
    let plane = scene.plane.in_target_frame(&scene.motion).unwrap();
    let depth = depth_from_gamma(&report.gamma, &plane, &scene.camera).unwrap();
    let mut n = 0;
    for (x, y, z) in depth.iter_valid() {
        let truth = gt.depth.get(x, y).unwrap();
        assert!((z - truth).abs() < 1e-6 * truth.max(1.0), "({x}, {y}): {z} vs {truth}");
        n += 1;
    }
    assert!(n + report.skipped() >= gt.flow_res.valid_count());
}
