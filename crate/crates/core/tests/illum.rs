use illumsplat::illum::state::IllumState;
use illumsplat::illum::{
    apply_gamma, gamma_of_rank, gamma_range, illum_backward, illum_forward, illum_loss, ConvWeights, GammaParams,
    ViewIllum, GAMMA_BASE_EPS,
};
use illumsplat::imgcore::{cdf_rank, luminance, ImageRgb};
use proptest::prelude::*;

fn image(w: usize, h: usize) -> impl Strategy<Value = ImageRgb> {
    prop::collection::vec(0.0f64..=1.0, w * h * 3).prop_map(move |d| ImageRgb::from_vec(w, h, d).unwrap())
}

fn params() -> impl Strategy<Value = GammaParams> {
    (0.01f64..5.0, -3.0f64..3.0, 0.01f64..5.0, -3.0f64..3.0).prop_map(|(a, b, c, d)| GammaParams::new(a, b, c, d))
}

proptest! {
    #[test]
    fn gamma_mapping_stays_in_unit_interval(img in image(6, 5), gp in params()) {
        let out = apply_gamma(&img, &cdf_rank(&luminance(&img)), &gp);
        prop_assert!(out.data().iter().all(|&v| v > 0.0 && v <= 1.0));
    }

    #[test]
    fn identity_parameters_only_clamp(img in image(7, 4)) {
        let out = apply_gamma(&img, &cdf_rank(&luminance(&img)), &GammaParams::default());
        prop_assert_eq!(out, img.map(|v| v.clamp(GAMMA_BASE_EPS, 1.0)));
    }

    #[test]
    fn range_is_ordered(gp in params()) {
        let r = gamma_range(&gp);
        prop_assert!(r.min <= r.max);
        let mid = gamma_of_rank(r.min, r.max, 0.5);
        prop_assert!((mid - 0.5 * (r.min + r.max)).abs() <= 4.0 * f64::EPSILON * r.max);
    }

    #[test]
    fn loss_is_non_negative_and_vanishes_on_equal_images(a in image(12, 12), b in image(12, 12), lambda in 0.0f64..1.0) {
        prop_assert_eq!(illum_loss(&a, &a, lambda).unwrap().scalar, 0.0);
        let l = illum_loss(&a, &b, lambda).unwrap();
        prop_assert!(l.scalar >= 0.0);
        prop_assert!(l.per_pixel.data().iter().all(|&v| v >= 0.0));
        if a != b {
            prop_assert!(l.scalar > 0.0);
        }
    }
}

#[test]
fn forward_backward_shapes_and_gradient_sinks() {
    let gt = ImageRgb::filled(10, 8, [0.7, 0.4, 0.2]);
    let rendered = ImageRgb::filled(10, 8, [0.3, 0.3, 0.3]);
    let mut view = ViewIllum::default();
    let mut net = ConvWeights::init(5);
    let fwd = illum_forward(&gt, &rendered, &view, &net, 0.2).unwrap();
    assert_eq!(fwd.i_map.dims(), (10, 8));
    assert!(fwd.loss.scalar > 0.0);
    let g = illum_backward(&fwd, 1.0, &mut view, &mut net);
    assert_eq!(g.len(), 10 * 8 * 3);
    assert!(g.iter().all(|v| v.is_finite()));
    assert!(view.field.grad.iter().any(|&v| v != 0.0));
    assert!(net.layer2.grad_bias[0] != 0.0);
}

#[test]
fn mismatched_images_are_rejected() {
    let net = ConvWeights::zeros();
    let r = illum_forward(&ImageRgb::new(4, 4), &ImageRgb::new(5, 4), &ViewIllum::default(), &net, 0.2);
    assert!(r.is_err());
}

#[test]
fn illumination_checkpoint_round_trips() {
    let mut state = IllumState::new(3, 9);
    state.views[1].gamma = GammaParams::new(0.7, 0.1, 1.3, -0.2);
    state.views[2].field.values[17] = 2.5;
    let dir = tempfile::tempdir().unwrap();
    let path = dir.path().join("illum.ill");
    state.save(&path).unwrap();
    assert_eq!(IllumState::load(&path).unwrap(), state);

    let mut bytes = std::fs::read(&path).unwrap();
    bytes.truncate(bytes.len() - 5);
    assert!(IllumState::from_bytes(&bytes).is_err());
}
