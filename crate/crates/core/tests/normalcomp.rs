use illumsplat::imgcore::{NormalMap, ScalarMap};
use illumsplat::normalcomp::{gate, gradient_loss, normal_loss, total_loss, LossWeights};
use proptest::prelude::*;

const W: usize = 7;
const H: usize = 6;

/// Normal-like fields on a dyadic grid, so sums and differences are exact.
fn field() -> impl Strategy<Value = Vec<[f64; 3]>> {
    prop::collection::vec(prop::array::uniform3(-8i32..=8), W * H)
        .prop_map(|v| v.into_iter().map(|n| n.map(|c| c as f64 / 8.0)).collect())
}

fn map(data: Vec<[f64; 3]>, valid: Vec<bool>) -> NormalMap {
    NormalMap::from_raw(W, H, data, valid).unwrap()
}

fn losses() -> impl Strategy<Value = ScalarMap> {
    prop::collection::vec(0.0f64..0.5, W * H).prop_map(|d| ScalarMap::from_vec(W, H, d).unwrap())
}

proptest! {
    #[test]
    fn lowering_the_threshold_only_adds_pixels(l in losses(), t1 in 0.0f64..0.5, t2 in 0.0f64..0.5) {
        let (lo, hi) = (t1.min(t2), t1.max(t2));
        let (a, b) = (gate(&l, lo), gate(&l, hi));
        prop_assert!(a.count() >= b.count());
        prop_assert!(a.bits().iter().zip(b.bits()).all(|(&x, &y)| x || !y));
    }

    #[test]
    fn losses_vanish_on_identical_maps(p in field(), valid in prop::collection::vec(any::<bool>(), W * H), l in losses()) {
        let m = map(p, valid);
        prop_assert_eq!(normal_loss(&m, &m, &gate(&l, 0.1)).unwrap().value, 0.0);
        prop_assert_eq!(gradient_loss(&m, &m, None).unwrap().value, 0.0);
    }

    #[test]
    fn losses_are_non_negative(p in field(), r in field(), l in losses()) {
        let (p, r) = (map(p, vec![true; W * H]), map(r, vec![true; W * H]));
        prop_assert!(normal_loss(&p, &r, &gate(&l, 0.1)).unwrap().value >= 0.0);
        prop_assert!(gradient_loss(&p, &r, None).unwrap().value >= 0.0);
    }

    #[test]
    fn gradient_loss_ignores_a_shared_offset(p in field(), r in field(), o in field(), l in losses()) {
        let shift = |a: &[[f64; 3]]| -> Vec<[f64; 3]> {
            a.iter().zip(&o).map(|(x, y)| [x[0] + y[0], x[1] + y[1], x[2] + y[2]]).collect()
        };
        let all = vec![true; W * H];
        let mask = gate(&l, 0.2);
        let before = gradient_loss(&map(p.clone(), all.clone()), &map(r.clone(), all.clone()), Some(&mask)).unwrap();
        let after = gradient_loss(&map(shift(&p), all.clone()), &map(shift(&r), all), Some(&mask)).unwrap();
        prop_assert_eq!(before, after);
    }

    #[test]
    fn total_is_linear_in_each_component(c in prop::array::uniform4(0.0f64..10.0), k in 0usize..4, s in 0.0f64..4.0) {
        let w = LossWeights::default();
        let base = total_loss(c[0], c[1], c[2], c[3], &w).unwrap();
        let mut scaled = c;
        scaled[k] *= s;
        let coef = [w.illum, w.normal, w.gradient, w.mvs][k];
        let expected = base + coef * c[k] * (s - 1.0);
        let got = total_loss(scaled[0], scaled[1], scaled[2], scaled[3], &w).unwrap();
        prop_assert!((got - expected).abs() <= 1e-12 * (1.0 + base.abs() + expected.abs()));
    }
}

#[test]
fn invalid_components_are_rejected() {
    let w = LossWeights::default();
    assert!(total_loss(f64::NAN, 0.0, 0.0, 0.0, &w).is_err());
    assert!(total_loss(0.1, -0.2, 0.0, 0.0, &w).is_err());
    assert!(total_loss(0.1, 0.0, f64::INFINITY, 0.0, &w).is_err());
}

#[test]
fn only_gated_valid_pixels_count() {
    let mut pred = map(vec![[0.0, 0.0, -1.0]; W * H], vec![true; W * H]);
    let reference = map(vec![[0.0, 0.0, -1.0]; W * H], vec![true; W * H]);
    pred.set(2, 3, [1.0, 0.0, 0.0]);
    let mut l = ScalarMap::filled(W, H, 0.05);
    l.set(2, 3, 0.4);
    l.set(4, 1, 0.4);
    let nl = normal_loss(&pred, &reference, &gate(&l, 0.1)).unwrap();
    assert_eq!(nl.tested, 2);
    assert_eq!(nl.value, 1.0);
}
