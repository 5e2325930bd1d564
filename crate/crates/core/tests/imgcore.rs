use illumsplat::imgcore::io::{decode_pfm, decode_pfm_gray, decode_ppm, encode_pfm, encode_pfm_gray, encode_ppm};
use illumsplat::imgcore::{cdf_rank, l1_map, luminance, ssim_map, ImageRgb, ScalarMap};
use proptest::prelude::*;

fn image(max_side: usize) -> impl Strategy<Value = ImageRgb> {
    (1..=max_side, 1..=max_side).prop_flat_map(|(w, h)| {
        prop::collection::vec(0.0f64..=1.0, w * h * 3).prop_map(move |d| ImageRgb::from_vec(w, h, d).unwrap())
    })
}

/// Values on a coarse grid so ties are common.
fn scalar_map() -> impl Strategy<Value = ScalarMap> {
    (1usize..=12, 1usize..=12).prop_flat_map(|(w, h)| {
        prop::collection::vec(0u8..8, w * h)
            .prop_map(move |d| ScalarMap::from_vec(w, h, d.into_iter().map(|v| v as f64 / 7.0).collect()).unwrap())
    })
}

proptest! {
    #[test]
    fn rank_is_monotone_with_equal_ranks_for_ties(lum in scalar_map()) {
        let rank = cdf_rank(&lum);
        let (l, r) = (lum.data(), rank.data());
        for i in 0..l.len() {
            prop_assert!((0.0..=1.0).contains(&r[i]));
            for j in 0..l.len() {
                if l[i] < l[j] {
                    prop_assert!(r[i] < r[j]);
                } else if l[i] == l[j] {
                    prop_assert_eq!(r[i], r[j]);
                }
            }
        }
    }

    #[test]
    fn rank_mean_is_one_half(lum in scalar_map()) {
        prop_assert!((cdf_rank(&lum).mean() - 0.5).abs() < 1e-12);
    }

    #[test]
    fn rank_commutes_with_permutation(lum in scalar_map(), seed in any::<u64>()) {
        let n = lum.data().len();
        let mut perm: Vec<usize> = (0..n).collect();
        let mut s = seed;
        for i in (1..n).rev() {
            s = s.wrapping_mul(6364136223846793005).wrapping_add(1442695040888963407);
            perm.swap(i, (s >> 33) as usize % (i + 1));
        }
        let shuffled = ScalarMap::from_vec(n, 1, perm.iter().map(|&k| lum.data()[k]).collect()).unwrap();
        let flat = ScalarMap::from_vec(n, 1, lum.data().to_vec()).unwrap();
        let (a, b) = (cdf_rank(&flat), cdf_rank(&shuffled));
        for (i, &k) in perm.iter().enumerate() {
            prop_assert_eq!(b.data()[i], a.data()[k]);
        }
    }

    #[test]
    fn ssim_of_an_image_with_itself_is_one(img in image(20)) {
        prop_assert!(ssim_map(&img, &img).unwrap().data().iter().all(|&v| v == 1.0));
    }

    #[test]
    fn l1_map_is_symmetric(a in image(8), seed in any::<u64>()) {
        let b = a.map(|v| ((v * 1000.0 + seed as f64) % 1.0).abs());
        prop_assert_eq!(l1_map(&a, &b).unwrap(), l1_map(&b, &a).unwrap());
    }

    #[test]
    fn pfm_round_trip_is_bit_exact(w in 1usize..16, h in 1usize..16, raw in prop::collection::vec(any::<f32>(), 768)) {
        let data: Vec<f64> = raw.iter().take(w * h * 3).map(|&v| if v.is_finite() { v as f64 } else { 0.0 }).collect();
        let img = ImageRgb::from_vec(w, h, data).unwrap();
        let back = decode_pfm(&encode_pfm(&img)).unwrap();
        prop_assert!(back.data().iter().zip(img.data()).all(|(a, b)| a.to_bits() == b.to_bits()));

        let map = luminance(&img).data().iter().map(|&v| v as f32 as f64).collect();
        let map = ScalarMap::from_vec(w, h, map).unwrap();
        prop_assert_eq!(decode_pfm_gray(&encode_pfm_gray(&map)).unwrap(), map);
    }

    #[test]
    fn ppm_round_trip_stays_within_half_a_level(img in image(12)) {
        let back = decode_ppm(&encode_ppm(&img)).unwrap();
        prop_assert!(back.data().iter().zip(img.data()).all(|(a, b)| (a - b).abs() <= 0.5 / 255.0 + 1e-12));
    }
}

#[test]
fn luma_weights_of_primaries() {
    let img = ImageRgb::from_vec(3, 1, vec![1.0, 0.0, 0.0, 0.0, 1.0, 0.0, 0.0, 0.0, 1.0]).unwrap();
    assert_eq!(luminance(&img).data(), &[0.299, 0.587, 0.114]);
}

#[test]
fn mismatched_sizes_are_rejected() {
    let a = ImageRgb::new(4, 4);
    let b = ImageRgb::new(4, 5);
    assert!(l1_map(&a, &b).is_err());
    assert!(ssim_map(&a, &b).is_err());
}
