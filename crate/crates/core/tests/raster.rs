mod common;

use common::*;
use proptest::prelude::*;
use rand::Rng;

use jitterscale::raster::{
    bicubic_resize, bilinear_sample, conv3x3, dense_forward, depth_to_space, relu, space_to_depth,
    Activation, ConvKernel, DenseLayer, Raster,
};

const F32_TOL: f64 = 1e-6;
const F64_TOL: f64 = 1e-12;

fn random_kernel(rng: &mut impl Rng, out_c: usize, in_c: usize) -> ConvKernel {
    let taps = (0..out_c * in_c * 9)
        .map(|_| rng.gen_range(-0.3..0.3))
        .collect();
    let bias = (0..out_c).map(|_| rng.gen_range(-0.5..0.5)).collect();
    ConvKernel::new(out_c, in_c, taps, bias).unwrap()
}

fn random_layer(rng: &mut impl Rng, out_f: usize, in_f: usize) -> DenseLayer {
    let weights = (0..out_f * in_f)
        .map(|_| rng.gen_range(-0.5..0.5))
        .collect();
    let bias = (0..out_f).map(|_| rng.gen_range(-0.5..0.5)).collect();
    DenseLayer::new(out_f, in_f, weights, bias).unwrap()
}

fn max_diff64(a: &[f64], b: &[f64]) -> f64 {
    a.iter()
        .zip(b)
        .map(|(x, y)| (x - y).abs())
        .fold(0.0, f64::max)
}

#[test]
fn conv3x3_matches_loop_oracle() {
    let mut r = rng(11);
    for _ in 0..120 {
        let (c_in, c_out) = (r.gen_range(1..=3), r.gen_range(1..=3));
        let (h, w) = (r.gen_range(1..=8), r.gen_range(1..=8));
        let x = random_raster(&mut r, c_in, h, w, -1.0, 1.0);
        let k = random_kernel(&mut r, c_out, c_in);
        let want = conv3x3_oracle(&x, &k);
        let got = conv3x3(&x, &k).unwrap();
        assert!(max_abs_diff(got.data(), &want) <= F32_TOL);
        let k64 = ConvKernel::<f64>::new(
            c_out,
            c_in,
            k.taps.iter().map(|&v| v as f64).collect(),
            k.bias.iter().map(|&v| v as f64).collect(),
        )
        .unwrap();
        let got64 = conv3x3(&x.cast::<f64>(), &k64).unwrap();
        assert!(max_diff64(got64.data(), &want) <= F64_TOL);
    }
}

#[test]
fn dense_forward_matches_matmul_oracle() {
    let mut r = rng(12);
    for _ in 0..120 {
        let dims: Vec<usize> = (0..3).map(|_| r.gen_range(1..=9)).collect();
        let layers = vec![
            random_layer(&mut r, dims[1], dims[0]),
            random_layer(&mut r, dims[2], dims[1]),
        ];
        let input: Vec<f32> = (0..dims[0]).map(|_| r.gen_range(-1.0..1.0)).collect();
        let want = dense_oracle(&layers, &[true, false], &input);
        let got =
            dense_forward(&layers, &[Activation::Relu, Activation::Identity], &input).unwrap();
        assert!(max_abs_diff(&got, &want) <= F32_TOL);
    }
}

#[test]
fn bilinear_sample_matches_scalar_oracle() {
    let mut r = rng(13);
    for _ in 0..120 {
        let (c, h, w) = (r.gen_range(1..=4), r.gen_range(1..=8), r.gen_range(1..=8));
        let src = random_raster(&mut r, c, h, w, 0.0, 1.0);
        let (oh, ow) = (r.gen_range(1..=8), r.gen_range(1..=8));
        // Some positions fall outside the source to exercise clamping.
        let pos = Raster::from_fn(2, oh, ow, |ch, _, _| {
            let extent = if ch == 0 { w } else { h } as f32;
            r.gen_range(-1.5..extent + 0.5)
        });
        let want = bilinear_oracle(&src, &pos);
        let got = bilinear_sample(&src, &pos).unwrap();
        assert!(max_abs_diff(got.data(), &want) <= F32_TOL);
    }
}

#[test]
fn bicubic_resize_matches_kernel_sum_oracle() {
    let mut r = rng(14);
    for _ in 0..120 {
        let (c, h, w) = (r.gen_range(1..=3), r.gen_range(1..=8), r.gen_range(1..=8));
        let s = r.gen_range(1..=4);
        let x = random_raster(&mut r, c, h, w, 0.0, 1.0);
        let want = bicubic_oracle(&x, s);
        let got = bicubic_resize(&x, s).unwrap();
        assert_eq!(got.shape(), (c, h * s, w * s));
        assert!(max_abs_diff(got.data(), &want) <= F32_TOL);
    }
}

#[test]
fn shuffles_are_exact_inverses() {
    let mut r = rng(15);
    let x = random_raster(&mut r, 18, 4, 4, -1.0, 1.0);
    assert_eq!(
        space_to_depth(&depth_to_space(&x, 3).unwrap(), 3).unwrap(),
        x
    );
    let y = random_raster(&mut r, 2, 12, 8, -1.0, 1.0);
    assert_eq!(
        depth_to_space(&space_to_depth(&y, 4).unwrap(), 4).unwrap(),
        y
    );
}

#[test]
fn depth_to_space_places_channels_in_subpixel_order() {
    // Channel c·S² + i·S + j lands at (y·S + i, x·S + j).
    let mut r = rng(16);
    let x = random_raster(&mut r, 2 * 9, 3, 2, -1.0, 1.0);
    let y = depth_to_space(&x, 3).unwrap();
    for c in 0..2 {
        for i in 0..3 {
            for j in 0..3 {
                for py in 0..3 {
                    for px in 0..2 {
                        assert_eq!(
                            y.get(c, py * 3 + i, px * 3 + j),
                            x.get(c * 9 + i * 3 + j, py, px)
                        );
                    }
                }
            }
        }
    }
}

proptest! {
    #![proptest_config(prop_config(64))]

    #[test]
    fn shuffle_round_trip(c in 1usize..4, h in 1usize..5, w in 1usize..5, s in 1usize..4, seed in any::<u64>()) {
        let x = random_raster(&mut rng(seed), c * s * s, h, w, -1.0, 1.0);
        let hr = depth_to_space(&x, s).unwrap();
        prop_assert_eq!(hr.shape(), (c, h * s, w * s));
        prop_assert_eq!(space_to_depth(&hr, s).unwrap(), x);
    }

    #[test]
    fn relu_idempotent_and_nonnegative(seed in any::<u64>()) {
        let x = random_raster(&mut rng(seed), 2, 5, 5, -1.0, 1.0);
        let once = relu(&x);
        prop_assert!(once.data().iter().all(|&v| v >= 0.0));
        prop_assert_eq!(relu(&once), once);
    }

    #[test]
    fn conv_is_linear_without_bias(seed in any::<u64>(), a in -2.0f64..2.0) {
        let mut r = rng(seed);
        let x = random_raster64(&mut r, 2, 5, 4);
        let taps: Vec<f64> = (0..2 * 2 * 9).map(|_| r.gen_range(-1.0..1.0)).collect();
        let k = ConvKernel::new(2, 2, taps, vec![0.0; 2]).unwrap();
        let y = conv3x3(&x, &k).unwrap();
        let ys = conv3x3(&x.map(|v| v * a), &k).unwrap();
        for (p, q) in y.data().iter().zip(ys.data()) {
            prop_assert!((p * a - q).abs() < 1e-12);
        }
    }

    #[test]
    fn bilinear_constant_source_is_constant(v in 0.0f32..1.0, seed in any::<u64>()) {
        let mut r = rng(seed);
        let src = Raster::filled(1, 4, 6, v);
        let pos = Raster::from_fn(2, 3, 3, |_, _, _| r.gen_range(-3.0f32..9.0));
        prop_assert!(bilinear_sample(&src, &pos).unwrap().data().iter().all(|&o| o == v));
    }

    #[test]
    fn bicubic_preserves_linear_ramps_in_interior(a in -0.1f64..0.1, b in -0.1f64..0.1, s in 2usize..4) {
        // Catmull-Rom reproduces degree-1 polynomials away from the clamped border.
        let x = Raster::<f64>::from_fn(1, 8, 8, |_, y, x| a * x as f64 + b * y as f64);
        let up = bicubic_resize(&x, s).unwrap();
        for oy in 2 * s..6 * s {
            for ox in 2 * s..6 * s {
                let u = (ox as f64 + 0.5) / s as f64 - 0.5;
                let v = (oy as f64 + 0.5) / s as f64 - 0.5;
                prop_assert!((up.get(0, oy, ox) - (a * u + b * v)).abs() < 1e-12);
            }
        }
    }
}
