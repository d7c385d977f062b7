//! Property checks for alignment, PCA and scoring, shared by the property
//! suite and the acceptance suite.

#![allow(dead_code)]

use ndarray::{s, Array1, Array2, Axis};
use neuroencode::alignment::{build_design, AlignmentConfig, BoundaryPolicy};
use neuroencode::data::TimeSeriesMatrix;
use neuroencode::dimred::{fit_pca, subsample_rows};
use neuroencode::eval::{pearson, pearson_per_parcel};
use neuroencode::rng::substream;
use proptest::prelude::*;
use proptest::test_runner::{Config, RngSeed};
use rand::seq::SliceRandom;
use rand::Rng;
use rand_distr::StandardNormal;

pub const CASES: u32 = 128;

/// Fixed-seed runner configuration with `CASES` cases.
pub fn config() -> Config {
    Config {
        cases: CASES,
        rng_seed: RngSeed::Fixed(0x5eed),
        failure_persistence: None,
        ..Config::default()
    }
}

pub fn gaussian(rows: usize, cols: usize, seed: u64) -> Array2<f64> {
    let mut rng = substream(seed, "property");
    Array2::from_shape_simple_fn((rows, cols), || rng.sample(StandardNormal))
}

#[derive(Debug, Clone)]
pub struct AlignCase {
    pub features: TimeSeriesMatrix,
    pub sw: usize,
    pub delay: usize,
}

pub fn align_case() -> impl Strategy<Value = AlignCase> {
    (prop::collection::vec(1usize..16, 1..4), 1usize..5, 1usize..5, 0usize..5, any::<u64>()).prop_map(
        |(lens, d, sw, delay, seed)| {
            let t: usize = lens.iter().sum();
            let mut bounds = vec![0];
            for l in &lens[..lens.len() - 1] {
                bounds.push(bounds.last().unwrap() + l);
            }
            let features = TimeSeriesMatrix::new(gaussian(t, d, seed), bounds, 1.49).unwrap();
            AlignCase { features, sw, delay }
        },
    )
}

fn run_start(m: &TimeSeriesMatrix, t: usize) -> usize {
    m.run_ranges().into_iter().find(|r| r.contains(&t)).unwrap().start
}

/// `sw = 1` is a within-run shift by `delay` with zero rows at each run head.
pub fn check_unit_window_is_shift(c: &AlignCase) -> Result<(), TestCaseError> {
    let design = build_design(&c.features, &AlignmentConfig::new(1, c.delay)).unwrap();
    let x = c.features.data();
    let out = design.matrix.data();
    prop_assert_eq!(out.dim(), x.dim());
    for t in 0..x.nrows() {
        let expected = if t - run_start(&c.features, t) >= c.delay {
            x.row(t - c.delay).to_owned()
        } else {
            Array1::zeros(x.ncols())
        };
        prop_assert_eq!(out.row(t), expected.view());
    }
    Ok(())
}

/// Block `j` of every full-window row is the feature row `t − delay − j`.
pub fn check_lag_order(c: &AlignCase) -> Result<(), TestCaseError> {
    let design = build_design(&c.features, &AlignmentConfig::new(c.sw, c.delay)).unwrap();
    let x = c.features.data();
    let d = x.ncols();
    let out = design.matrix.data();
    for t in 0..x.nrows() {
        if t - run_start(&c.features, t) < c.delay + c.sw - 1 {
            continue;
        }
        for j in 0..c.sw {
            prop_assert_eq!(out.slice(s![t, j * d..(j + 1) * d]), x.row(t - c.delay - j));
        }
    }
    Ok(())
}

/// `drop_rows` is `zero_pad` restricted to the full-window rows.
pub fn check_drop_rows_is_restriction(c: &AlignCase) -> Result<(), TestCaseError> {
    let cfg = AlignmentConfig::new(c.sw, c.delay);
    let padded = build_design(&c.features, &cfg).unwrap();
    let full: Vec<usize> = (0..c.features.nrows())
        .filter(|&t| t - run_start(&c.features, t) >= c.delay + c.sw - 1)
        .collect();
    match build_design(&c.features, &cfg.with_policy(BoundaryPolicy::DropRows)) {
        Ok(dropped) => {
            let map = dropped.row_map.expect("drop_rows returns a row map");
            prop_assert_eq!(&map, &full);
            let expected = padded.matrix.data().select(Axis(0), &map);
            prop_assert_eq!(dropped.matrix.data(), &expected);
        }
        Err(_) => prop_assert!(full.is_empty()),
    }
    Ok(())
}

#[derive(Debug, Clone)]
pub struct PcaCase {
    pub data: TimeSeriesMatrix,
    pub stride: usize,
    pub max_comp: usize,
    pub alpha: f64,
}

pub fn pca_case() -> impl Strategy<Value = PcaCase> {
    (6usize..40, 2usize..10, 1usize..4, -2.0f64..3.0, any::<u64>()).prop_map(|(rows, cols, stride, alpha, seed)| {
        let data = TimeSeriesMatrix::single_run(gaussian(rows, cols, seed) * 2.0 + 0.5).unwrap();
        let sub = rows.div_ceil(stride);
        PcaCase {
            data,
            stride,
            max_comp: sub.min(cols),
            alpha,
        }
    })
}

pub fn check_orthonormal_components(c: &PcaCase) -> Result<(), TestCaseError> {
    let pca = fit_pca(&c.data, c.max_comp, c.stride).unwrap();
    let g = pca.components.dot(&pca.components.t());
    let eye = Array2::<f64>::eye(c.max_comp);
    let worst = (&g - &eye).iter().fold(0.0f64, |m, v| m.max(v.abs()));
    prop_assert!(worst <= 1e-8, "max |CCᵀ − I| = {worst}");
    Ok(())
}

pub fn check_transform_is_affine(c: &PcaCase) -> Result<(), TestCaseError> {
    let k = c.max_comp.div_ceil(2);
    let pca = fit_pca(&c.data, k, c.stride).unwrap();
    let x = c.data.data().row(0).to_owned();
    let y = c.data.data().row(c.data.nrows() - 1).to_owned();
    let mix = &x * c.alpha + &y * (1.0 - c.alpha);
    let rows = ndarray::stack(Axis(0), &[x.view(), y.view(), mix.view()]).unwrap();
    let z = pca.transform_array(rows.view()).unwrap();
    let expected = &z.row(0) * c.alpha + &z.row(1) * (1.0 - c.alpha);
    let scale = 1.0 + z.iter().fold(0.0f64, |m, v| m.max(v.abs())) * (1.0 + c.alpha.abs());
    for (a, b) in z.row(2).iter().zip(expected.iter()) {
        prop_assert!((a - b).abs() <= 1e-12 * scale, "{a} vs {b}");
    }
    Ok(())
}

pub fn check_reconstruction_monotone(c: &PcaCase) -> Result<(), TestCaseError> {
    let sub = subsample_rows(c.data.view(), c.stride).to_owned();
    let mut prev = f64::INFINITY;
    for k in 1..=c.max_comp {
        let pca = fit_pca(&c.data, k, c.stride).unwrap();
        let back = pca.inverse_transform_array(pca.transform_array(sub.view()).unwrap().view()).unwrap();
        let err = (&back - &sub).mapv(|v| v * v).sum().sqrt();
        prop_assert!(err <= prev + 1e-9 * (1.0 + prev.min(1e300)), "k = {k}: {err} > {prev}");
        prev = err;
    }
    Ok(())
}

#[derive(Debug, Clone)]
pub struct PearsonCase {
    pub a: Array2<f64>,
    pub b: Array2<f64>,
    pub scale: (f64, f64),
    pub shift: (f64, f64),
}

pub fn pearson_case() -> impl Strategy<Value = PearsonCase> {
    (3usize..60, 1usize..6, 0.1f64..10.0, 0.1f64..10.0, -10.0f64..10.0, -10.0f64..10.0, any::<u64>()).prop_map(
        |(t, p, s1, s2, h1, h2, seed)| {
            let a = gaussian(t, p, seed);
            let b = &a * 0.5 + gaussian(t, p, seed.wrapping_add(1));
            PearsonCase {
                a,
                b,
                scale: (s1, s2),
                shift: (h1, h2),
            }
        },
    )
}

pub fn check_pearson_affine_invariance(c: &PearsonCase) -> Result<(), TestCaseError> {
    let base = pearson_per_parcel(c.a.view(), c.b.view()).unwrap();
    let a2 = c.a.mapv(|v| c.scale.0 * v + c.shift.0);
    let b2 = c.b.mapv(|v| c.scale.1 * v + c.shift.1);
    let moved = pearson_per_parcel(a2.view(), b2.view()).unwrap();
    for (r0, r1) in base.per_parcel_r.iter().zip(&moved.per_parcel_r) {
        prop_assert!((r0 - r1).abs() <= 1e-12, "{r0} vs {r1}");
    }
    Ok(())
}

pub fn check_pearson_symmetry(c: &PearsonCase) -> Result<(), TestCaseError> {
    for (x, y) in c.a.columns().into_iter().zip(c.b.columns()) {
        prop_assert!((pearson(x, y) - pearson(y, x)).abs() <= 1e-15);
    }
    let ab = pearson_per_parcel(c.a.view(), c.b.view()).unwrap();
    let ba = pearson_per_parcel(c.b.view(), c.a.view()).unwrap();
    prop_assert!((ab.mean_r - ba.mean_r).abs() <= 1e-15);
    Ok(())
}

#[derive(Debug, Clone)]
pub struct ShuffleCase {
    pub t: usize,
    pub p: usize,
    pub seed: u64,
}

pub fn shuffle_case() -> impl Strategy<Value = ShuffleCase> {
    (500usize..800, 20usize..40, any::<u64>()).prop_map(|(t, p, seed)| ShuffleCase { t, p, seed })
}

/// Row-shuffling a correlated prediction leaves `|mean r| < 0.05`.
pub fn check_shuffle_decorrelates(c: &ShuffleCase) -> Result<(), TestCaseError> {
    let truth = gaussian(c.t, c.p, c.seed);
    let pred = &truth + &gaussian(c.t, c.p, c.seed.wrapping_add(1));
    let aligned = pearson_per_parcel(pred.view(), truth.view()).unwrap().mean_r;
    prop_assert!(aligned > 0.5);
    let mut order: Vec<usize> = (0..c.t).collect();
    order.shuffle(&mut substream(c.seed, "shuffle"));
    let shuffled = pred.select(Axis(0), &order);
    let r = pearson_per_parcel(shuffled.view(), truth.view()).unwrap().mean_r;
    prop_assert!(r.abs() < 0.05, "shuffled mean r = {r}");
    Ok(())
}

/// Named property checks with their runners, for suites that report each.
pub fn all() -> Vec<(&'static str, fn() -> Result<(), String>)> {
    fn run<S: Strategy>(s: S, check: fn(&S::Value) -> Result<(), TestCaseError>) -> Result<(), String> {
        proptest::test_runner::TestRunner::new(config())
            .run(&s, |c| check(&c))
            .map_err(|e| e.to_string())
    }
    vec![
        ("alignment: unit window is a within-run shift", || run(align_case(), check_unit_window_is_shift)),
        ("alignment: lag blocks are most recent first", || run(align_case(), check_lag_order)),
        ("alignment: drop_rows restricts zero_pad", || run(align_case(), check_drop_rows_is_restriction)),
        ("dimred: components are orthonormal", || run(pca_case(), check_orthonormal_components)),
        ("dimred: transform is affine", || run(pca_case(), check_transform_is_affine)),
        ("dimred: reconstruction error nonincreasing in n_comp", || run(pca_case(), check_reconstruction_monotone)),
        ("eval: Pearson affine invariance", || run(pearson_case(), check_pearson_affine_invariance)),
        ("eval: Pearson symmetry", || run(pearson_case(), check_pearson_symmetry)),
        ("eval: row shuffling decorrelates", || run(shuffle_case(), check_shuffle_decorrelates)),
    ]
}
