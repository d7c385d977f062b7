//! Library-level chains across modules.

use std::collections::BTreeSet;

use neuroencode::alignment::{build_design, AlignmentConfig};
use neuroencode::data::{generate_synthetic, read_matrix, write_matrix, Coverage, MatrixFormat, ModelSpec, SynthConfig, TimeSeriesMatrix};
use neuroencode::dimred::fit_pca;
use neuroencode::eval::pearson_per_parcel;
use neuroencode::ridge::{default_alpha_grid, fit_ridge_loocv};
use neuroencode::stacking::{fit_stacking, simplex_kkt_violation, StackingMode};

fn slice_runs(m: &TimeSeriesMatrix, runs: std::ops::Range<usize>) -> TimeSeriesMatrix {
    let parts: Vec<TimeSeriesMatrix> = runs
        .map(|r| TimeSeriesMatrix::single_run(m.run(r).to_owned()).unwrap())
        .collect();
    TimeSeriesMatrix::concat(&parts).unwrap()
}

fn dataset(coverage: Coverage, noise: f64) -> neuroencode::data::SynthDataset {
    generate_synthetic(&SynthConfig {
        runs: 6,
        trs_per_run: 250,
        models: vec![
            ModelSpec { name: "a".into(), dim: 12 },
            ModelSpec { name: "b".into(), dim: 8 },
            ModelSpec { name: "c".into(), dim: 16 },
        ],
        parcels: 24,
        noise,
        coverage,
        seed: 11,
        ..Default::default()
    })
    .unwrap()
}

fn fit_predict(features: &TimeSeriesMatrix, bold: &TimeSeriesMatrix, train: std::ops::Range<usize>, test: std::ops::Range<usize>) -> TimeSeriesMatrix {
    let align = AlignmentConfig::new(2, 3);
    let design = build_design(&slice_runs(features, train.clone()), &align).unwrap().matrix;
    let pca = fit_pca(&design, design.ncols(), 1).unwrap();
    let ridge = fit_ridge_loocv(&pca.transform(&design).unwrap(), &slice_runs(bold, train), &default_alpha_grid()).unwrap();
    let test_design = build_design(&slice_runs(features, test), &align).unwrap().matrix;
    ridge.predict(&pca.transform(&test_design).unwrap()).unwrap()
}

#[test]
fn planted_weights_are_recovered_without_noise() {
    let ds = dataset(Coverage::Uniform, 0.0);
    let align = AlignmentConfig::new(2, 3);
    let designs: Vec<TimeSeriesMatrix> = ds
        .features
        .values()
        .map(|f| build_design(f, &align).unwrap().matrix)
        .collect();
    let cols: usize = designs.iter().map(|d| d.ncols()).sum();
    let joined = ndarray::concatenate(ndarray::Axis(1), &designs.iter().map(|d| d.view()).collect::<Vec<_>>()).unwrap();
    let design = ds.bold.with_data(joined).unwrap();
    let ridge = fit_ridge_loocv(&design, &ds.bold, &[1e-6]).unwrap();
    let planted = ndarray::concatenate(
        ndarray::Axis(0),
        &ds.ground_truth.weights.values().map(|w| w.view()).collect::<Vec<_>>(),
    )
    .unwrap();
    assert_eq!(planted.nrows(), cols);
    let err = (&ridge.weights - &planted).mapv(f64::abs).fold(0.0f64, |m, &v| m.max(v));
    assert!(err < 1e-5, "{err}");
}

#[test]
fn held_out_prediction_beats_chance() {
    let ds = dataset(Coverage::Uniform, 1.0);
    for (name, f) in &ds.features {
        let pred = fit_predict(f, &ds.bold, 0..4, 4..6);
        let r = pearson_per_parcel(pred.view(), slice_runs(&ds.bold, 4..6).view()).unwrap().mean_r;
        assert!(r > 0.2, "{name}: {r}");
    }
}

#[test]
fn stacking_complementary_sources() {
    let ds = dataset(Coverage::Complementary { cross_gain: 0.2 }, 1.0);
    let stack_truth = slice_runs(&ds.bold, 3..5);
    let test_truth = slice_runs(&ds.bold, 5..6);
    let mut stack_preds = Vec::new();
    let mut test_preds = Vec::new();
    for f in ds.features.values() {
        stack_preds.push(fit_predict(f, &ds.bold, 0..3, 3..5));
        test_preds.push(fit_predict(f, &ds.bold, 0..3, 5..6));
    }
    let views: Vec<_> = stack_preds.iter().map(|p| p.view()).collect();
    let model = fit_stacking(&views, stack_truth.view(), StackingMode::Simplex).unwrap();
    for p in 0..stack_truth.ncols() {
        let block = ndarray::Array2::from_shape_fn((stack_truth.nrows(), views.len()), |(t, m)| views[m][[t, p]]);
        let gram = block.t().dot(&block);
        let lin = block.t().dot(&stack_truth.data().column(p));
        let w = model.weights.row(p).to_owned();
        assert!(simplex_kkt_violation(&gram, &lin, &w) <= 1e-8);
    }
    let test_views: Vec<_> = test_preds.iter().map(|p| p.view()).collect();
    let stacked = model.apply(&test_views).unwrap();
    let r_stacked = pearson_per_parcel(stacked.view(), test_truth.view()).unwrap().mean_r;
    for p in &test_preds {
        let r = pearson_per_parcel(p.view(), test_truth.view()).unwrap().mean_r;
        assert!(r_stacked >= r + 0.02, "stacked {r_stacked} vs single {r}");
    }
}

#[test]
fn matrices_survive_files() {
    let ds = dataset(Coverage::Uniform, 1.0);
    let dir = tempfile::tempdir().unwrap();
    for format in [MatrixFormat::Binary, MatrixFormat::Csv] {
        let path = dir.path().join(match format {
            MatrixFormat::Binary => "bold.mbem",
            MatrixFormat::Csv => "bold.csv",
        });
        write_matrix(&ds.bold, &path, format).unwrap();
        let back = read_matrix(&path, format).unwrap();
        assert_eq!(back.data(), ds.bold.data());
    }
    let tags: BTreeSet<&str> = neuroencode::data::split::all_tags().collect();
    assert_eq!(tags.len(), 11);
}
