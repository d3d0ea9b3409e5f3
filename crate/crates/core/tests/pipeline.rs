use std::io::Write;

use ebmf::als::{read_model, write_model};
use ebmf::data::{read_ratings, write_split_manifest};
use ebmf::eb::write_trace_csv;
use ebmf::{
    als_train, build_sparse, grid_tune, init_factors, rmse, smooth, split, tune_eb, AlsConfig, GridSpec,
    HyperParams, RatingFormat, RngStream, SAConfig,
};

/// Ratings from a rank-2 model plus a little noise, written as `u.data`.
fn synthetic_file() -> tempfile::NamedTempFile {
    let mut rng = RngStream::new(2024);
    let users: Vec<[f64; 2]> = (0..40).map(|_| [1.0 + rng.uniform(), rng.uniform()]).collect();
    let items: Vec<[f64; 2]> = (0..30).map(|_| [1.0 + rng.uniform(), rng.uniform()]).collect();
    let mut file = tempfile::NamedTempFile::new().unwrap();
    for (u, a) in users.iter().enumerate() {
        for (i, b) in items.iter().enumerate() {
            if rng.uniform() < 0.6 {
                let r = (a[0] * b[0] + a[1] * b[1] + 0.1 * rng.standard_normal()).clamp(0.5, 5.0);
                writeln!(file, "{}\t{}\t{r}\t{}", u + 100, i + 500, 880000000 + u * 100 + i).unwrap();
            }
        }
    }
    file.flush().unwrap();
    file
}

#[test]
fn file_to_model_round_trip() {
    let file = synthetic_file();
    let data = build_sparse(&read_ratings(file.path(), RatingFormat::Tab).unwrap()).unwrap();
    assert_eq!((data.n_users(), data.n_items()), (40, 30));
    let pair = split(&data, 0.2, 42).unwrap();

    let mut manifest = Vec::new();
    write_split_manifest(&mut manifest, &data, &pair).unwrap();
    let manifest = String::from_utf8(manifest).unwrap();
    assert_eq!(manifest.lines().count(), data.len() + 1);
    assert_eq!(manifest.matches(",test\n").count(), pair.test.len());

    let h = HyperParams::new(1e-4, 1e-4).unwrap();
    let init = init_factors(40, 30, 2, &mut RngStream::new(1)).unwrap();
    let (factors, report) = als_train(&pair.train, &h, init, &AlsConfig::default()).unwrap();
    let history = &report.train_loss_history;
    assert!(history.last().unwrap() < &history[0]);
    let test_rmse = rmse(&pair.test, &factors).unwrap();
    assert!(test_rmse < 0.3, "{test_rmse}");

    let mut buf = Vec::new();
    write_model(&mut buf, &factors, &h).unwrap();
    let (back, h_back) = read_model(buf.as_slice()).unwrap();
    assert_eq!(h_back, h);
    assert_eq!(rmse(&pair.test, &back).unwrap(), test_rmse);
}

#[test]
fn grid_beats_heavy_regularization() {
    let file = synthetic_file();
    let data = build_sparse(&read_ratings(file.path(), RatingFormat::Tab).unwrap()).unwrap();
    let pair = split(&data, 0.2, 42).unwrap();
    let spec = GridSpec::new(vec![1e-5, 1e-3, 1e-1], vec![1e-5, 1e-3, 1e-1]).unwrap();
    let report = grid_tune(&pair, 2, &spec, 42, &AlsConfig::default()).unwrap();
    let heaviest = report.cells.last().unwrap();
    assert!(report.best_cell().test_rmse < heaviest.test_rmse);
    assert!(report.best_cell().hyper.lambda1 < 1e-1);
}

#[test]
fn tuner_trace_and_smoothing() {
    let file = synthetic_file();
    let data = build_sparse(&read_ratings(file.path(), RatingFormat::Tab).unwrap()).unwrap();
    let pair = split(&data, 0.2, 42).unwrap();
    let cfg = SAConfig {
        max_iters: 2_000,
        ..SAConfig::default()
    };
    let a = tune_eb(&pair.train, 2, &cfg).unwrap();
    let b = tune_eb(&pair.train, 2, &cfg).unwrap();
    assert_eq!(a.trace, b.trace);
    assert!(a.lambda_hat.lambda1 <= cfg.lambda0.lambda1);

    let mut csv = Vec::new();
    write_trace_csv(&mut csv, &a.trace).unwrap();
    assert_eq!(String::from_utf8(csv).unwrap().lines().count(), a.trace.len() + 1);

    let s = smooth(&a.trace, 100).unwrap();
    assert_eq!(s.rows.len(), a.trace.len());
}
