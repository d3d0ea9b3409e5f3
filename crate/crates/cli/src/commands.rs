//! The four subcommands. Each one reads the dataset, splits it, runs, and
//! writes its outputs under `output_dir`.

use std::fmt::Display;
use std::fs::{self, File};
use std::io::{BufWriter, Write};
use std::path::Path;
use std::time::Instant;

use anyhow::{anyhow, Context};
use ebmf::als::{write_model, FactorPair};
use ebmf::data::{read_ratings, write_split_manifest};
use ebmf::eb::write_trace_csv;
use ebmf::grid::write_grid_csv;
use ebmf::numerics::StreamLabel;
use ebmf::trace::write_smoothed_csv;
use ebmf::{
    als_train, build_sparse, grid_tune, init_factors, rmse, smooth, split, HyperParams, RngStream,
    SparseRatings, SplitPair,
};

use crate::config::{RunConfig, Tuner};

/// A failed command, classified by exit code.
#[derive(Debug)]
pub enum Failure {
    Usage(anyhow::Error),
    Data(anyhow::Error),
    Numerical(anyhow::Error),
}

impl Failure {
    pub fn code(&self) -> u8 {
        match self {
            Failure::Usage(_) => 1,
            Failure::Data(_) => 2,
            Failure::Numerical(_) => 3,
        }
    }

    pub fn error(&self) -> &anyhow::Error {
        match self {
            Failure::Usage(e) | Failure::Data(e) | Failure::Numerical(e) => e,
        }
    }
}

/// Sorts a library error raised while computing.
fn compute(e: ebmf::Error) -> Failure {
    if e.is_numerical() {
        Failure::Numerical(e.into())
    } else if e.is_data() {
        Failure::Data(e.into())
    } else {
        Failure::Usage(e.into())
    }
}

fn io(path: &Path) -> impl FnOnce(ebmf::Error) -> Failure + '_ {
    move |e| Failure::Usage(anyhow::Error::from(e).context(format!("writing {}", path.display())))
}

type Outcome<T = ()> = Result<T, Failure>;

struct Dataset {
    full: SparseRatings,
    split: SplitPair,
}

fn load(cfg: &RunConfig) -> Outcome<Dataset> {
    let path = &cfg.dataset_path;
    if !path.is_file() {
        return Err(Failure::Data(anyhow!("dataset not found: {}", path.display())));
    }
    let wrap = |e: ebmf::Error| Failure::Data(anyhow::Error::from(e).context(format!("reading {}", path.display())));
    let triples = read_ratings(path, cfg.dataset_format).map_err(wrap)?;
    let full = build_sparse(&triples).map_err(wrap)?;
    let split = split(&full, cfg.test_fraction, cfg.seed).map_err(wrap)?;
    if split.test.is_empty() {
        return Err(Failure::Data(anyhow!(
            "{}: no test ratings remain after the split",
            path.display()
        )));
    }
    log::info!(
        "{}: {} users, {} items, {} train / {} test ratings",
        path.display(),
        full.n_users(),
        full.n_items(),
        split.train.len(),
        split.test.len()
    );
    Ok(Dataset { full, split })
}

fn prepare_output(cfg: &RunConfig) -> Outcome {
    fs::create_dir_all(&cfg.output_dir)
        .with_context(|| format!("creating output directory {}", cfg.output_dir.display()))
        .map_err(Failure::Usage)
}

fn write_file(path: &Path, body: impl FnOnce(&mut BufWriter<File>) -> ebmf::Result<()>) -> Outcome {
    let file = File::create(path)
        .with_context(|| format!("creating {}", path.display()))
        .map_err(Failure::Usage)?;
    let mut w = BufWriter::new(file);
    body(&mut w).map_err(io(path))?;
    w.flush().map_err(|e| io(path)(e.into()))
}

/// Ordered `key = value` lines; `wall_time_ms` always comes last.
struct Metrics {
    lines: Vec<(String, String)>,
}

impl Metrics {
    fn new(command: &str, cfg: &RunConfig, data: &Dataset) -> Self {
        let mut m = Metrics { lines: Vec::new() };
        m.put("command", command);
        m.put("seed", cfg.seed);
        m.put("n_users", data.full.n_users());
        m.put("n_items", data.full.n_items());
        m.put("train_ratings", data.split.train.len());
        m.put("test_ratings", data.split.test.len());
        m.put("repaired", data.split.repaired);
        m
    }

    fn put(&mut self, key: &str, value: impl Display) {
        self.lines.push((key.to_string(), value.to_string()));
    }

    fn finish(mut self, cfg: &RunConfig, start: Instant) -> Outcome {
        self.put("wall_time_ms", start.elapsed().as_millis());
        for (k, v) in &self.lines {
            println!("{k:>20}  {v}");
        }
        let path = cfg.output_dir.join("metrics.txt");
        write_file(&path, |w| {
            for (k, v) in &self.lines {
                writeln!(w, "{k} = {v}")?;
            }
            Ok(())
        })
    }
}

fn write_split(cfg: &RunConfig, data: &Dataset) -> Outcome {
    let path = cfg.output_dir.join("split_manifest.csv");
    write_file(&path, |w| write_split_manifest(w, &data.full, &data.split))
}

fn write_model_file(cfg: &RunConfig, f: &FactorPair, h: &HyperParams) -> Outcome {
    let path = cfg.output_dir.join("model.txt");
    write_file(&path, |w| write_model(w, f, h))
}

fn initial_factors(train: &SparseRatings, k: usize, seed: u64) -> Outcome<FactorPair> {
    init_factors(
        train.n_users(),
        train.n_items(),
        k,
        &mut RngStream::derive(seed, StreamLabel::Init),
    )
    .map_err(compute)
}

struct Fit {
    factors: FactorPair,
    test_rmse: f64,
    sweeps: usize,
    converged: bool,
}

fn fit(cfg: &RunConfig, data: &Dataset, k: usize, h: &HyperParams) -> Outcome<Fit> {
    let train = &data.split.train;
    let init = initial_factors(train, k, cfg.seed)?;
    let (factors, report) = als_train(train, h, init, &cfg.als).map_err(compute)?;
    let test_rmse = rmse(&data.split.test, &factors).map_err(compute)?;
    Ok(Fit {
        factors,
        test_rmse,
        sweeps: report.sweeps,
        converged: report.converged,
    })
}

fn mode_error(command: &str, cfg: &RunConfig, wanted: &str) -> Failure {
    Failure::Usage(anyhow!(
        "`{command}` needs mode = {wanted}, but the config selects mode = {}",
        cfg.tuner.name()
    ))
}

pub fn train(cfg: &RunConfig) -> Outcome {
    let start = Instant::now();
    let Tuner::Fixed(h) = &cfg.tuner else {
        return Err(mode_error("train", cfg, "fixed"));
    };
    let data = load(cfg)?;
    prepare_output(cfg)?;
    let fit = fit(cfg, &data, cfg.k, h)?;
    write_model_file(cfg, &fit.factors, h)?;
    write_split(cfg, &data)?;
    let mut m = Metrics::new("train", cfg, &data);
    m.put("k", cfg.k);
    m.put("lambda1", h.lambda1);
    m.put("lambda2", h.lambda2);
    m.put("sweeps", fit.sweeps);
    m.put("als_converged", fit.converged);
    m.put("test_rmse", fit.test_rmse);
    m.finish(cfg, start)
}

pub fn tune_eb(cfg: &RunConfig) -> Outcome {
    let start = Instant::now();
    let Tuner::Eb(sa) = &cfg.tuner else {
        return Err(mode_error("tune-eb", cfg, "eb"));
    };
    let data = load(cfg)?;
    prepare_output(cfg)?;
    let result = ebmf::tune_eb(&data.split.train, cfg.k, sa).map_err(compute)?;
    let tune_ms = start.elapsed().as_millis();
    let smoothed = smooth(&result.trace, cfg.smooth_window).map_err(compute)?;
    write_file(&cfg.output_dir.join("trace.csv"), |w| write_trace_csv(w, &result.trace))?;
    write_file(&cfg.output_dir.join("trace_smoothed.csv"), |w| {
        write_smoothed_csv(w, &smoothed)
    })?;

    let h = result.lambda_hat;
    let fit = fit(cfg, &data, cfg.k, &h)?;
    write_model_file(cfg, &fit.factors, &h)?;
    write_split(cfg, &data)?;

    let mut m = Metrics::new("tune-eb", cfg, &data);
    m.put("k", cfg.k);
    m.put("lambda1_hat", h.lambda1);
    m.put("lambda2_hat", h.lambda2);
    m.put("converged", result.converged);
    m.put("iterations", result.iterations);
    m.put("acceptance_rate", result.acceptance_rate);
    m.put("floor_hits", result.floor_hits);
    m.put("sweeps", fit.sweeps);
    m.put("als_converged", fit.converged);
    m.put("test_rmse", fit.test_rmse);
    m.put("tune_wall_time_ms", tune_ms);
    m.finish(cfg, start)
}

pub fn tune_grid(cfg: &RunConfig) -> Outcome {
    let start = Instant::now();
    let Tuner::Grid(spec) = &cfg.tuner else {
        return Err(mode_error("tune-grid", cfg, "grid"));
    };
    let data = load(cfg)?;
    prepare_output(cfg)?;
    let report = grid_tune(&data.split, cfg.k, spec, cfg.seed, &cfg.als).map_err(compute)?;
    write_file(&cfg.output_dir.join("grid_report.csv"), |w| write_grid_csv(w, &report))?;
    write_split(cfg, &data)?;
    let best = report.best_cell();
    let mut m = Metrics::new("tune-grid", cfg, &data);
    m.put("k", cfg.k);
    m.put("cells", report.cells.len());
    m.put("best_lambda1", best.hyper.lambda1);
    m.put("best_lambda2", best.hyper.lambda2);
    m.put("best_sweeps", best.sweeps);
    m.put("test_rmse", best.test_rmse);
    m.finish(cfg, start)
}

pub fn sweep_k(cfg: &RunConfig) -> Outcome {
    let start = Instant::now();
    let ks = cfg
        .k_values
        .clone()
        .ok_or_else(|| Failure::Usage(anyhow!("sweep-k needs `k_values` in the config or --k-values")))?;
    if ks.is_empty() {
        return Err(Failure::Usage(anyhow!("k_values is empty")));
    }
    if ks.contains(&0) {
        return Err(Failure::Usage(anyhow!("k_values must all be at least 1")));
    }
    for (i, k) in ks.iter().enumerate() {
        if ks[..i].contains(k) {
            return Err(Failure::Usage(anyhow!("k = {k} appears twice in k_values")));
        }
    }
    if matches!(cfg.tuner, Tuner::Eb(_)) {
        return Err(mode_error("sweep-k", cfg, "fixed or grid"));
    }
    let data = load(cfg)?;
    prepare_output(cfg)?;

    let mut rows = Vec::with_capacity(ks.len());
    for &k in &ks {
        let (h, test_rmse) = match &cfg.tuner {
            Tuner::Fixed(h) => (*h, fit(cfg, &data, k, h)?.test_rmse),
            Tuner::Grid(spec) => {
                let report = grid_tune(&data.split, k, spec, cfg.seed, &cfg.als).map_err(compute)?;
                let best = report.best_cell();
                (best.hyper, best.test_rmse)
            }
            Tuner::Eb(_) => unreachable!("rejected above"),
        };
        log::info!("k = {k}: test RMSE {test_rmse}");
        rows.push((k, test_rmse, h));
    }
    write_file(&cfg.output_dir.join("k_sweep.csv"), |w| {
        writeln!(w, "k,test_rmse,lambda1,lambda2")?;
        for (k, r, h) in &rows {
            writeln!(w, "{k},{r:.15e},{},{}", h.lambda1, h.lambda2)?;
        }
        Ok(())
    })?;

    let mut best = 0;
    for (i, row) in rows.iter().enumerate() {
        if row.1 < rows[best].1 {
            best = i;
        }
    }
    let mut m = Metrics::new("sweep-k", cfg, &data);
    m.put("mode", cfg.tuner.name());
    for (k, r, _) in &rows {
        m.put(&format!("test_rmse_k{k}"), r);
    }
    m.put("min_k", rows[best].0);
    m.put("min_test_rmse", rows[best].1);
    m.finish(cfg, start)
}
