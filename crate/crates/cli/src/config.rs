//! Flat `key = value` run configuration.
//!
//! ```text
//! # comments start with '#'
//! dataset_path = ../data/ml-100k/u.data
//! dataset_format = tab
//! mode = grid
//! grid.lambda1 = 1e-5, 3e-5, 1e-4
//! ```
//!
//! Relative paths are resolved against the directory holding the config
//! file.

use std::collections::BTreeMap;
use std::path::{Path, PathBuf};
use std::str::FromStr;

use anyhow::{anyhow, bail, Context, Result};
use ebmf::{AlsConfig, GridSpec, HyperParams, ProposalConfig, RatingFormat, SAConfig};

/// How the regularization weights are chosen.
#[derive(Debug, Clone)]
pub enum Tuner {
    Fixed(HyperParams),
    Eb(SAConfig),
    Grid(GridSpec),
}

impl Tuner {
    pub fn name(&self) -> &'static str {
        match self {
            Tuner::Fixed(_) => "fixed",
            Tuner::Eb(_) => "eb",
            Tuner::Grid(_) => "grid",
        }
    }
}

#[derive(Debug, Clone)]
pub struct RunConfig {
    pub dataset_path: PathBuf,
    pub dataset_format: RatingFormat,
    pub k: usize,
    pub test_fraction: f64,
    pub seed: u64,
    pub als: AlsConfig,
    pub tuner: Tuner,
    pub output_dir: PathBuf,
    pub smooth_window: usize,
    pub k_values: Option<Vec<usize>>,
}

const COMMON_KEYS: &[&str] = &[
    "dataset_path",
    "dataset_format",
    "k",
    "test_fraction",
    "seed",
    "output_dir",
    "mode",
    "als.max_sweeps",
    "als.loss_tol",
    "k_values",
];
const FIXED_KEYS: &[&str] = &["lambda1", "lambda2"];
const EB_KEYS: &[&str] = &[
    "eb.a",
    "eb.tol",
    "eb.max_iters",
    "eb.alpha",
    "eb.sigma1",
    "eb.sigma2",
    "eb.lambda1_init",
    "eb.lambda2_init",
    "eb.smooth_window",
];
const GRID_KEYS: &[&str] = &["grid.lambda1", "grid.lambda2"];

struct Entries {
    values: BTreeMap<String, String>,
}

impl Entries {
    fn get<T: FromStr>(&self, key: &str) -> Result<Option<T>>
    where
        T::Err: std::fmt::Display,
    {
        match self.values.get(key) {
            None => Ok(None),
            Some(raw) => raw
                .parse()
                .map(Some)
                .map_err(|e| anyhow!("config key `{key}`: cannot parse `{raw}`: {e}")),
        }
    }

    fn get_or<T: FromStr>(&self, key: &str, default: T) -> Result<T>
    where
        T::Err: std::fmt::Display,
    {
        Ok(self.get(key)?.unwrap_or(default))
    }

    fn require<T: FromStr>(&self, key: &str) -> Result<T>
    where
        T::Err: std::fmt::Display,
    {
        self.get(key)?
            .ok_or_else(|| anyhow!("config key `{key}` is required"))
    }

    fn list<T: FromStr>(&self, key: &str) -> Result<Option<Vec<T>>>
    where
        T::Err: std::fmt::Display,
    {
        self.values.get(key).map(|raw| parse_list(key, raw)).transpose()
    }
}

pub fn parse_list<T: FromStr>(key: &str, raw: &str) -> Result<Vec<T>>
where
    T::Err: std::fmt::Display,
{
    raw.split(',')
        .map(str::trim)
        .filter(|s| !s.is_empty())
        .map(|s| {
            s.parse()
                .map_err(|e| anyhow!("`{key}`: cannot parse `{s}`: {e}"))
        })
        .collect()
}

fn parse_entries(text: &str) -> Result<Entries> {
    let mut values = BTreeMap::new();
    for (idx, line) in text.lines().enumerate() {
        let line = line.split('#').next().unwrap_or("").trim();
        if line.is_empty() {
            continue;
        }
        let (key, value) = line
            .split_once('=')
            .ok_or_else(|| anyhow!("config line {}: expected `key = value`", idx + 1))?;
        let key = key.trim().to_string();
        if values.insert(key.clone(), value.trim().to_string()).is_some() {
            bail!("config line {}: key `{key}` given twice", idx + 1);
        }
    }
    Ok(Entries { values })
}

impl RunConfig {
    pub fn load(path: &Path) -> Result<RunConfig> {
        let text = std::fs::read_to_string(path)
            .with_context(|| format!("cannot read config file {}", path.display()))?;
        let base = path.parent().unwrap_or(Path::new("."));
        RunConfig::parse(&text, base)
    }

    pub fn parse(text: &str, base: &Path) -> Result<RunConfig> {
        let e = parse_entries(text)?;
        let mode: String = e.require("mode")?;
        let own: &[&str] = match mode.as_str() {
            "fixed" => FIXED_KEYS,
            "eb" => EB_KEYS,
            "grid" => GRID_KEYS,
            other => bail!("unknown mode `{other}` (expected fixed, eb or grid)"),
        };
        for key in e.values.keys() {
            let k = key.as_str();
            if COMMON_KEYS.contains(&k) || own.contains(&k) {
                continue;
            }
            if FIXED_KEYS.contains(&k) || EB_KEYS.contains(&k) || GRID_KEYS.contains(&k) {
                bail!("config key `{k}` does not belong to mode `{mode}`; exactly one mode may be configured");
            }
            bail!("unknown config key `{k}`");
        }

        let resolve = |p: PathBuf| if p.is_absolute() { p } else { base.join(p) };
        let dataset_path = resolve(e.require::<PathBuf>("dataset_path")?);
        let output_dir = resolve(e.get_or("output_dir", PathBuf::from("out"))?);
        let dataset_format: RatingFormat = e.get_or("dataset_format", RatingFormat::Tab)?;
        let k: usize = e.get_or("k", 5)?;
        if k == 0 {
            bail!("k must be at least 1");
        }
        let test_fraction: f64 = e.get_or("test_fraction", 0.2)?;
        if !(test_fraction > 0.0 && test_fraction < 1.0) {
            bail!("test_fraction = {test_fraction} must be in (0, 1)");
        }
        let seed: u64 = e.get_or("seed", 42)?;
        let defaults = AlsConfig::default();
        let als = AlsConfig {
            max_sweeps: e.get_or("als.max_sweeps", defaults.max_sweeps)?,
            loss_tol: e.get_or("als.loss_tol", defaults.loss_tol)?,
        };
        if als.max_sweeps == 0 {
            bail!("als.max_sweeps must be at least 1");
        }
        let mut smooth_window = ebmf::trace::DEFAULT_WINDOW;

        let tuner = match mode.as_str() {
            "fixed" => Tuner::Fixed(HyperParams::new(e.require("lambda1")?, e.require("lambda2")?)?),
            "eb" => {
                let d = SAConfig::default();
                let cfg = SAConfig {
                    a: e.get_or("eb.a", d.a)?,
                    tol: e.get_or("eb.tol", d.tol)?,
                    max_iters: e.get_or("eb.max_iters", d.max_iters)?,
                    proposal: ProposalConfig {
                        alpha: e.get_or("eb.alpha", d.proposal.alpha)?,
                        sigma1: e.get_or("eb.sigma1", d.proposal.sigma1)?,
                        sigma2: e.get_or("eb.sigma2", d.proposal.sigma2)?,
                    },
                    lambda0: HyperParams {
                        lambda1: e.get_or("eb.lambda1_init", d.lambda0.lambda1)?,
                        lambda2: e.get_or("eb.lambda2_init", d.lambda0.lambda2)?,
                    },
                    seed,
                };
                cfg.validate()?;
                smooth_window = e.get_or("eb.smooth_window", smooth_window)?;
                if smooth_window == 0 {
                    bail!("eb.smooth_window must be at least 1");
                }
                Tuner::Eb(cfg)
            }
            _ => {
                let axis = |key: &str| -> Result<Vec<f64>> {
                    Ok(e.list(key)?.unwrap_or_else(|| ebmf::grid::DEFAULT_GRID.to_vec()))
                };
                Tuner::Grid(GridSpec::new(axis("grid.lambda1")?, axis("grid.lambda2")?)?)
            }
        };
        Ok(RunConfig {
            dataset_path,
            dataset_format,
            k,
            test_fraction,
            seed,
            als,
            tuner,
            output_dir,
            smooth_window,
            k_values: e.list("k_values")?,
        })
    }

    /// Applies a new seed everywhere it is used.
    pub fn set_seed(&mut self, seed: u64) {
        self.seed = seed;
        if let Tuner::Eb(cfg) = &mut self.tuner {
            cfg.seed = seed;
        }
    }
}
