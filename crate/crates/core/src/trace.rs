//! Moving-average smoothing of tuner traces.

use std::io::Write;

use crate::eb::SaTrace;
use crate::error::{Error, Result};

pub const DEFAULT_WINDOW: usize = 100;

#[derive(Debug, Clone, Copy, PartialEq)]
pub struct SmoothedRow {
    pub iter: u64,
    pub raw_energy: f64,
    pub smoothed_energy: f64,
}

#[derive(Debug, Clone, PartialEq)]
pub struct SmoothedTrace {
    pub window: usize,
    pub rows: Vec<SmoothedRow>,
}

/// Trailing moving average of `values`; the first `window - 1` outputs
/// average over what is available.
pub fn trailing_mean(values: &[f64], window: usize) -> Result<Vec<f64>> {
    if window < 1 {
        return Err(Error::InvalidArgument("smoothing window must be at least 1".into()));
    }
    Ok((0..values.len())
        .map(|i| {
            let span = &values[(i + 1).saturating_sub(window)..=i];
            span.iter().sum::<f64>() / span.len() as f64
        })
        .collect())
}

pub fn smooth(trace: &SaTrace, window: usize) -> Result<SmoothedTrace> {
    let raw = trace.energies();
    let smoothed = trailing_mean(&raw, window)?;
    Ok(SmoothedTrace {
        window,
        rows: trace
            .records
            .iter()
            .zip(smoothed)
            .map(|(r, s)| SmoothedRow {
                iter: r.iter,
                raw_energy: r.energy,
                smoothed_energy: s,
            })
            .collect(),
    })
}

/// Writes `iter,raw_energy,smoothed_energy`.
pub fn write_smoothed_csv<W: Write>(mut w: W, s: &SmoothedTrace) -> Result<()> {
    writeln!(w, "iter,raw_energy,smoothed_energy")?;
    for r in &s.rows {
        writeln!(w, "{},{:.15e},{:.15e}", r.iter, r.raw_energy, r.smoothed_energy)?;
    }
    Ok(())
}
