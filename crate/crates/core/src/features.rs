//! Normalized 160-bin histograms of quadrature data over `[-8, 8]`.

use std::io::Write;

use rand::seq::index;
use serde::{Deserialize, Serialize};

use crate::error::{Error, Result};
use crate::sampler::QuadratureBatch;
use crate::seed;
use crate::states::{X_MAX, X_MIN};

pub const NUM_BINS: usize = 160;
pub const BIN_WIDTH: f64 = 0.1;

#[derive(Clone, Debug, PartialEq, Serialize, Deserialize)]
pub struct FeatureVector {
    pub bins: Vec<f64>,
    pub kept: usize,
    pub dropped: usize,
}

/// Bin index of `x`, or `None` outside the window. Bins are half-open
/// `[a, b)` except the last, which also takes `x = 8`.
pub fn bin_index(x: f64) -> Option<usize> {
    if !(X_MIN..=X_MAX).contains(&x) {
        return None;
    }
    let i = ((x - X_MIN) / BIN_WIDTH).floor() as usize;
    Some(i.min(NUM_BINS - 1))
}

fn histogram<I: IntoIterator<Item = f64>>(values: I) -> Result<FeatureVector> {
    let mut counts = [0usize; NUM_BINS];
    let mut kept = 0;
    let mut dropped = 0;
    for x in values {
        match bin_index(x) {
            Some(i) => {
                counts[i] += 1;
                kept += 1;
            }
            None => dropped += 1,
        }
    }
    if kept + dropped == 0 {
        return Err(Error::Input("empty batch".into()));
    }
    if kept == 0 {
        return Err(Error::EmptyFeature);
    }
    let total = kept as f64;
    let bins = counts.iter().map(|&c| c as f64 / total).collect();
    Ok(FeatureVector { bins, kept, dropped })
}

pub fn featurize(batch: &QuadratureBatch) -> Result<FeatureVector> {
    histogram(batch.values.iter().copied())
}

/// Histogram of a uniformly random subset of `size` events, drawn without
/// replacement.
pub fn featurize_subsample(batch: &QuadratureBatch, size: usize, seed: u64) -> Result<FeatureVector> {
    if size == 0 || size > batch.len() {
        return Err(Error::Input(format!("subsample size must lie in [1, {}], got {size}", batch.len())));
    }
    if size == batch.len() {
        return featurize(batch);
    }
    let mut rng = seed::rng(seed);
    let picked = index::sample(&mut rng, batch.len(), size);
    histogram(picked.iter().map(|i| batch.values[i]))
}

impl FeatureVector {
    pub fn validate(&self) -> Result<()> {
        if self.bins.len() != NUM_BINS {
            return Err(Error::Input(format!("feature vector has {} bins, expected {NUM_BINS}", self.bins.len())));
        }
        Ok(())
    }

    pub fn csv_header() -> String {
        let mut cols: Vec<String> = (0..NUM_BINS).map(|i| format!("bin{i}")).collect();
        cols.push("kept".into());
        cols.push("dropped".into());
        cols.join(",")
    }

    pub fn write_csv_row<W: Write>(&self, mut out: W) -> Result<()> {
        for b in &self.bins {
            write!(out, "{b},")?;
        }
        writeln!(out, "{},{}", self.kept, self.dropped)?;
        Ok(())
    }

    /// Parses the 162 columns written by [`FeatureVector::write_csv_row`].
    pub fn from_csv_fields(fields: &[&str]) -> Result<Self> {
        if fields.len() != NUM_BINS + 2 {
            return Err(Error::Format(format!("feature row has {} columns, expected {}", fields.len(), NUM_BINS + 2)));
        }
        let bins = fields[..NUM_BINS]
            .iter()
            .map(|f| f.trim().parse::<f64>().map_err(|_| Error::Format(format!("bad feature value '{f}'"))))
            .collect::<Result<Vec<_>>>()?;
        let count = |f: &str| f.trim().parse::<usize>().map_err(|_| Error::Format(format!("bad count '{f}'")));
        Ok(FeatureVector { bins, kept: count(fields[NUM_BINS])?, dropped: count(fields[NUM_BINS + 1])? })
    }
}
