//! Seeded quadrature sampling by inverse-CDF lookup, plus a rejection
//! sampler kept as an independent cross-check.

use std::io::{BufRead, Write};

use rand::Rng;
use serde::{Deserialize, Serialize};

use crate::error::{Error, Result};
use crate::seed;
use crate::states::{density_grid, Family, StateSpec, X_MAX, X_MIN};

pub const DEFAULT_RESOLUTION: usize = 16_384;
pub const MIN_RESOLUTION: usize = 1024;

/// Grid points used to bound the density for rejection sampling.
const ENVELOPE_GRID: usize = 10_001;
const ENVELOPE_MARGIN: f64 = 1.1;

/// An ordered list of measured or simulated quadrature outcomes at one phase.
#[derive(Clone, Debug, PartialEq, Serialize, Deserialize)]
pub struct QuadratureBatch {
    pub values: Vec<f64>,
    pub phi: f64,
    pub spec: Option<StateSpec>,
    pub seed: Option<u64>,
}

impl QuadratureBatch {
    /// A batch of external data with no generative model attached.
    pub fn external(values: Vec<f64>, phi: f64) -> Result<Self> {
        let batch = QuadratureBatch { values, phi, spec: None, seed: None };
        batch.validate()?;
        Ok(batch)
    }

    pub fn len(&self) -> usize {
        self.values.len()
    }

    pub fn is_empty(&self) -> bool {
        self.values.is_empty()
    }

    pub fn validate(&self) -> Result<()> {
        if self.values.is_empty() {
            return Err(Error::Input("empty batch".into()));
        }
        if let Some(i) = self.values.iter().position(|v| !v.is_finite()) {
            return Err(Error::Input(format!("non-finite quadrature value at index {i}")));
        }
        Ok(())
    }
}

/// Cumulative distribution of a density tabulated on a uniform grid over
/// the measurement window.
#[derive(Clone, Debug)]
pub struct SamplerTable {
    pub grid: Vec<f64>,
    pub cdf: Vec<f64>,
    pub spec: StateSpec,
}

/// Tabulates the CDF of `spec` on `resolution` points over `[-8, 8]` with the
/// trapezoid rule, renormalized so the last entry is exactly 1. Mass outside
/// the window is folded in by the renormalization.
pub fn build_table(spec: &StateSpec, resolution: usize) -> Result<SamplerTable> {
    if resolution < MIN_RESOLUTION {
        return Err(Error::Input(format!("sampler resolution must be at least {MIN_RESOLUTION}, got {resolution}")));
    }
    let points = density_grid(spec, X_MIN, X_MAX, resolution)?;
    let mut grid = Vec::with_capacity(resolution);
    let mut cdf = Vec::with_capacity(resolution);
    let mut acc = 0.0;
    let mut prev: Option<(f64, f64)> = None;
    for &(x, p) in &points {
        if !(p >= 0.0 && p.is_finite()) {
            return Err(Error::Internal(format!("density {p} at x = {x} is not a valid probability density")));
        }
        if let Some((px, pp)) = prev {
            acc += 0.5 * (p + pp) * (x - px);
        }
        grid.push(x);
        cdf.push(acc);
        prev = Some((x, p));
    }
    if acc.is_nan() || acc <= 0.0 {
        return Err(Error::Parameter(format!(
            "{} state has no probability mass inside [{X_MIN}, {X_MAX}]",
            spec.family
        )));
    }
    for c in cdf.iter_mut() {
        *c /= acc;
    }
    if cdf.windows(2).any(|w| w[1] < w[0]) {
        return Err(Error::Internal("cumulative distribution is not monotone".into()));
    }
    *cdf.last_mut().expect("resolution >= 1024") = 1.0;
    Ok(SamplerTable { grid, cdf, spec: *spec })
}

impl SamplerTable {
    /// Inverse CDF with linear interpolation between nodes.
    pub fn quantile(&self, u: f64) -> f64 {
        let idx = self.cdf.partition_point(|&c| c <= u).clamp(1, self.cdf.len() - 1);
        let i = idx - 1;
        let (c0, c1) = (self.cdf[i], self.cdf[idx]);
        let t = if c1 > c0 { ((u - c0) / (c1 - c0)).clamp(0.0, 1.0) } else { 0.0 };
        self.grid[i] + t * (self.grid[idx] - self.grid[i])
    }
}

/// Draws `count` outcomes from `table`. The same seed always yields the same
/// batch.
pub fn sample(table: &SamplerTable, count: usize, seed: u64) -> Result<QuadratureBatch> {
    if count == 0 {
        return Err(Error::Input("sample count must be at least 1".into()));
    }
    let mut rng = seed::rng(seed);
    let values = (0..count).map(|_| table.quantile(rng.gen::<f64>())).collect();
    Ok(QuadratureBatch { values, phi: table.spec.phi, spec: Some(table.spec), seed: Some(seed) })
}

/// Convenience: build a default-resolution table and sample from it.
pub fn simulate(spec: &StateSpec, count: usize, seed: u64) -> Result<QuadratureBatch> {
    let table = build_table(spec, DEFAULT_RESOLUTION)?;
    sample(&table, count, seed)
}

/// Exact rejection sampling on `[-8, 8]` under a flat envelope.
pub fn sample_rejection(spec: &StateSpec, count: usize, seed: u64) -> Result<QuadratureBatch> {
    if count == 0 {
        return Err(Error::Input("sample count must be at least 1".into()));
    }
    let peak = density_grid(spec, X_MIN, X_MAX, ENVELOPE_GRID)?.iter().map(|&(_, p)| p).fold(0.0, f64::max);
    if !(peak > 0.0 && peak.is_finite()) {
        return Err(Error::Parameter(format!("{} state has no usable density inside [{X_MIN}, {X_MAX}]", spec.family)));
    }
    let envelope = peak * ENVELOPE_MARGIN;
    let mut rng = seed::rng(seed);
    let mut values = Vec::with_capacity(count);
    while values.len() < count {
        let x = rng.gen_range(X_MIN..=X_MAX);
        let p = spec.density_unchecked(x);
        if p > envelope {
            return Err(Error::Internal(format!("density {p} at x = {x} exceeds envelope {envelope}")));
        }
        if rng.gen::<f64>() * envelope < p {
            values.push(x);
        }
    }
    Ok(QuadratureBatch { values, phi: spec.phi, spec: Some(*spec), seed: Some(seed) })
}

/// Writes the event-file format: one `key=value` header line, then one value
/// per line with 17 significant digits.
pub fn write_batch<W: Write>(batch: &QuadratureBatch, mut out: W) -> Result<()> {
    let seed = batch.seed.map_or_else(|| "none".to_string(), |s| s.to_string());
    write!(out, "phi={} seed={seed}", batch.phi)?;
    match &batch.spec {
        Some(s) => {
            write!(out, " family={} alpha={} nbar={} n={} xi={} eta={}", s.family, s.alpha, s.nbar, s.n, s.xi, s.eta)?
        }
        None => write!(out, " family=none")?,
    }
    writeln!(out)?;
    for v in &batch.values {
        writeln!(out, "{v:.16e}")?;
    }
    Ok(())
}

/// Reads an event file. The header line is optional so that bare columns of
/// experimental data are accepted; `default_phi` applies when it is absent.
pub fn read_batch<R: BufRead>(input: R, default_phi: f64) -> Result<QuadratureBatch> {
    let mut values = Vec::new();
    let mut phi = default_phi;
    let mut seed = None;
    let mut fields: Vec<(String, String)> = Vec::new();
    let mut seen_data = false;
    for (lineno, line) in input.lines().enumerate() {
        let line = line?;
        let text = line.trim();
        if text.is_empty() || text.starts_with('#') {
            continue;
        }
        if !seen_data && values.is_empty() && fields.is_empty() && text.contains('=') {
            for tok in text.split_whitespace() {
                let (k, v) = tok
                    .split_once('=')
                    .ok_or_else(|| Error::Format(format!("line {}: malformed header token '{tok}'", lineno + 1)))?;
                fields.push((k.to_string(), v.to_string()));
            }
            continue;
        }
        seen_data = true;
        let v: f64 = text
            .parse()
            .map_err(|_| Error::Format(format!("line {}: cannot parse '{text}' as a number", lineno + 1)))?;
        if !v.is_finite() {
            return Err(Error::Format(format!("line {}: non-finite value", lineno + 1)));
        }
        values.push(v);
    }
    let get = |key: &str| fields.iter().find(|(k, _)| k == key).map(|(_, v)| v.as_str());
    let num = |key: &str| -> Result<Option<f64>> {
        get(key)
            .map(|v| v.parse::<f64>().map_err(|_| Error::Format(format!("header field {key}='{v}' is not a number"))))
            .transpose()
    };
    if let Some(p) = num("phi")? {
        phi = p;
    }
    if let Some(s) = get("seed").filter(|s| *s != "none") {
        seed = Some(s.parse().map_err(|_| Error::Format(format!("header field seed='{s}' is not an integer")))?);
    }
    let spec = match get("family").filter(|f| *f != "none") {
        Some(tag) => {
            let family: Family = tag.parse().map_err(|e: Error| Error::Format(e.to_string()))?;
            let mut s = StateSpec::new(family);
            s.phi = phi;
            s.alpha = num("alpha")?.unwrap_or(0.0);
            s.nbar = num("nbar")?.unwrap_or(0.0);
            s.xi = num("xi")?.unwrap_or(0.0);
            s.eta = num("eta")?.unwrap_or(1.0);
            if let Some(n) = get("n") {
                s.n = n.parse().map_err(|_| Error::Format(format!("header field n='{n}' is not an integer")))?;
            }
            Some(s)
        }
        None => None,
    };
    if values.is_empty() {
        return Err(Error::Input("empty batch".into()));
    }
    Ok(QuadratureBatch { values, phi, spec, seed })
}
