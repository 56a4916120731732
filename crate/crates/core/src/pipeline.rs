//! Simulated training corpora: parameter draws, quadrature sampling,
//! featurization and labels, with per-example provenance.

use std::io::{BufRead, Write};

use rand::Rng;
use rayon::prelude::*;
use serde::{Deserialize, Serialize};

use crate::error::{Error, Result};
use crate::features::{featurize, FeatureVector, NUM_BINS};
use crate::sampler::{build_table, sample, DEFAULT_RESOLUTION};
use crate::seed::{derive_seed, rng};
use crate::states::{ClassLabel, Family, StateSpec};

/// Closed interval of a continuous parameter; `lo == hi` pins it.
#[derive(Clone, Copy, Debug, PartialEq, Serialize, Deserialize)]
pub struct Range {
    pub lo: f64,
    pub hi: f64,
}

impl Range {
    pub const ZERO: Range = Range { lo: 0.0, hi: 0.0 };

    pub fn new(lo: f64, hi: f64) -> Self {
        Range { lo, hi }
    }

    fn draw<R: Rng>(&self, r: &mut R) -> f64 {
        let u: f64 = r.gen();
        self.lo + (self.hi - self.lo) * u
    }
}

#[derive(Clone, Debug, PartialEq, Serialize, Deserialize)]
pub struct FamilyConfig {
    pub family: Family,
    pub alpha: Range,
    pub nbar: Range,
    /// Inclusive photon-number range.
    pub n: (u32, u32),
    pub xi: Range,
    pub label: ClassLabel,
}

impl FamilyConfig {
    pub fn new(family: Family) -> Self {
        FamilyConfig {
            family,
            alpha: Range::ZERO,
            nbar: Range::ZERO,
            n: (0, 0),
            xi: Range::ZERO,
            label: family.label(),
        }
    }

    fn with_alpha(mut self, lo: f64, hi: f64) -> Self {
        self.alpha = Range::new(lo, hi);
        self
    }

    fn draw_spec<R: Rng>(&self, eta: f64, phi: f64, r: &mut R) -> StateSpec {
        let mut s = StateSpec::new(self.family);
        s.eta = eta;
        s.phi = phi;
        s.alpha = self.alpha.draw(r);
        s.nbar = self.nbar.draw(r);
        s.xi = self.xi.draw(r);
        s.n = r.gen_range(self.n.0..=self.n.1);
        s
    }

    fn validate(&self) -> Result<()> {
        let ranges = [self.alpha, self.nbar, self.xi];
        if ranges.iter().any(|r| !(r.lo.is_finite() && r.hi.is_finite() && r.lo <= r.hi)) || self.n.0 > self.n.1 {
            return Err(Error::Config(format!("invalid parameter range for family {}", self.family)));
        }
        Ok(())
    }
}

#[derive(Clone, Debug, PartialEq, Serialize, Deserialize)]
pub struct CorpusConfig {
    pub families: Vec<FamilyConfig>,
    pub vectors_per_family: usize,
    pub events_per_vector: usize,
    pub eta: f64,
    pub phi: f64,
    pub seed: u64,
    pub resolution: usize,
}

/// Coherent, thermal and coherent-mixture states as the classical set;
/// Fock, squeezed-coherent and photon-added coherent states as the
/// nonclassical set.
pub fn default_training_config() -> CorpusConfig {
    let thermal = FamilyConfig { nbar: Range::new(0.0, 5.0), ..FamilyConfig::new(Family::Thermal) };
    let fock = FamilyConfig { n: (1, 6), ..FamilyConfig::new(Family::Fock) };
    let squeezed =
        FamilyConfig { xi: Range::new(0.5, 1.0), ..FamilyConfig::new(Family::SqueezedCoherent) }.with_alpha(-5.0, 5.0);
    CorpusConfig {
        families: vec![
            FamilyConfig::new(Family::Coherent).with_alpha(-5.0, 5.0),
            thermal,
            FamilyConfig::new(Family::CoherentMixture).with_alpha(-5.0, 5.0),
            fock,
            squeezed,
            FamilyConfig::new(Family::Spacs).with_alpha(-3.0, 3.0),
        ],
        vectors_per_family: 20_000,
        events_per_vector: 16_000,
        eta: 0.6,
        phi: 0.0,
        seed: 0,
        resolution: DEFAULT_RESOLUTION,
    }
}

impl CorpusConfig {
    pub fn validate(&self) -> Result<()> {
        if self.vectors_per_family == 0 || self.events_per_vector == 0 {
            return Err(Error::Config("vectors per family and events per vector must be positive".into()));
        }
        if self.families.is_empty() {
            return Err(Error::Config("no families configured".into()));
        }
        for label in [ClassLabel::Classical, ClassLabel::Nonclassical] {
            if !self.families.iter().any(|f| f.label == label) {
                return Err(Error::Config(format!("no {label:?} family configured")));
            }
        }
        self.families.iter().try_for_each(FamilyConfig::validate)?;
        if !(self.eta > 0.0 && self.eta <= 1.0) {
            return Err(Error::Config(format!("eta must lie in (0, 1], got {}", self.eta)));
        }
        Ok(())
    }

    pub fn contains(&self, family: Family) -> bool {
        self.families.iter().any(|f| f.family == family)
    }

    /// This config without `exclude`.
    pub fn ablate(&self, exclude: Family) -> Result<Self> {
        let pos = self
            .families
            .iter()
            .position(|f| f.family == exclude)
            .ok_or_else(|| Error::Config(format!("family {exclude} is not part of the config")))?;
        let label = self.families[pos].label;
        if self.families.iter().filter(|f| f.label == label).count() == 1 {
            return Err(Error::Config(format!("removing {exclude} would leave no {label:?} family")));
        }
        let mut out = self.clone();
        out.families.remove(pos);
        Ok(out)
    }

    /// Swaps the coherent mixture for the phase-averaged coherent state
    /// (`use_phase_averaged = true`) or back, keeping the amplitude range.
    pub fn swap_classical_variant(&self, use_phase_averaged: bool) -> Result<Self> {
        if !self.contains(Family::CoherentMixture) && !self.contains(Family::PhaseAveragedCoherent) {
            return Err(Error::Config(
                "config has neither a coherent mixture nor a phase-averaged coherent family".into(),
            ));
        }
        let (from, to) = if use_phase_averaged {
            (Family::CoherentMixture, Family::PhaseAveragedCoherent)
        } else {
            (Family::PhaseAveragedCoherent, Family::CoherentMixture)
        };
        let mut out = self.clone();
        for f in out.families.iter_mut().filter(|f| f.family == from) {
            f.family = to;
        }
        Ok(out)
    }
}

pub fn ablated_config(exclude: Family) -> Result<CorpusConfig> {
    default_training_config().ablate(exclude)
}

pub fn swap_classical_variant(config: &CorpusConfig, use_phase_averaged: bool) -> Result<CorpusConfig> {
    config.swap_classical_variant(use_phase_averaged)
}

/// Everything needed to regenerate one example.
#[derive(Clone, Debug, PartialEq, Serialize, Deserialize)]
pub struct Provenance {
    pub spec: StateSpec,
    pub seed: u64,
}

impl Provenance {
    pub fn regenerate(&self, events: usize, resolution: usize) -> Result<FeatureVector> {
        let table = build_table(&self.spec, resolution)?;
        featurize(&sample(&table, events, self.seed)?)
    }
}

#[derive(Clone, Debug, PartialEq)]
pub struct Corpus {
    pub config: CorpusConfig,
    pub features: Vec<FeatureVector>,
    pub labels: Vec<ClassLabel>,
    pub provenance: Vec<Provenance>,
}

impl Corpus {
    pub fn len(&self) -> usize {
        self.features.len()
    }

    pub fn is_empty(&self) -> bool {
        self.features.is_empty()
    }

    pub fn dataset(&self) -> Vec<(FeatureVector, ClassLabel)> {
        self.features.iter().cloned().zip(self.labels.iter().copied()).collect()
    }

    pub fn count(&self, label: ClassLabel) -> usize {
        self.labels.iter().filter(|&&l| l == label).count()
    }
}

/// Draws one example: parameters and events come from separate streams
/// derived from the example seed.
fn generate_example(
    config: &CorpusConfig,
    family: &FamilyConfig,
    example_seed: u64,
) -> Result<(FeatureVector, Provenance)> {
    let spec = family.draw_spec(config.eta, config.phi, &mut rng(derive_seed(example_seed, 0)));
    let prov = Provenance { spec, seed: derive_seed(example_seed, 1) };
    let fv = prov.regenerate(config.events_per_vector, config.resolution)?;
    Ok((fv, prov))
}

/// Generates the corpus in (family, vector) order. Examples are computed in
/// parallel on the current rayon pool; the result does not depend on the
/// number of threads.
pub fn generate_corpus(config: &CorpusConfig) -> Result<Corpus> {
    config.validate()?;
    let per = config.vectors_per_family;
    let total = per * config.families.len();
    let examples: Vec<(FeatureVector, Provenance, ClassLabel)> = (0..total)
        .into_par_iter()
        .map(|i| {
            let family = &config.families[i / per];
            let (fv, prov) = generate_example(config, family, derive_seed(config.seed, i as u64))?;
            Ok((fv, prov, family.label))
        })
        .collect::<Result<_>>()?;
    let mut corpus = Corpus {
        config: config.clone(),
        features: Vec::with_capacity(total),
        labels: Vec::with_capacity(total),
        provenance: Vec::with_capacity(total),
    };
    for (fv, prov, label) in examples {
        corpus.features.push(fv);
        corpus.labels.push(label);
        corpus.provenance.push(prov);
    }
    Ok(corpus)
}

const CONFIG_PREFIX: &str = "# corpus-config: ";
const PROVENANCE_COLUMNS: [&str; 9] = ["label", "family", "alpha", "nbar", "n", "xi", "eta", "phi", "seed"];

/// Writes the corpus file: comment lines (extra header lines first, then the
/// corpus config as JSON), a CSV header and one row per example.
pub fn write_corpus<W: Write>(corpus: &Corpus, extra_header: &[String], mut out: W) -> Result<()> {
    for line in extra_header {
        writeln!(out, "# {line}")?;
    }
    let json = serde_json::to_string(&corpus.config).map_err(|e| Error::Format(e.to_string()))?;
    writeln!(out, "{CONFIG_PREFIX}{json}")?;
    writeln!(out, "{},{}", PROVENANCE_COLUMNS.join(","), FeatureVector::csv_header())?;
    for ((fv, label), prov) in corpus.features.iter().zip(&corpus.labels).zip(&corpus.provenance) {
        let s = &prov.spec;
        write!(
            out,
            "{},{},{},{},{},{},{},{},{},",
            label.index(),
            s.family,
            s.alpha,
            s.nbar,
            s.n,
            s.xi,
            s.eta,
            s.phi,
            prov.seed
        )?;
        fv.write_csv_row(&mut out)?;
    }
    Ok(())
}

pub fn read_corpus<R: BufRead>(input: R) -> Result<Corpus> {
    let mut config: Option<CorpusConfig> = None;
    let mut header_seen = false;
    let mut corpus_rows = (Vec::new(), Vec::new(), Vec::new());
    for (lineno, line) in input.lines().enumerate() {
        let line = line?;
        let at = |msg: String| Error::Format(format!("corpus line {}: {msg}", lineno + 1));
        if let Some(json) = line.strip_prefix(CONFIG_PREFIX) {
            config = Some(serde_json::from_str(json).map_err(|e| at(e.to_string()))?);
            continue;
        }
        if line.starts_with('#') || line.trim().is_empty() {
            continue;
        }
        if !header_seen {
            if !line.starts_with("label,") {
                return Err(at("missing column header".into()));
            }
            header_seen = true;
            continue;
        }
        let fields: Vec<&str> = line.split(',').collect();
        if fields.len() != PROVENANCE_COLUMNS.len() + NUM_BINS + 2 {
            return Err(at(format!(
                "expected {} columns, found {}",
                PROVENANCE_COLUMNS.len() + NUM_BINS + 2,
                fields.len()
            )));
        }
        let num = |i: usize| fields[i].parse::<f64>().map_err(|_| at(format!("bad number '{}'", fields[i])));
        let label = ClassLabel::from_index(fields[0].parse().map_err(|_| at("bad label".into()))?)?;
        let family: Family = fields[1].parse().map_err(|e: Error| at(e.to_string()))?;
        let spec = StateSpec {
            family,
            alpha: num(2)?,
            nbar: num(3)?,
            n: fields[4].parse().map_err(|_| at("bad photon number".into()))?,
            xi: num(5)?,
            eta: num(6)?,
            phi: num(7)?,
        };
        let seed = fields[8].parse().map_err(|_| at("bad seed".into()))?;
        let fv = FeatureVector::from_csv_fields(&fields[PROVENANCE_COLUMNS.len()..]).map_err(|e| at(e.to_string()))?;
        corpus_rows.0.push(fv);
        corpus_rows.1.push(label);
        corpus_rows.2.push(Provenance { spec, seed });
    }
    let config = config.ok_or_else(|| Error::Format("corpus file has no config line".into()))?;
    let (features, labels, provenance) = corpus_rows;
    if features.is_empty() {
        return Err(Error::Format("corpus file has no examples".into()));
    }
    Ok(Corpus { config, features, labels, provenance })
}
