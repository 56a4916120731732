//! Quadrature probability densities of single-mode optical states seen
//! through a lossy balanced homodyne detector.
//!
//! Quadratures use the convention `x = (a + a†)/2`, so the vacuum variance
//! is 1/4. All losses (detector and channel) are lumped into a single
//! efficiency `eta`, modelled as a beam splitter with transmissivity `eta`.

use std::f64::consts::{PI, TAU};
use std::fmt;
use std::str::FromStr;

use serde::{Deserialize, Serialize};

use crate::error::{Error, Result};
use crate::quad;

/// Lower edge of the measurement window.
pub const X_MIN: f64 = -8.0;
/// Upper edge of the measurement window.
pub const X_MAX: f64 = 8.0;

/// Nodes of the periodic trapezoid rule used for phase averaging.
pub const PHASE_AVERAGE_NODES: usize = 256;

/// Largest Fock photon number accepted (binomial weights stay finite).
pub const MAX_PHOTON_NUMBER: u32 = 1000;

const SQRT_2_OVER_PI: f64 = 0.797_884_560_802_865_4;
const PANEL_WIDTH: f64 = 0.1;

#[derive(Clone, Copy, Debug, PartialEq, Eq, Hash, Serialize, Deserialize)]
#[serde(rename_all = "kebab-case")]
pub enum Family {
    Coherent,
    Thermal,
    Fock,
    SqueezedCoherent,
    Spacs,
    CoherentMixture,
    PhaseAveragedCoherent,
    OddCat,
}

impl Family {
    pub const ALL: [Family; 8] = [
        Family::Coherent,
        Family::Thermal,
        Family::Fock,
        Family::SqueezedCoherent,
        Family::Spacs,
        Family::CoherentMixture,
        Family::PhaseAveragedCoherent,
        Family::OddCat,
    ];

    pub fn tag(self) -> &'static str {
        match self {
            Family::Coherent => "coherent",
            Family::Thermal => "thermal",
            Family::Fock => "fock",
            Family::SqueezedCoherent => "squeezed",
            Family::Spacs => "spacs",
            Family::CoherentMixture => "mixture",
            Family::PhaseAveragedCoherent => "phase-averaged",
            Family::OddCat => "cat",
        }
    }

    pub fn label(self) -> ClassLabel {
        match self {
            Family::Coherent | Family::Thermal | Family::CoherentMixture | Family::PhaseAveragedCoherent => {
                ClassLabel::Classical
            }
            Family::Fock | Family::SqueezedCoherent | Family::Spacs | Family::OddCat => ClassLabel::Nonclassical,
        }
    }

    pub fn valid_tags() -> String {
        Family::ALL.iter().map(|f| f.tag()).collect::<Vec<_>>().join(", ")
    }
}

impl fmt::Display for Family {
    fn fmt(&self, f: &mut fmt::Formatter<'_>) -> fmt::Result {
        f.write_str(self.tag())
    }
}

impl FromStr for Family {
    type Err = Error;

    fn from_str(s: &str) -> Result<Self> {
        Family::ALL
            .iter()
            .copied()
            .find(|f| f.tag() == s)
            .ok_or_else(|| Error::Input(format!("unknown family '{s}' (valid: {})", Family::valid_tags())))
    }
}

#[derive(Clone, Copy, Debug, PartialEq, Eq, Hash, PartialOrd, Ord, Serialize, Deserialize)]
#[serde(rename_all = "lowercase")]
pub enum ClassLabel {
    Classical = 0,
    Nonclassical = 1,
}

impl ClassLabel {
    pub fn index(self) -> usize {
        self as usize
    }

    pub fn from_index(i: usize) -> Result<Self> {
        match i {
            0 => Ok(ClassLabel::Classical),
            1 => Ok(ClassLabel::Nonclassical),
            _ => Err(Error::Format(format!("class label must be 0 or 1, got {i}"))),
        }
    }
}

/// A state family and its physical parameters. Only the fields relevant to
/// `family` are read.
#[derive(Clone, Copy, Debug, PartialEq, Serialize, Deserialize)]
pub struct StateSpec {
    pub family: Family,
    pub alpha: f64,
    pub nbar: f64,
    pub n: u32,
    pub xi: f64,
    pub eta: f64,
    pub phi: f64,
}

impl StateSpec {
    /// A spec of the given family with every parameter at its neutral value
    /// (`eta = 1`, `phi = 0`).
    pub fn new(family: Family) -> Self {
        StateSpec { family, alpha: 0.0, nbar: 0.0, n: 0, xi: 0.0, eta: 1.0, phi: 0.0 }
    }

    pub fn coherent(alpha: f64, eta: f64, phi: f64) -> Self {
        StateSpec { alpha, eta, phi, ..Self::new(Family::Coherent) }
    }

    pub fn thermal(nbar: f64, eta: f64) -> Self {
        StateSpec { nbar, eta, ..Self::new(Family::Thermal) }
    }

    pub fn fock(n: u32, eta: f64) -> Self {
        StateSpec { n, eta, ..Self::new(Family::Fock) }
    }

    pub fn squeezed(alpha: f64, xi: f64, eta: f64, phi: f64) -> Self {
        StateSpec { alpha, xi, eta, phi, ..Self::new(Family::SqueezedCoherent) }
    }

    pub fn spacs(alpha: f64, eta: f64, phi: f64) -> Self {
        StateSpec { alpha, eta, phi, ..Self::new(Family::Spacs) }
    }

    pub fn mixture(alpha: f64, eta: f64, phi: f64) -> Self {
        StateSpec { alpha, eta, phi, ..Self::new(Family::CoherentMixture) }
    }

    pub fn phase_averaged(alpha: f64, eta: f64) -> Self {
        StateSpec { alpha, eta, ..Self::new(Family::PhaseAveragedCoherent) }
    }

    pub fn odd_cat(alpha: f64, eta: f64, phi: f64) -> Self {
        StateSpec { alpha, eta, phi, ..Self::new(Family::OddCat) }
    }

    pub fn label(&self) -> ClassLabel {
        self.family.label()
    }

    pub fn validate(&self) -> Result<()> {
        if !(self.eta > 0.0 && self.eta <= 1.0) {
            return Err(Error::Parameter(format!("efficiency eta must lie in (0, 1], got {}", self.eta)));
        }
        if !self.phi.is_finite() {
            return Err(Error::Parameter(format!("phi must be finite, got {}", self.phi)));
        }
        match self.family {
            Family::Thermal => {
                if !(self.nbar >= 0.0 && self.nbar.is_finite()) {
                    return Err(Error::Parameter(format!(
                        "mean photon number must be finite and >= 0, got {}",
                        self.nbar
                    )));
                }
            }
            Family::Fock => {
                if self.n > MAX_PHOTON_NUMBER {
                    return Err(Error::Parameter(format!(
                        "photon number {} exceeds the supported maximum {MAX_PHOTON_NUMBER}",
                        self.n
                    )));
                }
            }
            Family::SqueezedCoherent => {
                if !(self.xi >= 0.0 && self.xi.is_finite()) {
                    return Err(Error::Parameter(format!(
                        "squeezing magnitude must be finite and >= 0, got {}",
                        self.xi
                    )));
                }
                check_alpha(self.alpha)?;
            }
            _ => check_alpha(self.alpha)?,
        }
        Ok(())
    }

    /// Density without parameter validation; callers validate once up front.
    pub(crate) fn density_unchecked(&self, x: f64) -> f64 {
        let eta = self.eta;
        let amp = eta.sqrt() * self.alpha;
        let (sin_phi, cos_phi) = self.phi.sin_cos();
        match self.family {
            Family::Coherent => gaussian(x, amp * cos_phi, 0.25),
            Family::Thermal => gaussian(x, 0.0, 0.25 * (1.0 + 2.0 * eta * self.nbar)),
            Family::Fock => lossy_fock(self.n, eta, x),
            Family::SqueezedCoherent => {
                let var = 0.25
                    * (1.0 - eta
                        + eta
                            * ((-2.0 * self.xi).exp() * cos_phi * cos_phi + (2.0 * self.xi).exp() * sin_phi * sin_phi));
                gaussian(x, amp * cos_phi, var)
            }
            Family::Spacs => {
                let a = self.alpha;
                let envelope = gaussian(x, amp * cos_phi, 0.25) / (1.0 + a * a);
                let lin = 2.0 * x * cos_phi - (2.0 * eta - 1.0) / eta.sqrt() * a;
                let poly = eta * lin * lin
                    + 4.0 * eta * x * x * sin_phi * sin_phi
                    + (1.0 - eta) * (1.0 + 4.0 * eta * a * a * sin_phi * sin_phi);
                envelope * poly
            }
            Family::CoherentMixture => 0.5 * (gaussian(x, amp * cos_phi, 0.25) + gaussian(x, -amp * cos_phi, 0.25)),
            Family::PhaseAveragedCoherent => {
                let sum: f64 = (0..PHASE_AVERAGE_NODES)
                    .map(|j| {
                        let theta = TAU * j as f64 / PHASE_AVERAGE_NODES as f64;
                        gaussian(x, amp * theta.cos(), 0.25)
                    })
                    .sum();
                sum / PHASE_AVERAGE_NODES as f64
            }
            Family::OddCat => odd_cat(self.alpha, eta, sin_phi, cos_phi, x),
        }
    }

    /// Half-width of an interval outside of which the density is negligible.
    fn support_radius(&self) -> f64 {
        let spread = match self.family {
            Family::Thermal => (1.0 + 2.0 * self.nbar).sqrt(),
            Family::Fock => (1.0 + 2.0 * self.n as f64).sqrt(),
            Family::SqueezedCoherent => self.xi.exp(),
            Family::Spacs => 2.0,
            _ => 1.0,
        };
        self.eta.sqrt() * self.alpha.abs() + 20.0 * spread
    }
}

fn check_alpha(alpha: f64) -> Result<()> {
    if alpha.is_finite() {
        Ok(())
    } else {
        Err(Error::Parameter(format!("alpha must be finite, got {alpha}")))
    }
}

fn gaussian(x: f64, mean: f64, var: f64) -> f64 {
    let d = x - mean;
    (-d * d / (2.0 * var)).exp() / (2.0 * PI * var).sqrt()
}

/// Ideal Fock densities `|<x|k>|^2` for `k = 0..=n`, from the normalized
/// Hermite-function recurrence (no factorials, stable for large `k`).
pub(crate) fn ideal_fock_densities(n: u32, x: f64, out: &mut Vec<f64>) {
    out.clear();
    let y = std::f64::consts::SQRT_2 * x;
    let mut prev = 0.0;
    let mut cur = PI.powf(-0.25) * (-0.5 * y * y).exp();
    out.push(std::f64::consts::SQRT_2 * cur * cur);
    for k in 0..n {
        let kf = k as f64;
        let next = (2.0 / (kf + 1.0)).sqrt() * y * cur - (kf / (kf + 1.0)).sqrt() * prev;
        prev = cur;
        cur = next;
        out.push(std::f64::consts::SQRT_2 * cur * cur);
    }
}

/// Binomial photon-loss mixture of ideal Fock densities.
fn lossy_fock(n: u32, eta: f64, x: f64) -> f64 {
    let mut ideal = Vec::with_capacity(n as usize + 1);
    ideal_fock_densities(n, x, &mut ideal);
    let loss = 1.0 - eta;
    let mut binom = 1.0;
    let mut total = 0.0;
    for (k, p) in ideal.iter().enumerate() {
        if k > 0 {
            binom *= (n as f64 - k as f64 + 1.0) / k as f64;
        }
        let w = binom * eta.powi(k as i32) * loss.powi((n as usize - k) as i32);
        total += w * p;
    }
    total
}

/// Odd cat density rewritten so that the small-`alpha` cancellation between
/// the two coherent lobes and the interference term stays accurate.
fn odd_cat(alpha: f64, eta: f64, sin_phi: f64, cos_phi: f64, x: f64) -> f64 {
    if alpha == 0.0 {
        return lossy_fock(1, eta, x);
    }
    let b = eta.sqrt() * alpha;
    let u = -2.0 * b * b * cos_phi * cos_phi;
    let v = -2.0 * alpha * alpha + 2.0 * b * b * sin_phi * sin_phi;
    let p = 4.0 * x * b * cos_phi;
    let q = 4.0 * x * b * sin_phi;
    let sinh_half = (0.5 * p).sinh();
    let sin_half = (0.5 * q).sin();
    let bracket =
        (u.exp_m1() - v.exp_m1()) + 2.0 * u.exp() * sinh_half * sinh_half + 2.0 * v.exp() * sin_half * sin_half;
    let norm = -2.0 * (-2.0 * alpha * alpha).exp_m1();
    SQRT_2_OVER_PI * 2.0 * (-2.0 * x * x).exp() * bracket / norm
}

/// Quadrature probability density `p(x, phi)` of `spec`.
pub fn density(spec: &StateSpec, x: f64) -> Result<f64> {
    spec.validate()?;
    if !x.is_finite() {
        return Err(Error::Input(format!("quadrature value must be finite, got {x}")));
    }
    Ok(spec.density_unchecked(x))
}

/// Density on `npoints` uniformly spaced points spanning `[xmin, xmax]`.
pub fn density_grid(spec: &StateSpec, xmin: f64, xmax: f64, npoints: usize) -> Result<Vec<(f64, f64)>> {
    spec.validate()?;
    if npoints < 2 {
        return Err(Error::Input(format!("grid needs at least 2 points, got {npoints}")));
    }
    if !(xmin.is_finite() && xmax.is_finite() && xmin < xmax) {
        return Err(Error::Input(format!("grid bounds must satisfy xmin < xmax, got [{xmin}, {xmax}]")));
    }
    let step = (xmax - xmin) / (npoints - 1) as f64;
    Ok((0..npoints)
        .map(|i| {
            let x = if i == npoints - 1 { xmax } else { xmin + i as f64 * step };
            (x, spec.density_unchecked(x))
        })
        .collect())
}

/// Probability mass inside the measurement window `[-8, 8]`.
pub fn window_mass(spec: &StateSpec) -> Result<f64> {
    spec.validate()?;
    let panels = ((X_MAX - X_MIN) / PANEL_WIDTH).round() as usize;
    Ok(quad::integrate(|x| spec.density_unchecked(x), X_MIN, X_MAX, panels))
}

/// Probability of an event outside `[-8, 8]`.
///
/// Equal to `1 - window_mass`, but integrated over the two tails directly so
/// that tiny masses are not lost to cancellation.
pub fn tail_mass(spec: &StateSpec) -> Result<f64> {
    spec.validate()?;
    let reach = X_MAX + spec.support_radius();
    let panels = ((reach - X_MAX) / PANEL_WIDTH).ceil() as usize;
    let f = |x: f64| spec.density_unchecked(x);
    let right = quad::integrate(f, X_MAX, reach, panels);
    let left = quad::integrate(f, -reach, X_MIN, panels);
    Ok(left + right)
}
