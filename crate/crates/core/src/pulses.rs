//! Laser pulses as piecewise-constant schedules.

use serde::{Deserialize, Serialize};
use statrs::function::erf::erf;

use crate::error::{Error, Result};

/// A constant-amplitude stretch of the field on [start, end).
#[derive(Debug, Clone, PartialEq, Serialize, Deserialize)]
pub struct PulseSegment {
    pub start: f64,
    pub end: f64,
    /// Carrier frequency ω (cm⁻¹).
    pub carrier: f64,
    /// Exciton–field couplings g_k (cm⁻¹), one per excited level.
    pub couplings: Vec<f64>,
}

impl PulseSegment {
    pub fn duration(&self) -> f64 {
        self.end - self.start
    }

    pub fn is_dark(&self) -> bool {
        self.couplings.iter().all(|g| *g == 0.0)
    }
}

/// Contiguous segments; outside them the field is off.
#[derive(Debug, Clone, PartialEq, Default, Serialize, Deserialize)]
pub struct PulseSchedule {
    segments: Vec<PulseSegment>,
}

impl PulseSchedule {
    pub fn new(segments: Vec<PulseSegment>) -> Result<Self> {
        for s in &segments {
            if !(s.end > s.start) || !s.start.is_finite() || !s.end.is_finite() {
                return Err(Error::InvalidPulse(format!("segment [{}, {}] is empty", s.start, s.end)));
            }
            if !s.carrier.is_finite() || s.couplings.iter().any(|g| !g.is_finite()) {
                return Err(Error::InvalidPulse("non-finite carrier or coupling".into()));
            }
        }
        for w in segments.windows(2) {
            if (w[1].start - w[0].end).abs() > 1e-9 * w[0].end.abs().max(1.0) {
                return Err(Error::InvalidPulse(format!(
                    "segments not contiguous at {} / {}",
                    w[0].end, w[1].start
                )));
            }
        }
        Ok(Self { segments })
    }

    pub fn empty() -> Self {
        Self::default()
    }

    pub fn segments(&self) -> &[PulseSegment] {
        &self.segments
    }

    pub fn len(&self) -> usize {
        self.segments.len()
    }

    pub fn is_empty(&self) -> bool {
        self.segments.is_empty()
    }

    pub fn start(&self) -> Option<f64> {
        self.segments.first().map(|s| s.start)
    }

    pub fn end(&self) -> Option<f64> {
        self.segments.last().map(|s| s.end)
    }

    /// Common carrier of every segment; `None` for an empty schedule.
    pub fn carrier(&self) -> Result<Option<f64>> {
        let Some(first) = self.segments.first() else { return Ok(None) };
        if self.segments.iter().any(|s| s.carrier != first.carrier) {
            return Err(Error::InvalidPulse("segments must share one carrier frequency".into()));
        }
        Ok(Some(first.carrier))
    }

    /// True when no segment couples to the field.
    pub fn is_dark(&self) -> bool {
        self.segments.iter().all(PulseSegment::is_dark)
    }

    /// ∫ g_k(t) dt for each coupling.
    pub fn areas(&self) -> Vec<f64> {
        let m = self.segments.first().map_or(0, |s| s.couplings.len());
        (0..m).map(|k| self.segments.iter().map(|s| s.couplings[k] * s.duration()).sum()).collect()
    }
}

/// Square pulse on [0, t₁].
pub fn step_pulse(t1: f64, carrier: f64, couplings: Vec<f64>) -> Result<PulseSchedule> {
    if !(t1 > 0.0) {
        return Err(Error::InvalidPulse(format!("pulse duration {t1} must be positive")));
    }
    PulseSchedule::new(vec![PulseSegment { start: 0.0, end: t1, carrier, couplings }])
}

/// Largest default segment count tried by [`discretize_gaussian`].
pub const MAX_SEGMENTS: usize = (1 << 15) + 1;

/// g₀ exp[−2(t − t₀)²/T²] on [t₀ − T, t₀ + T].
#[derive(Debug, Clone, PartialEq, Serialize, Deserialize)]
pub struct GaussianPulseSpec {
    pub center: f64,
    pub width: f64,
    pub peak: Vec<f64>,
    pub carrier: f64,
    /// Relative area tolerance.
    pub tolerance: f64,
    #[serde(default = "default_max_segments")]
    pub max_segments: usize,
}

fn default_max_segments() -> usize {
    MAX_SEGMENTS
}

impl GaussianPulseSpec {
    pub fn new(center: f64, width: f64, peak: Vec<f64>, carrier: f64, tolerance: f64) -> Result<Self> {
        let spec = Self { center, width, peak, carrier, tolerance, max_segments: MAX_SEGMENTS };
        spec.validate()?;
        Ok(spec)
    }

    pub fn validate(&self) -> Result<()> {
        if !(self.width > 0.0) || !self.width.is_finite() {
            return Err(Error::InvalidPulse(format!("width {} must be positive", self.width)));
        }
        if !(self.tolerance > 0.0) {
            return Err(Error::InvalidPulse(format!("tolerance {} must be positive", self.tolerance)));
        }
        if !self.center.is_finite() || !self.carrier.is_finite() {
            return Err(Error::InvalidPulse("non-finite center or carrier".into()));
        }
        Ok(())
    }

    /// Unit-peak profile.
    pub fn profile(&self, t: f64) -> f64 {
        let u = (t - self.center) / self.width;
        (-2.0 * u * u).exp()
    }

    /// Exact area of the unit-peak profile over its support.
    pub fn exact_area(&self) -> f64 {
        self.width * (std::f64::consts::PI / 2.0).sqrt() * erf(std::f64::consts::SQRT_2)
    }
}

/// Outcome of a discretization.
#[derive(Debug, Clone, PartialEq)]
pub struct DiscretizedPulse {
    pub schedule: PulseSchedule,
    pub segments: usize,
    pub area_error: f64,
}

/// Midpoint-rule area of `profile` on [a, b] with `n` equal segments.
fn midpoint_area(profile: impl Fn(f64) -> f64, a: f64, b: f64, n: usize) -> f64 {
    let w = (b - a) / n as f64;
    (0..n).map(|j| profile(a + (j as f64 + 0.5) * w)).sum::<f64>() * w
}

/// Relative area defect of the `n`-segment midpoint approximation.
pub fn gaussian_area_error(spec: &GaussianPulseSpec, n: usize) -> f64 {
    let exact = spec.exact_area();
    let approx = midpoint_area(|t| spec.profile(t), spec.center - spec.width, spec.center + spec.width, n);
    (approx - exact).abs() / exact
}

/// Splits an arbitrary profile on [a, b] into N = 2ⁿ + 1 midpoint-valued
/// segments, raising n until the relative area error drops below
/// `tolerance`.
pub fn discretize_profile(
    profile: impl Fn(f64) -> f64,
    exact_area: f64,
    (a, b): (f64, f64),
    peak: &[f64],
    carrier: f64,
    tolerance: f64,
    max_segments: usize,
) -> Result<DiscretizedPulse> {
    let mut n = 1u32;
    loop {
        let count = (1usize << n) + 1;
        if count > max_segments {
            return Err(Error::ToleranceUnreachable { tolerance, max_segments });
        }
        let approx = midpoint_area(&profile, a, b, count);
        let error = if exact_area == 0.0 { approx.abs() } else { (approx - exact_area).abs() / exact_area.abs() };
        if error < tolerance {
            let w = (b - a) / count as f64;
            let segments = (0..count)
                .map(|j| {
                    let start = a + j as f64 * w;
                    let end = if j + 1 == count { b } else { a + (j + 1) as f64 * w };
                    let f = profile(a + (j as f64 + 0.5) * w);
                    PulseSegment { start, end, carrier, couplings: peak.iter().map(|g| g * f).collect() }
                })
                .collect();
            return Ok(DiscretizedPulse { schedule: PulseSchedule::new(segments)?, segments: count, area_error: error });
        }
        n += 1;
    }
}

pub fn discretize_gaussian(spec: &GaussianPulseSpec) -> Result<DiscretizedPulse> {
    spec.validate()?;
    discretize_profile(
        |t| spec.profile(t),
        spec.exact_area(),
        (spec.center - spec.width, spec.center + spec.width),
        &spec.peak,
        spec.carrier,
        spec.tolerance,
        spec.max_segments,
    )
}
