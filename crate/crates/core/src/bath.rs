//! Spectral densities and the line-broadening function g(t).
//!
//! g(t) = ∫ dω J(ω)/ω² [(1 − cos ωt) coth(βω/2) + i (sin ωt − ωt)]
//!
//! Frequencies are integrated in cm⁻¹; phases are ωt = K·ω·t with
//! K = [`CM_TO_RAD_PER_FS`]. ġ and g̈ come from differentiating under the
//! integral, so they carry factors K and K² (units fs⁻¹ and fs⁻²).

use std::path::Path;

use num_complex::Complex64;

use crate::error::{Error, Result};
use crate::units::{beta, CM_TO_RAD_PER_FS};

/// Upper integration limit in units of the cutoff frequency.
pub const CUTOFF_MULTIPLE: f64 = 40.0;

const GL_POINTS: usize = 16;
/// Largest phase change K·Δω·t_max across one quadrature panel.
const PANEL_PHASE: f64 = 0.5;
const MIN_PANELS: usize = 64;
/// Relative tolerance of the node-doubling convergence check.
pub const QUADRATURE_TOLERANCE: f64 = 1e-8;

/// Uniform time grid t_i = i·dt, i = 0..=steps.
#[derive(Debug, Clone, Copy, PartialEq)]
pub struct TimeGrid {
    dt: f64,
    steps: usize,
}

impl TimeGrid {
    pub fn new(dt: f64, t_max: f64) -> Result<Self> {
        if !(dt > 0.0 && dt.is_finite()) || !(t_max >= 0.0 && t_max.is_finite()) {
            return Err(Error::GridMismatch(format!("dt = {dt}, t_max = {t_max}")));
        }
        let ratio = t_max / dt;
        let steps = ratio.round();
        if (ratio - steps).abs() > 1e-9 * ratio.max(1.0) {
            return Err(Error::GridMismatch(format!("dt = {dt} does not divide t_max = {t_max}")));
        }
        Ok(Self { dt, steps: steps as usize })
    }

    pub fn with_steps(dt: f64, steps: usize) -> Self {
        Self { dt, steps }
    }

    pub fn dt(&self) -> f64 {
        self.dt
    }

    pub fn steps(&self) -> usize {
        self.steps
    }

    /// Number of grid points (steps + 1).
    pub fn len(&self) -> usize {
        self.steps + 1
    }

    pub fn is_empty(&self) -> bool {
        false
    }

    pub fn time(&self, i: usize) -> f64 {
        i as f64 * self.dt
    }

    pub fn t_max(&self) -> f64 {
        self.time(self.steps)
    }

    /// Largest grid index with t_i ≤ t.
    pub fn floor_index(&self, t: f64) -> usize {
        let i = (t / self.dt + 1e-9).floor().max(0.0) as usize;
        i.min(self.steps)
    }

    /// Grid with `factor` times more points covering the same span.
    pub fn refined(&self, factor: usize) -> Self {
        Self { dt: self.dt / factor as f64, steps: self.steps * factor }
    }
}

/// Bath spectral density J(ω) in cm⁻¹.
#[derive(Debug, Clone, PartialEq)]
pub enum SpectralDensity {
    /// J(ω) = λ (ω/ω_c) e^{−ω/ω_c}
    OhmicExponential { reorganization: f64, cutoff: f64 },
    /// Piecewise-linear interpolation of tabulated points, zero outside.
    Tabulated { omega: Vec<f64>, density: Vec<f64> },
}

impl SpectralDensity {
    pub fn evaluate(&self, omega: f64) -> f64 {
        match self {
            Self::OhmicExponential { reorganization, cutoff } => {
                reorganization * omega / cutoff * (-omega / cutoff).exp()
            }
            Self::Tabulated { omega: w, density } => interpolate(w, density, omega),
        }
    }

    /// J(ω)/ω, with its ω → 0 limit.
    fn over_omega(&self, omega: f64) -> f64 {
        match self {
            Self::OhmicExponential { reorganization, cutoff } => {
                reorganization / cutoff * (-omega / cutoff).exp()
            }
            Self::Tabulated { omega: w, density } => {
                if omega > 0.0 {
                    interpolate(w, density, omega) / omega
                } else if w[0] == 0.0 {
                    density[1] / w[1]
                } else {
                    density[0] / w[0]
                }
            }
        }
    }

    fn omega_max(&self) -> f64 {
        match self {
            Self::OhmicExponential { cutoff, .. } => CUTOFF_MULTIPLE * cutoff,
            Self::Tabulated { omega, .. } => *omega.last().unwrap(),
        }
    }

    /// Panel breakpoints before phase-driven subdivision.
    fn breakpoints(&self) -> Vec<f64> {
        match self {
            Self::OhmicExponential { .. } => vec![0.0, self.omega_max()],
            Self::Tabulated { omega, .. } => {
                let mut b = omega.clone();
                if b[0] > 0.0 {
                    b.insert(0, 0.0);
                }
                b
            }
        }
    }
}

fn interpolate(w: &[f64], j: &[f64], x: f64) -> f64 {
    if x <= 0.0 || x > *w.last().unwrap() {
        return 0.0;
    }
    match w.iter().position(|&wi| wi >= x) {
        Some(0) => j[0] * x / w[0],
        Some(i) => {
            let f = (x - w[i - 1]) / (w[i] - w[i - 1]);
            j[i - 1] + f * (j[i] - j[i - 1])
        }
        None => 0.0,
    }
}

/// A site bath: spectral density plus temperature.
#[derive(Debug, Clone, PartialEq)]
pub struct BathSpec {
    density: SpectralDensity,
    temperature: f64,
}

impl BathSpec {
    pub fn ohmic(reorganization: f64, cutoff: f64, temperature: f64) -> Result<Self> {
        if !(reorganization >= 0.0) {
            return Err(Error::InvalidBath(format!("reorganization energy {reorganization} < 0")));
        }
        if !(cutoff > 0.0) {
            return Err(Error::InvalidBath(format!("cutoff frequency {cutoff} must be > 0")));
        }
        Self::checked(SpectralDensity::OhmicExponential { reorganization, cutoff }, temperature)
    }

    pub fn tabulated(omega: Vec<f64>, density: Vec<f64>, temperature: f64) -> Result<Self> {
        if omega.len() < 2 || omega.len() != density.len() {
            return Err(Error::InvalidBath("tabulated density needs ≥ 2 (ω, J) pairs".into()));
        }
        if omega[0] < 0.0 || omega.windows(2).any(|p| p[1] <= p[0]) {
            return Err(Error::InvalidBath("tabulated ω must be ≥ 0 and strictly increasing".into()));
        }
        if density.iter().any(|j| !j.is_finite() || *j < 0.0) {
            return Err(Error::InvalidBath("tabulated J(ω) must be finite and ≥ 0".into()));
        }
        Self::checked(SpectralDensity::Tabulated { omega, density }, temperature)
    }

    /// Reads a two-column text file (ω, J(ω)), both in cm⁻¹. Blank lines and
    /// lines starting with `#` are skipped.
    pub fn from_file(path: &Path, temperature: f64) -> Result<Self> {
        let text = std::fs::read_to_string(path)?;
        let mut omega = Vec::new();
        let mut density = Vec::new();
        for (lineno, line) in text.lines().enumerate() {
            let line = line.trim();
            if line.is_empty() || line.starts_with('#') {
                continue;
            }
            let cols: Vec<f64> = line
                .split(|c: char| c == ',' || c.is_whitespace())
                .filter(|s| !s.is_empty())
                .map(str::parse)
                .collect::<std::result::Result<_, _>>()
                .map_err(|e| Error::InvalidBath(format!("{}:{}: {e}", path.display(), lineno + 1)))?;
            if cols.len() != 2 {
                return Err(Error::InvalidBath(format!(
                    "{}:{}: expected two columns",
                    path.display(),
                    lineno + 1
                )));
            }
            omega.push(cols[0]);
            density.push(cols[1]);
        }
        Self::tabulated(omega, density, temperature)
    }

    fn checked(density: SpectralDensity, temperature: f64) -> Result<Self> {
        if !(temperature > 0.0 && temperature.is_finite()) {
            return Err(Error::InvalidBath(format!("temperature {temperature} K must be > 0")));
        }
        Ok(Self { density, temperature })
    }

    pub fn density(&self) -> &SpectralDensity {
        &self.density
    }

    pub fn temperature(&self) -> f64 {
        self.temperature
    }
}

/// λ = ∫ dω J(ω)/ω.
///
/// Analytic for the Ohmic form; trapezoid over the tabulated points
/// otherwise (exact for the piecewise-linear interpolant up to J/ω
/// curvature).
pub fn reorganization_energy(spec: &BathSpec) -> Result<f64> {
    match &spec.density {
        SpectralDensity::OhmicExponential { reorganization, .. } => Ok(*reorganization),
        SpectralDensity::Tabulated { omega, density } => {
            if omega[0] == 0.0 && density[0] != 0.0 {
                return Err(Error::Integration(format!(
                    "J(0) = {} ≠ 0 makes ∫J(ω)/ω dω diverge",
                    density[0]
                )));
            }
            let f = |i: usize| if omega[i] == 0.0 { density[1] / omega[1] } else { density[i] / omega[i] };
            // first interval from 0 to ω₀ under the linear-through-origin extension
            let mut total = if omega[0] > 0.0 { density[0] } else { 0.0 };
            for i in 1..omega.len() {
                total += 0.5 * (f(i) + f(i - 1)) * (omega[i] - omega[i - 1]);
            }
            if !total.is_finite() {
                return Err(Error::Integration("non-finite reorganization integral".into()));
            }
            Ok(total)
        }
    }
}

/// Gauss–Legendre nodes and weights on [−1, 1].
pub fn gauss_legendre(n: usize) -> (Vec<f64>, Vec<f64>) {
    let mut x = vec![0.0; n];
    let mut w = vec![0.0; n];
    for i in 0..n.div_ceil(2) {
        let mut z = (std::f64::consts::PI * (i as f64 + 0.75) / (n as f64 + 0.5)).cos();
        let mut dp = 0.0;
        for _ in 0..100 {
            let (mut p0, mut p1) = (1.0, z);
            for k in 2..=n {
                let p2 = ((2 * k - 1) as f64 * z * p1 - (k - 1) as f64 * p0) / k as f64;
                p0 = p1;
                p1 = p2;
            }
            let pn = if n == 1 { z } else { p1 };
            let pnm1 = if n == 1 { 1.0 } else { p0 };
            dp = n as f64 * (z * pn - pnm1) / (z * z - 1.0);
            let dz = pn / dp;
            z -= dz;
            if dz.abs() < 1e-16 {
                break;
            }
        }
        x[i] = -z;
        x[n - 1 - i] = z;
        w[i] = 2.0 / ((1.0 - z * z) * dp * dp);
        w[n - 1 - i] = w[i];
    }
    (x, w)
}

/// Composite Gauss–Legendre rule on [0, ω_max].
#[derive(Debug, Clone)]
struct FrequencyRule {
    nodes: Vec<f64>,
    weights: Vec<f64>,
}

impl FrequencyRule {
    fn new(density: &SpectralDensity, t_max: f64, refinement: usize) -> Self {
        let (x, w) = gauss_legendre(GL_POINTS);
        let breaks = density.breakpoints();
        let span = density.omega_max();
        let total_panels = ((CM_TO_RAD_PER_FS * span * t_max / PANEL_PHASE).ceil() as usize).max(MIN_PANELS);
        let mut nodes = Vec::new();
        let mut weights = Vec::new();
        for seg in breaks.windows(2) {
            let (a, b) = (seg[0], seg[1]);
            let share = ((b - a) / span * total_panels as f64).ceil().max(1.0) as usize * refinement;
            let h = (b - a) / share as f64;
            for p in 0..share {
                let lo = a + p as f64 * h;
                for (xi, wi) in x.iter().zip(&w) {
                    nodes.push(lo + 0.5 * h * (xi + 1.0));
                    weights.push(0.5 * h * wi);
                }
            }
        }
        Self { nodes, weights }
    }
}

/// coth(y) with its Laurent expansion near the origin.
fn coth(y: f64) -> f64 {
    if y < 1e-6 {
        1.0 / y + y / 3.0
    } else {
        1.0 / y.tanh()
    }
}

/// sin x − x, accurate for small x.
fn sin_minus_x(x: f64) -> f64 {
    if x.abs() < 1e-3 {
        let x3 = x * x * x;
        -x3 / 6.0 + x3 * x * x / 120.0
    } else {
        x.sin() - x
    }
}

/// Per-node quantities independent of t.
struct NodeData {
    omega: f64,
    /// weight · J(ω)/ω
    wjw: f64,
    /// coth(βω/2)
    coth: f64,
}

fn node_data(spec: &BathSpec, rule: &FrequencyRule) -> Vec<NodeData> {
    let b = beta(spec.temperature);
    rule.nodes
        .iter()
        .zip(&rule.weights)
        .map(|(&omega, &w)| NodeData { omega, wjw: w * spec.density.over_omega(omega), coth: coth(b * omega / 2.0) })
        .collect()
}

/// (g, ġ, g̈) at time t by frequency quadrature.
fn evaluate_at(nodes: &[NodeData], t: f64, beta_cm: f64) -> (Complex64, Complex64, Complex64) {
    let k = CM_TO_RAD_PER_FS;
    let (mut g_re, mut g_im) = (0.0, 0.0);
    let (mut gd_re, mut gd_im) = (0.0, 0.0);
    let (mut gdd_re, mut gdd_im) = (0.0, 0.0);
    for nd in nodes {
        let w = nd.omega;
        if w == 0.0 {
            // ω → 0 limits of the three integrands
            g_re += nd.wjw * k * k * t * t / beta_cm;
            gd_re += nd.wjw * 2.0 * k * k * t / beta_cm;
            gdd_re += nd.wjw * 2.0 * k * k / beta_cm;
            continue;
        }
        let x = k * w * t;
        let (s, c) = x.sin_cos();
        let half = (0.5 * x).sin();
        // J/ω² (1 − cos x) coth = (J/ω)·(2 sin²(x/2)/ω)·coth
        g_re += nd.wjw * (2.0 * half * half / w) * nd.coth;
        g_im += nd.wjw * sin_minus_x(x) / w;
        gd_re += nd.wjw * s * nd.coth;
        gd_im += nd.wjw * (c - 1.0);
        gdd_re += nd.wjw * w * c * nd.coth;
        gdd_im -= nd.wjw * w * s;
    }
    (
        Complex64::new(g_re, g_im),
        Complex64::new(k * gd_re, k * gd_im),
        Complex64::new(k * k * gdd_re, k * k * gdd_im),
    )
}

/// g_n(t), ġ_n(t), g̈_n(t) on a time grid for one site bath.
#[derive(Debug, Clone, PartialEq)]
pub struct LineBroadeningTable {
    grid: TimeGrid,
    reorganization: f64,
    g: Vec<Complex64>,
    gd: Vec<Complex64>,
    gdd: Vec<Complex64>,
}

impl LineBroadeningTable {
    pub fn grid(&self) -> &TimeGrid {
        &self.grid
    }

    /// λ_n in cm⁻¹.
    pub fn reorganization(&self) -> f64 {
        self.reorganization
    }

    pub fn g(&self, i: usize) -> Complex64 {
        self.g[i]
    }

    /// ġ in fs⁻¹.
    pub fn gdot(&self, i: usize) -> Complex64 {
        self.gd[i]
    }

    /// g̈ in fs⁻².
    pub fn gddot(&self, i: usize) -> Complex64 {
        self.gdd[i]
    }

    pub fn g_values(&self) -> &[Complex64] {
        &self.g
    }

    pub fn gdot_values(&self) -> &[Complex64] {
        &self.gd
    }

    pub fn gddot_values(&self) -> &[Complex64] {
        &self.gdd
    }
}

fn tabulate_with(spec: &BathSpec, grid: &TimeGrid, refinement: usize) -> (Vec<Complex64>, Vec<Complex64>, Vec<Complex64>) {
    let rule = FrequencyRule::new(&spec.density, grid.t_max(), refinement);
    let nodes = node_data(spec, &rule);
    let b = beta(spec.temperature);
    let mut g = Vec::with_capacity(grid.len());
    let mut gd = Vec::with_capacity(grid.len());
    let mut gdd = Vec::with_capacity(grid.len());
    for i in 0..grid.len() {
        let t = grid.time(i);
        let (a, bb, c) = if t == 0.0 {
            (Complex64::new(0.0, 0.0), Complex64::new(0.0, 0.0), evaluate_at(&nodes, 0.0, b).2)
        } else {
            evaluate_at(&nodes, t, b)
        };
        g.push(a);
        gd.push(bb);
        gdd.push(c);
    }
    (g, gd, gdd)
}

/// Tabulates g, ġ, g̈ on `grid` by frequency quadrature.
///
/// The rule is checked against a rule with twice as many nodes at a sample
/// of grid times; a relative change above [`QUADRATURE_TOLERANCE`] (relative
/// to the table maximum of each function) is reported with the offending t.
pub fn tabulate_linebroadening(spec: &BathSpec, grid: &TimeGrid) -> Result<LineBroadeningTable> {
    let reorganization = reorganization_energy(spec)?;
    let (g, gd, gdd) = tabulate_with(spec, grid, 1);

    let fine_rule = FrequencyRule::new(&spec.density, grid.t_max(), 2);
    let fine_nodes = node_data(spec, &fine_rule);
    let b = beta(spec.temperature);
    let scale = |v: &[Complex64]| v.iter().map(|z| z.norm()).fold(0.0, f64::max).max(f64::MIN_POSITIVE);
    let (sg, sgd, sgdd) = (scale(&g), scale(&gd), scale(&gdd));
    let stride = (grid.len() / 32).max(1);
    let mut worst = (0.0, 0.0);
    for i in (0..grid.len()).step_by(stride).chain(std::iter::once(grid.steps())) {
        let t = grid.time(i);
        if t == 0.0 {
            continue;
        }
        let (a, bb, c) = evaluate_at(&fine_nodes, t, b);
        let change = ((a - g[i]).norm() / sg).max((bb - gd[i]).norm() / sgd).max((c - gdd[i]).norm() / sgdd);
        if change > worst.1 {
            worst = (t, change);
        }
    }
    if worst.1 > QUADRATURE_TOLERANCE {
        return Err(Error::Quadrature { t: worst.0, change: worst.1 });
    }
    Ok(LineBroadeningTable { grid: *grid, reorganization, g, gd, gdd })
}

/// Tabulates with a rule refined `refinement` times (used by convergence
/// checks).
pub fn tabulate_linebroadening_refined(
    spec: &BathSpec,
    grid: &TimeGrid,
    refinement: usize,
) -> Result<LineBroadeningTable> {
    let reorganization = reorganization_energy(spec)?;
    let (g, gd, gdd) = tabulate_with(spec, grid, refinement);
    Ok(LineBroadeningTable { grid: *grid, reorganization, g, gd, gdd })
}

#[cfg(test)]
mod tests {
    use super::*;
    use approx::assert_relative_eq;

    fn dimer_bath() -> BathSpec {
        BathSpec::ohmic(35.0, 50.0, 300.0).unwrap()
    }

    #[test]
    fn gauss_legendre_integrates_polynomials() {
        let (x, w) = gauss_legendre(16);
        let s: f64 = w.iter().sum();
        assert_relative_eq!(s, 2.0, epsilon = 1e-14);
        let p: f64 = x.iter().zip(&w).map(|(x, w)| w * x.powi(30)).sum();
        assert_relative_eq!(p, 2.0 / 31.0, epsilon = 1e-13);
    }

    #[test]
    fn reorganization_of_ohmic_form() {
        assert_eq!(reorganization_energy(&dimer_bath()).unwrap(), 35.0);
        let zero = BathSpec::ohmic(0.0, 50.0, 300.0).unwrap();
        assert_eq!(reorganization_energy(&zero).unwrap(), 0.0);
    }

    #[test]
    fn reorganization_quadrature_oracle() {
        // independent adaptive Simpson on [0, 40 ω_c]
        let spec = dimer_bath();
        let f = |w: f64| spec.density().over_omega(w);
        #[allow(clippy::too_many_arguments)]
        fn simpson(f: &dyn Fn(f64) -> f64, a: f64, b: f64, fa: f64, fm: f64, fb: f64, whole: f64, depth: u32) -> f64 {
            let m = 0.5 * (a + b);
            let (lm, rm) = (0.5 * (a + m), 0.5 * (m + b));
            let (flm, frm) = (f(lm), f(rm));
            let left = (m - a) / 6.0 * (fa + 4.0 * flm + fm);
            let right = (b - m) / 6.0 * (fm + 4.0 * frm + fb);
            if depth == 0 || (left + right - whole).abs() < 1e-13 {
                return left + right + (left + right - whole) / 15.0;
            }
            simpson(f, a, m, fa, flm, fm, left, depth - 1) + simpson(f, m, b, fm, frm, fb, right, depth - 1)
        }
        let (a, b) = (0.0, 2000.0);
        let (fa, fm, fb) = (f(a), f(0.5 * (a + b)), f(b));
        let whole = (b - a) / 6.0 * (fa + 4.0 * fm + fb);
        let numeric = simpson(&f, a, b, fa, fm, fb, whole, 40);
        let analytic = reorganization_energy(&spec).unwrap();
        assert!(((numeric - analytic) / analytic).abs() < 1e-8);
    }

    #[test]
    fn tabulated_density_with_nonzero_origin_diverges() {
        let spec = BathSpec::tabulated(vec![0.0, 10.0], vec![1.0, 2.0], 300.0).unwrap();
        assert!(matches!(reorganization_energy(&spec), Err(Error::Integration(_))));
    }

    #[test]
    fn tabulated_ohmic_reproduces_reorganization() {
        let w: Vec<f64> = (0..=4000).map(|i| i as f64 * 0.5).collect();
        let j: Vec<f64> = w.iter().map(|&x| 35.0 * x / 50.0 * (-x / 50.0).exp()).collect();
        let spec = BathSpec::tabulated(w, j, 300.0).unwrap();
        let lam = reorganization_energy(&spec).unwrap();
        assert!((lam - 35.0).abs() / 35.0 < 1e-4);
    }

    #[test]
    fn invalid_baths_rejected() {
        assert!(BathSpec::ohmic(-1.0, 50.0, 300.0).is_err());
        assert!(BathSpec::ohmic(35.0, 0.0, 300.0).is_err());
        assert!(BathSpec::ohmic(35.0, 50.0, -4.0).is_err());
        assert!(BathSpec::tabulated(vec![0.0, 0.0], vec![0.0, 1.0], 300.0).is_err());
    }

    #[test]
    fn origin_values_vanish() {
        let grid = TimeGrid::new(1.0, 50.0).unwrap();
        let table = tabulate_linebroadening(&dimer_bath(), &grid).unwrap();
        assert_eq!(table.g(0), Complex64::new(0.0, 0.0));
        assert_eq!(table.gdot(0), Complex64::new(0.0, 0.0));
        for i in 1..grid.len() {
            assert!(table.g(i).re >= 0.0);
            assert!(table.g(i).im <= table.g(i - 1).im);
        }
    }

    #[test]
    fn imaginary_slope_tends_to_minus_lambda() {
        // t = 20/ω_c in angular units
        let t = 20.0 / (50.0 * CM_TO_RAD_PER_FS);
        let grid = TimeGrid::with_steps(t / 2000.0, 2000);
        let table = tabulate_linebroadening(&dimer_bath(), &grid).unwrap();
        let slope = table.gdot(grid.steps()).im;
        let expected = -35.0 * CM_TO_RAD_PER_FS;
        assert!(((slope - expected) / expected).abs() < 0.01);
    }

    #[test]
    fn second_derivative_at_origin_matches_trapezoid_oracle() {
        // g̈(0) = K² ∫ J(ω) coth(βω/2) dω, 10⁶-point trapezoid on [0, 40 ω_c]
        let spec = dimer_bath();
        let b = beta(300.0);
        let n = 1_000_000;
        let h = 2000.0 / n as f64;
        let f = |w: f64| {
            if w == 0.0 {
                35.0 / 50.0 * 2.0 / b
            } else {
                spec.density().evaluate(w) / (b * w / 2.0).tanh()
            }
        };
        let mut s = 0.5 * (f(0.0) + f(2000.0));
        for i in 1..n {
            s += f(i as f64 * h);
        }
        let oracle = s * h * CM_TO_RAD_PER_FS * CM_TO_RAD_PER_FS;
        let grid = TimeGrid::new(1.0, 10.0).unwrap();
        let table = tabulate_linebroadening(&spec, &grid).unwrap();
        assert!(((table.gddot(0).re - oracle) / oracle).abs() < 1e-6);
        assert_eq!(table.gddot(0).im, 0.0);
    }

    #[test]
    fn node_doubling_is_stable() {
        let grid = TimeGrid::new(1.0, 600.0).unwrap();
        let spec = BathSpec::ohmic(35.0, 106.0, 77.0).unwrap();
        let a = tabulate_linebroadening(&spec, &grid).unwrap();
        let b = tabulate_linebroadening_refined(&spec, &grid, 2).unwrap();
        for i in 1..grid.len() {
            for (x, y) in [(a.g(i), b.g(i)), (a.gdot(i), b.gdot(i)), (a.gddot(i), b.gddot(i))] {
                assert!((x - y).norm() <= 1e-8 * y.norm().max(1e-300), "t = {i}: {x} vs {y}");
            }
        }
    }

    #[test]
    fn derivatives_match_finite_differences() {
        let grid = TimeGrid::new(0.5, 300.0).unwrap();
        let t = tabulate_linebroadening(&dimer_bath(), &grid).unwrap();
        let dt = grid.dt();
        for i in 1..grid.steps() {
            let fd = (t.g(i + 1) - t.g(i - 1)) / (2.0 * dt);
            let fd2 = (t.gdot(i + 1) - t.gdot(i - 1)) / (2.0 * dt);
            assert!((fd - t.gdot(i)).norm() < 1e-4 * t.gdot(i).norm().max(1e-3));
            assert!((fd2 - t.gddot(i)).norm() < 1e-3 * t.gddot(0).norm());
        }
    }

    #[test]
    fn grid_requires_divisible_span() {
        assert!(TimeGrid::new(0.3, 1.0).is_err());
        let g = TimeGrid::new(0.1, 1.0).unwrap();
        assert_eq!(g.steps(), 10);
        assert_eq!(g.floor_index(0.35), 3);
    }
}
