//! Probability measures on the circle, their cumulative distribution
//! functions, quantiles and mollification.
//!
//! A CDF on the circle is taken relative to the angle 0 and extended to the
//! whole line by `F(θ + 2π) = F(θ) + 1`. [`CdfField`] stores it as the unit
//! ramp `θ / 2π` plus a 2π-periodic part sampled on a uniform grid, so the
//! period jump is exact by construction.

use std::f64::consts::TAU;

use rayon::prelude::*;
use serde::{Deserialize, Serialize};

use crate::error::{Error, Result};
use crate::quadrature::GaussLegendre;

/// Tolerance on the total mass of a [`CircleMeasure`].
pub const MASS_TOL: f64 = 1e-12;

/// Slack allowed when checking monotonicity of a CDF on the grid.
pub const MONOTONE_TOL: f64 = 1e-12;

/// Slack in the slope-floor certificate.
pub const HM_TOL: f64 = 1e-10;

#[derive(Debug, Clone, Copy, PartialEq, Serialize, Deserialize)]
pub struct Atom {
    pub theta: f64,
    pub w: f64,
}

/// Density samples on the grid `θ_j = 2πj/M`, read as a piecewise-linear
/// periodic function.
#[derive(Debug, Clone, PartialEq, Serialize, Deserialize)]
pub struct Density {
    #[serde(rename = "M")]
    pub grid_size: usize,
    pub samples: Vec<f64>,
}

impl Density {
    fn mass(&self) -> f64 {
        self.samples.iter().sum::<f64>() * TAU / self.grid_size as f64
    }

    /// Periodic linear interpolation.
    pub fn value_at(&self, theta: f64) -> f64 {
        let m = self.grid_size;
        let h = TAU / m as f64;
        let x = theta.rem_euclid(TAU) / h;
        let j = (x.floor() as usize).min(m - 1);
        let s = x - j as f64;
        (1.0 - s) * self.samples[j] + s * self.samples[(j + 1) % m]
    }
}

#[derive(Debug, Clone, PartialEq, Serialize, Deserialize)]
struct RawMeasure {
    #[serde(default)]
    atoms: Vec<Atom>,
    #[serde(default, skip_serializing_if = "Option::is_none")]
    density: Option<Density>,
}

/// A probability measure on the circle: finitely many atoms plus an
/// optional sampled density.
#[derive(Debug, Clone, PartialEq, Serialize, Deserialize)]
#[serde(try_from = "RawMeasure", into = "RawMeasure")]
pub struct CircleMeasure {
    atoms: Vec<Atom>,
    density: Option<Density>,
}

impl TryFrom<RawMeasure> for CircleMeasure {
    type Error = Error;

    fn try_from(raw: RawMeasure) -> Result<Self> {
        CircleMeasure::new(raw.atoms, raw.density)
    }
}

impl From<CircleMeasure> for RawMeasure {
    fn from(m: CircleMeasure) -> Self {
        RawMeasure {
            atoms: m.atoms,
            density: m.density,
        }
    }
}

impl CircleMeasure {
    pub fn new(atoms: Vec<Atom>, density: Option<Density>) -> Result<Self> {
        for (i, a) in atoms.iter().enumerate() {
            if !a.theta.is_finite() || !(0.0..TAU).contains(&a.theta) {
                return Err(Error::InvalidMeasure(format!(
                    "atom {i} at {} lies outside [0, 2π)",
                    a.theta
                )));
            }
            if !a.w.is_finite() || a.w < 0.0 {
                return Err(Error::InvalidMeasure(format!(
                    "atom {i} has weight {}",
                    a.w
                )));
            }
            if i > 0 && atoms[i - 1].theta >= a.theta {
                return Err(Error::InvalidMeasure(
                    "atom positions must be strictly increasing".into(),
                ));
            }
        }
        if let Some(d) = &density {
            if d.grid_size == 0 || d.samples.len() != d.grid_size {
                return Err(Error::InvalidMeasure(format!(
                    "density declares M = {} but has {} samples",
                    d.grid_size,
                    d.samples.len()
                )));
            }
            if let Some(v) = d.samples.iter().find(|v| !v.is_finite() || **v < 0.0) {
                return Err(Error::InvalidMeasure(format!(
                    "density sample {v} is negative or not finite"
                )));
            }
        }
        let measure = Self { atoms, density };
        let mass = measure.total_mass();
        if (mass - 1.0).abs() > MASS_TOL {
            return Err(Error::InvalidMeasure(format!(
                "total mass is {mass}, expected 1"
            )));
        }
        Ok(measure)
    }

    /// Normalized uniform measure sampled on `grid` nodes.
    pub fn uniform(grid: usize) -> Result<Self> {
        Self::from_density_fn(grid, |_| 1.0)
    }

    pub fn dirac(theta: f64) -> Result<Self> {
        Self::new(
            vec![Atom {
                theta: theta.rem_euclid(TAU),
                w: 1.0,
            }],
            None,
        )
    }

    /// Samples `f` on the grid and rescales it to unit mass.
    pub fn from_density_fn<F: Fn(f64) -> f64>(grid: usize, f: F) -> Result<Self> {
        if grid == 0 {
            return Err(Error::Config("density grid must be non-empty".into()));
        }
        let h = TAU / grid as f64;
        let mut samples: Vec<f64> = (0..grid).map(|j| f(h * j as f64)).collect();
        let mass = samples.iter().sum::<f64>() * h;
        if !(mass.is_finite() && mass > 0.0) {
            return Err(Error::InvalidMeasure(format!(
                "density has mass {mass}"
            )));
        }
        samples.iter_mut().for_each(|s| *s /= mass);
        Self::new(
            Vec::new(),
            Some(Density {
                grid_size: grid,
                samples,
            }),
        )
    }

    /// Convex combination `w · a + (1 − w) · b`.
    pub fn mixture(a: &Self, b: &Self, w: f64) -> Result<Self> {
        if !(0.0..=1.0).contains(&w) {
            return Err(Error::Config(format!("mixture weight {w} outside [0, 1]")));
        }
        let mut atoms: Vec<Atom> = a
            .atoms
            .iter()
            .map(|x| Atom { theta: x.theta, w: w * x.w })
            .chain(b.atoms.iter().map(|x| Atom {
                theta: x.theta,
                w: (1.0 - w) * x.w,
            }))
            .collect();
        atoms.sort_by(|x, y| x.theta.total_cmp(&y.theta));
        let mut merged: Vec<Atom> = Vec::with_capacity(atoms.len());
        for at in atoms {
            match merged.last_mut() {
                Some(last) if last.theta == at.theta => last.w += at.w,
                _ => merged.push(at),
            }
        }
        let density = match (&a.density, &b.density) {
            (None, None) => None,
            (Some(d), None) => Some(scaled(d, w)),
            (None, Some(d)) => Some(scaled(d, 1.0 - w)),
            (Some(da), Some(db)) => {
                if da.grid_size != db.grid_size {
                    return Err(Error::Shape(format!(
                        "density grids differ: {} vs {}",
                        da.grid_size, db.grid_size
                    )));
                }
                Some(Density {
                    grid_size: da.grid_size,
                    samples: da
                        .samples
                        .iter()
                        .zip(&db.samples)
                        .map(|(x, y)| w * x + (1.0 - w) * y)
                        .collect(),
                })
            }
        };
        Self::new(merged, density)
    }

    pub fn atoms(&self) -> &[Atom] {
        &self.atoms
    }

    pub fn density(&self) -> Option<&Density> {
        self.density.as_ref()
    }

    pub fn total_mass(&self) -> f64 {
        self.atoms.iter().map(|a| a.w).sum::<f64>()
            + self.density.as_ref().map_or(0.0, Density::mass)
    }

    /// Rotation by `a`. Atoms move exactly; density samples are linearly
    /// interpolated, which is exact when `a` is a multiple of the grid step.
    pub fn rotated(&self, a: f64) -> Result<Self> {
        let mut atoms: Vec<Atom> = self
            .atoms
            .iter()
            .map(|x| Atom {
                theta: (x.theta + a).rem_euclid(TAU),
                w: x.w,
            })
            .map(|mut x| {
                if x.theta >= TAU {
                    x.theta = 0.0;
                }
                x
            })
            .collect();
        atoms.sort_by(|x, y| x.theta.total_cmp(&y.theta));
        let density = self.density.as_ref().map(|d| {
            let h = TAU / d.grid_size as f64;
            let shift = a / h;
            let whole = shift.round();
            let samples = if (shift - whole).abs() < 1e-9 {
                let s = (whole as i64).rem_euclid(d.grid_size as i64) as usize;
                (0..d.grid_size)
                    .map(|j| d.samples[(j + d.grid_size - s) % d.grid_size])
                    .collect()
            } else {
                (0..d.grid_size)
                    .map(|j| d.value_at(h * j as f64 - a))
                    .collect()
            };
            Density {
                grid_size: d.grid_size,
                samples,
            }
        });
        Self::new(atoms, density)
    }

    /// Exact `μ([0, θ])` for θ in [0, 2π), extended by `F(θ + 2π) = F(θ) + 1`.
    pub fn cdf_at(&self, theta: f64) -> f64 {
        MeasureCdf::new(self).value(theta)
    }

    /// `inf { θ ≥ 0 : F(θ) ≥ p }` computed from the exact CDF.
    pub fn quantile(&self, p: f64) -> Result<f64> {
        if !(0.0..1.0).contains(&p) {
            return Err(Error::Domain(format!("quantile level {p} outside [0, 1)")));
        }
        Ok(MeasureCdf::new(self).quantile(p))
    }

    /// Quantiles for a batch of levels, sharing the CDF tables.
    pub fn quantiles(&self, levels: &[f64]) -> Result<Vec<f64>> {
        if let Some(p) = levels.iter().find(|p| !(0.0..1.0).contains(*p)) {
            return Err(Error::Domain(format!("quantile level {p} outside [0, 1)")));
        }
        let cdf = MeasureCdf::new(self);
        Ok(levels.iter().map(|&p| cdf.quantile(p)).collect())
    }
}

fn scaled(d: &Density, w: f64) -> Density {
    Density {
        grid_size: d.grid_size,
        samples: d.samples.iter().map(|s| w * s).collect(),
    }
}

/// Breakpoint tables of an exact measure CDF on [0, 2π).
///
/// Between consecutive breakpoints the density is linear, so the CDF is a
/// quadratic there; atoms sit on breakpoints.
struct MeasureCdf {
    /// Sorted breakpoints, starting at 0.
    points: Vec<f64>,
    /// Density value just right of each breakpoint.
    dens: Vec<f64>,
    /// F at each breakpoint, atoms at the breakpoint included.
    right: Vec<f64>,
    /// Atom mass sitting exactly on each breakpoint.
    jump: Vec<f64>,
}

impl MeasureCdf {
    fn new(mu: &CircleMeasure) -> Self {
        let mut points: Vec<f64> = vec![0.0];
        if let Some(d) = &mu.density {
            let h = TAU / d.grid_size as f64;
            points.extend((1..d.grid_size).map(|j| h * j as f64));
        }
        points.extend(mu.atoms.iter().map(|a| a.theta));
        points.sort_by(f64::total_cmp);
        points.dedup();

        let dens: Vec<f64> = match &mu.density {
            Some(d) => points.iter().map(|&t| d.value_at(t)).collect(),
            None => vec![0.0; points.len()],
        };
        let mut jump = vec![0.0; points.len()];
        for a in &mu.atoms {
            let i = points
                .binary_search_by(|p| p.total_cmp(&a.theta))
                .expect("atom is a breakpoint");
            jump[i] += a.w;
        }
        let mut right = vec![0.0; points.len()];
        let mut acc = 0.0;
        for i in 0..points.len() {
            if i > 0 {
                let len = points[i] - points[i - 1];
                let d1 = mu.density.as_ref().map_or(0.0, |d| d.value_at(points[i]));
                acc += 0.5 * len * (dens[i - 1] + d1);
            }
            acc += jump[i];
            right[i] = acc;
        }
        Self {
            points,
            dens,
            right,
            jump,
        }
    }

    fn end_density(&self, i: usize) -> f64 {
        // density at the right end of segment i (wraps to 0 for the last one)
        if i + 1 < self.points.len() {
            self.dens[i + 1]
        } else {
            self.dens[0]
        }
    }

    fn segment_len(&self, i: usize) -> f64 {
        if i + 1 < self.points.len() {
            self.points[i + 1] - self.points[i]
        } else {
            TAU - self.points[i]
        }
    }

    fn value(&self, theta: f64) -> f64 {
        let q = (theta / TAU).floor();
        let mut x = theta - q * TAU;
        if x >= TAU {
            x = 0.0;
        }
        let i = self.points.partition_point(|p| *p <= x) - 1;
        let s = x - self.points[i];
        let d0 = self.dens[i];
        let d1 = self.end_density(i);
        let len = self.segment_len(i);
        let inside = d0 * s + 0.5 * (d1 - d0) * s * s / len;
        q + self.right[i] + inside
    }

    fn quantile(&self, p: f64) -> f64 {
        // first breakpoint whose right value reaches p
        let b = self.right.partition_point(|&r| r < p);
        if b == 0 {
            return 0.0;
        }
        if b < self.points.len() && self.right[b] - self.jump[b] < p {
            return self.points[b];
        }
        // root lies in segment b - 1 (the last segment if b == len)
        let i = b - 1;
        let target = p - self.right[i];
        let d0 = self.dens[i];
        let d1 = self.end_density(i);
        let len = self.segment_len(i);
        let a = 0.5 * (d1 - d0) / len;
        let s = if a.abs() < 1e-300 {
            target / d0
        } else {
            // stable root of a s² + d0 s − target = 0 with s ≥ 0
            let disc = (d0 * d0 + 4.0 * a * target).max(0.0).sqrt();
            2.0 * target / (d0 + disc)
        };
        (self.points[i] + s.clamp(0.0, len)).min(self.points[i] + len)
    }
}

/// A circle CDF `F(θ) = θ/2π + g(θ)` with `g` sampled at `θ_j = 2πj/M`.
///
/// Between nodes `F` is linear, except that atoms snapped onto a node make
/// `F` jump there (right-continuous).
#[derive(Debug, Clone, PartialEq)]
pub struct CdfField {
    periodic: Vec<f64>,
    /// Jumps of `F` located at nodes, as (node, height).
    node_jumps: Vec<(usize, f64)>,
    /// Largest distance an atom was moved onto its node.
    snap_error: f64,
}

impl CdfField {
    /// Builds a field from the periodic part, checking grid size and monotonicity.
    pub fn from_periodic(periodic: Vec<f64>) -> Result<Self> {
        let field = Self::from_periodic_unchecked(periodic)?;
        field.validate()?;
        Ok(field)
    }

    pub(crate) fn from_periodic_unchecked(periodic: Vec<f64>) -> Result<Self> {
        if periodic.len() < 8 {
            return Err(Error::Config(format!(
                "grid size {} is below the minimum of 8",
                periodic.len()
            )));
        }
        if periodic.iter().any(|v| !v.is_finite()) {
            return Err(Error::Numerical("CDF samples must be finite".into()));
        }
        Ok(Self {
            periodic,
            node_jumps: Vec::new(),
            snap_error: 0.0,
        })
    }

    /// The uniform CDF `θ / 2π`.
    pub fn ramp(grid: usize) -> Result<Self> {
        Self::from_periodic(vec![0.0; grid])
    }

    /// `F(θ) = θ/2π + g(θ)` for a 2π-periodic `g`.
    pub fn from_fn<G: Fn(f64) -> f64>(grid: usize, g: G) -> Result<Self> {
        let h = TAU / grid as f64;
        Self::from_periodic((0..grid).map(|j| g(h * j as f64)).collect())
    }

    pub(crate) fn validate(&self) -> Result<()> {
        let m = self.periodic.len();
        for j in 0..m {
            let a = self.value(j);
            let b = self.value(j + 1);
            if b < a - MONOTONE_TOL {
                return Err(Error::Numerical(format!(
                    "CDF decreases between nodes {j} and {}: {a} -> {b}",
                    j + 1
                )));
            }
        }
        Ok(())
    }

    pub fn grid_size(&self) -> usize {
        self.periodic.len()
    }

    pub fn spacing(&self) -> f64 {
        TAU / self.periodic.len() as f64
    }

    pub fn node(&self, j: usize) -> f64 {
        self.spacing() * j as f64
    }

    pub fn periodic(&self) -> &[f64] {
        &self.periodic
    }

    pub fn snap_error(&self) -> f64 {
        self.snap_error
    }

    pub fn node_jumps(&self) -> &[(usize, f64)] {
        &self.node_jumps
    }

    /// F at global node index `j` (any `j`, periodized with the unit jump).
    pub fn value(&self, j: usize) -> f64 {
        self.value_signed(j as i64)
    }

    fn value_signed(&self, j: i64) -> f64 {
        let m = self.periodic.len() as i64;
        let q = j.div_euclid(m);
        let r = j.rem_euclid(m) as usize;
        q as f64 + self.spacing() * r as f64 / TAU + self.periodic[r]
    }

    /// All node values `F(θ_j)`, j = 0..M.
    pub fn values(&self) -> Vec<f64> {
        (0..self.grid_size()).map(|j| self.value(j)).collect()
    }

    fn jump_at(&self, j: usize) -> f64 {
        self.node_jumps
            .iter()
            .find(|(n, _)| *n == j)
            .map_or(0.0, |(_, w)| *w)
    }

    /// Left limit `F(θ_j⁻)`.
    pub fn left_limit(&self, j: usize) -> f64 {
        self.value(j) - self.jump_at(j % self.grid_size())
    }

    /// F at an arbitrary angle.
    pub fn value_at(&self, theta: f64) -> f64 {
        let h = self.spacing();
        let x = theta / h;
        let j = x.floor() as i64;
        let s = x - j as f64;
        if s == 0.0 {
            return self.value_signed(j);
        }
        let m = self.grid_size() as i64;
        let a = self.value_signed(j);
        let b = self.value_signed(j + 1) - self.jump_at((j + 1).rem_euclid(m) as usize);
        a + s * (b - a)
    }

    /// Forward slopes `(F(θ_{j+1}) − F(θ_j)) / Δθ`.
    pub fn slopes(&self) -> Vec<f64> {
        let h = self.spacing();
        (0..self.grid_size())
            .map(|j| (self.value(j + 1) - self.value(j)) / h)
            .collect()
    }

    pub fn min_slope(&self) -> f64 {
        self.slopes().into_iter().fold(f64::INFINITY, f64::min)
    }
}

/// CDF of `μ` sampled on `grid` nodes; atoms jump at the first node at or
/// after their position.
pub fn cdf_from_measure(mu: &CircleMeasure, grid: usize) -> Result<CdfField> {
    if grid < 8 {
        return Err(Error::Config(format!(
            "grid size {grid} is below the minimum of 8"
        )));
    }
    let cdf = MeasureCdf::new(mu);
    let h = TAU / grid as f64;
    let periodic: Vec<f64> = (0..grid)
        .map(|j| {
            let t = h * j as f64;
            cdf.value(t) - t / TAU
        })
        .collect();
    let mut node_jumps: Vec<(usize, f64)> = Vec::new();
    let mut snap_error: f64 = 0.0;
    for a in &mu.atoms {
        let mut j = (a.theta / h).ceil() as usize;
        // guard against θ_j computed just below the atom
        if j < grid && h * (j as f64) < a.theta {
            j += 1;
        }
        snap_error = snap_error.max(h * j as f64 - a.theta);
        let j = j % grid;
        match node_jumps.iter_mut().find(|(n, _)| *n == j) {
            Some(entry) => entry.1 += a.w,
            None => node_jumps.push((j, a.w)),
        }
    }
    node_jumps.sort_by_key(|(n, _)| *n);
    let mut field = CdfField::from_periodic_unchecked(periodic)?;
    field.node_jumps = node_jumps;
    field.snap_error = snap_error;
    field.validate()?;
    Ok(field)
}

/// `inf { θ : F(θ) ≥ p }`, with `F` read between nodes as in [`CdfField::value_at`].
pub fn quantile(field: &CdfField, p: f64) -> Result<f64> {
    if !(0.0..1.0).contains(&p) || p.is_nan() {
        return Err(Error::Domain(format!("quantile level {p} outside [0, 1)")));
    }
    let m = field.grid_size();
    let h = field.spacing();
    let last = field.value(m - 1);
    let q = (p - last).ceil() as i64;
    let base = q * m as i64;
    let vals: Vec<f64> = (0..m).map(|j| field.value_signed(base + j as i64)).collect();
    let j = vals.partition_point(|v| *v < p).min(m - 1);
    let global = base + j as i64;
    let left = vals[j] - field.jump_at(j);
    if left < p {
        return Ok(h * global as f64);
    }
    let prev = field.value_signed(global - 1);
    let frac = (p - prev) / (left - prev);
    Ok(h * (global - 1) as f64 + h * frac)
}

/// Worst pair found by [`check_hm`].
#[derive(Debug, Clone, Copy, PartialEq, Serialize, Deserialize)]
pub struct WorstPair {
    pub theta: f64,
    pub theta_h: f64,
    pub slope: f64,
}

#[derive(Debug, Clone, Copy, PartialEq, Serialize, Deserialize)]
pub struct HmCertificate {
    pub m: f64,
    pub satisfied: bool,
    pub worst_pair: WorstPair,
}

/// Checks `F(θ + h) − F(θ) ≥ m h` over every pair of grid nodes in one
/// period, wrap included.
pub fn check_hm(field: &CdfField, m: f64) -> Result<HmCertificate> {
    if !(m > 0.0) || !m.is_finite() {
        return Err(Error::Config(format!("slope floor m = {m} must be positive")));
    }
    let grid = field.grid_size();
    let h = field.spacing();
    let values = field.values();
    let value = |k: usize| values[k % grid] + (k / grid) as f64;
    let (slope, i, l) = (0..grid)
        .into_par_iter()
        .map(|i| {
            let fi = values[i];
            let mut best = (f64::INFINITY, i, 1usize);
            for l in 1..=grid {
                let s = (value(i + l) - fi) / (h * l as f64);
                if s < best.0 {
                    best = (s, i, l);
                }
            }
            best
        })
        .reduce(
            || (f64::INFINITY, usize::MAX, usize::MAX),
            |a, b| if b.0 < a.0 || (b.0 == a.0 && (b.1, b.2) < (a.1, a.2)) { b } else { a },
        );
    Ok(HmCertificate {
        m,
        satisfied: slope >= m - HM_TOL,
        worst_pair: WorstPair {
            theta: h * i as f64,
            theta_h: h * (i + l) as f64,
            slope,
        },
    })
}

/// Normalized mass of the standard bump `exp(−1/(1−x²))` on (−1, 1).
fn bump_mass() -> f64 {
    GaussLegendre::new(20).integrate(-1.0, 1.0, 64, bump)
}

fn bump(x: f64) -> f64 {
    if x.abs() >= 1.0 {
        0.0
    } else {
        (-1.0 / (1.0 - x * x)).exp()
    }
}

/// The mollifier `ρ_ε(θ) = bump(θ/ε) / (ε ∫bump)`, supported in [−ε, ε].
pub fn mollifier(eps: f64) -> impl Fn(f64) -> f64 {
    let scale = 1.0 / (eps * bump_mass());
    move |theta| scale * bump(wrap_pi(theta) / eps)
}

/// Representative of θ in (−π, π].
fn wrap_pi(theta: f64) -> f64 {
    let t = (theta + std::f64::consts::PI).rem_euclid(TAU) - std::f64::consts::PI;
    if t == -std::f64::consts::PI {
        std::f64::consts::PI
    } else {
        t
    }
}

/// `μ ∗ ρ_ε` sampled on `grid` nodes. The result has a density only.
///
/// Each atom's kernel and the density kernel are normalized on the grid, so
/// the discrete mass is preserved exactly up to rounding. When `μ` carries a
/// density its grid must equal `grid`.
pub fn mollify(mu: &CircleMeasure, eps: f64, grid: usize) -> Result<CircleMeasure> {
    if !(eps > 0.0 && eps < std::f64::consts::PI) {
        return Err(Error::Config(format!("mollifier radius {eps} outside (0, π)")));
    }
    if grid < 8 {
        return Err(Error::Config(format!("grid size {grid} is below the minimum of 8")));
    }
    if let Some(d) = mu.density() {
        if d.grid_size != grid {
            return Err(Error::Shape(format!(
                "density grid {} differs from requested grid {grid}",
                d.grid_size
            )));
        }
    }
    let rho = mollifier(eps);
    let h = TAU / grid as f64;
    let mut out = vec![0.0; grid];

    for a in mu.atoms() {
        let kernel: Vec<f64> = (0..grid).map(|j| rho(h * j as f64 - a.theta)).collect();
        let z = kernel.iter().sum::<f64>() * h;
        if z <= 0.0 {
            return Err(Error::Config(format!(
                "mollifier radius {eps} is narrower than the grid spacing {h}"
            )));
        }
        for (o, k) in out.iter_mut().zip(&kernel) {
            *o += a.w * k / z;
        }
    }

    if let Some(d) = mu.density() {
        let kernel: Vec<f64> = (0..grid).map(|l| rho(h * l as f64)).collect();
        let z = kernel.iter().sum::<f64>() * h;
        if z <= 0.0 {
            return Err(Error::Config(format!(
                "mollifier radius {eps} is narrower than the grid spacing {h}"
            )));
        }
        let support: Vec<(usize, f64)> = kernel
            .iter()
            .enumerate()
            .filter(|(_, k)| **k > 0.0)
            .map(|(l, k)| (l, k * h / z))
            .collect();
        for (j, o) in out.iter_mut().enumerate() {
            let mut acc = 0.0;
            for &(l, k) in &support {
                acc += k * d.samples[(j + grid - l) % grid];
            }
            *o += acc;
        }
    }

    CircleMeasure::new(
        Vec::new(),
        Some(Density {
            grid_size: grid,
            samples: out,
        }),
    )
}

/// `max_j |F(θ_j) − G(θ_j)|`.
pub fn sup_distance(f: &CdfField, g: &CdfField) -> Result<f64> {
    if f.grid_size() != g.grid_size() {
        return Err(Error::Shape(format!(
            "grid sizes differ: {} vs {}",
            f.grid_size(),
            g.grid_size()
        )));
    }
    Ok(f
        .periodic
        .iter()
        .zip(&g.periodic)
        .map(|(a, b)| (a - b).abs())
        .fold(0.0, f64::max))
}

#[cfg(test)]
mod tests {
    use super::*;
    use std::f64::consts::PI;

    fn half_uniform_half_atom() -> CircleMeasure {
        let u = CircleMeasure::uniform(8).unwrap();
        let a = CircleMeasure::dirac(PI).unwrap();
        CircleMeasure::mixture(&u, &a, 0.5).unwrap()
    }

    #[test]
    fn uniform_cdf_is_the_ramp() {
        let f = cdf_from_measure(&CircleMeasure::uniform(64).unwrap(), 32).unwrap();
        assert!(f.periodic().iter().all(|g| g.abs() < 1e-14));
    }

    #[test]
    fn dirac_at_zero_is_a_unit_step() {
        let f = cdf_from_measure(&CircleMeasure::dirac(0.0).unwrap(), 16).unwrap();
        for j in 0..16 {
            assert!((f.value(j) - 1.0).abs() < 1e-15);
        }
        assert_eq!(f.left_limit(0), 0.0);
        assert_eq!(f.snap_error(), 0.0);
    }

    #[test]
    fn mixed_measure_jump_at_pi() {
        // oracle: F(π⁻) = ½ · π/2π, F(π) = that + ½
        let f = cdf_from_measure(&half_uniform_half_atom(), 8).unwrap();
        assert!((f.left_limit(4) - 0.25).abs() < 1e-15);
        assert!((f.value(4) - 0.75).abs() < 1e-15);
    }

    #[test]
    fn rejects_small_grid_and_bad_mass() {
        assert!(matches!(
            cdf_from_measure(&CircleMeasure::dirac(0.0).unwrap(), 7),
            Err(Error::Config(_))
        ));
        let bad = CircleMeasure::new(vec![Atom { theta: 1.0, w: 0.9 }], None);
        assert!(matches!(bad, Err(Error::InvalidMeasure(_))));
        let unsorted = CircleMeasure::new(
            vec![Atom { theta: 1.0, w: 0.5 }, Atom { theta: 0.5, w: 0.5 }],
            None,
        );
        assert!(unsorted.is_err());
    }

    #[test]
    fn atom_between_nodes_snaps_forward() {
        let mu = CircleMeasure::dirac(0.1).unwrap();
        let f = cdf_from_measure(&mu, 8).unwrap();
        let h = TAU / 8.0;
        assert_eq!(f.node_jumps(), &[(1, 1.0)]);
        assert!((f.snap_error() - (h - 0.1)).abs() < 1e-15);
        assert_eq!(f.value(0), 0.0);
        assert!((f.value(1) - 1.0).abs() < 1e-15);
    }

    #[test]
    fn quantile_examples() {
        let uniform = CdfField::ramp(64).unwrap();
        assert!((quantile(&uniform, 0.25).unwrap() - PI / 2.0).abs() < 1e-14);
        let dirac = cdf_from_measure(&CircleMeasure::dirac(0.0).unwrap(), 16).unwrap();
        for p in [1e-9, 0.3, 0.999] {
            assert_eq!(quantile(&dirac, p).unwrap(), 0.0);
        }
        // F vanishes on [−2π, 0), so the level-0 infimum is −2π
        assert_eq!(quantile(&dirac, 0.0).unwrap(), -TAU);
        let mixed = cdf_from_measure(&half_uniform_half_atom(), 8).unwrap();
        assert!((quantile(&mixed, 0.5).unwrap() - PI).abs() < 1e-15);
        assert!(matches!(quantile(&uniform, 1.0), Err(Error::Domain(_))));
        assert!(matches!(quantile(&uniform, -0.1), Err(Error::Domain(_))));
    }

    #[test]
    fn quantile_of_shifted_field_leaves_the_base_period() {
        // F(θ) = (θ − 1)/2π: quantile(0) = 1, quantile(0.9) = 1 + 0.9·2π > 2π
        let f = CdfField::from_fn(256, |_| -1.0 / TAU).unwrap();
        assert!((quantile(&f, 0.0).unwrap() - 1.0).abs() < 1e-12);
        assert!((quantile(&f, 0.9).unwrap() - (1.0 + 0.9 * TAU)).abs() < 1e-12);
    }

    #[test]
    fn measure_quantiles_are_exact() {
        let mu = half_uniform_half_atom();
        assert!((mu.quantile(1.0 / 16.0).unwrap() - PI / 4.0).abs() < 1e-14);
        assert_eq!(mu.quantile(5.0 / 16.0).unwrap(), PI);
        assert_eq!(mu.quantile(11.0 / 16.0).unwrap(), PI);
        assert!((mu.quantile(13.0 / 16.0).unwrap() - 1.25 * PI).abs() < 1e-14);
        assert_eq!(CircleMeasure::dirac(0.0).unwrap().quantile(0.7).unwrap(), 0.0);
    }

    #[test]
    fn hm_on_uniform() {
        let f = CdfField::ramp(64).unwrap();
        assert!(check_hm(&f, 1.0 / TAU).unwrap().satisfied);
        assert!(!check_hm(&f, 1.0).unwrap().satisfied);
        assert!(check_hm(&f, 1.0 / TAU + 5e-11).unwrap().satisfied);
        assert!(!check_hm(&f, 1.0 / TAU + 1e-9).unwrap().satisfied);
        assert!(matches!(check_hm(&f, 0.0), Err(Error::Config(_))));
    }

    #[test]
    fn hm_on_mollified_dirac_matches_pair_scan() {
        let grid = 128;
        let mu = mollify(&CircleMeasure::dirac(0.0).unwrap(), 0.5, grid).unwrap();
        let f = cdf_from_measure(&mu, grid).unwrap();
        let cert = check_hm(&f, 1e-3).unwrap();
        // oracle: brute force over all (i, j) with j > i across two periods
        let vals: Vec<f64> = (0..2 * grid).map(|k| f.value(k)).collect();
        let h = f.spacing();
        let mut worst = f64::INFINITY;
        for i in 0..grid {
            for j in i + 1..=i + grid {
                worst = worst.min((vals[j] - vals[i]) / (h * (j - i) as f64));
            }
        }
        assert_eq!(cert.worst_pair.slope, worst);
        assert!(!cert.satisfied);
    }

    #[test]
    fn mollify_examples() {
        let grid = 512;
        let u = CircleMeasure::uniform(grid).unwrap();
        let mu = mollify(&u, 0.7, grid).unwrap();
        let s = &mu.density().unwrap().samples;
        assert!(s.iter().all(|v| (v - 1.0 / TAU).abs() < 1e-13));

        // δ ∗ ρ = ρ, up to the grid renormalization of the kernel mass
        // (trapezoid mass of ρ_ε differs from 1 by ~1e-7 at this resolution)
        let rho = mollifier(0.4);
        let d = mollify(&CircleMeasure::dirac(0.0).unwrap(), 0.4, grid).unwrap();
        let h = TAU / grid as f64;
        for (j, v) in d.density().unwrap().samples.iter().enumerate() {
            let r = rho(h * j as f64);
            assert!((v - r).abs() <= 1e-6 * r, "node {j}");
        }

        let two = CircleMeasure::new(
            vec![Atom { theta: 0.0, w: 0.5 }, Atom { theta: PI, w: 0.5 }],
            None,
        )
        .unwrap();
        let d = mollify(&two, 0.3, grid).unwrap();
        let rho = mollifier(0.3);
        for (j, v) in d.density().unwrap().samples.iter().enumerate() {
            let t = h * j as f64;
            let oracle = 0.5 * (rho(t) + rho(t - PI));
            assert!((v - oracle).abs() <= 1e-6 * oracle, "node {j}");
        }
        assert!((d.total_mass() - 1.0).abs() < 1e-12);
    }

    #[test]
    fn mollify_rejects_bad_radius() {
        let d = CircleMeasure::dirac(0.0).unwrap();
        assert!(matches!(mollify(&d, 0.0, 64), Err(Error::Config(_))));
        assert!(matches!(mollify(&d, PI, 64), Err(Error::Config(_))));
        assert!(matches!(
            mollify(&CircleMeasure::uniform(32).unwrap(), 0.5, 64),
            Err(Error::Shape(_))
        ));
    }

    #[test]
    fn sup_distance_examples() {
        let f = CdfField::ramp(64).unwrap();
        assert_eq!(sup_distance(&f, &f).unwrap(), 0.0);
        let a = 0.03;
        let g = CdfField::from_fn(64, |_| -a / TAU).unwrap();
        assert!((sup_distance(&f, &g).unwrap() - a / TAU).abs() < 1e-16);
        assert!((sup_distance(&g, &f).unwrap() - a / TAU).abs() < 1e-16);
        let other = CdfField::ramp(32).unwrap();
        assert!(matches!(sup_distance(&f, &other), Err(Error::Shape(_))));
    }

    #[test]
    fn measure_json_round_trip() {
        let mu = half_uniform_half_atom();
        let text = serde_json::to_string(&mu).unwrap();
        assert!(text.contains("\"M\":8"));
        let back: CircleMeasure = serde_json::from_str(&text).unwrap();
        assert_eq!(back, mu);
        let bad = r#"{"atoms":[{"theta":0.0,"w":0.5}]}"#;
        assert!(serde_json::from_str::<CircleMeasure>(bad).is_err());
    }
}
