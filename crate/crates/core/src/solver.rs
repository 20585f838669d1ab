//! Forward-Euler scheme for the truncated primitive equation on [`CdfField`]s.
//!
//! Only the periodic part of a field is updated; the unit ramp, and hence the
//! jump `F(θ+2π) − F(θ) = 1`, is never touched.

use std::f64::consts::{PI, TAU};
use std::io::{self, Write};

use rayon::prelude::*;
use serde::{Deserialize, Serialize};

use crate::error::{Error, Result};
use crate::measure::{check_hm, sup_distance, CdfField};
use crate::ops::{NonlocalOps, OperatorBackend};

/// Allowed slope-floor or ordering breach before a run is flagged.
pub const MONITOR_TOL: f64 = 1e-7;

/// Relative slack on `dt ≤ cfl_dt`, absorbing the rounding of `T / n`.
const DT_SLACK: f64 = 1e-12;

#[derive(Debug, Clone, Copy, PartialEq, Eq, Serialize, Deserialize, Default)]
pub enum GradientScheme {
    /// `(F_{j+1} − F_{j−1}) / 2Δθ`.
    #[default]
    #[serde(rename = "central")]
    Central,
    /// One-sided difference picked by the sign of `A₀[F]`: forward where
    /// `A₀ ≥ 0`, backward otherwise. Monotone for every `dt ≤ cfl_dt`.
    #[serde(rename = "upwind-min")]
    UpwindMin,
}

fn default_cfl_safety() -> f64 {
    0.5
}

fn default_record_every() -> usize {
    1
}

#[derive(Debug, Clone, Copy, PartialEq, Serialize, Deserialize)]
pub struct SchemeConfig {
    #[serde(rename = "M")]
    pub grid_size: usize,
    pub m: f64,
    #[serde(default = "default_cfl_safety")]
    pub cfl_safety: f64,
    #[serde(default)]
    pub backend: OperatorBackend,
    #[serde(default)]
    pub gradient: GradientScheme,
    #[serde(rename = "T")]
    pub final_time: f64,
    #[serde(default = "default_record_every")]
    pub record_every: usize,
}

impl SchemeConfig {
    pub fn new(grid_size: usize, m: f64, final_time: f64) -> Self {
        Self {
            grid_size,
            m,
            cfl_safety: default_cfl_safety(),
            backend: OperatorBackend::default(),
            gradient: GradientScheme::default(),
            final_time,
            record_every: default_record_every(),
        }
    }

    pub fn validate(&self) -> Result<()> {
        if !(self.m > 0.0 && self.m.is_finite()) {
            return Err(Error::Config(format!("m must be positive, got {}", self.m)));
        }
        if !(self.cfl_safety > 0.0 && self.cfl_safety <= 1.0) {
            return Err(Error::Config(format!(
                "cfl_safety must lie in (0, 1], got {}",
                self.cfl_safety
            )));
        }
        if !(self.final_time >= 0.0 && self.final_time.is_finite()) {
            return Err(Error::Config(format!("T must be non-negative, got {}", self.final_time)));
        }
        if self.record_every == 0 {
            return Err(Error::Config("record_every must be at least 1".into()));
        }
        self.backend.validate()
    }
}

/// Largest stable step, `cfl_safety · m · Δθ` with `Δθ = 2π/M`.
///
/// The update at node `j` has diagonal coefficient `1 + dt ∂R/∂F_j`. With
/// the floor `s ≥ m`, `|∂R/∂A| ≤ 1/(π m)`, the A₀ stencil diagonal `M/4`
/// and the one-sided gradient `1/Δθ`, the coefficient stays non-negative for
/// `dt ≤ 2 m Δθ / (1 + 1/π) ≈ 1.52 m Δθ`; safety 1 keeps a margin below that.
pub fn cfl_dt(config: &SchemeConfig) -> f64 {
    config.cfl_safety * config.m * TAU / config.grid_size as f64
}

/// `−(1/π)(arctan(a / max(slope₊, m)) + π/2)`.
pub fn local_rhs(a: f64, slope: f64, m: f64) -> f64 {
    let s = slope.max(0.0).max(m);
    -((a / s).atan() + 0.5 * PI) / PI
}

#[derive(Debug, Clone, Copy, PartialEq, Eq, Hash, Serialize, Deserialize)]
#[serde(rename_all = "snake_case")]
pub enum Flag {
    /// Some node moved by more than `dt`.
    SpeedBound,
    /// Minimum grid slope fell below `m − 1e−7`.
    SlopeFloor,
    /// A pair run lost its ordering by more than `1e−7`.
    Ordering,
    /// A recorded snapshot failed CDF validation.
    InvalidSnapshot,
}

#[derive(Debug, Clone, PartialEq, Serialize, Deserialize)]
pub struct StepMonitor {
    pub step: usize,
    pub t: f64,
    pub min_slope: f64,
    #[serde(rename = "max_dF_over_dt")]
    pub max_df_over_dt: f64,
    /// Nodes where the central stencil loses monotonicity (`|A₀| > 2 w₁ Δθ s`).
    pub nonmonotone_nodes: usize,
    pub flags: Vec<Flag>,
}

#[derive(Debug, Clone)]
pub struct Snapshot {
    pub t: f64,
    pub field: CdfField,
}

#[derive(Debug, Clone)]
pub struct SolveResult {
    pub snapshots: Vec<Snapshot>,
    pub monitors: Vec<StepMonitor>,
    pub flagged: bool,
}

impl SolveResult {
    pub fn last(&self) -> &Snapshot {
        self.snapshots.last().expect("solve records the initial state")
    }

    /// Worst per-step decrease of the minimum slope.
    pub fn max_slope_drop(&self, initial_min_slope: f64) -> f64 {
        let mut prev = initial_min_slope;
        let mut worst = 0.0f64;
        for m in &self.monitors {
            worst = worst.max(prev - m.min_slope);
            prev = m.min_slope;
        }
        worst
    }

    /// CSV with columns `t,theta,F,slope` (forward grid slope).
    pub fn write_snapshots_csv<W: Write>(&self, mut w: W) -> io::Result<()> {
        writeln!(w, "t,theta,F,slope")?;
        for snap in &self.snapshots {
            let slopes = snap.field.slopes();
            for (j, slope) in slopes.iter().enumerate() {
                writeln!(w, "{},{},{},{}", snap.t, snap.field.node(j), snap.field.value(j), slope)?;
            }
        }
        Ok(())
    }

    /// One JSON object per step.
    pub fn write_monitor_jsonl<W: Write>(&self, mut w: W) -> io::Result<()> {
        for m in &self.monitors {
            serde_json::to_writer(&mut w, m)?;
            writeln!(w)?;
        }
        Ok(())
    }
}

/// The scheme with its operators built once for a grid.
#[derive(Debug, Clone)]
pub struct Scheme {
    config: SchemeConfig,
    ops: NonlocalOps,
    /// Nearest-neighbour weight of the A₀ stencil.
    w1: f64,
}

impl Scheme {
    pub fn new(config: SchemeConfig) -> Result<Self> {
        config.validate()?;
        let ops = NonlocalOps::new(config.grid_size, config.backend)?;
        let h = TAU / config.grid_size as f64;
        let w1 = 2.0 * h / (8.0 * PI) / (0.5 * h).sin().powi(2);
        Ok(Self { config, ops, w1 })
    }

    pub fn config(&self) -> &SchemeConfig {
        &self.config
    }

    pub fn cfl_dt(&self) -> f64 {
        cfl_dt(&self.config)
    }

    fn check_grid(&self, field: &CdfField) -> Result<()> {
        if field.grid_size() != self.config.grid_size {
            return Err(Error::Shape(format!(
                "field has {} nodes, scheme expects {}",
                field.grid_size(),
                self.config.grid_size
            )));
        }
        Ok(())
    }

    /// Right-hand side per node and the number of central-stencil nodes
    /// where the update is not monotone.
    fn rhs_parts(&self, g: &[f64]) -> Result<(Vec<f64>, usize)> {
        let a0 = self.ops.half_laplacian(g)?;
        let n = g.len();
        let h = TAU / n as f64;
        let ramp = 1.0 / TAU;
        let m = self.config.m;
        let scheme = self.config.gradient;
        let w1 = self.w1;
        let rows: Vec<(f64, bool)> = (0..n)
            .into_par_iter()
            .map(|j| {
                let next = g[(j + 1) % n];
                let prev = g[(j + n - 1) % n];
                let a = a0[j];
                let slope = match scheme {
                    GradientScheme::Central => (next - prev) / (2.0 * h) + ramp,
                    GradientScheme::UpwindMin if a >= 0.0 => (next - g[j]) / h + ramp,
                    GradientScheme::UpwindMin => (g[j] - prev) / h + ramp,
                };
                let bad = scheme == GradientScheme::Central && slope > m && a.abs() > 2.0 * w1 * h * slope;
                (local_rhs(a, slope, m), bad)
            })
            .collect();
        let bad = rows.iter().filter(|r| r.1).count();
        Ok((rows.into_iter().map(|r| r.0).collect(), bad))
    }

    pub fn rhs(&self, field: &CdfField) -> Result<Vec<f64>> {
        self.check_grid(field)?;
        Ok(self.rhs_parts(field.periodic())?.0)
    }

    fn check_dt(&self, dt: f64) -> Result<()> {
        let limit = self.cfl_dt();
        if !(dt > 0.0) || dt > limit * (1.0 + DT_SLACK) {
            return Err(Error::Config(format!("time step {dt} outside (0, {limit}]")));
        }
        Ok(())
    }

    pub fn step(&self, field: &CdfField, dt: f64) -> Result<CdfField> {
        self.check_grid(field)?;
        self.check_dt(dt)?;
        let (next, _) = self.advance(field.periodic(), dt)?;
        CdfField::from_periodic_unchecked(next)
    }

    fn advance(&self, g: &[f64], dt: f64) -> Result<(Vec<f64>, usize)> {
        let (r, bad) = self.rhs_parts(g)?;
        let next: Vec<f64> = g.iter().zip(&r).map(|(v, r)| v + dt * r).collect();
        if next.iter().any(|v| !v.is_finite()) {
            return Err(Error::Numerical("non-finite value after update".into()));
        }
        Ok((next, bad))
    }

    fn require_hm(&self, field: &CdfField) -> Result<()> {
        self.check_grid(field)?;
        let cert = check_hm(field, self.config.m)?;
        if !cert.satisfied {
            return Err(Error::HmViolation {
                m: self.config.m,
                slope: cert.worst_pair.slope,
                theta: cert.worst_pair.theta,
            });
        }
        Ok(())
    }

    /// Step counts and sizes landing exactly on each target time.
    fn schedule(&self, times: &[f64]) -> Result<Vec<(usize, f64)>> {
        let limit = self.cfl_dt();
        let mut prev = 0.0;
        let mut out = Vec::with_capacity(times.len());
        for &t in times {
            if !(t >= prev) || !t.is_finite() {
                return Err(Error::Config(format!(
                    "record times must be finite and non-decreasing from 0, got {t} after {prev}"
                )));
            }
            let span = t - prev;
            let n = (span / limit).ceil() as usize;
            out.push((n, if n == 0 { 0.0 } else { span / n as f64 }));
            prev = t;
        }
        Ok(out)
    }

    fn run(&self, f0: &CdfField, times: &[f64], every: Option<usize>) -> Result<SolveResult> {
        self.require_hm(f0)?;
        let m = self.config.m;
        let mut g = f0.periodic().to_vec();
        let mut snapshots = vec![Snapshot {
            t: 0.0,
            field: f0.clone(),
        }];
        let mut monitors = Vec::new();
        let mut flagged = false;
        let mut step = 0;
        let mut t0 = 0.0;
        for (target, (n, dt)) in times.iter().zip(self.schedule(times)?) {
            for i in 0..n {
                let (next, bad) = self.advance(&g, dt).map_err(|e| e.at_step(step + 1))?;
                step += 1;
                let t = if i + 1 == n { *target } else { t0 + (i + 1) as f64 * dt };
                let max_df = g
                    .iter()
                    .zip(&next)
                    .map(|(a, b)| (a - b).abs())
                    .fold(0.0, f64::max);
                let field = CdfField::from_periodic_unchecked(next)?;
                let min_slope = field.min_slope();
                let mut flags = Vec::new();
                // rounding of F + dt·r can exceed dt by a few ulps of |F|
                let scale = g.iter().fold(1.0f64, |a, v| a.max(v.abs()));
                if max_df > dt + 4.0 * f64::EPSILON * scale {
                    flags.push(Flag::SpeedBound);
                }
                if min_slope < m - MONITOR_TOL {
                    flags.push(Flag::SlopeFloor);
                }
                let record = match every {
                    Some(k) => step % k == 0 || (i + 1 == n),
                    None => i + 1 == n,
                };
                if record {
                    if field.validate().is_err() {
                        flags.push(Flag::InvalidSnapshot);
                    }
                    snapshots.push(Snapshot { t, field: field.clone() });
                }
                flagged |= !flags.is_empty();
                monitors.push(StepMonitor {
                    step,
                    t,
                    min_slope,
                    max_df_over_dt: max_df / dt,
                    nonmonotone_nodes: bad,
                    flags,
                });
                g = field.periodic().to_vec();
            }
            if n == 0 && every.is_none() && *target > 0.0 {
                snapshots.push(Snapshot {
                    t: *target,
                    field: CdfField::from_periodic_unchecked(g.clone())?,
                });
            }
            t0 = *target;
        }
        Ok(SolveResult {
            snapshots,
            monitors,
            flagged,
        })
    }

    /// Runs to `T`, recording every `record_every` steps and the final state.
    pub fn solve(&self, f0: &CdfField) -> Result<SolveResult> {
        self.run(f0, &[self.config.final_time], Some(self.config.record_every))
    }

    /// Runs through the given non-decreasing times, landing on each exactly;
    /// snapshots are the initial state followed by one per positive time.
    pub fn solve_at(&self, f0: &CdfField, times: &[f64]) -> Result<SolveResult> {
        self.run(f0, times, None)
    }

    /// Runs `f0` and `g0` side by side to `T` on the same step sequence.
    pub fn solve_pair(&self, f0: &CdfField, g0: &CdfField) -> Result<PairReport> {
        self.require_hm(f0)?;
        self.require_hm(g0)?;
        let m = self.config.m;
        let (n, dt) = self.schedule(&[self.config.final_time])?[0];
        let mut f = f0.periodic().to_vec();
        let mut g = g0.periodic().to_vec();
        let initial_distance = sup_distance(f0, g0)?;
        let excess = |f: &[f64], g: &[f64]| f.iter().zip(g).map(|(a, b)| a - b).fold(f64::NEG_INFINITY, f64::max);
        let initial_excess = excess(&f, &g);
        let mut report = PairReport {
            steps: n,
            dt,
            initial_distance,
            max_distance: initial_distance,
            initial_excess,
            max_excess: initial_excess,
            min_slope: f0.min_slope().min(g0.min_slope()),
            max_df_over_dt: 0.0,
            flags: Vec::new(),
        };
        for step in 1..=n {
            let (fn_, _) = self.advance(&f, dt).map_err(|e| e.at_step(step))?;
            let (gn, _) = self.advance(&g, dt).map_err(|e| e.at_step(step))?;
            for (old, new) in [(&f, &fn_), (&g, &gn)] {
                let d = old.iter().zip(new.iter()).map(|(a, b)| (a - b).abs()).fold(0.0, f64::max);
                report.max_df_over_dt = report.max_df_over_dt.max(d / dt);
            }
            f = fn_;
            g = gn;
            let ff = CdfField::from_periodic_unchecked(f.clone())?;
            let gf = CdfField::from_periodic_unchecked(g.clone())?;
            report.min_slope = report.min_slope.min(ff.min_slope()).min(gf.min_slope());
            report.max_distance = report.max_distance.max(sup_distance(&ff, &gf)?);
            report.max_excess = report.max_excess.max(excess(&f, &g));
        }
        if report.max_df_over_dt > 1.0 + 1e-12 {
            report.flags.push(Flag::SpeedBound);
        }
        if report.min_slope < m - MONITOR_TOL {
            report.flags.push(Flag::SlopeFloor);
        }
        if report.initial_excess <= 0.0 && report.max_excess > MONITOR_TOL {
            report.flags.push(Flag::Ordering);
        }
        Ok(report)
    }
}

/// Summary of two runs sharing one step sequence.
#[derive(Debug, Clone, PartialEq, Serialize, Deserialize)]
pub struct PairReport {
    pub steps: usize,
    pub dt: f64,
    pub initial_distance: f64,
    pub max_distance: f64,
    /// `max_j (F_j − G_j)` at t = 0 and its maximum over the run.
    pub initial_excess: f64,
    pub max_excess: f64,
    pub min_slope: f64,
    #[serde(rename = "max_dF_over_dt")]
    pub max_df_over_dt: f64,
    pub flags: Vec<Flag>,
}

/// `rhs` for a one-off evaluation.
pub fn rhs(field: &CdfField, config: &SchemeConfig) -> Result<Vec<f64>> {
    Scheme::new(*config)?.rhs(field)
}

/// One forward-Euler step; `dt` above [`cfl_dt`] is a configuration error.
pub fn step_explicit(field: &CdfField, dt: f64, config: &SchemeConfig) -> Result<CdfField> {
    Scheme::new(*config)?.step(field, dt)
}

pub fn solve(f0: &CdfField, config: &SchemeConfig) -> Result<SolveResult> {
    Scheme::new(*config)?.solve(f0)
}

pub fn solve_at(f0: &CdfField, config: &SchemeConfig, times: &[f64]) -> Result<SolveResult> {
    Scheme::new(*config)?.solve_at(f0, times)
}

#[cfg(test)]
pub(crate) mod tests {
    use super::*;
    use crate::quadrature::GaussLegendre;
    use rand::{Rng, SeedableRng};
    use rand_chacha::ChaCha8Rng;

    /// Random trig polynomial scaled so the CDF has grid slopes ≥ `m`.
    pub(crate) fn random_hm_field(rng: &mut ChaCha8Rng, grid: usize, m: f64, modes: usize) -> CdfField {
        let coeffs: Vec<(f64, f64)> = (0..modes)
            .map(|_| (rng.gen_range(-1.0..1.0), rng.gen_range(-1.0..1.0)))
            .collect();
        let h = TAU / grid as f64;
        let raw: Vec<f64> = (0..grid)
            .map(|j| {
                let t = h * j as f64;
                coeffs
                    .iter()
                    .enumerate()
                    .map(|(k, (a, b))| {
                        let k = (k + 1) as f64;
                        (a * (k * t).cos() + b * (k * t).sin()) / k
                    })
                    .sum()
            })
            .collect();
        let min_gs = (0..grid)
            .map(|j| (raw[(j + 1) % grid] - raw[j]) / h)
            .fold(f64::INFINITY, f64::min);
        let room = 1.0 / TAU - m;
        let lambda = rng.gen_range(0.2..0.95) * room / (-min_gs);
        let offset = rng.gen_range(-0.1..0.1);
        CdfField::from_periodic(raw.iter().map(|v| lambda * v + offset).collect()).unwrap()
    }

    /// `G ≥ F` with both satisfying the slope floor: a convex mix of `F` and
    /// another admissible field, lifted until it dominates `F`.
    pub(crate) fn ordered_pair(rng: &mut ChaCha8Rng, grid: usize, m: f64) -> (CdfField, CdfField) {
        let f = random_hm_field(rng, grid, m, 6);
        let other = random_hm_field(rng, grid, m, 6);
        let w = rng.gen_range(0.0..1.0);
        let mix: Vec<f64> = f
            .periodic()
            .iter()
            .zip(other.periodic())
            .map(|(a, b)| (1.0 - w) * a + w * b)
            .collect();
        let lift = f
            .periodic()
            .iter()
            .zip(&mix)
            .map(|(a, b)| a - b)
            .fold(f64::NEG_INFINITY, f64::max)
            + rng.gen_range(0.0..0.01);
        let g = CdfField::from_periodic(mix.iter().map(|v| v + lift).collect()).unwrap();
        (f, g)
    }

    fn config(grid: usize, m: f64, t: f64, gradient: GradientScheme) -> SchemeConfig {
        SchemeConfig {
            gradient,
            ..SchemeConfig::new(grid, m, t)
        }
    }

    #[test]
    fn uniform_rhs_is_one_half() {
        let ramp = CdfField::ramp(64).unwrap();
        for gradient in [GradientScheme::Central, GradientScheme::UpwindMin] {
            for m in [1e-3, 0.05, 1.0 / TAU] {
                let r = rhs(&ramp, &config(64, m, 1.0, gradient)).unwrap();
                assert!(r.iter().all(|v| *v == -0.5));
            }
        }
    }

    #[test]
    fn local_rhs_limits() {
        assert!((local_rhs(1e12, 0.1, 0.05) + 1.0).abs() < 1e-12);
        assert!(local_rhs(-1e12, 0.1, 0.05).abs() < 1e-12);
        // negative slopes are floored at m
        assert_eq!(local_rhs(0.3, -2.0, 0.05), local_rhs(0.3, 0.01, 0.05));
        for (a, s) in [(5.0, 0.05), (-5.0, 1e-9), (0.0, 3.0)] {
            let r = local_rhs(a, s, 0.05);
            assert!(r > -1.0 && r < 0.0);
        }
    }

    #[test]
    fn rhs_matches_dense_quadrature_oracle() {
        let grid = 256;
        let m = 0.05;
        let amp = 0.01;
        let g = |t: f64| amp * t.cos();
        let field = CdfField::from_fn(grid, g).unwrap();
        let gl = GaussLegendre::new(24);
        let h = TAU / grid as f64;
        for backend in [OperatorBackend::spectral(), OperatorBackend::quadrature()] {
            let cfg = SchemeConfig {
                backend,
                ..config(grid, m, 1.0, GradientScheme::Central)
            };
            let r = rhs(&field, &cfg).unwrap();
            for j in (0..grid).step_by(7) {
                let t = h * j as f64;
                // (1/8π) ∫_0^π 2(2g(t) − g(t−s) − g(t+s)) / sin²(s/2) ds
                let a = gl.integrate(0.0, PI, 64, |s| {
                    2.0 * (2.0 * g(t) - g(t - s) - g(t + s)) / (0.5 * s).sin().powi(2)
                }) / (8.0 * PI);
                let slope = (g(t + h) - g(t - h)) / (2.0 * h) + 1.0 / TAU;
                let s = slope.max(0.0).max(m);
                let want = -((a / s).atan() + PI / 2.0) / PI;
                assert!((r[j] - want).abs() < 1e-8, "node {j}: {} vs {want}", r[j]);
            }
        }
    }

    #[test]
    fn cfl_examples() {
        let base = SchemeConfig::new(256, 0.05, 1.0);
        assert_eq!(cfl_dt(&base), 0.5 * 0.05 * 2.0 * PI / 256.0);
        assert!((cfl_dt(&base) - 6.135923151542565e-4).abs() < 1e-18);
        let fine = SchemeConfig { grid_size: 512, ..base };
        assert!(cfl_dt(&fine) <= 0.5 * cfl_dt(&base));
        let wide = SchemeConfig { m: 0.1, ..base };
        assert!((cfl_dt(&wide) - 2.0 * cfl_dt(&base)).abs() < 1e-18);
    }

    #[test]
    fn config_validation() {
        let base = SchemeConfig::new(64, 0.05, 1.0);
        assert!(Scheme::new(SchemeConfig { m: 0.0, ..base }).is_err());
        assert!(Scheme::new(SchemeConfig { cfl_safety: 1.5, ..base }).is_err());
        assert!(Scheme::new(SchemeConfig { final_time: -1.0, ..base }).is_err());
        assert!(Scheme::new(SchemeConfig { record_every: 0, ..base }).is_err());
        assert!(Scheme::new(SchemeConfig { grid_size: 7, ..base }).is_err());
        let json = r#"{"M":128,"m":0.05,"T":0.5,"gradient":"upwind-min"}"#;
        let parsed: SchemeConfig = serde_json::from_str(json).unwrap();
        assert_eq!(parsed.gradient, GradientScheme::UpwindMin);
        assert_eq!(parsed.cfl_safety, 0.5);
    }

    #[test]
    fn uniform_step_translates() {
        let cfg = SchemeConfig::new(128, 0.05, 1.0);
        let dt = cfl_dt(&cfg);
        let next = step_explicit(&CdfField::ramp(128).unwrap(), dt, &cfg).unwrap();
        assert!(next.periodic().iter().all(|v| (v + dt / 2.0).abs() < 1e-17));
        let err = step_explicit(&CdfField::ramp(128).unwrap(), 2.0 * dt, &cfg).unwrap_err();
        assert!(matches!(err, Error::Config(_)));
    }

    #[test]
    fn uniform_solution_is_exact() {
        let res = solve(&CdfField::ramp(256).unwrap(), &SchemeConfig::new(256, 0.05, 1.0)).unwrap();
        let last = res.last();
        assert_eq!(last.t, 1.0);
        let exact = CdfField::from_periodic(vec![-0.5; 256]).unwrap();
        assert!(sup_distance(&last.field, &exact).unwrap() <= 1e-6);
        assert!(!res.flagged);
    }

    #[test]
    fn hm_violation_is_rejected() {
        let f = CdfField::from_fn(64, |t| 0.15 * t.sin()).unwrap();
        let err = solve(&f, &SchemeConfig::new(64, 0.05, 0.1)).unwrap_err();
        assert!(matches!(err, Error::HmViolation { .. }));
    }

    #[test]
    fn ordered_pairs_stay_ordered() {
        for gradient in [GradientScheme::Central, GradientScheme::UpwindMin] {
            let scheme = Scheme::new(config(64, 0.05, 0.1, gradient)).unwrap();
            for seed in 0..20 {
                let mut rng = ChaCha8Rng::seed_from_u64(seed);
                let (f, g) = ordered_pair(&mut rng, 64, 0.05);
                let rep = scheme.solve_pair(&f, &g).unwrap();
                assert!(rep.max_excess <= 1e-9, "{gradient:?} seed {seed}: {rep:?}");
                assert!(rep.min_slope >= 0.05 - 1e-9);
                assert!(rep.max_df_over_dt < 1.0);
                assert!(rep.flags.is_empty());
            }
        }
    }

    #[test]
    fn refinement_distances_decrease() {
        let t = 0.5;
        let sols: Vec<CdfField> = [128usize, 256, 512]
            .iter()
            .map(|&grid| {
                let f0 = CdfField::from_fn(grid, |x| 0.02 * x.sin()).unwrap();
                solve(&f0, &SchemeConfig::new(grid, 0.05, t)).unwrap().last().field.clone()
            })
            .collect();
        let coarse_dist = |a: &CdfField, b: &CdfField| {
            let r = b.grid_size() / a.grid_size();
            (0..a.grid_size())
                .map(|j| (a.value(j) - b.value(r * j)).abs())
                .fold(0.0, f64::max)
        };
        let d1 = coarse_dist(&sols[0], &sols[1]);
        let d2 = coarse_dist(&sols[1], &sols[2]);
        assert!(d2 < d1, "{d1} {d2}");
        assert!((d1 / d2).log2() >= 0.9, "order {}", (d1 / d2).log2());
    }

    #[test]
    fn perturbations_stay_within_epsilon() {
        let scheme = Scheme::new(SchemeConfig::new(64, 0.05, 0.2)).unwrap();
        for seed in 0..5 {
            let mut rng = ChaCha8Rng::seed_from_u64(100 + seed);
            let f = random_hm_field(&mut rng, 64, 0.1, 4);
            let eps = 1e-3;
            let p = random_hm_field(&mut rng, 64, 0.0, 4);
            let amp = p.periodic().iter().fold(0.0f64, |a, v| a.max(v.abs()));
            let g = CdfField::from_periodic(
                f.periodic()
                    .iter()
                    .zip(p.periodic())
                    .map(|(a, b)| a + eps * b / amp)
                    .collect(),
            )
            .unwrap();
            let rep = scheme.solve_pair(&f, &g).unwrap();
            assert!(rep.max_distance <= rep.initial_distance + 1e-6);
        }
    }

    #[test]
    fn solve_at_lands_on_times_and_exports() {
        let f0 = CdfField::from_fn(32, |x| 0.01 * x.cos()).unwrap();
        let cfg = SchemeConfig::new(32, 0.05, 0.0);
        let res = solve_at(&f0, &cfg, &[0.0, 0.05, 0.1]).unwrap();
        let times: Vec<f64> = res.snapshots.iter().map(|s| s.t).collect();
        assert_eq!(times, vec![0.0, 0.05, 0.1]);
        for s in &res.snapshots {
            let total: f64 = s.field.slopes().iter().sum::<f64>() * s.field.spacing();
            assert!((total - 1.0).abs() < 1e-12);
        }
        let mut csv = Vec::new();
        res.write_snapshots_csv(&mut csv).unwrap();
        let text = String::from_utf8(csv).unwrap();
        assert!(text.starts_with("t,theta,F,slope\n"));
        assert_eq!(text.lines().count(), 1 + 3 * 32);
        let mut log = Vec::new();
        res.write_monitor_jsonl(&mut log).unwrap();
        let first: serde_json::Value =
            serde_json::from_str(String::from_utf8(log).unwrap().lines().next().unwrap()).unwrap();
        for key in ["step", "t", "min_slope", "max_dF_over_dt", "flags"] {
            assert!(first.get(key).is_some(), "{key}");
        }
        assert!(solve_at(&f0, &cfg, &[0.1, 0.05]).is_err());
    }

    #[test]
    fn record_every_strides() {
        let f0 = CdfField::ramp(32).unwrap();
        let cfg = SchemeConfig {
            record_every: 4,
            ..SchemeConfig::new(32, 0.05, 0.1)
        };
        let res = solve(&f0, &cfg).unwrap();
        let steps = res.monitors.len();
        assert_eq!(res.snapshots.len(), 1 + steps / 4 + usize::from(steps % 4 != 0));
        assert!(res.snapshots.windows(2).all(|w| w[0].t < w[1].t));
    }

    mod props {
        use super::*;
        use proptest::prelude::*;

        proptest! {
            #![proptest_config(ProptestConfig::with_cases(64))]

            #[test]
            fn one_step_is_monotone_and_keeps_floor(seed in 0u64..u64::MAX, upwind in any::<bool>()) {
                let gradient = if upwind { GradientScheme::UpwindMin } else { GradientScheme::Central };
                let cfg = config(64, 0.05, 1.0, gradient);
                let scheme = Scheme::new(cfg).unwrap();
                let mut rng = ChaCha8Rng::seed_from_u64(seed);
                let (f, g) = ordered_pair(&mut rng, 64, 0.05);
                let dt = scheme.cfl_dt();
                let fn_ = scheme.step(&f, dt).unwrap();
                let gn = scheme.step(&g, dt).unwrap();
                for (a, b) in fn_.periodic().iter().zip(gn.periodic()) {
                    prop_assert!(a <= &(b + 1e-9));
                }
                prop_assert!(fn_.min_slope() >= 0.05 - 1e-9);
                for (a, b) in f.periodic().iter().zip(fn_.periodic()) {
                    prop_assert!(a - b > 0.0 && a - b < dt);
                }
            }
        }
    }
}
