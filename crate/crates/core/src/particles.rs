//! Discrete particle dynamics: every `Δt = 1/(2N)` the `2N` particles jump to
//! the roots of the derivative of the trigonometric polynomial they define.

use std::f64::consts::{PI, TAU};
use std::io::{self, Write};

use rayon::prelude::*;
use serde::{Deserialize, Serialize};

use crate::error::{Error, Result};
use crate::measure::{CdfField, CircleMeasure};
use crate::ops::TrigInterpolant;
use crate::roots::{derivative_roots, interlacing_violation, ParticleConfig};

/// Slack allowed by the discrete comparison check (root solver accuracy).
pub const COMPARISON_TOL: f64 = 1e-10;

/// Neighbour gaps below this are treated as degenerate by the speed check.
pub const DEGENERATE_GAP: f64 = 1e-12;

/// Levels `(i + ½)/(2N)`, `i = 0..2N`.
pub fn quantile_levels(n_half: usize) -> Vec<f64> {
    let count = 2 * n_half;
    (0..count)
        .map(|i| (i as f64 + 0.5) / count as f64)
        .collect()
}

/// `2N` particles at the quantiles of `μ` at levels `(i + ½)/(2N)`.
/// Coincident quantiles become multiplicities.
pub fn init_from_measure(mu: &CircleMeasure, n_half: usize) -> Result<ParticleConfig> {
    if n_half == 0 {
        return Err(Error::Config("N must be at least 1".into()));
    }
    let positions = mu.quantiles(&quantile_levels(n_half))?;
    ParticleConfig::from_positions(0.0, &positions)
}

/// Same placement for a continuous, strictly increasing CDF given as a
/// function on [0, 2π] with `F(0) = 0` and `F(2π) = 1`; each level is
/// inverted by bisection to full precision.
pub fn init_from_cdf_fn<F: Fn(f64) -> f64 + Sync>(cdf: F, n_half: usize) -> Result<ParticleConfig> {
    if n_half == 0 {
        return Err(Error::Config("N must be at least 1".into()));
    }
    let positions: Vec<f64> = quantile_levels(n_half)
        .par_iter()
        .map(|&p| {
            let (mut a, mut b) = (0.0, TAU);
            for _ in 0..200 {
                let mid = 0.5 * (a + b);
                if mid <= a || mid >= b {
                    break;
                }
                if cdf(mid) < p {
                    a = mid;
                } else {
                    b = mid;
                }
            }
            b
        })
        .collect();
    ParticleConfig::from_positions(0.0, &positions)
}

/// Configurations at times `t_k = k/(2N)`.
#[derive(Debug, Clone, PartialEq, Serialize, Deserialize)]
pub struct FlowTrajectory {
    pub n_half: usize,
    pub configs: Vec<ParticleConfig>,
}

impl FlowTrajectory {
    pub fn time(&self, step: usize) -> f64 {
        step as f64 / (2 * self.n_half) as f64
    }

    pub fn last(&self) -> &ParticleConfig {
        self.configs.last().expect("trajectory holds the start")
    }

    /// CSV with columns `step,time,root_index,theta,mult`.
    pub fn write_csv<W: Write>(&self, mut w: W) -> io::Result<()> {
        writeln!(w, "step,time,root_index,theta,mult")?;
        for (k, c) in self.configs.iter().enumerate() {
            let t = self.time(k);
            for (i, r) in c.roots().iter().enumerate() {
                writeln!(w, "{k},{t},{i},{},{}", r.theta, r.mult)?;
            }
        }
        Ok(())
    }
}

/// `steps` successive differentiations of `start`.
pub fn evolve(start: &ParticleConfig, steps: usize) -> Result<FlowTrajectory> {
    let mut configs = Vec::with_capacity(steps + 1);
    configs.push(start.clone());
    for k in 0..steps {
        let next = derivative_roots(&configs[k]).map_err(|e| e.at_step(k + 1))?;
        configs.push(next);
    }
    Ok(FlowTrajectory {
        n_half: start.n_half(),
        configs,
    })
}

/// Count conservation and interlacing along a trajectory; returns the first
/// offending step.
pub fn trajectory_violation(traj: &FlowTrajectory, tol: f64) -> Result<Option<usize>> {
    for (k, pair) in traj.configs.windows(2).enumerate() {
        if pair[0].count() != pair[1].count()
            || interlacing_violation(&pair[0], &pair[1], tol)?.is_some()
        {
            return Ok(Some(k + 1));
        }
    }
    Ok(None)
}

/// Labelled empirical CDF `F(θ) = (1 + max{i : x_i ≤ θ}) / 2N` over the
/// periodized flattened sequence.
///
/// For a configuration anchored at 0 this is `μ([0, θ])` for the atomic
/// measure `(1/2N) Σ δ_{x_i}`. As particles advance past θ the value drops,
/// which is the integration constant the primitive equation carries.
pub fn empirical_cdf(config: &ParticleConfig, grid: usize) -> Result<CdfField> {
    let flat = config.flattened();
    let count = flat.len();
    let a = config.anchor();
    let h = TAU / grid as f64;
    let periodic: Vec<f64> = (0..grid)
        .map(|j| {
            let theta = h * j as f64;
            let q = ((theta - a) / TAU).floor();
            let mut r = theta - TAU * q;
            let mut q = q;
            if r >= a + TAU {
                r -= TAU;
                q += 1.0;
            }
            let c = flat.partition_point(|x| *x <= r);
            q + c as f64 / count as f64 - theta / TAU
        })
        .collect();
    CdfField::from_periodic(periodic)
}

#[derive(Debug, Clone, Copy, PartialEq, Serialize, Deserialize)]
#[serde(tag = "outcome", rename_all = "snake_case")]
pub enum ComparisonOutcome {
    /// Ordering propagated; `max_excess = max_i (x'_i − y'_i)` (≤ tolerance).
    Holds { max_excess: f64 },
    /// `x'_i > y'_i + tol` at `index`.
    Violated { index: usize, x: f64, y: f64 },
    /// The inputs were not ordered (`x_i > y_i` at `index`); nothing checked.
    PreconditionFailed { index: usize },
}

impl ComparisonOutcome {
    pub fn holds(&self) -> bool {
        matches!(self, ComparisonOutcome::Holds { .. })
    }
}

/// If `x_i ≤ y_i` for all `i`, checks `x'_i ≤ y'_i` for the derivative roots.
pub fn discrete_comparison_check(x: &ParticleConfig, y: &ParticleConfig) -> Result<ComparisonOutcome> {
    if x.count() != y.count() {
        return Err(Error::Shape(format!(
            "root counts differ: {} vs {}",
            x.count(),
            y.count()
        )));
    }
    let xf = x.flattened();
    let yf = y.flattened();
    if let Some(index) = (0..xf.len()).find(|&i| xf[i] > yf[i]) {
        return Ok(ComparisonOutcome::PreconditionFailed { index });
    }
    let dx = derivative_roots(x)?.flattened();
    let dy = derivative_roots(y)?.flattened();
    let mut max_excess = f64::NEG_INFINITY;
    for i in 0..dx.len() {
        let excess = dx[i] - dy[i];
        if excess > COMPARISON_TOL {
            return Ok(ComparisonOutcome::Violated {
                index: i,
                x: dx[i],
                y: dy[i],
            });
        }
        max_excess = max_excess.max(excess);
    }
    Ok(ComparisonOutcome::Holds { max_excess })
}

/// Spacing statistics of a configuration against a reference density ψ.
#[derive(Debug, Clone, PartialEq, Serialize, Deserialize)]
pub struct GapDiagnostics {
    pub n_half: usize,
    /// `x_{j+1} − x_j` over the flattened periodized sequence.
    pub gaps: Vec<f64>,
    /// `V_j = x_{j+1} − x_j − 1/(2N ψ(x_j))`.
    pub error_terms: Vec<f64>,
    /// `2N ψ(x_j) (x_{j+1} − x_j)`, equal to 1 for perfectly adapted spacing.
    pub spacing_ratios: Vec<f64>,
    /// One differentiation step divided by `s = 1/(2N)`.
    pub displacement_ratios: Vec<f64>,
    pub max_abs_error_term: f64,
    pub spacing_ratio_min: f64,
    pub spacing_ratio_max: f64,
    /// `N · min_j (x'_j − x_j)` and `N · max_j (x'_j − x_j)`.
    pub scaled_step_min: f64,
    pub scaled_step_max: f64,
}

impl GapDiagnostics {
    /// Smallest `K` with `1/(KN) ≤ min step ≤ max step ≤ K/N`.
    pub fn displacement_constant(&self) -> f64 {
        self.scaled_step_max.max(1.0 / self.scaled_step_min)
    }
}

/// Gap and error-term diagnostics against density samples `psi` on a
/// uniform grid (read through their trigonometric interpolant).
pub fn gap_diagnostics(config: &ParticleConfig, psi: &[f64]) -> Result<GapDiagnostics> {
    if let Some(v) = psi.iter().find(|v| !(**v > 0.0) || !v.is_finite()) {
        return Err(Error::Config(format!(
            "reference density must be strictly positive, found {v}"
        )));
    }
    let interp = TrigInterpolant::new(psi)?;
    let flat = config.flattened();
    let count = flat.len();
    let n_half = count / 2;
    let two_n = count as f64;

    let next = derivative_roots(config)?.flattened();
    let rows: Vec<(f64, f64, f64, f64)> = (0..count)
        .into_par_iter()
        .map(|j| {
            let gap = config.periodized(&flat, j as i64 + 1) - flat[j];
            let dens = interp.value(flat[j]);
            let v = gap - 1.0 / (two_n * dens);
            let ratio = two_n * dens * gap;
            let disp = next[j] - flat[j];
            (gap, v, ratio, disp)
        })
        .collect();
    if rows.iter().any(|r| !r.0.is_finite() || !r.1.is_finite() || !r.2.is_finite()) {
        return Err(Error::Numerical("non-finite gap diagnostics".into()));
    }
    let gaps: Vec<f64> = rows.iter().map(|r| r.0).collect();
    let error_terms: Vec<f64> = rows.iter().map(|r| r.1).collect();
    let spacing_ratios: Vec<f64> = rows.iter().map(|r| r.2).collect();
    let displacement_ratios: Vec<f64> = rows.iter().map(|r| r.3 * two_n).collect();
    let steps = rows.iter().map(|r| r.3 * n_half as f64);
    let (scaled_step_min, scaled_step_max) = steps.fold((f64::INFINITY, f64::NEG_INFINITY), |(lo, hi), s| {
        (lo.min(s), hi.max(s))
    });
    Ok(GapDiagnostics {
        n_half,
        max_abs_error_term: error_terms.iter().fold(0.0, |a, v| a.max(v.abs())),
        spacing_ratio_min: spacing_ratios.iter().copied().fold(f64::INFINITY, f64::min),
        spacing_ratio_max: spacing_ratios.iter().copied().fold(f64::NEG_INFINITY, f64::max),
        gaps,
        error_terms,
        spacing_ratios,
        displacement_ratios,
        scaled_step_min,
        scaled_step_max,
    })
}

/// Per-particle comparison of one differentiation step with the predicted
/// displacement
///
/// ```text
/// d_m = (arctan(H[u](x_m) / u(x_m)) + π/2) / (2π N u(x_m))
/// ```
///
/// where `u(x_m) = 1/(N (x_{m+1} − x_{m−1}))` and `H[u](x_m)` is the periodic
/// Hilbert transform of the empirical measure with the self term removed.
#[derive(Debug, Clone, PartialEq, Serialize, Deserialize)]
pub struct SpeedResiduals {
    pub n_half: usize,
    /// Relative residual `|d_actual − d_predicted| / d_actual`; `None` when excluded.
    pub residuals: Vec<Option<f64>>,
    pub excluded: usize,
    /// Mean and max over included particles; `None` when all are excluded.
    pub mean: Option<f64>,
    pub max: Option<f64>,
}

pub fn speed_vs_heuristic(config: &ParticleConfig) -> Result<SpeedResiduals> {
    let flat = config.flattened();
    let count = flat.len();
    let n = (count / 2) as f64;
    let next = derivative_roots(config)?.flattened();
    let multiple: Vec<bool> = config
        .roots()
        .iter()
        .flat_map(|r| std::iter::repeat_n(r.mult > 1, r.mult as usize))
        .collect();
    let residuals: Vec<Option<f64>> = (0..count)
        .into_par_iter()
        .map(|m| {
            let prev = config.periodized(&flat, m as i64 - 1);
            let succ = config.periodized(&flat, m as i64 + 1);
            let x = flat[m];
            if multiple[m] || x - prev <= DEGENERATE_GAP || succ - x <= DEGENERATE_GAP || count < 4 {
                return None;
            }
            let u = 1.0 / (n * (succ - prev));
            let mut cot_sum = 0.0;
            for (j, xj) in flat.iter().enumerate() {
                if j != m {
                    cot_sum += 1.0 / (0.5 * (x - xj)).tan();
                }
            }
            let hilbert = cot_sum / (TAU * 2.0 * n);
            let predicted = ((hilbert / u).atan() + 0.5 * PI) / (TAU * n * u);
            let actual = next[m] - x;
            Some((actual - predicted).abs() / actual)
        })
        .collect();
    let included: Vec<f64> = residuals.iter().flatten().copied().collect();
    let excluded = count - included.len();
    let (mean, max) = if included.is_empty() {
        (None, None)
    } else {
        (
            Some(included.iter().sum::<f64>() / included.len() as f64),
            Some(included.iter().copied().fold(f64::NEG_INFINITY, f64::max)),
        )
    };
    Ok(SpeedResiduals {
        n_half: count / 2,
        residuals,
        excluded,
        mean,
        max,
    })
}
