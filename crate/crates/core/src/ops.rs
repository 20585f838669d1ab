//! Periodic Hilbert transform and half-Laplacian on a uniform grid.
//!
//! Conventions (asserted in tests):
//!
//! ```text
//! H[u](θ)  = (1/2π) P.V. ∫ cot((θ − y)/2) u(y) dy        mode k ↦ −i·sgn(k)
//! A₀[f](θ) = (1/8π) ∫ (2f(θ) − f(θ−s) − f(θ+s)) / sin²(s/2) ds   mode k ↦ |k|
//! ```
//!
//! Two independent backends are provided. The spectral one applies the
//! multipliers through an FFT. The quadrature one never touches the FFT: it
//! evaluates the subtracted-singularity integrands with the trapezoid rule on
//! the odd node offsets only, a rule of step 2Δθ shifted off the singular
//! point. On the grid both represent the same operators on modes |k| < M/2.

use std::f64::consts::{PI, TAU};
use std::sync::Arc;

use num_complex::Complex64;
use rayon::prelude::*;
use rustfft::{Fft, FftPlanner};
use serde::{Deserialize, Serialize};

use crate::error::{Error, Result};
use crate::measure::CdfField;
use crate::quadrature::GaussLegendre;

#[derive(Debug, Clone, Copy, PartialEq, Eq, Serialize, Deserialize, Default)]
#[serde(rename_all = "lowercase")]
pub enum BackendKind {
    #[default]
    Spectral,
    Quadrature,
}

#[derive(Debug, Clone, Copy, PartialEq, Serialize, Deserialize)]
pub struct OperatorBackend {
    pub kind: BackendKind,
    /// Split radius for the near/far decomposition, in (0, π].
    #[serde(default, skip_serializing_if = "Option::is_none")]
    pub delta: Option<f64>,
    /// Gauss-Legendre points per panel in the split integrals.
    #[serde(default = "default_order")]
    pub quad_order: usize,
}

fn default_order() -> usize {
    16
}

impl Default for OperatorBackend {
    fn default() -> Self {
        Self::spectral()
    }
}

impl OperatorBackend {
    pub fn spectral() -> Self {
        Self {
            kind: BackendKind::Spectral,
            delta: None,
            quad_order: default_order(),
        }
    }

    pub fn quadrature() -> Self {
        Self {
            kind: BackendKind::Quadrature,
            ..Self::spectral()
        }
    }

    pub fn validate(&self) -> Result<()> {
        if let Some(d) = self.delta {
            check_delta(d)?;
        }
        if self.quad_order == 0 {
            return Err(Error::Config("quadrature order must be positive".into()));
        }
        Ok(())
    }
}

fn check_delta(delta: f64) -> Result<()> {
    if !(delta > 0.0 && delta <= PI) {
        return Err(Error::Config(format!("split radius {delta} outside (0, π]")));
    }
    Ok(())
}

/// Uniform grid `θ_j = 2πj/M` with cached FFT plans.
#[derive(Clone)]
pub struct SpectralGrid {
    size: usize,
    forward: Arc<dyn Fft<f64>>,
    inverse: Arc<dyn Fft<f64>>,
}

impl std::fmt::Debug for SpectralGrid {
    fn fmt(&self, f: &mut std::fmt::Formatter<'_>) -> std::fmt::Result {
        f.debug_struct("SpectralGrid").field("size", &self.size).finish()
    }
}

impl SpectralGrid {
    pub fn new(size: usize) -> Result<Self> {
        if size < 8 || !size.is_multiple_of(2) {
            return Err(Error::Config(format!(
                "grid size {size} must be even and at least 8"
            )));
        }
        let mut planner = FftPlanner::new();
        Ok(Self {
            size,
            forward: planner.plan_fft_forward(size),
            inverse: planner.plan_fft_inverse(size),
        })
    }

    pub fn size(&self) -> usize {
        self.size
    }

    pub fn spacing(&self) -> f64 {
        TAU / self.size as f64
    }

    pub fn nodes(&self) -> Vec<f64> {
        (0..self.size).map(|j| self.spacing() * j as f64).collect()
    }

    /// Signed mode of FFT bin `b`, in {−M/2+1, …, M/2}.
    pub fn mode(&self, bin: usize) -> i64 {
        let m = self.size as i64;
        let b = bin as i64;
        if b <= m / 2 {
            b
        } else {
            b - m
        }
    }

    fn check_len(&self, len: usize) -> Result<()> {
        if len != self.size {
            return Err(Error::Shape(format!(
                "expected {} samples, got {len}",
                self.size
            )));
        }
        Ok(())
    }

    /// Applies a Fourier multiplier given as a function of the signed mode.
    /// The Nyquist bin receives `multiplier(M/2)`; it must be real there.
    pub fn apply_multiplier<F>(&self, u: &[f64], multiplier: F) -> Result<Vec<f64>>
    where
        F: Fn(i64) -> Complex64,
    {
        self.check_len(u.len())?;
        let mut buf: Vec<Complex64> = u.iter().map(|&x| Complex64::new(x, 0.0)).collect();
        self.forward.process(&mut buf);
        for (bin, c) in buf.iter_mut().enumerate() {
            *c *= multiplier(self.mode(bin));
        }
        self.inverse.process(&mut buf);
        let scale = 1.0 / self.size as f64;
        Ok(buf.iter().map(|c| c.re * scale).collect())
    }

    /// Multiplier −i·sgn(k); the Nyquist mode is dropped.
    pub fn hilbert(&self, u: &[f64]) -> Result<Vec<f64>> {
        let nyq = (self.size / 2) as i64;
        self.apply_multiplier(u, |k| {
            if k == 0 || k == nyq {
                Complex64::new(0.0, 0.0)
            } else {
                Complex64::new(0.0, -(k.signum() as f64))
            }
        })
    }

    /// Multiplier |k|, Nyquist included.
    pub fn half_laplacian(&self, f: &[f64]) -> Result<Vec<f64>> {
        self.apply_multiplier(f, |k| Complex64::new(k.unsigned_abs() as f64, 0.0))
    }

    /// Multiplier i·k; the Nyquist mode is dropped.
    pub fn derivative(&self, f: &[f64]) -> Result<Vec<f64>> {
        let nyq = (self.size / 2) as i64;
        self.apply_multiplier(f, |k| {
            if k == nyq {
                Complex64::new(0.0, 0.0)
            } else {
                Complex64::new(0.0, k as f64)
            }
        })
    }
}

/// Stencil of the odd-offset quadrature rules.
#[derive(Debug, Clone)]
struct OddOffsetWeights {
    /// (offset l, weight of u(θ_{j−l}) − u(θ_j)) for the Hilbert transform.
    hilbert: Vec<(usize, f64)>,
    /// (offset l, weight of 2f(θ_j) − f(θ_{j−l}) − f(θ_{j+l})) for A₀.
    half_laplacian: Vec<(usize, f64)>,
}

impl OddOffsetWeights {
    fn new(size: usize) -> Self {
        let h = TAU / size as f64;
        let offsets = (1..size).step_by(2);
        let hilbert = offsets
            .clone()
            .map(|l| {
                let s = h * l as f64;
                (l, 2.0 * h / TAU / (0.5 * s).tan())
            })
            .collect();
        // odd l in 1..M covers one full period of the even integrand
        let half_laplacian = offsets
            .map(|l| {
                let s = (0.5 * h * l as f64).sin();
                (l, 2.0 * h / (8.0 * PI) / (s * s))
            })
            .collect();
        Self {
            hilbert,
            half_laplacian,
        }
    }
}

/// Hilbert transform and half-Laplacian on one grid with a chosen backend.
#[derive(Debug, Clone)]
pub struct NonlocalOps {
    grid: SpectralGrid,
    backend: OperatorBackend,
    weights: Option<Arc<OddOffsetWeights>>,
}

impl NonlocalOps {
    pub fn new(size: usize, backend: OperatorBackend) -> Result<Self> {
        backend.validate()?;
        let grid = SpectralGrid::new(size)?;
        let weights = match backend.kind {
            BackendKind::Quadrature => Some(Arc::new(OddOffsetWeights::new(size))),
            BackendKind::Spectral => None,
        };
        Ok(Self {
            grid,
            backend,
            weights,
        })
    }

    pub fn grid(&self) -> &SpectralGrid {
        &self.grid
    }

    pub fn backend(&self) -> &OperatorBackend {
        &self.backend
    }

    pub fn hilbert(&self, u: &[f64]) -> Result<Vec<f64>> {
        match &self.weights {
            None => self.grid.hilbert(u),
            Some(w) => {
                self.grid.check_len(u.len())?;
                let m = u.len();
                Ok((0..m)
                    .into_par_iter()
                    .map(|j| {
                        let uj = u[j];
                        w.hilbert
                            .iter()
                            .map(|&(l, c)| c * (u[(j + m - l) % m] - uj))
                            .sum::<f64>()
                    })
                    .collect())
            }
        }
    }

    pub fn half_laplacian(&self, f: &[f64]) -> Result<Vec<f64>> {
        match &self.weights {
            None => self.grid.half_laplacian(f),
            Some(w) => {
                self.grid.check_len(f.len())?;
                let m = f.len();
                Ok((0..m)
                    .into_par_iter()
                    .map(|j| {
                        let two_fj = 2.0 * f[j];
                        w.half_laplacian
                            .iter()
                            .map(|&(l, c)| c * (two_fj - f[(j + m - l) % m] - f[(j + l) % m]))
                            .sum::<f64>()
                    })
                    .collect())
            }
        }
    }

    /// A₀ of a CDF: the unit ramp is affine and contributes exactly zero.
    pub fn half_laplacian_cdf(&self, field: &CdfField) -> Result<Vec<f64>> {
        self.half_laplacian(field.periodic())
    }
}

/// `H[u]` with the given backend.
pub fn hilbert_transform(u: &[f64], backend: &OperatorBackend) -> Result<Vec<f64>> {
    NonlocalOps::new(u.len(), *backend)?.hilbert(u)
}

/// `A₀[f]` of plain periodic samples with the given backend.
pub fn half_laplacian(f: &[f64], backend: &OperatorBackend) -> Result<Vec<f64>> {
    NonlocalOps::new(f.len(), *backend)?.half_laplacian(f)
}

/// `A₀[F]` of a CDF field (periodic part only; the ramp is annihilated).
pub fn half_laplacian_cdf(field: &CdfField, backend: &OperatorBackend) -> Result<Vec<f64>> {
    NonlocalOps::new(field.grid_size(), *backend)?.half_laplacian_cdf(field)
}

/// Near and far parts of `A₀[f](θ_node)`:
///
/// ```text
/// I₁ = (1/8π) ∫_{|s|≤δ} (2f(θ) − f(θ−s) − f(θ+s)) / sin²(s/2) ds
/// I₂ = (1/8π) ∫_{δ<|s|≤π} (same integrand)
/// ```
///
/// `f` is read as its trigonometric interpolant, and the second difference
/// is evaluated mode by mode as `Σ T_k(θ) · 4 sin²(ks/2)`, which is free of
/// cancellation as `s → 0`. Both integrals use composite Gauss-Legendre.
pub fn split_i1_i2(f: &[f64], node: usize, delta: f64, quad_order: usize) -> Result<(f64, f64)> {
    check_delta(delta)?;
    let grid = SpectralGrid::new(f.len())?;
    if node >= f.len() {
        return Err(Error::Domain(format!("node {node} outside grid of {}", f.len())));
    }
    let modes = mode_terms(&grid, f, grid.spacing() * node as f64)?;
    let kernel = |s: f64| -> f64 {
        let sh = (0.5 * s).sin();
        let denom = sh * sh;
        let mut acc = 0.0;
        for &(k, t) in &modes {
            let sk = (0.5 * k * s).sin();
            acc += t * 4.0 * sk * sk;
        }
        acc / denom
    };
    let gl = GaussLegendre::new(quad_order.max(2));
    let top = modes.last().map_or(1.0, |m| m.0);
    let panels = |len: f64| ((len * top / 4.0).ceil() as usize).max(4);
    let scale = 2.0 / (8.0 * PI);
    let i1 = scale * gl.integrate(0.0, delta, panels(delta), kernel);
    let i2 = scale * gl.integrate(delta, PI, panels(PI - delta), kernel);
    Ok((i1, i2))
}

/// `(k, T_k(θ))` with `f(x) = a₀ + Σ_k T_k(x)`, `T_k` the real degree-k term of
/// the trigonometric interpolant, evaluated at `x = θ`.
fn mode_terms(grid: &SpectralGrid, f: &[f64], theta: f64) -> Result<Vec<(f64, f64)>> {
    let m = grid.size();
    let mut buf: Vec<Complex64> = f.iter().map(|&x| Complex64::new(x, 0.0)).collect();
    grid.forward.process(&mut buf);
    let scale = 1.0 / m as f64;
    let half = m / 2;
    let mut out = Vec::with_capacity(half);
    for k in 1..=half {
        let c = buf[k] * scale;
        let phase = Complex64::from_polar(1.0, k as f64 * theta);
        let term = if k == half {
            (c * phase).re
        } else {
            2.0 * (c * phase).re
        };
        out.push((k as f64, term));
    }
    Ok(out)
}

/// Trigonometric interpolant of periodic grid samples, evaluable anywhere.
#[derive(Debug, Clone)]
pub struct TrigInterpolant {
    mean: f64,
    /// (k, cos coefficient, sin coefficient); the Nyquist term has no sine part.
    terms: Vec<(f64, f64, f64)>,
}

impl TrigInterpolant {
    pub fn new(samples: &[f64]) -> Result<Self> {
        let grid = SpectralGrid::new(samples.len())?;
        let m = grid.size();
        let mut buf: Vec<Complex64> = samples.iter().map(|&x| Complex64::new(x, 0.0)).collect();
        grid.forward.process(&mut buf);
        let scale = 1.0 / m as f64;
        let half = m / 2;
        let terms = (1..=half)
            .map(|k| {
                let c = buf[k] * scale;
                let w = if k == half { 1.0 } else { 2.0 };
                let sin = if k == half { 0.0 } else { -w * c.im };
                (k as f64, w * c.re, sin)
            })
            .collect();
        Ok(Self {
            mean: buf[0].re * scale,
            terms,
        })
    }

    pub fn value(&self, theta: f64) -> f64 {
        self.mean
            + self
                .terms
                .iter()
                .map(|&(k, a, b)| {
                    let (s, c) = (k * theta).sin_cos();
                    a * c + b * s
                })
                .sum::<f64>()
    }
}

/// `max_j |A₀[f] − H[f']|`, with `f'` the spectral derivative and both
/// operators taken from `backend`.
pub fn a0_equals_h_of_derivative_check(f: &[f64], backend: &OperatorBackend) -> Result<f64> {
    let ops = NonlocalOps::new(f.len(), *backend)?;
    let a0 = ops.half_laplacian(f)?;
    let df = ops.grid().derivative(f)?;
    let hdf = ops.hilbert(&df)?;
    Ok(a0
        .iter()
        .zip(&hdf)
        .map(|(a, b)| (a - b).abs())
        .fold(0.0, f64::max))
}

/// One row of the multiplier self-test.
#[derive(Debug, Clone, Serialize, Deserialize)]
pub struct MultiplierRow {
    pub k: u32,
    pub hilbert_cos_error: f64,
    pub hilbert_sin_error: f64,
    pub half_laplacian_error: f64,
}

/// Self-test report: `{backend, M, max_multiplier_error}` plus the table.
#[derive(Debug, Clone, Serialize, Deserialize)]
pub struct OperatorReport {
    pub backend: BackendKind,
    #[serde(rename = "M")]
    pub grid_size: usize,
    pub max_multiplier_error: f64,
    pub ramp_error: f64,
    /// Value of A₀[cos] at θ = 0 computed from the 1/(8π) symmetric form.
    pub symmetric_constant: f64,
    pub rows: Vec<MultiplierRow>,
}

/// Checks `H[cos kθ] = sin kθ`, `H[sin kθ] = −cos kθ` and
/// `A₀[cos kθ] = k cos kθ` for `k = 1..=k_max`, and `A₀[ramp] = 0`.
pub fn operator_self_test(size: usize, k_max: u32, backend: &OperatorBackend) -> Result<OperatorReport> {
    let ops = NonlocalOps::new(size, *backend)?;
    let nodes = ops.grid().nodes();
    let mut rows = Vec::with_capacity(k_max as usize);
    for k in 1..=k_max {
        let kf = f64::from(k);
        let cos: Vec<f64> = nodes.iter().map(|t| (kf * t).cos()).collect();
        let sin: Vec<f64> = nodes.iter().map(|t| (kf * t).sin()).collect();
        let max_err = |got: Vec<f64>, want: &dyn Fn(f64) -> f64| {
            got.iter()
                .zip(&nodes)
                .map(|(g, t)| (g - want(*t)).abs())
                .fold(0.0, f64::max)
        };
        rows.push(MultiplierRow {
            k,
            hilbert_cos_error: max_err(ops.hilbert(&cos)?, &|t| (kf * t).sin()),
            hilbert_sin_error: max_err(ops.hilbert(&sin)?, &|t| -(kf * t).cos()),
            half_laplacian_error: max_err(ops.half_laplacian(&cos)?, &|t| kf * (kf * t).cos()),
        });
    }
    let ramp = CdfField::ramp(size)?;
    let ramp_error = ops
        .half_laplacian_cdf(&ramp)?
        .iter()
        .fold(0.0f64, |a, v| a.max(v.abs()));
    let max_multiplier_error = rows
        .iter()
        .flat_map(|r| [r.hilbert_cos_error, r.hilbert_sin_error, r.half_laplacian_error])
        .fold(0.0, f64::max);
    let cos1: Vec<f64> = nodes.iter().map(|t| t.cos()).collect();
    let (i1, i2) = split_i1_i2(&cos1, 0, PI, backend.quad_order)?;
    Ok(OperatorReport {
        backend: backend.kind,
        grid_size: size,
        max_multiplier_error,
        ramp_error,
        symmetric_constant: i1 + i2,
        rows,
    })
}

#[cfg(test)]
mod tests {
    use super::*;

    fn nodes(m: usize) -> Vec<f64> {
        (0..m).map(|j| TAU * j as f64 / m as f64).collect()
    }

    fn max_abs_diff(a: &[f64], b: &[f64]) -> f64 {
        a.iter().zip(b).map(|(x, y)| (x - y).abs()).fold(0.0, f64::max)
    }

    /// Oracle: H[u](θ) = (1/2π) ∫₀^π cot(s/2) (u(θ−s) − u(θ+s)) ds, integrated
    /// by Gauss-Legendre on the analytic test function (regular integrand).
    fn hilbert_oracle(u: impl Fn(f64) -> f64, theta: f64) -> f64 {
        let gl = GaussLegendre::new(20);
        gl.integrate(0.0, PI, 64, |s| (u(theta - s) - u(theta + s)) / (0.5 * s).tan()) / TAU
    }

    /// Oracle: A₀[f](θ) = (1/4π) ∫₀^π (2f(θ) − f(θ−s) − f(θ+s)) / sin²(s/2) ds.
    fn half_laplacian_oracle(f: impl Fn(f64) -> f64, theta: f64) -> f64 {
        let gl = GaussLegendre::new(20);
        gl.integrate(0.0, PI, 64, |s| {
            let sh = (0.5 * s).sin();
            (2.0 * f(theta) - f(theta - s) - f(theta + s)) / (sh * sh)
        }) / (4.0 * PI)
    }

    #[test]
    fn oracle_fixes_multiplier_signs() {
        // the multiplier table itself, checked against direct integration
        for k in [1.0, 2.0, 5.0] {
            for theta in [0.0, 0.7, 2.9] {
                let h = hilbert_oracle(|x| (k * x).cos(), theta);
                assert!((h - (k * theta).sin()).abs() < 1e-9, "H[cos] k={k}");
                let h = hilbert_oracle(|x| (k * x).sin(), theta);
                assert!((h + (k * theta).cos()).abs() < 1e-9, "H[sin] k={k}");
                let a = half_laplacian_oracle(|x| (k * x).cos(), theta);
                assert!((a - k * (k * theta).cos()).abs() < 1e-8, "A0 k={k}");
            }
        }
    }

    #[test]
    fn constants_map_to_zero() {
        for backend in [OperatorBackend::spectral(), OperatorBackend::quadrature()] {
            let u = vec![1.0; 64];
            assert!(hilbert_transform(&u, &backend).unwrap().iter().all(|v| v.abs() < 1e-14));
            assert!(half_laplacian(&u, &backend).unwrap().iter().all(|v| v.abs() < 1e-13));
        }
    }

    #[test]
    fn multipliers_both_backends() {
        let m = 256;
        let th = nodes(m);
        for backend in [OperatorBackend::spectral(), OperatorBackend::quadrature()] {
            for k in [1.0, 3.0, 16.0] {
                let c: Vec<f64> = th.iter().map(|t| (k * t).cos()).collect();
                let s: Vec<f64> = th.iter().map(|t| (k * t).sin()).collect();
                let want_hc: Vec<f64> = s.clone();
                let want_hs: Vec<f64> = c.iter().map(|v| -v).collect();
                let want_a: Vec<f64> = c.iter().map(|v| k * v).collect();
                assert!(max_abs_diff(&hilbert_transform(&c, &backend).unwrap(), &want_hc) < 1e-10);
                assert!(max_abs_diff(&hilbert_transform(&s, &backend).unwrap(), &want_hs) < 1e-10);
                assert!(max_abs_diff(&half_laplacian(&c, &backend).unwrap(), &want_a) < 1e-9);
            }
        }
    }

    #[test]
    fn ramp_is_annihilated() {
        let f = CdfField::ramp(128).unwrap();
        for backend in [OperatorBackend::spectral(), OperatorBackend::quadrature()] {
            let a = half_laplacian_cdf(&f, &backend).unwrap();
            assert!(a.iter().all(|v| v.abs() <= 1e-12));
        }
    }

    #[test]
    fn quadrature_weights_match_spectral_matrix() {
        // the odd-offset rule and the |k| multiplier are the same matrix
        let m = 32;
        let spectral = SpectralGrid::new(m).unwrap();
        let ops = NonlocalOps::new(m, OperatorBackend::quadrature()).unwrap();
        let mut e = vec![0.0; m];
        e[0] = 1.0;
        let a = spectral.half_laplacian(&e).unwrap();
        let b = ops.half_laplacian(&e).unwrap();
        assert!(max_abs_diff(&a, &b) < 1e-12);
        // off-diagonal entries are non-positive
        assert!(b[1..].iter().all(|w| *w <= 1e-14));
    }

    #[test]
    fn split_examples() {
        let m = 128;
        let th = nodes(m);
        let f: Vec<f64> = th.iter().map(|t| t.cos() + 0.3 * (2.0 * t).sin()).collect();
        let a0 = half_laplacian(&f, &OperatorBackend::spectral()).unwrap();
        let (i1, i2) = split_i1_i2(&f, 5, PI, 16).unwrap();
        assert_eq!(i2, 0.0);
        assert!((i1 - a0[5]).abs() < 1e-10);

        let cos: Vec<f64> = th.iter().map(|t| t.cos()).collect();
        let (i1, i2) = split_i1_i2(&cos, 0, 0.5, 16).unwrap();
        assert!((i1 + i2 - 1.0).abs() < 1e-8);
        assert!(i1 > 0.0 && i2 > 0.0);

        assert!(matches!(split_i1_i2(&cos, 0, 0.0, 16), Err(Error::Config(_))));
        assert!(matches!(split_i1_i2(&cos, 0, 3.5, 16), Err(Error::Config(_))));
    }

    #[test]
    fn split_with_kink_outside_window() {
        // |sin θ| has kinks at 0 and π; evaluate at θ = π/2 with δ = 0.5
        let m = 256;
        let th = nodes(m);
        let f: Vec<f64> = th.iter().map(|t| t.sin().abs()).collect();
        let node = m / 4;
        let direct = half_laplacian(&f, &OperatorBackend::quadrature()).unwrap()[node];
        for delta in [0.1, 0.5, 1.0, PI] {
            let (i1, i2) = split_i1_i2(&f, node, delta, 16).unwrap();
            assert!(i1.is_finite() && i2.is_finite());
            assert!((i1 + i2 - direct).abs() < 1e-8, "delta {delta}: {} vs {direct}", i1 + i2);
        }
    }

    #[test]
    fn a0_matches_hilbert_of_derivative() {
        let m = 128;
        let th = nodes(m);
        let f: Vec<f64> = th.iter().map(|t| (2.0 * t).cos()).collect();
        for backend in [OperatorBackend::spectral(), OperatorBackend::quadrature()] {
            assert!(a0_equals_h_of_derivative_check(&f, &backend).unwrap() <= 1e-10);
            let c = vec![0.7; m];
            assert!(a0_equals_h_of_derivative_check(&c, &backend).unwrap() <= 1e-12);
        }
    }

    #[test]
    fn self_test_report() {
        let r = operator_self_test(256, 16, &OperatorBackend::quadrature()).unwrap();
        assert!(r.max_multiplier_error < 1e-9);
        assert!(r.ramp_error <= 1e-12);
        assert!((r.symmetric_constant - 1.0).abs() < 1e-10);
        let json = serde_json::to_value(&r).unwrap();
        assert_eq!(json["backend"], "quadrature");
        assert_eq!(json["M"], 256);
    }

    #[test]
    fn trig_interpolant_reproduces_band_limited() {
        let m = 64;
        let f = |t: f64| 1.0 + 0.3 * (2.0 * t).cos() - 0.2 * (5.0 * t).sin();
        let samples: Vec<f64> = nodes(m).iter().map(|t| f(*t)).collect();
        let p = TrigInterpolant::new(&samples).unwrap();
        for t in [0.0, 0.123, 1.7, 5.9] {
            assert!((p.value(t) - f(t)).abs() < 1e-13);
        }
    }

    #[test]
    fn grid_validation() {
        assert!(SpectralGrid::new(6).is_err());
        assert!(SpectralGrid::new(15).is_err());
        assert!(SpectralGrid::new(24).is_ok());
        let ops = NonlocalOps::new(16, OperatorBackend::spectral()).unwrap();
        assert!(matches!(ops.hilbert(&[0.0; 8]), Err(Error::Shape(_))));
    }
}
