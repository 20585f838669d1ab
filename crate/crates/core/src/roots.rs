//! Trigonometric polynomials in factored form `p(x) = Π sin((x − x_j)/2)`.
//!
//! A [`ParticleConfig`] holds the roots of one period with multiplicities.
//! Flattening repeats each root by its multiplicity, giving `x_0 ≤ … ≤ x_{2N−1}`
//! in `[a, a + 2π)`, and periodization extends it by `x_{k+2N} = x_k + 2π`.

use std::f64::consts::{PI, TAU};

use rayon::prelude::*;
use serde::{Deserialize, Serialize};

use crate::error::{Error, Result};

/// Input roots closer than this are merged into one multiple root.
pub const MERGE_RADIUS: f64 = 1e-10;

/// Absolute tolerance of derivative roots.
pub const ROOT_TOL: f64 = 1e-12;

/// Bracket width at which bisection hands over to Newton.
const BISECT_WIDTH: f64 = 1e-13;

/// Below this distance to a root, cot(d/2) uses its Laurent expansion.
const NEAR_POLE: f64 = 1e-6;

#[derive(Debug, Clone, Copy, PartialEq, Serialize, Deserialize)]
pub struct Root {
    pub theta: f64,
    pub mult: u32,
}

#[derive(Debug, Clone, PartialEq, Serialize, Deserialize)]
struct RawConfig {
    anchor: f64,
    roots: Vec<Root>,
}

/// Roots of one period with multiplicities, anchored in `[anchor, anchor + 2π)`.
#[derive(Debug, Clone, PartialEq, Serialize, Deserialize)]
#[serde(try_from = "RawConfig", into = "RawConfig")]
pub struct ParticleConfig {
    anchor: f64,
    roots: Vec<Root>,
}

impl TryFrom<RawConfig> for ParticleConfig {
    type Error = Error;

    fn try_from(raw: RawConfig) -> Result<Self> {
        ParticleConfig::new(raw.anchor, raw.roots)
    }
}

impl From<ParticleConfig> for RawConfig {
    fn from(c: ParticleConfig) -> Self {
        RawConfig {
            anchor: c.anchor,
            roots: c.roots,
        }
    }
}

impl ParticleConfig {
    pub fn new(anchor: f64, roots: Vec<Root>) -> Result<Self> {
        if !anchor.is_finite() {
            return Err(Error::Config(format!("anchor {anchor} is not finite")));
        }
        if roots.is_empty() {
            return Err(Error::Config("a configuration needs at least one root".into()));
        }
        for (i, r) in roots.iter().enumerate() {
            if !r.theta.is_finite() || r.theta < anchor || r.theta >= anchor + TAU {
                return Err(Error::Config(format!(
                    "root {i} at {} outside [{anchor}, {anchor} + 2π)",
                    r.theta
                )));
            }
            if r.mult == 0 {
                return Err(Error::Config(format!("root {i} has multiplicity 0")));
            }
            if i > 0 && roots[i - 1].theta >= r.theta {
                return Err(Error::Config("root positions must be strictly increasing".into()));
            }
        }
        let total: u64 = roots.iter().map(|r| u64::from(r.mult)).sum();
        if total < 2 || !total.is_multiple_of(2) {
            return Err(Error::Config(format!(
                "total root count {total} must be even and at least 2"
            )));
        }
        Ok(Self { anchor, roots })
    }

    /// Builds a configuration from raw positions: reduces them into
    /// `[anchor, anchor + 2π)`, sorts, and merges roots closer than
    /// [`MERGE_RADIUS`] (circularly) into multiplicities.
    pub fn from_positions(anchor: f64, positions: &[f64]) -> Result<Self> {
        if positions.iter().any(|p| !p.is_finite()) {
            return Err(Error::Config("root positions must be finite".into()));
        }
        let mut xs: Vec<f64> = positions
            .iter()
            .map(|&p| {
                if p >= anchor && p < anchor + TAU {
                    return p;
                }
                let r = anchor + (p - anchor).rem_euclid(TAU);
                if r >= anchor + TAU {
                    anchor
                } else {
                    r
                }
            })
            .collect();
        xs.sort_by(f64::total_cmp);
        let mut roots: Vec<Root> = Vec::new();
        for x in xs {
            match roots.last_mut() {
                Some(last) if x - last.theta < MERGE_RADIUS => last.mult += 1,
                _ => roots.push(Root { theta: x, mult: 1 }),
            }
        }
        // wrap: a cluster straddling anchor + 2π joins the first root
        if roots.len() > 1 {
            let first = roots[0].theta;
            let last = roots[roots.len() - 1];
            if first + TAU - last.theta < MERGE_RADIUS {
                roots.pop();
                roots[0].mult += last.mult;
            }
        }
        Self::new(anchor, roots)
    }

    /// `2N` roots equally spaced by `π/N`, the first at `offset`.
    pub fn equally_spaced(n_half: usize, offset: f64) -> Result<Self> {
        let count = 2 * n_half;
        let positions: Vec<f64> = (0..count)
            .map(|i| offset + TAU * i as f64 / count as f64)
            .collect();
        Self::from_positions(offset, &positions)
    }

    pub fn anchor(&self) -> f64 {
        self.anchor
    }

    pub fn roots(&self) -> &[Root] {
        &self.roots
    }

    /// Total number of roots `2N` counted with multiplicity.
    pub fn count(&self) -> usize {
        self.roots.iter().map(|r| r.mult as usize).sum()
    }

    pub fn n_half(&self) -> usize {
        self.count() / 2
    }

    /// Positions repeated by multiplicity: `x_0 ≤ … ≤ x_{2N−1}`.
    pub fn flattened(&self) -> Vec<f64> {
        let mut out = Vec::with_capacity(self.count());
        for r in &self.roots {
            out.extend(std::iter::repeat_n(r.theta, r.mult as usize));
        }
        out
    }

    /// `x_k` for any integer `k`, using `x_{k+2N} = x_k + 2π`.
    pub fn periodized(&self, flat: &[f64], k: i64) -> f64 {
        let n = flat.len() as i64;
        flat[k.rem_euclid(n) as usize] + TAU * k.div_euclid(n) as f64
    }

    /// Every position shifted by `c` (anchor included).
    pub fn shifted(&self, c: f64) -> Result<Self> {
        Self::new(
            self.anchor + c,
            self.roots
                .iter()
                .map(|r| Root {
                    theta: r.theta + c,
                    mult: r.mult,
                })
                .collect(),
        )
    }

    /// Mirror image `x ↦ −x`, re-anchored at its first root.
    pub fn reflected(&self) -> Result<Self> {
        let roots: Vec<Root> = self
            .roots
            .iter()
            .rev()
            .map(|r| Root {
                theta: -r.theta,
                mult: r.mult,
            })
            .collect();
        Self::new(roots[0].theta, roots)
    }

    /// Multiplicity of the root at `theta` modulo 2π (exact position match).
    pub fn multiplicity_at(&self, theta: f64) -> u32 {
        let t = theta.rem_euclid(TAU);
        self.roots
            .iter()
            .filter(|r| r.theta.rem_euclid(TAU) == t)
            .map(|r| r.mult)
            .sum()
    }
}

/// Signed distance `x − y` reduced into (−π, π].
fn circle_diff(x: f64, y: f64) -> f64 {
    let d = (x - y + PI).rem_euclid(TAU) - PI;
    if d == -PI {
        PI
    } else {
        d
    }
}

/// `cot(d/2)` with the singular term handled analytically near 0.
fn half_cot(d: f64) -> f64 {
    if d.abs() < NEAR_POLE {
        let d2 = d * d;
        2.0 / d - d / 6.0 - d * d2 / 360.0
    } else {
        1.0 / (0.5 * d).tan()
    }
}

/// `csc²(d/2)`, the negated derivative of `2·cot(d/2)`.
fn half_csc2(d: f64) -> f64 {
    if d.abs() < NEAR_POLE {
        let d2 = d * d;
        4.0 / d2 + 1.0 / 3.0 + d2 / 60.0
    } else {
        let s = (0.5 * d).sin();
        1.0 / (s * s)
    }
}

/// `p'(x)/p(x) = ½ Σ mult_j cot((x − x_j)/2)`.
pub fn log_derivative(config: &ParticleConfig, x: f64) -> Result<f64> {
    let mut acc = 0.0;
    for (index, r) in config.roots.iter().enumerate() {
        let d = circle_diff(x, r.theta);
        if d.abs() <= 1e-14 {
            return Err(Error::Pole {
                index,
                theta: r.theta,
            });
        }
        acc += f64::from(r.mult) * half_cot(d);
    }
    Ok(0.5 * acc)
}

/// Log-derivative and its x-derivative, without pole checks.
fn log_derivative_pair(roots: &[Root], x: f64) -> (f64, f64) {
    let mut f = 0.0;
    let mut df = 0.0;
    for r in roots {
        let m = f64::from(r.mult);
        // both kernels are 2π-periodic, so the raw difference is fine away from poles
        let (s, c) = (0.5 * (x - r.theta)).sin_cos();
        if s.abs() < 0.5 * NEAR_POLE {
            let d = circle_diff(x, r.theta);
            f += m * half_cot(d);
            df -= m * half_csc2(d);
        } else {
            f += m * c / s;
            df -= m / (s * s);
        }
    }
    (0.5 * f, 0.25 * df)
}

/// `p(x) = Π sin((x − x_j)/2)^{mult_j}` with leading constant 1.
pub fn evaluate_poly(config: &ParticleConfig, x: f64) -> f64 {
    config
        .roots
        .iter()
        .map(|r| (0.5 * (x - r.theta)).sin().powi(r.mult as i32))
        .product()
}

/// Unique zero of the log-derivative in the open gap `(lo, hi)` between two
/// consecutive distinct roots. The log-derivative decreases from +∞ to −∞
/// there, so a sign change always exists.
fn gap_root(roots: &[Root], lo: f64, hi: f64, gap_index: usize) -> Result<f64> {
    let mut a = lo;
    let mut b = hi;
    let mut x = 0.5 * (a + b);
    let mut iterations = 0;
    // Safeguarded Newton: keep the bracket, bisect whenever Newton leaves it.
    loop {
        iterations += 1;
        let (f, df) = log_derivative_pair(roots, x);
        if !f.is_finite() {
            return Err(Error::Numerical(format!(
                "log-derivative not finite at {x} in gap {gap_index} ({lo}, {hi})"
            )));
        }
        if f > 0.0 {
            a = x;
        } else if f < 0.0 {
            b = x;
        } else {
            return Ok(x);
        }
        let newton = x - f / df;
        let step;
        if newton > a && newton < b && df < 0.0 {
            step = (newton - x).abs();
            x = newton;
        } else {
            let mid = 0.5 * (a + b);
            step = (mid - x).abs();
            x = mid;
        }
        if step < 0.25 * ROOT_TOL || b - a < BISECT_WIDTH {
            break;
        }
        if iterations > 400 {
            return Err(Error::Numerical(format!(
                "no convergence in gap {gap_index} ({lo}, {hi}); bracket ({a}, {b})"
            )));
        }
    }
    // one polish step, kept only if it stays strictly inside the gap
    let (f, df) = log_derivative_pair(roots, x);
    if df < 0.0 && f.is_finite() {
        let polished = x - f / df;
        if polished > lo && polished < hi && (polished - x).abs() < ROOT_TOL {
            x = polished;
        }
    }
    if !(x > lo && x < hi) {
        return Err(Error::Numerical(format!(
            "derivative root {x} escaped gap {gap_index} ({lo}, {hi})"
        )));
    }
    Ok(x)
}

/// Roots of `p'`: every multiple root is kept with multiplicity reduced by
/// one, and each gap between consecutive distinct roots (period wrap
/// included) receives exactly one new simple root.
///
/// The result is anchored at the first input root, so the flattened
/// sequences interlace index by index: `x_i ≤ x'_i ≤ x_{i+1}`.
pub fn derivative_roots(config: &ParticleConfig) -> Result<ParticleConfig> {
    let roots = &config.roots;
    let n = roots.len();
    let gaps: Vec<f64> = (0..n)
        .into_par_iter()
        .map(|i| {
            let lo = roots[i].theta;
            let hi = if i + 1 < n {
                roots[i + 1].theta
            } else {
                roots[0].theta + TAU
            };
            gap_root(roots, lo, hi, i)
        })
        .collect::<Result<Vec<f64>>>()?;
    let mut out = Vec::with_capacity(2 * n);
    for (r, g) in roots.iter().zip(gaps) {
        if r.mult > 1 {
            out.push(Root {
                theta: r.theta,
                mult: r.mult - 1,
            });
        }
        out.push(Root { theta: g, mult: 1 });
    }
    ParticleConfig::new(roots[0].theta, out)
}

/// Whether the flattened periodized sequences satisfy `x_i ≤ x'_i ≤ x_{i+1}`.
pub fn interlacing_check(p: &ParticleConfig, dp: &ParticleConfig) -> Result<bool> {
    Ok(interlacing_violation(p, dp, 0.0)?.is_none())
}

/// First index violating interlacing by more than `tol`, if any.
pub fn interlacing_violation(
    p: &ParticleConfig,
    dp: &ParticleConfig,
    tol: f64,
) -> Result<Option<usize>> {
    if p.count() != dp.count() {
        return Err(Error::Shape(format!(
            "root counts differ: {} vs {}",
            p.count(),
            dp.count()
        )));
    }
    let x = p.flattened();
    let y = dp.flattened();
    let n = x.len() as i64;
    for i in 0..n {
        let xi = p.periodized(&x, i);
        let xn = p.periodized(&x, i + 1);
        let yi = dp.periodized(&y, i);
        if yi < xi - tol || yi > xn + tol {
            return Ok(Some(i as usize));
        }
    }
    Ok(None)
}

/// Symmetric partial sum `Σ_{|k|≤K} 1/(z + kπ)` of Euler's expansion of cot.
pub fn euler_cot_partial_sum(z: f64, k_max: u64) -> Result<f64> {
    let ratio = z / PI;
    if !z.is_finite() || (ratio - ratio.round()).abs() < 1e-14 {
        return Err(Error::Domain(format!("{z} is a pole of cot")));
    }
    // pair ±k from the tail inwards to limit rounding
    let mut acc = 0.0;
    for k in (1..=k_max).rev() {
        let kp = k as f64 * PI;
        acc += 1.0 / (z + kp) + 1.0 / (z - kp);
    }
    Ok(acc + 1.0 / z)
}

#[cfg(test)]
mod tests {
    use super::*;
    use rand::{Rng, SeedableRng};
    use rand_chacha::ChaCha8Rng;

    fn config(positions: &[f64]) -> ParticleConfig {
        ParticleConfig::from_positions(0.0, positions).unwrap()
    }

    fn random_config(rng: &mut ChaCha8Rng, count: usize) -> ParticleConfig {
        let xs: Vec<f64> = (0..count).map(|_| rng.gen_range(0.0..TAU)).collect();
        config(&xs)
    }

    #[test]
    fn log_derivative_examples() {
        let c = config(&[0.0, PI]);
        assert!(log_derivative(&c, PI / 2.0).unwrap().abs() < 1e-15);
        let oracle = 0.5 * (1.0 / (PI / 6.0).tan() + 1.0 / (-PI / 3.0).tan());
        assert!((log_derivative(&c, PI / 3.0).unwrap() - oracle).abs() < 1e-15);
        assert!((oracle - 1.0 / 3f64.sqrt()).abs() < 1e-15);
        let double = config(&[0.0, 0.0]);
        assert_eq!(double.roots().len(), 1);
        assert!((log_derivative(&double, PI / 2.0).unwrap() - 1.0).abs() < 1e-15);
    }

    #[test]
    fn log_derivative_pole_reports_index() {
        let c = config(&[0.5, 2.0]);
        match log_derivative(&c, 2.0 + TAU) {
            Err(Error::Pole { index, .. }) => assert_eq!(index, 1),
            other => panic!("expected pole, got {other:?}"),
        }
    }

    #[test]
    fn near_pole_expansion_is_continuous() {
        for d in [9.9e-7f64, 1.01e-6] {
            let exact = 1.0 / (0.5 * d as f64).tan();
            assert!((half_cot(d) - exact).abs() / exact < 1e-15);
            let s = (0.5 * d as f64).sin();
            assert!((half_csc2(d) - 1.0 / (s * s)).abs() * s * s < 1e-15);
        }
    }

    #[test]
    fn evaluate_poly_examples() {
        let c = config(&[0.0, PI]);
        assert!((evaluate_poly(&c, PI / 2.0) + 0.5).abs() < 1e-15);
        assert_eq!(evaluate_poly(&c, PI), 0.0);
        assert!((evaluate_poly(&config(&[0.0, 0.0]), PI) - 1.0).abs() < 1e-15);
    }

    #[test]
    fn derivative_of_antipodal_pair() {
        let d = derivative_roots(&config(&[0.0, PI])).unwrap();
        let f = d.flattened();
        assert!((f[0] - PI / 2.0).abs() < 1e-12);
        assert!((f[1] - 1.5 * PI).abs() < 1e-12);
    }

    #[test]
    fn derivative_of_equally_spaced_is_half_shift() {
        for n in [1, 3, 8, 50] {
            let c = ParticleConfig::equally_spaced(n, 0.2).unwrap();
            let d = derivative_roots(&c).unwrap();
            let half = PI / (2 * n) as f64;
            for (x, y) in c.flattened().iter().zip(d.flattened()) {
                assert!((y - x - half).abs() < 1e-12);
            }
        }
    }

    #[test]
    fn derivative_of_double_root() {
        let d = derivative_roots(&config(&[0.0, 0.0])).unwrap();
        assert_eq!(
            d.roots(),
            &[Root { theta: 0.0, mult: 1 }, Root { theta: d.roots()[1].theta, mult: 1 }]
        );
        assert!((d.roots()[1].theta - PI).abs() < 1e-12);
    }

    #[test]
    fn derivative_matches_sign_scan_oracle() {
        let mut rng = ChaCha8Rng::seed_from_u64(11);
        let c = random_config(&mut rng, 6);
        let d = derivative_roots(&c).unwrap();
        // oracle: sign changes of the log-derivative on 10⁶ points, refined
        // by bisection inside the detected cell
        let samples = 1_000_000;
        let x0 = c.anchor();
        let h = TAU / samples as f64;
        let mut found = Vec::new();
        let mut prev = (x0 + 0.5 * h, log_derivative(&c, x0 + 0.5 * h).unwrap());
        for k in 1..samples {
            let x = x0 + (k as f64 + 0.5) * h;
            let v = log_derivative(&c, x).unwrap();
            if prev.1 > 0.0 && v <= 0.0 {
                let (mut a, mut b) = (prev.0, x);
                for _ in 0..80 {
                    let mid = 0.5 * (a + b);
                    if log_derivative(&c, mid).unwrap() > 0.0 {
                        a = mid;
                    } else {
                        b = mid;
                    }
                }
                found.push(0.5 * (a + b));
            }
            prev = (x, v);
        }
        let ours: Vec<f64> = d.roots().iter().map(|r| r.theta.rem_euclid(TAU)).collect();
        let mut ours_sorted = ours.clone();
        ours_sorted.sort_by(f64::total_cmp);
        let mut found: Vec<f64> = found.iter().map(|x| x.rem_euclid(TAU)).collect();
        found.sort_by(f64::total_cmp);
        assert_eq!(found.len(), 6);
        for (a, b) in found.iter().zip(&ours_sorted) {
            assert!((a - b).abs() < 1e-10, "{a} vs {b}");
        }
    }

    #[test]
    fn interlacing_examples() {
        let p = config(&[0.0, PI]);
        let dp = ParticleConfig::from_positions(PI / 2.0, &[PI / 2.0, 1.5 * PI]).unwrap();
        assert!(interlacing_check(&p, &dp).unwrap());
        let bad = ParticleConfig::from_positions(PI / 2.0, &[PI / 2.0, PI / 2.0 + 1e-3]).unwrap();
        assert!(!interlacing_check(&p, &bad).unwrap());
        let odd = config(&[0.0, 1.0, 2.0, 3.0]);
        assert!(matches!(interlacing_check(&p, &odd), Err(Error::Shape(_))));
    }

    #[test]
    fn interlacing_and_count_over_random_seeds() {
        for seed in 0..1000u64 {
            let mut rng = ChaCha8Rng::seed_from_u64(seed);
            let count = 2 * rng.gen_range(1..=16);
            let c = random_config(&mut rng, count);
            let d = derivative_roots(&c).unwrap();
            assert_eq!(d.count(), c.count());
            assert!(interlacing_check(&c, &d).unwrap(), "seed {seed}");
        }
    }

    #[test]
    fn euler_partial_sums() {
        assert!((euler_cot_partial_sum(PI / 2.0, 0).unwrap() - 2.0 / PI).abs() < 1e-15);
        // pairs (k, −k−1) cancel, leaving the single term 1/(π/2 + Kπ)
        let k = 100_000u64;
        let tail = 1.0 / (PI / 2.0 + k as f64 * PI);
        assert!((euler_cot_partial_sum(PI / 2.0, k).unwrap() - tail).abs() < 1e-15);
        assert!((euler_cot_partial_sum(PI / 4.0, 10_000).unwrap() - 1.0).abs() < 1e-3);
        assert!(matches!(euler_cot_partial_sum(2.0 * PI, 5), Err(Error::Domain(_))));
    }

    #[test]
    fn euler_error_decays_like_inverse_k() {
        let z: f64 = 0.7;
        let exact = 1.0 / z.tan();
        let ks = [100u64, 200, 400, 800, 1600, 3200];
        let pts: Vec<(f64, f64)> = ks
            .iter()
            .map(|&k| {
                let e = (euler_cot_partial_sum(z, k).unwrap() - exact).abs();
                ((k as f64).ln(), e.ln())
            })
            .collect();
        let slope = crate::stats::ls_slope(&pts);
        assert!(-slope >= 0.9, "fitted exponent {}", -slope);
    }

    #[test]
    fn config_validation() {
        assert!(ParticleConfig::new(0.0, vec![Root { theta: 0.0, mult: 3 }]).is_err());
        assert!(ParticleConfig::new(0.0, vec![Root { theta: 7.0, mult: 2 }]).is_err());
        assert!(ParticleConfig::new(
            0.0,
            vec![Root { theta: 1.0, mult: 1 }, Root { theta: 1.0, mult: 1 }]
        )
        .is_err());
        let merged = config(&[1.0, 1.0 + 1e-12, 2.0, TAU - 1e-12 + 0.0, 0.0, 3.0]);
        assert_eq!(merged.roots()[0], Root { theta: 0.0, mult: 2 });
        assert_eq!(merged.count(), 6);
    }

    #[test]
    fn config_json_round_trip() {
        let c = config(&[0.0, 0.0, 1.0, 2.5]);
        let text = serde_json::to_string(&c).unwrap();
        assert_eq!(
            text,
            r#"{"anchor":0.0,"roots":[{"theta":0.0,"mult":2},{"theta":1.0,"mult":1},{"theta":2.5,"mult":1}]}"#
        );
        let back: ParticleConfig = serde_json::from_str(&text).unwrap();
        assert_eq!(back, c);
        assert!(serde_json::from_str::<ParticleConfig>(r#"{"anchor":0.0,"roots":[]}"#).is_err());
    }
}
