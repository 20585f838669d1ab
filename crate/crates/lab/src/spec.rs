//! Experiment configuration: one JSON document per run.
//!
//! Every field except `kind` is optional; each experiment fills in its own
//! defaults (see the README for the per-kind table). Unknown fields are
//! rejected so typos do not silently fall back to defaults.

use std::f64::consts::TAU;

use rand::Rng;
use rand_chacha::ChaCha8Rng;
use rootflow_core::measure::{cdf_from_measure, mollify, CdfField, CircleMeasure};
use rootflow_core::ops::OperatorBackend;
use rootflow_core::particles::{init_from_cdf_fn, init_from_measure};
use rootflow_core::roots::ParticleConfig;
use rootflow_core::solver::{GradientScheme, SchemeConfig};
use serde::{Deserialize, Serialize};

use crate::error::{Context, LabError, Result};

#[derive(Debug, Clone, Copy, PartialEq, Eq, Serialize, Deserialize, clap::ValueEnum)]
#[serde(rename_all = "kebab-case")]
pub enum Kind {
    OperatorCheck,
    ParticleRun,
    PdeRun,
    Compare,
    ComparisonTests,
    Dirac,
    VjScaling,
    SpeedCheck,
    StabilityCheck,
}

impl Kind {
    pub fn name(self) -> &'static str {
        match self {
            Kind::OperatorCheck => "operator-check",
            Kind::ParticleRun => "particle-run",
            Kind::PdeRun => "pde-run",
            Kind::Compare => "compare",
            Kind::ComparisonTests => "comparison-tests",
            Kind::Dirac => "dirac",
            Kind::VjScaling => "vj-scaling",
            Kind::SpeedCheck => "speed-check",
            Kind::StabilityCheck => "stability-check",
        }
    }
}

/// Initial measure, given through its CDF on [0, 2π).
#[derive(Debug, Clone, PartialEq, Serialize, Deserialize)]
#[serde(tag = "type", rename_all = "kebab-case", deny_unknown_fields)]
pub enum InitialData {
    Uniform,
    /// `F(θ) = θ/2π + amplitude · sin θ`, density `1/2π + amplitude · cos θ`.
    Sine { amplitude: f64 },
    Dirac {
        #[serde(default)]
        theta: f64,
    },
    Measure { measure: CircleMeasure },
}

impl InitialData {
    pub fn validate(&self) -> Result<()> {
        match self {
            InitialData::Sine { amplitude } if !(amplitude.abs() <= 1.0 / TAU) => Err(LabError::Config(format!(
                "sine amplitude {amplitude} makes the density negative (|a| must be ≤ 1/2π)"
            ))),
            InitialData::Dirac { theta } if !theta.is_finite() => {
                Err(LabError::Config("dirac position must be finite".into()))
            }
            _ => Ok(()),
        }
    }

    fn has_atoms(&self) -> bool {
        match self {
            InitialData::Dirac { .. } => true,
            InitialData::Measure { measure } => !measure.atoms().is_empty(),
            _ => false,
        }
    }

    /// CDF on `grid` nodes. Atoms are first mollified at width `eps`; the
    /// width actually used is returned.
    pub fn cdf_field(&self, grid: usize, eps: f64) -> Result<(CdfField, Option<f64>)> {
        let field = match self {
            InitialData::Uniform => CdfField::ramp(grid),
            InitialData::Sine { amplitude } => {
                let a = *amplitude;
                CdfField::from_fn(grid, move |t| a * t.sin())
            }
            InitialData::Dirac { theta } => CircleMeasure::dirac(*theta)
                .and_then(|mu| mollify(&mu, eps, grid))
                .and_then(|mu| cdf_from_measure(&mu, grid)),
            InitialData::Measure { measure } => {
                if let Some(d) = measure.density() {
                    if self.has_atoms() && d.grid_size != grid {
                        return Err(LabError::Config(format!(
                            "measure density has M = {} but the run uses M = {grid}",
                            d.grid_size
                        )));
                    }
                }
                if self.has_atoms() {
                    mollify(measure, eps, grid).and_then(|mu| cdf_from_measure(&mu, grid))
                } else {
                    cdf_from_measure(measure, grid)
                }
            }
        }
        .context("building the initial CDF")?;
        Ok((field, self.has_atoms().then_some(eps)))
    }

    /// CDF on `grid` nodes with atoms kept as jumps.
    pub fn exact_cdf(&self, grid: usize) -> Result<CdfField> {
        match self {
            InitialData::Dirac { theta } => CircleMeasure::dirac(*theta)
                .and_then(|mu| cdf_from_measure(&mu, grid))
                .context("building the reference CDF"),
            InitialData::Measure { measure } => {
                cdf_from_measure(measure, grid).context("building the reference CDF")
            }
            _ => Ok(self.cdf_field(grid, 1.0)?.0),
        }
    }

    /// `2N` particles at the levels `(i + ½)/(2N)`.
    pub fn particles(&self, n_half: usize) -> Result<ParticleConfig> {
        match self {
            InitialData::Uniform => init_from_cdf_fn(|t| t / TAU, n_half),
            InitialData::Sine { amplitude } => {
                let a = *amplitude;
                init_from_cdf_fn(move |t| t / TAU + a * t.sin(), n_half)
            }
            InitialData::Dirac { theta } => {
                CircleMeasure::dirac(*theta).and_then(|mu| init_from_measure(&mu, n_half))
            }
            InitialData::Measure { measure } => init_from_measure(measure, n_half),
        }
        .context(format!("placing particles for N = {n_half}"))
    }

    /// Density samples on `grid` nodes, when the measure has no atoms.
    pub fn density(&self, grid: usize) -> Result<Vec<f64>> {
        let h = TAU / grid as f64;
        match self {
            InitialData::Uniform => Ok(vec![1.0 / TAU; grid]),
            InitialData::Sine { amplitude } => Ok((0..grid)
                .map(|j| 1.0 / TAU + amplitude * (h * j as f64).cos())
                .collect()),
            InitialData::Measure { measure } if !self.has_atoms() => {
                let d = measure
                    .density()
                    .ok_or_else(|| LabError::Config("measure has neither atoms nor density".into()))?;
                Ok((0..grid).map(|j| d.value_at(h * j as f64)).collect())
            }
            _ => Err(LabError::Config(
                "this experiment needs an initial measure with a density and no atoms".into(),
            )),
        }
    }

    /// `count` independent draws from the measure.
    pub fn sample_iid(&self, rng: &mut ChaCha8Rng, count: usize) -> Result<Vec<f64>> {
        let levels: Vec<f64> = (0..count).map(|_| rng.gen_range(0.0..1.0)).collect();
        match self {
            InitialData::Uniform => Ok(levels.iter().map(|p| TAU * p).collect()),
            InitialData::Sine { amplitude } => {
                let a = *amplitude;
                Ok(levels
                    .iter()
                    .map(|&p| invert(|t| t / TAU + a * t.sin(), p))
                    .collect())
            }
            InitialData::Dirac { theta } => Ok(vec![theta.rem_euclid(TAU); count]),
            InitialData::Measure { measure } => measure.quantiles(&levels).context("sampling the measure"),
        }
    }
}

/// Smallest `θ ∈ [0, 2π]` with `cdf(θ) ≥ p`, by bisection.
fn invert(cdf: impl Fn(f64) -> f64, p: f64) -> f64 {
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
}

/// Pass/fail limits; all experiment checks read their limits from here.
#[derive(Debug, Clone, PartialEq, Serialize, Deserialize)]
#[serde(default, deny_unknown_fields)]
pub struct Thresholds {
    /// Operator multiplier tables.
    pub multiplier_tol: f64,
    /// `A₀` of the pure ramp.
    pub ramp_tol: f64,
    /// Interlacing and discrete comparison slack.
    pub root_tol: f64,
    /// Rotation-shift pairs: `|y'_i − x'_i − c|`.
    pub shift_tol: f64,
    /// Scheme ordering loss over a whole run.
    pub ordering_tol: f64,
    /// Allowed dip of the minimum slope below `m`.
    pub slope_floor_tol: f64,
    /// Uniform data against the exact translating solution.
    pub exact_tol: f64,
    /// Growth of the sup-distance between perturbed runs.
    pub stability_tol: f64,
    /// Accepted range for the log-log slope of `max |V_j|` against `N`.
    pub vj_slope_min: f64,
    pub vj_slope_max: f64,
    /// i.i.d. roots: sup-distance to `F_μ` must stay below `factor / √(2N)`.
    pub iid_factor: f64,
}

impl Default for Thresholds {
    fn default() -> Self {
        Self {
            multiplier_tol: 1e-8,
            ramp_tol: 1e-12,
            root_tol: 1e-10,
            shift_tol: 1e-11,
            ordering_tol: 1e-7,
            slope_floor_tol: 1e-7,
            exact_tol: 1e-6,
            stability_tol: 1e-6,
            vj_slope_min: -2.3,
            vj_slope_max: -1.7,
            iid_factor: 2.0,
        }
    }
}

#[derive(Debug, Clone, PartialEq, Serialize, Deserialize)]
#[serde(deny_unknown_fields)]
pub struct ExperimentSpec {
    pub kind: Kind,
    #[serde(default, skip_serializing_if = "Option::is_none")]
    pub seed: Option<u64>,
    #[serde(default, rename = "N", skip_serializing_if = "Option::is_none")]
    pub n_list: Option<Vec<usize>>,
    #[serde(default, rename = "M", skip_serializing_if = "Option::is_none")]
    pub grid_size: Option<usize>,
    #[serde(default, skip_serializing_if = "Option::is_none")]
    pub m: Option<f64>,
    #[serde(default, rename = "T", skip_serializing_if = "Option::is_none")]
    pub final_time: Option<f64>,
    /// Solver step count; when set it replaces `T` by `steps · cfl_dt`.
    #[serde(default, skip_serializing_if = "Option::is_none")]
    pub steps: Option<usize>,
    #[serde(default, skip_serializing_if = "Option::is_none")]
    pub cfl_safety: Option<f64>,
    #[serde(default, skip_serializing_if = "Option::is_none")]
    pub gradient: Option<GradientScheme>,
    #[serde(default, skip_serializing_if = "Option::is_none")]
    pub backend: Option<OperatorBackend>,
    #[serde(default, skip_serializing_if = "Option::is_none")]
    pub record_every: Option<usize>,
    #[serde(default, skip_serializing_if = "Option::is_none")]
    pub trials: Option<usize>,
    /// Ordered pairs in stability-check (`trials` counts the perturbed pairs).
    #[serde(default, skip_serializing_if = "Option::is_none")]
    pub ordered_pairs: Option<usize>,
    #[serde(default, skip_serializing_if = "Option::is_none")]
    pub initial: Option<InitialData>,
    #[serde(default)]
    pub iid_sample: bool,
    /// Mollifier width applied to atoms before a PDE run.
    #[serde(default, skip_serializing_if = "Option::is_none")]
    pub mollify_eps: Option<f64>,
    /// Size of the perturbation in stability runs.
    #[serde(default, skip_serializing_if = "Option::is_none")]
    pub epsilon: Option<f64>,
    #[serde(default, skip_serializing_if = "Option::is_none")]
    pub k_max: Option<u32>,
    /// Times at which particles and PDE are compared.
    #[serde(default, skip_serializing_if = "Option::is_none")]
    pub record_times: Option<Vec<f64>>,
    #[serde(default)]
    pub thresholds: Thresholds,
}

impl ExperimentSpec {
    pub fn new(kind: Kind) -> Self {
        Self {
            kind,
            seed: None,
            n_list: None,
            grid_size: None,
            m: None,
            final_time: None,
            steps: None,
            cfl_safety: None,
            gradient: None,
            backend: None,
            record_every: None,
            trials: None,
            ordered_pairs: None,
            initial: None,
            iid_sample: false,
            mollify_eps: None,
            epsilon: None,
            k_max: None,
            record_times: None,
            thresholds: Thresholds::default(),
        }
    }

    pub fn from_json(text: &str) -> Result<Self> {
        serde_json::from_str(text).map_err(|e| {
            LabError::Config(format!(
                "{e}\nexpected a JSON object such as {{\"kind\": \"compare\", \"N\": [32, 64], \"M\": 1024, \"m\": 0.05, \"T\": 0.5, \"initial\": {{\"type\": \"sine\", \"amplitude\": 0.05}}}}"
            ))
        })
    }

    /// Whether this run draws random numbers and therefore needs a seed.
    pub fn is_randomized(&self) -> bool {
        matches!(self.kind, Kind::ComparisonTests | Kind::StabilityCheck)
            || (self.kind == Kind::ParticleRun && self.iid_sample)
    }

    pub fn validate(&self) -> Result<()> {
        if self.is_randomized() && self.seed.is_none() {
            return Err(LabError::Config(format!(
                "{} is randomized and needs a seed (config \"seed\" or --seed)",
                self.kind.name()
            )));
        }
        if let Some(ns) = &self.n_list {
            if ns.is_empty() || ns.contains(&0) {
                return Err(LabError::Config("N must be a non-empty list of positive integers".into()));
            }
        }
        if let Some(grid) = self.grid_size {
            if grid < 8 || grid % 2 != 0 {
                return Err(LabError::Config(format!("M = {grid} must be even and at least 8")));
            }
        }
        let positive = [
            ("m", self.m),
            ("mollify_eps", self.mollify_eps),
            ("epsilon", self.epsilon),
        ];
        for (name, v) in positive {
            if let Some(v) = v {
                if !(v > 0.0 && v.is_finite()) {
                    return Err(LabError::Config(format!("{name} must be positive, got {v}")));
                }
            }
        }
        if let Some(t) = self.final_time {
            if !(t >= 0.0 && t.is_finite()) {
                return Err(LabError::Config(format!("T must be non-negative, got {t}")));
            }
        }
        if self.trials == Some(0) {
            return Err(LabError::Config("trials must be positive".into()));
        }
        if let Some(times) = &self.record_times {
            if times.iter().any(|t| !(*t >= 0.0)) || times.windows(2).any(|w| w[1] <= w[0]) {
                return Err(LabError::Config("record_times must be non-negative and increasing".into()));
            }
        }
        if let Some(init) = &self.initial {
            init.validate()?;
        }
        self.scheme_config(8, 0.0).validate().context("scheme settings")?;
        Ok(())
    }

    pub fn n_list_or(&self, default: &[usize]) -> Vec<usize> {
        self.n_list.clone().unwrap_or_else(|| default.to_vec())
    }

    pub fn initial_or(&self, default: InitialData) -> InitialData {
        self.initial.clone().unwrap_or(default)
    }

    /// Solver settings on `grid` nodes up to time `final_time`.
    pub fn scheme_config(&self, grid: usize, final_time: f64) -> SchemeConfig {
        let base = SchemeConfig::new(grid, self.m.unwrap_or(0.05), final_time);
        SchemeConfig {
            cfl_safety: self.cfl_safety.unwrap_or(base.cfl_safety),
            backend: self.backend.unwrap_or(base.backend),
            gradient: self.gradient.unwrap_or(base.gradient),
            record_every: self.record_every.unwrap_or(base.record_every),
            ..base
        }
    }
}

#[cfg(test)]
mod tests {
    use super::*;

    #[test]
    fn parses_minimal_and_full_documents() {
        let spec = ExperimentSpec::from_json(r#"{"kind": "dirac"}"#).unwrap();
        assert_eq!(spec.kind, Kind::Dirac);
        assert_eq!(spec.thresholds, Thresholds::default());

        let text = r#"{
            "kind": "compare", "seed": 3, "N": [32, 64], "M": 512, "m": 0.05, "T": 0.5,
            "gradient": "upwind-min", "backend": {"kind": "quadrature"},
            "initial": {"type": "sine", "amplitude": 0.05},
            "thresholds": {"exact_tol": 1e-7}
        }"#;
        let spec = ExperimentSpec::from_json(text).unwrap();
        assert_eq!(spec.n_list, Some(vec![32, 64]));
        assert_eq!(spec.initial, Some(InitialData::Sine { amplitude: 0.05 }));
        assert_eq!(spec.thresholds.exact_tol, 1e-7);
        assert_eq!(spec.thresholds.root_tol, 1e-10);
        assert_eq!(spec.scheme_config(512, 0.5).gradient, GradientScheme::UpwindMin);
        spec.validate().unwrap();
        let echo = serde_json::to_string(&spec).unwrap();
        assert_eq!(ExperimentSpec::from_json(&echo).unwrap(), spec);
    }

    #[test]
    fn rejects_bad_documents() {
        for text in [
            r#"{"kind": "nope"}"#,
            r#"{"kind": "dirac", "typo": 1}"#,
            r#"{"N": [4]}"#,
            r#"{"kind": "dirac", "initial": {"type": "sine"}}"#,
        ] {
            assert!(matches!(ExperimentSpec::from_json(text), Err(LabError::Config(_))), "{text}");
        }
        let mut spec = ExperimentSpec::new(Kind::ComparisonTests);
        assert!(spec.validate().is_err());
        spec.seed = Some(1);
        spec.validate().unwrap();
        spec.grid_size = Some(7);
        assert!(spec.validate().is_err());
        let mut spec = ExperimentSpec::new(Kind::Compare);
        spec.initial = Some(InitialData::Sine { amplitude: 0.5 });
        assert!(spec.validate().is_err());
        spec.initial = None;
        spec.cfl_safety = Some(2.0);
        assert!(spec.validate().is_err());
    }

    #[test]
    fn initial_data_views_agree() {
        let init = InitialData::Sine { amplitude: 0.05 };
        let (field, eps) = init.cdf_field(64, 0.1).unwrap();
        assert_eq!(eps, None);
        let p = init.particles(8).unwrap();
        // F at each particle equals its level (i + ½)/16
        for (i, x) in p.flattened().iter().enumerate() {
            let f = x / TAU + 0.05 * x.sin();
            assert!((f - (i as f64 + 0.5) / 16.0).abs() < 1e-12);
        }
        assert!(field.min_slope() > 0.1);
        let dens = init.density(64).unwrap();
        assert!((dens[0] - (1.0 / TAU + 0.05)).abs() < 1e-15);

        let dirac = InitialData::Dirac { theta: 0.0 };
        let (field, eps) = dirac.cdf_field(256, 0.2).unwrap();
        assert_eq!(eps, Some(0.2));
        assert!(field.min_slope() >= -1e-12);
        assert!(dirac.density(64).is_err());
        assert_eq!(dirac.particles(4).unwrap().roots()[0].mult, 8);
    }

    #[test]
    fn iid_draws_follow_the_law() {
        use rand::SeedableRng;
        let mut rng = ChaCha8Rng::seed_from_u64(1);
        let init = InitialData::Sine { amplitude: 0.1 };
        let xs = init.sample_iid(&mut rng, 20_000).unwrap();
        let below = xs.iter().filter(|x| **x < std::f64::consts::PI).count() as f64 / 20_000.0;
        // F(π) = 1/2 for this law; 4σ ≈ 0.014
        assert!((below - 0.5).abs() < 0.015);
        let mean_cos = xs.iter().map(|x| x.cos()).sum::<f64>() / 20_000.0;
        // E[cos] = π · amplitude
        assert!((mean_cos - std::f64::consts::PI * 0.1).abs() < 0.02);
    }
}
