//! The experiment kinds. Each writes its data files into the run directory
//! and returns the checks that make up `summary.json`.

use std::path::Path;
use std::time::Instant;

use rayon::prelude::*;
use rootflow_core::measure::{check_hm, sup_distance, CdfField};
use rootflow_core::ops::{operator_self_test, BackendKind, OperatorBackend};
use rootflow_core::particles::{
    discrete_comparison_check, empirical_cdf, evolve, gap_diagnostics, speed_vs_heuristic, trajectory_violation,
    ComparisonOutcome,
};
use rootflow_core::roots::{derivative_roots, interlacing_violation, ParticleConfig};
use rootflow_core::solver::{cfl_dt, Flag, Scheme};
use rootflow_core::stats::loglog_slope;
use rootflow_core::Error as CoreError;
use serde::{Deserialize, Serialize};
use serde_json::json;

use crate::error::{Context, LabError, Result};
use crate::output::{Check, Manifest, RunDir, Summary, Versions};
use crate::sampling::{
    ordered_config_pair, ordered_field_pair, perturbed_field_pair, random_config, trial_rng,
};
use crate::spec::{ExperimentSpec, InitialData, Kind};

/// Default mollifier width for atoms in PDE runs.
const DEFAULT_MOLLIFY_EPS: f64 = 0.1;

pub struct Outcome {
    pub checks: Vec<Check>,
    pub results: serde_json::Value,
}

/// Runs `spec` and writes data files, `summary.json` and `manifest.json`
/// beneath `out`.
pub fn run_suite(spec: &ExperimentSpec, out: &Path) -> Result<Summary> {
    spec.validate()?;
    let start = Instant::now();
    let mut dir = RunDir::create(out)?;
    let outcome = match spec.kind {
        Kind::OperatorCheck => operator_check(spec, &mut dir),
        Kind::ParticleRun => particle_run(spec, &mut dir),
        Kind::PdeRun => pde_run(spec, &mut dir),
        Kind::Compare => compare(spec, &mut dir),
        Kind::ComparisonTests => comparison_tests(spec, &mut dir),
        Kind::Dirac => dirac(spec, &mut dir),
        Kind::VjScaling => vj_scaling(spec, &mut dir),
        Kind::SpeedCheck => speed_check(spec, &mut dir),
        Kind::StabilityCheck => stability_check(spec, &mut dir),
    }?;
    let summary = Summary {
        kind: spec.kind.name().into(),
        seed: spec.seed,
        passed: outcome.checks.iter().all(|c| c.passed),
        checks: outcome.checks,
        results: outcome.results,
    };
    dir.write_json("summary.json", &summary)?;
    let mut files = dir.files().to_vec();
    files.push("manifest.json".into());
    let manifest = Manifest {
        kind: spec.kind.name().into(),
        seed: spec.seed,
        config: spec.clone(),
        versions: Versions::current(),
        threads: rayon::current_num_threads(),
        wall_time_s: start.elapsed().as_secs_f64(),
        files,
    };
    dir.write_json("manifest.json", &manifest)?;
    Ok(summary)
}

fn backend_name(kind: BackendKind) -> &'static str {
    match kind {
        BackendKind::Spectral => "spectral",
        BackendKind::Quadrature => "quadrature",
    }
}

/// Particle steps needed to reach `t`, which must be a multiple of `1/(2N)`.
fn steps_for(t: f64, n_half: usize) -> Result<usize> {
    let k = t * (2 * n_half) as f64;
    if (k - k.round()).abs() > 1e-9 {
        return Err(LabError::Config(format!(
            "time {t} is not a multiple of the particle step 1/(2N) for N = {n_half}"
        )));
    }
    Ok(k.round() as usize)
}

fn operator_check(spec: &ExperimentSpec, dir: &mut RunDir) -> Result<Outcome> {
    let grid = spec.grid_size.unwrap_or(1024);
    let k_max = spec.k_max.unwrap_or(16);
    let backends = match spec.backend {
        Some(b) => vec![b],
        None => vec![OperatorBackend::spectral(), OperatorBackend::quadrature()],
    };
    let reports = backends
        .iter()
        .map(|b| operator_self_test(grid, k_max, b).context("operator self-test"))
        .collect::<Result<Vec<_>>>()?;
    dir.write("operator_multipliers.csv", |w| {
        writeln!(w, "backend,k,hilbert_cos_error,hilbert_sin_error,half_laplacian_error")?;
        for r in &reports {
            for row in &r.rows {
                writeln!(
                    w,
                    "{},{},{},{},{}",
                    backend_name(r.backend),
                    row.k,
                    row.hilbert_cos_error,
                    row.hilbert_sin_error,
                    row.half_laplacian_error
                )?;
            }
        }
        Ok(())
    })?;
    let t = &spec.thresholds;
    let mut checks = Vec::new();
    for r in &reports {
        let name = backend_name(r.backend);
        checks.push(Check::at_most(&format!("{name} multiplier error"), r.max_multiplier_error, t.multiplier_tol));
        checks.push(Check::at_most(&format!("{name} ramp annihilation"), r.ramp_error, t.ramp_tol));
    }
    let results = json!({
        "M": grid,
        "k_max": k_max,
        "backends": reports.iter().map(|r| json!({
            "backend": backend_name(r.backend),
            "max_multiplier_error": r.max_multiplier_error,
            "ramp_error": r.ramp_error,
            "symmetric_constant": r.symmetric_constant,
        })).collect::<Vec<_>>(),
    });
    Ok(Outcome { checks, results })
}

#[derive(Debug, Clone, Serialize, Deserialize)]
struct ParticleRunRow {
    #[serde(rename = "N")]
    n_half: usize,
    steps: usize,
    final_time: f64,
    violation_step: Option<usize>,
    final_distinct_roots: usize,
    iid_initial_distance: Option<f64>,
}

fn particle_run(spec: &ExperimentSpec, dir: &mut RunDir) -> Result<Outcome> {
    let init = spec.initial_or(InitialData::Sine { amplitude: 0.05 });
    let ns = spec.n_list_or(&[32]);
    let t_final = spec.final_time.unwrap_or(0.5);
    let grid = spec.grid_size.unwrap_or(1024);
    let t = &spec.thresholds;
    let reference = if spec.iid_sample {
        Some(init.exact_cdf(grid)?)
    } else {
        None
    };
    let runs = ns
        .par_iter()
        .map(|&n| {
            let steps = steps_for(t_final, n)?;
            let start = if spec.iid_sample {
                let seed = spec.seed.expect("validated");
                let xs = init.sample_iid(&mut trial_rng(seed, n as u64), 2 * n)?;
                ParticleConfig::from_positions(0.0, &xs).context("i.i.d. configuration")?
            } else {
                init.particles(n)?
            };
            let iid_initial_distance = match &reference {
                Some(f) => Some(
                    empirical_cdf(&start, grid)
                        .and_then(|e| sup_distance(&e, f))
                        .context("i.i.d. empirical CDF")?,
                ),
                None => None,
            };
            let traj = evolve(&start, steps).context(format!("evolving N = {n}"))?;
            let violation_step = trajectory_violation(&traj, t.root_tol).context("interlacing")?;
            let row = ParticleRunRow {
                n_half: n,
                steps,
                final_time: traj.time(steps),
                violation_step,
                final_distinct_roots: traj.last().roots().len(),
                iid_initial_distance,
            };
            Ok((row, traj))
        })
        .collect::<Result<Vec<_>>>()?;
    let mut checks = Vec::new();
    for (row, traj) in &runs {
        dir.write(&format!("particles_N{}.csv", row.n_half), |w| traj.write_csv(w))?;
        checks.push(Check::holds(
            &format!("N={} interlacing and count conservation", row.n_half),
            row.violation_step.is_none(),
            row.violation_step.map_or(0.0, |s| s as f64),
            "no violating step",
        ));
        if let Some(d) = row.iid_initial_distance {
            let limit = t.iid_factor / ((2 * row.n_half) as f64).sqrt();
            checks.push(Check::at_most(&format!("N={} i.i.d. sup-distance to F", row.n_half), d, limit));
        }
    }
    let rows: Vec<&ParticleRunRow> = runs.iter().map(|r| &r.0).collect();
    Ok(Outcome {
        checks,
        results: json!({ "iid_sample": spec.iid_sample, "runs": rows }),
    })
}

fn pde_run(spec: &ExperimentSpec, dir: &mut RunDir) -> Result<Outcome> {
    let init = spec.initial_or(InitialData::Uniform);
    let grid = spec.grid_size.unwrap_or(256);
    let t_final = spec.final_time.unwrap_or(1.0);
    let config = spec.scheme_config(grid, t_final);
    let scheme = Scheme::new(config).context("scheme")?;
    let (f0, eps) = init.cdf_field(grid, spec.mollify_eps.unwrap_or(DEFAULT_MOLLIFY_EPS))?;
    let result = scheme.solve(&f0).context("pde-run rejected")?;
    dir.write("snapshots.csv", |w| result.write_snapshots_csv(w))?;
    dir.write("monitor.jsonl", |w| result.write_monitor_jsonl(w))?;
    let t = &spec.thresholds;
    let count = |flag: Flag| result.monitors.iter().filter(|m| m.flags.contains(&flag)).count() as f64;
    let min_slope = result
        .monitors
        .iter()
        .map(|m| m.min_slope)
        .fold(f0.min_slope(), f64::min);
    let max_speed = result.monitors.iter().map(|m| m.max_df_over_dt).fold(0.0, f64::max);
    let mut checks = vec![
        Check::holds("speed bound |dF| <= dt", count(Flag::SpeedBound) == 0.0, max_speed, "max |dF|/dt <= 1"),
        Check::at_least("slope floor", min_slope, config.m - t.slope_floor_tol),
        Check::holds("snapshots valid", count(Flag::InvalidSnapshot) == 0.0, count(Flag::InvalidSnapshot), "== 0"),
    ];
    let mut exact_error = None;
    if init == InitialData::Uniform {
        // F₀(θ − πt) = θ/2π − t/2
        let last = result.last();
        let exact = CdfField::from_periodic(vec![-0.5 * last.t; grid]).context("exact solution")?;
        let err = sup_distance(&last.field, &exact).context("exact solution")?;
        checks.push(Check::at_most("uniform data matches translation", err, t.exact_tol));
        exact_error = Some(err);
    }
    Ok(Outcome {
        checks,
        results: json!({
            "M": grid,
            "m": config.m,
            "T": t_final,
            "dt": cfl_dt(&config),
            "steps": result.monitors.len(),
            "mollify_eps": eps,
            "min_slope": min_slope,
            "max_dF_over_dt": max_speed,
            "exact_error": exact_error,
            "flagged": result.flagged,
        }),
    })
}

#[derive(Debug, Clone, PartialEq, Serialize, Deserialize)]
pub struct CompareRow {
    #[serde(rename = "N")]
    pub n_half: usize,
    /// `max_t sup_θ |F_{2N}(t) − F(t)|` over the record times.
    pub e_n: f64,
    pub per_time: Vec<f64>,
}

#[derive(Debug, Clone, PartialEq, Serialize, Deserialize)]
pub struct CompareReport {
    pub times: Vec<f64>,
    pub rows: Vec<CompareRow>,
    pub strictly_decreasing: bool,
    /// Log-log slope of `e_N` against `N`.
    pub fitted_exponent: f64,
    pub dt: f64,
    pub pde_flagged: bool,
    pub mollify_eps: Option<f64>,
}

/// Evolves particles and the PDE from the same initial CDF and tabulates the
/// sup-distance between the empirical CDF and the solver at each record time.
pub fn run_compare(spec: &ExperimentSpec) -> Result<CompareReport> {
    let init = spec.initial_or(InitialData::Sine { amplitude: 0.05 });
    let ns = spec.n_list_or(&[32, 64, 128, 256]);
    let grid = spec.grid_size.unwrap_or(1024);
    let t_final = spec.final_time.unwrap_or(0.5);
    let mut times: Vec<f64> = match &spec.record_times {
        Some(ts) => ts.iter().copied().filter(|t| *t > 0.0).collect(),
        None => (1..).map(|j| j as f64 / 16.0).take_while(|t| *t <= t_final).collect(),
    };
    if spec.record_times.is_none() && times.last() != Some(&t_final) && t_final > 0.0 {
        times.push(t_final);
    }
    let all_times: Vec<f64> = std::iter::once(0.0).chain(times.iter().copied()).collect();
    for &n in &ns {
        for &t in &all_times {
            steps_for(t, n)?;
        }
    }
    let config = spec.scheme_config(grid, t_final);
    let scheme = Scheme::new(config).context("scheme")?;
    let (f0, eps) = init.cdf_field(grid, spec.mollify_eps.unwrap_or(DEFAULT_MOLLIFY_EPS))?;
    let cert = check_hm(&f0, config.m).context("checking the initial data")?;
    if !cert.satisfied {
        return Err(LabError::Core {
            context: "initial data rejected".into(),
            source: CoreError::HmViolation {
                m: config.m,
                slope: cert.worst_pair.slope,
                theta: cert.worst_pair.theta,
            },
        });
    }
    let pde = scheme.solve_at(&f0, &times).context("compare: PDE run")?;
    let rows = ns
        .par_iter()
        .map(|&n| {
            let last = steps_for(*all_times.last().expect("contains 0"), n)?;
            let traj = evolve(&init.particles(n)?, last).context(format!("compare: particles N = {n}"))?;
            let per_time = all_times
                .iter()
                .zip(&pde.snapshots)
                .map(|(&t, snap)| {
                    let k = steps_for(t, n)?;
                    empirical_cdf(&traj.configs[k], grid)
                        .and_then(|e| sup_distance(&e, &snap.field))
                        .context("compare: distance")
                })
                .collect::<Result<Vec<f64>>>()?;
            let e_n = per_time.iter().copied().fold(0.0, f64::max);
            Ok(CompareRow { n_half: n, e_n, per_time })
        })
        .collect::<Result<Vec<_>>>()?;
    let mut rows = rows;
    rows.sort_by_key(|r| r.n_half);
    let strictly_decreasing = rows.windows(2).all(|w| w[1].e_n < w[0].e_n);
    let xs: Vec<f64> = rows.iter().map(|r| r.n_half as f64).collect();
    let ys: Vec<f64> = rows.iter().map(|r| r.e_n).collect();
    Ok(CompareReport {
        times: all_times,
        fitted_exponent: if rows.len() >= 2 { loglog_slope(&xs, &ys) } else { f64::NAN },
        rows,
        strictly_decreasing,
        dt: scheme.cfl_dt(),
        pde_flagged: pde.flagged,
        mollify_eps: eps,
    })
}

fn compare(spec: &ExperimentSpec, dir: &mut RunDir) -> Result<Outcome> {
    let report = run_compare(spec)?;
    dir.write("compare.csv", |w| {
        writeln!(w, "N,e_N")?;
        for r in &report.rows {
            writeln!(w, "{},{}", r.n_half, r.e_n)?;
        }
        Ok(())
    })?;
    dir.write("compare_times.csv", |w| {
        writeln!(w, "N,t,sup_distance")?;
        for r in &report.rows {
            for (t, d) in report.times.iter().zip(&r.per_time) {
                writeln!(w, "{},{},{}", r.n_half, t, d)?;
            }
        }
        Ok(())
    })?;
    let worst_ratio = report
        .rows
        .windows(2)
        .map(|w| w[1].e_n / w[0].e_n)
        .fold(f64::NEG_INFINITY, f64::max);
    let mut checks = vec![
        Check::holds("e_N strictly decreasing in N", report.strictly_decreasing, worst_ratio, "e_(next N) / e_N < 1"),
        Check::holds("PDE monitors clean", !report.pde_flagged, f64::from(u8::from(report.pde_flagged)), "not flagged"),
    ];
    if spec.initial_or(InitialData::Sine { amplitude: 0.05 }) == InitialData::Uniform {
        let excess = report
            .rows
            .iter()
            .map(|r| r.e_n - 1.0 / (2 * r.n_half) as f64)
            .fold(f64::NEG_INFINITY, f64::max);
        checks.push(Check::at_most("uniform: e_N - 1/(2N)", excess, spec.thresholds.exact_tol));
    }
    Ok(Outcome {
        checks,
        results: serde_json::to_value(&report).expect("report serializes"),
    })
}

#[derive(Debug, Clone, Serialize)]
struct ComparisonTrial {
    trial: usize,
    n_half: usize,
    outcome: &'static str,
    excess: f64,
    shift_error: f64,
    interlace_n_half: usize,
    interlacing_ok: bool,
}

fn comparison_tests(spec: &ExperimentSpec, dir: &mut RunDir) -> Result<Outcome> {
    let seed = spec.seed.expect("validated");
    let trials = spec.trials.unwrap_or(1000);
    let ns = spec.n_list_or(&[32]);
    let pair_max = ns[0];
    let interlace_max = ns.get(1).copied().unwrap_or(2 * pair_max);
    let t = &spec.thresholds;
    let rows = (0..trials)
        .into_par_iter()
        .map(|trial| {
            let mut rng = trial_rng(seed, trial as u64);
            let (x, y) = ordered_config_pair(&mut rng, pair_max)?;
            let (outcome, excess) = match discrete_comparison_check(&x, &y).context("comparison")? {
                ComparisonOutcome::Holds { max_excess } => ("holds", max_excess),
                ComparisonOutcome::Violated { x, y, .. } => ("violated", x - y),
                ComparisonOutcome::PreconditionFailed { .. } => ("precondition_failed", f64::NAN),
            };

            let base = random_config(&mut rng, pair_max, 0.2)?;
            let c = rand::Rng::gen_range(&mut rng, 0.0..1.0);
            let moved = base.shifted(c).context("shift")?;
            let db = derivative_roots(&base).context("shift pair")?.flattened();
            let dm = derivative_roots(&moved).context("shift pair")?.flattened();
            let shift_error = db
                .iter()
                .zip(&dm)
                .map(|(a, b)| (b - a - c).abs())
                .fold(0.0, f64::max);

            let z = random_config(&mut rng, interlace_max, 0.2)?;
            let dz = derivative_roots(&z).context("interlacing")?;
            let interlacing_ok =
                dz.count() == z.count() && interlacing_violation(&z, &dz, t.root_tol).context("interlacing")?.is_none();
            Ok(ComparisonTrial {
                trial,
                n_half: x.n_half(),
                outcome,
                excess,
                shift_error,
                interlace_n_half: z.n_half(),
                interlacing_ok,
            })
        })
        .collect::<Result<Vec<_>>>()?;
    dir.write("comparison_trials.csv", |w| {
        writeln!(w, "trial,N,outcome,excess,shift_error,interlace_N,interlacing_ok")?;
        for r in &rows {
            writeln!(
                w,
                "{},{},{},{},{},{},{}",
                r.trial, r.n_half, r.outcome, r.excess, r.shift_error, r.interlace_n_half, r.interlacing_ok
            )?;
        }
        Ok(())
    })?;
    let violations = rows.iter().filter(|r| !(r.excess <= t.root_tol)).count();
    let max_excess = rows.iter().map(|r| r.excess).fold(f64::NEG_INFINITY, f64::max);
    let shift = rows.iter().map(|r| r.shift_error).fold(0.0, f64::max);
    let interlace_bad = rows.iter().filter(|r| !r.interlacing_ok).count();
    let checks = vec![
        Check::holds("comparison violations", violations == 0, violations as f64, "== 0"),
        Check::at_most("rotation pairs |y' - x' - c|", shift, t.shift_tol),
        Check::holds("interlacing/count violations", interlace_bad == 0, interlace_bad as f64, "== 0"),
    ];
    Ok(Outcome {
        checks,
        results: json!({
            "trials": trials,
            "max_N_pairs": pair_max,
            "max_N_interlacing": interlace_max,
            "comparison_violations": violations,
            "max_excess": max_excess,
            "max_shift_error": shift,
            "interlacing_violations": interlace_bad,
        }),
    })
}

fn dirac(spec: &ExperimentSpec, dir: &mut RunDir) -> Result<Outcome> {
    let init = spec.initial_or(InitialData::Dirac { theta: 0.0 });
    let InitialData::Dirac { theta } = init else {
        return Err(LabError::Config("dirac needs a dirac initial measure".into()));
    };
    let ns = spec.n_list_or(&[32]);
    let runs = ns
        .par_iter()
        .map(|&n| {
            let traj = evolve(&init.particles(n)?, 2 * n).context(format!("dirac N = {n}"))?;
            let mults: Vec<u32> = traj.configs.iter().map(|c| c.multiplicity_at(theta)).collect();
            Ok((n, traj, mults))
        })
        .collect::<Result<Vec<_>>>()?;
    let mut checks = Vec::new();
    let mut table = Vec::new();
    for (n, traj, mults) in &runs {
        let two_n = 2 * n;
        dir.write(&format!("dirac_N{n}.csv"), |w| {
            writeln!(w, "k,t,multiplicity,mass,expected_mass")?;
            for (k, m) in mults.iter().enumerate() {
                writeln!(
                    w,
                    "{k},{},{m},{},{}",
                    traj.time(k),
                    f64::from(*m) / two_n as f64,
                    (two_n - k) as f64 / two_n as f64
                )?;
            }
            Ok(())
        })?;
        let mismatches = mults
            .iter()
            .enumerate()
            .filter(|(k, m)| **m as usize != two_n - k)
            .count();
        checks.push(Check::holds(
            &format!("N={n} mass at the atom equals (2N-k)/(2N)"),
            mismatches == 0,
            mismatches as f64,
            "== 0 mismatching steps",
        ));
        table.push(json!({ "N": n, "multiplicities": mults }));
    }
    Ok(Outcome {
        checks,
        results: json!({ "theta": theta, "runs": table }),
    })
}

fn vj_scaling(spec: &ExperimentSpec, dir: &mut RunDir) -> Result<Outcome> {
    let init = spec.initial_or(InitialData::Sine { amplitude: 0.05 });
    let ns = spec.n_list_or(&[64, 128, 256, 512, 1024]);
    let psi = init.density(spec.grid_size.unwrap_or(256))?;
    let mut diags = ns
        .par_iter()
        .map(|&n| gap_diagnostics(&init.particles(n)?, &psi).context(format!("gap diagnostics N = {n}")))
        .collect::<Result<Vec<_>>>()?;
    diags.sort_by_key(|d| d.n_half);
    dir.write("vj.csv", |w| {
        writeln!(w, "N,max_abs_V,spacing_ratio_min,spacing_ratio_max,scaled_step_min,scaled_step_max,K")?;
        for d in &diags {
            writeln!(
                w,
                "{},{},{},{},{},{},{}",
                d.n_half,
                d.max_abs_error_term,
                d.spacing_ratio_min,
                d.spacing_ratio_max,
                d.scaled_step_min,
                d.scaled_step_max,
                d.displacement_constant()
            )?;
        }
        Ok(())
    })?;
    let xs: Vec<f64> = diags.iter().map(|d| d.n_half as f64).collect();
    let ys: Vec<f64> = diags.iter().map(|d| d.max_abs_error_term).collect();
    let slope = if diags.len() >= 2 { loglog_slope(&xs, &ys) } else { f64::NAN };
    let t = &spec.thresholds;
    Ok(Outcome {
        checks: vec![Check::within("log-log slope of max|V_j| vs N", slope, t.vj_slope_min, t.vj_slope_max)],
        results: json!({
            "slope": slope,
            "rows": diags.iter().map(|d| json!({
                "N": d.n_half,
                "max_abs_V": d.max_abs_error_term,
                "K": d.displacement_constant(),
            })).collect::<Vec<_>>(),
        }),
    })
}

fn speed_check(spec: &ExperimentSpec, dir: &mut RunDir) -> Result<Outcome> {
    let init = spec.initial_or(InitialData::Sine { amplitude: 0.05 });
    let mut ns = spec.n_list_or(&[64, 256]);
    ns.sort_unstable();
    let runs = ns
        .par_iter()
        .map(|&n| speed_vs_heuristic(&init.particles(n)?).context(format!("speed residuals N = {n}")))
        .collect::<Result<Vec<_>>>()?;
    dir.write("speed.csv", |w| {
        writeln!(w, "N,mean_residual,max_residual,excluded")?;
        for r in &runs {
            let show = |v: Option<f64>| v.map_or(String::new(), |v| v.to_string());
            writeln!(w, "{},{},{},{}", r.n_half, show(r.mean), show(r.max), r.excluded)?;
        }
        Ok(())
    })?;
    let first = runs.first().and_then(|r| r.mean).unwrap_or(f64::NAN);
    let last = runs.last().and_then(|r| r.mean).unwrap_or(f64::NAN);
    let finite = first.is_finite() && last.is_finite();
    let checks = vec![Check::holds(
        "mean residual at largest N below smallest N",
        finite && runs.len() >= 2 && last < first,
        last / first,
        "ratio < 1, both finite",
    )];
    Ok(Outcome {
        checks,
        results: json!({
            "rows": runs.iter().map(|r| json!({
                "N": r.n_half, "mean": r.mean, "max": r.max, "excluded": r.excluded,
            })).collect::<Vec<_>>(),
        }),
    })
}

fn stability_check(spec: &ExperimentSpec, dir: &mut RunDir) -> Result<Outcome> {
    let seed = spec.seed.expect("validated");
    let grid = spec.grid_size.unwrap_or(128);
    let probe = spec.scheme_config(grid, 0.0);
    let t_final = match (spec.steps, spec.final_time) {
        (Some(steps), _) => steps as f64 * cfl_dt(&probe),
        (None, Some(t)) => t,
        (None, None) => 1000.0 * cfl_dt(&probe),
    };
    let config = spec.scheme_config(grid, t_final);
    let scheme = Scheme::new(config).context("scheme")?;
    let m = config.m;
    let eps = spec.epsilon.unwrap_or(1e-3);
    let trials = spec.trials.unwrap_or(20);
    let ordered = spec.ordered_pairs.unwrap_or(200);
    let t = &spec.thresholds;

    let perturbed = (0..trials)
        .into_par_iter()
        .map(|i| {
            let (f, g) = perturbed_field_pair(&mut trial_rng(seed, i as u64), grid, m, eps)?;
            scheme.solve_pair(&f, &g).context(format!("perturbed pair {i}"))
        })
        .collect::<Result<Vec<_>>>()?;
    let pairs = (0..ordered)
        .into_par_iter()
        .map(|i| {
            // separate stream range from the perturbed pairs
            let (f, g) = ordered_field_pair(&mut trial_rng(seed, (1 << 32) + i as u64), grid, m)?;
            scheme.solve_pair(&f, &g).context(format!("ordered pair {i}"))
        })
        .collect::<Result<Vec<_>>>()?;

    dir.write("stability_pairs.csv", |w| {
        writeln!(w, "trial,epsilon,initial_distance,max_distance,min_slope,max_dF_over_dt")?;
        for (i, r) in perturbed.iter().enumerate() {
            writeln!(w, "{i},{eps},{},{},{},{}", r.initial_distance, r.max_distance, r.min_slope, r.max_df_over_dt)?;
        }
        Ok(())
    })?;
    dir.write("ordered_pairs.csv", |w| {
        writeln!(w, "trial,initial_excess,max_excess,min_slope,max_dF_over_dt")?;
        for (i, r) in pairs.iter().enumerate() {
            writeln!(w, "{i},{},{},{},{}", r.initial_excess, r.max_excess, r.min_slope, r.max_df_over_dt)?;
        }
        Ok(())
    })?;
    let all = perturbed.iter().chain(&pairs);
    let growth = perturbed
        .iter()
        .map(|r| r.max_distance - r.initial_distance)
        .fold(f64::NEG_INFINITY, f64::max);
    let excess = pairs.iter().map(|r| r.max_excess).fold(f64::NEG_INFINITY, f64::max);
    let min_slope = all.clone().map(|r| r.min_slope).fold(f64::INFINITY, f64::min);
    let speed = all.map(|r| r.max_df_over_dt).fold(0.0, f64::max);
    let steps = pairs.first().or(perturbed.first()).map_or(0, |r| r.steps);
    let checks = vec![
        Check::at_most("perturbed pairs: distance growth", growth, t.stability_tol),
        Check::at_most("ordered pairs: max(F - G)", excess, t.ordering_tol),
        Check::at_least("min slope over all runs", min_slope, m - t.slope_floor_tol),
        Check::at_most("max |dF|/dt over all runs", speed, 1.0),
    ];
    Ok(Outcome {
        checks,
        results: json!({
            "M": grid,
            "m": m,
            "T": t_final,
            "dt": scheme.cfl_dt(),
            "steps": steps,
            "epsilon": eps,
            "perturbed_pairs": trials,
            "ordered_pairs": ordered,
            "max_distance_growth": growth,
            "max_ordering_excess": excess,
            "min_slope": min_slope,
            "max_dF_over_dt": speed,
        }),
    })
}
