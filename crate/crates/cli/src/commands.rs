//! `simulate`, `equilibrium`, `monotone` and `sweep`.

use std::io::Write;
use std::path::Path;

use rayon::prelude::*;
use serde::Deserialize;

use volsurf::diagnostics::{
    fit_rate, fmt_f64, rate_fit_key_values, write_series_csv, Recorder, RateFit, TraceSeries, DEFAULT_SKIP_FRACTION,
};
use volsurf::model::{self, ckp_constant, solve_equilibrium};
use volsurf::monotone::{check_sandwich, iterate_monotone, IterationReport};
use volsurf::{stepper, State};

use crate::config::{ParamsSpec, Problem, RunConfig};
use crate::error::CliError;
use crate::output::{ensure_dir, write_file, write_manifest, write_report, write_state_csv};

/// Integrates and records the diagnostics series; also returns the final state.
pub fn run_series(p: &Problem, state0: &State, t_end: f64) -> Result<(TraceSeries, State), CliError> {
    let m = model::mass(state0, &p.geom, &p.params).map_err(CliError::stage("mass"))?;
    let eq = solve_equilibrium(&p.params, &p.geom, m).map_err(CliError::stage("equilibrium"))?;
    let mut rec = Recorder::new(&p.geom, &p.params, eq).map_err(CliError::stage("diagnostics"))?;
    rec.observe(state0).map_err(CliError::stage("diagnostics"))?;
    let last = stepper::integrate(&p.geom, &p.params, state0, t_end, &p.step, |s| rec.observe(s))
        .map_err(CliError::stage("integration"))?;
    Ok((rec.finish().0, last))
}

fn series_summary(series: &TraceSeries, fit: &Result<RateFit, volsurf::Error>) -> Vec<(&'static str, String)> {
    let first = series.records[0];
    let last = series.records[series.records.len() - 1];
    let mut kv = vec![
        ("t_end", fmt_f64(last.t)),
        ("steps", (series.records.len() - 1).to_string()),
        ("mass", fmt_f64(first.mass)),
        ("mass_drift", fmt_f64(series.mass_drift())),
        ("max_entropy_increase", fmt_f64(series.max_entropy_increase())),
        ("u_inf", fmt_f64(series.equilibrium.u_inf)),
        ("v_inf", fmt_f64(series.equilibrium.v_inf)),
        ("E_rel_initial", fmt_f64(first.e_rel)),
        ("E_rel_final", fmt_f64(last.e_rel)),
    ];
    match fit {
        Ok(f) => kv.extend(rate_fit_key_values(f)),
        Err(e) => kv.push(("rate_fit", format!("unavailable: {e}"))),
    }
    kv
}

/// Writes `series.csv`, `final_state.csv`, `summary.txt` and `manifest.json`.
fn simulate_into(cfg: &RunConfig, dir: &Path) -> Result<(TraceSeries, Result<RateFit, volsurf::Error>), CliError> {
    let p = cfg.problem()?;
    let state0 = cfg.initial_state(&p.geom)?;
    let (series, last) = run_series(&p, &state0, cfg.t_end)?;
    let fit = fit_rate(&series, DEFAULT_SKIP_FRACTION);
    ensure_dir("simulate", dir)?;
    write_file("simulate", &dir.join("series.csv"), |out| write_series_csv(&series, out))?;
    write_file("simulate", &dir.join("final_state.csv"), |out| write_state_csv(&last, &p.geom, out))?;
    write_report("simulate", &dir.join("summary.txt"), &series_summary(&series, &fit))?;
    write_manifest(&dir.join("manifest.json"), cfg, "simulate")?;
    Ok((series, fit))
}

pub fn simulate(cfg: &RunConfig) -> Result<(), CliError> {
    let (series, _) = simulate_into(cfg, &cfg.output_dir)?;
    println!(
        "simulate: {} steps, mass drift {:.3e}, wrote {}",
        series.records.len() - 1,
        series.mass_drift(),
        cfg.output_dir.display()
    );
    Ok(())
}

pub fn equilibrium(cfg: &RunConfig) -> Result<(), CliError> {
    let p = cfg.problem()?;
    let state0 = cfg.initial_state(&p.geom)?;
    let m = model::mass(&state0, &p.geom, &p.params).map_err(CliError::stage("mass"))?;
    let eq = solve_equilibrium(&p.params, &p.geom, m).map_err(CliError::stage("equilibrium"))?;
    let c = ckp_constant(&p.params, m).map_err(CliError::stage("equilibrium"))?;
    let pairs = [
        ("u_inf", fmt_f64(eq.u_inf)),
        ("v_inf", fmt_f64(eq.v_inf)),
        ("M", fmt_f64(eq.mass)),
        ("C_CKP", fmt_f64(c)),
    ];
    let mut stdout = std::io::stdout().lock();
    for (k, v) in pairs {
        let _ = writeln!(stdout, "{k}={v}");
    }
    Ok(())
}

fn monotone_files(dir: &Path, report: &IterationReport) -> Result<(), CliError> {
    write_file("monotone", &dir.join("monotone_gaps.csv"), |out| {
        writeln!(out, "k,gap")?;
        for (k, g) in report.gaps.iter().enumerate() {
            writeln!(out, "{k},{}", fmt_f64(*g))?;
        }
        Ok(())
    })?;
    write_file("monotone", &dir.join("monotone_trajectory.csv"), |out| {
        writeln!(out, "t,field,cell,lower,upper")?;
        let (lower, upper) = (&report.lower[report.k_final], &report.upper[report.k_final]);
        for (lo, up) in lower.iter().zip(upper) {
            for (field, l, u) in [("u", &lo.u, &up.u), ("v", &lo.v, &up.v)] {
                for (i, (a, b)) in l.iter().zip(u.iter()).enumerate() {
                    writeln!(out, "{},{field},{i},{},{}", fmt_f64(lo.time), fmt_f64(*a), fmt_f64(*b))?;
                }
            }
        }
        Ok(())
    })?;
    let v = report.ordering_violations;
    write_report(
        "monotone",
        &dir.join("monotone_report.txt"),
        &[
            ("converged", report.converged.to_string()),
            ("k_final", report.k_final.to_string()),
            ("final_gap", fmt_f64(report.gaps[report.k_final])),
            ("outer_tol", fmt_f64(report.outer_tol)),
            ("upper_u", fmt_f64(report.upper_bound.0)),
            ("upper_v", fmt_f64(report.upper_bound.1)),
            ("lipschitz_u", fmt_f64(report.lipschitz.l_u)),
            ("lipschitz_v", fmt_f64(report.lipschitz.l_v)),
            ("violation_lower_increasing", fmt_f64(v[0])),
            ("violation_lower_below_upper", fmt_f64(v[1])),
            ("violation_upper_decreasing", fmt_f64(v[2])),
        ],
    )
}

pub fn monotone(cfg: &RunConfig) -> Result<(), CliError> {
    let p = cfg.problem()?;
    let state0 = cfg.initial_state(&p.geom)?;
    let report = iterate_monotone(&state0, &p.geom, &p.params, &p.step, cfg.t_end, &cfg.monotone_config())
        .map_err(CliError::stage("monotone iteration"))?;
    ensure_dir("monotone", &cfg.output_dir)?;
    monotone_files(&cfg.output_dir, &report)?;
    write_manifest(&cfg.output_dir.join("manifest.json"), cfg, "monotone")?;
    if !report.converged {
        return Err(CliError::Numerical {
            stage: "monotone iteration",
            source: volsurf::Error::NonConvergence { gaps: report.gaps },
        });
    }
    let verdict = check_sandwich(&report);
    if !verdict.passed {
        return Err(CliError::Invariant(format!("monotone ordering violated: {:?}", verdict.worst)));
    }
    println!(
        "monotone: converged after {} outer iterations, final gap {:.3e}",
        report.k_final,
        report.gaps[report.k_final]
    );
    Ok(())
}

/// Values to sweep; missing entries keep the template value.
#[derive(Debug, Default, Deserialize)]
#[serde(deny_unknown_fields)]
pub struct ParamGrid {
    pub alpha: Option<Vec<f64>>,
    pub beta: Option<Vec<f64>>,
    pub delta_u: Option<Vec<f64>>,
    pub delta_v: Option<Vec<f64>>,
    pub k_u: Option<Vec<f64>>,
    pub k_v: Option<Vec<f64>>,
}

impl ParamGrid {
    pub fn load(path: &Path) -> Result<Self, CliError> {
        let text = std::fs::read_to_string(path)
            .map_err(|e| CliError::Usage(format!("cannot read grid {}: {e}", path.display())))?;
        serde_json::from_str(&text).map_err(|e| CliError::Usage(format!("{}: {e}", path.display())))
    }

    /// Cartesian product over the listed values, last key varying fastest.
    pub fn expand(&self, template: &ParamsSpec) -> Result<Vec<ParamsSpec>, CliError> {
        type Setter = fn(&mut ParamsSpec, f64);
        let axes: [(&str, &Option<Vec<f64>>, Setter); 6] = [
            ("alpha", &self.alpha, |p, x| p.alpha = x),
            ("beta", &self.beta, |p, x| p.beta = x),
            ("delta_u", &self.delta_u, |p, x| p.delta_u = x),
            ("delta_v", &self.delta_v, |p, x| p.delta_v = x),
            ("k_u", &self.k_u, |p, x| p.k_u = x),
            ("k_v", &self.k_v, |p, x| p.k_v = x),
        ];
        let mut out = vec![*template];
        for (name, values, set) in axes {
            let Some(values) = values else { continue };
            if values.is_empty() {
                return Err(CliError::Usage(format!("grid field `{name}` is empty")));
            }
            out = out
                .iter()
                .flat_map(|p| {
                    values.iter().map(move |x| {
                        let mut q = *p;
                        set(&mut q, *x);
                        q
                    })
                })
                .collect();
        }
        Ok(out)
    }
}

pub const SWEEP_HEADER: &str = "run,alpha,beta,delta_u,delta_v,k_u,k_v,C0_emp,eed_min,r_squared,status";

pub fn sweep(cfg: &RunConfig, grid: &ParamGrid) -> Result<(), CliError> {
    let points = grid.expand(&cfg.params)?;
    ensure_dir("sweep", &cfg.output_dir)?;
    let outcomes: Vec<Result<RateFit, CliError>> = points
        .par_iter()
        .enumerate()
        .map(|(i, params)| {
            let mut run = cfg.clone();
            run.params = *params;
            run.output_dir = cfg.output_dir.join(format!("run_{i:04}"));
            let (_, fit) = simulate_into(&run, &run.output_dir)?;
            fit.map_err(CliError::stage("rate fit"))
        })
        .collect();

    write_file("sweep", &cfg.output_dir.join("sweep.csv"), |out| {
        writeln!(out, "{SWEEP_HEADER}")?;
        for (i, (p, outcome)) in points.iter().zip(&outcomes).enumerate() {
            let params = [p.alpha, p.beta, p.delta_u, p.delta_v, p.k_u, p.k_v].map(fmt_f64).join(",");
            let (fit_cols, status) = match outcome {
                Ok(f) => ([f.c0_emp, f.eed_min, f.r_squared].map(fmt_f64).join(","), "ok".to_string()),
                Err(e) => (",,".to_string(), e.to_string().replace([',', '\n'], ";")),
            };
            writeln!(out, "run_{i:04},{params},{fit_cols},{status}")?;
        }
        Ok(())
    })?;
    let failed = outcomes.iter().filter(|o| o.is_err()).count();
    println!("sweep: {} runs, {failed} failed, wrote {}", points.len(), cfg.output_dir.join("sweep.csv").display());
    match outcomes.into_iter().find_map(|o| o.err()) {
        Some(e) => Err(e),
        None => Ok(()),
    }
}

#[cfg(test)]
mod tests {
    use super::*;

    #[test]
    fn grid_expansion_is_a_cartesian_product() {
        let template = ParamsSpec { alpha: 1.0, beta: 1.0, delta_u: 1.0, delta_v: 0.0, k_u: 1.0, k_v: 1.0 };
        let grid = ParamGrid { alpha: Some(vec![1.0, 2.0]), delta_v: Some(vec![0.0, 0.5, 1.0]), ..Default::default() };
        let pts = grid.expand(&template).unwrap();
        assert_eq!(pts.len(), 6);
        assert_eq!((pts[1].alpha, pts[1].delta_v), (1.0, 0.5));
        assert_eq!((pts[3].alpha, pts[3].delta_v), (2.0, 0.0));
        assert!(pts.iter().all(|p| p.beta == 1.0));

        let empty = ParamGrid { beta: Some(vec![]), ..Default::default() };
        assert!(matches!(empty.expand(&template), Err(CliError::Usage(_))));
    }
}
