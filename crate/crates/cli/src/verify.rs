//! Property suites behind `volsurf verify`.

use clap::ValueEnum;
use rand::{Rng, SeedableRng};
use rand_chacha::ChaCha8Rng;

use volsurf::diagnostics::{
    audit_ckp, audit_degenerate_coupling, check_entropy_dissipation_identity, dense_oracle, fit_rate, fmt_f64,
    record_with_states, DEFAULT_SKIP_FRACTION,
};
use volsurf::monotone::{check_sandwich, comparison_experiment, iterate_monotone};
use volsurf::{stepper, GridGeometry, State, StepConfig};

use crate::commands::run_series;
use crate::config::{Problem, RunConfig};
use crate::error::CliError;
use crate::output::{ensure_dir, write_manifest, write_report};

#[derive(Debug, Clone, Copy, PartialEq, Eq, ValueEnum)]
pub enum Suite {
    Conservation,
    Entropy,
    Ckp,
    Sandwich,
    Comparison,
    Oracle,
    Degenerate,
    LinearCase,
}

impl Suite {
    pub fn name(self) -> &'static str {
        match self {
            Suite::Conservation => "conservation",
            Suite::Entropy => "entropy",
            Suite::Ckp => "ckp",
            Suite::Sandwich => "sandwich",
            Suite::Comparison => "comparison",
            Suite::Oracle => "oracle",
            Suite::Degenerate => "degenerate",
            Suite::LinearCase => "linear-case",
        }
    }
}

/// Outcome of one suite: a list of named checks plus informational values.
pub struct Verdict {
    pub checks: Vec<(String, bool)>,
    pub values: Vec<(String, String)>,
}

impl Verdict {
    fn new() -> Self {
        Verdict { checks: Vec::new(), values: Vec::new() }
    }

    fn check(&mut self, name: &str, ok: bool) {
        self.checks.push((name.to_string(), ok));
    }

    fn value(&mut self, name: &str, x: f64) {
        self.values.push((name.to_string(), fmt_f64(x)));
    }

    pub fn passed(&self) -> bool {
        self.checks.iter().all(|(_, ok)| *ok)
    }
}

const ENTROPY_SLACK: f64 = 1e-9;
const DRIFT_TOL: f64 = 1e-8;
const COMPARISON_TRIALS: usize = 20;

pub fn verify(cfg: &RunConfig, suite: Suite) -> Result<(), CliError> {
    let p = cfg.problem()?;
    let verdict = match suite {
        Suite::Conservation => conservation(cfg, &p)?,
        Suite::Entropy => entropy(cfg, &p)?,
        Suite::Ckp => ckp(cfg, &p)?,
        Suite::Sandwich => sandwich(cfg, &p)?,
        Suite::Comparison => comparison(cfg, &p)?,
        Suite::Oracle => oracle(cfg, &p)?,
        Suite::Degenerate => degenerate(cfg, &p)?,
        Suite::LinearCase => linear_case(cfg)?,
    };

    let mut pairs: Vec<(&str, String)> = vec![
        ("suite", suite.name().to_string()),
        ("passed", verdict.passed().to_string()),
        ("seed", cfg.seed.to_string()),
    ];
    for (name, ok) in &verdict.checks {
        pairs.push((name, if *ok { "pass" } else { "fail" }.to_string()));
    }
    for (name, v) in &verdict.values {
        pairs.push((name, v.clone()));
    }
    ensure_dir("verify", &cfg.output_dir)?;
    let path = cfg.output_dir.join(format!("verdict_{}.txt", suite.name()));
    write_report("verify", &path, &pairs)?;
    write_manifest(&cfg.output_dir.join("manifest.json"), cfg, &format!("verify {}", suite.name()))?;
    for (k, v) in &pairs {
        println!("{k}={v}");
    }
    if verdict.passed() {
        Ok(())
    } else {
        let failed: Vec<&str> = verdict.checks.iter().filter(|c| !c.1).map(|c| c.0.as_str()).collect();
        Err(CliError::Invariant(format!("suite {} failed: {}", suite.name(), failed.join(", "))))
    }
}

fn conservation(cfg: &RunConfig, p: &Problem) -> Result<Verdict, CliError> {
    let (series, _) = run_series(p, &cfg.initial_state(&p.geom)?, cfg.t_end)?;
    let mut v = Verdict::new();
    let drift = series.mass_drift();
    v.check("mass_drift_within_1e-8", drift <= DRIFT_TOL);
    v.value("mass_drift", drift);
    Ok(v)
}

fn entropy(cfg: &RunConfig, p: &Problem) -> Result<Verdict, CliError> {
    let state0 = cfg.initial_state(&p.geom)?;
    let (coarse, _) = run_series(p, &state0, cfg.t_end)?;
    let half = Problem { geom: p.geom.clone(), params: p.params, step: StepConfig { dt: 0.5 * p.step.dt, ..p.step } };
    let (fine, _) = run_series(&half, &state0, cfg.t_end)?;
    let increase = coarse.max_entropy_increase().max(fine.max_entropy_increase());
    let r_coarse = check_entropy_dissipation_identity(&coarse).map_err(CliError::stage("identity check"))?;
    let r_fine = check_entropy_dissipation_identity(&fine).map_err(CliError::stage("identity check"))?;
    let ratio = r_coarse / r_fine;
    let mut v = Verdict::new();
    v.check("entropy_nonincreasing", increase <= ENTROPY_SLACK);
    v.check("identity_residual_halves", ratio >= 1.8);
    v.value("max_entropy_increase", increase);
    v.value("identity_residual_dt", r_coarse);
    v.value("identity_residual_half_dt", r_fine);
    v.value("identity_residual_ratio", ratio);
    Ok(v)
}

fn ckp(cfg: &RunConfig, p: &Problem) -> Result<Verdict, CliError> {
    let (series, _) = run_series(p, &cfg.initial_state(&p.geom)?, cfg.t_end)?;
    let margin = audit_ckp(&series, &p.params).map_err(CliError::stage("CKP audit"))?;
    let mut v = Verdict::new();
    v.check("ckp_margin_nonnegative", margin >= -1e-9 * (1.0 + series.e_eq.abs()));
    v.value("ckp_margin", margin);
    Ok(v)
}

fn sandwich(cfg: &RunConfig, p: &Problem) -> Result<Verdict, CliError> {
    let state0 = cfg.initial_state(&p.geom)?;
    let report = iterate_monotone(&state0, &p.geom, &p.params, &p.step, cfg.t_end, &cfg.monotone_config())
        .map_err(CliError::stage("monotone iteration"))?;
    let verdict = check_sandwich(&report);
    let scale = report.upper_bound.0.max(report.upper_bound.1).max(1.0);
    let gaps_ok = report.gaps.windows(2).all(|w| w[1] <= w[0] + 1e-9 * scale);
    let mut v = Verdict::new();
    v.check("converged", report.converged);
    v.check("sandwich_ordering", verdict.passed);
    v.check("gaps_nonincreasing", gaps_ok);
    v.values.push(("k_final".into(), report.k_final.to_string()));
    v.value("final_gap", report.gaps[report.k_final]);
    v.value("worst_violation", verdict.worst.map_or(0.0, |w| w.amount));
    Ok(v)
}

fn random_state(rng: &mut ChaCha8Rng, geom: &GridGeometry, zero_prob: f64) -> State {
    let draw = |rng: &mut ChaCha8Rng| if rng.gen::<f64>() < zero_prob { 0.0 } else { rng.gen_range(0.0..2.0) };
    let u = (0..geom.n_omega()).map(|_| draw(rng)).collect();
    let v = (0..geom.n_gamma()).map(|_| draw(rng)).collect();
    State::new(geom, u, v, 0.0).expect("shapes match the geometry")
}

fn comparison(cfg: &RunConfig, p: &Problem) -> Result<Verdict, CliError> {
    let mut rng = ChaCha8Rng::seed_from_u64(cfg.seed);
    let (mut worst, mut min_value) = (f64::NEG_INFINITY, f64::INFINITY);
    let (mut ordered, mut nonnegative) = (true, true);
    for _ in 0..COMPARISON_TRIALS {
        let low = random_state(&mut rng, &p.geom, 0.2);
        let mut high = low.clone();
        for x in high.u.iter_mut().chain(high.v.iter_mut()) {
            if rng.gen_bool(0.7) {
                *x += rng.gen_range(0.0..1.0);
            }
        }
        let verdict = comparison_experiment(&low, &high, &p.geom, &p.params, &p.step, cfg.t_end)
            .map_err(CliError::stage("comparison run"))?;
        worst = worst.max(verdict.worst_violation);
        ordered &= verdict.ordered;

        let start = random_state(&mut rng, &p.geom, 0.3);
        let mut min_seen = f64::INFINITY;
        stepper::integrate(&p.geom, &p.params, &start, cfg.t_end, &p.step, |s| {
            min_seen = s.u.iter().chain(&s.v).fold(min_seen, |m, x| m.min(*x));
            Ok(())
        })
        .map_err(CliError::stage("nonnegativity run"))?;
        min_value = min_value.min(min_seen);
        nonnegative &= min_seen >= 0.0;
    }
    let mut v = Verdict::new();
    v.check("ordering_preserved", ordered);
    v.check("nonnegativity_preserved", nonnegative);
    v.values.push(("trials".into(), COMPARISON_TRIALS.to_string()));
    v.value("worst_ordering_defect", worst);
    v.value("min_value", min_value);
    Ok(v)
}

/// Three-cell interval with the configured parameters and initial data.
fn oracle(cfg: &RunConfig, p: &Problem) -> Result<Verdict, CliError> {
    let geom = GridGeometry::build_interval(3, 1.0).map_err(CliError::stage("oracle geometry"))?;
    let state0 = cfg.initial_state(&geom)?;
    let (t_end, checkpoints) = (0.1, 10);
    let reference =
        dense_oracle(&state0, &geom, &p.params, t_end, checkpoints).map_err(CliError::stage("dense oracle"))?;
    let error_at = |dt: f64| -> Result<f64, CliError> {
        let mut traj = vec![state0.clone()];
        stepper::integrate(&geom, &p.params, &state0, t_end, &StepConfig { dt, ..p.step }, |s| {
            traj.push(s.clone());
            Ok(())
        })
        .map_err(CliError::stage("oracle comparison run"))?;
        let stride = (traj.len() - 1) / checkpoints;
        Ok(reference.iter().enumerate().map(|(c, r)| traj[c * stride].sup_distance(r)).fold(0.0, f64::max))
    };
    let (e1, e2) = (error_at(1e-3)?, error_at(5e-4)?);
    let ratio = e1 / e2;
    let mut v = Verdict::new();
    v.check("error_within_1e-2", e1 <= 1e-2);
    v.check("first_order_ratio", (1.7..=2.3).contains(&ratio));
    v.value("error_dt_1e-3", e1);
    v.value("error_dt_5e-4", e2);
    v.value("error_ratio", ratio);
    Ok(v)
}

fn degenerate(cfg: &RunConfig, p: &Problem) -> Result<Verdict, CliError> {
    if p.params.delta_v != 0.0 {
        return Err(CliError::Usage("suite degenerate needs params.delta_v = 0".into()));
    }
    let state0 = cfg.initial_state(&p.geom)?;
    if state0.v.iter().all(|x| *x == state0.v[0]) {
        return Err(CliError::Usage("suite degenerate needs non-constant initial v".into()));
    }
    let (_, states) = record_with_states(&p.geom, &p.params, &state0, cfg.t_end, &p.step)
        .map_err(CliError::stage("integration"))?;
    let ratio = audit_degenerate_coupling(&states, &p.geom, &p.params).map_err(CliError::stage("coupling audit"))?;
    let mut v = Verdict::new();
    v.check("coupling_ratio_positive", ratio > 0.0 && ratio.is_finite());
    v.value("min_coupling_ratio", ratio);
    Ok(v)
}

/// Runs the configured geometry and data with `alpha = beta = 1` and no
/// surface diffusion, and checks exponential decay of the relative entropy.
fn linear_case(cfg: &RunConfig) -> Result<Verdict, CliError> {
    let mut lin = cfg.clone();
    lin.params.alpha = 1.0;
    lin.params.beta = 1.0;
    lin.params.delta_v = 0.0;
    let p = lin.problem()?;
    let (series, _) = run_series(&p, &lin.initial_state(&p.geom)?, lin.t_end)?;
    let fit = fit_rate(&series, DEFAULT_SKIP_FRACTION).map_err(CliError::stage("rate fit"))?;
    let first = series.records[0].e_rel;
    let last = series.records[series.records.len() - 1].e_rel;
    let target = 1e-6 * first;
    let crossing = (fit.log_intercept - target.ln()) / fit.c0_emp;
    let mut v = Verdict::new();
    v.check("positive_rate", fit.c0_emp > 0.0);
    v.check("log_linear_fit", fit.r_squared >= 0.99);
    v.check("decays_by_1e-6", last <= target || (fit.c0_emp > 0.0 && crossing.is_finite()));
    v.value("C0_emp", fit.c0_emp);
    v.value("r_squared", fit.r_squared);
    v.value("eed_min", fit.eed_min);
    v.value("E_rel_initial", first);
    v.value("E_rel_final", last);
    v.value("crossing_time", crossing);
    Ok(v)
}
