//! Measurements along trajectories: conservation, entropy and dissipation
//! series, the entropy/dissipation identity, exponential rate fits, the CKP
//! audit, the degenerate coupling audit and a dense explicit oracle.

use std::io::{self, Write};

use crate::error::{Error, Result};
use crate::grid::GridGeometry;
use crate::model::{
    self, ckp_constant, dissipation_parts, mass_unchecked, relative_entropy_unchecked, solve_equilibrium,
    DissipationOptions, Equilibrium, ModelParams, State,
};
use crate::stepper::{self, semi_discrete_rhs, StepConfig};

#[derive(Debug, Clone, Copy, PartialEq)]
pub struct TraceRecord {
    pub t: f64,
    pub mass: f64,
    pub entropy: f64,
    pub dissipation: f64,
    /// `E - E_eq`, evaluated as `i1 + i2` (plus a rate-imbalance term when
    /// `k_u != k_v`), which avoids cancellation near equilibrium.
    pub e_rel: f64,
    pub i1: f64,
    pub i2: f64,
    pub l1_u: f64,
    pub l1_v: f64,
}

#[derive(Debug, Clone, PartialEq)]
pub struct TraceSeries {
    pub equilibrium: Equilibrium,
    pub e_eq: f64,
    pub records: Vec<TraceRecord>,
}

impl TraceSeries {
    pub fn times(&self) -> Vec<f64> {
        self.records.iter().map(|r| r.t).collect()
    }

    /// Largest `|mass - M| / M` over the series.
    pub fn mass_drift(&self) -> f64 {
        let m = self.equilibrium.mass;
        self.records.iter().fold(0.0, |w: f64, r| w.max((r.mass - m).abs() / m))
    }

    /// Largest per-step increase of `E`; non-positive for a decaying series.
    pub fn max_entropy_increase(&self) -> f64 {
        self.records
            .windows(2)
            .fold(f64::NEG_INFINITY, |w, p| w.max(p[1].entropy - p[0].entropy))
    }
}

/// Observer that turns states into `TraceRecord`s.
pub struct Recorder<'a> {
    geom: &'a GridGeometry,
    params: &'a ModelParams,
    opts: DissipationOptions,
    keep_states: bool,
    series: TraceSeries,
    states: Vec<State>,
}

impl<'a> Recorder<'a> {
    pub fn new(geom: &'a GridGeometry, params: &'a ModelParams, equilibrium: Equilibrium) -> Result<Self> {
        let e_eq = model::entropy(&equilibrium.state(geom), geom)?;
        Ok(Recorder {
            geom,
            params,
            opts: DissipationOptions::default(),
            keep_states: false,
            series: TraceSeries { equilibrium, e_eq, records: Vec::new() },
            states: Vec::new(),
        })
    }

    pub fn with_dissipation_options(mut self, opts: DissipationOptions) -> Self {
        self.opts = opts;
        self
    }

    /// Also keep every observed state.
    pub fn keep_states(mut self) -> Self {
        self.keep_states = true;
        self
    }

    pub fn observe(&mut self, state: &State) -> Result<()> {
        let (g, p, eq) = (self.geom, self.params, &self.series.equilibrium);
        let (e_rel, parts) = relative_entropy_unchecked(state, g, p, eq);
        let l1 = |x: &[f64], w: &[crate::grid::Cell], c: f64| -> f64 {
            x.iter().zip(w).map(|(x, cell)| cell.measure * (x - c).abs()).sum()
        };
        self.series.records.push(TraceRecord {
            t: state.time,
            mass: mass_unchecked(state, g, p),
            entropy: model::entropy(state, g)?,
            dissipation: dissipation_parts(state, g, p, &self.opts)?.total(),
            e_rel,
            i1: parts.i1,
            i2: parts.i2,
            l1_u: l1(&state.u, &g.omega_cells, eq.u_inf),
            l1_v: l1(&state.v, &g.gamma_cells, eq.v_inf),
        });
        if self.keep_states {
            self.states.push(state.clone());
        }
        Ok(())
    }

    pub fn finish(self) -> (TraceSeries, Vec<State>) {
        (self.series, self.states)
    }
}

/// Integrates from `state0` to `t_end` and records the initial state and
/// every accepted step. The equilibrium is the one carrying `state0`'s mass.
pub fn record(
    geom: &GridGeometry,
    params: &ModelParams,
    state0: &State,
    t_end: f64,
    cfg: &StepConfig,
) -> Result<TraceSeries> {
    Ok(record_inner(geom, params, state0, t_end, cfg, false)?.0)
}

/// As `record`, also returning the trajectory.
pub fn record_with_states(
    geom: &GridGeometry,
    params: &ModelParams,
    state0: &State,
    t_end: f64,
    cfg: &StepConfig,
) -> Result<(TraceSeries, Vec<State>)> {
    record_inner(geom, params, state0, t_end, cfg, true)
}

fn record_inner(
    geom: &GridGeometry,
    params: &ModelParams,
    state0: &State,
    t_end: f64,
    cfg: &StepConfig,
    keep: bool,
) -> Result<(TraceSeries, Vec<State>)> {
    let m = model::mass(state0, geom, params)?;
    let eq = solve_equilibrium(params, geom, m)?;
    let mut rec = Recorder::new(geom, params, eq)?;
    if keep {
        rec = rec.keep_states();
    }
    rec.observe(state0)?;
    stepper::integrate(geom, params, state0, t_end, cfg, |s| rec.observe(s))?;
    Ok(rec.finish())
}

/// Largest `|(E_{n+1} - E_{n-1}) / (t_{n+1} - t_{n-1}) + D_n| / max(1, D_n)`
/// over the interior records.
pub fn check_entropy_dissipation_identity(series: &TraceSeries) -> Result<f64> {
    identity_residual_after(series, f64::NEG_INFINITY)
}

/// As `check_entropy_dissipation_identity`, restricted to interior records
/// with `t >= t_min`. Useful to look past the initial layer of rough data,
/// where the residual does not shrink with the step.
pub fn identity_residual_after(series: &TraceSeries, t_min: f64) -> Result<f64> {
    let r = &series.records;
    if r.len() < 3 {
        return Err(Error::invalid(format!("identity check needs at least 3 records, got {}", r.len())));
    }
    Ok(r.windows(3)
        .filter(|w| w[1].t >= t_min)
        .map(|w| {
            // Differences of E_rel carry no absolute-entropy roundoff.
            let de = (w[2].e_rel - w[0].e_rel) / (w[2].t - w[0].t);
            (de + w[1].dissipation).abs() / w[1].dissipation.abs().max(1.0)
        })
        .fold(0.0, f64::max))
}

#[derive(Debug, Clone, Copy, PartialEq)]
pub struct RateFit {
    pub c0_emp: f64,
    pub r_squared: f64,
    pub window: (f64, f64),
    /// Minimum of `D / E_rel` over the window.
    pub eed_min: f64,
    pub points: usize,
    /// Fitted `log E_rel` at `t = 0`.
    pub log_intercept: f64,
}

impl RateFit {
    /// Fitted `E_rel` at time `t`.
    pub fn predict(&self, t: f64) -> f64 {
        (self.log_intercept - self.c0_emp * t).exp()
    }
}

pub const DEFAULT_SKIP_FRACTION: f64 = 0.3;

/// Least-squares fit of `log E_rel` against `t`.
///
/// Records whose `E_rel` is at roundoff level
/// (`<= 10 eps max(1, |E_eq|)`) are dropped first; the leading
/// `skip_fraction` of the remaining records is then skipped.
pub fn fit_rate(series: &TraceSeries, skip_fraction: f64) -> Result<RateFit> {
    if !(0.0..1.0).contains(&skip_fraction) {
        return Err(Error::invalid(format!("skip_fraction must lie in [0, 1), got {skip_fraction}")));
    }
    let threshold = 10.0 * f64::EPSILON * series.e_eq.abs().max(1.0);
    let usable: Vec<&TraceRecord> = series.records.iter().filter(|r| r.e_rel > threshold).collect();
    let skip = (skip_fraction * usable.len() as f64).floor() as usize;
    let window = &usable[skip.min(usable.len())..];
    if window.len() < 2 {
        return Err(Error::invalid(format!(
            "rate fit window has {} usable records, need at least 2",
            window.len()
        )));
    }
    let n = window.len() as f64;
    let (mt, my) = window.iter().fold((0.0, 0.0), |(a, b), r| (a + r.t / n, b + r.e_rel.ln() / n));
    let (mut sxx, mut sxy, mut syy) = (0.0, 0.0, 0.0);
    for r in window {
        let (dx, dy) = (r.t - mt, r.e_rel.ln() - my);
        sxx += dx * dx;
        sxy += dx * dy;
        syy += dy * dy;
    }
    if sxx == 0.0 {
        return Err(Error::invalid("rate fit window spans zero time"));
    }
    let slope = sxy / sxx;
    let r_squared = if syy == 0.0 { 1.0 } else { (sxy * sxy / (sxx * syy)).clamp(0.0, 1.0) };
    let eed_min = window.iter().map(|r| r.dissipation / r.e_rel).fold(f64::INFINITY, f64::min);
    Ok(RateFit {
        c0_emp: -slope,
        r_squared,
        window: (window[0].t, window[window.len() - 1].t),
        eed_min,
        points: window.len(),
        log_intercept: my - slope * mt,
    })
}

/// `min_n [E_rel - C (L1_u^2 + L1_v^2)]` with `C = min(alpha, beta) / (8 M)`.
pub fn audit_ckp(series: &TraceSeries, params: &ModelParams) -> Result<f64> {
    let c = ckp_constant(params, series.equilibrium.mass)?;
    Ok(series
        .records
        .iter()
        .map(|r| r.e_rel - c * (r.l1_u * r.l1_u + r.l1_v * r.l1_v))
        .fold(f64::INFINITY, f64::min))
}

/// Terms of the degenerate coupling inequality for `U = sqrt(u)`,
/// `V = sqrt(v)`.
#[derive(Debug, Clone, Copy, PartialEq)]
pub struct CouplingTerms {
    /// `|| trace(U)^alpha - V^beta ||^2_Gamma`
    pub reaction: f64,
    /// `|| grad U ||^2_Omega`
    pub gradient: f64,
    /// `|| trace(U) - mean_Omega(U) ||^2_Gamma`
    pub trace_fluctuation: f64,
    /// `|| V - mean_Gamma(V) ||^2_Gamma`
    pub surface_fluctuation: f64,
}

impl CouplingTerms {
    pub fn numerator(&self) -> f64 {
        self.reaction + self.gradient + self.trace_fluctuation
    }
}

pub fn coupling_terms(state: &State, geom: &GridGeometry, params: &ModelParams) -> Result<CouplingTerms> {
    state.check_shape(geom)?;
    let big_u: Vec<f64> = state.u.iter().map(|x| x.max(0.0).sqrt()).collect();
    let big_v: Vec<f64> = state.v.iter().map(|x| x.max(0.0).sqrt()).collect();
    let u_mean = crate::grid::weighted_sum(&geom.omega_weights(), &big_u) / geom.omega_measure;
    let v_mean = crate::grid::weighted_sum(&geom.gamma_weights(), &big_v) / geom.gamma_measure;
    let mut terms = CouplingTerms {
        reaction: 0.0,
        gradient: geom
            .bulk_faces
            .iter()
            .map(|f| f.transmissibility * (big_u[f.a] - big_u[f.b]).powi(2))
            .sum(),
        trace_fluctuation: 0.0,
        surface_fluctuation: 0.0,
    };
    for ((link, cell), &vv) in geom.trace_map.iter().zip(&geom.gamma_cells).zip(&big_v) {
        let ut = big_u[link.bulk_cell];
        terms.reaction += cell.measure * (ut.powf(params.alpha) - vv.powf(params.beta)).powi(2);
        terms.trace_fluctuation += cell.measure * (ut - u_mean).powi(2);
        terms.surface_fluctuation += cell.measure * (vv - v_mean).powi(2);
    }
    Ok(terms)
}

/// Records whose surface fluctuation is at or below this are skipped.
pub const COUPLING_DENOMINATOR_FLOOR: f64 = 1e-14;

/// Smallest numerator/denominator ratio over the terms, `+inf` when every
/// record has a negligible surface fluctuation.
pub fn min_coupling_ratio(terms: &[CouplingTerms]) -> f64 {
    terms
        .iter()
        .filter(|t| t.surface_fluctuation > COUPLING_DENOMINATOR_FLOOR)
        .map(|t| t.numerator() / t.surface_fluctuation)
        .fold(f64::INFINITY, f64::min)
}

/// Empirical constant of the degenerate coupling inequality along a
/// trajectory of a run without surface diffusion.
pub fn audit_degenerate_coupling(trajectory: &[State], geom: &GridGeometry, params: &ModelParams) -> Result<f64> {
    if !params.is_degenerate() {
        return Err(Error::invalid("degenerate coupling audit needs delta_v = 0"));
    }
    let terms = trajectory
        .iter()
        .map(|s| coupling_terms(s, geom, params))
        .collect::<Result<Vec<_>>>()?;
    Ok(min_coupling_ratio(&terms))
}

pub const ORACLE_MAX_UNKNOWNS: usize = 64;

/// Classical RK4 on the semi-discrete system, returning `checkpoints + 1`
/// states at uniform times from `state0.time` to `t_end`.
///
/// The step is `1e-6 (t_end - t0)` or smaller if a Gershgorin bound on the
/// Jacobian over the invariant box demands it.
pub fn dense_oracle(
    state0: &State,
    geom: &GridGeometry,
    params: &ModelParams,
    t_end: f64,
    checkpoints: usize,
) -> Result<Vec<State>> {
    let state0 = State::new(geom, state0.u.clone(), state0.v.clone(), state0.time)?;
    let n = geom.n_omega() + geom.n_gamma();
    if n > ORACLE_MAX_UNKNOWNS {
        return Err(Error::invalid(format!("dense oracle limited to {ORACLE_MAX_UNKNOWNS} unknowns, got {n}")));
    }
    if !(t_end > state0.time) || checkpoints == 0 {
        return Err(Error::invalid("dense oracle needs t_end > t0 and at least one checkpoint"));
    }
    let span = t_end - state0.time;

    let (a, b) = if state0.sup_u() == 0.0 && state0.sup_v() == 0.0 {
        (0.0, 0.0)
    } else {
        model::constant_upper_solution(params, state0.sup_u(), state0.sup_v())?
    };
    let lip = model::lipschitz_bounds(params, a, b)?;
    let row_bound = |m: &crate::linsolve::CsrMatrix, d: f64| {
        (0..m.dim()).map(|i| m.row(i).map(|(_, v)| v.abs()).sum::<f64>()).fold(0.0, f64::max) * d
    };
    let max_factor = geom.trace_map.iter().map(|l| l.factor).fold(0.0, f64::max);
    let rho = row_bound(&geom.bulk_laplacian, params.delta_u)
        + row_bound(&geom.surface_laplacian, params.delta_v)
        + (max_factor + 1.0) * (params.alpha + params.beta) * (lip.l_u + lip.l_v);
    let mut h_max = 1e-6 * span;
    if rho > 0.0 {
        h_max = h_max.min(2.0 / rho);
    }
    let per_checkpoint = ((span / checkpoints as f64) / h_max).ceil().max(1.0) as usize;
    let h = span / (checkpoints * per_checkpoint) as f64;

    let no = geom.n_omega();
    let rhs = |x: &[f64], dx: &mut [f64]| {
        let (u, v) = x.split_at(no);
        let (du, dv) = dx.split_at_mut(no);
        semi_discrete_rhs(geom, params, u, v, du, dv);
    };
    let mut x: Vec<f64> = state0.u.iter().chain(&state0.v).copied().collect();
    let (mut k1, mut k2, mut k3, mut k4, mut tmp) = (vec![0.0; n], vec![0.0; n], vec![0.0; n], vec![0.0; n], vec![0.0; n]);
    let mut out = vec![state0.clone()];
    for c in 1..=checkpoints {
        for _ in 0..per_checkpoint {
            rhs(&x, &mut k1);
            for i in 0..n {
                tmp[i] = x[i] + 0.5 * h * k1[i];
            }
            rhs(&tmp, &mut k2);
            for i in 0..n {
                tmp[i] = x[i] + 0.5 * h * k2[i];
            }
            rhs(&tmp, &mut k3);
            for i in 0..n {
                tmp[i] = x[i] + h * k3[i];
            }
            rhs(&tmp, &mut k4);
            for i in 0..n {
                x[i] += h / 6.0 * (k1[i] + 2.0 * k2[i] + 2.0 * k3[i] + k4[i]);
            }
        }
        if x.iter().any(|v| !v.is_finite()) {
            return Err(Error::OracleFailure(format!(
                "non-finite value before checkpoint {c}; reduce the step below {h:e}"
            )));
        }
        let time = if c == checkpoints { t_end } else { state0.time + c as f64 * span / checkpoints as f64 };
        out.push(State { u: x[..no].to_vec(), v: x[no..].to_vec(), time });
    }
    Ok(out)
}

/// Formats a float with 17 significant digits.
pub fn fmt_f64(x: f64) -> String {
    format!("{x:.16e}")
}

pub const SERIES_HEADER: &str = "t,mass,E,D,E_rel,I1,I2,L1_u,L1_v";

pub fn write_series_csv<W: Write>(series: &TraceSeries, mut out: W) -> io::Result<()> {
    writeln!(out, "{SERIES_HEADER}")?;
    for r in &series.records {
        let cols = [r.t, r.mass, r.entropy, r.dissipation, r.e_rel, r.i1, r.i2, r.l1_u, r.l1_v];
        let line: Vec<String> = cols.iter().map(|x| fmt_f64(*x)).collect();
        writeln!(out, "{}", line.join(","))?;
    }
    Ok(())
}

/// Writes `key=value` lines.
pub fn write_key_values<W: Write>(pairs: &[(&str, String)], mut out: W) -> io::Result<()> {
    for (k, v) in pairs {
        writeln!(out, "{k}={v}")?;
    }
    Ok(())
}

pub fn rate_fit_key_values(fit: &RateFit) -> Vec<(&'static str, String)> {
    vec![
        ("C0_emp", fmt_f64(fit.c0_emp)),
        ("r_squared", fmt_f64(fit.r_squared)),
        ("window_start", fmt_f64(fit.window.0)),
        ("window_end", fmt_f64(fit.window.1)),
        ("eed_min", fmt_f64(fit.eed_min)),
        ("points", fit.points.to_string()),
    ]
}

#[cfg(test)]
mod tests {
    use super::*;
    use crate::model::InitialCondition;

    fn params(alpha: f64, beta: f64, delta_v: f64) -> ModelParams {
        ModelParams::new(alpha, beta, 1.0, delta_v, 1.0, 1.0).unwrap()
    }

    fn synthetic(rate: f64) -> TraceSeries {
        let eq = Equilibrium { u_inf: 1.0, v_inf: 1.0, mass: 3.0 };
        let records = (0..=100)
            .map(|k| {
                let t = k as f64 * 0.05;
                let e = (-rate * t).exp();
                TraceRecord { t, mass: 3.0, entropy: e - 3.0, dissipation: rate * e, e_rel: e, i1: 0.0, i2: e, l1_u: 0.0, l1_v: 0.0 }
            })
            .collect();
        TraceSeries { equilibrium: eq, e_eq: -3.0, records }
    }

    #[test]
    fn fit_exact_exponential() {
        let fit = fit_rate(&synthetic(3.0), 0.3).unwrap();
        assert!((fit.c0_emp - 3.0).abs() < 1e-6);
        assert!(fit.r_squared >= 1.0 - 1e-10);
        assert!((fit.eed_min - 3.0).abs() < 1e-9);
        assert!((fit.predict(1.0) - (-3f64).exp()).abs() < 1e-9);
        assert!(fit_rate(&synthetic(3.0), 1.0).is_err());
    }

    #[test]
    fn fit_rejects_empty_window() {
        let mut s = synthetic(1.0);
        s.records.iter_mut().for_each(|r| r.e_rel = 0.0);
        assert!(fit_rate(&s, 0.3).is_err());
    }

    #[test]
    fn identity_needs_three_records() {
        let mut s = synthetic(1.0);
        s.records.truncate(2);
        assert!(check_entropy_dissipation_identity(&s).is_err());
    }

    #[test]
    fn ckp_negative_control() {
        let g = GridGeometry::build_interval(10, 1.0).unwrap();
        let p = params(1.0, 1.0, 0.0);
        let st = InitialCondition::Step { u_low: 0.5, u_high: 1.5, v_low: 0.2, v_high: 1.0 }.build(&g).unwrap();
        let mut s = record(&g, &p, &st, 0.2, &StepConfig::default()).unwrap();
        assert!(audit_ckp(&s, &p).unwrap() >= -1e-12);
        s.records[0].l1_u *= 10.0;
        assert!(audit_ckp(&s, &p).unwrap() < 0.0);
    }

    #[test]
    fn equilibrium_series_is_flat() {
        let g = GridGeometry::build_periodic_strip(6, 3, 1.0, 1.0).unwrap();
        let p = params(2.0, 1.0, 1.0);
        let eq = solve_equilibrium(&p, &g, 2.0).unwrap();
        let s = record(&g, &p, &eq.state(&g), 0.1, &StepConfig::default()).unwrap();
        assert_eq!(s.records.len(), 11);
        assert!(s.records.iter().all(|r| r.e_rel.abs() <= 1e-9));
        assert!(check_entropy_dissipation_identity(&s).unwrap() <= 1e-8);
        assert!(audit_ckp(&s, &p).unwrap().abs() <= 1e-9);
        let single = record(&g, &p, &eq.state(&g), 0.0, &StepConfig::default()).unwrap();
        assert_eq!(single.records.len(), 1);
    }

    #[test]
    fn degenerate_audit_cases() {
        let g = GridGeometry::build_periodic_strip(6, 3, 1.0, 1.0).unwrap();
        let p = params(1.0, 1.0, 0.0);
        let flat = InitialCondition::Constant { u: 1.0, v: 2.0 }.build(&g).unwrap();
        assert_eq!(audit_degenerate_coupling(&[flat.clone()], &g, &p).unwrap(), f64::INFINITY);
        assert!(audit_degenerate_coupling(&[flat], &g, &params(1.0, 1.0, 1.0)).is_err());

        let st = InitialCondition::Cosine { u_mean: 1.0, v_mean: 1.0, amplitude: 0.5 }.build(&g).unwrap();
        let (_, traj) = record_with_states(&g, &p, &st, 0.5, &StepConfig::default()).unwrap();
        assert!(audit_degenerate_coupling(&traj, &g, &p).unwrap() > 0.0);

        let mut terms = coupling_terms(&st, &g, &p).unwrap();
        terms.reaction = 0.0;
        terms.gradient = 0.0;
        terms.trace_fluctuation = 0.0;
        assert_eq!(min_coupling_ratio(&[terms]), 0.0);
    }

    #[test]
    fn oracle_equilibrium_and_mass() {
        let g = GridGeometry::build_interval(3, 1.0).unwrap();
        let p = params(2.0, 1.0, 0.0);
        let eq = solve_equilibrium(&p, &g, 2.0).unwrap();
        let traj = dense_oracle(&eq.state(&g), &g, &p, 0.01, 4).unwrap();
        assert_eq!(traj.len(), 5);
        assert!(traj.iter().all(|s| s.sup_distance(&eq.state(&g)) < 1e-12));

        let st = InitialCondition::Step { u_low: 0.5, u_high: 1.5, v_low: 0.2, v_high: 1.0 }.build(&g).unwrap();
        let m0 = model::mass(&st, &g, &p).unwrap();
        let traj = dense_oracle(&st, &g, &p, 0.01, 2).unwrap();
        for s in &traj {
            assert!((model::mass(s, &g, &p).unwrap() - m0).abs() <= 1e-9 * m0);
        }
        let big = GridGeometry::build_interval(70, 1.0).unwrap();
        assert!(dense_oracle(&State::constant(&big, 1.0, 1.0), &big, &p, 0.1, 1).is_err());
    }

    #[test]
    fn series_csv_round_trips() {
        let s = synthetic(2.0);
        let mut buf = Vec::new();
        write_series_csv(&s, &mut buf).unwrap();
        let text = String::from_utf8(buf).unwrap();
        let mut lines = text.lines();
        assert_eq!(lines.next().unwrap(), SERIES_HEADER);
        let first: Vec<f64> = lines.next().unwrap().split(',').map(|x| x.parse().unwrap()).collect();
        assert_eq!(first[4], s.records[0].e_rel);
        let second: Vec<f64> = lines.next().unwrap().split(',').map(|x| x.parse().unwrap()).collect();
        assert_eq!(second[3], s.records[1].dissipation);
    }
}
