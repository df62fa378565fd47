//! Monotone upper/lower iteration for the coupled system.
//!
//! Starting from the lower pair `(0, 0)` and a constant upper pair `(A, B)`,
//! every outer iteration recomputes whole trajectories on `[0, T]` by solving
//! linear problems whose boundary data are the Lipschitz-shifted reactions
//! `f`, `g` evaluated on the previous iterate at the new time level. The
//! lower trajectories increase, the upper ones decrease, and both converge to
//! the backward-Euler solution of the coupled system.

use crate::error::{Error, Result};
use crate::grid::GridGeometry;
use crate::model::{constant_upper_solution, lipschitz_bounds, LipschitzBounds, ModelParams, State};
use crate::stepper::{self, linear_bulk_step, linear_surface_step, StepConfig};

pub const DEFAULT_OUTER_TOL: f64 = 1e-8;
pub const DEFAULT_K_MAX: usize = 200;
/// Relative slack of the sandwich certificate.
pub const SANDWICH_SLACK: f64 = 1e-9;
/// Relative slack of the comparison experiment.
pub const COMPARISON_SLACK: f64 = 1e-8;

#[derive(Debug, Clone, Copy, PartialEq)]
pub struct MonotoneConfig {
    pub outer_tol: f64,
    pub k_max: usize,
}

impl Default for MonotoneConfig {
    fn default() -> Self {
        MonotoneConfig { outer_tol: DEFAULT_OUTER_TOL, k_max: DEFAULT_K_MAX }
    }
}

#[derive(Debug, Clone, Copy, PartialEq, Eq)]
pub enum Field {
    U,
    V,
}

/// Which of the three orderings `lower_k <= lower_{k+1} <= upper_{k+1} <= upper_k`.
#[derive(Debug, Clone, Copy, PartialEq, Eq)]
pub enum Ordering {
    LowerIncreasing,
    LowerBelowUpper,
    UpperDecreasing,
}

#[derive(Debug, Clone, Copy, PartialEq)]
pub struct Violation {
    pub ordering: Ordering,
    /// Outer index of the newer iterate involved.
    pub k: usize,
    pub time_index: usize,
    pub field: Field,
    pub cell: usize,
    /// Signed amount by which the ordering fails (positive = violated).
    pub amount: f64,
}

#[derive(Debug, Clone)]
pub struct IterationReport {
    pub times: Vec<f64>,
    /// `upper[k][n]`, `lower[k][n]`: iterate `k` at time level `n`.
    pub upper: Vec<Vec<State>>,
    pub lower: Vec<Vec<State>>,
    /// `gaps[k] = sup_n max(|upper - lower|_inf)` for iterate `k`.
    pub gaps: Vec<f64>,
    /// Worst signed violation of each ordering, in the order of `Ordering`.
    pub ordering_violations: [f64; 3],
    pub converged: bool,
    pub k_final: usize,
    pub upper_bound: (f64, f64),
    pub lipschitz: LipschitzBounds,
    pub outer_tol: f64,
}

impl IterationReport {
    /// Midpoint of the final upper/lower pair.
    pub fn midpoint(&self) -> Vec<State> {
        let up = &self.upper[self.k_final];
        let lo = &self.lower[self.k_final];
        up.iter()
            .zip(lo)
            .map(|(a, b)| State {
                u: a.u.iter().zip(&b.u).map(|(x, y)| 0.5 * (x + y)).collect(),
                v: a.v.iter().zip(&b.v).map(|(x, y)| 0.5 * (x + y)).collect(),
                time: a.time,
            })
            .collect()
    }
}

fn trajectory_gap(a: &[State], b: &[State]) -> f64 {
    a.iter().zip(b).fold(0.0, |m: f64, (x, y)| m.max(x.sup_distance(y)))
}

/// Worst signed violation of `low <= high` over a pair of trajectories.
fn worst_order(low: &[State], high: &[State]) -> (f64, usize, Field, usize) {
    let mut worst = (f64::NEG_INFINITY, 0, Field::U, 0);
    for (n, (l, h)) in low.iter().zip(high).enumerate() {
        for (field, lv, hv) in [(Field::U, &l.u, &h.u), (Field::V, &l.v, &h.v)] {
            for (c, (a, b)) in lv.iter().zip(hv).enumerate() {
                if a - b > worst.0 {
                    worst = (a - b, n, field, c);
                }
            }
        }
    }
    worst
}

struct Sweep<'a> {
    geom: &'a GridGeometry,
    params: &'a ModelParams,
    lip: LipschitzBounds,
    times: &'a [f64],
    linear_tol: f64,
    state0: &'a State,
}

impl Sweep<'_> {
    /// New trajectory from the previous iterate `prev`.
    fn advance(&self, prev: &[State]) -> Result<Vec<State>> {
        let p = self.params;
        let g = self.geom;
        let robin = vec![p.alpha * self.lip.l_u; g.n_gamma()];
        let absorption = vec![p.beta * self.lip.l_v; g.n_gamma()];
        let mut out = Vec::with_capacity(self.times.len());
        out.push(self.state0.clone());
        for n in 1..self.times.len() {
            let dt = self.times[n] - self.times[n - 1];
            let frozen = &prev[n];
            let (src_f, src_g): (Vec<f64>, Vec<f64>) = g
                .trace_map
                .iter()
                .zip(&frozen.v)
                .map(|(link, &v)| {
                    let u = frozen.u[link.bulk_cell];
                    (
                        p.bulk_flux(u, v) + p.alpha * self.lip.l_u * u,
                        p.surface_source(u, v) + p.beta * self.lip.l_v * v,
                    )
                })
                .unzip();
            let last = &out[n - 1];
            let bulk = linear_bulk_step(g, &last.u, &robin, &src_f, dt, p.delta_u, self.linear_tol)?;
            let v = linear_surface_step(g, &last.v, &absorption, &src_g, dt, p.delta_v, self.linear_tol)?;
            out.push(State { u: bulk.u, v, time: self.times[n] });
        }
        Ok(out)
    }
}

/// Runs the outer iteration and returns the full report whether or not the
/// gap reached `outer_tol`. Only step failures are errors.
pub fn iterate_monotone(
    state0: &State,
    geom: &GridGeometry,
    params: &ModelParams,
    cfg: &StepConfig,
    t_final: f64,
    mono: &MonotoneConfig,
) -> Result<IterationReport> {
    params.validate()?;
    cfg.validate()?;
    let state0 = State::new(geom, state0.u.clone(), state0.v.clone(), 0.0)?;
    if !(t_final > 0.0) {
        return Err(Error::invalid("time horizon must be positive"));
    }
    if !(mono.outer_tol > 0.0) || mono.k_max == 0 {
        return Err(Error::invalid("outer_tol must be positive and k_max at least 1"));
    }
    let (su, sv) = (state0.sup_u(), state0.sup_v());
    let (a, b) = if su == 0.0 && sv == 0.0 { (0.0, 0.0) } else { constant_upper_solution(params, su, sv)? };
    let lip = lipschitz_bounds(params, a, b)?;
    let times = stepper::time_grid(0.0, t_final, cfg.dt)?;

    let constant = |u: f64, v: f64| -> Vec<State> {
        times
            .iter()
            .map(|&t| State { u: vec![u; geom.n_omega()], v: vec![v; geom.n_gamma()], time: t })
            .collect()
    };
    let mut upper = vec![constant(a, b)];
    let mut lower = vec![constant(0.0, 0.0)];
    let mut gaps = vec![trajectory_gap(&upper[0], &lower[0])];
    let mut violations = [f64::NEG_INFINITY; 3];
    let sweep = Sweep { geom, params, lip, times: &times, linear_tol: cfg.linear_tol, state0: &state0 };

    let mut converged = false;
    for k in 1..=mono.k_max {
        let (up, lo) = std::thread::scope(|s| {
            let up = s.spawn(|| sweep.advance(&upper[k - 1]));
            let lo = sweep.advance(&lower[k - 1]);
            (up.join().expect("upper sweep panicked"), lo)
        });
        let (up, lo) = (up?, lo?);
        violations[0] = violations[0].max(worst_order(&lower[k - 1], &lo).0);
        violations[1] = violations[1].max(worst_order(&lo, &up).0);
        violations[2] = violations[2].max(worst_order(&up, &upper[k - 1]).0);
        gaps.push(trajectory_gap(&up, &lo));
        upper.push(up);
        lower.push(lo);
        if gaps[k] <= mono.outer_tol {
            converged = true;
            break;
        }
    }
    let k_final = gaps.len() - 1;
    Ok(IterationReport {
        times,
        upper,
        lower,
        gaps,
        ordering_violations: violations,
        converged,
        k_final,
        upper_bound: (a, b),
        lipschitz: lip,
        outer_tol: mono.outer_tol,
    })
}

/// Monotone iteration to convergence. Returns the midpoint trajectory of the
/// final pair, or `NonConvergence` with the gap sequence.
pub fn run_monotone(
    state0: &State,
    geom: &GridGeometry,
    params: &ModelParams,
    cfg: &StepConfig,
    t_final: f64,
    mono: &MonotoneConfig,
) -> Result<(Vec<State>, IterationReport)> {
    let report = iterate_monotone(state0, geom, params, cfg, t_final, mono)?;
    if !report.converged {
        return Err(Error::NonConvergence { gaps: report.gaps });
    }
    Ok((report.midpoint(), report))
}

#[derive(Debug, Clone, PartialEq)]
pub struct SandwichVerdict {
    pub passed: bool,
    /// Worst violation found, whether or not it exceeds the slack.
    pub worst: Option<Violation>,
}

/// Checks `lower_k <= lower_{k+1} <= upper_{k+1} <= upper_k` at every time
/// level with slack `SANDWICH_SLACK * scale`, `scale = max(1, A, B)`.
pub fn check_sandwich(report: &IterationReport) -> SandwichVerdict {
    let scale = 1f64.max(report.upper_bound.0).max(report.upper_bound.1);
    let slack = SANDWICH_SLACK * scale;
    let mut worst: Option<Violation> = None;
    for k in 1..report.upper.len() {
        let checks = [
            (Ordering::LowerIncreasing, &report.lower[k - 1], &report.lower[k]),
            (Ordering::LowerBelowUpper, &report.lower[k], &report.upper[k]),
            (Ordering::UpperDecreasing, &report.upper[k], &report.upper[k - 1]),
        ];
        for (ordering, low, high) in checks {
            let (amount, time_index, field, cell) = worst_order(low, high);
            if worst.map_or(true, |w| amount > w.amount) {
                worst = Some(Violation { ordering, k, time_index, field, cell, amount });
            }
        }
    }
    if report.upper.len() == 1 {
        let (amount, time_index, field, cell) = worst_order(&report.lower[0], &report.upper[0]);
        worst = Some(Violation { ordering: Ordering::LowerBelowUpper, k: 0, time_index, field, cell, amount });
    }
    SandwichVerdict { passed: worst.map_or(true, |w| w.amount <= slack), worst }
}

#[derive(Debug, Clone, PartialEq)]
pub struct ComparisonVerdict {
    pub ordered: bool,
    /// Largest `low - high` over all steps, cells and fields.
    pub worst_violation: f64,
    /// `(time_index, field, cell)` of the worst violation.
    pub location: (usize, Field, usize),
    /// Smallest entry of either trajectory.
    pub min_value: f64,
    pub steps: usize,
}

/// Integrates both initial states with the coupled stepper and checks that
/// their ordering persists with slack `COMPARISON_SLACK * scale`.
pub fn comparison_experiment(
    state_low: &State,
    state_high: &State,
    geom: &GridGeometry,
    params: &ModelParams,
    cfg: &StepConfig,
    t_final: f64,
) -> Result<ComparisonVerdict> {
    let mut low_traj = vec![state_low.clone()];
    let mut high_traj = vec![state_high.clone()];
    stepper::integrate(geom, params, state_low, t_final, cfg, |s| {
        low_traj.push(s.clone());
        Ok(())
    })?;
    stepper::integrate(geom, params, state_high, t_final, cfg, |s| {
        high_traj.push(s.clone());
        Ok(())
    })?;
    let scale = state_low.scale().max(state_high.scale());
    let (worst, n, field, cell) = worst_order(&low_traj, &high_traj);
    let min_value = low_traj
        .iter()
        .chain(&high_traj)
        .flat_map(|s| s.u.iter().chain(&s.v))
        .fold(f64::INFINITY, |m, x| m.min(*x));
    Ok(ComparisonVerdict {
        ordered: worst <= COMPARISON_SLACK * scale,
        worst_violation: worst,
        location: (n, field, cell),
        min_value,
        steps: low_traj.len() - 1,
    })
}
