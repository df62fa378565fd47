//! Implicit time stepping.
//!
//! `coupled_step` advances the full nonlinear system by one backward-Euler
//! step using Newton's method on the stacked unknowns `[u, v]`. Rows of the
//! residual are scaled by cell measure and by `beta` (bulk) or `alpha`
//! (surface), so the rows sum to the change of discrete mass and every
//! Newton update with an exact linear solve preserves it.
//!
//! `linear_bulk_step` and `linear_surface_step` are the decoupled linear
//! solves used by the monotone iteration.

use crate::error::{Error, Result};
use crate::grid::GridGeometry;
use crate::linsolve::{self, CsrMatrix, DEFAULT_LINEAR_TOL};
use crate::model::{ModelParams, State};

#[derive(Debug, Clone, Copy, PartialEq)]
pub struct StepConfig {
    pub dt: f64,
    pub newton_tol: f64,
    pub newton_max_iter: usize,
    pub linear_tol: f64,
}

impl Default for StepConfig {
    fn default() -> Self {
        StepConfig {
            dt: 1e-2,
            newton_tol: 1e-11,
            newton_max_iter: 50,
            linear_tol: DEFAULT_LINEAR_TOL,
        }
    }
}

impl StepConfig {
    pub fn validate(&self) -> Result<()> {
        if !(self.dt > 0.0 && self.dt.is_finite()) {
            return Err(Error::invalid(format!("time step must be positive, got {}", self.dt)));
        }
        if !(self.newton_tol > 0.0) || !(self.linear_tol > 0.0) {
            return Err(Error::invalid("solver tolerances must be positive"));
        }
        if self.newton_max_iter == 0 {
            return Err(Error::invalid("newton_max_iter must be at least 1"));
        }
        Ok(())
    }
}

/// Uniform time levels from `t0` to `t_end`. The step is shrunk from `dt` as
/// little as needed for the last level to land on `t_end`.
pub fn time_grid(t0: f64, t_end: f64, dt: f64) -> Result<Vec<f64>> {
    if !(dt > 0.0) || !(t_end >= t0) || !t_end.is_finite() {
        return Err(Error::invalid(format!(
            "invalid time interval [{t0}, {t_end}] with step {dt}"
        )));
    }
    let n = ((t_end - t0) / dt - 1e-9).ceil().max(0.0) as usize;
    if n == 0 {
        return Ok(vec![t0]);
    }
    let h = (t_end - t0) / n as f64;
    let mut times: Vec<f64> = (0..n).map(|k| t0 + k as f64 * h).collect();
    times.push(t_end);
    Ok(times)
}

/// Result of a linear bulk step.
#[derive(Debug, Clone, PartialEq)]
pub struct BulkStepOutput {
    pub u: Vec<f64>,
    /// Integrated boundary flux `w_Gamma (src - robin * trace(u))` per
    /// boundary cell, evaluated at the new level.
    pub boundary_flux: Vec<f64>,
}

fn check_len(name: &str, got: usize, want: usize) -> Result<()> {
    if got != want {
        return Err(Error::invalid(format!("{name} has length {got}, expected {want}")));
    }
    Ok(())
}

/// One backward-Euler step of `u_t = delta_u L u` with the boundary flux
/// `src - robin * u` on every boundary cell.
pub fn linear_bulk_step(
    geom: &GridGeometry,
    u_old: &[f64],
    robin: &[f64],
    src: &[f64],
    dt: f64,
    delta_u: f64,
    linear_tol: f64,
) -> Result<BulkStepOutput> {
    check_len("u_old", u_old.len(), geom.n_omega())?;
    check_len("robin coefficient", robin.len(), geom.n_gamma())?;
    check_len("boundary source", src.len(), geom.n_gamma())?;
    if !(dt > 0.0) || delta_u < 0.0 {
        return Err(Error::invalid("dt must be positive and delta_u non-negative"));
    }
    if robin.iter().any(|r| *r < 0.0) {
        return Err(Error::invalid("robin coefficient must be non-negative"));
    }

    let w = geom.omega_weights();
    let mut diag = w.clone();
    let mut rhs: Vec<f64> = w.iter().zip(u_old).map(|(w, u)| w * u).collect();
    for ((link, cell), (&r, &s)) in geom.trace_map.iter().zip(&geom.gamma_cells).zip(robin.iter().zip(src)) {
        diag[link.bulk_cell] += dt * cell.measure * r;
        rhs[link.bulk_cell] += dt * cell.measure * s;
    }
    let a = linsolve::assemble_shifted(&geom.bulk_stiffness(), &diag, dt * delta_u)?;
    let (u, _) = linsolve::solve(&a, &rhs, linear_tol)?;
    let boundary_flux = geom
        .trace_map
        .iter()
        .zip(&geom.gamma_cells)
        .zip(robin.iter().zip(src))
        .map(|((link, cell), (&r, &s))| cell.measure * (s - r * u[link.bulk_cell]))
        .collect();
    Ok(BulkStepOutput { u, boundary_flux })
}

/// One backward-Euler step of `v_t = delta_v L_Gamma v - absorption v + src`.
pub fn linear_surface_step(
    geom: &GridGeometry,
    v_old: &[f64],
    absorption: &[f64],
    src: &[f64],
    dt: f64,
    delta_v: f64,
    linear_tol: f64,
) -> Result<Vec<f64>> {
    let n = geom.n_gamma();
    check_len("v_old", v_old.len(), n)?;
    check_len("absorption", absorption.len(), n)?;
    check_len("surface source", src.len(), n)?;
    if !(dt > 0.0) || delta_v < 0.0 {
        return Err(Error::invalid("dt must be positive and delta_v non-negative"));
    }
    if absorption.iter().any(|a| *a < 0.0) {
        return Err(Error::invalid("absorption must be non-negative"));
    }
    let w = geom.gamma_weights();
    if delta_v == 0.0 {
        return Ok((0..n).map(|j| (v_old[j] + dt * src[j]) / (1.0 + dt * absorption[j])).collect());
    }
    let diag: Vec<f64> = (0..n).map(|j| w[j] * (1.0 + dt * absorption[j])).collect();
    let rhs: Vec<f64> = (0..n).map(|j| w[j] * (v_old[j] + dt * src[j])).collect();
    let a = linsolve::assemble_shifted(&geom.surface_stiffness(), &diag, dt * delta_v)?;
    Ok(linsolve::solve(&a, &rhs, linear_tol)?.0)
}

/// Right-hand side of the semi-discrete system.
pub fn semi_discrete_rhs(
    geom: &GridGeometry,
    params: &ModelParams,
    u: &[f64],
    v: &[f64],
    du: &mut [f64],
    dv: &mut [f64],
) {
    geom.bulk_laplacian.mul_vec_into(u, du);
    du.iter_mut().for_each(|x| *x *= params.delta_u);
    if params.delta_v > 0.0 {
        geom.surface_laplacian.mul_vec_into(v, dv);
        dv.iter_mut().for_each(|x| *x *= params.delta_v);
    } else {
        dv.iter_mut().for_each(|x| *x = 0.0);
    }
    for (j, link) in geom.trace_map.iter().enumerate() {
        let ui = u[link.bulk_cell];
        du[link.bulk_cell] += link.factor * params.bulk_flux(ui, v[j]);
        dv[j] += params.surface_source(ui, v[j]);
    }
}

#[derive(Debug, Clone, PartialEq, Default)]
pub struct StepReport {
    pub newton_iterations: usize,
    /// Scaled sup-norm residual before each Newton update and after the last.
    pub residual_history: Vec<f64>,
}

/// Precomputed pieces of the Newton system for one geometry and step size.
struct NewtonSystem<'a> {
    geom: &'a GridGeometry,
    params: &'a ModelParams,
    dt: f64,
    w_omega: Vec<f64>,
    w_gamma: Vec<f64>,
    bulk_stiffness: CsrMatrix,
    surface_stiffness: CsrMatrix,
    /// Triplets of the state-independent part of the Jacobian.
    base: Vec<(usize, usize, f64)>,
}

impl<'a> NewtonSystem<'a> {
    fn new(geom: &'a GridGeometry, params: &'a ModelParams, dt: f64) -> Self {
        let w_omega = geom.omega_weights();
        let w_gamma = geom.gamma_weights();
        let bulk_stiffness = geom.bulk_stiffness();
        let surface_stiffness = geom.surface_stiffness();
        let no = geom.n_omega();
        let (a, b) = (params.alpha, params.beta);
        let mut base = Vec::new();
        for (i, j, val) in bulk_stiffness.triplets() {
            base.push((i, j, -b * dt * params.delta_u * val));
        }
        for (i, &w) in w_omega.iter().enumerate() {
            base.push((i, i, b * w));
        }
        if params.delta_v > 0.0 {
            for (i, j, val) in surface_stiffness.triplets() {
                base.push((no + i, no + j, -a * dt * params.delta_v * val));
            }
        }
        for (j, &w) in w_gamma.iter().enumerate() {
            base.push((no + j, no + j, a * w));
        }
        NewtonSystem { geom, params, dt, w_omega, w_gamma, bulk_stiffness, surface_stiffness, base }
    }

    /// Weighted residual rows and their sup norm after undoing the weights.
    fn residual(&self, old: &State, x: &[f64]) -> (Vec<f64>, f64) {
        let p = self.params;
        let no = self.geom.n_omega();
        let (u, v) = x.split_at(no);
        let mut r = vec![0.0; x.len()];
        let (ru, rv) = r.split_at_mut(no);

        self.bulk_stiffness.mul_vec_into(u, ru);
        for i in 0..no {
            ru[i] = self.w_omega[i] * (u[i] - old.u[i]) - self.dt * p.delta_u * ru[i];
        }
        if p.delta_v > 0.0 {
            self.surface_stiffness.mul_vec_into(v, rv);
            rv.iter_mut().for_each(|x| *x *= -self.dt * p.delta_v);
        }
        for (j, link) in self.geom.trace_map.iter().enumerate() {
            let ui = u[link.bulk_cell];
            let c = self.dt * self.w_gamma[j];
            ru[link.bulk_cell] -= c * p.bulk_flux(ui, v[j]);
            rv[j] += self.w_gamma[j] * (v[j] - old.v[j]) - c * p.surface_source(ui, v[j]);
        }

        let mut sup: f64 = 0.0;
        for i in 0..no {
            sup = sup.max(ru[i].abs() / self.w_omega[i]);
            ru[i] *= p.beta;
        }
        for j in 0..rv.len() {
            sup = sup.max(rv[j].abs() / self.w_gamma[j]);
            rv[j] *= p.alpha;
        }
        (r, sup)
    }

    fn jacobian(&self, x: &[f64]) -> Result<CsrMatrix> {
        let p = self.params;
        let no = self.geom.n_omega();
        let (a, b) = (p.alpha, p.beta);
        let mut t = self.base.clone();
        for (j, link) in self.geom.trace_map.iter().enumerate() {
            let i = link.bulk_cell;
            let c = self.dt * self.w_gamma[j];
            let fu = p.forward_slope(x[i]);
            let bv = p.backward_slope(x[no + j]);
            t.push((i, i, b * c * a * fu));
            t.push((i, no + j, -b * c * a * bv));
            t.push((no + j, i, -a * c * b * fu));
            t.push((no + j, no + j, a * c * b * bv));
        }
        CsrMatrix::from_triplets(x.len(), &t)
    }
}

fn sup_norm(x: &[f64]) -> f64 {
    x.iter().fold(0.0, |m: f64, v| m.max(v.abs()))
}

/// One backward-Euler step of the coupled nonlinear system.
pub fn coupled_step(
    geom: &GridGeometry,
    params: &ModelParams,
    state: &State,
    cfg: &StepConfig,
) -> Result<(State, StepReport)> {
    cfg.validate()?;
    state.check_shape(geom)?;
    coupled_step_to(geom, params, state, cfg, cfg.dt, state.time + cfg.dt)
}

fn coupled_step_to(
    geom: &GridGeometry,
    params: &ModelParams,
    state: &State,
    cfg: &StepConfig,
    dt: f64,
    t_new: f64,
) -> Result<(State, StepReport)> {
    let sys = NewtonSystem::new(geom, params, dt);
    let no = geom.n_omega();
    let mut x: Vec<f64> = state.u.iter().chain(&state.v).copied().collect();
    let (mut r, mut res) = sys.residual(state, &x);
    let mut history = vec![res];
    let fail = |reason: String, history: Vec<f64>| Error::StepFailure {
        time: state.time,
        reason,
        residual_history: history,
    };

    let mut iterations = 0;
    let mut last_raw_min = 0.0;
    loop {
        let scale = sup_norm(&x).max(1.0);
        if iterations > 0 && res <= cfg.newton_tol * scale {
            break;
        }
        if iterations == cfg.newton_max_iter {
            return Err(fail(
                format!("Newton did not converge in {} iterations", cfg.newton_max_iter),
                history,
            ));
        }
        if !res.is_finite() {
            return Err(fail("non-finite residual".into(), history));
        }
        let jac = sys.jacobian(&x)?;
        let neg_r: Vec<f64> = r.iter().map(|v| -v).collect();
        let (delta, _) = linsolve::solve(&jac, &neg_r, cfg.linear_tol)
            .map_err(|e| fail(format!("linear solve failed: {e}"), history.clone()))?;

        // Projected backtracking on the scaled residual. Far from the
        // solution the linearisation at a zero entry can point below zero;
        // the projection keeps iterates in the orthant, where the solution
        // lies. Close to it the full, unprojected step is taken, which is
        // what makes the converged state conserve mass.
        let mut lambda = 1.0;
        let mut accepted = None;
        for _ in 0..40 {
            let raw: Vec<f64> = x.iter().zip(&delta).map(|(xi, di)| xi + lambda * di).collect();
            let raw_min = raw.iter().fold(0.0_f64, |m, v| m.min(*v));
            let trial: Vec<f64> = raw.into_iter().map(|v| v.max(0.0)).collect();
            let (rt, rest) = sys.residual(state, &trial);
            if rest.is_finite() && (rest <= (1.0 - 1e-4 * lambda) * res || rest <= cfg.newton_tol * scale) {
                accepted = Some((trial, rt, rest, raw_min));
                break;
            }
            lambda *= 0.5;
        }
        let Some((trial, rt, rest, raw_min)) = accepted else {
            return Err(fail("line search could not reduce the residual".into(), history));
        };
        last_raw_min = raw_min;
        x = trial;
        r = rt;
        res = rest;
        history.push(res);
        iterations += 1;
    }

    // The final update is the one that fixes the converged state; material
    // negativity there means the step is too large to trust.
    if last_raw_min < -1e-12 * sup_norm(&x).max(1.0) {
        return Err(fail(
            format!("negative value {last_raw_min:e} in converged state; reduce dt"),
            history,
        ));
    }
    let v = x.split_off(no);
    Ok((
        State { u: x, v, time: t_new },
        StepReport { newton_iterations: iterations, residual_history: history },
    ))
}

/// Integrates from `initial.time` to `t_end` on the uniform grid produced by
/// `time_grid`, calling `observer` after every accepted step.
pub fn integrate<O>(
    geom: &GridGeometry,
    params: &ModelParams,
    initial: &State,
    t_end: f64,
    cfg: &StepConfig,
    mut observer: O,
) -> Result<State>
where
    O: FnMut(&State) -> Result<()>,
{
    params.validate()?;
    cfg.validate()?;
    let mut state = State::new(geom, initial.u.clone(), initial.v.clone(), initial.time)?;
    let times = time_grid(initial.time, t_end, cfg.dt)?;
    for w in times.windows(2) {
        let (next, _) = coupled_step_to(geom, params, &state, cfg, w[1] - w[0], w[1])?;
        state = next;
        observer(&state)?;
    }
    Ok(state)
}

#[cfg(test)]
mod tests {
    use super::*;
    use crate::model::mass;

    fn params(alpha: f64, beta: f64, delta_v: f64) -> ModelParams {
        ModelParams::new(alpha, beta, 1.0, delta_v, 1.0, 1.0).unwrap()
    }

    #[test]
    fn time_grid_lands_on_end() {
        let t = time_grid(0.0, 1.0, 0.3).unwrap();
        assert_eq!(t.len(), 5);
        assert_eq!(*t.last().unwrap(), 1.0);
        let t = time_grid(0.0, 1.0, 0.1).unwrap();
        assert_eq!(t.len(), 11);
        assert_eq!(time_grid(0.5, 0.5, 0.1).unwrap(), vec![0.5]);
        assert!(time_grid(0.0, 1.0, 0.0).is_err());
        assert!(time_grid(1.0, 0.0, 0.1).is_err());
    }

    #[test]
    fn bulk_step_examples() {
        let g = GridGeometry::build_interval(10, 1.0).unwrap();
        let out = linear_bulk_step(&g, &[1.0; 10], &[0.0; 2], &[0.0; 2], 0.1, 1.0, 1e-12).unwrap();
        assert!(out.u.iter().all(|u| (u - 1.0).abs() < 1e-12));

        let out = linear_bulk_step(&g, &[0.0; 10], &[0.0; 2], &[1.0; 2], 0.1, 1.0, 1e-12).unwrap();
        let total: f64 = g.omega_weights().iter().zip(&out.u).map(|(w, u)| w * u).sum();
        assert!((total - 0.2).abs() < 1e-12, "{total}");

        let out = linear_bulk_step(&g, &[1.0; 10], &[1.0; 2], &[0.0; 2], 0.1, 1.0, 1e-12).unwrap();
        assert!(out.u.iter().all(|u| *u > 0.0 && *u < 1.0));
        assert!(out.boundary_flux.iter().all(|f| *f < 0.0));

        assert!(linear_bulk_step(&g, &[1.0; 9], &[0.0; 2], &[0.0; 2], 0.1, 1.0, 1e-12).is_err());
        assert!(linear_bulk_step(&g, &[1.0; 10], &[-1.0; 2], &[0.0; 2], 0.1, 1.0, 1e-12).is_err());
    }

    #[test]
    fn bulk_step_flux_balances_mass() {
        let g = GridGeometry::build_periodic_strip(8, 4, 2.0, 1.0).unwrap();
        let u_old: Vec<f64> = (0..g.n_omega()).map(|i| 1.0 + 0.1 * (i as f64).sin()).collect();
        let robin: Vec<f64> = (0..g.n_gamma()).map(|j| 0.5 + 0.01 * j as f64).collect();
        let src: Vec<f64> = (0..g.n_gamma()).map(|j| 0.2 * (j as f64).cos().abs()).collect();
        let dt = 0.05;
        let out = linear_bulk_step(&g, &u_old, &robin, &src, dt, 1.0, 1e-13).unwrap();
        let w = g.omega_weights();
        let before: f64 = w.iter().zip(&u_old).map(|(w, u)| w * u).sum();
        let after: f64 = w.iter().zip(&out.u).map(|(w, u)| w * u).sum();
        let flux: f64 = out.boundary_flux.iter().sum();
        assert!((after - before - dt * flux).abs() < 1e-11);
    }

    #[test]
    fn surface_step_examples() {
        let g = GridGeometry::build_periodic_strip(6, 3, 1.0, 1.0).unwrap();
        let n = g.n_gamma();
        let v = linear_surface_step(&g, &vec![2.0; n], &vec![0.0; n], &vec![0.0; n], 0.1, 1.0, 1e-12).unwrap();
        assert!(v.iter().all(|x| (x - 2.0).abs() < 1e-12));
        let v = linear_surface_step(&g, &vec![1.0; n], &vec![1.0; n], &vec![0.0; n], 0.5, 1.0, 1e-12).unwrap();
        assert!(v.iter().all(|x| (x - 1.0 / 1.5).abs() < 1e-12));
        let v = linear_surface_step(&g, &vec![1.0; n], &vec![1.0; n], &vec![0.0; n], 0.5, 0.0, 1e-12).unwrap();
        assert!(v.iter().all(|x| (x - 1.0 / 1.5).abs() < 1e-15));
    }

    #[test]
    fn equilibrium_is_fixed_point() {
        let g = GridGeometry::build_interval(12, 1.0).unwrap();
        let p = params(2.0, 1.0, 0.0);
        let st = State::constant(&g, 2.0, 4.0);
        let (next, report) = coupled_step(&g, &p, &st, &StepConfig::default()).unwrap();
        assert!(next.sup_distance(&st) < 1e-13);
        assert!(report.newton_iterations >= 1);
    }

    #[test]
    fn coupled_step_conserves_mass() {
        let g = GridGeometry::build_periodic_strip(8, 4, 2.0, 1.0).unwrap();
        let p = params(2.0, 3.0, 1.0);
        let u: Vec<f64> = (0..g.n_omega()).map(|i| 0.5 + 0.4 * (i as f64 * 0.7).sin().abs()).collect();
        let v: Vec<f64> = (0..g.n_gamma()).map(|j| 1.5 - 0.3 * (j as f64).cos()).collect();
        let st = State::new(&g, u, v, 0.0).unwrap();
        let m0 = mass(&st, &g, &p).unwrap();
        let (next, _) = coupled_step(&g, &p, &st, &StepConfig { dt: 0.1, ..Default::default() }).unwrap();
        let m1 = mass(&next, &g, &p).unwrap();
        assert!((m1 - m0).abs() <= 1e-13 * m0, "{m0} {m1}");
        assert!((next.time - 0.1).abs() < 1e-15);
    }

    #[test]
    fn zero_data_stays_zero() {
        let g = GridGeometry::build_interval(5, 1.0).unwrap();
        let st = State::constant(&g, 0.0, 0.0);
        let (next, _) = coupled_step(&g, &params(1.0, 1.0, 0.0), &st, &StepConfig::default()).unwrap();
        assert!(next.u.iter().chain(&next.v).all(|x| *x == 0.0));
    }

    #[test]
    fn semi_discrete_rhs_conserves_mass() {
        let g = GridGeometry::build_polar_disk(4, 8, 1.0).unwrap();
        let p = params(1.0, 2.0, 0.5);
        let u: Vec<f64> = (0..g.n_omega()).map(|i| 1.0 + 0.5 * (i as f64).sin()).collect();
        let v: Vec<f64> = (0..g.n_gamma()).map(|j| 0.7 + 0.2 * (j as f64).cos()).collect();
        let (mut du, mut dv) = (vec![0.0; u.len()], vec![0.0; v.len()]);
        semi_discrete_rhs(&g, &p, &u, &v, &mut du, &mut dv);
        let dm = p.beta * crate::grid::weighted_sum(&g.omega_weights(), &du)
            + p.alpha * crate::grid::weighted_sum(&g.gamma_weights(), &dv);
        assert!(dm.abs() < 1e-12);
    }

    #[test]
    fn integrate_visits_every_level() {
        let g = GridGeometry::build_interval(6, 1.0).unwrap();
        let st = State::constant(&g, 1.0, 0.5);
        let mut times = Vec::new();
        let last = integrate(&g, &params(1.0, 1.0, 0.0), &st, 0.1, &StepConfig::default(), |s| {
            times.push(s.time);
            Ok(())
        })
        .unwrap();
        assert_eq!(times.len(), 10);
        assert_eq!(last.time, 0.1);

        let mut calls = 0;
        let same = integrate(&g, &params(1.0, 1.0, 0.0), &st, 0.0, &StepConfig::default(), |_| {
            calls += 1;
            Ok(())
        })
        .unwrap();
        assert_eq!(calls, 0);
        assert_eq!(same, st);
    }

    #[test]
    fn robin_steady_state() {
        let g = GridGeometry::build_interval(50, 1.0).unwrap();
        let mut u = vec![0.0; 50];
        for _ in 0..500 {
            u = linear_bulk_step(&g, &u, &[1.0; 2], &[1.0; 2], 0.1, 1.0, 1e-13).unwrap().u;
        }
        assert!(u.iter().all(|x| (x - 1.0).abs() < 1e-6));
    }

    #[test]
    fn ring_mode_decays_by_discrete_eigenvalue() {
        let n = 16;
        let g = GridGeometry::build_periodic_strip(n, 2, 1.0, 1.0).unwrap();
        let dx = 1.0 / n as f64;
        let theta = 2.0 * std::f64::consts::PI / n as f64;
        let lambda = (2.0 - 2.0 * theta.cos()) / (dx * dx);
        let v0: Vec<f64> = (0..2 * n).map(|j| ((j % n) as f64 * theta).cos()).collect();
        let dt = 0.01;
        let v1 = linear_surface_step(&g, &v0, &vec![0.0; 2 * n], &vec![0.0; 2 * n], dt, 1.0, 1e-14).unwrap();
        for (a, b) in v1.iter().zip(&v0) {
            assert!((a - b / (1.0 + dt * lambda)).abs() < 1e-12);
        }
    }
}
