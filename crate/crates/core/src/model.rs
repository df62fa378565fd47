//! Reaction model, equilibrium and entropy functionals.
//!
//! The bulk species `u` lives on the bulk cells and the surface species `v`
//! on the boundary cells. They react on the boundary through
//!
//! ```text
//! F(u, v) = -alpha (k_u u^alpha - k_v v^beta)   (flux into the bulk)
//! G(u, v) =  beta  (k_u u^alpha - k_v v^beta)   (source on the surface)
//! ```
//!
//! so that `beta F + alpha G = 0` and `beta |u|_1 + alpha |v|_1` is conserved.
//!
//! The entropy functionals (`entropy`, `dissipation`, the decomposition and
//! the CKP constant) are the ones of the normalised-rate problem
//! `k_u = k_v`: for unequal rates the log-entropy is not a Lyapunov
//! functional of the raw system and the diagnostics built on it lose their
//! meaning, although every function here still evaluates.

use crate::error::{Error, Result};
use crate::grid::{weighted_sum, GridGeometry};

/// Floor applied inside logarithms and denominators of the dissipation.
pub const DEFAULT_DISSIPATION_FLOOR: f64 = 1e-30;

#[derive(Debug, Clone, Copy, PartialEq)]
pub struct ModelParams {
    pub alpha: f64,
    pub beta: f64,
    pub delta_u: f64,
    pub delta_v: f64,
    pub k_u: f64,
    pub k_v: f64,
}

impl ModelParams {
    pub fn new(alpha: f64, beta: f64, delta_u: f64, delta_v: f64, k_u: f64, k_v: f64) -> Result<Self> {
        let p = ModelParams { alpha, beta, delta_u, delta_v, k_u, k_v };
        p.validate()?;
        Ok(p)
    }

    pub fn validate(&self) -> Result<()> {
        let finite = [self.alpha, self.beta, self.delta_u, self.delta_v, self.k_u, self.k_v]
            .iter()
            .all(|x| x.is_finite());
        if !finite {
            return Err(Error::invalid("model parameters must be finite"));
        }
        if self.alpha < 1.0 || self.beta < 1.0 {
            return Err(Error::invalid(format!(
                "stoichiometric coefficients must be >= 1, got alpha = {}, beta = {}",
                self.alpha, self.beta
            )));
        }
        if !(self.delta_u > 0.0) {
            return Err(Error::invalid("delta_u must be positive"));
        }
        if self.delta_v < 0.0 {
            return Err(Error::invalid("delta_v must be non-negative"));
        }
        if !(self.k_u > 0.0 && self.k_v > 0.0) {
            return Err(Error::invalid("reaction rates must be positive"));
        }
        Ok(())
    }

    pub fn is_degenerate(&self) -> bool {
        self.delta_v == 0.0
    }

    /// `k_u u^alpha - k_v v^beta`, evaluated on the positive parts.
    #[inline]
    pub fn net_rate(&self, u: f64, v: f64) -> f64 {
        self.k_u * u.max(0.0).powf(self.alpha) - self.k_v * v.max(0.0).powf(self.beta)
    }

    /// `F`, unchecked.
    #[inline]
    pub fn bulk_flux(&self, u: f64, v: f64) -> f64 {
        -self.alpha * self.net_rate(u, v)
    }

    /// `G`, unchecked.
    #[inline]
    pub fn surface_source(&self, u: f64, v: f64) -> f64 {
        self.beta * self.net_rate(u, v)
    }

    /// `d/du (k_u u^alpha)` with the slope floor used by the Newton Jacobian.
    #[inline]
    pub fn forward_slope(&self, u: f64) -> f64 {
        self.alpha * self.k_u * u.max(1e-12).powf(self.alpha - 1.0)
    }

    /// `d/dv (k_v v^beta)` with the same floor.
    #[inline]
    pub fn backward_slope(&self, v: f64) -> f64 {
        self.beta * self.k_v * v.max(1e-12).powf(self.beta - 1.0)
    }
}

fn check_nonneg(u: f64, v: f64) -> Result<()> {
    if u < 0.0 || v < 0.0 || u.is_nan() || v.is_nan() {
        return Err(Error::invalid(format!("concentrations must be non-negative, got ({u}, {v})")));
    }
    Ok(())
}

pub fn reaction_f(params: &ModelParams, u: f64, v: f64) -> Result<f64> {
    check_nonneg(u, v)?;
    Ok(params.bulk_flux(u, v))
}

pub fn reaction_g(params: &ModelParams, u: f64, v: f64) -> Result<f64> {
    check_nonneg(u, v)?;
    Ok(params.surface_source(u, v))
}

#[derive(Debug, Clone, Copy, PartialEq)]
pub struct LipschitzBounds {
    pub l_u: f64,
    pub l_v: f64,
}

/// One-sided Lipschitz constants of the reaction on the box
/// `[0, upper_u] x [0, upper_v]`: `L_u = alpha k_u upper_u^(alpha-1)`,
/// `L_v = beta k_v upper_v^(beta-1)` (with `0^0 = 1`).
pub fn lipschitz_bounds(params: &ModelParams, upper_u: f64, upper_v: f64) -> Result<LipschitzBounds> {
    check_nonneg(upper_u, upper_v)?;
    let pow = |x: f64, e: f64| if e == 0.0 { 1.0 } else { x.powf(e) };
    Ok(LipschitzBounds {
        l_u: params.alpha * params.k_u * pow(upper_u, params.alpha - 1.0),
        l_v: params.beta * params.k_v * pow(upper_v, params.beta - 1.0),
    })
}

/// `f = F + alpha L_u u`, non-decreasing in `u` on the Lipschitz box.
pub fn shifted_f(params: &ModelParams, l_u: f64, u: f64, v: f64) -> Result<f64> {
    check_nonneg(u, v)?;
    Ok(params.bulk_flux(u, v) + params.alpha * l_u * u)
}

/// `g = G + beta L_v v`, non-decreasing in `v` on the Lipschitz box.
pub fn shifted_g(params: &ModelParams, l_v: f64, u: f64, v: f64) -> Result<f64> {
    check_nonneg(u, v)?;
    Ok(params.surface_source(u, v) + params.beta * l_v * v)
}

/// Smallest constant pair `(A, B)` with `A >= sup_u0`, `B >= sup_v0` and
/// `k_u A^alpha = k_v B^beta`. Such a pair is a stationary upper solution.
pub fn constant_upper_solution(params: &ModelParams, sup_u0: f64, sup_v0: f64) -> Result<(f64, f64)> {
    check_nonneg(sup_u0, sup_v0)?;
    if sup_u0 == 0.0 && sup_v0 == 0.0 {
        return Err(Error::DegenerateInput(
            "zero initial data is stationary and has no positive upper solution".into(),
        ));
    }
    let forward = params.k_u * sup_u0.powf(params.alpha);
    let backward = params.k_v * sup_v0.powf(params.beta);
    if forward >= backward {
        let b = (forward / params.k_v).powf(1.0 / params.beta);
        Ok((sup_u0, b.max(sup_v0)))
    } else {
        let a = (backward / params.k_u).powf(1.0 / params.alpha);
        Ok((a.max(sup_u0), sup_v0))
    }
}

/// Paired bulk/surface concentrations at one instant.
#[derive(Debug, Clone, PartialEq)]
pub struct State {
    pub u: Vec<f64>,
    pub v: Vec<f64>,
    pub time: f64,
}

impl State {
    pub fn new(geom: &GridGeometry, u: Vec<f64>, v: Vec<f64>, time: f64) -> Result<Self> {
        let s = State { u, v, time };
        s.check_shape(geom)?;
        if let Some(bad) = s.u.iter().chain(&s.v).find(|x| !(**x >= 0.0) || !x.is_finite()) {
            return Err(Error::invalid(format!("state entries must be finite and non-negative, found {bad}")));
        }
        if !(time >= 0.0) {
            return Err(Error::invalid("state time must be non-negative"));
        }
        Ok(s)
    }

    pub fn constant(geom: &GridGeometry, u: f64, v: f64) -> Self {
        State {
            u: vec![u; geom.n_omega()],
            v: vec![v; geom.n_gamma()],
            time: 0.0,
        }
    }

    pub fn check_shape(&self, geom: &GridGeometry) -> Result<()> {
        if self.u.len() != geom.n_omega() || self.v.len() != geom.n_gamma() {
            return Err(Error::invalid(format!(
                "state has ({}, {}) entries but geometry has ({}, {}) cells",
                self.u.len(),
                self.v.len(),
                geom.n_omega(),
                geom.n_gamma()
            )));
        }
        Ok(())
    }

    fn check_nonnegative(&self) -> Result<()> {
        if self.u.iter().chain(&self.v).any(|x| !(*x >= 0.0)) {
            return Err(Error::invalid("state has negative entries"));
        }
        Ok(())
    }

    pub fn sup_u(&self) -> f64 {
        self.u.iter().fold(0.0, |m: f64, x| m.max(*x))
    }

    pub fn sup_v(&self) -> f64 {
        self.v.iter().fold(0.0, |m: f64, x| m.max(*x))
    }

    /// `max(1, sup |u|, sup |v|)`: the reference magnitude for tolerances.
    pub fn scale(&self) -> f64 {
        self.u.iter().chain(&self.v).fold(1.0_f64, |m, x| m.max(x.abs()))
    }

    /// Sup-norm distance between two states on the same geometry.
    pub fn sup_distance(&self, other: &State) -> f64 {
        self.u
            .iter()
            .zip(&other.u)
            .chain(self.v.iter().zip(&other.v))
            .fold(0.0, |m: f64, (a, b)| m.max((a - b).abs()))
    }
}

/// Initial data built cell by cell from a geometry.
#[derive(Debug, Clone, Copy, PartialEq)]
pub enum InitialCondition {
    Constant { u: f64, v: f64 },
    /// `high` values on the first half of the domain (see
    /// `GridGeometry::in_first_half`), `low` values elsewhere.
    Step { u_low: f64, u_high: f64, v_low: f64, v_high: f64 },
    /// `u = u_mean (1 + a cos theta)`, `v = v_mean (1 - a cos theta)` with
    /// `theta = GridGeometry::phase` and `0 <= a <= 1`.
    Cosine { u_mean: f64, v_mean: f64, amplitude: f64 },
}

impl InitialCondition {
    pub fn build(&self, geom: &GridGeometry) -> Result<State> {
        let (u, v): (Vec<f64>, Vec<f64>) = match *self {
            InitialCondition::Constant { u, v } => (vec![u; geom.n_omega()], vec![v; geom.n_gamma()]),
            InitialCondition::Step { u_low, u_high, v_low, v_high } => {
                let pick = |c: &crate::grid::Cell, lo: f64, hi: f64| if geom.in_first_half(c.center) { hi } else { lo };
                (
                    geom.omega_cells.iter().map(|c| pick(c, u_low, u_high)).collect(),
                    geom.gamma_cells.iter().map(|c| pick(c, v_low, v_high)).collect(),
                )
            }
            InitialCondition::Cosine { u_mean, v_mean, amplitude } => {
                if !(0.0..=1.0).contains(&amplitude) {
                    return Err(Error::invalid(format!("cosine amplitude must lie in [0, 1], got {amplitude}")));
                }
                (
                    geom.omega_cells.iter().map(|c| u_mean * (1.0 + amplitude * geom.phase(c.center).cos())).collect(),
                    geom.gamma_cells.iter().map(|c| v_mean * (1.0 - amplitude * geom.phase(c.center).cos())).collect(),
                )
            }
        };
        // Roundoff in `1 - cos` may dip below zero at full amplitude.
        let clean = |x: Vec<f64>| x.into_iter().map(|x| if x < 0.0 && x > -1e-15 { 0.0 } else { x }).collect();
        State::new(geom, clean(u), clean(v), 0.0)
    }
}

/// `beta sum w_Omega u + alpha sum w_Gamma v`.
pub fn mass(state: &State, geom: &GridGeometry, params: &ModelParams) -> Result<f64> {
    state.check_shape(geom)?;
    Ok(mass_unchecked(state, geom, params))
}

pub(crate) fn mass_unchecked(state: &State, geom: &GridGeometry, params: &ModelParams) -> f64 {
    params.beta * weighted_sum(&geom.omega_weights(), &state.u)
        + params.alpha * weighted_sum(&geom.gamma_weights(), &state.v)
}

#[derive(Debug, Clone, Copy, PartialEq)]
pub struct Equilibrium {
    pub u_inf: f64,
    pub v_inf: f64,
    pub mass: f64,
}

impl Equilibrium {
    pub fn state(&self, geom: &GridGeometry) -> State {
        State::constant(geom, self.u_inf, self.v_inf)
    }
}

/// Bisection for the root of an increasing function on `[lo, hi]`, run until
/// the bracket cannot shrink any further in floating point.
fn bisect_increasing(f: impl Fn(f64) -> f64, mut lo: f64, mut hi: f64) -> f64 {
    for _ in 0..2200 {
        let mid = 0.5 * (lo + hi);
        if mid <= lo || mid >= hi {
            break;
        }
        if f(mid) < 0.0 {
            lo = mid;
        } else {
            hi = mid;
        }
    }
    0.5 * (lo + hi)
}

/// Unique positive constants with `k_u u^alpha = k_v v^beta` and
/// `beta |Omega| u + alpha |Gamma| v = mass`.
///
/// The rate balance is bisected in whichever species carries the smaller
/// share of the mass, so the other species recovered from the mass
/// constraint inherits only a relative error below one ulp of the bracket.
pub fn solve_equilibrium(params: &ModelParams, geom: &GridGeometry, mass: f64) -> Result<Equilibrium> {
    solve_equilibrium_measures(params, geom.omega_measure, geom.gamma_measure, mass)
}

/// As `solve_equilibrium`, with the domain measures given directly.
pub fn solve_equilibrium_measures(
    params: &ModelParams,
    omega_measure: f64,
    gamma_measure: f64,
    mass: f64,
) -> Result<Equilibrium> {
    if !(mass > 0.0 && mass.is_finite()) {
        return Err(Error::invalid(format!("total mass must be positive, got {mass}")));
    }
    if !(omega_measure > 0.0 && gamma_measure > 0.0) {
        return Err(Error::invalid("domain measures must be positive"));
    }
    let p = params;
    let bo = p.beta * omega_measure;
    let ag = p.alpha * gamma_measure;

    let balance_u = |u: f64| p.k_u * u.powf(p.alpha) - p.k_v * ((mass - bo * u) / ag).max(0.0).powf(p.beta);
    let u = bisect_increasing(balance_u, 0.0, mass / bo);
    let (u_inf, v_inf) = if bo * u <= 0.5 * mass {
        (u, (mass - bo * u) / ag)
    } else {
        let balance_v =
            |v: f64| p.k_v * v.powf(p.beta) - p.k_u * ((mass - ag * v) / bo).max(0.0).powf(p.alpha);
        let v = bisect_increasing(balance_v, 0.0, mass / ag);
        ((mass - ag * v) / bo, v)
    };
    Ok(Equilibrium { u_inf, v_inf, mass })
}

/// `x (log x - 1)` with the continuous extension `0` at `x = 0`.
#[inline]
fn entropy_density(x: f64) -> f64 {
    if x == 0.0 {
        0.0
    } else {
        x * (x.ln() - 1.0)
    }
}

/// `phi(x) = x log x - x + 1 >= 0`, accurate to full relative precision
/// near `x = 1` where the direct formula cancels.
pub fn relative_entropy_density(x: f64) -> f64 {
    let d = x - 1.0;
    if d.abs() < 0.05 {
        // phi(1 + d) = sum_{n >= 2} (-1)^n d^n / (n (n - 1))
        let mut term = d * d;
        let mut sum = 0.0;
        for n in 2..30 {
            let nf = n as f64;
            let c = term / (nf * (nf - 1.0));
            sum += if n % 2 == 0 { c } else { -c };
            term *= d;
            if term.abs() < 1e-18 * sum.abs() {
                break;
            }
        }
        sum
    } else if x == 0.0 {
        1.0
    } else {
        x * x.ln() - x + 1.0
    }
}

/// `E = sum w_Omega u (log u - 1) + sum w_Gamma v (log v - 1)`.
pub fn entropy(state: &State, geom: &GridGeometry) -> Result<f64> {
    state.check_shape(geom)?;
    state.check_nonnegative()?;
    let bulk: f64 = geom.omega_cells.iter().zip(&state.u).map(|(c, &u)| c.measure * entropy_density(u)).sum();
    let surf: f64 = geom.gamma_cells.iter().zip(&state.v).map(|(c, &v)| c.measure * entropy_density(v)).sum();
    Ok(bulk + surf)
}

/// Face average used in the `|grad u|^2 / u` quadrature.
#[derive(Debug, Clone, Copy, PartialEq, Eq, Default)]
pub enum FaceAverage {
    /// Logarithmic mean; makes the discrete dissipation coincide with the
    /// exact entropy production of the semi-discrete scheme.
    #[default]
    Logarithmic,
    Harmonic,
}

#[derive(Debug, Clone, Copy, PartialEq)]
pub struct DissipationOptions {
    /// `None` requests the unfloored evaluation, which returns `+inf` when a
    /// zero value is paired with a positive one.
    pub floor: Option<f64>,
    pub face_average: FaceAverage,
}

impl Default for DissipationOptions {
    fn default() -> Self {
        DissipationOptions {
            floor: Some(DEFAULT_DISSIPATION_FLOOR),
            face_average: FaceAverage::Logarithmic,
        }
    }
}

#[derive(Debug, Clone, Copy, PartialEq)]
pub struct DissipationParts {
    pub bulk_diffusion: f64,
    pub surface_diffusion: f64,
    pub reaction: f64,
}

impl DissipationParts {
    pub fn total(&self) -> f64 {
        self.bulk_diffusion + self.surface_diffusion + self.reaction
    }
}

/// `log(a / b)` for positive `a`, `b`, accurate when `a` is close to `b`.
#[inline]
fn log_ratio(a: f64, b: f64) -> f64 {
    ((a - b) / b).ln_1p()
}

fn log_mean(a: f64, b: f64) -> f64 {
    if a <= 0.0 || b <= 0.0 {
        0.0
    } else if a == b {
        a
    } else {
        (a - b) / log_ratio(a, b)
    }
}

/// `(a - b)^2 / mean(a, b)` with the configured face average and floor.
fn gradient_term(a: f64, b: f64, opts: &DissipationOptions) -> f64 {
    let d = a - b;
    if d == 0.0 {
        return 0.0;
    }
    let mean = match opts.face_average {
        FaceAverage::Logarithmic => log_mean(a, b),
        FaceAverage::Harmonic => {
            if a <= 0.0 || b <= 0.0 {
                0.0
            } else {
                2.0 * a * b / (a + b)
            }
        }
    };
    match opts.floor {
        Some(floor) => d * d / mean.max(floor),
        None if mean > 0.0 => d * d / mean,
        None => f64::INFINITY,
    }
}

/// `(a - b) log(a / b)`, zero when `a == b`.
fn reaction_term(a: f64, b: f64, floor: Option<f64>) -> f64 {
    if a == b {
        return 0.0;
    }
    match floor {
        Some(floor) => {
            let (fa, fb) = (a.max(floor), b.max(floor));
            (a - b) * log_ratio(fa, fb)
        }
        None if a > 0.0 && b > 0.0 => (a - b) * log_ratio(a, b),
        None => f64::INFINITY,
    }
}

/// The three contributions to the entropy dissipation.
pub fn dissipation_parts(
    state: &State,
    geom: &GridGeometry,
    params: &ModelParams,
    opts: &DissipationOptions,
) -> Result<DissipationParts> {
    state.check_shape(geom)?;
    state.check_nonnegative()?;
    let bulk: f64 = geom
        .bulk_faces
        .iter()
        .map(|f| f.transmissibility * gradient_term(state.u[f.a], state.u[f.b], opts))
        .sum();
    let surface = if params.delta_v > 0.0 {
        geom.surface_faces
            .iter()
            .map(|f| f.transmissibility * gradient_term(state.v[f.a], state.v[f.b], opts))
            .sum::<f64>()
    } else {
        0.0
    };
    let reaction: f64 = geom
        .trace_map
        .iter()
        .zip(&geom.gamma_cells)
        .zip(&state.v)
        .map(|((link, cell), &v)| {
            let u = state.u[link.bulk_cell];
            cell.measure * reaction_term(v.powf(params.beta), u.powf(params.alpha), opts.floor)
        })
        .sum();
    Ok(DissipationParts {
        bulk_diffusion: params.delta_u * bulk,
        surface_diffusion: params.delta_v * surface,
        reaction,
    })
}

/// Entropy dissipation with the given floor and logarithmic face averages.
pub fn dissipation(state: &State, geom: &GridGeometry, params: &ModelParams, floor: f64) -> Result<f64> {
    if !(floor > 0.0) {
        return Err(Error::invalid("dissipation floor must be positive"));
    }
    let opts = DissipationOptions { floor: Some(floor), ..Default::default() };
    Ok(dissipation_parts(state, geom, params, &opts)?.total())
}

/// Split of the relative entropy into the spatial-fluctuation part `i1` and
/// the mean-value part `i2`.
#[derive(Debug, Clone, Copy, PartialEq)]
pub struct EntropyParts {
    pub i1: f64,
    pub i2: f64,
}

pub(crate) struct Means {
    pub u_bar: f64,
    pub v_bar: f64,
}

pub(crate) fn means(state: &State, geom: &GridGeometry) -> Means {
    Means {
        u_bar: weighted_sum(&geom.omega_weights(), &state.u) / geom.omega_measure,
        v_bar: weighted_sum(&geom.gamma_weights(), &state.v) / geom.gamma_measure,
    }
}

fn fluctuation_entropy(values: &[f64], weights: &[f64], mean: f64) -> f64 {
    if mean == 0.0 {
        return 0.0;
    }
    values
        .iter()
        .zip(weights)
        .map(|(&x, &w)| w * mean * relative_entropy_density(x / mean))
        .sum()
}

pub(crate) fn entropy_parts_unchecked(state: &State, geom: &GridGeometry, eq: &Equilibrium) -> EntropyParts {
    let m = means(state, geom);
    let i1 = fluctuation_entropy(&state.u, &geom.omega_weights(), m.u_bar)
        + fluctuation_entropy(&state.v, &geom.gamma_weights(), m.v_bar);
    let i2 = geom.omega_measure * eq.u_inf * relative_entropy_density(m.u_bar / eq.u_inf)
        + geom.gamma_measure * eq.v_inf * relative_entropy_density(m.v_bar / eq.v_inf);
    EntropyParts { i1, i2 }
}

/// Decomposition `E(state) - E(equilibrium) = I1 + I2` for states carrying
/// the equilibrium's mass.
pub fn entropy_decomposition(
    state: &State,
    geom: &GridGeometry,
    params: &ModelParams,
    eq: &Equilibrium,
) -> Result<EntropyParts> {
    state.check_shape(geom)?;
    state.check_nonnegative()?;
    let m = mass_unchecked(state, geom, params);
    if (m - eq.mass).abs() > 1e-8 * eq.mass {
        return Err(Error::invalid(format!(
            "state mass {m} does not match equilibrium mass {}",
            eq.mass
        )));
    }
    Ok(entropy_parts_unchecked(state, geom, eq))
}

/// `E(state) - E(equilibrium)` evaluated through the decomposition, which is
/// free of the cancellation of the direct difference. The state is taken to
/// carry the equilibrium's mass; the extra term only appears for unequal
/// reaction rates.
pub(crate) fn relative_entropy_unchecked(
    state: &State,
    geom: &GridGeometry,
    params: &ModelParams,
    eq: &Equilibrium,
) -> (f64, EntropyParts) {
    let parts = entropy_parts_unchecked(state, geom, eq);
    let m = means(state, geom);
    let imbalance = geom.gamma_measure * (m.v_bar - eq.v_inf) * (params.k_u / params.k_v).ln() / params.beta;
    (parts.i1 + parts.i2 + imbalance, parts)
}

/// Constant of the Csiszar-Kullback-Pinsker type bound
/// `E - E_eq >= C (||u - u_inf||_1^2 + ||v - v_inf||_1^2)`.
pub fn ckp_constant(params: &ModelParams, mass: f64) -> Result<f64> {
    if !(mass > 0.0) {
        return Err(Error::invalid(format!("total mass must be positive, got {mass}")));
    }
    Ok(params.alpha.min(params.beta) / (8.0 * mass))
}

#[cfg(test)]
mod tests {
    use super::*;
    use proptest::prelude::*;

    fn p(alpha: f64, beta: f64, k_u: f64, k_v: f64) -> ModelParams {
        ModelParams::new(alpha, beta, 1.0, 1.0, k_u, k_v).unwrap()
    }

    fn close(a: f64, b: f64, tol: f64) -> bool {
        (a - b).abs() <= tol * a.abs().max(b.abs()).max(1e-300)
    }

    #[test]
    fn params_validation() {
        assert!(ModelParams::new(0.5, 1.0, 1.0, 0.0, 1.0, 1.0).is_err());
        assert!(ModelParams::new(1.0, 1.0, 0.0, 0.0, 1.0, 1.0).is_err());
        assert!(ModelParams::new(1.0, 1.0, 1.0, -1.0, 1.0, 1.0).is_err());
        assert!(ModelParams::new(1.0, 1.0, 1.0, 0.0, 0.0, 1.0).is_err());
        assert!(ModelParams::new(1.0, 1.0, 1.0, 0.0, 1.0, 1.0).unwrap().is_degenerate());
    }

    #[test]
    fn reaction_examples() {
        assert_eq!(reaction_f(&p(1.0, 1.0, 1.0, 1.0), 2.0, 1.0).unwrap(), -1.0);
        assert_eq!(reaction_f(&p(2.0, 2.0, 1.0, 1.0), 1.7, 1.7).unwrap(), 0.0);
        assert_eq!(reaction_f(&p(2.0, 1.0, 1.0, 1.0), 2.0, 3.0).unwrap(), -2.0);
        assert_eq!(reaction_g(&p(1.0, 1.0, 1.0, 1.0), 2.0, 1.0).unwrap(), 1.0);
        assert_eq!(reaction_g(&p(3.0, 3.0, 1.0, 1.0), 0.4, 0.4).unwrap(), 0.0);
        assert_eq!(reaction_g(&p(1.0, 3.0, 2.0, 1.0), 1.0, 1.0).unwrap(), 3.0);
        assert!(reaction_f(&p(1.0, 1.0, 1.0, 1.0), -1.0, 1.0).is_err());
        assert!(reaction_g(&p(1.0, 1.0, 1.0, 1.0), 1.0, -1e-3).is_err());
    }

    #[test]
    fn lipschitz_examples() {
        assert_eq!(lipschitz_bounds(&p(2.0, 1.0, 1.0, 1.0), 3.0, 0.0).unwrap().l_u, 6.0);
        assert_eq!(lipschitz_bounds(&p(1.0, 1.0, 5.0, 1.0), 123.0, 0.0).unwrap().l_u, 5.0);
        assert_eq!(lipschitz_bounds(&p(1.0, 1.0, 5.0, 1.0), 0.0, 0.0).unwrap().l_u, 5.0);
        assert_eq!(lipschitz_bounds(&p(1.0, 3.0, 1.0, 2.0), 1.0, 2.0).unwrap().l_v, 24.0);
    }

    #[test]
    fn shifted_examples() {
        let q = p(1.0, 1.0, 1.0, 1.0);
        assert_eq!(shifted_f(&q, 0.0, 2.0, 1.0).unwrap(), reaction_f(&q, 2.0, 1.0).unwrap());
        assert_eq!(shifted_f(&q, 1.0, 2.0, 1.0).unwrap(), 1.0);
        assert_eq!(shifted_g(&q, 0.0, 2.0, 1.0).unwrap(), reaction_g(&q, 2.0, 1.0).unwrap());

        let q = p(2.0, 1.0, 1.0, 1.0);
        let l = lipschitz_bounds(&q, 3.0, 3.0).unwrap();
        assert_eq!(l.l_u, 6.0);
        let vals: Vec<f64> = [1.0, 2.0, 3.0].iter().map(|&u| shifted_f(&q, l.l_u, u, 1.0).unwrap()).collect();
        assert!(vals[0] <= vals[1] && vals[1] <= vals[2], "{vals:?}");
    }

    #[test]
    fn constant_upper_examples() {
        assert_eq!(constant_upper_solution(&p(1.0, 1.0, 1.0, 1.0), 2.0, 1.0).unwrap(), (2.0, 2.0));
        let (a, b) = constant_upper_solution(&p(2.0, 1.0, 1.0, 1.0), 1.0, 4.0).unwrap();
        assert!(close(a, 2.0, 1e-15) && b == 4.0);
        let (a, b) = constant_upper_solution(&p(1.0, 1.0, 4.0, 1.0), 1.0, 1.0).unwrap();
        assert!(a == 1.0 && close(b, 4.0, 1e-15));
        assert!(matches!(
            constant_upper_solution(&p(1.0, 1.0, 1.0, 1.0), 0.0, 0.0),
            Err(Error::DegenerateInput(_))
        ));
    }

    #[test]
    fn initial_conditions() {
        let g = GridGeometry::build_interval(4, 1.0).unwrap();
        let st = InitialCondition::Step { u_low: 0.5, u_high: 2.0, v_low: 0.1, v_high: 1.0 }.build(&g).unwrap();
        assert_eq!(st.u, vec![2.0, 2.0, 0.5, 0.5]);
        assert_eq!(st.v, vec![1.0, 0.1]);
        let st = InitialCondition::Cosine { u_mean: 1.0, v_mean: 1.0, amplitude: 1.0 }.build(&g).unwrap();
        assert!(st.u.iter().chain(&st.v).all(|x| *x >= 0.0));
        assert!((st.v[0] - 0.0).abs() < 1e-15 && (st.v[1] - 2.0).abs() < 1e-15);
        assert!(InitialCondition::Cosine { u_mean: 1.0, v_mean: 1.0, amplitude: 1.5 }.build(&g).is_err());
        assert!(InitialCondition::Constant { u: -1.0, v: 1.0 }.build(&g).is_err());
    }

    #[test]
    fn mass_examples() {
        let g = GridGeometry::build_interval(4, 1.0).unwrap();
        let one = p(1.0, 1.0, 1.0, 1.0);
        assert!(close(mass(&State::constant(&g, 1.0, 1.0), &g, &one).unwrap(), 3.0, 1e-15));
        assert_eq!(mass(&State::constant(&g, 0.0, 0.0), &g, &one).unwrap(), 0.0);
        let q = p(2.0, 1.0, 1.0, 1.0);
        assert!(close(mass(&State::constant(&g, 1.0, 0.5), &g, &q).unwrap(), 3.0, 1e-15));
        let bad = State { u: vec![1.0; 3], v: vec![1.0; 2], time: 0.0 };
        assert!(mass(&bad, &g, &one).is_err());
    }

    #[test]
    fn equilibrium_examples() {
        let g = GridGeometry::build_interval(4, 1.0).unwrap();
        let eq = solve_equilibrium(&p(1.0, 1.0, 1.0, 1.0), &g, 3.0).unwrap();
        assert!(close(eq.u_inf, 1.0, 1e-14) && close(eq.v_inf, 1.0, 1e-14));

        // u + 2 u^2 = 3 has the root u = 1 (quadratic formula).
        let eq = solve_equilibrium_measures(&p(2.0, 1.0, 1.0, 1.0), 1.0, 1.0, 3.0).unwrap();
        assert!(close(eq.u_inf, 1.0, 1e-14) && close(eq.v_inf, 1.0, 1e-14));

        // u = v^2, 4u + v = 1: v = (sqrt(17) - 1) / 8.
        let eq = solve_equilibrium_measures(&p(1.0, 2.0, 1.0, 1.0), 2.0, 1.0, 1.0).unwrap();
        let v = (17f64.sqrt() - 1.0) / 8.0;
        assert!(close(eq.v_inf, v, 1e-13), "{}", eq.v_inf);
        assert!(close(eq.u_inf, v * v, 1e-13), "{}", eq.u_inf);

        assert!(solve_equilibrium(&p(1.0, 1.0, 1.0, 1.0), &g, 0.0).is_err());
        assert!(solve_equilibrium(&p(1.0, 1.0, 1.0, 1.0), &g, -1.0).is_err());
    }

    #[test]
    fn entropy_examples() {
        let g = GridGeometry::build_interval(4, 1.0).unwrap();
        assert!(close(entropy(&State::constant(&g, 1.0, 1.0), &g).unwrap(), -3.0, 1e-15));
        assert!(entropy(&State::constant(&g, std::f64::consts::E, std::f64::consts::E), &g).unwrap().abs() < 1e-15);
        assert_eq!(entropy(&State::constant(&g, 0.0, 0.0), &g).unwrap(), 0.0);
        let neg = State { u: vec![1.0, -1.0, 1.0, 1.0], v: vec![1.0; 2], time: 0.0 };
        assert!(entropy(&neg, &g).is_err());
    }

    #[test]
    fn dissipation_examples() {
        let g = GridGeometry::build_interval(4, 1.0).unwrap();
        let q = p(2.0, 1.0, 1.0, 1.0);
        // u^alpha = v^beta with constant fields.
        assert_eq!(dissipation(&State::constant(&g, 2.0, 4.0), &g, &q, 1e-30).unwrap(), 0.0);

        let one = p(1.0, 1.0, 1.0, 1.0);
        let d = dissipation(&State::constant(&g, 4.0, 1.0), &g, &one, 1e-30).unwrap();
        assert!(close(d, 6.0 * 4f64.ln(), 1e-14), "{d}");

        let s = GridGeometry::build_periodic_strip(6, 3, 1.0, 1.0).unwrap();
        let mut st = State::constant(&s, 1.0, 1.0);
        for (j, v) in st.v.iter_mut().enumerate() {
            *v = 1.0 + 0.3 * (j as f64).sin();
        }
        let deg = ModelParams::new(1.0, 1.0, 1.0, 0.0, 1.0, 1.0).unwrap();
        let parts = dissipation_parts(&st, &s, &deg, &DissipationOptions::default()).unwrap();
        assert_eq!(parts.surface_diffusion, 0.0);
        let parts = dissipation_parts(&st, &s, &one, &DissipationOptions::default()).unwrap();
        assert!(parts.surface_diffusion > 0.0);
    }

    #[test]
    fn dissipation_unfloored_sentinel() {
        let g = GridGeometry::build_interval(3, 1.0).unwrap();
        let one = p(1.0, 1.0, 1.0, 1.0);
        let st = State { u: vec![0.0, 1.0, 1.0], v: vec![1.0, 1.0], time: 0.0 };
        let opts = DissipationOptions { floor: None, ..Default::default() };
        assert_eq!(dissipation_parts(&st, &g, &one, &opts).unwrap().total(), f64::INFINITY);
        let floored = dissipation(&st, &g, &one, 1e-30).unwrap();
        assert!(floored.is_finite() && floored > 0.0);
    }

    #[test]
    fn harmonic_and_log_mean_agree_for_smooth_fields() {
        let g = GridGeometry::build_interval(40, 1.0).unwrap();
        let one = p(1.0, 1.0, 1.0, 1.0);
        let u: Vec<f64> = g.omega_cells.iter().map(|c| 1.0 + 0.2 * (3.0 * c.center[0]).cos()).collect();
        let st = State { u, v: vec![1.2, 0.8], time: 0.0 };
        let log = dissipation_parts(&st, &g, &one, &DissipationOptions::default()).unwrap();
        let harm = dissipation_parts(
            &st,
            &g,
            &one,
            &DissipationOptions { face_average: FaceAverage::Harmonic, ..Default::default() },
        )
        .unwrap();
        assert!(close(log.bulk_diffusion, harm.bulk_diffusion, 1e-3));
    }

    #[test]
    fn decomposition_examples() {
        let g = GridGeometry::build_interval(2, 1.0).unwrap();
        let one = p(1.0, 1.0, 1.0, 1.0);
        let eq = solve_equilibrium(&one, &g, 3.0).unwrap();
        let parts = entropy_decomposition(&eq.state(&g), &g, &one, &eq).unwrap();
        assert!(parts.i1.abs() < 1e-15 && parts.i2.abs() < 1e-15);

        let st = State { u: vec![2.0, 0.0], v: vec![1.0, 1.0], time: 0.0 };
        let parts = entropy_decomposition(&st, &g, &one, &eq).unwrap();
        assert!(close(parts.i1, 2f64.ln(), 1e-14), "{}", parts.i1);
        assert!(parts.i2.abs() < 1e-15);

        // Constant state with the same mass but away from equilibrium.
        let st = State::constant(&g, 1.5, 0.75);
        let parts = entropy_decomposition(&st, &g, &one, &eq).unwrap();
        assert!(parts.i1.abs() < 1e-15 && parts.i2 > 0.0);
        let direct = entropy(&st, &g).unwrap() - entropy(&eq.state(&g), &g).unwrap();
        assert!(close(parts.i1 + parts.i2, direct, 1e-10));

        let wrong = State::constant(&g, 1.0, 2.0);
        assert!(entropy_decomposition(&wrong, &g, &one, &eq).is_err());
    }

    #[test]
    fn ckp_examples() {
        assert_eq!(ckp_constant(&p(1.0, 2.0, 1.0, 1.0), 4.0).unwrap(), 1.0 / 32.0);
        assert_eq!(ckp_constant(&p(1.0, 1.0, 1.0, 1.0), 1.0).unwrap(), 1.0 / 8.0);
        assert_eq!(ckp_constant(&p(3.0, 2.0, 1.0, 1.0), 0.25).unwrap(), 1.0);
        assert!(ckp_constant(&p(1.0, 1.0, 1.0, 1.0), 0.0).is_err());
    }

    #[test]
    fn relative_entropy_density_series_matches_direct() {
        for &x in &[0.951, 0.97, 0.999, 1.0, 1.001, 1.03, 1.049] {
            let direct = x * f64::ln(x) - x + 1.0;
            assert!((relative_entropy_density(x) - direct).abs() < 1e-15, "{x}");
        }
        assert_eq!(relative_entropy_density(0.0), 1.0);
        let tiny = relative_entropy_density(1.0 + 1e-9);
        assert!(close(tiny, 0.5e-18, 1e-6));
    }

    proptest! {
        #[test]
        fn reaction_antisymmetry(alpha in 1.0..5.0f64, beta in 1.0..5.0f64,
                                 ku in 0.1..10.0f64, kv in 0.1..10.0f64,
                                 u in 0.0..5.0f64, v in 0.0..5.0f64) {
            let q = p(alpha, beta, ku, kv);
            let f = reaction_f(&q, u, v).unwrap();
            let g = reaction_g(&q, u, v).unwrap();
            let scale = (beta * f).abs().max(1e-300);
            prop_assert!((beta * f + alpha * g).abs() <= 1e-12 * scale);
        }

        #[test]
        fn quasi_monotone(alpha in 1.0..5.0f64, beta in 1.0..5.0f64,
                          u1 in 0.0..4.0f64, du in 0.0..2.0f64,
                          v1 in 0.0..4.0f64, dv in 0.0..2.0f64) {
            let q = p(alpha, beta, 1.3, 0.7);
            let (u2, v2) = (u1 + du, v1 + dv);
            // F non-decreasing in v, non-increasing in u; G the other way.
            prop_assert!(q.bulk_flux(u1, v2) >= q.bulk_flux(u1, v1));
            prop_assert!(q.bulk_flux(u2, v1) <= q.bulk_flux(u1, v1));
            prop_assert!(q.surface_source(u2, v1) >= q.surface_source(u1, v1));
            prop_assert!(q.surface_source(u1, v2) <= q.surface_source(u1, v1));
        }

        #[test]
        fn shifted_monotone_on_box(alpha in 1.0..4.0f64, beta in 1.0..4.0f64,
                                   ubar in 0.1..5.0f64, vbar in 0.1..5.0f64,
                                   s1 in 0.0..1.0f64, s2 in 0.0..1.0f64, t in 0.0..1.0f64) {
            let q = p(alpha, beta, 1.0, 2.0);
            let l = lipschitz_bounds(&q, ubar, vbar).unwrap();
            let (lo, hi) = (s1.min(s2), s1.max(s2));
            let tol = 1e-12 * (1.0 + q.k_u * ubar.powf(alpha) + q.k_v * vbar.powf(beta)) * alpha.max(beta);
            let v = t * vbar;
            let u = t * ubar;
            prop_assert!(shifted_f(&q, l.l_u, hi * ubar, v).unwrap() + tol >= shifted_f(&q, l.l_u, lo * ubar, v).unwrap());
            prop_assert!(shifted_g(&q, l.l_v, u, hi * vbar).unwrap() + tol >= shifted_g(&q, l.l_v, u, lo * vbar).unwrap());
            // f is also non-decreasing in v and g in u everywhere.
            prop_assert!(shifted_f(&q, l.l_u, u, hi * vbar).unwrap() + tol >= shifted_f(&q, l.l_u, u, lo * vbar).unwrap());
            prop_assert!(shifted_g(&q, l.l_v, hi * ubar, v).unwrap() + tol >= shifted_g(&q, l.l_v, lo * ubar, v).unwrap());
        }

        #[test]
        fn equilibrium_residuals(alpha in 1.0..5.0f64, beta in 1.0..5.0f64,
                                 om in 0.1..10.0f64, ga in 0.1..10.0f64, m in 0.01..100.0f64,
                                 ku in 0.2..5.0f64, kv in 0.2..5.0f64) {
            let q = p(alpha, beta, ku, kv);
            let eq = solve_equilibrium_measures(&q, om, ga, m).unwrap();
            let fwd = ku * eq.u_inf.powf(alpha);
            let bwd = kv * eq.v_inf.powf(beta);
            prop_assert!(close(fwd, bwd, 1e-12), "{fwd} vs {bwd}");
            prop_assert!(close(beta * om * eq.u_inf + alpha * ga * eq.v_inf, m, 1e-12));
            prop_assert!(eq.u_inf > 0.0 && eq.v_inf > 0.0);
        }

        #[test]
        fn decomposition_identity(seed in 0u64..1000, alpha in 1.0..3.0f64, beta in 1.0..3.0f64) {
            let g = GridGeometry::build_periodic_strip(5, 3, 1.0, 1.0).unwrap();
            let q = p(alpha, beta, 1.0, 1.0);
            let mut x = seed as f64 * 0.618;
            let mut next = || { x = (x * 7.31 + 0.17).fract(); 0.05 + 2.0 * x };
            let u: Vec<f64> = (0..g.n_omega()).map(|_| next()).collect();
            let v: Vec<f64> = (0..g.n_gamma()).map(|_| next()).collect();
            let st = State { u, v, time: 0.0 };
            let m = mass(&st, &g, &q).unwrap();
            let eq = solve_equilibrium(&q, &g, m).unwrap();
            let parts = entropy_decomposition(&st, &g, &q, &eq).unwrap();
            let direct = entropy(&st, &g).unwrap() - entropy(&eq.state(&g), &g).unwrap();
            prop_assert!(parts.i1 >= 0.0 && parts.i2 >= 0.0);
            prop_assert!((parts.i1 + parts.i2 - direct).abs() <= 1e-10 * direct.abs().max(1.0));
        }
    }
}
