//! The single-profile equation `iΦ_t + Φ_σσ + ωΦ(1-|Φ|²)/|Φ|² = 0` obtained
//! from the rotating-polygon ansatz `Ψ_j = X_j Φ`, its energy, the comparison
//! with the Gross–Pitaevskii energy, Galilean boosts and the exact collision
//! profile of the stationary centered polygon.

use num_complex::Complex64;
use rayon::prelude::*;
use thiserror::Error;

use crate::point_vortex::VortexConfig;
use crate::spectral::{
    derivative, derivatives_with, linear_propagate, quad_trapezoid, second_derivative,
    spectral_shift, ComplexField, PhaseTwist, SpectralError,
};

/// Modulus floor below which the nonlinearity is considered singular.
pub const DEFAULT_DELTA_MOD: f64 = 0.05;
/// Energy threshold under which `‖|Φ|²-1‖_∞ ≤ 1/4` is expected.
pub const DEFAULT_ETA1: f64 = 0.01;
pub const DEFAULT_BOUNDARY_TOL: f64 = 1e-10;
/// Verified lower constant in `κ (x-1)² ≤ x-1-ln x` on `[3/4, 5/4]`.
pub const CONVEXITY_LOWER: f64 = 0.42;
/// Upper constant in the same inequality (loose; the true maximum is about 0.603).
pub const CONVEXITY_UPPER: f64 = 10.0;
/// Energy comparison `E_low·E_GP ≤ E ≤ E_high·E_GP` implied by the constants above.
pub const COMPARISON_LOW: f64 = 2.0 * CONVEXITY_LOWER;
pub const COMPARISON_HIGH: f64 = 5.0;

#[derive(Debug, Error, Clone, PartialEq)]
pub enum ReducedError {
    #[error("min |Φ| = {min_modulus:.3e} fell below {floor} at t = {time}")]
    ZeroModulus {
        time: f64,
        min_modulus: f64,
        floor: f64,
    },
    #[error("precondition violated: {0}")]
    PreconditionViolated(String),
    #[error("energy comparison failed: E = {energy:e}, E_GP = {energy_gp:e}")]
    ComparisonFailed { energy: f64, energy_gp: f64 },
    #[error("E = {energy:e} below η₁ = {eta1} but ‖|Φ|²-1‖_∞ = {sup_dev} > 1/4")]
    GinzburgViolated { energy: f64, eta1: f64, sup_dev: f64 },
    #[error("ν = {nu} is not a grid wavenumber for L = {half_length}")]
    IncompatibleWavenumber { nu: f64, half_length: f64 },
    #[error("at t = {time}: {source}")]
    Boundary { time: f64, source: SpectralError },
}

/// Profile `Φ` together with the rotation rate and an optional phase twist
/// (needed for profiles whose far-field phases differ at `±L`).
#[derive(Debug, Clone)]
pub struct PhiState {
    pub phi: ComplexField,
    pub omega: f64,
    pub time: f64,
    pub twist: Option<PhaseTwist>,
}

impl PhiState {
    pub fn new(phi: ComplexField, omega: f64) -> Self {
        Self {
            phi,
            omega,
            time: 0.0,
            twist: None,
        }
    }

    pub fn with_twist(mut self, twist: PhaseTwist) -> Self {
        self.twist = Some(twist);
        self
    }
}

#[derive(Debug, Clone, Copy, PartialEq)]
pub struct EnergySample {
    pub time: f64,
    pub energy: f64,
    pub energy_gp: f64,
    /// `‖|Φ|² - 1‖_∞`
    pub sup_dev: f64,
    pub min_mod: f64,
}

fn check_modulus(phi: &ComplexField, time: f64, floor: f64) -> Result<(), ReducedError> {
    let m = phi.min_modulus();
    if m.is_finite() && m >= floor {
        Ok(())
    } else {
        Err(ReducedError::ZeroModulus {
            time,
            min_modulus: m,
            floor,
        })
    }
}

/// `‖|Φ|² - 1‖_∞`
pub fn sup_dev(phi: &ComplexField) -> f64 {
    phi.values()
        .iter()
        .map(|z| (z.norm_sqr() - 1.0).abs())
        .fold(0.0, f64::max)
}

fn kinetic(phi: &ComplexField, twist: Option<&PhaseTwist>) -> f64 {
    let (d1, _) = derivatives_with(phi, twist);
    let dens: Vec<f64> = d1.iter().map(|z| z.norm_sqr()).collect();
    0.5 * quad_trapezoid(phi.grid(), &dens)
}

/// `E(Φ) = ½∫|Φ'|² + (ω/2)∫(|Φ|² - 1 - ln|Φ|²)`.
pub fn energy_bm(phi: &ComplexField, omega: f64) -> Result<f64, ReducedError> {
    energy_bm_with(phi, omega, None)
}

pub fn energy_bm_with(
    phi: &ComplexField,
    omega: f64,
    twist: Option<&PhaseTwist>,
) -> Result<f64, ReducedError> {
    check_modulus(phi, f64::NAN, f64::MIN_POSITIVE)?;
    let pot: Vec<f64> = phi
        .values()
        .iter()
        .map(|z| {
            let x = z.norm_sqr();
            log_defect(x)
        })
        .collect();
    Ok(kinetic(phi, twist) + 0.5 * omega * quad_trapezoid(phi.grid(), &pot))
}

/// `x - 1 - ln x`, accurate near `x = 1`.
pub fn log_defect(x: f64) -> f64 {
    let d = x - 1.0;
    if d.abs() < 0.1 {
        // d² Σ_{k≥2} (-d)^{k-2} / k
        d * d * (2..=24).rev().fold(0.0, |p, k| p * -d + 1.0 / k as f64)
    } else {
        d - x.ln()
    }
}

/// `(x - 1 - ln x) / (x - 1)²`, equal to `1/2` at `x = 1`.
pub fn convexity_ratio(x: f64) -> f64 {
    let d = x - 1.0;
    if d == 0.0 {
        0.5
    } else {
        log_defect(x) / (d * d)
    }
}

/// Extremes of [`convexity_ratio`] on a uniform grid over `[lo, hi]`.
#[derive(Debug, Clone, Copy, PartialEq)]
pub struct ConvexityScan {
    pub min: f64,
    pub argmin: f64,
    pub max: f64,
    pub argmax: f64,
}

pub fn convexity_scan(lo: f64, hi: f64, step: f64) -> ConvexityScan {
    let n = ((hi - lo) / step).round() as usize;
    let mut out = ConvexityScan {
        min: f64::INFINITY,
        argmin: lo,
        max: f64::NEG_INFINITY,
        argmax: lo,
    };
    for k in 0..=n {
        let x = if k == n { hi } else { lo + step * k as f64 };
        let r = convexity_ratio(x);
        if r < out.min {
            out.min = r;
            out.argmin = x;
        }
        if r > out.max {
            out.max = r;
            out.argmax = x;
        }
    }
    out
}

/// `E_GP(Φ) = ½∫|Φ'|² + (ω/4)∫(|Φ|² - 1)²`.
pub fn energy_gp(phi: &ComplexField, omega: f64) -> f64 {
    energy_gp_with(phi, omega, None)
}

pub fn energy_gp_with(phi: &ComplexField, omega: f64, twist: Option<&PhaseTwist>) -> f64 {
    let pot: Vec<f64> = phi
        .values()
        .iter()
        .map(|z| (z.norm_sqr() - 1.0).powi(2))
        .collect();
    kinetic(phi, twist) + 0.25 * omega * quad_trapezoid(phi.grid(), &pot)
}

#[derive(Debug, Clone, Copy, PartialEq)]
pub struct EnergyComparison {
    pub energy: f64,
    pub energy_gp: f64,
    /// `E / E_GP`, `None` when both vanish.
    pub ratio: Option<f64>,
    /// Whether the sharper lower bound `E_GP ≤ E` also holds.
    pub unit_lower_holds: bool,
}

/// Checks `0.84·E_GP ≤ E ≤ 5·E_GP` under `‖|Φ|² - 1‖_∞ ≤ 1/4`.
pub fn compare_energies(phi: &ComplexField, omega: f64) -> Result<EnergyComparison, ReducedError> {
    let dev = sup_dev(phi);
    if dev > 0.25 + 1e-12 {
        return Err(ReducedError::PreconditionViolated(format!(
            "‖|Φ|²-1‖_∞ = {dev} exceeds 1/4"
        )));
    }
    let energy = energy_bm(phi, omega)?;
    let energy_gp = energy_gp(phi, omega);
    let slack = 1e-13 * energy_gp.max(f64::MIN_POSITIVE);
    if energy_gp <= f64::MIN_POSITIVE && energy <= f64::MIN_POSITIVE {
        return Ok(EnergyComparison {
            energy,
            energy_gp,
            ratio: None,
            unit_lower_holds: true,
        });
    }
    if energy + slack < COMPARISON_LOW * energy_gp || energy > COMPARISON_HIGH * energy_gp + slack {
        return Err(ReducedError::ComparisonFailed { energy, energy_gp });
    }
    Ok(EnergyComparison {
        energy,
        energy_gp,
        ratio: Some(energy / energy_gp),
        unit_lower_holds: energy + slack >= energy_gp,
    })
}

#[derive(Debug, Clone, Copy, PartialEq)]
pub struct GinzburgReport {
    pub energy: f64,
    pub sup_dev: f64,
    /// True when `E ≤ η₁`, so the modulus bound was actually asserted.
    pub asserted: bool,
}

/// If `E(Φ) ≤ η₁` then `‖|Φ|² - 1‖_∞ ≤ 1/4` must hold.
pub fn check_ginzburg(phi: &ComplexField, omega: f64, eta1: f64) -> Result<GinzburgReport, ReducedError> {
    check_ginzburg_with(phi, omega, eta1, None)
}

pub fn check_ginzburg_with(
    phi: &ComplexField,
    omega: f64,
    eta1: f64,
    twist: Option<&PhaseTwist>,
) -> Result<GinzburgReport, ReducedError> {
    let energy = energy_bm_with(phi, omega, twist)?;
    let dev = sup_dev(phi);
    let asserted = energy <= eta1;
    if asserted && dev > 0.25 {
        return Err(ReducedError::GinzburgViolated {
            energy,
            eta1,
            sup_dev: dev,
        });
    }
    Ok(GinzburgReport {
        energy,
        sup_dev: dev,
        asserted,
    })
}

pub fn energy_sample(state: &PhiState) -> Result<EnergySample, ReducedError> {
    let tw = state.twist.as_ref();
    Ok(EnergySample {
        time: state.time,
        energy: energy_bm_with(&state.phi, state.omega, tw)?,
        energy_gp: energy_gp_with(&state.phi, state.omega, tw),
        sup_dev: sup_dev(&state.phi),
        min_mod: state.phi.min_modulus(),
    })
}

/// How the pointwise nonlinear flow `Φ_t = iωΦ(1-|Φ|²)/|Φ|²` is advanced.
#[derive(Debug, Clone, Copy, PartialEq, Eq, Default)]
pub enum NonlinearSubstep {
    /// Classical RK4 per grid node.
    #[default]
    Rk4,
    /// The flow conserves `|Φ|`, so it is a phase rotation by `ω dt (1-|Φ|²)/|Φ|²`.
    ExactPhase,
}

/// Strang splitting parameters for the reduced equation.
#[derive(Debug, Clone, Copy, PartialEq)]
pub struct BmSolver {
    pub delta_mod: f64,
    /// Edge tolerance checked after every step; `None` disables the guard
    /// (used for boosted fields, which are periodic but do not decay).
    pub boundary_tol: Option<f64>,
    pub nonlinear: NonlinearSubstep,
}

impl Default for BmSolver {
    fn default() -> Self {
        Self {
            delta_mod: DEFAULT_DELTA_MOD,
            boundary_tol: Some(DEFAULT_BOUNDARY_TOL),
            nonlinear: NonlinearSubstep::Rk4,
        }
    }
}

#[inline]
fn bm_force(z: Complex64, omega: f64) -> Complex64 {
    let m2 = z.norm_sqr();
    Complex64::i() * omega * z * ((1.0 - m2) / m2)
}

fn pointwise_rk4(z: Complex64, omega: f64, dt: f64) -> Complex64 {
    let k1 = bm_force(z, omega);
    let k2 = bm_force(z + 0.5 * dt * k1, omega);
    let k3 = bm_force(z + 0.5 * dt * k2, omega);
    let k4 = bm_force(z + dt * k3, omega);
    z + (k1 + 2.0 * k2 + 2.0 * k3 + k4) * (dt / 6.0)
}

fn pointwise_exact(z: Complex64, omega: f64, dt: f64) -> Complex64 {
    let m2 = z.norm_sqr();
    z * Complex64::from_polar(1.0, omega * dt * (1.0 - m2) / m2)
}

/// Right-hand side of the twisted nonlinear substep for `w = e^{-iχ}Φ`:
/// `w_t = -2χ'w' - χ''w - iχ'²w + iωw(1-|w|²)/|w|²`.
fn twisted_force(w: &ComplexField, twist: &PhaseTwist, omega: f64) -> Vec<Complex64> {
    let dw = derivative(w);
    let i = Complex64::i();
    w.grid()
        .nodes()
        .par_iter()
        .zip(w.values().par_iter())
        .zip(dw.values().par_iter())
        .map(|((&s, &z), &z1)| {
            let (c1, c2) = (twist.dchi(s), twist.d2chi(s));
            -2.0 * c1 * z1 - c2 * z - i * c1 * c1 * z + bm_force(z, omega)
        })
        .collect()
}

impl BmSolver {
    /// One Strang step: half linear, full nonlinear, half linear.
    pub fn step(&self, state: &PhiState, dt: f64) -> Result<PhiState, ReducedError> {
        let omega = state.omega;
        let t_end = state.time + dt;
        let guard = |f: &ComplexField, t: f64| -> Result<(), ReducedError> {
            if omega != 0.0 {
                check_modulus(f, t, self.delta_mod)?;
            }
            Ok(())
        };
        guard(&state.phi, state.time)?;
        let phi = match state.twist {
            None => {
                let mut f = linear_propagate(&state.phi, 1.0, 0.5 * dt);
                guard(&f, state.time)?;
                if omega != 0.0 {
                    let mode = self.nonlinear;
                    f.values_mut().par_iter_mut().for_each(|z| {
                        *z = match mode {
                            NonlinearSubstep::Rk4 => pointwise_rk4(*z, omega, dt),
                            NonlinearSubstep::ExactPhase => pointwise_exact(*z, omega, dt),
                        }
                    });
                    guard(&f, t_end)?;
                }
                linear_propagate(&f, 1.0, 0.5 * dt)
            }
            Some(tw) => {
                let w = linear_propagate(&tw.untwist(&state.phi), 1.0, 0.5 * dt);
                guard(&w, state.time)?;
                let axpy = |a: &ComplexField, k: &[Complex64], h: f64| {
                    a.with_values(a.values().iter().zip(k).map(|(x, y)| x + y * h).collect())
                };
                let k1 = twisted_force(&w, &tw, omega);
                let w2 = axpy(&w, &k1, 0.5 * dt);
                guard(&w2, state.time)?;
                let k2 = twisted_force(&w2, &tw, omega);
                let w3 = axpy(&w, &k2, 0.5 * dt);
                guard(&w3, state.time)?;
                let k3 = twisted_force(&w3, &tw, omega);
                let w4 = axpy(&w, &k3, dt);
                guard(&w4, state.time)?;
                let k4 = twisted_force(&w4, &tw, omega);
                let values = (0..w.len())
                    .map(|n| w.values()[n] + (k1[n] + 2.0 * k2[n] + 2.0 * k3[n] + k4[n]) * (dt / 6.0))
                    .collect();
                let w = w.with_values(values);
                guard(&w, t_end)?;
                tw.retwist(&linear_propagate(&w, 1.0, 0.5 * dt))
            }
        };
        guard(&phi, t_end)?;
        if let Some(tol) = self.boundary_tol {
            let probe = match &state.twist {
                Some(tw) => tw.untwist(&phi),
                None => phi.clone(),
            };
            probe
                .check_boundary(tol)
                .map_err(|source| ReducedError::Boundary { time: t_end, source })?;
        }
        Ok(PhiState {
            phi,
            omega,
            time: t_end,
            twist: state.twist,
        })
    }

    /// Runs `⌈T/dt⌉` steps (the last one shortened to land on `T`), keeping
    /// every `sample_every`-th state and the final one.
    pub fn evolve(
        &self,
        state: &PhiState,
        t_end: f64,
        dt: f64,
        sample_every: usize,
    ) -> Result<BmRun, ReducedError> {
        let every = sample_every.max(1);
        let mut run = BmRun {
            states: vec![state.clone()],
            samples: vec![energy_sample(state)?],
        };
        let steps = if t_end > 0.0 {
            (t_end / dt - 1e-9).ceil().max(1.0) as usize
        } else {
            0
        };
        let mut cur = state.clone();
        let t0 = state.time;
        for n in 1..=steps {
            let target = (t0 + n as f64 * dt).min(t0 + t_end);
            cur = self.step(&cur, target - cur.time)?;
            cur.time = target;
            if n % every == 0 || n == steps {
                run.samples.push(energy_sample(&cur)?);
                run.states.push(cur.clone());
            }
        }
        Ok(run)
    }
}

pub fn step_bm(state: &PhiState, dt: f64) -> Result<PhiState, ReducedError> {
    BmSolver::default().step(state, dt)
}

#[derive(Debug, Clone)]
pub struct BmRun {
    pub states: Vec<PhiState>,
    pub samples: Vec<EnergySample>,
}

impl BmRun {
    /// `max |E(t) - E(0)| / max(E(0), 1e-12)`.
    pub fn relative_energy_drift(&self) -> f64 {
        let e0 = self.samples[0].energy;
        self.samples
            .iter()
            .map(|s| (s.energy - e0).abs())
            .fold(0.0, f64::max)
            / e0.max(1e-12)
    }
}

pub fn evolve_bm(
    state: &PhiState,
    t_end: f64,
    dt: f64,
    sample_every: usize,
) -> Result<BmRun, ReducedError> {
    BmSolver::default().evolve(state, t_end, dt, sample_every)
}

/// Pointwise residual `‖iΦ_t + Φ'' + ωΦ(1-|Φ|²)/|Φ|²‖_∞` at the middle of
/// three equally spaced snapshots, with a centered difference in time.
pub fn bm_residual(
    before: &ComplexField,
    middle: &ComplexField,
    after: &ComplexField,
    dt: f64,
    omega: f64,
    twist: Option<&PhaseTwist>,
) -> f64 {
    let (_, d2) = derivatives_with(middle, twist);
    let i = Complex64::i();
    (0..middle.len())
        .map(|n| {
            let dt_phi = (after.values()[n] - before.values()[n]) / (2.0 * dt);
            let z = middle.values()[n];
            (i * dt_phi + d2[n] + bm_force(z, omega) / i).norm()
        })
        .fold(0.0, f64::max)
}

fn check_wavenumber(phi: &ComplexField, nu: f64) -> Result<(), ReducedError> {
    if phi.grid().is_grid_wavenumber(nu) {
        Ok(())
    } else {
        Err(ReducedError::IncompatibleWavenumber {
            nu,
            half_length: phi.grid().half_length(),
        })
    }
}

/// `e^{iνσ} Φ₀`, the boosted profile at `t = 0`.
///
/// For `ν ≠ 0` the result no longer tends to a constant; it is periodic on
/// the box, so its background is set to zero.
pub fn galilean_boost(phi0: &ComplexField, nu: f64) -> Result<ComplexField, ReducedError> {
    check_wavenumber(phi0, nu)?;
    if nu == 0.0 {
        return Ok(phi0.clone());
    }
    let nodes = phi0.grid().nodes();
    let values = phi0
        .values()
        .iter()
        .zip(nodes)
        .map(|(&z, &s)| z * Complex64::from_polar(1.0, nu * s))
        .collect();
    Ok(phi0
        .with_values(values)
        .with_background(Complex64::new(0.0, 0.0)))
}

/// `Φ_ν(t,σ) = e^{-itν² + iνσ} Φ(t, σ - 2tν)` along a trajectory.
pub fn boost_trajectory(states: &[PhiState], nu: f64) -> Result<Vec<ComplexField>, ReducedError> {
    states
        .iter()
        .map(|st| {
            check_wavenumber(&st.phi, nu)?;
            let shifted = match &st.twist {
                Some(tw) => tw.shift(&st.phi, 2.0 * st.time * nu),
                None => spectral_shift(&st.phi, 2.0 * st.time * nu),
            };
            let carrier = Complex64::from_polar(1.0, -st.time * nu * nu);
            let nodes = shifted.grid().nodes();
            let values = shifted
                .values()
                .iter()
                .zip(nodes)
                .map(|(&z, &s)| carrier * z * Complex64::from_polar(1.0, nu * s))
                .collect();
            let bg = if nu == 0.0 {
                shifted.background()
            } else {
                Complex64::new(0.0, 0.0)
            };
            Ok(shifted.with_values(values).with_background(bg))
        })
        .collect()
}

/// Exact solution `Φ(t,σ) = 1 - e^{-σ²/z}/√z`, `z = 1 - 4i(1-t)`, of the
/// linear equation reached when the polygon is stationary.
pub fn analytic_collision_phi(t: f64, sigma: f64) -> Complex64 {
    let z = Complex64::new(1.0, -4.0 * (1.0 - t));
    1.0 - (-(sigma * sigma) / z).exp() / z.sqrt()
}

/// Lower bound `1 - (1 + 16(1-t)²)^{-1/4}` on `|Φ(t,σ)|` for `t ∈ [0,1)`,
/// from `|e^{-σ²/z}| ≤ 1` and `|√z| = |z|^{1/2}`.
pub fn collision_modulus_bound(t: f64) -> f64 {
    1.0 - (1.0 + 16.0 * (1.0 - t).powi(2)).powf(-0.25)
}

/// The variant `1 - (1 + 16(1-t)²)^{-1/2}`. It is violated by the exact
/// profile for small `t` (`|Φ(0,0)| ≈ 0.683 < 0.757`).
pub fn collision_modulus_bound_sqrt(t: f64) -> f64 {
    1.0 - 1.0 / (1.0 + 16.0 * (1.0 - t).powi(2)).sqrt()
}

/// The collision profile sampled at time `t`.
pub fn collision_field(grid: &std::sync::Arc<crate::spectral::Grid1D>, t: f64) -> ComplexField {
    ComplexField::from_fn(grid, Complex64::new(1.0, 0.0), |s| analytic_collision_phi(t, s))
}

/// `Ψ_j(t,σ) = X_j(t) Φ(t,σ)` for every snapshot of a reduced trajectory.
pub fn reconstruct_filaments(states: &[PhiState], cfg: &VortexConfig) -> Vec<Vec<ComplexField>> {
    states
        .iter()
        .map(|st| {
            cfg.rotated(st.time)
                .into_iter()
                .map(|x| {
                    let bg = st.phi.background() * x;
                    st.phi.map(|z| z * x).with_background(bg)
                })
                .collect()
        })
        .collect()
}

/// Spectral residual `‖iΦ_t + Φ''‖_∞` of the exact collision profile at `t`.
pub fn collision_residual(grid: &std::sync::Arc<crate::spectral::Grid1D>, t: f64) -> f64 {
    let phi = collision_field(grid, t);
    let d2 = second_derivative(&phi);
    let i = Complex64::i();
    grid.nodes()
        .iter()
        .zip(d2.values())
        .map(|(&s, &f2)| {
            let z = Complex64::new(1.0, -4.0 * (1.0 - t));
            let g = (-(s * s) / z).exp() / z.sqrt();
            // ∂_t of -g: dz/dt = 4i, ∂_z g = g(σ²/z² - 1/(2z))
            let phi_t = -g * (s * s / (z * z) - 0.5 / z) * Complex64::new(0.0, 4.0);
            (i * phi_t + f2).norm()
        })
        .fold(0.0, f64::max)
}
