//! Point vortices in the plane: relative equilibria, RK4 integration,
//! conserved quantities and linear stability of rotating polygons.

use std::f64::consts::PI;

use nalgebra::DMatrix;
use num_complex::Complex64;
use thiserror::Error;

/// Default minimal pairwise distance before the velocity field is declared singular.
pub const DEFAULT_DELTA_MIN: f64 = 1e-8;

/// Threshold on `max Re λ` separating rounding noise from a genuine instability.
pub const STABILITY_THRESHOLD: f64 = 1e-8;

#[derive(Debug, Error, Clone, PartialEq)]
pub enum VortexError {
    #[error("invalid polygon: {0}")]
    InvalidPolygon(String),
    #[error("vortices {pair:?} closer than {threshold:e} (distance {distance:.3e}) at t = {time}")]
    NearCollision {
        time: f64,
        pair: (usize, usize),
        distance: f64,
        threshold: f64,
    },
    #[error("time step {dt} exceeds the stability guard {limit:.3e}")]
    StepTooLarge { dt: f64, limit: f64 },
    #[error("positions and circulations differ in length")]
    LengthMismatch,
}

/// Positions and circulations of `N` point vortices.
///
/// When `has_center` is set, index 0 is the center vortex and the polygon
/// vertices follow.
#[derive(Debug, Clone, PartialEq)]
pub struct VortexConfig {
    pub positions: Vec<Complex64>,
    pub circulations: Vec<f64>,
    pub has_center: bool,
    pub omega: Option<f64>,
}

impl VortexConfig {
    pub fn new(positions: Vec<Complex64>, circulations: Vec<f64>) -> Result<Self, VortexError> {
        if positions.len() != circulations.len() {
            return Err(VortexError::LengthMismatch);
        }
        Ok(Self {
            positions,
            circulations,
            has_center: false,
            omega: None,
        })
    }

    pub fn len(&self) -> usize {
        self.positions.len()
    }

    pub fn is_empty(&self) -> bool {
        self.positions.is_empty()
    }

    /// Index range of the polygon vertices.
    pub fn vertex_range(&self) -> std::ops::Range<usize> {
        let start = usize::from(self.has_center);
        start..self.len()
    }

    /// Minimal pairwise distance `d` and the pair realizing it.
    pub fn min_distance(&self) -> (f64, (usize, usize)) {
        let mut best = (f64::INFINITY, (0, 0));
        for j in 0..self.len() {
            for k in j + 1..self.len() {
                let d = (self.positions[j] - self.positions[k]).norm();
                if d < best.0 {
                    best = (d, (j, k));
                }
            }
        }
        best
    }

    /// Positions after rigid rotation by `ω t` (the exact motion of a relative equilibrium).
    pub fn rotated(&self, t: f64) -> Vec<Complex64> {
        let omega = self.omega.unwrap_or(0.0);
        let phase = Complex64::from_polar(1.0, omega * t);
        self.positions.iter().map(|&x| x * phase).collect()
    }

    fn check_separation(&self, delta_min: f64, time: f64) -> Result<(), VortexError> {
        if self.len() < 2 {
            return Ok(());
        }
        let (distance, pair) = self.min_distance();
        if distance < delta_min || !distance.is_finite() {
            return Err(VortexError::NearCollision {
                time,
                pair,
                distance,
                threshold: delta_min,
            });
        }
        Ok(())
    }
}

/// Regular `N`-gon of radius `R` with equal vertex circulation `Γ`,
/// optionally with a center vortex of circulation `Γ₀`.
///
/// Rotation rate `ω = [Γ(N-1) + 2Γ₀] / (2R²)` (with `Γ₀ = 0` when absent).
pub fn polygon_config(
    n: usize,
    radius: f64,
    gamma: f64,
    center_circulation: Option<f64>,
) -> Result<VortexConfig, VortexError> {
    if n < 2 {
        return Err(VortexError::InvalidPolygon(format!("need N >= 2, got {n}")));
    }
    if !(radius.is_finite() && radius > 0.0) {
        return Err(VortexError::InvalidPolygon(format!(
            "radius must be positive, got {radius}"
        )));
    }
    let mut positions = Vec::with_capacity(n + 1);
    let mut circulations = Vec::with_capacity(n + 1);
    if let Some(g0) = center_circulation {
        positions.push(Complex64::new(0.0, 0.0));
        circulations.push(g0);
    }
    for m in 0..n {
        positions.push(Complex64::from_polar(radius, 2.0 * PI * m as f64 / n as f64));
        circulations.push(gamma);
    }
    let g0 = center_circulation.unwrap_or(0.0);
    let omega = (gamma * (n as f64 - 1.0) + 2.0 * g0) / (2.0 * radius * radius);
    Ok(VortexConfig {
        positions,
        circulations,
        has_center: center_circulation.is_some(),
        omega: Some(omega),
    })
}

/// Velocities `dX_j/dt = i Σ_{k≠j} Γ_k (X_j - X_k) / |X_j - X_k|²`.
pub fn rhs(cfg: &VortexConfig) -> Result<Vec<Complex64>, VortexError> {
    rhs_guarded(cfg, DEFAULT_DELTA_MIN, 0.0)
}

fn rhs_guarded(cfg: &VortexConfig, delta_min: f64, time: f64) -> Result<Vec<Complex64>, VortexError> {
    cfg.check_separation(delta_min, time)?;
    Ok(velocities(&cfg.positions, &cfg.circulations))
}

fn velocities(positions: &[Complex64], circulations: &[f64]) -> Vec<Complex64> {
    let n = positions.len();
    let mut out = vec![Complex64::new(0.0, 0.0); n];
    for j in 0..n {
        let mut acc = Complex64::new(0.0, 0.0);
        for k in 0..n {
            if k != j {
                let d = positions[j] - positions[k];
                acc += circulations[k] * d / d.norm_sqr();
            }
        }
        out[j] = Complex64::i() * acc;
    }
    out
}

/// The four conserved quantities of the point-vortex flow.
#[derive(Debug, Clone, Copy, PartialEq)]
pub struct Invariants {
    /// `Σ Γ_j X_j`
    pub center_of_inertia: Complex64,
    /// `Σ Γ_j |X_j|²`
    pub angular_momentum: f64,
    /// `Σ_{j≠k} Γ_j Γ_k ln |X_j - X_k|²`
    pub log_sum: f64,
    /// `Σ_{j≠k} Γ_j Γ_k |X_j - X_k|²`
    pub quad_sum: f64,
}

pub fn invariants(cfg: &VortexConfig) -> Result<Invariants, VortexError> {
    cfg.check_separation(0.0, 0.0)?;
    let (x, g) = (&cfg.positions, &cfg.circulations);
    let mut center = Complex64::new(0.0, 0.0);
    let mut ang = 0.0;
    let mut log_sum = 0.0;
    let mut quad_sum = 0.0;
    for j in 0..x.len() {
        center += g[j] * x[j];
        ang += g[j] * x[j].norm_sqr();
        for k in 0..x.len() {
            if k != j {
                let d2 = (x[j] - x[k]).norm_sqr();
                log_sum += g[j] * g[k] * d2.ln();
                quad_sum += g[j] * g[k] * d2;
            }
        }
    }
    Ok(Invariants {
        center_of_inertia: center,
        angular_momentum: ang,
        log_sum,
        quad_sum,
    })
}

#[derive(Debug, Clone)]
pub struct VortexTrajectory {
    pub times: Vec<f64>,
    pub states: Vec<VortexConfig>,
    pub invariant_series: Vec<Invariants>,
}

impl VortexTrajectory {
    /// Largest drift of each invariant relative to `max(|Q(0)|, 1)`:
    /// `(center, angular momentum, log sum, quad sum)`.
    pub fn max_relative_drift(&self) -> [f64; 4] {
        let q0 = self.invariant_series[0];
        let mut out = [0.0; 4];
        for q in &self.invariant_series {
            let d = [
                (q.center_of_inertia - q0.center_of_inertia).norm() / q0.center_of_inertia.norm().max(1.0),
                (q.angular_momentum - q0.angular_momentum).abs() / q0.angular_momentum.abs().max(1.0),
                (q.log_sum - q0.log_sum).abs() / q0.log_sum.abs().max(1.0),
                (q.quad_sum - q0.quad_sum).abs() / q0.quad_sum.abs().max(1.0),
            ];
            for (o, v) in out.iter_mut().zip(d) {
                *o = f64::max(*o, v);
            }
        }
        out
    }
}

/// Classical RK4 with fixed step; the last step is shortened to land on `T`.
pub fn integrate(cfg: &VortexConfig, t_end: f64, dt: f64) -> Result<VortexTrajectory, VortexError> {
    integrate_with(cfg, t_end, dt, DEFAULT_DELTA_MIN)
}

pub fn integrate_with(
    cfg: &VortexConfig,
    t_end: f64,
    dt: f64,
    delta_min: f64,
) -> Result<VortexTrajectory, VortexError> {
    cfg.check_separation(delta_min, 0.0)?;
    if cfg.len() >= 2 {
        let (d, _) = cfg.min_distance();
        let limit = d * d / 10.0;
        if dt > limit {
            return Err(VortexError::StepTooLarge { dt, limit });
        }
    }
    let mut traj = VortexTrajectory {
        times: vec![0.0],
        states: vec![cfg.clone()],
        invariant_series: vec![invariants(cfg)?],
    };
    if t_end <= 0.0 {
        return Ok(traj);
    }
    let steps = (t_end / dt - 1e-9).ceil().max(1.0) as usize;
    let g = &cfg.circulations;
    let mut x = cfg.positions.clone();
    let axpy = |x: &[Complex64], k: &[Complex64], h: f64| -> Vec<Complex64> {
        x.iter().zip(k).map(|(a, b)| a + b * h).collect()
    };
    let mut t = 0.0;
    for n in 1..=steps {
        let t_next = (n as f64 * dt).min(t_end);
        let h = t_next - t;
        let probe = |pos: &[Complex64], time: f64| -> Result<Vec<Complex64>, VortexError> {
            let c = VortexConfig {
                positions: pos.to_vec(),
                circulations: g.clone(),
                has_center: cfg.has_center,
                omega: cfg.omega,
            };
            rhs_guarded(&c, delta_min, time)
        };
        let k1 = probe(&x, t)?;
        let k2 = probe(&axpy(&x, &k1, 0.5 * h), t + 0.5 * h)?;
        let k3 = probe(&axpy(&x, &k2, 0.5 * h), t + 0.5 * h)?;
        let k4 = probe(&axpy(&x, &k3, h), t + h)?;
        for i in 0..x.len() {
            x[i] += (k1[i] + 2.0 * k2[i] + 2.0 * k3[i] + k4[i]) * (h / 6.0);
        }
        t = t_next;
        let state = VortexConfig {
            positions: x.clone(),
            circulations: g.clone(),
            has_center: cfg.has_center,
            omega: cfg.omega,
        };
        state.check_separation(delta_min, t)?;
        traj.invariant_series.push(invariants(&state)?);
        traj.times.push(t);
        traj.states.push(state);
    }
    Ok(traj)
}

#[derive(Debug, Clone, Copy, PartialEq, Eq)]
pub enum Verdict {
    Stable,
    Unstable,
}

#[derive(Debug, Clone)]
pub struct StabilityReport {
    /// Full spectrum of the dense co-rotating Jacobian.
    pub eigenvalues: Vec<Complex64>,
    /// Squared growth rate `λ²` of each Fourier mode `p = 0..N-1` of the polygon.
    pub mode_rates_sq: Vec<f64>,
    /// `max Re λ` from the mode reduction; drives the verdict.
    pub max_real_part: f64,
    /// `max Re λ` of the dense spectrum. Defective zero eigenvalues make this
    /// of order `sqrt(machine epsilon)` for marginal polygons.
    pub dense_max_real_part: f64,
    pub verdict: Verdict,
}

/// Real `2n × 2n` Jacobian of the co-rotating vector field `f(X) - iωX` at `cfg`.
///
/// The velocity depends on `X̄` only: `f_j = i Σ Γ_k / conj(X_j - X_k)`,
/// hence `∂f_j/∂X̄_k = i Γ_k / conj(X_jk)²` for `k ≠ j`. A map `dz ↦ a dz̄`
/// has real block `[[Re a, Im a], [Im a, -Re a]]`.
pub fn corotating_jacobian(cfg: &VortexConfig, omega: f64) -> DMatrix<f64> {
    let n = cfg.len();
    let mut jac = DMatrix::<f64>::zeros(2 * n, 2 * n);
    let i = Complex64::i();
    for j in 0..n {
        let mut diag = Complex64::new(0.0, 0.0);
        for k in 0..n {
            if k == j {
                continue;
            }
            let zc = (cfg.positions[j] - cfg.positions[k]).conj();
            let a = i * cfg.circulations[k] / (zc * zc);
            diag -= a;
            // dX̄_k coefficient of f_j is +a
            jac[(2 * j, 2 * k)] += a.re;
            jac[(2 * j, 2 * k + 1)] += a.im;
            jac[(2 * j + 1, 2 * k)] += a.im;
            jac[(2 * j + 1, 2 * k + 1)] -= a.re;
        }
        jac[(2 * j, 2 * j)] += diag.re;
        jac[(2 * j, 2 * j + 1)] += diag.im;
        jac[(2 * j + 1, 2 * j)] += diag.im;
        jac[(2 * j + 1, 2 * j + 1)] -= diag.re;
        // rotating-frame term -iω dX_j
        jac[(2 * j, 2 * j + 1)] += omega;
        jac[(2 * j + 1, 2 * j)] -= omega;
    }
    jac
}

/// Squared growth rates `λ_p²` of the Fourier modes of a unit-radius `N`-gon.
///
/// In local coordinates `ζ_j = dX_j / X_j` the co-rotating linearization is
/// circulant, so mode `p` decouples into `ẋ = (ω + κ'_p) y`, `ẏ = (κ'_p - ω) x`
/// with `κ'_p = Γ(p(N-p) - (N-1))/2 - Γ₀`. The modes `p = 1, N-1` couple to the
/// center vortex, giving `λ² = Γ₀² + NΓΓ₀ - ω²`. All inputs are small integers,
/// so marginal modes come out exactly zero.
pub fn mode_rates_sq(n: usize, gamma: f64, center_circulation: Option<f64>) -> Vec<f64> {
    let nf = n as f64;
    let g0 = center_circulation.unwrap_or(0.0);
    let omega = (gamma * (nf - 1.0) + 2.0 * g0) / 2.0;
    (0..n)
        .map(|p| {
            let coupled = center_circulation.is_some() && (p == 1 || p + 1 == n);
            if coupled {
                g0 * g0 + nf * gamma * g0 - omega * omega
            } else {
                let q = (p * (n - p)) as f64;
                let kappa = gamma * (q - (nf - 1.0)) / 2.0 - g0;
                (kappa - omega) * (kappa + omega)
            }
        })
        .collect()
}

/// Linear stability of the unit-radius `N`-gon (optionally centered) in the co-rotating frame.
///
/// The verdict comes from the exact mode reduction; the dense spectrum is
/// reported alongside as an independent check.
pub fn linear_stability(
    n: usize,
    gamma: f64,
    center_circulation: Option<f64>,
) -> Result<StabilityReport, VortexError> {
    if n < 3 {
        return Err(VortexError::InvalidPolygon(format!(
            "stability analysis needs N >= 3, got {n}"
        )));
    }
    let cfg = polygon_config(n, 1.0, gamma, center_circulation)?;
    let omega = cfg.omega.unwrap_or(0.0);
    let jac = corotating_jacobian(&cfg, omega);
    let eigenvalues: Vec<Complex64> = jac
        .complex_eigenvalues()
        .iter()
        .map(|z| Complex64::new(z.re, z.im))
        .collect();
    let dense_max_real_part = eigenvalues.iter().map(|z| z.re).fold(f64::NEG_INFINITY, f64::max);
    let rates = mode_rates_sq(n, gamma, center_circulation);
    let max_real_part = rates.iter().map(|&l2| l2.max(0.0).sqrt()).fold(0.0, f64::max);
    let verdict = if max_real_part <= STABILITY_THRESHOLD {
        Verdict::Stable
    } else {
        Verdict::Unstable
    };
    Ok(StabilityReport {
        eigenvalues,
        mode_rates_sq: rates,
        max_real_part,
        dense_max_real_part,
        verdict,
    })
}
