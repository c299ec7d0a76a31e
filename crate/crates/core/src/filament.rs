//! Nearly parallel filaments `Ψ_j = X_j(t) + u_j(t,σ)` around a rotating
//! point-vortex equilibrium, in perturbation form:
//!
//! `i∂_t u_j + Γ_j ∂²u_j + Σ_{k≠j} Γ_k [(X_jk+u_jk)/|X_jk+u_jk|² - X_jk/|X_jk|²] = 0`.
//!
//! The backbone `X_j(t)` is the exact rigid rotation of the equilibrium.
//!
//! Pair sums in `H`, `T` and `I` run over unordered pairs `j < k`. This is
//! the normalization in which `H` is conserved by the flow and `E = H + I`
//! reduces to `N·E(Φ)` on dilation data.

use num_complex::Complex64;
use rayon::prelude::*;
use thiserror::Error;

use crate::point_vortex::VortexConfig;
use crate::reduced::{log_defect, CONVEXITY_LOWER};
use crate::spectral::{derivative, l2_norm, linear_propagate, quad_trapezoid, ComplexField};

pub const DEFAULT_DELTA_MIN: f64 = 1e-3;
pub const DEFAULT_ENERGY_CAP_FACTOR: f64 = 10.0;
pub const DEFAULT_BOUNDARY_TOL: f64 = 1e-10;
/// Verified coercivity constant, half of [`CONVEXITY_LOWER`].
pub const COERCIVITY_CONSTANT: f64 = 0.5 * CONVEXITY_LOWER;
/// Floor applied to `|Ψ_jk|²/|X_jk|²` before taking a logarithm.
const RATIO_FLOOR: f64 = 1e-300;

#[derive(Debug, Error, Clone, PartialEq)]
pub enum FilamentError {
    #[error("expected {expected} filaments, got {got}")]
    WrongN { expected: usize, got: usize },
    #[error("configuration not supported here: {0}")]
    WrongConfig(String),
    #[error("filaments {pair:?} within {separation:.3e} (< {threshold:.3e}) at t = {time}, σ = {sigma}")]
    CollisionDetected {
        time: f64,
        sigma: f64,
        pair: (usize, usize),
        separation: f64,
        threshold: f64,
    },
    #[error("precondition violated: {0}")]
    PreconditionViolated(String),
    #[error("perturbations must share the grid and have zero background")]
    BadPerturbation,
}

/// Perturbations `u_j` of an analytically rotating equilibrium.
#[derive(Debug, Clone)]
pub struct FilamentState {
    pub u: Vec<ComplexField>,
    pub cfg: VortexConfig,
    pub time: f64,
}

/// Smallest `|Ψ_j - Ψ_k|` over the grid and all pairs.
#[derive(Debug, Clone, Copy, PartialEq)]
pub struct Separation {
    pub value: f64,
    pub sigma: f64,
    pub pair: (usize, usize),
}

impl FilamentState {
    pub fn new(cfg: VortexConfig, u: Vec<ComplexField>) -> Result<Self, FilamentError> {
        if u.len() != cfg.len() {
            return Err(FilamentError::WrongN {
                expected: cfg.len(),
                got: u.len(),
            });
        }
        let ok = u.iter().all(|f| f.same_grid(&u[0]) && f.background() == Complex64::new(0.0, 0.0));
        if !ok {
            return Err(FilamentError::BadPerturbation);
        }
        Ok(Self { u, cfg, time: 0.0 })
    }

    /// Dilation data `u_j = X_j (Φ - 1)`.
    pub fn dilation(cfg: VortexConfig, phi: &ComplexField) -> Result<Self, FilamentError> {
        let bg = phi.background();
        let u = cfg
            .positions
            .iter()
            .map(|&x| phi.map(|z| x * (z - bg)).with_background(Complex64::new(0.0, 0.0)))
            .collect();
        Self::new(cfg, u)
    }

    pub fn len(&self) -> usize {
        self.u.len()
    }

    pub fn is_empty(&self) -> bool {
        self.u.is_empty()
    }

    /// `X_j(t)`
    pub fn backbone(&self) -> Vec<Complex64> {
        self.cfg.rotated(self.time)
    }

    /// `Ψ_j = X_j(t) + u_j` with background `X_j(t)`.
    pub fn psi(&self) -> Vec<ComplexField> {
        self.backbone()
            .into_iter()
            .zip(&self.u)
            .map(|(x, f)| f.map(|z| z + x).with_background(x))
            .collect()
    }

    /// `Φ = 1 + u_j / X_j(t)` read off filament `j` (meaningful for dilation data).
    pub fn profile(&self, j: usize) -> ComplexField {
        let x = self.backbone()[j];
        self.u[j]
            .map(|z| 1.0 + z / x)
            .with_background(Complex64::new(1.0, 0.0))
    }

    pub fn min_separation(&self) -> Separation {
        let values: Vec<&[Complex64]> = self.u.iter().map(|f| f.values()).collect();
        min_separation(&values, &self.backbone(), self.u[0].grid().nodes())
    }

    /// Minimal pairwise backbone distance `d`.
    pub fn backbone_distance(&self) -> f64 {
        self.cfg.min_distance().0
    }
}

fn min_separation(u: &[&[Complex64]], x: &[Complex64], nodes: &[f64]) -> Separation {
    let n = u.len();
    let mut best = Separation {
        value: f64::INFINITY,
        sigma: 0.0,
        pair: (0, 0),
    };
    for j in 0..n {
        for k in j + 1..n {
            let xjk = x[j] - x[k];
            for (idx, (a, b)) in u[j].iter().zip(u[k]).enumerate() {
                let d = (xjk + a - b).norm();
                if d < best.value || d.is_nan() {
                    best = Separation {
                        value: d,
                        sigma: nodes[idx],
                        pair: (j, k),
                    };
                    if d.is_nan() {
                        return best;
                    }
                }
            }
        }
    }
    best
}

/// Pointwise interaction `R_j = Σ_{k≠j} Γ_k [(X_jk+u_jk)/|X_jk+u_jk|² - X_jk/|X_jk|²]`.
fn interaction(u: &[&[Complex64]], x: &[Complex64], gamma: &[f64]) -> Vec<Vec<Complex64>> {
    let n = u.len();
    (0..n)
        .into_par_iter()
        .map(|j| {
            let mut out = vec![Complex64::new(0.0, 0.0); u[j].len()];
            for k in 0..n {
                if k == j {
                    continue;
                }
                let xjk = x[j] - x[k];
                let base = xjk / xjk.norm_sqr();
                for ((o, a), b) in out.iter_mut().zip(u[j]).zip(u[k]) {
                    let p = xjk + a - b;
                    *o += gamma[k] * (p / p.norm_sqr() - base);
                }
            }
            out
        })
        .collect()
}

/// The nonlinear interaction fields `R_j` of the current state, after
/// checking that no pair is closer than `δ_min·d`.
pub fn interaction_rhs(state: &FilamentState, delta_min: f64) -> Result<Vec<ComplexField>, FilamentError> {
    let threshold = delta_min * state.backbone_distance();
    let sep = state.min_separation();
    if !(sep.value >= threshold) {
        return Err(FilamentError::CollisionDetected {
            time: state.time,
            sigma: sep.sigma,
            pair: sep.pair,
            separation: sep.value,
            threshold,
        });
    }
    let values: Vec<&[Complex64]> = state.u.iter().map(|f| f.values()).collect();
    Ok(interaction(&values, &state.backbone(), &state.cfg.circulations)
        .into_iter()
        .zip(&state.u)
        .map(|(r, f)| f.with_values(r))
        .collect())
}

/// Renormalized energy quantities at one instant.
#[derive(Debug, Clone, PartialEq)]
pub struct EnergyReport {
    pub time: f64,
    pub h: f64,
    pub a: f64,
    pub t_quant: f64,
    pub i: f64,
    /// `E = H + I`, evaluated through `x - 1 - ln x` to avoid cancellation.
    pub e: f64,
    /// `½ Σ Γ_j² ‖∂Ψ_j‖²`
    pub kinetic: f64,
    /// `Σ_{j<k} Γ_jΓ_k ‖ratio_jk - 1‖²`
    pub ratio_sq: f64,
    pub min_ratio: f64,
    pub max_ratio: f64,
    /// `max_{j<k} ‖|Ψ_jk|²/|X_jk|² - 1‖_∞`
    pub sup_ratio_dev: f64,
    pub min_sep: f64,
    /// `‖u_j - u_k‖_{L²}` for `j < k`, in lexicographic order.
    pub pair_norms: Vec<f64>,
    /// `(‖u_0+u_2‖, ‖u_1+u_3‖)` for four filaments.
    pub vw_norms: Option<(f64, f64)>,
}

impl EnergyReport {
    pub fn max_pair_norm(&self) -> f64 {
        self.pair_norms.iter().copied().fold(0.0, f64::max)
    }
}

pub fn energies(state: &FilamentState) -> Result<EnergyReport, FilamentError> {
    let sep = state.min_separation();
    if !(sep.value > 0.0) {
        return Err(FilamentError::CollisionDetected {
            time: state.time,
            sigma: sep.sigma,
            pair: sep.pair,
            separation: sep.value,
            threshold: 0.0,
        });
    }
    let grid = state.u[0].grid();
    let x = state.backbone();
    let g = &state.cfg.circulations;
    let n = state.len();

    let kinetic: f64 = state
        .u
        .par_iter()
        .zip(g.par_iter())
        .map(|(f, &gj)| {
            let d: Vec<f64> = derivative(f).values().iter().map(|z| z.norm_sqr()).collect();
            0.5 * gj * gj * quad_trapezoid(grid, &d)
        })
        .collect::<Vec<_>>()
        .iter()
        .sum();

    let mut a = 0.0;
    for j in 0..n {
        let dens: Vec<f64> = state.u[j]
            .values()
            .iter()
            .map(|z| (x[j] + z).norm_sqr() - x[j].norm_sqr())
            .collect();
        a += g[j] * quad_trapezoid(grid, &dens);
    }

    let (mut log_sum, mut t_quant, mut i_sum, mut defect, mut ratio_sq) = (0.0, 0.0, 0.0, 0.0, 0.0);
    let (mut min_ratio, mut max_ratio) = (f64::INFINITY, f64::NEG_INFINITY);
    let mut pair_norms = Vec::new();
    for j in 0..n {
        for k in j + 1..n {
            let w = g[j] * g[k];
            let xjk = x[j] - x[k];
            let x2 = xjk.norm_sqr();
            let ujk: Vec<Complex64> = state.u[j]
                .values()
                .iter()
                .zip(state.u[k].values())
                .map(|(p, q)| p - q)
                .collect();
            pair_norms.push(l2_norm(grid, &ujk));
            let m = ujk.len();
            let (mut lg, mut tq, mut ii, mut df, mut rs) = (vec![0.0; m], vec![0.0; m], vec![0.0; m], vec![0.0; m], vec![0.0; m]);
            for (idx, du) in ujk.iter().enumerate() {
                let p2 = (xjk + du).norm_sqr();
                let ratio = p2 / x2;
                min_ratio = min_ratio.min(ratio);
                max_ratio = max_ratio.max(ratio);
                lg[idx] = ratio.max(RATIO_FLOOR).ln();
                tq[idx] = p2 - x2;
                ii[idx] = ratio - 1.0;
                df[idx] = log_defect(ratio.max(RATIO_FLOOR));
                rs[idx] = (ratio - 1.0).powi(2);
            }
            log_sum += w * quad_trapezoid(grid, &lg);
            t_quant += w * quad_trapezoid(grid, &tq);
            i_sum += w * quad_trapezoid(grid, &ii);
            defect += w * quad_trapezoid(grid, &df);
            ratio_sq += w * quad_trapezoid(grid, &rs);
        }
    }
    let h = kinetic - 0.5 * log_sum;
    let i = 0.5 * i_sum;
    let e = kinetic + 0.5 * defect;
    let vw_norms = (n == 4).then(|| {
        let (v, w) = vw_values(state);
        (l2_norm(grid, &v), l2_norm(grid, &w))
    });
    let sup_ratio_dev = if min_ratio.is_finite() {
        (max_ratio - 1.0).abs().max((1.0 - min_ratio).abs())
    } else {
        0.0
    };
    Ok(EnergyReport {
        time: state.time,
        h,
        a,
        t_quant,
        i,
        e,
        kinetic,
        ratio_sq,
        min_ratio,
        max_ratio,
        sup_ratio_dev,
        min_sep: sep.value,
        pair_norms,
        vw_norms,
    })
}

#[derive(Debug, Clone, Copy, PartialEq)]
pub struct CoercivityReport {
    pub lhs: f64,
    pub energy: f64,
    pub constant: f64,
    pub holds: bool,
}

/// `½ΣΓ_j²‖∂Ψ_j‖² + c Σ_{j<k}Γ_jΓ_k‖ratio-1‖² ≤ E` while every ratio lies in `[3/4, 5/4]`.
pub fn coercivity_check(report: &EnergyReport, constant: f64) -> Result<CoercivityReport, FilamentError> {
    let eps = 1e-12;
    if report.min_ratio < 0.75 - eps || report.max_ratio > 1.25 + eps {
        return Err(FilamentError::PreconditionViolated(format!(
            "ratios span [{}, {}], outside [3/4, 5/4]",
            report.min_ratio, report.max_ratio
        )));
    }
    let lhs = report.kinetic + constant * report.ratio_sq;
    Ok(CoercivityReport {
        lhs,
        energy: report.e,
        constant,
        holds: lhs <= report.e * (1.0 + 1e-12) + 1e-15,
    })
}

fn require_square(state: &FilamentState) -> Result<(), FilamentError> {
    if state.len() != 4 {
        return Err(FilamentError::WrongN {
            expected: 4,
            got: state.len(),
        });
    }
    Ok(())
}

fn sum_fields(state: &FilamentState, idx: &[usize]) -> Vec<Complex64> {
    let mut out = vec![Complex64::new(0.0, 0.0); state.u[0].len()];
    for &j in idx {
        for (o, z) in out.iter_mut().zip(state.u[j].values()) {
            *o += z;
        }
    }
    out
}

fn vw_values(state: &FilamentState) -> (Vec<Complex64>, Vec<Complex64>) {
    (sum_fields(state, &[0, 2]), sum_fields(state, &[1, 3]))
}

/// `v = u_0 + u_2`, `w = u_1 + u_3` (diagonal sums; the backbone cancels).
pub fn vw_decompose(state: &FilamentState) -> Result<(ComplexField, ComplexField), FilamentError> {
    require_square(state)?;
    let (v, w) = vw_values(state);
    Ok((state.u[0].with_values(v), state.u[0].with_values(w)))
}

/// Residual of an energy identity, plus the residual of the printed variant.
#[derive(Debug, Clone, Copy, PartialEq)]
pub struct IdentityCheck {
    pub energy: f64,
    pub residual: f64,
    pub printed_residual: f64,
}

impl IdentityCheck {
    pub fn holds(&self, tol: f64) -> bool {
        self.residual <= tol * self.energy.abs().max(1.0)
    }
}

fn sq_norm(state: &FilamentState, idx: &[usize]) -> f64 {
    l2_norm(state.u[0].grid(), &sum_fields(state, idx)).powi(2)
}

fn check_polygon(state: &FilamentState, n: usize, center: bool) -> Result<(), FilamentError> {
    let cfg = &state.cfg;
    let expected = n + usize::from(center);
    if cfg.len() != expected {
        return Err(FilamentError::WrongN {
            expected,
            got: cfg.len(),
        });
    }
    if cfg.has_center != center {
        return Err(FilamentError::WrongConfig("center vortex mismatch".into()));
    }
    if cfg.circulations.iter().any(|&g| (g - 1.0).abs() > 1e-14) {
        return Err(FilamentError::WrongConfig("all circulations must equal 1".into()));
    }
    let range = cfg.vertex_range();
    for (m, j) in range.enumerate() {
        let want = Complex64::from_polar(1.0, 2.0 * std::f64::consts::PI * m as f64 / n as f64);
        if (cfg.positions[j] - want).norm() > 1e-12 {
            return Err(FilamentError::WrongConfig(format!(
                "vertex {j} is not on the unit {n}-gon"
            )));
        }
    }
    if center && cfg.positions[0].norm() > 1e-14 {
        return Err(FilamentError::WrongConfig("center vortex must sit at the origin".into()));
    }
    Ok(())
}

/// Unit square with `Γ = 1`: `E = H + T/4 - A/4 + (‖v‖² + ‖w‖²)/8`.
/// The printed variant has `T/2 - A + (‖v‖² + ‖w‖²)/2`.
pub fn square_energy_identity(state: &FilamentState) -> Result<IdentityCheck, FilamentError> {
    check_polygon(state, 4, false)?;
    let r = energies(state)?;
    let vw = sq_norm(state, &[0, 2]) + sq_norm(state, &[1, 3]);
    let rhs = r.h + 0.25 * r.t_quant - 0.25 * r.a + 0.125 * vw;
    let printed = r.h + 0.5 * r.t_quant - r.a + 0.5 * vw;
    Ok(IdentityCheck {
        energy: r.e,
        residual: (r.e - rhs).abs(),
        printed_residual: (r.e - printed).abs(),
    })
}

/// Collinear `(0, 1, -1)` with `Γ = 1` (center at index 0):
/// `E = H + T/2 - (3/4)A + (3/4)‖u_0‖² + (3/8)‖u_1+u_2‖²`.
/// The printed variant reads `-H + I - (3/2)A + (3/4)(‖u_0‖² + ‖u_1+u_2‖²)`.
pub fn segment_energy_identity(state: &FilamentState) -> Result<IdentityCheck, FilamentError> {
    check_polygon(state, 2, true)?;
    let r = energies(state)?;
    let (n0, n12) = (sq_norm(state, &[0]), sq_norm(state, &[1, 2]));
    let rhs = r.h + 0.5 * r.t_quant - 0.75 * r.a + 0.75 * n0 + 0.375 * n12;
    let printed = -r.h + r.i - 1.5 * r.a + 0.75 * (n0 + n12);
    Ok(IdentityCheck {
        energy: r.e,
        residual: (r.e - rhs).abs(),
        printed_residual: (r.e - printed).abs(),
    })
}

/// Unit hexagon with `Γ = 1`:
/// `E = H + T/2 - (7/4)A + (1/3)Σ‖u_j+u_{j+2}+u_{j+4}‖² + (3/8)Σ‖u_j+u_{j+3}‖²`.
/// The printed variant reads `-H + I - (7/2)A + (2/3)Σ‖…‖² + (3/4)Σ‖…‖²`.
pub fn hexagon_energy_identity(state: &FilamentState) -> Result<IdentityCheck, FilamentError> {
    check_polygon(state, 6, false)?;
    let r = energies(state)?;
    let tri = sq_norm(state, &[0, 2, 4]) + sq_norm(state, &[1, 3, 5]);
    let opp = sq_norm(state, &[0, 3]) + sq_norm(state, &[1, 4]) + sq_norm(state, &[2, 5]);
    let rhs = r.h + 0.5 * r.t_quant - 1.75 * r.a + tri / 3.0 + 0.375 * opp;
    let printed = -r.h + r.i - 3.5 * r.a + 2.0 / 3.0 * tri + 0.75 * opp;
    Ok(IdentityCheck {
        energy: r.e,
        residual: (r.e - rhs).abs(),
        printed_residual: (r.e - printed).abs(),
    })
}

/// Linear part of the equation for `u_a + u_b` over the complementary
/// filaments `k`:
/// `2Σ_k [X_ak Re(ū_ak X_ak)/|X_ak|⁴ + X_bk Re(ū_bk X_bk)/|X_bk|⁴] - Σ_k [u_ak/|X_ak|² + u_bk/|X_bk|²]`.
/// No geometric check is made, so a distorted backbone yields a nonzero result.
pub fn assemble_linear_part(
    u: &[ComplexField],
    x: &[Complex64],
    (a, b): (usize, usize),
) -> Vec<Complex64> {
    let others: Vec<usize> = (0..u.len()).filter(|&k| k != a && k != b).collect();
    let term = |j: usize, k: usize, n: usize| -> Complex64 {
        let xjk = x[j] - x[k];
        let ujk = u[j].values()[n] - u[k].values()[n];
        let r2 = xjk.norm_sqr();
        2.0 * xjk * (ujk.conj() * xjk).re / (r2 * r2) - ujk / r2
    };
    (0..u[0].len())
        .map(|n| others.iter().map(|&k| term(a, k, n) + term(b, k, n)).sum())
        .collect()
}

/// `(‖L_v‖_∞, ‖L_w‖_∞)` on the unit square.
pub fn check_lv_vanishes(state: &FilamentState) -> Result<(f64, f64), FilamentError> {
    check_polygon(state, 4, false)?;
    let x = state.backbone();
    let sup = |v: Vec<Complex64>| v.iter().map(|z| z.norm()).fold(0.0, f64::max);
    Ok((
        sup(assemble_linear_part(&state.u, &x, (0, 2))),
        sup(assemble_linear_part(&state.u, &x, (1, 3))),
    ))
}

/// `Ẽ₀ = max{E₀, (‖u_0+u_2‖² + ‖u_1+u_3‖²)/2}`.
pub fn tilde_e0(state: &FilamentState) -> Result<f64, FilamentError> {
    require_square(state)?;
    let e0 = energies(state)?.e;
    let vw = sq_norm(state, &[0, 2]) + sq_norm(state, &[1, 3]);
    Ok(e0.max(0.5 * vw))
}

/// `C·min{Ẽ₀^{-1/4} m^{-1/2}, Ẽ₀^{-1/3}}` with `m = max ‖u_jk(0)‖`; infinite when `Ẽ₀ = 0`.
pub fn predicted_t(tilde_e0: f64, max_pair_norm: f64, constant: f64) -> f64 {
    if tilde_e0 <= 0.0 {
        return f64::INFINITY;
    }
    let first = if max_pair_norm > 0.0 {
        tilde_e0.powf(-0.25) / max_pair_norm.sqrt()
    } else {
        f64::INFINITY
    };
    constant * first.min(tilde_e0.powf(-1.0 / 3.0))
}

/// Smallest constants making the two growth bounds hold along a run.
#[derive(Debug, Clone, Copy, PartialEq, Default)]
pub struct GrowthConstants {
    /// `‖u_jk(t)‖ ≤ C‖u_jk(0)‖ + C t sup E^{1/2}`
    pub pair_growth: f64,
    /// `‖v(t)‖+‖w(t)‖ ≤ ‖v(0)‖+‖w(0)‖ + C t sup[m^{1/2} E^{1/4}(‖v‖+‖w‖+E^{1/2})]`
    pub vw_growth: Option<f64>,
}

pub fn growth_monitors(reports: &[EnergyReport]) -> GrowthConstants {
    let Some(first) = reports.first() else {
        return GrowthConstants::default();
    };
    let t0 = first.time;
    let mut out = GrowthConstants {
        pair_growth: 0.0,
        vw_growth: first.vw_norms.map(|_| 0.0),
    };
    let mut sup_e = 0.0f64;
    let mut sup_vw = 0.0f64;
    for r in reports {
        let t = r.time - t0;
        let e_half = r.e.max(0.0).sqrt();
        sup_e = sup_e.max(e_half);
        for (now, start) in r.pair_norms.iter().zip(&first.pair_norms) {
            let denom = start + t * sup_e;
            if *now > 0.0 && denom > 0.0 {
                out.pair_growth = out.pair_growth.max(now / denom);
            }
        }
        if let (Some((v, w)), Some((v0, w0))) = (r.vw_norms, first.vw_norms) {
            let drive = r.max_pair_norm().sqrt() * r.e.max(0.0).powf(0.25) * (v + w + e_half);
            sup_vw = sup_vw.max(drive);
            let excess = v + w - v0 - w0;
            if excess > 0.0 && t > 0.0 && sup_vw > 0.0 {
                let c = excess / (t * sup_vw);
                out.vw_growth = Some(out.vw_growth.unwrap_or(0.0).max(c));
            }
        }
    }
    out
}

/// Why a filament run stopped.
#[derive(Debug, Clone, Copy, PartialEq)]
pub enum RunStatus {
    Completed,
    CollisionDetected {
        time: f64,
        sigma: f64,
        pair: (usize, usize),
        separation: f64,
    },
    EnergyCapExceeded { time: f64, energy: f64, cap: f64 },
    BoundaryContaminated { time: f64, defect: f64 },
}

impl RunStatus {
    pub fn label(&self) -> &'static str {
        match self {
            RunStatus::Completed => "Completed",
            RunStatus::CollisionDetected { .. } => "CollisionDetected",
            RunStatus::EnergyCapExceeded { .. } => "EnergyCapExceeded",
            RunStatus::BoundaryContaminated { .. } => "BoundaryContaminated",
        }
    }
}

#[derive(Debug, Clone, Copy, PartialEq)]
pub struct FilamentSolver {
    pub delta_min: f64,
    /// Absolute cap on `E(t)`; `None` derives `factor·Ẽ₀` from the initial state.
    pub energy_cap: Option<f64>,
    pub energy_cap_factor: f64,
    pub boundary_tol: f64,
    /// Energies are evaluated (and the cap checked) every this many steps.
    pub sample_every: usize,
    /// Keep every this many samples as a full state; `0` keeps only the
    /// initial and final states.
    pub keep_every: usize,
}

impl Default for FilamentSolver {
    fn default() -> Self {
        Self {
            delta_min: DEFAULT_DELTA_MIN,
            energy_cap: None,
            energy_cap_factor: DEFAULT_ENERGY_CAP_FACTOR,
            boundary_tol: DEFAULT_BOUNDARY_TOL,
            sample_every: 10,
            keep_every: 0,
        }
    }
}

#[derive(Debug, Clone)]
pub struct FilamentRun {
    pub status: RunStatus,
    /// Initial and final states plus every `keep_every`-th sample.
    pub states: Vec<FilamentState>,
    pub reports: Vec<EnergyReport>,
    pub energy_cap: f64,
}

impl FilamentRun {
    pub fn final_state(&self) -> &FilamentState {
        self.states.last().expect("a run always holds its initial state")
    }

    pub fn relative_energy_drift(&self) -> f64 {
        let Some(e0) = self.reports.first().map(|r| r.e) else {
            return 0.0;
        };
        self.reports
            .iter()
            .map(|r| (r.e - e0).abs())
            .fold(0.0, f64::max)
            / e0.abs().max(1e-12)
    }
}

struct Collision(Separation, f64);

impl FilamentSolver {
    fn initial_cap(&self, state: &FilamentState, e0: f64) -> Result<f64, FilamentError> {
        if let Some(cap) = self.energy_cap {
            return Ok(cap);
        }
        let base = if state.len() == 4 && !state.cfg.has_center {
            tilde_e0(state)?
        } else {
            e0
        };
        Ok(self.energy_cap_factor * base + 1e-14)
    }

    /// Full RK4 step of `u_t = i R(u, t)` with the separation checked at
    /// every stage before the interaction is evaluated.
    fn nonlinear_rk4(
        &self,
        u: &[Vec<Complex64>],
        cfg: &VortexConfig,
        nodes: &[f64],
        t: f64,
        dt: f64,
        threshold: f64,
    ) -> Result<Vec<Vec<Complex64>>, Collision> {
        let g = &cfg.circulations;
        let i = Complex64::i();
        let eval = |stage: &[Vec<Complex64>], time: f64| -> Result<Vec<Vec<Complex64>>, Collision> {
            let views: Vec<&[Complex64]> = stage.iter().map(|v| v.as_slice()).collect();
            let x = cfg.rotated(time);
            let sep = min_separation(&views, &x, nodes);
            if !(sep.value >= threshold) {
                return Err(Collision(sep, time));
            }
            Ok(interaction(&views, &x, g))
        };
        let axpy = |k: &[Vec<Complex64>], h: f64| -> Vec<Vec<Complex64>> {
            u.par_iter()
                .zip(k.par_iter())
                .map(|(a, b)| a.iter().zip(b).map(|(p, q)| p + i * q * h).collect())
                .collect()
        };
        let k1 = eval(u, t)?;
        let k2 = eval(&axpy(&k1, 0.5 * dt), t + 0.5 * dt)?;
        let k3 = eval(&axpy(&k2, 0.5 * dt), t + 0.5 * dt)?;
        let k4 = eval(&axpy(&k3, dt), t + dt)?;
        Ok((0..u.len())
            .into_par_iter()
            .map(|j| {
                (0..u[j].len())
                    .map(|n| u[j][n] + i * (k1[j][n] + 2.0 * k2[j][n] + 2.0 * k3[j][n] + k4[j][n]) * (dt / 6.0))
                    .collect()
            })
            .collect())
    }

    /// Strang splitting: exact half linear steps with `γ = Γ_j`, full RK4 interaction step.
    pub fn evolve(&self, state: &FilamentState, t_end: f64, dt: f64) -> Result<FilamentRun, FilamentError> {
        let every = self.sample_every.max(1);
        let threshold = self.delta_min * state.backbone_distance();
        let sep = state.min_separation();
        if !(sep.value >= threshold) {
            return Ok(FilamentRun {
                status: RunStatus::CollisionDetected {
                    time: state.time,
                    sigma: sep.sigma,
                    pair: sep.pair,
                    separation: sep.value,
                },
                states: vec![state.clone()],
                reports: vec![],
                energy_cap: f64::NAN,
            });
        }
        let report0 = energies(state)?;
        let cap = self.initial_cap(state, report0.e)?;
        let mut run = FilamentRun {
            status: RunStatus::Completed,
            states: vec![state.clone()],
            reports: vec![report0],
            energy_cap: cap,
        };
        let steps = if t_end > 0.0 {
            (t_end / dt - 1e-9).ceil().max(1.0) as usize
        } else {
            0
        };
        let grid = state.u[0].grid().clone();
        let g = state.cfg.circulations.clone();
        let t0 = state.time;
        let mut cur = state.clone();
        for n in 1..=steps {
            let target = (t0 + n as f64 * dt).min(t0 + t_end);
            let h = target - cur.time;
            let half: Vec<Vec<Complex64>> = cur
                .u
                .par_iter()
                .zip(g.par_iter())
                .map(|(f, &gj)| linear_propagate(f, gj, 0.5 * h).into_values())
                .collect();
            let stepped = match self.nonlinear_rk4(&half, &cur.cfg, grid.nodes(), cur.time, h, threshold) {
                Ok(v) => v,
                Err(Collision(sep, time)) => {
                    run.status = RunStatus::CollisionDetected {
                        time,
                        sigma: sep.sigma,
                        pair: sep.pair,
                        separation: sep.value,
                    };
                    break;
                }
            };
            let u: Vec<ComplexField> = stepped
                .into_par_iter()
                .zip(g.par_iter())
                .map(|(v, &gj)| {
                    let f = ComplexField::new(grid.clone(), v, Complex64::new(0.0, 0.0))
                        .expect("length preserved");
                    linear_propagate(&f, gj, 0.5 * h)
                })
                .collect();
            cur = FilamentState {
                u,
                cfg: cur.cfg.clone(),
                time: target,
            };
            let sep = cur.min_separation();
            if !(sep.value >= threshold) {
                run.status = RunStatus::CollisionDetected {
                    time: cur.time,
                    sigma: sep.sigma,
                    pair: sep.pair,
                    separation: sep.value,
                };
                break;
            }
            let defect = cur.u.iter().map(|f| f.boundary_defect()).fold(0.0, f64::max);
            if !(defect <= self.boundary_tol) {
                run.status = RunStatus::BoundaryContaminated {
                    time: cur.time,
                    defect,
                };
                break;
            }
            if n % every == 0 || n == steps {
                let rep = energies(&cur)?;
                let energy = rep.e;
                run.reports.push(rep);
                let sample = n / every;
                if n == steps || (self.keep_every > 0 && sample % self.keep_every == 0) {
                    run.states.push(cur.clone());
                }
                if energy > cap {
                    run.status = RunStatus::EnergyCapExceeded {
                        time: cur.time,
                        energy,
                        cap,
                    };
                    break;
                }
            }
        }
        if run.status != RunStatus::Completed && run.states.last().map(|s| s.time) != Some(cur.time) {
            run.states.push(cur);
        }
        Ok(run)
    }
}

pub fn evolve(state: &FilamentState, t_end: f64, dt: f64) -> Result<FilamentRun, FilamentError> {
    FilamentSolver::default().evolve(state, t_end, dt)
}

#[cfg(test)]
mod tests {
    use super::*;
    use crate::point_vortex::polygon_config;
    use crate::spectral::make_grid;
    use rand::{Rng, SeedableRng};
    use rand_chacha::ChaCha8Rng;
    use std::sync::Arc;

    fn gaussian(grid: &Arc<crate::spectral::Grid1D>, amp: Complex64, center: f64, width: f64) -> ComplexField {
        ComplexField::from_fn(grid, Complex64::new(0.0, 0.0), |s| amp * (-((s - center) / width).powi(2)).exp())
    }

    fn random_state(cfg: VortexConfig, grid: &Arc<crate::spectral::Grid1D>, rng: &mut ChaCha8Rng, scale: f64) -> FilamentState {
        let u = (0..cfg.len())
            .map(|_| {
                let mut f = ComplexField::zeros(grid);
                for _ in 0..3 {
                    let amp = Complex64::new(rng.random_range(-1.0..1.0), rng.random_range(-1.0..1.0)) * scale;
                    let g = gaussian(grid, amp, rng.random_range(-3.0..3.0), rng.random_range(0.7..2.0));
                    for (o, z) in f.values_mut().iter_mut().zip(g.values()) {
                        *o += z;
                    }
                }
                f
            })
            .collect();
        FilamentState::new(cfg, u).unwrap()
    }

    #[test]
    fn zero_perturbation_is_inert() {
        let g = make_grid(20.0, 256).unwrap();
        let cfg = polygon_config(4, 1.0, 1.0, None).unwrap();
        let st = FilamentState::new(cfg, vec![ComplexField::zeros(&g); 4]).unwrap();
        for r in interaction_rhs(&st, DEFAULT_DELTA_MIN).unwrap() {
            assert!(r.values().iter().all(|z| z.norm() == 0.0));
        }
        let rep = energies(&st).unwrap();
        for q in [rep.h, rep.a, rep.t_quant, rep.i, rep.e] {
            assert_eq!(q, 0.0);
        }
        let run = evolve(&st, 0.05, 1e-2).unwrap();
        assert_eq!(run.status, RunStatus::Completed);
        assert!(run.final_state().u.iter().all(|f| f.values().iter().all(|z| z.norm() == 0.0)));
        assert_eq!(predicted_t(tilde_e0(&st).unwrap(), 0.0, 0.1), f64::INFINITY);
    }

    #[test]
    fn identical_perturbations_do_not_interact() {
        let g = make_grid(20.0, 256).unwrap();
        let cfg = polygon_config(3, 1.0, 1.0, None).unwrap();
        let f = gaussian(&g, Complex64::new(0.2, 0.1), 0.5, 1.0);
        let st = FilamentState::new(cfg, vec![f.clone(); 3]).unwrap();
        for r in interaction_rhs(&st, DEFAULT_DELTA_MIN).unwrap() {
            assert!(r.values().iter().all(|z| z.norm() < 1e-15));
        }
    }

    #[test]
    fn dilation_interaction_matches_reduced_nonlinearity() {
        let g = make_grid(20.0, 256).unwrap();
        for (n, center) in [(3, None), (4, None), (5, Some(0.5))] {
            let cfg = polygon_config(n, 1.0, 1.0, center).unwrap();
            let omega = cfg.omega.unwrap();
            let phi = ComplexField::from_fn(&g, Complex64::new(1.0, 0.0), |s| {
                1.0 + Complex64::new(0.1, -0.05) * (-s * s).exp()
            });
            let st = FilamentState::dilation(cfg.clone(), &phi).unwrap();
            let r = interaction_rhs(&st, DEFAULT_DELTA_MIN).unwrap();
            for (j, x) in cfg.positions.iter().enumerate() {
                for (z, p) in r[j].values().iter().zip(phi.values()) {
                    // R_j = ωX_j(1/Φ̄ - 1); adding the frame term -ωX_j(Φ - 1)
                    // gives ωX_j Φ(1-|Φ|²)/|Φ|².
                    let want = omega * x * (1.0 / p.conj() - 1.0);
                    assert!((z - want).norm() < 1e-12);
                    let with_frame = z - omega * x * (p - 1.0);
                    let reduced = omega * x * p * (1.0 - p.norm_sqr()) / p.norm_sqr();
                    assert!((with_frame - reduced).norm() < 1e-12);
                }
            }
        }
    }

    #[test]
    fn dilation_energies() {
        let g = make_grid(20.0, 512).unwrap();
        for n in [3, 4, 6] {
            let cfg = polygon_config(n, 1.0, 1.0, None).unwrap();
            let omega = cfg.omega.unwrap();
            let phi = ComplexField::from_fn(&g, Complex64::new(1.0, 0.0), |s| {
                1.0 + Complex64::new(0.08, 0.03) * (-s * s).exp()
            });
            let st = FilamentState::dilation(cfg, &phi).unwrap();
            let rep = energies(&st).unwrap();
            let ebm = crate::reduced::energy_bm(&phi, omega).unwrap();
            assert!((rep.e - n as f64 * ebm).abs() < 1e-12 * rep.e.max(1.0), "N={n} E={} N·E_BM={}", rep.e, n as f64 * ebm);
            assert!((rep.i - 0.5 * omega * rep.a).abs() < 1e-12);
            assert!((rep.e - (rep.h + rep.i)).abs() < 1e-12 * rep.e.abs().max(1e-3));
        }
    }

    #[test]
    fn square_identity_and_linear_part() {
        let g = make_grid(20.0, 256).unwrap();
        let mut rng = ChaCha8Rng::seed_from_u64(7);
        let cfg = polygon_config(4, 1.0, 1.0, None).unwrap();
        for _ in 0..10 {
            let mut st = random_state(cfg.clone(), &g, &mut rng, 0.05);
            st.time = rng.random_range(0.0..3.0);
            let id = square_energy_identity(&st).unwrap();
            assert!(id.residual < 1e-10, "residual {}", id.residual);
            assert!(id.printed_residual > 1e-6);
            let (lv, lw) = check_lv_vanishes(&st).unwrap();
            assert!(lv < 1e-12 && lw < 1e-12);
        }
    }

    #[test]
    fn distorted_square_breaks_cancellation() {
        let g = make_grid(20.0, 128).unwrap();
        let mut rng = ChaCha8Rng::seed_from_u64(3);
        let cfg = polygon_config(4, 1.0, 1.0, None).unwrap();
        let st = random_state(cfg, &g, &mut rng, 0.05);
        let mut x = st.backbone();
        x[0] *= 1.1;
        x[2] *= 1.1;
        let lv = assemble_linear_part(&st.u, &x, (0, 2));
        assert!(lv.iter().map(|z| z.norm()).fold(0.0, f64::max) > 1e-4);
    }

    #[test]
    fn segment_and_hexagon_identities() {
        let g = make_grid(20.0, 256).unwrap();
        let mut rng = ChaCha8Rng::seed_from_u64(11);
        let seg = polygon_config(2, 1.0, 1.0, Some(1.0)).unwrap();
        let hex = polygon_config(6, 1.0, 1.0, None).unwrap();
        for _ in 0..5 {
            let s = segment_energy_identity(&random_state(seg.clone(), &g, &mut rng, 0.05)).unwrap();
            assert!(s.residual < 1e-10, "segment {}", s.residual);
            assert!(s.printed_residual > 1e-6);
            let h = hexagon_energy_identity(&random_state(hex.clone(), &g, &mut rng, 0.05)).unwrap();
            assert!(h.residual < 1e-10, "hexagon {}", h.residual);
            assert!(h.printed_residual > 1e-6);
        }
        let st = random_state(seg, &g, &mut rng, 0.05);
        assert!(matches!(square_energy_identity(&st), Err(FilamentError::WrongN { .. })));
    }

    #[test]
    fn vw_of_special_data() {
        let g = make_grid(20.0, 128).unwrap();
        let cfg = polygon_config(4, 1.0, 1.0, None).unwrap();
        let a = gaussian(&g, Complex64::new(0.1, 0.0), 0.0, 1.0);
        let b = gaussian(&g, Complex64::new(0.0, 0.1), 1.0, 1.5);
        let neg = |f: &ComplexField| f.map(|z| -z);
        let par = FilamentState::new(cfg.clone(), vec![a.clone(), b.clone(), neg(&a), neg(&b)]).unwrap();
        let (v, w) = vw_decompose(&par).unwrap();
        assert!(v.values().iter().chain(w.values()).all(|z| z.norm() == 0.0));
        assert!((tilde_e0(&par).unwrap() - energies(&par).unwrap().e).abs() < 1e-15);
        let same = FilamentState::new(cfg, vec![a.clone(); 4]).unwrap();
        let (v, _) = vw_decompose(&same).unwrap();
        assert!(v.values().iter().zip(a.values()).all(|(p, q)| (p - 2.0 * q).norm() < 1e-15));
    }

    #[test]
    fn predicted_time_grows_as_data_shrinks() {
        let mut last = 0.0;
        for eps in [1e-1, 3e-2, 1e-2, 3e-3] {
            let t = predicted_t(eps * eps, eps, 0.1);
            assert!(t > last);
            last = t;
        }
    }

    #[test]
    fn coercivity_constant_is_sharp_enough() {
        // ratio ≡ 5/4 with no kinetic part
        let x: f64 = 1.25;
        let report = EnergyReport {
            time: 0.0,
            h: 0.0,
            a: 0.0,
            t_quant: 0.0,
            i: 0.0,
            e: 0.5 * (x - 1.0 - x.ln()),
            kinetic: 0.0,
            ratio_sq: (x - 1.0).powi(2),
            min_ratio: x,
            max_ratio: x,
            sup_ratio_dev: x - 1.0,
            min_sep: 1.0,
            pair_norms: vec![],
            vw_norms: None,
        };
        assert!(coercivity_check(&report, COERCIVITY_CONSTANT).unwrap().holds);
        assert!(!coercivity_check(&report, 0.25).unwrap().holds);
    }

    #[test]
    fn collision_is_flagged_before_evaluation() {
        let g = make_grid(10.0, 64).unwrap();
        let cfg = polygon_config(2, 1.0, 1.0, None).unwrap();
        let x = cfg.positions.clone();
        // second filament dips onto the first at σ = 0
        let dip = ComplexField::from_fn(&g, Complex64::new(0.0, 0.0), |s| (x[0] - x[1]) * (-s * s).exp());
        let st = FilamentState::new(cfg, vec![ComplexField::zeros(&g), dip]).unwrap();
        assert!(matches!(
            interaction_rhs(&st, DEFAULT_DELTA_MIN),
            Err(FilamentError::CollisionDetected { .. })
        ));
        let run = evolve(&st, 1.0, 1e-3).unwrap();
        assert!(matches!(run.status, RunStatus::CollisionDetected { .. }));
    }
}
