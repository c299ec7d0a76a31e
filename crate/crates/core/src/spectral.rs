//! Periodic grid, Fourier multipliers and quadrature.
//!
//! Every solver in the crate samples its fields on a uniform periodic box
//! `[-L, L)`. Fields that tend to a nonzero constant at infinity carry that
//! constant as an explicit `background`; spectral operations always act on
//! the difference `f - background`, which is expected to decay to (numerical)
//! zero at the box edges.

use std::fmt;
use std::iter::Sum;
use std::ops::Mul;
use std::sync::Arc;

use num_complex::Complex64;
use rustfft::{Fft, FftPlanner};
use thiserror::Error;

#[derive(Debug, Error, Clone, PartialEq)]
pub enum SpectralError {
    #[error("invalid grid: {0}")]
    InvalidGrid(String),
    #[error("field length {got} does not match grid size {expected}")]
    LengthMismatch { expected: usize, got: usize },
    #[error("fields live on different grids")]
    GridMismatch,
    #[error("boundary defect {defect:.3e} exceeds tolerance {tolerance:.3e}")]
    BoundaryContaminated { defect: f64, tolerance: f64 },
}

/// Uniform periodic grid on `[-L, L)` with cached FFT plans.
pub struct Grid1D {
    half_length: f64,
    num_points: usize,
    spacing: f64,
    nodes: Vec<f64>,
    wavenumbers: Vec<f64>,
    forward: Arc<dyn Fft<f64>>,
    inverse: Arc<dyn Fft<f64>>,
}

impl fmt::Debug for Grid1D {
    fn fmt(&self, f: &mut fmt::Formatter<'_>) -> fmt::Result {
        f.debug_struct("Grid1D")
            .field("half_length", &self.half_length)
            .field("num_points", &self.num_points)
            .field("spacing", &self.spacing)
            .finish()
    }
}

impl PartialEq for Grid1D {
    fn eq(&self, other: &Self) -> bool {
        self.half_length == other.half_length && self.num_points == other.num_points
    }
}

/// Builds the grid `σ_i = -L + i h`, `h = 2L/M`, with wavenumbers `π k / L`
/// stored in FFT order.
pub fn make_grid(half_length: f64, num_points: usize) -> Result<Arc<Grid1D>, SpectralError> {
    if !(half_length.is_finite() && half_length > 0.0) {
        return Err(SpectralError::InvalidGrid(format!(
            "half length must be positive, got {half_length}"
        )));
    }
    if num_points % 2 != 0 {
        return Err(SpectralError::InvalidGrid(format!(
            "number of points must be even, got {num_points}"
        )));
    }
    if num_points < 4 {
        return Err(SpectralError::InvalidGrid(format!(
            "number of points must be at least 4, got {num_points}"
        )));
    }
    let m = num_points;
    let spacing = 2.0 * half_length / m as f64;
    let nodes = (0..m).map(|i| -half_length + i as f64 * spacing).collect();
    let base = std::f64::consts::PI / half_length;
    let wavenumbers = (0..m)
        .map(|k| {
            let signed = if k < m / 2 { k as i64 } else { k as i64 - m as i64 };
            base * signed as f64
        })
        .collect();
    let mut planner = FftPlanner::new();
    let forward = planner.plan_fft_forward(m);
    let inverse = planner.plan_fft_inverse(m);
    Ok(Arc::new(Grid1D {
        half_length,
        num_points,
        spacing,
        nodes,
        wavenumbers,
        forward,
        inverse,
    }))
}

impl Grid1D {
    pub fn half_length(&self) -> f64 {
        self.half_length
    }

    pub fn len(&self) -> usize {
        self.num_points
    }

    pub fn is_empty(&self) -> bool {
        self.num_points == 0
    }

    pub fn spacing(&self) -> f64 {
        self.spacing
    }

    pub fn nodes(&self) -> &[f64] {
        &self.nodes
    }

    /// Wavenumbers in FFT layout; index `M/2` holds the Nyquist mode `-πM/(2L)`.
    pub fn wavenumbers(&self) -> &[f64] {
        &self.wavenumbers
    }

    /// Index of the node `σ = 0`.
    pub fn origin_index(&self) -> usize {
        self.num_points / 2
    }

    /// Whether `e^{i k σ}` is periodic on the box, i.e. `k L / π` is an integer.
    pub fn is_grid_wavenumber(&self, k: f64) -> bool {
        let n = k * self.half_length / std::f64::consts::PI;
        (n - n.round()).abs() <= 1e-9 * n.abs().max(1.0)
    }

    pub fn forward(&self, data: &mut [Complex64]) {
        self.forward.process(data);
    }

    /// Normalized inverse transform.
    pub fn inverse(&self, data: &mut [Complex64]) {
        self.inverse.process(data);
        let scale = 1.0 / self.num_points as f64;
        for z in data.iter_mut() {
            *z *= scale;
        }
    }

    /// Applies a Fourier multiplier `m(ξ)` to `values` in place.
    pub fn apply_multiplier<F>(&self, values: &mut [Complex64], multiplier: F)
    where
        F: Fn(f64, usize) -> Complex64,
    {
        self.forward(values);
        for (k, (z, &xi)) in values.iter_mut().zip(&self.wavenumbers).enumerate() {
            *z *= multiplier(xi, k);
        }
        self.inverse(values);
    }
}

/// Samples of a complex function on a grid, with its far-field constant.
#[derive(Debug, Clone)]
pub struct ComplexField {
    grid: Arc<Grid1D>,
    values: Vec<Complex64>,
    background: Complex64,
}

impl ComplexField {
    pub fn new(
        grid: Arc<Grid1D>,
        values: Vec<Complex64>,
        background: Complex64,
    ) -> Result<Self, SpectralError> {
        if values.len() != grid.len() {
            return Err(SpectralError::LengthMismatch {
                expected: grid.len(),
                got: values.len(),
            });
        }
        Ok(Self {
            grid,
            values,
            background,
        })
    }

    pub fn from_fn<F>(grid: &Arc<Grid1D>, background: Complex64, f: F) -> Self
    where
        F: Fn(f64) -> Complex64,
    {
        let values = grid.nodes().iter().map(|&s| f(s)).collect();
        Self {
            grid: Arc::clone(grid),
            values,
            background,
        }
    }

    pub fn constant(grid: &Arc<Grid1D>, value: Complex64) -> Self {
        Self::from_fn(grid, value, |_| value)
    }

    pub fn zeros(grid: &Arc<Grid1D>) -> Self {
        Self::constant(grid, Complex64::new(0.0, 0.0))
    }

    pub fn grid(&self) -> &Arc<Grid1D> {
        &self.grid
    }

    pub fn len(&self) -> usize {
        self.values.len()
    }

    pub fn is_empty(&self) -> bool {
        self.values.is_empty()
    }

    pub fn values(&self) -> &[Complex64] {
        &self.values
    }

    pub fn values_mut(&mut self) -> &mut [Complex64] {
        &mut self.values
    }

    pub fn into_values(self) -> Vec<Complex64> {
        self.values
    }

    pub fn background(&self) -> Complex64 {
        self.background
    }

    pub fn with_background(mut self, background: Complex64) -> Self {
        self.background = background;
        self
    }

    /// Same grid and background, new samples.
    pub fn with_values(&self, values: Vec<Complex64>) -> Self {
        debug_assert_eq!(values.len(), self.values.len());
        Self {
            grid: Arc::clone(&self.grid),
            values,
            background: self.background,
        }
    }

    pub fn map<F>(&self, f: F) -> Self
    where
        F: Fn(Complex64) -> Complex64,
    {
        self.with_values(self.values.iter().map(|&z| f(z)).collect())
    }

    /// `f - background`.
    pub fn deviation(&self) -> Vec<Complex64> {
        self.values.iter().map(|&z| z - self.background).collect()
    }

    /// Largest `|f - background|` over the two edge nodes.
    pub fn boundary_defect(&self) -> f64 {
        let m = self.values.len();
        (self.values[0] - self.background)
            .norm()
            .max((self.values[m - 1] - self.background).norm())
    }

    pub fn check_boundary(&self, tolerance: f64) -> Result<(), SpectralError> {
        let defect = self.boundary_defect();
        if defect.is_finite() && defect <= tolerance {
            Ok(())
        } else {
            Err(SpectralError::BoundaryContaminated { defect, tolerance })
        }
    }

    pub fn same_grid(&self, other: &ComplexField) -> bool {
        Arc::ptr_eq(&self.grid, &other.grid) || *self.grid == *other.grid
    }

    pub fn sup_distance(&self, other: &ComplexField) -> f64 {
        self.values
            .iter()
            .zip(&other.values)
            .map(|(a, b)| (a - b).norm())
            .fold(0.0, f64::max)
    }

    pub fn min_modulus(&self) -> f64 {
        self.values.iter().map(|z| z.norm()).fold(f64::INFINITY, f64::min)
    }
}

/// Exact solution operator of `i ∂_t u + γ ∂_σ² u = 0` over time `t`.
pub fn linear_propagate(f: &ComplexField, gamma: f64, t: f64) -> ComplexField {
    if t == 0.0 || gamma == 0.0 {
        return f.clone();
    }
    let mut dev = f.deviation();
    f.grid
        .apply_multiplier(&mut dev, |xi, _| Complex64::from_polar(1.0, -gamma * xi * xi * t));
    let bg = f.background;
    f.with_values(dev.into_iter().map(|z| z + bg).collect())
}

/// Spectral `∂_σ` of `f - background`. The Nyquist mode is dropped.
pub fn derivative(f: &ComplexField) -> ComplexField {
    let mut dev = f.deviation();
    let nyquist = f.grid.len() / 2;
    f.grid.apply_multiplier(&mut dev, |xi, k| {
        if k == nyquist {
            Complex64::new(0.0, 0.0)
        } else {
            Complex64::new(0.0, xi)
        }
    });
    ComplexField {
        grid: Arc::clone(&f.grid),
        values: dev,
        background: Complex64::new(0.0, 0.0),
    }
}

/// Spectral `∂_σ²` of `f - background`.
pub fn second_derivative(f: &ComplexField) -> ComplexField {
    let mut dev = f.deviation();
    f.grid
        .apply_multiplier(&mut dev, |xi, _| Complex64::new(-xi * xi, 0.0));
    ComplexField {
        grid: Arc::clone(&f.grid),
        values: dev,
        background: Complex64::new(0.0, 0.0),
    }
}

/// Spectral derivative of real samples (decaying or periodic).
pub fn derivative_real(grid: &Grid1D, samples: &[f64]) -> Vec<f64> {
    let mut buf: Vec<Complex64> = samples.iter().map(|&x| Complex64::new(x, 0.0)).collect();
    let nyquist = grid.len() / 2;
    grid.apply_multiplier(&mut buf, |xi, k| {
        if k == nyquist {
            Complex64::new(0.0, 0.0)
        } else {
            Complex64::new(0.0, xi)
        }
    });
    buf.into_iter().map(|z| z.re).collect()
}

/// Spectral shift `f(σ - s)`, applied to the deviation from background.
pub fn spectral_shift(f: &ComplexField, s: f64) -> ComplexField {
    if s == 0.0 {
        return f.clone();
    }
    let mut dev = f.deviation();
    let nyquist = f.grid.len() / 2;
    f.grid.apply_multiplier(&mut dev, |xi, k| {
        if k == nyquist {
            Complex64::new((xi * s).cos(), 0.0)
        } else {
            Complex64::from_polar(1.0, -xi * s)
        }
    });
    let bg = f.background;
    f.with_values(dev.into_iter().map(|z| z + bg).collect())
}

/// Periodic trapezoid rule `h Σ g_i`.
pub fn quad_trapezoid<T>(grid: &Grid1D, samples: &[T]) -> T
where
    T: Copy + Sum<T> + Mul<f64, Output = T>,
{
    samples.iter().copied().sum::<T>() * grid.spacing()
}

#[derive(Debug, Clone, Copy, PartialEq)]
pub struct Norms {
    pub l2: f64,
    pub h1: f64,
    pub sup: f64,
}

/// Discrete `L²`, `H¹` and sup norms of `f - background`.
pub fn norms(f: &ComplexField) -> Norms {
    let dev = f.deviation();
    let sq: Vec<f64> = dev.iter().map(|z| z.norm_sqr()).collect();
    let l2_sq = quad_trapezoid(&f.grid, &sq);
    let d = derivative(f);
    let dsq: Vec<f64> = d.values.iter().map(|z| z.norm_sqr()).collect();
    let dl2_sq = quad_trapezoid(&f.grid, &dsq);
    Norms {
        l2: l2_sq.sqrt(),
        h1: (l2_sq + dl2_sq).sqrt(),
        sup: dev.iter().map(|z| z.norm()).fold(0.0, f64::max),
    }
}

/// `L²` norm of raw samples (no background subtraction).
pub fn l2_norm(grid: &Grid1D, samples: &[Complex64]) -> f64 {
    let sq: Vec<f64> = samples.iter().map(|z| z.norm_sqr()).collect();
    quad_trapezoid(grid, &sq).sqrt()
}

/// Smooth phase compensator `χ(σ) = χ₀ + (Δ/2) tanh(κ σ)`.
///
/// Profiles with a phase jump across the line are not periodic on the box.
/// Writing `f = e^{iχ} w` with `χ(±∞)` equal to the far-field phases makes
/// `w` tend to the same constant at both ends, so FFT-based operators can be
/// applied to `w` while derivatives of `f` follow from the product rule.
#[derive(Debug, Clone, Copy, PartialEq)]
pub struct PhaseTwist {
    pub center: f64,
    pub jump: f64,
    pub rate: f64,
}

impl PhaseTwist {
    /// Twist interpolating between the far-field phases `θ₋` and `θ₊`.
    pub fn between(theta_minus: f64, theta_plus: f64, rate: f64) -> Self {
        Self {
            center: 0.5 * (theta_minus + theta_plus),
            jump: theta_plus - theta_minus,
            rate,
        }
    }

    pub fn chi(&self, s: f64) -> f64 {
        self.center + 0.5 * self.jump * (self.rate * s).tanh()
    }

    pub fn dchi(&self, s: f64) -> f64 {
        let sech2 = 1.0 / (self.rate * s).cosh().powi(2);
        0.5 * self.jump * self.rate * sech2
    }

    pub fn d2chi(&self, s: f64) -> f64 {
        let x = self.rate * s;
        let sech2 = 1.0 / x.cosh().powi(2);
        -self.jump * self.rate * self.rate * sech2 * x.tanh()
    }

    /// `w = e^{-iχ} f`, with the background rotated to the right far field.
    pub fn untwist(&self, f: &ComplexField) -> ComplexField {
        let nodes = f.grid.nodes();
        let values = f
            .values
            .iter()
            .zip(nodes)
            .map(|(&z, &s)| z * Complex64::from_polar(1.0, -self.chi(s)))
            .collect();
        let bg = f.background * Complex64::from_polar(1.0, -(self.center + 0.5 * self.jump));
        ComplexField {
            grid: Arc::clone(&f.grid),
            values,
            background: bg,
        }
    }

    /// Inverse of [`PhaseTwist::untwist`].
    pub fn retwist(&self, w: &ComplexField) -> ComplexField {
        let nodes = w.grid.nodes();
        let values = w
            .values
            .iter()
            .zip(nodes)
            .map(|(&z, &s)| z * Complex64::from_polar(1.0, self.chi(s)))
            .collect();
        let bg = w.background * Complex64::from_polar(1.0, self.center + 0.5 * self.jump);
        ComplexField {
            grid: Arc::clone(&w.grid),
            values,
            background: bg,
        }
    }

    /// First and second `σ`-derivatives of the physical field `f`.
    pub fn derivatives(&self, f: &ComplexField) -> (Vec<Complex64>, Vec<Complex64>) {
        let w = self.untwist(f);
        let dw = derivative(&w);
        let d2w = second_derivative(&w);
        let i = Complex64::i();
        let mut d1 = Vec::with_capacity(w.values.len());
        let mut d2 = Vec::with_capacity(w.values.len());
        for (idx, &s) in w.grid.nodes().iter().enumerate() {
            let phase = Complex64::from_polar(1.0, self.chi(s));
            let (c1, c2) = (self.dchi(s), self.d2chi(s));
            let wv = w.values[idx];
            let w1 = dw.values[idx];
            let w2 = d2w.values[idx];
            d1.push(phase * (w1 + i * c1 * wv));
            d2.push(phase * (w2 + 2.0 * i * c1 * w1 + (i * c2 - c1 * c1) * wv));
        }
        (d1, d2)
    }

    /// `f(σ - s)` for a twisted field.
    pub fn shift(&self, f: &ComplexField, s: f64) -> ComplexField {
        let w = spectral_shift(&self.untwist(f), s);
        let nodes = w.grid.nodes();
        let values = w
            .values
            .iter()
            .zip(nodes)
            .map(|(&z, &x)| z * Complex64::from_polar(1.0, self.chi(x - s)))
            .collect();
        ComplexField {
            grid: Arc::clone(&f.grid),
            values,
            background: f.background,
        }
    }
}

/// First and second derivatives of a field, honoring an optional twist.
pub fn derivatives_with(
    f: &ComplexField,
    twist: Option<&PhaseTwist>,
) -> (Vec<Complex64>, Vec<Complex64>) {
    match twist {
        Some(tw) => tw.derivatives(f),
        None => (derivative(f).values, second_derivative(f).values),
    }
}

#[cfg(test)]
mod tests {
    use super::*;

    fn c(re: f64) -> Complex64 {
        Complex64::new(re, 0.0)
    }

    #[test]
    fn grid_nodes_and_spacing() {
        let g = make_grid(10.0, 4).unwrap();
        assert_eq!(g.nodes(), &[-10.0, -5.0, 0.0, 5.0]);
        let g = make_grid(128.0, 4096).unwrap();
        assert_eq!(g.spacing(), 0.0625);
        assert_eq!(g.nodes()[g.origin_index()], 0.0);
    }

    #[test]
    fn grid_rejects_bad_input() {
        assert!(matches!(make_grid(1.0, 7), Err(SpectralError::InvalidGrid(_))));
        assert!(matches!(make_grid(0.0, 8), Err(SpectralError::InvalidGrid(_))));
        assert!(matches!(make_grid(-1.0, 8), Err(SpectralError::InvalidGrid(_))));
    }

    #[test]
    fn wavenumber_layout() {
        let g = make_grid(std::f64::consts::PI, 8).unwrap();
        let k: Vec<f64> = g.wavenumbers().to_vec();
        assert_eq!(k, vec![0.0, 1.0, 2.0, 3.0, -4.0, -3.0, -2.0, -1.0]);
        assert!(g.is_grid_wavenumber(3.0));
        assert!(!g.is_grid_wavenumber(0.5));
    }

    #[test]
    fn propagate_identity_at_zero_time() {
        let g = make_grid(20.0, 256).unwrap();
        let f = ComplexField::from_fn(&g, c(1.0), |s| c(1.0 + (-s * s).exp()));
        let out = linear_propagate(&f, 1.0, 0.0);
        assert_eq!(out.values(), f.values());
    }

    #[test]
    fn plane_wave_dispersion() {
        let g = make_grid(std::f64::consts::PI * 4.0, 64).unwrap();
        let k = 1.5;
        let t = 0.7;
        let f = ComplexField::from_fn(&g, c(0.0), |s| Complex64::from_polar(1.0, k * s));
        let out = linear_propagate(&f, 1.0, t);
        let expect = ComplexField::from_fn(&g, c(0.0), |s| {
            Complex64::from_polar(1.0, k * s - k * k * t)
        });
        assert!(out.sup_distance(&expect) < 1e-13);
    }

    #[test]
    fn derivative_of_constant_and_plane_wave() {
        let g = make_grid(std::f64::consts::PI * 2.0, 64).unwrap();
        let f = ComplexField::constant(&g, Complex64::new(0.3, -2.0));
        let d = derivative(&f);
        assert!(d.values().iter().all(|z| z.norm() < 1e-14));

        let k = 3.0;
        let f = ComplexField::from_fn(&g, c(0.0), |s| Complex64::from_polar(1.0, k * s));
        let d = derivative(&f);
        let expect = f.map(|z| Complex64::new(0.0, k) * z);
        assert!(d.sup_distance(&expect) < 1e-12);
    }

    #[test]
    fn derivative_of_gaussian() {
        let g = make_grid(20.0, 1024).unwrap();
        let f = ComplexField::from_fn(&g, c(0.0), |s| c((-s * s).exp()));
        let d = derivative(&f);
        let expect = ComplexField::from_fn(&g, c(0.0), |s| c(-2.0 * s * (-s * s).exp()));
        assert!(d.sup_distance(&expect) < 1e-10);
    }

    #[test]
    fn trapezoid_values() {
        let g = make_grid(10.0, 64).unwrap();
        let ones = vec![1.0; 64];
        assert!((quad_trapezoid(&g, &ones) - 20.0).abs() < 1e-12);
        let zeros = vec![0.0; 64];
        assert_eq!(quad_trapezoid(&g, &zeros), 0.0);

        let g = make_grid(20.0, 1024).unwrap();
        let gauss: Vec<f64> = g.nodes().iter().map(|s| (-s * s).exp()).collect();
        let got = quad_trapezoid(&g, &gauss);
        assert!((got - std::f64::consts::PI.sqrt()).abs() < 1e-12);
    }

    #[test]
    fn norms_of_zero_and_gaussian() {
        let g = make_grid(20.0, 1024).unwrap();
        let z = ComplexField::constant(&g, c(1.0));
        let n = norms(&z);
        assert_eq!((n.l2, n.h1, n.sup), (0.0, 0.0, 0.0));

        let f = ComplexField::from_fn(&g, c(1.0), |s| c(1.0 + (-s * s).exp()));
        let n = norms(&f);
        let expect = (std::f64::consts::PI / 2.0).sqrt();
        assert!((n.l2 * n.l2 - expect).abs() < 1e-12);
        assert!((n.sup - 1.0).abs() < 1e-15);
    }

    #[test]
    fn boundary_guard() {
        let g = make_grid(20.0, 256).unwrap();
        let f = ComplexField::from_fn(&g, c(1.0), |s| c(1.0 + (-s * s).exp()));
        assert!(f.check_boundary(1e-10).is_ok());
        let f = ComplexField::from_fn(&g, c(1.0), |s| c(1.0 + (-s * s / 100.0).exp()));
        assert!(matches!(
            f.check_boundary(1e-10),
            Err(SpectralError::BoundaryContaminated { .. })
        ));
    }

    #[test]
    fn shift_matches_translated_gaussian() {
        let g = make_grid(20.0, 512).unwrap();
        let f = ComplexField::from_fn(&g, c(1.0), |s| c(1.0 + (-s * s).exp()));
        let shifted = spectral_shift(&f, 0.37);
        let expect = ComplexField::from_fn(&g, c(1.0), |s| c(1.0 + (-(s - 0.37).powi(2)).exp()));
        assert!(shifted.sup_distance(&expect) < 1e-12);
    }

    #[test]
    fn twisted_derivatives_match_analytic() {
        let g = make_grid(60.0, 2048).unwrap();
        let tw = PhaseTwist::between(-0.4, 0.4, 0.3);
        // f = e^{iχ}(1 + 0.2 e^{-σ²})
        let f = ComplexField::from_fn(&g, Complex64::from_polar(1.0, 0.4), |s| {
            Complex64::from_polar(1.0 + 0.2 * (-s * s).exp(), tw.chi(s))
        });
        let (d1, d2) = tw.derivatives(&f);
        let i = Complex64::i();
        for (idx, &s) in g.nodes().iter().enumerate() {
            let a = 1.0 + 0.2 * (-s * s).exp();
            let a1 = -0.4 * s * (-s * s).exp();
            let a2 = 0.2 * (4.0 * s * s - 2.0) * (-s * s).exp();
            let p = Complex64::from_polar(1.0, tw.chi(s));
            let (c1, c2) = (tw.dchi(s), tw.d2chi(s));
            let e1 = p * (a1 + i * c1 * a);
            let e2 = p * (a2 + 2.0 * i * c1 * a1 + (i * c2 - c1 * c1) * a);
            assert!((d1[idx] - e1).norm() < 1e-10, "d1 at {s}");
            assert!((d2[idx] - e2).norm() < 1e-9, "d2 at {s}");
        }
    }
}
