//! Momentum lattice, position samples and the discrete Fourier maps between them.
//!
//! Modes are stored in natural ascending order: axis index `a ∈ 0..n` stands for
//! `j = a − n/2`, momentum `p_j = 2πj/L`, position `x_a = (a − n/2)·Δx`. In three
//! dimensions axis 0 is the slowest index. A one-particle vector has length
//! `4·n^dim` with flat index `mode·4 + spinor`.
//!
//! Two normalizations are exposed:
//! * [`Grid::to_position`] / [`Grid::to_momentum`] are unitary on coefficient vectors.
//! * [`Grid::fourier_samples`] returns `(Δx/2π)^dim Σ_l f(x_l) e^{−i p x_l}`, the Riemann
//!   sum of `(2π)^{−dim} ∫ e^{−ipx} f(x) dx`; [`Grid::inverse_fourier_samples`] is its
//!   exact inverse `Δp^dim Σ_j f̂(p_j) e^{i p_j x}`.

use std::f64::consts::PI;
use std::fmt;
use std::sync::Arc;

use rustfft::{Fft, FftPlanner};
use serde::{Deserialize, Serialize};

use crate::error::{Error, Result};
use crate::C64;

/// Lattice geometry.
#[derive(Clone, Debug, PartialEq, Serialize, Deserialize)]
#[serde(deny_unknown_fields)]
pub struct GridSpec {
    /// Spatial dimension, 1 or 3.
    pub dim: usize,
    /// Points per axis (even, at least 4).
    pub n: usize,
    /// Position-space period L.
    pub box_length: f64,
}

impl GridSpec {
    pub fn new(dim: usize, n: usize, box_length: f64) -> Self {
        GridSpec { dim, n, box_length }
    }

    pub fn validate(&self) -> Result<()> {
        if self.dim != 1 && self.dim != 3 {
            return Err(Error::spec(
                "grid.dim",
                format!("must be 1 or 3, got {}", self.dim),
            ));
        }
        if self.n < 4 || self.n % 2 != 0 {
            return Err(Error::spec(
                "grid.n",
                format!("must be even and >= 4, got {}", self.n),
            ));
        }
        if !(self.box_length.is_finite() && self.box_length > 0.0) {
            return Err(Error::spec(
                "grid.box_length",
                "must be positive and finite",
            ));
        }
        let modes = (self.n as u128).checked_pow(self.dim as u32);
        match modes {
            Some(m) if m <= (1u128 << 32) => Ok(()),
            _ => Err(Error::spec("grid.n", "lattice too large")),
        }
    }

    pub fn n_modes(&self) -> usize {
        self.n.pow(self.dim as u32)
    }

    pub fn hilbert_dim(&self) -> usize {
        4 * self.n_modes()
    }

    pub fn dx(&self) -> f64 {
        self.box_length / self.n as f64
    }

    pub fn dp(&self) -> f64 {
        2.0 * PI / self.box_length
    }

    /// Λ = πn/L.
    pub fn cutoff(&self) -> f64 {
        PI * self.n as f64 / self.box_length
    }

    /// Bytes for one dense complex N_H × N_H matrix.
    pub fn dense_bytes(&self) -> u128 {
        let n = self.hilbert_dim() as u128;
        n * n * 16
    }
}

/// Memory ceiling for dense operator storage.
#[derive(Clone, Copy, Debug, PartialEq, Eq, Serialize, Deserialize)]
pub struct DenseBudget(pub u64);

impl Default for DenseBudget {
    fn default() -> Self {
        DenseBudget(1 << 30)
    }
}

impl DenseBudget {
    pub fn check(&self, spec: &GridSpec) -> Result<()> {
        let required = spec.dense_bytes();
        if required > self.0 as u128 {
            Err(Error::DenseBudget {
                required,
                budget: self.0,
            })
        } else {
            Ok(())
        }
    }
}

/// A built lattice with FFT plans. Cheap to clone.
#[derive(Clone)]
pub struct Grid {
    spec: GridSpec,
    momenta: Arc<Vec<[f64; 3]>>,
    checker: Arc<Vec<f64>>,
    fwd: Arc<dyn Fft<f64>>,
    inv: Arc<dyn Fft<f64>>,
}

impl fmt::Debug for Grid {
    fn fmt(&self, f: &mut fmt::Formatter<'_>) -> fmt::Result {
        f.debug_struct("Grid").field("spec", &self.spec).finish()
    }
}

impl Grid {
    pub fn build(spec: &GridSpec) -> Result<Self> {
        spec.validate()?;
        let n = spec.n;
        let dp = spec.dp();
        let modes = spec.n_modes();
        let mut momenta = Vec::with_capacity(modes);
        let mut checker = Vec::with_capacity(modes);
        for mode in 0..modes {
            let idx = axis_indices(spec.dim, n, mode);
            let mut p = [0.0; 3];
            let mut parity = 0usize;
            for k in 0..spec.dim {
                p[k] = (idx[k] as f64 - (n / 2) as f64) * dp;
                parity += idx[k];
            }
            momenta.push(p);
            checker.push(if parity % 2 == 0 { 1.0 } else { -1.0 });
        }
        let mut planner = FftPlanner::new();
        let fwd = planner.plan_fft_forward(n);
        let inv = planner.plan_fft_inverse(n);
        Ok(Grid {
            spec: spec.clone(),
            momenta: Arc::new(momenta),
            checker: Arc::new(checker),
            fwd,
            inv,
        })
    }

    /// Builds the grid and refuses if one dense operator would exceed `budget`.
    pub fn build_dense(spec: &GridSpec, budget: DenseBudget) -> Result<Self> {
        spec.validate()?;
        budget.check(spec)?;
        Self::build(spec)
    }

    pub fn spec(&self) -> &GridSpec {
        &self.spec
    }

    pub fn dim(&self) -> usize {
        self.spec.dim
    }

    pub fn n(&self) -> usize {
        self.spec.n
    }

    pub fn n_modes(&self) -> usize {
        self.momenta.len()
    }

    pub fn hilbert_dim(&self) -> usize {
        4 * self.n_modes()
    }

    pub fn dp(&self) -> f64 {
        self.spec.dp()
    }

    pub fn dx(&self) -> f64 {
        self.spec.dx()
    }

    /// Δp^dim, the weight turning a kernel into a matrix in the orthonormal basis.
    pub fn measure(&self) -> f64 {
        self.dp().powi(self.dim() as i32)
    }

    pub fn cutoff(&self) -> f64 {
        self.spec.cutoff()
    }

    pub fn momenta(&self) -> &[[f64; 3]] {
        &self.momenta
    }

    pub fn momentum(&self, mode: usize) -> [f64; 3] {
        self.momenta[mode]
    }

    pub fn position(&self, mode: usize) -> [f64; 3] {
        let idx = axis_indices(self.dim(), self.n(), mode);
        let mut x = [0.0; 3];
        for k in 0..self.dim() {
            x[k] = (idx[k] as f64 - (self.n() / 2) as f64) * self.dx();
        }
        x
    }

    pub fn positions(&self) -> Vec<[f64; 3]> {
        (0..self.n_modes()).map(|m| self.position(m)).collect()
    }

    pub fn axis_indices(&self, mode: usize) -> [usize; 3] {
        axis_indices(self.dim(), self.n(), mode)
    }

    /// Signed lattice coordinates j = a − n/2.
    pub fn lattice_coords(&self, mode: usize) -> [i64; 3] {
        let idx = self.axis_indices(mode);
        let h = (self.n() / 2) as i64;
        let mut j = [0i64; 3];
        for k in 0..self.dim() {
            j[k] = idx[k] as i64 - h;
        }
        j
    }

    /// Mode whose momentum is −p, or `None` for the unpaired −Λ modes.
    pub fn negated_mode(&self, mode: usize) -> Option<usize> {
        let n = self.n();
        let idx = self.axis_indices(mode);
        let mut out = [0usize; 3];
        for k in 0..self.dim() {
            if idx[k] == 0 {
                return None;
            }
            out[k] = n - idx[k];
        }
        Some(flat_index(self.dim(), n, out))
    }

    /// Number of points per axis of the difference lattice {p − q}.
    pub fn diff_side(&self) -> usize {
        2 * self.n() - 1
    }

    pub fn diff_len(&self) -> usize {
        self.diff_side().pow(self.dim() as u32)
    }

    /// Index into the difference lattice for p_a − p_b.
    #[inline]
    pub fn diff_index(&self, a: usize, b: usize) -> usize {
        let n = self.n();
        let ia = self.axis_indices(a);
        let ib = self.axis_indices(b);
        let side = self.diff_side();
        let mut flat = 0;
        for k in 0..self.dim() {
            flat = flat * side + (ia[k] + n - 1 - ib[k]);
        }
        flat
    }

    /// Momentum of a difference-lattice point.
    pub fn diff_momentum(&self, idx: usize) -> [f64; 3] {
        let side = self.diff_side();
        let n = self.n() as i64;
        let mut rest = idx;
        let mut k = [0.0; 3];
        for axis in (0..self.dim()).rev() {
            let c = (rest % side) as i64 - (n - 1);
            rest /= side;
            k[axis] = c as f64 * self.dp();
        }
        k
    }

    /// Index into the n^dim periodic lattice for (p_a − p_b) mod 2Λ.
    #[inline]
    pub fn periodic_diff_index(&self, a: usize, b: usize) -> usize {
        let n = self.n();
        let ia = self.axis_indices(a);
        let ib = self.axis_indices(b);
        let mut out = [0usize; 3];
        for k in 0..self.dim() {
            out[k] = (ia[k] + n - ib[k]) % n;
        }
        flat_index(self.dim(), n, out)
    }

    /// Unnormalized multi-dimensional DFT in place.
    fn dft(&self, buf: &mut [C64], inverse: bool) {
        assert_eq!(buf.len(), self.n_modes());
        let plan = if inverse { &self.inv } else { &self.fwd };
        let n = self.n();
        if self.dim() == 1 {
            plan.process(buf);
            return;
        }
        for stride in [1usize, n, n * n] {
            let mut line = vec![C64::new(0.0, 0.0); n];
            let outer = buf.len() / n;
            for o in 0..outer {
                let base = (o / stride) * stride * n + (o % stride);
                for (i, v) in line.iter_mut().enumerate() {
                    *v = buf[base + i * stride];
                }
                plan.process(&mut line);
                for (i, v) in line.iter().enumerate() {
                    buf[base + i * stride] = *v;
                }
            }
        }
    }

    fn global_sign(&self) -> f64 {
        if (self.n() / 2 * self.dim()) % 2 == 0 {
            1.0
        } else {
            -1.0
        }
    }

    /// Orthonormal momentum coefficients → orthonormal position samples.
    pub fn to_position(&self, buf: &mut [C64]) {
        for (v, s) in buf.iter_mut().zip(self.checker.iter()) {
            *v *= *s;
        }
        self.dft(buf, true);
        let scale = self.global_sign() / (self.n_modes() as f64).sqrt();
        for (v, s) in buf.iter_mut().zip(self.checker.iter()) {
            *v *= *s * scale;
        }
    }

    /// Inverse of [`Grid::to_position`].
    pub fn to_momentum(&self, buf: &mut [C64]) {
        for (v, s) in buf.iter_mut().zip(self.checker.iter()) {
            *v *= *s;
        }
        self.dft(buf, false);
        let scale = self.global_sign() / (self.n_modes() as f64).sqrt();
        for (v, s) in buf.iter_mut().zip(self.checker.iter()) {
            *v *= *s * scale;
        }
    }

    /// Riemann-sum Fourier transform of position samples, see module docs.
    pub fn fourier_samples(&self, f: &[C64]) -> Vec<C64> {
        let mut buf = f.to_vec();
        self.to_momentum(&mut buf);
        let scale =
            (self.dx() / (2.0 * PI)).powi(self.dim() as i32) * (self.n_modes() as f64).sqrt();
        buf.iter_mut().for_each(|v| *v *= scale);
        buf
    }

    /// Exact inverse of [`Grid::fourier_samples`].
    pub fn inverse_fourier_samples(&self, fhat: &[C64]) -> Vec<C64> {
        let mut buf = fhat.to_vec();
        self.to_position(&mut buf);
        let scale = self.measure() * (self.n_modes() as f64).sqrt();
        buf.iter_mut().for_each(|v| *v *= scale);
        buf
    }

    /// Periodic kernel coefficients c(k) = n^{−dim} Σ_l f(x_l) e^{−ik x_l} for every
    /// k on the n^dim lattice of differences mod 2Λ, indexed like
    /// [`Grid::periodic_diff_index`].
    pub fn periodic_coefficients(&self, f: &[C64]) -> Vec<C64> {
        let n = self.n();
        let fhat = self.fourier_samples(f);
        let scale = self.measure();
        let mut out = vec![C64::new(0.0, 0.0); self.n_modes()];
        for (mode, v) in fhat.iter().enumerate() {
            let idx = self.axis_indices(mode);
            let mut w = [0usize; 3];
            for k in 0..self.dim() {
                w[k] = (idx[k] + n / 2) % n;
            }
            out[flat_index(self.dim(), n, w)] = *v * scale;
        }
        out
    }
}

#[inline]
pub(crate) fn axis_indices(dim: usize, n: usize, mode: usize) -> [usize; 3] {
    if dim == 1 {
        [mode, 0, 0]
    } else {
        [mode / (n * n), (mode / n) % n, mode % n]
    }
}

#[inline]
pub(crate) fn flat_index(dim: usize, n: usize, idx: [usize; 3]) -> usize {
    if dim == 1 {
        idx[0]
    } else {
        (idx[0] * n + idx[1]) * n + idx[2]
    }
}
